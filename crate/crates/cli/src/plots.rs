//! Plot-ready CSV files and optional SVG scatter plots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use duffing_core::action_angle::ActionAngleChart;
use duffing_core::experiments::AnnulusCoordinate;

use crate::error::CliError;
use crate::manifest::RunManifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Orbit point cloud: `iter,rho,xi,x,xdot` (Poincaré section and phase portrait).
    Orbit,
    /// `sigma,error`.
    SigmaError,
    /// `step,sup_residual`.
    ResidualDecay,
}

impl PlotKind {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "orbit" => Ok(PlotKind::Orbit),
            "sigma-error" => Ok(PlotKind::SigmaError),
            "residual-decay" => Ok(PlotKind::ResidualDecay),
            other => Err(CliError::Config(format!(
                "unknown plot kind `{other}` (expected orbit, sigma-error or residual-decay)"
            ))),
        }
    }

    fn header(self) -> &'static str {
        match self {
            PlotKind::Orbit => "iter,rho,xi,x,xdot",
            PlotKind::SigmaError => "sigma,error",
            PlotKind::ResidualDecay => "step,sup_residual",
        }
    }
}

/// An orbit sampled at map iterates, in original variables.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitSeries {
    pub n: usize,
    pub a: f64,
    /// `(iterate, x, xdot)`.
    pub points: Vec<(usize, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlotData {
    Orbit(OrbitSeries),
    SigmaError(Vec<(f64, f64)>),
    ResidualDecay(Vec<(usize, f64)>),
}

/// Writes `<dir>/<stem>.csv` (and `<stem>.svg` if `svg`) for `data` rendered as `kind`.
pub fn emit_plot_data(data: &PlotData, kind: &str, dir: &Path, stem: &str, svg: bool) -> Result<Vec<PathBuf>, CliError> {
    let kind = PlotKind::parse(kind)?;
    let rows: Vec<Vec<f64>> = match (kind, data) {
        (PlotKind::Orbit, PlotData::Orbit(o)) => {
            let coord = AnnulusCoordinate::new(ActionAngleChart::new(o.n).map_err(CliError::from_core)?, o.a)
                .map_err(CliError::from_core)?;
            o.points
                .iter()
                .map(|&(k, x, v)| {
                    let (rho, xi) = coord.polar(x, v).map_err(CliError::from_core)?;
                    Ok(vec![k as f64, rho, xi, x, v])
                })
                .collect::<Result<_, CliError>>()?
        }
        (PlotKind::SigmaError, PlotData::SigmaError(v)) => v.iter().map(|&(s, e)| vec![s, e]).collect(),
        (PlotKind::ResidualDecay, PlotData::ResidualDecay(v)) => {
            v.iter().map(|&(k, r)| vec![k as f64, r]).collect()
        }
        _ => return Err(CliError::Config(format!("plot kind {kind:?} does not match the data"))),
    };
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(&dir.display().to_string(), e))?;
    let mut csv = format!("{}\n", kind.header());
    for r in &rows {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(i, v)| {
                // iteration and step columns are integers
                if i == 0 && kind != PlotKind::SigmaError {
                    format!("{}", *v as u64)
                } else {
                    format!("{v:e}")
                }
            })
            .collect();
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    let csv_path = dir.join(format!("{stem}.csv"));
    std::fs::write(&csv_path, csv).map_err(|e| CliError::io(&csv_path.display().to_string(), e))?;
    let mut out = vec![csv_path];
    if svg {
        let (xi, yi, logx, logy) = match kind {
            PlotKind::Orbit => (2, 1, false, false),
            PlotKind::SigmaError => (0, 1, true, true),
            PlotKind::ResidualDecay => (0, 1, false, true),
        };
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| {
                let f = |v: f64, log: bool| if log { v.log10() } else { v };
                (f(r[xi], logx), f(r[yi], logy))
            })
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .collect();
        let labels = kind.header().split(',').collect::<Vec<_>>();
        let svg_path = dir.join(format!("{stem}.svg"));
        let text = scatter_svg(&pts, labels[xi], labels[yi], logx, logy);
        std::fs::write(&svg_path, text).map_err(|e| CliError::io(&svg_path.display().to_string(), e))?;
        out.push(svg_path);
    }
    Ok(out)
}

fn scatter_svg(pts: &[(f64, f64)], xlabel: &str, ylabel: &str, logx: bool, logy: bool) -> String {
    let (w, h, m) = (480.0, 360.0, 48.0);
    let range = |sel: fn(&(f64, f64)) -> f64| {
        let lo = pts.iter().map(sel).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(sel).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-300 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = range(|p| p.0);
    let (y0, y1) = range(|p| p.1);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#, w - 2.0 * m, h - 2.0 * m);
    let tag = |l: &str, log: bool| if log { format!("log10 {l}") } else { l.to_string() };
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#, w / 2.0, h - 12.0, tag(xlabel, logx));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        tag(ylabel, logy)
    );
    let _ = writeln!(s, r#"<text x="{m}" y="{}" font-size="10">{x0:.4e}</text>"#, h - m + 14.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{x1:.4e}</text>"#, w - m, h - m + 14.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{y0:.4e}</text>"#, m - 4.0, h - m);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{y1:.4e}</text>"#, m - 4.0, m + 10.0);
    for &(x, y) in pts {
        let px = m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
        let py = h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
        let _ = writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="1.5" fill="steelblue"/>"#);
    }
    s.push_str("</svg>\n");
    s
}

fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(&path.display().to_string(), e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Runtime(format!("{} is empty", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    Ok((header, lines.map(|l| l.split(',').map(str::to_string).collect()).collect()))
}

fn column(header: &[String], name: &str, path: &Path) -> Result<usize, CliError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Runtime(format!("{} has no column `{name}`", path.display())))
}

fn num(s: &str) -> Result<f64, CliError> {
    s.parse().map_err(|_| CliError::Runtime(format!("not a number: `{s}`")))
}

/// Regenerates plot data for every plottable output listed in a manifest,
/// under `<output_dir>/plots`.
pub fn emit_from_manifest(manifest_path: &Path, svg: bool) -> Result<Vec<PathBuf>, CliError> {
    let m = RunManifest::read(manifest_path)?;
    let dir = m.output_dir.join("plots");
    let n = m.params.get("n").and_then(|v| v.as_u64()).unwrap_or(1) as usize;
    let mut written = Vec::new();
    for f in &m.files {
        let path = m.output_dir.join(&f.path);
        match f.kind.as_str() {
            "sigma-error" => {
                let (h, rows) = read_rows(&path)?;
                let (si, ei) = (column(&h, "sigma", &path)?, column(&h, "error", &path)?);
                let data = rows
                    .iter()
                    .map(|r| Ok((num(&r[si])?, num(&r[ei])?)))
                    .collect::<Result<_, CliError>>()?;
                written.extend(emit_plot_data(&PlotData::SigmaError(data), "sigma-error", &dir, "sigma_error", svg)?);
            }
            "transform-log" => {
                let (h, rows) = read_rows(&path)?;
                let (ki, ri) = (column(&h, "step", &path)?, column(&h, "sup_residual", &path)?);
                let data = rows
                    .iter()
                    .map(|r| Ok((num(&r[ki])? as usize, num(&r[ri])?)))
                    .collect::<Result<_, CliError>>()?;
                let stem = format!("residual_decay_{}", f.path.trim_start_matches("transform_log_").trim_end_matches(".csv"));
                written.extend(emit_plot_data(&PlotData::ResidualDecay(data), "residual-decay", &dir, &stem, svg)?);
            }
            "orbits" => {
                let (h, rows) = read_rows(&path)?;
                let (ai, oi, ii, xi, vi) = (
                    column(&h, "A", &path)?,
                    column(&h, "role", &path)?,
                    column(&h, "iter", &path)?,
                    column(&h, "x", &path)?,
                    column(&h, "xdot", &path)?,
                );
                let mut groups: Vec<(String, String, OrbitSeries)> = Vec::new();
                for r in &rows {
                    let (a_txt, role) = (&r[ai], &r[oi]);
                    let idx = match groups.iter().position(|(a, o, _)| a == a_txt && o == role) {
                        Some(i) => i,
                        None => {
                            let series = OrbitSeries {
                                n,
                                a: num(a_txt)?,
                                points: Vec::new(),
                            };
                            groups.push((a_txt.clone(), role.clone(), series));
                            groups.len() - 1
                        }
                    };
                    groups[idx].2.points.push((num(&r[ii])? as usize, num(&r[xi])?, num(&r[vi])?));
                }
                for (_, role, series) in groups {
                    let stem = format!("orbit_A{}_{role}", series.a);
                    written.extend(emit_plot_data(&PlotData::Orbit(series), "orbit", &dir, &stem, svg)?);
                }
            }
            _ => {}
        }
    }
    Ok(written)
}
