//! Runs one configured experiment and writes its outputs.

use std::path::{Path, PathBuf};

use duffing_core::action_angle::{min_period, period_from_beta, period_from_return, ActionAngleChart, ScaledSystem};
use duffing_core::calibration::{FINAL_RESIDUAL_C, TWIST_C, TWIST_FORM_C};
use duffing_core::checks::regression_slope;
use duffing_core::coefficients::{CoefficientKind, EquationSpec, RegularityClass};
use duffing_core::dynamics::{fit_twist_form, FlowSpec};
use duffing_core::experiments::{
    boundedness_survey, level_scan, square_grid, ConfinementVerdict, ScanConfig, DEFAULT_COLLAR, ORBIT_TOLERANCE,
};
use duffing_core::normal_form::{choose_parameters, iterate_normal_form, twist_bounds_on};
use duffing_core::smoothing::approximation_error;
use serde_json::{json, Map, Value};

use crate::config::{load_config, ExperimentConfig, ExperimentKind};
use crate::error::CliError;
use crate::manifest::{sha256_hex, unix_now, write_json, Assertion, OutputFile, RunManifest, Summary};

/// Tolerance on the smoothing-error slope around the declared exponent.
pub const SLOPE_TOLERANCE: f64 = 0.15;

/// Scales used by a level scan when the config names none.
pub const DEFAULT_SCAN_SCALES: [f64; 3] = [50.0, 100.0, 200.0];

/// Files written so far, kept even when the experiment fails halfway.
struct Outputs {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

impl Outputs {
    fn csv(&mut self, name: &str, kind: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::io(&path.display().to_string(), e))?;
        self.files.push(OutputFile {
            path: name.to_string(),
            kind: kind.to_string(),
            rows: text.lines().count().saturating_sub(1),
        });
        Ok(())
    }
}

#[derive(Default)]
struct Results {
    metrics: Map<String, Value>,
    assertions: Vec<Assertion>,
}

/// Resolves the output directory: absolute paths are kept, relative ones are
/// joined to `root` (the working directory when `None`).
pub fn output_dir(config: &ExperimentConfig, root: Option<&Path>) -> PathBuf {
    let d = &config.output.directory;
    match root {
        Some(r) if d.is_relative() => r.join(d),
        _ => d.clone(),
    }
}

/// Loads, validates and runs a config file.
///
/// Config and hypothesis problems are returned as errors before anything is
/// written. Failures during the run are recorded in the manifest, which is
/// written either way.
pub fn run_file(path: &Path, root: Option<&Path>, kind: Option<ExperimentKind>) -> Result<RunManifest, CliError> {
    let (mut config, bytes) = load_config(path)?;
    if let Some(k) = kind {
        config.run.experiment = k;
    }
    run_config(&config, &sha256_hex(&bytes), root)
}

pub fn run_config(config: &ExperimentConfig, config_hash: &str, root: Option<&Path>) -> Result<RunManifest, CliError> {
    let spec = config.validate()?;
    let scales = scales_for(config)?;
    let eps0 = config.parameters.eps0;
    // hypothesis and parameter problems surface before any output exists
    for &a in &scales {
        choose_parameters(spec.n(), spec.gamma(), eps0, a).map_err(CliError::from_core)?;
    }
    let dir = output_dir(config, root);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir.display().to_string(), e))?;
    let started = unix_now();
    let kind = config.run.experiment;
    let params = json!({
        "n": spec.n(),
        "gamma": spec.gamma(),
        "eps0": eps0,
        "a_values": scales,
        "run": config.run,
    });
    let mut out = Outputs {
        dir: dir.clone(),
        files: Vec::new(),
    };
    let mut res = Results::default();
    let status = match kind {
        ExperimentKind::Period => period(&spec, &mut out, &mut res),
        ExperimentKind::SmoothCheck => smooth_check(config, &spec, &mut out, &mut res),
        ExperimentKind::NormalForm => normal_form(&spec, &scales, eps0, &mut out, &mut res),
        ExperimentKind::Twist => twist(config, &spec, &scales, eps0, &mut out, &mut res),
        ExperimentKind::Boundedness => boundedness(config, &spec, &mut out, &mut res),
        ExperimentKind::LevelScan => scan(config, &spec, &scales, &mut out, &mut res),
    };
    let failures = match status {
        Ok(()) => Vec::new(),
        Err(e) => vec![e.to_string()],
    };
    let summary = Summary {
        experiment: kind.as_str().to_string(),
        params: params.clone(),
        metrics: Value::Object(res.metrics),
        assertions: res.assertions.clone(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    let manifest = RunManifest {
        config_hash: config_hash.to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started,
        finished: unix_now(),
        experiment: kind.as_str().to_string(),
        output_dir: dir.clone(),
        files: out.files,
        assertions: res.assertions,
        failures,
        params,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    manifest.verify_files()?;
    Ok(manifest)
}

fn scales_for(config: &ExperimentConfig) -> Result<Vec<f64>, CliError> {
    let p = &config.parameters;
    if config.run.experiment == ExperimentKind::LevelScan && p.a.is_none() && p.a_values.is_none() {
        return Ok(DEFAULT_SCAN_SCALES.to_vec());
    }
    config.scales()
}

fn core<T>(r: duffing_core::Result<T>) -> Result<T, CliError> {
    r.map_err(CliError::from_core)
}

fn period(spec: &EquationSpec, out: &mut Outputs, res: &mut Results) -> Result<(), CliError> {
    let n = spec.n();
    let (q, b, r) = (core(min_period(n))?, period_from_beta(n), core(period_from_return(n))?);
    out.csv(
        "period.csv",
        "period",
        &format!("n,T0_quadrature,T0_beta,T0_return\n{n},{q},{b},{r}\n"),
    )?;
    let spread = q.max(b).max(r) - q.min(b).min(r);
    res.metrics.insert("T0".into(), json!(q));
    res.metrics.insert("spread".into(), json!(spread));
    res.assertions.push(Assertion::at_most("period routes agree", spread, 1e-8));
    Ok(())
}

/// The roughest non-zero slot above `n`.
fn default_slot(spec: &EquationSpec) -> Result<usize, CliError> {
    let n = spec.n();
    (n + 1..=2 * n)
        .filter(|&j| !spec.coefficient(j).is_zero())
        .filter_map(|j| spec.coefficient(j).declared_class().holder_exponent().map(|g| (j, g)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(j, _)| j)
        .ok_or_else(|| CliError::Config(format!("no non-zero Hölder slot above n = {n} to smooth")))
}

fn smooth_check(config: &ExperimentConfig, spec: &EquationSpec, out: &mut Outputs, res: &mut Results) -> Result<(), CliError> {
    let slot = match config.run.slot {
        Some(j) if j <= 2 * spec.n() => j,
        Some(j) => return Err(CliError::Config(format!("`run.slot` = {j} exceeds 2n = {}", 2 * spec.n()))),
        None => default_slot(spec)?,
    };
    let f = spec.coefficient(slot);
    let gamma = match f.declared_class() {
        RegularityClass::Holder(g) => g,
        RegularityClass::Integrable => {
            return Err(CliError::Config(format!("slot {slot} is not Hölder continuous")))
        }
    };
    let sigmas = config
        .run
        .sigmas
        .clone()
        .unwrap_or_else(|| (4..=10).map(|k| 2f64.powi(-k)).collect());
    let mut text = String::from("sigma,error\n");
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &s in &sigmas {
        let e = core(approximation_error(f, s))?;
        text.push_str(&format!("{s},{e}\n"));
        xs.push(s.ln());
        ys.push(e.ln());
    }
    out.csv("sigma_error.csv", "sigma-error", &text)?;
    let slope = regression_slope(&xs, &ys);
    res.metrics.insert("slot".into(), json!(slot));
    res.metrics.insert("declared_gamma".into(), json!(gamma));
    res.metrics.insert("slope".into(), json!(slope));
    res.assertions.push(Assertion::holds(
        "slope at least declared exponent",
        slope >= gamma - SLOPE_TOLERANCE,
        slope,
        gamma - SLOPE_TOLERANCE,
    ));
    // Weierstrass sums are no smoother than declared, so the slope is sharp
    if matches!(f.kind(), CoefficientKind::Weierstrass { .. }) {
        res.assertions
            .push(Assertion::at_most("slope at most declared exponent", slope, gamma + SLOPE_TOLERANCE));
    }
    Ok(())
}

fn normal_form(spec: &EquationSpec, scales: &[f64], eps0: f64, out: &mut Outputs, res: &mut Results) -> Result<(), CliError> {
    let n = spec.n();
    let chart = core(ActionAngleChart::new(n))?;
    let mut per_scale = Vec::new();
    let mut ratios = Vec::new();
    for &a in scales {
        let params = core(choose_parameters(n, spec.gamma(), eps0, a))?;
        let nf = core(iterate_normal_form(&core(ScaledSystem::new(spec.clone(), a))?, &chart, &params))?;
        out.csv(&format!("transform_log_A{a}.csv"), "transform-log", &nf.state.transform_log_csv())?;
        let c2 = nf.state.residual_c2_norm();
        let (wlo, whi) = nf.state.window;
        let twist = if wlo <= 2.0 && whi >= 3.0 {
            let (lo, hi) = core(twist_bounds_on(&nf.state, 2.0, 3.0))?;
            json!([lo, hi])
        } else {
            Value::Null
        };
        per_scale.push(json!({
            "A": a,
            "steps": params.steps,
            "eps": params.eps,
            "largeness": params.largeness(),
            "window": [wlo, whi],
            "residual_ratios": nf.state.residual_ratios(),
            "final_sup_residual": nf.state.transform_log.last().map(|r| r.sup_residual),
            "final_residual_c2": c2,
            "twist_bounds_2_3": twist,
        }));
        res.assertions
            .push(Assertion::at_most(format!("final residual C2 at A={a}"), c2, FINAL_RESIDUAL_C * eps0));
        ratios.push(nf.state.residual_ratios());
    }
    res.metrics.insert("scales".into(), Value::Array(per_scale));
    if scales.len() >= 2 {
        let steps = ratios.iter().map(Vec::len).min().unwrap_or(0);
        let xs: Vec<f64> = scales.iter().map(|a| a.ln()).collect();
        let slopes: Vec<f64> = (0..steps)
            .map(|k| regression_slope(&xs, &ratios.iter().map(|r| r[k].ln()).collect::<Vec<_>>()))
            .collect();
        res.metrics.insert("contraction_exponents".into(), json!(slopes));
    }
    Ok(())
}

fn twist(
    config: &ExperimentConfig,
    spec: &EquationSpec,
    scales: &[f64],
    eps0: f64,
    out: &mut Outputs,
    res: &mut Results,
) -> Result<(), CliError> {
    let n = spec.n();
    let annulus = config.run.annulus.unwrap_or([2.0, 3.0]);
    let grid = config.run.grid.unwrap_or([6, 8]);
    let chart = core(ActionAngleChart::new(n))?;
    let mut per_scale = Vec::new();
    for &a in scales {
        let sys = core(ScaledSystem::new(spec.clone(), a))?;
        let params = core(choose_parameters(n, spec.gamma(), eps0, a))?;
        let nf = core(iterate_normal_form(&sys, &chart, &params))?;
        let fit = core(fit_twist_form(
            &FlowSpec::scaled(sys),
            &chart,
            &nf,
            (annulus[0], annulus[1]),
            (grid[0], grid[1]),
        ))?;
        out.csv(&format!("twist_fit_A{a}.csv"), "twist-fit", &fit.to_csv())?;
        per_scale.push(json!({
            "A": a,
            "F_sup": fit.f_sup,
            "G_sup": fit.g_sup,
            "twist_min": fit.twist_min,
            "twist_max": fit.twist_max,
            "alpha_discrepancy": fit.alpha_discrepancy(),
        }));
        let bound = TWIST_FORM_C * eps0;
        res.assertions.push(Assertion::at_most(format!("F_sup at A={a}"), fit.f_sup, bound));
        res.assertions.push(Assertion::at_most(format!("G_sup at A={a}"), fit.g_sup, bound));
        let floor = a.powi(n as i32) / TWIST_C;
        res.assertions.push(Assertion::holds(
            format!("twist lower bound at A={a}"),
            fit.twist_min >= floor,
            fit.twist_min,
            floor,
        ));
    }
    res.metrics.insert("scales".into(), Value::Array(per_scale));
    Ok(())
}

fn boundedness(config: &ExperimentConfig, spec: &EquationSpec, out: &mut Outputs, res: &mut Results) -> Result<(), CliError> {
    let r = &config.run;
    let grid = square_grid(r.half_width.unwrap_or(10.0), r.grid_points.unwrap_or(5));
    let horizon = r.horizon.unwrap_or(1e4);
    let table = core(boundedness_survey(spec, &grid, horizon, r.tolerance.unwrap_or(ORBIT_TOLERANCE)))?;
    out.csv("survey.csv", "survey", &table.to_csv())?;
    let escapes = table.escapes();
    let max_sup = table.rows.iter().map(|r| r.sup_norm).fold(0.0, f64::max);
    res.metrics.insert("points".into(), json!(table.rows.len()));
    res.metrics.insert("horizon_time".into(), json!(horizon));
    res.metrics.insert("escapes".into(), json!(escapes));
    res.metrics.insert("max_sup_norm".into(), json!(max_sup));
    res.assertions.push(Assertion::at_most("escapes", escapes as f64, 0.0));
    Ok(())
}

fn scan(
    config: &ExperimentConfig,
    spec: &EquationSpec,
    scales: &[f64],
    out: &mut Outputs,
    res: &mut Results,
) -> Result<(), CliError> {
    let r = &config.run;
    let defaults = ScanConfig::default();
    let sc = ScanConfig {
        horizon: r.horizon.map_or(defaults.horizon, |h| h as usize),
        collar: r.collar.unwrap_or(DEFAULT_COLLAR),
        stride: r.stride.unwrap_or(defaults.stride),
        tolerance: r.tolerance.unwrap_or(ORBIT_TOLERANCE),
        growth_tolerance: defaults.growth_tolerance,
    };
    let report = core(level_scan(spec, scales, &sc))?;
    out.csv("level_scan.csv", "level-scan", &report.to_csv())?;
    let mut orbits = String::from("A,role,iter,x,xdot\n");
    for level in &report.levels {
        if let Some(p) = &level.probe {
            for (role, rec) in [("inner", &p.inner), ("test", &p.test), ("outer", &p.outer)] {
                for (i, (x, v)) in rec.samples.iter().enumerate() {
                    orbits.push_str(&format!("{},{role},{},{x},{v}\n", level.a, i * rec.stride));
                }
            }
        }
    }
    out.csv("orbits.csv", "orbits", &orbits)?;
    let mut levels = Vec::new();
    for l in &report.levels {
        let verdict = match (&l.error, l.probe.as_ref().map(|p| p.verdict)) {
            (Some(e), _) => format!("error: {e}"),
            (None, Some(ConfinementVerdict::Confined)) => "confined".into(),
            (None, Some(ConfinementVerdict::Inconclusive { first_violation })) => {
                format!("inconclusive at iterate {first_violation}")
            }
            (None, Some(ConfinementVerdict::BracketEscaped)) => "bracket escaped".into(),
            (None, None) => "not run".into(),
        };
        levels.push(json!({
            "A": l.a,
            "annulus": [l.annulus.0, l.annulus.1],
            "seed_actions": l.seed_actions,
            "verdict": verdict,
            "omega": l.rotation.map(|w| w.0),
            "omega_err": l.rotation.map(|w| w.1),
        }));
        res.assertions.push(Assertion::holds(
            format!("confined at A={}", l.a),
            l.is_confined(),
            if l.is_confined() { 1.0 } else { 0.0 },
            1.0,
        ));
    }
    for g in &report.growth {
        res.assertions.push(Assertion::holds(
            format!("rotation growth A={} to A={}", g.a_lo, g.a_hi),
            g.within,
            g.ratio,
            g.predicted,
        ));
    }
    res.metrics.insert("horizon".into(), json!(sc.horizon));
    res.metrics.insert("levels".into(), Value::Array(levels));
    Ok(())
}
