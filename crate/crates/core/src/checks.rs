//! Built-in assertion suite, shared by `verify` and the acceptance tests.
//!
//! Each criterion returns a [`CheckReport`]; failures inside a check become a
//! failed report rather than an error.

use std::f64::consts::TAU;
use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::action_angle::{min_period, period_from_beta, period_from_return, reference_orbit, ActionAngleChart, ScaledSystem};
use crate::calibration::TWIST_FORM_C;
use crate::coefficients::{make_weierstrass, PeriodicCoefficient};
use crate::corpus;
use crate::dynamics::{fit_twist_form, jacobian_det, FlowSpec};
use crate::error::Result;
use crate::experiments::{boundedness_survey, level_scan, rotation_from_lifted, square_grid, ScanConfig, ORBIT_TOLERANCE};
use crate::normal_form::{choose_parameters, iterate_normal_form, twist_bounds_on};
use crate::smoothing::{approximation_error, bandwidth, smooth};

/// Number of criteria in the suite.
pub const CRITERIA: u8 = 12;

/// Least-squares slope of `ys` against `xs`.
pub fn regression_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Stated sizes and horizons.
    Full,
    /// Reduced workloads for a fast smoke run; same bounds.
    Quick,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    /// The measured quantity compared against `bound`.
    pub value: f64,
    pub bound: f64,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{:>2}] {}: value {:.6e}, bound {:.6e} ({}; {:.1} s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.value,
            self.bound,
            self.detail,
            self.seconds
        )
    }
}

/// Short name of criterion `id` (1-based).
pub fn name(id: u8) -> &'static str {
    match id {
        1 => "auxiliary-orbit identity",
        2 => "period triple agreement",
        3 => "chart symplecticity",
        4 => "Jackson rate",
        5 => "bandwidth law",
        6 => "normal-form contraction",
        7 => "twist strength",
        8 => "time-one map symplecticity",
        9 => "twist-form smallness",
        10 => "boundedness survey",
        11 => "confinement and level scan",
        12 => "rotation-number exactness",
        _ => "unknown",
    }
}

struct Outcome {
    pass: bool,
    value: f64,
    bound: f64,
    detail: String,
}

/// Runs criterion `id`.
pub fn run(id: u8, mode: Mode) -> CheckReport {
    let start = Instant::now();
    let result = match id {
        1 => orbit_identity(),
        2 => period_triple(),
        3 => chart_symplecticity(),
        4 => jackson_rate(),
        5 => bandwidth_law(),
        6 => contraction(),
        7 => twist_strength(),
        8 => map_symplecticity(mode),
        9 => twist_form(mode),
        10 => survey(mode),
        11 => scan(mode),
        12 => rotation_exactness(),
        _ => Ok(Outcome {
            pass: false,
            value: f64::NAN,
            bound: f64::NAN,
            detail: format!("no criterion {id}"),
        }),
    };
    let seconds = start.elapsed().as_secs_f64();
    let o = result.unwrap_or_else(|e| Outcome {
        pass: false,
        value: f64::NAN,
        bound: f64::NAN,
        detail: format!("error: {e}"),
    });
    CheckReport {
        id,
        name: name(id),
        pass: o.pass,
        value: o.value,
        bound: o.bound,
        detail: o.detail,
        seconds,
    }
}

/// Runs every criterion in order.
pub fn run_all(mode: Mode) -> Vec<CheckReport> {
    (1..=CRITERIA).map(|id| run(id, mode)).collect()
}

fn orbit_identity() -> Result<Outcome> {
    let mut worst = 0.0_f64;
    let mut parts = Vec::new();
    for n in 1..=3 {
        let d = reference_orbit(n, 4096)?.max_raw_defect();
        parts.push(format!("n={n}: {d:.1e}"));
        worst = worst.max(d);
    }
    Ok(Outcome {
        pass: worst <= 1e-10,
        value: worst,
        bound: 1e-10,
        detail: parts.join(", "),
    })
}

fn period_triple() -> Result<Outcome> {
    let mut worst = 0.0_f64;
    let mut parts = Vec::new();
    for n in 1..=3 {
        let (q, b, r) = (min_period(n)?, period_from_beta(n), period_from_return(n)?);
        let spread = (q - b).abs().max((q - r).abs()).max((b - r).abs());
        parts.push(format!("n={n}: T0={q:.10}, spread {spread:.1e}"));
        worst = worst.max(spread);
    }
    let t1 = min_period(1)?;
    let reference_ok = (t1 - 7.416298).abs() <= 1e-6;
    Ok(Outcome {
        pass: worst <= 1e-8 && reference_ok,
        value: worst,
        bound: 1e-8,
        detail: format!("{}; |T0(1) - 7.416298| = {:.1e}", parts.join(", "), (t1 - 7.416298).abs()),
    })
}

fn chart_symplecticity() -> Result<Outcome> {
    let h = 1e-5;
    let mut worst = 0.0_f64;
    for n in 1..=3 {
        let ch = ActionAngleChart::new(n)?;
        for i in 0..20 {
            for j in 0..20 {
                let a = 1.0 + 3.0 * i as f64 / 19.0;
                let th = j as f64 / 20.0;
                let (xp, yp) = ch.psi0(a, th + h)?;
                let (xm, ym) = ch.psi0(a, th - h)?;
                let (xq, yq) = ch.psi0(a + h, th)?;
                let (xr, yr) = ch.psi0(a - h, th)?;
                let det = ((xp - xm) * (yq - yr) - (xq - xr) * (yp - ym)) / (4.0 * h * h);
                worst = worst.max((det - 1.0).abs());
            }
        }
    }
    Ok(Outcome {
        pass: worst <= 1e-7,
        value: worst,
        bound: 1e-7,
        detail: "max |det - 1|, 20x20 grid on [1,4]x[0,1), n = 1..3".into(),
    })
}

fn jackson_rate() -> Result<Outcome> {
    let mut worst = 0.0_f64;
    let mut parts = Vec::new();
    for gamma in [0.6, 0.7, 0.9] {
        let f = make_weierstrass(gamma, 2, 21, vec![])?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for e in 4..=10 {
            let sigma = 2f64.powi(-e);
            xs.push(sigma.ln());
            ys.push(approximation_error(&f, sigma)?.ln());
        }
        let slope = regression_slope(&xs, &ys);
        parts.push(format!("γ={gamma}: slope {slope:.3}"));
        worst = worst.max((slope - gamma).abs());
    }
    Ok(Outcome {
        pass: worst <= 0.15,
        value: worst,
        bound: 0.15,
        detail: format!("max |slope - γ|; {}", parts.join(", ")),
    })
}

fn random_coefficient(rng: &mut ChaCha8Rng) -> Result<PeriodicCoefficient> {
    Ok(match rng.gen_range(0..4) {
        0 => {
            let g = rng.gen_range(0.3..0.95);
            let terms = rng.gen_range(4..20);
            let phases = (0..terms).map(|_| rng.gen_range(0.0..TAU)).collect();
            make_weierstrass(g, rng.gen_range(2..4), terms, phases)?
        }
        1 => {
            let k = rng.gen_range(1..6);
            let cos = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sin = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            PeriodicCoefficient::trig_polynomial(rng.gen_range(-1.0..1.0), cos, sin)?
        }
        2 => {
            let a = rng.gen_range(0.0..0.4);
            let b = rng.gen_range(0.5..0.9);
            PeriodicCoefficient::step(vec![a, b], vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])?
        }
        _ => PeriodicCoefficient::cosine(rng.gen_range(1..40), rng.gen_range(-3.0..3.0)),
    })
}

fn bandwidth_law() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst = 0.0_f64;
    let mut checked = 0usize;
    for _ in 0..100 {
        let f = random_coefficient(&mut rng)?;
        let sigma = (-rng.gen_range(1.0..7.0f64)).exp();
        let p = smooth(&f, sigma)?;
        for k in -(bandwidth(sigma) as i64 + 8)..=(bandwidth(sigma) as i64 + 8) {
            if TAU * k.unsigned_abs() as f64 * sigma >= 1.0 {
                worst = worst.max(p.coefficient(k).norm());
                checked += 1;
            }
        }
        if p.coefficients().len() > bandwidth(sigma) + 1 {
            worst = f64::INFINITY;
        }
    }
    Ok(Outcome {
        pass: worst == 0.0,
        value: worst,
        bound: 0.0,
        detail: format!("max |coefficient| beyond bandwidth over {checked} modes of 100 functions"),
    })
}

fn contraction() -> Result<Outcome> {
    let start = Instant::now();
    let spec = corpus::main_n1()?;
    let chart = ActionAngleChart::new(1)?;
    let scales = [50.0, 100.0, 200.0];
    let mut ratios = Vec::new();
    for &a in &scales {
        let params = choose_parameters(1, spec.gamma(), 0.1, a)?;
        let nf = iterate_normal_form(&ScaledSystem::new(spec.clone(), a)?, &chart, &params)?;
        ratios.push(nf.state.residual_ratios());
    }
    let steps = ratios.iter().map(Vec::len).min().unwrap_or(0);
    let xs: Vec<f64> = scales.iter().map(|a| a.ln()).collect();
    let mut slopes = Vec::new();
    for k in 0..steps {
        let ys: Vec<f64> = ratios.iter().map(|r| r[k].ln()).collect();
        slopes.push(regression_slope(&xs, &ys));
    }
    let elapsed = start.elapsed().as_secs_f64();
    let worst = slopes
        .iter()
        .copied()
        .max_by(|a, b| (a + 1.0).abs().total_cmp(&(b + 1.0).abs()))
        .unwrap_or(f64::NAN);
    Ok(Outcome {
        pass: steps > 0 && slopes.iter().all(|s| (-1.3..=-0.7).contains(s)) && elapsed <= 600.0,
        value: worst,
        bound: -1.0,
        detail: format!("per-step exponents {slopes:.3?} must lie in [-1.3, -0.7]; ratios {ratios:.3?}"),
    })
}

fn twist_strength() -> Result<Outcome> {
    let spec = corpus::main_n1()?;
    let chart = ActionAngleChart::new(1)?;
    let mut lower = Vec::new();
    for a in [50.0, 100.0] {
        let params = choose_parameters(1, spec.gamma(), 0.1, a)?;
        let nf = iterate_normal_form(&ScaledSystem::new(spec.clone(), a)?, &chart, &params)?;
        lower.push(twist_bounds_on(&nf.state, 2.0, 3.0)?.0);
    }
    let ratio = lower[1] / lower[0];
    let dev = (ratio / 2.0 - 1.0).abs();
    Ok(Outcome {
        pass: lower.iter().all(|l| *l > 0.0) && dev <= 0.15,
        value: ratio,
        bound: 2.0,
        detail: format!("lower(50) {:.4}, lower(100) {:.4}; relative deviation {dev:.3} <= 0.15", lower[0], lower[1]),
    })
}

/// Scale at which corpus dynamics are sampled: `A = 100` for `n = 1`, `A = 20` for `n = 2`.
fn dynamics_scale(n: usize) -> f64 {
    if n == 1 {
        100.0
    } else {
        20.0
    }
}

fn map_symplecticity(mode: Mode) -> Result<Outcome> {
    let points = if mode == Mode::Full { 100 } else { 8 };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0_f64;
    let mut parts = Vec::new();
    for (label, spec) in corpus::all()? {
        let n = spec.n();
        let a = dynamics_scale(n);
        let chart = ActionAngleChart::new(n)?;
        let fs = FlowSpec::scaled(ScaledSystem::new(spec, a)?).with_tolerance(1e-13);
        let mut sys_worst = 0.0_f64;
        for _ in 0..points {
            let p = chart.psi0(rng.gen_range(2.0..3.0), rng.gen_range(0.0..1.0))?;
            sys_worst = sys_worst.max((jacobian_det(&fs, p, 0.0)? - 1.0).abs());
        }
        parts.push(format!("{label} (A={a}): {sys_worst:.1e}"));
        worst = worst.max(sys_worst);
    }
    Ok(Outcome {
        pass: worst <= 1e-6,
        value: worst,
        bound: 1e-6,
        detail: format!("max |det - 1| over {points} annulus points each; {}", parts.join(", ")),
    })
}

fn twist_form(mode: Mode) -> Result<Outcome> {
    let a = 100.0;
    let eps0 = 0.1;
    let grid = if mode == Mode::Full { (6, 8) } else { (3, 4) };
    let mut worst = 0.0_f64;
    let mut parts = Vec::new();
    for (label, spec) in corpus::all()? {
        let n = spec.n();
        if mode == Mode::Quick && n > 1 {
            continue;
        }
        let chart = ActionAngleChart::new(n)?;
        let sys = ScaledSystem::new(spec.clone(), a)?;
        let params = choose_parameters(n, spec.gamma(), eps0, a)?;
        let nf = iterate_normal_form(&sys, &chart, &params)?;
        let fit = fit_twist_form(&FlowSpec::scaled(sys), &chart, &nf, (2.0, 3.0), grid)?;
        let r = fit.f_sup.max(fit.g_sup) / eps0;
        parts.push(format!(
            "{label}: F {:.2e}, G {:.2e}, twist_min {:.3}",
            fit.f_sup, fit.g_sup, fit.twist_min
        ));
        worst = worst.max(r);
    }
    Ok(Outcome {
        pass: worst <= TWIST_FORM_C,
        value: worst,
        bound: TWIST_FORM_C,
        detail: format!("max(F_sup, G_sup)/eps0 at A = 100; {}", parts.join(", ")),
    })
}

fn survey(mode: Mode) -> Result<Outcome> {
    let start = Instant::now();
    let horizon = if mode == Mode::Full { 1e4 } else { 100.0 };
    let spec = corpus::main_n1()?;
    let grid = square_grid(10.0, 5);
    let first = boundedness_survey(&spec, &grid, horizon, ORBIT_TOLERANCE)?;
    let second = boundedness_survey(&spec, &grid, horizon, ORBIT_TOLERANCE)?;
    let elapsed = start.elapsed().as_secs_f64();
    let reproducible = first.to_csv() == second.to_csv();
    let finite = first.rows.iter().all(|r| r.sup_norm.is_finite());
    let max_sup = first.rows.iter().map(|r| r.sup_norm).fold(0.0, f64::max);
    let escapes = first.escapes();
    Ok(Outcome {
        pass: escapes == 0 && finite && reproducible && elapsed <= 900.0,
        value: escapes as f64,
        bound: 0.0,
        detail: format!(
            "escapes over 25 points, horizon {horizon}; max sup {max_sup:.3}; reproducible {reproducible}; two runs {elapsed:.0} s"
        ),
    })
}

fn scan(mode: Mode) -> Result<Outcome> {
    let start = Instant::now();
    let config = ScanConfig {
        horizon: if mode == Mode::Full { 100_000 } else { 1000 },
        ..ScanConfig::default()
    };
    let report = level_scan(&corpus::main_n1()?, &[50.0, 100.0, 200.0], &config)?;
    let elapsed = start.elapsed().as_secs_f64();
    let verdicts: Vec<String> = report
        .levels
        .iter()
        .map(|l| match (&l.error, &l.probe, l.rotation) {
            (Some(e), _, _) => format!("A={}: error {e}", l.a),
            (None, Some(p), Some((w, e))) => format!("A={}: {:?}, ω {w:.6} ± {e:.1e}", l.a, p.verdict),
            _ => format!("A={}: incomplete", l.a),
        })
        .collect();
    let worst = report
        .growth
        .iter()
        .map(|g| (g.ratio / g.predicted - 1.0).abs())
        .fold(0.0, f64::max);
    let complete = report.growth.len() == report.levels.len() - 1;
    Ok(Outcome {
        pass: report.all_confined() && complete && report.growth_ok() && elapsed <= 1200.0,
        value: worst,
        bound: config.growth_tolerance,
        detail: format!(
            "max relative deviation of ω(2A)/ω(A) from 2^n; {}; horizon {}",
            verdicts.join(", "),
            config.horizon
        ),
    })
}

fn rotation_exactness() -> Result<Outcome> {
    let omega = 2f64.sqrt() - 1.0;
    let lifted: Vec<f64> = (0..=10_000).map(|k| 0.25 + k as f64 * omega).collect();
    let (est, _) = rotation_from_lifted(&lifted)?;
    let err = (est - omega).abs();
    Ok(Outcome {
        pass: err <= 1e-10,
        value: err,
        bound: 1e-10,
        detail: "rigid rotation by √2 - 1, 10^4 iterates".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| -0.5 * x + 3.0).collect();
        assert!((regression_slope(&xs, &ys) + 0.5).abs() < 1e-14);
    }

    #[test]
    fn cheap_criteria_pass() {
        for id in [1, 2, 3, 12] {
            let r = run(id, Mode::Quick);
            assert!(r.pass, "{r}");
            assert!(r.to_string().starts_with("PASS"));
        }
    }

    #[test]
    fn unknown_criterion_fails() {
        let r = run(13, Mode::Quick);
        assert!(!r.pass && r.name == "unknown");
    }
}
