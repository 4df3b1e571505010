//! Flows, the time-one map and its twist-form decomposition.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use crate::action_angle::{ActionAngleChart, ScaledSystem};
use crate::coefficients::EquationSpec;
use crate::error::{param_err, Error, Result};
use crate::integrator::{integrate, OdeSystem, Options, Outcome};
use crate::normal_form::NormalForm;

/// Default ceiling on `|x| + |y|` before an orbit is declared escaped.
pub const ESCAPE_RADIUS: f64 = 1e6;

#[derive(Debug, Clone)]
pub enum VectorField {
    /// `x' = y`, `y' = -x^{2n+1} - Σ P_j(t) x^j` in the original variables.
    Original(EquationSpec),
    /// The rescaled system at scale `A`.
    Scaled(ScaledSystem),
    /// `x' = y`, `y' = -x^{2n+1}`.
    Auxiliary { n: usize },
    Zero,
}

/// A vector field with the integration settings used to flow it.
#[derive(Debug, Clone)]
pub struct FlowSpec {
    pub field: VectorField,
    /// Relative and absolute local error target.
    pub tolerance: f64,
    pub max_step: f64,
    /// Escape ceiling on `|x| + |y|`.
    pub escape_radius: f64,
}

impl FlowSpec {
    pub fn new(field: VectorField) -> Self {
        Self {
            field,
            tolerance: 1e-12,
            max_step: f64::INFINITY,
            escape_radius: ESCAPE_RADIUS,
        }
    }

    pub fn original(spec: EquationSpec) -> Self {
        Self::new(VectorField::Original(spec))
    }

    pub fn scaled(sys: ScaledSystem) -> Self {
        Self::new(VectorField::Scaled(sys))
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn with_escape_radius(mut self, r: f64) -> Self {
        self.escape_radius = r;
        self
    }

    /// `(x', y')` at time `t`.
    pub fn eval(&self, t: f64, x: f64, y: f64) -> [f64; 2] {
        self.rhs(t, &[x, y], t)
    }

    /// `∂y'/∂x` (the only non-constant entry of the Jacobian of the field).
    fn stiffness(&self, t: f64, x: f64, anchor: f64) -> f64 {
        let forcing_slope = |spec: &EquationSpec, scale: &dyn Fn(usize) -> f64| {
            let mut acc = 0.0;
            let mut power = 1.0;
            for (j, p) in spec.coefficients().iter().enumerate().skip(1) {
                if !p.is_zero() {
                    acc += j as f64 * p.eval_anchored(t, anchor) * power * scale(j);
                }
                power *= x;
            }
            acc
        };
        match &self.field {
            VectorField::Original(spec) => {
                let n = spec.n() as i32;
                -((2 * n + 1) as f64) * x.powi(2 * n) - forcing_slope(spec, &|_| 1.0)
            }
            VectorField::Scaled(sys) => {
                let n = sys.n() as i32;
                -((2 * n + 1) as f64) * sys.a().powi(n) * x.powi(2 * n)
                    - forcing_slope(sys.spec(), &|j| sys.a_power(j))
            }
            VectorField::Auxiliary { n } => -((2 * n + 1) as f64) * x.powi(2 * *n as i32),
            VectorField::Zero => 0.0,
        }
    }

    /// `∂x'/∂y`.
    fn mass(&self) -> f64 {
        match &self.field {
            VectorField::Scaled(sys) => sys.a().powi(sys.n() as i32),
            VectorField::Zero => 0.0,
            _ => 1.0,
        }
    }

    fn options(&self) -> Options {
        Options {
            max_step: self.max_step,
            ..Options::with_tolerance(self.tolerance)
        }
    }
}

impl OdeSystem<2> for FlowSpec {
    #[inline]
    fn rhs(&self, t: f64, s: &[f64; 2], anchor: f64) -> [f64; 2] {
        let [x, y] = *s;
        match &self.field {
            VectorField::Original(spec) => {
                let n = spec.n() as i32;
                [y, -x.powi(2 * n + 1) - spec.forcing_anchored(x, t, anchor)]
            }
            VectorField::Scaled(sys) => sys.vector_field(t, x, y, anchor),
            VectorField::Auxiliary { n } => [y, -x.powi(2 * *n as i32 + 1)],
            VectorField::Zero => [0.0, 0.0],
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match &self.field {
            VectorField::Original(spec) => spec.breakpoints(),
            VectorField::Scaled(sys) => sys.spec().breakpoints(),
            _ => Vec::new(),
        }
    }

    fn escaped(&self, s: &[f64; 2]) -> bool {
        !(s[0].abs() + s[1].abs() <= self.escape_radius)
    }
}

/// Endpoint of a flow, or the exit from the escape ceiling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowResult {
    Completed((f64, f64)),
    Escaped { t: f64, state: (f64, f64) },
}

impl FlowResult {
    pub fn state(&self) -> (f64, f64) {
        match *self {
            FlowResult::Completed(s) | FlowResult::Escaped { state: s, .. } => s,
        }
    }

    pub fn is_escaped(&self) -> bool {
        matches!(self, FlowResult::Escaped { .. })
    }

    /// The final state, with escape turned into an error.
    pub fn completed(self) -> Result<(f64, f64)> {
        match self {
            FlowResult::Completed(s) => Ok(s),
            FlowResult::Escaped { t, .. } => Err(Error::Numerical(format!("orbit escaped at t = {t}"))),
        }
    }
}

/// Flows `state` from `t0` to `t1`; `observer` sees every accepted step.
pub fn flow_observed(
    fs: &FlowSpec,
    state: (f64, f64),
    t0: f64,
    t1: f64,
    observer: &mut dyn FnMut(f64, &[f64; 2]),
) -> Result<FlowResult> {
    if !(fs.tolerance > 0.0) {
        return param_err(format!("integrator tolerance must be positive, got {}", fs.tolerance));
    }
    let (out, _) = integrate(fs, t0, [state.0, state.1], t1, &fs.options(), observer)?;
    Ok(match out {
        Outcome::Completed { y } => FlowResult::Completed((y[0], y[1])),
        Outcome::Escaped { t, y } => FlowResult::Escaped {
            t,
            state: (y[0], y[1]),
        },
    })
}

pub fn flow(fs: &FlowSpec, state: (f64, f64), t0: f64, t1: f64) -> Result<FlowResult> {
    if t1 < t0 {
        return param_err(format!("flow needs t1 >= t0, got [{t0}, {t1}]"));
    }
    flow_observed(fs, state, t0, t1, &mut |_, _| {})
}

/// Flow from `t_base` to `t_base + 1`.
pub fn time_one_map(fs: &FlowSpec, p: (f64, f64), t_base: f64) -> Result<FlowResult> {
    flow(fs, p, t_base, t_base + 1.0)
}

/// Time-one map together with the number of clockwise turns made around the
/// origin, accumulated step by step.
pub fn time_one_map_with_turns(fs: &FlowSpec, p: (f64, f64), t_base: f64) -> Result<(FlowResult, f64)> {
    let mut last = clockwise(p.0, p.1);
    let mut total = 0.0;
    let out = flow_observed(fs, p, t_base, t_base + 1.0, &mut |_, y| {
        let a = clockwise(y[0], y[1]);
        let mut d = a - last;
        d -= TAU * (d / TAU).round();
        total += d;
        last = a;
    })?;
    Ok((out, total / TAU))
}

#[inline]
fn clockwise(x: f64, y: f64) -> f64 {
    -y.atan2(x)
}

/// Flow together with its tangent map `M' = J M`, state `[x, y, M00, M01, M10, M11]`.
struct Variational<'a>(&'a FlowSpec);

impl OdeSystem<6> for Variational<'_> {
    fn rhs(&self, t: f64, s: &[f64; 6], anchor: f64) -> [f64; 6] {
        let [dx, dy] = self.0.rhs(t, &[s[0], s[1]], anchor);
        let m = self.0.mass();
        let k = self.0.stiffness(t, s[0], anchor);
        [dx, dy, m * s[4], m * s[5], k * s[2], k * s[3]]
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.0.breakpoints()
    }

    fn escaped(&self, s: &[f64; 6]) -> bool {
        self.0.escaped(&[s[0], s[1]])
    }
}

/// `D𝒫(p)` from the variational equations, integrated alongside the orbit.
pub fn jacobian(fs: &FlowSpec, p: (f64, f64), t_base: f64) -> Result<[[f64; 2]; 2]> {
    let sys = Variational(fs);
    let y0 = [p.0, p.1, 1.0, 0.0, 0.0, 1.0];
    let (out, _) = integrate(&sys, t_base, y0, t_base + 1.0, &fs.options(), &mut |_, _| {})?;
    match out {
        Outcome::Completed { y } => Ok([[y[2], y[3]], [y[4], y[5]]]),
        Outcome::Escaped { t, .. } => Err(Error::Numerical(format!("orbit escaped at t = {t}"))),
    }
}

/// `det D𝒫(p)` from the variational equations.
pub fn jacobian_det(fs: &FlowSpec, p: (f64, f64), t_base: f64) -> Result<f64> {
    let m = jacobian(fs, p, t_base)?;
    Ok(m[0][0] * m[1][1] - m[0][1] * m[1][0])
}

/// `det D𝒫(p)` by fourth-order central differences with step `h`.
pub fn jacobian_det_fd(fs: &FlowSpec, p: (f64, f64), t_base: f64, h: f64) -> Result<f64> {
    let map = |x: f64, y: f64| time_one_map(fs, (x, y), t_base)?.completed();
    let diff = |dx: f64, dy: f64| -> Result<(f64, f64)> {
        let f = |s: f64| map(p.0 + s * dx, p.1 + s * dy);
        let (a2, b2) = f(2.0)?;
        let (a1, b1) = f(1.0)?;
        let (c1, d1) = f(-1.0)?;
        let (c2, d2) = f(-2.0)?;
        let scale = 12.0 * h;
        Ok((
            (-a2 + 8.0 * a1 - 8.0 * c1 + c2) / scale,
            (-b2 + 8.0 * b1 - 8.0 * d1 + d2) / scale,
        ))
    };
    let (xx, yx) = diff(h, 0.0)?;
    let (xy, yy) = diff(0.0, h)?;
    Ok(xx * yy - xy * yx)
}

/// The time-one map written as `ρ1 = ρ0 + F`, `ξ1 = ξ0 + α(ρ0) + G` in the
/// final normal-form variables.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistMapFit {
    pub rho: Vec<f64>,
    /// ξ-average of the lifted angle advance (turns per period).
    pub alpha_samples: Vec<f64>,
    /// `∫₀¹ ∂ρH0^N(ρ, t) dt` on the same grid.
    pub alpha_integral: Vec<f64>,
    /// Per-ρ maxima of `|F|` and `|G|` over the ξ-grid.
    pub f_row: Vec<f64>,
    pub g_row: Vec<f64>,
    pub f_sup: f64,
    pub g_sup: f64,
    /// Bounds on `|∂ρα|` from differencing `alpha_samples`.
    pub twist_min: f64,
    pub twist_max: f64,
}

impl TwistMapFit {
    /// `max |α_samples - α_integral|`.
    pub fn alpha_discrepancy(&self) -> f64 {
        self.alpha_samples
            .iter()
            .zip(&self.alpha_integral)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("rho,alpha,F_sup,G_sup\n");
        for i in 0..self.rho.len() {
            let _ = writeln!(
                out,
                "{},{},{:e},{:e}",
                self.rho[i], self.alpha_samples[i], self.f_row[i], self.g_row[i]
            );
        }
        out
    }
}

/// Fits the twist form of the time-one map of `fs` (the scaled system of
/// `nf`) on `annulus × [0, 1)` with a `grid.0 × grid.1` sample grid.
///
/// Points whose image leaves the final window are an error after one retry
/// on an annulus shrunk by a tenth of its width.
pub fn fit_twist_form(
    fs: &FlowSpec,
    chart: &ActionAngleChart,
    nf: &NormalForm,
    annulus: (f64, f64),
    grid: (usize, usize),
) -> Result<TwistMapFit> {
    if !matches!(fs.field, VectorField::Scaled(_)) {
        return param_err("twist fit needs the scaled vector field");
    }
    let (wlo, whi) = nf.state.window;
    if annulus.0 < wlo || annulus.1 > whi || annulus.0 >= annulus.1 {
        return param_err(format!(
            "annulus [{}, {}] not inside the normal-form window [{wlo}, {whi}]",
            annulus.0, annulus.1
        ));
    }
    if grid.0 < 2 || grid.1 < 1 {
        return param_err("twist fit needs at least 2 actions and 1 angle");
    }
    match fit_on(fs, chart, nf, annulus, grid) {
        Err(Error::Domain(_)) => {
            let w = 0.1 * (annulus.1 - annulus.0);
            fit_on(fs, chart, nf, (annulus.0 + w, annulus.1 - w), grid)
        }
        other => other,
    }
}

fn fit_on(
    fs: &FlowSpec,
    chart: &ActionAngleChart,
    nf: &NormalForm,
    annulus: (f64, f64),
    (n_rho, n_xi): (usize, usize),
) -> Result<TwistMapFit> {
    // t = 0 and t = 1 share one frozen transform by periodicity
    let phi = nf.state.transform_at(0.0);
    let mut fit = TwistMapFit {
        rho: Vec::with_capacity(n_rho),
        alpha_samples: Vec::with_capacity(n_rho),
        alpha_integral: Vec::with_capacity(n_rho),
        f_row: Vec::with_capacity(n_rho),
        g_row: Vec::with_capacity(n_rho),
        f_sup: 0.0,
        g_sup: 0.0,
        twist_min: f64::INFINITY,
        twist_max: 0.0,
    };
    for i in 0..n_rho {
        let rho = annulus.0 + (annulus.1 - annulus.0) * i as f64 / (n_rho - 1) as f64;
        let mut advances = Vec::with_capacity(n_xi);
        let mut f_row = 0.0_f64;
        for j in 0..n_xi {
            let xi = j as f64 / n_xi as f64;
            let (action, theta) = phi.to_original(rho, xi)?;
            let (x, y) = chart.psi0(action, theta)?;
            let (out, turns) = time_one_map_with_turns(fs, (x, y), 0.0)?;
            let (x1, y1) = out.completed()?;
            let (a1, th1) = chart.psi0_inverse(x1, y1)?;
            let (rho1, xi1) = phi.from_original(a1, th1)?;
            let raw = xi1 - xi;
            let advance = raw + (turns - raw).round();
            advances.push(advance);
            f_row = f_row.max((rho1 - rho).abs());
        }
        let alpha = advances.iter().sum::<f64>() / n_xi as f64;
        let g_row = advances.iter().map(|v| (v - alpha).abs()).fold(0.0, f64::max);
        let m = 256;
        let integral = (0..m)
            .map(|k| nf.state.h0.d_mu(rho, (k as f64 + 0.5) / m as f64))
            .sum::<f64>()
            / m as f64;
        fit.rho.push(rho);
        fit.alpha_samples.push(alpha);
        fit.alpha_integral.push(integral);
        fit.f_row.push(f_row);
        fit.g_row.push(g_row);
        fit.f_sup = fit.f_sup.max(f_row);
        fit.g_sup = fit.g_sup.max(g_row);
    }
    for w in 0..n_rho - 1 {
        let slope = ((fit.alpha_samples[w + 1] - fit.alpha_samples[w]) / (fit.rho[w + 1] - fit.rho[w])).abs();
        fit.twist_min = fit.twist_min.min(slope);
        fit.twist_max = fit.twist_max.max(slope);
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action_angle::min_period;
    use crate::corpus;
    use crate::normal_form::{choose_parameters, iterate_normal_form};

    #[test]
    fn auxiliary_period_closure() {
        for n in 1..=2 {
            let fs = FlowSpec::new(VectorField::Auxiliary { n });
            let t0 = min_period(n).unwrap();
            let (x, y) = flow(&fs, (1.0, 0.0), 0.0, t0).unwrap().completed().unwrap();
            assert!((x - 1.0).abs() < 1e-8 && y.abs() < 1e-8);
        }
    }

    #[test]
    fn zero_field_is_identity() {
        let fs = FlowSpec::new(VectorField::Zero);
        assert_eq!(flow(&fs, (0.3, -2.0), 0.0, 5.0).unwrap(), FlowResult::Completed((0.3, -2.0)));
    }

    #[test]
    fn forward_backward_returns() {
        let fs = FlowSpec::original(corpus::main_n1().unwrap());
        let p = (1.5, -0.7);
        let q = flow(&fs, p, 0.2, 3.7).unwrap().completed().unwrap();
        let r = flow_observed(&fs, q, 3.7, 0.2, &mut |_, _| {}).unwrap().completed().unwrap();
        assert!((r.0 - p.0).abs() < 1e-8 && (r.1 - p.1).abs() < 1e-8);
        assert!(flow(&fs, p, 1.0, 0.0).is_err());
    }

    #[test]
    fn field_is_periodic_in_time() {
        for (_, spec) in corpus::all().unwrap() {
            let fs = FlowSpec::original(spec.clone());
            for &t in &[0.1, 0.37, 0.77] {
                assert!((fs.eval(t, 1.3, -0.4)[1] - fs.eval(t + 1.0, 1.3, -0.4)[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unperturbed_map_conserves_energy() {
        let fs = FlowSpec::original(corpus::unperturbed(1).unwrap());
        let energy = |(x, y): (f64, f64)| 0.5 * y * y + x.powi(4) / 4.0;
        let mut p = (2.0, 1.0);
        let e0 = energy(p);
        for _ in 0..20 {
            p = time_one_map(&fs, p, 0.0).unwrap().completed().unwrap();
        }
        assert!((energy(p) - e0).abs() < 1e-9 * e0.max(1.0));
    }

    #[test]
    fn map_iterates_compose_to_flow() {
        let fs = FlowSpec::original(corpus::main_n1().unwrap());
        let p0 = (1.2, 0.4);
        let mut p = p0;
        for k in 0..5 {
            p = time_one_map(&fs, p, k as f64).unwrap().completed().unwrap();
        }
        let q = flow(&fs, p0, 0.0, 5.0).unwrap().completed().unwrap();
        assert!((p.0 - q.0).abs() < 1e-8 && (p.1 - q.1).abs() < 1e-8);
        // base time shifted by a period
        let a = time_one_map(&fs, p0, 0.3).unwrap().state();
        let b = time_one_map(&fs, p0, 1.3).unwrap().state();
        assert!((a.0 - b.0).abs() < 2e-12 * 10.0 && (a.1 - b.1).abs() < 2e-11);
    }

    #[test]
    fn tolerance_halving_is_consistent() {
        let spec = corpus::main_n1().unwrap();
        let coarse = FlowSpec::original(spec.clone()).with_tolerance(1e-9);
        let fine = FlowSpec::original(spec).with_tolerance(5e-10);
        let p = (2.0, -1.0);
        let a = time_one_map(&coarse, p, 0.0).unwrap().state();
        let b = time_one_map(&fine, p, 0.0).unwrap().state();
        assert!((a.0 - b.0).abs() < 1e-9 * 10.0 && (a.1 - b.1).abs() < 1e-9 * 10.0);
    }

    #[test]
    fn escape_is_reported() {
        let fs = FlowSpec::new(VectorField::Zero).with_escape_radius(1.0);
        // the guard fires on the first accepted step
        let out = flow(&fs, (2.0, 0.0), 0.0, 1.0).unwrap();
        assert!(out.is_escaped());
    }

    #[test]
    fn determinant_of_original_map() {
        let fs = FlowSpec::original(corpus::main_n1().unwrap()).with_tolerance(1e-13);
        for &p in &[(1.0, 0.5), (-2.0, 3.0), (0.3, -4.0)] {
            let fd = jacobian_det_fd(&fs, p, 0.0, 1e-3).unwrap();
            let var = jacobian_det(&fs, p, 0.0).unwrap();
            assert!((fd - 1.0).abs() < 1e-6, "det {fd} at {p:?}");
            assert!((var - 1.0).abs() < 1e-9, "det {var} at {p:?}");
        }
    }

    #[test]
    fn variational_jacobian_matches_differences() {
        let fs = FlowSpec::original(corpus::main_n2().unwrap()).with_tolerance(1e-13);
        let p = (0.8, -0.3);
        let m = jacobian(&fs, p, 0.2).unwrap();
        let h = 1e-5;
        let f = |x: f64, y: f64| time_one_map(&fs, (x, y), 0.2).unwrap().state();
        let (a, b) = (f(p.0 + h, p.1), f(p.0 - h, p.1));
        let (c, d) = (f(p.0, p.1 + h), f(p.0, p.1 - h));
        let fd = [
            [(a.0 - b.0) / (2.0 * h), (c.0 - d.0) / (2.0 * h)],
            [(a.1 - b.1) / (2.0 * h), (c.1 - d.1) / (2.0 * h)],
        ];
        for i in 0..2 {
            for j in 0..2 {
                assert!((m[i][j] - fd[i][j]).abs() < 1e-5 * (1.0 + fd[i][j].abs()));
            }
        }
    }

    #[test]
    fn unperturbed_twist_fit_is_exact() {
        let a = 100.0;
        let spec = corpus::unperturbed(1).unwrap();
        let chart = ActionAngleChart::new(1).unwrap();
        let sys = ScaledSystem::new(spec, a).unwrap();
        let params = choose_parameters(1, 0.8, 0.1, a).unwrap();
        let nf = iterate_normal_form(&sys, &chart, &params).unwrap();
        let fs = FlowSpec::scaled(sys);
        let fit = fit_twist_form(&fs, &chart, &nf, (2.0, 3.0), (5, 8)).unwrap();
        assert!(fit.f_sup < 1e-9 && fit.g_sup < 1e-9, "F {} G {}", fit.f_sup, fit.g_sup);
        for (rho, alpha) in fit.rho.iter().zip(&fit.alpha_samples) {
            assert!((alpha - chart.frequency(a, *rho)).abs() < 1e-9 * alpha);
        }
        assert!(fit.alpha_discrepancy() < 1e-9 * fit.alpha_samples[0]);
        assert!(fit.twist_min > 0.0);
        assert_eq!(fit.to_csv().lines().count(), 6);
    }

    #[test]
    fn corpus_twist_fit_within_calibration() {
        use crate::calibration::{TWIST_C, TWIST_FORM_C};
        let a = 100.0;
        let chart = ActionAngleChart::new(1).unwrap();
        let sys = ScaledSystem::new(corpus::main_n1().unwrap(), a).unwrap();
        let params = choose_parameters(1, corpus::GAMMA_N1, 0.1, a).unwrap();
        let nf = iterate_normal_form(&sys, &chart, &params).unwrap();
        let fit = fit_twist_form(&FlowSpec::scaled(sys), &chart, &nf, (2.0, 3.0), (6, 8)).unwrap();
        assert!(fit.f_sup <= TWIST_FORM_C * params.eps0 && fit.g_sup <= TWIST_FORM_C * params.eps0);
        assert!(fit.twist_min >= a / TWIST_C, "twist {}", fit.twist_min);
        assert!(fit.alpha_discrepancy() < 1e-3 * fit.alpha_samples[0]);
        // α increases with ρ
        assert!(fit.alpha_samples.windows(2).all(|w| w[1] > w[0]));
    }
}
