//! Iterated symplectic averaging in action-angle variables.
//!
//! The perturbation `R = R_ε + R^ε` is split into an analytic part (smoothed
//! coefficients of the high powers) and a rough part. Each step removes the
//! angle dependence of the analytic residual with a time-dependent generating
//! function `S(μ, θ, t)`:
//!
//! ```text
//! I = μ + ∂θS,   φ = θ + ∂μS,   H' = H(μ + ∂θS, θ, t) + ∂tS
//! ```
//!
//! The new residual is obtained by evaluating `H'` directly on a grid in the
//! new variables `(μ, φ, t)` and projecting back onto the spectral basis.

use std::fmt::Write as _;

use crate::action_angle::{ActionAngleChart, ScaledSystem};
use crate::error::{param_err, Error, Result};
use crate::smoothing::{smooth, TrigPolynomial};
use crate::spectral::{chebyshev_nodes, AngleTimeField, GridSize, MuThetaSlice};

/// Scheme parameters derived from `(n, γ, eps0, A)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub n: usize,
    pub gamma: f64,
    pub a: f64,
    pub eps0: f64,
    /// Smoothing width `ε = (eps0 / A^{n-1})^{1/γ}`.
    pub eps: f64,
    /// Gain per step `ϖ = n - (n-1)/γ`.
    pub varpi: f64,
    /// Number of averaging steps: minimal `N` with `n - ϖN <= -1`.
    pub steps: usize,
    /// Analyticity half-width of the reference orbit in the angle.
    pub s0: f64,
}

impl Parameters {
    /// `A^{-1} (1/eps0)^{N/γ}`; the averaging estimates are stated for
    /// values below `eps0`.
    pub fn largeness(&self) -> f64 {
        (1.0 / self.eps0).powf(self.steps as f64 / self.gamma) / self.a
    }

    pub fn satisfies_largeness(&self) -> bool {
        self.largeness() < self.eps0
    }
}

pub fn choose_parameters(n: usize, gamma: f64, eps0: f64, a: f64) -> Result<Parameters> {
    if n < 1 {
        return param_err("degree n must be at least 1");
    }
    let lower = 1.0 - 1.0 / n as f64;
    if !(gamma > lower && gamma <= 1.0) {
        return Err(Error::Hypothesis(format!(
            "need 1 >= γ > 1 - 1/n = {lower}, got γ = {gamma}"
        )));
    }
    if !(eps0 > 0.0 && eps0 < 1.0) {
        return param_err(format!("need 0 < eps0 < 1, got {eps0}"));
    }
    if !(a > 1.0 / eps0) || !a.is_finite() {
        return param_err(format!("need A > 1/eps0 = {}, got A = {a}", 1.0 / eps0));
    }
    let eps = (eps0 / a.powi(n as i32 - 1)).powf(1.0 / gamma);
    let varpi = n as f64 - (n as f64 - 1.0) / gamma;
    let steps = (((n + 1) as f64 / varpi) - 1e-12).ceil() as usize;
    let s0 = ActionAngleChart::with_resolution(n, 512)?.angle_strip_estimate();
    Ok(Parameters {
        n,
        gamma,
        a,
        eps0,
        eps,
        varpi,
        steps,
        s0,
    })
}

/// Sampling resolution of the scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    /// Initial action window.
    pub window: (f64, f64),
    pub n_mu: usize,
    pub n_theta: usize,
    /// Time samples; `None` picks a power of two resolving products of the
    /// smoothed coefficients.
    pub n_t: Option<usize>,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            window: (1.0, 4.0),
            n_mu: 32,
            n_theta: 64,
            n_t: None,
        }
    }
}

/// `g_j(I, θ) = c^{(j+1)/(n+2)} I^{(j+1)/(n+2)} x0^{j+1}(θ T0) A^{j-n-1} / (j+1)`.
fn monomial(sys: &ScaledSystem, chart: &ActionAngleChart, j: usize, action: f64, x0: f64) -> f64 {
    let lam = (chart.c() * action).powf(chart.alpha());
    (lam * x0).powi(j as i32 + 1) * sys.a_power(j) / (j + 1) as f64
}

/// Pointwise evaluator of the rough part `R^ε`: the low powers `j <= n` and
/// the smoothing remainders `P_j - P_{j,ε}` of the high powers.
#[derive(Debug, Clone)]
pub struct RoughRemainder {
    sys: ScaledSystem,
    chart: ActionAngleChart,
    smoothed: Vec<Option<TrigPolynomial>>,
}

impl RoughRemainder {
    pub fn eval(&self, action: f64, theta: f64, t: f64) -> f64 {
        let n = self.sys.n();
        let (x0, _) = self.chart.reference(theta);
        let mut acc = 0.0;
        for (j, p) in self.sys.spec().coefficients().iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            let coeff = if j <= n {
                p.eval(t)
            } else {
                p.eval(t) - self.smoothed[j].as_ref().map_or(0.0, |q| q.eval(t))
            };
            acc += coeff * monomial(&self.sys, &self.chart, j, action, x0);
        }
        acc
    }
}

/// Result of splitting the perturbation.
#[derive(Debug, Clone)]
pub struct Split {
    pub r_eps: AngleTimeField,
    pub r_sup: RoughRemainder,
    /// Time grid used for the analytic part.
    pub n_t: usize,
}

fn check_consistency(sys: &ScaledSystem, chart: &ActionAngleChart, params: &Parameters) -> Result<()> {
    if sys.n() != chart.n() || sys.n() != params.n {
        return param_err(format!(
            "degree mismatch: system n = {}, chart n = {}, parameters n = {}",
            sys.n(),
            chart.n(),
            params.n
        ));
    }
    if (sys.a() - params.a).abs() > 1e-12 * params.a {
        return param_err(format!("system built for A = {} but parameters use A = {}", sys.a(), params.a));
    }
    Ok(())
}

pub fn split_perturbation(
    sys: &ScaledSystem,
    chart: &ActionAngleChart,
    params: &Parameters,
) -> Result<Split> {
    split_perturbation_with(sys, chart, params, &SchemeConfig::default())
}

pub fn split_perturbation_with(
    sys: &ScaledSystem,
    chart: &ActionAngleChart,
    params: &Parameters,
    config: &SchemeConfig,
) -> Result<Split> {
    check_consistency(sys, chart, params)?;
    let n = sys.n();
    let coeffs = sys.spec().coefficients();
    let mut smoothed = vec![None; coeffs.len()];
    let mut degree = 0;
    for (j, p) in coeffs.iter().enumerate() {
        if j > n && !p.is_zero() {
            let q = smooth(p, params.eps)?;
            degree = degree.max(q.degree());
            smoothed[j] = Some(q);
        }
    }
    let n_t = config
        .n_t
        .unwrap_or_else(|| (6 * degree + 6).next_power_of_two().max(16));
    let (lo, hi) = config.window;
    let grid = GridSize::new(config.n_mu, config.n_theta, n_t)?;
    let r_eps = if smoothed.iter().all(Option::is_none) {
        AngleTimeField::zero(lo, hi)
    } else {
        let nodes = chebyshev_nodes(lo, hi, grid.n_mu);
        let x0: Vec<f64> = (0..grid.n_theta)
            .map(|j| chart.reference(j as f64 / grid.n_theta as f64).0)
            .collect();
        let mut values = vec![0.0; grid.points()];
        for (j, q) in smoothed.iter().enumerate() {
            let Some(q) = q else { continue };
            let pt: Vec<f64> = (0..n_t).map(|m| q.eval(m as f64 / n_t as f64)).collect();
            for (i, &mu) in nodes.iter().enumerate() {
                for (jt, &x) in x0.iter().enumerate() {
                    let g = monomial(sys, chart, j, mu, x);
                    let row = &mut values[(i * grid.n_theta + jt) * n_t..][..n_t];
                    for (v, p) in row.iter_mut().zip(&pt) {
                        *v += g * p;
                    }
                }
            }
        }
        AngleTimeField::from_values(lo, hi, grid, &values)
    };
    Ok(Split {
        r_eps,
        r_sup: RoughRemainder {
            sys: sys.clone(),
            chart: chart.clone(),
            smoothed,
        },
        n_t,
    })
}

/// θ-average `[R](μ, t)`.
pub fn angular_average(r: &AngleTimeField) -> AngleTimeField {
    r.theta_mean()
}

#[derive(Debug, Clone)]
struct Correction {
    f: AngleTimeField,
    f_mu: AngleTimeField,
    f_mumu: AngleTimeField,
    f_t: AngleTimeField,
}

/// Integrable part `H0^k(μ, t) = d A^n μ^{2β} + Σ [R^i](μ, t)`.
#[derive(Debug, Clone)]
pub struct IntegrablePart {
    scale: f64,
    exponent: f64,
    corrections: Vec<Correction>,
}

impl IntegrablePart {
    pub fn unperturbed(chart: &ActionAngleChart, a: f64) -> Self {
        Self {
            scale: chart.d() * a.powi(chart.n() as i32),
            exponent: 2.0 * chart.beta(),
            corrections: Vec::new(),
        }
    }

    /// Adds a θ-independent term.
    pub fn with_correction(&self, f: AngleTimeField) -> Self {
        assert!(f.is_theta_independent());
        let mut out = self.clone();
        let f_mu = f.d_mu();
        out.corrections.push(Correction {
            f_mumu: f_mu.d_mu(),
            f_t: f.d_t(),
            f_mu,
            f,
        });
        out
    }

    pub fn base(&self, mu: f64) -> f64 {
        self.scale * mu.powf(self.exponent)
    }

    pub fn correction(&self, mu: f64, t: f64) -> f64 {
        self.corrections.iter().map(|c| c.f.eval(mu, 0.0, t)).sum()
    }

    pub fn eval(&self, mu: f64, t: f64) -> f64 {
        self.base(mu) + self.correction(mu, t)
    }

    pub fn d_mu(&self, mu: f64, t: f64) -> f64 {
        self.scale * self.exponent * mu.powf(self.exponent - 1.0)
            + self.corrections.iter().map(|c| c.f_mu.eval(mu, 0.0, t)).sum::<f64>()
    }

    pub fn d_mu2(&self, mu: f64, t: f64) -> f64 {
        let e = self.exponent;
        self.scale * e * (e - 1.0) * mu.powf(e - 2.0)
            + self.corrections.iter().map(|c| c.f_mumu.eval(mu, 0.0, t)).sum::<f64>()
    }

    pub fn d_t(&self, mu: f64, t: f64) -> f64 {
        self.corrections.iter().map(|c| c.f_t.eval(mu, 0.0, t)).sum()
    }

    /// `sup |H0^k - d A^n μ^{2β}|` over `[lo, hi] × [0, 1)`.
    pub fn correction_sup(&self, lo: f64, hi: f64) -> f64 {
        self.sample_sup(lo, hi, |mu, t| self.correction(mu, t))
    }

    /// `sup |∂t H0^k|` over `[lo, hi] × [0, 1)`.
    pub fn dt_sup(&self, lo: f64, hi: f64) -> f64 {
        self.sample_sup(lo, hi, |mu, t| self.d_t(mu, t))
    }

    fn sample_sup(&self, lo: f64, hi: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
        let mut sup = 0.0_f64;
        for i in 0..33 {
            let mu = lo + (hi - lo) * i as f64 / 32.0;
            for m in 0..128 {
                sup = sup.max(f(mu, m as f64 / 128.0).abs());
            }
        }
        sup
    }

    pub fn is_autonomous(&self) -> bool {
        self.corrections.iter().all(|c| c.f_t.sup_norm() == 0.0)
    }

    /// `H0^k(μ + δ, t) - H0^k(μ, t)` without cancellation in the base term.
    pub fn increment(&self, mu: f64, delta: f64, t: f64) -> f64 {
        let base = self.base(mu) * (self.exponent * (delta / mu).ln_1p()).exp_m1();
        base + self
            .corrections
            .iter()
            .map(|c| c.f.eval(mu + delta, 0.0, t) - c.f.eval(mu, 0.0, t))
            .sum::<f64>()
    }

    fn frozen_all(&self, n_t: usize) -> Vec<FrozenIntegrable<'_>> {
        let f: Vec<Vec<MuThetaSlice>> = self.corrections.iter().map(|c| c.f.t_slices(n_t)).collect();
        let f_mu: Vec<Vec<MuThetaSlice>> =
            self.corrections.iter().map(|c| c.f_mu.t_slices(n_t)).collect();
        (0..n_t)
            .map(|m| FrozenIntegrable {
                part: self,
                f: f.iter().map(|v| v[m].clone()).collect(),
                f_mu: f_mu.iter().map(|v| v[m].clone()).collect(),
            })
            .collect()
    }
}

struct FrozenIntegrable<'a> {
    part: &'a IntegrablePart,
    f: Vec<MuThetaSlice>,
    f_mu: Vec<MuThetaSlice>,
}

impl FrozenIntegrable<'_> {
    fn d_mu(&self, mu: f64) -> f64 {
        let p = self.part;
        p.scale * p.exponent * mu.powf(p.exponent - 1.0)
            + self.f_mu.iter().map(|s| s.eval(mu, 0.0)).sum::<f64>()
    }

    fn increment(&self, mu: f64, delta: f64) -> f64 {
        let p = self.part;
        let base = p.base(mu) * (p.exponent * (delta / mu).ln_1p()).exp_m1();
        base + self
            .f
            .iter()
            .map(|s| s.eval(mu + delta, 0.0) - s.eval(mu, 0.0))
            .sum::<f64>()
    }
}

/// Solves `∂μH0·∂θS = [R] - R` mode by mode, choosing sampling from the shape of `R`.
pub fn solve_generating(r: &AngleTimeField, h0: &IntegrablePart) -> Result<AngleTimeField> {
    let (kmu, _, kt) = r.shape();
    let n_t = (4 * kt + 4).next_power_of_two().max(8);
    solve_generating_on(r, h0, (kmu + 12).max(24), n_t)
}

/// As [`solve_generating`] with `n_mu` Chebyshev nodes and `n_t` time samples.
pub fn solve_generating_on(
    r: &AngleTimeField,
    h0: &IntegrablePart,
    n_mu: usize,
    n_t: usize,
) -> Result<AngleTimeField> {
    let (lo, hi) = r.window();
    let (_, kq, kt) = r.shape();
    if kq == 0 {
        return Ok(AngleTimeField::zero(lo, hi));
    }
    let n_t = n_t.max((2 * kt + 2).next_power_of_two());
    let nodes = chebyshev_nodes(lo, hi, n_mu);
    let mut mixed = r.mixed_values(&nodes, n_t);
    let nq = 2 * kq + 1;
    let frozen_all = h0.frozen_all(n_t);
    for (m, frozen) in frozen_all.iter().enumerate() {
        for (i, &mu) in nodes.iter().enumerate() {
            let w = frozen.d_mu(mu);
            if !(w.abs() > 1e-300) || !w.is_finite() {
                return Err(Error::Degeneracy(format!(
                    "∂μH0 = {w} at μ = {mu}, t = {}",
                    m as f64 / n_t as f64
                )));
            }
            for qi in 0..nq {
                let q = qi as i64 - kq as i64;
                let v = &mut mixed[(i * nq + qi) * n_t + m];
                if q == 0 {
                    *v = num_complex::Complex64::new(0.0, 0.0);
                } else {
                    *v = -*v / num_complex::Complex64::new(0.0, std::f64::consts::TAU * q as f64 * w);
                }
            }
        }
    }
    Ok(AngleTimeField::from_mixed(lo, hi, n_mu, kq, n_t, &mixed))
}

/// A generating function with the derivatives used by the change of variables.
#[derive(Debug, Clone)]
pub struct Generator {
    pub s: AngleTimeField,
    pub s_mu: AngleTimeField,
    pub s_theta: AngleTimeField,
    pub s_t: AngleTimeField,
}

impl Generator {
    pub fn new(s: AngleTimeField) -> Self {
        Self {
            s_mu: s.d_mu(),
            s_theta: s.d_theta(),
            s_t: s.d_t(),
            s,
        }
    }

    pub fn window(&self) -> (f64, f64) {
        self.s.window()
    }
}

/// Maximum fixed-point iterations for the implicit angle / action equations.
const MAX_FIXED_POINT: usize = 100;
const FIXED_POINT_TOL: f64 = 1e-13;

/// Solves `θ = φ - g(θ)` by fixed-point iteration.
fn solve_angle(g: impl Fn(f64) -> f64, phi: f64) -> Option<f64> {
    let mut theta = phi - g(phi);
    for _ in 0..MAX_FIXED_POINT {
        let next = phi - g(theta);
        if (next - theta).abs() <= FIXED_POINT_TOL {
            return Some(next);
        }
        theta = next;
    }
    None
}

/// One row of the transform log.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub sup_s: f64,
    pub sup_dts: f64,
    pub sup_residual: f64,
    pub window_lo: f64,
    pub window_hi: f64,
    /// `sup |I - μ|` over the step's grid.
    pub sup_u: f64,
    /// `sup |θ - φ|` over the step's grid.
    pub sup_v: f64,
}

#[derive(Debug, Clone)]
pub struct NormalFormState {
    pub params: Parameters,
    pub step: usize,
    pub h0: IntegrablePart,
    pub residual: AngleTimeField,
    pub window: (f64, f64),
    pub generators: Vec<Generator>,
    pub transform_log: Vec<StepRecord>,
    grid: GridSize,
}

impl NormalFormState {
    /// State before any averaging step.
    pub fn initial(
        sys: &ScaledSystem,
        chart: &ActionAngleChart,
        params: &Parameters,
        config: &SchemeConfig,
    ) -> Result<(Self, RoughRemainder)> {
        let split = split_perturbation_with(sys, chart, params, config)?;
        let (lo, hi) = config.window;
        let record = StepRecord {
            step: 0,
            sup_s: 0.0,
            sup_dts: 0.0,
            sup_residual: split.r_eps.sup_norm(),
            window_lo: lo,
            window_hi: hi,
            sup_u: 0.0,
            sup_v: 0.0,
        };
        Ok((
            Self {
                params: params.clone(),
                step: 0,
                h0: IntegrablePart::unperturbed(chart, params.a),
                residual: split.r_eps,
                window: config.window,
                generators: Vec::new(),
                transform_log: vec![record],
                grid: GridSize::new(config.n_mu, config.n_theta, split.n_t)?,
            },
            split.r_sup,
        ))
    }

    /// The transform log as CSV.
    pub fn transform_log_csv(&self) -> String {
        let mut out = String::from("step,sup_S,sup_dtS,sup_residual,window_lo,window_hi\n");
        for r in &self.transform_log {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{},{}",
                r.step, r.sup_s, r.sup_dts, r.sup_residual, r.window_lo, r.window_hi
            );
        }
        out
    }

    /// Residual ratios `sup|R^{k+1}| / sup|R^k|`.
    pub fn residual_ratios(&self) -> Vec<f64> {
        self.transform_log
            .windows(2)
            .map(|w| w[1].sup_residual / w[0].sup_residual)
            .collect()
    }

    /// Largest sup-norm of `∂μ^p ∂θ^q R` with `p + q <= 2`.
    pub fn residual_c2_norm(&self) -> f64 {
        let r = &self.residual;
        let r_mu = r.d_mu();
        let r_th = r.d_theta();
        [
            r.clone(),
            r_mu.d_mu(),
            r_mu.d_theta(),
            r_th.d_theta(),
            r_mu,
            r_th,
        ]
        .iter()
        .map(|f| f.sup_norm())
        .fold(0.0, f64::max)
    }

    /// Change of variables frozen at time `t`.
    pub fn transform_at(&self, t: f64) -> FrozenTransform {
        FrozenTransform {
            steps: self
                .generators
                .iter()
                .map(|g| FrozenStep {
                    window: g.window(),
                    s_mu: g.s_mu.t_slice(t),
                    s_theta: g.s_theta.t_slice(t),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct FrozenStep {
    window: (f64, f64),
    s_mu: MuThetaSlice,
    s_theta: MuThetaSlice,
}

/// The accumulated map `Φ: (ρ, ξ) -> (I, θ)` at a fixed time.
#[derive(Debug, Clone)]
pub struct FrozenTransform {
    steps: Vec<FrozenStep>,
}

impl FrozenTransform {
    /// `(ρ, ξ) -> (I, θ)`: final normal-form variables to the action-angle
    /// variables of the reference oscillator.
    pub fn to_original(&self, rho: f64, xi: f64) -> Result<(f64, f64)> {
        let (mut mu, mut phi) = (rho, xi);
        for (k, st) in self.steps.iter().enumerate().rev() {
            if mu < st.window.0 || mu > st.window.1 {
                return Err(Error::Domain(format!(
                    "action {mu} outside the window of step {}",
                    k + 1
                )));
            }
            let ser_mu = st.s_mu.at_mu(mu);
            let theta = solve_angle(|th| ser_mu.eval(th), phi).ok_or_else(|| {
                Error::Numerical(format!("angle inversion failed at step {}", k + 1))
            })?;
            let action = mu + st.s_theta.eval(mu, theta);
            mu = action;
            phi = theta;
        }
        Ok((mu, phi))
    }

    /// `(I, θ) -> (ρ, ξ)`.
    pub fn from_original(&self, action: f64, theta: f64) -> Result<(f64, f64)> {
        let (mut a, th) = (action, theta);
        let mut th = th;
        for (k, st) in self.steps.iter().enumerate() {
            let (lo, hi) = st.window;
            let mut mu = a;
            let mut converged = false;
            for _ in 0..MAX_FIXED_POINT {
                if mu < lo || mu > hi {
                    return Err(Error::Domain(format!(
                        "action {mu} left the window [{lo}, {hi}] of step {}",
                        k + 1
                    )));
                }
                let next = a - st.s_theta.eval(mu, th);
                if (next - mu).abs() <= FIXED_POINT_TOL * a.abs().max(1.0) {
                    mu = next;
                    converged = true;
                    break;
                }
                mu = next;
            }
            if !converged {
                return Err(Error::Numerical(format!("action inversion failed at step {}", k + 1)));
            }
            let phi = th + st.s_mu.eval(mu, th);
            a = mu;
            th = phi;
        }
        Ok((a, th))
    }
}

/// One averaging step: `H0^{k+1} = H0^k + [R^k]` and `R^{k+1}` by direct
/// evaluation of the transformed Hamiltonian.
pub fn apply_step(state: &NormalFormState) -> Result<NormalFormState> {
    let k = state.step + 1;
    let fail = |reason: String| Error::StepFailure { step: k, reason };
    let r = &state.residual;
    let (lo, hi) = state.window;
    let avg = angular_average(r);
    let s = solve_generating_on(r, &state.h0, state.grid.n_mu.max(r.shape().0 + 12), state.grid.n_t)
        .map_err(|e| match e {
            Error::Degeneracy(m) => fail(format!("twist degenerates: {m}")),
            other => other,
        })?;
    let gen = Generator::new(s);
    let sup_s_theta = gen.s_theta.sup_norm();
    let collar = 2.0 * sup_s_theta;
    let (nlo, nhi) = (lo + collar, hi - collar);
    if nlo >= nhi {
        return Err(fail(format!(
            "collar {collar} exhausts the window [{lo}, {hi}]; increase A"
        )));
    }
    let GridSize { n_mu, n_theta, n_t } = state.grid;
    let nodes = chebyshev_nodes(nlo, nhi, n_mu);
    let mut values = vec![0.0; state.grid.points()];
    let (mut sup_u, mut sup_v) = (0.0_f64, 0.0_f64);
    let r_sls = r.t_slices(n_t);
    let avg_sls = avg.t_slices(n_t);
    let smu_sls = gen.s_mu.t_slices(n_t);
    let sth_sls = gen.s_theta.t_slices(n_t);
    let st_sls = gen.s_t.t_slices(n_t);
    let h0_sls = state.h0.frozen_all(n_t);
    for m in 0..n_t {
        let t = m as f64 / n_t as f64;
        let (r_sl, avg_sl) = (&r_sls[m], &avg_sls[m]);
        let (smu_sl, sth_sl, st_sl) = (&smu_sls[m], &sth_sls[m], &st_sls[m]);
        let h0 = &h0_sls[m];
        for (i, &mu) in nodes.iter().enumerate() {
            let smu = smu_sl.at_mu(mu);
            let sth = sth_sl.at_mu(mu);
            let st = st_sl.at_mu(mu);
            let mean = avg_sl.eval(mu, 0.0);
            for j in 0..n_theta {
                let phi = j as f64 / n_theta as f64;
                let theta = solve_angle(|th| smu.eval(th), phi).ok_or_else(|| {
                    fail(format!(
                        "angle fixed point did not converge at μ = {mu}, φ = {phi}, t = {t}; increase A"
                    ))
                })?;
                let delta = sth.eval(theta);
                sup_u = sup_u.max(delta.abs());
                sup_v = sup_v.max((theta - phi).abs());
                values[(i * n_theta + j) * n_t + m] = h0.increment(mu, delta)
                    + r_sl.eval(mu + delta, theta)
                    - mean
                    + st.eval(theta);
            }
        }
    }
    let residual = AngleTimeField::from_values(nlo, nhi, state.grid, &values);
    let record = StepRecord {
        step: k,
        sup_s: gen.s.sup_norm(),
        sup_dts: gen.s_t.sup_norm(),
        sup_residual: residual.sup_norm(),
        window_lo: nlo,
        window_hi: nhi,
        sup_u,
        sup_v,
    };
    let mut generators = state.generators.clone();
    generators.push(gen);
    let mut log = state.transform_log.clone();
    log.push(record);
    Ok(NormalFormState {
        params: state.params.clone(),
        step: k,
        h0: state.h0.with_correction(avg),
        residual,
        window: (nlo, nhi),
        generators,
        transform_log: log,
        grid: state.grid,
    })
}

/// Final normal form after `N` steps, together with the rough remainder.
#[derive(Debug, Clone)]
pub struct NormalForm {
    pub state: NormalFormState,
    pub rough: RoughRemainder,
}

pub fn iterate_normal_form(
    sys: &ScaledSystem,
    chart: &ActionAngleChart,
    params: &Parameters,
) -> Result<NormalForm> {
    iterate_normal_form_with(sys, chart, params, &SchemeConfig::default())
}

pub fn iterate_normal_form_with(
    sys: &ScaledSystem,
    chart: &ActionAngleChart,
    params: &Parameters,
    config: &SchemeConfig,
) -> Result<NormalForm> {
    let (mut state, rough) = NormalFormState::initial(sys, chart, params, config)?;
    for _ in 0..params.steps {
        state = apply_step(&state)?;
    }
    Ok(NormalForm { state, rough })
}

/// `(min, max)` of `|∂²μ H0^k|` over the current window and one period.
pub fn twist_bounds(state: &NormalFormState) -> Result<(f64, f64)> {
    twist_bounds_on(state, state.window.0, state.window.1)
}

/// `(min, max)` of `|∂²μ H0^k|` over `[lo, hi] × [0, 1)`.
pub fn twist_bounds_on(state: &NormalFormState, lo: f64, hi: f64) -> Result<(f64, f64)> {
    if state.step == 0 {
        return param_err("twist bounds need at least one completed step");
    }
    if lo < state.window.0 - 1e-12 || hi > state.window.1 + 1e-12 || lo >= hi {
        return param_err(format!(
            "interval [{lo}, {hi}] not inside the window [{}, {}]",
            state.window.0, state.window.1
        ));
    }
    let (n_mu, n_t) = (41, 64);
    let mut lower = f64::INFINITY;
    let mut upper = 0.0_f64;
    let mut sign = 0.0;
    for m in 0..n_t {
        let t = m as f64 / n_t as f64;
        for i in 0..n_mu {
            let mu = lo + (hi - lo) * i as f64 / (n_mu - 1) as f64;
            let v = state.h0.d_mu2(mu, t);
            if sign == 0.0 {
                sign = v.signum();
            }
            if v.signum() != sign || v == 0.0 {
                return Err(Error::TwistLoss(format!("∂²μH0 changes sign near μ = {mu}, t = {t}")));
            }
            lower = lower.min(v.abs());
            upper = upper.max(v.abs());
        }
    }
    if !(lower > 0.0) {
        return Err(Error::TwistLoss(format!("lower twist bound {lower}")));
    }
    Ok((lower, upper))
}

/// `∫₀¹ sup_{ρ, ξ} |R^ε(Φ(ρ, ξ, t), t)| dt` by sampling `n_rho × n_xi` points
/// of the final window and `n_t` times.
pub fn rough_integrated_size(
    nf: &NormalForm,
    n_rho: usize,
    n_xi: usize,
    n_t: usize,
) -> Result<f64> {
    let (lo, hi) = nf.state.window;
    let mut acc = 0.0;
    for m in 0..n_t {
        let t = (m as f64 + 0.5) / n_t as f64;
        let phi = nf.state.transform_at(t);
        let mut sup = 0.0_f64;
        for i in 0..n_rho {
            let rho = lo + (hi - lo) * i as f64 / (n_rho - 1).max(1) as f64;
            for j in 0..n_xi {
                let (action, theta) = phi.to_original(rho, j as f64 / n_xi as f64)?;
                sup = sup.max(nf.rough.eval(action, theta, t).abs());
            }
        }
        acc += sup;
    }
    Ok(acc / n_t as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use std::f64::consts::TAU;

    #[test]
    fn parameter_examples() {
        let p = choose_parameters(1, 0.8, 0.1, 100.0).unwrap();
        assert_eq!(p.varpi, 1.0);
        assert_eq!(p.steps, 2);
        assert!((p.eps - 0.1_f64.powf(1.25)).abs() < 1e-15);
        assert!((p.eps - 0.0562341325190349).abs() < 1e-12);
        let p = choose_parameters(2, 0.9, 0.1, 100.0).unwrap();
        assert!((p.varpi - (2.0 - 1.0 / 0.9)).abs() < 1e-15);
        assert_eq!(p.steps, 4);
        assert!((p.eps - (0.1_f64 / 100.0).powf(1.0 / 0.9)).abs() < 1e-15);
        assert!(p.s0 > 0.05 && p.s0 < 2.0);
        match choose_parameters(2, 0.5, 0.1, 100.0) {
            Err(Error::Hypothesis(m)) => assert!(m.contains("1 - 1/n")),
            other => panic!("expected rejection, got {other:?}"),
        }
        assert!(choose_parameters(1, 0.8, 0.1, 5.0).is_err());
        assert!(choose_parameters(1, 0.8, 1.5, 100.0).is_err());
    }

    #[test]
    fn step_count_is_minimal() {
        for &(n, g) in &[(1usize, 0.7), (2, 0.6), (2, 0.95), (3, 0.7), (3, 1.0)] {
            let p = choose_parameters(n, g, 0.1, 1e3).unwrap();
            let nn = p.steps as f64;
            assert!(n as f64 - p.varpi * nn <= -1.0 + 1e-12);
            assert!(n as f64 - p.varpi * (nn - 1.0) > -1.0);
            assert!(p.varpi > 0.0 && p.varpi <= 1.0);
        }
    }

    fn setup(spec: crate::coefficients::EquationSpec, a: f64) -> (ScaledSystem, ActionAngleChart, Parameters) {
        let n = spec.n();
        let gamma = spec.gamma();
        let sys = ScaledSystem::new(spec, a).unwrap();
        let chart = ActionAngleChart::new(n).unwrap();
        let params = choose_parameters(n, gamma, 0.1, a).unwrap();
        (sys, chart, params)
    }

    #[test]
    fn split_recomposes_remainder() {
        use rand::{Rng, SeedableRng};
        let (sys, chart, params) = setup(corpus::main_n1().unwrap(), 100.0);
        let split = split_perturbation(&sys, &chart, &params).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut worst = 0.0_f64;
        for _ in 0..1000 {
            let i = rng.gen_range(1.0..4.0);
            let th = rng.gen_range(0.0..1.0);
            let t = rng.gen_range(0.0..1.0);
            let sum = split.r_eps.eval(i, th, t) + split.r_sup.eval(i, th, t);
            worst = worst.max((sum - sys.remainder(&chart, i, th, t)).abs());
        }
        assert!(worst <= 1e-9, "recomposition defect {worst}");
    }

    #[test]
    fn unperturbed_split_is_zero() {
        let (sys, chart, params) = setup(corpus::unperturbed(1).unwrap(), 100.0);
        let split = split_perturbation(&sys, &chart, &params).unwrap();
        assert_eq!(split.r_eps.sup_norm(), 0.0);
        assert_eq!(split.r_sup.eval(2.0, 0.3, 0.4), 0.0);
        let nf = iterate_normal_form(&sys, &chart, &params).unwrap();
        for rec in &nf.state.transform_log {
            assert_eq!(rec.sup_residual, 0.0);
            assert_eq!(rec.sup_s, 0.0);
        }
        assert_eq!(nf.state.window, (1.0, 4.0));
        assert_eq!(nf.state.h0.eval(2.5, 0.3), chart.h0(100.0, 2.5));
    }

    #[test]
    fn generating_function_single_mode() {
        let chart = ActionAngleChart::new(1).unwrap();
        let h0 = IntegrablePart::unperturbed(&chart, 50.0);
        let grid = GridSize::new(32, 16, 8).unwrap();
        let a = |mu: f64, t: f64| mu.sqrt() * (1.0 + 0.5 * (TAU * t).cos());
        let r = AngleTimeField::from_fn(1.0, 4.0, grid, |mu, th, t| a(mu, t) * (TAU * th).cos());
        assert!(angular_average(&r).sup_norm() < 1e-15);
        let s = solve_generating(&r, &h0).unwrap();
        for &(mu, th, t) in &[(1.2, 0.1, 0.3), (2.7, 0.8, 0.55), (3.9, 0.45, 0.05)] {
            let expect = -a(mu, t) * (TAU * th).sin() / (TAU * chart.frequency(50.0, mu));
            assert!((s.eval(mu, th, t) - expect).abs() < 1e-12);
        }
        let flat = AngleTimeField::from_fn(1.0, 4.0, grid, |mu, _, t| mu * (TAU * t).sin());
        assert_eq!(angular_average(&flat), flat);
        assert_eq!(solve_generating(&flat, &h0).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn defining_relation_on_corpus() {
        let (sys, chart, params) = setup(corpus::main_n1().unwrap(), 100.0);
        let (state, _) = NormalFormState::initial(&sys, &chart, &params, &SchemeConfig::default()).unwrap();
        let r = &state.residual;
        let s = solve_generating(r, &state.h0).unwrap();
        let s_th = s.d_theta();
        let mean = angular_average(r);
        let mut worst = 0.0_f64;
        for i in 0..23 {
            let mu = 1.0 + 3.0 * i as f64 / 22.0;
            for j in 0..37 {
                let th = j as f64 / 37.0;
                for m in 0..29 {
                    let t = m as f64 / 29.0;
                    let v = state.h0.d_mu(mu, t) * s_th.eval(mu, th, t) + r.eval(mu, th, t)
                        - mean.eval(mu, th, t);
                    worst = worst.max(v.abs());
                }
            }
        }
        assert!(worst <= 1e-10, "defining relation residual {worst}");
        let quad = (0..64).map(|j| r.eval(2.2, j as f64 / 64.0, 0.3)).sum::<f64>() / 64.0;
        assert!((mean.eval(2.2, 0.0, 0.3) - quad).abs() < 1e-12);
    }

    #[test]
    fn zero_residual_is_fixed() {
        let (sys, chart, params) = setup(corpus::unperturbed(1).unwrap(), 100.0);
        let (state, _) = NormalFormState::initial(&sys, &chart, &params, &SchemeConfig::default()).unwrap();
        let next = apply_step(&state).unwrap();
        assert_eq!(next.window, state.window);
        assert_eq!(next.residual.sup_norm(), 0.0);
        assert_eq!(next.generators[0].s.sup_norm(), 0.0);
    }

    #[test]
    fn twist_bounds_closed_form() {
        let (sys, chart, params) = setup(corpus::unperturbed(1).unwrap(), 100.0);
        let nf = iterate_normal_form(&sys, &chart, &params).unwrap();
        let (lo, hi) = twist_bounds_on(&nf.state, 2.0, 3.0).unwrap();
        let e = 2.0 * chart.beta();
        let exact = |i: f64| chart.d() * 100.0 * e * (e - 1.0) * i.powf(e - 2.0);
        assert!((lo - exact(3.0).abs()).abs() < 1e-12 * lo);
        assert!((hi - exact(2.0).abs()).abs() < 1e-12 * hi);
    }

    #[test]
    fn corpus_n1_bounds() {
        use crate::calibration::*;
        let a = 100.0;
        let (sys, chart, params) = setup(corpus::main_n1().unwrap(), a);
        let nf = iterate_normal_form(&sys, &chart, &params).unwrap();
        let st = &nf.state;
        let first = &st.transform_log[1];
        assert!(first.sup_s <= GENERATOR_C / a);
        assert!(first.sup_u <= COORDINATE_C / a && first.sup_v <= COORDINATE_C / a);
        assert!(st.residual_c2_norm() <= FINAL_RESIDUAL_C * params.eps0);
        let (lo, hi) = st.window;
        assert!(st.h0.correction_sup(lo, hi) <= CORRECTION_C);
        let growth = params.eps0.powf(-1.0 / params.gamma);
        assert!(st.h0.dt_sup(lo, hi) <= DT_GROWTH_C * growth);
        // windows nest and shrink by O(1/A)
        for w in st.transform_log.windows(2) {
            assert!(w[1].window_lo >= w[0].window_lo && w[1].window_hi <= w[0].window_hi);
            assert!(w[1].window_lo - w[0].window_lo <= COORDINATE_C * 2.0 / a);
        }
        let (tl, tu) = twist_bounds_on(st, 2.0, 3.0).unwrap();
        assert!(tl > 0.0 && tu / tl <= 10.0);
        let mut rough = 0.0_f64;
        for i in 0..13 {
            for j in 0..32 {
                for m in 0..200 {
                    let v = nf.rough.eval(1.0 + 0.25 * i as f64, j as f64 / 32.0, (m as f64 + 0.5) / 200.0);
                    rough = rough.max(v.abs());
                }
            }
        }
        assert!(rough <= ROUGH_C * params.eps0);
        assert!(rough_integrated_size(&nf, 5, 16, 32).unwrap() <= ROUGH_C * params.eps0);
    }

    #[test]
    fn step_maps_are_symplectic_and_invertible() {
        let a = 100.0;
        let (sys, chart, params) = setup(corpus::main_n1().unwrap(), a);
        let nf = iterate_normal_form(&sys, &chart, &params).unwrap();
        let st = &nf.state;
        for t in [0.0, 0.37] {
            let full = st.transform_at(t);
            for k in 0..full.steps.len() {
                let one = FrozenTransform {
                    steps: vec![full.steps[k].clone()],
                };
                let h = 1e-5;
                for &(mu, phi) in &[(2.0, 0.1), (2.5, 0.6), (3.2, 0.93)] {
                    let f = |m: f64, p: f64| one.to_original(m, p).unwrap();
                    let (a1, b1) = f(mu + h, phi);
                    let (a0, b0) = f(mu - h, phi);
                    let (c1, d1) = f(mu, phi + h);
                    let (c0, d0) = f(mu, phi - h);
                    let det = ((a1 - a0) * (d1 - d0) - (b1 - b0) * (c1 - c0)) / (4.0 * h * h);
                    assert!((det - 1.0).abs() < 1e-6, "step {} det {det}", k + 1);
                }
            }
            for &(rho, xi) in &[(2.0, 0.0), (2.7, 0.45), (3.0, 0.99)] {
                let (i, th) = full.to_original(rho, xi).unwrap();
                assert!((i - rho).abs() < COORDINATE_SCALE / a && (th - xi).abs() < COORDINATE_SCALE / a);
                let (r2, x2) = full.from_original(i, th).unwrap();
                assert!((r2 - rho).abs() < 1e-11 && (x2 - xi).abs() < 1e-11);
            }
        }
    }

    /// `Φ - id` in units of `1/A`.
    const COORDINATE_SCALE: f64 = crate::calibration::COORDINATE_C * 2.0;

    #[test]
    fn first_order_taylor_cross_check() {
        // R^1 ≈ ∂tS + ∂μ(R - [R]) ∂θS + ½ ∂²μH0 (∂θS)² up to O(A^{-2})
        let a = 200.0;
        let (sys, chart, params) = setup(corpus::main_n1().unwrap(), a);
        let (state, _) = NormalFormState::initial(&sys, &chart, &params, &SchemeConfig::default()).unwrap();
        let next = apply_step(&state).unwrap();
        let g = &next.generators[0];
        let r = &state.residual;
        let r_mu = r.d_mu();
        let mean_mu = angular_average(r).d_mu();
        let mut worst = 0.0_f64;
        let mut scale = 0.0_f64;
        for &(mu, phi, t) in &[(2.0, 0.2, 0.1), (2.6, 0.7, 0.45), (3.1, 0.05, 0.8), (1.5, 0.5, 0.3)] {
            let st = g.s_t.eval(mu, phi, t);
            let sth = g.s_theta.eval(mu, phi, t);
            let approx = st
                + (r_mu.eval(mu, phi, t) - mean_mu.eval(mu, phi, t)) * sth
                + 0.5 * state.h0.d_mu2(mu, t) * sth * sth;
            let exact = next.residual.eval(mu, phi, t);
            worst = worst.max((exact - approx).abs());
            scale = scale.max(exact.abs());
        }
        assert!(worst < 0.1 * scale, "taylor defect {worst} vs {scale}");
    }

    #[test]
    fn csv_has_one_row_per_step() {
        let (sys, chart, params) = setup(corpus::unperturbed(1).unwrap(), 100.0);
        let nf = iterate_normal_form(&sys, &chart, &params).unwrap();
        let csv = nf.state.transform_log_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "step,sup_S,sup_dtS,sup_residual,window_lo,window_hi");
        assert_eq!(lines.len(), 1 + params.steps + 1);
    }
}
