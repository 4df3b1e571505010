//! Rescaling, the reference oscillator and its action-angle chart.
//!
//! Substituting `X = A x`, `y = A^{-n} x'` turns the Duffing equation into the
//! Hamiltonian system with
//!
//! ```text
//! H = A^n (y^2/2 + x^{2n+2}/(2n+2)) + Σ_j P_j(t) x^{j+1} A^{j-n-1} / (j+1).
//! ```
//!
//! The reference orbit `(x0, y0)` of `H0 = y^2/2 + x^{2n+2}/(2n+2)` through
//! `(1, 0)` gives the symplectic chart
//! `Ψ0(I, θ) = ((cI)^α x0(θT0), (cI)^β y0(θT0))` in which `H0 = d A^n I^{2β}`.

use std::f64::consts::TAU;

use crate::coefficients::EquationSpec;
use crate::error::{param_err, Error, Result};
use crate::integrator::{self, OdeSystem, Options};
use crate::quadrature;

/// `(X, X') -> (X/A, A^{-(n+1)} X')`.
///
/// `y` is `A^{-n}` times the velocity of the rescaled coordinate `X/A`.
pub fn rescale_state(x: f64, xdot: f64, a: f64, n: usize) -> Result<(f64, f64)> {
    if !(a > 0.0 && a.is_finite()) {
        return param_err(format!("scaling parameter must be positive, got {a}"));
    }
    Ok((x / a, xdot / a.powi(n as i32 + 1)))
}

/// Inverse of [`rescale_state`].
pub fn unscale_state(x: f64, y: f64, a: f64, n: usize) -> Result<(f64, f64)> {
    if !(a > 0.0 && a.is_finite()) {
        return param_err(format!("scaling parameter must be positive, got {a}"));
    }
    Ok((x * a, y * a.powi(n as i32 + 1)))
}

/// Minimal period of the reference orbit,
/// `T0 = 4√(n+1) ∫_0^1 (1 - x^{2n+2})^{-1/2} dx`.
///
/// The substitution `x = 1 - s^2` removes the endpoint singularity; the
/// integrand `2s / √(1 - (1-s^2)^{2n+2})` is then smooth on `[0, 1]`.
pub fn min_period(n: usize) -> Result<f64> {
    if n < 1 {
        return param_err("degree parameter n must be at least 1");
    }
    let m = (2 * n + 2) as f64;
    let integrand = |s: f64| {
        if s == 0.0 {
            return 2.0 / m.sqrt();
        }
        let gap = -(m * (-s * s).ln_1p()).exp_m1();
        2.0 * s / gap.sqrt()
    };
    let integral = quadrature::integrate(integrand, 0.0, 1.0, 1e-15, 1e-14)?;
    Ok(4.0 * ((n + 1) as f64).sqrt() * integral)
}

/// Reference vector field `x' = y, y' = -x^{2n+1}`.
#[derive(Debug, Clone, Copy)]
pub struct Auxiliary {
    pub n: usize,
}

impl OdeSystem<2> for Auxiliary {
    fn rhs(&self, _t: f64, s: &[f64; 2], _anchor: f64) -> [f64; 2] {
        [s[1], -s[0].powi(2 * self.n as i32 + 1)]
    }
}

/// `(n+1) y^2 + x^{2n+2} - 1`.
pub fn energy_defect(n: usize, x: f64, y: f64) -> f64 {
    (n + 1) as f64 * y * y + x.powi(2 * n as i32 + 2) - 1.0
}

/// Clockwise polar angle `-atan2(y, x)` in `[0, 2π)`; increases along the orbit.
fn clockwise_angle(x: f64, y: f64) -> f64 {
    (-y.atan2(x)).rem_euclid(TAU)
}

/// Dense samples of the reference orbit on `[0, T0]`.
#[derive(Debug, Clone)]
pub struct OrbitTable {
    n: usize,
    period: f64,
    /// Node `i` sits at time `i·period/len`; states are projected onto the
    /// energy level after integration.
    nodes: Vec<(f64, f64)>,
    /// Clockwise polar angle of each node, unwrapped and increasing from 0.
    angles: Vec<f64>,
    max_raw_defect: f64,
    closure_error: f64,
}

const TAYLOR_ORDER: usize = 18;

impl OrbitTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn resolution(&self) -> usize {
        self.nodes.len()
    }

    /// Node states `(x0(t_i), y0(t_i))`, `t_i = i·T0/resolution`.
    pub fn nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }

    /// Largest `|(n+1) y^2 + x^{2n+2} - 1|` over the integrated nodes, measured
    /// before projection onto the energy level.
    pub fn max_raw_defect(&self) -> f64 {
        self.max_raw_defect
    }

    /// Largest identity defect of the stored (projected) nodes.
    pub fn max_node_defect(&self) -> f64 {
        self.nodes
            .iter()
            .map(|&(x, y)| energy_defect(self.n, x, y).abs())
            .fold(0.0, f64::max)
    }

    /// Distance of the integrated state at `T0` from `(1, 0)`.
    pub fn closure_error(&self) -> f64 {
        self.closure_error
    }

    /// `(x0(τ), y0(τ))` for any real `τ` by a Taylor series about the nearest node.
    pub fn state_at(&self, tau: f64) -> (f64, f64) {
        let m = self.nodes.len();
        let h = self.period / m as f64;
        let r = tau.rem_euclid(self.period);
        let idx = (r / h).round() as usize;
        let dt = r - idx as f64 * h;
        let (x, y) = self.nodes[idx % m];
        taylor_step(self.n, x, y, dt)
    }

    /// Unwrapped clockwise angle of the orbit at time `τ ∈ [0, T0]`, given a
    /// nearby reference value to fix the branch.
    fn angle_near(&self, tau: f64, reference: f64) -> f64 {
        let (x, y) = self.state_at(tau);
        let raw = clockwise_angle(x, y);
        raw + TAU * ((reference - raw) / TAU).round()
    }

    /// Time `τ ∈ [0, T0)` at which the orbit passes through the ray of
    /// clockwise angle `psi`.
    pub fn time_of_angle(&self, psi: f64) -> f64 {
        let psi = psi.rem_euclid(TAU);
        let m = self.nodes.len();
        let h = self.period / m as f64;
        // angles[i] <= psi < angles[i+1], with angles[m] = 2π
        let i = self.angles.partition_point(|a| *a <= psi).saturating_sub(1);
        let a0 = self.angles[i];
        let a1 = if i + 1 < m { self.angles[i + 1] } else { TAU };
        let mut tau = i as f64 * h + h * ((psi - a0) / (a1 - a0)).clamp(0.0, 1.0);
        for _ in 0..8 {
            let (x, y) = self.state_at(tau);
            let g = self.angle_near(tau, psi) - psi;
            let dg = (x.powi(2 * self.n as i32 + 2) + y * y) / (x * x + y * y);
            let step = g / dg;
            tau -= step;
            if step.abs() < 1e-15 * self.period {
                break;
            }
        }
        tau.rem_euclid(self.period)
    }
}

/// Taylor expansion of the reference flow: state after time `dt` from `(x, y)`.
fn taylor_step(n: usize, x: f64, y: f64, dt: f64) -> (f64, f64) {
    let p = 2 * n + 1;
    let mut xs = [0.0; TAYLOR_ORDER + 1];
    let mut ys = [0.0; TAYLOR_ORDER + 1];
    // pw[i] holds the series of x^{i+1}
    let mut pw = vec![[0.0; TAYLOR_ORDER + 1]; p];
    xs[0] = x;
    ys[0] = y;
    for k in 0..TAYLOR_ORDER {
        pw[0][k] = xs[k];
        for i in 1..p {
            let mut acc = 0.0;
            for j in 0..=k {
                acc += xs[j] * pw[i - 1][k - j];
            }
            pw[i][k] = acc;
        }
        xs[k + 1] = ys[k] / (k + 1) as f64;
        ys[k + 1] = -pw[p - 1][k] / (k + 1) as f64;
    }
    let mut xr = 0.0;
    let mut yr = 0.0;
    for k in (0..=TAYLOR_ORDER).rev() {
        xr = xr * dt + xs[k];
        yr = yr * dt + ys[k];
    }
    (xr, yr)
}

/// Integrates the reference orbit from `(1, 0)` and tabulates one period.
pub fn reference_orbit(n: usize, resolution: usize) -> Result<OrbitTable> {
    if resolution < 256 {
        return param_err(format!("orbit resolution must be at least 256, got {resolution}"));
    }
    let period = min_period(n)?;
    let sys = Auxiliary { n };
    let opts = Options {
        rtol: 1e-14,
        atol: 1e-15,
        ..Options::default()
    };
    let h = period / resolution as f64;
    let mut state = [1.0, 0.0];
    let mut nodes = Vec::with_capacity(resolution);
    let mut max_raw_defect: f64 = 0.0;
    for i in 0..resolution {
        let defect = energy_defect(n, state[0], state[1]);
        if !defect.is_finite() {
            return Err(Error::Numerical(format!("orbit integration broke down at node {i}")));
        }
        max_raw_defect = max_raw_defect.max(defect.abs());
        nodes.push(project_to_level(n, state[0], state[1]));
        state = integrator::solve(&sys, i as f64 * h, state, (i + 1) as f64 * h, &opts)
            .map_err(|e| Error::Numerical(format!("orbit integration failed at node {i}: {e}")))?;
    }
    max_raw_defect = max_raw_defect.max(energy_defect(n, state[0], state[1]).abs());
    let closure_error = (state[0] - 1.0).hypot(state[1]);
    let mut angles = Vec::with_capacity(resolution);
    let mut prev = 0.0;
    for &(x, y) in &nodes {
        let raw = clockwise_angle(x, y);
        let a = raw + TAU * ((prev - raw) / TAU).round();
        angles.push(a);
        prev = a;
    }
    angles[0] = 0.0;
    if angles.windows(2).any(|w| w[1] <= w[0]) || *angles.last().unwrap() >= TAU {
        return Err(Error::Numerical("orbit angle table is not monotone".into()));
    }
    Ok(OrbitTable {
        n,
        period,
        nodes,
        angles,
        max_raw_defect,
        closure_error,
    })
}

/// Radial projection of `(x, y)` onto `(n+1) y^2 + x^{2n+2} = 1`.
fn project_to_level(n: usize, x: f64, y: f64) -> (f64, f64) {
    // g(λ) = (n+1) λ^2 y^2 + λ^{2n+2} x^{2n+2} - 1, Newton from λ = 1
    let mut lam: f64 = 1.0;
    let m = 2 * n as i32 + 2;
    for _ in 0..6 {
        let g = (n + 1) as f64 * lam * lam * y * y + (lam * x).powi(m) - 1.0;
        let dg = 2.0 * (n + 1) as f64 * lam * y * y + m as f64 * lam.powi(m - 1) * x.powi(m);
        lam -= g / dg;
    }
    (lam * x, lam * y)
}

/// Reference orbit, period and the constants of the chart `Ψ0`.
#[derive(Debug, Clone)]
pub struct ActionAngleChart {
    n: usize,
    alpha: f64,
    beta: f64,
    c: f64,
    d: f64,
    table: OrbitTable,
}

/// Default orbit table resolution.
pub const DEFAULT_RESOLUTION: usize = 4096;

impl ActionAngleChart {
    pub fn new(n: usize) -> Result<Self> {
        Self::with_resolution(n, DEFAULT_RESOLUTION)
    }

    pub fn with_resolution(n: usize, resolution: usize) -> Result<Self> {
        let table = reference_orbit(n, resolution)?;
        let alpha = 1.0 / (n + 2) as f64;
        let beta = (n + 1) as f64 / (n + 2) as f64;
        let c = 1.0 / (alpha * table.period);
        let d = c.powf(2.0 * beta) / (2 * (n + 1)) as f64;
        Ok(Self {
            n,
            alpha,
            beta,
            c,
            d,
            table,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn period(&self) -> f64 {
        self.table.period
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn d(&self) -> f64 {
        self.d
    }
    pub fn table(&self) -> &OrbitTable {
        &self.table
    }

    /// `(x0(θ T0), y0(θ T0))`.
    pub fn reference(&self, theta: f64) -> (f64, f64) {
        self.table.state_at(theta.rem_euclid(1.0) * self.table.period)
    }

    pub fn psi0(&self, action: f64, theta: f64) -> Result<(f64, f64)> {
        if !(action > 0.0) {
            return Err(Error::Domain(format!("action must be positive, got {action}")));
        }
        let (x0, y0) = self.reference(theta);
        let ci = self.c * action;
        Ok((ci.powf(self.alpha) * x0, ci.powf(self.beta) * y0))
    }

    /// Action of the level through `(x, y)`: `I = (2(n+1) h)^{1/(2β)} / c`.
    pub fn action_of(&self, x: f64, y: f64) -> f64 {
        let n = self.n;
        let h = 0.5 * y * y + x.powi(2 * n as i32 + 2) / (2 * n + 2) as f64;
        (2.0 * (n + 1) as f64 * h).powf(1.0 / (2.0 * self.beta)) / self.c
    }

    pub fn psi0_inverse(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        if x == 0.0 && y == 0.0 {
            return Err(Error::Domain("action-angle chart undefined at the origin".into()));
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Domain("non-finite point".into()));
        }
        let action = self.action_of(x, y);
        let ci = self.c * action;
        let xr = x / ci.powf(self.alpha);
        let yr = y / ci.powf(self.beta);
        let tau = self.table.time_of_angle(clockwise_angle(xr, yr));
        Ok((action, (tau / self.table.period).rem_euclid(1.0)))
    }

    /// `H0(I) = d A^n I^{2β}`.
    pub fn h0(&self, a: f64, action: f64) -> f64 {
        self.d * a.powi(self.n as i32) * action.powf(2.0 * self.beta)
    }

    /// Frequency `∂_I H0 = 2β d A^n I^{2β-1}`.
    pub fn frequency(&self, a: f64, action: f64) -> f64 {
        2.0 * self.beta * self.d * a.powi(self.n as i32) * action.powf(2.0 * self.beta - 1.0)
    }

    /// Rough analyticity half-width `s0` of `θ -> x0(θ T0)` from the geometric
    /// decay of its Fourier coefficients.
    pub fn angle_strip_estimate(&self) -> f64 {
        use num_complex::Complex64;
        use rustfft::FftPlanner;
        let m = 512;
        let mut buf: Vec<Complex64> = (0..m)
            .map(|i| Complex64::new(self.reference(i as f64 / m as f64).0, 0.0))
            .collect();
        FftPlanner::new().plan_fft_forward(m).process(&mut buf);
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (k, c) in buf.iter().enumerate().take(m / 2).skip(1) {
            let mag = c.norm() / m as f64;
            if k % 2 == 1 && mag > 1e-13 {
                xs.push(k as f64);
                ys.push(mag.ln());
            }
        }
        let slope = crate::checks::regression_slope(&xs, &ys);
        -slope / TAU
    }
}

/// The rescaled Hamiltonian system for a given equation and scaling `A`.
#[derive(Debug, Clone)]
pub struct ScaledSystem {
    spec: EquationSpec,
    a: f64,
    a_n: f64,
    /// `A^{j-n-1}` for `j = 0..=2n`.
    a_pows: Vec<f64>,
}

impl ScaledSystem {
    pub fn new(spec: EquationSpec, a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return param_err(format!("scaling parameter must be positive, got {a}"));
        }
        let n = spec.n();
        let a_pows = (0..=2 * n)
            .map(|j| a.powi(j as i32 - n as i32 - 1))
            .collect();
        Ok(Self {
            a_n: a.powi(n as i32),
            spec,
            a,
            a_pows,
        })
    }

    pub fn spec(&self) -> &EquationSpec {
        &self.spec
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn n(&self) -> usize {
        self.spec.n()
    }

    /// `A^{j-n-1}`.
    pub fn a_power(&self, j: usize) -> f64 {
        self.a_pows[j]
    }

    pub fn hamiltonian(&self, x: f64, y: f64, t: f64) -> f64 {
        let n = self.n();
        let mut h = self.a_n * (0.5 * y * y + x.powi(2 * n as i32 + 2) / (2 * n + 2) as f64);
        let mut power = x;
        for (j, p) in self.spec.coefficients().iter().enumerate() {
            if !p.is_zero() {
                h += p.eval(t) * power * self.a_pows[j] / (j + 1) as f64;
            }
            power *= x;
        }
        h
    }

    /// `(∂H/∂y, -∂H/∂x)` with step coefficients read at `anchor`.
    pub fn vector_field(&self, t: f64, x: f64, y: f64, anchor: f64) -> [f64; 2] {
        let n = self.n();
        let mut force = self.a_n * x.powi(2 * n as i32 + 1);
        let mut power = 1.0;
        for (j, p) in self.spec.coefficients().iter().enumerate() {
            if !p.is_zero() {
                force += p.eval_anchored(t, anchor) * power * self.a_pows[j];
            }
            power *= x;
        }
        [self.a_n * y, -force]
    }

    /// `R(I, θ, t) = Σ_j P_j(t)/(j+1) · c^{(j+1)/(n+2)} I^{(j+1)/(n+2)} x0^{j+1} A^{j-n-1}`,
    /// without the working-annulus check.
    pub fn remainder(&self, chart: &ActionAngleChart, action: f64, theta: f64, t: f64) -> f64 {
        let (x0, _) = chart.reference(theta);
        let lam = (chart.c() * action).powf(chart.alpha());
        let mut acc = 0.0;
        let mut power = lam * x0;
        for (j, p) in self.spec.coefficients().iter().enumerate() {
            if !p.is_zero() {
                acc += p.eval(t) * power * self.a_pows[j] / (j + 1) as f64;
            }
            power *= lam * x0;
        }
        acc
    }
}

/// Split `H(Ψ0(I, θ), t) = H0(I) + R(I, θ, t)` on the working annulus `I ∈ [1, 4]`.
pub fn hamiltonian_action_angle(
    sys: &ScaledSystem,
    chart: &ActionAngleChart,
    action: f64,
    theta: f64,
    t: f64,
) -> Result<(f64, f64)> {
    if sys.n() != chart.n() {
        return param_err(format!(
            "chart built for n = {} used with a system of degree n = {}",
            chart.n(),
            sys.n()
        ));
    }
    if !(1.0..=4.0).contains(&action) {
        return Err(Error::Domain(format!("action {action} outside the working annulus [1, 4]")));
    }
    Ok((chart.h0(sys.a(), action), sys.remainder(chart, action, theta, t)))
}

/// `T0 = (2/√(n+1)) B(1/(2n+2), 1/2)` through the Gamma function.
pub fn period_from_beta(n: usize) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let a = 1.0 / (2 * n + 2) as f64;
    let ln_beta = ln_gamma(a) + ln_gamma(0.5) - ln_gamma(a + 0.5);
    2.0 / ((n + 1) as f64).sqrt() * ln_beta.exp()
}

/// First return time of the reference orbit to `(1, 0)`, located by
/// integrating the ODE and refining the crossing of `y = 0` with Newton steps.
pub fn period_from_return(n: usize) -> Result<f64> {
    let sys = Auxiliary { n };
    let opts = Options {
        rtol: 1e-14,
        atol: 1e-15,
        ..Options::default()
    };
    let horizon = 5.0 * ((n + 1) as f64).sqrt() + 5.0;
    let mut prev: Option<(f64, [f64; 2])> = None;
    let mut bracket: Option<(f64, [f64; 2])> = None;
    integrator::integrate(&sys, 0.0, [1.0, 0.0], horizon, &opts, &mut |t, s| {
        if bracket.is_none() {
            if let Some((tp, sp)) = prev {
                if sp[1] > 0.0 && s[1] <= 0.0 && s[0] > 0.0 {
                    bracket = Some((tp, sp));
                }
            }
            prev = Some((t, *s));
        }
    })?;
    let (ta, sa) = bracket.ok_or_else(|| Error::Numerical("no return to (1, 0) found".into()))?;
    let mut tau = ta;
    let mut state = sa;
    for _ in 0..20 {
        let step = state[1] / -state[0].powi(2 * n as i32 + 1);
        let next = tau - step;
        state = integrator::solve(&sys, ta, sa, next, &opts)?;
        if (next - tau).abs() < 1e-15 * next {
            tau = next;
            break;
        }
        tau = next;
    }
    Ok(tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{make_weierstrass, PeriodicCoefficient};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chart(n: usize) -> ActionAngleChart {
        ActionAngleChart::new(n).unwrap()
    }

    #[test]
    fn rescaling_examples() {
        assert_eq!(rescale_state(0.0, 0.0, 7.0, 2).unwrap(), (0.0, 0.0));
        assert_eq!(rescale_state(3.0, -2.0, 1.0, 3).unwrap(), (3.0, -2.0));
        assert_eq!(rescale_state(10.0, 5.0, 10.0, 1).unwrap(), (1.0, 0.05));
        assert!(rescale_state(1.0, 1.0, 0.0, 1).is_err());
        let (x, y) = rescale_state(12.5, -3.25, 40.0, 2).unwrap();
        let (u, v) = unscale_state(x, y, 40.0, 2).unwrap();
        assert!((u - 12.5).abs() < 1e-13 && (v + 3.25).abs() < 1e-13);
    }

    #[test]
    fn rescaled_coordinates_satisfy_scaled_equation() {
        // x(t) solving X'' + X^3 = 0 with X = A x must satisfy x' = A y, y' = -A x^3
        let a = 20.0;
        let spec = EquationSpec::unperturbed(1).unwrap();
        let sys = ScaledSystem::new(spec, a).unwrap();
        let orig = integrator::FnSystem(|_t: f64, s: &[f64; 2]| [s[1], -s[0].powi(3)]);
        let opts = Options::with_tolerance(1e-13);
        let start = (40.0, 3.0);
        let end = integrator::solve(&orig, 0.0, [start.0, start.1], 0.3, &opts).unwrap();
        let (x0, y0) = rescale_state(start.0, start.1, a, 1).unwrap();
        let scaled = ScaledField(&sys);
        let e = integrator::solve(&scaled, 0.0, [x0, y0], 0.3, &opts).unwrap();
        let (u, v) = unscale_state(e[0], e[1], a, 1).unwrap();
        assert!((u - end[0]).abs() < 1e-9 * end[0].abs().max(1.0));
        assert!((v - end[1]).abs() < 1e-9 * end[1].abs().max(1.0));
    }

    struct ScaledField<'a>(&'a ScaledSystem);
    impl OdeSystem<2> for ScaledField<'_> {
        fn rhs(&self, t: f64, s: &[f64; 2], anchor: f64) -> [f64; 2] {
            self.0.vector_field(t, s[0], s[1], anchor)
        }
    }

    #[test]
    fn period_routes_agree() {
        assert!((period_from_beta(1) - 7.416298709205487).abs() < 1e-12);
        for n in 1..=3 {
            let q = min_period(n).unwrap();
            let b = period_from_beta(n);
            let r = period_from_return(n).unwrap();
            assert!((q - b).abs() < 1e-8 && (q - r).abs() < 1e-8 && (b - r).abs() < 1e-8, "n = {n}: {q} {b} {r}");
        }
        assert!((min_period(2).unwrap() - 8.413092631952727).abs() < 1e-10);
        assert!(min_period(0).is_err());
    }

    #[test]
    fn orbit_table_identity_and_symmetry() {
        for n in 1..=3 {
            let t = reference_orbit(n, 4096).unwrap();
            assert!(t.max_raw_defect() <= 1e-10, "n = {n}: {:e}", t.max_raw_defect());
            assert!(t.max_node_defect() <= 1e-14);
            assert!(t.closure_error() <= 1e-9);
            assert_eq!(t.nodes()[0], (1.0, 0.0));
            let (x, y) = t.nodes()[2048];
            assert!((x + 1.0).abs() < 1e-12 && y.abs() < 1e-12);
        }
        assert!(reference_orbit(1, 100).is_err());
    }

    #[test]
    fn taylor_interpolation_matches_integration() {
        let t = reference_orbit(2, 256).unwrap();
        let opts = Options::with_tolerance(1e-14);
        for tau in [0.013, 1.0, 2.71, 5.5, 8.0] {
            let direct = integrator::solve(&Auxiliary { n: 2 }, 0.0, [1.0, 0.0], tau, &opts).unwrap();
            let (x, y) = t.state_at(tau);
            assert!((x - direct[0]).abs() < 1e-11 && (y - direct[1]).abs() < 1e-11);
        }
    }

    #[test]
    fn chart_reference_phase_and_energy() {
        let ch = chart(1);
        let (x, y) = ch.psi0(2.5, 0.0).unwrap();
        assert!((x - (ch.c() * 2.5).powf(ch.alpha())).abs() < 1e-14 && y == 0.0);
        assert!(ch.psi0(0.0, 0.3).is_err());
        assert_eq!(ch.alpha() + ch.beta(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=3 {
            let ch = chart(n);
            assert!((2.0 * ch.alpha() * (n + 1) as f64 - 2.0 * ch.beta()).abs() < 1e-15);
            for _ in 0..200 {
                let i: f64 = rng.gen_range(1.0..4.0);
                let th: f64 = rng.gen_range(0.0..1.0);
                let (x, y) = ch.psi0(i, th).unwrap();
                let h = 0.5 * y * y + x.powi(2 * n as i32 + 2) / (2 * n + 2) as f64;
                assert!((h - ch.d() * i.powf(2.0 * ch.beta())).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn chart_is_symplectic() {
        for n in 1..=2 {
            let ch = chart(n);
            for i in 0..20 {
                for j in 0..20 {
                    let a = 1.0 + 3.0 * i as f64 / 19.0;
                    let th = j as f64 / 20.0;
                    let det = psi0_jacobian(&ch, a, th);
                    assert!((det - 1.0).abs() < 1e-7, "n={n} I={a} θ={th}: {det}");
                }
            }
        }
    }

    pub(crate) fn psi0_jacobian(ch: &ActionAngleChart, a: f64, th: f64) -> f64 {
        let h = 1e-5;
        let (xp, yp) = ch.psi0(a, th + h).unwrap();
        let (xm, ym) = ch.psi0(a, th - h).unwrap();
        let (xq, yq) = ch.psi0(a + h, th).unwrap();
        let (xr, yr) = ch.psi0(a - h, th).unwrap();
        let (dxt, dyt) = ((xp - xm) / (2.0 * h), (yp - ym) / (2.0 * h));
        let (dxi, dyi) = ((xq - xr) / (2.0 * h), (yq - yr) / (2.0 * h));
        dxt * dyi - dxi * dyt
    }

    #[test]
    fn inverse_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=3 {
            let ch = chart(n);
            let (i, th) = ch.psi0_inverse(ch.c().powf(ch.alpha()), 0.0).unwrap();
            assert!((i - 1.0).abs() < 1e-13 && (th.min(1.0 - th)) < 1e-13);
            let mut worst: f64 = 0.0;
            for _ in 0..1000 {
                let a: f64 = rng.gen_range(1.0..4.0);
                let t: f64 = rng.gen_range(0.0..1.0);
                let (x, y) = ch.psi0(a, t).unwrap();
                let (a2, t2) = ch.psi0_inverse(x, y).unwrap();
                let (x2, y2) = ch.psi0(a2, t2).unwrap();
                worst = worst.max((x - x2).hypot(y - y2));
                let dt = (t2 - t + 0.5).rem_euclid(1.0) - 0.5;
                assert!(dt.abs() < 1e-10 && (a2 - a).abs() < 1e-12);
            }
            assert!(worst <= 1e-8);
        }
        assert!(matches!(chart(1).psi0_inverse(0.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn flowing_advances_angle_linearly() {
        // On the reference level (cI = 1) the period is exactly T0; on the
        // level with amplitude λ = (cI)^α it is T0 / λ^n.
        let opts = Options::with_tolerance(1e-13);
        for n in 1..=2 {
            let ch = chart(n);
            let t0 = ch.period();
            for action in [1.0 / ch.c(), 2.7] {
                let lam = (ch.c() * action).powf(ch.alpha());
                let (x, y) = ch.psi0(action, 0.1).unwrap();
                for s in [0.1, 0.37, 0.5, 0.93] {
                    let time = s * t0 / lam.powi(n as i32);
                    let e = integrator::solve(&Auxiliary { n }, 0.0, [x, y], time, &opts).unwrap();
                    let (i2, th) = ch.psi0_inverse(e[0], e[1]).unwrap();
                    let d = (th - 0.1 - s + 0.5).rem_euclid(1.0) - 0.5;
                    assert!(d.abs() < 1e-8, "s = {s}: {d:e}");
                    assert!((i2 - action).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn split_recomposes_scaled_hamiltonian() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let step = PeriodicCoefficient::step(vec![0.0, 0.5], vec![1.0, -1.0]).unwrap();
        let w = make_weierstrass(0.8, 2, 10, vec![]).unwrap();
        let spec = EquationSpec::new(
            1,
            0.8,
            vec![step, PeriodicCoefficient::cosine(2, 0.5), w],
        )
        .unwrap();
        let ch = chart(1);
        for a in [1.0, 50.0, 300.0] {
            let sys = ScaledSystem::new(spec.clone(), a).unwrap();
            for _ in 0..1000 {
                let i: f64 = rng.gen_range(1.0..4.0);
                let th: f64 = rng.gen_range(0.0..1.0);
                let t: f64 = rng.gen_range(0.0..1.0);
                let (h0, r) = hamiltonian_action_angle(&sys, &ch, i, th, t).unwrap();
                let (x, y) = ch.psi0(i, th).unwrap();
                let h = sys.hamiltonian(x, y, t);
                assert!((h0 + r - h).abs() <= 1e-9 * h.abs().max(1.0));
            }
        }
        let zero = ScaledSystem::new(EquationSpec::unperturbed(1).unwrap(), 10.0).unwrap();
        let (h0, r) = hamiltonian_action_angle(&zero, &ch, 2.0, 0.3, 0.1).unwrap();
        assert_eq!(r, 0.0);
        assert!((h0 - ch.d() * 10.0 * 2f64.powf(4.0 / 3.0)).abs() < 1e-12);
        assert!(hamiltonian_action_angle(&zero, &ch, 5.0, 0.3, 0.1).is_err());
        assert!(hamiltonian_action_angle(&zero, &chart(2), 2.0, 0.3, 0.1).is_err());
    }

    #[test]
    fn scaled_hamiltonian_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spec = crate::corpus::main_n2().unwrap();
        let sys = ScaledSystem::new(spec.clone(), 17.0).unwrap();
        for _ in 0..500 {
            let x: f64 = rng.gen_range(-2.0..2.0);
            let y: f64 = rng.gen_range(-2.0..2.0);
            let t: f64 = rng.gen_range(-3.0..3.0);
            let mut direct = 17f64.powi(2) * (y * y / 2.0 + x.powi(6) / 6.0);
            for j in 0..=4 {
                direct += spec.coefficient(j).eval(t) / (j + 1) as f64
                    * x.powi(j as i32 + 1)
                    * 17f64.powi(j as i32 - 3);
            }
            assert!((sys.hamiltonian(x, y, t) - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn remainder_grows_like_a_to_the_n_minus_one() {
        for (n, spec) in [(1, crate::corpus::main_n1().unwrap()), (2, crate::corpus::main_n2().unwrap())] {
            let ch = chart(n);
            for a in [50.0, 100.0, 200.0] {
                let sys = ScaledSystem::new(spec.clone(), a).unwrap();
                let mut sup: f64 = 0.0;
                for i in 0..30 {
                    for j in 0..30 {
                        for k in 0..30 {
                            let action = 1.0 + 3.0 * i as f64 / 29.0;
                            let r = sys.remainder(&ch, action, j as f64 / 30.0, k as f64 / 30.0);
                            sup = sup.max(r.abs());
                        }
                    }
                }
                let ratio = sup / a.powi(n as i32 - 1);
                assert!(ratio <= crate::calibration::REMAINDER_C, "n = {n}, A = {a}: {ratio}");
            }
        }
    }

    #[test]
    fn strip_width_estimate_is_positive_and_finite() {
        for n in 1..=2 {
            let s0 = chart(n).angle_strip_estimate();
            assert!(s0 > 0.05 && s0 < 2.0, "n = {n}: {s0}");
        }
    }
}
