//! Periodic coefficient functions `P_j(t)` of prescribed regularity.
//!
//! Three families make up the test corpus: finite trigonometric polynomials
//! (smooth), lacunary Weierstrass sums (exactly `C^γ`, nowhere smoother), and
//! step functions (merely integrable). Every family has closed-form Fourier
//! coefficients, which the smoothing stage consumes directly.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{param_err, Error, Result};

/// Declared regularity of a coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegularityClass {
    /// `C^γ` with `0 < γ <= 1`.
    Holder(f64),
    /// Only `L^1` on the circle.
    Integrable,
}

impl RegularityClass {
    pub fn holder_exponent(self) -> Option<f64> {
        match self {
            RegularityClass::Holder(g) => Some(g),
            RegularityClass::Integrable => None,
        }
    }

    /// Weakest class containing both.
    fn meet(self, other: RegularityClass) -> RegularityClass {
        match (self, other) {
            (RegularityClass::Holder(a), RegularityClass::Holder(b)) => {
                RegularityClass::Holder(a.min(b))
            }
            _ => RegularityClass::Integrable,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientKind {
    /// `constant + Σ_k cos[k-1]·cos(2πkt) + sin[k-1]·sin(2πkt)`.
    TrigPolynomial {
        constant: f64,
        cos: Vec<f64>,
        sin: Vec<f64>,
    },
    /// `amplitude · Σ_{k<terms} base^{-γk} cos(2π base^k t + phase_k)`.
    Weierstrass {
        gamma: f64,
        base: u32,
        terms: u32,
        phases: Vec<f64>,
        amplitude: f64,
        /// `base^{-γ}`, cached for evaluation.
        decay: f64,
    },
    /// Right-continuous step function; `values[i]` holds on `[breakpoints[i], breakpoints[i+1])`
    /// and the last value wraps around through `t = 1 ≡ 0`.
    Step {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    /// Finite linear combination `Σ w_i f_i`.
    Combination(Vec<(f64, PeriodicCoefficient)>),
}

/// A real 1-periodic function with a declared regularity class.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicCoefficient {
    kind: CoefficientKind,
    class: RegularityClass,
}

impl PeriodicCoefficient {
    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(value: f64) -> Self {
        Self {
            kind: CoefficientKind::TrigPolynomial {
                constant: value,
                cos: Vec::new(),
                sin: Vec::new(),
            },
            class: RegularityClass::Holder(1.0),
        }
    }

    /// Trigonometric polynomial from cosine/sine amplitudes for frequencies `1, 2, ...`.
    pub fn trig_polynomial(constant: f64, cos: Vec<f64>, sin: Vec<f64>) -> Result<Self> {
        if !constant.is_finite() || cos.iter().chain(sin.iter()).any(|c| !c.is_finite()) {
            return param_err("trigonometric coefficients must be finite");
        }
        Ok(Self {
            kind: CoefficientKind::TrigPolynomial { constant, cos, sin },
            class: RegularityClass::Holder(1.0),
        })
    }

    /// `amplitude · cos(2π k t)`.
    pub fn cosine(frequency: usize, amplitude: f64) -> Self {
        let mut cos = vec![0.0; frequency.max(1)];
        if frequency == 0 {
            return Self::constant(amplitude);
        }
        cos[frequency - 1] = amplitude;
        Self::trig_polynomial(0.0, cos, Vec::new()).expect("finite amplitude")
    }

    pub fn step(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return param_err("step function needs as many values as breakpoints (at least one)");
        }
        if breakpoints.iter().any(|b| !(0.0..1.0).contains(b)) {
            return param_err("step breakpoints must lie in [0, 1)");
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return param_err("step breakpoints must be strictly increasing");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return param_err("step values must be finite");
        }
        Ok(Self {
            kind: CoefficientKind::Step {
                breakpoints,
                values,
            },
            class: RegularityClass::Integrable,
        })
    }

    /// Weierstrass sum with an overall amplitude; see [`make_weierstrass`].
    pub fn weierstrass(
        gamma: f64,
        base: u32,
        terms: u32,
        phases: Vec<f64>,
        amplitude: f64,
    ) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return param_err(format!("Weierstrass exponent must lie in (0, 1), got {gamma}"));
        }
        if base < 2 {
            return param_err("Weierstrass base must be at least 2");
        }
        if terms == 0 {
            return param_err("Weierstrass sum needs at least one term");
        }
        if (terms - 1) as f64 * (base as f64).log2() > 50.0 {
            return param_err("Weierstrass top frequency exceeds 2^50");
        }
        let phases = if phases.is_empty() {
            vec![0.0; terms as usize]
        } else if phases.len() == terms as usize {
            phases
        } else {
            return param_err("phase list must be empty or have one entry per term");
        };
        if !amplitude.is_finite() {
            return param_err("amplitude must be finite");
        }
        Ok(Self {
            kind: CoefficientKind::Weierstrass {
                gamma,
                base,
                terms,
                phases,
                amplitude,
                decay: (base as f64).powf(-gamma),
            },
            class: RegularityClass::Holder(gamma),
        })
    }

    pub fn linear_combination(parts: Vec<(f64, PeriodicCoefficient)>) -> Result<Self> {
        if parts.is_empty() {
            return Ok(Self::zero());
        }
        if parts.iter().any(|(w, _)| !w.is_finite()) {
            return param_err("combination weights must be finite");
        }
        let class = parts
            .iter()
            .map(|(_, f)| f.class)
            .reduce(RegularityClass::meet)
            .expect("non-empty");
        Ok(Self {
            kind: CoefficientKind::Combination(parts),
            class,
        })
    }

    /// `c · f`.
    pub fn scaled(&self, c: f64) -> Self {
        Self::linear_combination(vec![(c, self.clone())]).expect("finite weight")
    }

    pub fn kind(&self) -> &CoefficientKind {
        &self.kind
    }

    pub fn declared_class(&self) -> RegularityClass {
        self.class
    }

    /// True when the function is identically zero by construction.
    pub fn is_zero(&self) -> bool {
        match &self.kind {
            CoefficientKind::TrigPolynomial { constant, cos, sin } => {
                *constant == 0.0 && cos.iter().chain(sin).all(|c| *c == 0.0)
            }
            CoefficientKind::Weierstrass { amplitude, .. } => *amplitude == 0.0,
            CoefficientKind::Step { values, .. } => values.iter().all(|v| *v == 0.0),
            CoefficientKind::Combination(parts) => {
                parts.iter().all(|(w, f)| *w == 0.0 || f.is_zero())
            }
        }
    }

    /// `f(t mod 1)`.
    pub fn eval(&self, t: f64) -> f64 {
        let r = t.rem_euclid(1.0);
        match &self.kind {
            CoefficientKind::TrigPolynomial { constant, cos, sin } => {
                let mut acc = *constant;
                for (k, a) in cos.iter().enumerate() {
                    if *a != 0.0 {
                        acc += a * (TAU * ((k + 1) as f64 * r).fract()).cos();
                    }
                }
                for (k, b) in sin.iter().enumerate() {
                    if *b != 0.0 {
                        acc += b * (TAU * ((k + 1) as f64 * r).fract()).sin();
                    }
                }
                acc
            }
            CoefficientKind::Weierstrass {
                base,
                terms,
                phases,
                amplitude,
                decay,
                ..
            } => {
                let b = *base as f64;
                let decay = *decay;
                let mut freq = 1.0;
                let mut weight = 1.0;
                let mut acc = 0.0;
                if *base <= 8 && phases.iter().all(|p| *p == 0.0) {
                    // e^{2πi b^k r} by repeated powers, re-anchored every 8 terms
                    let mut z = Complex64::new(1.0, 0.0);
                    for k in 0..*terms {
                        if k % 8 == 0 {
                            z = Complex64::from_polar(1.0, TAU * (freq * r).fract());
                        } else {
                            let w = z;
                            for _ in 1..*base {
                                z *= w;
                            }
                        }
                        acc += weight * z.re;
                        freq *= b;
                        weight *= decay;
                    }
                    return amplitude * acc;
                }
                for phase in phases.iter().take(*terms as usize) {
                    acc += weight * (TAU * (freq * r).fract() + phase).cos();
                    freq *= b;
                    weight *= decay;
                }
                amplitude * acc
            }
            CoefficientKind::Step {
                breakpoints,
                values,
            } => {
                let idx = breakpoints.partition_point(|b| *b <= r);
                if idx == 0 {
                    values[values.len() - 1]
                } else {
                    values[idx - 1]
                }
            }
            CoefficientKind::Combination(parts) => {
                parts.iter().map(|(w, f)| w * f.eval(r)).sum()
            }
        }
    }

    /// Like [`eval`](Self::eval), but piecewise-constant parts are read at
    /// `anchor` instead of `t`. Integrators pass a time inside the current
    /// smooth piece so jumps are never straddled.
    pub fn eval_anchored(&self, t: f64, anchor: f64) -> f64 {
        match &self.kind {
            CoefficientKind::Step { .. } => self.eval(anchor),
            CoefficientKind::Combination(parts) => parts
                .iter()
                .map(|(w, f)| w * f.eval_anchored(t, anchor))
                .sum(),
            _ => self.eval(t),
        }
    }

    /// Exact Fourier coefficient `∫_0^1 f(t) e^{-2πikt} dt`.
    pub fn fourier_coefficient(&self, k: i64) -> Complex64 {
        if k < 0 {
            return self.fourier_coefficient(-k).conj();
        }
        match &self.kind {
            CoefficientKind::TrigPolynomial { constant, cos, sin } => {
                if k == 0 {
                    return Complex64::new(*constant, 0.0);
                }
                let idx = (k - 1) as usize;
                let a = cos.get(idx).copied().unwrap_or(0.0);
                let b = sin.get(idx).copied().unwrap_or(0.0);
                Complex64::new(a / 2.0, -b / 2.0)
            }
            CoefficientKind::Weierstrass {
                gamma,
                base,
                terms,
                phases,
                amplitude,
                ..
            } => {
                let mut freq: i64 = 1;
                for (m, phase) in phases.iter().enumerate().take(*terms as usize) {
                    if freq == k {
                        let w = amplitude * (*base as f64).powf(-gamma * m as f64) / 2.0;
                        return Complex64::from_polar(w, *phase);
                    }
                    if freq > k {
                        break;
                    }
                    freq = freq.saturating_mul(*base as i64);
                }
                Complex64::new(0.0, 0.0)
            }
            CoefficientKind::Step {
                breakpoints,
                values,
            } => {
                let m = breakpoints.len();
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..m {
                    let a = breakpoints[i];
                    let b = if i + 1 < m {
                        breakpoints[i + 1]
                    } else {
                        breakpoints[0] + 1.0
                    };
                    if k == 0 {
                        acc += values[i] * (b - a);
                    } else {
                        let w = TAU * k as f64;
                        let ea = Complex64::from_polar(1.0, -w * a);
                        let eb = Complex64::from_polar(1.0, -w * b);
                        acc += values[i] * (ea - eb) / Complex64::new(0.0, w);
                    }
                }
                acc
            }
            CoefficientKind::Combination(parts) => parts
                .iter()
                .map(|(w, f)| *w * f.fourier_coefficient(k))
                .sum(),
        }
    }

    /// Coefficients for `k = 0..=max_k`.
    pub fn fourier_coefficients(&self, max_k: usize) -> Vec<Complex64> {
        (0..=max_k as i64)
            .map(|k| self.fourier_coefficient(k))
            .collect()
    }

    /// Jump locations in `[0, 1)`, sorted.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = match &self.kind {
            CoefficientKind::Step { breakpoints, .. } => breakpoints.clone(),
            CoefficientKind::Combination(parts) => {
                parts.iter().flat_map(|(_, f)| f.breakpoints()).collect()
            }
            _ => Vec::new(),
        };
        out.sort_by(|a, b| a.total_cmp(b));
        out.dedup();
        out
    }

    /// Cheap upper bound on `sup |f|`.
    pub fn sup_bound(&self) -> f64 {
        match &self.kind {
            CoefficientKind::TrigPolynomial { constant, cos, sin } => {
                constant.abs()
                    + cos
                        .iter()
                        .zip(sin.iter().chain(std::iter::repeat(&0.0)))
                        .map(|(a, b)| a.hypot(*b))
                        .sum::<f64>()
                    + sin.iter().skip(cos.len()).map(|b| b.abs()).sum::<f64>()
            }
            CoefficientKind::Weierstrass {
                gamma,
                base,
                terms,
                amplitude,
                ..
            } => {
                let q = (*base as f64).powf(-gamma);
                amplitude.abs() * (1.0 - q.powi(*terms as i32)) / (1.0 - q)
            }
            CoefficientKind::Step { values, .. } => {
                values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
            }
            CoefficientKind::Combination(parts) => {
                parts.iter().map(|(w, f)| w.abs() * f.sup_bound()).sum()
            }
        }
    }
}

/// `Σ_{k<terms} base^{-γk} cos(2π base^k t + phase_k)` with class `holder(γ)`.
///
/// An empty phase list means all phases are zero.
pub fn make_weierstrass(
    gamma: f64,
    base: u32,
    terms: u32,
    phases: Vec<f64>,
) -> Result<PeriodicCoefficient> {
    PeriodicCoefficient::weierstrass(gamma, base, terms, phases, 1.0)
}

pub fn eval_periodic(f: &PeriodicCoefficient, t: f64) -> f64 {
    f.eval(t)
}

/// Dyadic-pair estimate of the `C^γ` seminorm.
///
/// Samples `f` on the uniform grid of `R` points (`R` = `resolution` rounded up
/// to a power of two) and takes the largest difference quotient
/// `|f(x+h) - f(x)| / h^γ` over separations `h = 2^{-m}`, `1/R <= h <= 1/2`.
/// The sampled pair set only grows with `R`, so the estimate is monotone.
pub fn holder_seminorm_estimate(
    f: &PeriodicCoefficient,
    gamma: f64,
    resolution: usize,
) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return param_err(format!("Hölder exponent must lie in (0, 1], got {gamma}"));
    }
    if resolution < 16 {
        return param_err(format!("resolution must be at least 16, got {resolution}"));
    }
    let r = resolution.next_power_of_two();
    let samples: Vec<f64> = (0..r).map(|i| f.eval(i as f64 / r as f64)).collect();
    let mut best = 0.0_f64;
    let mut shift = r / 2;
    while shift >= 1 {
        let h = shift as f64 / r as f64;
        let denom = h.powf(gamma);
        let mut local = 0.0_f64;
        for i in 0..r {
            let d = (samples[(i + shift) % r] - samples[i]).abs();
            local = local.max(d);
        }
        best = best.max(local / denom);
        shift /= 2;
    }
    Ok(best)
}

/// The coefficient data of `x'' + x^{2n+1} + Σ_{j=0}^{2n} P_j(t) x^j = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquationSpec {
    n: usize,
    gamma: f64,
    coefficients: Vec<PeriodicCoefficient>,
}

impl EquationSpec {
    /// Validates the boundedness-theorem hypotheses: `1 - 1/n < γ <= 1`,
    /// exactly `2n+1` slots, and `holder(γ')` with `γ' >= γ` on slots `j >= n+1`.
    pub fn new(n: usize, gamma: f64, coefficients: Vec<PeriodicCoefficient>) -> Result<Self> {
        if n < 1 {
            return param_err("degree parameter n must be at least 1");
        }
        let threshold = 1.0 - 1.0 / n as f64;
        if !(gamma > threshold && gamma <= 1.0) {
            return Err(Error::Hypothesis(format!(
                "γ > 1 - 1/n required: γ = {gamma}, 1 - 1/n = {threshold}"
            )));
        }
        if coefficients.len() != 2 * n + 1 {
            return param_err(format!(
                "expected {} coefficient slots (j = 0..2n), got {}",
                2 * n + 1,
                coefficients.len()
            ));
        }
        for (j, p) in coefficients.iter().enumerate().skip(n + 1) {
            match p.declared_class() {
                RegularityClass::Holder(g) if g >= gamma => {}
                other => {
                    return Err(Error::Hypothesis(format!(
                        "slot j = {j} must be C^γ with γ = {gamma}, declared {other:?}"
                    )))
                }
            }
        }
        Ok(Self {
            n,
            gamma,
            coefficients,
        })
    }

    /// All coefficients zero: the autonomous oscillator `x'' + x^{2n+1} = 0`.
    pub fn unperturbed(n: usize) -> Result<Self> {
        Self::new(n, 1.0, vec![PeriodicCoefficient::zero(); 2 * n + 1])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn coefficients(&self) -> &[PeriodicCoefficient] {
        &self.coefficients
    }

    pub fn coefficient(&self, j: usize) -> &PeriodicCoefficient {
        &self.coefficients[j]
    }

    pub fn is_unperturbed(&self) -> bool {
        self.coefficients.iter().all(PeriodicCoefficient::is_zero)
    }

    /// Union of the jump times of all coefficients.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .coefficients
            .iter()
            .flat_map(PeriodicCoefficient::breakpoints)
            .collect();
        out.sort_by(|a, b| a.total_cmp(b));
        out.dedup();
        out
    }

    /// `Σ_j P_j(t) x^j`.
    pub fn forcing(&self, x: f64, t: f64) -> f64 {
        self.forcing_anchored(x, t, t)
    }

    /// [`forcing`](Self::forcing) with step coefficients read at `anchor`.
    pub fn forcing_anchored(&self, x: f64, t: f64, anchor: f64) -> f64 {
        let mut acc = 0.0;
        let mut power = 1.0;
        for p in &self.coefficients {
            if !p.is_zero() {
                acc += p.eval_anchored(t, anchor) * power;
            }
            power *= x;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn corpus() -> Vec<PeriodicCoefficient> {
        vec![
            PeriodicCoefficient::cosine(1, 1.0),
            PeriodicCoefficient::trig_polynomial(0.3, vec![1.0, -0.5], vec![0.0, 0.25, 0.1]).unwrap(),
            make_weierstrass(0.7, 2, 21, vec![]).unwrap(),
            make_weierstrass(0.5, 3, 12, (0..12).map(|k| 0.3 * k as f64).collect()).unwrap(),
            PeriodicCoefficient::step(vec![0.1, 0.45, 0.8], vec![1.0, -2.0, 0.5]).unwrap(),
        ]
    }

    #[test]
    fn cosine_at_zero_is_one() {
        assert_eq!(PeriodicCoefficient::cosine(1, 1.0).eval(0.0), 1.0);
    }

    #[test]
    fn weierstrass_at_origin_matches_direct_sum() {
        let f = make_weierstrass(0.7, 2, 21, vec![]).unwrap();
        let direct: f64 = (0..21).map(|k| 2f64.powf(-0.7 * k as f64)).sum();
        assert!((f.eval(0.0) - direct).abs() < 1e-13);
        assert!((direct - 2.601171).abs() < 1e-6);
        assert_eq!(f.declared_class(), RegularityClass::Holder(0.7));
    }

    #[test]
    fn single_term_weierstrass_is_cosine() {
        let f = make_weierstrass(0.4, 2, 1, vec![0.0]).unwrap();
        for i in 0..50 {
            let t = i as f64 * 0.0371;
            assert!((f.eval(t) - (TAU * t).cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn weierstrass_sup_bounded_by_geometric_sum() {
        let f = make_weierstrass(0.7, 2, 21, vec![]).unwrap();
        let bound = (1.0 - 2f64.powf(-0.7 * 21.0)) / (1.0 - 2f64.powf(-0.7));
        assert!((f.sup_bound() - bound).abs() < 1e-12);
        let sup = (0..20000).map(|i| f.eval(i as f64 / 20000.0).abs()).fold(0.0, f64::max);
        assert!(sup <= bound + 1e-12);
    }

    #[test]
    fn weierstrass_rejects_smooth_exponent() {
        assert!(matches!(make_weierstrass(1.0, 2, 5, vec![]), Err(Error::Parameter(_))));
        assert!(make_weierstrass(0.5, 1, 5, vec![]).is_err());
        assert!(make_weierstrass(0.5, 2, 0, vec![]).is_err());
    }

    #[test]
    fn periodicity_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for f in corpus() {
            for _ in 0..10_000 {
                let t: f64 = rng.gen_range(-10.0..10.0);
                // keep away from step jumps where t+1 rounding may cross a breakpoint
                if !f.breakpoints().is_empty() {
                    let r = t.rem_euclid(1.0);
                    if f.breakpoints().iter().any(|b| (r - b).abs() < 1e-9) {
                        continue;
                    }
                }
                assert!((f.eval(t + 1.0) - f.eval(t)).abs() <= 1e-12, "{t}");
            }
        }
    }

    #[test]
    fn step_function_wraps_and_is_right_continuous() {
        let f = PeriodicCoefficient::step(vec![0.25, 0.75], vec![1.0, -1.0]).unwrap();
        assert_eq!(f.eval(0.0), -1.0);
        assert_eq!(f.eval(0.25), 1.0);
        assert_eq!(f.eval(0.5), 1.0);
        assert_eq!(f.eval(0.75), -1.0);
        assert_eq!(f.eval(0.9), -1.0);
        assert_eq!(f.breakpoints(), vec![0.25, 0.75]);
        assert!(PeriodicCoefficient::step(vec![0.5, 0.2], vec![1.0, 2.0]).is_err());
        assert!(PeriodicCoefficient::step(vec![1.2], vec![1.0]).is_err());
    }

    #[test]
    fn closed_form_coefficients_match_fine_quadrature() {
        let m = 1 << 14;
        for f in corpus() {
            if matches!(f.kind(), CoefficientKind::Weierstrass { .. }) {
                // lacunary sums alias above the quadrature bandwidth; checked separately
                continue;
            }
            for k in -6i64..=6 {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..m {
                    // midpoint rule keeps samples off the step breakpoints
                    let t = (i as f64 + 0.5) / m as f64;
                    acc += f.eval(t) * Complex64::from_polar(1.0, -TAU * k as f64 * t);
                }
                acc /= m as f64;
                let tol = if f.breakpoints().is_empty() { 1e-12 } else { 1e-4 };
                assert!((acc - f.fourier_coefficient(k)).norm() < tol, "k = {k}");
            }
        }
    }

    #[test]
    fn weierstrass_coefficients_sit_on_lacunary_frequencies() {
        let f = make_weierstrass(0.6, 3, 4, vec![0.0, 0.5, 1.0, 1.5]).unwrap();
        assert!((f.fourier_coefficient(9) - Complex64::from_polar(3f64.powf(-1.2) / 2.0, 1.0)).norm() < 1e-15);
        assert_eq!(f.fourier_coefficient(10), Complex64::new(0.0, 0.0));
        assert_eq!(f.fourier_coefficient(0), Complex64::new(0.0, 0.0));
        assert_eq!(f.fourier_coefficient(-3), f.fourier_coefficient(3).conj());
    }

    #[test]
    fn seminorm_of_constant_is_zero() {
        let f = PeriodicCoefficient::constant(3.5);
        for g in [0.2, 0.7, 1.0] {
            assert_eq!(holder_seminorm_estimate(&f, g, 64).unwrap(), 0.0);
        }
    }

    #[test]
    fn seminorm_of_cosine_approaches_lipschitz_constant() {
        let f = PeriodicCoefficient::cosine(1, 1.0);
        let est = holder_seminorm_estimate(&f, 1.0, 1 << 14).unwrap();
        assert!((est - TAU).abs() < 1e-6, "{est}");
    }

    #[test]
    fn seminorm_rejects_bad_parameters() {
        let f = PeriodicCoefficient::cosine(1, 1.0);
        assert!(holder_seminorm_estimate(&f, 0.0, 64).is_err());
        assert!(holder_seminorm_estimate(&f, 1.5, 64).is_err());
        assert!(holder_seminorm_estimate(&f, 0.5, 8).is_err());
    }

    #[test]
    fn weierstrass_seminorm_is_resolution_stable() {
        let f = make_weierstrass(0.7, 2, 21, vec![]).unwrap();
        let lo = holder_seminorm_estimate(&f, 0.7, 1 << 10).unwrap();
        let hi = holder_seminorm_estimate(&f, 0.7, 1 << 14).unwrap();
        assert!(hi >= lo);
        assert!(hi / lo < 4.0, "{lo} {hi}");
    }

    #[test]
    fn seminorm_is_monotone_and_scales_linearly() {
        for f in corpus() {
            let mut prev = 0.0;
            for r in [16, 64, 256, 1024, 4096] {
                let e = holder_seminorm_estimate(&f, 0.6, r).unwrap();
                assert!(e >= prev);
                prev = e;
            }
            let base = holder_seminorm_estimate(&f, 0.6, 1024).unwrap();
            for c in [-3.0, 0.5, 7.25] {
                let e = holder_seminorm_estimate(&f.scaled(c), 0.6, 1024).unwrap();
                assert!((e - c.abs() * base).abs() <= 1e-12 * base.max(1.0));
            }
        }
    }

    #[test]
    fn rough_exponent_witness() {
        for (g1, g2) in [(0.3, 0.8), (0.4, 0.9)] {
            let f = make_weierstrass(g1, 2, 21, vec![]).unwrap();
            let a = holder_seminorm_estimate(&f, g1, 1 << 10).unwrap();
            let b = holder_seminorm_estimate(&f, g1, 1 << 12).unwrap();
            assert!(b / a < 1.1, "bounded at own exponent");
            let c = holder_seminorm_estimate(&f, g2 + 0.1, 1 << 10).unwrap();
            let d = holder_seminorm_estimate(&f, g2 + 0.1, 1 << 12).unwrap();
            assert!(d / c >= 2.0, "growth {}", d / c);
        }
    }

    #[test]
    fn equation_spec_enforces_hypotheses() {
        let w = make_weierstrass(0.6, 2, 8, vec![]).unwrap();
        let z = PeriodicCoefficient::zero;
        // n = 2 needs γ > 1/2
        let ok = EquationSpec::new(2, 0.55, vec![z(), z(), z(), w.clone(), z()]);
        assert!(ok.is_ok());
        let bad = EquationSpec::new(2, 0.5, vec![z(), z(), z(), w.clone(), z()]);
        assert!(matches!(bad, Err(Error::Hypothesis(_))));
        let wrong_len = EquationSpec::new(2, 0.6, vec![z(); 4]);
        assert!(matches!(wrong_len, Err(Error::Parameter(_))));
        let step = PeriodicCoefficient::step(vec![0.5], vec![1.0]).unwrap();
        let rough_slot = EquationSpec::new(2, 0.6, vec![z(), z(), z(), step.clone(), z()]);
        assert!(matches!(rough_slot, Err(Error::Hypothesis(_))));
        let too_rough = EquationSpec::new(2, 0.7, vec![z(), z(), z(), w, z()]);
        assert!(too_rough.is_err());
        // integrable coefficients are fine for j <= n
        assert!(EquationSpec::new(1, 0.8, vec![step, z(), z()]).is_ok());
    }

    #[test]
    fn weierstrass_power_recurrence_matches_direct_sum() {
        for (gamma, base, terms) in [(0.7, 2u32, 21u32), (0.5, 3, 12), (0.9, 5, 9)] {
            let f = make_weierstrass(gamma, base, terms, vec![]).unwrap();
            for i in 0..200 {
                let t = -1.3 + 0.0173 * i as f64;
                let direct: f64 = (0..terms)
                    .map(|k| {
                        let b = (base as f64).powi(k as i32);
                        b.powf(-gamma) * (TAU * (b * t.rem_euclid(1.0)).fract()).cos()
                    })
                    .sum();
                assert!((f.eval(t) - direct).abs() < 1e-11, "{gamma} {base} {t}");
            }
        }
    }
}
