//! Jackson-type analytic smoothing on the circle.
//!
//! For a 1-periodic `f`, convolution with `K_σ(v) = σ^{-1} K(v/σ)`, where `K` is
//! the inverse Fourier transform of the radial bump `φ`, acts on Fourier
//! coefficients as the multiplier `φ(2π|k|σ)`. Since `φ` vanishes on `[1, ∞)`
//! the result is a trigonometric polynomial of degree `<= ceil(1/(2πσ))`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::coefficients::PeriodicCoefficient;
use crate::error::{param_err, Result};

/// Real trigonometric polynomial `Σ_{|k|<=N} c_k e^{2πikt}` stored by its
/// coefficients `c_0..c_N`; negative modes are the conjugates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPolynomial {
    coeffs: Vec<Complex64>,
}

impl TrigPolynomial {
    /// `coeffs[k]` is `c_k` for `k >= 0`; `c_0` must be real.
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        if coeffs.is_empty() {
            coeffs.push(Complex64::new(0.0, 0.0));
        }
        coeffs[0].im = 0.0;
        while coeffs.len() > 1 && coeffs[coeffs.len() - 1] == Complex64::new(0.0, 0.0) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![Complex64::new(c, 0.0)])
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `c_k` for any integer `k` (zero beyond the degree).
    pub fn coefficient(&self, k: i64) -> Complex64 {
        let c = self
            .coeffs
            .get(k.unsigned_abs() as usize)
            .copied()
            .unwrap_or_default();
        if k < 0 {
            c.conj()
        } else {
            c
        }
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn eval(&self, t: f64) -> f64 {
        let w = Complex64::from_polar(1.0, TAU * t.rem_euclid(1.0));
        let mut acc = 0.0;
        let mut p = Complex64::new(1.0, 0.0);
        for c in &self.coeffs[1..] {
            p *= w;
            acc += (c * p).re;
        }
        self.coeffs[0].re + 2.0 * acc
    }

    /// Evaluation at complex `z`; `p(conj z) = conj p(z)`.
    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        let re = z.re.rem_euclid(1.0);
        let w = Complex64::from_polar((-TAU * z.im).exp(), TAU * re);
        let winv = Complex64::from_polar((TAU * z.im).exp(), -TAU * re);
        let mut acc = self.coeffs[0];
        let mut p = Complex64::new(1.0, 0.0);
        let mut q = Complex64::new(1.0, 0.0);
        for c in &self.coeffs[1..] {
            p *= w;
            q *= winv;
            acc += c * p + c.conj() * q;
        }
        acc
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * Complex64::new(0.0, TAU * k as f64))
                .collect(),
        )
    }

    /// Certified bound `Σ_{|k|<=N} |c_k| e^{2π|k|s}` on the strip `|Im t| <= s`.
    pub fn envelope(&self, s: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let m = if k == 0 { 1.0 } else { 2.0 };
                m * c.norm() * (TAU * k as f64 * s).exp()
            })
            .sum()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * a).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::new(
            (0..n as i64)
                .map(|k| self.coefficient(k) + other.coefficient(k))
                .collect(),
        )
    }

    /// `max_i |p(i/m)|`.
    pub fn sup_on_grid(&self, m: usize) -> f64 {
        (0..m)
            .map(|i| self.eval(i as f64 / m as f64).abs())
            .fold(0.0, f64::max)
    }
}

/// Standard smooth transition: 0 for `s <= 0`, 1 for `s >= 1`.
fn transition(s: f64) -> f64 {
    let g = |u: f64| if u <= 0.0 { 0.0 } else { (-1.0 / u).exp() };
    let a = g(s);
    let b = g(1.0 - s);
    a / (a + b)
}

/// Radial bump: 1 on `[0, 1/2]`, 0 on `[1, ∞)`, `C^∞` and decreasing between.
pub fn bump_multiplier(r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return param_err(format!("bump multiplier needs r >= 0, got {r}"));
    }
    Ok(bump(r))
}

pub(crate) fn bump(r: f64) -> f64 {
    if r <= 0.5 {
        1.0
    } else if r >= 1.0 {
        0.0
    } else {
        1.0 - transition(2.0 * r - 1.0)
    }
}

/// Largest frequency the multiplier can retain at width `sigma`.
pub fn bandwidth(sigma: f64) -> usize {
    (1.0 / (TAU * sigma)).ceil() as usize
}

/// `K_σ * f` as a trigonometric polynomial, from exact Fourier coefficients.
pub fn smooth(f: &PeriodicCoefficient, sigma: f64) -> Result<TrigPolynomial> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return param_err(format!("smoothing width must be positive, got {sigma}"));
    }
    let kmax = bandwidth(sigma);
    let coeffs = (0..=kmax)
        .map(|k| {
            let m = bump(TAU * k as f64 * sigma);
            if m == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                f.fourier_coefficient(k as i64) * m
            }
        })
        .collect();
    Ok(TrigPolynomial::new(coeffs))
}

/// Grid size used by [`approximation_error`] for a polynomial of degree `d`.
pub fn error_grid_size(degree: usize) -> usize {
    (10 * degree).max(8192)
}

/// `sup_t |smooth(f, σ)(t) - f(t)|` sampled on a uniform grid containing `t = 0`.
pub fn approximation_error(f: &PeriodicCoefficient, sigma: f64) -> Result<f64> {
    let p = smooth(f, sigma)?;
    let m = error_grid_size(p.degree());
    Ok(sup_difference(&p, |t| f.eval(t), m))
}

pub(crate) fn sup_difference(p: &TrigPolynomial, f: impl Fn(f64) -> f64, m: usize) -> f64 {
    (0..m)
        .map(|i| {
            let t = i as f64 / m as f64;
            (p.eval(t) - f(t)).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripBound {
    /// Largest `|p|` seen on the sampled complex grid.
    pub sampled: f64,
    /// `Σ|c_k| e^{2π|k|s}`, an upper bound on the whole strip.
    pub envelope: f64,
}

/// Sup of `|p|` on `{t + iy : |y| <= s}`.
pub fn strip_bound(p: &TrigPolynomial, s: f64) -> Result<StripBound> {
    if !(s >= 0.0) {
        return param_err(format!("strip half-width must be nonnegative, got {s}"));
    }
    let nt = (16 * p.degree()).max(256);
    let ny = if s == 0.0 { 1 } else { 9 };
    let mut sampled: f64 = 0.0;
    for j in 0..ny {
        let y = if ny == 1 {
            0.0
        } else {
            -s + 2.0 * s * j as f64 / (ny - 1) as f64
        };
        for i in 0..nt {
            let z = Complex64::new(i as f64 / nt as f64, y);
            sampled = sampled.max(p.eval_complex(z).norm());
        }
    }
    Ok(StripBound {
        sampled,
        envelope: p.envelope(s),
    })
}

/// Fourier coefficients `c_0..c_{max_k}` by the `m`-point trapezoid rule.
///
/// Kept as an independent route for checking the closed-form coefficients of
/// the coefficient families.
pub fn quadrature_coefficients(f: &PeriodicCoefficient, max_k: usize, m: usize) -> Vec<Complex64> {
    use rustfft::FftPlanner;
    let mut buf: Vec<Complex64> = (0..m)
        .map(|i| Complex64::new(f.eval(i as f64 / m as f64), 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    (0..=max_k.min(m / 2)).map(|k| buf[k] / m as f64).collect()
}

/// `K(v) = (1/2π) ∫_{-1}^{1} φ(|ξ|) cos(ξv) dξ`, the kernel whose Fourier
/// transform is the bump; trapezoid rule on `nodes` points of `[0, 1]`.
pub fn kernel(v: f64, nodes: usize) -> f64 {
    let h = 1.0 / nodes as f64;
    let mut acc = 0.5; // ξ = 0 endpoint, φ = 1
    for i in 1..nodes {
        let xi = i as f64 * h;
        acc += bump(xi) * (xi * v).cos();
    }
    // φ(1) = 0, so the right endpoint contributes nothing
    2.0 * acc * h / (2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{holder_seminorm_estimate, make_weierstrass};
    use proptest::prelude::*;

    #[test]
    fn bump_regions_and_midpoint() {
        assert_eq!(bump_multiplier(0.3).unwrap(), 1.0);
        assert_eq!(bump_multiplier(1.5).unwrap(), 0.0);
        assert!((bump_multiplier(0.75).unwrap() - 0.5).abs() < 1e-15);
        assert!(bump_multiplier(-0.1).is_err());
        let mut prev = 1.0;
        for i in 0..=1000 {
            let v = bump(0.5 + i as f64 / 2000.0);
            assert!((0.0..=1.0).contains(&v) && v <= prev);
            prev = v;
        }
    }

    #[test]
    fn constants_and_low_modes_pass_unchanged() {
        let p = smooth(&PeriodicCoefficient::constant(5.0), 0.3).unwrap();
        assert_eq!(p.degree(), 0);
        assert_eq!(p.eval(0.37), 5.0);
        let sigma = 0.5 / TAU;
        let q = smooth(&PeriodicCoefficient::cosine(1, 1.0), sigma).unwrap();
        for i in 0..20 {
            let t = i as f64 / 20.0;
            assert!((q.eval(t) - (TAU * t).cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn trig_polynomial_reproduced_in_flat_region() {
        let f = PeriodicCoefficient::trig_polynomial(0.5, vec![1.0, 0.0, -0.3], vec![0.2, 0.7, 0.0])
            .unwrap();
        let sigma = 0.5 / (TAU * 3.0);
        assert!(approximation_error(&f, sigma).unwrap() < 1e-12);
    }

    #[test]
    fn degree_law_at_sigma_one_hundredth() {
        let f = make_weierstrass(0.7, 2, 21, vec![]).unwrap();
        let p = smooth(&f, 0.01).unwrap();
        assert!(p.degree() <= 16);
        assert_eq!(bandwidth(0.01), 16);
    }

    #[test]
    fn multiplier_matches_direct_convolution() {
        // A short lacunary sum keeps all frequencies below the grid Nyquist,
        // so the sampled convolution has no aliasing.
        let f = make_weierstrass(0.7, 2, 12, vec![]).unwrap();
        let sigma = 0.01;
        let m = 1 << 14;
        let delta = 1.0 / (sigma * m as f64);
        let samples: Vec<f64> = (0..m).map(|i| f.eval(i as f64 / m as f64)).collect();
        let reach = (300.0 / delta).ceil() as i64;
        let mut taps = vec![0.0; m];
        for j in 0..=reach {
            let w = delta * kernel(j as f64 * delta, 2048);
            taps[(j as usize) % m] += w;
            if j > 0 {
                taps[(m - (j as usize) % m) % m] += w;
            }
        }
        let p = smooth(&f, sigma).unwrap();
        let mut worst: f64 = 0.0;
        for i in (0..m).step_by(1) {
            let mut acc = 0.0;
            for (j, w) in taps.iter().enumerate() {
                if *w != 0.0 {
                    acc += w * samples[(i + m - j) % m];
                }
            }
            worst = worst.max((acc - p.eval(i as f64 / m as f64)).abs());
        }
        assert!(worst <= 1e-6, "max deviation {worst:e}");
    }

    #[test]
    fn jackson_slope_for_weierstrass() {
        for gamma in [0.6, 0.7, 0.9] {
            let f = make_weierstrass(gamma, 2, 21, vec![]).unwrap();
            let (xs, ys): (Vec<f64>, Vec<f64>) = (4..=10)
                .map(|e| {
                    let sigma = 2f64.powi(-e);
                    (sigma.ln(), approximation_error(&f, sigma).unwrap().ln())
                })
                .unzip();
            let slope = crate::checks::regression_slope(&xs, &ys);
            assert!((slope - gamma).abs() <= 0.15, "γ = {gamma}: slope {slope}");
        }
    }

    #[test]
    fn cosine_strip_bound_is_cosh() {
        let p = smooth(&PeriodicCoefficient::cosine(1, 1.0), 0.05).unwrap();
        for s in [0.0, 0.1, 0.3] {
            let b = strip_bound(&p, s).unwrap();
            assert!((b.sampled - (TAU * s).cosh()).abs() < 1e-8);
            assert!(b.envelope >= b.sampled - 1e-12);
        }
        let c = strip_bound(&TrigPolynomial::constant(5.0), 0.7).unwrap();
        assert_eq!(c.sampled, 5.0);
        assert_eq!(c.envelope, 5.0);
    }

    #[test]
    fn envelope_dominates_samples_for_smoothed_weierstrass() {
        let f = make_weierstrass(0.7, 2, 21, vec![]).unwrap();
        for sigma in [0.05, 0.01, 0.002] {
            let p = smooth(&f, sigma).unwrap();
            let b = strip_bound(&p, sigma).unwrap();
            assert!(b.sampled.is_finite() && b.sampled <= b.envelope * (1.0 + 1e-12));
        }
    }

    #[test]
    fn quadrature_route_agrees_with_closed_forms() {
        let f = PeriodicCoefficient::trig_polynomial(0.1, vec![0.4, 0.0, 1.0], vec![-0.2]).unwrap();
        let q = quadrature_coefficients(&f, 8, 64);
        for (k, c) in q.iter().enumerate() {
            assert!((c - f.fourier_coefficient(k as i64)).norm() < 1e-14);
        }
        // trapezoid on 2^16 points reproduces every Weierstrass mode below 2^15
        let w = make_weierstrass(0.6, 2, 15, vec![]).unwrap();
        let q = quadrature_coefficients(&w, 40, 1 << 16);
        for (k, c) in q.iter().enumerate() {
            assert!((c - w.fourier_coefficient(k as i64)).norm() < 1e-12, "k = {k}");
        }
    }

    #[test]
    fn derivative_of_smoothed_function_scales_like_sigma_to_gamma_minus_one() {
        let gamma = 0.7;
        let f = make_weierstrass(gamma, 2, 21, vec![]).unwrap();
        let semi = holder_seminorm_estimate(&f, gamma, 1 << 14).unwrap();
        for e in 4..=10 {
            let sigma = 2f64.powi(-e);
            let d = smooth(&f, sigma).unwrap().derivative();
            let sup = d.sup_on_grid(error_grid_size(d.degree()));
            let ratio = sup / (sigma.powf(gamma - 1.0) * semi);
            assert!(ratio <= crate::calibration::JACKSON_DERIVATIVE_C, "σ = 2^-{e}: {ratio}");
        }
    }

    #[test]
    fn error_bound_and_pairwise_consistency() {
        for gamma in [0.6, 0.7, 0.9] {
            let f = make_weierstrass(gamma, 2, 21, vec![]).unwrap();
            let semi = holder_seminorm_estimate(&f, gamma, 1 << 14).unwrap();
            let c = crate::calibration::JACKSON_C;
            let sigmas: Vec<f64> = (4..=10).map(|e| 2f64.powi(-e)).collect();
            for &s in &sigmas {
                let err = approximation_error(&f, s).unwrap();
                assert!(err <= c * s.powf(gamma) * semi, "γ = {gamma}, σ = {s}");
            }
            for (i, &sig) in sigmas.iter().enumerate() {
                let p = smooth(&f, sig).unwrap();
                for &s in &sigmas[i..] {
                    let q = smooth(&f, s).unwrap();
                    let diff = p.add(&q.scaled(-1.0));
                    let sup = diff.sup_on_grid(error_grid_size(diff.degree()));
                    assert!(sup <= 2.0 * c * sig.powf(gamma) * semi);
                }
            }
        }
    }

    fn corpus_member(kind: u8, a: f64, g: f64, phase: f64) -> PeriodicCoefficient {
        match kind % 3 {
            0 => PeriodicCoefficient::trig_polynomial(a, vec![1.0, a, -0.5], vec![phase, 0.0, a])
                .unwrap(),
            1 => make_weierstrass(g, 2, 18, vec![phase; 18]).unwrap().scaled(a),
            _ => PeriodicCoefficient::step(vec![0.1 * phase.abs().min(5.0), 0.6], vec![a, -1.0])
                .unwrap(),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn coefficients_beyond_bandwidth_vanish(
            kind in 0u8..3, a in -2.0f64..2.0, g in 0.2f64..0.95, phase in 0.0f64..6.0,
            log_sigma in -7.0f64..-1.0,
        ) {
            let f = corpus_member(kind, a, g, phase);
            let sigma = log_sigma.exp();
            let p = smooth(&f, sigma).unwrap();
            prop_assert!(p.degree() <= bandwidth(sigma));
            for k in 0..=(bandwidth(sigma) as i64 + 5) {
                if TAU * k as f64 * sigma >= 1.0 {
                    prop_assert_eq!(p.coefficient(k), Complex64::new(0.0, 0.0));
                }
            }
        }

        #[test]
        fn smoothing_is_linear(
            a in -3.0f64..3.0, b in -3.0f64..3.0, g in 0.3f64..0.9, log_sigma in -6.0f64..-1.5,
        ) {
            let f = make_weierstrass(g, 2, 16, vec![]).unwrap();
            let h = PeriodicCoefficient::step(vec![0.2, 0.7], vec![1.0, -0.5]).unwrap();
            let sigma = log_sigma.exp();
            let combo = PeriodicCoefficient::linear_combination(vec![(a, f.clone()), (b, h.clone())]).unwrap();
            let lhs = smooth(&combo, sigma).unwrap();
            let rhs = smooth(&f, sigma).unwrap().scaled(a).add(&smooth(&h, sigma).unwrap().scaled(b));
            for k in 0..=bandwidth(sigma) as i64 {
                prop_assert!((lhs.coefficient(k) - rhs.coefficient(k)).norm() <= 1e-12);
            }
        }

        #[test]
        fn conjugate_points_give_conjugate_values(
            t in -2.0f64..2.0, y in -0.05f64..0.05, g in 0.3f64..0.9,
        ) {
            let p = smooth(&make_weierstrass(g, 2, 16, vec![0.4; 16]).unwrap(), 0.02).unwrap();
            let z = Complex64::new(t, y);
            let u = p.eval_complex(z);
            let v = p.eval_complex(z.conj());
            prop_assert!((u - v.conj()).norm() <= 1e-12 * u.norm().max(1.0));
            prop_assert!((p.eval_complex(Complex64::new(t, 0.0)).re - p.eval(t)).abs() <= 1e-12);
        }
    }
}
