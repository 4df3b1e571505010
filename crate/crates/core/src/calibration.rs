//! Frozen constants for the estimates whose constants are not quantified
//! analytically. Each value is the largest ratio measured on the test corpus
//! with roughly 2x headroom; regression tests compare against these.

/// `approximation_error(f, σ) <= JACKSON_C · σ^γ · [f]_γ`.
pub const JACKSON_C: f64 = 2.0;

/// `sup |f_σ'| <= JACKSON_DERIVATIVE_C · σ^{γ-1} · [f]_γ`.
pub const JACKSON_DERIVATIVE_C: f64 = 1.2;

/// `sup |R| / A^{n-1}` on `[1, 4] × T × T` for the corpus.
pub const REMAINDER_C: f64 = 2.5;

/// `sup |S_1| <= GENERATOR_C · A^{-1}` (measured 0.45 for n = 1, 0.17 for n = 2).
pub const GENERATOR_C: f64 = 1.0;

/// `sup |U_1|, sup |V_1| <= COORDINATE_C · A^{-1}` (measured 4.7).
pub const COORDINATE_C: f64 = 10.0;

/// Final residual, derivatives up to order 2, `<= FINAL_RESIDUAL_C · eps0`
/// for `A >= 50` (measured 8.6 at n = 1, A = 50).
pub const FINAL_RESIDUAL_C: f64 = 20.0;

/// `sup |H0^k - d A^n μ^{2β}| <= CORRECTION_C · A^{n-1}` (measured 0.0039).
pub const CORRECTION_C: f64 = 0.01;

/// `sup |∂t H0^k| <= DT_GROWTH_C · eps0^{-1/γ} A^{(n-1)(1+1/γ)}` (measured 1.8e-3).
pub const DT_GROWTH_C: f64 = 0.005;

/// `sup |R^ε| <= ROUGH_C · eps0` on the working annulus (measured 4.96).
pub const ROUGH_C: f64 = 10.0;

/// Twist form at `A = 100`: `F_sup, G_sup <= TWIST_FORM_C · eps0`
/// (measured 0.38 for n = 1, below 1e-4 for n = 2).
pub const TWIST_FORM_C: f64 = 1.0;

/// `twist_min >= A^n / TWIST_C` on `[2, 3]` (measured `A^n / 62`).
pub const TWIST_C: f64 = 125.0;
