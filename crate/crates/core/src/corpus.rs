//! Reference equations used by the tests, the acceptance suite and `verify`.

use crate::coefficients::{make_weierstrass, EquationSpec, PeriodicCoefficient};
use crate::error::Result;

/// Hölder exponent of the rough coefficient in the `n = 1` corpus.
pub const GAMMA_N1: f64 = 0.8;
/// Hölder exponent of the rough coefficients in the `n = 2` corpus.
pub const GAMMA_N2: f64 = 0.9;
/// Lacunary terms kept in corpus Weierstrass sums (top frequency `2^7`).
pub const WEIERSTRASS_TERMS: u32 = 8;

/// Square wave with jumps at `t = 0` and `t = 1/2`.
pub fn square_wave(amplitude: f64) -> PeriodicCoefficient {
    PeriodicCoefficient::step(vec![0.0, 0.5], vec![amplitude, -amplitude])
        .expect("valid breakpoints")
}

/// `x'' + x^3 + P_0(t) + P_2(t) x^2 = 0` with a square wave `P_0` and a
/// `C^{0.8}` Weierstrass sum `P_2`.
pub fn main_n1() -> Result<EquationSpec> {
    EquationSpec::new(
        1,
        GAMMA_N1,
        vec![
            square_wave(1.0),
            PeriodicCoefficient::zero(),
            make_weierstrass(GAMMA_N1, 2, WEIERSTRASS_TERMS, vec![])?,
        ],
    )
}

/// Quintic oscillator with rough coefficients on every slot but `j = 2`.
pub fn main_n2() -> Result<EquationSpec> {
    let phases = |shift: f64| (0..WEIERSTRASS_TERMS).map(|k| shift * k as f64).collect();
    EquationSpec::new(
        2,
        GAMMA_N2,
        vec![
            square_wave(1.0),
            PeriodicCoefficient::cosine(1, 0.5),
            PeriodicCoefficient::zero(),
            make_weierstrass(GAMMA_N2, 2, WEIERSTRASS_TERMS, phases(0.7))?,
            make_weierstrass(GAMMA_N2, 2, WEIERSTRASS_TERMS, phases(1.3))?.scaled(0.5),
        ],
    )
}

/// The autonomous oscillator `x'' + x^{2n+1} = 0`.
pub fn unperturbed(n: usize) -> Result<EquationSpec> {
    EquationSpec::unperturbed(n)
}

/// Named corpus systems, in a fixed order.
pub fn all() -> Result<Vec<(&'static str, EquationSpec)>> {
    Ok(vec![
        ("unperturbed-n1", unperturbed(1)?),
        ("main-n1", main_n1()?),
        ("main-n2", main_n2()?),
    ])
}
