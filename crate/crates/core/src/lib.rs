//! Numerical laboratory for the boundedness problem of the superlinear Duffing
//! equation
//!
//! ```text
//! x'' + x^(2n+1) + sum_{j=0}^{2n} P_j(t) x^j = 0
//! ```
//!
//! with 1-periodic coefficients of low regularity in time. The crate builds the
//! constructive pieces of the KAM argument for that problem and measures them:
//!
//! * [`coefficients`]: Hölder / integrable periodic coefficients and seminorm estimates.
//! * [`smoothing`]: Jackson-type analytic smoothing realized as a Fourier multiplier.
//! * [`action_angle`]: rescaling, the reference oscillator and its symplectic chart.
//! * [`normal_form`]: iterated symplectic averaging on a spectral field representation.
//! * [`dynamics`]: flows, time-one maps and twist-form fitting.
//! * [`experiments`]: rotation numbers, confinement probes and boundedness surveys.
//! * [`checks`]: the built-in assertion suite run by `verify` and the acceptance tests.

pub mod action_angle;
pub mod calibration;
pub mod checks;
pub mod coefficients;
pub mod corpus;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod integrator;
pub mod normal_form;
pub mod quadrature;
pub mod smoothing;
pub mod spectral;

pub use error::{Error, Result};
