//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use duffing_core::coefficients::{make_weierstrass, EquationSpec, PeriodicCoefficient};
use duffing_core::corpus;
use duffing_core::experiments::MIN_ROTATION_SAMPLES;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SmoothCheck,
    Period,
    NormalForm,
    Twist,
    Boundedness,
    LevelScan,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::SmoothCheck,
        ExperimentKind::Period,
        ExperimentKind::NormalForm,
        ExperimentKind::Twist,
        ExperimentKind::Boundedness,
        ExperimentKind::LevelScan,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::SmoothCheck => "smooth-check",
            ExperimentKind::Period => "period",
            ExperimentKind::NormalForm => "normal-form",
            ExperimentKind::Twist => "twist",
            ExperimentKind::Boundedness => "boundedness",
            ExperimentKind::LevelScan => "level-scan",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub equation: EquationBlock,
    #[serde(default)]
    pub parameters: ParameterBlock,
    pub run: RunBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

/// Either a named corpus system or an explicit list of coefficient slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquationBlock {
    pub corpus: Option<String>,
    pub n: Option<usize>,
    pub gamma: Option<f64>,
    #[serde(default)]
    pub coefficients: Vec<CoefficientEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientEntry {
    /// Slot `j` in `Σ P_j(t) x^j`.
    pub j: usize,
    #[serde(flatten)]
    pub shape: CoefficientShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoefficientShape {
    Zero,
    Constant {
        value: f64,
    },
    Cosine {
        frequency: usize,
        amplitude: f64,
    },
    Trig {
        #[serde(default)]
        constant: f64,
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
    Step {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    Weierstrass {
        gamma: f64,
        #[serde(default = "default_base")]
        base: u32,
        terms: u32,
        #[serde(default)]
        phases: Vec<f64>,
        #[serde(default = "one")]
        amplitude: f64,
    },
}

// `flatten` cannot be combined with `deny_unknown_fields`, so `j` is split off
// by hand and the rest goes through the strict shape enum.
impl<'de> Deserialize<'de> for CoefficientEntry {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let mut table = toml::Table::deserialize(d)?;
        let j = table.remove("j").ok_or_else(|| D::Error::missing_field("j"))?;
        let j = usize::deserialize(j).map_err(|e| D::Error::custom(format!("j: {}", e.message())))?;
        let shape = CoefficientShape::deserialize(toml::Value::Table(table))
            .map_err(|e| D::Error::custom(e.message()))?;
        Ok(Self { j, shape })
    }
}

fn default_base() -> u32 {
    2
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterBlock {
    pub a: Option<f64>,
    pub a_values: Option<Vec<f64>>,
    #[serde(default = "default_eps0")]
    pub eps0: f64,
}

fn default_eps0() -> f64 {
    0.1
}

impl Default for ParameterBlock {
    fn default() -> Self {
        Self {
            a: None,
            a_values: None,
            eps0: default_eps0(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub experiment: ExperimentKind,
    /// smooth-check: coefficient slot to smooth (default: the roughest slot `j > n`).
    pub slot: Option<usize>,
    /// smooth-check: smoothing widths (default `2^-4 … 2^-10`).
    pub sigmas: Option<Vec<f64>>,
    /// twist: action interval.
    pub annulus: Option<[f64; 2]>,
    /// twist: `[actions, angles]` sample grid.
    pub grid: Option<[usize; 2]>,
    /// boundedness: half width of the square initial grid.
    pub half_width: Option<f64>,
    /// boundedness: points per axis.
    pub grid_points: Option<usize>,
    /// boundedness: horizon in time units; level-scan: map iterates.
    pub horizon: Option<f64>,
    /// level-scan: collar `C'`.
    pub collar: Option<f64>,
    /// level-scan: orbit sample stride.
    pub stride: Option<usize>,
    pub tolerance: Option<f64>,
    /// Seed for sampled experiments (reserved; every current experiment is grid based).
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default)]
    pub svg: bool,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            svg: false,
        }
    }
}

/// Parses a config, reporting schema errors with their field path.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = toml::Deserializer::parse(text).map_err(|e| CliError::Config(format!("TOML syntax: {e}")))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("at `{path}`: {}", e.into_inner().message().trim()))
    })
}

pub fn load_config(path: &Path) -> Result<(ExperimentConfig, Vec<u8>), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|_| CliError::Config(format!("{} is not UTF-8", path.display())))?;
    Ok((parse_config(text)?, bytes))
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("`{name}` must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    /// The equation, with the boundedness hypotheses checked.
    pub fn equation(&self) -> Result<EquationSpec, CliError> {
        let e = &self.equation;
        if let Some(name) = &e.corpus {
            if e.n.is_some() || e.gamma.is_some() || !e.coefficients.is_empty() {
                return Err(CliError::Config(
                    "`equation.corpus` excludes `n`, `gamma` and `coefficients`".into(),
                ));
            }
            let all = corpus::all().map_err(CliError::from_core)?;
            return all
                .into_iter()
                .find(|(label, _)| label == name)
                .map(|(_, s)| s)
                .ok_or_else(|| CliError::Config(format!("unknown corpus system `{name}`")));
        }
        let n = e.n.ok_or_else(|| CliError::Config("`equation.n` is required".into()))?;
        let gamma = e.gamma.ok_or_else(|| CliError::Config("`equation.gamma` is required".into()))?;
        if !(1..=6).contains(&n) {
            return Err(CliError::Config(format!("`equation.n` must lie in 1..=6, got {n}")));
        }
        let mut slots = vec![PeriodicCoefficient::zero(); 2 * n + 1];
        let mut seen = vec![false; 2 * n + 1];
        for (i, c) in e.coefficients.iter().enumerate() {
            if c.j > 2 * n {
                return Err(CliError::Config(format!(
                    "`equation.coefficients[{i}].j` = {} exceeds 2n = {}",
                    c.j,
                    2 * n
                )));
            }
            if std::mem::replace(&mut seen[c.j], true) {
                return Err(CliError::Config(format!("slot j = {} given twice", c.j)));
            }
            slots[c.j] = build_coefficient(&c.shape)
                .map_err(|e| CliError::Config(format!("`equation.coefficients[{i}]`: {e}")))?;
        }
        EquationSpec::new(n, gamma, slots).map_err(CliError::from_core)
    }

    /// Scales to run at, increasing.
    pub fn scales(&self) -> Result<Vec<f64>, CliError> {
        let p = &self.parameters;
        let list = match (&p.a, &p.a_values) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("give `parameters.a` or `parameters.a_values`, not both".into()))
            }
            (Some(a), None) => vec![*a],
            (None, Some(v)) => v.clone(),
            (None, None) => vec![100.0],
        };
        if list.is_empty() {
            return Err(CliError::Config("`parameters.a_values` is empty".into()));
        }
        for a in &list {
            positive("parameters.a", *a)?;
        }
        if list.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CliError::Config("`parameters.a_values` must be increasing".into()));
        }
        Ok(list)
    }

    /// Range checks on every numeric field, then the hypothesis gate.
    pub fn validate(&self) -> Result<EquationSpec, CliError> {
        let p = &self.parameters;
        if !(p.eps0 > 0.0 && p.eps0 < 1.0) {
            return Err(CliError::Config(format!("`parameters.eps0` must lie in (0, 1), got {}", p.eps0)));
        }
        self.scales()?;
        let r = &self.run;
        if let Some(s) = &r.sigmas {
            if s.len() < 2 {
                return Err(CliError::Config("`run.sigmas` needs at least two widths".into()));
            }
            for v in s {
                positive("run.sigmas", *v)?;
            }
        }
        if let Some([lo, hi]) = r.annulus {
            if !(lo > 0.0 && hi > lo) {
                return Err(CliError::Config(format!("`run.annulus` must satisfy 0 < lo < hi, got [{lo}, {hi}]")));
            }
        }
        if let Some([a, b]) = r.grid {
            if a < 2 || b < 1 {
                return Err(CliError::Config("`run.grid` needs at least 2 actions and 1 angle".into()));
            }
        }
        if let Some(h) = r.half_width {
            positive("run.half_width", h)?;
        }
        if r.grid_points == Some(0) {
            return Err(CliError::Config("`run.grid_points` must be at least 1".into()));
        }
        if let Some(h) = r.horizon {
            positive("run.horizon", h)?;
            if r.experiment == ExperimentKind::LevelScan {
                if h.fract() != 0.0 {
                    return Err(CliError::Config("`run.horizon` counts iterates for level-scan".into()));
                }
                if h < MIN_ROTATION_SAMPLES as f64 {
                    return Err(CliError::Config(format!(
                        "level-scan `run.horizon` must be at least {MIN_ROTATION_SAMPLES} iterates, got {h}"
                    )));
                }
            }
        }
        if let Some(c) = r.collar {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(CliError::Config(format!("`run.collar` must be non-negative, got {c}")));
            }
        }
        if r.stride == Some(0) {
            return Err(CliError::Config("`run.stride` must be at least 1".into()));
        }
        if let Some(t) = r.tolerance {
            if !(t >= 1e-14 && t <= 1e-4) {
                return Err(CliError::Config(format!("`run.tolerance` must lie in [1e-14, 1e-4], got {t}")));
            }
        }
        self.equation()
    }
}

fn build_coefficient(shape: &CoefficientShape) -> duffing_core::Result<PeriodicCoefficient> {
    Ok(match shape {
        CoefficientShape::Zero => PeriodicCoefficient::zero(),
        CoefficientShape::Constant { value } => PeriodicCoefficient::constant(*value),
        CoefficientShape::Cosine { frequency, amplitude } => PeriodicCoefficient::cosine(*frequency, *amplitude),
        CoefficientShape::Trig { constant, cos, sin } => {
            PeriodicCoefficient::trig_polynomial(*constant, cos.clone(), sin.clone())?
        }
        CoefficientShape::Step { breakpoints, values } => {
            PeriodicCoefficient::step(breakpoints.clone(), values.clone())?
        }
        CoefficientShape::Weierstrass {
            gamma,
            base,
            terms,
            phases,
            amplitude,
        } => {
            let w = make_weierstrass(*gamma, *base, *terms, phases.clone())?;
            if *amplitude == 1.0 {
                w
            } else {
                w.scaled(*amplitude)
            }
        }
    })
}
