//! Orbit experiments on the time-one map: rotation numbers, confinement
//! between bracketing orbits, level scans and long-horizon surveys.

use std::fmt::Write as _;

use crate::action_angle::{rescale_state, unscale_state, ActionAngleChart};
use crate::coefficients::EquationSpec;
use crate::dynamics::{flow_observed, FlowResult, FlowSpec};
use crate::error::{param_err, Error, Result};
use crate::integrator::OdeSystem;

/// Fewest increments accepted by [`rotation_number`].
pub const MIN_ROTATION_SAMPLES: usize = 1000;

/// Default collar `C'` (in units of the annulus coordinate `A·I`).
pub const DEFAULT_COLLAR: f64 = 2.0;

/// Local error target used for long orbits.
pub const ORBIT_TOLERANCE: f64 = 1e-10;

/// Running supremum of `|x| + |y|` along a trajectory.
///
/// Between accepted steps the state is a cubic Hermite interpolant; interior
/// maxima are located from the roots of its derivative.
struct SupTracker {
    sup: f64,
    last: Option<(f64, [f64; 2])>,
    /// Slope at `last` from the previous step, valid unless a jump sits there.
    slope: Option<[f64; 2]>,
    jumps: Vec<f64>,
}

impl SupTracker {
    fn new(fs: &FlowSpec, t: f64, s: (f64, f64)) -> Self {
        Self {
            sup: s.0.abs() + s.1.abs(),
            last: Some((t, [s.0, s.1])),
            slope: None,
            jumps: fs.breakpoints(),
        }
    }

    fn at_jump(&self, t: f64) -> bool {
        let r = t.rem_euclid(1.0);
        self.jumps
            .iter()
            .any(|b| (r - b).abs() < 1e-12 || (r - b).abs() > 1.0 - 1e-12)
    }

    fn push(&mut self, fs: &FlowSpec, t: f64, s: &[f64; 2]) {
        self.sup = self.sup.max(s[0].abs() + s[1].abs());
        if let Some((t0, s0)) = self.last {
            let h = t - t0;
            if h > 0.0 {
                let anchor = 0.5 * (t0 + t);
                let d0 = match self.slope {
                    Some(d) if !self.at_jump(t0) => d,
                    _ => fs.rhs(t0, &s0, anchor),
                };
                let d1 = fs.rhs(t, s, anchor);
                self.slope = Some(d1);
                let px = hermite(s0[0], s[0], h * d0[0], h * d1[0]);
                let py = hermite(s0[1], s[1], h * d0[1], h * d1[1]);
                for sx in [-1.0, 1.0] {
                    for sy in [-1.0, 1.0] {
                        // derivative of sx·x + sy·y is a quadratic in u
                        let q: [f64; 3] = std::array::from_fn(|i| {
                            (i + 1) as f64 * (sx * px[i + 1] + sy * py[i + 1])
                        });
                        for u in quadratic_roots(q) {
                            if u > 0.0 && u < 1.0 {
                                let v = cubic(px, u).abs() + cubic(py, u).abs();
                                self.sup = self.sup.max(v);
                            }
                        }
                    }
                }
            }
        }
        self.last = Some((t, *s));
    }

    /// Continues from `s` at `t`, keeping the cached slope if `s` is where the
    /// previous step ended (up to the period shift of `t`).
    fn restart(&mut self, t: f64, s: (f64, f64)) {
        if self.last.map(|(_, p)| p) != Some([s.0, s.1]) {
            self.slope = None;
        }
        self.last = Some((t, [s.0, s.1]));
    }
}

/// Monomial coefficients on `u ∈ [0, 1]` of the Hermite cubic with endpoint
/// values `a, b` and scaled slopes `da, db`.
fn hermite(a: f64, b: f64, da: f64, db: f64) -> [f64; 4] {
    [a, da, 3.0 * (b - a) - 2.0 * da - db, 2.0 * (a - b) + da + db]
}

fn cubic(p: [f64; 4], u: f64) -> f64 {
    ((p[3] * u + p[2]) * u + p[1]) * u + p[0]
}

/// Real roots of `a u² + b u + c` (unused slots are NaN).
fn quadratic_roots([c, b, a]: [f64; 3]) -> [f64; 2] {
    let none = [f64::NAN; 2];
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return none;
    }
    if a.abs() <= 1e-14 * scale {
        return if b.abs() > 1e-14 * scale { [-c / b, f64::NAN] } else { none };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return none;
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    [q / a, if q != 0.0 { c / q } else { f64::NAN }]
}

/// Iterates of the time-one map from one initial point.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitRecord {
    pub initial: (f64, f64),
    /// Iterates `0, stride, 2·stride, …` (iterate 0 is `initial`).
    pub samples: Vec<(f64, f64)>,
    pub stride: usize,
    /// Running supremum of `|x| + |y|` along the flow, one entry per sample.
    pub running_sup: Vec<f64>,
    pub sup_norm: f64,
    /// Clockwise turns around the origin made during each map application.
    pub turns: Vec<f64>,
    /// Time at which the escape guard fired.
    pub escaped: Option<f64>,
}

impl OrbitRecord {
    /// Number of completed map applications.
    pub fn iterations(&self) -> usize {
        self.turns.len()
    }

    pub fn is_escaped(&self) -> bool {
        self.escaped.is_some()
    }
}

/// Applies the time-one map of the 1-periodic field `map` `iterations` times.
pub fn iterate_orbit(map: &FlowSpec, p0: (f64, f64), iterations: usize, stride: usize) -> Result<OrbitRecord> {
    iterate_orbit_with(map, p0, iterations, stride, &mut |_, _| {})
}

/// [`iterate_orbit`] with a callback on every iterate `(k, state)`, `k = 0..=iterations`.
pub fn iterate_orbit_with(
    map: &FlowSpec,
    p0: (f64, f64),
    iterations: usize,
    stride: usize,
    on_iterate: &mut dyn FnMut(usize, (f64, f64)),
) -> Result<OrbitRecord> {
    if iterations < 1 {
        return param_err("iterate_orbit needs at least one iteration");
    }
    if stride < 1 {
        return param_err("sample stride must be at least 1");
    }
    let mut rec = OrbitRecord {
        initial: p0,
        samples: vec![p0],
        stride,
        running_sup: vec![p0.0.abs() + p0.1.abs()],
        sup_norm: p0.0.abs() + p0.1.abs(),
        turns: Vec::with_capacity(iterations),
        escaped: None,
    };
    on_iterate(0, p0);
    let mut tracker = SupTracker::new(map, 0.0, p0);
    let mut p = p0;
    for k in 1..=iterations {
        tracker.restart(0.0, p);
        let mut last = clockwise(p.0, p.1);
        let mut total = 0.0;
        let out = flow_observed(map, p, 0.0, 1.0, &mut |t, y| {
            tracker.push(map, t, y);
            let a = clockwise(y[0], y[1]);
            total += wrap(a - last);
            last = a;
        })?;
        rec.sup_norm = tracker.sup;
        match out {
            FlowResult::Completed(s) => p = s,
            FlowResult::Escaped { t, .. } => {
                rec.escaped = Some((k - 1) as f64 + t);
                rec.running_sup.push(tracker.sup);
                return Ok(rec);
            }
        }
        rec.turns.push(total / std::f64::consts::TAU);
        on_iterate(k, p);
        if k % stride == 0 {
            rec.samples.push(p);
            rec.running_sup.push(tracker.sup);
        }
    }
    Ok(rec)
}

fn clockwise(x: f64, y: f64) -> f64 {
    (-y).atan2(x)
}

fn wrap(d: f64) -> f64 {
    use std::f64::consts::TAU;
    d - TAU * (d / TAU).round()
}

/// `exp(-1/(s(1-s)))` on `(0, 1)`.
fn bump(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        (-1.0 / (s * (1.0 - s))).exp()
    }
}

/// Weighted Birkhoff average of `values` with the smooth bump weight.
pub fn weighted_birkhoff(values: &[f64]) -> f64 {
    let m = values.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, v) in values.iter().enumerate() {
        let w = bump((k as f64 + 0.5) / m);
        num += w * v;
        den += w;
    }
    num / den
}

/// Rotation number from per-iterate angle increments: the weighted Birkhoff
/// average, with the difference of the two half-sample averages as error bar.
pub fn rotation_from_increments(increments: &[f64]) -> Result<(f64, f64)> {
    if increments.len() < MIN_ROTATION_SAMPLES {
        return Err(Error::UndefinedRotation(format!(
            "{} increments, need at least {MIN_ROTATION_SAMPLES}",
            increments.len()
        )));
    }
    if increments.iter().any(|v| !v.is_finite()) {
        return Err(Error::UndefinedRotation("non-finite angle increment".into()));
    }
    let half = increments.len() / 2;
    let est = weighted_birkhoff(increments);
    let err = (weighted_birkhoff(&increments[..half]) - weighted_birkhoff(&increments[half..])).abs();
    Ok((est, err))
}

/// Rotation number of a lifted angle sequence `θ_0, θ_1, …`.
pub fn rotation_from_lifted(angles: &[f64]) -> Result<(f64, f64)> {
    let inc: Vec<f64> = angles.windows(2).map(|w| w[1] - w[0]).collect();
    rotation_from_increments(&inc)
}

/// Rotation number (turns per period) of an orbit of the time-one map.
pub fn rotation_number(orbit: &OrbitRecord) -> Result<(f64, f64)> {
    if let Some(t) = orbit.escaped {
        return Err(Error::UndefinedRotation(format!("orbit escaped at t = {t}")));
    }
    rotation_from_increments(&orbit.turns)
}

/// The annulus coordinate `r = A·I` of an original state, with `I` the action
/// of the rescaled state in the reference chart.
#[derive(Debug, Clone)]
pub struct AnnulusCoordinate {
    chart: ActionAngleChart,
    a: f64,
}

impl AnnulusCoordinate {
    pub fn new(chart: ActionAngleChart, a: f64) -> Result<Self> {
        if !(a > 0.0) {
            return param_err(format!("scale A must be positive, got {a}"));
        }
        Ok(Self { chart, a })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn chart(&self) -> &ActionAngleChart {
        &self.chart
    }

    pub fn action(&self, x: f64, xdot: f64) -> f64 {
        let (xs, ys) = rescale_state(x, xdot, self.a, self.chart.n()).expect("positive scale");
        self.a * self.chart.action_of(xs, ys)
    }

    /// `(r, θ)` of an original state.
    pub fn polar(&self, x: f64, xdot: f64) -> Result<(f64, f64)> {
        let (xs, ys) = rescale_state(x, xdot, self.a, self.chart.n())?;
        let (i, theta) = self.chart.psi0_inverse(xs, ys)?;
        Ok((self.a * i, theta))
    }

    /// Original state with annulus coordinates `(r, θ)`.
    pub fn state(&self, r: f64, theta: f64) -> Result<(f64, f64)> {
        let (xs, ys) = self.chart.psi0(r / self.a, theta)?;
        unscale_state(xs, ys, self.a, self.chart.n())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConfinementVerdict {
    Confined,
    /// The test orbit touched a bracketing envelope at this iterate.
    Inconclusive { first_violation: usize },
    BracketEscaped,
}

/// Three orbits ordered by initial action and the resulting verdict.
#[derive(Debug, Clone)]
pub struct ConfinementProbe {
    pub verdict: ConfinementVerdict,
    pub inner: OrbitRecord,
    pub test: OrbitRecord,
    pub outer: OrbitRecord,
    /// Largest action reached by the inner orbit.
    pub inner_max: f64,
    /// Smallest action reached by the outer orbit.
    pub outer_min: f64,
    /// Range of the test orbit's action.
    pub test_range: (f64, f64),
}

/// Iterates three seeds for `horizon` steps and checks that the middle orbit
/// stays strictly between the action envelopes of the other two.
///
/// The seeds may be given in any order; they are sorted by initial action.
pub fn confinement_probe(
    map: &FlowSpec,
    coord: &AnnulusCoordinate,
    seeds: [(f64, f64); 3],
    horizon: usize,
    stride: usize,
) -> Result<ConfinementProbe> {
    let mut ordered = seeds;
    let action = |p: &(f64, f64)| coord.action(p.0, p.1);
    ordered.sort_by(|a, b| action(a).total_cmp(&action(b)));
    let acts: Vec<f64> = ordered.iter().map(action).collect();
    if !(acts[0] < acts[1] && acts[1] < acts[2]) {
        return param_err(format!("seed actions must be distinct, got {acts:?}"));
    }
    let run = |p: (f64, f64)| -> Result<(OrbitRecord, Vec<f64>)> {
        let mut actions = Vec::with_capacity(horizon + 1);
        let rec = iterate_orbit_with(map, p, horizon, stride, &mut |_, s| actions.push(coord.action(s.0, s.1)))?;
        Ok((rec, actions))
    };
    let (inner, inner_act) = run(ordered[0])?;
    let (test, test_act) = run(ordered[1])?;
    let (outer, outer_act) = run(ordered[2])?;
    let inner_max = inner_act.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let outer_min = outer_act.iter().copied().fold(f64::INFINITY, f64::min);
    let test_range = test_act
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let verdict = if inner.is_escaped() || outer.is_escaped() {
        ConfinementVerdict::BracketEscaped
    } else if let Some(k) = test_act.iter().position(|&v| !(v > inner_max && v < outer_min)) {
        ConfinementVerdict::Inconclusive { first_violation: k }
    } else if test.is_escaped() {
        ConfinementVerdict::Inconclusive {
            first_violation: test.iterations() + 1,
        }
    } else {
        ConfinementVerdict::Confined
    };
    Ok(ConfinementProbe {
        verdict,
        inner,
        test,
        outer,
        inner_max,
        outer_min,
        test_range,
    })
}

/// Scan settings shared by every level.
#[derive(Debug, Clone)]
pub struct ScanConfig {
    pub horizon: usize,
    pub collar: f64,
    pub stride: usize,
    pub tolerance: f64,
    /// Allowed relative deviation of `ω(A')/ω(A)` from `(A'/A)^n`.
    pub growth_tolerance: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            horizon: 100_000,
            collar: DEFAULT_COLLAR,
            stride: 100,
            tolerance: ORBIT_TOLERANCE,
            growth_tolerance: 0.25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LevelReport {
    pub a: f64,
    /// `[2A + C', 3A - C']` in the annulus coordinate.
    pub annulus: (f64, f64),
    /// Seed actions (inner, test, outer).
    pub seed_actions: [f64; 3],
    pub probe: Option<ConfinementProbe>,
    /// Rotation number of the test orbit and its error bar.
    pub rotation: Option<(f64, f64)>,
    pub error: Option<Error>,
}

impl LevelReport {
    pub fn is_confined(&self) -> bool {
        matches!(
            self.probe.as_ref().map(|p| p.verdict),
            Some(ConfinementVerdict::Confined)
        )
    }
}

#[derive(Debug, Clone)]
pub struct GrowthCheck {
    pub a_lo: f64,
    pub a_hi: f64,
    pub ratio: f64,
    pub predicted: f64,
    pub within: bool,
}

#[derive(Debug, Clone)]
pub struct CurveScanReport {
    pub n: usize,
    pub levels: Vec<LevelReport>,
    pub growth: Vec<GrowthCheck>,
}

impl CurveScanReport {
    pub fn all_confined(&self) -> bool {
        self.levels.iter().all(LevelReport::is_confined)
    }

    pub fn growth_ok(&self) -> bool {
        self.growth.iter().all(|g| g.within)
    }

    /// One row per level: `A,r_lo,r_hi,verdict,first_violation,omega,omega_err,omega_over_An`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("A,r_lo,r_hi,verdict,first_violation,omega,omega_err,omega_over_An\n");
        for l in &self.levels {
            let (verdict, k) = match (&l.error, l.probe.as_ref().map(|p| p.verdict)) {
                (Some(_), _) => ("error", String::new()),
                (None, Some(ConfinementVerdict::Confined)) => ("confined", String::new()),
                (None, Some(ConfinementVerdict::Inconclusive { first_violation })) => {
                    ("inconclusive", first_violation.to_string())
                }
                (None, Some(ConfinementVerdict::BracketEscaped)) => ("bracket-escaped", String::new()),
                (None, None) => ("error", String::new()),
            };
            let (w, e) = l.rotation.map_or((String::new(), String::new()), |(w, e)| {
                (format!("{w:e}"), format!("{e:e}"))
            });
            let scaled = l
                .rotation
                .map_or(String::new(), |(w, _)| format!("{:e}", w / l.a.powi(self.n as i32)));
            let _ = writeln!(
                s,
                "{:e},{:e},{:e},{verdict},{k},{w},{e},{scaled}",
                l.a, l.annulus.0, l.annulus.1
            );
        }
        s
    }
}

/// Confinement probes on `[2A + C', 3A - C']` for each `A` in `a_values`,
/// with seeds at a tenth of the width from either edge and at the middle.
pub fn level_scan(spec: &EquationSpec, a_values: &[f64], config: &ScanConfig) -> Result<CurveScanReport> {
    if a_values.is_empty() {
        return param_err("level scan needs at least one scale");
    }
    if a_values.windows(2).any(|w| !(w[1] > w[0])) {
        return param_err(format!("scales must be increasing, got {a_values:?}"));
    }
    let chart = ActionAngleChart::new(spec.n())?;
    let map = FlowSpec::original(spec.clone()).with_tolerance(config.tolerance);
    let mut levels = Vec::with_capacity(a_values.len());
    for &a in a_values {
        let annulus = (2.0 * a + config.collar, 3.0 * a - config.collar);
        let w = annulus.1 - annulus.0;
        let seed_actions = [annulus.0 + 0.1 * w, annulus.0 + 0.5 * w, annulus.1 - 0.1 * w];
        let mut report = LevelReport {
            a,
            annulus,
            seed_actions,
            probe: None,
            rotation: None,
            error: None,
        };
        let outcome = (|| -> Result<ConfinementProbe> {
            if !(w > 0.0) {
                return param_err(format!(
                    "collar {} leaves an empty annulus at A = {a}",
                    config.collar
                ));
            }
            let coord = AnnulusCoordinate::new(chart.clone(), a)?;
            let seeds = [
                coord.state(seed_actions[0], 0.0)?,
                coord.state(seed_actions[1], 0.0)?,
                coord.state(seed_actions[2], 0.0)?,
            ];
            confinement_probe(&map, &coord, seeds, config.horizon, config.stride)
        })();
        // the probe is kept even when the rotation number is undefined
        match outcome.and_then(|probe| {
            let rotation = rotation_number(&probe.test);
            report.probe = Some(probe);
            rotation
        }) {
            Ok(rotation) => report.rotation = Some(rotation),
            Err(e) => report.error = Some(e),
        }
        levels.push(report);
    }
    let n = spec.n();
    let growth = levels
        .windows(2)
        .filter_map(|w| {
            let (lo, hi) = (&w[0], &w[1]);
            let ratio = hi.rotation?.0 / lo.rotation?.0;
            let predicted = (hi.a / lo.a).powi(n as i32);
            Some(GrowthCheck {
                a_lo: lo.a,
                a_hi: hi.a,
                ratio,
                predicted,
                within: (ratio / predicted - 1.0).abs() <= config.growth_tolerance,
            })
        })
        .collect();
    Ok(CurveScanReport { n, levels, growth })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyRow {
    pub x0: f64,
    pub xdot0: f64,
    /// `ẋ²/2 + x^{2n+2}/(2n+2)` at the initial point.
    pub energy: f64,
    pub sup_norm: f64,
    pub escaped: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyTable {
    pub horizon_time: f64,
    /// Rows sorted by initial energy.
    pub rows: Vec<SurveyRow>,
}

impl SurveyTable {
    pub fn escapes(&self) -> usize {
        self.rows.iter().filter(|r| r.escaped.is_some()).count()
    }

    /// Header `x0,xdot0,energy,sup_norm,escaped,escape_time`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x0,xdot0,energy,sup_norm,escaped,escape_time\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:e},{:e},{:e},{:e},{},{}",
                r.x0,
                r.xdot0,
                r.energy,
                r.sup_norm,
                r.escaped.is_some(),
                r.escaped.map_or(String::new(), |t| format!("{t:e}"))
            );
        }
        s
    }
}

/// `k × k` grid on `[-half_width, half_width]²`.
pub fn square_grid(half_width: f64, k: usize) -> Vec<(f64, f64)> {
    let node = |i: usize| {
        if k == 1 {
            0.0
        } else {
            -half_width + 2.0 * half_width * i as f64 / (k - 1) as f64
        }
    };
    (0..k).flat_map(|i| (0..k).map(move |j| (node(i), node(j)))).collect()
}

/// Integrates the original equation from each grid point over
/// `[0, horizon_time]` and records the supremum of `|x| + |ẋ|`.
pub fn boundedness_survey(
    spec: &EquationSpec,
    grid: &[(f64, f64)],
    horizon_time: f64,
    tolerance: f64,
) -> Result<SurveyTable> {
    if !(horizon_time >= 0.0) || !horizon_time.is_finite() {
        return param_err(format!("horizon must be finite and non-negative, got {horizon_time}"));
    }
    let fs = FlowSpec::original(spec.clone()).with_tolerance(tolerance);
    let n = spec.n() as i32;
    let energy = |x: f64, v: f64| 0.5 * v * v + x.powi(2 * n + 2) / (2 * n + 2) as f64;
    let whole = horizon_time.floor() as usize;
    let rest = horizon_time - whole as f64;
    let mut rows = Vec::with_capacity(grid.len());
    for &(x0, v0) in grid {
        let mut escaped = None;
        let mut sup = x0.abs() + v0.abs();
        let mut p = (x0, v0);
        if whole > 0 {
            let rec = iterate_orbit(&fs, p, whole, whole)?;
            sup = rec.sup_norm;
            escaped = rec.escaped;
            p = *rec.samples.last().expect("initial sample");
        }
        if escaped.is_none() && rest > 0.0 {
            let mut tracker = SupTracker::new(&fs, 0.0, p);
            let out = flow_observed(&fs, p, 0.0, rest, &mut |t, y| tracker.push(&fs, t, y))?;
            sup = sup.max(tracker.sup);
            if let FlowResult::Escaped { t, .. } = out {
                escaped = Some(whole as f64 + t);
            }
        }
        rows.push(SurveyRow {
            x0,
            xdot0: v0,
            energy: energy(x0, v0),
            sup_norm: sup,
            escaped,
        });
    }
    rows.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    Ok(SurveyTable { horizon_time, rows })
}
