//! Explicit integrators for the low-dimensional flows of the crate.
//!
//! [`integrate`] is the Dormand–Prince 8(5,3) pair with Hairer's error
//! estimator and PI step control. Vector fields that are only piecewise
//! continuous in time expose their jump times through
//! [`OdeSystem::breakpoints`]; the integrator restarts at every jump and passes
//! the midpoint of the current smooth piece as `anchor`, so a right-continuous
//! coefficient is never sampled on the wrong side of a jump.
//!
//! [`yoshida4`] is a fixed-step fourth-order splitting scheme for separable
//! systems `x' = m·y`, `y' = F(x, t)`, used for conservation cross-checks.

use crate::error::{Error, Result};

/// A time-dependent vector field in `D` dimensions.
pub trait OdeSystem<const D: usize> {
    /// Right-hand side at time `t`. `anchor` lies inside the smooth piece being
    /// integrated and should be used in place of `t` for piecewise-constant data.
    fn rhs(&self, t: f64, y: &[f64; D], anchor: f64) -> [f64; D];

    /// Jump times of the field, reduced to `[0, 1)`; the field is 1-periodic
    /// in `t` whenever this is non-empty.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Blow-up guard, checked after every accepted step.
    fn escaped(&self, _y: &[f64; D]) -> bool {
        false
    }
}

/// Adapter turning a closure `(t, y) -> y'` into an [`OdeSystem`].
pub struct FnSystem<F>(pub F);

impl<const D: usize, F: Fn(f64, &[f64; D]) -> [f64; D]> OdeSystem<D> for FnSystem<F> {
    fn rhs(&self, t: f64, y: &[f64; D], _anchor: f64) -> [f64; D] {
        (self.0)(t, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on `|h|`.
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-12,
            max_step: f64::INFINITY,
            max_steps: 5_000_000,
        }
    }
}

impl Options {
    pub fn with_tolerance(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome<const D: usize> {
    Completed { y: [f64; D] },
    /// The blow-up guard fired after the step ending at `t`.
    Escaped { t: f64, y: [f64; D] },
}

impl<const D: usize> Outcome<D> {
    pub fn state(&self) -> [f64; D] {
        match self {
            Outcome::Completed { y } | Outcome::Escaped { y, .. } => *y,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

impl std::ops::AddAssign for Stats {
    fn add_assign(&mut self, o: Stats) {
        self.accepted += o.accepted;
        self.rejected += o.rejected;
        self.evaluations += o.evaluations;
    }
}

/// Jump times of a 1-periodic pattern strictly inside `(t0, t1)` (either
/// orientation), ordered along the direction of integration.
pub fn crossings(pattern: &[f64], t0: f64, t1: f64) -> Vec<f64> {
    if pattern.is_empty() || t0 == t1 {
        return Vec::new();
    }
    let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
    let mut out = Vec::new();
    let mut period = lo.floor() - 1.0;
    while period <= hi.ceil() {
        for b in pattern {
            let t = period + b;
            if t > lo && t < hi {
                out.push(t);
            }
        }
        period += 1.0;
    }
    out.sort_by(|a, b| a.total_cmp(b));
    out.dedup();
    if t0 > t1 {
        out.reverse();
    }
    // Segments shorter than this would only produce rounding noise.
    out.retain(|t| (t - t0).abs() > 1e-14 && (t - t1).abs() > 1e-14);
    out
}

/// Integrates from `(t0, y0)` to `t1`; `t1 < t0` integrates backwards.
///
/// `observer` sees every accepted step `(t, y)`, including the final one.
pub fn integrate<const D: usize, S: OdeSystem<D> + ?Sized>(
    sys: &S,
    t0: f64,
    y0: [f64; D],
    t1: f64,
    opts: &Options,
    observer: &mut dyn FnMut(f64, &[f64; D]),
) -> Result<(Outcome<D>, Stats)> {
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::Parameter("integrator tolerances must be positive".into()));
    }
    if !t0.is_finite() || !t1.is_finite() || y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("non-finite initial data".into()));
    }
    let mut knots = vec![t0];
    knots.extend(crossings(&sys.breakpoints(), t0, t1));
    knots.push(t1);
    let mut y = y0;
    let mut stats = Stats::default();
    let mut h_guess = None;
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a == b {
            continue;
        }
        let seg = Segment {
            sys,
            anchor: 0.5 * (a + b),
        };
        let (outcome, h_last) = dop853(&seg, a, y, b, opts, h_guess, observer, &mut stats)?;
        match outcome {
            Outcome::Completed { y: yn } => y = yn,
            escaped @ Outcome::Escaped { .. } => return Ok((escaped, stats)),
        }
        h_guess = Some(h_last);
    }
    Ok((Outcome::Completed { y }, stats))
}

/// Shorthand for [`integrate`] without an observer; escape is an error.
pub fn solve<const D: usize, S: OdeSystem<D> + ?Sized>(
    sys: &S,
    t0: f64,
    y0: [f64; D],
    t1: f64,
    opts: &Options,
) -> Result<[f64; D]> {
    match integrate(sys, t0, y0, t1, opts, &mut |_, _| {})?.0 {
        Outcome::Completed { y } => Ok(y),
        Outcome::Escaped { t, .. } => Err(Error::Numerical(format!("trajectory escaped at t = {t}"))),
    }
}

struct Segment<'a, S: ?Sized> {
    sys: &'a S,
    anchor: f64,
}

impl<S: ?Sized> Segment<'_, S> {
    #[inline]
    fn f<const D: usize>(&self, t: f64, y: &[f64; D]) -> [f64; D]
    where
        S: OdeSystem<D>,
    {
        self.sys.rhs(t, y, self.anchor)
    }
}

#[inline]
fn comb<const D: usize>(y: &[f64; D], h: f64, terms: &[(f64, &[f64; D])]) -> [f64; D] {
    let mut out = *y;
    for i in 0..D {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

mod tableau {
    pub const C2: f64 = 0.526001519587677318785587544488e-01;
    pub const C3: f64 = 0.789002279381515978178381316732e-01;
    pub const C4: f64 = 0.118350341907227396726757197510e+00;
    pub const C5: f64 = 0.281649658092772603273242802490e+00;
    pub const C6: f64 = 0.333333333333333333333333333333e+00;
    pub const C7: f64 = 0.25e+00;
    pub const C8: f64 = 0.307692307692307692307692307692e+00;
    pub const C9: f64 = 0.651282051282051282051282051282e+00;
    pub const C10: f64 = 0.6e+00;
    pub const C11: f64 = 0.857142857142857142857142857142e+00;
    pub const B1: f64 = 5.42937341165687622380535766363e-2;
    pub const B6: f64 = 4.45031289275240888144113950566e0;
    pub const B7: f64 = 1.89151789931450038304281599044e0;
    pub const B8: f64 = -5.8012039600105847814672114227e0;
    pub const B9: f64 = 3.1116436695781989440891606237e-1;
    pub const B10: f64 = -1.52160949662516078556178806805e-1;
    pub const B11: f64 = 2.01365400804030348374776537501e-1;
    pub const B12: f64 = 4.47106157277725905176885569043e-2;
    pub const BHH1: f64 = 0.244094488188976377952755905512e+00;
    pub const BHH2: f64 = 0.733846688281611857341361741547e+00;
    pub const BHH3: f64 = 0.220588235294117647058823529412e-01;
    pub const ER1: f64 = 0.1312004499419488073250102996e-01;
    pub const ER6: f64 = -0.1225156446376204440720569753e+01;
    pub const ER7: f64 = -0.4957589496572501915214079952e+00;
    pub const ER8: f64 = 0.1664377182454986536961530415e+01;
    pub const ER9: f64 = -0.3503288487499736816886487290e+00;
    pub const ER10: f64 = 0.3341791187130174790297318841e+00;
    pub const ER11: f64 = 0.8192320648511571246570742613e-01;
    pub const ER12: f64 = -0.2235530786388629525884427845e-01;
    pub const A21: f64 = 5.26001519587677318785587544488e-2;
    pub const A31: f64 = 1.97250569845378994544595329183e-2;
    pub const A32: f64 = 5.91751709536136983633785987549e-2;
    pub const A41: f64 = 2.95875854768068491816892993775e-2;
    pub const A43: f64 = 8.87627564304205475450678981324e-2;
    pub const A51: f64 = 2.41365134159266685502369798665e-1;
    pub const A53: f64 = -8.84549479328286085344864962717e-1;
    pub const A54: f64 = 9.24834003261792003115737966543e-1;
    pub const A61: f64 = 3.7037037037037037037037037037e-2;
    pub const A64: f64 = 1.70828608729473871279604482173e-1;
    pub const A65: f64 = 1.25467687566822425016691814123e-1;
    pub const A71: f64 = 3.7109375e-2;
    pub const A74: f64 = 1.70252211019544039314978060272e-1;
    pub const A75: f64 = 6.02165389804559606850219397283e-2;
    pub const A76: f64 = -1.7578125e-2;
    pub const A81: f64 = 3.70920001185047927108779319836e-2;
    pub const A84: f64 = 1.70383925712239993810214054705e-1;
    pub const A85: f64 = 1.07262030446373284651809199168e-1;
    pub const A86: f64 = -1.53194377486244017527936158236e-2;
    pub const A87: f64 = 8.27378916381402288758473766002e-3;
    pub const A91: f64 = 6.24110958716075717114429577812e-1;
    pub const A94: f64 = -3.36089262944694129406857109825e0;
    pub const A95: f64 = -8.68219346841726006818189891453e-1;
    pub const A96: f64 = 2.75920996994467083049415600797e1;
    pub const A97: f64 = 2.01540675504778934086186788979e1;
    pub const A98: f64 = -4.34898841810699588477366255144e1;
    pub const A101: f64 = 4.77662536438264365890433908527e-1;
    pub const A104: f64 = -2.48811461997166764192642586468e0;
    pub const A105: f64 = -5.90290826836842996371446475743e-1;
    pub const A106: f64 = 2.12300514481811942347288949897e1;
    pub const A107: f64 = 1.52792336328824235832596922938e1;
    pub const A108: f64 = -3.32882109689848629194453265587e1;
    pub const A109: f64 = -2.03312017085086261358222928593e-2;
    pub const A111: f64 = -9.3714243008598732571704021658e-1;
    pub const A114: f64 = 5.18637242884406370830023853209e0;
    pub const A115: f64 = 1.09143734899672957818500254654e0;
    pub const A116: f64 = -8.14978701074692612513997267357e0;
    pub const A117: f64 = -1.85200656599969598641566180701e1;
    pub const A118: f64 = 2.27394870993505042818970056734e1;
    pub const A119: f64 = 2.49360555267965238987089396762e0;
    pub const A1110: f64 = -3.0467644718982195003823669022e0;
    pub const A121: f64 = 2.27331014751653820792359768449e0;
    pub const A124: f64 = -1.05344954667372501984066689879e1;
    pub const A125: f64 = -2.00087205822486249909675718444e0;
    pub const A126: f64 = -1.79589318631187989172765950534e1;
    pub const A127: f64 = 2.79488845294199600508499808837e1;
    pub const A128: f64 = -2.85899827713502369474065508674e0;
    pub const A129: f64 = -8.87285693353062954433549289258e0;
    pub const A1210: f64 = 1.23605671757943030647266201528e1;
    pub const A1211: f64 = 6.43392746015763530355970484046e-1;
}

#[allow(clippy::too_many_arguments)]
fn dop853<const D: usize, S: OdeSystem<D> + ?Sized>(
    seg: &Segment<'_, S>,
    t0: f64,
    y0: [f64; D],
    t1: f64,
    opts: &Options,
    h_guess: Option<f64>,
    observer: &mut dyn FnMut(f64, &[f64; D]),
    stats: &mut Stats,
) -> Result<(Outcome<D>, f64)> {
    use tableau::*;
    const SAFE: f64 = 0.9;
    const FAC1: f64 = 0.333;
    const FAC2: f64 = 6.0;
    const BETA: f64 = 0.0;
    const EXPO1: f64 = 1.0 / 8.0 - BETA * 0.2;

    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    let hmax = opts.max_step.min(span);
    let mut t = t0;
    let mut y = y0;
    let mut k1 = seg.f(t, &y);
    stats.evaluations += 1;
    let mut h = match h_guess {
        Some(h) => h.abs().min(hmax),
        None => initial_step(seg, t, &y, &k1, dir, hmax, opts, stats),
    };
    let mut facold: f64 = 1e-4;
    let mut reject = false;
    let mut steps = 0usize;
    loop {
        if steps >= opts.max_steps {
            return Err(Error::Numerical(format!(
                "step budget of {} exhausted at t = {t}",
                opts.max_steps
            )));
        }
        let remaining = (t1 - t).abs();
        let last = h >= remaining * (1.0 - 1e-13) || remaining - h <= 1e-14 * span.max(1.0);
        if last {
            h = remaining;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::Numerical(format!("step size underflow at t = {t}")));
        }
        steps += 1;
        let hs = dir * h;

        let y2 = comb(&y, hs, &[(A21, &k1)]);
        let k2 = seg.f(t + C2 * hs, &y2);
        let y3 = comb(&y, hs, &[(A31, &k1), (A32, &k2)]);
        let k3 = seg.f(t + C3 * hs, &y3);
        let y4 = comb(&y, hs, &[(A41, &k1), (A43, &k3)]);
        let k4 = seg.f(t + C4 * hs, &y4);
        let y5 = comb(&y, hs, &[(A51, &k1), (A53, &k3), (A54, &k4)]);
        let k5 = seg.f(t + C5 * hs, &y5);
        let y6 = comb(&y, hs, &[(A61, &k1), (A64, &k4), (A65, &k5)]);
        let k6 = seg.f(t + C6 * hs, &y6);
        let y7 = comb(&y, hs, &[(A71, &k1), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = seg.f(t + C7 * hs, &y7);
        let y8 = comb(
            &y,
            hs,
            &[(A81, &k1), (A84, &k4), (A85, &k5), (A86, &k6), (A87, &k7)],
        );
        let k8 = seg.f(t + C8 * hs, &y8);
        let y9 = comb(
            &y,
            hs,
            &[
                (A91, &k1),
                (A94, &k4),
                (A95, &k5),
                (A96, &k6),
                (A97, &k7),
                (A98, &k8),
            ],
        );
        let k9 = seg.f(t + C9 * hs, &y9);
        let y10 = comb(
            &y,
            hs,
            &[
                (A101, &k1),
                (A104, &k4),
                (A105, &k5),
                (A106, &k6),
                (A107, &k7),
                (A108, &k8),
                (A109, &k9),
            ],
        );
        let k10 = seg.f(t + C10 * hs, &y10);
        let y11 = comb(
            &y,
            hs,
            &[
                (A111, &k1),
                (A114, &k4),
                (A115, &k5),
                (A116, &k6),
                (A117, &k7),
                (A118, &k8),
                (A119, &k9),
                (A1110, &k10),
            ],
        );
        let k11 = seg.f(t + C11 * hs, &y11);
        let y12 = comb(
            &y,
            hs,
            &[
                (A121, &k1),
                (A124, &k4),
                (A125, &k5),
                (A126, &k6),
                (A127, &k7),
                (A128, &k8),
                (A129, &k9),
                (A1210, &k10),
                (A1211, &k11),
            ],
        );
        let t_new = if last { t1 } else { t + hs };
        let k12 = seg.f(t_new, &y12);
        stats.evaluations += 11;

        let mut incr = [0.0; D];
        for i in 0..D {
            incr[i] = B1 * k1[i]
                + B6 * k6[i]
                + B7 * k7[i]
                + B8 * k8[i]
                + B9 * k9[i]
                + B10 * k10[i]
                + B11 * k11[i]
                + B12 * k12[i];
        }
        let mut y_new = y;
        for i in 0..D {
            y_new[i] += hs * incr[i];
        }

        let mut err3 = 0.0;
        let mut err5 = 0.0;
        for i in 0..D {
            let sk = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            let e3 = incr[i] - BHH1 * k1[i] - BHH2 * k9[i] - BHH3 * k12[i];
            let e5 = ER1 * k1[i]
                + ER6 * k6[i]
                + ER7 * k7[i]
                + ER8 * k8[i]
                + ER9 * k9[i]
                + ER10 * k10[i]
                + ER11 * k11[i]
                + ER12 * k12[i];
            err3 += (e3 / sk).powi(2);
            err5 += (e5 / sk).powi(2);
        }
        let mut deno = err5 + 0.01 * err3;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let err = h * err5 / (D as f64 * deno).sqrt();
        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            stats.rejected += 1;
            h *= 0.1;
            reject = true;
            continue;
        }

        let fac11 = err.powf(EXPO1);
        let fac = (fac11 / facold.powf(BETA) / SAFE).clamp(1.0 / FAC2, 1.0 / FAC1);
        let h_new = h / fac;

        if err <= 1.0 {
            facold = err.max(1e-4);
            stats.accepted += 1;
            let last_accepted_h = h;
            k1 = seg.f(t_new, &y_new);
            stats.evaluations += 1;
            t = t_new;
            y = y_new;
            observer(t, &y);
            if seg.sys.escaped(&y) {
                return Ok((Outcome::Escaped { t, y }, last_accepted_h));
            }
            if last {
                return Ok((Outcome::Completed { y }, last_accepted_h));
            }
            h = if reject { h_new.min(h) } else { h_new }.min(hmax);
            reject = false;
        } else {
            stats.rejected += 1;
            h /= (fac11 / SAFE).min(1.0 / FAC1);
            reject = true;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn initial_step<const D: usize, S: OdeSystem<D> + ?Sized>(
    seg: &Segment<'_, S>,
    t: f64,
    y: &[f64; D],
    f0: &[f64; D],
    dir: f64,
    hmax: f64,
    opts: &Options,
    stats: &mut Stats,
) -> f64 {
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..D {
        let sk = opts.atol + opts.rtol * y[i].abs();
        dnf += (f0[i] / sk).powi(2);
        dny += (y[i] / sk).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(hmax);
    let y1 = comb(y, dir * h, &[(1.0, f0)]);
    let f1 = seg.f(t + dir * h, &y1);
    stats.evaluations += 1;
    let mut der2 = 0.0;
    for i in 0..D {
        let sk = opts.atol + opts.rtol * y[i].abs();
        der2 += ((f1[i] - f0[i]) / sk).powi(2);
    }
    let der2 = der2.sqrt() / h;
    let der12 = der2.max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(1.0 / 8.0)
    };
    (100.0 * h).min(h1).min(hmax)
}

/// Fourth-order Yoshida composition of the leapfrog scheme for
/// `x' = mass·y`, `y' = force(x, t)`; time is advanced with the drifts.
pub fn yoshida4<F: Fn(f64, f64) -> f64>(
    mass: f64,
    force: F,
    mut x: f64,
    mut y: f64,
    mut t: f64,
    h: f64,
    steps: usize,
) -> (f64, f64, f64) {
    let cbrt2 = 2f64.cbrt();
    let w1 = 1.0 / (2.0 - cbrt2);
    let w0 = -cbrt2 * w1;
    let drift = [w1 / 2.0, (w0 + w1) / 2.0, (w0 + w1) / 2.0, w1 / 2.0];
    let kick = [w1, w0, w1];
    for _ in 0..steps {
        for s in 0..3 {
            x += drift[s] * h * mass * y;
            t += drift[s] * h;
            y += kick[s] * h * force(x, t);
        }
        x += drift[3] * h * mass * y;
        t += drift[3] * h;
    }
    (x, y, t)
}
