//! Spectral fields `F(μ, θ, t)`: Chebyshev in the action `μ` over a window,
//! Fourier in the angle `θ` and in time `t` (both 1-periodic).
//!
//! Coefficients are complex and stored densely as `[i][q + Kθ][m + Kt]` for
//! `T_i(u(μ)) e^{2πi(qθ + mt)}`. Real fields satisfy `c[i][-q][-m] = conj c[i][q][m]`;
//! projection from real samples produces that symmetry exactly.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{param_err, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Relative trailing mass below which coefficients are dropped.
pub const TRIM_TOLERANCE: f64 = 1e-12;

/// Sampling grid used to project onto an [`AngleTimeField`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSize {
    /// Chebyshev nodes in `μ`.
    pub n_mu: usize,
    /// Uniform samples per period in `θ` (power of two recommended).
    pub n_theta: usize,
    /// Uniform samples per period in `t`.
    pub n_t: usize,
}

impl GridSize {
    pub fn new(n_mu: usize, n_theta: usize, n_t: usize) -> Result<Self> {
        if n_mu < 2 || n_theta < 4 || n_t < 1 {
            return param_err(format!(
                "grid too small: {n_mu} x {n_theta} x {n_t} (need at least 2 x 4 x 1)"
            ));
        }
        Ok(Self { n_mu, n_theta, n_t })
    }

    pub fn points(&self) -> usize {
        self.n_mu * self.n_theta * self.n_t
    }
}

/// Chebyshev points of the first kind mapped to `[lo, hi]`, in decreasing order.
pub fn chebyshev_nodes(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let u = (PI * (k as f64 + 0.5) / n as f64).cos();
            0.5 * (lo + hi) + 0.5 * (hi - lo) * u
        })
        .collect()
}

/// Values of `T_0..T_{k-1}` at `u`.
fn chebyshev_basis(u: f64, k: usize, out: &mut Vec<f64>) {
    out.clear();
    if k == 0 {
        return;
    }
    out.push(1.0);
    if k > 1 {
        out.push(u);
    }
    for i in 2..k {
        let next = 2.0 * u * out[i - 1] - out[i - 2];
        out.push(next);
    }
}

/// Chebyshev coefficients of the derivative (in `u`) of `Σ a_k T_k`.
fn chebyshev_derivative(a: &[Complex64]) -> Vec<Complex64> {
    let n = a.len();
    if n <= 1 {
        return vec![ZERO];
    }
    let mut b = vec![ZERO; n + 1];
    for k in (1..n).rev() {
        b[k - 1] = b[k + 1] + a[k] * (2.0 * k as f64);
    }
    b[0] *= 0.5;
    b.truncate(n - 1);
    b
}

/// Chebyshev coefficients from values at the first-kind nodes; `data` holds
/// `block` values per node.
fn chebyshev_transform(n_mu: usize, block: usize, data: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![ZERO; n_mu * block];
    for k in 0..n_mu {
        let weight = if k == 0 { 1.0 } else { 2.0 } / n_mu as f64;
        for i in 0..n_mu {
            let ck = weight * (PI * k as f64 * (i as f64 + 0.5) / n_mu as f64).cos();
            let src = &data[i * block..(i + 1) * block];
            let dst = &mut out[k * block..(k + 1) * block];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s * ck;
            }
        }
    }
    out
}

#[derive(Clone)]
struct Plans {
    theta_fwd: Arc<dyn Fft<f64>>,
    theta_inv: Arc<dyn Fft<f64>>,
    t_fwd: Arc<dyn Fft<f64>>,
    t_inv: Arc<dyn Fft<f64>>,
}

impl Plans {
    fn new(n_theta: usize, n_t: usize) -> Self {
        let mut p = FftPlanner::new();
        Self {
            theta_fwd: p.plan_fft_forward(n_theta),
            theta_inv: p.plan_fft_inverse(n_theta),
            t_fwd: p.plan_fft_forward(n_t),
            t_inv: p.plan_fft_inverse(n_t),
        }
    }
}

/// Frequency index of FFT bin `b` in a length-`n` transform.
fn bin_freq(b: usize, n: usize) -> i64 {
    if b <= n / 2 {
        b as i64
    } else {
        b as i64 - n as i64
    }
}

fn freq_bin(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

/// A real spectral field on `[lo, hi] × T × T`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleTimeField {
    lo: f64,
    hi: f64,
    kmu: usize,
    ktheta: usize,
    kt: usize,
    coeffs: Vec<Complex64>,
}

impl AngleTimeField {
    pub fn zero(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            kmu: 1,
            ktheta: 0,
            kt: 0,
            coeffs: vec![ZERO],
        }
    }

    fn with_shape(lo: f64, hi: f64, kmu: usize, ktheta: usize, kt: usize) -> Self {
        Self {
            lo,
            hi,
            kmu,
            ktheta,
            kt,
            coeffs: vec![ZERO; kmu * (2 * ktheta + 1) * (2 * kt + 1)],
        }
    }

    #[inline]
    fn idx(&self, i: usize, q: i64, m: i64) -> usize {
        let nq = 2 * self.ktheta + 1;
        let nm = 2 * self.kt + 1;
        (i * nq + (q + self.ktheta as i64) as usize) * nm + (m + self.kt as i64) as usize
    }

    /// Action window `[lo, hi]`.
    pub fn window(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// `(Chebyshev terms, max |q|, max |m|)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.kmu, self.ktheta, self.kt)
    }

    /// Coefficient of `T_i e^{2πi(qθ + mt)}` (zero outside the stored range).
    pub fn coefficient(&self, i: usize, q: i64, m: i64) -> Complex64 {
        if i >= self.kmu || q.unsigned_abs() as usize > self.ktheta || m.unsigned_abs() as usize > self.kt
        {
            return ZERO;
        }
        self.coeffs[self.idx(i, q, m)]
    }

    pub fn is_theta_independent(&self) -> bool {
        self.ktheta == 0
    }

    #[inline]
    fn u_of(&self, mu: f64) -> f64 {
        (2.0 * mu - self.lo - self.hi) / (self.hi - self.lo)
    }

    fn mu_scale(&self) -> f64 {
        2.0 / (self.hi - self.lo)
    }

    /// Projects samples `f(μ_i, θ_j, t_m)` on the Chebyshev × uniform × uniform grid.
    pub fn from_fn<F: Fn(f64, f64, f64) -> f64 + Sync>(
        lo: f64,
        hi: f64,
        grid: GridSize,
        f: F,
    ) -> Self {
        let nodes = chebyshev_nodes(lo, hi, grid.n_mu);
        let mut values = vec![0.0; grid.points()];
        for (i, &mu) in nodes.iter().enumerate() {
            for j in 0..grid.n_theta {
                let th = j as f64 / grid.n_theta as f64;
                for m in 0..grid.n_t {
                    let t = m as f64 / grid.n_t as f64;
                    values[(i * grid.n_theta + j) * grid.n_t + m] = f(mu, th, t);
                }
            }
        }
        Self::from_values(lo, hi, grid, &values)
    }

    /// Projection from samples laid out as `[i][j][m]` on the grid of `grid`.
    pub fn from_values(lo: f64, hi: f64, grid: GridSize, values: &[f64]) -> Self {
        assert_eq!(values.len(), grid.points());
        let GridSize { n_mu, n_theta, n_t } = grid;
        let plans = Plans::new(n_theta, n_t);
        // Largest frequencies kept: strictly below Nyquist so the real
        // symmetry is exact.
        let kq = (n_theta - 1) / 2;
        let km = (n_t - 1) / 2;
        let nq = 2 * kq + 1;
        let nm = 2 * km + 1;
        // per node 2-D spectrum
        let mut spec_nodes = vec![ZERO; n_mu * nq * nm];
        let mut buf = vec![ZERO; n_theta * n_t];
        let mut col = vec![ZERO; n_theta];
        for i in 0..n_mu {
            for j in 0..n_theta {
                for m in 0..n_t {
                    buf[j * n_t + m] = Complex64::new(values[(i * n_theta + j) * n_t + m], 0.0);
                }
                plans.t_fwd.process(&mut buf[j * n_t..(j + 1) * n_t]);
            }
            for m in 0..n_t {
                let mf = bin_freq(m, n_t);
                if mf.unsigned_abs() as usize > km {
                    continue;
                }
                for j in 0..n_theta {
                    col[j] = buf[j * n_t + m];
                }
                plans.theta_fwd.process(&mut col);
                for q in -(kq as i64)..=kq as i64 {
                    let v = col[freq_bin(q, n_theta)] / (n_theta * n_t) as f64;
                    spec_nodes[(i * nq + (q + kq as i64) as usize) * nm + (mf + km as i64) as usize] = v;
                }
            }
        }
        let mut out = Self::with_shape(lo, hi, n_mu, kq, km);
        out.coeffs = chebyshev_transform(n_mu, nq * nm, &spec_nodes);
        out.symmetrize();
        out.trimmed(TRIM_TOLERANCE)
    }

    /// Projection from mixed data `v[i][q + kθ][m]`: the θ-mode `q` of the
    /// field at Chebyshev node `i` and time `m / n_t`.
    pub fn from_mixed(lo: f64, hi: f64, n_mu: usize, ktheta: usize, n_t: usize, values: &[Complex64]) -> Self {
        let nq = 2 * ktheta + 1;
        assert_eq!(values.len(), n_mu * nq * n_t);
        let fwd = FftPlanner::new().plan_fft_forward(n_t);
        let km = (n_t - 1) / 2;
        let nm = 2 * km + 1;
        let mut spec_nodes = vec![ZERO; n_mu * nq * nm];
        let mut buf = vec![ZERO; n_t];
        for i in 0..n_mu {
            for qi in 0..nq {
                let off = (i * nq + qi) * n_t;
                buf.copy_from_slice(&values[off..off + n_t]);
                fwd.process(&mut buf);
                for m in -(km as i64)..=km as i64 {
                    spec_nodes[(i * nq + qi) * nm + (m + km as i64) as usize] =
                        buf[freq_bin(m, n_t)] / n_t as f64;
                }
            }
        }
        let mut out = Self::with_shape(lo, hi, n_mu, ktheta, km);
        out.coeffs = chebyshev_transform(n_mu, nq * nm, &spec_nodes);
        out.symmetrize();
        out.trimmed(TRIM_TOLERANCE)
    }

    /// θ-modes sampled at the given actions and at `t = m / n_t`, laid out
    /// `[i][q + Kθ][m]` (the inverse of [`AngleTimeField::from_mixed`]).
    pub fn mixed_values(&self, mus: &[f64], n_t: usize) -> Vec<Complex64> {
        assert!(n_t > 2 * self.kt, "time grid does not resolve the stored modes");
        let inv = FftPlanner::new().plan_fft_inverse(n_t);
        let nq = 2 * self.ktheta + 1;
        let mut out = vec![ZERO; mus.len() * nq * n_t];
        let mut basis = Vec::new();
        let mut buf = vec![ZERO; n_t];
        for (a, &mu) in mus.iter().enumerate() {
            chebyshev_basis(self.u_of(mu), self.kmu, &mut basis);
            for q in -(self.ktheta as i64)..=self.ktheta as i64 {
                buf.iter_mut().for_each(|v| *v = ZERO);
                for m in -(self.kt as i64)..=self.kt as i64 {
                    let mut c = ZERO;
                    for (i, b) in basis.iter().enumerate() {
                        c += self.coeffs[self.idx(i, q, m)] * b;
                    }
                    buf[freq_bin(m, n_t)] = c;
                }
                inv.process(&mut buf);
                let off = (a * nq + (q + self.ktheta as i64) as usize) * n_t;
                out[off..off + n_t].copy_from_slice(&buf);
            }
        }
        out
    }

    /// Enforces `c[-q][-m] = conj c[q][m]` by averaging.
    fn symmetrize(&mut self) {
        let kq = self.ktheta as i64;
        let km = self.kt as i64;
        for i in 0..self.kmu {
            for q in -kq..=kq {
                for m in -km..=km {
                    let (a, b) = (self.idx(i, q, m), self.idx(i, -q, -m));
                    if a < b {
                        let avg = 0.5 * (self.coeffs[a] + self.coeffs[b].conj());
                        self.coeffs[a] = avg;
                        self.coeffs[b] = avg.conj();
                    } else if a == b {
                        self.coeffs[a].im = 0.0;
                    }
                }
            }
        }
    }

    /// Drops trailing Chebyshev/θ/t coefficients whose mass is below `tol`
    /// times the total mass.
    pub fn trimmed(&self, tol: f64) -> Self {
        let total: f64 = self.coeffs.iter().map(|c| c.norm()).sum();
        if total == 0.0 {
            return Self::zero(self.lo, self.hi);
        }
        let kq = self.ktheta as i64;
        let km = self.kt as i64;
        let mut mass_i = vec![0.0; self.kmu];
        let mut mass_q = vec![0.0; self.ktheta + 1];
        let mut mass_m = vec![0.0; self.kt + 1];
        for i in 0..self.kmu {
            for q in -kq..=kq {
                for m in -km..=km {
                    let v = self.coeffs[self.idx(i, q, m)].norm();
                    mass_i[i] += v;
                    mass_q[q.unsigned_abs() as usize] += v;
                    mass_m[m.unsigned_abs() as usize] += v;
                }
            }
        }
        let cut = |mass: &[f64]| -> usize {
            let mut tail = 0.0;
            let mut keep = mass.len();
            for k in (0..mass.len()).rev() {
                tail += mass[k];
                if tail > tol * total {
                    break;
                }
                keep = k;
            }
            keep.max(1)
        };
        let nkmu = cut(&mass_i);
        let nkq = cut(&mass_q) - 1;
        let nkm = cut(&mass_m) - 1;
        let mut out = Self::with_shape(self.lo, self.hi, nkmu, nkq, nkm);
        for i in 0..nkmu {
            for q in -(nkq as i64)..=nkq as i64 {
                for m in -(nkm as i64)..=nkm as i64 {
                    let d = out.idx(i, q, m);
                    out.coeffs[d] = self.coeffs[self.idx(i, q, m)];
                }
            }
        }
        out
    }

    /// Point evaluation (direct triple sum).
    pub fn eval(&self, mu: f64, theta: f64, t: f64) -> f64 {
        self.t_slice(t).eval(mu, theta)
    }

    /// Evaluation at complex angle and time.
    pub fn eval_complex(&self, mu: f64, theta: Complex64, t: Complex64) -> Complex64 {
        let mut basis = Vec::new();
        chebyshev_basis(self.u_of(mu), self.kmu, &mut basis);
        let kq = self.ktheta as i64;
        let km = self.kt as i64;
        let mut acc = ZERO;
        for q in -kq..=kq {
            let eq = (Complex64::new(0.0, TAU * q as f64) * theta).exp();
            for m in -km..=km {
                let em = (Complex64::new(0.0, TAU * m as f64) * t).exp();
                let mut c = ZERO;
                for (i, b) in basis.iter().enumerate() {
                    c += self.coeffs[self.idx(i, q, m)] * b;
                }
                acc += c * eq * em;
            }
        }
        acc
    }

    /// Restriction to a fixed time: a `(μ, θ)` field.
    pub fn t_slice(&self, t: f64) -> MuThetaSlice {
        let kq = self.ktheta as i64;
        let km = self.kt as i64;
        let w = Complex64::from_polar(1.0, TAU * t.rem_euclid(1.0));
        let mut pows = vec![ZERO; 2 * self.kt + 1];
        pows[self.kt] = Complex64::new(1.0, 0.0);
        for m in 1..=self.kt {
            pows[self.kt + m] = pows[self.kt + m - 1] * w;
            pows[self.kt - m] = pows[self.kt + m].conj();
        }
        let nq = 2 * self.ktheta + 1;
        let mut coeffs = vec![ZERO; self.kmu * nq];
        for i in 0..self.kmu {
            for q in -kq..=kq {
                let base = self.idx(i, q, -km);
                let mut acc = ZERO;
                for (c, p) in self.coeffs[base..base + pows.len()].iter().zip(&pows) {
                    acc += c * p;
                }
                coeffs[i * nq + (q + kq) as usize] = acc;
            }
        }
        MuThetaSlice {
            lo: self.lo,
            hi: self.hi,
            kmu: self.kmu,
            ktheta: self.ktheta,
            coeffs,
        }
    }

    /// Restrictions to `t = m / n_t` for `m = 0..n_t`, computed with one
    /// inverse FFT per `(i, q)` pair.
    pub fn t_slices(&self, n_t: usize) -> Vec<MuThetaSlice> {
        if n_t <= 2 * self.kt {
            return (0..n_t).map(|m| self.t_slice(m as f64 / n_t as f64)).collect();
        }
        let inv = FftPlanner::new().plan_fft_inverse(n_t);
        let nq = 2 * self.ktheta + 1;
        let mut slices: Vec<Vec<Complex64>> = vec![vec![ZERO; self.kmu * nq]; n_t];
        let mut buf = vec![ZERO; n_t];
        for i in 0..self.kmu {
            for q in -(self.ktheta as i64)..=self.ktheta as i64 {
                buf.iter_mut().for_each(|v| *v = ZERO);
                for m in -(self.kt as i64)..=self.kt as i64 {
                    buf[freq_bin(m, n_t)] = self.coeffs[self.idx(i, q, m)];
                }
                inv.process(&mut buf);
                let k = i * nq + (q + self.ktheta as i64) as usize;
                for (sl, v) in slices.iter_mut().zip(&buf) {
                    sl[k] = *v;
                }
            }
        }
        slices
            .into_iter()
            .map(|coeffs| MuThetaSlice {
                lo: self.lo,
                hi: self.hi,
                kmu: self.kmu,
                ktheta: self.ktheta,
                coeffs,
            })
            .collect()
    }

    /// θ-mean: keeps only `q = 0`.
    pub fn theta_mean(&self) -> Self {
        let mut out = Self::with_shape(self.lo, self.hi, self.kmu, 0, self.kt);
        for i in 0..self.kmu {
            for m in -(self.kt as i64)..=self.kt as i64 {
                let d = out.idx(i, 0, m);
                out.coeffs[d] = self.coeffs[self.idx(i, 0, m)];
            }
        }
        out
    }

    /// `F - [F]_θ`.
    pub fn theta_oscillation(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.kmu {
            for m in -(self.kt as i64)..=self.kt as i64 {
                let d = out.idx(i, 0, m);
                out.coeffs[d] = ZERO;
            }
        }
        out
    }

    pub fn d_theta(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.kmu {
            for q in -(self.ktheta as i64)..=self.ktheta as i64 {
                for m in -(self.kt as i64)..=self.kt as i64 {
                    let d = out.idx(i, q, m);
                    out.coeffs[d] *= Complex64::new(0.0, TAU * q as f64);
                }
            }
        }
        out
    }

    pub fn d_t(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.kmu {
            for q in -(self.ktheta as i64)..=self.ktheta as i64 {
                for m in -(self.kt as i64)..=self.kt as i64 {
                    let d = out.idx(i, q, m);
                    out.coeffs[d] *= Complex64::new(0.0, TAU * m as f64);
                }
            }
        }
        out
    }

    pub fn d_mu(&self) -> Self {
        let nkmu = (self.kmu.max(2)) - 1;
        let mut out = Self::with_shape(self.lo, self.hi, nkmu, self.ktheta, self.kt);
        let scale = self.mu_scale();
        let mut column = vec![ZERO; self.kmu];
        for q in -(self.ktheta as i64)..=self.ktheta as i64 {
            for m in -(self.kt as i64)..=self.kt as i64 {
                for (i, c) in column.iter_mut().enumerate() {
                    *c = self.coeffs[self.idx(i, q, m)];
                }
                let der = chebyshev_derivative(&column);
                for (i, d) in der.iter().enumerate().take(nkmu) {
                    let k = out.idx(i, q, m);
                    out.coeffs[k] = d * scale;
                }
            }
        }
        out
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.coeffs {
            *c *= a;
        }
        out
    }

    /// Sum of two fields on the same window.
    pub fn add(&self, other: &Self) -> Self {
        assert!(
            self.lo == other.lo && self.hi == other.hi,
            "fields live on different windows"
        );
        let kmu = self.kmu.max(other.kmu);
        let kq = self.ktheta.max(other.ktheta);
        let km = self.kt.max(other.kt);
        let mut out = Self::with_shape(self.lo, self.hi, kmu, kq, km);
        for i in 0..kmu {
            for q in -(kq as i64)..=kq as i64 {
                for m in -(km as i64)..=km as i64 {
                    let d = out.idx(i, q, m);
                    out.coeffs[d] = self.coefficient(i, q, m) + other.coefficient(i, q, m);
                }
            }
        }
        out
    }

    /// `Σ |c| e^{2π(|q| sθ + |m| st)}`, a bound on `|F|` for real `μ` in the
    /// window and `|Im θ| <= sθ`, `|Im t| <= st`.
    pub fn envelope(&self, s_theta: f64, s_t: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.kmu {
            for q in -(self.ktheta as i64)..=self.ktheta as i64 {
                for m in -(self.kt as i64)..=self.kt as i64 {
                    let w = (TAU * (q.abs() as f64 * s_theta + m.abs() as f64 * s_t)).exp();
                    acc += self.coeffs[self.idx(i, q, m)].norm() * w;
                }
            }
        }
        acc
    }

    /// Samples on `mus × {j/n_theta} × {m/n_t}`, laid out `[i][j][m]`.
    ///
    /// Uses zero-padded inverse FFTs when the grid resolves the stored modes
    /// and direct summation otherwise.
    pub fn sample(&self, mus: &[f64], n_theta: usize, n_t: usize) -> Vec<f64> {
        let mut out = vec![0.0; mus.len() * n_theta * n_t];
        if n_theta > 2 * self.ktheta && n_t > 2 * self.kt {
            let plans = Plans::new(n_theta, n_t);
            let mut basis = Vec::new();
            let mut buf = vec![ZERO; n_theta * n_t];
            let mut col = vec![ZERO; n_theta];
            for (a, &mu) in mus.iter().enumerate() {
                chebyshev_basis(self.u_of(mu), self.kmu, &mut basis);
                buf.iter_mut().for_each(|v| *v = ZERO);
                for q in -(self.ktheta as i64)..=self.ktheta as i64 {
                    for m in -(self.kt as i64)..=self.kt as i64 {
                        let mut c = ZERO;
                        for (i, b) in basis.iter().enumerate() {
                            c += self.coeffs[self.idx(i, q, m)] * b;
                        }
                        buf[freq_bin(q, n_theta) * n_t + freq_bin(m, n_t)] = c;
                    }
                }
                for j in 0..n_theta {
                    plans.t_inv.process(&mut buf[j * n_t..(j + 1) * n_t]);
                }
                for m in 0..n_t {
                    for j in 0..n_theta {
                        col[j] = buf[j * n_t + m];
                    }
                    plans.theta_inv.process(&mut col);
                    for j in 0..n_theta {
                        out[(a * n_theta + j) * n_t + m] = col[j].re;
                    }
                }
            }
        } else {
            for m in 0..n_t {
                let slice = self.t_slice(m as f64 / n_t as f64);
                for (a, &mu) in mus.iter().enumerate() {
                    for j in 0..n_theta {
                        out[(a * n_theta + j) * n_t + m] = slice.eval(mu, j as f64 / n_theta as f64);
                    }
                }
            }
        }
        out
    }

    /// `max |F|` over `n_mu` equispaced actions (window endpoints included)
    /// and the uniform `n_theta × n_t` grid.
    pub fn sup_on_grid(&self, n_mu: usize, n_theta: usize, n_t: usize) -> f64 {
        let mus: Vec<f64> = (0..n_mu)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (n_mu - 1).max(1) as f64)
            .collect();
        self.sup_at(&mus, n_theta, n_t)
    }

    /// `max |F|` over `mus × {j/n_theta} × {m/n_t}`.
    pub fn sup_at(&self, mus: &[f64], n_theta: usize, n_t: usize) -> f64 {
        self.sample(mus, n_theta, n_t)
            .iter()
            .fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    /// Sampling resolution adequate for sup estimates of this field.
    pub fn verification_grid(&self) -> (usize, usize, usize) {
        (
            (2 * self.kmu + 1).max(17),
            (3 * self.ktheta + 4).next_power_of_two().max(16),
            (3 * self.kt + 4).next_power_of_two().max(8),
        )
    }

    /// `max |F|` on a grid finer than the stored modes.
    pub fn sup_norm(&self) -> f64 {
        let (a, b, c) = self.verification_grid();
        self.sup_on_grid(a, b, c)
    }
}

/// A field frozen at one time: Chebyshev in `μ` × Fourier in `θ`.
#[derive(Debug, Clone)]
pub struct MuThetaSlice {
    lo: f64,
    hi: f64,
    kmu: usize,
    ktheta: usize,
    coeffs: Vec<Complex64>,
}

impl MuThetaSlice {
    /// Fourier series in `θ` at fixed `μ`.
    pub fn at_mu(&self, mu: f64) -> ThetaSeries {
        let nq = 2 * self.ktheta + 1;
        let u = (2.0 * mu - self.lo - self.hi) / (self.hi - self.lo);
        let mut out = vec![ZERO; self.ktheta + 1];
        // Clenshaw in μ for the q >= 0 half; q < 0 follows by symmetry
        let mut b1 = vec![ZERO; self.ktheta + 1];
        let mut b2 = vec![ZERO; self.ktheta + 1];
        for i in (0..self.kmu).rev() {
            let row = &self.coeffs[i * nq + self.ktheta..(i + 1) * nq];
            for q in 0..=self.ktheta {
                let b0 = if i == 0 {
                    row[q] + b1[q] * u - b2[q]
                } else {
                    row[q] + b1[q] * (2.0 * u) - b2[q]
                };
                b2[q] = b1[q];
                b1[q] = b0;
            }
        }
        out.copy_from_slice(&b1);
        ThetaSeries { coeffs: out }
    }

    pub fn eval(&self, mu: f64, theta: f64) -> f64 {
        self.at_mu(mu).eval(theta)
    }
}

/// Real Fourier series `Σ_{|q|<=K} c_q e^{2πiqθ}` stored by `c_0..c_K`.
#[derive(Debug, Clone)]
pub struct ThetaSeries {
    coeffs: Vec<Complex64>,
}

impl ThetaSeries {
    pub fn eval(&self, theta: f64) -> f64 {
        let w = Complex64::from_polar(1.0, TAU * theta.rem_euclid(1.0));
        let mut p = Complex64::new(1.0, 0.0);
        let mut acc = 0.0;
        for c in &self.coeffs[1..] {
            p *= w;
            acc += (c * p).re;
        }
        self.coeffs[0].re + 2.0 * acc
    }

    /// Value and θ-derivative.
    pub fn eval_with_derivative(&self, theta: f64) -> (f64, f64) {
        let w = Complex64::from_polar(1.0, TAU * theta.rem_euclid(1.0));
        let mut p = Complex64::new(1.0, 0.0);
        let mut v = 0.0;
        let mut d = 0.0;
        for (q, c) in self.coeffs.iter().enumerate().skip(1) {
            p *= w;
            let z = c * p;
            v += z.re;
            d -= TAU * q as f64 * z.im;
        }
        (self.coeffs[0].re + 2.0 * v, 2.0 * d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_fn(mu: f64, th: f64, t: f64) -> f64 {
        mu.powf(4.0 / 3.0) * (TAU * th).cos() * (1.0 + 0.3 * (TAU * t).sin())
            + 0.2 * mu * (TAU * (2.0 * th - t)).sin()
            + 0.1 / mu
    }

    fn grid() -> GridSize {
        GridSize::new(32, 16, 16).unwrap()
    }

    #[test]
    fn projection_reproduces_smooth_function() {
        let f = AngleTimeField::from_fn(1.0, 4.0, grid(), sample_fn);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..300 {
            let mu = rng.gen_range(1.0..4.0);
            let th = rng.gen_range(-1.0..2.0);
            let t = rng.gen_range(-1.0..2.0);
            assert!((f.eval(mu, th, t) - sample_fn(mu, th, t)).abs() < 1e-11);
        }
        let (_, kq, km) = f.shape();
        assert_eq!((kq, km), (2, 1));
    }

    #[test]
    fn conjugate_symmetry_and_complex_evaluation() {
        let f = AngleTimeField::from_fn(1.0, 4.0, grid(), sample_fn);
        for i in 0..f.kmu {
            for q in -2..=2 {
                for m in -1..=1 {
                    assert_eq!(f.coefficient(i, q, m), f.coefficient(i, -q, -m).conj());
                }
            }
        }
        let z = f.eval_complex(2.2, Complex64::new(0.3, 0.0), Complex64::new(0.7, 0.0));
        assert!(z.im.abs() < 1e-13 && (z.re - sample_fn(2.2, 0.3, 0.7)).abs() < 1e-11);
        let th = Complex64::new(0.3, 0.05);
        let t = Complex64::new(0.7, -0.02);
        let a = f.eval_complex(2.2, th, t);
        let b = f.eval_complex(2.2, th.conj(), t.conj());
        assert!((a - b.conj()).norm() < 1e-12);
        assert!(a.norm() <= f.envelope(0.05, 0.02));
    }

    #[test]
    fn derivatives_are_spectral() {
        let f = AngleTimeField::from_fn(1.0, 4.0, grid(), sample_fn);
        let h = 1e-3;
        let (mu, th, t) = (2.3, 0.17, 0.61);
        // five-point stencil, truncation error O(h^4)
        let d5 = |g: &dyn Fn(f64) -> f64, x: f64| {
            (g(x - 2.0 * h) - 8.0 * g(x - h) + 8.0 * g(x + h) - g(x + 2.0 * h)) / (12.0 * h)
        };
        let fd_mu = d5(&|x| sample_fn(x, th, t), mu);
        let fd_th = d5(&|x| sample_fn(mu, x, t), th);
        let fd_t = d5(&|x| sample_fn(mu, th, x), t);
        assert!((f.d_mu().eval(mu, th, t) - fd_mu).abs() < 1e-8);
        assert!((f.d_theta().eval(mu, th, t) - fd_th).abs() < 1e-8);
        assert!((f.d_t().eval(mu, th, t) - fd_t).abs() < 1e-8);
        let (v, d) = f.t_slice(t).at_mu(mu).eval_with_derivative(th);
        assert!((v - sample_fn(mu, th, t)).abs() < 1e-11 && (d - fd_th).abs() < 1e-8);
    }

    #[test]
    fn theta_mean_matches_trapezoid() {
        let f = AngleTimeField::from_fn(1.0, 4.0, grid(), sample_fn);
        let mean = f.theta_mean();
        assert!(mean.is_theta_independent());
        for (mu, t) in [(1.3, 0.2), (3.7, 0.9)] {
            let m = 64;
            let quad: f64 = (0..m).map(|j| f.eval(mu, j as f64 / m as f64, t)).sum::<f64>() / m as f64;
            assert!((mean.eval(mu, 0.123, t) - quad).abs() < 1e-12);
            assert!((quad - 0.1 / mu).abs() < 1e-11);
        }
        let osc = f.theta_oscillation();
        assert!(osc.theta_mean().sup_norm() == 0.0);
    }

    #[test]
    fn sampling_routes_agree() {
        let f = AngleTimeField::from_fn(1.0, 4.0, grid(), sample_fn);
        let mus = [1.0, 2.5, 4.0];
        let fast = f.sample(&mus, 8, 8);
        let slow = f.sample(&mus, 4, 2);
        for (a, &mu) in mus.iter().enumerate() {
            for j in 0..8 {
                for m in 0..8 {
                    let direct = f.eval(mu, j as f64 / 8.0, m as f64 / 8.0);
                    assert!((fast[(a * 8 + j) * 8 + m] - direct).abs() < 1e-12);
                }
            }
            for j in 0..4 {
                for m in 0..2 {
                    let direct = f.eval(mu, j as f64 / 4.0, m as f64 / 2.0);
                    assert!((slow[(a * 4 + j) * 2 + m] - direct).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn trimming_respects_tolerance() {
        let f = AngleTimeField::from_fn(1.0, 4.0, GridSize::new(40, 64, 8).unwrap(), |mu, th, _| {
            1.0 / (1.8 - (TAU * th).cos()) * mu
        });
        let (_, kq, _) = f.shape();
        assert!(kq > 10 && kq < 31);
        let exact = |mu: f64, th: f64| mu / (1.8 - (TAU * th).cos());
        for &(mu, th) in &[(1.0, 0.0), (2.0, 0.31), (4.0, 0.5)] {
            assert!((f.eval(mu, th, 0.3) - exact(mu, th)).abs() < 1e-9 * exact(mu, th).abs());
        }
    }

    #[test]
    fn batched_slices_match_direct() {
        let f = AngleTimeField::from_fn(1.0, 4.0, grid(), sample_fn);
        let slices = f.t_slices(8);
        for (m, sl) in slices.iter().enumerate() {
            let t = m as f64 / 8.0;
            assert!((sl.eval(1.7, 0.3) - f.eval(1.7, 0.3, t)).abs() < 1e-13);
        }
    }

    #[test]
    fn mixed_round_trip() {
        let f = AngleTimeField::from_fn(1.0, 4.0, grid(), sample_fn);
        let nodes = chebyshev_nodes(1.0, 4.0, 32);
        let (_, kq, _) = f.shape();
        let mixed = f.mixed_values(&nodes, 16);
        let g = AngleTimeField::from_mixed(1.0, 4.0, 32, kq, 16, &mixed);
        assert!(f.add(&g.scaled(-1.0)).sup_norm() < 1e-13);
    }

    #[test]
    fn sum_and_scale() {
        let f = AngleTimeField::from_fn(1.0, 4.0, grid(), sample_fn);
        let g = AngleTimeField::from_fn(1.0, 4.0, grid(), |mu, th, t| mu * (TAU * (th + 3.0 * t)).cos());
        let s = f.add(&g.scaled(-2.0));
        let v = s.eval(2.0, 0.4, 0.1);
        assert!((v - (sample_fn(2.0, 0.4, 0.1) - 4.0 * (TAU * 0.7).cos())).abs() < 1e-11);
        assert_eq!(AngleTimeField::zero(1.0, 2.0).sup_norm(), 0.0);
    }
}
