//! Spectra, normalized Schatten norms, resolvent moments and the semicircle law.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ensembles::{DenseHermitian, SparsePauliSum};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, tridiagonal_eigen, MemoryBudget};
use crate::rng::{label, SeedTree};
use crate::stats::KahanSum;

/// Ascending eigenvalues of one Hermitian matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    source: String,
}

impl Spectrum {
    /// Sorts the input; rejects NaN and empty input.
    pub fn new(mut eigenvalues: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::domain("empty spectrum"));
        }
        if eigenvalues.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("spectrum contains non-finite values"));
        }
        eigenvalues.sort_by(f64::total_cmp);
        Ok(Spectrum {
            eigenvalues,
            source: source.into(),
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    /// Normalized trace `(1/N) sum lambda_i`, the maximally mixed energy.
    pub fn mean(&self) -> f64 {
        self.eigenvalues.iter().copied().collect::<KahanSum>().value() / self.dim() as f64
    }

    pub fn operator_norm(&self) -> f64 {
        self.lambda_min().abs().max(self.lambda_max().abs())
    }
}

/// `(H - omega + i eta)^{-1}` probed through `(1/N) Tr |R|^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolventQuery {
    pub omega: f64,
    pub eta: f64,
    pub p: u32,
}

impl ResolventQuery {
    pub fn new(omega: f64, eta: f64, p: u32) -> Result<Self> {
        let q = ResolventQuery { omega, eta, p };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) || !self.omega.is_finite() {
            return Err(Error::domain(format!(
                "resolvent needs finite omega and eta > 0, got omega={}, eta={}",
                self.omega, self.eta
            )));
        }
        if self.p < 2 || self.p % 2 != 0 {
            return Err(Error::domain(format!(
                "resolvent power must be even and >= 2, got {}",
                self.p
            )));
        }
        Ok(())
    }
}

pub fn eigenvalues(h: &DenseHermitian) -> Result<Spectrum> {
    MemoryBudget::default().check(h.dim())?;
    Spectrum::new(hermitian_eigenvalues(h.matrix())?, "dense")
}

/// `(1/N) sum |lambda_i|^p`, the p-th power of the normalized Schatten norm.
pub fn normalized_trace_power(s: &Spectrum, p: f64) -> f64 {
    let acc: KahanSum = s.eigenvalues().iter().map(|x| x.abs().powf(p)).collect();
    acc.value() / s.dim() as f64
}

/// `((1/N) sum |lambda_i|^p)^{1/p}`; `p = f64::INFINITY` gives `max |lambda_i|`.
/// Values of `p` below 1 (or NaN) give NaN.
pub fn schatten_p_norm(s: &Spectrum, p: f64) -> f64 {
    if p.is_nan() || p < 1.0 {
        return f64::NAN;
    }
    if p.is_infinite() {
        return s.operator_norm();
    }
    // scale by the largest magnitude so large p does not overflow
    let top = s.operator_norm();
    if top == 0.0 {
        return 0.0;
    }
    let acc: KahanSum = s.eigenvalues().iter().map(|x| (x.abs() / top).powf(p)).collect();
    top * (acc.value() / s.dim() as f64).powf(1.0 / p)
}

/// `(1/N) sum_i |lambda_i - omega + i eta|^{-p}`.
pub fn resolvent_trace_moment(s: &Spectrum, q: &ResolventQuery) -> f64 {
    resolvent_moment_raw(s.eigenvalues(), q.omega, q.eta, q.p as f64)
}

pub(crate) fn resolvent_moment_raw(vals: &[f64], omega: f64, eta: f64, p: f64) -> f64 {
    let acc: KahanSum = vals
        .iter()
        .map(|&x| {
            let d = x - omega;
            (d * d + eta * eta).powf(-0.5 * p)
        })
        .collect();
    acc.value() / vals.len() as f64
}

pub fn semicircle_density(x: f64) -> f64 {
    if x.abs() >= 2.0 {
        0.0
    } else {
        (4.0 - x * x).sqrt() / (2.0 * PI)
    }
}

pub fn semicircle_cdf(e: f64) -> f64 {
    if e <= -2.0 {
        0.0
    } else if e >= 2.0 {
        1.0
    } else {
        e * (4.0 - e * e).sqrt() / (4.0 * PI) + (e / 2.0).asin() / PI + 0.5
    }
}

pub fn semicircle_mass(a: f64, b: f64) -> f64 {
    semicircle_cdf(b) - semicircle_cdf(a)
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS_K: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const GK_WEIGHTS_G: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * GK_WEIGHTS_K[7];
    let mut gauss = fc * GK_WEIGHTS_G[3];
    for j in 0..7 {
        let dx = h * GK_NODES[j];
        let s = f(c - dx) + f(c + dx);
        kron += GK_WEIGHTS_K[j] * s;
        if j % 2 == 1 {
            gauss += GK_WEIGHTS_G[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod quadrature on `[a, b]` with the given break points.
///
/// Bisects the interval with the largest error estimate until the total
/// estimate is below `rel_tol * |integral|` (or an absolute floor of 1e-300).
pub fn integrate(f: impl Fn(f64) -> f64, breaks: &[f64], rel_tol: f64, max_intervals: usize) -> Result<f64> {
    let mut intervals: Vec<(f64, f64, f64, f64)> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (v, e) = gk15(&f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    loop {
        let total: f64 = intervals.iter().map(|iv| iv.2).sum();
        let err: f64 = intervals.iter().map(|iv| iv.3).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Numeric {
                message: "quadrature produced a non-finite value".into(),
                best: total,
                residual: err,
            });
        }
        if err <= rel_tol * total.abs() || err < 1e-300 {
            return Ok(total);
        }
        if intervals.len() >= max_intervals {
            return Err(Error::Numeric {
                message: format!("quadrature did not reach relative tolerance {rel_tol:e}"),
                best: total,
                residual: err,
            });
        }
        let (k, _) = intervals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .3.total_cmp(&b.1 .3))
            .expect("nonempty");
        let (a, b, _, _) = intervals.swap_remove(k);
        let mid = 0.5 * (a + b);
        for (lo, hi) in [(a, mid), (mid, b)] {
            let (v, e) = gk15(&f, lo, hi);
            intervals.push((lo, hi, v, e));
        }
    }
}

/// `S_{omega,eta,p} = int rho_sc(x) |x - omega + i eta|^{-p} dx` to relative tolerance 1e-8.
pub fn semicircle_resolvent_moment(q: &ResolventQuery) -> Result<f64> {
    q.validate()?;
    semicircle_resolvent_integral(q.omega, q.eta, q.p as f64)
}

/// Same integral for any real power `p >= 0` (`p = 0` gives 1).
///
/// The substitution `x = 2 cos(theta)` turns `rho_sc(x) dx` into
/// `(2/pi) sin^2(theta) d theta`, which removes the square-root endpoints;
/// the interval is split at the angle of `omega` where the integrand peaks.
pub fn semicircle_resolvent_integral(omega: f64, eta: f64, p: f64) -> Result<f64> {
    if !(eta > 0.0) || p < 0.0 || !omega.is_finite() {
        return Err(Error::domain(format!("need eta > 0 and p >= 0, got eta={eta}, p={p}")));
    }
    let f = |theta: f64| {
        let x = 2.0 * theta.cos();
        let s = theta.sin();
        let d = x - omega;
        (2.0 / PI) * s * s * (d * d + eta * eta).powf(-0.5 * p)
    };
    let mut breaks = vec![0.0, PI];
    if omega.abs() < 2.0 {
        let t0 = (omega / 2.0).acos();
        // the peak has angular width about eta / (2 sin t0)
        let w = (eta / (2.0 * t0.sin().max(1e-3))).min(0.5);
        for b in [t0 - 4.0 * w, t0 - w, t0, t0 + w, t0 + 4.0 * w] {
            if b > 0.0 && b < PI {
                breaks.push(b);
            }
        }
        breaks.sort_by(f64::total_cmp);
    }
    integrate(f, &breaks, 1e-10, 20_000)
}

/// `sup_E |F_emp(E) - F_sc(E)|`, evaluated on both sides of every jump.
pub fn empirical_cdf_distance(s: &Spectrum) -> f64 {
    cdf_distance(s, semicircle_cdf)
}

/// Kolmogorov distance between the empirical CDF of `s` and a continuous CDF.
pub fn cdf_distance(s: &Spectrum, cdf: impl Fn(f64) -> f64) -> f64 {
    let v = s.eigenvalues();
    let n = v.len() as f64;
    let mut best = 0.0f64;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        let f = cdf(v[i]);
        best = best.max((f - i as f64 / n).abs()).max((f - (j + 1) as f64 / n).abs());
        i = j + 1;
    }
    best
}

/// Kolmogorov distance between two empirical CDFs.
pub fn two_sample_cdf_distance(a: &Spectrum, b: &Spectrum) -> f64 {
    let (x, y) = (a.eigenvalues(), b.eigenvalues());
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best = 0.0f64;
    while i < x.len() || j < y.len() {
        let t = match (x.get(i), y.get(j)) {
            (Some(&u), Some(&w)) => u.min(w),
            (Some(&u), None) => u,
            (None, Some(&w)) => w,
            (None, None) => break,
        };
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        best = best.max((i as f64 / nx - j as f64 / ny).abs());
    }
    best
}

/// Fraction of eigenvalues at or below `-2(1 - eps)`.
pub fn low_energy_fraction(s: &Spectrum, eps: f64) -> f64 {
    fraction_at_or_below(s, -2.0 * (1.0 - eps))
}

pub(crate) fn fraction_at_or_below(s: &Spectrum, threshold: f64) -> f64 {
    let count = s.eigenvalues().partition_point(|&x| x <= threshold);
    count as f64 / s.dim() as f64
}

/// Spectrum of an `N x N` GUE matrix from the tridiagonal model.
///
/// The Hermitian Householder reduction of a GUE matrix with unit entry
/// variance is tridiagonal with `N(0,1)` diagonal and `chi_{2(N-k)}/sqrt(2)`
/// off-diagonal entries, all independent; scaling by `1/sqrt(N)` gives the
/// normalization of [`crate::ensembles::sample_gue`]. Eigenvalues cost
/// `O(N^2)` instead of `O(N^3)`.
pub fn sample_gue_spectrum(dim: usize, seed: u64) -> Result<Spectrum> {
    if dim < 2 {
        return Err(Error::domain(format!("GUE needs N >= 2, got {dim}")));
    }
    let mut rng = SeedTree::new(seed).path(&[label::GUE, 1]).rng();
    let scale = (dim as f64).sqrt().recip();
    let diag: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect();
    let off = (1..dim)
        .map(|k| {
            let chi2 =
                ChiSquared::new(2.0 * (dim - k) as f64).map_err(|e| Error::domain(format!("chi-squared: {e}")))?;
            Ok((chi2.sample(&mut rng) / 2.0).sqrt() * scale)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (vals, _) = tridiagonal_eigen(&diag, &off, false)?;
    Spectrum::new(vals, "gue-tridiagonal")
}

/// Extreme eigenvalues of a Pauli sum from Lanczos with full reorthogonalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormEstimate {
    /// `max(|lambda_min|, |lambda_max|)`.
    pub value: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Largest Ritz residual of the two extreme pairs.
    pub residual: f64,
    pub iterations: usize,
}

/// Matrix-free operator norm of `h`.
///
/// Stops when both extreme Ritz pairs have residual `||H y - theta y||`
/// below `tolerance`, or when the Krylov space becomes invariant. Each Ritz
/// value is then within its residual of a true eigenvalue.
pub fn spectral_norm_estimate(h: &SparsePauliSum, tolerance: f64, max_iters: usize) -> Result<NormEstimate> {
    let op = h.compile()?;
    let dim = op.dim();
    let mut rng = SeedTree::new(0).child(label::LANCZOS).rng();
    let mut v: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    normalize(&mut v);
    let mut basis: Vec<Vec<Complex64>> = vec![v];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![Complex64::new(0.0, 0.0); dim];
    let scale = h.coefficient_l1().max(f64::MIN_POSITIVE);
    let mut best = NormEstimate {
        value: f64::NAN,
        lambda_min: f64::NAN,
        lambda_max: f64::NAN,
        residual: f64::INFINITY,
        iterations: 0,
    };
    for k in 0..max_iters.min(dim) {
        op.apply_into(&basis[k], &mut w)?;
        let a = dot(&basis[k], &w).re;
        alpha.push(a);
        // two passes of classical Gram-Schmidt against the whole basis
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let bnext = norm(&w);
        let (theta, vecs) = tridiagonal_eigen(&alpha, &beta, true)?;
        let vecs = vecs.expect("requested vectors");
        let kk = alpha.len();
        let last_row = &vecs[(kk - 1) * kk..kk * kk];
        let r_min = bnext * last_row[0].abs();
        let r_max = bnext * last_row[kk - 1].abs();
        let (lmin, lmax) = (theta[0], theta[kk - 1]);
        best = NormEstimate {
            value: lmin.abs().max(lmax.abs()),
            lambda_min: lmin,
            lambda_max: lmax,
            residual: r_min.max(r_max),
            iterations: kk,
        };
        let invariant = bnext <= 1e-13 * scale;
        if invariant || (best.residual <= tolerance && kk >= 2) {
            return Ok(best);
        }
        beta.push(bnext);
        let next: Vec<Complex64> = w.iter().map(|z| z / bnext).collect();
        basis.push(next);
    }
    if basis.len() >= dim && best.residual.is_finite() {
        // the basis spans the whole space, so Ritz values are exact
        return Ok(best);
    }
    Err(Error::Numeric {
        message: format!("Lanczos did not converge in {max_iters} iterations"),
        best: best.value,
        residual: best.residual,
    })
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize(a: &mut [Complex64]) {
    let s = norm(a);
    for z in a {
        *z /= s;
    }
}

/// JSON summary written next to a spectrum CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    #[serde(rename = "N")]
    pub dim: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub p_norms: BTreeMap<String, f64>,
}

impl SpectrumSummary {
    /// Summary with normalized norms for each `p` (and `"inf"`).
    pub fn new(s: &Spectrum, ps: &[u32]) -> Self {
        let mut p_norms: BTreeMap<String, f64> = ps
            .iter()
            .map(|&p| (p.to_string(), schatten_p_norm(s, p as f64)))
            .collect();
        p_norms.insert("inf".into(), schatten_p_norm(s, f64::INFINITY));
        SpectrumSummary {
            dim: s.dim(),
            lambda_min: s.lambda_min(),
            lambda_max: s.lambda_max(),
            p_norms,
        }
    }
}

/// One eigenvalue per row under an `eigenvalue` header.
pub fn spectrum_csv(s: &Spectrum) -> String {
    let mut out = String::from("eigenvalue\n");
    for &x in s.eigenvalues() {
        out.push_str(&crate::harness::format_float(x));
        out.push('\n');
    }
    out
}
