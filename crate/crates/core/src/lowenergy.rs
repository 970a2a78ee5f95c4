//! Low-energy state preparation and its classical counterparts.
//!
//! - Phase estimation on the maximally mixed state, modelled as a uniform
//!   draw of an eigenvalue plus a configurable measurement kernel.
//! - The density-of-states proxy built from consecutive resolvents.
//! - A Chebyshev witness `rho ∝ p_d(H)^2` with `p_d ≈ exp(-beta H / 2)`.
//! - Circuit-size lower bounds in normalized units (unit constants, natural log).
//! - A product-state baseline by site-wise mean-field updates.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensembles::{DenseHermitian, SparsePauliSum};
use crate::error::{Error, Result};
use crate::harness::{run_trials, Cell, TableRow};
use crate::linalg::{hermitian_eigenvalues, hermitian_eigh, SquareMatrix};
use crate::pauli::Letter;
use crate::rng::{label, SeedTree};
use crate::spectral::{fraction_at_or_below, integrate, semicircle_resolvent_integral, Spectrum};
use crate::stats::KahanSum;
use crate::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpeKernel {
    /// `estimate = lambda + resolution * N(0,1)`.
    #[default]
    Gaussian,
    /// `estimate = lambda + resolution * X`, `X` with density `sinc^2(pi x)`.
    Sinc2,
}

/// Phase-estimation resolution and repeat budget.
///
/// `resolution = 0` models ideal estimation: the estimate is the eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpeModel {
    pub resolution: f64,
    pub repeats: usize,
    pub seed: u64,
    #[serde(default)]
    pub kernel: QpeKernel,
}

impl QpeModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution >= 0.0 && self.resolution.is_finite()) {
            return Err(Error::domain(format!(
                "resolution must be >= 0, got {}",
                self.resolution
            )));
        }
        if self.repeats == 0 {
            return Err(Error::domain("repeat budget must be at least 1"));
        }
        Ok(())
    }
}

fn sinc2_draw(rng: &mut impl Rng) -> f64 {
    // rejection from a Cauchy(0, 1/pi) envelope: sinc^2(pi x) <= 2/(1 + pi^2 x^2)
    loop {
        let u: f64 = rng.random::<f64>();
        let x = (PI * (u - 0.5)).tan() / PI;
        let px = PI * x;
        let s = if px == 0.0 { 1.0 } else { (px.sin() / px).powi(2) };
        let accept = s * (1.0 + px * px) / 2.0;
        if rng.random::<f64>() < accept {
            return x;
        }
    }
}

/// One ideal phase-estimation shot: a uniformly random eigenvalue index
/// (0-based) and its noisy energy estimate.
pub fn qpe_sample(s: &Spectrum, model: &QpeModel, rng: &mut impl Rng) -> (usize, f64) {
    let i = rng.random_range(0..s.dim());
    let lambda = s.eigenvalues()[i];
    if model.resolution == 0.0 {
        return (i, lambda);
    }
    let z = match model.kernel {
        QpeKernel::Gaussian => StandardNormal.sample(rng),
        QpeKernel::Sinc2 => sinc2_draw(rng),
    };
    (i, lambda + model.resolution * z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuccessProbability {
    pub probability: f64,
    pub threshold: f64,
    /// `lambda_min >= 0`, so `(1 - eps) lambda_min` is not a lower energy target.
    pub degenerate: bool,
}

/// Fraction of eigenvalues at or below `(1 - eps) lambda_min`.
pub fn low_energy_success_probability(s: &Spectrum, eps: f64) -> Result<SuccessProbability> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("need 0 < eps < 1, got {eps}")));
    }
    let lmin = s.lambda_min();
    let degenerate = lmin >= 0.0;
    let threshold = if degenerate { lmin } else { (1.0 - eps) * lmin };
    Ok(SuccessProbability {
        probability: fraction_at_or_below(s, threshold),
        threshold,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RepeatOutcome {
    pub success: bool,
    pub trials_used: usize,
    /// Accepted estimate, or the maximally mixed energy on failure.
    pub energy: f64,
    pub index: Option<usize>,
}

/// Acceptance threshold of a phase-estimation shot: `(1 - eps) lambda_min` plus the resolution.
pub fn qpe_threshold(s: &Spectrum, eps: f64, model: &QpeModel) -> Result<f64> {
    Ok(low_energy_success_probability(s, eps)?.threshold + model.resolution)
}

/// Repeats shots until one estimate passes [`qpe_threshold`] or the budget runs out.
pub fn repeat_until_success(s: &Spectrum, eps: f64, model: &QpeModel, rng: &mut impl Rng) -> Result<RepeatOutcome> {
    model.validate()?;
    let thr = qpe_threshold(s, eps, model)?;
    for t in 1..=model.repeats {
        let (i, e) = qpe_sample(s, model, rng);
        if e <= thr {
            return Ok(RepeatOutcome {
                success: true,
                trials_used: t,
                energy: e,
                index: Some(i),
            });
        }
    }
    Ok(RepeatOutcome {
        success: false,
        trials_used: model.repeats,
        energy: s.mean(),
        index: None,
    })
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn sinc2_cdf(x: f64) -> Result<f64> {
    // P(X <= x) for density sin^2(pi x)/(pi x)^2; tails by 1/(2 pi^2 |x|)
    const CUT: f64 = 60.0;
    if x.abs() > CUT {
        let tail = 1.0 / (2.0 * PI * PI * x.abs());
        return Ok(if x > 0.0 { 1.0 - tail } else { tail });
    }
    let f = |t: f64| {
        let pt = PI * t;
        if pt == 0.0 {
            1.0
        } else {
            (pt.sin() / pt).powi(2)
        }
    };
    let mut breaks: Vec<f64> = vec![0.0];
    let mut k = 1.0;
    while k < x.abs() {
        breaks.push(k);
        k += 1.0;
    }
    breaks.push(x.abs());
    let part = if x.abs() > 0.0 {
        integrate(f, &breaks, 1e-10, 10_000)?
    } else {
        0.0
    };
    Ok(if x >= 0.0 { 0.5 + part } else { 0.5 - part })
}

/// Single-shot acceptance probability under the model's kernel.
pub fn single_shot_success_probability(s: &Spectrum, eps: f64, model: &QpeModel) -> Result<f64> {
    model.validate()?;
    let thr = qpe_threshold(s, eps, model)?;
    if model.resolution == 0.0 {
        return Ok(fraction_at_or_below(s, thr));
    }
    let mut acc = KahanSum::new();
    for &l in s.eigenvalues() {
        let z = (thr - l) / model.resolution;
        acc.add(match model.kernel {
            QpeKernel::Gaussian => normal_cdf(z),
            QpeKernel::Sinc2 => sinc2_cdf(z)?,
        });
    }
    Ok(acc.value() / s.dim() as f64)
}

/// Success probability of [`repeat_until_success`] with budget `repeats`.
pub fn repeat_success_prediction(q: f64, repeats: usize) -> f64 {
    1.0 - (1.0 - q).powi(repeats as i32)
}

/// Wilson score interval at 95%.
pub fn wilson_interval(successes: usize, shots: usize) -> [f64; 2] {
    if shots == 0 {
        return [0.0, 1.0];
    }
    let z = 1.959_963_984_540_054;
    let n = shots as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    [(centre - half).max(0.0), (centre + half).min(1.0)]
}

/// SHA-256 of the little-endian eigenvalue bytes.
pub fn spectrum_hash(s: &Spectrum) -> String {
    let mut h = Sha256::new();
    for x in s.eigenvalues() {
        h.update(x.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QpeRecord {
    pub instance_hash: String,
    pub epsilon: f64,
    pub shots: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub ci95: [f64; 2],
    pub predicted: f64,
    pub single_shot: f64,
    pub repeats: usize,
    pub resolution: f64,
    pub degenerate: bool,
    pub mean_trials_used: f64,
}

/// `shots` independent repeat-until-success runs; shot `j` draws from the
/// stream `(model.seed, QPE, j)`.
pub fn qpe_experiment(s: &Spectrum, eps: f64, model: &QpeModel, shots: usize) -> Result<QpeRecord> {
    model.validate()?;
    if shots == 0 {
        return Err(Error::domain("need at least one shot"));
    }
    let sp = low_energy_success_probability(s, eps)?;
    let root = SeedTree::new(model.seed).child(label::QPE);
    let outcomes = run_trials(shots, |j| {
        repeat_until_success(s, eps, model, &mut root.child(j as u64).rng())
    })?;
    let successes = outcomes.iter().filter(|o| o.success).count();
    let q = single_shot_success_probability(s, eps, model)?;
    let used: KahanSum = outcomes.iter().map(|o| o.trials_used as f64).collect();
    Ok(QpeRecord {
        instance_hash: spectrum_hash(s),
        epsilon: eps,
        shots,
        successes,
        success_rate: successes as f64 / shots as f64,
        ci95: wilson_interval(successes, shots),
        predicted: repeat_success_prediction(q, model.repeats),
        single_shot: q,
        repeats: model.repeats,
        resolution: model.resolution,
        degenerate: sp.degenerate,
        mean_trials_used: used.value() / shots as f64,
    })
}

/// Resolvent grid for the low-energy projector proxy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DosProxyQuery {
    pub e0: f64,
    pub eta: f64,
    pub spacing: f64,
    pub p: u32,
}

impl DosProxyQuery {
    /// Spacing `2 eps/sqrt(p)` and width `2 eps/3`.
    pub fn from_epsilon(eps: f64, p: u32, e0: f64) -> Self {
        DosProxyQuery {
            e0,
            eta: 2.0 * eps / 3.0,
            spacing: 2.0 * eps / (p as f64).sqrt(),
            p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spacing > 0.0) || !(self.eta > 0.0) {
            return Err(Error::domain("DOS proxy needs spacing > 0 and eta > 0"));
        }
        if self.p == 0 || self.p % 2 != 0 {
            return Err(Error::domain(format!("DOS proxy power must be even, got {}", self.p)));
        }
        if !(self.e0 >= -2.0) || !self.e0.is_finite() {
            return Err(Error::domain(format!(
                "grid starts at -2 and needs E0 >= -2, got {}",
                self.e0
            )));
        }
        Ok(())
    }

    /// Centers `-2 + l * spacing <= E0`, `l = 0, 1, ...`.
    pub fn centers(&self) -> Vec<f64> {
        let count = ((self.e0 + 2.0) / self.spacing + 1e-9).floor() as usize + 1;
        (0..count).map(|l| -2.0 + l as f64 * self.spacing).collect()
    }
}

/// `eta^p (1/N) Tr|R_{c,eta}|^p`, computed as the mean of `(1 + ((lambda - c)/eta)^2)^{-p/2}`.
pub fn scaled_resolvent(s: &Spectrum, c: f64, eta: f64, p: u32) -> f64 {
    let half = p as f64 / 2.0;
    let acc: KahanSum = s
        .eigenvalues()
        .iter()
        .map(|&x| {
            let u = (x - c) / eta;
            (1.0 + u * u).powf(-half)
        })
        .collect();
    acc.value() / s.dim() as f64
}

/// `sum_l eta^p Tr̄|R_{c_l,eta}|^p` over the grid.
pub fn dos_proxy(s: &Spectrum, q: &DosProxyQuery) -> Result<f64> {
    q.validate()?;
    let acc: KahanSum = q
        .centers()
        .into_iter()
        .map(|c| scaled_resolvent(s, c, q.eta, q.p))
        .collect();
    Ok(acc.value())
}

/// The same sum for the semicircle law: `sum_l eta^p S_{c_l,eta,p}`.
pub fn dos_proxy_semicircle(q: &DosProxyQuery) -> Result<f64> {
    q.validate()?;
    let mut acc = KahanSum::new();
    for c in q.centers() {
        acc.add(q.eta.powi(q.p as i32) * semicircle_resolvent_integral(c, q.eta, q.p as f64)?);
    }
    Ok(acc.value())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DosProxyRow {
    pub center: f64,
    pub term: f64,
    pub semicircle_term: f64,
    pub cumulative: f64,
}

impl TableRow for DosProxyRow {
    fn columns() -> Vec<&'static str> {
        vec!["center", "term", "semicircle_term", "cumulative"]
    }

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::from(self.center),
            Cell::from(self.term),
            Cell::from(self.semicircle_term),
            Cell::from(self.cumulative),
        ]
    }
}

/// Per-center terms of [`dos_proxy`] pooled over spectra, with the semicircle terms.
pub fn dos_proxy_rows(spectra: &[Spectrum], q: &DosProxyQuery) -> Result<Vec<DosProxyRow>> {
    q.validate()?;
    let mut cum = KahanSum::new();
    let mut rows = Vec::new();
    for c in q.centers() {
        let t: KahanSum = spectra.iter().map(|s| scaled_resolvent(s, c, q.eta, q.p)).collect();
        let term = t.value() / spectra.len().max(1) as f64;
        cum.add(term);
        rows.push(DosProxyRow {
            center: c,
            term,
            semicircle_term: q.eta.powi(q.p as i32) * semicircle_resolvent_integral(c, q.eta, q.p as f64)?,
            cumulative: cum.value(),
        });
    }
    Ok(rows)
}

/// Parameters of the Chebyshev witness search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WitnessConfig {
    /// Degree `d = ceil(degree_constant / sqrt(eps))` unless `degree` is set.
    pub degree_constant: f64,
    pub degree: Option<usize>,
    pub beta_start: f64,
    pub beta_max: f64,
    /// Interval half-width `a = ||H|| (1 + margin)`.
    pub margin: f64,
}

impl Default for WitnessConfig {
    fn default() -> Self {
        WitnessConfig {
            degree_constant: 4.0,
            degree: None,
            beta_start: 0.5,
            beta_max: 512.0,
            margin: 0.01,
        }
    }
}

impl WitnessConfig {
    pub fn degree_for(&self, eps: f64) -> usize {
        self.degree
            .unwrap_or_else(|| (self.degree_constant / eps.sqrt()).ceil() as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessResult {
    pub epsilon: f64,
    pub d: usize,
    pub beta: f64,
    /// `Tr[rho H]`, computed from the assembled density matrix.
    pub energy: f64,
    pub lambda_min: f64,
    pub ratio: f64,
    pub success: bool,
    /// Energy of the exact Gibbs state at `beta`.
    pub gibbs_energy: f64,
    pub trace: f64,
    pub min_eigenvalue: f64,
    pub interval: f64,
    /// Chebyshev coefficients of `exp(-beta (x + a)/2)` in `T_k(x/a)`, `k = 0..=d`.
    pub coefficients: Vec<f64>,
    /// `log10((d m)^{2d} n d)` when the input is a Pauli sum.
    pub verification_cost_log10: Option<f64>,
    pub betas_tried: usize,
}

/// Chebyshev coefficients of `f` on `[-a, a]` up to degree `d`; the constant term is halved.
pub fn chebyshev_coefficients(f: impl Fn(f64) -> f64, a: f64, d: usize) -> Vec<f64> {
    let k_nodes = (4 * (d + 1)).max(64);
    let vals: Vec<(f64, f64)> = (0..k_nodes)
        .map(|j| {
            let theta = PI * (j as f64 + 0.5) / k_nodes as f64;
            (theta, f(a * theta.cos()))
        })
        .collect();
    let mut c: Vec<f64> = (0..=d)
        .map(|k| {
            let s: KahanSum = vals.iter().map(|&(t, v)| v * (k as f64 * t).cos()).collect();
            2.0 * s.value() / k_nodes as f64
        })
        .collect();
    c[0] *= 0.5;
    c
}

/// `sum_k c_k T_k(x/a)` by Clenshaw's recurrence.
pub fn chebyshev_eval(c: &[f64], a: f64, x: f64) -> f64 {
    let y = x / a;
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * y * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    y * b1 - b2 + c.first().copied().unwrap_or(0.0)
}

/// Energy of `exp(-beta H)/Z` from eigenvalues.
pub fn gibbs_energy(eigs: &[f64], beta: f64) -> f64 {
    let lmin = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut z, mut e) = (KahanSum::new(), KahanSum::new());
    for &l in eigs {
        let w = (-beta * (l - lmin)).exp();
        z.add(w);
        e.add(w * l);
    }
    e.value() / z.value()
}

fn weighted_energy(eigs: &[f64], w: &[f64]) -> f64 {
    let z: KahanSum = w.iter().copied().collect();
    let e: KahanSum = eigs.iter().zip(w).map(|(l, w)| l * w).collect();
    e.value() / z.value()
}

/// Witness for a Pauli sum; also reports the verification cost exponent.
pub fn chebyshev_witness(h: &SparsePauliSum, eps: f64, cfg: &WitnessConfig) -> Result<WitnessResult> {
    let mut r = chebyshev_witness_dense(&h.to_dense()?, eps, cfg)?;
    let (d, m, n) = (r.d as f64, h.len() as f64, h.num_sites() as f64);
    r.verification_cost_log10 = Some(2.0 * d * (d * m).log10() + (n * d).log10());
    Ok(r)
}

/// `rho ∝ p_d(H)^2` with `p_d` the degree-`d` Chebyshev truncation of
/// `exp(-beta H / 2)`.
///
/// `beta` doubles from `beta_start` until the exact Gibbs energy reaches
/// `(1 - eps/2) lambda_min`; from there the polynomial witness is evaluated
/// along the same doubling schedule until its ratio `Tr[rho H]/lambda_min`
/// reaches `1 - eps`. If the schedule ends first, the best attempt is
/// returned with `success = false`.
/// (ratio, beta, coefficients, eigenbasis weights p_d(λ)², Gibbs energy) of the best candidate.
type Candidate = (f64, f64, Vec<f64>, Vec<f64>, f64);

pub fn chebyshev_witness_dense(h: &DenseHermitian, eps: f64, cfg: &WitnessConfig) -> Result<WitnessResult> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("need 0 < eps < 1, got {eps}")));
    }
    if !(cfg.beta_start > 0.0) || !(cfg.beta_max >= cfg.beta_start) || !(cfg.margin >= 0.0) {
        return Err(Error::domain(
            "witness needs 0 < beta_start <= beta_max and margin >= 0",
        ));
    }
    let d = cfg.degree_for(eps);
    let (eigs, vecs) = hermitian_eigh(h.matrix())?;
    let lmin = eigs[0];
    if lmin >= 0.0 {
        return Err(Error::domain(format!(
            "lambda_min = {lmin} is not negative; the energy ratio target is ill-posed"
        )));
    }
    let norm = eigs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let a = norm * (1.0 + cfg.margin);
    let target = 1.0 - eps;

    let mut beta = cfg.beta_start;
    let mut best: Option<Candidate> = None;
    let mut tried = 0usize;
    while beta <= cfg.beta_max {
        let ge = gibbs_energy(&eigs, beta);
        if ge <= (1.0 - eps / 2.0) * lmin {
            tried += 1;
            let f = |x: f64| (-beta * (x + a) / 2.0).exp();
            let c = chebyshev_coefficients(f, a, d);
            let w: Vec<f64> = eigs.iter().map(|&l| chebyshev_eval(&c, a, l).powi(2)).collect();
            let ratio = weighted_energy(&eigs, &w) / lmin;
            if best.as_ref().is_none_or(|b| ratio > b.0) {
                best = Some((ratio, beta, c, w, ge));
            }
            if ratio >= target {
                break;
            }
        }
        beta *= 2.0;
    }
    let (_, beta, coefficients, w, gibbs) = match best {
        Some(b) => b,
        None => {
            return Err(Error::Numeric {
                message: format!(
                    "exact Gibbs energy never reached (1 - eps/2) lambda_min up to beta = {}",
                    cfg.beta_max
                ),
                best: gibbs_energy(&eigs, cfg.beta_max) / lmin,
                residual: f64::NAN,
            })
        }
    };

    // assemble rho = V diag(w/Z) V† and verify it
    let z: KahanSum = w.iter().copied().collect();
    let z = z.value();
    let n = eigs.len();
    let mut scaled = vecs.clone();
    for i in 0..n {
        for j in 0..n {
            scaled[(i, j)] *= w[j] / z;
        }
    }
    let mut rho = scaled.matmul(&vecs.adjoint());
    rho.hermitize();
    let trace = rho.trace().re;
    let min_eigenvalue = hermitian_eigenvalues(&rho)?[0];
    let energy = trace_product(&rho, h.matrix()).re;
    let ratio = energy / lmin;
    Ok(WitnessResult {
        epsilon: eps,
        d,
        beta,
        energy,
        lambda_min: lmin,
        ratio,
        success: ratio >= target,
        gibbs_energy: gibbs,
        trace,
        min_eigenvalue,
        interval: a,
        coefficients,
        verification_cost_log10: None,
        betas_tried: tried,
    })
}

/// `Tr[A B] = sum_ij A_ij B_ji`.
fn trace_product(a: &SquareMatrix, b: &SquareMatrix) -> Complex64 {
    let n = a.dim();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBoundResult {
    pub epsilon1: f64,
    pub m: usize,
    pub n: usize,
    /// `eps1 sqrt(m) / ln m` (normalized units).
    pub g_threshold: f64,
    /// `exp(-eps1 sqrt(m))` (normalized units).
    pub failure_probability_bound: f64,
    /// `m <= eps1^2 2^{2n}`.
    pub valid: bool,
}

impl TableRow for LowerBoundResult {
    fn columns() -> Vec<&'static str> {
        vec![
            "epsilon1",
            "m",
            "n",
            "g_threshold",
            "failure_probability_bound",
            "valid",
            "units",
        ]
    }

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::from(self.epsilon1),
            Cell::from(self.m),
            Cell::from(self.n),
            Cell::from(self.g_threshold),
            Cell::from(self.failure_probability_bound),
            Cell::from(self.valid),
            Cell::Text("normalized".into()),
        ]
    }
}

pub fn circuit_lower_bound(eps1: f64, m: usize, n: usize) -> Result<LowerBoundResult> {
    if !(eps1 >= 0.0) || !eps1.is_finite() {
        return Err(Error::domain(format!("need eps1 >= 0, got {eps1}")));
    }
    if m < 2 {
        return Err(Error::domain(format!("need m >= 2, got {m}")));
    }
    let mf = m as f64;
    let root = mf.sqrt();
    Ok(LowerBoundResult {
        epsilon1: eps1,
        m,
        n,
        g_threshold: eps1 * root / mf.ln(),
        failure_probability_bound: (-eps1 * root).exp(),
        valid: mf <= eps1 * eps1 * 2f64.powf(2.0 * n as f64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductStateResult {
    pub energy: f64,
    pub bloch: Vec<[f64; 3]>,
    pub best_restart: usize,
    pub sweeps: usize,
    /// False if the best restart hit the sweep cap.
    pub converged: bool,
}

/// Sweep cap of [`product_state_baseline`].
pub const MAX_SWEEPS: usize = 500;

struct Factor {
    coeff: f64,
    /// (site, axis) of every non-identity letter; axis 0,1,2 = X,Y,Z.
    sites: Vec<(usize, usize)>,
}

fn axis(l: Letter) -> Option<usize> {
    match l {
        Letter::I => None,
        Letter::X => Some(0),
        Letter::Y => Some(1),
        Letter::Z => Some(2),
    }
}

fn product_energy(factors: &[Factor], r: &[[f64; 3]]) -> f64 {
    let acc: KahanSum = factors
        .iter()
        .map(|f| f.coeff * f.sites.iter().map(|&(s, a)| r[s][a]).product::<f64>())
        .collect();
    acc.value()
}

fn random_unit(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-12 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Best product-state energy over `restarts` random starts.
///
/// For a product state the energy is affine in each site's Bloch vector,
/// `c0 + h . r_j`, so the site update `r_j = -h/|h|` is exact. Sweeps repeat
/// until the energy changes by less than `1e-12 (1 + |E|)`.
pub fn product_state_baseline(h: &SparsePauliSum, restarts: usize, seed: u64) -> Result<ProductStateResult> {
    if restarts == 0 {
        return Err(Error::domain("need at least one restart"));
    }
    let n = h.num_sites();
    let factors: Vec<Factor> = h
        .terms()
        .iter()
        .map(|t| Factor {
            coeff: t.coeff * t.pauli.phase().sign().expect("Hermitian terms have real phase"),
            sites: (0..n).filter_map(|s| axis(t.pauli.letter(s)).map(|a| (s, a))).collect(),
        })
        .collect();
    let mut by_site: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, f) in factors.iter().enumerate() {
        for &(s, _) in &f.sites {
            by_site[s].push(k);
        }
    }
    let root = SeedTree::new(seed).child(label::RESTART);
    let runs = run_trials(restarts, |r| {
        let mut rng = root.child(r as u64).rng();
        let mut bloch: Vec<[f64; 3]> = (0..n).map(|_| random_unit(&mut rng)).collect();
        let mut energy = product_energy(&factors, &bloch);
        let mut sweeps = 0;
        let mut converged = false;
        while sweeps < MAX_SWEEPS {
            sweeps += 1;
            for j in 0..n {
                let mut field = [0.0f64; 3];
                for &k in &by_site[j] {
                    let f = &factors[k];
                    let mut prod = f.coeff;
                    let mut ax = 0;
                    for &(s, a) in &f.sites {
                        if s == j {
                            ax = a;
                        } else {
                            prod *= bloch[s][a];
                        }
                    }
                    field[ax] += prod;
                }
                let norm = (field[0] * field[0] + field[1] * field[1] + field[2] * field[2]).sqrt();
                if norm > 0.0 {
                    bloch[j] = [-field[0] / norm, -field[1] / norm, -field[2] / norm];
                }
            }
            let next = product_energy(&factors, &bloch);
            let done = (energy - next).abs() <= 1e-12 * (1.0 + next.abs());
            energy = next;
            if done {
                converged = true;
                break;
            }
        }
        Ok((energy, bloch, sweeps, converged))
    })?;
    let (best_restart, (energy, bloch, sweeps, converged)) = runs
        .into_iter()
        .enumerate()
        .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.0.cmp(&b.0)))
        .expect("restarts >= 1");
    Ok(ProductStateResult {
        energy,
        bloch,
        best_restart,
        sweeps,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::PauliTerm;
    use crate::spectral::{eigenvalues, sample_gue_spectrum};

    fn spectrum_from(v: &[f64]) -> Spectrum {
        Spectrum::new(v.to_vec(), "test").unwrap()
    }

    fn ideal(repeats: usize) -> QpeModel {
        QpeModel {
            resolution: 0.0,
            repeats,
            seed: 1,
            kernel: QpeKernel::Gaussian,
        }
    }

    #[test]
    fn zero_resolution_returns_exact_eigenvalues() {
        let s = spectrum_from(&[-1.0, 0.25, 2.0]);
        let mut rng = SeedTree::new(3).rng();
        for _ in 0..50 {
            let (i, e) = qpe_sample(&s, &ideal(1), &mut rng);
            assert_eq!(e, s.eigenvalues()[i]);
        }
        let one = spectrum_from(&[0.7]);
        assert_eq!(qpe_sample(&one, &ideal(1), &mut rng).0, 0);
    }

    #[test]
    fn qpe_indices_are_uniform() {
        // chi-square with 15 degrees of freedom; 1% critical value 30.58
        let s = spectrum_from(&(0..16).map(|i| i as f64).collect::<Vec<_>>());
        let mut rng = SeedTree::new(11).rng();
        let mut counts = [0usize; 16];
        let draws = 100_000;
        for _ in 0..draws {
            counts[qpe_sample(&s, &ideal(1), &mut rng).0] += 1;
        }
        let e = draws as f64 / 16.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        assert!(chi2 < 30.58, "{chi2}");
    }

    #[test]
    fn sinc2_kernel_has_sinc2_quantiles() {
        let mut rng = SeedTree::new(5).rng();
        let draws = 40_000;
        let xs: Vec<f64> = (0..draws).map(|_| sinc2_draw(&mut rng)).collect();
        for x in [-1.0, -0.3, 0.0, 0.4, 2.0] {
            let emp = xs.iter().filter(|&&v| v <= x).count() as f64 / draws as f64;
            let want = sinc2_cdf(x).unwrap();
            assert!(
                (emp - want).abs() < 4.0 * crate::stats::binomial_std(want, draws),
                "{x}: {emp} vs {want}"
            );
        }
        assert!((sinc2_cdf(100.0).unwrap() - 1.0).abs() < 1e-3);
        assert!((sinc2_cdf(59.9).unwrap() - (1.0 - 1.0 / (2.0 * PI * PI * 59.9))).abs() < 1e-4);
    }

    #[test]
    fn gaussian_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-12);
    }

    #[test]
    fn success_probability_examples() {
        let s = spectrum_from(&[-1.0, 1.0]);
        let p = low_energy_success_probability(&s, 0.5).unwrap();
        assert_eq!(p.probability, 0.5);
        assert!(!p.degenerate);
        let tiny = low_energy_success_probability(&spectrum_from(&[-1.0, -0.5, 0.3, 0.9]), 1e-9).unwrap();
        assert!(tiny.probability >= 0.25);
        let pos = low_energy_success_probability(&spectrum_from(&[0.5, 1.0]), 0.3).unwrap();
        assert!(pos.degenerate);
        assert_eq!(pos.probability, 0.5);
    }

    #[test]
    fn success_probability_monotone_in_eps() {
        let s = sample_gue_spectrum(200, 3).unwrap();
        let mut prev = 0.0;
        for k in 1..20 {
            let p = low_energy_success_probability(&s, k as f64 / 20.0).unwrap().probability;
            assert!(p >= prev);
            prev = p;
        }
    }

    #[test]
    fn repeat_until_success_examples() {
        let all_low = spectrum_from(&[-1.0, -1.0, -1.0]);
        let mut rng = SeedTree::new(1).rng();
        let r = repeat_until_success(&all_low, 0.5, &ideal(5), &mut rng).unwrap();
        assert!(r.success);
        assert_eq!(r.trials_used, 1);

        let s = spectrum_from(&[-1.0, 0.2, 0.4, 0.6]);
        let mut fails = 0;
        for _ in 0..200 {
            let r = repeat_until_success(&s, 0.5, &ideal(1), &mut rng).unwrap();
            if !r.success {
                fails += 1;
                assert_eq!(r.energy, s.mean());
            }
        }
        assert!(fails > 0);
        assert!(matches!(
            repeat_until_success(&s, 0.5, &ideal(0), &mut rng),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn one_repeat_success_rate_is_q() {
        let s = spectrum_from(&[-1.0, -0.8, 0.1, 0.3, 0.5]);
        let model = ideal(1);
        let rec = qpe_experiment(&s, 0.3, &model, 20_000).unwrap();
        let q = 0.4;
        assert_eq!(rec.predicted, q);
        assert!((rec.success_rate - q).abs() < 3.0 * crate::stats::binomial_std(q, rec.shots));
    }

    #[test]
    fn noisy_gaussian_prediction_matches_simulation() {
        let s = spectrum_from(&[-1.0, -0.5, 0.0, 0.5, 1.0]);
        let model = QpeModel {
            resolution: 0.3,
            repeats: 2,
            seed: 9,
            kernel: QpeKernel::Gaussian,
        };
        let rec = qpe_experiment(&s, 0.2, &model, 20_000).unwrap();
        let sd = crate::stats::binomial_std(rec.predicted, rec.shots);
        assert!((rec.success_rate - rec.predicted).abs() < 3.0 * sd, "{rec:?}");
        assert!(rec.ci95[0] <= rec.success_rate && rec.success_rate <= rec.ci95[1]);
    }

    #[test]
    fn dos_proxy_examples() {
        let q = DosProxyQuery {
            e0: -1.0,
            eta: 0.1,
            spacing: 0.25,
            p: 4,
        };
        assert_eq!(q.centers().len(), 5);
        // spectrum far above E0
        let far = spectrum_from(&[1.0, 1.5]);
        let bound = q.centers().len() as f64 * (2.0f64 / 0.1).powi(-4);
        assert!(dos_proxy(&far, &q).unwrap() <= bound);
        // single eigenvalue on a center
        let on = spectrum_from(&[-1.5, 3.0]);
        assert!(dos_proxy(&on, &q).unwrap() >= 0.5);
        assert!(DosProxyQuery { e0: -2.5, ..q }.validate().is_err());
    }

    #[test]
    fn dos_proxy_monotone() {
        let s = sample_gue_spectrum(300, 4).unwrap();
        let base = DosProxyQuery {
            e0: -1.5,
            eta: 0.1,
            spacing: 0.05,
            p: 6,
        };
        let v0 = dos_proxy(&s, &base).unwrap();
        assert!(dos_proxy(&s, &DosProxyQuery { e0: -1.2, ..base }).unwrap() >= v0);
        assert!(dos_proxy(&s, &DosProxyQuery { eta: 0.2, ..base }).unwrap() >= v0);
    }

    #[test]
    fn gue_dos_proxy_tracks_semicircle() {
        let eps = 1.5 * 0.13;
        let mut q = DosProxyQuery::from_epsilon(eps, 20, -1.6);
        q.eta = 0.13;
        let s = sample_gue_spectrum(1024, 8).unwrap();
        let got = dos_proxy(&s, &q).unwrap();
        let want = dos_proxy_semicircle(&q).unwrap();
        assert!(got / want > 0.5 && got / want < 2.0, "{got} vs {want}");
    }

    #[test]
    fn chebyshev_reproduces_exponential() {
        let a = 2.0;
        let c = chebyshev_coefficients(|x| (-x).exp(), a, 20);
        for x in [-2.0, -0.7, 0.0, 1.3, 2.0] {
            assert!((chebyshev_eval(&c, a, x) - (-x).exp()).abs() < 1e-12);
        }
        // degree-1 truncation of a line is exact
        let c = chebyshev_coefficients(|x| 3.0 * x - 1.0, 1.5, 1);
        assert!((chebyshev_eval(&c, 1.5, 0.4) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn two_level_witness() {
        // exact Gibbs energy is -tanh(beta); -tanh(beta) <= -1/2 iff beta >= ln(3)/2
        let b = 3f64.ln() / 2.0;
        assert!((gibbs_energy(&[-1.0, 1.0], b) + 0.5).abs() < 1e-14);
        assert!(gibbs_energy(&[-1.0, 1.0], b * 1.01) < -0.5);
        let h = DenseHermitian::from_real_diagonal(&[-1.0, 1.0]);
        let cfg = WitnessConfig {
            degree: Some(30),
            ..WitnessConfig::default()
        };
        let r = chebyshev_witness_dense(&h, 0.5, &cfg).unwrap();
        assert!(r.success && r.ratio >= 0.5, "{r:?}");
        assert!((r.trace - 1.0).abs() < 1e-12);
        assert!(r.min_eigenvalue >= -1e-12);
        assert!(r.energy >= r.lambda_min - 1e-12);
    }

    #[test]
    fn witness_approaches_ground_energy() {
        let h = DenseHermitian::from_real_diagonal(&[-2.0, -1.0, 0.5, 1.0]);
        let cfg = WitnessConfig {
            degree: Some(60),
            beta_max: 64.0,
            ..WitnessConfig::default()
        };
        let r = chebyshev_witness_dense(&h, 0.01, &cfg).unwrap();
        assert!(r.ratio > 0.99, "{r:?}");
    }

    #[test]
    fn witness_rejects_nonnegative_spectrum() {
        let h = DenseHermitian::from_real_diagonal(&[0.0, 1.0]);
        assert!(matches!(
            chebyshev_witness_dense(&h, 0.3, &WitnessConfig::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn lower_bound_examples() {
        let r = circuit_lower_bound(0.25, 10_000, 20).unwrap();
        assert!((r.g_threshold - 2.714_340_511_895_324).abs() < 1e-12);
        assert!(r.valid);
        assert_eq!(circuit_lower_bound(0.0, 100, 5).unwrap().g_threshold, 0.0);
        let a = circuit_lower_bound(0.3, 400, 10).unwrap();
        let b = circuit_lower_bound(0.3, 1600, 10).unwrap();
        let want = 2.0 * 400f64.ln() / 1600f64.ln();
        assert!((b.g_threshold / a.g_threshold - want).abs() < 1e-12);
        assert!(!circuit_lower_bound(0.01, 10_000, 3).unwrap().valid);
        assert!(circuit_lower_bound(0.1, 1, 3).is_err());
    }

    fn single(coeff: f64, s: &str) -> SparsePauliSum {
        let p: crate::pauli::PauliString = s.parse().unwrap();
        SparsePauliSum::new(p.num_sites(), vec![PauliTerm { coeff, pauli: p }]).unwrap()
    }

    #[test]
    fn product_baseline_examples() {
        let r = product_state_baseline(&single(-1.0, "ZZ"), 3, 0).unwrap();
        assert!((r.energy + 1.0).abs() < 1e-12 && r.converged);
        for s in ["XYZ", "-YIX", "ZIIY"] {
            let h = single(0.7, s);
            let r = product_state_baseline(&h, 4, 1).unwrap();
            assert!((r.energy + 0.7).abs() < 1e-12, "{s}: {}", r.energy);
            let exact = eigenvalues(&h.to_dense().unwrap()).unwrap().lambda_min();
            assert!((r.energy - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn product_baseline_never_beats_ground_state() {
        for seed in 0..5 {
            let h = crate::ensembles::sample_pauli_string_ensemble(5, 40, seed).unwrap();
            let r = product_state_baseline(&h, 5, seed).unwrap();
            let exact = eigenvalues(&h.to_dense().unwrap()).unwrap().lambda_min();
            assert!(r.energy >= exact - 1e-10);
        }
    }
}
