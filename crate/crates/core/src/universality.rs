//! Monte Carlo comparisons of Pauli-string sums against the GUE, and the
//! bound formulas they are tabulated against.
//!
//! All `≲` bounds are evaluated with every suppressed absolute constant set
//! to 1. They are envelopes for tables, not assertions.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ensembles::{
    pauli_term_stream, sample_gue, signed_permutation_from_rng, PauliTerm, SignKind, SignedPermutation, SparsePauliSum,
};
use crate::error::{Error, Result};
use crate::harness::{run_trials, Cell, TableRow};
use crate::linalg::{hermitian_eigenvalues, SquareMatrix};
use crate::rng::{label, SeedTree};
use crate::spectral::{
    eigenvalues, normalized_trace_power, resolvent_moment_raw, semicircle_resolvent_integral, Spectrum,
};
use crate::stats::{self, Estimate};

/// Records built from fewer trials than this carry a warning flag.
pub const MIN_TRIALS: usize = 30;

/// Inputs of the comparison bounds.
///
/// `l_p_t1 = L_{p,t+1}`, `l_p_p = L_{p,p}`, `l_3p_inf = L_{3p,∞}`,
/// `l_inf_inf = L_{∞,∞}`, `l_inf = max_i ||A_i||`, `l_3pq = max_i ⟦A_i⟧_{3pq}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniversalityBoundInputs {
    pub p: u32,
    pub t: u32,
    pub m: usize,
    pub eta: f64,
    pub n: usize,
    pub dim: usize,
    pub q: u32,
    pub l_p_t1: f64,
    pub l_p_p: f64,
    pub l_3p_inf: f64,
    pub l_inf_inf: f64,
    pub l_inf: f64,
    pub l_3pq: f64,
    pub sigma_sq: f64,
    pub v: f64,
    pub sigma_star_sq: f64,
}

impl UniversalityBoundInputs {
    /// Pauli-string ensemble with `m` terms on `n` qubits (`t = 3`).
    ///
    /// Every summand has operator norm `1/sqrt(m)` and `E A_j^2 = I/m`, so
    /// `L_{p,k} = m^{1/k}/sqrt(m)`, every uniform norm is `1/sqrt(m)`,
    /// `sigma^2 = v = 1` and `sigma_*^2 = 1/(mN)`. The aggregates are over the
    /// Pauli summands.
    pub fn for_pauli(n: usize, m: usize, p: u32, eta: f64, q: u32) -> Self {
        let mf = m as f64;
        let dim = 1usize << n;
        let t = 3u32;
        let l_k = |k: f64| mf.powf(1.0 / k) / mf.sqrt();
        let unif = mf.sqrt().recip();
        UniversalityBoundInputs {
            p,
            t,
            m,
            eta,
            n,
            dim,
            q,
            l_p_t1: l_k((t + 1) as f64),
            l_p_p: l_k(p as f64),
            l_3p_inf: unif,
            l_inf_inf: unif,
            l_inf: unif,
            l_3pq: unif,
            sigma_sq: 1.0,
            v: 1.0,
            sigma_star_sq: 1.0 / (mf * dim as f64),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.p % 2 != 0 {
            return Err(Error::domain(format!("p must be even, got {}", self.p)));
        }
        if self.t < 2 {
            return Err(Error::domain(format!("matching order t must be >= 2, got {}", self.t)));
        }
        let norms = [
            self.l_p_t1,
            self.l_p_p,
            self.l_3p_inf,
            self.l_inf_inf,
            self.l_inf,
            self.l_3pq,
            self.sigma_sq,
            self.v,
            self.sigma_star_sq,
        ];
        if norms.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::domain("norm aggregates must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// `2 p^{t/(t+1)} L_{p,t+1} + 2p L_{p,p}`.
    MomentLindeberg,
    /// `2 p^{t/(t+1)} (sigma^2 L_{∞,∞}^{t-1})^{1/(t+1)} + 2p L_{p,p}`.
    MomentLindebergVariance,
    /// `(1 + m/p)/eta * (p L_{3p,∞}/eta)^{t+1}`.
    ResolventLindeberg,
    /// `(p^2 v L_∞)^{1/3} + p L_∞`.
    MomentGaussian,
    /// `(p^2 v L_∞ + p^3 L_∞^3)/eta^4`.
    ResolventGaussian,
    /// `(1 + m/(pq))/eta * (pq L/eta)^{t+1}` with `L = max_i ⟦A_i⟧_{3pq}`.
    ExpectedResolvent,
    /// Pauli-vs-GUE p-norm envelope `(p^{3/4}/m^{1/4} + p/sqrt(m))(1 + p^{3/4}/2^{n/2})`.
    PauliMoments,
    /// Pauli-vs-GUE resolvent envelope `(p^4/(eta^5 m^2) + p^3/(eta^5 m))(1 + p^3/2^{2n})`.
    PauliResolvent,
}

impl BoundKind {
    pub const ALL: [BoundKind; 8] = [
        BoundKind::MomentLindeberg,
        BoundKind::MomentLindebergVariance,
        BoundKind::ResolventLindeberg,
        BoundKind::MomentGaussian,
        BoundKind::ResolventGaussian,
        BoundKind::ExpectedResolvent,
        BoundKind::PauliMoments,
        BoundKind::PauliResolvent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundKind::MomentLindeberg => "moment_lindeberg",
            BoundKind::MomentLindebergVariance => "moment_lindeberg_variance",
            BoundKind::ResolventLindeberg => "resolvent_lindeberg",
            BoundKind::MomentGaussian => "moment_gaussian",
            BoundKind::ResolventGaussian => "resolvent_gaussian",
            BoundKind::ExpectedResolvent => "expected_resolvent",
            BoundKind::PauliMoments => "pauli_moments",
            BoundKind::PauliResolvent => "pauli_resolvent",
        }
    }
}

pub fn evaluate_bounds(inp: &UniversalityBoundInputs, which: BoundKind) -> Result<f64> {
    inp.validate()?;
    let p = inp.p as f64;
    let t = inp.t as f64;
    let m = inp.m as f64;
    let eta = inp.eta;
    let needs_eta = matches!(
        which,
        BoundKind::ResolventLindeberg
            | BoundKind::ResolventGaussian
            | BoundKind::ExpectedResolvent
            | BoundKind::PauliResolvent
    );
    if needs_eta && !(eta > 0.0) {
        return Err(Error::domain(format!("resolvent bounds need eta > 0, got {eta}")));
    }
    let tail = 2.0 * p * inp.l_p_p;
    Ok(match which {
        BoundKind::MomentLindeberg => 2.0 * p.powf(t / (t + 1.0)) * inp.l_p_t1 + tail,
        BoundKind::MomentLindebergVariance => {
            2.0 * p.powf(t / (t + 1.0)) * (inp.sigma_sq * inp.l_inf_inf.powf(t - 1.0)).powf(1.0 / (t + 1.0)) + tail
        }
        BoundKind::ResolventLindeberg => (1.0 + m / p) / eta * (p * inp.l_3p_inf / eta).powf(t + 1.0),
        BoundKind::MomentGaussian => (p * p * inp.v * inp.l_inf).cbrt() + p * inp.l_inf,
        BoundKind::ResolventGaussian => (p * p * inp.v * inp.l_inf + p.powi(3) * inp.l_inf.powi(3)) / eta.powi(4),
        BoundKind::ExpectedResolvent => {
            let pq = p * inp.q as f64;
            (1.0 + m / pq) / eta * (pq * inp.l_3pq / eta).powf(t + 1.0)
        }
        BoundKind::PauliMoments => pauli_moment_envelope(inp.n, inp.m, inp.p),
        BoundKind::PauliResolvent => pauli_resolvent_envelope(inp.n, inp.m, inp.p, eta),
    })
}

pub fn pauli_moment_envelope(n: usize, m: usize, p: u32) -> f64 {
    let (p, m) = (p as f64, m as f64);
    (p.powf(0.75) / m.powf(0.25) + p / m.sqrt()) * (1.0 + p.powf(0.75) / 2f64.powf(n as f64 / 2.0))
}

pub fn pauli_resolvent_envelope(n: usize, m: usize, p: u32, eta: f64) -> f64 {
    let (p, m) = (p as f64, m as f64);
    let e5 = eta.powi(5);
    (p.powi(4) / (e5 * m * m) + p.powi(3) / (e5 * m)) * (1.0 + p.powi(3) / 2f64.powf(2.0 * n as f64))
}

/// One row of a Pauli-vs-GUE comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRecord {
    pub n: usize,
    pub m: usize,
    pub p: u32,
    pub eta: Option<f64>,
    pub omega: Option<f64>,
    /// `⟦H_PS⟧_p` or `⟦R_PS⟧_p`.
    pub pauli: f64,
    pub pauli_se: f64,
    pub gue: f64,
    pub gue_se: f64,
    /// `|pauli - gue|`.
    pub difference: f64,
    pub difference_se: f64,
    pub bound: f64,
    /// `S_{omega,eta,p}^{1/p}` for resolvent rows.
    pub semicircle: Option<f64>,
    pub trials: usize,
    pub low_trials: bool,
}

impl TableRow for ComparisonRecord {
    fn columns() -> Vec<&'static str> {
        vec![
            "n",
            "m",
            "p",
            "eta",
            "omega",
            "pauli",
            "pauli_se",
            "gue",
            "gue_se",
            "difference",
            "difference_se",
            "bound",
            "semicircle",
            "trials",
            "low_trials",
        ]
    }

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::from(self.n),
            Cell::from(self.m),
            Cell::from(self.p as usize),
            Cell::from(self.eta),
            Cell::from(self.omega),
            Cell::from(self.pauli),
            Cell::from(self.pauli_se),
            Cell::from(self.gue),
            Cell::from(self.gue_se),
            Cell::from(self.difference),
            Cell::from(self.difference_se),
            Cell::from(self.bound),
            Cell::from(self.semicircle),
            Cell::from(self.trials),
            Cell::from(self.low_trials),
        ]
    }
}

pub(crate) fn trial_seed(master: u64, stream: u64, trial: usize) -> u64 {
    SeedTree::new(master).path(&[stream, trial as u64]).key()
}

/// Pauli sum with the first `m` terms of a sign/string stream, normalized by `1/sqrt(m)`.
pub(crate) fn prefix_sum(n: usize, stream: &[(f64, crate::pauli::PauliString)], m: usize) -> Result<SparsePauliSum> {
    let c = (m as f64).sqrt().recip();
    let terms = stream[..m]
        .iter()
        .map(|(s, p)| PauliTerm {
            coeff: s * c,
            pauli: p.clone(),
        })
        .collect();
    SparsePauliSum::new(n, terms)
}

/// Exact spectra shared by the moment and resolvent comparisons.
///
/// Trial `k` draws one stream of Pauli terms and uses its prefixes for every
/// `m` on the grid, and one GUE matrix reused across the grid.
#[derive(Debug, Clone)]
pub struct PairedSpectra {
    pub n: usize,
    pub m_grid: Vec<usize>,
    /// `pauli[trial][grid index]`.
    pub pauli: Vec<Vec<Spectrum>>,
    pub gue: Vec<Spectrum>,
}

pub fn sample_paired_spectra(n: usize, m_grid: &[usize], trials: usize, seed: u64) -> Result<PairedSpectra> {
    if n == 0 || m_grid.is_empty() || m_grid.contains(&0) || trials == 0 {
        return Err(Error::domain("need n >= 1, trials >= 1 and a nonempty grid of m >= 1"));
    }
    let dim = 1usize << n;
    crate::linalg::MemoryBudget::default().check(dim)?;
    let m_max = *m_grid.iter().max().expect("nonempty");
    let pairs = run_trials(trials, |k| {
        let stream: Vec<_> = pauli_term_stream(n, trial_seed(seed, label::PAULI, k))
            .take(m_max)
            .collect();
        let pauli = m_grid
            .iter()
            .map(|&m| eigenvalues(&prefix_sum(n, &stream, m)?.to_dense()?))
            .collect::<Result<Vec<_>>>()?;
        let gue = eigenvalues(&sample_gue(dim, trial_seed(seed, label::GUE, k))?)?;
        Ok((pauli, gue))
    })?;
    let (pauli, gue) = pairs.into_iter().unzip();
    Ok(PairedSpectra {
        n,
        m_grid: m_grid.to_vec(),
        pauli,
        gue,
    })
}

fn compare(a: &[f64], b: &[f64], p: f64) -> (Estimate, Estimate, f64, f64) {
    let ea = Estimate::from_samples(a).pth_root(p);
    let eb = Estimate::from_samples(b).pth_root(p);
    let diff = (ea.mean - eb.mean).abs();
    let se = (ea.std_error.powi(2) + eb.std_error.powi(2)).sqrt();
    (ea, eb, diff, se)
}

/// `⟦H_PS⟧_p` vs `⟦H_GUE⟧_p` for every `m` on the grid.
pub fn moment_records(ps: &PairedSpectra, p: u32) -> Result<Vec<ComparisonRecord>> {
    if p == 0 || p % 2 != 0 {
        return Err(Error::domain(format!("p must be even, got {p}")));
    }
    let pf = p as f64;
    let gue: Vec<f64> = ps.gue.iter().map(|s| normalized_trace_power(s, pf)).collect();
    Ok(ps
        .m_grid
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let pauli: Vec<f64> = ps.pauli.iter().map(|row| normalized_trace_power(&row[i], pf)).collect();
            let (ea, eb, diff, se) = compare(&pauli, &gue, pf);
            ComparisonRecord {
                n: ps.n,
                m,
                p,
                eta: None,
                omega: None,
                pauli: ea.mean,
                pauli_se: ea.std_error,
                gue: eb.mean,
                gue_se: eb.std_error,
                difference: diff,
                difference_se: se,
                bound: pauli_moment_envelope(ps.n, m, p),
                semicircle: None,
                trials: pauli.len(),
                low_trials: pauli.len() < MIN_TRIALS,
            }
        })
        .collect())
}

/// `⟦R_PS⟧_p` vs `⟦R_GUE⟧_p` for every `(omega, m)`, omega-major.
pub fn resolvent_records(ps: &PairedSpectra, p: u32, eta: f64, omega_grid: &[f64]) -> Result<Vec<ComparisonRecord>> {
    crate::spectral::ResolventQuery::new(0.0, eta, p)?;
    let pf = p as f64;
    let mut out = Vec::new();
    for &omega in omega_grid {
        let s = semicircle_resolvent_integral(omega, eta, pf)?;
        let gue: Vec<f64> = ps
            .gue
            .iter()
            .map(|s| resolvent_moment_raw(s.eigenvalues(), omega, eta, pf))
            .collect();
        for (i, &m) in ps.m_grid.iter().enumerate() {
            let pauli: Vec<f64> = ps
                .pauli
                .iter()
                .map(|row| resolvent_moment_raw(row[i].eigenvalues(), omega, eta, pf))
                .collect();
            let (ea, eb, diff, se) = compare(&pauli, &gue, pf);
            out.push(ComparisonRecord {
                n: ps.n,
                m,
                p,
                eta: Some(eta),
                omega: Some(omega),
                pauli: ea.mean,
                pauli_se: ea.std_error,
                gue: eb.mean,
                gue_se: eb.std_error,
                difference: diff,
                difference_se: se,
                bound: pauli_resolvent_envelope(ps.n, m, p, eta),
                semicircle: Some(s.powf(1.0 / pf)),
                trials: pauli.len(),
                low_trials: pauli.len() < MIN_TRIALS,
            });
        }
    }
    Ok(out)
}

pub fn moment_comparison_experiment(
    n: usize,
    p: u32,
    m_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<ComparisonRecord>> {
    moment_records(&sample_paired_spectra(n, m_grid, trials, seed)?, p)
}

pub fn resolvent_comparison_experiment(
    n: usize,
    p: u32,
    eta: f64,
    omega_grid: &[f64],
    m_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<ComparisonRecord>> {
    crate::spectral::ResolventQuery::new(0.0, eta, p)?;
    resolvent_records(&sample_paired_spectra(n, m_grid, trials, seed)?, p, eta, omega_grid)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormTailRecord {
    pub n: usize,
    pub m: usize,
    pub epsilon: f64,
    pub threshold: f64,
    pub trials: usize,
    pub exceed: usize,
    pub frequency: f64,
    pub max_norm: f64,
    pub mean_norm: f64,
}

impl TableRow for NormTailRecord {
    fn columns() -> Vec<&'static str> {
        vec![
            "n",
            "m",
            "epsilon",
            "threshold",
            "trials",
            "exceed",
            "frequency",
            "max_norm",
            "mean_norm",
        ]
    }

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::from(self.n),
            Cell::from(self.m),
            Cell::from(self.epsilon),
            Cell::from(self.threshold),
            Cell::from(self.trials),
            Cell::from(self.exceed),
            Cell::from(self.frequency),
            Cell::from(self.max_norm),
            Cell::from(self.mean_norm),
        ]
    }
}

/// `m = ceil(n^3 / eps^4)`, the term count of the norm-tail statement with unit constant.
pub fn norm_tail_term_count(n: usize, eps: f64) -> usize {
    ((n as f64).powi(3) / eps.powi(4)).ceil() as usize
}

/// Frequency of `||H_PS|| >= 2(1 + eps)` at `m = ceil(n^3/eps^4)`.
pub fn norm_tail_experiment(n: usize, eps: f64, trials: usize, seed: u64) -> Result<NormTailRecord> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::domain(format!("need 0 < eps <= 1/2, got {eps}")));
    }
    norm_tail_experiment_at(n, norm_tail_term_count(n, eps), eps, trials, seed)
}

/// Same measurement at an explicit term count and any `eps > 0`.
pub fn norm_tail_experiment_at(n: usize, m: usize, eps: f64, trials: usize, seed: u64) -> Result<NormTailRecord> {
    if !(eps > 0.0) || trials == 0 || m == 0 {
        return Err(Error::domain("need eps > 0, m >= 1 and trials >= 1"));
    }
    let threshold = 2.0 * (1.0 + eps);
    let norms = run_trials(trials, |k| {
        let h = crate::ensembles::sample_pauli_string_ensemble(n, m, trial_seed(seed, label::PAULI, k))?;
        Ok(eigenvalues(&h.to_dense()?)?.operator_norm())
    })?;
    let exceed = norms.iter().filter(|&&x| x >= threshold).count();
    Ok(NormTailRecord {
        n,
        m,
        epsilon: eps,
        threshold,
        trials,
        exceed,
        frequency: exceed as f64 / trials as f64,
        max_norm: norms.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_norm: stats::mean(&norms),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TelescopeRow {
    /// Number of summands already swapped to Gaussian.
    pub j: usize,
    /// Monte Carlo estimate of `E Tr̄ S_j^p`.
    pub estimate: f64,
    pub std_error: f64,
    /// `estimate_j - estimate_{j-1}` (0 for `j = 0`).
    pub increment: f64,
    /// Standard error of the per-trial increment.
    pub increment_se: f64,
}

impl TableRow for TelescopeRow {
    fn columns() -> Vec<&'static str> {
        vec!["j", "estimate", "std_error", "increment", "increment_se"]
    }

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::from(self.j),
            Cell::from(self.estimate),
            Cell::from(self.std_error),
            Cell::from(self.increment),
            Cell::from(self.increment_se),
        ]
    }
}

/// Hybrid sums `S_j = sum_{i<j} G_i/sqrt(m) + sum_{i>=j} A_i` between the
/// Pauli sum (`j = 0`) and a GUE matrix (`j = m`), on the same sample paths.
pub fn lindeberg_telescope_experiment(
    n: usize,
    m: usize,
    p: u32,
    trials: usize,
    seed: u64,
) -> Result<Vec<TelescopeRow>> {
    if p == 0 || p % 2 != 0 || m == 0 || trials == 0 {
        return Err(Error::domain("need even p, m >= 1 and trials >= 1"));
    }
    let dim = 1usize << n;
    crate::linalg::MemoryBudget::default().check(dim)?;
    let pf = p as f64;
    let paths: Vec<Vec<f64>> = run_trials(trials, |k| {
        let h = crate::ensembles::sample_pauli_string_ensemble(n, m, trial_seed(seed, label::PAULI, k))?;
        let mut s = h.to_dense()?.into_matrix();
        let gue_root = SeedTree::new(trial_seed(seed, label::GUE, k));
        let scale = (m as f64).sqrt().recip();
        let mut out = Vec::with_capacity(m + 1);
        out.push(trace_power(&s, pf)?);
        for (i, term) in h.terms().iter().enumerate() {
            let a = term.pauli.index_masks()?;
            a.add_to_dense(Complex64::new(-term.coeff, 0.0), &mut s);
            let g = crate::ensembles::gue_from_rng(dim, &mut gue_root.child(i as u64).rng());
            for (x, y) in s.as_mut_slice().iter_mut().zip(g.matrix().as_slice()) {
                *x += y * scale;
            }
            out.push(trace_power(&s, pf)?);
        }
        Ok(out)
    })?;
    let mut rows = Vec::with_capacity(m + 1);
    let mut prev = f64::NAN;
    for j in 0..=m {
        let col: Vec<f64> = paths.iter().map(|p| p[j]).collect();
        let est = Estimate::from_samples(&col);
        let (inc, inc_se) = if j == 0 {
            (0.0, 0.0)
        } else {
            let d: Vec<f64> = paths.iter().map(|p| p[j] - p[j - 1]).collect();
            (est.mean - prev, Estimate::from_samples(&d).std_error)
        };
        rows.push(TelescopeRow {
            j,
            estimate: est.mean,
            std_error: est.std_error,
            increment: inc,
            increment_se: inc_se,
        });
        prev = est.mean;
    }
    Ok(rows)
}

fn trace_power(s: &SquareMatrix, p: f64) -> Result<f64> {
    let mut h = s.clone();
    h.hermitize();
    let vals = hermitian_eigenvalues(&h)?;
    let acc: stats::KahanSum = vals.iter().map(|x| x.abs().powf(p)).collect();
    Ok(acc.value() / vals.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationRecord {
    pub n: usize,
    pub m: usize,
    pub p: u32,
    pub q: u32,
    pub omega: f64,
    pub eta: f64,
    pub trials: usize,
    /// Mean of `Tr̄|R_PS|^p` over instances.
    pub mean: f64,
    pub std: f64,
    pub relative_fluctuation: f64,
    /// Per-summand weak variance `sup_{u,v} E|<u|A_j|v>|^2 = 1/(mN)`.
    pub sigma_star_sq: f64,
    /// `sqrt(q) p^2/eta^2 * sqrt(sum_j ||A_j||^4)`.
    pub bound_fourth: f64,
    /// `sqrt(q) p/eta^2 * sqrt(sum_j sigma_*^2)`.
    pub bound_weak: f64,
    /// `q p/eta * (sum_j ||A_j||^q)^{1/q}`.
    pub bound_tail: f64,
}

impl TableRow for ConcentrationRecord {
    fn columns() -> Vec<&'static str> {
        vec![
            "n",
            "m",
            "p",
            "q",
            "omega",
            "eta",
            "trials",
            "mean",
            "std",
            "relative_fluctuation",
            "sigma_star_sq",
            "bound_fourth",
            "bound_weak",
            "bound_tail",
        ]
    }

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::from(self.n),
            Cell::from(self.m),
            Cell::from(self.p as usize),
            Cell::from(self.q as usize),
            Cell::from(self.omega),
            Cell::from(self.eta),
            Cell::from(self.trials),
            Cell::from(self.mean),
            Cell::from(self.std),
            Cell::from(self.relative_fluctuation),
            Cell::from(self.sigma_star_sq),
            Cell::from(self.bound_fourth),
            Cell::from(self.bound_weak),
            Cell::from(self.bound_tail),
        ]
    }
}

/// Bound-side quantities of the resolvent concentration statement for the Pauli ensemble.
pub fn concentration_bound_terms(n: usize, m: usize, p: u32, q: u32, eta: f64) -> (f64, f64, f64, f64) {
    let mf = m as f64;
    let dim = (1usize << n) as f64;
    let (p, q) = (p as f64, q as f64);
    let a = mf.sqrt().recip();
    let sigma_star_sq = 1.0 / (mf * dim);
    let fourth = q.sqrt() * p * p / (eta * eta) * (mf * a.powi(4)).sqrt();
    let weak = q.sqrt() * p / (eta * eta) * (mf * sigma_star_sq).sqrt();
    let tail = q * p / eta * (mf * a.powf(q)).powf(1.0 / q);
    (sigma_star_sq, fourth, weak, tail)
}

pub fn resolvent_concentration_experiment(
    n: usize,
    m: usize,
    p: u32,
    omega: f64,
    eta: f64,
    trials: usize,
    seed: u64,
) -> Result<ConcentrationRecord> {
    resolvent_concentration_experiment_q(n, m, p, 2, omega, eta, trials, seed)
}

#[allow(clippy::too_many_arguments)]
pub fn resolvent_concentration_experiment_q(
    n: usize,
    m: usize,
    p: u32,
    q: u32,
    omega: f64,
    eta: f64,
    trials: usize,
    seed: u64,
) -> Result<ConcentrationRecord> {
    crate::spectral::ResolventQuery::new(omega, eta, p)?;
    if trials < 2 || q == 0 {
        return Err(Error::domain("need at least two trials and q >= 1"));
    }
    let vals = run_trials(trials, |k| {
        let h = crate::ensembles::sample_pauli_string_ensemble(n, m, trial_seed(seed, label::PAULI, k))?;
        let s = eigenvalues(&h.to_dense()?)?;
        Ok(resolvent_moment_raw(s.eigenvalues(), omega, eta, p as f64))
    })?;
    let mean = stats::mean(&vals);
    let std = stats::std_dev(&vals);
    let (sigma_star_sq, bound_fourth, bound_weak, bound_tail) = concentration_bound_terms(n, m, p, q, eta);
    Ok(ConcentrationRecord {
        n,
        m,
        p,
        q,
        omega,
        eta,
        trials,
        mean,
        std,
        relative_fluctuation: std / mean,
        sigma_star_sq,
        bound_fourth,
        bound_weak,
        bound_tail,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MomentMode {
    /// All permutations (lexicographic) times all sign patterns; `N <= 4`.
    Exhaustive,
    MonteCarlo {
        samples: usize,
        seed: u64,
    },
}

/// Largest `N` accepted by [`MomentMode::Exhaustive`].
pub const EXHAUSTIVE_MAX_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentMatchReport {
    pub dim: usize,
    pub k: usize,
    pub instances: usize,
    /// `max |E A^{⊗k} - reference|` over tensor entries.
    pub max_deviation: f64,
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

fn sign_patterns(dim: usize, kind: SignKind) -> Vec<Vec<Complex64>> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let (bits, per) = match kind {
        SignKind::Complex => (2 * dim, 2),
        SignKind::Real => (dim, 1),
    };
    (0u64..(1u64 << bits))
        .map(|code| {
            (0..dim)
                .map(|a| {
                    let bit = |b: usize| if code >> (per * a + b) & 1 == 0 { 1.0 } else { -1.0 };
                    match kind {
                        SignKind::Complex => Complex64::new(bit(0) * h, bit(1) * h),
                        SignKind::Real => Complex64::new(bit(0), 0.0),
                    }
                })
                .collect()
        })
        .collect()
}

/// Nonzero entries of `A = (Q + Q†)/sqrt(2)`.
fn hermitized_summand(q: &SignedPermutation) -> Vec<(usize, usize, Complex64)> {
    let t = q.hermitized_triplets(std::f64::consts::FRAC_1_SQRT_2);
    let mut dense: std::collections::BTreeMap<(usize, usize), Complex64> = Default::default();
    for (r, c, v) in t {
        *dense.entry((r, c)).or_default() += v;
    }
    dense.into_iter().map(|((r, c), v)| (r, c, v)).collect()
}

/// Flat index of `((a_1,b_1),...,(a_k,b_k))` in `N^{2k}`.
fn tensor_index(dim: usize, pairs: &[(usize, usize)]) -> usize {
    pairs.iter().fold(0, |acc, &(a, b)| (acc * dim + a) * dim + b)
}

fn accumulate_tensor(acc: &mut [Complex64], dim: usize, k: usize, entries: &[(usize, usize, Complex64)]) {
    let mut idx = vec![0usize; k];
    loop {
        let mut val = Complex64::new(1.0, 0.0);
        let mut pairs = Vec::with_capacity(k);
        for &i in &idx {
            let (a, b, v) = entries[i];
            val *= v;
            pairs.push((a, b));
        }
        acc[tensor_index(dim, &pairs)] += val;
        let mut pos = k;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < entries.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// `E G^{⊗k}` for GUE with `E|G_ij|^2 = 1/N`: zero for odd `k`,
/// `swap/N` (entries `delta_ad delta_bc / N`) for `k = 2`.
pub fn gue_moment_tensor(dim: usize, k: usize) -> Result<Vec<Complex64>> {
    if !(1..=3).contains(&k) {
        return Err(Error::domain(format!("moment order must be 1, 2 or 3, got {k}")));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); dim.pow(2 * k as u32)];
    if k == 2 {
        for a in 0..dim {
            for b in 0..dim {
                out[tensor_index(dim, &[(a, b), (b, a)])] = Complex64::new(1.0 / dim as f64, 0.0);
            }
        }
    }
    Ok(out)
}

/// `E A^{⊗k}` for the Hermitized signed permutation `A = (Q + Q†)/sqrt(2)`.
pub fn signed_perm_moment_tensor(
    dim: usize,
    k: usize,
    kind: SignKind,
    mode: MomentMode,
) -> Result<(Vec<Complex64>, usize)> {
    if !(1..=3).contains(&k) {
        return Err(Error::domain(format!("moment order must be 1, 2 or 3, got {k}")));
    }
    if dim < 2 {
        return Err(Error::domain(format!("need N >= 2, got {dim}")));
    }
    let mut acc = vec![Complex64::new(0.0, 0.0); dim.pow(2 * k as u32)];
    let mut count = 0usize;
    match mode {
        MomentMode::Exhaustive => {
            if dim > EXHAUSTIVE_MAX_DIM {
                return Err(Error::Resource(format!(
                    "exhaustive moment check supports N <= {EXHAUSTIVE_MAX_DIM}, got {dim}"
                )));
            }
            let signs = sign_patterns(dim, kind);
            let mut perm: Vec<usize> = (0..dim).collect();
            loop {
                for s in &signs {
                    let q = SignedPermutation {
                        perm: perm.clone(),
                        signs: s.clone(),
                    };
                    accumulate_tensor(&mut acc, dim, k, &hermitized_summand(&q));
                    count += 1;
                }
                if !next_permutation(&mut perm) {
                    break;
                }
            }
        }
        MomentMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::domain("need at least one sample"));
            }
            let mut rng = SeedTree::new(seed).child(label::PERM).rng();
            for _ in 0..samples {
                let q = signed_permutation_from_rng(dim, kind, &mut rng);
                accumulate_tensor(&mut acc, dim, k, &hermitized_summand(&q));
                count += 1;
            }
        }
    }
    for z in &mut acc {
        *z /= count as f64;
    }
    Ok((acc, count))
}

/// Largest entry deviation of `E A^{⊗k}` from the GUE moment tensor.
pub fn moment_matching_check(dim: usize, k: usize, kind: SignKind, mode: MomentMode) -> Result<MomentMatchReport> {
    let (got, instances) = signed_perm_moment_tensor(dim, k, kind, mode)?;
    let want = gue_moment_tensor(dim, k)?;
    let max_deviation = got.iter().zip(&want).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    Ok(MomentMatchReport {
        dim,
        k,
        instances,
        max_deviation,
    })
}
