//! Seeded random matrix ensembles.
//!
//! Every sampler is a pure function of its parameters and a 64-bit seed.
//! Pauli-string instances are nested: the first `m'` terms of an `m`-term
//! draw are the same strings and signs as an `m'`-term draw with the same
//! seed (only the `1/sqrt(m)` normalization differs), which gives common
//! random numbers across sweeps over `m`.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{MemoryBudget, SquareMatrix};
use crate::pauli::{IndexMasks, Letter, PauliString, Phase};
use crate::rng::{label, SeedTree};

/// Signed-permutation sums switch to sparse storage above this dimension.
pub const SPARSE_THRESHOLD: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    pub coeff: f64,
    pub pauli: PauliString,
}

/// `H = sum_j coeff_j * pauli_j` on `n` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePauliSum {
    n: usize,
    terms: Vec<PauliTerm>,
}

impl SparsePauliSum {
    pub fn new(n: usize, terms: Vec<PauliTerm>) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("Pauli sum needs at least one site"));
        }
        for (j, t) in terms.iter().enumerate() {
            if t.pauli.num_sites() != n {
                return Err(Error::domain(format!(
                    "term {j} acts on {} sites, expected {n}",
                    t.pauli.num_sites()
                )));
            }
            if !t.coeff.is_finite() {
                return Err(Error::domain(format!("term {j} has non-finite coefficient")));
            }
            if !t.pauli.is_hermitian() {
                return Err(Error::domain(format!(
                    "term {j} ({}) is not Hermitian; real coefficients need phase ±1",
                    t.pauli
                )));
            }
        }
        Ok(SparsePauliSum { n, terms })
    }

    pub fn num_sites(&self) -> usize {
        self.n
    }

    /// Hilbert-space dimension `2^n`.
    pub fn dim(&self) -> usize {
        1usize << self.n
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    /// `sum_j |coeff_j|`, an upper bound on the operator norm.
    pub fn coefficient_l1(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.abs()).sum()
    }

    /// Compile to index masks for repeated matrix-free products.
    pub fn compile(&self) -> Result<CompiledPauliSum> {
        let ops = self
            .terms
            .iter()
            .map(|t| Ok((Complex64::new(t.coeff, 0.0), t.pauli.index_masks()?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(CompiledPauliSum { dim: self.dim(), ops })
    }

    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        self.compile()?.apply(v)
    }

    pub fn to_dense(&self) -> Result<DenseHermitian> {
        self.to_dense_with_budget(MemoryBudget::default())
    }

    pub fn to_dense_with_budget(&self, budget: MemoryBudget) -> Result<DenseHermitian> {
        if self.n >= 32 {
            return Err(Error::Resource(format!("2^{} exceeds memory budget", self.n)));
        }
        budget.check(self.dim())?;
        let mut m = SquareMatrix::zeros(self.dim());
        for t in &self.terms {
            t.pauli
                .index_masks()?
                .add_to_dense(Complex64::new(t.coeff, 0.0), &mut m);
        }
        // exact Hermiticity: each term is Hermitian, but rounding in the
        // accumulated sum can still differ between (i,j) and (j,i)
        m.hermitize();
        Ok(DenseHermitian { matrix: m })
    }
}

/// A Pauli sum lowered to index arithmetic.
#[derive(Debug, Clone)]
pub struct CompiledPauliSum {
    dim: usize,
    ops: Vec<(Complex64, IndexMasks)>,
}

impl CompiledPauliSum {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply_into(&self, v: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        if v.len() != self.dim || out.len() != self.dim {
            return Err(Error::domain(format!(
                "vector length {} does not match dimension {}",
                v.len(),
                self.dim
            )));
        }
        out.fill(Complex64::new(0.0, 0.0));
        for (c, masks) in &self.ops {
            masks.apply_add(*c, v, out);
        }
        Ok(())
    }

    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim];
        self.apply_into(v, &mut out)?;
        Ok(out)
    }
}

/// Explicit Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseHermitian {
    matrix: SquareMatrix,
}

/// Relative Hermiticity tolerance accepted by [`DenseHermitian::from_matrix`].
pub const HERMITIAN_TOL: f64 = 1e-10;

impl DenseHermitian {
    /// Accepts `m` if it is Hermitian to [`HERMITIAN_TOL`] relative to its
    /// largest entry, then symmetrizes it exactly.
    pub fn from_matrix(mut m: SquareMatrix) -> Result<Self> {
        let scale = m.max_abs().max(1.0);
        let defect = m.hermiticity_defect();
        if defect > HERMITIAN_TOL * scale {
            return Err(Error::domain(format!("matrix is not Hermitian (defect {defect:e})")));
        }
        m.hermitize();
        Ok(DenseHermitian { matrix: m })
    }

    /// `(m + m†)/2`.
    pub fn hermitized(mut m: SquareMatrix) -> Self {
        m.hermitize();
        DenseHermitian { matrix: m }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        DenseHermitian {
            matrix: SquareMatrix::from_diagonal(diag),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> SquareMatrix {
        self.matrix
    }

    /// Normalized trace of `H^2`, i.e. `(1/N) sum |H_ij|^2`.
    pub fn normalized_trace_sq(&self) -> f64 {
        let s: f64 = self.matrix.as_slice().iter().map(|z| z.norm_sqr()).sum();
        s / self.dim() as f64
    }
}

/// `Q = D P`: row `a` holds `signs[a]` in column `perm[a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedPermutation {
    pub perm: Vec<usize>,
    pub signs: Vec<Complex64>,
}

impl SignedPermutation {
    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        self.perm
            .iter()
            .zip(&self.signs)
            .enumerate()
            .map(|(a, (&b, &s))| (a, b, s))
    }

    pub fn to_dense(&self) -> SquareMatrix {
        let mut m = SquareMatrix::zeros(self.dim());
        for (a, b, s) in self.entries() {
            m[(a, b)] = s;
        }
        m
    }

    /// Triplets of `scale * (Q + Q†)`.
    pub fn hermitized_triplets(&self, scale: f64) -> Vec<(usize, usize, Complex64)> {
        self.entries()
            .flat_map(|(a, b, s)| [(a, b, s * scale), (b, a, s.conj() * scale)])
            .collect()
    }
}

/// Hermitian matrix in coordinate form with duplicate entries merged,
/// sorted by (row, column).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseHermitian {
    dim: usize,
    entries: Vec<(usize, usize, Complex64)>,
}

impl SparseHermitian {
    pub fn from_triplets(dim: usize, mut entries: Vec<(usize, usize, Complex64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = entries.iter().find(|&&(r, c, _)| r >= dim || c >= dim) {
            return Err(Error::domain(format!("entry ({r},{c}) outside {dim}x{dim}")));
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, Complex64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|&(_, _, v)| v != Complex64::new(0.0, 0.0));
        Ok(SparseHermitian { dim, entries: merged })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, usize, Complex64)] {
        &self.entries
    }

    pub fn max_row_nonzeros(&self) -> usize {
        let mut counts = vec![0usize; self.dim];
        for &(r, _, _) in &self.entries {
            counts[r] += 1;
        }
        counts.into_iter().max().unwrap_or(0)
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim];
        for &(r, c, val) in &self.entries {
            out[r] += val * v[c];
        }
        out
    }

    pub fn to_dense(&self) -> Result<DenseHermitian> {
        MemoryBudget::default().check(self.dim)?;
        let mut m = SquareMatrix::zeros(self.dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        Ok(DenseHermitian::hermitized(m))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HermitianMatrix {
    Dense(DenseHermitian),
    Sparse(SparseHermitian),
}

impl HermitianMatrix {
    pub fn dim(&self) -> usize {
        match self {
            HermitianMatrix::Dense(d) => d.dim(),
            HermitianMatrix::Sparse(s) => s.dim(),
        }
    }

    pub fn to_dense(&self) -> Result<DenseHermitian> {
        match self {
            HermitianMatrix::Dense(d) => Ok(d.clone()),
            HermitianMatrix::Sparse(s) => s.to_dense(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignKind {
    /// Diagonal entries `(r + i r')/sqrt(2)`.
    Complex,
    /// Diagonal entries `r`.
    Real,
}

fn random_bits(rng: &mut impl Rng, n: usize) -> Vec<u64> {
    let mut w: Vec<u64> = (0..n.div_ceil(64)).map(|_| rng.random()).collect();
    if n % 64 != 0 {
        let last = w.len() - 1;
        w[last] &= (1u64 << (n % 64)) - 1;
    }
    w
}

/// `m` i.i.d. uniform strings from `{I,X,Y,Z}^n` (identity included, repeats
/// kept) with independent uniform signs and coefficients `±1/sqrt(m)`.
pub fn sample_pauli_string_ensemble(n: usize, m: usize, seed: u64) -> Result<SparsePauliSum> {
    if n == 0 || m == 0 {
        return Err(Error::domain(format!("need n >= 1 and m >= 1, got n={n}, m={m}")));
    }
    let terms = pauli_term_stream(n, seed)
        .take(m)
        .map(|(sign, pauli)| PauliTerm {
            coeff: sign / (m as f64).sqrt(),
            pauli,
        })
        .collect();
    SparsePauliSum::new(n, terms)
}

/// Infinite stream of `(sign, string)` pairs behind [`sample_pauli_string_ensemble`].
pub fn pauli_term_stream(n: usize, seed: u64) -> impl Iterator<Item = (f64, PauliString)> {
    let mut rng = SeedTree::new(seed).child(label::PAULI).rng();
    std::iter::from_fn(move || {
        let x = random_bits(&mut rng, n);
        let z = random_bits(&mut rng, n);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let pauli = PauliString::from_words(n, x, z, Phase::ONE).expect("masked words");
        Some((sign, pauli))
    })
}

/// GUE with `E|H_ij|^2 = 1/N`: off-diagonal `(g + i g')/sqrt(2N)`, diagonal `g/sqrt(N)`.
pub fn sample_gue(dim: usize, seed: u64) -> Result<DenseHermitian> {
    if dim < 2 {
        return Err(Error::domain(format!("GUE needs N >= 2, got {dim}")));
    }
    MemoryBudget::default().check(dim)?;
    let mut rng = SeedTree::new(seed).child(label::GUE).rng();
    Ok(gue_from_rng(dim, &mut rng))
}

pub(crate) fn gue_from_rng(dim: usize, rng: &mut impl Rng) -> DenseHermitian {
    let off = (2.0 * dim as f64).sqrt().recip();
    let diag = (dim as f64).sqrt().recip();
    let mut m = SquareMatrix::zeros(dim);
    for i in 0..dim {
        let g: f64 = rng.sample(StandardNormal);
        m[(i, i)] = Complex64::new(g * diag, 0.0);
        for j in (i + 1)..dim {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let z = Complex64::new(re * off, im * off);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    DenseHermitian { matrix: m }
}

pub(crate) fn signed_permutation_from_rng(dim: usize, kind: SignKind, rng: &mut impl Rng) -> SignedPermutation {
    let mut perm: Vec<usize> = (0..dim).collect();
    perm.shuffle(rng);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let signs = (0..dim)
        .map(|_| {
            let r = if rng.random::<bool>() { 1.0 } else { -1.0 };
            match kind {
                SignKind::Real => Complex64::new(r, 0.0),
                SignKind::Complex => {
                    let r2 = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    Complex64::new(r * h, r2 * h)
                }
            }
        })
        .collect();
    SignedPermutation { perm, signs }
}

/// Uniform permutation (Fisher-Yates) times a diagonal of complex signs `(±1 ± i)/sqrt(2)`.
pub fn sample_complex_signed_permutation(dim: usize, seed: u64) -> Result<SignedPermutation> {
    if dim < 2 {
        return Err(Error::domain(format!("need N >= 2, got {dim}")));
    }
    let mut rng = SeedTree::new(seed).child(label::PERM).rng();
    Ok(signed_permutation_from_rng(dim, SignKind::Complex, &mut rng))
}

/// `sum_{i<m} (Q_i + Q_i†)/sqrt(2m)`; dense up to [`SPARSE_THRESHOLD`], sparse above.
pub fn sample_signed_perm_sum(dim: usize, m: usize, seed: u64, kind: SignKind) -> Result<HermitianMatrix> {
    if dim < 2 || m == 0 {
        return Err(Error::domain(format!("need N >= 2 and m >= 1, got N={dim}, m={m}")));
    }
    let mut rng = SeedTree::new(seed).child(label::PERM).rng();
    let scale = (2.0 * m as f64).sqrt().recip();
    let mut triplets = Vec::with_capacity(2 * m * dim);
    for _ in 0..m {
        let q = signed_permutation_from_rng(dim, kind, &mut rng);
        triplets.extend(q.hermitized_triplets(scale));
    }
    let sparse = SparseHermitian::from_triplets(dim, triplets)?;
    if dim > SPARSE_THRESHOLD {
        Ok(HermitianMatrix::Sparse(sparse))
    } else {
        Ok(HermitianMatrix::Dense(sparse.to_dense()?))
    }
}

/// All weight-`k` strings with independent uniform signs. The normalization
/// `1/sqrt(#terms)` (unit `E Tr H^2 / N`) is a choice; none is prescribed for
/// this baseline model.
pub fn sample_k_local(n: usize, k: usize, seed: u64) -> Result<SparsePauliSum> {
    if k == 0 || k > n {
        return Err(Error::domain(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    let mut strings = Vec::new();
    let mut support = Vec::with_capacity(k);
    fn rec(n: usize, k: usize, start: usize, support: &mut Vec<usize>, out: &mut Vec<PauliString>) {
        if support.len() == k {
            let mut letters_code = 0usize;
            let total = 3usize.pow(k as u32);
            while letters_code < total {
                let mut p = PauliString::identity(n);
                let mut c = letters_code;
                for &s in support.iter() {
                    p.set_letter(s, [Letter::X, Letter::Y, Letter::Z][c % 3]);
                    c /= 3;
                }
                out.push(p);
                letters_code += 1;
            }
            return;
        }
        for s in start..n {
            support.push(s);
            rec(n, k, s + 1, support, out);
            support.pop();
        }
    }
    rec(n, k, 0, &mut support, &mut strings);
    let mut rng = SeedTree::new(seed).child(label::SIGN).rng();
    let norm = (strings.len() as f64).sqrt().recip();
    let terms = strings
        .into_iter()
        .map(|pauli| PauliTerm {
            coeff: if rng.random::<bool>() { norm } else { -norm },
            pauli,
        })
        .collect();
    SparsePauliSum::new(n, terms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum EnsembleVariant {
    PauliStrings {
        n: usize,
        m: usize,
    },
    Gue {
        #[serde(rename = "N")]
        dim: usize,
    },
    ComplexSignedPermSum {
        #[serde(rename = "N")]
        dim: usize,
        m: usize,
    },
    RealSignedPermSum {
        #[serde(rename = "N")]
        dim: usize,
        m: usize,
    },
    KLocal {
        n: usize,
        k: usize,
    },
}

/// Ensemble choice plus the seed that fixes the instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    #[serde(flatten)]
    pub variant: EnsembleVariant,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Pauli(SparsePauliSum),
    Matrix(HermitianMatrix),
}

impl Instance {
    pub fn dim(&self) -> usize {
        match self {
            Instance::Pauli(h) => h.dim(),
            Instance::Matrix(m) => m.dim(),
        }
    }

    pub fn to_dense(&self) -> Result<DenseHermitian> {
        match self {
            Instance::Pauli(h) => h.to_dense(),
            Instance::Matrix(m) => m.to_dense(),
        }
    }
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        use EnsembleVariant::*;
        let ok = match self.variant {
            PauliStrings { n, m } => n >= 1 && m >= 1,
            Gue { dim } => dim >= 2,
            ComplexSignedPermSum { dim, m } | RealSignedPermSum { dim, m } => dim >= 2 && m >= 1,
            KLocal { n, k } => k >= 1 && k <= n,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "invalid ensemble parameters: {:?}",
                self.variant
            )))
        }
    }

    pub fn dim(&self) -> usize {
        use EnsembleVariant::*;
        match self.variant {
            PauliStrings { n, .. } | KLocal { n, .. } => 1usize << n,
            Gue { dim } | ComplexSignedPermSum { dim, .. } | RealSignedPermSum { dim, .. } => dim,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn sample(&self) -> Result<Instance> {
        self.validate()?;
        use EnsembleVariant::*;
        Ok(match self.variant {
            PauliStrings { n, m } => Instance::Pauli(sample_pauli_string_ensemble(n, m, self.seed)?),
            KLocal { n, k } => Instance::Pauli(sample_k_local(n, k, self.seed)?),
            Gue { dim } => Instance::Matrix(HermitianMatrix::Dense(sample_gue(dim, self.seed)?)),
            ComplexSignedPermSum { dim, m } => {
                Instance::Matrix(sample_signed_perm_sum(dim, m, self.seed, SignKind::Complex)?)
            }
            RealSignedPermSum { dim, m } => {
                Instance::Matrix(sample_signed_perm_sum(dim, m, self.seed, SignKind::Real)?)
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Instance files
//
// Pauli sums: one JSON document
//   {"variant": "...", "n": .., "m": .., "seed": .., "terms": [{"coeff": .., "pauli": "+XIZ"}]}
// Dense matrices: one JSON header line followed by N*N (re, im) f64 pairs,
// little-endian, row-major.
// Sparse matrices: one JSON document with "entries": [[row, col, re, im], ...].

pub const DENSE_ENCODING: &str = "f64le-complex-rowmajor";

#[derive(Debug, Serialize, Deserialize)]
struct PauliFile {
    #[serde(flatten)]
    spec: Option<EnsembleSpecHeader>,
    n: usize,
    /// Optional on input; checked against `terms` when present.
    #[serde(default)]
    m: Option<usize>,
    terms: Vec<PauliTerm>,
}

/// Provenance stored next to a serialized instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpecHeader {
    pub variant: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DenseHeader {
    variant: String,
    #[serde(rename = "N")]
    dim: usize,
    seed: Option<u64>,
    encoding: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct SparseFile {
    variant: String,
    #[serde(rename = "N")]
    dim: usize,
    seed: Option<u64>,
    entries: Vec<(usize, usize, f64, f64)>,
}

fn variant_name(spec: Option<&EnsembleSpec>, fallback: &str) -> String {
    match spec {
        Some(s) => match serde_json::to_value(s.variant) {
            Ok(serde_json::Value::Object(o)) => o
                .get("variant")
                .and_then(|v| v.as_str())
                .unwrap_or(fallback)
                .to_string(),
            _ => fallback.to_string(),
        },
        None => fallback.to_string(),
    }
}

pub fn write_instance(w: &mut impl Write, inst: &Instance, spec: Option<&EnsembleSpec>) -> Result<()> {
    let seed = spec.map(|s| s.seed);
    match inst {
        Instance::Pauli(h) => {
            let file = PauliFile {
                spec: Some(EnsembleSpecHeader {
                    variant: variant_name(spec, "pauli_sum"),
                    seed,
                }),
                n: h.num_sites(),
                m: Some(h.len()),
                terms: h.terms().to_vec(),
            };
            serde_json::to_writer(&mut *w, &file)?;
            w.write_all(b"\n")?;
        }
        Instance::Matrix(HermitianMatrix::Dense(d)) => {
            let header = DenseHeader {
                variant: variant_name(spec, "dense"),
                dim: d.dim(),
                seed,
                encoding: DENSE_ENCODING.to_string(),
            };
            serde_json::to_writer(&mut *w, &header)?;
            w.write_all(b"\n")?;
            let mut buf = Vec::with_capacity(16 * d.dim() * d.dim());
            for z in d.matrix().as_slice() {
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Instance::Matrix(HermitianMatrix::Sparse(s)) => {
            let file = SparseFile {
                variant: variant_name(spec, "sparse"),
                dim: s.dim(),
                seed,
                entries: s.entries().iter().map(|&(r, c, v)| (r, c, v.re, v.im)).collect(),
            };
            serde_json::to_writer(&mut *w, &file)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn read_instance(r: &mut impl BufRead) -> Result<Instance> {
    let mut first = Vec::new();
    r.read_until(b'\n', &mut first)?;
    let header: serde_json::Value = serde_json::from_slice(&first)?;
    if header.get("encoding").is_some() {
        let header: DenseHeader = serde_json::from_value(header)?;
        if header.encoding != DENSE_ENCODING {
            return Err(Error::Parse(format!("unknown encoding {:?}", header.encoding)));
        }
        MemoryBudget::default().check(header.dim)?;
        let n = header.dim;
        let mut bytes = vec![0u8; 16 * n * n];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
                Complex64::new(re, im)
            })
            .collect();
        let m = DenseHermitian::from_matrix(SquareMatrix::from_row_major(n, data)?)?;
        return Ok(Instance::Matrix(HermitianMatrix::Dense(m)));
    }
    if header.get("terms").is_some() {
        let file: PauliFile = serde_json::from_value(header)?;
        if let Some(m) = file.m.filter(|&m| m != file.terms.len()) {
            return Err(Error::Parse(format!(
                "header says m={m} but {} terms present",
                file.terms.len()
            )));
        }
        return Ok(Instance::Pauli(SparsePauliSum::new(file.n, file.terms)?));
    }
    if header.get("entries").is_some() {
        let file: SparseFile = serde_json::from_value(header)?;
        let entries = file
            .entries
            .into_iter()
            .map(|(r, c, re, im)| (r, c, Complex64::new(re, im)))
            .collect();
        return Ok(Instance::Matrix(HermitianMatrix::Sparse(
            SparseHermitian::from_triplets(file.dim, entries)?,
        )));
    }
    Err(Error::Parse("unrecognized instance file".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_term_instance() {
        let h = sample_pauli_string_ensemble(1, 1, 3).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h.terms()[0].coeff.abs(), 1.0);
        assert_eq!(h.terms()[0].pauli.num_sites(), 1);
    }

    #[test]
    fn pauli_sampling_is_deterministic_and_nested() {
        let a = sample_pauli_string_ensemble(7, 40, 11).unwrap();
        let b = sample_pauli_string_ensemble(7, 40, 11).unwrap();
        assert_eq!(a, b);
        let small = sample_pauli_string_ensemble(7, 10, 11).unwrap();
        for (s, l) in small.terms().iter().zip(a.terms()) {
            assert_eq!(s.pauli, l.pauli);
            assert_eq!(s.coeff.signum(), l.coeff.signum());
        }
        assert_ne!(a, sample_pauli_string_ensemble(7, 40, 12).unwrap());
    }

    #[test]
    fn coefficients_are_exactly_plus_minus_inv_sqrt_m() {
        let h = sample_pauli_string_ensemble(5, 37, 1).unwrap();
        let c = 1.0 / 37f64.sqrt();
        assert!(h.terms().iter().all(|t| t.coeff == c || t.coeff == -c));
    }

    #[test]
    fn mean_weight_is_three_quarters_n() {
        let n = 40;
        let h = sample_pauli_string_ensemble(n, 4000, 5).unwrap();
        let w: Vec<f64> = h.terms().iter().map(|t| t.pauli.weight() as f64).collect();
        let mean = crate::stats::mean(&w);
        // per-string weight is Binomial(n, 3/4): std sqrt(n*3/16)
        let se = (n as f64 * 3.0 / 16.0).sqrt() / (w.len() as f64).sqrt();
        assert!((mean - 0.75 * n as f64).abs() < 4.0 * se, "mean weight {mean}");
    }

    #[test]
    fn anticommute_frequency_is_one_half() {
        let h = sample_pauli_string_ensemble(12, 20_001, 9).unwrap();
        let t = h.terms();
        let mut anti = 0usize;
        let mut pairs = 0usize;
        for w in t.windows(2) {
            if w[0].pauli == w[1].pauli || w[0].pauli.is_identity_letters() || w[1].pauli.is_identity_letters() {
                continue;
            }
            pairs += 1;
            if !w[0].pauli.commutes(&w[1].pauli).unwrap() {
                anti += 1;
            }
        }
        let f = anti as f64 / pairs as f64;
        assert!(pairs >= 10_000);
        assert!((f - 0.5).abs() < 3.0 * crate::stats::binomial_std(0.5, pairs), "{f}");
    }

    #[test]
    fn sparse_to_dense_matches_termwise_sum() {
        let h = sample_pauli_string_ensemble(4, 9, 2).unwrap();
        let dense = h.to_dense().unwrap();
        let mut acc = SquareMatrix::zeros(16);
        for t in h.terms() {
            let d = t.pauli.to_dense().unwrap();
            for (a, b) in acc.as_mut_slice().iter_mut().zip(d.as_slice()) {
                *a += b * t.coeff;
            }
        }
        for (a, b) in acc.as_slice().iter().zip(dense.matrix().as_slice()) {
            assert!((a - b).norm() < 1e-14);
        }
        // matrix-free product agrees with the dense one
        let v: Vec<Complex64> = (0..16).map(|i| Complex64::new(i as f64, 1.0 - i as f64)).collect();
        let mf = h.apply(&v).unwrap();
        let dv = dense.matrix().matvec(&v);
        for (a, b) in mf.iter().zip(&dv) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn gue_is_hermitian_and_deterministic() {
        let g = sample_gue(16, 4).unwrap();
        assert_eq!(g.matrix().hermiticity_defect(), 0.0);
        assert_eq!(g, sample_gue(16, 4).unwrap());
        assert!(sample_gue(1, 0).is_err());
    }

    #[test]
    fn gue_offdiagonal_variance_is_inverse_dim() {
        let draws = 10_000;
        let mut acc = Vec::with_capacity(draws);
        for s in 0..draws as u64 {
            let g = sample_gue(4, s).unwrap();
            acc.push(g.matrix()[(0, 1)].norm_sqr());
        }
        let est = crate::stats::Estimate::from_samples(&acc);
        assert!((est.mean - 0.25).abs() < 3.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn complex_signed_permutation_structure() {
        let q = sample_complex_signed_permutation(9, 1).unwrap();
        let d = q.to_dense();
        for i in 0..9 {
            let nz: Vec<Complex64> = d.row(i).iter().copied().filter(|z| z.norm() > 0.0).collect();
            assert_eq!(nz.len(), 1);
            assert!((nz[0].norm() - 1.0).abs() < 1e-15);
        }
        let qq = d.matmul(&d.adjoint());
        for i in 0..9 {
            for j in 0..9 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((qq[(i, j)] - Complex64::new(want, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn signed_perm_sum_shapes() {
        for kind in [SignKind::Complex, SignKind::Real] {
            let h = sample_signed_perm_sum(12, 1, 3, kind).unwrap();
            let HermitianMatrix::Dense(d) = &h else {
                panic!("small N is dense")
            };
            assert_eq!(d.matrix().hermiticity_defect(), 0.0);
            for i in 0..12 {
                assert!(d.matrix().row(i).iter().filter(|z| z.norm() > 0.0).count() <= 2);
            }
        }
        let big = sample_signed_perm_sum(600, 3, 1, SignKind::Complex).unwrap();
        let HermitianMatrix::Sparse(s) = &big else {
            panic!("large N is sparse")
        };
        assert!(s.max_row_nonzeros() <= 6);
    }

    #[test]
    fn k_local_term_count() {
        let h = sample_k_local(5, 2, 0).unwrap();
        assert_eq!(h.len(), 10 * 9);
        assert!(h.terms().iter().all(|t| t.pauli.weight() == 2));
    }

    #[test]
    fn instance_files_round_trip() {
        let spec = EnsembleSpec {
            variant: EnsembleVariant::PauliStrings { n: 4, m: 10 },
            seed: 7,
        };
        let inst = spec.sample().unwrap();
        let mut buf = Vec::new();
        write_instance(&mut buf, &inst, Some(&spec)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"variant\":\"pauli_strings\""));
        assert!(text.contains("\"seed\":7"));
        assert_eq!(read_instance(&mut buf.as_slice()).unwrap(), inst);

        let gspec = EnsembleSpec {
            variant: EnsembleVariant::Gue { dim: 8 },
            seed: 1,
        };
        let g = gspec.sample().unwrap();
        let mut buf = Vec::new();
        write_instance(&mut buf, &g, Some(&gspec)).unwrap();
        assert_eq!(read_instance(&mut buf.as_slice()).unwrap(), g);

        let sspec = EnsembleSpec {
            variant: EnsembleVariant::ComplexSignedPermSum { dim: 513, m: 2 },
            seed: 1,
        };
        let s = sspec.sample().unwrap();
        let mut buf = Vec::new();
        write_instance(&mut buf, &s, Some(&sspec)).unwrap();
        assert_eq!(read_instance(&mut buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn spec_json_shape() {
        let spec: EnsembleSpec = serde_json::from_str(r#"{"variant":"gue","N":64,"seed":3}"#).unwrap();
        assert_eq!(spec.variant, EnsembleVariant::Gue { dim: 64 });
        assert!(EnsembleSpec {
            variant: EnsembleVariant::PauliStrings { n: 0, m: 1 },
            seed: 0
        }
        .validate()
        .is_err());
    }
}
