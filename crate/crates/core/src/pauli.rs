//! n-qubit Pauli strings in symplectic (x, z) form.
//!
//! A [`PauliString`] stores one bit-plane for the X part and one for the Z
//! part, packed into `u64` words, plus a phase that is a power of `i`.
//!
//! Phase convention: the stored phase multiplies the tensor product of the
//! *letters* `I, X, Y, Z`, where `Y = i·X·Z`. So `+Y` has phase `+1` and
//! densifies to `[[0, -i], [i, 0]]`, and the text form `-iXZ` is `-i · X ⊗ Z`.
//!
//! Site 0 is the leftmost letter of the text form and the most significant
//! tensor factor, i.e. it maps to bit `n - 1` of a computational-basis index.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{MemoryBudget, SquareMatrix};

/// A fourth root of unity, stored as the exponent `k` in `i^k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Phase(u8);

impl Phase {
    pub const ONE: Phase = Phase(0);
    pub const I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn from_exponent(k: u32) -> Phase {
        Phase((k % 4) as u8)
    }

    pub fn exponent(self) -> u8 {
        self.0
    }

    pub fn is_real(self) -> bool {
        self.0 % 2 == 0
    }

    pub fn to_complex(self) -> Complex64 {
        match self.0 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    }

    /// +1 / -1 for real phases.
    pub fn sign(self) -> Option<f64> {
        match self.0 {
            0 => Some(1.0),
            2 => Some(-1.0),
            _ => None,
        }
    }
}

impl std::ops::Mul for Phase {
    type Output = Phase;
    fn mul(self, rhs: Phase) -> Phase {
        Phase((self.0 + rhs.0) % 4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Letter {
    I,
    X,
    Y,
    Z,
}

impl Letter {
    pub fn bits(self) -> (bool, bool) {
        match self {
            Letter::I => (false, false),
            Letter::X => (true, false),
            Letter::Y => (true, true),
            Letter::Z => (false, true),
        }
    }

    pub fn from_bits(x: bool, z: bool) -> Letter {
        match (x, z) {
            (false, false) => Letter::I,
            (true, false) => Letter::X,
            (true, true) => Letter::Y,
            (false, true) => Letter::Z,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Letter::I => 'I',
            Letter::X => 'X',
            Letter::Y => 'Y',
            Letter::Z => 'Z',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    n: usize,
    x: Vec<u64>,
    z: Vec<u64>,
    phase: Phase,
}

#[inline]
fn words(n: usize) -> usize {
    n.div_ceil(64)
}

#[inline]
fn popcount(words: impl Iterator<Item = u64>) -> u32 {
    words.map(u64::count_ones).sum()
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        assert!(n >= 1, "a Pauli string needs at least one site");
        PauliString {
            n,
            x: vec![0; words(n)],
            z: vec![0; words(n)],
            phase: Phase::ONE,
        }
    }

    /// Build from packed words. Bits beyond `n` must be zero.
    pub fn from_words(n: usize, x: Vec<u64>, z: Vec<u64>, phase: Phase) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("a Pauli string needs at least one site"));
        }
        if x.len() != words(n) || z.len() != words(n) {
            return Err(Error::domain(format!(
                "{n} sites need {} words per bit-plane",
                words(n)
            )));
        }
        let tail = n % 64;
        if tail != 0 {
            let mask = !((1u64 << tail) - 1);
            if (x[words(n) - 1] | z[words(n) - 1]) & mask != 0 {
                return Err(Error::domain("bits set beyond the last site"));
            }
        }
        Ok(PauliString { n, x, z, phase })
    }

    pub fn from_letters(letters: &[Letter], phase: Phase) -> Self {
        let mut p = PauliString::identity(letters.len());
        for (site, &l) in letters.iter().enumerate() {
            p.set_letter(site, l);
        }
        p.phase = phase;
        p
    }

    /// A single non-identity letter on `site`.
    pub fn single(n: usize, site: usize, letter: Letter) -> Self {
        let mut p = PauliString::identity(n);
        p.set_letter(site, letter);
        p
    }

    pub fn num_sites(&self) -> usize {
        self.n
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn with_phase(mut self, phase: Phase) -> Self {
        self.phase = phase;
        self
    }

    pub fn x_words(&self) -> &[u64] {
        &self.x
    }

    pub fn z_words(&self) -> &[u64] {
        &self.z
    }

    pub fn letter(&self, site: usize) -> Letter {
        assert!(site < self.n, "site {site} out of range");
        let (w, b) = (site / 64, site % 64);
        Letter::from_bits((self.x[w] >> b) & 1 == 1, (self.z[w] >> b) & 1 == 1)
    }

    pub fn letters(&self) -> impl Iterator<Item = Letter> + '_ {
        (0..self.n).map(|s| self.letter(s))
    }

    pub fn set_letter(&mut self, site: usize, letter: Letter) {
        assert!(site < self.n, "site {site} out of range");
        let (w, b) = (site / 64, site % 64);
        let (xb, zb) = letter.bits();
        self.x[w] = (self.x[w] & !(1 << b)) | ((xb as u64) << b);
        self.z[w] = (self.z[w] & !(1 << b)) | ((zb as u64) << b);
    }

    /// True when all sites are `I` (any phase).
    pub fn is_identity_letters(&self) -> bool {
        self.x.iter().chain(&self.z).all(|&w| w == 0)
    }

    /// Hermitian iff the phase is ±1.
    pub fn is_hermitian(&self) -> bool {
        self.phase.is_real()
    }

    /// Number of sites carrying a non-identity letter.
    pub fn weight(&self) -> usize {
        popcount(self.x.iter().zip(&self.z).map(|(x, z)| x | z)) as usize
    }

    fn y_count(&self) -> u32 {
        popcount(self.x.iter().zip(&self.z).map(|(x, z)| x & z))
    }

    fn check_width(&self, other: &PauliString) -> Result<()> {
        if self.n != other.n {
            return Err(Error::domain(format!(
                "Pauli width mismatch: {} vs {}",
                self.n, other.n
            )));
        }
        Ok(())
    }

    /// Group product `self · other`.
    pub fn mul(&self, other: &PauliString) -> Result<PauliString> {
        self.check_width(other)?;
        // letters -> X^x Z^z form: P = i^{k + #Y} X^x Z^z. Moving Z^{z1} past
        // X^{x2} contributes (-1)^{z1·x2}.
        let x: Vec<u64> = self.x.iter().zip(&other.x).map(|(a, b)| a ^ b).collect();
        let z: Vec<u64> = self.z.iter().zip(&other.z).map(|(a, b)| a ^ b).collect();
        let cross = popcount(self.z.iter().zip(&other.x).map(|(a, b)| a & b));
        let y_out = popcount(x.iter().zip(&z).map(|(a, b)| a & b));
        let k = self.phase.0 as i64
            + other.phase.0 as i64
            + self.y_count() as i64
            + other.y_count() as i64
            + 2 * cross as i64
            - y_out as i64;
        Ok(PauliString {
            n: self.n,
            x,
            z,
            phase: Phase(k.rem_euclid(4) as u8),
        })
    }

    /// Whether `self` and `other` commute: parity of the symplectic form.
    pub fn commutes(&self, other: &PauliString) -> Result<bool> {
        self.check_width(other)?;
        let a = popcount(self.x.iter().zip(&other.z).map(|(a, b)| a & b));
        let b = popcount(self.z.iter().zip(&other.x).map(|(a, b)| a & b));
        Ok((a + b) % 2 == 0)
    }

    /// Bit masks in computational-basis index layout (site 0 = most significant bit)
    /// and the scalar `i^{k + #Y}` in front of `X^x Z^z`.
    pub fn index_masks(&self) -> Result<IndexMasks> {
        if self.n > 62 {
            return Err(Error::Resource(format!(
                "state vectors on {} qubits are not addressable",
                self.n
            )));
        }
        let mut xm = 0u64;
        let mut zm = 0u64;
        for site in 0..self.n {
            let (xb, zb) = self.letter(site).bits();
            let bit = 1u64 << (self.n - 1 - site);
            if xb {
                xm |= bit;
            }
            if zb {
                zm |= bit;
            }
        }
        let scalar = Phase::from_exponent(self.phase.0 as u32 + self.y_count()).to_complex();
        Ok(IndexMasks {
            flip: xm,
            sign: zm,
            scalar,
        })
    }

    /// Matrix-free action on a state vector of length `2^n`.
    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
        self.apply_add(Complex64::new(1.0, 0.0), v, &mut out)?;
        Ok(out)
    }

    /// `out += coeff · P v`.
    pub fn apply_add(&self, coeff: Complex64, v: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        let dim = self.dim()?;
        if v.len() != dim || out.len() != dim {
            return Err(Error::domain(format!(
                "state vector length {} (output {}) does not match 2^{} = {dim}",
                v.len(),
                out.len(),
                self.n
            )));
        }
        let masks = self.index_masks()?;
        masks.apply_add(coeff, v, out);
        Ok(())
    }

    fn dim(&self) -> Result<usize> {
        if self.n > 62 {
            return Err(Error::Resource(format!("2^{} is not addressable", self.n)));
        }
        Ok(1usize << self.n)
    }

    /// Explicit `2^n x 2^n` matrix under the default memory budget.
    pub fn to_dense(&self) -> Result<SquareMatrix> {
        self.to_dense_with_budget(MemoryBudget::default())
    }

    pub fn to_dense_with_budget(&self, budget: MemoryBudget) -> Result<SquareMatrix> {
        if self.n >= 32 {
            return Err(Error::Resource(format!(
                "dense matrix on {} qubits exceeds memory budget",
                self.n
            )));
        }
        let dim = self.dim()?;
        budget.check(dim)?;
        let masks = self.index_masks()?;
        let mut m = SquareMatrix::zeros(dim);
        masks.add_to_dense(Complex64::new(1.0, 0.0), &mut m);
        Ok(m)
    }
}

/// A Pauli string compiled to index arithmetic: `P|b> = scalar · (-1)^{|sign & b|} |b ^ flip>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexMasks {
    pub flip: u64,
    pub sign: u64,
    pub scalar: Complex64,
}

impl IndexMasks {
    #[inline]
    pub fn apply_add(&self, coeff: Complex64, v: &[Complex64], out: &mut [Complex64]) {
        let s = coeff * self.scalar;
        for (b, &vb) in v.iter().enumerate() {
            let b = b as u64;
            let term = if (self.sign & b).count_ones() % 2 == 0 {
                s * vb
            } else {
                -(s * vb)
            };
            out[(b ^ self.flip) as usize] += term;
        }
    }

    /// `m += coeff · P` for a dense matrix of matching dimension.
    pub fn add_to_dense(&self, coeff: Complex64, m: &mut SquareMatrix) {
        let s = coeff * self.scalar;
        for b in 0..m.dim() as u64 {
            let row = (b ^ self.flip) as usize;
            let val = if (self.sign & b).count_ones() % 2 == 0 { s } else { -s };
            m[(row, b as usize)] += val;
        }
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.phase.0 {
            0 => "+",
            1 => "+i",
            2 => "-",
            _ => "-i",
        };
        f.write_str(prefix)?;
        for l in self.letters() {
            write!(f, "{}", l.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    /// Parses `[+|-][i]LETTERS`, e.g. `+XIYZ`, `-iZZ`. A missing sign means `+`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (neg, rest) = match s.as_bytes().first() {
            Some(b'+') => (false, &s[1..]),
            Some(b'-') => (true, &s[1..]),
            _ => (false, s),
        };
        let (imag, rest) = match rest.strip_prefix('i') {
            Some(r) => (true, r),
            None => (false, rest),
        };
        if rest.is_empty() {
            return Err(Error::Parse(format!("no sites in Pauli string {s:?}")));
        }
        let letters = rest
            .chars()
            .map(|c| match c {
                'I' => Ok(Letter::I),
                'X' => Ok(Letter::X),
                'Y' => Ok(Letter::Y),
                'Z' => Ok(Letter::Z),
                other => Err(Error::Parse(format!(
                    "invalid character {other:?} in Pauli string {s:?}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        let k = (neg as u32) * 2 + imag as u32;
        Ok(PauliString::from_letters(&letters, Phase::from_exponent(k)))
    }
}

impl serde::Serialize for PauliString {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for PauliString {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    // Independent oracle: Kronecker products of the textbook 2x2 matrices.
    fn kron_oracle(ps: &PauliString) -> SquareMatrix {
        let single = |l: Letter| -> [[Complex64; 2]; 2] {
            let (o, z, i) = (c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0));
            match l {
                Letter::I => [[o, z], [z, o]],
                Letter::X => [[z, o], [o, z]],
                Letter::Y => [[z, -i], [i, z]],
                Letter::Z => [[o, z], [z, -o]],
            }
        };
        let mut acc = SquareMatrix::from_fn(1, |_, _| ps.phase().to_complex());
        for l in ps.letters() {
            let s = single(l);
            let d = acc.dim();
            acc = SquareMatrix::from_fn(2 * d, |r, col| acc[(r / 2, col / 2)] * s[r % 2][col % 2]);
        }
        acc
    }

    fn all_strings(n: usize) -> Vec<PauliString> {
        let letters = [Letter::I, Letter::X, Letter::Y, Letter::Z];
        (0..4usize.pow(n as u32))
            .map(|mut code| {
                let ls: Vec<Letter> = (0..n)
                    .map(|_| {
                        let l = letters[code % 4];
                        code /= 4;
                        l
                    })
                    .collect();
                PauliString::from_letters(&ls, Phase::ONE)
            })
            .collect()
    }

    fn close(a: &SquareMatrix, b: &SquareMatrix) -> bool {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .all(|(x, y)| (x - y).norm() < 1e-12)
    }

    #[test]
    fn x_times_y_is_i_z() {
        assert_eq!(p("X").mul(&p("Y")).unwrap(), p("+iZ"));
        assert_eq!(p("Y").mul(&p("X")).unwrap(), p("-iZ"));
        assert_eq!(p("Z").mul(&p("X")).unwrap(), p("+iY"));
    }

    #[test]
    fn identity_is_neutral() {
        for q in all_strings(2) {
            let id = PauliString::identity(2);
            assert_eq!(id.mul(&q).unwrap(), q);
            assert_eq!(q.mul(&id).unwrap(), q);
        }
    }

    #[test]
    fn xz_squared_is_identity() {
        let xz = p("XZ");
        let sq = xz.mul(&xz).unwrap();
        assert_eq!(sq, PauliString::identity(2));
        let dense = xz.to_dense().unwrap();
        assert!(close(&dense.matmul(&dense), &SquareMatrix::identity(4)));
    }

    #[test]
    fn commutation_examples() {
        assert!(!p("X").commutes(&p("Z")).unwrap());
        assert!(p("XX").commutes(&p("ZZ")).unwrap());
        assert!(p("XYZ").commutes(&p("XYZ")).unwrap());
    }

    #[test]
    fn width_mismatch_is_domain_error() {
        assert!(matches!(p("X").mul(&p("XX")), Err(Error::Domain(_))));
        assert!(matches!(p("X").commutes(&p("XX")), Err(Error::Domain(_))));
        assert!(matches!(p("XX").apply(&[c(1.0, 0.0); 2]), Err(Error::Domain(_))));
    }

    #[test]
    fn dense_examples() {
        let y = p("Y").to_dense().unwrap();
        assert_eq!(y.as_slice(), &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]);
        let zz = p("ZZ").to_dense().unwrap();
        let diag: Vec<f64> = (0..4).map(|i| zz[(i, i)].re).collect();
        assert_eq!(diag, vec![1.0, -1.0, -1.0, 1.0]);
        let mx = p("-X").to_dense().unwrap();
        assert_eq!(mx.as_slice(), &[c(0.0, 0.0), c(-1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)]);
    }

    #[test]
    fn dense_respects_budget() {
        let big = PauliString::identity(13);
        assert!(matches!(big.to_dense(), Err(Error::Resource(_))));
    }

    #[test]
    fn apply_examples() {
        let v = vec![c(0.3, -0.1), c(0.2, 0.5)];
        assert_eq!(PauliString::identity(1).apply(&v).unwrap(), v);
        let e0 = vec![c(1.0, 0.0), c(0.0, 0.0)];
        assert_eq!(p("X").apply(&e0).unwrap(), vec![c(0.0, 0.0), c(1.0, 0.0)]);
    }

    #[test]
    fn weight_counts_non_identity_sites() {
        assert_eq!(PauliString::identity(5).weight(), 0);
        assert_eq!(p("XIY").weight(), 2);
        assert_eq!(PauliString::single(130, 129, Letter::Z).weight(), 1);
    }

    #[test]
    fn text_round_trip() {
        for s in ["+XIYZ", "-ZZ", "+iY", "-iXIIX"] {
            assert_eq!(p(s).to_string(), s);
        }
        assert_eq!(p("XY").to_string(), "+XY");
        assert!("+XQ".parse::<PauliString>().is_err());
        assert!("+".parse::<PauliString>().is_err());
        assert!("-i".parse::<PauliString>().is_err());
    }

    #[test]
    fn exhaustive_against_dense_oracle_two_qubits() {
        for n in 1..=2 {
            let all = all_strings(n);
            for a in &all {
                let da = kron_oracle(a);
                assert!(close(&a.to_dense().unwrap(), &da));
                for b in &all {
                    let db = kron_oracle(b);
                    let prod = a.mul(b).unwrap();
                    assert!(close(&kron_oracle(&prod), &da.matmul(&db)), "{a} * {b}");
                    let commutator_zero = close(&da.matmul(&db), &db.matmul(&da));
                    assert_eq!(a.commutes(b).unwrap(), commutator_zero);
                }
            }
        }
    }

    #[test]
    fn exhaustive_commutation_three_qubits() {
        let all = all_strings(3);
        let dense: Vec<SquareMatrix> = all.iter().map(kron_oracle).collect();
        for (i, a) in all.iter().enumerate() {
            for (j, b) in all.iter().enumerate().skip(i) {
                let ab = dense[i].matmul(&dense[j]);
                let ba = dense[j].matmul(&dense[i]);
                assert_eq!(a.commutes(b).unwrap(), close(&ab, &ba));
            }
        }
    }

    fn arb_pauli(n: usize) -> impl Strategy<Value = PauliString> {
        (proptest::collection::vec(0u8..4, n), 0u32..4).prop_map(|(ls, k)| {
            let letters: Vec<Letter> = ls
                .into_iter()
                .map(|l| [Letter::I, Letter::X, Letter::Y, Letter::Z][l as usize])
                .collect();
            PauliString::from_letters(&letters, Phase::from_exponent(k))
        })
    }

    proptest! {
        #[test]
        fn mul_is_associative((a, b, c) in (arb_pauli(70), arb_pauli(70), arb_pauli(70))) {
            let left = a.mul(&b).unwrap().mul(&c).unwrap();
            let right = a.mul(&b.mul(&c).unwrap()).unwrap();
            prop_assert_eq!(left, right);
        }

        #[test]
        fn squares_are_plus_minus_identity(a in arb_pauli(90)) {
            let sq = a.mul(&a).unwrap();
            prop_assert!(sq.is_identity_letters());
            prop_assert!(sq.phase().is_real());
        }

        #[test]
        fn apply_matches_dense_and_is_isometric(
            a in arb_pauli(3),
            v in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 8),
        ) {
            let v: Vec<Complex64> = v.into_iter().map(|(r, i)| c(r, i)).collect();
            let got = a.apply(&v).unwrap();
            let want = kron_oracle(&a).matvec(&v);
            for (x, y) in got.iter().zip(&want) {
                prop_assert!((x - y).norm() < 1e-14);
            }
            let n0: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            let n1: f64 = got.iter().map(|z| z.norm_sqr()).sum();
            prop_assert!((n0 - n1).abs() <= 1e-14 * n0.max(1.0));
        }

        #[test]
        fn commutes_matches_dense_up_to_ten_qubits((a, b) in (arb_pauli(10), arb_pauli(10))) {
            // (ab)(ba)^{-1} = +I iff they commute; checked through apply on a basis vector
            let ab = a.mul(&b).unwrap();
            let ba = b.mul(&a).unwrap();
            let mut e = vec![c(0.0, 0.0); 1 << 10];
            e[37] = c(1.0, 0.0);
            let same = ab.apply(&e).unwrap() == ba.apply(&e).unwrap();
            prop_assert_eq!(a.commutes(&b).unwrap(), same);
        }

        #[test]
        fn text_form_round_trips(a in arb_pauli(17)) {
            prop_assert_eq!(a.to_string().parse::<PauliString>().unwrap(), a);
        }
    }
}
