//! Fixed-seed fixtures shared by the benchmarks.

use paulilab_core::ensembles::{sample_gue, sample_pauli_string_ensemble, SparsePauliSum};
use paulilab_core::spectral::eigenvalues;
use paulilab_core::{Complex64, DenseHermitian, Spectrum};

pub const SEED: u64 = 0x5eed;

pub fn pauli_sum(n: usize, m: usize) -> SparsePauliSum {
    sample_pauli_string_ensemble(n, m, SEED).expect("valid ensemble parameters")
}

pub fn gue(dim: usize) -> DenseHermitian {
    sample_gue(dim, SEED).expect("valid dimension")
}

pub fn gue_spectrum(dim: usize) -> Spectrum {
    eigenvalues(&gue(dim)).expect("eigensolver converges")
}

/// Deterministic unit vector with all amplitudes nonzero.
pub fn probe_vector(dim: usize) -> Vec<Complex64> {
    let norm = (dim as f64).sqrt();
    (0..dim)
        .map(|i| Complex64::from_polar(1.0 / norm, i as f64 * 0.37))
        .collect()
}
