//! Spectral laboratory for sparse random Hamiltonians.
//!
//! The crate builds random Pauli-string Hamiltonians (and the GUE and
//! signed-permutation ensembles they are compared against), measures their
//! spectral statistics, tabulates universality and concentration bounds
//! against Monte Carlo measurements, and runs the low-energy procedures:
//! phase-estimation sampling from the maximally mixed state, a Chebyshev
//! polynomial witness, circuit-size lower-bound calculators and a
//! product-state baseline.
//!
//! Module map:
//!
//! - [`pauli`]: bit-packed Pauli strings, group product, commutation, matrix-free application.
//! - [`ensembles`]: seeded samplers and instance serialization.
//! - [`spectral`]: eigenvalues, normalized Schatten norms, resolvent moments, semicircle law, Lanczos.
//! - [`universality`]: Monte Carlo comparison experiments and bound calculators.
//! - [`lowenergy`]: phase estimation model, DOS proxy, Chebyshev witness, lower bounds, product states.
//! - [`harness`]: experiment configs, CSV tables, manifests and the deterministic trial runner.

// Parameter checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ensembles;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod lowenergy;
pub mod pauli;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod universality;

pub use ensembles::{
    DenseHermitian, EnsembleSpec, HermitianMatrix, SignedPermutation, SparseHermitian, SparsePauliSum,
};
pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use pauli::{PauliString, Phase};
pub use rng::SeedTree;
pub use spectral::{ResolventQuery, Spectrum};
