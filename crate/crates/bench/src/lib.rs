//! Shared fixtures for the criterion benchmarks.

use eulercs_core::recovery::gen_sparse_signal;
use eulercs_core::{build_binary_matrix, euler_square, Measurement, SensingMatrix};

pub fn euler_matrix(n: usize, k: usize) -> SensingMatrix {
    build_binary_matrix(&euler_square(n, k).expect("constructible index")).expect("valid index")
}

/// Measurements of a seeded `s`-sparse signal, with the signal itself.
pub fn measured_signal<M: Measurement>(phi: &M, s: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let (_, cols) = phi.shape();
    let x = gen_sparse_signal(cols, s, seed, 0).expect("valid sparsity").to_dense();
    (phi.measure(&x), x)
}
