//! Inputs shared by the benchmarks.

use gmp_core::{encode_emk, encode_vlad, fixtures, DenseMatrix, EmkParams, EncodingMatrix};

/// Dense `d × n` encoding with uniform entries.
pub fn dense_encoding(seed: u64, d: usize, n: usize) -> EncodingMatrix {
    EncodingMatrix::dense(fixtures::uniform_matrix(&mut fixtures::rng(seed), d, n))
}

/// VLAD encoding of `n` random `dim`-dimensional descriptors over `c`
/// centroids.
pub fn vlad_encoding(seed: u64, c: usize, dim: usize, n: usize) -> EncodingMatrix {
    let mut rng = fixtures::rng(seed);
    let cb = fixtures::random_codebook(&mut rng, c, dim, 1.0);
    let x = fixtures::random_descriptors(&mut rng, n, dim, 1.0);
    encode_vlad(&x, &cb).expect("valid vlad input")
}

/// EMK encoding with `out_dim` random features.
pub fn emk_encoding(seed: u64, dim: usize, out_dim: usize, n: usize) -> EncodingMatrix {
    let mut rng = fixtures::rng(seed);
    let x = fixtures::random_descriptors(&mut rng, n, dim, 1.0);
    let params = EmkParams::new(dim, out_dim, 1.0, seed).expect("valid emk params");
    encode_emk(&x, &params).expect("valid emk input")
}

/// Patch kernel `ΦᵀΦ` of an encoding.
pub fn patch_kernel(phi: &EncodingMatrix) -> DenseMatrix {
    phi.phi().inner_gram()
}
