//! Generalized max pooling (GMP) of local-descriptor encodings.
//!
//! GMP produces a pooled vector whose dot product with every patch encoding
//! is the same constant, so frequent and rare descriptors contribute
//! equally. For hard bag-of-words encodings it reduces exactly to max
//! pooling; for any other encoding it is a ridge regression in the primal
//! ([`gmp_primal`]) or, equivalently, a re-weighting of the patches in the
//! dual ([`gmp_dual_weights`] + [`weighted_pool`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod encoders;
pub mod error;
pub mod fixtures;
pub mod kde;
pub mod linalg;
pub mod pooling;
pub mod weightmap;

pub use encoders::{
    encode_bov_hard, encode_emk, encode_fv_hard, encode_vlad, gaussian_kernel, histogram,
    BlockStructure, Codebook, DescriptorSet, EmkParams, EncodingMatrix, GmmModel,
    OccurrenceHistogram, PatchRect,
};
pub use error::{GmpError, Result};
pub use kde::{
    equalization_weights, flatness_profile, gmk, kde_eval, ppk, Kde, PpkValue, QuadratureGrid,
};
pub use linalg::{
    conjugate_gradient, min_norm_least_squares, solve_block_diagonal, solve_spd,
    BlockDiagonalMatrix, DenseMatrix, SolveMethod, SolveReport,
};
pub use pooling::{
    gmp_dual_weights, gmp_primal, gmp_primal_block, l2_normalize, max_pool, power_normalize,
    sum_pool, weighted_pool, GmpConfig, Normalization, PatchWeights, PooledVector, Provenance,
    SolverChoice, WeightSource, LAMBDA_GRID, POWER_GRID,
};
pub use weightmap::{normalize_map, render_weight_map, WeightMap};
