//! Aggregation operators: sum, max, generalized max pooling (primal and
//! dual), weighted pooling, and the power / ℓ2 post-normalizations.
//!
//! GMP seeks the pooled vector φ whose dot product with every patch
//! encoding is 1, i.e. `Φᵀφ = 1_N`. With `λ = 0` this is solved in the
//! minimum-norm least-squares sense through the SVD; with `λ > 0` it is the
//! ridge solution `(ΦΦᵀ + λI)⁻¹ Φ1_N`, which by the representer theorem is
//! also `Φ (K + λI)⁻¹ 1_N` with `K = ΦᵀΦ`.

use std::fmt;

use crate::encoders::EncodingMatrix;
use crate::error::{GmpError, Result};
use crate::linalg::{
    self, conjugate_gradient, min_norm_least_squares, norm, solve_block_diagonal, solve_spd,
    BlockDiagonalMatrix, DenseMatrix, SolveMethod, SolveReport, DEFAULT_RANK_TOL,
};

/// Regularization values searched by cross-validation.
pub const LAMBDA_GRID: [f64; 5] = [1e1, 1e2, 1e3, 1e4, 1e5];

/// Power-normalization exponents searched by cross-validation.
pub const POWER_GRID: [f64; 8] = [1.0, 0.7, 0.5, 0.4, 0.3, 0.2, 0.1, 0.0];

/// Above this dimension a dense (non-block) encoding is solved with CG
/// under [`SolverChoice::Auto`].
pub const CG_DIM_THRESHOLD: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    Raw,
    L2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Sum,
    Max,
    GmpPrimal,
    GmpDual,
    Weighted,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Sum => "sum",
            Provenance::Max => "max",
            Provenance::GmpPrimal => "gmp_primal",
            Provenance::GmpDual => "gmp_dual",
            Provenance::Weighted => "weighted",
        })
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::Raw => "raw",
            Normalization::L2 => "l2",
        })
    }
}

/// A pooled image representation.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledVector {
    pub values: Vec<f64>,
    pub normalization: Normalization,
    pub provenance: Provenance,
    /// Set when ℓ2 normalization met an all-zero vector.
    pub degenerate: bool,
}

impl PooledVector {
    pub fn raw(values: Vec<f64>, provenance: Provenance) -> Self {
        Self {
            values,
            normalization: Normalization::Raw,
            provenance,
            degenerate: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightSource {
    /// Solved from the patch kernel by [`gmp_dual_weights`].
    Dual,
    /// Supplied by the caller.
    Given,
}

/// Per-patch pooling weights α.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchWeights {
    pub alpha: Vec<f64>,
    pub lambda: f64,
    pub source: WeightSource,
}

impl PatchWeights {
    pub fn given(alpha: Vec<f64>) -> Result<Self> {
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(GmpError::NonFinite("patch weights"));
        }
        Ok(Self {
            alpha,
            lambda: 0.0,
            source: WeightSource::Given,
        })
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverChoice {
    Auto,
    DenseDirect,
    Block,
    Cg,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmpConfig {
    pub lambda: f64,
    pub solver: SolverChoice,
    pub cg_tol: f64,
    /// Defaults to the encoding dimension when `None`.
    pub cg_max_iter: Option<usize>,
    pub rank_tol: f64,
}

impl GmpConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            solver: SolverChoice::Auto,
            cg_tol: 1e-10,
            cg_max_iter: None,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }

    pub fn with_solver(mut self, solver: SolverChoice) -> Self {
        self.solver = solver;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(GmpError::invalid(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.cg_tol > 0.0) || !(self.rank_tol > 0.0) {
            return Err(GmpError::invalid("tolerances must be positive"));
        }
        Ok(())
    }

    /// The solver actually used for `phi` under this configuration.
    pub fn resolve(&self, phi: &EncodingMatrix) -> SolveMethod {
        if self.lambda == 0.0 {
            return SolveMethod::Svd;
        }
        match self.solver {
            SolverChoice::DenseDirect => SolveMethod::Cholesky,
            SolverChoice::Block => SolveMethod::Block,
            SolverChoice::Cg => SolveMethod::Cg,
            SolverChoice::Auto => {
                if phi.block_structure().is_some() {
                    SolveMethod::Block
                } else if phi.dim() > CG_DIM_THRESHOLD {
                    SolveMethod::Cg
                } else {
                    SolveMethod::Cholesky
                }
            }
        }
    }
}

fn require_patches(phi: &EncodingMatrix) -> Result<()> {
    if phi.num_patches() == 0 || phi.dim() == 0 {
        Err(GmpError::Empty("encoding matrix"))
    } else {
        Ok(())
    }
}

fn row_sums(phi: &DenseMatrix) -> Vec<f64> {
    (0..phi.rows()).map(|r| phi.row(r).iter().sum()).collect()
}

/// `Φ 1_N`.
pub fn sum_pool(phi: &EncodingMatrix) -> Result<PooledVector> {
    require_patches(phi)?;
    Ok(PooledVector::raw(row_sums(phi.phi()), Provenance::Sum))
}

/// Per-dimension maximum over patches.
pub fn max_pool(phi: &EncodingMatrix) -> Result<PooledVector> {
    require_patches(phi)?;
    let m = phi.phi();
    let values = (0..m.rows())
        .map(|r| m.row(r).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(PooledVector::raw(values, Provenance::Max))
}

/// Generalized max pooling in the primal.
pub fn gmp_primal(phi: &EncodingMatrix, cfg: &GmpConfig) -> Result<(PooledVector, SolveReport)> {
    require_patches(phi)?;
    cfg.validate()?;
    let method = cfg.resolve(phi);
    let tag = |e: GmpError| GmpError::Solver {
        method,
        source: Box::new(e),
    };
    let m = phi.phi();
    let ones = vec![1.0; phi.num_patches()];

    let (values, iterations, converged) = match method {
        SolveMethod::Svd => (
            min_norm_least_squares(&m.transpose(), &ones, cfg.rank_tol).map_err(tag)?,
            0,
            true,
        ),
        SolveMethod::Cholesky => {
            let mut gram = m.outer_gram();
            gram.add_diagonal(cfg.lambda);
            (solve_spd(&gram, &row_sums(m)).map_err(tag)?, 1, true)
        }
        SolveMethod::Block => (block_solve(phi, cfg.lambda).map_err(tag)?, 1, true),
        SolveMethod::Cg => {
            let lambda = cfg.lambda;
            let apply = |v: &[f64]| {
                let mut out = m.matvec(&m.matvec_transposed(v));
                for (o, vi) in out.iter_mut().zip(v) {
                    *o += lambda * vi;
                }
                out
            };
            let max_iter = cfg.cg_max_iter.unwrap_or(phi.dim());
            let (x, report) =
                conjugate_gradient(apply, &row_sums(m), cfg.cg_tol, max_iter).map_err(tag)?;
            (x, report.iterations, report.converged)
        }
    };

    let report = SolveReport {
        method,
        iterations,
        residual_norm: primal_residual(phi, &values, cfg.lambda),
        converged,
    };
    Ok((PooledVector::raw(values, Provenance::GmpPrimal), report))
}

/// Residual of the normal equations `(ΦΦᵀ + λI)φ − Φ1` for λ > 0, or of
/// the matching system `Φᵀφ − 1` for λ = 0.
fn primal_residual(phi: &EncodingMatrix, x: &[f64], lambda: f64) -> f64 {
    let m = phi.phi();
    let proj = m.matvec_transposed(x);
    if lambda == 0.0 {
        return proj
            .iter()
            .map(|p| (p - 1.0) * (p - 1.0))
            .sum::<f64>()
            .sqrt();
    }
    let lhs = m.matvec(&proj);
    let rhs = row_sums(m);
    lhs.iter()
        .zip(x)
        .zip(&rhs)
        .map(|((l, xi), r)| {
            let d = l + lambda * xi - r;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Regularized GMP on a block-sparse encoding, solved block by block.
pub fn gmp_primal_block(phi: &EncodingMatrix, lambda: f64) -> Result<PooledVector> {
    require_patches(phi)?;
    Ok(PooledVector::raw(
        block_solve(phi, lambda)?,
        Provenance::GmpPrimal,
    ))
}

fn block_solve(phi: &EncodingMatrix, lambda: f64) -> Result<Vec<f64>> {
    let blocks = phi
        .block_structure()
        .ok_or(GmpError::MissingBlockStructure)?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(GmpError::invalid("block solver needs lambda > 0"));
    }
    let size = blocks.block_size;
    let n_blocks = phi.dim() / size;
    let m = phi.phi();

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_blocks];
    for (col, &b) in blocks.column_blocks.iter().enumerate() {
        members[b].push(col);
    }

    let mut grams = Vec::with_capacity(n_blocks);
    let mut rhs = vec![0.0; phi.dim()];
    for (b, cols) in members.iter().enumerate() {
        let base = b * size;
        let mut g = vec![0.0; size * size];
        for &col in cols {
            let v: Vec<f64> = (0..size).map(|i| m.get(base + i, col)).collect();
            for i in 0..size {
                rhs[base + i] += v[i];
                if v[i] == 0.0 {
                    continue;
                }
                for j in 0..size {
                    g[i * size + j] += v[i] * v[j];
                }
            }
        }
        let mut g = DenseMatrix::new(size, size, g)?;
        g.add_diagonal(lambda);
        grams.push(g);
    }
    solve_block_diagonal(&BlockDiagonalMatrix::new(grams)?, &rhs)
}

/// Dual GMP weights `α = (K + λI)⁻¹ 1_N` from the patch-to-patch kernel.
///
/// `λ = 0` is accepted only when `K` is nonsingular.
pub fn gmp_dual_weights(kernel: &DenseMatrix, lambda: f64) -> Result<PatchWeights> {
    if kernel.is_empty() {
        return Err(GmpError::Empty("kernel matrix"));
    }
    if !kernel.is_square() {
        return Err(GmpError::DimensionMismatch {
            context: "kernel matrix (square)",
            expected: kernel.rows(),
            actual: kernel.cols(),
        });
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(GmpError::invalid(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    let mut a = kernel.clone();
    a.add_diagonal(lambda);
    let ones = vec![1.0; kernel.rows()];
    let alpha = solve_spd(&a, &ones).map_err(|e| match e {
        GmpError::NotPositiveDefinite { pivot } if lambda == 0.0 => {
            GmpError::SingularKernel { pivot }
        }
        other => other,
    })?;
    Ok(PatchWeights {
        alpha,
        lambda,
        source: WeightSource::Dual,
    })
}

/// `Φ α`.
pub fn weighted_pool(phi: &EncodingMatrix, weights: &PatchWeights) -> Result<PooledVector> {
    require_patches(phi)?;
    if weights.len() != phi.num_patches() {
        return Err(GmpError::DimensionMismatch {
            context: "patch weights",
            expected: phi.num_patches(),
            actual: weights.len(),
        });
    }
    let provenance = match weights.source {
        WeightSource::Dual => Provenance::GmpDual,
        WeightSource::Given => Provenance::Weighted,
    };
    Ok(PooledVector::raw(
        phi.phi().matvec(&weights.alpha),
        provenance,
    ))
}

/// Entrywise `sign(z)|z|^ρ`. At `ρ = 0` only non-zero entries are mapped
/// (to ±1); zeros stay zero.
pub fn power_normalize(v: &PooledVector, rho: f64) -> Result<PooledVector> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(GmpError::invalid(format!(
            "power exponent {rho} outside [0, 1]"
        )));
    }
    let values = v
        .values
        .iter()
        .map(|&z| {
            if z == 0.0 {
                0.0
            } else if rho == 0.0 {
                z.signum()
            } else {
                z.signum() * z.abs().powf(rho)
            }
        })
        .collect();
    Ok(PooledVector {
        values,
        normalization: Normalization::Raw,
        provenance: v.provenance,
        degenerate: false,
    })
}

/// `v / ‖v‖`. The zero vector is returned unchanged and flagged.
pub fn l2_normalize(v: &PooledVector) -> PooledVector {
    let n = v.norm();
    let (values, degenerate) = if n > 0.0 {
        (v.values.iter().map(|z| z / n).collect(), false)
    } else {
        (v.values.clone(), true)
    };
    PooledVector {
        values,
        normalization: Normalization::L2,
        provenance: v.provenance,
        degenerate,
    }
}

/// Angle in radians between two vectors (0 when either is zero).
pub fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (linalg::dot(a, b) / (na * nb)).clamp(-1.0, 1.0).acos()
}
