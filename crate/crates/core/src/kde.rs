//! Kernel density estimators, the Gaussian match kernel, probability
//! product kernels and equalization weights.
//!
//! A set `X` of descriptors defines the KDE `p(x) = Σ wᵢ k_h(x, xᵢ)`. With
//! `h = σ/√2` and uniform weights, the expected-likelihood kernel
//! `∫ p q` between two such KDEs is proportional to the Gaussian match
//! kernel of bandwidth σ. Equalization weights solve `K w = 1`, which
//! flattens the weighted KDE at every sample position.

use crate::encoders::{gaussian_kernel, DescriptorSet};
use crate::error::{GmpError, Result};
use crate::linalg::DenseMatrix;
use crate::pooling::{gmp_dual_weights, PatchWeights};

/// Number of points in the default quadrature grid.
pub const DEFAULT_GRID_POINTS: usize = 10_001;
/// Default grid margin beyond the outermost sample, in bandwidths.
pub const DEFAULT_GRID_MARGIN: f64 = 5.0;
/// Relative change under step halving above which quadrature is flagged.
pub const QUADRATURE_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Kde {
    samples: DescriptorSet,
    weights: Vec<f64>,
    bandwidth: f64,
}

impl Kde {
    /// Uniform weights `1/M`.
    pub fn uniform(samples: DescriptorSet, bandwidth: f64) -> Result<Self> {
        let m = samples.len();
        Self::weighted(samples, vec![1.0 / m as f64; m], bandwidth)
    }

    /// Arbitrary finite weights; they need not sum to one.
    pub fn weighted(samples: DescriptorSet, weights: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(GmpError::invalid("kde bandwidth must be positive"));
        }
        if weights.len() != samples.len() {
            return Err(GmpError::DimensionMismatch {
                context: "kde weights",
                expected: samples.len(),
                actual: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(GmpError::NonFinite("kde weights"));
        }
        Ok(Self {
            samples,
            weights,
            bandwidth,
        })
    }

    pub fn samples(&self) -> &DescriptorSet {
        &self.samples
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn dim(&self) -> usize {
        self.samples.dim()
    }
}

/// `Σᵢ wᵢ k_h(x, xᵢ)`.
pub fn kde_eval(p: &Kde, x: &[f64]) -> f64 {
    assert_eq!(x.len(), p.dim(), "kde_eval dimension");
    p.samples
        .iter()
        .zip(&p.weights)
        .map(|(s, w)| w * gaussian_kernel(x, s, p.bandwidth))
        .sum()
}

/// Gaussian match kernel `(1/MN) Σᵢ Σⱼ k_σ(xᵢ, yⱼ)`.
pub fn gmk(x: &DescriptorSet, y: &DescriptorSet, sigma: f64) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(GmpError::DimensionMismatch {
            context: "gmk descriptor dimension",
            expected: x.dim(),
            actual: y.dim(),
        });
    }
    if !(sigma > 0.0) {
        return Err(GmpError::invalid("gmk bandwidth must be positive"));
    }
    // Sum in an order that does not depend on argument order, so the
    // kernel is exactly symmetric.
    let (x, y) = if canonical_order(x, y) {
        (x, y)
    } else {
        (y, x)
    };
    let total: f64 = x
        .iter()
        .map(|xi| {
            y.iter()
                .map(|yj| gaussian_kernel(xi, yj, sigma))
                .sum::<f64>()
        })
        .sum();
    Ok(total / (x.len() * y.len()) as f64)
}

fn canonical_order(x: &DescriptorSet, y: &DescriptorSet) -> bool {
    let key = |s: &DescriptorSet| s.len();
    match key(x).cmp(&key(y)) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => {
            for (a, b) in x.matrix().values().iter().zip(y.matrix().values()) {
                match a.total_cmp(b) {
                    std::cmp::Ordering::Less => return true,
                    std::cmp::Ordering::Greater => return false,
                    std::cmp::Ordering::Equal => {}
                }
            }
            true
        }
    }
}

/// Uniform 1-d grid `lo, lo + h, …, hi` with `points` nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl QuadratureGrid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(GmpError::invalid(format!(
                "grid bounds [{lo}, {hi}] are not increasing"
            )));
        }
        if points < 2 {
            return Err(GmpError::invalid("grid needs at least two points"));
        }
        Ok(Self { lo, hi, points })
    }

    /// `[min − 5h, max + 5h]` over the samples of all KDEs, where `h` is the
    /// largest bandwidth, with [`DEFAULT_GRID_POINTS`] nodes.
    pub fn covering(kdes: &[&Kde]) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut h = 0.0f64;
        for p in kdes {
            require_1d(p)?;
            for s in p.samples.iter() {
                lo = lo.min(s[0]);
                hi = hi.max(s[0]);
            }
            h = h.max(p.bandwidth);
        }
        Self::around_samples(lo, hi, h)
    }

    /// `[lo − 5σ, hi + 5σ]` with [`DEFAULT_GRID_POINTS`] nodes.
    pub fn around_samples(lo: f64, hi: f64, sigma: f64) -> Result<Self> {
        Self::new(
            lo - DEFAULT_GRID_MARGIN * sigma,
            hi + DEFAULT_GRID_MARGIN * sigma,
            DEFAULT_GRID_POINTS,
        )
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.points)
            .map(|i| {
                if i + 1 == self.points {
                    self.hi
                } else {
                    self.lo + i as f64 * h
                }
            })
            .collect()
    }

    /// Same interval, half the step.
    pub fn halved(&self) -> Self {
        Self {
            points: 2 * self.points - 1,
            ..*self
        }
    }
}

/// Trapezoidal rule on samples `ys` at uniformly spaced nodes of `grid`.
pub fn trapezoid(grid: &QuadratureGrid, ys: &[f64]) -> f64 {
    assert_eq!(ys.len(), grid.points, "trapezoid sample count");
    let inner: f64 = ys[1..ys.len() - 1].iter().sum();
    grid.step() * (inner + 0.5 * (ys[0] + ys[ys.len() - 1]))
}

/// A quadrature result and its step-halving check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PpkValue {
    pub value: f64,
    /// Relative change when the step is halved.
    pub halving_change: f64,
    pub converged: bool,
}

fn require_1d(p: &Kde) -> Result<()> {
    if p.dim() == 1 {
        Ok(())
    } else {
        Err(GmpError::invalid(format!(
            "quadrature supports 1-d densities only, got dimension {}",
            p.dim()
        )))
    }
}

fn ppk_on(p: &Kde, q: &Kde, rho: f64, grid: &QuadratureGrid) -> f64 {
    let ys: Vec<f64> = grid
        .nodes()
        .into_iter()
        .map(|x| {
            let (a, b) = (kde_eval(p, &[x]).max(0.0), kde_eval(q, &[x]).max(0.0));
            a.powf(rho) * b.powf(rho)
        })
        .collect();
    trapezoid(grid, &ys)
}

/// Probability product kernel `∫ p(x)^ρ q(x)^ρ dx` for 1-d KDEs.
///
/// Negative density values (possible with signed weights) are clipped at
/// zero before exponentiation.
pub fn ppk(p: &Kde, q: &Kde, rho: f64, grid: &QuadratureGrid) -> Result<PpkValue> {
    require_1d(p)?;
    require_1d(q)?;
    if !(rho > 0.0) {
        return Err(GmpError::invalid("ppk exponent must be positive"));
    }
    let value = ppk_on(p, q, rho, grid);
    let fine = ppk_on(p, q, rho, &grid.halved());
    let halving_change = if fine != 0.0 {
        ((fine - value) / fine).abs()
    } else {
        (fine - value).abs()
    };
    Ok(PpkValue {
        value,
        halving_change,
        converged: halving_change <= QUADRATURE_TOL,
    })
}

/// `p(x)^ρ / ∫ p^ρ` on the grid nodes.
pub fn powered_density(p: &Kde, rho: f64, grid: &QuadratureGrid) -> Result<Vec<f64>> {
    require_1d(p)?;
    if !(rho > 0.0) {
        return Err(GmpError::invalid("exponent must be positive"));
    }
    let ys: Vec<f64> = grid
        .nodes()
        .into_iter()
        .map(|x| kde_eval(p, &[x]).max(0.0).powf(rho))
        .collect();
    let z = trapezoid(grid, &ys);
    if !(z > 0.0) {
        return Err(GmpError::invalid("density integrates to zero on the grid"));
    }
    Ok(ys.into_iter().map(|y| y / z).collect())
}

/// Gram matrix `Kᵢⱼ = k_σ(xᵢ, xⱼ)`.
pub fn gaussian_gram(x: &DescriptorSet, sigma: f64) -> Result<DenseMatrix> {
    if !(sigma > 0.0) {
        return Err(GmpError::invalid("kernel bandwidth must be positive"));
    }
    let m = x.len();
    let mut values = vec![0.0; m * m];
    for i in 0..m {
        values[i * m + i] = 1.0;
        for j in (i + 1)..m {
            let k = gaussian_kernel(x.descriptor(i), x.descriptor(j), sigma);
            values[i * m + j] = k;
            values[j * m + i] = k;
        }
    }
    DenseMatrix::new(m, m, values)
}

/// Weights that make `Σⱼ wⱼ k_σ(xᵢ, xⱼ) = 1` at every sample (λ = 0), or
/// the ridge-regularized version for λ > 0.
pub fn equalization_weights(x: &DescriptorSet, sigma: f64, lambda: f64) -> Result<PatchWeights> {
    gmp_dual_weights(&gaussian_gram(x, sigma)?, lambda)
}

/// Weighted KDE `Σⱼ wⱼ k_σ(x, xⱼ)` evaluated at each grid point.
pub fn flatness_profile(
    x: &DescriptorSet,
    weights: &PatchWeights,
    sigma: f64,
    grid: &[f64],
) -> Result<Vec<f64>> {
    if x.dim() != 1 {
        return Err(GmpError::invalid(
            "flatness profile is defined for 1-d samples",
        ));
    }
    let kde = Kde::weighted(x.clone(), weights.alpha.clone(), sigma)?;
    Ok(grid.iter().map(|&g| kde_eval(&kde, &[g])).collect())
}

/// Indices of strict interior local maxima. Plateaus count once, at their
/// first index.
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let n = values.len();
    let mut i = 1;
    while i + 1 < n {
        if values[i] > values[i - 1] {
            let mut j = i;
            while j + 1 < n && values[j + 1] == values[i] {
                j += 1;
            }
            if j + 1 < n && values[j + 1] < values[i] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}
