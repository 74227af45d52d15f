//! Per-patch encoders: hard bag-of-visual-words, VLAD, hard-assignment
//! Fisher vectors and EMK random Fourier features.
//!
//! Every encoder returns an [`EncodingMatrix`] with one column per patch.
//! The codebook encoders also record which block each column lives in, so
//! that the pooling solvers can exploit the block-diagonal Gram matrix.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{GmpError, Result};
use crate::linalg::DenseMatrix;

/// Patch rectangle in pixels; covers `[x, x + width) × [y, y + height)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchRect {
    pub x: i64,
    pub y: i64,
    pub width: i64,
    pub height: i64,
}

impl PatchRect {
    pub fn new(x: i64, y: i64, width: i64, height: i64) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }
}

/// The local descriptors of one image, `N × d`, with optional geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorSet {
    descriptors: DenseMatrix,
    geometry: Option<Vec<PatchRect>>,
}

impl DescriptorSet {
    pub fn new(descriptors: DenseMatrix) -> Result<Self> {
        if descriptors.rows() == 0 {
            return Err(GmpError::Empty("descriptor set"));
        }
        if descriptors.cols() == 0 {
            return Err(GmpError::Empty("descriptor dimension"));
        }
        Ok(Self {
            descriptors,
            geometry: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(DenseMatrix::from_rows(rows)?)
    }

    /// 1-d samples, one descriptor per value.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(DenseMatrix::new(values.len(), 1, values.to_vec())?)
    }

    pub fn with_geometry(mut self, geometry: Vec<PatchRect>) -> Result<Self> {
        if geometry.len() != self.len() {
            return Err(GmpError::DimensionMismatch {
                context: "patch geometry",
                expected: self.len(),
                actual: geometry.len(),
            });
        }
        if let Some(bad) = geometry.iter().position(|r| r.width < 0 || r.height < 0) {
            return Err(GmpError::invalid(format!(
                "patch {bad} has a negative size"
            )));
        }
        self.geometry = Some(geometry);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.descriptors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.descriptors.cols()
    }

    pub fn descriptor(&self, i: usize) -> &[f64] {
        self.descriptors.row(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.len()).map(move |i| self.descriptor(i))
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.descriptors
    }

    pub fn geometry(&self) -> Option<&[PatchRect]> {
        self.geometry.as_deref()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    centroids: DenseMatrix,
}

impl Codebook {
    pub fn new(centroids: DenseMatrix) -> Result<Self> {
        if centroids.rows() == 0 {
            return Err(GmpError::Empty("codebook"));
        }
        if centroids.cols() == 0 {
            return Err(GmpError::Empty("codebook dimension"));
        }
        for i in 0..centroids.rows() {
            for j in (i + 1)..centroids.rows() {
                if centroids.row(i) == centroids.row(j) {
                    return Err(GmpError::invalid(format!("centroids {i} and {j} coincide")));
                }
            }
        }
        Ok(Self { centroids })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(DenseMatrix::from_rows(rows)?)
    }

    pub fn len(&self) -> usize {
        self.centroids.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }

    pub fn centroid(&self, k: usize) -> &[f64] {
        self.centroids.row(k)
    }

    /// Nearest centroid in Euclidean distance; ties go to the lowest index.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for k in 0..self.len() {
            let d = squared_distance(x, self.centroid(k));
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }
}

/// Diagonal-covariance Gaussian mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmModel {
    means: DenseMatrix,
    variances: DenseMatrix,
    weights: Vec<f64>,
}

impl GmmModel {
    pub fn new(means: DenseMatrix, variances: DenseMatrix, weights: Vec<f64>) -> Result<Self> {
        let g = means.rows();
        if g == 0 || means.cols() == 0 {
            return Err(GmpError::Empty("gmm"));
        }
        if variances.rows() != g || variances.cols() != means.cols() {
            return Err(GmpError::invalid(
                "gmm variances must have the shape of the means",
            ));
        }
        if weights.len() != g {
            return Err(GmpError::DimensionMismatch {
                context: "gmm weights",
                expected: g,
                actual: weights.len(),
            });
        }
        if variances.values().iter().any(|&v| !(v > 0.0)) {
            return Err(GmpError::invalid("gmm variances must be strictly positive"));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(GmpError::invalid("gmm mixture weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(GmpError::invalid(format!(
                "gmm mixture weights sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            means,
            variances,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.means.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        self.means.row(k)
    }

    pub fn variance(&self, k: usize) -> &[f64] {
        self.variances.row(k)
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    /// Index of the Gaussian with the highest posterior; ties go low.
    pub fn hard_assign(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_ll = f64::NEG_INFINITY;
        for k in 0..self.len() {
            let ll = self.weights[k].ln()
                + self
                    .mean(k)
                    .iter()
                    .zip(self.variance(k))
                    .zip(x)
                    .map(|((m, v), xi)| -0.5 * ((xi - m) * (xi - m) / v + v.ln()))
                    .sum::<f64>();
            if ll > best_ll {
                best_ll = ll;
                best = k;
            }
        }
        best
    }
}

/// Random Fourier feature parameters for the Gaussian kernel of bandwidth σ.
#[derive(Clone, Debug, PartialEq)]
pub struct EmkParams {
    directions: DenseMatrix,
    phases: Vec<f64>,
    sigma: f64,
    seed: u64,
}

impl EmkParams {
    /// Draws `output_dim` directions `ω ~ N(0, I/σ²)` and phases
    /// `b ~ U[0, 2π)` from a ChaCha stream seeded with `seed`.
    pub fn new(input_dim: usize, output_dim: usize, sigma: f64, seed: u64) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(GmpError::Empty("emk dimensions"));
        }
        if !output_dim.is_multiple_of(2) {
            return Err(GmpError::invalid(format!(
                "emk output dimension {output_dim} must be even"
            )));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(GmpError::invalid("emk bandwidth must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / sigma).expect("finite std");
        let uniform = Uniform::new(0.0, std::f64::consts::TAU).expect("valid range");
        let directions =
            DenseMatrix::from_fn(output_dim, input_dim, |_, _| normal.sample(&mut rng))?;
        let phases = (0..output_dim).map(|_| uniform.sample(&mut rng)).collect();
        Ok(Self {
            directions,
            phases,
            sigma,
            seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.directions.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.directions.rows()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Encodes a single descriptor.
    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        let d = self.output_dim();
        let scale = (2.0 / d as f64).sqrt();
        (0..d)
            .map(|j| {
                let proj: f64 = self
                    .directions
                    .row(j)
                    .iter()
                    .zip(x)
                    .map(|(w, xi)| w * xi)
                    .sum();
                scale * (proj + self.phases[j]).cos()
            })
            .collect()
    }
}

/// Block layout of a block-sparse encoding: column `n` is supported inside
/// rows `[b·size, (b+1)·size)` where `b = column_blocks[n]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockStructure {
    pub block_size: usize,
    pub column_blocks: Vec<usize>,
}

/// `D × N` matrix of per-patch encodings.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodingMatrix {
    phi: DenseMatrix,
    blocks: Option<BlockStructure>,
}

impl EncodingMatrix {
    pub fn dense(phi: DenseMatrix) -> Self {
        Self { phi, blocks: None }
    }

    /// Attaches a block structure after checking that every column is zero
    /// outside its declared block.
    pub fn block_sparse(phi: DenseMatrix, blocks: BlockStructure) -> Result<Self> {
        let size = blocks.block_size;
        if size == 0 || !phi.rows().is_multiple_of(size) {
            return Err(GmpError::InvalidBlockStructure(format!(
                "dimension {} is not a multiple of block size {size}",
                phi.rows()
            )));
        }
        if blocks.column_blocks.len() != phi.cols() {
            return Err(GmpError::InvalidBlockStructure(format!(
                "{} block ids for {} columns",
                blocks.column_blocks.len(),
                phi.cols()
            )));
        }
        let n_blocks = phi.rows() / size;
        for (n, &b) in blocks.column_blocks.iter().enumerate() {
            if b >= n_blocks {
                return Err(GmpError::InvalidBlockStructure(format!(
                    "column {n} declares block {b} of {n_blocks}"
                )));
            }
            let outside = (0..phi.rows())
                .filter(|&r| r / size != b)
                .any(|r| phi.get(r, n) != 0.0);
            if outside {
                return Err(GmpError::InvalidBlockStructure(format!(
                    "column {n} has support outside block {b}"
                )));
            }
        }
        Ok(Self {
            phi,
            blocks: Some(blocks),
        })
    }

    pub fn phi(&self) -> &DenseMatrix {
        &self.phi
    }

    pub fn block_structure(&self) -> Option<&BlockStructure> {
        self.blocks.as_ref()
    }

    /// Encoding dimensionality `D`.
    pub fn dim(&self) -> usize {
        self.phi.rows()
    }

    /// Number of patches `N`.
    pub fn num_patches(&self) -> usize {
        self.phi.cols()
    }

    pub fn column(&self, n: usize) -> Vec<f64> {
        self.phi.column(n)
    }

    /// Drops the block structure, e.g. to force the dense solver.
    pub fn without_blocks(&self) -> Self {
        Self::dense(self.phi.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OccurrenceHistogram {
    pub counts: Vec<usize>,
}

impl OccurrenceHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[inline]
pub fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `exp(−‖x − y‖² / 2σ²)`, so that `k(x, x) = 1`.
pub fn gaussian_kernel(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    assert_eq!(x.len(), y.len(), "gaussian_kernel dimension");
    assert!(sigma > 0.0, "gaussian_kernel bandwidth must be positive");
    (-squared_distance(x, y) / (2.0 * sigma * sigma)).exp()
}

fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(GmpError::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}

pub fn histogram(x: &DescriptorSet, codebook: &Codebook) -> Result<OccurrenceHistogram> {
    check_dim("histogram descriptor dimension", codebook.dim(), x.dim())?;
    let mut counts = vec![0; codebook.len()];
    for desc in x.iter() {
        counts[codebook.nearest(desc)] += 1;
    }
    Ok(OccurrenceHistogram { counts })
}

/// Hard-assignment bag of visual words: each column is the indicator of
/// the nearest centroid.
pub fn encode_bov_hard(x: &DescriptorSet, codebook: &Codebook) -> Result<EncodingMatrix> {
    check_dim("bov descriptor dimension", codebook.dim(), x.dim())?;
    let (c, n) = (codebook.len(), x.len());
    let assignments: Vec<usize> = x.iter().map(|d| codebook.nearest(d)).collect();
    let mut values = vec![0.0; c * n];
    for (col, &k) in assignments.iter().enumerate() {
        values[k * n + col] = 1.0;
    }
    EncodingMatrix::block_sparse(
        DenseMatrix::new(c, n, values)?,
        BlockStructure {
            block_size: 1,
            column_blocks: assignments,
        },
    )
}

/// VLAD: residual to the nearest centroid, placed in that centroid's block.
pub fn encode_vlad(x: &DescriptorSet, codebook: &Codebook) -> Result<EncodingMatrix> {
    check_dim("vlad descriptor dimension", codebook.dim(), x.dim())?;
    let (c, d, n) = (codebook.len(), x.dim(), x.len());
    let mut values = vec![0.0; c * d * n];
    let mut assignments = Vec::with_capacity(n);
    for (col, desc) in x.iter().enumerate() {
        let k = codebook.nearest(desc);
        assignments.push(k);
        for (j, (xi, mu)) in desc.iter().zip(codebook.centroid(k)).enumerate() {
            values[(k * d + j) * n + col] = xi - mu;
        }
    }
    EncodingMatrix::block_sparse(
        DenseMatrix::new(c * d, n, values)?,
        BlockStructure {
            block_size: d,
            column_blocks: assignments,
        },
    )
}

/// Hard-assignment Fisher vector. The block of Gaussian `k` holds the mean
/// gradient `(x − μ)/σ` followed by the variance gradient
/// `((x − μ)²/σ² − 1)/√2`, both scaled by `1/√w_k`.
pub fn encode_fv_hard(x: &DescriptorSet, gmm: &GmmModel) -> Result<EncodingMatrix> {
    check_dim("fv descriptor dimension", gmm.dim(), x.dim())?;
    let (g, d, n) = (gmm.len(), x.dim(), x.len());
    let block = 2 * d;
    let mut values = vec![0.0; g * block * n];
    let mut assignments = Vec::with_capacity(n);
    for (col, desc) in x.iter().enumerate() {
        let k = gmm.hard_assign(desc);
        assignments.push(k);
        let scale = 1.0 / gmm.weight(k).sqrt();
        for j in 0..d {
            let sd = gmm.variance(k)[j].sqrt();
            let z = (desc[j] - gmm.mean(k)[j]) / sd;
            values[(k * block + j) * n + col] = scale * z;
            values[(k * block + d + j) * n + col] =
                scale * (z * z - 1.0) / std::f64::consts::SQRT_2;
        }
    }
    EncodingMatrix::block_sparse(
        DenseMatrix::new(g * block, n, values)?,
        BlockStructure {
            block_size: block,
            column_blocks: assignments,
        },
    )
}

/// EMK random Fourier features, `√(2/D) cos(ωᵀx + b)`. Dense output.
pub fn encode_emk(x: &DescriptorSet, params: &EmkParams) -> Result<EncodingMatrix> {
    check_dim("emk descriptor dimension", params.input_dim(), x.dim())?;
    let (dim, n) = (params.output_dim(), x.len());
    let mut values = vec![0.0; dim * n];
    for (col, desc) in x.iter().enumerate() {
        for (j, v) in params.features(desc).into_iter().enumerate() {
            values[j * n + col] = v;
        }
    }
    Ok(EncodingMatrix::dense(DenseMatrix::new(dim, n, values)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;
    use proptest::prelude::*;
    use rand::Rng;

    fn cb3() -> Codebook {
        Codebook::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
    }

    #[test]
    fn bov_single_descriptor_on_centroid() {
        let x = DescriptorSet::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let e = encode_bov_hard(&x, &cb3()).unwrap();
        assert_eq!(e.column(0), vec![0.0, 1.0, 0.0]);
        assert_eq!(e.block_structure().unwrap().block_size, 1);
    }

    #[test]
    fn bov_row_sums_are_counts() {
        let x = DescriptorSet::from_rows(&[
            vec![0.1, 0.0],
            vec![-0.2, 0.1],
            vec![0.0, 0.05],
            vec![0.9, 0.1],
        ])
        .unwrap();
        let e = encode_bov_hard(&x, &cb3()).unwrap();
        let sums: Vec<f64> = (0..3).map(|r| e.phi().row(r).iter().sum()).collect();
        assert_eq!(sums, vec![3.0, 1.0, 0.0]);
        assert_eq!(histogram(&x, &cb3()).unwrap().counts, vec![3, 1, 0]);
    }

    #[test]
    fn nearest_tie_breaks_low() {
        let x = DescriptorSet::from_rows(&[vec![0.5, 0.0]]).unwrap();
        let e = encode_bov_hard(&x, &cb3()).unwrap();
        assert_eq!(e.column(0), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn histogram_all_in_first() {
        let x = DescriptorSet::from_rows(&[vec![0.0, 0.0], vec![0.1, 0.1]]).unwrap();
        assert_eq!(histogram(&x, &cb3()).unwrap().counts, vec![2, 0, 0]);
    }

    #[test]
    fn empty_codebook_rejected() {
        assert!(Codebook::new(DenseMatrix::zeros(0, 2)).is_err());
        assert!(Codebook::from_rows(&[vec![1.0], vec![1.0]]).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let x = DescriptorSet::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(
            encode_vlad(&x, &cb3()),
            Err(GmpError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn vlad_examples() {
        let x = DescriptorSet::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let e = encode_vlad(&x, &cb3()).unwrap();
        assert!(e.column(0).iter().all(|&v| v == 0.0));

        let cb = Codebook::from_rows(&[vec![0.0], vec![10.0]]).unwrap();
        let x = DescriptorSet::from_scalars(&[2.0]).unwrap();
        let e = encode_vlad(&x, &cb).unwrap();
        assert_eq!(e.column(0), vec![2.0, 0.0]);
    }

    #[test]
    fn vlad_sum_equals_per_cluster_residual_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let centroids: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let x = DescriptorSet::from_rows(&rows).unwrap();
        let cb = Codebook::from_rows(&centroids).unwrap();
        let e = encode_vlad(&x, &cb).unwrap();

        // Direct accumulation with an independent nearest-centroid search.
        let mut expected = [0.0; 12];
        for r in &rows {
            let k = (0..4)
                .min_by(|&a, &b| {
                    squared_distance(r, &centroids[a])
                        .partial_cmp(&squared_distance(r, &centroids[b]))
                        .unwrap()
                })
                .unwrap();
            for j in 0..3 {
                expected[k * 3 + j] += r[j] - centroids[k][j];
            }
        }
        for (row, want) in expected.iter().enumerate() {
            let got: f64 = e.phi().row(row).iter().sum();
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn fv_plug_in_values() {
        let gmm = GmmModel::new(
            DenseMatrix::new(1, 1, vec![0.0]).unwrap(),
            DenseMatrix::new(1, 1, vec![1.0]).unwrap(),
            vec![1.0],
        )
        .unwrap();
        let x = DescriptorSet::from_scalars(&[2.0]).unwrap();
        let e = encode_fv_hard(&x, &gmm).unwrap();
        let col = e.column(0);
        assert!((col[0] - 2.0).abs() < 1e-15);
        assert!((col[1] - 2.1213203435596424).abs() < 1e-14);
    }

    #[test]
    fn fv_at_mean_has_only_variance_term() {
        let gmm = GmmModel::new(
            DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![5.0, 5.0]]).unwrap(),
            DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.5, 1.5]]).unwrap(),
            vec![0.25, 0.75],
        )
        .unwrap();
        let x = DescriptorSet::from_rows(&[vec![5.0, 5.0]]).unwrap();
        let e = encode_fv_hard(&x, &gmm).unwrap();
        let col = e.column(0);
        let v = -1.0 / std::f64::consts::SQRT_2 / 0.75f64.sqrt();
        assert_eq!(&col[..4], &[0.0; 4]);
        assert_eq!(&col[4..6], &[0.0, 0.0]);
        assert!((col[6] - v).abs() < 1e-15 && (col[7] - v).abs() < 1e-15);
    }

    #[test]
    fn gmm_invariants() {
        let means = DenseMatrix::new(2, 1, vec![0.0, 1.0]).unwrap();
        let ok_var = DenseMatrix::new(2, 1, vec![1.0, 1.0]).unwrap();
        let zero_var = DenseMatrix::new(2, 1, vec![1.0, 0.0]).unwrap();
        assert!(GmmModel::new(means.clone(), zero_var, vec![0.5, 0.5]).is_err());
        assert!(GmmModel::new(means.clone(), ok_var.clone(), vec![0.5, 0.6]).is_err());
        assert!(GmmModel::new(means, ok_var, vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn gaussian_kernel_values() {
        assert_eq!(gaussian_kernel(&[1.5, -2.0], &[1.5, -2.0], 0.3), 1.0);
        assert!((gaussian_kernel(&[0.0], &[1.0], 1.0) - 0.6065306597126334).abs() < 1e-15);
        assert!((gaussian_kernel(&[-11.0], &[-10.0], 3.0) - 0.9459594689067654).abs() < 1e-15);
    }

    #[test]
    fn emk_is_deterministic() {
        let x = DescriptorSet::from_rows(&[vec![0.3, -0.2], vec![1.0, 0.5]]).unwrap();
        let a = encode_emk(&x, &EmkParams::new(2, 64, 0.7, 42).unwrap()).unwrap();
        let b = encode_emk(&x, &EmkParams::new(2, 64, 0.7, 42).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = encode_emk(&x, &EmkParams::new(2, 64, 0.7, 43).unwrap()).unwrap();
        assert_ne!(a, c);
        assert!(EmkParams::new(2, 63, 0.7, 1).is_err());
        assert!(EmkParams::new(2, 64, 0.0, 1).is_err());
    }

    #[test]
    fn emk_self_similarity_near_one() {
        let p = EmkParams::new(3, 4096, 1.3, 9).unwrap();
        for x in [[0.0, 0.0, 0.0], [1.0, -2.0, 0.5], [10.0, 3.0, -4.0]] {
            let f = p.features(&x);
            assert!((dot(&f, &f) - 1.0).abs() <= 0.05);
        }
    }

    #[test]
    fn emk_unbiased_over_seeds() {
        let (x, y, sigma) = ([0.2, -0.4], [0.9, 0.1], 1.0);
        let exact = gaussian_kernel(&x, &y, sigma);
        let seeds = 200;
        let mean: f64 = (0..seeds)
            .map(|s| {
                let p = EmkParams::new(2, 512, sigma, 1000 + s).unwrap();
                dot(&p.features(&x), &p.features(&y))
            })
            .sum::<f64>()
            / seeds as f64;
        assert!((mean - exact).abs() <= 0.01, "bias {}", mean - exact);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn block_encoders_respect_support(seed in 0u64..5000, n in 1usize..30, c in 1usize..6, d in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
            let cents: Vec<Vec<f64>> = (0..c).map(|k| (0..d).map(|j| k as f64 + 0.1 * j as f64 + rng.random_range(0.0..0.01)).collect()).collect();
            let x = DescriptorSet::from_rows(&rows).unwrap();
            let cb = Codebook::from_rows(&cents).unwrap();
            let vars = DenseMatrix::from_fn(c, d, |_, _| rng.random_range(0.5..2.0)).unwrap();
            let gmm = GmmModel::new(DenseMatrix::from_rows(&cents).unwrap(), vars, vec![1.0 / c as f64; c]).unwrap();
            // block_sparse() re-validates support; success is the property.
            let bov = encode_bov_hard(&x, &cb).unwrap();
            let vlad = encode_vlad(&x, &cb).unwrap();
            let fv = encode_fv_hard(&x, &gmm).unwrap();
            prop_assert_eq!(bov.dim(), c);
            prop_assert_eq!(vlad.dim(), c * d);
            prop_assert_eq!(fv.dim(), 2 * c * d);
            let h = histogram(&x, &cb).unwrap();
            prop_assert_eq!(h.total(), n);
            for (k, &count) in h.counts.iter().enumerate() {
                prop_assert_eq!(bov.phi().row(k).iter().sum::<f64>(), count as f64);
            }
        }
    }
}
