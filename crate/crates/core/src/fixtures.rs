//! Deterministic synthetic inputs for tests, benchmarks and the CLI
//! verification suite. Everything here is seeded; nothing reads global RNG
//! state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoders::{Codebook, DescriptorSet, GmmModel, PatchRect};
use crate::linalg::DenseMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform in `[-1, 1)`.
pub fn uniform_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0)).expect("finite")
}

pub fn uniform_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `MᵀM / n + shift·I` for a uniform random `M`.
pub fn random_spd(rng: &mut impl Rng, n: usize, shift: f64) -> DenseMatrix {
    let m = uniform_matrix(rng, n, n);
    let g = m.inner_gram();
    let mut a = DenseMatrix::from_fn(n, n, |i, j| g.get(i, j) / n as f64).expect("finite");
    a.add_diagonal(shift);
    a
}

/// `D × C` matrix with orthonormal columns (thin QR of a random matrix).
pub fn random_orthonormal(rng: &mut impl Rng, dim: usize, cols: usize) -> DenseMatrix {
    assert!(cols <= dim, "need cols <= dim for orthonormal columns");
    let m = uniform_matrix(rng, dim, cols);
    let q = m.to_faer().qr().compute_thin_Q();
    DenseMatrix::from_fn(dim, cols, |i, j| q[(i, j)]).expect("finite")
}

pub fn random_descriptors(rng: &mut impl Rng, n: usize, dim: usize, spread: f64) -> DescriptorSet {
    let m =
        DenseMatrix::from_fn(n, dim, |_, _| spread * rng.random_range(-1.0..1.0)).expect("finite");
    DescriptorSet::new(m).expect("non-empty")
}

/// Codebook with well-separated random centroids.
pub fn random_codebook(rng: &mut impl Rng, c: usize, dim: usize, spread: f64) -> Codebook {
    loop {
        let m = DenseMatrix::from_fn(c, dim, |_, _| spread * rng.random_range(-1.0..1.0))
            .expect("finite");
        if let Ok(cb) = Codebook::new(m) {
            return cb;
        }
    }
}

pub fn random_gmm(rng: &mut impl Rng, g: usize, dim: usize, spread: f64) -> GmmModel {
    let means =
        DenseMatrix::from_fn(g, dim, |_, _| spread * rng.random_range(-1.0..1.0)).expect("finite");
    let vars = DenseMatrix::from_fn(g, dim, |_, _| rng.random_range(0.3..1.5)).expect("finite");
    let raw: Vec<f64> = (0..g).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    // absorb rounding so the weights sum to 1 within the invariant
    let drift: f64 = 1.0 - weights.iter().sum::<f64>();
    weights[0] += drift;
    GmmModel::new(means, vars, weights).expect("valid gmm")
}

/// Random patch rectangles over an `height × width` image. Roughly a
/// quarter of them hang over a border so clipping gets exercised.
pub fn random_layout(rng: &mut impl Rng, n: usize, height: usize, width: usize) -> Vec<PatchRect> {
    let (h, w) = (height as i64, width as i64);
    (0..n)
        .map(|_| {
            let pw = rng.random_range(0..=w.max(1));
            let ph = rng.random_range(0..=h.max(1));
            let x = rng.random_range(-pw / 2 - 1..w + 2);
            let y = rng.random_range(-ph / 2 - 1..h + 2);
            PatchRect::new(x, y, pw, ph)
        })
        .collect()
}
