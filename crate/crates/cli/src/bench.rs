//! Synthetic burstiness benchmark.
//!
//! Every image mixes descriptors from a few background modes shared by all
//! classes, in random per-image proportions, with a small number of
//! descriptors from a mode specific to its class. Pooled vectors are
//! ℓ2-normalized and classified by the nearest class mean. λ and the power
//! exponent are selected on a validation split; the reported accuracy is on
//! a held-out test split with class means re-estimated on train +
//! validation.

use std::fmt::Write as _;

use gmp_core::{
    encode_bov_hard, encode_emk, fixtures, gmp_dual_weights, l2_normalize, power_normalize,
    sum_pool, weighted_pool, Codebook, DenseMatrix, DescriptorSet, EmkParams, EncodingMatrix,
    PooledVector, LAMBDA_GRID, POWER_GRID,
};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::config::{BenchEncoder, SyntheticSpec};
use crate::error::Result;
use crate::pipeline::with_jobs;

/// Background modes shared by all classes.
pub const BACKGROUND_MODES: usize = 3;

const EMK_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticImage {
    pub class: usize,
    pub descriptors: DescriptorSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub background_centers: Vec<Vec<f64>>,
    pub class_centers: Vec<Vec<f64>>,
    pub images: Vec<SyntheticImage>,
}

/// Number of class-specific descriptors per image (at least one).
pub fn foreground_count(spec: &SyntheticSpec) -> usize {
    let n = spec.descriptors_per_image;
    let bg = (spec.background_fraction * n as f64).round() as usize;
    n.saturating_sub(bg).max(1).min(n)
}

fn center(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = fixtures::rng(spec.seed);
    let d = spec.descriptor_dim;
    let background_centers: Vec<Vec<f64>> =
        (0..BACKGROUND_MODES).map(|_| center(&mut rng, d)).collect();
    let class_centers: Vec<Vec<f64>> = (0..spec.classes).map(|_| center(&mut rng, d)).collect();

    let n = spec.descriptors_per_image;
    let n_fg = foreground_count(spec);
    let mut images = Vec::with_capacity(spec.classes * spec.images_per_class);
    for (class, class_center) in class_centers.iter().enumerate() {
        for _ in 0..spec.images_per_class {
            let raw: Vec<f64> = (0..BACKGROUND_MODES)
                .map(|_| rng.random_range(0.0..1.0))
                .collect();
            let total: f64 = raw.iter().sum();
            let mut rows = Vec::with_capacity(n * d);
            for i in 0..n {
                let c = if i < n - n_fg {
                    let u = rng.random_range(0.0..total);
                    let mut acc = 0.0;
                    let mut mode = BACKGROUND_MODES - 1;
                    for (b, p) in raw.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            mode = b;
                            break;
                        }
                    }
                    &background_centers[mode]
                } else {
                    class_center
                };
                for &ci in c {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    rows.push(ci + spec.noise_scale * z);
                }
            }
            images.push(SyntheticImage {
                class,
                descriptors: DescriptorSet::new(DenseMatrix::new(n, d, rows)?)?,
            });
        }
    }
    Ok(SyntheticData {
        background_centers,
        class_centers,
        images,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Per class: first half train, next quarter validation, rest test.
pub fn split_of(index_in_class: usize, images_per_class: usize) -> Split {
    let n_train = images_per_class / 2;
    let n_val = images_per_class / 4;
    if index_in_class < n_train {
        Split::Train
    } else if index_in_class < n_train + n_val {
        Split::Validation
    } else {
        Split::Test
    }
}

/// Nearest-class-mean classifier over ℓ2-normalized vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct NearestClassMean {
    means: Vec<Vec<f64>>,
}

impl NearestClassMean {
    pub fn fit(vectors: &[&[f64]], labels: &[usize], classes: usize) -> Self {
        let dim = vectors.first().map_or(0, |v| v.len());
        let mut means = vec![vec![0.0; dim]; classes];
        let mut counts = vec![0usize; classes];
        for (v, &c) in vectors.iter().zip(labels) {
            for (m, x) in means[c].iter_mut().zip(v.iter()) {
                *m += x;
            }
            counts[c] += 1;
        }
        for (m, &n) in means.iter_mut().zip(&counts) {
            if n > 0 {
                m.iter_mut().for_each(|x| *x /= n as f64);
            }
        }
        Self { means }
    }

    /// Closest mean; ties go to the lower class index.
    pub fn predict(&self, v: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (c, m) in self.means.iter().enumerate() {
            let d: f64 = m.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (c, d);
            }
        }
        best.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodResult {
    pub method: &'static str,
    pub test_accuracy: f64,
    pub validation_accuracy: f64,
    pub lambda: Option<f64>,
    pub rho: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub spec: SyntheticSpec,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub results: Vec<MethodResult>,
}

impl BenchReport {
    pub fn accuracy(&self, method: &str) -> Option<f64> {
        self.results
            .iter()
            .find(|r| r.method == method)
            .map(|r| r.test_accuracy)
    }

    pub fn to_csv(&self) -> String {
        let s = &self.spec;
        let enc = match s.encoder {
            BenchEncoder::Emk { dim, sigma } => format!("emk(dim={dim},sigma={sigma})"),
            BenchEncoder::Bov {} => "bov".to_string(),
        };
        let mut out = format!(
            "# synthetic benchmark: classes={} images_per_class={} descriptors_per_image={} \
             background_fraction={} descriptor_dim={} noise_scale={} seed={} encoder={} \
             split={}/{}/{}\n",
            s.classes,
            s.images_per_class,
            s.descriptors_per_image,
            s.background_fraction,
            s.descriptor_dim,
            s.noise_scale,
            s.seed,
            enc,
            self.train,
            self.validation,
            self.test
        );
        out.push_str("method,test_accuracy,validation_accuracy,lambda,rho\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.results {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.method,
                r.test_accuracy,
                r.validation_accuracy,
                opt(r.lambda),
                opt(r.rho)
            );
        }
        out
    }
}

/// Raw pooled vectors of one image: sum pooling and GMP for each λ of the
/// grid.
struct Pooled {
    sum: PooledVector,
    gmp: Vec<PooledVector>,
}

fn pool_image(phi: &EncodingMatrix) -> gmp_core::Result<Pooled> {
    let k = phi.phi().inner_gram();
    let gmp = LAMBDA_GRID
        .iter()
        .map(|&lambda| weighted_pool(phi, &gmp_dual_weights(&k, lambda)?))
        .collect::<gmp_core::Result<Vec<_>>>()?;
    Ok(Pooled {
        sum: sum_pool(phi)?,
        gmp,
    })
}

fn represent(v: &PooledVector, rho: f64) -> gmp_core::Result<Vec<f64>> {
    let p = if rho == 1.0 {
        v.clone()
    } else {
        power_normalize(v, rho)?
    };
    Ok(l2_normalize(&p).values)
}

struct Evaluation<'a> {
    labels: &'a [usize],
    splits: &'a [Split],
    classes: usize,
}

impl Evaluation<'_> {
    fn accuracy(&self, vectors: &[Vec<f64>], fit_on: &[Split], eval_on: Split) -> f64 {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for ((v, &y), s) in vectors.iter().zip(self.labels).zip(self.splits) {
            if fit_on.contains(s) {
                xs.push(v.as_slice());
                ys.push(y);
            }
        }
        let ncm = NearestClassMean::fit(&xs, &ys, self.classes);
        let (mut hit, mut total) = (0usize, 0usize);
        for ((v, &y), &s) in vectors.iter().zip(self.labels).zip(self.splits) {
            if s == eval_on {
                total += 1;
                hit += usize::from(ncm.predict(v) == y);
            }
        }
        hit as f64 / total as f64
    }

    /// Picks the candidate with the best validation accuracy (first on
    /// ties) and scores it on the test split.
    fn select<T: Copy>(&self, candidates: &[(T, Vec<Vec<f64>>)]) -> (T, f64, f64) {
        let mut best: Option<(usize, f64)> = None;
        for (i, (_, vecs)) in candidates.iter().enumerate() {
            let acc = self.accuracy(vecs, &[Split::Train], Split::Validation);
            if best.is_none_or(|(_, b)| acc > b) {
                best = Some((i, acc));
            }
        }
        let (i, val) = best.expect("at least one candidate");
        let test = self.accuracy(
            &candidates[i].1,
            &[Split::Train, Split::Validation],
            Split::Test,
        );
        (candidates[i].0, val, test)
    }
}

pub fn run_bench(spec: &SyntheticSpec, jobs: usize) -> Result<BenchReport> {
    let data = generate(spec)?;
    let encoder = match spec.encoder {
        BenchEncoder::Emk { dim, sigma } => BenchEncoderImpl::Emk(EmkParams::new(
            spec.descriptor_dim,
            dim,
            sigma,
            spec.seed ^ EMK_SEED_SALT,
        )?),
        BenchEncoder::Bov {} => {
            let rows: Vec<Vec<f64>> = data
                .background_centers
                .iter()
                .chain(&data.class_centers)
                .cloned()
                .collect();
            BenchEncoderImpl::Bov(Codebook::from_rows(&rows)?)
        }
    };
    let pooled = with_jobs(jobs, || {
        data.images
            .par_iter()
            .map(|img| pool_image(&encoder.encode(&img.descriptors)?))
            .collect::<gmp_core::Result<Vec<_>>>()
    })??;

    let labels: Vec<usize> = data.images.iter().map(|i| i.class).collect();
    let splits: Vec<Split> = (0..data.images.len())
        .map(|i| split_of(i % spec.images_per_class, spec.images_per_class))
        .collect();
    let count = |s: Split| splits.iter().filter(|&&x| x == s).count();
    let eval = Evaluation {
        labels: &labels,
        splits: &splits,
        classes: spec.classes,
    };

    let reps =
        |f: &dyn Fn(&Pooled) -> &PooledVector, rho: f64| -> gmp_core::Result<Vec<Vec<f64>>> {
            pooled.iter().map(|p| represent(f(p), rho)).collect()
        };

    let mut results = Vec::with_capacity(4);

    let sum = reps(&|p| &p.sum, 1.0)?;
    let ((), val, test) = eval.select(&[((), sum)]);
    results.push(MethodResult {
        method: "sum",
        test_accuracy: test,
        validation_accuracy: val,
        lambda: None,
        rho: None,
    });

    let cands = POWER_GRID
        .iter()
        .map(|&rho| Ok((rho, reps(&|p| &p.sum, rho)?)))
        .collect::<gmp_core::Result<Vec<_>>>()?;
    let (rho, val, test) = eval.select(&cands);
    results.push(MethodResult {
        method: "sum+power",
        test_accuracy: test,
        validation_accuracy: val,
        lambda: None,
        rho: Some(rho),
    });

    let cands = (0..LAMBDA_GRID.len())
        .map(|l| Ok((LAMBDA_GRID[l], reps(&|p| &p.gmp[l], 1.0)?)))
        .collect::<gmp_core::Result<Vec<_>>>()?;
    let (lambda, val, test) = eval.select(&cands);
    results.push(MethodResult {
        method: "gmp",
        test_accuracy: test,
        validation_accuracy: val,
        lambda: Some(lambda),
        rho: None,
    });

    let mut cands = Vec::with_capacity(LAMBDA_GRID.len() * POWER_GRID.len());
    for (l, &lambda) in LAMBDA_GRID.iter().enumerate() {
        for &rho in &POWER_GRID {
            cands.push(((lambda, rho), reps(&|p| &p.gmp[l], rho)?));
        }
    }
    let ((lambda, rho), val, test) = eval.select(&cands);
    results.push(MethodResult {
        method: "gmp+power",
        test_accuracy: test,
        validation_accuracy: val,
        lambda: Some(lambda),
        rho: Some(rho),
    });

    Ok(BenchReport {
        spec: spec.clone(),
        train: count(Split::Train),
        validation: count(Split::Validation),
        test: count(Split::Test),
        results,
    })
}

enum BenchEncoderImpl {
    Emk(EmkParams),
    Bov(Codebook),
}

impl BenchEncoderImpl {
    fn encode(&self, x: &DescriptorSet) -> gmp_core::Result<EncodingMatrix> {
        match self {
            BenchEncoderImpl::Emk(p) => encode_emk(x, p),
            BenchEncoderImpl::Bov(cb) => encode_bov_hard(x, cb),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(bg: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            classes: 3,
            images_per_class: 8,
            descriptors_per_image: 20,
            background_fraction: bg,
            descriptor_dim: 4,
            noise_scale: 0.05,
            seed,
            encoder: BenchEncoder::Emk {
                dim: 64,
                sigma: 0.5,
            },
        }
    }

    #[test]
    fn data_shape() {
        let spec = small(0.9, 1);
        let data = generate(&spec).unwrap();
        assert_eq!(data.images.len(), 24);
        assert_eq!(foreground_count(&spec), 2);
        assert!(data
            .images
            .iter()
            .all(|i| i.descriptors.len() == 20 && i.descriptors.dim() == 4));
        assert_eq!(data.images[8].class, 1);
        assert_eq!(foreground_count(&small(0.999, 1)), 1);
        assert_eq!(foreground_count(&small(0.01, 1)), 20);
    }

    #[test]
    fn splits() {
        let s: Vec<Split> = (0..8).map(|i| split_of(i, 8)).collect();
        assert_eq!(s.iter().filter(|&&x| x == Split::Train).count(), 4);
        assert_eq!(s.iter().filter(|&&x| x == Split::Validation).count(), 2);
        assert_eq!(s[7], Split::Test);
    }

    #[test]
    fn ncm_ties_go_low() {
        let a = [1.0, 0.0];
        let b = [0.0, 1.0];
        let ncm = NearestClassMean::fit(&[&a, &b], &[0, 1], 2);
        assert_eq!(ncm.predict(&[0.5, 0.5]), 0);
        assert_eq!(ncm.predict(&[0.1, 0.9]), 1);
    }

    #[test]
    fn report_is_deterministic() {
        let spec = small(0.9, 5);
        let a = run_bench(&spec, 1).unwrap().to_csv();
        let b = run_bench(&spec, 3).unwrap().to_csv();
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 6);
    }

    #[test]
    fn bov_encoder_runs() {
        let mut spec = small(0.8, 2);
        spec.encoder = BenchEncoder::Bov {};
        let r = run_bench(&spec, 1).unwrap();
        assert_eq!(r.results.len(), 4);
    }
}
