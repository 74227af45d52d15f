//! The `pool` command: encode, pool and post-process every image of a
//! descriptor file.

use std::fmt::Write as _;
use std::path::Path;

use gmp_core::{
    encode_bov_hard, encode_emk, encode_fv_hard, encode_vlad, gmp_dual_weights, gmp_primal,
    l2_normalize, max_pool, min_norm_least_squares, power_normalize, render_weight_map, sum_pool,
    Codebook, EmkParams, EncodingMatrix, GmmModel, GmpConfig, GmpError, PatchRect, PatchWeights,
    PooledVector, WeightMap, WeightSource,
};
use rayon::prelude::*;

use crate::config::{self, EncoderConfig, PipelineConfig, PoolingConfig, PostStep};
use crate::descriptors::ImageDescriptors;
use crate::error::{CliError, Result};

#[derive(Clone, Debug)]
pub enum Encoder {
    Bov(Codebook),
    Vlad(Codebook),
    FvHard(GmmModel),
    Emk(EmkParams),
}

impl Encoder {
    /// Builds the encoder for `input_dim`-dimensional descriptors. EMK
    /// directions are drawn from `seed`.
    pub fn build(cfg: &EncoderConfig, input_dim: usize, seed: u64) -> Result<Self> {
        let enc = match cfg {
            EncoderConfig::Bov { centroids } => Encoder::Bov(config::codebook(centroids)?),
            EncoderConfig::Vlad { centroids } => Encoder::Vlad(config::codebook(centroids)?),
            EncoderConfig::FvHard {
                means,
                variances,
                weights,
            } => Encoder::FvHard(config::gmm(means, variances, weights)?),
            EncoderConfig::Emk { dim, sigma } => {
                Encoder::Emk(EmkParams::new(input_dim, *dim, *sigma, seed)?)
            }
        };
        Ok(enc)
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Encoder::Bov(cb) | Encoder::Vlad(cb) => cb.dim(),
            Encoder::FvHard(g) => g.dim(),
            Encoder::Emk(p) => p.input_dim(),
        }
    }

    pub fn encode(&self, x: &gmp_core::DescriptorSet) -> gmp_core::Result<EncodingMatrix> {
        match self {
            Encoder::Bov(cb) => encode_bov_hard(x, cb),
            Encoder::Vlad(cb) => encode_vlad(x, cb),
            Encoder::FvHard(g) => encode_fv_hard(x, g),
            Encoder::Emk(p) => encode_emk(x, p),
        }
    }
}

/// Result of pooling one image.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledImage {
    pub id: String,
    pub pooled: PooledVector,
    pub geometry: Option<Vec<PatchRect>>,
    pub weights: Option<PatchWeights>,
}

/// Per-patch weights `(K + λI)⁻¹ 1` with `K = ΦᵀΦ`; the minimum-norm
/// solution of `K α = 1` when λ = 0.
pub fn dual_weights(phi: &EncodingMatrix, lambda: f64) -> gmp_core::Result<PatchWeights> {
    let k = phi.phi().inner_gram();
    if lambda > 0.0 {
        return gmp_dual_weights(&k, lambda);
    }
    let ones = vec![1.0; k.rows()];
    let alpha = min_norm_least_squares(&k, &ones, gmp_core::linalg::DEFAULT_RANK_TOL)?;
    Ok(PatchWeights {
        alpha,
        lambda: 0.0,
        source: WeightSource::Dual,
    })
}

pub fn apply_post(mut v: PooledVector, post: &[PostStep]) -> gmp_core::Result<PooledVector> {
    for step in post {
        v = match *step {
            PostStep::Power(rho) => power_normalize(&v, rho)?,
            PostStep::L2 => l2_normalize(&v),
        };
    }
    Ok(v)
}

pub fn pool_one(
    img: &ImageDescriptors,
    encoder: &Encoder,
    cfg: &PipelineConfig,
    want_weights: bool,
) -> Result<PooledImage> {
    let dim = img.descriptors.dim();
    if dim != encoder.input_dim() {
        return Err(CliError::ImageDimension {
            image: img.id.clone(),
            expected: encoder.input_dim(),
            actual: dim,
        });
    }
    let in_image = |source: GmpError| CliError::Image {
        image: img.id.clone(),
        source,
    };
    let phi = encoder.encode(&img.descriptors).map_err(in_image)?;
    let (pooled, weights) = match &cfg.pooling {
        PoolingConfig::Sum {} => (sum_pool(&phi), None),
        PoolingConfig::Max {} => (max_pool(&phi), None),
        PoolingConfig::Gmp { lambda, solver } => {
            let gmp_cfg = GmpConfig::new(*lambda).with_solver((*solver).into());
            let pooled = gmp_primal(&phi, &gmp_cfg).map(|(v, _)| v);
            let weights = if want_weights {
                Some(dual_weights(&phi, *lambda).map_err(in_image)?)
            } else {
                None
            };
            (pooled, weights)
        }
    };
    let pooled = apply_post(pooled.map_err(in_image)?, &cfg.post).map_err(in_image)?;
    Ok(PooledImage {
        id: img.id.clone(),
        pooled,
        geometry: img.descriptors.geometry().map(<[PatchRect]>::to_vec),
        weights,
    })
}

/// Resolves the worker count: `GMP_POOL_JOBS` wins over the flag, and
/// zero or absence means one worker per available core.
pub fn resolve_jobs(flag: Option<usize>) -> Result<usize> {
    let env =
        match std::env::var("GMP_POOL_JOBS") {
            Ok(s) if !s.trim().is_empty() => Some(s.trim().parse::<usize>().map_err(|_| {
                CliError::invalid("GMP_POOL_JOBS", format!("'{s}' is not a count"))
            })?),
            _ => None,
        };
    let jobs = env.or(flag).unwrap_or(0);
    Ok(if jobs == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        jobs
    })
}

/// Runs `f` inside a rayon pool with `jobs` workers.
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::invalid("thread pool", e.to_string()))?;
    Ok(pool.install(f))
}

/// Pools every image, preserving input order.
pub fn pool_images(
    images: &[ImageDescriptors],
    cfg: &PipelineConfig,
    jobs: usize,
    want_weights: bool,
) -> Result<Vec<PooledImage>> {
    cfg.validate()?;
    let first = images
        .first()
        .ok_or_else(|| CliError::invalid("descriptors", "no images"))?;
    let encoder = Encoder::build(&cfg.encoder, first.descriptors.dim(), cfg.seed)?;
    if want_weights && !matches!(cfg.pooling, PoolingConfig::Gmp { .. }) {
        return Err(CliError::invalid(
            "pooling",
            "weight maps require gmp pooling",
        ));
    }
    with_jobs(jobs, || {
        images
            .par_iter()
            .map(|img| pool_one(img, &encoder, cfg, want_weights))
            .collect::<Result<Vec<_>>>()
    })?
}

pub fn format_pooled(rows: &[PooledImage], cfg: &PipelineConfig) -> String {
    let dim = rows.first().map_or(0, |r| r.pooled.dim());
    let mut out = format!("# pipeline: {}\n", cfg.describe());
    out.push_str("image_id,provenance,normalization,degenerate");
    for k in 0..dim {
        let _ = write!(out, ",v{k}");
    }
    out.push('\n');
    for r in rows {
        let p = &r.pooled;
        let _ = write!(
            out,
            "{},{},{},{}",
            r.id, p.provenance, p.normalization, p.degenerate
        );
        for v in &p.values {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Smallest image that contains every patch, at least 1×1.
pub fn image_extent(geometry: &[PatchRect]) -> (usize, usize) {
    let h = geometry
        .iter()
        .map(|r| r.y + r.height)
        .max()
        .unwrap_or(1)
        .max(1);
    let w = geometry
        .iter()
        .map(|r| r.x + r.width)
        .max()
        .unwrap_or(1)
        .max(1);
    (h as usize, w as usize)
}

pub fn weight_map_for(row: &PooledImage) -> Result<Option<WeightMap>> {
    let (Some(geo), Some(w)) = (&row.geometry, &row.weights) else {
        return Ok(None);
    };
    let (h, wd) = image_extent(geo);
    let map = render_weight_map(geo, w, h, wd).map_err(|source| CliError::Image {
        image: row.id.clone(),
        source,
    })?;
    Ok(Some(map))
}

/// Writes `<id>.pgm` and `<id>.csv` for every image with geometry.
pub fn write_weight_maps(rows: &[PooledImage], dir: &Path) -> Result<usize> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = 0;
    for row in rows {
        if row.geometry.is_none() {
            return Err(CliError::invalid(
                "descriptors",
                format!(
                    "image '{}' has no geometry columns; weight maps need x,y,w,h",
                    row.id
                ),
            ));
        }
        if let Some(map) = weight_map_for(row)? {
            for (ext, body) in [("pgm", map.to_pgm()), ("csv", map.to_csv())] {
                let path = dir.join(format!("{}.{ext}", row.id));
                std::fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
            }
            written += 1;
        }
    }
    Ok(written)
}
