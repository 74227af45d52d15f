//! JSON configuration files. Unknown keys are rejected.

use std::fmt;
use std::path::Path;

use gmp_core::{Codebook, DenseMatrix, GmmModel, SolverChoice};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EncoderConfig {
    Bov {
        centroids: Vec<Vec<f64>>,
    },
    Vlad {
        centroids: Vec<Vec<f64>>,
    },
    FvHard {
        means: Vec<Vec<f64>>,
        variances: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    Emk {
        dim: usize,
        sigma: f64,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverName {
    #[default]
    Auto,
    Dense,
    Block,
    Cg,
}

impl fmt::Display for SolverName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverName::Auto => "auto",
            SolverName::Dense => "dense",
            SolverName::Block => "block",
            SolverName::Cg => "cg",
        })
    }
}

impl From<SolverName> for SolverChoice {
    fn from(s: SolverName) -> Self {
        match s {
            SolverName::Auto => SolverChoice::Auto,
            SolverName::Dense => SolverChoice::DenseDirect,
            SolverName::Block => SolverChoice::Block,
            SolverName::Cg => SolverChoice::Cg,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PoolingConfig {
    Sum {},
    Max {},
    Gmp {
        lambda: f64,
        #[serde(default)]
        solver: SolverName,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PostStep {
    Power(f64),
    L2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub encoder: EncoderConfig,
    pub pooling: PoolingConfig,
    #[serde(default)]
    pub post: Vec<PostStep>,
    #[serde(default)]
    pub seed: u64,
}

impl fmt::Display for EncoderConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncoderConfig::Bov { centroids } => write!(f, "bov(C={})", centroids.len()),
            EncoderConfig::Vlad { centroids } => write!(f, "vlad(C={})", centroids.len()),
            EncoderConfig::FvHard { weights, .. } => write!(f, "fv_hard(G={})", weights.len()),
            EncoderConfig::Emk { dim, sigma } => write!(f, "emk(dim={dim},sigma={sigma})"),
        }
    }
}

impl fmt::Display for PoolingConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PoolingConfig::Sum {} => f.write_str("sum"),
            PoolingConfig::Max {} => f.write_str("max"),
            PoolingConfig::Gmp { lambda, solver } => {
                write!(f, "gmp(lambda={lambda},solver={solver})")
            }
        }
    }
}

impl fmt::Display for PostStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PostStep::Power(rho) => write!(f, "power({rho})"),
            PostStep::L2 => f.write_str("l2"),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        match &self.encoder {
            EncoderConfig::Bov { centroids } | EncoderConfig::Vlad { centroids } => {
                codebook(centroids)?;
            }
            EncoderConfig::FvHard {
                means,
                variances,
                weights,
            } => {
                gmm(means, variances, weights)?;
            }
            EncoderConfig::Emk { dim, sigma } => {
                if *dim == 0 || dim % 2 != 0 {
                    return Err(CliError::invalid(
                        "encoder",
                        format!("emk dim {dim} must be positive and even"),
                    ));
                }
                if !(*sigma > 0.0) || !sigma.is_finite() {
                    return Err(CliError::invalid(
                        "encoder",
                        format!("emk sigma {sigma} must be positive"),
                    ));
                }
            }
        }
        if let PoolingConfig::Gmp { lambda, .. } = self.pooling {
            if !(lambda >= 0.0) || !lambda.is_finite() {
                return Err(CliError::invalid(
                    "pooling",
                    format!("lambda {lambda} must be finite and >= 0"),
                ));
            }
        }
        for step in &self.post {
            if let PostStep::Power(rho) = *step {
                if !(0.0..=1.0).contains(&rho) {
                    return Err(CliError::invalid(
                        "post",
                        format!("power exponent {rho} must lie in [0, 1]"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// One-line description of the pipeline, stages in execution order.
    pub fn describe(&self) -> String {
        let post: Vec<String> = self.post.iter().map(ToString::to_string).collect();
        format!(
            "encoder={} pooling={} post=[{}] seed={}",
            self.encoder,
            self.pooling,
            post.join(","),
            self.seed
        )
    }
}

pub(crate) fn codebook(rows: &[Vec<f64>]) -> Result<Codebook> {
    Codebook::from_rows(rows).map_err(|e| CliError::invalid("encoder", format!("codebook: {e}")))
}

pub(crate) fn gmm(means: &[Vec<f64>], variances: &[Vec<f64>], weights: &[f64]) -> Result<GmmModel> {
    let wrap = |e: gmp_core::GmpError| CliError::invalid("encoder", format!("gmm: {e}"));
    GmmModel::new(
        DenseMatrix::from_rows(means).map_err(wrap)?,
        DenseMatrix::from_rows(variances).map_err(wrap)?,
        weights.to_vec(),
    )
    .map_err(wrap)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BenchEncoder {
    Emk {
        dim: usize,
        sigma: f64,
    },
    /// Hard assignment to the generating mode centres.
    Bov {},
}

impl Default for BenchEncoder {
    fn default() -> Self {
        BenchEncoder::Emk {
            dim: 256,
            sigma: 0.5,
        }
    }
}

/// Parameters of the synthetic burstiness benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub images_per_class: usize,
    pub descriptors_per_image: usize,
    pub background_fraction: f64,
    pub descriptor_dim: usize,
    pub noise_scale: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub encoder: BenchEncoder,
}

impl SyntheticSpec {
    /// The configuration used by the test suite and the README example.
    pub fn standard(background_fraction: f64, seed: u64) -> Self {
        Self {
            classes: 4,
            images_per_class: 40,
            descriptors_per_image: 100,
            background_fraction,
            descriptor_dim: 8,
            noise_scale: 0.05,
            seed,
            encoder: BenchEncoder::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("classes", self.classes),
            ("images_per_class", self.images_per_class),
            ("descriptors_per_image", self.descriptors_per_image),
            ("descriptor_dim", self.descriptor_dim),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(CliError::invalid(
                    "synthetic spec",
                    format!("{name} must be at least 1"),
                ));
            }
        }
        if self.classes < 2 {
            return Err(CliError::invalid(
                "synthetic spec",
                "need at least 2 classes",
            ));
        }
        if self.images_per_class < 4 {
            return Err(CliError::invalid(
                "synthetic spec",
                "images_per_class must be at least 4 (train, validation and test splits)",
            ));
        }
        let bf = self.background_fraction;
        if !(bf > 0.0 && bf < 1.0) {
            return Err(CliError::invalid(
                "synthetic spec",
                format!("background_fraction {bf} must lie in (0, 1)"),
            ));
        }
        if !(self.noise_scale > 0.0) || !self.noise_scale.is_finite() {
            return Err(CliError::invalid(
                "synthetic spec",
                "noise_scale must be positive",
            ));
        }
        if let BenchEncoder::Emk { dim, sigma } = self.encoder {
            if dim == 0 || dim % 2 != 0 {
                return Err(CliError::invalid(
                    "synthetic spec",
                    format!("emk dim {dim} must be positive and even"),
                ));
            }
            if !(sigma > 0.0) || !sigma.is_finite() {
                return Err(CliError::invalid(
                    "synthetic spec",
                    "emk sigma must be positive",
                ));
            }
        }
        Ok(())
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| CliError::Config {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_pipeline(path: &Path) -> Result<PipelineConfig> {
    let cfg: PipelineConfig = read_json(path)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_synthetic_spec(path: &Path) -> Result<SyntheticSpec> {
    let spec: SyntheticSpec = read_json(path)?;
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> std::result::Result<PipelineConfig, serde_json::Error> {
        serde_json::from_str(s)
    }

    #[test]
    fn full_pipeline_parses() {
        let cfg = parse(
            r#"{"encoder": {"type": "emk", "dim": 64, "sigma": 1.5},
                "pooling": {"type": "gmp", "lambda": 100, "solver": "cg"},
                "post": [{"power": 0.5}, "l2"], "seed": 7}"#,
        )
        .unwrap();
        assert_eq!(cfg.post, vec![PostStep::Power(0.5), PostStep::L2]);
        assert_eq!(
            cfg.pooling,
            PoolingConfig::Gmp {
                lambda: 100.0,
                solver: SolverName::Cg
            }
        );
        cfg.validate().unwrap();
        assert_eq!(
            cfg.describe(),
            "encoder=emk(dim=64,sigma=1.5) pooling=gmp(lambda=100,solver=cg) post=[power(0.5),l2] seed=7"
        );
    }

    #[test]
    fn unknown_keys_rejected() {
        let base = r#""encoder": {"type": "bov", "centroids": [[0, 0]]}"#;
        assert!(parse(&format!(
            r#"{{{base}, "pooling": {{"type": "gmp", "lamda": 1}}}}"#
        ))
        .is_err());
        assert!(parse(&format!(
            r#"{{{base}, "pooling": {{"type": "sum"}}, "extra": 1}}"#
        ))
        .is_err());
        assert!(parse(&format!(
            r#"{{{base}, "pooling": {{"type": "sum", "lambda": 1}}}}"#
        ))
        .is_err());
        assert!(parse(r#"{"encoder": {"type": "bov", "centroids": [[0]], "k": 2}, "pooling": {"type": "sum"}}"#).is_err());
        assert!(parse(&format!(
            r#"{{{base}, "pooling": {{"type": "sum"}}, "post": ["l1"]}}"#
        ))
        .is_err());
        assert!(parse(&format!(r#"{{{base}, "pooling": {{"type": "sum"}}}}"#)).is_ok());
    }

    #[test]
    fn validation() {
        let mut cfg = parse(r#"{"encoder": {"type": "bov", "centroids": [[0, 0], [1, 1]]}, "pooling": {"type": "gmp", "lambda": -1}}"#).unwrap();
        assert!(cfg.validate().is_err());
        cfg.pooling = PoolingConfig::Max {};
        cfg.post = vec![PostStep::Power(1.5)];
        assert!(cfg.validate().is_err());
        cfg.post = vec![PostStep::Power(0.0), PostStep::L2];
        cfg.validate().unwrap();
        cfg.encoder = EncoderConfig::Bov {
            centroids: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn synthetic_spec_validation() {
        SyntheticSpec::standard(0.95, 1).validate().unwrap();
        let mut s = SyntheticSpec::standard(1.0, 1);
        assert!(s.validate().is_err());
        s.background_fraction = 0.5;
        s.classes = 0;
        assert!(s.validate().is_err());
        let parsed: std::result::Result<SyntheticSpec, _> = serde_json::from_str(
            r#"{"classes": 2, "images_per_class": 8, "descriptors_per_image": 10,
                "background_fraction": 0.5, "descriptor_dim": 2, "noise_scale": 0.1, "sed": 1}"#,
        );
        assert!(parsed.is_err());
    }
}
