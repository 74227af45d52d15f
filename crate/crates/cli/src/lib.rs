//! File-based front end for generalized max pooling.
//!
//! Every command is also callable as a library function so the test suite
//! can drive it without spawning processes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod descriptors;
pub mod error;
pub mod kde_demo;
pub mod pipeline;
pub mod verify;

use std::io::Write;
use std::path::{Path, PathBuf};

pub use config::{PipelineConfig, SyntheticSpec};
pub use error::{CliError, Result};
pub use verify::{Fault, VerifyReport};

/// Writes to `path`, or to stdout when there is none.
pub fn write_output(path: Option<&Path>, body: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, body).map_err(|e| CliError::io(p, e)),
        None => std::io::stdout()
            .lock()
            .write_all(body.as_bytes())
            .map_err(|e| CliError::io("<stdout>", e)),
    }
}

#[derive(Clone, Debug, Default)]
pub struct PoolArgs {
    pub descriptors: PathBuf,
    pub config: PathBuf,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: usize,
    pub weight_maps: Option<PathBuf>,
}

pub fn cmd_pool(args: &PoolArgs) -> Result<()> {
    let mut cfg = config::read_pipeline(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let images = descriptors::read_descriptor_file(&args.descriptors)?;
    let rows = pipeline::pool_images(&images, &cfg, args.jobs, args.weight_maps.is_some())?;
    write_output(
        args.output.as_deref(),
        &pipeline::format_pooled(&rows, &cfg),
    )?;
    if let Some(dir) = &args.weight_maps {
        pipeline::write_weight_maps(&rows, dir)?;
    }
    Ok(())
}

pub fn cmd_kde_demo(output: Option<&Path>) -> Result<()> {
    write_output(output, &kde_demo::kde_demo()?.to_csv())
}

pub fn cmd_bench(
    spec_file: &Path,
    output: Option<&Path>,
    seed: Option<u64>,
    jobs: usize,
) -> Result<bench::BenchReport> {
    let mut spec = config::read_synthetic_spec(spec_file)?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let report = bench::run_bench(&spec, jobs)?;
    write_output(output, &report.to_csv())?;
    Ok(report)
}

/// Runs the suite and writes the JSON report; fails when any check fails.
pub fn cmd_verify(output: Option<&Path>, seed: u64, fault: Option<Fault>) -> Result<VerifyReport> {
    let report = verify::run_checks(seed, fault)?;
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    write_output(output, &json)?;
    if report.all_passed {
        Ok(report)
    } else {
        Err(CliError::VerifyFailed(report.failures()))
    }
}
