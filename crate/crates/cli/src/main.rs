use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gmp_cli::pipeline::resolve_jobs;
use gmp_cli::{cmd_bench, cmd_kde_demo, cmd_pool, cmd_verify, Fault, PoolArgs};

#[derive(Parser, Debug)]
#[command(
    name = "gmp-pool",
    version,
    about = "Generalized max pooling of local-descriptor encodings"
)]
struct Cli {
    /// Worker threads; 0 uses every core. GMP_POOL_JOBS takes precedence.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode and pool every image of a descriptor file.
    Pool {
        /// Descriptor CSV.
        descriptors: PathBuf,
        /// Pipeline JSON.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Write a PGM and CSV weight map per image into this directory
        /// (gmp pooling, descriptors with geometry).
        #[arg(long)]
        weight_maps: Option<PathBuf>,
    },
    /// Emit the KDE equalization curves as CSV.
    KdeDemo {
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the synthetic burstiness benchmark.
    Bench {
        /// Synthetic spec JSON.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the spec seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the oracle verification suite and write a JSON report.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, hide = true)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FaultArg {
    Lambda,
}

fn run(cli: Cli) -> gmp_cli::Result<()> {
    let jobs = resolve_jobs(cli.jobs)?;
    match cli.command {
        Command::Pool {
            descriptors,
            config,
            seed,
            output,
            weight_maps,
        } => cmd_pool(&PoolArgs {
            descriptors,
            config,
            output,
            seed,
            jobs,
            weight_maps,
        }),
        Command::KdeDemo { output } => cmd_kde_demo(output.as_deref()),
        Command::Bench {
            config,
            seed,
            output,
        } => cmd_bench(&config, output.as_deref(), seed, jobs).map(|_| ()),
        Command::Verify {
            seed,
            output,
            inject_fault,
        } => {
            let fault = inject_fault.map(|FaultArg::Lambda| Fault::Lambda);
            cmd_verify(output.as_deref(), seed, fault).map(|r| {
                eprintln!("verify: {}/{} checks passed", r.passed, r.total);
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gmp-pool: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
