use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mvpois::cli::{self, Overrides};
use mvpois::copula::DEFAULT_GRID_SIZE;
use mvpois::randsrc::NormalSampler;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SamplerArg {
    Exact,
    Clt,
}

impl From<SamplerArg> for NormalSampler {
    fn from(s: SamplerArg) -> NormalSampler {
        match s {
            SamplerArg::Exact => NormalSampler::Exact,
            SamplerArg::Clt => NormalSampler::Clt,
        }
    }
}

/// Generate multivariate Poisson samples with a target correlation matrix.
#[derive(Parser)]
#[command(name = "mvpois", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate samples to CSV per a config file.
    Generate {
        /// Run-config file path.
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of draws.
        #[arg(long)]
        n: Option<usize>,
        /// Override the output CSV path.
        #[arg(long)]
        out: Option<String>,
        /// Disable the low-rate correlation correction.
        #[arg(long)]
        no_correction: bool,
        /// Standard-normal sampler.
        #[arg(long, value_enum)]
        sampler: Option<SamplerArg>,
    },
    /// Print feasible correlation bounds and the fitted correction.
    Bounds {
        lambda1: f64,
        lambda2: f64,
        /// Midpoint-grid size for bound evaluation.
        #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
        grid_size: usize,
    },
    /// Map a target Poisson correlation to its Normal-side value.
    #[command(allow_negative_numbers = true)]
    Correct {
        lambda1: f64,
        lambda2: f64,
        r: f64,
        #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
        grid_size: usize,
    },
    /// Validate a CSV of counts against the config that produced it.
    Validate {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a built-in experiment and print target-vs-achieved tables.
    Demo {
        /// const-rate, mixed-rate, or low-rate-correction.
        experiment: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate {
            config,
            seed,
            n,
            out,
            no_correction,
            sampler,
        } => cli::cmd_generate(
            &config,
            &Overrides {
                seed,
                n,
                out,
                no_correction,
                sampler: sampler.map(Into::into),
            },
        ),
        Command::Bounds {
            lambda1,
            lambda2,
            grid_size,
        } => cli::cmd_bounds(lambda1, lambda2, grid_size),
        Command::Correct {
            lambda1,
            lambda2,
            r,
            grid_size,
        } => cli::cmd_correct(lambda1, lambda2, r, grid_size),
        Command::Validate { csv, config } => cli::cmd_validate(&csv, &config),
        Command::Demo { experiment } => cli::cmd_demo(&experiment),
    };
    match result {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
