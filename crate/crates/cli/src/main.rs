mod commands;
mod config;
mod error;
mod model;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sortnet::energy::{InferenceSpec, OutputAccounting};

use crate::commands::{write_or_print, EnergyArgs};
use crate::error::{CliError, CliResult};
use crate::report::Format;

/// Worker count override; takes precedence over `--threads`.
const THREADS_ENV: &str = "ARROWFLOW_THREADS";

#[derive(Debug, Parser)]
#[command(name = "sortnet", version, about = "Permutation-filter classifier: train, evaluate and check")]
struct Cli {
    /// Worker threads (ARROWFLOW_THREADS overrides this)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output format for reports
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train over repeated stratified splits and report test error
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where to save the model with the lowest train error
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a saved model on its test split, optionally perturbed
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// e.g. gaussian:0,0.1,0.5  mask:0.2  rank  monotone:log1p  per_gene_scale:0.3
        #[arg(long)]
        perturb: Vec<String>,
        /// Evaluate every row instead of the saved test split
        #[arg(long)]
        all: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate every combination of a JSON grid of config values
    Sweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// CSV results file; rows already present are skipped
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare the trained ensemble with kNN on the same permutations
    Knn {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Neighbour counts; defaults to the config's knn_k
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the theory oracle suite; exits 4 if any oracle fails
    Proptest {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Operation counts and energy of sort layers against dense layers
    Energy {
        /// Filters per layer in the per-layer comparison
        #[arg(long, default_value_t = 128)]
        filters: usize,
        /// Input vocabulary in the per-layer comparison
        #[arg(long, default_value_t = 64)]
        vocab: usize,
        #[arg(long)]
        int8: bool,
        #[arg(long, default_value_t = 7)]
        views: usize,
        #[arg(long, value_delimiter = ',', default_value = "256")]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 64)]
        input_vocab: usize,
        #[arg(long, value_delimiter = ',', default_value = "128")]
        mlp_hidden: Vec<usize>,
        /// Count all class filters in the output layer
        #[arg(long)]
        all_filters: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the permutations a config's encoders assign to each row
    Encode {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        view: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn thread_count(flag: Option<usize>) -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| CliError::Config(format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        Err(_) => Ok(flag),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = thread_count(cli.threads)? {
        sortnet::exec::init_threads(n);
    }
    let format = cli.format;
    match cli.command {
        Command::Train { data, config, out, seed } => {
            let cfg = commands::load_config(config.as_deref(), seed)?;
            print!("{}", commands::train(&data, &cfg, out.as_deref(), format)?);
        }
        Command::Eval { model, data, perturb, all, seed, out } => {
            let specs = commands::parse_perturbations(&perturb)?;
            write_or_print(&commands::eval(&model, &data, &specs, all, seed, format)?, out.as_ref())?;
        }
        Command::Sweep { data, grid, config, out, seed } => {
            let cfg = commands::load_config(config.as_deref(), seed)?;
            print!("{}", commands::sweep(&data, &cfg, &grid, out.as_deref(), format)?);
        }
        Command::Knn { data, config, k, seed, out } => {
            let cfg = commands::load_config(config.as_deref(), seed)?;
            let ks = if k.is_empty() { vec![cfg.knn_k] } else { k };
            if ks.contains(&0) {
                return Err(CliError::Config("k must be >= 1".into()));
            }
            write_or_print(&commands::knn(&data, &cfg, &ks, format)?, out.as_ref())?;
        }
        Command::Proptest { seed, out } => {
            let (table, failed) = commands::proptest(seed, format)?;
            write_or_print(&table, out.as_ref())?;
            if failed > 0 {
                return Err(CliError::SuiteFailed(failed));
            }
        }
        Command::Energy {
            filters,
            vocab,
            int8,
            views,
            hidden,
            classes,
            input_vocab,
            mlp_hidden,
            all_filters,
            out,
        } => {
            let args = EnergyArgs {
                filters,
                vocab,
                int8,
                spec: InferenceSpec {
                    input_vocab,
                    hidden,
                    classes,
                    views,
                    mlp_hidden,
                    accounting: if all_filters {
                        OutputAccounting::AllFilters
                    } else {
                        OutputAccounting::SingleFilter
                    },
                    ..InferenceSpec::default()
                },
            };
            write_or_print(&commands::energy(&args, format)?, out.as_ref())?;
        }
        Command::Encode { data, config, view, seed, out } => {
            let cfg = commands::load_config(config.as_deref(), seed)?;
            write_or_print(&commands::encode(&data, &cfg, view, format)?, out.as_ref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sortnet: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
