use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use clib_bench::config::ExperimentConfig;
use clib_bench::{cmd_compare, cmd_curve, cmd_run, cmd_split, CliError};

#[derive(Parser)]
#[command(
    name = "clib-bench",
    version,
    about = "Online continual-learning workbench: i-Blurry splits, importance-memory training, any-time metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the i-Blurry split for a config and write split.json.
    Split {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one run per replicate seed and write results.json + curve CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated replicate seeds overriding the config's list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Worker threads for replicate runs (capped by CLIB_BENCH_THREADS).
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Tabulate aggregate metrics from one or more results files.
    Compare {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Emit accuracy-curve CSV and SVG from results files.
    Curve {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Split { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            let path = cmd_split(&cfg, &out)?;
            println!("wrote {}", path.display());
        }
        Command::Run {
            config,
            out,
            seeds,
            parallel,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            let path = cmd_run(&cfg, &out, seeds.as_deref(), parallel)?;
            println!("wrote {}", path.display());
        }
        Command::Compare { files, out } => {
            let table = cmd_compare(&files, &out)?;
            print!("{table}");
            println!("wrote {}", out.join("compare.csv").display());
        }
        Command::Curve { files, out } => {
            let (csv, svg) = cmd_curve(&files, &out)?;
            println!("wrote {}", csv.display());
            println!("wrote {}", svg.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            // Usage problems are validation errors under the exit contract.
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
