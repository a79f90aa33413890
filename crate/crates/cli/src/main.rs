//! `cbolab`: runs consensus-based optimization experiments from TOML configs.

mod config;
mod experiments;
mod plot;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "cbolab", version, about = "Consensus-based optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run(RunArgs),
    /// Write gnuplot data files and a script for a finished run directory.
    PlotData {
        /// Run directory containing the experiment CSVs.
        dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Config file (TOML).
    #[arg(value_name = "CONFIG", required_unless_present = "config", conflicts_with = "config")]
    path: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set cbo.sigma=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; replaces `output_dir` from the config.
    #[arg(long, value_name = "DIR")]
    output: Option<PathBuf>,
    /// Worker threads. Results do not depend on this value.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Exit with status 2 if any experiment check fails.
    #[arg(long)]
    check: bool,
}

fn run(args: RunArgs) -> Result<ExitCode, String> {
    let path = args.config.or(args.path).expect("clap requires a config path");
    let mut cfg = ExperimentConfig::load(&path, &args.overrides).map_err(|e| e.to_string())?;
    if let Some(out) = args.output {
        cfg.output_dir = out;
    }
    if let Some(n) = args.workers {
        if n == 0 {
            return Err("--workers must be at least 1".into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    }
    let report = experiments::run(&cfg).map_err(|e| format!("{} failed: {e}", cfg.experiment))?;
    report
        .write(&cfg, &cfg.output_dir)
        .map_err(|e| format!("cannot write outputs to {}: {e}", cfg.output_dir.display()))?;
    print!("{}", report.summary_text(&cfg));
    if args.check && !report.all_passed() {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::PlotData { dir } => plot::emit_plot_data(&dir).map(|files| {
            println!("wrote {} and {}", files.join(", "), plot::SCRIPT);
            ExitCode::SUCCESS
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
