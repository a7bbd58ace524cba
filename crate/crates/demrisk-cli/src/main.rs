//! `demrisk`: value non-participating life portfolios, project and decompose
//! technical profit, and estimate the demographic-risk capital requirement —
//! all driven by a single JSON configuration.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use demrisk::commands::{self, Overrides};
use demrisk::config::{OutputFormat, RunConfig};

#[derive(Parser)]
#[command(
    name = "demrisk",
    version,
    about = "Life portfolio valuation, profit decomposition, and demographic SCR"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the simulation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory (also: DEMRISK_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict output to one format.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Per-year premium, reserve, and best-estimate table.
    Value(CommonArgs),
    /// Expected demographic profit series on both accounting bases.
    Project(CommonArgs),
    /// Per-path five-component decomposition with closure checks.
    Decompose(CommonArgs),
    /// One-year Monte Carlo SCR report at the configured times.
    Simulate(CommonArgs),
}

fn run(args: &CommonArgs, which: &str) -> Result<(Vec<PathBuf>, Vec<String>), String> {
    let (config, raw) = RunConfig::load(&args.config).map_err(|e| e.to_string())?;
    let base_dir = args.config.parent();
    let overrides = Overrides {
        seed: args.seed,
        out_dir: args.out.clone(),
        format: args.format.map(Into::into),
    };
    match which {
        "value" => commands::cmd_value(&config, &raw, base_dir, &overrides)
            .map(|r| (r.written, Vec::new()))
            .map_err(|e| e.to_string()),
        "project" => commands::cmd_project(&config, &raw, base_dir, &overrides)
            .map(|r| (r.written, Vec::new()))
            .map_err(|e| e.to_string()),
        "decompose" => commands::cmd_decompose(&config, &raw, base_dir, &overrides)
            .map(|r| (r.written, Vec::new()))
            .map_err(|e| e.to_string()),
        "simulate" => commands::cmd_simulate(&config, &raw, base_dir, &overrides)
            .map(|r| (r.written, r.warnings))
            .map_err(|e| e.to_string()),
        _ => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, which) = match &cli.command {
        Command::Value(a) => (a, "value"),
        Command::Project(a) => (a, "project"),
        Command::Decompose(a) => (a, "decompose"),
        Command::Simulate(a) => (a, "simulate"),
    };
    match run(args, which) {
        Ok((written, warnings)) => {
            for w in warnings {
                eprintln!("warning: {w}");
            }
            for path in written {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
