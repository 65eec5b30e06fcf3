//! Experiment CLI: run one configured convergence study and write its table
//! and metadata files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use oga_pde::config::load_config;
use oga_pde::runner::{run_experiment, write_outputs, TableFormat};
use oga_pde::table::emit_markdown;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Markdown,
    Both,
}

impl From<Format> for TableFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => TableFormat::Csv,
            Format::Markdown => TableFormat::Markdown,
            Format::Both => TableFormat::Both,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "oga-pde", about = "Greedy shallow-network solver for indefinite elliptic PDEs")]
struct Cli {
    /// Experiment config file (flat TOML).
    #[arg(long)]
    config: PathBuf,

    /// Override a config key, e.g. --override n_max=64 (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Output directory for the table and metadata files.
    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Which table files to write.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Measure checkpoint errors on a grid with this many times more cells
    /// per axis than the solve grid.
    #[arg(long = "verify-grid", value_name = "FACTOR")]
    verify_grid: Option<usize>,
}

fn run(cli: &Cli) -> oga_pde::Result<()> {
    let mut config = load_config(&cli.config, &cli.overrides)?;
    if let Some(factor) = cli.verify_grid {
        if factor == 0 {
            return Err(oga_pde::Error::config("verify_grid_factor", "must be >= 1"));
        }
        config.verify_grid_factor = factor;
    }

    let outcome = run_experiment(&config)?;

    let stem = cli
        .config
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("experiment")
        .to_string();
    let written = write_outputs(&outcome, &cli.out, &stem, cli.format.into())?;

    print!("{}", emit_markdown(&outcome.rows));
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
