//! `lyap`: runs scenario files against the lyap-core library and writes
//! JSON reports and CSV tables.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lyap_core::model::ModelError;
use lyap_core::spectrum::SpectrumError;
use lyap_core::splitness::SplitnessError;
use lyap_core::synth::SynthError;
use thiserror::Error;

mod commands;
mod config;

use commands::Report;
use config::{Format, Overrides};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("output error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] lyap_core::Error),
    #[error("self-test failed")]
    SelfTest,
}

macro_rules! via_core {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Core(e.into())
            }
        }
    )*};
}
via_core!(ModelError, SpectrumError, SplitnessError, SynthError);

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Core(e) => e.exit_code() as u8,
            CliError::SelfTest => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "lyap", version, about = "Lyapunov spectra, splitness and spectrum-shifting perturbations")]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    horizon: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for report files; stdout only when absent.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lyapunov spectrum by the discrete QR method.
    Spectrum,
    /// Broken-away verdicts and angle profiles of an FSS.
    Splitness,
    /// Build and execute a perturbation plan for the shifts in [perturb].
    Perturb,
    /// Assign the target spectrum in [assign] (normal splitted FSS).
    Assign,
    /// Instability experiment over the epsilon grid in [instability].
    Instability,
    /// Extrema of sin(ln n) for n up to max_n.
    Sinln {
        #[arg(long)]
        max_n: Option<u64>,
    },
    /// Built-in checks on the worked examples.
    Selftest,
}

fn write_csv(table: &commands::Table, out: impl std::io::Write) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(&table.header).map_err(io)?;
    for r in &table.rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

fn emit(report: &Report, name: &str, format: Format, out_dir: Option<&Path>) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(&report.json).map_err(|e| CliError::Io(e.to_string()))? + "\n";
    if let Some(dir) = out_dir {
        let io = |p: &Path, e: std::io::Error| CliError::Io(format!("{}: {e}", p.display()));
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let stem = format!("{name}.{}", report.command);
        let path = dir.join(format!("{stem}.json"));
        fs::write(&path, &json).map_err(|e| io(&path, e))?;
        if format == Format::Csv {
            for t in &report.tables {
                let path = dir.join(format!("{stem}.{}.csv", t.name));
                let f = fs::File::create(&path).map_err(|e| io(&path, e))?;
                write_csv(t, f)?;
            }
        }
    }
    match format {
        Format::Json => print!("{json}"),
        Format::Csv => write_csv(&report.tables[0], std::io::stdout())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let over = Overrides { horizon: cli.horizon, seed: cli.seed, out_dir: cli.out_dir.clone(), format: cli.format };
    let standalone = |report: Report| {
        emit(&report, report.command, cli.format.unwrap_or(Format::Json), cli.out_dir.as_deref())
    };
    match cli.command {
        Command::Sinln { max_n } => {
            let from_config = match &cli.config {
                Some(path) => config::load(path, &over)?.params.sinln.map(|b| b.max_n),
                None => None,
            };
            standalone(commands::sinln(max_n.or(from_config).unwrap_or(10_000))?)
        }
        Command::Selftest => {
            let (report, ok) = commands::selftest()?;
            standalone(report)?;
            if ok {
                Ok(())
            } else {
                Err(CliError::SelfTest)
            }
        }
        cmd => {
            let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
            let sc = config::load(path, &over)?;
            let name = match cmd {
                Command::Spectrum => "spectrum",
                Command::Splitness => "splitness",
                Command::Perturb => "perturb",
                Command::Assign => "assign",
                _ => "instability",
            };
            let report = commands::run(name, &sc)?;
            emit(&report, &sc.params.name, sc.params.format, sc.params.out_dir.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
