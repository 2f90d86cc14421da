//! Command line front end: simulate Matérn fields on the benchmark designs,
//! estimate the smoothness index ν from site/observation files, and replay
//! full experiment sweeps with aggregate reports.
//!
//! Exit codes: 0 on success, 1 when estimation fails (degenerate variations,
//! ill-conditioned covariance, a ν sweep with no surviving replications),
//! 2 on input errors (unreadable or inconsistent files, bad configuration).

use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use quadvar::designs::SiteSet;
use quadvar::experiment::{
    estimate_observations, run_experiment, simulate_observations, EstimateMode, EstimateOptions,
    ExperimentConfig, ExperimentError, ExperimentKind, ExperimentReport, ReportFormat,
};

#[derive(Parser)]
#[command(
    name = "quadvar",
    version,
    about = "Smoothness estimation for Gaussian random fields observed at \
             irregularly spaced sites"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Sites on a line; pairs are sorted by coordinate before estimation.
    Line,
    /// Points along a smooth planar curve; unordered files are reordered
    /// by nearest-neighbor chaining first.
    Curve,
    /// Row-major points of a square deformed grid.
    Lattice,
}

impl From<Mode> for EstimateMode {
    fn from(mode: Mode) -> EstimateMode {
        match mode {
            Mode::Line => EstimateMode::Line,
            Mode::Curve => EstimateMode::Curve,
            Mode::Lattice => EstimateMode::Lattice,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one replication of a Matérn field (σ² = α = 1) on a
    /// benchmark design and write the sites and observations as JSON.
    Simulate {
        /// Benchmark design: 1 = line transect, 2 = circular arc,
        /// 3 = deformed lattice.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        experiment: u8,
        /// Number of sites (lattice side for experiment 3).
        #[arg(long)]
        n: usize,
        /// True smoothness ν of the simulated field.
        #[arg(long)]
        nu: f64,
        /// Master seed; together with --replication it pins every bit of
        /// the output.
        #[arg(long)]
        seed: u64,
        /// Replication index (stream number within the seed).
        #[arg(long, default_value_t = 0)]
        replication: u64,
        /// Output path for the site set document.
        #[arg(long)]
        sites: PathBuf,
        /// Output path for the observation vector (a JSON array).
        #[arg(long)]
        observations: PathBuf,
    },
    /// Estimate ν from a site file and an observation file; prints the
    /// estimate record as JSON on standard output.
    Estimate {
        /// Path to the site set document.
        #[arg(long)]
        sites: PathBuf,
        /// Path to the observation vector (a JSON array).
        #[arg(long)]
        observations: PathBuf,
        /// Design family of the sites.
        #[arg(long, value_enum)]
        mode: Mode,
        /// Order search bound M (line mode).
        #[arg(long, default_value_t = 2.5)]
        m: f64,
        /// Lattice stencil row (lattice mode).
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2), default_value_t = 2)]
        ell: u8,
        /// Expected lattice side; inferred from the point count if omitted.
        #[arg(long)]
        side: Option<usize>,
    },
    /// Run an experiment sweep from a JSON configuration and write the
    /// replication report (CSV rows or a JSON document).
    Experiment {
        /// Path to the configuration document.
        #[arg(long)]
        config: PathBuf,
        /// Report destination; overrides output_path from the
        /// configuration. Standard output when neither is given.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Report format; overrides the configuration.
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
}

enum Failure {
    Input(anyhow::Error),
    Estimation(anyhow::Error),
}

impl Failure {
    fn classify(err: ExperimentError) -> Failure {
        match &err {
            ExperimentError::Estimate(_) | ExperimentError::Grf(_) => {
                Failure::Estimation(err.into())
            }
            _ => Failure::Input(err.into()),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(err: ExperimentError) -> Failure {
        Failure::classify(err)
    }
}

fn input_err(err: impl Into<anyhow::Error>) -> Failure {
    Failure::Input(err.into())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Estimation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { experiment, n, nu, seed, replication, sites, observations } => {
            let kind = kind_from_number(experiment);
            let (site_set, obs) = simulate_observations(kind, n, nu, seed, replication)?;
            write_json_file(&sites, &site_set)?;
            write_json_file(&observations, &obs)?;
            eprintln!(
                "wrote {} sites to {} and observations to {}",
                site_set.len(),
                sites.display(),
                observations.display()
            );
            Ok(())
        }
        Command::Estimate { sites, observations, mode, m, ell, side } => {
            let site_set: SiteSet = read_json_file(&sites)?;
            let obs: Vec<f64> = read_json_file(&observations)?;
            for (i, x) in obs.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Failure::Input(anyhow::anyhow!(
                        "observation {i} in {} is not finite",
                        observations.display()
                    )));
                }
            }
            let mut options = EstimateOptions::new(mode.into());
            options.upper_bound = m;
            options.ell = ell as usize;
            options.side = side;
            let result = estimate_observations(&site_set, &obs, &options)?;
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, &result).map_err(input_err)?;
            writeln!(stdout).map_err(input_err)?;
            Ok(())
        }
        Command::Experiment { config, output, format } => {
            let mut cfg: ExperimentConfig = read_json_file(&config)?;
            if let Some(path) = output {
                cfg.output_path = Some(path);
            }
            if let Some(f) = format {
                cfg.format = match f {
                    Format::Csv => ReportFormat::Csv,
                    Format::Json => ReportFormat::Json,
                };
            }
            let report = run_experiment(&cfg)?;
            write_report(&report)?;
            print_summary(&report);
            let failed = report.fully_failed_nus();
            if !failed.is_empty() {
                return Err(Failure::Estimation(anyhow::anyhow!(
                    "no replication succeeded for ν in {failed:?}"
                )));
            }
            Ok(())
        }
    }
}

fn kind_from_number(number: u8) -> ExperimentKind {
    match number {
        1 => ExperimentKind::LineTransect,
        2 => ExperimentKind::CircularArc,
        _ => ExperimentKind::DeformedLattice,
    }
}

fn read_json_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let file = File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(Failure::Input)?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::Input)
}

fn write_json_file<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut file = File::create(path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(Failure::Input)?;
    serde_json::to_writer_pretty(&mut file, value).map_err(input_err)?;
    writeln!(file).map_err(input_err)?;
    Ok(())
}

fn write_report(report: &ExperimentReport) -> Result<(), Failure> {
    match &report.config.output_path {
        Some(path) => {
            let file = File::create(path)
                .with_context(|| format!("creating {}", path.display()))
                .map_err(Failure::Input)?;
            emit_report(report, file)?;
            eprintln!("report written to {}", path.display());
        }
        None => emit_report(report, std::io::stdout().lock())?,
    }
    Ok(())
}

fn emit_report<W: std::io::Write>(report: &ExperimentReport, writer: W) -> Result<(), Failure> {
    match report.config.format {
        ReportFormat::Csv => report.write_csv(writer)?,
        ReportFormat::Json => report.write_json(writer)?,
    }
    Ok(())
}

fn print_summary(report: &ExperimentReport) {
    for s in &report.summaries {
        let mae = s
            .mean_absolute_error
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "-".into());
        let se = s
            .standard_error
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "-".into());
        eprintln!(
            "ν = {:<5} {:<16} ok {:>3}/{:<3} MAE {mae}  SE {se}  [{:.1} s]",
            s.nu_true,
            s.variant.to_string(),
            s.successes,
            s.successes + s.failures,
            s.seconds
        );
    }
}
