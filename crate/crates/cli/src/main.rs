//! `clustersc`: synthetic control with donor clustering, from the shell.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration; exit code 2.
    Usage(String),
    /// Failure while running; exit code 1.
    Runtime(clustersc::Error),
}

impl From<clustersc::Error> for CliError {
    fn from(e: clustersc::Error) -> Self {
        CliError::Runtime(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "clustersc", version, about, arg_required_else_help = true)]
struct Cli {
    /// TOML file with one table per subcommand; keys mirror the flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides CLUSTERSC_OUT_DIR and the config file).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate two-group synthetic panels.
    Simulate(SimulateArgs),
    /// Leave-one-out placebo study on synthetic panels.
    PlaceboSynthetic(PlaceboSyntheticArgs),
    /// Random-split placebo study on an observed panel.
    PlaceboPanel(PlaceboPanelArgs),
    /// Fit and report the donor cluster model of a panel.
    Cluster(ClusterArgs),
    /// Singular values and cumulative shares of a panel.
    Spectrum(SpectrumArgs),
    /// Monte-Carlo check of the singular value gap between pool and subset.
    GapCheck(GapCheckArgs),
    /// Misassignment of the cluster model across noise levels.
    RecoveryCheck(RecoveryCheckArgs),
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct SimulateArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Units in group A.
    #[arg(long)]
    na: Option<usize>,
    /// Units in group B.
    #[arg(long)]
    nb: Option<usize>,
    /// Number of periods.
    #[arg(long)]
    t: Option<usize>,
    /// Pre-intervention periods.
    #[arg(long)]
    t0: Option<usize>,
    /// gaussian:S, uniform:H or student_t:DOF:SCALE.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    datasets: Option<usize>,
    #[arg(long)]
    stem: Option<String>,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct PlaceboSyntheticArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    na: Option<usize>,
    #[arg(long)]
    nb: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    t0: Option<usize>,
    /// Noise family; the level comes from --noise-grid.
    #[arg(long)]
    noise: Option<String>,
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',')]
    noise_grid: Option<Vec<f64>>,
    /// Datasets per noise level.
    #[arg(long)]
    datasets: Option<usize>,
    /// Share of group A used as placebo targets.
    #[arg(long)]
    target_fraction: Option<f64>,
    /// Comma-separated regressions: ols, ridge, lasso.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    lambda: Option<f64>,
    /// fixed:R, energy:TAU or energy2:TAU.
    #[arg(long)]
    rank_rule: Option<String>,
    /// K, auto or auto:MIN-MAX.
    #[arg(long)]
    k: Option<String>,
    /// per_target or per_pool.
    #[arg(long)]
    fit_mode: Option<String>,
    /// per_cluster or pool.
    #[arg(long)]
    cluster_rank: Option<String>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    stem: Option<String>,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct PlaceboPanelArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Wide panel CSV (`unit,<label>,...`).
    #[arg(long)]
    panel: Option<PathBuf>,
    /// House-price index file (long form or FHFA metro layout).
    #[arg(long)]
    hpi: Option<PathBuf>,
    /// First quarter kept from the index file, e.g. 1997Q1.
    #[arg(long)]
    start: Option<String>,
    /// Last quarter kept from the index file.
    #[arg(long)]
    end: Option<String>,
    /// Pre-intervention periods.
    #[arg(long)]
    t0: Option<usize>,
    /// Label of the last pre-intervention period.
    #[arg(long)]
    t0_label: Option<String>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    rank_rule: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    cluster_rank: Option<String>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    stem: Option<String>,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct ClusterArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    panel: Option<PathBuf>,
    #[arg(long)]
    t0: Option<usize>,
    #[arg(long)]
    t0_label: Option<String>,
    #[arg(long)]
    rank_rule: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    stem: Option<String>,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct SpectrumArgs {
    #[arg(long)]
    panel: Option<PathBuf>,
    #[arg(long)]
    t0: Option<usize>,
    #[arg(long)]
    t0_label: Option<String>,
    /// full or pre.
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    stem: Option<String>,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct GapCheckArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Pool size.
    #[arg(long)]
    n: Option<usize>,
    /// Subset size (the first NA rows).
    #[arg(long)]
    na: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    /// Signal rank.
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    stem: Option<String>,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct RecoveryCheckArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    na: Option<usize>,
    #[arg(long)]
    nb: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    t0: Option<usize>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long, value_delimiter = ',')]
    noise_grid: Option<Vec<f64>>,
    #[arg(long)]
    datasets: Option<usize>,
    #[arg(long)]
    rank_rule: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    stem: Option<String>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = cli.config.as_deref().map(config::read_config_file).transpose()?;
    let file = file.as_ref();
    let out = cli.out_dir.as_ref();
    match &cli.command {
        Command::Simulate(a) => commands::simulate(config::resolve("simulate", a, file)?, out),
        Command::PlaceboSynthetic(a) => {
            commands::placebo_synthetic(config::resolve("placebo-synthetic", a, file)?, out)
        }
        Command::PlaceboPanel(a) => commands::placebo_panel(config::resolve("placebo-panel", a, file)?, out),
        Command::Cluster(a) => commands::cluster(config::resolve("cluster", a, file)?, out),
        Command::Spectrum(a) => commands::spectrum(config::resolve("spectrum", a, file)?, out),
        Command::GapCheck(a) => commands::gap_check(config::resolve("gap-check", a, file)?, out),
        Command::RecoveryCheck(a) => {
            commands::recovery_check(config::resolve("recovery-check", a, file)?, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `clustersc --help` for usage");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
