//! Layered settings: built-in defaults, then the subcommand's section of the
//! TOML config file, then command-line flags.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable that overrides the output directory unless
/// `--out-dir` is given.
pub const OUT_DIR_ENV: &str = "CLUSTERSC_OUT_DIR";

const DEFAULT_OUT_DIR: &str = "clustersc-out";

pub fn read_config_file(path: &Path) -> Result<toml::Table, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    text.parse::<toml::Table>()
        .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
}

/// Merges `flags` over `[section]` of `file` and deserializes the result.
pub fn resolve<A: Serialize, C: DeserializeOwned>(
    section: &str,
    flags: &A,
    file: Option<&toml::Table>,
) -> Result<C, CliError> {
    let mut table = toml::Table::new();
    if let Some(file) = file {
        match file.get(section) {
            Some(toml::Value::Table(t)) => table.extend(t.clone()),
            Some(_) => return Err(CliError::Usage(format!("config key '{section}' must be a table"))),
            None => {}
        }
    }
    let flags = toml::Table::try_from(flags)
        .map_err(|e| CliError::Usage(format!("cannot encode flags: {e}")))?;
    table.extend(flags);
    C::deserialize(toml::Value::Table(table))
        .map_err(|e| CliError::Usage(format!("[{section}]: {}", e.message())))
}

/// `--out-dir`, then the environment variable, then the config file.
pub fn out_dir(flag: Option<&PathBuf>, configured: Option<&PathBuf>) -> PathBuf {
    flag.cloned()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| configured.cloned())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

pub fn require_seed(seed: Option<u64>) -> Result<u64, CliError> {
    seed.ok_or_else(|| CliError::Usage("--seed is required for this command".into()))
}

pub fn parse<T: std::str::FromStr>(what: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Usage(format!("bad {what} '{value}': {e}")))
}

fn default_noise_grid() -> Vec<f64> {
    vec![0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateConfig {
    pub seed: Option<u64>,
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
    pub na: usize,
    pub nb: usize,
    pub t: usize,
    pub t0: usize,
    pub noise: String,
    pub datasets: usize,
    pub stem: String,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out_dir: None,
            na: 500,
            nb: 500,
            t: 10,
            t0: 8,
            noise: "gaussian:0.3".into(),
            datasets: 1,
            stem: "dataset".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct PlaceboSyntheticConfig {
    pub seed: Option<u64>,
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
    pub na: usize,
    pub nb: usize,
    pub t: usize,
    pub t0: usize,
    /// Noise family; its level is replaced by each entry of `noise-grid`.
    pub noise: String,
    pub noise_grid: Vec<f64>,
    pub datasets: usize,
    pub target_fraction: f64,
    pub methods: Vec<String>,
    pub lambda: f64,
    pub rank_rule: String,
    pub k: String,
    pub fit_mode: String,
    pub cluster_rank: String,
    pub restarts: usize,
    pub stem: String,
}

impl Default for PlaceboSyntheticConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out_dir: None,
            na: 500,
            nb: 500,
            t: 10,
            t0: 8,
            noise: "gaussian:0".into(),
            noise_grid: default_noise_grid(),
            datasets: 20,
            target_fraction: 0.3,
            methods: vec!["ridge".into()],
            lambda: 0.01,
            rank_rule: "energy:0.95".into(),
            k: "auto".into(),
            fit_mode: "per_target".into(),
            cluster_rank: "per_cluster".into(),
            restarts: 10,
            stem: "placebo_synthetic".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct PlaceboPanelConfig {
    pub seed: Option<u64>,
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
    /// Wide panel CSV.
    pub panel: Option<PathBuf>,
    /// House-price index file, used instead of `panel`.
    pub hpi: Option<PathBuf>,
    pub start: String,
    pub end: String,
    pub t0: Option<usize>,
    pub t0_label: Option<String>,
    pub train_fraction: f64,
    pub iterations: usize,
    pub methods: Vec<String>,
    pub lambda: f64,
    pub rank_rule: String,
    pub k: String,
    pub cluster_rank: String,
    pub restarts: usize,
    pub stem: String,
}

impl Default for PlaceboPanelConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out_dir: None,
            panel: None,
            hpi: None,
            start: "1997Q1".into(),
            end: "2006Q4".into(),
            t0: None,
            t0_label: None,
            train_fraction: 0.8,
            iterations: 100,
            methods: vec!["ols".into(), "ridge".into(), "lasso".into()],
            lambda: 0.1,
            rank_rule: "energy:0.95".into(),
            k: "2".into(),
            cluster_rank: "per_cluster".into(),
            restarts: 10,
            stem: "placebo_panel".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ClusterConfig {
    pub seed: Option<u64>,
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
    pub panel: Option<PathBuf>,
    pub t0: Option<usize>,
    pub t0_label: Option<String>,
    pub rank_rule: String,
    pub k: String,
    pub restarts: usize,
    pub stem: String,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out_dir: None,
            panel: None,
            t0: None,
            t0_label: None,
            rank_rule: "energy:0.95".into(),
            k: "auto".into(),
            restarts: 10,
            stem: "cluster".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SpectrumConfig {
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
    pub panel: Option<PathBuf>,
    pub t0: Option<usize>,
    pub t0_label: Option<String>,
    /// `full` or `pre`.
    pub window: String,
    pub stem: String,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            out_dir: None,
            panel: None,
            t0: None,
            t0_label: None,
            window: "full".into(),
            stem: "spectrum".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct GapCheckConfig {
    pub seed: Option<u64>,
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
    pub n: usize,
    pub na: usize,
    pub t: usize,
    pub rank: usize,
    pub noise: String,
    pub trials: usize,
    pub stem: String,
}

impl Default for GapCheckConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out_dir: None,
            n: 1000,
            na: 500,
            t: 10,
            rank: 3,
            noise: "gaussian:0.3".into(),
            trials: 200,
            stem: "gap_check".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RecoveryCheckConfig {
    pub seed: Option<u64>,
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
    pub na: usize,
    pub nb: usize,
    pub t: usize,
    pub t0: usize,
    pub noise: String,
    pub noise_grid: Vec<f64>,
    pub datasets: usize,
    pub rank_rule: String,
    pub k: String,
    pub restarts: usize,
    pub stem: String,
}

impl Default for RecoveryCheckConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out_dir: None,
            na: 500,
            nb: 500,
            t: 10,
            t0: 8,
            noise: "gaussian:0".into(),
            noise_grid: default_noise_grid(),
            datasets: 20,
            rank_rule: "energy:0.95".into(),
            k: "2".into(),
            restarts: 10,
            stem: "recovery_check".into(),
        }
    }
}
