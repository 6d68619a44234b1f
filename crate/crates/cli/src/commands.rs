use std::path::{Path, PathBuf};

use clustersc::clustering::{fit_cluster_model, KChoice, KMeansOptions};
use clustersc::datagen::{gen_dataset_seeded, DatasetParams, NoiseSpec};
use clustersc::engine::{ClusterRank, ClusterScOptions};
use clustersc::evaluation::{
    cluster_recovery_experiment, singular_gap_experiment, split_placebo, synthetic_study, ClusterFitMode,
    GapParams, MethodVariant, PlaceboSettings,
};
use clustersc::io::{
    load_panel_csv, preprocess_hpi, read_hpi_records, write_dataset, write_report, ClusterReport, GapReport,
    RecoveryReport, Report, SpectrumReport, T0Spec,
};
use clustersc::regression::{Method, RegressionSpec};
use clustersc::{spectrum_report, RankRule, TimePanel};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{
    self, parse, require_seed, ClusterConfig, GapCheckConfig, PlaceboPanelConfig, PlaceboSyntheticConfig,
    RecoveryCheckConfig, SimulateConfig, SpectrumConfig,
};
use crate::CliError;

fn echo<T: Serialize>(cfg: &T) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config structs serialize")
}

fn announce(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn kmeans_options(restarts: usize) -> Result<KMeansOptions, CliError> {
    if restarts == 0 {
        return Err(CliError::Usage("--restarts must be at least 1".into()));
    }
    Ok(KMeansOptions {
        restarts,
        ..KMeansOptions::default()
    })
}

fn variants(methods: &[String], lambda: f64, rule: RankRule, k: KChoice) -> Result<Vec<MethodVariant>, CliError> {
    if methods.is_empty() {
        return Err(CliError::Usage("--methods is empty".into()));
    }
    let mut out = Vec::new();
    for m in methods {
        let method: Method = parse("method", m)?;
        let reg = RegressionSpec::with_method(method, lambda);
        reg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        out.extend(MethodVariant::standard_set(reg, rule, k));
    }
    Ok(out)
}

fn cluster_rank(s: &str) -> Result<ClusterRank, CliError> {
    match s {
        "per_cluster" => Ok(ClusterRank::PerCluster),
        "pool" => Ok(ClusterRank::Pool),
        other => Err(CliError::Usage(format!("bad cluster rank '{other}': use per_cluster or pool"))),
    }
}

fn fit_mode(s: &str) -> Result<ClusterFitMode, CliError> {
    match s {
        "per_target" => Ok(ClusterFitMode::PerTarget),
        "per_pool" => Ok(ClusterFitMode::PerPool),
        other => Err(CliError::Usage(format!("bad fit mode '{other}': use per_target or per_pool"))),
    }
}

fn quarter(s: &str) -> Result<(i32, u8), CliError> {
    let bad = || CliError::Usage(format!("bad quarter '{s}': expected e.g. 1997Q1"));
    let (y, q) = s.split_once(['Q', 'q']).ok_or_else(bad)?;
    let year = y.parse().map_err(|_| bad())?;
    let q: u8 = q.parse().map_err(|_| bad())?;
    if !(1..=4).contains(&q) {
        return Err(bad());
    }
    Ok((year, q))
}

fn t0_spec(t0: Option<usize>, label: &Option<String>) -> Result<Option<T0Spec>, CliError> {
    match (t0, label) {
        (Some(_), Some(_)) => Err(CliError::Usage("give --t0 or --t0-label, not both".into())),
        (Some(n), None) => Ok(Some(T0Spec::Count(n))),
        (None, Some(l)) => Ok(Some(T0Spec::LastPreLabel(l.clone()))),
        (None, None) => Ok(None),
    }
}

fn required_panel(panel: &Option<PathBuf>) -> Result<&Path, CliError> {
    panel
        .as_deref()
        .ok_or_else(|| CliError::Usage("--panel is required".into()))
}

fn dataset_params(na: usize, nb: usize, t: usize, t0: usize, noise: NoiseSpec) -> DatasetParams {
    DatasetParams {
        n_a: na,
        n_b: nb,
        t_count: t,
        t0,
        ..DatasetParams::two_groups(na, noise)
    }
}

pub fn simulate(cfg: SimulateConfig, out: Option<&PathBuf>) -> Result<(), CliError> {
    let seed = require_seed(cfg.seed)?;
    let noise: NoiseSpec = parse("noise", &cfg.noise)?;
    let params = dataset_params(cfg.na, cfg.nb, cfg.t, cfg.t0, noise);
    let dir = config::out_dir(out, cfg.out_dir.as_ref());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..cfg.datasets {
        let ds = gen_dataset_seeded(&params, rng.next_u64())?;
        let stem = if cfg.datasets == 1 { cfg.stem.clone() } else { format!("{}_{i}", cfg.stem) };
        announce(&write_dataset(&ds, &dir, &stem)?);
    }
    Ok(())
}

pub fn placebo_synthetic(cfg: PlaceboSyntheticConfig, out: Option<&PathBuf>) -> Result<(), CliError> {
    let seed = require_seed(cfg.seed)?;
    let noise: NoiseSpec = parse("noise", &cfg.noise)?;
    let rule: RankRule = parse("rank rule", &cfg.rank_rule)?;
    let k: KChoice = parse("k", &cfg.k)?;
    let vs = variants(&cfg.methods, cfg.lambda, rule, k)?;
    let settings = PlaceboSettings {
        cluster: ClusterScOptions {
            kmeans: kmeans_options(cfg.restarts)?,
            cluster_rank: cluster_rank(&cfg.cluster_rank)?,
        },
        fit_mode: fit_mode(&cfg.fit_mode)?,
        ..PlaceboSettings::default()
    };
    let params = dataset_params(cfg.na, cfg.nb, cfg.t, cfg.t0, noise);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = synthetic_study(
        &params,
        &cfg.noise_grid,
        cfg.datasets,
        cfg.target_fraction,
        &vs,
        &settings,
        &mut rng,
    )?;
    report.config = echo(&cfg);
    for &level in &cfg.noise_grid {
        let medians: Vec<f64> = report
            .improvement_medians
            .iter()
            .filter(|m| m.noise_level == Some(level))
            .map(|m| m.median)
            .collect();
        let positive = medians.iter().filter(|&&m| m > 0.0).count();
        println!("noise {level}: median improvement positive in {positive}/{} datasets", medians.len());
    }
    let dir = config::out_dir(out, cfg.out_dir.as_ref());
    announce(&write_report(&Report::Placebo(&report), &dir, &cfg.stem)?);
    Ok(())
}

pub fn placebo_panel(cfg: PlaceboPanelConfig, out: Option<&PathBuf>) -> Result<(), CliError> {
    let seed = require_seed(cfg.seed)?;
    let t0 = t0_spec(cfg.t0, &cfg.t0_label)?;
    let panel: TimePanel = match (&cfg.panel, &cfg.hpi) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give --panel or --hpi, not both".into())),
        (None, None) => return Err(CliError::Usage("--panel or --hpi is required".into())),
        (Some(p), None) => {
            let t0 = t0.ok_or_else(|| CliError::Usage("--t0 or --t0-label is required".into()))?;
            load_panel_csv(p, &t0)?
        }
        (None, Some(h)) => {
            let (start, end) = (quarter(&cfg.start)?, quarter(&cfg.end)?);
            let records = read_hpi_records(h)?;
            let periods = ((end.0 - start.0) * 4 + i32::from(end.1) - i32::from(start.1) + 1).max(0) as usize;
            // by default the final year is the post-intervention window
            let t0 = match t0 {
                None => periods.saturating_sub(4),
                Some(T0Spec::Count(n)) => n,
                Some(T0Spec::LastPreLabel(_)) => {
                    return Err(CliError::Usage("use --t0 with --hpi".into()));
                }
            };
            let (panel, summary) = preprocess_hpi(&records, start, end, t0)?;
            println!(
                "hpi: {} units read, {} retained, {} dropped, {} periods",
                summary.input_units, summary.retained, summary.dropped, summary.periods
            );
            panel
        }
    };
    let rule: RankRule = parse("rank rule", &cfg.rank_rule)?;
    let k: KChoice = parse("k", &cfg.k)?;
    let vs = variants(&cfg.methods, cfg.lambda, rule, k)?;
    let settings = PlaceboSettings {
        cluster: ClusterScOptions {
            kmeans: kmeans_options(cfg.restarts)?,
            cluster_rank: cluster_rank(&cfg.cluster_rank)?,
        },
        ..PlaceboSettings::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = split_placebo(&panel, cfg.train_fraction, cfg.iterations, &vs, &settings, &mut rng)?;
    report.config = echo(&cfg);
    for v in &vs {
        let label = v.label();
        let medians: Vec<f64> = report.medians_for(&label).iter().map(|m| m.median_post_mse).collect();
        if let Some(m) = clustersc::evaluation::median(&medians) {
            println!("{label}: median post-period mse {m:.6}");
        }
    }
    let dir = config::out_dir(out, cfg.out_dir.as_ref());
    announce(&write_report(&Report::Placebo(&report), &dir, &cfg.stem)?);
    Ok(())
}

pub fn cluster(cfg: ClusterConfig, out: Option<&PathBuf>) -> Result<(), CliError> {
    let seed = require_seed(cfg.seed)?;
    let t0 = t0_spec(cfg.t0, &cfg.t0_label)?
        .ok_or_else(|| CliError::Usage("--t0 or --t0-label is required".into()))?;
    let panel = load_panel_csv(required_panel(&cfg.panel)?, &t0)?;
    let rule: RankRule = parse("rank rule", &cfg.rank_rule)?;
    let k: KChoice = parse("k", &cfg.k)?;
    let pre = panel.values.col_range(0, panel.split.t0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = fit_cluster_model(&pre, rule, k, &kmeans_options(cfg.restarts)?, &mut rng)?;
    println!("k = {}, rank = {}, inertia = {:.6}", model.k, model.rank_r, model.inertia);
    let report = ClusterReport {
        unit_ids: panel.unit_ids,
        model,
        config: echo(&cfg),
    };
    let dir = config::out_dir(out, cfg.out_dir.as_ref());
    announce(&write_report(&Report::Cluster(&report), &dir, &cfg.stem)?);
    Ok(())
}

pub fn spectrum(cfg: SpectrumConfig, out: Option<&PathBuf>) -> Result<(), CliError> {
    let path = required_panel(&cfg.panel)?;
    let t0 = t0_spec(cfg.t0, &cfg.t0_label)?;
    let values = match (cfg.window.as_str(), t0) {
        ("full", t0) => load_panel_csv(path, &t0.unwrap_or(T0Spec::Count(1)))?.values,
        ("pre", Some(t0)) => {
            let panel = load_panel_csv(path, &t0)?;
            panel.values.col_range(0, panel.split.t0)?
        }
        ("pre", None) => return Err(CliError::Usage("--window pre needs --t0 or --t0-label".into())),
        (other, _) => return Err(CliError::Usage(format!("bad window '{other}': use full or pre"))),
    };
    let rows = spectrum_report(&values)?;
    for r in &rows {
        println!("{}\t{:.6}\t{:.6}", r.index, r.sigma, r.cumulative_ratio);
    }
    let report = SpectrumReport {
        rows,
        config: echo(&cfg),
    };
    let dir = config::out_dir(out, cfg.out_dir.as_ref());
    announce(&write_report(&Report::Spectrum(&report), &dir, &cfg.stem)?);
    Ok(())
}

pub fn gap_check(cfg: GapCheckConfig, out: Option<&PathBuf>) -> Result<(), CliError> {
    let seed = require_seed(cfg.seed)?;
    let params = GapParams {
        n: cfg.n,
        n_a: cfg.na,
        t_count: cfg.t,
        rank_r: cfg.rank,
        noise: parse("noise", &cfg.noise)?,
        trials: cfg.trials,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let result = singular_gap_experiment(&params, &mut rng)?;
    match result.theoretical_bound {
        Some(b) => println!(
            "mean gap {:.6} (se {:.6}), bound {:.6}, precondition {}",
            result.empirical_mean_gap, result.standard_error, b, result.bound_precondition_holds
        ),
        None => println!(
            "mean gap {:.6} (se {:.6}), no closed-form bound for this noise",
            result.empirical_mean_gap, result.standard_error
        ),
    }
    let report = GapReport {
        result,
        config: echo(&cfg),
    };
    let dir = config::out_dir(out, cfg.out_dir.as_ref());
    announce(&write_report(&Report::Gap(&report), &dir, &cfg.stem)?);
    Ok(())
}

pub fn recovery_check(cfg: RecoveryCheckConfig, out: Option<&PathBuf>) -> Result<(), CliError> {
    let seed = require_seed(cfg.seed)?;
    let noise: NoiseSpec = parse("noise", &cfg.noise)?;
    let rule: RankRule = parse("rank rule", &cfg.rank_rule)?;
    let k: KChoice = parse("k", &cfg.k)?;
    let params = dataset_params(cfg.na, cfg.nb, cfg.t, cfg.t0, noise);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table = cluster_recovery_experiment(
        &params,
        &cfg.noise_grid,
        cfg.datasets,
        rule,
        k,
        &kmeans_options(cfg.restarts)?,
        &mut rng,
    )?;
    for c in &table.cells {
        println!(
            "noise {}: mean misassignment {:.4}, exact recovery {:.2}",
            c.noise_level, c.mean_misassignment, c.exact_recovery_fraction
        );
    }
    let report = RecoveryReport {
        table,
        config: echo(&cfg),
    };
    let dir = config::out_dir(out, cfg.out_dir.as_ref());
    announce(&write_report(&Report::Recovery(&report), &dir, &cfg.stem)?);
    Ok(())
}
