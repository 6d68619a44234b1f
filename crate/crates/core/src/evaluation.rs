//! Placebo harnesses, error metrics and Monte-Carlo checks of the spectral
//! gap and cluster recovery.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{
    fit_cluster_model, partition_symmetric_difference, ClusterModel, KChoice, KMeansOptions, Partition,
};
use crate::datagen::{
    add_noise, gen_dataset_seeded, gen_group, DatasetParams, NoiseSpec, SignalSpec, SyntheticDataset,
};
use crate::engine::{
    cluster_sc, cluster_sc_with_model, sc_full, ClusterScOptions, EffectEstimate, InterventionSplit, ScFit,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::panel::TimePanel;
use crate::rank::RankRule;
use crate::regression::{active_set, Method, RegressionSpec, WeightVector, DEFAULT_ACTIVE_TOL};
use crate::svd::svd;

pub fn mse(predicted: &[f64], reference: &[f64]) -> Result<f64> {
    if predicted.len() != reference.len() {
        return Err(Error::Shape(format!(
            "mse of vectors with lengths {} and {}",
            predicted.len(),
            reference.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::InvalidInput("mse of empty vectors".into()));
    }
    let sum: f64 = predicted
        .iter()
        .zip(reference)
        .map(|(p, r)| (p - r) * (p - r))
        .sum();
    Ok(sum / predicted.len() as f64)
}

/// Positive when the cluster-selected fit has the lower error.
pub fn pairwise_improvement(post_mse_full: f64, post_mse_cluster: f64) -> f64 {
    post_mse_full - post_mse_cluster
}

/// Median of a nonempty slice; the mean of the two middle values for even
/// lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}

/// Uniform sample of `subset_size` row indices without replacement, sorted.
pub fn random_subset_variant<R: Rng + ?Sized>(pool: &Matrix, subset_size: usize, rng: &mut R) -> Result<Vec<usize>> {
    if subset_size > pool.rows() {
        return Err(Error::InvalidInput(format!(
            "subset of {subset_size} from a pool of {}",
            pool.rows()
        )));
    }
    let mut idx = sample(rng, pool.rows(), subset_size).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Share of `selected` in `target_group`, and share of `target_group`
/// that was selected.
pub fn donor_selection_scores(selected: &[usize], truth_labels: &[usize], target_group: usize) -> Result<(f64, f64)> {
    if selected.is_empty() {
        return Err(Error::UndefinedPrecision);
    }
    if let Some(&bad) = selected.iter().find(|&&i| i >= truth_labels.len()) {
        return Err(Error::InvalidInput(format!(
            "selected index {bad} outside {} labels",
            truth_labels.len()
        )));
    }
    let hits = selected.iter().filter(|&&i| truth_labels[i] == target_group).count();
    let group = truth_labels.iter().filter(|&&l| l == target_group).count();
    if group == 0 {
        return Err(Error::InvalidInput(format!("group {target_group} has no members")));
    }
    Ok((hits as f64 / selected.len() as f64, hits as f64 / group as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    ScFull,
    ScRandomSubset,
    ClusterSc,
}

impl VariantName {
    pub fn as_str(&self) -> &'static str {
        match self {
            VariantName::ScFull => "sc_full",
            VariantName::ScRandomSubset => "sc_random_subset",
            VariantName::ClusterSc => "cluster_sc",
        }
    }
}

impl std::str::FromStr for VariantName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sc_full" => Ok(VariantName::ScFull),
            "sc_random_subset" => Ok(VariantName::ScRandomSubset),
            "cluster_sc" => Ok(VariantName::ClusterSc),
            other => Err(Error::InvalidParams(format!("unknown variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodVariant {
    pub name: VariantName,
    pub reg: RegressionSpec,
    pub rule: RankRule,
    pub k: KChoice,
}

impl MethodVariant {
    pub fn new(name: VariantName, reg: RegressionSpec, rule: RankRule, k: KChoice) -> Self {
        Self { name, reg, rule, k }
    }

    /// `<variant>_<method>`, e.g. `cluster_sc_ridge`.
    pub fn label(&self) -> String {
        format!("{}_{}", self.name.as_str(), self.reg.method.as_str())
    }

    /// The three variants sharing one regression, rank rule and k policy.
    pub fn standard_set(reg: RegressionSpec, rule: RankRule, k: KChoice) -> Vec<Self> {
        vec![
            Self::new(VariantName::ScFull, reg, rule, k),
            Self::new(VariantName::ScRandomSubset, reg, rule, k),
            Self::new(VariantName::ClusterSc, reg, rule, k),
        ]
    }
}

/// How leave-one-out targets obtain their cluster model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterFitMode {
    /// Refit on the pool without the target, for every target.
    #[default]
    PerTarget,
    /// Fit once on the whole panel and drop the target from its cluster.
    PerPool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaceboSettings {
    pub cluster: ClusterScOptions,
    pub fit_mode: ClusterFitMode,
    /// Weights with magnitude above this count as active.
    pub active_tol: f64,
}

impl Default for PlaceboSettings {
    fn default() -> Self {
        Self {
            cluster: ClusterScOptions::default(),
            fit_mode: ClusterFitMode::default(),
            active_tol: DEFAULT_ACTIVE_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorReference {
    /// Errors against the noiseless signal.
    TrueSignal,
    Observed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub replicate: usize,
    pub noise_level: Option<f64>,
    /// Row of the target in the panel.
    pub target_id: usize,
    pub unit_id: String,
    pub variant: String,
    pub seed: u64,
    pub pre_mse: f64,
    pub post_mse: f64,
    pub selected_donor_count: usize,
    pub cluster_label: Option<usize>,
    pub rank_used: usize,
    pub converged: bool,
    pub active_donor_count: Option<usize>,
    pub active_donor_precision: Option<f64>,
    pub active_donor_recall: Option<f64>,
    /// Against the target's true group, for cluster-selected donor sets.
    pub selection_precision: Option<f64>,
    pub selection_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTarget {
    pub replicate: usize,
    pub target_id: usize,
    pub variant: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantMedian {
    pub replicate: usize,
    pub noise_level: Option<f64>,
    pub variant: String,
    pub targets: usize,
    pub median_pre_mse: f64,
    pub median_post_mse: f64,
    pub median_active_precision: Option<f64>,
    pub median_selection_precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRecord {
    pub replicate: usize,
    pub target_id: usize,
    pub baseline: String,
    pub candidate: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementMedian {
    pub replicate: usize,
    pub noise_level: Option<f64>,
    pub baseline: String,
    pub candidate: String,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboReport {
    pub reference: ErrorReference,
    pub variants: Vec<MethodVariant>,
    pub settings: PlaceboSettings,
    pub per_target: Vec<TargetRecord>,
    pub skipped: Vec<SkippedTarget>,
    pub per_dataset: Vec<VariantMedian>,
    pub improvements: Vec<ImprovementRecord>,
    pub improvement_medians: Vec<ImprovementMedian>,
    /// Dataset seeds, when known.
    pub seeds: Vec<u64>,
    /// Free-form echo of the invoking configuration.
    pub config: serde_json::Value,
}

impl PlaceboReport {
    fn from_records(
        reference: ErrorReference,
        variants: &[MethodVariant],
        settings: PlaceboSettings,
        per_target: Vec<TargetRecord>,
        skipped: Vec<SkippedTarget>,
        seeds: Vec<u64>,
    ) -> Self {
        let mut report = Self {
            reference,
            variants: variants.to_vec(),
            settings,
            per_target,
            skipped,
            per_dataset: Vec::new(),
            improvements: Vec::new(),
            improvement_medians: Vec::new(),
            seeds,
            config: serde_json::Value::Null,
        };
        report.summarize();
        report
    }

    fn replicates(&self) -> Vec<(usize, Option<f64>)> {
        let mut out: Vec<(usize, Option<f64>)> = Vec::new();
        for r in &self.per_target {
            if !out.iter().any(|&(i, _)| i == r.replicate) {
                out.push((r.replicate, r.noise_level));
            }
        }
        out.sort_by_key(|&(i, _)| i);
        out
    }

    /// Recomputes medians and improvements from the per-target rows.
    pub fn summarize(&mut self) {
        let labels: Vec<String> = self.variants.iter().map(MethodVariant::label).collect();
        let pairs: Vec<(String, String)> = self
            .variants
            .iter()
            .filter(|v| v.name == VariantName::ClusterSc)
            .filter_map(|c| {
                self.variants
                    .iter()
                    .find(|b| b.name == VariantName::ScFull && b.reg.method == c.reg.method)
                    .map(|b| (b.label(), c.label()))
            })
            .collect();
        let mut per_dataset = Vec::new();
        let mut improvements = Vec::new();
        let mut improvement_medians = Vec::new();
        for (rep, noise_level) in self.replicates() {
            let rows: Vec<&TargetRecord> = self.per_target.iter().filter(|r| r.replicate == rep).collect();
            for label in &labels {
                let mine: Vec<&TargetRecord> = rows.iter().copied().filter(|r| &r.variant == label).collect();
                if mine.is_empty() {
                    continue;
                }
                let collect = |f: &dyn Fn(&TargetRecord) -> Option<f64>| -> Vec<f64> {
                    mine.iter().filter_map(|r| f(r)).collect()
                };
                per_dataset.push(VariantMedian {
                    replicate: rep,
                    noise_level,
                    variant: label.clone(),
                    targets: mine.len(),
                    median_pre_mse: median(&collect(&|r| Some(r.pre_mse))).unwrap_or(f64::NAN),
                    median_post_mse: median(&collect(&|r| Some(r.post_mse))).unwrap_or(f64::NAN),
                    median_active_precision: median(&collect(&|r| r.active_donor_precision)),
                    median_selection_precision: median(&collect(&|r| r.selection_precision)),
                });
            }
            for (base, cand) in &pairs {
                let mut values = Vec::new();
                for b in rows.iter().filter(|r| &r.variant == base) {
                    if let Some(c) = rows.iter().find(|r| &r.variant == cand && r.target_id == b.target_id) {
                        let value = pairwise_improvement(b.post_mse, c.post_mse);
                        values.push(value);
                        improvements.push(ImprovementRecord {
                            replicate: rep,
                            target_id: b.target_id,
                            baseline: base.clone(),
                            candidate: cand.clone(),
                            value,
                        });
                    }
                }
                if let Some(m) = median(&values) {
                    improvement_medians.push(ImprovementMedian {
                        replicate: rep,
                        noise_level,
                        baseline: base.clone(),
                        candidate: cand.clone(),
                        median: m,
                    });
                }
            }
        }
        self.per_dataset = per_dataset;
        self.improvements = improvements;
        self.improvement_medians = improvement_medians;
    }

    /// Concatenates reports, renumbering replicates in input order.
    pub fn combine(reports: Vec<PlaceboReport>) -> Result<Self> {
        let first = reports
            .first()
            .ok_or_else(|| Error::InvalidInput("no reports to combine".into()))?;
        let (reference, variants, settings) = (first.reference, first.variants.clone(), first.settings);
        let mut per_target = Vec::new();
        let mut skipped = Vec::new();
        let mut seeds = Vec::new();
        let mut offset = 0;
        for report in reports {
            if report.reference != reference || report.variants != variants {
                return Err(Error::InvalidInput("reports differ in reference or variants".into()));
            }
            let span = report
                .per_target
                .iter()
                .map(|r| r.replicate)
                .chain(report.skipped.iter().map(|s| s.replicate))
                .max()
                .map_or(1, |m| m + 1);
            per_target.extend(report.per_target.into_iter().map(|mut r| {
                r.replicate += offset;
                r
            }));
            skipped.extend(report.skipped.into_iter().map(|mut s| {
                s.replicate += offset;
                s
            }));
            seeds.extend(report.seeds);
            offset += span;
        }
        Ok(Self::from_records(reference, &variants, settings, per_target, skipped, seeds))
    }

    pub fn medians_for(&self, variant: &str) -> Vec<&VariantMedian> {
        self.per_dataset.iter().filter(|m| m.variant == variant).collect()
    }
}

/// A cluster model fit once and shared across targets, with the panel rows
/// it covers.
struct SharedModel {
    model: ClusterModel,
    rows: Vec<usize>,
    donors: Matrix,
}

struct TargetJob<'a> {
    values: &'a Matrix,
    split: InterventionSplit,
    unit_ids: &'a [String],
    target: usize,
    /// Panel rows available as donors.
    pool: &'a [usize],
    reference: &'a [f64],
    truth: Option<&'a [usize]>,
    replicate: usize,
    noise_level: Option<f64>,
    seed: u64,
}

enum TargetOutcome {
    Done(Vec<TargetRecord>),
    Skipped(Vec<SkippedTarget>),
}

struct VariantRun {
    estimate: EffectEstimate,
    fit: ScFit,
    /// Panel rows of the donors used, aligned with the weights.
    donors: Vec<usize>,
}

fn paired_cluster(variants: &[MethodVariant], v: &MethodVariant) -> Option<usize> {
    variants
        .iter()
        .position(|c| c.name == VariantName::ClusterSc && c.reg.method == v.reg.method)
        .or_else(|| variants.iter().position(|c| c.name == VariantName::ClusterSc))
}

fn check_variants(variants: &[MethodVariant]) -> Result<()> {
    if variants.is_empty() {
        return Err(Error::InvalidParams("no method variants given".into()));
    }
    for v in variants {
        v.reg.validate()?;
        v.rule.validate()?;
        if v.name == VariantName::ScRandomSubset && paired_cluster(variants, v).is_none() {
            return Err(Error::InvalidParams(
                "sc_random_subset needs a cluster_sc variant to fix its subset size".into(),
            ));
        }
    }
    let mut labels: Vec<String> = variants.iter().map(MethodVariant::label).collect();
    labels.sort();
    labels.dedup();
    if labels.len() != variants.len() {
        return Err(Error::InvalidParams("variant labels must be distinct".into()));
    }
    Ok(())
}

fn run_target(
    job: &TargetJob<'_>,
    variants: &[MethodVariant],
    settings: &PlaceboSettings,
    shared: &[Option<SharedModel>],
) -> Result<TargetOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
    let pool_matrix = job.values.select_rows(job.pool)?;
    let target_full = job.values.row(job.target);
    let mut runs: Vec<Option<VariantRun>> = (0..variants.len()).map(|_| None).collect();

    // cluster variants first: random-subset baselines take their sizes
    let order = (0..variants.len())
        .filter(|&i| variants[i].name == VariantName::ClusterSc)
        .chain((0..variants.len()).filter(|&i| variants[i].name != VariantName::ClusterSc));
    for i in order {
        let v = &variants[i];
        let outcome = match v.name {
            VariantName::ScFull => sc_full(&pool_matrix, &job.split, target_full, v.rule, &v.reg)
                .map(|(estimate, fit)| VariantRun {
                    donors: fit.donor_ids.iter().map(|&d| job.pool[d]).collect(),
                    estimate,
                    fit,
                }),
            VariantName::ClusterSc => match &shared[i] {
                Some(sm) => {
                    let exclude = sm.rows.iter().position(|&r| r == job.target);
                    cluster_sc_with_model(
                        &sm.donors,
                        &job.split,
                        target_full,
                        &sm.model,
                        v.rule,
                        &v.reg,
                        &settings.cluster,
                        exclude,
                    )
                    .map(|(estimate, fit)| VariantRun {
                        donors: fit.donor_ids.iter().map(|&d| sm.rows[d]).collect(),
                        estimate,
                        fit,
                    })
                }
                None => cluster_sc(
                    &pool_matrix,
                    &job.split,
                    target_full,
                    v.rule,
                    v.k,
                    &v.reg,
                    &settings.cluster,
                    &mut rng,
                )
                .map(|(estimate, fit, _)| VariantRun {
                    donors: fit.donor_ids.iter().map(|&d| job.pool[d]).collect(),
                    estimate,
                    fit,
                }),
            },
            VariantName::ScRandomSubset => {
                let c = paired_cluster(variants, v).expect("checked by check_variants");
                let size = runs[c]
                    .as_ref()
                    .map(|r| r.donors.len())
                    .expect("cluster variants run first");
                let idx = random_subset_variant(&pool_matrix, size, &mut rng)?;
                let subset = pool_matrix.select_rows(&idx)?;
                sc_full(&subset, &job.split, target_full, v.rule, &v.reg).map(|(estimate, mut fit)| {
                    fit.donor_ids = idx.clone();
                    fit.weights.donor_ids = idx.clone();
                    VariantRun {
                        donors: idx.iter().map(|&d| job.pool[d]).collect(),
                        estimate,
                        fit,
                    }
                })
            }
        };
        match outcome {
            Ok(run) => runs[i] = Some(run),
            Err(e @ Error::DegenerateCluster { .. }) => {
                return Ok(TargetOutcome::Skipped(vec![SkippedTarget {
                    replicate: job.replicate,
                    target_id: job.target,
                    variant: v.label(),
                    reason: e.to_string(),
                }]));
            }
            Err(e) => return Err(e),
        }
    }

    // labels with the target masked out so recall counts only pool members
    let masked: Option<Vec<usize>> = job.truth.map(|t| {
        let mut m = t.to_vec();
        m[job.target] = usize::MAX;
        m
    });
    let target_group = job.truth.map(|t| t[job.target]);
    let split = job.split;
    let mut records = Vec::with_capacity(variants.len());
    for (v, run) in variants.iter().zip(runs) {
        let run = run.expect("every variant ran");
        let pre_mse = mse(&run.estimate.fitted_pre, split.pre(job.reference))?;
        let post_mse = mse(&run.estimate.counterfactual_post, split.post(job.reference))?;
        let (mut active_count, mut active_precision, mut active_recall) = (None, None, None);
        if v.reg.method == Method::Lasso {
            // positions within the fit, mapped back to panel rows
            let positional = WeightVector {
                donor_ids: (0..run.donors.len()).collect(),
                ..run.fit.weights.clone()
            };
            let active: Vec<usize> = active_set(&positional, settings.active_tol)
                .into_iter()
                .map(|p| run.donors[p])
                .collect();
            active_count = Some(active.len());
            if let (Some(labels), Some(g), false) = (&masked, target_group, active.is_empty()) {
                let (p, r) = donor_selection_scores(&active, labels, g)?;
                active_precision = Some(p);
                active_recall = Some(r);
            }
        }
        let (mut selection_precision, mut selection_recall) = (None, None);
        if v.name == VariantName::ClusterSc {
            if let (Some(labels), Some(g)) = (&masked, target_group) {
                let (p, r) = donor_selection_scores(&run.donors, labels, g)?;
                selection_precision = Some(p);
                selection_recall = Some(r);
            }
        }
        records.push(TargetRecord {
            replicate: job.replicate,
            noise_level: job.noise_level,
            target_id: job.target,
            unit_id: job.unit_ids[job.target].clone(),
            variant: v.label(),
            seed: job.seed,
            pre_mse,
            post_mse,
            selected_donor_count: run.donors.len(),
            cluster_label: run.fit.cluster_label,
            rank_used: run.fit.rank_used,
            converged: run.fit.weights.converged,
            active_donor_count: active_count,
            active_donor_precision: active_precision,
            active_donor_recall: active_recall,
            selection_precision,
            selection_recall,
        });
    }
    Ok(TargetOutcome::Done(records))
}

fn fit_shared_models<R: Rng + ?Sized>(
    values: &Matrix,
    split: &InterventionSplit,
    rows: &[usize],
    variants: &[MethodVariant],
    settings: &PlaceboSettings,
    rng: &mut R,
) -> Result<Vec<Option<SharedModel>>> {
    let donors = values.select_rows(rows)?;
    let pre = donors.col_range(0, split.t0)?;
    variants
        .iter()
        .map(|v| {
            if v.name != VariantName::ClusterSc {
                return Ok(None);
            }
            let mut sub = ChaCha8Rng::seed_from_u64(rng.next_u64());
            let model = fit_cluster_model(&pre, v.rule, v.k, &settings.cluster.kmeans, &mut sub)?;
            Ok(Some(SharedModel {
                model,
                rows: rows.to_vec(),
                donors: donors.clone(),
            }))
        })
        .collect()
}

fn collect_outcomes(outcomes: Vec<Result<TargetOutcome>>) -> Result<(Vec<TargetRecord>, Vec<SkippedTarget>)> {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o? {
            TargetOutcome::Done(r) => records.extend(r),
            TargetOutcome::Skipped(s) => skipped.extend(s),
        }
    }
    Ok((records, skipped))
}

/// Leave-one-out placebo over a sampled share of group A: each target is
/// removed from the pool and predicted from the rest. Errors are measured
/// against the target's noiseless signal.
pub fn leave_one_out_placebo<R: Rng + ?Sized>(
    dataset: &SyntheticDataset,
    target_fraction: f64,
    variants: &[MethodVariant],
    settings: &PlaceboSettings,
    rng: &mut R,
) -> Result<PlaceboReport> {
    if !(target_fraction > 0.0 && target_fraction <= 1.0) {
        return Err(Error::InvalidParams(format!(
            "target fraction {target_fraction} outside (0, 1]"
        )));
    }
    check_variants(variants)?;
    let panel = &dataset.panel;
    let group_a = dataset.group_members(0);
    if group_a.is_empty() {
        return Err(Error::InvalidInput("dataset has no group A units".into()));
    }
    let m = ((target_fraction * group_a.len() as f64).round() as usize).clamp(1, group_a.len());
    let mut targets: Vec<usize> = sample(rng, group_a.len(), m).into_iter().map(|i| group_a[i]).collect();
    targets.sort_unstable();

    let all_rows: Vec<usize> = (0..panel.n_units()).collect();
    let shared = match settings.fit_mode {
        ClusterFitMode::PerPool => fit_shared_models(&panel.values, &panel.split, &all_rows, variants, settings, rng)?,
        ClusterFitMode::PerTarget => variants.iter().map(|_| None).collect(),
    };
    let seeds: Vec<u64> = targets.iter().map(|_| rng.next_u64()).collect();
    let pools: Vec<Vec<usize>> = targets
        .iter()
        .map(|&t| all_rows.iter().copied().filter(|&i| i != t).collect())
        .collect();
    let noise_level = Some(dataset.params.noise.level());
    let outcomes: Vec<Result<TargetOutcome>> = targets
        .par_iter()
        .zip(&seeds)
        .zip(&pools)
        .map(|((&target, &seed), pool)| {
            let job = TargetJob {
                values: &panel.values,
                split: panel.split,
                unit_ids: &panel.unit_ids,
                target,
                pool,
                reference: dataset.true_signal.row(target),
                truth: Some(&dataset.group_labels),
                replicate: 0,
                noise_level,
                seed,
            };
            run_target(&job, variants, settings, &shared)
        })
        .collect();
    let (records, skipped) = collect_outcomes(outcomes)?;
    Ok(PlaceboReport::from_records(
        ErrorReference::TrueSignal,
        variants,
        *settings,
        records,
        skipped,
        dataset.seed.into_iter().collect(),
    ))
}

/// Repeated random donor/target splits of an observed panel. Errors are
/// measured against the observations. The donor pool is fixed within an
/// iteration, so each cluster variant fits its model once per iteration.
pub fn split_placebo<R: Rng + ?Sized>(
    panel: &TimePanel,
    train_fraction: f64,
    iterations: usize,
    variants: &[MethodVariant],
    settings: &PlaceboSettings,
    rng: &mut R,
) -> Result<PlaceboReport> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParams(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    if iterations == 0 {
        return Err(Error::InvalidParams("iterations must be at least 1".into()));
    }
    check_variants(variants)?;
    let n = panel.n_units();
    if n < 2 {
        return Err(Error::InvalidInput("split placebo needs at least 2 units".into()));
    }
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for it in 0..iterations {
        let perm = sample(rng, n, n).into_vec();
        let mut donors = perm[..n_train].to_vec();
        let mut targets = perm[n_train..].to_vec();
        donors.sort_unstable();
        targets.sort_unstable();
        let shared = fit_shared_models(&panel.values, &panel.split, &donors, variants, settings, rng)?;
        let seeds: Vec<u64> = targets.iter().map(|_| rng.next_u64()).collect();
        let outcomes: Vec<Result<TargetOutcome>> = targets
            .par_iter()
            .zip(&seeds)
            .map(|(&target, &seed)| {
                let job = TargetJob {
                    values: &panel.values,
                    split: panel.split,
                    unit_ids: &panel.unit_ids,
                    target,
                    pool: &donors,
                    reference: panel.values.row(target),
                    truth: None,
                    replicate: it,
                    noise_level: None,
                    seed,
                };
                run_target(&job, variants, settings, &shared)
            })
            .collect();
        let (r, s) = collect_outcomes(outcomes)?;
        records.extend(r);
        skipped.extend(s);
    }
    Ok(PlaceboReport::from_records(
        ErrorReference::Observed,
        variants,
        *settings,
        records,
        skipped,
        Vec::new(),
    ))
}

/// Leave-one-out placebo over `datasets` fresh datasets per noise level.
/// Replicates are numbered level by level; each dataset and harness run
/// takes its own seed from `rng`.
pub fn synthetic_study<R: Rng + ?Sized>(
    params: &DatasetParams,
    noise_levels: &[f64],
    datasets: usize,
    target_fraction: f64,
    variants: &[MethodVariant],
    settings: &PlaceboSettings,
    rng: &mut R,
) -> Result<PlaceboReport> {
    if datasets == 0 || noise_levels.is_empty() {
        return Err(Error::InvalidParams("need at least one noise level and dataset".into()));
    }
    let mut reports = Vec::with_capacity(noise_levels.len() * datasets);
    for &level in noise_levels {
        let cell = DatasetParams {
            noise: params.noise.with_level(level),
            ..params.clone()
        };
        for _ in 0..datasets {
            let ds = gen_dataset_seeded(&cell, rng.next_u64())?;
            let mut harness = ChaCha8Rng::seed_from_u64(rng.next_u64());
            reports.push(leave_one_out_placebo(&ds, target_fraction, variants, settings, &mut harness)?);
        }
    }
    PlaceboReport::combine(reports)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapParams {
    pub n: usize,
    pub n_a: usize,
    pub t_count: usize,
    pub rank_r: usize,
    pub noise: NoiseSpec,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapExperimentResult {
    pub params: GapParams,
    pub empirical_mean_gap: f64,
    pub standard_error: f64,
    /// `s (√n − √n_a − 2√T)`; only for Gaussian noise.
    pub theoretical_bound: Option<f64>,
    /// Whether `n_a < n + 4T − 4√(nT)` holds.
    pub bound_precondition_holds: bool,
    pub per_trial: Vec<f64>,
    pub trial_seeds: Vec<u64>,
}

pub fn gaussian_gap_bound(s: f64, n: usize, n_a: usize, t_count: usize) -> f64 {
    s * ((n as f64).sqrt() - (n_a as f64).sqrt() - 2.0 * (t_count as f64).sqrt())
}

pub fn gap_bound_precondition(n: usize, n_a: usize, t_count: usize) -> bool {
    let (n, t) = (n as f64, t_count as f64);
    (n_a as f64) < n + 4.0 * t - 4.0 * (n * t).sqrt()
}

fn singular_value(m: &Matrix, index: usize) -> Result<f64> {
    Ok(svd(m)?.sigma.get(index).copied().unwrap_or(0.0))
}

fn gap_trial(params: &GapParams, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = SignalSpec {
        rank_r_s: params.rank_r,
        ..SignalSpec::group_a()
    };
    let signal = gen_group(&spec, params.n, params.t_count, &mut rng)?;
    let x = add_noise(&signal, &params.noise, &mut rng)?;
    let rows: Vec<usize> = (0..params.n_a).collect();
    let a = x.select_rows(&rows)?;
    Ok(singular_value(&x, params.rank_r)? - singular_value(&a, params.rank_r)?)
}

/// Per trial: a fresh rank-r signal plus noise, and the gap
/// `σ_{r+1}(X) − σ_{r+1}(A)` with `A` the first `n_a` rows.
pub fn singular_gap_experiment<R: Rng + ?Sized>(params: &GapParams, rng: &mut R) -> Result<GapExperimentResult> {
    if params.trials == 0 {
        return Err(Error::InvalidParams("trials must be at least 1".into()));
    }
    if params.rank_r == 0 || params.rank_r >= params.t_count {
        return Err(Error::InvalidParams(format!(
            "rank {} must lie in 1..{}",
            params.rank_r, params.t_count
        )));
    }
    if params.n_a == 0 || params.n_a >= params.n {
        return Err(Error::InvalidParams(format!(
            "subset size {} must lie in 1..{}",
            params.n_a, params.n
        )));
    }
    params.noise.validate()?;
    let trial_seeds: Vec<u64> = (0..params.trials).map(|_| rng.next_u64()).collect();
    let per_trial: Vec<f64> = trial_seeds
        .par_iter()
        .map(|&s| gap_trial(params, s))
        .collect::<Result<_>>()?;
    let t = per_trial.len() as f64;
    let mean = per_trial.iter().sum::<f64>() / t;
    let standard_error = if per_trial.len() > 1 {
        let var = per_trial.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (t - 1.0);
        (var / t).sqrt()
    } else {
        0.0
    };
    let theoretical_bound = match params.noise {
        NoiseSpec::Gaussian { s } => Some(gaussian_gap_bound(s, params.n, params.n_a, params.t_count)),
        _ => None,
    };
    Ok(GapExperimentResult {
        params: *params,
        empirical_mean_gap: mean,
        standard_error,
        theoretical_bound,
        bound_precondition_holds: gap_bound_precondition(params.n, params.n_a, params.t_count),
        per_trial,
        trial_seeds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryCell {
    pub noise_level: f64,
    pub mean_misassignment: f64,
    /// Share of datasets recovered without a single misassigned unit.
    pub exact_recovery_fraction: f64,
    pub per_dataset: Vec<f64>,
    pub dataset_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryTable {
    pub params: DatasetParams,
    pub rule: RankRule,
    pub k: KChoice,
    pub cells: Vec<RecoveryCell>,
    /// Rank correlation of noise level and mean misassignment.
    pub spearman_rho: Option<f64>,
}

fn recovery_trial(
    params: &DatasetParams,
    seed: u64,
    rule: RankRule,
    k: KChoice,
    opts: &KMeansOptions,
) -> Result<f64> {
    let ds = gen_dataset_seeded(params, seed)?;
    let pre = ds.panel.values.col_range(0, params.t0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let model = fit_cluster_model(&pre, rule, k, opts, &mut rng)?;
    let truth = Partition::new(ds.group_labels.clone(), 2)?;
    let d = partition_symmetric_difference(&model.partition(), &truth)?;
    Ok(d as f64 / (2 * ds.group_labels.len()) as f64)
}

/// Fraction of units misassigned by the cluster model, per noise level.
pub fn cluster_recovery_experiment<R: Rng + ?Sized>(
    params: &DatasetParams,
    noise_levels: &[f64],
    datasets_per_cell: usize,
    rule: RankRule,
    k: KChoice,
    opts: &KMeansOptions,
    rng: &mut R,
) -> Result<RecoveryTable> {
    if datasets_per_cell == 0 || noise_levels.is_empty() {
        return Err(Error::InvalidParams("need at least one noise level and dataset".into()));
    }
    let mut cells = Vec::with_capacity(noise_levels.len());
    for &level in noise_levels {
        let cell_params = DatasetParams {
            noise: params.noise.with_level(level),
            ..params.clone()
        };
        cell_params.noise.validate()?;
        let seeds: Vec<u64> = (0..datasets_per_cell).map(|_| rng.next_u64()).collect();
        let per_dataset: Vec<f64> = seeds
            .par_iter()
            .map(|&s| recovery_trial(&cell_params, s, rule, k, opts))
            .collect::<Result<_>>()?;
        let mean = per_dataset.iter().sum::<f64>() / per_dataset.len() as f64;
        let exact = per_dataset.iter().filter(|&&m| m == 0.0).count() as f64 / per_dataset.len() as f64;
        cells.push(RecoveryCell {
            noise_level: level,
            mean_misassignment: mean,
            exact_recovery_fraction: exact,
            per_dataset,
            dataset_seeds: seeds,
        });
    }
    let levels: Vec<f64> = cells.iter().map(|c| c.noise_level).collect();
    let means: Vec<f64> = cells.iter().map(|c| c.mean_misassignment).collect();
    Ok(RecoveryTable {
        params: params.clone(),
        rule,
        k,
        spearman_rho: spearman(&levels, &means),
        cells,
    })
}
