//! Synthetic-control learn, project and infer steps, with and without the
//! donor-clustering preselection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{assign_target, fit_cluster_model, ClusterModel, KChoice, KMeansOptions};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rank::{select_rank, RankRule};
use crate::regression::{fit, RegressionSpec, WeightVector};
use crate::svd::{svd, SvdFactors};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionSplit {
    pub t0: usize,
    pub t_total: usize,
}

impl InterventionSplit {
    pub fn new(t0: usize, t_total: usize) -> Result<Self> {
        if t0 == 0 || t0 >= t_total {
            return Err(Error::InvalidParams(format!(
                "intervention split needs 1 <= t0 < T, got t0 = {t0}, T = {t_total}"
            )));
        }
        Ok(Self { t0, t_total })
    }

    pub fn post_len(&self) -> usize {
        self.t_total - self.t0
    }

    pub fn pre<'a>(&self, series: &'a [f64]) -> &'a [f64] {
        &series[..self.t0]
    }

    pub fn post<'a>(&self, series: &'a [f64]) -> &'a [f64] {
        &series[self.t0..]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScFit {
    /// Weights keyed by row index into the donor matrix given to the
    /// caller-facing entry point.
    pub weights: WeightVector,
    pub donor_ids: Vec<usize>,
    /// Thresholded donors over the full window, `n_sel x T`.
    pub denoised_donors: Matrix,
    pub rank_used: usize,
    pub cluster_label: Option<usize>,
    pub regression: RegressionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub counterfactual_post: Vec<f64>,
    pub observed_post: Vec<f64>,
    pub effect: Vec<f64>,
    pub pre_fit_residual: Vec<f64>,
    /// In-sample fit `(M̂⁻)ᵀ f`, length `t0`.
    pub fitted_pre: Vec<f64>,
}

/// Where the thresholding rank of the selected cluster comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterRank {
    /// Apply the rank rule to the selected donors' own spectrum.
    #[default]
    PerCluster,
    /// Reuse the rank chosen for the clustering embedding of the pool.
    Pool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClusterScOptions {
    pub kmeans: KMeansOptions,
    pub cluster_rank: ClusterRank,
}

fn check_window(donors: &Matrix, split: &InterventionSplit) -> Result<()> {
    if donors.cols() != split.t_total {
        return Err(Error::Shape(format!(
            "donor matrix has {} periods, split expects {}",
            donors.cols(),
            split.t_total
        )));
    }
    Ok(())
}

/// Truncates `factors` at rank `r` and regresses `target_pre` on the
/// pre-intervention block of the result.
fn learn_at_rank(
    split: &InterventionSplit,
    target_pre: &[f64],
    r: usize,
    reg: &RegressionSpec,
    factors: SvdFactors,
) -> Result<ScFit> {
    let denoised = factors.reconstruct(r);
    let design = denoised.col_range(0, split.t0)?.transpose();
    let weights = fit(&design, target_pre, reg)?;
    Ok(ScFit {
        donor_ids: weights.donor_ids.clone(),
        weights,
        denoised_donors: denoised,
        rank_used: r,
        cluster_label: None,
        regression: *reg,
    })
}

fn check_target_pre(split: &InterventionSplit, target_pre: &[f64]) -> Result<()> {
    if target_pre.len() != split.t0 {
        return Err(Error::Shape(format!(
            "target pre-period has length {}, expected t0 = {}",
            target_pre.len(),
            split.t0
        )));
    }
    Ok(())
}

pub fn sc_learn(
    donors: &Matrix,
    split: &InterventionSplit,
    target_pre: &[f64],
    rule: RankRule,
    reg: &RegressionSpec,
) -> Result<ScFit> {
    check_window(donors, split)?;
    check_target_pre(split, target_pre)?;
    let factors = svd(donors)?;
    let r = select_rank(&factors.sigma, rule)?;
    learn_at_rank(split, target_pre, r, reg, factors)
}

/// Like [`sc_learn`] with the rank given directly.
pub fn sc_learn_with_rank(
    donors: &Matrix,
    split: &InterventionSplit,
    target_pre: &[f64],
    r: usize,
    reg: &RegressionSpec,
) -> Result<ScFit> {
    check_window(donors, split)?;
    check_target_pre(split, target_pre)?;
    let max = donors.rows().min(donors.cols());
    if r == 0 || r > max {
        return Err(Error::InvalidRank { rank: r, max });
    }
    let factors = svd(donors)?;
    learn_at_rank(split, target_pre, r, reg, factors)
}

/// Counterfactual for the post period: `(M̂⁺)ᵀ f`.
pub fn sc_project(fit: &ScFit, split: &InterventionSplit) -> Result<Vec<f64>> {
    check_window(&fit.denoised_donors, split)?;
    let post = fit.denoised_donors.col_range(split.t0, split.t_total)?;
    post.tr_mul_vec(&fit.weights.values)
}

pub fn sc_infer(fit: &ScFit, split: &InterventionSplit, target_full: &[f64]) -> Result<EffectEstimate> {
    if target_full.len() != split.t_total {
        return Err(Error::Shape(format!(
            "target has length {}, expected T = {}",
            target_full.len(),
            split.t_total
        )));
    }
    if target_full.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("target has non-finite entries".into()));
    }
    let counterfactual_post = sc_project(fit, split)?;
    let pre = fit.denoised_donors.col_range(0, split.t0)?;
    let fitted_pre = pre.tr_mul_vec(&fit.weights.values)?;
    let observed_post = split.post(target_full).to_vec();
    let effect = observed_post
        .iter()
        .zip(&counterfactual_post)
        .map(|(o, c)| o - c)
        .collect();
    let pre_fit_residual = split
        .pre(target_full)
        .iter()
        .zip(&fitted_pre)
        .map(|(y, f)| y - f)
        .collect();
    Ok(EffectEstimate {
        counterfactual_post,
        observed_post,
        effect,
        pre_fit_residual,
        fitted_pre,
    })
}

/// Plain synthetic control over the whole pool: learn, project, infer.
pub fn sc_full(
    donors: &Matrix,
    split: &InterventionSplit,
    target_full: &[f64],
    rule: RankRule,
    reg: &RegressionSpec,
) -> Result<(EffectEstimate, ScFit)> {
    check_target_full(split, target_full)?;
    let fit = sc_learn(donors, split, split.pre(target_full), rule, reg)?;
    let estimate = sc_infer(&fit, split, target_full)?;
    Ok((estimate, fit))
}

fn check_target_full(split: &InterventionSplit, target_full: &[f64]) -> Result<()> {
    if target_full.len() != split.t_total {
        return Err(Error::Shape(format!(
            "target has length {}, expected T = {}",
            target_full.len(),
            split.t_total
        )));
    }
    Ok(())
}

/// Clusters the pre-intervention donors, assigns the target to the nearest
/// cluster from its pre-intervention series, and runs synthetic control on
/// that cluster's donors over the full window.
#[allow(clippy::too_many_arguments)]
pub fn cluster_sc<R: Rng + ?Sized>(
    donors: &Matrix,
    split: &InterventionSplit,
    target_full: &[f64],
    rule: RankRule,
    k: KChoice,
    reg: &RegressionSpec,
    options: &ClusterScOptions,
    rng: &mut R,
) -> Result<(EffectEstimate, ScFit, ClusterModel)> {
    check_window(donors, split)?;
    check_target_full(split, target_full)?;
    if donors.rows() < 2 {
        return Err(Error::DegenerateInput(format!(
            "cluster synthetic control needs at least 2 donors, got {}",
            donors.rows()
        )));
    }
    let pre = donors.col_range(0, split.t0)?;
    let model = fit_cluster_model(&pre, rule, k, &options.kmeans, rng)?;
    let (estimate, fit) =
        cluster_sc_with_model(donors, split, target_full, &model, rule, reg, options, None)?;
    Ok((estimate, fit, model))
}

/// The selection and synthetic-control steps of [`cluster_sc`] against an
/// already fitted model. `exclude` drops one donor row from the selected
/// cluster (the target itself when the model was fit with it included).
#[allow(clippy::too_many_arguments)]
pub fn cluster_sc_with_model(
    donors: &Matrix,
    split: &InterventionSplit,
    target_full: &[f64],
    model: &ClusterModel,
    rule: RankRule,
    reg: &RegressionSpec,
    options: &ClusterScOptions,
    exclude: Option<usize>,
) -> Result<(EffectEstimate, ScFit)> {
    check_window(donors, split)?;
    check_target_full(split, target_full)?;
    if model.assignments.len() != donors.rows() {
        return Err(Error::Shape(format!(
            "cluster model covers {} donors, matrix has {}",
            model.assignments.len(),
            donors.rows()
        )));
    }
    let label = assign_target(model, split.pre(target_full))?;
    let selected: Vec<usize> = model
        .members(label)
        .into_iter()
        .filter(|&i| Some(i) != exclude)
        .collect();
    if selected.len() < 2 {
        return Err(Error::DegenerateCluster {
            label,
            size: selected.len(),
        });
    }
    let subset = donors.select_rows(&selected)?;
    let target_pre = split.pre(target_full);
    let mut fit = match options.cluster_rank {
        ClusterRank::PerCluster => sc_learn(&subset, split, target_pre, rule, reg)?,
        ClusterRank::Pool => {
            let r = model.rank_r.min(subset.rows().min(subset.cols()));
            sc_learn_with_rank(&subset, split, target_pre, r, reg)?
        }
    };
    fit.weights.donor_ids = selected.clone();
    fit.donor_ids = selected;
    fit.cluster_label = Some(label);
    let estimate = sc_infer(&fit, split, target_full)?;
    Ok((estimate, fit))
}
