//! Rank selection for thresholding and spectrum diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::svd::{svd, RANK_TOL};

/// Slack on the cumulative-ratio comparison so that ratios equal to the
/// threshold in exact arithmetic are not lost to rounding.
const RATIO_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RankRule {
    /// Keep exactly `r` singular values.
    Fixed { r: usize },
    /// Smallest `r` whose cumulative share of the spectrum reaches
    /// `threshold`. Shares are of plain singular values unless `squared`.
    Energy { threshold: f64, squared: bool },
}

impl RankRule {
    pub fn fixed(r: usize) -> Self {
        RankRule::Fixed { r }
    }

    pub fn energy(threshold: f64) -> Self {
        RankRule::Energy {
            threshold,
            squared: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RankRule::Fixed { r } if r == 0 => {
                Err(Error::InvalidParams("fixed rank must be positive".into()))
            }
            RankRule::Energy { threshold, .. } if !(threshold > 0.0 && threshold <= 1.0) => {
                Err(Error::InvalidParams(format!(
                    "energy threshold {threshold} outside (0, 1]"
                )))
            }
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for RankRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RankRule::Fixed { r } => write!(f, "fixed:{r}"),
            RankRule::Energy {
                threshold,
                squared: false,
            } => write!(f, "energy:{threshold}"),
            RankRule::Energy {
                threshold,
                squared: true,
            } => write!(f, "energy2:{threshold}"),
        }
    }
}

impl std::str::FromStr for RankRule {
    type Err = Error;

    /// Parses `fixed:R`, `energy:TAU` or `energy2:TAU` (squared shares).
    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidParams(format!("rank rule '{s}' lacks ':'")))?;
        let bad = || Error::InvalidParams(format!("bad rank rule value in '{s}'"));
        let rule = match kind {
            "fixed" => RankRule::Fixed {
                r: value.parse().map_err(|_| bad())?,
            },
            "energy" => RankRule::Energy {
                threshold: value.parse().map_err(|_| bad())?,
                squared: false,
            },
            "energy2" => RankRule::Energy {
                threshold: value.parse().map_err(|_| bad())?,
                squared: true,
            },
            other => {
                return Err(Error::InvalidParams(format!(
                    "unknown rank rule kind '{other}'"
                )))
            }
        };
        rule.validate()?;
        Ok(rule)
    }
}

fn check_spectrum(sigma: &[f64]) -> Result<()> {
    if sigma.is_empty() {
        return Err(Error::InvalidInput("spectrum is empty".into()));
    }
    if sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::InvalidInput(
            "spectrum must be finite and nonnegative".into(),
        ));
    }
    if sigma.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidInput("spectrum must be nonincreasing".into()));
    }
    if sigma.iter().all(|&s| s == 0.0) {
        return Err(Error::DegenerateSpectrum);
    }
    Ok(())
}

pub fn select_rank(sigma: &[f64], rule: RankRule) -> Result<usize> {
    rule.validate()?;
    check_spectrum(sigma)?;
    match rule {
        RankRule::Fixed { r } => {
            if r > sigma.len() {
                Err(Error::InvalidRank {
                    rank: r,
                    max: sigma.len(),
                })
            } else {
                Ok(r)
            }
        }
        RankRule::Energy { threshold, squared } => {
            let weights: Vec<f64> = if squared {
                sigma.iter().map(|s| s * s).collect()
            } else {
                sigma.to_vec()
            };
            let ratios = cumulative_ratios(&weights);
            let r = ratios
                .iter()
                .position(|&c| c >= threshold - RATIO_SLACK)
                .map_or(sigma.len(), |i| i + 1);
            Ok(r)
        }
    }
}

fn cumulative_ratios(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let mut out: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w;
            acc / total
        })
        .collect();
    // pin the tail to exactly one once every nonzero value is included
    let largest = weights.iter().cloned().fold(0.0, f64::max);
    let last_nonzero = weights
        .iter()
        .rposition(|&w| w > RANK_TOL * largest)
        .unwrap_or(0);
    for c in &mut out[last_nonzero..] {
        *c = 1.0;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    /// 1-based position in the spectrum.
    pub index: usize,
    pub sigma: f64,
    pub cumulative_ratio: f64,
}

/// Singular values of `x` with their cumulative share of the total.
pub fn spectrum_report(x: &Matrix) -> Result<Vec<SpectrumRow>> {
    let sigma = svd(x)?.sigma;
    check_spectrum(&sigma)?;
    Ok(cumulative_ratios(&sigma)
        .into_iter()
        .zip(&sigma)
        .enumerate()
        .map(|(i, (cumulative_ratio, &sigma))| SpectrumRow {
            index: i + 1,
            sigma,
            cumulative_ratio,
        })
        .collect())
}
