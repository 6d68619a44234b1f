//! Synthetic two-group panels built from sinusoidal low-rank signals.

use std::f64::consts::PI;

use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Normal, StudentT};
use serde::{Deserialize, Serialize};

use crate::engine::InterventionSplit;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::panel::TimePanel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub rank_r_s: usize,
    /// Beta(a, b) amplitude distribution.
    pub alpha_dist: (f64, f64),
    /// Uniform(lo, hi) frequency distribution.
    pub omega_dist: (f64, f64),
    /// Normal(mean, sd) phase distribution.
    pub phi_dist: (f64, f64),
    /// Uniform range of the per-unit mixing weights.
    #[serde(default = "unit_interval")]
    pub weight_range: (f64, f64),
}

fn unit_interval() -> (f64, f64) {
    (0.0, 1.0)
}

impl SignalSpec {
    pub fn group_a() -> Self {
        Self {
            rank_r_s: 3,
            alpha_dist: (2.0, 2.0),
            omega_dist: (1.0, 3.0),
            phi_dist: (0.0, 1.0),
            weight_range: unit_interval(),
        }
    }

    pub fn group_b() -> Self {
        Self {
            rank_r_s: 3,
            alpha_dist: (2.0, 5.0),
            omega_dist: (3.0, 6.0),
            phi_dist: (0.0, 1.0),
            weight_range: unit_interval(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.alpha_dist;
        let (lo, hi) = self.omega_dist;
        let (mean, sd) = self.phi_dist;
        if self.rank_r_s == 0 {
            return Err(Error::InvalidParams("signal rank must be at least 1".into()));
        }
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidParams(format!("Beta({a}, {b}) needs positive parameters")));
        }
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidParams(format!("Uniform({lo}, {hi}) needs lo < hi")));
        }
        if !(sd >= 0.0 && sd.is_finite() && mean.is_finite()) {
            return Err(Error::InvalidParams(format!("Normal({mean}, {sd}) needs sd >= 0")));
        }
        let (wlo, whi) = self.weight_range;
        if !(wlo <= whi && wlo.is_finite() && whi.is_finite()) {
            return Err(Error::InvalidParams(format!("weight range [{wlo}, {whi}] is empty")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "variant")]
pub enum NoiseSpec {
    Gaussian { s: f64 },
    UniformBounded { half_width: f64 },
    StudentT { dof: u32, scale: f64 },
}

impl NoiseSpec {
    pub fn gaussian(s: f64) -> Self {
        NoiseSpec::Gaussian { s }
    }

    /// The scale parameter: `s`, the half width, or the t scale.
    pub fn level(&self) -> f64 {
        match *self {
            NoiseSpec::Gaussian { s } => s,
            NoiseSpec::UniformBounded { half_width } => half_width,
            NoiseSpec::StudentT { scale, .. } => scale,
        }
    }

    /// Per-entry variance of the noise.
    pub fn variance(&self) -> f64 {
        match *self {
            NoiseSpec::Gaussian { s } => s * s,
            NoiseSpec::UniformBounded { half_width } => half_width * half_width / 3.0,
            NoiseSpec::StudentT { dof, scale } => {
                let d = f64::from(dof);
                scale * scale * d / (d - 2.0)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let level = self.level();
        if !(level >= 0.0 && level.is_finite()) {
            return Err(Error::InvalidParams(format!("noise scale {level} must be finite and >= 0")));
        }
        if let NoiseSpec::StudentT { dof, .. } = *self {
            if dof < 3 {
                return Err(Error::InvalidParams(format!(
                    "student-t noise needs dof >= 3, got {dof}"
                )));
            }
        }
        Ok(())
    }

    pub fn with_level(&self, level: f64) -> Self {
        match *self {
            NoiseSpec::Gaussian { .. } => NoiseSpec::Gaussian { s: level },
            NoiseSpec::UniformBounded { .. } => NoiseSpec::UniformBounded { half_width: level },
            NoiseSpec::StudentT { dof, .. } => NoiseSpec::StudentT { dof, scale: level },
        }
    }
}

impl std::fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            NoiseSpec::Gaussian { s } => write!(f, "gaussian:{s}"),
            NoiseSpec::UniformBounded { half_width } => write!(f, "uniform:{half_width}"),
            NoiseSpec::StudentT { dof, scale } => write!(f, "student_t:{dof}:{scale}"),
        }
    }
}

impl std::str::FromStr for NoiseSpec {
    type Err = Error;

    /// Parses `gaussian:S`, `uniform:H` or `student_t:DOF:SCALE`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidParams(format!("bad noise spec '{s}'"));
        let num = |p: &str| p.parse::<f64>().map_err(|_| bad());
        let spec = match parts.as_slice() {
            ["gaussian", v] => NoiseSpec::Gaussian { s: num(v)? },
            ["uniform", v] => NoiseSpec::UniformBounded { half_width: num(v)? },
            ["student_t", dof, v] => NoiseSpec::StudentT {
                dof: dof.parse().map_err(|_| bad())?,
                scale: num(v)?,
            },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetParams {
    pub spec_a: SignalSpec,
    pub spec_b: SignalSpec,
    pub n_a: usize,
    pub n_b: usize,
    pub t_count: usize,
    pub t0: usize,
    pub noise: NoiseSpec,
}

impl DatasetParams {
    /// Two equal groups with the default signal specs, `T = 10`, `T0 = 8`.
    pub fn two_groups(n_per_group: usize, noise: NoiseSpec) -> Self {
        Self {
            spec_a: SignalSpec::group_a(),
            spec_b: SignalSpec::group_b(),
            n_a: n_per_group,
            n_b: n_per_group,
            t_count: 10,
            t0: 8,
            noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub panel: TimePanel,
    /// 0 for group A, 1 for group B.
    pub group_labels: Vec<usize>,
    pub true_signal: Matrix,
    pub params: DatasetParams,
    pub seed: Option<u64>,
}

impl SyntheticDataset {
    pub fn group_members(&self, label: usize) -> Vec<usize> {
        (0..self.group_labels.len())
            .filter(|&i| self.group_labels[i] == label)
            .collect()
    }
}

/// `alpha sin(2π omega t + phi)` at `t = j / t_count`, `j = 1..=t_count`.
pub fn sinusoid(alpha: f64, omega: f64, phi: f64, t_count: usize) -> Vec<f64> {
    (1..=t_count)
        .map(|j| {
            let t = j as f64 / t_count as f64;
            alpha * (2.0 * PI * omega * t + phi).sin()
        })
        .collect()
}

fn dist_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidParams(e.to_string())
}

pub fn gen_sinusoid_basis<R: Rng + ?Sized>(spec: &SignalSpec, t_count: usize, rng: &mut R) -> Result<Matrix> {
    spec.validate()?;
    if t_count == 0 {
        return Err(Error::InvalidParams("t_count must be at least 1".into()));
    }
    let alpha = Beta::new(spec.alpha_dist.0, spec.alpha_dist.1).map_err(dist_err)?;
    let omega = Uniform::new(spec.omega_dist.0, spec.omega_dist.1).map_err(dist_err)?;
    let phi = Normal::new(spec.phi_dist.0, spec.phi_dist.1).map_err(dist_err)?;
    let mut entries = Vec::with_capacity(spec.rank_r_s * t_count);
    for _ in 0..spec.rank_r_s {
        let a = alpha.sample(rng);
        let w = omega.sample(rng);
        let p = phi.sample(rng);
        entries.extend(sinusoid(a, w, p, t_count));
    }
    Matrix::new(spec.rank_r_s, t_count, entries)
}

/// Rows are `wᵀ basis` with `w` uniform on `weight_range^r`, drawn per unit.
pub fn gen_group_from_basis<R: Rng + ?Sized>(
    basis: &Matrix,
    n_units: usize,
    weight_range: (f64, f64),
    rng: &mut R,
) -> Result<Matrix> {
    if n_units == 0 {
        return Err(Error::InvalidParams("group needs at least 1 unit".into()));
    }
    let r = basis.rows();
    let (lo, hi) = weight_range;
    let weights: Vec<f64> = (0..n_units * r)
        .map(|_| lo + (hi - lo) * rng.random::<f64>())
        .collect();
    Matrix::new(n_units, r, weights)?.matmul(basis)
}

pub fn gen_group<R: Rng + ?Sized>(spec: &SignalSpec, n_units: usize, t_count: usize, rng: &mut R) -> Result<Matrix> {
    let basis = gen_sinusoid_basis(spec, t_count, rng)?;
    gen_group_from_basis(&basis, n_units, spec.weight_range, rng)
}

pub fn add_noise<R: Rng + ?Sized>(signal: &Matrix, noise: &NoiseSpec, rng: &mut R) -> Result<Matrix> {
    noise.validate()?;
    let mut entries = signal.entries().to_vec();
    match *noise {
        NoiseSpec::Gaussian { s } => {
            if s > 0.0 {
                let d = Normal::new(0.0, s).map_err(dist_err)?;
                entries.iter_mut().for_each(|v| *v += d.sample(rng));
            }
        }
        NoiseSpec::UniformBounded { half_width } => {
            if half_width > 0.0 {
                let d = Uniform::new_inclusive(-half_width, half_width).map_err(dist_err)?;
                entries.iter_mut().for_each(|v| *v += d.sample(rng));
            }
        }
        NoiseSpec::StudentT { dof, scale } => {
            if scale > 0.0 {
                let d = StudentT::new(f64::from(dof)).map_err(dist_err)?;
                entries.iter_mut().for_each(|v| *v += scale * d.sample(rng));
            }
        }
    }
    Matrix::new(signal.rows(), signal.cols(), entries)
}

pub fn gen_dataset<R: Rng + ?Sized>(params: &DatasetParams, rng: &mut R) -> Result<SyntheticDataset> {
    let split = InterventionSplit::new(params.t0, params.t_count)?;
    params.noise.validate()?;
    let a = gen_group(&params.spec_a, params.n_a, params.t_count, rng)?;
    let b = gen_group(&params.spec_b, params.n_b, params.t_count, rng)?;
    let true_signal = a.vstack(&b)?;
    let observed = add_noise(&true_signal, &params.noise, rng)?;
    let unit_ids = (0..params.n_a)
        .map(|i| format!("A{i}"))
        .chain((0..params.n_b).map(|i| format!("B{i}")))
        .collect();
    let time_labels = (1..=params.t_count).map(|j| j.to_string()).collect();
    let mut group_labels = vec![0; params.n_a];
    group_labels.resize(params.n_a + params.n_b, 1);
    Ok(SyntheticDataset {
        panel: TimePanel::new(unit_ids, time_labels, observed, split)?,
        group_labels,
        true_signal,
        params: params.clone(),
        seed: None,
    })
}

/// [`gen_dataset`] driven by a ChaCha8 stream seeded with `seed`.
pub fn gen_dataset_seeded(params: &DatasetParams, seed: u64) -> Result<SyntheticDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ds = gen_dataset(params, &mut rng)?;
    ds.seed = Some(seed);
    Ok(ds)
}
