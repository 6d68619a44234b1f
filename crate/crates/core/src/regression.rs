//! Vertical regression of a target's pre-intervention series on donor
//! series: time points are samples and donors are regressors.
//!
//! No intercept and no simplex constraint are imposed. The three solvers:
//!
//! * **OLS**: minimum-norm least squares, `f = D⁺ y`.
//! * **Ridge**: minimizes `‖y − D f‖² + λ ‖f‖²`.
//! * **Lasso**: minimizes `(1 / (2 T0)) ‖y − D f‖² + λ ‖f‖₁` by cyclic
//!   coordinate descent, stopping once the largest absolute coordinate
//!   update in a sweep falls below `lasso_tol`.
//!
//! OLS and ridge both go through the thin SVD of the design, which is
//! `T0 x n` with `n` typically far larger than `T0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::svd::svd;

/// Singular values of the design below this fraction of the largest are
/// dropped from the pseudoinverse.
const PINV_RTOL: f64 = 1e-10;

pub const DEFAULT_LASSO_TOL: f64 = 1e-8;
pub const DEFAULT_LASSO_MAX_ITER: usize = 10_000;
pub const DEFAULT_ACTIVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ols,
    Ridge,
    Lasso,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ols => "ols",
            Method::Ridge => "ridge",
            Method::Lasso => "lasso",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ols" => Ok(Method::Ols),
            "ridge" => Ok(Method::Ridge),
            "lasso" => Ok(Method::Lasso),
            other => Err(Error::InvalidParams(format!(
                "unknown regression method '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub method: Method,
    /// Penalty weight; ignored for OLS.
    pub lambda: f64,
    pub lasso_tol: f64,
    pub lasso_max_iter: usize,
}

impl RegressionSpec {
    pub fn ols() -> Self {
        Self::with_method(Method::Ols, 0.0)
    }

    pub fn ridge(lambda: f64) -> Self {
        Self::with_method(Method::Ridge, lambda)
    }

    pub fn lasso(lambda: f64) -> Self {
        Self::with_method(Method::Lasso, lambda)
    }

    pub fn with_method(method: Method, lambda: f64) -> Self {
        Self {
            method,
            lambda,
            lasso_tol: DEFAULT_LASSO_TOL,
            lasso_max_iter: DEFAULT_LASSO_MAX_ITER,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParams(format!(
                "lambda must be finite and nonnegative, got {}",
                self.lambda
            )));
        }
        if !(self.lasso_tol > 0.0) {
            return Err(Error::InvalidParams("lasso_tol must be positive".into()));
        }
        if self.lasso_max_iter == 0 {
            return Err(Error::InvalidParams("lasso_max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Combination weights over donors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub values: Vec<f64>,
    /// Donor identifiers aligned with `values`; row indices into the donor
    /// matrix the weights refer to.
    pub donor_ids: Vec<usize>,
    /// False only when coordinate descent hit its iteration cap.
    pub converged: bool,
    pub iterations: usize,
}

impl WeightVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn l2_norm(&self) -> f64 {
        dot(&self.values, &self.values).sqrt()
    }
}

/// Fits weights `f` so that `design · f ≈ target`. `design` is `T0 x n`.
pub fn fit(design: &Matrix, target: &[f64], spec: &RegressionSpec) -> Result<WeightVector> {
    spec.validate()?;
    if design.rows() != target.len() {
        return Err(Error::Shape(format!(
            "design has {} rows but target has length {}",
            design.rows(),
            target.len()
        )));
    }
    if target.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("target has non-finite entries".into()));
    }
    let n = design.cols();
    let (values, converged, iterations) = match spec.method {
        Method::Ols => (spectral_solve(design, target, 0.0)?, true, 1),
        Method::Ridge => (spectral_solve(design, target, spec.lambda)?, true, 1),
        Method::Lasso => lasso_cd(design, target, spec.lambda, spec.lasso_tol, spec.lasso_max_iter),
    };
    Ok(WeightVector {
        values,
        donor_ids: (0..n).collect(),
        converged,
        iterations,
    })
}

/// `f = V diag(σ / (σ² + λ)) Uᵀ y`; with `λ = 0` this is the minimum-norm
/// least-squares solution.
fn spectral_solve(design: &Matrix, target: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let factors = svd(design)?;
    let s1 = factors.sigma.first().copied().unwrap_or(0.0);
    let mut f = vec![0.0; design.cols()];
    for (k, &s) in factors.sigma.iter().enumerate() {
        if s <= PINV_RTOL * s1 || s == 0.0 {
            continue;
        }
        let uty: f64 = (0..design.rows())
            .map(|i| factors.u.get(i, k) * target[i])
            .sum();
        let coeff = uty * s / (s * s + lambda);
        for (j, fj) in f.iter_mut().enumerate() {
            *fj += coeff * factors.v.get(j, k);
        }
    }
    Ok(f)
}

#[inline]
fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

fn lasso_cd(
    design: &Matrix,
    target: &[f64],
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, bool, usize) {
    let t0 = design.rows() as f64;
    let n = design.cols();
    // donors become contiguous rows of the transposed design
    let cols = design.transpose();
    let norms: Vec<f64> = (0..n).map(|j| dot(cols.row(j), cols.row(j)) / t0).collect();
    let mut f = vec![0.0; n];
    let mut residual = target.to_vec();

    let update = |j: usize, f: &mut [f64], residual: &mut [f64]| -> f64 {
        if norms[j] == 0.0 {
            return 0.0;
        }
        let col = cols.row(j);
        let old = f[j];
        let rho = dot(col, residual) / t0 + norms[j] * old;
        let new = soft_threshold(rho, lambda) / norms[j];
        let delta = new - old;
        if delta != 0.0 {
            for (r, &c) in residual.iter_mut().zip(col) {
                *r -= c * delta;
            }
            f[j] = new;
        }
        delta.abs()
    };

    let mut iterations = 0;
    while iterations < max_iter {
        // full sweep over every coordinate
        iterations += 1;
        let mut max_delta = 0.0f64;
        for j in 0..n {
            max_delta = max_delta.max(update(j, &mut f, &mut residual));
        }
        if max_delta < tol {
            return (f, true, iterations);
        }
        // then settle the active set before the next full sweep
        let active: Vec<usize> = (0..n).filter(|&j| f[j] != 0.0).collect();
        while iterations < max_iter {
            iterations += 1;
            let mut max_delta = 0.0f64;
            for &j in &active {
                max_delta = max_delta.max(update(j, &mut f, &mut residual));
            }
            if max_delta < tol {
                break;
            }
        }
    }
    (f, false, iterations)
}

/// `(1 / (2 T0)) ‖y − D f‖² + λ ‖f‖₁`.
pub fn lasso_objective(design: &Matrix, target: &[f64], f: &[f64], lambda: f64) -> Result<f64> {
    let fitted = design.mul_vec(f)?;
    let rss: f64 = fitted
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let l1: f64 = f.iter().map(|v| v.abs()).sum();
    Ok(rss / (2.0 * design.rows() as f64) + lambda * l1)
}

/// Donors whose weight magnitude exceeds `tol`, in donor order.
pub fn active_set(weights: &WeightVector, tol: f64) -> Vec<usize> {
    weights
        .values
        .iter()
        .zip(&weights.donor_ids)
        .filter(|(v, _)| v.abs() > tol)
        .map(|(_, &id)| id)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn identity_design() {
        let d = Matrix::identity(2);
        let ols = fit(&d, &[2.0, 3.0], &RegressionSpec::ols()).unwrap();
        assert!(close(&ols.values, &[2.0, 3.0], 1e-14));

        // (I + I)⁻¹ y
        let ridge = fit(&d, &[2.0, 3.0], &RegressionSpec::ridge(1.0)).unwrap();
        assert!(close(&ridge.values, &[1.0, 1.5], 1e-14));

        // f_j = sign(y_j) max(|y_j| − T0 λ, 0) with T0 λ = 0.5
        let lasso = fit(&d, &[2.0, 0.5], &RegressionSpec::lasso(0.25)).unwrap();
        assert!(lasso.converged);
        assert!(close(&lasso.values, &[1.5, 0.0], 1e-12));
    }

    #[test]
    fn minimum_norm_on_wide_design() {
        // one sample, two donors: min-norm solution to f1 + f2 = 2
        let d = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let f = fit(&d, &[2.0], &RegressionSpec::ols()).unwrap();
        assert!(close(&f.values, &[1.0, 1.0], 1e-14));
    }

    #[test]
    fn shape_and_parameter_errors() {
        let d = Matrix::identity(2);
        assert!(matches!(
            fit(&d, &[1.0], &RegressionSpec::ols()),
            Err(Error::Shape(_))
        ));
        assert!(fit(&d, &[1.0, 2.0], &RegressionSpec::ridge(-1.0)).is_err());
        let mut spec = RegressionSpec::lasso(0.1);
        spec.lasso_max_iter = 0;
        assert!(fit(&d, &[1.0, 2.0], &spec).is_err());
        assert!(fit(&d, &[1.0, f64::NAN], &RegressionSpec::ols()).is_err());
    }

    #[test]
    fn lasso_iteration_cap_sets_flag() {
        let d = Matrix::from_rows(&[[1.0, 0.99], [0.99, 1.0], [1.0, 1.0]]).unwrap();
        let mut spec = RegressionSpec::lasso(1e-4);
        spec.lasso_max_iter = 1;
        spec.lasso_tol = 1e-14;
        let f = fit(&d, &[1.0, 2.0, 1.5], &spec).unwrap();
        assert!(!f.converged);
        assert_eq!(f.iterations, 1);
    }

    #[test]
    fn active_sets() {
        let w = WeightVector {
            values: vec![0.0, 0.3, 0.0],
            donor_ids: vec![4, 5, 6],
            converged: true,
            iterations: 1,
        };
        assert_eq!(active_set(&w, DEFAULT_ACTIVE_TOL), vec![5]);
        let zero = WeightVector {
            values: vec![0.0; 3],
            ..w
        };
        assert!(active_set(&zero, DEFAULT_ACTIVE_TOL).is_empty());
    }

    #[test]
    fn lasso_null_solution_above_critical_lambda() {
        let d = Matrix::from_rows(&[[1.0, 2.0, 0.5], [0.0, 1.0, -1.0], [2.0, 0.5, 1.0]]).unwrap();
        let y = [1.0, -0.5, 2.0];
        let t0 = 3.0;
        // ‖(1/T0) Dᵀ y‖_∞ computed directly
        let critical = (0..3)
            .map(|j| (0..3).map(|i| d.get(i, j) * y[i]).sum::<f64>().abs() / t0)
            .fold(0.0, f64::max);
        let above = fit(&d, &y, &RegressionSpec::lasso(critical * 1.001)).unwrap();
        assert!(active_set(&above, DEFAULT_ACTIVE_TOL).is_empty());
        let below = fit(&d, &y, &RegressionSpec::lasso(critical * 0.9)).unwrap();
        assert!(!active_set(&below, DEFAULT_ACTIVE_TOL).is_empty());
    }
}
