//! Thin singular value decomposition and hard singular value thresholding.
//!
//! The decomposition uses one-sided (Hestenes) Jacobi rotations on the
//! columns of the tall orientation of the input. Panels here are tall and
//! narrow (hundreds of units, tens of periods), which is the regime where
//! one-sided Jacobi is both fast and accurate to working precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, norm, Matrix};

const JACOBI_TOL: f64 = 1e-15;
const MAX_SWEEPS: usize = 80;

/// Singular values below this fraction of the largest are numerically zero.
pub const RANK_TOL: f64 = 1e-12;

/// `x = u · diag(sigma) · vᵀ` with `u` of shape `n x p`, `v` of shape
/// `t x p` and `p = min(n, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdFactors {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl SvdFactors {
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// Sum of the leading `r` rank-one terms.
    pub fn reconstruct(&self, r: usize) -> Matrix {
        let n = self.u.rows();
        let t = self.v.rows();
        let r = r.min(self.sigma.len());
        let mut out = vec![0.0; n * t];
        for k in 0..r {
            let s = self.sigma[k];
            if s == 0.0 {
                continue;
            }
            let vk = self.v.col(k);
            for i in 0..n {
                let a = s * self.u.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let row = &mut out[i * t..(i + 1) * t];
                for (o, &vj) in row.iter_mut().zip(&vk) {
                    *o += a * vj;
                }
            }
        }
        Matrix::from_parts(n, t, out)
    }

    /// Count of singular values above `RANK_TOL · sigma_1`.
    pub fn numerical_rank(&self) -> usize {
        numerical_rank(&self.sigma)
    }

    /// First `r` columns of `u · diag(sigma)`.
    pub fn scaled_left(&self, r: usize) -> Matrix {
        let n = self.u.rows();
        let r = r.min(self.sigma.len());
        let mut out = Vec::with_capacity(n * r);
        for i in 0..n {
            for k in 0..r {
                out.push(self.u.get(i, k) * self.sigma[k]);
            }
        }
        Matrix::from_parts(n, r, out)
    }

    /// First `r` right singular vectors as columns.
    pub fn right_basis(&self, r: usize) -> Matrix {
        let r = r.min(self.sigma.len());
        self.v
            .col_range(0, r)
            .expect("rank is within the factor width")
    }
}

pub fn numerical_rank(sigma: &[f64]) -> usize {
    match sigma.first() {
        Some(&s1) if s1 > 0.0 => sigma.iter().filter(|&&s| s > RANK_TOL * s1).count(),
        _ => 0,
    }
}

/// Thin SVD with a deterministic sign convention: the first nonzero
/// coordinate of every right singular vector is nonnegative.
pub fn svd(x: &Matrix) -> Result<SvdFactors> {
    if x.entries().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("svd input has non-finite entries".into()));
    }
    let (n, t) = x.shape();
    if n >= t {
        let (u, sigma, v) = jacobi_tall(x);
        Ok(finish(u, sigma, v, n, t))
    } else {
        // x = u s vᵀ  <=>  xᵀ = v s uᵀ
        let (v, sigma, u) = jacobi_tall(&x.transpose());
        Ok(finish(u, sigma, v, n, t))
    }
}

/// Columns are stored contiguously: `cols[j]` is column `j`.
type Columns = Vec<Vec<f64>>;

/// One-sided Jacobi on a tall matrix (`rows >= cols`). Returns the left
/// vectors as columns, singular values (unsorted) and right vectors as
/// columns.
fn jacobi_tall(x: &Matrix) -> (Columns, Vec<f64>, Columns) {
    let (m, p) = x.shape();
    let mut a: Columns = (0..p).map(|j| x.col(j)).collect();
    let mut v: Columns = (0..p)
        .map(|j| {
            let mut e = vec![0.0; p];
            e[j] = 1.0;
            e
        })
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..p.saturating_sub(1) {
            for j in (i + 1)..p {
                let alpha = dot(&a[i], &a[i]);
                let beta = dot(&a[j], &a[j]);
                let gamma = dot(&a[i], &a[j]);
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let tan = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cos = 1.0 / (1.0 + tan * tan).sqrt();
                let sin = cos * tan;
                rotate(&mut a, i, j, cos, sin);
                rotate(&mut v, i, j, cos, sin);
            }
        }
        if !rotated {
            break;
        }
    }

    let sigma: Vec<f64> = a.iter().map(|c| norm(c)).collect();
    let s_max = sigma.iter().cloned().fold(0.0, f64::max);
    let mut u: Columns = Vec::with_capacity(p);
    let mut missing = Vec::new();
    for (j, col) in a.into_iter().enumerate() {
        if sigma[j] > RANK_TOL * s_max && sigma[j] > 0.0 {
            u.push(col.iter().map(|c| c / sigma[j]).collect());
        } else {
            u.push(vec![0.0; m]);
            missing.push(j);
        }
    }
    complete_basis(&mut u, &missing, m);
    (u, sigma, v)
}

fn rotate(cols: &mut Columns, i: usize, j: usize, cos: f64, sin: f64) {
    let (left, right) = cols.split_at_mut(j);
    let ci = &mut left[i];
    let cj = &mut right[0];
    for (a, b) in ci.iter_mut().zip(cj.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = cos * x - sin * y;
        *b = sin * x + cos * y;
    }
}

/// Replaces the columns listed in `missing` with unit vectors orthogonal to
/// every other column, using Gram-Schmidt on standard basis candidates.
fn complete_basis(u: &mut Columns, missing: &[usize], m: usize) {
    if missing.is_empty() {
        return;
    }
    let mut candidate = 0;
    for &slot in missing {
        loop {
            assert!(candidate < m, "basis completion ran out of candidates");
            let mut e = vec![0.0; m];
            e[candidate] = 1.0;
            candidate += 1;
            // two passes keep the result orthogonal to working precision
            for _ in 0..2 {
                for (k, col) in u.iter().enumerate() {
                    if k == slot || col.iter().all(|&c| c == 0.0) {
                        continue;
                    }
                    let proj = dot(col, &e);
                    for (x, c) in e.iter_mut().zip(col) {
                        *x -= proj * c;
                    }
                }
            }
            let len = norm(&e);
            if len > 1e-6 {
                u[slot] = e.into_iter().map(|x| x / len).collect();
                break;
            }
        }
    }
}

fn finish(u: Columns, sigma: Vec<f64>, v: Columns, n: usize, t: usize) -> SvdFactors {
    let p = sigma.len();
    let mut order: Vec<usize> = (0..p).collect();
    // stable sort keeps ties in column order for reproducibility
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));

    let mut u_out = vec![0.0; n * p];
    let mut v_out = vec![0.0; t * p];
    let mut s_out = Vec::with_capacity(p);
    for (k, &src) in order.iter().enumerate() {
        let vk = &v[src];
        let flip = vk
            .iter()
            .find(|c| c.abs() > 1e-12)
            .is_some_and(|&c| c < 0.0);
        let sign = if flip { -1.0 } else { 1.0 };
        for (i, &val) in u[src].iter().enumerate() {
            u_out[i * p + k] = sign * val;
        }
        for (i, &val) in vk.iter().enumerate() {
            v_out[i * p + k] = sign * val;
        }
        s_out.push(sigma[src]);
    }
    SvdFactors {
        u: Matrix::from_parts(n, p, u_out),
        sigma: s_out,
        v: Matrix::from_parts(t, p, v_out),
    }
}

/// Keeps the leading `r` singular triplets of `x`.
pub fn hsvt(x: &Matrix, r: usize) -> Result<Matrix> {
    let max = x.rows().min(x.cols());
    if r == 0 || r > max {
        return Err(Error::InvalidRank { rank: r, max });
    }
    Ok(svd(x)?.reconstruct(r))
}
