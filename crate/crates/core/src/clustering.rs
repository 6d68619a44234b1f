//! Donor clustering in singular-vector space.
//!
//! Donors are embedded as the rows of `U Σ_r` from the SVD of the
//! pre-intervention donor block, then partitioned by Lloyd's algorithm from
//! k-means++ seeds. A target series is embedded by projecting it onto the
//! top-`r` right singular vectors, which reproduces `U_i Σ_r` for any donor
//! row. Cluster labels are 0-based.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rank::{select_rank, RankRule};
use crate::svd::svd;

pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_K_MIN: usize = 2;
pub const DEFAULT_K_MAX: usize = 8;

/// Largest k for which bijections are enumerated exhaustively.
const EXHAUSTIVE_MATCH_MAX_K: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub labels: Vec<usize>,
    pub k: usize,
}

impl Partition {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("partition needs k >= 1".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for k = {k}"
            )));
        }
        Ok(Self { labels, k })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Point indices carrying `label`, ascending.
    pub fn members(&self, label: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Number of clusters to fit: fixed, or chosen by silhouette over a range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum KChoice {
    Fixed { k: usize },
    Auto { k_min: usize, k_max: usize },
}

impl KChoice {
    pub fn auto() -> Self {
        KChoice::Auto {
            k_min: DEFAULT_K_MIN,
            k_max: DEFAULT_K_MAX,
        }
    }
}

impl std::fmt::Display for KChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KChoice::Fixed { k } => write!(f, "{k}"),
            KChoice::Auto { k_min, k_max } => write!(f, "auto:{k_min}-{k_max}"),
        }
    }
}

impl std::str::FromStr for KChoice {
    type Err = Error;

    /// Accepts `K`, `auto`, or `auto:MIN-MAX`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParams(format!("bad k setting '{s}'"));
        if s == "auto" {
            return Ok(KChoice::auto());
        }
        if let Some(range) = s.strip_prefix("auto:") {
            let (lo, hi) = range.split_once('-').ok_or_else(bad)?;
            let k_min: usize = lo.parse().map_err(|_| bad())?;
            let k_max: usize = hi.parse().map_err(|_| bad())?;
            if k_min < 2 || k_max < k_min {
                return Err(bad());
            }
            return Ok(KChoice::Auto { k_min, k_max });
        }
        let k: usize = s.parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(bad());
        }
        Ok(KChoice::Fixed { k })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            restarts: DEFAULT_RESTARTS,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LloydResult {
    pub centers: Matrix,
    pub partition: Partition,
    pub inertia: f64,
    pub iterations: usize,
    /// Cost after every center update, in order.
    pub inertia_history: Vec<f64>,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for j in 0..centers.rows() {
        let d = sq_dist(point, centers.row(j));
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means++ seeding: the first center is uniform over the points, each
/// further one is drawn with probability proportional to its squared
/// distance from the nearest chosen center.
pub fn kmeans_pp_init<R: Rng + ?Sized>(points: &Matrix, k: usize, rng: &mut R) -> Result<Matrix> {
    let m = points.rows();
    if k == 0 || k > m {
        return Err(Error::InvalidInput(format!(
            "k = {k} must lie in 1..={m}"
        )));
    }
    let d = points.cols();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..m));
    let mut dist: Vec<f64> = (0..m)
        .map(|i| sq_dist(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateInput(format!(
                "fewer than {k} distinct points"
            )));
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &w) in dist.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            pick = Some(i);
            if target < w {
                break;
            }
            target -= w;
        }
        let pick = pick.expect("positive total implies a positive weight");
        chosen.push(pick);
        for (i, di) in dist.iter_mut().enumerate() {
            *di = di.min(sq_dist(points.row(i), points.row(pick)));
        }
    }
    let mut entries = Vec::with_capacity(k * d);
    for &i in &chosen {
        entries.extend_from_slice(points.row(i));
    }
    Ok(Matrix::from_parts(k, d, entries))
}

fn assign(points: &Matrix, centers: &Matrix) -> (Vec<usize>, Vec<f64>) {
    (0..points.rows())
        .map(|i| nearest(points.row(i), centers))
        .unzip()
}

/// Means of each label's members. Empty clusters are repaired by moving in
/// the point farthest from its current center; `labels` is updated.
fn update_centers(points: &Matrix, labels: &mut [usize], previous: &Matrix) -> Matrix {
    let k = previous.rows();
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            break;
        };
        let current = means(points, labels, k, previous);
        let (far, _) = (0..points.rows())
            .filter(|&i| sizes[labels[i]] > 1)
            .map(|i| (i, sq_dist(points.row(i), current.row(labels[i]))))
            .fold((usize::MAX, f64::NEG_INFINITY), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
        assert!(far != usize::MAX, "k exceeds the number of points");
        labels[far] = empty;
    }
    means(points, labels, k, previous)
}

fn means(points: &Matrix, labels: &[usize], k: usize, fallback: &Matrix) -> Matrix {
    let d = points.cols();
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, &p) in sums[l * d..(l + 1) * d].iter_mut().zip(points.row(i)) {
            *s += p;
        }
    }
    for l in 0..k {
        let block = &mut sums[l * d..(l + 1) * d];
        if counts[l] == 0 {
            block.copy_from_slice(fallback.row(l));
        } else {
            let c = counts[l] as f64;
            for s in block.iter_mut() {
                *s /= c;
            }
        }
    }
    Matrix::from_parts(k, d, sums)
}

fn cost(points: &Matrix, labels: &[usize], centers: &Matrix) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(points.row(i), centers.row(l)))
        .sum()
}

/// Lloyd iterations from `init_centers` until labels stop changing or
/// `max_iter` updates have run. Inertia is the within-cluster sum of
/// squared Euclidean distances.
pub fn lloyd(points: &Matrix, init_centers: &Matrix, max_iter: usize) -> Result<LloydResult> {
    if init_centers.cols() != points.cols() {
        return Err(Error::Shape(format!(
            "centers have {} coordinates, points have {}",
            init_centers.cols(),
            points.cols()
        )));
    }
    let k = init_centers.rows();
    if k > points.rows() {
        return Err(Error::DegenerateInput(format!(
            "{k} centers for {} points",
            points.rows()
        )));
    }
    let (mut labels, _) = assign(points, init_centers);
    let mut centers = init_centers.clone();
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        centers = update_centers(points, &mut labels, &centers);
        history.push(cost(points, &labels, &centers));
        let (next, _) = assign(points, &centers);
        // on hitting the cap the labels stay paired with their own means
        if next == labels || iterations >= max_iter {
            break;
        }
        labels = next;
    }
    let inertia = cost(points, &labels, &centers);
    Ok(LloydResult {
        centers,
        partition: Partition { labels, k },
        inertia,
        iterations,
        inertia_history: history,
    })
}

/// Best of `options.restarts` seeded runs; ties keep the earliest restart.
pub fn kmeans<R: Rng + ?Sized>(
    points: &Matrix,
    k: usize,
    options: &KMeansOptions,
    rng: &mut R,
) -> Result<LloydResult> {
    let seeds: Vec<u64> = (0..options.restarts.max(1)).map(|_| rng.random()).collect();
    let mut best: Option<LloydResult> = None;
    for seed in seeds {
        let mut restart_rng = ChaCha8Rng::seed_from_u64(seed);
        let init = kmeans_pp_init(points, k, &mut restart_rng)?;
        let run = lloyd(points, &init, options.max_iter)?;
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Mean silhouette coefficient. Singleton clusters contribute 0, as does
/// any point whose intra- and nearest-cluster distances are both zero.
pub fn silhouette(points: &Matrix, partition: &Partition) -> Result<f64> {
    let m = points.rows();
    if partition.len() != m {
        return Err(Error::Shape(format!(
            "{} labels for {m} points",
            partition.len()
        )));
    }
    if partition.k < 2 {
        return Err(Error::InvalidInput("silhouette needs k >= 2".into()));
    }
    let sizes = partition.sizes();
    if sizes.contains(&0) {
        return Err(Error::InvalidInput("silhouette needs nonempty clusters".into()));
    }
    let k = partition.k;
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..m {
        sums.iter_mut().for_each(|s| *s = 0.0);
        let pi = points.row(i);
        for j in 0..m {
            if j != i {
                sums[partition.labels[j]] += sq_dist(pi, points.row(j)).sqrt();
            }
        }
        let own = partition.labels[i];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&l| l != own)
            .map(|l| sums[l] / sizes[l] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / m as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub k: usize,
    /// `(k, silhouette)` for every candidate, ascending in k.
    pub scores: Vec<(usize, f64)>,
    pub best: LloydResult,
}

/// Silhouette-maximizing k over `k_min..=k_max`, ties toward smaller k,
/// together with the winning clustering.
pub fn select_k<R: Rng + ?Sized>(
    points: &Matrix,
    k_min: usize,
    k_max: usize,
    options: &KMeansOptions,
    rng: &mut R,
) -> Result<KSelection> {
    let m = points.rows();
    if k_min < 2 || k_min > k_max || k_max + 1 > m {
        return Err(Error::InvalidInput(format!(
            "k range {k_min}..={k_max} invalid for {m} points"
        )));
    }
    let mut scores = Vec::new();
    let mut best: Option<(f64, LloydResult)> = None;
    for k in k_min..=k_max {
        let run = kmeans(points, k, options, rng)?;
        let score = silhouette(points, &run.partition)?;
        scores.push((k, score));
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, run));
        }
    }
    let (_, best) = best.expect("nonempty k range");
    Ok(KSelection {
        k: best.partition.k,
        scores,
        best,
    })
}

pub fn choose_k<R: Rng + ?Sized>(
    points: &Matrix,
    k_min: usize,
    k_max: usize,
    restarts: usize,
    rng: &mut R,
) -> Result<usize> {
    let options = KMeansOptions {
        restarts,
        ..KMeansOptions::default()
    };
    Ok(select_k(points, k_min, k_max, &options, rng)?.k)
}

/// Fitted donor clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub rank_r: usize,
    /// Top-`r` right singular vectors of the pre-intervention donor block,
    /// `T0 x r`.
    pub v_basis: Matrix,
    /// `k x r`.
    pub centers: Matrix,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Donor embeddings `U Σ_r`, `n x r`.
    pub embedding: Matrix,
    /// Silhouette per candidate k when k was chosen automatically.
    pub k_scores: Vec<(usize, f64)>,
}

impl ClusterModel {
    pub fn partition(&self) -> Partition {
        Partition {
            labels: self.assignments.clone(),
            k: self.k,
        }
    }

    pub fn members(&self, label: usize) -> Vec<usize> {
        self.partition().members(label)
    }

    /// Projects a pre-intervention series onto `v_basis`.
    pub fn embed(&self, series: &[f64]) -> Result<Vec<f64>> {
        self.v_basis.tr_mul_vec(series).map_err(|_| {
            Error::Shape(format!(
                "series of length {} does not match T0 = {}",
                series.len(),
                self.v_basis.rows()
            ))
        })
    }
}

pub fn fit_cluster_model<R: Rng + ?Sized>(
    donor_pre: &Matrix,
    rule: RankRule,
    k: KChoice,
    options: &KMeansOptions,
    rng: &mut R,
) -> Result<ClusterModel> {
    let (n, t0) = donor_pre.shape();
    if n < 2 {
        return Err(Error::DegenerateInput(format!(
            "clustering needs at least 2 donors, got {n}"
        )));
    }
    let factors = svd(donor_pre)?;
    let r = select_rank(&factors.sigma, rule)?;
    if r > n.min(t0) {
        return Err(Error::InvalidRank {
            rank: r,
            max: n.min(t0),
        });
    }
    let embedding = factors.scaled_left(r);
    let v_basis = factors.right_basis(r);

    let (run, k_scores) = match k {
        KChoice::Fixed { k } => {
            if k > n {
                return Err(Error::DegenerateInput(format!(
                    "k = {k} exceeds the {n} donors"
                )));
            }
            (kmeans(&embedding, k, options, rng)?, Vec::new())
        }
        KChoice::Auto { k_min, k_max } => {
            let k_max = k_max.min(n - 1);
            if k_max < k_min {
                return Err(Error::DegenerateInput(format!(
                    "{n} donors cannot support k >= {k_min} with silhouette selection"
                )));
            }
            let sel = select_k(&embedding, k_min, k_max, options, rng)?;
            (sel.best, sel.scores)
        }
    };
    Ok(ClusterModel {
        k: run.partition.k,
        rank_r: r,
        v_basis,
        centers: run.centers,
        assignments: run.partition.labels,
        inertia: run.inertia,
        embedding,
        k_scores,
    })
}

/// Nearest center to the target's embedding; ties go to the lower label.
pub fn assign_target(model: &ClusterModel, target_pre: &[f64]) -> Result<usize> {
    let u = model.embed(target_pre)?;
    Ok(nearest(&u, &model.centers).0)
}

/// Minimum over label bijections of the summed per-cluster symmetric
/// differences.
pub fn partition_symmetric_difference(p: &Partition, q: &Partition) -> Result<usize> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "partitions cover {} and {} points",
            p.len(),
            q.len()
        )));
    }
    let costs = mismatch_costs(p, q);
    if costs.len() <= EXHAUSTIVE_MATCH_MAX_K {
        Ok(min_cost_exhaustive(&costs))
    } else {
        Ok(min_cost_assignment(&costs))
    }
}

/// `costs[i][j] = |P_i ⊖ Q_j|`, with the smaller partition padded by
/// empty clusters.
fn mismatch_costs(p: &Partition, q: &Partition) -> Vec<Vec<usize>> {
    let k = p.k.max(q.k);
    let mut overlap = vec![vec![0usize; k]; k];
    for (&a, &b) in p.labels.iter().zip(&q.labels) {
        overlap[a][b] += 1;
    }
    let mut ps = p.sizes();
    let mut qs = q.sizes();
    ps.resize(k, 0);
    qs.resize(k, 0);
    (0..k)
        .map(|i| (0..k).map(|j| ps[i] + qs[j] - 2 * overlap[i][j]).collect())
        .collect()
}

fn min_cost_exhaustive(costs: &[Vec<usize>]) -> usize {
    fn recurse(costs: &[Vec<usize>], row: usize, used: &mut [bool], acc: usize, best: &mut usize) {
        if acc >= *best {
            return;
        }
        if row == costs.len() {
            *best = acc;
            return;
        }
        for j in 0..costs.len() {
            if !used[j] {
                used[j] = true;
                recurse(costs, row + 1, used, acc + costs[row][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = usize::MAX;
    recurse(costs, 0, &mut vec![false; costs.len()], 0, &mut best);
    best
}

/// Hungarian algorithm (potentials form), O(k³).
pub(crate) fn min_cost_assignment(costs: &[Vec<usize>]) -> usize {
    let n = costs.len();
    let c = |i: usize, j: usize| costs[i - 1][j - 1] as i64;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = c(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| costs[p[j] - 1][j - 1]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(rows: &[[f64; 2]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn blobs() -> Matrix {
        pts(&[[0.0, 0.0], [0.1, 0.0], [10.0, 0.0], [10.1, 0.0]])
    }

    #[test]
    fn kmeans_pp_picks_every_point_when_k_equals_m() {
        let p = blobs();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = kmeans_pp_init(&p, 4, &mut rng).unwrap();
        let mut rows: Vec<Vec<f64>> = (0..4).map(|i| c.row(i).to_vec()).collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut expected: Vec<Vec<f64>> = (0..4).map(|i| p.row(i).to_vec()).collect();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(rows, expected);
    }

    #[test]
    fn kmeans_pp_single_center_is_a_point_and_deterministic() {
        let p = blobs();
        let a = kmeans_pp_init(&p, 1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = kmeans_pp_init(&p, 1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!((0..4).any(|i| p.row(i) == a.row(0)));
        let c = kmeans_pp_init(&p, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let d = kmeans_pp_init(&p, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn kmeans_pp_rejects_too_few_distinct_points() {
        let p = pts(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]);
        let err = kmeans_pp_init(&p, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, Error::DegenerateInput(_)));
        assert!(kmeans_pp_init(&p, 4, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn lloyd_separates_blobs() {
        let p = blobs();
        let init = pts(&[[0.0, 0.0], [10.0, 0.0]]);
        let run = lloyd(&p, &init, 100).unwrap();
        assert_eq!(run.partition.labels, vec![0, 0, 1, 1]);
        // 4 points each 0.05 from their center
        assert!((run.inertia - 0.01).abs() < 1e-12);
    }

    #[test]
    fn lloyd_with_one_center_is_the_mean() {
        let p = pts(&[[0.0, 0.0], [2.0, 0.0], [0.0, 4.0]]);
        let run = lloyd(&p, &pts(&[[5.0, 5.0]]), 10).unwrap();
        let c = run.centers.row(0);
        assert!((c[0] - 2.0 / 3.0).abs() < 1e-14 && (c[1] - 4.0 / 3.0).abs() < 1e-14);
        let total: f64 = (0..3).map(|i| sq_dist(p.row(i), c)).sum();
        assert!((run.inertia - total).abs() < 1e-12);
    }

    #[test]
    fn lloyd_repairs_empty_clusters() {
        let p = blobs();
        // the second center starts far from every point
        let init = pts(&[[5.0, 0.0], [1000.0, 1000.0]]);
        let run = lloyd(&p, &init, 100).unwrap();
        assert!(run.partition.sizes().iter().all(|&s| s > 0));
        assert!((run.inertia - 0.01).abs() < 1e-12);
        assert!(run.inertia_history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn lloyd_shape_error() {
        let p = blobs();
        assert!(matches!(
            lloyd(&p, &Matrix::zeros(2, 3), 10),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn silhouette_cases() {
        let p = blobs();
        let part = Partition::new(vec![0, 0, 1, 1], 2).unwrap();
        assert!(silhouette(&p, &part).unwrap() > 0.9);

        let same = pts(&[[1.0, 1.0]; 4]);
        assert_eq!(silhouette(&same, &part).unwrap(), 0.0);

        let one = Partition::new(vec![0; 4], 1).unwrap();
        assert!(matches!(silhouette(&p, &one), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn silhouette_singletons_contribute_zero() {
        let p = pts(&[[0.0, 0.0], [1.0, 0.0], [5.0, 0.0]]);
        let part = Partition::new(vec![0, 0, 1], 2).unwrap();
        // a = 1 for both members; b = 5 and 4
        let expected = ((5.0 - 1.0) / 5.0 + (4.0 - 1.0) / 4.0) / 3.0;
        assert!((silhouette(&p, &part).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn choose_k_two_blobs() {
        let p = pts(&[
            [0.0, 0.0], [0.1, 0.2], [0.2, 0.1], [0.1, 0.0],
            [9.0, 9.0], [9.1, 9.2], [9.2, 9.1], [9.1, 9.0],
        ]);
        let a = choose_k(&p, 2, 5, 5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = choose_k(&p, 2, 5, 5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, 2);
        assert_eq!(a, b);
        assert!(choose_k(&p, 1, 5, 5, &mut ChaCha8Rng::seed_from_u64(3)).is_err());
        assert!(choose_k(&p, 2, 8, 5, &mut ChaCha8Rng::seed_from_u64(3)).is_err());
    }

    #[test]
    fn cluster_model_on_copied_orthogonal_rows() {
        let donors = Matrix::from_rows(&[
            [1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 2.0, 0.0],
            [0.0, 2.0, 0.0],
        ])
        .unwrap();
        let model = fit_cluster_model(
            &donors,
            RankRule::fixed(2),
            KChoice::Fixed { k: 2 },
            &KMeansOptions::default(),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(model.assignments[0], model.assignments[1]);
        assert_eq!(model.assignments[2], model.assignments[3]);
        assert_ne!(model.assignments[0], model.assignments[2]);
        assert!(model.inertia < 1e-20);
        assert_eq!(model.v_basis.shape(), (3, 2));

        for i in 0..4 {
            let e = model.embed(donors.row(i)).unwrap();
            for (a, b) in e.iter().zip(model.embedding.row(i)) {
                assert!((a - b).abs() < 1e-8);
            }
            assert_eq!(assign_target(&model, donors.row(i)).unwrap(), model.assignments[i]);
        }
    }

    #[test]
    fn cluster_model_errors() {
        let donors = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let opts = KMeansOptions::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            fit_cluster_model(&donors, RankRule::fixed(3), KChoice::Fixed { k: 2 }, &opts, &mut rng),
            Err(Error::InvalidRank { .. })
        ));
        assert!(matches!(
            fit_cluster_model(&donors, RankRule::fixed(1), KChoice::Fixed { k: 3 }, &opts, &mut rng),
            Err(Error::DegenerateInput(_))
        ));
        let single = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert!(fit_cluster_model(&single, RankRule::fixed(1), KChoice::Fixed { k: 1 }, &opts, &mut rng).is_err());
    }

    fn model_with_centers(centers: Matrix) -> ClusterModel {
        let r = centers.cols();
        ClusterModel {
            k: centers.rows(),
            rank_r: r,
            v_basis: Matrix::identity(r),
            assignments: (0..centers.rows()).collect(),
            embedding: centers.clone(),
            centers,
            inertia: 0.0,
            k_scores: Vec::new(),
        }
    }

    #[test]
    fn assign_target_ties_and_exact_centers() {
        let model = model_with_centers(pts(&[[0.0, 0.0], [2.0, 0.0], [0.0, 5.0]]));
        assert_eq!(assign_target(&model, &[1.0, 0.0]).unwrap(), 0);
        assert_eq!(assign_target(&model, &[2.0, 0.0]).unwrap(), 1);
        assert_eq!(assign_target(&model, &[0.0, 5.0]).unwrap(), 2);
        assert!(assign_target(&model, &[1.0]).is_err());
    }

    #[test]
    fn symmetric_difference_examples() {
        let p = Partition::new(vec![0, 0, 1, 1], 2).unwrap();
        let q = Partition::new(vec![0, 1, 0, 1], 2).unwrap();
        assert_eq!(partition_symmetric_difference(&p, &p).unwrap(), 0);
        assert_eq!(partition_symmetric_difference(&p, &q).unwrap(), 4);
        let relabeled = Partition::new(vec![1, 1, 0, 0], 2).unwrap();
        assert_eq!(partition_symmetric_difference(&p, &relabeled).unwrap(), 0);
        let moved = Partition::new(vec![0, 0, 1, 0], 2).unwrap();
        assert_eq!(partition_symmetric_difference(&p, &moved).unwrap(), 2);

        let short = Partition::new(vec![0, 1], 2).unwrap();
        assert!(matches!(partition_symmetric_difference(&p, &short), Err(Error::Shape(_))));
        let k3 = Partition::new(vec![0, 1, 2, 2], 3).unwrap();
        // an empty cluster pads p; {0,1} splits into two pieces
        assert_eq!(partition_symmetric_difference(&p, &k3).unwrap(), 2);
        assert_eq!(partition_symmetric_difference(&k3, &p).unwrap(), 2);
    }

    #[test]
    fn hungarian_matches_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in 1..=7 {
            for _ in 0..20 {
                let costs: Vec<Vec<usize>> = (0..k)
                    .map(|_| (0..k).map(|_| rng.random_range(0..50)).collect())
                    .collect();
                assert_eq!(min_cost_assignment(&costs), min_cost_exhaustive(&costs));
            }
        }
    }

    #[test]
    fn parses_k_choice() {
        assert_eq!("2".parse::<KChoice>().unwrap(), KChoice::Fixed { k: 2 });
        assert_eq!("auto".parse::<KChoice>().unwrap(), KChoice::auto());
        assert_eq!(
            "auto:2-5".parse::<KChoice>().unwrap(),
            KChoice::Auto { k_min: 2, k_max: 5 }
        );
        assert!("0".parse::<KChoice>().is_err());
        assert!("auto:1-5".parse::<KChoice>().is_err());
    }
}
