use clustersc::clustering::{
    assign_target, choose_k, fit_cluster_model, kmeans, kmeans_pp_init, lloyd, partition_symmetric_difference,
    silhouette, KChoice, KMeansOptions, Partition,
};
use clustersc::{Matrix, RankRule};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn cluster_cost(points: &[[f64; 2]], members: &[usize]) -> f64 {
    if members.is_empty() {
        return 0.0;
    }
    let n = members.len() as f64;
    let cx = members.iter().map(|&i| points[i][0]).sum::<f64>() / n;
    let cy = members.iter().map(|&i| points[i][1]).sum::<f64>() / n;
    members
        .iter()
        .map(|&i| (points[i][0] - cx).powi(2) + (points[i][1] - cy).powi(2))
        .sum()
}

fn best_bipartition(points: &[[f64; 2]]) -> f64 {
    let m = points.len();
    let mut best = f64::INFINITY;
    // the last point always sits in the second block
    for mask in 0u32..(1 << (m - 1)) {
        let (a, b): (Vec<usize>, Vec<usize>) = (0..m).partition(|&i| i < m - 1 && mask & (1 << i) != 0);
        if a.is_empty() {
            continue;
        }
        best = best.min(cluster_cost(points, &a) + cluster_cost(points, &b));
    }
    best
}

fn silhouette_oracle(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let m = points.len();
    let mut total = 0.0;
    for i in 0..m {
        let own: Vec<usize> = (0..m).filter(|&j| labels[j] == labels[i] && j != i).collect();
        if own.is_empty() {
            continue;
        }
        let a = own.iter().map(|&j| dist(&points[i], &points[j])).sum::<f64>() / own.len() as f64;
        let b = (0..k)
            .filter(|&c| c != labels[i])
            .map(|c| {
                let other: Vec<usize> = (0..m).filter(|&j| labels[j] == c).collect();
                other.iter().map(|&j| dist(&points[i], &points[j])).sum::<f64>() / other.len() as f64
            })
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / m as f64
}

fn to_matrix(points: &[Vec<f64>]) -> Matrix {
    Matrix::from_rows(points).unwrap()
}

#[test]
fn kmeans_finds_best_bipartition_of_small_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let options = KMeansOptions {
        restarts: 50,
        ..KMeansOptions::default()
    };
    for _ in 0..40 {
        let m = rng.random_range(3..=8);
        let points: Vec<[f64; 2]> = (0..m).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let rows: Vec<Vec<f64>> = points.iter().map(|p| p.to_vec()).collect();
        let run = kmeans(&to_matrix(&rows), 2, &options, &mut rng).unwrap();
        let oracle = best_bipartition(&points);
        assert!((run.inertia - oracle).abs() <= 1e-10, "{} vs {}", run.inertia, oracle);
    }
}

#[test]
fn silhouette_matches_formula_on_four_points() {
    let points = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![5.0, 0.0], vec![5.0, 2.0]];
    let labels = vec![0, 0, 1, 1];
    let ours = silhouette(&to_matrix(&points), &Partition::new(labels.clone(), 2).unwrap()).unwrap();
    // point 0: a = 1, b = (5 + sqrt 29) / 2, and so on
    let s0 = {
        let b = (5.0 + 29f64.sqrt()) / 2.0;
        (b - 1.0) / b
    };
    let s1 = {
        let b = (4.0 + 20f64.sqrt()) / 2.0;
        (b - 1.0) / b
    };
    let s2 = {
        let b: f64 = 4.5;
        (b - 2.0) / b
    };
    let s3 = {
        let b = (29f64.sqrt() + 20f64.sqrt()) / 2.0;
        (b - 2.0) / b
    };
    let hand = (s0 + s1 + s2 + s3) / 4.0;
    assert!((ours - hand).abs() <= 1e-12);
    assert!((silhouette_oracle(&points, &labels, 2) - hand).abs() <= 1e-12);
}

#[test]
fn three_blobs_choose_three() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
    let mut points = Vec::new();
    for c in &centers {
        for _ in 0..8 {
            points.push(vec![c[0] + rng.random_range(-0.5..0.5), c[1] + rng.random_range(-0.5..0.5)]);
        }
    }
    let x = to_matrix(&points);
    let k = choose_k(&x, 2, 5, 10, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(k, 3);
    // the oracle's argmax over the same clusterings agrees
    let options = KMeansOptions::default();
    let mut best = (0, f64::NEG_INFINITY);
    for k in 2..=5 {
        let run = kmeans(&x, k, &options, &mut ChaCha8Rng::seed_from_u64(k as u64)).unwrap();
        let s = silhouette_oracle(&points, &run.partition.labels, k);
        if s > best.1 {
            best = (k, s);
        }
    }
    assert_eq!(best.0, 3);
}

#[test]
fn separated_groups_are_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let t0 = 6;
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for g in 0..2 {
        for _ in 0..10 {
            let mut row = vec![0.0; t0];
            row[2 * g] = 10.0;
            row[2 * g + 1] = rng.random_range(-0.5..0.5);
            rows.push(row);
            truth.push(g);
        }
    }
    let x = to_matrix(&rows);
    let model = fit_cluster_model(
        &x,
        RankRule::fixed(4),
        KChoice::Fixed { k: 2 },
        &KMeansOptions::default(),
        &mut rng,
    )
    .unwrap();
    let truth = Partition::new(truth, 2).unwrap();
    assert_eq!(partition_symmetric_difference(&model.partition(), &truth).unwrap(), 0);
    for (i, row) in rows.iter().enumerate() {
        let emb = model.embed(row).unwrap();
        for (a, b) in emb.iter().zip(model.embedding.row(i)) {
            assert!((a - b).abs() <= 1e-8);
        }
    }
}

fn random_partition(rng: &mut impl Rng, m: usize, k: usize) -> Partition {
    Partition::new((0..m).map(|_| rng.random_range(0..k)).collect(), k).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inertia_history_is_monotone(seed in any::<u64>(), m in 2usize..40, k in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = k.min(m);
        let rows: Vec<Vec<f64>> = (0..m).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let x = to_matrix(&rows);
        let init = kmeans_pp_init(&x, k, &mut rng).unwrap();
        let run = lloyd(&x, &init, 300).unwrap();
        prop_assert!(run.inertia_history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        prop_assert!(run.partition.sizes().iter().all(|&s| s > 0));
        for c in 0..k {
            let members = run.partition.members(c);
            for d in 0..3 {
                let mean = members.iter().map(|&i| rows[i][d]).sum::<f64>() / members.len() as f64;
                prop_assert!((run.centers.get(c, d) - mean).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn symmetric_difference_is_pseudometric(seed in any::<u64>(), m in 1usize..30, kp in 1usize..5, kq in 1usize..5, kr in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_partition(&mut rng, m, kp);
        let q = random_partition(&mut rng, m, kq);
        let r = random_partition(&mut rng, m, kr);
        let d = |a: &Partition, b: &Partition| partition_symmetric_difference(a, b).unwrap();
        prop_assert_eq!(d(&p, &p), 0);
        prop_assert_eq!(d(&p, &q), d(&q, &p));
        prop_assert!(d(&p, &r) <= d(&p, &q) + d(&q, &r));
    }

    #[test]
    fn target_assignment_ignores_post_columns(seed in any::<u64>(), extra in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, t0) = (12, 5);
        let full: Vec<Vec<f64>> = (0..n).map(|_| (0..t0 + extra).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let pre: Vec<Vec<f64>> = full.iter().map(|r| r[..t0].to_vec()).collect();
        let model = fit_cluster_model(
            &to_matrix(&pre),
            RankRule::fixed(3),
            KChoice::Fixed { k: 2 },
            &KMeansOptions::default(),
            &mut ChaCha8Rng::seed_from_u64(seed ^ 1),
        ).unwrap();
        let mut target: Vec<f64> = (0..t0 + extra).map(|_| rng.random_range(-1.0..1.0)).collect();
        let before = assign_target(&model, &target[..t0]).unwrap();
        for v in target[t0..].iter_mut() {
            *v += 100.0;
        }
        prop_assert_eq!(assign_target(&model, &target[..t0]).unwrap(), before);
    }
}
