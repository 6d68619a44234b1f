use clustersc::{hsvt, svd, Matrix};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

fn random_rank(rng: &mut impl Rng, rows: usize, cols: usize, r: usize) -> Matrix {
    random_matrix(rng, rows, r).matmul(&random_matrix(rng, r, cols)).unwrap()
}

fn gram_eigenvalues(x: &Matrix) -> Vec<f64> {
    let m = DMatrix::from_row_slice(x.rows(), x.cols(), x.entries());
    let g = if x.rows() >= x.cols() { m.transpose() * &m } else { &m * m.transpose() };
    let mut eig: Vec<f64> = g.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig
}

fn max_orthonormality_error(q: &Matrix) -> f64 {
    let g = q.transpose().matmul(q).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g.get(i, j) - target).abs());
        }
    }
    worst
}

#[test]
fn svd_matches_gram_oracle_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100 {
        let rows = rng.random_range(1..=20);
        let cols = rng.random_range(1..=12);
        let x = if case % 3 == 0 && rows.min(cols) > 1 {
            let r = rng.random_range(1..rows.min(cols));
            random_rank(&mut rng, rows, cols, r)
        } else {
            random_matrix(&mut rng, rows, cols)
        };
        let f = svd(&x).unwrap();
        let norm = x.frobenius_norm();
        let err = f.reconstruct(f.len()).sub(&x).unwrap().frobenius_norm();
        assert!(err <= 1e-8 * norm, "case {case}: reconstruction error {err}");
        assert!(max_orthonormality_error(&f.v) <= 1e-8, "case {case}: V not orthonormal");
        assert!(max_orthonormality_error(&f.u) <= 1e-8, "case {case}: U not orthonormal");
        assert!(f.sigma.windows(2).all(|w| w[0] >= w[1]));
        let eig = gram_eigenvalues(&x);
        let scale = f.sigma[0] * f.sigma[0];
        for (s, l) in f.sigma.iter().zip(&eig) {
            assert!((s * s - l.max(0.0)).abs() <= 1e-8 * scale.max(1.0), "case {case}: {s}^2 vs {l}");
        }
    }
}

#[test]
fn hsvt_beats_random_rank_r_candidates() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let rows = rng.random_range(2..=15);
        let cols = rng.random_range(2..=10);
        let x = random_matrix(&mut rng, rows, cols);
        let r = rng.random_range(1..=rows.min(cols));
        let best = x.sub(&hsvt(&x, r).unwrap()).unwrap().frobenius_norm();
        for _ in 0..100 {
            // perturbations of the optimum plus unrelated low-rank matrices
            let b = if rng.random_bool(0.5) {
                random_rank(&mut rng, rows, cols, r)
            } else {
                let h = hsvt(&x, r).unwrap();
                let noise = random_rank(&mut rng, rows, cols, 1).scale(1e-3);
                hsvt(&h.add(&noise).unwrap(), r).unwrap()
            };
            let other = x.sub(&b).unwrap().frobenius_norm();
            assert!(best <= other + 1e-12, "hsvt {best} vs candidate {other}");
        }
    }
}

#[test]
fn hsvt_singular_values_are_truncated() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..30 {
        let x = random_matrix(&mut rng, 9, 7);
        let r = rng.random_range(1..=7);
        let full = svd(&x).unwrap().sigma;
        let h = svd(&hsvt(&x, r).unwrap()).unwrap().sigma;
        for i in 0..7 {
            let expected = if i < r { full[i] } else { 0.0 };
            assert!((h[i] - expected).abs() <= 1e-10 * full[0]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hsvt_is_idempotent(seed in any::<u64>(), rows in 1usize..12, cols in 1usize..10, r_frac in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(&mut rng, rows, cols);
        let r = 1 + ((rows.min(cols) - 1) as f64 * r_frac) as usize;
        let once = hsvt(&x, r).unwrap();
        let twice = hsvt(&once, r).unwrap();
        prop_assert!(twice.sub(&once).unwrap().frobenius_norm() <= 1e-9);
    }

    #[test]
    fn singular_values_obey_weyl_bound(seed in any::<u64>(), rows in 1usize..12, cols in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_matrix(&mut rng, rows, cols);
        let b = random_matrix(&mut rng, rows, cols);
        let sa = svd(&a).unwrap().sigma;
        let sb = svd(&b).unwrap().sigma;
        let diff_top = svd(&a.sub(&b).unwrap()).unwrap().sigma[0];
        let worst = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(worst <= diff_top + 1e-8);
    }

    #[test]
    fn reconstruction_within_relative_tolerance(seed in any::<u64>(), rows in 1usize..=20, cols in 1usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(&mut rng, rows, cols);
        let f = svd(&x).unwrap();
        let err = f.reconstruct(f.len()).sub(&x).unwrap().frobenius_norm();
        prop_assert!(err <= 1e-8 * x.frobenius_norm());
    }
}
