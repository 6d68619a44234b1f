use clustersc::clustering::KChoice;
use clustersc::datagen::{gen_dataset_seeded, DatasetParams, NoiseSpec};
use clustersc::evaluation::{
    leave_one_out_placebo, median, pairwise_improvement, singular_gap_experiment, split_placebo, synthetic_study,
    GapParams, MethodVariant, PlaceboSettings,
};
use clustersc::regression::RegressionSpec;
use clustersc::RankRule;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn variants() -> Vec<MethodVariant> {
    MethodVariant::standard_set(RegressionSpec::ridge(0.01), RankRule::energy(0.95), KChoice::Fixed { k: 2 })
}

fn small_study(seed: u64) -> clustersc::evaluation::PlaceboReport {
    let params = DatasetParams::two_groups(30, NoiseSpec::gaussian(0.0));
    synthetic_study(
        &params,
        &[0.1, 0.3],
        2,
        0.3,
        &variants(),
        &PlaceboSettings::default(),
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap()
}

#[test]
fn medians_agree_with_per_target_rows() {
    let report = small_study(5);
    assert_eq!(report.per_dataset.len(), 4 * 3);
    for m in &report.per_dataset {
        let post: Vec<f64> = report
            .per_target
            .iter()
            .filter(|r| r.replicate == m.replicate && r.variant == m.variant)
            .map(|r| r.post_mse)
            .collect();
        assert_eq!(post.len(), m.targets);
        assert_eq!(median(&post).unwrap(), m.median_post_mse);
    }
    for im in &report.improvement_medians {
        let values: Vec<f64> = report
            .per_target
            .iter()
            .filter(|b| b.replicate == im.replicate && b.variant == im.baseline)
            .map(|b| {
                let c = report
                    .per_target
                    .iter()
                    .find(|c| c.replicate == im.replicate && c.variant == im.candidate && c.target_id == b.target_id)
                    .unwrap();
                pairwise_improvement(b.post_mse, c.post_mse)
            })
            .collect();
        assert_eq!(median(&values).unwrap(), im.median);
    }
}

#[test]
fn target_is_excluded_from_its_donor_pool() {
    let params = DatasetParams::two_groups(25, NoiseSpec::gaussian(0.1));
    let ds = gen_dataset_seeded(&params, 9).unwrap();
    let report = leave_one_out_placebo(
        &ds,
        0.4,
        &variants(),
        &PlaceboSettings::default(),
        &mut ChaCha8Rng::seed_from_u64(2),
    )
    .unwrap();
    assert_eq!(report.per_target.len(), 10 * 3);
    for r in &report.per_target {
        assert!(r.target_id < 25);
        assert_eq!(r.unit_id, format!("A{}", r.target_id));
        match r.variant.as_str() {
            "sc_full_ridge" => assert_eq!(r.selected_donor_count, 49),
            _ => assert!(r.selected_donor_count <= 49),
        }
        // with the target removed, at most 24 same-group donors remain
        if let Some(p) = r.selection_precision {
            let same = (p * r.selected_donor_count as f64).round() as usize;
            assert!(same <= 24);
        }
    }
    for c in report.per_target.iter().filter(|r| r.variant == "cluster_sc_ridge") {
        let s = report
            .per_target
            .iter()
            .find(|s| s.variant == "sc_random_subset_ridge" && s.target_id == c.target_id)
            .unwrap();
        assert_eq!(s.selected_donor_count, c.selected_donor_count);
    }
}

#[test]
fn reports_serialize_identically_for_equal_seeds() {
    let a = serde_json::to_string(&small_study(17)).unwrap();
    let b = serde_json::to_string(&small_study(17)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, serde_json::to_string(&small_study(18)).unwrap());
}

#[test]
fn split_placebo_is_deterministic() {
    let ds = gen_dataset_seeded(&DatasetParams::two_groups(20, NoiseSpec::gaussian(0.2)), 4).unwrap();
    let run = |seed| {
        let r = split_placebo(&ds.panel, 0.8, 5, &variants(), &PlaceboSettings::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        serde_json::to_string(&r).unwrap()
    };
    assert_eq!(run(1), run(1));
}

#[test]
fn gap_scales_with_noise_level() {
    let gap = |s: f64| {
        let params = GapParams {
            n: 400,
            n_a: 200,
            t_count: 10,
            rank_r: 3,
            noise: NoiseSpec::gaussian(s),
            trials: 60,
        };
        singular_gap_experiment(&params, &mut ChaCha8Rng::seed_from_u64(3)).unwrap().empirical_mean_gap
    };
    let ratio = gap(0.2) / gap(0.1);
    assert!((ratio - 2.0).abs() <= 0.3, "ratio {ratio}");
}

#[test]
fn lasso_records_carry_active_donor_scores() {
    let ds = gen_dataset_seeded(&DatasetParams::two_groups(40, NoiseSpec::gaussian(0.3)), 21).unwrap();
    let variants = MethodVariant::standard_set(RegressionSpec::lasso(0.01), RankRule::energy(0.95), KChoice::Fixed { k: 2 });
    let report =
        leave_one_out_placebo(&ds, 0.3, &variants, &PlaceboSettings::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    for r in &report.per_target {
        let count = r.active_donor_count.unwrap();
        assert!(count <= r.selected_donor_count);
        if count > 0 {
            let p = r.active_donor_precision.unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
    }
}
