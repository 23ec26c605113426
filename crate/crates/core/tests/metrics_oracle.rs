mod common;

use std::collections::BTreeMap;

use common::{brute_auroc, brute_fpr, brute_threshold, random_scores, rng};
use proptest::prelude::*;
use ttaood::metrics::{
    auroc, classify, compare_reports, evaluate, fit_threshold, fpr_at_tpr, Decision,
};
use ttaood::pack::ScoreFile;
use ttaood::Error;

fn score_file(scores: &[f64], view: &str) -> ScoreFile {
    ScoreFile {
        sample_ids: (0..scores.len()).map(|i| format!("x{i}")).collect(),
        scores: scores.to_vec(),
        scorer_id: "maxlogit".into(),
        view: view.into(),
        config: BTreeMap::new(),
    }
}

#[test]
fn auroc_matches_pairwise_count_on_random_instances() {
    let mut r = rng(11);
    for instance in 0..200 {
        let (id, ood) = random_scores(&mut r, instance, 200);
        assert_eq!(auroc(&id, &ood).unwrap(), brute_auroc(&id, &ood), "instance {instance}");
    }
}

#[test]
fn fpr_matches_threshold_sweep_on_random_instances() {
    let mut r = rng(12);
    for instance in 0..200 {
        let (id, ood) = random_scores(&mut r, instance, 200);
        for target in [0.5, 0.9, 0.95, 0.99] {
            match (fpr_at_tpr(&id, &ood, target), brute_fpr(&id, &ood, target)) {
                (Ok(a), Some(b)) => assert_eq!(a, b, "instance {instance}, target {target}"),
                (Err(Error::DegenerateScores(_)), None) => {}
                (a, b) => panic!("instance {instance}: {a:?} vs oracle {b:?}"),
            }
        }
    }
}

#[test]
fn auroc_examples() {
    assert_eq!(auroc(&[0.1, 0.2], &[0.8, 0.9]).unwrap(), 1.0);
    assert_eq!(auroc(&[0.5], &[0.5]).unwrap(), 0.5);
    assert!(auroc(&[], &[1.0]).is_err());
    assert!(auroc(&[f64::NAN], &[1.0]).is_err());
}

#[test]
fn threshold_examples() {
    let hundred: Vec<f64> = (1..=100).map(f64::from).collect();
    assert_eq!(fit_threshold(&hundred, 0.95).unwrap(), 96.0);
    assert_eq!(brute_threshold(&hundred, 0.95), Some(96.0));
    assert_eq!(fit_threshold(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap(), 3.0);

    let err = fit_threshold(&[2.0; 10], 0.95).unwrap_err();
    assert!(matches!(err, Error::DegenerateScores(_)));
    assert!(err.to_string().contains("target unattainable with strict inequality"));
}

#[test]
fn fpr_examples() {
    let id: Vec<f64> = (1..=100).map(f64::from).collect();
    assert_eq!(fpr_at_tpr(&id, &[200.0; 50], 0.95).unwrap(), 0.0);

    // Same multiset on both sides: FPR is the TPR target up to 1/n.
    let fpr = fpr_at_tpr(&id, &id, 0.95).unwrap();
    assert!((fpr - 0.95).abs() <= 1.0 / 100.0);
    assert_eq!(Some(fpr), brute_fpr(&id, &id, 0.95));
}

#[test]
fn classify_ties_go_to_ood() {
    let v = classify(&score_file(&[0.7, 0.5, 0.3], "none"), 0.5);
    let d: Vec<Decision> = v.iter().map(|x| x.decision).collect();
    assert_eq!(d, [Decision::Ood, Decision::Ood, Decision::Id]);
}

#[test]
fn per_class_breakdown() {
    let id: Vec<f64> = (1..=100).map(f64::from).collect();
    // "far" is perfectly separated, "same" is a copy of the ID scores.
    let mut ood = vec![500.0; 100];
    ood.extend(&id);
    let mut labels = vec!["far".to_string(); 100];
    labels.extend(vec!["same".to_string(); 100]);

    let report = evaluate(&score_file(&id, "none"), &score_file(&ood, "none"), Some(&labels), 0.95)
        .unwrap();
    let far = report.per_ood_class["far"];
    let same = report.per_ood_class["same"];
    assert_eq!(far, 0.0);
    assert_eq!(Some(same), brute_fpr(&id, &id, 0.95));
    assert!((same - 0.95).abs() <= 0.01);
    assert!(far <= report.fpr_at_tpr && report.fpr_at_tpr <= same);
    assert_eq!(report.per_ood_class_counts["same"], 100);
    assert_eq!(report.fpr_at_tpr, brute_fpr(&id, &ood, 0.95).unwrap());
    assert_eq!(report.auroc, brute_auroc(&id, &ood));
}

#[test]
fn report_means_and_round_trip() {
    let report = evaluate(&score_file(&[0.0, 1.0], "none"), &score_file(&[1.0, 2.0, 3.0], "none"), None, 0.5)
        .unwrap();
    assert_eq!(report.mean_ood_score, 2.0);
    let back = ttaood::metrics::EvalReport::from_json(&report.to_json().unwrap()).unwrap();
    assert_eq!(back, report);
}

#[test]
fn deltas_against_table_values() {
    let id: Vec<f64> = (1..=100).map(f64::from).collect();
    let base = evaluate(&score_file(&id, "none"), &score_file(&[50.0], "none"), None, 0.95).unwrap();
    let mut baseline = base.clone();
    baseline.fpr_at_tpr = 0.2986;
    baseline.auroc = 0.8965;
    let mut tta = base.clone();
    tta.view = "vflip".into();
    tta.fpr_at_tpr = 0.2642;
    tta.auroc = 0.9037;
    let d = compare_reports(&baseline, &tta).unwrap();
    assert!((d.delta_fpr * 100.0 - -3.44).abs() < 1e-9);
    assert!((d.delta_auroc * 100.0 - 0.72).abs() < 1e-9);
    assert!(d.fpr_improved && d.auroc_improved);

    let same = compare_reports(&base, &base).unwrap();
    assert_eq!(
        (same.delta_auroc, same.delta_fpr, same.delta_mean_ood_score),
        (0.0, 0.0, 0.0)
    );
}

fn int_scores(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-50i32..50).prop_map(f64::from), 1..max)
}

proptest! {
    #[test]
    fn auroc_invariant_under_increasing_maps(id in int_scores(60), ood in int_scores(60)) {
        let f = |v: &Vec<f64>| v.iter().map(|x| 2.0 * x + 7.0).collect::<Vec<_>>();
        prop_assert_eq!(auroc(&id, &ood).unwrap(), auroc(&f(&id), &f(&ood)).unwrap());
        let g = |v: &Vec<f64>| v.iter().map(|x| x.powi(3)).collect::<Vec<_>>();
        prop_assert_eq!(auroc(&id, &ood).unwrap(), auroc(&g(&id), &g(&ood)).unwrap());
    }

    #[test]
    fn auroc_swap_symmetry(id in int_scores(60), ood in int_scores(60)) {
        let s = auroc(&id, &ood).unwrap() + auroc(&ood, &id).unwrap();
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auroc_and_fpr_ignore_order(id in int_scores(60), ood in int_scores(60), seed in 0u64..1000) {
        use rand::seq::SliceRandom;
        let mut r = rng(seed);
        let (mut id2, mut ood2) = (id.clone(), ood.clone());
        id2.shuffle(&mut r);
        ood2.shuffle(&mut r);
        prop_assert_eq!(auroc(&id, &ood).unwrap(), auroc(&id2, &ood2).unwrap());
        prop_assert_eq!(fpr_at_tpr(&id, &ood, 0.9).ok(), fpr_at_tpr(&id2, &ood2, 0.9).ok());
    }

    #[test]
    fn fpr_is_monotone_in_target(id in int_scores(80), ood in int_scores(80)) {
        let mut last = 0.0;
        for t in [0.1, 0.3, 0.5, 0.7, 0.9, 0.95] {
            if let Ok(f) = fpr_at_tpr(&id, &ood, t) {
                prop_assert!(f >= last);
                last = f;
            } else {
                break;
            }
        }
    }

    #[test]
    fn threshold_keeps_target(id in prop::collection::vec(-1e3f64..1e3, 1..100), t in 0.01f64..0.99) {
        if let Ok(lambda) = fit_threshold(&id, t) {
            let below = id.iter().filter(|&&s| s < lambda).count();
            prop_assert!(below as f64 / id.len() as f64 >= t);
            prop_assert_eq!(Some(lambda), brute_threshold(&id, t));
        } else {
            prop_assert_eq!(brute_threshold(&id, t), None);
        }
    }
}
