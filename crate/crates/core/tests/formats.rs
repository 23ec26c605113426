mod common;

use std::collections::BTreeMap;
use std::fs;

use common::{head, pack, rng};
use rand::Rng;
use rand_distr::StandardNormal;
use ttaood::metrics::evaluate;
use ttaood::pack::{
    read_head, read_pack, read_scores, write_head, write_pack, write_scores, ClassifierHead,
    FittedScorerArchive, Label, Matrix, ScoreFile, Split, PACK_FEATURES, PACK_LOGITS,
};
use ttaood::scorers::{self, FittedScorer, ScorerConfig, ScorerId};
use ttaood::synth::{self, SynthConfig};
use ttaood::Error;

fn random_pack(seed: u64, n: usize, m: usize, c: usize) -> ttaood::pack::FeaturePack {
    let mut r = rng(seed);
    let feats: Vec<Vec<f32>> = (0..n)
        .map(|_| (0..m).map(|_| r.sample::<f32, _>(StandardNormal) * 4.0).collect())
        .collect();
    let logits: Vec<Vec<f32>> = (0..n)
        .map(|_| (0..c).map(|_| r.random_range(-30.0f32..30.0)).collect())
        .collect();
    let labels = (0..n).map(|i| Label::Id(i % c)).collect();
    pack(&feats, &logits, labels, Split::Val, "hflip+vflip")
}

#[test]
fn features_bin_layout() {
    let dir = tempfile::tempdir().unwrap();
    let p = pack(&[vec![1.0, 2.0]], &[vec![0.5, -0.5]], vec![Label::Id(0)], Split::TestId, "none");
    write_pack(&p, dir.path()).unwrap();
    let bytes = fs::read(dir.path().join(PACK_FEATURES)).unwrap();
    let mut expected = 1.0f32.to_le_bytes().to_vec();
    expected.extend(2.0f32.to_le_bytes());
    assert_eq!(bytes, expected);
}

#[test]
fn pack_round_trip_100x512() {
    let dir = tempfile::tempdir().unwrap();
    let p = random_pack(1, 100, 512, 3);
    write_pack(&p, dir.path()).unwrap();
    let back = read_pack(dir.path()).unwrap();
    assert!(back.bitwise_eq(&p));
    assert_eq!(back.sample_ids, p.sample_ids);
    assert_eq!(back.labels, p.labels);

    let dir2 = tempfile::tempdir().unwrap();
    write_pack(&back, dir2.path()).unwrap();
    for f in [PACK_FEATURES, PACK_LOGITS] {
        assert_eq!(fs::read(dir.path().join(f)).unwrap(), fs::read(dir2.path().join(f)).unwrap());
    }
}

#[test]
fn ood_pack_labels_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let labels: Vec<Label> = ["ESO", "POL", "UC"].iter().map(|t| Label::Ood(t.to_string())).collect();
    let p = pack(&[vec![0.0], vec![1.0], vec![2.0]], &vec![vec![0.0, 1.0]; 3], labels, Split::TestOod, "none");
    write_pack(&p, dir.path()).unwrap();
    assert_eq!(read_pack(dir.path()).unwrap(), p);
}

#[test]
fn invalid_packs() {
    let mut p = pack(&[vec![1.0, 2.0]], &[vec![0.5, -0.5]], vec![Label::Id(0)], Split::TestId, "none");
    p.features = Matrix::from_vec(1, 2, vec![f32::NAN, 0.0]).unwrap();
    let err = p.validate().unwrap_err();
    assert!(err.to_string().contains("non-finite value"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(read_pack(dir.path()).unwrap_err(), Error::MissingFile(_)));

    let good = pack(&[vec![1.0, 2.0]], &[vec![0.5, -0.5]], vec![Label::Id(0)], Split::TestId, "none");
    write_pack(&good, dir.path()).unwrap();
    fs::write(dir.path().join(PACK_FEATURES), [0u8; 7]).unwrap();
    let err = read_pack(dir.path()).unwrap_err();
    assert!(matches!(err, Error::CorruptPack(_)), "{err}");
    assert!(err.to_string().contains("corrupt pack"));
}

#[test]
fn head_size_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let h = head(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[0.5, -0.5], 2, 3);
    write_head(&h, dir.path()).unwrap();
    let bin = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "bin"))
        .unwrap();
    assert_eq!(fs::metadata(&bin).unwrap().len(), 32);
    assert_eq!(read_head(dir.path()).unwrap(), h);

    let mut r = rng(2);
    let w: Vec<f32> = (0..5 * 64).map(|_| r.sample(StandardNormal)).collect();
    let b: Vec<f32> = (0..5).map(|_| r.sample(StandardNormal)).collect();
    let big = ClassifierHead::new(Matrix::from_vec(5, 64, w).unwrap(), b).unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    write_head(&big, dir2.path()).unwrap();
    assert_eq!(read_head(dir2.path()).unwrap(), big);

    fs::write(&bin, [0u8; 31]).unwrap();
    assert!(read_head(dir.path()).is_err());
}

#[test]
fn archive_round_trip() {
    let data = synth::generate(&SynthConfig {
        feature_dim: 16,
        n_per_class: 40,
        n_ood: 30,
        ..SynthConfig::default()
    })
    .unwrap();
    for id in [ScorerId::Mahalanobis, ScorerId::Vim] {
        let cfg = ScorerConfig::new(id);
        let fitted = scorers::fit(&cfg, &data.train, Some(&data.head)).unwrap();
        let archive = fitted.to_archive(&cfg);
        let dir = tempfile::tempdir().unwrap();
        archive.save(dir.path()).unwrap();
        let loaded = FittedScorerArchive::load(dir.path()).unwrap();
        assert!(loaded.bitwise_eq(&archive), "{id}");

        let restored = FittedScorer::from_archive(&loaded).unwrap();
        let a = scorers::score_pack(&cfg, &data.test_ood, Some(&fitted)).unwrap();
        let b = scorers::score_pack(&cfg, &data.test_ood, Some(&restored)).unwrap();
        assert!(a.bitwise_eq(&b), "{id}");
    }
}

#[test]
fn score_file_and_report_round_trip() {
    let mut r = rng(3);
    let mut config = BTreeMap::new();
    config.insert("temperature".to_string(), serde_json::json!(1000.0));
    let make = |r: &mut rand_chacha::ChaCha8Rng, n: usize, tag: &str| ScoreFile {
        sample_ids: (0..n).map(|i| format!("{tag}{i}")).collect(),
        scores: (0..n).map(|_| r.random::<f64>() * 1e3 - 5e2).collect(),
        scorer_id: "odin".into(),
        view: "jitter(b=1.2,c=1,s=1,h=0)".into(),
        config: config.clone(),
    };
    let id = make(&mut r, 50, "i");
    let ood = make(&mut r, 40, "o");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.csv");
    write_scores(&id, &path).unwrap();
    assert!(read_scores(&path).unwrap().bitwise_eq(&id));

    let labels: Vec<String> = (0..40).map(|i| ["ESO", "POL"][i % 2].to_string()).collect();
    let report = evaluate(&id, &ood, Some(&labels), 0.95).unwrap();
    let text = report.to_json().unwrap();
    let back = ttaood::metrics::EvalReport::from_json(&text).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.to_json().unwrap(), text);
    assert_eq!(back.auroc.to_bits(), report.auroc.to_bits());
    assert_eq!(back.threshold.to_bits(), report.threshold.to_bits());
}
