//! Synthetic feature packs with controllable representation drift.
//!
//! ID classes are isotropic Gaussians around random centers of norm 10.
//! OOD clusters sit at distance `ood_offset` from an ID center. The head is
//! a least-squares linear classifier fitted on the train split, and every
//! pack's logits are that head applied to its features.
//!
//! A drifted view adds to each feature row a random vector of fixed norm
//! and recomputes the logits. With [`DriftDirection::EvidenceReducing`]
//! (the default) the sign of the random direction is chosen so that the
//! logit of the currently predicted class does not increase; with
//! [`DriftDirection::Isotropic`] the direction is uniform on the sphere.

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pack::{ClassifierHead, FeaturePack, Label, Matrix, Split};

/// OOD cluster tags, one cluster per tag.
pub const OOD_TAGS: [&str; 5] = ["ESO", "POL", "UC", "DLP", "DRM"];

pub const SYNTH_MODEL_ID: &str = "synthetic-least-squares";

const CENTER_NORM: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftDirection {
    Isotropic,
    EvidenceReducing,
}

impl std::str::FromStr for DriftDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "isotropic" => Ok(DriftDirection::Isotropic),
            "evidence-reducing" => Ok(DriftDirection::EvidenceReducing),
            _ => Err(Error::InvalidParameter(format!(
                "unknown drift direction '{s}' (expected isotropic or evidence-reducing)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub feature_dim: usize,
    pub num_classes: usize,
    /// Samples per class in each of train, val and test_id.
    pub n_per_class: usize,
    pub n_ood: usize,
    pub id_spread: f64,
    pub ood_offset: f64,
    pub drift_id: f64,
    pub drift_ood: f64,
    pub drift_direction: DriftDirection,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            feature_dim: 32,
            num_classes: 3,
            n_per_class: 200,
            n_ood: 300,
            id_spread: 1.0,
            ood_offset: 6.0,
            drift_id: 1.5,
            drift_ood: 3.0,
            drift_direction: DriftDirection::EvidenceReducing,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.n_per_class == 0 || self.n_ood == 0 {
            return Err(Error::InvalidParameter(
                "feature_dim, n_per_class and n_ood must all be >= 1".into(),
            ));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 ID classes, got {}",
                self.num_classes
            )));
        }
        for (name, v) in [
            ("id_spread", self.id_spread),
            ("ood_offset", self.ood_offset),
            ("drift_id", self.drift_id),
            ("drift_ood", self.drift_ood),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub train: FeaturePack,
    pub val: FeaturePack,
    pub test_id: FeaturePack,
    pub test_ood: FeaturePack,
    pub head: ClassifierHead,
}

fn gaussian(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    loop {
        let g = gaussian(rng, m);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            return g.into_iter().map(|v| v / norm).collect();
        }
    }
}

fn sample_around(rng: &mut ChaCha8Rng, center: &[f64], spread: f64) -> Vec<f32> {
    let noise = gaussian(rng, center.len());
    center
        .iter()
        .zip(noise)
        .map(|(c, z)| (c + spread * z) as f32)
        .collect()
}

/// Seed of an independent stream derived from `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Draws all four splits and fits the head. Deterministic in `config.seed`.
pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let (m, c) = (config.feature_dim, config.num_classes);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let centers: Vec<Vec<f64>> = (0..c)
        .map(|_| unit(&mut rng, m).into_iter().map(|v| v * CENTER_NORM).collect())
        .collect();
    let ood_centers: Vec<Vec<f64>> = (0..OOD_TAGS.len())
        .map(|j| {
            let dir = unit(&mut rng, m);
            centers[j % c]
                .iter()
                .zip(dir)
                .map(|(x, d)| x + config.ood_offset * d)
                .collect()
        })
        .collect();

    let mut id_split = |prefix: &str| -> (Vec<String>, Vec<Label>, Vec<Vec<f32>>) {
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut rows = Vec::new();
        for k in 0..c {
            for _ in 0..config.n_per_class {
                ids.push(format!("{prefix}-{:06}", ids.len()));
                labels.push(Label::Id(k));
                rows.push(sample_around(&mut rng, &centers[k], config.id_spread));
            }
        }
        (ids, labels, rows)
    };
    let train = id_split("train");
    let val = id_split("val");
    let test_id = id_split("test-id");

    let mut ood = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..config.n_ood {
        let j = i % OOD_TAGS.len();
        ood.0.push(format!("test-ood-{i:06}"));
        ood.1.push(Label::Ood(OOD_TAGS[j].to_string()));
        ood.2.push(sample_around(&mut rng, &ood_centers[j], config.id_spread));
    }

    let train_features = Matrix::from_rows(&train.2)?;
    let head = least_squares_head(&train_features, &train.1, c)?;

    let pack = |(ids, labels, rows): (Vec<String>, Vec<Label>, Vec<Vec<f32>>), split| {
        let features = Matrix::from_rows(&rows)?;
        let logits = head_logits(&head, &features)?;
        let p = FeaturePack {
            sample_ids: ids,
            labels,
            features,
            logits,
            view: "none".into(),
            split,
            model_id: SYNTH_MODEL_ID.into(),
        };
        p.validate()?;
        Ok::<_, Error>(p)
    };
    Ok(SynthData {
        train: pack(train, Split::Train)?,
        val: pack(val, Split::Val)?,
        test_id: pack(test_id, Split::TestId)?,
        test_ood: pack(ood, Split::TestOod)?,
        head,
    })
}

/// Minimum-norm least-squares fit of `[X 1] B = Y` with one-hot targets.
fn least_squares_head(features: &Matrix<f32>, labels: &[Label], c: usize) -> Result<ClassifierHead> {
    let (n, m) = (features.rows(), features.cols());
    let a = DMatrix::from_fn(n, m + 1, |i, j| {
        if j < m {
            f64::from(features.row(i)[j])
        } else {
            1.0
        }
    });
    let y = DMatrix::from_fn(n, c, |i, k| {
        if labels[i].class_index() == Some(k) {
            1.0
        } else {
            0.0
        }
    });
    let svd = a.svd(true, true);
    let tol = svd.singular_values.max() * (n.max(m + 1)) as f64 * f64::EPSILON;
    let b = svd
        .solve(&y, tol)
        .map_err(|e| Error::Singular(format!("least-squares head: {e}")))?;
    let weights = Matrix::from_vec(
        c,
        m,
        (0..c)
            .flat_map(|k| (0..m).map(move |j| (k, j)))
            .map(|(k, j)| b[(j, k)] as f32)
            .collect(),
    )?;
    let bias = (0..c).map(|k| b[(m, k)] as f32).collect();
    ClassifierHead::new(weights, bias)
}

fn head_logits(head: &ClassifierHead, features: &Matrix<f32>) -> Result<Matrix<f32>> {
    let rows: Vec<Vec<f32>> = features
        .iter_rows()
        .map(|r| {
            let x: Vec<f64> = r.iter().map(|&v| f64::from(v)).collect();
            head.logits(&x).into_iter().map(|v| v as f32).collect()
        })
        .collect();
    Matrix::from_rows(&rows)
}

pub fn drift_view_tag(magnitude: f64) -> String {
    format!("synthetic-drift(d={magnitude})")
}

/// Moves every feature row by a random vector of norm `magnitude` and
/// recomputes the logits through `head`.
pub fn drifted_view(
    pack: &FeaturePack,
    head: &ClassifierHead,
    magnitude: f64,
    direction: DriftDirection,
    seed: u64,
) -> Result<FeaturePack> {
    pack.validate()?;
    head.check_dims(pack)?;
    if !(magnitude.is_finite() && magnitude >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "drift magnitude must be finite and non-negative, got {magnitude}"
        )));
    }
    let m = pack.feature_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = pack.clone();
    out.view = drift_view_tag(magnitude);
    if magnitude == 0.0 {
        return Ok(out);
    }
    for i in 0..pack.n() {
        let x = pack.feature_row_f64(i);
        let mut r = unit(&mut rng, m);
        if direction == DriftDirection::EvidenceReducing {
            let logits = head.logits(&x);
            let pred = argmax(&logits);
            let along: f64 = head
                .weights
                .row(pred)
                .iter()
                .zip(&r)
                .map(|(&w, v)| f64::from(w) * v)
                .sum();
            if along > 0.0 {
                r.iter_mut().for_each(|v| *v = -*v);
            }
        }
        let moved: Vec<f64> = x.iter().zip(&r).map(|(a, d)| a + magnitude * d).collect();
        let stored: Vec<f32> = moved.iter().map(|&v| v as f32).collect();
        let widened: Vec<f64> = stored.iter().map(|&v| f64::from(v)).collect();
        let logits = head.logits(&widened);
        out.features.row_mut(i).copy_from_slice(&stored);
        for (dst, v) in out.logits.row_mut(i).iter_mut().zip(logits) {
            *dst = v as f32;
        }
    }
    out.validate()?;
    Ok(out)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Largest `|stored - f32(W x + b)|` over all logits of `pack`, where the
/// affine map is evaluated in f64 on the stored features.
pub fn logit_consistency_error(pack: &FeaturePack, head: &ClassifierHead) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..pack.n() {
        let expected = head.logits(&pack.feature_row_f64(i));
        for (&s, e) in pack.logits.row(i).iter().zip(expected) {
            worst = worst.max((f64::from(s) - f64::from(e as f32)).abs());
        }
    }
    worst
}
