use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{binary, read_json, write_file, FeaturePack, Matrix};
use crate::error::{Error, Result};

pub const HEAD_META: &str = "head.json";
pub const HEAD_BIN: &str = "head.bin";

/// Final linear layer of the classifier: `logits = weights * features + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    /// C x m, row c holds the weight vector of logit c.
    pub weights: Matrix<f32>,
    pub bias: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct HeadMeta {
    format: String,
    num_classes: usize,
    feature_dim: usize,
}

impl ClassifierHead {
    pub fn new(weights: Matrix<f32>, bias: Vec<f32>) -> Result<Self> {
        let head = Self { weights, bias };
        head.validate()?;
        Ok(head)
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bias.len() != self.weights.rows() {
            return Err(Error::DimMismatch(format!(
                "head has {} weight rows but {} bias entries",
                self.weights.rows(),
                self.bias.len()
            )));
        }
        if self.num_classes() < 2 || self.feature_dim() == 0 {
            return Err(Error::DimMismatch(format!(
                "head must be at least 2 x 1, got {} x {}",
                self.num_classes(),
                self.feature_dim()
            )));
        }
        let all = self.weights.as_slice().iter().chain(&self.bias);
        if let Some(pos) = all.clone().position(|v| !v.is_finite()) {
            let m = self.feature_dim();
            let (row, col) = if pos < self.weights.as_slice().len() {
                (pos / m, pos % m)
            } else {
                (self.num_classes(), pos - self.weights.as_slice().len())
            };
            return Err(Error::NonFinite {
                field: "head",
                row,
                col,
            });
        }
        Ok(())
    }

    /// Logits for one feature vector, evaluated in f64.
    pub fn logits(&self, features: &[f64]) -> Vec<f64> {
        self.weights
            .iter_rows()
            .zip(&self.bias)
            .map(|(w, &b)| {
                w.iter()
                    .zip(features)
                    .map(|(&wi, &xi)| f64::from(wi) * xi)
                    .sum::<f64>()
                    + f64::from(b)
            })
            .collect()
    }

    pub fn check_dims(&self, pack: &FeaturePack) -> Result<()> {
        if self.feature_dim() != pack.feature_dim() || self.num_classes() != pack.num_classes() {
            return Err(Error::DimMismatch(format!(
                "head is {}x{} but pack has C={}, m={}",
                self.num_classes(),
                self.feature_dim(),
                pack.num_classes(),
                pack.feature_dim()
            )));
        }
        Ok(())
    }

    /// Largest absolute difference between the pack's stored logits and
    /// `weights * features + bias` recomputed from the stored features.
    pub fn max_logit_deviation(&self, pack: &FeaturePack) -> Result<f64> {
        self.check_dims(pack)?;
        let mut worst = 0.0f64;
        for i in 0..pack.n() {
            let expected = self.logits(&pack.feature_row_f64(i));
            for (&stored, e) in pack.logits.row(i).iter().zip(expected) {
                worst = worst.max((f64::from(stored) - e).abs());
            }
        }
        Ok(worst)
    }
}

/// Writes `head.json` and `head.bin` (weights row-major, then bias) into `dir`.
pub fn write_head(head: &ClassifierHead, dir: impl AsRef<Path>) -> Result<()> {
    head.validate()?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = HeadMeta {
        format: "ttaood-head".into(),
        num_classes: head.num_classes(),
        feature_dim: head.feature_dim(),
    };
    let meta_path = dir.join(HEAD_META);
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::meta(&meta_path, e))?;
    write_file(&meta_path, text.as_bytes())?;

    let mut bytes = binary::f32_to_le_bytes(head.weights.as_slice());
    bytes.extend(binary::f32_to_le_bytes(&head.bias));
    write_file(&dir.join(HEAD_BIN), &bytes)
}

pub fn read_head(dir: impl AsRef<Path>) -> Result<ClassifierHead> {
    let dir = dir.as_ref();
    let meta: HeadMeta = read_json(&dir.join(HEAD_META))?;
    let bin_path = dir.join(HEAD_BIN);
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let (c, m) = (meta.num_classes, meta.feature_dim);
    let expected = (c * m + c) * 4;
    if bytes.len() != expected {
        return Err(Error::DimMismatch(format!(
            "{} has {} bytes but C={c}, m={m} needs {expected}",
            bin_path.display(),
            bytes.len()
        )));
    }
    let values = binary::f32_from_le_bytes(&bytes)?;
    let (w, b) = values.split_at(c * m);
    ClassifierHead::new(Matrix::from_vec(c, m, w.to_vec())?, b.to_vec())
}
