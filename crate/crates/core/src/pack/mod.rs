//! Portable data model and on-disk formats.
//!
//! A *pack* directory holds one split of one dataset under one augmentation
//! view:
//!
//! ```text
//! <pack>/meta.json     metadata, sample ids and labels
//! <pack>/features.bin  n x m little-endian f32, row-major, no header
//! <pack>/logits.bin    n x C little-endian f32, row-major, no header
//! ```
//!
//! Matrices are stored at 32-bit precision; every consumer widens to f64
//! before doing arithmetic.

mod archive;
pub mod binary;
mod head;
mod score_file;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use archive::{ArchiveBlock, FittedScorerArchive};
pub use head::{read_head, write_head, ClassifierHead};
pub use score_file::{read_scores, sidecar_path, write_scores, ScoreFile, ORIENTATION};

pub const PACK_META: &str = "meta.json";
pub const PACK_FEATURES: &str = "features.bin";
pub const PACK_LOGITS: &str = "logits.bin";

const PACK_FORMAT: &str = "ttaood-pack";
const PACK_VERSION: u32 = 1;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Matrix<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::DimMismatch(format!(
                "{} values cannot form a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::DimMismatch(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }
}

impl Matrix<f32> {
    /// Equality on the raw bit patterns of every entry.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Which part of the evaluation protocol a pack belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    TestId,
    TestOod,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Val, Split::TestId, Split::TestOod];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::TestId => "test_id",
            Split::TestOod => "test_ood",
        }
    }

    /// Train and validation packs may only contain in-distribution samples.
    pub fn requires_id_labels(self) -> bool {
        matches!(self, Split::Train | Split::Val)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown split '{s}'")))
    }
}

/// A sample label: an in-distribution class index or a free-form OOD tag
/// (e.g. `ESO`, `POL`, `UC`, `DLP`, `DRM`).
///
/// In `meta.json` class indices are JSON numbers and OOD tags are strings.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Id(usize),
    Ood(String),
}

impl Label {
    pub fn class_index(&self) -> Option<usize> {
        match self {
            Label::Id(c) => Some(*c),
            Label::Ood(_) => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Id(c) => write!(f, "{c}"),
            Label::Ood(tag) => f.write_str(tag),
        }
    }
}

/// Penultimate features and logits for one (split x view).
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePack {
    pub sample_ids: Vec<String>,
    pub labels: Vec<Label>,
    pub features: Matrix<f32>,
    pub logits: Matrix<f32>,
    pub view: String,
    pub split: Split,
    pub model_id: String,
}

impl FeaturePack {
    pub fn n(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.logits.cols()
    }

    /// Checks every structural invariant; each violation has its own error.
    pub fn validate(&self) -> Result<()> {
        let n = self.sample_ids.len();
        if n == 0 {
            return Err(Error::EmptyPack);
        }
        if self.labels.len() != n || self.features.rows() != n || self.logits.rows() != n {
            return Err(Error::DimMismatch(format!(
                "sample_ids={n}, labels={}, feature rows={}, logit rows={}",
                self.labels.len(),
                self.features.rows(),
                self.logits.rows()
            )));
        }
        if self.features.cols() == 0 {
            return Err(Error::DimMismatch("feature dimension must be >= 1".into()));
        }
        if self.logits.cols() < 2 {
            return Err(Error::DimMismatch(format!(
                "need at least 2 classes, got {}",
                self.logits.cols()
            )));
        }
        check_finite("features", &self.features)?;
        check_finite("logits", &self.logits)?;

        let mut seen = HashSet::with_capacity(n);
        for id in &self.sample_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }

        let c = self.num_classes();
        for (id, label) in self.sample_ids.iter().zip(&self.labels) {
            match label {
                Label::Id(k) if *k >= c => {
                    return Err(Error::InvalidLabel(format!(
                        "sample '{id}' has class {k} but the pack has {c} classes"
                    )))
                }
                Label::Ood(tag) if self.split.requires_id_labels() => {
                    return Err(Error::InvalidLabel(format!(
                        "sample '{id}' carries OOD tag '{tag}' in a {} pack",
                        self.split
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Feature row widened to f64.
    pub fn feature_row_f64(&self, i: usize) -> Vec<f64> {
        self.features.row(i).iter().map(|&v| f64::from(v)).collect()
    }

    pub fn logit_row_f64(&self, i: usize) -> Vec<f64> {
        self.logits.row(i).iter().map(|&v| f64::from(v)).collect()
    }

    /// Field-for-field equality, comparing matrices bit by bit.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.sample_ids == other.sample_ids
            && self.labels == other.labels
            && self.view == other.view
            && self.split == other.split
            && self.model_id == other.model_id
            && self.features.bitwise_eq(&other.features)
            && self.logits.bitwise_eq(&other.logits)
    }
}

fn check_finite(field: &'static str, m: &Matrix<f32>) -> Result<()> {
    for (row, r) in m.iter_rows().enumerate() {
        if let Some(col) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { field, row, col });
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct PackMeta {
    format: String,
    version: u32,
    n: usize,
    feature_dim: usize,
    num_classes: usize,
    view: String,
    split: Split,
    model_id: String,
    sample_ids: Vec<String>,
    labels: Vec<Label>,
}

/// Writes `pack` into `dir`, creating it if needed. The pack is validated
/// before anything touches the filesystem.
pub fn write_pack(pack: &FeaturePack, dir: impl AsRef<Path>) -> Result<()> {
    pack.validate()?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let meta = PackMeta {
        format: PACK_FORMAT.to_string(),
        version: PACK_VERSION,
        n: pack.n(),
        feature_dim: pack.feature_dim(),
        num_classes: pack.num_classes(),
        view: pack.view.clone(),
        split: pack.split,
        model_id: pack.model_id.clone(),
        sample_ids: pack.sample_ids.clone(),
        labels: pack.labels.clone(),
    };
    let meta_path = dir.join(PACK_META);
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::meta(&meta_path, e))?;
    write_file(&meta_path, text.as_bytes())?;
    write_file(
        &dir.join(PACK_FEATURES),
        &binary::f32_to_le_bytes(pack.features.as_slice()),
    )?;
    write_file(
        &dir.join(PACK_LOGITS),
        &binary::f32_to_le_bytes(pack.logits.as_slice()),
    )?;
    Ok(())
}

/// Reads and validates a pack directory.
pub fn read_pack(dir: impl AsRef<Path>) -> Result<FeaturePack> {
    let dir = dir.as_ref();
    let meta_path = dir.join(PACK_META);
    let meta: PackMeta = read_json(&meta_path)?;
    if meta.format != PACK_FORMAT {
        return Err(Error::meta(
            &meta_path,
            format!("unexpected format tag '{}'", meta.format),
        ));
    }
    if meta.sample_ids.len() != meta.n || meta.labels.len() != meta.n {
        return Err(Error::meta(
            &meta_path,
            format!(
                "n={} but {} sample ids and {} labels",
                meta.n,
                meta.sample_ids.len(),
                meta.labels.len()
            ),
        ));
    }

    let features = read_matrix_f32(&dir.join(PACK_FEATURES), meta.n, meta.feature_dim)?;
    let logits = read_matrix_f32(&dir.join(PACK_LOGITS), meta.n, meta.num_classes)?;
    let pack = FeaturePack {
        sample_ids: meta.sample_ids,
        labels: meta.labels,
        features,
        logits,
        view: meta.view,
        split: meta.split,
        model_id: meta.model_id,
    };
    pack.validate()?;
    Ok(pack)
}

fn read_matrix_f32(path: &Path, rows: usize, cols: usize) -> Result<Matrix<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = rows * cols * 4;
    if bytes.len() != expected {
        return Err(Error::CorruptPack(format!(
            "{} has {} bytes, expected {rows}x{cols}x4 = {expected}",
            path.display(),
            bytes.len()
        )));
    }
    Matrix::from_vec(rows, cols, binary::f32_from_le_bytes(&bytes)?)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::meta(path, e))
}
