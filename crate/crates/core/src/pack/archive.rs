use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{binary, read_json, write_file};
use crate::error::{Error, Result};

pub const ARCHIVE_META: &str = "archive.json";
pub const ARCHIVE_PAYLOAD: &str = "payload.bin";

/// A named real-valued array inside an archive payload.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl ArchiveBlock {
    pub fn new(name: &str, rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Self {
            name: name.to_string(),
            rows,
            cols,
            data,
        }
    }

    pub fn scalar(name: &str, value: f64) -> Self {
        Self::new(name, 1, 1, vec![value])
    }
}

/// Persisted state of a fitted feature-based scorer.
///
/// On disk: `archive.json` (metadata plus the block table) and `payload.bin`
/// (every block's data as little-endian f64, concatenated in table order).
#[derive(Debug, Clone, PartialEq)]
pub struct FittedScorerArchive {
    pub scorer_id: String,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub hyperparameters: BTreeMap<String, serde_json::Value>,
    pub diagnostics: BTreeMap<String, serde_json::Value>,
    pub warnings: Vec<String>,
    pub blocks: Vec<ArchiveBlock>,
}

#[derive(Serialize, Deserialize)]
struct BlockEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct ArchiveMeta {
    format: String,
    scorer_id: String,
    feature_dim: usize,
    num_classes: usize,
    hyperparameters: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    diagnostics: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    warnings: Vec<String>,
    blocks: Vec<BlockEntry>,
}

impl FittedScorerArchive {
    pub fn block(&self, name: &str) -> Result<&ArchiveBlock> {
        self.blocks.iter().find(|b| b.name == name).ok_or_else(|| {
            Error::CorruptPack(format!(
                "archive for '{}' has no block '{name}'",
                self.scorer_id
            ))
        })
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let b = self.block(name)?;
        match b.data.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::CorruptPack(format!("block '{name}' is not a scalar"))),
        }
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.scorer_id == other.scorer_id
            && self.feature_dim == other.feature_dim
            && self.num_classes == other.num_classes
            && self.hyperparameters == other.hyperparameters
            && self.diagnostics == other.diagnostics
            && self.warnings == other.warnings
            && self.blocks.len() == other.blocks.len()
            && self.blocks.iter().zip(&other.blocks).all(|(a, b)| {
                a.name == b.name
                    && a.rows == b.rows
                    && a.cols == b.cols
                    && a.data.len() == b.data.len()
                    && a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = ArchiveMeta {
            format: "ttaood-archive".into(),
            scorer_id: self.scorer_id.clone(),
            feature_dim: self.feature_dim,
            num_classes: self.num_classes,
            hyperparameters: self.hyperparameters.clone(),
            diagnostics: self.diagnostics.clone(),
            warnings: self.warnings.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockEntry {
                    name: b.name.clone(),
                    rows: b.rows,
                    cols: b.cols,
                })
                .collect(),
        };
        let meta_path = dir.join(ARCHIVE_META);
        let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::meta(&meta_path, e))?;
        write_file(&meta_path, text.as_bytes())?;

        let mut payload = Vec::new();
        for b in &self.blocks {
            payload.extend(binary::f64_to_le_bytes(&b.data));
        }
        write_file(&dir.join(ARCHIVE_PAYLOAD), &payload)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: ArchiveMeta = read_json(&dir.join(ARCHIVE_META))?;
        let payload_path = dir.join(ARCHIVE_PAYLOAD);
        let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
        let values = binary::f64_from_le_bytes(&bytes)?;

        let total: usize = meta.blocks.iter().map(|b| b.rows * b.cols).sum();
        if total != values.len() {
            return Err(Error::CorruptPack(format!(
                "{} holds {} values but the block table needs {total}",
                payload_path.display(),
                values.len()
            )));
        }
        let mut offset = 0;
        let blocks = meta
            .blocks
            .into_iter()
            .map(|e| {
                let len = e.rows * e.cols;
                let data = values[offset..offset + len].to_vec();
                offset += len;
                ArchiveBlock {
                    name: e.name,
                    rows: e.rows,
                    cols: e.cols,
                    data,
                }
            })
            .collect();

        Ok(Self {
            scorer_id: meta.scorer_id,
            feature_dim: meta.feature_dim,
            num_classes: meta.num_classes,
            hyperparameters: meta.hyperparameters,
            diagnostics: meta.diagnostics,
            warnings: meta.warnings,
            blocks,
        })
    }
}
