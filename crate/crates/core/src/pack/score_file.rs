use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_json, write_file};
use crate::error::{Error, Result};

/// Scores are always stored so that larger means more out-of-distribution.
pub const ORIENTATION: &str = "ood-positive";

/// Per-sample scores of one scorer on one view.
///
/// Stored as `sample_id,score` CSV plus a JSON sidecar (see [`sidecar_path`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFile {
    pub sample_ids: Vec<String>,
    pub scores: Vec<f64>,
    pub scorer_id: String,
    pub view: String,
    /// Scorer hyperparameters that produced the scores, echoed into reports.
    #[serde(default)]
    pub config: BTreeMap<String, serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    scorer_id: String,
    view: String,
    orientation: String,
    n: usize,
    #[serde(default)]
    config: BTreeMap<String, serde_json::Value>,
}

impl ScoreFile {
    pub fn validate(&self) -> Result<()> {
        if self.sample_ids.len() != self.scores.len() {
            return Err(Error::DimMismatch(format!(
                "{} sample ids but {} scores",
                self.sample_ids.len(),
                self.scores.len()
            )));
        }
        if let Some(row) = self.scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite {
                field: "scores",
                row,
                col: 0,
            });
        }
        Ok(())
    }

    /// Bit-level equality of the score vector plus equality of everything else.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.sample_ids == other.sample_ids
            && self.scorer_id == other.scorer_id
            && self.view == other.view
            && self.config == other.config
            && self.scores.len() == other.scores.len()
            && self
                .scores
                .iter()
                .zip(&other.scores)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// `scores.csv` -> `scores.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

pub fn write_scores(scores: &ScoreFile, csv_path: impl AsRef<Path>) -> Result<()> {
    scores.validate()?;
    let csv_path = csv_path.as_ref();
    if let Some(parent) = csv_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }

    let mut writer = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::meta(csv_path, e);
    writer.write_record(["sample_id", "score"]).map_err(csv_err)?;
    for (id, s) in scores.sample_ids.iter().zip(&scores.scores) {
        // `{}` on f64 prints the shortest string that parses back to the same bits.
        writer
            .write_record([id.as_str(), &s.to_string()])
            .map_err(csv_err)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::meta(csv_path, e.to_string()))?;
    write_file(csv_path, &bytes)?;

    let sidecar = Sidecar {
        scorer_id: scores.scorer_id.clone(),
        view: scores.view.clone(),
        orientation: ORIENTATION.to_string(),
        n: scores.scores.len(),
        config: scores.config.clone(),
    };
    let side_path = sidecar_path(csv_path);
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::meta(&side_path, e))?;
    write_file(&side_path, text.as_bytes())
}

pub fn read_scores(csv_path: impl AsRef<Path>) -> Result<ScoreFile> {
    let csv_path = csv_path.as_ref();
    let side_path = sidecar_path(csv_path);
    let sidecar: Sidecar = read_json(&side_path)?;
    if sidecar.orientation != ORIENTATION {
        return Err(Error::meta(
            &side_path,
            format!(
                "orientation '{}' is not supported, expected '{ORIENTATION}'",
                sidecar.orientation
            ),
        ));
    }

    let bytes = std::fs::read(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let mut sample_ids = Vec::new();
    let mut scores = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::meta(csv_path, e))?;
        if record.len() != 2 {
            return Err(Error::meta(
                csv_path,
                format!("row {} has {} fields, expected 2", line + 1, record.len()),
            ));
        }
        let score: f64 = record[1]
            .parse()
            .map_err(|e| Error::meta(csv_path, format!("row {}: {e}", line + 1)))?;
        sample_ids.push(record[0].to_string());
        scores.push(score);
    }
    if scores.len() != sidecar.n {
        return Err(Error::meta(
            csv_path,
            format!("sidecar declares {} rows, csv has {}", sidecar.n, scores.len()),
        ));
    }
    let file = ScoreFile {
        sample_ids,
        scores,
        scorer_id: sidecar.scorer_id,
        view: sidecar.view,
        config: sidecar.config,
    };
    file.validate()?;
    Ok(file)
}
