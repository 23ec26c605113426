//! OOD scoring methods.
//!
//! Every score is oriented OOD-positive: a larger value means the sample
//! looks more out-of-distribution, so a single rule (`score >= threshold`
//! means OOD) applies to all of them.
//!
//! | id            | input             | score                                   |
//! |---------------|-------------------|-----------------------------------------|
//! | `msp`         | logits            | `1 - max softmax`                       |
//! | `entropy`     | logits            | softmax entropy                         |
//! | `maxlogit`    | logits            | `-max logit`                            |
//! | `energy`      | logits            | `-T logsumexp(logits / T)`              |
//! | `odin`        | logits            | `1 - max softmax(logits / T)`           |
//! | `mahalanobis` | features          | min squared distance to a class mean    |
//! | `vim`         | features + logits | virtual logit minus logsumexp           |

mod logit;
mod mahalanobis;
mod vim;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::pack::{
    ArchiveBlock, ClassifierHead, FeaturePack, FittedScorerArchive, ScoreFile, Split,
};

pub use logit::{
    logsumexp, score_energy, score_entropy, score_maxlogit, score_msp, score_odin,
};
pub use mahalanobis::MahalanobisModel;
pub use vim::{default_subspace_dim, origin_from_head, VimModel};

pub const DEFAULT_ENERGY_TEMPERATURE: f64 = 1.0;
pub const DEFAULT_ODIN_TEMPERATURE: f64 = 1000.0;
pub const DEFAULT_SHRINKAGE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerId {
    Msp,
    Entropy,
    MaxLogit,
    Energy,
    Odin,
    Mahalanobis,
    Vim,
}

impl ScorerId {
    pub const ALL: [ScorerId; 7] = [
        ScorerId::Msp,
        ScorerId::Entropy,
        ScorerId::MaxLogit,
        ScorerId::Energy,
        ScorerId::Odin,
        ScorerId::Mahalanobis,
        ScorerId::Vim,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScorerId::Msp => "msp",
            ScorerId::Entropy => "entropy",
            ScorerId::MaxLogit => "maxlogit",
            ScorerId::Energy => "energy",
            ScorerId::Odin => "odin",
            ScorerId::Mahalanobis => "mahalanobis",
            ScorerId::Vim => "vim",
        }
    }

    pub fn needs_fit(self) -> bool {
        matches!(self, ScorerId::Mahalanobis | ScorerId::Vim)
    }

    pub fn needs_head(self) -> bool {
        self == ScorerId::Vim
    }
}

impl fmt::Display for ScorerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScorerId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScorerId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown scorer '{s}' (expected one of msp, entropy, maxlogit, energy, odin, mahalanobis, vim)"
                ))
            })
    }
}

/// Scorer choice plus hyperparameters. Unset values fall back to defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub scorer: ScorerId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shrinkage: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subspace_dim: Option<usize>,
}

impl ScorerConfig {
    pub fn new(scorer: ScorerId) -> Self {
        Self {
            scorer,
            temperature: None,
            shrinkage: None,
            subspace_dim: None,
        }
    }

    pub fn temperature(&self) -> f64 {
        self.temperature.unwrap_or(match self.scorer {
            ScorerId::Odin => DEFAULT_ODIN_TEMPERATURE,
            _ => DEFAULT_ENERGY_TEMPERATURE,
        })
    }

    pub fn shrinkage(&self) -> f64 {
        self.shrinkage.unwrap_or(DEFAULT_SHRINKAGE)
    }

    pub fn subspace_dim(&self, feature_dim: usize) -> usize {
        self.subspace_dim
            .unwrap_or_else(|| default_subspace_dim(feature_dim))
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.temperature();
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "temperature must be positive, got {t}"
            )));
        }
        let eps = self.shrinkage();
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "shrinkage must be non-negative, got {eps}"
            )));
        }
        if self.subspace_dim == Some(0) {
            return Err(Error::InvalidParameter("subspace_dim must be >= 1".into()));
        }
        Ok(())
    }

    /// The hyperparameters that affect this scorer, with defaults filled in.
    pub fn echo(&self, feature_dim: Option<usize>) -> BTreeMap<String, serde_json::Value> {
        let mut out = BTreeMap::new();
        out.insert("scorer".into(), json!(self.scorer.as_str()));
        match self.scorer {
            ScorerId::Energy | ScorerId::Odin => {
                out.insert("temperature".into(), json!(self.temperature()));
            }
            ScorerId::Mahalanobis => {
                out.insert("shrinkage".into(), json!(self.shrinkage()));
                out.insert("covariance".into(), json!("shared, 1/n, trace-scaled ridge"));
                out.insert("reduction".into(), json!("min over classes"));
            }
            ScorerId::Vim => {
                if let Some(m) = feature_dim {
                    out.insert("subspace_dim".into(), json!(self.subspace_dim(m)));
                }
            }
            _ => {}
        }
        if self.scorer == ScorerId::Odin {
            out.insert("input_perturbation".into(), json!(false));
        }
        out
    }
}

/// A fitted feature-based scorer.
#[derive(Debug, Clone)]
pub enum FittedScorer {
    Mahalanobis(MahalanobisModel),
    Vim(VimModel),
}

impl FittedScorer {
    pub fn scorer_id(&self) -> ScorerId {
        match self {
            FittedScorer::Mahalanobis(_) => ScorerId::Mahalanobis,
            FittedScorer::Vim(_) => ScorerId::Vim,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            FittedScorer::Mahalanobis(m) => m.feature_dim(),
            FittedScorer::Vim(v) => v.feature_dim(),
        }
    }

    pub fn warnings(&self) -> &[String] {
        match self {
            FittedScorer::Mahalanobis(_) => &[],
            FittedScorer::Vim(v) => v.warnings(),
        }
    }

    /// Human-readable fit summary (condition number or eigen-spectrum).
    pub fn diagnostics(&self) -> BTreeMap<String, serde_json::Value> {
        let mut d = BTreeMap::new();
        match self {
            FittedScorer::Mahalanobis(m) => {
                d.insert("condition_number".into(), json!(m.condition_number()));
            }
            FittedScorer::Vim(v) => {
                d.insert("alpha".into(), json!(v.alpha()));
                let ev = v.eigenvalues();
                if !ev.is_empty() {
                    let cut = ev.len() - v.subspace_dim();
                    let residual: f64 = ev[..cut].iter().sum();
                    let total: f64 = ev.iter().sum();
                    d.insert("eigenvalue_min".into(), json!(ev[0]));
                    d.insert("eigenvalue_max".into(), json!(ev[ev.len() - 1]));
                    d.insert("eigenvalue_at_cut_residual".into(), json!(ev[cut - 1]));
                    d.insert("eigenvalue_at_cut_principal".into(), json!(ev[cut]));
                    if total > 0.0 {
                        d.insert(
                            "residual_variance_fraction".into(),
                            json!(residual / total),
                        );
                    }
                }
            }
        }
        d
    }

    pub fn to_archive(&self, config: &ScorerConfig) -> FittedScorerArchive {
        let mut hyper = BTreeMap::new();
        let (num_classes, blocks) = match self {
            FittedScorer::Mahalanobis(model) => {
                hyper.insert("shrinkage".into(), json!(model.shrinkage()));
                let means = model.class_means();
                let p = model.precision();
                (
                    model.num_classes(),
                    vec![
                        ArchiveBlock::new(
                            "class_means",
                            means.nrows(),
                            means.ncols(),
                            row_major(means),
                        ),
                        ArchiveBlock::new("precision", p.nrows(), p.ncols(), row_major(p)),
                        ArchiveBlock::scalar("shrinkage", model.shrinkage()),
                        ArchiveBlock::scalar("condition_number", model.condition_number()),
                    ],
                )
            }
            FittedScorer::Vim(model) => {
                hyper.insert("subspace_dim".into(), json!(model.subspace_dim()));
                let r = model.residual_basis();
                (
                    0,
                    vec![
                        ArchiveBlock::new(
                            "origin",
                            1,
                            model.feature_dim(),
                            model.origin().iter().copied().collect(),
                        ),
                        ArchiveBlock::new("residual_basis", r.nrows(), r.ncols(), row_major(r)),
                        ArchiveBlock::scalar("alpha", model.alpha()),
                        ArchiveBlock::scalar("subspace_dim", model.subspace_dim() as f64),
                    ],
                )
            }
        };
        for (k, v) in config.echo(Some(self.feature_dim())) {
            hyper.entry(k).or_insert(v);
        }
        FittedScorerArchive {
            scorer_id: self.scorer_id().as_str().to_string(),
            feature_dim: self.feature_dim(),
            num_classes,
            hyperparameters: hyper,
            diagnostics: self.diagnostics(),
            warnings: self.warnings().to_vec(),
            blocks,
        }
    }

    pub fn from_archive(archive: &FittedScorerArchive) -> Result<Self> {
        let id: ScorerId = archive.scorer_id.parse()?;
        let matrix = |name: &str| -> Result<DMatrix<f64>> {
            let b = archive.block(name)?;
            Ok(DMatrix::from_row_slice(b.rows, b.cols, &b.data))
        };
        match id {
            ScorerId::Mahalanobis => Ok(FittedScorer::Mahalanobis(MahalanobisModel::from_parts(
                matrix("class_means")?,
                matrix("precision")?,
                archive.scalar("shrinkage")?,
                archive.scalar("condition_number")?,
            )?)),
            ScorerId::Vim => {
                let origin = archive.block("origin")?;
                Ok(FittedScorer::Vim(VimModel::from_parts(
                    DVector::from_column_slice(&origin.data),
                    matrix("residual_basis")?,
                    archive.scalar("alpha")?,
                    archive.scalar("subspace_dim")? as usize,
                )?))
            }
            other => Err(Error::Usage(format!("{other} requires no fitting"))),
        }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Pack features widened to an n x m f64 matrix.
pub fn features_f64(pack: &FeaturePack) -> DMatrix<f64> {
    DMatrix::from_row_iterator(
        pack.n(),
        pack.feature_dim(),
        pack.features.as_slice().iter().map(|&v| f64::from(v)),
    )
}

pub fn logits_f64(pack: &FeaturePack) -> DMatrix<f64> {
    DMatrix::from_row_iterator(
        pack.n(),
        pack.num_classes(),
        pack.logits.as_slice().iter().map(|&v| f64::from(v)),
    )
}

/// Fits a Mahalanobis model on a train pack.
pub fn fit_mahalanobis(train: &FeaturePack, shrinkage: f64) -> Result<MahalanobisModel> {
    require_train(train)?;
    let labels = id_labels(train)?;
    MahalanobisModel::fit(&features_f64(train), &labels, train.num_classes(), shrinkage)
}

/// Fits a ViM model on a train pack; logits are taken from the pack.
pub fn fit_vim(train: &FeaturePack, head: &ClassifierHead, subspace_dim: usize) -> Result<VimModel> {
    require_train(train)?;
    head.check_dims(train)?;
    VimModel::fit(&features_f64(train), &logits_f64(train), head, subspace_dim)
}

/// Fits whichever model `config` names.
pub fn fit(
    config: &ScorerConfig,
    train: &FeaturePack,
    head: Option<&ClassifierHead>,
) -> Result<FittedScorer> {
    config.validate()?;
    match config.scorer {
        ScorerId::Mahalanobis => Ok(FittedScorer::Mahalanobis(fit_mahalanobis(
            train,
            config.shrinkage(),
        )?)),
        ScorerId::Vim => {
            let head = head.ok_or_else(|| {
                Error::Usage("vim needs the classifier head (--head)".into())
            })?;
            let d = config.subspace_dim(train.feature_dim());
            Ok(FittedScorer::Vim(fit_vim(train, head, d)?))
        }
        other => Err(Error::Usage(format!("{other} requires no fitting"))),
    }
}

fn require_train(pack: &FeaturePack) -> Result<()> {
    if pack.split != Split::Train {
        return Err(Error::InvalidParameter(format!(
            "scorers are fitted on a train pack, got split '{}'",
            pack.split
        )));
    }
    Ok(())
}

fn id_labels(pack: &FeaturePack) -> Result<Vec<usize>> {
    pack.labels
        .iter()
        .zip(&pack.sample_ids)
        .map(|(l, id)| {
            l.class_index().ok_or_else(|| {
                Error::InvalidLabel(format!("sample '{id}' in the train pack has no class index"))
            })
        })
        .collect()
}

/// Scores every row of `pack`. Rows are scored in parallel on the current
/// rayon pool; the output order and bits do not depend on the pool size.
pub fn score_pack(
    config: &ScorerConfig,
    pack: &FeaturePack,
    fitted: Option<&FittedScorer>,
) -> Result<ScoreFile> {
    config.validate()?;
    if config.scorer.needs_fit() {
        let model = fitted.ok_or_else(|| {
            Error::Usage(format!("{} needs a fitted archive", config.scorer))
        })?;
        if model.scorer_id() != config.scorer {
            return Err(Error::Usage(format!(
                "archive was fitted for {} but {} was requested",
                model.scorer_id(),
                config.scorer
            )));
        }
        if model.feature_dim() != pack.feature_dim() {
            return Err(Error::DimMismatch(format!(
                "archive expects m={} but pack has m={}",
                model.feature_dim(),
                pack.feature_dim()
            )));
        }
        if let FittedScorer::Mahalanobis(maha) = model {
            if maha.num_classes() != pack.num_classes() {
                return Err(Error::DimMismatch(format!(
                    "archive has {} classes but pack has C={}",
                    maha.num_classes(),
                    pack.num_classes()
                )));
            }
        }
    }

    let t = config.temperature();
    let scores: Vec<f64> = (0..pack.n())
        .into_par_iter()
        .map(|i| {
            let logits = pack.logit_row_f64(i);
            match (config.scorer, fitted) {
                (ScorerId::Msp, _) => logit::msp_unchecked(&logits),
                (ScorerId::Entropy, _) => logit::entropy_unchecked(&logits),
                (ScorerId::MaxLogit, _) => logit::maxlogit_unchecked(&logits),
                (ScorerId::Energy, _) => logit::energy_unchecked(&logits, t),
                (ScorerId::Odin, _) => logit::odin_unchecked(&logits, t),
                (ScorerId::Mahalanobis, Some(FittedScorer::Mahalanobis(m))) => {
                    m.score(&pack.feature_row_f64(i))
                }
                (ScorerId::Vim, Some(FittedScorer::Vim(v))) => {
                    v.score(&pack.feature_row_f64(i), &logits)
                }
                _ => unreachable!("fitted model checked above"),
            }
        })
        .collect();

    let file = ScoreFile {
        sample_ids: pack.sample_ids.clone(),
        scores,
        scorer_id: config.scorer.as_str().to_string(),
        view: pack.view.clone(),
        config: config.echo(Some(pack.feature_dim())),
    };
    file.validate()?;
    Ok(file)
}
