//! Evaluation of OOD-positive scores.
//!
//! Conventions used throughout:
//!
//! * ID is the positive class for TPR; FPR is measured on OOD samples.
//! * A sample is declared OOD iff `score >= threshold`, so "predicted ID"
//!   means `score < threshold`.
//! * Thresholds are exact order statistics, never interpolated.

mod report;
mod table;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pack::ScoreFile;

pub use report::{compare_reports, evaluate, mean_over_views, DeltaSummary, EvalReport};
pub use table::{Grid, GridCell};

pub const DEFAULT_TPR_TARGET: f64 = 0.95;

fn check_scores(scores: &[f64], what: &'static str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::EmptyInput(what));
    }
    if let Some(row) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            field: what,
            row,
            col: 0,
        });
    }
    Ok(())
}

fn check_target(tpr_target: f64) -> Result<()> {
    if tpr_target > 0.0 && tpr_target < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "TPR target must lie strictly between 0 and 1, got {tpr_target}"
        )))
    }
}

fn sorted(scores: &[f64]) -> Vec<f64> {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    v
}

/// Area under the ROC curve with OOD as the high-scoring class.
///
/// Mann-Whitney form: the fraction of (ID, OOD) pairs where the OOD score is
/// larger, ties counting one half. Computed from mid-rank sums after one
/// sort; the numerator is accumulated in integers so the result is exactly
/// the pairwise count divided by `n_id * n_ood`.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_scores(id_scores, "id scores")?;
    check_scores(ood_scores, "ood scores")?;
    let n_ood = ood_scores.len() as u128;
    let n_id = id_scores.len() as u128;

    let mut all: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, false))
        .chain(ood_scores.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));

    // Sum over OOD samples of twice their 1-based mid-rank.
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < all.len() {
        let mut end = start + 1;
        while end < all.len() && all[end].0 == all[start].0 {
            end += 1;
        }
        let group = (end - start) as u128;
        let ood_in_group = all[start..end].iter().filter(|(_, ood)| *ood).count() as u128;
        twice_rank_sum += ood_in_group * (2 * start as u128 + group + 1);
        start = end;
    }
    let twice_u = twice_rank_sum - n_ood * (n_ood + 1);
    Ok(twice_u as f64 / (2 * n_id * n_ood) as f64)
}

/// Smallest `k` such that `k / n >= tpr_target` (evaluated in f64).
pub fn required_count(tpr_target: f64, n: usize) -> usize {
    let nf = n as f64;
    let mut k = ((tpr_target * nf).ceil() as usize).clamp(1, n);
    while k > 1 && ((k - 1) as f64 / nf) >= tpr_target {
        k -= 1;
    }
    while k < n && (k as f64 / nf) < tpr_target {
        k += 1;
    }
    k
}

/// Threshold fitted on ID validation scores.
///
/// Returns the smallest observed ID score `lambda` such that at least
/// `required_count(tpr_target, n)` ID scores lie strictly below it. Fails
/// when no observed score qualifies (e.g. all scores equal), since samples
/// equal to the threshold are classified OOD.
pub fn fit_threshold(id_val_scores: &[f64], tpr_target: f64) -> Result<f64> {
    match threshold_search(id_val_scores, tpr_target)? {
        ThresholdSearch::Found(lambda) => Ok(lambda),
        ThresholdSearch::Unattainable { kth, k, n } => Err(Error::DegenerateScores(format!(
            "{k} of {n} ID scores must fall strictly below the threshold but no observed \
             score exceeds {kth}"
        ))),
    }
}

pub(crate) enum ThresholdSearch {
    Found(f64),
    Unattainable { kth: f64, k: usize, n: usize },
}

pub(crate) fn threshold_search(scores: &[f64], tpr_target: f64) -> Result<ThresholdSearch> {
    check_target(tpr_target)?;
    check_scores(scores, "id scores")?;
    let s = sorted(scores);
    let k = required_count(tpr_target, s.len());
    let kth = s[k - 1];
    Ok(match s[k..].iter().find(|&&v| v > kth) {
        Some(&lambda) => ThresholdSearch::Found(lambda),
        None => ThresholdSearch::Unattainable { kth, k, n: s.len() },
    })
}

/// Fraction of OOD scores strictly below `threshold` (OOD passing as ID).
pub fn fpr_at_threshold(ood_scores: &[f64], threshold: f64) -> f64 {
    let passed = ood_scores.iter().filter(|&&s| s < threshold).count();
    passed as f64 / ood_scores.len() as f64
}

/// FPR on OOD at the threshold where ID keeps `tpr_target` TPR.
pub fn fpr_at_tpr(id_scores: &[f64], ood_scores: &[f64], tpr_target: f64) -> Result<f64> {
    check_scores(ood_scores, "ood scores")?;
    let lambda = fit_threshold(id_scores, tpr_target)?;
    Ok(fpr_at_threshold(ood_scores, lambda))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    #[serde(rename = "ID")]
    Id,
    #[serde(rename = "OOD")]
    Ood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub sample_id: String,
    pub score: f64,
    pub decision: Decision,
}

/// OOD iff `score >= threshold`.
pub fn classify(scores: &ScoreFile, threshold: f64) -> Vec<Verdict> {
    scores
        .sample_ids
        .iter()
        .zip(&scores.scores)
        .map(|(id, &score)| Verdict {
            sample_id: id.clone(),
            score,
            decision: if score >= threshold {
                Decision::Ood
            } else {
                Decision::Id
            },
        })
        .collect()
}
