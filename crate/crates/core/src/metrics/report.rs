use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{auroc, fpr_at_threshold, threshold_search, ThresholdSearch};
use crate::augment::{DEFAULT_FACTOR_RANGE, DEFAULT_HUE_RANGE};
use crate::error::{Error, Result};
use crate::pack::ScoreFile;

/// One (scorer x view) cell of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scorer_id: String,
    pub view: String,
    pub auroc: f64,
    pub fpr_at_tpr: f64,
    pub tpr_target: f64,
    /// Decision threshold: OOD iff `score >= threshold`.
    pub threshold: f64,
    /// True when no observed ID score could serve as the threshold and the
    /// next representable value above the required order statistic was used.
    pub threshold_degenerate: bool,
    pub per_ood_class: BTreeMap<String, f64>,
    pub per_ood_class_counts: BTreeMap<String, usize>,
    pub mean_ood_score: f64,
    pub mean_id_score: f64,
    pub n_id: usize,
    pub n_ood: usize,
    pub config: BTreeMap<String, serde_json::Value>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidParameter(format!("report serialisation failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("malformed report JSON: {e}")))
    }
}

/// Order-independent mean: values are summed in sorted order.
fn mean(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    v.iter().sum::<f64>() / v.len() as f64
}

fn protocol_echo(tpr_target: f64) -> BTreeMap<String, serde_json::Value> {
    BTreeMap::from([
        ("tpr_target".into(), json!(tpr_target)),
        ("positive_class".into(), json!("id")),
        (
            "fpr_definition".into(),
            json!("fraction of OOD scores below the threshold fitted on the ID scores"),
        ),
        (
            "threshold_rule".into(),
            json!("smallest observed ID score with at least ceil(tpr*n) ID scores strictly below; score >= threshold is OOD"),
        ),
        ("orientation".into(), json!(crate::pack::ORIENTATION)),
        ("aggregation".into(), json!("augmented view only")),
        (
            "jitter_defaults".into(),
            json!({
                "brightness": [DEFAULT_FACTOR_RANGE.0, DEFAULT_FACTOR_RANGE.1],
                "contrast": [DEFAULT_FACTOR_RANGE.0, DEFAULT_FACTOR_RANGE.1],
                "saturation": [DEFAULT_FACTOR_RANGE.0, DEFAULT_FACTOR_RANGE.1],
                "hue_degrees": [DEFAULT_HUE_RANGE.0, DEFAULT_HUE_RANGE.1],
                "order": "brightness, contrast, saturation, hue",
                "sampling": "factors drawn once per spec from its seed and shared by all images",
            }),
        ),
    ])
}

/// Builds the full report for one cell.
///
/// The threshold is fitted on `id_scores`; per-class FPRs reuse it on the
/// subset of OOD samples carrying each tag. `ood_labels`, when given, must
/// align with `ood_scores`.
pub fn evaluate(
    id_scores: &ScoreFile,
    ood_scores: &ScoreFile,
    ood_labels: Option<&[String]>,
    tpr_target: f64,
) -> Result<EvalReport> {
    id_scores.validate()?;
    ood_scores.validate()?;
    if id_scores.scorer_id != ood_scores.scorer_id {
        return Err(Error::ScoreMismatch(format!(
            "scorer '{}' vs '{}'",
            id_scores.scorer_id, ood_scores.scorer_id
        )));
    }
    if id_scores.view != ood_scores.view {
        return Err(Error::ScoreMismatch(format!(
            "view '{}' vs '{}'",
            id_scores.view, ood_scores.view
        )));
    }
    if let Some(labels) = ood_labels {
        if labels.len() != ood_scores.scores.len() {
            return Err(Error::DimMismatch(format!(
                "{} OOD labels for {} OOD scores",
                labels.len(),
                ood_scores.scores.len()
            )));
        }
    }

    let id = &id_scores.scores;
    let ood = &ood_scores.scores;
    let auc = auroc(id, ood)?;
    let (threshold, degenerate) = match threshold_search(id, tpr_target)? {
        ThresholdSearch::Found(l) => (l, false),
        ThresholdSearch::Unattainable { kth, .. } => (kth.next_up(), true),
    };
    let fpr = fpr_at_threshold(ood, threshold);

    let mut per_class: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    if let Some(labels) = ood_labels {
        for (tag, &s) in labels.iter().zip(ood) {
            per_class.entry(tag.clone()).or_default().push(s);
        }
    }
    let per_ood_class = per_class
        .iter()
        .map(|(tag, s)| (tag.clone(), fpr_at_threshold(s, threshold)))
        .collect();
    let per_ood_class_counts = per_class
        .iter()
        .map(|(tag, s)| (tag.clone(), s.len()))
        .collect();

    let mut config = protocol_echo(tpr_target);
    for (k, v) in &id_scores.config {
        config.insert(k.clone(), v.clone());
    }

    Ok(EvalReport {
        scorer_id: id_scores.scorer_id.clone(),
        view: id_scores.view.clone(),
        auroc: auc,
        fpr_at_tpr: fpr,
        tpr_target,
        threshold,
        threshold_degenerate: degenerate,
        per_ood_class,
        per_ood_class_counts,
        mean_ood_score: mean(ood),
        mean_id_score: mean(id),
        n_id: id.len(),
        n_ood: ood.len(),
        config,
    })
}

/// Averages per-sample scores over several views of the same samples.
///
/// The result carries the view tag `mean(<v1>|<v2>|...)`.
pub fn mean_over_views(views: &[&ScoreFile]) -> Result<ScoreFile> {
    let first = views
        .first()
        .ok_or(Error::EmptyInput("score files to aggregate"))?;
    for v in &views[1..] {
        if v.sample_ids != first.sample_ids {
            return Err(Error::ScoreMismatch(format!(
                "views '{}' and '{}' cover different samples",
                first.view, v.view
            )));
        }
        if v.scorer_id != first.scorer_id {
            return Err(Error::ScoreMismatch(format!(
                "scorer '{}' vs '{}'",
                first.scorer_id, v.scorer_id
            )));
        }
    }
    let k = views.len() as f64;
    let scores = (0..first.scores.len())
        .map(|i| views.iter().map(|v| v.scores[i]).sum::<f64>() / k)
        .collect();
    let tag = views.iter().map(|v| v.view.as_str()).collect::<Vec<_>>().join("|");
    let mut config = first.config.clone();
    config.insert("aggregation".into(), json!("mean over views"));
    Ok(ScoreFile {
        sample_ids: first.sample_ids.clone(),
        scores,
        scorer_id: first.scorer_id.clone(),
        view: format!("mean({tag})"),
        config,
    })
}

/// Change from a baseline cell to a test-time-augmented cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub scorer_id: String,
    pub baseline_view: String,
    pub view: String,
    /// `tta.auroc - baseline.auroc`; positive is better.
    pub delta_auroc: f64,
    /// `tta.fpr - baseline.fpr`; negative is better.
    pub delta_fpr: f64,
    pub delta_mean_ood_score: f64,
    pub auroc_improved: bool,
    pub fpr_improved: bool,
}

pub fn compare_reports(baseline: &EvalReport, tta: &EvalReport) -> Result<DeltaSummary> {
    if baseline.scorer_id != tta.scorer_id {
        return Err(Error::ScoreMismatch(format!(
            "cannot compare scorer '{}' with '{}'",
            baseline.scorer_id, tta.scorer_id
        )));
    }
    let delta_auroc = tta.auroc - baseline.auroc;
    let delta_fpr = tta.fpr_at_tpr - baseline.fpr_at_tpr;
    Ok(DeltaSummary {
        scorer_id: tta.scorer_id.clone(),
        baseline_view: baseline.view.clone(),
        view: tta.view.clone(),
        delta_auroc,
        delta_fpr,
        delta_mean_ood_score: tta.mean_ood_score - baseline.mean_ood_score,
        auroc_improved: delta_auroc > 0.0,
        fpr_improved: delta_fpr < 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(view: &str, ids: &[&str], scores: &[f64]) -> ScoreFile {
        ScoreFile {
            sample_ids: ids.iter().map(|s| s.to_string()).collect(),
            scores: scores.to_vec(),
            scorer_id: "maxlogit".into(),
            view: view.into(),
            config: BTreeMap::new(),
        }
    }

    fn report(view: &str, auroc: f64, fpr: f64) -> EvalReport {
        EvalReport {
            scorer_id: "vim".into(),
            view: view.into(),
            auroc,
            fpr_at_tpr: fpr,
            tpr_target: 0.95,
            threshold: 0.0,
            threshold_degenerate: false,
            per_ood_class: BTreeMap::new(),
            per_ood_class_counts: BTreeMap::new(),
            mean_ood_score: 0.0,
            mean_id_score: 0.0,
            n_id: 1,
            n_ood: 1,
            config: BTreeMap::new(),
        }
    }

    #[test]
    fn mean_ood_score() {
        let id = file("none", &["a", "b"], &[0.0, 0.5]);
        let ood = file("none", &["x", "y", "z"], &[1.0, 2.0, 3.0]);
        let r = evaluate(&id, &ood, None, 0.95).unwrap();
        assert_eq!(r.mean_ood_score, 2.0);
        assert_eq!((r.n_id, r.n_ood), (2, 3));
    }

    #[test]
    fn mismatched_files_are_rejected() {
        let id = file("none", &["a"], &[0.0]);
        let ood = file("hflip", &["x"], &[1.0]);
        assert!(matches!(
            evaluate(&id, &ood, None, 0.95),
            Err(Error::ScoreMismatch(_))
        ));
        let mut other = file("none", &["x"], &[1.0]);
        other.scorer_id = "msp".into();
        assert!(matches!(
            evaluate(&id, &other, None, 0.95),
            Err(Error::ScoreMismatch(_))
        ));
    }

    #[test]
    fn degenerate_scores_are_flagged() {
        let id = file("none", &["a", "b", "c"], &[1.0, 1.0, 1.0]);
        let ood = file("none", &["x", "y"], &[1.0, 2.0]);
        let r = evaluate(&id, &ood, None, 0.95).unwrap();
        assert!(r.threshold_degenerate);
        assert!(r.threshold > 1.0 && r.threshold < 1.0 + 1e-12);
        assert_eq!(r.fpr_at_tpr, 0.5);
    }

    #[test]
    fn reference_deltas() {
        let base = report("none", 0.8965, 0.2986);
        let vflip = report("vflip", 0.895, 0.2642);
        let d = compare_reports(&base, &vflip).unwrap();
        assert!((d.delta_fpr * 100.0 - (-3.44)).abs() < 1e-9);
        assert!(d.fpr_improved);

        let hv = report("hflip+vflip", 0.9037, 0.267);
        let d = compare_reports(&base, &hv).unwrap();
        assert!((d.delta_auroc * 100.0 - 0.72).abs() < 1e-9);
        assert!(d.auroc_improved);

        let same = compare_reports(&base, &base).unwrap();
        assert_eq!((same.delta_auroc, same.delta_fpr), (0.0, 0.0));
        assert!(!same.auroc_improved && !same.fpr_improved);
    }

    #[test]
    fn views_average() {
        let a = file("none", &["p", "q"], &[1.0, 2.0]);
        let b = file("hflip", &["p", "q"], &[3.0, 6.0]);
        let m = mean_over_views(&[&a, &b]).unwrap();
        assert_eq!(m.scores, vec![2.0, 4.0]);
        assert_eq!(m.view, "mean(none|hflip)");
        let c = file("vflip", &["q", "p"], &[0.0, 0.0]);
        assert!(mean_over_views(&[&a, &c]).is_err());
    }
}
