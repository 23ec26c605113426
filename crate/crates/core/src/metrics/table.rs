//! Result grids: one row per view, one column group per scorer.
//!
//! The first view is the baseline (normally `none`). In the CSV and text
//! renderings a metric is marked `best` when it is the best value in its
//! column (ties all marked) and `improved` when it beats the baseline row.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::report::{compare_reports, DeltaSummary, EvalReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub view: String,
    pub scorer_id: String,
    /// `None` when the cell could not be computed (e.g. missing pack).
    pub report: Option<EvalReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absent_reason: Option<String>,
}

impl GridCell {
    pub fn present(report: EvalReport) -> Self {
        Self {
            view: report.view.clone(),
            scorer_id: report.scorer_id.clone(),
            report: Some(report),
            absent_reason: None,
        }
    }

    pub fn absent(view: &str, scorer_id: &str, reason: impl Into<String>) -> Self {
        Self {
            view: view.into(),
            scorer_id: scorer_id.into(),
            report: None,
            absent_reason: Some(reason.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub views: Vec<String>,
    pub scorers: Vec<String>,
    /// Row-major: `cells[v * scorers.len() + s]`.
    pub cells: Vec<GridCell>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Marks {
    best: bool,
    improved: bool,
}

impl Marks {
    fn label(self) -> &'static str {
        match (self.best, self.improved) {
            (true, true) => "best|improved",
            (true, false) => "best",
            (false, true) => "improved",
            (false, false) => "",
        }
    }

    fn decorate(self, text: String) -> String {
        let text = if self.improved { format!("_{text}_") } else { text };
        if self.best {
            format!("**{text}**")
        } else {
            text
        }
    }
}

fn pct(v: f64) -> String {
    format!("{:.4}", v * 100.0)
}

fn csv_string(rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r)
            .map_err(|e| Error::InvalidParameter(format!("csv encoding failed: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidParameter(format!("csv encoding failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

impl Grid {
    /// Cells must be given row-major and match `views` x `scorers`.
    pub fn new(views: Vec<String>, scorers: Vec<String>, cells: Vec<GridCell>) -> Result<Self> {
        if views.is_empty() || scorers.is_empty() {
            return Err(Error::EmptyInput("grid views and scorers"));
        }
        if cells.len() != views.len() * scorers.len() {
            return Err(Error::DimMismatch(format!(
                "{} cells for {} views x {} scorers",
                cells.len(),
                views.len(),
                scorers.len()
            )));
        }
        for (i, cell) in cells.iter().enumerate() {
            let (v, s) = (i / scorers.len(), i % scorers.len());
            if cell.view != views[v] || cell.scorer_id != scorers[s] {
                return Err(Error::DimMismatch(format!(
                    "cell {i} is ({}, {}) but the layout expects ({}, {})",
                    cell.view, cell.scorer_id, views[v], scorers[s]
                )));
            }
        }
        Ok(Self {
            views,
            scorers,
            cells,
        })
    }

    pub fn baseline_view(&self) -> &str {
        &self.views[0]
    }

    pub fn cell(&self, view: usize, scorer: usize) -> &GridCell {
        &self.cells[view * self.scorers.len() + scorer]
    }

    pub fn report(&self, view: usize, scorer: usize) -> Option<&EvalReport> {
        self.cell(view, scorer).report.as_ref()
    }

    /// Change relative to the baseline row; `None` for the baseline itself
    /// or when either cell is absent.
    pub fn delta(&self, view: usize, scorer: usize) -> Option<DeltaSummary> {
        if view == 0 {
            return None;
        }
        let base = self.report(0, scorer)?;
        let tta = self.report(view, scorer)?;
        compare_reports(base, tta).ok()
    }

    fn marks(&self, view: usize, scorer: usize) -> Option<(Marks, Marks)> {
        let r = self.report(view, scorer)?;
        let column = (0..self.views.len()).filter_map(|v| self.report(v, scorer));
        let (best_auc, best_fpr) = column.fold((f64::NEG_INFINITY, f64::INFINITY), |(a, f), c| {
            (a.max(c.auroc), f.min(c.fpr_at_tpr))
        });
        let delta = self.delta(view, scorer);
        Some((
            Marks {
                best: r.auroc == best_auc,
                improved: delta.as_ref().is_some_and(|d| d.auroc_improved),
            },
            Marks {
                best: r.fpr_at_tpr == best_fpr,
                improved: delta.as_ref().is_some_and(|d| d.fpr_improved),
            },
        ))
    }

    fn role(view: usize) -> &'static str {
        if view == 0 {
            "baseline"
        } else {
            "tta"
        }
    }

    /// Main grid as CSV; metric values are percentages.
    pub fn to_csv(&self) -> Result<String> {
        let mut header = vec!["view".to_string(), "role".to_string()];
        for s in &self.scorers {
            for col in ["auc", "fpr", "delta_auc", "delta_fpr", "auc_mark", "fpr_mark", "mean_ood"] {
                header.push(format!("{s}_{col}"));
            }
        }
        let mut rows = vec![header];
        for (v, view) in self.views.iter().enumerate() {
            let mut row = vec![view.clone(), Self::role(v).to_string()];
            for s in 0..self.scorers.len() {
                match (self.report(v, s), self.marks(v, s)) {
                    (Some(r), Some((am, fm))) => {
                        let d = self.delta(v, s);
                        row.push(pct(r.auroc));
                        row.push(pct(r.fpr_at_tpr));
                        row.push(d.as_ref().map(|d| pct(d.delta_auroc)).unwrap_or_default());
                        row.push(d.as_ref().map(|d| pct(d.delta_fpr)).unwrap_or_default());
                        row.push(am.label().into());
                        row.push(fm.label().into());
                        row.push(format!("{}", r.mean_ood_score));
                    }
                    _ => {
                        row.extend(["absent".to_string(), "absent".to_string()]);
                        row.extend(std::iter::repeat_n(String::new(), 5));
                    }
                }
            }
            rows.push(row);
        }
        csv_string(rows)
    }

    /// Aligned text table: `**x**` marks the best value in a column,
    /// `_x_` an improvement over the baseline row.
    pub fn to_text(&self) -> String {
        let mut header = vec!["view".to_string()];
        for s in &self.scorers {
            header.push(format!("{s} AUC"));
            header.push(format!("{s} FPR"));
        }
        let mut rows = vec![header];
        for (v, view) in self.views.iter().enumerate() {
            let label = if v == 0 {
                format!("{view} (baseline)")
            } else {
                view.clone()
            };
            let mut row = vec![label];
            for s in 0..self.scorers.len() {
                match (self.report(v, s), self.marks(v, s)) {
                    (Some(r), Some((am, fm))) => {
                        row.push(am.decorate(format!("{:.2}", r.auroc * 100.0)));
                        row.push(fm.decorate(format!("{:.2}", r.fpr_at_tpr * 100.0)));
                    }
                    _ => row.extend(["-".to_string(), "-".to_string()]),
                }
            }
            rows.push(row);
        }
        let ncols = rows[0].len();
        let widths: Vec<usize> = (0..ncols)
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in rows.iter().enumerate() {
            let line = row
                .iter()
                .enumerate()
                .map(|(c, cell)| {
                    if c == 0 {
                        format!("{cell:<w$}", w = widths[c])
                    } else {
                        format!("{cell:>w$}", w = widths[c])
                    }
                })
                .collect::<Vec<_>>()
                .join("  ");
            let _ = writeln!(out, "{}", line.trim_end());
            if i == 0 {
                let total: usize = widths.iter().sum::<usize>() + 2 * (ncols - 1);
                let _ = writeln!(out, "{}", "-".repeat(total));
            }
        }
        out
    }

    /// Per-OOD-class FPR for every present cell, with the change relative
    /// to the baseline row for the same scorer and class.
    pub fn per_class_csv(&self) -> Result<String> {
        let mut rows = vec![["scorer", "view", "role", "ood_class", "n", "fpr", "delta_fpr"]
            .map(String::from)
            .to_vec()];
        for (s, scorer) in self.scorers.iter().enumerate() {
            let base = self.report(0, s);
            for (v, view) in self.views.iter().enumerate() {
                let Some(r) = self.report(v, s) else { continue };
                let classes: BTreeSet<&String> = r.per_ood_class.keys().collect();
                for class in classes {
                    let fpr = r.per_ood_class[class];
                    let delta = if v == 0 {
                        None
                    } else {
                        base.and_then(|b| b.per_ood_class.get(class)).map(|b| fpr - b)
                    };
                    rows.push(vec![
                        scorer.clone(),
                        view.clone(),
                        Self::role(v).into(),
                        class.clone(),
                        r.per_ood_class_counts.get(class).copied().unwrap_or(0).to_string(),
                        pct(fpr),
                        delta.map(pct).unwrap_or_default(),
                    ]);
                }
            }
        }
        csv_string(rows)
    }

    /// Mean ID and OOD scores per cell.
    pub fn mean_scores_csv(&self) -> Result<String> {
        let mut rows = vec![[
            "scorer",
            "view",
            "role",
            "mean_id_score",
            "mean_ood_score",
            "delta_mean_ood_score",
        ]
        .map(String::from)
        .to_vec()];
        for (s, scorer) in self.scorers.iter().enumerate() {
            for (v, view) in self.views.iter().enumerate() {
                let Some(r) = self.report(v, s) else { continue };
                let delta = self.delta(v, s).map(|d| d.delta_mean_ood_score);
                rows.push(vec![
                    scorer.clone(),
                    view.clone(),
                    Self::role(v).into(),
                    format!("{}", r.mean_id_score),
                    format!("{}", r.mean_ood_score),
                    delta.map(|d| format!("{d}")).unwrap_or_default(),
                ]);
            }
        }
        csv_string(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn report(scorer: &str, view: &str, auroc: f64, fpr: f64) -> EvalReport {
        EvalReport {
            scorer_id: scorer.into(),
            view: view.into(),
            auroc,
            fpr_at_tpr: fpr,
            tpr_target: 0.95,
            threshold: 0.0,
            threshold_degenerate: false,
            per_ood_class: BTreeMap::from([("POL".to_string(), fpr)]),
            per_ood_class_counts: BTreeMap::from([("POL".to_string(), 10)]),
            mean_ood_score: auroc,
            mean_id_score: 0.0,
            n_id: 10,
            n_ood: 10,
            config: BTreeMap::new(),
        }
    }

    fn two_by_two() -> Grid {
        let views = vec!["none".to_string(), "hflip".to_string()];
        let scorers = vec!["msp".to_string(), "maxlogit".to_string()];
        let cells = vec![
            GridCell::present(report("msp", "none", 0.80, 0.40)),
            GridCell::present(report("maxlogit", "none", 0.85, 0.30)),
            GridCell::present(report("msp", "hflip", 0.82, 0.45)),
            GridCell::absent("hflip", "maxlogit", "missing pack"),
        ];
        Grid::new(views, scorers, cells).unwrap()
    }

    #[test]
    fn grid_structure() {
        let g = two_by_two();
        let csv = g.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("none,baseline,"));
        assert!(lines[2].starts_with("hflip,tta,"));
        assert!(lines[2].contains("absent"));
        // msp hflip: auc improved and best, fpr worse.
        assert!(lines[2].contains("82.0000,45.0000,2.0000,5.0000,best|improved,,"));
    }

    #[test]
    fn text_marks() {
        let text = two_by_two().to_text();
        assert!(text.contains("none (baseline)"));
        assert!(text.contains("**_82.00_**"));
        assert!(text.contains("**40.00**"));
    }

    #[test]
    fn per_class_and_means() {
        let g = two_by_two();
        let pc = g.per_class_csv().unwrap();
        assert!(pc.contains("msp,hflip,tta,POL,10,45.0000,5.0000"));
        let ms = g.mean_scores_csv().unwrap();
        assert_eq!(ms.lines().count(), 4);
    }

    #[test]
    fn layout_is_checked() {
        let views = vec!["none".to_string()];
        let scorers = vec!["msp".to_string()];
        let cell = GridCell::present(report("energy", "none", 0.5, 0.5));
        assert!(Grid::new(views, scorers, vec![cell]).is_err());
    }
}
