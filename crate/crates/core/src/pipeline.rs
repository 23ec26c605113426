//! Filesystem-staged workflow: image-folder augmentation, synthetic
//! datasets and (view x scorer) grid runs.
//!
//! Dataset layout consumed by [`run_grid`]:
//!
//! ```text
//! <root>/head/                      classifier head (needed by vim)
//! <root>/<view-dir>/train/          fitting pack (baseline view only)
//! <root>/<view-dir>/test_id/        ID test pack
//! <root>/<view-dir>/test_ood/       OOD test pack (labels are OOD tags)
//! ```
//!
//! `<view-dir>` is [`view_dir_name`] of the view string.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use walkdir::WalkDir;

use crate::augment::{self, AugmentationSpec, ImageBuffer};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport, Grid, GridCell, DEFAULT_TPR_TARGET};
use crate::pack::{
    read_head, read_pack, write_head, write_pack, write_scores, FeaturePack, Label, Split,
};
use crate::scorers::{self, FittedScorer, ScorerConfig, ScorerId};
use crate::synth::{self, SynthConfig};

pub const BASELINE_VIEW: &str = "none";
pub const HEAD_DIR: &str = "head";
pub const AUGMENT_MANIFEST: &str = "augment_manifest.json";

/// Directory name for a view: canonical spec rendering when the view parses
/// as an augmentation spec, with characters outside `[A-Za-z0-9._+-]`
/// replaced by `_`.
pub fn view_dir_name(view: &str) -> String {
    let canonical = AugmentationSpec::parse(view)
        .map(|s| s.render())
        .unwrap_or_else(|_| view.to_string());
    canonical
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._+-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// `root/<view dir>/<split>`.
pub fn split_dir(root: &Path, view: &str, split: Split) -> PathBuf {
    root.join(view_dir_name(view)).join(split.as_str())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable value");
    s.push('\n');
    s
}

/// Which dataset folders are ID classes and which OOD tags the rest map to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMapping {
    /// Folder name -> class name, in class-index order.
    pub id_classes: Vec<MappedClass>,
    /// Folder name -> OOD tag.
    pub ood_classes: Vec<MappedClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedClass {
    pub directory: String,
    pub label: String,
}

impl ClassMapping {
    /// Kvasir v2: three anatomical landmarks are ID, five findings are OOD.
    pub fn kvasir() -> Self {
        let m = |d: &str, l: &str| MappedClass {
            directory: d.into(),
            label: l.into(),
        };
        Self {
            id_classes: vec![
                m("z-line", "Z-line"),
                m("pylorus", "Pylorus"),
                m("cecum", "Cecum"),
            ],
            ood_classes: vec![
                m("esophagitis", "ESO"),
                m("polyps", "POL"),
                m("ulcerative-colitis", "UC"),
                m("dyed-lifted-polyps", "DLP"),
                m("dyed-resection-margins", "DRM"),
            ],
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| Error::meta(path, e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        write_text(path.as_ref(), &to_json(self))
    }

    pub fn validate(&self) -> Result<()> {
        if self.id_classes.len() < 2 {
            return Err(Error::InvalidParameter(
                "class mapping needs at least 2 ID classes".into(),
            ));
        }
        let mut dirs = std::collections::BTreeSet::new();
        for c in self.id_classes.iter().chain(&self.ood_classes) {
            if !dirs.insert(c.directory.as_str()) {
                return Err(Error::InvalidParameter(format!(
                    "directory '{}' is mapped twice",
                    c.directory
                )));
            }
        }
        Ok(())
    }

    /// Checks a pack against the mapping: class count and OOD tags.
    pub fn check_pack(&self, pack: &FeaturePack) -> Result<()> {
        if pack.num_classes() != self.id_classes.len() {
            return Err(Error::DimMismatch(format!(
                "pack has {} classes but the mapping lists {} ID classes",
                pack.num_classes(),
                self.id_classes.len()
            )));
        }
        for (id, label) in pack.sample_ids.iter().zip(&pack.labels) {
            if let Label::Ood(tag) = label {
                if !self.ood_classes.iter().any(|c| &c.label == tag) {
                    return Err(Error::InvalidLabel(format!(
                        "sample '{id}' has OOD tag '{tag}' not present in the mapping"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One grid run: rows are views, columns scorers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub dataset_root: PathBuf,
    pub views: Vec<String>,
    pub scorers: Vec<ScorerConfig>,
    #[serde(default = "default_tpr")]
    pub tpr_target: f64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_tpr() -> f64 {
    DEFAULT_TPR_TARGET
}

impl RunManifest {
    /// Reads a manifest; relative paths are resolved against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Self =
            serde_json::from_str(&text).map_err(|e| Error::meta(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if m.dataset_root.is_relative() {
            m.dataset_root = base.join(&m.dataset_root);
        }
        if m.output_dir.is_relative() {
            m.output_dir = base.join(&m.output_dir);
        }
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &to_json(self))
    }

    pub fn validate(&self) -> Result<()> {
        if self.views.first().map(String::as_str) != Some(BASELINE_VIEW) {
            return Err(Error::InvalidParameter(format!(
                "the first view must be the '{BASELINE_VIEW}' baseline"
            )));
        }
        if self.scorers.is_empty() {
            return Err(Error::InvalidParameter("manifest lists no scorers".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for v in &self.views {
            if !seen.insert(view_dir_name(v)) {
                return Err(Error::InvalidParameter(format!("view '{v}' is listed twice")));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.scorers {
            s.validate()?;
            if !seen.insert(s.scorer) {
                return Err(Error::InvalidParameter(format!(
                    "scorer '{}' is listed twice",
                    s.scorer
                )));
            }
        }
        if !(self.tpr_target > 0.0 && self.tpr_target < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tpr_target must lie in (0, 1), got {}",
                self.tpr_target
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GridRun {
    pub grid: Grid,
    pub warnings: Vec<String>,
}

fn ood_tags(pack: &FeaturePack) -> Vec<String> {
    pack.labels.iter().map(|l| l.to_string()).collect()
}

fn load_view(root: &Path, view: &str) -> Result<(FeaturePack, FeaturePack)> {
    let id = read_pack(split_dir(root, view, Split::TestId))?;
    let ood = read_pack(split_dir(root, view, Split::TestOod))?;
    for p in [&id, &ood] {
        if p.view != view {
            return Err(Error::InvalidParameter(format!(
                "pack for view '{view}' is tagged '{}'",
                p.view
            )));
        }
    }
    Ok((id, ood))
}

/// Runs every (view x scorer) cell and writes the tables under
/// `manifest.output_dir`.
///
/// Feature-based scorers are fitted once on the baseline train pack. Each
/// cell's threshold is fitted on that view's ID test scores. A view whose
/// packs are missing yields absent cells; every other error aborts.
/// Output bytes do not depend on the size of the rayon pool.
pub fn run_grid(manifest: &RunManifest) -> Result<GridRun> {
    manifest.validate()?;
    let root = &manifest.dataset_root;
    let out = &manifest.output_dir;
    let mut warnings = Vec::new();

    let head = if manifest.scorers.iter().any(|s| s.scorer.needs_head()) {
        Some(read_head(root.join(HEAD_DIR))?)
    } else {
        None
    };
    let needs_train = manifest.scorers.iter().any(|s| s.scorer.needs_fit());
    let train = if needs_train {
        Some(read_pack(split_dir(root, BASELINE_VIEW, Split::Train))?)
    } else {
        None
    };

    let fitted: Vec<Option<FittedScorer>> = manifest
        .scorers
        .par_iter()
        .map(|cfg| match (&train, cfg.scorer.needs_fit()) {
            (Some(train), true) => scorers::fit(cfg, train, head.as_ref()).map(Some),
            _ => Ok(None),
        })
        .collect::<Result<_>>()?;
    for (cfg, f) in manifest.scorers.iter().zip(&fitted) {
        if let Some(f) = f {
            for w in f.warnings() {
                warnings.push(format!("{}: {w}", cfg.scorer));
            }
            f.to_archive(cfg).save(out.join("archives").join(cfg.scorer.as_str()))?;
        }
    }

    let views: Vec<std::result::Result<(FeaturePack, FeaturePack), String>> = manifest
        .views
        .par_iter()
        .map(|v| match load_view(root, v) {
            Ok(p) => Ok(Ok(p)),
            Err(e @ Error::MissingFile(_)) => Ok(Err(e.to_string())),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    for (v, loaded) in manifest.views.iter().zip(&views) {
        if let Err(reason) = loaded {
            warnings.push(format!("view '{v}' is absent: {reason}"));
        }
    }

    let n_s = manifest.scorers.len();
    let cells: Vec<(GridCell, Option<(EvalReport, [crate::pack::ScoreFile; 2])>)> = (0
        ..manifest.views.len() * n_s)
        .into_par_iter()
        .map(|i| {
            let (v, s) = (i / n_s, i % n_s);
            let view = &manifest.views[v];
            let cfg = &manifest.scorers[s];
            let (id_pack, ood_pack) = match &views[v] {
                Ok(p) => p,
                Err(reason) => {
                    return Ok((GridCell::absent(view, cfg.scorer.as_str(), reason.clone()), None))
                }
            };
            let id_scores = scorers::score_pack(cfg, id_pack, fitted[s].as_ref())?;
            let ood_scores = scorers::score_pack(cfg, ood_pack, fitted[s].as_ref())?;
            let report = evaluate(
                &id_scores,
                &ood_scores,
                Some(&ood_tags(ood_pack)),
                manifest.tpr_target,
            )?;
            Ok((
                GridCell::present(report.clone()),
                Some((report, [id_scores, ood_scores])),
            ))
        })
        .collect::<Result<_>>()?;

    for (cell, extra) in &cells {
        if let Some((report, [id_scores, ood_scores])) = extra {
            let stem = format!("{}__{}", view_dir_name(&cell.view), cell.scorer_id);
            write_text(&out.join("reports").join(format!("{stem}.json")), &to_json(report))?;
            let dir = out.join("scores");
            write_scores(id_scores, dir.join(format!("{stem}__test_id.csv")))?;
            write_scores(ood_scores, dir.join(format!("{stem}__test_ood.csv")))?;
            if report.threshold_degenerate {
                warnings.push(format!(
                    "{} / {}: degenerate ID scores, threshold set just above the required order statistic",
                    cell.view, cell.scorer_id
                ));
            }
        }
    }

    let grid = Grid::new(
        manifest.views.clone(),
        manifest.scorers.iter().map(|s| s.scorer.as_str().to_string()).collect(),
        cells.into_iter().map(|(c, _)| c).collect(),
    )?;
    write_text(&out.join("grid.csv"), &grid.to_csv()?)?;
    write_text(&out.join("grid.txt"), &grid.to_text())?;
    write_text(&out.join("per_class.csv"), &grid.per_class_csv()?)?;
    write_text(&out.join("mean_scores.csv"), &grid.mean_scores_csv()?)?;
    write_text(
        &out.join("run.json"),
        &to_json(&json!({
            "views": manifest.views,
            "scorers": manifest.scorers,
            "tpr_target": manifest.tpr_target,
            "seed": manifest.seed,
            "threshold_source": "test_id scores of the same view",
            "fit_source": "baseline train pack",
            "aggregation": "augmented view only",
            "warnings": warnings,
        })),
    )?;
    Ok(GridRun { grid, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedImage {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentSummary {
    pub spec: String,
    pub seed: u64,
    pub resolved_jitter: Vec<augment::JitterFactors>,
    pub written: usize,
    pub skipped: Vec<SkippedImage>,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        .unwrap_or(false)
}

/// Augments every PNG/JPEG under `in_dir` into the mirrored tree under
/// `out_dir`, always writing PNG (file stem kept, extension `.png`).
///
/// Jitter ranges without their own seed use `seed`. Undecodable images are
/// skipped and listed in the summary and in `augment_manifest.json`; failing
/// to write an output aborts.
pub fn augment_tree(
    in_dir: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    spec: &AugmentationSpec,
    seed: u64,
) -> Result<AugmentSummary> {
    let (in_dir, out_dir) = (in_dir.as_ref(), out_dir.as_ref());
    spec.validate()?;
    let spec = spec.clone().with_default_seed(seed);
    if !in_dir.is_dir() {
        return Err(Error::MissingFile(in_dir.to_path_buf()));
    }
    let mut files = Vec::new();
    for entry in WalkDir::new(in_dir).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Io {
            path: in_dir.to_path_buf(),
            source: e.into(),
        })?;
        if entry.file_type().is_file() && is_image(entry.path()) {
            files.push(entry.path().to_path_buf());
        }
    }

    let results: Vec<std::result::Result<(), SkippedImage>> = files
        .par_iter()
        .map(|src| {
            let rel = src.strip_prefix(in_dir).expect("walked below in_dir");
            let skip = |e: Error| SkippedImage {
                path: rel.to_path_buf(),
                reason: e.to_string(),
            };
            let img = match ImageBuffer::load(src) {
                Ok(img) => img,
                Err(e) => return Ok(Err(skip(e))),
            };
            let out = augment::apply(&spec, &img)?;
            let dst = out_dir.join(rel).with_extension("png");
            if let Some(parent) = dst.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            out.save_png(&dst)?;
            Ok(Ok(()))
        })
        .collect::<Result<_>>()?;
    let written = results.iter().filter(|r| r.is_ok()).count();
    let skipped: Vec<SkippedImage> = results.into_iter().filter_map(|r| r.err()).collect();

    let summary = AugmentSummary {
        spec: spec.render(),
        seed,
        resolved_jitter: augment::resolved_jitter(&spec),
        written,
        skipped,
    };
    write_text(&out_dir.join(AUGMENT_MANIFEST), &to_json(&summary))?;
    Ok(summary)
}

/// View tag shared by the ID and OOD drifted packs of a synthetic dataset.
pub fn synth_drift_view(config: &SynthConfig) -> String {
    format!(
        "synthetic-drift(id={},ood={})",
        config.drift_id, config.drift_ood
    )
}

/// Writes a complete synthetic dataset plus a ready-to-run grid manifest.
///
/// Layout: `head/`, `none/{train,val,test_id,test_ood}`, the drifted view's
/// `test_id`/`test_ood`, `synth.json` (the config) and `manifest.json`
/// (views none + drift, all scorers, output `grid/`).
pub fn write_synth(config: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<RunManifest> {
    let out = out_dir.as_ref();
    let data = synth::generate(config)?;
    write_head(&data.head, out.join(HEAD_DIR))?;
    for p in [&data.train, &data.val, &data.test_id, &data.test_ood] {
        write_pack(p, split_dir(out, BASELINE_VIEW, p.split))?;
    }
    let view = synth_drift_view(config);
    let drifts = [
        (&data.test_id, config.drift_id, 1),
        (&data.test_ood, config.drift_ood, 2),
    ];
    for (pack, magnitude, stream) in drifts {
        let mut drifted = synth::drifted_view(
            pack,
            &data.head,
            magnitude,
            config.drift_direction,
            synth::derive_seed(config.seed, stream),
        )?;
        drifted.view = view.clone();
        write_pack(&drifted, split_dir(out, &view, pack.split))?;
    }
    write_text(&out.join("synth.json"), &to_json(config))?;

    let manifest = RunManifest {
        dataset_root: PathBuf::from("."),
        views: vec![BASELINE_VIEW.to_string(), view],
        scorers: ScorerId::ALL.into_iter().map(ScorerConfig::new).collect(),
        tpr_target: DEFAULT_TPR_TARGET,
        output_dir: PathBuf::from("grid"),
        seed: config.seed,
    };
    manifest.save(out.join("manifest.json"))?;
    Ok(manifest)
}
