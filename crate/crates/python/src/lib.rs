//! Python bindings: the `ttaood` extension module.
//!
//! Errors surface as `ValueError` (bad arguments or specs),
//! `ttaood.DataError` (malformed or inconsistent data) and
//! `ttaood.NumericalError` (singular covariance, degenerate scores, ...).

use std::path::PathBuf;

use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use ttaood::augment::{self as aug, AugmentationSpec};
use ttaood::metrics::{self, EvalReport};
use ttaood::pack::{self, ClassifierHead, FeaturePack, FittedScorerArchive, Label, Matrix, ScoreFile, Split};
use ttaood::pipeline::{self, RunManifest};
use ttaood::scorers::{self, FittedScorer, ScorerConfig, ScorerId};
use ttaood::synth::{self, DriftDirection, SynthConfig};
use ttaood::{Error, ErrorKind};

pyo3::create_exception!(ttaood, DataError, PyException, "Malformed or inconsistent data.");
pyo3::create_exception!(ttaood, NumericalError, PyException, "Numerical failure.");

fn py_err(e: Error) -> PyErr {
    match e.kind() {
        ErrorKind::Usage => PyValueError::new_err(e.to_string()),
        ErrorKind::Data => DataError::new_err(e.to_string()),
        ErrorKind::Numerical => NumericalError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for ttaood::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().py()
}

/// Features, logits and labels for one split under one view.
#[pyclass(name = "FeaturePack", module = "ttaood", from_py_object)]
#[derive(Clone)]
struct PyFeaturePack {
    inner: FeaturePack,
}

#[pymethods]
impl PyFeaturePack {
    /// `labels` holds class indices (int) for ID samples and tags (str) for
    /// OOD samples.
    #[new]
    #[pyo3(signature = (sample_ids, labels, features, logits, split, view="none".to_string(), model_id="unknown".to_string()))]
    fn new(
        sample_ids: Vec<String>,
        labels: Vec<Bound<'_, PyAny>>,
        features: Vec<Vec<f32>>,
        logits: Vec<Vec<f32>>,
        split: &str,
        view: String,
        model_id: String,
    ) -> PyResult<Self> {
        let labels = labels
            .iter()
            .map(|l| match l.extract::<usize>() {
                Ok(c) => Ok(Label::Id(c)),
                Err(_) => l.extract::<String>().map(Label::Ood),
            })
            .collect::<PyResult<Vec<_>>>()?;
        let inner = FeaturePack {
            sample_ids,
            labels,
            features: Matrix::from_rows(&features).py()?,
            logits: Matrix::from_rows(&logits).py()?,
            view,
            split: parse::<Split>(split)?,
            model_id,
        };
        inner.validate().py()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn read(dir: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: pack::read_pack(dir).py()?,
        })
    }

    fn write(&self, dir: PathBuf) -> PyResult<()> {
        pack::write_pack(&self.inner, dir).py()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn view(&self) -> String {
        self.inner.view.clone()
    }

    #[getter]
    fn split(&self) -> String {
        self.inner.split.as_str().to_string()
    }

    #[getter]
    fn model_id(&self) -> String {
        self.inner.model_id.clone()
    }

    #[getter]
    fn sample_ids(&self) -> Vec<String> {
        self.inner.sample_ids.clone()
    }

    /// Labels rendered as strings (class index or OOD tag).
    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels.iter().map(|l| l.to_string()).collect()
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f32>> {
        self.inner.features.iter_rows().map(<[f32]>::to_vec).collect()
    }

    #[getter]
    fn logits(&self) -> Vec<Vec<f32>> {
        self.inner.logits.iter_rows().map(<[f32]>::to_vec).collect()
    }

    fn bitwise_eq(&self, other: &Self) -> bool {
        self.inner.bitwise_eq(&other.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "FeaturePack(split='{}', view='{}', n={}, m={}, C={})",
            self.inner.split,
            self.inner.view,
            self.inner.n(),
            self.inner.feature_dim(),
            self.inner.num_classes()
        )
    }
}

/// Final linear layer: `logits = W x + b`.
#[pyclass(name = "ClassifierHead", module = "ttaood", from_py_object)]
#[derive(Clone)]
struct PyClassifierHead {
    inner: ClassifierHead,
}

#[pymethods]
impl PyClassifierHead {
    #[new]
    fn new(weights: Vec<Vec<f32>>, bias: Vec<f32>) -> PyResult<Self> {
        Ok(Self {
            inner: ClassifierHead::new(Matrix::from_rows(&weights).py()?, bias).py()?,
        })
    }

    #[staticmethod]
    fn read(dir: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: pack::read_head(dir).py()?,
        })
    }

    fn write(&self, dir: PathBuf) -> PyResult<()> {
        pack::write_head(&self.inner, dir).py()
    }

    fn logits(&self, features: Vec<f64>) -> PyResult<Vec<f64>> {
        if features.len() != self.inner.feature_dim() {
            return Err(PyValueError::new_err(format!(
                "expected {} features, got {}",
                self.inner.feature_dim(),
                features.len()
            )));
        }
        Ok(self.inner.logits(&features))
    }

    /// Largest |stored logit - (W x + b)| over a pack.
    fn max_logit_deviation(&self, pack: &PyFeaturePack) -> PyResult<f64> {
        self.inner.max_logit_deviation(&pack.inner).py()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }
}

/// Per-sample OOD-positive scores.
#[pyclass(name = "ScoreFile", module = "ttaood", from_py_object)]
#[derive(Clone)]
struct PyScoreFile {
    inner: ScoreFile,
}

#[pymethods]
impl PyScoreFile {
    #[new]
    #[pyo3(signature = (sample_ids, scores, scorer_id, view="none".to_string()))]
    fn new(sample_ids: Vec<String>, scores: Vec<f64>, scorer_id: String, view: String) -> PyResult<Self> {
        let inner = ScoreFile {
            sample_ids,
            scores,
            scorer_id,
            view,
            config: Default::default(),
        };
        inner.validate().py()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: pack::read_scores(path).py()?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        pack::write_scores(&self.inner, path).py()
    }

    #[getter]
    fn sample_ids(&self) -> Vec<String> {
        self.inner.sample_ids.clone()
    }

    #[getter]
    fn scores(&self) -> Vec<f64> {
        self.inner.scores.clone()
    }

    #[getter]
    fn scorer_id(&self) -> String {
        self.inner.scorer_id.clone()
    }

    #[getter]
    fn view(&self) -> String {
        self.inner.view.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.scores.len()
    }
}

/// A scorer plus (for mahalanobis / vim) its fitted state.
#[pyclass(name = "Scorer", module = "ttaood")]
struct PyScorer {
    config: ScorerConfig,
    fitted: Option<FittedScorer>,
}

#[pymethods]
impl PyScorer {
    #[new]
    #[pyo3(signature = (name, temperature=None, shrinkage=None, subspace_dim=None))]
    fn new(
        name: &str,
        temperature: Option<f64>,
        shrinkage: Option<f64>,
        subspace_dim: Option<usize>,
    ) -> PyResult<Self> {
        let config = ScorerConfig {
            scorer: parse::<ScorerId>(name)?,
            temperature,
            shrinkage,
            subspace_dim,
        };
        config.validate().py()?;
        Ok(Self {
            config,
            fitted: None,
        })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.config.scorer.as_str()
    }

    #[getter]
    fn needs_fit(&self) -> bool {
        self.config.scorer.needs_fit()
    }

    #[pyo3(signature = (train, head=None))]
    fn fit(&mut self, train: &PyFeaturePack, head: Option<&PyClassifierHead>) -> PyResult<()> {
        let fitted = scorers::fit(&self.config, &train.inner, head.map(|h| &h.inner)).py()?;
        self.fitted = Some(fitted);
        Ok(())
    }

    fn score(&self, pack: &PyFeaturePack) -> PyResult<PyScoreFile> {
        Ok(PyScoreFile {
            inner: scorers::score_pack(&self.config, &pack.inner, self.fitted.as_ref()).py()?,
        })
    }

    /// Fit diagnostics (empty for logit scorers).
    fn diagnostics(&self) -> PyResult<String> {
        let d = self
            .fitted
            .as_ref()
            .map(FittedScorer::diagnostics)
            .unwrap_or_default();
        serde_json::to_string(&d).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        let fitted = self
            .fitted
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("scorer has not been fitted"))?;
        fitted.to_archive(&self.config).save(dir).py()
    }

    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        let archive = FittedScorerArchive::load(dir).py()?;
        let fitted = FittedScorer::from_archive(&archive).py()?;
        Ok(Self {
            config: ScorerConfig::new(fitted.scorer_id()),
            fitted: Some(fitted),
        })
    }
}

/// Evaluation of one (scorer x view) cell.
#[pyclass(name = "EvalReport", module = "ttaood", from_py_object)]
#[derive(Clone)]
struct PyEvalReport {
    inner: EvalReport,
}

#[pymethods]
impl PyEvalReport {
    #[getter]
    fn auroc(&self) -> f64 {
        self.inner.auroc
    }

    #[getter]
    fn fpr_at_tpr(&self) -> f64 {
        self.inner.fpr_at_tpr
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold
    }

    #[getter]
    fn threshold_degenerate(&self) -> bool {
        self.inner.threshold_degenerate
    }

    #[getter]
    fn mean_ood_score(&self) -> f64 {
        self.inner.mean_ood_score
    }

    #[getter]
    fn mean_id_score(&self) -> f64 {
        self.inner.mean_id_score
    }

    #[getter]
    fn per_ood_class(&self) -> std::collections::BTreeMap<String, f64> {
        self.inner.per_ood_class.clone()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().py()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: EvalReport::from_json(text).py()?,
        })
    }
}

#[pyfunction]
fn auroc(id_scores: Vec<f64>, ood_scores: Vec<f64>) -> PyResult<f64> {
    metrics::auroc(&id_scores, &ood_scores).py()
}

#[pyfunction]
#[pyo3(signature = (id_scores, tpr_target=metrics::DEFAULT_TPR_TARGET))]
fn fit_threshold(id_scores: Vec<f64>, tpr_target: f64) -> PyResult<f64> {
    metrics::fit_threshold(&id_scores, tpr_target).py()
}

#[pyfunction]
#[pyo3(signature = (id_scores, ood_scores, tpr_target=metrics::DEFAULT_TPR_TARGET))]
fn fpr_at_tpr(id_scores: Vec<f64>, ood_scores: Vec<f64>, tpr_target: f64) -> PyResult<f64> {
    metrics::fpr_at_tpr(&id_scores, &ood_scores, tpr_target).py()
}

#[pyfunction]
#[pyo3(signature = (id_scores, ood_scores, ood_labels=None, tpr_target=metrics::DEFAULT_TPR_TARGET))]
fn evaluate(
    id_scores: &PyScoreFile,
    ood_scores: &PyScoreFile,
    ood_labels: Option<Vec<String>>,
    tpr_target: f64,
) -> PyResult<PyEvalReport> {
    Ok(PyEvalReport {
        inner: metrics::evaluate(&id_scores.inner, &ood_scores.inner, ood_labels.as_deref(), tpr_target)
            .py()?,
    })
}

/// OOD-positive score of one logit vector.
#[pyfunction]
#[pyo3(signature = (name, logits, temperature=None))]
fn score_logits(name: &str, logits: Vec<f64>, temperature: Option<f64>) -> PyResult<f64> {
    let id = parse::<ScorerId>(name)?;
    let t = ScorerConfig {
        temperature,
        ..ScorerConfig::new(id)
    }
    .temperature();
    match id {
        ScorerId::Msp => scorers::score_msp(&logits),
        ScorerId::Entropy => scorers::score_entropy(&logits),
        ScorerId::MaxLogit => scorers::score_maxlogit(&logits),
        ScorerId::Energy => scorers::score_energy(&logits, t),
        ScorerId::Odin => scorers::score_odin(&logits, t),
        other => Err(Error::Usage(format!("{other} scores features, not logits"))),
    }
    .py()
}

/// Canonical rendering of an augmentation spec.
#[pyfunction]
fn parse_spec(text: &str) -> PyResult<String> {
    Ok(AugmentationSpec::parse(text).py()?.render())
}

/// Applies a spec to packed RGB bytes (row-major, 3 bytes per pixel).
#[pyfunction]
#[pyo3(signature = (pixels, width, height, spec, seed=0))]
fn augment(pixels: Vec<u8>, width: u32, height: u32, spec: &str, seed: u64) -> PyResult<Vec<u8>> {
    let img = aug::ImageBuffer::new(width, height, pixels).py()?;
    let spec = AugmentationSpec::parse(spec).py()?.with_default_seed(seed);
    Ok(aug::apply(&spec, &img).py()?.into_pixels())
}

/// Augments an image folder tree; returns the number of images written.
#[pyfunction]
#[pyo3(signature = (in_dir, out_dir, spec, seed=0))]
fn augment_tree(in_dir: PathBuf, out_dir: PathBuf, spec: &str, seed: u64) -> PyResult<usize> {
    let spec = AugmentationSpec::parse(spec).py()?;
    Ok(pipeline::augment_tree(in_dir, out_dir, &spec, seed).py()?.written)
}

fn synth_config(
    feature_dim: usize,
    num_classes: usize,
    n_per_class: usize,
    n_ood: usize,
    id_spread: f64,
    ood_offset: f64,
    drift_id: f64,
    drift_ood: f64,
    drift_direction: &str,
    seed: u64,
) -> PyResult<SynthConfig> {
    Ok(SynthConfig {
        feature_dim,
        num_classes,
        n_per_class,
        n_ood,
        id_spread,
        ood_offset,
        drift_id,
        drift_ood,
        drift_direction: parse::<DriftDirection>(drift_direction)?,
        seed,
    })
}

/// Returns `(train, val, test_id, test_ood, head)`.
#[pyfunction]
#[pyo3(signature = (feature_dim=32, num_classes=3, n_per_class=200, n_ood=300, id_spread=1.0, ood_offset=6.0, seed=0))]
#[allow(clippy::type_complexity)]
fn synth_generate(
    feature_dim: usize,
    num_classes: usize,
    n_per_class: usize,
    n_ood: usize,
    id_spread: f64,
    ood_offset: f64,
    seed: u64,
) -> PyResult<(PyFeaturePack, PyFeaturePack, PyFeaturePack, PyFeaturePack, PyClassifierHead)> {
    let d = SynthConfig::default();
    let config = synth_config(
        feature_dim,
        num_classes,
        n_per_class,
        n_ood,
        id_spread,
        ood_offset,
        d.drift_id,
        d.drift_ood,
        "evidence-reducing",
        seed,
    )?;
    let data = synth::generate(&config).py()?;
    let p = |inner| PyFeaturePack { inner };
    Ok((
        p(data.train),
        p(data.val),
        p(data.test_id),
        p(data.test_ood),
        PyClassifierHead { inner: data.head },
    ))
}

#[pyfunction]
#[pyo3(signature = (pack, head, magnitude, seed=0, direction="evidence-reducing"))]
fn drifted_view(
    pack: &PyFeaturePack,
    head: &PyClassifierHead,
    magnitude: f64,
    seed: u64,
    direction: &str,
) -> PyResult<PyFeaturePack> {
    Ok(PyFeaturePack {
        inner: synth::drifted_view(&pack.inner, &head.inner, magnitude, parse(direction)?, seed)
            .py()?,
    })
}

/// Writes a synthetic dataset plus `manifest.json`; returns the manifest path.
#[pyfunction]
#[pyo3(signature = (out_dir, feature_dim=32, num_classes=3, n_per_class=200, n_ood=300, id_spread=1.0, ood_offset=6.0, drift_id=1.5, drift_ood=3.0, drift_direction="evidence-reducing", seed=0))]
#[allow(clippy::too_many_arguments)]
fn write_synth(
    out_dir: PathBuf,
    feature_dim: usize,
    num_classes: usize,
    n_per_class: usize,
    n_ood: usize,
    id_spread: f64,
    ood_offset: f64,
    drift_id: f64,
    drift_ood: f64,
    drift_direction: &str,
    seed: u64,
) -> PyResult<PathBuf> {
    let config = synth_config(
        feature_dim,
        num_classes,
        n_per_class,
        n_ood,
        id_spread,
        ood_offset,
        drift_id,
        drift_ood,
        drift_direction,
        seed,
    )?;
    pipeline::write_synth(&config, &out_dir).py()?;
    Ok(out_dir.join("manifest.json"))
}

/// Runs a grid manifest; returns the aligned text table.
#[pyfunction]
fn run_grid(manifest: PathBuf) -> PyResult<String> {
    let m = RunManifest::load(manifest).py()?;
    Ok(pipeline::run_grid(&m).py()?.grid.to_text())
}

#[pymodule]
#[pyo3(name = "ttaood")]
fn ttaood_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DataError", m.py().get_type::<DataError>())?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_class::<PyFeaturePack>()?;
    m.add_class::<PyClassifierHead>()?;
    m.add_class::<PyScoreFile>()?;
    m.add_class::<PyScorer>()?;
    m.add_class::<PyEvalReport>()?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(fit_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(fpr_at_tpr, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(score_logits, m)?)?;
    m.add_function(wrap_pyfunction!(parse_spec, m)?)?;
    m.add_function(wrap_pyfunction!(augment, m)?)?;
    m.add_function(wrap_pyfunction!(augment_tree, m)?)?;
    m.add_function(wrap_pyfunction!(synth_generate, m)?)?;
    m.add_function(wrap_pyfunction!(drifted_view, m)?)?;
    m.add_function(wrap_pyfunction!(write_synth, m)?)?;
    m.add_function(wrap_pyfunction!(run_grid, m)?)?;
    Ok(())
}
