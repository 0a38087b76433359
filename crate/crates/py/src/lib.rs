//! Python bindings: the model, training and evaluation entry points, the
//! metric helpers and both optimizers driven by Python callables.

use std::collections::BTreeMap;
use std::sync::Mutex;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use heartsense::aeho::{run_aeho as core_aeho, AehoConfig};
use heartsense::dataio::BinaryLabel;
use heartsense::mcfa::{self, FeatureMask, McfaConfig};
use heartsense::metrics::{self, ConfusionMatrix, MetricsReport};
use heartsense::network;
use heartsense::pipeline::{self, ExperimentConfig, TrainedModel};
use heartsense::{Bounds, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Logistic map step `delta * x * (1 - x)`, clamped to [0, 1].
#[pyfunction]
fn chaos_step(delta: f64, x: f64) -> f64 {
    mcfa::logistic(delta, x)
}

/// `exp(-x^2)`.
#[pyfunction]
fn gaussian(x: f64) -> f64 {
    network::gaussian(x)
}

fn report_dict<'py>(py: Python<'py>, m: &MetricsReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (_, key, get) in metrics::COLUMNS {
        d.set_item(key, get(m))?;
    }
    Ok(d)
}

/// Metrics from confusion counts; undefined rates are `None`.
#[pyfunction]
fn compute_metrics(py: Python<'_>, tp: usize, tn: usize, fp: usize, fn_: usize) -> PyResult<Bound<'_, PyDict>> {
    let cm = ConfusionMatrix {
        true_pos: tp,
        true_neg: tn,
        false_pos: fp,
        false_neg: fn_,
    };
    report_dict(py, &metrics::compute_metrics(&cm).map_err(to_py)?)
}

/// `(tp, tn, fp, fn)` for 0/1 prediction and truth lists.
#[pyfunction]
fn confusion(predictions: Vec<bool>, truths: Vec<bool>) -> PyResult<(usize, usize, usize, usize)> {
    let p: Vec<BinaryLabel> = predictions.into_iter().map(BinaryLabel::from).collect();
    let t: Vec<BinaryLabel> = truths.into_iter().map(BinaryLabel::from).collect();
    let cm = metrics::confusion(&p, &t).map_err(to_py)?;
    Ok((cm.true_pos, cm.true_neg, cm.false_pos, cm.false_neg))
}

/// `[(prevalence, ppv, npv), ...]`.
#[pyfunction]
fn prevalence_sweep(sensitivity: f64, specificity: f64, prevalences: Vec<f64>) -> PyResult<Vec<(f64, f64, f64)>> {
    Ok(metrics::prevalence_sweep(sensitivity, specificity, &prevalences)
        .map_err(to_py)?
        .into_iter()
        .map(|p| (p.prevalence, p.ppv, p.npv))
        .collect())
}

/// Calls a Python objective from any thread, keeping the first error.
struct Objective {
    f: Py<PyAny>,
    error: Mutex<Option<PyErr>>,
}

impl Objective {
    fn call<A>(&self, arg: A) -> f64
    where
        A: for<'py> IntoPyObject<'py>,
    {
        Python::attach(|py| match self.f.call1(py, (arg,)).and_then(|r| r.extract::<f64>(py)) {
            Ok(v) => v,
            Err(e) => {
                self.error.lock().unwrap().get_or_insert(e);
                f64::NAN
            }
        })
    }

    fn finish<T>(self, r: heartsense::Result<T>) -> PyResult<T> {
        if let Some(e) = self.error.into_inner().unwrap() {
            return Err(e);
        }
        r.map_err(to_py)
    }
}

/// Maximizes `f(list[float]) -> float`; returns `(best_position, best_fitness, history)`.
#[pyfunction]
#[pyo3(signature = (f, dim, generations=50, clans=3, clan_size=10, lower=-5.0, upper=5.0, seed=0))]
#[allow(clippy::too_many_arguments)]
fn run_aeho(
    py: Python<'_>,
    f: Py<PyAny>,
    dim: usize,
    generations: usize,
    clans: usize,
    clan_size: usize,
    lower: f64,
    upper: f64,
    seed: u64,
) -> PyResult<(Vec<f64>, f64, Vec<f64>)> {
    let config = AehoConfig {
        max_generations: generations,
        clans,
        clan_size,
        bounds: Bounds::new(lower, upper).map_err(to_py)?,
        seed,
        ..Default::default()
    };
    let obj = Objective {
        f,
        error: Mutex::new(None),
    };
    let r = py.detach(|| core_aeho(|x: &[f64]| obj.call(x.to_vec()), dim, &config));
    let out = obj.finish(r)?;
    Ok((out.best.position, out.best.fitness, out.history))
}

/// Feature selection maximizing `f(list[bool]) -> float`; returns
/// `(mask, best_fitness, history)`.
#[pyfunction]
#[pyo3(signature = (f, dim, population=20, generations=50, seed=0))]
fn run_mcfa(
    py: Python<'_>,
    f: Py<PyAny>,
    dim: usize,
    population: usize,
    generations: usize,
    seed: u64,
) -> PyResult<(Vec<bool>, f64, Vec<f64>)> {
    let config = McfaConfig {
        population,
        generations,
        seed,
        ..Default::default()
    };
    let obj = Objective {
        f,
        error: Mutex::new(None),
    };
    let r = py.detach(|| mcfa::run_mcfa(|m: &FeatureMask| obj.call(m.as_slice().to_vec()), dim, &config));
    let out = obj.finish(r)?;
    Ok((out.mask.into(), out.best_fitness, out.history))
}

/// A trained classifier.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: TrainedModel,
    scorer: pipeline::Scorer,
}

impl PyModel {
    fn wrap(inner: TrainedModel) -> PyResult<Self> {
        let scorer = inner.scorer().map_err(to_py)?;
        Ok(PyModel { inner, scorer })
    }
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        PyModel::wrap(TrainedModel::load(path).map_err(to_py)?)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        PyModel::wrap(TrainedModel::from_json(text).map_err(to_py)?)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn selected(&self) -> Vec<&'static str> {
        self.inner.selected().into_iter().map(|a| a.name()).collect()
    }

    #[getter]
    fn layer_sizes(&self) -> Vec<usize> {
        self.inner.spec.layer_sizes.clone()
    }

    #[getter]
    fn config_hash(&self) -> String {
        self.inner.metadata.config_hash.clone()
    }

    /// Scores raw attribute values keyed by name; returns `(label, score)`.
    fn predict(&self, record: BTreeMap<String, f64>) -> PyResult<(u8, f64)> {
        let raw = self
            .scorer
            .attributes()
            .into_iter()
            .map(|a| {
                record
                    .get(a.name())
                    .copied()
                    .ok_or_else(|| PyValueError::new_err(format!("required attribute `{a}` is absent")))
            })
            .collect::<PyResult<Vec<f64>>>()?;
        let p = self.scorer.score(&raw).map_err(to_py)?;
        Ok((p.label.value(), p.score))
    }

    /// Scores JSON lines; returns the output lines and the summary counts.
    fn stream(&self, py: Python<'_>, lines: Vec<String>) -> PyResult<(Vec<String>, BTreeMap<&'static str, usize>)> {
        let input = lines.join("\n");
        let mut out = Vec::new();
        let s = py
            .detach(|| pipeline::predict_stream(&self.inner, input.as_bytes(), &mut out))
            .map_err(to_py)?;
        let text = String::from_utf8(out).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let summary = BTreeMap::from([
            ("processed", s.processed),
            ("normal", s.normal),
            ("abnormal", s.abnormal),
            ("malformed", s.malformed),
        ]);
        Ok((text.lines().map(str::to_string).collect(), summary))
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(selected={:?}, layers={:?})",
            self.selected(),
            self.inner.spec.layer_sizes
        )
    }
}

fn config_from(text: &str, overrides: Vec<String>, base_dir: Option<String>) -> PyResult<ExperimentConfig> {
    let mut c = ExperimentConfig::from_toml_str(text, &overrides).map_err(to_py)?;
    c.base_dir = base_dir.map(Into::into);
    Ok(c)
}

/// Trains from TOML config text. Relative paths resolve against `base_dir`.
#[pyfunction]
#[pyo3(signature = (config, overrides=Vec::new(), base_dir=None))]
fn train(py: Python<'_>, config: &str, overrides: Vec<String>, base_dir: Option<String>) -> PyResult<PyModel> {
    let c = config_from(config, overrides, base_dir)?;
    let run = py.detach(|| pipeline::train_pipeline(&c)).map_err(to_py)?;
    PyModel::wrap(run.model)
}

/// Cross-validates `model`'s configuration on a CSV; returns the mean
/// metrics and per-fold accuracies (`None` for failed folds).
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, model: &PyModel, dataset: &str, folds: usize) -> PyResult<Bound<'py, PyDict>> {
    let ev = py
        .detach(|| {
            let ds = pipeline::load_dataset(dataset.as_ref())?;
            pipeline::evaluate(&model.inner, &ds, folds)
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("mean", report_dict(py, &ev.aggregate)?)?;
    let per_fold: Vec<Option<f64>> = ev
        .folds
        .iter()
        .map(|f| f.outcome.as_ref().ok().and_then(|r| r.metrics.accuracy))
        .collect();
    d.set_item("fold_accuracy", per_fold)?;
    Ok(d)
}

#[pymodule]
pub fn heartsense_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(chaos_step, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(confusion, m)?)?;
    m.add_function(wrap_pyfunction!(prevalence_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(run_aeho, m)?)?;
    m.add_function(wrap_pyfunction!(run_mcfa, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
