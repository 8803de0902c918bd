//! Python bindings: synthetic data, training, routed inference and metrics.
//!
//! Structured results (reports, predictions, scenario rows) cross the
//! boundary as plain dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use sacf_core::gate::GateHyper;
use sacf_core::io::{load_dataset_any, save_dataset_dir, LoadOptions};
use sacf_core::metrics::{parse_thresholds, AgreementResult};
use sacf_core::pipeline::scenario_analysis;
use sacf_core::scene::Annotation;
use sacf_core::{
    AugConfig, BBox, Confusion, Error, ExpertHyper, ExpertKind, GenConfig, Heatmap, Mode, Point, SacfModel, Split,
};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        e if e.is_numerical() => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn parse_name<T: DeserializeOwned>(what: &str, name: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown {what} {name:?}")))
}

fn bbox(b: [f64; 4]) -> PyResult<BBox> {
    BBox::new(b[0], b[1], b[2], b[3]).map_err(PyValueError::new_err)
}

/// Annotated frames with precomputed feature grids.
#[pyclass(name = "Dataset", module = "sacf")]
pub struct PyDataset {
    inner: sacf_core::Dataset,
}

impl PyDataset {
    fn split(&self, split: &str) -> PyResult<Vec<&Annotation>> {
        let s: Split = parse_name("split", split)?;
        Ok(self.inner.labeled_split(s))
    }
}

#[pymethods]
impl PyDataset {
    /// Generates a synthetic dataset. `config` is a dict of generator
    /// settings; missing keys take their defaults.
    #[staticmethod]
    #[pyo3(signature = (n_frames=None, seed=None, config=None))]
    fn generate(n_frames: Option<usize>, seed: Option<u64>, config: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let mut cfg: GenConfig = match config {
            Some(c) => from_py(c)?,
            None => GenConfig::default(),
        };
        if let Some(n) = n_frames {
            cfg.n_frames = n;
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        let inner = sacf_core::make_dataset(&cfg).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Reads a dataset directory or a single JSONL file.
    #[staticmethod]
    #[pyo3(signature = (path, strict=false))]
    fn load(path: PathBuf, strict: bool) -> PyResult<Self> {
        let opts = LoadOptions {
            strict,
            filter_noninclusive: false,
        };
        let inner = load_dataset_any(&path, &opts).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        save_dataset_dir(&self.inner, dir).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn frame_ids(&self, split: &str) -> PyResult<Vec<String>> {
        Ok(self.split(split)?.iter().map(|a| a.frame_id.clone()).collect())
    }

    /// Split sizes and category counts.
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.metadata)
    }

    /// One annotation as a dict, without its feature grid.
    fn annotation<'py>(&self, py: Python<'py>, frame_id: &str) -> PyResult<Bound<'py, PyAny>> {
        let a = find(&self.inner, frame_id)?;
        to_py(py, &Annotation { features: None, ..a.clone() })
    }
}

/// A trained per-cell logistic expert.
#[pyclass(name = "Expert", module = "sacf")]
pub struct PyExpert {
    inner: sacf_core::ExpertParams,
}

#[pymethods]
impl PyExpert {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: sacf_core::ExpertParams::load(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind.to_string()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.w.clone()
    }

    #[getter]
    fn bias(&self) -> f64 {
        self.inner.b
    }

    #[getter]
    fn loss_history(&self) -> Vec<f64> {
        self.inner.meta.loss_history.clone()
    }

    /// Heatmap rows for one frame of `dataset`, on the raw features.
    fn heatmap(&self, dataset: &PyDataset, frame_id: &str) -> PyResult<Vec<Vec<f64>>> {
        let a = find(&dataset.inner, frame_id)?;
        let h = sacf_core::predict_heatmap(&self.inner, a.features().map_err(py_err)?).map_err(py_err)?;
        Ok(rows(&h))
    }
}

/// The logistic social-context gate.
#[pyclass(name = "Gate", module = "sacf")]
pub struct PyGate {
    inner: sacf_core::GateParams,
}

#[pymethods]
impl PyGate {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: sacf_core::GateParams::load(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.v.clone()
    }

    #[getter]
    fn bias(&self) -> f64 {
        self.inner.c
    }

    fn score(&self, dataset: &PyDataset, frame_id: &str) -> PyResult<f64> {
        let a = find(&dataset.inner, frame_id)?;
        let f = a.features().map_err(py_err)?;
        let (gh, gw) = f.dims();
        Ok(sacf_core::score(&self.inner, f, &a.faces_in_cells(gh, gw)))
    }
}

fn find<'a>(ds: &'a sacf_core::Dataset, frame_id: &str) -> PyResult<&'a Annotation> {
    ds.annotations
        .iter()
        .find(|a| a.frame_id == frame_id)
        .ok_or_else(|| PyValueError::new_err(format!("no frame {frame_id:?}")))
}

fn rows(h: &Heatmap) -> Vec<Vec<f64>> {
    let (_, w) = h.dims();
    h.as_slice().chunks(w).map(<[f64]>::to_vec).collect()
}

#[pyfunction]
#[pyo3(signature = (dataset, kind, epochs=None, learning_rate=None, seed=None, split="train"))]
fn train_expert(
    py: Python<'_>,
    dataset: &PyDataset,
    kind: &str,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    seed: Option<u64>,
    split: &str,
) -> PyResult<PyExpert> {
    let kind: ExpertKind = parse_name("expert kind", kind)?;
    let mut hyper = ExpertHyper::default();
    hyper.epochs = epochs.unwrap_or(hyper.epochs);
    hyper.learning_rate = learning_rate.unwrap_or(hyper.learning_rate);
    hyper.seed = seed.unwrap_or(hyper.seed);
    let train = dataset.split(split)?;
    let inner = py
        .detach(|| sacf_core::train_expert(&train, kind, &hyper, &AugConfig::default()))
        .map_err(py_err)?;
    Ok(PyExpert { inner })
}

#[pyfunction]
#[pyo3(signature = (dataset, epochs=None, learning_rate=None, class_weight=None, seed=None, split="train"))]
fn train_gate(
    py: Python<'_>,
    dataset: &PyDataset,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    class_weight: Option<f64>,
    seed: Option<u64>,
    split: &str,
) -> PyResult<PyGate> {
    let mut hyper = GateHyper::default();
    hyper.epochs = epochs.unwrap_or(hyper.epochs);
    hyper.learning_rate = learning_rate.unwrap_or(hyper.learning_rate);
    hyper.class_weight = class_weight.or(hyper.class_weight);
    hyper.seed = seed.unwrap_or(hyper.seed);
    let train = dataset.split(split)?;
    let inner = py.detach(|| sacf_core::train_gate(&train, &hyper)).map_err(py_err)?;
    Ok(PyGate { inner })
}

/// Evaluates one routing mode. Returns `(report, predictions)`.
#[pyfunction]
#[pyo3(signature = (aware, agnostic, dataset, mode="sacf", gate=None, tau=0.5, split="test"))]
fn evaluate<'py>(
    py: Python<'py>,
    aware: &PyExpert,
    agnostic: &PyExpert,
    dataset: &PyDataset,
    mode: &str,
    gate: Option<&PyGate>,
    tau: f64,
    split: &str,
) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    let mode: Mode = mode.parse().map_err(py_err)?;
    let model = SacfModel {
        aware: aware.inner.clone(),
        agnostic: agnostic.inner.clone(),
        gate: gate.map(|g| g.inner.clone()),
        tau,
        aug: AugConfig::default(),
    };
    model.validate().map_err(py_err)?;
    let frames = dataset.split(split)?;
    let (report, preds) = py
        .detach(|| sacf_core::evaluate(&model, mode, &frames))
        .map_err(py_err)?;
    Ok((to_py(py, &report)?, to_py(py, &preds)?))
}

/// Per-scenario L2 of the aware and agnostic points.
#[pyfunction]
#[pyo3(signature = (predictions, dataset, split="test"))]
fn scenarios<'py>(
    py: Python<'py>,
    predictions: &Bound<'py, PyAny>,
    dataset: &PyDataset,
    split: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let preds: Vec<sacf_core::Prediction> = from_py(predictions)?;
    let frames = dataset.split(split)?;
    to_py(py, &scenario_analysis(&preds, &frames).map_err(py_err)?)
}

/// Peak-normalized Gaussian target heatmap; `x`, `y` in cell units.
#[pyfunction]
fn gaussian_heatmap(x: f64, y: f64, sigma: f64, height: usize, width: usize) -> PyResult<Vec<Vec<f64>>> {
    let h = sacf_core::gaussian_gt_heatmap(Point::new(x, y), sigma, height, width).map_err(py_err)?;
    Ok(rows(&h))
}

#[pyfunction]
fn bce_loss(pred: Vec<Vec<f64>>, gt: Vec<Vec<f64>>) -> PyResult<f64> {
    let grid = |v: Vec<Vec<f64>>| {
        let h = v.len();
        let w = v.first().map_or(0, Vec::len);
        Heatmap::new(h, w, v.concat()).map_err(py_err)
    };
    sacf_core::bce_loss(&grid(pred)?, &grid(gt)?).map_err(py_err)
}

/// Intersection over union of `[x_min, y_min, x_max, y_max]` boxes.
#[pyfunction]
fn iou(a: [f64; 4], b: [f64; 4]) -> PyResult<f64> {
    Ok(sacf_core::iou(&bbox(a)?, &bbox(b)?))
}

#[pyfunction]
fn cohen_kappa(matrix: Vec<Vec<u64>>) -> PyResult<f64> {
    sacf_core::cohen_kappa(&matrix).map_err(py_err)
}

/// Face / not-face precision, recall and F1 from confusion counts.
#[pyfunction]
fn binary_prf<'py>(py: Python<'py>, tp: u64, fp: u64, fn_: u64, tn: u64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &sacf_core::binary_prf(&Confusion::new(tp, fp, fn_, tn)))
}

/// Fraction of box pairs whose IoU reaches each threshold.
#[pyfunction]
fn agreement_curve(pairs: Vec<([f64; 4], [f64; 4])>, thresholds: Vec<f64>) -> PyResult<Vec<f64>> {
    let boxes = pairs
        .into_iter()
        .map(|(a, b)| Ok((bbox(a)?, bbox(b)?)))
        .collect::<PyResult<Vec<_>>>()?;
    sacf_core::agreement_curve(&boxes, &thresholds).map_err(py_err)
}

/// Agreement between two annotation passes over the same frames.
#[pyfunction]
#[pyo3(signature = (a, b, thresholds="0.1:0.9:0.1"))]
fn annotation_agreement<'py>(py: Python<'py>, a: &PyDataset, b: &PyDataset, thresholds: &str) -> PyResult<Bound<'py, PyAny>> {
    let ts = parse_thresholds(thresholds).map_err(py_err)?;
    let r: AgreementResult =
        sacf_core::annotation_agreement(&a.inner.annotations, &b.inner.annotations, &ts).map_err(py_err)?;
    to_py(py, &r)
}

#[pymodule]
fn sacf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyExpert>()?;
    m.add_class::<PyGate>()?;
    m.add_function(wrap_pyfunction!(train_expert, m)?)?;
    m.add_function(wrap_pyfunction!(train_gate, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_heatmap, m)?)?;
    m.add_function(wrap_pyfunction!(bce_loss, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(cohen_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(binary_prf, m)?)?;
    m.add_function(wrap_pyfunction!(agreement_curve, m)?)?;
    m.add_function(wrap_pyfunction!(annotation_agreement, m)?)?;
    Ok(())
}
