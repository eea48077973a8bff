//! Python bindings: model files, simulation, training and synthetic data.

use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use xfode::dataset::{fit_normalizer, normalize, RawDataset};
use xfode::state_repr::build_trajectories;
use xfode::synthetic::{generate, SyntheticKind};
use xfode::{model_io, rollout, training, Error, FuzzyModel, ModelKind, StateConfig, StateMode, Strategy};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidConfig(_)
        | Error::DimensionMismatch { .. }
        | Error::ShapeMismatch(_)
        | Error::NonPositiveInput(_)
        | Error::NonFiniteValue { .. }
        | Error::InsufficientSamples { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>], cols: usize, what: &str) -> PyResult<Array2<f64>> {
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err(format!("every {what} row needs {cols} values")));
    }
    Array2::from_shape_vec((rows.len(), cols), rows.concat()).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

/// A trained or freshly initialized fuzzy ODE model.
#[pyclass(name = "Model", module = "xfode_py")]
pub struct PyModel {
    inner: FuzzyModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        model_io::load(path).map(|inner| Self { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        model_io::from_json(text).map(|inner| Self { inner }).map_err(py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        model_io::to_json(&self.inner).map_err(py_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        model_io::save(&self.inner, path).map_err(py_err)
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind.to_string()
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.count_parameters()
    }

    #[getter]
    fn params(&self) -> Vec<f64> {
        self.inner.dynamics.params()
    }

    /// Free-run simulation over a record in original units; returns `K - m`
    /// predicted output rows.
    fn simulate(&self, inputs: Vec<Vec<f64>>, outputs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let m = &self.inner;
        let ds = RawDataset::new("py", matrix(&inputs, m.n_u, "input")?, matrix(&outputs, m.n_y, "output")?)
            .map_err(py_err)?;
        let ds = match &m.norm {
            Some(s) => normalize(&ds, s).map_err(py_err)?,
            None => ds,
        };
        let pred = rollout::simulate(m, &ds).map_err(py_err)?;
        Ok(rows(&match &m.norm {
            Some(s) => s.denormalize_outputs(m.n_u, &pred),
            None => pred,
        }))
    }

    /// Rolls the normalized dynamics out from `x0`, one step per input row.
    fn rollout(&self, x0: Vec<f64>, inputs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let u = matrix(&inputs, self.inner.n_u, "input")?;
        let r = rollout::rollout(&self.inner.dynamics, &x0, u.view()).map_err(py_err)?;
        Ok(rows(&r.states))
    }

    fn __repr__(&self) -> String {
        format!("Model({}, P={}, n_params={})", self.inner.kind, self.inner.rules, self.n_params())
    }
}

#[pyfunction]
fn softplus(x: f64) -> f64 {
    xfode::membership::softplus(x)
}

#[pyfunction]
fn softplus_inverse(v: f64) -> PyResult<f64> {
    xfode::membership::softplus_inverse(v).map_err(py_err)
}

/// Learnable parameter count, e.g. `count_parameters("xfode-ps1", 5, 3, 4)`.
#[pyfunction]
fn count_parameters(kind: &str, rules: usize, n_x: usize, n_z: usize) -> PyResult<usize> {
    let kind: ModelKind = kind.parse().map_err(py_err)?;
    Ok(kind.count_parameters(rules, n_x, n_z))
}

/// Synthetic record as `(inputs, outputs)` row lists.
#[pyfunction]
#[pyo3(signature = (kind, n=2000, seed=0))]
fn gen_data(kind: &str, n: usize, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let kind: SyntheticKind = kind.parse().map_err(py_err)?;
    let ds = generate(kind, n, seed).map_err(py_err)?;
    Ok((rows(&ds.inputs), rows(&ds.outputs)))
}

/// Trains a model on a record in original units.
#[pyfunction]
#[pyo3(signature = (inputs, outputs, model="xfode-ps1", sr=2, m=2, rules=5, rollout=20, stride=1, epochs=100, mbs=32, lr=0.01, seed=0))]
#[allow(clippy::too_many_arguments)]
fn train(
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    model: &str,
    sr: u8,
    m: usize,
    rules: usize,
    rollout: usize,
    stride: usize,
    epochs: usize,
    mbs: usize,
    lr: f64,
    seed: u64,
) -> PyResult<PyModel> {
    let n_u = inputs.first().map_or(0, Vec::len);
    let n_y = outputs.first().map_or(0, Vec::len);
    let kind: ModelKind = model.parse().map_err(py_err)?;
    let state = StateConfig::new(StateMode::from_code(sr).map_err(py_err)?, m);
    let raw = RawDataset::new("py", matrix(&inputs, n_u, "input")?, matrix(&outputs, n_y, "output")?)
        .map_err(py_err)?;
    let stats = fit_normalizer(&raw);
    let ds = normalize(&raw, &stats).map_err(py_err)?;
    let set = build_trajectories(&ds, state, rollout, stride).map_err(py_err)?;
    let mut fm = FuzzyModel::init(kind, rules, n_u, n_y, state, &set.z_domains(), seed).map_err(py_err)?;
    fm.norm = Some(stats);
    let cfg = training::TrainConfig { epochs, mini_batch_size: mbs, learning_rate: lr, seed, ..Default::default() };
    training::train(&mut fm, &set, &cfg).map_err(py_err)?;
    Ok(PyModel { inner: fm })
}

#[pymodule]
pub fn xfode_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(softplus, m)?)?;
    m.add_function(wrap_pyfunction!(softplus_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(count_parameters, m)?)?;
    m.add_function(wrap_pyfunction!(gen_data, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add("STRATEGIES", [Strategy::Ps1, Strategy::Ps2, Strategy::Ps3].map(|s| s.to_string()))?;
    Ok(())
}
