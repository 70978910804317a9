//! Python bindings for `inertia-core`.
//!
//! Structured results come back as plain dicts and lists. Configs are
//! passed as JSON strings or dicts with the same schema as the CLI.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use inertia_core::arena::{self, CostSample, FitOptions, Frame, Model};
use inertia_core::config::{self, ExperimentConfig};
use inertia_core::dynamics::{self, CriterionInputs, RuleDensity, TaylorOrder, WorkParams};
use inertia_core::measurement::{self, CalibrationConstants};
use inertia_core::microsim::{self, CollisionConfig};
use inertia_core::regulator;
use inertia_core::trainer::{self, Dataset as CoreDataset, PhaseTag, SyntheticTask, TrainConfig};
use inertia_core::InertiaError;

fn err(e: InertiaError) -> PyErr {
    match e {
        InertiaError::Domain(_) | InertiaError::Config(_) | InertiaError::DegenerateDesign(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Accepts a JSON string or a dict and returns the JSON text.
fn json_text(obj: &Bound<'_, PyAny>) -> PyResult<String> {
    if let Ok(s) = obj.extract::<String>() {
        return Ok(s);
    }
    obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()
}

fn from_json<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    serde_json::from_str(&json_text(obj)?).map_err(|e| PyValueError::new_err(format!("config parse error: {e}")))
}

fn density(v: f64) -> PyResult<RuleDensity> {
    RuleDensity::new(v).map_err(err)
}

fn parse_model(name: &str) -> PyResult<Model> {
    Model::ALL
        .into_iter()
        .find(|m| m.as_str() == name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown model `{name}`")))
}

fn parse_frame(name: &str) -> PyResult<Frame> {
    Frame::ALL
        .into_iter()
        .find(|f| f.as_str() == name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown frame `{name}`")))
}

fn samples(velocities: Vec<f64>, costs: Vec<f64>) -> PyResult<Vec<CostSample>> {
    if velocities.len() != costs.len() {
        return Err(PyValueError::new_err("velocities and costs differ in length"));
    }
    Ok(velocities.into_iter().zip(costs).map(|(v, c)| CostSample::new(v, c)).collect())
}

#[pyfunction]
fn lorentz_factor(rho: f64) -> PyResult<f64> {
    Ok(dynamics::lorentz_factor(density(rho)?))
}

#[pyfunction]
#[pyo3(signature = (rho, n_bits = 1.0, kt = 1.0))]
fn work(rho: f64, n_bits: f64, kt: f64) -> PyResult<f64> {
    Ok(dynamics::work(density(rho)?, &WorkParams::new(n_bits, kt).map_err(err)?))
}

#[pyfunction]
#[pyo3(signature = (rho, order = 2, n_bits = 1.0, kt = 1.0))]
fn fisher_approx_work(rho: f64, order: u8, n_bits: f64, kt: f64) -> PyResult<f64> {
    let order = match order {
        2 => TaylorOrder::Second,
        4 => TaylorOrder::Fourth,
        _ => return Err(PyValueError::new_err("order must be 2 or 4")),
    };
    Ok(dynamics::fisher_approx_work(density(rho)?, &WorkParams::new(n_bits, kt).map_err(err)?, order))
}

/// Returns `(rule_component, state_component)`.
#[pyfunction]
fn decompose_action(total: f64, rho: f64) -> PyResult<(f64, f64)> {
    let a = dynamics::decompose_action(total, density(rho)?).map_err(err)?;
    Ok((a.rule_component, a.state_component))
}

/// Returns `(ds_squared, regime)`.
#[pyfunction]
#[pyo3(signature = (rho_max, ds, dr, granularity, tol = dynamics::DEFAULT_CRITICAL_TOLERANCE))]
fn interpretability_criterion(rho_max: f64, ds: f64, dr: f64, granularity: f64, tol: f64) -> PyResult<(f64, String)> {
    let inputs = CriterionInputs::new(rho_max, ds, dr, granularity).map_err(err)?;
    let r = dynamics::interpretability_criterion(&inputs, tol);
    let regime = serde_json::to_value(r.regime).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((r.ds_squared, regime.as_str().unwrap_or_default().to_string()))
}

#[pyfunction]
fn relativistic_brake(eta_base: f64, v: f64, v_base: f64) -> PyResult<f64> {
    Ok(regulator::relativistic_brake(eta_base, density(v)?, density(v_base)?))
}

#[pyfunction]
fn compose(eta_sched: f64, eta_wrapper: f64, w: f64) -> PyResult<f64> {
    regulator::compose(eta_sched, eta_wrapper, w).map_err(err)
}

#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Calibration {
    inner: CalibrationConstants,
}

#[pymethods]
impl Calibration {
    #[new]
    #[pyo3(signature = (granularity, v_base = 0.5, window_steps = 10))]
    fn new(granularity: f64, v_base: f64, window_steps: usize) -> PyResult<Self> {
        let inner = CalibrationConstants::new(granularity, density(v_base)?, window_steps).map_err(err)?;
        Ok(Calibration { inner })
    }

    /// `‖D‖ = mean(dS_ext/L) / mean(dR)`.
    #[staticmethod]
    #[pyo3(signature = (mean_gain_over_loss, mean_dr, v_base = 0.5, window_steps = 10))]
    fn from_means(mean_gain_over_loss: f64, mean_dr: f64, v_base: f64, window_steps: usize) -> PyResult<Self> {
        let cfg = measurement::CalibrationConfig { window_steps, v_base };
        let inner = measurement::calibrate_from_means(mean_gain_over_loss, mean_dr, &cfg).map_err(err)?;
        Ok(Calibration { inner })
    }

    #[getter]
    fn granularity(&self) -> f64 {
        self.inner.granularity
    }

    #[getter]
    fn v_base(&self) -> f64 {
        self.inner.v_base.value()
    }

    #[getter]
    fn window_steps(&self) -> usize {
        self.inner.window_steps
    }

    fn __repr__(&self) -> String {
        format!(
            "Calibration(granularity={}, v_base={}, window_steps={})",
            self.inner.granularity,
            self.inner.v_base.value(),
            self.inner.window_steps
        )
    }
}

#[pyfunction]
fn velocity_tier1(loss: f64, cal: &Calibration) -> PyResult<f64> {
    Ok(measurement::velocity_tier1(loss, &cal.inner).map_err(err)?.value.value())
}

#[pyfunction]
fn velocity_tier2(dr: f64, ds_r: f64, ds_ext: f64, loss: f64, cal: &Calibration) -> PyResult<f64> {
    Ok(measurement::velocity_tier2(dr, ds_r, ds_ext, loss, &cal.inner).map_err(err)?.value.value())
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn velocity_tier3(dr: f64, ds_r: f64, ds_ext: f64, loss: f64, l_r: f64, l_s: f64, cal: &Calibration) -> PyResult<f64> {
    Ok(measurement::velocity_tier3(dr, ds_r, ds_ext, loss, l_r, l_s, &cal.inner).map_err(err)?.value.value())
}

#[pyfunction]
#[pyo3(signature = (rho, n_events, seed = 0, jitter = 0.0))]
fn run_collision_sim<'py>(py: Python<'py>, rho: f64, n_events: u64, seed: u64, jitter: f64) -> PyResult<Bound<'py, PyAny>> {
    let cfg = CollisionConfig::new(density(rho)?, n_events, seed, jitter);
    cfg.validate().map_err(err)?;
    let result = py.detach(|| microsim::run_collision_sim(&cfg)).map_err(err)?;
    to_py(py, &result)
}

#[pyfunction]
#[pyo3(signature = (model, velocities, costs, frame = "absolute"))]
fn fit<'py>(py: Python<'py>, model: &str, velocities: Vec<f64>, costs: Vec<f64>, frame: &str) -> PyResult<Bound<'py, PyAny>> {
    let s = samples(velocities, costs)?;
    let r = arena::fit(parse_model(model)?, &s, parse_frame(frame)?, &FitOptions::default()).map_err(err)?;
    to_py(py, &r)
}

/// Fits every model in both frames; rows come back best first.
#[pyfunction]
fn adjudicate<'py>(py: Python<'py>, velocities: Vec<f64>, costs: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let s = samples(velocities, costs)?;
    to_py(py, &arena::adjudicate(&s, &FitOptions::default()))
}

/// Runs an experiment config and returns the manifest of written files.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ExperimentConfig::from_json(&json_text(config)?).and_then(ExperimentConfig::resolve).map_err(err)?;
    let manifest = py.detach(|| config::run(&cfg)).map_err(err)?;
    to_py(py, &manifest)
}

#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Dataset {
    inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    #[new]
    fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<Self> {
        if inputs.len() != labels.len() || inputs.is_empty() {
            return Err(PyValueError::new_err("need one nonempty input row per label"));
        }
        let dim = inputs[0].len();
        if dim == 0 || inputs.iter().any(|r| r.len() != dim) {
            return Err(PyValueError::new_err("input rows must share a nonzero width"));
        }
        Ok(Dataset { inner: CoreDataset { dim, inputs: inputs.concat(), labels } })
    }

    /// Gaussian-cluster classification data.
    #[staticmethod]
    #[pyo3(signature = (n, seed = 0, stream = 0, noise_fraction = 0.0, n_classes = 10, input_dim = 16, cluster_std = 1.0))]
    fn synthetic(
        n: usize,
        seed: u64,
        stream: u64,
        noise_fraction: f64,
        n_classes: usize,
        input_dim: usize,
        cluster_std: f64,
    ) -> PyResult<Self> {
        let task = SyntheticTask { n_classes, input_dim, cluster_std, noise_fraction, class_subset: None, seed };
        task.validate().map_err(err)?;
        Ok(Dataset { inner: task.generate(n, stream) })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// MLP training loop with optional learning-rate regulation. The first
/// epoch calibrates the velocity measurement.
#[pyclass]
struct Trainer {
    inner: trainer::Trainer,
}

#[pymethods]
impl Trainer {
    #[new]
    #[pyo3(signature = (input_dim, n_classes, seed = 0, config = None))]
    fn new(input_dim: usize, n_classes: usize, seed: u64, config: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let cfg: TrainConfig = match config {
            Some(c) => from_json(c)?,
            None => TrainConfig::default(),
        };
        let inner = trainer::Trainer::new(cfg, input_dim, n_classes, seed).map_err(err)?;
        Ok(Trainer { inner })
    }

    /// Runs one epoch and returns its per-step telemetry as dicts.
    #[pyo3(signature = (epoch, data, holdout = None, tag = "clean"))]
    fn run_epoch<'py>(
        &mut self,
        py: Python<'py>,
        epoch: u64,
        data: &Dataset,
        holdout: Option<&Dataset>,
        tag: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let tag: PhaseTag = serde_json::from_value(serde_json::Value::String(tag.to_string()))
            .map_err(|_| PyValueError::new_err(format!("unknown phase tag `{tag}`")))?;
        let records = self
            .inner
            .run_epoch(epoch, &data.inner, holdout.map(|h| &h.inner), tag)
            .map_err(err)?;
        to_py(py, &records)
    }

    fn loss(&self, data: &Dataset) -> f64 {
        self.inner.model().loss(&data.inner)
    }

    fn accuracy(&self, data: &Dataset) -> f64 {
        self.inner.model().accuracy(&data.inner)
    }

    /// Largest relative error between analytic and central-difference
    /// gradients over `per_layer` sampled parameters per layer.
    #[pyo3(signature = (data, per_layer = 10, seed = 0))]
    fn gradient_check(&self, data: &Dataset, per_layer: usize, seed: u64) -> f64 {
        let idx: Vec<usize> = (0..data.inner.len()).collect();
        trainer::gradient_check(self.inner.model(), &data.inner, &idx, per_layer, seed).max_relative_error
    }

    #[getter]
    fn steps_taken(&self) -> u64 {
        self.inner.steps_taken()
    }

    #[getter]
    fn granularity(&self) -> Option<f64> {
        self.inner.calibration().map(|c| c.granularity)
    }
}

#[pymodule]
fn inertia(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(lorentz_factor, m)?)?;
    m.add_function(wrap_pyfunction!(work, m)?)?;
    m.add_function(wrap_pyfunction!(fisher_approx_work, m)?)?;
    m.add_function(wrap_pyfunction!(decompose_action, m)?)?;
    m.add_function(wrap_pyfunction!(interpretability_criterion, m)?)?;
    m.add_function(wrap_pyfunction!(relativistic_brake, m)?)?;
    m.add_function(wrap_pyfunction!(compose, m)?)?;
    m.add_function(wrap_pyfunction!(velocity_tier1, m)?)?;
    m.add_function(wrap_pyfunction!(velocity_tier2, m)?)?;
    m.add_function(wrap_pyfunction!(velocity_tier3, m)?)?;
    m.add_function(wrap_pyfunction!(run_collision_sim, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(adjudicate, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_class::<Calibration>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Trainer>()?;
    Ok(())
}
