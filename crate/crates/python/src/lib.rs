//! Python bindings: benchmarks, synthesis, verification and simulation.

use bscsynth::cli::verify_set;
use bscsynth::decay::alpha_ref;
use bscsynth::io::ControllerSetDoc;
use bscsynth::linalg::to_rows;
use bscsynth::scenario::{builtin_benchmark, builtin_names, BenchmarkDef};
use bscsynth::simkit::{batch_recovery, check_decay_trace, sample_x0, simulate, SimConfig, X0Sampler};
use bscsynth::synth::{AlphaSearch, BackupController, BscOptions};
use bscsynth::Error;
use nalgebra::DVector;
use pyo3::exceptions::{PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

fn to_py(e: Error) -> PyErr {
    let msg = format!("{}: {e}", e.kind());
    match e {
        Error::Numeric(_) | Error::Solver { .. } | Error::NonConvergence { .. } | Error::Io(_) => {
            PyRuntimeError::new_err(msg)
        }
        _ => PyValueError::new_err(msg),
    }
}

/// Serializes through JSON into plain Python objects.
fn to_object<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn vector(x: Vec<f64>, n: usize) -> PyResult<DVector<f64>> {
    if x.len() != n {
        return Err(PyValueError::new_err(format!("expected {n} values, got {}", x.len())));
    }
    Ok(DVector::from_vec(x))
}

/// A certified backup controller.
#[pyclass(name = "Controller", module = "bscsynth_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyController {
    inner: BackupController,
}

#[pymethods]
impl PyController {
    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn level(&self) -> f64 {
        self.inner.level
    }

    #[getter]
    fn wcet(&self) -> f64 {
        self.inner.wcet
    }

    #[getter]
    fn gain(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.gain)
    }

    #[getter]
    fn lyapunov_matrix(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.qlf)
    }

    #[getter]
    fn center(&self) -> Vec<f64> {
        self.inner.center.iter().copied().collect()
    }

    fn lyapunov(&self, x: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.lyapunov(&vector(x, self.inner.center.len())?))
    }

    /// Negative inside the invariant region.
    fn sbf(&self, x: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.sbf(&vector(x, self.inner.center.len())?))
    }

    fn __repr__(&self) -> String {
        format!("Controller(h={}, alpha={:.6}, level={:.6})", self.inner.h, self.inner.alpha, self.inner.level)
    }
}

/// Controllers synthesized for one benchmark and deadline.
#[pyclass(name = "ControllerSet", module = "bscsynth_py", frozen)]
struct PyControllerSet {
    benchmark: String,
    deadline: f64,
    controllers: Vec<BackupController>,
}

impl PyControllerSet {
    fn doc(&self) -> PyResult<ControllerSetDoc> {
        ControllerSetDoc::new(&self.benchmark, self.deadline, &self.controllers).map_err(to_py)
    }

    fn from_doc(doc: ControllerSetDoc) -> PyResult<Self> {
        let controllers = doc.to_controllers().map_err(to_py)?;
        Ok(Self { benchmark: doc.benchmark, deadline: doc.deadline_s, controllers })
    }
}

#[pymethods]
impl PyControllerSet {
    #[getter]
    fn benchmark(&self) -> &str {
        &self.benchmark
    }

    #[getter]
    fn deadline(&self) -> f64 {
        self.deadline
    }

    #[getter]
    fn periods(&self) -> Vec<f64> {
        self.controllers.iter().map(|c| c.h).collect()
    }

    fn __len__(&self) -> usize {
        self.controllers.len()
    }

    fn __getitem__(&self, i: isize) -> PyResult<PyController> {
        let n = self.controllers.len() as isize;
        let j = if i < 0 { i + n } else { i };
        if j < 0 || j >= n {
            return Err(PyIndexError::new_err("controller index out of range"));
        }
        Ok(PyController { inner: self.controllers[j as usize].clone() })
    }

    fn to_json(&self) -> PyResult<String> {
        self.doc()?.to_json().map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Self::from_doc(ControllerSetDoc::from_json(text).map_err(to_py)?)
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.doc()?.write(&path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Self::from_doc(ControllerSetDoc::read(&path).map_err(to_py)?)
    }

    fn __repr__(&self) -> String {
        format!("ControllerSet({}, deadline={}, periods={:?})", self.benchmark, self.deadline, self.periods())
    }
}

/// A benchmark plant with its safe and preferred regions.
#[pyclass(name = "Benchmark", module = "bscsynth_py", frozen)]
struct PyBenchmark {
    def: BenchmarkDef,
}

impl PyBenchmark {
    fn deadline_or_default(&self, deadline: Option<f64>) -> f64 {
        deadline.unwrap_or(self.def.deadline)
    }
}

#[pymethods]
impl PyBenchmark {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        Ok(Self { def: builtin_benchmark(name).map_err(to_py)? })
    }

    /// Loads a custom benchmark from a JSON configuration file.
    #[staticmethod]
    fn from_config(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self { def: BenchmarkDef::from_json_file(&path).map_err(to_py)? })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.def.name
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.def.plant.n_states()
    }

    #[getter]
    fn deadline(&self) -> f64 {
        self.def.deadline
    }

    #[getter]
    fn deadlines(&self) -> Vec<f64> {
        self.def.deadlines.clone()
    }

    #[getter]
    fn periods(&self) -> Vec<f64> {
        bscsynth::synth::candidate_periods(self.def.h0, self.def.h_max)
    }

    #[pyo3(signature = (h, deadline=None))]
    fn alpha_ref(&self, h: f64, deadline: Option<f64>) -> PyResult<f64> {
        let target = alpha_ref(&self.def.sor, &self.def.por, self.deadline_or_default(deadline), h).map_err(to_py)?;
        Ok(target.alpha_ref)
    }

    /// Sweeps all candidate periods; returns the feasible controllers.
    #[pyo3(signature = (deadline=None, maximize_alpha=false))]
    fn synthesize(&self, py: Python<'_>, deadline: Option<f64>, maximize_alpha: bool) -> PyResult<PyControllerSet> {
        let deadline = self.deadline_or_default(deadline);
        let opts = BscOptions {
            alpha_search: if maximize_alpha { AlphaSearch::Maximize } else { AlphaSearch::Fixed },
            ..BscOptions::default()
        };
        let def = &self.def;
        let sweep = py.detach(|| def.sweep(deadline, &opts)).map_err(to_py)?;
        Ok(PyControllerSet { benchmark: def.name.clone(), deadline, controllers: sweep.controllers })
    }

    /// Certificate report for every controller, as a dict.
    fn verify<'py>(&self, py: Python<'py>, controllers: &PyControllerSet) -> PyResult<Bound<'py, PyAny>> {
        let (_, report) = verify_set(&self.def, &controllers.controllers).map_err(to_py)?;
        to_object(py, &report)
    }

    /// Runs one scenario. Without `x0` the shipped scenario is used, or a
    /// recoverable state is sampled with `seed`.
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (controllers, x0=None, seed=0, observer=false, noise=false, t_end=None))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        controllers: &PyControllerSet,
        x0: Option<Vec<f64>>,
        seed: u64,
        observer: bool,
        noise: bool,
        t_end: Option<f64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let deadline = controllers.deadline;
        let scap = self.def.scap(&controllers.controllers, deadline).map_err(to_py)?;
        let mut cfg = match (x0, self.def.scenario_config(deadline)) {
            (Some(x), _) => SimConfig::new(vector(x, self.def.plant.n_states())?, deadline),
            (None, Some(cfg)) => cfg,
            (None, None) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x = sample_x0(&scap, X0Sampler::Recoverable, &mut rng).map_err(to_py)?;
                SimConfig::new(x, deadline)
            }
        };
        if let Some(t) = t_end {
            cfg.t_end = t;
        }
        cfg.seed = seed;
        cfg.observer_on = observer;
        cfg.noise_on = noise;
        let plant = &self.def.plant;
        let trace = py.detach(|| simulate(plant, &scap, &cfg)).map_err(to_py)?;
        let out = pyo3::types::PyDict::new(py);
        out.set_item("summary", to_object(py, &trace.summary())?)?;
        out.set_item("decay_audit", to_object(py, &check_decay_trace(&trace, &scap))?)?;
        out.set_item("times", trace.times.clone())?;
        out.set_item("states", trace.states.iter().map(|x| x.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>())?;
        out.set_item("periods", trace.periods.clone())?;
        out.set_item("csv", trace.to_csv())?;
        Ok(out.into_any())
    }

    /// Batch recovery from sampled initial states.
    #[pyo3(signature = (controllers, runs=50, seed=0))]
    fn batch<'py>(
        &self,
        py: Python<'py>,
        controllers: &PyControllerSet,
        runs: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let deadline = controllers.deadline;
        let scap = self.def.scap(&controllers.controllers, deadline).map_err(to_py)?;
        let mut base = SimConfig::new(self.def.sor.center.clone(), deadline);
        base.seed = seed;
        let plant = &self.def.plant;
        let batch =
            py.detach(|| batch_recovery(plant, &scap, runs, X0Sampler::Recoverable, &base)).map_err(to_py)?;
        to_object(py, &batch)
    }

    fn __repr__(&self) -> String {
        format!("Benchmark({}, n_states={}, deadline={})", self.def.name, self.def.plant.n_states(), self.def.deadline)
    }
}

#[pyfunction]
fn benchmarks() -> Vec<String> {
    builtin_names()
}

#[pymodule]
fn bscsynth_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBenchmark>()?;
    m.add_class::<PyController>()?;
    m.add_class::<PyControllerSet>()?;
    m.add_function(wrap_pyfunction!(benchmarks, m)?)?;
    Ok(())
}
