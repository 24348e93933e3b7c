//! Python bindings for the lattice optimizers, the GP surrogate, the
//! acquisition functions and the image metrics.
//!
//! Objectives are either a builtin id (`"gan_proxy"`, `"sphere"`,
//! `"rastrigin_discrete"`) or a Python callable taking a `{name: int}` dict
//! and returning a float. An exception raised by the callable counts as a
//! failed evaluation; three in a row abort the run with `RuntimeError`.

use std::str::FromStr;

use pyo3::exceptions::{PyRuntimeError, PyTypeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList, PyString};

use hypertune::acquisition::{self, AcquisitionKind};
use hypertune::gp::{self, GpModel, KernelConfig, Posterior};
use hypertune::metrics::{self, Image, SsimConfig, SsimWindow};
use hypertune::objectives::{Builtin, BuiltinId, EvalError, Objective};
use hypertune::{
    BoConfig, CobylaConfig, History, ParamDef, ParamPoint, PsoConfig, RunError, RunOutcome,
};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn run_err(e: RunError) -> PyErr {
    match e {
        RunError::Config(_) | RunError::Space(_) => value_err(e),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

// ---------------------------------------------------------------------------
// Search space
// ---------------------------------------------------------------------------

/// Integer lattice: one `(name, lower, upper[, multiple_of])` per dimension.
#[pyclass(name = "SearchSpace", module = "hypertune", frozen)]
struct PySearchSpace {
    inner: hypertune::SearchSpace,
}

#[pymethods]
impl PySearchSpace {
    #[new]
    fn new(params: Vec<Bound<'_, PyAny>>) -> PyResult<Self> {
        let defs = params
            .iter()
            .map(|p| {
                if let Ok((name, lo, hi, q)) = p.extract::<(String, i64, i64, i64)>() {
                    ParamDef::new(name, lo, hi, q)
                } else {
                    let (name, lo, hi) = p.extract::<(String, i64, i64)>()?;
                    ParamDef::range(name, lo, hi)
                }
                .map_err(value_err)
            })
            .collect::<PyResult<Vec<_>>>()?;
        Ok(Self {
            inner: hypertune::SearchSpace::new(defs).map_err(value_err)?,
        })
    }

    /// m in [2, 11], n in [64, 256] step 4, k in [2, 10].
    #[staticmethod]
    fn gan_lattice() -> Self {
        Self {
            inner: hypertune::SearchSpace::gan_lattice(),
        }
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names().map(String::from).collect()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn lattice_size(&self) -> u128 {
        self.inner.lattice_size()
    }

    fn validate(&self, point: Vec<i64>) -> PyResult<bool> {
        self.inner.validate(&ParamPoint(point)).map_err(value_err)
    }

    /// Nearest admissible point, per coordinate, after clamping.
    fn snap(&self, raw: Vec<f64>) -> PyResult<Vec<i64>> {
        Ok(self.inner.snap(&raw).map_err(value_err)?.0)
    }

    fn normalize(&self, point: Vec<i64>) -> PyResult<Vec<f64>> {
        self.inner.normalize(&ParamPoint(point)).map_err(value_err)
    }

    fn enumerate(&self) -> PyResult<Vec<Vec<i64>>> {
        Ok(self
            .inner
            .enumerate()
            .map_err(value_err)?
            .into_iter()
            .map(|p| p.0)
            .collect())
    }

    fn __len__(&self) -> usize {
        self.inner.lattice_size().min(usize::MAX as u128) as usize
    }

    fn __repr__(&self) -> String {
        let dims: Vec<String> = self
            .inner
            .params()
            .iter()
            .map(|p| {
                format!(
                    "{}=[{}..{} step {}]",
                    p.name, p.lower, p.upper, p.multiple_of
                )
            })
            .collect();
        format!("SearchSpace({})", dims.join(", "))
    }
}

// ---------------------------------------------------------------------------
// Gaussian process and acquisition
// ---------------------------------------------------------------------------

/// Fitted GP surrogate with a squared-exponential kernel.
#[pyclass(name = "GaussianProcess", module = "hypertune", frozen)]
struct PyGaussianProcess {
    model: GpModel,
}

#[pymethods]
impl PyGaussianProcess {
    /// Fit on inputs in the unit cube; `prior_mean` defaults to the mean of `ys`.
    #[staticmethod]
    #[pyo3(signature = (xs, ys, length_scale = vec![0.2], signal_variance = 1.0, noise_variance = 1e-6, jitter = 1e-9, prior_mean = None))]
    fn fit(
        xs: Vec<Vec<f64>>,
        ys: Vec<f64>,
        length_scale: Vec<f64>,
        signal_variance: f64,
        noise_variance: f64,
        jitter: f64,
        prior_mean: Option<f64>,
    ) -> PyResult<Self> {
        let kernel = KernelConfig {
            signal_variance,
            length_scale,
            noise_variance,
            jitter,
        };
        let pm = prior_mean.unwrap_or_else(|| {
            if ys.is_empty() {
                0.0
            } else {
                ys.iter().sum::<f64>() / ys.len() as f64
            }
        });
        let model = gp::fit(&kernel, pm, &xs, &ys).map_err(value_err)?;
        Ok(Self { model })
    }

    /// `(mean, variance)` at `x`.
    fn predict(&self, x: Vec<f64>) -> PyResult<(f64, f64)> {
        let p = self.model.predict(&x).map_err(value_err)?;
        Ok((p.mean, p.variance))
    }

    #[getter]
    fn prior_mean(&self) -> f64 {
        self.model.prior_mean()
    }

    /// Diagonal jitter actually used by the factorization.
    #[getter]
    fn jitter(&self) -> f64 {
        self.model.jitter()
    }

    #[getter]
    fn max_variance(&self) -> f64 {
        self.model.max_variance()
    }
}

fn posterior(mean: f64, variance: f64) -> PyResult<Posterior> {
    if !(mean.is_finite() && variance.is_finite() && variance >= 0.0) {
        return Err(PyValueError::new_err(
            "mean must be finite and variance finite and non-negative",
        ));
    }
    Ok(Posterior { mean, variance })
}

/// mean + lam * sqrt(variance)
#[pyfunction]
#[pyo3(signature = (mean, variance, lam = 1.0))]
fn ucb(mean: f64, variance: f64, lam: f64) -> PyResult<f64> {
    Ok(acquisition::ucb(&posterior(mean, variance)?, lam))
}

/// Probability that a draw from the posterior exceeds `incumbent`.
#[pyfunction]
fn probability_of_improvement(mean: f64, variance: f64, incumbent: f64) -> PyResult<f64> {
    Ok(acquisition::probability_of_improvement(
        &posterior(mean, variance)?,
        incumbent,
    ))
}

// ---------------------------------------------------------------------------
// Objectives and optimizers
// ---------------------------------------------------------------------------

struct CallableObjective<'py> {
    func: Bound<'py, PyAny>,
    names: Vec<String>,
}

impl Objective for CallableObjective<'_> {
    fn id(&self) -> &str {
        "python"
    }

    fn evaluate(&mut self, point: &ParamPoint) -> Result<f64, EvalError> {
        let py = self.func.py();
        let call = || -> PyResult<f64> {
            let params = PyDict::new(py);
            for (name, v) in self.names.iter().zip(&point.0) {
                params.set_item(name, v)?;
            }
            self.func.call1((params,))?.extract::<f64>()
        };
        match call() {
            Ok(s) if s.is_finite() => Ok(s),
            Ok(s) => Err(EvalError::Other(format!("callable returned {s}"))),
            Err(e) => Err(EvalError::Other(e.to_string())),
        }
    }
}

fn objective<'py>(
    space: &hypertune::SearchSpace,
    obj: &Bound<'py, PyAny>,
) -> PyResult<Box<dyn Objective + 'py>> {
    if let Ok(s) = obj.cast::<PyString>() {
        let id = BuiltinId::from_str(s.to_str()?).map_err(value_err)?;
        return Ok(Box::new(Builtin::new(id, space).map_err(value_err)?));
    }
    if obj.is_callable() {
        return Ok(Box::new(CallableObjective {
            func: obj.clone(),
            names: space.names().map(String::from).collect(),
        }));
    }
    Err(PyTypeError::new_err(
        "objective must be a builtin id string or a callable",
    ))
}

fn params_dict<'py>(
    py: Python<'py>,
    space: &hypertune::SearchSpace,
    p: &ParamPoint,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (name, v) in space.names().zip(&p.0) {
        d.set_item(name, v)?;
    }
    Ok(d)
}

fn history_list<'py>(
    py: Python<'py>,
    space: &hypertune::SearchSpace,
    h: &History,
) -> PyResult<(Bound<'py, PyList>, Bound<'py, PyList>)> {
    let records = PyList::empty(py);
    for r in &h.records {
        let d = PyDict::new(py);
        d.set_item("iteration", r.iteration)?;
        d.set_item("params", params_dict(py, space, &r.point)?)?;
        d.set_item("score", r.score)?;
        records.append(d)?;
    }
    let failures = PyList::empty(py);
    for f in &h.failures {
        let d = PyDict::new(py);
        d.set_item("iteration", f.iteration)?;
        d.set_item("params", params_dict(py, space, &f.point)?)?;
        d.set_item("kind", &f.kind)?;
        d.set_item("message", &f.message)?;
        failures.append(d)?;
    }
    Ok((records, failures))
}

/// `{"best", "stop", "history", "failures", "best_so_far"}`
fn outcome_dict<'py>(
    py: Python<'py>,
    space: &hypertune::SearchSpace,
    out: RunOutcome,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let best = PyDict::new(py);
    best.set_item("iteration", out.best.iteration)?;
    best.set_item("params", params_dict(py, space, &out.best.point)?)?;
    best.set_item("score", out.best.score)?;
    d.set_item("best", best)?;
    let stop = serde_json::to_value(out.stop)
        .ok()
        .and_then(|v| v.as_str().map(String::from));
    d.set_item("stop", stop)?;
    let (records, failures) = history_list(py, space, &out.history)?;
    d.set_item("history", records)?;
    d.set_item("failures", failures)?;
    d.set_item("best_so_far", out.history.best_so_far())?;
    Ok(d)
}

/// GP Bayesian optimization with UCB (`lam` weights the deviation) or PI.
#[pyfunction]
#[pyo3(signature = (space, objective, budget = 50, seed = 0, n_initial = 3, acquisition = "ucb", lam = 1.0, length_scale = vec![0.2], noise_variance = 1e-6))]
#[allow(clippy::too_many_arguments)]
fn run_bo<'py>(
    py: Python<'py>,
    space: &PySearchSpace,
    objective: &Bound<'py, PyAny>,
    budget: usize,
    seed: u64,
    n_initial: usize,
    acquisition: &str,
    lam: f64,
    length_scale: Vec<f64>,
    noise_variance: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let space = &space.inner;
    let mut obj = self::objective(space, objective)?;
    let mut cfg = BoConfig::default().with_budget(budget).with_seed(seed);
    cfg.n_initial = n_initial.min(budget.max(1));
    cfg.acquisition.kind = AcquisitionKind::from_str(acquisition).map_err(value_err)?;
    cfg.acquisition.lambda = lam;
    cfg.kernel.length_scale = length_scale;
    cfg.kernel.noise_variance = noise_variance;
    let out = hypertune::run_bo(space, obj.as_mut(), &cfg).map_err(run_err)?;
    outcome_dict(py, space, out)
}

/// Linear-interpolation trust-region search with a shrinking radius.
#[pyfunction]
#[pyo3(signature = (space, objective, budget = 100, seed = 0, rho_begin = 0.25, rho_end = 1e-3))]
fn run_cobyla<'py>(
    py: Python<'py>,
    space: &PySearchSpace,
    objective: &Bound<'py, PyAny>,
    budget: usize,
    seed: u64,
    rho_begin: f64,
    rho_end: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let space = &space.inner;
    let mut obj = self::objective(space, objective)?;
    let cfg = CobylaConfig {
        rho_begin,
        rho_end,
        max_evals: budget,
        seed,
    };
    let out = hypertune::run_cobyla(space, obj.as_mut(), &cfg).map_err(run_err)?;
    outcome_dict(py, space, out)
}

/// Particle swarm with constriction coefficients and velocity clamping.
#[pyfunction]
#[pyo3(signature = (space, objective, budget = 100, seed = 0, n_particles = 8, inertia = 0.729, cognitive = 1.49445, social = 1.49445, v_max = 0.25))]
#[allow(clippy::too_many_arguments)]
fn run_pso<'py>(
    py: Python<'py>,
    space: &PySearchSpace,
    objective: &Bound<'py, PyAny>,
    budget: usize,
    seed: u64,
    n_particles: usize,
    inertia: f64,
    cognitive: f64,
    social: f64,
    v_max: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let space = &space.inner;
    let mut obj = self::objective(space, objective)?;
    let cfg = PsoConfig {
        n_particles,
        inertia,
        cognitive,
        social,
        v_max,
        max_evals: budget,
        seed,
        ..PsoConfig::default()
    };
    let out = hypertune::run_pso(space, obj.as_mut(), &cfg).map_err(run_err)?;
    outcome_dict(py, space, out)
}

/// Uniform sampling without replacement.
#[pyfunction]
#[pyo3(signature = (space, objective, budget = 50, seed = 0))]
fn run_random<'py>(
    py: Python<'py>,
    space: &PySearchSpace,
    objective: &Bound<'py, PyAny>,
    budget: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let space = &space.inner;
    let mut obj = self::objective(space, objective)?;
    let out = hypertune::run_random(space, obj.as_mut(), budget, seed).map_err(run_err)?;
    outcome_dict(py, space, out)
}

/// Score of a builtin objective at one point.
#[pyfunction]
fn evaluate_builtin(space: &PySearchSpace, builtin_id: &str, point: Vec<i64>) -> PyResult<f64> {
    let id = BuiltinId::from_str(builtin_id).map_err(value_err)?;
    let mut obj = Builtin::new(id, &space.inner).map_err(value_err)?;
    obj.evaluate(&ParamPoint(point)).map_err(value_err)
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Image from an `H x W` (grey) or `H x W x C` nested sequence in [0, 1].
fn image(obj: &Bound<'_, PyAny>) -> PyResult<Image> {
    let (h, w, c, px) = if let Ok(rows) = obj.extract::<Vec<Vec<Vec<f64>>>>() {
        let (h, w) = (rows.len(), rows.first().map_or(0, Vec::len));
        let c = rows.first().and_then(|r| r.first()).map_or(0, Vec::len);
        if rows
            .iter()
            .any(|r| r.len() != w || r.iter().any(|p| p.len() != c))
        {
            return Err(PyValueError::new_err("ragged image"));
        }
        (h, w, c, rows.into_iter().flatten().flatten().collect())
    } else if let Ok(rows) = obj.extract::<Vec<Vec<f64>>>() {
        let (h, w) = (rows.len(), rows.first().map_or(0, Vec::len));
        if rows.iter().any(|r| r.len() != w) {
            return Err(PyValueError::new_err("ragged image"));
        }
        (h, w, 1, rows.into_iter().flatten().collect())
    } else {
        return Err(PyTypeError::new_err(
            "image must be an H x W or H x W x C sequence of floats",
        ));
    };
    Image::new(w, h, c, px).map_err(value_err)
}

fn ssim_config(window: &str) -> PyResult<SsimConfig> {
    Ok(SsimConfig {
        window: SsimWindow::from_str(window).map_err(value_err)?,
        ..SsimConfig::default()
    })
}

#[pyfunction]
fn mse(a: &Bound<'_, PyAny>, b: &Bound<'_, PyAny>) -> PyResult<f64> {
    metrics::mse(&image(a)?, &image(b)?).map_err(value_err)
}

/// Peak signal-to-noise ratio in dB for peak 1.0, capped at 100 dB.
#[pyfunction]
fn psnr(a: &Bound<'_, PyAny>, b: &Bound<'_, PyAny>) -> PyResult<f64> {
    metrics::psnr(&image(a)?, &image(b)?).map_err(value_err)
}

/// Mean SSIM; `window` is `"gaussian_11x11"` or `"global"`.
#[pyfunction]
#[pyo3(signature = (a, b, window = "gaussian_11x11"))]
fn ssim(a: &Bound<'_, PyAny>, b: &Bound<'_, PyAny>, window: &str) -> PyResult<f64> {
    metrics::ssim(&image(a)?, &image(b)?, &ssim_config(window)?).map_err(value_err)
}

/// `{"mse", "psnr", "ssim"}` of two 8-bit PNG files.
#[pyfunction]
#[pyo3(signature = (a, b, window = "gaussian_11x11"))]
fn evaluate_pngs<'py>(
    py: Python<'py>,
    a: &str,
    b: &str,
    window: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let (ia, ib) = (
        Image::from_png(a).map_err(value_err)?,
        Image::from_png(b).map_err(value_err)?,
    );
    let r = metrics::evaluate_pair(&ia, &ib, &ssim_config(window)?).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("mse", r.mse)?;
    d.set_item("psnr", r.psnr)?;
    d.set_item("ssim", r.ssim)?;
    Ok(d)
}

#[pymodule]
fn _hypertune(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySearchSpace>()?;
    m.add_class::<PyGaussianProcess>()?;
    m.add_function(wrap_pyfunction!(ucb, m)?)?;
    m.add_function(wrap_pyfunction!(probability_of_improvement, m)?)?;
    m.add_function(wrap_pyfunction!(run_bo, m)?)?;
    m.add_function(wrap_pyfunction!(run_cobyla, m)?)?;
    m.add_function(wrap_pyfunction!(run_pso, m)?)?;
    m.add_function(wrap_pyfunction!(run_random, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_builtin, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_pngs, m)?)?;
    Ok(())
}
