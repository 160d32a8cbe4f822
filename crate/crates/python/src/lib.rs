//! Python bindings. Arrays cross the boundary as lists of floats; reports come
//! back as dicts.

use energy_sde::experiments::{
    convergence_study, sensitivity_index as core_sensitivity_index, ErrorSetup, Qoi, SensitivitySetup,
    DEFAULT_DT_LIST,
};
use energy_sde::model::{self, Param};
use energy_sde::sde::{self, DEFAULT_EPS};
use energy_sde::stability::{self, PersistenceBound, PersistenceSpec};
use energy_sde::Error;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::BlowUp { .. } | Error::NumericFailure(_) => PyArithmeticError::new_err(e.to_string()),
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

#[pyclass(name = "ModelParams", from_py_object)]
#[derive(Clone)]
struct PyModelParams {
    inner: model::ModelParams,
}

#[pymethods]
impl PyModelParams {
    /// Baseline values, overridden by keyword (`a1`, `W`, `N`, ...).
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut inner = model::ModelParams::BASELINE;
        if let Some(kw) = kwargs {
            for (k, v) in kw.iter() {
                let name: String = k.extract()?;
                let p = Param::from_name(&name)
                    .ok_or_else(|| PyValueError::new_err(format!("unknown parameter '{name}'")))?;
                inner = inner.with(p, v.extract()?);
            }
        }
        Ok(Self { inner })
    }

    fn get(&self, name: &str) -> PyResult<f64> {
        Param::from_name(name)
            .map(|p| self.inner.get(p))
            .ok_or_else(|| PyValueError::new_err(format!("unknown parameter '{name}'")))
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for p in Param::ALL {
            d.set_item(p.name(), self.inner.get(p))?;
        }
        Ok(d)
    }

    /// `(violations, warnings)`.
    fn validate(&self) -> (Vec<String>, Vec<String>) {
        let r = self.inner.validate();
        (r.violations, r.warnings)
    }

    fn __repr__(&self) -> String {
        format!("ModelParams({:?})", self.inner)
    }
}

#[pyclass(name = "SimConfig", from_py_object)]
#[derive(Clone)]
struct PySimConfig {
    inner: sde::SimConfig,
}

fn positivity(name: &str, eps: f64) -> PyResult<sde::Positivity> {
    match name {
        "projection" => Ok(sde::Positivity::Projection { eps }),
        "log" => Ok(sde::Positivity::LogDomain),
        "none" => Ok(sde::Positivity::None),
        other => Err(PyValueError::new_err(format!("unknown positivity policy '{other}'"))),
    }
}

#[pymethods]
impl PySimConfig {
    #[new]
    #[pyo3(signature = (t_end=50.0, dt=0.01, seed=42, scheme="em", positivity="projection", eps=DEFAULT_EPS, x0=[2.0, 1.0, 0.5, 0.5]))]
    fn new(
        t_end: f64,
        dt: f64,
        seed: u64,
        scheme: &str,
        positivity: &str,
        eps: f64,
        x0: [f64; 4],
    ) -> PyResult<Self> {
        let inner = sde::SimConfig {
            t_end,
            dt,
            seed,
            scheme: scheme.parse().map_err(PyValueError::new_err)?,
            positivity: self::positivity(positivity, eps)?,
            x0,
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn t_end(&self) -> f64 {
        self.inner.t_end
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn scheme(&self) -> &'static str {
        self.inner.scheme.name()
    }

    fn __repr__(&self) -> String {
        format!("SimConfig({:?})", self.inner)
    }
}

fn params_or_default(p: Option<PyModelParams>) -> model::ModelParams {
    p.map_or(model::ModelParams::BASELINE, |p| p.inner)
}

fn noise_or_default(sigma: Option<[f64; 4]>) -> PyResult<model::NoiseIntensities> {
    let n = sigma.map_or(model::NoiseIntensities::BASELINE, model::NoiseIntensities::new);
    n.ensure_valid().map_err(to_py)?;
    Ok(n)
}

#[pyfunction]
#[pyo3(signature = (x, params=None))]
fn drift(x: [f64; 4], params: Option<PyModelParams>) -> PyResult<[f64; 4]> {
    model::drift(&x, &params_or_default(params)).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (x, sigma=None))]
fn diffusion(x: [f64; 4], sigma: Option<[f64; 4]>) -> PyResult<[f64; 4]> {
    model::diffusion(&x, &noise_or_default(sigma)?).map_err(to_py)
}

/// Row-major 4x4 list.
#[pyfunction]
#[pyo3(signature = (x, params=None))]
fn jacobian(x: [f64; 4], params: Option<PyModelParams>) -> PyResult<Vec<Vec<f64>>> {
    let j = model::jacobian(&x, &params_or_default(params)).map_err(to_py)?;
    Ok((0..4).map(|r| (0..4).map(|c| j[(r, c)]).collect()).collect())
}

#[pyfunction]
#[pyo3(signature = (params=None))]
fn find_equilibria<'py>(py: Python<'py>, params: Option<PyModelParams>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let p = params_or_default(params);
    stability::find_equilibria(&p)
        .map_err(to_py)?
        .into_iter()
        .map(|e| {
            let d = PyDict::new(py);
            d.set_item("branch", e.branch.name())?;
            d.set_item("point", e.point)?;
            d.set_item("feasible", e.feasible)?;
            d.set_item("reason", e.infeasibility_reason.clone())?;
            d.set_item("residual", if e.feasible { Some(e.residual(&p)) } else { None })?;
            Ok(d)
        })
        .collect()
}

/// Spectral and matrix-inequality verdict of the linearisation at `x`.
#[pyfunction]
#[pyo3(signature = (x, params=None, sigma=None))]
fn stability_at<'py>(
    py: Python<'py>,
    x: [f64; 4],
    params: Option<PyModelParams>,
    sigma: Option<[f64; 4]>,
) -> PyResult<Bound<'py, PyDict>> {
    let j = model::jacobian(&x, &params_or_default(params)).map_err(to_py)?;
    let r = stability::classify_jacobian(&j, &noise_or_default(sigma)?, None).map_err(to_py)?;
    let d = PyDict::new(py);
    let ev: Vec<(f64, f64)> = r.eigenvalues.iter().map(|z| (z.re, z.im)).collect();
    d.set_item("eigenvalues", ev)?;
    d.set_item("max_real_part", r.max_real_part)?;
    d.set_item("verdict", r.verdict.name())?;
    d.set_item("lmi_feasible", r.lmi.feasible)?;
    d.set_item("alpha", r.lmi.alpha)?;
    d.set_item("decay_rate_bound", r.lmi.decay_rate_bound)?;
    Ok(d)
}

/// `None` when the noise penalty exceeds `eta`; `inf` when `kappa = 0`.
#[pyfunction]
#[pyo3(signature = (c=[1.0; 4], eta=1.0, kappa=0.5, sigma=None))]
fn persistence_bound(c: [f64; 4], eta: f64, kappa: f64, sigma: Option<[f64; 4]>) -> PyResult<Option<f64>> {
    let spec = PersistenceSpec { c, eta, kappa };
    Ok(match stability::persistence_bound(&spec, &noise_or_default(sigma)?).map_err(to_py)? {
        PersistenceBound::Bound { value } => Some(value),
        PersistenceBound::ConditionFails { .. } => None,
        PersistenceBound::Unbounded { .. } => Some(f64::INFINITY),
    })
}

/// `(times, states, clamps)`.
#[pyfunction]
#[pyo3(signature = (config=None, params=None, sigma=None))]
fn simulate(
    py: Python<'_>,
    config: Option<PySimConfig>,
    params: Option<PyModelParams>,
    sigma: Option<[f64; 4]>,
) -> PyResult<(Vec<f64>, Vec<[f64; 4]>, u64)> {
    let cfg = config.map_or_else(sde::SimConfig::default, |c| c.inner);
    let p = params_or_default(params);
    let n = noise_or_default(sigma)?;
    let t = py.detach(|| sde::simulate(&cfg, &p, &n)).map_err(to_py)?;
    Ok((t.times, t.states, t.applied_clamps))
}

#[pyfunction]
#[pyo3(signature = (n_paths, config=None, params=None, sigma=None))]
fn simulate_ensemble<'py>(
    py: Python<'py>,
    n_paths: usize,
    config: Option<PySimConfig>,
    params: Option<PyModelParams>,
    sigma: Option<[f64; 4]>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.map_or_else(sde::SimConfig::default, |c| c.inner);
    let p = params_or_default(params);
    let n = noise_or_default(sigma)?;
    let s = py.detach(|| sde::simulate_ensemble(&cfg, &p, &n, n_paths)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("times", s.times)?;
    d.set_item("mean", s.mean)?;
    d.set_item("variance", s.variance)?;
    d.set_item("min", s.min)?;
    d.set_item("max", s.max)?;
    d.set_item("total_clamps", s.total_clamps)?;
    Ok(d)
}

/// Strong-error table for one scheme from the quasi-steady start.
#[pyfunction]
#[pyo3(signature = (scheme="em", n_paths=500, t_end=5.0, dt_list=None, seed=42, params=None, sigma=None))]
#[allow(clippy::too_many_arguments)]
fn convergence<'py>(
    py: Python<'py>,
    scheme: &str,
    n_paths: usize,
    t_end: f64,
    dt_list: Option<Vec<f64>>,
    seed: u64,
    params: Option<PyModelParams>,
    sigma: Option<[f64; 4]>,
) -> PyResult<Bound<'py, PyDict>> {
    let scheme: sde::Scheme = scheme.parse().map_err(PyValueError::new_err)?;
    let p = params_or_default(params);
    let n = noise_or_default(sigma)?;
    let setup = ErrorSetup {
        n_paths,
        t_end,
        seed,
        ..ErrorSetup::default_for(&p).map_err(to_py)?
    };
    let dts = dt_list.unwrap_or_else(|| DEFAULT_DT_LIST.to_vec());
    let t = py
        .detach(|| convergence_study(scheme, &p, &n, &setup, &dts, None))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("dt", t.dt_values)?;
    d.set_item("mean_square_error", t.strong_errors)?;
    d.set_item("rms_error", t.rms_errors)?;
    d.set_item("fitted_rate", t.fitted_rate)?;
    Ok(d)
}

/// Normalised index `S_p` of parameter `param` for quantity `qoi`.
#[pyfunction]
#[pyo3(signature = (param, qoi="avg_demand", delta_fraction=0.1, n_paths=200, config=None, params=None, sigma=None))]
#[allow(clippy::too_many_arguments)]
fn sensitivity_index(
    py: Python<'_>,
    param: &str,
    qoi: &str,
    delta_fraction: f64,
    n_paths: usize,
    config: Option<PySimConfig>,
    params: Option<PyModelParams>,
    sigma: Option<[f64; 4]>,
) -> PyResult<f64> {
    let param = Param::from_name(param).ok_or_else(|| PyValueError::new_err(format!("unknown parameter '{param}'")))?;
    let qoi: Qoi = qoi.parse().map_err(PyValueError::new_err)?;
    let setup = SensitivitySetup {
        sim: config.map_or_else(|| SensitivitySetup::default().sim, |c| c.inner),
        n_paths,
        delta_fraction,
    };
    let p = params_or_default(params);
    let n = noise_or_default(sigma)?;
    let r = py
        .detach(|| core_sensitivity_index(&p, &n, param, qoi, &setup))
        .map_err(to_py)?;
    Ok(r.s_index)
}

/// Runs the command line with `argv` (without the program name); returns the exit status.
#[pyfunction]
fn run_cli(py: Python<'_>, argv: Vec<String>) -> i32 {
    let args: Vec<String> = std::iter::once("energy-sde".to_string()).chain(argv).collect();
    py.detach(|| energy_sde::cli::run_cli(args))
}

#[pymodule]
fn energy_sde_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PySimConfig>()?;
    m.add_function(wrap_pyfunction!(drift, m)?)?;
    m.add_function(wrap_pyfunction!(diffusion, m)?)?;
    m.add_function(wrap_pyfunction!(jacobian, m)?)?;
    m.add_function(wrap_pyfunction!(find_equilibria, m)?)?;
    m.add_function(wrap_pyfunction!(stability_at, m)?)?;
    m.add_function(wrap_pyfunction!(persistence_bound, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(convergence, m)?)?;
    m.add_function(wrap_pyfunction!(sensitivity_index, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
