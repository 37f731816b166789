//! Python bindings: potentials, SMD runs, audits, the projection oracle and
//! the packaged experiments. Structured results come back as plain dicts.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use smdlab::auditor::{consistent_noise, construct_adversary, minimax_ratio, telescoped_identity};
use smdlab::config::{potential_by_name, ExperimentConfig};
use smdlab::dataset::Dataset;
use smdlab::engine::{CertifyOptions, Problem, RunConfig, SampleOrder, StepSchedule};
use smdlab::error::SmdError;
use smdlab::experiments::{identity_fuzz, run_and_audit, run_cs_demo, CsConfig, FuzzOptions, RunSummary};
use smdlab::linalg::{Matrix, Vector};
use smdlab::losses::Loss;
use smdlab::models::Model;
use smdlab::oracles::{bregman_project as project, min_l2_solution, ProjectOptions};
use smdlab::potentials::Potential;

fn err(e: SmdError) -> PyErr {
    match e {
        SmdError::Config(_) | SmdError::Input(_) | SmdError::Dimension { .. } | SmdError::Domain(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn design(x: Vec<Vec<f64>>) -> PyResult<Matrix> {
    let n = x.len();
    let m = x.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || x.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("X must be a non-empty rectangular list of rows"));
    }
    Ok(Matrix::from_fn(n, m, |i, j| x[i][j]))
}

/// A mirror potential ψ.
#[pyclass(name = "Potential", module = "smdlab", frozen)]
struct PyPotential {
    inner: Potential,
}

#[pymethods]
impl PyPotential {
    /// `kind` is squared_l2, negative_entropy, qnorm_componentwise,
    /// qnorm_squared or quadratic (with `q_matrix`).
    #[new]
    #[pyo3(signature = (kind, q=None, q_matrix=None))]
    fn new(kind: &str, q: Option<f64>, q_matrix: Option<Vec<Vec<f64>>>) -> PyResult<Self> {
        let inner = if kind == "quadratic" {
            let rows = q_matrix.ok_or_else(|| PyValueError::new_err("quadratic needs q_matrix"))?;
            Potential::quadratic(&design(rows)?).map_err(err)?
        } else {
            Potential::new(potential_by_name(kind, q).map_err(err)?).map_err(err)?
        };
        Ok(Self { inner })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name()
    }

    fn value(&self, w: Vec<f64>) -> PyResult<f64> {
        self.inner.value(&Vector::from_vec(w)).map_err(err)
    }

    fn grad(&self, w: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.grad(&Vector::from_vec(w)).map_err(err)?.as_slice().to_vec())
    }

    fn inverse_grad(&self, theta: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.inverse_grad(&Vector::from_vec(theta)).map_err(err)?.as_slice().to_vec())
    }

    /// `D_ψ(w, wp)`
    fn bregman(&self, w: Vec<f64>, wp: Vec<f64>) -> PyResult<f64> {
        self.inner.bregman(&Vector::from_vec(w), &Vector::from_vec(wp)).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Potential({})", self.inner.name())
    }
}

fn loss_by_name(kind: &str, delta: Option<f64>) -> PyResult<Loss> {
    Ok(match kind {
        "square" => Loss::Square,
        "huber" => Loss::Huber { delta: delta.unwrap_or(1.0) },
        "quartic" => Loss::Quartic,
        "log_cosh" => Loss::LogCosh,
        other => return Err(PyValueError::new_err(format!("unknown loss `{other}`"))),
    })
}

#[derive(Serialize)]
struct PyRun {
    summary: RunSummary,
    iterates: Vec<Vec<f64>>,
    samples: Vec<usize>,
    etas: Vec<f64>,
    identity_max_residual: f64,
    min_energy: f64,
    certified: bool,
    minimax_ratio: Option<f64>,
    adversary_ratio: Option<f64>,
}

/// Run SMD on a linear model `y ≈ X w` and audit the run against the
/// reference `w_ref` (the minimum-norm interpolant when omitted).
#[pyfunction]
#[pyo3(signature = (potential, x, y, w0, eta, steps, loss="square", delta=None, shuffle_seed=None, w_ref=None))]
#[allow(clippy::too_many_arguments)]
fn run<'py>(
    py: Python<'py>,
    potential: &PyPotential,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    w0: Vec<f64>,
    eta: f64,
    steps: usize,
    loss: &str,
    delta: Option<f64>,
    shuffle_seed: Option<u64>,
    w_ref: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let xm = design(x)?;
    let yv = Vector::from_vec(y);
    let data = Dataset::from_design(&xm, &yv).map_err(err)?;
    let model = Model::linear(xm.ncols());
    let loss = loss_by_name(loss, delta)?;
    let mut cfg = RunConfig::new(StepSchedule::constant(eta), Vector::from_vec(w0))
        .max_steps(steps)
        .residual_tol(0.0);
    if let Some(seed) = shuffle_seed {
        cfg = cfg.order(SampleOrder::Shuffled { seed });
    }
    let problem = Problem::new(&potential.inner, loss, &model, &data);
    let trace = problem.run(&cfg).map_err(err)?;
    let w = match w_ref {
        Some(w) => Vector::from_vec(w),
        None => min_l2_solution(&xm, &yv).map_err(err)?,
    };
    let v = consistent_noise(&problem, &trace, &w).map_err(err)?;
    let rep = telescoped_identity(&problem, &trace, &w, &v).map_err(err)?;
    let cert = problem.certify_trace(&trace, &CertifyOptions::default()).map_err(err)?;
    let (mut ratio, mut adversary) = (None, None);
    if !trace.is_empty() && trace.final_w() != trace.w0() {
        ratio = minimax_ratio(&problem, &trace, &w, &v, &cert).ok().map(|m| m.ratio);
        let adv = construct_adversary(&problem, &trace).map_err(err)?;
        adversary = minimax_ratio(&problem, &trace, &adv.w, &adv.v, &cert).ok().map(|m| m.ratio);
    }
    let out = PyRun {
        summary: RunSummary::of(&trace),
        iterates: trace.iterates.iter().map(|w| w.as_slice().to_vec()).collect(),
        samples: trace.steps.iter().map(|s| s.sample).collect(),
        etas: trace.steps.iter().map(|s| s.eta).collect(),
        identity_max_residual: rep.max_residual(),
        min_energy: rep.min_energy,
        certified: cert.is_certified(),
        minimax_ratio: ratio,
        adversary_ratio: adversary,
    };
    to_py(py, &out)
}

/// `argmin_{Xw=y} D_ψ(w, w0)` by dual Newton.
#[pyfunction]
fn bregman_project<'py>(
    py: Python<'py>,
    potential: &PyPotential,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    w0: Vec<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let r = project(
        &potential.inner,
        &design(x)?,
        &Vector::from_vec(y),
        &Vector::from_vec(w0),
        &ProjectOptions::default(),
    )
    .map_err(err)?;
    to_py(py, &r)
}

/// Run and audit a TOML experiment configuration.
#[pyfunction]
#[pyo3(signature = (config, minimax=false, out=None))]
fn audit_config<'py>(
    py: Python<'py>,
    config: &str,
    minimax: bool,
    out: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ExperimentConfig::from_toml_str(config).map_err(err)?;
    let rep = py
        .detach(|| run_and_audit(&cfg, minimax, out.as_deref()))
        .map_err(err)?;
    to_py(py, &rep)
}

/// Sparse recovery; keyword arguments override the defaults.
#[pyfunction]
#[pyo3(signature = (seed=0, n=50, m=100, k=10, eta=0.001, q=1.1, max_steps=200_000))]
#[allow(clippy::too_many_arguments)]
fn cs_demo<'py>(
    py: Python<'py>,
    seed: u64,
    n: usize,
    m: usize,
    k: usize,
    eta: f64,
    q: f64,
    max_steps: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = CsConfig {
        seed,
        n,
        m,
        k,
        eta,
        q,
        max_steps,
        ..CsConfig::default()
    };
    let rep = py.detach(|| run_cs_demo(&cfg)).map_err(err)?;
    let mut value = serde_json::to_value(&rep).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    value["success"] = rep.success().into();
    to_py(py, &value)
}

/// Randomized identity and minimax audits.
#[pyfunction]
#[pyo3(signature = (trials=100, steps=200, seed=0))]
fn fuzz<'py>(py: Python<'py>, trials: usize, steps: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let opts = FuzzOptions {
        trials,
        steps,
        seed,
        ..FuzzOptions::default()
    };
    let rep = py.detach(|| identity_fuzz(&opts));
    to_py(py, &rep)
}

/// The potential kinds accepted by `Potential`.
#[pyfunction]
fn potential_kinds() -> Vec<&'static str> {
    vec!["squared_l2", "negative_entropy", "qnorm_componentwise", "qnorm_squared", "quadratic"]
}

#[pymodule]
#[pyo3(name = "smdlab")]
fn smdlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPotential>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(bregman_project, m)?)?;
    m.add_function(wrap_pyfunction!(audit_config, m)?)?;
    m.add_function(wrap_pyfunction!(cs_demo, m)?)?;
    m.add_function(wrap_pyfunction!(fuzz, m)?)?;
    m.add_function(wrap_pyfunction!(potential_kinds, m)?)?;
    Ok(())
}
