use hvi::bounds::{self, BoundError, Estimate};
use hvi::experiments::{csv_string, run, ExperimentConfig, ExperimentError};
use hvi::models::{make_discrete_hvm, DiscreteHvm, DiscreteTau, HierarchicalModel};
use hvi::oracle::{self, BoundKind, OracleError};
use hvi::rng::RngStream;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn bound_err(e: BoundError) -> PyErr {
    value_err(e)
}

fn oracle_err(e: OracleError) -> PyErr {
    value_err(e)
}

fn experiment_err(e: ExperimentError) -> PyErr {
    match e {
        ExperimentError::Config(_) => value_err(e),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Finite hierarchical model `q(z, ψ) = q(ψ) q(z | ψ)`.
#[pyclass(name = "DiscreteHvm", module = "hvi_py", frozen)]
struct PyDiscreteHvm(DiscreteHvm);

#[pymethods]
impl PyDiscreteHvm {
    #[new]
    fn new(psi_probs: Vec<f64>, z_given_psi: Vec<Vec<f64>>) -> PyResult<Self> {
        make_discrete_hvm(psi_probs, z_given_psi).map(Self).map_err(value_err)
    }

    #[getter]
    fn psi_states(&self) -> usize {
        self.0.psi_states()
    }

    #[getter]
    fn z_states(&self) -> usize {
        self.0.z_states()
    }

    fn log_marginal(&self, z: usize) -> PyResult<f64> {
        self.check_z(z)?;
        self.0
            .exact_log_marginal(&[z as f64])
            .ok_or_else(|| value_err("no exact marginal"))
    }

    fn posterior(&self, z: usize) -> PyResult<Vec<f64>> {
        self.check_z(z)?;
        Ok(self.0.posterior(z))
    }

    fn __repr__(&self) -> String {
        format!("DiscreteHvm(psi_states={}, z_states={})", self.0.psi_states(), self.0.z_states())
    }
}

impl PyDiscreteHvm {
    fn check_z(&self, z: usize) -> PyResult<()> {
        if z >= self.0.z_states() {
            return Err(value_err(format!("z = {z} outside 0..{}", self.0.z_states())));
        }
        Ok(())
    }
}

/// Table `τ(ψ | z)`, one row per state of `z`.
#[pyclass(name = "DiscreteTau", module = "hvi_py", frozen)]
struct PyDiscreteTau(DiscreteTau);

#[pymethods]
impl PyDiscreteTau {
    #[new]
    fn new(table: Vec<Vec<f64>>) -> PyResult<Self> {
        DiscreteTau::new(table).map(Self).map_err(value_err)
    }

    /// `τ(ψ | z) = q(ψ)`, the prior.
    #[staticmethod]
    fn from_prior(model: &PyDiscreteHvm) -> Self {
        Self(DiscreteTau::from_prior(&model.0))
    }

    /// `τ(ψ | z) = q(ψ | z)`, the exact inverse.
    #[staticmethod]
    fn posterior(model: &PyDiscreteHvm) -> Self {
        Self(DiscreteTau::posterior(&model.0))
    }

    fn probs(&self, z: usize) -> Vec<f64> {
        self.0.probs(z).to_vec()
    }
}

/// A Monte Carlo bound value with its log-weights.
#[pyclass(name = "Estimate", module = "hvi_py", frozen, get_all)]
struct PyEstimate {
    value: f64,
    log_weights: Vec<f64>,
    ess: f64,
    degenerate: bool,
    density_evals: usize,
}

#[pymethods]
impl PyEstimate {
    fn __repr__(&self) -> String {
        format!("Estimate(value={}, ess={})", self.value, self.ess)
    }
}

impl From<Estimate> for PyEstimate {
    fn from(e: Estimate) -> Self {
        Self {
            value: e.value,
            log_weights: e.log_weights,
            ess: e.ess,
            degenerate: e.degenerate,
            density_evals: e.density_evals,
        }
    }
}

fn kind(name: &str, order: usize) -> PyResult<BoundKind> {
    match name {
        "upper" => Ok(BoundKind::Upper),
        "lower" => Ok(BoundKind::Lower),
        "jackknife" => Ok(BoundKind::Jackknife(order)),
        other => Err(value_err(format!("unknown bound `{other}` (upper, lower or jackknife)"))),
    }
}

/// `log (1/n) Σ exp(v_i)`.
#[pyfunction]
fn log_mean_exp(values: Vec<f64>) -> f64 {
    bounds::log_mean_exp(&values)
}

/// Jackknife coefficient `c(K, J, j)`.
#[pyfunction]
fn sharot_coeff(k: usize, order: usize, j: usize) -> PyResult<f64> {
    bounds::sharot_coeff(k, order, j).map_err(bound_err)
}

/// One draw of `U_K`, `L_K` or the order-`order` jackknife at a fixed `z`.
#[pyfunction]
#[pyo3(signature = (model, tau, z, k, bound = "upper", order = 1, seed = 0))]
fn sample_bound(
    model: &PyDiscreteHvm,
    tau: &PyDiscreteTau,
    z: usize,
    k: usize,
    bound: &str,
    order: usize,
    seed: u64,
) -> PyResult<PyEstimate> {
    model.check_z(z)?;
    let zv = [z as f64];
    let mut rng = RngStream::new(seed);
    let est = match kind(bound, order)? {
        BoundKind::Upper => bounds::upper_bound_u(&model.0, &tau.0, &zv, k, &mut rng),
        BoundKind::Lower => bounds::lower_bound_l(&model.0, &tau.0, &zv, k, &mut rng),
        BoundKind::Jackknife(order) => bounds::jackknife_u(&model.0, &tau.0, &zv, k, order, &mut rng),
    };
    est.map(PyEstimate::from).map_err(bound_err)
}

/// Exact expectation of a bound by enumerating every draw.
#[pyfunction]
#[pyo3(signature = (model, tau, z, k, bound = "upper", order = 1))]
fn exact_expected_bound(
    model: &PyDiscreteHvm,
    tau: &PyDiscreteTau,
    z: usize,
    k: usize,
    bound: &str,
    order: usize,
) -> PyResult<f64> {
    model.check_z(z)?;
    oracle::exact_expected_bound(&model.0, &tau.0, z, k, kind(bound, order)?).map_err(oracle_err)
}

/// Runs an experiment from `key = value` overrides and returns its CSV.
#[pyfunction]
#[pyo3(signature = (experiment, overrides = Vec::new(), timing = false))]
fn run_experiment(py: Python<'_>, experiment: &str, overrides: Vec<(String, String)>, timing: bool) -> PyResult<String> {
    let mut pairs = vec![("experiment".to_string(), experiment.to_string())];
    pairs.extend(overrides);
    let cfg = ExperimentConfig::from_sources(None, &pairs).map_err(experiment_err)?;
    let records = py.detach(|| run(&cfg)).map_err(experiment_err)?;
    Ok(csv_string(&records, timing))
}

#[pymodule]
fn hvi_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDiscreteHvm>()?;
    m.add_class::<PyDiscreteTau>()?;
    m.add_class::<PyEstimate>()?;
    m.add_function(wrap_pyfunction!(log_mean_exp, m)?)?;
    m.add_function(wrap_pyfunction!(sharot_coeff, m)?)?;
    m.add_function(wrap_pyfunction!(sample_bound, m)?)?;
    m.add_function(wrap_pyfunction!(exact_expected_bound, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
