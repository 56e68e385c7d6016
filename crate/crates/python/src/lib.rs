//! Python bindings for the DRO-BAS solver and newsvendor benchmark.

use std::collections::HashSet;
use std::fs::File;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use drobas::newsvendor::{
    aggregate, newsvendor_cost as cost, pareto_front as front, run_sweep, write_aggregate_csv,
    write_results_csv, BenchConfig, DgpSpec, Method, TruncationParams,
};
use drobas::verify::{run_all, VerifyOptions};
use drobas::{
    AmbiguitySpec, BdroInstance, CostOracle, Error, Hyper, Likelihood, ModelSpec, PosteriorState,
    Tolerances, TrueParams,
};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Input(_) | Error::Domain(_) | Error::Infeasible { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_model(name: &str, known_variance: Option<f64>, prior: Option<Vec<f64>>) -> PyResult<(ModelSpec, Hyper)> {
    let arity = |n: usize| -> PyResult<()> {
        match &prior {
            Some(p) if p.len() != n => Err(PyValueError::new_err(format!(
                "prior for {name} takes {n} values, got {}",
                p.len()
            ))),
            _ => Ok(()),
        }
    };
    match name {
        "normal-gamma" => {
            arity(4)?;
            let p = prior.unwrap_or_else(|| vec![0.0, 1.0, 1.0, 1.0]);
            Ok((
                ModelSpec::NormalGamma,
                Hyper::NormalGamma { mean: p[0], kappa: p[1], alpha: p[2], beta: p[3] },
            ))
        }
        "gauss-known-var" => {
            arity(2)?;
            let variance = known_variance
                .ok_or_else(|| PyValueError::new_err("gauss-known-var needs known_variance"))?;
            let p = prior.unwrap_or_else(|| vec![0.0, variance]);
            Ok((ModelSpec::GaussKnownVar { variance }, Hyper::Normal { mean: p[0], variance: p[1] }))
        }
        "exp-gamma" => {
            arity(2)?;
            let p = prior.unwrap_or_else(|| vec![1.0, 1.0]);
            Ok((ModelSpec::ExpGamma, Hyper::Gamma { alpha: p[0], beta: p[1] }))
        }
        other => Err(PyValueError::new_err(format!(
            "unknown model {other:?}; expected normal-gamma, gauss-known-var or exp-gamma"
        ))),
    }
}

fn likelihood_dict<'py>(py: Python<'py>, l: &Likelihood) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    match *l {
        Likelihood::Normal { mean, variance } => {
            d.set_item("mean", mean)?;
            d.set_item("variance", variance)?;
        }
        Likelihood::Exponential { rate } => d.set_item("rate", rate)?,
    }
    Ok(d)
}

fn newsvendor_oracle(h: f64, b: f64) -> CostOracle<'static> {
    CostOracle::convex(move |x, xi| cost(x, xi, h, b))
}

/// Result of a DRO-BAS solve.
#[pyclass(name = "Solution", frozen, get_all)]
struct PySolution {
    x_star: f64,
    gamma_star: f64,
    value: f64,
    iterations: usize,
    wall_time: f64,
}

#[pymethods]
impl PySolution {
    fn __repr__(&self) -> String {
        format!(
            "Solution(x_star={}, gamma_star={}, value={})",
            self.x_star, self.gamma_star, self.value
        )
    }
}

/// Result of a BDRO solve, one multiplier per posterior draw.
#[pyclass(name = "BdroSolution", frozen, get_all)]
struct PyBdroSolution {
    x_star: f64,
    gammas: Vec<f64>,
    value: f64,
    iterations: usize,
    wall_time: f64,
}

#[pymethods]
impl PyBdroSolution {
    fn __repr__(&self) -> String {
        format!("BdroSolution(x_star={}, value={}, draws={})", self.x_star, self.value, self.gammas.len())
    }
}

/// Conjugate posterior after a batch of observations.
#[pyclass(name = "Posterior", frozen)]
struct PyPosterior {
    inner: PosteriorState,
}

#[pymethods]
impl PyPosterior {
    #[new]
    #[pyo3(signature = (model = "normal-gamma", data = Vec::new(), prior = None, known_variance = None))]
    fn new(model: &str, data: Vec<f64>, prior: Option<Vec<f64>>, known_variance: Option<f64>) -> PyResult<Self> {
        let (spec, hyper) = parse_model(model, known_variance, prior)?;
        let inner = spec.update_posterior(&hyper, &data).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn model(&self) -> &'static str {
        self.inner.model.name()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn hyper<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        match self.inner.hyper {
            Hyper::Normal { mean, variance } => {
                d.set_item("mean", mean)?;
                d.set_item("variance", variance)?;
            }
            Hyper::NormalGamma { mean, kappa, alpha, beta } => {
                d.set_item("mean", mean)?;
                d.set_item("kappa", kappa)?;
                d.set_item("alpha", alpha)?;
                d.set_item("beta", beta)?;
            }
            Hyper::Gamma { alpha, beta } => {
                d.set_item("alpha", alpha)?;
                d.set_item("beta", beta)?;
            }
        }
        Ok(d)
    }

    /// Parameters of the center distribution p(ξ | θ̄ₙ).
    #[getter]
    fn theta_bar<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        likelihood_dict(py, &self.inner.theta_bar())
    }

    #[getter]
    fn gap(&self) -> f64 {
        self.inner.gap()
    }

    #[getter]
    fn epsilon_min(&self) -> f64 {
        self.inner.epsilon_min()
    }

    #[pyo3(signature = (mean = None, precision = None, rate = None))]
    fn epsilon_star(&self, mean: Option<f64>, precision: Option<f64>, rate: Option<f64>) -> PyResult<f64> {
        let truth = match (self.inner.model, mean, precision, rate) {
            (ModelSpec::GaussKnownVar { .. }, Some(mean), None, None) => TrueParams::Mean { mean },
            (ModelSpec::NormalGamma, Some(mean), Some(precision), None) => {
                TrueParams::MeanPrecision { mean, precision }
            }
            (ModelSpec::ExpGamma, None, None, Some(rate)) => TrueParams::Rate { rate },
            _ => {
                return Err(PyValueError::new_err(
                    "pass mean (gauss-known-var), mean and precision (normal-gamma) or rate (exp-gamma)",
                ))
            }
        };
        self.inner.epsilon_star(&truth).map_err(py_err)
    }

    fn epsilon_star_plugin(&self, data: Vec<f64>) -> PyResult<f64> {
        self.inner.epsilon_star_plugin(&data).map_err(py_err)
    }

    #[pyo3(signature = (count, seed = 0))]
    fn sample_center(&self, count: usize, seed: u64) -> Vec<f64> {
        self.inner.sample_center(count, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[pyo3(signature = (count, seed = 0))]
    fn sample_params<'py>(&self, py: Python<'py>, count: usize, seed: u64) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .sample_params(count, &mut ChaCha8Rng::seed_from_u64(seed))
            .iter()
            .map(|l| likelihood_dict(py, l))
            .collect()
    }

    /// DRO-BAS newsvendor solve with `budget` samples from the center distribution.
    #[pyo3(signature = (epsilon, budget = 25, seed = 0, h = 1.0, b = 2.0, x_min = 0.0, x_max = 50.0))]
    #[allow(clippy::too_many_arguments)]
    fn solve(
        &self,
        epsilon: f64,
        budget: usize,
        seed: u64,
        h: f64,
        b: f64,
        x_min: f64,
        x_max: f64,
    ) -> PyResult<PySolution> {
        let samples = self.inner.sample_center(budget, &mut ChaCha8Rng::seed_from_u64(seed));
        solve_samples(&samples, epsilon, self.inner.gap(), h, b, x_min, x_max)
    }

    /// BDRO newsvendor solve with `n_theta` posterior draws of `n_xi` samples each.
    #[pyo3(signature = (epsilon, n_theta = 5, n_xi = 5, seed = 0, h = 1.0, b = 2.0, x_min = 0.0, x_max = 50.0))]
    #[allow(clippy::too_many_arguments)]
    fn solve_bdro(
        &self,
        epsilon: f64,
        n_theta: usize,
        n_xi: usize,
        seed: u64,
        h: f64,
        b: f64,
        x_min: f64,
        x_max: f64,
    ) -> PyResult<PyBdroSolution> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta_samples = self.inner.sample_params(n_theta, &mut rng);
        let xi_samples = theta_samples.iter().map(|t| t.sample(n_xi, &mut rng)).collect();
        let instance = BdroInstance {
            theta_samples,
            xi_samples,
            epsilon,
            x_bounds: (x_min, x_max),
        };
        let s = drobas::solve_bdro(&instance, &newsvendor_oracle(h, b), Tolerances::default()).map_err(py_err)?;
        Ok(PyBdroSolution {
            x_star: s.x_star,
            gammas: s.gammas,
            value: s.value,
            iterations: s.iterations,
            wall_time: s.wall_time,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Posterior(model={:?}, n={}, epsilon_min={})",
            self.inner.model.name(),
            self.inner.n,
            self.inner.epsilon_min()
        )
    }
}

fn solve_samples(samples: &[f64], epsilon: f64, gap: f64, h: f64, b: f64, x_min: f64, x_max: f64) -> PyResult<PySolution> {
    let amb = AmbiguitySpec::user(epsilon, gap).map_err(py_err)?;
    let s = drobas::solve_dro_bas(&newsvendor_oracle(h, b), samples, &amb, (x_min, x_max), Tolerances::default())
        .map_err(py_err)?;
    Ok(PySolution {
        x_star: s.x_star,
        gamma_star: s.gamma_star,
        value: s.value,
        iterations: s.iterations,
        wall_time: s.wall_time,
    })
}

#[pyfunction]
fn digamma(z: f64) -> PyResult<f64> {
    drobas::digamma(z).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (x, xi, h = 1.0, b = 2.0))]
fn newsvendor_cost(x: f64, xi: f64, h: f64, b: f64) -> f64 {
    cost(x, xi, h, b)
}

/// γ(ε − G) + γ ln mean exp(f/γ).
#[pyfunction]
#[pyo3(signature = (fvals, gamma, epsilon, gap = 0.0))]
fn dual_objective(fvals: Vec<f64>, gamma: f64, epsilon: f64, gap: f64) -> PyResult<f64> {
    let amb = AmbiguitySpec::user(epsilon, gap).map_err(py_err)?;
    drobas::dual_objective(&fvals, gamma, &amb).map_err(py_err)
}

/// Returns (gamma, value); gamma is 0 or inf on the limit branches.
#[pyfunction]
#[pyo3(signature = (fvals, epsilon, gap = 0.0, tol = 1e-9))]
fn minimize_gamma(fvals: Vec<f64>, epsilon: f64, gap: f64, tol: f64) -> PyResult<(f64, f64)> {
    let amb = AmbiguitySpec::user(epsilon, gap).map_err(py_err)?;
    let r = drobas::minimize_gamma(&fvals, &amb, tol).map_err(py_err)?;
    Ok((r.gamma, r.value))
}

/// DRO-BAS newsvendor solve on caller-supplied center samples.
#[pyfunction]
#[pyo3(signature = (samples, epsilon, gap = 0.0, h = 1.0, b = 2.0, x_min = 0.0, x_max = 50.0))]
fn solve_newsvendor(samples: Vec<f64>, epsilon: f64, gap: f64, h: f64, b: f64, x_min: f64, x_max: f64) -> PyResult<PySolution> {
    solve_samples(&samples, epsilon, gap, h, b, x_min, x_max)
}

#[pyfunction]
fn pareto_front(points: Vec<(f64, f64)>) -> Vec<usize> {
    front(&points)
}

/// Runs the benchmark and returns (rows, aggregate) as lists of dicts.
/// With `out_dir`, also writes results.csv and aggregate.csv there.
#[pyfunction]
#[pyo3(signature = (
    seeds = 50, budgets = vec![25], epsilon_grid = None, method = "both", dgp = "gaussian",
    mu_star = None, sigma2_star = None, h = 1.0, b = 2.0, seed = 0, workers = 0, out_dir = None
))]
#[allow(clippy::too_many_arguments)]
fn sweep<'py>(
    py: Python<'py>,
    seeds: usize,
    budgets: Vec<usize>,
    epsilon_grid: Option<Vec<f64>>,
    method: &str,
    dgp: &str,
    mu_star: Option<f64>,
    sigma2_star: Option<f64>,
    h: f64,
    b: f64,
    seed: u64,
    workers: usize,
    out_dir: Option<PathBuf>,
) -> PyResult<(Vec<Bound<'py, PyDict>>, Vec<Bound<'py, PyDict>>)> {
    let d = BenchConfig::default();
    let config = BenchConfig {
        seeds,
        budgets,
        epsilon_grid: epsilon_grid.unwrap_or(d.epsilon_grid.clone()),
        h,
        b,
        master_seed: seed,
        workers,
        ..d
    };
    let methods = match method {
        "both" => vec![Method::DroBas, Method::Bdro],
        m => vec![m.parse::<Method>().map_err(py_err)?],
    };
    let dgp = match dgp {
        "gaussian" => DgpSpec::gaussian(mu_star.unwrap_or(25.0), sigma2_star.unwrap_or(100.0)),
        "truncated" => DgpSpec::truncated(
            mu_star.unwrap_or(10.0),
            sigma2_star.unwrap_or(100.0),
            0.0,
            f64::INFINITY,
            TruncationParams::Underlying,
        ),
        other => return Err(PyValueError::new_err(format!("unknown dgp {other:?}"))),
    };
    let result = run_sweep(&config, &dgp, &methods, &HashSet::new()).map_err(py_err)?;
    let agg = aggregate(&result.rows);
    if let Some(dir) = out_dir {
        let io = |e: std::io::Error| PyRuntimeError::new_err(e.to_string());
        std::fs::create_dir_all(&dir).map_err(io)?;
        write_results_csv(File::create(dir.join("results.csv")).map_err(io)?, &result.rows).map_err(py_err)?;
        write_aggregate_csv(File::create(dir.join("aggregate.csv")).map_err(io)?, &agg).map_err(py_err)?;
    }
    let rows = result
        .rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("method", r.method.as_str())?;
            d.set_item("seed", r.seed)?;
            d.set_item("epsilon", r.epsilon)?;
            d.set_item("N", r.n_model)?;
            d.set_item("x_star", r.x_star)?;
            d.set_item("oos_mean", r.oos_mean)?;
            d.set_item("oos_var", r.oos_var)?;
            d.set_item("solve_seconds", r.solve_seconds)?;
            d.set_item("status", format!("{:?}", r.status).to_lowercase())?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let agg = agg
        .iter()
        .map(|a| {
            let d = PyDict::new(py);
            d.set_item("method", a.method.as_str())?;
            d.set_item("epsilon", a.epsilon)?;
            d.set_item("N", a.n_model)?;
            d.set_item("m", a.m)?;
            d.set_item("v", a.v)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok((rows, agg))
}

/// Runs the verification suites; returns (name, passed, worst, threshold) tuples.
#[pyfunction]
#[pyo3(signature = (quick = true, seed = 0))]
fn verify(quick: bool, seed: u64) -> PyResult<Vec<(String, bool, f64, f64)>> {
    let opts = VerifyOptions { quick, seed, fault: None };
    Ok(run_all(&opts)
        .map_err(py_err)?
        .into_iter()
        .map(|r| (r.name, r.passed, r.worst, r.threshold))
        .collect())
}

#[pymodule]
fn pydrobas(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPosterior>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PyBdroSolution>()?;
    m.add_function(wrap_pyfunction!(digamma, m)?)?;
    m.add_function(wrap_pyfunction!(newsvendor_cost, m)?)?;
    m.add_function(wrap_pyfunction!(dual_objective, m)?)?;
    m.add_function(wrap_pyfunction!(minimize_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(solve_newsvendor, m)?)?;
    m.add_function(wrap_pyfunction!(pareto_front, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
