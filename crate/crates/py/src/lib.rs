use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use mixeq::instances::Instance;
use mixeq::io::NetworkFile;
use mixeq::{braess, EquilibriumResult, Error, SolverConfig};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::NonConvergence(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Serializes through JSON into plain Python dicts and lists.
fn to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Network with its path set and incidence matrix.
#[pyclass(frozen, module = "mixeq_py")]
struct Network {
    inst: Instance,
}

#[pymethods]
impl Network {
    /// Parse a network JSON document. Declared paths are used unless
    /// `enumerated_paths` is set.
    #[staticmethod]
    #[pyo3(signature = (text, enumerated_paths = false))]
    fn from_json(text: &str, enumerated_paths: bool) -> PyResult<Self> {
        let (network, paths) = NetworkFile::from_json(text).and_then(|f| f.build()).map_err(to_py_err)?;
        let inst = Instance::new(network, if enumerated_paths { None } else { paths }).map_err(to_py_err)?;
        Ok(Network { inst })
    }

    /// Built-in Braess network with link 6 set to `k6`, `b6`.
    #[staticmethod]
    #[pyo3(signature = (k6 = braess::K[5], b6 = braess::B[5], enumerated_paths = false))]
    fn braess(k6: f64, b6: f64, enumerated_paths: bool) -> PyResult<Self> {
        let net = braess::network(k6, b6).map_err(to_py_err)?;
        let paths = (!enumerated_paths).then(|| braess::declared_paths(&net));
        Ok(Network { inst: Instance::new(net, paths).map_err(to_py_err)? })
    }

    fn to_json(&self) -> String {
        NetworkFile::from_network(&self.inst.network, Some(&self.inst.paths)).to_json()
    }

    #[getter]
    fn paths(&self) -> Vec<Vec<String>> {
        self.inst.paths.paths().to_vec()
    }

    #[getter]
    fn link_ids(&self) -> Vec<String> {
        self.inst.network.links().iter().map(|l| l.id.clone()).collect()
    }

    #[getter]
    fn is_linear(&self) -> bool {
        self.inst.network.is_linear()
    }

    /// Link–path incidence matrix as nested lists (rows are links).
    fn incidence(&self) -> Vec<Vec<f64>> {
        let m = self.inst.delta.matrix();
        (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
    }

    fn __repr__(&self) -> String {
        format!("Network(links={}, paths={})", self.inst.delta.num_links(), self.inst.delta.num_paths())
    }
}

/// Mixed equilibrium returned by `solve`.
#[pyclass(frozen, module = "mixeq_py")]
struct Equilibrium {
    res: EquilibriumResult,
}

#[pymethods]
impl Equilibrium {
    #[getter]
    fn alpha(&self) -> f64 {
        self.res.flow.alpha
    }
    #[getter]
    fn social_cost(&self) -> f64 {
        self.res.social
    }
    #[getter]
    fn lambda_h(&self) -> f64 {
        self.res.lambda_h
    }
    #[getter]
    fn lambda_a(&self) -> f64 {
        self.res.lambda_a
    }
    #[getter]
    fn gap(&self) -> f64 {
        self.res.gap
    }
    #[getter]
    fn relative_gap(&self) -> f64 {
        self.res.relative_gap
    }
    #[getter]
    fn converged(&self) -> bool {
        self.res.converged
    }
    #[getter]
    fn iterations(&self) -> usize {
        self.res.iterations
    }
    #[getter]
    fn x_h(&self) -> Vec<f64> {
        self.res.flow.x_h.clone()
    }
    #[getter]
    fn x_a(&self) -> Vec<f64> {
        self.res.flow.x_a.clone()
    }
    /// Aggregated path flows.
    #[getter]
    fn x(&self) -> Vec<f64> {
        self.res.flow.x()
    }
    #[getter]
    fn link_flows(&self) -> Vec<f64> {
        self.res.flow.f.clone()
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.res)
    }

    fn __repr__(&self) -> String {
        format!(
            "Equilibrium(alpha={:?}, social_cost={:?}, converged={})",
            self.res.flow.alpha, self.res.social, self.res.converged
        )
    }
}

fn config(alpha: f64, tol: f64, max_outer: usize) -> SolverConfig {
    SolverConfig { max_outer, ..SolverConfig::new(alpha).with_tolerance(tol) }
}

/// Mixed equilibrium by Gauss–Seidel relaxation.
#[pyfunction]
#[pyo3(signature = (network, alpha, tol = 1e-8, max_outer = 1000))]
fn solve(network: &Network, alpha: f64, tol: f64, max_outer: usize) -> PyResult<Equilibrium> {
    let n = &network.inst;
    let res = mixeq::solve_mixed(&n.network, &n.delta, &config(alpha, tol, max_outer)).map_err(to_py_err)?;
    Ok(Equilibrium { res })
}

/// Exact equilibrium of a linear-cost network, as a dict.
#[pyfunction]
fn exact_mixed(py: Python<'_>, network: &Network, alpha: f64) -> PyResult<Py<PyAny>> {
    let n = &network.inst;
    let e = mixeq::exact_mixed(&n.network, &n.delta, alpha).map_err(to_py_err)?;
    to_py(py, &e)
}

/// Social cost `Σ f·t(f)` of aggregated path flows.
#[pyfunction]
fn social_cost(network: &Network, x: Vec<f64>) -> PyResult<f64> {
    let n = &network.inst;
    if x.len() != n.delta.num_paths() {
        return Err(to_py_err(Error::DimensionMismatch { expected: n.delta.num_paths(), actual: x.len() }));
    }
    mixeq::social_cost(&n.network, &n.delta.link_flows(&x)).map_err(to_py_err)
}

/// All instance-level checks at `alpha`, as a dict.
#[pyfunction]
#[pyo3(signature = (network, alpha, tol = 1e-8))]
fn analyze(py: Python<'_>, network: &Network, alpha: f64, tol: f64) -> PyResult<Py<PyAny>> {
    let n = &network.inst;
    let v = mixeq::analyze(&n.network, &n.delta, &config(alpha, tol, 1000)).map_err(to_py_err)?;
    to_py(py, &v)
}

/// Deterioration test at the exact baseline equilibrium, as a dict.
#[pyfunction]
fn deterioration_report(py: Python<'_>, network: &Network) -> PyResult<Py<PyAny>> {
    let n = &network.inst;
    let r = mixeq::exact_baseline(&n.network, &n.delta)
        .and_then(|b| mixeq::deterioration_report(&n.network, &n.delta, &b))
        .map_err(to_py_err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (network, alpha, tol = 1e-8))]
fn compare_centralized(py: Python<'_>, network: &Network, alpha: f64, tol: f64) -> PyResult<Py<PyAny>> {
    let n = &network.inst;
    let c = mixeq::compare_centralized(&n.network, &n.delta, alpha, &config(alpha, tol, 1000)).map_err(to_py_err)?;
    to_py(py, &c)
}

/// Social cost over an evenly spaced α range, as a list of row dicts.
#[pyfunction]
#[pyo3(signature = (network, alpha_min = 0.0, alpha_max = 1.0, steps = 11, tol = 1e-8))]
fn sweep(
    py: Python<'_>,
    network: &Network,
    alpha_min: f64,
    alpha_max: f64,
    steps: usize,
    tol: f64,
) -> PyResult<Py<PyAny>> {
    let n = &network.inst;
    let alphas = mixeq::sweep::alpha_grid(alpha_min, alpha_max, steps).map_err(to_py_err)?;
    let s = mixeq::sweep::alpha_sweep(&n.network, &n.delta, &alphas, &config(0.0, tol, 1000)).map_err(to_py_err)?;
    to_py(py, &s.rows)
}

#[pymodule]
fn mixeq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Network>()?;
    m.add_class::<Equilibrium>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(exact_mixed, m)?)?;
    m.add_function(wrap_pyfunction!(social_cost, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(deterioration_report, m)?)?;
    m.add_function(wrap_pyfunction!(compare_centralized, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
