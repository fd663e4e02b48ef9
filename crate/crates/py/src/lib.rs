//! Python bindings: graphs, weight systems, environments, simplex integrals
//! and the experiment drivers.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use hyperwalk::chain;
use hyperwalk::config::RunConfig;
use hyperwalk::environment::{sample_environment as sample_env, Environment as CoreEnvironment, LatticeWeights, WeightSystem};
use hyperwalk::experiments;
use hyperwalk::flows;
use hyperwalk::graph::Model as CoreModel;
use hyperwalk::hypergeom::{self, HypergeomParams};
use hyperwalk::lattice::{build_box_graph, build_torus, BoxGraphSpec, TorusSpec};
use hyperwalk::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Params(_) | Error::Graph(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A directed graph with its arc graph.
#[pyclass(name = "Model", module = "pyhyperwalk", frozen)]
struct Model {
    inner: CoreModel,
}

#[pymethods]
impl Model {
    /// General graph from `(tail, head)` pairs; edge ids follow list order.
    #[staticmethod]
    fn from_edges(n_vertices: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        Ok(Self { inner: CoreModel::from_edges(n_vertices, &edges).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (d, n, root_direction = 0))]
    fn torus(d: usize, n: usize, root_direction: usize) -> PyResult<Self> {
        Ok(Self { inner: build_torus(TorusSpec { d, n, root_direction }).map_err(err)? })
    }

    /// Box `{|x|_inf <= n/2}` with boundary vertex and special edge.
    #[staticmethod]
    #[pyo3(signature = (d, n, root_direction = 0, special_alpha = 1.0))]
    fn box_graph(d: usize, n: usize, root_direction: usize, special_alpha: f64) -> PyResult<Self> {
        Ok(Self { inner: build_box_graph(BoxGraphSpec { d, n, root_direction, special_alpha }).map_err(err)? })
    }

    #[getter]
    fn n_vertices(&self) -> usize {
        self.inner.n_vertices()
    }

    #[getter]
    fn n_edges(&self) -> usize {
        self.inner.n_edges()
    }

    #[getter]
    fn n_arcs(&self) -> usize {
        self.inner.n_arcs()
    }

    /// Lattice root edge, or `None` for general graphs.
    #[getter]
    fn root_edge(&self) -> Option<usize> {
        self.inner.lattice.as_ref().map(|l| l.root_edge)
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.graph.edges().collect()
    }

    /// Arcs as `(edge, next edge)` pairs.
    fn arcs(&self) -> Vec<(usize, usize)> {
        (0..self.inner.n_arcs()).map(|a| (self.inner.arcs.src(a), self.inner.arcs.dst(a))).collect()
    }

    fn is_strongly_connected(&self) -> bool {
        self.inner.graph.is_strongly_connected()
    }

    fn __repr__(&self) -> String {
        format!("Model(vertices={}, edges={}, arcs={})", self.n_vertices(), self.n_edges(), self.n_arcs())
    }
}

/// Edge weights `alpha` and arc weights `Z` on a model.
#[pyclass(name = "Weights", module = "pyhyperwalk", frozen)]
struct Weights {
    inner: WeightSystem,
}

#[pymethods]
impl Weights {
    /// `z` defaults to all ones (the Dirichlet case).
    #[new]
    #[pyo3(signature = (model, alpha, z = None))]
    fn new(model: &Model, alpha: Vec<f64>, z: Option<Vec<f64>>) -> PyResult<Self> {
        let z = z.unwrap_or_else(|| vec![1.0; model.inner.n_arcs()]);
        Ok(Self { inner: WeightSystem::new(&model.inner, alpha, z).map_err(err)? })
    }

    /// Translation-invariant weights: `2d` direction weights and an optional
    /// `2d x 2d` direction matrix.
    #[staticmethod]
    #[pyo3(signature = (model, alpha, z = None))]
    fn lattice(model: &Model, alpha: Vec<f64>, z: Option<Vec<Vec<f64>>>) -> PyResult<Self> {
        let lw = LatticeWeights::new(alpha, z).map_err(err)?;
        Ok(Self { inner: lw.weight_system(&model.inner).map_err(err)? })
    }

    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.inner.alpha.clone()
    }

    #[getter]
    fn z(&self) -> Vec<f64> {
        self.inner.z.clone()
    }

    /// Per-vertex divergence of `alpha`.
    fn div_alpha(&self, model: &Model) -> Vec<f64> {
        self.inner.div_alpha(&model.inner)
    }
}

/// One sampled environment: simplex variables `u` per edge and the kernel
/// `omega` per arc.
#[pyclass(name = "Environment", module = "pyhyperwalk", frozen)]
struct Environment {
    inner: CoreEnvironment,
}

#[pymethods]
impl Environment {
    #[getter]
    fn u(&self) -> Vec<f64> {
        self.inner.u.clone()
    }

    #[getter]
    fn omega(&self) -> Vec<f64> {
        self.inner.omega.clone()
    }

    fn row_sum_error(&self, model: &Model) -> f64 {
        self.inner.row_sum_error(&model.inner)
    }
}

#[pyfunction]
fn sample_environment(model: &Model, weights: &Weights, seed: u64) -> PyResult<Environment> {
    Ok(Environment { inner: sample_env(&model.inner, &weights.inner, seed).map_err(err)? })
}

/// `Phi(alpha, beta, Z)` by tensor quadrature.
#[pyfunction]
#[pyo3(signature = (alpha, beta, z, tol = 1e-10))]
fn phi(alpha: Vec<f64>, beta: Vec<f64>, z: Vec<Vec<f64>>, tol: f64) -> PyResult<f64> {
    let p = HypergeomParams::new(alpha, beta, z).map_err(err)?;
    hypergeom::phi_quadrature(&p, tol).map_err(err)
}

/// `(lhs, rhs, relative residual)` of the duality between `(alpha, beta, Z)`
/// and `(beta, alpha, Z^t)`.
#[pyfunction]
#[pyo3(signature = (alpha, beta, z, tol = 1e-10))]
fn duality_residual(alpha: Vec<f64>, beta: Vec<f64>, z: Vec<Vec<f64>>, tol: f64) -> PyResult<(f64, f64, f64)> {
    let p = HypergeomParams::new(alpha, beta, z).map_err(err)?;
    let r = hypergeom::duality_residual(&p, tol).map_err(err)?;
    Ok((r.lhs, r.rhs, r.relative))
}

/// Stationary law of the chain on edges.
#[pyfunction]
fn stationary(model: &Model, env: &Environment) -> PyResult<Vec<f64>> {
    Ok(chain::stationary(&model.inner.arcs, &env.inner.omega).map_err(err)?.pi)
}

/// Green function at the root edge of a box, killed on leaving the box.
#[pyfunction]
fn green_function(model: &Model, env: &Environment) -> PyResult<f64> {
    chain::green_function_box(&model.inner, &env.inner.omega).map_err(err)
}

/// Probability of reaching the special edge before returning to the root.
#[pyfunction]
fn escape_probability(model: &Model, env: &Environment) -> PyResult<f64> {
    chain::escape_probability_box(&model.inner, &env.inner.omega).map_err(err)
}

/// `(kappa, kappa_tilde)` of translation-invariant direction weights.
#[pyfunction]
#[pyo3(signature = (alpha, z = None))]
fn kappa(alpha: Vec<f64>, z: Option<Vec<Vec<f64>>>) -> PyResult<(f64, f64)> {
    let lw = LatticeWeights::new(alpha, z).map_err(err)?;
    Ok((flows::kappa(&lw), flows::kappa_tilde(&lw)))
}

fn parse(config_toml: &str) -> PyResult<RunConfig> {
    RunConfig::from_toml_str(config_toml).map_err(err)
}

/// Runs an experiment (`duality`, `reversal`, `green-moment`,
/// `invariant-measure`, `trap-times`, `flow-build`) and returns its JSON report.
#[pyfunction]
fn run_experiment(py: Python<'_>, name: &str, config_toml: &str) -> PyResult<String> {
    let cfg = parse(config_toml)?;
    let report = py.detach(|| experiments::run_by_name(name, &cfg)).map_err(err)?;
    Ok(report.to_json())
}

/// JSON description of the configured graph.
#[pyfunction]
fn describe(config_toml: &str) -> PyResult<String> {
    let d = experiments::describe(&parse(config_toml)?).map_err(err)?;
    serde_json::to_string_pretty(&d).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn pyhyperwalk(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Model>()?;
    m.add_class::<Weights>()?;
    m.add_class::<Environment>()?;
    m.add_function(wrap_pyfunction!(sample_environment, m)?)?;
    m.add_function(wrap_pyfunction!(phi, m)?)?;
    m.add_function(wrap_pyfunction!(duality_residual, m)?)?;
    m.add_function(wrap_pyfunction!(stationary, m)?)?;
    m.add_function(wrap_pyfunction!(green_function, m)?)?;
    m.add_function(wrap_pyfunction!(escape_probability, m)?)?;
    m.add_function(wrap_pyfunction!(kappa, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(describe, m)?)?;
    Ok(())
}
