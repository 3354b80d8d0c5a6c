//! Python bindings: measures, transport networks, quantizers and the solvers between them.

use branchquant as bq;
use branchquant::{
    Atom, DiscreteMeasure, GriddedDensity, NetworkDump, Point, QuantizerConfig, QuantizerDump, SolverConfig,
    TransportNetwork,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: bq::Error) -> PyErr {
    PyValueError::new_err(format!("[{}] {e}", e.code()))
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(format!("[E_PARSE] {e}"))
}

fn point(coords: &[f64]) -> PyResult<Point> {
    if coords.is_empty() || coords.len() > 3 {
        return Err(PyValueError::new_err("[E_INVALID] points need 1 to 3 coordinates"));
    }
    Ok(Point::new(coords))
}

fn solver_config(config: Option<&str>, seed: Option<u64>) -> PyResult<SolverConfig> {
    let mut cfg: SolverConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(json_err)?,
        None => SolverConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn quantizer_config(config: Option<&str>, seed: Option<u64>) -> PyResult<QuantizerConfig> {
    let mut cfg: QuantizerConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(json_err)?,
        None => QuantizerConfig::default(),
    };
    if let Some(s) = seed {
        cfg.solver.seed = s;
    }
    Ok(cfg)
}

/// A finite weighted point set.
#[pyclass(name = "Measure", module = "branchquant_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyMeasure {
    inner: DiscreteMeasure,
}

#[pymethods]
impl PyMeasure {
    #[new]
    fn new(points: Vec<Vec<f64>>, masses: Vec<f64>) -> PyResult<Self> {
        if points.len() != masses.len() {
            return Err(PyValueError::new_err("[E_INVALID] points and masses differ in length"));
        }
        let dim = points.first().map_or(2, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(PyValueError::new_err("[E_INVALID] all points need the same dimension"));
        }
        let atoms = points.iter().zip(&masses).map(|(p, &m)| Ok(Atom { x: point(p)?, m })).collect::<PyResult<Vec<_>>>()?;
        Ok(PyMeasure { inner: DiscreteMeasure::new(dim, atoms).map_err(err)? })
    }

    /// Cell-center discretization of a gridded density, e.g.
    /// `{"box": {"lo": [0, 0], "hi": [1, 1]}, "density": {"kind": "uniform"}, "resolution": 16}`.
    #[staticmethod]
    fn from_grid(spec: &str) -> PyResult<Self> {
        let g: GriddedDensity = serde_json::from_str(spec).map_err(json_err)?;
        Ok(PyMeasure { inner: g.discretize().map_err(err)? })
    }

    /// Parses the `{dimension, atoms: [{x, m}]}` document.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let doc = serde_json::from_str(text).map_err(json_err)?;
        Ok(PyMeasure { inner: DiscreteMeasure::from_document(&doc).map_err(err)? })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner.to_document()).expect("serializable")
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn total_mass(&self) -> f64 {
        self.inner.total_mass()
    }

    #[getter]
    fn points(&self) -> Vec<Vec<f64>> {
        self.inner.atoms().iter().map(|a| a.x.coords(self.inner.dim()).to_vec()).collect()
    }

    #[getter]
    fn masses(&self) -> Vec<f64> {
        self.inner.atoms().iter().map(|a| a.m).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Measure(dim={}, atoms={}, mass={})", self.inner.dim(), self.inner.len(), self.inner.total_mass())
    }
}

/// A transport forest with its flows and α-mass.
#[pyclass(name = "Network", module = "branchquant_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyNetwork {
    inner: TransportNetwork,
}

#[pymethods]
impl PyNetwork {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let dump: NetworkDump = serde_json::from_str(text).map_err(json_err)?;
        Ok(PyNetwork { inner: dump.to_network().map_err(err)? })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&NetworkDump::from_network(&self.inner)).expect("serializable")
    }

    fn svg(&self) -> String {
        bq::render::network_svg(&self.inner)
    }

    #[getter]
    fn cost(&self) -> f64 {
        self.inner.cost()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }

    #[getter]
    fn positions(&self) -> Vec<Vec<f64>> {
        self.inner.positions().iter().map(|p| p.coords(self.inner.dim()).to_vec()).collect()
    }

    /// Node kinds: "source", "sink" or "steiner".
    #[getter]
    fn kinds(&self) -> Vec<&'static str> {
        self.inner
            .topology()
            .kinds()
            .iter()
            .map(|k| match k {
                bq::NodeKind::Source => "source",
                bq::NodeKind::Sink => "sink",
                bq::NodeKind::Steiner => "steiner",
            })
            .collect()
    }

    /// `(parent, child, flow)` per edge.
    #[getter]
    fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.inner.topology().edges().iter().zip(self.inner.flows()).map(|(e, &f)| (e.parent, e.child, f)).collect()
    }

    /// Landscape value at every node.
    fn landscape(&self) -> PyResult<Vec<f64>> {
        Ok(bq::compute_landscape(&self.inner).map_err(err)?.per_node_z().to_vec())
    }

    /// `|cost - Σ z·mass|` over the sinks.
    fn cost_identity_residual(&self) -> PyResult<f64> {
        let field = bq::compute_landscape(&self.inner).map_err(err)?;
        Ok(bq::cost_identity_check(&self.inner, &field))
    }

    fn rescaled(&self, space: f64, mass: f64) -> PyResult<PyNetwork> {
        Ok(PyNetwork { inner: self.inner.rescaled(space, mass).map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!("Network(nodes={}, alpha={}, cost={})", self.inner.topology().len(), self.inner.alpha(), self.inner.cost())
    }
}

/// N sites, the partition of the target into basins, and one network per basin.
#[pyclass(name = "Quantizer", module = "branchquant_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyQuantizer {
    inner: bq::Quantizer,
}

#[pymethods]
impl PyQuantizer {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let dump: QuantizerDump = serde_json::from_str(text).map_err(json_err)?;
        Ok(PyQuantizer { inner: dump.to_quantizer().map_err(err)? })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&QuantizerDump::from_quantizer(&self.inner)).expect("serializable")
    }

    fn svg(&self) -> String {
        bq::render::quantizer_svg(&self.inner)
    }

    #[getter]
    fn total_cost(&self) -> f64 {
        self.inner.total_cost()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }

    #[getter]
    fn sites(&self) -> Vec<Vec<f64>> {
        self.inner.sites().iter().map(|p| p.coords(self.inner.dim()).to_vec()).collect()
    }

    #[getter]
    fn masses(&self) -> Vec<f64> {
        self.inner.masses().to_vec()
    }

    /// Site index of every atom of the target.
    #[getter]
    fn assignment(&self) -> Vec<usize> {
        self.inner.assignment().to_vec()
    }

    #[getter]
    fn networks(&self) -> Vec<PyNetwork> {
        self.inner.networks().iter().map(|n| PyNetwork { inner: n.clone() }).collect()
    }

    /// One dict per basin: site, mass, diameter, mass_density, cost, scaled_cost.
    fn basin_stats<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        bq::basin_stats(&self.inner)
            .into_iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("site", r.site)?;
                d.set_item("mass", r.mass)?;
                d.set_item("diameter", r.diameter)?;
                d.set_item("mass_density", r.mass_density)?;
                d.set_item("cost", r.cost)?;
                d.set_item("scaled_cost", r.scaled_cost)?;
                Ok(d)
            })
            .collect()
    }

    fn check(&self, nu: &PyMeasure) -> PyResult<()> {
        self.inner.check_invariants(&nu.inner, 1e-9).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Quantizer(N={}, alpha={}, cost={})", self.inner.len(), self.inner.alpha(), self.inner.total_cost())
    }
}

/// Heuristic branched transport network from `sources` to `sinks`.
#[pyfunction]
#[pyo3(signature = (sources, sinks, alpha, config=None, seed=None))]
fn solve_bot(
    py: Python<'_>,
    sources: &PyMeasure,
    sinks: &PyMeasure,
    alpha: f64,
    config: Option<&str>,
    seed: Option<u64>,
) -> PyResult<PyNetwork> {
    let cfg = solver_config(config, seed)?;
    let net = py.detach(|| bq::solve_bot(&sources.inner, &sinks.inner, alpha, &cfg)).map_err(err)?;
    Ok(PyNetwork { inner: net })
}

/// Exact optimum over all topologies for at most 5 terminals.
#[pyfunction]
fn brute_force_bot(py: Python<'_>, sources: &PyMeasure, sinks: &PyMeasure, alpha: f64) -> PyResult<PyNetwork> {
    let net = py
        .detach(|| bq::brute_force_bot(&sources.inner, &sinks.inner, alpha, bq::OracleMode::Continuous))
        .map_err(err)?;
    Ok(PyNetwork { inner: net })
}

#[pyfunction]
fn w1_distance(mu: &PyMeasure, nu: &PyMeasure) -> PyResult<f64> {
    bq::w1_distance(&mu.inner, &nu.inner).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (nu, n, alpha, config=None, seed=None))]
fn solve_quantization(
    py: Python<'_>,
    nu: &PyMeasure,
    n: usize,
    alpha: f64,
    config: Option<&str>,
    seed: Option<u64>,
) -> PyResult<PyQuantizer> {
    let cfg = quantizer_config(config, seed)?;
    let q = py.detach(|| bq::solve_quantization(&nu.inner, n, alpha, &cfg)).map_err(err)?;
    Ok(PyQuantizer { inner: q })
}

/// Best partition of `nu` for fixed sites.
#[pyfunction]
#[pyo3(signature = (sites, nu, alpha, config=None))]
fn mass_optimal(py: Python<'_>, sites: Vec<Vec<f64>>, nu: &PyMeasure, alpha: f64, config: Option<&str>) -> PyResult<PyQuantizer> {
    let cfg = quantizer_config(config, None)?;
    let pts = sites.iter().map(|s| point(s)).collect::<PyResult<Vec<_>>>()?;
    let q = py.detach(|| bq::mass_optimal(&pts, &nu.inner, alpha, &cfg)).map_err(err)?;
    Ok(PyQuantizer { inner: q })
}

#[pyfunction]
#[pyo3(signature = (q, nu, config=None))]
fn improve_sites(py: Python<'_>, q: &PyQuantizer, nu: &PyMeasure, config: Option<&str>) -> PyResult<PyQuantizer> {
    let cfg = quantizer_config(config, None)?;
    let q = py.detach(|| bq::improve_sites(&q.inner, &nu.inner, &cfg)).map_err(err)?;
    Ok(PyQuantizer { inner: q })
}

#[pyfunction]
#[pyo3(signature = (q, nu, config=None))]
fn partition_equivalence_check(py: Python<'_>, q: &PyQuantizer, nu: &PyMeasure, config: Option<&str>) -> PyResult<f64> {
    let cfg = quantizer_config(config, None)?;
    py.detach(|| bq::partition_equivalence_check(&q.inner, &nu.inner, &cfg)).map_err(err)
}

/// Warm-started quantizers for every N in `n_list`.
#[pyfunction]
#[pyo3(signature = (nu, alpha, n_list, config=None, seed=None))]
fn sweep(
    py: Python<'_>,
    nu: &PyMeasure,
    alpha: f64,
    n_list: Vec<usize>,
    config: Option<&str>,
    seed: Option<u64>,
) -> PyResult<Vec<PyQuantizer>> {
    let cfg = quantizer_config(config, seed)?;
    let qs = py.detach(|| bq::sweep(&nu.inner, alpha, &n_list, &cfg)).map_err(err)?;
    Ok(qs.into_iter().map(|inner| PyQuantizer { inner }).collect())
}

/// Log-log fit of `(N, cost)` pairs: slope, intercept, c_estimate, r_squared.
#[pyfunction]
fn scaling_fit<'py>(py: Python<'py>, points: Vec<(usize, f64)>, alpha: f64, d: usize) -> PyResult<Bound<'py, PyDict>> {
    let r = bq::scaling_fit(&points, alpha, d).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("slope", r.fitted_slope)?;
    out.set_item("intercept", r.fitted_intercept)?;
    out.set_item("c_estimate", r.c_estimate)?;
    out.set_item("r_squared", r.r_squared)?;
    Ok(out)
}

#[pymodule]
fn branchquant_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMeasure>()?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyQuantizer>()?;
    m.add_function(wrap_pyfunction!(solve_bot, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_bot, m)?)?;
    m.add_function(wrap_pyfunction!(w1_distance, m)?)?;
    m.add_function(wrap_pyfunction!(solve_quantization, m)?)?;
    m.add_function(wrap_pyfunction!(mass_optimal, m)?)?;
    m.add_function(wrap_pyfunction!(improve_sites, m)?)?;
    m.add_function(wrap_pyfunction!(partition_equivalence_check, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(scaling_fit, m)?)?;
    Ok(())
}
