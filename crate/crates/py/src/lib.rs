//! Python module `orbitherm_py`: geometry primitives, Schottky groups,
//! pressure curves and the experiment drivers.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use orbitherm::config::parse_config;
use orbitherm::demo;
use orbitherm::experiments::{run_driver, RunContext, DRIVERS};
use orbitherm::flow::{Potential, PotentialSpec, SamplingKnobs};
use orbitherm::geometry::{self, classify_isometry, HPoint, IsometryKind};
use orbitherm::group::{check_ping_pong, critical_exponent_estimate, nested_subgroup, SchottkyGroup};
use orbitherm::thermo::{equilibrium_stats, PeriodicOrbitTable};
use orbitherm::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(_)
        | Error::InvalidConfig(_)
        | Error::InvalidSpec(_)
        | Error::InvalidTarget(_)
        | Error::Config(_)
        | Error::AmbiguousClassification(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn point(z: (f64, f64)) -> PyResult<HPoint> {
    HPoint::new(z.0, z.1).map_err(to_py)
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (v.to_string(),))
}

/// Hyperbolic distance between two points `(x, y)` of the upper half-plane.
#[pyfunction]
fn hyp_dist(z: (f64, f64), w: (f64, f64)) -> PyResult<f64> {
    Ok(geometry::hyp_dist(point(z)?, point(w)?))
}

/// Orientation preserving isometry `z ↦ (az + b)/(cz + d)`.
#[pyclass(frozen, from_py_object)]
#[derive(Clone, Copy)]
struct Isometry(geometry::Isometry);

#[pymethods]
impl Isometry {
    #[new]
    fn new(a: f64, b: f64, c: f64, d: f64) -> PyResult<Self> {
        geometry::Isometry::new(a, b, c, d).map(Self).map_err(to_py)
    }

    #[getter]
    fn matrix(&self) -> (f64, f64, f64, f64) {
        (self.0.a, self.0.b, self.0.c, self.0.d)
    }

    fn apply(&self, z: (f64, f64)) -> PyResult<(f64, f64)> {
        let w = self.0.apply(point(z)?).map_err(to_py)?;
        Ok((w.x, w.y))
    }

    fn compose(&self, other: &Isometry) -> Self {
        Self(self.0.compose(&other.0))
    }

    fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    /// `(kind, translation length or None)`.
    fn classify(&self) -> PyResult<(&'static str, Option<f64>)> {
        let c = classify_isometry(&self.0).map_err(to_py)?;
        let kind = match c.kind {
            IsometryKind::Hyperbolic => "hyperbolic",
            IsometryKind::Parabolic => "parabolic",
            IsometryKind::Elliptic => "elliptic",
        };
        Ok((kind, c.translation_length))
    }

    fn __repr__(&self) -> String {
        format!("Isometry({}, {}, {}, {})", self.0.a, self.0.b, self.0.c, self.0.d)
    }
}

/// Unit tangent vector with base point `(x, y)` and direction angle.
#[pyclass(frozen, from_py_object)]
#[derive(Clone, Copy)]
struct TangentVector(geometry::TangentVector);

#[pymethods]
impl TangentVector {
    #[new]
    fn new(x: f64, y: f64, angle: f64) -> PyResult<Self> {
        geometry::TangentVector::new(point((x, y))?, angle).map(Self).map_err(to_py)
    }

    #[getter]
    fn base(&self) -> (f64, f64) {
        (self.0.base.x, self.0.base.y)
    }

    #[getter]
    fn angle(&self) -> f64 {
        self.0.angle
    }

    fn flow(&self, t: f64) -> Self {
        Self(geometry::geodesic_flow_step(&self.0, t))
    }

    fn flip(&self) -> Self {
        Self(geometry::flip(&self.0))
    }

    #[pyo3(signature = (other, grid_steps = geometry::DEFAULT_GRID_STEPS))]
    fn bundle_dist(&self, other: &TangentVector, grid_steps: usize) -> PyResult<f64> {
        geometry::bundle_dist(&self.0, &other.0, grid_steps).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("TangentVector({}, {}, {})", self.0.base.x, self.0.base.y, self.0.angle)
    }
}

/// Schottky group given by paired boundary disks.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Group(SchottkyGroup);

#[pymethods]
impl Group {
    /// A preset: "standard", "second", "ambient_four" or "extended".
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        let g = match name {
            "standard" => demo::standard_group(),
            "second" => demo::second_group(),
            "ambient_four" => demo::ambient_four(),
            "extended" => demo::extended_group(),
            _ => return Err(PyValueError::new_err(format!("unknown preset {name:?}"))),
        };
        Ok(Self(g))
    }

    /// The group of a full experiment configuration given as JSON text.
    #[staticmethod]
    fn from_config(json: &str) -> PyResult<Self> {
        parse_config(json.as_bytes()).and_then(|c| c.group.build()).map(Self).map_err(to_py)
    }

    #[getter]
    fn rank(&self) -> usize {
        self.0.rank()
    }

    #[getter]
    fn extended(&self) -> bool {
        self.0.extended
    }

    /// Generator `index` (1-based); negative indices give inverses.
    fn generator(&self, index: i32) -> PyResult<Isometry> {
        if index == 0 || index.unsigned_abs() as usize > self.0.rank() {
            return Err(PyValueError::new_err(format!("generator {index} out of range")));
        }
        Ok(Isometry(self.0.letter(index)))
    }

    fn ping_pong(&self, samples: usize) -> PyResult<bool> {
        check_ping_pong(&self.0, samples).map(|r| r.ok).map_err(to_py)
    }

    #[pyo3(signature = (max_len = 9))]
    fn critical_exponent(&self, max_len: usize) -> PyResult<f64> {
        critical_exponent_estimate(&self.0, max_len).map(|e| e.delta_hat).map_err(to_py)
    }

    /// `⟨g_first, g_second^(2^n)⟩` as a group of its own.
    fn nested(&self, first: usize, second: usize, n: u32) -> PyResult<Self> {
        nested_subgroup(&self.0, first, second, n).map(Self).map_err(to_py)
    }

    /// Rows `(t, pressure, mean of φ, entropy)` for the potential given as
    /// JSON, from closed geodesics of word length up to `n_range[1]`.
    #[pyo3(signature = (potential_json, t_values, n_range = (5, 6)))]
    fn pressure_curve(
        &self,
        py: Python<'_>,
        potential_json: &str,
        t_values: Vec<f64>,
        n_range: (usize, usize),
    ) -> PyResult<Vec<(f64, f64, f64, f64)>> {
        let spec: PotentialSpec =
            serde_json::from_str(potential_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let g = self.0.clone();
        py.detach(move || {
            let knobs = SamplingKnobs::default();
            let phi = Potential::new(&spec, &g, knobs)?;
            let table = PeriodicOrbitTable::build(&g, n_range.1, &[("phi".into(), phi)], &[], knobs)?;
            t_values
                .iter()
                .map(|&t| {
                    let s = equilibrium_stats(&table, "phi", t, &[], n_range)?;
                    Ok((t, s.pressure, s.phi_mean, s.entropy))
                })
                .collect::<orbitherm::Result<Vec<_>>>()
        })
        .map_err(to_py)
    }
}

/// A validated experiment configuration ready to run drivers.
#[pyclass(frozen)]
struct Experiment(RunContext);

#[pymethods]
impl Experiment {
    #[new]
    #[pyo3(signature = (config_json, cache_dir = None))]
    fn new(config_json: &str, cache_dir: Option<PathBuf>) -> PyResult<Self> {
        let cfg = parse_config(config_json.as_bytes()).map_err(to_py)?;
        RunContext::new(cfg, cache_dir.as_deref()).map(Self).map_err(to_py)
    }

    #[getter]
    fn config_hash(&self) -> &str {
        &self.0.hash
    }

    #[staticmethod]
    fn drivers() -> Vec<&'static str> {
        DRIVERS.to_vec()
    }

    /// Runs a driver and returns its JSON output envelope as a dict.
    fn run<'py>(&self, py: Python<'py>, driver: &str) -> PyResult<Bound<'py, PyAny>> {
        let report = py.detach(|| run_driver(&self.0, driver)).map_err(to_py)?;
        json_to_py(py, &report.envelope(&self.0.hash))
    }
}

#[pymodule]
fn orbitherm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(hyp_dist, m)?)?;
    m.add_class::<Isometry>()?;
    m.add_class::<TangentVector>()?;
    m.add_class::<Group>()?;
    m.add_class::<Experiment>()?;
    Ok(())
}
