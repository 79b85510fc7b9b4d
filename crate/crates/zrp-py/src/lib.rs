//! Python bindings for the zero-range process laboratory.
//!
//! Exposes the rate function, flux model and conjugate, the macroscopic
//! profile operations, exact small-instance oracles, the simulator, the
//! extremal coupling and the exclusion-process bridge.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use zrp_core::coupling;
use zrp_core::exclusion;
use zrp_core::flux::{Convexity, FluxModel, FluxModelConfig};
use zrp_core::hj;
use zrp_core::mixing;
use zrp_core::{make_config, Configuration, InitKind, ProcessSpec, RateFunction};

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Jump-rate function g with g(0) = 0 < g(1), non-decreasing.
#[pyclass(name = "RateFunction", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyRateFunction {
    inner: RateFunction,
}

#[pymethods]
impl PyRateFunction {
    #[staticmethod]
    fn constant(rate: f64) -> PyResult<Self> {
        Ok(Self { inner: RateFunction::constant(rate).map_err(value_err)? })
    }

    #[staticmethod]
    fn linear(slope: f64) -> PyResult<Self> {
        Ok(Self { inner: RateFunction::linear(slope).map_err(value_err)? })
    }

    #[staticmethod]
    fn piecewise(knots: Vec<(u32, f64)>) -> PyResult<Self> {
        Ok(Self { inner: RateFunction::piecewise(knots).map_err(value_err)? })
    }

    #[staticmethod]
    fn table(values: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: RateFunction::table(values).map_err(value_err)? })
    }

    fn rate(&self, n: u32) -> f64 {
        self.inner.rate(n)
    }

    fn lipschitz(&self) -> f64 {
        self.inner.lipschitz()
    }

    fn upper_bound(&self) -> Option<f64> {
        self.inner.upper_bound()
    }

    fn __repr__(&self) -> String {
        format!("RateFunction({:?})", self.inner.shape())
    }
}

/// Tabulated macroscopic flux with exact point queries and the Legendre
/// conjugate.
#[pyclass(name = "FluxModel", frozen)]
struct PyFluxModel {
    inner: FluxModel,
}

#[pymethods]
impl PyFluxModel {
    #[new]
    #[pyo3(signature = (rate, alpha_max=4.0, tol=1e-10, grid_points=2048))]
    fn new(rate: &PyRateFunction, alpha_max: f64, tol: f64, grid_points: usize) -> PyResult<Self> {
        let cfg = FluxModelConfig { alpha_max, tol, grid_points };
        Ok(Self { inner: FluxModel::build(&rate.inner, cfg).map_err(runtime_err)? })
    }

    /// Flux at a density.
    fn flux_at(&self, alpha: f64) -> PyResult<f64> {
        self.inner.flux_at(alpha).map_err(runtime_err)
    }

    /// Flux derivative at a density.
    fn derivative_at(&self, alpha: f64) -> PyResult<f64> {
        self.inner.derivative_at(alpha).map_err(runtime_err)
    }

    /// Conjugate value, maximizing density, and a boundary-supremum flag.
    fn conjugate_at(&self, x: f64) -> PyResult<(f64, f64, bool)> {
        let c = self.inner.conjugate_at(x).map_err(runtime_err)?;
        Ok((c.value, c.argmax, c.boundary_max))
    }

    #[getter]
    fn convexity(&self) -> &'static str {
        match self.inner.convexity {
            Convexity::StrictlyConvex => "strictly_convex",
            Convexity::StrictlyConcave => "strictly_concave",
            Convexity::Linear => "linear",
        }
    }

    #[getter]
    fn fugacity_radius(&self) -> f64 {
        self.inner.fugacity_radius
    }

    /// CSV dump with columns alpha,phi,phi_prime.
    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }
}

/// Dynamics on a segment: n sites, k particles, right bias p.
#[pyclass(name = "ProcessSpec", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyProcessSpec {
    inner: ProcessSpec,
}

#[pymethods]
impl PyProcessSpec {
    #[staticmethod]
    fn segment(n: usize, k: u64, p: f64, rate: &PyRateFunction) -> PyResult<Self> {
        Ok(Self { inner: ProcessSpec::segment(n, k, p, rate.inner.clone()).map_err(value_err)? })
    }

    fn __repr__(&self) -> String {
        format!("ProcessSpec(n={}, k={}, p={})", self.inner.geometry.len(), self.inner.k, self.inner.p)
    }
}

fn parse_init(spec: &ProcessSpec, init: &Bound<'_, PyAny>) -> PyResult<Configuration> {
    if let Ok(name) = init.extract::<String>() {
        let kind = match name.as_str() {
            "wedge" => InitKind::Wedge,
            "vee" => InitKind::Vee,
            other => return Err(PyValueError::new_err(format!("unknown init {other}"))),
        };
        return make_config(kind, spec, None).map_err(value_err);
    }
    let occ: Vec<u32> = init.extract()?;
    make_config(InitKind::Custom, spec, Some(occ)).map_err(value_err)
}

/// Exact-law trajectory: returns [(t, occupancies), ...] at the probes.
#[pyfunction]
#[pyo3(signature = (spec, init, horizon, probes, seed=0))]
fn simulate(
    spec: &PyProcessSpec,
    init: &Bound<'_, PyAny>,
    horizon: f64,
    probes: Vec<f64>,
    seed: u64,
) -> PyResult<Vec<(f64, Vec<u32>)>> {
    let cfg = parse_init(&spec.inner, init)?;
    let traj = zrp_core::simulate(&spec.inner, &cfg, horizon, &probes, seed).map_err(runtime_err)?;
    Ok(traj
        .probe_times
        .into_iter()
        .zip(traj.snapshots.into_iter().map(|c| c.occupancy))
        .collect())
}

/// Stationary law over the enumerated state space, with the states.
#[pyfunction]
fn stationary_law(spec: &PyProcessSpec) -> PyResult<(Vec<Vec<u32>>, Vec<f64>)> {
    let n = spec.inner.geometry.len();
    let index = mixing::StateIndex::build(n, spec.inner.k, mixing::STATE_CAP).map_err(runtime_err)?;
    let law = mixing::stationary_law(&index, spec.inner.p, &spec.inner.g);
    let states = (0..index.len()).map(|s| index.config(s).occupancy.clone()).collect();
    Ok((states, law))
}

/// Uniformized law of the state at time t from an initial configuration.
#[pyfunction]
fn transient_law(
    spec: &PyProcessSpec,
    init: &Bound<'_, PyAny>,
    t: f64,
) -> PyResult<(Vec<Vec<u32>>, Vec<f64>)> {
    let cfg = parse_init(&spec.inner, init)?;
    let solver = mixing::TransientSolver::new(&spec.inner, mixing::STATE_CAP, 1e-10)
        .map_err(runtime_err)?;
    let law = solver.law(&cfg, t).map_err(runtime_err)?;
    let states = (0..solver.index.len()).map(|s| solver.index.config(s).occupancy.clone()).collect();
    Ok((states, law))
}

/// Exact worst-case total-variation curve at the given microscopic times.
#[pyfunction]
fn tv_curve_exact(spec: &PyProcessSpec, times: Vec<f64>) -> PyResult<Vec<f64>> {
    let curve = mixing::tv_curve(&spec.inner, &times, mixing::TvMode::Exact, 0, 0)
        .map_err(runtime_err)?;
    Ok(curve.values)
}

/// First crossing time of a total-variation curve below theta.
#[pyfunction]
fn mixing_time(times: Vec<f64>, values: Vec<f64>, theta: f64) -> PyResult<f64> {
    let curve = mixing::TVCurve { times, values, mode: "exact", replicas: 0, seed: 0 };
    mixing::mixing_time_from_curve(&curve, theta).map_err(runtime_err)
}

/// First time the extremal copies coincide, or None within t_max.
#[pyfunction]
#[pyo3(signature = (spec, t_max, seed=0))]
fn coalescence_time(spec: &PyProcessSpec, t_max: f64, seed: u64) -> PyResult<Option<f64>> {
    coupling::coalescence_time(&spec.inner, t_max, seed).map_err(runtime_err)
}

/// Dirac-profile value U at macroscopic time t and position x.
#[pyfunction]
fn dirac_profile(model: &PyFluxModel, alpha: f64, p: f64, t: f64, x: f64) -> PyResult<f64> {
    hj::dirac_profile(&model.inner, alpha, p, t, x).map_err(runtime_err)
}

/// Segment profile v(t, [0, x]) for x in (0, 1].
#[pyfunction]
fn segment_profile(model: &PyFluxModel, alpha: f64, p: f64, t: f64, x: f64) -> PyResult<f64> {
    hj::segment_profile(&model.inner, alpha, p, t, x).map_err(runtime_err)
}

/// Macroscopic equilibrium time.
#[pyfunction]
fn equilibrium_time(model: &PyFluxModel, alpha: f64, p: f64) -> PyResult<f64> {
    hj::equilibrium_time(&model.inner, alpha, p).map_err(runtime_err)
}

/// Front values and derivatives (L, S, L', S') at macroscopic time t.
#[pyfunction]
fn front_functions(model: &PyFluxModel, alpha: f64, p: f64, t: f64) -> PyResult<(f64, f64, f64, f64)> {
    let f = hj::front_functions(&model.inner, alpha, p, t).map_err(runtime_err)?;
    Ok((f.l, f.s, f.l_prime, f.s_prime))
}

/// Strong-asymmetry condition: (holds, lhs, rhs).
#[pyfunction]
fn check_condition_5(model: &PyFluxModel, p: f64, alpha: f64) -> PyResult<(bool, f64, f64)> {
    let c = hj::check_condition_5(&model.inner, p, alpha).map_err(runtime_err)?;
    Ok((c.holds, c.lhs, c.rhs))
}

/// Exclusion -> zero-range bijection.
#[pyfunction]
fn sep_to_zrp(xi: Vec<u32>, n: usize) -> PyResult<Vec<u32>> {
    let binary: Vec<u8> = xi
        .into_iter()
        .map(|x| u8::try_from(x).map_err(|_| PyValueError::new_err("entries must be 0 or 1")))
        .collect::<PyResult<_>>()?;
    let cfg = exclusion::ExclusionConfig::new(binary).map_err(value_err)?;
    Ok(exclusion::sep_to_zrp(&cfg, n).map_err(value_err)?.occupancy)
}

/// Zero-range -> exclusion bijection.
#[pyfunction]
fn zrp_to_sep(eta: Vec<u32>) -> Vec<u32> {
    exclusion::zrp_to_sep(&Configuration::new(eta)).occupancy.iter().map(|&x| x as u32).collect()
}

/// Exact generator-conjugation residual for the constant-rate mapping.
#[pyfunction]
fn conjugation_residual(n: usize, k: u64, p: f64) -> PyResult<f64> {
    Ok(exclusion::conjugation_residual(n, k, p, mixing::STATE_CAP)
        .map_err(runtime_err)?
        .residual)
}

#[pymodule]
fn zrp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRateFunction>()?;
    m.add_class::<PyFluxModel>()?;
    m.add_class::<PyProcessSpec>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(stationary_law, m)?)?;
    m.add_function(wrap_pyfunction!(transient_law, m)?)?;
    m.add_function(wrap_pyfunction!(tv_curve_exact, m)?)?;
    m.add_function(wrap_pyfunction!(mixing_time, m)?)?;
    m.add_function(wrap_pyfunction!(coalescence_time, m)?)?;
    m.add_function(wrap_pyfunction!(dirac_profile, m)?)?;
    m.add_function(wrap_pyfunction!(segment_profile, m)?)?;
    m.add_function(wrap_pyfunction!(equilibrium_time, m)?)?;
    m.add_function(wrap_pyfunction!(front_functions, m)?)?;
    m.add_function(wrap_pyfunction!(check_condition_5, m)?)?;
    m.add_function(wrap_pyfunction!(sep_to_zrp, m)?)?;
    m.add_function(wrap_pyfunction!(zrp_to_sep, m)?)?;
    m.add_function(wrap_pyfunction!(conjugation_residual, m)?)?;
    Ok(())
}
