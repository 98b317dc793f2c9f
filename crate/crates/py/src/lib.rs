//! Python bindings for the boundary null-control laboratory.
//!
//! The module exposes the core entry points with plain-Python signatures:
//! scalars in, lists/dicts out.  Grids are described by (n_space, n_time,
//! theta) triples and model parameters by (epsilon, a, t_final); control
//! location is the string "gamma0" (outflow end, x = 0) or "gamma1"
//! (inflow end, x = -1).  Library errors surface as ValueError with the
//! original message.

use advdiff::adjoint;
use advdiff::dissipation;
use advdiff::hum::{compute_control as hum_compute_control, HumConfig};
use advdiff::lower_bound::{witness_quotient as lb_witness_quotient, BumpSpec};
use advdiff::operators::assemble;
use advdiff::sweep::{fit_exponential as sweep_fit_exponential, reference_datum, SweepConfig};
use advdiff::types::{ControlLocation, ControlSignal, GridSpec, ModelParams, StateX};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: advdiff::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_location(location: &str) -> PyResult<ControlLocation> {
    match location {
        "gamma0" => Ok(ControlLocation::Gamma0),
        "gamma1" => Ok(ControlLocation::Gamma1),
        other => Err(PyValueError::new_err(format!(
            "location must be 'gamma0' or 'gamma1', got '{other}'"
        ))),
    }
}

fn build(
    epsilon: f64,
    a: f64,
    t_final: f64,
    n_space: usize,
    n_time: usize,
    theta: f64,
) -> PyResult<(ModelParams, GridSpec, advdiff::operators::DiscreteOperators)> {
    let p = ModelParams::new(epsilon, a, t_final).map_err(py_err)?;
    let g = GridSpec::new(n_space, n_time, theta).map_err(py_err)?;
    let ops = assemble(&p, &g).map_err(py_err)?;
    Ok((p, g, ops))
}

/// Relative defect of the discrete duality identity
/// ⟨u(T), φ_T⟩ − ⟨u0, φ(0)⟩ = (v, observation) for the given data.
#[pyfunction]
#[pyo3(signature = (epsilon, a, t_final, n_space, n_time, u0, v, phi_t, location="gamma0", theta=0.5))]
#[allow(clippy::too_many_arguments)]
fn duality_defect(
    epsilon: f64,
    a: f64,
    t_final: f64,
    n_space: usize,
    n_time: usize,
    u0: Vec<f64>,
    v: Vec<f64>,
    phi_t: Vec<f64>,
    location: &str,
    theta: f64,
) -> PyResult<f64> {
    let loc = parse_location(location)?;
    let (_, _, ops) = build(epsilon, a, t_final, n_space, n_time, theta)?;
    let u0 = StateX::new(u0).map_err(py_err)?;
    let phi_t = StateX::new(phi_t).map_err(py_err)?;
    let v = ControlSignal::new(v, loc).map_err(py_err)?;
    adjoint::duality_defect(&ops, &u0, &v, &phi_t).map_err(py_err)
}

/// Penalized null control for the initial datum `u0` (default: the unit
/// reference bump).  Returns a dict with the control samples and the
/// solver diagnostics.
#[pyfunction]
#[pyo3(signature = (epsilon, a, t_final, n_space, n_time, penalty_delta,
                    location="gamma0", theta=0.5, cg_tol=1e-10, cg_max_iter=2000, u0=None))]
#[allow(clippy::too_many_arguments)]
fn compute_control<'py>(
    py: Python<'py>,
    epsilon: f64,
    a: f64,
    t_final: f64,
    n_space: usize,
    n_time: usize,
    penalty_delta: f64,
    location: &str,
    theta: f64,
    cg_tol: f64,
    cg_max_iter: usize,
    u0: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let loc = parse_location(location)?;
    let (_, g, ops) = build(epsilon, a, t_final, n_space, n_time, theta)?;
    let datum = match u0 {
        Some(values) => StateX::new(values).map_err(py_err)?,
        None => reference_datum(&g),
    };
    let cfg = HumConfig { penalty_delta, cg_tol, cg_max_iter };
    let r = hum_compute_control(&ops, &datum, &cfg, loc).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("control", r.control.samples.clone())?;
    d.set_item("cost_quotient", r.cost_quotient)?;
    d.set_item("terminal_residual", r.terminal_residual)?;
    d.set_item("control_norm", r.control_norm)?;
    d.set_item("cg_iterations", r.cg_iterations)?;
    d.set_item("converged", r.converged)?;
    Ok(d)
}

/// Short-horizon lower-bound witness: transported-bump quotient and its
/// ingredients at the given viscosity.
#[pyfunction]
#[pyo3(signature = (epsilon, t_final, bump_delta, n_space, n_time, a=0.0, theta=0.5))]
fn witness_quotient<'py>(
    py: Python<'py>,
    epsilon: f64,
    t_final: f64,
    bump_delta: f64,
    n_space: usize,
    n_time: usize,
    a: f64,
    theta: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = BumpSpec::new(bump_delta, t_final).map_err(py_err)?;
    let p = ModelParams::new(epsilon, a, t_final).map_err(py_err)?;
    let g = GridSpec::new(n_space, n_time, theta).map_err(py_err)?;
    let r = lb_witness_quotient(&spec, &p, &g).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("epsilon", r.epsilon)?;
    d.set_item("t_final", r.t_final)?;
    d.set_item("delta", r.delta)?;
    d.set_item("trace_energy", r.trace_energy)?;
    d.set_item("initial_norm", r.initial_norm)?;
    d.set_item("quotient", r.quotient)?;
    d.set_item("transport_pairing", r.transport_pairing)?;
    d.set_item("off_regime", r.off_regime)?;
    Ok(d)
}

/// Squared X-norm decay ratio ‖φ(t1)‖²/‖φ(t2)‖² of the backward adjoint
/// started from the unit reference bump.
#[pyfunction]
#[pyo3(signature = (epsilon, a, t_final, n_space, n_time, t1, t2, theta=0.5))]
#[allow(clippy::too_many_arguments)]
fn decay_ratio(
    epsilon: f64,
    a: f64,
    t_final: f64,
    n_space: usize,
    n_time: usize,
    t1: f64,
    t2: f64,
    theta: f64,
) -> PyResult<f64> {
    let (_, g, ops) = build(epsilon, a, t_final, n_space, n_time, theta)?;
    let datum = reference_datum(&g);
    dissipation::decay_ratio(&ops, &datum, t1, t2).map_err(py_err)
}

/// Least-squares exponential-law fit of (abscissa, log value) pairs.
#[pyfunction]
fn fit_exponential<'py>(py: Python<'py>, points: Vec<(f64, f64)>) -> PyResult<Bound<'py, PyDict>> {
    let fit = sweep_fit_exponential(&points).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("slope", fit.slope)?;
    d.set_item("intercept", fit.intercept)?;
    d.set_item("r_squared", fit.r_squared)?;
    d.set_item("points", fit.points)?;
    Ok(d)
}

/// Spatial resolution the sweep policy pairs with a viscosity.
#[pyfunction]
fn n_space_for(epsilon: f64) -> usize {
    SweepConfig::n_space_for(epsilon)
}

#[pymodule]
fn advdiff_py(m: &Bound<PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(duality_defect, m)?)?;
    m.add_function(wrap_pyfunction!(compute_control, m)?)?;
    m.add_function(wrap_pyfunction!(witness_quotient, m)?)?;
    m.add_function(wrap_pyfunction!(decay_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(fit_exponential, m)?)?;
    m.add_function(wrap_pyfunction!(n_space_for, m)?)?;
    Ok(())
}
