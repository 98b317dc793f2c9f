//! θ-scheme time stepping for the forward system.
//!
//! One step solves (M + θΔt K) u^{k+1} = (M - (1-θ)Δt K) u^k + Δt ℓ^{k+θ}
//! with the time-centered load ℓ^{k+θ} = (1-θ) ℓ(t_k) + θ ℓ(t_{k+1}).
//! Load vectors place an interior source against basis mass integrals and
//! boundary data against the endpoint basis values:
//!
//!   ℓ(t) = M_int f(t, ·) + g₀(t) e_{x=0} + g₁(t) e_{x=-1}.
//!
//! For θ ≥ 1/2 and zero sources the step contracts the X norm (the
//! generator's quadratic form is nonnegative), which is checked to
//! round-off by the tests; Crank-Nicolson (θ = 1/2) is second order in
//! time, fully implicit (θ = 1) first order but preferable for very stiff
//! small-ε runs.

use crate::error::{Error, Result};
use crate::operators::DiscreteOperators;
use crate::types::{ControlLocation, StateX, Trajectory};

/// Source data for a forward run.  Boundary samples, when present, must
/// hold one value per time node (n_time + 1).
pub struct Sources<'a> {
    /// Interior source f(t, x), sampled at nodes and paired against the
    /// interior mass matrix.
    pub f: Option<&'a dyn Fn(f64, f64) -> f64>,
    /// Flux data at Γ₀ (x = 0).
    pub g0: Option<&'a [f64]>,
    /// Flux data at Γ₁ (x = -1).
    pub g1: Option<&'a [f64]>,
}

impl<'a> Sources<'a> {
    pub fn none() -> Self {
        Sources { f: None, g0: None, g1: None }
    }

    /// A single boundary control acting at `location`.
    pub fn boundary(samples: &'a [f64], location: ControlLocation) -> Self {
        match location {
            ControlLocation::Gamma0 => Sources { f: None, g0: Some(samples), g1: None },
            ControlLocation::Gamma1 => Sources { f: None, g0: None, g1: Some(samples) },
        }
    }

    fn is_zero(&self) -> bool {
        self.f.is_none() && self.g0.is_none() && self.g1.is_none()
    }

    fn validate(&self, n_time: usize) -> Result<()> {
        for (name, g) in [("g0", self.g0), ("g1", self.g1)] {
            if let Some(g) = g {
                if g.len() != n_time + 1 {
                    return Err(Error::DimensionMismatch(format!(
                        "{name} has {} samples, expected n_time + 1 = {}",
                        g.len(),
                        n_time + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Assemble the load vector ℓ(t_k) into `out`.
fn load_at(ops: &DiscreteOperators, src: &Sources, k: usize, nodes: &[f64], scratch: &mut [f64], out: &mut [f64]) {
    let n = ops.n_space();
    out.iter_mut().for_each(|v| *v = 0.0);
    if let Some(f) = src.f {
        let t = k as f64 * ops.grid.dt(&ops.params);
        for (i, &x) in nodes.iter().enumerate() {
            scratch[i] = f(t, x);
        }
        ops.mass_interior().matvec(scratch, out);
    }
    if let Some(g0) = src.g0 {
        out[n - 1] += g0[k];
    }
    if let Some(g1) = src.g1 {
        out[0] += g1[k];
    }
}

fn march<F: FnMut(usize, &[f64])>(
    ops: &DiscreteOperators,
    u0: &StateX,
    src: &Sources,
    mut visit: F,
) -> Result<Vec<f64>> {
    let n = ops.n_space();
    if u0.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} nodes, grid has {n}",
            u0.len()
        )));
    }
    let n_time = ops.grid.n_time;
    src.validate(n_time)?;

    let dt = ops.grid.dt(&ops.params);
    let theta = ops.grid.theta;
    let nodes = ops.grid.nodes();
    let mut u = u0.values().to_vec();
    let mut rhs = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut load_k = vec![0.0; n];
    let mut load_k1 = vec![0.0; n];
    let with_load = !src.is_zero();
    if with_load {
        load_at(ops, src, 0, &nodes, &mut scratch, &mut load_k);
    }

    visit(0, &u);
    for k in 0..n_time {
        ops.step_explicit().matvec(&u, &mut rhs);
        if with_load {
            load_at(ops, src, k + 1, &nodes, &mut scratch, &mut load_k1);
            for i in 0..n {
                rhs[i] += dt * ((1.0 - theta) * load_k[i] + theta * load_k1[i]);
            }
            std::mem::swap(&mut load_k, &mut load_k1);
        }
        ops.solve_implicit(&mut rhs);
        std::mem::swap(&mut u, &mut rhs);
        visit(k + 1, &u);
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("forward march produced non-finite values".to_string()));
    }
    Ok(u)
}

/// Run the θ-scheme and keep the whole space-time history.
pub fn solve_forward(ops: &DiscreteOperators, u0: &StateX, src: &Sources) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(ops.grid.n_time + 1);
    march(ops, u0, src, |_, u| states.push(StateX::from_raw(u.to_vec())))?;
    Ok(Trajectory::from_states(states))
}

/// Run the θ-scheme and return only the terminal state.
pub fn forward_final(ops: &DiscreteOperators, u0: &StateX, src: &Sources) -> Result<StateX> {
    let u = march(ops, u0, src, |_, _| {})?;
    Ok(StateX::from_raw(u))
}
