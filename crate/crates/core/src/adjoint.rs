//! Discrete adjoint of the forward θ-scheme, by exact transposition.
//!
//! Writing one forward step as A u^{k+1} = B u^k + Δt ℓ^{k+θ} with
//! A = M + θΔt K and B = M - (1-θ)Δt K, the evolution of the dual vector
//! q = M φ under the M-adjoint of the step map is
//!
//!   q^n = M φ_T,   r^{k+1} = A^{-T} q^{k+1},   q^k = B^T r^{k+1},
//!
//! and the adjoint state at a time node is φ^k = M^{-1} q^k.  Telescoping
//! the forward recursion against q gives the discrete duality identity
//!
//!   ⟨u^n, φ_T⟩_X - ⟨u^0, φ^0⟩_X = Δt Σ_k ((1-θ) v_k + θ v_{k+1}) · y_k,
//!
//! where y_k is the controlled-endpoint entry of r^{k+1} and v is the
//! boundary control.  The identity is algebraic — it holds to round-off on
//! any grid — and fixes the time-quadrature pairing between controls and
//! observations: re-expressed against the trapezoidal inner product on node
//! samples, the adjoint observation becomes the staggered average
//!
//!   o_0 = 2(1-θ) y_0,  o_j = θ y_{j-1} + (1-θ) y_j,  o_n = 2θ y_{n-1},
//!
//! which is the control returned to the penalized-HUM layer.  o_j is a
//! consistent sample of the boundary trace φ(t_j, 0) (second order at
//! interior nodes for θ = 1/2), and the nodal traces of the adjoint states
//! are also reported; the two sequences agree up to discretization error
//! but only the staggered one closes the duality product exactly.
//!
//! The adjoint states themselves solve the time-reversed adjoint equation
//! φ_t + φ_x + ε φ_xx - aφ = 0 with its own dynamic boundary conditions:
//! the transposed bilinear form is exactly the Galerkin form of that
//! system (advection sign flipped, absorption moved to x = 0), which
//! [`solve_adjoint_direct`] assembles independently as a cross-check.

use crate::error::{Error, Result};
use crate::forward::{forward_final, Sources};
use crate::operators::DiscreteOperators;
use crate::tridiag::Tridiag;
use crate::types::{ControlLocation, ControlSignal, StateX, Trajectory};

/// Result of a backward adjoint solve.
#[derive(Clone, Debug)]
pub struct AdjointRun {
    /// Adjoint states at every time node; the last state is exactly the
    /// terminal datum.
    pub trajectory: Trajectory,
    /// Nodal boundary trace at the observed endpoint (one per time node;
    /// equal to the corresponding entries of `trajectory`).
    pub observation: Vec<f64>,
    /// Duality-exact observation in control coordinates: the staggered
    /// trace that closes ⟨u(T), φ_T⟩ - ⟨u0, φ(0)⟩ = (v, ·)_{L²(0,T)} at
    /// round-off.  This is what penalized HUM uses as a control.
    pub duality_trace: ControlSignal,
}

/// Backward march shared by the full and traces-only adjoint solves.
/// Returns (per-step duality traces y, final dual vector q^0).
fn adjoint_march<F: FnMut(usize, &[f64])>(
    ops: &DiscreteOperators,
    phi_t: &StateX,
    location: ControlLocation,
    mut visit_q: F,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = ops.n_space();
    if phi_t.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "terminal state has {} nodes, grid has {n}",
            phi_t.len()
        )));
    }
    let n_time = ops.grid.n_time;
    let obs = location.node_index(n);
    let b_t: Tridiag = ops.step_explicit().transpose();

    let mut q = vec![0.0; n];
    ops.mass_x().matvec(phi_t.values(), &mut q);
    let mut y = vec![0.0; n_time];
    let mut scratch = vec![0.0; n];
    for k in (0..n_time).rev() {
        // r^{k+1} = A^{-T} q^{k+1}
        ops.solve_implicit_t(&mut q);
        y[k] = q[obs];
        // q^k = B^T r^{k+1}
        b_t.matvec(&q, &mut scratch);
        std::mem::swap(&mut q, &mut scratch);
        visit_q(k, &q);
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("adjoint march produced non-finite values".to_string()));
    }
    Ok((y, q))
}

/// Map per-step duality traces to node samples against the trapezoidal
/// time inner product (the adjoint of the θ-centered load).
fn staggered_to_nodes(y: &[f64], theta: f64) -> Vec<f64> {
    let n_time = y.len();
    let mut o = vec![0.0; n_time + 1];
    o[0] = 2.0 * (1.0 - theta) * y[0];
    for j in 1..n_time {
        o[j] = theta * y[j - 1] + (1.0 - theta) * y[j];
    }
    o[n_time] = 2.0 * theta * y[n_time - 1];
    o
}

/// Solve the adjoint system backward from `phi_t`, keeping all states.
pub fn solve_adjoint(
    ops: &DiscreteOperators,
    phi_t: &StateX,
    location: ControlLocation,
) -> Result<AdjointRun> {
    let n_time = ops.grid.n_time;
    let mut states = vec![StateX::zeros(ops.n_space()); n_time + 1];
    states[n_time] = phi_t.clone();
    let mut failed = false;
    let (y, _q0) = adjoint_march(ops, phi_t, location, |k, q| {
        let mut phi = q.to_vec();
        ops.solve_mass(&mut phi);
        if phi.iter().any(|v| !v.is_finite()) {
            failed = true;
        }
        states[k] = StateX::from_raw(phi);
    })?;
    if failed {
        return Err(Error::Singular("mass solve produced non-finite adjoint state".to_string()));
    }
    let trajectory = Trajectory::from_states(states);
    let observation = match location {
        ControlLocation::Gamma0 => trajectory.trace_at_zero().to_vec(),
        ControlLocation::Gamma1 => trajectory.trace_at_minus_one().to_vec(),
    };
    let duality_trace = ControlSignal::new(staggered_to_nodes(&y, ops.grid.theta), location)?;
    Ok(AdjointRun { trajectory, observation, duality_trace })
}

/// Traces-only adjoint solve: the duality observation and the adjoint state
/// at t = 0, without storing the history.  This is the hot path inside
/// Gramian applications.
pub fn adjoint_observation(
    ops: &DiscreteOperators,
    phi_t: &StateX,
    location: ControlLocation,
) -> Result<(ControlSignal, StateX)> {
    let (y, q0) = adjoint_march(ops, phi_t, location, |_, _| {})?;
    let mut phi0 = q0;
    ops.solve_mass(&mut phi0);
    let trace = ControlSignal::new(staggered_to_nodes(&y, ops.grid.theta), location)?;
    Ok((trace, StateX::from_raw(phi0)))
}

/// Trapezoidal pairing of two node-sampled time series on [0, T].
pub fn trapezoid_dot(a: &[f64], b: &[f64], t_final: f64) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::DimensionMismatch(format!(
            "trapezoid_dot: lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() - 1;
    let dt = t_final / n as f64;
    let mut acc = 0.5 * (a[0] * b[0] + a[n] * b[n]);
    for j in 1..n {
        acc += a[j] * b[j];
    }
    Ok(acc * dt)
}

/// Relative defect of the discrete duality identity for an arbitrary
/// (initial state, boundary control, terminal adjoint datum) triple.
///
/// Exact transposition makes this round-off small — about 1e-13 relative
/// in practice — independent of grid resolution.
pub fn duality_defect(
    ops: &DiscreteOperators,
    u0: &StateX,
    v: &ControlSignal,
    phi_t: &StateX,
) -> Result<f64> {
    if v.samples.len() != ops.grid.n_time + 1 {
        return Err(Error::DimensionMismatch(format!(
            "control has {} samples, expected {}",
            v.samples.len(),
            ops.grid.n_time + 1
        )));
    }
    let u_fin = forward_final(ops, u0, &Sources::boundary(&v.samples, v.location))?;
    let (trace, phi0) = adjoint_observation(ops, phi_t, v.location)?;
    let terminal = ops.inner_m(u_fin.values(), phi_t.values());
    let initial = ops.inner_m(u0.values(), phi0.values());
    let pairing = trapezoid_dot(&v.samples, &trace.samples, ops.params.t_final)?;
    let defect = (terminal - initial - pairing).abs();
    let scale = terminal.abs().max(initial.abs()).max(pairing.abs());
    Ok(if scale > 0.0 { defect / scale } else { defect })
}

/// Independently discretized adjoint solver, used as a cross-validation
/// oracle for [`solve_adjoint`].
///
/// In reversed time τ = T - t the adjoint system becomes a forward
/// parabolic problem whose weak form is
///
///   d/dτ ⟨χ, ψ⟩_X + b̃(χ, ψ) + a (χ, ψ)_{L²} = 0,
///   b̃(χ, ψ) = ε ∫ χ' ψ' - ∫ ψ χ' + χ(0) ψ(0),
///
/// i.e. the advection sign flips and the absorption sits at x = 0.  This
/// function assembles b̃ from scratch and marches the same θ-scheme in τ;
/// it never touches the transposed factorizations.  The returned states are
/// indexed by forward time (state k approximates φ(t_k)).
///
/// The two solvers agree to round-off, and that is a theorem rather than
/// an accident: with A = M + θΔt K and B = M - (1-θ)Δt K one has
/// B = θ⁻¹ M - θ⁻¹(1-θ) A, hence Bᵀ A⁻ᵀ M = M A⁻ᵀ Bᵀ exactly, i.e. the
/// M-adjoint step M⁻¹BᵀA⁻ᵀM of the transposed march coincides with the
/// direct θ-step (Aᵀ)⁻¹Bᵀ of the adjoint assembly.  What the cross-check
/// genuinely validates is the assembly itself: any sign or boundary-term
/// mistake in either bilinear form breaks the agreement immediately.
pub fn solve_adjoint_direct(ops: &DiscreteOperators, phi_t: &StateX) -> Result<Trajectory> {
    let p = &ops.params;
    let grid = &ops.grid;
    let n = grid.n_space;
    if phi_t.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "terminal state has {} nodes, grid has {n}",
            phi_t.len()
        )));
    }
    let h = grid.h();
    let dt = grid.dt(p);
    let theta = grid.theta;

    let mut k_adj = Tridiag::zeros(n);
    for e in 0..n - 1 {
        k_adj.diag[e] += p.epsilon / h + 0.5;
        k_adj.diag[e + 1] += p.epsilon / h - 0.5;
        k_adj.sup[e] += -p.epsilon / h - 0.5;
        k_adj.sub[e] += -p.epsilon / h + 0.5;
        // Zero-order term a ∫ χ ψ.
        k_adj.diag[e] += p.a * h / 3.0;
        k_adj.diag[e + 1] += p.a * h / 3.0;
        k_adj.sup[e] += p.a * h / 6.0;
        k_adj.sub[e] += p.a * h / 6.0;
    }
    k_adj.diag[n - 1] += 1.0;

    let a_mat = ops.mass_x().add_scaled(&k_adj, theta * dt);
    let b_mat = ops.mass_x().add_scaled(&k_adj, -(1.0 - theta) * dt);
    let fact = a_mat.factor()?;

    let n_time = grid.n_time;
    let mut states = vec![StateX::zeros(n); n_time + 1];
    states[n_time] = phi_t.clone();
    let mut chi = phi_t.values().to_vec();
    let mut rhs = vec![0.0; n];
    for m in 0..n_time {
        b_mat.matvec(&chi, &mut rhs);
        fact.solve_in_place(&mut rhs);
        std::mem::swap(&mut chi, &mut rhs);
        states[n_time - 1 - m] = StateX::from_raw(chi.clone());
    }
    if chi.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("direct adjoint march produced non-finite values".to_string()));
    }
    Ok(Trajectory::from_states(states))
}
