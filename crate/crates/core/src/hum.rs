//! Penalized approximate null control via the Hilbert Uniqueness Method.
//!
//! For a horizon T and initial state u0, the minimal-L²-norm control that
//! steers u(T) close to zero is found by duality.  Let L map a boundary
//! control v to the state reached at time T from zero initial data, and
//! let L* map a terminal adjoint datum a to the duality-exact boundary
//! observation of the adjoint solve from a.  The observability Gramian
//! Λ = L L* is symmetric positive semidefinite in the X inner product, and
//! the penalized problem
//!
//!   (Λ + δ I) φ* = -S_T u0,     v = L* φ*,
//!
//! with S_T the free (v ≡ 0) evolution over [0, T], yields a control whose
//! terminal state satisfies u(T) = -δ φ* exactly (up to the linear-solver
//! residual).  Standard penalized-HUM theory then gives ‖u(T)‖_X = O(√δ),
//! which is the scaling the tests pin down.  The linear system is solved
//! by conjugate gradients in the X inner product; exact discrete
//! transposition of the forward scheme makes Λ symmetric to round-off,
//! which CG requires to converge.
//!
//! The cost of controlling the system is estimated from above by the worst
//! cost quotient ‖v‖_{L²(0,T)} / ‖u0‖_X over a fixed battery of initial
//! states (smooth bumps of several widths and positions plus low-frequency
//! oscillatory profiles).  How this upper estimate moves with the viscosity
//! ε — decaying for large T, blowing up for T < 1 — is the main object of
//! study of the sweep layer.

use rayon::prelude::*;

use crate::adjoint::adjoint_observation;
use crate::error::{Error, Result};
use crate::forward::{forward_final, Sources};
use crate::operators::DiscreteOperators;
use crate::types::{l2_time_norm, norm_x, ControlLocation, ControlSignal, GridSpec, StateX};

/// Identifies the fixed composition of [`default_battery`]; recorded in
/// sweep manifests so cost estimates are comparable across runs.
pub const BATTERY_VERSION: &str = "bumps8-osc4-v1";

/// Parameters of the penalized-HUM solve.
#[derive(Clone, Copy, Debug)]
pub struct HumConfig {
    /// Penalty δ > 0 on the terminal adjoint datum.  The terminal state of
    /// the controlled system scales like √δ.
    pub penalty_delta: f64,
    /// Relative residual (in the X norm) at which CG stops.
    pub cg_tol: f64,
    /// Iteration cap; exceeding it returns `converged = false` with the
    /// partial result.
    pub cg_max_iter: usize,
}

impl Default for HumConfig {
    fn default() -> Self {
        HumConfig { penalty_delta: 1e-8, cg_tol: 1e-10, cg_max_iter: 2000 }
    }
}

impl HumConfig {
    fn validate(&self) -> Result<()> {
        if !(self.penalty_delta > 0.0) || !self.penalty_delta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "penalty_delta must be positive and finite, got {}",
                self.penalty_delta
            )));
        }
        if !(self.cg_tol > 0.0) || !self.cg_tol.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "cg_tol must be positive and finite, got {}",
                self.cg_tol
            )));
        }
        if self.cg_max_iter == 0 {
            return Err(Error::InvalidParameter("cg_max_iter must be at least 1".to_string()));
        }
        Ok(())
    }
}

/// Outcome of one penalized-HUM solve.
#[derive(Clone, Debug)]
pub struct HumResult {
    /// The computed boundary control.
    pub control: ControlSignal,
    /// Minimizing terminal adjoint datum φ*; the controlled terminal state
    /// equals -δ φ* up to the CG residual.
    pub adjoint_datum: StateX,
    /// ‖u(T)‖_X recomputed by an independent forward solve with `control`
    /// (never inferred from CG internals).
    pub terminal_residual: f64,
    /// ‖control‖_{L²(0,T)}.
    pub control_norm: f64,
    /// control_norm / ‖u0‖_X (zero when u0 = 0).
    pub cost_quotient: f64,
    /// CG iterations performed.
    pub cg_iterations: usize,
    /// Whether CG reached `cg_tol` within `cg_max_iter`.
    pub converged: bool,
    /// Relative X-norm residual after each iteration, starting at 1.
    pub residual_history: Vec<f64>,
}

impl HumResult {
    /// Flat summary record for sweep manifests.
    pub fn json_record(&self, ops: &DiscreteOperators, cfg: &HumConfig) -> serde_json::Value {
        serde_json::json!({
            "epsilon": ops.params.epsilon,
            "a": ops.params.a,
            "T": ops.params.t_final,
            "delta": cfg.penalty_delta,
            "cost_quotient": self.cost_quotient,
            "terminal_residual": self.terminal_residual,
            "iterations": self.cg_iterations,
        })
    }
}

/// One application of the observability Gramian Λ = L L*: solve the adjoint
/// system backward from `phi_t`, take its duality-exact boundary
/// observation as a control, and run the forward system from zero initial
/// data with that control.  Symmetric positive semidefinite in the X inner
/// product: ⟨Λa, b⟩_X = (L*a, L*b)_{L²(0,T)}.
pub fn gramian_apply(
    ops: &DiscreteOperators,
    phi_t: &StateX,
    location: ControlLocation,
) -> Result<StateX> {
    let (trace, _) = adjoint_observation(ops, phi_t, location)?;
    let zero = StateX::zeros(ops.n_space());
    forward_final(ops, &zero, &Sources::boundary(&trace.samples, trace.location))
}

/// CG in the X inner product on (Λ + δI) x = rhs.  Returns the solution,
/// the per-iteration relative residual history, and the convergence flag.
fn cg_gramian(
    ops: &DiscreteOperators,
    rhs: &[f64],
    cfg: &HumConfig,
    location: ControlLocation,
) -> Result<(Vec<f64>, Vec<f64>, bool)> {
    let n = rhs.len();
    let rhs_norm = ops.inner_m(rhs, rhs).sqrt();
    if rhs_norm == 0.0 {
        return Ok((vec![0.0; n], vec![0.0], true));
    }
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut rr = ops.inner_m(&r, &r);
    let mut history = vec![1.0];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.cg_max_iter {
        let lambda_p = gramian_apply(ops, &StateX::from_raw(p.clone()), location)?;
        let ap: Vec<f64> = lambda_p
            .values()
            .iter()
            .zip(&p)
            .map(|(lp, pi)| lp + cfg.penalty_delta * pi)
            .collect();
        let p_ap = ops.inner_m(&p, &ap);
        if !(p_ap > 0.0) {
            // Λ + δI is positive definite; a nonpositive curvature can only
            // mean round-off at the bottom of the residual.  Stop here.
            break;
        }
        let alpha = rr / p_ap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        let rr_new = ops.inner_m(&r, &r);
        history.push(rr_new.sqrt() / rhs_norm);
        if rr_new.sqrt() <= cfg.cg_tol * rhs_norm {
            converged = true;
            break;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    let _ = iterations;
    Ok((x, history, converged))
}

/// Compute a penalized approximate null control for initial state `u0`.
///
/// Solves (Λ + δI) φ* = -S_T u0 by CG in the X inner product, reads the
/// control off the adjoint of φ*, and verifies the result with one
/// independent forward solve.
pub fn compute_control(
    ops: &DiscreteOperators,
    u0: &StateX,
    cfg: &HumConfig,
    location: ControlLocation,
) -> Result<HumResult> {
    cfg.validate()?;
    if u0.len() != ops.n_space() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} nodes, grid has {}",
            u0.len(),
            ops.n_space()
        )));
    }
    let free_final = forward_final(ops, u0, &Sources::none())?;
    let rhs: Vec<f64> = free_final.values().iter().map(|v| -v).collect();
    let (phi_star, residual_history, converged) = cg_gramian(ops, &rhs, cfg, location)?;
    let cg_iterations = residual_history.len() - 1;
    let adjoint_datum = StateX::from_raw(phi_star);
    let (control, _) = adjoint_observation(ops, &adjoint_datum, location)?;
    let controlled_final =
        forward_final(ops, u0, &Sources::boundary(&control.samples, control.location))?;
    let terminal_residual = norm_x(&controlled_final, &ops.params)?;
    let control_norm = l2_time_norm(&control.samples, ops.params.t_final)?;
    let u0_norm = norm_x(u0, &ops.params)?;
    let cost_quotient = if u0_norm > 0.0 { control_norm / u0_norm } else { 0.0 };
    Ok(HumResult {
        control,
        adjoint_datum,
        terminal_residual,
        control_norm,
        cost_quotient,
        cg_iterations,
        converged,
        residual_history,
    })
}

/// Worst cost quotient over a battery of initial states; an upper estimate
/// of the control cost at these parameters.  Battery members run in
/// parallel.
pub fn cost_upper_estimate(
    ops: &DiscreteOperators,
    cfg: &HumConfig,
    location: ControlLocation,
    battery: &[StateX],
) -> Result<f64> {
    if battery.is_empty() {
        return Err(Error::InvalidParameter("battery must be nonempty".to_string()));
    }
    for (i, member) in battery.iter().enumerate() {
        if norm_x(member, &ops.params)? == 0.0 {
            return Err(Error::InvalidParameter(format!("battery member {i} is identically zero")));
        }
    }
    let quotients: Result<Vec<f64>> = battery
        .par_iter()
        .map(|u0| compute_control(ops, u0, cfg, location).map(|r| r.cost_quotient))
        .collect();
    Ok(quotients?.into_iter().fold(0.0, f64::max))
}

fn smooth_bump(x: f64, center: f64, halfwidth: f64) -> f64 {
    let r = (x - center) / halfwidth;
    if r.abs() < 1.0 {
        (-1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

/// The fixed initial-state battery (version [`BATTERY_VERSION`]): eight
/// smooth bumps of varying width and position, then four low-frequency
/// oscillatory profiles.
pub fn default_battery(grid: &GridSpec) -> Vec<StateX> {
    let pi = std::f64::consts::PI;
    let bumps: [(f64, f64); 8] = [
        (-0.75, 0.15),
        (-0.5, 0.15),
        (-0.25, 0.15),
        (-0.5, 0.35),
        (-0.3, 0.25),
        (-0.7, 0.25),
        (-0.5, 0.08),
        (-0.6, 0.4),
    ];
    let mut battery: Vec<StateX> = bumps
        .iter()
        .map(|&(c, w)| StateX::from_fn(grid, |x| smooth_bump(x, c, w)))
        .collect();
    battery.push(StateX::from_fn(grid, |x| (pi * (x + 1.0)).sin()));
    battery.push(StateX::from_fn(grid, |x| (2.0 * pi * (x + 1.0)).sin()));
    battery.push(StateX::from_fn(grid, |x| (pi * (x + 1.0)).cos()));
    battery.push(StateX::from_fn(grid, |x| (2.0 * pi * (x + 1.0)).cos()));
    battery
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::assemble;
    use crate::types::ModelParams;

    fn setup(eps: f64, a: f64, t: f64, n_space: usize, n_time: usize) -> DiscreteOperators {
        let p = ModelParams::new(eps, a, t).unwrap();
        let g = GridSpec::new(n_space, n_time, 0.5).unwrap();
        assemble(&p, &g).unwrap()
    }

    /// Small deterministic RNG so tests need no seed plumbing.
    struct XorShift(u64);
    impl XorShift {
        fn next_f64(&mut self) -> f64 {
            self.0 ^= self.0 << 13;
            self.0 ^= self.0 >> 7;
            self.0 ^= self.0 << 17;
            (self.0 >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        }
    }

    #[test]
    fn gramian_of_zero_is_zero() {
        let ops = setup(0.1, 0.0, 1.0, 31, 20);
        let out = gramian_apply(&ops, &StateX::zeros(31), ControlLocation::Gamma0).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gramian_is_symmetric_and_nonnegative() {
        let ops = setup(0.12, 0.5, 0.7, 31, 25);
        let mut rng = XorShift(0x9e3779b97f4a7c15);
        for _ in 0..4 {
            let a = StateX::from_raw((0..31).map(|_| rng.next_f64()).collect());
            let b = StateX::from_raw((0..31).map(|_| rng.next_f64()).collect());
            let la = gramian_apply(&ops, &a, ControlLocation::Gamma0).unwrap();
            let lb = gramian_apply(&ops, &b, ControlLocation::Gamma0).unwrap();
            let lab = ops.inner_m(la.values(), b.values());
            let alb = ops.inner_m(a.values(), lb.values());
            let scale = ops
                .norm_m(a.values())
                .max(ops.norm_m(b.values()))
                .max(ops.norm_m(la.values()))
                .max(1.0);
            assert!(
                (lab - alb).abs() <= 1e-10 * scale,
                "asymmetry {} vs scale {scale}",
                (lab - alb).abs()
            );
            let laa = ops.inner_m(la.values(), a.values());
            assert!(laa >= -1e-12 * scale * scale, "negative quadratic form: {laa}");
            // Duality oracle: ⟨Λa, a⟩ equals the squared L²(0,T) norm of the
            // boundary observation of a.
            let (trace, _) = adjoint_observation(&ops, &a, ControlLocation::Gamma0).unwrap();
            let obs_sq =
                l2_time_norm(&trace.samples, ops.params.t_final).unwrap().powi(2);
            assert!(
                (laa - obs_sq).abs() <= 1e-10 * obs_sq.max(1e-30),
                "quadratic form {laa} vs observation energy {obs_sq}"
            );
        }
    }

    #[test]
    fn zero_initial_state_yields_zero_control() {
        let ops = setup(0.1, 0.0, 1.0, 31, 20);
        let res = compute_control(
            &ops,
            &StateX::zeros(31),
            &HumConfig::default(),
            ControlLocation::Gamma0,
        )
        .unwrap();
        assert!(res.control.samples.iter().all(|&v| v == 0.0));
        assert_eq!(res.terminal_residual, 0.0);
        assert_eq!(res.cost_quotient, 0.0);
        assert!(res.converged);
    }

    #[test]
    fn terminal_state_matches_penalty_prediction() {
        // u(T) = -δ φ* up to the CG residual, so the verification norm must
        // sit within the solver tolerance of δ‖φ*‖.
        let ops = setup(0.1, 0.0, 1.0, 51, 40);
        let g = ops.grid;
        let u0 = StateX::from_fn(&g, |x| smooth_bump(x, -0.5, 0.3));
        let cfg = HumConfig { penalty_delta: 1e-6, cg_tol: 1e-11, cg_max_iter: 4000 };
        let res = compute_control(&ops, &u0, &cfg, ControlLocation::Gamma0).unwrap();
        assert!(res.converged, "CG did not converge: history {:?}", res.residual_history.last());
        let predicted: Vec<f64> =
            res.adjoint_datum.values().iter().map(|v| -cfg.penalty_delta * v).collect();
        let free_final = forward_final(&ops, &u0, &Sources::none()).unwrap();
        let rhs_norm = ops.norm_m(free_final.values());
        let controlled =
            forward_final(&ops, &u0, &Sources::boundary(&res.control.samples, ControlLocation::Gamma0))
                .unwrap();
        let gap: Vec<f64> =
            controlled.values().iter().zip(&predicted).map(|(u, p)| u - p).collect();
        assert!(
            ops.norm_m(&gap) <= 5.0 * cfg.cg_tol * rhs_norm + 1e-14,
            "closure gap {} vs tolerance {}",
            ops.norm_m(&gap),
            cfg.cg_tol * rhs_norm
        );
    }

    #[test]
    fn residual_scales_like_sqrt_delta() {
        // Control from the inflow end: there the penalized-HUM energy is
        // stable in δ and the terminal residual follows the √δ law, so each
        // 4x penalty reduction halves the residual.  (From the outflow end
        // the δ-scan crosses the Gramian spectrum much more slowly and the
        // per-4x ratio stays below 1.6 over many decades.)
        let ops = setup(0.1, 0.0, 2.0, 51, 100);
        let g = ops.grid;
        let u0 = StateX::from_fn(&g, |x| smooth_bump(x, -0.5, 0.3));
        let run = |delta: f64| -> f64 {
            let cfg = HumConfig { penalty_delta: delta, cg_tol: 1e-11, cg_max_iter: 4000 };
            let res = compute_control(&ops, &u0, &cfg, ControlLocation::Gamma1).unwrap();
            assert!(res.converged);
            res.terminal_residual
        };
        let residuals = [run(1e-5), run(2.5e-6), run(6.25e-7)];
        for pair in residuals.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!(
                (1.6..=2.4).contains(&ratio),
                "residual ratio per 4x penalty reduction: {ratio} ({} / {})",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn cg_residual_decreases_over_five_iteration_windows() {
        // CG minimizes the energy norm of the error; the residual itself
        // may spike between iterations.  In the moderately penalized regime
        // the spikes stay shorter than five iterations.  (For δ ≲ 1e-6 the
        // Gramian conditioning lets single-iteration residual excursions of
        // 10x and more appear — normal CG behavior, which is why the window
        // is asserted here and not at the acceptance penalty.)
        let ops = setup(0.1, 0.0, 1.0, 51, 40);
        let g = ops.grid;
        let u0 = StateX::from_fn(&g, |x| smooth_bump(x, -0.4, 0.25) + 0.3 * (x * 7.0).sin());
        let cfg = HumConfig { penalty_delta: 1e-4, cg_tol: 1e-10, cg_max_iter: 2000 };
        let res = compute_control(&ops, &u0, &cfg, ControlLocation::Gamma0).unwrap();
        let h = &res.residual_history;
        assert!(h.len() >= 6, "history too short to exercise the window: {}", h.len());
        for i in 5..h.len() {
            assert!(
                h[i] < h[i - 5],
                "residual failed to decrease over window ending at {i}: {} vs {}",
                h[i],
                h[i - 5]
            );
        }
    }

    #[test]
    fn battery_estimate_is_a_max_and_monotone() {
        let ops = setup(0.15, 0.0, 0.5, 31, 20);
        let g = ops.grid;
        let cfg = HumConfig { penalty_delta: 1e-6, cg_tol: 1e-9, cg_max_iter: 1000 };
        let battery = default_battery(&g);
        assert_eq!(battery.len(), 12);
        let single = cost_upper_estimate(&ops, &cfg, ControlLocation::Gamma0, &battery[..1]).unwrap();
        let direct = compute_control(&ops, &battery[0], &cfg, ControlLocation::Gamma0)
            .unwrap()
            .cost_quotient;
        assert!((single - direct).abs() <= 1e-12 * direct.max(1.0));
        let half = cost_upper_estimate(&ops, &cfg, ControlLocation::Gamma0, &battery[..6]).unwrap();
        let full = cost_upper_estimate(&ops, &cfg, ControlLocation::Gamma0, &battery).unwrap();
        assert!(full >= half, "adding battery members decreased the estimate: {half} -> {full}");
    }

    #[test]
    fn rejects_bad_config_and_empty_battery() {
        let ops = setup(0.1, 0.0, 1.0, 31, 20);
        let u0 = StateX::from_fn(&ops.grid, |x| smooth_bump(x, -0.5, 0.3));
        let bad = HumConfig { penalty_delta: 0.0, ..HumConfig::default() };
        assert!(compute_control(&ops, &u0, &bad, ControlLocation::Gamma0).is_err());
        let cfg = HumConfig::default();
        assert!(cost_upper_estimate(&ops, &cfg, ControlLocation::Gamma0, &[]).is_err());
        assert!(
            cost_upper_estimate(&ops, &cfg, ControlLocation::Gamma0, &[StateX::zeros(31)]).is_err()
        );
    }
}
