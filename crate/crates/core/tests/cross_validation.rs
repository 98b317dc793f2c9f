//! Cross-validation suite: measurements that pin down behavior the
//! release gate exercises only at one operating point, plus structural
//! identities checked through entire solve pipelines rather than on
//! single matrices.

use advdiff::adjoint::solve_adjoint;
use advdiff::forward::{solve_forward, Sources};
use advdiff::hum::{compute_control, gramian_apply, HumConfig};
use advdiff::lower_bound::{witness_quotient, BumpSpec};
use advdiff::operators::assemble;
use advdiff::sweep::reference_datum;
use advdiff::types::{inner_x, norm_x, ControlLocation, GridSpec, ModelParams, StateX};
use rand::{Rng, SeedableRng};

/// The penalized Gramian Λ + δI is self-adjoint in the X-inner product:
/// each application is a full adjoint march followed by a full forward
/// march, so this closes only if the two pipelines are exact algebraic
/// transposes of each other end to end.
#[test]
fn gramian_is_self_adjoint_in_the_x_inner_product() {
    let p = ModelParams::new(0.1, 0.4, 1.0).unwrap();
    let g = GridSpec::new(61, 50, 0.5).unwrap();
    let ops = assemble(&p, &g).unwrap();
    let mut rng = rand::rngs::StdRng::seed_from_u64(11);
    for &location in &[ControlLocation::Gamma0, ControlLocation::Gamma1] {
        for _ in 0..5 {
            let phi = StateX::new((0..61).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let psi = StateX::new((0..61).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let l_phi = gramian_apply(&ops, &phi, location).unwrap();
            let l_psi = gramian_apply(&ops, &psi, location).unwrap();
            let left = inner_x(&l_phi, &psi, &p).unwrap();
            let right = inner_x(&phi, &l_psi, &p).unwrap();
            let scale = left.abs().max(right.abs()).max(1e-300);
            assert!(
                ((left - right) / scale).abs() <= 1e-11,
                "asymmetry {:.3e} at {location:?}",
                (left - right) / scale
            );
        }
    }
}

/// Outflow-observation penalty scaling: at the release gate's operating
/// point the inflow configuration already follows the asymptotic √δ law,
/// while the outflow Gramian's softer spectral tail makes the residual
/// ratio climb toward 2 from below as the penalty shrinks.  Pin that
/// transition: ratios well inside (1.2, 2.4), increasing, and still below
/// the 1.6 threshold at the first step.
#[test]
fn outflow_residual_scaling_transitions_slowly() {
    let p = ModelParams::new(0.1, 0.0, 4.0).unwrap();
    let g = GridSpec::new(201, 2000, 0.5).unwrap();
    let ops = assemble(&p, &g).unwrap();
    let u0 = reference_datum(&g);
    let mut residuals = Vec::new();
    for &delta in &[1e-8, 2.5e-9, 6.25e-10] {
        let cfg = HumConfig { penalty_delta: delta, cg_tol: 1e-11, cg_max_iter: 8000 };
        let r = compute_control(&ops, &u0, &cfg, ControlLocation::Gamma0).unwrap();
        assert!(r.converged, "CG must converge at delta = {delta}");
        residuals.push(r.terminal_residual);
    }
    let ratios: Vec<f64> = residuals.windows(2).map(|w| w[0] / w[1]).collect();
    assert!(
        ratios.iter().all(|r| (1.2..2.4).contains(r)),
        "ratios {ratios:?} left the measured transition window"
    );
    assert!(ratios[0] < ratios[1], "ratios {ratios:?} should climb toward 2");
    assert!(ratios[0] < 1.6, "first ratio {:.3} is expected below the asymptotic window", ratios[0]);
}

/// In-regime demonstration of the witness norm floor: at ε = 0.005 the
/// transported bump keeps more than half its X-norm through the horizon
/// (grid-converged value ≈ 0.533), so the floor of 0.5 — infeasible at
/// the release gate's viscosities — is genuinely attainable once
/// diffusion is weak enough, and the quotient there is astronomically
/// large, certifying cost blow-up.
#[test]
fn witness_norm_floor_holds_in_the_small_viscosity_regime() {
    let spec = BumpSpec::new(0.1, 0.5).unwrap();
    let p = ModelParams::new(0.005, 0.0, 0.5).unwrap();
    let g = GridSpec::new(641, 400, 0.5).unwrap();
    let w = witness_quotient(&spec, &p, &g).unwrap();
    assert!(
        (0.50..0.56).contains(&w.initial_norm),
        "initial norm {:.4} outside the grid-converged band [0.50, 0.56)",
        w.initial_norm
    );
    assert!(w.quotient > 1e6, "quotient {:.3e} should certify blow-up", w.quotient);
    assert!(!w.off_regime);
}

/// Backward-Euler (θ = 1) time stepping drops the scheme to first order;
/// the manufactured solution must show observed orders within a window
/// around 1 under dyadic refinement of dt at fixed, fine h.
#[test]
fn manufactured_solution_is_first_order_for_backward_euler() {
    let eps = 0.1;
    let a = 0.3;
    let p = ModelParams::new(eps, a, 1.0).unwrap();
    let mut errors = Vec::new();
    for &nt in &[40usize, 80, 160] {
        let g = GridSpec::new(641, nt, 1.0).unwrap();
        let ops = assemble(&p, &g).unwrap();
        let u0 = StateX::from_fn(&g, |x| x.cos());
        let f = move |t: f64, x: f64| (-t).exp() * ((a - 1.0 + eps) * x.cos() - x.sin());
        let g0: Vec<f64> = g.times(&p).iter().map(|t| -eps * (-t).exp()).collect();
        let g1: Vec<f64> = g
            .times(&p)
            .iter()
            .map(|t| (-t).exp() * ((1.0f64).cos() - eps * ((1.0f64).cos() + (1.0f64).sin())))
            .collect();
        let src = Sources { f: Some(&f), g0: Some(&g0), g1: Some(&g1) };
        let traj = solve_forward(&ops, &u0, &src).unwrap();
        let exact = StateX::from_fn(&g, |x| (-1.0f64).exp() * x.cos());
        let diff: Vec<f64> = traj
            .final_state()
            .values()
            .iter()
            .zip(exact.values())
            .map(|(u, e)| u - e)
            .collect();
        errors.push(norm_x(&StateX::new(diff).unwrap(), &p).unwrap());
    }
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(
            (0.85..1.25).contains(&order),
            "observed order {order:.3} not first-order (errors {errors:?})"
        );
    }
}

/// The adjoint's backward march from a zero terminal datum stays exactly
/// zero, and superposition holds through the full control pipeline: the
/// control computed for u0 + w0 equals the sum of the controls computed
/// separately, because every stage is linear.
#[test]
fn control_pipeline_is_linear_in_the_datum() {
    let p = ModelParams::new(0.1, 0.2, 1.0).unwrap();
    let g = GridSpec::new(101, 120, 0.5).unwrap();
    let ops = assemble(&p, &g).unwrap();

    let zero_run = solve_adjoint(&ops, &StateX::zeros(101), ControlLocation::Gamma0).unwrap();
    for k in 0..=g.n_time {
        assert_eq!(norm_x(zero_run.trajectory.state(k), &p).unwrap(), 0.0);
    }

    let cfg = HumConfig { penalty_delta: 1e-6, cg_tol: 1e-12, cg_max_iter: 3000 };
    let u0 = StateX::from_fn(&g, |x| {
        let r = (x + 0.5) / 0.25;
        if r.abs() < 1.0 { (-1.0 / (1.0 - r * r)).exp() } else { 0.0 }
    });
    let w0 = StateX::from_fn(&g, |x| (2.0 * std::f64::consts::PI * x).sin() * (x * (x + 1.0)));
    let combo =
        StateX::new(u0.values().iter().zip(w0.values()).map(|(u, w)| u + 0.7 * w).collect())
            .unwrap();
    let ru = compute_control(&ops, &u0, &cfg, ControlLocation::Gamma0).unwrap();
    let rw = compute_control(&ops, &w0, &cfg, ControlLocation::Gamma0).unwrap();
    let rc = compute_control(&ops, &combo, &cfg, ControlLocation::Gamma0).unwrap();
    let scale: f64 =
        rc.control.samples.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut worst: f64 = 0.0;
    for ((cu, cw), cc) in
        ru.control.samples.iter().zip(&rw.control.samples).zip(&rc.control.samples)
    {
        worst = worst.max((cc - (cu + 0.7 * cw)).abs() / scale);
    }
    // CG is iterative, so superposition holds to solver tolerance, not to
    // round-off; 1e-6 on a 1e-12-tol solve leaves ample headroom.
    assert!(worst <= 1e-6, "superposition defect {worst:.3e}");
}
