//! Carleman weight functions and numerical evaluation of the weighted
//! observability inequality.
//!
//! The weights are built from η(x) = 2 + x (control at x = 0) or
//! η(x) = 1 - x (control at x = -1), both mapping [-1, 0] into [1, 2]:
//!
//!   α(t,x) = (e³ - e^{η(x)}) / (t(T-t)),    φ(t,x) = e^{η(x)} / (t(T-t)),
//!
//! positive on (0,T) and blowing up at both time endpoints, so that
//! e^{-2sα} crushes every integrand there.  The inequality under test
//! bounds the weighted interior and boundary energy of an adjoint solution
//! by the weighted observation at the controlled endpoint:
//!
//!   s³ ∬ φ³ e^{-2sα} |w|² + s³ ∫_σ φ³ e^{-2sα} |w|²
//!       ≤ C s⁷ ∫_{σ₀} φ⁷ e^{-4sα + 2sα(·,x₁)} |w|²,
//!
//! for all s above a threshold s₀·(ε⁻¹(T+T²) + √a ε^{-1/2} T²), where σ is
//! the full lateral boundary, σ₀ the controlled endpoint, and x₁ the other
//! endpoint.  The constants C and s₀ exist but are not specified, so the
//! lab reports the ratio of the two sides over s-sweeps and test families
//! and asserts boundedness, never a constant.
//!
//! At realistic parameters the exponents reach thousands, far beyond f64
//! range, so every integral is accumulated in the log domain (streaming
//! log-sum-exp) and reports carry both linear values (which may underflow
//! to zero harmlessly) and their logarithms.

use crate::error::{Error, Result};
use crate::operators::DiscreteOperators;
use crate::types::{GridSpec, ModelParams, StateX};
use crate::adjoint::AdjointRun;

/// Version tag for [`carleman_family`], recorded in sweep manifests.
pub const CARLEMAN_FAMILY_VERSION: &str = "bumps4-osc2-v1";

/// Which endpoint the observation weight concentrates on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum WeightVariant {
    /// η(x) = 2 + x; observation at x = 0.
    Gamma0Control,
    /// η(x) = 1 - x; observation at x = -1.
    Gamma1Control,
}

/// Carleman weight family at a fixed coupling strength s and horizon T.
#[derive(Clone, Copy, Debug)]
pub struct CarlemanWeights {
    pub variant: WeightVariant,
    /// Coupling strength s > 0.
    pub s: f64,
    /// Time horizon T > 0.
    pub t_final: f64,
}

impl CarlemanWeights {
    pub fn new(variant: WeightVariant, s: f64, t_final: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidParameter(format!("s must be positive and finite, got {s}")));
        }
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "t_final must be positive and finite, got {t_final}"
            )));
        }
        Ok(CarlemanWeights { variant, s, t_final })
    }

    /// Spatial profile η; ranges over [1, 2] on [-1, 0] for both variants.
    pub fn eta(&self, x: f64) -> f64 {
        match self.variant {
            WeightVariant::Gamma0Control => 2.0 + x,
            WeightVariant::Gamma1Control => 1.0 - x,
        }
    }

    /// Smaller weight constant e³ - e² (the minimum of e³ - e^η).
    pub fn m_const() -> f64 {
        3.0_f64.exp() - 2.0_f64.exp()
    }

    /// Larger weight constant e³ - e (the maximum of e³ - e^η).
    pub fn big_m_const() -> f64 {
        3.0_f64.exp() - 1.0_f64.exp()
    }

    fn time_factor(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t < self.t_final) {
            return Err(Error::Domain(format!(
                "weights defined for 0 < t < {}, got t = {t}",
                self.t_final
            )));
        }
        Ok(t * (self.t_final - t))
    }

    /// α(t,x) = (e³ - e^{η(x)})/(t(T-t)); positive on (0,T).
    pub fn alpha(&self, t: f64, x: f64) -> Result<f64> {
        Ok((3.0_f64.exp() - self.eta(x).exp()) / self.time_factor(t)?)
    }

    /// φ(t,x) = e^{η(x)}/(t(T-t)); positive on (0,T).
    pub fn phi(&self, t: f64, x: f64) -> Result<f64> {
        Ok(self.eta(x).exp() / self.time_factor(t)?)
    }

    /// Analytic ∂ₓα: -φ for the Gamma0 variant, +φ for Gamma1
    /// (∂ₓ e^η = ±e^η depending on the sign of η').
    pub fn alpha_x(&self, t: f64, x: f64) -> Result<f64> {
        let phi = self.phi(t, x)?;
        Ok(match self.variant {
            WeightVariant::Gamma0Control => -phi,
            WeightVariant::Gamma1Control => phi,
        })
    }

    /// Analytic ∂ₓₓα = -φ for both variants (η is affine with |η'| = 1).
    pub fn alpha_xx(&self, t: f64, x: f64) -> Result<f64> {
        Ok(-self.phi(t, x)?)
    }

    /// Analytic ∂ₜα = -(e³ - e^{η})(T - 2t)/(t(T-t))².
    pub fn alpha_t(&self, t: f64, x: f64) -> Result<f64> {
        let tf = self.time_factor(t)?;
        Ok(-(3.0_f64.exp() - self.eta(x).exp()) * (self.t_final - 2.0 * t) / (tf * tf))
    }
}

/// Evaluate (α, φ) at a point; requires 0 < t < T.
pub fn eval_weights(t: f64, x: f64, w: &CarlemanWeights) -> Result<(f64, f64)> {
    Ok((w.alpha(t, x)?, w.phi(t, x)?))
}

/// Coupling threshold s₀·(ε⁻¹(T + T²) + √a · ε^{-1/2} · T²) above which the
/// inequality is claimed.
pub fn s_min(p: &ModelParams, s0: f64) -> f64 {
    let t = p.t_final;
    s0 * ((t + t * t) / p.epsilon + p.a.sqrt() * p.epsilon.powf(-0.5) * t * t)
}

/// Both sides of the weighted inequality for one adjoint run.
#[derive(Clone, Copy, Debug)]
pub struct CarlemanReport {
    /// s³ ∬ φ³ e^{-2sα} |w|² over space-time (may underflow to 0).
    pub lhs_interior: f64,
    /// s³ ∫ φ³ e^{-2sα} |w|² over both lateral boundary points.
    pub lhs_boundary: f64,
    /// s⁷ ∫ φ⁷ e^{-4sα + 2sα(·, x₁)} |w|² at the observed endpoint.
    pub rhs: f64,
    /// (lhs_interior + lhs_boundary) / rhs, computed in the log domain.
    pub ratio: f64,
    /// Natural logs of the three integrals (-∞ where an integral is 0).
    pub log_lhs_interior: f64,
    pub log_lhs_boundary: f64,
    pub log_rhs: f64,
    /// log of ratio; always finite for non-degenerate runs.
    pub log_ratio: f64,
    /// The s the report was computed at.
    pub s_used: f64,
    /// s divided by the unscaled threshold (s_min with s₀ = 1).
    pub s_threshold_factor: f64,
    /// True when every integral vanished (identically zero solution).
    pub degenerate: bool,
}

/// Streaming log-sum-exp accumulator.
struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    fn new() -> Self {
        LogSum { max: f64::NEG_INFINITY, sum: 0.0 }
    }

    fn add(&mut self, log_term: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term <= self.max {
            self.sum += (log_term - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - log_term).exp() + 1.0;
            self.max = log_term;
        }
    }

    fn log_value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Evaluate both sides of the inequality on a computed adjoint run.
///
/// Space-time quadrature is trapezoidal; the first and last time slices
/// are excluded because the integrands extend continuously by zero there
/// (e^{-2sα} decays super-exponentially toward the time endpoints), so no
/// singular weight value is ever evaluated.
pub fn carleman_sides(
    ops: &DiscreteOperators,
    run: &AdjointRun,
    w: &CarlemanWeights,
) -> Result<CarlemanReport> {
    let g = &ops.grid;
    let p = &ops.params;
    let n = g.n_space;
    let nt = g.n_time;
    if run.trajectory.n_steps() != nt {
        return Err(Error::DimensionMismatch(format!(
            "adjoint run has {} steps, grid has {nt}",
            run.trajectory.n_steps()
        )));
    }
    if (w.t_final - p.t_final).abs() > 1e-12 * p.t_final {
        return Err(Error::InvalidParameter(format!(
            "weights built for T = {}, operators for T = {}",
            w.t_final, p.t_final
        )));
    }
    let h = g.h();
    let dt = g.dt(p);
    let (obs_node, other_node) = match w.variant {
        WeightVariant::Gamma0Control => (n - 1, 0),
        WeightVariant::Gamma1Control => (0, n - 1),
    };
    let x_of = |i: usize| -1.0 + i as f64 * h;

    let mut interior = LogSum::new();
    let mut boundary = LogSum::new();
    let mut observed = LogSum::new();
    for k in 1..nt {
        let t = k as f64 * dt;
        let state = run.trajectory.state(k).values();
        for i in 0..n {
            let v = state[i];
            if v == 0.0 {
                continue;
            }
            let x = x_of(i);
            let space_w = if i == 0 || i == n - 1 { 0.5 * h } else { h };
            let log_term = (dt * space_w).ln() + 3.0 * w.phi(t, x)?.ln()
                - 2.0 * w.s * w.alpha(t, x)?
                + 2.0 * v.abs().ln();
            interior.add(log_term);
        }
        for &i in &[0usize, n - 1] {
            let v = state[i];
            if v == 0.0 {
                continue;
            }
            let x = x_of(i);
            let log_term = dt.ln() + 3.0 * w.phi(t, x)?.ln() - 2.0 * w.s * w.alpha(t, x)?
                + 2.0 * v.abs().ln();
            boundary.add(log_term);
        }
        let v_obs = state[obs_node];
        if v_obs != 0.0 {
            let x_obs = x_of(obs_node);
            let x_other = x_of(other_node);
            let log_term = dt.ln() + 7.0 * w.phi(t, x_obs)?.ln()
                - 4.0 * w.s * w.alpha(t, x_obs)?
                + 2.0 * w.s * w.alpha(t, x_other)?
                + 2.0 * v_obs.abs().ln();
            observed.add(log_term);
        }
    }

    let log_s = w.s.ln();
    let log_lhs_interior = 3.0 * log_s + interior.log_value();
    let log_lhs_boundary = 3.0 * log_s + boundary.log_value();
    let log_rhs = 7.0 * log_s + observed.log_value();
    let log_lhs = log_add(log_lhs_interior, log_lhs_boundary);

    let degenerate = log_lhs == f64::NEG_INFINITY && log_rhs == f64::NEG_INFINITY;
    if log_rhs == f64::NEG_INFINITY && !degenerate {
        return Err(Error::Degenerate(
            "observation side vanished while the energy side did not".to_string(),
        ));
    }
    let log_ratio = if degenerate { f64::NEG_INFINITY } else { log_lhs - log_rhs };
    Ok(CarlemanReport {
        lhs_interior: log_lhs_interior.exp(),
        lhs_boundary: log_lhs_boundary.exp(),
        rhs: log_rhs.exp(),
        ratio: log_ratio.exp(),
        log_lhs_interior,
        log_lhs_boundary,
        log_rhs,
        log_ratio,
        s_used: w.s,
        s_threshold_factor: w.s / s_min(p, 1.0),
        degenerate,
    })
}

fn smooth_bump(x: f64, center: f64, halfwidth: f64) -> f64 {
    let r = (x - center) / halfwidth;
    if r.abs() < 1.0 {
        (-1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

/// The fixed family of terminal adjoint data used for inequality sweeps
/// (version [`CARLEMAN_FAMILY_VERSION`]): four bumps and two low-frequency
/// oscillations.
pub fn carleman_family(grid: &GridSpec) -> Vec<StateX> {
    let pi = std::f64::consts::PI;
    vec![
        StateX::from_fn(grid, |x| smooth_bump(x, -0.5, 0.3)),
        StateX::from_fn(grid, |x| smooth_bump(x, -0.3, 0.2)),
        StateX::from_fn(grid, |x| smooth_bump(x, -0.7, 0.2)),
        StateX::from_fn(grid, |x| smooth_bump(x, -0.5, 0.45)),
        StateX::from_fn(grid, |x| (pi * (x + 1.0)).sin()),
        StateX::from_fn(grid, |x| (2.0 * pi * (x + 1.0)).cos()),
    ]
}

/// Calibrate the threshold multiplier s₀ on a reference configuration: the
/// smallest candidate for which the worst ratio over the family is
/// nonincreasing along the s-sweep {1, 2, 4}·s_min(s₀) — i.e. raising s
/// further no longer worsens the inequality.
pub fn calibrate_s0(
    ops: &DiscreteOperators,
    family: &[(StateX, AdjointRun)],
    candidates: &[f64],
) -> Result<f64> {
    if family.is_empty() {
        return Err(Error::InvalidParameter("family must be nonempty".to_string()));
    }
    let mut sorted: Vec<f64> = candidates.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for &s0 in &sorted {
        if !(s0 > 0.0) {
            return Err(Error::InvalidParameter(format!("candidate s0 must be positive, got {s0}")));
        }
        let base = s_min(&ops.params, s0);
        let mut nonincreasing = true;
        'members: for (_, run) in family {
            let mut prev = f64::INFINITY;
            for &mult in &[1.0, 2.0, 4.0] {
                let w = CarlemanWeights::new(
                    WeightVariant::Gamma0Control,
                    mult * base,
                    ops.params.t_final,
                )?;
                let report = carleman_sides(ops, run, &w)?;
                if report.degenerate {
                    continue 'members;
                }
                if report.log_ratio > prev + 1e-12 {
                    nonincreasing = false;
                    break 'members;
                }
                prev = report.log_ratio;
            }
        }
        if nonincreasing {
            return Ok(s0);
        }
    }
    Err(Error::NoConvergence(
        "no candidate multiplier kept the ratio nonincreasing along the s-sweep".to_string(),
    ))
}
