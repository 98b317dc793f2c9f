//! Shared vocabulary types: model parameters, space-time grids, nodal
//! states, boundary control signals, and the norms they live in.
//!
//! The state space is X = L²(-1, 0) ⊕ ℝ² with
//!
//!   ⟨u, w⟩_X = ∫_{-1}^{0} u w dx + ε (u(0) w(0) + u(-1) w(-1)),
//!
//! i.e. interior L² pairing plus ε-weighted boundary products that make the
//! dynamic boundary conditions variational.  Nodal states are piecewise
//! linear over a uniform grid on [-1, 0]; the interior pairing is evaluated
//! exactly on that space (element mass h/6 [2 1; 1 2]), which is what the
//! Galerkin mass matrix assembles, so measured norms and the semigroup's
//! contraction structure agree to round-off.
//!
//! Controls are scalar time series sampled at the time nodes of a run and
//! measured in L²(0, T) by the trapezoidal rule.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Physical parameters of the model on the unit interval (-1, 0).
///
/// `epsilon` is the viscosity, `a` a nonnegative zero-order coefficient
/// (transverse Fourier modes reduce to such systems with a = ε|ξ|²), and
/// `t_final` the control horizon T.  The domain length is fixed at 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    pub epsilon: f64,
    pub a: f64,
    pub t_final: f64,
}

impl ModelParams {
    /// Domain length; the geometry is normalized once and for all.
    pub const LENGTH: f64 = 1.0;

    pub fn new(epsilon: f64, a: f64, t_final: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::InvalidParameter(format!("a must be nonnegative, got {a}")));
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::InvalidParameter(format!("t_final must be positive, got {t_final}")));
        }
        Ok(ModelParams { epsilon, a, t_final })
    }
}

/// Space-time discretization: `n_space` nodes on [-1, 0], `n_time` steps on
/// [0, T], and the θ of the one-step scheme (1/2 = Crank-Nicolson, 1 = fully
/// implicit).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub n_space: usize,
    pub n_time: usize,
    pub theta: f64,
}

impl GridSpec {
    pub fn new(n_space: usize, n_time: usize, theta: f64) -> Result<Self> {
        if n_space < 3 {
            return Err(Error::InvalidParameter(format!("n_space must be >= 3, got {n_space}")));
        }
        if n_time < 2 {
            return Err(Error::InvalidParameter(format!("n_time must be >= 2, got {n_time}")));
        }
        if !(0.5..=1.0).contains(&theta) {
            return Err(Error::InvalidParameter(format!("theta must lie in [1/2, 1], got {theta}")));
        }
        Ok(GridSpec { n_space, n_time, theta })
    }

    /// Mesh width h = 1 / (n_space - 1).
    pub fn h(&self) -> f64 {
        ModelParams::LENGTH / (self.n_space - 1) as f64
    }

    /// Time step Δt = T / n_time.
    pub fn dt(&self, p: &ModelParams) -> f64 {
        p.t_final / self.n_time as f64
    }

    /// Node abscissae x_i = -1 + i h, i = 0..n_space.
    pub fn nodes(&self) -> Vec<f64> {
        let h = self.h();
        (0..self.n_space).map(|i| -1.0 + i as f64 * h).collect()
    }

    /// Time nodes t_k = k Δt, k = 0..=n_time.
    pub fn times(&self, p: &ModelParams) -> Vec<f64> {
        let dt = self.dt(p);
        (0..=self.n_time).map(|k| k as f64 * dt).collect()
    }

    /// Advisory checks that do not forbid a run.
    ///
    /// The mesh Péclet condition h ≤ ε keeps the advection term resolved;
    /// violating it produces node-to-node oscillations near the outflow
    /// boundary but is sometimes useful for quick smoke runs, so it is a
    /// warning rather than an error.
    pub fn warnings(&self, p: &ModelParams) -> Vec<String> {
        let mut out = Vec::new();
        if self.h() > p.epsilon {
            out.push(format!(
                "mesh Peclet condition violated: h = {:.3e} > epsilon = {:.3e}; expect boundary-layer oscillations",
                self.h(),
                p.epsilon
            ));
        }
        out
    }
}

/// Where a boundary control acts: Γ₀ is the endpoint x = 0, Γ₁ is x = -1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ControlLocation {
    Gamma0,
    Gamma1,
}

impl ControlLocation {
    /// Node index of the controlled endpoint on an `n_space`-node grid.
    pub fn node_index(&self, n_space: usize) -> usize {
        match self {
            ControlLocation::Gamma0 => n_space - 1,
            ControlLocation::Gamma1 => 0,
        }
    }
}

/// Nodal state over the spatial grid, including its two boundary values.
#[derive(Clone, Debug, PartialEq)]
pub struct StateX {
    values: Vec<f64>,
}

impl StateX {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::DimensionMismatch(format!(
                "state needs at least 3 nodes, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite state entry {v}")));
        }
        Ok(StateX { values })
    }

    /// Construct without the finiteness scan; used by solvers whose output
    /// is checked once per run.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        StateX { values }
    }

    /// Sample a function at the grid nodes.
    pub fn from_fn(grid: &GridSpec, f: impl Fn(f64) -> f64) -> Self {
        StateX { values: grid.nodes().iter().map(|&x| f(x)).collect() }
    }

    pub fn zeros(n_space: usize) -> Self {
        StateX { values: vec![0.0; n_space] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Boundary value at x = 0 (last node).
    pub fn at_zero(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Boundary value at x = -1 (first node).
    pub fn at_minus_one(&self) -> f64 {
        self.values[0]
    }

    /// Write `x,value` rows.
    pub fn to_csv(&self, grid: &GridSpec) -> String {
        let mut s = String::from("x,value\n");
        for (x, v) in grid.nodes().iter().zip(&self.values) {
            let _ = writeln!(s, "{x:.17e},{v:.17e}");
        }
        s
    }

    /// Parse `x,value` rows written by [`StateX::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let values = parse_two_column_csv(text, "x", "value")?;
        StateX::new(values)
    }
}

/// X inner product of two nodal states.
///
/// The interior pairing integrates the piecewise-linear interpolants
/// exactly; the two boundary products carry the ε weight.  Exactness on the
/// discrete space is what lets duality and contraction checks hold at the
/// 1e-10 level instead of drifting at quadrature order.
pub fn inner_x(u: &StateX, w: &StateX, p: &ModelParams) -> Result<f64> {
    if u.len() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "inner_x: state lengths {} and {} differ",
            u.len(),
            w.len()
        )));
    }
    let n = u.len();
    let h = ModelParams::LENGTH / (n - 1) as f64;
    let uv = u.values();
    let wv = w.values();
    let mut interior = 0.0;
    for e in 0..n - 1 {
        // Element mass h/6 [2 1; 1 2] on (x_e, x_{e+1}).
        interior += h / 6.0
            * (2.0 * uv[e] * wv[e] + uv[e] * wv[e + 1] + uv[e + 1] * wv[e] + 2.0 * uv[e + 1] * wv[e + 1]);
    }
    Ok(interior + p.epsilon * (uv[n - 1] * wv[n - 1] + uv[0] * wv[0]))
}

/// X norm, i.e. sqrt of [`inner_x`] of a state with itself.
pub fn norm_x(u: &StateX, p: &ModelParams) -> Result<f64> {
    Ok(inner_x(u, u, p)?.max(0.0).sqrt())
}

/// Plain interior L²(-1, 0) pairing (no boundary weights), exact on the
/// piecewise-linear space.
pub fn inner_l2(u: &StateX, w: &StateX) -> Result<f64> {
    if u.len() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "inner_l2: state lengths {} and {} differ",
            u.len(),
            w.len()
        )));
    }
    let n = u.len();
    let h = ModelParams::LENGTH / (n - 1) as f64;
    let uv = u.values();
    let wv = w.values();
    let mut acc = 0.0;
    for e in 0..n - 1 {
        acc += h / 6.0
            * (2.0 * uv[e] * wv[e] + uv[e] * wv[e + 1] + uv[e + 1] * wv[e] + 2.0 * uv[e + 1] * wv[e + 1]);
    }
    Ok(acc)
}

/// Boundary control: one sample per time node, acting at `location`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSignal {
    pub samples: Vec<f64>,
    pub location: ControlLocation,
}

impl ControlSignal {
    pub fn new(samples: Vec<f64>, location: ControlLocation) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::DimensionMismatch(format!(
                "control needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if let Some(v) = samples.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite control sample {v}")));
        }
        Ok(ControlSignal { samples, location })
    }

    pub fn zeros(n_time: usize, location: ControlLocation) -> Self {
        ControlSignal { samples: vec![0.0; n_time + 1], location }
    }

    /// Write `t,value` rows.
    pub fn to_csv(&self, t_final: f64) -> String {
        let dt = t_final / (self.samples.len() - 1) as f64;
        let mut s = String::from("t,value\n");
        for (k, v) in self.samples.iter().enumerate() {
            let _ = writeln!(s, "{:.17e},{v:.17e}", k as f64 * dt);
        }
        s
    }

    pub fn from_csv(text: &str, location: ControlLocation) -> Result<Self> {
        let samples = parse_two_column_csv(text, "t", "value")?;
        ControlSignal::new(samples, location)
    }
}

/// L²(0, T) norm of a time series by the trapezoidal rule.
pub fn l2_time_norm(samples: &[f64], t_final: f64) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::DimensionMismatch(format!(
            "l2_time_norm needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::InvalidParameter(format!("t_final must be positive, got {t_final}")));
    }
    let n = samples.len();
    let dt = t_final / (n - 1) as f64;
    let mut acc = 0.5 * (samples[0] * samples[0] + samples[n - 1] * samples[n - 1]);
    for v in &samples[1..n - 1] {
        acc += v * v;
    }
    Ok((acc * dt).max(0.0).sqrt())
}

/// Full space-time history of a run: one state per time node plus the two
/// boundary traces (redundant with the states, kept for O(1) access).
#[derive(Clone, Debug)]
pub struct Trajectory {
    states: Vec<StateX>,
    trace_at_zero: Vec<f64>,
    trace_at_minus_one: Vec<f64>,
}

impl Trajectory {
    pub fn from_states(states: Vec<StateX>) -> Self {
        let trace_at_zero = states.iter().map(|s| s.at_zero()).collect();
        let trace_at_minus_one = states.iter().map(|s| s.at_minus_one()).collect();
        Trajectory { states, trace_at_zero, trace_at_minus_one }
    }

    pub fn states(&self) -> &[StateX] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &StateX {
        &self.states[k]
    }

    pub fn final_state(&self) -> &StateX {
        self.states.last().unwrap()
    }

    pub fn trace_at_zero(&self) -> &[f64] {
        &self.trace_at_zero
    }

    pub fn trace_at_minus_one(&self) -> &[f64] {
        &self.trace_at_minus_one
    }

    pub fn n_steps(&self) -> usize {
        self.states.len() - 1
    }

    /// Long-format `t,x,value` rows, keeping every `stride`-th time node
    /// (the final node is always kept).
    pub fn to_csv(&self, p: &ModelParams, grid: &GridSpec, stride: usize) -> String {
        let stride = stride.max(1);
        let times = grid.times(p);
        let nodes = grid.nodes();
        let mut s = String::from("t,x,value\n");
        for (k, state) in self.states.iter().enumerate() {
            if k % stride != 0 && k != self.states.len() - 1 {
                continue;
            }
            for (x, v) in nodes.iter().zip(state.values()) {
                let _ = writeln!(s, "{:.12e},{x:.12e},{v:.17e}", times[k]);
            }
        }
        s
    }
}

fn parse_two_column_csv(text: &str, col_a: &str, col_b: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("empty CSV".to_string()))?;
    let expect = format!("{col_a},{col_b}");
    if header.trim() != expect {
        return Err(Error::Config(format!("expected header '{expect}', got '{header}'")));
    }
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let _first = parts
            .next()
            .ok_or_else(|| Error::Config(format!("row {idx}: missing first column")))?;
        let second = parts
            .next()
            .ok_or_else(|| Error::Config(format!("row {idx}: missing second column")))?;
        let v: f64 = second
            .trim()
            .parse()
            .map_err(|e| Error::Config(format!("row {idx}: bad float: {e}")))?;
        out.push(v);
    }
    Ok(out)
}

/// Write a string to a file, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(epsilon: f64) -> ModelParams {
        ModelParams::new(epsilon, 0.0, 1.0).unwrap()
    }

    #[test]
    fn inner_x_of_constants_is_exact() {
        // u = w = 1: interior integral 1, boundary 2ε.
        let grid = GridSpec::new(201, 10, 0.5).unwrap();
        let u = StateX::from_fn(&grid, |_| 1.0);
        let p = params(0.1);
        let got = inner_x(&u, &u, &p).unwrap();
        assert!((got - 1.2).abs() < 1e-14, "got {got}");
    }

    #[test]
    fn inner_x_of_linear_function_matches_analytic_integral() {
        // u = w = x: ∫_{-1}^0 x² dx = 1/3 (exact on the P1 space since x is
        // itself piecewise linear); boundary adds ε (0 + 1).
        let grid = GridSpec::new(201, 10, 0.5).unwrap();
        let u = StateX::from_fn(&grid, |x| x);
        let p = params(0.1);
        let got = inner_x(&u, &u, &p).unwrap();
        assert!((got - (1.0 / 3.0 + 0.1)).abs() < 1e-13, "got {got}");
    }

    #[test]
    fn norm_x_of_unit_constant() {
        let grid = GridSpec::new(101, 10, 0.5).unwrap();
        let u = StateX::from_fn(&grid, |_| 1.0);
        let p = params(0.25);
        let got = norm_x(&u, &p).unwrap();
        assert!((got - 1.5_f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn inner_x_rejects_length_mismatch() {
        let u = StateX::new(vec![1.0; 5]).unwrap();
        let w = StateX::new(vec![1.0; 7]).unwrap();
        assert!(inner_x(&u, &w, &params(0.1)).is_err());
    }

    #[test]
    fn l2_time_norm_of_constant_and_ramp() {
        // v ≡ 1 on [0, 4] → 2.  Trapezoid is exact for constants.
        let v = vec![1.0; 1001];
        assert!((l2_time_norm(&v, 4.0).unwrap() - 2.0).abs() < 1e-13);
        // v = t on [0, 1] → sqrt(1/3) within O(Δt²).
        let n = 1000;
        let samples: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let got = l2_time_norm(&samples, 1.0).unwrap();
        assert!((got - (1.0f64 / 3.0).sqrt()).abs() < 1e-6, "got {got}");
    }

    #[test]
    fn l2_time_norm_rejects_single_sample() {
        assert!(l2_time_norm(&[1.0], 1.0).is_err());
    }

    #[test]
    fn state_csv_round_trips() {
        let grid = GridSpec::new(31, 10, 0.5).unwrap();
        let u = StateX::from_fn(&grid, |x| (3.0 * x).sin() * (-x).exp());
        let text = u.to_csv(&grid);
        let back = StateX::from_csv(&text).unwrap();
        for (a, b) in u.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn control_csv_round_trips() {
        let samples: Vec<f64> = (0..=40).map(|k| (k as f64 * 0.37).cos()).collect();
        let v = ControlSignal::new(samples, ControlLocation::Gamma0).unwrap();
        let text = v.to_csv(2.0);
        let back = ControlSignal::from_csv(&text, ControlLocation::Gamma0).unwrap();
        for (a, b) in v.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn non_finite_entries_are_rejected() {
        assert!(StateX::new(vec![0.0, f64::NAN, 1.0]).is_err());
        assert!(ControlSignal::new(vec![0.0, f64::INFINITY], ControlLocation::Gamma0).is_err());
        assert!(ModelParams::new(-0.1, 0.0, 1.0).is_err());
        assert!(ModelParams::new(0.1, -1.0, 1.0).is_err());
        assert!(GridSpec::new(2, 10, 0.5).is_err());
        assert!(GridSpec::new(10, 10, 0.3).is_err());
    }

    #[test]
    fn peclet_warning_fires_only_when_underresolved() {
        let p = params(0.01);
        let coarse = GridSpec::new(21, 10, 0.5).unwrap(); // h = 0.05 > ε
        let fine = GridSpec::new(201, 10, 0.5).unwrap(); // h = 0.005 < ε
        assert_eq!(coarse.warnings(&p).len(), 1);
        assert!(fine.warnings(&p).is_empty());
    }

    proptest! {
        #[test]
        fn inner_x_is_symmetric_and_bilinear(
            seed in 0u64..1000,
            scale in -3.0f64..3.0,
        ) {
            let n = 17;
            let mut s = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
            let mut next = move || {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                (s as f64 / u64::MAX as f64) * 2.0 - 1.0
            };
            let u = StateX::new((0..n).map(|_| next()).collect()).unwrap();
            let w = StateX::new((0..n).map(|_| next()).collect()).unwrap();
            let p = params(0.15);
            let uw = inner_x(&u, &w, &p).unwrap();
            let wu = inner_x(&w, &u, &p).unwrap();
            prop_assert!((uw - wu).abs() <= 1e-12 * uw.abs().max(1.0));
            // Scaling in the first slot.
            let su = StateX::new(u.values().iter().map(|v| scale * v).collect()).unwrap();
            let suw = inner_x(&su, &w, &p).unwrap();
            prop_assert!((suw - scale * uw).abs() <= 1e-11 * suw.abs().max(1.0));
            // Cauchy-Schwarz with a round-off allowance.
            let nu = norm_x(&u, &p).unwrap();
            let nw = norm_x(&w, &p).unwrap();
            prop_assert!(uw.abs() <= nu * nw * (1.0 + 1e-12) + 1e-14);
        }
    }
}
