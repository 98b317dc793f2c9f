//! Parameter-sweep driver and persistence layer.
//!
//! Sweeps run one experiment over the cartesian product of its parameter
//! grids, fit the exponential cost laws where they apply, and write
//! deterministic outputs: one canonical CSV per experiment, a manifest
//! JSON recording the full resolved configuration and per-point status,
//! and optional hand-rolled SVG line charts.  Determinism is a contract —
//! rerunning an identical configuration must produce byte-identical CSVs —
//! so outputs carry no timestamps, floats are printed with fixed formats,
//! and all batteries and templates are versioned constants.
//!
//! The resolution policy ties the spatial grid to the viscosity: boundary
//! layers have width ~ε, so a run is refused (rather than silently
//! under-resolved) unless n_space ≥ max(201, ceil(4/ε)), and ε below 0.02
//! additionally requires an explicit override acknowledging the cost.

use crate::adjoint::solve_adjoint;
use crate::carleman::{
    calibrate_s0, carleman_family, carleman_sides, s_min, CarlemanWeights, WeightVariant,
    CARLEMAN_FAMILY_VERSION,
};
use crate::dissipation::{decay_ratio, fit_dissipation_rate, model_factor, DecaySample};
use crate::error::{Error, Result};
use crate::forward::{solve_forward, Sources};
use crate::fourier::{
    control_2d_csv, control_modes, decompose, recompose_and_verify, Grid2D,
};
use crate::hum::{
    compute_control, cost_upper_estimate, default_battery, HumConfig, BATTERY_VERSION,
};
use crate::lower_bound::{witness_csv, witness_quotient, BumpSpec};
use crate::operators::assemble;
use crate::types::{
    inner_l2, l2_time_norm, norm_x, ControlLocation, GridSpec, ModelParams, StateX,
};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::PathBuf;

/// Which lab a sweep drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Forward,
    Adjoint,
    Hum,
    CostSweep,
    Dissipation,
    Carleman,
    LowerBound,
    Fourier2D,
}

impl Experiment {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "forward" => Experiment::Forward,
            "adjoint" => Experiment::Adjoint,
            "hum" => Experiment::Hum,
            "cost_sweep" => Experiment::CostSweep,
            "dissipation" => Experiment::Dissipation,
            "carleman" => Experiment::Carleman,
            "lowerbound" => Experiment::LowerBound,
            "fourier2d" => Experiment::Fourier2D,
            other => {
                return Err(Error::Config(format!(
                    "unknown experiment '{other}' (expected forward, adjoint, hum, cost_sweep, \
                     dissipation, carleman, lowerbound or fourier2d)"
                )))
            }
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::Forward => "forward",
            Experiment::Adjoint => "adjoint",
            Experiment::Hum => "hum",
            Experiment::CostSweep => "cost_sweep",
            Experiment::Dissipation => "dissipation",
            Experiment::Carleman => "carleman",
            Experiment::LowerBound => "lowerbound",
            Experiment::Fourier2D => "fourier2d",
        }
    }
}

/// Fully resolved sweep configuration (flat key = value text format).
#[derive(Clone, Debug, serde::Serialize)]
pub struct SweepConfig {
    pub experiment: Experiment,
    /// Viscosity grid; each value also fixes n_space through the policy.
    pub epsilons: Vec<f64>,
    /// Zeroth-order coefficient grid.
    pub a_values: Vec<f64>,
    /// Horizon grid.
    pub horizons: Vec<f64>,
    /// Penalty strengths for the Gramian solver.
    pub penalty_deltas: Vec<f64>,
    /// Bump supports for the lower-bound witness.
    pub bump_deltas: Vec<f64>,
    /// Decay-window lengths t₂ − t₁ for the dissipation experiment.
    pub gaps: Vec<f64>,
    pub n_time: usize,
    pub theta: f64,
    pub location: ControlLocation,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Transverse torus width (fourier2d).
    pub width: f64,
    /// Transverse node count (fourier2d); power of two.
    pub n_transverse: usize,
    /// Largest controlled |harmonic| (fourier2d).
    pub cutoff: i64,
    /// Not echoed into the manifest: the manifest travels with its
    /// directory, and identical runs must produce identical manifests
    /// regardless of where they were written.
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
    /// 0 = library default thread count.
    pub workers: usize,
    pub plot: bool,
    /// Acknowledge the cost of ε < 0.02 instead of refusing it.
    pub allow_small_epsilon: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            experiment: Experiment::CostSweep,
            epsilons: vec![0.1],
            a_values: vec![0.0],
            horizons: vec![2.0],
            penalty_deltas: vec![1e-8],
            bump_deltas: vec![0.1],
            gaps: vec![2.0, 4.0],
            n_time: 600,
            theta: 0.5,
            location: ControlLocation::Gamma0,
            cg_tol: 1e-10,
            cg_max_iter: 2000,
            width: 4.0,
            n_transverse: 16,
            cutoff: 4,
            out_dir: None,
            workers: 0,
            plot: false,
            allow_small_epsilon: false,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("key '{key}': cannot parse '{v}' as a number")))
}

fn parse_f64_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|tok| parse_f64(key, tok)).collect()
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim()
        .parse::<usize>()
        .map_err(|_| Error::Config(format!("key '{key}': cannot parse '{v}' as an integer")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!("key '{key}': cannot parse '{other}' as a boolean"))),
    }
}

/// Parse the flat `key = value` configuration text.  Lists are
/// comma-separated; `#` starts a comment; unknown keys are errors.
pub fn parse_config(text: &str) -> Result<SweepConfig> {
    let mut cfg = SweepConfig::default();
    let mut saw_experiment = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected 'key = value', got '{line}'", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "experiment" => {
                cfg.experiment = Experiment::parse(value)?;
                saw_experiment = true;
            }
            "epsilon" => cfg.epsilons = parse_f64_list(key, value)?,
            "a" => cfg.a_values = parse_f64_list(key, value)?,
            "t_final" => cfg.horizons = parse_f64_list(key, value)?,
            "penalty_delta" => cfg.penalty_deltas = parse_f64_list(key, value)?,
            "bump_delta" => cfg.bump_deltas = parse_f64_list(key, value)?,
            "gaps" => cfg.gaps = parse_f64_list(key, value)?,
            "n_time" => cfg.n_time = parse_usize(key, value)?,
            "theta" => cfg.theta = parse_f64(key, value)?,
            "location" => {
                cfg.location = match value {
                    "gamma0" => ControlLocation::Gamma0,
                    "gamma1" => ControlLocation::Gamma1,
                    other => {
                        return Err(Error::Config(format!(
                            "key 'location': expected gamma0 or gamma1, got '{other}'"
                        )))
                    }
                }
            }
            "cg_tol" => cfg.cg_tol = parse_f64(key, value)?,
            "cg_max_iter" => cfg.cg_max_iter = parse_usize(key, value)?,
            "width" => cfg.width = parse_f64(key, value)?,
            "n_transverse" => cfg.n_transverse = parse_usize(key, value)?,
            "cutoff" => {
                cfg.cutoff = value.trim().parse::<i64>().map_err(|_| {
                    Error::Config(format!("key 'cutoff': cannot parse '{value}' as an integer"))
                })?
            }
            "out_dir" => cfg.out_dir = Some(PathBuf::from(value)),
            "workers" => cfg.workers = parse_usize(key, value)?,
            "plot" => cfg.plot = parse_bool(key, value)?,
            "allow_small_epsilon" => cfg.allow_small_epsilon = parse_bool(key, value)?,
            other => return Err(Error::Config(format!("unknown configuration key '{other}'"))),
        }
    }
    if !saw_experiment {
        return Err(Error::Config("missing required key 'experiment'".to_string()));
    }
    Ok(cfg)
}

impl SweepConfig {
    /// Spatial resolution the policy demands for a given viscosity.
    pub fn n_space_for(epsilon: f64) -> usize {
        201usize.max((4.0 / epsilon).ceil() as usize)
    }

    /// Refuse configurations the resolution policy cannot stand behind.
    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() || self.a_values.is_empty() || self.horizons.is_empty() {
            return Err(Error::Config("epsilon, a and t_final grids must be nonempty".to_string()));
        }
        for &eps in &self.epsilons {
            if !(eps > 0.0) || !eps.is_finite() {
                return Err(Error::Config(format!("epsilon values must be positive, got {eps}")));
            }
            if eps < 0.02 && !self.allow_small_epsilon {
                return Err(Error::Config(format!(
                    "epsilon = {eps} is below 0.02; resolving its boundary layer needs \
                     n_space ≥ {} — pass allow_small_epsilon = true (or --allow-small-epsilon) \
                     to acknowledge the cost",
                    Self::n_space_for(eps)
                )));
            }
        }
        for &t in &self.horizons {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::Config(format!("t_final values must be positive, got {t}")));
            }
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Config(format!("theta must lie in [0, 1], got {}", self.theta)));
        }
        if self.n_time < 2 {
            return Err(Error::Config(format!("n_time must be ≥ 2, got {}", self.n_time)));
        }
        match self.experiment {
            Experiment::Hum | Experiment::CostSweep | Experiment::Fourier2D => {
                if self.penalty_deltas.is_empty() {
                    return Err(Error::Config("penalty_delta grid must be nonempty".to_string()));
                }
            }
            Experiment::LowerBound => {
                if self.bump_deltas.is_empty() {
                    return Err(Error::Config("bump_delta grid must be nonempty".to_string()));
                }
            }
            Experiment::Dissipation => {
                if self.gaps.is_empty() {
                    return Err(Error::Config("gaps grid must be nonempty".to_string()));
                }
            }
            _ => {}
        }
        if self.experiment == Experiment::Fourier2D {
            if self.n_transverse < 4 || !self.n_transverse.is_power_of_two() {
                return Err(Error::Config(format!(
                    "n_transverse must be a power of two ≥ 4, got {}",
                    self.n_transverse
                )));
            }
            if self.cutoff < 0 || self.cutoff > (self.n_transverse / 2) as i64 {
                return Err(Error::Config(format!(
                    "cutoff must lie in [0, n_transverse/2], got {}",
                    self.cutoff
                )));
            }
        }
        Ok(())
    }

    fn grid_for(&self, epsilon: f64) -> Result<GridSpec> {
        GridSpec::new(Self::n_space_for(epsilon), self.n_time, self.theta)
    }

    fn hum_config(&self, delta: f64) -> HumConfig {
        HumConfig {
            penalty_delta: delta,
            cg_tol: self.cg_tol,
            cg_max_iter: self.cg_max_iter,
        }
    }
}

/// Exponential-law fit of log-cost against inverse viscosity.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ExpFit {
    /// (1/ε, log cost) pairs that entered the fit.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least squares of log_cost on 1/ε; needs ≥ 3 points with distinct
/// abscissae.  slope < 0 is the vanishing-cost law, slope > 0 blow-up.
pub fn fit_exponential(points: &[(f64, f64)]) -> Result<ExpFit> {
    if points.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "exponential fit needs ≥ 3 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in points {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::Degenerate("all abscissae coincide; cannot fit a slope".to_string()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (x, y) in points {
        ss_res += (y - (intercept + slope * x)).powi(2);
        ss_tot += (y - my).powi(2);
    }
    let r_squared = if ss_tot == 0.0 {
        if ss_res <= 1e-28 {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(ExpFit { points: points.to_vec(), slope, intercept, r_squared })
}

/// Per-parameter-point outcome recorded in the manifest.
#[derive(Clone, Debug, serde::Serialize)]
pub struct PointStatus {
    pub label: String,
    pub ok: bool,
    /// Empty for successes, the error text for failures.
    pub message: String,
}

/// Where the sweep wrote its files and how the points fared.
#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub n_ok: usize,
    pub n_failed: usize,
}

struct ExperimentOutput {
    csv_name: String,
    csv: String,
    points: Vec<PointStatus>,
    extra: serde_json::Map<String, serde_json::Value>,
    svg: Option<(String, String)>,
    extra_files: Vec<(String, String)>,
}

fn smooth_bump(x: f64, center: f64, halfwidth: f64) -> f64 {
    let r = (x - center) / halfwidth;
    if r.abs() < 1.0 {
        (-1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

/// Fixed reference datum used by the forward/adjoint/hum sweeps: a centered
/// bump, normalized to unit interior L² norm.
pub fn reference_datum(grid: &GridSpec) -> StateX {
    let raw = StateX::from_fn(grid, |x| smooth_bump(x, -0.5, 0.25));
    let nrm = inner_l2(&raw, &raw).expect("matching lengths").sqrt();
    StateX::from_fn(grid, |x| smooth_bump(x, -0.5, 0.25) / nrm)
}

fn isolate<T: Send>(
    labels_and_work: Vec<(String, Box<dyn Fn() -> Result<T> + Send + Sync>)>,
) -> (Vec<(String, T)>, Vec<PointStatus>) {
    let results: Vec<(String, Result<T>)> = labels_and_work
        .into_par_iter()
        .map(|(label, work)| {
            let r = work();
            (label, r)
        })
        .collect();
    let mut rows = Vec::new();
    let mut statuses = Vec::new();
    for (label, res) in results {
        match res {
            Ok(v) => {
                statuses.push(PointStatus { label: label.clone(), ok: true, message: String::new() });
                rows.push((label, v));
            }
            Err(e) => statuses.push(PointStatus { label, ok: false, message: e.to_string() }),
        }
    }
    (rows, statuses)
}

fn run_forward_like(cfg: &SweepConfig, adjoint: bool) -> Result<ExperimentOutput> {
    let mut work: Vec<(String, Box<dyn Fn() -> Result<String> + Send + Sync>)> = Vec::new();
    for &eps in &cfg.epsilons {
        for &a in &cfg.a_values {
            for &t in &cfg.horizons {
                let cfg2 = cfg.clone();
                let label = format!("eps={eps},a={a},T={t}");
                work.push((
                    label,
                    Box::new(move || {
                        let p = ModelParams::new(eps, a, t)?;
                        let g = cfg2.grid_for(eps)?;
                        let ops = assemble(&p, &g)?;
                        let datum = reference_datum(&g);
                        if adjoint {
                            let run = solve_adjoint(&ops, &datum, cfg2.location)?;
                            let trace = match cfg2.location {
                                ControlLocation::Gamma0 => run.trajectory.trace_at_zero(),
                                ControlLocation::Gamma1 => run.trajectory.trace_at_minus_one(),
                            };
                            let trace_energy = l2_time_norm(trace, t)?.powi(2);
                            let initial = norm_x(run.trajectory.state(0), &p)?;
                            let terminal = norm_x(run.trajectory.final_state(), &p)?;
                            Ok(format!(
                                "{eps:.12e},{a:.12e},{t:.12e},{terminal:.12e},{initial:.12e},{trace_energy:.12e}\n"
                            ))
                        } else {
                            let traj = solve_forward(&ops, &datum, &Sources::none())?;
                            let initial = norm_x(traj.state(0), &p)?;
                            let final_n = norm_x(traj.final_state(), &p)?;
                            Ok(format!(
                                "{eps:.12e},{a:.12e},{t:.12e},{initial:.12e},{final_n:.12e}\n"
                            ))
                        }
                    }),
                ));
            }
        }
    }
    let (rows, points) = isolate(work);
    let header = if adjoint {
        "epsilon,a,T,terminal_norm,initial_norm,trace_energy\n"
    } else {
        "epsilon,a,T,initial_norm,final_norm\n"
    };
    let mut csv = String::from(header);
    rows.into_iter().for_each(|(_, r)| csv.push_str(&r));
    Ok(ExperimentOutput {
        csv_name: format!("{}.csv", if adjoint { "adjoint" } else { "forward" }),
        csv,
        points,
        extra: serde_json::Map::new(),
        svg: None,
        extra_files: Vec::new(),
    })
}

fn run_hum(cfg: &SweepConfig) -> Result<ExperimentOutput> {
    let mut work: Vec<(String, Box<dyn Fn() -> Result<String> + Send + Sync>)> = Vec::new();
    for &eps in &cfg.epsilons {
        for &a in &cfg.a_values {
            for &t in &cfg.horizons {
                for &delta in &cfg.penalty_deltas {
                    let cfg2 = cfg.clone();
                    let label = format!("eps={eps},a={a},T={t},delta={delta}");
                    work.push((
                        label,
                        Box::new(move || {
                            let p = ModelParams::new(eps, a, t)?;
                            let g = cfg2.grid_for(eps)?;
                            let ops = assemble(&p, &g)?;
                            let datum = reference_datum(&g);
                            let hum_cfg = cfg2.hum_config(delta);
                            let r = compute_control(&ops, &datum, &hum_cfg, cfg2.location)?;
                            Ok(format!(
                                "{eps:.12e},{a:.12e},{t:.12e},{delta:.12e},{:.12e},{:.12e},{:.12e},{},{}\n",
                                r.cost_quotient,
                                r.terminal_residual,
                                r.control_norm,
                                r.cg_iterations,
                                u8::from(r.converged)
                            ))
                        }),
                    ));
                }
            }
        }
    }
    let (rows, points) = isolate(work);
    let mut csv = String::from(
        "epsilon,a,T,delta,cost_quotient,terminal_residual,control_norm,cg_iterations,converged\n",
    );
    rows.into_iter().for_each(|(_, r)| csv.push_str(&r));
    Ok(ExperimentOutput {
        csv_name: "hum.csv".to_string(),
        csv,
        points,
        extra: serde_json::Map::new(),
        svg: None,
        extra_files: Vec::new(),
    })
}

fn run_cost_sweep(cfg: &SweepConfig) -> Result<ExperimentOutput> {
    let delta = cfg.penalty_deltas[0];
    let mut work: Vec<(String, Box<dyn Fn() -> Result<(f64, String)> + Send + Sync>)> = Vec::new();
    for &eps in &cfg.epsilons {
        for &a in &cfg.a_values {
            for &t in &cfg.horizons {
                let cfg2 = cfg.clone();
                let label = format!("eps={eps},a={a},T={t}");
                work.push((
                    label,
                    Box::new(move || {
                        let p = ModelParams::new(eps, a, t)?;
                        let g = cfg2.grid_for(eps)?;
                        let ops = assemble(&p, &g)?;
                        let battery = default_battery(&g);
                        let cost =
                            cost_upper_estimate(&ops, &cfg2.hum_config(delta), cfg2.location, &battery)?;
                        Ok((cost, format!("{eps:.12e},{a:.12e},{t:.12e},{cost:.12e}\n")))
                    }),
                ));
            }
        }
    }
    let (rows, points) = isolate(work);
    let mut csv = String::from("epsilon,a,T,cost_estimate\n");
    let mut extra = serde_json::Map::new();
    let mut fit_points = Vec::new();
    for (label, (cost, row)) in &rows {
        csv.push_str(row);
        if cfg.a_values.len() == 1 && cfg.horizons.len() == 1 && *cost > 0.0 {
            // label starts "eps=<value>,"
            if let Some(eps_str) = label.strip_prefix("eps=").and_then(|s| s.split(',').next()) {
                if let Ok(eps) = eps_str.parse::<f64>() {
                    fit_points.push((1.0 / eps, cost.ln()));
                }
            }
        }
    }
    let mut svg = None;
    if fit_points.len() >= 3 {
        match fit_exponential(&fit_points) {
            Ok(fit) => {
                if cfg.plot {
                    svg = Some((
                        "cost_sweep.svg".to_string(),
                        svg_line_chart(
                            "battery cost estimate vs inverse viscosity",
                            "1/epsilon",
                            "log cost",
                            &[("log cost", &fit_points)],
                        ),
                    ));
                }
                extra.insert("fit".to_string(), serde_json::to_value(&fit).unwrap());
            }
            Err(e) => {
                extra.insert("fit_error".to_string(), serde_json::Value::String(e.to_string()));
            }
        }
    }
    Ok(ExperimentOutput {
        csv_name: "cost_sweep.csv".to_string(),
        csv,
        points,
        extra,
        svg,
        extra_files: Vec::new(),
    })
}

fn run_dissipation(cfg: &SweepConfig) -> Result<ExperimentOutput> {
    let mut work: Vec<(String, Box<dyn Fn() -> Result<(DecaySample, String)> + Send + Sync>)> =
        Vec::new();
    for &eps in &cfg.epsilons {
        for &a in &cfg.a_values {
            for &t in &cfg.horizons {
                for &gap in &cfg.gaps {
                    let cfg2 = cfg.clone();
                    let label = format!("eps={eps},a={a},T={t},gap={gap}");
                    work.push((
                        label,
                        Box::new(move || {
                            if gap >= t {
                                return Err(Error::Domain(format!(
                                    "gap {gap} does not fit inside horizon {t}"
                                )));
                            }
                            let p = ModelParams::new(eps, a, t)?;
                            let g = cfg2.grid_for(eps)?;
                            let ops = assemble(&p, &g)?;
                            let datum = reference_datum(&g);
                            // Center the decay window inside (0, T).
                            let t1 = 0.5 * (t - gap);
                            let t2 = 0.5 * (t + gap);
                            let ratio = decay_ratio(&ops, &datum, t1, t2)?;
                            let sample =
                                DecaySample { epsilon: eps, a, gap, log_ratio: ratio.ln() };
                            let factor = model_factor(eps, a, gap);
                            let row = format!(
                                "{eps:.12e},{a:.12e},{t:.12e},{gap:.12e},{:.12e},{factor:.12e}\n",
                                sample.log_ratio
                            );
                            Ok((sample, row))
                        }),
                    ));
                }
            }
        }
    }
    let (rows, points) = isolate(work);
    let mut csv = String::from("epsilon,a,T,gap,log_ratio,model_factor\n");
    let mut samples = Vec::new();
    for (_, (sample, row)) in &rows {
        csv.push_str(row);
        samples.push(*sample);
    }
    let mut extra = serde_json::Map::new();
    match fit_dissipation_rate(&samples) {
        Ok(fit) => {
            // Through-origin r²: share of log-ratio energy the model captures.
            let mut ss_res = 0.0;
            let mut ss_tot = 0.0;
            for s in &fit.samples {
                let predicted = -fit.fitted_c0 * model_factor(s.epsilon, s.a, s.gap);
                ss_res += (s.log_ratio - predicted).powi(2);
                ss_tot += s.log_ratio * s.log_ratio;
            }
            let r2 = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 0.0 };
            extra.insert(
                "fit".to_string(),
                serde_json::json!({
                    "fitted_c0": fit.fitted_c0,
                    "fit_residual": fit.fit_residual,
                    "r_squared": r2,
                    "n_samples": fit.samples.len(),
                }),
            );
        }
        Err(e) => {
            extra.insert("fit_error".to_string(), serde_json::Value::String(e.to_string()));
        }
    }
    Ok(ExperimentOutput {
        csv_name: "dissipation.csv".to_string(),
        csv,
        points,
        extra,
        svg: None,
        extra_files: Vec::new(),
    })
}

fn run_carleman(cfg: &SweepConfig) -> Result<ExperimentOutput> {
    // Calibrate the threshold multiplier once, on the reference
    // configuration, with the same resolution policy as the sweep.
    let ref_p = ModelParams::new(0.1, 0.0, 2.0)?;
    let ref_g = cfg.grid_for(0.1)?;
    let ref_ops = assemble(&ref_p, &ref_g)?;
    let ref_family: Result<Vec<(StateX, crate::adjoint::AdjointRun)>> = carleman_family(&ref_g)
        .into_iter()
        .map(|d| solve_adjoint(&ref_ops, &d, ControlLocation::Gamma0).map(|r| (d, r)))
        .collect();
    let s0 = calibrate_s0(&ref_ops, &ref_family?, &[0.25, 0.5, 1.0, 2.0, 4.0])?;

    let mut work: Vec<(String, Box<dyn Fn() -> Result<String> + Send + Sync>)> = Vec::new();
    for &eps in &cfg.epsilons {
        for &a in &cfg.a_values {
            for &t in &cfg.horizons {
                let cfg2 = cfg.clone();
                let label = format!("eps={eps},a={a},T={t}");
                work.push((
                    label,
                    Box::new(move || {
                        let p = ModelParams::new(eps, a, t)?;
                        let g = cfg2.grid_for(eps)?;
                        let ops = assemble(&p, &g)?;
                        let runs: Result<Vec<_>> = carleman_family(&g)
                            .into_iter()
                            .map(|d| solve_adjoint(&ops, &d, ControlLocation::Gamma0))
                            .collect();
                        let runs = runs?;
                        let base = s_min(&p, s0);
                        let mut rows = String::new();
                        for &mult in &[1.0, 2.0, 4.0] {
                            let w = CarlemanWeights::new(
                                WeightVariant::Gamma0Control,
                                mult * base,
                                t,
                            )?;
                            // Report the family member with the worst
                            // (largest) ratio at this s.
                            let mut worst: Option<crate::carleman::CarlemanReport> = None;
                            for run in &runs {
                                let rep = carleman_sides(&ops, run, &w)?;
                                let better = match &worst {
                                    Some(best) => rep.log_ratio > best.log_ratio,
                                    None => true,
                                };
                                if better {
                                    worst = Some(rep);
                                }
                            }
                            let rep = worst.expect("family is nonempty");
                            let _ = writeln!(
                                rows,
                                "{:.12e},{eps:.12e},{a:.12e},{t:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                                rep.s_used,
                                rep.lhs_interior,
                                rep.lhs_boundary,
                                rep.rhs,
                                rep.ratio,
                                rep.log_lhs_interior,
                                rep.log_lhs_boundary,
                                rep.log_rhs,
                                rep.log_ratio,
                            );
                        }
                        Ok(rows)
                    }),
                ));
            }
        }
    }
    let (rows, points) = isolate(work);
    let mut csv = String::from(
        "s,epsilon,a,T,lhs_interior,lhs_boundary,rhs,ratio,log_lhs_interior,log_lhs_boundary,log_rhs,log_ratio\n",
    );
    rows.into_iter().for_each(|(_, r)| csv.push_str(&r));
    let mut extra = serde_json::Map::new();
    extra.insert("calibrated_s0".to_string(), serde_json::json!(s0));
    Ok(ExperimentOutput {
        csv_name: "carleman.csv".to_string(),
        csv,
        points,
        extra,
        svg: None,
        extra_files: Vec::new(),
    })
}

fn run_lowerbound(cfg: &SweepConfig) -> Result<ExperimentOutput> {
    let a = cfg.a_values[0];
    let mut work: Vec<(String, Box<dyn Fn() -> Result<(crate::lower_bound::WitnessReport, String)> + Send + Sync>)> =
        Vec::new();
    for &eps in &cfg.epsilons {
        for &t in &cfg.horizons {
            for &delta in &cfg.bump_deltas {
                let cfg2 = cfg.clone();
                let label = format!("eps={eps},T={t},delta={delta}");
                work.push((
                    label,
                    Box::new(move || {
                        let spec = BumpSpec::new(delta, t)?;
                        let p = ModelParams::new(eps, a, t)?;
                        let g = cfg2.grid_for(eps)?;
                        let report = witness_quotient(&spec, &p, &g)?;
                        let row = witness_csv(&[report]);
                        let row = row.lines().nth(1).unwrap_or("").to_string() + "\n";
                        Ok((report, row))
                    }),
                ));
            }
        }
    }
    let (rows, points) = isolate(work);
    let mut csv =
        String::from("epsilon,T,delta,trace_energy,initial_norm,quotient,transport_pairing\n");
    let mut fit_points = Vec::new();
    for (_, (report, row)) in &rows {
        csv.push_str(row);
        if cfg.horizons.len() == 1
            && cfg.bump_deltas.len() == 1
            && report.quotient.is_finite()
            && report.quotient > 0.0
        {
            fit_points.push((1.0 / report.epsilon, report.quotient.ln()));
        }
    }
    let mut extra = serde_json::Map::new();
    let mut svg = None;
    if fit_points.len() >= 3 {
        match fit_exponential(&fit_points) {
            Ok(fit) => {
                if cfg.plot {
                    svg = Some((
                        "lowerbound.svg".to_string(),
                        svg_line_chart(
                            "witness quotient vs inverse viscosity",
                            "1/epsilon",
                            "log quotient",
                            &[("log quotient", &fit_points)],
                        ),
                    ));
                }
                extra.insert("fit".to_string(), serde_json::to_value(&fit).unwrap());
            }
            Err(e) => {
                extra.insert("fit_error".to_string(), serde_json::Value::String(e.to_string()));
            }
        }
    }
    Ok(ExperimentOutput {
        csv_name: "lowerbound.csv".to_string(),
        csv,
        points,
        extra,
        svg,
        extra_files: Vec::new(),
    })
}

fn run_fourier2d(cfg: &SweepConfig) -> Result<ExperimentOutput> {
    let eps = cfg.epsilons[0];
    let a = cfg.a_values[0];
    let t = cfg.horizons[0];
    let delta = cfg.penalty_deltas[0];
    let p = ModelParams::new(eps, a, t)?;
    let axial = cfg.grid_for(eps)?;
    let g2 = Grid2D::new(cfg.width, cfg.n_transverse, axial)?;

    // Fixed 2D datum: low harmonics in x′ times a centered axial bump.
    let b = reference_datum(&axial);
    let k1 = 2.0 * std::f64::consts::PI / g2.width;
    let mut data = Vec::with_capacity(cfg.n_transverse);
    for &xp in &g2.transverse_nodes() {
        let f = 0.7 + (k1 * xp).cos() + 0.4 * (2.0 * k1 * xp).sin() + 0.2 * (3.0 * k1 * xp).cos();
        data.push(StateX::new(b.values().iter().map(|v| f * v).collect())?);
    }

    let modes = decompose(&data, &g2)?;
    let hum_cfg = cfg.hum_config(delta);
    let controls = control_modes(&modes, &g2, &p, &hum_cfg, cfg.location, cfg.cutoff)?;
    let asm = recompose_and_verify(&controls, &modes, &g2, &p)?;

    let mode_diags: Vec<serde_json::Value> = controls
        .iter()
        .map(|mc| {
            serde_json::json!({
                "harmonic": mc.harmonic,
                "xi": mc.xi,
                "a_mode": mc.a_mode,
                "cost_quotient_re": mc.re.cost_quotient,
                "cost_quotient_im": mc.im.cost_quotient,
                "terminal_residual_re": mc.re.terminal_residual,
                "terminal_residual_im": mc.im.terminal_residual,
                "cg_iterations_re": mc.re.cg_iterations,
                "cg_iterations_im": mc.im.cg_iterations,
                "converged": mc.re.converged && mc.im.converged,
            })
        })
        .collect();
    let modes_json = serde_json::to_string_pretty(&serde_json::Value::Array(mode_diags))
        .expect("mode diagnostics serialize");

    let mut extra = serde_json::Map::new();
    extra.insert(
        "assembly".to_string(),
        serde_json::json!({
            "cost_2d": asm.cost_2d,
            "max_mode_quotient": asm.max_mode_quotient,
            "terminal_residual": asm.terminal_residual,
            "max_imag_rel": asm.max_imag_rel,
            "tail_energy": asm.tail_energy,
            "tail_fraction": asm.tail_fraction,
            "modes_controlled": controls.len(),
        }),
    );
    let label = format!("eps={eps},a={a},T={t},delta={delta}");
    Ok(ExperimentOutput {
        csv_name: "control_2d.csv".to_string(),
        csv: control_2d_csv(&asm, &g2, &p),
        points: vec![PointStatus { label, ok: true, message: String::new() }],
        extra,
        svg: None,
        extra_files: vec![("modes.json".to_string(), modes_json)],
    })
}

/// Run the configured experiment and write its files under `out_dir`.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let out_dir = cfg
        .out_dir
        .clone()
        .ok_or_else(|| Error::Config("an output directory is required (--out DIR)".to_string()))?;

    let body = || -> Result<ExperimentOutput> {
        match cfg.experiment {
            Experiment::Forward => run_forward_like(cfg, false),
            Experiment::Adjoint => run_forward_like(cfg, true),
            Experiment::Hum => run_hum(cfg),
            Experiment::CostSweep => run_cost_sweep(cfg),
            Experiment::Dissipation => run_dissipation(cfg),
            Experiment::Carleman => run_carleman(cfg),
            Experiment::LowerBound => run_lowerbound(cfg),
            Experiment::Fourier2D => run_fourier2d(cfg),
        }
    };
    let output = if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?
            .install(body)
    } else {
        body()
    }?;

    std::fs::create_dir_all(&out_dir)?;
    let mut files = Vec::new();

    let csv_path = out_dir.join(&output.csv_name);
    std::fs::write(&csv_path, &output.csv)?;
    files.push(csv_path);

    for (name, content) in &output.extra_files {
        let path = out_dir.join(name);
        std::fs::write(&path, content)?;
        files.push(path);
    }
    if let Some((name, content)) = &output.svg {
        let path = out_dir.join(name);
        std::fs::write(&path, content)?;
        files.push(path);
    }

    let n_ok = output.points.iter().filter(|p| p.ok).count();
    let n_failed = output.points.len() - n_ok;
    let manifest = serde_json::json!({
        "experiment": cfg.experiment.as_str(),
        "code_version": env!("CARGO_PKG_VERSION"),
        "battery_version": BATTERY_VERSION,
        "carleman_family_version": CARLEMAN_FAMILY_VERSION,
        "config": cfg,
        "resolution": cfg.epsilons.iter()
            .map(|&e| serde_json::json!({"epsilon": e, "n_space": SweepConfig::n_space_for(e)}))
            .collect::<Vec<_>>(),
        "points": output.points,
        "outputs": files.iter().map(|f| f.file_name().unwrap().to_string_lossy().to_string()).collect::<Vec<_>>(),
        "extra": serde_json::Value::Object(output.extra),
    });
    let manifest_path = out_dir.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).unwrap())?;
    files.push(manifest_path);

    Ok(SweepOutcome { out_dir, files, n_ok, n_failed })
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1e-3 && v.abs() < 1e4 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

/// Minimal hand-rolled SVG line chart; axes, ticks, one polyline with
/// markers per series, fixed palette, no external dependencies.
pub fn svg_line_chart(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[(&str, &[(f64, f64)])],
) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const ML: f64 = 70.0;
    const MR: f64 = 20.0;
    const MT: f64 = 40.0;
    const MB: f64 = 50.0;
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"];

    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for (_, pts) in series {
        for (x, y) in pts.iter() {
            xs.push(*x);
            ys.push(*y);
        }
    }
    let (x0, x1) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let (y0, y1) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let pad = |lo: f64, hi: f64| {
        let span = (hi - lo).abs();
        let m = if span > 0.0 { 0.05 * span } else { lo.abs().max(1.0) * 0.1 };
        (lo - m, hi + m)
    };
    let (x0, x1) = pad(x0, x1);
    let (y0, y1) = pad(y0, y1);
    let sx = |x: f64| ML + (x - x0) / (x1 - x0) * (W - ML - MR);
    let sy = |y: f64| H - MB - (y - y0) / (y1 - y0) * (H - MT - MB);

    let mut s = String::new();
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{title}</text>",
        W / 2.0
    );
    // Axes.
    let _ = writeln!(
        s,
        "<line x1=\"{ML}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
        H - MB,
        W - MR,
        H - MB
    );
    let _ = writeln!(
        s,
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{:.1}\" stroke=\"black\"/>",
        H - MB
    );
    for k in 0..=5 {
        let fx = x0 + (x1 - x0) * k as f64 / 5.0;
        let fy = y0 + (y1 - y0) * k as f64 / 5.0;
        let px = sx(fx);
        let py = sy(fy);
        let _ = writeln!(
            s,
            "<line x1=\"{px:.1}\" y1=\"{:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
            H - MB,
            H - MB + 5.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{px:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            H - MB + 18.0,
            format_tick(fx)
        );
        let _ = writeln!(
            s,
            "<line x1=\"{:.1}\" y1=\"{py:.1}\" x2=\"{ML}\" y2=\"{py:.1}\" stroke=\"black\"/>",
            ML - 5.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            ML - 8.0,
            py + 4.0,
            format_tick(fy)
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{xlabel}</text>",
        (ML + W - MR) / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{ylabel}</text>",
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0
    );
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = palette[i % palette.len()];
        let mut sorted: Vec<(f64, f64)> = pts.to_vec();
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let path: Vec<String> =
            sorted.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            path.join(" ")
        );
        for (x, y) in &sorted {
            let _ = writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                sx(*x),
                sy(*y)
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{color}\">{label}</text>",
            W - MR - 150.0,
            MT + 16.0 * (i as f64 + 1.0)
        );
    }
    s.push_str("</svg>\n");
    s
}
