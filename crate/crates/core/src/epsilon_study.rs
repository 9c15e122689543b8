//! Dependence of the attractor on the time-scale ratio `ε`.
//!
//! With forcing growing like `√|t|` the available `v`-bound scales like
//! `1/ε`; with bounded forcing the attractor's H¹ norms stay bounded
//! uniformly in `ε`. [`run_sweep`] measures attractor norms over a list of
//! `ε` and [`uniform_bound_report`] classifies the trend.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::analysis::absorbing_bounds;
use crate::grid::Grid;
use crate::integrator::{StepConfig, System};
use crate::math::{ln, round, sqrt};
use crate::model::{BasinFamily, ForcingSpec, NonlinearitySpec, Parameters, Role, SpaceProfile, TimeProfile};
use crate::pullback::{approximate_attractor, Executor, InitialSource, PullbackSchedule};
use crate::{Error, Result};

/// `(8/(γ²ε))(‖f₁‖²/λ + ‖g₁‖²/γ)`: the squared `v`-bound at `τ = 0` for
/// forcing `√|t|·f₁`, `√|t|·g₁`.
pub fn blowup_bound(params: &Parameters, f1_norm_sq: f64, g1_norm_sq: f64) -> f64 {
    let (eps, lambda, gamma) = (params.epsilon(), params.lambda(), params.gamma());
    8.0 / (gamma * gamma * eps) * (f1_norm_sq / lambda + g1_norm_sq / gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// `f = √|t|·f₁`, `g = √|t|·g₁`
    UnboundedSqrt,
    /// `f = f₁`, `g = g₁`
    Bounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepScenario {
    pub kind: ScenarioKind,
    pub f_profile: SpaceProfile,
    pub g_profile: SpaceProfile,
}

/// Pullback settings shared by every `ε` of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOptions {
    /// Deepest pullback depth is `depth_factor/(εγ)` (rounded to the step
    /// lattice); `depth_fractions` scale it for the intermediate slots.
    #[serde(default = "default_depth_factor")]
    pub depth_factor: f64,
    #[serde(default = "default_depth_fractions")]
    pub depth_fractions: Vec<f64>,
    #[serde(default = "default_bundle_size")]
    pub bundle_size: usize,
    /// Radius of the fixed-size basin the bundles are drawn from.
    #[serde(default = "default_basin_amplitude")]
    pub basin_amplitude: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_depth_factor() -> f64 {
    25.0
}

fn default_depth_fractions() -> Vec<f64> {
    alloc::vec![0.6, 1.0]
}

fn default_bundle_size() -> usize {
    8
}

fn default_basin_amplitude() -> f64 {
    1.0
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            depth_factor: default_depth_factor(),
            depth_fractions: default_depth_fractions(),
            bundle_size: default_bundle_size(),
            basin_amplitude: default_basin_amplitude(),
            seed: 0,
        }
    }
}

impl SweepOptions {
    /// Pullback schedule at `τ = 0` for one `ε`.
    pub fn schedule(&self, params: &Parameters, dt: f64) -> PullbackSchedule {
        let deepest = self.depth_factor / (params.epsilon() * params.gamma());
        let depths = self.depth_fractions.iter().map(|fr| round(fr * deepest / dt).max(1.0) * dt).collect();
        PullbackSchedule { tau: 0.0, depths, bundle_size: self.bundle_size, seed: self.seed }
    }
}

/// Attractor norms at `τ = 0` for one `ε` (maxima over the final cloud).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepNorms {
    /// `max ‖u‖_{H¹}`
    pub u_h1: f64,
    /// `max ‖v‖_{L²}`
    pub v_l2: f64,
    /// `max (‖v₂‖_{H¹} + ‖v₁‖_{L²})`
    pub v_h1: f64,
    /// Bound on `‖v‖_{L²}`: `√blowup_bound` for unbounded forcing, the
    /// absorbing radius otherwise.
    pub theoretical_v_bound: f64,
    /// `max ‖v₁‖ / ‖v‖` over the cloud.
    pub v1_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub epsilon: f64,
    pub norms: Option<SweepNorms>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: ScenarioKind,
    pub epsilons: Vec<f64>,
    pub records: Vec<SweepRecord>,
}

/// System for one `ε` of a scenario.
pub fn scenario_system(
    scenario: &SweepScenario,
    params: &Parameters,
    nonlinearity: &NonlinearitySpec,
    grid: &Grid,
) -> Result<System> {
    let time = match scenario.kind {
        ScenarioKind::UnboundedSqrt => TimeProfile::SqrtAbsT,
        ScenarioKind::Bounded => TimeProfile::Constant,
    };
    let f = ForcingSpec::new(time, scenario.f_profile, Role::F)?;
    let g = ForcingSpec::new(time, scenario.g_profile, Role::G)?;
    System::new(*params, nonlinearity.clone(), Some(&f), Some(&g), grid)
}

fn measure(system: &System, options: &SweepOptions, config: &StepConfig, kind: ScenarioKind, executor: &impl Executor) -> Result<SweepNorms> {
    let params = system.params();
    let schedule = options.schedule(params, config.dt);
    let basin = BasinFamily::new(options.basin_amplitude, 0.0, params)?;
    let run = approximate_attractor(system, &schedule, &InitialSource::Basin(basin), config, 0.05, executor)?;
    let theoretical_v_bound = match kind {
        ScenarioKind::UnboundedSqrt => {
            sqrt(blowup_bound(params, system.f().space_norm_sq(), system.g().space_norm_sq()))
        }
        ScenarioKind::Bounded => absorbing_bounds(system, 0.0)?.v_l2_bound,
    };
    let mut norms = SweepNorms { u_h1: 0.0, v_l2: 0.0, v_h1: 0.0, theoretical_v_bound, v1_fraction: 0.0 };
    for p in &run.final_cloud().points {
        let v = p.v();
        let v_norm = v.l2_norm();
        let v1 = p.v1.l2_norm();
        norms.u_h1 = norms.u_h1.max(sqrt(p.u.h1_norm_sq()));
        norms.v_l2 = norms.v_l2.max(v_norm);
        norms.v_h1 = norms.v_h1.max(sqrt(p.v2.h1_norm_sq()) + v1);
        if v_norm > 0.0 {
            norms.v1_fraction = norms.v1_fraction.max(v1 / v_norm);
        }
    }
    Ok(norms)
}

/// Approximates `𝒜^ε(0)` for every `ε` in the list. A failure at one `ε`
/// is recorded in its record and the sweep continues.
#[allow(clippy::too_many_arguments)]
pub fn run_sweep(
    epsilons: &[f64],
    scenario: &SweepScenario,
    base: &Parameters,
    nonlinearity: &NonlinearitySpec,
    grid: &Grid,
    config: &StepConfig,
    options: &SweepOptions,
    executor: &impl Executor,
) -> SweepResult {
    let records = epsilons
        .iter()
        .map(|&epsilon| {
            let outcome = base
                .with_epsilon(epsilon)
                .and_then(|p| scenario_system(scenario, &p, nonlinearity, grid))
                .and_then(|sys| measure(&sys, options, config, scenario.kind, executor));
            match outcome {
                Ok(norms) => SweepRecord { epsilon, norms: Some(norms), error: None },
                Err(e) => SweepRecord { epsilon, norms: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    SweepResult { kind: scenario.kind, epsilons: epsilons.to_vec(), records }
}

/// Which attractor norm a trend is fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    UH1,
    VL2Sq,
    VH1,
    /// `sqrt(u_h1² + v_h1²)`
    H1,
}

impl Metric {
    fn of(&self, n: &SweepNorms) -> f64 {
        match self {
            Metric::UH1 => n.u_h1,
            Metric::VL2Sq => n.v_l2 * n.v_l2,
            Metric::VH1 => n.v_h1,
            Metric::H1 => sqrt(n.u_h1 * n.u_h1 + n.v_h1 * n.v_h1),
        }
    }
}

pub const SPREAD_THRESHOLD: f64 = 3.0;
pub const SLOPE_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityVerdict {
    pub metric: Metric,
    pub uniform: bool,
    /// Least-squares slope of `ln(norm)` against `ln(1/ε)`.
    pub slope: f64,
    /// `max/min` of the norm over `ε`.
    pub spread: f64,
    pub points: Vec<(f64, f64)>,
}

/// Least-squares slope of `ln(value)` against `ln(1/ε)`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 epsilon values, got {}", points.len())));
    }
    if points.iter().any(|&(e, v)| !(e > 0.0 && v > 0.0)) {
        return Err(Error::Domain("log-log fit needs positive epsilons and norms".into()));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(e, _)| -ln(e)).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, v)| ln(v)).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all epsilon values coincide".into()));
    }
    Ok(sxy / sxx)
}

/// Uniform iff the spread is at most 3 and the fitted slope is below 0.2.
/// Failed records are skipped.
pub fn uniform_bound_report(result: &SweepResult, metric: Metric) -> Result<UniformityVerdict> {
    let points: Vec<(f64, f64)> =
        result.records.iter().filter_map(|r| r.norms.as_ref().map(|n| (r.epsilon, metric.of(n)))).collect();
    let slope = log_log_slope(&points)?;
    let max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let min = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let spread = max / min;
    Ok(UniformityVerdict {
        metric,
        uniform: spread <= SPREAD_THRESHOLD && slope < SLOPE_THRESHOLD,
        slope,
        spread,
        points,
    })
}
