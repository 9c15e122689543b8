//! Run configuration: a single JSON document, strictly parsed.

use std::fs;
use std::path::{Path, PathBuf};

use fhn_core::analysis::DEFAULT_SLACK;
use fhn_core::epsilon_study::{SweepOptions, SweepScenario};
use fhn_core::integrator::step_count;
use fhn_core::pullback::{InitialSource, PullbackSchedule};
use fhn_core::{Field, ForcingSpec, Grid, NonlinearitySpec, Parameters, State, StepConfig, System};
use serde::{Deserialize, Serialize};

use crate::LabError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub parameters: Parameters,
    #[serde(default)]
    pub nonlinearity: NonlinearitySpec,
    #[serde(default)]
    pub forcing_f: Option<ForcingSpec>,
    #[serde(default)]
    pub forcing_g: Option<ForcingSpec>,
    pub grid: Grid,
    pub step: StepConfig,
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Simulate(SimulateOptions),
    Verify(VerifyOptions),
    Tails(TailOptions),
    Pullback(PullbackOptions),
    Sweep(SweepConfig),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Simulate(_) => "simulate",
            Experiment::Verify(_) => "verify",
            Experiment::Tails(_) => "tails",
            Experiment::Pullback(_) => "pullback",
            Experiment::Sweep(_) => "sweep",
        }
    }
}

/// Initial data `(u₀, v₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    #[default]
    Zero,
    /// `u₀ = a_u e^{−|x|²/w²}`, `v₀ = a_v e^{−|x|²/w²}`
    Gaussian { u_amplitude: f64, v_amplitude: f64, width: f64 },
}

impl InitialCondition {
    pub fn state(&self, grid: &Grid, t0: f64) -> State {
        match *self {
            InitialCondition::Zero => State::zeros(grid, t0),
            InitialCondition::Gaussian { u_amplitude, v_amplitude, width } => {
                let profile = |a: f64| Field::from_fn(grid, move |x, y| a * (-(x * x + y * y) / (width * width)).exp());
                State { t: t0, u: profile(u_amplitude), v: profile(v_amplitude) }
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        if let InitialCondition::Gaussian { u_amplitude, v_amplitude, width } = *self {
            if !(u_amplitude.is_finite() && v_amplitude.is_finite()) {
                return Err("initial amplitudes must be finite".into());
            }
            if !(width.is_finite() && width > 0.0) {
                return Err(format!("initial width must be positive, got {width}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateOptions {
    #[serde(default)]
    pub t0: f64,
    pub t_end: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub initial: InitialCondition,
    /// Write a checkpoint every this many recorded samples (0 = only at the end).
    #[serde(default)]
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyOptions {
    #[serde(default)]
    pub t0: f64,
    pub t_end: f64,
    /// Step sizes, coarsest first; each is half the previous one.
    #[serde(default = "default_dts")]
    pub dts: Vec<f64>,
    #[serde(default)]
    pub initial: InitialCondition,
    /// Maximum ratio between consecutive residual measures.
    #[serde(default = "default_halving_ratio")]
    pub halving_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailOptions {
    #[serde(default)]
    pub t0: f64,
    pub t_end: f64,
    pub k_list: Vec<f64>,
    /// Tails are maximized over `[window_start, t_end]`.
    pub window_start: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub initial: InitialCondition,
    /// When set, every window supremum must stay at or below it.
    #[serde(default)]
    pub threshold: Option<f64>,
    /// Evolve a sampled bundle instead of `initial`.
    #[serde(default)]
    pub sampled: Option<SampledBundle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampledBundle {
    pub source: InitialSource,
    pub bundle_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PullbackOptions {
    pub tau: f64,
    pub depths: Vec<f64>,
    #[serde(default = "default_bundle")]
    pub bundle_size: usize,
    #[serde(default = "default_source")]
    pub source: InitialSource,
    #[serde(default = "default_slack")]
    pub slack: f64,
    /// Also approximate the attractor at `τ + t` and report the invariance defect.
    #[serde(default)]
    pub invariance_duration: Option<f64>,
}

impl PullbackOptions {
    pub fn schedule(&self, tau: f64, seed: u64) -> PullbackSchedule {
        PullbackSchedule { tau, depths: self.depths.clone(), bundle_size: self.bundle_size, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
    pub scenario: SweepScenario,
    #[serde(default)]
    pub options: SweepOptions,
}

fn default_stride() -> usize {
    1
}

fn default_dts() -> Vec<f64> {
    vec![1e-2, 5e-3, 2.5e-3]
}

fn default_halving_ratio() -> f64 {
    0.6
}

fn default_bundle() -> usize {
    32
}

fn default_source() -> InitialSource {
    InitialSource::Absorbing
}

fn default_slack() -> f64 {
    DEFAULT_SLACK
}

impl RunConfig {
    /// Parses and cross-validates a config document.
    pub fn from_json(text: &str) -> Result<Self, LabError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            LabError::Config(format!(
                "line {} column {} at `{}`: {}",
                inner.line(),
                inner.column(),
                path,
                inner
            ))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            LabError::Config(m) => LabError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn system(&self) -> Result<System, LabError> {
        System::new(
            self.parameters,
            self.nonlinearity.clone(),
            self.forcing_f.as_ref(),
            self.forcing_g.as_ref(),
            &self.grid,
        )
        .map_err(|e| LabError::Config(e.to_string()))
    }

    /// Consistency checks that span several blocks.
    pub fn validate(&self) -> Result<(), LabError> {
        let bad = |m: String| Err(LabError::Config(m));
        self.step.validate().map_err(|e| LabError::Config(e.to_string()))?;
        self.system()?;
        let dt = self.step.dt;
        let on_lattice = |name: &str, t0: f64, t1: f64| {
            step_count(t0, t1, dt).map(|_| ()).map_err(|e| LabError::Config(format!("{name}: {e}")))
        };
        match &self.experiment {
            Experiment::Simulate(o) => {
                o.initial.validate().map_err(LabError::Config)?;
                on_lattice("simulate", o.t0, o.t_end)?;
                if o.stride == 0 {
                    return bad("simulate.stride must be at least 1".into());
                }
            }
            Experiment::Verify(o) => {
                o.initial.validate().map_err(LabError::Config)?;
                if o.dts.len() < 2 {
                    return bad("verify.dts needs at least two step sizes".into());
                }
                for &h in &o.dts {
                    if !(h.is_finite() && h > 0.0) {
                        return bad(format!("verify.dts entries must be positive, got {h}"));
                    }
                    step_count(o.t0, o.t_end, h).map_err(|e| LabError::Config(format!("verify: {e}")))?;
                }
                if o.dts.windows(2).any(|w| (w[1] * 2.0 - w[0]).abs() > 1e-12 * w[0]) {
                    return bad("verify.dts must halve from one entry to the next".into());
                }
                if !(o.halving_ratio > 0.0 && o.halving_ratio <= 1.0) {
                    return bad(format!("verify.halving_ratio must lie in (0, 1], got {}", o.halving_ratio));
                }
            }
            Experiment::Tails(o) => {
                o.initial.validate().map_err(LabError::Config)?;
                on_lattice("tails", o.t0, o.t_end)?;
                if o.stride == 0 {
                    return bad("tails.stride must be at least 1".into());
                }
                if o.k_list.is_empty() {
                    return bad("tails.k_list is empty".into());
                }
                let l = self.grid.half_length();
                for &k in &o.k_list {
                    if !(k > 0.0 && k <= l) {
                        return bad(format!("tail radius {k} must lie in (0, {l}] (grid half_length)"));
                    }
                }
                if let Some(b) = &o.sampled {
                    if o.initial != InitialCondition::Zero {
                        return bad("tails: give either `initial` or `sampled`, not both".into());
                    }
                    if b.bundle_size == 0 {
                        return bad("tails.sampled.bundle_size must be at least 1".into());
                    }
                    if let InitialSource::Basin(basin) = &b.source {
                        basin.validate(&self.parameters).map_err(|e| LabError::Config(e.to_string()))?;
                    }
                }
                if !(o.window_start >= o.t0 && o.window_start <= o.t_end) {
                    return bad(format!("tails.window_start {} outside [t0, t_end]", o.window_start));
                }
            }
            Experiment::Pullback(o) => {
                o.schedule(o.tau, self.seed).validate().map_err(|e| LabError::Config(e.to_string()))?;
                if let InitialSource::Basin(b) = &o.source {
                    b.validate(&self.parameters).map_err(|e| LabError::Config(e.to_string()))?;
                }
                for &d in &o.depths {
                    on_lattice("pullback depth", o.tau - d, o.tau)?;
                }
                if let Some(t) = o.invariance_duration {
                    if !(t >= 0.0) {
                        return bad(format!("invariance_duration must be nonnegative, got {t}"));
                    }
                    on_lattice("invariance_duration", o.tau, o.tau + t)?;
                }
                if !(o.slack >= 0.0) {
                    return bad(format!("slack must be nonnegative, got {}", o.slack));
                }
            }
            Experiment::Sweep(o) => {
                if o.epsilons.is_empty() {
                    return bad("sweep.epsilons is empty".into());
                }
                let eps0 = self.parameters.epsilon0();
                for &e in &o.epsilons {
                    if !(e > 0.0 && e <= eps0) {
                        return bad(format!("sweep epsilon {e} must lie in (0, {eps0}] = (0, min(1, lambda/gamma)]"));
                    }
                }
                if o.options.bundle_size < 2 {
                    return bad("sweep.options.bundle_size must be at least 2".into());
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let text = serde_json::to_string(self).expect("config serializes");
        format!("{:x}", Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "parameters": {"nu": 1, "lambda": 1, "epsilon": 0.1, "gamma": 1},
        "grid": {"dim": 1, "half_length": 10, "points_per_axis": 99},
        "step": {"dt": 0.01, "scheme": "imex_cn"},
        "experiment": {"simulate": {"t_end": 1}}
    }"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.nonlinearity, NonlinearitySpec::default());
        assert_eq!(c.seed, 0);
        assert!(c.forcing_f.is_none());
        match c.experiment {
            Experiment::Simulate(o) => {
                assert_eq!(o.stride, 1);
                assert_eq!(o.initial, InitialCondition::Zero);
            }
            _ => panic!("wrong experiment"),
        }
    }

    #[test]
    fn round_trip_is_stable() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        let again = RunConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
    }

    #[test]
    fn unknown_field_reports_location() {
        let text = MINIMAL.replace("\"scheme\"", "\"shceme\"");
        let err = RunConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("line 4"), "{err}");
        assert!(err.contains("step"), "{err}");
        assert!(err.contains("shceme"), "{err}");
    }

    #[test]
    fn epsilon_constraint_is_a_config_error() {
        let text = MINIMAL.replace("\"epsilon\": 0.1", "\"epsilon\": 1.5");
        let err = RunConfig::from_json(&text).unwrap_err();
        assert!(matches!(err, LabError::Config(_)));
        assert!(err.to_string().contains("epsilon exceeds min(1, lambda/gamma)"));
    }

    #[test]
    fn tail_radius_beyond_box_rejected() {
        let text = MINIMAL.replace(
            r#"{"simulate": {"t_end": 1}}"#,
            r#"{"tails": {"t_end": 1, "k_list": [5, 12], "window_start": 0}}"#,
        );
        let err = RunConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("tail radius 12"), "{err}");
    }

    #[test]
    fn off_lattice_end_rejected() {
        let text = MINIMAL.replace("\"t_end\": 1", "\"t_end\": 1.005");
        assert!(RunConfig::from_json(&text).is_err());
    }
}
