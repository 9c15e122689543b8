//! Pullback attractor approximation: bundles of initial states taken at
//! `τ − t_n` are evolved to `τ` for an increasing list of depths `t_n`;
//! the endpoint cloud at the deepest depth approximates `𝒜(τ)`.
//!
//! Member evolutions are independent and are dispatched through an
//! [`Executor`]; results are reassembled in member order, so the output does
//! not depend on the executor.

use alloc::format;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::analysis::{absorbing_bounds, check_absorption, AbsorptionReport, BoundSet};
use crate::grid::{Field, Grid};
use crate::integrator::{evolve_split, SplitState, State, StepConfig, System};
use crate::math::{abs, sin, sqrt, PI};
use crate::model::{BasinFamily, TimeProfile};
use crate::{Error, Result};

/// Maps a function over items, returning results in input order.
pub trait Executor {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        items.into_iter().map(f).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PullbackSchedule {
    pub tau: f64,
    pub depths: Vec<f64>,
    pub bundle_size: usize,
    pub seed: u64,
}

impl PullbackSchedule {
    pub fn validate(&self) -> Result<()> {
        if !self.tau.is_finite() {
            return Err(Error::Schedule(format!("tau must be finite, got {}", self.tau)));
        }
        if self.depths.is_empty() {
            return Err(Error::Schedule("depth list is empty".into()));
        }
        if self.depths.iter().any(|&d| !(d.is_finite() && d > 0.0)) {
            return Err(Error::Schedule("depths must be positive and finite".into()));
        }
        if self.depths.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Schedule("depths must be strictly increasing".into()));
        }
        if self.bundle_size < 2 {
            return Err(Error::Schedule(format!("bundle_size must be at least 2, got {}", self.bundle_size)));
        }
        Ok(())
    }
}

/// Where initial states are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSource {
    /// `‖(u, v)‖ ≤ A·e^{β(τ − t)}` at the start time.
    Basin(BasinFamily),
    /// `‖u‖ ≤ u_l2_bound`, `‖v‖ ≤ v_l2_bound` of the absorbing set at the
    /// start time.
    Absorbing,
}

const MODES: usize = 8;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one bundle member: mixes the run seed, a stream index (the depth
/// slot) and the member index.
pub fn member_seed(seed: u64, stream: u64, member: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ stream) ^ member)
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A random combination of the first Dirichlet sine modes of the box,
/// coefficient `k` uniform in `[−1/k, 1/k]`, scaled to `‖·‖ = norm`.
fn random_field(grid: &Grid, rng: &mut ChaCha8Rng, norm: f64) -> Field {
    let l = grid.half_length();
    let wave = |k: usize, x: f64| sin(k as f64 * PI * (x + l) / (2.0 * l));
    let mut terms = Vec::with_capacity(MODES);
    for _ in 0..MODES {
        let kx = 1 + (rng.next_u64() % MODES as u64) as usize;
        let ky = 1 + (rng.next_u64() % MODES as u64) as usize;
        let amp = (2.0 * uniform(rng) - 1.0) / (kx.max(ky)) as f64;
        terms.push((kx, ky, amp));
    }
    let dim = grid.dim();
    let raw = Field::from_fn(grid, |x, y| {
        terms
            .iter()
            .map(|&(kx, ky, a)| if dim == 1 { a * wave(kx, x) } else { a * wave(kx, x) * wave(ky, y) })
            .sum()
    });
    let n = raw.l2_norm();
    if n == 0.0 || norm == 0.0 {
        return Field::zeros(grid);
    }
    raw.scaled(norm / n)
}

/// Deterministic pseudo-random states at `t_start` with
/// `sqrt(‖u‖² + ‖v‖²) ≤ A·e^{β t_start}`.
pub fn sample_initial_family(grid: &Grid, basin: &BasinFamily, t_start: f64, count: usize, seed: u64) -> Vec<State> {
    (0..count)
        .map(|i| sample_basin_member(grid, basin.radius(t_start), t_start, member_seed(seed, 0, i as u64)))
        .collect()
}

fn sample_basin_member(grid: &Grid, radius: f64, t: f64, seed: u64) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = radius * (0.5 + 0.5 * uniform(&mut rng));
    let angle = 0.5 * PI * uniform(&mut rng);
    let u = random_field(grid, &mut rng, scale * crate::math::cos(angle));
    let v = random_field(grid, &mut rng, scale * sin(angle));
    State { t, u, v }
}

fn sample_absorbing_member(grid: &Grid, bounds: &BoundSet, t: f64, seed: u64) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let su = 0.5 + 0.5 * uniform(&mut rng);
    let sv = 0.5 + 0.5 * uniform(&mut rng);
    let u = random_field(grid, &mut rng, su * bounds.u_l2_bound);
    let v = random_field(grid, &mut rng, sv * bounds.v_l2_bound);
    State { t, u, v }
}

/// Draws member `member` of depth slot `slot` at time `t_start`.
pub fn sample_member(system: &System, source: &InitialSource, t_start: f64, seed: u64, slot: usize, member: usize) -> Result<State> {
    let s = member_seed(seed, slot as u64, member as u64);
    match source {
        InitialSource::Basin(b) => {
            b.validate(system.params())?;
            Ok(sample_basin_member(system.grid(), b.radius(t_start), t_start, s))
        }
        InitialSource::Absorbing => {
            let bounds = absorbing_bounds(system, t_start)?;
            Ok(sample_absorbing_member(system.grid(), &bounds, t_start, s))
        }
    }
}

fn check_start(init_t: f64, tau: f64, depth: f64, dt: f64) -> Result<()> {
    if abs(init_t - (tau - depth)) > 1e-6 * dt {
        return Err(Error::Schedule(format!(
            "initial time {init_t} does not equal tau - depth = {}",
            tau - depth
        )));
    }
    Ok(())
}

/// Evolves `init` (given at `tau − depth`) to `tau`.
pub fn pullback_endpoint(system: &System, tau: f64, depth: f64, init: &State, config: &StepConfig) -> Result<State> {
    Ok(pullback_endpoint_split(system, tau, depth, init, config)?.to_state())
}

/// As [`pullback_endpoint`], keeping the `v = v₁ + v₂` decomposition.
pub fn pullback_endpoint_split(
    system: &System,
    tau: f64,
    depth: f64,
    init: &State,
    config: &StepConfig,
) -> Result<SplitState> {
    check_start(init.t, tau, depth, config.dt)?;
    check_depth_safe(system, tau, depth)?;
    evolve_split(system, &SplitState::from_state(init), tau, config, usize::MAX, None)
}

/// Largest exponent magnitude allowed in forcing amplitudes over a run.
const SAFE_EXPONENT: f64 = 600.0;

/// Rejects depths at which an exponentially growing forcing would
/// overflow.
pub fn check_depth_safe(system: &System, tau: f64, depth: f64) -> Result<()> {
    let sigma = system.params().sigma();
    for forcing in [system.f(), system.g()] {
        if let Some(spec) = forcing.spec() {
            if let TimeProfile::ExpSigmaFrac { c } = spec.time_profile() {
                let reach = abs(tau).max(abs(tau - depth));
                if c * sigma * reach > SAFE_EXPONENT {
                    return Err(Error::Schedule(format!(
                        "depth {depth} too large for exp forcing: c*sigma*|t| = {} exceeds {SAFE_EXPONENT}",
                        c * sigma * reach
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Endpoints at `tau` from one depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorCloud {
    pub tau: f64,
    pub depth: f64,
    pub points: Vec<SplitState>,
}

impl AttractorCloud {
    pub fn states(&self) -> Vec<State> {
        self.points.iter().map(SplitState::to_state).collect()
    }

    pub fn max_norm_u(&self) -> f64 {
        self.points.iter().map(|p| p.u.l2_norm()).fold(0.0, f64::max)
    }

    pub fn max_norm_v(&self) -> f64 {
        self.points.iter().map(|p| p.v().l2_norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthRecord {
    pub depth: f64,
    /// Symmetric Hausdorff distance to the previous depth's cloud.
    pub hausdorff_to_prev: Option<f64>,
    pub max_norm_u: f64,
    pub max_norm_v: f64,
    pub all_absorbed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorRun {
    pub schedule: PullbackSchedule,
    pub bounds: BoundSet,
    pub slack: f64,
    pub clouds: Vec<AttractorCloud>,
    pub records: Vec<DepthRecord>,
    /// First slot from which every deeper slot is fully absorbed.
    pub absorption_index: Option<usize>,
}

impl AttractorRun {
    /// The cloud from the deepest depth.
    pub fn final_cloud(&self) -> &AttractorCloud {
        self.clouds.last().expect("a validated schedule has at least one depth")
    }

    pub fn absorption_depth(&self) -> Option<f64> {
        self.absorption_index.map(|i| self.schedule.depths[i])
    }

    pub fn final_diagnostic(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.hausdorff_to_prev)
    }
}

/// Runs the schedule. Every member of every depth slot is an independent
/// job; a failing member aborts the run with its error.
pub fn approximate_attractor<E: Executor>(
    system: &System,
    schedule: &PullbackSchedule,
    source: &InitialSource,
    config: &StepConfig,
    slack: f64,
    executor: &E,
) -> Result<AttractorRun> {
    schedule.validate()?;
    config.validate()?;
    let tau = schedule.tau;
    for &d in &schedule.depths {
        check_depth_safe(system, tau, d)?;
    }
    let bounds = absorbing_bounds(system, tau)?;
    let mut jobs = Vec::with_capacity(schedule.depths.len() * schedule.bundle_size);
    for (slot, &depth) in schedule.depths.iter().enumerate() {
        for member in 0..schedule.bundle_size {
            jobs.push((slot, depth, member));
        }
    }
    let results = executor.map(jobs, |(slot, depth, member)| {
        let init = sample_member(system, source, tau - depth, schedule.seed, slot, member)?;
        pullback_endpoint_split(system, tau, depth, &init, config)
    });
    let mut results = results.into_iter();
    let mut clouds: Vec<AttractorCloud> = Vec::with_capacity(schedule.depths.len());
    let mut records = Vec::with_capacity(schedule.depths.len());
    for &depth in &schedule.depths {
        let mut points = Vec::with_capacity(schedule.bundle_size);
        for _ in 0..schedule.bundle_size {
            points.push(results.next().expect("one result per job")?);
        }
        let cloud = AttractorCloud { tau, depth, points };
        let all_absorbed =
            cloud.points.iter().all(|p| check_absorption(&p.to_state(), &bounds, slack).absorbed());
        let hausdorff_to_prev = match clouds.last() {
            Some(prev) => Some(hausdorff_distance(&prev.states(), &cloud.states())?),
            None => None,
        };
        records.push(DepthRecord {
            depth,
            hausdorff_to_prev,
            max_norm_u: cloud.max_norm_u(),
            max_norm_v: cloud.max_norm_v(),
            all_absorbed,
        });
        clouds.push(cloud);
    }
    let absorption_index = absorption_index(&records);
    Ok(AttractorRun { schedule: schedule.clone(), bounds, slack, clouds, records, absorption_index })
}

/// First index from which every record is fully absorbed.
pub fn absorption_index(records: &[DepthRecord]) -> Option<usize> {
    let mut index = None;
    for (i, r) in records.iter().enumerate().rev() {
        if r.all_absorbed {
            index = Some(i);
        } else {
            break;
        }
    }
    index
}

/// Per-member absorption reports of a cloud against `bounds`.
pub fn absorption_reports(cloud: &AttractorCloud, bounds: &BoundSet, slack: f64) -> Vec<AbsorptionReport> {
    cloud.points.iter().map(|p| check_absorption(&p.to_state(), bounds, slack)).collect()
}

fn state_distance(a: &State, b: &State) -> f64 {
    let du: f64 = a.u.values().iter().zip(b.u.values()).map(|(x, y)| (x - y) * (x - y)).sum();
    let dv: f64 = a.v.values().iter().zip(b.v.values()).map(|(x, y)| (x - y) * (x - y)).sum();
    sqrt((du + dv) * a.u.grid().cell_volume())
}

fn check_clouds(a: &[State], b: &[State]) -> Result<()> {
    let first = a.first().ok_or(Error::EmptyCloud)?;
    b.first().ok_or(Error::EmptyCloud)?;
    let grid = first.u.grid();
    for s in a.iter().chain(b) {
        grid.check(&s.u)?;
        grid.check(&s.v)?;
        if abs(s.t - first.t) > 1e-9 * (1.0 + abs(first.t)) {
            return Err(Error::Schedule(format!("cloud points at different times {} and {}", first.t, s.t)));
        }
    }
    Ok(())
}

/// `d(A, B) = sup_{a∈A} inf_{b∈B} ‖a − b‖` on `L² × L²`.
pub fn hausdorff_semi(a: &[State], b: &[State]) -> Result<f64> {
    check_clouds(a, b)?;
    Ok(a.iter()
        .map(|x| b.iter().map(|y| state_distance(x, y)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max))
}

/// `max(d(A, B), d(B, A))`.
pub fn hausdorff_distance(a: &[State], b: &[State]) -> Result<f64> {
    Ok(hausdorff_semi(a, b)?.max(hausdorff_semi(b, a)?))
}

/// Symmetric Hausdorff distance between the cloud at `τ` evolved by
/// `duration` and the cloud approximated directly at `τ + duration`.
pub fn invariance_defect<E: Executor>(
    system: &System,
    cloud: &AttractorCloud,
    later: &AttractorCloud,
    duration: f64,
    config: &StepConfig,
    executor: &E,
) -> Result<f64> {
    if !(duration >= 0.0) || abs(later.tau - (cloud.tau + duration)) > 1e-6 * config.dt {
        return Err(Error::Schedule(format!(
            "second cloud at {} does not match tau + t = {}",
            later.tau,
            cloud.tau + duration
        )));
    }
    let t_end = cloud.tau + duration;
    let moved: Vec<Result<SplitState>> = executor.map(cloud.points.clone(), |p| {
        evolve_split(system, &p, t_end, config, usize::MAX, None)
    });
    let moved: Vec<State> = moved.into_iter().map(|r| r.map(|s| s.to_state())).collect::<Result<_>>()?;
    hausdorff_distance(&moved, &later.states())
}

/// Greedy cover by `eta`-balls: repeatedly take the lowest-index uncovered
/// point as a center.
pub fn covering_number(points: &[State], eta: f64) -> Result<usize> {
    if !(eta > 0.0) {
        return Err(Error::Domain(format!("covering radius must be positive, got {eta}")));
    }
    let mut covered = alloc::vec![false; points.len()];
    let mut count = 0;
    for i in 0..points.len() {
        if covered[i] {
            continue;
        }
        count += 1;
        for j in i..points.len() {
            if !covered[j] && state_distance(&points[i], &points[j]) <= eta {
                covered[j] = true;
            }
        }
    }
    Ok(count)
}
