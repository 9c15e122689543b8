//! Time stepping for
//!
//! ```text
//! u_t = νΔu − λu − h(u) − v + f(t)
//! v_t = ε(u − γv) + εg(t)
//! ```
//!
//! Diffusion and the `λ` term are implicit, `h`, `v` and `f` explicit. The
//! `v` equation is linear in `v` and is integrated with the exact factor
//! `e^{−εγ dt}` (or optionally by the same θ-method as `u`).
//!
//! Steps are placed on the lattice `t_n = n·dt`: both endpoints of an
//! evolution must lie on it, which makes `evolve(s→t)` followed by
//! `evolve(t→r)` bitwise identical to `evolve(s→r)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::grid::{Field, Grid};
use crate::linalg::ShiftedOperator;
use crate::math::{exp, expm1, round};
use crate::model::{Forcing, ForcingSpec, NonlinearitySpec, Parameters, Role};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// First order: backward Euler for the linear part, forward Euler for
    /// the rest.
    ImexEuler,
    /// Second order: Crank–Nicolson for the linear part, explicit midpoint
    /// (with a half-step predictor) for the rest.
    ImexCn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VUpdate {
    ExactIntegratingFactor,
    SameScheme,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    pub dt: f64,
    pub scheme: Scheme,
    #[serde(default = "default_v_update")]
    pub v_update: VUpdate,
}

fn default_v_update() -> VUpdate {
    VUpdate::ExactIntegratingFactor
}

impl StepConfig {
    pub fn new(dt: f64, scheme: Scheme) -> Self {
        StepConfig { dt, scheme, v_update: VUpdate::ExactIntegratingFactor }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Domain(format!("dt must be positive and finite, got {}", self.dt)));
        }
        Ok(())
    }
}

/// Solution snapshot `(t, u, v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: f64,
    pub u: Field,
    pub v: Field,
}

impl State {
    pub fn new(t: f64, u: Field, v: Field) -> Result<Self> {
        if u.grid() != v.grid() {
            return Err(Error::GridMismatch("u and v live on different grids".into()));
        }
        Ok(State { t, u, v })
    }

    pub fn zeros(grid: &Grid, t: f64) -> Self {
        State { t, u: Field::zeros(grid), v: Field::zeros(grid) }
    }

    /// `ε‖u‖² + ‖v‖²`.
    pub fn energy(&self, epsilon: f64) -> f64 {
        epsilon * self.u.l2_norm_sq() + self.v.l2_norm_sq()
    }
}

/// State with `v = v₁ + v₂`: `v₁` solves the homogeneous decay
/// `v₁′ = −εγv₁` from the initial `v`, `v₂` carries everything else and
/// starts at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitState {
    pub t: f64,
    pub u: Field,
    pub v1: Field,
    pub v2: Field,
}

impl SplitState {
    pub fn from_state(state: &State) -> Self {
        SplitState {
            t: state.t,
            u: state.u.clone(),
            v1: state.v.clone(),
            v2: Field::zeros(state.v.grid()),
        }
    }

    pub fn v(&self) -> Field {
        Field::from_raw(self.v1.grid(), self.v1.values().iter().zip(self.v2.values()).map(|(a, b)| a + b).collect())
    }

    pub fn to_state(&self) -> State {
        State { t: self.t, u: self.u.clone(), v: self.v() }
    }
}

/// Parameters, nonlinearity and forcings bound to one grid.
#[derive(Debug, Clone)]
pub struct System {
    params: Parameters,
    nonlinearity: NonlinearitySpec,
    grid: Grid,
    f: Forcing,
    g: Forcing,
}

impl System {
    pub fn new(
        params: Parameters,
        nonlinearity: NonlinearitySpec,
        f: Option<&ForcingSpec>,
        g: Option<&ForcingSpec>,
        grid: &Grid,
    ) -> Result<Self> {
        nonlinearity.check_dimension(grid.dim())?;
        for (spec, role) in [(f, Role::F), (g, Role::G)] {
            if let Some(s) = spec {
                if s.role() != role {
                    return Err(Error::Domain(format!("forcing with role {:?} passed as {:?}", s.role(), role)));
                }
            }
        }
        let bind = |s: Option<&ForcingSpec>| match s {
            Some(s) => Forcing::new(s, grid, &params),
            None => Forcing::zero(grid),
        };
        Ok(System { params, nonlinearity, grid: *grid, f: bind(f), g: bind(g) })
    }

    pub fn params(&self) -> &Parameters {
        &self.params
    }

    pub fn nonlinearity(&self) -> &NonlinearitySpec {
        &self.nonlinearity
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn f(&self) -> &Forcing {
        &self.f
    }

    pub fn g(&self) -> &Forcing {
        &self.g
    }

    /// Same system with another `ε` (forcings are rebound to the new `σ`).
    pub fn with_epsilon(&self, epsilon: f64) -> Result<System> {
        let params = self.params.with_epsilon(epsilon)?;
        System::new(params, self.nonlinearity.clone(), self.f.spec(), self.g.spec(), &self.grid)
    }

    /// Advisory step size: beyond it the explicit treatment of `h` and of
    /// the `u`–`v` coupling is typically inaccurate.
    pub fn advisory_dt_max(&self) -> f64 {
        let p = &self.params;
        let rate = p.lambda() + 1.0 + self.nonlinearity.lower_derivative_bound() + p.epsilon() * p.gamma();
        (0.5 / rate).min(0.1)
    }
}

/// Observer callback invoked at step 0 and every `stride` steps.
pub type Observer<'a, S> = &'a mut dyn FnMut(usize, &S);

struct Stepper {
    scheme: Scheme,
    v_update: VUpdate,
    dt: f64,
    op: ShiftedOperator,
    decay: f64,
    source_weight: f64,
    decay_half: f64,
    source_weight_half: f64,
    rhs: Vec<f64>,
    work: Vec<f64>,
    v_total: Vec<f64>,
    u_half: Vec<f64>,
    v_half: Vec<f64>,
}

impl Stepper {
    fn new(system: &System, config: &StepConfig) -> Self {
        let p = system.params;
        let dt = config.dt;
        let a = match config.scheme {
            Scheme::ImexEuler => dt,
            Scheme::ImexCn => 0.5 * dt,
        };
        let op = ShiftedOperator::new(&system.grid, a, p.nu(), p.lambda());
        let rate = p.epsilon() * p.gamma();
        let n = system.grid.len();
        Stepper {
            scheme: config.scheme,
            v_update: config.v_update,
            dt,
            op,
            decay: exp(-rate * dt),
            source_weight: -expm1(-rate * dt) / p.gamma(),
            decay_half: exp(-rate * 0.5 * dt),
            source_weight_half: -expm1(-rate * 0.5 * dt) / p.gamma(),
            rhs: vec![0.0; n],
            work: vec![0.0; n],
            v_total: vec![0.0; n],
            u_half: vec![0.0; n],
            v_half: vec![0.0; n],
        }
    }

    /// Advances from `t0` to `t0 + dt`. `v` is updated with the full source;
    /// `v_hom`, if present, is added to `v` when coupling into the `u`
    /// equation and is left for the caller to advance.
    fn step(
        &mut self,
        system: &System,
        t0: f64,
        t1: f64,
        u: &mut [f64],
        v: &mut [f64],
        v_hom: Option<&[f64]>,
    ) -> Result<()> {
        let p = system.params;
        let (eps, gamma) = (p.epsilon(), p.gamma());
        let h = &system.nonlinearity;
        let f = system.f.profile().values();
        let g = system.g.profile().values();
        let dt = self.dt;
        match v_hom {
            Some(vh) => {
                for i in 0..v.len() {
                    self.v_total[i] = v[i] + vh[i];
                }
            }
            None => self.v_total.copy_from_slice(v),
        }
        match self.scheme {
            Scheme::ImexEuler => {
                let af = system.f.amplitude(t0);
                for i in 0..u.len() {
                    let nonlin = -self.v_total[i] - h.value(u[i]) + af * f[i];
                    self.rhs[i] = u[i] + dt * nonlin;
                }
                self.op.solve(&self.rhs, &mut self.work)?;
                u.copy_from_slice(&self.work);
                let ag = system.g.amplitude(t1);
                match self.v_update {
                    VUpdate::ExactIntegratingFactor => {
                        for i in 0..v.len() {
                            v[i] = self.decay * v[i] + self.source_weight * (u[i] + ag * g[i]);
                        }
                    }
                    VUpdate::SameScheme => {
                        let denom = 1.0 + eps * gamma * dt;
                        for i in 0..v.len() {
                            v[i] = (v[i] + dt * eps * (u[i] + ag * g[i])) / denom;
                        }
                    }
                }
            }
            Scheme::ImexCn => {
                let th = 0.5 * (t0 + t1);
                let (af0, ag0) = (system.f.amplitude(t0), system.g.amplitude(t0));
                // half-step predictor for the explicit terms
                for i in 0..u.len() {
                    let nonlin = -self.v_total[i] - h.value(u[i]) + af0 * f[i];
                    self.rhs[i] = u[i] + 0.5 * dt * nonlin;
                }
                self.op.solve(&self.rhs, &mut self.u_half)?;
                match self.v_update {
                    VUpdate::ExactIntegratingFactor => {
                        for i in 0..v.len() {
                            self.v_half[i] =
                                self.decay_half * self.v_total[i] + self.source_weight_half * (u[i] + ag0 * g[i]);
                        }
                    }
                    VUpdate::SameScheme => {
                        let denom = 1.0 + 0.5 * eps * gamma * dt;
                        for i in 0..v.len() {
                            self.v_half[i] = (self.v_total[i] + 0.5 * dt * eps * (u[i] + ag0 * g[i])) / denom;
                        }
                    }
                }
                let (afh, agh) = (system.f.amplitude(th), system.g.amplitude(th));
                self.op.apply_with(0.5 * dt, u, &mut self.rhs);
                for i in 0..u.len() {
                    let nonlin = -self.v_half[i] - h.value(self.u_half[i]) + afh * f[i];
                    self.rhs[i] += dt * nonlin;
                }
                self.op.solve(&self.rhs, &mut self.work)?;
                match self.v_update {
                    VUpdate::ExactIntegratingFactor => {
                        for i in 0..v.len() {
                            let source = 0.5 * (u[i] + self.work[i]) + agh * g[i];
                            v[i] = self.decay * v[i] + self.source_weight * source;
                        }
                    }
                    VUpdate::SameScheme => {
                        let k = 0.5 * eps * gamma * dt;
                        for i in 0..v.len() {
                            let source = 0.5 * (u[i] + self.work[i]) + agh * g[i];
                            v[i] = ((1.0 - k) * v[i] + dt * eps * source) / (1.0 + k);
                        }
                    }
                }
                u.copy_from_slice(&self.work);
            }
        }
        Ok(())
    }
}

/// Lattice indices `(n0, n1)` with `t0 = n0·dt`, `t_end = n1·dt`.
fn lattice(t0: f64, t_end: f64, dt: f64) -> Result<(i64, i64)> {
    if !(t0.is_finite() && t_end.is_finite()) {
        return Err(Error::Schedule(format!("non-finite time interval [{t0}, {t_end}]")));
    }
    if t_end < t0 {
        return Err(Error::Schedule(format!("end time {t_end} precedes start time {t0}")));
    }
    let snap = |t: f64| -> Result<i64> {
        let k = round(t / dt);
        if (k * dt - t).abs_diff_ok(dt) {
            Ok(k as i64)
        } else {
            Err(Error::Schedule(format!("time {t} is not on the step lattice of dt = {dt}")))
        }
    };
    Ok((snap(t0)?, snap(t_end)?))
}

trait LatticeTol {
    fn abs_diff_ok(self, dt: f64) -> bool;
}

impl LatticeTol for f64 {
    fn abs_diff_ok(self, dt: f64) -> bool {
        crate::math::abs(self) <= 1e-6 * dt
    }
}

fn check_finite(t: f64, fields: &[&[f64]]) -> Result<()> {
    for (k, values) in fields.iter().enumerate() {
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { t, detail: format!("component {k}, node {i}") });
        }
    }
    Ok(())
}

fn check_state_grid(system: &System, fields: &[&Field]) -> Result<()> {
    for f in fields {
        system.grid.check(f)?;
    }
    Ok(())
}

/// Integrates from `state.t` to `t_end`. `observer` is called with the
/// step index at step 0 and at every multiple of `stride`.
pub fn evolve(
    system: &System,
    state: &State,
    t_end: f64,
    config: &StepConfig,
    stride: usize,
    observer: Option<Observer<'_, State>>,
) -> Result<State> {
    config.validate()?;
    if stride == 0 {
        return Err(Error::StrideMismatch("observer stride must be at least 1".into()));
    }
    check_state_grid(system, &[&state.u, &state.v])?;
    let (n0, n1) = lattice(state.t, t_end, config.dt)?;
    let mut stepper = Stepper::new(system, config);
    let mut current = state.clone();
    current.t = n0 as f64 * config.dt;
    let mut observer = observer;
    if let Some(obs) = observer.as_mut() {
        obs(0, &current);
    }
    for n in n0..n1 {
        let t0 = n as f64 * config.dt;
        let t1 = (n + 1) as f64 * config.dt;
        let (u, v) = (current.u.values_mut(), current.v.values_mut());
        stepper.step(system, t0, t1, u, v, None)?;
        current.t = t1;
        check_finite(t1, &[current.u.values(), current.v.values()])?;
        let k = (n + 1 - n0) as usize;
        if k.is_multiple_of(stride) {
            if let Some(obs) = observer.as_mut() {
                obs(k, &current);
            }
        }
    }
    Ok(current)
}

/// As [`evolve`], tracking the decomposition `v = v₁ + v₂`. Requires the
/// exact integrating factor for `v`.
pub fn evolve_split(
    system: &System,
    state: &SplitState,
    t_end: f64,
    config: &StepConfig,
    stride: usize,
    observer: Option<Observer<'_, SplitState>>,
) -> Result<SplitState> {
    config.validate()?;
    if config.v_update != VUpdate::ExactIntegratingFactor {
        return Err(Error::Domain("split evolution requires the exact integrating factor for v".into()));
    }
    if stride == 0 {
        return Err(Error::StrideMismatch("observer stride must be at least 1".into()));
    }
    check_state_grid(system, &[&state.u, &state.v1, &state.v2])?;
    let (n0, n1) = lattice(state.t, t_end, config.dt)?;
    let rate = system.params.epsilon() * system.params.gamma();
    let mut stepper = Stepper::new(system, config);
    let mut current = state.clone();
    current.t = n0 as f64 * config.dt;
    let mut observer = observer;
    if let Some(obs) = observer.as_mut() {
        obs(0, &current);
    }
    for n in n0..n1 {
        let t0 = n as f64 * config.dt;
        let t1 = (n + 1) as f64 * config.dt;
        let SplitState { u, v1, v2, .. } = &mut current;
        stepper.step(system, t0, t1, u.values_mut(), v2.values_mut(), Some(v1.values()))?;
        // v₁ from its closed form rather than by repeated multiplication
        let factor = exp(-rate * (n + 1 - n0) as f64 * config.dt);
        for (x, &x0) in v1.values_mut().iter_mut().zip(state.v1.values()) {
            *x = factor * x0;
        }
        current.t = t1;
        check_finite(t1, &[current.u.values(), current.v1.values(), current.v2.values()])?;
        let k = (n + 1 - n0) as usize;
        if k.is_multiple_of(stride) {
            if let Some(obs) = observer.as_mut() {
                obs(k, &current);
            }
        }
    }
    Ok(current)
}

/// Step counts between two lattice times.
pub fn step_count(t0: f64, t_end: f64, dt: f64) -> Result<usize> {
    let (n0, n1) = lattice(t0, t_end, dt)?;
    Ok((n1 - n0) as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_parameters, NonlinearityKind, SpaceProfile, TimeProfile};

    fn linear_system(grid: &Grid) -> System {
        let p = make_parameters(1.0, 1.0, 0.1, 1.0).unwrap();
        let h = NonlinearitySpec::new(NonlinearityKind::Zero, 0.0, 0.0).unwrap();
        System::new(p, h, None, None, grid).unwrap()
    }

    fn bump(grid: &Grid) -> Field {
        Field::from_fn(grid, |x, y| libm::exp(-(x * x + y * y)))
    }

    #[test]
    fn zero_state_stays_zero_without_forcing() {
        let grid = Grid::new(1, 5.0, 41).unwrap();
        let sys = System::new(
            make_parameters(1.0, 1.0, 0.1, 1.0).unwrap(),
            NonlinearitySpec::default(),
            None,
            None,
            &grid,
        )
        .unwrap();
        for scheme in [Scheme::ImexEuler, Scheme::ImexCn] {
            let out = evolve(&sys, &State::zeros(&grid, 0.0), 1.0, &StepConfig::new(0.01, scheme), 1, None).unwrap();
            assert!(out.u.values().iter().chain(out.v.values()).all(|&x| x == 0.0));
            assert!((out.t - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cocycle_is_bitwise() {
        let grid = Grid::new(1, 5.0, 41).unwrap();
        let p = make_parameters(1.0, 1.0, 0.2, 1.0).unwrap();
        let f = ForcingSpec::new(TimeProfile::SqrtAbsT, SpaceProfile::Gaussian { amplitude: 1.0, width: 1.0 }, Role::F)
            .unwrap();
        let sys = System::new(p, NonlinearitySpec::default(), Some(&f), None, &grid).unwrap();
        let s0 = State::new(-1.0, bump(&grid), bump(&grid).scaled(0.5)).unwrap();
        for scheme in [Scheme::ImexEuler, Scheme::ImexCn] {
            let cfg = StepConfig::new(0.01, scheme);
            let direct = evolve(&sys, &s0, 2.0, &cfg, 1, None).unwrap();
            let mid = evolve(&sys, &s0, 0.37, &cfg, 1, None).unwrap();
            let chained = evolve(&sys, &mid, 2.0, &cfg, 1, None).unwrap();
            assert_eq!(direct, chained);
        }
    }

    #[test]
    fn schedule_errors() {
        let grid = Grid::new(1, 5.0, 11).unwrap();
        let sys = linear_system(&grid);
        let s = State::zeros(&grid, 0.0);
        let cfg = StepConfig::new(0.1, Scheme::ImexCn);
        assert!(matches!(evolve(&sys, &s, -1.0, &cfg, 1, None), Err(Error::Schedule(_))));
        assert!(matches!(evolve(&sys, &s, 0.05, &cfg, 1, None), Err(Error::Schedule(_))));
        assert!(matches!(evolve(&sys, &s, 1.0, &cfg, 0, None), Err(Error::StrideMismatch(_))));
        let bad = StepConfig::new(0.0, Scheme::ImexCn);
        assert!(matches!(evolve(&sys, &s, 1.0, &bad, 1, None), Err(Error::Domain(_))));
        let other = State::zeros(&Grid::new(1, 5.0, 13).unwrap(), 0.0);
        assert!(matches!(evolve(&sys, &other, 1.0, &cfg, 1, None), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn observer_stride() {
        let grid = Grid::new(1, 5.0, 11).unwrap();
        let sys = linear_system(&grid);
        let mut seen = Vec::new();
        let mut obs = |k: usize, s: &State| seen.push((k, s.t));
        evolve(&sys, &State::zeros(&grid, 0.0), 1.0, &StepConfig::new(0.1, Scheme::ImexCn), 3, Some(&mut obs))
            .unwrap();
        let ks: Vec<usize> = seen.iter().map(|p| p.0).collect();
        assert_eq!(ks, [0, 3, 6, 9]);
    }

    #[test]
    fn blowup_reports_non_finite() {
        let grid = Grid::new(1, 5.0, 11).unwrap();
        let sys = System::new(
            make_parameters(1.0, 1.0, 0.1, 1.0).unwrap(),
            NonlinearitySpec::default(),
            None,
            None,
            &grid,
        )
        .unwrap();
        let big = Field::from_fn(&grid, |_, _| 1e3);
        let s = State::new(0.0, big, Field::zeros(&grid)).unwrap();
        let err = evolve(&sys, &s, 10.0, &StepConfig::new(0.5, Scheme::ImexEuler), 1, None).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }), "{err:?}");
    }

    #[test]
    fn split_matches_unsplit() {
        let grid = Grid::new(1, 5.0, 41).unwrap();
        let p = make_parameters(1.0, 1.0, 0.2, 1.0).unwrap();
        let g = ForcingSpec::new(TimeProfile::Constant, SpaceProfile::Gaussian { amplitude: 1.0, width: 1.0 }, Role::G)
            .unwrap();
        let sys = System::new(p, NonlinearitySpec::default(), None, Some(&g), &grid).unwrap();
        let s0 = State::new(0.0, bump(&grid), bump(&grid).scaled(-0.7)).unwrap();
        for scheme in [Scheme::ImexEuler, Scheme::ImexCn] {
            let cfg = StepConfig::new(0.01, scheme);
            let whole = evolve(&sys, &s0, 3.0, &cfg, 1, None).unwrap();
            let split = evolve_split(&sys, &SplitState::from_state(&s0), 3.0, &cfg, 1, None).unwrap();
            let diff = whole.v.sub(&split.v()).unwrap().l2_norm();
            assert!(diff < 1e-12, "{diff}");
            let expected = libm::exp(-p.epsilon() * p.gamma() * 3.0);
            let ratio = split.v1.l2_norm() / s0.v.l2_norm();
            assert!((ratio - expected).abs() < 1e-13);
        }
        let cfg = StepConfig { dt: 0.01, scheme: Scheme::ImexCn, v_update: VUpdate::SameScheme };
        assert!(evolve_split(&sys, &SplitState::from_state(&s0), 1.0, &cfg, 1, None).is_err());
    }

    #[test]
    fn two_d_runs() {
        let grid = Grid::new(2, 4.0, 21).unwrap();
        let sys = System::new(
            make_parameters(1.0, 1.0, 0.1, 1.0).unwrap(),
            NonlinearitySpec::default(),
            None,
            None,
            &grid,
        )
        .unwrap();
        let s0 = State::new(0.0, bump(&grid), Field::zeros(&grid)).unwrap();
        let out = evolve(&sys, &s0, 1.0, &StepConfig::new(0.05, Scheme::ImexCn), 1, None).unwrap();
        assert!(out.energy(0.1) < s0.energy(0.1));
    }

    #[test]
    fn integrating_factor_for_frozen_source() {
        // εγ = 0.2, γ = 1, duration 5, U + G = 1, v₀ = 0
        let grid = Grid::new(1, 1.0, 3).unwrap();
        let p = make_parameters(1.0, 1.0, 0.2, 1.0).unwrap();
        let sys = System::new(p, NonlinearitySpec::default(), None, None, &grid).unwrap();
        let stepper = Stepper::new(&sys, &StepConfig::new(5.0, Scheme::ImexEuler));
        let v = stepper.decay * 0.0 + stepper.source_weight * 1.0;
        assert!((v - 0.632_120_558_828_557_7).abs() < 1e-15);
        // explicit RK4 with a fine step as cross-check
        let (mut w, h) = (0.0f64, 1e-3);
        let rhs = |w: f64| 0.2 * (1.0 - w);
        for _ in 0..5000 {
            let k1 = rhs(w);
            let k2 = rhs(w + 0.5 * h * k1);
            let k3 = rhs(w + 0.5 * h * k2);
            let k4 = rhs(w + h * k3);
            w += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        assert!((w - v).abs() < 1e-12);
    }
}
