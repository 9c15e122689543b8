//! Energy functional, dissipation-inequality residuals, absorbing radii,
//! H¹ bounds and tail masses evaluated along trajectories.
//!
//! Bounds are stated in terms of the weighted history integrals
//! `I_f(τ) = ∫_{−∞}^{τ} e^{σξ}‖f(ξ)‖² dξ` (likewise `I_g`, `I_∇g`) and
//! `B(τ) = (ε/λ)I_f(τ) + (ε/γ)I_g(τ)`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::grid::{tail_mass, Grid};
use crate::integrator::{evolve, State, StepConfig, System};
use crate::math::{abs, exp, sqrt};
use crate::model::Parameters;
use crate::{Error, Result};

/// `ε‖u‖² + ‖v‖²`.
pub fn energy(state: &State, epsilon: f64) -> f64 {
    state.energy(epsilon)
}

/// Quantities recorded at one observation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub t: f64,
    pub energy: f64,
    pub u_l2_sq: f64,
    pub v_l2_sq: f64,
    pub grad_u_sq: f64,
    /// Exact `dE/dt` of the semi-discrete system at this state:
    /// `−2εν‖∇u‖² − 2ελ‖u‖² − 2ε⟨h(u),u⟩ − 2εγ‖v‖² + 2ε⟨f,u⟩ + 2ε⟨g,v⟩`.
    pub energy_rate: f64,
}

impl EnergySample {
    pub fn of(system: &System, state: &State) -> Self {
        let p = system.params();
        let eps = p.epsilon();
        let u_l2_sq = state.u.l2_norm_sq();
        let v_l2_sq = state.v.l2_norm_sq();
        let grad_u_sq = state.u.h1_seminorm_sq();
        let grid = system.grid();
        let h = system.nonlinearity();
        let (af, ag) = (system.f().amplitude(state.t), system.g().amplitude(state.t));
        let (f, g) = (system.f().profile().values(), system.g().profile().values());
        let (u, v) = (state.u.values(), state.v.values());
        let mut hu = 0.0;
        let mut fu = 0.0;
        let mut gv = 0.0;
        for i in 0..u.len() {
            hu += h.eval(u[i]).0 * u[i];
            fu += f[i] * u[i];
            gv += g[i] * v[i];
        }
        let w = grid.cell_volume();
        let energy_rate = 2.0
            * eps
            * (-p.nu() * grad_u_sq - p.lambda() * u_l2_sq - hu * w - p.gamma() * v_l2_sq + af * fu * w + ag * gv * w);
        EnergySample { t: state.t, energy: eps * u_l2_sq + v_l2_sq, u_l2_sq, v_l2_sq, grad_u_sq, energy_rate }
    }
}

/// Evolves `initial` to `t_end` and records an [`EnergySample`] every
/// `stride` steps (including the initial state).
pub fn record_energy(
    system: &System,
    initial: &State,
    t_end: f64,
    config: &StepConfig,
    stride: usize,
) -> Result<(State, Vec<EnergySample>)> {
    let mut samples = Vec::new();
    let mut obs = |_: usize, s: &State| samples.push(EnergySample::of(system, s));
    let end = evolve(system, initial, t_end, config, stride, Some(&mut obs))?;
    Ok((end, samples))
}

/// How the time-continuous inequality is discretized between samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualRule {
    /// Left-endpoint terms and forcing at `t_j`.
    Forward,
    /// Averaged endpoint terms and forcing at `t_{j+½}` (matches Crank–Nicolson).
    Midpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub dt: f64,
    pub rule: ResidualRule,
    /// `(t_j, r_j)`; nonpositive values mean the inequality holds.
    pub residuals: Vec<(f64, f64)>,
    pub max_residual: f64,
}

fn uniform_spacing(samples: &[EnergySample]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "residual needs at least two samples, got {}",
            samples.len()
        )));
    }
    let dt = samples[1].t - samples[0].t;
    if !(dt > 0.0) {
        return Err(Error::StrideMismatch(format!("non-increasing sample times ({dt})")));
    }
    for w in samples.windows(2) {
        let step = w[1].t - w[0].t;
        if abs(step - dt) > 1e-9 * dt.max(abs(w[1].t)) {
            return Err(Error::StrideMismatch(format!(
                "samples are not uniformly spaced: step {step} at t = {} vs {dt}",
                w[0].t
            )));
        }
    }
    Ok(dt)
}

/// Residual of `dE/dt + 2σE + 2εν‖∇u‖² ≤ (ε/λ)‖f‖² + (ε/γ)‖g‖²` on a
/// uniformly sampled trajectory:
///
/// `r_j = (E_{j+1} − E_j)/Δt + 2σE_j + 2εν‖∇u_j‖² − (ε/λ)‖f(t_j)‖² − (ε/γ)‖g(t_j)‖²`
/// for the forward rule.
pub fn energy_inequality_residual(
    system: &System,
    samples: &[EnergySample],
    rule: ResidualRule,
) -> Result<ResidualReport> {
    let dt = uniform_spacing(samples)?;
    let p = system.params();
    let (eps, nu, lambda, gamma, sigma) = (p.epsilon(), p.nu(), p.lambda(), p.gamma(), p.sigma());
    let mut residuals = Vec::with_capacity(samples.len() - 1);
    let mut max_residual = f64::NEG_INFINITY;
    for w in samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let rate = (b.energy - a.energy) / dt;
        let r = match rule {
            ResidualRule::Forward => {
                rate + 2.0 * sigma * a.energy + 2.0 * eps * nu * a.grad_u_sq
                    - eps / lambda * system.f().norm_sq(a.t)
                    - eps / gamma * system.g().norm_sq(a.t)
            }
            ResidualRule::Midpoint => {
                let tm = 0.5 * (a.t + b.t);
                rate + sigma * (a.energy + b.energy) + eps * nu * (a.grad_u_sq + b.grad_u_sq)
                    - eps / lambda * system.f().norm_sq(tm)
                    - eps / gamma * system.g().norm_sq(tm)
            }
        };
        max_residual = max_residual.max(r);
        residuals.push((a.t, r));
    }
    Ok(ResidualReport { dt, rule, residuals, max_residual })
}

/// Defect of the exact energy identity `dE/dt = energy_rate` between
/// samples: `|(E_{j+1} − E_j)/Δt − rate_j|` (forward) or with the averaged
/// rate (midpoint). Unlike the inequality residual it carries no continuum
/// slack, so it measures the time discretization error alone.
pub fn energy_identity_defect(samples: &[EnergySample], rule: ResidualRule) -> Result<ResidualReport> {
    let dt = uniform_spacing(samples)?;
    let mut residuals = Vec::with_capacity(samples.len() - 1);
    let mut max_residual = f64::NEG_INFINITY;
    for w in samples.windows(2) {
        let rate = match rule {
            ResidualRule::Forward => w[0].energy_rate,
            ResidualRule::Midpoint => 0.5 * (w[0].energy_rate + w[1].energy_rate),
        };
        let d = abs((w[1].energy - w[0].energy) / dt - rate);
        max_residual = max_residual.max(d);
        residuals.push((w[0].t, d));
    }
    Ok(ResidualReport { dt, rule, residuals, max_residual })
}

/// Weighted history integrals at the bound time `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HistoryIntegrals {
    pub f: f64,
    pub g: f64,
    pub grad_g: f64,
}

impl HistoryIntegrals {
    pub fn of(system: &System, tau: f64) -> Result<Self> {
        Ok(HistoryIntegrals {
            f: system.f().history_integral(tau)?,
            g: system.g().history_integral(tau)?,
            grad_g: system.g().grad_history_integral(tau)?,
        })
    }
}

/// Radii (norms, not squares) of the absorbing set at time `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSet {
    pub tau: f64,
    pub u_l2_bound: f64,
    pub v_l2_bound: f64,
    pub u_h1_bound: f64,
    pub v2_h1_bound: f64,
}

/// Squared bounds with the gradient parts kept separate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquaredBounds {
    pub u_l2_sq: f64,
    pub v_l2_sq: f64,
    pub grad_u_sq: f64,
    pub grad_v2_sq: f64,
}

/// Factor multiplying the windowed `‖∇u‖²` estimate; comes from the
/// `−C‖∇u‖²` lower bound on `⟨h′(u)∇u, ∇u⟩` integrated over a unit window.
pub fn smoothing_factor(lower_derivative_bound: f64) -> f64 {
    1.0 + 2.0 * lower_derivative_bound
}

/// Squared absorbing radii:
///
/// ```text
/// ‖v‖²   ≤ 2 e^{−στ} B
/// ‖u‖²   ≤ 2 e^{−στ} B / ε
/// ‖∇u‖²  ≤ e^{−στ} [ (1+2C)·3B/(2εν) + 6B/(νσ) + (2/ν) I_f ]
/// ‖∇v₂‖² ≤ e^{−στ} [ 4B/(γν) + (4ε/γ) I_∇g ]
/// ```
pub fn squared_bounds(params: &Parameters, lower_derivative_bound: f64, hist: &HistoryIntegrals, tau: f64) -> SquaredBounds {
    let (eps, nu, lambda, gamma, sigma) =
        (params.epsilon(), params.nu(), params.lambda(), params.gamma(), params.sigma());
    let b = eps / lambda * hist.f + eps / gamma * hist.g;
    let decay = exp(-sigma * tau);
    let v_l2_sq = 2.0 * decay * b;
    let u_l2_sq = v_l2_sq / eps;
    let grad_u_sq = decay
        * (smoothing_factor(lower_derivative_bound) * 3.0 * b / (2.0 * eps * nu)
            + 6.0 * b / (nu * sigma)
            + 2.0 / nu * hist.f);
    let grad_v2_sq = decay * (4.0 * b / (gamma * nu) + 4.0 * eps / gamma * hist.grad_g);
    SquaredBounds { u_l2_sq, v_l2_sq, grad_u_sq, grad_v2_sq }
}

impl SquaredBounds {
    pub fn to_bound_set(&self, tau: f64) -> BoundSet {
        BoundSet {
            tau,
            u_l2_bound: sqrt(self.u_l2_sq),
            v_l2_bound: sqrt(self.v_l2_sq),
            u_h1_bound: sqrt(self.u_l2_sq + self.grad_u_sq),
            v2_h1_bound: sqrt(self.v_l2_sq + self.grad_v2_sq),
        }
    }
}

/// Absorbing radii at `tau` for the system's forcings, using the discrete
/// spatial norms of the sampled profiles.
pub fn absorbing_bounds(system: &System, tau: f64) -> Result<BoundSet> {
    let hist = HistoryIntegrals::of(system, tau)?;
    let c = system.nonlinearity().lower_derivative_bound();
    Ok(squared_bounds(system.params(), c, &hist, tau).to_bound_set(tau))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionReport {
    pub u_norm: f64,
    pub v_norm: f64,
    pub u_bound: f64,
    pub v_bound: f64,
    pub u_within: bool,
    pub v_within: bool,
}

impl AbsorptionReport {
    pub fn absorbed(&self) -> bool {
        self.u_within && self.v_within
    }
}

pub const DEFAULT_SLACK: f64 = 0.05;

/// Compares endpoint norms against `bound·(1 + slack)`.
pub fn check_absorption(endpoint: &State, bounds: &BoundSet, slack: f64) -> AbsorptionReport {
    let u_norm = endpoint.u.l2_norm();
    let v_norm = endpoint.v.l2_norm();
    let u_bound = bounds.u_l2_bound * (1.0 + slack);
    let v_bound = bounds.v_l2_bound * (1.0 + slack);
    AbsorptionReport { u_norm, v_norm, u_bound, v_bound, u_within: u_norm <= u_bound, v_within: v_norm <= v_bound }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSample {
    pub k: f64,
    pub t: f64,
    pub tail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub samples: Vec<TailSample>,
    /// `(k, sup over the window of tail_mass)` in the order of `k_list`.
    pub window_sup: Vec<(f64, f64)>,
    pub window_start: f64,
}

fn check_radii(grid: &Grid, k_list: &[f64]) -> Result<()> {
    if k_list.is_empty() {
        return Err(Error::Domain("tail report needs at least one radius".into()));
    }
    for &k in k_list {
        if !(k > 0.0) || k > grid.half_length() {
            return Err(Error::Domain(format!(
                "tail radius {k} must lie in (0, {}] (grid half-length)",
                grid.half_length()
            )));
        }
    }
    Ok(())
}

fn push_tails(samples: &mut Vec<TailSample>, state: &State, k_list: &[f64], epsilon: f64) -> Result<()> {
    for &k in k_list {
        samples.push(TailSample { k, t: state.t, tail: tail_mass(state.u.grid(), &state.u, &state.v, k, epsilon)? });
    }
    Ok(())
}

fn summarize(samples: Vec<TailSample>, k_list: &[f64], window_start: f64) -> TailReport {
    let window_sup = k_list
        .iter()
        .map(|&k| {
            let sup = samples
                .iter()
                .filter(|s| s.k == k && s.t >= window_start)
                .map(|s| s.tail)
                .fold(f64::NEG_INFINITY, f64::max);
            (k, sup)
        })
        .collect();
    TailReport { samples, window_sup, window_start }
}

/// Tail masses of recorded states; the supremum is taken over states with
/// `t ≥ window_start`.
pub fn tail_report(traj: &[State], k_list: &[f64], epsilon: f64, window_start: f64) -> Result<TailReport> {
    let first = traj.first().ok_or_else(|| Error::InsufficientData("empty trajectory".into()))?;
    check_radii(first.u.grid(), k_list)?;
    let mut samples = Vec::with_capacity(traj.len() * k_list.len());
    for s in traj {
        push_tails(&mut samples, s, k_list, epsilon)?;
    }
    Ok(summarize(samples, k_list, window_start))
}

/// As [`tail_report`], computing the tails on the fly while evolving
/// `initial` to `t_end` (observations every `stride` steps).
pub fn tail_report_along(
    system: &System,
    initial: &State,
    t_end: f64,
    config: &StepConfig,
    stride: usize,
    k_list: &[f64],
    window_start: f64,
) -> Result<(State, TailReport)> {
    check_radii(system.grid(), k_list)?;
    let eps = system.params().epsilon();
    let mut samples = Vec::new();
    let mut failure = None;
    let mut obs = |_: usize, s: &State| {
        if failure.is_none() {
            if let Err(e) = push_tails(&mut samples, s, k_list, eps) {
                failure = Some(e);
            }
        }
    };
    let end = evolve(system, initial, t_end, config, stride, Some(&mut obs))?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((end, summarize(samples, k_list, window_start)))
}

/// One entry of the bound registry: the evaluated bound together with its
/// formula and the constants that went into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub name: String,
    pub formula: String,
    pub value: f64,
    pub constants: BTreeMap<String, f64>,
}

/// All squared bounds at `tau`, each with its formula and inputs.
pub fn bound_registry(system: &System, tau: f64) -> Result<Vec<BoundEntry>> {
    let p = system.params();
    let c = system.nonlinearity().lower_derivative_bound();
    let hist = HistoryIntegrals::of(system, tau)?;
    let sq = squared_bounds(p, c, &hist, tau);
    let b = p.epsilon() / p.lambda() * hist.f + p.epsilon() / p.gamma() * hist.g;
    let mut common = BTreeMap::new();
    for (k, v) in [
        ("tau", tau),
        ("epsilon", p.epsilon()),
        ("nu", p.nu()),
        ("lambda", p.lambda()),
        ("gamma", p.gamma()),
        ("sigma", p.sigma()),
        ("I_f", hist.f),
        ("I_g", hist.g),
        ("B", b),
    ] {
        common.insert(String::from(k), v);
    }
    let mut with_c = common.clone();
    with_c.insert("C".into(), c);
    with_c.insert("smoothing_factor".into(), smoothing_factor(c));
    let mut with_grad_g = common.clone();
    with_grad_g.insert("I_grad_g".into(), hist.grad_g);
    let entry = |name: &str, formula: &str, value: f64, constants: &BTreeMap<String, f64>| BoundEntry {
        name: name.into(),
        formula: formula.into(),
        value,
        constants: constants.clone(),
    };
    Ok(alloc::vec![
        entry("v_l2_sq", "2 exp(-sigma tau) B,  B = (eps/lambda) I_f + (eps/gamma) I_g", sq.v_l2_sq, &common),
        entry("u_l2_sq", "2 exp(-sigma tau) B / eps", sq.u_l2_sq, &common),
        entry(
            "grad_u_sq",
            "exp(-sigma tau) [ (1+2C) 3B/(2 eps nu) + 6B/(nu sigma) + (2/nu) I_f ]",
            sq.grad_u_sq,
            &with_c,
        ),
        entry("u_h1_sq", "u_l2_sq + grad_u_sq", sq.u_l2_sq + sq.grad_u_sq, &with_c),
        entry(
            "grad_v2_sq",
            "exp(-sigma tau) [ 4B/(gamma nu) + (4 eps/gamma) I_grad_g ]",
            sq.grad_v2_sq,
            &with_grad_g,
        ),
        entry("v2_h1_sq", "v_l2_sq + grad_v2_sq", sq.v_l2_sq + sq.grad_v2_sq, &with_grad_g),
    ])
}
