//! Acceptance suite. Every criterion runs in sequence inside one test so
//! that wall-clock budgets are measured without interference; one line per
//! criterion is printed and the test fails if any criterion fails.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fhn_core::integrator::{evolve, evolve_split, SplitState};
use fhn_core::model::{make_parameters, NonlinearityKind, Role, SpaceProfile, TimeProfile};
use fhn_core::{Field, ForcingSpec, Grid, NonlinearitySpec, Scheme, State, StepConfig, System};
use fhn_lab::io::{read_csv, SeriesRow};
use fhn_lab::{run, RunConfig, RunOutcome};
use serde_json::{json, Value};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn config(v: &Value) -> RunConfig {
    RunConfig::from_json(&v.to_string()).expect("acceptance config is valid")
}

fn run_config(v: &Value, out: &Path) -> RunOutcome {
    run(&config(v), out, 1).expect("run completes")
}

fn failed_checks(o: &RunOutcome) -> String {
    o.verdict.checks.iter().map(|c| format!("{}: {}", c.name, c.detail)).collect::<Vec<_>>().join("; ")
}

fn gaussian(amplitude: f64, width: f64) -> Value {
    json!({"gaussian": {"amplitude": amplitude, "width": width}})
}

// The standard cubic scenario: 1-D, L = 20, m = 400, ε = 0.1, λ = γ = ν = 1.
fn standard(time_f: Value, space_f: Value, time_g: Value, space_g: Value, scheme: &str, experiment: Value) -> Value {
    json!({
        "parameters": {"nu": 1.0, "lambda": 1.0, "epsilon": 0.1, "gamma": 1.0},
        "nonlinearity": {"kind": "cubic"},
        "forcing_f": {"time_profile": time_f, "space_profile": space_f, "role": "f"},
        "forcing_g": {"time_profile": time_g, "space_profile": space_g, "role": "g"},
        "grid": {"dim": 1, "half_length": 20.0, "points_per_axis": 400},
        "step": {"dt": 0.01, "scheme": scheme},
        "experiment": experiment
    })
}

const SIGMA: f64 = 0.05;
const DEPTHS: [f64; 11] = [2.0, 4.0, 6.0, 8.0, 10.0, 15.0, 20.0, 30.0, 45.0, 60.0, 80.0];

fn exp_forcing_scenario(space_f: Value, space_g: Value, experiment: Value, seed: u64) -> Value {
    let time = json!({"exp_sigma_frac": {"c": 0.5}});
    let mut v = standard(time.clone(), space_f, time, space_g, "imex_cn", experiment);
    v["seed"] = json!(seed);
    v
}

fn basin() -> Value {
    json!({"basin": {"amplitude": 15.0, "backward_rate": -SIGMA / 4.0}})
}

fn pullback_config(seed: u64, invariance: Option<f64>) -> Value {
    let mut block = json!({
        "tau": 0.0,
        "depths": DEPTHS,
        "bundle_size": 32,
        "source": basin(),
        "slack": 0.05
    });
    if let Some(t) = invariance {
        block["invariance_duration"] = json!(t);
    }
    exp_forcing_scenario(gaussian(1.0, 1.0), gaussian(0.5, 2.0), json!({"pullback": block}), seed)
}

// 1. Linear oracle on a single discrete eigenmode.

fn expm2(m: [[f64; 2]; 2], t: f64) -> [[f64; 2]; 2] {
    let s = 0.5 * (m[0][0] + m[1][1]);
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = s * s - det;
    let (c, k) = if disc > 0.0 {
        let d = disc.sqrt();
        ((d * t).cosh(), (d * t).sinh() / d)
    } else if disc < 0.0 {
        let w = (-disc).sqrt();
        ((w * t).cos(), (w * t).sin() / w)
    } else {
        (1.0, t)
    };
    let e = (s * t).exp();
    [[e * (c + k * (m[0][0] - s)), e * k * m[0][1]], [e * k * m[1][0], e * (c + k * (m[1][1] - s))]]
}

fn linear_oracle() -> Outcome {
    let (nu, lambda, eps, gamma) = (1.0, 1.0, 0.1, 1.0);
    let m = 63;
    let grid = Grid::new(1, 5.0, m).unwrap();
    let p = make_parameters(nu, lambda, eps, gamma).unwrap();
    let h = NonlinearitySpec::new(NonlinearityKind::Zero, 0.0, 0.0).unwrap();
    let system = System::new(p, h, None, None, &grid).unwrap();
    let theta = 3.0 * std::f64::consts::PI / (m + 1) as f64;
    let dx = grid.spacing();
    let mu = -4.0 / (dx * dx) * (0.5 * theta).sin().powi(2);
    let mode = Field::from_values(&grid, (0..m).map(|i| (theta * (i + 1) as f64).sin()).collect()).unwrap();
    let e = expm2([[nu * mu - lambda, -1.0], [eps, -eps * gamma]], 1.0);
    let (a0, b0) = (1.0, 0.5);
    let (a1, b1) = (e[0][0] * a0 + e[0][1] * b0, e[1][0] * a0 + e[1][1] * b0);
    let exact_u = mode.scaled(a1);
    let exact_v = mode.scaled(b1);
    let error = |dt: f64| {
        let s0 = State::new(0.0, mode.scaled(a0), mode.scaled(b0)).unwrap();
        let out = evolve(&system, &s0, 1.0, &StepConfig::new(dt, Scheme::ImexCn), 1, None).unwrap();
        let d = out.u.sub(&exact_u).unwrap().l2_norm_sq() + out.v.sub(&exact_v).unwrap().l2_norm_sq();
        (d / (exact_u.l2_norm_sq() + exact_v.l2_norm_sq())).sqrt()
    };
    let err = error(1e-3);
    let slope = (error(2e-3) / err).log2();
    outcome(
        err <= 1e-6 && (slope - 2.0).abs() <= 0.2,
        format!("relative error {err:.3e} at dt = 1e-3, halving slope {slope:.3}"),
    )
}

// 2. Energy inequality residuals under dt-halving.

fn energy_inequality(root: &Path) -> Outcome {
    let experiment = json!({"verify": {
        "t_end": 10.0,
        "dts": [1e-2, 5e-3, 2.5e-3],
        "initial": {"gaussian": {"u_amplitude": 2.0, "v_amplitude": 0.0, "width": 1.0}}
    }});
    let v = standard(json!("sqrt_abs_t"), gaussian(1.0, 1.0), json!("constant"), gaussian(0.5, 2.0), "imex_euler", experiment);
    let o = run_config(&v, &root.join("c2"));
    outcome(o.passed(), failed_checks(&o))
}

// 3. Forcing-free decay E(t) ≤ E(0)e^{−2σt}.

fn forcing_free_decay(root: &Path) -> Outcome {
    let mut worst: f64 = 0.0;
    for (i, scheme) in ["imex_euler", "imex_cn"].iter().enumerate() {
        let v = json!({
            "parameters": {"nu": 1.0, "lambda": 1.0, "epsilon": 0.1, "gamma": 1.0},
            "grid": {"dim": 1, "half_length": 20.0, "points_per_axis": 400},
            "step": {"dt": 0.01, "scheme": scheme},
            "experiment": {"simulate": {
                "t_end": 50.0,
                "stride": 10,
                "initial": {"gaussian": {"u_amplitude": 2.0, "v_amplitude": 1.0, "width": 2.0}}
            }}
        });
        let out = root.join(format!("c3_{i}"));
        run_config(&v, &out);
        let rows: Vec<SeriesRow> = read_csv(&out.join("series.csv")).unwrap();
        let e0 = rows[0].energy;
        for r in &rows {
            worst = worst.max(r.energy / (e0 * (-2.0 * SIGMA * r.t).exp()));
        }
    }
    outcome(worst <= 1.0 + 1e-3, format!("max E(t)/(E(0)e^(-2 sigma t)) = {worst:.6}"))
}

// 4. Exact decay of v₁ and consistency of the splitting.

fn splitting() -> Outcome {
    let grid = Grid::new(1, 20.0, 400).unwrap();
    let p = make_parameters(1.0, 1.0, 0.1, 1.0).unwrap();
    let f = ForcingSpec::new(TimeProfile::SqrtAbsT, SpaceProfile::Gaussian { amplitude: 1.0, width: 1.0 }, Role::F).unwrap();
    let g = ForcingSpec::new(TimeProfile::Constant, SpaceProfile::Gaussian { amplitude: 0.5, width: 2.0 }, Role::G).unwrap();
    let system = System::new(p, NonlinearitySpec::default(), Some(&f), Some(&g), &grid).unwrap();
    let s = -3.0;
    let init = State {
        t: s,
        u: Field::from_fn(&grid, |x, _| 2.0 * (-x * x).exp()),
        v: Field::from_fn(&grid, |x, _| (-(x - 1.0) * (x - 1.0) / 4.0).exp()),
    };
    let config = StepConfig::new(0.01, Scheme::ImexCn);
    let t_end = s + 1000.0 * config.dt;
    let mut full = Vec::new();
    evolve(&system, &init, t_end, &config, 1, Some(&mut |_, st: &State| full.push(st.v.clone()))).unwrap();
    let mut split_diff: f64 = 0.0;
    let mut k = 0;
    let end = evolve_split(
        &system,
        &SplitState::from_state(&init),
        t_end,
        &config,
        1,
        Some(&mut |_, st: &SplitState| {
            let v = &full[k];
            let d = st.v().sub(v).unwrap().l2_norm() / (1.0 + v.l2_norm());
            split_diff = split_diff.max(d);
            k += 1;
        }),
    )
    .unwrap();
    let ratio = end.v1.l2_norm() / init.v.l2_norm();
    let exact = (-p.epsilon() * p.gamma() * (end.t - s)).exp();
    let rel = (ratio / exact - 1.0).abs();
    outcome(
        rel <= 1e-12 && split_diff <= 1e-8 && k == 1001,
        format!("|v1|/|v0| relative error {rel:.2e}; max |v - (v1+v2)|/(1+|v|) = {split_diff:.2e}"),
    )
}

// 5. Pullback absorption with exponentially growing forcing.

fn absorption(root: &Path) -> Outcome {
    let mut slots = Vec::new();
    let mut notes = Vec::new();
    let mut all = true;
    for seed in 1..=3 {
        let o = run_config(&pullback_config(seed, None), &root.join(format!("c5_{seed}")));
        let absorbed = o.verdict.checks.iter().find(|c| c.name == "absorbed").expect("absorbed check");
        let depth = o.verdict.details["absorption_depth"].as_f64();
        all &= absorbed.passed;
        if let Some(d) = depth {
            slots.push(DEPTHS.iter().position(|&x| x == d).unwrap());
        }
        notes.push(format!("seed {seed}: T = {depth:?}"));
    }
    let stable = slots.len() == 3 && slots.iter().max().unwrap() - slots.iter().min().unwrap() <= 1;
    outcome(all && stable, notes.join(", "))
}

// 6. Tail smallness with compactly supported forcing.

fn tails(root: &Path) -> Outcome {
    let experiment = json!({"tails": {
        "t0": -80.0,
        "t_end": 0.0,
        "k_list": [10.0],
        "window_start": -10.0,
        "stride": 10,
        "sampled": {"source": basin(), "bundle_size": 32},
        "threshold": 1e-4
    }});
    let bump = |a: f64| json!({"compact_bump": {"amplitude": a, "radius": 3.0}});
    let v = exp_forcing_scenario(bump(1.0), bump(0.5), experiment, 1);
    let o = run_config(&v, &root.join("c6"));
    outcome(o.passed(), failed_checks(&o))
}

// 7. Convergence of the depth diagnostics and invariance at t = 1.

fn convergence_and_invariance(root: &Path) -> Outcome {
    let o = run_config(&pullback_config(1, Some(1.0)), &root.join("c7"));
    outcome(o.passed(), failed_checks(&o))
}

// 8. Bounded versus unbounded forcing across ε.

fn dichotomy(root: &Path) -> Outcome {
    let mut passed = true;
    let mut notes = Vec::new();
    for (kind, g_amp) in [("unbounded_sqrt", 1.0), ("bounded", 0.5)] {
        let experiment = json!({"sweep": {
            "epsilons": [0.05, 0.1, 0.2, 0.4],
            "scenario": {"kind": kind, "f_profile": gaussian(1.0, 1.0), "g_profile": gaussian(g_amp, 1.0)},
            "options": {"bundle_size": 8}
        }});
        let mut v = standard(json!("constant"), gaussian(1.0, 1.0), json!("constant"), gaussian(1.0, 1.0), "imex_cn", experiment);
        v["seed"] = json!(1);
        let o = run_config(&v, &root.join(format!("c8_{kind}")));
        passed &= o.passed();
        notes.push(format!("{kind}: {}", failed_checks(&o)));
    }
    outcome(passed, notes.join(" | "))
}

// 9. Thread count does not change the criterion-5 artifacts.

fn determinism(root: &Path) -> Outcome {
    let cfg_path = root.join("c9.json");
    fs::write(&cfg_path, pullback_config(1, None).to_string()).unwrap();
    let mut dirs = Vec::new();
    for threads in ["1", "8"] {
        let out = root.join(format!("c9_t{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_fhn-lab"))
            .args(["pullback", "--threads", threads, "--config"])
            .arg(&cfg_path)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        if !status.status.success() {
            return outcome(false, format!("threads {threads}: {}", String::from_utf8_lossy(&status.stderr)));
        }
        dirs.push(out);
    }
    let mut compared = Vec::new();
    for entry in fs::read_dir(&dirs[0]).unwrap() {
        let name = entry.unwrap().file_name();
        if Path::new(&name).extension().is_some_and(|e| e == "csv") {
            let a = fs::read(dirs[0].join(&name)).unwrap();
            let b = fs::read(dirs[1].join(&name)).unwrap();
            if a != b {
                return outcome(false, format!("{} differs", name.to_string_lossy()));
            }
            compared.push(name.to_string_lossy().into_owned());
        }
    }
    let cloud_same = fs::read_dir(dirs[0].join("cloud")).unwrap().all(|e| {
        let name = e.unwrap().file_name();
        fs::read(dirs[0].join("cloud").join(&name)).unwrap() == fs::read(dirs[1].join("cloud").join(&name)).unwrap()
    });
    compared.sort();
    outcome(
        !compared.is_empty() && cloud_same,
        format!("byte-identical: {} (cloud archive identical: {cloud_same})", compared.join(", ")),
    )
}

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    type Criterion<'a> = (u32, &'a str, u64, Box<dyn Fn() -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        (1, "linear eigenmode oracle", 1, Box::new(linear_oracle)),
        (2, "energy inequality residual", 30, Box::new(|| energy_inequality(root))),
        (3, "forcing-free decay", 10, Box::new(|| forcing_free_decay(root))),
        (4, "v1 exactness and splitting", 10, Box::new(splitting)),
        (5, "pullback absorption", 300, Box::new(|| absorption(root))),
        (6, "tail smallness", 120, Box::new(|| tails(root))),
        (7, "attractor convergence and invariance", 600, Box::new(|| convergence_and_invariance(root))),
        (8, "bounded/unbounded dichotomy", 1200, Box::new(|| dichotomy(root))),
        (9, "thread-count determinism", 600, Box::new(|| determinism(root))),
    ];
    let mut failures = Vec::new();
    for (id, name, budget, check) in &criteria {
        let start = Instant::now();
        let o = check();
        let elapsed = start.elapsed();
        let in_budget = elapsed <= Duration::from_secs(*budget);
        let passed = o.passed && in_budget;
        let line = format!(
            "criterion {id} [{name}]: {} ({:.2}s / {budget}s budget) {}\n",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            o.detail
        );
        // written to the handle directly so the line shows up even when the harness captures output
        let mut out = std::io::stdout().lock();
        out.write_all(line.as_bytes()).unwrap();
        out.flush().unwrap();
        if !passed {
            failures.push(*id);
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
