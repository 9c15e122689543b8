//! Experiment drivers. Each run writes its artifacts, a `verdict.json` with
//! named checks, a deterministic `manifest.json` and a `timing.json`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use fhn_core::analysis::{
    bound_registry, energy_identity_defect, energy_inequality_residual, record_energy, tail_report_along,
    EnergySample, ResidualRule, TailSample,
};
use fhn_core::epsilon_study::{run_sweep, uniform_bound_report, Metric, ScenarioKind, SweepResult};
use fhn_core::integrator::evolve;
use fhn_core::pullback::{approximate_attractor, invariance_defect, sample_member, Executor, InitialSource};
use fhn_core::{Scheme, State, StepConfig, System};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{Experiment, PullbackOptions, RunConfig, SimulateOptions, SweepConfig, TailOptions, VerifyOptions};
use crate::io::{
    artifact_names, ensure_dir, read_checkpoint, write_checkpoint, write_cloud, write_csv, write_json, DiagnosticRow,
    Manifest, SeriesRow, SweepRow, Timing,
};
use crate::{LabError, ThreadPool};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub experiment: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub details: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub verdict: Verdict,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.verdict.passed
    }
}

struct Report {
    checks: Vec<Check>,
    details: serde_json::Value,
}

/// Runs the experiment of `config`, writing everything under `out`.
pub fn run(config: &RunConfig, out: &Path, threads: usize) -> Result<RunOutcome, LabError> {
    execute(config, out, threads, None)
}

/// Continues a `simulate` run from a checkpoint to the configured `t_end`.
pub fn resume(config: &RunConfig, checkpoint: &Path, out: &Path, threads: usize) -> Result<RunOutcome, LabError> {
    execute(config, out, threads, Some(checkpoint))
}

fn execute(config: &RunConfig, out: &Path, threads: usize, checkpoint: Option<&Path>) -> Result<RunOutcome, LabError> {
    config.validate()?;
    let started = Instant::now();
    ensure_dir(out)?;
    write_json(&out.join("effective_config.json"), config)?;
    let pool = ThreadPool::new(threads)?;
    let system = config.system()?;
    let report = match (&config.experiment, checkpoint) {
        (Experiment::Simulate(o), None) => {
            let init = o.initial.state(&config.grid, o.t0);
            simulate(config, &system, o, init, out)?
        }
        (Experiment::Simulate(o), Some(path)) => {
            let init = load_resume_state(config, path)?;
            simulate(config, &system, o, init, out)?
        }
        (_, Some(_)) => return Err(LabError::Config("resume needs a simulate experiment".into())),
        (Experiment::Verify(o), None) => verify(config, &system, o, out)?,
        (Experiment::Tails(o), None) => tails(config, &system, o, out, &pool)?,
        (Experiment::Pullback(o), None) => pullback(config, &system, o, out, &pool)?,
        (Experiment::Sweep(o), None) => sweep(config, o, out, &pool)?,
    };
    let verdict = Verdict {
        experiment: config.experiment.name().into(),
        passed: report.checks.iter().all(|c| c.passed),
        checks: report.checks,
        details: report.details,
    };
    write_json(&out.join("verdict.json"), &verdict)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        core_version: fhn_core::VERSION.into(),
        experiment: verdict.experiment.clone(),
        config_sha256: config.hash(),
        seed: config.seed,
        artifacts: artifact_names(out)?,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    let timing = Timing { wall_seconds: started.elapsed().as_secs_f64(), threads: pool.threads() };
    write_json(&out.join("timing.json"), &timing)?;
    Ok(RunOutcome { out_dir: out.to_path_buf(), verdict })
}

fn load_resume_state(config: &RunConfig, path: &Path) -> Result<State, LabError> {
    let ckpt = read_checkpoint(path)?;
    let h = &ckpt.header;
    if h.grid != config.grid || h.parameters != config.parameters || h.step != config.step {
        return Err(LabError::Config(format!(
            "checkpoint {} was written with a different grid, parameters or step config",
            path.display()
        )));
    }
    ckpt.state()
}

fn rule_for(scheme: Scheme) -> ResidualRule {
    match scheme {
        Scheme::ImexEuler => ResidualRule::Forward,
        Scheme::ImexCn => ResidualRule::Midpoint,
    }
}

fn series_rows(system: &System, samples: &[EnergySample], rule: ResidualRule) -> Result<Vec<SeriesRow>, LabError> {
    let residuals = if samples.len() >= 2 {
        energy_inequality_residual(system, samples, rule)?.residuals
    } else {
        Vec::new()
    };
    Ok(samples
        .iter()
        .enumerate()
        .map(|(i, s)| SeriesRow {
            t: s.t,
            energy: s.energy,
            u_l2_sq: s.u_l2_sq,
            v_l2_sq: s.v_l2_sq,
            grad_u_sq: s.grad_u_sq,
            residual: residuals.get(i).map(|r| r.1),
        })
        .collect())
}

fn simulate(config: &RunConfig, system: &System, o: &SimulateOptions, init: State, out: &Path) -> Result<Report, LabError> {
    let mut samples = Vec::new();
    let mut snapshots = Vec::new();
    let every = o.checkpoint_every;
    let mut obs = |k: usize, s: &State| {
        samples.push(EnergySample::of(system, s));
        let index = k / o.stride;
        if every > 0 && index > 0 && index.is_multiple_of(every) {
            snapshots.push(s.clone());
        }
    };
    let end = evolve(system, &init, o.t_end, &config.step, o.stride, Some(&mut obs))?;
    write_csv(&out.join("series.csv"), &series_rows(system, &samples, rule_for(config.step.scheme))?)?;
    if !snapshots.is_empty() {
        let dir = out.join("checkpoints");
        ensure_dir(&dir)?;
        for s in &snapshots {
            let name = format!("t_{:012}.ckpt", (s.t / config.step.dt).round() as i64);
            write_checkpoint(&dir.join(name), s, &config.parameters, &config.step)?;
        }
    }
    write_checkpoint(&out.join("final.ckpt"), &end, &config.parameters, &config.step)?;
    write_json(&out.join("bound_registry.json"), &bound_registry(system, end.t)?)?;
    Ok(Report {
        checks: Vec::new(),
        details: json!({ "t_start": init.t, "t_end": end.t, "samples": samples.len() }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub dt: f64,
    pub max_residual: f64,
    pub max_identity_defect: f64,
}

fn verify(config: &RunConfig, system: &System, o: &VerifyOptions, out: &Path) -> Result<Report, LabError> {
    let rule = rule_for(config.step.scheme);
    let mut rows = Vec::with_capacity(o.dts.len());
    for (i, &dt) in o.dts.iter().enumerate() {
        let step = StepConfig { dt, ..config.step };
        let init = o.initial.state(&config.grid, o.t0);
        let (_, samples) = record_energy(system, &init, o.t_end, &step, 1)?;
        let residual = energy_inequality_residual(system, &samples, rule)?;
        let defect = energy_identity_defect(&samples, rule)?;
        write_csv(&out.join(format!("series_dt{i}.csv")), &series_rows(system, &samples, rule)?)?;
        rows.push(ConvergenceRow { dt, max_residual: residual.max_residual, max_identity_defect: defect.max_residual });
    }
    write_csv(&out.join("convergence.csv"), &rows)?;
    let q = o.halving_ratio;
    let c = rows[0].max_residual / rows[0].dt;
    let bounded = rows.iter().all(|r| r.max_residual <= c * r.dt + 1e-12 * c.abs() * r.dt);
    let halving = rows.windows(2).all(|w| w[1].max_residual <= q * w[0].max_residual);
    let defect_halving = rows.windows(2).all(|w| w[1].max_identity_defect <= q * w[0].max_identity_defect);
    let list = |f: fn(&ConvergenceRow) -> f64| rows.iter().map(f).map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(", ");
    let residuals = list(|r| r.max_residual);
    let defects = list(|r| r.max_identity_defect);
    Ok(Report {
        checks: vec![
            Check::new("residual_linear_in_dt", bounded, format!("C = {c:.4e}; max residuals [{residuals}]")),
            Check::new("residual_halving", halving, format!("ratio ≤ {q}; max residuals [{residuals}]")),
            Check::new("identity_defect_halving", defect_halving, format!("ratio ≤ {q}; defects [{defects}]")),
        ],
        details: json!({ "rule": rule, "rows": rows }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub member: usize,
    pub k: f64,
    pub t: f64,
    pub tail: f64,
}

fn tails(config: &RunConfig, system: &System, o: &TailOptions, out: &Path, pool: &ThreadPool) -> Result<Report, LabError> {
    let inits: Vec<State> = match &o.sampled {
        Some(b) => (0..b.bundle_size)
            .map(|m| sample_member(system, &b.source, o.t0, config.seed, 0, m))
            .collect::<Result<_, _>>()?,
        None => vec![o.initial.state(&config.grid, o.t0)],
    };
    let results = pool.map(inits, |init| {
        tail_report_along(system, &init, o.t_end, &config.step, o.stride, &o.k_list, o.window_start)
    });
    let mut rows = Vec::new();
    let mut sup: Vec<(f64, f64)> = o.k_list.iter().map(|&k| (k, f64::NEG_INFINITY)).collect();
    for (member, r) in results.into_iter().enumerate() {
        let (_, report) = r?;
        rows.extend(report.samples.iter().map(|s: &TailSample| TailRow { member, k: s.k, t: s.t, tail: s.tail }));
        for (acc, (_, s)) in sup.iter_mut().zip(&report.window_sup) {
            acc.1 = acc.1.max(*s);
        }
    }
    write_csv(&out.join("tails.csv"), &rows)?;
    let checks = match o.threshold {
        Some(eta) => sup
            .iter()
            .map(|&(k, s)| Check::new(format!("tail_k{k}"), s <= eta, format!("window sup {s:.4e}, threshold {eta:e}")))
            .collect(),
        None => Vec::new(),
    };
    Ok(Report { checks, details: json!({ "window_start": o.window_start, "window_sup": sup }) })
}

fn pullback(config: &RunConfig, system: &System, o: &PullbackOptions, out: &Path, pool: &ThreadPool) -> Result<Report, LabError> {
    let schedule = o.schedule(o.tau, config.seed);
    let run = approximate_attractor(system, &schedule, &o.source, &config.step, o.slack, pool)?;
    let rows: Vec<DiagnosticRow> = run
        .records
        .iter()
        .map(|r| DiagnosticRow {
            depth: r.depth,
            hausdorff_to_prev: r.hausdorff_to_prev,
            max_norm_u: r.max_norm_u,
            max_norm_v: r.max_norm_v,
            all_absorbed: r.all_absorbed,
        })
        .collect();
    write_csv(&out.join("diagnostics.csv"), &rows)?;
    write_cloud(&out.join("cloud"), run.final_cloud(), &config.parameters, &config.step)?;
    write_json(&out.join("bound_registry.json"), &bound_registry(system, o.tau)?)?;

    let mut checks = Vec::new();
    let absorbed = run.absorption_index;
    checks.push(Check::new(
        "absorbed",
        absorbed.is_some(),
        match run.absorption_depth() {
            Some(t) => format!("absorption depth T = {t}"),
            None => "final cloud not inside the absorbing ball".into(),
        },
    ));
    let violations = match absorbed {
        Some(i) => {
            let h: Vec<f64> = run.records[i..].iter().filter_map(|r| r.hausdorff_to_prev).collect();
            h.windows(2).filter(|w| w[1] > w[0]).count()
        }
        None => usize::MAX,
    };
    checks.push(Check::new(
        "hausdorff_decreasing",
        violations <= 1,
        format!("{} increases beyond the absorption depth", if violations == usize::MAX { 0 } else { violations }),
    ));
    let mut invariance = None;
    if let Some(t) = o.invariance_duration {
        let later_schedule = o.schedule(o.tau + t, config.seed);
        let later = approximate_attractor(system, &later_schedule, &o.source, &config.step, o.slack, pool)?;
        let defect = invariance_defect(system, run.final_cloud(), later.final_cloud(), t, &config.step, pool)?;
        let diag = run.final_diagnostic().unwrap_or(f64::NAN);
        checks.push(Check::new(
            "invariance",
            defect <= 2.0 * diag,
            format!("defect {defect:.4e} vs 2 x final diagnostic {:.4e}", 2.0 * diag),
        ));
        invariance = Some(json!({ "duration": t, "defect": defect }));
    }
    let source = match o.source {
        InitialSource::Basin(_) => "basin",
        InitialSource::Absorbing => "absorbing",
    };
    Ok(Report {
        checks,
        details: json!({
            "source": source,
            "bounds": run.bounds,
            "absorption_depth": run.absorption_depth(),
            "final_diagnostic": run.final_diagnostic(),
            "invariance": invariance,
        }),
    })
}

fn sweep_checks(result: &SweepResult) -> Result<(Vec<Check>, serde_json::Value), LabError> {
    let mut checks = Vec::new();
    let failed: Vec<String> = result
        .records
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("epsilon {}: {e}", r.epsilon)))
        .collect();
    checks.push(Check::new("all_epsilons_completed", failed.is_empty(), failed.join("; ")));
    let verdicts: Vec<_> = match [Metric::UH1, Metric::VL2Sq, Metric::VH1, Metric::H1]
        .into_iter()
        .map(|m| uniform_bound_report(result, m))
        .collect::<Result<Vec<_>, _>>()
    {
        Ok(v) => v,
        Err(e) => {
            checks.push(Check::new("trend_fit", false, e.to_string()));
            return Ok((checks, serde_json::Value::Null));
        }
    };
    let of = |m: Metric| verdicts.iter().find(|v| v.metric == m).expect("metric present");
    match result.kind {
        ScenarioKind::UnboundedSqrt => {
            let worst = result
                .records
                .iter()
                .filter_map(|r| r.norms.map(|n| (n.v_l2 * n.v_l2) / (n.theoretical_v_bound * n.theoretical_v_bound)))
                .fold(0.0, f64::max);
            checks.push(Check::new(
                "below_blowup_bound",
                worst <= 1.05,
                format!("max over epsilon of |v|^2 / blowup_bound = {worst:.4e}"),
            ));
            let slope = of(Metric::VL2Sq).slope;
            checks.push(Check::new(
                "v_growth_slope",
                (0.5..=1.2).contains(&slope),
                format!("slope of log max |v|^2 vs log(1/epsilon) = {slope:.4}"),
            ));
        }
        ScenarioKind::Bounded => {
            let h1 = of(Metric::H1);
            checks.push(Check::new(
                "flat_slope",
                (-0.2..=0.2).contains(&h1.slope),
                format!("slope of log H1 norm vs log(1/epsilon) = {:.4}", h1.slope),
            ));
            checks.push(Check::new("h1_spread", h1.spread <= 3.0, format!("H1 spread = {:.4}", h1.spread)));
        }
    }
    Ok((checks, serde_json::to_value(&verdicts).map_err(|e| LabError::Format(e.to_string()))?))
}

fn sweep(config: &RunConfig, o: &SweepConfig, out: &Path, pool: &ThreadPool) -> Result<Report, LabError> {
    let options = fhn_core::epsilon_study::SweepOptions { seed: config.seed, ..o.options.clone() };
    let result = run_sweep(
        &o.epsilons,
        &o.scenario,
        &config.parameters,
        &config.nonlinearity,
        &config.grid,
        &config.step,
        &options,
        pool,
    );
    let rows: Vec<SweepRow> = result
        .records
        .iter()
        .map(|r| SweepRow {
            epsilon: r.epsilon,
            u_h1: r.norms.map(|n| n.u_h1),
            v_l2: r.norms.map(|n| n.v_l2),
            v_h1: r.norms.map(|n| n.v_h1),
            theoretical_v_bound: r.norms.map(|n| n.theoretical_v_bound),
            v1_fraction: r.norms.map(|n| n.v1_fraction),
            error: r.error.clone(),
        })
        .collect();
    write_csv(&out.join("sweep.csv"), &rows)?;
    let (checks, verdicts) = sweep_checks(&result)?;
    Ok(Report { checks, details: json!({ "kind": result.kind, "uniformity": verdicts }) })
}
