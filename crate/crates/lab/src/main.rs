use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fhn_lab::{run, LabError, RunConfig, RunOutcome, EXIT_CHECK_FAILED};

/// Default output root when neither `--out` nor `output_dir` is given.
const OUT_ENV: &str = "FHN_LAB_OUT";

#[derive(Parser)]
#[command(name = "fhn-lab", version, about = "Non-autonomous FitzHugh-Nagumo simulator and verification lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and record its energy series.
    Simulate(Common),
    /// Energy-inequality residuals under step-size halving.
    Verify(Common),
    /// Tail masses outside balls of radius k.
    Tails(Common),
    /// Pullback attractor approximation.
    Pullback(Common),
    /// Attractor norms across a list of epsilon values.
    Sweep(Common),
    /// Continue a simulate run from a checkpoint.
    Resume {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for trajectory bundles; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

fn output_dir(common: &Common, config: &RunConfig) -> PathBuf {
    if let Some(out) = &common.out {
        return out.clone();
    }
    if let Some(out) = &config.output_dir {
        return out.clone();
    }
    let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("fhn-lab-out"));
    root.join(config.experiment.name())
}

fn load(common: &Common, expected: Option<&str>) -> Result<RunConfig, LabError> {
    let mut config = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(name) = expected {
        if config.experiment.name() != name {
            return Err(LabError::Config(format!(
                "subcommand `{name}` given a `{}` experiment",
                config.experiment.name()
            )));
        }
    }
    Ok(config)
}

fn dispatch(command: &Command) -> Result<RunOutcome, LabError> {
    let (common, name) = match command {
        Command::Simulate(c) => (c, "simulate"),
        Command::Verify(c) => (c, "verify"),
        Command::Tails(c) => (c, "tails"),
        Command::Pullback(c) => (c, "pullback"),
        Command::Sweep(c) => (c, "sweep"),
        Command::Resume { common, checkpoint } => {
            let config = load(common, Some("simulate"))?;
            let out = output_dir(common, &config);
            return fhn_lab::run::resume(&config, checkpoint, &out, common.threads);
        }
    };
    let config = load(common, Some(name))?;
    let out = output_dir(common, &config);
    run(&config, &out, common.threads)
}

fn report_error(e: &LabError) {
    let report = serde_json::json!({ "status": "error", "kind": e.kind(), "message": e.to_string() });
    eprintln!("{report}");
}

fn summarize(outcome: &RunOutcome, out: &Path) {
    for c in &outcome.verdict.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("{} -> {}", outcome.verdict.experiment, out.display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(outcome) => {
            summarize(&outcome, &outcome.out_dir);
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CHECK_FAILED as u8)
            }
        }
        Err(e) => {
            report_error(&e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
