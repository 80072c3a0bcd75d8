use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use skyvlc_core::ScenarioConfig;
use skyvlc_harness::compare::{compare, CompareTest, Metric};
use skyvlc_harness::experiment::{preset, ExperimentSpec, PRESETS};
use skyvlc_harness::oracle_check::oracle_check;
use skyvlc_harness::runner::{run_experiment, Summary, CODE_HASH};
use skyvlc_harness::HarnessError;

#[derive(Parser)]
#[command(name = "skyvlc", version, about = "Multi-UAV VLC power and association experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SpecArgs {
    /// Named preset (see `validate-config --list`).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Experiment spec as JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds, replacing the spec's list (comma separated or repeated).
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Dotted-path override, e.g. `scenario.alpha=0.5`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl SpecArgs {
    fn resolve(&self) -> Result<ExperimentSpec, HarnessError> {
        let base = match (&self.preset, &self.config) {
            (_, Some(path)) => ExperimentSpec::from_file(path)?,
            (Some(name), None) => preset(name)?,
            (None, None) => preset("desk")?,
        };
        let mut spec = base.with_overrides(&self.overrides)?;
        if !self.seed.is_empty() {
            spec.seeds = self.seed.clone();
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train every sweep point for every seed and write metrics and a summary.
    Run {
        #[command(flatten)]
        spec: SpecArgs,
        /// Output root; the run goes to `<out>/<label>`.
        #[arg(long, env = "SKYVLC_OUT", default_value = "runs")]
        out: PathBuf,
    },
    /// Paired per-seed comparison of two points in a summary.
    Compare {
        /// `summary.json` written by `run`.
        summary: PathBuf,
        baseline: String,
        treatment: String,
        #[arg(long, value_enum, default_value = "reward")]
        metric: Metric,
        #[arg(long, value_enum, default_value = "paired-sign")]
        test: CompareTest,
        /// Second summary holding the treatment point, if not the first.
        #[arg(long)]
        other: Option<PathBuf>,
    },
    /// Resolve and validate a spec, printing it as JSON.
    ValidateConfig {
        #[command(flatten)]
        spec: SpecArgs,
        /// List preset names instead.
        #[arg(long)]
        list: bool,
    },
    /// Check link-layer rates and feasibility against the reference evaluators.
    OracleCheck {
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn run(command: Command) -> Result<ExitCode, HarnessError> {
    match command {
        Command::Run { spec, out } => {
            let spec = spec.resolve()?;
            let dir = out.join(&spec.label);
            eprintln!("running {} ({} points x {} seeds, code {CODE_HASH}) into {}", spec.label, spec.points().len(), spec.seeds.len(), dir.display());
            let summary = run_experiment(&spec, &dir)?;
            for p in &summary.points {
                println!(
                    "{:<20} reward {:>12.6}  rate {:>12.6e} bps  power {:>10.4} W",
                    p.label, p.mean_reward, p.total_rate_bps, p.total_power_w
                );
            }
            println!("summary: {}", dir.join("summary.json").display());
        }
        Command::Compare { summary, baseline, treatment, metric, test, other } => {
            let left = Summary::from_file(&summary)?;
            let right = match &other {
                Some(path) => Summary::from_file(path)?,
                None => left.clone(),
            };
            let report = compare(left.point(&baseline)?, right.point(&treatment)?, metric, test)?;
            print_json(&report);
        }
        Command::ValidateConfig { spec, list } => {
            if list {
                for name in PRESETS {
                    println!("{name}");
                }
            } else {
                let spec = spec.resolve()?;
                print_json(&spec);
            }
        }
        Command::OracleCheck { instances, seed } => {
            let report = oracle_check(instances, seed, &ScenarioConfig::desk());
            print_json(&report);
            if !report.passed() {
                eprintln!("oracle check FAILED");
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
