use std::fs;
use std::path::Path;
use std::process::Command;

use skyvlc_core::ScenarioConfig;
use skyvlc_harness::compare::{compare, CompareTest, Metric};
use skyvlc_harness::experiment::{ExperimentSpec, Sweep};
use skyvlc_harness::runner::{read_checkpoint, run_experiment, seed_dir, Summary, METRICS_HEADER};
use skyvlc_harness::HarnessError;
use skyvlc_learn::{Trainer, TrainerConfig, TrainerKind};

fn tiny_spec(label: &str, episodes: usize) -> ExperimentSpec {
    let mut scenario = ScenarioConfig::desk();
    scenario.master_slots = 2;
    scenario.small_slots = 3;
    let trainer = TrainerConfig {
        episodes,
        actor_hidden: vec![8],
        critic_hidden: vec![8],
        global_critic_hidden: vec![8],
        batch_size: 4,
        buffer_capacity: 64,
        ..TrainerConfig::desk()
    };
    ExperimentSpec {
        label: label.into(),
        kind: TrainerKind::Maddpg,
        seeds: vec![1, 2, 3],
        scenario,
        trainer,
        sweep: None,
        final_window: 2,
        checkpoint_every: 0,
    }
}

fn data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(str::to_owned)
        .collect()
}

#[test]
fn alpha_sweep_writes_one_metrics_file_per_point_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = tiny_spec("alpha", 3);
    spec.sweep = Some(Sweep::Alpha(vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]));
    let summary = run_experiment(&spec, dir.path()).unwrap();
    assert_eq!(summary.points.len(), 6);

    let mut files = 0;
    for point in &summary.points {
        for seed in &spec.seeds {
            let metrics = seed_dir(dir.path(), &point.label, *seed).join("metrics.csv");
            let text = fs::read_to_string(&metrics).unwrap();
            assert!(text.starts_with("# config: "));
            assert!(text.lines().nth(1).unwrap().starts_with("# code: "));
            assert_eq!(text.lines().nth(2).unwrap(), METRICS_HEADER.join(","));
            assert_eq!(data_rows(&metrics).len(), 3);
            files += 1;
        }
    }
    assert_eq!(files, 18);
    let summaries: Vec<_> = walk(dir.path()).into_iter().filter(|p| p.ends_with("summary.json")).collect();
    assert_eq!(summaries.len(), 1);
    assert_eq!(Summary::from_file(&summaries[0]).unwrap(), summary);
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap().flatten() {
        let p = entry.path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn rerun_is_byte_identical() {
    let spec = tiny_spec("rerun", 3);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&spec, a.path()).unwrap();
    run_experiment(&spec, b.path()).unwrap();
    assert_eq!(fs::read(a.path().join("summary.json")).unwrap(), fs::read(b.path().join("summary.json")).unwrap());
    for seed in &spec.seeds {
        let m = |root: &Path| fs::read(seed_dir(root, "rerun", *seed).join("metrics.csv")).unwrap();
        assert_eq!(m(a.path()), m(b.path()));
    }
}

#[test]
fn zero_episodes_gives_empty_metrics_and_no_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = tiny_spec("empty", 0);
    spec.seeds = vec![7];
    let summary = run_experiment(&spec, dir.path()).unwrap();
    let seed = seed_dir(dir.path(), "empty", 7);
    assert!(data_rows(&seed.join("metrics.csv")).is_empty());
    assert!(!seed.join("checkpoint.bin").exists());
    assert_eq!(summary.points[0].seeds[0].episodes, 0);
    assert!(summary.points[0].mean_reward.is_nan());
    // NaN survives the JSON round trip as null
    let back = Summary::from_file(&dir.path().join("summary.json")).unwrap();
    assert!(back.points[0].seeds[0].mean_reward.is_nan());
}

#[test]
fn comparing_a_run_with_itself() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_experiment(&tiny_spec("self", 2), dir.path()).unwrap();
    let p = summary.point("self").unwrap();
    for metric in [Metric::Reward, Metric::TotalPower] {
        let r = compare(p, p, metric, CompareTest::MeanRatio).unwrap();
        assert_eq!(r.mean_ratio, 1.0);
        assert!(r.deltas.iter().all(|&d| d == 0.0));
    }
}

#[test]
fn comparing_different_seed_sets_fails() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut left = tiny_spec("x", 1);
    left.seeds = vec![1, 2];
    let mut right = left.clone();
    right.seeds = vec![1, 3];
    let sa = run_experiment(&left, a.path()).unwrap();
    let sb = run_experiment(&right, b.path()).unwrap();
    let err = compare(sa.point("x").unwrap(), sb.point("x").unwrap(), Metric::Reward, CompareTest::PairedSign);
    assert!(matches!(err, Err(HarnessError::SeedMismatch { .. })));
}

#[test]
fn checkpoint_restores_the_trained_networks() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = tiny_spec("ckpt", 4);
    spec.seeds = vec![5];
    spec.checkpoint_every = 2;
    run_experiment(&spec, dir.path()).unwrap();
    let path = seed_dir(dir.path(), "ckpt", 5).join("checkpoint.bin");

    let point = &spec.points()[0];
    let env = skyvlc_core::Environment::new(point.scenario.clone()).unwrap();
    let (_, trained) = skyvlc_learn::train(&env, point.kind, point.trainer.clone(), 5, |_, _| Ok(())).unwrap();
    let mut fresh = Trainer::for_env(point.kind, point.trainer.clone(), &env, 99).unwrap();
    let header = read_checkpoint(&path, &mut fresh).unwrap();
    assert_eq!(header["seed"], 5);
    for (a, b) in fresh.learners().iter().zip(trained.learners()) {
        assert_eq!(a.actor.flat_parameters(), b.actor.flat_parameters());
        assert_eq!(a.critic_target.flat_parameters(), b.critic_target.flat_parameters());
    }
}

#[test]
fn cli_validate_config_and_errors() {
    let bin = env!("CARGO_BIN_EXE_skyvlc");
    let ok = Command::new(bin)
        .args(["validate-config", "--preset", "desk", "--override", "scenario.alpha=0.3", "--seed", "4,5"])
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let spec: ExperimentSpec = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(spec.scenario.alpha, 0.3);
    assert_eq!(spec.seeds, vec![4, 5]);

    let bad = Command::new(bin).args(["validate-config", "--override", "scenario.alpha=1.5"]).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("alpha"));

    let unknown = Command::new(bin).args(["validate-config", "--override", "scenario.nope=1"]).output().unwrap();
    assert!(!unknown.status.success());

    let list = Command::new(bin).args(["validate-config", "--list"]).output().unwrap();
    assert!(String::from_utf8_lossy(&list.stdout).lines().any(|l| l == "paper-default"));
}

#[test]
fn cli_run_honours_output_env_var() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("spec.json");
    let mut spec = tiny_spec("cli", 1);
    spec.seeds = vec![2];
    fs::write(&config, serde_json::to_string(&spec).unwrap()).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_skyvlc"))
        .args(["run", "--config"])
        .arg(&config)
        .env("SKYVLC_OUT", dir.path().join("root"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("root/cli/summary.json").exists());
    assert!(dir.path().join("root/cli/cli/seed-2/metrics.csv").exists());
}

#[test]
fn cli_oracle_check_passes() {
    let out = Command::new(env!("CARGO_BIN_EXE_skyvlc")).args(["oracle-check", "--instances", "200"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}
