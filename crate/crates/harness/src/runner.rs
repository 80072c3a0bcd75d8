//! Runs every (sweep point, seed) pair and writes the artifacts:
//! `<out>/<point>/seed-<s>/{config.json, metrics.csv, checkpoint.bin}` and
//! `<out>/summary.json`.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use skyvlc_core::{Environment, EpisodeMetrics};
use skyvlc_learn::maddpg::{final_window, train};
use skyvlc_learn::{TrainError, Trainer, TrainerKind};

use crate::error::HarnessError;
use crate::experiment::{ExperimentSpec, SweepPoint};

/// Content hash of the sources this binary was built from.
pub const CODE_HASH: &str = env!("SKYVLC_CODE_HASH");

pub const METRICS_HEADER: [&str; 7] = [
    "episode",
    "mean_reward_per_agent",
    "global_reward",
    "total_rate_bps",
    "total_power_w",
    "min_rate_violations",
    "handover_count",
];

/// JSON has no NaN; it is written as `null` and read back as NaN.
fn nan_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// Final-window means of one seed's training log (NaN for an empty log).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub episodes: usize,
    #[serde(deserialize_with = "nan_from_null")]
    pub mean_reward: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub global_reward: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub total_rate_bps: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub total_power_w: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub min_rate_violations: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub handover_count: f64,
}

impl SeedResult {
    pub fn from_metrics(seed: u64, metrics: &[EpisodeMetrics], window: usize) -> Self {
        let w = |get: fn(&EpisodeMetrics) -> f64| final_window(metrics, window, get);
        Self {
            seed,
            episodes: metrics.len(),
            mean_reward: w(|m| m.mean_reward_per_agent),
            global_reward: w(|m| m.global_reward),
            total_rate_bps: w(|m| m.total_rate_bps),
            total_power_w: w(|m| m.total_power_w),
            min_rate_violations: w(|m| m.min_rate_violations as f64),
            handover_count: w(|m| m.handover_count as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub label: String,
    pub kind: TrainerKind,
    pub seeds: Vec<SeedResult>,
    /// Means over seeds of each final-window figure.
    #[serde(deserialize_with = "nan_from_null")]
    pub mean_reward: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub total_rate_bps: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub total_power_w: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub global_reward: f64,
}

impl PointSummary {
    fn new(label: String, kind: TrainerKind, seeds: Vec<SeedResult>) -> Self {
        let avg = |get: fn(&SeedResult) -> f64| seeds.iter().map(get).sum::<f64>() / seeds.len() as f64;
        Self {
            mean_reward: avg(|s| s.mean_reward),
            total_rate_bps: avg(|s| s.total_rate_bps),
            total_power_w: avg(|s| s.total_power_w),
            global_reward: avg(|s| s.global_reward),
            label,
            kind,
            seeds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub label: String,
    pub code_hash: String,
    pub spec: ExperimentSpec,
    pub points: Vec<PointSummary>,
}

impl Summary {
    pub fn point(&self, label: &str) -> Result<&PointSummary, HarnessError> {
        self.points.iter().find(|p| p.label == label).ok_or_else(|| HarnessError::MissingPoint(label.into()))
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(HarnessError::io(path))?;
        serde_json::from_str(&text).map_err(|source| HarnessError::Json { path: path.into(), source })
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(HarnessError::io(path))
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"SKYCKPT\0";

/// Checkpoint file: magic, u64 length of a JSON header (config and code
/// hash), the header, then the trainer's network dump.
pub fn write_checkpoint(path: &Path, header: &serde_json::Value, trainer: &Trainer) -> Result<(), HarnessError> {
    let tmp = path.with_extension("bin.tmp");
    let file = File::create(&tmp).map_err(HarnessError::io(&tmp))?;
    let mut out = BufWriter::new(file);
    let head = serde_json::to_vec(header).expect("serializable");
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&(head.len() as u64).to_le_bytes())?;
        out.write_all(&head)?;
        Ok(())
    };
    write(&mut out).map_err(HarnessError::io(&tmp))?;
    trainer.save(&mut out).map_err(TrainError::from)?;
    out.flush().map_err(HarnessError::io(&tmp))?;
    drop(out);
    fs::rename(&tmp, path).map_err(HarnessError::io(path))
}

/// Reads the JSON header and restores the networks into `trainer`.
pub fn read_checkpoint(path: &Path, trainer: &mut Trainer) -> Result<serde_json::Value, HarnessError> {
    let mut input = std::io::BufReader::new(File::open(path).map_err(HarnessError::io(path))?);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(HarnessError::io(path))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(HarnessError::invalid("checkpoint", format!("{} is not a checkpoint file", path.display())));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len).map_err(HarnessError::io(path))?;
    let mut head = vec![0u8; u64::from_le_bytes(len) as usize];
    input.read_exact(&mut head).map_err(HarnessError::io(path))?;
    let header = serde_json::from_slice(&head).map_err(|source| HarnessError::Json { path: path.into(), source })?;
    trainer.load(&mut input).map_err(TrainError::from)?;
    Ok(header)
}

/// Trains one seed of one sweep point, streaming metrics to disk.
pub fn run_seed(
    point: &SweepPoint,
    seed: u64,
    spec: &ExperimentSpec,
    dir: &Path,
) -> Result<SeedResult, HarnessError> {
    fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    let header = json!({
        "code_hash": CODE_HASH,
        "seed": seed,
        "final_window": spec.final_window,
        "point": point,
    });
    write_json(&dir.join("config.json"), &header)?;

    let metrics_path = dir.join("metrics.csv");
    let mut file = BufWriter::new(File::create(&metrics_path).map_err(HarnessError::io(&metrics_path))?);
    writeln!(file, "# config: {}", serde_json::to_string(point).expect("serializable"))
        .and_then(|_| writeln!(file, "# code: {CODE_HASH}"))
        .map_err(HarnessError::io(&metrics_path))?;
    let mut csv = csv::Writer::from_writer(file);
    csv.write_record(METRICS_HEADER)?;
    csv.flush().map_err(HarnessError::io(&metrics_path))?;

    let env = Environment::new(point.scenario.clone()).map_err(TrainError::from)?;
    let checkpoint = dir.join("checkpoint.bin");
    let every = spec.checkpoint_every;
    let (metrics, trainer) = train(&env, point.kind, point.trainer.clone(), seed, |trainer, m| {
        let row = [
            m.episode.to_string(),
            m.mean_reward_per_agent.to_string(),
            m.global_reward.to_string(),
            m.total_rate_bps.to_string(),
            m.total_power_w.to_string(),
            m.min_rate_violations.to_string(),
            m.handover_count.to_string(),
        ];
        let io = |e: &dyn std::fmt::Display| TrainError::Callback(format!("{}: {e}", metrics_path.display()));
        csv.write_record(&row).map_err(|e| io(&e))?;
        csv.flush().map_err(|e| io(&e))?;
        if every > 0 && m.episode % every == 0 {
            write_checkpoint(&checkpoint, &header, trainer).map_err(|e| io(&e))?;
        }
        Ok(())
    })?;
    if !metrics.is_empty() {
        write_checkpoint(&checkpoint, &header, &trainer)?;
    }
    Ok(SeedResult::from_metrics(seed, &metrics, spec.final_window))
}

pub fn seed_dir(out: &Path, point: &str, seed: u64) -> PathBuf {
    out.join(point).join(format!("seed-{seed}"))
}

/// Runs the whole experiment (points × seeds in parallel) and writes the summary.
pub fn run_experiment(spec: &ExperimentSpec, out: &Path) -> Result<Summary, HarnessError> {
    spec.validate()?;
    fs::create_dir_all(out).map_err(HarnessError::io(out))?;
    let points = spec.points();
    let jobs: Vec<(usize, u64)> =
        (0..points.len()).flat_map(|p| spec.seeds.iter().map(move |&s| (p, s))).collect();
    let results: Vec<Result<SeedResult, HarnessError>> = jobs
        .par_iter()
        .map(|&(p, seed)| run_seed(&points[p], seed, spec, &seed_dir(out, &points[p].label, seed)))
        .collect();
    let mut per_point: Vec<Vec<SeedResult>> = vec![Vec::new(); points.len()];
    for ((p, _), r) in jobs.iter().zip(results) {
        per_point[*p].push(r?);
    }
    let summary = Summary {
        label: spec.label.clone(),
        code_hash: CODE_HASH.into(),
        spec: spec.clone(),
        points: points
            .iter()
            .zip(per_point)
            .map(|(p, seeds)| PointSummary::new(p.label.clone(), p.kind, seeds))
            .collect(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}
