//! Experiment descriptions, named presets and dotted-path overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use skyvlc_core::ScenarioConfig;
use skyvlc_learn::{TrainError, TrainerConfig, TrainerKind};

use crate::error::HarnessError;

/// One axis varied across runs; every value becomes a sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "kebab-case")]
pub enum Sweep {
    /// Reward weight α.
    Alpha(Vec<f64>),
    /// Minimum rate in bit/s, applied to CoMP and non-CoMP users alike.
    MinRate(Vec<f64>),
    /// CoMP enabled then disabled.
    Comp,
    /// Per-master-slot acceleration then constant velocity.
    Motion,
    /// Different learners on the same scenario.
    Trainer(Vec<TrainerKind>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub label: String,
    pub kind: TrainerKind,
    pub seeds: Vec<u64>,
    pub scenario: ScenarioConfig,
    pub trainer: TrainerConfig,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    /// Episodes averaged for the "converged" figures in the summary.
    pub final_window: usize,
    /// Checkpoint cadence in episodes; 0 keeps only the final checkpoint.
    #[serde(default)]
    pub checkpoint_every: usize,
}

/// A fully resolved run configuration for one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub label: String,
    pub kind: TrainerKind,
    pub scenario: ScenarioConfig,
    pub trainer: TrainerConfig,
}

fn fmt_value(v: f64) -> String {
    let s = format!("{v}");
    s.replace('.', "_")
}

impl ExperimentSpec {
    pub fn points(&self) -> Vec<SweepPoint> {
        let base = |label: String| SweepPoint {
            label,
            kind: self.kind,
            scenario: self.scenario.clone(),
            trainer: self.trainer.clone(),
        };
        match &self.sweep {
            None => vec![base(self.label.clone())],
            Some(Sweep::Alpha(values)) => values
                .iter()
                .map(|&a| {
                    let mut p = base(format!("alpha-{}", fmt_value(a)));
                    p.scenario.alpha = a;
                    p
                })
                .collect(),
            Some(Sweep::MinRate(values)) => values
                .iter()
                .map(|&r| {
                    let mut p = base(format!("rmin-{}", fmt_value(r)));
                    p.scenario.radio.r_min = r;
                    p.scenario.radio.r_min_comp = r;
                    p
                })
                .collect(),
            Some(Sweep::Comp) => [("comp-on", true), ("comp-off", false)]
                .into_iter()
                .map(|(label, on)| {
                    let mut p = base(label.into());
                    p.scenario.features.comp_enabled = on;
                    p
                })
                .collect(),
            Some(Sweep::Motion) => [("accel", false), ("const-velocity", true)]
                .into_iter()
                .map(|(label, cv)| {
                    let mut p = base(label.into());
                    p.scenario.features.constant_velocity_mode = cv;
                    p
                })
                .collect(),
            Some(Sweep::Trainer(kinds)) => kinds
                .iter()
                .map(|&k| {
                    let mut p = base(kind_label(k).into());
                    p.kind = k;
                    if k != TrainerKind::Maddpg {
                        p.trainer.policy_delay = 1;
                    }
                    p
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.label.is_empty() || self.label.contains(['/', '\\']) {
            return Err(HarnessError::invalid("label", "must be a non-empty name without path separators"));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::invalid("seeds", "need at least one seed"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(HarnessError::invalid("seeds", "seeds must be distinct"));
        }
        if self.final_window == 0 {
            return Err(HarnessError::invalid("final_window", "must be at least 1"));
        }
        self.scenario
            .validate()
            .map_err(|e| HarnessError::invalid(format!("scenario.{}", e.field), e.message))?;
        self.trainer.validate().map_err(|e| match e {
            TrainError::Config { field, message } => HarnessError::invalid(format!("trainer.{field}"), message),
            other => HarnessError::Train(other),
        })?;
        match &self.sweep {
            Some(Sweep::Alpha(v)) if v.is_empty() || v.iter().any(|a| !(0.0..=1.0).contains(a)) => {
                Err(HarnessError::invalid("sweep.values", "alpha values must be a non-empty list within [0, 1]"))
            }
            Some(Sweep::MinRate(v)) if v.is_empty() || v.iter().any(|r| !(*r >= 0.0 && r.is_finite())) => {
                Err(HarnessError::invalid("sweep.values", "minimum rates must be a non-empty list of finite values >= 0"))
            }
            Some(Sweep::Trainer(v)) if v.is_empty() => {
                Err(HarnessError::invalid("sweep.values", "need at least one trainer"))
            }
            _ => Ok(()),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        serde_json::from_str(&text).map_err(|source| HarnessError::Json { path: path.into(), source })
    }

    /// Applies `key=value` overrides on dotted paths (e.g.
    /// `scenario.radio.r_min_bps=50`). Values parse as JSON, falling back
    /// to a plain string.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, HarnessError> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = serde_json::to_value(self).expect("spec serializes");
        for spec in overrides {
            let err = |message: &str| HarnessError::Override { spec: spec.clone(), message: message.into() };
            let (path, raw) = spec.split_once('=').ok_or_else(|| err("expected key=value"))?;
            let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()));
            let mut node = &mut doc;
            let keys: Vec<&str> = path.split('.').collect();
            for (depth, key) in keys.iter().enumerate() {
                let last = depth + 1 == keys.len();
                let obj = node.as_object_mut().ok_or_else(|| err("path runs through a non-object value"))?;
                if !obj.contains_key(*key) && !(last && matches!(*key, "sweep" | "checkpoint_every")) {
                    return Err(err(&format!("unknown key `{key}`")));
                }
                if last {
                    obj.insert((*key).into(), value.clone());
                    break;
                }
                node = obj.get_mut(*key).expect("checked above");
            }
        }
        serde_json::from_value(doc).map_err(|e| HarnessError::Override {
            spec: overrides.join(" "),
            message: e.to_string(),
        })
    }
}

pub fn kind_label(kind: TrainerKind) -> &'static str {
    match kind {
        TrainerKind::Maddpg => "maddpg",
        TrainerKind::Decentralized => "decentralized",
        TrainerKind::Ddpg => "ddpg",
    }
}

pub const PRESETS: &[&str] =
    &["desk", "paper-default", "alpha-sweep", "min-rate-sweep", "comp-ablation", "motion-ablation", "baselines"];

pub fn preset(name: &str) -> Result<ExperimentSpec, HarnessError> {
    let desk = ExperimentSpec {
        label: "desk".into(),
        kind: TrainerKind::Maddpg,
        seeds: vec![1, 2, 3, 4, 5],
        scenario: ScenarioConfig::desk(),
        trainer: TrainerConfig::desk(),
        sweep: None,
        final_window: 50,
        checkpoint_every: 0,
    };
    let spec = match name {
        "desk" => desk,
        "paper-default" => ExperimentSpec {
            label: "paper-default".into(),
            seeds: vec![1],
            scenario: ScenarioConfig::paper_default(),
            trainer: TrainerConfig::paper_default(),
            checkpoint_every: 50,
            ..desk
        },
        "alpha-sweep" => ExperimentSpec {
            label: "alpha-sweep".into(),
            seeds: vec![1, 2, 3],
            sweep: Some(Sweep::Alpha(vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0])),
            ..desk
        },
        "min-rate-sweep" => ExperimentSpec {
            label: "min-rate-sweep".into(),
            seeds: vec![1, 2, 3],
            sweep: Some(Sweep::MinRate(vec![0.0, 50.0, 100.0, 200.0, 400.0])),
            ..desk
        },
        "comp-ablation" => ExperimentSpec { label: "comp-ablation".into(), sweep: Some(Sweep::Comp), ..desk },
        "motion-ablation" => ExperimentSpec { label: "motion-ablation".into(), sweep: Some(Sweep::Motion), ..desk },
        "baselines" => ExperimentSpec {
            label: "baselines".into(),
            sweep: Some(Sweep::Trainer(vec![TrainerKind::Maddpg, TrainerKind::Decentralized, TrainerKind::Ddpg])),
            ..desk
        },
        other => return Err(HarnessError::UnknownPreset(other.into())),
    };
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for name in PRESETS {
            preset(name).unwrap().validate().unwrap();
        }
        assert!(matches!(preset("nope"), Err(HarnessError::UnknownPreset(_))));
    }

    #[test]
    fn paper_default_values() {
        let p = preset("paper-default").unwrap();
        assert_eq!((p.scenario.uavs, p.scenario.users), (3, 9));
        assert_eq!(p.scenario.radio.p_max, 36.0);
        assert_eq!(p.scenario.radio.p_uav_max, 12.0);
        assert_eq!(p.scenario.radio.max_users_per_uav, 3);
        assert_eq!(p.trainer.gamma, 0.99);
        assert_eq!(p.trainer.tau, 0.0005);
        assert_eq!(p.trainer.buffer_capacity, 50_000);
        assert_eq!(p.trainer.batch_size, 64);
    }

    #[test]
    fn sweep_points() {
        let alpha = preset("alpha-sweep").unwrap().points();
        assert_eq!(alpha.len(), 6);
        assert_eq!(alpha[1].label, "alpha-0_2");
        assert_eq!(alpha[1].scenario.alpha, 0.2);

        let base = preset("baselines").unwrap().points();
        assert_eq!(base.iter().map(|p| p.trainer.policy_delay).collect::<Vec<_>>(), vec![2, 1, 1]);
        let motion = preset("motion-ablation").unwrap().points();
        assert!(motion[1].scenario.features.constant_velocity_mode);
        let comp = preset("comp-ablation").unwrap().points();
        assert!(!comp[1].scenario.features.comp_enabled);
    }

    #[test]
    fn overrides_follow_dotted_paths() {
        let spec = preset("desk").unwrap();
        let o = spec
            .with_overrides(&[
                "scenario.alpha=0.3".into(),
                "trainer.episodes=7".into(),
                "seeds=[9]".into(),
                "label=quick".into(),
                "sweep={\"axis\":\"alpha\",\"values\":[0.0,1.0]}".into(),
            ])
            .unwrap();
        assert_eq!(o.scenario.alpha, 0.3);
        assert_eq!(o.trainer.episodes, 7);
        assert_eq!(o.seeds, vec![9]);
        assert_eq!(o.label, "quick");
        assert_eq!(o.points().len(), 2);

        assert!(spec.with_overrides(&["scenario.nope=1".into()]).is_err());
        assert!(spec.with_overrides(&["scenario.alpha".into()]).is_err());
        assert!(spec.with_overrides(&["scenario.alpha=\"high\"".into()]).is_err());
    }

    #[test]
    fn validation_names_fields() {
        let mut spec = preset("desk").unwrap();
        spec.scenario.alpha = 2.0;
        match spec.validate() {
            Err(HarnessError::InvalidConfig { field, .. }) => assert_eq!(field, "scenario.alpha"),
            other => panic!("{other:?}"),
        }
        let mut spec = preset("desk").unwrap();
        spec.trainer.tau = 0.0;
        match spec.validate() {
            Err(HarnessError::InvalidConfig { field, .. }) => assert_eq!(field, "trainer.tau"),
            other => panic!("{other:?}"),
        }
        let mut spec = preset("desk").unwrap();
        spec.seeds.clear();
        assert!(spec.validate().is_err());
        let mut spec = preset("desk").unwrap();
        spec.sweep = Some(Sweep::Alpha(vec![1.5]));
        assert!(spec.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let spec = preset("alpha-sweep").unwrap();
        let text = serde_json::to_string_pretty(&spec).unwrap();
        let back: ExperimentSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
