//! Paired comparison of two sweep points that share seeds.

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::runner::{PointSummary, SeedResult};
use crate::stats::{mean, sign_test_p};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CompareTest {
    PairedSign,
    MeanRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Reward,
    TotalRate,
    TotalPower,
    GlobalReward,
}

impl Metric {
    pub fn of(self, s: &SeedResult) -> f64 {
        match self {
            Metric::Reward => s.mean_reward,
            Metric::TotalRate => s.total_rate_bps,
            Metric::TotalPower => s.total_power_w,
            Metric::GlobalReward => s.global_reward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub baseline: String,
    pub treatment: String,
    pub metric: Metric,
    pub test: CompareTest,
    pub seeds: Vec<u64>,
    pub baseline_values: Vec<f64>,
    pub treatment_values: Vec<f64>,
    /// Treatment minus baseline, per seed.
    pub deltas: Vec<f64>,
    /// Mean treatment over mean baseline.
    pub mean_ratio: f64,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// Exact two-sided sign-test p-value (paired-sign only).
    pub p_value: Option<f64>,
}

/// Pairs the two points seed by seed; `SeedMismatch` unless both ran the
/// same seeds.
pub fn compare(
    baseline: &PointSummary,
    treatment: &PointSummary,
    metric: Metric,
    test: CompareTest,
) -> Result<ComparisonReport, HarnessError> {
    let seeds = |p: &PointSummary| {
        let mut s: Vec<u64> = p.seeds.iter().map(|r| r.seed).collect();
        s.sort_unstable();
        s
    };
    let (left, right) = (seeds(baseline), seeds(treatment));
    if left != right {
        return Err(HarnessError::SeedMismatch { left, right });
    }
    let value = |p: &PointSummary, seed: u64| {
        metric.of(p.seeds.iter().find(|r| r.seed == seed).expect("seed sets are equal"))
    };
    let baseline_values: Vec<f64> = left.iter().map(|&s| value(baseline, s)).collect();
    let treatment_values: Vec<f64> = left.iter().map(|&s| value(treatment, s)).collect();
    let deltas: Vec<f64> = treatment_values.iter().zip(&baseline_values).map(|(t, b)| t - b).collect();
    Ok(ComparisonReport {
        baseline: baseline.label.clone(),
        treatment: treatment.label.clone(),
        metric,
        test,
        mean_ratio: mean(&treatment_values) / mean(&baseline_values),
        wins: deltas.iter().filter(|&&d| d > 0.0).count(),
        losses: deltas.iter().filter(|&&d| d < 0.0).count(),
        ties: deltas.iter().filter(|&&d| d == 0.0).count(),
        p_value: (test == CompareTest::PairedSign).then(|| sign_test_p(&deltas)),
        seeds: left,
        baseline_values,
        treatment_values,
        deltas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use skyvlc_learn::TrainerKind;

    fn point(label: &str, seeds: &[(u64, f64)]) -> PointSummary {
        PointSummary {
            label: label.into(),
            kind: TrainerKind::Maddpg,
            seeds: seeds
                .iter()
                .map(|&(seed, v)| SeedResult {
                    seed,
                    episodes: 10,
                    mean_reward: v,
                    global_reward: 0.0,
                    total_rate_bps: v * 2.0,
                    total_power_w: 1.0,
                    min_rate_violations: 0.0,
                    handover_count: 0.0,
                })
                .collect(),
            mean_reward: 0.0,
            total_rate_bps: 0.0,
            total_power_w: 0.0,
            global_reward: 0.0,
        }
    }

    #[test]
    fn identical_runs() {
        let a = point("a", &[(1, 0.5), (2, 0.7)]);
        let r = compare(&a, &a, Metric::Reward, CompareTest::MeanRatio).unwrap();
        assert_eq!(r.mean_ratio, 1.0);
        assert!(r.deltas.iter().all(|&d| d == 0.0));
        assert_eq!(r.p_value, None);
    }

    #[test]
    fn per_seed_deltas_and_sign_test() {
        let a = point("comp-off", &[(1, 1.0), (2, 1.0), (3, 1.0)]);
        let b = point("comp-on", &[(3, 2.0), (1, 1.5), (2, 0.5)]);
        let r = compare(&a, &b, Metric::TotalRate, CompareTest::PairedSign).unwrap();
        assert_eq!(r.seeds, vec![1, 2, 3]);
        assert_eq!(r.deltas, vec![1.0, -1.0, 2.0]);
        assert_eq!((r.wins, r.losses, r.ties), (2, 1, 0));
        assert_eq!(r.p_value, Some(1.0));
    }

    #[test]
    fn seed_mismatch_is_an_error() {
        let a = point("a", &[(1, 1.0), (2, 1.0)]);
        let b = point("b", &[(1, 1.0), (3, 1.0)]);
        assert!(matches!(
            compare(&a, &b, Metric::Reward, CompareTest::PairedSign),
            Err(HarnessError::SeedMismatch { .. })
        ));
    }
}
