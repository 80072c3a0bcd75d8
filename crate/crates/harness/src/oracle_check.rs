//! Cross-checks the link layer against the reference evaluators on random
//! instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use skyvlc_core::link::{check_feasibility, rates};
use skyvlc_core::oracle::{brute_force_allocation, reference_rate};
use skyvlc_core::{AllocationDecision, InterferenceMode, LinkState, RadioParams, RateReport, ScenarioConfig, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheckReport {
    pub instances: usize,
    pub max_relative_error: f64,
    pub mismatches: usize,
    pub brute_force_instances: usize,
    pub brute_force_infeasible_maximizers: usize,
}

impl OracleCheckReport {
    pub fn passed(&self) -> bool {
        self.mismatches == 0 && self.brute_force_infeasible_maximizers == 0
    }
}

fn relative_error(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Largest relative difference over every field of two reports.
pub fn report_error(a: &RateReport, b: &RateReport) -> f64 {
    let mut worst = relative_error(a.total, b.total);
    for (x, y) in [(&a.sinr, &b.sinr), (&a.comp_rate, &b.comp_rate), (&a.comp_leg_rate, &b.comp_leg_rate), (&a.noncomp_rate, &b.noncomp_rate)] {
        if x.len() != y.len() {
            return f64::INFINITY;
        }
        for (p, q) in x.iter().zip(y) {
            worst = worst.max(relative_error(*p, *q));
        }
    }
    worst
}

/// Random instance with at most 3 users and 2 UAVs: either geometric
/// (positions through the optical channel) or synthetic gains.
pub fn random_instance(rng: &mut ChaCha8Rng, scenario: &ScenarioConfig) -> (LinkState, AllocationDecision) {
    let users = rng.gen_range(1..=3);
    let uavs = rng.gen_range(1..=2);
    let link = if rng.gen_bool(0.5) {
        let optical = scenario.optical.resolve().expect("validated scenario");
        let a = &scenario.arena;
        let horizontal = |rng: &mut ChaCha8Rng| {
            (rng.gen_range(a.x_mid - a.radius_m..a.x_mid + a.radius_m), rng.gen_range(a.y_mid - a.radius_m..a.y_mid + a.radius_m))
        };
        let q: Vec<Vec3> = (0..uavs)
            .map(|_| {
                let (x, y) = horizontal(rng);
                Vec3::new(x, y, rng.gen_range(1.0..a.z_max_m))
            })
            .collect();
        let w: Vec<Vec3> = (0..users)
            .map(|_| {
                let (x, y) = horizontal(rng);
                Vec3::new(x, y, 0.0)
            })
            .collect();
        LinkState::from_positions(&q, &w, &optical).expect("UAVs fly above users")
    } else {
        LinkState::from_gains(users, uavs, (0..users * uavs).map(|_| rng.gen_range(0.0..1.0)).collect())
    };
    let mut alloc = AllocationDecision::empty(users, uavs);
    for m in 0..users {
        for f in 0..uavs {
            if rng.gen_bool(0.6) {
                alloc.associate(m, f, rng.gen_range(0.0..scenario.radio.p_uav_max));
            }
        }
    }
    alloc.derive_comp_flags(rng.gen_bool(0.7));
    (link, alloc)
}

/// `instances` rate comparisons in both interference modes, plus a few
/// exhaustive searches whose maximizers are re-checked by the main path.
pub fn oracle_check(instances: usize, seed: u64, scenario: &ScenarioConfig) -> OracleCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut mismatches = 0;
    for _ in 0..instances {
        let (link, alloc) = random_instance(&mut rng, scenario);
        for mode in [InterferenceMode::Physical, InterferenceMode::PaperLiteral] {
            let main = rates(&alloc, &link, &scenario.radio, mode).expect("shapes agree");
            let reference = reference_rate(&alloc, &link, &scenario.radio, mode);
            let err = report_error(&main, &reference);
            worst = worst.max(err);
            if !(err <= 1e-12) {
                mismatches += 1;
            }
        }
    }

    // synthetic radio where rates are O(1) bit/s and the minimum rate binds
    let radio = RadioParams {
        responsivity: 1.0,
        noise_density: 0.5,
        bandwidth: 2.0,
        p_max: 18.0,
        p_uav_max: 12.0,
        r_min: 0.2,
        r_min_comp: 0.3,
        max_users_per_uav: 2,
    };
    let brute = instances.min(20);
    let mut infeasible = 0;
    for _ in 0..brute {
        let users = rng.gen_range(1..=3);
        let uavs = rng.gen_range(1..=2);
        let link = LinkState::from_gains(users, uavs, (0..users * uavs).map(|_| rng.gen_range(0.05..1.0)).collect());
        for comp in [true, false] {
            let found = brute_force_allocation(&link, &radio, 4, comp, InterferenceMode::Physical).expect("small instance");
            if let Some(best) = found {
                let report = rates(&best.allocation, &link, &radio, InterferenceMode::Physical).expect("shapes agree");
                let flags = check_feasibility(&best.allocation, &link, &radio, &report, InterferenceMode::Physical)
                    .expect("shapes agree");
                let single = (0..users).all(|m| best.allocation.user_links(m) <= 1);
                if !flags.is_feasible() || (!comp && !single) {
                    infeasible += 1;
                }
            }
        }
    }
    OracleCheckReport {
        instances,
        max_relative_error: worst,
        mismatches,
        brute_force_instances: brute,
        brute_force_infeasible_maximizers: infeasible,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_check_passes() {
        let report = oracle_check(50, 3, &ScenarioConfig::desk());
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.brute_force_instances, 20);
    }
}
