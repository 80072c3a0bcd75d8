use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skyvlc_core::link::{check_feasibility, rates};
use skyvlc_core::oracle::{brute_force_allocation, reference_rate};
use skyvlc_core::{AllocationDecision, InterferenceMode, LinkState, RadioParams, RateReport, ScenarioConfig, Vec3};

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

fn reports_agree(a: &RateReport, b: &RateReport) -> bool {
    let fields = [
        (&a.sinr, &b.sinr),
        (&a.comp_rate, &b.comp_rate),
        (&a.comp_leg_rate, &b.comp_leg_rate),
        (&a.noncomp_rate, &b.noncomp_rate),
    ];
    fields.iter().all(|(x, y)| x.len() == y.len() && x.iter().zip(y.iter()).all(|(p, q)| close(*p, *q)))
        && close(a.total, b.total)
}

fn random_instance(rng: &mut ChaCha8Rng) -> (LinkState, AllocationDecision) {
    let cfg = ScenarioConfig::desk();
    let optical = cfg.optical.resolve().unwrap();
    let users = rng.gen_range(1..=3);
    let uavs = rng.gen_range(1..=2);
    let link = if rng.gen_bool(0.5) {
        let q: Vec<Vec3> = (0..uavs)
            .map(|_| Vec3::new(rng.gen_range(-25.0..75.0), rng.gen_range(-25.0..75.0), rng.gen_range(5.0..100.0)))
            .collect();
        let w: Vec<Vec3> =
            (0..users).map(|_| Vec3::new(rng.gen_range(-25.0..75.0), rng.gen_range(-25.0..75.0), 0.0)).collect();
        LinkState::from_positions(&q, &w, &optical).unwrap()
    } else {
        LinkState::from_gains(users, uavs, (0..users * uavs).map(|_| rng.gen_range(0.0..1.0)).collect())
    };
    let mut alloc = AllocationDecision::empty(users, uavs);
    for m in 0..users {
        for f in 0..uavs {
            if rng.gen_bool(0.6) {
                alloc.associate(m, f, rng.gen_range(0.0..12.0));
            }
        }
    }
    alloc.derive_comp_flags(rng.gen_bool(0.7));
    (link, alloc)
}

#[test]
fn rates_match_reference_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let radio = ScenarioConfig::desk().radio;
    let strong = RadioParams { noise_density: 1e-7 / radio.bandwidth, ..radio };
    for _ in 0..1000 {
        let (link, alloc) = random_instance(&mut rng);
        for params in [&radio, &strong] {
            for mode in [InterferenceMode::Physical, InterferenceMode::PaperLiteral] {
                let main = rates(&alloc, &link, params, mode).unwrap();
                let reference = reference_rate(&alloc, &link, params, mode);
                assert!(reports_agree(&main, &reference), "{main:?} vs {reference:?}");
            }
        }
    }
}

#[test]
fn brute_force_maximizers_are_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
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
    let mut feasible = 0;
    for _ in 0..20 {
        let users = rng.gen_range(1..=3);
        let uavs = rng.gen_range(1..=2);
        let link = LinkState::from_gains(users, uavs, (0..users * uavs).map(|_| rng.gen_range(0.05..1.0)).collect());
        let Some(best) = brute_force_allocation(&link, &radio, 4, true, InterferenceMode::Physical).unwrap() else {
            continue;
        };
        feasible += 1;
        let report = rates(&best.allocation, &link, &radio, InterferenceMode::Physical).unwrap();
        let flags = check_feasibility(&best.allocation, &link, &radio, &report, InterferenceMode::Physical).unwrap();
        assert!(flags.is_feasible(), "{flags:?}");
        assert!(close(report.total, best.total_rate));
    }
    assert!(feasible > 0);
}
