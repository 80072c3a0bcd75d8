//! Slow, self-contained reference evaluators. Nothing here calls into the
//! link-layer rate or interference code; only the plain data types are shared.

use crate::error::OracleError;
use crate::link::{AllocationDecision, InterferenceMode, LinkState, RadioParams, RateReport};

/// Rates evaluated formula by formula.
pub fn reference_rate(
    alloc: &AllocationDecision,
    link: &LinkState,
    params: &RadioParams,
    mode: InterferenceMode,
) -> RateReport {
    let users = link.users();
    let uavs = link.uavs();
    let mu = params.responsivity;
    let noise = params.bandwidth * params.noise_density;

    let mut sinr = vec![0.0; users * uavs];
    for f in 0..uavs {
        // decoding order: insertion sort on h², strongest first, stable on index
        let mut order: Vec<usize> = Vec::new();
        for m in 0..users {
            let hm = link.gain(m, f);
            let mut pos = order.len();
            for (k, &other) in order.iter().enumerate() {
                let ho = link.gain(other, f);
                if hm * hm > ho * ho {
                    pos = k;
                    break;
                }
            }
            order.insert(pos, m);
        }
        for (rank, &m) in order.iter().enumerate() {
            if !alloc.is_associated(m, f) {
                continue;
            }
            let p = alloc.power(m, f);
            let h = link.gain(m, f);
            let mut interference = 0.0;
            for &i in &order[..rank] {
                if !alloc.is_associated(i, f) {
                    continue;
                }
                let weight = match mode {
                    InterferenceMode::Physical => h,
                    InterferenceMode::PaperLiteral => link.gain(i, f),
                };
                interference += alloc.power(i, f) * weight.powi(2);
            }
            sinr[m * uavs + f] = mu.powi(2) * p * h.powi(2) / (interference + noise);
        }
    }

    let mut comp_rate = vec![0.0; users];
    let mut comp_leg_rate = vec![0.0; users * uavs];
    let mut noncomp_rate = vec![0.0; users * uavs];
    let mut total = 0.0;
    for m in 0..users {
        let mut user_total = 0.0;
        for f in 0..uavs {
            let i = m * uavs + f;
            let r = (params.bandwidth / 2.0) * sinr[i].ln_1p() / std::f64::consts::LN_2;
            let nu = if alloc.is_comp(m, f) { 1.0 } else { 0.0 };
            comp_leg_rate[i] = nu * r;
            noncomp_rate[i] = (1.0 - nu) * r;
            comp_rate[m] += nu * r;
        }
        user_total += comp_rate[m];
        for f in 0..uavs {
            user_total += noncomp_rate[m * uavs + f];
        }
        total += user_total;
    }
    RateReport { users, uavs, sinr, comp_rate, comp_leg_rate, noncomp_rate, total }
}

/// Every constraint of the allocation problem, checked directly.
pub fn reference_feasible(
    alloc: &AllocationDecision,
    link: &LinkState,
    params: &RadioParams,
    mode: InterferenceMode,
) -> bool {
    let report = reference_rate(alloc, link, params, mode);
    let (users, uavs) = (link.users(), link.uavs());
    let slack = 1.0 + 1e-12;
    let mut total_power = 0.0;
    for f in 0..uavs {
        let mut column = 0.0;
        let mut load = 0;
        for m in 0..users {
            if alloc.is_associated(m, f) {
                column += alloc.power(m, f);
                load += 1;
            }
        }
        if column > params.p_uav_max * slack || load > params.max_users_per_uav {
            return false;
        }
        total_power += column;
    }
    if total_power > params.p_max * slack {
        return false;
    }
    for m in 0..users {
        let comp = alloc.is_comp(m, 0);
        let rate: f64 = report.comp_rate[m] + (0..uavs).map(|f| report.noncomp_rate[m * uavs + f]).sum::<f64>();
        let floor = if comp { params.r_min_comp } else { params.r_min };
        if rate < floor {
            return false;
        }
    }
    // a stronger user must see the weaker user's signal at least as well
    let mu2 = params.responsivity.powi(2);
    let noise = params.bandwidth * params.noise_density;
    for f in 0..uavs {
        for m in 0..users {
            if !alloc.is_associated(m, f) || alloc.power(m, f) == 0.0 {
                continue;
            }
            let hm = link.gain(m, f);
            for d in 0..users {
                let hd = link.gain(d, f);
                if d == m || !alloc.is_associated(d, f) || hd * hd <= hm * hm {
                    continue;
                }
                let mut interference = 0.0;
                for i in 0..users {
                    let hi = link.gain(i, f);
                    let ahead = hi * hi > hm * hm || (hi * hi == hm * hm && i < m);
                    if i != m && ahead && alloc.is_associated(i, f) {
                        let w = if mode == InterferenceMode::Physical { hd } else { hi };
                        interference += alloc.power(i, f) * w * w;
                    }
                }
                let at_decoder = mu2 * alloc.power(m, f) * hd * hd / (interference + noise);
                if at_decoder < report.sinr[m * uavs + f] {
                    return false;
                }
            }
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub allocation: AllocationDecision,
    pub total_rate: f64,
    /// Allocations examined, infeasible ones included.
    pub candidates: usize,
}

pub const MAX_USERS: usize = 3;
pub const MAX_UAVS: usize = 2;
pub const MAX_LEVELS: usize = 11;

/// Exhaustive search over associations, CoMP flags and quantized powers.
/// Each link is off or on at one of `grid_levels` powers evenly spaced up to
/// the per-UAV budget. Returns `None` when nothing on the grid is feasible;
/// among equal totals the first in enumeration order wins.
pub fn brute_force_allocation(
    link: &LinkState,
    params: &RadioParams,
    grid_levels: usize,
    comp_enabled: bool,
    mode: InterferenceMode,
) -> Result<Option<BruteForceResult>, OracleError> {
    let (users, uavs) = (link.users(), link.uavs());
    if users > MAX_USERS || uavs > MAX_UAVS {
        return Err(OracleError::TooLarge(format!("{users} users x {uavs} UAVs")));
    }
    if grid_levels == 0 || grid_levels > MAX_LEVELS {
        return Err(OracleError::TooLarge(format!("{grid_levels} power levels")));
    }
    let links = users * uavs;
    let choices = grid_levels + 1;
    let power_of = |level: usize| params.p_uav_max * level as f64 / grid_levels as f64;

    let mut best: Option<BruteForceResult> = None;
    let mut candidates = 0;
    let mut digits = vec![0usize; links];
    loop {
        let mut alloc = AllocationDecision::empty(users, uavs);
        for m in 0..users {
            for f in 0..uavs {
                let level = digits[m * uavs + f];
                if level > 0 {
                    alloc.associate(m, f, power_of(level));
                }
            }
        }
        let mut allowed = true;
        for m in 0..users {
            let served = (0..uavs).filter(|&f| digits[m * uavs + f] > 0).count();
            if served >= 2 && !comp_enabled {
                allowed = false;
            }
            for f in 0..uavs {
                alloc.set_comp_flag(m, f, served >= 2 && comp_enabled);
            }
        }
        if allowed {
            candidates += 1;
            if reference_feasible(&alloc, link, params, mode) {
                let total = reference_rate(&alloc, link, params, mode).total;
                if best.as_ref().map_or(true, |b| total > b.total_rate) {
                    best = Some(BruteForceResult { allocation: alloc, total_rate: total, candidates: 0 });
                }
            }
        }

        let mut k = 0;
        loop {
            if k == links {
                if let Some(b) = best.as_mut() {
                    b.candidates = candidates;
                }
                return Ok(best);
            }
            digits[k] += 1;
            if digits[k] < choices {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_radio() -> RadioParams {
        RadioParams {
            responsivity: 1.0,
            noise_density: 0.5,
            bandwidth: 2.0,
            p_max: 36.0,
            p_uav_max: 12.0,
            r_min: 0.0,
            r_min_comp: 0.0,
            max_users_per_uav: 3,
        }
    }

    #[test]
    fn single_link_takes_full_budget() {
        let link = LinkState::from_gains(1, 1, vec![0.5]);
        let best = brute_force_allocation(&link, &unit_radio(), 11, true, InterferenceMode::Physical)
            .unwrap()
            .unwrap();
        assert_eq!(best.allocation.power(0, 0), 12.0);
        // log2(1 + 12·0.25) = 2
        assert_relative_eq!(best.total_rate, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn equal_gains_are_both_enumerated() {
        let link = LinkState::from_gains(2, 1, vec![0.5, 0.5]);
        let best = brute_force_allocation(&link, &unit_radio(), 4, true, InterferenceMode::Physical)
            .unwrap()
            .unwrap();
        // (off, on, 1, 2, 3, 4 levels)² minus nothing: every pattern fits J_K = 3
        assert_eq!(best.candidates, 25);
        assert!(best.total_rate > 0.0);
    }

    #[test]
    fn comp_disabled_never_double_serves() {
        let link = LinkState::from_gains(2, 2, vec![0.5, 0.4, 0.3, 0.6]);
        let off = brute_force_allocation(&link, &unit_radio(), 3, false, InterferenceMode::Physical)
            .unwrap()
            .unwrap();
        for m in 0..2 {
            assert!(off.allocation.user_links(m) <= 1);
        }
        let on = brute_force_allocation(&link, &unit_radio(), 3, true, InterferenceMode::Physical)
            .unwrap()
            .unwrap();
        assert!(on.candidates > off.candidates);
        assert!(on.total_rate >= off.total_rate);
    }

    #[test]
    fn oversized_instances_are_refused() {
        let link = LinkState::from_gains(4, 1, vec![0.1; 4]);
        assert!(brute_force_allocation(&link, &unit_radio(), 3, true, InterferenceMode::Physical).is_err());
        let link = LinkState::from_gains(1, 1, vec![0.1]);
        assert!(brute_force_allocation(&link, &unit_radio(), 12, true, InterferenceMode::Physical).is_err());
    }

    #[test]
    fn zero_power_zero_rate() {
        let link = LinkState::from_gains(2, 2, vec![0.5, 0.4, 0.3, 0.6]);
        let mut alloc = AllocationDecision::empty(2, 2);
        alloc.associate(0, 0, 0.0);
        let r = reference_rate(&alloc, &link, &unit_radio(), InterferenceMode::Physical);
        assert_eq!(r.total, 0.0);
        assert!(r.sinr.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn comp_with_equal_legs_doubles() {
        let link = LinkState::from_gains(1, 2, vec![0.5, 0.5]);
        let mut single = AllocationDecision::empty(1, 2);
        single.associate(0, 0, 12.0);
        let one = reference_rate(&single, &link, &unit_radio(), InterferenceMode::Physical).total;
        let mut both = single.clone();
        both.associate(0, 1, 12.0);
        both.derive_comp_flags(true);
        let two = reference_rate(&both, &link, &unit_radio(), InterferenceMode::Physical);
        assert_eq!(two.total, 2.0 * one);
        assert_eq!(two.comp_rate[0], two.total);
    }

    #[test]
    fn unreachable_minimum_rate_is_infeasible() {
        let link = LinkState::from_gains(1, 1, vec![0.5]);
        let radio = RadioParams { r_min: 100.0, ..unit_radio() };
        assert!(brute_force_allocation(&link, &radio, 5, true, InterferenceMode::Physical).unwrap().is_none());
    }
}
