//! PD-NOMA link layer: SIC ordering, intra-/inter-cell interference,
//! CoMP and non-CoMP rates, and the communication constraints of the
//! joint allocation problem.

use serde::{Deserialize, Serialize};

use crate::channel::{channel_gain, geometry_from_positions, LinkGeometry, OpticalParams};
use crate::error::{ChannelError, ConfigError, LinkError};
use crate::kinematics::Vec3;

/// Which channel weights the NOMA interferers in the SINR denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterferenceMode {
    /// Interferers reach the receiver through the receiver's own channel.
    #[default]
    Physical,
    /// Interferers weighted by their own channel, as the interference sum is
    /// literally written.
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    /// PD responsivity μ, A/W.
    pub responsivity: f64,
    /// Noise density σ², per Hz.
    pub noise_density: f64,
    /// Per-link bandwidth B, Hz.
    #[serde(rename = "bandwidth_hz")]
    pub bandwidth: f64,
    /// Network-wide power budget, W.
    #[serde(rename = "p_max_w")]
    pub p_max: f64,
    /// Per-UAV power budget, W.
    #[serde(rename = "p_uav_max_w")]
    pub p_uav_max: f64,
    /// Minimum non-CoMP user rate, bit/s.
    #[serde(rename = "r_min_bps")]
    pub r_min: f64,
    /// Minimum CoMP user rate, bit/s.
    #[serde(rename = "r_min_comp_bps")]
    pub r_min_comp: f64,
    /// Maximum users served by one UAV (J_K).
    pub max_users_per_uav: usize,
}

impl RadioParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("radio.responsivity", self.responsivity),
            ("radio.noise_density", self.noise_density),
            ("radio.bandwidth_hz", self.bandwidth),
            ("radio.p_max_w", self.p_max),
            ("radio.p_uav_max_w", self.p_uav_max),
        ];
        for (field, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::invalid(field, "must be positive and finite"));
            }
        }
        for (field, value) in [("radio.r_min_bps", self.r_min), ("radio.r_min_comp_bps", self.r_min_comp)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ConfigError::invalid(field, "must be non-negative and finite"));
            }
        }
        if self.max_users_per_uav == 0 {
            return Err(ConfigError::invalid("radio.max_users_per_uav", "must be at least 1"));
        }
        if self.p_uav_max > self.p_max {
            return Err(ConfigError::invalid("radio.p_uav_max_w", "must not exceed radio.p_max_w"));
        }
        Ok(())
    }

    /// `B·σ²`, the noise term of every SINR.
    pub fn noise_power(&self) -> f64 {
        self.bandwidth * self.noise_density
    }
}

/// Channel snapshot for one small slot, row-major `users × uavs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkState {
    users: usize,
    uavs: usize,
    gain: Vec<f64>,
    geometry: Option<Vec<LinkGeometry>>,
}

impl LinkState {
    pub fn from_positions(uavs: &[Vec3], users: &[Vec3], optical: &OpticalParams) -> Result<Self, ChannelError> {
        let mut gain = Vec::with_capacity(users.len() * uavs.len());
        let mut geometry = Vec::with_capacity(users.len() * uavs.len());
        for user in users {
            for uav in uavs {
                let g = geometry_from_positions(*uav, *user)?;
                gain.push(channel_gain(&g, optical));
                geometry.push(g);
            }
        }
        Ok(Self { users: users.len(), uavs: uavs.len(), gain, geometry: Some(geometry) })
    }

    /// Synthetic channel with no geometry behind it.
    pub fn from_gains(users: usize, uavs: usize, gain: Vec<f64>) -> Self {
        assert_eq!(gain.len(), users * uavs, "gain matrix must be users x uavs");
        Self { users, uavs, gain, geometry: None }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn uavs(&self) -> usize {
        self.uavs
    }

    pub fn gain(&self, user: usize, uav: usize) -> f64 {
        self.gain[user * self.uavs + uav]
    }

    pub fn gains(&self) -> &[f64] {
        &self.gain
    }

    pub fn geometry(&self, user: usize, uav: usize) -> Option<&LinkGeometry> {
        self.geometry.as_ref().map(|g| &g[user * self.uavs + uav])
    }

    /// Gains of every user toward one UAV.
    pub fn uav_column(&self, uav: usize) -> Vec<f64> {
        (0..self.users).map(|m| self.gain(m, uav)).collect()
    }
}

/// Association `ρ`, CoMP flags `ν` and powers `p`, all row-major `users × uavs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationDecision {
    users: usize,
    uavs: usize,
    rho: Vec<bool>,
    nu: Vec<bool>,
    power: Vec<f64>,
}

impl AllocationDecision {
    pub fn empty(users: usize, uavs: usize) -> Self {
        Self {
            users,
            uavs,
            rho: vec![false; users * uavs],
            nu: vec![false; users * uavs],
            power: vec![0.0; users * uavs],
        }
    }

    fn idx(&self, user: usize, uav: usize) -> usize {
        debug_assert!(user < self.users && uav < self.uavs);
        user * self.uavs + uav
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn uavs(&self) -> usize {
        self.uavs
    }

    /// Associates `user` with `uav` at `power` watts.
    pub fn associate(&mut self, user: usize, uav: usize, power: f64) {
        let i = self.idx(user, uav);
        self.rho[i] = true;
        self.power[i] = power;
    }

    pub fn dissociate(&mut self, user: usize, uav: usize) {
        let i = self.idx(user, uav);
        self.rho[i] = false;
        self.power[i] = 0.0;
        self.nu[i] = false;
    }

    pub fn set_power(&mut self, user: usize, uav: usize, power: f64) {
        let i = self.idx(user, uav);
        self.power[i] = power;
    }

    pub fn is_associated(&self, user: usize, uav: usize) -> bool {
        self.rho[self.idx(user, uav)]
    }

    pub fn is_comp(&self, user: usize, uav: usize) -> bool {
        self.nu[self.idx(user, uav)]
    }

    pub fn set_comp_flag(&mut self, user: usize, uav: usize, flag: bool) {
        let i = self.idx(user, uav);
        self.nu[i] = flag;
    }

    pub fn power(&self, user: usize, uav: usize) -> f64 {
        self.power[self.idx(user, uav)]
    }

    /// `ρ·p` for one link.
    pub fn effective_power(&self, user: usize, uav: usize) -> f64 {
        let i = self.idx(user, uav);
        if self.rho[i] {
            self.power[i]
        } else {
            0.0
        }
    }

    pub fn user_links(&self, user: usize) -> usize {
        (0..self.uavs).filter(|&f| self.is_associated(user, f)).count()
    }

    pub fn uav_load(&self, uav: usize) -> usize {
        (0..self.users).filter(|&m| self.is_associated(m, uav)).count()
    }

    pub fn uav_power(&self, uav: usize) -> f64 {
        (0..self.users).map(|m| self.effective_power(m, uav)).sum()
    }

    pub fn total_power(&self) -> f64 {
        (0..self.uavs).map(|f| self.uav_power(f)).sum()
    }

    pub fn association_bits(&self) -> &[bool] {
        &self.rho
    }

    /// Applies the CoMP consistency rule: `ν[m][f] = 1` iff user `m` has at
    /// least two associated UAVs. With CoMP disabled every flag is cleared.
    pub fn derive_comp_flags(&mut self, comp_enabled: bool) {
        for m in 0..self.users {
            let comp = comp_enabled && self.user_links(m) >= 2;
            for f in 0..self.uavs {
                let i = self.idx(m, f);
                self.nu[i] = comp;
            }
        }
    }

    /// Structural validity: finite non-negative powers, power only on
    /// associated links, and consistent CoMP flags. Budget and load limits
    /// are constraints, reported by [`check_feasibility`].
    pub fn validate(&self) -> Result<(), LinkError> {
        for m in 0..self.users {
            let comp = self.user_links(m) >= 2;
            for f in 0..self.uavs {
                let i = self.idx(m, f);
                let p = self.power[i];
                if !(p >= 0.0 && p.is_finite()) {
                    return Err(LinkError::Allocation(format!("power[{m}][{f}] = {p}")));
                }
                if p > 0.0 && !self.rho[i] {
                    return Err(LinkError::Allocation(format!("power on unassociated link ({m}, {f})")));
                }
                if self.nu[i] && !comp {
                    return Err(LinkError::Allocation(format!("user {m} flagged CoMP with < 2 links")));
                }
            }
            let flags: Vec<bool> = (0..self.uavs).map(|f| self.nu[self.idx(m, f)]).collect();
            if flags.iter().any(|&x| x != flags[0]) {
                return Err(LinkError::Allocation(format!("user {m} has mixed CoMP flags")));
            }
        }
        Ok(())
    }

    fn check_shape(&self, link: &LinkState) -> Result<(), LinkError> {
        if (self.users, self.uavs) != (link.users, link.uavs) {
            return Err(LinkError::Shape {
                expected: (link.users, link.uavs),
                got: (self.users, self.uavs),
            });
        }
        Ok(())
    }
}

/// Decoding order under one UAV: descending `|h|²/σ²`, ties by ascending index.
pub fn sic_order(gains: &[f64], noise: &[f64]) -> Vec<usize> {
    assert_eq!(gains.len(), noise.len());
    let key = |i: usize| gains[i] * gains[i] / noise[i];
    let mut order: Vec<usize> = (0..gains.len()).collect();
    order.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    order
}

/// Users decoded before `user` under `uav` (the set U^m). Noise is the same
/// constant for every user, so the gain alone decides the order.
pub fn stronger_users(user: usize, uav: usize, link: &LinkState) -> Vec<usize> {
    let h = link.gain(user, uav);
    (0..link.users())
        .filter(|&i| {
            let g = link.gain(i, uav);
            i != user && (g * g > h * h || (g * g == h * h && i < user))
        })
        .collect()
}

fn interference_from(
    interferers: &[usize],
    receiver_gain: f64,
    uav: usize,
    alloc: &AllocationDecision,
    link: &LinkState,
    mode: InterferenceMode,
) -> f64 {
    interferers
        .iter()
        .map(|&i| {
            let h = match mode {
                InterferenceMode::Physical => receiver_gain,
                InterferenceMode::PaperLiteral => link.gain(i, uav),
            };
            alloc.effective_power(i, uav) * h * h
        })
        .sum()
}

/// NOMA interference left after SIC for `user` served by `uav`.
pub fn intra_interference(
    user: usize,
    uav: usize,
    alloc: &AllocationDecision,
    link: &LinkState,
    mode: InterferenceMode,
) -> f64 {
    let stronger = stronger_users(user, uav, link);
    interference_from(&stronger, link.gain(user, uav), uav, alloc, link, mode)
}

/// Interference from every other UAV's total transmit power, as seen by
/// `user`. Enters the agent state and the global reward only, never an SINR.
pub fn inter_interference(
    user: usize,
    uav: usize,
    alloc: &AllocationDecision,
    link: &LinkState,
    params: &RadioParams,
) -> f64 {
    let mu2 = params.responsivity * params.responsivity;
    (0..link.uavs())
        .filter(|&g| g != uav)
        .map(|g| {
            let h = link.gain(user, g);
            mu2 * alloc.uav_power(g) * h * h
        })
        .sum()
}

pub fn sinr(
    user: usize,
    uav: usize,
    alloc: &AllocationDecision,
    link: &LinkState,
    params: &RadioParams,
    mode: InterferenceMode,
) -> f64 {
    let p = alloc.effective_power(user, uav);
    if !alloc.is_associated(user, uav) || p == 0.0 {
        return 0.0;
    }
    let h = link.gain(user, uav);
    let mu2 = params.responsivity * params.responsivity;
    mu2 * p * h * h / (intra_interference(user, uav, alloc, link, mode) + params.noise_power())
}

/// SINR of `user`'s signal when decoded at the stronger user `decoder`:
/// same residual interferer set, decoder's channel.
pub fn sinr_at_decoder(
    user: usize,
    decoder: usize,
    uav: usize,
    alloc: &AllocationDecision,
    link: &LinkState,
    params: &RadioParams,
    mode: InterferenceMode,
) -> Result<f64, LinkError> {
    if decoder == user {
        return Ok(sinr(user, uav, alloc, link, params, mode));
    }
    let (h_user, h_dec) = (link.gain(user, uav), link.gain(decoder, uav));
    if !(h_dec * h_dec > h_user * h_user) {
        return Err(LinkError::DecoderNotStronger { user, decoder, uav });
    }
    let p = alloc.effective_power(user, uav);
    if !alloc.is_associated(user, uav) || p == 0.0 {
        return Ok(0.0);
    }
    let stronger = stronger_users(user, uav, link);
    let interference = interference_from(&stronger, h_dec, uav, alloc, link, mode);
    let mu2 = params.responsivity * params.responsivity;
    Ok(mu2 * p * h_dec * h_dec / (interference + params.noise_power()))
}

/// Per-slot rates. Matrices are row-major `users × uavs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub users: usize,
    pub uavs: usize,
    pub sinr: Vec<f64>,
    /// CoMP rate per user (sum over its legs).
    pub comp_rate: Vec<f64>,
    /// Each UAV's contribution to a CoMP user's rate.
    pub comp_leg_rate: Vec<f64>,
    pub noncomp_rate: Vec<f64>,
    pub total: f64,
}

impl RateReport {
    /// Rates carried by one UAV, CoMP legs included.
    pub fn uav_rate(&self, uav: usize) -> f64 {
        (0..self.users)
            .map(|m| self.comp_leg_rate[m * self.uavs + uav] + self.noncomp_rate[m * self.uavs + uav])
            .sum()
    }

    pub fn user_rate(&self, user: usize) -> f64 {
        self.comp_rate[user] + (0..self.uavs).map(|f| self.noncomp_rate[user * self.uavs + f]).sum::<f64>()
    }

    /// Σ_m (CoMP_m + Σ_f nonCoMP_{m,f}), summed in the same order as `total`.
    pub fn recomposed_total(&self) -> f64 {
        (0..self.users).map(|m| self.user_rate(m)).sum()
    }

    /// Master-slot rates: per-field means over the small-slot reports.
    pub fn mean(reports: &[RateReport]) -> Option<RateReport> {
        let first = reports.first()?;
        let n = reports.len() as f64;
        let avg = |get: fn(&RateReport) -> &Vec<f64>| -> Vec<f64> {
            let mut acc = vec![0.0; get(first).len()];
            for r in reports {
                for (a, v) in acc.iter_mut().zip(get(r)) {
                    *a += v;
                }
            }
            acc.into_iter().map(|a| a / n).collect()
        };
        let mut out = RateReport {
            users: first.users,
            uavs: first.uavs,
            sinr: avg(|r| &r.sinr),
            comp_rate: avg(|r| &r.comp_rate),
            comp_leg_rate: avg(|r| &r.comp_leg_rate),
            noncomp_rate: avg(|r| &r.noncomp_rate),
            total: 0.0,
        };
        out.total = out.recomposed_total();
        Some(out)
    }
}

/// Rates of every user for one small slot.
pub fn rates(
    alloc: &AllocationDecision,
    link: &LinkState,
    params: &RadioParams,
    mode: InterferenceMode,
) -> Result<RateReport, LinkError> {
    alloc.check_shape(link)?;
    let (users, uavs) = (link.users(), link.uavs());
    let half_band = params.bandwidth / 2.0;
    let mut report = RateReport {
        users,
        uavs,
        sinr: vec![0.0; users * uavs],
        comp_rate: vec![0.0; users],
        comp_leg_rate: vec![0.0; users * uavs],
        noncomp_rate: vec![0.0; users * uavs],
        total: 0.0,
    };
    for m in 0..users {
        for f in 0..uavs {
            let i = m * uavs + f;
            let gamma = sinr(m, f, alloc, link, params, mode);
            report.sinr[i] = gamma;
            let leg = half_band * gamma.ln_1p() / std::f64::consts::LN_2;
            if alloc.is_comp(m, f) {
                report.comp_leg_rate[i] = leg;
            } else {
                report.noncomp_rate[i] = leg;
            }
        }
        report.comp_rate[m] = (0..uavs).map(|f| report.comp_leg_rate[m * uavs + f]).sum();
    }
    report.total = report.recomposed_total();
    Ok(report)
}

/// One NOMA decodability check: `user`'s signal at the stronger `decoder` under `uav`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NomaCheck {
    pub uav: usize,
    pub user: usize,
    pub decoder: usize,
    pub holds: bool,
}

/// Per-constraint flags for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Network power budget.
    pub total_power_ok: bool,
    /// Per-UAV power budget, one flag per UAV.
    pub uav_power_ok: Vec<bool>,
    /// Minimum rate, one flag per user: CoMP users against the CoMP minimum,
    /// everyone else (unserved users included) against the non-CoMP minimum.
    pub min_rate_ok: Vec<bool>,
    /// Users-per-UAV limit, one flag per UAV.
    pub uav_load_ok: Vec<bool>,
    pub noma: Vec<NomaCheck>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.total_power_ok
            && self.uav_power_ok.iter().all(|&x| x)
            && self.min_rate_ok.iter().all(|&x| x)
            && self.uav_load_ok.iter().all(|&x| x)
            && self.noma.iter().all(|c| c.holds)
    }

    pub fn min_rate_violations(&self) -> usize {
        self.min_rate_ok.iter().filter(|&&x| !x).count()
    }

    pub fn noma_violations(&self) -> usize {
        self.noma.iter().filter(|c| !c.holds).count()
    }
}

// power sums after rescaling may sit an ulp above the budget
const BUDGET_SLACK: f64 = 1e-12;

fn within_budget(value: f64, budget: f64) -> bool {
    value >= 0.0 && value <= budget * (1.0 + BUDGET_SLACK)
}

pub fn check_feasibility(
    alloc: &AllocationDecision,
    link: &LinkState,
    params: &RadioParams,
    report: &RateReport,
    mode: InterferenceMode,
) -> Result<FeasibilityReport, LinkError> {
    alloc.check_shape(link)?;
    let (users, uavs) = (link.users(), link.uavs());
    let min_rate_ok = (0..users)
        .map(|m| {
            if alloc.is_comp(m, 0) {
                report.comp_rate[m] >= params.r_min_comp
            } else {
                report.user_rate(m) >= params.r_min
            }
        })
        .collect();
    let mut noma = Vec::new();
    for f in 0..uavs {
        let served: Vec<usize> = (0..users).filter(|&m| alloc.is_associated(m, f)).collect();
        for &m in &served {
            let own = sinr(m, f, alloc, link, params, mode);
            for &i in &served {
                let (hi, hm) = (link.gain(i, f), link.gain(m, f));
                if i == m || !(hi * hi > hm * hm) {
                    continue;
                }
                let at_decoder = sinr_at_decoder(m, i, f, alloc, link, params, mode)?;
                noma.push(NomaCheck { uav: f, user: m, decoder: i, holds: at_decoder >= own });
            }
        }
    }
    Ok(FeasibilityReport {
        total_power_ok: within_budget(alloc.total_power(), params.p_max),
        uav_power_ok: (0..uavs).map(|f| within_budget(alloc.uav_power(f), params.p_uav_max)).collect(),
        min_rate_ok,
        uav_load_ok: (0..uavs).map(|f| alloc.uav_load(f) <= params.max_users_per_uav).collect(),
        noma,
    })
}
