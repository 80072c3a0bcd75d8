//! The multi-agent MDP: every UAV is an agent observing the full network
//! state, choosing associations, powers and (once per master slot) an
//! acceleration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{channel_gain, lambertian_order, LinkGeometry, OpticalParams};
use crate::error::{ConfigError, EnvError};
use crate::kinematics::{
    clip_acceleration, clip_speed, enforce_confinement, resample_user_velocity, step_uav, step_user,
    Cylinder, SlotClock, UavKinematicState, UserKinematicState, Vec3,
};
use crate::link::{
    check_feasibility, inter_interference, intra_interference, rates, AllocationDecision,
    FeasibilityReport, InterferenceMode, LinkState, RadioParams, RateReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticalConfig {
    pub pd_area_m2: f64,
    pub fov_deg: f64,
    pub half_power_angle_deg: f64,
    pub filter_gain: f64,
    pub refractive_index: f64,
    pub lambertian_order: f64,
    /// Recompute the Lambertian order from the half-power angle instead of
    /// using `lambertian_order`.
    pub derive_lambertian_order: bool,
}

impl OpticalConfig {
    pub fn resolve(&self) -> Result<OpticalParams, ConfigError> {
        let half_power_angle = self.half_power_angle_deg.to_radians();
        let order = if self.derive_lambertian_order {
            lambertian_order(half_power_angle)
                .map_err(|e| ConfigError::invalid("optical.half_power_angle_deg", e.to_string()))?
        } else {
            self.lambertian_order
        };
        let params = OpticalParams {
            pd_area: self.pd_area_m2,
            fov: self.fov_deg.to_radians(),
            half_power_angle,
            filter_gain: self.filter_gain,
            refractive_index: self.refractive_index,
            lambertian_order: order,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArenaConfig {
    pub x_mid: f64,
    pub y_mid: f64,
    pub radius_m: f64,
    pub z_max_m: f64,
    /// Lowest initial UAV altitude; also fixes the gain normalizer.
    pub min_start_altitude_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionConfig {
    pub uav_v_max: f64,
    pub uav_a_max: f64,
    pub user_v_max: f64,
    /// User velocities are redrawn every this many master slots.
    pub user_resample_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSwitches {
    pub comp_enabled: bool,
    pub constant_velocity_mode: bool,
    pub paper_literal_interference: bool,
}

/// Everything needed to build an [`Environment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub users: usize,
    pub uavs: usize,
    pub master_slots: usize,
    pub small_slots: usize,
    pub slot_duration_s: f64,
    /// Rate/power scalarization weight.
    pub alpha: f64,
    /// Reward penalty per user missing its minimum rate in a slot.
    pub rate_penalty: f64,
    /// Smallest power on an active link, W.
    pub power_floor_w: f64,
    pub radio: RadioParams,
    pub optical: OpticalConfig,
    pub arena: ArenaConfig,
    pub motion: MotionConfig,
    pub features: FeatureSwitches,
}

impl ScenarioConfig {
    /// Full-size scenario: 9 users, 3 UAVs, 500 x 100 slots of 1 ms.
    pub fn paper_default() -> Self {
        Self {
            users: 9,
            uavs: 3,
            master_slots: 500,
            small_slots: 100,
            slot_duration_s: 1e-3,
            alpha: 0.8,
            rate_penalty: 0.1,
            power_floor_w: 0.1,
            radio: RadioParams {
                responsivity: 0.53,
                noise_density: 1e-12,
                bandwidth: 20e6,
                p_max: 36.0,
                p_uav_max: 12.0,
                r_min: 100.0,
                r_min_comp: 100.0,
                max_users_per_uav: 3,
            },
            optical: OpticalConfig {
                pd_area_m2: 1e-4,
                fov_deg: 60.0,
                half_power_angle_deg: 30.0,
                filter_gain: 1.0,
                refractive_index: 1.5,
                lambertian_order: 1.0,
                derive_lambertian_order: false,
            },
            arena: ArenaConfig {
                x_mid: 25.0,
                y_mid: 25.0,
                radius_m: 50.0,
                z_max_m: 100.0,
                min_start_altitude_m: 20.0,
            },
            motion: MotionConfig {
                uav_v_max: 10.0 * 3f64.sqrt(),
                uav_a_max: 2.0 * 3f64.sqrt(),
                user_v_max: 5.0 * 2f64.sqrt(),
                user_resample_every: 1,
            },
            features: FeatureSwitches {
                comp_enabled: true,
                constant_velocity_mode: false,
                paper_literal_interference: false,
            },
        }
    }

    /// Two UAVs, four users, 20 × 10 slots of 10 ms (100 ms master slots).
    pub fn desk() -> Self {
        Self {
            users: 4,
            uavs: 2,
            master_slots: 20,
            small_slots: 10,
            slot_duration_s: 0.01,
            ..Self::paper_default()
        }
    }

    pub fn interference_mode(&self) -> InterferenceMode {
        if self.features.paper_literal_interference {
            InterferenceMode::PaperLiteral
        } else {
            InterferenceMode::Physical
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, value) in [
            ("users", self.users),
            ("uavs", self.uavs),
            ("master_slots", self.master_slots),
            ("small_slots", self.small_slots),
            ("motion.user_resample_every", self.motion.user_resample_every),
        ] {
            if value == 0 {
                return Err(ConfigError::invalid(field, "must be at least 1"));
            }
        }
        if !(self.slot_duration_s > 0.0 && self.slot_duration_s.is_finite()) {
            return Err(ConfigError::invalid("slot_duration_s", "must be positive and finite"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(ConfigError::invalid("alpha", "must lie in [0, 1]"));
        }
        if !(self.rate_penalty >= 0.0 && self.rate_penalty.is_finite()) {
            return Err(ConfigError::invalid("rate_penalty", "must be non-negative"));
        }
        self.radio.validate()?;
        if !(self.power_floor_w >= 0.0 && self.power_floor_w <= self.radio.p_uav_max) {
            return Err(ConfigError::invalid("power_floor_w", "must lie in [0, radio.p_uav_max_w]"));
        }
        self.optical.resolve()?;
        let a = &self.arena;
        if !(a.radius_m > 0.0 && a.radius_m.is_finite()) {
            return Err(ConfigError::invalid("arena.radius_m", "must be positive"));
        }
        if !(a.z_max_m > 0.0 && a.z_max_m.is_finite()) {
            return Err(ConfigError::invalid("arena.z_max_m", "must be positive"));
        }
        if !(a.min_start_altitude_m > 0.0 && a.min_start_altitude_m <= a.z_max_m) {
            return Err(ConfigError::invalid("arena.min_start_altitude_m", "must lie in (0, arena.z_max_m]"));
        }
        if !(a.x_mid.is_finite() && a.y_mid.is_finite()) {
            return Err(ConfigError::invalid("arena.x_mid", "must be finite"));
        }
        let m = &self.motion;
        for (field, value) in [
            ("motion.uav_v_max", m.uav_v_max),
            ("motion.uav_a_max", m.uav_a_max),
            ("motion.user_v_max", m.user_v_max),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ConfigError::invalid(field, "must be non-negative and finite"));
            }
        }
        Ok(())
    }
}

/// One agent's action after decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedAction {
    pub rho_row: Vec<bool>,
    pub power_row: Vec<f64>,
    /// The agent's own CoMP request; overridden by the network-wide
    /// consistency rule when actions are combined.
    pub nu_row: Vec<bool>,
    pub acceleration: Vec3,
}

/// Per-agent reward terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardPair {
    pub agent: f64,
    pub global: f64,
}

/// `α·rate − (1−α)·power − penalty`.
pub fn scalarize(alpha: f64, rate_term: f64, power_term: f64, penalty: f64) -> f64 {
    alpha * rate_term - (1.0 - alpha) * power_term - penalty
}

/// Rate normalizer `(B/2)·log₂(1 + p̃_max/(B σ²))`.
pub fn rate_normalizer(radio: &RadioParams) -> f64 {
    radio.bandwidth / 2.0 * (1.0 + radio.p_uav_max / radio.noise_power()).log2()
}

/// Reward of UAV `uav`: normalized carried rate against normalized power,
/// minus `penalty_per_violation` for every user below its minimum rate.
pub fn agent_reward(
    uav: usize,
    report: &RateReport,
    alloc: &AllocationDecision,
    radio: &RadioParams,
    alpha: f64,
    penalty_per_violation: f64,
    violations: usize,
) -> f64 {
    let rate_term = report.uav_rate(uav) / rate_normalizer(radio);
    let power_term = alloc.uav_power(uav) / radio.p_uav_max;
    scalarize(alpha, rate_term, power_term, penalty_per_violation * violations as f64)
}

/// Snapshot of one episode in progress. Owns its random stream so that an
/// episode is fully determined by its seed.
#[derive(Debug, Clone)]
pub struct World {
    pub clock: SlotClock,
    pub uavs: Vec<UavKinematicState>,
    pub users: Vec<UserKinematicState>,
    link: LinkState,
    prev_intra: Vec<f64>,
    prev_inter: Vec<f64>,
    prev_assoc: Option<Vec<bool>>,
    finished: bool,
    rng: ChaCha8Rng,
}

impl World {
    pub fn link(&self) -> &LinkState {
        &self.link
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Interference features carried over from the last completed slot.
    pub fn previous_interference(&self) -> (&[f64], &[f64]) {
        (&self.prev_intra, &self.prev_inter)
    }
}

/// Everything one `step` produced.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub global_reward: f64,
    pub allocation: AllocationDecision,
    pub rates: RateReport,
    pub feasibility: FeasibilityReport,
    pub handovers: usize,
    /// Set on the last small slot of the last master slot.
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct Environment {
    config: ScenarioConfig,
    optical: OpticalParams,
    cylinder: Cylinder,
    mode: InterferenceMode,
    gain_scale: f64,
    intra_scale: f64,
    inter_scale: f64,
}

impl Environment {
    pub fn new(config: ScenarioConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let optical = config.optical.resolve()?;
        let a = &config.arena;
        let cylinder = Cylinder { x_mid: a.x_mid, y_mid: a.y_mid, radius: a.radius_m, z_max: a.z_max_m };
        let nadir = LinkGeometry { distance: a.min_start_altitude_m, irradiance: 0.0, incidence: 0.0 };
        let gain_scale = channel_gain(&nadir, &optical);
        let intra_scale = config.radio.p_uav_max * gain_scale * gain_scale;
        let mu2 = config.radio.responsivity * config.radio.responsivity;
        Ok(Self {
            mode: config.interference_mode(),
            optical,
            cylinder,
            gain_scale,
            intra_scale,
            inter_scale: mu2 * intra_scale,
            config,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn optical(&self) -> &OpticalParams {
        &self.optical
    }

    pub fn agents(&self) -> usize {
        self.config.uavs
    }

    /// `M·F` gains, `6F` UAV kinematics, `2M` user positions, `2·M·F` interference terms.
    pub fn state_dim(&self) -> usize {
        let (m, f) = (self.config.users, self.config.uavs);
        m * f + 6 * f + 2 * m + 2 * m * f
    }

    /// Association logits, power levels and CoMP logits per user, then a 3-D acceleration.
    pub fn action_dim(&self) -> usize {
        3 * self.config.users + 3
    }

    /// Uniform placement in the cylinder (UAVs between the minimum start
    /// altitude and the ceiling), all velocities zero.
    pub fn reset(&self, seed: u64) -> Result<World, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = &self.config;
        let disc_point = |rng: &mut ChaCha8Rng| {
            let r = self.cylinder.radius * rng.gen::<f64>().sqrt();
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            (self.cylinder.x_mid + r * theta.cos(), self.cylinder.y_mid + r * theta.sin())
        };
        let uavs = (0..cfg.uavs)
            .map(|_| {
                let (x, y) = disc_point(&mut rng);
                let z = rng.gen_range(cfg.arena.min_start_altitude_m..=cfg.arena.z_max_m);
                UavKinematicState { position: Vec3::new(x, y, z), velocity: Vec3::ZERO, acceleration: Vec3::ZERO }
            })
            .collect::<Vec<_>>();
        let users = (0..cfg.users)
            .map(|_| {
                let (x, y) = disc_point(&mut rng);
                UserKinematicState { position: Vec3::new(x, y, 0.0), velocity: Vec3::ZERO }
            })
            .collect::<Vec<_>>();
        let link = self.link_for(&uavs, &users)?;
        let pairs = cfg.users * cfg.uavs;
        Ok(World {
            clock: SlotClock::new(cfg.master_slots, cfg.small_slots, cfg.slot_duration_s)?,
            uavs,
            users,
            link,
            prev_intra: vec![0.0; pairs],
            prev_inter: vec![0.0; pairs],
            prev_assoc: None,
            finished: false,
            rng,
        })
    }

    fn link_for(&self, uavs: &[UavKinematicState], users: &[UserKinematicState]) -> Result<LinkState, EnvError> {
        let q: Vec<Vec3> = uavs.iter().map(|u| u.position).collect();
        let w: Vec<Vec3> = users.iter().map(|u| u.position).collect();
        Ok(LinkState::from_positions(&q, &w, &self.optical)?)
    }

    /// Turns one agent's raw `[-1, 1]` vector into association, power, CoMP
    /// request and acceleration. Total: out-of-range entries are clamped.
    pub fn decode_action(&self, raw: &[f64]) -> DecodedAction {
        let m = self.config.users;
        let radio = &self.config.radio;
        let clamp = |x: f64| if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) };
        let logits: Vec<f64> = raw[..m].iter().map(|&x| clamp(x)).collect();

        let mut chosen: Vec<usize> = (0..m).filter(|&i| logits[i] > 0.0).collect();
        chosen.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
        chosen.truncate(radio.max_users_per_uav);

        let mut rho_row = vec![false; m];
        let mut power_row = vec![0.0; m];
        let floor = self.config.power_floor_w;
        for &i in &chosen {
            rho_row[i] = true;
            power_row[i] = floor + (clamp(raw[m + i]) + 1.0) / 2.0 * (radio.p_uav_max - floor);
        }
        rescale_to_budget(&mut power_row, radio.p_uav_max);

        let nu_row = (0..m).map(|i| clamp(raw[2 * m + i]) > 0.0).collect();
        let a_max = self.config.motion.uav_a_max;
        let a = &raw[3 * m..3 * m + 3];
        let acceleration = clip_acceleration(Vec3::new(clamp(a[0]), clamp(a[1]), clamp(a[2])) * a_max, a_max);
        DecodedAction { rho_row, power_row, nu_row, acceleration }
    }

    /// Merges per-agent decisions into one network allocation on `link`.
    /// Without CoMP a user claimed by several UAVs stays with the strongest
    /// channel (lowest index on ties). The network budget is enforced by a
    /// proportional rescale.
    pub fn combine(&self, decoded: &[DecodedAction], link: &LinkState) -> AllocationDecision {
        let (users, uavs) = (self.config.users, self.config.uavs);
        let mut alloc = AllocationDecision::empty(users, uavs);
        for (f, d) in decoded.iter().enumerate() {
            for m in 0..users {
                if d.rho_row[m] {
                    alloc.associate(m, f, d.power_row[m]);
                }
            }
        }
        if !self.config.features.comp_enabled {
            for m in 0..users {
                let serving: Vec<usize> = (0..uavs).filter(|&f| alloc.is_associated(m, f)).collect();
                if serving.len() < 2 {
                    continue;
                }
                let keep = serving
                    .iter()
                    .copied()
                    .max_by(|&a, &b| link.gain(m, a).total_cmp(&link.gain(m, b)).then(b.cmp(&a)))
                    .expect("non-empty");
                for f in serving.into_iter().filter(|&f| f != keep) {
                    alloc.dissociate(m, f);
                }
            }
        }
        alloc.derive_comp_flags(self.config.features.comp_enabled);
        let total = alloc.total_power();
        let p_max = self.config.radio.p_max;
        if total > p_max {
            let scale = p_max / total;
            for m in 0..users {
                for f in 0..uavs {
                    if alloc.is_associated(m, f) {
                        alloc.set_power(m, f, alloc.power(m, f) * scale);
                    }
                }
            }
        }
        alloc
    }

    /// Identical full-network observation for every agent.
    pub fn assemble_states(&self, world: &World) -> Vec<Vec<f64>> {
        let cfg = &self.config;
        let mut s = Vec::with_capacity(self.state_dim());
        s.extend(world.link.gains().iter().map(|h| h / self.gain_scale));
        let r = self.cylinder.radius;
        let v_max = cfg.motion.uav_v_max.max(f64::MIN_POSITIVE);
        for u in &world.uavs {
            s.push((u.position.x - self.cylinder.x_mid) / r);
            s.push((u.position.y - self.cylinder.y_mid) / r);
            s.push(u.position.z / self.cylinder.z_max);
            s.extend(u.velocity.to_array().iter().map(|v| v / v_max));
        }
        for u in &world.users {
            s.push((u.position.x - self.cylinder.x_mid) / r);
            s.push((u.position.y - self.cylinder.y_mid) / r);
        }
        s.extend(world.prev_intra.iter().map(|x| x / self.intra_scale));
        s.extend(world.prev_inter.iter().map(|x| x / self.inter_scale));
        vec![s; cfg.uavs]
    }

    /// Advances one small slot: decode, move, recompute links, score.
    pub fn step(&self, world: &mut World, actions: &[Vec<f64>]) -> Result<StepOutcome, EnvError> {
        let cfg = &self.config;
        if actions.len() != cfg.uavs {
            return Err(EnvError::DimensionMismatch { what: "agent actions", expected: cfg.uavs, got: actions.len() });
        }
        if let Some(bad) = actions.iter().find(|a| a.len() != self.action_dim()) {
            return Err(EnvError::DimensionMismatch { what: "action entries", expected: self.action_dim(), got: bad.len() });
        }
        assert!(!world.finished, "step called on a finished episode");
        let decoded: Vec<DecodedAction> = actions.iter().map(|a| self.decode_action(a)).collect();
        let delta = world.clock.delta();

        if world.clock.is_master_start() {
            for (uav, d) in world.uavs.iter_mut().zip(&decoded) {
                uav.acceleration = if cfg.features.constant_velocity_mode { Vec3::ZERO } else { d.acceleration };
            }
            if (world.clock.master() - 1) % cfg.motion.user_resample_every == 0 {
                for user in world.users.iter_mut() {
                    *user = resample_user_velocity(user, &mut world.rng, cfg.motion.user_v_max);
                }
            }
        }
        for uav in world.uavs.iter_mut() {
            let mut next = step_uav(uav, delta);
            if !cfg.features.constant_velocity_mode {
                next.velocity = clip_speed(next.velocity, cfg.motion.uav_v_max);
            }
            *uav = enforce_confinement(&next, &self.cylinder);
        }
        for user in world.users.iter_mut() {
            *user = enforce_confinement(&step_user(user, delta), &self.cylinder);
        }
        world.link = self.link_for(&world.uavs, &world.users)?;

        let alloc = self.combine(&decoded, &world.link);
        let report = rates(&alloc, &world.link, &cfg.radio, self.mode).expect("shapes agree");
        let feasibility =
            check_feasibility(&alloc, &world.link, &cfg.radio, &report, self.mode).expect("shapes agree");
        let violations = feasibility.min_rate_violations();
        let rewards = (0..cfg.uavs)
            .map(|f| agent_reward(f, &report, &alloc, &cfg.radio, cfg.alpha, cfg.rate_penalty, violations))
            .collect();

        let mut global = 0.0;
        for m in 0..cfg.users {
            for f in 0..cfg.uavs {
                let i = m * cfg.uavs + f;
                let intra = intra_interference(m, f, &alloc, &world.link, self.mode);
                let inter = inter_interference(m, f, &alloc, &world.link, &cfg.radio);
                world.prev_intra[i] = intra;
                world.prev_inter[i] = inter;
                if alloc.is_associated(m, f) {
                    global -= intra / self.intra_scale + inter / self.inter_scale;
                }
            }
        }

        let assoc = alloc.association_bits().to_vec();
        let handovers = match &world.prev_assoc {
            Some(prev) => (0..cfg.users)
                .filter(|&m| (0..cfg.uavs).any(|f| prev[m * cfg.uavs + f] != assoc[m * cfg.uavs + f]))
                .count(),
            None => 0,
        };
        world.prev_assoc = Some(assoc);

        let terminal = !world.clock.advance();
        world.finished = terminal;
        Ok(StepOutcome {
            rewards,
            global_reward: global,
            allocation: alloc,
            rates: report,
            feasibility,
            handovers,
            terminal,
        })
    }
}

fn rescale_to_budget(powers: &mut [f64], budget: f64) {
    let sum: f64 = powers.iter().sum();
    if sum > budget {
        let scale = budget / sum;
        powers.iter_mut().for_each(|p| *p *= scale);
    }
}

/// Column rescale used by the action decoder, exposed for direct checks.
pub fn rescale_powers(powers: &[f64], budget: f64) -> Vec<f64> {
    let mut out = powers.to_vec();
    rescale_to_budget(&mut out, budget);
    out
}

/// One replay record in environment terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub global_reward: f64,
    pub next_states: Vec<Vec<f64>>,
    pub terminal: bool,
}

/// Per-episode aggregates; rewards, rate and power are per-slot means.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub mean_reward_per_agent: f64,
    pub global_reward: f64,
    pub total_rate_bps: f64,
    pub total_power_w: f64,
    pub min_rate_violations: usize,
    pub handover_count: usize,
}

/// Anything that can drive the agents through an episode. The hooks let a
/// learner store experience and train between master slots.
pub trait Policy {
    fn agents(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn act(&mut self, states: &[Vec<f64>]) -> Vec<Vec<f64>>;
    fn observe(&mut self, _transition: &Transition) {}
    fn end_master_slot(&mut self, _master: usize) {}
}

#[derive(Debug, Clone)]
pub struct EpisodeTrace {
    pub transitions: Vec<Transition>,
    pub metrics: EpisodeMetrics,
}

/// Runs all `T·N` slots of one episode with the world seeded by `seed`.
pub fn run_episode<P: Policy + ?Sized>(
    env: &Environment,
    policy: &mut P,
    episode: usize,
    seed: u64,
    keep_transitions: bool,
) -> Result<EpisodeTrace, EnvError> {
    for (what, expected, got) in [
        ("agents", env.agents(), policy.agents()),
        ("state entries", env.state_dim(), policy.state_dim()),
        ("action entries", env.action_dim(), policy.action_dim()),
    ] {
        if expected != got {
            return Err(EnvError::DimensionMismatch { what, expected, got });
        }
    }
    let mut world = env.reset(seed)?;
    let mut transitions = Vec::new();
    let mut steps = 0usize;
    let (mut reward, mut global, mut rate, mut power) = (0.0, 0.0, 0.0, 0.0);
    let (mut violations, mut handovers) = (0usize, 0usize);
    let mut states = env.assemble_states(&world);
    loop {
        let master = world.clock.master();
        let master_end = world.clock.small() == world.clock.smalls();
        let actions = policy.act(&states);
        let out = env.step(&mut world, &actions)?;
        let next_states = env.assemble_states(&world);
        steps += 1;
        reward += out.rewards.iter().sum::<f64>() / out.rewards.len() as f64;
        global += out.global_reward;
        rate += out.rates.total;
        power += out.allocation.total_power();
        violations += out.feasibility.min_rate_violations();
        handovers += out.handovers;
        let transition = Transition {
            states,
            actions,
            rewards: out.rewards,
            global_reward: out.global_reward,
            next_states: next_states.clone(),
            terminal: out.terminal,
        };
        policy.observe(&transition);
        if keep_transitions {
            transitions.push(transition);
        }
        if master_end {
            policy.end_master_slot(master);
        }
        if out.terminal {
            break;
        }
        states = next_states;
    }
    let n = steps as f64;
    Ok(EpisodeTrace {
        transitions,
        metrics: EpisodeMetrics {
            episode,
            mean_reward_per_agent: reward / n,
            global_reward: global / n,
            total_rate_bps: rate / n,
            total_power_w: power / n,
            min_rate_violations: violations,
            handover_count: handovers,
        },
    })
}

/// Uniform raw actions in `[-1, 1]`; the reference point for learning checks.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    agents: usize,
    state_dim: usize,
    action_dim: usize,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(env: &Environment, seed: u64) -> Self {
        Self {
            agents: env.agents(),
            state_dim: env.state_dim(),
            action_dim: env.action_dim(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn agents(&self) -> usize {
        self.agents
    }
    fn state_dim(&self) -> usize {
        self.state_dim
    }
    fn action_dim(&self) -> usize {
        self.action_dim
    }
    fn act(&mut self, _states: &[Vec<f64>]) -> Vec<Vec<f64>> {
        (0..self.agents)
            .map(|_| (0..self.action_dim).map(|_| self.rng.gen_range(-1.0..=1.0)).collect())
            .collect()
    }
}

/// Replays a fixed action for every agent at every slot.
#[derive(Debug, Clone)]
pub struct ConstantPolicy {
    pub actions: Vec<Vec<f64>>,
    pub state_dim: usize,
}

impl Policy for ConstantPolicy {
    fn agents(&self) -> usize {
        self.actions.len()
    }
    fn state_dim(&self) -> usize {
        self.state_dim
    }
    fn action_dim(&self) -> usize {
        self.actions.first().map_or(0, Vec::len)
    }
    fn act(&mut self, _states: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.actions.clone()
    }
}
