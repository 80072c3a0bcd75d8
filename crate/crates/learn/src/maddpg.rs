//! Multi-agent deterministic policy gradient with per-agent critics and a
//! shared pair of global critics (clipped double-Q, delayed agent updates),
//! plus the single-learner and fully decentralized baselines.

use std::collections::VecDeque;
use std::io::{Read, Write};

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use skyvlc_core::env::{run_episode, EpisodeMetrics, Policy, RandomPolicy, Transition};
use skyvlc_core::Environment;

use crate::error::{NeuralError, TrainError, UnderfullBuffer};
use crate::neural::{soft_update, Activation, Adam, Mlp};

/// One replay record. States and actions are the per-agent vectors
/// concatenated in agent order.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub global_reward: f64,
    pub next_states: Vec<f64>,
    pub terminal: bool,
}

impl Experience {
    pub fn from_transition(t: &Transition) -> Self {
        Self {
            states: t.states.concat(),
            actions: t.actions.concat(),
            rewards: t.rewards.clone(),
            global_reward: t.global_reward,
            next_states: t.next_states.concat(),
            terminal: t.terminal,
        }
    }
}

/// FIFO ring with uniform sampling without replacement inside a minibatch.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Experience>,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, rng: ChaCha8Rng) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: VecDeque::with_capacity(capacity.min(1 << 16)), rng }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, e: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(e);
    }

    /// Record `i`, oldest first.
    pub fn get(&self, i: usize) -> Option<&Experience> {
        self.items.get(i)
    }

    pub fn sample_indices(&mut self, size: usize) -> Result<Vec<usize>, UnderfullBuffer> {
        if size > self.items.len() {
            return Err(UnderfullBuffer { have: self.items.len(), need: size });
        }
        Ok(index::sample(&mut self.rng, self.items.len(), size).into_vec())
    }

    pub fn sample(&mut self, size: usize) -> Result<Vec<&Experience>, UnderfullBuffer> {
        let idx = self.sample_indices(size)?;
        Ok(idx.into_iter().map(|i| &self.items[i]).collect())
    }
}

/// Minibatch laid out as matrices, one row per record.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array2<f64>,
    pub global_rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub terminal: Array1<f64>,
}

impl Batch {
    pub fn from_records(records: &[&Experience]) -> Self {
        let rows = records.len();
        let stack = |get: &dyn Fn(&Experience) -> &[f64]| {
            let width = records.first().map_or(0, |r| get(r).len());
            Array2::from_shape_fn((rows, width), |(i, j)| get(records[i])[j])
        };
        Self {
            states: stack(&|e| &e.states),
            actions: stack(&|e| &e.actions),
            rewards: stack(&|e| &e.rewards),
            global_rewards: records.iter().map(|e| e.global_reward).collect(),
            next_states: stack(&|e| &e.next_states),
            terminal: records.iter().map(|e| if e.terminal { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainerKind {
    /// Per-agent actors and critics plus the shared twin global critics.
    Maddpg,
    /// Per-agent actors and critics only.
    Decentralized,
    /// One learner emitting the joint action from the full state.
    Ddpg,
}

impl TrainerKind {
    fn code(self) -> u8 {
        match self {
            TrainerKind::Maddpg => 0,
            TrainerKind::Decentralized => 1,
            TrainerKind::Ddpg => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    pub episodes: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub global_critic_hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Agent networks train only in episodes divisible by this.
    pub policy_delay: usize,
    pub noise_start: f64,
    pub noise_end: f64,
    /// Gradient rounds run at the end of every master slot.
    pub updates_per_master_slot: usize,
}

impl TrainerConfig {
    /// Full-size networks and optimizer settings.
    pub fn paper_default() -> Self {
        Self {
            episodes: 500,
            actor_hidden: vec![1024, 512],
            critic_hidden: vec![512, 256],
            global_critic_hidden: vec![1024, 512, 256],
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            gamma: 0.99,
            tau: 0.0005,
            batch_size: 64,
            buffer_capacity: 50_000,
            policy_delay: 2,
            noise_start: 0.3,
            noise_end: 0.02,
            updates_per_master_slot: 1,
        }
    }

    /// Networks shrunk eightfold, 200 episodes.
    pub fn desk() -> Self {
        Self {
            episodes: 200,
            actor_hidden: vec![128, 64],
            critic_hidden: vec![64, 32],
            global_critic_hidden: vec![128, 64, 32],
            tau: 0.005,
            ..Self::paper_default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |field: &'static str, message: &str| -> Result<(), TrainError> {
            Err(TrainError::Config { field, message: message.into() })
        };
        if !(self.actor_lr > 0.0 && self.actor_lr.is_finite()) {
            return bad("actor_lr", "must be positive");
        }
        if !(self.critic_lr > 0.0 && self.critic_lr.is_finite()) {
            return bad("critic_lr", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma", "must lie in [0, 1]");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau", "must lie in (0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if self.buffer_capacity < self.batch_size {
            return bad("buffer_capacity", "must hold at least one minibatch");
        }
        if self.policy_delay == 0 {
            return bad("policy_delay", "must be at least 1");
        }
        if !(self.noise_start >= 0.0 && self.noise_end >= 0.0) {
            return bad("noise_start", "noise levels must be non-negative");
        }
        for (field, sizes) in [
            ("actor_hidden", &self.actor_hidden),
            ("critic_hidden", &self.critic_hidden),
            ("global_critic_hidden", &self.global_critic_hidden),
        ] {
            if sizes.iter().any(|&s| s == 0) {
                return bad(field, "hidden widths must be positive");
            }
        }
        Ok(())
    }

    /// Exploration σ for a 1-based episode: linear decay over the first
    /// half of training, flat afterwards.
    pub fn noise_sigma(&self, episode: usize) -> f64 {
        let half = (self.episodes as f64 / 2.0).max(1.0);
        let frac = ((episode.max(1) - 1) as f64 / half).min(1.0);
        self.noise_start + (self.noise_end - self.noise_start) * frac
    }
}

/// Actor and critic with their target copies and optimizers.
#[derive(Debug, Clone)]
pub struct AgentBundle {
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critic: Mlp,
    pub critic_target: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes
}

impl AgentBundle {
    pub fn new(state_dim: usize, action_dim: usize, cfg: &TrainerConfig, rng: &mut ChaCha8Rng) -> Self {
        let actor = Mlp::new(&layer_sizes(state_dim, &cfg.actor_hidden, action_dim), Activation::Relu, Activation::Tanh, rng);
        let critic = Mlp::new(
            &layer_sizes(state_dim + action_dim, &cfg.critic_hidden, 1),
            Activation::Relu,
            Activation::Identity,
            rng,
        );
        Self {
            actor_opt: Adam::new(&actor, cfg.actor_lr),
            critic_opt: Adam::new(&critic, cfg.critic_lr),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
        }
    }
}

/// Two global critics over the joint state and action, with targets.
#[derive(Debug, Clone)]
pub struct GlobalCriticPair {
    pub critics: [Mlp; 2],
    pub targets: [Mlp; 2],
    opts: [Adam; 2],
}

impl GlobalCriticPair {
    pub fn new(input_dim: usize, cfg: &TrainerConfig, rng: &mut ChaCha8Rng) -> Self {
        let sizes = layer_sizes(input_dim, &cfg.global_critic_hidden, 1);
        let a = Mlp::new(&sizes, Activation::Relu, Activation::Identity, rng);
        let b = Mlp::new(&sizes, Activation::Relu, Activation::Identity, rng);
        Self {
            opts: [Adam::new(&a, cfg.critic_lr), Adam::new(&b, cfg.critic_lr)],
            targets: [a.clone(), b.clone()],
            critics: [a, b],
        }
    }
}

/// `y = r + γ(1−done)·min(q₁, q₂)`.
pub fn twin_target(rewards: &[f64], terminal: &[f64], q1: &[f64], q2: &[f64], gamma: f64) -> Vec<f64> {
    (0..rewards.len()).map(|i| rewards[i] + gamma * (1.0 - terminal[i]) * q1[i].min(q2[i])).collect()
}

fn hconcat<'a>(a: ArrayView2<'a, f64>, b: ArrayView2<'a, f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[a, b]).expect("row counts agree")
}

/// Mean squared error against `targets`, one Adam step; returns the loss.
fn regress(net: &mut Mlp, opt: &mut Adam, input: ArrayView2<f64>, targets: &[f64]) -> f64 {
    let cache = net.forward_cached(input).expect("critic input width");
    let rows = targets.len() as f64;
    let q = cache.output();
    let mut loss = 0.0;
    let grad = Array2::from_shape_fn(q.dim(), |(i, _)| {
        let e = q[[i, 0]] - targets[i];
        loss += e * e;
        2.0 * e / rows
    });
    let (grads, _) = net.backward(&cache, grad.view());
    opt.step(net, &grads);
    loss / rows
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct TrainStats {
    pub global_updates: usize,
    pub agent_updates: usize,
    /// Episodes in which the agent networks were trained.
    pub agent_update_episodes: usize,
    pub last_global_loss: [f64; 2],
    pub last_critic_loss: f64,
    pub last_actor_objective: f64,
}

/// How a learner reads its slice of a joint record.
#[derive(Debug, Clone, Copy)]
struct View {
    state_offset: usize,
    state_dim: usize,
    action_offset: usize,
    action_dim: usize,
    /// `None` averages every agent's reward.
    reward: Option<usize>,
}

/// A learner bound to one environment shape. Implements [`Policy`] so that
/// an episode run stores experience and trains at every master-slot end.
#[derive(Debug, Clone)]
pub struct Trainer {
    kind: TrainerKind,
    cfg: TrainerConfig,
    agents: usize,
    state_dim: usize,
    action_dim: usize,
    learners: Vec<AgentBundle>,
    views: Vec<View>,
    global: Option<GlobalCriticPair>,
    buffer: ReplayBuffer,
    noise_rng: ChaCha8Rng,
    episode: usize,
    exploring: bool,
    learning: bool,
    agent_trained_this_episode: bool,
    stats: TrainStats,
}

/// Independent random stream `id` of `seed`.
pub fn rng_stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Environment seed for a 1-based episode; shared by every trainer kind so
/// that runs with the same seed see the same worlds.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    rng_stream(seed, (1 << 32) + episode as u64).next_u64()
}

impl Trainer {
    pub fn new(
        kind: TrainerKind,
        cfg: TrainerConfig,
        agents: usize,
        state_dim: usize,
        action_dim: usize,
        seed: u64,
    ) -> Result<Self, TrainError> {
        cfg.validate()?;
        let mut init = rng_stream(seed, 1);
        let views: Vec<View> = match kind {
            TrainerKind::Maddpg | TrainerKind::Decentralized => (0..agents)
                .map(|f| View {
                    state_offset: f * state_dim,
                    state_dim,
                    action_offset: f * action_dim,
                    action_dim,
                    reward: Some(f),
                })
                .collect(),
            TrainerKind::Ddpg => vec![View {
                state_offset: 0,
                state_dim,
                action_offset: 0,
                action_dim: agents * action_dim,
                reward: None,
            }],
        };
        let learners = views.iter().map(|v| AgentBundle::new(v.state_dim, v.action_dim, &cfg, &mut init)).collect();
        let global = (kind == TrainerKind::Maddpg)
            .then(|| GlobalCriticPair::new(agents * (state_dim + action_dim), &cfg, &mut init));
        let buffer = ReplayBuffer::new(cfg.buffer_capacity, rng_stream(seed, 3));
        Ok(Self {
            kind,
            cfg,
            agents,
            state_dim,
            action_dim,
            learners,
            views,
            global,
            buffer,
            noise_rng: rng_stream(seed, 2),
            episode: 0,
            exploring: true,
            learning: true,
            agent_trained_this_episode: false,
            stats: TrainStats::default(),
        })
    }

    pub fn for_env(kind: TrainerKind, cfg: TrainerConfig, env: &Environment, seed: u64) -> Result<Self, TrainError> {
        Self::new(kind, cfg, env.agents(), env.state_dim(), env.action_dim(), seed)
    }

    pub fn kind(&self) -> TrainerKind {
        self.kind
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.cfg
    }

    pub fn stats(&self) -> TrainStats {
        self.stats
    }

    pub fn learners(&self) -> &[AgentBundle] {
        &self.learners
    }

    pub fn global_critics(&self) -> Option<&GlobalCriticPair> {
        self.global.as_ref()
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    /// Turns exploration noise and learning on or off (off for evaluation).
    pub fn set_training(&mut self, on: bool) {
        self.exploring = on;
        self.learning = on;
    }

    /// Marks the start of a 1-based episode.
    pub fn begin_episode(&mut self, episode: usize) {
        if self.agent_trained_this_episode {
            self.stats.agent_update_episodes += 1;
        }
        self.agent_trained_this_episode = false;
        self.episode = episode;
    }

    /// Closes the episode bookkeeping; call once after the last episode.
    pub fn finish(&mut self) {
        self.begin_episode(self.episode);
    }

    fn agent_episode(&self) -> bool {
        self.episode % self.cfg.policy_delay == 0
    }

    fn view_states(&self, joint: &Array2<f64>, v: &View) -> Array2<f64> {
        joint.slice(s![.., v.state_offset..v.state_offset + v.state_dim]).to_owned()
    }

    fn view_actions(&self, joint: &Array2<f64>, v: &View) -> Array2<f64> {
        joint.slice(s![.., v.action_offset..v.action_offset + v.action_dim]).to_owned()
    }

    fn view_rewards(&self, batch: &Batch, v: &View) -> Vec<f64> {
        match v.reward {
            Some(f) => batch.rewards.column(f).to_vec(),
            None => batch.rewards.mean_axis(Axis(1)).expect("at least one agent").to_vec(),
        }
    }

    /// Joint action of the target actors on `next_states`.
    fn target_joint_action(&self, next_states: &Array2<f64>) -> Array2<f64> {
        let parts: Vec<Array2<f64>> = self
            .learners
            .iter()
            .zip(&self.views)
            .map(|(l, v)| l.actor_target.forward_batch(self.view_states(next_states, v).view()).expect("actor width"))
            .collect();
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|p| p.view()).collect();
        ndarray::concatenate(Axis(1), &views).expect("row counts agree")
    }

    /// Shared regression target of both global critics.
    pub fn global_target(&self, batch: &Batch) -> Option<Vec<f64>> {
        let g = self.global.as_ref()?;
        let next = hconcat(batch.next_states.view(), self.target_joint_action(&batch.next_states).view());
        let q1 = g.targets[0].forward_batch(next.view()).expect("global width").column(0).to_vec();
        let q2 = g.targets[1].forward_batch(next.view()).expect("global width").column(0).to_vec();
        Some(twin_target(
            batch.global_rewards.as_slice().expect("contiguous"),
            batch.terminal.as_slice().expect("contiguous"),
            &q1,
            &q2,
            self.cfg.gamma,
        ))
    }

    /// One regression step for each global critic on the shared target,
    /// then soft target updates. Returns the two losses.
    pub fn update_global_critics(&mut self, batch: &Batch) -> Option<[f64; 2]> {
        let y = self.global_target(batch)?;
        let input = hconcat(batch.states.view(), batch.actions.view());
        let tau = self.cfg.tau;
        let g = self.global.as_mut().expect("checked above");
        let mut losses = [0.0; 2];
        for k in 0..2 {
            let (critic, opt) = (&mut g.critics[k], &mut g.opts[k]);
            losses[k] = regress(critic, opt, input.view(), &y);
            soft_update(&mut g.targets[k], &g.critics[k], tau);
        }
        self.stats.global_updates += 1;
        self.stats.last_global_loss = losses;
        Some(losses)
    }

    /// Critic regression and actor ascent for learner `l`, then soft target
    /// updates. Returns the critic loss and the actor objective.
    pub fn update_agent(&mut self, l: usize, batch: &Batch) -> (f64, f64) {
        let v = self.views[l];
        let gamma = self.cfg.gamma;
        let tau = self.cfg.tau;
        let states = self.view_states(&batch.states, &v);
        let actions = self.view_actions(&batch.actions, &v);
        let next = self.view_states(&batch.next_states, &v);
        let rewards = self.view_rewards(batch, &v);
        let rows = batch.len();

        let bundle = &self.learners[l];
        let next_actions = bundle.actor_target.forward_batch(next.view()).expect("actor width");
        let q_next = bundle.critic_target.forward_batch(hconcat(next.view(), next_actions.view()).view()).expect("critic width");
        let y: Vec<f64> =
            (0..rows).map(|i| rewards[i] + gamma * (1.0 - batch.terminal[i]) * q_next[[i, 0]]).collect();

        let bundle = &mut self.learners[l];
        let critic_loss = regress(&mut bundle.critic, &mut bundle.critic_opt, hconcat(states.view(), actions.view()).view(), &y);

        let actor_cache = bundle.actor.forward_cached(states.view()).expect("actor width");
        let fresh = actor_cache.output().clone();
        let ones = Array2::from_elem((rows, 1), 1.0);

        let own_cache = bundle.critic.forward_cached(hconcat(states.view(), fresh.view()).view()).expect("critic width");
        let mut objective = own_cache.output().sum();
        let (_, own_input_grad) = bundle.critic.backward(&own_cache, ones.view());
        let mut action_grad = own_input_grad.slice(s![.., v.state_dim..]).to_owned();

        if let Some(g) = &self.global {
            let mut joint_actions = batch.actions.clone();
            joint_actions.slice_mut(s![.., v.action_offset..v.action_offset + v.action_dim]).assign(&fresh);
            let cache = g.critics[0].forward_cached(hconcat(batch.states.view(), joint_actions.view()).view()).expect("global width");
            objective += cache.output().sum();
            let (_, input_grad) = g.critics[0].backward(&cache, ones.view());
            let start = batch.states.ncols() + v.action_offset;
            action_grad += &input_grad.slice(s![.., start..start + v.action_dim]);
        }

        // ascend the mean of the summed critic values
        let upstream = action_grad.mapv(|g| -g / rows as f64);
        let bundle = &mut self.learners[l];
        let (grads, _) = bundle.actor.backward(&actor_cache, upstream.view());
        bundle.actor_opt.step(&mut bundle.actor, &grads);
        soft_update(&mut bundle.actor_target, &bundle.actor, tau);
        soft_update(&mut bundle.critic_target, &bundle.critic, tau);

        let objective = objective / rows as f64;
        self.stats.agent_updates += 1;
        self.stats.last_critic_loss = critic_loss;
        self.stats.last_actor_objective = objective;
        (critic_loss, objective)
    }

    /// One minibatch round: global critics always, agents on delayed episodes.
    pub fn update_round(&mut self) -> Result<(), UnderfullBuffer> {
        let idx = self.buffer.sample_indices(self.cfg.batch_size)?;
        let records: Vec<&Experience> = idx.iter().map(|&i| self.buffer.get(i).expect("sampled index")).collect();
        let batch = Batch::from_records(&records);
        self.update_global_critics(&batch);
        if self.agent_episode() {
            for l in 0..self.learners.len() {
                self.update_agent(l, &batch);
            }
            self.agent_trained_this_episode = true;
        }
        Ok(())
    }

    pub fn push_experience(&mut self, e: Experience) {
        self.buffer.push(e);
    }

    const MAGIC: &'static [u8; 8] = b"SKYTRN\0\0";
    const VERSION: u32 = 1;

    /// Every network (online and target) in a fixed order. Optimizer moments
    /// and the replay buffer are not stored.
    pub fn save<W: Write>(&self, out: &mut W) -> Result<(), NeuralError> {
        out.write_all(Self::MAGIC)?;
        out.write_all(&Self::VERSION.to_le_bytes())?;
        out.write_all(&[self.kind.code(), self.global.is_some() as u8])?;
        out.write_all(&(self.learners.len() as u32).to_le_bytes())?;
        out.write_all(&(self.episode as u64).to_le_bytes())?;
        for net in self.networks() {
            net.write_to(out)?;
        }
        Ok(())
    }

    /// Restores network parameters saved from a trainer of the same shape.
    pub fn load<R: Read>(&mut self, input: &mut R) -> Result<(), NeuralError> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(NeuralError::Checkpoint("bad trainer magic".into()));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        if u32::from_le_bytes(word) != Self::VERSION {
            return Err(NeuralError::Checkpoint("unsupported trainer checkpoint version".into()));
        }
        let mut flags = [0u8; 2];
        input.read_exact(&mut flags)?;
        input.read_exact(&mut word)?;
        if flags != [self.kind.code(), self.global.is_some() as u8]
            || u32::from_le_bytes(word) as usize != self.learners.len()
        {
            return Err(NeuralError::Checkpoint("checkpoint is for a different trainer layout".into()));
        }
        let mut long = [0u8; 8];
        input.read_exact(&mut long)?;
        let mut loaded = Vec::new();
        for net in self.networks() {
            let restored = Mlp::read_from(input)?;
            if restored.flat_parameters().len() != net.flat_parameters().len()
                || restored.input_dim() != net.input_dim()
            {
                return Err(NeuralError::Checkpoint("network shape differs from this trainer".into()));
            }
            loaded.push(restored);
        }
        let mut it = loaded.into_iter();
        for net in self.networks_mut() {
            *net = it.next().expect("counted");
        }
        self.episode = u64::from_le_bytes(long) as usize;
        Ok(())
    }

    fn networks(&self) -> Vec<&Mlp> {
        let mut out = Vec::new();
        for b in &self.learners {
            out.extend([&b.actor, &b.actor_target, &b.critic, &b.critic_target]);
        }
        if let Some(g) = &self.global {
            out.extend([&g.critics[0], &g.critics[1], &g.targets[0], &g.targets[1]]);
        }
        out
    }

    fn networks_mut(&mut self) -> Vec<&mut Mlp> {
        let mut out = Vec::new();
        for b in &mut self.learners {
            out.push(&mut b.actor);
            out.push(&mut b.actor_target);
            out.push(&mut b.critic);
            out.push(&mut b.critic_target);
        }
        if let Some(g) = &mut self.global {
            let [c0, c1] = &mut g.critics;
            let [t0, t1] = &mut g.targets;
            out.extend([c0, c1, t0, t1]);
        }
        out
    }
}

impl Policy for Trainer {
    fn agents(&self) -> usize {
        self.agents
    }

    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn act(&mut self, states: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let sigma = self.cfg.noise_sigma(self.episode);
        let noise = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
        let mut joint = Vec::with_capacity(self.agents * self.action_dim);
        for (l, v) in self.learners.iter().zip(&self.views) {
            let agent = v.state_offset / self.state_dim;
            let mut a = l.actor.forward(&states[agent]).expect("state width");
            if self.exploring && sigma > 0.0 {
                for x in a.iter_mut() {
                    *x = (*x + noise.sample(&mut self.noise_rng)).clamp(-1.0, 1.0);
                }
            }
            joint.extend(a);
        }
        joint.chunks(self.action_dim).map(<[f64]>::to_vec).collect()
    }

    fn observe(&mut self, transition: &Transition) {
        if self.learning {
            self.buffer.push(Experience::from_transition(transition));
        }
    }

    fn end_master_slot(&mut self, _master: usize) {
        if !self.learning || self.buffer.len() < self.cfg.batch_size {
            return;
        }
        for _ in 0..self.cfg.updates_per_master_slot {
            self.update_round().expect("buffer is warm");
        }
    }
}

/// Trains for `cfg.episodes` episodes, calling `on_episode` after each one
/// (for logging or checkpointing). Returns the per-episode metrics and the
/// trained learner.
pub fn train<F>(
    env: &Environment,
    kind: TrainerKind,
    cfg: TrainerConfig,
    seed: u64,
    mut on_episode: F,
) -> Result<(Vec<EpisodeMetrics>, Trainer), TrainError>
where
    F: FnMut(&Trainer, &EpisodeMetrics) -> Result<(), TrainError>,
{
    let episodes = cfg.episodes;
    let mut trainer = Trainer::for_env(kind, cfg, env, seed)?;
    let mut metrics = Vec::with_capacity(episodes);
    for e in 1..=episodes {
        trainer.begin_episode(e);
        let trace = run_episode(env, &mut trainer, e, episode_seed(seed, e), false)?;
        on_episode(&trainer, &trace.metrics)?;
        metrics.push(trace.metrics);
    }
    trainer.finish();
    Ok((metrics, trainer))
}

/// Uniform random actions on the same episode seeds a trainer would see.
pub fn random_baseline(env: &Environment, episodes: usize, seed: u64) -> Result<Vec<EpisodeMetrics>, TrainError> {
    let mut policy = RandomPolicy::new(env, rng_stream(seed, 4).next_u64());
    (1..=episodes)
        .map(|e| Ok(run_episode(env, &mut policy, e, episode_seed(seed, e), false)?.metrics))
        .collect()
}

/// Mean of `mean_reward_per_agent` over the last `window` episodes.
pub fn final_window_reward(metrics: &[EpisodeMetrics], window: usize) -> f64 {
    final_window(metrics, window, |m| m.mean_reward_per_agent)
}

pub fn final_window<G: Fn(&EpisodeMetrics) -> f64>(metrics: &[EpisodeMetrics], window: usize, get: G) -> f64 {
    let tail = &metrics[metrics.len().saturating_sub(window)..];
    if tail.is_empty() {
        return f64::NAN;
    }
    tail.iter().map(get).sum::<f64>() / tail.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use skyvlc_core::ScenarioConfig;

    fn record(tag: f64, agents: usize, d: usize, a: usize) -> Experience {
        Experience {
            states: vec![tag; agents * d],
            actions: vec![tag.sin(); agents * a],
            rewards: (0..agents).map(|f| tag * 0.01 + f as f64).collect(),
            global_reward: -tag.abs() * 0.1,
            next_states: vec![tag + 0.5; agents * d],
            terminal: tag as usize % 7 == 0,
        }
    }

    fn tiny_cfg() -> TrainerConfig {
        TrainerConfig {
            episodes: 4,
            actor_hidden: vec![8],
            critic_hidden: vec![8],
            global_critic_hidden: vec![8, 4],
            batch_size: 4,
            buffer_capacity: 100,
            ..TrainerConfig::desk()
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut buf = ReplayBuffer::new(3, rng_stream(0, 0));
        for k in 0..4 {
            buf.push(record(k as f64, 1, 1, 1));
        }
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.get(0).unwrap().states[0], 1.0);
        assert_eq!(buf.get(2).unwrap().states[0], 3.0);
    }

    #[test]
    fn full_batch_is_a_permutation() {
        let mut buf = ReplayBuffer::new(10, rng_stream(0, 0));
        for k in 0..10 {
            buf.push(record(k as f64, 1, 1, 1));
        }
        let mut idx = buf.sample_indices(10).unwrap();
        idx.sort_unstable();
        assert_eq!(idx, (0..10).collect::<Vec<_>>());
        assert_eq!(buf.sample_indices(11), Err(UnderfullBuffer { have: 10, need: 11 }));
    }

    #[test]
    fn sampling_is_deterministic() {
        let fill = || {
            let mut buf = ReplayBuffer::new(50, rng_stream(5, 3));
            for k in 0..50 {
                buf.push(record(k as f64, 1, 1, 1));
            }
            buf
        };
        let (mut a, mut b) = (fill(), fill());
        for _ in 0..10 {
            assert_eq!(a.sample_indices(16).unwrap(), b.sample_indices(16).unwrap());
        }
    }

    #[test]
    fn twin_target_examples() {
        let y = twin_target(&[0.0], &[0.0], &[3.0], &[5.0], 0.99);
        assert_relative_eq!(y[0], 2.97, max_relative = 1e-15);
        assert_eq!(twin_target(&[-0.4], &[1.0], &[3.0], &[5.0], 0.99), vec![-0.4]);
    }

    #[test]
    fn noise_schedule() {
        let cfg = TrainerConfig { episodes: 200, ..TrainerConfig::desk() };
        assert_eq!(cfg.noise_sigma(1), 0.3);
        assert_relative_eq!(cfg.noise_sigma(51), 0.3 + (0.02 - 0.3) * 0.5, max_relative = 1e-12);
        assert_relative_eq!(cfg.noise_sigma(101), 0.02, max_relative = 1e-12);
        assert_relative_eq!(cfg.noise_sigma(200), 0.02, max_relative = 1e-12);
    }

    #[test]
    fn global_critics_share_one_target() {
        let mut t = Trainer::new(TrainerKind::Maddpg, tiny_cfg(), 2, 3, 2, 1).unwrap();
        for k in 0..10 {
            t.push_experience(record(k as f64, 2, 3, 2));
        }
        let recs: Vec<Experience> = (0..4).map(|k| t.buffer().get(k).unwrap().clone()).collect();
        let refs: Vec<&Experience> = recs.iter().collect();
        let batch = Batch::from_records(&refs);
        let y = t.global_target(&batch).unwrap();
        let g = t.global_critics().unwrap();
        let next = hconcat(batch.next_states.view(), t.target_joint_action(&batch.next_states).view());
        for k in 0..2 {
            let q = g.targets[k].forward_batch(next.view()).unwrap();
            for i in 0..4 {
                let bootstrap = batch.global_rewards[i] + 0.99 * (1.0 - batch.terminal[i]) * q[[i, 0]];
                assert!(y[i] <= bootstrap);
            }
        }
        assert!(Trainer::new(TrainerKind::Decentralized, tiny_cfg(), 2, 3, 2, 1).unwrap().global_target(&batch).is_none());
    }

    #[test]
    fn ddpg_acts_jointly() {
        let t = Trainer::new(TrainerKind::Ddpg, tiny_cfg(), 3, 5, 4, 0).unwrap();
        assert_eq!(t.learners().len(), 1);
        assert_eq!(t.learners()[0].actor.output_dim(), 12);
        assert_eq!(t.learners()[0].actor.input_dim(), 5);
    }

    #[test]
    fn zero_actor_gradient_leaves_actor_unchanged() {
        let mut t = Trainer::new(TrainerKind::Decentralized, tiny_cfg(), 1, 3, 2, 4).unwrap();
        for k in 0..8 {
            t.push_experience(record(k as f64, 1, 3, 2));
        }
        // a critic with zero weights has zero action gradient
        for net in [&mut t.learners[0].critic] {
            let zeros = vec![0.0; net.flat_parameters().len()];
            net.set_flat_parameters(&zeros).unwrap();
        }
        let recs: Vec<Experience> = (0..4).map(|k| t.buffer().get(k).unwrap().clone()).collect();
        let batch = Batch::from_records(&recs.iter().collect::<Vec<_>>());
        let before = t.learners[0].actor.clone();
        // the critic step moves the critic first; freeze it by using a zero learning rate
        t.learners[0].critic_opt.learning_rate = 0.0;
        t.update_agent(0, &batch);
        assert_eq!(t.learners[0].actor, before);
    }

    #[test]
    fn checkpoint_round_trip() {
        let env = skyvlc_core::Environment::new(ScenarioConfig::desk()).unwrap();
        let a = Trainer::for_env(TrainerKind::Maddpg, tiny_cfg(), &env, 3).unwrap();
        let mut b = Trainer::for_env(TrainerKind::Maddpg, tiny_cfg(), &env, 4).unwrap();
        assert_ne!(a.learners()[0].actor, b.learners()[0].actor);
        let mut bytes = Vec::new();
        a.save(&mut bytes).unwrap();
        b.load(&mut bytes.as_slice()).unwrap();
        assert_eq!(a.learners()[1].critic_target, b.learners()[1].critic_target);
        assert_eq!(a.global_critics().unwrap().targets[1], b.global_critics().unwrap().targets[1]);

        let mut c = Trainer::for_env(TrainerKind::Decentralized, tiny_cfg(), &env, 3).unwrap();
        assert!(c.load(&mut bytes.as_slice()).is_err());
    }

    proptest::proptest! {
        #[test]
        fn twin_target_never_exceeds_either_critic(
            rows in proptest::collection::vec((-5.0f64..5.0, proptest::bool::ANY, -50.0f64..50.0, -50.0f64..50.0), 1..32),
            gamma in 0.0f64..1.0,
        ) {
            let r: Vec<f64> = rows.iter().map(|x| x.0).collect();
            let d: Vec<f64> = rows.iter().map(|x| if x.1 { 1.0 } else { 0.0 }).collect();
            let q1: Vec<f64> = rows.iter().map(|x| x.2).collect();
            let q2: Vec<f64> = rows.iter().map(|x| x.3).collect();
            let y = twin_target(&r, &d, &q1, &q2, gamma);
            for i in 0..rows.len() {
                let cont = gamma * (1.0 - d[i]);
                proptest::prop_assert!(y[i] <= r[i] + cont * q1[i] && y[i] <= r[i] + cont * q2[i]);
            }
        }

        #[test]
        fn replay_keeps_the_newest_records(capacity in 1usize..20, pushes in 0usize..60) {
            let mut buf = ReplayBuffer::new(capacity, rng_stream(0, 3));
            for k in 0..pushes {
                buf.push(record(k as f64, 1, 1, 1));
            }
            proptest::prop_assert_eq!(buf.len(), pushes.min(capacity));
            for i in 0..buf.len() {
                let expected = (pushes - buf.len() + i) as f64;
                proptest::prop_assert_eq!(buf.get(i).unwrap().states[0], expected);
            }
            if let Ok(idx) = buf.sample_indices(buf.len()) {
                let mut sorted = idx.clone();
                sorted.sort_unstable();
                sorted.dedup();
                proptest::prop_assert_eq!(sorted.len(), idx.len());
            }
        }
    }
}
