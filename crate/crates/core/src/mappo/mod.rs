//! Multi-agent PPO with a shared decentralised actor and a centralised critic.
//!
//! Every AP runs the same actor on its own flattened history. The critic sees
//! the concatenation of all agents' histories, rotated so that the evaluated
//! agent's block comes first. Rollouts are collected episode by episode and an
//! update runs whenever the buffer holds at least
//! `sample_frequency * memory_length` transitions.

mod mlp;
mod ppo;

pub use mlp::{log_softmax, softmax, ForwardCache, Mlp};
pub use ppo::{
    advantages, clip_grad_norm, policy_loss, ppo_surrogate, value_loss, Adam, PolicyLoss,
    PolicySample, StepEnd,
};

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::baselines::Policy;
use crate::env::{flatten_state_into, Action, EnvConfig, Environment, OutOfBand, SlotOutcome};
use crate::metrics::{self, EpisodeStats};
use crate::seed::{self, Purpose, SimRng};
use crate::{math, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub gae_lambda: f64,
    pub ppo_epochs: usize,
    pub episodes: usize,
    pub clip_eps: f64,
    pub minibatch_size: usize,
    /// Rollout buffer capacity in transitions.
    pub memory_length: usize,
    /// Update trigger as a fraction of `memory_length`.
    pub sample_frequency: f64,
    pub hidden_widths: Vec<usize>,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub normalize_advantages: bool,
    /// Optional L2 clip on each network's minibatch gradient.
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            discount: 0.99,
            gae_lambda: 0.95,
            ppo_epochs: 2,
            episodes: 1000,
            clip_eps: 0.2,
            minibatch_size: 256,
            memory_length: 64_000,
            sample_frequency: 0.05,
            hidden_widths: vec![64, 64, 64],
            value_coef: 0.5,
            entropy_coef: 0.01,
            normalize_advantages: true,
            max_grad_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.learning_rate) {
            return Err(Error::Config { key: "learning_rate", reason: "must be > 0" });
        }
        if !(pos(self.discount) && self.discount <= 1.0) {
            return Err(Error::Config { key: "discount", reason: "must be in (0, 1]" });
        }
        if !(pos(self.gae_lambda) && self.gae_lambda <= 1.0) {
            return Err(Error::Config { key: "gae_lambda", reason: "must be in (0, 1]" });
        }
        if self.ppo_epochs == 0 {
            return Err(Error::Config { key: "ppo_epochs", reason: "must be >= 1" });
        }
        if self.episodes == 0 {
            return Err(Error::Config { key: "episodes", reason: "must be >= 1" });
        }
        if !(pos(self.clip_eps) && self.clip_eps < 1.0) {
            return Err(Error::Config { key: "clip_eps", reason: "must be in (0, 1)" });
        }
        if self.minibatch_size == 0 {
            return Err(Error::Config { key: "minibatch_size", reason: "must be >= 1" });
        }
        if self.memory_length == 0 {
            return Err(Error::Config { key: "memory_length", reason: "must be >= 1" });
        }
        if !(pos(self.sample_frequency) && self.sample_frequency <= 1.0) {
            return Err(Error::Config { key: "sample_frequency", reason: "must be in (0, 1]" });
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return Err(Error::Config { key: "hidden_widths", reason: "must be nonempty and nonzero" });
        }
        if !pos(self.value_coef) {
            return Err(Error::Config { key: "value_coef", reason: "must be > 0" });
        }
        if !(self.entropy_coef.is_finite() && self.entropy_coef >= 0.0) {
            return Err(Error::Config { key: "entropy_coef", reason: "must be >= 0" });
        }
        if let Some(n) = self.max_grad_norm {
            if !pos(n) {
                return Err(Error::Config { key: "max_grad_norm", reason: "must be > 0" });
            }
        }
        Ok(())
    }

    /// Buffer size that triggers an update.
    pub fn update_threshold(&self) -> usize {
        let t = self.sample_frequency * self.memory_length as f64;
        (t as usize).max(1)
    }
}

/// Action probabilities of the actor for one flattened state.
pub fn actor_forward(actor: &Mlp, state: &[f64]) -> Result<[f64; Action::COUNT]> {
    if actor.output_dim() != Action::COUNT {
        return Err(Error::DimensionMismatch { expected: Action::COUNT, got: actor.output_dim() });
    }
    let p = softmax(&actor.forward_vec(state)?);
    Ok([p[0], p[1], p[2], p[3]])
}

/// Samples an index from a probability vector.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    best
}

/// All agents' flattened states, rotated so agent `m`'s block comes first.
pub fn critic_input(states: &[Vec<f64>], m: usize, out: &mut Vec<f64>) {
    out.clear();
    let n = states.len();
    for k in 0..n {
        out.extend_from_slice(&states[(m + k) % n]);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub critic_input: Vec<f64>,
    pub action: usize,
    pub logp: f64,
    pub value: f64,
    pub reward: f64,
    pub end: StepEnd,
}

/// Per-agent trajectories awaiting an update.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBuffer {
    capacity: usize,
    trajectories: Vec<Vec<Transition>>,
    len: usize,
}

impl RolloutBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, trajectories: Vec::new(), len: 0 }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Adds one agent's trajectory; the oldest trajectories are evicted to
    /// stay within capacity.
    pub fn push_trajectory(&mut self, traj: Vec<Transition>) {
        if traj.is_empty() {
            return;
        }
        let mut traj = traj;
        if traj.len() > self.capacity {
            traj.drain(..traj.len() - self.capacity);
            if let Some(last) = traj.last_mut() {
                debug_assert!(!matches!(last.end, StepEnd::Continue));
            }
        }
        self.len += traj.len();
        self.trajectories.push(traj);
        while self.len > self.capacity {
            let old = self.trajectories.remove(0);
            self.len -= old.len();
        }
    }

    pub fn trajectories(&self) -> &[Vec<Transition>] {
        &self.trajectories
    }

    pub fn clear(&mut self) {
        self.trajectories.clear();
        self.len = 0;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub transitions: usize,
    pub minibatches: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Actor, critic and their optimizers.
#[derive(Debug, Clone)]
pub struct Mappo {
    pub actor: Mlp,
    pub critic: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    cfg: TrainConfig,
    num_agents: usize,
    updates: usize,
}

impl Mappo {
    pub fn new(num_agents: usize, state_dim: usize, cfg: TrainConfig, rng: &mut SimRng) -> Result<Self> {
        cfg.validate()?;
        let mut actor_sizes = vec![state_dim];
        actor_sizes.extend_from_slice(&cfg.hidden_widths);
        actor_sizes.push(Action::COUNT);
        let mut critic_sizes = vec![state_dim * num_agents];
        critic_sizes.extend_from_slice(&cfg.hidden_widths);
        critic_sizes.push(1);
        // a small output layer keeps the initial policy close to uniform
        let actor = Mlp::init(&actor_sizes, 0.01, rng);
        let critic = Mlp::init(&critic_sizes, 1.0, rng);
        Ok(Self::from_networks(actor, critic, num_agents, cfg))
    }

    pub fn from_networks(actor: Mlp, critic: Mlp, num_agents: usize, cfg: TrainConfig) -> Self {
        Self {
            actor_opt: Adam::new(actor.params().len(), cfg.learning_rate),
            critic_opt: Adam::new(critic.params().len(), cfg.learning_rate),
            actor,
            critic,
            cfg,
            num_agents,
            updates: 0,
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn value(&self, critic_input: &[f64]) -> Result<f64> {
        Ok(self.critic.forward_vec(critic_input)?[0])
    }

    /// Runs PPO epochs over the buffer and clears it.
    pub fn update(&mut self, buffer: &mut RolloutBuffer, rng: &mut SimRng) -> Result<UpdateStats> {
        let mut flat: Vec<&Transition> = Vec::with_capacity(buffer.len());
        let mut adv = Vec::with_capacity(buffer.len());
        let mut ret = Vec::with_capacity(buffer.len());
        for traj in buffer.trajectories() {
            let rewards: Vec<f64> = traj.iter().map(|t| t.reward).collect();
            let values: Vec<f64> = traj.iter().map(|t| t.value).collect();
            let ends: Vec<StepEnd> = traj.iter().map(|t| t.end).collect();
            let (a, r) = advantages(&rewards, &values, &ends, self.cfg.discount, self.cfg.gae_lambda);
            flat.extend(traj.iter());
            adv.extend(a);
            ret.extend(r);
        }
        let n = flat.len();
        if n == 0 {
            return Ok(UpdateStats::default());
        }
        if self.cfg.normalize_advantages && n > 1 {
            let mean = adv.iter().sum::<f64>() / n as f64;
            let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
            let std = math::sqrt(var);
            if std > 1e-8 {
                adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
            }
        }

        let mut stats = UpdateStats { transitions: n, ..Default::default() };
        let mut order: Vec<usize> = (0..n).collect();
        let mut g_actor = vec![0.0; self.actor.params().len()];
        let mut g_critic = vec![0.0; self.critic.params().len()];
        for _ in 0..self.cfg.ppo_epochs {
            order.shuffle(rng);
            for chunk in order.chunks(self.cfg.minibatch_size) {
                let batch: Vec<PolicySample<'_>> = chunk
                    .iter()
                    .map(|&i| PolicySample {
                        state: &flat[i].state,
                        action: flat[i].action,
                        logp_old: flat[i].logp,
                        advantage: adv[i],
                    })
                    .collect();
                g_actor.fill(0.0);
                let pl = policy_loss(&self.actor, &batch, self.cfg.clip_eps, self.cfg.entropy_coef, Some(&mut g_actor))?;

                let states: Vec<&[f64]> = chunk.iter().map(|&i| flat[i].critic_input.as_slice()).collect();
                let returns: Vec<f64> = chunk.iter().map(|&i| ret[i]).collect();
                g_critic.fill(0.0);
                let vl = value_loss(&self.critic, &states, &returns, self.cfg.value_coef, Some(&mut g_critic))?;

                if !(pl.loss.is_finite() && vl.is_finite()) {
                    return Err(Error::Divergence { update: self.updates, what: "loss" });
                }
                if let Some(max) = self.cfg.max_grad_norm {
                    clip_grad_norm(&mut g_actor, max);
                    clip_grad_norm(&mut g_critic, max);
                }
                self.actor_opt.step(self.actor.params_mut(), &g_actor);
                self.critic_opt.step(self.critic.params_mut(), &g_critic);

                stats.minibatches += 1;
                stats.policy_loss += pl.loss;
                stats.value_loss += vl;
                stats.entropy += pl.entropy;
                stats.clip_fraction += pl.clip_fraction;
                stats.approx_kl += pl.approx_kl;
            }
        }
        if self.actor.params().iter().chain(self.critic.params()).any(|p| !p.is_finite()) {
            return Err(Error::Divergence { update: self.updates, what: "parameter" });
        }
        let k = stats.minibatches.max(1) as f64;
        stats.policy_loss /= k;
        stats.value_loss /= k;
        stats.entropy /= k;
        stats.clip_fraction /= k;
        stats.approx_kl /= k;
        self.updates += 1;
        buffer.clear();
        Ok(stats)
    }
}

/// Per-episode learning-curve point.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReport {
    pub episode: usize,
    /// Mean over slots of the shared reward.
    pub mean_reward: f64,
    /// Median over agents of the success rate.
    pub success_rate_median: f64,
    pub overhead_total: u64,
    /// `(idle, tx, csi, par)` frequencies over all agent-slots.
    pub action_probs: [f64; Action::COUNT],
    pub steps: u32,
    pub update: Option<UpdateStats>,
    pub stats: EpisodeStats,
}

impl EpisodeReport {
    pub fn from_stats(episode: usize, total_reward: f64, stats: EpisodeStats) -> Result<Self> {
        let rates: Vec<f64> =
            (0..stats.num_agents()).map(|m| metrics::success_rate(&stats, m)).collect::<Result<_>>()?;
        Ok(Self {
            episode,
            mean_reward: total_reward / f64::from(stats.steps.max(1)),
            success_rate_median: metrics::median(&rates)?,
            overhead_total: metrics::signaling_overhead(&stats),
            action_probs: metrics::action_probabilities(&metrics::action_counts(&stats))?,
            steps: stats.steps,
            update: None,
            stats,
        })
    }
}

/// Episode-by-episode MAPPO training driver.
#[derive(Debug, Clone)]
pub struct Trainer {
    env_cfg: EnvConfig,
    seed: u64,
    learner: Mappo,
    buffer: RolloutBuffer,
    learner_rng: SimRng,
    episode: usize,
}

impl Trainer {
    pub fn new(env_cfg: EnvConfig, cfg: TrainConfig, seed: u64) -> Result<Self> {
        env_cfg.validate()?;
        let mut learner_rng = seed::stream(seed, 0, Purpose::Learner);
        let learner = Mappo::new(env_cfg.num_agents(), env_cfg.state_dim(), cfg, &mut learner_rng)?;
        Ok(Self {
            buffer: RolloutBuffer::new(learner.cfg.memory_length),
            env_cfg,
            seed,
            learner,
            learner_rng,
            episode: 0,
        })
    }

    pub fn learner(&self) -> &Mappo {
        &self.learner
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn is_finished(&self) -> bool {
        self.episode >= self.learner.cfg.episodes
    }

    pub fn buffer(&self) -> &RolloutBuffer {
        &self.buffer
    }

    /// Collects one episode, and updates if the buffer reached the trigger.
    pub fn train_episode(&mut self) -> Result<EpisodeReport> {
        let ep = self.episode as u64;
        let env_rng = seed::stream(self.seed, ep, Purpose::Environment);
        let mut policy_rng = seed::stream(self.seed, ep, Purpose::Policy);
        let (trajs, total_reward, stats) =
            collect_episode(&self.learner, self.env_cfg.clone(), env_rng, &mut policy_rng)?;
        for t in trajs {
            self.buffer.push_trajectory(t);
        }
        let mut report = EpisodeReport::from_stats(self.episode, total_reward, stats)?;
        if self.buffer.len() >= self.learner.cfg.update_threshold() {
            report.update = Some(self.learner.update(&mut self.buffer, &mut self.learner_rng)?);
        }
        self.episode += 1;
        Ok(report)
    }

    pub fn into_learner(self) -> Mappo {
        self.learner
    }
}

/// Trains for the configured number of episodes.
pub fn train(env_cfg: EnvConfig, cfg: TrainConfig, seed: u64) -> Result<(Mappo, Vec<EpisodeReport>)> {
    let mut trainer = Trainer::new(env_cfg, cfg, seed)?;
    let mut curve = Vec::new();
    while !trainer.is_finished() {
        curve.push(trainer.train_episode()?);
    }
    Ok((trainer.into_learner(), curve))
}

/// Rolls out one episode with the current actor, recording per-agent
/// trajectories.
pub fn collect_episode(
    learner: &Mappo,
    env_cfg: EnvConfig,
    env_rng: SimRng,
    policy_rng: &mut SimRng,
) -> Result<(Vec<Vec<Transition>>, f64, EpisodeStats)> {
    let mut env = Environment::new(env_cfg, OutOfBand::default(), env_rng)?;
    let n = env.num_agents();
    let dim = env.config().state_dim();
    let mut trajs: Vec<Vec<Transition>> = (0..n).map(|_| Vec::new()).collect();
    let mut states = vec![vec![0.0; dim]; n];
    let mut cin = Vec::new();
    let mut actions = vec![Action::Idle; n];
    let mut total_reward = 0.0;
    loop {
        for (m, s) in states.iter_mut().enumerate() {
            flatten_state_into(env.history(m), s);
        }
        for m in 0..n {
            let probs = actor_forward(&learner.actor, &states[m])?;
            let a = sample_categorical(&probs, policy_rng);
            actions[m] = Action::ALL[a];
            critic_input(&states, m, &mut cin);
            let value = learner.value(&cin)?;
            trajs[m].push(Transition {
                state: states[m].clone(),
                critic_input: cin.clone(),
                action: a,
                logp: math::ln(probs[a]),
                value,
                reward: 0.0,
                end: StepEnd::Continue,
            });
        }
        let out = env.step(&actions)?;
        total_reward += out.reward;
        for t in &mut trajs {
            t.last_mut().expect("pushed above").reward = out.reward;
        }
        if out.done {
            let flushed = env.buffers().iter().all(|b| b.is_empty());
            for (m, s) in states.iter_mut().enumerate() {
                flatten_state_into(env.history(m), s);
            }
            for (m, traj) in trajs.iter_mut().enumerate() {
                let end = if flushed {
                    StepEnd::Terminal
                } else {
                    critic_input(&states, m, &mut cin);
                    StepEnd::Truncated(learner.value(&cin)?)
                };
                traj.last_mut().expect("pushed above").end = end;
            }
            break;
        }
    }
    Ok((trajs, total_reward, env.stats().clone()))
}

/// Decentralised execution of a trained actor.
#[derive(Debug, Clone)]
pub struct MappoPolicy {
    pub actor: Mlp,
    /// Take the most likely action instead of sampling.
    pub greedy: bool,
    state: Vec<f64>,
}

impl MappoPolicy {
    pub fn new(actor: Mlp, greedy: bool) -> Self {
        Self { actor, greedy, state: Vec::new() }
    }
}

impl Policy for MappoPolicy {
    fn begin_episode(&mut self, _: usize) {}

    fn act(&mut self, env: &Environment, _: Option<&SlotOutcome>, rng: &mut SimRng, out: &mut Vec<Action>) -> Result<()> {
        out.clear();
        self.state.resize(env.config().state_dim(), 0.0);
        for m in 0..env.num_agents() {
            flatten_state_into(env.history(m), &mut self.state);
            let probs = actor_forward(&self.actor, &self.state)?;
            let a = if self.greedy { argmax(&probs) } else { sample_categorical(&probs, rng) };
            out.push(Action::ALL[a]);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_actor_is_uniform() {
        let actor = Mlp::zeros(&[36, 64, 64, 64, 4]);
        let p = actor_forward(&actor, &[0.3; 36]).unwrap();
        assert_eq!(p, [0.25; 4]);
        assert!(actor_forward(&actor, &[0.3; 35]).is_err());
    }

    #[test]
    fn random_actor_probabilities_sum_to_one() {
        let mut rng = SimRng::seed_from_u64(2);
        let actor = Mlp::init(&[36, 64, 64, 64, 4], 3.0, &mut rng);
        for k in 0..20 {
            let x: Vec<f64> = (0..36).map(|i| ((i * k) as f64).sin()).collect();
            let p = actor_forward(&actor, &x).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn update_threshold_is_five_percent_of_memory() {
        assert_eq!(TrainConfig::default().update_threshold(), 3200);
    }

    #[test]
    fn buffer_respects_capacity() {
        let t = |end| Transition {
            state: vec![],
            critic_input: vec![],
            action: 0,
            logp: 0.0,
            value: 0.0,
            reward: 0.0,
            end,
        };
        let mut b = RolloutBuffer::new(5);
        b.push_trajectory(vec![t(StepEnd::Continue), t(StepEnd::Continue), t(StepEnd::Terminal)]);
        b.push_trajectory(vec![t(StepEnd::Continue), t(StepEnd::Continue), t(StepEnd::Terminal)]);
        assert_eq!(b.len(), 3);
        b.clear();
        assert!(b.is_empty());
    }

    #[test]
    fn categorical_sampling_follows_probs() {
        let mut rng = SimRng::seed_from_u64(1);
        let probs = [0.1, 0.6, 0.2, 0.1];
        let mut c = [0u32; 4];
        for _ in 0..50_000 {
            c[sample_categorical(&probs, &mut rng)] += 1;
        }
        for (k, p) in c.iter().zip(probs) {
            assert!((f64::from(*k) / 50_000.0 - p).abs() < 0.01);
        }
    }
}
