//! Runs a benchmark or a trained policy for many seeded episodes and writes
//! the metric CSVs.
//!
//! Episode `e` draws its environment from ChaCha stream `4e` and its policy
//! randomness from stream `4e + 1` of the master seed, so episodes run in
//! parallel yet the output is identical to a sequential run.

use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use subnet_core::baselines::{run_episode, Benchmark, Policy};
use subnet_core::env::{sinr_db, EnvConfig};
use subnet_core::mappo::{MappoPolicy, Mlp};
use subnet_core::metrics::{self, EpisodeStats};
use subnet_core::seed::{self, Purpose};

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::output::OutputDir;

#[derive(Debug, Clone)]
pub enum PolicyChoice {
    Benchmark(Benchmark),
    Mappo { actor: Mlp, greedy: bool },
}

impl PolicyChoice {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyChoice::Benchmark(b) => b.name(),
            PolicyChoice::Mappo { .. } => "mappo-eval",
        }
    }

    fn instantiate(&self) -> Box<dyn Policy + Send> {
        match self {
            PolicyChoice::Benchmark(b) => b.policy(),
            PolicyChoice::Mappo { actor, greedy } => Box::new(MappoPolicy::new(actor.clone(), *greedy)),
        }
    }

    /// Resolves the configured policy, loading the checkpoint for `mappo-eval`.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        if cfg.policy == "mappo-eval" {
            let Some(path) = &cfg.checkpoint else {
                bail!("policy mappo-eval needs a checkpoint (--checkpoint or `checkpoint` key)");
            };
            let ck = Checkpoint::load(Path::new(path))?;
            if ck.num_agents != cfg.num_subnetworks {
                bail!(
                    "checkpoint was trained with {} subnetworks, config has {}",
                    ck.num_agents,
                    cfg.num_subnetworks
                );
            }
            let actor = ck.actor.to_mlp()?;
            if actor.input_dim() != cfg.env_config().state_dim() {
                bail!("checkpoint actor input {} does not match history_len", actor.input_dim());
            }
            return Ok(PolicyChoice::Mappo { actor, greedy: cfg.greedy_eval });
        }
        Ok(PolicyChoice::Benchmark(cfg.policy.parse()?))
    }
}

/// One row of the per-slot trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub episode: u64,
    pub slot: u32,
    pub agent: usize,
    pub action: String,
    pub success: u8,
    pub rate_bps: f64,
    /// Empty when the agent did not transmit.
    pub sinr_db: Option<f64>,
    pub reward: f64,
    pub buffer: u32,
    pub uplink_kind: String,
    /// Empty when no grant arrived.
    pub grant_coeff: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub episode: u64,
    pub stats: EpisodeStats,
    pub total_reward: f64,
    pub trace: Vec<TraceRow>,
}

impl EpisodeResult {
    pub fn success_rates(&self) -> Vec<f64> {
        (0..self.stats.num_agents())
            .map(|m| metrics::success_rate(&self.stats, m).expect("agent index in range"))
            .collect()
    }

    /// Successes plus final occupancy equals the buffer capacity for every agent.
    pub fn conserves(&self, capacity: u32) -> bool {
        self.stats.agents.iter().all(|a| a.successes + a.final_occupancy == capacity)
    }
}

pub fn run_one(env_cfg: &EnvConfig, choice: &PolicyChoice, seed: u64, episode: u64, trace: bool) -> Result<EpisodeResult> {
    let mut policy = choice.instantiate();
    let mut policy_rng = seed::stream(seed, episode, Purpose::Policy);
    let env_rng = seed::stream(seed, episode, Purpose::Environment);
    let mut rows = Vec::new();
    let mut total_reward = 0.0;
    let stats = run_episode(env_cfg.clone(), policy.as_mut(), env_rng, &mut policy_rng, |_, out| {
        total_reward += out.reward;
        if trace {
            for (m, a) in out.agents.iter().enumerate() {
                rows.push(TraceRow {
                    episode,
                    slot: out.slot,
                    agent: m,
                    action: a.action.name().into(),
                    success: u8::from(a.success),
                    rate_bps: a.rate_bps,
                    sinr_db: a.transmitted.then(|| sinr_db(a.sinr)),
                    reward: out.reward,
                    buffer: a.buffer,
                    uplink_kind: a.uplink.label().into(),
                    grant_coeff: a.grant,
                });
            }
        }
    })
    .with_context(|| format!("episode {episode}"))?;
    Ok(EpisodeResult { episode, stats, total_reward, trace: rows })
}

/// Runs episodes `0..episodes` in parallel; results are in episode order.
pub fn run_episodes(
    env_cfg: &EnvConfig,
    choice: &PolicyChoice,
    seed: u64,
    episodes: u64,
    trace: bool,
) -> Result<Vec<EpisodeResult>> {
    (0..episodes).into_par_iter().map(|e| run_one(env_cfg, choice, seed, e, trace)).collect()
}

#[derive(Debug, Serialize)]
struct EpisodeRow {
    episode: u64,
    steps: u32,
    total_reward: f64,
    success_rate_median: f64,
    successes: u64,
    transmissions: u64,
    csi: u64,
    par: u64,
    grants: u64,
    overhead: u64,
}

#[derive(Debug, Serialize)]
struct AgentRow {
    episode: u64,
    agent: usize,
    successes: u32,
    transmissions: u32,
    flush_slot: Option<u32>,
    success_rate: f64,
    csi: u32,
    par: u32,
    grants: u32,
    final_occupancy: u32,
}

#[derive(Debug, Serialize)]
struct CdfRow {
    success_rate: f64,
    cumulative_fraction: f64,
}

#[derive(Debug, Serialize)]
struct OverheadRow<'a> {
    policy: &'a str,
    episodes: u64,
    csi: u64,
    par: u64,
    grants: u64,
    total: u64,
}

#[derive(Debug, Serialize)]
struct ActionProbRow<'a> {
    policy: &'a str,
    idle: f64,
    tx: f64,
    csi: f64,
    par: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub policy: &'static str,
    /// Success rate of every (episode, agent) pair.
    pub success_rates: Vec<f64>,
    pub success_rate_median: f64,
    pub csi: u64,
    pub par: u64,
    pub grants: u64,
    pub action_probs: [f64; 4],
    pub conserved: bool,
    pub episodes: Vec<EpisodeResult>,
}

impl ExperimentSummary {
    pub fn overhead(&self) -> u64 {
        self.csi + self.par + self.grants
    }
}

/// Aggregates per-episode results into the experiment metrics.
pub fn summarize(policy: &'static str, capacity: u32, episodes: Vec<EpisodeResult>) -> Result<ExperimentSummary> {
    let success_rates: Vec<f64> = episodes.iter().flat_map(EpisodeResult::success_rates).collect();
    let mut counts = [0u64; 4];
    let (mut csi, mut par, mut grants) = (0, 0, 0);
    for e in &episodes {
        for (c, v) in counts.iter_mut().zip(metrics::action_counts(&e.stats)) {
            *c += v;
        }
        for a in &e.stats.agents {
            csi += u64::from(a.csi_count);
            par += u64::from(a.par_count);
            grants += u64::from(a.grants_received);
        }
    }
    Ok(ExperimentSummary {
        policy,
        success_rate_median: metrics::median(&success_rates)?,
        success_rates,
        csi,
        par,
        grants,
        action_probs: metrics::action_probabilities(&counts)?,
        conserved: episodes.iter().all(|e| e.conserves(capacity)),
        episodes,
    })
}

/// Runs the configured policy and writes every output file into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let choice = PolicyChoice::from_config(cfg)?;
    let env_cfg = cfg.env_config();
    let results = run_episodes(&env_cfg, &choice, cfg.seed, cfg.episodes as u64, cfg.trace)?;
    let summary = summarize(choice.name(), cfg.buffer_capacity, results)?;
    write_outputs(cfg, &summary, out)?;
    Ok(summary)
}

fn write_outputs(cfg: &ExperimentConfig, s: &ExperimentSummary, out: &Path) -> Result<()> {
    let mut dir = OutputDir::create(out)?;
    dir.write_bytes("config.toml", cfg.to_toml_string().as_bytes())?;
    dir.write_bytes("seed.txt", format!("{}\n", cfg.seed).as_bytes())?;

    let mut episode_rows = Vec::new();
    let mut agent_rows = Vec::new();
    for e in &s.episodes {
        let rates = e.success_rates();
        let st = &e.stats;
        let sum = |f: fn(&metrics::AgentStats) -> u32| st.agents.iter().map(|a| u64::from(f(a))).sum::<u64>();
        let (csi, par, grants) = (sum(|a| a.csi_count), sum(|a| a.par_count), sum(|a| a.grants_received));
        episode_rows.push(EpisodeRow {
            episode: e.episode,
            steps: st.steps,
            total_reward: e.total_reward,
            success_rate_median: metrics::median(&rates)?,
            successes: sum(|a| a.successes),
            transmissions: sum(|a| a.transmissions),
            csi,
            par,
            grants,
            overhead: csi + par + grants,
        });
        for (m, a) in st.agents.iter().enumerate() {
            agent_rows.push(AgentRow {
                episode: e.episode,
                agent: m,
                successes: a.successes,
                transmissions: a.transmissions,
                flush_slot: a.flush_slot,
                success_rate: rates[m],
                csi: a.csi_count,
                par: a.par_count,
                grants: a.grants_received,
                final_occupancy: a.final_occupancy,
            });
        }
    }
    dir.write_csv("episodes.csv", episode_rows)?;
    dir.write_csv("agents.csv", agent_rows)?;
    let cdf = metrics::empirical_cdf(&s.success_rates)?;
    dir.write_csv(
        "cdf.csv",
        cdf.into_iter().map(|(success_rate, cumulative_fraction)| CdfRow { success_rate, cumulative_fraction }),
    )?;
    dir.write_csv(
        "overhead.csv",
        [OverheadRow {
            policy: s.policy,
            episodes: s.episodes.len() as u64,
            csi: s.csi,
            par: s.par,
            grants: s.grants,
            total: s.overhead(),
        }],
    )?;
    let [idle, tx, csi, par] = s.action_probs;
    dir.write_csv("action_probs.csv", [ActionProbRow { policy: s.policy, idle, tx, csi, par }])?;
    if cfg.trace {
        dir.write_csv("trace.csv", s.episodes.iter().flat_map(|e| e.trace.iter()))?;
    }
    dir.write_manifest()
}
