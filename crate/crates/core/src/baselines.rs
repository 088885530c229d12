//! Hand-crafted benchmark protocols, run over the same environment interface
//! as the learned agents.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::env::{Action, EnvConfig, Environment, OutOfBand, SlotOutcome};
use crate::metrics::EpisodeStats;
use crate::seed::SimRng;
use crate::{Error, Result};

/// What an agent learned about its own previous slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Feedback {
    pub transmitted: bool,
    pub success: bool,
}

impl Feedback {
    pub fn failed(self) -> bool {
        self.transmitted && !self.success
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IaPhase {
    #[default]
    Normal,
    MustSendCsi,
    MustSendPar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IaPolicyState {
    pub phase: IaPhase,
    pub last_tx_failed: bool,
}

/// Fixed power: transmit every slot, never signal.
pub fn policy_fixed(_obs: f64) -> Action {
    Action::Transmit
}

/// Uniform over the four actions.
pub fn policy_random<R: Rng + ?Sized>(_obs: f64, rng: &mut R) -> Action {
    Action::ALL[rng.random_range(0..Action::COUNT)]
}

/// Interference-aware: transmit until a failure, then spend one slot on a CSI
/// report and one on a PAR before transmitting again.
pub fn policy_interference_aware(_obs: f64, fb: Feedback, st: IaPolicyState) -> (Action, IaPolicyState) {
    let phase = match st.phase {
        IaPhase::Normal if fb.failed() => IaPhase::MustSendCsi,
        p => p,
    };
    let last_tx_failed = fb.failed();
    match phase {
        IaPhase::Normal => (Action::Transmit, IaPolicyState { phase, last_tx_failed }),
        IaPhase::MustSendCsi => {
            (Action::SendCsi, IaPolicyState { phase: IaPhase::MustSendPar, last_tx_failed })
        }
        IaPhase::MustSendPar => {
            (Action::SendPar, IaPolicyState { phase: IaPhase::Normal, last_tx_failed })
        }
    }
}

/// CSI-based interference-aware: CSI goes out every slot without costing the
/// data slot (see [`CsiInterferenceAware::out_of_band`]), so a failure only
/// costs the PAR slot.
pub fn policy_csi_ia(_obs: f64, fb: Feedback, st: IaPolicyState) -> (Action, IaPolicyState) {
    let last_tx_failed = fb.failed();
    match st.phase {
        IaPhase::Normal if fb.failed() => {
            (Action::SendPar, IaPolicyState { phase: IaPhase::Normal, last_tx_failed })
        }
        IaPhase::MustSendPar => (Action::SendPar, IaPolicyState { phase: IaPhase::Normal, last_tx_failed }),
        _ => (Action::Transmit, IaPolicyState { phase: IaPhase::Normal, last_tx_failed }),
    }
}

/// Persistent power (genie): always transmit; CSI and reallocation every slot
/// are out of band.
pub fn policy_genie(_obs: f64) -> Action {
    Action::Transmit
}

/// A joint policy over all agents of an environment.
pub trait Policy {
    /// Signaling the environment performs on the policy's behalf.
    fn out_of_band(&self) -> OutOfBand {
        OutOfBand::default()
    }

    fn begin_episode(&mut self, num_agents: usize);

    /// Picks one action per agent. `last` is the previous slot's outcome
    /// (`None` on the first slot).
    fn act(
        &mut self,
        env: &Environment,
        last: Option<&SlotOutcome>,
        rng: &mut SimRng,
        out: &mut Vec<Action>,
    ) -> Result<()>;
}

fn feedback(last: Option<&SlotOutcome>, m: usize) -> Feedback {
    last.map_or_else(Feedback::default, |o| Feedback {
        transmitted: o.agents[m].transmitted,
        success: o.agents[m].success,
    })
}

#[derive(Debug, Default)]
pub struct Fixed;

impl Policy for Fixed {
    fn begin_episode(&mut self, _: usize) {}

    fn act(&mut self, env: &Environment, _: Option<&SlotOutcome>, _: &mut SimRng, out: &mut Vec<Action>) -> Result<()> {
        out.clear();
        for m in 0..env.num_agents() {
            out.push(policy_fixed(env.observe(m)?));
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct RandomAction;

impl Policy for RandomAction {
    fn begin_episode(&mut self, _: usize) {}

    fn act(&mut self, env: &Environment, _: Option<&SlotOutcome>, rng: &mut SimRng, out: &mut Vec<Action>) -> Result<()> {
        out.clear();
        for m in 0..env.num_agents() {
            out.push(policy_random(env.observe(m)?, rng));
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct InterferenceAware {
    states: Vec<IaPolicyState>,
}

impl InterferenceAware {
    pub fn states(&self) -> &[IaPolicyState] {
        &self.states
    }
}

impl Policy for InterferenceAware {
    fn begin_episode(&mut self, n: usize) {
        self.states = alloc::vec![IaPolicyState::default(); n];
    }

    fn act(&mut self, env: &Environment, last: Option<&SlotOutcome>, _: &mut SimRng, out: &mut Vec<Action>) -> Result<()> {
        out.clear();
        for m in 0..env.num_agents() {
            let (a, st) = policy_interference_aware(env.observe(m)?, feedback(last, m), self.states[m]);
            self.states[m] = st;
            out.push(a);
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct CsiInterferenceAware {
    states: Vec<IaPolicyState>,
}

impl Policy for CsiInterferenceAware {
    fn out_of_band(&self) -> OutOfBand {
        OutOfBand { csi_every_slot: true, allocate_every_slot: false }
    }

    fn begin_episode(&mut self, n: usize) {
        self.states = alloc::vec![IaPolicyState::default(); n];
    }

    fn act(&mut self, env: &Environment, last: Option<&SlotOutcome>, _: &mut SimRng, out: &mut Vec<Action>) -> Result<()> {
        out.clear();
        for m in 0..env.num_agents() {
            let (a, st) = policy_csi_ia(env.observe(m)?, feedback(last, m), self.states[m]);
            self.states[m] = st;
            out.push(a);
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct Genie;

impl Policy for Genie {
    fn out_of_band(&self) -> OutOfBand {
        OutOfBand { csi_every_slot: true, allocate_every_slot: true }
    }

    fn begin_episode(&mut self, _: usize) {}

    fn act(&mut self, env: &Environment, _: Option<&SlotOutcome>, _: &mut SimRng, out: &mut Vec<Action>) -> Result<()> {
        out.clear();
        for m in 0..env.num_agents() {
            out.push(policy_genie(env.observe(m)?));
        }
        Ok(())
    }
}

/// Runs `policy` for one episode. `on_slot` sees the environment after each
/// slot together with that slot's outcome.
pub fn run_episode<F>(
    cfg: EnvConfig,
    policy: &mut dyn Policy,
    env_rng: SimRng,
    policy_rng: &mut SimRng,
    mut on_slot: F,
) -> Result<EpisodeStats>
where
    F: FnMut(&Environment, &SlotOutcome),
{
    let mut env = Environment::new(cfg, policy.out_of_band(), env_rng)?;
    policy.begin_episode(env.num_agents());
    let mut actions = Vec::with_capacity(env.num_agents());
    let mut last: Option<SlotOutcome> = None;
    while !env.is_done() {
        policy.act(&env, last.as_ref(), policy_rng, &mut actions)?;
        let out = env.step(&actions)?;
        on_slot(&env, &out);
        last = Some(out);
    }
    Ok(env.stats().clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Benchmark {
    Fixed,
    Random,
    InterferenceAware,
    CsiInterferenceAware,
    Genie,
}

impl Benchmark {
    pub const ALL: [Benchmark; 5] = [
        Benchmark::Fixed,
        Benchmark::Random,
        Benchmark::InterferenceAware,
        Benchmark::CsiInterferenceAware,
        Benchmark::Genie,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Fixed => "fixed",
            Benchmark::Random => "random",
            Benchmark::InterferenceAware => "ia",
            Benchmark::CsiInterferenceAware => "csi-ia",
            Benchmark::Genie => "genie",
        }
    }

    pub fn policy(self) -> Box<dyn Policy + Send> {
        match self {
            Benchmark::Fixed => Box::new(Fixed),
            Benchmark::Random => Box::new(RandomAction),
            Benchmark::InterferenceAware => Box::<InterferenceAware>::default(),
            Benchmark::CsiInterferenceAware => Box::<CsiInterferenceAware>::default(),
            Benchmark::Genie => Box::new(Genie),
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Benchmark::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or(Error::Config { key: "policy", reason: "unknown benchmark policy" })
    }
}
