//! Slotted multi-agent environment: one AP agent per subnetwork, a shared
//! data channel, and the signaling plane to the central controller.
//!
//! Per slot, in order: mobility, channel draw, uplink delivery and controller
//! step (grants apply to this slot's data phase), data transmissions, buffer
//! pops, shared reward, history update.

use alloc::vec;
use alloc::vec::Vec;

use crate::controlplane::{coefficient_to_power_w, AllocatorConfig, ControllerState, UplinkMessage};
use crate::metrics::EpisodeStats;
use crate::radio::{self, ChannelMatrix, Delay, RadioConfig, ShadowingMap};
use crate::seed::{self, Purpose, SimRng};
use crate::world::{self, PacketBuffer, Topology, WorldConfig};
use crate::{math, Error, Result};

/// Joint environment/communication action of one agent in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Idle = 0,
    Transmit = 1,
    SendCsi = 2,
    SendPar = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Idle, Action::Transmit, Action::SendCsi, Action::SendPar];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Idle => "idle",
            Action::Transmit => "tx",
            Action::SendCsi => "csi",
            Action::SendPar => "par",
        }
    }
}

/// Signaling that happens without consuming the agent's slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OutOfBand {
    /// Every agent reports CSI every slot.
    pub csi_every_slot: bool,
    /// The controller reallocates every slot whether or not a PAR arrived.
    pub allocate_every_slot: bool,
}

/// Uplink messages an agent actually sent in a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct UplinkSent {
    pub csi: bool,
    pub par: bool,
}

impl UplinkSent {
    pub fn label(self) -> &'static str {
        match (self.csi, self.par) {
            (false, false) => "none",
            (true, false) => "csi",
            (false, true) => "par",
            (true, true) => "csi+par",
        }
    }

    pub fn count(self) -> u64 {
        u64::from(self.csi) + u64::from(self.par)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub world: WorldConfig,
    pub radio: RadioConfig,
    pub allocator: AllocatorConfig,
    pub steps_per_episode: u32,
    /// Orthogonal data channels; subnetwork `m` uses channel `m % num_channels`.
    pub num_channels: usize,
    /// History length `q` of the agent state.
    pub history_len: usize,
    /// Reward for a successful transmission.
    pub reward_success: f64,
    /// Reward for a failed transmission (0 or negative).
    pub reward_failure: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            radio: RadioConfig::default(),
            allocator: AllocatorConfig::default(),
            steps_per_episode: 300,
            num_channels: 1,
            history_len: 4,
            reward_success: 1.0,
            reward_failure: 0.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.radio.validate()?;
        self.allocator.validate()?;
        if self.steps_per_episode == 0 {
            return Err(Error::Config { key: "steps_per_episode", reason: "must be >= 1" });
        }
        if self.num_channels == 0 {
            return Err(Error::Config { key: "num_channels", reason: "must be >= 1" });
        }
        if self.history_len == 0 {
            return Err(Error::Config { key: "history_len", reason: "must be >= 1" });
        }
        if !self.reward_success.is_finite() {
            return Err(Error::Config { key: "reward_success", reason: "must be finite" });
        }
        if !(self.reward_failure.is_finite() && self.reward_failure <= 0.0) {
            return Err(Error::Config { key: "reward_failure", reason: "must be finite and <= 0" });
        }
        Ok(())
    }

    pub fn num_agents(&self) -> usize {
        self.world.num_subnetworks
    }

    /// Length of [`flatten_state`]'s output.
    pub fn state_dim(&self) -> usize {
        self.history_len * HistoryEntry::WIDTH
    }
}

/// One step of an agent's history.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HistoryEntry {
    /// Buffer occupancy over capacity.
    pub observation: f64,
    pub action: Option<Action>,
    /// `None` only for the reset entry.
    pub uplink: Option<UplinkSent>,
    /// Grant coefficient received this slot; `None` encodes as -1, except in
    /// the reset entry which is all zeros apart from the observation.
    pub downlink: Option<f64>,
    reset: bool,
}

impl HistoryEntry {
    /// observation, action one-hot (4), uplink one-hot (none, csi, par), downlink.
    pub const WIDTH: usize = 1 + Action::COUNT + 3 + 1;

    fn fresh(observation: f64) -> Self {
        Self { observation, reset: true, ..Default::default() }
    }

    fn write(&self, out: &mut [f64]) {
        out.fill(0.0);
        out[0] = self.observation;
        if let Some(a) = self.action {
            out[1 + a.index()] = 1.0;
        }
        if let Some(u) = self.uplink {
            out[5] = f64::from(u8::from(!u.csi && !u.par));
            out[6] = f64::from(u8::from(u.csi));
            out[7] = f64::from(u8::from(u.par));
        }
        out[8] = match self.downlink {
            Some(c) => c,
            None if self.reset => 0.0,
            None => -1.0,
        };
    }
}

/// The last `q` history entries of one agent, newest first when flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentHistory {
    entries: Vec<HistoryEntry>,
    /// Index of the newest entry.
    head: usize,
}

impl AgentHistory {
    pub fn new(len: usize, observation: f64) -> Self {
        let mut entries = vec![HistoryEntry::fresh(0.0); len];
        entries[0] = HistoryEntry::fresh(observation);
        Self { entries, head: 0 }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, e: HistoryEntry) {
        self.head = (self.head + 1) % self.entries.len();
        self.entries[self.head] = e;
    }

    pub fn newest(&self) -> &HistoryEntry {
        &self.entries[self.head]
    }

    /// Entries from newest to oldest.
    pub fn iter(&self) -> impl Iterator<Item = &HistoryEntry> {
        let n = self.entries.len();
        (0..n).map(move |k| &self.entries[(self.head + n - k) % n])
    }
}

/// Flattens a history into a `q * 9` feature vector, newest entry first.
/// Each block is `[obs, idle, tx, csi, par, up_none, up_csi, up_par, grant]`.
pub fn flatten_state(h: &AgentHistory) -> Vec<f64> {
    let mut out = vec![0.0; h.len() * HistoryEntry::WIDTH];
    flatten_state_into(h, &mut out);
    out
}

pub fn flatten_state_into(h: &AgentHistory, out: &mut [f64]) {
    for (e, chunk) in h.iter().zip(out.chunks_exact_mut(HistoryEntry::WIDTH)) {
        e.write(chunk);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentOutcome {
    pub action: Action,
    pub transmitted: bool,
    pub success: bool,
    /// Power used for the data transmission (0 if none).
    pub power_w: f64,
    pub sinr: f64,
    pub rate_bps: f64,
    /// `None` when nothing was transmitted.
    pub delay: Option<Delay>,
    pub uplink: UplinkSent,
    pub grant: Option<f64>,
    /// Occupancy after this slot.
    pub buffer: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    /// 1-based slot index.
    pub slot: u32,
    pub agents: Vec<AgentOutcome>,
    /// Shared reward received by every agent.
    pub reward: f64,
    pub uplink_csi: u64,
    pub uplink_par: u64,
    pub downlink_grants: u64,
    pub done: bool,
}

impl SlotOutcome {
    pub fn signaling(&self) -> u64 {
        self.uplink_csi + self.uplink_par + self.downlink_grants
    }
}

/// Shared reward: the mean over agents of `z * 1[success]` (plus the failure
/// penalty for failed transmissions).
pub fn reward(transmitted: &[bool], success: &[bool], cfg: &EnvConfig) -> f64 {
    if success.is_empty() {
        return 0.0;
    }
    let total: f64 = transmitted
        .iter()
        .zip(success)
        .map(|(&tx, &ok)| match (tx, ok) {
            (_, true) => cfg.reward_success,
            (true, false) => cfg.reward_failure,
            (false, false) => 0.0,
        })
        .sum();
    total / success.len() as f64
}

#[derive(Debug, Clone)]
pub struct Environment {
    cfg: EnvConfig,
    oob: OutOfBand,
    rng: SimRng,
    noise_w: f64,
    topology: Topology,
    shadowing: ShadowingMap,
    buffers: Vec<PacketBuffer>,
    controller: ControllerState,
    histories: Vec<AgentHistory>,
    channel: Option<ChannelMatrix>,
    stats: EpisodeStats,
    slot: u32,
    done: bool,
}

impl Environment {
    /// Starts an episode: fresh deployment and shadowing, full buffers,
    /// full-power initial grants, zeroed histories.
    pub fn new(cfg: EnvConfig, oob: OutOfBand, mut rng: SimRng) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.num_agents();
        let topology = world::deploy(&cfg.world, &mut rng)?;
        let shadowing = ShadowingMap::draw(n, &cfg.radio, &mut rng);
        let buffers = vec![PacketBuffer::new(cfg.world.buffer_capacity); n];
        let histories = (0..n).map(|_| AgentHistory::new(cfg.history_len, 1.0)).collect();
        Ok(Self {
            noise_w: radio::noise_power_w(&cfg.radio),
            controller: ControllerState::new(n),
            stats: EpisodeStats::new(n),
            cfg,
            oob,
            rng,
            topology,
            shadowing,
            buffers,
            histories,
            channel: None,
            slot: 0,
            done: false,
        })
    }

    /// [`Environment::new`] on episode 0's environment stream of `seed`.
    pub fn reset(cfg: EnvConfig, oob: OutOfBand, seed: u64) -> Result<Self> {
        Self::new(cfg, oob, seed::stream(seed, 0, Purpose::Environment))
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn num_agents(&self) -> usize {
        self.buffers.len()
    }

    pub fn slot(&self) -> u32 {
        self.slot
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn controller(&self) -> &ControllerState {
        &self.controller
    }

    pub fn buffers(&self) -> &[PacketBuffer] {
        &self.buffers
    }

    pub fn noise_w(&self) -> f64 {
        self.noise_w
    }

    /// Channel drawn in the most recent slot.
    pub fn channel(&self) -> Option<&ChannelMatrix> {
        self.channel.as_ref()
    }

    pub fn stats(&self) -> &EpisodeStats {
        &self.stats
    }

    /// Current transmit power of every AP in Watts.
    pub fn powers_w(&self) -> Vec<f64> {
        self.controller
            .current_grants
            .iter()
            .map(|&c| coefficient_to_power_w(c, &self.cfg.radio))
            .collect()
    }

    /// Buffer occupancy of agent `m` over capacity.
    pub fn observe(&self, m: usize) -> Result<f64> {
        let b = self
            .buffers
            .get(m)
            .ok_or(Error::IndexOutOfRange { index: m, len: self.buffers.len() })?;
        Ok(f64::from(b.occupancy()) / f64::from(b.capacity()))
    }

    pub fn history(&self, m: usize) -> &AgentHistory {
        &self.histories[m]
    }

    pub fn histories(&self) -> &[AgentHistory] {
        &self.histories
    }

    pub fn state_vector(&self, m: usize) -> Vec<f64> {
        flatten_state(&self.histories[m])
    }

    /// Advances one slot.
    ///
    /// A `Transmit` on an empty buffer is treated as idle. Signaling actions
    /// occupy the agent's slot, so a signaling agent never transmits data in
    /// the same slot.
    pub fn step(&mut self, actions: &[Action]) -> Result<SlotOutcome> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let n = self.num_agents();
        if actions.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: actions.len() });
        }
        self.slot += 1;
        let slot = self.slot;

        self.topology.step_mobility(self.cfg.world.slot_s)?;
        let devices = self.topology.device_positions();
        let h = radio::draw_channel(
            &self.topology.ap_positions,
            &devices,
            &self.shadowing,
            &self.cfg.radio,
            &mut self.rng,
        )?;

        let mut uplinks = Vec::new();
        let mut sent = vec![UplinkSent::default(); n];
        for (m, a) in actions.iter().enumerate() {
            if *a == Action::SendCsi || self.oob.csi_every_slot {
                uplinks.push(UplinkMessage::csi(m, &h));
                sent[m].csi = true;
            }
            if *a == Action::SendPar {
                uplinks.push(UplinkMessage::par(m));
                sent[m].par = true;
            }
        }
        let before = self.controller.counters;
        let grants = self.controller.step(
            &uplinks,
            self.oob.allocate_every_slot,
            self.noise_w,
            &self.cfg.radio,
            &self.cfg.allocator,
        )?;
        let after = self.controller.counters;
        let mut grant_of = vec![None; n];
        for g in &grants {
            grant_of[g.target] = Some(g.power_coefficient);
        }

        let transmitted: Vec<bool> = actions
            .iter()
            .zip(&self.buffers)
            .map(|(a, b)| *a == Action::Transmit && !b.is_empty())
            .collect();
        let powers = self.powers_w();
        let tx_powers: Vec<f64> =
            powers.iter().zip(&transmitted).map(|(&p, &tx)| if tx { p } else { 0.0 }).collect();

        let threshold = self.cfg.radio.rate_threshold_bps();
        let k = self.cfg.num_channels;
        let mut masked = vec![0.0; n];
        let mut success = vec![false; n];
        let mut agents = Vec::with_capacity(n);
        for m in 0..n {
            let (mut sinr, mut rate, mut delay) = (0.0, 0.0, None);
            if transmitted[m] {
                let p = if k == 1 {
                    &tx_powers
                } else {
                    for (l, v) in masked.iter_mut().enumerate() {
                        *v = if l % k == m % k { tx_powers[l] } else { 0.0 };
                    }
                    &masked
                };
                sinr = radio::sinr(&h, p, m, self.noise_w)?.sinr;
                rate = radio::link_rate_bps(sinr, &self.cfg.radio);
                let wait = self.buffers[m].wait_s(slot, self.cfg.world.slot_s);
                delay = Some(radio::packet_delay_s(rate, wait, &self.cfg.radio));
                if rate >= threshold {
                    success[m] = true;
                    self.buffers[m].pop_on_success(slot)?;
                }
            }
            agents.push(AgentOutcome {
                action: actions[m],
                transmitted: transmitted[m],
                success: success[m],
                power_w: tx_powers[m],
                sinr,
                rate_bps: rate,
                delay,
                uplink: sent[m],
                grant: grant_of[m],
                buffer: self.buffers[m].occupancy(),
            });
        }

        let r = reward(&transmitted, &success, &self.cfg);
        for (m, o) in agents.iter().enumerate() {
            let obs = f64::from(o.buffer) / f64::from(self.cfg.world.buffer_capacity);
            self.histories[m].push(HistoryEntry {
                observation: obs,
                action: Some(o.action),
                uplink: Some(o.uplink),
                downlink: o.grant,
                reset: false,
            });
        }
        self.stats.record(&agents, &self.buffers);

        self.done = slot >= self.cfg.steps_per_episode || self.buffers.iter().all(PacketBuffer::is_empty);
        self.channel = Some(h);
        Ok(SlotOutcome {
            slot,
            agents,
            reward: r,
            uplink_csi: after.uplink_csi - before.uplink_csi,
            uplink_par: after.uplink_par - before.uplink_par,
            downlink_grants: after.downlink_grants - before.downlink_grants,
            done: self.done,
        })
    }
}

/// SINR in dB, with `-inf` for a zero SINR.
pub fn sinr_db(sinr: f64) -> f64 {
    if sinr > 0.0 {
        math::lin_to_db(sinr)
    } else {
        f64::NEG_INFINITY
    }
}
