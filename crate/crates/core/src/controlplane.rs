//! Central controller: consumes uplink signaling, keeps a CSI cache and
//! issues downlink power-coefficient grants.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::radio::{ChannelMatrix, RadioConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum UplinkKind {
    /// Power allocation request.
    Par,
    /// CSI report: the gains into the sender's device (`incoming`, column)
    /// and out of the sender's AP (`outgoing`, row).
    CsiReport { incoming: Vec<f64>, outgoing: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct UplinkMessage {
    pub sender: usize,
    pub kind: UplinkKind,
}

impl UplinkMessage {
    pub fn par(sender: usize) -> Self {
        Self { sender, kind: UplinkKind::Par }
    }

    pub fn csi(sender: usize, h: &ChannelMatrix) -> Self {
        Self {
            sender,
            kind: UplinkKind::CsiReport { incoming: h.incoming(sender), outgoing: h.outgoing(sender) },
        }
    }

    pub fn is_par(&self) -> bool {
        matches!(self.kind, UplinkKind::Par)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DownlinkMessage {
    pub target: usize,
    /// In `[0, 1]`; maps linearly (in Watts) between the min and max transmit power.
    pub power_coefficient: f64,
}

/// Transmit power in Watts for a grant coefficient.
pub fn coefficient_to_power_w(coeff: f64, cfg: &RadioConfig) -> f64 {
    let (lo, hi) = (cfg.p_min_w(), cfg.p_max_w());
    lo + coeff.clamp(0.0, 1.0) * (hi - lo)
}

pub fn power_to_coefficient(p_w: f64, cfg: &RadioConfig) -> f64 {
    let (lo, hi) = (cfg.p_min_w(), cfg.p_max_w());
    if hi > lo {
        ((p_w - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        1.0
    }
}

/// Power coefficients at the start of an episode: everyone at full power.
pub fn initial_allocation(num_subnetworks: usize) -> Vec<f64> {
    vec![1.0; num_subnetworks]
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocatorConfig {
    /// Extra SINR headroom above the threshold SINR, dB.
    pub target_margin_db: f64,
    pub max_iterations: usize,
    /// Convergence tolerance on the largest per-AP power change, Watts.
    pub tolerance_w: f64,
}

impl Default for AllocatorConfig {
    fn default() -> Self {
        Self { target_margin_db: 0.1, max_iterations: 200, tolerance_w: 1e-9 }
    }
}

impl AllocatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_margin_db.is_finite() && self.target_margin_db >= 0.0) {
            return Err(Error::Config { key: "allocation_margin_db", reason: "must be >= 0" });
        }
        if self.max_iterations == 0 {
            return Err(Error::Config { key: "allocator_max_iterations", reason: "must be >= 1" });
        }
        if !(self.tolerance_w.is_finite() && self.tolerance_w > 0.0) {
            return Err(Error::Config { key: "allocator_tolerance_w", reason: "must be > 0" });
        }
        Ok(())
    }

    pub fn target_sinr(&self, radio: &RadioConfig) -> f64 {
        radio.threshold_sinr() * math::db_to_lin(self.target_margin_db)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub powers_w: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Target-SINR fixed-point power control.
///
/// Iterates `p_m <- clip(target * (I_m(p) + noise) / h_mm, p_min, p_max)`
/// synchronously, starting from `p_max`. From that start the iterates decrease
/// monotonically towards the least fixed point. Non-convergent instances
/// return the final clipped iterate.
pub fn allocate_power_w(
    h: &ChannelMatrix,
    noise_w: f64,
    target_sinr: f64,
    radio: &RadioConfig,
    cfg: &AllocatorConfig,
) -> Allocation {
    let n = h.size();
    let (lo, hi) = (radio.p_min_w(), radio.p_max_w());
    let mut p = vec![hi; n];
    let mut next = vec![0.0; n];
    for it in 1..=cfg.max_iterations {
        let mut delta: f64 = 0.0;
        for m in 0..n {
            let interference: f64 = (0..n).filter(|&l| l != m).map(|l| p[l] * h.gain(l, m)).sum();
            let want = target_sinr * (interference + noise_w) / h.gain(m, m);
            next[m] = want.clamp(lo, hi);
            delta = delta.max((next[m] - p[m]).abs());
        }
        core::mem::swap(&mut p, &mut next);
        if delta < cfg.tolerance_w {
            return Allocation { powers_w: p, iterations: it, converged: true };
        }
    }
    Allocation { powers_w: p, iterations: cfg.max_iterations, converged: false }
}

/// [`allocate_power_w`] expressed as grant coefficients.
pub fn allocate_power(
    h: &ChannelMatrix,
    noise_w: f64,
    radio: &RadioConfig,
    cfg: &AllocatorConfig,
) -> Vec<f64> {
    allocate_power_w(h, noise_w, cfg.target_sinr(radio), radio, cfg)
        .powers_w
        .into_iter()
        .map(|p| power_to_coefficient(p, radio))
        .collect()
}

/// Last reported gains with per-entry age in slots (`None`: never reported).
#[derive(Debug, Clone, PartialEq)]
pub struct CsiCache {
    size: usize,
    gains: Vec<f64>,
    age: Vec<Option<u32>>,
}

impl CsiCache {
    pub fn new(size: usize) -> Self {
        Self { size, gains: vec![0.0; size * size], age: vec![None; size * size] }
    }

    pub fn is_fully_populated(&self) -> bool {
        self.age.iter().all(Option::is_some)
    }

    pub fn age(&self, from: usize, to: usize) -> Option<u32> {
        self.age[from * self.size + to]
    }

    fn tick(&mut self) {
        for a in self.age.iter_mut().flatten() {
            *a = a.saturating_add(1);
        }
    }

    fn store(&mut self, from: usize, to: usize, g: f64) {
        let i = from * self.size + to;
        self.gains[i] = g;
        self.age[i] = Some(0);
    }

    fn refresh(&mut self, sender: usize, incoming: &[f64], outgoing: &[f64]) -> Result<()> {
        for v in [incoming, outgoing] {
            if v.len() != self.size {
                return Err(Error::DimensionMismatch { expected: self.size, got: v.len() });
            }
        }
        for (l, &g) in incoming.iter().enumerate() {
            self.store(l, sender, g);
        }
        for (m, &g) in outgoing.iter().enumerate() {
            self.store(sender, m, g);
        }
        Ok(())
    }

    /// The cached matrix, once every entry has been reported.
    pub fn matrix(&self) -> Option<ChannelMatrix> {
        if self.is_fully_populated() {
            ChannelMatrix::from_rows(self.size, self.gains.clone()).ok()
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SignalingCounters {
    pub uplink_csi: u64,
    pub uplink_par: u64,
    pub downlink_grants: u64,
}

impl SignalingCounters {
    pub fn total(&self) -> u64 {
        self.uplink_csi + self.uplink_par + self.downlink_grants
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub csi_cache: CsiCache,
    pub pending_pars: Vec<bool>,
    pub current_grants: Vec<f64>,
    pub counters: SignalingCounters,
}

impl ControllerState {
    pub fn new(num_subnetworks: usize) -> Self {
        Self {
            csi_cache: CsiCache::new(num_subnetworks),
            pending_pars: vec![false; num_subnetworks],
            current_grants: initial_allocation(num_subnetworks),
            counters: SignalingCounters::default(),
        }
    }

    pub fn num_subnetworks(&self) -> usize {
        self.pending_pars.len()
    }

    /// Processes one slot of uplink traffic.
    ///
    /// Cache ages advance by one, CSI reports are applied before PARs (so the
    /// result does not depend on message order), and if any PAR is pending,
    /// or `force_allocation` is set, and the cache is fully populated, powers
    /// are reallocated and a grant goes to every subnetwork. PARs that arrive
    /// before the cache is complete stay pending.
    ///
    /// Each subnetwork may send at most one message of each kind per slot.
    pub fn step(
        &mut self,
        uplinks: &[UplinkMessage],
        force_allocation: bool,
        noise_w: f64,
        radio: &RadioConfig,
        alloc_cfg: &AllocatorConfig,
    ) -> Result<Vec<DownlinkMessage>> {
        let n = self.num_subnetworks();
        let mut seen_csi = vec![false; n];
        let mut seen_par = vec![false; n];
        for u in uplinks {
            if u.sender >= n {
                return Err(Error::IndexOutOfRange { index: u.sender, len: n });
            }
            let seen = if u.is_par() { &mut seen_par } else { &mut seen_csi };
            if core::mem::replace(&mut seen[u.sender], true) {
                return Err(Error::Domain("duplicate uplink message kind from one sender in a slot"));
            }
        }

        self.csi_cache.tick();
        for u in uplinks {
            if let UplinkKind::CsiReport { incoming, outgoing } = &u.kind {
                self.csi_cache.refresh(u.sender, incoming, outgoing)?;
                self.counters.uplink_csi += 1;
            }
        }
        for u in uplinks.iter().filter(|u| u.is_par()) {
            self.pending_pars[u.sender] = true;
            self.counters.uplink_par += 1;
        }

        let wanted = force_allocation || self.pending_pars.iter().any(|&p| p);
        let Some(h) = wanted.then(|| self.csi_cache.matrix()).flatten() else {
            return Ok(Vec::new());
        };
        self.current_grants = allocate_power(&h, noise_w, radio, alloc_cfg);
        self.pending_pars.iter_mut().for_each(|p| *p = false);
        self.counters.downlink_grants += n as u64;
        Ok(self
            .current_grants
            .iter()
            .enumerate()
            .map(|(target, &power_coefficient)| DownlinkMessage { target, power_coefficient })
            .collect())
    }
}
