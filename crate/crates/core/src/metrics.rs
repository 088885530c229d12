//! Episode statistics and the three evaluation metrics: success rate,
//! signaling overhead and action-selection probabilities.

use alloc::vec;
use alloc::vec::Vec;

use crate::env::{Action, AgentOutcome};
use crate::world::PacketBuffer;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AgentStats {
    pub successes: u32,
    pub transmissions: u32,
    /// 1-based slot at which the buffer emptied.
    pub flush_slot: Option<u32>,
    pub csi_count: u32,
    pub par_count: u32,
    pub grants_received: u32,
    /// Indexed by [`Action::index`].
    pub action_counts: [u32; Action::COUNT],
    pub final_occupancy: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeStats {
    pub agents: Vec<AgentStats>,
    pub steps: u32,
}

impl EpisodeStats {
    pub fn new(num_agents: usize) -> Self {
        Self { agents: vec![AgentStats::default(); num_agents], steps: 0 }
    }

    /// Folds one slot of outcomes in.
    pub fn record(&mut self, outcomes: &[AgentOutcome], buffers: &[PacketBuffer]) {
        self.steps += 1;
        for ((st, o), b) in self.agents.iter_mut().zip(outcomes).zip(buffers) {
            st.transmissions += u32::from(o.transmitted);
            st.successes += u32::from(o.success);
            st.csi_count += u32::from(o.uplink.csi);
            st.par_count += u32::from(o.uplink.par);
            st.grants_received += u32::from(o.grant.is_some());
            st.action_counts[o.action.index()] += 1;
            st.flush_slot = b.flush_slot();
            st.final_occupancy = b.occupancy();
        }
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }
}

/// Successful deliveries over `min(T_flush, N_steps)`, clamped to `[0, 1]`.
pub fn success_rate(st: &EpisodeStats, agent: usize) -> Result<f64> {
    let a = st
        .agents
        .get(agent)
        .ok_or(Error::IndexOutOfRange { index: agent, len: st.agents.len() })?;
    Ok(success_ratio(a.successes, a.flush_slot, st.steps))
}

/// The success-rate formula on raw counts.
pub fn success_ratio(successes: u32, flush_slot: Option<u32>, steps: u32) -> f64 {
    let denom = flush_slot.map_or(steps, |f| f.min(steps)).max(1);
    (f64::from(successes) / f64::from(denom)).clamp(0.0, 1.0)
}

/// Every CSI, PAR and grant message of the episode.
pub fn signaling_overhead(st: &EpisodeStats) -> u64 {
    st.agents
        .iter()
        .map(|a| u64::from(a.csi_count) + u64::from(a.par_count) + u64::from(a.grants_received))
        .sum()
}

/// Empirical action frequencies `(idle, tx, csi, par)`.
pub fn action_probabilities(counts: &[u64; Action::COUNT]) -> Result<[f64; Action::COUNT]> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::Domain("action probabilities of an empty trace"));
    }
    Ok(counts.map(|c| c as f64 / total as f64))
}

/// Action counts summed over agents.
pub fn action_counts(st: &EpisodeStats) -> [u64; Action::COUNT] {
    let mut out = [0u64; Action::COUNT];
    for a in &st.agents {
        for (o, c) in out.iter_mut().zip(a.action_counts) {
            *o += u64::from(c);
        }
    }
    out
}

/// Right-continuous empirical CDF as `(value, F(value))` steps, one per
/// distinct value, ascending. The last fraction is exactly 1.
pub fn empirical_cdf(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::Domain("empirical CDF of an empty sample"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Domain("empirical CDF of a NaN sample"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = frac,
            _ => out.push((*x, frac)),
        }
    }
    Ok(out)
}

/// `F(x)` of an empirical CDF built by [`empirical_cdf`].
pub fn cdf_at(cdf: &[(f64, f64)], x: f64) -> f64 {
    cdf.iter().take_while(|(v, _)| *v <= x).last().map_or(0.0, |s| s.1)
}

/// Smallest sample value whose CDF reaches `q` (the 50th percentile for `q = 0.5`).
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    let cdf = empirical_cdf(values)?;
    Ok(cdf.iter().find(|(_, f)| *f >= q).map_or(cdf[cdf.len() - 1].0, |s| s.0))
}

pub fn median(values: &[f64]) -> Result<f64> {
    quantile(values, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(successes: u32, flush: Option<u32>, steps: u32) -> EpisodeStats {
        let a = AgentStats { successes, transmissions: successes, flush_slot: flush, ..Default::default() };
        EpisodeStats { agents: vec![a], steps }
    }

    #[test]
    fn success_rate_examples() {
        let r = success_rate(&stats(100, Some(110), 300), 0).unwrap();
        assert!((r - 100.0 / 110.0).abs() < 1e-15);
        assert!((success_rate(&stats(60, None, 300), 0).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(success_rate(&stats(0, None, 300), 0).unwrap(), 0.0);
        assert!(success_rate(&stats(0, None, 300), 1).is_err());
    }

    #[test]
    fn cdf_examples() {
        let c = empirical_cdf(&[3.0, 1.0, 2.0]).unwrap();
        assert!((cdf_at(&c, 2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.last().unwrap().1, 1.0);
        let c = empirical_cdf(&[0.5; 7]).unwrap();
        assert_eq!(c, vec![(0.5, 1.0)]);
        assert!(empirical_cdf(&[]).is_err());
        assert_eq!(median(&[0.1, 0.9, 0.5, 0.7]).unwrap(), 0.5);
    }

    #[test]
    fn action_probabilities_sum_to_one() {
        let p = action_probabilities(&[0, 300, 0, 0]).unwrap();
        assert_eq!(p, [0.0, 1.0, 0.0, 0.0]);
        assert!(action_probabilities(&[0; 4]).is_err());
    }

    #[test]
    fn overhead_sums_everything() {
        let mut st = EpisodeStats::new(2);
        st.agents[0].csi_count = 3;
        st.agents[0].par_count = 3;
        st.agents[1].grants_received = 4;
        assert_eq!(signaling_overhead(&st), 10);
    }
}
