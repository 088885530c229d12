//! Offline recomputation of episode statistics from a trajectory CSV.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Result};
use subnet_core::env::Action;
use subnet_core::metrics::{AgentStats, EpisodeStats};

use crate::experiment::TraceRow;

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

fn action_from_name(name: &str) -> Result<Action> {
    match Action::ALL.into_iter().find(|a| a.name() == name) {
        Some(a) => Ok(a),
        None => bail!("unknown action `{name}` in trace"),
    }
}

/// Rebuilds each episode's [`EpisodeStats`] from its trace rows alone.
pub fn stats_from_trace(rows: &[TraceRow]) -> Result<BTreeMap<u64, EpisodeStats>> {
    let mut out: BTreeMap<u64, EpisodeStats> = BTreeMap::new();
    for r in rows {
        let st = out.entry(r.episode).or_insert_with(|| EpisodeStats::new(0));
        if st.agents.len() <= r.agent {
            st.agents.resize(r.agent + 1, AgentStats::default());
        }
        st.steps = st.steps.max(r.slot);
        let a = &mut st.agents[r.agent];
        let action = action_from_name(&r.action)?;
        a.action_counts[action.index()] += 1;
        let success = r.success == 1;
        // a failed attempt leaves a nonempty buffer; transmit on empty is idle
        let transmitted = action == Action::Transmit && (success || r.buffer > 0);
        a.transmissions += u32::from(transmitted);
        a.successes += u32::from(success);
        match r.uplink_kind.as_str() {
            "none" => {}
            "csi" => a.csi_count += 1,
            "par" => a.par_count += 1,
            "csi+par" => {
                a.csi_count += 1;
                a.par_count += 1;
            }
            other => bail!("unknown uplink kind `{other}` in trace"),
        }
        a.grants_received += u32::from(r.grant_coeff.is_some());
        if r.buffer == 0 && a.flush_slot.is_none() {
            a.flush_slot = Some(r.slot);
        }
        a.final_occupancy = r.buffer;
    }
    Ok(out)
}
