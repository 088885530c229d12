use rand::Rng;
use subnet_core::env::{Action, EnvConfig, Environment, OutOfBand, SlotOutcome};
use subnet_core::radio;
use subnet_core::seed::{self, Purpose};
use subnet_core::world::WorldConfig;

fn config(n: usize, k: usize, capacity: u32) -> EnvConfig {
    EnvConfig {
        world: WorldConfig { num_subnetworks: n, buffer_capacity: capacity, ..WorldConfig::default() },
        num_channels: k,
        ..EnvConfig::default()
    }
}

/// Plays a random episode, checking per-slot invariants along the way.
fn play(cfg: EnvConfig, oob: OutOfBand, seed: u64) -> (Environment, Vec<SlotOutcome>) {
    let mut env = Environment::reset(cfg.clone(), oob, seed).unwrap();
    let mut rng = seed::stream(seed, 0, Purpose::Policy);
    let n = env.num_agents();
    let k = cfg.num_channels;
    let mut outs = Vec::new();
    while !env.is_done() {
        let actions: Vec<Action> = (0..n).map(|_| Action::ALL[rng.random_range(0..Action::COUNT)]).collect();
        let before: Vec<u32> = env.buffers().iter().map(|b| b.occupancy()).collect();
        let out = env.step(&actions).unwrap();
        let h = env.channel().unwrap();
        let powers = env.powers_w();
        let mut successes = 0;
        for (m, a) in out.agents.iter().enumerate() {
            // one use of the slot per agent
            assert_eq!(a.transmitted, actions[m] == Action::Transmit && before[m] > 0);
            if !oob.csi_every_slot {
                assert!(a.uplink.count() <= 1);
                assert!(!(a.transmitted && a.uplink.count() > 0));
            }
            assert_eq!(a.uplink.par, actions[m] == Action::SendPar);
            assert!(a.success <= a.transmitted);
            assert_eq!(a.buffer, before[m] - u32::from(a.success));
            assert_eq!(a.power_w > 0.0, a.transmitted);
            if a.transmitted {
                // only co-channel transmitters interfere
                let p: Vec<f64> = (0..n)
                    .map(|l| if out.agents[l].transmitted && l % k == m % k { powers[l] } else { 0.0 })
                    .collect();
                let want = radio::sinr(h, &p, m, env.noise_w()).unwrap().sinr;
                assert!((a.sinr - want).abs() <= 1e-12 * want.abs());
                assert_eq!(a.success, a.rate_bps >= cfg.radio.rate_threshold_bps());
            }
            successes += u32::from(a.success);
        }
        assert!((out.reward - f64::from(successes) / n as f64).abs() < 1e-15);
        let csi: u64 = out.agents.iter().map(|a| u64::from(a.uplink.csi)).sum();
        let par: u64 = out.agents.iter().map(|a| u64::from(a.uplink.par)).sum();
        assert_eq!((out.uplink_csi, out.uplink_par), (csi, par));
        assert_eq!(out.downlink_grants, out.agents.iter().filter(|a| a.grant.is_some()).count() as u64);
        assert!(out.downlink_grants == 0 || out.downlink_grants == n as u64);
        outs.push(out);
    }
    (env, outs)
}

#[test]
fn random_play_invariants_and_conservation() {
    for (seed, n, k) in [(1, 10, 1), (2, 4, 1), (3, 6, 2), (4, 1, 1), (5, 7, 3)] {
        for oob in [OutOfBand::default(), OutOfBand { csi_every_slot: true, allocate_every_slot: true }] {
            let cfg = config(n, k, 40);
            let (env, outs) = play(cfg.clone(), oob, seed);
            let stats = env.stats();
            assert_eq!(stats.steps as usize, outs.len());
            assert!(stats.steps <= cfg.steps_per_episode);
            for (m, a) in stats.agents.iter().enumerate() {
                assert_eq!(a.successes + a.final_occupancy, cfg.world.buffer_capacity, "agent {m}");
                assert_eq!(a.action_counts.iter().sum::<u32>(), stats.steps);
            }
        }
    }
}

#[test]
fn episode_ends_at_horizon_or_flush() {
    let (env, outs) = play(config(3, 1, 5), OutOfBand::default(), 11);
    let last = outs.last().unwrap();
    assert!(last.done);
    assert!(env.buffers().iter().all(|b| b.is_empty()) || last.slot == env.config().steps_per_episode);
    assert!(outs[..outs.len() - 1].iter().all(|o| !o.done));
}

#[test]
fn same_seed_same_episode() {
    let cfg = config(5, 1, 100);
    let (_, a) = play(cfg.clone(), OutOfBand::default(), 42);
    let (_, b) = play(cfg.clone(), OutOfBand::default(), 42);
    let (_, c) = play(cfg, OutOfBand::default(), 43);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn grants_need_a_full_cache() {
    let n = 3;
    let mut env = Environment::reset(config(n, 1, 100), OutOfBand::default(), 9).unwrap();
    let par = env.step(&[Action::SendPar, Action::Idle, Action::Idle]).unwrap();
    assert_eq!(par.downlink_grants, 0);
    let csi = env.step(&[Action::SendCsi; 3]).unwrap();
    // the pending request is served once every AP has reported
    assert_eq!(csi.downlink_grants, n as u64);
    assert_eq!(csi.signaling(), 2 * n as u64);
}
