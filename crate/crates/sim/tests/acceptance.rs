//! Acceptance suite: prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.
//!
//! Run alone with `cargo test -p subnet-sim --test acceptance`.

use std::f64::consts::{LN_2, PI};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;
use subnet_core::baselines::Benchmark;
use subnet_core::controlplane::{allocate_power_w, AllocatorConfig};
use subnet_core::env::{Action, EnvConfig};
use subnet_core::mappo::{advantages, policy_loss, value_loss, Mlp, PolicySample, StepEnd, TrainConfig};
use subnet_core::mappo::{log_softmax, ForwardCache};
use subnet_core::metrics;
use subnet_core::radio::{self, ChannelMatrix, Fading, RadioConfig, ShadowingMap};
use subnet_core::seed::{self, Purpose, SimRng};
use subnet_core::world::Point;
use subnet_sim::config::ExperimentConfig;
use subnet_sim::experiment::{self, run_episodes, summarize, EpisodeResult, ExperimentSummary, PolicyChoice};
use subnet_sim::training::run_training;

const SEED: u64 = 20_240_601;

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, name: &str, ok: bool, detail: String) {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed += 1;
        }
    }
}

fn rng(purpose: u64) -> SimRng {
    seed::stream(SEED, purpose, Purpose::Learner)
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn random_radio(r: &mut SimRng) -> RadioConfig {
    RadioConfig {
        bandwidth_hz: r.random_range(1e6..1e8),
        carrier_hz: r.random_range(1e9..1e11),
        pathloss_exponent: r.random_range(1.8..4.0),
        noise_figure_db: r.random_range(0.0..15.0),
        noise_temperature_k: r.random_range(250.0..320.0),
        fading: Fading::None,
        ..RadioConfig::default()
    }
}

/// Radio formulas against plain scalar evaluation.
fn radio_oracle(rep: &mut Report) {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let cfg = random_radio(&mut r);
        let n = r.random_range(2..=10);
        let tx: Vec<Point> = (0..n).map(|_| Point::new(r.random_range(0.0..20.0), r.random_range(0.0..20.0))).collect();
        let rx: Vec<Point> = tx.iter().map(|p| Point::new(p.x + r.random_range(0.1..1.0), p.y + 0.3)).collect();

        let fspl = 20.0 * (4.0 * PI * cfg.carrier_hz / 299_792_458.0).log10();
        let noise = 1.380_649e-23 * cfg.noise_temperature_k * cfg.bandwidth_hz * 10f64.powf(cfg.noise_figure_db / 10.0);
        worst = worst.max(rel_err(radio::noise_power_w(&cfg), noise));

        let mut gains = vec![0.0; n * n];
        for l in 0..n {
            for m in 0..n {
                let d = ((tx[l].x - rx[m].x).powi(2) + (tx[l].y - rx[m].y).powi(2)).sqrt();
                let pl = fspl + 10.0 * cfg.pathloss_exponent * d.log10();
                worst = worst.max(rel_err(radio::path_loss_db(d, &cfg).unwrap(), pl));
                gains[l * n + m] = 10f64.powf(-pl / 10.0);
            }
        }
        let drawn = radio::draw_channel(&tx, &rx, &ShadowingMap::zero(n), &cfg, &mut r).unwrap();
        for (a, b) in drawn.as_slice().iter().zip(&gains) {
            worst = worst.max(rel_err(*a, *b));
        }
        let h = ChannelMatrix::from_rows(n, gains.clone()).unwrap();
        let p: Vec<f64> =
            (0..n).map(|_| if r.random_bool(0.7) { r.random_range(1e-3..0.1) } else { 0.0 }).collect();
        for m in 0..n {
            let mut interference = 0.0;
            for l in 0..n {
                if l != m {
                    interference += p[l] * gains[l * n + m];
                }
            }
            let gamma = p[m] * gains[m * n + m] / (interference + noise);
            let s = radio::sinr(&h, &p, m, noise).unwrap();
            worst = worst.max(rel_err(s.sinr, gamma)).max(rel_err(s.interference_w, interference));
            let rate = cfg.bandwidth_hz * gamma.ln_1p() / LN_2;
            worst = worst.max(rel_err(radio::link_rate_bps(s.sinr, &cfg), rate));
        }
    }
    let t = start.elapsed();
    rep.line(
        "radio oracle",
        worst < 1e-12 && t < Duration::from_secs(5),
        format!("1000 instances, max rel err {worst:.2e} (< 1e-12), {:.2}s (< 5s)", t.as_secs_f64()),
    );
}

/// Random feasible instances whose fixed point lies strictly inside the
/// power range: pick the fixed point first, then solve for direct gains.
fn allocator_fixed_point(rep: &mut Report) {
    let start = Instant::now();
    let radio = RadioConfig::default();
    let alloc = AllocatorConfig::default();
    let target = alloc.target_sinr(&radio);
    let gamma_th = radio.threshold_sinr();
    let (lo, hi) = (radio.p_min_w(), radio.p_max_w());
    let mut r = rng(2);
    let (mut min_margin, mut max_residual, mut max_iter) = (f64::INFINITY, 0f64, 0);
    let mut all_converged = true;
    for _ in 0..500 {
        let n = r.random_range(2..=10);
        let p_star: Vec<f64> = (0..n).map(|_| r.random_range(1.2 * lo..0.8 * hi)).collect();
        let mut gains: Vec<f64> = (0..n * n).map(|_| 10f64.powf(-r.random_range(60.0..90.0) / 10.0)).collect();
        let interference: Vec<f64> =
            (0..n).map(|m| (0..n).filter(|&l| l != m).map(|l| p_star[l] * gains[l * n + m]).sum()).collect();
        // noise at least a quarter of the worst interference bounds the
        // spectral radius of the iteration by 0.8
        let noise = r.random_range(0.25..4.0) * interference.iter().cloned().fold(0.0, f64::max);
        for m in 0..n {
            gains[m * n + m] = target * (interference[m] + noise) / p_star[m];
        }
        let h = ChannelMatrix::from_rows(n, gains).unwrap();
        let a = allocate_power_w(&h, noise, target, &radio, &alloc);
        all_converged &= a.converged;
        max_iter = max_iter.max(a.iterations);
        for m in 0..n {
            let s = radio::sinr(&h, &a.powers_w, m, noise).unwrap().sinr;
            min_margin = min_margin.min(s - gamma_th);
            let i: f64 = (0..n).filter(|&l| l != m).map(|l| a.powers_w[l] * h.gain(l, m)).sum();
            let mapped = (target * (i + noise) / h.gain(m, m)).clamp(lo, hi);
            max_residual = max_residual.max((mapped - a.powers_w[m]).abs());
        }
    }
    let t = start.elapsed();
    rep.line(
        "allocator fixed point",
        all_converged && min_margin >= -1e-6 && max_residual < 1e-6 && t < Duration::from_secs(10),
        format!(
            "500 instances, min SINR - threshold {min_margin:.3e} (>= -1e-6), max residual {max_residual:.2e} W \
             (< 1e-6), max {max_iter} iterations, {:.2}s (< 10s)",
            t.as_secs_f64()
        ),
    );
}

/// Relative error with an absolute floor: both sides are below the central
/// difference's own truncation noise under `FD_FLOOR`.
const FD_H: f64 = 1e-5;
const FD_FLOOR: f64 = 1e-7;

fn fd_rel(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

fn check_layers(net: &Mlp, grad: &[f64], loss: impl Fn(&Mlp) -> f64, r: &mut SimRng) -> (f64, usize) {
    let mut worst: f64 = 0.0;
    let mut checked = usize::MAX;
    let mut probe = net.clone();
    for layer in 0..net.num_layers() {
        let range = net.layer_range(layer);
        let idx: Vec<usize> = if range.len() <= 100 {
            range.collect()
        } else {
            (0..100).map(|_| r.random_range(range.clone())).collect()
        };
        checked = checked.min(idx.len());
        for i in idx {
            let base = probe.params()[i];
            probe.params_mut()[i] = base + FD_H;
            let up = loss(&probe);
            probe.params_mut()[i] = base - FD_H;
            let down = loss(&probe);
            probe.params_mut()[i] = base;
            worst = worst.max(fd_rel(grad[i], (up - down) / (2.0 * FD_H)));
        }
    }
    (worst, checked)
}

fn gradient_check(rep: &mut Report) {
    let start = Instant::now();
    let mut r = rng(3);
    let env = EnvConfig { world: subnet_core::world::WorldConfig { num_subnetworks: 4, ..Default::default() }, ..Default::default() };
    let tc = TrainConfig::default();
    let dim = env.state_dim();
    let mut sizes = vec![dim];
    sizes.extend(&tc.hidden_widths);
    let actor = Mlp::init(&[sizes.clone(), vec![Action::COUNT]].concat(), 1.0, &mut r);
    let critic_sizes = [vec![dim * env.num_agents()], tc.hidden_widths.clone(), vec![1]].concat();
    let critic = Mlp::init(&critic_sizes, 1.0, &mut r);

    let states: Vec<Vec<f64>> = (0..32).map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let mut cache = ForwardCache::default();
    let mut batch = Vec::new();
    for (k, s) in states.iter().enumerate() {
        actor.forward(s, &mut cache).unwrap();
        let action = r.random_range(0..Action::COUNT);
        let logp = log_softmax(cache.output())[action];
        // half the samples sit inside the clip band, half well outside it
        let shift = if k % 2 == 0 { r.random_range(-0.1..0.1) } else { r.random_range(0.4..0.8) * if k % 4 == 1 { 1.0 } else { -1.0 } };
        batch.push(PolicySample { state: s, action, logp_old: logp + shift, advantage: r.random_range(-2.0..2.0) });
    }
    let mut g = vec![0.0; actor.params().len()];
    policy_loss(&actor, &batch, tc.clip_eps, tc.entropy_coef, Some(&mut g)).unwrap();
    let ploss = |net: &Mlp| policy_loss(net, &batch, tc.clip_eps, tc.entropy_coef, None).unwrap().loss;
    let (actor_err, actor_n) = check_layers(&actor, &g, ploss, &mut r);

    let cstates: Vec<Vec<f64>> =
        (0..32).map(|_| (0..critic_sizes[0]).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let crefs: Vec<&[f64]> = cstates.iter().map(Vec::as_slice).collect();
    let returns: Vec<f64> = (0..32).map(|_| r.random_range(-3.0..3.0)).collect();
    let mut g = vec![0.0; critic.params().len()];
    value_loss(&critic, &crefs, &returns, tc.value_coef, Some(&mut g)).unwrap();
    let vloss = |net: &Mlp| value_loss(net, &crefs, &returns, tc.value_coef, None).unwrap();
    let (critic_err, critic_n) = check_layers(&critic, &g, vloss, &mut r);

    let t = start.elapsed();
    let worst = actor_err.max(critic_err);
    rep.line(
        "gradient check",
        worst < 1e-4 && t < Duration::from_secs(30),
        format!(
            "actor {actor_err:.2e}, critic {critic_err:.2e} max rel err (< 1e-4, floor {FD_FLOOR:.0e}), \
             >= {} coords per layer (all of a smaller layer; critic min {critic_n}), {:.2}s (< 30s)",
            actor_n.min(100),
            t.as_secs_f64()
        ),
    );
}

fn gae_oracle(rep: &mut Report) {
    let mut r = rng(4);
    let gamma = 0.99;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = r.random_range(5..=10);
        let rewards: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let mut ends: Vec<StepEnd> = (0..n)
            .map(|_| match r.random_range(0..6) {
                0 => StepEnd::Terminal,
                1 => StepEnd::Truncated(r.random_range(-2.0..2.0)),
                _ => StepEnd::Continue,
            })
            .collect();
        if matches!(ends[n - 1], StepEnd::Continue) {
            ends[n - 1] = StepEnd::Terminal;
        }
        let (adv, ret) = advantages(&rewards, &values, &ends, gamma, 1.0);
        for t in 0..n {
            let mut g = 0.0;
            let mut disc = 1.0;
            for k in t..n {
                g += disc * rewards[k];
                disc *= gamma;
                match ends[k] {
                    StepEnd::Continue => continue,
                    StepEnd::Terminal => {}
                    StepEnd::Truncated(v) => g += disc * v,
                }
                break;
            }
            worst = worst.max((ret[t] - g).abs()).max((adv[t] - (g - values[t])).abs());
        }
    }
    rep.line("GAE oracle", worst <= 1e-10, format!("1000 toys of 5-10 steps, lambda = 1, max abs err {worst:.2e} (<= 1e-10)"));
}

fn run(policy: Benchmark, cfg: &EnvConfig, episodes: u64, trace: bool) -> (ExperimentSummary, Duration) {
    let start = Instant::now();
    let eps = run_episodes(cfg, &PolicyChoice::Benchmark(policy), SEED, episodes, trace).unwrap();
    (summarize(policy.name(), cfg.world.buffer_capacity, eps).unwrap(), start.elapsed())
}

/// `(csi, par)` uplinks the IA rule owes for the failures in a traced episode:
/// CSI one slot after a failure and PAR two slots after, when those slots exist.
fn ia_expected_uplinks(e: &EpisodeResult) -> (u64, u64, u64) {
    let steps = e.stats.steps;
    let (mut failures, mut csi, mut par) = (0, 0, 0);
    for row in &e.trace {
        if row.action == Action::Transmit.name() && row.success == 0 && row.buffer > 0 {
            failures += 1;
            csi += u64::from(row.slot < steps);
            par += u64::from(row.slot + 1 < steps);
        }
    }
    (failures, csi, par)
}

fn benchmarks(rep: &mut Report) -> bool {
    let cfg = EnvConfig::default();
    let m = cfg.num_agents() as u64;
    let mut runs = Vec::new();
    let start = Instant::now();
    for b in Benchmark::ALL {
        runs.push((b, run(b, &cfg, 200, b == Benchmark::InterferenceAware).0));
    }
    let elapsed = start.elapsed();
    let get = |b: Benchmark| &runs.iter().find(|(x, _)| *x == b).unwrap().1;

    let fixed = get(Benchmark::Fixed);
    let genie = get(Benchmark::Genie);
    let ia = get(Benchmark::InterferenceAware);
    let random = get(Benchmark::Random);
    let csi_ia = get(Benchmark::CsiInterferenceAware);

    let genie_exact = genie.episodes.iter().all(|e| metrics::signaling_overhead(&e.stats) == 2 * m * u64::from(e.stats.steps));
    let (mut failures, mut want_csi, mut want_par, mut truncated) = (0, 0, 0, 0);
    for e in &ia.episodes {
        let (f, c, p) = ia_expected_uplinks(e);
        failures += f;
        want_csi += c;
        want_par += p;
        truncated += 2 * f - c - p;
    }
    let ia_exact = ia.csi == want_csi && ia.par == want_par && ia.grants == 0;
    let p = random.action_probs;
    let agent_slots: u64 = random.episodes.iter().map(|e| m * u64::from(e.stats.steps)).sum();
    let random_ok = agent_slots >= 100_000 && p.iter().all(|x| (x - 0.25).abs() <= 0.01);
    rep.line(
        "benchmark arithmetic",
        fixed.overhead() == 0 && genie_exact && ia_exact && random_ok,
        format!(
            "fixed overhead {}; genie overhead == 2*M*T in {}/200 episodes; ia uplinks {} == 2 x {failures} failures \
             - {truncated} cut off by the horizon; random action freqs {:.4?} over {agent_slots} agent-slots",
            fixed.overhead(),
            genie.episodes.iter().filter(|e| metrics::signaling_overhead(&e.stats) == 2 * m * u64::from(e.stats.steps)).count(),
            ia.csi + ia.par,
            p
        ),
    );

    let med = |s: &ExperimentSummary| s.success_rate_median;
    let ordered = med(genie) >= med(csi_ia) && med(csi_ia) >= med(ia) && med(ia) >= med(random);
    let ok = ordered
        && (0.8..=1.0).contains(&med(genie))
        && (0.1..=0.3).contains(&med(random))
        && elapsed < Duration::from_secs(600);
    rep.line(
        "benchmark ordering",
        ok,
        format!(
            "medians genie {:.3} >= csi-ia {:.3} >= ia {:.3} >= random {:.3} (fixed {:.3}); genie in [0.8, 1], \
             random in [0.1, 0.3]; M=10 T=300 200 episodes, all five policies in {:.1}s (< 600s)",
            med(genie),
            med(csi_ia),
            med(ia),
            med(random),
            med(fixed),
            elapsed.as_secs_f64()
        ),
    );

    let ratio = csi_ia.overhead() as f64 / ia.overhead() as f64;
    rep.line(
        "overhead ratio",
        ratio >= 4.0,
        format!("csi-ia {} / ia {} = {ratio:.1} (>= 4)", csi_ia.overhead(), ia.overhead()),
    );
    runs.iter().all(|(_, s)| s.conserved)
}

fn desk_training(rep: &mut Report, tmp: &Path) -> bool {
    let start = Instant::now();
    let cfg = ExperimentConfig { num_subnetworks: 4, episodes: 200, seed: SEED, ..ExperimentConfig::default() };
    run_training(&cfg, &tmp.join("train"), |_| {}).unwrap();
    let train_t = start.elapsed();

    let eval = ExperimentConfig {
        policy: "mappo-eval".into(),
        checkpoint: Some(tmp.join("train/checkpoint.json").display().to_string()),
        seed: SEED + 1,
        ..cfg.clone()
    };
    let mappo = experiment::run_experiment(&eval, &tmp.join("eval")).unwrap();
    let env = cfg.env_config();
    let (random, _) = run(Benchmark::Random, &env, 200, false);
    let (genie, _) = run(Benchmark::Genie, &env, 200, false);
    let ok = mappo.success_rate_median >= 2.0 * random.success_rate_median
        && (mappo.overhead() as f64) <= 0.5 * genie.overhead() as f64
        && train_t < Duration::from_secs(3600);
    rep.line(
        "desk-scale training",
        ok,
        format!(
            "M=4, 200 training episodes in {:.1}s (< 3600s); over 200 evaluation episodes median success mappo {:.3} \
             vs random {:.3} (>= 2x), overhead mappo {} vs genie {} (<= 0.5x)",
            train_t.as_secs_f64(),
            mappo.success_rate_median,
            random.success_rate_median,
            mappo.overhead(),
            genie.overhead()
        ),
    );
    mappo.conserved && random.conserved && genie.conserved
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism(rep: &mut Report, tmp: &Path) {
    let mut same = Vec::new();
    for policy in ["random", "ia", "genie"] {
        let cfg = ExperimentConfig { policy: policy.into(), episodes: 16, trace: true, seed: 7, ..Default::default() };
        let a = tmp.join(format!("{policy}-a"));
        let b = tmp.join(format!("{policy}-b"));
        experiment::run_experiment(&cfg, &a).unwrap();
        experiment::run_experiment(&cfg, &b).unwrap();
        same.push((policy, dir_bytes(&a) == dir_bytes(&b)));
    }
    let cfg = ExperimentConfig { num_subnetworks: 3, episodes: 12, steps_per_episode: 100, seed: 7, ..Default::default() };
    run_training(&cfg, &tmp.join("train-a"), |_| {}).unwrap();
    run_training(&cfg, &tmp.join("train-b"), |_| {}).unwrap();
    same.push(("train", dir_bytes(&tmp.join("train-a")) == dir_bytes(&tmp.join("train-b"))));
    rep.line(
        "determinism",
        same.iter().all(|(_, s)| *s),
        format!("byte-identical outputs on re-run: {same:?}"),
    );
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rep = Report { failed: 0 };
    radio_oracle(&mut rep);
    allocator_fixed_point(&mut rep);
    gradient_check(&mut rep);
    gae_oracle(&mut rep);
    let bench_conserved = benchmarks(&mut rep);
    let train_conserved = desk_training(&mut rep, tmp.path());
    determinism(&mut rep, tmp.path());
    rep.line(
        "conservation",
        bench_conserved && train_conserved,
        "successes + final occupancy == C for every agent of every benchmark and evaluation episode".into(),
    );
    if rep.failed > 0 {
        eprintln!("{} acceptance criteria failed", rep.failed);
        std::process::exit(1);
    }
}
