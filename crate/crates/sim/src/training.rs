//! MAPPO training to an output directory.

use std::path::Path;

use anyhow::Result;
use serde::Serialize;
use subnet_core::mappo::{EpisodeReport, Mappo, Trainer};

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::output::OutputDir;

#[derive(Debug, Serialize)]
struct CurveRow {
    episode: usize,
    mean_reward: f64,
    success_rate_median: f64,
    overhead_total: u64,
    p_idle: f64,
    p_tx: f64,
    p_csi: f64,
    p_par: f64,
    steps: u32,
    updated: u8,
    policy_loss: Option<f64>,
    value_loss: Option<f64>,
    entropy: Option<f64>,
    approx_kl: Option<f64>,
}

impl From<&EpisodeReport> for CurveRow {
    fn from(r: &EpisodeReport) -> Self {
        let [p_idle, p_tx, p_csi, p_par] = r.action_probs;
        let u = r.update.as_ref();
        Self {
            episode: r.episode,
            mean_reward: r.mean_reward,
            success_rate_median: r.success_rate_median,
            overhead_total: r.overhead_total,
            p_idle,
            p_tx,
            p_csi,
            p_par,
            steps: r.steps,
            updated: u8::from(u.is_some()),
            policy_loss: u.map(|u| u.policy_loss),
            value_loss: u.map(|u| u.value_loss),
            entropy: u.map(|u| u.entropy),
            approx_kl: u.map(|u| u.approx_kl),
        }
    }
}

/// Trains for `cfg.episodes` episodes, writing `learning_curve.csv`,
/// `checkpoint.json` and periodic `checkpoint_<episode>.json` snapshots.
/// `progress` sees every episode report as it is produced.
pub fn run_training(
    cfg: &ExperimentConfig,
    out: &Path,
    mut progress: impl FnMut(&EpisodeReport),
) -> Result<(Mappo, Vec<EpisodeReport>)> {
    cfg.validate()?;
    let hash = cfg.hash();
    let mut dir = OutputDir::create(out)?;
    dir.write_bytes("config.toml", cfg.to_toml_string().as_bytes())?;
    dir.write_bytes("seed.txt", format!("{}\n", cfg.seed).as_bytes())?;

    let mut trainer = Trainer::new(cfg.env_config(), cfg.train_config(), cfg.seed)?;
    let mut curve = Vec::with_capacity(cfg.episodes);
    while !trainer.is_finished() {
        let report = trainer.train_episode()?;
        progress(&report);
        curve.push(report);
        let done = trainer.episode();
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.episodes {
            let ck = Checkpoint::new(trainer.learner(), &hash, done);
            dir.write_bytes(&format!("checkpoint_{done:06}.json"), ck.to_json().as_bytes())?;
        }
    }
    let learner = trainer.into_learner();
    let ck = Checkpoint::new(&learner, &hash, cfg.episodes);
    dir.write_bytes("checkpoint.json", ck.to_json().as_bytes())?;
    dir.write_csv("learning_curve.csv", curve.iter().map(CurveRow::from))?;
    dir.write_manifest()?;
    Ok((learner, curve))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_curve_and_checkpoints() {
        let cfg = ExperimentConfig {
            num_subnetworks: 2,
            steps_per_episode: 20,
            episodes: 4,
            checkpoint_every: 2,
            hidden_widths: vec![8],
            ..ExperimentConfig::default()
        };
        let tmp = tempfile::tempdir().unwrap();
        let mut seen = 0;
        let (_, curve) = run_training(&cfg, tmp.path(), |_| seen += 1).unwrap();
        assert_eq!((seen, curve.len()), (4, 4));
        for f in ["learning_curve.csv", "checkpoint.json", "checkpoint_000002.json", "manifest.csv"] {
            assert!(tmp.path().join(f).exists(), "{f}");
        }
        assert!(!tmp.path().join("checkpoint_000004.json").exists());
        let ck = Checkpoint::load(&tmp.path().join("checkpoint.json")).unwrap();
        assert_eq!((ck.episode, ck.num_agents), (4, 2));
        assert_eq!(ck.config_sha256, cfg.hash());
        let curve_rows = std::fs::read_to_string(tmp.path().join("learning_curve.csv")).unwrap();
        assert_eq!(curve_rows.lines().count(), 5);
    }
}
