use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use subnet_sim::config::ExperimentConfig;
use subnet_sim::{experiment, training};

#[derive(Parser)]
#[command(name = "subnetsim", version, about = "In-factory subnetwork signaling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a benchmark policy or a trained checkpoint.
    Run(RunArgs),
    /// Train MAPPO agents.
    Train(CommonArgs),
    /// Evaluate a trained checkpoint (same as `run --policy mappo-eval`).
    Eval(EvalArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML config; keys not given fall back to defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// fixed, random, ia, csi-ia, genie or mappo-eval.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Also write the per-slot trace.csv.
    #[arg(long)]
    trace: bool,
    /// Take the most likely action when evaluating a checkpoint.
    #[arg(long)]
    greedy: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    greedy: bool,
}

fn load(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(common.config.as_deref(), std::env::vars())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(e) = common.episodes {
        cfg.episodes = e;
    }
    Ok(cfg)
}

fn run(cfg: ExperimentConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let s = experiment::run_experiment(&cfg, out)?;
    println!(
        "{}: {} episodes, median success {:.4}, overhead {} (csi {}, par {}, grants {})",
        s.policy,
        s.episodes.len(),
        s.success_rate_median,
        s.overhead(),
        s.csi,
        s.par,
        s.grants
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(a) => {
            let mut cfg = load(&a.common)?;
            if let Some(p) = a.policy {
                cfg.policy = p;
            }
            if let Some(c) = a.checkpoint {
                cfg.checkpoint = Some(c.display().to_string());
            }
            cfg.trace |= a.trace;
            cfg.greedy_eval |= a.greedy;
            run(cfg, &a.common.out)
        }
        Command::Eval(a) => {
            let mut cfg = load(&a.common)?;
            cfg.policy = "mappo-eval".into();
            cfg.checkpoint = Some(a.checkpoint.display().to_string());
            cfg.trace |= a.trace;
            cfg.greedy_eval |= a.greedy;
            run(cfg, &a.common.out)
        }
        Command::Train(a) => {
            let cfg = load(&a)?;
            let every = (cfg.episodes / 20).max(1);
            training::run_training(&cfg, &a.out, |r| {
                if (r.episode + 1) % every == 0 {
                    eprintln!(
                        "episode {:>6}  reward {:.4}  median success {:.3}  overhead {:>6}",
                        r.episode + 1,
                        r.mean_reward,
                        r.success_rate_median,
                        r.overhead_total
                    );
                }
            })?;
            println!("wrote {}", a.out.join("checkpoint.json").display());
            Ok(())
        }
    }
}
