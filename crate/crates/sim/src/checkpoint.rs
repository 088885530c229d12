//! JSON checkpoints of the actor and critic.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use subnet_core::mappo::{Mappo, Mlp};

pub const FORMAT: &str = "subnet-mappo-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDump {
    /// Layer sizes, input first.
    pub sizes: Vec<usize>,
    /// Per layer: row-major `out x in` weights, then biases.
    pub params: Vec<f64>,
}

impl NetworkDump {
    fn from_mlp(net: &Mlp) -> Self {
        Self { sizes: net.sizes().to_vec(), params: net.params().to_vec() }
    }

    pub fn to_mlp(&self) -> Result<Mlp> {
        Ok(Mlp::from_parts(self.sizes.clone(), self.params.clone())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config_sha256: String,
    /// Number of training episodes completed.
    pub episode: usize,
    pub num_agents: usize,
    pub actor: NetworkDump,
    pub critic: NetworkDump,
}

impl Checkpoint {
    pub fn new(learner: &Mappo, config_sha256: &str, episode: usize) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            config_sha256: config_sha256.into(),
            episode,
            num_agents: learner.num_agents(),
            actor: NetworkDump::from_mlp(&learner.actor),
            critic: NetworkDump::from_mlp(&learner.critic),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
        let ck: Checkpoint =
            serde_json::from_str(&text).with_context(|| format!("parsing checkpoint {}", path.display()))?;
        if ck.format != FORMAT {
            bail!("{}: not a checkpoint (format `{}`)", path.display(), ck.format);
        }
        if ck.version != VERSION {
            bail!("{}: unsupported checkpoint version {}", path.display(), ck.version);
        }
        ck.actor.to_mlp()?;
        ck.critic.to_mlp()?;
        Ok(ck)
    }
}
