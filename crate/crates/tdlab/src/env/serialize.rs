use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::mdp::{FeatureMap, FiniteMdp};
use crate::error::Result;

/// On-disk environment document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvDocument {
    pub version: u32,
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub r_bar: f64,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    pub feature_dim: usize,
    pub features: Vec<Vec<f64>>,
}

pub const ENV_DOC_VERSION: u32 = 1;

impl EnvDocument {
    pub fn from_env(mdp: &FiniteMdp, fmap: &FeatureMap) -> Self {
        let transition = (0..mdp.n_states())
            .map(|s| {
                (0..mdp.n_actions())
                    .map(|a| mdp.next_state_row(s, a).to_vec())
                    .collect()
            })
            .collect();
        let reward = (0..mdp.n_states())
            .map(|s| {
                (0..mdp.n_actions())
                    .map(|a| mdp.reward(s, a))
                    .collect()
            })
            .collect();
        let features = (0..fmap.n_pairs())
            .map(|p| fmap.feature(p).to_vec())
            .collect();
        EnvDocument {
            version: ENV_DOC_VERSION,
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            gamma: mdp.gamma(),
            r_bar: mdp.r_bar(),
            transition,
            reward,
            feature_dim: fmap.d(),
            features,
        }
    }

    pub fn into_env(self) -> Result<(FiniteMdp, FeatureMap)> {
        let mut transition = Vec::with_capacity(self.n_states * self.n_actions * self.n_states);
        for s in &self.transition {
            for a in s {
                transition.extend_from_slice(a);
            }
        }
        let mut reward = Vec::with_capacity(self.n_states * self.n_actions);
        for s in &self.reward {
            reward.extend_from_slice(s);
        }
        let mdp = FiniteMdp::new(
            self.n_states,
            self.n_actions,
            transition,
            reward,
            self.gamma,
            self.r_bar,
        )?;
        let mut table = Vec::with_capacity(self.features.len() * self.feature_dim);
        for f in &self.features {
            table.extend_from_slice(f);
        }
        let fmap = FeatureMap::new(self.feature_dim, self.features.len(), table)?;
        Ok((mdp, fmap))
    }
}

pub fn save_env(path: &Path, mdp: &FiniteMdp, fmap: &FeatureMap) -> Result<()> {
    let doc = EnvDocument::from_env(mdp, fmap);
    let json = serde_json::to_string_pretty(&doc)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_env(path: &Path) -> Result<(FiniteMdp, FeatureMap)> {
    let text = std::fs::read_to_string(path)?;
    let doc: EnvDocument = serde_json::from_str(&text)?;
    doc.into_env()
}

/// Content hash of the environment, for tagging run outputs.
pub fn env_content_hash(mdp: &FiniteMdp, fmap: &FeatureMap) -> String {
    let doc = EnvDocument::from_env(mdp, fmap);
    let json = serde_json::to_string(&doc).expect("env serialization cannot fail");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    let digest = hasher.finalize();
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}
