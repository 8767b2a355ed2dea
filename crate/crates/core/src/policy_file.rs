//! Versioned JSON snapshot of a solved action table.
//!
//! Actions are stored per tree level as `[action, run]` pairs in node
//! order, next to the fingerprint of the model they were solved for.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::solver::PolicySolution;
use crate::statetree::StateTree;

pub const FORMAT: &str = "agedist-policy";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub format: String,
    pub version: u32,
    pub model_hash: String,
    pub eta: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub lambda: f64,
    pub levels: Vec<Vec<[u32; 2]>>,
}

impl PolicyFile {
    pub fn from_solution(model: &Model, sol: &PolicySolution) -> Self {
        let tree = &sol.tree;
        let levels = (1..=tree.depth())
            .map(|l| {
                let mut runs: Vec<[u32; 2]> = Vec::new();
                for node in tree.level_range(l) {
                    let a = tree.action(node) as u32;
                    match runs.last_mut() {
                        Some(run) if run[0] == a => run[1] += 1,
                        _ => runs.push([a, 1]),
                    }
                }
                runs
            })
            .collect();
        Self {
            format: FORMAT.into(),
            version: VERSION,
            model_hash: ModelConfig::from(model).fingerprint(),
            eta: sol.eta,
            k: sol.k,
            lambda: sol.lambda,
            levels,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(text)?;
        if f.format != FORMAT || f.version != VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported policy file {} v{} (expected {FORMAT} v{VERSION})",
                f.format, f.version
            )));
        }
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Rebuilds the action table, refusing a model with a different
    /// fingerprint.
    pub fn into_tree(&self, model: &Model) -> Result<StateTree> {
        let hash = ModelConfig::from(model).fingerprint();
        if hash != self.model_hash {
            return Err(Error::InvalidArgument(format!(
                "policy was solved for model {} but the given model is {hash}",
                self.model_hash
            )));
        }
        if self.levels.len() != self.k {
            return Err(Error::InvalidArgument(format!("{} levels for K = {}", self.levels.len(), self.k)));
        }
        let tree = StateTree::build(model, self.k)?;
        let mut actions = vec![0u32];
        for (i, runs) in self.levels.iter().enumerate() {
            let before = actions.len();
            for [a, n] in runs {
                actions.extend(std::iter::repeat_n(*a, *n as usize));
            }
            if actions.len() - before != tree.level_range(i + 1).len() {
                return Err(Error::InvalidArgument(format!("level {} has the wrong number of states", i + 1)));
            }
        }
        let mut tree = tree;
        tree.set_actions(&actions)?;
        Ok(tree)
    }
}
