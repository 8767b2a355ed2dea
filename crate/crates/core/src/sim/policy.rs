//! Buffer-content policies the simulator can run.

use crate::error::Result;
use crate::model::Model;
use crate::solver::PolicySolution;
use crate::statetree::StateTree;
use crate::strategies::Strategy;

/// Maps the current buffer (alphabet indices, oldest first) to a 1-based
/// action `s`: transmit `b_s`, drop everything older.
pub trait BufferPolicy: Sync {
    /// Packets older than this many slots are forgotten; `None` keeps
    /// everything.
    fn window(&self) -> Option<usize>;

    fn select(&self, buffer: &[usize]) -> usize;
}

/// Always transmit the newest packet.
#[derive(Clone, Copy, Debug, Default)]
pub struct SendLatest;

impl BufferPolicy for SendLatest {
    fn window(&self) -> Option<usize> {
        Some(1)
    }

    fn select(&self, buffer: &[usize]) -> usize {
        buffer.len()
    }
}

/// Table lookup into a solved state tree.
#[derive(Clone, Debug)]
pub struct SolvedPolicy {
    tree: StateTree,
}

impl SolvedPolicy {
    pub fn new(tree: StateTree) -> Self {
        Self { tree }
    }

    pub fn from_solution(sol: &PolicySolution) -> Self {
        Self::new(sol.tree.clone())
    }

    pub fn tree(&self) -> &StateTree {
        &self.tree
    }
}

impl BufferPolicy for SolvedPolicy {
    fn window(&self) -> Option<usize> {
        Some(self.tree.depth())
    }

    fn select(&self, buffer: &[usize]) -> usize {
        let node = self.tree.index_of_symbols(buffer.len(), buffer.iter().rev().copied());
        self.tree.action(node)
    }
}

/// Literal implementation of the S1/S2/S3 rules. "Important" means any
/// value above the minimum; with nothing important in view the newest
/// packet is sent.
#[derive(Clone, Debug)]
pub struct StrategyPolicy {
    strategy: Strategy,
    k: usize,
    important: Vec<bool>,
}

impl StrategyPolicy {
    pub fn new(model: &Model, strategy: Strategy, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(crate::error::Error::InvalidArgument("strategy window must be at least 1".into()));
        }
        let v_min = model.importance().v_min();
        let important = model.values().iter().map(|v| *v > v_min).collect();
        Ok(Self { strategy, k, important })
    }

    fn oldest_important(&self, buffer: &[usize], from: usize) -> Option<usize> {
        (from..buffer.len()).find(|&j| self.important[buffer[j]]).map(|j| j + 1)
    }
}

impl BufferPolicy for StrategyPolicy {
    fn window(&self) -> Option<usize> {
        match self.strategy {
            Strategy::S1 | Strategy::S2 => Some(self.k),
            Strategy::S3 => None,
        }
    }

    fn select(&self, buffer: &[usize]) -> usize {
        let l = buffer.len();
        let recent = l.saturating_sub(self.k);
        let chosen = match self.strategy {
            Strategy::S1 => self.oldest_important(buffer, recent),
            Strategy::S2 => (recent..l).rev().find(|&j| self.important[buffer[j]]).map(|j| j + 1),
            Strategy::S3 => (0..recent)
                .rev()
                .find(|&j| self.important[buffer[j]])
                .map(|j| j + 1)
                .or_else(|| self.oldest_important(buffer, recent)),
        };
        chosen.unwrap_or(l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ImportanceDist, InterspeakDist};

    fn model() -> Model {
        Model::new(
            ImportanceDist::new(vec![1.0, 20.0], vec![0.7, 0.3]).unwrap(),
            InterspeakDist::geometric(0.2).unwrap(),
        )
    }

    #[test]
    fn literal_rules() {
        let m = model();
        let buf = [1, 0, 1, 0, 1, 0];
        let s1 = StrategyPolicy::new(&m, Strategy::S1, 4).unwrap();
        let s2 = StrategyPolicy::new(&m, Strategy::S2, 4).unwrap();
        let s3 = StrategyPolicy::new(&m, Strategy::S3, 3).unwrap();
        // window of 4 covers positions 3..=6
        assert_eq!(s1.select(&buf), 3);
        assert_eq!(s2.select(&buf), 5);
        // positions 1..=3 are older than 3 slots; newest important there is 3
        assert_eq!(s3.select(&buf), 3);
        assert_eq!(s3.select(&[0, 0, 0, 1, 0]), 4);
        assert_eq!(s1.select(&[0, 0, 0]), 3);
        assert_eq!(s3.window(), None);
    }
}
