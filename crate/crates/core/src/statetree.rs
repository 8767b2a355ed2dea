//! Truncated buffer-state space stored as a suffix trie.
//!
//! A buffer state `b = [b_1, .., b_l]` lists unsent importance values oldest
//! first. Its parent is `b` without its oldest entry and its children prepend
//! one older entry, so every suffix of `b` is an ancestor. Nodes live in one
//! flat breadth-first array: the root (empty buffer) is node 0, then the
//! `r` states of length 1, the `r^2` states of length 2, and so on, where `r`
//! is the alphabet size. Inside a level a state is numbered in mixed radix
//! with its oldest entry as the least significant digit, which makes parent,
//! child and "append newer packets" pure index arithmetic.

use std::fmt;
use std::io::Write;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::model::Model;

pub type NodeId = usize;

pub const ROOT: NodeId = 0;

/// Largest tree accepted by [`StateTree::build`]: `|V|^(K+1) <= 2^24`.
pub const NODE_CAP: u128 = 1 << 24;

/// Unsent packets at a speaking time, as alphabet indices (oldest first).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct BufferState {
    symbols: Vec<usize>,
}

impl BufferState {
    pub fn new(symbols: Vec<usize>) -> Self {
        Self { symbols }
    }

    /// Maps importance values to alphabet indices, rejecting unknown values.
    pub fn from_values(model: &Model, values: &[f64]) -> Result<Self> {
        let symbols = values
            .iter()
            .map(|v| {
                model
                    .importance()
                    .symbol_of(*v)
                    .ok_or_else(|| Error::OutOfAlphabet(v.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { symbols })
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn values(&self, model: &Model) -> Vec<f64> {
        self.symbols.iter().map(|&s| model.values()[s]).collect()
    }
}

impl fmt::Display for BufferState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, s) in self.symbols.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, "]")
    }
}

/// Trie over `V^{<=K}` plus the per-node fields used by policy iteration.
#[derive(Clone, Debug)]
pub struct StateTree {
    radix: usize,
    depth: usize,
    /// `offsets[l]` is the first node of level `l`; `offsets[depth + 1]` is the node count.
    offsets: Vec<usize>,
    pows: Vec<usize>,
    levels: Vec<u16>,
    /// Probability of the state's content under i.i.d. arrivals.
    state_prob: Vec<f64>,
    pub(crate) action: Vec<u32>,
    pub(crate) h: Vec<f64>,
    pub(crate) cost: Vec<f64>,
    pub(crate) temp: Vec<f64>,
    pub(crate) parentone: Vec<NodeId>,
}

impl StateTree {
    /// Builds the full tree of depth `k` with the send-newest policy
    /// `s(b) = l(b)` installed.
    pub fn build(model: &Model, k: usize) -> Result<Self> {
        let radix = model.alphabet();
        if k == 0 {
            return Err(Error::InvalidArgument("buffer size must be at least 1".into()));
        }
        let nodes = node_count(radix, k);
        let pow_next = (radix as u128).checked_pow(k as u32 + 1).unwrap_or(u128::MAX);
        if nodes > NODE_CAP || pow_next > NODE_CAP || k > u16::MAX as usize {
            return Err(Error::TreeTooLarge { k, alphabet: radix, nodes, cap: NODE_CAP });
        }
        let mut pows = Vec::with_capacity(k + 1);
        let mut offsets = Vec::with_capacity(k + 2);
        let mut acc = 0usize;
        let mut pw = 1usize;
        for _ in 0..=k {
            offsets.push(acc);
            pows.push(pw);
            acc += pw;
            pw *= radix;
        }
        offsets.push(acc);
        let n = acc;

        let mut levels = vec![0u16; n];
        for l in 0..=k {
            levels[offsets[l]..offsets[l + 1]].fill(l as u16);
        }
        let mut state_prob = vec![0.0; n];
        state_prob[ROOT] = 1.0;
        let alpha = model.probs();
        for l in 0..k {
            for within in 0..pows[l] {
                let node = offsets[l] + within;
                for (v, a) in alpha.iter().enumerate() {
                    state_prob[offsets[l + 1] + within * radix + v] = a * state_prob[node];
                }
            }
        }
        let action = levels.iter().map(|&l| l as u32).collect();
        Ok(Self {
            radix,
            depth: k,
            offsets,
            pows,
            levels,
            state_prob,
            action,
            h: vec![0.0; n],
            cost: vec![0.0; n],
            temp: vec![0.0; n],
            parentone: vec![ROOT; n],
        })
    }

    pub fn node_count(&self) -> usize {
        self.levels.len()
    }

    /// Maximum buffer length `K`.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn radix(&self) -> usize {
        self.radix
    }

    pub fn level(&self, node: NodeId) -> usize {
        self.levels[node] as usize
    }

    pub fn level_range(&self, l: usize) -> Range<NodeId> {
        self.offsets[l]..self.offsets[l + 1]
    }

    /// Nodes with `1 <= l <= K`, i.e. every buffer state.
    pub fn states(&self) -> Range<NodeId> {
        self.offsets[1]..self.node_count()
    }

    fn within(&self, node: NodeId) -> usize {
        node - self.offsets[self.level(node)]
    }

    /// `b_{>=2}`; `None` for the root.
    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        let l = self.level(node);
        (l > 0).then(|| self.offsets[l - 1] + self.within(node) / self.radix)
    }

    /// `v || b`; `None` when `b` is already at depth `K`.
    pub fn child(&self, node: NodeId, symbol: usize) -> Option<NodeId> {
        let l = self.level(node);
        (l < self.depth && symbol < self.radix).then(|| self.offsets[l + 1] + self.within(node) * self.radix + symbol)
    }

    /// Alphabet index of `b_1`, the oldest entry.
    pub fn oldest(&self, node: NodeId) -> usize {
        self.within(node) % self.radix
    }

    /// Alphabet index of `b_j` (1-based, oldest first).
    pub fn symbol_at(&self, node: NodeId, j: usize) -> usize {
        debug_assert!(j >= 1 && j <= self.level(node));
        (self.within(node) / self.pows[j - 1]) % self.radix
    }

    /// `b_{>=j}`: drops the `j - 1` oldest entries.
    pub fn suffix_from(&self, node: NodeId, j: usize) -> NodeId {
        let l = self.level(node);
        debug_assert!(j >= 1 && j <= l + 1);
        let keep = l + 1 - j;
        self.offsets[keep] + self.within(node) / self.pows[j - 1]
    }

    pub fn index_of(&self, state: &BufferState) -> Result<NodeId> {
        let l = state.len();
        if l > self.depth {
            return Err(Error::InvalidArgument(format!(
                "state of length {l} exceeds buffer size {}",
                self.depth
            )));
        }
        let mut within = 0usize;
        for &s in state.symbols().iter().rev() {
            if s >= self.radix {
                return Err(Error::OutOfAlphabet(format!("symbol {s}")));
            }
            within = within * self.radix + s;
        }
        Ok(self.offsets[l] + within)
    }

    /// Node id of a buffer given as symbols, oldest first; the caller
    /// guarantees `len <= K` and in-range symbols.
    pub(crate) fn index_of_symbols<I>(&self, len: usize, newest_first: I) -> NodeId
    where
        I: Iterator<Item = usize>,
    {
        let mut within = 0usize;
        for s in newest_first {
            within = within * self.radix + s;
        }
        self.offsets[len] + within
    }

    pub fn state_of(&self, node: NodeId) -> BufferState {
        let l = self.level(node);
        let mut within = self.within(node);
        let mut symbols = Vec::with_capacity(l);
        for _ in 0..l {
            symbols.push(within % self.radix);
            within /= self.radix;
        }
        BufferState::new(symbols)
    }

    /// Probability that `l` i.i.d. arrivals produce exactly this state.
    pub fn state_prob(&self, node: NodeId) -> f64 {
        self.state_prob[node]
    }

    /// Nodes `b || x` for every `x` in `V^k`, with the probability of `x`.
    pub fn extensions(&self, node: NodeId, k: usize) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        let l = self.level(node);
        debug_assert!(l + k <= self.depth);
        let base = self.offsets[l + k] + self.within(node);
        let stride = self.pows[l];
        let weights = &self.state_prob[self.offsets[k]..self.offsets[k + 1]];
        weights.iter().enumerate().map(move |(m, w)| (base + stride * m, *w))
    }

    /// `E[f(b || V^k)]` for a per-node field `f`.
    pub fn expectation_over_suffix(&self, node: NodeId, k: usize, field: &[f64]) -> Result<f64> {
        if self.level(node) + k > self.depth {
            return Err(Error::InvalidArgument(format!(
                "suffix of length {k} overflows buffer size {} from level {}",
                self.depth,
                self.level(node)
            )));
        }
        Ok(self.extensions(node, k).map(|(n, w)| w * field[n]).sum())
    }

    /// Action `s(b)` (1-based index of the selected packet).
    pub fn action(&self, node: NodeId) -> usize {
        self.action[node] as usize
    }

    pub fn actions(&self) -> &[u32] {
        &self.action
    }

    /// Relative values `h`, indexed by node.
    pub fn relative_values(&self) -> &[f64] {
        &self.h
    }

    pub fn relative_value(&self, node: NodeId) -> f64 {
        self.h[node]
    }

    /// Installs an action table; entries must be feasible (`1 <= s <= l`).
    pub fn set_actions(&mut self, actions: &[u32]) -> Result<()> {
        if actions.len() != self.node_count() {
            return Err(Error::InvalidArgument(format!(
                "action table has {} entries for {} nodes",
                actions.len(),
                self.node_count()
            )));
        }
        for node in self.states() {
            let s = actions[node] as usize;
            if s == 0 || s > self.level(node) {
                return Err(Error::InfeasibleAction { action: s, state: self.state_of(node).to_string() });
            }
        }
        self.action.copy_from_slice(actions);
        self.action[ROOT] = 0;
        Ok(())
    }

    /// Copies the actions of a shallower tree and extends them to the new
    /// levels by chaining (`s(b) = s(parent(b)) + 1`).
    pub fn warm_start_from(&mut self, other: &StateTree) -> Result<()> {
        if other.radix != self.radix || other.depth > self.depth {
            return Err(Error::InvalidArgument("warm start needs a shallower tree over the same alphabet".into()));
        }
        let shared = other.node_count();
        self.action[..shared].copy_from_slice(&other.action);
        for node in shared..self.node_count() {
            let parent = self.parent(node).expect("non-root");
            self.action[node] = self.action[parent] + 1;
        }
        Ok(())
    }

    /// Writes `state,action,h` rows (state entries space-separated values).
    pub fn dump_csv<W: Write>(&self, model: &Model, mut out: W) -> Result<()> {
        writeln!(out, "state,action,h")?;
        for node in self.states() {
            let values = self
                .state_of(node)
                .values(model)
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(out, "{values},{},{}", self.action(node), self.h[node])?;
        }
        Ok(())
    }
}

/// `sum_{l=0..k} r^l`, saturating.
pub fn node_count(radix: usize, k: usize) -> u128 {
    let r = radix as u128;
    let mut total: u128 = 0;
    let mut pw: u128 = 1;
    for _ in 0..=k {
        total = total.saturating_add(pw);
        pw = pw.saturating_mul(r);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ImportanceDist, InterspeakDist};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn model(r: usize) -> Model {
        let values: Vec<f64> = (0..r).map(|i| 1.0 + 3.0 * i as f64).collect();
        let probs = match r {
            1 => vec![1.0],
            2 => vec![0.7, 0.3],
            _ => {
                let mut p = vec![1.0 / r as f64; r];
                p[0] += 1.0 - p.iter().sum::<f64>();
                p
            }
        };
        Model::new(ImportanceDist::new(values, probs).unwrap(), InterspeakDist::geometric(0.2).unwrap())
    }

    #[test]
    fn node_counts() {
        assert_eq!(StateTree::build(&model(2), 3).unwrap().node_count(), 15);
        assert_eq!(StateTree::build(&model(2), 1).unwrap().node_count(), 3);
        assert_eq!(StateTree::build(&model(3), 2).unwrap().node_count(), 13);
        assert_eq!(StateTree::build(&model(1), 4).unwrap().node_count(), 5);
    }

    #[test]
    fn cap_rejects_with_size_estimate() {
        let err = StateTree::build(&model(2), 24).unwrap_err();
        assert!(err.to_string().contains("33554431"), "{err}");
        assert!(StateTree::build(&model(2), 23).is_ok());
        assert!(StateTree::build(&model(2), 0).is_err());
    }

    #[test]
    fn breadth_first_layout() {
        let t = StateTree::build(&model(2), 3).unwrap();
        assert_eq!(t.index_of(&BufferState::default()).unwrap(), ROOT);
        assert_eq!(t.index_of(&BufferState::new(vec![0])).unwrap(), 1);
        assert_eq!(t.index_of(&BufferState::new(vec![1])).unwrap(), 2);
        assert!(t.index_of(&BufferState::new(vec![2])).is_err());
        assert!(t.index_of(&BufferState::new(vec![0; 4])).is_err());
        let mut last_level = 0;
        for n in 0..t.node_count() {
            assert!(t.level(n) >= last_level);
            last_level = t.level(n);
            assert_eq!(t.state_of(n).len(), t.level(n));
            assert_eq!(t.index_of(&t.state_of(n)).unwrap(), n);
        }
    }

    #[test]
    fn from_values_rejects_foreign_entries() {
        let m = model(2);
        assert_eq!(BufferState::from_values(&m, &[4.0, 1.0]).unwrap().symbols(), &[1, 0]);
        assert!(matches!(BufferState::from_values(&m, &[2.0]), Err(Error::OutOfAlphabet(_))));
    }

    #[test]
    fn parent_drops_oldest_entry() {
        let t = StateTree::build(&model(3), 3).unwrap();
        let b = t.index_of(&BufferState::new(vec![2, 0, 1])).unwrap();
        let p = t.parent(b).unwrap();
        assert_eq!(t.state_of(p).symbols(), &[0, 1]);
        assert_eq!(t.oldest(b), 2);
        assert_eq!(t.symbol_at(b, 3), 1);
        assert_eq!(t.state_of(t.suffix_from(b, 3)).symbols(), &[1]);
        assert_eq!(t.suffix_from(b, 4), ROOT);
        assert_eq!(t.parent(ROOT), None);
        assert_eq!(t.child(b, 0), None);
    }

    #[test]
    fn expectation_examples() {
        let t = StateTree::build(&model(2), 2).unwrap();
        let b = t.index_of(&BufferState::new(vec![1])).unwrap();
        let mut h = vec![0.0; t.node_count()];
        h[b] = 3.5;
        assert_eq!(t.expectation_over_suffix(b, 0, &h).unwrap(), 3.5);
        // appending a newer packet: [1, 0] and [1, 1]
        h[t.index_of(&BufferState::new(vec![1, 0])).unwrap()] = 10.0;
        h[t.index_of(&BufferState::new(vec![1, 1])).unwrap()] = 20.0;
        assert_abs_diff_eq!(t.expectation_over_suffix(b, 1, &h).unwrap(), 13.0, epsilon = 1e-12);
        let c = vec![4.25; t.node_count()];
        assert_abs_diff_eq!(t.expectation_over_suffix(ROOT, 2, &c).unwrap(), 4.25, epsilon = 1e-12);
        assert!(t.expectation_over_suffix(b, 2, &h).is_err());
    }

    #[test]
    fn warm_start_chains_new_levels() {
        let m = model(2);
        let mut small = StateTree::build(&m, 2).unwrap();
        let mut acts = small.actions().to_vec();
        acts[small.index_of(&BufferState::new(vec![1, 0])).unwrap()] = 1;
        small.set_actions(&acts).unwrap();
        let mut big = StateTree::build(&m, 3).unwrap();
        big.warm_start_from(&small).unwrap();
        assert_eq!(big.action(big.index_of(&BufferState::new(vec![0, 1, 0])).unwrap()), 2);
        assert_eq!(big.action(big.index_of(&BufferState::new(vec![0, 0, 1])).unwrap()), 3);
    }

    proptest! {
        #[test]
        fn trie_links_round_trip(r in 1usize..4, k in 1usize..5) {
            let t = StateTree::build(&model(r), k).unwrap();
            prop_assert_eq!(t.node_count() as u128, node_count(r, k));
            let mut seen = vec![false; t.node_count()];
            for n in 0..t.node_count() {
                let state = t.state_of(n);
                let id = t.index_of(&state).unwrap();
                prop_assert!(!seen[id]);
                seen[id] = true;
                if t.level(n) < k {
                    for v in 0..r {
                        let c = t.child(n, v).unwrap();
                        prop_assert_eq!(t.parent(c), Some(n));
                        prop_assert_eq!(t.oldest(c), v);
                    }
                }
            }
            prop_assert!(seen.iter().all(|s| *s));
        }

        #[test]
        fn expectation_is_linear(scale in -3.0f64..3.0, seed in 0u64..1000) {
            let t = StateTree::build(&model(3), 3).unwrap();
            let h: Vec<f64> = (0..t.node_count()).map(|i| ((i as u64 * 2654435761 + seed) % 97) as f64 / 7.0).collect();
            let scaled: Vec<f64> = h.iter().map(|x| x * scale).collect();
            for n in t.level_range(1) {
                let a = t.expectation_over_suffix(n, 2, &h).unwrap();
                let b = t.expectation_over_suffix(n, 2, &scaled).unwrap();
                prop_assert!((b - scale * a).abs() < 1e-12);
            }
        }
    }
}
