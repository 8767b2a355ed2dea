//! One-step costs and the continuation functional of the truncated MDP.
//!
//! After action `s` in state `b` the unsent suffix `c = b_{>=s+1}` waits for
//! the next speaking time. `Z` slots later the buffer is `c || V^Z`, cut to the
//! `K` newest entries; whatever is cut is charged as distortion. The expected
//! cost of that step plus the relative value of the landing state is a linear
//! functional of `h` that depends only on `c`, written `F(c)` below, so
//! `C(b, s) = g(b, s) + F(b_{>=s+1})`.

use crate::model::Model;
use crate::par::Exec;
use crate::statetree::{NodeId, StateTree, ROOT};

/// Linear weights on the two cost components.
///
/// `(eta, 1)` gives the tradeoff cost, `(1, 0)` the excess age alone and
/// `(0, 1)` the distortion alone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostWeights {
    pub age: f64,
    pub distortion: f64,
}

impl CostWeights {
    pub fn tradeoff(eta: f64) -> Self {
        Self { age: eta, distortion: 1.0 }
    }

    pub const AGE: Self = Self { age: 1.0, distortion: 0.0 };
    pub const DISTORTION: Self = Self { age: 0.0, distortion: 1.0 };
}

/// `(1/mu) sum_{k<s} b_k + eta (l - s)` for a state given by its values.
pub fn one_step_cost(model: &Model, eta: f64, state: &[f64], s: usize) -> f64 {
    assert!(s >= 1 && s <= state.len(), "action {s} infeasible for length {}", state.len());
    let skipped: f64 = state[..s - 1].iter().sum();
    skipped / model.mu() + eta * (state.len() - s) as f64
}

/// `g(b, s)` for a tree node under the given weights.
pub fn node_step_cost(model: &Model, tree: &StateTree, node: NodeId, s: usize, w: CostWeights) -> f64 {
    let l = tree.level(node);
    let values = model.values();
    let skipped: f64 = (1..s).map(|j| values[tree.symbol_at(node, j)]).sum();
    w.distortion * skipped / model.mu() + w.age * (l - s) as f64
}

/// Expands `F(c)` term by term: calls `visit(n, coeff)` for every `h(n)` it
/// touches and returns the constant part (forgetting costs).
pub fn continuation_terms<V>(model: &Model, tree: &StateTree, c: NodeId, w_d: f64, mut visit: V) -> f64
where
    V: FnMut(NodeId, f64),
{
    let constant = local_terms(model, tree, c, w_d, &mut visit);
    newest_block(model, tree, &mut visit);
    constant
}

/// The part of `F(c)` that depends on `c`, including the forgetting costs.
pub(crate) fn local_terms<V>(model: &Model, tree: &StateTree, c: NodeId, w_d: f64, visit: &mut V) -> f64
where
    V: FnMut(NodeId, f64),
{
    let k = tree.depth();
    let r = tree.level(c);
    debug_assert!(r < k, "suffix after a selection has length below K");
    let mu = model.mu();
    let values = model.values();

    let mut constant = w_d * model.mean_importance() * model.z_excess_mean(k) / mu;
    for j in 1..=r {
        constant += w_d * values[tree.symbol_at(c, j)] * model.z_tail(k - r + j) / mu;
    }

    // nothing is cut while the buffer stays within K entries
    for z in 1..=(k - r).min(k - 1) {
        let pz = model.z_pmf(z);
        if pz > 0.0 {
            for (n, w) in tree.extensions(c, z) {
                visit(n, pz * w);
            }
        }
    }
    // the oldest entries of c fall off
    for z in (k - r + 1)..k {
        let pz = model.z_pmf(z);
        if pz > 0.0 {
            let kept = tree.suffix_from(c, z - (k - r) + 1);
            for (n, w) in tree.extensions(kept, z) {
                visit(n, pz * w);
            }
        }
    }
    constant
}

/// `q_K E[h(V^K)]`: K or more arrivals leave only the newest K, whatever `c` was.
pub(crate) fn newest_block<V>(model: &Model, tree: &StateTree, visit: &mut V)
where
    V: FnMut(NodeId, f64),
{
    let k = tree.depth();
    let qk = model.z_tail(k);
    if qk > 0.0 {
        for (n, w) in tree.extensions(ROOT, k) {
            visit(n, qk * w);
        }
    }
}

/// `C_h(b, s)`, evaluated directly from the definition.
pub fn c_value(model: &Model, tree: &StateTree, h: &[f64], node: NodeId, s: usize, w: CostWeights) -> f64 {
    let mut acc = 0.0;
    let constant = continuation_terms(model, tree, tree.suffix_from(node, s + 1), w.distortion, |n, c| {
        acc += c * h[n];
    });
    node_step_cost(model, tree, node, s, w) + constant + acc
}

/// Per-node `kappa` and continuation values `F`.
#[derive(Clone, Debug)]
pub struct Continuation {
    pub kappa: Vec<f64>,
    /// `F(c)` for `l(c) < K`; zero on level `K`.
    pub f: Vec<f64>,
}

impl Continuation {
    /// `C_h(b, 1) = age (l - 1) + F(parent(b))` for `l(b) >= 1`.
    pub fn c_one(&self, tree: &StateTree, node: NodeId, w_age: f64) -> f64 {
        w_age * (tree.level(node) - 1) as f64 + self.f[tree.parent(node).expect("non-root")]
    }

    /// `C_h(b, s)` for any feasible action.
    pub fn c_value(&self, model: &Model, tree: &StateTree, node: NodeId, s: usize, w: CostWeights) -> f64 {
        node_step_cost(model, tree, node, s, w) + self.f[tree.suffix_from(node, s + 1)]
    }
}

/// Computes `F(c)` for every node `c` with `l(c) < K` through the kappa
/// recursion in `O(K |V|^K)`.
///
/// `kappa(c)` collects the terms of `F(c)` in which `c` itself, or some of its
/// oldest entries, have been cut; those terms are shared with `parent(c)`
/// shifted by one slot.
pub fn kappa_update(model: &Model, tree: &StateTree, h: &[f64], w_d: f64, exec: Exec) -> Continuation {
    let k = tree.depth();
    let mu = model.mu();
    let values = model.values();
    let n = tree.node_count();
    let mut kappa = vec![0.0; n];
    let mut f = vec![0.0; n];

    kappa[ROOT] = model.z_tail(k) * expect(tree, ROOT, k, h)
        + w_d * model.mean_importance() * model.z_excess_mean(k) / mu;
    for r in 1..k {
        let range = tree.level_range(r);
        let start = range.start;
        let (done, rest) = kappa.split_at_mut(start);
        let done = &*done;
        exec.fill(&mut rest[..range.len()], start, |c| {
            let parent = tree.parent(c).expect("non-root");
            model.z_pmf(k - r) * expect(tree, c, k - r, h)
                + w_d * model.z_tail(k - r + 1) * values[tree.oldest(c)] / mu
                + done[parent]
        });
    }
    for r in 0..k {
        let range = tree.level_range(r);
        let start = range.start;
        let kappa = &kappa;
        exec.fill(&mut f[range], start, |c| {
            let head: f64 = (1..k - r).map(|z| model.z_pmf(z) * expect(tree, c, z, h)).sum();
            head + kappa[c]
        });
    }
    Continuation { kappa, f }
}

fn expect(tree: &StateTree, node: NodeId, z: usize, h: &[f64]) -> f64 {
    tree.extensions(node, z).map(|(m, w)| w * h[m]).sum()
}
