//! Policy improvement over the trie (Algorithm 3 with the kappa speedup).

use crate::error::Result;
use crate::model::Model;
use crate::par::Exec;
use crate::solver::cost::{kappa_update, CostWeights};
use crate::solver::evaluate::Evaluation;
use crate::statetree::{NodeId, StateTree};

/// Strictness guard for "strictly better" comparisons.
pub const IMPROVE_EPS: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct Improvement {
    /// Number of states whose action changed.
    pub changed: usize,
    /// States with `l > 1` that now select their oldest packet.
    pub b1: Vec<NodeId>,
}

/// One improvement sweep, breadth-first.
///
/// A state either selects its oldest packet, or the best it can do is its
/// parent's best choice plus the cost of skipping `b_1`. Selecting `b_1` is
/// only considered while `b_1` is still within its reach `K_{b_1}(eta)`.
/// Writes `h`, the new actions and the `temp`/`cost`/`parentone` fields.
pub fn policy_improve(
    model: &Model,
    tree: &mut StateTree,
    eval: &Evaluation,
    eta: f64,
    exec: Exec,
) -> Result<Improvement> {
    let reach = (0..model.alphabet())
        .map(|i| model.buffer_bound_i(eta, i))
        .collect::<Result<Vec<_>>>()?;
    let cont = kappa_update(model, tree, &eval.h, 1.0, exec);
    let mu = model.mu();
    let values = model.values();
    tree.h.copy_from_slice(&eval.h);

    let old: Vec<u32> = tree.action.clone();
    for node in tree.level_range(1) {
        tree.action[node] = 1;
        tree.temp[node] = eval.lambda;
        tree.cost[node] = 0.0;
        tree.parentone[node] = node;
    }
    for l in 2..=tree.depth() {
        let range = tree.level_range(l);
        let t = &*tree;
        let cont = &cont;
        let reach = &reach;
        let updates = exec.map_range(range.clone(), |node| {
            let parent = t.parent(node).expect("non-root");
            let first = t.oldest(node);
            let skip = values[first] / mu;
            let alt = t.temp[parent] + skip;
            if l - 1 < reach[first] {
                let c1 = cont.c_one(t, node, eta);
                if c1 < alt - IMPROVE_EPS {
                    return (1u32, c1, 0.0, node);
                }
            }
            (t.action[parent] + 1, alt, t.cost[parent] + skip, t.parentone[parent])
        });
        for (node, (s, temp, cost, po)) in range.zip(updates) {
            tree.action[node] = s;
            tree.temp[node] = temp;
            tree.cost[node] = cost;
            tree.parentone[node] = po;
        }
    }

    let changed = tree.states().filter(|&n| old[n] != tree.action[n]).count();
    let b1 = tree.states().filter(|&n| tree.level(n) > 1 && tree.action[n] == 1).collect();
    Ok(Improvement { changed, b1 })
}

/// Exhaustive improvement used by the generic algorithm: every feasible
/// action is priced with the direct functional; ties go to the largest `s`.
pub(crate) fn exhaustive_improve(model: &Model, tree: &mut StateTree, eval: &Evaluation, eta: f64, exec: Exec) -> usize {
    let w = CostWeights::tradeoff(eta);
    tree.h.copy_from_slice(&eval.h);
    let states: Vec<NodeId> = tree.states().collect();
    let t = &*tree;
    let choices = exec.map(&states, |&node| {
        let l = t.level(node);
        let costs: Vec<(usize, f64)> = (1..=l)
            .filter(|&s| s == l || t.symbol_at(node, s) != 0)
            .map(|s| (s, crate::solver::cost::c_value(model, t, &eval.h, node, s, w)))
            .collect();
        let best = costs.iter().fold(f64::INFINITY, |m, c| m.min(c.1));
        costs.iter().rev().find(|c| c.1 <= best + IMPROVE_EPS).expect("nonempty").0 as u32
    });
    let mut changed = 0;
    for (&node, s) in states.iter().zip(choices) {
        if tree.action[node] != s {
            changed += 1;
            tree.action[node] = s;
        }
    }
    changed
}
