//! Policy evaluation: relative values `h` and average cost `lambda`.

use crate::error::{Error, Result};
use crate::linalg::{solve, Matrix};
use crate::model::Model;
use crate::par::Exec;
use crate::solver::cost::{continuation_terms, kappa_update, local_terms, newest_block, node_step_cost, CostWeights};
use crate::statetree::{NodeId, StateTree};

/// Largest tree the full (non-reduced) evaluation accepts.
pub const FULL_SYSTEM_CAP: usize = 4096;

/// Tolerance on every node equation after a solve, relative to the size of
/// the values involved.
pub const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub lambda: f64,
    pub h: Vec<f64>,
}

/// Chain structure of an action table: every state either selects its oldest
/// packet or acts like its parent shifted by one.
struct Chain {
    /// Nodes with `l > 1` and `s = 1`, in breadth-first order.
    b1: Vec<NodeId>,
    /// Nearest ancestor-or-self that selects its oldest packet.
    parentone: Vec<NodeId>,
    /// `sum b_i / mu` over the entries dropped on the way to `parentone`.
    skipped: Vec<f64>,
}

fn chain_of(model: &Model, tree: &StateTree) -> Option<Chain> {
    let n = tree.node_count();
    let mut parentone = vec![0; n];
    let mut skipped = vec![0.0; n];
    let mut b1 = Vec::new();
    for node in tree.states() {
        let s = tree.action(node);
        if tree.level(node) == 1 || s == 1 {
            parentone[node] = node;
            if tree.level(node) > 1 {
                b1.push(node);
            }
            continue;
        }
        let parent = tree.parent(node)?;
        if s != tree.action(parent) + 1 {
            return None;
        }
        parentone[node] = parentone[parent];
        skipped[node] = skipped[parent] + model.values()[tree.oldest(node)] / model.mu();
    }
    Some(Chain { b1, parentone, skipped })
}

/// Evaluates the tree's actions at tradeoff weight `eta`.
pub fn evaluate_policy(model: &Model, tree: &StateTree, eta: f64, exec: Exec) -> Result<Evaluation> {
    evaluate_weighted(model, tree, CostWeights::tradeoff(eta), exec)
}

/// Evaluates the tree's actions under arbitrary cost weights.
///
/// Chained action tables (everything Algorithm-3 style improvement produces)
/// go through the reduced system over `B_1`; anything else falls back to the
/// full system, which is only accepted for small trees.
pub fn evaluate_weighted(model: &Model, tree: &StateTree, w: CostWeights, exec: Exec) -> Result<Evaluation> {
    let eval = match chain_of(model, tree) {
        Some(chain) => reduced(model, tree, &chain, w, exec)?,
        None => evaluate_full(model, tree, w, exec)?,
    };
    check_residuals(model, tree, &eval, w, exec)?;
    Ok(eval)
}

/// `(delta_e, d)` of the tree's actions, from two evaluations that keep only
/// one cost component each.
pub fn evaluate_components(model: &Model, tree: &StateTree, exec: Exec) -> Result<(f64, f64)> {
    let age = evaluate_weighted(model, tree, CostWeights::AGE, exec)?;
    let dist = evaluate_weighted(model, tree, CostWeights::DISTORTION, exec)?;
    Ok((age.lambda, dist.lambda))
}

fn reduced(model: &Model, tree: &StateTree, chain: &Chain, w: CostWeights, exec: Exec) -> Result<Evaluation> {
    // column 0 is lambda, column i + 1 is h(b1[i])
    let dim = chain.b1.len() + 1;
    let mut col_of = vec![usize::MAX; tree.node_count()];
    for (i, &b) in chain.b1.iter().enumerate() {
        col_of[b] = i + 1;
    }
    // h(n) = w_d skipped(n) + h(parentone(n)), and h = 0 on length-1 states
    let fold = |row: &mut [f64], rhs: &mut f64, n: NodeId, coeff: f64| {
        *rhs += coeff * w.distortion * chain.skipped[n];
        let col = col_of[chain.parentone[n]];
        if col != usize::MAX {
            row[col] -= coeff;
        }
    };

    let mut shared_row = vec![0.0; dim];
    let mut shared_rhs = 0.0;
    newest_block(model, tree, &mut |n, c| fold(&mut shared_row, &mut shared_rhs, n, c));

    let row_for = |target: Option<NodeId>| {
        let mut row = shared_row.clone();
        let mut rhs = shared_rhs;
        let c = match target {
            None => crate::statetree::ROOT,
            Some(b) => {
                row[col_of[b]] += 1.0;
                rhs += w.age * (tree.level(b) - 1) as f64;
                tree.parent(b).expect("non-root")
            }
        };
        row[0] += 1.0;
        let mut acc = 0.0;
        let constant = local_terms(model, tree, c, w.distortion, &mut |n, coeff| fold(&mut row, &mut acc, n, coeff));
        (row, rhs + acc + constant)
    };

    let targets: Vec<Option<NodeId>> = std::iter::once(None).chain(chain.b1.iter().copied().map(Some)).collect();
    let rows = exec.map(&targets, |t| row_for(*t));
    let mut a = Matrix::zeros(dim);
    let mut b = vec![0.0; dim];
    for (i, (row, rhs)) in rows.into_iter().enumerate() {
        a.row_mut(i).copy_from_slice(&row);
        b[i] = rhs;
    }
    let x = solve(a, b)?;

    let mut h = vec![0.0; tree.node_count()];
    for (i, &node) in chain.b1.iter().enumerate() {
        h[node] = x[i + 1];
    }
    for node in tree.states() {
        if tree.level(node) > 1 && tree.action(node) != 1 {
            h[node] = w.distortion * chain.skipped[node] + h[chain.parentone[node]];
        }
    }
    Ok(Evaluation { lambda: x[0], h })
}

/// Solves the node equations of every state at once; column 0 is `lambda`,
/// column `n` is `h(n)` and row 0 pins `h` of the first length-1 state.
pub fn evaluate_full(model: &Model, tree: &StateTree, w: CostWeights, exec: Exec) -> Result<Evaluation> {
    let n = tree.node_count();
    if n > FULL_SYSTEM_CAP {
        return Err(Error::Unsupported(format!(
            "full policy evaluation needs {n} unknowns, above the cap of {FULL_SYSTEM_CAP}"
        )));
    }
    let states: Vec<NodeId> = tree.states().collect();
    let rows = exec.map(&states, |&node| {
        let mut row = vec![0.0; n];
        row[0] += 1.0;
        row[node] += 1.0;
        let s = tree.action(node);
        let constant = continuation_terms(model, tree, tree.suffix_from(node, s + 1), w.distortion, |m, c| {
            row[m] -= c;
        });
        (row, node_step_cost(model, tree, node, s, w) + constant)
    });
    let mut a = Matrix::zeros(n);
    let mut b = vec![0.0; n];
    a.set(0, tree.level_range(1).start, 1.0);
    for (&node, (row, rhs)) in states.iter().zip(rows) {
        a.row_mut(node).copy_from_slice(&row);
        b[node] = rhs;
    }
    let mut x = solve(a, b)?;
    let lambda = x[0];
    x[0] = 0.0;
    Ok(Evaluation { lambda, h: x })
}

fn check_residuals(model: &Model, tree: &StateTree, eval: &Evaluation, w: CostWeights, exec: Exec) -> Result<()> {
    let cont = kappa_update(model, tree, &eval.h, w.distortion, exec);
    let scale = eval.h.iter().fold(eval.lambda.abs(), |m, v| m.max(v.abs())).max(1.0);
    let states: Vec<NodeId> = tree.states().collect();
    let worst = exec
        .map(&states, |&node| {
            let s = tree.action(node);
            let r = eval.h[node] + eval.lambda - cont.c_value(model, tree, node, s, w);
            (r.abs(), node)
        })
        .into_iter()
        .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
    if worst.0 > RESIDUAL_TOL * scale {
        return Err(Error::Internal(format!(
            "evaluation residual {:e} at state {}",
            worst.0,
            tree.state_of(worst.1)
        )));
    }
    Ok(())
}
