//! Policy iteration drivers.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::par::Exec;
use crate::solver::cost::CostWeights;
use crate::solver::evaluate::{evaluate_components, evaluate_full, evaluate_policy, Evaluation};
use crate::solver::improve::{exhaustive_improve, policy_improve};
use crate::statetree::{NodeId, StateTree};

pub const MAX_ITERS: usize = 1000;

/// A solved stationary policy together with its tree.
#[derive(Clone, Debug)]
pub struct PolicySolution {
    pub eta: f64,
    pub k: usize,
    pub lambda: f64,
    pub delta_e: f64,
    pub d: f64,
    pub iterations: usize,
    pub b1: Vec<NodeId>,
    pub tree: StateTree,
}

impl PolicySolution {
    pub fn actions(&self) -> &[u32] {
        self.tree.actions()
    }

    pub fn h(&self) -> &[f64] {
        self.tree.relative_values()
    }

    pub fn summary(&self) -> SolutionSummary {
        SolutionSummary {
            eta: self.eta,
            k: self.k,
            lambda: self.lambda,
            delta_e: self.delta_e,
            d: self.d,
            b1_size: self.b1.len(),
            iterations: self.iterations,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolutionSummary {
    pub eta: f64,
    pub k: usize,
    pub lambda: f64,
    pub delta_e: f64,
    pub d: f64,
    pub b1_size: usize,
    pub iterations: usize,
}

/// Efficient policy iteration, starting from send-newest on a tree of depth
/// `k` (default `K(eta)`).
pub fn policy_iteration(model: &Model, eta: f64, k: Option<usize>) -> Result<PolicySolution> {
    let k = match k {
        Some(k) => k,
        None => model.buffer_bound(eta)?,
    };
    let tree = StateTree::build(model, k)?;
    solve_from(model, eta, tree, Exec::default())
}

/// Efficient policy iteration starting from whatever actions `tree` holds.
pub fn solve_from(model: &Model, eta: f64, mut tree: StateTree, exec: Exec) -> Result<PolicySolution> {
    check_eta(eta)?;
    let mut iterations = 0;
    loop {
        let eval = evaluate_policy(model, &tree, eta, exec)?;
        let imp = policy_improve(model, &mut tree, &eval, eta, exec)?;
        iterations += 1;
        if imp.changed == 0 {
            return finish(model, eta, tree, eval, imp.b1, iterations, exec);
        }
        if iterations >= MAX_ITERS {
            return Err(Error::NoConvergence { iters: iterations, changed: imp.changed });
        }
    }
}

/// Textbook policy iteration over the full state space, with every feasible
/// action priced directly. Only meant for small trees.
pub fn generic_policy_iteration(model: &Model, eta: f64, k: usize) -> Result<PolicySolution> {
    check_eta(eta)?;
    let exec = Exec::default();
    let mut tree = StateTree::build(model, k)?;
    let mut iterations = 0;
    loop {
        let eval = evaluate_full(model, &tree, CostWeights::tradeoff(eta), exec)?;
        let changed = exhaustive_improve(model, &mut tree, &eval, eta, exec);
        iterations += 1;
        if changed == 0 {
            let b1 = tree.states().filter(|&n| tree.level(n) > 1 && tree.action(n) == 1).collect();
            return finish(model, eta, tree, eval, b1, iterations, exec);
        }
        if iterations >= MAX_ITERS {
            return Err(Error::NoConvergence { iters: iterations, changed });
        }
    }
}

fn finish(
    model: &Model,
    eta: f64,
    mut tree: StateTree,
    eval: Evaluation,
    b1: Vec<NodeId>,
    iterations: usize,
    exec: Exec,
) -> Result<PolicySolution> {
    tree.h.copy_from_slice(&eval.h);
    let (delta_e, d) = evaluate_components(model, &tree, exec)?;
    let gap = (d + eta * delta_e - eval.lambda).abs();
    if gap > 1e-9 * eval.lambda.abs().max(1.0) {
        return Err(Error::Internal(format!("cost components miss lambda by {gap:e}")));
    }
    Ok(PolicySolution { eta, k: tree.depth(), lambda: eval.lambda, delta_e, d, iterations, b1, tree })
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
    }
    Ok(())
}

/// Solves each weight from scratch; the solves are independent, so they run
/// concurrently under `Exec::Parallel`.
pub fn solve_many(model: &Model, etas: &[f64], exec: Exec) -> Vec<Result<PolicySolution>> {
    exec.map(etas, |&eta| {
        let k = model.buffer_bound(eta)?;
        let tree = StateTree::build(model, k)?;
        // the inner loops stay sequential so the outer fan-out owns the pool
        solve_from(model, eta, tree, Exec::Sequential)
    })
}
