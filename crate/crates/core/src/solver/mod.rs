//! Truncated average-cost MDP over buffer states.

pub mod cost;
pub mod evaluate;
pub mod improve;
pub mod iteration;
pub mod sweep;

pub use cost::{c_value, kappa_update, one_step_cost, Continuation, CostWeights};
pub use evaluate::{evaluate_components, evaluate_policy, evaluate_weighted, Evaluation};
pub use improve::{policy_improve, Improvement};
pub use iteration::{generic_policy_iteration, policy_iteration, solve_from, solve_many, PolicySolution, MAX_ITERS};
pub use sweep::{eta_grid, sweep_eta, ConverseLine, CurvePoint, TradeoffCurve};
