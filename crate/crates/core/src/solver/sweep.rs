//! Warm-started sweeps over the tradeoff weight and the converse envelope.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::par::Exec;
use crate::solver::iteration::{solve_from, PolicySolution};
use crate::statetree::StateTree;

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CurvePoint {
    pub eta: f64,
    pub lambda: f64,
    pub delta_e: f64,
    pub d: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub b1_size: usize,
    pub iters: usize,
}

/// `D + eta * Delta_e >= intercept` holds for every achievable point.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct ConverseLine {
    pub eta: f64,
    pub intercept: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TradeoffCurve {
    pub points: Vec<CurvePoint>,
    /// Weights that could not be solved, with the reason.
    pub failures: Vec<(f64, String)>,
}

impl TradeoffCurve {
    pub fn converse_lines(&self) -> Vec<ConverseLine> {
        self.points.iter().map(|p| ConverseLine { eta: p.eta, intercept: p.lambda }).collect()
    }

    /// Smallest distortion any policy can reach at excess age `delta_e`,
    /// according to the solved lines.
    pub fn converse_bound(&self, delta_e: f64) -> f64 {
        self.points
            .iter()
            .map(|p| p.lambda - p.eta * delta_e)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest violation of `d + eta * delta_e >= J*(eta)` over all lines
    /// (negative when the point is strictly inside the achievable region).
    pub fn worst_violation(&self, delta_e: f64, d: f64) -> f64 {
        self.points
            .iter()
            .map(|p| p.lambda - (d + p.eta * delta_e))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Abscissa where the last two converse lines meet; the envelope is exact
    /// up to this age.
    pub fn exact_until(&self) -> Option<f64> {
        let n = self.points.len();
        if n < 2 {
            return None;
        }
        let (a, b) = (&self.points[n - 2], &self.points[n - 1]);
        Some((a.lambda - b.lambda) / (a.eta - b.eta))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_converse_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for l in self.converse_lines() {
            w.serialize(l)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `count` weights spaced geometrically from `eta_max` down to `eta_min`.
pub fn eta_grid(model: &Model, eta_min: f64, count: usize) -> Result<Vec<f64>> {
    let top = model.eta_max();
    if count == 0 || !(eta_min > 0.0) || eta_min > top {
        return Err(Error::InvalidArgument(format!(
            "eta grid needs count >= 1 and 0 < eta_min <= eta_max = {top}"
        )));
    }
    if count == 1 {
        return Ok(vec![top]);
    }
    let ratio = (eta_min / top).powf(1.0 / (count - 1) as f64);
    let mut grid: Vec<f64> = (0..count).map(|i| top * ratio.powi(i as i32)).collect();
    grid[count - 1] = eta_min;
    Ok(grid)
}

/// Solves a strictly decreasing list of weights, reusing each optimal policy
/// as the starting point of the next solve. The tree grows when `K(eta)`
/// does; new deeper states start from their parent's action shifted by one.
pub fn sweep_eta(model: &Model, etas: &[f64], exec: Exec) -> Result<TradeoffCurve> {
    if etas.is_empty() {
        return Err(Error::InvalidArgument("empty eta list".into()));
    }
    if etas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("eta values must be strictly decreasing".into()));
    }
    let mut curve = TradeoffCurve::default();
    let mut prev: Option<StateTree> = None;
    for &eta in etas {
        match solve_warm(model, eta, prev.as_ref(), exec) {
            Ok(sol) => {
                curve.points.push(point(&sol));
                prev = Some(sol.tree);
            }
            Err(e) => curve.failures.push((eta, e.to_string())),
        }
    }
    Ok(curve)
}

fn solve_warm(model: &Model, eta: f64, prev: Option<&StateTree>, exec: Exec) -> Result<PolicySolution> {
    let k = model.buffer_bound(eta)?;
    let tree = match prev {
        Some(old) if old.depth() == k => old.clone(),
        Some(old) if old.depth() < k => {
            let mut t = StateTree::build(model, k)?;
            t.warm_start_from(old)?;
            t
        }
        _ => StateTree::build(model, k)?,
    };
    solve_from(model, eta, tree, exec)
}

pub fn point(sol: &PolicySolution) -> CurvePoint {
    CurvePoint {
        eta: sol.eta,
        lambda: sol.lambda,
        delta_e: sol.delta_e,
        d: sol.d,
        k: sol.k,
        b1_size: sol.b1.len(),
        iters: sol.iterations,
    }
}
