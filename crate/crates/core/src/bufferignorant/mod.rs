//! Headerless transmission: the sender sees only how many payload bits are
//! waiting and ships `N` contiguous bits per speaking time, with no
//! timestamps.
//!
//! States are buffer lengths `l` at speaking times. Action `s` sends bits
//! `s - N + 1 ..= s` (oldest first), loses the `(s - N)^+` bits before them
//! and keeps the `l - s` newer ones, which is the excess age of the
//! delivered chunk. Distortion is reported per slot, age per speaking time.

mod tunstall;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::{ImportanceDist, InterspeakDist, Model};
use crate::par::Exec;
use crate::sim::{simulate_bit_policy, BitMode, LengthPolicy, SimConfig, SimResult};
use crate::solver::CostWeights;

pub use tunstall::{exhaustive_best_length, TunstallDictionary};

pub const MAX_ITERS: usize = 1000;
const IMPROVE_EPS: f64 = 1e-12;

/// I.i.d. bits: a 1 has importance `v` and probability `q`, a 0 has
/// importance 1. Speaking times are geometric with parameter `p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinarySource {
    pub q: f64,
    pub v: f64,
    pub p: f64,
    pub n_bits: usize,
}

impl BinarySource {
    pub fn new(q: f64, v: f64, p: f64, n_bits: usize) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidModel(format!("bit probability q = {q} must be in (0, 1)")));
        }
        if !(v >= 1.0 && v.is_finite()) {
            return Err(Error::InvalidModel(format!("importance v = {v} must be at least 1")));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidModel(format!("speaking probability p = {p} must be in (0, 1]")));
        }
        if n_bits == 0 {
            return Err(Error::InvalidModel("N must be at least 1".into()));
        }
        Ok(Self { q, v, p, n_bits })
    }

    /// Reads `q`, `v`, `p` from a two-level model with geometric `Z`.
    pub fn from_model(model: &Model, n_bits: usize) -> Result<Self> {
        let (p, q) = model.binary_geometric()?;
        let vals = model.values();
        if (vals[0] - 1.0).abs() > 1e-12 {
            return Err(Error::Unsupported(format!(
                "bit sources need the unimportant level at 1, got {}",
                vals[0]
            )));
        }
        Self::new(q, vals[1], p, n_bits)
    }

    pub fn with_n_bits(self, n_bits: usize) -> Result<Self> {
        Self::new(self.q, self.v, self.p, n_bits)
    }

    pub fn mu_v(&self) -> f64 {
        (1.0 - self.q) + self.v * self.q
    }

    /// The same source seen as a packet model (one packet per bit).
    pub fn bit_model(&self) -> Result<Model> {
        Ok(Model::new(
            ImportanceDist::new(vec![1.0, self.v], vec![1.0 - self.q, self.q])?,
            InterspeakDist::geometric(self.p)?,
        ))
    }

    fn z(&self) -> InterspeakDist {
        InterspeakDist::Geometric(self.p)
    }
}

/// `g(l, s) = mu_V p (s - N)^+ + eta (l - s)`.
pub fn bi_one_step_cost(source: &BinarySource, eta: f64, l: usize, s: usize) -> f64 {
    weighted_cost(source, CostWeights::tradeoff(eta), l, s)
}

fn weighted_cost(source: &BinarySource, w: CostWeights, l: usize, s: usize) -> f64 {
    debug_assert!(s >= 1 && s <= l);
    w.distortion * source.mu_v() * source.p * s.saturating_sub(source.n_bits) as f64 + w.age * (l - s) as f64
}

/// Keep `tau` bits back: `s(l) = min(max(l - tau, N), l)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ThresholdPolicy {
    pub tau: usize,
    pub n_bits: usize,
}

impl ThresholdPolicy {
    pub fn new(tau: usize, n_bits: usize) -> Self {
        Self { tau, n_bits }
    }

    /// Bits left in the buffer after speaking at length `l`.
    pub fn remainder(&self, l: usize) -> usize {
        l - self.select(l)
    }
}

impl LengthPolicy for ThresholdPolicy {
    fn select(&self, l: usize) -> usize {
        l.saturating_sub(self.tau).max(self.n_bits).min(l)
    }
}

/// Optimal length policy on `1..=L`; beyond `L` the remainder stays at
/// its value at `L`.
#[derive(Clone, Debug, PartialEq)]
pub struct BiSolution {
    pub eta: f64,
    pub n_bits: usize,
    pub lambda: f64,
    pub delta_e: f64,
    pub d: f64,
    pub iterations: usize,
    actions: Vec<usize>,
    h: Vec<f64>,
}

impl BiSolution {
    pub fn cap(&self) -> usize {
        self.actions.len()
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    /// Relative values `h(1..=L)` with `h(1) = 0`.
    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// The `tau` whose threshold policy agrees with this one everywhere.
    pub fn threshold(&self) -> Option<usize> {
        let cap = self.cap();
        let tau = cap - self.actions[cap - 1];
        let th = ThresholdPolicy::new(tau, self.n_bits);
        (1..=cap).all(|l| th.select(l) == self.select(l)).then_some(tau)
    }
}

impl LengthPolicy for BiSolution {
    fn select(&self, l: usize) -> usize {
        let cap = self.cap();
        if l <= cap {
            self.actions[l - 1]
        } else {
            l - (cap - self.actions[cap - 1])
        }
    }
}

/// Policy iteration on the length MDP.
///
/// Lengths above the cap `L` are folded in with `h(l) = h(L) + mu_V p (l - L)`,
/// which is exact when the policy keeps a fixed remainder there. The cap
/// starts at `2N + ceil(N mu_V / eta) + 8` and doubles whenever the
/// solved remainder comes within `N + 2` of it.
pub fn bi_policy_iteration(source: &BinarySource, eta: f64) -> Result<BiSolution> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
    }
    let n = source.n_bits;
    let reach = (n as f64 * source.mu_v() / eta).ceil();
    if reach > 1e6 {
        return Err(Error::InvalidArgument(format!("eta = {eta} needs a length cap above 10^6")));
    }
    let mut cap = 2 * n + reach as usize + 8;
    loop {
        let sol = solve_capped(source, eta, cap)?;
        let max_rem = (1..=cap).map(|l| l - sol.actions[l - 1]).max().unwrap_or(0);
        if max_rem + n + 2 < cap {
            return Ok(sol);
        }
        cap *= 2;
    }
}

fn solve_capped(source: &BinarySource, eta: f64, cap: usize) -> Result<BiSolution> {
    let w = CostWeights::tradeoff(eta);
    let mut actions: Vec<usize> = (1..=cap).collect();
    for it in 1..=MAX_ITERS {
        let (lambda, h) = evaluate_lengths(source, &actions, w)?;
        let cont = continuation(source, &h, w);
        let mut changed = 0;
        for l in 1..=cap {
            let q = |s: usize| weighted_cost(source, w, l, s) + cont[l - s];
            let cur = actions[l - 1];
            let mut best = (cur, q(cur));
            for s in (1..=l).rev() {
                let v = q(s);
                if v < best.1 - IMPROVE_EPS {
                    best = (s, v);
                }
            }
            if best.0 != cur {
                actions[l - 1] = best.0;
                changed += 1;
            }
        }
        if changed == 0 {
            let (delta_e, _) = evaluate_lengths(source, &actions, CostWeights::AGE)?;
            let (d, _) = evaluate_lengths(source, &actions, CostWeights::DISTORTION)?;
            return Ok(BiSolution { eta, n_bits: source.n_bits, lambda, delta_e, d, iterations: it, actions, h });
        }
        if it == MAX_ITERS {
            return Err(Error::NoConvergence { iters: it, changed });
        }
    }
    unreachable!("loop returns")
}

/// `cont[r] = E[h(r + Z)]` with the linear tail beyond the cap.
fn continuation(source: &BinarySource, h: &[f64], w: CostWeights) -> Vec<f64> {
    let cap = h.len();
    let z = source.z();
    let slope = w.distortion * source.mu_v() * source.p;
    (0..cap)
        .map(|r| {
            let inside: f64 = (1..=cap - r).map(|k| z.pmf(k) * h[r + k - 1]).sum();
            inside + z.tail(cap - r + 1) * h[cap - 1] + slope * z.excess_mean(cap - r)
        })
        .collect()
}

/// Average cost and relative values (`h(1) = 0`) of a length policy.
fn evaluate_lengths(source: &BinarySource, actions: &[usize], w: CostWeights) -> Result<(f64, Vec<f64>)> {
    let cap = actions.len();
    let z = source.z();
    let slope = w.distortion * source.mu_v() * source.p;
    // unknowns: x[0] = lambda, x[i] = h(i + 1) for i >= 1
    let mut a = Matrix::zeros(cap);
    let mut b = vec![0.0; cap];
    for l in 1..=cap {
        let row = l - 1;
        let s = actions[l - 1];
        let r = l - s;
        a.add(row, 0, 1.0);
        if l > 1 {
            a.add(row, l - 1, 1.0);
        }
        for k in 1..=cap - r {
            let m = r + k;
            if m > 1 {
                a.add(row, m - 1, -z.pmf(k));
            }
        }
        if cap > 1 {
            a.add(row, cap - 1, -z.tail(cap - r + 1));
        }
        b[row] = weighted_cost(source, w, l, s) + slope * z.excess_mean(cap - r);
    }
    let x = linalg::solve(a, b)?;
    let mut h = x.clone();
    h[0] = 0.0;
    Ok((x[0], h))
}

/// Excess age, per-slot distortion and the stationary length law of a
/// threshold policy. `pi[i]` is the probability of length `i + 1` for
/// `i <= tau`; beyond that it decays by `1 - p` per step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdPoint {
    pub tau: usize,
    pub delta_e: f64,
    pub d: f64,
    pub pi: Vec<f64>,
}

impl ThresholdPoint {
    /// Total probability including the geometric tail.
    pub fn total_mass(&self, p: f64) -> f64 {
        let head: f64 = self.pi.iter().sum();
        head + self.pi.last().copied().unwrap_or(0.0) * (1.0 - p) / p
    }
}

/// Closed form, valid for `tau = 0` and `tau > N`.
pub fn threshold_closed_form(source: &BinarySource, tau: usize) -> Result<ThresholdPoint> {
    let (p, n, mu_v) = (source.p, source.n_bits, source.mu_v());
    let pb = 1.0 - p;
    if tau == 0 {
        return Ok(ThresholdPoint { tau, delta_e: 0.0, d: mu_v * pb.powi(n as i32), pi: vec![p] });
    }
    if tau <= n {
        return Err(Error::Unsupported(format!("closed form needs tau > N (tau = {tau}, N = {n})")));
    }
    // s[k][j] = S^{(k)}_j
    let kmax = tau.div_ceil(n);
    let mut s = vec![vec![0.0; tau]; kmax + 1];
    for j in 0..tau {
        s[0][j] = 1.0 + j as f64 * p;
    }
    for k in 1..=kmax {
        let mut acc = 0.0;
        for j in 0..tau {
            acc += s[k - 1][j];
            s[k][j] = acc;
        }
    }
    // ratio[j] = pi_{tau - j} / pi_{tau + 1}
    let ratio: Vec<f64> = (0..tau)
        .map(|j| {
            let mut num = 1.0;
            for (k, sk) in s.iter().enumerate() {
                if j < k * n {
                    break;
                }
                let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
                num += sign * sk[j - k * n] * p.powi(k as i32) * pb.powi(((k + 1) * (n - 1)) as i32);
            }
            num / pb.powi(j as i32 + 1)
        })
        .collect();
    let top = 1.0 / (ratio.iter().sum::<f64>() + 1.0 / p);
    let mut pi = vec![0.0; tau + 1];
    for (j, r) in ratio.iter().enumerate() {
        pi[tau - j - 1] = r * top;
    }
    pi[tau] = top;
    let at = |l: usize| if l <= tau + 1 { pi[l - 1] } else { top * pb.powi((l - tau - 1) as i32) };
    let delta_e = (1..tau).map(|j| j as f64 * at(n + j)).sum::<f64>() + tau as f64 * top * pb.powi(n as i32 - 1) / p;
    let d = mu_v * top * pb.powi(n as i32) / p;
    Ok(ThresholdPoint { tau, delta_e, d, pi })
}

/// Stationary solve of the explicit length chain for any `tau`.
///
/// Lengths from `tau + N + 200` up are lumped into one state; the policy
/// keeps `tau` bits throughout that range, so the lumping is exact, and
/// the overshoot into it is memoryless.
pub fn threshold_numeric(source: &BinarySource, tau: usize) -> Result<ThresholdPoint> {
    let (p, n, mu_v) = (source.p, source.n_bits, source.mu_v());
    let pol = ThresholdPolicy::new(tau, n);
    let z = source.z();
    let lmax = tau + n + 200;
    let mut m = Matrix::zeros(lmax);
    for l in 1..=lmax {
        let r = pol.remainder(l);
        let row = m.row_mut(l - 1);
        for k in 1..lmax - r {
            row[r + k - 1] += z.pmf(k);
        }
        row[lmax - 1] += z.tail(lmax - r);
    }
    let pi_all = linalg::stationary(&m)?;
    let delta_e: f64 = (1..=lmax).map(|l| pi_all[l - 1] * pol.remainder(l) as f64).sum();
    let lost: f64 = (1..lmax).map(|l| pi_all[l - 1] * pol.select(l).saturating_sub(n) as f64).sum::<f64>()
        + pi_all[lmax - 1] * (lmax as f64 + (1.0 - p) / p - (tau + n) as f64);
    Ok(ThresholdPoint { tau, delta_e, d: mu_v * p * lost, pi: pi_all[..=tau].to_vec() })
}

/// The closed form divides an alternating sum by `(1 - p)^(j+1)`, so its
/// absolute error grows like `eps / (1 - p)^tau`.
pub fn closed_form_well_conditioned(source: &BinarySource, tau: usize) -> bool {
    tau == 0 || (tau > source.n_bits && (1.0 - source.p).powi(tau as i32) >= CONDITION_FLOOR)
}

const CONDITION_FLOOR: f64 = 1e-5;

/// Closed form where it applies and is well conditioned, the numeric
/// solve otherwise.
pub fn threshold_point(source: &BinarySource, tau: usize) -> Result<ThresholdPoint> {
    if closed_form_well_conditioned(source, tau) {
        threshold_closed_form(source, tau)
    } else {
        threshold_numeric(source, tau)
    }
}

/// Threshold policy with a Tunstall parse in place of the fixed chunk.
/// Excess age is the analytic one; distortion is simulated.
pub fn tunstall_threshold_point(
    source: &BinarySource,
    tau: usize,
    dict: &TunstallDictionary,
    cfg: &SimConfig,
) -> Result<(ThresholdPoint, SimResult)> {
    let mut pt = threshold_point(source, tau)?;
    let sim = simulate_bit_policy(source, &ThresholdPolicy::new(tau, source.n_bits), &BitMode::Tunstall(dict.clone()), cfg)?;
    pt.d = sim.d;
    Ok((pt, sim))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BiVariant {
    #[serde(rename = "bi")]
    Plain,
    #[serde(rename = "bit")]
    Tunstall,
}

impl fmt::Display for BiVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BiVariant::Plain => "bi",
            BiVariant::Tunstall => "bit",
        })
    }
}

impl FromStr for BiVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bi" => Ok(BiVariant::Plain),
            "bit" => Ok(BiVariant::Tunstall),
            _ => Err(Error::InvalidArgument(format!("unknown variant {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiCurvePoint {
    pub variant: BiVariant,
    #[serde(rename = "N")]
    pub n_bits: usize,
    pub tau: usize,
    pub delta_e: f64,
    pub d: f64,
    #[serde(skip)]
    pub se_d: f64,
}

/// Plain (analytic) and Tunstall (simulated, `2^N` words) points for each
/// `tau`. Each Tunstall run uses the configured seed.
pub fn bi_curves(
    source: &BinarySource,
    taus: &[usize],
    tunstall: Option<&SimConfig>,
    exec: Exec,
) -> Result<Vec<BiCurvePoint>> {
    let n = source.n_bits;
    let dict = match tunstall {
        Some(_) => Some(TunstallDictionary::build(1.0 - source.q, 1usize << n.min(20))?),
        None => None,
    };
    let rows = exec.map(taus, |&tau| -> Result<Vec<BiCurvePoint>> {
        let pt = threshold_point(source, tau)?;
        let mut out = vec![BiCurvePoint { variant: BiVariant::Plain, n_bits: n, tau, delta_e: pt.delta_e, d: pt.d, se_d: 0.0 }];
        if let (Some(cfg), Some(dict)) = (tunstall, dict.as_ref()) {
            let (tp, sim) = tunstall_threshold_point(source, tau, dict, cfg)?;
            out.push(BiCurvePoint {
                variant: BiVariant::Tunstall,
                n_bits: n,
                tau,
                delta_e: tp.delta_e,
                d: tp.d,
                se_d: sim.se_d,
            });
        }
        Ok(out)
    });
    let mut all = Vec::new();
    for r in rows {
        all.extend(r?);
    }
    all.sort_by_key(|p| (p.variant as u8, p.n_bits, p.tau));
    Ok(all)
}

/// Writes `variant,N,tau,delta_e,d`.
pub fn write_bi_csv<W: Write>(points: &[BiCurvePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn fig3(n: usize) -> BinarySource {
        BinarySource::new(0.3, 20.0, 0.2, n).unwrap()
    }

    #[test]
    fn one_step_cost_examples() {
        let s = fig3(3);
        assert_abs_diff_eq!(bi_one_step_cost(&s, 1.0, 10, 7), 8.36, epsilon = 1e-12);
        assert_eq!(bi_one_step_cost(&s, 1.0, 3, 3), 0.0);
        assert_abs_diff_eq!(bi_one_step_cost(&s, 0.5, 5, 2), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn threshold_policy_shape() {
        let th = ThresholdPolicy::new(4, 3);
        let s: Vec<usize> = (1..=10).map(|l| th.select(l)).collect();
        assert_eq!(s, [1, 2, 3, 3, 3, 3, 3, 4, 5, 6]);
    }

    #[test]
    fn tau_zero() {
        let pt = threshold_point(&fig3(3), 0).unwrap();
        assert_eq!(pt.delta_e, 0.0);
        assert_abs_diff_eq!(pt.d, 3.4304, epsilon = 1e-12);
        let num = threshold_numeric(&fig3(3), 0).unwrap();
        assert_abs_diff_eq!(num.d, 3.4304, epsilon = 1e-10);
        assert_abs_diff_eq!(num.delta_e, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_matches_stationary_solve() {
        for n in 1..=6 {
            for p in [0.2, 0.5, 0.7, 0.9] {
                let src = BinarySource::new(0.3, 20.0, p, n).unwrap();
                for tau in (n + 1..=12).filter(|t| closed_form_well_conditioned(&src, *t)) {
                    let cf = threshold_closed_form(&src, tau).unwrap();
                    let num = threshold_numeric(&src, tau).unwrap();
                    for (a, b) in cf.pi.iter().zip(&num.pi) {
                        assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
                    }
                    assert_relative_eq!(cf.delta_e, num.delta_e, epsilon = 1e-9, max_relative = 1e-9);
                    assert_relative_eq!(cf.d, num.d, epsilon = 1e-9, max_relative = 1e-9);
                }
            }
        }
    }

    #[test]
    fn closed_form_mass_is_one() {
        for n in 1..=8 {
            let src = fig3(n);
            for tau in (n + 1)..=30 {
                let pt = threshold_closed_form(&src, tau).unwrap();
                assert_abs_diff_eq!(pt.total_mass(src.p), 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn large_eta_sends_newest_chunk() {
        let src = fig3(3);
        let sol = bi_policy_iteration(&src, 100.0).unwrap();
        assert_eq!(sol.threshold(), Some(0));
        assert_abs_diff_eq!(sol.delta_e, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.d, 3.4304, epsilon = 1e-9);
    }

    #[test]
    fn solved_policy_is_single_threshold() {
        for n in [1, 3, 6] {
            let src = fig3(n);
            for eta in [0.1, 0.5, 1.0, 2.0] {
                let sol = bi_policy_iteration(&src, eta).unwrap();
                let s = sol.actions();
                for l in 2..=s.len() {
                    assert!(s[l - 1] == n.min(l) || s[l - 1] == s[l - 2] + 1, "N={n} eta={eta} l={l}");
                }
                let tau = sol.threshold().expect("single threshold");
                let pt = threshold_point(&src, tau).unwrap();
                assert_abs_diff_eq!(sol.delta_e, pt.delta_e, epsilon = 1e-8);
                assert_abs_diff_eq!(sol.d, pt.d, epsilon = 1e-8);
                assert_abs_diff_eq!(sol.lambda, pt.d + eta * pt.delta_e, epsilon = 1e-8);
                // every other threshold is no better
                for t in 0..=tau + 10 {
                    let other = threshold_point(&src, t).unwrap();
                    assert!(other.d + eta * other.delta_e >= sol.lambda - 1e-9);
                }
            }
        }
    }

    #[test]
    fn csv_layout() {
        let pts = vec![BiCurvePoint { variant: BiVariant::Tunstall, n_bits: 3, tau: 2, delta_e: 0.5, d: 1.25, se_d: 0.1 }];
        let mut buf = Vec::new();
        write_bi_csv(&pts, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "variant,N,tau,delta_e,d\nbit,3,2,0.5,1.25\n");
    }
}
