//! The acceptance battery: each check recomputes a result two independent
//! ways (closed form, brute-force solver, stationary solve or simulation)
//! and reports whether they agree at the stated tolerance.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bufferignorant::{
    exhaustive_best_length, threshold_closed_form, threshold_numeric, threshold_point, BinarySource,
    ThresholdPolicy, TunstallDictionary,
};
use crate::error::Result;
use crate::linalg;
use crate::model::{ImportanceDist, InterspeakDist, Model};
use crate::par::Exec;
use crate::sim::{
    simulate_bit_policy, simulate_erasure, simulate_policy, BitMode, SimConfig, SimResult, SolvedPolicy,
    StrategyPolicy,
};
use crate::solver::{eta_grid, generic_policy_iteration, policy_iteration, solve_from, sweep_eta, PolicySolution, TradeoffCurve};
use crate::statetree::{BufferState, StateTree};
use crate::strategies::{strategy_point, transition_matrix, Strategy};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyConfig {
    pub horizon: u64,
    pub seed: u64,
    /// Full-size instance counts instead of the quick subset.
    pub full: bool,
    /// Added to every converse intercept; a positive shift must make the
    /// dominance check fail.
    pub lambda_shift: f64,
    pub exec: Exec,
}

impl VerifyConfig {
    pub fn desk() -> Self {
        Self { horizon: 200_000, seed: 2024, full: false, lambda_shift: 0.0, exec: Exec::Parallel }
    }

    pub fn full() -> Self {
        Self { horizon: 1_000_000, full: true, ..Self::desk() }
    }

    fn sim(&self) -> Result<SimConfig> {
        SimConfig::new(self.horizon, self.seed)
    }
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

type Outcome = std::result::Result<String, String>;

pub const CHECKS: [(usize, &str); 11] = [
    (1, "d_min exactness"),
    (2, "send-latest above eta_max"),
    (3, "extreme-state thresholds"),
    (4, "efficient vs generic policy iteration"),
    (5, "reach bound"),
    (6, "prefix bounds and parent recursion"),
    (7, "solver vs simulator"),
    (8, "closed-form strategies"),
    (9, "threshold stationary law"),
    (10, "Tunstall dictionaries"),
    (11, "erasure-channel equivalence"),
];

pub fn run_check(id: usize, cfg: &VerifyConfig) -> Option<CheckResult> {
    let &(id, name) = CHECKS.iter().find(|c| c.0 == id)?;
    let start = Instant::now();
    let out = match id {
        1 => check_dmin(),
        2 => check_send_latest(),
        3 => check_extreme_states(),
        4 => check_oracle(cfg),
        5 => check_reach(cfg),
        6 => check_properties(),
        7 => check_simulator(cfg),
        8 => check_strategies(cfg),
        9 => check_thresholds(cfg),
        10 => check_tunstall(cfg),
        11 => check_erasure(cfg),
        _ => unreachable!(),
    };
    let (passed, detail) = match out {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    Some(CheckResult { id, name, passed, detail, elapsed: start.elapsed() })
}

pub fn run_all(cfg: &VerifyConfig) -> Vec<CheckResult> {
    CHECKS.iter().filter_map(|(id, _)| run_check(*id, cfg)).collect()
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

pub fn figure1_model() -> Model {
    binary_model(0.3, 20.0, 0.2)
}

pub fn figure2_model() -> Model {
    binary_model(0.2, 20.0, 0.3)
}

fn binary_model(q: f64, v: f64, p: f64) -> Model {
    Model::new(
        ImportanceDist::new(vec![1.0, v], vec![1.0 - q, q]).expect("valid importance"),
        InterspeakDist::geometric(p).expect("valid p"),
    )
}

/// Random model with `n` importance levels; every third draw uses a
/// finite interspeaking law.
pub fn random_model(rng: &mut ChaCha8Rng, n: usize) -> Model {
    let mut values: Vec<f64> = Vec::with_capacity(n);
    let mut v = 1.0;
    for _ in 0..n {
        values.push(v);
        v += rng.random_range(0.5..12.0);
    }
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let probs = raw.iter().map(|x| x / total).collect();
    let z = if rng.random_range(0..3) == 0 {
        let len = rng.random_range(1..5);
        let raw: Vec<f64> = (0..len).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        InterspeakDist::finite(raw.iter().map(|x| x / total).collect()).expect("valid pmf")
    } else {
        InterspeakDist::geometric(rng.random_range(0.15..0.9)).expect("valid p")
    };
    Model::new(ImportanceDist::new(values, probs).expect("valid importance"), z)
}

fn within(sim: f64, se: f64, target: f64) -> bool {
    (sim - target).abs() <= 4.0 * se + 1e-12
}

fn check_dmin() -> Outcome {
    let a = figure1_model().d_min();
    let b = figure2_model().d_min();
    ensure!((a - 2.7).abs() <= 1e-12, "figure 1 setting: d_min = {a}, expected 2.7");
    ensure!((b - 0.7).abs() <= 1e-12, "figure 2 setting: d_min = {b}, expected 0.7");
    Ok(format!("d_min = {a:.12}, {b:.12}"))
}

fn check_send_latest() -> Outcome {
    let m = figure1_model();
    for eta in [3.8, 4.0, 10.0] {
        let sol = ok(policy_iteration(&m, eta, None))?;
        let tree = &sol.tree;
        ensure!(tree.states().all(|n| tree.action(n) == tree.level(n)), "eta = {eta}: not send-latest");
        ensure!((sol.lambda - 5.36).abs() <= 1e-9, "eta = {eta}: lambda = {}", sol.lambda);
        ensure!(sol.delta_e.abs() <= 1e-12, "eta = {eta}: delta_e = {}", sol.delta_e);
    }
    Ok("lambda = 5.36, delta_e = 0 at eta 3.8, 4, 10".into())
}

fn check_extreme_states() -> Outcome {
    let m = figure1_model();
    let gap = 19.0 / m.mu();
    for l in 2..=5usize {
        let star = gap / (l - 1) as f64;
        let mut symbols = vec![1usize];
        symbols.extend(std::iter::repeat_n(0, l - 1));
        let state = BufferState::new(symbols);
        for (eta, want) in [(star - 1e-6, 1), (star + 1e-6, l)] {
            let sol = ok(policy_iteration(&m, eta, Some(5)))?;
            let node = ok(sol.tree.index_of(&state))?;
            let got = sol.tree.action(node);
            ensure!(got == want, "L = {l}, eta = {eta}: action {got}, expected {want}");
        }
    }
    Ok("actions flip 1 <-> L at (v_max - v_min) / (mu (L - 1)) for L = 2..5".into())
}

fn check_oracle(cfg: &VerifyConfig) -> Outcome {
    let models = if cfg.full { 20 } else { 6 };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cases = 0;
    let mut worst: f64 = 0.0;
    for i in 0..models {
        let m = random_model(&mut rng, 2 + i % 2);
        for k in 1..=4 {
            for eta in [0.5, 1.0, 2.0] {
                let fast = ok(StateTree::build(&m, k).and_then(|t| solve_from(&m, eta, t, cfg.exec)))?;
                let slow = ok(generic_policy_iteration(&m, eta, k))?;
                let diff = (fast.lambda - slow.lambda).abs();
                worst = worst.max(diff);
                ensure!(diff <= 1e-9, "model {i}, K = {k}, eta = {eta}: lambda {} vs {}", fast.lambda, slow.lambda);
                ensure!(fast.actions() == slow.actions(), "model {i}, K = {k}, eta = {eta}: action tables differ");
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} instances agree, max |lambda diff| = {worst:.2e}"))
}

/// Optimal solutions over a geometric grid for the two binary settings
/// plus one three-level model.
fn solved_instances(cfg: &VerifyConfig, max_k: usize) -> std::result::Result<Vec<(Model, PolicySolution)>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let models = [figure1_model(), figure2_model(), random_model(&mut rng, 3)];
    let count = if cfg.full { 24 } else { 10 };
    let mut out = Vec::new();
    for m in models {
        let bound = m.values().last().copied().unwrap_or(0.0) - m.values()[0];
        let etas = ok(eta_grid(&m, bound / (max_k as f64 * m.mu()), count))?;
        for sol in crate::solver::solve_many(&m, &etas, cfg.exec) {
            out.push((m.clone(), ok(sol)?));
        }
    }
    Ok(out)
}

fn check_reach(cfg: &VerifyConfig) -> Outcome {
    let solved = solved_instances(cfg, if cfg.full { 10 } else { 8 })?;
    let mut checked = 0usize;
    for (m, sol) in &solved {
        let tree = &sol.tree;
        for node in tree.states() {
            let (l, s) = (tree.level(node), tree.action(node));
            let symbol = tree.symbol_at(node, s);
            if s < l {
                ensure!(m.values()[symbol] > m.importance().v_min(), "state {} selects a stale minimum", tree.state_of(node));
                let k_i = ok(m.buffer_bound_i(sol.eta, symbol))?;
                ensure!(l - s < k_i, "eta = {}: state {} leaves {} newer packets, bound {k_i}", sol.eta, tree.state_of(node), l - s);
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} states over {} solutions", solved.len()))
}

fn check_properties() -> Outcome {
    let cfg = VerifyConfig::desk();
    let solved = solved_instances(&cfg, 5)?;
    let mut worst: f64 = 0.0;
    for (m, sol) in &solved {
        let tree = &sol.tree;
        let h = sol.h();
        let mu = m.mu();
        for node in tree.states() {
            let l = tree.level(node);
            let s = tree.action(node);
            let mut prefix_sum = 0.0;
            for j in 1..l {
                prefix_sum += m.values()[tree.symbol_at(node, j)];
                let tail = tree.suffix_from(node, j + 1);
                let s_tail = tree.action(tail);
                ensure!(
                    s == j + s_tail || s <= j,
                    "eta = {}: s({}) = {s} but s(suffix) = {s_tail} at split {j}",
                    sol.eta,
                    tree.state_of(node)
                );
                ensure!(h[tail] <= h[node] + 1e-10, "eta = {}: h drops when prefixing {}", sol.eta, tree.state_of(node));
                ensure!(
                    h[node] <= prefix_sum / mu + h[tail] + 1e-10,
                    "eta = {}: h({}) exceeds its prefix bound",
                    sol.eta,
                    tree.state_of(node)
                );
            }
            if l > 1 && s != 1 {
                let parent = tree.suffix_from(node, 2);
                let want = m.values()[tree.oldest(node)] / mu + h[parent];
                worst = worst.max((h[node] - want).abs());
                ensure!((h[node] - want).abs() <= 1e-10, "eta = {}: parent recursion off at {}", sol.eta, tree.state_of(node));
            }
        }
    }
    Ok(format!("{} solutions with K <= 5, max recursion error {worst:.2e}", solved.len()))
}

fn check_simulator(cfg: &VerifyConfig) -> Outcome {
    let m = figure1_model();
    let sim_cfg = ok(cfg.sim())?;
    let etas = [0.25, 0.5, 1.0, 2.0];
    let runs = cfg.exec.map(&etas, |&eta| -> Result<(f64, PolicySolution, SimResult)> {
        let sol = policy_iteration(&m, eta, None)?;
        let r = simulate_policy(&m, &SolvedPolicy::from_solution(&sol), &sim_cfg)?;
        Ok((eta, sol, r))
    });
    let mut detail = Vec::new();
    for run in runs {
        let (eta, sol, r) = ok(run)?;
        let (c, se) = r.combined(eta);
        ensure!(within(c, se, sol.lambda), "eta = {eta}: simulated {c:.5} +- {se:.5}, lambda {:.5}", sol.lambda);
        detail.push(format!("{:+.1}", (c - sol.lambda) / se));
    }
    Ok(format!("z-scores {} over {} slots", detail.join(" "), cfg.horizon))
}

fn check_strategies(cfg: &VerifyConfig) -> Outcome {
    let m = figure1_model();
    let mut worst_pi: f64 = 0.0;
    for st in Strategy::ALL {
        for k in 1..=15 {
            let pt = ok(strategy_point(&m, st, k))?;
            let pi = ok(transition_matrix(&m, st, k).and_then(|p| linalg::stationary(&p)))?;
            for (a, b) in pt.pi.iter().zip(&pi) {
                worst_pi = worst_pi.max((a - b).abs());
            }
        }
    }
    ensure!(worst_pi <= 1e-10, "closed-form pi off by {worst_pi:.2e}");

    let sim_cfg = ok(cfg.sim())?;
    let ks: Vec<usize> = if cfg.full { (1..=15).collect() } else { vec![1, 4, 10] };
    let jobs: Vec<(Strategy, usize)> = Strategy::ALL.iter().flat_map(|s| ks.iter().map(move |k| (*s, *k))).collect();
    let sims = cfg.exec.map(&jobs, |&(st, k)| -> Result<String> {
        let pt = strategy_point(&m, st, k)?;
        let r = simulate_policy(&m, &StrategyPolicy::new(&m, st, k)?, &sim_cfg)?;
        let good = within(r.delta_e, r.se_delta, pt.delta_e) && within(r.d, r.se_d, pt.d);
        Ok(if good {
            String::new()
        } else {
            format!("{st} K = {k}: sim ({:.4}, {:.4}) vs ({:.4}, {:.4})", r.delta_e, r.d, pt.delta_e, pt.d)
        })
    });
    for s in sims {
        let msg = ok(s)?;
        ensure!(msg.is_empty(), "{msg}");
    }

    let curve = figure1_curve(cfg)?;
    let mut worst = f64::NEG_INFINITY;
    for st in Strategy::ALL {
        for k in 1..=20 {
            let pt = ok(strategy_point(&m, st, k))?;
            let v = curve.worst_violation(pt.delta_e, pt.d) + cfg.lambda_shift;
            worst = worst.max(v);
            ensure!(v <= 1e-6, "{st} K = {k} lies below a converse line by {v:.3e}");
        }
    }
    Ok(format!(
        "pi within {worst_pi:.1e}, {} simulations within 4 SE, closest approach to the converse {:.3e}",
        jobs.len(),
        -worst
    ))
}

fn figure1_curve(cfg: &VerifyConfig) -> std::result::Result<TradeoffCurve, String> {
    let m = figure1_model();
    let etas = ok(eta_grid(&m, 19.0 / (17.0 * m.mu()), if cfg.full { 40 } else { 20 }))?;
    let curve = ok(sweep_eta(&m, &etas, cfg.exec))?;
    ensure!(curve.failures.is_empty(), "sweep failures: {:?}", curve.failures);
    Ok(curve)
}

fn figure3_source(n: usize) -> BinarySource {
    BinarySource::new(0.3, 20.0, 0.2, n).expect("valid source")
}

fn check_thresholds(cfg: &VerifyConfig) -> Outcome {
    let mut worst: f64 = 0.0;
    for n in 1..=8 {
        let src = figure3_source(n);
        for tau in (n + 1)..=30 {
            let pt = ok(threshold_closed_form(&src, tau))?;
            let mass = pt.total_mass(src.p);
            ensure!((mass - 1.0).abs() <= 1e-10, "N = {n}, tau = {tau}: mass {mass}");
        }
        for tau in (n + 1)..=12 {
            let cf = ok(threshold_closed_form(&src, tau))?;
            let num = ok(threshold_numeric(&src, tau))?;
            for (a, b) in cf.pi.iter().zip(&num.pi) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    ensure!(worst <= 1e-9, "closed form vs stationary solve: {worst:.2e}");
    let sim_cfg = ok(cfg.sim())?;
    let taus: Vec<usize> = if cfg.full { (0..=12).collect() } else { vec![0, 2, 5, 9, 12] };
    let jobs: Vec<(usize, usize)> = [3usize, 6].iter().flat_map(|n| taus.iter().map(move |t| (*n, *t))).collect();
    let sims = cfg.exec.map(&jobs, |&(n, tau)| -> Result<Option<String>> {
        let src = figure3_source(n);
        let pt = threshold_point(&src, tau)?;
        let r = simulate_bit_policy(&src, &ThresholdPolicy::new(tau, n), &BitMode::Plain, &sim_cfg)?;
        let good = within(r.delta_e, r.se_delta, pt.delta_e) && within(r.d, r.se_d, pt.d);
        Ok((!good).then(|| format!("N = {n}, tau = {tau}: sim ({:.4}, {:.4}) vs ({:.4}, {:.4})", r.delta_e, r.d, pt.delta_e, pt.d)))
    });
    for s in sims {
        if let Some(msg) = ok(s)? {
            return Err(msg);
        }
    }
    for n in [3usize, 6] {
        let src = figure3_source(n);
        let d0 = ok(threshold_point(&src, 0))?.d;
        let exact = src.mu_v() * (1.0 - src.p).powi(n as i32);
        ensure!((d0 - exact).abs() <= 1e-12, "N = {n}: tau = 0 gives {d0}, expected {exact}");
    }
    Ok(format!("mass and stationary match to {worst:.1e}, {} simulations within 4 SE", jobs.len()))
}

fn check_tunstall(cfg: &VerifyConfig) -> Outcome {
    for p0 in [0.1, 0.3, 0.5, 0.7, 0.9] {
        for m in 2..=64 {
            let d = ok(TunstallDictionary::build(p0, m))?;
            ensure!((d.kraft_sum() - 1.0).abs() <= 1e-12, "Pr(0) = {p0}, M = {m}: Kraft sum {}", d.kraft_sum());
            if m.is_power_of_two() {
                let n = m.trailing_zeros() as f64;
                ensure!(d.expected_parse_length() >= n - 1e-12, "Pr(0) = {p0}, M = {m}: E[L] below {n}");
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..10 {
        let p0: f64 = rng.random_range(0.05..0.95);
        for m in 2..=8 {
            let d = ok(TunstallDictionary::build(p0, m))?;
            let best = exhaustive_best_length(p0, m);
            ensure!(best <= d.expected_parse_length() + 1e-12, "Pr(0) = {p0}, M = {m}: a tree parses {best}");
        }
    }

    let sim_cfg = ok(cfg.sim())?;
    let taus: Vec<usize> = if cfg.full { (0..=12).collect() } else { vec![0, 3, 8] };
    let jobs: Vec<(usize, usize)> = [3usize, 6].iter().flat_map(|n| taus.iter().map(move |t| (*n, *t))).collect();
    let sims = cfg.exec.map(&jobs, |&(n, tau)| -> Result<(usize, usize, f64, f64, f64)> {
        let src = figure3_source(n);
        let dict = TunstallDictionary::build(1.0 - src.q, 1 << n)?;
        let bi = threshold_point(&src, tau)?;
        let r = simulate_bit_policy(&src, &ThresholdPolicy::new(tau, n), &BitMode::Tunstall(dict), &sim_cfg)?;
        Ok((n, tau, r.d, r.se_d, bi.d))
    });
    let mut bit_n3 = Vec::new();
    for s in sims {
        let (n, tau, d, se, bi) = ok(s)?;
        ensure!(d <= bi + 2.0 * se, "N = {n}, tau = {tau}: Tunstall {d:.4} +- {se:.4} above plain {bi:.4}");
        if n == 3 {
            bit_n3.push((tau, d));
        }
    }

    // headerless N = 3 beats the timestamped optimum somewhere
    let curve = figure1_curve(cfg)?;
    let src = figure3_source(3);
    let mut best_gap = f64::INFINITY;
    for tau in 0..=12 {
        let pt = ok(threshold_point(&src, tau))?;
        best_gap = best_gap.min(pt.d - curve.converse_bound(pt.delta_e));
    }
    ensure!(best_gap < 0.0, "no N = 3 threshold point falls below the converse (gap {best_gap:.4})");
    for (tau, d) in &bit_n3 {
        let de = ok(threshold_point(&src, *tau))?.delta_e;
        best_gap = best_gap.min(d - curve.converse_bound(de));
    }
    Ok(format!(
        "Kraft, E[L] and exhaustive search hold; {} Tunstall runs at or below plain; N = 3 beats the converse by {:.3}",
        jobs.len(),
        -best_gap
    ))
}

fn check_erasure(cfg: &VerifyConfig) -> Outcome {
    let m = figure1_model();
    let sol = ok(policy_iteration(&m, 1.0, None))?;
    let pol = SolvedPolicy::from_solution(&sol);
    let sim_cfg = ok(cfg.sim())?;
    let direct = ok(simulate_policy(&m, &pol, &sim_cfg))?;
    let shared = ok(simulate_erasure(&m, &pol, &sim_cfg))?;
    ensure!(
        shared.delta_e == direct.delta_e && shared.d == direct.d,
        "same streams but different paths: ({}, {}) vs ({}, {})",
        shared.delta_e,
        shared.d,
        direct.delta_e,
        direct.d
    );
    let other = ok(SimConfig::new(cfg.horizon, cfg.seed.wrapping_add(1)).and_then(|c| simulate_erasure(&m, &pol, &c)))?;
    let se_a = (direct.se_delta.powi(2) + other.se_delta.powi(2)).sqrt();
    let se_d = (direct.se_d.powi(2) + other.se_d.powi(2)).sqrt();
    ensure!(within(other.delta_e, se_a, direct.delta_e), "delta_e: erasure {:.4} vs direct {:.4}", other.delta_e, direct.delta_e);
    ensure!(within(other.d, se_d, direct.d), "d: erasure {:.4} vs direct {:.4}", other.d, direct.d);
    Ok(format!(
        "shared streams give identical paths; independent erasure run ({:.4}, {:.4}) vs direct ({:.4}, {:.4})",
        other.delta_e, other.d, direct.delta_e, direct.d
    ))
}

/// Extra check for a user-supplied model: solved lambda against
/// simulation at two weights whose buffers stay small.
pub fn check_model(model: &Model, cfg: &VerifyConfig) -> CheckResult {
    let start = Instant::now();
    let out = (|| -> Outcome {
        let sim_cfg = ok(cfg.sim())?;
        let eta_max = model.eta_max();
        if eta_max <= 0.0 {
            // single importance level: send-latest is the only sensible rule
            let r = ok(simulate_policy(model, &crate::sim::SendLatest, &sim_cfg))?;
            let want = model.mean_importance() * (1.0 - 1.0 / model.mu());
            ensure!(within(r.d, r.se_d, want), "send-latest simulated {:.4}, renewal value {want:.4}", r.d);
            return Ok("single importance level; send-latest matches its renewal value".into());
        }
        let mut z = Vec::new();
        for eta in [eta_max / 2.0, eta_max / 4.0] {
            let sol = ok(policy_iteration(model, eta, None))?;
            let r = ok(simulate_policy(model, &SolvedPolicy::from_solution(&sol), &sim_cfg))?;
            let (c, se) = r.combined(eta);
            ensure!(within(c, se, sol.lambda), "eta = {eta}: simulated {c:.5} +- {se:.5}, lambda {:.5}", sol.lambda);
            z.push(format!("{:+.1}", (c - sol.lambda) / se.max(1e-12)));
        }
        Ok(format!("z-scores {}", z.join(" ")))
    })();
    let (passed, detail) = match out {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    CheckResult { id: 12, name: "given model: solver vs simulator", passed, detail, elapsed: start.elapsed() }
}
