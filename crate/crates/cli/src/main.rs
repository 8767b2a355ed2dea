use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use agedist::bufferignorant::{bi_curves, bi_policy_iteration, write_bi_csv, BinarySource, ThresholdPolicy, TunstallDictionary};
use agedist::model::{Model, ModelConfig};
use agedist::par::Exec;
use agedist::policy_file::PolicyFile;
use agedist::sim::{
    simulate_bit_policy, simulate_erasure, simulate_policy, BitMode, BufferPolicy, LengthPolicy, SendLatest, SimConfig,
    SimResult, SolvedPolicy, StrategyPolicy,
};
use agedist::solver::{eta_grid, policy_iteration, sweep_eta};
use agedist::strategies::{strategy_curve, write_curve_csv, Strategy};
use agedist::verify::{self, VerifyConfig};
use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Age/distortion tradeoffs for packet selection at external speaking times.
#[derive(Debug, Parser)]
#[command(name = "agedist", version)]
struct Cli {
    /// Run every loop on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep the weight eta and write the optimal points and converse lines.
    Tradeoff(TradeoffArgs),
    /// Closed-form curves for the S1/S2/S3 baselines.
    Strategies(StrategiesArgs),
    /// Threshold curves for headerless N-bit transmissions, plain and Tunstall.
    Bufferignorant(BufferIgnorantArgs),
    /// Monte Carlo run of one policy; prints a JSON result.
    Simulate(SimulateArgs),
    /// Run the verification battery and print a pass/fail table.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct TradeoffArgs {
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated weights, sorted into decreasing order.
    #[arg(long, value_delimiter = ',', conflicts_with = "eta_grid")]
    eta_list: Vec<f64>,
    /// MIN:COUNT, a geometric grid from eta_max down to MIN.
    #[arg(long)]
    eta_grid: Option<String>,
    /// Points CSV; the converse lines go next to it as <stem>_converse.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StrategiesArgs {
    #[arg(long)]
    model: PathBuf,
    /// Window sizes, e.g. 1..20 or 5.
    #[arg(long, default_value = "1..20")]
    k_range: String,
    #[arg(long, value_delimiter = ',', default_value = "S1,S2,S3")]
    strategy: Vec<Strategy>,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BufferIgnorantArgs {
    /// Two-level model with the low level at 1 and geometric speaking times.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "3,6")]
    n_bits: Vec<usize>,
    #[arg(long, default_value = "0..12")]
    tau_range: String,
    /// Skip the simulated Tunstall curves.
    #[arg(long)]
    no_tunstall: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1_000_000)]
    horizon: u64,
    /// Also write each Tunstall dictionary, one word per line, to <PATH>.N<n>.
    #[arg(long)]
    dump_dictionary: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicySource {
    /// Solve for --eta, then simulate the optimal table.
    Solved,
    /// Replay a policy file written with --save-policy.
    File,
    /// Always send the newest packet.
    Latest,
    /// A baseline rule (--strategy, --k).
    Strategy,
    /// Keep --tau bits back, send --n-bits.
    Threshold,
    /// Optimal headerless policy for --eta and --n-bits.
    Bi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Direct,
    Erasure,
    Bits,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    policy: PolicySource,
    /// direct or erasure for packet policies, bits for threshold/bi.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    policy_file: Option<PathBuf>,
    #[arg(long)]
    save_policy: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long, default_value_t = 3)]
    n_bits: usize,
    /// Parse with a Tunstall dictionary of 2^N words instead of fixed chunks.
    #[arg(long)]
    tunstall: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1_000_000)]
    horizon: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Also cross-check the solver and simulator on this model.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Slots per simulation; defaults to 2e5, or 1e6 with --full.
    #[arg(long)]
    horizon: Option<u64>,
    /// Full-size instance counts.
    #[arg(long)]
    full: bool,
    /// Run only these checks.
    #[arg(long, value_delimiter = ',')]
    check: Vec<usize>,
    /// Shift every converse intercept up; for exercising the dominance check.
    #[arg(long, default_value_t = 0.0, hide = true)]
    lambda_shift: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    let res = match cli.command {
        Command::Tradeoff(a) => tradeoff(a, exec),
        Command::Strategies(a) => strategies(a, exec),
        Command::Bufferignorant(a) => bufferignorant(a, exec),
        Command::Simulate(a) => simulate(a),
        Command::Verify(a) => run_verify(a, exec),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_model(path: &Path) -> Result<Model> {
    let cfg = ModelConfig::load(path).with_context(|| format!("reading model {}", path.display()))?;
    Ok(cfg.build()?)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

/// `a..b` (inclusive) or a single number.
fn parse_range(text: &str) -> Result<RangeInclusive<usize>> {
    let r = match text.split_once("..") {
        Some((a, b)) => a.trim().parse()?..=b.trim_start_matches('=').trim().parse()?,
        None => {
            let v: usize = text.trim().parse()?;
            v..=v
        }
    };
    ensure!(!r.is_empty(), "empty range {text:?}");
    Ok(r)
}

fn tradeoff(a: TradeoffArgs, exec: Exec) -> Result<ExitCode> {
    let model = load_model(&a.model)?;
    let mut etas = match &a.eta_grid {
        Some(spec) => {
            let (min, count) = spec.split_once(':').context("--eta-grid takes MIN:COUNT")?;
            eta_grid(&model, min.parse()?, count.parse()?)?
        }
        None => a.eta_list.clone(),
    };
    ensure!(!etas.is_empty(), "no weights given; use --eta-list or --eta-grid");
    etas.sort_by(|x, y| y.total_cmp(x));
    etas.dedup();
    let curve = sweep_eta(&model, &etas, exec)?;
    for (eta, why) in &curve.failures {
        eprintln!("warning: skipped eta = {eta}: {why}");
    }
    ensure!(!curve.points.is_empty(), "no weight could be solved");
    curve.write_csv(output(Some(&a.out))?)?;
    let stem = a.out.file_stem().and_then(|s| s.to_str()).unwrap_or("tradeoff");
    let converse = a.out.with_file_name(format!("{stem}_converse.csv"));
    curve.write_converse_csv(output(Some(&converse))?)?;
    match curve.exact_until() {
        Some(x) => println!("exact_until {x}"),
        None => println!("exact_until none (fewer than two lines)"),
    }
    Ok(ExitCode::SUCCESS)
}

fn strategies(a: StrategiesArgs, exec: Exec) -> Result<ExitCode> {
    let model = load_model(&a.model)?;
    let ks = parse_range(&a.k_range)?;
    let mut points = Vec::new();
    for st in &a.strategy {
        points.extend(strategy_curve(&model, *st, ks.clone(), exec)?);
    }
    write_curve_csv(&points, model.d_min(), output(a.out.as_deref())?)?;
    Ok(ExitCode::SUCCESS)
}

fn bufferignorant(a: BufferIgnorantArgs, exec: Exec) -> Result<ExitCode> {
    let model = load_model(&a.model)?;
    let taus: Vec<usize> = parse_range(&a.tau_range)?.collect();
    let cfg = SimConfig::new(a.horizon, a.seed)?;
    let mut points = Vec::new();
    for &n in &a.n_bits {
        let src = BinarySource::from_model(&model, n)?;
        points.extend(bi_curves(&src, &taus, (!a.no_tunstall).then_some(&cfg), exec)?);
        if let Some(base) = &a.dump_dictionary {
            ensure!(n < 24, "N = {n} is too large for a dictionary dump");
            let dict = TunstallDictionary::build(1.0 - src.q, 1 << n)?;
            let path = PathBuf::from(format!("{}.N{n}", base.display()));
            dict.dump(output(Some(&path))?)?;
        }
    }
    points.sort_by_key(|p| (p.variant as u8, p.n_bits, p.tau));
    write_bi_csv(&points, output(a.out.as_deref())?)?;
    Ok(ExitCode::SUCCESS)
}

fn need<T>(v: Option<T>, flag: &str, policy: &str) -> Result<T> {
    v.with_context(|| format!("--policy {policy} needs {flag}"))
}

fn simulate(a: SimulateArgs) -> Result<ExitCode> {
    let model = load_model(&a.model)?;
    let cfg = SimConfig::new(a.horizon, a.seed)?;
    let bits = matches!(a.policy, PolicySource::Threshold | PolicySource::Bi);
    let mode = a.mode.unwrap_or(if bits { Mode::Bits } else { Mode::Direct });
    ensure!(
        bits == (mode == Mode::Bits),
        "--mode {mode:?} does not fit --policy {:?}",
        a.policy
    );
    let result: SimResult = if bits {
        let src = BinarySource::from_model(&model, a.n_bits)?;
        let policy: Box<dyn LengthPolicy> = match a.policy {
            PolicySource::Threshold => Box::new(ThresholdPolicy::new(need(a.tau, "--tau", "threshold")?, a.n_bits)),
            _ => Box::new(bi_policy_iteration(&src, need(a.eta, "--eta", "bi")?)?),
        };
        let bit_mode = if a.tunstall {
            ensure!(a.n_bits < 24, "N = {} is too large for a dictionary", a.n_bits);
            BitMode::Tunstall(TunstallDictionary::build(1.0 - src.q, 1 << a.n_bits)?)
        } else {
            BitMode::Plain
        };
        simulate_bit_policy(&src, policy.as_ref(), &bit_mode, &cfg)?
    } else {
        let policy: Box<dyn BufferPolicy> = match a.policy {
            PolicySource::Solved => {
                let sol = policy_iteration(&model, need(a.eta, "--eta", "solved")?, a.k)?;
                if let Some(path) = &a.save_policy {
                    PolicyFile::from_solution(&model, &sol).save(path)?;
                }
                Box::new(SolvedPolicy::from_solution(&sol))
            }
            PolicySource::File => {
                let path = need(a.policy_file.as_ref(), "--policy-file", "file")?;
                let file = PolicyFile::load(path).with_context(|| format!("reading policy {}", path.display()))?;
                Box::new(SolvedPolicy::new(file.into_tree(&model)?))
            }
            PolicySource::Latest => Box::new(SendLatest),
            PolicySource::Strategy => Box::new(StrategyPolicy::new(
                &model,
                need(a.strategy, "--strategy", "strategy")?,
                need(a.k, "--k", "strategy")?,
            )?),
            PolicySource::Threshold | PolicySource::Bi => bail!("unreachable policy source"),
        };
        match mode {
            Mode::Erasure => simulate_erasure(&model, policy.as_ref(), &cfg)?,
            _ => simulate_policy(&model, policy.as_ref(), &cfg)?,
        }
    };
    let mut out = output(a.out.as_deref())?;
    writeln!(out, "{}", result.to_json())?;
    Ok(ExitCode::SUCCESS)
}

fn run_verify(a: VerifyArgs, exec: Exec) -> Result<ExitCode> {
    // load the model first so a bad path stops before any check runs
    let model = a.model.as_deref().map(load_model).transpose()?;
    let mut cfg = if a.full { VerifyConfig::full() } else { VerifyConfig::desk() };
    cfg.seed = a.seed;
    cfg.exec = exec;
    cfg.lambda_shift = a.lambda_shift;
    if let Some(h) = a.horizon {
        cfg.horizon = h;
    }
    let ids: Vec<usize> = if a.check.is_empty() { verify::CHECKS.iter().map(|c| c.0).collect() } else { a.check.clone() };
    let mut results = Vec::new();
    for id in ids {
        match verify::run_check(id, &cfg) {
            Some(r) => results.push(r),
            None => bail!("no check with id {id}"),
        }
    }
    if let Some(m) = &model {
        results.push(verify::check_model(m, &cfg));
    }
    let mut failed = 0;
    for r in &results {
        println!(
            "{:>3}  {}  {:<40} {:>9.2?}  {}",
            r.id,
            if r.passed { "pass" } else { "FAIL" },
            r.name,
            r.elapsed,
            r.detail
        );
        failed += usize::from(!r.passed);
    }
    println!("{} checks, {failed} failed", results.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
