//! Monte Carlo simulation of the slotted model.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`), seeded with
//! `seed_from_u64(seed)` and split by stream number: replication `r` draws
//! arrivals from stream `2r` and speaking times from stream `2r + 1`. A
//! geometric interspeaking time is realised as one Bernoulli draw per slot
//! from the speaking stream, so the direct and erasure-channel engines see
//! the same arrivals and the same success slots for a given seed.

mod bits;
mod engine;
mod policy;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

pub use bits::{simulate_bit_policy, BitMode, LengthPolicy};
pub use engine::{simulate_erasure, simulate_policy, simulate_replicated, SimMode};
pub use policy::{BufferPolicy, SendLatest, SolvedPolicy, StrategyPolicy};

pub const DEFAULT_BATCHES: usize = 50;
pub const MIN_HORIZON: u64 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimConfig {
    pub horizon: u64,
    pub seed: u64,
    pub burn_in: u64,
    pub batches: usize,
}

impl SimConfig {
    /// Burn-in defaults to `horizon / 100`.
    pub fn new(horizon: u64, seed: u64) -> Result<Self> {
        Self::with_burn_in(horizon, seed, horizon / 100)
    }

    pub fn with_burn_in(horizon: u64, seed: u64, burn_in: u64) -> Result<Self> {
        let cfg = Self { horizon, seed, burn_in, batches: DEFAULT_BATCHES };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < MIN_HORIZON {
            return Err(Error::InvalidArgument(format!(
                "horizon {} is below the minimum of {MIN_HORIZON} slots",
                self.horizon
            )));
        }
        if self.horizon < 10 * self.burn_in {
            return Err(Error::InvalidArgument(format!(
                "horizon {} must be at least ten times the burn-in {}",
                self.horizon, self.burn_in
            )));
        }
        if self.batches < 2 || (self.horizon - self.burn_in) < self.batches as u64 {
            return Err(Error::InvalidArgument("need at least two nonempty batches".into()));
        }
        Ok(())
    }

    pub(crate) fn rngs(&self, replication: u64) -> (ChaCha8Rng, ChaCha8Rng) {
        let mut arrivals = ChaCha8Rng::seed_from_u64(self.seed);
        arrivals.set_stream(2 * replication);
        let mut speaking = ChaCha8Rng::seed_from_u64(self.seed);
        speaking.set_stream(2 * replication + 1);
        (arrivals, speaking)
    }
}

/// Batch-means estimates of the per-speaking-time excess age and the
/// per-slot distortion.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SimResult {
    pub delta_e: f64,
    pub se_delta: f64,
    pub d: f64,
    pub se_d: f64,
    pub horizon: u64,
    pub seed: u64,
    #[serde(skip)]
    pub batch_delta: Vec<f64>,
    #[serde(skip)]
    pub batch_d: Vec<f64>,
    /// Time average of the instantaneous age `t - S_{i(t)}`.
    #[serde(skip)]
    pub raw_age: f64,
    #[serde(skip)]
    pub batch_raw_age: Vec<f64>,
    #[serde(skip)]
    pub speaking_times: u64,
}

impl SimResult {
    /// Estimate and standard error of `d + eta * delta_e` from the same batches.
    pub fn combined(&self, eta: f64) -> (f64, f64) {
        let vals: Vec<f64> = self.batch_d.iter().zip(&self.batch_delta).map(|(d, a)| d + eta * a).collect();
        (self.d + eta * self.delta_e, standard_error(&vals))
    }

    /// Average age minus excess age, which should settle at `nu / mu`
    /// for any stationary policy; returned with its batch-means error.
    pub fn age_offset(&self) -> (f64, f64) {
        let vals: Vec<f64> = self.batch_raw_age.iter().zip(&self.batch_delta).map(|(r, a)| r - a).collect();
        (self.raw_age - self.delta_e, standard_error(&vals))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("sim result serializes")
    }

    /// Pools replications: overall ratios from the totals, standard errors
    /// from the concatenated batches.
    pub fn pool(parts: &[SimResult]) -> Result<SimResult> {
        let first = parts.first().ok_or_else(|| Error::InvalidArgument("nothing to pool".into()))?;
        let batch_delta: Vec<f64> = parts.iter().flat_map(|p| p.batch_delta.iter().copied()).collect();
        let batch_d: Vec<f64> = parts.iter().flat_map(|p| p.batch_d.iter().copied()).collect();
        let batch_raw_age: Vec<f64> = parts.iter().flat_map(|p| p.batch_raw_age.iter().copied()).collect();
        let weight = |p: &SimResult| p.speaking_times as f64;
        let speaking: f64 = parts.iter().map(weight).sum();
        let n = parts.len() as f64;
        Ok(SimResult {
            delta_e: parts.iter().map(|p| p.delta_e * weight(p)).sum::<f64>() / speaking.max(1.0),
            se_delta: standard_error(&batch_delta),
            d: parts.iter().map(|p| p.d).sum::<f64>() / n,
            se_d: standard_error(&batch_d),
            horizon: parts.iter().map(|p| p.horizon).sum(),
            seed: first.seed,
            raw_age: parts.iter().map(|p| p.raw_age).sum::<f64>() / n,
            speaking_times: speaking as u64,
            batch_delta,
            batch_d,
            batch_raw_age,
        })
    }
}

pub(crate) fn standard_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// Per-batch totals over the slots after burn-in.
pub(crate) struct Accumulator {
    burn_in: u64,
    batch_len: u64,
    dist: Vec<f64>,
    slots: Vec<u64>,
    age: Vec<f64>,
    count: Vec<u64>,
    raw: Vec<f64>,
}

impl Accumulator {
    pub(crate) fn new(cfg: &SimConfig) -> Self {
        let b = cfg.batches;
        Self {
            burn_in: cfg.burn_in,
            batch_len: (cfg.horizon - cfg.burn_in) / b as u64,
            dist: vec![0.0; b],
            slots: vec![0; b],
            age: vec![0.0; b],
            count: vec![0; b],
            raw: vec![0.0; b],
        }
    }

    fn batch(&self, t: u64) -> Option<usize> {
        if t <= self.burn_in {
            return None;
        }
        let i = ((t - self.burn_in - 1) / self.batch_len) as usize;
        Some(i.min(self.dist.len() - 1))
    }

    /// Called once per slot with the instantaneous age.
    pub(crate) fn slot(&mut self, t: u64, age: u64) {
        if let Some(b) = self.batch(t) {
            self.slots[b] += 1;
            self.raw[b] += age as f64;
        }
    }

    pub(crate) fn distortion(&mut self, t: u64, amount: f64) {
        if let Some(b) = self.batch(t) {
            self.dist[b] += amount;
        }
    }

    pub(crate) fn speaking(&mut self, t: u64, excess_age: u64) {
        if let Some(b) = self.batch(t) {
            self.age[b] += excess_age as f64;
            self.count[b] += 1;
        }
    }

    pub(crate) fn finish(self, cfg: &SimConfig) -> SimResult {
        let slots: u64 = self.slots.iter().sum();
        let count: u64 = self.count.iter().sum();
        let batch_d: Vec<f64> = self.dist.iter().zip(&self.slots).map(|(d, s)| d / (*s).max(1) as f64).collect();
        let batch_raw_age: Vec<f64> = self.raw.iter().zip(&self.slots).map(|(r, s)| r / (*s).max(1) as f64).collect();
        let batch_delta: Vec<f64> = self
            .age
            .iter()
            .zip(&self.count)
            .map(|(a, c)| if *c == 0 { 0.0 } else { a / *c as f64 })
            .collect();
        SimResult {
            delta_e: self.age.iter().sum::<f64>() / count.max(1) as f64,
            se_delta: standard_error(&batch_delta),
            d: self.dist.iter().sum::<f64>() / slots.max(1) as f64,
            se_d: standard_error(&batch_d),
            horizon: cfg.horizon,
            seed: cfg.seed,
            raw_age: self.raw.iter().sum::<f64>() / slots.max(1) as f64,
            speaking_times: count,
            batch_delta,
            batch_d,
            batch_raw_age,
        }
    }
}

/// Speaking-time generator driven by the speaking stream.
pub(crate) enum Speaker<'a> {
    Bernoulli(f64),
    Countdown { pmf: &'a [f64], next: u64 },
}

impl<'a> Speaker<'a> {
    pub(crate) fn new(z: &'a crate::model::InterspeakDist, rng: &mut ChaCha8Rng) -> Self {
        match z {
            crate::model::InterspeakDist::Geometric(p) => Speaker::Bernoulli(*p),
            crate::model::InterspeakDist::FinitePmf(pmf) => {
                let next = draw_pmf(pmf, rng);
                Speaker::Countdown { pmf, next }
            }
        }
    }

    /// Whether slot `t` is a speaking time; consumes randomness in slot order.
    pub(crate) fn speaks(&mut self, t: u64, rng: &mut ChaCha8Rng) -> bool {
        use rand::Rng;
        match self {
            Speaker::Bernoulli(p) => rng.random::<f64>() < *p,
            Speaker::Countdown { pmf, next } => {
                if t == *next {
                    *next = t + draw_pmf(pmf, rng);
                    true
                } else {
                    false
                }
            }
        }
    }
}

fn draw_pmf(pmf: &[f64], rng: &mut ChaCha8Rng) -> u64 {
    use rand::Rng;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u64 + 1;
        }
    }
    // rounding left u above the last partial sum
    pmf.iter().rposition(|p| *p > 0.0).unwrap_or(0) as u64 + 1
}

/// Inverse-CDF draw of an alphabet index.
pub(crate) fn draw_symbol(cdf: &[f64], rng: &mut ChaCha8Rng) -> usize {
    use rand::Rng;
    let u: f64 = rng.random();
    cdf.iter().position(|c| u < *c).unwrap_or(cdf.len() - 1)
}

pub(crate) fn cdf(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}
