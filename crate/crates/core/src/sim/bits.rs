use std::collections::VecDeque;

use rand::Rng;

use crate::bufferignorant::{BinarySource, TunstallDictionary};
use crate::error::{Error, Result};
use crate::model::InterspeakDist;

use super::{Accumulator, SimConfig, SimResult, Speaker};

/// A policy that sees only the number of buffered bits. `select(l)` is the
/// index `s` of the newest bit covered by the transmission.
pub trait LengthPolicy: Sync {
    fn select(&self, l: usize) -> usize;
}

#[derive(Clone, Debug, Default)]
pub enum BitMode {
    /// Send the `N` bits ending at `s`.
    #[default]
    Plain,
    /// Send one dictionary word parsed from bit `s` toward older bits.
    Tunstall(TunstallDictionary),
}

/// Simulates a length policy on the i.i.d. bit source; a 1-bit has
/// importance `v`, a 0-bit importance 1.
pub fn simulate_bit_policy(
    source: &BinarySource,
    policy: &dyn LengthPolicy,
    mode: &BitMode,
    cfg: &SimConfig,
) -> Result<SimResult> {
    cfg.validate()?;
    let (mut arr_rng, mut spk_rng) = cfg.rngs(0);
    let z = InterspeakDist::geometric(source.p)?;
    let mut speaker = Speaker::new(&z, &mut spk_rng);
    let mut acc = Accumulator::new(cfg);
    let n = source.n_bits;
    let weight = |bit: bool| if bit { source.v } else { 1.0 };
    let mut buffer: VecDeque<bool> = VecDeque::new();
    let mut last_sent = 0u64;
    let mut front_slot = 1u64;

    for t in 1..=cfg.horizon {
        acc.slot(t, t - last_sent);
        buffer.push_back(arr_rng.random::<f64>() < source.q);
        if buffer.len() == 1 {
            front_slot = t;
        }
        if !speaker.speaks(t, &mut spk_rng) {
            continue;
        }
        let l = buffer.len();
        let s = policy.select(l);
        if s == 0 || s > l {
            return Err(Error::InfeasibleAction { action: s, state: format!("length {l}") });
        }
        let lost = match mode {
            _ if s <= n => 0,
            BitMode::Plain => s - n,
            BitMode::Tunstall(dict) => {
                let parsed = dict.parse((0..s).rev().map(|i| buffer[i]));
                s - parsed.unwrap_or(s)
            }
        };
        let cost: f64 = buffer.drain(..s).take(lost).map(weight).sum();
        acc.distortion(t, cost);
        acc.speaking(t, (l - s) as u64);
        last_sent = front_slot + s as u64 - 1;
        front_slot += s as u64;
    }
    Ok(acc.finish(cfg))
}
