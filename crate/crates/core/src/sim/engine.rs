use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::par::Exec;

use super::{cdf, draw_symbol, Accumulator, BufferPolicy, SimConfig, SimResult, Speaker};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SimMode {
    /// The policy acts only at speaking times.
    #[default]
    Direct,
    /// A selection is committed every slot and goes through on the
    /// channel-success slots.
    Erasure,
}

impl std::str::FromStr for SimMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(SimMode::Direct),
            "erasure" => Ok(SimMode::Erasure),
            _ => Err(Error::InvalidArgument(format!("unknown mode {s:?} (direct or erasure)"))),
        }
    }
}

pub fn simulate_policy(model: &Model, policy: &dyn BufferPolicy, cfg: &SimConfig) -> Result<SimResult> {
    run(model, policy, cfg, 0, SimMode::Direct)
}

pub fn simulate_erasure(model: &Model, policy: &dyn BufferPolicy, cfg: &SimConfig) -> Result<SimResult> {
    run(model, policy, cfg, 0, SimMode::Erasure)
}

/// Independent replications on disjoint RNG streams, pooled.
pub fn simulate_replicated(
    model: &Model,
    policy: &dyn BufferPolicy,
    cfg: &SimConfig,
    replications: usize,
    mode: SimMode,
    exec: Exec,
) -> Result<SimResult> {
    let reps: Vec<u64> = (0..replications as u64).collect();
    let parts = exec.map(&reps, |&r| run(model, policy, cfg, r, mode));
    let parts: Result<Vec<SimResult>> = parts.into_iter().collect();
    SimResult::pool(&parts?)
}

fn run(model: &Model, policy: &dyn BufferPolicy, cfg: &SimConfig, rep: u64, mode: SimMode) -> Result<SimResult> {
    cfg.validate()?;
    if mode == SimMode::Erasure && model.interspeak().geometric_p().is_none() {
        return Err(Error::Unsupported("erasure mode needs geometric interspeaking times".into()));
    }
    let (mut arr_rng, mut spk_rng) = cfg.rngs(rep);
    let arrivals = cdf(model.probs());
    let values = model.values();
    let v_min = model.importance().v_min();
    let window = policy.window();
    let mut speaker = Speaker::new(model.interspeak(), &mut spk_rng);
    let mut acc = Accumulator::new(cfg);
    let mut buffer: VecDeque<usize> = VecDeque::new();
    let mut scratch: Vec<usize> = Vec::new();
    // arrival slot of the last packet delivered, S_{i(t)}
    let mut last_sent: u64 = 0;
    // arrival slot of buffer[0]
    let mut front_slot: u64 = 1;

    for t in 1..=cfg.horizon {
        acc.slot(t, t - last_sent);
        buffer.push_back(draw_symbol(&arrivals, &mut arr_rng));
        if buffer.len() == 1 {
            front_slot = t;
        }
        if let Some(w) = window {
            while buffer.len() > w {
                let old = buffer.pop_front().expect("nonempty");
                acc.distortion(t, values[old]);
                front_slot += 1;
            }
        }
        let select = |buffer: &VecDeque<usize>, scratch: &mut Vec<usize>| -> Result<usize> {
            scratch.clear();
            scratch.extend(buffer.iter().copied());
            let s = policy.select(scratch);
            let l = scratch.len();
            if s == 0 || s > l || (s < l && values[scratch[s - 1]] <= v_min) {
                return Err(Error::InfeasibleAction { action: s, state: format!("{scratch:?}") });
            }
            Ok(s)
        };
        let chosen = match mode {
            SimMode::Direct => {
                if speaker.speaks(t, &mut spk_rng) {
                    Some(select(&buffer, &mut scratch)?)
                } else {
                    None
                }
            }
            SimMode::Erasure => {
                let s = select(&buffer, &mut scratch)?;
                speaker.speaks(t, &mut spk_rng).then_some(s)
            }
        };
        if let Some(s) = chosen {
            let l = buffer.len();
            let lost: f64 = buffer.drain(..s).take(s - 1).map(|b| values[b]).sum();
            acc.distortion(t, lost);
            acc.speaking(t, (l - s) as u64);
            last_sent = front_slot + s as u64 - 1;
            front_slot += s as u64;
        }
    }
    Ok(acc.finish(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ImportanceDist, InterspeakDist};
    use crate::sim::SendLatest;

    #[test]
    fn send_latest_matches_closed_form() {
        let m = Model::new(
            ImportanceDist::new(vec![1.0, 20.0], vec![0.7, 0.3]).unwrap(),
            InterspeakDist::geometric(0.2).unwrap(),
        );
        let cfg = SimConfig::new(200_000, 11).unwrap();
        let r = simulate_policy(&m, &SendLatest, &cfg).unwrap();
        assert_eq!(r.delta_e, 0.0);
        // (mu - 1)/mu * E[V] = 0.8 * 6.7
        assert!((r.d - 5.36).abs() < 4.0 * r.se_d, "{} +- {}", r.d, r.se_d);
        assert!((r.raw_age - 5.0).abs() < 0.2, "{}", r.raw_age);
    }

    #[test]
    fn infeasible_action_is_reported() {
        struct Bad;
        impl BufferPolicy for Bad {
            fn window(&self) -> Option<usize> {
                Some(3)
            }
            fn select(&self, _: &[usize]) -> usize {
                1
            }
        }
        let m = Model::new(
            ImportanceDist::new(vec![1.0, 20.0], vec![0.7, 0.3]).unwrap(),
            InterspeakDist::geometric(0.5).unwrap(),
        );
        let cfg = SimConfig::new(10_000, 1).unwrap();
        assert!(matches!(simulate_policy(&m, &Bad, &cfg), Err(Error::InfeasibleAction { .. })));
    }
}
