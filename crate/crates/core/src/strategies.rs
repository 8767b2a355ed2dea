//! Closed forms for three simple selection rules with two importance levels
//! and geometric speaking times.
//!
//! * `S1`: send the oldest important packet among the `K` most recent.
//! * `S2`: send the newest important packet among the `K` most recent.
//! * `S3`: send the newest important packet that arrived more than `K` slots
//!   ago; if there is none, fall back to `S1`.
//!
//! With no important packet in view every rule sends the newest packet.
//! Each rule is summarised by a small Markov chain on the position `a` of the
//! selected packet (`a = 1` is the newest, `a = 0` means nothing important).

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::Model;
use crate::par::Exec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Strategy {
    S1,
    S2,
    S3,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::S1, Strategy::S2, Strategy::S3];

    /// Number of chain states for window `k`.
    pub fn states(self, k: usize) -> usize {
        match self {
            Strategy::S1 | Strategy::S2 => k + 1,
            Strategy::S3 => k + 2,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Strategy::S1 => "S1",
            Strategy::S2 => "S2",
            Strategy::S3 => "S3",
        };
        f.write_str(s)
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S1" => Ok(Strategy::S1),
            "S2" => Ok(Strategy::S2),
            "S3" => Ok(Strategy::S3),
            _ => Err(Error::InvalidArgument(format!("unknown strategy {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrategyCurvePoint {
    pub strategy: Strategy,
    pub k: usize,
    pub delta_e: f64,
    pub d: f64,
    /// Stationary law of the chain state `a`.
    pub pi: Vec<f64>,
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("window size K must be at least 1".into()));
    }
    Ok(())
}

/// Distortion per slot from the fraction of speaking times that send an
/// unimportant packet.
fn distortion(model: &Model, p: f64, q: f64, pi0: f64) -> f64 {
    let v = model.values();
    (1.0 - q - p * pi0) * v[0] + (q - p * (1.0 - pi0)) * v[1]
}

fn normalise(mut pi: Vec<f64>) -> Vec<f64> {
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= total);
    pi
}

pub fn s1_point(model: &Model, k: usize) -> Result<StrategyCurvePoint> {
    check_k(k)?;
    let (p, q) = model.binary_geometric()?;
    let rho = (1.0 - q) / (1.0 - p);
    let mut pi = vec![0.0; k + 1];
    for (a, x) in pi.iter_mut().enumerate().skip(1) {
        *x = rho.powi((k - a) as i32);
    }
    pi[0] = (1.0 - q) / q * pi[1];
    let pi = normalise(pi);

    let kf = k as f64;
    let delta_e = if (rho - 1.0).abs() < 1e-9 {
        (kf - 1.0) * kf / (2.0 * (kf + (1.0 - p) / p))
    } else {
        let denom = 1.0 - p / q * rho.powi(k as i32);
        (kf - 1.0) / denom - rho * (1.0 - rho.powi(k as i32 - 1)) / (denom * (1.0 - rho))
    };
    let d = distortion(model, p, q, pi[0]);
    Ok(StrategyCurvePoint { strategy: Strategy::S1, k, delta_e, d, pi })
}

pub fn s2_point(model: &Model, k: usize) -> Result<StrategyCurvePoint> {
    check_k(k)?;
    let (p, q) = model.binary_geometric()?;
    let r = (1.0 - p) * (1.0 - q);
    let mut pi = vec![0.0; k + 1];
    pi[0] = ((1.0 - q) * p + q * r.powi(k as i32)) / (1.0 - r);
    for (a, x) in pi.iter_mut().enumerate().skip(1) {
        *x = q * r.powi(a as i32 - 1);
    }
    let delta_e = pi.iter().enumerate().skip(1).map(|(a, x)| (a - 1) as f64 * x).sum();
    let d = distortion(model, p, q, pi[0]);
    Ok(StrategyCurvePoint { strategy: Strategy::S2, k, delta_e, d, pi })
}

pub fn s3_point(model: &Model, k: usize) -> Result<StrategyCurvePoint> {
    check_k(k)?;
    let (p, q) = model.binary_geometric()?;
    let rho = (1.0 - q) / (1.0 - p);
    let mut pi = vec![0.0; k + 2];
    pi[k + 1] = 1.0;
    for a in 1..=k {
        pi[a] = p * rho.powi((k + 1 - a) as i32);
    }
    pi[0] = p * (1.0 - q) / q * rho.powi(k as i32);
    let pi = normalise(pi);
    let r = (1.0 - p) * (1.0 - q);
    let delta_e = (1..=k).map(|a| (a - 1) as f64 * pi[a]).sum::<f64>() + pi[k + 1] * (1.0 / (1.0 - r) + k as f64 - 1.0);
    let d = distortion(model, p, q, pi[0]);
    Ok(StrategyCurvePoint { strategy: Strategy::S3, k, delta_e, d, pi })
}

pub fn strategy_point(model: &Model, strategy: Strategy, k: usize) -> Result<StrategyCurvePoint> {
    match strategy {
        Strategy::S1 => s1_point(model, k),
        Strategy::S2 => s2_point(model, k),
        Strategy::S3 => s3_point(model, k),
    }
}

/// One point per window size; the points are independent.
pub fn strategy_curve(
    model: &Model,
    strategy: Strategy,
    ks: std::ops::RangeInclusive<usize>,
    exec: Exec,
) -> Result<Vec<StrategyCurvePoint>> {
    let ks: Vec<usize> = ks.collect();
    if ks.is_empty() {
        return Err(Error::InvalidArgument("empty K range".into()));
    }
    exec.map(&ks, |&k| strategy_point(model, strategy, k)).into_iter().collect()
}

/// Transition matrix of the chain on `a`, built by conditioning on `Z` and on
/// which packets in view are important (not from the closed forms).
///
/// Packets still buffered after a selection are fresh draws as far as the
/// rule is concerned, so a state is just the number `r` of such packets.
pub fn transition_matrix(model: &Model, strategy: Strategy, k: usize) -> Result<Matrix> {
    check_k(k)?;
    let (p, q) = model.binary_geometric()?;
    let qb = 1.0 - q;
    let n_states = strategy.states(k);
    let mut m = Matrix::zeros(n_states);

    // S1 rule on a window of w unknown packets: the oldest important one
    let oldest_rule = |row: &mut [f64], w: usize, weight: f64| {
        for j in 1..=w {
            row[w - j + 1] += weight * qb.powi(j as i32 - 1) * q;
        }
        row[0] += weight * qb.powi(w as i32);
    };

    for a in 0..n_states {
        let carry = match strategy {
            Strategy::S1 => a.saturating_sub(1),
            Strategy::S2 => 0,
            Strategy::S3 if a == k + 1 => k,
            Strategy::S3 => a.saturating_sub(1),
        };
        let row = m.row_mut(a);
        let mut z = 1usize;
        loop {
            let head = (1.0 - p).powi(z as i32 - 1);
            if head < 1e-20 {
                break;
            }
            let pz = head * p;
            let n = carry + z;
            match strategy {
                Strategy::S1 => oldest_rule(row, n.min(k), pz),
                Strategy::S2 => {
                    let w = n.min(k);
                    for dist in 1..=w {
                        row[dist] += pz * qb.powi(dist as i32 - 1) * q;
                    }
                    row[0] += pz * qb.powi(w as i32);
                }
                Strategy::S3 => {
                    if n > k {
                        let none_old = qb.powi((n - k) as i32);
                        row[k + 1] += pz * (1.0 - none_old);
                        oldest_rule(row, k, pz * none_old);
                    } else {
                        oldest_rule(row, n, pz);
                    }
                }
            }
            if p >= 1.0 {
                break;
            }
            z += 1;
        }
    }
    Ok(m)
}

/// Writes `strategy,K,delta_e,d` rows followed by the `dmin` reference row.
pub fn write_curve_csv<W: Write>(points: &[StrategyCurvePoint], d_min: f64, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["strategy", "K", "delta_e", "d"])?;
    for pt in points {
        w.write_record([pt.strategy.to_string(), pt.k.to_string(), pt.delta_e.to_string(), pt.d.to_string()])?;
    }
    w.write_record(["dmin".to_string(), String::new(), String::new(), d_min.to_string()])?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::stationary;
    use crate::model::{ImportanceDist, InterspeakDist};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::{prop_assert, proptest};

    fn binary(alpha1: f64, p: f64) -> Model {
        Model::new(
            ImportanceDist::new(vec![1.0, 20.0], vec![alpha1, 1.0 - alpha1]).unwrap(),
            InterspeakDist::geometric(p).unwrap(),
        )
    }

    #[test]
    fn window_of_one_is_send_newest() {
        let m = binary(0.7, 0.2);
        for s in Strategy::ALL {
            let pt = strategy_point(&m, s, 1).unwrap();
            if s != Strategy::S3 {
                assert_abs_diff_eq!(pt.delta_e, 0.0, epsilon = 1e-12);
                assert_abs_diff_eq!(pt.d, 5.36, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn s1_equal_rates_limit() {
        // q = p = 0.2
        let m = binary(0.8, 0.2);
        let pt = s1_point(&m, 3).unwrap();
        assert_abs_diff_eq!(pt.delta_e, 3.0 / 7.0, epsilon = 1e-12);
        let direct: f64 = pt.pi.iter().enumerate().skip(1).map(|(a, x)| (a - 1) as f64 * x).sum();
        assert_abs_diff_eq!(pt.delta_e, direct, epsilon = 1e-12);
    }

    #[test]
    fn s1_closed_age_matches_sum() {
        let m = binary(0.7, 0.2);
        for k in 1..=20 {
            let pt = s1_point(&m, k).unwrap();
            let direct: f64 = pt.pi.iter().enumerate().skip(1).map(|(a, x)| (a - 1) as f64 * x).sum();
            assert_abs_diff_eq!(pt.delta_e, direct, epsilon = 1e-10);
        }
    }

    #[test]
    fn s2_small_window() {
        let m = binary(0.7, 0.2);
        let pt = s2_point(&m, 1).unwrap();
        assert_abs_diff_eq!(pt.pi[1], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(pt.pi[0], 0.7, epsilon = 1e-12);
        let pi = stationary(&transition_matrix(&m, Strategy::S2, 1).unwrap()).unwrap();
        assert_abs_diff_eq!(pi[1], 0.3, epsilon = 1e-12);
        let big = s2_point(&m, 200).unwrap();
        assert_abs_diff_eq!(big.pi[0], 0.7 * 0.2 / (1.0 - 0.8 * 0.7), epsilon = 1e-12);
    }

    #[test]
    fn closed_forms_match_numeric_chains() {
        for m in [binary(0.7, 0.2), binary(0.8, 0.3), binary(0.8, 0.2)] {
            for s in Strategy::ALL {
                for k in 1..=15 {
                    let pt = strategy_point(&m, s, k).unwrap();
                    let p = transition_matrix(&m, s, k).unwrap();
                    for a in 0..p.dim() {
                        let total: f64 = p.row(a).iter().sum();
                        assert!((total - 1.0).abs() < 1e-12, "{s} K={k} row {a} sums to {total}");
                    }
                    let pi = stationary(&p).unwrap();
                    assert_abs_diff_eq!(pt.pi.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
                    for (x, y) in pt.pi.iter().zip(&pi) {
                        assert!((x - y).abs() < 1e-10, "{s} K={k}: {x} vs {y}");
                    }
                    if s != Strategy::S2 {
                        for a in 0..p.dim() {
                            for b in 0..p.dim() {
                                let flow = pt.pi[a] * p.get(a, b) - pt.pi[b] * p.get(b, a);
                                assert!(flow.abs() < 1e-10, "{s} K={k} ({a},{b})");
                            }
                        }
                    }
                    assert!(pt.d >= m.d_min() - 1e-10 && pt.d >= 0.0);
                }
            }
        }
    }

    #[test]
    fn s3_conditional_age_is_geometric() {
        let (p, q) = (0.2f64, 0.3f64);
        let r = (1.0 - p) * (1.0 - q);
        let total: f64 = (1..2000).map(|z| r.powi(z - 1) * (1.0 - r)).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        let mean: f64 = (1..2000).map(|z| z as f64 * r.powi(z - 1) * (1.0 - r)).sum();
        assert_abs_diff_eq!(mean, 1.0 / (1.0 - r), epsilon = 1e-9);
    }

    #[test]
    fn rejects_unsupported_models() {
        let three = Model::new(
            ImportanceDist::new(vec![1.0, 2.0, 3.0], vec![0.2, 0.3, 0.5]).unwrap(),
            InterspeakDist::geometric(0.5).unwrap(),
        );
        assert!(matches!(s1_point(&three, 2), Err(Error::Unsupported(_))));
        let pmf = Model::new(
            ImportanceDist::new(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap(),
            InterspeakDist::finite(vec![0.5, 0.5]).unwrap(),
        );
        assert!(s2_point(&pmf, 2).is_err());
        assert!(s3_point(&binary(0.7, 0.2), 0).is_err());
    }

    #[test]
    fn csv_layout() {
        let m = binary(0.7, 0.2);
        let pts = strategy_curve(&m, Strategy::S1, 1..=1, Exec::Sequential).unwrap();
        let mut buf = Vec::new();
        write_curve_csv(&pts, m.d_min(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "strategy,K,delta_e,d");
        assert!(lines[1].starts_with("S1,1,0,"));
        let last: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(&last[..3], &["dmin", "", ""]);
        assert_abs_diff_eq!(last[3].parse::<f64>().unwrap(), 2.7, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn s2_completeness(k in 1usize..=40, a1 in 0.05f64..0.95, p in 0.05f64..1.0) {
            let pt = s2_point(&binary(a1, p), k).unwrap();
            prop_assert!((pt.pi.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            prop_assert!(pt.pi.iter().all(|x| *x >= 0.0));
        }

        #[test]
        fn s1_s3_age_nondecreasing(k in 1usize..30) {
            for m in [binary(0.7, 0.2), binary(0.8, 0.3)] {
                prop_assert!(s1_point(&m, k + 1).unwrap().delta_e >= s1_point(&m, k).unwrap().delta_e - 1e-12);
                prop_assert!(s3_point(&m, k + 1).unwrap().delta_e >= s3_point(&m, k).unwrap().delta_e - 1e-12);
            }
        }
    }
}
