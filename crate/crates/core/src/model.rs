//! Source and timing distributions.
//!
//! A [`Model`] pairs the importance distribution of arriving packets with the
//! distribution of the interspeaking time `Z`. Everything downstream (the
//! solver, the closed forms, the simulator) reads its scalar quantities from
//! here: the moments `mu = E[Z]` and `nu = E[Z(Z+1)]/2`, the point and tail
//! probabilities of `Z`, and the bounds that depend only on the model.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::error::{Error, Result};

/// Absolute tolerance for every probability normalisation check.
pub const PROB_TOL: f64 = 1e-12;

/// Largest support accepted for a finite interspeaking PMF.
pub const MAX_PMF_SUPPORT: usize = 64;

/// Finite distribution of packet importance values.
#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceDist {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl ImportanceDist {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidModel("at least one importance value is required".into()));
        }
        if values.len() != probs.len() {
            return Err(Error::InvalidModel(format!(
                "{} values but {} probabilities",
                values.len(),
                probs.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidModel("importance values must be finite and nonnegative".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidModel("importance values must be strictly increasing".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::InvalidModel("importance probabilities must be positive".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidModel(format!("importance probabilities sum to {total}")));
        }
        Ok(Self { values, probs })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn v_min(&self) -> f64 {
        self.values[0]
    }

    pub fn v_max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(v, p)| v * p).sum()
    }

    /// Index of `value` in the alphabet, if present.
    pub fn symbol_of(&self, value: f64) -> Option<usize> {
        self.values.iter().position(|v| *v == value)
    }
}

/// Law of the interspeaking time `Z`, supported on the positive integers.
#[derive(Clone, Debug, PartialEq)]
pub enum InterspeakDist {
    /// `Pr(Z = k) = (1-p)^(k-1) p`.
    Geometric(f64),
    /// `pmf[k-1] = Pr(Z = k)` for `k = 1..=pmf.len()`.
    FinitePmf(Vec<f64>),
}

impl InterspeakDist {
    pub fn geometric(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidModel(format!("geometric parameter {p} outside (0, 1]")));
        }
        Ok(Self::Geometric(p))
    }

    pub fn finite(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() || pmf.len() > MAX_PMF_SUPPORT {
            return Err(Error::InvalidModel(format!(
                "finite interspeaking PMF needs between 1 and {MAX_PMF_SUPPORT} entries"
            )));
        }
        if pmf.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidModel("interspeaking probabilities must be nonnegative".into()));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidModel(format!("interspeaking PMF sums to {total}")));
        }
        Ok(Self::FinitePmf(pmf))
    }

    /// `Pr(Z = k)`.
    pub fn pmf(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match self {
            Self::Geometric(p) => (1.0 - p).powi(k as i32 - 1) * p,
            Self::FinitePmf(pmf) => pmf.get(k - 1).copied().unwrap_or(0.0),
        }
    }

    /// `Pr(Z >= k)`.
    pub fn tail(&self, k: usize) -> f64 {
        if k <= 1 {
            return 1.0;
        }
        match self {
            Self::Geometric(p) => (1.0 - p).powi(k as i32 - 1),
            Self::FinitePmf(pmf) => pmf.iter().skip(k - 1).sum(),
        }
    }

    /// `E[(Z - k)^+]`.
    pub fn excess_mean(&self, k: usize) -> f64 {
        match self {
            Self::Geometric(p) => (1.0 - p).powi(k as i32) / p,
            Self::FinitePmf(pmf) => pmf
                .iter()
                .enumerate()
                .map(|(i, pr)| (i + 1).saturating_sub(k) as f64 * pr)
                .sum(),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Geometric(p) => 1.0 / p,
            Self::FinitePmf(pmf) => pmf.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum(),
        }
    }

    /// `E[Z(Z+1)] / 2`.
    pub fn nu(&self) -> f64 {
        match self {
            Self::Geometric(p) => 1.0 / (p * p),
            Self::FinitePmf(pmf) => pmf
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let z = (i + 1) as f64;
                    z * (z + 1.0) / 2.0 * p
                })
                .sum(),
        }
    }

    /// Success probability when `Z` is geometric.
    pub fn geometric_p(&self) -> Option<f64> {
        match self {
            Self::Geometric(p) => Some(*p),
            Self::FinitePmf(_) => None,
        }
    }
}

/// Importance distribution plus interspeaking law, with cached moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    v: ImportanceDist,
    z: InterspeakDist,
    mu: f64,
    nu: f64,
}

impl Model {
    pub fn new(v: ImportanceDist, z: InterspeakDist) -> Self {
        let mu = z.mean();
        let nu = z.nu();
        Self { v, z, mu, nu }
    }

    pub fn importance(&self) -> &ImportanceDist {
        &self.v
    }

    pub fn interspeak(&self) -> &InterspeakDist {
        &self.z
    }

    /// `E[Z]`.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `E[Z(Z+1)]/2`; `nu / mu` is the age offset no policy can avoid.
    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn alphabet(&self) -> usize {
        self.v.len()
    }

    pub fn values(&self) -> &[f64] {
        self.v.values()
    }

    pub fn probs(&self) -> &[f64] {
        self.v.probs()
    }

    pub fn mean_importance(&self) -> f64 {
        self.v.mean()
    }

    pub fn z_pmf(&self, k: usize) -> f64 {
        self.z.pmf(k)
    }

    pub fn z_tail(&self, k: usize) -> f64 {
        self.z.tail(k)
    }

    pub fn z_excess_mean(&self, k: usize) -> f64 {
        self.z.excess_mean(k)
    }

    /// Lower bound on distortion: at most a `1/mu` fraction of packets is ever
    /// delivered, so the best case sends the most important ones.
    pub fn d_min(&self) -> f64 {
        let rate = 1.0 / self.mu;
        let probs = self.v.probs();
        let values = self.v.values();
        // tail[j] = sum_{i >= j} alpha_i
        let mut tail = vec![0.0; probs.len() + 1];
        for j in (0..probs.len()).rev() {
            tail[j] = tail[j + 1] + probs[j];
        }
        if tail[0] < rate - PROB_TOL {
            return 0.0;
        }
        let j_star = (0..probs.len())
            .rev()
            .find(|&j| tail[j] >= rate - PROB_TOL)
            .unwrap_or(0);
        let below: f64 = (0..j_star).map(|i| probs[i] * values[i]).sum();
        below + (tail[j_star] - rate).max(0.0) * values[j_star]
    }

    /// Weight above which always sending the newest packet is optimal.
    pub fn eta_max(&self) -> f64 {
        (self.v.v_max() - self.v.v_min()) / self.mu
    }

    /// Buffer size `K(eta)` that suffices (and is needed) at weight `eta`.
    pub fn buffer_bound(&self, eta: f64) -> Result<usize> {
        let k = self.reach(self.v.v_max(), eta)?;
        Ok(k.max(1))
    }

    /// `K_i(eta)`: an optimal policy never selects `v_i` from `K_i` or more
    /// slots behind the newest packet.
    pub fn buffer_bound_i(&self, eta: f64, i: usize) -> Result<usize> {
        let v = *self
            .v
            .values()
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("importance index {i} out of range")))?;
        self.reach(v, eta)
    }

    fn reach(&self, v: f64, eta: f64) -> Result<usize> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
        }
        Ok(ceil_tolerant((v - self.v.v_min()) / (eta * self.mu)))
    }

    /// Checks the shape required by the closed-form strategies and the
    /// buffer-ignorant analysis: two importance levels and geometric `Z`.
    pub fn binary_geometric(&self) -> Result<(f64, f64)> {
        let p = self
            .z
            .geometric_p()
            .ok_or_else(|| Error::Unsupported("closed forms need a geometric interspeaking time".into()))?;
        if self.v.len() != 2 {
            return Err(Error::Unsupported(format!(
                "closed forms need exactly two importance values, got {}",
                self.v.len()
            )));
        }
        Ok((p, self.v.probs()[1]))
    }
}

/// Ceiling that treats values within a relative `1e-9` of an integer as that
/// integer, so grid points such as `(v_max - v_min) / (17 mu)` land on 17.
pub(crate) fn ceil_tolerant(x: f64) -> usize {
    if x <= 0.0 {
        return 0;
    }
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// JSON model document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
    pub z: ZConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZConfig {
    Geometric(f64),
    Pmf(Vec<f64>),
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn build(&self) -> Result<Model> {
        let v = ImportanceDist::new(self.values.clone(), self.probs.clone())?;
        let z = match &self.z {
            ZConfig::Geometric(p) => InterspeakDist::geometric(*p)?,
            ZConfig::Pmf(pmf) => InterspeakDist::finite(pmf.clone())?,
        };
        Ok(Model::new(v, z))
    }

    /// SHA-256 of the compact JSON form; ties saved policies to their model.
    pub fn fingerprint(&self) -> String {
        let text = serde_json::to_string(self).expect("model config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

impl From<&Model> for ModelConfig {
    fn from(model: &Model) -> Self {
        Self {
            values: model.values().to_vec(),
            probs: model.probs().to_vec(),
            z: match model.interspeak() {
                InterspeakDist::Geometric(p) => ZConfig::Geometric(*p),
                InterspeakDist::FinitePmf(pmf) => ZConfig::Pmf(pmf.clone()),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn model(values: &[f64], probs: &[f64], p: f64) -> Model {
        Model::new(
            ImportanceDist::new(values.to_vec(), probs.to_vec()).unwrap(),
            InterspeakDist::geometric(p).unwrap(),
        )
    }

    #[test]
    fn geometric_point_and_tail_values() {
        let z = InterspeakDist::geometric(0.2).unwrap();
        assert_abs_diff_eq!(z.pmf(1), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(z.pmf(3), 0.128, epsilon = 1e-15);
        assert_abs_diff_eq!(z.tail(1), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(z.tail(4), 0.512, epsilon = 1e-15);
        assert_eq!(InterspeakDist::finite(vec![0.5, 0.5]).unwrap().pmf(3), 0.0);
    }

    #[test]
    fn geometric_excess_mean_matches_brute_force_sum() {
        let z = InterspeakDist::geometric(0.2).unwrap();
        // sum_{k>1} (k-1) Pr(Z=k), truncated where the terms fall below 1e-16
        let brute: f64 = (2..400).map(|k| (k - 1) as f64 * z.pmf(k)).sum();
        assert_abs_diff_eq!(brute, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(z.excess_mean(1), brute, epsilon = 1e-12);
    }

    #[test]
    fn finite_pmf_moments() {
        let z = InterspeakDist::finite(vec![0.25, 0.5, 0.25]).unwrap();
        assert_abs_diff_eq!(z.mean(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(z.nu(), (0.25 * 1.0 + 0.5 * 3.0 + 0.25 * 6.0), epsilon = 1e-15);
        assert_abs_diff_eq!(z.tail(2), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(z.excess_mean(1), 0.5 + 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(z.excess_mean(3), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn d_min_reported_settings() {
        assert_abs_diff_eq!(model(&[1.0, 20.0], &[0.7, 0.3], 0.2).d_min(), 2.7, epsilon = 1e-12);
        assert_abs_diff_eq!(model(&[1.0, 20.0], &[0.8, 0.2], 0.3).d_min(), 0.7, epsilon = 1e-12);
        assert_eq!(model(&[1.0], &[1.0], 1.0).d_min(), 0.0);
    }

    #[test]
    fn buffer_bounds() {
        let m = model(&[1.0, 20.0], &[0.7, 0.3], 0.2);
        assert_abs_diff_eq!(m.eta_max(), 3.8, epsilon = 1e-12);
        assert_eq!(m.buffer_bound(1.0).unwrap(), 4);
        assert_eq!(m.buffer_bound(3.8).unwrap(), 1);
        assert_eq!(m.buffer_bound(10.0).unwrap(), 1);
        assert_eq!(m.buffer_bound(19.0 / (17.0 * 5.0)).unwrap(), 17);
        assert_eq!(m.buffer_bound_i(1.0, 0).unwrap(), 0);
        assert_eq!(m.buffer_bound_i(1.0, 1).unwrap(), 4);
        assert!(m.buffer_bound(0.0).is_err());
        assert!(m.buffer_bound(-1.0).is_err());
    }

    #[test]
    fn general_v_min_is_not_normalised() {
        let m = model(&[2.0, 5.0, 11.0], &[0.5, 0.3, 0.2], 0.25);
        assert_abs_diff_eq!(m.eta_max(), 9.0 / 4.0, epsilon = 1e-12);
        assert_eq!(m.buffer_bound_i(1.0, 1).unwrap(), 1);
        assert_eq!(m.buffer_bound(1.0).unwrap(), 3);
        // 1/mu = 0.25 covered by the top value alone (0.2) plus 0.05 of the middle one
        assert_abs_diff_eq!(m.d_min(), 0.5 * 2.0 + 0.25 * 5.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_distributions() {
        assert!(ImportanceDist::new(vec![], vec![]).is_err());
        assert!(ImportanceDist::new(vec![1.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(ImportanceDist::new(vec![1.0, 2.0], vec![0.5, 0.6]).is_err());
        assert!(ImportanceDist::new(vec![1.0, 2.0], vec![1.0, 0.0]).is_err());
        assert!(ImportanceDist::new(vec![-1.0, 2.0], vec![0.5, 0.5]).is_err());
        assert!(ImportanceDist::new(vec![0.0, 2.0], vec![0.5, 0.5]).is_ok());
        assert!(InterspeakDist::geometric(0.0).is_err());
        assert!(InterspeakDist::geometric(1.5).is_err());
        assert!(InterspeakDist::finite(vec![0.5; 3]).is_err());
        assert!(InterspeakDist::finite(vec![1.0 / 65.0; 65]).is_err());
    }

    #[test]
    fn config_round_trip_and_field_names() {
        let text = r#"{"values":[1,20],"probs":[0.7,0.3],"z":{"geometric":0.2}}"#;
        let cfg = ModelConfig::from_json(text).unwrap();
        let m = cfg.build().unwrap();
        assert_abs_diff_eq!(m.mu(), 5.0, epsilon = 1e-15);
        let pmf = ModelConfig::from_json(r#"{"values":[1],"probs":[1],"z":{"pmf":[1.0]}}"#).unwrap();
        assert_eq!(pmf.build().unwrap().mu(), 1.0);
        let back = ModelConfig::from(&m);
        assert_eq!(back, cfg);
        assert_eq!(back.fingerprint(), cfg.fingerprint());
    }

    proptest! {
        #[test]
        fn geometric_mass_and_tails_are_consistent(p in 0.05f64..1.0) {
            let z = InterspeakDist::geometric(p).unwrap();
            let head: f64 = (1..=200).map(|k| z.pmf(k)).sum();
            prop_assert!((head + z.tail(201) - 1.0).abs() < 1e-12);
            for k in 1..=50 {
                let direct: f64 = (k..k + 2000).map(|j| z.pmf(j)).sum();
                prop_assert!((z.tail(k) - direct).abs() < 1e-12);
            }
            prop_assert!((z.nu() / z.mean() - 1.0 / p).abs() < 1e-12 / p);
        }

        #[test]
        fn d_min_nonincreasing_in_speaking_rate(p1 in 0.05f64..1.0, dp in 0.0f64..0.5, a in 0.05f64..0.95) {
            let p2 = (p1 + dp).min(1.0);
            let lo = model(&[1.0, 7.0], &[a, 1.0 - a], p1).d_min();
            let hi = model(&[1.0, 7.0], &[a, 1.0 - a], p2).d_min();
            prop_assert!(hi <= lo + 1e-12);
        }

        #[test]
        fn buffer_bound_nonincreasing(eta in 0.01f64..10.0, factor in 1.0f64..4.0) {
            let m = model(&[1.0, 20.0], &[0.7, 0.3], 0.2);
            prop_assert!(m.buffer_bound(eta * factor).unwrap() <= m.buffer_bound(eta).unwrap());
            if eta >= m.eta_max() {
                prop_assert_eq!(m.buffer_bound(eta).unwrap(), 1);
            }
        }
    }
}
