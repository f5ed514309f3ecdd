//! Per-device transmission-parameter learners.
//!
//! Three policies share one interface ([`DevicePolicy`]):
//!
//! - [`MixMabState`]: round-robin pre-processing, then exponential-weights
//!   sampling with successive elimination and count resets.
//! - [`Exp3State`]: plain exponential weights with a uniform prior
//!   ("LoRa-MAB").
//! - [`legacy_random_select`]: stateless uniform choice ("Legacy LoRa").

mod action;
mod exp3;
mod legacy;
mod mixmab;

pub use action::{ActionConfig, ActionSpace, MAX_SF, MIN_SF};
pub use exp3::Exp3State;
pub use legacy::legacy_random_select;
pub use mixmab::{MixMabState, UpdateReport};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BanditError, ConfigError};

/// Approximation of Euler's number used in the learning-rate denominator.
pub const DEFAULT_EULER_APPROX: f64 = 2.71;
/// Default number of extra round-robin sweeps before sampling starts.
pub const DEFAULT_L_EXP: u64 = 5;
/// Default base for the count-reset threshold.
pub const DEFAULT_L_EE: u64 = 100;

/// Binary feedback for one transmission: acknowledged or not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reward {
    Nack,
    Ack,
}

impl Reward {
    pub fn from_ack(acked: bool) -> Self {
        if acked {
            Reward::Ack
        } else {
            Reward::Nack
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Reward::Nack => 0.0,
            Reward::Ack => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "mixmab")]
    MixMab,
    #[serde(rename = "loramab")]
    Exp3LoRaMab,
    #[serde(rename = "legacy")]
    LegacyRandom,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [
        PolicyKind::MixMab,
        PolicyKind::Exp3LoRaMab,
        PolicyKind::LegacyRandom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::MixMab => "mixmab",
            PolicyKind::Exp3LoRaMab => "loramab",
            PolicyKind::LegacyRandom => "legacy",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mixmab" | "mix-mab" => Ok(PolicyKind::MixMab),
            "loramab" | "lora-mab" | "exp3" => Ok(PolicyKind::Exp3LoRaMab),
            "legacy" | "random" => Ok(PolicyKind::LegacyRandom),
            other => Err(ConfigError::invalid(
                "policy",
                format!("unknown policy `{other}` (expected mixmab, loramab or legacy)"),
            )),
        }
    }
}

/// Exponential-weights learning rate `min{1, sqrt(K ln K / ((e - 1) T))}`.
///
/// `euler` is the value substituted for `e` in the denominator; the default
/// configuration uses [`DEFAULT_EULER_APPROX`].
pub fn learning_rate(arms: usize, horizon: u64, euler: f64) -> Result<f64, ConfigError> {
    if arms == 0 {
        return Err(ConfigError::invalid(
            "arms",
            "at least one action is required",
        ));
    }
    if horizon == 0 {
        return Err(ConfigError::invalid(
            "horizon",
            "expected number of iterations must be at least 1",
        ));
    }
    if euler.is_nan() || euler <= 1.0 || !euler.is_finite() {
        return Err(ConfigError::invalid(
            "policy.euler_constant",
            "must be a finite value greater than 1",
        ));
    }
    let k = arms as f64;
    let rate = (k * k.ln() / ((euler - 1.0) * horizon as f64)).sqrt();
    Ok(rate.min(1.0))
}

/// Hyperparameters shared by the learning policies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerParams {
    pub gamma: f64,
    pub l_exp: u64,
    pub l_ee: u64,
}

/// One device's policy instance.
#[derive(Debug, Clone)]
pub enum DevicePolicy {
    MixMab(MixMabState),
    Exp3(Exp3State),
    Legacy { arms: usize },
}

impl DevicePolicy {
    pub fn new(kind: PolicyKind, arms: usize, params: &LearnerParams) -> Self {
        match kind {
            PolicyKind::MixMab => DevicePolicy::MixMab(MixMabState::new(
                arms,
                params.gamma,
                params.l_exp,
                params.l_ee,
            )),
            PolicyKind::Exp3LoRaMab => DevicePolicy::Exp3(Exp3State::new(arms, params.gamma)),
            PolicyKind::LegacyRandom => DevicePolicy::Legacy { arms },
        }
    }

    pub fn kind(&self) -> PolicyKind {
        match self {
            DevicePolicy::MixMab(_) => PolicyKind::MixMab,
            DevicePolicy::Exp3(_) => PolicyKind::Exp3LoRaMab,
            DevicePolicy::Legacy { .. } => PolicyKind::LegacyRandom,
        }
    }

    pub fn arms(&self) -> usize {
        match self {
            DevicePolicy::MixMab(s) => s.arms(),
            DevicePolicy::Exp3(s) => s.arms(),
            DevicePolicy::Legacy { arms } => *arms,
        }
    }

    pub fn select<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        match self {
            DevicePolicy::MixMab(s) => s.select(rng),
            DevicePolicy::Exp3(s) => s.select(rng),
            DevicePolicy::Legacy { arms } => legacy::uniform_index(*arms, rng),
        }
    }

    pub fn update(&mut self, action: usize, reward: Reward) -> Result<(), BanditError> {
        match self {
            DevicePolicy::MixMab(s) => s.update(action, reward).map(|_| ()),
            DevicePolicy::Exp3(s) => s.update(action, reward),
            DevicePolicy::Legacy { arms } => {
                if action >= *arms {
                    Err(BanditError::ActionOutOfRange {
                        index: action,
                        arms: *arms,
                    })
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Probabilities `(1 - gamma) * w_k / sum(w) + gamma / K`, normalized by
/// their own sum. Weights are given in log space.
pub(crate) fn mixed_probabilities(log_weights: &[f64], gamma: f64) -> Vec<f64> {
    let arms = log_weights.len() as f64;
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = scaled.iter().sum();
    let mut probs: Vec<f64> = scaled
        .iter()
        .map(|w| (1.0 - gamma) * (w / total) + gamma / arms)
        .collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    probs
}

/// Inverse-CDF draw over the strictly positive entries of `probabilities`,
/// renormalized. Exact boundary ties go to the smaller index. Returns `None`
/// when no entry is positive.
pub(crate) fn sample_index<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = probabilities.iter().filter(|p| **p > 0.0).sum();
    if !(total > 0.0 && total.is_finite()) {
        return None;
    }
    let target = rng.random::<f64>() * total;
    let mut cumulative = 0.0;
    let mut last = None;
    for (i, &p) in probabilities.iter().enumerate() {
        if p > 0.0 {
            cumulative += p;
            last = Some(i);
            if target <= cumulative {
                return Some(i);
            }
        }
    }
    // round-off can leave `target` a hair above the final cumulative sum
    last
}
