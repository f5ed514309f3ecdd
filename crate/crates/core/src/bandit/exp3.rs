use rand::Rng;

use super::legacy::uniform_index;
use super::{mixed_probabilities, sample_index, Reward};
use crate::error::BanditError;

/// Exponential-weights learner with a uniform prior and no elimination.
#[derive(Debug, Clone, PartialEq)]
pub struct Exp3State {
    pub probabilities: Vec<f64>,
    pub log_weights: Vec<f64>,
    pub gamma: f64,
    pub iteration: u64,
}

impl Exp3State {
    pub fn new(arms: usize, gamma: f64) -> Self {
        assert!(arms >= 1, "at least one arm is required");
        assert!((0.0..=1.0).contains(&gamma), "gamma must lie in [0, 1]");
        Exp3State {
            probabilities: vec![1.0 / arms as f64; arms],
            log_weights: vec![0.0; arms],
            gamma,
            iteration: 0,
        }
    }

    pub fn arms(&self) -> usize {
        self.log_weights.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    pub fn select<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        self.iteration += 1;
        sample_index(&self.probabilities, rng).unwrap_or_else(|| uniform_index(self.arms(), rng))
    }

    pub fn update(&mut self, action: usize, reward: Reward) -> Result<(), BanditError> {
        let arms = self.arms();
        if action >= arms {
            return Err(BanditError::ActionOutOfRange {
                index: action,
                arms,
            });
        }
        self.probabilities = mixed_probabilities(&self.log_weights, self.gamma);
        if reward == Reward::Ack {
            self.log_weights[action] +=
                self.gamma * reward.value() / (arms as f64 * self.probabilities[action]);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::{learning_rate, DEFAULT_EULER_APPROX};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_prior() {
        let s = Exp3State::new(6, 0.1);
        for p in &s.probabilities {
            assert!((p - 1.0 / 6.0).abs() < 1e-15);
        }
        assert_eq!(s.weights(), vec![1.0; 6]);
    }

    #[test]
    fn single_arm_always_plays_zero() {
        let mut s = Exp3State::new(1, 0.0);
        assert_eq!(s.probabilities, vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(s.select(&mut rng), 0);
            s.update(0, Reward::Ack).unwrap();
        }
    }

    #[test]
    fn constant_reward_arm_dominates() {
        let horizon = 10_000;
        let gamma = learning_rate(2, horizon, DEFAULT_EULER_APPROX).unwrap();
        let mut s = Exp3State::new(2, gamma);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..horizon {
            let k = s.select(&mut rng);
            s.update(k, Reward::from_ack(k == 0)).unwrap();
        }
        assert!(s.probabilities[0] > 0.9, "{:?}", s.probabilities);
    }
}
