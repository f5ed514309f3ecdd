use rand::Rng;

use super::legacy::uniform_index;
use super::{mixed_probabilities, sample_index, Reward};
use crate::error::BanditError;

/// Learner state for the two-phase exploration/elimination policy.
///
/// Weights are stored as natural logarithms so long horizons cannot overflow;
/// [`MixMabState::weights`] exponentiates on demand. An action that is
/// eliminated stays out of the sampling distribution until the next count
/// reset re-admits every action.
#[derive(Debug, Clone, PartialEq)]
pub struct MixMabState {
    /// `None` until the first update writes them.
    pub probabilities: Option<Vec<f64>>,
    pub log_weights: Vec<f64>,
    pub counts: Vec<u64>,
    pub eliminated: Vec<bool>,
    pub alpha: u64,
    pub gamma: f64,
    pub l_exp: u64,
    pub l_ee: u64,
    pub iteration: u64,
    pub round_robin_cursor: usize,
}

/// What happened during one [`MixMabState::update`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct UpdateReport {
    pub eliminated: bool,
    pub reset: bool,
}

impl MixMabState {
    pub fn new(arms: usize, gamma: f64, l_exp: u64, l_ee: u64) -> Self {
        assert!(arms >= 1, "at least one arm is required");
        assert!((0.0..=1.0).contains(&gamma), "gamma must lie in [0, 1]");
        MixMabState {
            probabilities: None,
            log_weights: vec![0.0; arms],
            counts: vec![0; arms],
            eliminated: vec![false; arms],
            alpha: 1,
            gamma,
            l_exp,
            l_ee,
            iteration: 0,
            round_robin_cursor: 0,
        }
    }

    pub fn arms(&self) -> usize {
        self.log_weights.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    /// True while the round-robin pre-processing phase is active.
    pub fn in_exploration(&self) -> bool {
        self.counts.iter().min().is_some_and(|&m| m <= self.l_exp)
    }

    pub fn select<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        self.iteration += 1;
        if self.in_exploration() {
            let k = self.round_robin_cursor;
            self.round_robin_cursor = (k + 1) % self.arms();
            return k;
        }
        self.probabilities
            .as_deref()
            .and_then(|p| sample_index(p, rng))
            .unwrap_or_else(|| uniform_index(self.arms(), rng))
    }

    /// Feed back the reward for `action`, the arm played this iteration.
    pub fn update(&mut self, action: usize, reward: Reward) -> Result<UpdateReport, BanditError> {
        let arms = self.arms();
        if action >= arms {
            return Err(BanditError::ActionOutOfRange {
                index: action,
                arms,
            });
        }
        let mut report = UpdateReport::default();

        let mut probs = mixed_probabilities(&self.log_weights, self.gamma);

        let played = probs[action];
        if reward == Reward::Ack {
            self.log_weights[action] += self.gamma * reward.value() / (arms as f64 * played);
        }

        self.counts[action] += 1;

        let max = probs.iter().copied().fold(0.0, f64::max);
        if self.counts[action] > self.l_exp && played < 0.5 * max {
            self.eliminated[action] = true;
            report.eliminated = true;
        }
        for (p, &gone) in probs.iter_mut().zip(&self.eliminated) {
            if gone {
                *p = 0.0;
            }
        }
        self.probabilities = Some(probs);

        if self.counts[action] > self.alpha * self.l_ee {
            self.counts.iter_mut().for_each(|n| *n = 0);
            self.eliminated.iter_mut().for_each(|e| *e = false);
            self.alpha += 1;
            report.reset = true;
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fresh_state_round_robins_from_zero() {
        let mut s = MixMabState::new(6, 0.1, 5, 100);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let seq: Vec<usize> = (0..8)
            .map(|_| {
                let k = s.select(&mut rng);
                s.update(k, Reward::Nack).unwrap();
                k
            })
            .collect();
        assert_eq!(seq, vec![0, 1, 2, 3, 4, 5, 0, 1]);
    }

    #[test]
    fn probabilities_unset_until_first_update() {
        let mut s = MixMabState::new(3, 0.2, 5, 100);
        assert!(s.probabilities.is_none());
        s.update(0, Reward::Nack).unwrap();
        let p = s.probabilities.as_ref().unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_reward_uniform_weights() {
        let mut s = MixMabState::new(6, 0.5, 5, 100);
        s.update(2, Reward::Nack).unwrap();
        for p in s.probabilities.as_ref().unwrap() {
            assert!((p - 1.0 / 6.0).abs() < 1e-9);
        }
        assert_eq!(s.log_weights[2].to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn two_arm_weight_update() {
        let mut s = MixMabState::new(2, 0.1, 5, 100);
        s.update(0, Reward::Ack).unwrap();
        let p = s.probabilities.as_ref().unwrap();
        assert!((p[0] - 0.5).abs() < 1e-9 && (p[1] - 0.5).abs() < 1e-9);
        assert!((s.weights()[0] - 0.1f64.exp()).abs() < 1e-9);
        assert!((s.weights()[0] - 1.105_170_918).abs() < 1e-9);
        assert_eq!(s.weights()[1], 1.0);
    }

    #[test]
    fn elimination_fires_below_half_max() {
        // gamma = 0 makes P proportional to W: [8, 3, 5, 4] / 20
        let mut s = MixMabState::new(4, 0.0, 5, 100);
        s.log_weights = [8.0f64, 3.0, 5.0, 4.0].iter().map(|w| w.ln()).collect();
        s.counts = vec![6, 5, 6, 6];
        let report = s.update(1, Reward::Nack).unwrap();
        assert!(report.eliminated);
        let p = s.probabilities.as_ref().unwrap();
        assert_eq!(p[1], 0.0);
        assert!((p[0] - 0.4).abs() < 1e-12);
        assert!(s.eliminated[1]);
    }

    #[test]
    fn elimination_never_during_first_l_exp_plays() {
        let mut s = MixMabState::new(4, 0.0, 5, 100);
        s.log_weights = [8.0f64, 3.0, 5.0, 4.0].iter().map(|w| w.ln()).collect();
        s.counts = vec![6, 4, 6, 6];
        let report = s.update(1, Reward::Nack).unwrap();
        assert!(!report.eliminated);
        assert!(s.probabilities.as_ref().unwrap()[1] > 0.0);
    }

    #[test]
    fn elimination_persists_until_reset() {
        let mut s = MixMabState::new(4, 0.0, 5, 100);
        s.log_weights = [8.0f64, 3.0, 5.0, 4.0].iter().map(|w| w.ln()).collect();
        s.counts = vec![6, 5, 6, 6];
        s.update(1, Reward::Nack).unwrap();
        s.update(0, Reward::Nack).unwrap();
        assert_eq!(s.probabilities.as_ref().unwrap()[1], 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..2000 {
            assert_ne!(s.select(&mut rng), 1);
        }
    }

    #[test]
    fn reset_zeroes_counts_and_keeps_learning() {
        let mut s = MixMabState::new(3, 0.3, 5, 100);
        s.log_weights = vec![0.5, 0.0, 0.2];
        s.counts = vec![100, 40, 7];
        s.eliminated = vec![false, true, false];
        s.update(0, Reward::Nack).unwrap();
        let before_w = s.log_weights.clone();
        let before_p = s.probabilities.clone();
        // now counts[0] = 101 > alpha * l_ee = 100 and the reset has fired
        assert_eq!(s.counts, vec![0, 0, 0]);
        assert_eq!(s.alpha, 2);
        assert_eq!(s.eliminated, vec![false; 3]);
        assert_eq!(s.log_weights, before_w);
        assert_eq!(s.probabilities, before_p);
        assert!(s.in_exploration());
    }

    #[test]
    fn pdf_phase_falls_back_to_uniform_when_all_eliminated() {
        let mut s = MixMabState::new(3, 0.1, 0, 1_000);
        s.counts = vec![5, 5, 5];
        s.probabilities = Some(vec![0.0; 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut seen = [false; 3];
        for _ in 0..300 {
            seen[s.select(&mut rng)] = true;
        }
        assert_eq!(seen, [true; 3]);
    }

    #[test]
    fn out_of_range_action_is_rejected() {
        let mut s = MixMabState::new(2, 0.1, 5, 100);
        assert_eq!(
            s.update(2, Reward::Ack),
            Err(BanditError::ActionOutOfRange { index: 2, arms: 2 })
        );
    }
}
