mod common;

use lorabandit::bandit::{
    learning_rate, legacy_random_select, ActionSpace, DevicePolicy, Exp3State, LearnerParams,
    MixMabState, PolicyKind, Reward, DEFAULT_EULER_APPROX,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rewards(bits: &[bool]) -> impl Iterator<Item = Reward> + '_ {
    bits.iter().map(|&b| Reward::from_ack(b))
}

#[test]
fn best_arm_dominates_tail_on_stationary_bernoulli() {
    let success = [0.9, 0.5, 0.5, 0.5, 0.5, 0.5];
    let gamma = learning_rate(6, 20_000, DEFAULT_EULER_APPROX).unwrap();
    let good = (0..40u64)
        .filter(|&seed| {
            let tail = common::bernoulli_run(&success, gamma, 20_000, 1000, seed);
            tail.iter().filter(|&&k| k == 0).count() > 800
        })
        .count();
    assert!(good >= 38, "best arm dominated in only {good} of 40 seeds");
}

#[test]
fn preprocessing_is_six_full_sweeps() {
    let arms = 7;
    let mut s = MixMabState::new(arms, 0.05, 5, 100);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for t in 0..6 * arms {
        assert!(s.in_exploration());
        assert_eq!(s.select(&mut rng), t % arms);
        s.update(t % arms, Reward::from_ack(t % 3 == 0)).unwrap();
    }
    assert!(!s.in_exploration());
    assert!(s.counts.iter().all(|&n| n == 6));
}

#[test]
fn reset_returns_to_round_robin_with_learning_kept() {
    let mut s = MixMabState::new(2, 0.3, 0, 3);
    // with l_exp = 0 the first pull of each arm leaves exploration
    for k in [0, 1] {
        s.update(k, Reward::Ack).unwrap();
    }
    for _ in 0..2 {
        s.update(0, Reward::Ack).unwrap();
    }
    let mut twin = s.clone();
    twin.l_ee = u64::MAX;
    let report = s.update(0, Reward::Nack).unwrap();
    twin.update(0, Reward::Nack).unwrap();
    assert!(report.reset);
    assert_eq!(s.alpha, 2);
    assert!(s.counts.iter().all(|&n| n == 0));
    assert_eq!(s.log_weights, twin.log_weights);
    assert_eq!(s.probabilities, twin.probabilities);
    assert!(s.in_exploration());
}

#[test]
fn legacy_is_uniform() {
    let space = ActionSpace::new(&[7, 8, 9, 10, 11, 12], &[868_100_000], &[14]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut counts = [0u32; 6];
    for _ in 0..60_000 {
        counts[legacy_random_select(&space, &mut rng)] += 1;
    }
    for c in counts {
        assert!(
            (f64::from(c) / 60_000.0 - 1.0 / 6.0).abs() < 0.01,
            "{counts:?}"
        );
    }
}

#[test]
fn uniform_probabilities_sample_uniformly() {
    let mut s = MixMabState::new(6, 0.5, 5, 1_000_000);
    s.counts = vec![6; 6];
    s.probabilities = Some(vec![1.0 / 6.0; 6]);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut counts = [0u32; 6];
    for _ in 0..60_000 {
        counts[s.select(&mut rng)] += 1;
    }
    for c in counts {
        assert!(
            (f64::from(c) / 60_000.0 - 1.0 / 6.0).abs() < 0.01,
            "{counts:?}"
        );
    }
}

#[test]
fn degenerate_distribution_is_deterministic() {
    let mut s = MixMabState::new(6, 0.5, 5, 100);
    s.counts = vec![6; 6];
    s.probabilities = Some(vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    assert!((0..1000).all(|_| s.select(&mut rng) == 1));
}

#[test]
fn legacy_ignores_rewards() {
    let params = LearnerParams {
        gamma: 0.1,
        l_exp: 5,
        l_ee: 100,
    };
    let mut a = DevicePolicy::new(PolicyKind::LegacyRandom, 6, &params);
    let mut b = a.clone();
    let mut ra = ChaCha8Rng::seed_from_u64(5);
    let mut rb = ChaCha8Rng::seed_from_u64(5);
    for t in 0..500 {
        let ka = a.select(&mut ra);
        let kb = b.select(&mut rb);
        assert_eq!(ka, kb);
        a.update(ka, Reward::Ack).unwrap();
        b.update(kb, Reward::from_ack(t % 2 == 0)).unwrap();
    }
}

proptest! {
    #[test]
    fn probabilities_stay_on_simplex(
        arms in 1usize..10,
        gamma in 0.0f64..=1.0,
        plays in prop::collection::vec((0usize..10, any::<bool>()), 1..300),
    ) {
        let mut s = MixMabState::new(arms, gamma, 5, 100);
        let mut e = Exp3State::new(arms, gamma);
        for (k, hit) in plays {
            let k = k % arms;
            s.update(k, Reward::from_ack(hit)).unwrap();
            e.update(k, Reward::from_ack(hit)).unwrap();
            let p = s.probabilities.as_ref().unwrap();
            prop_assert!(p.iter().all(|&x| (0.0..=1.0 + 1e-12).contains(&x)));
            prop_assert!(p.iter().sum::<f64>() <= 1.0 + 1e-9);
            prop_assert!((e.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(e.probabilities.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn weights_never_decrease(
        arms in 1usize..8,
        gamma in 0.0f64..=1.0,
        plays in prop::collection::vec((0usize..8, any::<bool>()), 1..200),
    ) {
        let mut s = MixMabState::new(arms, gamma, 5, 100);
        for (k, hit) in plays {
            let before = s.log_weights.clone();
            s.update(k % arms, Reward::from_ack(hit)).unwrap();
            for (a, b) in before.iter().zip(&s.log_weights) {
                prop_assert!(b >= a);
            }
        }
    }

    #[test]
    fn zero_reward_leaves_weight_bit_identical(
        arms in 1usize..8,
        gamma in 0.0f64..=1.0,
        warmup in prop::collection::vec(any::<bool>(), 0..100),
        k in 0usize..8,
    ) {
        let mut s = MixMabState::new(arms, gamma, 5, 100);
        let mut e = Exp3State::new(arms, gamma);
        for (t, r) in rewards(&warmup).enumerate() {
            s.update(t % arms, r).unwrap();
            e.update(t % arms, r).unwrap();
        }
        let k = k % arms;
        let (ws, we) = (s.log_weights[k].to_bits(), e.log_weights[k].to_bits());
        s.update(k, Reward::Nack).unwrap();
        e.update(k, Reward::Nack).unwrap();
        prop_assert_eq!(s.log_weights[k].to_bits(), ws);
        prop_assert_eq!(e.log_weights[k].to_bits(), we);
    }

    #[test]
    fn never_eliminated_during_first_plays(
        arms in 2usize..8,
        gamma in 0.0f64..=1.0,
        plays in prop::collection::vec((0usize..8, any::<bool>()), 1..200),
    ) {
        let l_exp = 5;
        let mut s = MixMabState::new(arms, gamma, l_exp, 1_000_000);
        for (k, hit) in plays {
            let k = k % arms;
            let report = s.update(k, Reward::from_ack(hit)).unwrap();
            if s.counts[k] <= l_exp {
                prop_assert!(!report.eliminated);
            }
        }
    }

    #[test]
    fn same_seed_and_rewards_give_same_actions(
        kind in prop::sample::select(PolicyKind::ALL.to_vec()),
        seed in any::<u64>(),
        bits in prop::collection::vec(any::<bool>(), 1..300),
    ) {
        let params = LearnerParams { gamma: 0.2, l_exp: 5, l_ee: 100 };
        let play = || {
            let mut p = DevicePolicy::new(kind, 6, &params);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rewards(&bits)
                .map(|r| {
                    let k = p.select(&mut rng);
                    p.update(k, r).unwrap();
                    k
                })
                .collect::<Vec<_>>()
        };
        prop_assert_eq!(play(), play());
    }

    #[test]
    fn learning_rate_is_a_rate(arms in 1usize..100, horizon in 1u64..10_000_000) {
        let g = learning_rate(arms, horizon, DEFAULT_EULER_APPROX).unwrap();
        prop_assert!((0.0..=1.0).contains(&g));
    }
}
