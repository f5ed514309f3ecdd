use rand::Rng;

use super::ActionSpace;

/// Uniform choice over the whole action space; keeps no state.
pub fn legacy_random_select<R: Rng + ?Sized>(space: &ActionSpace, rng: &mut R) -> usize {
    uniform_index(space.len(), rng)
}

pub(crate) fn uniform_index<R: Rng + ?Sized>(arms: usize, rng: &mut R) -> usize {
    if arms <= 1 {
        0
    } else {
        rng.random_range(0..arms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_action_always_zero() {
        let space = ActionSpace::new(&[7], &[868_100_000], &[14]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..100).all(|_| legacy_random_select(&space, &mut rng) == 0));
    }

    #[test]
    fn uniform_over_six() {
        let space = ActionSpace::new(&[7, 8, 9, 10, 11, 12], &[868_100_000], &[14]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut hits = [0usize; 6];
        let draws = 60_000;
        for _ in 0..draws {
            hits[legacy_random_select(&space, &mut rng)] += 1;
        }
        for h in hits {
            let freq = h as f64 / draws as f64;
            assert!((freq - 1.0 / 6.0).abs() < 0.01, "{freq}");
        }
    }
}
