//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use lorabandit::bandit::{ActionConfig, MixMabState, Reward};
use lorabandit::phy::{LinkTables, Transmission};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Airtime in ms computed with exact integer arithmetic: the frame lasts
/// `(4*preamble + 17 + 4*payload_symbols) * 2^sf / (4 * bw)` seconds.
pub fn reference_airtime_ms(
    sf: u32,
    payload: u32,
    bw_hz: u64,
    cr: u32,
    preamble: u32,
    explicit_header: bool,
    crc: bool,
) -> f64 {
    // datasheet rule at 125 kHz: low data rate optimisation for SF11 and SF12
    let de = u32::from(bw_hz == 125_000 && sf >= 11);
    let header_bits = if explicit_header { 0 } else { 20 };
    let bits = (8 * payload + 28 + if crc { 16 } else { 0 }) as i64 - (4 * sf) as i64 - header_bits;
    let per_block = (4 * (sf - 2 * de)) as i64;
    let mut blocks = 0i64;
    while blocks * per_block < bits {
        blocks += 1;
    }
    let payload_symbols = 8 + blocks as u64 * u64::from(cr + 4);
    let quarter_symbols = 4 * u64::from(preamble) + 17 + 4 * payload_symbols;
    let numerator = quarter_symbols * (1u64 << sf) * 1000;
    numerator as f64 / (4 * bw_hz) as f64
}

/// Decode outcome per transmission using the pairwise rules directly: a
/// frame survives iff it clears sensitivity and clears every other frame
/// that shares its channel and overlaps it in time.
pub fn brute_force_decode(group: &[Transmission], tables: &LinkTables) -> Vec<bool> {
    let sens = |sf: u8| tables.sensitivity_dbm[(sf - 7) as usize];
    group
        .iter()
        .enumerate()
        .map(|(i, a)| {
            if a.rx_power_dbm < sens(a.action.sf) {
                return false;
            }
            group.iter().enumerate().all(|(j, b)| {
                if i == j || a.action.channel_hz != b.action.channel_hz {
                    return true;
                }
                let overlap = a.start_ms < b.start_ms + b.airtime_ms
                    && b.start_ms < a.start_ms + a.airtime_ms;
                if !overlap {
                    return true;
                }
                let margin = if a.action.sf == b.action.sf {
                    tables.co_sf_capture_db
                } else {
                    tables.inter_sf_threshold_db[(a.action.sf - 7) as usize]
                        [(b.action.sf - 7) as usize]
                };
                a.rx_power_dbm - b.rx_power_dbm >= margin
            })
        })
        .collect()
}

pub const CHANNELS: [u32; 3] = [868_100_000, 868_300_000, 868_500_000];

/// Random group of `n` transmissions drawn on a coarse grid so that ties and
/// exact threshold boundaries occur often.
pub fn random_group(rng: &mut ChaCha8Rng, n: usize) -> Vec<Transmission> {
    (0..n)
        .map(|i| {
            let sf = rng.random_range(7..=12u8);
            Transmission {
                device_id: i as u32,
                action: ActionConfig {
                    sf,
                    channel_hz: CHANNELS[rng.random_range(0..2)],
                    tp_dbm: 14,
                },
                start_ms: f64::from(rng.random_range(0..8u32)) * 50.0,
                airtime_ms: f64::from(rng.random_range(1..8u32)) * 50.0,
                rx_power_dbm: -140.0 + f64::from(rng.random_range(0..40u32)),
                payload_bytes: 50,
            }
        })
        .collect()
}

/// Stationary Bernoulli bandit; returns the arms chosen in the last
/// `tail` of `pulls` iterations.
pub fn bernoulli_run(
    success: &[f64],
    gamma: f64,
    pulls: usize,
    tail: usize,
    seed: u64,
) -> Vec<usize> {
    let mut policy_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut state = MixMabState::new(success.len(), gamma, 5, 100);
    let mut chosen = Vec::with_capacity(tail);
    for t in 0..pulls {
        let k = state.select(&mut policy_rng);
        let hit = env_rng.random::<f64>() < success[k];
        state.update(k, Reward::from_ack(hit)).unwrap();
        if t >= pulls - tail {
            chosen.push(k);
        }
    }
    chosen
}
