mod common;

use lorabandit::bandit::ActionConfig;
use lorabandit::phy::{
    decode_mask, energy_per_packet_mj, resolve_reception, time_on_air, LinkTables, RadioConfig,
    Transmission,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn airtime_matches_integer_reference() {
    for cr in 1..=4u8 {
        let cfg = RadioConfig {
            coding_rate: cr,
            ..RadioConfig::default()
        };
        for sf in 7..=12u8 {
            for payload in 1..=255u32 {
                let got = time_on_air(sf, payload, &cfg).unwrap();
                let want = common::reference_airtime_ms(
                    u32::from(sf),
                    payload,
                    125_000,
                    u32::from(cr),
                    8,
                    true,
                    true,
                );
                assert!(
                    (got - want).abs() < 1e-6,
                    "sf {sf} pl {payload} cr {cr}: {got} vs {want}"
                );
            }
        }
    }
}

#[test]
fn implicit_header_without_crc_matches_reference() {
    let cfg = RadioConfig {
        explicit_header: false,
        crc_on: false,
        ..RadioConfig::default()
    };
    for sf in 7..=12u8 {
        for payload in [1, 2, 9, 50, 255] {
            let got = time_on_air(sf, payload, &cfg).unwrap();
            let want =
                common::reference_airtime_ms(u32::from(sf), payload, 125_000, 1, 8, false, false);
            assert!((got - want).abs() < 1e-6);
        }
    }
}

#[test]
fn resolve_matches_brute_force_on_random_groups() {
    let tables = LinkTables::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..10_000 {
        let group = common::random_group(&mut rng, 1 + i % 4);
        let expected = common::brute_force_decode(&group, &tables);
        assert_eq!(decode_mask(&group, &tables), expected, "{group:?}");
        let ids = resolve_reception(&group, &tables);
        for (tx, ok) in group.iter().zip(&expected) {
            assert_eq!(ids.contains(&tx.device_id), *ok);
        }
    }
}

fn tx_strategy() -> impl Strategy<Value = Transmission> {
    (7u8..=12, 0usize..3, 0u32..8, 1u32..8, -145.0f64..-90.0).prop_map(
        |(sf, ch, start, len, power)| Transmission {
            device_id: 0,
            action: ActionConfig {
                sf,
                channel_hz: common::CHANNELS[ch],
                tp_dbm: 14,
            },
            start_ms: f64::from(start) * 40.0,
            airtime_ms: f64::from(len) * 40.0,
            rx_power_dbm: power,
            payload_bytes: 50,
        },
    )
}

fn numbered(mut group: Vec<Transmission>) -> Vec<Transmission> {
    for (i, tx) in group.iter_mut().enumerate() {
        tx.device_id = i as u32;
    }
    group
}

proptest! {
    #[test]
    fn adding_an_interferer_never_helps(
        group in prop::collection::vec(tx_strategy(), 1..6),
        extra in tx_strategy(),
    ) {
        let tables = LinkTables::default();
        let group = numbered(group);
        let before = decode_mask(&group, &tables);
        let mut bigger = group.clone();
        bigger.push(extra);
        let after = decode_mask(&numbered(bigger), &tables);
        for (b, a) in before.iter().zip(&after) {
            prop_assert!(!a || *b);
        }
    }

    #[test]
    fn other_channels_do_not_matter(
        group in prop::collection::vec(tx_strategy(), 1..6),
    ) {
        let tables = LinkTables::default();
        let group = numbered(group);
        let full = decode_mask(&group, &tables);
        for (i, tx) in group.iter().enumerate() {
            let same: Vec<Transmission> = group
                .iter()
                .filter(|o| o.action.channel_hz == tx.action.channel_hz)
                .cloned()
                .collect();
            let pos = same.iter().position(|o| o.device_id == tx.device_id).unwrap();
            prop_assert_eq!(decode_mask(&same, &tables)[pos], full[i]);
        }
    }

    #[test]
    fn brute_force_agrees_on_small_groups(group in prop::collection::vec(tx_strategy(), 1..=4)) {
        let tables = LinkTables::default();
        prop_assert_eq!(decode_mask(&group, &tables), common::brute_force_decode(&group, &tables));
    }

    #[test]
    fn energy_increases_with_power_and_airtime(
        tp in -4.0f64..20.0, dtp in 0.01f64..5.0,
        airtime in 1.0f64..3000.0, dair in 0.01f64..100.0,
    ) {
        let e = energy_per_packet_mj(tp, airtime);
        prop_assert!(energy_per_packet_mj(tp + dtp, airtime) > e);
        prop_assert!(energy_per_packet_mj(tp, airtime + dair) > e);
    }

    #[test]
    fn airtime_monotone_in_sf_and_payload(sf in 7u8..12, payload in 1u32..255) {
        let cfg = RadioConfig::default();
        let t = time_on_air(sf, payload, &cfg).unwrap();
        prop_assert!(time_on_air(sf + 1, payload, &cfg).unwrap() >= t);
        prop_assert!(time_on_air(sf, payload + 1, &cfg).unwrap() >= t);
    }
}
