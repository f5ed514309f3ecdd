//! LoRa physical-layer math: airtime, propagation, link budget, energy and
//! collision/capture resolution. Everything here is pure.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bandit::{ActionConfig, MAX_SF, MIN_SF};
use crate::error::ConfigError;

const SF_COUNT: usize = (MAX_SF - MIN_SF + 1) as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LowDataRateOptimize {
    /// On whenever the symbol time reaches 16 ms.
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub bandwidth_hz: u32,
    /// Coding rate 4/(4 + n).
    pub coding_rate: u8,
    pub preamble_symbols: u16,
    pub explicit_header: bool,
    pub crc_on: bool,
    pub low_data_rate_optimize: LowDataRateOptimize,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            bandwidth_hz: 125_000,
            coding_rate: 1,
            preamble_symbols: 8,
            explicit_header: true,
            crc_on: true,
            low_data_rate_optimize: LowDataRateOptimize::Auto,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if ![125_000, 250_000, 500_000].contains(&self.bandwidth_hz) {
            return Err(ConfigError::invalid(
                "radio.bandwidth_hz",
                "must be 125000, 250000 or 500000",
            ));
        }
        if !(1..=4).contains(&self.coding_rate) {
            return Err(ConfigError::invalid(
                "radio.coding_rate",
                "must be in 1..=4",
            ));
        }
        Ok(())
    }

    pub fn symbol_time_ms(&self, sf: u8) -> f64 {
        (1u64 << sf) as f64 / self.bandwidth_hz as f64 * 1000.0
    }

    fn ldro(&self, sf: u8) -> bool {
        match self.low_data_rate_optimize {
            LowDataRateOptimize::On => true,
            LowDataRateOptimize::Off => false,
            LowDataRateOptimize::Auto => self.symbol_time_ms(sf) >= 16.0,
        }
    }
}

fn check_sf(sf: u8) -> Result<(), ConfigError> {
    if (MIN_SF..=MAX_SF).contains(&sf) {
        Ok(())
    } else {
        Err(ConfigError::invalid(
            "sf",
            format!("spreading factor {sf} outside {MIN_SF}..={MAX_SF}"),
        ))
    }
}

/// Frame duration in milliseconds for `payload_bytes` of application payload.
pub fn time_on_air(sf: u8, payload_bytes: u32, cfg: &RadioConfig) -> Result<f64, ConfigError> {
    check_sf(sf)?;
    let t_sym = cfg.symbol_time_ms(sf);
    let de = i64::from(cfg.ldro(sf));
    let ih = i64::from(!cfg.explicit_header);
    let crc = i64::from(cfg.crc_on);
    let sf_i = i64::from(sf);

    let numerator = 8 * i64::from(payload_bytes) - 4 * sf_i + 28 + 16 * crc - 20 * ih;
    let denominator = 4 * (sf_i - 2 * de);
    let blocks = if numerator > 0 {
        (numerator + denominator - 1) / denominator
    } else {
        0
    };
    let payload_symbols = 8 + blocks * (i64::from(cfg.coding_rate) + 4);
    let preamble = f64::from(cfg.preamble_symbols) + 4.25;
    Ok((preamble + payload_symbols as f64) * t_sym)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLossModel {
    pub reference_distance_m: f64,
    pub loss_at_reference_db: f64,
    pub exponent: f64,
    /// Standard deviation of log-normal shadowing; 0 disables it.
    pub shadowing_sigma_db: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        PathLossModel {
            reference_distance_m: 40.0,
            loss_at_reference_db: 127.41,
            exponent: 2.08,
            shadowing_sigma_db: 0.0,
        }
    }
}

impl PathLossModel {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.reference_distance_m.is_nan() || self.reference_distance_m <= 0.0 {
            return Err(ConfigError::invalid(
                "path_loss.reference_distance_m",
                "must be positive",
            ));
        }
        if self.exponent.is_nan() || self.exponent <= 0.0 {
            return Err(ConfigError::invalid(
                "path_loss.exponent",
                "must be positive",
            ));
        }
        if self.shadowing_sigma_db.is_nan() || self.shadowing_sigma_db < 0.0 {
            return Err(ConfigError::invalid(
                "path_loss.shadowing_sigma_db",
                "must be non-negative",
            ));
        }
        if !self.loss_at_reference_db.is_finite() {
            return Err(ConfigError::invalid(
                "path_loss.loss_at_reference_db",
                "must be finite",
            ));
        }
        Ok(())
    }

    /// Deterministic part of the loss. Distances inside the reference
    /// distance are clamped to it.
    pub fn mean_loss_db(&self, distance_m: f64) -> f64 {
        let d = distance_m.max(self.reference_distance_m);
        self.loss_at_reference_db + 10.0 * self.exponent * (d / self.reference_distance_m).log10()
    }
}

/// Log-distance path loss with optional log-normal shadowing drawn from `rng`.
/// No randomness is consumed when shadowing is disabled.
pub fn path_loss_db<R: Rng + ?Sized>(distance_m: f64, model: &PathLossModel, rng: &mut R) -> f64 {
    let mean = model.mean_loss_db(distance_m);
    if model.shadowing_sigma_db > 0.0 {
        let normal = Normal::new(0.0, model.shadowing_sigma_db)
            .expect("sigma validated as finite and positive");
        mean + normal.sample(rng)
    } else {
        mean
    }
}

/// Antenna gains are folded into the loss model.
pub fn received_power_dbm(tp_dbm: f64, loss_db: f64) -> f64 {
    tp_dbm - loss_db
}

/// Radiated energy of one frame in millijoules.
pub fn energy_per_packet_mj(tp_dbm: f64, airtime_ms: f64) -> f64 {
    10f64.powf(tp_dbm / 10.0) * airtime_ms / 1000.0
}

/// Receiver sensitivity and interference thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkTables {
    /// Indexed by `sf - 7`.
    pub sensitivity_dbm: [f64; SF_COUNT],
    /// Margin a frame needs over a same-SF interferer to be captured.
    pub co_sf_capture_db: f64,
    /// `[desired - 7][interferer - 7]`: required margin over a different-SF
    /// interferer. Negative values tolerate a stronger interferer. The
    /// diagonal is unused.
    pub inter_sf_threshold_db: [[f64; SF_COUNT]; SF_COUNT],
}

impl Default for LinkTables {
    fn default() -> Self {
        let mut inter = [[-8.0; SF_COUNT]; SF_COUNT];
        for (i, row) in inter.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        LinkTables {
            sensitivity_dbm: [-123.0, -126.0, -129.0, -132.0, -134.5, -137.0],
            co_sf_capture_db: 6.0,
            inter_sf_threshold_db: inter,
        }
    }
}

impl LinkTables {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self
            .sensitivity_dbm
            .windows(2)
            .any(|w| w[1].is_nan() || w[1] >= w[0])
        {
            return Err(ConfigError::invalid(
                "link.sensitivity_dbm",
                "must strictly decrease as the spreading factor rises",
            ));
        }
        if self.co_sf_capture_db.is_nan() || self.co_sf_capture_db <= 0.0 {
            return Err(ConfigError::invalid(
                "link.co_sf_capture_db",
                "must be positive",
            ));
        }
        if self
            .inter_sf_threshold_db
            .iter()
            .flatten()
            .any(|v| !v.is_finite())
        {
            return Err(ConfigError::invalid(
                "link.inter_sf_threshold_db",
                "entries must be finite",
            ));
        }
        Ok(())
    }

    pub fn sensitivity(&self, sf: u8) -> f64 {
        self.sensitivity_dbm[usize::from(sf - MIN_SF)]
    }

    pub fn inter_sf_threshold(&self, desired_sf: u8, interferer_sf: u8) -> f64 {
        self.inter_sf_threshold_db[usize::from(desired_sf - MIN_SF)]
            [usize::from(interferer_sf - MIN_SF)]
    }
}

/// One uplink attempt as seen by the gateway.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub device_id: u32,
    pub action: ActionConfig,
    pub start_ms: f64,
    pub airtime_ms: f64,
    pub rx_power_dbm: f64,
    pub payload_bytes: u32,
}

impl Transmission {
    pub fn end_ms(&self) -> f64 {
        self.start_ms + self.airtime_ms
    }

    /// Positive-length intersection of the half-open on-air intervals.
    pub fn overlaps(&self, other: &Transmission) -> bool {
        self.start_ms < other.end_ms() && other.start_ms < self.end_ms()
    }
}

/// Per-transmission decode outcome, aligned with `group`.
///
/// Frames on different channels never interact. Within a channel a frame
/// survives if it clears sensitivity and, against every time-overlapping
/// frame, meets the co-SF capture margin or the inter-SF threshold.
pub fn decode_mask(group: &[Transmission], tables: &LinkTables) -> Vec<bool> {
    let mut by_channel: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, tx) in group.iter().enumerate() {
        by_channel.entry(tx.action.channel_hz).or_default().push(i);
    }

    let mut decoded = vec![false; group.len()];
    for members in by_channel.values() {
        for &i in members {
            let tx = &group[i];
            if tx.rx_power_dbm < tables.sensitivity(tx.action.sf) {
                continue;
            }
            // strongest overlapping interferer per spreading factor
            let mut strongest = [f64::NEG_INFINITY; SF_COUNT];
            for &j in members {
                if j != i && tx.overlaps(&group[j]) {
                    let slot = &mut strongest[usize::from(group[j].action.sf - MIN_SF)];
                    *slot = slot.max(group[j].rx_power_dbm);
                }
            }
            decoded[i] = strongest.iter().enumerate().all(|(s, &power)| {
                if power == f64::NEG_INFINITY {
                    return true;
                }
                let interferer_sf = s as u8 + MIN_SF;
                let margin = if interferer_sf == tx.action.sf {
                    tables.co_sf_capture_db
                } else {
                    tables.inter_sf_threshold(tx.action.sf, interferer_sf)
                };
                tx.rx_power_dbm >= power + margin
            });
        }
    }
    decoded
}

/// Device ids of the frames in `overlapping` that the gateway decodes.
pub fn resolve_reception(overlapping: &[Transmission], tables: &LinkTables) -> BTreeSet<u32> {
    decode_mask(overlapping, tables)
        .into_iter()
        .zip(overlapping)
        .filter_map(|(ok, tx)| ok.then_some(tx.device_id))
        .collect()
}
