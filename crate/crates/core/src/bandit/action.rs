use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

pub const MIN_SF: u8 = 7;
pub const MAX_SF: u8 = 12;

const MIN_CHANNEL_HZ: u32 = 137_000_000;
const MAX_CHANNEL_HZ: u32 = 1_020_000_000;
const MIN_TP_DBM: i8 = -4;
const MAX_TP_DBM: i8 = 20;

/// One transmission-parameter vector: spreading factor, sub-channel, power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionConfig {
    pub sf: u8,
    pub channel_hz: u32,
    pub tp_dbm: i8,
}

/// The enumerated set of actions a device chooses from, in SF-major, then
/// channel, then power order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSpace {
    actions: Vec<ActionConfig>,
}

impl ActionSpace {
    /// Cartesian product of the three parameter sets. Inputs are treated as
    /// sets: duplicates are dropped and each axis is sorted ascending.
    pub fn new(sfs: &[u8], channels_hz: &[u32], tps_dbm: &[i8]) -> Result<Self, ConfigError> {
        let sfs = sorted_set(sfs, "scenario.sfs")?;
        let channels = sorted_set(channels_hz, "scenario.channels_hz")?;
        let tps = sorted_set(tps_dbm, "scenario.tps_dbm")?;

        if let Some(sf) = sfs.iter().find(|sf| !(MIN_SF..=MAX_SF).contains(*sf)) {
            return Err(ConfigError::invalid(
                "scenario.sfs",
                format!("spreading factor {sf} outside {MIN_SF}..={MAX_SF}"),
            ));
        }
        if let Some(ch) = channels
            .iter()
            .find(|ch| !(MIN_CHANNEL_HZ..=MAX_CHANNEL_HZ).contains(*ch))
        {
            return Err(ConfigError::invalid(
                "scenario.channels_hz",
                format!("carrier {ch} Hz outside {MIN_CHANNEL_HZ}..={MAX_CHANNEL_HZ}"),
            ));
        }
        if let Some(tp) = tps
            .iter()
            .find(|tp| !(MIN_TP_DBM..=MAX_TP_DBM).contains(*tp))
        {
            return Err(ConfigError::invalid(
                "scenario.tps_dbm",
                format!("transmit power {tp} dBm outside {MIN_TP_DBM}..={MAX_TP_DBM}"),
            ));
        }

        let mut actions = Vec::with_capacity(sfs.len() * channels.len() * tps.len());
        for &sf in &sfs {
            for &channel_hz in &channels {
                for &tp_dbm in &tps {
                    actions.push(ActionConfig {
                        sf,
                        channel_hz,
                        tp_dbm,
                    });
                }
            }
        }
        Ok(ActionSpace { actions })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&ActionConfig> {
        self.actions.get(index)
    }

    pub fn actions(&self) -> &[ActionConfig] {
        &self.actions
    }

    pub fn iter(&self) -> impl Iterator<Item = &ActionConfig> {
        self.actions.iter()
    }

    pub fn channels(&self) -> Vec<u32> {
        let mut out: Vec<u32> = self.actions.iter().map(|a| a.channel_hz).collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

impl std::ops::Index<usize> for ActionSpace {
    type Output = ActionConfig;

    fn index(&self, index: usize) -> &ActionConfig {
        &self.actions[index]
    }
}

fn sorted_set<T: Ord + Copy>(values: &[T], field: &str) -> Result<Vec<T>, ConfigError> {
    if values.is_empty() {
        return Err(ConfigError::invalid(field, "must not be empty"));
    }
    let mut out = values.to_vec();
    out.sort_unstable();
    out.dedup();
    Ok(out)
}
