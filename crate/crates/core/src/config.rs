//! Experiment description, scenario presets and the configuration file format.
//!
//! Configuration files are TOML restricted to flat `key = value` lines under
//! section headers:
//!
//! ```toml
//! seed = 7
//!
//! [network]
//! devices = 30
//! radius_m = 1000.0
//!
//! [scenario]
//! preset = 1
//!
//! [traffic]
//! rate_per_hour = 15.0
//! horizon_ms = 7200000000.0
//!
//! [policy]
//! kind = "mixmab"
//! ```
//!
//! Every section other than `[scenario]` may be omitted; unknown keys are
//! rejected. A scenario is either a `preset` (1 to 5) or the three explicit
//! sets `sfs`, `channels_hz` and `tps_dbm`.

use serde::{Deserialize, Serialize};

use crate::bandit::{
    learning_rate, ActionSpace, LearnerParams, PolicyKind, DEFAULT_EULER_APPROX, DEFAULT_L_EE,
    DEFAULT_L_EXP,
};
use crate::error::ConfigError;
use crate::phy::{LinkTables, PathLossModel, RadioConfig};

pub const HOUR_MS: f64 = 3_600_000.0;

const ALL_SF: [u8; 6] = [7, 8, 9, 10, 11, 12];
const BASE_CHANNEL_HZ: u32 = 868_100_000;
const ALL_CHANNELS_HZ: [u32; 3] = [868_100_000, 868_300_000, 868_500_000];
const MAX_TP_DBM: i8 = 14;
const ALL_TPS_DBM: [i8; 3] = [8, 11, 14];

/// Parameter freedom of one of the five reference scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPreset {
    pub id: u8,
    pub sfs: Vec<u8>,
    pub channels_hz: Vec<u32>,
    pub tps_dbm: Vec<i8>,
    /// Packet rates (per hour) the scenario is evaluated at.
    pub rates_per_hour: Vec<f64>,
}

impl ScenarioPreset {
    pub fn get(id: u8) -> Result<Self, ConfigError> {
        let (channels, tps): (&[u32], &[i8]) = match id {
            1 => (&[BASE_CHANNEL_HZ], &[MAX_TP_DBM]),
            2 => (&ALL_CHANNELS_HZ, &[MAX_TP_DBM]),
            3 => (&[BASE_CHANNEL_HZ], &ALL_TPS_DBM),
            4 | 5 => (&ALL_CHANNELS_HZ, &ALL_TPS_DBM),
            _ => {
                return Err(ConfigError::invalid(
                    "scenario.preset",
                    format!("unknown scenario {id} (expected 1 to 5)"),
                ))
            }
        };
        let rates_per_hour = if id == 5 {
            vec![1.0, 1.0 / 24.0, 1.0 / 168.0]
        } else {
            vec![15.0]
        };
        Ok(ScenarioPreset {
            id,
            sfs: ALL_SF.to_vec(),
            channels_hz: channels.to_vec(),
            tps_dbm: tps.to_vec(),
            rates_per_hour,
        })
    }

    pub fn action_space(&self) -> ActionSpace {
        ActionSpace::new(&self.sfs, &self.channels_hz, &self.tps_dbm)
            .expect("preset sets are valid")
    }
}

/// Parse a packet rate such as `15`, `15ph`, `1pd` or `1pw` into packets per
/// hour.
pub fn parse_rate(text: &str) -> Result<f64, ConfigError> {
    let t = text.trim().to_ascii_lowercase();
    let (number, per_hours) = if let Some(n) = t.strip_suffix("ph") {
        (n, 1.0)
    } else if let Some(n) = t.strip_suffix("pd") {
        (n, 24.0)
    } else if let Some(n) = t.strip_suffix("pw") {
        (n, 168.0)
    } else {
        (t.as_str(), 1.0)
    };
    let value: f64 = number
        .parse()
        .map_err(|_| ConfigError::invalid("rate", format!("cannot parse `{text}`")))?;
    if !(value > 0.0 && value.is_finite()) {
        return Err(ConfigError::invalid(
            "rate",
            format!("`{text}` must be positive"),
        ));
    }
    Ok(value / per_hours)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub devices: u32,
    /// Gateway sits at the origin of a disc of this radius.
    pub radius_m: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            devices: 30,
            radius_m: 1000.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<u8>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sfs: Vec<u8>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub channels_hz: Vec<u32>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub tps_dbm: Vec<i8>,
}

impl ScenarioConfig {
    pub fn preset(id: u8) -> Self {
        ScenarioConfig {
            preset: Some(id),
            ..Default::default()
        }
    }

    fn resolve(&mut self) -> Result<(), ConfigError> {
        match self.preset {
            Some(id) => {
                let p = ScenarioPreset::get(id)?;
                let conflicts = (!self.sfs.is_empty() && self.sfs != p.sfs)
                    || (!self.channels_hz.is_empty() && self.channels_hz != p.channels_hz)
                    || (!self.tps_dbm.is_empty() && self.tps_dbm != p.tps_dbm);
                if conflicts {
                    return Err(ConfigError::invalid(
                        "scenario",
                        format!("explicit parameter sets conflict with preset {id}"),
                    ));
                }
                self.sfs = p.sfs;
                self.channels_hz = p.channels_hz;
                self.tps_dbm = p.tps_dbm;
            }
            None => {
                if self.sfs.is_empty() && self.channels_hz.is_empty() && self.tps_dbm.is_empty() {
                    return Err(ConfigError::invalid(
                        "scenario",
                        "missing: give `preset` or `sfs`, `channels_hz` and `tps_dbm`",
                    ));
                }
            }
        }
        ActionSpace::new(&self.sfs, &self.channels_hz, &self.tps_dbm).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrivalProcess {
    /// Poisson arrivals: exponential inter-arrival times.
    Exponential,
    /// Arrivals at every multiple of the mean inter-arrival time, identical
    /// across devices. Useful for forcing collisions in tests.
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    pub rate_per_hour: f64,
    pub payload_bytes: u32,
    pub horizon_ms: f64,
    pub arrivals: ArrivalProcess,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            rate_per_hour: 15.0,
            payload_bytes: 50,
            horizon_ms: 2000.0 * HOUR_MS,
            arrivals: ArrivalProcess::Exponential,
        }
    }
}

impl TrafficConfig {
    pub fn horizon_hours(&self) -> f64 {
        self.horizon_ms / HOUR_MS
    }

    /// Expected arrivals per device over the horizon, rounded up.
    pub fn expected_arrivals(&self) -> u64 {
        (self.rate_per_hour * self.horizon_hours()).ceil().max(1.0) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacConfig {
    pub duty_cycle: f64,
}

impl Default for MacConfig {
    fn default() -> Self {
        MacConfig { duty_cycle: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub l_exp: u64,
    pub l_ee: u64,
    /// Fixed learning rate. When absent it is derived from the action count
    /// and the expected number of arrivals per device.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub euler_constant: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            kind: PolicyKind::MixMab,
            l_exp: DEFAULT_L_EXP,
            l_ee: DEFAULT_L_EE,
            gamma: None,
            euler_constant: DEFAULT_EULER_APPROX,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Defaults to 1/100 of the horizon.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bucket_ms: Option<f64>,
    /// Defaults to 1e-4 per bucket.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope_epsilon: Option<f64>,
    /// Defaults to 10% of the bucket count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_buckets: Option<usize>,
}

/// Full description of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub network: NetworkConfig,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub traffic: TrafficConfig,
    #[serde(default)]
    pub mac: MacConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub radio: RadioConfig,
    #[serde(default)]
    pub path_loss: PathLossModel,
    #[serde(default)]
    pub link: LinkTables,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

fn default_seed() -> u64 {
    42
}

const MAX_BUCKETS: f64 = 1_000_000.0;

impl SimConfig {
    /// Desk-scale defaults for a scenario preset: 30 devices in a 1 km disc,
    /// 15 packets per hour, 2000 simulated hours. Scenario 5 starts from its
    /// first rate variant, one packet per hour.
    pub fn desk(preset: u8) -> Result<Self, ConfigError> {
        let rate = ScenarioPreset::get(preset)?.rates_per_hour[0];
        SimConfig {
            seed: default_seed(),
            network: NetworkConfig::default(),
            scenario: ScenarioConfig::preset(preset),
            traffic: TrafficConfig {
                rate_per_hour: rate,
                ..TrafficConfig::default()
            },
            mac: MacConfig::default(),
            policy: PolicyConfig::default(),
            radio: RadioConfig::default(),
            path_loss: PathLossModel::default(),
            link: LinkTables::default(),
            metrics: MetricsConfig::default(),
        }
        .resolved()
    }

    /// Full-size deployment: 100 devices in a 4.5 km disc over 200 000 hours.
    pub fn long_run(preset: u8) -> Result<Self, ConfigError> {
        let mut cfg = SimConfig::desk(preset)?;
        cfg.network = NetworkConfig {
            devices: 100,
            radius_m: 4500.0,
        };
        cfg.traffic.horizon_ms = 200_000.0 * HOUR_MS;
        cfg.metrics = MetricsConfig::default();
        cfg.resolved()
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: SimConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        raw.resolved()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration is always representable as TOML")
    }

    /// Validate and fill every derived default.
    pub fn resolved(mut self) -> Result<Self, ConfigError> {
        self.scenario.resolve()?;

        if self.network.devices == 0 {
            return Err(ConfigError::invalid(
                "network.devices",
                "must be at least 1",
            ));
        }
        if !(self.network.radius_m >= 0.0 && self.network.radius_m.is_finite()) {
            return Err(ConfigError::invalid(
                "network.radius_m",
                "must be finite and non-negative",
            ));
        }
        let t = &self.traffic;
        if !(t.rate_per_hour > 0.0 && t.rate_per_hour.is_finite()) {
            return Err(ConfigError::invalid(
                "traffic.rate_per_hour",
                "must be positive",
            ));
        }
        if !(1..=255).contains(&t.payload_bytes) {
            return Err(ConfigError::invalid(
                "traffic.payload_bytes",
                "must be in 1..=255",
            ));
        }
        if !(t.horizon_ms > 0.0 && t.horizon_ms.is_finite()) {
            return Err(ConfigError::invalid(
                "traffic.horizon_ms",
                "must be positive",
            ));
        }
        if !(self.mac.duty_cycle > 0.0 && self.mac.duty_cycle <= 1.0) {
            return Err(ConfigError::invalid(
                "mac.duty_cycle",
                "duty cycle must be in (0,1]",
            ));
        }
        let p = &self.policy;
        if p.l_ee == 0 {
            return Err(ConfigError::invalid("policy.l_ee", "must be at least 1"));
        }
        if let Some(g) = p.gamma {
            if !(0.0..=1.0).contains(&g) {
                return Err(ConfigError::invalid("policy.gamma", "must be in [0,1]"));
            }
        }
        if !(p.euler_constant > 1.0 && p.euler_constant.is_finite()) {
            return Err(ConfigError::invalid(
                "policy.euler_constant",
                "must be finite and greater than 1",
            ));
        }
        self.radio.validate()?;
        self.path_loss.validate()?;
        self.link.validate()?;

        let horizon = self.traffic.horizon_ms;
        let bucket = *self.metrics.bucket_ms.get_or_insert(horizon / 100.0);
        if !(bucket > 0.0 && bucket.is_finite()) || horizon / bucket > MAX_BUCKETS {
            return Err(ConfigError::invalid(
                "metrics.bucket_ms",
                "must be positive and yield at most 1e6 buckets",
            ));
        }
        let eps = *self.metrics.slope_epsilon.get_or_insert(1e-4);
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(ConfigError::invalid(
                "metrics.slope_epsilon",
                "must be non-negative",
            ));
        }
        let buckets = self.buckets();
        let window = *self
            .metrics
            .window_buckets
            .get_or_insert(((buckets as f64 * 0.1).round() as usize).max(1));
        if window == 0 {
            return Err(ConfigError::invalid(
                "metrics.window_buckets",
                "must be at least 1",
            ));
        }
        Ok(self)
    }

    pub fn action_space(&self) -> Result<ActionSpace, ConfigError> {
        let s = &self.scenario;
        ActionSpace::new(&s.sfs, &s.channels_hz, &s.tps_dbm)
    }

    pub fn learner_params(&self) -> Result<LearnerParams, ConfigError> {
        let arms = self.action_space()?.len();
        let gamma = match self.policy.gamma {
            Some(g) => g,
            None => learning_rate(
                arms,
                self.traffic.expected_arrivals(),
                self.policy.euler_constant,
            )?,
        };
        Ok(LearnerParams {
            gamma,
            l_exp: self.policy.l_exp,
            l_ee: self.policy.l_ee,
        })
    }

    pub fn bucket_ms(&self) -> f64 {
        self.metrics
            .bucket_ms
            .unwrap_or(self.traffic.horizon_ms / 100.0)
    }

    pub fn buckets(&self) -> usize {
        (self.traffic.horizon_ms / self.bucket_ms()).ceil().max(1.0) as usize
    }

    pub fn slope_epsilon(&self) -> f64 {
        self.metrics.slope_epsilon.unwrap_or(1e-4)
    }

    pub fn window_buckets(&self) -> usize {
        self.metrics
            .window_buckets
            .unwrap_or_else(|| ((self.buckets() as f64 * 0.1).round() as usize).max(1))
    }
}

/// Command-line style overrides applied on top of a file or preset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub scenario: Option<u8>,
    pub policy: Option<PolicyKind>,
    pub seed: Option<u64>,
    pub devices: Option<u32>,
    pub radius_m: Option<f64>,
    pub horizon_hours: Option<f64>,
    pub rate_per_hour: Option<f64>,
    pub payload_bytes: Option<u32>,
    pub duty_cycle: Option<f64>,
    pub l_exp: Option<u64>,
    pub l_ee: Option<u64>,
    pub gamma: Option<f64>,
    pub shadowing_sigma_db: Option<f64>,
}

impl Overrides {
    /// Apply to `base` (a parsed file), or to the desk defaults when there is
    /// no file, in which case a scenario is mandatory.
    pub fn apply(&self, base: Option<SimConfig>) -> Result<SimConfig, ConfigError> {
        let mut cfg = match (base, self.scenario) {
            (Some(mut cfg), Some(id)) => {
                cfg.scenario = ScenarioConfig::preset(id);
                cfg
            }
            (Some(cfg), None) => cfg,
            (None, Some(id)) => SimConfig::desk(id)?,
            (None, None) => {
                return Err(ConfigError::invalid(
                    "scenario",
                    "missing: pass --scenario or a configuration file",
                ))
            }
        };
        let horizon_changed = self.horizon_hours.is_some();
        if let Some(v) = self.policy {
            cfg.policy.kind = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.devices {
            cfg.network.devices = v;
        }
        if let Some(v) = self.radius_m {
            cfg.network.radius_m = v;
        }
        if let Some(v) = self.horizon_hours {
            cfg.traffic.horizon_ms = v * HOUR_MS;
        }
        if let Some(v) = self.rate_per_hour {
            cfg.traffic.rate_per_hour = v;
        }
        if let Some(v) = self.payload_bytes {
            cfg.traffic.payload_bytes = v;
        }
        if let Some(v) = self.duty_cycle {
            cfg.mac.duty_cycle = v;
        }
        if let Some(v) = self.l_exp {
            cfg.policy.l_exp = v;
        }
        if let Some(v) = self.l_ee {
            cfg.policy.l_ee = v;
        }
        if let Some(v) = self.gamma {
            cfg.policy.gamma = Some(v);
        }
        if let Some(v) = self.shadowing_sigma_db {
            cfg.path_loss.shadowing_sigma_db = v;
        }
        if horizon_changed {
            // bucket width and window follow the new horizon
            cfg.metrics.bucket_ms = None;
            cfg.metrics.window_buckets = None;
        }
        cfg.resolved()
    }
}
