//! Command-line front end: `run`, `compare`, `sweep` and `validate`.
//!
//! Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime
//! failure. Results go under `--out`, or under `$LORABANDIT_OUTPUT_ROOT`
//! (default `results/`) when `--out` is not given.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lorabandit::bandit::PolicyKind;
use lorabandit::config::{parse_rate, Overrides, SimConfig};
use lorabandit::experiment::{self, ArtifactOptions, Batch};
use lorabandit::{ConfigError, Error};

const OUTPUT_ROOT_ENV: &str = "LORABANDIT_OUTPUT_ROOT";

#[derive(Parser)]
#[command(
    name = "lorabandit",
    version,
    about = "LoRaWAN bandit resource-allocation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its artifacts.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Also write per-device metrics.
        #[arg(long)]
        per_device: bool,
        /// Also write the event log.
        #[arg(long)]
        event_log: bool,
    },
    /// Run several policies over several seeds and tabulate them.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated policies.
        #[arg(long, default_value = "mixmab,loramab,legacy")]
        policies: String,
        /// Seed range `a..b` (inclusive) or comma-separated list.
        #[arg(long, default_value = "1..10")]
        seeds: String,
    },
    /// Run one result set per packet rate.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated rates such as `1ph,1pd,1pw` or `15`.
        #[arg(long)]
        rates: String,
        /// Comma-separated policies; defaults to the configured one.
        #[arg(long)]
        policies: Option<String>,
        /// Seed range or list; defaults to the configured seed.
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Resolve and check a configuration, printing it.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// Configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario preset 1 to 5.
    #[arg(long)]
    scenario: Option<u8>,
    /// `mixmab`, `loramab` or `legacy`.
    #[arg(long)]
    policy: Option<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of end devices.
    #[arg(long)]
    devices: Option<u32>,
    /// Cell radius in metres.
    #[arg(long)]
    radius: Option<f64>,
    /// Simulated time in hours.
    #[arg(long)]
    horizon_hours: Option<f64>,
    /// Packets per hour, or a token such as `1pd`.
    #[arg(long)]
    rate: Option<String>,
    /// Application payload in bytes.
    #[arg(long)]
    payload: Option<u32>,
    /// Per-channel duty cycle in (0, 1].
    #[arg(long)]
    duty_cycle: Option<f64>,
    /// Round-robin repetitions before sampling.
    #[arg(long)]
    l_exp: Option<u64>,
    /// Base play count that triggers a count reset.
    #[arg(long)]
    l_ee: Option<u64>,
    /// Fixed learning rate instead of the horizon-derived one.
    #[arg(long)]
    gamma: Option<f64>,
    /// Log-normal shadowing standard deviation in dB.
    #[arg(long)]
    shadowing_sigma: Option<f64>,
    /// Start from the full-size deployment instead of the desk defaults.
    #[arg(long)]
    long_run: bool,
    /// Results directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(c) => Failure::Invalid(c.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl CommonArgs {
    fn resolve(&self) -> Result<SimConfig, Failure> {
        let base = match (&self.config, self.long_run) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Failure::Invalid(format!("cannot read {}: {e}", path.display()))
                })?;
                Some(SimConfig::from_toml_str(&text)?)
            }
            (None, true) => Some(SimConfig::long_run(self.scenario.unwrap_or(1))?),
            (None, false) => None,
        };
        let overrides = Overrides {
            scenario: self.scenario,
            policy: self.policy.as_deref().map(str::parse).transpose()?,
            seed: self.seed,
            devices: self.devices,
            radius_m: self.radius,
            horizon_hours: self.horizon_hours,
            rate_per_hour: self.rate.as_deref().map(parse_rate).transpose()?,
            payload_bytes: self.payload,
            duty_cycle: self.duty_cycle,
            l_exp: self.l_exp,
            l_ee: self.l_ee,
            gamma: self.gamma,
            shadowing_sigma_db: self.shadowing_sigma,
        };
        Ok(overrides.apply(base)?)
    }

    fn out_dir(&self, default_name: &str) -> PathBuf {
        match &self.out {
            Some(p) => p.clone(),
            None => std::env::var_os(OUTPUT_ROOT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("results"))
                .join(default_name),
        }
    }
}

fn parse_seeds(text: &str) -> Result<Vec<u64>, Failure> {
    let bad = || Failure::Invalid(format!("invalid `seeds`: cannot parse `{text}`"));
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b
            .trim()
            .trim_start_matches('=')
            .parse()
            .map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        Ok((a..=b).collect())
    } else {
        text.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect()
    }
}

fn parse_policies(text: &str) -> Result<Vec<PolicyKind>, Failure> {
    Ok(text
        .split(',')
        .map(str::parse)
        .collect::<Result<Vec<PolicyKind>, ConfigError>>()?)
}

fn scenario_tag(cfg: &SimConfig) -> String {
    cfg.scenario
        .preset
        .map(|p| format!("s{p}"))
        .unwrap_or_else(|| "custom".into())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "n/a".into())
}

fn rate_label(token: &str) -> String {
    format!("rate-{}", token.trim())
}

fn seed_batch(cfg: &SimConfig, policies: &[PolicyKind], seeds: &[u64]) -> Vec<SimConfig> {
    let mut out = Vec::new();
    for &policy in policies {
        for &seed in seeds {
            let mut c = cfg.clone();
            c.policy.kind = policy;
            c.seed = seed;
            out.push(c);
        }
    }
    out
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { common } => {
            let cfg = common.resolve()?;
            print!("{}", experiment::manifest_text(&cfg, None));
            println!(
                "# ok: {} actions, learning rate {}",
                cfg.action_space()?.len(),
                cfg.learner_params()?.gamma
            );
        }
        Command::Run {
            common,
            per_device,
            event_log,
        } => {
            let cfg = common.resolve()?;
            let dir = common.out_dir(&format!(
                "run-{}-{}-seed{}",
                scenario_tag(&cfg),
                cfg.policy.kind,
                cfg.seed
            ));
            let s = experiment::run_to_dir(
                &cfg,
                &dir,
                ArtifactOptions {
                    per_device,
                    event_log,
                },
            )?;
            println!(
                "{}: pdr {} | energy {} mJ/packet | convergence {} ms | results in {}",
                s.policy,
                fmt_opt(s.final_pdr),
                fmt_opt(s.mean_energy_mj_per_packet),
                fmt_opt(s.convergence_ms),
                dir.display()
            );
        }
        Command::Compare {
            common,
            policies,
            seeds,
        } => {
            let cfg = common.resolve()?;
            let policies = parse_policies(&policies)?;
            let seeds = parse_seeds(&seeds)?;
            let dir = common.out_dir(&format!("compare-{}", scenario_tag(&cfg)));
            let batch = Batch {
                label: scenario_tag(&cfg),
                configs: seed_batch(&cfg, &policies, &seeds),
            };
            let table = experiment::run_batches(&dir, "compare.csv", &[batch])?;
            print!("{table}");
        }
        Command::Sweep {
            common,
            rates,
            policies,
            seeds,
        } => {
            let cfg = common.resolve()?;
            let policies = match policies {
                Some(p) => parse_policies(&p)?,
                None => vec![cfg.policy.kind],
            };
            let seeds = match seeds {
                Some(s) => parse_seeds(&s)?,
                None => vec![cfg.seed],
            };
            let mut batches = Vec::new();
            for token in rates.split(',') {
                let mut c = cfg.clone();
                c.traffic.rate_per_hour = parse_rate(token)?;
                let c = c.resolved()?;
                batches.push(Batch {
                    label: rate_label(token),
                    configs: seed_batch(&c, &policies, &seeds),
                });
            }
            let dir = common.out_dir(&format!("sweep-{}", scenario_tag(&cfg)));
            let table = experiment::run_batches(&dir, "sweep.csv", &batches)?;
            print!("{table}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
