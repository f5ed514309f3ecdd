//! Run orchestration and result artifacts.
//!
//! A results directory for one run holds:
//!
//! - `manifest.toml`: the fully resolved configuration, loadable as-is with
//!   `--config` to reproduce the run, preceded by comment lines carrying the
//!   build identifier and derived values.
//! - `metrics.csv`: fleet-wide per-bucket records.
//! - `devices.csv` (optional): the same columns per device.
//! - `events.csv` (optional): the event log.
//! - `summary.toml`: final PDR, mean energy per packet, convergence time.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::bandit::PolicyKind;
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::metrics::{self, Convergence};
use crate::sim::{self, RunOutput, EVENT_LOG_HEADER};

pub const BUILD_ID: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub policy: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<u8>,
    pub seed: u64,
    pub rate_per_hour: f64,
    pub arms: usize,
    pub gamma: f64,
    pub generated: u64,
    pub sent: u64,
    pub received: u64,
    pub residual: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_pdr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_energy_mj_per_packet: Option<f64>,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence_ms: Option<f64>,
}

/// Convergence of the cumulative PDR curve, ignoring leading buckets in
/// which nothing had been sent yet.
pub fn cumulative_convergence(cfg: &SimConfig, out: &RunOutput) -> Convergence {
    let curve = metrics::cumulative_pdr(&out.series);
    let first = match curve.iter().position(Option::is_some) {
        Some(i) => i,
        None => return Convergence::NotConverged,
    };
    let values: Vec<f64> = curve[first..].iter().map(|v| v.unwrap_or(0.0)).collect();
    let bucket_ms = out.series.bucket_ms;
    match metrics::convergence_time(
        &values,
        bucket_ms,
        cfg.slope_epsilon(),
        cfg.window_buckets(),
    ) {
        Ok(Convergence::Converged { bucket, .. }) => Convergence::Converged {
            bucket: bucket + first,
            time_ms: (bucket + first) as f64 * bucket_ms,
        },
        _ => Convergence::NotConverged,
    }
}

pub fn summarize(cfg: &SimConfig, out: &RunOutput) -> RunSummary {
    let acct = out.final_accounting();
    let sent: u64 = out.series.aggregate.iter().map(|r| r.sent).sum();
    let convergence = cumulative_convergence(cfg, out);
    RunSummary {
        policy: cfg.policy.kind.name().to_string(),
        scenario: cfg.scenario.preset,
        seed: cfg.seed,
        rate_per_hour: cfg.traffic.rate_per_hour,
        arms: out.arms,
        gamma: out.gamma,
        generated: acct.generated,
        sent,
        received: acct.received,
        residual: acct.queued + acct.in_flight,
        final_pdr: metrics::pdr(&out.series, out.series.all()),
        mean_energy_mj_per_packet: metrics::energy_per_packet(&out.series, out.series.all()),
        converged: convergence.time_ms().is_some(),
        convergence_ms: convergence.time_ms(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ArtifactOptions {
    pub per_device: bool,
    pub event_log: bool,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(format!("cannot create {}", path.display()), e))
}

fn io_ctx(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(format!("cannot write {}", path.display()), e)
}

pub fn manifest_text(cfg: &SimConfig, out: Option<&RunOutput>) -> String {
    let mut text = format!("# run manifest\n# build: {BUILD_ID}\n");
    if let Some(out) = out {
        text.push_str(&format!(
            "# derived: arms = {}, gamma = {}\n",
            out.arms, out.gamma
        ));
    }
    text.push('\n');
    text.push_str(&cfg.to_toml_string());
    text
}

/// Run `cfg` and write its artifacts into `dir`, creating it if needed.
pub fn run_to_dir(cfg: &SimConfig, dir: &Path, opts: ArtifactOptions) -> Result<RunSummary> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::io(format!("cannot create {}", dir.display()), e))?;

    let out = if opts.event_log {
        let path = dir.join("events.csv");
        let mut log = create(&path)?;
        writeln!(log, "{EVENT_LOG_HEADER}").map_err(io_ctx(&path))?;
        let mut failure = None;
        let out = sim::run_logged(cfg, |rec| {
            if failure.is_none() {
                if let Err(e) = writeln!(log, "{rec}") {
                    failure = Some(e);
                }
            }
        })?;
        if let Some(e) = failure {
            return Err(io_ctx(&path)(e));
        }
        log.flush().map_err(io_ctx(&path))?;
        out
    } else {
        sim::run(cfg)?
    };

    let path = dir.join("manifest.toml");
    fs::write(&path, manifest_text(cfg, Some(&out))).map_err(io_ctx(&path))?;

    let path = dir.join("metrics.csv");
    let mut w = create(&path)?;
    metrics::write_aggregate_csv(&out.series, &mut w).map_err(io_ctx(&path))?;
    w.flush().map_err(io_ctx(&path))?;

    if opts.per_device {
        let path = dir.join("devices.csv");
        let mut w = create(&path)?;
        metrics::write_device_csv(&out.series, &mut w).map_err(io_ctx(&path))?;
        w.flush().map_err(io_ctx(&path))?;
    }

    let summary = summarize(cfg, &out);
    let path = dir.join("summary.toml");
    let text = toml::to_string(&summary).expect("summary serializes");
    fs::write(&path, text).map_err(io_ctx(&path))?;
    Ok(summary)
}

/// Median of the finite values; `None` when there are none. Absent entries
/// (for example a run that never converged) are ranked above every value,
/// so a median that lands on one of them is itself absent.
pub fn median(values: &[Option<f64>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted: Vec<f64> = values.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let m = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    m.is_finite().then_some(m)
}

/// Run every configuration, possibly in parallel, returning results in input
/// order.
pub fn run_many(configs: &[SimConfig]) -> Result<Vec<(RunSummary, RunOutput)>> {
    configs
        .par_iter()
        .map(|cfg| sim::run(cfg).map(|out| (summarize(cfg, &out), out)))
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const SUMMARY_CSV_HEADER: &str =
    "label,policy,seed,rate_per_hour,final_pdr,mean_energy_mj_per_packet,convergence_ms";

fn summary_row(label: &str, s: &RunSummary) -> String {
    format!(
        "{label},{},{},{},{},{},{}",
        s.policy,
        s.seed,
        s.rate_per_hour,
        fmt_opt(s.final_pdr),
        fmt_opt(s.mean_energy_mj_per_packet),
        fmt_opt(s.convergence_ms),
    )
}

fn median_row(label: &str, policy: &str, rate: f64, group: &[&RunSummary]) -> String {
    let pdr: Vec<_> = group.iter().map(|s| s.final_pdr).collect();
    let ec: Vec<_> = group.iter().map(|s| s.mean_energy_mj_per_packet).collect();
    let conv: Vec<_> = group.iter().map(|s| s.convergence_ms).collect();
    format!(
        "{label},{policy},median,{rate},{},{},{}",
        fmt_opt(median(&pdr)),
        fmt_opt(median(&ec)),
        fmt_opt(median(&conv)),
    )
}

/// One labelled batch of runs inside a compare or sweep.
pub struct Batch {
    pub label: String,
    pub configs: Vec<SimConfig>,
}

/// Run every batch, write per-run artifacts under `root/<label>/<policy>/seed-<n>`
/// and a summary table at `root/<table_name>`. Returns the table text.
pub fn run_batches(root: &Path, table_name: &str, batches: &[Batch]) -> Result<String> {
    fs::create_dir_all(root)
        .map_err(|e| Error::io(format!("cannot create {}", root.display()), e))?;
    let jobs: Vec<(usize, PathBuf, &SimConfig)> = batches
        .iter()
        .enumerate()
        .flat_map(|(b, batch)| {
            batch.configs.iter().map(move |cfg| {
                let dir = root
                    .join(&batch.label)
                    .join(cfg.policy.kind.name())
                    .join(format!("seed-{}", cfg.seed));
                (b, dir, cfg)
            })
        })
        .collect();
    let summaries: Vec<RunSummary> = jobs
        .par_iter()
        .map(|(_, dir, cfg)| run_to_dir(cfg, dir, ArtifactOptions::default()))
        .collect::<Result<_>>()?;

    let mut table = String::new();
    table.push_str(SUMMARY_CSV_HEADER);
    table.push('\n');
    for (b, batch) in batches.iter().enumerate() {
        let in_batch: Vec<&RunSummary> = jobs
            .iter()
            .zip(&summaries)
            .filter(|((jb, _, _), _)| *jb == b)
            .map(|(_, s)| s)
            .collect();
        for s in &in_batch {
            table.push_str(&summary_row(&batch.label, s));
            table.push('\n');
        }
        for kind in PolicyKind::ALL {
            let group: Vec<&RunSummary> = in_batch
                .iter()
                .copied()
                .filter(|s| s.policy == kind.name())
                .collect();
            if let Some(first) = group.first() {
                table.push_str(&median_row(
                    &batch.label,
                    kind.name(),
                    first.rate_per_hour,
                    &group,
                ));
                table.push('\n');
            }
        }
    }
    let path = root.join(table_name);
    fs::write(&path, &table).map_err(io_ctx(&path))?;
    Ok(table)
}
