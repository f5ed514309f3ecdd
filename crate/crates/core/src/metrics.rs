//! Packet delivery ratio, energy per packet and convergence time over
//! time-bucketed delivery records.

use std::io::{self, Write};
use std::ops::Range;

use thiserror::Error;

/// Counters for one device (or the whole fleet) over one time bucket.
/// A frame is attributed to the bucket in which it started.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BucketRecord {
    pub generated: u64,
    pub sent: u64,
    pub received: u64,
    pub energy_mj: f64,
}

impl BucketRecord {
    fn add(&mut self, other: &BucketRecord) {
        self.generated += other.generated;
        self.sent += other.sent;
        self.received += other.received;
        self.energy_mj += other.energy_mj;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSeries {
    pub bucket_ms: f64,
    pub per_device: Vec<Vec<BucketRecord>>,
    pub aggregate: Vec<BucketRecord>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("series has {len} buckets but the detector needs at least {needed}")]
    SeriesTooShort { len: usize, needed: usize },
    #[error("convergence window must span at least one bucket")]
    EmptyWindow,
}

impl MetricsSeries {
    pub fn new(devices: usize, buckets: usize, bucket_ms: f64) -> Self {
        MetricsSeries {
            bucket_ms,
            per_device: vec![vec![BucketRecord::default(); buckets]; devices],
            aggregate: vec![BucketRecord::default(); buckets],
        }
    }

    pub fn buckets(&self) -> usize {
        self.aggregate.len()
    }

    pub fn devices(&self) -> usize {
        self.per_device.len()
    }

    pub fn all(&self) -> Range<usize> {
        0..self.buckets()
    }

    pub fn bucket_of(&self, time_ms: f64) -> usize {
        ((time_ms / self.bucket_ms).floor() as usize).min(self.buckets().saturating_sub(1))
    }

    pub fn record_generated(&mut self, device: usize, bucket: usize) {
        self.per_device[device][bucket].generated += 1;
        self.aggregate[bucket].generated += 1;
    }

    pub fn record_sent(&mut self, device: usize, bucket: usize, energy_mj: f64) {
        let rec = &mut self.per_device[device][bucket];
        rec.sent += 1;
        rec.energy_mj += energy_mj;
        let agg = &mut self.aggregate[bucket];
        agg.sent += 1;
        agg.energy_mj += energy_mj;
    }

    pub fn record_received(&mut self, device: usize, bucket: usize) {
        self.per_device[device][bucket].received += 1;
        self.aggregate[bucket].received += 1;
    }

    /// Element-wise sum of the per-device series.
    pub fn summed_devices(&self) -> Vec<BucketRecord> {
        let mut out = vec![BucketRecord::default(); self.buckets()];
        for device in &self.per_device {
            for (acc, rec) in out.iter_mut().zip(device) {
                acc.add(rec);
            }
        }
        out
    }

    fn totals(records: &[BucketRecord], window: Range<usize>) -> BucketRecord {
        let mut acc = BucketRecord::default();
        for rec in &records[window] {
            acc.add(rec);
        }
        acc
    }
}

/// Received over sent within `window`; `None` when nothing was sent.
pub fn pdr(series: &MetricsSeries, window: Range<usize>) -> Option<f64> {
    let t = MetricsSeries::totals(&series.aggregate, window);
    (t.sent > 0).then(|| t.received as f64 / t.sent as f64)
}

/// Mean over devices of energy per sent frame within `window`. Devices that
/// sent nothing in the window are left out; `None` when no device sent.
pub fn energy_per_packet(series: &MetricsSeries, window: Range<usize>) -> Option<f64> {
    let per_device: Vec<f64> = series
        .per_device
        .iter()
        .filter_map(|records| {
            let t = MetricsSeries::totals(records, window.clone());
            (t.sent > 0).then(|| t.energy_mj / t.sent as f64)
        })
        .collect();
    (!per_device.is_empty()).then(|| per_device.iter().sum::<f64>() / per_device.len() as f64)
}

/// PDR from the first bucket through each bucket.
pub fn cumulative_pdr(series: &MetricsSeries) -> Vec<Option<f64>> {
    let mut sent = 0u64;
    let mut received = 0u64;
    series
        .aggregate
        .iter()
        .map(|rec| {
            sent += rec.sent;
            received += rec.received;
            (sent > 0).then(|| received as f64 / sent as f64)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Convergence {
    Converged { bucket: usize, time_ms: f64 },
    NotConverged,
}

impl Convergence {
    pub fn time_ms(&self) -> Option<f64> {
        match self {
            Convergence::Converged { time_ms, .. } => Some(*time_ms),
            Convergence::NotConverged => None,
        }
    }
}

/// Least-squares slope of `values` against their index.
pub fn least_squares_slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = values.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, y) in values.iter().enumerate() {
        let dx = i as f64 - x_mean;
        num += dx * (y - y_mean);
        den += dx * dx;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Earliest bucket `b` where the curve is flat and stays flat.
///
/// Flat means the least-squares slope over buckets `b..=b + window` is within
/// `slope_epsilon` per bucket, and no later value exceeds the value at `b` by
/// more than `slope_epsilon * window`. The result carries the start time of
/// bucket `b`.
pub fn convergence_time(
    curve: &[f64],
    bucket_ms: f64,
    slope_epsilon: f64,
    window: usize,
) -> Result<Convergence, MetricsError> {
    if window == 0 {
        return Err(MetricsError::EmptyWindow);
    }
    if curve.len() < 2 * window {
        return Err(MetricsError::SeriesTooShort {
            len: curve.len(),
            needed: 2 * window,
        });
    }
    let rise_limit = slope_epsilon * window as f64;
    // suffix_max[i] = max(curve[i..])
    let mut suffix_max = vec![f64::NEG_INFINITY; curve.len() + 1];
    for i in (0..curve.len()).rev() {
        suffix_max[i] = suffix_max[i + 1].max(curve[i]);
    }
    for b in 0..curve.len() - window {
        let slope = least_squares_slope(&curve[b..=b + window]);
        if slope.abs() <= slope_epsilon && suffix_max[b + 1] - curve[b] <= rise_limit {
            return Ok(Convergence::Converged {
                bucket: b,
                time_ms: b as f64 * bucket_ms,
            });
        }
    }
    Ok(Convergence::NotConverged)
}

pub const AGGREGATE_CSV_HEADER: &str = "bucket_start_ms,sent,received,pdr,energy_mj_per_packet";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per bucket for the whole fleet. Absent ratios are left empty.
pub fn write_aggregate_csv<W: Write>(series: &MetricsSeries, mut out: W) -> io::Result<()> {
    writeln!(out, "{AGGREGATE_CSV_HEADER}")?;
    for (b, rec) in series.aggregate.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{}",
            b as f64 * series.bucket_ms,
            rec.sent,
            rec.received,
            opt(pdr(series, b..b + 1)),
            opt(energy_per_packet(series, b..b + 1)),
        )?;
    }
    Ok(())
}

/// Same columns as the aggregate file with `device_id` prepended.
pub fn write_device_csv<W: Write>(series: &MetricsSeries, mut out: W) -> io::Result<()> {
    writeln!(out, "device_id,{AGGREGATE_CSV_HEADER}")?;
    for (device, records) in series.per_device.iter().enumerate() {
        for (b, rec) in records.iter().enumerate() {
            let ratio = (rec.sent > 0).then(|| rec.received as f64 / rec.sent as f64);
            let energy = (rec.sent > 0).then(|| rec.energy_mj / rec.sent as f64);
            writeln!(
                out,
                "{device},{},{},{},{},{}",
                b as f64 * series.bucket_ms,
                rec.sent,
                rec.received,
                opt(ratio),
                opt(energy),
            )?;
        }
    }
    Ok(())
}
