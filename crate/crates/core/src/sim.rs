//! Deterministic discrete-event simulation of a single-gateway LoRaWAN cell.
//!
//! Each device generates packets, asks its policy for a transmission
//! configuration, waits for its per-channel duty-cycle budget and transmits.
//! At the end of every frame the gateway decides its fate against all
//! time-overlapping frames and the device immediately learns the outcome
//! (the acknowledgement path is lossless and instantaneous).
//!
//! Events are processed in `(time, kind rank, device id, insertion order)`
//! order, with `TxEnd < TxStart < PacketArrival < AckDelivery` at equal
//! times. Events past the horizon are discarded, except that frames already
//! on air are allowed to finish and be acknowledged.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::bandit::{ActionSpace, DevicePolicy, Reward};
use crate::config::{ArrivalProcess, SimConfig, HOUR_MS};
use crate::error::{Error, Result};
use crate::metrics::MetricsSeries;
use crate::phy::{self, Transmission};
use crate::seed::{stream, StreamTag};

/// Exponential inter-arrival time in ms for `rate_per_hour` packets per hour.
pub fn inter_arrival_ms<R: Rng + ?Sized>(rate_per_hour: f64, rng: &mut R) -> f64 {
    let mean = HOUR_MS / rate_per_hour;
    Exp::new(1.0 / mean)
        .expect("rate validated as positive")
        .sample(rng)
}

/// Next packet arrival after `now_ms`.
pub fn generate_traffic<R: Rng + ?Sized>(now_ms: f64, rate_per_hour: f64, rng: &mut R) -> f64 {
    now_ms + inter_arrival_ms(rate_per_hour, rng)
}

/// Uniform point in a disc of `radius_m` centred on the gateway.
pub fn place_device<R: Rng + ?Sized>(radius_m: f64, rng: &mut R) -> (f64, f64) {
    let r = radius_m * rng.random::<f64>().sqrt();
    let theta = 2.0 * std::f64::consts::PI * rng.random::<f64>();
    (r * theta.cos(), r * theta.sin())
}

pub fn place_devices<R: Rng + ?Sized>(n: usize, radius_m: f64, rng: &mut R) -> Vec<(f64, f64)> {
    (0..n).map(|_| place_device(radius_m, rng)).collect()
}

/// Per-channel earliest next transmit time for one device.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DutyCycleLedger {
    next_allowed: BTreeMap<u32, f64>,
}

impl DutyCycleLedger {
    pub fn next_allowed(&self, channel_hz: u32) -> f64 {
        self.next_allowed.get(&channel_hz).copied().unwrap_or(0.0)
    }

    /// Start time for a frame that is ready at `now_ms`. Books the off-period
    /// `airtime * (1/duty_cycle - 1)` after the frame ends.
    pub fn gate(&mut self, channel_hz: u32, airtime_ms: f64, now_ms: f64, duty_cycle: f64) -> f64 {
        let start = now_ms.max(self.next_allowed(channel_hz));
        let off = airtime_ms * (1.0 / duty_cycle - 1.0);
        self.next_allowed
            .insert(channel_hz, start + airtime_ms + off);
        start
    }
}

pub fn duty_cycle_gate(
    ledger: &mut DutyCycleLedger,
    channel_hz: u32,
    airtime_ms: f64,
    now_ms: f64,
    duty_cycle: f64,
) -> f64 {
    ledger.gate(channel_hz, airtime_ms, now_ms, duty_cycle)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    TxEnd,
    TxStart,
    PacketArrival,
    AckDelivery { action: usize, reward: Reward },
}

impl EventKind {
    fn rank(&self) -> u8 {
        match self {
            EventKind::TxEnd => 0,
            EventKind::TxStart => 1,
            EventKind::PacketArrival => 2,
            EventKind::AckDelivery { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time_ms: f64,
    pub device: u32,
    pub kind: EventKind,
    seq: u64,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time_ms
            .total_cmp(&other.time_ms)
            .then(self.kind.rank().cmp(&other.kind.rank()))
            .then(self.device.cmp(&other.device))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One line of the optional event log.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub time_ms: f64,
    pub device: u32,
    pub kind: &'static str,
    pub action: Option<usize>,
    pub outcome: Option<&'static str>,
}

pub const EVENT_LOG_HEADER: &str = "time_ms,device,kind,action,outcome";

impl fmt::Display for EventRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},", self.time_ms, self.device, self.kind)?;
        if let Some(a) = self.action {
            write!(f, "{a}")?;
        }
        write!(f, ",{}", self.outcome.unwrap_or(""))
    }
}

/// Frame chosen for the head-of-line packet, waiting for or in transmission.
#[derive(Debug, Clone)]
struct PendingFrame {
    action_index: usize,
    tx: Transmission,
    started: bool,
    /// Set at the end of the frame, before the acknowledgement is processed.
    decided: bool,
}

#[derive(Debug, Clone)]
pub struct EndDevice {
    pub id: u32,
    pub position: (f64, f64),
    pub policy: DevicePolicy,
    pub duty: DutyCycleLedger,
    /// Arrival times of packets waiting behind the current frame.
    pub queue: VecDeque<f64>,
    current: Option<PendingFrame>,
    traffic_rng: ChaCha8Rng,
    policy_rng: ChaCha8Rng,
    shadow_rng: ChaCha8Rng,
}

impl EndDevice {
    pub fn distance_m(&self) -> f64 {
        self.position.0.hypot(self.position.1)
    }

    fn busy(&self) -> bool {
        self.current.is_some()
    }
}

/// Packet accounting at one instant. Always balanced:
/// `generated = received + lost + queued + in_flight`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservationSnapshot {
    pub time_ms: f64,
    pub generated: u64,
    pub received: u64,
    pub lost: u64,
    /// Waiting in a device queue or for the duty-cycle gate.
    pub queued: u64,
    pub in_flight: u64,
}

impl ConservationSnapshot {
    pub fn balanced(&self) -> bool {
        self.generated == self.received + self.lost + self.queued + self.in_flight
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub series: MetricsSeries,
    /// One snapshot per bucket boundary before the horizon, one at the
    /// horizon and a final one after in-flight frames drained.
    pub conservation: Vec<ConservationSnapshot>,
    pub gamma: f64,
    pub arms: usize,
    pub devices: Vec<EndDevice>,
}

impl RunOutput {
    pub fn final_accounting(&self) -> ConservationSnapshot {
        *self.conservation.last().expect("at least one snapshot")
    }
}

#[derive(Debug, Clone)]
struct OnAir {
    device: u32,
    tx: Transmission,
    ended: bool,
}

type Sink<'s> = Option<&'s mut dyn FnMut(&EventRecord)>;

struct Engine<'a, 's> {
    cfg: &'a SimConfig,
    space: ActionSpace,
    airtimes: Vec<f64>,
    devices: Vec<EndDevice>,
    events: BinaryHeap<std::cmp::Reverse<Event>>,
    seq: u64,
    on_air: Vec<OnAir>,
    series: MetricsSeries,
    generated: u64,
    received: u64,
    lost: u64,
    conservation: Vec<ConservationSnapshot>,
    next_boundary: usize,
    horizon_ms: f64,
    sink: Sink<'s>,
}

pub fn run(cfg: &SimConfig) -> Result<RunOutput> {
    simulate(cfg, None)
}

/// Run and feed every processed event to `sink`.
pub fn run_logged(cfg: &SimConfig, mut sink: impl FnMut(&EventRecord)) -> Result<RunOutput> {
    simulate(cfg, Some(&mut sink))
}

fn simulate(cfg: &SimConfig, sink: Sink<'_>) -> Result<RunOutput> {
    let cfg = &cfg.clone().resolved()?;
    let space = cfg.action_space()?;
    let params = cfg.learner_params()?;
    let airtimes = space
        .iter()
        .map(|a| phy::time_on_air(a.sf, cfg.traffic.payload_bytes, &cfg.radio))
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let devices: Vec<EndDevice> = (0..cfg.network.devices)
        .map(|id| {
            let mut placement = stream(cfg.seed, u64::from(id), StreamTag::Placement);
            EndDevice {
                id,
                position: place_device(cfg.network.radius_m, &mut placement),
                policy: DevicePolicy::new(cfg.policy.kind, space.len(), &params),
                duty: DutyCycleLedger::default(),
                queue: VecDeque::new(),
                current: None,
                traffic_rng: stream(cfg.seed, u64::from(id), StreamTag::Traffic),
                policy_rng: stream(cfg.seed, u64::from(id), StreamTag::Policy),
                shadow_rng: stream(cfg.seed, u64::from(id), StreamTag::Shadowing),
            }
        })
        .collect();

    let mut engine = Engine {
        cfg,
        space,
        airtimes,
        devices,
        events: BinaryHeap::new(),
        seq: 0,
        on_air: Vec::new(),
        series: MetricsSeries::new(cfg.network.devices as usize, cfg.buckets(), cfg.bucket_ms()),
        generated: 0,
        received: 0,
        lost: 0,
        conservation: Vec::new(),
        next_boundary: 1,
        horizon_ms: cfg.traffic.horizon_ms,
        sink,
    };
    engine.run()?;
    Ok(RunOutput {
        series: engine.series,
        conservation: engine.conservation,
        gamma: params.gamma,
        arms: engine.space.len(),
        devices: engine.devices,
    })
}

impl Engine<'_, '_> {
    fn push(&mut self, time_ms: f64, device: u32, kind: EventKind) {
        self.seq += 1;
        self.events.push(std::cmp::Reverse(Event {
            time_ms,
            device,
            kind,
            seq: self.seq,
        }));
    }

    fn log(&mut self, rec: EventRecord) {
        if let Some(sink) = self.sink.as_mut() {
            sink(&rec);
        }
    }

    fn next_arrival(&mut self, device: usize, now_ms: f64) -> f64 {
        let rate = self.cfg.traffic.rate_per_hour;
        match self.cfg.traffic.arrivals {
            ArrivalProcess::Exponential => {
                generate_traffic(now_ms, rate, &mut self.devices[device].traffic_rng)
            }
            ArrivalProcess::Periodic => now_ms + HOUR_MS / rate,
        }
    }

    fn snapshot(&self, time_ms: f64) -> ConservationSnapshot {
        let mut queued = 0u64;
        let mut in_flight = 0u64;
        for d in &self.devices {
            queued += d.queue.len() as u64;
            match &d.current {
                Some(f) if f.decided => {}
                Some(f) if f.started => in_flight += 1,
                Some(_) => queued += 1,
                None => {}
            }
        }
        ConservationSnapshot {
            time_ms,
            generated: self.generated,
            received: self.received,
            lost: self.lost,
            queued,
            in_flight,
        }
    }

    fn take_boundary_snapshots(&mut self, up_to_ms: f64) {
        let bucket_ms = self.series.bucket_ms;
        loop {
            let boundary = self.next_boundary as f64 * bucket_ms;
            if boundary > up_to_ms || boundary >= self.horizon_ms {
                break;
            }
            let snap = self.snapshot(boundary);
            self.conservation.push(snap);
            self.next_boundary += 1;
        }
    }

    fn run(&mut self) -> Result<()> {
        for d in 0..self.devices.len() {
            let t = self.next_arrival(d, 0.0);
            self.push(t, d as u32, EventKind::PacketArrival);
        }

        let mut horizon_recorded = false;
        while let Some(std::cmp::Reverse(ev)) = self.events.pop() {
            let past_horizon = ev.time_ms >= self.horizon_ms;
            if !past_horizon {
                self.take_boundary_snapshots(ev.time_ms);
            } else if !horizon_recorded {
                self.take_boundary_snapshots(self.horizon_ms);
                let snap = self.snapshot(self.horizon_ms);
                self.conservation.push(snap);
                horizon_recorded = true;
            }
            let device = ev.device as usize;
            match ev.kind {
                EventKind::PacketArrival if !past_horizon => self.on_arrival(device, ev.time_ms),
                EventKind::TxStart if !past_horizon => self.on_tx_start(device, ev.time_ms),
                EventKind::TxEnd => self.on_tx_end(device, ev.time_ms),
                EventKind::AckDelivery { action, reward } => {
                    self.on_ack(device, ev.time_ms, action, reward, past_horizon)?
                }
                // arrivals and starts beyond the horizon never happen
                EventKind::PacketArrival | EventKind::TxStart => {}
            }
        }
        if !horizon_recorded {
            self.take_boundary_snapshots(self.horizon_ms);
            let snap = self.snapshot(self.horizon_ms);
            self.conservation.push(snap);
        }
        let end = self.snapshot(self.horizon_ms);
        self.conservation.push(end);
        Ok(())
    }

    fn on_arrival(&mut self, device: usize, now: f64) {
        self.generated += 1;
        let bucket = self.series.bucket_of(now);
        self.series.record_generated(device, bucket);
        self.devices[device].queue.push_back(now);
        self.log(EventRecord {
            time_ms: now,
            device: device as u32,
            kind: "arrival",
            action: None,
            outcome: None,
        });
        let next = self.next_arrival(device, now);
        self.push(next, device as u32, EventKind::PacketArrival);
        if !self.devices[device].busy() {
            self.start_next(device, now);
        }
    }

    /// Pop the head-of-line packet, choose its configuration and book the
    /// duty-cycle gate.
    fn start_next(&mut self, device: usize, now: f64) {
        let cfg = self.cfg;
        let dev = &mut self.devices[device];
        if dev.queue.pop_front().is_none() {
            return;
        }
        let action_index = dev.policy.select(&mut dev.policy_rng);
        let action = self.space[action_index];
        let airtime = self.airtimes[action_index];
        let start = dev
            .duty
            .gate(action.channel_hz, airtime, now, cfg.mac.duty_cycle);
        dev.current = Some(PendingFrame {
            action_index,
            tx: Transmission {
                device_id: dev.id,
                action,
                start_ms: start,
                airtime_ms: airtime,
                rx_power_dbm: f64::NAN,
                payload_bytes: cfg.traffic.payload_bytes,
            },
            started: false,
            decided: false,
        });
        self.push(start, device as u32, EventKind::TxStart);
    }

    fn on_tx_start(&mut self, device: usize, now: f64) {
        let cfg = self.cfg;
        let dev = &mut self.devices[device];
        let distance = dev.distance_m();
        let frame = dev.current.as_mut().expect("start without a pending frame");
        let loss = phy::path_loss_db(distance, &cfg.path_loss, &mut dev.shadow_rng);
        frame.tx.rx_power_dbm = phy::received_power_dbm(f64::from(frame.tx.action.tp_dbm), loss);
        frame.started = true;
        let tx = frame.tx.clone();
        let action_index = frame.action_index;

        let energy = phy::energy_per_packet_mj(f64::from(tx.action.tp_dbm), tx.airtime_ms);
        let bucket = self.series.bucket_of(now);
        self.series.record_sent(device, bucket, energy);
        let end = tx.end_ms();
        self.on_air.push(OnAir {
            device: device as u32,
            tx,
            ended: false,
        });
        self.log(EventRecord {
            time_ms: now,
            device: device as u32,
            kind: "tx_start",
            action: Some(action_index),
            outcome: None,
        });
        self.push(end, device as u32, EventKind::TxEnd);
    }

    fn on_tx_end(&mut self, device: usize, now: f64) {
        let pos = self
            .on_air
            .iter()
            .position(|o| o.device == device as u32 && !o.ended)
            .expect("frame ending is on air");
        let target = self.on_air[pos].tx.clone();
        let mut group = Vec::with_capacity(8);
        group.push(target.clone());
        group.extend(
            self.on_air
                .iter()
                .enumerate()
                .filter(|(i, o)| *i != pos && o.tx.overlaps(&target))
                .map(|(_, o)| o.tx.clone()),
        );
        let decoded = phy::decode_mask(&group, &self.cfg.link)[0];
        self.on_air[pos].ended = true;

        let bucket = self.series.bucket_of(target.start_ms);
        if decoded {
            self.received += 1;
            self.series.record_received(device, bucket);
        } else {
            self.lost += 1;
        }
        let frame = self.devices[device]
            .current
            .as_mut()
            .expect("frame ending belongs to the device");
        frame.decided = true;
        let action = frame.action_index;
        self.log(EventRecord {
            time_ms: now,
            device: device as u32,
            kind: "tx_end",
            action: Some(action),
            outcome: Some(if decoded { "decoded" } else { "lost" }),
        });
        self.push(
            now,
            device as u32,
            EventKind::AckDelivery {
                action,
                reward: Reward::from_ack(decoded),
            },
        );
        self.prune_on_air(now);
    }

    /// Drop finished frames that can no longer overlap anything still to
    /// come: every future frame starts at or after `now` and every live frame
    /// started at or after the earliest live start.
    fn prune_on_air(&mut self, now: f64) {
        let horizon = self
            .on_air
            .iter()
            .filter(|o| !o.ended)
            .map(|o| o.tx.start_ms)
            .fold(now, f64::min);
        self.on_air.retain(|o| !o.ended || o.tx.end_ms() > horizon);
    }

    fn on_ack(
        &mut self,
        device: usize,
        now: f64,
        action: usize,
        reward: Reward,
        past_horizon: bool,
    ) -> Result<()> {
        let dev = &mut self.devices[device];
        dev.policy.update(action, reward).map_err(Error::from)?;
        dev.current = None;
        self.log(EventRecord {
            time_ms: now,
            device: device as u32,
            kind: "ack",
            action: Some(action),
            outcome: Some(if reward == Reward::Ack { "1" } else { "0" }),
        });
        if !past_horizon && !self.devices[device].queue.is_empty() {
            self.start_next(device, now);
        }
        Ok(())
    }
}
