//! Event-driven dumbbell simulator.
//!
//! Each packet leaves its host after a small random delay (order within a
//! flow is kept) and joins a droptail bottleneck. A packet that finishes
//! serialization reaches its receiver after half the RTT, and the
//! receiver's ACK returns after the other half over an uncongested path.
//! ACKs are selective: each names the segment and the transmission that
//! arrived. A transmission counts as lost once one sent three transmissions
//! later has been acknowledged (the three-duplicate-ACK rule); otherwise the
//! retransmission timer recovers it.
//!
//! Cross-traffic flows start first, at random offsets within one start
//! interval; the requested flows join during the following interval.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FlowSpec, FlowStats, ScenarioSpec};
use crate::cca::{customize, AckEvent, CcaState, ControlProfile, LossEvent, DEFAULT_MSS};

const DUP_THRESH: u64 = 3;
const MIN_RTO_NS: u64 = 200_000_000;
const INITIAL_RTO_NS: u64 = 1_000_000_000;
const MAX_RTO_NS: u64 = 60_000_000_000;
/// Length of the sliding window behind the customization's loss estimate.
pub const LOSS_WINDOW_NS: u64 = 10_000_000_000;
const LOSS_BUCKET_NS: u64 = 100_000_000;
/// One-sided 99.5% normal quantile for the loss upper confidence bound.
const LOSS_Z: f64 = 2.576;
/// Resolved segments needed before the loss window yields an estimate.
const LOSS_MIN_RESOLVED: u64 = 200;
/// Host-side delay before the bottleneck is uniform in `[0, HOST_JITTER_NS]`.
pub const HOST_JITTER_NS: u64 = 500_000;
/// Upper bound on the start interval; it is also at most one RTT and a
/// tenth of the run.
const MAX_START_SPREAD_NS: u64 = 500_000_000;

#[derive(Debug, Clone, Copy)]
struct Packet {
    flow: u32,
    seq: u64,
    tx_idx: u64,
    sent_ns: u64,
}

#[derive(Debug, Clone, Copy)]
struct AckInfo {
    seq: u64,
    tx_idx: u64,
    sent_ns: u64,
}

#[derive(Debug, Clone, Copy)]
enum Event {
    Start(u32),
    LinkDone,
    Arrive(Packet),
    Deliver(Packet),
    Ack(u32, AckInfo),
    Rto(u32),
}

struct Scheduled {
    at: u64,
    order: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.order) == (other.at, other.order)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (time, insertion order)
        (other.at, other.order).cmp(&(self.at, self.order))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SegState {
    InFlight,
    Lost,
    Delivered,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    state: SegState,
    tx_idx: u64,
    sent_ns: u64,
    delivered_at_send: u64,
}

/// Sender-side loss ratio over the last [`LOSS_WINDOW_NS`]: declared losses
/// over segments whose fate is known (delivered or declared lost).
#[derive(Debug, Default)]
struct LossWindow {
    buckets: VecDeque<(u64, u64, u64)>,
    resolved: u64,
    lost: u64,
}

impl LossWindow {
    fn expire(&mut self, now: u64) {
        let current = now / LOSS_BUCKET_NS;
        let span = LOSS_WINDOW_NS / LOSS_BUCKET_NS;
        while let Some(&(b, s, l)) = self.buckets.front() {
            if b + span > current {
                break;
            }
            self.resolved -= s;
            self.lost -= l;
            self.buckets.pop_front();
        }
    }

    fn add(&mut self, now: u64, resolved: u64, lost: u64) {
        self.expire(now);
        let bucket = now / LOSS_BUCKET_NS;
        match self.buckets.back_mut() {
            Some(last) if last.0 == bucket => {
                last.1 += resolved;
                last.2 += lost;
            }
            _ => self.buckets.push_back((bucket, resolved, lost)),
        }
        self.resolved += resolved;
        self.lost += lost;
    }

    /// Upper Wilson bound on the loss probability; 1 without enough evidence.
    fn upper_bound(&mut self, now: u64) -> f64 {
        self.expire(now);
        if self.resolved < LOSS_MIN_RESOLVED {
            return 1.0;
        }
        wilson_upper(self.lost, self.resolved, LOSS_Z)
    }
}

/// One-sided Wilson score upper bound for `k` events in `n` trials.
pub fn wilson_upper(k: u64, n: u64, z: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let n_f = n as f64;
    let p = (k.min(n)) as f64 / n_f;
    let z2 = z * z;
    let centre = p + z2 / (2.0 * n_f);
    let spread = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt();
    ((centre + spread) / (1.0 + z2 / n_f)).min(1.0)
}

struct Sender {
    cca: CcaState,
    profile: Option<ControlProfile>,
    start_ns: u64,
    started: bool,
    segs: Vec<Segment>,
    next_seq: u64,
    una: u64,
    pipe: u32,
    next_tx: u64,
    /// Transmissions not yet judged, oldest first.
    tx_log: VecDeque<(u64, u64)>,
    highest_acked_tx: Option<u64>,
    rtx: BTreeSet<u64>,
    fast_recovery: bool,
    recovery_point: u64,
    /// Losses of segments below this belong to an episode already handled.
    episode_end: u64,
    srtt_ns: Option<f64>,
    rttvar_ns: f64,
    backoff: u32,
    rto_deadline: Option<u64>,
    rto_scheduled: bool,
    delivered: u64,
    loss_window: LossWindow,
    rate_mbps: f64,
    // measurement window
    sent_in_window: u64,
    dropped_in_window: u64,
    rtt_sum_ms: f64,
    rtt_samples: u64,
    /// Latest bottleneck arrival scheduled, keeps the flow in order.
    last_arrival_ns: u64,
}

impl Sender {
    fn new(spec: &FlowSpec, start_ns: u64) -> Self {
        let (base, profile) = match spec {
            FlowSpec::Base(b) => (*b, None),
            FlowSpec::Custom(p) => (p.base_cca, Some(p.clone())),
        };
        Sender {
            cca: CcaState::new(base, DEFAULT_MSS),
            profile,
            start_ns,
            started: false,
            segs: Vec::new(),
            next_seq: 0,
            una: 0,
            pipe: 0,
            next_tx: 0,
            tx_log: VecDeque::new(),
            highest_acked_tx: None,
            rtx: BTreeSet::new(),
            fast_recovery: false,
            recovery_point: 0,
            episode_end: 0,
            srtt_ns: None,
            rttvar_ns: 0.0,
            backoff: 0,
            rto_deadline: None,
            rto_scheduled: false,
            delivered: 0,
            loss_window: LossWindow::default(),
            rate_mbps: 0.0,
            sent_in_window: 0,
            dropped_in_window: 0,
            rtt_sum_ms: 0.0,
            rtt_samples: 0,
            last_arrival_ns: 0,
        }
    }

    fn rto_ns(&self) -> u64 {
        let base = match self.srtt_ns {
            None => INITIAL_RTO_NS,
            Some(srtt) => ((srtt + 4.0 * self.rttvar_ns) as u64).max(MIN_RTO_NS),
        };
        base.saturating_mul(1 << self.backoff.min(16)).min(MAX_RTO_NS)
    }

    fn sample_rtt(&mut self, rtt_ns: u64) {
        let r = rtt_ns as f64;
        match self.srtt_ns {
            None => {
                self.srtt_ns = Some(r);
                self.rttvar_ns = r / 2.0;
            }
            Some(srtt) => {
                self.rttvar_ns = 0.75 * self.rttvar_ns + 0.25 * (srtt - r).abs();
                self.srtt_ns = Some(0.875 * srtt + 0.125 * r);
            }
        }
    }

    fn now_us(&self, now: u64) -> u64 {
        now.saturating_sub(self.start_ns) / 1000
    }

    /// R1/R2/R3 wrapper for customized flows.
    fn customize(&mut self, now: u64) {
        let Some(profile) = &self.profile else {
            return;
        };
        let measured = FlowStats {
            mean_throughput_mbps: self.rate_mbps,
            loss_rate: self.loss_window.upper_bound(now),
            ..FlowStats::default()
        };
        self.cca = customize(profile, &self.cca, &measured).0;
    }
}

#[derive(Debug, Default)]
struct Receiver {
    got: Vec<bool>,
    bytes_in_window: u64,
}

/// Per-run counters, useful in tests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimCounters {
    pub events: u64,
    pub transmissions: u64,
    pub queue_drops: u64,
    pub random_drops: u64,
    pub timeouts: u64,
}

pub struct SimOutput {
    /// One entry per flow: the requested flows first, then cross traffic.
    pub flows: Vec<FlowStats>,
    pub counters: SimCounters,
}

struct Sim<'a> {
    spec: &'a ScenarioSpec,
    now: u64,
    order: u64,
    heap: BinaryHeap<Scheduled>,
    senders: Vec<Sender>,
    receivers: Vec<Receiver>,
    queue: VecDeque<Packet>,
    in_service: Option<Packet>,
    ser_ns: u64,
    one_way_ns: u64,
    end_ns: u64,
    warmup_ns: u64,
    loss_rng: ChaCha8Rng,
    jitter_rng: ChaCha8Rng,
    counters: SimCounters,
}

/// Runs `spec` with `flows` plus the scenario's competing flows.
pub fn simulate(spec: &ScenarioSpec, flows: &[FlowSpec]) -> SimOutput {
    let mut all: Vec<FlowSpec> = flows.to_vec();
    all.extend((0..spec.competing_flows).map(|_| FlowSpec::Base(spec.competing_cca)));

    let end_ns = (spec.duration_s * 1e9) as u64;
    let warmup_ns = (spec.warmup_s * 1e9) as u64;
    let mut start_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    start_rng.set_stream(1);
    let mut loss_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    loss_rng.set_stream(2);
    let mut jitter_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    jitter_rng.set_stream(3);

    let spread = (end_ns / 10).min(MAX_START_SPREAD_NS).min((spec.rtt_ms * 1e6) as u64).max(1);
    let senders: Vec<Sender> = all
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let joins_late = spec.competing_flows > 0 && i < flows.len();
            let offset = if joins_late { spread } else { 0 };
            Sender::new(f, offset + start_rng.random_range(0..spread))
        })
        .collect();

    let mut sim = Sim {
        spec,
        now: 0,
        order: 0,
        heap: BinaryHeap::new(),
        receivers: (0..all.len()).map(|_| Receiver::default()).collect(),
        senders,
        queue: VecDeque::new(),
        in_service: None,
        ser_ns: ((DEFAULT_MSS as f64 * 8.0) / (spec.bottleneck_mbps * 1e6) * 1e9).round().max(1.0) as u64,
        one_way_ns: (spec.rtt_ms * 1e6 / 2.0).round() as u64,
        end_ns,
        warmup_ns,
        loss_rng,
        jitter_rng,
        counters: SimCounters::default(),
    };
    for i in 0..sim.senders.len() {
        let at = sim.senders[i].start_ns;
        sim.schedule(at, Event::Start(i as u32));
    }
    sim.run();
    sim.finish()
}

impl Sim<'_> {
    fn schedule(&mut self, at: u64, event: Event) {
        self.order += 1;
        self.heap.push(Scheduled { at, order: self.order, event });
    }

    fn in_window(&self, t: u64) -> bool {
        t >= self.warmup_ns && t < self.end_ns
    }

    fn run(&mut self) {
        while let Some(item) = self.heap.pop() {
            if item.at >= self.end_ns {
                break;
            }
            self.now = item.at;
            self.counters.events += 1;
            match item.event {
                Event::Start(f) => {
                    self.senders[f as usize].started = true;
                    self.try_send(f);
                }
                Event::LinkDone => self.link_done(),
                Event::Arrive(p) => self.enqueue(p),
                Event::Deliver(p) => self.deliver(p),
                Event::Ack(f, info) => self.on_ack(f, info),
                Event::Rto(f) => self.on_rto_timer(f),
            }
        }
    }

    fn finish(self) -> SimOutput {
        let window_s = self.spec.measurement_window_s();
        let flows = self
            .senders
            .iter()
            .zip(&self.receivers)
            .map(|(s, r)| {
                if window_s <= 0.0 {
                    return FlowStats::default();
                }
                FlowStats {
                    mean_throughput_mbps: r.bytes_in_window as f64 * 8.0 / window_s / 1e6,
                    loss_rate: if s.sent_in_window == 0 {
                        0.0
                    } else {
                        s.dropped_in_window as f64 / s.sent_in_window as f64
                    },
                    delivered_bytes: r.bytes_in_window,
                    rtt_mean_ms: if s.rtt_samples == 0 { 0.0 } else { s.rtt_sum_ms / s.rtt_samples as f64 },
                }
            })
            .collect();
        SimOutput { flows, counters: self.counters }
    }

    // ---- bottleneck -------------------------------------------------------

    fn enqueue(&mut self, p: Packet) {
        let random_drop = self.loss_rng.random::<f64>() < self.spec.random_loss_rate;
        let full = self.in_service.is_some() && self.queue.len() >= self.spec.queue_capacity as usize;
        if random_drop || full {
            if random_drop {
                self.counters.random_drops += 1;
            } else {
                self.counters.queue_drops += 1;
            }
            if self.in_window(p.sent_ns) {
                self.senders[p.flow as usize].dropped_in_window += 1;
            }
            return;
        }
        if self.in_service.is_none() {
            self.in_service = Some(p);
            self.schedule(self.now + self.ser_ns, Event::LinkDone);
        } else {
            self.queue.push_back(p);
        }
    }

    fn link_done(&mut self) {
        if let Some(p) = self.in_service.take() {
            self.schedule(self.now + self.one_way_ns, Event::Deliver(p));
        }
        if let Some(next) = self.queue.pop_front() {
            self.in_service = Some(next);
            self.schedule(self.now + self.ser_ns, Event::LinkDone);
        }
    }

    // ---- receiver ---------------------------------------------------------

    fn deliver(&mut self, p: Packet) {
        let in_window = self.in_window(self.now);
        let r = &mut self.receivers[p.flow as usize];
        let idx = p.seq as usize;
        if r.got.len() <= idx {
            r.got.resize(idx + 1, false);
        }
        if !r.got[idx] {
            r.got[idx] = true;
            if in_window {
                r.bytes_in_window += DEFAULT_MSS as u64;
            }
        }
        let info = AckInfo { seq: p.seq, tx_idx: p.tx_idx, sent_ns: p.sent_ns };
        self.schedule(self.now + self.one_way_ns, Event::Ack(p.flow, info));
    }

    // ---- sender -----------------------------------------------------------

    fn try_send(&mut self, f: u32) {
        let now = self.now;
        let in_window = self.in_window(now);
        let mut sent = 0u64;
        let mut packets = Vec::new();
        {
            let s = &mut self.senders[f as usize];
            if !s.started {
                return;
            }
            while s.pipe < s.cca.cwnd {
                let seq = loop {
                    match s.rtx.pop_first() {
                        Some(seq) if s.segs[seq as usize].state == SegState::Lost => break seq,
                        Some(_) => continue,
                        None => {
                            let seq = s.next_seq;
                            s.next_seq += 1;
                            s.segs.push(Segment {
                                state: SegState::InFlight,
                                tx_idx: 0,
                                sent_ns: 0,
                                delivered_at_send: 0,
                            });
                            break seq;
                        }
                    }
                };
                let tx_idx = s.next_tx;
                s.next_tx += 1;
                let delivered = s.delivered;
                let seg = &mut s.segs[seq as usize];
                seg.state = SegState::InFlight;
                seg.tx_idx = tx_idx;
                seg.sent_ns = now;
                seg.delivered_at_send = delivered;
                s.pipe += 1;
                s.tx_log.push_back((tx_idx, seq));
                sent += 1;
                if in_window {
                    s.sent_in_window += 1;
                }
                packets.push(Packet { flow: f, seq, tx_idx, sent_ns: now });
            }
            if sent > 0 && s.rto_deadline.is_none() {
                s.rto_deadline = Some(now + s.rto_ns());
            }
        }
        self.counters.transmissions += sent;
        for p in packets {
            let jitter = self.jitter_rng.random_range(0..=HOST_JITTER_NS);
            let s = &mut self.senders[f as usize];
            let at = (now + jitter).max(s.last_arrival_ns);
            s.last_arrival_ns = at;
            self.schedule(at, Event::Arrive(p));
        }
        self.arm_rto(f);
    }

    fn arm_rto(&mut self, f: u32) {
        let s = &mut self.senders[f as usize];
        if let (Some(deadline), false) = (s.rto_deadline, s.rto_scheduled) {
            s.rto_scheduled = true;
            self.schedule(deadline, Event::Rto(f));
        }
    }

    fn on_ack(&mut self, f: u32, info: AckInfo) {
        let now = self.now;
        let in_window = self.in_window(now);
        let s = &mut self.senders[f as usize];
        let rtt_ns = now - info.sent_ns;
        s.sample_rtt(rtt_ns);
        if in_window {
            s.rtt_sum_ms += rtt_ns as f64 / 1e6;
            s.rtt_samples += 1;
        }

        let seg = &mut s.segs[info.seq as usize];
        let newly = match seg.state {
            SegState::InFlight => {
                s.pipe -= 1;
                true
            }
            SegState::Lost => true,
            SegState::Delivered => false,
        };
        if newly {
            seg.state = SegState::Delivered;
            s.delivered += 1;
            s.loss_window.add(now, 1, 0);
            let interval_ns = now.saturating_sub(info.sent_ns).max(1);
            let segs = s.delivered - seg.delivered_at_send;
            s.rate_mbps = segs as f64 * DEFAULT_MSS as f64 * 8.0 / (interval_ns as f64 / 1e9) / 1e6;
            while s.una < s.next_seq && s.segs[s.una as usize].state == SegState::Delivered {
                s.una += 1;
            }
        }
        s.highest_acked_tx = Some(s.highest_acked_tx.map_or(info.tx_idx, |h| h.max(info.tx_idx)));

        // Three later transmissions acknowledged: declare loss.
        let mut lost_now = 0u64;
        let mut new_episode = false;
        let highest = s.highest_acked_tx.unwrap_or(0);
        while let Some(&(tx, seq)) = s.tx_log.front() {
            if tx + DUP_THRESH > highest {
                break;
            }
            s.tx_log.pop_front();
            let seg = &mut s.segs[seq as usize];
            if seg.state == SegState::InFlight && seg.tx_idx == tx {
                seg.state = SegState::Lost;
                s.pipe -= 1;
                s.rtx.insert(seq);
                lost_now += 1;
                if seq >= s.episode_end {
                    new_episode = true;
                }
            }
        }
        if lost_now > 0 {
            s.loss_window.add(now, lost_now, lost_now);
        }
        if new_episode {
            s.cca.loss(&LossEvent { lost_segments: lost_now as u32 });
            s.fast_recovery = true;
            s.recovery_point = s.next_seq;
            s.episode_end = s.next_seq;
        }
        if s.fast_recovery && s.una >= s.recovery_point {
            s.fast_recovery = false;
        }

        if newly {
            let rtt_us = ((rtt_ns / 1000) as u32).max(1);
            let ev = AckEvent { acked_segments: 1, rtt_sample_us: rtt_us, now_us: s.now_us(now), in_recovery: s.fast_recovery };
            s.cca.ack(&ev);
            s.backoff = 0;
            s.rto_deadline = if s.una < s.next_seq { Some(now + s.rto_ns()) } else { None };
        }
        s.customize(now);
        self.try_send(f);
    }

    fn on_rto_timer(&mut self, f: u32) {
        let now = self.now;
        let s = &mut self.senders[f as usize];
        s.rto_scheduled = false;
        let Some(deadline) = s.rto_deadline else {
            return;
        };
        if deadline > now {
            self.arm_rto(f);
            return;
        }
        if s.una >= s.next_seq {
            s.rto_deadline = None;
            return;
        }
        self.counters.timeouts += 1;
        let mut lost = 0u64;
        for seq in s.una..s.next_seq {
            let seg = &mut s.segs[seq as usize];
            if seg.state == SegState::InFlight {
                seg.state = SegState::Lost;
                s.rtx.insert(seq);
                lost += 1;
            }
        }
        s.pipe = 0;
        s.tx_log.clear();
        s.loss_window.add(now, lost, lost);
        s.cca.timeout();
        s.fast_recovery = false;
        s.episode_end = s.next_seq;
        s.backoff += 1;
        s.rto_deadline = Some(now + s.rto_ns());
        s.customize(now);
        self.try_send(f);
        self.arm_rto(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_bound_brackets_the_estimate() {
        assert_eq!(wilson_upper(0, 0, 1.645), 1.0);
        let ub = wilson_upper(60, 1000, 1.645);
        assert!(ub > 0.06 && ub < 0.08, "{ub}");
        // tighter with more data
        assert!(wilson_upper(600, 10_000, 1.645) < ub);
        assert!(wilson_upper(0, 1000, 1.645) > 0.0);
    }

    #[test]
    fn loss_window_forgets_old_buckets() {
        let mut w = LossWindow::default();
        w.add(0, 100, 50);
        w.add(LOSS_WINDOW_NS - 1, 100, 0);
        assert_eq!((w.resolved, w.lost), (200, 50));
        w.expire(LOSS_WINDOW_NS + LOSS_BUCKET_NS);
        assert_eq!((w.resolved, w.lost), (100, 0));
    }
}
