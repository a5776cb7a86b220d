//! The event loop.
//!
//! Time is kept in integer nanoseconds. A node senses an occupation when
//! the source lies within the carrier-sense range and the occupied channels
//! overlap the block it contends on. Backoff follows the slotted model:
//! each busy period seen during the countdown consumes one slot.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{general_decide, threshold_decide, widest_common_decide};
use crate::error::SimError;
use crate::harness::metrics::{
    convergence_latency, jain_index, ChannelObservation, MetricsRecord, StationMetrics, WidthStats,
};
use crate::markov::{solve_fixed_point, kappa_from_level_failure, ModelParams, SolverConfig};
use crate::policy::{PolicyState, StatTable};

use super::config::{
    AckWidth, IbacConfig, NodeKind, NodeSpec, PolicyConfig, RewardMode, SimConfig, Traffic,
};
use super::geometry::{distance, ranges_for_level, GeometryParams};
use super::mac::{block_mask, cascade_acquire, dbca_acquire, dcf_backoff_step, mask_range, width_class};
use super::queue::EventQueue;

const STREAM_PLACEMENT: u64 = 1;
const STREAM_BACKOFF: u64 = 2;
const STREAM_SNR: u64 = 3;
const STREAM_POLICY: u64 = 4;
const STREAM_AMBIENT: u64 = 5;

fn ns(us: f64) -> u64 {
    (us * 1000.0).round() as u64
}

fn us(ns: u64) -> f64 {
    ns as f64 / 1000.0
}

fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 32) | index);
    rng
}

/// How a transmission attempt ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Hit by a node that was idle when the attempt started and that only
    /// the widened interference range covers.
    Owrp,
    Simultaneous,
    OutOfRange,
}

impl Outcome {
    pub fn tag(&self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Owrp => "collision-owrp",
            Outcome::Simultaneous => "collision-simultaneous",
            Outcome::OutOfRange => "out-of-range",
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success)
    }
}

/// One resolved data transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct TxAttempt {
    pub src: u32,
    pub dst: u32,
    /// Requested level.
    pub level: u8,
    /// Width class used.
    pub width: u8,
    /// µs.
    pub start: f64,
    /// End of the data frame, µs.
    pub end: f64,
    pub channels: (u8, u8),
    pub fallback: bool,
    pub outcome: Outcome,
}

impl TxAttempt {
    pub fn trace_header() -> &'static str {
        "start_us,end_us,src,dst,level,channels,outcome"
    }

    pub fn trace_line(&self) -> String {
        let tag = if self.fallback {
            format!("{}+secondary-busy-fallback", self.outcome.tag())
        } else {
            self.outcome.tag().to_string()
        };
        format!(
            "{:.3},{:.3},{},{},{},{}-{},{}",
            self.start, self.end, self.src, self.dst, self.level, self.channels.0, self.channels.1, tag
        )
    }
}

/// An interferer as seen from a receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interferer {
    pub start: u64,
    pub distance: f64,
}

/// Classify an attempt of width class `width` that began at `start`.
/// `interferers` are the overlapping transmissions (in time and channels)
/// whose source lies within the attempt's interference range of the
/// receiver. `link_distance` is the sender-receiver distance under the
/// current SNR.
pub fn resolve_outcome(
    geometry: &GeometryParams,
    width: u8,
    start: u64,
    link_distance: f64,
    interferers: &[Interferer],
) -> Outcome {
    let (tr, _) = ranges_for_level(geometry, width);
    if link_distance > tr {
        return Outcome::OutOfRange;
    }
    if interferers.is_empty() {
        return Outcome::Success;
    }
    let (_, ir1) = ranges_for_level(geometry, 1);
    let close = interferers.iter().any(|i| i.distance <= ir1);
    let late = interferers.iter().any(|i| i.start >= start);
    if !close && late {
        Outcome::Owrp
    } else {
        Outcome::Simultaneous
    }
}

/// Per-link SNR walk, advanced lazily.
#[derive(Debug, Clone)]
struct SnrWalk {
    value: f64,
    steps: u64,
    rng: ChaCha8Rng,
}

impl SnrWalk {
    fn at(&mut self, now: u64, step_ns: u64, lo: f64, hi: f64, step_db: f64) -> f64 {
        let target = now / step_ns;
        while self.steps < target {
            let up = self.rng.gen_bool(0.5);
            let mut v = self.value + if up { step_db } else { -step_db };
            if v > hi {
                v = 2.0 * hi - v;
            }
            if v < lo {
                v = 2.0 * lo - v;
            }
            self.value = v.clamp(lo, hi);
            self.steps += 1;
        }
        self.value
    }
}

#[derive(Debug, Clone, Copy)]
enum Acquire {
    Block(u8),
    Cascade,
}

enum Controller {
    Ibac {
        state: Box<PolicyState>,
        cfg: IbacConfig,
        rings: BTreeMap<(usize, u8), VecDeque<bool>>,
        memo: BTreeMap<(u8, usize, usize), f64>,
    },
    General,
    Threshold(Vec<f64>),
    Fixed(u8),
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    level: u8,
    acquire: Acquire,
    snr: f64,
    bucket: usize,
}

struct Sender {
    node: usize,
    bss: usize,
    contending: bool,
    stage: u32,
    retries: u32,
    counter: u32,
    busy: bool,
    idle_since: u64,
    expiry: Option<u64>,
    gen: u64,
    hol: u64,
    dst: usize,
    cursor: usize,
    sense_mask: u32,
    pending: Option<Pending>,
    rng: ChaCha8Rng,
}

struct Bss {
    ap: usize,
    stas: Vec<usize>,
    primary: u8,
    senders: usize,
    controller: Controller,
    payload_time: u64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum OccKind {
    Data,
    Ack,
    Ambient,
}

struct Occupation {
    src: usize,
    mask: u32,
    start: u64,
    end: u64,
    attempt: usize,
    kind: OccKind,
}

struct Attempt {
    sender: usize,
    src: usize,
    dst: usize,
    pending: Pending,
    width: u8,
    mask: u32,
    start: u64,
    data_end: u64,
    fallback: bool,
    /// Link SNR when the frame went out.
    snr: f64,
    outcome: Option<Outcome>,
}

#[derive(Debug, Clone, Copy)]
enum Event {
    Expire { sender: usize, gen: u64 },
    DataEnd { attempt: usize },
    OccEnd { occ: usize },
    AckStart { attempt: usize },
    AmbientStart { node: usize },
}

#[derive(Default)]
struct Counters {
    attempts: u64,
    delivered: u64,
    owrp: u64,
    simultaneous: u64,
    out_of_range: u64,
    fallbacks: u64,
    dropped: u64,
    level_counts: Vec<u64>,
    width_attempts: Vec<u64>,
    width_failures: Vec<u64>,
    delay_sum: f64,
    delay_count: u64,
    bss0_attempts: u64,
}

struct StationCounters {
    attempts: u64,
    successes: u64,
    bytes: u64,
    delay_sum: f64,
    delay_count: u64,
}

struct Monitor {
    node: usize,
    mask: u32,
    busy: bool,
    idle_since: u64,
    busy_periods: u64,
    idle_slots: u64,
}

struct World {
    cfg: SimConfig,
    ids: Vec<u32>,
    kinds: Vec<NodeKind>,
    dist: Vec<Vec<f64>>,
    hears: Vec<Vec<bool>>,
    node_bss: Vec<usize>,
    bsses: Vec<Bss>,
    senders: Vec<Sender>,
    snr: Vec<Option<SnrWalk>>,
    occs: Vec<Occupation>,
    active: Vec<usize>,
    recent: VecDeque<usize>,
    attempts: Vec<Attempt>,
    queue: EventQueue<Event>,
    now: u64,
    c: Counters,
    stations: Vec<StationCounters>,
    monitor: Monitor,
    plr_series: Vec<(f64, f64)>,
    next_sample: u64,
    keep_trace: bool,
    trace: Vec<TxAttempt>,
    /// Ambient sources are the node indices from here on.
    first_ambient: usize,
    ambient_rng: Vec<ChaCha8Rng>,
    // Timing in ns.
    sigma: u64,
    sifs: u64,
    difs: u64,
    pifs: u64,
    header: u64,
    ack: u64,
    delta: u64,
    lookback: u64,
}

/// Place nodes: explicit list, or two APs `dap` apart with STAs uniform in
/// a disk around each. STA offsets depend only on the seed and the STA's
/// index within its BSS, so layouts at different `dap` share them.
pub fn layout(cfg: &SimConfig) -> Vec<NodeSpec> {
    if !cfg.nodes.is_empty() {
        return cfg.nodes.clone();
    }
    let dap = cfg.dap.unwrap_or(0.0);
    let total = cfg.stations.unwrap_or(0);
    let per = [total.div_ceil(2), total / 2];
    let mut nodes = vec![
        NodeSpec {
            id: 0,
            kind: NodeKind::Ap,
            position: (0.0, 0.0),
            bss: 0,
            primary: 0,
        },
        NodeSpec {
            id: 1,
            kind: NodeKind::Ap,
            position: (dap, 0.0),
            bss: 1,
            primary: cfg.layout.primary_offset,
        },
    ];
    let mut id = 2;
    for (b, &count) in per.iter().enumerate() {
        let ap = nodes[b].position;
        for k in 0..count {
            let mut rng = stream(cfg.seed, STREAM_PLACEMENT, ((b as u64) << 16) | k as u64);
            let r = cfg.layout.sta_radius * rng.gen::<f64>().sqrt();
            let phi = std::f64::consts::TAU * rng.gen::<f64>();
            let r = r.max(1.0_f64.min(cfg.layout.sta_radius));
            nodes.push(NodeSpec {
                id,
                kind: NodeKind::Sta,
                position: (ap.0 + r * phi.cos(), ap.1 + r * phi.sin()),
                bss: b as u32,
                primary: nodes[b].primary,
            });
            id += 1;
        }
    }
    nodes
}

impl World {
    fn new(cfg: &SimConfig, keep_trace: bool) -> Result<Self, SimError> {
        cfg.validate()?;
        let nodes = layout(cfg);
        let first_ambient = nodes.len();
        let mut pos: Vec<(f64, f64)> = nodes.iter().map(|x| x.position).collect();
        pos.extend(cfg.ambient.iter().map(|a| {
            let origin = a
                .anchor
                .and_then(|id| nodes.iter().find(|x| x.id == id))
                .map_or((0.0, 0.0), |x| x.position);
            (origin.0 + a.position.0, origin.1 + a.position.1)
        }));
        let n = pos.len();
        let dist: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| distance(pos[i], pos[j])).collect())
            .collect();
        let hears = dist
            .iter()
            .map(|row| row.iter().map(|&d| d <= cfg.geometry.cr).collect())
            .collect();

        let ap_ids: Vec<u32> = nodes
            .iter()
            .filter(|x| x.kind == NodeKind::Ap)
            .map(|x| x.id)
            .collect();
        let node_bss: Vec<usize> = nodes
            .iter()
            .map(|x| ap_ids.iter().position(|&a| a == x.bss).unwrap_or(0))
            .chain(std::iter::repeat(0).take(cfg.ambient.len()))
            .collect();
        let u = cfg.mac.levels;
        let mut bsses: Vec<Bss> = ap_ids
            .iter()
            .enumerate()
            .map(|(b, &aid)| {
                let ap = nodes.iter().position(|x| x.id == aid).unwrap_or(0);
                let stas: Vec<usize> = (0..first_ambient)
                    .filter(|&i| nodes[i].kind == NodeKind::Sta && node_bss[i] == b)
                    .collect();
                Bss {
                    ap,
                    stas,
                    primary: nodes[ap].primary,
                    senders: 0,
                    controller: Controller::General,
                    payload_time: 0,
                }
            })
            .collect();

        for (b, bss) in bsses.iter_mut().enumerate() {
            bss.senders = match cfg.traffic {
                Traffic::Uplink => bss.stas.len(),
                Traffic::Downlink => usize::from(!bss.stas.is_empty()),
            };
            bss.controller = match &cfg.policy {
                PolicyConfig::Ibac(ib) => {
                    let table = StatTable::new(ib.buckets, u)?.with_history_len(ib.history_len);
                    let seed = stream(cfg.seed, STREAM_POLICY, b as u64).gen();
                    Controller::Ibac {
                        state: Box::new(PolicyState::new(table, ib.t_init, seed)),
                        cfg: ib.clone(),
                        rings: BTreeMap::new(),
                        memo: BTreeMap::new(),
                    }
                }
                PolicyConfig::General => Controller::General,
                PolicyConfig::Threshold { thresholds } => Controller::Threshold(thresholds.clone()),
                PolicyConfig::Static { level } => Controller::Fixed(*level),
                PolicyConfig::WidestCommon => {
                    let caps: Vec<u8> = bss
                        .stas
                        .iter()
                        .map(|&s| cfg.geometry.max_level_for(dist[s][bss.ap], u))
                        .collect();
                    Controller::Fixed(widest_common_decide(&caps).unwrap_or(1))
                }
            };
        }

        let mut senders = Vec::new();
        for (b, bss) in bsses.iter().enumerate() {
            let pairs: Vec<(usize, usize)> = match cfg.traffic {
                Traffic::Uplink => bss.stas.iter().map(|&s| (s, bss.ap)).collect(),
                Traffic::Downlink if !bss.stas.is_empty() => vec![(bss.ap, bss.stas[0])],
                Traffic::Downlink => vec![],
            };
            for (node, dst) in pairs {
                senders.push(Sender {
                    node,
                    bss: b,
                    contending: false,
                    stage: 0,
                    retries: 0,
                    counter: 0,
                    busy: true,
                    idle_since: 0,
                    expiry: None,
                    gen: 0,
                    hol: 0,
                    dst,
                    cursor: 0,
                    sense_mask: 0,
                    pending: None,
                    rng: stream(cfg.seed, STREAM_BACKOFF, node as u64),
                });
            }
        }

        let sp = &cfg.snr_process;
        let snr = (0..first_ambient)
            .map(|i| {
                (nodes[i].kind == NodeKind::Sta).then(|| SnrWalk {
                    value: cfg
                        .geometry
                        .snr_at(dist[i][bsses[node_bss[i]].ap])
                        .clamp(sp.snr_min, sp.snr_max),
                    steps: 0,
                    rng: stream(cfg.seed, STREAM_SNR, i as u64),
                })
            })
            .collect();

        let t = &cfg.mac.timing;
        let levels = u as usize;
        let monitor_node = bsses.first().map(|b| b.ap).unwrap_or(0);
        let monitor_mask = block_mask(bsses.first().map(|b| b.primary).unwrap_or(0), 1);
        let longest = ns(t.header + cfg.mac.payload_us(1) + t.delta + t.sifs + t.ack + t.delta);
        let mut ids: Vec<u32> = nodes.iter().map(|x| x.id).collect();
        ids.extend((0..cfg.ambient.len() as u32).map(|k| u32::MAX - k));
        Ok(Self {
            ids,
            kinds: nodes.iter().map(|x| x.kind).collect(),
            dist,
            hears,
            node_bss,
            bsses,
            senders,
            snr,
            occs: Vec::new(),
            active: Vec::new(),
            recent: VecDeque::new(),
            attempts: Vec::new(),
            queue: EventQueue::new(),
            now: 0,
            c: Counters {
                level_counts: vec![0; levels],
                width_attempts: vec![0; levels],
                width_failures: vec![0; levels],
                ..Default::default()
            },
            stations: (0..n)
                .map(|_| StationCounters {
                    attempts: 0,
                    successes: 0,
                    bytes: 0,
                    delay_sum: 0.0,
                    delay_count: 0,
                })
                .collect(),
            monitor: Monitor {
                node: monitor_node,
                mask: monitor_mask,
                busy: false,
                idle_since: 0,
                busy_periods: 0,
                idle_slots: 0,
            },
            plr_series: Vec::new(),
            next_sample: ns(cfg.metrics.plr_sample_us),
            keep_trace,
            trace: Vec::new(),
            first_ambient,
            ambient_rng: (0..cfg.ambient.len())
                .map(|k| stream(cfg.seed, STREAM_AMBIENT, k as u64))
                .collect(),
            sigma: ns(t.sigma),
            sifs: ns(t.sifs),
            difs: ns(t.difs),
            pifs: ns(t.pifs()),
            header: ns(t.header),
            ack: ns(t.ack),
            delta: ns(t.delta),
            lookback: 2 * longest + ns(t.pifs()),
            cfg: cfg.clone(),
        })
    }

    fn link_snr(&mut self, sta: usize) -> f64 {
        let sp = self.cfg.snr_process;
        let step = ns(sp.step_interval_us).max(1);
        let now = self.now;
        match self.snr[sta].as_mut() {
            Some(w) => w.at(now, step, sp.snr_min, sp.snr_max, sp.step_db),
            None => sp.snr_max,
        }
    }

    /// The STA end of a sender-receiver pair.
    fn sta_of(&self, a: usize, b: usize) -> usize {
        if self.kinds[a] == NodeKind::Sta {
            a
        } else {
            b
        }
    }

    fn occupation_sensed(&self, node: usize, o: &Occupation, mask: u32) -> bool {
        o.mask & mask != 0 && (o.src == node || self.hears[node][o.src])
    }

    fn busy_for(&self, node: usize, mask: u32) -> bool {
        self.active
            .iter()
            .any(|&i| self.occupation_sensed(node, &self.occs[i], mask))
    }

    /// No sensed occupation on `mask` during `(now - PIFS, now)`. Frames
    /// starting exactly now are not yet detectable.
    fn pifs_idle(&self, node: usize, mask: u32) -> bool {
        let from = self.now.saturating_sub(self.pifs);
        !self.active.iter().chain(self.recent.iter()).any(|&i| {
            let o = &self.occs[i];
            o.start < self.now && o.end > from && self.occupation_sensed(node, o, mask)
        })
    }

    fn decide(&mut self, s: usize) -> Pending {
        let (node, dst, b) = (self.senders[s].node, self.senders[s].dst, self.senders[s].bss);
        let sta = self.sta_of(node, dst);
        let snr = self.link_snr(sta);
        let u = self.cfg.mac.levels;
        match &mut self.bsses[b].controller {
            Controller::Ibac { state, .. } => {
                let d = state.decide(snr);
                Pending {
                    level: d.level,
                    acquire: Acquire::Block(d.level),
                    snr,
                    bucket: d.bucket.index,
                }
            }
            Controller::General => Pending {
                level: general_decide(u),
                acquire: Acquire::Cascade,
                snr,
                bucket: 0,
            },
            Controller::Threshold(t) => {
                let level = threshold_decide(snr, t, u);
                Pending {
                    level,
                    acquire: Acquire::Block(level),
                    snr,
                    bucket: 0,
                }
            }
            Controller::Fixed(level) => Pending {
                level: *level,
                acquire: Acquire::Block(*level),
                snr,
                bucket: 0,
            },
        }
    }

    fn begin_contention(&mut self, s: usize) {
        let pending = self.decide(s);
        let primary = self.bsses[self.senders[s].bss].primary;
        let cfg_mac = &self.cfg.mac;
        let (cw, m) = (cfg_mac.cw_min, cfg_mac.max_stage);
        let snd = &mut self.senders[s];
        snd.sense_mask = match pending.acquire {
            Acquire::Cascade => block_mask(primary, 1),
            Acquire::Block(c) => block_mask(primary, c),
        };
        snd.pending = Some(pending);
        snd.counter = dcf_backoff_step(snd.stage, cw, m, &mut snd.rng);
        snd.contending = true;
        snd.busy = true;
        snd.expiry = None;
        snd.gen += 1;
    }

    /// Re-evaluate carrier sense for every contender and the monitor.
    fn resense(&mut self) {
        let now = self.now;
        for s in 0..self.senders.len() {
            if !self.senders[s].contending {
                continue;
            }
            let busy = self.busy_for(self.senders[s].node, self.senders[s].sense_mask);
            let (difs, sigma) = (self.difs, self.sigma);
            let snd = &mut self.senders[s];
            if busy == snd.busy {
                continue;
            }
            snd.busy = busy;
            if busy {
                match snd.expiry {
                    Some(e) if e == now => {}
                    Some(_) => {
                        let r0 = snd.idle_since + difs;
                        if now >= r0 {
                            let elapsed = ((now - r0) / sigma) as u32;
                            snd.counter -= elapsed + 1;
                        }
                        snd.expiry = None;
                        snd.gen += 1;
                    }
                    None => {}
                }
            } else {
                snd.idle_since = now;
                let e = now + difs + snd.counter as u64 * sigma;
                snd.expiry = Some(e);
                snd.gen += 1;
                let (gen, key) = (snd.gen, self.ids[snd.node] as u64);
                self.queue.push(e, key, Event::Expire { sender: s, gen });
            }
        }
        let busy = self.busy_for(self.monitor.node, self.monitor.mask);
        let mon = &mut self.monitor;
        if busy != mon.busy {
            mon.busy = busy;
            if busy {
                let gap = now - mon.idle_since;
                if gap >= self.difs || mon.busy_periods == 0 {
                    mon.busy_periods += 1;
                    let extra = gap.saturating_sub(self.difs);
                    mon.idle_slots += (extra + self.sigma / 2) / self.sigma;
                }
            } else {
                mon.idle_since = now;
            }
        }
    }

    fn start_occupation(&mut self, src: usize, mask: u32, end: u64, attempt: usize, kind: OccKind) {
        let occ = self.occs.len();
        self.occs.push(Occupation {
            src,
            mask,
            start: self.now,
            end,
            attempt,
            kind,
        });
        self.active.push(occ);
        self.queue.push(end, self.ids[src] as u64, Event::OccEnd { occ });
    }

    fn on_expire(&mut self, s: usize, gen: u64) {
        let snd = &self.senders[s];
        if !snd.contending || snd.gen != gen || snd.expiry != Some(self.now) {
            return;
        }
        let (node, dst, b) = (snd.node, snd.dst, snd.bss);
        let pending = snd.pending.expect("contending sender has a decision");
        let primary = self.bsses[b].primary;
        let u = self.cfg.mac.levels;
        let plan = match pending.acquire {
            Acquire::Cascade => cascade_acquire(primary, u, |m| self.pifs_idle(node, m)),
            Acquire::Block(c) => dbca_acquire(primary, c, u, |m| self.pifs_idle(node, m)),
        };
        let width = width_class(plan.mask);
        let payload = ns(self.cfg.mac.payload_us(plan.mask.count_ones()));
        let data_end = self.now + self.header + payload;
        let snr = self.link_snr(self.sta_of(node, dst));
        let attempt = self.attempts.len();
        self.attempts.push(Attempt {
            sender: s,
            src: node,
            dst,
            pending,
            width,
            mask: plan.mask,
            start: self.now,
            data_end,
            fallback: plan.fallback,
            snr,
            outcome: None,
        });
        let snd = &mut self.senders[s];
        snd.contending = false;
        snd.expiry = None;
        self.start_occupation(node, plan.mask, data_end + self.delta, attempt, OccKind::Data);
        self.queue
            .push(data_end, self.ids[dst] as u64, Event::DataEnd { attempt });
        self.resense();
    }

    fn on_data_end(&mut self, a: usize) {
        let att = &self.attempts[a];
        let (src, dst, width, start, end, mask) =
            (att.src, att.dst, att.width, att.start, att.data_end, att.mask);
        let g = self.cfg.geometry;
        let (_, ir) = ranges_for_level(&g, width);
        let interferers: Vec<Interferer> = self
            .active
            .iter()
            .chain(self.recent.iter())
            .map(|&i| &self.occs[i])
            .filter(|o| {
                o.attempt != a
                    && o.src != src
                    && o.mask & mask != 0
                    && o.start < end
                    && o.end > start
                    && self.dist[dst][o.src] <= ir
            })
            .map(|o| Interferer {
                start: o.start,
                distance: self.dist[dst][o.src],
            })
            .collect();
        let d_eff = g.effective_distance(self.dist[src][dst], self.attempts[a].snr);
        let outcome = resolve_outcome(&g, width, start, d_eff, &interferers);
        self.attempts[a].outcome = Some(outcome);

        let att = &self.attempts[a];
        let b = self.senders[att.sender].bss;
        let level = att.pending.level;
        let c = &mut self.c;
        c.attempts += 1;
        c.level_counts[level as usize - 1] += 1;
        c.width_attempts[width as usize - 1] += 1;
        if att.fallback {
            c.fallbacks += 1;
        }
        if b == 0 {
            c.bss0_attempts += 1;
        }
        self.stations[src].attempts += 1;
        match outcome {
            Outcome::Success => {
                c.delivered += 1;
                self.stations[src].successes += 1;
                self.stations[src].bytes += self.cfg.mac.payload_bytes as u64;
                self.bsses[b].payload_time += end - start - self.header;
            }
            Outcome::Owrp => c.owrp += 1,
            Outcome::Simultaneous => c.simultaneous += 1,
            Outcome::OutOfRange => c.out_of_range += 1,
        }
        if !outcome.is_success() {
            c.width_failures[width as usize - 1] += 1;
        }
        if self.keep_trace {
            self.trace.push(TxAttempt {
                src: self.ids[src],
                dst: self.ids[dst],
                level,
                width,
                start: us(start),
                end: us(end),
                channels: mask_range(mask),
                fallback: att.fallback,
                outcome,
            });
        }
        self.feed_policy(a);
        if outcome.is_success() {
            let ack_start = end + self.delta + self.sifs;
            self.queue
                .push(ack_start, self.ids[dst] as u64, Event::AckStart { attempt: a });
        }
    }

    fn feed_policy(&mut self, a: usize) {
        let att = &self.attempts[a];
        let b = self.senders[att.sender].bss;
        let success = att.outcome.is_some_and(|o| o.is_success());
        let (pending, width) = (att.pending, att.width);
        let mac = self.cfg.mac.clone();
        let n = self.bsses[b].senders as u32;
        let Controller::Ibac {
            state,
            cfg,
            rings,
            memo,
        } = &mut self.bsses[b].controller
        else {
            return;
        };
        let u = mac.levels;
        let channels = 1u32 << (width - 1);
        let rate_share = channels as f64 / mac.channel_count() as f64;
        let timing = mac.timing.with_payload(mac.payload_us(channels));
        let reward = match cfg.reward {
            RewardMode::Measured => {
                if success {
                    let t_s = timing.header
                        + timing.payload
                        + timing.sifs
                        + timing.delta
                        + timing.ack
                        + timing.difs
                        + timing.delta;
                    rate_share * timing.payload / t_s
                } else {
                    0.0
                }
            }
            RewardMode::Analytic => {
                let ring = rings.entry((pending.bucket, width)).or_default();
                ring.push_back(!success);
                if ring.len() > cfg.failure_window {
                    ring.pop_front();
                }
                let fails = ring.iter().filter(|&&f| f).count();
                let len = ring.len();
                *memo.entry((width, fails, len)).or_insert_with(|| {
                    let f = fails as f64 / len as f64;
                    let kappa = kappa_from_level_failure(f, width as u32, u as u32);
                    let params = ModelParams::new(n.max(1), mac.cw_min, mac.max_stage, u as u32, kappa);
                    let t = solve_fixed_point(&params, &timing, &SolverConfig::default())
                        .map(|s| s.throughput)
                        .unwrap_or(0.0);
                    (t * rate_share * (1.0 - f)).clamp(0.0, 1.0)
                })
            }
        };
        // The level is in range and the reward clamped, so this cannot fail.
        let _ = state.update(pending.snr, pending.level, reward);
    }

    fn on_ack_start(&mut self, a: usize) {
        let att = &self.attempts[a];
        let (dst, mask) = (att.dst, att.mask);
        let b = self.node_bss[dst];
        let ack_mask = match self.cfg.mac.ack_width {
            AckWidth::Primary => block_mask(self.bsses[b].primary, 1),
            AckWidth::Data => mask,
        };
        let end = self.now + self.ack + self.delta;
        self.start_occupation(dst, ack_mask, end, a, OccKind::Ack);
        self.resense();
    }

    fn ambient_draw(&mut self, node: usize, busy: bool) -> u64 {
        let k = node - self.first_ambient;
        let src = self.cfg.ambient[k];
        let mean = if busy { src.busy_us } else { src.idle_us };
        let u: f64 = self.ambient_rng[k].gen();
        ns(-mean * (1.0 - u).ln()).max(1)
    }

    fn schedule_ambient(&mut self, node: usize) {
        let at = self.now + self.ambient_draw(node, false);
        self.queue
            .push(at, self.ids[node] as u64, Event::AmbientStart { node });
    }

    fn on_ambient_start(&mut self, node: usize) {
        let channel = self.cfg.ambient[node - self.first_ambient].channel;
        let mask = block_mask(channel, 1);
        if self.busy_for(node, mask) || !self.pifs_idle(node, mask) {
            let k = node - self.first_ambient;
            let slots = self.ambient_rng[k].gen_range(0..self.cfg.mac.cw_min as u64);
            let at = self.now + self.difs + slots * self.sigma;
            self.queue
                .push(at, self.ids[node] as u64, Event::AmbientStart { node });
            return;
        }
        let end = self.now + self.ambient_draw(node, true);
        self.start_occupation(node, mask, end, usize::MAX, OccKind::Ambient);
        self.resense();
    }

    fn on_occ_end(&mut self, occ: usize) {
        if let Some(pos) = self.active.iter().position(|&i| i == occ) {
            self.active.swap_remove(pos);
        }
        self.recent.push_back(occ);
        while let Some(&front) = self.recent.front() {
            if self.occs[front].end + self.lookback < self.now {
                self.recent.pop_front();
            } else {
                break;
            }
        }
        let o = &self.occs[occ];
        if o.kind == OccKind::Ambient {
            let src = o.src;
            self.schedule_ambient(src);
            self.resense();
            return;
        }
        let a = o.attempt;
        let success = self.attempts[a].outcome.is_some_and(|x| x.is_success());
        let finished = match o.kind {
            OccKind::Data => !success,
            OccKind::Ack | OccKind::Ambient => true,
        };
        if finished && self.attempts[a].outcome.is_some() {
            self.finish(a, success);
        }
        self.resense();
    }

    fn finish(&mut self, a: usize, success: bool) {
        let s = self.attempts[a].sender;
        let now = self.now;
        let (m, limit) = (self.cfg.mac.max_stage, self.cfg.mac.retry_limit);
        let snd = &mut self.senders[s];
        let mut new_frame = false;
        if success {
            let delay = us(now - snd.hol);
            self.c.delay_sum += delay;
            self.c.delay_count += 1;
            self.stations[snd.node].delay_sum += delay;
            self.stations[snd.node].delay_count += 1;
            new_frame = true;
        } else {
            snd.retries += 1;
            if limit.is_some_and(|l| snd.retries > l) {
                self.c.dropped += 1;
                new_frame = true;
            } else {
                snd.stage = (snd.stage + 1).min(m);
            }
        }
        if new_frame {
            snd.stage = 0;
            snd.retries = 0;
            snd.hol = now;
            if self.cfg.traffic == Traffic::Downlink {
                let stas = &self.bsses[snd.bss].stas;
                snd.cursor = (snd.cursor + 1) % stas.len();
                snd.dst = stas[snd.cursor];
            }
        }
        self.begin_contention(s);
    }

    fn cumulative_plr(&self) -> f64 {
        if self.c.attempts == 0 {
            0.0
        } else {
            100.0 * (self.c.attempts - self.c.delivered) as f64 / self.c.attempts as f64
        }
    }

    fn sample_until(&mut self, t: u64) {
        let step = ns(self.cfg.metrics.plr_sample_us).max(1);
        while self.next_sample < t {
            let p = self.cumulative_plr();
            self.plr_series.push((us(self.next_sample) / 1000.0, p));
            self.next_sample += step;
        }
    }

    fn run(&mut self) {
        let duration = ns(self.cfg.duration);
        for s in 0..self.senders.len() {
            self.begin_contention(s);
        }
        for node in self.first_ambient..self.ids.len() {
            self.schedule_ambient(node);
        }
        self.resense();
        while let Some(t) = self.queue.peek_time() {
            if t > duration {
                break;
            }
            self.sample_until(t);
            let (t, ev) = self.queue.pop().expect("peeked");
            self.now = t;
            match ev {
                Event::Expire { sender, gen } => self.on_expire(sender, gen),
                Event::DataEnd { attempt } => self.on_data_end(attempt),
                Event::AckStart { attempt } => self.on_ack_start(attempt),
                Event::OccEnd { occ } => self.on_occ_end(occ),
                Event::AmbientStart { node } => self.on_ambient_start(node),
            }
        }
        self.sample_until(duration + 1);
        self.now = duration;
        if !self.monitor.busy {
            let gap = duration - self.monitor.idle_since;
            self.monitor.idle_slots += gap.saturating_sub(self.difs) / self.sigma;
        }
    }

    fn record(&self) -> MetricsRecord {
        let c = &self.c;
        let dur_us = self.cfg.duration;
        let senders: Vec<usize> = self.senders.iter().map(|s| s.node).collect();
        let per_station: Vec<StationMetrics> = senders
            .iter()
            .map(|&i| {
                let st = &self.stations[i];
                StationMetrics {
                    id: self.ids[i],
                    attempts: st.attempts,
                    successes: st.successes,
                    bytes_delivered: st.bytes,
                    throughput_mbps: st.bytes as f64 * 8.0 / dur_us,
                    delay_proxy_us: (st.delay_count > 0).then(|| st.delay_sum / st.delay_count as f64),
                }
            })
            .collect();
        let tputs: Vec<f64> = per_station.iter().map(|s| s.throughput_mbps).collect();
        let total: f64 = tputs.iter().sum();
        let frac = |counts: &[u64]| -> Vec<f64> {
            let n: u64 = counts.iter().sum();
            counts
                .iter()
                .map(|&k| if n == 0 { 0.0 } else { k as f64 / n as f64 })
                .collect()
        };
        let active_bss: Vec<&Bss> = self.bsses.iter().filter(|b| b.senders > 0).collect();
        let normalized = if active_bss.is_empty() {
            0.0
        } else {
            active_bss
                .iter()
                .map(|b| us(b.payload_time) / dur_us)
                .sum::<f64>()
                / active_bss.len() as f64
        };
        let plr_series = self.plr_series.clone();
        let m = &self.cfg.metrics;
        let convergence =
            convergence_latency(&plr_series, m.convergence_window_ms, m.convergence_var_threshold)
                .ok()
                .flatten();
        let mon = &self.monitor;
        let slots = mon.busy_periods + mon.idle_slots;
        let n0 = self.bsses.first().map(|b| b.senders).unwrap_or(0);
        MetricsRecord {
            policy: self.cfg.policy.label(),
            seed: self.cfg.seed,
            stations: self.cfg.stations.unwrap_or(
                self.kinds.iter().filter(|&&k| k == NodeKind::Sta).count() as u32,
            ),
            dap: self.cfg.dap,
            duration_us: dur_us,
            attempts: c.attempts,
            delivered: c.delivered,
            collisions_owrp: c.owrp,
            collisions_simultaneous: c.simultaneous,
            out_of_range: c.out_of_range,
            fallbacks: c.fallbacks,
            dropped_frames: c.dropped,
            throughput_mbps: total,
            avg_throughput_mbps: if tputs.is_empty() {
                0.0
            } else {
                total / tputs.len() as f64
            },
            normalized_throughput: normalized,
            plr: self.cumulative_plr(),
            delay_proxy_us: (c.delay_count > 0).then(|| c.delay_sum / c.delay_count as f64),
            jain: jain_index(&tputs),
            level_pdf: frac(&c.level_counts),
            bandwidth_pdf: frac(&c.width_attempts),
            per_width: (0..c.width_attempts.len())
                .map(|k| WidthStats {
                    width: k as u8 + 1,
                    attempts: c.width_attempts[k],
                    failures: c.width_failures[k],
                })
                .collect(),
            owrp_count: c.owrp,
            convergence_latency_ms: convergence,
            plr_series,
            observed: ChannelObservation {
                virtual_slots: slots,
                busy_slots: mon.busy_periods,
                busy_prob: if slots == 0 {
                    0.0
                } else {
                    mon.busy_periods as f64 / slots as f64
                },
                access_prob: if slots == 0 || n0 == 0 {
                    0.0
                } else {
                    c.bss0_attempts as f64 / (n0 as f64 * slots as f64)
                },
                collision_fraction: if c.attempts == 0 {
                    0.0
                } else {
                    (c.attempts - c.delivered) as f64 / c.attempts as f64
                },
            },
            per_station,
        }
    }
}

/// Run one simulation.
pub fn run(config: &SimConfig) -> Result<MetricsRecord, SimError> {
    let mut world = World::new(config, false)?;
    world.run();
    Ok(world.record())
}

/// Run one simulation and keep every resolved attempt.
pub fn run_with_trace(config: &SimConfig) -> Result<(MetricsRecord, Vec<TxAttempt>), SimError> {
    let mut world = World::new(config, true)?;
    world.run();
    let record = world.record();
    Ok((record, world.trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::PolicyConfig;

    fn g() -> GeometryParams {
        GeometryParams {
            tr_base: 100.0,
            ir_base: 90.0,
            tr_shrink: 0.8,
            ir_grow: 1.25,
            ..Default::default()
        }
    }

    #[test]
    fn outcome_rules() {
        let geo = g();
        assert_eq!(resolve_outcome(&geo, 3, 100, 50.0, &[]), Outcome::Success);
        assert_eq!(resolve_outcome(&geo, 3, 100, 70.0, &[]), Outcome::OutOfRange);
        let late_far = Interferer {
            start: 150,
            distance: 120.0,
        };
        assert_eq!(resolve_outcome(&geo, 3, 100, 50.0, &[late_far]), Outcome::Owrp);
        let early_far = Interferer {
            start: 50,
            distance: 120.0,
        };
        assert_eq!(
            resolve_outcome(&geo, 3, 100, 50.0, &[early_far]),
            Outcome::Simultaneous
        );
        let late_near = Interferer {
            start: 150,
            distance: 40.0,
        };
        assert_eq!(
            resolve_outcome(&geo, 3, 100, 50.0, &[late_far, late_near]),
            Outcome::Simultaneous
        );
    }

    #[test]
    fn snr_walk_stays_in_range() {
        let mut w = SnrWalk {
            value: 25.0,
            steps: 0,
            rng: ChaCha8Rng::seed_from_u64(3),
        };
        for k in 0..2000u64 {
            let v = w.at(k * 10, 10, 25.0, 50.0, 1.0);
            assert!((25.0..=50.0).contains(&v));
        }
    }

    #[test]
    fn single_station_never_fails() {
        let mut cfg = SimConfig::two_bss(100.0, 1, PolicyConfig::Static { level: 1 }, 5);
        cfg.duration = 100_000.0;
        let rec = run(&cfg).unwrap();
        assert!(rec.attempts > 100);
        assert_eq!(rec.plr, 0.0);
        assert!(rec.is_consistent());
    }

    #[test]
    fn one_slot_run_is_well_formed() {
        let mut cfg = SimConfig::two_bss(100.0, 4, PolicyConfig::General, 5);
        cfg.duration = 9.0;
        let rec = run(&cfg).unwrap();
        assert_eq!(rec.attempts, 0);
        assert!(rec.is_consistent());
        assert_eq!(rec.jain, None);
    }

    #[test]
    fn layout_offsets_are_shared_across_dap() {
        let a = layout(&SimConfig::two_bss(80.0, 6, PolicyConfig::General, 9));
        let b = layout(&SimConfig::two_bss(160.0, 6, PolicyConfig::General, 9));
        assert_eq!(a.len(), 8);
        for (x, y) in a.iter().zip(&b) {
            let ax = x.position.0 - if x.bss == 1 { 80.0 } else { 0.0 };
            let bx = y.position.0 - if y.bss == 1 { 160.0 } else { 0.0 };
            assert!((ax - bx).abs() < 1e-9);
            assert_eq!(x.position.1, y.position.1);
        }
    }
}
