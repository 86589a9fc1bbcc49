//! Discrete-event simulation of an application on a tier chain.
//!
//! Nodes serve stages first-come first-served while the running stages'
//! vCPU shares fit the tier's capacity. Each hop direction shares its
//! bandwidth equally between active transfers. A unit crossing between
//! tiers sends its `data_in` hop by hop toward the receiver, then the
//! `data_out` reply back, before the next stage starts. Units keep the
//! placement that was active when they were created.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use edgecut_core::{PartitionError, Placement, Problem, ProxyRule};

use crate::monitor::{MetricsSource, Monitor, MonitorConfig, MonitorError};
use crate::scheduler::{CapacityBook, Event, EventKind, Planner, Scheduler, SchedulerConfig};
use crate::trace::{BandwidthProfile, Direction, StepTrace};

/// Frames per second when a frame source does not say.
pub const DEFAULT_FPS: f64 = 30.0;

/// Remaining megabits below which a transfer counts as delivered.
const DONE_MBIT: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyncMode {
    /// One transfer per interval carrying every pending record.
    #[default]
    Batched,
    /// One transfer per record, each paying the overhead.
    PerRecord,
}

fn default_fps() -> f64 {
    DEFAULT_FPS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Workload {
    /// A camera emitting one unit per frame.
    Frames {
        pipeline: String,
        #[serde(default = "default_fps")]
        fps: f64,
        #[serde(default)]
        start_s: f64,
        #[serde(default)]
        stop_s: Option<f64>,
    },
    /// A file sent in `chunks` sequential units; the next chunk leaves once
    /// the previous one has reached its second stage.
    FileUpload {
        pipeline: String,
        chunks: u32,
        #[serde(default)]
        start_s: f64,
    },
}

impl Workload {
    pub fn pipeline(&self) -> &str {
        match self {
            Workload::Frames { pipeline, .. } | Workload::FileUpload { pipeline, .. } => pipeline,
        }
    }
}

/// Everything a run needs besides the run options.
#[derive(Clone, Debug, PartialEq)]
pub struct SimSetup {
    /// The profiled application, already rewritten with any proxies.
    pub problem: Problem,
    pub proxies: Vec<ProxyRule>,
    /// vCPUs per tier id.
    pub vcpus: BTreeMap<String, f64>,
    /// Bandwidth traces keyed by `(hop, direction)`; hop `k` joins ranks
    /// `k` and `k + 1`.
    pub traces: BTreeMap<(usize, Direction), StepTrace>,
    pub workloads: Vec<Workload>,
    pub scheduler: SchedulerConfig,
    pub monitor: MonitorConfig,
    pub planner: Planner,
    /// Fixed placement from t = 0 instead of running the scheduler.
    pub placement: Option<Placement>,
}

impl SimSetup {
    /// A setup with 4 vCPUs per tier and default configuration.
    pub fn new(problem: Problem) -> Self {
        let vcpus = problem
            .tiers
            .tiers()
            .iter()
            .map(|t| (t.id.clone(), 4.0))
            .collect();
        Self {
            problem,
            proxies: Vec::new(),
            vcpus,
            traces: BTreeMap::new(),
            workloads: Vec::new(),
            scheduler: SchedulerConfig::default(),
            monitor: MonitorConfig::default(),
            planner: Planner::default(),
            placement: None,
        }
    }

    pub fn with_workload(mut self, w: Workload) -> Self {
        self.workloads.push(w);
        self
    }

    pub fn with_placement(mut self, p: Placement) -> Self {
        self.placement = Some(p);
        self
    }

    pub fn with_trace(mut self, hop: usize, dir: Direction, trace: StepTrace) -> Self {
        self.traces.insert((hop, dir), trace);
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let p = &self.problem;
        p.validate()?;
        self.scheduler.validate().map_err(SimError::Invalid)?;
        self.monitor.validate().map_err(SimError::Invalid)?;
        for t in p.tiers.tiers() {
            let cap = self.vcpus.get(&t.id).copied().unwrap_or(0.0);
            for m in &p.app.microservices {
                if m.can_run_at(&t.id) && m.vcpu_share > cap {
                    return Err(SimError::Invalid(format!(
                        "{} needs {} vCPUs but tier {} has {cap}",
                        m.id, m.vcpu_share, t.id
                    )));
                }
            }
        }
        for (i, w) in self.workloads.iter().enumerate() {
            if p.app.pipeline(w.pipeline()).is_none() {
                return Err(SimError::Invalid(format!(
                    "workload {i} references unknown pipeline {}",
                    w.pipeline()
                )));
            }
            match w {
                Workload::Frames { fps, start_s, stop_s, .. } => {
                    if !(*fps > 0.0) || !(*start_s >= 0.0) || stop_s.is_some_and(|s| s < *start_s) {
                        return Err(SimError::Invalid(format!("workload {i} has a bad rate or window")));
                    }
                }
                Workload::FileUpload { chunks, start_s, .. } => {
                    if *chunks == 0 || !(*start_s >= 0.0) {
                        return Err(SimError::Invalid(format!("workload {i} uploads nothing")));
                    }
                }
            }
        }
        for &(hop, _) in self.traces.keys() {
            if hop + 1 >= p.tiers.len() {
                return Err(SimError::Invalid(format!("trace on missing hop {hop}")));
            }
        }
        for r in &self.proxies {
            if p.app.microservice(&r.proxy).is_none() || p.app.microservice(&r.target).is_none() {
                return Err(SimError::Invalid(format!("proxy rule {} is not in the application", r.proxy)));
            }
            if !(r.sync_interval_s > 0.0) || r.batch_size == 0 {
                return Err(SimError::Invalid(format!("proxy rule {} has a bad sync setting", r.proxy)));
            }
        }
        if let Some(pl) = &self.placement {
            pl.validate(&p.app, &p.tiers).map_err(|e| SimError::Invalid(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOptions {
    pub duration_s: f64,
    pub seed: u64,
    /// Re-check scheduled placements every interval.
    pub dynamic: bool,
    /// Service times are scaled by `1 + U(-jitter, jitter)`.
    pub jitter: f64,
    pub sync: SyncMode,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            duration_s: 60.0,
            seed: 0,
            dynamic: true,
            jitter: 0.0,
            sync: SyncMode::Batched,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnitRecord {
    pub id: u64,
    pub pipeline: String,
    pub created_s: f64,
    pub completed_s: Option<f64>,
    /// Start time of each stage.
    pub stage_starts: Vec<f64>,
    /// Tier rank of each pipeline stage, dash-separated.
    pub placement_tag: String,
}

impl UnitRecord {
    pub fn latency_s(&self) -> Option<f64> {
        self.completed_s.map(|c| c - self.created_s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransferRecord {
    pub t_s: f64,
    pub link: String,
    pub direction: Direction,
    pub mbit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinkCounter {
    pub link: String,
    pub direction: Direction,
    /// Megabits moved, counting partial progress of unfinished transfers.
    pub delivered_mbit: f64,
    /// Sizes of finished transfers.
    pub completed_mbit: f64,
    /// Sizes of every transfer started.
    pub sent_mbit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SyncLog {
    pub proxy: String,
    pub target: String,
    /// Record ids in the order the proxy produced them.
    pub emitted: Vec<u64>,
    /// Record ids in the order the master applied them.
    pub master: Vec<u64>,
    /// Megabits of sync traffic moved over hops.
    pub wan_mbit: f64,
    pub retries: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub time_s: f64,
    pub metric: String,
    pub key: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimResults {
    pub app: String,
    pub duration_s: f64,
    pub units: Vec<UnitRecord>,
    pub dropped: u64,
    pub events: Vec<Event>,
    pub transfers: Vec<TransferRecord>,
    pub links: Vec<LinkCounter>,
    pub sync: Vec<SyncLog>,
    /// Every placement that became active, in order.
    pub placements: Vec<Placement>,
    pub metrics: Vec<MetricRow>,
    /// Largest simultaneous vCPU use per tier.
    pub peak_vcpus: BTreeMap<String, f64>,
}

#[derive(Clone, Copy, Debug)]
struct Leg {
    chan: usize,
    mbit: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Owner {
    Unit(usize),
    Sync(usize, u64),
}

#[derive(Debug)]
struct Transfer {
    remaining: f64,
    size: f64,
    owner: Owner,
}

#[derive(Debug)]
struct Channel {
    hop: usize,
    dir: Direction,
    label: String,
    profile: BandwidthProfile,
    active: BTreeMap<u64, Transfer>,
    last: f64,
    version: u64,
    delivered: f64,
    completed: f64,
    sent: f64,
    window_mbit: f64,
    window_busy: f64,
}

impl Channel {
    fn advance(&mut self, now: f64) {
        let mut t = self.last;
        while t < now {
            let end = self.profile.next_change(t).map_or(now, |c| c.min(now));
            if !self.active.is_empty() {
                let bw = self.profile.at(t);
                let dt = end - t;
                let per = bw * dt / self.active.len() as f64;
                for tr in self.active.values_mut() {
                    tr.remaining -= per;
                }
                self.delivered += bw * dt;
                self.window_mbit += bw * dt;
                self.window_busy += dt;
            }
            t = end;
        }
        self.last = self.last.max(now);
    }
}

#[derive(Debug)]
struct Job {
    unit: usize,
    ms: String,
    share: f64,
    service: f64,
}

#[derive(Debug)]
struct Node {
    capacity: f64,
    busy: f64,
    peak: f64,
    queue: VecDeque<Job>,
}

#[derive(Debug)]
struct Unit {
    id: u64,
    pipeline: usize,
    workload: usize,
    chunk: u32,
    created: f64,
    version: usize,
    stage: usize,
    legs: VecDeque<Leg>,
    starts: Vec<f64>,
    completed: Option<f64>,
}

#[derive(Debug)]
struct Batch {
    id: u64,
    records: Vec<u64>,
    legs: VecDeque<Leg>,
    transfer: Option<(usize, u64)>,
}

#[derive(Debug)]
struct SyncState {
    rule: ProxyRule,
    pending: VecDeque<u64>,
    inflight: Vec<Batch>,
    emitted: Vec<u64>,
    master: Vec<u64>,
    wan: f64,
    retries: u64,
    next_batch: u64,
}

#[derive(Debug)]
struct Version {
    placement: Placement,
    ranks: BTreeMap<String, usize>,
}

#[derive(Debug)]
enum Ev {
    NodeDone { node: usize, unit: usize, ms: String, share: f64, service: f64 },
    LinkWake { chan: usize, version: u64 },
    Report,
    Tick,
    Migrate { version: usize },
    Sync { rule: usize },
    Generate { workload: usize, k: u64 },
}

impl Ev {
    fn class(&self) -> u8 {
        match self {
            Ev::NodeDone { .. } | Ev::LinkWake { .. } => 0,
            Ev::Report => 1,
            Ev::Tick => 2,
            Ev::Migrate { .. } => 3,
            Ev::Sync { .. } => 4,
            Ev::Generate { .. } => 5,
        }
    }
}

struct Entry {
    time: f64,
    class: u8,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    // reversed: BinaryHeap pops the earliest entry
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.class.cmp(&self.class))
            .then(other.seq.cmp(&self.seq))
    }
}

struct Sim<'a> {
    setup: &'a SimSetup,
    opts: SimOptions,
    now: f64,
    seq: u64,
    queue: BinaryHeap<Entry>,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    channels: Vec<Channel>,
    units: Vec<Unit>,
    versions: Vec<Version>,
    active: Option<usize>,
    dropped: u64,
    next_transfer: u64,
    transfers: Vec<TransferRecord>,
    syncs: Vec<SyncState>,
    proxy_of: BTreeMap<String, usize>,
    scheduler: Scheduler,
    book: CapacityBook,
    monitor: Monitor,
    events: Vec<Event>,
    metrics: Vec<MetricRow>,
}

/// Runs `setup` for `opts.duration_s` simulated seconds.
pub fn run(setup: &SimSetup, opts: &SimOptions) -> Result<SimResults, SimError> {
    setup.validate()?;
    if !(opts.duration_s >= 0.0) || !(0.0..1.0).contains(&opts.jitter) {
        return Err(SimError::Invalid("duration must be non-negative and jitter in [0, 1)".into()));
    }
    let mut sim = Sim::new(setup, opts)?;
    sim.prime();
    while let Some(top) = sim.queue.peek() {
        if top.time >= opts.duration_s {
            break;
        }
        let e = sim.queue.pop().expect("peeked");
        sim.now = e.time;
        sim.handle(e.ev)?;
    }
    Ok(sim.finish())
}

fn chan_index(hop: usize, dir: Direction) -> usize {
    hop * 2 + usize::from(dir == Direction::Down)
}

impl<'a> Sim<'a> {
    fn new(setup: &'a SimSetup, opts: &SimOptions) -> Result<Self, SimError> {
        let p = &setup.problem;
        let nodes = p
            .tiers
            .tiers()
            .iter()
            .map(|t| Node {
                capacity: setup.vcpus.get(&t.id).copied().unwrap_or(0.0),
                busy: 0.0,
                peak: 0.0,
                queue: VecDeque::new(),
            })
            .collect();
        let mut channels = Vec::new();
        for k in 0..p.tiers.len() - 1 {
            let (lo, hi) = (&p.tiers.at(k).id, &p.tiers.at(k + 1).id);
            let hop = p.net.hop(lo, hi).expect("validated network");
            for (dir, base) in [(Direction::Up, hop.bw_upload), (Direction::Down, hop.bw_download)] {
                let profile = match setup.traces.get(&(k, dir)) {
                    Some(tr) => BandwidthProfile::with_trace(base, tr.clone()),
                    None => BandwidthProfile::constant(base),
                };
                channels.push(Channel {
                    hop: k,
                    dir,
                    label: format!("{lo}-{hi}"),
                    profile,
                    active: BTreeMap::new(),
                    last: 0.0,
                    version: 0,
                    delivered: 0.0,
                    completed: 0.0,
                    sent: 0.0,
                    window_mbit: 0.0,
                    window_busy: 0.0,
                });
            }
        }
        let syncs = setup
            .proxies
            .iter()
            .map(|r| SyncState {
                rule: r.clone(),
                pending: VecDeque::new(),
                inflight: Vec::new(),
                emitted: Vec::new(),
                master: Vec::new(),
                wan: 0.0,
                retries: 0,
                next_batch: 0,
            })
            .collect();
        let proxy_of = setup
            .proxies
            .iter()
            .enumerate()
            .map(|(i, r)| (r.proxy.clone(), i))
            .collect();
        let mut planner = setup.planner.clone();
        planner.options.seed = opts.seed;
        let mut scheduler = Scheduler::new(setup.scheduler, planner, opts.dynamic);
        scheduler.add(p.clone());
        Ok(Self {
            setup,
            opts: *opts,
            now: 0.0,
            seq: 0,
            queue: BinaryHeap::new(),
            rng: ChaCha8Rng::seed_from_u64(opts.seed),
            nodes,
            channels,
            units: Vec::new(),
            versions: Vec::new(),
            active: None,
            dropped: 0,
            next_transfer: 0,
            transfers: Vec::new(),
            syncs,
            proxy_of,
            scheduler,
            book: CapacityBook::new(setup.vcpus.clone()),
            monitor: Monitor::new(setup.monitor, p)?,
            events: Vec::new(),
            metrics: Vec::new(),
        })
    }

    fn push(&mut self, time: f64, ev: Ev) {
        self.seq += 1;
        self.queue.push(Entry {
            time,
            class: ev.class(),
            seq: self.seq,
            ev,
        });
    }

    fn prime(&mut self) {
        match &self.setup.placement {
            Some(p) => {
                let v = self.add_version(p.clone());
                self.active = Some(v);
            }
            None => self.push(0.0, Ev::Tick),
        }
        self.push(self.setup.monitor.report_period_s, Ev::Report);
        for r in 0..self.syncs.len() {
            let t = self.syncs[r].rule.sync_interval_s;
            self.push(t, Ev::Sync { rule: r });
        }
        for (w, wl) in self.setup.workloads.iter().enumerate() {
            let start = match wl {
                Workload::Frames { start_s, .. } | Workload::FileUpload { start_s, .. } => *start_s,
            };
            self.push(start, Ev::Generate { workload: w, k: 0 });
        }
    }

    fn add_version(&mut self, placement: Placement) -> usize {
        let tiers = &self.setup.problem.tiers;
        let ranks = placement
            .iter()
            .map(|(m, t)| (m.to_string(), tiers.index_of(t).expect("validated placement")))
            .collect();
        self.versions.push(Version { placement, ranks });
        self.versions.len() - 1
    }

    fn handle(&mut self, ev: Ev) -> Result<(), SimError> {
        match ev {
            Ev::NodeDone { node, unit, ms, share, service } => {
                let n = &mut self.nodes[node];
                n.busy = (n.busy - share).max(0.0);
                let tier = self.setup.problem.tiers.at(node).id.clone();
                if service > 0.0 {
                    self.monitor.observe_service(&ms, &tier, service)?;
                }
                self.dispatch(node);
                self.stage_done(unit)?;
            }
            Ev::LinkWake { chan, version } => {
                if self.channels[chan].version == version {
                    self.wake(chan)?;
                }
            }
            Ev::Report => self.report()?,
            Ev::Tick => self.tick(),
            Ev::Migrate { version } => self.activate(version),
            Ev::Sync { rule } => self.sync(rule)?,
            Ev::Generate { workload, k } => self.generate(workload, k)?,
        }
        Ok(())
    }

    fn activate(&mut self, version: usize) {
        self.active = Some(version);
    }

    fn tick(&mut self) {
        let before = self.scheduler.apps[0].events.len();
        let plans = self.scheduler.tick(self.now, &self.monitor, &mut self.book);
        let _ = before;
        for plan in plans {
            let v = self.add_version(plan.placement.clone());
            if plan.effective_at <= self.now {
                self.activate(v);
            } else {
                self.push(plan.effective_at, Ev::Migrate { version: v });
            }
        }
        let snap = self.monitor.snapshot(self.now);
        for (metric, key, value) in snap.rows() {
            self.metrics.push(MetricRow {
                time_s: self.now,
                metric,
                key,
                value,
            });
        }
        self.push(self.now + self.setup.scheduler.interval_s, Ev::Tick);
    }

    fn report(&mut self) -> Result<(), SimError> {
        let now = self.now;
        for c in 0..self.channels.len() {
            let ch = &mut self.channels[c];
            ch.advance(now);
            if ch.window_busy > 1e-12 {
                let bw = ch.window_mbit / ch.window_busy;
                let (hop, dir) = (ch.hop, ch.dir);
                ch.window_busy = 0.0;
                ch.window_mbit = 0.0;
                self.monitor.observe_bandwidth(hop, dir, bw)?;
            }
        }
        for t in self.setup.problem.tiers.tiers() {
            self.monitor.heartbeat(&t.id, now)?;
        }
        self.push(now + self.setup.monitor.report_period_s, Ev::Report);
        Ok(())
    }

    fn generate(&mut self, w: usize, k: u64) -> Result<(), SimError> {
        let wl = &self.setup.workloads[w];
        let pipeline = self
            .setup
            .problem
            .app
            .pipelines
            .iter()
            .position(|p| p.id == wl.pipeline())
            .expect("validated workload");
        match wl {
            Workload::Frames { fps, start_s, stop_s, .. } => {
                let (fps, start, stop) = (*fps, *start_s, *stop_s);
                if let Some(v) = self.active {
                    self.spawn(pipeline, w, 0, v)?;
                } else {
                    self.dropped += 1;
                }
                let next = start + (k + 1) as f64 / fps;
                if stop.map_or(true, |s| next < s) {
                    self.push(next, Ev::Generate { workload: w, k: k + 1 });
                }
            }
            Workload::FileUpload { .. } => match self.active {
                Some(v) => self.spawn(pipeline, w, k as u32, v)?,
                None => {
                    let retry = self.now + self.setup.scheduler.interval_s;
                    self.push(retry, Ev::Generate { workload: w, k });
                }
            },
        }
        Ok(())
    }

    fn spawn(&mut self, pipeline: usize, workload: usize, chunk: u32, version: usize) -> Result<(), SimError> {
        let id = self.units.len() as u64;
        self.units.push(Unit {
            id,
            pipeline,
            workload,
            chunk,
            created: self.now,
            version,
            stage: 0,
            legs: VecDeque::new(),
            starts: Vec::new(),
            completed: None,
        });
        self.start_stage(id as usize);
        Ok(())
    }

    fn start_stage(&mut self, u: usize) {
        let app = &self.setup.problem.app;
        let unit = &mut self.units[u];
        let ms = app.pipelines[unit.pipeline].path[unit.stage].clone();
        let rank = self.versions[unit.version].ranks[&ms];
        let spec = app.microservice(&ms).expect("validated");
        let tier = &self.setup.problem.tiers.at(rank).id;
        let mut service = spec.service_time[tier];
        if self.opts.jitter > 0.0 {
            service *= 1.0 + self.opts.jitter * self.rng.gen_range(-1.0..=1.0);
        }
        unit.starts.push(self.now);
        self.nodes[rank].queue.push_back(Job {
            unit: u,
            ms,
            share: spec.vcpu_share,
            service,
        });
        self.dispatch(rank);
    }

    fn dispatch(&mut self, node: usize) {
        loop {
            let n = &mut self.nodes[node];
            let Some(job) = n.queue.front() else {
                break;
            };
            if n.busy + job.share > n.capacity + 1e-9 {
                break;
            }
            let job = n.queue.pop_front().expect("front exists");
            n.busy += job.share;
            n.peak = n.peak.max(n.busy);
            let at = self.now + job.service;
            self.push(
                at,
                Ev::NodeDone {
                    node,
                    unit: job.unit,
                    ms: job.ms,
                    share: job.share,
                    service: job.service,
                },
            );
        }
    }

    fn stage_done(&mut self, u: usize) -> Result<(), SimError> {
        let app = &self.setup.problem.app;
        let unit = &self.units[u];
        let path = &app.pipelines[unit.pipeline].path;
        if unit.stage + 1 == path.len() {
            let last = path[unit.stage].clone();
            self.units[u].completed = Some(self.now);
            if path.len() == 1 {
                self.left_source(u);
            }
            if let Some(&r) = self.proxy_of.get(&last) {
                let id = self.units[u].id;
                self.syncs[r].emitted.push(id);
                self.syncs[r].pending.push_back(id);
            }
            return Ok(());
        }
        let (a, b) = (&path[unit.stage], &path[unit.stage + 1]);
        let ranks = &self.versions[unit.version].ranks;
        let (ra, rb) = (ranks[a], ranks[b]);
        let link = app.link(a, b).expect("validated pipeline link");
        let mut legs = VecDeque::new();
        if ra != rb {
            self.monitor.observe_data(&link.id(), link.data_in, link.data_out)?;
            legs = crossing_legs(ra, rb, link.data_in, link.data_out);
        }
        self.units[u].legs = legs;
        self.next_leg(u);
        Ok(())
    }

    fn next_leg(&mut self, u: usize) {
        match self.units[u].legs.pop_front() {
            Some(leg) => {
                self.start_transfer(leg, Owner::Unit(u));
            }
            None => {
                self.units[u].stage += 1;
                if self.units[u].stage == 1 {
                    self.left_source(u);
                }
                self.start_stage(u);
            }
        }
    }

    /// Releases the next chunk of a file upload.
    fn left_source(&mut self, u: usize) {
        let unit = &self.units[u];
        if let Workload::FileUpload { chunks, .. } = &self.setup.workloads[unit.workload] {
            let next = unit.chunk + 1;
            if next < *chunks {
                let (pipeline, workload, version) = (unit.pipeline, unit.workload, unit.version);
                let version = self.active.unwrap_or(version);
                let _ = self.spawn(pipeline, workload, next, version);
            }
        }
    }

    fn start_transfer(&mut self, leg: Leg, owner: Owner) -> u64 {
        let id = self.next_transfer;
        self.next_transfer += 1;
        let ch = &mut self.channels[leg.chan];
        ch.advance(self.now);
        ch.sent += leg.mbit;
        ch.active.insert(
            id,
            Transfer {
                remaining: leg.mbit,
                size: leg.mbit,
                owner,
            },
        );
        self.reschedule(leg.chan);
        id
    }

    fn reschedule(&mut self, c: usize) {
        let now = self.now;
        let ch = &mut self.channels[c];
        ch.version += 1;
        if ch.active.is_empty() {
            return;
        }
        let n = ch.active.len() as f64;
        let bw = ch.profile.at(now);
        let min_rem = ch
            .active
            .values()
            .map(|t| t.remaining)
            .fold(f64::INFINITY, f64::min)
            .max(0.0);
        let mut at = now + min_rem * n / bw;
        if let Some(change) = ch.profile.next_change(now) {
            at = at.min(change);
        }
        let version = ch.version;
        self.push(at, Ev::LinkWake { chan: c, version });
    }

    fn wake(&mut self, c: usize) -> Result<(), SimError> {
        let now = self.now;
        let ch = &mut self.channels[c];
        ch.advance(now);
        let n = ch.active.len() as f64;
        let bw = ch.profile.at(now);
        let done: Vec<u64> = ch
            .active
            .iter()
            .filter(|(_, t)| t.remaining <= DONE_MBIT || t.remaining * n / bw <= 1e-12)
            .map(|(id, _)| *id)
            .collect();
        let mut owners = Vec::new();
        for id in done {
            let t = ch.active.remove(&id).expect("listed");
            ch.completed += t.size;
            self.transfers.push(TransferRecord {
                t_s: now,
                link: ch.label.clone(),
                direction: ch.dir,
                mbit: t.size,
            });
            owners.push((t.owner, t.size));
        }
        for (owner, size) in owners {
            match owner {
                Owner::Unit(u) => self.next_leg(u),
                Owner::Sync(r, b) => self.sync_leg_done(r, b, size),
            }
        }
        self.reschedule(c);
        Ok(())
    }

    fn sync(&mut self, r: usize) -> Result<(), SimError> {
        let now = self.now;
        let interval = self.syncs[r].rule.sync_interval_s;
        self.push(now + interval, Ev::Sync { rule: r });

        if !self.syncs[r].inflight.is_empty() {
            let batches = std::mem::take(&mut self.syncs[r].inflight);
            let mut back: Vec<u64> = Vec::new();
            for b in batches {
                if let Some((c, tid)) = b.transfer {
                    let ch = &mut self.channels[c];
                    ch.advance(now);
                    if let Some(t) = ch.active.remove(&tid) {
                        self.syncs[r].wan += t.size - t.remaining.max(0.0);
                    }
                    self.reschedule(c);
                }
                back.extend(b.records);
            }
            let st = &mut self.syncs[r];
            st.retries += 1;
            for id in back.into_iter().rev() {
                st.pending.push_front(id);
            }
            let ev = Event::new(
                now,
                &self.setup.problem.app.name,
                EventKind::SyncRetry,
                format!("{} -> {}: {} records pending", st.rule.proxy, st.rule.target, st.pending.len()),
            );
            self.events.push(ev);
        }

        let Some(v) = self.active else {
            return Ok(());
        };
        let st = &self.syncs[r];
        if st.pending.is_empty() {
            return Ok(());
        }
        let tiers = &self.setup.problem.tiers;
        let from = tiers.index_of(&st.rule.tier).expect("validated proxy tier");
        let to = self.versions[v].ranks[&st.rule.target];
        let (p, o, cap) = (st.rule.record_mbit, st.rule.overhead_mbit, st.rule.batch_size);
        let n = st.pending.len().min(cap);
        let records: Vec<u64> = self.syncs[r].pending.drain(..n).collect();
        let groups: Vec<(Vec<u64>, f64)> = match self.opts.sync {
            SyncMode::Batched => vec![(records.clone(), p * n as f64 + o)],
            SyncMode::PerRecord => records.iter().map(|&id| (vec![id], p + o)).collect(),
        };
        for (recs, size) in groups {
            let legs = crossing_legs(from, to, size, 0.0);
            let st = &mut self.syncs[r];
            let id = st.next_batch;
            st.next_batch += 1;
            if legs.is_empty() {
                st.master.extend(recs);
                continue;
            }
            st.inflight.push(Batch {
                id,
                records: recs,
                legs,
                transfer: None,
            });
            self.sync_next_leg(r, id);
        }
        Ok(())
    }

    fn sync_next_leg(&mut self, r: usize, b: u64) {
        let Some(pos) = self.syncs[r].inflight.iter().position(|x| x.id == b) else {
            return;
        };
        match self.syncs[r].inflight[pos].legs.pop_front() {
            Some(leg) => {
                let tid = self.start_transfer(leg, Owner::Sync(r, b));
                self.syncs[r].inflight[pos].transfer = Some((leg.chan, tid));
            }
            None => {
                let batch = self.syncs[r].inflight.remove(pos);
                self.syncs[r].master.extend(batch.records);
            }
        }
    }

    fn sync_leg_done(&mut self, r: usize, b: u64, size: f64) {
        self.syncs[r].wan += size;
        if let Some(batch) = self.syncs[r].inflight.iter_mut().find(|x| x.id == b) {
            batch.transfer = None;
        }
        self.sync_next_leg(r, b);
    }

    fn finish(mut self) -> SimResults {
        let now = self.opts.duration_s;
        for ch in &mut self.channels {
            ch.advance(now.max(ch.last));
        }
        let app = &self.setup.problem.app;
        let units = self
            .units
            .iter()
            .map(|u| {
                let path = &app.pipelines[u.pipeline].path;
                let ranks = &self.versions[u.version].ranks;
                UnitRecord {
                    id: u.id,
                    pipeline: app.pipelines[u.pipeline].id.clone(),
                    created_s: u.created,
                    completed_s: u.completed,
                    stage_starts: u.starts.clone(),
                    placement_tag: path
                        .iter()
                        .map(|m| ranks[m].to_string())
                        .collect::<Vec<_>>()
                        .join("-"),
                }
            })
            .collect();
        let mut events = self.scheduler.events();
        events.extend(self.events);
        events.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
        let links = self
            .channels
            .iter()
            .map(|c| LinkCounter {
                link: c.label.clone(),
                direction: c.dir,
                delivered_mbit: c.delivered,
                completed_mbit: c.completed,
                sent_mbit: c.sent,
            })
            .collect();
        let sync = self
            .syncs
            .iter()
            .map(|s| SyncLog {
                proxy: s.rule.proxy.clone(),
                target: s.rule.target.clone(),
                emitted: s.emitted.clone(),
                master: s.master.clone(),
                wan_mbit: s.wan,
                retries: s.retries,
            })
            .collect();
        let peak_vcpus = self
            .setup
            .problem
            .tiers
            .tiers()
            .iter()
            .zip(&self.nodes)
            .map(|(t, n)| (t.id.clone(), n.peak))
            .collect();
        let mut placements: Vec<Placement> = Vec::new();
        for v in &self.versions {
            placements.push(v.placement.clone());
        }
        SimResults {
            app: app.name.clone(),
            duration_s: self.opts.duration_s,
            units,
            dropped: self.dropped,
            events,
            transfers: self.transfers,
            links,
            sync,
            placements,
            metrics: self.metrics,
            peak_vcpus,
        }
    }
}

/// Hop legs of one crossing from rank `from` to rank `to`: `forward` Mbit
/// toward the receiver, then `back` Mbit returning. Empty legs are dropped.
fn crossing_legs(from: usize, to: usize, forward: f64, back: f64) -> VecDeque<Leg> {
    let mut legs = VecDeque::new();
    if from < to {
        for k in from..to {
            legs.push_back(Leg { chan: chan_index(k, Direction::Up), mbit: forward });
        }
        for k in (from..to).rev() {
            legs.push_back(Leg { chan: chan_index(k, Direction::Down), mbit: back });
        }
    } else if from > to {
        for k in (to..from).rev() {
            legs.push_back(Leg { chan: chan_index(k, Direction::Down), mbit: forward });
        }
        for k in to..from {
            legs.push_back(Leg { chan: chan_index(k, Direction::Up), mbit: back });
        }
    }
    legs.retain(|l| l.mbit > 0.0);
    legs
}

impl MetricsSource for &Monitor {
    fn snapshot(&self, now: f64) -> crate::monitor::MetricsSnapshot {
        Monitor::snapshot(self, now)
    }
}

/// Latency statistics for one pipeline.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineSummary {
    pub pipeline: String,
    pub completed: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    /// Whole seconds (by unit creation time) holding a unit over budget.
    pub violation_seconds: usize,
    /// Runs of consecutive violating seconds.
    pub violation_episodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub generated: usize,
    pub completed: usize,
    pub in_flight: usize,
    pub dropped: u64,
    pub remaps: usize,
    pub pipelines: Vec<PipelineSummary>,
}

/// Nearest-rank percentile of sorted `xs`.
pub fn percentile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let rank = (q * xs.len() as f64).ceil().max(1.0) as usize;
    xs[rank.min(xs.len()) - 1]
}

impl SimResults {
    pub fn completed(&self) -> impl Iterator<Item = &UnitRecord> {
        self.units.iter().filter(|u| u.completed_s.is_some())
    }

    pub fn remaps(&self) -> Vec<&Event> {
        self.events.iter().filter(|e| e.kind == EventKind::Remap).collect()
    }

    pub fn summary(&self, constraints: &BTreeMap<String, f64>) -> Summary {
        let mut pipelines = Vec::new();
        for (id, &budget) in constraints {
            let mut lat: Vec<f64> = self
                .completed()
                .filter(|u| u.pipeline == *id)
                .filter_map(UnitRecord::latency_s)
                .collect();
            lat.sort_by(f64::total_cmp);
            let mut secs: Vec<i64> = self
                .completed()
                .filter(|u| u.pipeline == *id && u.latency_s().is_some_and(|l| l > budget))
                .map(|u| u.created_s.floor() as i64)
                .collect();
            secs.dedup();
            let episodes = secs
                .iter()
                .enumerate()
                .filter(|(i, s)| *i == 0 || secs[i - 1] + 1 < **s)
                .count();
            pipelines.push(PipelineSummary {
                pipeline: id.clone(),
                completed: lat.len(),
                p50_ms: percentile(&lat, 0.5) * 1000.0,
                p95_ms: percentile(&lat, 0.95) * 1000.0,
                max_ms: lat.last().copied().unwrap_or(0.0) * 1000.0,
                violation_seconds: secs.len(),
                violation_episodes: episodes,
            });
        }
        let completed = self.completed().count();
        Summary {
            generated: self.units.len(),
            completed,
            in_flight: self.units.len() - completed,
            dropped: self.dropped,
            remaps: self.remaps().len(),
            pipelines,
        }
    }

    pub fn latency_csv(&self) -> String {
        let mut rows: Vec<&UnitRecord> = self.completed().collect();
        rows.sort_by(|a, b| {
            a.completed_s
                .unwrap()
                .total_cmp(&b.completed_s.unwrap())
                .then(a.id.cmp(&b.id))
        });
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["t_s", "unit_id", "pipeline", "latency_ms", "placement_tag"])
            .expect("in-memory write");
        for u in rows {
            w.write_record([
                format!("{:.6}", u.completed_s.unwrap()),
                u.id.to_string(),
                u.pipeline.clone(),
                format!("{:.6}", u.latency_s().unwrap() * 1000.0),
                u.placement_tag.clone(),
            ])
            .expect("in-memory write");
        }
        finish_csv(w)
    }

    pub fn links_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["t_s", "link", "direction", "mbit_transferred"])
            .expect("in-memory write");
        for t in &self.transfers {
            w.write_record([
                format!("{:.6}", t.t_s),
                t.link.clone(),
                t.direction.to_string(),
                format!("{:.6}", t.mbit),
            ])
            .expect("in-memory write");
        }
        finish_csv(w)
    }

    pub fn events_csv(&self) -> String {
        events_csv(&self.events)
    }

    pub fn metrics_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["time_s", "metric", "key", "value"])
            .expect("in-memory write");
        for m in &self.metrics {
            w.write_record([
                format!("{:.6}", m.time_s),
                m.metric.clone(),
                m.key.clone(),
                format!("{:.9}", m.value),
            ])
            .expect("in-memory write");
        }
        finish_csv(w)
    }
}

pub fn events_csv(events: &[Event]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["time_s", "app", "event_type", "detail"])
        .expect("in-memory write");
    for e in events {
        w.write_record([
            format!("{:.6}", e.time_s),
            e.app.clone(),
            e.kind.to_string(),
            e.detail.clone(),
        ])
        .expect("in-memory write");
    }
    finish_csv(w)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

#[cfg(test)]
mod tests {
    use super::*;
    use edgecut_core::{fixtures, pipeline_latency, PartitionProblem};

    fn toy() -> Problem {
        PartitionProblem::new(
            fixtures::toy_chain(),
            fixtures::two_tier_toy(),
            fixtures::toy_network(),
        )
    }

    fn one_frame(pipeline: &str) -> Workload {
        Workload::Frames {
            pipeline: pipeline.into(),
            fps: 1.0,
            start_s: 0.0,
            stop_s: Some(0.5),
        }
    }

    #[test]
    fn toy_all_edge_unit() {
        let p = toy();
        let setup = SimSetup::new(p.clone())
            .with_placement(Placement::uniform(&p.app, "edge"))
            .with_workload(one_frame("main"));
        let r = run(&setup, &SimOptions::default()).unwrap();
        assert_eq!(r.units.len(), 1);
        assert!((r.units[0].latency_s().unwrap() - 0.075).abs() < 1e-12);
        assert_eq!(r.units[0].placement_tag, "0-0-0");
    }

    #[test]
    fn crossing_matches_perf() {
        let p = toy();
        let placement = Placement::from_pairs([("S", "edge"), ("A", "cloud"), ("B", "cloud")]);
        let expect = pipeline_latency(&p.app, &p.tiers, &p.net, &placement, "main").unwrap();
        let setup = SimSetup::new(p)
            .with_placement(placement)
            .with_workload(one_frame("main"));
        let r = run(&setup, &SimOptions::default()).unwrap();
        assert!((r.units[0].latency_s().unwrap() - expect.total).abs() < 1e-9);
        assert_eq!(r.transfers.len(), 1);
        assert_eq!(r.transfers[0].mbit, 3.5);
    }

    #[test]
    fn legs_follow_direction() {
        let up = crossing_legs(0, 2, 1.0, 0.5);
        let chans: Vec<usize> = up.iter().map(|l| l.chan).collect();
        assert_eq!(chans, vec![0, 2, 3, 1]);
        let down = crossing_legs(2, 0, 1.0, 0.0);
        let chans: Vec<usize> = down.iter().map(|l| l.chan).collect();
        assert_eq!(chans, vec![3, 1]);
        assert!(crossing_legs(1, 1, 1.0, 1.0).is_empty());
    }

    #[test]
    fn processor_sharing_splits_bandwidth() {
        // two 3.5 Mbit frames leave together on a 35 Mbit/s link
        let p = toy();
        let placement = Placement::from_pairs([("S", "edge"), ("A", "cloud"), ("B", "cloud")]);
        let setup = SimSetup::new(p)
            .with_placement(placement)
            .with_workload(one_frame("main"))
            .with_workload(one_frame("main"));
        let r = run(&setup, &SimOptions::default()).unwrap();
        for u in &r.units {
            assert!((u.latency_s().unwrap() - (0.005 + 0.2 + 0.035)).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_duration_is_empty() {
        let p = toy();
        let setup = SimSetup::new(p).with_workload(one_frame("main"));
        let r = run(
            &setup,
            &SimOptions {
                duration_s: 0.0,
                ..SimOptions::default()
            },
        )
        .unwrap();
        assert!(r.units.is_empty());
        assert!(r.events.is_empty());
        assert_eq!(r.latency_csv(), "t_s,unit_id,pipeline,latency_ms,placement_tag\n");
    }

    #[test]
    fn node_capacity_queues_stages() {
        let mut p = toy();
        for m in &mut p.app.microservices {
            m.vcpu_share = 3.0;
        }
        let setup = SimSetup::new(p.clone())
            .with_placement(Placement::uniform(&p.app, "edge"))
            .with_workload(one_frame("main"))
            .with_workload(one_frame("main"));
        let r = run(&setup, &SimOptions::default()).unwrap();
        let mut lat: Vec<f64> = r.units.iter().map(|u| u.latency_s().unwrap()).collect();
        lat.sort_by(f64::total_cmp);
        // one 3-vCPU stage at a time: the six stages run back to back
        assert!(lat[0] > 0.075);
        assert!((lat[1] - 0.150).abs() < 1e-12);
        assert_eq!(r.peak_vcpus["edge"], 3.0);
    }

    #[test]
    fn rejects_unknown_pipeline() {
        let setup = SimSetup::new(toy()).with_workload(one_frame("nope"));
        assert!(matches!(run(&setup, &SimOptions::default()), Err(SimError::Invalid(_))));
    }

    #[test]
    fn percentile_nearest_rank() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&xs, 0.5), 2.0);
        assert_eq!(percentile(&xs, 0.95), 4.0);
        assert_eq!(percentile(&[], 0.5), 0.0);
    }
}
