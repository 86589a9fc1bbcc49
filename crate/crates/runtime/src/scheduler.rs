//! The scheduling control loop and zone-level deployment.
//!
//! Each tick partitions unscheduled applications and re-checks scheduled
//! ones against fresh metrics. A re-check fires when the current placement
//! is predicted to break a latency budget, or when a placement that keeps
//! every pipeline under `constraint × (1 − hysteresis_margin)` would save at
//! least `improvement_threshold` of the current cost.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use edgecut_core::pricing::ZoneKind;
use edgecut_core::{
    latency_report, partition_multi_tier, partition_with, total_cost, App, Outcome,
    PartitionError, PerfError, Placement, Problem, SolveOptions,
};

use crate::monitor::{MetricsSnapshot, MetricsSource};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerConfig {
    pub interval_s: f64,
    pub hysteresis_margin: f64,
    pub improvement_threshold: f64,
    /// Seconds for a pre-loaded microservice to start taking work.
    pub activation_delay_s: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            interval_s: 10.0,
            hysteresis_margin: 0.1,
            improvement_threshold: 0.2,
            activation_delay_s: 0.0,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.interval_s > 0.0) {
            return Err("interval_s must be positive".into());
        }
        if !(0.0..1.0).contains(&self.hysteresis_margin) {
            return Err("hysteresis_margin must lie in [0, 1)".into());
        }
        if !(self.improvement_threshold >= 0.0) {
            return Err("improvement_threshold must be non-negative".into());
        }
        if !(self.activation_delay_s >= 0.0) {
            return Err("activation_delay_s must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SchedulerError {
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Perf(#[from] PerfError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Scheduled,
    Remap,
    Infeasible,
    Rejected,
    Migrated,
    ZoneCreated,
    VmCreated,
    Deployed,
    DeployFailed,
    SyncRetry,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Scheduled => "scheduled",
            EventKind::Remap => "remap",
            EventKind::Infeasible => "infeasible",
            EventKind::Rejected => "rejected",
            EventKind::Migrated => "migrated",
            EventKind::ZoneCreated => "zone-created",
            EventKind::VmCreated => "vm-created",
            EventKind::Deployed => "deployed",
            EventKind::DeployFailed => "deploy-failed",
            EventKind::SyncRetry => "sync-retry",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Event {
    pub time_s: f64,
    pub app: String,
    pub kind: EventKind,
    pub detail: String,
}

impl Event {
    pub fn new(time_s: f64, app: &str, kind: EventKind, detail: impl Into<String>) -> Self {
        Self {
            time_s,
            app: app.to_string(),
            kind,
            detail: detail.into(),
        }
    }
}

/// Why a re-check fired.
#[derive(Clone, Debug, PartialEq)]
pub enum Trigger {
    Violation {
        pipeline: String,
        predicted: f64,
        constraint: f64,
    },
    Cheaper {
        current: f64,
        candidate: f64,
    },
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trigger::Violation {
                pipeline,
                predicted,
                constraint,
            } => write!(
                f,
                "pipeline {pipeline} predicted {:.1} ms over {:.1} ms budget",
                predicted * 1000.0,
                constraint * 1000.0
            ),
            Trigger::Cheaper { current, candidate } => write!(
                f,
                "cost {:.6e} -> {:.6e} ({:.1}% saving)",
                current,
                candidate,
                (current - candidate) / current * 100.0
            ),
        }
    }
}

/// Solver front-end shared by the loop and deployment.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Planner {
    pub options: SolveOptions,
    /// Stage the solve pairwise up the chain instead of all at once.
    pub multi_tier: bool,
}

impl Planner {
    pub fn solve(&self, problem: &Problem) -> Result<Outcome, PartitionError> {
        if self.multi_tier {
            partition_multi_tier(problem, &self.options)
        } else {
            partition_with(problem, &self.options)
        }
    }
}

/// Evaluates `current` against `now` (a problem with fresh metrics
/// substituted). Returns the trigger and, when one fired, the tightened
/// re-solve.
pub fn check_conditions(
    now: &Problem,
    current: &Placement,
    config: &SchedulerConfig,
    planner: &Planner,
) -> Result<Option<(Trigger, Outcome)>, SchedulerError> {
    let report = latency_report(&now.app, &now.tiers, &now.net, current)?;
    let tight = now.clone().scaled_constraints(1.0 - config.hysteresis_margin);
    let mut worst: Option<(String, f64, f64)> = None;
    for (id, l) in &report.pipelines {
        let c = now.constraints[id];
        if l.total > c && worst.as_ref().map_or(true, |w| l.total - c > w.1 - w.2) {
            worst = Some((id.clone(), l.total, c));
        }
    }
    if let Some((pipeline, predicted, constraint)) = worst {
        let candidate = planner.solve(&tight)?;
        return Ok(Some((
            Trigger::Violation {
                pipeline,
                predicted,
                constraint,
            },
            candidate,
        )));
    }
    let cost = total_cost(&now.app, &now.tiers, current, &now.weights)?.total;
    let candidate = planner.solve(&tight)?;
    if candidate.feasible && candidate.cost < cost * (1.0 - config.improvement_threshold) {
        return Ok(Some((
            Trigger::Cheaper {
                current: cost,
                candidate: candidate.cost,
            },
            candidate,
        )));
    }
    Ok(None)
}

/// Whether `snapshot` invalidates the `current` partition of `problem`.
pub fn conditions_changed(
    problem: &Problem,
    current: &Outcome,
    snapshot: &MetricsSnapshot,
    config: &SchedulerConfig,
) -> Result<bool, SchedulerError> {
    let now = snapshot.apply(problem);
    Ok(check_conditions(&now, &current.placement, config, &Planner::default())?.is_some())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Move {
    pub microservice: String,
    /// `None` for a first placement.
    pub from: Option<String>,
    pub to: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MigrationPlan {
    pub app: String,
    pub moves: Vec<Move>,
    pub effective_at: f64,
    pub placement: Placement,
}

impl MigrationPlan {
    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn describe(&self) -> String {
        self.moves
            .iter()
            .map(|m| match &m.from {
                Some(f) => format!("{}:{}->{}", m.microservice, f, m.to),
                None => format!("{}:{}", m.microservice, m.to),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
#[error("tier {tier} needs {needed} vCPUs but only {free} are free")]
pub struct Rejection {
    pub tier: String,
    pub needed: f64,
    pub free: f64,
}

/// Where microservices run and how much room each tier has left.
pub trait Orchestrator {
    fn free_vcpus(&self, tier: &str) -> f64;
    fn commit(&mut self, app: &App, plan: &MigrationPlan);
}

/// Tracks per-tier vCPU reservations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CapacityBook {
    capacity: BTreeMap<String, f64>,
    reserved: BTreeMap<String, f64>,
}

impl CapacityBook {
    pub fn new(capacity: BTreeMap<String, f64>) -> Self {
        Self {
            capacity,
            reserved: BTreeMap::new(),
        }
    }

    pub fn reserved(&self, tier: &str) -> f64 {
        self.reserved.get(tier).copied().unwrap_or(0.0)
    }
}

impl Orchestrator for CapacityBook {
    fn free_vcpus(&self, tier: &str) -> f64 {
        self.capacity.get(tier).copied().unwrap_or(0.0) - self.reserved(tier)
    }

    fn commit(&mut self, app: &App, plan: &MigrationPlan) {
        for m in &plan.moves {
            let share = app.microservice(&m.microservice).map_or(0.0, |s| s.vcpu_share);
            if let Some(f) = &m.from {
                *self.reserved.entry(f.clone()).or_default() -= share;
            }
            *self.reserved.entry(m.to.clone()).or_default() += share;
        }
    }
}

/// The moves that turn `old` into `new`, checked against free capacity.
pub fn apply_placement(
    app: &App,
    new: &Placement,
    old: Option<&Placement>,
    config: &SchedulerConfig,
    now: f64,
    orchestrator: &dyn Orchestrator,
) -> Result<MigrationPlan, Rejection> {
    let mut moves = Vec::new();
    for (ms, to) in new.iter() {
        let from = old.and_then(|o| o.tier_of(ms));
        if from != Some(to) {
            moves.push(Move {
                microservice: ms.to_string(),
                from: from.map(str::to_string),
                to: to.to_string(),
            });
        }
    }
    let share = |id: &str| app.microservice(id).map_or(0.0, |s| s.vcpu_share);
    let mut delta: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for m in &moves {
        delta.entry(m.to.as_str()).or_default().0 += share(&m.microservice);
        if let Some(f) = &m.from {
            delta.entry(f.as_str()).or_default().1 += share(&m.microservice);
        }
    }
    for (tier, (incoming, outgoing)) in delta {
        let free = orchestrator.free_vcpus(tier) + outgoing;
        if incoming > free + 1e-9 {
            return Err(Rejection {
                tier: tier.to_string(),
                needed: incoming,
                free: free.max(0.0),
            });
        }
    }
    Ok(MigrationPlan {
        app: app.name.clone(),
        moves,
        effective_at: now + config.activation_delay_s,
        placement: new.clone(),
    })
}

/// Scheduling state of one application.
#[derive(Clone, Debug, PartialEq)]
pub struct DeploymentState {
    pub name: String,
    /// Profiled baseline the monitor's estimates are substituted into.
    pub problem: Problem,
    pub scheduled: bool,
    pub placement: Option<Placement>,
    pub last: Option<Outcome>,
    pub events: Vec<Event>,
}

impl DeploymentState {
    pub fn new(problem: Problem) -> Self {
        Self {
            name: problem.app.name.clone(),
            problem,
            scheduled: false,
            placement: None,
            last: None,
            events: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scheduler {
    pub config: SchedulerConfig,
    pub planner: Planner,
    /// When false, scheduled applications are never re-checked.
    pub dynamic: bool,
    pub apps: Vec<DeploymentState>,
}

impl Scheduler {
    pub fn new(config: SchedulerConfig, planner: Planner, dynamic: bool) -> Self {
        Self {
            config,
            planner,
            dynamic,
            apps: Vec::new(),
        }
    }

    pub fn add(&mut self, problem: Problem) -> usize {
        self.apps.push(DeploymentState::new(problem));
        self.apps.len() - 1
    }

    /// One pass over every application. Returns the plans to apply, and
    /// records events in each application's log.
    pub fn tick(
        &mut self,
        now: f64,
        metrics: &dyn MetricsSource,
        orchestrator: &mut dyn Orchestrator,
    ) -> Vec<MigrationPlan> {
        let snapshot = metrics.snapshot(now);
        let mut plans = Vec::new();
        for app in &mut self.apps {
            let problem = snapshot.apply(&app.problem);
            match step(app, &problem, now, &self.config, &self.planner, self.dynamic, orchestrator) {
                Ok(Some(plan)) => plans.push(plan),
                Ok(None) => {}
                Err(e) => {
                    let ev = Event::new(now, &app.name, EventKind::Infeasible, e.to_string());
                    app.events.push(ev);
                }
            }
        }
        plans
    }

    pub fn events(&self) -> Vec<Event> {
        let mut all: Vec<Event> = self.apps.iter().flat_map(|a| a.events.clone()).collect();
        all.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
        all
    }
}

fn step(
    app: &mut DeploymentState,
    problem: &Problem,
    now: f64,
    config: &SchedulerConfig,
    planner: &Planner,
    dynamic: bool,
    orchestrator: &mut dyn Orchestrator,
) -> Result<Option<MigrationPlan>, SchedulerError> {
    let (result, kind, reason) = match (&app.placement, app.scheduled) {
        (Some(current), true) => {
            if !dynamic {
                return Ok(None);
            }
            let Some((trigger, mut candidate)) = check_conditions(problem, current, config, planner)?
            else {
                return Ok(None);
            };
            if !candidate.feasible {
                candidate = planner.solve(problem)?;
            }
            if !candidate.feasible {
                notify(app, now, &candidate, &trigger.to_string());
                return Ok(None);
            }
            if candidate.placement == *current {
                return Ok(None);
            }
            (candidate, EventKind::Remap, trigger.to_string())
        }
        _ => {
            let r = planner.solve(problem)?;
            if !r.feasible {
                notify(app, now, &r, "initial placement");
                return Ok(None);
            }
            (r, EventKind::Scheduled, String::new())
        }
    };
    match apply_placement(
        &problem.app,
        &result.placement,
        app.placement.as_ref(),
        config,
        now,
        &*orchestrator,
    ) {
        Ok(plan) => {
            orchestrator.commit(&problem.app, &plan);
            let detail = if reason.is_empty() {
                plan.describe()
            } else {
                format!("{}; {}", plan.describe(), reason)
            };
            app.events.push(Event::new(now, &app.name, kind, detail));
            app.scheduled = true;
            app.placement = Some(result.placement.clone());
            app.last = Some(result);
            Ok(Some(plan))
        }
        Err(rej) => {
            app.events
                .push(Event::new(now, &app.name, EventKind::Rejected, rej.to_string()));
            Ok(None)
        }
    }
}

fn notify(app: &mut DeploymentState, now: f64, r: &Outcome, context: &str) {
    let what = r
        .infeasibility
        .as_ref()
        .map_or_else(|| "no feasible placement".to_string(), |i| i.to_string());
    app.events.push(Event::new(
        now,
        &app.name,
        EventKind::Infeasible,
        format!("{what} ({context})"),
    ));
}

/// Ticks every `interval_s` from 0 while the tick time is below `until`.
/// Plans take effect immediately in `orchestrator`.
pub fn run_scheduling_loop(
    scheduler: &mut Scheduler,
    metrics: &dyn MetricsSource,
    orchestrator: &mut dyn Orchestrator,
    until: f64,
) -> Vec<Event> {
    let mut k = 0u64;
    loop {
        let t = k as f64 * scheduler.config.interval_s;
        if t >= until {
            break;
        }
        scheduler.tick(t, metrics, orchestrator);
        k += 1;
    }
    scheduler.events()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vm {
    pub id: String,
    #[serde(default = "default_instance")]
    pub instance_type: String,
    pub vcpus: f64,
    #[serde(default)]
    pub used_vcpus: f64,
    #[serde(default = "yes")]
    pub healthy: bool,
}

fn default_instance() -> String {
    "t3.xlarge".into()
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Zone {
    pub id: String,
    pub region: String,
    pub kind: ZoneKind,
    /// Tier of the chain this zone hosts.
    pub tier: String,
    #[serde(default = "yes")]
    pub reachable: bool,
    #[serde(default)]
    pub last_heartbeat_s: f64,
    #[serde(default)]
    pub vms: Vec<Vm>,
}

/// Zones known to the control plane, by region.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneRegistry {
    #[serde(default)]
    pub zones: Vec<Zone>,
    /// Heartbeat age beyond which a zone counts as unreachable.
    #[serde(default = "default_stale_after")]
    pub stale_after_s: f64,
}

fn default_stale_after() -> f64 {
    3.0
}

/// vCPUs of a freshly created VM (one t3.xlarge).
pub const NEW_VM_VCPUS: f64 = 4.0;

impl ZoneRegistry {
    pub fn new() -> Self {
        Self {
            zones: Vec::new(),
            stale_after_s: default_stale_after(),
        }
    }

    pub fn zone(&self, id: &str) -> Option<&Zone> {
        self.zones.iter().find(|z| z.id == id)
    }

    pub fn heartbeat(&mut self, zone: &str, at: f64) {
        if let Some(z) = self.zones.iter_mut().find(|z| z.id == zone) {
            z.last_heartbeat_s = z.last_heartbeat_s.max(at);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeployRequest {
    pub region: String,
    pub app: String,
    #[serde(default)]
    pub at_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Assignment {
    pub microservice: String,
    pub zone: String,
    pub vm: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Deployment {
    pub app: String,
    pub region: String,
    pub placement: Placement,
    pub assignments: Vec<Assignment>,
    pub events: Vec<Event>,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum DeployError {
    #[error("zone unreachable: {0}")]
    ZoneUnreachable(String),
    #[error("unhealthy VMs: {}", .0.join(", "))]
    UnhealthyVms(Vec<String>),
    #[error("no feasible placement: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

/// Zone id for `tier` in `region`.
pub fn zone_id(region: &str, tier: &str) -> String {
    format!("{region}-{tier}")
}

/// Sets up zones and VMs in the request's region and deploys the
/// application there. The registry only changes on success.
pub fn handle_deploy_request(
    request: &DeployRequest,
    problem: &Problem,
    registry: &mut ZoneRegistry,
    planner: &Planner,
) -> Result<Deployment, DeployError> {
    let now = request.at_s;
    let mut reg = registry.clone();
    let mut events = Vec::new();
    let app = &request.app;

    for (rank, tier) in problem.tiers.tiers().iter().enumerate() {
        let id = zone_id(&request.region, &tier.id);
        match reg.zones.iter().find(|z| z.id == id) {
            Some(z) => {
                if !z.reachable || now - z.last_heartbeat_s > reg.stale_after_s {
                    return Err(DeployError::ZoneUnreachable(id));
                }
            }
            None => {
                let kind = if rank == 0 {
                    ZoneKind::Wavelength
                } else {
                    ZoneKind::Availability
                };
                reg.zones.push(Zone {
                    id: id.clone(),
                    region: request.region.clone(),
                    kind,
                    tier: tier.id.clone(),
                    reachable: true,
                    last_heartbeat_s: now,
                    vms: Vec::new(),
                });
                events.push(Event::new(now, app, EventKind::ZoneCreated, format!("{id} ({kind})")));
            }
        }
    }

    let result = planner.solve(problem)?;
    if !result.feasible {
        let why = result
            .infeasibility
            .as_ref()
            .map_or_else(String::new, |i| i.to_string());
        return Err(DeployError::Infeasible(why));
    }

    let mut assignments = Vec::new();
    let mut selected: Vec<(usize, usize)> = Vec::new();
    for ms in &problem.app.microservices {
        let tier = result.placement.tier_of(&ms.id).expect("total placement");
        let zi = reg
            .zones
            .iter()
            .position(|z| z.id == zone_id(&request.region, tier))
            .expect("zone ensured above");
        let zone = &mut reg.zones[zi];
        let vi = match zone
            .vms
            .iter()
            .position(|v| v.vcpus - v.used_vcpus >= ms.vcpu_share - 1e-9)
        {
            Some(vi) => vi,
            None => {
                let vm_id = format!("{}-vm{}", zone.id, zone.vms.len());
                zone.vms.push(Vm {
                    id: vm_id.clone(),
                    instance_type: default_instance(),
                    vcpus: NEW_VM_VCPUS.max(ms.vcpu_share),
                    used_vcpus: 0.0,
                    healthy: true,
                });
                events.push(Event::new(now, app, EventKind::VmCreated, vm_id));
                zone.vms.len() - 1
            }
        };
        zone.vms[vi].used_vcpus += ms.vcpu_share;
        if !selected.contains(&(zi, vi)) {
            selected.push((zi, vi));
        }
        assignments.push(Assignment {
            microservice: ms.id.clone(),
            zone: zone.id.clone(),
            vm: zone.vms[vi].id.clone(),
        });
    }

    let unhealthy: Vec<String> = selected
        .iter()
        .map(|&(zi, vi)| &reg.zones[zi].vms[vi])
        .filter(|v| !v.healthy)
        .map(|v| v.id.clone())
        .collect();
    if !unhealthy.is_empty() {
        return Err(DeployError::UnhealthyVms(unhealthy));
    }

    events.push(Event::new(
        now,
        app,
        EventKind::Deployed,
        format!("{} in {}", result.placement, request.region),
    ));
    *registry = reg;
    Ok(Deployment {
        app: app.clone(),
        region: request.region.clone(),
        placement: result.placement,
        assignments,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use edgecut_core::{fixtures, HopParams, PartitionProblem};

    fn toy() -> Problem {
        PartitionProblem::new(
            fixtures::toy_chain(),
            fixtures::two_tier_toy(),
            fixtures::toy_network(),
        )
    }

    fn current() -> Outcome {
        let r = edgecut_core::partition(&toy()).unwrap();
        assert_eq!(
            r.placement,
            Placement::from_pairs([("S", "edge"), ("A", "edge"), ("B", "cloud")])
        );
        r
    }

    #[test]
    fn degraded_bandwidth_fires() {
        let p = toy();
        let mut snap = MetricsSnapshot::baseline(&p, 0.0);
        snap.network.set_hop("edge", "cloud", HopParams::new(1.0, 1.0, 0.0));
        let now = snap.apply(&p);
        let l = latency_report(&now.app, &now.tiers, &now.net, &current().placement).unwrap();
        assert!((l.pipelines["main"].total - 0.410).abs() < 1e-12);
        assert!(conditions_changed(&p, &current(), &snap, &SchedulerConfig::default()).unwrap());
    }

    #[test]
    fn unchanged_metrics_do_not_fire() {
        let p = toy();
        let snap = MetricsSnapshot::baseline(&p, 0.0);
        assert!(!conditions_changed(&p, &current(), &snap, &SchedulerConfig::default()).unwrap());
    }

    #[test]
    fn cheaper_cloud_fires() {
        // all-cloud needs the (S,A) crossing to fit: 5 + 20 + 15 ms of
        // processing plus 3.5 Mbit at 350 Mbit/s
        let p = toy();
        let mut snap = MetricsSnapshot::baseline(&p, 0.0);
        snap.network.set_hop("edge", "cloud", HopParams::new(350.0, 350.0, 0.0));
        snap.prices.insert("cloud".into(), 0.5);
        let now = snap.apply(&p);
        let cur = total_cost(&now.app, &now.tiers, &current().placement, &now.weights).unwrap();
        let cloud = Placement::from_pairs([("S", "edge"), ("A", "cloud"), ("B", "cloud")]);
        let alt = total_cost(&now.app, &now.tiers, &cloud, &now.weights).unwrap();
        assert!(alt.total < cur.total * 0.8);
        assert!(conditions_changed(&p, &current(), &snap, &SchedulerConfig::default()).unwrap());
        // the same saving does not clear a 90% bar
        let strict = SchedulerConfig {
            improvement_threshold: 0.9,
            ..SchedulerConfig::default()
        };
        assert!(!conditions_changed(&p, &current(), &snap, &strict).unwrap());
    }

    #[test]
    fn identical_placement_is_empty_plan() {
        let p = toy();
        let r = current();
        let book = CapacityBook::new(BTreeMap::from([("edge".into(), 4.0), ("cloud".into(), 4.0)]));
        let plan = apply_placement(
            &p.app,
            &r.placement,
            Some(&r.placement),
            &SchedulerConfig::default(),
            0.0,
            &book,
        )
        .unwrap();
        assert!(plan.is_empty());
    }

    #[test]
    fn fe_fm_move_is_two_moves() {
        let app = fixtures::monitoring_app::<f64>();
        let old = fixtures::monitoring_hybrid_placement();
        let mut new = old.clone();
        new.assign("FE", "wavelength");
        new.assign("FM", "wavelength");
        let book = CapacityBook::new(BTreeMap::from([
            ("wavelength".into(), 4.0),
            ("availability".into(), 4.0),
        ]));
        let plan = apply_placement(&app, &new, Some(&old), &SchedulerConfig::default(), 7.0, &book).unwrap();
        assert_eq!(plan.moves.len(), 2);
        assert_eq!(plan.effective_at, 7.0);
        assert_eq!(plan.describe(), "FE:availability->wavelength FM:availability->wavelength");
    }

    #[test]
    fn full_tier_rejects() {
        let app = fixtures::monitoring_app::<f64>();
        let old = fixtures::monitoring_hybrid_placement();
        let mut new = old.clone();
        new.assign("FE", "wavelength");
        let book = CapacityBook::new(BTreeMap::from([
            ("wavelength".into(), 0.0),
            ("availability".into(), 4.0),
        ]));
        let err = apply_placement(&app, &new, Some(&old), &SchedulerConfig::default(), 0.0, &book)
            .unwrap_err();
        assert_eq!(err.tier, "wavelength");
    }

    #[test]
    fn stable_metrics_schedule_once() {
        let p = toy();
        let mut s = Scheduler::new(SchedulerConfig::default(), Planner::default(), true);
        s.add(p.clone());
        let snap = MetricsSnapshot::baseline(&p, 0.0);
        let mut book = CapacityBook::new(BTreeMap::from([("edge".into(), 4.0), ("cloud".into(), 4.0)]));
        let events = run_scheduling_loop(&mut s, &snap, &mut book, 100.0);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].kind, EventKind::Scheduled);
        assert_eq!(events[0].time_s, 0.0);
        assert_eq!(book.reserved("edge"), 2.0);
    }

    #[test]
    fn impossible_budget_notifies_every_tick() {
        let p = toy().with_constraint("main", 0.010);
        let mut s = Scheduler::new(SchedulerConfig::default(), Planner::default(), true);
        s.add(p.clone());
        let snap = MetricsSnapshot::baseline(&p, 0.0);
        let mut book = CapacityBook::new(BTreeMap::from([("edge".into(), 4.0), ("cloud".into(), 4.0)]));
        let events = run_scheduling_loop(&mut s, &snap, &mut book, 50.0);
        assert_eq!(events.len(), 5);
        assert!(events.iter().all(|e| e.kind == EventKind::Infeasible));
        assert!(s.apps[0].placement.is_none());
    }

    #[test]
    fn capacity_rejection_keeps_app_unscheduled() {
        let p = toy();
        let mut s = Scheduler::new(SchedulerConfig::default(), Planner::default(), true);
        s.add(p.clone());
        let snap = MetricsSnapshot::baseline(&p, 0.0);
        let mut book = CapacityBook::new(BTreeMap::from([("edge".into(), 1.0), ("cloud".into(), 4.0)]));
        s.tick(0.0, &snap, &mut book);
        assert_eq!(s.apps[0].events[0].kind, EventKind::Rejected);
        assert!(!s.apps[0].scheduled);
    }

    fn region_problem() -> Problem {
        PartitionProblem::new(
            fixtures::monitoring_app(),
            fixtures::two_tier_wavelength(),
            fixtures::location_1(),
        )
    }

    #[test]
    fn empty_registry_creates_everything() {
        let mut reg = ZoneRegistry::new();
        let req = DeployRequest {
            region: "boston".into(),
            app: "monitoring".into(),
            at_s: 0.0,
        };
        let d = handle_deploy_request(&req, &region_problem(), &mut reg, &Planner::default()).unwrap();
        assert_eq!(reg.zones.len(), 2);
        assert_eq!(reg.zone("boston-wavelength").unwrap().kind, ZoneKind::Wavelength);
        assert_eq!(reg.zone("boston-availability").unwrap().kind, ZoneKind::Availability);
        let created = d.events.iter().filter(|e| e.kind == EventKind::ZoneCreated).count();
        assert_eq!(created, 2);
        assert!(d.events.iter().any(|e| e.kind == EventKind::VmCreated));
        assert_eq!(d.events.last().unwrap().kind, EventKind::Deployed);
        assert_eq!(d.placement, fixtures::monitoring_hybrid_placement());
        assert_eq!(d.assignments.len(), 6);
    }

    fn seeded_registry(healthy: bool, reachable: bool) -> ZoneRegistry {
        let vm = |id: &str| Vm {
            id: id.into(),
            instance_type: default_instance(),
            vcpus: 4.0,
            used_vcpus: 0.0,
            healthy,
        };
        ZoneRegistry {
            zones: vec![
                Zone {
                    id: "boston-wavelength".into(),
                    region: "boston".into(),
                    kind: ZoneKind::Wavelength,
                    tier: "wavelength".into(),
                    reachable,
                    last_heartbeat_s: 0.0,
                    vms: vec![vm("wl-0")],
                },
                Zone {
                    id: "boston-availability".into(),
                    region: "boston".into(),
                    kind: ZoneKind::Availability,
                    tier: "availability".into(),
                    reachable: true,
                    last_heartbeat_s: 0.0,
                    vms: vec![vm("az-0")],
                },
            ],
            stale_after_s: 3.0,
        }
    }

    #[test]
    fn healthy_registry_is_reused() {
        let mut reg = seeded_registry(true, true);
        let req = DeployRequest {
            region: "boston".into(),
            app: "monitoring".into(),
            at_s: 1.0,
        };
        let d = handle_deploy_request(&req, &region_problem(), &mut reg, &Planner::default()).unwrap();
        assert_eq!(d.events.len(), 1);
        assert_eq!(d.events[0].kind, EventKind::Deployed);
        assert_eq!(reg.zones.len(), 2);
        assert!((reg.zone("boston-availability").unwrap().vms[0].used_vcpus - 0.4 - 0.3 - 0.2 - 0.2).abs() < 1e-9);
    }

    #[test]
    fn unreachable_zone_is_an_error() {
        let mut reg = seeded_registry(true, false);
        let before = reg.clone();
        let req = DeployRequest {
            region: "boston".into(),
            app: "monitoring".into(),
            at_s: 1.0,
        };
        let err = handle_deploy_request(&req, &region_problem(), &mut reg, &Planner::default()).unwrap_err();
        assert_eq!(err.to_string(), "zone unreachable: boston-wavelength");
        assert_eq!(reg, before);
        // a silent zone counts as unreachable too
        let mut quiet = seeded_registry(true, true);
        let late = DeployRequest { at_s: 10.0, ..req };
        assert!(matches!(
            handle_deploy_request(&late, &region_problem(), &mut quiet, &Planner::default()),
            Err(DeployError::ZoneUnreachable(_))
        ));
    }

    #[test]
    fn unhealthy_vms_are_an_error() {
        let mut reg = seeded_registry(false, true);
        let req = DeployRequest {
            region: "boston".into(),
            app: "monitoring".into(),
            at_s: 0.0,
        };
        let err = handle_deploy_request(&req, &region_problem(), &mut reg, &Planner::default()).unwrap_err();
        assert!(err.to_string().starts_with("unhealthy VMs"));
    }
}
