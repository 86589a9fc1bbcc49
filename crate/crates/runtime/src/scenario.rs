//! Declarative scenario files: one strict JSON document per experiment.
//!
//! Unknown keys fail at parse time with serde_json's line and column.
//! References that only resolve against other sections (pipelines, tiers,
//! hops, plans) are checked afterwards; those errors point at the first line
//! holding the offending quoted value.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use edgecut_core::fixtures;
use edgecut_core::pricing::{
    self, instance_catalog, monthly_cost, DeploymentPlan, InstanceType, MonthlyCost, Role,
    StorageRates, ZoneKind,
};
use edgecut_core::{
    plan_with_proxies, App, HopParams, Network, PartitionError, Placement, Problem,
    PartitionProblem, ProxyRule, SolveOptions, SolverMode, Tier, TierChain, Violation, Weights,
};

use crate::monitor::MonitorConfig;
use crate::scheduler::{DeployRequest, Planner, SchedulerConfig, ZoneRegistry};
use crate::sim::{SimOptions, SimSetup, SyncMode, Workload};
use crate::trace::{Direction, StepTrace};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioError {
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl ScenarioError {
    fn at(line: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            line,
            column: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ScenarioError {}

fn default_vcpus() -> f64 {
    4.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierDecl {
    pub id: String,
    pub rank: u32,
    /// Currency per compute-second.
    pub price_rate: f64,
    #[serde(default = "default_vcpus")]
    pub vcpus: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopDecl {
    pub lower: String,
    pub upper: String,
    /// Row of the network fixture to take averages from, e.g.
    /// `"wavelength-availability"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bw_upload: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bw_download: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtt_s: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDecl {
    /// `"location-1"` or `"location-2"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
    pub hops: Vec<HopDecl>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceDecl {
    /// `[lower, upper]` tier ids of the hop.
    pub hop: (String, String),
    pub direction: Direction,
    pub points: StepTrace,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerDecl {
    pub interval_s: f64,
    pub hysteresis_margin: f64,
    pub improvement_threshold: f64,
    pub activation_delay_s: f64,
    pub multi_tier: bool,
    pub exact_only: bool,
}

impl Default for SchedulerDecl {
    fn default() -> Self {
        let c = SchedulerConfig::default();
        Self {
            interval_s: c.interval_s,
            hysteresis_margin: c.hysteresis_margin,
            improvement_threshold: c.improvement_threshold,
            activation_delay_s: c.activation_delay_s,
            multi_tier: false,
            exact_only: false,
        }
    }
}

impl SchedulerDecl {
    pub fn config(&self) -> SchedulerConfig {
        SchedulerConfig {
            interval_s: self.interval_s,
            hysteresis_margin: self.hysteresis_margin,
            improvement_threshold: self.improvement_threshold,
            activation_delay_s: self.activation_delay_s,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationDecl {
    pub duration_s: f64,
    pub seed: u64,
    pub jitter: f64,
    pub dynamic: bool,
    pub sync: SyncMode,
    /// Fixed placement instead of the scheduler's.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub placement: Option<Placement>,
}

impl Default for SimulationDecl {
    fn default() -> Self {
        let o = SimOptions::default();
        Self {
            duration_s: o.duration_s,
            seed: o.seed,
            jitter: o.jitter,
            dynamic: o.dynamic,
            sync: o.sync,
            placement: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowDecl {
    pub zone: ZoneKind,
    #[serde(default = "default_instance")]
    pub instance_type: String,
    pub role: Role,
    /// Explicit VM count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u32>,
    /// Size the row for this many cameras instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cameras: Option<u32>,
}

fn default_instance() -> String {
    "t3.xlarge".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanFixture {
    AzOnly,
    WlOnly,
    Hybrid,
    StaticRelay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDecl {
    pub name: String,
    pub cameras: u32,
    /// Start from one of the built-in plans; `instances` rows are added.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<PlanFixture>,
    #[serde(default)]
    pub instances: Vec<RowDecl>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceOverride {
    pub instance_type: String,
    pub zone: ZoneKind,
    pub hourly: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareDecl {
    pub plan: String,
    pub baseline: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentDecl {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage_rates: Option<StorageRates<f64>>,
    #[serde(default)]
    pub prices: Vec<PriceOverride>,
    pub plans: Vec<PlanDecl>,
    #[serde(default)]
    pub compare: Vec<CompareDecl>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub tiers: Vec<TierDecl>,
    pub network: NetworkDecl,
    pub application: App,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Weights>,
    /// Plan edge proxies for stateful microservices before simulating.
    #[serde(default)]
    pub proxies: bool,
    #[serde(default)]
    pub traces: Vec<TraceDecl>,
    #[serde(default)]
    pub workloads: Vec<Workload>,
    #[serde(default)]
    pub scheduler: SchedulerDecl,
    #[serde(default)]
    pub monitor: MonitorConfig,
    #[serde(default)]
    pub simulation: SimulationDecl,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deployment: Option<DeploymentDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zones: Option<ZoneRegistry>,
    #[serde(default)]
    pub requests: Vec<DeployRequest>,
}

/// A parsed and cross-checked scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub file: ScenarioFile,
    /// The application as declared.
    pub problem: Problem,
    /// What the simulator runs: `problem` rewritten with proxies when they
    /// are enabled and help.
    pub sim_problem: Problem,
    pub proxies: Vec<ProxyRule>,
    pub traces: BTreeMap<(usize, Direction), StepTrace>,
}

/// First 1-based line of `raw` containing `needle` quoted.
pub fn line_of(raw: &str, needle: &str) -> Option<usize> {
    let quoted = format!("\"{needle}\"");
    raw.lines().position(|l| l.contains(&quoted)).map(|i| i + 1)
}

fn violation_subject(v: &Violation) -> Option<String> {
    use Violation::*;
    Some(match v {
        NoTiers => return None,
        DuplicateTier(t) | NonPositivePrice(t) => t.clone(),
        NonContiguousRank { tier, .. } => tier.clone(),
        PriceIncreasesWithRank { upper, .. } => upper.clone(),
        UnknownTier { tier, .. } => tier.clone(),
        BoundTierWithoutServiceTime { ms, .. } | NegativeServiceTime { ms, .. } => ms.clone(),
        DuplicateMicroservice(m) | NoServiceTime(m) | NonPositiveShare(m) => m.clone(),
        DuplicateLink(l) | SelfLoop(l) | NegativeData(l) => l.from.clone(),
        UnknownLinkEndpoint { endpoint, .. } => endpoint.clone(),
        DuplicatePipeline(p) | EmptyPipeline(p) | NonPositiveConstraint(p) => p.clone(),
        RepeatedPipelineVertex { pipeline, .. } => pipeline.clone(),
        UnknownPipelineVertex { ms, .. } => ms.clone(),
        MissingPipelineLink { pipeline, .. } => pipeline.clone(),
    })
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::at(None, format!("{}: {e}", path.display())))?;
        Self::parse(&raw)
    }

    pub fn parse(raw: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(raw).map_err(|e| ScenarioError {
            line: Some(e.line()),
            column: Some(e.column()),
            message: e.to_string().split(" at line ").next().unwrap_or_default().to_string(),
        })?;
        Self::resolve(file, raw)
    }

    /// Serializes back to the file format.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("scenario serializes")
    }

    fn resolve(file: ScenarioFile, raw: &str) -> Result<Self, ScenarioError> {
        let err = |needle: &str, msg: String| ScenarioError::at(line_of(raw, needle), msg);

        let tiers = TierChain::new(
            file.tiers
                .iter()
                .map(|t| Tier::new(t.id.clone(), t.rank, t.price_rate))
                .collect(),
        )
        .map_err(|e| match &e {
            edgecut_core::ModelError::InvalidTiers(v) => {
                let line = v
                    .first()
                    .and_then(violation_subject)
                    .and_then(|s| line_of(raw, &s))
                    .or_else(|| line_of(raw, "tiers"));
                ScenarioError::at(line, format!("tiers: {e}"))
            }
            _ => err("tiers", format!("tiers: {e}")),
        })?;
        for (i, t) in file.tiers.iter().enumerate() {
            if !(t.vcpus > 0.0) {
                return Err(err(&t.id, format!("tiers[{i}].vcpus must be positive")));
            }
        }

        let net = resolve_network(&file.network, &tiers, raw)?;
        let mut problem = PartitionProblem::new(file.application.clone(), tiers.clone(), net);
        if let Some(w) = file.weights {
            problem = problem.with_weights(w);
        }
        problem.validate().map_err(|e| match &e {
            PartitionError::Application(v) => {
                let line = v.first().and_then(violation_subject).and_then(|s| line_of(raw, &s));
                ScenarioError::at(line, format!("application: {e}"))
            }
            PartitionError::NoFeasibleTier(m) | PartitionError::MissingConstraint(m) => {
                err(m, format!("application: {e}"))
            }
            PartitionError::Network(_) => err("network", format!("network: {e}")),
            _ => ScenarioError::at(None, e.to_string()),
        })?;

        let mut traces = BTreeMap::new();
        for (i, t) in file.traces.iter().enumerate() {
            let k = hop_index(&tiers, &t.hop.0, &t.hop.1).ok_or_else(|| {
                let bad = if tiers.get(&t.hop.0).is_none() { &t.hop.0 } else { &t.hop.1 };
                err(
                    bad,
                    format!(
                        "traces[{i}].hop: no hop between \"{}\" and \"{}\"",
                        t.hop.0, t.hop.1
                    ),
                )
            })?;
            if traces.insert((k, t.direction), t.points.clone()).is_some() {
                return Err(err(
                    &t.hop.0,
                    format!("traces[{i}]: second trace for the same hop direction"),
                ));
            }
        }

        for (i, w) in file.workloads.iter().enumerate() {
            if problem.app.pipeline(w.pipeline()).is_none() {
                return Err(err(
                    w.pipeline(),
                    format!("workloads[{i}].pipeline: unknown pipeline \"{}\"", w.pipeline()),
                ));
            }
        }

        if let Some(p) = &file.simulation.placement {
            for (m, t) in p.iter() {
                if problem.app.microservice(m).is_none() {
                    return Err(err(m, format!("simulation.placement: unknown microservice \"{m}\"")));
                }
                if tiers.get(t).is_none() {
                    return Err(err(t, format!("simulation.placement: unknown tier \"{t}\"")));
                }
            }
            p.validate(&problem.app, &tiers)
                .map_err(|e| err("placement", format!("simulation.placement: {e}")))?;
        }

        if let Some(d) = &file.deployment {
            let names: Vec<&str> = d.plans.iter().map(|p| p.name.as_str()).collect();
            for (i, c) in d.compare.iter().enumerate() {
                for n in [&c.plan, &c.baseline] {
                    if !names.contains(&n.as_str()) {
                        return Err(err(n, format!("deployment.compare[{i}]: unknown plan \"{n}\"")));
                    }
                }
            }
            let catalog = instance_catalog::<f64>();
            for (i, o) in d.prices.iter().enumerate() {
                if !catalog.iter().any(|c| c.name == o.instance_type) {
                    return Err(err(
                        &o.instance_type,
                        format!("deployment.prices[{i}]: unknown instance type \"{}\"", o.instance_type),
                    ));
                }
            }
            for (i, p) in d.plans.iter().enumerate() {
                for (j, r) in p.instances.iter().enumerate() {
                    if !catalog.iter().any(|c| c.name == r.instance_type) {
                        return Err(err(
                            &r.instance_type,
                            format!(
                                "deployment.plans[{i}].instances[{j}]: unknown instance type \"{}\"",
                                r.instance_type
                            ),
                        ));
                    }
                    if r.count.is_some() && r.cameras.is_some() {
                        return Err(err(
                            &p.name,
                            format!("deployment.plans[{i}].instances[{j}]: give count or cameras, not both"),
                        ));
                    }
                }
            }
        }

        for (i, r) in file.requests.iter().enumerate() {
            if r.app != problem.app.name {
                return Err(err(&r.app, format!("requests[{i}].app: unknown application \"{}\"", r.app)));
            }
        }

        let (sim_problem, proxies) = if file.proxies {
            let planned = plan_with_proxies(&problem, &solve_options(&file.scheduler, file.simulation.seed))
                .map_err(|e| ScenarioError::at(line_of(raw, "proxies"), format!("proxies: {e}")))?;
            (planned.problem, planned.rules)
        } else {
            (problem.clone(), Vec::new())
        };

        let scenario = Self {
            file,
            problem,
            sim_problem,
            proxies,
            traces,
        };
        scenario
            .sim_setup()
            .validate()
            .map_err(|e| ScenarioError::at(None, e.to_string()))?;
        Ok(scenario)
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn planner(&self) -> Planner {
        Planner {
            options: solve_options(&self.file.scheduler, self.file.simulation.seed),
            multi_tier: self.file.scheduler.multi_tier,
        }
    }

    pub fn sim_setup(&self) -> SimSetup {
        let vcpus = self
            .file
            .tiers
            .iter()
            .map(|t| (t.id.clone(), t.vcpus))
            .collect();
        SimSetup {
            problem: self.sim_problem.clone(),
            proxies: self.proxies.clone(),
            vcpus,
            traces: self.traces.clone(),
            workloads: self.file.workloads.clone(),
            scheduler: self.file.scheduler.config(),
            monitor: self.file.monitor,
            planner: self.planner(),
            placement: self.file.simulation.placement.clone(),
        }
    }

    pub fn sim_options(&self) -> SimOptions {
        let s = &self.file.simulation;
        SimOptions {
            duration_s: s.duration_s,
            seed: s.seed,
            dynamic: s.dynamic,
            jitter: s.jitter,
            sync: s.sync,
        }
    }

    /// The declared problem with every traced bandwidth replaced by its
    /// value at `t`. Past the last breakpoint the last value holds.
    pub fn problem_at(&self, t: f64) -> Problem {
        let mut p = self.problem.clone();
        for (&(k, dir), trace) in &self.traces {
            let Some(v) = trace.value_at(t) else {
                continue;
            };
            let v = v.max(edgecut_core::perf::BANDWIDTH_FLOOR_MBPS);
            let (lo, hi) = (p.tiers.at(k).id.clone(), p.tiers.at(k + 1).id.clone());
            let hop = p.net.hop_mut(&lo, &hi).expect("validated network");
            match dir {
                Direction::Up => hop.bw_upload = v,
                Direction::Down => hop.bw_download = v,
            }
        }
        p
    }

    pub fn catalog(&self) -> Vec<InstanceType<f64>> {
        let mut catalog = instance_catalog::<f64>();
        if let Some(d) = &self.file.deployment {
            for o in &d.prices {
                if let Some(it) = catalog.iter_mut().find(|c| c.name == o.instance_type) {
                    match o.zone {
                        ZoneKind::Wavelength => it.wavelength_hourly = Some(o.hourly),
                        ZoneKind::Availability => it.availability_hourly = Some(o.hourly),
                    }
                }
            }
        }
        catalog
    }

    pub fn storage_rates(&self) -> StorageRates<f64> {
        self.file
            .deployment
            .as_ref()
            .and_then(|d| d.storage_rates)
            .unwrap_or_default()
    }

    pub fn plans(&self) -> Vec<DeploymentPlan> {
        let Some(d) = &self.file.deployment else {
            return Vec::new();
        };
        d.plans
            .iter()
            .map(|p| {
                let mut plan = match p.fixture {
                    Some(PlanFixture::AzOnly) => pricing::az_only(p.cameras),
                    Some(PlanFixture::WlOnly) => pricing::wl_only(p.cameras),
                    Some(PlanFixture::Hybrid) => pricing::hybrid(p.cameras),
                    Some(PlanFixture::StaticRelay) => pricing::static_relay(p.cameras),
                    None => DeploymentPlan::new(p.name.clone(), p.cameras),
                };
                plan.name = p.name.clone();
                for r in &p.instances {
                    plan = match r.count {
                        Some(n) => plan.with(r.zone, &r.instance_type, r.role, n),
                        None => plan.sized(r.zone, &r.instance_type, r.role, r.cameras.unwrap_or(p.cameras)),
                    };
                }
                plan
            })
            .collect()
    }

    /// Monthly cost of every plan, in declaration order.
    pub fn costs(&self) -> Result<Vec<(DeploymentPlan, MonthlyCost<f64>)>, pricing::CostError> {
        let catalog = self.catalog();
        let storage = self.storage_rates();
        self.plans()
            .into_iter()
            .map(|p| monthly_cost(&p, &catalog, &storage).map(|c| (p, c)))
            .collect()
    }
}

fn solve_options(s: &SchedulerDecl, seed: u64) -> SolveOptions {
    SolveOptions {
        mode: if s.exact_only {
            SolverMode::ExactOnly
        } else {
            SolverMode::Auto
        },
        seed,
        ..SolveOptions::default()
    }
}

fn hop_index(tiers: &TierChain<f64>, lower: &str, upper: &str) -> Option<usize> {
    let (a, b) = (tiers.index_of(lower)?, tiers.index_of(upper)?);
    (b == a + 1).then_some(a)
}

fn resolve_network(decl: &NetworkDecl, tiers: &TierChain<f64>, raw: &str) -> Result<Network, ScenarioError> {
    let err = |needle: &str, msg: String| ScenarioError::at(line_of(raw, needle), msg);
    if let Some(f) = &decl.fixture {
        if fixtures::network_table(f).is_none() {
            return Err(err(f, format!("network.fixture: unknown fixture \"{f}\"")));
        }
    }
    let mut net = Network::new();
    for (i, h) in decl.hops.iter().enumerate() {
        for t in [&h.lower, &h.upper] {
            if tiers.get(t).is_none() {
                return Err(err(t, format!("network.hops[{i}]: unknown tier \"{t}\"")));
            }
        }
        if hop_index(tiers, &h.lower, &h.upper).is_none() {
            return Err(err(
                &h.upper,
                format!("network.hops[{i}]: \"{}\" is not the tier right above \"{}\"", h.upper, h.lower),
            ));
        }
        let base = match &h.link {
            Some(link) => {
                let loc = decl.fixture.as_deref().unwrap_or("location-1");
                fixtures::measured_hop::<f64>(loc, link).ok_or_else(|| {
                    err(link, format!("network.hops[{i}].link: no row \"{link}\" in {loc}"))
                })?
            }
            None => HopParams::new(0.0, 0.0, 0.0),
        };
        let params = HopParams::new(
            h.bw_upload.unwrap_or(base.bw_upload),
            h.bw_download.unwrap_or(base.bw_download),
            h.rtt_s.unwrap_or(base.rtt),
        );
        if !(params.bw_upload > 0.0) || !(params.bw_download > 0.0) {
            return Err(err(
                &h.upper,
                format!("network.hops[{i}]: bandwidths must be positive (give link or bw_upload/bw_download)"),
            ));
        }
        net.set_hop(&h.lower, &h.upper, params);
    }
    Ok(net)
}
