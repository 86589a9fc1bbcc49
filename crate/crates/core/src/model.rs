//! Application graph, tier chain and placement types.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// One compute layer. Rank 0 sits next to the data source; higher ranks move
/// toward the central cloud.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tier<T> {
    pub id: String,
    pub rank: u32,
    /// Currency per compute-second.
    pub price_rate: T,
}

impl<T: Scalar> Tier<T> {
    pub fn new(id: impl Into<String>, rank: u32, price_rate: T) -> Self {
        Self {
            id: id.into(),
            rank,
            price_rate,
        }
    }
}

/// Tiers ordered by rank. Ranks are contiguous from zero, so a tier's rank is
/// also its index in the chain.
#[derive(Clone, Debug, PartialEq)]
pub struct TierChain<T> {
    tiers: Vec<Tier<T>>,
}

impl<T: Scalar> TierChain<T> {
    pub fn new(mut tiers: Vec<Tier<T>>) -> Result<Self, ModelError> {
        tiers.sort_by_key(|t| t.rank);
        let violations = check_tiers(&tiers);
        if violations.is_empty() {
            Ok(Self { tiers })
        } else {
            Err(ModelError::InvalidTiers(violations))
        }
    }

    pub fn tiers(&self) -> &[Tier<T>] {
        &self.tiers
    }

    pub fn len(&self) -> usize {
        self.tiers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiers.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.tiers.iter().position(|t| t.id == id)
    }

    pub fn get(&self, id: &str) -> Option<&Tier<T>> {
        self.tiers.iter().find(|t| t.id == id)
    }

    pub fn at(&self, rank: usize) -> &Tier<T> {
        &self.tiers[rank]
    }

    /// The rank-0 tier.
    pub fn edge(&self) -> &Tier<T> {
        &self.tiers[0]
    }

    pub fn rank_of(&self, id: &str) -> Result<usize, ModelError> {
        self.index_of(id)
            .ok_or_else(|| ModelError::UnknownTier(id.to_string()))
    }

    /// Drops every tier above `top` (inclusive bound).
    pub fn truncated(&self, top: usize) -> Self {
        Self {
            tiers: self.tiers[..=top].to_vec(),
        }
    }

    pub fn with_price(&self, id: &str, price_rate: T) -> Self {
        let mut out = self.clone();
        for t in &mut out.tiers {
            if t.id == id {
                t.price_rate = price_rate;
            }
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> TierChain<U> {
        TierChain {
            tiers: self
                .tiers
                .iter()
                .map(|t| Tier::new(t.id.clone(), t.rank, cast_scalar(t.price_rate)))
                .collect(),
        }
    }
}

fn check_tiers<T: Scalar>(tiers: &[Tier<T>]) -> Vec<Violation> {
    let mut out = Vec::new();
    if tiers.is_empty() {
        out.push(Violation::NoTiers);
        return out;
    }
    let mut seen = BTreeSet::new();
    for (i, t) in tiers.iter().enumerate() {
        if !seen.insert(t.id.as_str()) {
            out.push(Violation::DuplicateTier(t.id.clone()));
        }
        if t.rank as usize != i {
            out.push(Violation::NonContiguousRank {
                tier: t.id.clone(),
                rank: t.rank,
            });
        }
        if !(t.price_rate > T::zero()) {
            out.push(Violation::NonPositivePrice(t.id.clone()));
        }
        if i > 0 && t.price_rate > tiers[i - 1].price_rate {
            out.push(Violation::PriceIncreasesWithRank {
                lower: tiers[i - 1].id.clone(),
                upper: t.id.clone(),
            });
        }
    }
    out
}

/// Background state a microservice owns outside the critical path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct StatefulStore<T> {
    pub store: String,
    #[serde(default)]
    pub proxy: ProxyConfig<T>,
}

/// Parameters for the edge-side proxy generated for a stateful microservice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct ProxyConfig<T> {
    /// Seconds per unit at the proxy's tier. Defaults to the target's own
    /// service time there (or its fastest tier).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service_time: Option<T>,
    #[serde(default = "default_sync_interval")]
    pub sync_interval_s: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_record_mbit")]
    pub record_mbit: f64,
    #[serde(default = "default_overhead_mbit")]
    pub overhead_mbit: f64,
}

fn default_sync_interval() -> f64 {
    1.0
}
fn default_batch_size() -> usize {
    1000
}
fn default_record_mbit() -> f64 {
    0.001
}
fn default_overhead_mbit() -> f64 {
    0.01
}
fn default_vcpu_share() -> f64 {
    1.0
}

impl<T> Default for ProxyConfig<T> {
    fn default() -> Self {
        Self {
            service_time: None,
            sync_interval_s: default_sync_interval(),
            batch_size: default_batch_size(),
            record_mbit: default_record_mbit(),
            overhead_mbit: default_overhead_mbit(),
        }
    }
}

/// A vertex of the application graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct MicroserviceSpec<T> {
    pub id: String,
    /// Seconds per unit of work, keyed by tier id. A missing tier means the
    /// microservice cannot run there.
    pub service_time: BTreeMap<String, T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_tier: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stateful_store: Option<StatefulStore<T>>,
    /// vCPUs a running stage occupies; only the simulator and the
    /// orchestration capacity checks read it.
    #[serde(default = "default_vcpu_share")]
    pub vcpu_share: f64,
}

impl<T: Scalar> MicroserviceSpec<T> {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            service_time: BTreeMap::new(),
            bound_tier: None,
            stateful_store: None,
            vcpu_share: default_vcpu_share(),
        }
    }

    pub fn at(mut self, tier: impl Into<String>, seconds: T) -> Self {
        self.service_time.insert(tier.into(), seconds);
        self
    }

    pub fn bound_to(mut self, tier: impl Into<String>) -> Self {
        self.bound_tier = Some(tier.into());
        self
    }

    pub fn with_store(mut self, store: impl Into<String>, proxy: ProxyConfig<T>) -> Self {
        self.stateful_store = Some(StatefulStore {
            store: store.into(),
            proxy,
        });
        self
    }

    pub fn with_vcpu_share(mut self, share: f64) -> Self {
        self.vcpu_share = share;
        self
    }

    pub fn can_run_at(&self, tier: &str) -> bool {
        self.service_time.contains_key(tier)
            && self.bound_tier.as_deref().map_or(true, |b| b == tier)
    }
}

/// Identifies a directed communication link.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkId {
    pub from: String,
    pub to: String,
}

impl LinkId {
    pub fn new(from: impl Into<String>, to: impl Into<String>) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
        }
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.from, self.to)
    }
}

/// A directed edge of the application graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(deserialize = "T: num_traits::Zero + Deserialize<'de>"))]
pub struct CommLinkSpec<T> {
    pub from: String,
    pub to: String,
    /// Megabits per unit sent from `from` to `to`.
    pub data_in: T,
    /// Megabits per unit returned from `to` to `from`.
    #[serde(default = "num_traits::Zero::zero")]
    pub data_out: T,
}

impl<T: Scalar> CommLinkSpec<T> {
    pub fn new(from: impl Into<String>, to: impl Into<String>, data_in: T, data_out: T) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            data_in,
            data_out,
        }
    }

    pub fn id(&self) -> LinkId {
        LinkId::new(self.from.clone(), self.to.clone())
    }
}

/// An ordered chain of microservices with a per-unit latency budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalPipeline<T> {
    pub id: String,
    pub path: Vec<String>,
    /// Seconds per unit of work.
    pub latency_constraint: T,
}

impl<T: Scalar> CriticalPipeline<T> {
    pub fn new(id: impl Into<String>, path: &[&str], latency_constraint: T) -> Self {
        Self {
            id: id.into(),
            path: path.iter().map(|s| s.to_string()).collect(),
            latency_constraint,
        }
    }

    /// Consecutive `(from, to)` pairs along the path.
    pub fn hops(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.path
            .windows(2)
            .map(|w| (w[0].as_str(), w[1].as_str()))
    }
}

/// `G = (V, E)` plus the critical pipelines declared on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(deserialize = "T: num_traits::Zero + Deserialize<'de>"))]
pub struct ApplicationGraph<T> {
    #[serde(default)]
    pub name: String,
    pub microservices: Vec<MicroserviceSpec<T>>,
    #[serde(default)]
    pub links: Vec<CommLinkSpec<T>>,
    #[serde(default)]
    pub pipelines: Vec<CriticalPipeline<T>>,
}

impl<T: Scalar> ApplicationGraph<T> {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            microservices: Vec::new(),
            links: Vec::new(),
            pipelines: Vec::new(),
        }
    }

    pub fn microservice(&self, id: &str) -> Option<&MicroserviceSpec<T>> {
        self.microservices.iter().find(|m| m.id == id)
    }

    pub fn microservice_mut(&mut self, id: &str) -> Option<&mut MicroserviceSpec<T>> {
        self.microservices.iter_mut().find(|m| m.id == id)
    }

    pub fn link(&self, from: &str, to: &str) -> Option<&CommLinkSpec<T>> {
        self.links.iter().find(|l| l.from == from && l.to == to)
    }

    pub fn pipeline(&self, id: &str) -> Option<&CriticalPipeline<T>> {
        self.pipelines.iter().find(|p| p.id == id)
    }

    /// Every microservice that appears on some critical pipeline.
    pub fn pipeline_members(&self) -> BTreeSet<&str> {
        self.pipelines
            .iter()
            .flat_map(|p| p.path.iter().map(String::as_str))
            .collect()
    }

    /// Converts every scalar through `f64`. Exact for values representable
    /// in both types.
    pub fn cast<U: Scalar>(&self) -> ApplicationGraph<U> {
        ApplicationGraph {
            name: self.name.clone(),
            microservices: self
                .microservices
                .iter()
                .map(|m| MicroserviceSpec {
                    id: m.id.clone(),
                    service_time: m
                        .service_time
                        .iter()
                        .map(|(k, v)| (k.clone(), cast_scalar(*v)))
                        .collect(),
                    bound_tier: m.bound_tier.clone(),
                    stateful_store: m.stateful_store.as_ref().map(|s| StatefulStore {
                        store: s.store.clone(),
                        proxy: ProxyConfig {
                            service_time: s.proxy.service_time.map(cast_scalar),
                            sync_interval_s: s.proxy.sync_interval_s,
                            batch_size: s.proxy.batch_size,
                            record_mbit: s.proxy.record_mbit,
                            overhead_mbit: s.proxy.overhead_mbit,
                        },
                    }),
                    vcpu_share: m.vcpu_share,
                })
                .collect(),
            links: self
                .links
                .iter()
                .map(|l| {
                    CommLinkSpec::new(
                        l.from.clone(),
                        l.to.clone(),
                        cast_scalar(l.data_in),
                        cast_scalar(l.data_out),
                    )
                })
                .collect(),
            pipelines: self
                .pipelines
                .iter()
                .map(|p| CriticalPipeline {
                    id: p.id.clone(),
                    path: p.path.clone(),
                    latency_constraint: cast_scalar(p.latency_constraint),
                })
                .collect(),
        }
    }
}

pub(crate) fn cast_scalar<T: Scalar, U: Scalar>(v: T) -> U {
    U::lit(v.as_f64())
}

/// A structural problem found by validation. Violations are data, not faults.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("tier chain is empty")]
    NoTiers,
    #[error("duplicate tier {0}")]
    DuplicateTier(String),
    #[error("tier {tier} has rank {rank}; ranks must be contiguous from 0")]
    NonContiguousRank { tier: String, rank: u32 },
    #[error("tier {0} has a non-positive price rate")]
    NonPositivePrice(String),
    #[error("price rate increases from {lower} to {upper}")]
    PriceIncreasesWithRank { lower: String, upper: String },
    #[error("duplicate microservice {0}")]
    DuplicateMicroservice(String),
    #[error("microservice {0} has no service times")]
    NoServiceTime(String),
    #[error("microservice {ms} has a negative service time at {tier}")]
    NegativeServiceTime { ms: String, tier: String },
    #[error("microservice {ms} is bound to {tier} but has no service time there")]
    BoundTierWithoutServiceTime { ms: String, tier: String },
    #[error("microservice {ms} references unknown tier {tier}")]
    UnknownTier { ms: String, tier: String },
    #[error("microservice {0} has a non-positive vCPU share")]
    NonPositiveShare(String),
    #[error("duplicate link {0}")]
    DuplicateLink(LinkId),
    #[error("link {0} is a self-loop")]
    SelfLoop(LinkId),
    #[error("link {link} references unknown microservice {endpoint}")]
    UnknownLinkEndpoint { link: LinkId, endpoint: String },
    #[error("link {0} has negative data volume")]
    NegativeData(LinkId),
    #[error("duplicate pipeline {0}")]
    DuplicatePipeline(String),
    #[error("pipeline {0} has an empty path")]
    EmptyPipeline(String),
    #[error("pipeline {0} has a non-positive latency constraint")]
    NonPositiveConstraint(String),
    #[error("pipeline {pipeline} visits {ms} more than once")]
    RepeatedPipelineVertex { pipeline: String, ms: String },
    #[error("pipeline path references unknown microservice {ms} (pipeline {pipeline})")]
    UnknownPipelineVertex { pipeline: String, ms: String },
    #[error("pipeline {pipeline} uses undeclared link {link}")]
    MissingPipelineLink { pipeline: String, link: LinkId },
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid tier chain: {}", join(.0))]
    InvalidTiers(Vec<Violation>),
    #[error("unknown tier {0}")]
    UnknownTier(String),
    #[error("unknown pipeline {0}")]
    UnknownPipeline(String),
    #[error("invalid placement: {0}")]
    InvalidPlacement(String),
}

pub(crate) fn join<E: fmt::Display>(items: &[E]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Checks the graph's own invariants. Returns an empty list iff the graph is
/// well formed.
pub fn validate_application<T: Scalar>(app: &ApplicationGraph<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for ms in &app.microservices {
        if !ids.insert(ms.id.as_str()) {
            out.push(Violation::DuplicateMicroservice(ms.id.clone()));
        }
        if ms.service_time.is_empty() {
            out.push(Violation::NoServiceTime(ms.id.clone()));
        }
        for (tier, t) in &ms.service_time {
            if *t < T::zero() {
                out.push(Violation::NegativeServiceTime {
                    ms: ms.id.clone(),
                    tier: tier.clone(),
                });
            }
        }
        if let Some(b) = &ms.bound_tier {
            if !ms.service_time.contains_key(b) {
                out.push(Violation::BoundTierWithoutServiceTime {
                    ms: ms.id.clone(),
                    tier: b.clone(),
                });
            }
        }
        if !(ms.vcpu_share > 0.0) {
            out.push(Violation::NonPositiveShare(ms.id.clone()));
        }
    }

    let mut link_ids = BTreeSet::new();
    for l in &app.links {
        let id = l.id();
        if !link_ids.insert(id.clone()) {
            out.push(Violation::DuplicateLink(id.clone()));
        }
        if l.from == l.to {
            out.push(Violation::SelfLoop(id.clone()));
        }
        for end in [&l.from, &l.to] {
            if !ids.contains(end.as_str()) {
                out.push(Violation::UnknownLinkEndpoint {
                    link: id.clone(),
                    endpoint: end.clone(),
                });
            }
        }
        if l.data_in < T::zero() || l.data_out < T::zero() {
            out.push(Violation::NegativeData(id));
        }
    }

    let mut pipeline_ids = BTreeSet::new();
    for p in &app.pipelines {
        if !pipeline_ids.insert(p.id.as_str()) {
            out.push(Violation::DuplicatePipeline(p.id.clone()));
        }
        if p.path.is_empty() {
            out.push(Violation::EmptyPipeline(p.id.clone()));
        }
        if !(p.latency_constraint > T::zero()) {
            out.push(Violation::NonPositiveConstraint(p.id.clone()));
        }
        let mut visited = BTreeSet::new();
        for ms in &p.path {
            if !ids.contains(ms.as_str()) {
                out.push(Violation::UnknownPipelineVertex {
                    pipeline: p.id.clone(),
                    ms: ms.clone(),
                });
            }
            if !visited.insert(ms.as_str()) {
                out.push(Violation::RepeatedPipelineVertex {
                    pipeline: p.id.clone(),
                    ms: ms.clone(),
                });
            }
        }
        for (a, b) in p.hops() {
            if !link_ids.contains(&LinkId::new(a, b)) {
                out.push(Violation::MissingPipelineLink {
                    pipeline: p.id.clone(),
                    link: LinkId::new(a, b),
                });
            }
        }
    }
    out
}

/// Checks that every tier a microservice mentions exists in the chain.
pub fn validate_against_tiers<T: Scalar>(
    app: &ApplicationGraph<T>,
    tiers: &TierChain<T>,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for ms in &app.microservices {
        for tier in ms.service_time.keys().chain(ms.bound_tier.iter()) {
            if tiers.index_of(tier).is_none() {
                out.push(Violation::UnknownTier {
                    ms: ms.id.clone(),
                    tier: tier.clone(),
                });
            }
        }
    }
    out
}

/// Assignment of each microservice to a tier id.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Placement {
    assignment: BTreeMap<String, String>,
}

impl Placement {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        Self {
            assignment: pairs
                .into_iter()
                .map(|(m, t)| (m.to_string(), t.to_string()))
                .collect(),
        }
    }

    /// Every microservice of `app` on `tier`.
    pub fn uniform<T: Scalar>(app: &ApplicationGraph<T>, tier: &str) -> Self {
        Self::from_pairs(app.microservices.iter().map(|m| (m.id.as_str(), tier)))
    }

    pub fn tier_of(&self, ms: &str) -> Option<&str> {
        self.assignment.get(ms).map(String::as_str)
    }

    pub fn assign(&mut self, ms: impl Into<String>, tier: impl Into<String>) {
        self.assignment.insert(ms.into(), tier.into());
    }

    pub fn remove(&mut self, ms: &str) -> Option<String> {
        self.assignment.remove(ms)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.assignment
            .iter()
            .map(|(m, t)| (m.as_str(), t.as_str()))
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Microservices on `tier`, in id order.
    pub fn on_tier<'a>(&'a self, tier: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.iter().filter(move |(_, t)| *t == tier).map(|(m, _)| m)
    }

    /// Checks totality over `app`, that tiers exist, that bound microservices
    /// stay put and that each microservice can run where it is placed.
    pub fn validate<T: Scalar>(
        &self,
        app: &ApplicationGraph<T>,
        tiers: &TierChain<T>,
    ) -> Result<(), ModelError> {
        self.check_cover(app)?;
        for ms in &app.microservices {
            let tier = self.tier_of(&ms.id).expect("checked by check_cover");
            if tiers.index_of(tier).is_none() {
                return Err(ModelError::InvalidPlacement(format!(
                    "{} placed on unknown tier {tier}",
                    ms.id
                )));
            }
            if let Some(b) = &ms.bound_tier {
                if b != tier {
                    return Err(ModelError::InvalidPlacement(format!(
                        "{} is bound to {b} but placed on {tier}",
                        ms.id
                    )));
                }
            }
            if !ms.service_time.contains_key(tier) {
                return Err(ModelError::InvalidPlacement(format!(
                    "{} cannot run on {tier}",
                    ms.id
                )));
            }
        }
        Ok(())
    }

    fn check_cover<T: Scalar>(&self, app: &ApplicationGraph<T>) -> Result<(), ModelError> {
        for m in self.assignment.keys() {
            if app.microservice(m).is_none() {
                return Err(ModelError::InvalidPlacement(format!(
                    "unknown microservice {m}"
                )));
            }
        }
        for ms in &app.microservices {
            if !self.assignment.contains_key(&ms.id) {
                return Err(ModelError::InvalidPlacement(format!(
                    "{} is not placed",
                    ms.id
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|(m, t)| format!("{m}:{t}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Links whose endpoints sit on different tiers (`E_cut`).
pub fn cut_edges<T: Scalar>(
    app: &ApplicationGraph<T>,
    placement: &Placement,
) -> Result<BTreeSet<LinkId>, ModelError> {
    placement.check_cover(app)?;
    Ok(app
        .links
        .iter()
        .filter(|l| placement.tier_of(&l.from) != placement.tier_of(&l.to))
        .map(CommLinkSpec::id)
        .collect())
}

/// The indicator flags `F_v` and `F_e`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Flags {
    pub vertex: BTreeMap<String, u8>,
    pub link: BTreeMap<LinkId, u8>,
}

/// `F_v = 1` iff `v` is on `edge_tier`; `F_e = 1` iff `e` is cut.
pub fn derive_flags<T: Scalar>(
    app: &ApplicationGraph<T>,
    placement: &Placement,
    edge_tier: &str,
) -> Result<Flags, ModelError> {
    let cut = cut_edges(app, placement)?;
    let vertex = app
        .microservices
        .iter()
        .map(|m| {
            let on_edge = placement.tier_of(&m.id) == Some(edge_tier);
            (m.id.clone(), u8::from(on_edge))
        })
        .collect();
    let link = app
        .links
        .iter()
        .map(|l| {
            let id = l.id();
            let f = u8::from(cut.contains(&id));
            (id, f)
        })
        .collect();
    Ok(Flags { vertex, link })
}
