//! Vertex weights, communication weights, pipeline latency and total cost.
//!
//! Communication between tiers that are not adjacent in the chain is the sum
//! of the per-hop weights along the chain. Data moving toward a higher rank
//! pays the upload bandwidth of each hop, data moving down pays the download
//! bandwidth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    cast_scalar, ApplicationGraph, CommLinkSpec, ModelError, MicroserviceSpec, Placement, Tier,
    TierChain,
};
use crate::scalar::Scalar;

/// Replaces a zero bandwidth so that dead links give huge but finite times.
pub const BANDWIDTH_FLOOR_MBPS: f64 = 1e-6;

pub fn effective_bandwidth<T: Scalar>(bw: T) -> T {
    bw.max_of(T::lit(BANDWIDTH_FLOOR_MBPS))
}

/// Link characteristics between two adjacent tiers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(deserialize = "T: num_traits::Zero + Deserialize<'de>"))]
pub struct HopParams<T> {
    /// Megabits per second, lower rank to higher rank.
    pub bw_upload: T,
    /// Megabits per second, higher rank to lower rank.
    pub bw_download: T,
    /// Round-trip latency in seconds. Informational only.
    #[serde(default = "num_traits::Zero::zero")]
    pub rtt: T,
}

impl<T: Scalar> HopParams<T> {
    pub fn new(bw_upload: T, bw_download: T, rtt: T) -> Self {
        Self {
            bw_upload,
            bw_download,
            rtt,
        }
    }
}

/// Per adjacent tier pair link parameters, keyed by `(lower id, upper id)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NetworkState<T> {
    hops: BTreeMap<(String, String), HopParams<T>>,
}

impl<T: Scalar> NetworkState<T> {
    pub fn new() -> Self {
        Self {
            hops: BTreeMap::new(),
        }
    }

    pub fn with_hop(mut self, lower: &str, upper: &str, params: HopParams<T>) -> Self {
        self.set_hop(lower, upper, params);
        self
    }

    pub fn set_hop(&mut self, lower: &str, upper: &str, params: HopParams<T>) {
        self.hops
            .insert((lower.to_string(), upper.to_string()), params);
    }

    pub fn hop(&self, lower: &str, upper: &str) -> Option<&HopParams<T>> {
        self.hops.get(&(lower.to_string(), upper.to_string()))
    }

    pub fn hop_mut(&mut self, lower: &str, upper: &str) -> Option<&mut HopParams<T>> {
        self.hops.get_mut(&(lower.to_string(), upper.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &HopParams<T>)> {
        self.hops
            .iter()
            .map(|((l, u), p)| (l.as_str(), u.as_str(), p))
    }

    /// Hop between rank `k` and rank `k + 1`.
    pub fn hop_at(&self, tiers: &TierChain<T>, k: usize) -> Result<&HopParams<T>, PerfError> {
        let lower = &tiers.at(k).id;
        let upper = &tiers.at(k + 1).id;
        self.hop(lower, upper).ok_or_else(|| PerfError::MissingHop {
            lower: lower.clone(),
            upper: upper.clone(),
        })
    }

    /// Problems with this network for `tiers`: missing hops and non-positive
    /// bandwidths.
    pub fn check(&self, tiers: &TierChain<T>) -> Vec<String> {
        let mut out = Vec::new();
        for k in 0..tiers.len().saturating_sub(1) {
            match self.hop_at(tiers, k) {
                Err(e) => out.push(e.to_string()),
                Ok(h) => {
                    if !(h.bw_upload > T::zero()) || !(h.bw_download > T::zero()) {
                        out.push(format!(
                            "hop {}-{} has a non-positive bandwidth",
                            tiers.at(k).id,
                            tiers.at(k + 1).id
                        ));
                    }
                }
            }
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> NetworkState<U> {
        NetworkState {
            hops: self
                .hops
                .iter()
                .map(|(k, h)| {
                    (
                        k.clone(),
                        HopParams::new(
                            cast_scalar(h.bw_upload),
                            cast_scalar(h.bw_download),
                            cast_scalar(h.rtt),
                        ),
                    )
                })
                .collect(),
        }
    }
}

/// Relative weights of edge and cloud computation cost.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricingWeights<T> {
    pub c_edge: T,
    pub c_cloud: T,
}

impl<T: Scalar> Default for PricingWeights<T> {
    fn default() -> Self {
        Self {
            c_edge: T::one(),
            c_cloud: T::one(),
        }
    }
}

impl<T: Scalar> PricingWeights<T> {
    pub fn new(c_edge: T, c_cloud: T) -> Self {
        Self { c_edge, c_cloud }
    }

    pub fn is_valid(&self) -> bool {
        self.c_edge >= T::zero()
            && self.c_cloud >= T::zero()
            && (self.c_edge > T::zero() || self.c_cloud > T::zero())
    }

    /// `c_edge` for rank 0, `c_cloud` for every higher rank.
    pub fn for_rank(&self, rank: usize) -> T {
        if rank == 0 {
            self.c_edge
        } else {
            self.c_cloud
        }
    }

    pub fn cast<U: Scalar>(&self) -> PricingWeights<U> {
        PricingWeights::new(cast_scalar(self.c_edge), cast_scalar(self.c_cloud))
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum PerfError {
    #[error("{ms} has no service time at tier {tier}")]
    UnsupportedTier { ms: String, tier: String },
    #[error("no network hop between {lower} and {upper}")]
    MissingHop { lower: String, upper: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `w(v) = T_v × P_v` at the given tier.
pub fn vertex_weight<T: Scalar>(ms: &MicroserviceSpec<T>, tier: &Tier<T>) -> Result<T, PerfError> {
    ms.service_time
        .get(&tier.id)
        .map(|t| *t * tier.price_rate)
        .ok_or_else(|| PerfError::UnsupportedTier {
            ms: ms.id.clone(),
            tier: tier.id.clone(),
        })
}

/// `w(e) = data_in / bw_upload + data_out / bw_download` over one hop, with
/// `from` on the lower tier.
pub fn comm_weight<T: Scalar>(link: &CommLinkSpec<T>, hop: &HopParams<T>) -> T {
    link.data_in / effective_bandwidth(hop.bw_upload)
        + link.data_out / effective_bandwidth(hop.bw_download)
}

/// Seconds a unit spends crossing `link` when `from` runs at rank
/// `from_rank` and `to` at rank `to_rank`.
pub fn crossing_weight<T: Scalar>(
    link: &CommLinkSpec<T>,
    tiers: &TierChain<T>,
    net: &NetworkState<T>,
    from_rank: usize,
    to_rank: usize,
) -> Result<T, PerfError> {
    let (lo, hi) = if from_rank <= to_rank {
        (from_rank, to_rank)
    } else {
        (to_rank, from_rank)
    };
    let mut total = T::zero();
    for k in lo..hi {
        let hop = net.hop_at(tiers, k)?;
        let w = if from_rank < to_rank {
            comm_weight(link, hop)
        } else {
            link.data_in / effective_bandwidth(hop.bw_download)
                + link.data_out / effective_bandwidth(hop.bw_upload)
        };
        total = total + w;
    }
    Ok(total)
}

/// Latency of one pipeline split into its three terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PipelineLatency<T> {
    pub edge_processing: T,
    pub cloud_processing: T,
    pub communication: T,
    pub total: T,
}

impl<T: Scalar> PipelineLatency<T> {
    fn from_terms(edge: T, cloud: T, comm: T) -> Self {
        Self {
            edge_processing: edge,
            cloud_processing: cloud,
            communication: comm,
            total: edge + cloud + comm,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatencyReport<T> {
    pub pipelines: BTreeMap<String, PipelineLatency<T>>,
}

impl<T: Scalar> LatencyReport<T> {
    /// Largest pipeline total, zero when there are no pipelines.
    pub fn max_total(&self) -> T {
        self.pipelines
            .values()
            .fold(T::zero(), |acc, l| acc.max_of(l.total))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostReport<T> {
    pub total: T,
    /// Weighted cost of each microservice at its assigned tier.
    pub contributions: BTreeMap<String, T>,
}

fn rank_of<T: Scalar>(
    tiers: &TierChain<T>,
    placement: &Placement,
    ms: &str,
) -> Result<usize, PerfError> {
    let tier = placement.tier_of(ms).ok_or_else(|| {
        ModelError::InvalidPlacement(format!("{ms} is not placed"))
    })?;
    Ok(tiers.rank_of(tier)?)
}

fn service_at<T: Scalar>(
    app: &ApplicationGraph<T>,
    tiers: &TierChain<T>,
    ms: &str,
    rank: usize,
) -> Result<T, PerfError> {
    let spec = app
        .microservice(ms)
        .ok_or_else(|| ModelError::InvalidPlacement(format!("unknown microservice {ms}")))?;
    let tier = &tiers.at(rank).id;
    spec.service_time
        .get(tier)
        .copied()
        .ok_or_else(|| PerfError::UnsupportedTier {
            ms: ms.to_string(),
            tier: tier.clone(),
        })
}

/// End-to-end seconds per unit along one pipeline. Links whose endpoints
/// share a tier contribute nothing.
pub fn pipeline_latency<T: Scalar>(
    app: &ApplicationGraph<T>,
    tiers: &TierChain<T>,
    net: &NetworkState<T>,
    placement: &Placement,
    pipeline: &str,
) -> Result<PipelineLatency<T>, PerfError> {
    let p = app
        .pipeline(pipeline)
        .ok_or_else(|| ModelError::UnknownPipeline(pipeline.to_string()))?;
    let mut edge = T::zero();
    let mut cloud = T::zero();
    for ms in &p.path {
        let rank = rank_of(tiers, placement, ms)?;
        let t = service_at(app, tiers, ms, rank)?;
        if rank == 0 {
            edge = edge + t;
        } else {
            cloud = cloud + t;
        }
    }
    let mut comm = T::zero();
    for (a, b) in p.hops() {
        let ra = rank_of(tiers, placement, a)?;
        let rb = rank_of(tiers, placement, b)?;
        if ra != rb {
            let link = app.link(a, b).ok_or_else(|| {
                ModelError::InvalidPlacement(format!("pipeline {pipeline} uses undeclared link ({a},{b})"))
            })?;
            comm = comm + crossing_weight(link, tiers, net, ra, rb)?;
        }
    }
    Ok(PipelineLatency::from_terms(edge, cloud, comm))
}

/// Latency of every pipeline, keyed by pipeline id.
pub fn latency_report<T: Scalar>(
    app: &ApplicationGraph<T>,
    tiers: &TierChain<T>,
    net: &NetworkState<T>,
    placement: &Placement,
) -> Result<LatencyReport<T>, PerfError> {
    let mut pipelines = BTreeMap::new();
    for p in &app.pipelines {
        pipelines.insert(
            p.id.clone(),
            pipeline_latency(app, tiers, net, placement, &p.id)?,
        );
    }
    Ok(LatencyReport { pipelines })
}

/// The literal whole-graph sum over all of `V` and `E`. Diagnostic only:
/// constraints are enforced per pipeline.
pub fn whole_graph_latency<T: Scalar>(
    app: &ApplicationGraph<T>,
    tiers: &TierChain<T>,
    net: &NetworkState<T>,
    placement: &Placement,
) -> Result<PipelineLatency<T>, PerfError> {
    let mut edge = T::zero();
    let mut cloud = T::zero();
    for ms in &app.microservices {
        let rank = rank_of(tiers, placement, &ms.id)?;
        let t = service_at(app, tiers, &ms.id, rank)?;
        if rank == 0 {
            edge = edge + t;
        } else {
            cloud = cloud + t;
        }
    }
    let mut comm = T::zero();
    for l in &app.links {
        let ra = rank_of(tiers, placement, &l.from)?;
        let rb = rank_of(tiers, placement, &l.to)?;
        if ra != rb {
            comm = comm + crossing_weight(l, tiers, net, ra, rb)?;
        }
    }
    Ok(PipelineLatency::from_terms(edge, cloud, comm))
}

/// `c_edge × Σ edge weights + c_cloud × Σ weights above the edge`.
pub fn total_cost<T: Scalar>(
    app: &ApplicationGraph<T>,
    tiers: &TierChain<T>,
    placement: &Placement,
    weights: &PricingWeights<T>,
) -> Result<CostReport<T>, PerfError> {
    let mut edge_sum = T::zero();
    let mut cloud_sum = T::zero();
    let mut contributions = BTreeMap::new();
    for ms in &app.microservices {
        let rank = rank_of(tiers, placement, &ms.id)?;
        let w = vertex_weight(ms, tiers.at(rank))?;
        if rank == 0 {
            edge_sum = edge_sum + w;
        } else {
            cloud_sum = cloud_sum + w;
        }
        contributions.insert(ms.id.clone(), weights.for_rank(rank) * w);
    }
    Ok(CostReport {
        total: weights.c_edge * edge_sum + weights.c_cloud * cloud_sum,
        contributions,
    })
}
