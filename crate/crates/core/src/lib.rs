//! Cost-minimizing placement of microservice graphs on a chain of edge and
//! cloud tiers under per-pipeline latency budgets.
//!
//! The model, the latency/cost formulas and the solver are generic over
//! [`Scalar`]. Use the `f64` aliases below for normal work and [`Exact`]
//! when results must compare equal without rounding.

pub mod fixtures;
pub mod model;
pub mod partition;
pub mod perf;
pub mod pricing;
pub mod scalar;

pub use model::{
    cut_edges, derive_flags, validate_against_tiers, validate_application, ApplicationGraph,
    CommLinkSpec, CriticalPipeline, Flags, LinkId, MicroserviceSpec, ModelError, Placement,
    ProxyConfig, StatefulStore, Tier, TierChain, Violation,
};
pub use partition::{
    insert_proxies, partition, partition_multi_tier, partition_with, plan_with_proxies,
    Infeasibility, PartitionError, PartitionProblem, PartitionResult, ProxiedPartition, ProxyPlan,
    ProxyRule,
    SolveOptions, Solver, SolverMode, StageReport,
};
pub use perf::{
    comm_weight, crossing_weight, latency_report, pipeline_latency, total_cost, vertex_weight,
    whole_graph_latency, CostReport, HopParams, LatencyReport, NetworkState, PerfError,
    PipelineLatency, PricingWeights,
};
pub use scalar::{ratio, Scalar};

/// Exact rational scalar.
pub type Exact = num_rational::Ratio<i128>;

pub type App = ApplicationGraph<f64>;
pub type Tiers = TierChain<f64>;
pub type Network = NetworkState<f64>;
pub type Weights = PricingWeights<f64>;
pub type Problem = PartitionProblem<f64>;
pub type Outcome = PartitionResult<f64>;
