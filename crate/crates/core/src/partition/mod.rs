//! Minimum-cost placement under per-pipeline latency budgets.
//!
//! [`partition`] searches the whole tier chain at once. Small graphs are
//! solved exactly by branch-and-bound; larger ones fall back to a seeded
//! local search. [`partition_multi_tier`] instead walks the chain bottom-up,
//! splitting one adjacent pair of tiers per stage.

mod heuristic;
mod proxy;
mod search;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::model::{
    join, validate_against_tiers, validate_application, ApplicationGraph, ModelError, Placement,
    TierChain, Violation,
};
use crate::perf::{
    latency_report, total_cost, NetworkState, PerfError, PipelineLatency, PricingWeights,
};
use crate::scalar::Scalar;

pub use proxy::{insert_proxies, plan_with_proxies, ProxiedPartition, ProxyPlan, ProxyRule};

use search::Compiled;

/// Graphs with at most this many microservices are always solved exactly.
pub const EXACT_LIMIT: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct PartitionProblem<T> {
    pub app: ApplicationGraph<T>,
    pub tiers: TierChain<T>,
    pub net: NetworkState<T>,
    pub weights: PricingWeights<T>,
    /// Seconds per unit, keyed by pipeline id.
    pub constraints: BTreeMap<String, T>,
}

impl<T: Scalar> PartitionProblem<T> {
    /// Takes constraints from the pipelines' own budgets and unit weights.
    pub fn new(app: ApplicationGraph<T>, tiers: TierChain<T>, net: NetworkState<T>) -> Self {
        let constraints = app
            .pipelines
            .iter()
            .map(|p| (p.id.clone(), p.latency_constraint))
            .collect();
        Self {
            app,
            tiers,
            net,
            weights: PricingWeights::default(),
            constraints,
        }
    }

    pub fn with_weights(mut self, weights: PricingWeights<T>) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_constraint(mut self, pipeline: &str, seconds: T) -> Self {
        self.constraints.insert(pipeline.to_string(), seconds);
        self
    }

    /// Every constraint multiplied by `factor`.
    pub fn scaled_constraints(mut self, factor: T) -> Self {
        for c in self.constraints.values_mut() {
            *c = *c * factor;
        }
        self
    }

    pub fn constraint(&self, pipeline: &str) -> Option<T> {
        self.constraints.get(pipeline).copied()
    }

    pub fn validate(&self) -> Result<(), PartitionError> {
        let mut v = validate_application(&self.app);
        v.extend(validate_against_tiers(&self.app, &self.tiers));
        if !v.is_empty() {
            return Err(PartitionError::Application(v));
        }
        if self.tiers.len() < 2 {
            return Err(PartitionError::TooFewTiers(self.tiers.len()));
        }
        let net = self.net.check(&self.tiers);
        if !net.is_empty() {
            return Err(PartitionError::Network(net));
        }
        if !self.weights.is_valid() {
            return Err(PartitionError::InvalidWeights);
        }
        for p in &self.app.pipelines {
            match self.constraints.get(&p.id) {
                None => return Err(PartitionError::MissingConstraint(p.id.clone())),
                Some(c) if !(*c > T::zero()) => {
                    return Err(PartitionError::NonPositiveConstraint(p.id.clone()))
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = self
            .constraints
            .keys()
            .find(|k| self.app.pipeline(k).is_none())
        {
            return Err(PartitionError::UnknownConstraint(extra.clone()));
        }
        for ms in &self.app.microservices {
            if !self.tiers.tiers().iter().any(|t| ms.can_run_at(&t.id)) {
                return Err(PartitionError::NoFeasibleTier(ms.id.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum PartitionError {
    #[error("invalid application: {}", join(.0))]
    Application(Vec<Violation>),
    #[error("need at least two tiers, got {0}")]
    TooFewTiers(usize),
    #[error("invalid network: {}", .0.join("; "))]
    Network(Vec<String>),
    #[error("pricing weights must be non-negative and not both zero")]
    InvalidWeights,
    #[error("no latency constraint for pipeline {0}")]
    MissingConstraint(String),
    #[error("latency constraint for pipeline {0} must be positive")]
    NonPositiveConstraint(String),
    #[error("constraint given for unknown pipeline {0}")]
    UnknownConstraint(String),
    #[error("microservice {0} cannot run on any tier")]
    NoFeasibleTier(String),
    #[error(transparent)]
    Perf(#[from] PerfError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Exact,
    Heuristic,
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Solver::Exact => "exact",
            Solver::Heuristic => "heuristic",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SolverMode {
    /// Exact up to [`SolveOptions::exact_limit`] microservices.
    #[default]
    Auto,
    ExactOnly,
    HeuristicOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolveOptions {
    pub mode: SolverMode,
    pub exact_limit: usize,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            mode: SolverMode::Auto,
            exact_limit: EXACT_LIMIT,
            seed: 0,
            restarts: 8,
        }
    }
}

/// The pipeline furthest over its budget.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Infeasibility<T> {
    pub pipeline: String,
    pub latency: T,
    pub constraint: T,
    /// Multi-tier stage at which no feasible split existed.
    pub stage: Option<usize>,
}

impl<T: Scalar> fmt::Display for Infeasibility<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "pipeline {} cannot meet its latency constraint: best placement gives {:.6} s, constraint {:.6} s",
            self.pipeline,
            self.latency.as_f64(),
            self.constraint.as_f64()
        )?;
        if let Some(s) = self.stage {
            write!(f, " (stage {s})")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageReport<T> {
    pub stage: usize,
    pub lower: String,
    pub upper: String,
    pub placement: Placement,
    pub cost: T,
    pub max_latency: T,
    /// Microservices moved from `lower` to `upper` in this stage.
    pub moved: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionResult<T> {
    pub placement: Placement,
    pub cost: T,
    pub latency: BTreeMap<String, PipelineLatency<T>>,
    pub feasible: bool,
    pub solver: Solver,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infeasibility: Option<Infeasibility<T>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageReport<T>>,
}

impl<T: Scalar> PartitionResult<T> {
    pub fn max_latency(&self) -> T {
        self.latency
            .values()
            .fold(T::zero(), |acc, l| acc.max_of(l.total))
    }

    pub fn pipeline_total(&self, pipeline: &str) -> Option<T> {
        self.latency.get(pipeline).map(|l| l.total)
    }
}

pub fn partition<T: Scalar>(
    problem: &PartitionProblem<T>,
) -> Result<PartitionResult<T>, PartitionError> {
    partition_with(problem, &SolveOptions::default())
}

/// Searches every tier of the chain at once.
pub fn partition_with<T: Scalar>(
    problem: &PartitionProblem<T>,
    options: &SolveOptions,
) -> Result<PartitionResult<T>, PartitionError> {
    problem.validate()?;
    let compiled = Compiled::new(problem)?;
    let (ranks, solver) = solve(&compiled, options);
    finish(problem, &compiled, &ranks, solver, None, Vec::new())
}

fn solve<T: Scalar>(compiled: &Compiled<T>, options: &SolveOptions) -> (Vec<usize>, Solver) {
    let exact = match options.mode {
        SolverMode::ExactOnly => true,
        SolverMode::HeuristicOnly => false,
        SolverMode::Auto => compiled.len() <= options.exact_limit,
    };
    if exact {
        (search::branch_and_bound(compiled), Solver::Exact)
    } else {
        (
            heuristic::local_search(compiled, options.seed, options.restarts),
            Solver::Heuristic,
        )
    }
}

fn finish<T: Scalar>(
    problem: &PartitionProblem<T>,
    compiled: &Compiled<T>,
    ranks: &[usize],
    solver: Solver,
    stage: Option<usize>,
    stages: Vec<StageReport<T>>,
) -> Result<PartitionResult<T>, PartitionError> {
    let placement = compiled.placement(&problem.tiers, ranks);
    let cost = total_cost(&problem.app, &problem.tiers, &placement, &problem.weights)?.total;
    let latency = latency_report(&problem.app, &problem.tiers, &problem.net, &placement)?.pipelines;
    let mut worst: Option<(T, &str)> = None;
    for (id, l) in &latency {
        let c = problem.constraints[id];
        if l.total > c {
            let excess = l.total - c;
            if worst.map_or(true, |(w, _)| excess > w) {
                worst = Some((excess, id));
            }
        }
    }
    let infeasibility = worst.map(|(_, id)| Infeasibility {
        pipeline: id.to_string(),
        latency: latency[id].total,
        constraint: problem.constraints[id],
        stage,
    });
    Ok(PartitionResult {
        placement,
        cost,
        latency,
        feasible: infeasibility.is_none(),
        solver,
        infeasibility,
        stages,
    })
}

/// Bottom-up pairwise partitioning over a chain of three or more tiers.
///
/// Every microservice starts on its lowest allowed tier. Stage `s` lets the
/// microservices currently on tier `s - 1` either stay or move to tier `s`;
/// everything else is fixed. Each stage is checked against the full-chain
/// latency of every pipeline and may only lower the cost.
pub fn partition_multi_tier<T: Scalar>(
    problem: &PartitionProblem<T>,
    options: &SolveOptions,
) -> Result<PartitionResult<T>, PartitionError> {
    problem.validate()?;
    if problem.tiers.len() == 2 {
        return partition_with(problem, options);
    }
    let base = Compiled::new(problem)?;
    let mut ranks: Vec<usize> = base.domains().iter().map(|d| d[0]).collect();
    let mut stages = Vec::new();
    let mut solver = Solver::Exact;
    let mut prev_cost: Option<T> = None;

    for s in 1..problem.tiers.len() {
        let domains: Vec<Vec<usize>> = base
            .domains()
            .iter()
            .zip(&ranks)
            .map(|(d, &r)| {
                if r == s - 1 && d.contains(&s) {
                    vec![s - 1, s]
                } else {
                    vec![r]
                }
            })
            .collect();
        let staged = base.with_domains(domains);
        let (next, used) = solve(&staged, options);
        if used == Solver::Heuristic {
            solver = Solver::Heuristic;
        }
        let eval = staged.evaluate(&next);
        if !eval.feasible {
            return finish(problem, &staged, &next, solver, Some(s), stages);
        }
        if prev_cost.map_or(false, |c| eval.cost > c) {
            break;
        }
        let placement = base.placement(&problem.tiers, &next);
        let moved = base
            .ids()
            .iter()
            .zip(ranks.iter().zip(&next))
            .filter(|(_, (a, b))| a != b)
            .map(|(id, _)| id.clone())
            .collect();
        stages.push(StageReport {
            stage: s,
            lower: problem.tiers.at(s - 1).id.clone(),
            upper: problem.tiers.at(s).id.clone(),
            placement,
            cost: eval.cost,
            max_latency: eval.max_latency,
            moved,
        });
        prev_cost = Some(eval.cost);
        ranks = next;
    }
    finish(problem, &base, &ranks, solver, None, stages)
}

pub(crate) fn cmp_scalar<T: Scalar>(a: T, b: T) -> Ordering {
    crate::scalar::cmp(&a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::scalar::ratio;
    use crate::Exact;

    fn toy(constraint_ms: i64) -> PartitionProblem<Exact> {
        PartitionProblem::new(
            fixtures::toy_chain(),
            fixtures::two_tier_toy(),
            fixtures::toy_network(),
        )
        .with_constraint("main", ratio(constraint_ms, 1000))
    }

    #[test]
    fn toy_chain_at_120ms() {
        let r = partition(&toy(120)).unwrap();
        assert!(r.feasible);
        assert_eq!(
            r.placement,
            Placement::from_pairs([("S", "edge"), ("A", "edge"), ("B", "cloud")])
        );
        assert_eq!(r.cost, ratio(105, 1000));
        assert_eq!(r.pipeline_total("main"), Some(ratio(70, 1000)));
        assert_eq!(r.solver, Solver::Exact);
    }

    #[test]
    fn toy_chain_at_150ms() {
        let r = partition(&toy(150)).unwrap();
        assert_eq!(
            r.placement,
            Placement::from_pairs([("S", "edge"), ("A", "cloud"), ("B", "cloud")])
        );
        assert_eq!(r.cost, ratio(45, 1000));
        assert_eq!(r.pipeline_total("main"), Some(ratio(140, 1000)));
    }

    #[test]
    fn toy_chain_at_60ms_is_infeasible() {
        let r = partition(&toy(60)).unwrap();
        assert!(!r.feasible);
        let why = r.infeasibility.unwrap();
        assert_eq!(why.pipeline, "main");
        // the least-violating placement keeps everything at the edge
        assert_eq!(why.latency, ratio(70, 1000));
        assert_eq!(why.constraint, ratio(60, 1000));
    }

    #[test]
    fn heuristic_matches_on_toy() {
        let opts = SolveOptions {
            mode: SolverMode::HeuristicOnly,
            ..SolveOptions::default()
        };
        for c in [120, 150] {
            let exact = partition(&toy(c)).unwrap();
            let heur = partition_with(&toy(c), &opts).unwrap();
            assert_eq!(heur.solver, Solver::Heuristic);
            assert!(heur.feasible);
            assert_eq!(heur.cost, exact.cost);
        }
    }

    #[test]
    fn monitoring_splits_after_detection() {
        let p = PartitionProblem::new(
            fixtures::monitoring_app::<f64>(),
            fixtures::two_tier_wavelength(),
            fixtures::location_1(),
        );
        let r = partition(&p).unwrap();
        assert!(r.feasible);
        assert_eq!(r.placement, fixtures::monitoring_hybrid_placement());
    }

    #[test]
    fn three_tier_stages() {
        let p = PartitionProblem::new(
            fixtures::three_tier_app::<Exact>(),
            fixtures::three_tier_chain(),
            fixtures::three_tier_network(),
        );
        let r = partition_multi_tier(&p, &SolveOptions::default()).unwrap();
        assert!(r.feasible);
        assert_eq!(
            r.placement,
            Placement::from_pairs([("S", "d"), ("X", "r"), ("Y", "r")])
        );
        assert_eq!(r.cost, ratio(50, 1000));
        assert_eq!(r.pipeline_total("main"), Some(ratio(95, 1000)));
        assert_eq!(r.stages.len(), 2);
        assert_eq!(r.stages[0].cost, ratio(80, 1000));
        assert_eq!(r.stages[0].moved, vec!["X".to_string(), "Y".to_string()]);
        assert!(r.stages[1].cost <= r.stages[0].cost);
    }

    #[test]
    fn multi_tier_on_two_tiers_is_partition() {
        let a = partition(&toy(120)).unwrap();
        let b = partition_multi_tier(&toy(120), &SolveOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_first_stage_stops_early() {
        // budget so tight nothing can leave d
        let p = PartitionProblem::new(
            fixtures::three_tier_app::<Exact>(),
            fixtures::three_tier_chain(),
            fixtures::three_tier_network(),
        )
        .with_constraint("main", ratio(40, 1000));
        let r = partition_multi_tier(&p, &SolveOptions::default()).unwrap();
        assert!(r.feasible);
        assert_eq!(r.placement, Placement::uniform(&p.app, "d"));
        assert_eq!(r.stages.len(), 2);
        assert!(r.stages.iter().all(|s| s.moved.is_empty()));
        assert_eq!(r.cost, r.stages[0].cost);
    }

    #[test]
    fn validation_errors() {
        let p = toy(120).with_constraint("ghost", ratio(1, 1));
        assert!(matches!(
            partition(&p),
            Err(PartitionError::UnknownConstraint(_))
        ));
        let mut p = toy(120);
        p.constraints.clear();
        assert!(matches!(
            partition(&p),
            Err(PartitionError::MissingConstraint(_))
        ));
        let mut p = toy(120);
        p.net = NetworkState::new();
        assert!(matches!(partition(&p), Err(PartitionError::Network(_))));
    }
}
