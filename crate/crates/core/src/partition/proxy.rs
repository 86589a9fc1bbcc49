//! Edge-side proxies for stateful microservices that a placement sends
//! upward.
//!
//! A proxy terminates the pipeline on the pipeline's lowest tier and
//! forwards records to the store master in the background, so the final
//! crossing drops off the critical path.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{partition_multi_tier, PartitionError, PartitionProblem, PartitionResult, SolveOptions};
use crate::model::{ApplicationGraph, CommLinkSpec, MicroserviceSpec, ModelError, Placement, TierChain};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProxyRule {
    /// The store master.
    pub target: String,
    pub proxy: String,
    pub store: String,
    /// Tier the proxy is bound to.
    pub tier: String,
    pub sync_interval_s: f64,
    pub batch_size: usize,
    pub record_mbit: f64,
    pub overhead_mbit: f64,
}

impl ProxyRule {
    pub fn proxy_id(target: &str) -> String {
        format!("{target}-E")
    }
}

/// An application rewritten with proxies, plus the placement extended to
/// cover them.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxyPlan<T> {
    pub app: ApplicationGraph<T>,
    pub placement: Placement,
    pub rules: Vec<ProxyRule>,
}

/// Adds a proxy `<target>-E` for every pipeline that ends in a stateful
/// microservice placed above the pipeline's lowest tier.
///
/// The pipeline is rewritten to end at the proxy, the proxy receives the
/// same data its predecessor sent to the master, and a zero-volume link
/// connects proxy and master. The predecessor's link to the master is
/// dropped once no pipeline uses it.
pub fn insert_proxies<T: Scalar>(
    app: &ApplicationGraph<T>,
    tiers: &TierChain<T>,
    placement: &Placement,
) -> Result<ProxyPlan<T>, ModelError> {
    placement.validate(app, tiers)?;
    let rank = |ms: &str| -> usize {
        tiers
            .index_of(placement.tier_of(ms).expect("validated"))
            .expect("validated")
    };

    let mut out = app.clone();
    let mut rules: BTreeMap<String, ProxyRule> = BTreeMap::new();
    let mut feeds: Vec<(String, String)> = Vec::new();

    for p in &mut out.pipelines {
        let Some(last) = p.path.last().cloned() else {
            continue;
        };
        let Some(spec) = app.microservice(&last) else {
            continue;
        };
        let Some(store) = &spec.stateful_store else {
            continue;
        };
        let lowest = p.path.iter().map(|m| rank(m)).min().expect("non-empty path");
        if rank(&last) <= lowest || p.path.len() < 2 {
            continue;
        }
        let proxy = ProxyRule::proxy_id(&last);
        if app.microservice(&proxy).is_some() {
            continue;
        }
        let rule = rules.entry(last.clone()).or_insert_with(|| ProxyRule {
            target: last.clone(),
            proxy: proxy.clone(),
            store: store.store.clone(),
            tier: tiers.at(lowest).id.clone(),
            sync_interval_s: store.proxy.sync_interval_s,
            batch_size: store.proxy.batch_size,
            record_mbit: store.proxy.record_mbit,
            overhead_mbit: store.proxy.overhead_mbit,
        });
        let pred = p.path[p.path.len() - 2].clone();
        *p.path.last_mut().expect("non-empty path") = rule.proxy.clone();
        feeds.push((pred, last));
    }

    let mut placement = placement.clone();
    for rule in rules.values() {
        let master = app.microservice(&rule.target).expect("target exists");
        let seconds = master
            .stateful_store
            .as_ref()
            .and_then(|s| s.proxy.service_time)
            .or_else(|| master.service_time.get(&rule.tier).copied())
            .or_else(|| master.service_time.values().copied().reduce(|a, b| a.min_of(b)))
            .unwrap_or_else(T::zero);
        out.microservices.push(
            MicroserviceSpec::new(rule.proxy.clone())
                .at(rule.tier.clone(), seconds)
                .bound_to(rule.tier.clone())
                .with_vcpu_share(master.vcpu_share),
        );
        out.links.push(CommLinkSpec::new(
            rule.proxy.clone(),
            rule.target.clone(),
            T::zero(),
            T::zero(),
        ));
        placement.assign(rule.proxy.clone(), rule.tier.clone());
    }

    for (pred, master) in &feeds {
        let proxy = ProxyRule::proxy_id(master);
        if out.link(pred, &proxy).is_none() {
            let orig = app.link(pred, master).expect("pipeline link exists");
            out.links.push(CommLinkSpec::new(
                pred.clone(),
                proxy,
                orig.data_in,
                orig.data_out,
            ));
        }
    }
    let used: Vec<(String, String)> = out
        .pipelines
        .iter()
        .flat_map(|p| p.hops().map(|(a, b)| (a.to_string(), b.to_string())))
        .collect();
    out.links.retain(|l| {
        let fed = feeds.iter().any(|(p, m)| *p == l.from && *m == l.to);
        !fed || used.iter().any(|(a, b)| *a == l.from && *b == l.to)
    });

    Ok(ProxyPlan {
        app: out,
        placement,
        rules: rules.into_values().collect(),
    })
}

/// Outcome of partitioning with proxy insertion.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxiedPartition<T> {
    /// Partition of the application as given.
    pub initial: PartitionResult<T>,
    /// The problem `result` solves: the rewritten application when proxies
    /// were kept, the original otherwise.
    pub problem: PartitionProblem<T>,
    pub result: PartitionResult<T>,
    pub rules: Vec<ProxyRule>,
}

/// Partitions, inserts proxies for that placement and partitions the
/// rewritten application again. Proxies are discarded if the second solve
/// is infeasible.
pub fn plan_with_proxies<T: Scalar>(
    problem: &PartitionProblem<T>,
    options: &SolveOptions,
) -> Result<ProxiedPartition<T>, PartitionError> {
    let initial = partition_multi_tier(problem, options)?;
    let plan = insert_proxies(&problem.app, &problem.tiers, &initial.placement)?;
    if plan.rules.is_empty() || !initial.feasible {
        return Ok(ProxiedPartition {
            result: initial.clone(),
            initial,
            problem: problem.clone(),
            rules: Vec::new(),
        });
    }
    let mut augmented = problem.clone();
    augmented.app = plan.app;
    let result = partition_multi_tier(&augmented, options)?;
    if result.feasible {
        Ok(ProxiedPartition {
            initial,
            problem: augmented,
            result,
            rules: plan.rules,
        })
    } else {
        Ok(ProxiedPartition {
            result: initial.clone(),
            initial,
            problem: problem.clone(),
            rules: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::validate_application;
    use crate::perf::pipeline_latency;

    #[test]
    fn monitoring_gets_am_e() {
        let app = fixtures::monitoring_app::<f64>();
        let tiers = fixtures::two_tier_wavelength();
        let p = fixtures::monitoring_hybrid_placement();
        let plan = insert_proxies(&app, &tiers, &p).unwrap();
        assert_eq!(plan.rules.len(), 1);
        let rule = &plan.rules[0];
        assert_eq!(rule.proxy, "AM-E");
        assert_eq!(rule.tier, "wavelength");
        assert_eq!(rule.store, "DB-1");
        let path = &plan.app.pipeline("alert").unwrap().path;
        assert_eq!(path.last().map(String::as_str), Some("AM-E"));
        assert!(plan.app.link("FM", "AM").is_none());
        assert!(plan.app.link("FM", "AM-E").is_some());
        assert!(plan.app.link("AM-E", "AM").is_some());
        assert!(validate_application(&plan.app).is_empty());
        assert_eq!(plan.placement.tier_of("AM-E"), Some("wavelength"));

        let net = fixtures::location_1();
        let before = pipeline_latency(&app, &tiers, &net, &p, "alert").unwrap();
        let after = pipeline_latency(&plan.app, &tiers, &net, &plan.placement, "alert").unwrap();
        assert!(after.total <= before.total);
    }

    #[test]
    fn no_store_no_change() {
        let app = fixtures::toy_chain::<f64>();
        let p = Placement::from_pairs([("S", "edge"), ("A", "cloud"), ("B", "cloud")]);
        let plan = insert_proxies(&app, &fixtures::two_tier_toy(), &p).unwrap();
        assert!(plan.rules.is_empty());
        assert_eq!(plan.app, app);
        assert_eq!(plan.placement, p);
    }

    #[test]
    fn master_at_edge_needs_no_proxy() {
        let app = fixtures::monitoring_app::<f64>();
        let p = Placement::uniform(&app, "wavelength");
        let plan = insert_proxies(&app, &fixtures::two_tier_wavelength(), &p).unwrap();
        assert!(plan.rules.is_empty());
    }

    #[test]
    fn shared_master_gets_one_proxy() {
        let app = fixtures::tracking_app::<f64>();
        let tiers = fixtures::two_tier_wavelength();
        let mut p = Placement::uniform(&app, "availability");
        p.assign("VS", "wavelength");
        let plan = insert_proxies(&app, &tiers, &p).unwrap();
        assert_eq!(plan.rules.len(), 1);
        for id in ["track", "face"] {
            assert_eq!(
                plan.app.pipeline(id).unwrap().path.last().unwrap(),
                "AM-E"
            );
        }
        assert_eq!(plan.app.links.iter().filter(|l| l.to == "AM-E").count(), 1);
    }

    #[test]
    fn replanning_keeps_proxy() {
        let problem = PartitionProblem::new(
            fixtures::monitoring_app::<f64>(),
            fixtures::two_tier_wavelength(),
            fixtures::location_1(),
        );
        let out = plan_with_proxies(&problem, &SolveOptions::default()).unwrap();
        assert!(out.result.feasible);
        assert_eq!(out.rules.len(), 1);
        let mut expect = fixtures::monitoring_hybrid_placement();
        expect.assign("AM-E", "wavelength");
        assert_eq!(out.result.placement, expect);
        assert!(out.result.max_latency() <= out.initial.max_latency());
    }
}
