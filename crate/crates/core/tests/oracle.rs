//! The solver against brute-force enumeration over random problems.

use edgecut_core::fixtures::random_problem;
use edgecut_core::{
    partition, partition_multi_tier, partition_with, pipeline_latency, total_cost, Exact,
    PartitionProblem, Placement, SolveOptions, Solver, SolverMode,
};

/// Cheapest feasible cost over every assignment, walking placements through
/// the public latency and cost functions only.
fn brute_force(p: &PartitionProblem<Exact>) -> Option<Exact> {
    let ids: Vec<&str> = p.app.microservices.iter().map(|m| m.id.as_str()).collect();
    let options: Vec<Vec<&str>> = p
        .app
        .microservices
        .iter()
        .map(|m| {
            p.tiers
                .tiers()
                .iter()
                .map(|t| t.id.as_str())
                .filter(|t| m.can_run_at(t))
                .collect()
        })
        .collect();
    let mut pick = vec![0usize; ids.len()];
    let mut best: Option<Exact> = None;
    loop {
        let placement =
            Placement::from_pairs(ids.iter().zip(&pick).enumerate().map(|(v, (id, &k))| {
                (*id, options[v][k])
            }));
        let ok = p.app.pipelines.iter().all(|pl| {
            let l = pipeline_latency(&p.app, &p.tiers, &p.net, &placement, &pl.id).unwrap();
            l.total <= p.constraints[&pl.id]
        });
        if ok {
            let c = total_cost(&p.app, &p.tiers, &placement, &p.weights).unwrap().total;
            if best.map_or(true, |b| c < b) {
                best = Some(c);
            }
        }
        let mut k = 0;
        loop {
            if k == pick.len() {
                return best;
            }
            pick[k] += 1;
            if pick[k] < options[k].len() {
                break;
            }
            pick[k] = 0;
            k += 1;
        }
    }
}

fn check_sound(p: &PartitionProblem<Exact>, placement: &Placement) {
    placement.validate(&p.app, &p.tiers).unwrap();
    for pl in &p.app.pipelines {
        let l = pipeline_latency(&p.app, &p.tiers, &p.net, placement, &pl.id).unwrap();
        assert!(l.total <= p.constraints[&pl.id]);
    }
    for m in &p.app.microservices {
        if let Some(b) = &m.bound_tier {
            assert_eq!(placement.tier_of(&m.id), Some(b.as_str()));
        }
    }
}

#[test]
fn exact_matches_enumeration_on_1000_two_tier_problems() {
    let mut feasible = 0;
    for seed in 0..1000 {
        let p = random_problem::<Exact>(seed, 12, 2);
        let r = partition(&p).unwrap();
        assert_eq!(r.solver, Solver::Exact);
        let oracle = brute_force(&p);
        assert_eq!(r.feasible, oracle.is_some(), "seed {seed}");
        if let Some(c) = oracle {
            feasible += 1;
            assert_eq!(r.cost, c, "seed {seed}");
            check_sound(&p, &r.placement);
        } else {
            assert!(r.infeasibility.is_some());
        }
        let again = total_cost(&p.app, &p.tiers, &r.placement, &p.weights).unwrap();
        assert_eq!(again.total, r.cost);
    }
    // the generator should exercise both verdicts
    assert!(feasible > 200 && feasible < 1000, "{feasible} feasible");
}

#[test]
fn heuristic_is_never_better_than_exact() {
    let heuristic = SolveOptions {
        mode: SolverMode::HeuristicOnly,
        ..SolveOptions::default()
    };
    let mut matched = 0;
    let mut feasible = 0;
    for seed in 0..300 {
        let p = random_problem::<Exact>(10_000 + seed, 12, 2);
        let exact = partition(&p).unwrap();
        let h = partition_with(&p, &heuristic).unwrap();
        assert_eq!(h.solver, Solver::Heuristic);
        if h.feasible {
            check_sound(&p, &h.placement);
            assert!(exact.feasible);
            assert!(h.cost >= exact.cost, "seed {seed}");
        } else {
            assert!(h.infeasibility.is_some());
        }
        if exact.feasible {
            feasible += 1;
            if h.feasible && h.cost == exact.cost {
                matched += 1;
            }
        }
    }
    // local search should find the optimum on most small instances
    assert!(matched * 10 >= feasible * 8, "{matched}/{feasible}");
}

#[test]
fn multi_tier_stages_only_lower_cost() {
    for seed in 0..100 {
        let p = random_problem::<Exact>(20_000 + seed, 9, 3);
        let r = partition_multi_tier(&p, &SolveOptions::default()).unwrap();
        let oracle = brute_force(&p);
        for w in r.stages.windows(2) {
            assert!(w[1].cost <= w[0].cost, "seed {seed}");
        }
        if r.feasible {
            check_sound(&p, &r.placement);
            let best = oracle.expect("staged feasible implies some feasible");
            assert!(r.cost >= best, "seed {seed}");
            assert_eq!(r.cost, r.stages.last().unwrap().cost);
        } else {
            // stage 1 failing means nothing fits between the two lowest tiers
            assert_eq!(r.infeasibility.as_ref().unwrap().stage, Some(1));
        }
        if oracle.is_none() {
            assert!(!r.feasible, "seed {seed}");
        }
    }
}

#[test]
fn large_graph_uses_heuristic() {
    let mut p = random_problem::<f64>(3, 12, 2);
    // pad with independent cheap microservices until past the exact limit
    for k in 0..20 {
        p.app.microservices.push(
            edgecut_core::MicroserviceSpec::new(format!("pad{k:02}"))
                .at("t0", 0.01)
                .at("t1", 0.01),
        );
    }
    let r = partition(&p).unwrap();
    assert_eq!(r.solver, Solver::Heuristic);
    let exact = partition_with(
        &p,
        &SolveOptions {
            mode: SolverMode::ExactOnly,
            ..SolveOptions::default()
        },
    )
    .unwrap();
    assert_eq!(exact.solver, Solver::Exact);
    assert_eq!(r.feasible, exact.feasible);
    assert!(r.cost >= exact.cost - 1e-12);
}

#[test]
fn identical_problems_identical_placements() {
    for seed in 0..50 {
        let p = random_problem::<f64>(seed, 12, 2);
        assert_eq!(partition(&p).unwrap(), partition(&p.clone()).unwrap());
    }
}
