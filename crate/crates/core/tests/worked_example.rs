use edgecut_core::fixtures;
use edgecut_core::{
    derive_flags, partition, pipeline_latency, ratio, total_cost, Exact, LinkId,
    PartitionProblem, Placement, PricingWeights,
};

fn cut() -> Placement {
    Placement::from_pairs([("M1", "cloud"), ("M2", "cloud"), ("M3", "edge")])
}

#[test]
fn worked_cut_latency_and_cost() {
    let app = fixtures::worked_example::<f64>();
    let tiers = fixtures::two_tier_toy();
    let net = fixtures::worked_network();
    let l = pipeline_latency(&app, &tiers, &net, &cut(), "main").unwrap();
    // 15 + 10 ms in the cloud, 8 ms at the edge, 0.5 Mbit down at 20 Mbit/s
    let expect_l = 0.015 + 0.010 + 0.008 + 0.5 / 20.0;
    assert!((l.total - expect_l).abs() < 1e-9);
    assert!((l.total - 0.058).abs() < 1e-9);
    assert!((l.communication - 0.025).abs() < 1e-9);
    let c = total_cost(&app, &tiers, &cut(), &PricingWeights::default()).unwrap();
    let expect_c = 0.008 * 2.0 + (0.015 + 0.010) * 1.0;
    assert!((c.total - expect_c).abs() < 1e-9);
}

#[test]
fn worked_cut_exact() {
    let app = fixtures::worked_example::<Exact>();
    let tiers = fixtures::two_tier_toy();
    let net = fixtures::worked_network();
    let l = pipeline_latency(&app, &tiers, &net, &cut(), "main").unwrap();
    assert_eq!(l.total, ratio(58, 1000));
    let c = total_cost(&app, &tiers, &cut(), &PricingWeights::default()).unwrap();
    assert_eq!(c.total, ratio(41, 1000));
    assert_eq!(c.contributions["M3"], ratio(16, 1000));
}

#[test]
fn worked_cut_flags() {
    let app = fixtures::worked_example::<f64>();
    let f = derive_flags(&app, &cut(), "edge").unwrap();
    assert_eq!(f.vertex["M3"], 1);
    assert_eq!(f.link[&LinkId::new("M2", "M3")], 1);
    assert_eq!(f.link[&LinkId::new("M1", "M2")], 0);
}

#[test]
fn upload_crossing_is_twelve_ms() {
    let app = fixtures::worked_example::<Exact>();
    let tiers = fixtures::two_tier_toy();
    let net = fixtures::worked_network();
    let p = Placement::from_pairs([("M1", "edge"), ("M2", "cloud"), ("M3", "cloud")]);
    let l = pipeline_latency(&app, &tiers, &net, &p, "main").unwrap();
    assert_eq!(l.communication, ratio(12, 1000));
}

#[test]
fn solver_prefers_cloud_when_budget_allows() {
    let p = PartitionProblem::new(
        fixtures::worked_example::<Exact>(),
        fixtures::two_tier_toy(),
        fixtures::worked_network(),
    );
    let r = partition(&p).unwrap();
    assert!(r.feasible);
    assert_eq!(r.placement, Placement::uniform(&p.app, "cloud"));
    assert_eq!(r.cost, ratio(29, 1000));
}
