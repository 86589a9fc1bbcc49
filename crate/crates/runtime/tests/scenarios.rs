use std::path::PathBuf;

use edgecut_core::{fixtures, pipeline_latency, Placement};
use edgecut_runtime::scenario::Scenario;
use edgecut_runtime::sim::{run, SimOptions, SyncMode, Workload};
use edgecut_runtime::trace::{Direction, StepTrace};

fn path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../scenarios/{name}.json"))
}

fn load(name: &str) -> Scenario {
    Scenario::load(&path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

const ALL: [&str; 10] = [
    "toy-chain",
    "toy-chain-tight",
    "worked",
    "three-tier",
    "monitoring",
    "monitoring-dynamic",
    "tracking",
    "forensics-wavelength",
    "forensics-availability",
    "cost-100-cameras",
];

#[test]
fn every_shipped_scenario_loads_and_round_trips() {
    for name in ALL {
        let s = load(name);
        let again = Scenario::parse(&s.to_json()).unwrap();
        assert_eq!(again.file, s.file, "{name}");
    }
}

#[test]
fn scenario_files_match_fixtures() {
    assert_eq!(load("toy-chain").problem.app, fixtures::toy_chain::<f64>());
    assert_eq!(load("toy-chain").problem.tiers, fixtures::two_tier_toy::<f64>());
    assert_eq!(load("worked").problem.app, fixtures::worked_example::<f64>());
    assert_eq!(load("worked").problem.net, fixtures::worked_network::<f64>());
    let three = load("three-tier").problem;
    assert_eq!(three.app, fixtures::three_tier_app::<f64>());
    assert_eq!(three.tiers, fixtures::three_tier_chain::<f64>());
    assert_eq!(three.net, fixtures::three_tier_network::<f64>());
    let mon = load("monitoring").problem;
    assert_eq!(mon.app, fixtures::monitoring_app::<f64>());
    assert_eq!(mon.tiers, fixtures::two_tier_wavelength::<f64>());
    assert_eq!(mon.net, fixtures::location_1::<f64>());
    assert_eq!(load("tracking").problem.app, fixtures::tracking_app::<f64>());
    let wl = load("forensics-wavelength").problem;
    assert_eq!(wl.app, fixtures::forensics_app::<f64>());
    assert_eq!(wl.tiers, fixtures::forensics_tiers::<f64>(224.0 / 3.6e6));
}

#[test]
fn worked_cut_simulates_to_analytic() {
    let s = load("worked");
    let r = run(&s.sim_setup(), &s.sim_options()).unwrap();
    for u in r.completed() {
        assert!((u.latency_s().unwrap() - 0.058).abs() < 1e-9);
    }
}

#[test]
fn proxy_rewrites_monitoring_pipeline() {
    let s = load("monitoring");
    assert_eq!(s.proxies.len(), 1);
    assert_eq!(s.proxies[0].proxy, "AM-E");
    let path = &s.sim_problem.app.pipeline("alert").unwrap().path;
    assert_eq!(path.last().map(String::as_str), Some("AM-E"));
}

fn monitoring_static() -> (edgecut_runtime::sim::SimSetup, SimOptions) {
    let s = load("monitoring");
    let mut placement = fixtures::monitoring_hybrid_placement();
    placement.assign("AM-E", "wavelength");
    let mut setup = s.sim_setup().with_placement(placement);
    setup.workloads = vec![Workload::Frames {
        pipeline: "alert".into(),
        fps: 5.0,
        start_s: 0.0,
        stop_s: Some(20.0),
    }];
    let opts = SimOptions {
        duration_s: 40.0,
        jitter: 0.0,
        ..s.sim_options()
    };
    (setup, opts)
}

#[test]
fn sync_survives_a_dead_link() {
    let (mut setup, opts) = monitoring_static();
    // dead for two sync intervals
    setup.traces.insert(
        (0, Direction::Up),
        StepTrace::new(vec![(10.0, 0.0), (12.0, 35.47)]).unwrap(),
    );
    let r = run(&setup, &opts).unwrap();
    let sync = &r.sync[0];
    assert!(sync.retries >= 2, "{} retries", sync.retries);
    assert_eq!(sync.emitted.len(), 100);
    assert_eq!(sync.master, sync.emitted);
    assert!(r.events.iter().any(|e| e.kind.to_string() == "sync-retry"));
}

#[test]
fn sync_order_holds_in_both_modes() {
    for mode in [SyncMode::Batched, SyncMode::PerRecord] {
        let (setup, mut opts) = monitoring_static();
        opts.sync = mode;
        let r = run(&setup, &opts).unwrap();
        assert_eq!(r.sync[0].master, r.sync[0].emitted, "{mode:?}");
    }
}

#[test]
fn no_sync_traffic_without_records() {
    let (mut setup, opts) = monitoring_static();
    setup.workloads.clear();
    let r = run(&setup, &opts).unwrap();
    assert!(r.transfers.is_empty());
    assert_eq!(r.sync[0].wan_mbit, 0.0);
}

#[test]
fn forensics_upload_times() {
    let wl = load("forensics-wavelength");
    let az = load("forensics-availability");
    let last = |s: &Scenario| {
        let r = run(&s.sim_setup(), &s.sim_options()).unwrap();
        assert_eq!(r.completed().count(), fixtures::FORENSICS_CHUNKS as usize);
        r.completed().filter_map(|u| u.completed_s).fold(0.0, f64::max)
    };
    let (a, b) = (last(&wl), last(&az));
    // upload plus the last chunk's processing
    assert!((a - (15722.0 / 28.43 + 4.7)).abs() < 0.01, "{a}");
    assert!(b / a > 6.0, "{}", b / a);
}

#[test]
fn static_placement_latency_matches_analytic() {
    let s = load("monitoring");
    let (setup, mut opts) = monitoring_static();
    opts.duration_s = 1.0;
    let r = run(&setup, &opts).unwrap();
    let p = setup.placement.clone().unwrap();
    let l = pipeline_latency(&s.sim_problem.app, &s.sim_problem.tiers, &s.sim_problem.net, &p, "alert")
        .unwrap();
    let u = r.completed().next().unwrap();
    assert!((u.latency_s().unwrap() - l.total).abs() < 1e-9);
    assert_eq!(u.placement_tag, "0-0-1-1-0");
    let all_edge = Placement::uniform(&s.sim_problem.app, "wavelength");
    assert!(pipeline_latency(&s.sim_problem.app, &s.sim_problem.tiers, &s.sim_problem.net, &all_edge, "alert")
        .unwrap()
        .total
        < l.total);
}
