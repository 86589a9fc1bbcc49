use std::collections::BTreeMap;

use edgecut_core::{fixtures, insert_proxies, pipeline_latency, HopParams, Placement, Problem};
use edgecut_runtime::monitor::{EwmaEstimator, MetricsSnapshot, MetricsSource};
use edgecut_runtime::scheduler::{
    run_scheduling_loop, CapacityBook, EventKind, Planner, Scheduler, SchedulerConfig,
};
use edgecut_runtime::sim::{run, SimOptions, SimSetup, Workload};
use edgecut_runtime::trace::{transfer_time, BandwidthProfile, Direction, StepTrace};
use proptest::prelude::*;

fn trace_strategy() -> impl Strategy<Value = StepTrace> {
    prop::collection::vec((0.1f64..20.0, 0.5f64..50.0), 1..6).prop_map(|steps| {
        let mut t = 0.0;
        let pts = steps
            .into_iter()
            .map(|(dt, v)| {
                let p = (t, v);
                t += dt;
                p
            })
            .collect();
        StepTrace::new(pts).unwrap()
    })
}

fn toy_setup(cloud_a: bool, cloud_b: bool, fps: f64, vcpus: f64) -> SimSetup {
    let problem = Problem::new(
        fixtures::toy_chain(),
        fixtures::two_tier_toy(),
        fixtures::toy_network(),
    );
    let mut p = Placement::uniform(&problem.app, "edge");
    if cloud_a {
        p.assign("A", "cloud");
    }
    if cloud_b {
        p.assign("B", "cloud");
    }
    let mut s = SimSetup::new(problem)
        .with_placement(p)
        .with_workload(Workload::Frames {
            pipeline: "main".into(),
            fps,
            start_s: 0.0,
            stop_s: None,
        });
    s.vcpus = BTreeMap::from([("edge".into(), vcpus), ("cloud".into(), vcpus)]);
    s
}

/// Square wave on the monitoring uplink with period `2 * half`.
struct Square {
    base: Problem,
    half: f64,
    high: f64,
    low: f64,
}

impl MetricsSource for Square {
    fn snapshot(&self, now: f64) -> MetricsSnapshot {
        let mut s = MetricsSnapshot::baseline(&self.base, now);
        let bw = if (now / self.half).floor() as i64 % 2 == 0 { self.high } else { self.low };
        let down = self.base.net.hop("wavelength", "availability").unwrap().bw_download;
        s.network
            .set_hop("wavelength", "availability", HopParams::new(bw, down, 0.0));
        s
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ewma_stays_within_sample_range(
        alpha in 0.01f64..=1.0,
        xs in prop::collection::vec(0.01f64..1000.0, 1..50),
    ) {
        let mut e = EwmaEstimator::new(alpha).unwrap();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for x in xs {
            lo = lo.min(x);
            hi = hi.max(x);
            let v = e.observe(x).unwrap();
            prop_assert!(v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12));
        }
    }

    #[test]
    fn transfer_time_is_additive(
        trace in trace_strategy(),
        a in 0.0f64..300.0,
        b in 0.0f64..300.0,
        start in 0.0f64..30.0,
    ) {
        let p = BandwidthProfile::with_trace(10.0, trace);
        let ta = transfer_time(a, &p, start);
        let tb = transfer_time(b, &p, start + ta);
        let whole = transfer_time(a + b, &p, start);
        prop_assert!((whole - (ta + tb)).abs() < 1e-6 * (1.0 + whole), "{whole} vs {}", ta + tb);
    }

    #[test]
    fn transfer_time_on_constant_link(size in 0.0f64..1e4, bw in 0.1f64..100.0) {
        let p = BandwidthProfile::constant(bw);
        prop_assert!((transfer_time(size, &p, 3.0) - size / bw).abs() < 1e-9 * (1.0 + size / bw));
    }

    #[test]
    fn sim_conserves_work_bytes_and_capacity(
        cloud_a in any::<bool>(),
        cloud_b in any::<bool>(),
        fps in 1.0f64..40.0,
        vcpus in 1.0f64..4.0,
        jitter in 0.0f64..0.5,
        seed in 0u64..1000,
        up in trace_strategy(),
    ) {
        let setup = toy_setup(cloud_a, cloud_b, fps, vcpus.floor())
            .with_trace(0, Direction::Up, up);
        let opts = SimOptions { duration_s: 8.0, seed, dynamic: false, jitter, ..SimOptions::default() };
        let r = run(&setup, &opts).unwrap();
        let s = r.summary(&BTreeMap::new());
        prop_assert_eq!(s.generated, r.units.len());
        prop_assert_eq!(s.generated, s.completed + s.in_flight);
        for u in r.completed() {
            let l = u.latency_s().unwrap();
            prop_assert!(l > 0.0);
            prop_assert!(u.stage_starts.windows(2).all(|w| w[0] <= w[1]));
        }
        for c in &r.links {
            let moved: f64 = r.transfers.iter()
                .filter(|t| t.link == c.link && t.direction == c.direction)
                .map(|t| t.mbit)
                .sum();
            prop_assert!((moved - c.completed_mbit).abs() < 1e-9 * (1.0 + moved));
            prop_assert!(c.completed_mbit <= c.sent_mbit + 1e-9);
            prop_assert!(c.delivered_mbit <= c.sent_mbit + 1e-6);
            prop_assert!(c.delivered_mbit + 1e-6 >= c.completed_mbit);
        }
        for (tier, peak) in &r.peak_vcpus {
            prop_assert!(*peak <= setup.vcpus[tier] + 1e-12, "{tier}: {peak}");
        }
    }

    #[test]
    fn sim_is_deterministic(seed in 0u64..1000, jitter in 0.0f64..0.5, fps in 1.0f64..30.0) {
        let setup = toy_setup(true, true, fps, 2.0);
        let opts = SimOptions { duration_s: 5.0, seed, jitter, ..SimOptions::default() };
        let a = run(&setup, &opts).unwrap();
        let b = run(&setup, &opts).unwrap();
        prop_assert_eq!(a.latency_csv(), b.latency_csv());
        prop_assert_eq!(a.links_csv(), b.links_csv());
    }

    #[test]
    fn uncontended_unit_matches_analytic(cloud_a in any::<bool>(), cloud_b in any::<bool>()) {
        let setup = toy_setup(cloud_a, cloud_b, 0.5, 4.0);
        let opts = SimOptions { duration_s: 1.9, jitter: 0.0, ..SimOptions::default() };
        let r = run(&setup, &opts).unwrap();
        let p = setup.placement.clone().unwrap();
        let pr = &setup.problem;
        let l = pipeline_latency(&pr.app, &pr.tiers, &pr.net, &p, "main").unwrap().total;
        let u = r.completed().next().unwrap();
        prop_assert!((u.latency_s().unwrap() - l).abs() < 1e-9);
    }

    #[test]
    fn square_wave_does_not_flap(
        periods in 2u32..6,
        half_ticks in 2u32..8,
        high in 30.0f64..45.0,
        low in 0.05f64..3.0,
    ) {
        let mon = Problem::new(fixtures::monitoring_app(), fixtures::two_tier_wavelength(), fixtures::location_1());
        let plan = insert_proxies(&mon.app, &mon.tiers, &fixtures::monitoring_hybrid_placement()).unwrap();
        let base = Problem { app: plan.app, ..mon };
        let config = SchedulerConfig { improvement_threshold: 0.08, ..SchedulerConfig::default() };
        let half = config.interval_s * half_ticks as f64;
        let src = Square { base: base.clone(), half, high, low };
        let mut sched = Scheduler::new(config, Planner::default(), true);
        sched.add(base);
        let mut book = CapacityBook::new(BTreeMap::from([
            ("wavelength".into(), 1e6),
            ("availability".into(), 1e6),
        ]));
        let events = run_scheduling_loop(&mut sched, &src, &mut book, 2.0 * half * periods as f64);
        for k in 0..periods {
            let (t0, t1) = (2.0 * half * k as f64, 2.0 * half * (k + 1) as f64);
            let remaps = events.iter()
                .filter(|e| e.kind == EventKind::Remap && e.time_s >= t0 && e.time_s < t1)
                .count();
            prop_assert!(remaps <= 2, "period {k}: {remaps} remaps");
        }
    }
}
