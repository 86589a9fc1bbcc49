//! Reference applications, tier chains and measured network tables.
//!
//! The small graphs (`toy_chain`, `worked_example`, `three_tier_*`) use
//! round millisecond values so expected latencies and costs can be worked
//! out by hand. The video-analytics applications carry per-frame service
//! times and data volumes calibrated against the measured WL/AZ network.

use crate::model::{
    ApplicationGraph, CommLinkSpec, CriticalPipeline, MicroserviceSpec, Placement, ProxyConfig,
    Tier, TierChain,
};
use crate::partition::PartitionProblem;
use crate::perf::{HopParams, NetworkState, PricingWeights};
use crate::scalar::{ratio, Scalar};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ms<T: Scalar>(millis: i64) -> T {
    ratio(millis, 1000)
}

/// `edge` (2.0 per second) and `cloud` (1.0 per second).
pub fn two_tier_toy<T: Scalar>() -> TierChain<T> {
    TierChain::new(vec![
        Tier::new("edge", 0, ratio(2, 1)),
        Tier::new("cloud", 1, ratio(1, 1)),
    ])
    .expect("valid toy tiers")
}

/// 35 Mbit/s both ways between `edge` and `cloud`.
pub fn toy_network<T: Scalar>() -> NetworkState<T> {
    NetworkState::new().with_hop(
        "edge",
        "cloud",
        HopParams::new(ratio(35, 1), ratio(35, 1), T::zero()),
    )
}

/// `S -> A -> B` with `S` bound to the edge. At 35 Mbit/s the crossing
/// weights are 100 ms on `(S,A)` and 10 ms on `(A,B)`.
pub fn toy_chain<T: Scalar>() -> ApplicationGraph<T> {
    let mut app = ApplicationGraph::new("toy-chain");
    app.microservices = vec![
        MicroserviceSpec::new("S").at("edge", ms(5)).bound_to("edge"),
        MicroserviceSpec::new("A").at("edge", ms(40)).at("cloud", ms(20)),
        MicroserviceSpec::new("B").at("edge", ms(30)).at("cloud", ms(15)),
    ];
    app.links = vec![
        CommLinkSpec::new("S", "A", ratio(35, 10), T::zero()),
        CommLinkSpec::new("A", "B", ratio(35, 100), T::zero()),
    ];
    app.pipelines = vec![CriticalPipeline::new("main", &["S", "A", "B"], ms(120))];
    app
}

/// Three microservices in sequence, none bound, used to reproduce the
/// partitioning walk-through with the cut between `M2` and `M3`.
pub fn worked_example<T: Scalar>() -> ApplicationGraph<T> {
    let mut app = ApplicationGraph::new("worked-example");
    app.microservices = vec![
        MicroserviceSpec::new("M1").at("edge", ms(30)).at("cloud", ms(15)),
        MicroserviceSpec::new("M2").at("edge", ms(20)).at("cloud", ms(10)),
        MicroserviceSpec::new("M3").at("edge", ms(8)).at("cloud", ms(4)),
    ];
    app.links = vec![
        CommLinkSpec::new("M1", "M2", ratio(42, 100), T::zero()),
        CommLinkSpec::new("M2", "M3", ratio(1, 2), T::zero()),
    ];
    app.pipelines = vec![CriticalPipeline::new("main", &["M1", "M2", "M3"], ms(100))];
    app
}

/// 35 Mbit/s up and 20 Mbit/s down: `w(M1,M2)` is 12 ms when uploaded and
/// `w(M2,M3)` is 25 ms when downloaded.
pub fn worked_network<T: Scalar>() -> NetworkState<T> {
    NetworkState::new().with_hop(
        "edge",
        "cloud",
        HopParams::new(ratio(35, 1), ratio(20, 1), T::zero()),
    )
}

/// Device-side `d`, metro `w`, region `r` priced 4, 2 and 1 per second.
pub fn three_tier_chain<T: Scalar>() -> TierChain<T> {
    TierChain::new(vec![
        Tier::new("d", 0, ratio(4, 1)),
        Tier::new("w", 1, ratio(2, 1)),
        Tier::new("r", 2, ratio(1, 1)),
    ])
    .expect("valid three-tier chain")
}

/// 10 ms per link crossing `d`-`w`, 50 ms per link crossing `w`-`r`.
pub fn three_tier_network<T: Scalar>() -> NetworkState<T> {
    NetworkState::new()
        .with_hop("d", "w", HopParams::new(ratio(10, 1), ratio(10, 1), T::zero()))
        .with_hop("w", "r", HopParams::new(ratio(2, 1), ratio(2, 1), T::zero()))
}

/// `S -> X -> Y` with `S` bound to `d`.
pub fn three_tier_app<T: Scalar>() -> ApplicationGraph<T> {
    let mut app = ApplicationGraph::new("three-tier-toy");
    app.microservices = vec![
        MicroserviceSpec::new("S").at("d", ms(5)).bound_to("d"),
        MicroserviceSpec::new("X")
            .at("d", ms(20))
            .at("w", ms(20))
            .at("r", ms(20)),
        MicroserviceSpec::new("Y")
            .at("d", ms(10))
            .at("w", ms(10))
            .at("r", ms(10)),
    ];
    app.links = vec![
        CommLinkSpec::new("S", "X", ratio(1, 10), T::zero()),
        CommLinkSpec::new("X", "Y", ratio(1, 10), T::zero()),
    ];
    app.pipelines = vec![CriticalPipeline::new("main", &["S", "X", "Y"], ms(100))];
    app
}

/// Wavelength zone (rank 0) and availability zone (rank 1), priced as one
/// t3.xlarge per second: $0.224/h and $0.167/h.
pub fn two_tier_wavelength<T: Scalar>() -> TierChain<T> {
    TierChain::new(vec![
        Tier::new("wavelength", 0, ratio(224, 3_600_000)),
        Tier::new("availability", 1, ratio(167, 3_600_000)),
    ])
    .expect("valid wavelength tiers")
}

fn both<T: Scalar>(id: &str, millis: i64) -> MicroserviceSpec<T> {
    MicroserviceSpec::new(id)
        .at("wavelength", ms(millis))
        .at("availability", ms(millis))
}

fn alerts_proxy<T: Scalar>() -> ProxyConfig<T> {
    ProxyConfig {
        service_time: Some(ms(5)),
        ..ProxyConfig::default()
    }
}

/// Real-time monitoring: `VS -> FD -> FE -> FM -> AM` with a 250 ms budget.
/// `BM` feeds watch-list templates to `FM` off the critical path.
pub fn monitoring_app<T: Scalar>() -> ApplicationGraph<T> {
    let mut app = ApplicationGraph::new("monitoring");
    app.microservices = vec![
        MicroserviceSpec::new("VS")
            .at("wavelength", ms(10))
            .bound_to("wavelength")
            .with_vcpu_share(0.2),
        both("FD", 50).with_vcpu_share(0.6),
        both("FE", 45).with_vcpu_share(0.4),
        both("FM", 30).with_vcpu_share(0.3),
        both("AM", 25)
            .with_store("DB-1", alerts_proxy())
            .with_vcpu_share(0.2),
        both("BM", 5)
            .with_store("DB-2", ProxyConfig::default())
            .with_vcpu_share(0.2),
    ];
    app.links = vec![
        // full-HD frame up, small ack back
        CommLinkSpec::new("VS", "FD", ratio(4, 1), ratio(1, 100)),
        // face crops
        CommLinkSpec::new("FD", "FE", ratio(18, 10), T::zero()),
        CommLinkSpec::new("FE", "FM", ratio(5, 10), T::zero()),
        // alert with thumbnail
        CommLinkSpec::new("FM", "AM", ratio(6, 10), T::zero()),
        CommLinkSpec::new("BM", "FM", ratio(1, 2), T::zero()),
    ];
    app.pipelines = vec![CriticalPipeline::new(
        "alert",
        &["VS", "FD", "FE", "FM", "AM"],
        ms(250),
    )];
    app
}

/// The split the solver finds for [`monitoring_app`] on location-1
/// averages: ingest and detection on Wavelength, the rest on Availability.
pub fn monitoring_hybrid_placement() -> Placement {
    Placement::from_pairs([
        ("VS", "wavelength"),
        ("FD", "wavelength"),
        ("FE", "availability"),
        ("FM", "availability"),
        ("AM", "availability"),
        ("BM", "availability"),
    ])
}

/// Everything except the ingest on Availability: the Wavelength VM only
/// relays frames.
pub fn monitoring_relay_placement() -> Placement {
    Placement::from_pairs([
        ("VS", "wavelength"),
        ("FD", "availability"),
        ("FE", "availability"),
        ("FM", "availability"),
        ("AM", "availability"),
        ("BM", "availability"),
    ])
}

/// Monitoring variant with a person-tracking branch: two pipelines that
/// share `VS`, `FM` and `AM`.
pub fn tracking_app<T: Scalar>() -> ApplicationGraph<T> {
    let mut app = ApplicationGraph::new("tracking");
    app.microservices = vec![
        MicroserviceSpec::new("VS")
            .at("wavelength", ms(10))
            .bound_to("wavelength")
            .with_vcpu_share(0.2),
        both("PD", 60).with_vcpu_share(0.6),
        both("PT", 25).with_vcpu_share(0.3),
        both("FD", 50).with_vcpu_share(0.6),
        both("FE", 45).with_vcpu_share(0.4),
        both("FM", 30).with_vcpu_share(0.3),
        both("AM", 25)
            .with_store("DB-1", alerts_proxy())
            .with_vcpu_share(0.2),
        both("BM", 5)
            .with_store("DB-2", ProxyConfig::default())
            .with_vcpu_share(0.2),
    ];
    app.links = vec![
        CommLinkSpec::new("VS", "PD", ratio(4, 1), ratio(1, 100)),
        CommLinkSpec::new("PD", "PT", ratio(8, 10), T::zero()),
        CommLinkSpec::new("PT", "FM", ratio(4, 10), T::zero()),
        CommLinkSpec::new("VS", "FD", ratio(4, 1), ratio(1, 100)),
        CommLinkSpec::new("FD", "FE", ratio(18, 10), T::zero()),
        CommLinkSpec::new("FE", "FM", ratio(5, 10), T::zero()),
        CommLinkSpec::new("FM", "AM", ratio(6, 10), T::zero()),
        CommLinkSpec::new("BM", "FM", ratio(1, 2), T::zero()),
    ];
    app.pipelines = vec![
        CriticalPipeline::new("track", &["VS", "PD", "PT", "FM", "AM"], ms(300)),
        CriticalPipeline::new("face", &["VS", "FD", "FE", "FM", "AM"], ms(300)),
    ];
    app
}

/// Chunks of an archived video file per work unit.
pub const FORENSICS_CHUNKS: u32 = 100;

/// Megabits in the calibrated archived video (553 s at 28.43 Mbit/s).
pub const FORENSICS_FILE_MBIT: f64 = 15722.0;

/// `device` (the uploading phone) and `zone` (whichever zone hosts the
/// processing).
pub fn forensics_tiers<T: Scalar>(zone_price: T) -> TierChain<T> {
    TierChain::new(vec![
        Tier::new("device", 0, ratio(1, 10_000)),
        Tier::new("zone", 1, zone_price),
    ])
    .expect("valid forensics tiers")
}

/// Investigation and forensics: `VS -> FD -> FE -> AM`, one unit per file
/// chunk. `VS` reads the file on the device; everything else runs in the
/// zone.
pub fn forensics_app<T: Scalar>() -> ApplicationGraph<T> {
    let mut app = ApplicationGraph::new("forensics");
    app.microservices = vec![
        MicroserviceSpec::new("VS").at("device", T::zero()).bound_to("device"),
        MicroserviceSpec::new("FD").at("zone", ms(3000)).with_vcpu_share(2.0),
        MicroserviceSpec::new("FE").at("zone", ms(1500)).with_vcpu_share(1.0),
        MicroserviceSpec::new("AM")
            .at("zone", ms(200))
            .with_store("DB-1", ProxyConfig::default())
            .with_vcpu_share(0.5),
    ];
    app.links = vec![
        CommLinkSpec::new("VS", "FD", ratio(15722, FORENSICS_CHUNKS as i64), T::zero()),
        CommLinkSpec::new("FD", "FE", ratio(2, 1), T::zero()),
        CommLinkSpec::new("FE", "AM", ratio(1, 10), T::zero()),
    ];
    app.pipelines = vec![CriticalPipeline::new(
        "ingest",
        &["VS", "FD", "FE", "AM"],
        ms(120_000),
    )];
    app
}

/// Summary statistics of one measured quantity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stats {
    pub min: f64,
    pub avg: f64,
    pub max: f64,
    pub std_dev: f64,
}

const fn stats(min: f64, avg: f64, max: f64, std_dev: f64) -> Stats {
    Stats {
        min,
        avg,
        max,
        std_dev,
    }
}

/// One measured path. Latency in milliseconds, bandwidths in Mbit/s.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkMeasurement {
    pub name: &'static str,
    pub latency_ms: Stats,
    pub upload: Option<Stats>,
    pub download: Option<Stats>,
}

const LOCATION_1: [LinkMeasurement; 3] = [
    LinkMeasurement {
        name: "device-wavelength",
        latency_ms: stats(22.0, 39.7, 81.0, 9.94),
        upload: Some(stats(22.2, 28.43, 37.0, 3.17)),
        download: Some(stats(59.0, 151.3, 183.0, 17.05)),
    },
    LinkMeasurement {
        name: "device-availability",
        latency_ms: stats(66.05, 78.88, 243.5, 20.89),
        upload: Some(stats(0.8, 2.62, 7.0, 1.41)),
        download: Some(stats(9.0, 31.74, 56.0, 12.34)),
    },
    LinkMeasurement {
        name: "wavelength-availability",
        latency_ms: stats(11.4, 25.8, 34.0, 3.66),
        upload: Some(stats(21.0, 35.47, 71.0, 10.09)),
        download: Some(stats(20.6, 38.31, 74.0, 10.54)),
    },
];

const LOCATION_2: [LinkMeasurement; 1] = [LinkMeasurement {
    name: "device-wavelength",
    latency_ms: stats(24.6, 30.9, 50.9, 4.5),
    upload: Some(stats(40.0, 42.8, 46.0, 2.4)),
    download: Some(stats(255.0, 292.0, 318.0, 18.25)),
}];

/// Measured rows for a named location (`location-1` or `location-2`).
pub fn network_table(location: &str) -> Option<&'static [LinkMeasurement]> {
    match location {
        "location-1" => Some(&LOCATION_1),
        "location-2" => Some(&LOCATION_2),
        _ => None,
    }
}

/// Average upload/download/RTT of one measured row as hop parameters.
pub fn measured_hop<T: Scalar>(location: &str, link: &str) -> Option<HopParams<T>> {
    let row = network_table(location)?.iter().find(|r| r.name == link)?;
    Some(HopParams::new(
        T::lit(row.upload?.avg),
        T::lit(row.download?.avg),
        T::lit(row.latency_ms.avg / 1000.0),
    ))
}

/// Location-1 averages for the Wavelength/Availability hop.
pub fn location_1<T: Scalar>() -> NetworkState<T> {
    NetworkState::new().with_hop(
        "wavelength",
        "availability",
        HopParams::new(ratio(3547, 100), ratio(3831, 100), ratio(258, 10_000)),
    )
}

const BANDWIDTHS: [i64; 8] = [1, 2, 4, 5, 10, 20, 25, 50];
/// Data volumes in tenths of a megabit.
const DATA_TENTHS: [i64; 7] = [0, 1, 2, 5, 10, 20, 40];

/// Random problem `seed` with between 1 and `max_vertices` microservices
/// on `tier_count` tiers. Times are whole milliseconds and bandwidths come
/// from a short list so that exact rationals stay small.
pub fn random_problem<T: Scalar>(
    seed: u64,
    max_vertices: usize,
    tier_count: usize,
) -> PartitionProblem<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_vertices);

    let mut price = rng.gen_range(1..=2i64);
    let mut tiers = Vec::new();
    for r in (0..tier_count).rev() {
        tiers.push(Tier::new(format!("t{r}"), r as u32, ratio(price, 1)));
        price += rng.gen_range(0..=2);
    }
    let tiers = TierChain::new(tiers).expect("non-increasing prices");

    let mut net = NetworkState::new();
    for r in 0..tier_count - 1 {
        net.set_hop(
            &format!("t{r}"),
            &format!("t{}", r + 1),
            HopParams::new(
                ratio(*BANDWIDTHS.choose(&mut rng).unwrap(), 1),
                ratio(*BANDWIDTHS.choose(&mut rng).unwrap(), 1),
                T::zero(),
            ),
        );
    }

    let mut app = ApplicationGraph::new(format!("random-{seed}"));
    for v in 0..n {
        let mut spec = MicroserviceSpec::new(format!("v{v:02}"));
        let base = rng.gen_range(1..=60i64);
        for r in 0..tier_count {
            if rng.gen_bool(0.9) || r == 0 {
                let t = (base - rng.gen_range(0..=base / 2) * r as i64 / 2).max(1);
                spec = spec.at(format!("t{r}"), ms(t));
            }
        }
        if rng.gen_bool(0.15) {
            spec = spec.bound_to("t0");
        }
        app.microservices.push(spec);
    }
    for a in 0..n {
        for b in a + 1..n {
            if b == a + 1 || rng.gen_bool(0.15) {
                app.links.push(CommLinkSpec::new(
                    format!("v{a:02}"),
                    format!("v{b:02}"),
                    ratio(*DATA_TENTHS.choose(&mut rng).unwrap(), 10),
                    ratio(*DATA_TENTHS[..3].choose(&mut rng).unwrap(), 10),
                ));
            }
        }
    }
    let pipelines = rng.gen_range(1..=3usize);
    for k in 0..pipelines {
        let mut at = rng.gen_range(0..n);
        let mut path = vec![format!("v{at:02}")];
        let len = rng.gen_range(1..=6usize);
        while path.len() < len {
            let from = format!("v{at:02}");
            let next: Vec<&CommLinkSpec<T>> =
                app.links.iter().filter(|l| l.from == from).collect();
            let Some(l) = next.choose(&mut rng) else { break };
            at = l.to[1..].parse().expect("generated id");
            path.push(l.to.clone());
        }
        let budget = rng.gen_range(20..=40 * path.len() as i64 + 60);
        let refs: Vec<&str> = path.iter().map(String::as_str).collect();
        app.pipelines
            .push(CriticalPipeline::new(format!("p{k}"), &refs, ms(budget)));
    }
    let weights = if rng.gen_bool(0.2) {
        PricingWeights::new(ratio(rng.gen_range(1..=3), 1), ratio(rng.gen_range(1..=3), 1))
    } else {
        PricingWeights::default()
    };
    PartitionProblem::new(app, tiers, net).with_weights(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_against_tiers, validate_application};

    #[test]
    fn fixtures_validate() {
        let w = two_tier_wavelength::<f64>();
        for app in [monitoring_app::<f64>(), tracking_app::<f64>()] {
            assert!(validate_application(&app).is_empty(), "{}", app.name);
            assert!(validate_against_tiers(&app, &w).is_empty(), "{}", app.name);
        }
        let toy = two_tier_toy::<f64>();
        for app in [toy_chain::<f64>(), worked_example::<f64>()] {
            assert!(validate_application(&app).is_empty());
            assert!(validate_against_tiers(&app, &toy).is_empty());
        }
        let f = forensics_app::<f64>();
        assert!(validate_application(&f).is_empty());
        assert!(validate_against_tiers(&f, &forensics_tiers(1e-5)).is_empty());
        let t = three_tier_app::<f64>();
        assert!(validate_against_tiers(&t, &three_tier_chain()).is_empty());
    }

    #[test]
    fn random_problems_validate() {
        for seed in 0..200 {
            let p = random_problem::<crate::Exact>(seed, 12, 2 + (seed as usize % 2));
            assert_eq!(p.validate(), Ok(()), "seed {seed}");
        }
        assert_eq!(
            random_problem::<f64>(5, 12, 2),
            random_problem::<f64>(5, 12, 2)
        );
    }

    #[test]
    fn tracking_has_two_pipelines() {
        assert_eq!(tracking_app::<f64>().pipelines.len(), 2);
    }

    #[test]
    fn measured_rows() {
        let h = measured_hop::<f64>("location-1", "wavelength-availability").unwrap();
        assert_eq!(h.bw_upload, 35.47);
        assert_eq!(h.bw_download, 38.31);
        assert!(measured_hop::<f64>("location-2", "wavelength-availability").is_none());
        let d = measured_hop::<f64>("location-2", "device-wavelength").unwrap();
        assert_eq!(d.bw_upload, 42.8);
        assert_eq!(location_1::<f64>().hop("wavelength", "availability").unwrap().bw_upload, 35.47);
    }

    #[test]
    fn forensics_chunks_add_up_to_file() {
        let app = forensics_app::<f64>();
        let per_chunk = app.link("VS", "FD").unwrap().data_in;
        assert!((per_chunk * FORENSICS_CHUNKS as f64 - FORENSICS_FILE_MBIT).abs() < 1e-6);
    }
}
