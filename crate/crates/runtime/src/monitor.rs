//! Application and network parameter estimation from observed runs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use edgecut_core::{HopParams, LinkId, Network, Problem};

use crate::trace::Direction;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum MonitorError {
    #[error("samples must be positive and finite, got {0}")]
    BadSample(f64),
    #[error("smoothing factor must lie in (0, 1], got {0}")]
    BadAlpha(f64),
    #[error("heartbeat for {zone} at {at} is older than the last one at {last}")]
    HeartbeatBackwards { zone: String, at: f64, last: f64 },
}

/// Exponentially weighted moving average.
#[derive(Clone, Debug, PartialEq)]
pub struct EwmaEstimator {
    alpha: f64,
    estimate: Option<f64>,
    samples: u64,
}

impl EwmaEstimator {
    pub fn new(alpha: f64) -> Result<Self, MonitorError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(MonitorError::BadAlpha(alpha));
        }
        Ok(Self {
            alpha,
            estimate: None,
            samples: 0,
        })
    }

    /// Folds in one sample and returns the new estimate. The first sample
    /// becomes the estimate.
    pub fn observe(&mut self, sample: f64) -> Result<f64, MonitorError> {
        if !(sample > 0.0) || !sample.is_finite() {
            return Err(MonitorError::BadSample(sample));
        }
        let next = match self.estimate {
            None => sample,
            Some(e) => self.alpha * sample + (1.0 - self.alpha) * e,
        };
        self.estimate = Some(next);
        self.samples += 1;
        Ok(next)
    }

    pub fn estimate(&self) -> Option<f64> {
        self.estimate
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorConfig {
    pub alpha: f64,
    /// Seconds between bandwidth reports.
    pub report_period_s: f64,
    pub heartbeat_period_s: f64,
    /// Missed heartbeats after which a zone counts as stale.
    pub stale_heartbeats: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            report_period_s: 1.0,
            heartbeat_period_s: 1.0,
            stale_heartbeats: 3.0,
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.report_period_s > 0.0) {
            return Err("report_period_s must be positive".into());
        }
        if !(self.heartbeat_period_s > 0.0) {
            return Err("heartbeat_period_s must be positive".into());
        }
        if !(self.stale_heartbeats > 0.0) {
            return Err("stale_heartbeats must be positive".into());
        }
        Ok(())
    }

    pub fn stale_after_s(&self) -> f64 {
        self.stale_heartbeats * self.heartbeat_period_s
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZoneStatus {
    pub age_s: f64,
    pub stale: bool,
}

/// Frozen estimates at one instant. Anything never observed carries its
/// baseline value.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsSnapshot {
    pub time: f64,
    /// Seconds per unit keyed by `(microservice, tier)`.
    pub service_times: BTreeMap<(String, String), f64>,
    /// `(data_in, data_out)` Mbit per unit.
    pub data: BTreeMap<LinkId, (f64, f64)>,
    pub network: Network,
    /// Price rate per tier.
    pub prices: BTreeMap<String, f64>,
    pub zones: BTreeMap<String, ZoneStatus>,
}

impl MetricsSnapshot {
    /// The baseline values of `problem`, unobserved.
    pub fn baseline(problem: &Problem, time: f64) -> Self {
        let mut service_times = BTreeMap::new();
        for m in &problem.app.microservices {
            for (tier, t) in &m.service_time {
                service_times.insert((m.id.clone(), tier.clone()), *t);
            }
        }
        let data = problem
            .app
            .links
            .iter()
            .map(|l| (l.id(), (l.data_in, l.data_out)))
            .collect();
        let prices = problem
            .tiers
            .tiers()
            .iter()
            .map(|t| (t.id.clone(), t.price_rate))
            .collect();
        Self {
            time,
            service_times,
            data,
            network: problem.net.clone(),
            prices,
            zones: BTreeMap::new(),
        }
    }

    /// `problem` with every estimate substituted in.
    pub fn apply(&self, problem: &Problem) -> Problem {
        let mut out = problem.clone();
        for m in &mut out.app.microservices {
            for (tier, t) in m.service_time.iter_mut() {
                if let Some(est) = self.service_times.get(&(m.id.clone(), tier.clone())) {
                    *t = *est;
                }
            }
        }
        for l in &mut out.app.links {
            if let Some(&(d_in, d_out)) = self.data.get(&l.id()) {
                l.data_in = d_in;
                l.data_out = d_out;
            }
        }
        for (lower, upper, hop) in self.network.iter() {
            out.net.set_hop(lower, upper, *hop);
        }
        for (tier, price) in &self.prices {
            out.tiers = out.tiers.with_price(tier, *price);
        }
        out
    }

    pub fn stale_zones(&self) -> impl Iterator<Item = &str> {
        self.zones
            .iter()
            .filter(|(_, z)| z.stale)
            .map(|(id, _)| id.as_str())
    }

    /// `(metric, key, value)` rows for a metrics dump.
    pub fn rows(&self) -> Vec<(String, String, f64)> {
        let mut out = Vec::new();
        for ((ms, tier), t) in &self.service_times {
            out.push(("service_time_s".into(), format!("{ms}@{tier}"), *t));
        }
        for (l, (d_in, d_out)) in &self.data {
            out.push(("data_in_mbit".into(), l.to_string(), *d_in));
            out.push(("data_out_mbit".into(), l.to_string(), *d_out));
        }
        for (lower, upper, hop) in self.network.iter() {
            out.push(("bw_up_mbps".into(), format!("{lower}-{upper}"), hop.bw_upload));
            out.push(("bw_down_mbps".into(), format!("{lower}-{upper}"), hop.bw_download));
        }
        for (zone, z) in &self.zones {
            out.push(("zone_age_s".into(), zone.clone(), z.age_s));
        }
        out
    }
}

/// Anything that can hand out snapshots.
pub trait MetricsSource {
    fn snapshot(&self, now: f64) -> MetricsSnapshot;
}

/// Running estimates for one application.
#[derive(Clone, Debug)]
pub struct Monitor {
    config: MonitorConfig,
    baseline: MetricsSnapshot,
    tier_ids: Vec<String>,
    service: BTreeMap<(String, String), EwmaEstimator>,
    data: BTreeMap<LinkId, (EwmaEstimator, EwmaEstimator)>,
    bandwidth: BTreeMap<(usize, Direction), EwmaEstimator>,
    prices: BTreeMap<String, f64>,
    heartbeats: BTreeMap<String, f64>,
}

impl Monitor {
    pub fn new(config: MonitorConfig, baseline: &Problem) -> Result<Self, MonitorError> {
        EwmaEstimator::new(config.alpha)?;
        Ok(Self {
            config,
            baseline: MetricsSnapshot::baseline(baseline, 0.0),
            tier_ids: baseline.tiers.tiers().iter().map(|t| t.id.clone()).collect(),
            service: BTreeMap::new(),
            data: BTreeMap::new(),
            bandwidth: BTreeMap::new(),
            prices: BTreeMap::new(),
            heartbeats: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.config
    }

    fn fresh(&self) -> EwmaEstimator {
        EwmaEstimator::new(self.config.alpha).expect("alpha checked in new")
    }

    pub fn observe_service(&mut self, ms: &str, tier: &str, seconds: f64) -> Result<(), MonitorError> {
        let fresh = self.fresh();
        self.service
            .entry((ms.to_string(), tier.to_string()))
            .or_insert(fresh)
            .observe(seconds)?;
        Ok(())
    }

    /// Zero volumes carry no information and are skipped.
    pub fn observe_data(&mut self, link: &LinkId, data_in: f64, data_out: f64) -> Result<(), MonitorError> {
        let fresh = self.fresh();
        let entry = self
            .data
            .entry(link.clone())
            .or_insert_with(|| (fresh.clone(), fresh));
        if data_in != 0.0 {
            entry.0.observe(data_in)?;
        }
        if data_out != 0.0 {
            entry.1.observe(data_out)?;
        }
        Ok(())
    }

    /// One bandwidth sample for hop `k` (between ranks `k` and `k + 1`).
    pub fn observe_bandwidth(&mut self, hop: usize, dir: Direction, mbps: f64) -> Result<(), MonitorError> {
        let fresh = self.fresh();
        self.bandwidth.entry((hop, dir)).or_insert(fresh).observe(mbps)?;
        Ok(())
    }

    pub fn bandwidth_estimate(&self, hop: usize, dir: Direction) -> Option<f64> {
        self.bandwidth.get(&(hop, dir)).and_then(EwmaEstimator::estimate)
    }

    pub fn set_price(&mut self, tier: &str, rate: f64) {
        self.prices.insert(tier.to_string(), rate);
    }

    pub fn heartbeat(&mut self, zone: &str, at: f64) -> Result<(), MonitorError> {
        if let Some(&last) = self.heartbeats.get(zone) {
            if at < last {
                return Err(MonitorError::HeartbeatBackwards {
                    zone: zone.to_string(),
                    at,
                    last,
                });
            }
        }
        self.heartbeats.insert(zone.to_string(), at);
        Ok(())
    }

    pub fn snapshot(&self, now: f64) -> MetricsSnapshot {
        let mut snap = self.baseline.clone();
        snap.time = now;
        for (key, est) in &self.service {
            if let Some(e) = est.estimate() {
                snap.service_times.insert(key.clone(), e);
            }
        }
        for (link, (d_in, d_out)) in &self.data {
            if let Some(entry) = snap.data.get_mut(link) {
                if let Some(e) = d_in.estimate() {
                    entry.0 = e;
                }
                if let Some(e) = d_out.estimate() {
                    entry.1 = e;
                }
            }
        }
        let hops: Vec<(String, String, HopParams<f64>)> = snap
            .network
            .iter()
            .map(|(a, b, h)| (a.to_string(), b.to_string(), *h))
            .collect();
        for (lower, upper, mut hop) in hops {
            let Some(k) = self.tier_ids.iter().position(|t| *t == lower) else {
                continue;
            };
            if let Some(e) = self.bandwidth_estimate(k, Direction::Up) {
                hop.bw_upload = e;
            }
            if let Some(e) = self.bandwidth_estimate(k, Direction::Down) {
                hop.bw_download = e;
            }
            snap.network.set_hop(&lower, &upper, hop);
        }
        for (tier, rate) in &self.prices {
            snap.prices.insert(tier.clone(), *rate);
        }
        for (zone, &last) in &self.heartbeats {
            let age_s = (now - last).max(0.0);
            snap.zones.insert(
                zone.clone(),
                ZoneStatus {
                    age_s,
                    stale: age_s > self.config.stale_after_s(),
                },
            );
        }
        snap
    }
}

impl MetricsSource for Monitor {
    fn snapshot(&self, now: f64) -> MetricsSnapshot {
        Monitor::snapshot(self, now)
    }
}

impl MetricsSource for MetricsSnapshot {
    fn snapshot(&self, now: f64) -> MetricsSnapshot {
        let mut s = self.clone();
        s.time = now;
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use edgecut_core::{fixtures, PartitionProblem};

    fn toy() -> Problem {
        PartitionProblem::new(
            fixtures::toy_chain(),
            fixtures::two_tier_toy(),
            fixtures::toy_network(),
        )
    }

    #[test]
    fn ewma_examples() {
        let mut e = EwmaEstimator::new(0.3).unwrap();
        assert_eq!(e.observe(100.0).unwrap(), 100.0);
        assert!((e.observe(50.0).unwrap() - 85.0).abs() < 1e-12);
        let mut f = EwmaEstimator::new(0.3).unwrap();
        assert_eq!(f.observe(42.0).unwrap(), 42.0);
        for _ in 0..50 {
            assert_eq!(f.observe(42.0).unwrap(), 42.0);
        }
        assert_eq!(f.samples(), 51);
    }

    #[test]
    fn ewma_rejects_non_positive() {
        let mut e = EwmaEstimator::new(0.3).unwrap();
        assert_eq!(e.observe(0.0), Err(MonitorError::BadSample(0.0)));
        assert!(e.observe(-1.0).is_err());
        assert!(e.observe(f64::NAN).is_err());
        assert_eq!(e.estimate(), None);
        assert!(EwmaEstimator::new(0.0).is_err());
        assert!(EwmaEstimator::new(1.5).is_err());
    }

    #[test]
    fn unobserved_snapshot_is_baseline() {
        let p = toy();
        let m = Monitor::new(MonitorConfig::default(), &p).unwrap();
        let s = m.snapshot(5.0);
        assert_eq!(s.apply(&p), p);
        assert_eq!(s.service_times[&("A".to_string(), "cloud".to_string())], 0.020);
    }

    #[test]
    fn constant_bandwidth_is_exact() {
        let p = PartitionProblem::new(
            fixtures::monitoring_app(),
            fixtures::two_tier_wavelength(),
            fixtures::location_1(),
        );
        let mut m = Monitor::new(MonitorConfig::default(), &p).unwrap();
        for _ in 0..20 {
            m.observe_bandwidth(0, Direction::Up, 35.47).unwrap();
        }
        let s = m.snapshot(20.0);
        let hop = s.network.hop("wavelength", "availability").unwrap();
        assert_eq!(hop.bw_upload, 35.47);
        assert_eq!(hop.bw_download, 38.31);
    }

    #[test]
    fn stale_after_three_periods() {
        let mut m = Monitor::new(MonitorConfig::default(), &toy()).unwrap();
        m.heartbeat("edge", 0.0).unwrap();
        m.heartbeat("cloud", 9.0).unwrap();
        let s = m.snapshot(10.0);
        assert!(s.zones["edge"].stale);
        assert!(!s.zones["cloud"].stale);
        assert_eq!(s.stale_zones().collect::<Vec<_>>(), vec!["edge"]);
        assert!(m.heartbeat("cloud", 8.0).is_err());
        m.heartbeat("edge", 10.0).unwrap();
        assert!(!m.snapshot(10.0).zones["edge"].stale);
    }

    #[test]
    fn observed_values_flow_into_problem() {
        let p = toy();
        let mut m = Monitor::new(MonitorConfig::default(), &p).unwrap();
        m.observe_service("A", "cloud", 0.040).unwrap();
        m.observe_data(&LinkId::new("A", "B"), 0.7, 0.0).unwrap();
        m.observe_bandwidth(0, Direction::Up, 1.0).unwrap();
        m.set_price("cloud", 0.5);
        let q = m.snapshot(1.0).apply(&p);
        assert_eq!(q.app.microservice("A").unwrap().service_time["cloud"], 0.040);
        assert_eq!(q.app.link("A", "B").unwrap().data_in, 0.7);
        assert_eq!(q.app.link("A", "B").unwrap().data_out, 0.0);
        assert_eq!(q.net.hop("edge", "cloud").unwrap().bw_upload, 1.0);
        assert_eq!(q.net.hop("edge", "cloud").unwrap().bw_download, 35.0);
        assert_eq!(q.tiers.get("cloud").unwrap().price_rate, 0.5);
    }
}
