//! Monthly cost of camera deployments across Wavelength and Availability
//! zones.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{ratio, Scalar};

/// Billing month used by the zone price lists.
pub const HOURS_PER_MONTH: i64 = 720;

/// Cameras one processing VM handles.
pub const CAMERAS_PER_PROCESSING_VM: u32 = 2;

/// Link capacity of a relay VM in Mbit/s.
pub const RELAY_LINK_MBPS: u32 = 35;

/// Upper end of a full-HD camera stream in Mbit/s.
pub const CAMERA_MBPS: u32 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZoneKind {
    Wavelength,
    Availability,
}

impl fmt::Display for ZoneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ZoneKind::Wavelength => "wavelength",
            ZoneKind::Availability => "availability",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Runs the analytics for a share of the cameras.
    Processing,
    /// Forwards camera streams from the edge to another zone.
    Relay,
    /// Fixed infrastructure that is not sized by camera count.
    Control,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Processing => "processing",
            Role::Relay => "relay",
            Role::Control => "control",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceType<T> {
    pub name: &'static str,
    pub vcpus: u32,
    pub memory_gib: u32,
    pub gpu: bool,
    /// Peak network bandwidth in Gbit/s ("up to" values taken at face).
    pub network_gbit: u32,
    pub wavelength_hourly: Option<T>,
    pub availability_hourly: Option<T>,
}

impl<T: Scalar> InstanceType<T> {
    pub fn hourly(&self, zone: ZoneKind) -> Option<T> {
        match zone {
            ZoneKind::Wavelength => self.wavelength_hourly,
            ZoneKind::Availability => self.availability_hourly,
        }
    }
}

/// Wavelength instance types with on-demand hourly prices. Availability
/// Zone prices are only known for t3.xlarge.
pub fn instance_catalog<T: Scalar>() -> Vec<InstanceType<T>> {
    vec![
        InstanceType {
            name: "t3.medium",
            vcpus: 2,
            memory_gib: 4,
            gpu: false,
            network_gbit: 5,
            wavelength_hourly: Some(ratio(56, 1000)),
            availability_hourly: None,
        },
        InstanceType {
            name: "t3.xlarge",
            vcpus: 4,
            memory_gib: 16,
            gpu: false,
            network_gbit: 5,
            wavelength_hourly: Some(ratio(224, 1000)),
            availability_hourly: Some(ratio(167, 1000)),
        },
        InstanceType {
            name: "r5.2xlarge",
            vcpus: 8,
            memory_gib: 64,
            gpu: false,
            network_gbit: 10,
            wavelength_hourly: Some(ratio(68, 100)),
            availability_hourly: None,
        },
        InstanceType {
            name: "g4dn.2xlarge",
            vcpus: 8,
            memory_gib: 32,
            gpu: true,
            network_gbit: 25,
            wavelength_hourly: Some(ratio(1317, 1000)),
            availability_hourly: None,
        },
    ]
}

/// Storage price per instance-month in each zone kind.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageRates<T> {
    pub wavelength: T,
    pub availability: T,
}

impl<T: Scalar> StorageRates<T> {
    pub fn get(&self, zone: ZoneKind) -> T {
        match zone {
            ZoneKind::Wavelength => self.wavelength,
            ZoneKind::Availability => self.availability,
        }
    }
}

impl<T: Scalar> Default for StorageRates<T> {
    /// Per-instance storage lines of the reference estimate: $29.09 in a
    /// Wavelength zone, $19.50 in an Availability zone.
    fn default() -> Self {
        Self {
            wavelength: ratio(2909, 100),
            availability: ratio(1950, 100),
        }
    }
}

/// VMs needed for `cameras` cameras in `role`. Control rows are never
/// sized by camera count and return 0.
pub fn instances_required(cameras: u32, role: Role) -> u32 {
    match role {
        Role::Processing => cameras.div_ceil(CAMERAS_PER_PROCESSING_VM),
        Role::Relay => cameras.div_ceil(RELAY_LINK_MBPS / CAMERA_MBPS),
        Role::Control => 0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanRow {
    pub zone: ZoneKind,
    pub instance_type: String,
    pub role: Role,
    pub count: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentPlan {
    pub name: String,
    pub cameras: u32,
    pub rows: Vec<PlanRow>,
}

impl DeploymentPlan {
    pub fn new(name: impl Into<String>, cameras: u32) -> Self {
        Self {
            name: name.into(),
            cameras,
            rows: Vec::new(),
        }
    }

    pub fn with(mut self, zone: ZoneKind, instance_type: &str, role: Role, count: u32) -> Self {
        self.rows.push(PlanRow {
            zone,
            instance_type: instance_type.to_string(),
            role,
            count,
        });
        self
    }

    /// Adds a row sized for `cameras` of this plan's cameras.
    pub fn sized(self, zone: ZoneKind, instance_type: &str, role: Role, cameras: u32) -> Self {
        self.with(zone, instance_type, role, instances_required(cameras, role))
    }

    pub fn count(&self, zone: ZoneKind) -> u32 {
        self.rows.iter().filter(|r| r.zone == zone).map(|r| r.count).sum()
    }

    /// Rows of both plans; the camera counts add.
    pub fn union(&self, other: &DeploymentPlan) -> DeploymentPlan {
        DeploymentPlan {
            name: format!("{}+{}", self.name, other.name),
            cameras: self.cameras + other.cameras,
            rows: self.rows.iter().chain(&other.rows).cloned().collect(),
        }
    }
}

/// Everything in Availability zones: 50 processing VMs per 100 cameras.
pub fn az_only(cameras: u32) -> DeploymentPlan {
    DeploymentPlan::new("availability-zone", cameras).sized(
        ZoneKind::Availability,
        "t3.xlarge",
        Role::Processing,
        cameras,
    )
}

/// Processing in Wavelength zones with one Availability zone VM for the
/// shared services.
pub fn wl_only(cameras: u32) -> DeploymentPlan {
    DeploymentPlan::new("wavelength-zone", cameras)
        .with(ZoneKind::Availability, "t3.xlarge", Role::Control, 1)
        .sized(ZoneKind::Wavelength, "t3.xlarge", Role::Processing, cameras)
}

/// Processing split evenly between the two zone kinds.
pub fn hybrid(cameras: u32) -> DeploymentPlan {
    let edge = cameras / 2;
    DeploymentPlan::new("hybrid", cameras)
        .sized(ZoneKind::Availability, "t3.xlarge", Role::Processing, cameras - edge)
        .sized(ZoneKind::Wavelength, "t3.xlarge", Role::Processing, edge)
}

/// Wavelength VMs only relay streams to Availability zone processing.
pub fn static_relay(cameras: u32) -> DeploymentPlan {
    DeploymentPlan::new("static-relay", cameras)
        .sized(ZoneKind::Wavelength, "t3.xlarge", Role::Relay, cameras)
        .sized(ZoneKind::Availability, "t3.xlarge", Role::Processing, cameras)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MonthlyCost<T> {
    pub hourly: T,
    pub compute: T,
    pub storage: T,
    pub total: T,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum CostError {
    #[error("unknown instance type {0}")]
    UnknownInstance(String),
    #[error("no {zone} price for instance type {instance}")]
    MissingPrice { instance: String, zone: ZoneKind },
}

pub fn monthly_cost<T: Scalar>(
    plan: &DeploymentPlan,
    catalog: &[InstanceType<T>],
    storage: &StorageRates<T>,
) -> Result<MonthlyCost<T>, CostError> {
    let mut hourly = T::zero();
    let mut store = T::zero();
    for row in &plan.rows {
        let it = catalog
            .iter()
            .find(|i| i.name == row.instance_type)
            .ok_or_else(|| CostError::UnknownInstance(row.instance_type.clone()))?;
        let price = it.hourly(row.zone).ok_or_else(|| CostError::MissingPrice {
            instance: row.instance_type.clone(),
            zone: row.zone,
        })?;
        let n = T::from_u32(row.count).expect("count fits");
        hourly = hourly + n * price;
        store = store + n * storage.get(row.zone);
    }
    let compute = hourly * T::from_i64(HOURS_PER_MONTH).expect("fits");
    Ok(MonthlyCost {
        hourly,
        compute,
        storage: store,
        total: compute + store,
    })
}

/// Fraction of `b`'s total that `a` saves; negative when `a` costs more.
pub fn compare_plans<T: Scalar>(a: &MonthlyCost<T>, b: &MonthlyCost<T>) -> T {
    (b.total - a.total) / b.total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Exact;

    fn cost(plan: &DeploymentPlan) -> MonthlyCost<Exact> {
        monthly_cost(plan, &instance_catalog(), &StorageRates::default()).unwrap()
    }

    #[test]
    fn sizing() {
        assert_eq!(instances_required(100, Role::Processing), 50);
        assert_eq!(instances_required(100, Role::Relay), 15);
        assert_eq!(instances_required(0, Role::Processing), 0);
        assert_eq!(instances_required(0, Role::Relay), 0);
        assert_eq!(instances_required(7, Role::Relay), 1);
        assert_eq!(instances_required(8, Role::Relay), 2);
    }

    #[test]
    fn reference_rows() {
        let az = cost(&az_only(100));
        assert_eq!(az.hourly, ratio(835, 100));
        assert_eq!(az.compute, ratio(6012, 1));
        assert_eq!(az.storage, ratio(975, 1));
        assert_eq!(az.total, ratio(6987, 1));

        let hy = cost(&hybrid(100));
        assert_eq!(hy.hourly, ratio(9775, 1000));
        assert_eq!(hy.total, ratio(825275, 100));

        let relay = cost(&static_relay(100));
        assert_eq!(relay.total, ratio(984255, 100));

        let wl = cost(&wl_only(100));
        assert_eq!(wl.total, ratio(965824, 100));
    }

    #[test]
    fn savings() {
        let s = compare_plans(&cost(&hybrid(100)), &cost(&static_relay(100)));
        assert!(s > ratio(15, 100) && s < ratio(17, 100), "{s}");
        let az = cost(&az_only(100));
        assert_eq!(compare_plans(&az, &az), ratio(0, 1));
        assert!(compare_plans(&cost(&wl_only(100)), &az) < ratio(0, 1));
    }

    #[test]
    fn unknown_or_unpriced() {
        let plan = DeploymentPlan::new("x", 1).with(ZoneKind::Wavelength, "m9.huge", Role::Processing, 1);
        assert_eq!(
            monthly_cost(&plan, &instance_catalog::<f64>(), &StorageRates::default()),
            Err(CostError::UnknownInstance("m9.huge".into()))
        );
        let plan = DeploymentPlan::new("x", 1).with(ZoneKind::Availability, "g4dn.2xlarge", Role::Processing, 1);
        assert!(matches!(
            monthly_cost(&plan, &instance_catalog::<f64>(), &StorageRates::default()),
            Err(CostError::MissingPrice { .. })
        ));
    }
}
