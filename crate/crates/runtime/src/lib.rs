//! Runtime side of edgecut: metric collection, re-planning, and a
//! discrete-event simulator for placements on a tier chain.

pub mod monitor;
pub mod scenario;
pub mod scheduler;
pub mod sim;
pub mod trace;

pub use monitor::{EwmaEstimator, MetricsSnapshot, MetricsSource, Monitor, MonitorConfig};
pub use scheduler::{
    apply_placement, check_conditions, conditions_changed, handle_deploy_request,
    run_scheduling_loop, CapacityBook, Event, EventKind, MigrationPlan, Orchestrator, Planner,
    Scheduler, SchedulerConfig, Trigger, ZoneRegistry,
};
pub use sim::{run, SimError, SimOptions, SimResults, SimSetup, SyncMode, Workload};
pub use trace::{transfer_time, BandwidthProfile, Direction, StepTrace};
