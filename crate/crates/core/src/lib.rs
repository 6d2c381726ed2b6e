//! Monte Carlo simulation of a public EV charging network: population
//! weighted trip generation, time-optimal routing with charger
//! reservations, fleet capacity estimation and fault injection.

pub mod ev_model;
pub mod experiment;
pub mod fault;
pub mod fixtures;
pub mod geo;
pub mod ledger;
pub mod network;
pub mod population;
pub mod quad;
pub mod rng;
pub mod router;
pub mod stats;
pub mod trip_model;

pub use ev_model::{EvError, EvParams};
pub use experiment::{
    capacity_search, run_replicate, run_replicates, run_scenario, CapacityReport, InfraCostModel, KeepPlans,
    PopulationTrips, ReplicateRun, ScenarioConfig, ScenarioError, ScenarioMetrics, TemplateTrips, TripSource,
};
pub use fault::{
    estimate_ps_first_order, replay_trip, sample_fault_mask, CommittedRoutes, CrnMasks, FaultConfig, FaultMask,
    FaultSweep, FaultSweepRow, ReplayOutcome, ReplayStatus,
};
pub use geo::{distance_km, GeoError, GeoIndex, GeoPoint};
pub use ledger::{Booking, EvId, LedgerError, ReservationLedger};
pub use network::{ChargeKind, ChargeNetwork, ChargePoint, CpIdx, NetworkError};
pub use population::{Cell, PopulationError, PopulationGrid, RingEmpty};
pub use router::{
    average_trip_speed, commit_route, plan_route, Leg, RouteError, RoutePlan, Router, RouterConfig, RoutingMode,
    SearchStart, Stop,
};
pub use trip_model::{TripLengthDistribution, TripLengthParams, TripModelError, TripRequest};
