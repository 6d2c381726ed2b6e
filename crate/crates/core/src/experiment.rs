//! Monte Carlo orchestration: trip sets, replicate runs, speed metrics,
//! capacity search and the infrastructure cost model.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ev_model::EvError;
use crate::fault::CommittedRoutes;
use crate::geo::{distance_km, GeoPoint};
use crate::ledger::ReservationLedger;
use crate::network::{ChargeKind, ChargeNetwork};
use crate::population::PopulationGrid;
use crate::rng::{keyed_uniform, stream};
use crate::router::{RoutePlan, Router, RouterConfig};
use crate::stats::{wilson_upper, Z95};
use crate::trip_model::{TripLengthDistribution, TripRequest};

/// Stream tags keep trip draws and processing priorities independent.
const TRIP_TAG: u64 = 1;
const ORDER_TAG: u64 = 2;

/// Origin redraws before a fresh trip length is drawn.
const ORIGIN_RETRIES: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("n_ev must be at least 1")]
    NoVehicles,
    #[error("replicates must be at least 1")]
    NoReplicates,
    #[error("speed thresholds must be positive and finite")]
    Thresholds,
    #[error("target probability {0} must lie in (0, 1]")]
    Target(f64),
    #[error("number of users must be positive")]
    NoUsers,
    #[error(transparent)]
    Ev(#[from] EvError),
}

/// Produces the trip of `ev_id` in a replicate. Implementations draw only
/// from streams keyed by `(seed, replicate, ev_id)`, so the first `n` trips
/// are the same whatever the fleet size.
pub trait TripSource: Sync {
    fn trip(&self, seed: u64, replicate: u64, ev_id: u32) -> TripRequest;
}

/// Population-weighted origins, trip lengths from the length distribution,
/// destinations on a population-weighted ring. All trips depart at 0.
pub struct PopulationTrips<'a> {
    pub grid: &'a PopulationGrid,
    pub lengths: &'a TripLengthDistribution,
}

impl TripSource for PopulationTrips<'_> {
    fn trip(&self, seed: u64, replicate: u64, ev_id: u32) -> TripRequest {
        let mut rng = stream(seed, &[TRIP_TAG, replicate, ev_id as u64]);
        loop {
            let trip_km = self.lengths.sample_trip_km(&mut rng);
            // an empty ring means this origin cannot host a trip this long;
            // redrawing the origin keeps the length distribution intact
            for _ in 0..ORIGIN_RETRIES {
                let origin = self.grid.sample_origin(&mut rng);
                if let Ok(destination) = self.grid.sample_destination(origin, trip_km, &mut rng) {
                    return TripRequest {
                        ev_id,
                        origin,
                        destination,
                        trip_km,
                        depart_time: 0.0,
                    };
                }
            }
        }
    }
}

/// Fixed origin/destination pairs repeated in cycles; cycle `c` departs at
/// `c * cycle_spacing_h`.
#[derive(Debug, Clone)]
pub struct TemplateTrips {
    pub templates: Vec<(GeoPoint, GeoPoint)>,
    pub cycle_spacing_h: f64,
}

impl TripSource for TemplateTrips {
    fn trip(&self, _seed: u64, _replicate: u64, ev_id: u32) -> TripRequest {
        let n = self.templates.len() as u32;
        let (origin, destination) = self.templates[(ev_id % n) as usize];
        TripRequest {
            ev_id,
            origin,
            destination,
            trip_km: distance_km(origin, destination),
            depart_time: (ev_id / n) as f64 * self.cycle_spacing_h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_ev: u32,
    pub router: RouterConfig,
    pub replicates: u32,
    pub seed: u64,
    pub speed_thresholds_kph: Vec<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_ev: 1000,
            router: RouterConfig::default(),
            replicates: 1,
            seed: 0,
            speed_thresholds_kph: vec![60.0, 40.0, 10.0],
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n_ev == 0 {
            return Err(ScenarioError::NoVehicles);
        }
        if self.replicates == 0 {
            return Err(ScenarioError::NoReplicates);
        }
        if self.speed_thresholds_kph.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(ScenarioError::Thresholds);
        }
        self.router.ev.validate()?;
        Ok(())
    }
}

/// Raw counters; every fraction is derived from them. Unroutable trips
/// count as below every speed threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub n_ev: u32,
    pub thresholds_kph: Vec<f64>,
    pub trips: u64,
    pub needed_charge: u64,
    pub unroutable: u64,
    pub routed: u64,
    pub below: Vec<u64>,
    pub speed_sum_kph: f64,
}

impl ScenarioMetrics {
    pub fn empty(n_ev: u32, thresholds_kph: &[f64]) -> Self {
        Self {
            n_ev,
            thresholds_kph: thresholds_kph.to_vec(),
            trips: 0,
            needed_charge: 0,
            unroutable: 0,
            routed: 0,
            below: vec![0; thresholds_kph.len()],
            speed_sum_kph: 0.0,
        }
    }

    fn record(&mut self, needed_charge: bool, plan: Option<&RoutePlan>) {
        self.trips += 1;
        self.needed_charge += needed_charge as u64;
        match plan {
            Some(p) => {
                let v = p.average_speed_kph();
                self.routed += 1;
                self.speed_sum_kph += v;
                for (b, t) in self.below.iter_mut().zip(&self.thresholds_kph) {
                    *b += (v < *t) as u64;
                }
            }
            None => {
                self.unroutable += 1;
                self.below.iter_mut().for_each(|b| *b += 1);
            }
        }
    }

    pub fn merge(&mut self, other: &ScenarioMetrics) {
        assert_eq!(self.thresholds_kph, other.thresholds_kph, "merging metrics with different thresholds");
        self.trips += other.trips;
        self.needed_charge += other.needed_charge;
        self.unroutable += other.unroutable;
        self.routed += other.routed;
        self.speed_sum_kph += other.speed_sum_kph;
        for (a, b) in self.below.iter_mut().zip(&other.below) {
            *a += b;
        }
    }

    fn frac(&self, k: u64) -> f64 {
        if self.trips == 0 {
            0.0
        } else {
            k as f64 / self.trips as f64
        }
    }

    pub fn frac_needing_charge(&self) -> f64 {
        self.frac(self.needed_charge)
    }

    pub fn frac_unroutable(&self) -> f64 {
        self.frac(self.unroutable)
    }

    pub fn below_count(&self, threshold_kph: f64) -> Option<u64> {
        self.thresholds_kph
            .iter()
            .position(|&t| t == threshold_kph)
            .map(|i| self.below[i])
    }

    pub fn frac_below(&self, threshold_kph: f64) -> Option<f64> {
        self.below_count(threshold_kph).map(|k| self.frac(k))
    }

    pub fn mean_speed_kph(&self) -> f64 {
        if self.routed == 0 {
            f64::NAN
        } else {
            self.speed_sum_kph / self.routed as f64
        }
    }

    pub fn below_upper_ci(&self, threshold_kph: f64) -> Option<f64> {
        self.below_count(threshold_kph).map(|k| wilson_upper(k, self.trips))
    }
}

/// Which realized plans a replicate keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeepPlans {
    None,
    /// Routed plans with at least one stop, for fault replay.
    Charged,
    All,
}

#[derive(Debug, Clone)]
pub struct ReplicateRun {
    pub replicate: u64,
    pub metrics: ScenarioMetrics,
    pub ledger: ReservationLedger,
    pub plans: Vec<RoutePlan>,
}

impl ReplicateRun {
    pub fn into_committed(self) -> CommittedRoutes {
        let plans = self.plans.into_iter().filter(|p| !p.stops.is_empty()).collect();
        CommittedRoutes {
            trips: self.metrics.trips,
            needed_charge: self.metrics.needed_charge,
            unroutable: self.metrics.unroutable,
            plans,
            ledger: self.ledger,
        }
    }
}

/// Indices `0..n` in processing order: ascending keyed priority. The order
/// of the first `n` EVs is a subsequence of the order for any larger fleet.
pub fn processing_order(seed: u64, replicate: u64, n: u32) -> Vec<u32> {
    let mut keyed: Vec<(f64, u32)> = (0..n)
        .map(|i| (keyed_uniform(seed, &[ORDER_TAG, replicate, i as u64]), i))
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|x| x.1).collect()
}

/// Plans and commits one replicate's trips sequentially.
pub fn run_replicate(
    cfg: &ScenarioConfig,
    net: &ChargeNetwork,
    source: &dyn TripSource,
    replicate: u64,
    keep: KeepPlans,
) -> ReplicateRun {
    let router = Router::new(net, &cfg.router);
    let ev = &cfg.router.ev;
    let direct_limit = (ev.start_soc - ev.destination_reserve()) * ev.usable_range_km();
    let mut ledger = ReservationLedger::new();
    let mut metrics = ScenarioMetrics::empty(cfg.n_ev, &cfg.speed_thresholds_kph);
    let mut plans = Vec::new();
    for ev_id in processing_order(cfg.seed, replicate, cfg.n_ev) {
        let req = source.trip(cfg.seed, replicate, ev_id);
        let needed = distance_km(req.origin, req.destination) > direct_limit;
        match router.plan(&req, &ledger) {
            Ok(plan) => {
                let realized = router
                    .commit(&plan, &mut ledger)
                    .expect("planned windows are free in the ledger they were planned against");
                metrics.record(needed, Some(&realized));
                let keep_it = match keep {
                    KeepPlans::None => false,
                    KeepPlans::Charged => !realized.stops.is_empty(),
                    KeepPlans::All => true,
                };
                if keep_it {
                    plans.push(realized);
                }
            }
            Err(_) => metrics.record(needed, None),
        }
    }
    ReplicateRun {
        replicate,
        metrics,
        ledger,
        plans,
    }
}

/// All replicates, run in parallel and returned in replicate order.
pub fn run_replicates(
    cfg: &ScenarioConfig,
    net: &ChargeNetwork,
    source: &dyn TripSource,
    keep: KeepPlans,
) -> Result<Vec<ReplicateRun>, ScenarioError> {
    cfg.validate()?;
    Ok((0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| run_replicate(cfg, net, source, r, keep))
        .collect())
}

pub fn run_scenario(
    cfg: &ScenarioConfig,
    net: &ChargeNetwork,
    source: &dyn TripSource,
) -> Result<ScenarioMetrics, ScenarioError> {
    let runs = run_replicates(cfg, net, source, KeepPlans::None)?;
    let mut total = ScenarioMetrics::empty(cfg.n_ev, &cfg.speed_thresholds_kph);
    for r in &runs {
        total.merge(&r.metrics);
    }
    Ok(total)
}

pub fn write_metrics_csv(rows: &[ScenarioMetrics], writer: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let Some(first) = rows.first() else {
        w.flush()?;
        return Ok(());
    };
    let mut header = vec!["n_ev".to_string(), "trips".into(), "frac_charge".into()];
    header.extend(first.thresholds_kph.iter().map(|t| format!("frac_below_{t}")));
    header.extend(["frac_unroutable".into(), "mean_speed".into()]);
    w.write_record(&header)?;
    for m in rows {
        let mut rec = vec![m.n_ev.to_string(), m.trips.to_string(), m.frac_needing_charge().to_string()];
        rec.extend(m.below.iter().map(|&k| m.frac(k).to_string()));
        rec.push(m.frac_unroutable().to_string());
        rec.push(m.mean_speed_kph().to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityProbe {
    pub n_ev: u32,
    pub trips: u64,
    pub below: u64,
    pub upper_ci: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub threshold_kph: f64,
    pub target_p: f64,
    /// `None` when even a single EV misses the target.
    pub capacity: Option<u32>,
    pub probes: Vec<CapacityProbe>,
}

impl CapacityReport {
    pub fn probe(&self, n_ev: u32) -> Option<&CapacityProbe> {
        self.probes.iter().find(|p| p.n_ev == n_ev)
    }
}

/// Largest fleet size up to `n_max` whose Wilson 95% upper bound on the
/// fraction of trips slower than `threshold_kph` stays at or below
/// `target_p`: doubling from 1, then bisection.
///
/// Each probe runs at least `cfg.replicates` replicates, and more for small
/// fleets, so that it pools enough trips for a zero count to meet the
/// target at all.
pub fn capacity_search(
    cfg: &ScenarioConfig,
    net: &ChargeNetwork,
    source: &dyn TripSource,
    threshold_kph: f64,
    target_p: f64,
    n_max: u32,
) -> Result<CapacityReport, ScenarioError> {
    if !(target_p > 0.0 && target_p <= 1.0) {
        return Err(ScenarioError::Target(target_p));
    }
    if n_max == 0 {
        return Err(ScenarioError::NoVehicles);
    }
    let mut probes: Vec<CapacityProbe> = Vec::new();
    let min_trips = (Z95 * Z95 / target_p).ceil().min(u32::MAX as f64) as u32;
    let mut probe = |n: u32| -> Result<bool, ScenarioError> {
        let c = ScenarioConfig {
            n_ev: n,
            replicates: cfg.replicates.max(min_trips.div_ceil(n)),
            speed_thresholds_kph: vec![threshold_kph],
            ..cfg.clone()
        };
        let m = run_scenario(&c, net, source)?;
        let below = m.below[0];
        let upper_ci = wilson_upper(below, m.trips);
        let pass = upper_ci <= target_p;
        probes.push(CapacityProbe {
            n_ev: n,
            trips: m.trips,
            below,
            upper_ci,
            pass,
        });
        Ok(pass)
    };

    if !probe(1)? {
        return Ok(CapacityReport {
            threshold_kph,
            target_p,
            capacity: None,
            probes,
        });
    }
    let mut lo = 1u32;
    let mut hi = None;
    while lo < n_max {
        let n = lo.saturating_mul(2).min(n_max);
        if probe(n)? {
            lo = n;
        } else {
            hi = Some(n);
            break;
        }
    }
    if let Some(mut hi) = hi {
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if probe(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    Ok(CapacityReport {
        threshold_kph,
        target_p,
        capacity: Some(lo),
        probes,
    })
}

/// Installation and maintenance costs in EUR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfraCostModel {
    pub dc_install: f64,
    pub ac_install: f64,
    pub dc_annual: f64,
    pub ac_annual: f64,
    pub lifespan_years: f64,
}

impl Default for InfraCostModel {
    fn default() -> Self {
        Self {
            dc_install: 48_000.0,
            ac_install: 12_500.0,
            dc_annual: 6_000.0,
            ac_annual: 350.0,
            lifespan_years: 20.0,
        }
    }
}

impl InfraCostModel {
    /// Annualized EUR per user for `n_dc` DC and `n_ac` AC points.
    pub fn cost_per_user_counts(&self, n_dc: usize, n_ac: usize, n_users: u64) -> Result<f64, ScenarioError> {
        if n_users == 0 {
            return Err(ScenarioError::NoUsers);
        }
        let (dc, ac) = (n_dc as f64, n_ac as f64);
        let install = (dc * self.dc_install + ac * self.ac_install) / self.lifespan_years;
        let upkeep = dc * self.dc_annual + ac * self.ac_annual;
        Ok((install + upkeep) / n_users as f64)
    }

    pub fn cost_per_user(&self, net: &ChargeNetwork, n_users: u64) -> Result<f64, ScenarioError> {
        self.cost_per_user_counts(net.count_kind(ChargeKind::Dc), net.count_kind(ChargeKind::Ac), n_users)
    }
}
