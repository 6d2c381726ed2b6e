//! Time-optimal routing through charge points with reservation-aware
//! waiting.
//!
//! The search is a label-setting (Dijkstra-style) expansion over charge
//! points keyed by the *departure* time from each point, i.e. arrival plus
//! waiting plus charging. Because every stop charges to the same target
//! SoC, the state after a stop is fully described by the point and its
//! departure time, and `earliest_slot` is non-decreasing in the arrival
//! time, so the first label settled at a point is optimal and each point is
//! expanded at most once per journey. Once a route to the destination is
//! known, labels departing later than its arrival are pruned.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ev_model::EvParams;
use crate::geo::{distance_km, GeoPoint};
use crate::ledger::{Booking, EvId, LedgerError, ReservationLedger};
use crate::network::{ChargeNetwork, CpIdx};
use crate::trip_model::TripRequest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RoutingMode {
    /// Waits from existing bookings are known while planning.
    #[default]
    ReservationAware,
    /// Plans as if every charger were free; waits are realized first come,
    /// first served when the plan is committed.
    ReservationBlind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouterConfig {
    pub mode: RoutingMode,
    pub ev: EvParams,
    pub max_stops: u32,
    /// Best-arrival pruning; switching it off must not change results.
    pub prune: bool,
}

impl Default for RouterConfig {
    fn default() -> Self {
        Self {
            mode: RoutingMode::ReservationAware,
            ev: EvParams::default(),
            max_stops: 64,
            prune: true,
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum RouteError {
    #[error("no charge-point sequence reaches the destination")]
    Unroutable,
    #[error("route would need more than the allowed number of stops")]
    MaxStops,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub from: GeoPoint,
    pub to: GeoPoint,
    pub distance_km: f64,
    pub drive_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub cp: CpIdx,
    pub cp_id: String,
    pub arrival_h: f64,
    pub wait_h: f64,
    pub charge_start_h: f64,
    pub charge_end_h: f64,
    pub soc_in: f64,
    pub soc_out: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutePlan {
    pub ev_id: EvId,
    pub depart_h: f64,
    pub legs: Vec<Leg>,
    pub stops: Vec<Stop>,
    pub arrival_h: f64,
    pub total_time_h: f64,
    pub route_distance_km: f64,
    pub direct_distance_km: f64,
    pub needed_charging: bool,
}

impl RoutePlan {
    /// Driven distance over elapsed time, including waiting and charging.
    pub fn average_speed_kph(&self) -> f64 {
        self.route_distance_km / self.total_time_h
    }

    /// Straight-line origin–destination distance over elapsed time.
    pub fn direct_speed_kph(&self) -> f64 {
        self.direct_distance_km / self.total_time_h
    }

    pub fn total_wait_h(&self) -> f64 {
        self.stops.iter().map(|s| s.wait_h).sum()
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")
    }
}

pub fn average_trip_speed(plan: &RoutePlan) -> f64 {
    plan.average_speed_kph()
}

/// Where a search begins. Regular trips start full at their origin; fault
/// reroutes start at a broken charger with whatever charge is left and may
/// use it all on the first leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchStart {
    pub location: GeoPoint,
    pub time_h: f64,
    pub soc: f64,
    pub emergency: bool,
}

#[derive(Debug, Clone)]
struct Label {
    cp: Option<CpIdx>,
    location: GeoPoint,
    arrival: f64,
    charge_start: f64,
    departure: f64,
    soc_in: f64,
    soc_dep: f64,
    dist_from_parent: f64,
    path: Vec<CpIdx>,
    parent: Option<usize>,
}

/// Ordering used for labels and for candidate routes: time, then fewer
/// stops, then the lexicographic id sequence.
fn key_cmp(t1: f64, p1: &[CpIdx], t2: f64, p2: &[CpIdx]) -> Ordering {
    t1.total_cmp(&t2)
        .then(p1.len().cmp(&p2.len()))
        .then_with(|| p1.cmp(p2))
}

struct HeapEntry {
    departure: f64,
    idx: usize,
    path: Vec<CpIdx>,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        key_cmp(self.departure, &self.path, other.departure, &other.path).then(self.idx.cmp(&other.idx))
    }
}

pub struct Router<'a> {
    net: &'a ChargeNetwork,
    cfg: &'a RouterConfig,
}

impl<'a> Router<'a> {
    pub fn new(net: &'a ChargeNetwork, cfg: &'a RouterConfig) -> Self {
        Self { net, cfg }
    }

    pub fn config(&self) -> &RouterConfig {
        self.cfg
    }

    /// Plans a regular trip starting with `ev.start_soc` at the origin.
    pub fn plan(&self, req: &TripRequest, ledger: &ReservationLedger) -> Result<RoutePlan, RouteError> {
        let start = SearchStart {
            location: req.origin,
            time_h: req.depart_time,
            soc: self.cfg.ev.start_soc,
            emergency: false,
        };
        self.plan_from(req.ev_id, &start, req.destination, ledger, None)
    }

    /// General search. `excluded[i]` marks points that may not be used;
    /// bookings held by `ev_id` itself are ignored when computing waits.
    pub fn plan_from(
        &self,
        ev_id: EvId,
        start: &SearchStart,
        destination: GeoPoint,
        ledger: &ReservationLedger,
        excluded: Option<&[bool]>,
    ) -> Result<RoutePlan, RouteError> {
        let ev = &self.cfg.ev;
        let range_per_soc = ev.usable_range_km();
        let speed = ev.speed_kph;
        let target = ev.charge_target_soc;
        let (first_cp_floor, first_dest_floor) = if start.emergency {
            (0.0, 0.0)
        } else {
            (ev.reserve_soc, ev.destination_reserve())
        };
        let direct = distance_km(start.location, destination);
        let needed_charging = direct > (start.soc - first_dest_floor) * range_per_soc;

        let n = self.net.len();
        let mut settled = vec![false; n];
        let mut best_key: Vec<Option<(f64, Vec<CpIdx>)>> = vec![None; n];
        let mut labels = vec![Label {
            cp: None,
            location: start.location,
            arrival: start.time_h,
            charge_start: start.time_h,
            departure: start.time_h,
            soc_in: start.soc,
            soc_dep: start.soc,
            dist_from_parent: 0.0,
            path: Vec::new(),
            parent: None,
        }];
        let mut heap = BinaryHeap::new();
        heap.push(Reverse(HeapEntry {
            departure: start.time_h,
            idx: 0,
            path: Vec::new(),
        }));

        // (arrival, path, label index, final leg km)
        let mut best: Option<(f64, Vec<CpIdx>, usize, f64)> = None;
        let mut blocked_by_max_stops = false;

        while let Some(Reverse(entry)) = heap.pop() {
            let li = entry.idx;
            if let Some(cp) = labels[li].cp {
                if settled[cp.get()] {
                    continue;
                }
                settled[cp.get()] = true;
            }
            if self.cfg.prune {
                if let Some((arr, ..)) = &best {
                    if labels[li].departure > *arr {
                        break;
                    }
                }
            }
            let label = labels[li].clone();
            let is_origin = label.cp.is_none();

            let dest_floor = if is_origin { first_dest_floor } else { ev.destination_reserve() };
            let d_dest = distance_km(label.location, destination);
            if d_dest <= (label.soc_dep - dest_floor) * range_per_soc {
                let arrival = label.departure + d_dest / speed;
                let better = match &best {
                    None => true,
                    Some((a, p, ..)) => key_cmp(arrival, &label.path, *a, p) == Ordering::Less,
                };
                if better {
                    best = Some((arrival, label.path.clone(), li, d_dest));
                }
                if is_origin {
                    // nothing can beat driving straight there
                    break;
                }
            }

            if label.path.len() as u32 >= self.cfg.max_stops {
                blocked_by_max_stops = true;
                continue;
            }
            let floor = if is_origin { first_cp_floor } else { ev.reserve_soc };
            let reach = (label.soc_dep - floor) * range_per_soc;
            if reach < 0.0 {
                continue;
            }
            let mut pushes = Vec::new();
            self.net.for_each_within(label.location, reach, |q, d| {
                let qi = q.get();
                if settled[qi] || excluded.is_some_and(|m| m[qi]) {
                    return;
                }
                let point = self.net.point(q);
                if !point.operational {
                    return;
                }
                let soc_in = label.soc_dep - d / range_per_soc;
                if soc_in >= target {
                    return;
                }
                let arrival = label.departure + d / speed;
                let power = ev.effective_power_kw(point.kind, point.power_kw);
                let Ok(duration) = ev.charge_duration_h(soc_in, target, power) else {
                    return;
                };
                let charge_start = match self.cfg.mode {
                    RoutingMode::ReservationAware => ledger.earliest_slot_ignoring(q, arrival, duration, Some(ev_id)),
                    RoutingMode::ReservationBlind => arrival,
                };
                let departure = charge_start + duration;
                pushes.push((q, d, soc_in, arrival, charge_start, departure));
            });
            // deterministic push order
            pushes.sort_by_key(|p| p.0);
            for (q, d, soc_in, arrival, charge_start, departure) in pushes {
                if self.cfg.prune {
                    if let Some((arr, ..)) = &best {
                        if departure > *arr {
                            continue;
                        }
                    }
                }
                let mut path = label.path.clone();
                path.push(q);
                let improves = match &best_key[q.get()] {
                    None => true,
                    Some((t, p)) => key_cmp(departure, &path, *t, p) == Ordering::Less,
                };
                if !improves {
                    continue;
                }
                best_key[q.get()] = Some((departure, path.clone()));
                labels.push(Label {
                    cp: Some(q),
                    location: self.net.point(q).location,
                    arrival,
                    charge_start,
                    departure,
                    soc_in,
                    soc_dep: target,
                    dist_from_parent: d,
                    path: path.clone(),
                    parent: Some(li),
                });
                heap.push(Reverse(HeapEntry {
                    departure,
                    idx: labels.len() - 1,
                    path,
                }));
            }
        }

        let Some((arrival, _, last, final_km)) = best else {
            return Err(if blocked_by_max_stops {
                RouteError::MaxStops
            } else {
                RouteError::Unroutable
            });
        };

        let mut chain = Vec::new();
        let mut cur = Some(last);
        while let Some(i) = cur {
            chain.push(i);
            cur = labels[i].parent;
        }
        chain.reverse();

        let mut legs = Vec::with_capacity(chain.len());
        let mut stops = Vec::with_capacity(chain.len().saturating_sub(1));
        for w in chain.windows(2) {
            let (prev, l) = (&labels[w[0]], &labels[w[1]]);
            let cp = l.cp.expect("non-origin label has a charge point");
            legs.push(Leg {
                from: prev.location,
                to: l.location,
                distance_km: l.dist_from_parent,
                drive_h: l.dist_from_parent / speed,
            });
            stops.push(Stop {
                cp,
                cp_id: self.net.point(cp).id.clone(),
                arrival_h: l.arrival,
                wait_h: l.charge_start - l.arrival,
                charge_start_h: l.charge_start,
                charge_end_h: l.departure,
                soc_in: l.soc_in,
                soc_out: l.soc_dep,
            });
        }
        legs.push(Leg {
            from: labels[last].location,
            to: destination,
            distance_km: final_km,
            drive_h: final_km / speed,
        });
        let route_distance_km = legs.iter().map(|l| l.distance_km).sum();
        Ok(RoutePlan {
            ev_id,
            depart_h: start.time_h,
            legs,
            stops,
            arrival_h: arrival,
            total_time_h: arrival - start.time_h,
            route_distance_km,
            direct_distance_km: direct,
            needed_charging,
        })
    }

    /// Books the plan's charging windows. In blind mode each stop's charge
    /// is re-resolved first come, first served in stop order and the plan's
    /// downstream times shift by the realized waits.
    pub fn commit(&self, plan: &RoutePlan, ledger: &mut ReservationLedger) -> Result<RoutePlan, LedgerError> {
        match self.cfg.mode {
            RoutingMode::ReservationAware => {
                for s in &plan.stops {
                    ledger.commit(Booking {
                        cp: s.cp,
                        ev_id: plan.ev_id,
                        start: s.charge_start_h,
                        end: s.charge_end_h,
                    })?;
                }
                Ok(plan.clone())
            }
            RoutingMode::ReservationBlind => {
                let mut realized = plan.clone();
                let mut t = plan.depart_h;
                for (leg, stop) in realized.legs.iter().zip(realized.stops.iter_mut()) {
                    let arrival = t + leg.drive_h;
                    let duration = stop.charge_end_h - stop.charge_start_h;
                    let start = ledger.earliest_slot(stop.cp, arrival, duration);
                    let end = start + duration;
                    ledger.commit(Booking {
                        cp: stop.cp,
                        ev_id: plan.ev_id,
                        start,
                        end,
                    })?;
                    stop.arrival_h = arrival;
                    stop.wait_h = start - arrival;
                    stop.charge_start_h = start;
                    stop.charge_end_h = end;
                    t = end;
                }
                let last = realized.legs.last().expect("a plan has at least one leg");
                realized.arrival_h = t + last.drive_h;
                realized.total_time_h = realized.arrival_h - realized.depart_h;
                Ok(realized)
            }
        }
    }
}

/// Convenience wrapper over [`Router::plan`].
pub fn plan_route(
    req: &TripRequest,
    net: &ChargeNetwork,
    ledger: &ReservationLedger,
    cfg: &RouterConfig,
) -> Result<RoutePlan, RouteError> {
    Router::new(net, cfg).plan(req, ledger)
}

/// Convenience wrapper over [`Router::commit`].
pub fn commit_route(
    plan: &RoutePlan,
    net: &ChargeNetwork,
    ledger: &mut ReservationLedger,
    cfg: &RouterConfig,
) -> Result<RoutePlan, LedgerError> {
    Router::new(net, cfg).commit(plan, ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ChargeKind, ChargePoint};

    fn origin() -> GeoPoint {
        GeoPoint::new(53.0, -8.0).unwrap()
    }

    fn req(ev_id: EvId, east_km: f64) -> TripRequest {
        TripRequest {
            ev_id,
            origin: origin(),
            destination: origin().offset_km(0.0, east_km),
            trip_km: east_km,
            depart_time: 0.0,
        }
    }

    fn line(points: &[(&str, f64, ChargeKind, f64)]) -> ChargeNetwork {
        ChargeNetwork::new(
            points
                .iter()
                .map(|&(id, km, kind, kw)| ChargePoint::new(id, origin().offset_km(0.0, km), kind, kw))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn short_trip_needs_no_stop() {
        let net = line(&[("a", 20.0, ChargeKind::Dc, 50.0)]);
        let cfg = RouterConfig::default();
        let r = req(0, 50.0);
        let plan = plan_route(&r, &net, &ReservationLedger::new(), &cfg).unwrap();
        assert!(plan.stops.is_empty() && !plan.needed_charging);
        assert_eq!(plan.arrival_h, distance_km(r.origin, r.destination) / 90.0);
        assert!((plan.arrival_h - 50.0 / 90.0).abs() < 1e-4);
        assert!((plan.average_speed_kph() - 90.0).abs() < 1e-6);
    }

    #[test]
    fn corridor_with_two_stops() {
        let net = line(&[("a", 50.0, ChargeKind::Dc, 50.0), ("b", 100.0, ChargeKind::Dc, 50.0)]);
        let cfg = RouterConfig::default();
        let plan = plan_route(&req(0, 150.0), &net, &ReservationLedger::new(), &cfg).unwrap();
        let ids: Vec<_> = plan.stops.iter().map(|s| s.cp_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        let ev = cfg.ev;
        let km: Vec<f64> = plan.legs.iter().map(|l| l.distance_km).collect();
        let soc_a = 1.0 - km[0] / ev.usable_range_km();
        let soc_b = 0.8 - km[1] / ev.usable_range_km();
        let charge = (0.8 - soc_a) * 24.0 / 45.0 + (0.8 - soc_b) * 24.0 / 45.0;
        let want = km.iter().sum::<f64>() / 90.0 + charge;
        assert!((plan.arrival_h - want).abs() < 1e-12, "{} vs {want}", plan.arrival_h);
        // about 2.13 h for 150 km
        assert!((plan.arrival_h - 2.1305).abs() < 1e-3);
        for s in &plan.stops {
            assert!(s.soc_in >= ev.reserve_soc && s.soc_out == ev.charge_target_soc);
        }
    }

    #[test]
    fn unroutable_and_excluded() {
        let net = line(&[("a", 60.0, ChargeKind::Dc, 50.0)]);
        let cfg = RouterConfig::default();
        let empty = ReservationLedger::new();
        assert_eq!(plan_route(&req(0, 200.0), &net, &empty, &cfg), Err(RouteError::Unroutable));
        let router = Router::new(&net, &cfg);
        let r = req(0, 110.0);
        let start = SearchStart {
            location: r.origin,
            time_h: 0.0,
            soc: 1.0,
            emergency: false,
        };
        assert!(router.plan_from(0, &start, r.destination, &empty, None).is_ok());
        assert_eq!(
            router.plan_from(0, &start, r.destination, &empty, Some(&[true])),
            Err(RouteError::Unroutable)
        );
    }

    #[test]
    fn emergency_start_may_use_reserve() {
        let net = line(&[("a", 60.0, ChargeKind::Dc, 50.0)]);
        let cfg = RouterConfig::default();
        let start = SearchStart {
            location: origin(),
            time_h: 1.0,
            soc: 0.2,
            emergency: true,
        };
        let router = Router::new(&net, &cfg);
        let near = origin().offset_km(0.0, 18.0);
        let plan = router.plan_from(3, &start, near, &ReservationLedger::new(), None).unwrap();
        assert!(plan.stops.is_empty());
        let far = origin().offset_km(0.0, 19.0);
        assert!(router.plan_from(3, &start, far, &ReservationLedger::new(), None).is_err());
        let normal = SearchStart { emergency: false, ..start };
        assert!(router.plan_from(3, &normal, near, &ReservationLedger::new(), None).is_err());
    }

    #[test]
    fn aware_commit_books_plan_windows_and_second_ev_waits() {
        let net = line(&[("m", 60.0, ChargeKind::Ac, 11.0)]);
        let cfg = RouterConfig::default();
        let mut ledger = ReservationLedger::new();
        let first = plan_route(&req(0, 110.0), &net, &ledger, &cfg).unwrap();
        commit_route(&first, &net, &mut ledger, &cfg).unwrap();
        let b = ledger.bookings(CpIdx(0));
        assert_eq!(b.len(), 1);
        assert_eq!((b[0].start, b[0].end), (first.stops[0].charge_start_h, first.stops[0].charge_end_h));
        let second = plan_route(&req(1, 110.0), &net, &ledger, &cfg).unwrap();
        let dur = first.stops[0].charge_end_h - first.stops[0].charge_start_h;
        assert!((second.stops[0].wait_h - dur).abs() < 1e-12);
        assert!(first.average_speed_kph() > 50.0 && first.average_speed_kph() < 50.5);
        assert!(second.average_speed_kph() < 40.0);
    }

    #[test]
    fn blind_plan_ignores_bookings_until_commit() {
        let net = line(&[("m", 60.0, ChargeKind::Ac, 11.0)]);
        let cfg = RouterConfig {
            mode: RoutingMode::ReservationBlind,
            ..Default::default()
        };
        let mut ledger = ReservationLedger::new();
        let first = plan_route(&req(0, 110.0), &net, &ledger, &cfg).unwrap();
        let first = commit_route(&first, &net, &mut ledger, &cfg).unwrap();
        let second = plan_route(&req(1, 110.0), &net, &ledger, &cfg).unwrap();
        assert_eq!(second.stops[0].wait_h, 0.0);
        let realized = commit_route(&second, &net, &mut ledger, &cfg).unwrap();
        let dur = first.stops[0].charge_end_h - first.stops[0].charge_start_h;
        assert!((realized.stops[0].wait_h - dur).abs() < 1e-12);
        assert!((realized.arrival_h - second.arrival_h - dur).abs() < 1e-12);
        assert!(ledger.is_consistent());
    }

    #[test]
    fn colocated_tie_breaks_on_id() {
        let net = line(&[("b", 60.0, ChargeKind::Dc, 50.0), ("a", 60.0, ChargeKind::Dc, 50.0)]);
        let plan = plan_route(&req(0, 110.0), &net, &ReservationLedger::new(), &RouterConfig::default()).unwrap();
        assert_eq!(plan.stops[0].cp_id, "a");
    }

    #[test]
    fn jsonl_is_one_line() {
        let net = line(&[("a", 60.0, ChargeKind::Dc, 50.0)]);
        let plan = plan_route(&req(0, 110.0), &net, &ReservationLedger::new(), &RouterConfig::default()).unwrap();
        let mut buf = Vec::new();
        plan.write_jsonl(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.matches('\n').count(), 1);
        let back: RoutePlan = serde_json::from_str(s.trim()).unwrap();
        assert_eq!(back, plan);
    }
}
