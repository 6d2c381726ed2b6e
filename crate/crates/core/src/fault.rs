//! Independent charge-point faults, replay of committed routes against a
//! fault mask, and stranding statistics.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::ReservationLedger;
use crate::network::{ChargeNetwork, CpIdx};
use crate::rng::{hash_str, keyed_uniform};
use crate::router::{RoutePlan, Router, RouterConfig, RoutingMode, SearchStart};
use crate::stats::{mean_and_stderr, wilson_interval, Z95};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("fault probability {0} outside [0, 1]")]
pub struct FaultProbabilityError(pub f64);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultConfig {
    pub p_f: f64,
    pub seed: u64,
}

impl FaultConfig {
    pub fn new(p_f: f64, seed: u64) -> Result<Self, FaultProbabilityError> {
        if !(0.0..=1.0).contains(&p_f) {
            return Err(FaultProbabilityError(p_f));
        }
        Ok(Self { p_f, seed })
    }
}

/// `faulty[i]` is true when point `i` is out of service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultMask {
    faulty: Vec<bool>,
}

impl FaultMask {
    pub fn none(n: usize) -> Self {
        Self {
            faulty: vec![false; n],
        }
    }

    pub fn from_flags(faulty: Vec<bool>) -> Self {
        Self { faulty }
    }

    pub fn is_faulty(&self, cp: CpIdx) -> bool {
        self.faulty[cp.get()]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.faulty
    }

    pub fn faulty_points(&self) -> Vec<CpIdx> {
        self.faulty
            .iter()
            .enumerate()
            .filter(|x| *x.1)
            .map(|(i, _)| CpIdx(i as u32))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.faulty.iter().filter(|&&f| f).count()
    }
}

/// Marks each point faulty independently with probability `p_f`, drawing
/// one uniform per point in index order.
pub fn sample_fault_mask<R: Rng + ?Sized>(net: &ChargeNetwork, p_f: f64, rng: &mut R) -> FaultMask {
    FaultMask {
        faulty: (0..net.len()).map(|_| rng.random::<f64>() < p_f).collect(),
    }
}

/// Common-random-number masks: point `id` in mask `m` is faulty at `p_f`
/// iff its keyed uniform is below `p_f`. Masks for a larger `p_f` are
/// supersets of those for a smaller one, and adding points to a network
/// leaves the draws of existing points unchanged.
#[derive(Debug, Clone, Copy)]
pub struct CrnMasks {
    pub seed: u64,
}

impl CrnMasks {
    pub fn uniforms(&self, net: &ChargeNetwork, mask_index: u64) -> Vec<f64> {
        net.points()
            .iter()
            .map(|p| keyed_uniform(self.seed, &[mask_index, hash_str(&p.id)]))
            .collect()
    }

    pub fn mask(&self, net: &ChargeNetwork, mask_index: u64, p_f: f64) -> FaultMask {
        FaultMask {
            faulty: self.uniforms(net, mask_index).into_iter().map(|u| u < p_f).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ReplayStatus {
    CompletedAsPlanned,
    Rerouted { extra_time_h: f64 },
    Stranded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayOutcome {
    pub status: ReplayStatus,
    pub first_faulty_cp: Option<CpIdx>,
}

/// Replays a committed plan against a fault mask. The EV drives to its
/// first faulty stop, then searches again from there with the charge it
/// has left, allowed to run the battery flat on the first leg and to use
/// only operational points. Waits respect the other EVs' bookings in
/// `ledger`; the rerouted EV's own bookings are ignored.
pub fn replay_trip(
    plan: &RoutePlan,
    mask: &FaultMask,
    net: &ChargeNetwork,
    ledger: &ReservationLedger,
    cfg: &RouterConfig,
) -> ReplayOutcome {
    let Some(stop) = plan.stops.iter().find(|s| mask.is_faulty(s.cp)) else {
        return ReplayOutcome {
            status: ReplayStatus::CompletedAsPlanned,
            first_faulty_cp: None,
        };
    };
    let reroute_cfg = RouterConfig {
        mode: RoutingMode::ReservationAware,
        ..*cfg
    };
    let start = SearchStart {
        location: net.point(stop.cp).location,
        time_h: stop.arrival_h,
        soc: stop.soc_in,
        emergency: true,
    };
    let destination = plan.legs.last().expect("plans have a final leg").to;
    let status = match Router::new(net, &reroute_cfg).plan_from(plan.ev_id, &start, destination, ledger, Some(mask.as_slice())) {
        Ok(p) => ReplayStatus::Rerouted {
            extra_time_h: (p.arrival_h - plan.arrival_h).max(0.0),
        },
        Err(_) => ReplayStatus::Stranded,
    };
    ReplayOutcome {
        status,
        first_faulty_cp: Some(stop.cp),
    }
}

/// First-order stranding estimate: only faults at isolated points strand.
pub fn estimate_ps_first_order(p_c: f64, p_f: f64, n_isolated: usize, n_total: usize) -> f64 {
    assert!(n_total > 0, "network must have points");
    p_c * p_f * n_isolated as f64 / n_total as f64
}

/// A fault-free committed pass that fault sweeps replay against.
#[derive(Debug, Clone)]
pub struct CommittedRoutes {
    pub trips: u64,
    pub needed_charge: u64,
    pub unroutable: u64,
    /// Realized plans of routed trips that stop at least once.
    pub plans: Vec<RoutePlan>,
    pub ledger: ReservationLedger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSweepRow {
    pub p_f: f64,
    pub trips: u64,
    pub needed_charge: u64,
    /// Stranded replays summed over all masks.
    pub stranded: u64,
    pub rerouted: u64,
    pub unroutable: u64,
    pub masks: u64,
    pub p_s: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Standard error of `p_s` from the spread across masks.
    pub p_s_stderr: f64,
}

impl FaultSweepRow {
    pub fn unroutable_fraction(&self) -> f64 {
        self.unroutable as f64 / self.trips as f64
    }
}

pub struct FaultSweep<'a> {
    pub net: &'a ChargeNetwork,
    pub router: &'a RouterConfig,
    pub masks: u64,
    pub seed: u64,
}

impl FaultSweep<'_> {
    /// Per-mask (stranded, rerouted) counts at `p_f` over a committed pass.
    fn mask_counts(&self, run: &CommittedRoutes, p_f: f64) -> Vec<(u64, u64)> {
        let crn = CrnMasks { seed: self.seed };
        (0..self.masks)
            .into_par_iter()
            .map(|m| {
                let mask = crn.mask(self.net, m, p_f);
                let mut stranded = 0;
                let mut rerouted = 0;
                if mask.count() == 0 {
                    return (0, 0);
                }
                for plan in &run.plans {
                    match replay_trip(plan, &mask, self.net, &run.ledger, self.router).status {
                        ReplayStatus::CompletedAsPlanned => {}
                        ReplayStatus::Rerouted { .. } => rerouted += 1,
                        ReplayStatus::Stranded => stranded += 1,
                    }
                }
                (stranded, rerouted)
            })
            .collect()
    }

    /// Sweeps the fault grid over one or more independent committed passes
    /// (replicates); counts are pooled.
    pub fn run(&self, runs: &[CommittedRoutes], p_f_grid: &[f64]) -> Vec<FaultSweepRow> {
        let trips: u64 = runs.iter().map(|r| r.trips).sum();
        let needed_charge = runs.iter().map(|r| r.needed_charge).sum();
        let unroutable = runs.iter().map(|r| r.unroutable).sum();
        p_f_grid
            .iter()
            .map(|&p_f| {
                let mut stranded = 0;
                let mut rerouted = 0;
                // per-mask p_s, pooling replicates that share a mask index
                let mut per_mask = vec![0u64; self.masks as usize];
                for run in runs {
                    for (m, (s, r)) in self.mask_counts(run, p_f).into_iter().enumerate() {
                        stranded += s;
                        rerouted += r;
                        per_mask[m] += s;
                    }
                }
                let replays = trips * self.masks;
                let p_s = if replays == 0 { 0.0 } else { stranded as f64 / replays as f64 };
                let (ci_low, ci_high) = wilson_interval(stranded, replays, Z95);
                let samples: Vec<f64> = per_mask.iter().map(|&s| s as f64 / trips.max(1) as f64).collect();
                let (_, p_s_stderr) = mean_and_stderr(&samples);
                FaultSweepRow {
                    p_f,
                    trips,
                    needed_charge,
                    stranded,
                    rerouted,
                    unroutable,
                    masks: self.masks,
                    p_s,
                    ci_low,
                    ci_high,
                    p_s_stderr,
                }
            })
            .collect()
    }
}

pub fn write_sweep_csv(rows: &[FaultSweepRow], writer: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["p_f", "trips", "needed_charge", "stranded", "unroutable", "p_s", "ci_low", "ci_high"])?;
    for r in rows {
        w.write_record([
            r.p_f.to_string(),
            r.trips.to_string(),
            r.needed_charge.to_string(),
            r.stranded.to_string(),
            r.unroutable.to_string(),
            format!("{:e}", r.p_s),
            format!("{:e}", r.ci_low),
            format!("{:e}", r.ci_high),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn first_order_estimate() {
        let v = estimate_ps_first_order(0.02, 0.1, 3, 708);
        assert!((v - 8.47e-6).abs() < 1e-8, "{v}");
        assert_eq!(estimate_ps_first_order(0.02, 0.0, 3, 708), 0.0);
        assert_eq!(estimate_ps_first_order(0.02, 0.1, 0, 708), 0.0);
    }

    #[test]
    fn fault_config_validates() {
        assert!(FaultConfig::new(1.5, 0).is_err());
        assert!(FaultConfig::new(0.07, 0).is_ok());
    }

    fn net(n: usize) -> ChargeNetwork {
        use crate::geo::GeoPoint;
        use crate::network::{ChargeKind, ChargePoint};
        let o = GeoPoint::new(53.0, -8.0).unwrap();
        ChargeNetwork::new(
            (0..n)
                .map(|i| ChargePoint::new(format!("cp{i:03}"), o.offset_km(i as f64, 0.0), ChargeKind::Ac, 22.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn mask_extremes_and_binomial_count() {
        let net = net(708);
        let mut rng = stream(9, &[]);
        assert_eq!(sample_fault_mask(&net, 0.0, &mut rng).count(), 0);
        assert_eq!(sample_fault_mask(&net, 1.0, &mut rng).count(), 708);
        let sigma = (708.0f64 * 0.25).sqrt();
        for _ in 0..200 {
            let c = sample_fault_mask(&net, 0.5, &mut rng).count() as f64;
            assert!((c - 354.0).abs() <= 4.0 * sigma, "{c}");
        }
    }

    #[test]
    fn crn_masks_are_nested_and_stable_under_augmentation() {
        let base = net(50);
        let crn = CrnMasks { seed: 4 };
        for m in 0..20 {
            let small = crn.mask(&base, m, 0.05);
            let big = crn.mask(&base, m, 0.3);
            assert!(small.as_slice().iter().zip(big.as_slice()).all(|(s, b)| !s || *b));
        }
        let bigger = base.add_colocated_redundancy(&["cp007"]).unwrap();
        let u0 = crn.uniforms(&base, 3);
        let u1 = crn.uniforms(&bigger, 3);
        for p in base.points() {
            let i = base.lookup(&p.id).unwrap().get();
            let j = bigger.lookup(&p.id).unwrap().get();
            assert_eq!(u0[i], u1[j]);
        }
    }
}
