mod oracles;

use chargesim_core::rng::stream;
use chargesim_core::*;
use oracles::{random_router_instance, INSTANCE_EV};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn planned_routes_are_feasible(seed in any::<u64>()) {
        let mut rng = stream(seed, &[]);
        let inst = random_router_instance(&mut rng, 8);
        let req = TripRequest {
            ev_id: INSTANCE_EV,
            origin: inst.origin,
            destination: inst.destination,
            trip_km: distance_km(inst.origin, inst.destination),
            depart_time: inst.depart_h,
        };
        let router = Router::new(&inst.net, &inst.cfg);
        let Ok(plan) = router.plan(&req, &inst.ledger) else { return Ok(()) };
        let ev = inst.cfg.ev;
        let mut t = plan.depart_h;
        let mut soc = ev.start_soc;
        prop_assert_eq!(plan.legs.len(), plan.stops.len() + 1);
        for (leg, stop) in plan.legs.iter().zip(&plan.stops) {
            prop_assert!((stop.arrival_h - (t + leg.drive_h)).abs() < 1e-9);
            prop_assert!(stop.wait_h >= 0.0);
            let soc_in = soc - ev.soc_for_km(leg.distance_km);
            prop_assert!((soc_in - stop.soc_in).abs() < 1e-12);
            prop_assert!(stop.soc_in >= ev.reserve_soc - 1e-12 && stop.soc_in < ev.charge_target_soc);
            let p = inst.net.point(stop.cp);
            let dur = ev.charge_duration_h(stop.soc_in, stop.soc_out, ev.effective_power_kw(p.kind, p.power_kw)).unwrap();
            prop_assert!((stop.charge_end_h - stop.charge_start_h - dur).abs() < 1e-9);
            t = stop.charge_end_h;
            soc = stop.soc_out;
        }
        let last = plan.legs.last().unwrap();
        prop_assert!(soc - ev.soc_for_km(last.distance_km) >= ev.destination_reserve() - 1e-12);
        prop_assert!((plan.arrival_h - (t + last.drive_h)).abs() < 1e-9);
        prop_assert!(plan.average_speed_kph() <= ev.speed_kph + 1e-9);

        // committing the plan never conflicts and, when aware, books exactly its windows
        let mut ledger = inst.ledger.clone();
        ledger.release_route(INSTANCE_EV);
        let realized = router.commit(&plan, &mut ledger).unwrap();
        prop_assert!(ledger.is_consistent());
        prop_assert!(realized.arrival_h >= plan.arrival_h - 1e-12);
    }

    #[test]
    fn effective_speed_is_monotone_and_bounded(p1 in 1.0f64..200.0, p2 in 1.0f64..200.0) {
        let ev = EvParams::default();
        let (lo, hi) = if p1 < p2 { (p1, p2) } else { (p2, p1) };
        let (a, b) = (ev.effective_speed_kph(lo).unwrap(), ev.effective_speed_kph(hi).unwrap());
        prop_assert!(a <= b && b < ev.speed_kph);
    }

    #[test]
    fn crn_masks_nest(seed in any::<u64>(), m in 0u64..1000, p1 in 0.0f64..1.0, p2 in 0.0f64..1.0) {
        let f = fixtures::fault_fixture();
        let crn = CrnMasks { seed };
        let (lo, hi) = if p1 < p2 { (p1, p2) } else { (p2, p1) };
        let a = crn.mask(&f.net, m, lo);
        let b = crn.mask(&f.net, m, hi);
        prop_assert!(a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| !x || *y));
    }

    #[test]
    fn ledger_answers_are_free(seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = stream(seed, &[]);
        let mut ledger = ReservationLedger::new();
        for _ in 0..30 {
            let s = rng.random_range(0.0..10.0);
            let _ = ledger.commit(Booking { cp: CpIdx(0), ev_id: rng.random_range(0..5), start: s, end: s + rng.random_range(0.01..2.0) });
        }
        let nb = rng.random_range(0.0..12.0);
        let dur = rng.random_range(0.01..3.0);
        let s = ledger.earliest_slot(CpIdx(0), nb, dur);
        prop_assert!(s >= nb);
        let mut probe = ledger.clone();
        let fits = probe.commit(Booking { cp: CpIdx(0), ev_id: 99, start: s, end: s + dur }).is_ok();
        prop_assert!(fits);
    }
}
