mod oracles;

use chargesim_core::rng::stream;
use chargesim_core::{Booking, CpIdx, ReservationLedger};
use oracles::minute_scan_earliest;
use rand::Rng;

#[test]
fn earliest_slot_matches_minute_scan() {
    for case in 0..1000 {
        let mut rng = stream(0x1ed, &[case]);
        let mut ledger = ReservationLedger::new();
        let mut minutes = Vec::new();
        for _ in 0..rng.random_range(0..12) {
            let s: u32 = rng.random_range(0..600);
            let e = s + rng.random_range(1..90);
            let b = Booking {
                cp: CpIdx(0),
                ev_id: 1,
                start: s as f64 / 60.0,
                end: e as f64 / 60.0,
            };
            if ledger.commit(b).is_ok() {
                minutes.push((s, e));
            }
        }
        for _ in 0..10 {
            let nb = rng.random_range(0..700);
            let dur = rng.random_range(1..120);
            let got = ledger.earliest_slot(CpIdx(0), nb as f64 / 60.0, dur as f64 / 60.0);
            let want = minute_scan_earliest(&minutes, nb, dur);
            assert!((got - want).abs() < 1e-9, "case {case}: {got} vs {want}");
        }
    }
}

#[test]
fn random_commit_release_keeps_ledger_disjoint() {
    let mut rng = stream(0x5eed, &[]);
    let mut ledger = ReservationLedger::new();
    let mut accepted = 0;
    for _ in 0..100_000 {
        if rng.random_bool(0.7) {
            let cp = CpIdx(rng.random_range(0..8));
            let ev_id = rng.random_range(0..200);
            let dur = rng.random_range(0.05..1.0);
            let start = if rng.random_bool(0.5) {
                ledger.earliest_slot(cp, rng.random_range(0.0..48.0), dur)
            } else {
                rng.random_range(0.0..48.0)
            };
            accepted += ledger
                .commit(Booking {
                    cp,
                    ev_id,
                    start,
                    end: start + dur,
                })
                .is_ok() as usize;
        } else {
            ledger.release_route(rng.random_range(0..200));
        }
    }
    assert!(ledger.is_consistent());
    assert!(accepted > 30_000);
    // brute-force pairwise check per point
    for cp in 0..8 {
        let b = ledger.bookings(CpIdx(cp));
        for (i, x) in b.iter().enumerate() {
            for y in &b[i + 1..] {
                assert!(x.end <= y.start || y.end <= x.start);
            }
        }
    }
}
