//! Per-charge-point booking of half-open time intervals `[start, end)`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{ChargeNetwork, CpIdx};

pub type EvId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Booking {
    pub cp: CpIdx,
    pub ev_id: EvId,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LedgerError {
    #[error("booking [{start}, {end}) is empty or inverted")]
    Empty { start: f64, end: f64 },
    #[error("booking for EV {ev_id} at cp {cp:?} [{start}, {end}) overlaps EV {other} [{other_start}, {other_end})")]
    Conflict {
        cp: CpIdx,
        ev_id: EvId,
        start: f64,
        end: f64,
        other: EvId,
        other_start: f64,
        other_end: f64,
    },
}

#[derive(Debug, Clone, Default)]
pub struct ReservationLedger {
    slots: BTreeMap<CpIdx, Vec<Booking>>,
}

impl ReservationLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bookings(&self, cp: CpIdx) -> &[Booking] {
        self.slots.get(&cp).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Booking> {
        self.slots.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.slots.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.values().all(Vec::is_empty)
    }

    /// Smallest `s >= not_before` such that `[s, s + duration)` is free.
    pub fn earliest_slot(&self, cp: CpIdx, not_before: f64, duration: f64) -> f64 {
        self.earliest_slot_ignoring(cp, not_before, duration, None)
    }

    /// As [`earliest_slot`](Self::earliest_slot), treating bookings of
    /// `ignore` as free.
    pub fn earliest_slot_ignoring(&self, cp: CpIdx, not_before: f64, duration: f64, ignore: Option<EvId>) -> f64 {
        let list = self.bookings(cp);
        // bookings are disjoint and sorted by start, hence also by end
        let first = list.partition_point(|b| b.end <= not_before);
        let mut s = not_before;
        for b in &list[first..] {
            if Some(b.ev_id) == ignore {
                continue;
            }
            if s + duration <= b.start {
                break;
            }
            if b.end > s {
                s = b.end;
            }
        }
        s
    }

    pub fn commit(&mut self, booking: Booking) -> Result<(), LedgerError> {
        if !(booking.end > booking.start) {
            return Err(LedgerError::Empty {
                start: booking.start,
                end: booking.end,
            });
        }
        let list = self.slots.entry(booking.cp).or_default();
        let pos = list.partition_point(|b| b.start < booking.start);
        let clash = [pos.checked_sub(1), Some(pos)]
            .into_iter()
            .flatten()
            .filter_map(|i| list.get(i))
            .find(|b| b.start < booking.end && booking.start < b.end);
        if let Some(b) = clash {
            return Err(LedgerError::Conflict {
                cp: booking.cp,
                ev_id: booking.ev_id,
                start: booking.start,
                end: booking.end,
                other: b.ev_id,
                other_start: b.start,
                other_end: b.end,
            });
        }
        list.insert(pos, booking);
        Ok(())
    }

    /// Removes every booking held by `ev_id`.
    pub fn release_route(&mut self, ev_id: EvId) {
        for list in self.slots.values_mut() {
            list.retain(|b| b.ev_id != ev_id);
        }
        self.slots.retain(|_, l| !l.is_empty());
    }

    /// Checks sortedness and pairwise disjointness of every sequence.
    pub fn is_consistent(&self) -> bool {
        self.slots.iter().all(|(cp, l)| {
            l.iter().all(|b| b.cp == *cp && b.end > b.start)
                && l.windows(2).all(|w| w[0].end <= w[1].start)
        })
    }

    /// Diagnostic dump: `cp_id,ev_id,start_h,end_h`.
    pub fn write_csv(&self, net: &ChargeNetwork, writer: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["cp_id", "ev_id", "start_h", "end_h"])?;
        for b in self.iter() {
            w.write_record([
                net.point(b.cp).id.clone(),
                b.ev_id.to_string(),
                b.start.to_string(),
                b.end.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CP: CpIdx = CpIdx(0);

    fn booking(ev_id: EvId, start: f64, end: f64) -> Booking {
        Booking {
            cp: CP,
            ev_id,
            start,
            end,
        }
    }

    fn ledger(items: &[(EvId, f64, f64)]) -> ReservationLedger {
        let mut l = ReservationLedger::new();
        for &(e, s, t) in items {
            l.commit(booking(e, s, t)).unwrap();
        }
        l
    }

    #[test]
    fn earliest_slot_examples() {
        assert_eq!(ReservationLedger::new().earliest_slot(CP, 0.7, 0.32), 0.7);
        let l = ledger(&[(1, 1.0, 1.5)]);
        assert_eq!(l.earliest_slot(CP, 1.0, 0.32), 1.5);
        let l = ledger(&[(1, 0.0, 1.0), (2, 1.4, 2.0)]);
        assert_eq!(l.earliest_slot(CP, 0.9, 0.32), 1.0);
        assert_eq!(l.earliest_slot(CP, 0.9, 0.5), 2.0);
        assert_eq!(l.earliest_slot_ignoring(CP, 0.9, 0.5, Some(2)), 1.0);
        assert_eq!(l.earliest_slot(CpIdx(9), 0.9, 0.5), 0.9);
    }

    #[test]
    fn commit_examples() {
        let mut l = ReservationLedger::new();
        l.commit(booking(1, 1.0, 1.5)).unwrap();
        assert_eq!(l.len(), 1);
        l.commit(booking(2, 1.5, 1.82)).unwrap();
        assert_eq!(l.len(), 2);
        let err = l.commit(booking(3, 1.2, 1.6)).unwrap_err();
        assert!(matches!(err, LedgerError::Conflict { other: 1, .. }), "{err:?}");
        assert!(l.commit(booking(3, 0.5, 0.5)).is_err());
        l.commit(booking(4, 0.0, 1.0)).unwrap();
        assert!(l.is_consistent());
    }

    #[test]
    fn release_examples() {
        let mut l = ledger(&[(1, 0.0, 1.0), (1, 2.0, 3.0)]);
        l.release_route(1);
        assert!(l.is_empty());
        let mut l = ledger(&[(1, 0.0, 1.0), (2, 1.0, 2.0)]);
        l.release_route(1);
        assert_eq!(l.bookings(CP), &[booking(2, 1.0, 2.0)]);
        l.release_route(77);
        assert_eq!(l.len(), 1);
    }
}
