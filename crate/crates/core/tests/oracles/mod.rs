//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the code under test except
//! for plain data accessors and the ledger lookups the router itself is
//! specified to use.

#![allow(dead_code)]

use chargesim_core::{
    distance_km, ChargeKind, ChargeNetwork, CpIdx, EvId, GeoPoint, ReservationLedger, RouterConfig, RoutingMode,
};
use statrs::function::gamma::{gamma_lr, ln_gamma};

/// Closed-form truncated CDF of `y * exp(-b * y^c)` on `[0, upper]`.
///
/// Substituting `t = b y^c` turns the integral into a lower incomplete
/// gamma function of shape `2/c`.
pub fn trip_cdf(b: f64, c: f64, upper: f64, y: f64) -> f64 {
    let y = y.clamp(0.0, upper);
    gamma_lr(2.0 / c, b * y.powf(c)) / gamma_lr(2.0 / c, b * upper.powf(c))
}

pub fn trip_tail(b: f64, c: f64, upper: f64, y: f64) -> f64 {
    1.0 - trip_cdf(b, c, upper, y)
}

/// Mean of the truncated distribution: a ratio of gamma functions of shape
/// `3/c` and `2/c`.
pub fn trip_mean(b: f64, c: f64, upper: f64) -> f64 {
    let (s2, s3) = (2.0 / c, 3.0 / c);
    let x = b * upper.powf(c);
    b.powf(-1.0 / c) * (ln_gamma(s3) - ln_gamma(s2)).exp() * gamma_lr(s3, x) / gamma_lr(s2, x)
}

/// Normalizing constant `Z = a * integral of y exp(-b y^c)` over `[0, upper]`.
pub fn trip_norm(a: f64, b: f64, c: f64, upper: f64) -> f64 {
    let s2 = 2.0 / c;
    a / c * b.powf(-s2) * ln_gamma(s2).exp() * gamma_lr(s2, b * upper.powf(c))
}

/// Two-sided Kolmogorov-Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at significance 0.01.
pub fn ks_critical_001(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

/// Earliest free start by stepping one minute at a time. Bookings and
/// queries are whole minutes; the overlap test runs on the same hour values
/// the ledger sees, so rounding in `start + duration` is treated alike.
pub fn minute_scan_earliest(bookings: &[(u32, u32)], not_before_min: u32, duration_min: u32) -> f64 {
    let h = |m: u32| m as f64 / 60.0;
    let dur = h(duration_min);
    let mut m = not_before_min;
    loop {
        let s = h(m);
        if bookings.iter().all(|&(b0, b1)| s + dur <= h(b0) || h(b1) <= s) {
            return s;
        }
        m += 1;
    }
}

/// Best arrival time over every ordered sequence of distinct charge points,
/// applying the same feasibility rules as the router: legs within the
/// charge above the reserve, stops only below the charge target, charge to
/// the target, and waits from the ledger (ignoring `ev_id`'s own bookings)
/// in reservation-aware mode.
pub fn brute_force_arrival(
    net: &ChargeNetwork,
    cfg: &RouterConfig,
    ev_id: EvId,
    origin: GeoPoint,
    depart_h: f64,
    destination: GeoPoint,
    ledger: &ReservationLedger,
) -> Option<f64> {
    struct Ctx<'a> {
        net: &'a ChargeNetwork,
        cfg: &'a RouterConfig,
        ev_id: EvId,
        destination: GeoPoint,
        ledger: &'a ReservationLedger,
        range: f64,
        best: Option<f64>,
    }

    fn consider(ctx: &mut Ctx, t: f64) {
        if ctx.best.is_none_or(|b| t < b) {
            ctx.best = Some(t);
        }
    }

    fn extend(ctx: &mut Ctx, at: GeoPoint, time: f64, soc: f64, used: &mut Vec<bool>) {
        let ev = ctx.cfg.ev;
        for q in 0..ctx.net.len() {
            if used[q] {
                continue;
            }
            let p = ctx.net.point(CpIdx(q as u32));
            if !p.operational {
                continue;
            }
            let d = distance_km(at, p.location);
            if d > (soc - ev.reserve_soc) * ctx.range {
                continue;
            }
            let soc_in = soc - d / ctx.range;
            if soc_in >= ev.charge_target_soc {
                continue;
            }
            let arrival = time + d / ev.speed_kph;
            let power = p.power_kw.min(match p.kind {
                ChargeKind::Dc => ev.dc_charge_kw,
                ChargeKind::Ac => ev.onboard_ac_limit_kw,
            });
            let dur = (ev.charge_target_soc - soc_in) * ev.battery_kwh / power;
            let start = match ctx.cfg.mode {
                RoutingMode::ReservationAware => {
                    ctx.ledger.earliest_slot_ignoring(CpIdx(q as u32), arrival, dur, Some(ctx.ev_id))
                }
                RoutingMode::ReservationBlind => arrival,
            };
            let dep = start + dur;
            let dd = distance_km(p.location, ctx.destination);
            if dd <= (ev.charge_target_soc - ev.destination_reserve()) * ctx.range {
                consider(ctx, dep + dd / ev.speed_kph);
            }
            used[q] = true;
            extend(ctx, p.location, dep, ev.charge_target_soc, used);
            used[q] = false;
        }
    }

    let ev = cfg.ev;
    let range = ev.max_range_km * ev.route_scale;
    let mut ctx = Ctx {
        net,
        cfg,
        ev_id,
        destination,
        ledger,
        range,
        best: None,
    };
    let direct = distance_km(origin, destination);
    if direct <= (ev.start_soc - ev.destination_reserve()) * range {
        consider(&mut ctx, depart_h + direct / ev.speed_kph);
    }
    let mut used = vec![false; net.len()];
    extend(&mut ctx, origin, depart_h, ev.start_soc, &mut used);
    ctx.best
}

/// A random routing instance: up to `max_points` charge points scattered
/// along a corridor, a destination beyond them and a partly booked ledger.
pub struct RouterInstance {
    pub net: ChargeNetwork,
    pub cfg: RouterConfig,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    pub depart_h: f64,
    pub ledger: ReservationLedger,
}

pub const INSTANCE_EV: EvId = 0;

pub fn random_router_instance(rng: &mut impl rand::Rng, max_points: usize) -> RouterInstance {
    use chargesim_core::{Booking, ChargePoint, EvParams};
    let origin = GeoPoint::new(53.0, -8.0).unwrap();
    let n = rng.random_range(1..=max_points);
    let points = (0..n)
        .map(|i| {
            let kind = if rng.random_bool(0.4) { ChargeKind::Dc } else { ChargeKind::Ac };
            let power = [11.0, 22.0, 50.0][rng.random_range(0..3)];
            let at = origin.offset_km(rng.random_range(-25.0..25.0), rng.random_range(0.0..160.0));
            ChargePoint::new(format!("p{i}"), at, kind, power)
        })
        .collect();
    let net = ChargeNetwork::new(points).unwrap();
    let mut ledger = ReservationLedger::new();
    for cp in net.indices() {
        for _ in 0..rng.random_range(0..5) {
            let start = rng.random_range(0.0..3.0);
            let _ = ledger.commit(Booking {
                cp,
                ev_id: rng.random_range(0..4),
                start,
                end: start + rng.random_range(0.1..1.0),
            });
        }
    }
    let ev = EvParams {
        reserve_soc: [0.2, 0.28][rng.random_range(0..2)],
        onboard_ac_limit_kw: [6.6, 22.0][rng.random_range(0..2)],
        ..EvParams::default()
    };
    let mode = if rng.random_bool(0.5) {
        RoutingMode::ReservationAware
    } else {
        RoutingMode::ReservationBlind
    };
    RouterInstance {
        net,
        cfg: RouterConfig {
            mode,
            ev,
            ..RouterConfig::default()
        },
        origin,
        destination: origin.offset_km(rng.random_range(-30.0..30.0), rng.random_range(60.0..200.0)),
        depart_h: rng.random_range(0.0..1.0),
        ledger,
    }
}
