//! Closed-form checks of the vehicle arithmetic, cost model and trip length
//! distribution, printed as reference-versus-computed tables.

use chargesim_core::quad::integrate;
use chargesim_core::{ChargeKind, EvParams, InfraCostModel, TripLengthDistribution, TripLengthParams};
use statrs::function::gamma::{gamma_lr, ln_gamma};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// Outside tolerance of a reference figure known to be inconsistent
    /// with the model; reported, not failed.
    Known,
}

#[derive(Debug, Clone)]
pub struct Check {
    pub group: &'static str,
    pub name: String,
    pub reference: f64,
    pub computed: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

fn check(group: &'static str, name: impl Into<String>, reference: f64, computed: f64, tolerance: f64) -> Check {
    let verdict = if (computed - reference).abs() <= tolerance {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Check {
        group,
        name: name.into(),
        reference,
        computed,
        tolerance,
        verdict,
    }
}

fn known(mut c: Check) -> Check {
    if c.verdict == Verdict::Fail {
        c.verdict = Verdict::Known;
    }
    c
}

pub fn ev_math() -> Vec<Check> {
    let ev = EvParams::default();
    let g = "ev-math";
    let dc = ev.effective_power_kw(ChargeKind::Dc, 50.0);
    let minutes = ev.charge_duration_h(ev.reserve_soc, ev.charge_target_soc, dc).map_or(f64::NAN, |h| h * 60.0);
    vec![
        check(g, "charge 0.2->0.8 at 45 kW [min]", 19.2, minutes, 1e-9),
        check(g, "effective speed at 45 kW [kph]", 62.7, ev.effective_speed_kph(45.0).unwrap_or(f64::NAN), 0.05),
        check(g, "effective speed at 22 kW [kph]", 47.6, ev.effective_speed_kph(22.0).unwrap_or(f64::NAN), 0.05),
        check(g, "leg 0.8->0.2 [km]", 56.1, ev.max_leg_km(0.8, 0.2).unwrap_or(f64::NAN), 0.01),
        check(g, "first leg 1.0->0.2 [km]", 74.8, ev.max_leg_km(1.0, 0.2).unwrap_or(f64::NAN), 0.01),
    ]
}

pub fn cost() -> Vec<Check> {
    let m = InfraCostModel::default();
    let g = "cost";
    let c = |dc, ac, users| m.cost_per_user_counts(dc, ac, users).unwrap_or(f64::NAN);
    vec![
        check(g, "72 DC + 636 AC, 36000 users [EUR/yr]", 34.0, c(72, 636, 36_000), 0.1),
        check(g, "708 DC, 36000 users [EUR/yr]", 165.2, c(708, 0, 36_000), 0.1),
        check(g, "72 DC + 636 AC, 3600 users [EUR/yr]", 340.3, c(72, 636, 3_600), 0.5),
    ]
}

/// Closed forms via the regularized lower incomplete gamma function,
/// after substituting `t = b y^c`.
fn closed_cdf(p: &TripLengthParams, y: f64) -> f64 {
    let s = 2.0 / p.c;
    gamma_lr(s, p.b * y.powf(p.c)) / gamma_lr(s, p.b * p.upper_km.powf(p.c))
}

fn closed_mean(p: &TripLengthParams) -> f64 {
    let (s2, s3) = (2.0 / p.c, 3.0 / p.c);
    let x = p.b * p.upper_km.powf(p.c);
    p.b.powf(-1.0 / p.c) * (ln_gamma(s3) - ln_gamma(s2)).exp() * gamma_lr(s3, x) / gamma_lr(s2, x)
}

fn closed_norm(p: &TripLengthParams) -> f64 {
    let s = 2.0 / p.c;
    p.a / p.c * p.b.powf(-s) * ln_gamma(s).exp() * gamma_lr(s, p.b * p.upper_km.powf(p.c))
}

pub fn dist() -> Vec<Check> {
    let p = TripLengthParams::default();
    let g = "dist";
    let d = match TripLengthDistribution::new(p) {
        Ok(d) => d,
        Err(e) => {
            log::error!("trip distribution: {e}");
            return vec![check(g, "distribution builds", 1.0, 0.0, 0.0)];
        }
    };
    let mass: f64 = d
        .knots()
        .windows(2)
        .map(|w| integrate(|y| d.pdf(y).unwrap_or(f64::NAN), w[0], w[1], 1e-12, 0.0))
        .sum();
    let tail = |y: f64| 1.0 - closed_cdf(&p, y);
    let untruncated_beyond = {
        let s = 2.0 / p.c;
        1.0 - gamma_lr(s, p.b * p.upper_km.powf(p.c))
    };
    vec![
        check(g, "renormalized density integrates to", 1.0, mass, 1e-6),
        check(g, "normalization vs closed form (ratio)", 1.0, d.normalization() / closed_norm(&p), 1e-6),
        check(g, "mean [km] vs closed form", closed_mean(&p), d.mean_km(), 1e-6 * closed_mean(&p)),
        check(g, "mean [km] vs reference", 16.7, d.mean_km(), 0.05),
        check(g, "P(trip > 74.8 km) vs closed form", tail(74.8), d.tail_probability(74.8), 1e-8),
        check(g, "P(trip > 56.1 km) vs closed form", tail(56.1), d.tail_probability(56.1), 1e-8),
        known(check(g, "P(trip > 161 km) vs reference", 0.01, d.tail_probability(161.0), 0.001)),
        check(g, "untruncated mass beyond upper cutoff", 0.0, untruncated_beyond, 1e-9),
    ]
}

pub fn print(checks: &[Check]) {
    println!("{:<8} {:<42} {:>14} {:>14} {:>10}  result", "group", "check", "reference", "computed", "tol");
    for c in checks {
        let v = match c.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Known => "KNOWN DISCREPANCY",
        };
        println!(
            "{:<8} {:<42} {:>14.6} {:>14.6} {:>10.1e}  {v}",
            c.group, c.name, c.reference, c.computed, c.tolerance
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_groups_pass() {
        for c in ev_math().into_iter().chain(cost()).chain(dist()) {
            assert_ne!(c.verdict, Verdict::Fail, "{c:?}");
        }
    }

    #[test]
    fn long_tail_is_flagged() {
        let d = dist();
        let c = d.iter().find(|c| c.name.contains("161")).unwrap();
        assert_eq!(c.verdict, Verdict::Known);
        assert!((c.computed - 0.0033).abs() < 3e-4, "{}", c.computed);
    }
}
