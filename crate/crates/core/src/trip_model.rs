//! Empirical trip-length distribution `p(y) = a·y·exp(−b·y^c)` (y in km),
//! renormalized on a truncated support and sampled by inverse CDF.

use rand::distr::{Distribution, Open01};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;
use crate::quad::integrate;

pub const QUAD_REL_TOL: f64 = 1e-9;
const KNOTS: usize = 4096;
const FIRST_KNOT_KM: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TripModelError {
    #[error("trip length must be non-negative, got {0}")]
    NegativeLength(f64),
    #[error("invalid distribution parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripLengthParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub upper_km: f64,
}

impl Default for TripLengthParams {
    fn default() -> Self {
        Self {
            a: 1.2059,
            b: 2.7733,
            c: 0.33,
            upper_km: 2000.0,
        }
    }
}

impl TripLengthParams {
    /// The density exactly as fitted, without renormalization.
    pub fn raw_pdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        self.a * y * (-self.b * y.powf(self.c)).exp()
    }
}

/// One trip: an EV going from `origin` to `destination`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripRequest {
    pub ev_id: u32,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    /// The sampled trip length; the straight-line distance between the
    /// endpoints differs from it by ring width and cell jitter.
    pub trip_km: f64,
    pub depart_time: f64,
}

#[derive(Debug, Clone)]
pub struct TripLengthDistribution {
    params: TripLengthParams,
    z: f64,
    mean: f64,
    knots: Vec<f64>,
    cdf: Vec<f64>,
}

impl TripLengthDistribution {
    pub fn new(params: TripLengthParams) -> Result<Self, TripModelError> {
        let TripLengthParams { a, b, c, upper_km } = params;
        if !(a > 0.0 && b > 0.0 && c > 0.0 && upper_km > FIRST_KNOT_KM) {
            return Err(TripModelError::Params(format!("{params:?}")));
        }
        let f = |y: f64| params.raw_pdf(y);

        let mut knots = Vec::with_capacity(KNOTS + 1);
        knots.push(0.0);
        let (lo, hi) = (FIRST_KNOT_KM.ln(), upper_km.ln());
        for i in 0..KNOTS {
            let t = i as f64 / (KNOTS - 1) as f64;
            knots.push((lo + t * (hi - lo)).exp());
        }
        *knots.last_mut().unwrap() = upper_km;

        let mut cdf = Vec::with_capacity(knots.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in knots.windows(2) {
            acc += integrate(f, w[0], w[1], 1e-12, 0.0);
            cdf.push(acc);
        }
        let z = acc;
        if !(z > 0.0 && z.is_finite()) {
            return Err(TripModelError::Params(format!("normalization {z}")));
        }
        for v in &mut cdf {
            *v /= z;
        }
        let mean = integrate(|y| y * f(y), 0.0, upper_km, QUAD_REL_TOL * 1e-3, 0.0) / z;
        Ok(Self {
            params,
            z,
            mean,
            knots,
            cdf,
        })
    }

    pub fn params(&self) -> &TripLengthParams {
        &self.params
    }

    /// Mass of the raw density on the truncated support.
    pub fn normalization(&self) -> f64 {
        self.z
    }

    pub fn mean_km(&self) -> f64 {
        self.mean
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn pdf(&self, y: f64) -> Result<f64, TripModelError> {
        if y < 0.0 || y.is_nan() {
            return Err(TripModelError::NegativeLength(y));
        }
        if y > self.params.upper_km {
            return Ok(0.0);
        }
        Ok(self.params.raw_pdf(y) / self.z)
    }

    /// `P(Y <= y)`, integrated from the nearest tabulated knot.
    pub fn cdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        if y >= self.params.upper_km {
            return 1.0;
        }
        let k = self.knots.partition_point(|&x| x <= y) - 1;
        let extra = integrate(|t| self.params.raw_pdf(t), self.knots[k], y, 1e-12, 0.0) / self.z;
        (self.cdf[k] + extra).min(1.0)
    }

    /// `P(Y > y0)`.
    pub fn tail_probability(&self, y0: f64) -> f64 {
        if y0 <= 0.0 {
            return 1.0;
        }
        if y0 >= self.params.upper_km {
            return 0.0;
        }
        integrate(|t| self.params.raw_pdf(t), y0, self.params.upper_km, QUAD_REL_TOL * 1e-3, 0.0) / self.z
    }

    /// Inverse CDF by linear interpolation on the knot table.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let k = self.cdf.partition_point(|&x| x < u);
        if k == 0 {
            return 0.0;
        }
        if k >= self.cdf.len() {
            return self.params.upper_km;
        }
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let (y0, y1) = (self.knots[k - 1], self.knots[k]);
        if c1 <= c0 {
            return y1;
        }
        y0 + (u - c0) / (c1 - c0) * (y1 - y0)
    }

    pub fn sample_trip_km<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = Open01.sample(rng);
        self.quantile(u)
    }
}

impl Distribution<f64> for TripLengthDistribution {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_trip_km(rng)
    }
}
