//! Geographic primitives shared by the population, network and routing code.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in km (IUGG).
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Length of one degree of latitude on the sphere.
pub const KM_PER_DEGREE: f64 = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} is not finite")]
    Longitude(f64),
}

/// A point on the sphere in decimal degrees.
///
/// Longitude is normalized to `[-180, 180)` on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::Latitude(lat));
        }
        if !lon.is_finite() {
            return Err(GeoError::Longitude(lon));
        }
        Ok(Self {
            lat,
            lon: normalize_lon(lon),
        })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// Moves the point by a small local displacement (north/east, in km).
    ///
    /// The east step is scaled by the geometric mean of the cosines at the
    /// start and end latitude, which makes the haversine distance of the
    /// displaced point agree with `hypot(north, east)` to a relative 1e-8
    /// for displacements of a few km. Latitude is clamped at the poles.
    pub fn offset_km(&self, north_km: f64, east_km: f64) -> GeoPoint {
        let lat = (self.lat + north_km / KM_PER_DEGREE).clamp(-90.0, 90.0);
        let scale = (self.lat.to_radians().cos() * lat.to_radians().cos()).sqrt();
        let lon = if scale > 1e-12 {
            self.lon + east_km / (KM_PER_DEGREE * scale)
        } else {
            self.lon
        };
        GeoPoint {
            lat,
            lon: normalize_lon(lon),
        }
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}, {:.6})", self.lat, self.lon)
    }
}

fn normalize_lon(lon: f64) -> f64 {
    let l = (lon + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if l >= 180.0 {
        l - 360.0
    } else {
        l
    }
}

/// Great-circle (haversine) distance in km.
pub fn distance_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi * 0.5).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda * 0.5).sin().powi(2);
    let h = h.clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_KM * h.sqrt().atan2((1.0 - h).sqrt())
}

/// Default bucket edge in degrees.
pub const DEFAULT_BUCKET_DEG: f64 = 0.1;

/// Slack on bucket-level bounds so rounding never drops a point.
const BOUND_SLACK_RAD: f64 = 1e-7;

fn hav(theta: f64) -> f64 {
    (theta * 0.5).sin().powi(2)
}

/// Inverse of `hav` on `[0, 1]`.
fn ahav(h: f64) -> f64 {
    2.0 * h.clamp(0.0, 1.0).sqrt().asin()
}

/// Bucketed lat/lon index over a fixed set of points supporting exact
/// radius and annulus queries.
///
/// Buckets are visited row by row. For each latitude row the haversine
/// formula bounds the longitude span that can reach the outer radius and,
/// for annuli, the span that lies wholly inside the inner radius, so only
/// buckets that may hold matches are examined.
#[derive(Debug, Clone)]
pub struct GeoIndex {
    points: Vec<GeoPoint>,
    bucket_deg: f64,
    lon_buckets: i64,
    buckets: BTreeMap<(i32, i32), Vec<u32>>,
}

impl Default for GeoIndex {
    fn default() -> Self {
        Self::new(Vec::new())
    }
}

impl GeoIndex {
    pub fn new(points: Vec<GeoPoint>) -> Self {
        Self::with_bucket_deg(points, DEFAULT_BUCKET_DEG)
    }

    /// `bucket_deg` must divide 360 into a whole number of columns.
    pub fn with_bucket_deg(points: Vec<GeoPoint>, bucket_deg: f64) -> Self {
        let cols = 360.0 / bucket_deg;
        assert!(
            bucket_deg > 0.0 && (cols - cols.round()).abs() < 1e-6,
            "bucket size {bucket_deg} does not divide 360"
        );
        let mut idx = Self {
            points: Vec::new(),
            bucket_deg,
            lon_buckets: cols.round() as i64,
            buckets: BTreeMap::new(),
        };
        for (i, p) in points.iter().enumerate() {
            let key = (idx.lat_bucket(p.lat) as i32, idx.lon_bucket(p.lon) as i32);
            idx.buckets.entry(key).or_default().push(i as u32);
        }
        idx.points = points;
        idx
    }

    fn max_row(&self) -> i64 {
        (90.0 / self.bucket_deg).ceil() as i64 - 1
    }

    fn lat_bucket(&self, lat: f64) -> i64 {
        ((lat / self.bucket_deg).floor() as i64).clamp(-self.max_row() - 1, self.max_row())
    }

    fn lon_bucket(&self, lon: f64) -> i64 {
        ((lon / self.bucket_deg).floor() as i64).rem_euclid(self.lon_buckets)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> GeoPoint {
        self.points[i]
    }

    /// Calls `visit(index, distance)` for every point with
    /// `distance_km(center, p) <= r_km`.
    pub fn for_each_within(&self, center: GeoPoint, r_km: f64, visit: impl FnMut(usize, f64)) {
        self.for_each_in_ring(center, 0.0, r_km, visit);
    }

    /// Calls `visit(index, distance)` for every point with
    /// `inner_km <= distance_km(center, p) <= outer_km`, in bucket order.
    pub fn for_each_in_ring(&self, center: GeoPoint, inner_km: f64, outer_km: f64, mut visit: impl FnMut(usize, f64)) {
        if self.points.is_empty() || outer_km < 0.0 || outer_km < inner_km {
            return;
        }
        let mut check = |i: u32| {
            let d = distance_km(center, self.points[i as usize]);
            if d <= outer_km && d >= inner_km {
                visit(i as usize, d);
            }
        };
        let theta_out = outer_km / EARTH_RADIUS_KM;
        if theta_out >= std::f64::consts::PI {
            (0..self.points.len() as u32).for_each(check);
            return;
        }
        let theta_in = inner_km / EARTH_RADIUS_KM;
        let phi = center.lat.to_radians();
        let cos_phi = phi.cos();
        let h_out = hav(theta_out);
        let h_in = hav(theta_in);
        let b = self.bucket_deg;
        let dlat = outer_km / KM_PER_DEGREE + b;
        let rows = self.lat_bucket((center.lat - dlat).max(-90.0))..=self.lat_bucket((center.lat + dlat).min(90.0));
        for row in rows {
            let lo = (row as f64 * b).max(-90.0).to_radians();
            let hi = ((row + 1) as f64 * b).min(90.0).to_radians();
            let dphi_min = if phi < lo {
                lo - phi
            } else if phi > hi {
                phi - hi
            } else {
                0.0
            };
            let dphi_min = (dphi_min - BOUND_SLACK_RAD).max(0.0);
            if hav(dphi_min) > h_out {
                continue;
            }
            let cos_min = lo.cos().min(hi.cos()).max(0.0);
            let denom = cos_phi * cos_min;
            let x = if denom > 1e-15 { (h_out - hav(dphi_min)) / denom } else { 2.0 };
            if x >= 1.0 {
                // the whole row may be in range
                for (_, ids) in self.buckets.range((row as i32, i32::MIN)..=(row as i32, i32::MAX)) {
                    ids.iter().copied().for_each(&mut check);
                }
                continue;
            }
            let half_out = (ahav(x) + BOUND_SLACK_RAD).to_degrees();
            // columns strictly inside the inner radius can be skipped
            let half_in = if theta_in > 0.0 {
                let dphi_max = (phi - lo).abs().max((hi - phi).abs()) + BOUND_SLACK_RAD;
                let cos_max = if lo <= 0.0 && hi >= 0.0 { 1.0 } else { lo.cos().max(hi.cos()) };
                let y = (h_in - hav(dphi_max)) / (cos_phi * cos_max).max(1e-300);
                if y > 0.0 {
                    (ahav(y) - BOUND_SLACK_RAD).to_degrees()
                } else {
                    -1.0
                }
            } else {
                -1.0
            };
            let c0 = ((center.lon - half_out) / b).floor() as i64;
            let c1 = ((center.lon + half_out) / b).floor() as i64;
            if c1 - c0 + 1 >= self.lon_buckets {
                for (_, ids) in self.buckets.range((row as i32, i32::MIN)..=(row as i32, i32::MAX)) {
                    ids.iter().copied().for_each(&mut check);
                }
                continue;
            }
            // unwrapped columns wholly inside the inner radius
            let (s0, s1) = if half_in > 0.0 {
                (
                    ((center.lon - half_in) / b).ceil() as i64,
                    ((center.lon + half_in) / b).floor() as i64 - 1,
                )
            } else {
                (1, 0)
            };
            if s0 <= s1 {
                self.visit_columns(row, c0, (s0 - 1).min(c1), &mut check);
                self.visit_columns(row, (s1 + 1).max(c0), c1, &mut check);
            } else {
                self.visit_columns(row, c0, c1, &mut check);
            }
        }
    }

    /// Visits the buckets of `row` in the unwrapped column span `[a, e]`,
    /// splitting it at the antimeridian.
    fn visit_columns(&self, row: i64, a: i64, e: i64, check: &mut impl FnMut(u32)) {
        let mut c = a;
        while c <= e {
            let wrapped = c.rem_euclid(self.lon_buckets);
            let seg_end = e.min(c + (self.lon_buckets - 1 - wrapped));
            let w_end = wrapped + (seg_end - c);
            for (_, ids) in self.buckets.range((row as i32, wrapped as i32)..=(row as i32, w_end as i32)) {
                ids.iter().copied().for_each(&mut *check);
            }
            c = seg_end + 1;
        }
    }

    /// Indices and distances of all points within `r_km`, sorted by
    /// (distance, index).
    pub fn within(&self, center: GeoPoint, r_km: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        self.for_each_within(center, r_km, |i, d| out.push((i, d)));
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }
}
