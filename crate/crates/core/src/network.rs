//! Charge-point registry with radius queries.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoIndex, GeoPoint};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("duplicate charge point id `{0}`")]
    DuplicateId(String),
    #[error("unknown charge point kind `{0}` (expected DC or AC)")]
    UnknownKind(String),
    #[error("charge point `{id}` has non-positive power {power_kw}")]
    Power { id: String, power_kw: f64 },
    #[error("unknown charge point `{0}`")]
    UnknownId(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChargeKind {
    #[serde(rename = "DC")]
    Dc,
    #[serde(rename = "AC")]
    Ac,
}

impl ChargeKind {
    /// Nominal point power used when a record does not specify one.
    pub fn default_power_kw(self) -> f64 {
        match self {
            ChargeKind::Dc => 50.0,
            ChargeKind::Ac => 22.0,
        }
    }
}

impl FromStr for ChargeKind {
    type Err = NetworkError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "DC" => Ok(ChargeKind::Dc),
            "AC" => Ok(ChargeKind::Ac),
            _ => Err(NetworkError::UnknownKind(s.to_string())),
        }
    }
}

impl fmt::Display for ChargeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChargeKind::Dc => "DC",
            ChargeKind::Ac => "AC",
        })
    }
}

/// Dense index of a charge point inside one [`ChargeNetwork`].
///
/// Points are stored sorted by id, so comparing indices compares ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CpIdx(pub u32);

impl CpIdx {
    pub fn get(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargePoint {
    pub id: String,
    pub location: GeoPoint,
    pub kind: ChargeKind,
    pub power_kw: f64,
    pub operational: bool,
}

impl ChargePoint {
    pub fn new(id: impl Into<String>, location: GeoPoint, kind: ChargeKind, power_kw: f64) -> Self {
        Self {
            id: id.into(),
            location,
            kind,
            power_kw,
            operational: true,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ChargeNetwork {
    points: Vec<ChargePoint>,
    by_id: HashMap<String, CpIdx>,
    index: GeoIndex,
}

impl ChargeNetwork {
    pub fn new(mut points: Vec<ChargePoint>) -> Result<Self, NetworkError> {
        points.sort_by(|a, b| a.id.cmp(&b.id));
        let mut by_id = HashMap::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            if !(p.power_kw > 0.0 && p.power_kw.is_finite()) {
                return Err(NetworkError::Power {
                    id: p.id.clone(),
                    power_kw: p.power_kw,
                });
            }
            if by_id.insert(p.id.clone(), CpIdx(i as u32)).is_some() {
                return Err(NetworkError::DuplicateId(p.id.clone()));
            }
        }
        let index = GeoIndex::new(points.iter().map(|p| p.location).collect());
        Ok(Self {
            points,
            by_id,
            index,
        })
    }

    /// Reads an `id,lat,lon,kind,power_kw` CSV (with header). An empty
    /// `power_kw` field takes the kind's nominal power.
    pub fn load(reader: impl Read) -> Result<Self, NetworkError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| NetworkError::Parse {
                    line: 1,
                    msg: format!("missing column `{name}`"),
                })
        };
        let (iid, ilat, ilon, ikind, ipow) = (col("id")?, col("lat")?, col("lon")?, col("kind")?, col("power_kw")?);
        let mut points = Vec::new();
        let mut seen = HashSet::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let get = |i: usize| rec.get(i).unwrap_or("");
            let num = |i: usize, name: &str| -> Result<f64, NetworkError> {
                get(i).parse::<f64>().map_err(|_| NetworkError::Parse {
                    line,
                    msg: format!("bad {name} `{}`", get(i)),
                })
            };
            let id = get(iid).to_string();
            if id.is_empty() {
                return Err(NetworkError::Parse {
                    line,
                    msg: "empty id".into(),
                });
            }
            if !seen.insert(id.clone()) {
                return Err(NetworkError::DuplicateId(id));
            }
            let kind: ChargeKind = get(ikind).parse()?;
            let power_kw = if get(ipow).is_empty() {
                kind.default_power_kw()
            } else {
                num(ipow, "power_kw")?
            };
            let location = GeoPoint::new(num(ilat, "lat")?, num(ilon, "lon")?).map_err(|e| NetworkError::Parse {
                line,
                msg: e.to_string(),
            })?;
            points.push(ChargePoint::new(id, location, kind, power_kw));
        }
        Self::new(points)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<(), NetworkError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "lat", "lon", "kind", "power_kw"])?;
        for p in &self.points {
            w.write_record([
                p.id.clone(),
                p.location.lat().to_string(),
                p.location.lon().to_string(),
                p.kind.to_string(),
                p.power_kw.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[ChargePoint] {
        &self.points
    }

    pub fn point(&self, idx: CpIdx) -> &ChargePoint {
        &self.points[idx.get()]
    }

    pub fn lookup(&self, id: &str) -> Option<CpIdx> {
        self.by_id.get(id).copied()
    }

    pub fn indices(&self) -> impl Iterator<Item = CpIdx> {
        (0..self.points.len() as u32).map(CpIdx)
    }

    pub fn count_kind(&self, kind: ChargeKind) -> usize {
        self.points.iter().filter(|p| p.kind == kind).count()
    }

    /// All points within `r_km` of `center`, sorted by (distance, id).
    pub fn within_radius(&self, center: GeoPoint, r_km: f64) -> Vec<(CpIdx, f64)> {
        // index order is id order, so the index tie-break is the id tie-break
        self.index
            .within(center, r_km)
            .into_iter()
            .map(|(i, d)| (CpIdx(i as u32), d))
            .collect()
    }

    /// Unsorted variant of [`within_radius`](Self::within_radius).
    pub fn for_each_within(&self, center: GeoPoint, r_km: f64, mut visit: impl FnMut(CpIdx, f64)) {
        self.index
            .for_each_within(center, r_km, |i, d| visit(CpIdx(i as u32), d));
    }

    /// Points with no other point within `r_km`.
    pub fn isolated_points(&self, r_km: f64) -> Vec<CpIdx> {
        self.indices()
            .filter(|&i| {
                let mut neighbors = 0;
                self.for_each_within(self.point(i).location, r_km, |j, _| {
                    if j != i {
                        neighbors += 1;
                    }
                });
                neighbors == 0
            })
            .collect()
    }

    /// A copy with one co-located duplicate per target. Duplicates get ids
    /// `<id>~r<n>` with `n` the first unused suffix.
    pub fn add_colocated_redundancy(&self, targets: &[&str]) -> Result<ChargeNetwork, NetworkError> {
        let mut points = self.points.clone();
        let mut taken: HashSet<String> = points.iter().map(|p| p.id.clone()).collect();
        for &t in targets {
            let idx = self
                .lookup(t)
                .ok_or_else(|| NetworkError::UnknownId(t.to_string()))?;
            let base = self.point(idx);
            let id = (1..)
                .map(|n| format!("{}~r{n}", base.id))
                .find(|id| !taken.contains(id))
                .expect("unbounded suffix search");
            taken.insert(id.clone());
            points.push(ChargePoint {
                id,
                ..base.clone()
            });
        }
        ChargeNetwork::new(points)
    }
}
