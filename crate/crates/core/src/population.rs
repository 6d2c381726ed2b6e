//! Population raster and population-weighted sampling of trip endpoints.

use std::io::Read;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use thiserror::Error;

use crate::geo::{GeoIndex, GeoPoint};

/// Side length of a raster cell.
pub const CELL_SIZE_KM: f64 = 1.0;

const INDEX_BUCKET_DEG: f64 = 0.02;

/// Ring half-widths tried, in order, when looking for destination cells.
pub const RING_HALF_WIDTHS_KM: [f64; 4] = [0.5, 1.0, 2.0, 5.0];

#[derive(Debug, Error)]
pub enum PopulationError {
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("invalid population grid: {0}")]
    Validation(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub center: GeoPoint,
    pub population: f64,
}

/// No populated cell was found within the widest ring around the origin.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("no populated cell within {widest_km} km of the {trip_km} km ring")]
pub struct RingEmpty {
    pub trip_km: f64,
    pub widest_km: f64,
}

#[derive(Debug, Clone)]
pub struct PopulationGrid {
    cells: Vec<Cell>,
    total: f64,
    index: GeoIndex,
    origin_weights: WeightedIndex<f64>,
}

impl PopulationGrid {
    pub fn from_cells(cells: Vec<Cell>) -> Result<Self, PopulationError> {
        if cells.is_empty() {
            return Err(PopulationError::Validation("no cells".into()));
        }
        if let Some(c) = cells
            .iter()
            .find(|c| !c.population.is_finite() || c.population < 0.0)
        {
            return Err(PopulationError::Validation(format!(
                "negative or non-finite population {} at {}",
                c.population, c.center
            )));
        }
        let total: f64 = cells.iter().map(|c| c.population).sum();
        if total <= 0.0 {
            return Err(PopulationError::Validation("total population is zero".into()));
        }
        let origin_weights = WeightedIndex::new(cells.iter().map(|c| c.population))
            .map_err(|e| PopulationError::Validation(e.to_string()))?;
        // 1 km cells: small buckets keep ring queries close to the ring area
        let index = GeoIndex::with_bucket_deg(cells.iter().map(|c| c.center).collect(), INDEX_BUCKET_DEG);
        Ok(Self {
            cells,
            total,
            index,
            origin_weights,
        })
    }

    /// Reads a `lat,lon,population` CSV (with header).
    pub fn load(reader: impl Read) -> Result<Self, PopulationError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers.iter().position(|h| h == name).ok_or_else(|| PopulationError::Parse {
                line: 1,
                msg: format!("missing column `{name}`"),
            })
        };
        let (ilat, ilon, ipop) = (col("lat")?, col("lon")?, col("population")?);
        let mut cells = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let field = |i: usize, name: &str| -> Result<f64, PopulationError> {
                let raw = rec.get(i).unwrap_or("");
                raw.parse::<f64>().map_err(|_| PopulationError::Parse {
                    line,
                    msg: format!("bad {name} `{raw}`"),
                })
            };
            let (lat, lon, pop) = (field(ilat, "lat")?, field(ilon, "lon")?, field(ipop, "population")?);
            if pop < 0.0 {
                return Err(PopulationError::Validation(format!(
                    "line {line}: negative population {pop}"
                )));
            }
            let center = GeoPoint::new(lat, lon).map_err(|e| PopulationError::Parse {
                line,
                msg: e.to_string(),
            })?;
            cells.push(Cell {
                center,
                population: pop,
            });
        }
        Self::from_cells(cells)
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn total_population(&self) -> f64 {
        self.total
    }

    pub fn cell_size_km(&self) -> f64 {
        CELL_SIZE_KM
    }

    /// Index of a population-weighted random cell.
    pub fn sample_origin_cell<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.origin_weights.sample(rng)
    }

    /// A point uniformly placed inside a population-weighted random cell.
    pub fn sample_origin<R: Rng + ?Sized>(&self, rng: &mut R) -> GeoPoint {
        let i = self.sample_origin_cell(rng);
        jitter(self.cells[i].center, rng)
    }

    /// Picks a destination cell whose center lies `trip_km ± w` from
    /// `origin`, weighted by population, widening `w` through
    /// [`RING_HALF_WIDTHS_KM`]. Returns the cell index and the `w` used.
    pub fn sample_destination_cell<R: Rng + ?Sized>(
        &self,
        origin: GeoPoint,
        trip_km: f64,
        rng: &mut R,
    ) -> Result<(usize, f64), RingEmpty> {
        let mut candidates = Vec::new();
        for &w in &RING_HALF_WIDTHS_KM {
            candidates.clear();
            self.index.for_each_in_ring(origin, trip_km - w, trip_km + w, |i, _| {
                if self.cells[i].population > 0.0 {
                    candidates.push(i);
                }
            });
            if candidates.is_empty() {
                continue;
            }
            // deterministic order regardless of bucket iteration
            candidates.sort_unstable();
            let weights = WeightedIndex::new(candidates.iter().map(|&i| self.cells[i].population))
                .expect("candidates have positive population");
            return Ok((candidates[weights.sample(rng)], w));
        }
        Err(RingEmpty {
            trip_km,
            widest_km: RING_HALF_WIDTHS_KM[RING_HALF_WIDTHS_KM.len() - 1],
        })
    }

    pub fn sample_destination<R: Rng + ?Sized>(
        &self,
        origin: GeoPoint,
        trip_km: f64,
        rng: &mut R,
    ) -> Result<GeoPoint, RingEmpty> {
        let (i, _) = self.sample_destination_cell(origin, trip_km, rng)?;
        Ok(jitter(self.cells[i].center, rng))
    }
}

fn jitter<R: Rng + ?Sized>(center: GeoPoint, rng: &mut R) -> GeoPoint {
    let half = CELL_SIZE_KM / 2.0;
    let n = rng.random_range(-half..half);
    let e = rng.random_range(-half..half);
    center.offset_km(n, e)
}
