//! Deterministic synthetic inputs: an island population grid, a sparse
//! charge network over it, and small hand-built geometries whose routing
//! and fault behavior can be worked out by hand.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::experiment::TemplateTrips;
use crate::geo::{GeoPoint, KM_PER_DEGREE};
use crate::network::{ChargeKind, ChargeNetwork, ChargePoint};
use crate::population::{Cell, PopulationGrid};
use crate::rng::stream;

const ISLAND_SW: (f64, f64) = (51.6, -9.6);
const ISLAND_NS_KM: f64 = 300.0;
const ISLAND_EW_KM: f64 = 200.0;
const RURAL_PER_CELL: f64 = 12.0;

/// (population, sigma km)
const CITIES: [(f64, f64); 6] = [
    (900_000.0, 9.0),
    (250_000.0, 6.0),
    (120_000.0, 5.0),
    (80_000.0, 4.0),
    (60_000.0, 4.0),
    (40_000.0, 3.0),
];

/// An elliptical island of 1 km cells, about 300 km north-south by 200 km
/// east-west, with a rural baseline plus Gaussian cities at seeded places.
pub fn synthetic_island_grid(seed: u64) -> PopulationGrid {
    let mut rng = stream(seed, &[0x1514]);
    let (cx, cy) = (ISLAND_EW_KM / 2.0, ISLAND_NS_KM / 2.0);
    let inside = |x: f64, y: f64| ((x - cx) / cx).powi(2) + ((y - cy) / cy).powi(2) <= 1.0;
    let mut cities = Vec::new();
    for &(pop, sigma) in &CITIES {
        let (x, y) = loop {
            let x = rng.random_range(0.0..ISLAND_EW_KM);
            let y = rng.random_range(0.0..ISLAND_NS_KM);
            // keep cities off the coast
            if inside(cx + (x - cx) / 0.8, cy + (y - cy) / 0.8) {
                break (x, y);
            }
        };
        cities.push((x, y, pop, sigma));
    }

    let mut cells = Vec::new();
    for i in 0..ISLAND_NS_KM as usize {
        let y = i as f64 + 0.5;
        let lat = ISLAND_SW.0 + y / KM_PER_DEGREE;
        let km_per_lon = KM_PER_DEGREE * lat.to_radians().cos();
        for j in 0..ISLAND_EW_KM as usize {
            let x = j as f64 + 0.5;
            if !inside(x, y) {
                continue;
            }
            let urban: f64 = cities
                .iter()
                .map(|&(px, py, pop, s)| {
                    let r2 = (x - px).powi(2) + (y - py).powi(2);
                    pop / (2.0 * std::f64::consts::PI * s * s) * (-r2 / (2.0 * s * s)).exp()
                })
                .sum();
            let center = GeoPoint::new(lat, ISLAND_SW.1 + x / km_per_lon).expect("island lies in range");
            cells.push(Cell {
                center,
                population: (RURAL_PER_CELL + urban).round(),
            });
        }
    }
    PopulationGrid::from_cells(cells).expect("island grid is populated")
}

/// `n_points` charge points at cell centers drawn with weight
/// `sqrt(population)`, which spreads them beyond the cities. The first
/// `n_dc` (by id) are 50 kW DC, the rest 22 kW AC.
pub fn synthetic_network(grid: &PopulationGrid, n_points: usize, n_dc: usize, seed: u64) -> ChargeNetwork {
    let mut rng = stream(seed, &[0x4e37]);
    let weights = WeightedIndex::new(grid.cells().iter().map(|c| c.population.sqrt())).expect("positive weights");
    let mut used = std::collections::BTreeSet::new();
    let mut points = Vec::with_capacity(n_points);
    while points.len() < n_points {
        let i = weights.sample(&mut rng);
        if !used.insert(i) {
            continue;
        }
        let k = points.len();
        let (kind, power) = if k < n_dc {
            (ChargeKind::Dc, 50.0)
        } else {
            (ChargeKind::Ac, 22.0)
        };
        points.push(ChargePoint::new(format!("S{k:03}"), grid.cells()[i].center, kind, power));
    }
    ChargeNetwork::new(points).expect("ids are unique")
}

/// One 11 kW AC point 60 km along a 110 km trip. A lone EV averages about
/// 50 kph; a second EV with the same trip waits a full charge and falls
/// below 40 kph.
pub fn saturation_fixture() -> (ChargeNetwork, TemplateTrips) {
    let o = GeoPoint::new(53.0, -8.0).expect("valid");
    let net = ChargeNetwork::new(vec![ChargePoint::new("mid", o.offset_km(0.0, 60.0), ChargeKind::Ac, 11.0)])
        .expect("single point");
    let trips = TemplateTrips {
        templates: vec![(o, o.offset_km(0.0, 110.0))],
        cycle_spacing_h: 0.0,
    };
    (net, trips)
}

/// Hand-built fault geometry.
pub struct FaultFixture {
    pub net: ChargeNetwork,
    pub trips: TemplateTrips,
    /// Ids of points with no neighbor within the emergency radius.
    pub isolated: Vec<String>,
    /// Templates (per cycle) that must charge; the rest are short trips.
    pub charging_per_cycle: usize,
}

impl FaultFixture {
    pub fn trips_per_cycle(&self) -> usize {
        self.trips.templates.len()
    }
}

pub const FAULT_CYCLE_SPACING_H: f64 = 2.0;

/// Three corridors far enough apart never to interact, in local km
/// (east, north) from each corridor's origin `O`:
///
/// * two "isolated" corridors, each with a 50 kW DC point `iso` at (74, 0)
///   and a cluster of four 22 kW AC points near (58, 20). Trip `O -> (100, 0)`
///   charges at `iso`, arriving with about 21% charge; if `iso` is down the
///   cluster is out of emergency reach. Four trips `O -> (70, 60)` can only
///   charge in the cluster.
/// * a "cluster" corridor with four points near (50, 0) and four trips
///   `O -> (102, 0)`; the last leg is too long under a 28% reserve.
///
/// Each cycle also has one 30 km trip per charging trip, so half the trips
/// need charge. With default parameters 2 of the 14 points are isolated and
/// 2 of the 14 charging trips stop at them.
pub fn fault_fixture() -> FaultFixture {
    let cluster = [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5)];
    let mut points = Vec::new();
    let mut charging = Vec::new();
    let mut isolated = Vec::new();
    for (c, lon) in [(0, -9.0), (1, -6.0)] {
        let o = GeoPoint::new(52.0, lon).expect("valid");
        let at = |e: f64, n: f64| o.offset_km(n, e);
        let id = format!("c{c}-iso");
        points.push(ChargePoint::new(id.clone(), at(74.0, 0.0), ChargeKind::Dc, 50.0));
        isolated.push(id);
        for (j, (de, dn)) in cluster.iter().enumerate() {
            points.push(ChargePoint::new(format!("c{c}-n{j}"), at(58.0 + de, 20.0 + dn), ChargeKind::Ac, 22.0));
        }
        charging.push((o, at(100.0, 0.0)));
        for _ in 0..4 {
            charging.push((o, at(70.0, 60.0)));
        }
    }
    let o = GeoPoint::new(52.0, -3.0).expect("valid");
    for (j, (de, dn)) in cluster.iter().enumerate() {
        points.push(ChargePoint::new(format!("u-p{j}"), o.offset_km(*dn, 50.0 + de), ChargeKind::Ac, 22.0));
    }
    for _ in 0..4 {
        charging.push((o, o.offset_km(0.0, 102.0)));
    }

    let charging_per_cycle = charging.len();
    let short: Vec<_> = charging.iter().map(|&(o, _)| (o, o.offset_km(-30.0, 0.0))).collect();
    let mut templates = charging;
    templates.extend(short);
    FaultFixture {
        net: ChargeNetwork::new(points).expect("unique ids"),
        trips: TemplateTrips {
            templates,
            cycle_spacing_h: FAULT_CYCLE_SPACING_H,
        },
        isolated,
        charging_per_cycle,
    }
}
