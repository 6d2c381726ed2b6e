//! The simulate, faults, capacity and gen-fixtures subcommands.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context};
use chargesim_core::experiment::write_metrics_csv;
use chargesim_core::fault::write_sweep_csv;
use chargesim_core::fixtures::{fault_fixture, saturation_fixture, synthetic_island_grid, synthetic_network};
use chargesim_core::stats::{wilson_interval, Z95};
use chargesim_core::{
    capacity_search, estimate_ps_first_order, run_replicates, ChargeNetwork, CommittedRoutes, FaultSweep, GeoPoint,
    KeepPlans, PopulationGrid, PopulationTrips, ScenarioMetrics, TemplateTrips, TripLengthDistribution, TripSource,
};
use serde::{Deserialize, Serialize};

use crate::config::{Resolved, Source};
use crate::io::{Failure, Outputs, ResultExt};

pub struct Loaded {
    pub net: ChargeNetwork,
    grid: Option<PopulationGrid>,
    lengths: Option<TripLengthDistribution>,
    templates: Option<TemplateTrips>,
}

impl Loaded {
    pub fn source(&self) -> Box<dyn TripSource + '_> {
        match (&self.templates, &self.grid, &self.lengths) {
            (Some(t), _, _) => Box::new(t.clone()),
            (None, Some(grid), Some(lengths)) => Box::new(PopulationTrips { grid, lengths }),
            _ => unreachable!("load fills a trip source"),
        }
    }
}

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).with_context(|| format!("opening {}", path.display())).data_err()
}

#[derive(Debug, Deserialize, Serialize)]
struct TripRow {
    origin_lat: f64,
    origin_lon: f64,
    dest_lat: f64,
    dest_lon: f64,
}

fn load_trips(path: &Path, cycle_spacing_h: f64) -> anyhow::Result<TemplateTrips> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut templates = Vec::new();
    for (i, row) in rdr.deserialize::<TripRow>().enumerate() {
        let r = row.with_context(|| format!("{} record {}", path.display(), i + 1))?;
        let o = GeoPoint::new(r.origin_lat, r.origin_lon).with_context(|| format!("record {}", i + 1))?;
        let d = GeoPoint::new(r.dest_lat, r.dest_lon).with_context(|| format!("record {}", i + 1))?;
        templates.push((o, d));
    }
    if templates.is_empty() {
        return Err(anyhow!("{} has no trips", path.display()));
    }
    Ok(TemplateTrips {
        templates,
        cycle_spacing_h,
    })
}

fn write_trips(templates: &[(GeoPoint, GeoPoint)], w: &mut dyn Write) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    for (o, d) in templates {
        w.serialize(TripRow {
            origin_lat: o.lat(),
            origin_lon: o.lon(),
            dest_lat: d.lat(),
            dest_lon: d.lon(),
        })?;
    }
    w.flush()?;
    Ok(())
}

fn write_population(grid: &PopulationGrid, w: &mut dyn Write) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["lat", "lon", "population"])?;
    for c in grid.cells() {
        w.write_record([c.center.lat().to_string(), c.center.lon().to_string(), c.population.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load(cfg: &Resolved) -> Result<Loaded, Failure> {
    let needs_grid = cfg.trips.is_none() || matches!(cfg.network, Source::Synthetic(_));
    let grid = if needs_grid {
        Some(match &cfg.population {
            Source::File(p) => PopulationGrid::load(open(p)?)
                .with_context(|| format!("population {}", p.display()))
                .data_err()?,
            Source::Synthetic(seed) => synthetic_island_grid(*seed),
        })
    } else {
        None
    };
    let net = match &cfg.network {
        Source::File(p) => ChargeNetwork::load(open(p)?)
            .with_context(|| format!("network {}", p.display()))
            .data_err()?,
        Source::Synthetic(seed) => synthetic_network(grid.as_ref().expect("grid loaded"), 50, 10, *seed),
    };
    if net.is_empty() {
        return Err(Failure::Data(anyhow!("charge network is empty")));
    }
    let templates = match &cfg.trips {
        Some(p) => Some(load_trips(p, cfg.cycle_spacing_h).data_err()?),
        None => None,
    };
    let lengths = if templates.is_none() {
        Some(TripLengthDistribution::new(cfg.trip_params).config_err()?)
    } else {
        None
    };
    Ok(Loaded {
        net,
        grid,
        lengths,
        templates,
    })
}

#[derive(Serialize)]
struct Interval {
    value: f64,
    ci_low: f64,
    ci_high: f64,
}

impl Interval {
    fn of(k: u64, n: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(k, n, Z95);
        Self {
            value: if n == 0 { 0.0 } else { k as f64 / n as f64 },
            ci_low,
            ci_high,
        }
    }
}

#[derive(Serialize)]
struct BelowRow {
    threshold_kph: f64,
    count: u64,
    #[serde(flatten)]
    frac: Interval,
}

#[derive(Serialize)]
struct SummaryRow {
    n_ev: u32,
    trips: u64,
    needed_charge: u64,
    unroutable: u64,
    frac_charge: Interval,
    frac_unroutable: Interval,
    below: Vec<BelowRow>,
    mean_speed_kph: f64,
}

impl SummaryRow {
    fn of(m: &ScenarioMetrics) -> Self {
        Self {
            n_ev: m.n_ev,
            trips: m.trips,
            needed_charge: m.needed_charge,
            unroutable: m.unroutable,
            frac_charge: Interval::of(m.needed_charge, m.trips),
            frac_unroutable: Interval::of(m.unroutable, m.trips),
            below: m
                .thresholds_kph
                .iter()
                .zip(&m.below)
                .map(|(&t, &k)| BelowRow {
                    threshold_kph: t,
                    count: k,
                    frac: Interval::of(k, m.trips),
                })
                .collect(),
            mean_speed_kph: m.mean_speed_kph(),
        }
    }
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    seed: u64,
    config: &'a Resolved,
    results: T,
}

pub struct SimulateOpts {
    pub dump_ledger: bool,
    pub dump_routes: bool,
}

pub fn simulate(cfg: &Resolved, opts: &SimulateOpts, out: &mut Outputs) -> Result<(), Failure> {
    let data = load(cfg)?;
    let source = data.source();
    let largest = *cfg.n_ev.iter().max().expect("validated non-empty");
    let mut rows = Vec::with_capacity(cfg.n_ev.len());
    let mut dumped = false;
    for &n in &cfg.n_ev {
        let sc = cfg.scenario(n);
        let dump = !dumped && n == largest && (opts.dump_ledger || opts.dump_routes);
        let keep = if dump && opts.dump_routes { KeepPlans::All } else { KeepPlans::None };
        let runs = run_replicates(&sc, &data.net, source.as_ref(), keep).config_err()?;
        let mut total = ScenarioMetrics::empty(n, &cfg.speed_thresholds);
        for r in &runs {
            total.merge(&r.metrics);
        }
        log::info!(
            "n_ev {n}: {} trips, below {:?} kph = {:?}",
            total.trips,
            cfg.speed_thresholds,
            total.below
        );
        if dump {
            dumped = true;
            let first = &runs[0];
            if opts.dump_ledger {
                out.write("ledger.csv", |w| Ok(first.ledger.write_csv(&data.net, w)?)).other_err()?;
            }
            if opts.dump_routes {
                out.write("routes.jsonl", |w| {
                    for p in &first.plans {
                        p.write_jsonl(&mut *w)?;
                    }
                    Ok(())
                })
                .other_err()?;
            }
        }
        rows.push(total);
    }
    out.write("metrics.csv", |w| Ok(write_metrics_csv(&rows, w)?)).other_err()?;
    let summary = Summary {
        seed: cfg.seed,
        config: cfg,
        results: rows.iter().map(SummaryRow::of).collect::<Vec<_>>(),
    };
    out.write_json("summary.json", &summary).other_err()?;
    Ok(())
}

#[derive(Serialize)]
struct FaultSummaryRow {
    p_f: f64,
    stranded: u64,
    rerouted: u64,
    replays: u64,
    p_s: f64,
    ci_low: f64,
    ci_high: f64,
    p_s_stderr: f64,
    first_order_estimate: f64,
}

#[derive(Serialize)]
struct FaultSummary {
    n_ev: u32,
    trips: u64,
    needed_charge: u64,
    unroutable: u64,
    unroutable_fraction: f64,
    charge_points: usize,
    isolation_radius_km: f64,
    isolated_points: Vec<String>,
    added_points: Vec<String>,
    masks: u64,
    rows: Vec<FaultSummaryRow>,
}

pub fn faults(cfg: &Resolved, out: &mut Outputs) -> Result<(), Failure> {
    let data = load(cfg)?;
    let source = data.source();
    let ev = &cfg.router.ev;
    let radius = ev.reserve_soc * ev.usable_range_km();
    let (net, added) = match cfg.add_redundancy {
        Some(r) => {
            let targets: Vec<String> = data
                .net
                .isolated_points(r)
                .into_iter()
                .map(|i| data.net.point(i).id.clone())
                .collect();
            let refs: Vec<&str> = targets.iter().map(String::as_str).collect();
            let net = data.net.add_colocated_redundancy(&refs).data_err()?;
            log::info!("added {} co-located points", targets.len());
            (net, targets)
        }
        None => (data.net.clone(), Vec::new()),
    };
    let n_ev = *cfg.n_ev.iter().max().expect("validated non-empty");
    let runs: Vec<CommittedRoutes> = run_replicates(&cfg.scenario(n_ev), &net, source.as_ref(), KeepPlans::Charged)
        .config_err()?
        .into_iter()
        .map(|r| r.into_committed())
        .collect();
    let sweep = FaultSweep {
        net: &net,
        router: &cfg.router,
        masks: cfg.masks,
        seed: cfg.fault_seed,
    };
    let rows = sweep.run(&runs, &cfg.p_f_grid);
    out.write("faults.csv", |w| Ok(write_sweep_csv(&rows, w)?)).other_err()?;

    let isolated: Vec<String> = net
        .isolated_points(radius)
        .into_iter()
        .map(|i| net.point(i).id.clone())
        .collect();
    let first = rows.first();
    let trips = first.map_or(0, |r| r.trips);
    let needed_charge = first.map_or(0, |r| r.needed_charge);
    let p_c = if trips == 0 { 0.0 } else { needed_charge as f64 / trips as f64 };
    let unroutable = first.map_or(0, |r| r.unroutable);
    let summary = FaultSummary {
        n_ev,
        trips,
        needed_charge,
        unroutable,
        unroutable_fraction: first.map_or(0.0, |r| r.unroutable_fraction()),
        charge_points: net.len(),
        isolation_radius_km: radius,
        isolated_points: isolated.clone(),
        added_points: added,
        masks: cfg.masks,
        rows: rows
            .iter()
            .map(|r| FaultSummaryRow {
                p_f: r.p_f,
                stranded: r.stranded,
                rerouted: r.rerouted,
                replays: r.trips * r.masks,
                p_s: r.p_s,
                ci_low: r.ci_low,
                ci_high: r.ci_high,
                p_s_stderr: r.p_s_stderr,
                first_order_estimate: estimate_ps_first_order(p_c, r.p_f, isolated.len(), net.len()),
            })
            .collect(),
    };
    println!(
        "unroutable fraction: {} ({} of {} trips)",
        summary.unroutable_fraction, unroutable, trips
    );
    out.write_json("faults_summary.json", &Summary {
        seed: cfg.seed,
        config: cfg,
        results: summary,
    })
    .other_err()?;
    Ok(())
}

#[derive(Serialize)]
struct CapacitySummary {
    capacity: Option<u32>,
    threshold_kph: f64,
    target_p: f64,
    /// Fraction below the threshold at the reported capacity.
    at_capacity: Option<Interval>,
    probes: usize,
}

pub fn capacity(cfg: &Resolved, out: &mut Outputs) -> Result<(), Failure> {
    let data = load(cfg)?;
    let source = data.source();
    let report = capacity_search(
        &cfg.scenario(1),
        &data.net,
        source.as_ref(),
        cfg.threshold_kph,
        cfg.target_p,
        cfg.n_max,
    )
    .config_err()?;
    out.write("capacity_probes.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        for p in &report.probes {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    })
    .other_err()?;
    let at_capacity = report
        .capacity
        .and_then(|n| report.probe(n))
        .map(|p| Interval::of(p.below, p.trips));
    match report.capacity {
        Some(n) => println!("capacity: {n}"),
        None => println!("capacity: none (a single vehicle misses the target)"),
    }
    out.write_json("capacity.json", &Summary {
        seed: cfg.seed,
        config: cfg,
        results: CapacitySummary {
            capacity: report.capacity,
            threshold_kph: report.threshold_kph,
            target_p: report.target_p,
            at_capacity,
            probes: report.probes.len(),
        },
    })
    .other_err()?;
    Ok(())
}

/// Writes the synthetic inputs and ready-to-run configs into `dir`.
pub fn gen_fixtures(dir: &Path, island_seed: u64, network_seed: u64, out: &mut Outputs) -> Result<(), Failure> {
    let grid = synthetic_island_grid(island_seed);
    let net = synthetic_network(&grid, 50, 10, network_seed);
    let fault = fault_fixture();
    let (sat_net, sat_trips) = saturation_fixture();

    out.write("population.csv", |w| write_population(&grid, w)).other_err()?;
    out.write("network.csv", |w| Ok(net.write_csv(w)?)).other_err()?;
    out.write("fault_network.csv", |w| Ok(fault.net.write_csv(w)?)).other_err()?;
    out.write("fault_trips.csv", |w| write_trips(&fault.trips.templates, w)).other_err()?;
    out.write("saturation_network.csv", |w| Ok(sat_net.write_csv(w)?)).other_err()?;
    out.write("saturation_trips.csv", |w| write_trips(&sat_trips.templates, w)).other_err()?;

    let configs: [(&str, String); 4] = [
        (
            "simulate.toml",
            format!(
                "# Fleet-size sweep on the synthetic island.\n\
                 population = \"synthetic:{island_seed}\"\n\
                 network = \"network.csv\"\n\
                 output_dir = \"out/simulate\"\n\
                 seed = 7\n\
                 n_ev = [100, 500, 2000]\n\
                 replicates = 20\n\
                 mode = \"reservation-aware\"\n"
            ),
        ),
        (
            "faults.toml",
            format!(
                "# Fault sweep on three hand-built corridors; {} trips per cycle.\n\
                 network = \"fault_network.csv\"\n\
                 trips = \"fault_trips.csv\"\n\
                 cycle_spacing_h = {}\n\
                 output_dir = \"out/faults\"\n\
                 seed = 7\n\
                 n_ev = {}\n\
                 masks = 20000\n\
                 p_f_grid = \"0.01:0.30:log\"\n",
                fault.trips_per_cycle(),
                fault.trips.cycle_spacing_h,
                fault.trips_per_cycle(),
            ),
        ),
        (
            "capacity.toml",
            format!(
                "# Capacity of the synthetic island network.\n\
                 population = \"synthetic:{island_seed}\"\n\
                 network = \"network.csv\"\n\
                 output_dir = \"out/capacity\"\n\
                 seed = 7\n\
                 replicates = 4\n\
                 threshold_kph = 40.0\n\
                 target_p = 1e-2\n\
                 n_max = 20000\n"
            ),
        ),
        (
            "saturation.toml",
            "# One slow charger on a 110 km corridor; every trip must stop there.\n\
             network = \"saturation_network.csv\"\n\
             trips = \"saturation_trips.csv\"\n\
             output_dir = \"out/saturation\"\n\
             seed = 7\n\
             n_ev = [1, 2, 4]\n\
             replicates = 200\n\
             threshold_kph = 40.0\n\
             target_p = 0.5\n\
             n_max = 64\n"
                .to_string(),
        ),
    ];
    for (name, text) in configs {
        out.write(name, |w| Ok(w.write_all(text.as_bytes())?)).other_err()?;
    }
    log::info!("fixtures written to {}", dir.display());
    Ok(())
}

