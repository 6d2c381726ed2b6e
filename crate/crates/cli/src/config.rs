//! Flat key-value scenario files and their resolution against flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use chargesim_core::{EvParams, RouterConfig, RoutingMode, ScenarioConfig, TripLengthParams};
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "CHARGESIM_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(u32),
    Many(Vec<u32>),
}

/// Every key is optional; absent keys take built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub population: Option<String>,
    pub network: Option<String>,
    pub trips: Option<String>,
    pub cycle_spacing_h: Option<f64>,
    pub output_dir: Option<String>,
    pub seed: Option<u64>,
    pub n_ev: Option<OneOrMany>,
    pub replicates: Option<u32>,
    pub mode: Option<String>,
    pub battery_kwh: Option<f64>,
    pub speed_kph: Option<f64>,
    pub max_range_km: Option<f64>,
    pub dc_charge_kw: Option<f64>,
    pub onboard_ac_kw: Option<f64>,
    pub reserve_soc: Option<f64>,
    pub destination_reserve_soc: Option<f64>,
    pub charge_target_soc: Option<f64>,
    pub route_scale: Option<f64>,
    pub start_soc: Option<f64>,
    pub max_stops: Option<u32>,
    pub speed_thresholds: Option<Vec<f64>>,
    pub trip_a: Option<f64>,
    pub trip_b: Option<f64>,
    pub trip_c: Option<f64>,
    pub trip_upper_km: Option<f64>,
    pub p_f_grid: Option<String>,
    pub masks: Option<u64>,
    pub fault_seed: Option<u64>,
    pub add_redundancy: Option<String>,
    pub threshold_kph: Option<f64>,
    pub target_p: Option<f64>,
    pub n_max: Option<u32>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_ev: Option<Vec<u32>>,
    pub replicates: Option<u32>,
    pub mode: Option<RoutingMode>,
    pub onboard_ac_kw: Option<f64>,
    pub reserve_soc: Option<f64>,
    pub p_f_grid: Option<String>,
    pub masks: Option<u64>,
    pub add_redundancy: Option<String>,
    pub threshold_kph: Option<f64>,
    pub target_p: Option<f64>,
    pub n_max: Option<u32>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Source {
    File(PathBuf),
    /// Generated in memory from a seed.
    Synthetic(u64),
}

/// Fully resolved run description; echoed into summaries and manifests.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub population: Source,
    pub network: Source,
    pub trips: Option<PathBuf>,
    pub cycle_spacing_h: f64,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub n_ev: Vec<u32>,
    pub replicates: u32,
    pub router: RouterConfig,
    pub speed_thresholds: Vec<f64>,
    pub trip_params: TripLengthParams,
    pub p_f_grid: Vec<f64>,
    pub masks: u64,
    pub fault_seed: u64,
    pub add_redundancy: Option<f64>,
    pub threshold_kph: f64,
    pub target_p: f64,
    pub n_max: u32,
}

impl Resolved {
    pub fn scenario(&self, n_ev: u32) -> ScenarioConfig {
        ScenarioConfig {
            n_ev,
            router: self.router,
            replicates: self.replicates,
            seed: self.seed,
            speed_thresholds_kph: self.speed_thresholds.clone(),
        }
    }
}

pub fn parse_mode(s: &str) -> anyhow::Result<RoutingMode> {
    match s {
        "reservation-aware" | "aware" => Ok(RoutingMode::ReservationAware),
        "reservation-blind" | "blind" => Ok(RoutingMode::ReservationBlind),
        _ => bail!("unknown mode {s:?} (expected reservation-aware or reservation-blind)"),
    }
}

fn parse_source(s: &str, base: &Path) -> anyhow::Result<Source> {
    match s.strip_prefix("synthetic:") {
        Some(seed) => Ok(Source::Synthetic(
            seed.parse().with_context(|| format!("bad synthetic seed in {s:?}"))?,
        )),
        None => Ok(Source::File(base.join(s))),
    }
}

/// `lo:hi:log[:n]`, `lo:hi:lin[:n]` or a comma-separated list.
pub fn parse_grid(spec: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let grid = if parts.len() >= 3 {
        let lo: f64 = parts[0].trim().parse().with_context(|| format!("bad grid start in {spec:?}"))?;
        let hi: f64 = parts[1].trim().parse().with_context(|| format!("bad grid end in {spec:?}"))?;
        let n: usize = match parts.get(3) {
            Some(n) => n.trim().parse().with_context(|| format!("bad grid size in {spec:?}"))?,
            None => 8,
        };
        if parts.len() > 4 || n < 2 || !(lo < hi) {
            bail!("grid {spec:?} needs lo < hi and at least 2 points");
        }
        let t = |k: usize| k as f64 / (n - 1) as f64;
        match parts[2].trim() {
            "log" => {
                if lo <= 0.0 {
                    bail!("log grid {spec:?} needs a positive start");
                }
                (0..n).map(|k| round_sig(lo * (hi / lo).powf(t(k)), 4)).collect()
            }
            "lin" => (0..n).map(|k| round_sig(lo + (hi - lo) * t(k), 6)).collect(),
            other => bail!("unknown grid spacing {other:?}"),
        }
    } else {
        spec.split(',')
            .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad grid value {x:?}")))
            .collect::<anyhow::Result<Vec<_>>>()?
    };
    if grid.is_empty() {
        bail!("empty grid {spec:?}");
    }
    Ok(grid)
}

fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let scale = 10f64.powi(digits - 1 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}

/// `isolated:<radius km>`.
pub fn parse_redundancy(spec: &str) -> anyhow::Result<f64> {
    let r = spec
        .strip_prefix("isolated:")
        .with_context(|| format!("redundancy spec {spec:?} must look like isolated:<km>"))?;
    let r: f64 = r.parse().with_context(|| format!("bad radius in {spec:?}"))?;
    if !(r > 0.0) {
        bail!("redundancy radius must be positive");
    }
    Ok(r)
}

pub fn resolve(file: &FileConfig, config_path: &Path, ov: &Overrides) -> anyhow::Result<Resolved> {
    let base = config_path.parent().unwrap_or(Path::new("."));
    let defaults = EvParams::default();
    let ev = EvParams {
        battery_kwh: file.battery_kwh.unwrap_or(defaults.battery_kwh),
        speed_kph: file.speed_kph.unwrap_or(defaults.speed_kph),
        max_range_km: file.max_range_km.unwrap_or(defaults.max_range_km),
        dc_charge_kw: file.dc_charge_kw.unwrap_or(defaults.dc_charge_kw),
        onboard_ac_limit_kw: ov
            .onboard_ac_kw
            .or(file.onboard_ac_kw)
            .unwrap_or(defaults.onboard_ac_limit_kw),
        reserve_soc: ov.reserve_soc.or(file.reserve_soc).unwrap_or(defaults.reserve_soc),
        charge_target_soc: file.charge_target_soc.unwrap_or(defaults.charge_target_soc),
        route_scale: file.route_scale.unwrap_or(defaults.route_scale),
        destination_reserve_soc: file.destination_reserve_soc,
        start_soc: file.start_soc.unwrap_or(defaults.start_soc),
    };
    ev.validate().context("vehicle parameters")?;
    let mode = match (ov.mode, &file.mode) {
        (Some(m), _) => m,
        (None, Some(s)) => parse_mode(s)?,
        (None, None) => RoutingMode::default(),
    };
    let router = RouterConfig {
        mode,
        ev,
        max_stops: file.max_stops.unwrap_or(64),
        prune: true,
    };

    let seed = match ov.seed.or(file.seed) {
        Some(s) => s,
        None => match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().with_context(|| format!("{SEED_ENV}={v:?} is not an integer"))?,
            Err(_) => 0,
        },
    };

    let n_ev = match (&ov.n_ev, &file.n_ev) {
        (Some(v), _) => v.clone(),
        (None, Some(OneOrMany::One(n))) => vec![*n],
        (None, Some(OneOrMany::Many(v))) => v.clone(),
        (None, None) => vec![1000],
    };
    if n_ev.is_empty() || n_ev.contains(&0) {
        bail!("n_ev values must be at least 1");
    }
    let replicates = ov.replicates.or(file.replicates).unwrap_or(1);
    if replicates == 0 {
        bail!("replicates must be at least 1");
    }
    let speed_thresholds = file.speed_thresholds.clone().unwrap_or_else(|| vec![60.0, 40.0, 10.0]);
    if speed_thresholds.is_empty() || speed_thresholds.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        bail!("speed_thresholds must be positive");
    }

    let tp = TripLengthParams::default();
    let trip_params = TripLengthParams {
        a: file.trip_a.unwrap_or(tp.a),
        b: file.trip_b.unwrap_or(tp.b),
        c: file.trip_c.unwrap_or(tp.c),
        upper_km: file.trip_upper_km.unwrap_or(tp.upper_km),
    };

    let p_f_grid = parse_grid(ov.p_f_grid.as_deref().or(file.p_f_grid.as_deref()).unwrap_or("0.01:0.3:log"))?;
    if p_f_grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
        bail!("fault probabilities must lie in [0, 1]");
    }
    let masks = ov.masks.or(file.masks).unwrap_or(1000);
    if masks == 0 {
        bail!("masks must be at least 1");
    }
    let add_redundancy = ov
        .add_redundancy
        .as_deref()
        .or(file.add_redundancy.as_deref())
        .map(parse_redundancy)
        .transpose()?;

    let threshold_kph = ov.threshold_kph.or(file.threshold_kph).unwrap_or(40.0);
    if !(threshold_kph > 0.0 && threshold_kph.is_finite()) {
        bail!("threshold must be positive");
    }
    let target_p = ov.target_p.or(file.target_p).unwrap_or(1e-4);
    if !(target_p > 0.0 && target_p <= 1.0) {
        bail!("target probability {target_p} must lie in (0, 1]");
    }
    let n_max = ov.n_max.or(file.n_max).unwrap_or(100_000);
    if n_max == 0 {
        bail!("n_max must be at least 1");
    }
    let cycle_spacing_h = file.cycle_spacing_h.unwrap_or(0.0);
    if !(cycle_spacing_h >= 0.0 && cycle_spacing_h.is_finite()) {
        bail!("cycle_spacing_h must be non-negative");
    }

    Ok(Resolved {
        population: parse_source(file.population.as_deref().unwrap_or("synthetic:1"), base)?,
        network: match &file.network {
            Some(n) => parse_source(n, base)?,
            None => bail!("config must name a network"),
        },
        trips: file.trips.as_ref().map(|t| base.join(t)),
        cycle_spacing_h,
        output_dir: ov
            .output_dir
            .clone()
            .or_else(|| file.output_dir.as_ref().map(|d| base.join(d)))
            .unwrap_or_else(|| PathBuf::from("out")),
        seed,
        n_ev,
        replicates,
        router,
        speed_thresholds,
        trip_params,
        p_f_grid,
        masks,
        fault_seed: file.fault_seed.unwrap_or(seed),
        add_redundancy,
        threshold_kph,
        target_p,
        n_max,
    })
}
