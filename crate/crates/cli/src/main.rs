mod commands;
mod config;
mod io;
mod validate;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_mode, FileConfig, Overrides};
use crate::io::{Failure, Outputs, ResultExt};

#[derive(Parser)]
#[command(name = "chargesim", version, about = "Monte Carlo simulation of a public EV charging network")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Run seed; overrides the config file and the CHARGESIM_SEED variable.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fleet-size sweep: metrics CSV and summary JSON.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Write the reservation ledger of the largest fleet (replicate 0).
        #[arg(long)]
        dump_ledger: bool,
        /// Write realized routes of the largest fleet (replicate 0) as JSONL.
        #[arg(long)]
        dump_routes: bool,
    },
    /// Fault-injection sweep over a committed fault-free pass.
    Faults {
        #[command(flatten)]
        run: RunArgs,
        /// Fault probabilities: lo:hi:log[:n], lo:hi:lin[:n] or a comma list.
        #[arg(long)]
        pf_grid: Option<String>,
        /// Fault masks per probability.
        #[arg(long)]
        masks: Option<u64>,
        /// Duplicate every point with no neighbor within the radius, e.g. isolated:18.7.
        #[arg(long)]
        add_redundancy: Option<String>,
    },
    /// Largest fleet whose slow-trip probability stays under a target.
    Capacity {
        #[command(flatten)]
        run: RunArgs,
        /// Average speed [kph] below which a trip counts as slow.
        #[arg(long)]
        threshold: Option<f64>,
        /// Target slow-trip probability, in (0, 1].
        #[arg(long)]
        target: Option<f64>,
        #[arg(long)]
        n_max: Option<u32>,
    },
    /// Check vehicle arithmetic, cost model and trip distribution against
    /// closed forms and reference figures (all groups when none is given).
    Validate {
        #[arg(long)]
        dist: bool,
        #[arg(long)]
        ev_math: bool,
        #[arg(long)]
        cost: bool,
    },
    /// Write synthetic inputs and example configs.
    GenFixtures {
        /// Output directory.
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        island_seed: u64,
        #[arg(long, default_value_t = 3)]
        network_seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config file (flat key = value).
    config: PathBuf,
    /// Output directory (overrides output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// reservation-aware or reservation-blind.
    #[arg(long)]
    mode: Option<String>,
    /// On-board AC charger limit [kW].
    #[arg(long)]
    onboard_ac: Option<f64>,
    /// Planning reserve state of charge.
    #[arg(long)]
    reserve: Option<f64>,
    /// Fleet sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    n_ev: Option<Vec<u32>>,
    #[arg(long)]
    replicates: Option<u32>,
}

impl RunArgs {
    fn overrides(&self, seed: Option<u64>) -> Result<Overrides, Failure> {
        Ok(Overrides {
            seed,
            n_ev: self.n_ev.clone(),
            replicates: self.replicates,
            mode: self.mode.as_deref().map(parse_mode).transpose().config_err()?,
            onboard_ac_kw: self.onboard_ac,
            reserve_soc: self.reserve,
            output_dir: self.out.clone(),
            ..Overrides::default()
        })
    }
}

fn run_configured(
    name: &str,
    run: &RunArgs,
    ov: Overrides,
    body: impl FnOnce(&config::Resolved, &mut Outputs) -> Result<(), Failure>,
) -> Result<(), Failure> {
    let file = FileConfig::load(&run.config).config_err()?;
    let cfg = config::resolve(&file, &run.config, &ov).config_err()?;
    log::info!("{name}: seed {} -> {}", cfg.seed, cfg.output_dir.display());
    let mut out = Outputs::new(&cfg.output_dir);
    body(&cfg, &mut out)?;
    out.finish(name, Some(&run.config), cfg.seed, &cfg).other_err()
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate {
            run,
            dump_ledger,
            dump_routes,
        } => {
            let ov = run.overrides(cli.seed)?;
            let opts = commands::SimulateOpts { dump_ledger, dump_routes };
            run_configured("simulate", &run, ov, |cfg, out| commands::simulate(cfg, &opts, out))
        }
        Command::Faults {
            run,
            pf_grid,
            masks,
            add_redundancy,
        } => {
            let ov = Overrides {
                p_f_grid: pf_grid,
                masks,
                add_redundancy,
                ..run.overrides(cli.seed)?
            };
            run_configured("faults", &run, ov, commands::faults)
        }
        Command::Capacity {
            run,
            threshold,
            target,
            n_max,
        } => {
            let ov = Overrides {
                threshold_kph: threshold,
                target_p: target,
                n_max,
                ..run.overrides(cli.seed)?
            };
            run_configured("capacity", &run, ov, commands::capacity)
        }
        Command::Validate { dist, ev_math, cost } => {
            let all = !(dist || ev_math || cost);
            let mut checks = Vec::new();
            if all || ev_math {
                checks.extend(validate::ev_math());
            }
            if all || cost {
                checks.extend(validate::cost());
            }
            if all || dist {
                checks.extend(validate::dist());
            }
            validate::print(&checks);
            let failed: Vec<_> = checks
                .iter()
                .filter(|c| c.verdict == validate::Verdict::Fail)
                .map(|c| c.name.as_str())
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::Oracle(failed.join("; ")))
            }
        }
        Command::GenFixtures {
            out,
            island_seed,
            network_seed,
        } => {
            let mut outputs = Outputs::new(&out);
            commands::gen_fixtures(&out, island_seed, network_seed, &mut outputs)?;
            let seeds = serde_json::json!({ "island_seed": island_seed, "network_seed": network_seed });
            outputs.finish("gen-fixtures", None::<&Path>, island_seed, &seeds).other_err()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("chargesim: config error: --threads {n}: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("chargesim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
