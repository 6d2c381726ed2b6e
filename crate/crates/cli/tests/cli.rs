use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_chargesim"));
    c.env_remove("CHARGESIM_SEED").env_remove("RUST_LOG");
    c
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    if !out.status.success() {
        eprintln!("stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn repo_fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// A small scenario over the shipped 3-cell population and 5-point network.
fn tiny_config(dir: &Path, extra: &str) -> PathBuf {
    let f = repo_fixtures();
    let text = format!(
        "population = {:?}\nnetwork = {:?}\noutput_dir = {:?}\nn_ev = [5, 20]\nreplicates = 2\n{extra}",
        f.join("tiny_population.csv"),
        f.join("tiny_network.csv"),
        dir.join("out"),
    );
    let p = dir.join("tiny.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn simulate_writes_metrics_summary_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "seed = 4\n");
    let out = run(bin().args(["simulate", "--dump-ledger", "--dump-routes"]).arg(&cfg));
    assert!(out.status.success());
    let o = dir.path().join("out");
    let metrics = read(o.join("metrics.csv"));
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n_ev,trips,frac_charge,frac_below_60,frac_below_40,frac_below_10,frac_unroutable,mean_speed"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("5,10,"));
    assert!(rows[1].starts_with("20,40,"));

    let summary: serde_json::Value = serde_json::from_str(&read(o.join("summary.json"))).unwrap();
    assert_eq!(summary["seed"], 4);
    assert_eq!(summary["config"]["replicates"], 2);
    let ci = &summary["results"][1]["below"][1];
    assert!(ci["ci_low"].as_f64().unwrap() <= ci["value"].as_f64().unwrap());
    assert!(ci["ci_high"].as_f64().unwrap() >= ci["value"].as_f64().unwrap());

    assert!(read(o.join("ledger.csv")).starts_with("cp_id,ev_id,start_h,end_h\n"));
    let routes = read(o.join("routes.jsonl"));
    assert_eq!(routes.lines().count(), 20);
    for l in routes.lines() {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert!(v["arrival_h"].as_f64().unwrap() >= v["depart_h"].as_f64().unwrap());
    }

    let manifest: serde_json::Value = serde_json::from_str(&read(o.join("manifest.json"))).unwrap();
    assert_eq!(manifest["subcommand"], "simulate");
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 4);
    assert!(manifest["wall_clock_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn seed_precedence_flag_then_file_then_env() {
    let dir = tempfile::tempdir().unwrap();
    let seed_of = |cfg: &Path, flag: Option<&str>, env: Option<&str>| {
        let mut c = bin();
        c.arg("simulate").arg(cfg).args(["--n-ev", "3"]);
        if let Some(f) = flag {
            c.args(["--seed", f]);
        }
        if let Some(e) = env {
            c.env("CHARGESIM_SEED", e);
        }
        assert!(run(&mut c).status.success());
        let m: serde_json::Value =
            serde_json::from_str(&read(dir.path().join("out/manifest.json"))).unwrap();
        m["seed"].as_u64().unwrap()
    };
    let with_seed = tiny_config(dir.path(), "seed = 11\n");
    assert_eq!(seed_of(&with_seed, Some("12"), Some("13")), 12);
    assert_eq!(seed_of(&with_seed, None, Some("13")), 11);
    let without = tiny_config(dir.path(), "");
    assert_eq!(seed_of(&without, None, Some("13")), 13);
    assert_eq!(seed_of(&without, None, None), 0);
}

#[test]
fn exit_codes_for_config_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let code = |c: &mut Command| c.output().unwrap().status.code();

    assert_eq!(code(bin().args(["simulate", "no-such.toml"])), Some(2));

    let bad_key = dir.path().join("bad_key.toml");
    std::fs::write(&bad_key, "netwrok = \"x.csv\"\n").unwrap();
    assert_eq!(code(bin().arg("simulate").arg(&bad_key)), Some(2));

    let cfg = tiny_config(dir.path(), "");
    assert_eq!(code(bin().arg("simulate").arg(&cfg).args(["--mode", "sideways"])), Some(2));
    assert_eq!(code(bin().arg("simulate").arg(&cfg).args(["--reserve", "0.9"])), Some(2));
    assert_eq!(code(bin().arg("capacity").arg(&cfg).args(["--target", "0"])), Some(2));
    assert_eq!(code(bin().arg("faults").arg(&cfg).args(["--pf-grid", "0.1:0.01:log"])), Some(2));
    assert_eq!(code(bin().arg("simulate").arg(&cfg).env("CHARGESIM_SEED", "abc")), Some(2));

    let missing = dir.path().join("missing.toml");
    std::fs::write(&missing, "network = \"nowhere.csv\"\ntrips = \"t.csv\"\n").unwrap();
    assert_eq!(code(bin().arg("simulate").arg(&missing)), Some(3));

    let garbled = dir.path().join("garbled.csv");
    std::fs::write(&garbled, "id,lat,lon,kind,power_kw\na,91,0,DC,50\n").unwrap();
    let cfg = dir.path().join("garbled.toml");
    std::fs::write(&cfg, "network = \"garbled.csv\"\n").unwrap();
    assert_eq!(code(bin().arg("simulate").arg(&cfg)), Some(3));
}

#[test]
fn failed_run_writes_no_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, format!("network = \"nowhere.csv\"\noutput_dir = {:?}\n", dir.path().join("o"))).unwrap();
    assert_eq!(bin().arg("simulate").arg(&cfg).output().unwrap().status.code(), Some(3));
    assert!(!dir.path().join("o/manifest.json").exists());
}

#[test]
fn validate_passes_and_flags_the_long_tail() {
    let out = run(bin().arg("validate"));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(!text.contains("FAIL"), "{text}");
    assert!(text.contains("KNOWN DISCREPANCY"));
    for group in ["--dist", "--ev-math", "--cost"] {
        let out = run(bin().args(["validate", group]));
        assert!(out.status.success(), "{group}");
    }
    let ev = String::from_utf8(run(bin().args(["validate", "--ev-math"])).stdout).unwrap();
    assert!(ev.contains("19.2") && !ev.contains("EUR"));
}

#[test]
fn gen_fixtures_then_fault_and_capacity_runs() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx");
    assert!(run(bin().arg("gen-fixtures").arg("--out").arg(&fx)).status.success());
    for f in ["population.csv", "network.csv", "fault_network.csv", "fault_trips.csv", "faults.toml", "manifest.json"] {
        assert!(fx.join(f).exists(), "{f}");
    }
    assert!(read(fx.join("population.csv")).starts_with("lat,lon,population\n"));
    assert!(read(fx.join("network.csv")).starts_with("id,lat,lon,kind,power_kw\n"));

    let out_dir = dir.path().join("faults");
    let out = run(bin()
        .arg("faults")
        .arg(fx.join("faults.toml"))
        .args(["--masks", "200", "--pf-grid", "0.01:0.30:log", "--reserve", "0.28", "--out"])
        .arg(&out_dir));
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("unroutable fraction: 0.14"));
    let csv = read(out_dir.join("faults.csv"));
    assert!(csv.starts_with("p_f,trips,needed_charge,stranded,unroutable,p_s,ci_low,ci_high\n"));
    assert_eq!(csv.lines().count(), 9);
    let summary: serde_json::Value = serde_json::from_str(&read(out_dir.join("faults_summary.json"))).unwrap();
    assert_eq!(summary["results"]["unroutable"], 4);

    let red = dir.path().join("red");
    assert!(run(bin()
        .arg("faults")
        .arg(fx.join("faults.toml"))
        .args(["--masks", "50", "--pf-grid", "0.1", "--add-redundancy", "isolated:18.7", "--out"])
        .arg(&red))
    .status
    .success());
    let summary: serde_json::Value = serde_json::from_str(&read(red.join("faults_summary.json"))).unwrap();
    assert_eq!(summary["results"]["charge_points"], 16);
    assert_eq!(summary["results"]["added_points"].as_array().unwrap().len(), 2);

    let cap = dir.path().join("cap");
    assert!(run(bin().arg("capacity").arg(fx.join("saturation.toml")).arg("--out").arg(&cap)).status.success());
    let report: serde_json::Value = serde_json::from_str(&read(cap.join("capacity.json"))).unwrap();
    assert_eq!(report["results"]["capacity"], 1);
    assert!(read(cap.join("capacity_probes.csv")).starts_with("n_ev,trips,below,upper_ci,pass\n"));
}

#[test]
fn onboard_ac_limit_slows_ac_charged_trips() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx");
    assert!(run(bin().arg("gen-fixtures").arg("--out").arg(&fx)).status.success());
    let speed = |ac: &str| {
        let o = dir.path().join(format!("ac{ac}"));
        assert!(run(bin()
            .arg("simulate")
            .arg(fx.join("saturation.toml"))
            .args(["--n-ev", "1", "--replicates", "1", "--onboard-ac", ac, "--out"])
            .arg(&o))
        .status
        .success());
        let m = read(o.join("metrics.csv"));
        let row = m.lines().nth(1).unwrap().to_string();
        row.rsplit(',').next().unwrap().parse::<f64>().unwrap()
    };
    let (slow, fast) = (speed("6.6"), speed("22"));
    assert!(slow < fast, "{slow} {fast}");
}

#[test]
fn threads_flag_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "seed = 2\n");
    let metrics = |threads: &str| {
        assert!(run(bin().args(["--threads", threads, "simulate", "--replicates", "3"]).arg(&cfg)).status.success());
        read(dir.path().join("out/metrics.csv"))
    };
    assert_eq!(metrics("1"), metrics("3"));
}
