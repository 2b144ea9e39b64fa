//! End-to-end runs of the `damage-sim` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_damage-sim"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Every file below `dir`, keyed by relative path.
fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Writes `preset` as a scenario file with some keys replaced.
fn small_config(dir: &Path, preset: &str, edits: &[(&str, &str)]) -> PathBuf {
    let out = run(&["print-preset", preset]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let mut text = String::from_utf8(out.stdout).unwrap();
    for (key, value) in edits {
        let prefix = format!("{key} = ");
        let line = text.lines().find(|l| l.starts_with(&prefix)).unwrap_or_else(|| panic!("no key {key}")).to_string();
        text = text.replacen(&line, &format!("{prefix}{value}"), 1);
    }
    let path = dir.join(format!("{preset}.toml"));
    fs::write(&path, text).unwrap();
    path
}

fn csv_column(path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    r.records().map(|rec| rec.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn zero_data_weak_run_has_zero_slacks() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let res = run(&["--preset", "zero_data", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    for col in ["edi_slack", "uedi_slack", "E", "D_cum", "work"] {
        assert!(csv_column(&out.join("energies.csv"), col).iter().all(|v| *v == 0.0), "{col}");
    }
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["schema_version"], 1);
    assert_eq!(manifest["mode"], "weak");
    assert!(manifest.get("wall_seconds").is_none());
}

#[test]
fn manifest_lists_every_file_with_its_length() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let res = run(&["--preset", "smooth_strong", "--out", out.to_str().unwrap(), "--record-timing"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let manifest = json(&out.join("manifest.json"));
    assert!(manifest["wall_seconds"].as_f64().unwrap() >= 0.0);
    let files = manifest["files"].as_array().unwrap();
    let on_disk = tree(&out);
    assert_eq!(files.len() + 1, on_disk.len());
    for f in files {
        let bytes = &on_disk[Path::new(f["path"].as_str().unwrap())];
        assert_eq!(bytes.len() as u64, f["bytes"].as_u64().unwrap());
    }
    for name in ["monitor.json", "report.json", "energies.csv", "times.csv"] {
        assert!(files.iter().any(|f| f["path"] == name), "{name}");
    }
    let times = csv::Reader::from_path(out.join("times.csv")).unwrap().records().count();
    assert_eq!(times, 41);
}

#[test]
fn written_values_read_back_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "quadratic", &[("nodes", "31"), ("steps", "30")]);
    let out = tmp.path().join("run");
    let res = run(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let report = json(&out.join("report.json"));
    let from_json: Vec<f64> = report["edi"]["slack"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let from_csv = csv_column(&out.join("energies.csv"), "edi_slack");
    assert_eq!(from_json.len(), 31);
    for (a, b) in from_json.iter().zip(&from_csv) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    let config: Value = json(&out.join("config.json"));
    assert_eq!(config["nodes"], 31);
}

#[test]
fn identical_configs_give_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "logarithmic", &[("nodes", "41"), ("steps", "40")]);
    let runs = [
        vec!["--config", cfg.to_str().unwrap()],
        vec!["--preset", "smooth_strong"],
        vec!["--preset", "compare"],
        vec!["--preset", "indicator_box", "--mode", "regularize-demo"],
        vec!["--preset", "zero_data", "--mode", "eigs"],
        vec!["--preset", "robin_loaded", "--mode", "validate"],
    ];
    for (i, args) in runs.iter().enumerate() {
        let a = tmp.path().join(format!("a{i}"));
        let b = tmp.path().join(format!("b{i}"));
        for dir in [&a, &b] {
            let mut full = args.clone();
            full.extend(["--out", dir.to_str().unwrap()]);
            let res = run(&full);
            assert_eq!(code(&res), 0, "{args:?}: {}", stderr(&res));
        }
        let (ta, tb) = (tree(&a), tree(&b));
        assert!(ta.len() > 2);
        assert_eq!(ta, tb, "{args:?}");
    }
}

#[test]
fn exit_codes_separate_errors_from_failed_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let out = |name: &str| tmp.path().join(name).to_str().unwrap().to_string();

    let res = run(&["--preset", "indicator_box", "--mode", "validate", "--out", &out("ok")]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let v = json(&tmp.path().join("ok/validation.json"));
    assert_eq!(v["hypothesis1"], true);

    // a ≡ 1 does not vanish on the negative axis.
    let res = run(&["--preset", "linear_regime", "--mode", "validate", "--out", &out("fail")]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("a_vanishes_nonpositive"));
    let manifest = json(&tmp.path().join("fail/manifest.json"));
    assert_eq!(manifest["exit_status"], 2);

    // Robin data is rejected by the strong scheme.
    let res = run(&["--preset", "robin_loaded", "--mode", "strong", "--out", &out("err")]);
    assert_eq!(code(&res), 1);
    let manifest = json(&tmp.path().join("err/manifest.json"));
    assert!(manifest["error"].as_str().unwrap().contains("Neumann"));

    let res = run(&["--preset", "nope", "--out", &out("x")]);
    assert_eq!(code(&res), 1);
    let res = run(&["--preset", "zero_data"]);
    assert_eq!(code(&res), 1);
    let res = run(&["--preset", "zero_data", "--mode", "sideways", "--out", &out("y")]);
    assert_eq!(code(&res), 1);
}

#[test]
fn malformed_config_reports_the_key_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "quadratic", &[("steps", "\"many\"")]);
    let res = run(&["--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&res), 1);
    assert!(stderr(&res).contains("`steps`"), "{}", stderr(&res));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "nodes = 11\nfinal_time = 1.0\nsteps = 4\n[material]\na = \"quadratic_plus\"\nb = 1.0\nC = 1.0\nzeta = 3.0\n").unwrap();
    let res = run(&["--config", bad.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&res), 1);
    assert!(stderr(&res).contains("material"), "{}", stderr(&res));
}

#[test]
fn overrides_and_seed_enter_the_config_echo_and_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let base = tmp.path().join("base");
    let tuned = tmp.path().join("tuned");
    assert_eq!(code(&run(&["--preset", "zero_data", "--out", base.to_str().unwrap()])), 0);
    let res = run(&[
        "--preset",
        "zero_data",
        "--out",
        tuned.to_str().unwrap(),
        "--tol-override",
        "inner=1e-12",
        "--tol-override",
        "vi=1e-8",
        "--seed",
        "7",
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let cfg = json(&tuned.join("config.json"));
    assert_eq!(cfg["tolerances"]["inner"], 1e-12);
    assert_eq!(cfg["tolerances"]["vi"], 1e-8);
    assert_eq!(cfg["seed"], 7);
    assert_ne!(json(&base.join("manifest.json"))["config_hash"], json(&tuned.join("manifest.json"))["config_hash"]);
    let res = run(&["--preset", "zero_data", "--out", tuned.to_str().unwrap(), "--tol-override", "inner=-1"]);
    assert_eq!(code(&res), 1);
}

#[test]
fn printed_presets_reproduce_the_preset_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "smooth_strong", &[]);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(code(&run(&["--preset", "smooth_strong", "--out", a.to_str().unwrap()])), 0);
    assert_eq!(code(&run(&["--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()])), 0);
    assert_eq!(tree(&a), tree(&b));
}

#[test]
fn compare_mode_reports_sup_relative_energy() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cmp");
    let res = run(&["--preset", "compare", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let report = json(&out.join("report.json"));
    let sup = report["sup_r"].as_f64().unwrap();
    let r = csv_column(&out.join("relative.csv"), "R");
    assert_eq!(r.iter().copied().fold(0.0, f64::max), sup);
    assert!(sup > 0.0 && sup < 1e-3);
    assert_eq!(report["reference_kind"], "strong");
    assert_eq!(report["reference_nodes"], 81);
}

#[test]
fn regularize_demo_honours_the_delta_ladder() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("rd");
    let res = run(&["--preset", "quadratic", "--mode", "regularize-demo", "--delta", "0.3", "--delta", "0.15", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let deltas = csv_column(&out.join("regularization.csv"), "delta");
    assert_eq!(deltas.len(), 2 * 2 * 401);
    assert!(deltas.iter().all(|d| *d == 0.3 || *d == 0.15));
}

#[test]
fn sweep_runs_each_config_and_returns_the_worst_status() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = small_config(tmp.path(), "zero_data", &[]);
    let fail = small_config(tmp.path(), "linear_regime", &[]);
    let out = tmp.path().join("sweep");
    let res = bin()
        .env("DAMAGE_SIM_THREADS", "2")
        .args(["sweep", "--out", out.to_str().unwrap(), "--arg=--mode", "--arg=validate"])
        .arg(&ok)
        .arg(&fail)
        .output()
        .unwrap();
    assert_eq!(code(&res), 2, "{}", stderr(&res));
    assert_eq!(json(&out.join("zero_data/manifest.json"))["exit_status"], 0);
    assert_eq!(json(&out.join("linear_regime/manifest.json"))["exit_status"], 2);
}
