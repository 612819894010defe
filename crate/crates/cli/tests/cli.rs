use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
[run]
seed = 11

[synthetic]
first_year = 1750
last_year = 2006
n_proxies = 8
n_local = 4

[windows]
reconstruction = "1750-1849"

[harness]
models = ["intercept", "lasso_proxies"]
envelope_reps = 1
cv_reps = 1
cv_folds = 5
cv_grid = 10
block_len = 40

[null_bench]
pairs = 100
pvalue_reps = 2

[bayes]
n_pcs = 4
iters = 600
burnin = 200
validate_reps = 4
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_proxyrecon"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn cv_smoke_on_synthetic_world() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let o = run(&["cv"], &cfg, &out);
    assert!(o.status.success(), "{}", stderr(&o));

    let csv = fs::read_to_string(out.join("cv_blocks.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("spec,block_start,rmse"));
    // 149 years in 40-year blocks: 110 blocks per model
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2 * 110);
    assert!(rows.iter().all(|r| r.split(',').nth(2).unwrap().parse::<f64>().unwrap() > 0.0));
    for f in ["cv_blocks.svg", "cv_rmse_by_block.svg", "cv_envelope.csv", "cv_summary.json", "manifest.txt"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let svg = fs::read_to_string(out.join("cv_blocks.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("# seed: 11") && manifest.contains("cv_blocks.csv"));
}

#[test]
fn same_seed_gives_identical_csv_at_any_worker_count() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&["cv", "--workers", "1"], &cfg, &a).status.success());
    assert!(run(&["cv", "--workers", "3"], &cfg, &b).status.success());
    for f in ["cv_blocks.csv", "cv_envelope.csv", "cv_blocks.svg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let c = tmp.path().join("c");
    assert!(run(&["cv", "--seed", "12"], &cfg, &c).status.success());
    assert_ne!(fs::read(a.join("cv_envelope.csv")).unwrap(), fs::read(c.join("cv_envelope.csv")).unwrap());
}

#[test]
fn manifest_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let a = tmp.path().join("a");
    assert!(run(&["cv", "--seed", "5", "--block-len", "50"], &cfg, &a).status.success());
    let manifest = tmp.path().join("manifest.toml");
    fs::copy(a.join("manifest_cv.txt"), &manifest).unwrap();
    let b = tmp.path().join("b");
    let o = run(&["cv"], &manifest, &b);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(a.join("cv_blocks.csv")).unwrap(), fs::read(b.join("cv_blocks.csv")).unwrap());
}

#[test]
fn report_names_the_missing_artifact() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    assert!(run(&["ingest"], &cfg, &out).status.success());
    let o = run(&["report"], &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cv_summary.json"), "{}", stderr(&o));
}

#[test]
fn full_pipeline_then_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    for cmd in ["ingest", "cv", "null-bench", "zoo-backcast", "bayes-fit", "bayes-backcast", "bayes-validate", "events", "report"] {
        let o = run(&[cmd], &cfg, &out);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["zoo_backcast"]["models"].as_array().unwrap().len(), 27);
    let p = report["events"]["table"]["p_warmest_year"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert!(fs::read_to_string(out.join("report.md")).unwrap().starts_with("# Reconstruction report"));
}

#[test]
fn config_errors_exit_1() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let unknown = write_config(tmp.path(), "[harness]\nblock_length = 30\n");
    assert_eq!(run(&["cv"], &unknown, &out).status.code(), Some(1));

    let missing = write_config(tmp.path(), "[data]\ntemperature = \"t.csv\"\nproxies = \"p.csv\"\n");
    let o = run(&["ingest"], &missing, &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("t.csv"));

    let ok = write_config(tmp.path(), SMALL);
    assert_eq!(run(&["cv", "--scoring", "half"], &ok, &out).status.code(), Some(1));
    assert_eq!(run(&["cv", "--null", "pink"], &ok, &out).status.code(), Some(1));
    assert_eq!(run(&["cv", "--block-len", "20", "--scoring", "middle20"], &ok, &out).status.code(), Some(1));
    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(1));
}

#[test]
fn malformed_data_exits_2_and_inputs_are_untouched() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    assert!(bin().args(["synth", "--seed", "2", "--out"]).arg(&data).output().unwrap().status.success());
    let proxies = fs::read_to_string(data.join("proxies.csv")).unwrap();
    let mut lines: Vec<String> = proxies.lines().map(String::from).collect();
    let (year, rest) = lines[3].split_once(',').unwrap();
    lines[3] = format!("{year},oops{rest}");
    let broken: String = lines.iter().map(|l| format!("{l}\n")).collect();
    fs::write(data.join("broken.csv"), &broken).unwrap();
    let body = "[data]\ntemperature = \"temperature.csv\"\nproxies = \"broken.csv\"\n";
    let cfg = data.join("broken.toml");
    fs::write(&cfg, body).unwrap();
    let o = run(&["ingest"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(data.join("broken.csv")).unwrap(), broken);

    let good = data.join("good.toml");
    fs::write(&good, "[data]\ntemperature = \"temperature.csv\"\nproxies = \"proxies.csv\"\n").unwrap();
    assert!(run(&["ingest"], &good, &tmp.path().join("out2")).status.success());
    assert_eq!(fs::read_to_string(data.join("proxies.csv")).unwrap(), proxies);
}
