use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_vif-ancova");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn run_with_threads(args: &[&str], threads: usize) -> Output {
    Command::new(BIN)
        .args(args)
        .env("RAYON_NUM_THREADS", threads.to_string())
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn parse(o: &Output) -> toml::Table {
    stdout(o).parse::<toml::Table>().expect("report is TOML")
}

fn section<'a>(doc: &'a toml::Table, path: &str) -> &'a toml::Table {
    let mut t = doc;
    for key in path.split('.') {
        t = t[key].as_table().unwrap_or_else(|| panic!("missing section {path}"));
    }
    t
}

fn float(t: &toml::Table, key: &str) -> f64 {
    match &t[key] {
        toml::Value::Float(f) => *f,
        toml::Value::Integer(i) => *i as f64,
        v => panic!("{key} is {v:?}"),
    }
}

const SMALL: &str = r#"
seed = 5

[dgp]
n = 60
tau = 1.0
beta = [1.0, 0.5]

[design]
kind = "complete"
n1 = 30

[replications]
r = 10000
r_outer = 100
r_inner = 100
candidates = 200
"#;

#[test]
fn table1_default_passes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["table1", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("9/9 cells pass"));
    let text = fs::read_to_string(dir.path().join("table1.txt")).unwrap();
    let doc: toml::Table = text.parse().unwrap();
    assert_eq!(section(&doc, "summary")["all_pass"].as_bool(), Some(true));
    assert!(dir.path().join("resolved_config.toml").exists());
}

#[test]
fn table1_invalid_n1_is_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "bad.toml", &SMALL.replace("n1 = 30", "n1 = 0"));
    let o = run(&["table1", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("design.n1"), "{}", stderr(&o));
}

#[test]
fn table1_without_covariate_signal_is_degenerate() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "zero.toml",
        &SMALL.replace("beta = [1.0, 0.5]", "beta = [0.0, 0.0]"),
    );
    let o = run(&["table1", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("degenerate"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "typo.toml", &SMALL.replace("r = 10000", "rr = 10000"));
    let o = run(&["table1", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn vif_hand_example() {
    let dir = TempDir::new().unwrap();
    let data = write(
        dir.path(),
        "hand.csv",
        "y,z,x_1\n1.0,1,1\n2.0,1,0\n0.5,0,0\n0.3,0,-1\n",
    );
    let o = run(&["vif", "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = parse(&o);
    let v = section(&doc, "vif");
    assert!((float(v, "vif") - 2.0).abs() < 1e-10);
    assert!((float(v, "r_squared_z_given_x") - 0.5).abs() < 1e-10);
}

#[test]
fn vif_orthogonal_covariate_is_one() {
    let dir = TempDir::new().unwrap();
    let data = write(
        dir.path(),
        "orth.csv",
        "y,z,x_1\n1.0,1,1\n2.0,1,-1\n0.5,0,1\n0.3,0,-1\n",
    );
    let o = run(&["vif", "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = parse(&o);
    assert!((float(section(&doc, "vif"), "vif") - 1.0).abs() < 1e-12);
}

#[test]
fn vif_constant_treatment_is_numerical_error() {
    let dir = TempDir::new().unwrap();
    let data = write(dir.path(), "const.csv", "y,z,x_1\n1,1,1\n2,1,2\n3,1,3\n4,1,5\n");
    let o = run(&["vif", "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn vif_malformed_csv_is_config_error() {
    let dir = TempDir::new().unwrap();
    let data = write(dir.path(), "bad.csv", "y,z,x_1\n1,1,abc\n2,0,1\n");
    let o = run(&["vif", "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn vif_without_data_is_usage_error() {
    let o = run(&["vif"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_conditional_on_z_reports_frozen_assignment() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "s.toml", SMALL);
    let o = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--regime",
        "conditional-z",
        "--freeze-from",
        "candidates:200",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = parse(&o);
    assert_eq!(section(&doc, "frozen")["candidates"].as_integer(), Some(200));
    let frozen = section(&doc, "regime.conditional_on_z");
    let z = frozen["frozen_assignment"].as_str().unwrap();
    assert_eq!(z.len(), 60);
    assert_eq!(z.chars().filter(|&c| c == '1').count(), 30);
    assert_eq!(frozen["imbalance"].as_array().unwrap().len(), 2);
    let ancova = section(&doc, "regime.conditional_on_z.estimators.ancova");
    let bias = float(ancova, "mean") - 1.0;
    assert!(bias.abs() < 4.0 * float(ancova, "se_mean") + 1e-9);
}

#[test]
fn simulate_enumeration_is_exact() {
    let cfg = configs().join("enumeration_n8.toml");
    let o = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--regime",
        "conditional-eps",
        "--enumerate",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = parse(&o);
    let r = section(&doc, "regime.conditional_on_eps");
    assert_eq!(r["exact"].as_bool(), Some(true));
    assert_eq!(r["replications"].as_integer(), Some(70));
    let u = section(&doc, "regime.conditional_on_eps.estimators.unadjusted");
    assert!((float(u, "mean") - 1.0).abs() < 1e-12);
    assert!((float(u, "variance") - float(u, "analytic_variance")).abs() < 1e-10);
}

#[test]
fn simulate_enumeration_refused_when_too_large() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "s.toml", SMALL);
    let o = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--regime",
        "conditional-eps",
        "--enumerate",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn simulate_without_regime_prints_usage() {
    let o = run(&["simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage: simulate"), "{}", stderr(&o));
}

#[test]
fn simulate_decomposition_reports_both_sides() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "s.toml", SMALL);
    let o = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--regime",
        "decomposition-z",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = parse(&o);
    let d = section(&doc, "decomposition.on_z.unadjusted");
    let sum = float(d, "mean_inner_variance") + float(d, "variance_of_inner_mean");
    let gap = float(d, "outer_variance") - sum;
    assert!((gap - float(d, "gap")).abs() < 1e-10);
    assert!(gap.abs() <= 5.0 * float(d, "se_gap"), "{gap}");
    assert_eq!(d["gap_within_band"].as_bool(), Some(true));
}

#[test]
fn rerand_huge_threshold_accepts_first_draw() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "r.toml",
        &SMALL.replace("kind = \"complete\"", "kind = \"rerandomized\"\nthreshold_a = 1e12"),
    );
    let o = run(&["rerand", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = parse(&o);
    assert_eq!(section(&doc, "rerand")["attempts_used"].as_integer(), Some(1));
}

#[test]
fn rerand_hand_example_balances_exactly() {
    let cfg = configs().join("rerand_hand.toml");
    for seed in ["1", "2", "3", "4"] {
        let o = run(&["rerand", "--config", cfg.to_str().unwrap(), "--seed", seed]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let doc = parse(&o);
        let r = section(&doc, "rerand");
        assert_eq!(float(r, "balance"), 0.0);
        let dx = r["imbalance"].as_array().unwrap()[0].as_float().unwrap();
        assert_eq!(dx, 0.0);
        let z = r["assignment"].as_str().unwrap();
        assert!(z != "1100" && z != "0011", "{z}");
    }
}

#[test]
fn rerand_infeasible_threshold_fails_with_smallest_balance() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "r.toml",
        &SMALL.replace(
            "kind = \"complete\"",
            "kind = \"rerandomized\"\nthreshold_a = 1e-9\nmax_attempts = 50",
        ),
    );
    let o = run(&["rerand", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("50"), "{}", stderr(&o));
}

#[test]
fn rerand_requires_rerandomized_design() {
    let o = run(&["rerand"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runs_are_byte_identical_across_threads() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "s.toml", SMALL);
    let args = ["table1", "--config", cfg.to_str().unwrap()];
    let a = run_with_threads(&args, 1);
    let b = run_with_threads(&args, 4);
    let c = run_with_threads(&args, 4);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(b.stdout, c.stdout);
}

#[test]
fn seed_override_changes_output() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "s.toml", SMALL);
    let a = run(&["simulate", "--config", cfg.to_str().unwrap(), "--regime", "unconditional"]);
    let b = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--regime",
        "unconditional",
        "--seed",
        "6",
    ]);
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let cfg = write(dir.path(), "s.toml", SMALL);
    let o = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--regime",
        "conditional-eps",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let echoed = first.join("resolved_config.toml");
    let o = run(&[
        "simulate",
        "--config",
        echoed.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let a = fs::read(first.join("simulate.txt")).unwrap();
    let b = fs::read(second.join("simulate.txt")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn csv_output_matches_text_values() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "s.toml", SMALL);
    let base = ["simulate", "--config", cfg.to_str().unwrap(), "--regime", "unconditional"];
    let text = run(&base);
    let mut csv_args = base.to_vec();
    csv_args.extend(["--format", "csv"]);
    let csv = run(&csv_args);
    assert_eq!(csv.status.code(), Some(0), "{}", stderr(&csv));
    let doc = parse(&text);
    let ancova = section(&doc, "regime.unconditional.estimators.ancova");
    let mut reader = csv::Reader::from_reader(csv.stdout.as_slice());
    let headers = reader.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>(),
        ["regime", "estimator", "statistic", "value"]
    );
    let mut found = 0;
    for row in reader.records() {
        let row = row.unwrap();
        if &row[0] == "unconditional" && &row[1] == "ancova" {
            let value: f64 = row[3].parse().unwrap();
            let expected = float(ancova, &row[2]);
            assert!((value - expected).abs() <= 1e-11 * expected.abs().max(1.0), "{}", &row[2]);
            found += 1;
        }
    }
    assert!(found >= 2);
}
