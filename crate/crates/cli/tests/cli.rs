use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lambda-ou"));
    c.env_remove("LAMBDA_OU_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Header row and data rows, after the comment lines.
fn table(o: &Output) -> (Vec<String>, Vec<Vec<String>>) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(o);
    let mut lines = text.lines().skip_while(|l| l.starts_with('#'));
    let header = lines.next().expect("header row").split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn error_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8(o.stderr.clone()).unwrap();
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

fn tmp(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

#[test]
fn cf_of_bolthausen_sznitman_matches_gamma_ratio() {
    // Γ(1+i)/Γ(1+i/e), evaluated with mpmath at 30 digits.
    let (re, im) = (0.576933902882281_f64, -0.0625319026040845_f64);
    let o = run(&["cf", "--measure", "beta:1,1", "--t", "1", "--x", "1"]);
    let (header, rows) = table(&o);
    assert_eq!(header, ["x", "re", "im", "abs"]);
    assert_eq!(rows.len(), 1);
    let v: Vec<f64> = rows[0].iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(v[0], 1.0);
    assert!((v[1] - re).abs() < 1e-13, "{}", v[1]);
    assert!((v[2] - im).abs() < 1e-13, "{}", v[2]);
    assert!((v[3] - re.hypot(im)).abs() < 1e-13);
}

#[test]
fn simulate_from_one_block_has_no_events() {
    let o = run(&["simulate", "--measure", "beta:1,1", "--n", "1", "--times", "5", "--events"]);
    let (header, rows) = table(&o);
    assert_eq!(header, ["replicate", "t", "state"]);
    assert!(rows.is_empty());
}

#[test]
fn simulate_scaled_columns() {
    let o = run(&["simulate", "--measure", "beta:1,1", "--n", "50", "--times", "0,1", "--replicates", "3", "--seed", "9"]);
    let (header, rows) = table(&o);
    assert_eq!(header, ["replicate", "t", "raw_state", "scaled_value"]);
    assert_eq!(rows.len(), 6);
    for r in rows.iter().filter(|r| r[1] == "0.0") {
        assert_eq!(r[2], "50");
        assert_eq!(r[3].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn duality_gap_within_bound() {
    let o = run(&["duality", "--n", "10", "--m", "10", "--t", "0.5", "--measure", "beta:1,1", "--cap", "2000"]);
    let (header, rows) = table(&o);
    let col = |name: &str| -> f64 {
        let i = header.iter().position(|h| h == name).unwrap();
        rows[0][i].parse().unwrap()
    };
    assert!(col("gap") <= col("bound") + 1e-8);
    assert!(col("lhs_lower") <= col("lhs_upper"));
}

#[test]
fn rates_match_lambda_formula() {
    let o = run(&["rates", "--measure", "beta:1,1", "--k-max", "6"]);
    let (header, rows) = table(&o);
    assert_eq!(header, ["k", "j", "rate", "method", "rel_gap"]);
    assert_eq!(rows.len(), (2..=6).map(|k| k - 1).sum::<usize>());
    for r in &rows {
        let k: f64 = r[0].parse().unwrap();
        let j: f64 = r[1].parse().unwrap();
        let rate: f64 = r[2].parse().unwrap();
        let want = k / ((k - j) * (k - j + 1.0));
        assert!((rate - want).abs() <= 1e-13 * want);
        assert_eq!(r[3], "closed");
        assert!(r[4].parse::<f64>().unwrap() < 1e-10);
    }
    let o = run(&["rates", "--measure", "beta:1,1", "--kind", "fixation", "--k", "3", "--span", "4"]);
    let (_, rows) = table(&o);
    assert_eq!(rows.len(), 4);
    for (l, r) in rows.iter().enumerate() {
        let l = (l + 1) as f64;
        let rate: f64 = r[2].parse().unwrap();
        assert!((rate - 3.0 / (l * (l + 1.0))).abs() < 1e-13);
    }
}

#[test]
fn cdi_partial_sums() {
    let o = run(&["cdi", "--measure", "beta:1,1", "--k-max", "4"]);
    let (_, rows) = table(&o);
    // η_k = k H_{k−1} for the uniform measure.
    let eta = [2.0, 4.5, 22.0 / 3.0];
    let mut s = 0.0;
    for (r, e) in rows.iter().zip(eta) {
        s += 1.0 / e;
        assert!((r[1].parse::<f64>().unwrap() - e).abs() < 1e-13);
        assert!((r[2].parse::<f64>().unwrap() - s).abs() < 1e-13);
    }
}

#[test]
fn converge_rows_cover_grid() {
    let o = run(&["converge", "--measure", "beta:1,1", "--k", "10,100", "--x-min", "-1", "--x-max", "1", "--x-step", "1"]);
    let (header, rows) = table(&o);
    assert_eq!(header, ["k", "x", "gap"]);
    assert_eq!(rows.len(), 6);
    let sup = |k: &str| rows.iter().filter(|r| r[0] == k).map(|r| r[2].parse::<f64>().unwrap()).fold(0.0, f64::max);
    assert!(sup("100") < sup("10"));
}

#[test]
fn stationary_cdf_of_bolthausen_sznitman() {
    // −X_∞ is standard Gumbel, so P(X_∞ ≤ x) = 1 − exp(−e^{x}).
    let o = run(&["stationary", "--measure", "beta:1,1", "--x-min", "-2", "--x-max", "2", "--x-step", "1"]);
    let (header, rows) = table(&o);
    assert_eq!(header, ["x", "cdf", "error"]);
    for r in rows {
        let x: f64 = r[0].parse().unwrap();
        let f: f64 = r[1].parse().unwrap();
        assert!((f - (1.0 - (-x.exp()).exp())).abs() < 1e-7, "x = {x}");
    }
}

#[test]
fn every_csv_starts_with_comment() {
    for args in [
        &["rates", "--measure", "lebesgue:2", "--k-max", "3"][..],
        &["cf", "--measure", "beta:1,2", "--x", "0.5", "--kind", "Y"][..],
        &["cdi", "--measure", "atom:0.5,1", "--k-max", "3"][..],
    ] {
        let o = run(args);
        assert!(o.status.success());
        let text = stdout(&o);
        let first = text.lines().next().unwrap();
        assert!(first.starts_with("# "), "{args:?}: {first}");
        assert!(text.contains("units") || text.contains("dimensionless"), "{args:?}");
    }
}

#[test]
fn output_independent_of_thread_count() {
    let args = ["simulate", "--measure", "beta:1.5,0.5", "--b", "0.5", "--n", "200", "--times", "0.5,1,2", "--replicates", "40", "--seed", "11"];
    let one = bin().args(args).args(["--threads", "1"]).output().unwrap();
    let many = bin().args(args).env("LAMBDA_OU_THREADS", "4").output().unwrap();
    assert!(one.status.success());
    assert_eq!(one.stdout, many.stdout);
    let again = bin().args(args).args(["--threads", "3"]).output().unwrap();
    assert_eq!(one.stdout, again.stdout);
}

#[test]
fn out_flag_writes_file() {
    let path = tmp("rates_out.csv");
    let o = run(&["rates", "--measure", "beta:2,2", "--k", "3", "--out", path.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 3);
}

#[test]
fn measure_from_json_file() {
    let path = tmp("measure.json");
    std::fs::write(&path, r#"{"kind": "beta", "a": 1.0, "b": 1.0}"#).unwrap();
    let at = format!("@{}", path.display());
    let a = run(&["cf", "--measure", &at, "--x", "1,2"]);
    let b = run(&["cf", "--measure", "beta:1,1", "--x", "1,2"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn run_config_matches_flags() {
    let path = tmp("cf_config.json");
    std::fs::write(
        &path,
        r#"{"subcommand": "cf", "measure": {"kind": "beta", "a": 1.0, "b": 2.0},
            "tolerances": {"tol": 1e-12}, "args": {"t": 0.5, "x": [0.5, 1.0], "kind": "X"}}"#,
    )
    .unwrap();
    let a = run(&["run", "--config", path.to_str().unwrap()]);
    let b = run(&["cf", "--measure", "beta:1,2", "--t", "0.5", "--x", "0.5,1"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn run_config_rejects_unknown_keys() {
    let path = tmp("bad_config.json");
    std::fs::write(&path, r#"{"subcommand": "cf", "measure": "beta:1,1", "colour": "red"}"#).unwrap();
    let o = run(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_json(&o)["error"], "usage");

    std::fs::write(&path, r#"{"subcommand": "cf", "measure": "beta:1,1", "args": {"colour": 1}}"#).unwrap();
    let o = run(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn validation_errors_exit_one_with_json() {
    let o = run(&["cf", "--measure", "beta:0.5,1", "--x", "1"]);
    assert_eq!(o.status.code(), Some(1));
    let e = error_json(&o);
    assert_eq!(e["error"], "config");
    assert_eq!(e["exit_code"], 1);

    let o = run(&["rates", "--measure", "beta:-1,1"]);
    assert_eq!(o.status.code(), Some(1));
    error_json(&o);

    let o = run(&["simulate", "--measure", "beta:1,1", "--n", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_json(&o)["error"], "domain");
}

#[test]
fn numeric_failures_exit_two() {
    let o = run(&["duality", "--n", "10", "--m", "10", "--t", "0.5", "--measure", "beta:1,1", "--cap", "20", "--tol", "1e-12"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "cap_too_small");
}

#[test]
fn help_exits_zero() {
    let o = run(&["--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for sub in ["rates", "simulate", "cf", "stationary", "converge", "duality", "cdi", "selftest"] {
        assert!(text.contains(sub), "{sub}");
    }
}
