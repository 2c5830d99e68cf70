use std::f64::consts::LN_2;
use std::fs;

use ksat::cavity::read_snapshot;
use ksat::cli::{run, Outcome};
use serde_json::Value;

fn ksat(args: &[&str]) -> Outcome {
    run(std::iter::once("ksat").chain(args.iter().copied()))
}

fn json(out: &Outcome) -> Value {
    serde_json::from_str(&out.stdout).unwrap_or_else(|e| panic!("bad json ({e}): {}", out.stdout))
}

#[test]
fn regions_reports_all_conditions() {
    let out = ksat(&["regions", "--p", "3", "--alpha", "0.05", "--beta", "1"]);
    assert_eq!(out.code, 0);
    let report = &json(&out)["report"];
    assert!((report["pure_state"]["lhs"].as_f64().unwrap() - 0.3).abs() < 1e-12);
    assert!((report["contraction"]["lhs"].as_f64().unwrap() - 0.2577).abs() < 1e-4);
    assert_eq!(report["contraction"]["pass"], true);
}

#[test]
fn regions_grid_is_csv() {
    let out = ksat(&["regions", "--grid", "--p-min", "2", "--p-max", "3", "--alpha-points", "5", "--beta-min", "0.5", "--beta-max", "1", "--beta-step", "0.5"]);
    assert_eq!(out.code, 0);
    let lines: Vec<&str> = out.stdout.lines().collect();
    assert!(lines[0].starts_with("p,alpha,beta"));
    assert_eq!(lines.len(), 1 + 2 * 5 * 2);
}

#[test]
fn overlap_at_infinite_temperature() {
    let out = ksat(&["overlap", "--beta", "0", "--n", "10", "--n-disorder", "20"]);
    assert_eq!(out.code, 0);
    assert_eq!(json(&out)["gap"].as_f64().unwrap(), 0.1);
}

#[test]
fn exact_at_infinite_temperature() {
    let out = ksat(&["exact", "--beta", "0", "--n", "8", "--n-disorder", "20"]);
    assert_eq!(out.code, 0);
    let doc = json(&out);
    assert_eq!(doc["value"].as_f64().unwrap(), LN_2);
    assert_eq!(doc["std_error"].as_f64().unwrap(), 0.0);
}

#[test]
fn exact_writes_records() {
    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("records.csv");
    let out = ksat(&["exact", "--n", "6", "--n-disorder", "5", "--alpha", "0.5", "--records", records.to_str().unwrap()]);
    assert_eq!(out.code, 0);
    let text = fs::read_to_string(records).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n_sites,instance,clauses,log_z");
    assert_eq!(lines.len(), 6);
}

#[test]
fn fixedpoint_snapshot_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    let trace = dir.path().join("trace.csv");
    for (path, threads) in [(&a, "1"), (&b, "4")] {
        let out = ksat(&[
            "fixedpoint", "--alpha", "0.05", "--m", "2000", "--seed", "3", "--threads", threads,
            "--snapshot", path.to_str().unwrap(), "--trace", trace.to_str().unwrap(),
        ]);
        assert_eq!(out.code, 0, "{}", out.stdout);
    }
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    let (header, pop) = read_snapshot(&bytes[..]).unwrap();
    assert_eq!((header.p, header.m, header.seed), (3, 2000, 3));
    assert_eq!(pop.len(), 2000);
    assert!(fs::read_to_string(trace).unwrap().starts_with("iteration,distance\n"));
}

#[test]
fn fixedpoint_without_clauses_converges_at_once() {
    let out = ksat(&["fixedpoint", "--alpha", "0", "--m", "1000"]);
    assert_eq!(out.code, 0);
    let doc = json(&out);
    assert_eq!(doc["iterations"], 1);
    assert_eq!(doc["summary"]["sd"].as_f64().unwrap(), 0.0);
}

#[test]
fn rs_reads_population_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("pop.txt");
    let s = snap.to_str().unwrap();
    assert_eq!(ksat(&["fixedpoint", "--m", "2000", "--snapshot", s]).code, 0);
    let out = ksat(&["rs", "--population", s, "--n-mc", "5000"]);
    assert_eq!(out.code, 0);
    let doc = json(&out);
    assert_eq!(doc["M"], 2000);
    assert!(doc.get("fixed_point").is_none());
    let total = doc["total"].as_f64().unwrap();
    assert!(total < LN_2 && total > LN_2 - 0.15);
}

#[test]
fn compare_degenerate_cases_are_exact() {
    for beta_alpha in [["--beta", "0", "--alpha", "0.05"], ["--beta", "1", "--alpha", "0"]] {
        let mut args = vec!["compare", "--m", "1000", "--n-mc", "1000", "--n-list", "6,8", "--n-disorder", "10"];
        args.extend(beta_alpha);
        let out = ksat(&args);
        assert_eq!(out.code, 0, "{}", out.stdout);
        let doc = json(&out);
        assert_eq!(doc["rs_total"].as_f64().unwrap(), LN_2);
        for row in doc["exact"].as_array().unwrap() {
            assert_eq!(row["gap"].as_f64().unwrap(), 0.0);
            assert_eq!(row["exact"]["std_error"].as_f64().unwrap(), 0.0);
        }
    }
}

#[test]
fn compare_labels_outside_contraction_region() {
    let out = ksat(&["compare", "--p", "3", "--alpha", "2", "--beta", "3", "--m", "1000", "--n-mc", "1000", "--n", "6", "--n-disorder", "4", "--max-iters", "5"]);
    let doc = json(&out);
    assert_eq!(doc["rs_label"], "upper-bound candidate");
    assert!(!doc["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn config_file_merges_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "# overlap run\np = 2\nbeta = 0\nn-disorder = 7\nn = 8\n").unwrap();
    let out = ksat(&["--config", cfg.to_str().unwrap(), "overlap", "--n", "10"]);
    assert_eq!(out.code, 0);
    let doc = json(&out);
    assert_eq!(doc["config"]["params"]["p"], 2);
    assert_eq!(doc["config"]["n_disorder"], 7);
    assert_eq!(doc["gap"].as_f64().unwrap(), 0.1);
}

#[test]
fn exit_codes() {
    assert_eq!(ksat(&["regions", "--p", "1"]).code, 4);
    assert_eq!(ksat(&["regions", "--beta", "-1"]).code, 4);
    assert_eq!(ksat(&["nonsense"]).code, 4);
    assert_eq!(ksat(&["exact", "--n", "30", "--n-disorder", "1"]).code, 4);
    assert_eq!(ksat(&["rs", "--population", "/nonexistent/pop.txt", "--n-mc", "1000"]).code, 1);
    assert_eq!(ksat(&["--config", "/nonexistent/run.conf", "regions"]).code, 1);
    let stuck = ksat(&["fixedpoint", "--alpha", "0.5", "--beta", "3", "--m", "1000", "--max-iters", "2", "--tol", "1e-9"]);
    assert_eq!(stuck.code, 3);
    assert_eq!(json(&stuck)["converged"], false);
    assert_eq!(ksat(&["--help"]).code, 0);
}

#[test]
fn lipschitz_and_contraction_commands() {
    let out = ksat(&["lipschitz", "--p", "3", "--beta", "1", "--trials", "20000"]);
    assert_eq!(out.code, 0);
    assert_eq!(json(&out)["violations"], 0);

    let dir = tempfile::tempdir().unwrap();
    let ratios = dir.path().join("ratios.csv");
    let out = ksat(&["contraction", "--m", "10000", "--pairs", "4", "--ratios-csv", ratios.to_str().unwrap()]);
    assert_eq!(out.code, 0, "{}", out.stdout);
    assert_eq!(json(&out)["within_bound"], true);
    assert_eq!(fs::read_to_string(ratios).unwrap().lines().count(), 5);
}
