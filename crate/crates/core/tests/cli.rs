use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use spflow::allocator::AllocationPlan;
use spflow::numeric::NumericDistribution;
use spflow::simulator::ScenarioReport;
use spflow::DistributionSpec;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spflow"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn serial_iid_means_grow_linearly() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("curves.csv");
    let json = ok(&[
        "analyze",
        "--serial-iid",
        "exp:1",
        "--n",
        "10..50",
        "--grid-points",
        "4096",
        "--out",
        csv.to_str().unwrap(),
    ]);
    let v: Value = serde_json::from_str(&json).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    for row in rows {
        let n = row["n"].as_f64().unwrap();
        assert!((row["mean"].as_f64().unwrap() - n).abs() < 1e-2 * n, "{row}");
        assert!((row["variance"].as_f64().unwrap() - n).abs() < 2e-2 * n, "{row}");
    }
    let text = std::fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("n,t,pdf,cdf,atom_mass\n"));
    let ns: std::collections::BTreeSet<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ns.into_iter().collect::<Vec<_>>(), ["10", "20", "30", "40", "50"]);
}

#[test]
fn parallel_iid_means_follow_harmonic_numbers() {
    let json = ok(&["analyze", "--parallel-iid", "exp:1", "--n", "1..4", "--step", "1"]);
    let v: Value = serde_json::from_str(&json).unwrap();
    let mut h = 0.0;
    for (k, row) in v["rows"].as_array().unwrap().iter().enumerate() {
        h += 1.0 / (k + 1) as f64;
        assert!((row["mean"].as_f64().unwrap() - h).abs() < 1e-3, "{row}");
    }
}

#[test]
fn scenario_curves_round_trip_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("fig5.csv");
    let moments = dir.path().join("moments.json");
    let args: [String; 10] = [
        "analyze".into(),
        scenario("fig5.json").to_str().unwrap().into(),
        "--method".into(),
        "proposed".into(),
        "--grid-points".into(),
        "2048".into(),
        "--out".into(),
        csv.to_str().unwrap().into(),
        "--moments".into(),
        moments.to_str().unwrap().into(),
    ];
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(ok(&args), "");
    let d = NumericDistribution::from_csv(&std::fs::read_to_string(&csv).unwrap()).unwrap();
    let m: Value = serde_json::from_str(&std::fs::read_to_string(&moments).unwrap()).unwrap();
    assert!((d.mean() - m["mean"].as_f64().unwrap()).abs() < 1e-9);
    assert!((d.variance() - m["variance"].as_f64().unwrap()).abs() < 1e-9);
    assert_eq!(m["scenario"], "fig5");
}

#[test]
fn fig5_bindings_match_golden() {
    let golden: BTreeMap<String, BTreeMap<String, String>> =
        serde_json::from_str(include_str!("golden/fig5_bindings.json")).unwrap();
    let text = ok(&[
        "allocate",
        scenario("fig5.json").to_str().unwrap(),
        "--method",
        "all",
        "--grid-points",
        "2048",
    ]);
    let plans: Vec<AllocationPlan> = serde_json::from_str(&text).unwrap();
    assert_eq!(plans.len(), 3);
    for plan in &plans {
        assert_eq!(&plan.binding, &golden[plan.method.name()], "{}", plan.method);
    }
    let optimal = plans.iter().find(|p| p.method.name() == "optimal").unwrap();
    assert!(plans.iter().all(|p| optimal.mean <= p.mean + 1e-12));
}

#[test]
fn plan_output_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("plan.json");
    ok(&[
        "allocate",
        scenario("chain_delayed_exp.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    let plan: AllocationPlan = serde_json::from_str(&text).unwrap();
    assert_eq!(plan.to_json() + "\n", text);
    assert_eq!(plan.binding.len(), 6);
}

#[test]
fn compare_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("table.csv");
    let path = scenario("single_slot.json");
    let text = ok(&[
        "compare",
        path.to_str().unwrap(),
        "--trials",
        "2000",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    let report: ScenarioReport = serde_json::from_str(&text).unwrap();
    assert_eq!(report.to_json() + "\n", text);
    assert_eq!(report.rows.len(), 3);
    assert_eq!(report.trials, 2000);
    let table = std::fs::read_to_string(csv).unwrap();
    assert_eq!(table, report.to_csv());
    assert!(table.starts_with("scenario,source,statistic,proposed,optimal,baseline,improvement_pct\n"));
}

#[test]
fn simulate_reports_ks_and_analytic_moments() {
    let text = ok(&[
        "simulate",
        scenario("chain_mixed.json").to_str().unwrap(),
        "--trials",
        "20000",
        "--seed",
        "7",
    ]);
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["trials"], 20000);
    assert_eq!(v["seed"], 7);
    assert!(v["ks_vs_analytic"].as_f64().unwrap() < 0.02);
    let (sim, analytic) = (v["mean"].as_f64().unwrap(), v["analytic"]["mean"].as_f64().unwrap());
    assert!((sim - analytic).abs() < 0.02 * analytic);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let path = scenario("fig5.json");
    let args = ["simulate", path.to_str().unwrap(), "--trials", "5000", "--grid-points", "1024"];
    assert_eq!(ok(&args), ok(&args));
    let args = ["analyze", "--serial-iid", "delayed_exp:2,0.1,0.8", "--n", "3"];
    assert_eq!(ok(&args), ok(&args));
}

#[test]
fn fit_constant_samples_gives_point_mass() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples.txt");
    std::fs::write(&samples, "2.5\n2.5\n\n2.5\n").unwrap();
    let spec: DistributionSpec = serde_json::from_str(&ok(&["fit", samples.to_str().unwrap()])).unwrap();
    assert_eq!(spec, DistributionSpec::point_mass(2.5));
}

#[test]
fn fit_output_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples.txt");
    let out = dir.path().join("fit.json");
    let xs: Vec<String> = (0..200).map(|i| format!("{}", 0.3 + (i as f64 * 0.37) % 2.0)).collect();
    std::fs::write(&samples, xs.join("\n")).unwrap();
    ok(&["fit", samples.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let spec: DistributionSpec = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(spec.family_name(), "delayed_exp");
    assert!(spec.is_valid());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["analyze"]).status.code(), Some(1));
    assert_eq!(run(&["bogus"]).status.code(), Some(1));
    let out = run(&["simulate", scenario("fig5.json").to_str().unwrap(), "--trials", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_scenario_exits_one_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"servers": [{"id": "q", "service_rate": -1.0}],
            "workflow": {"type": "slot", "id": "a", "arrival_rate": 1.0}}"#,
    )
    .unwrap();
    let out = run(&["allocate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("servers[0]"), "{}", stderr(&out));

    std::fs::write(&bad, r#"{"servers": [], "workflow": {"type": "slot", "id": 3}}"#).unwrap();
    let out = run(&["allocate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("workflow"), "{}", stderr(&out));

    let out = run(&["analyze", "--serial-iid", "exp:-2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unstable_queue_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let hot = dir.path().join("hot.json");
    std::fs::write(
        &hot,
        r#"{"servers": [{"id": "q", "service_rate": 2.0}],
            "workflow": {"type": "slot", "id": "a", "arrival_rate": 3.0}}"#,
    )
    .unwrap();
    let out = run(&["analyze", hot.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).starts_with("error: "));
}

#[test]
fn oversized_search_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let wide = dir.path().join("wide.json");
    let servers: Vec<String> = (0..11).map(|i| format!(r#"{{"id": "s{i}", "service_rate": 5.0}}"#)).collect();
    let slots: Vec<String> = (0..11).map(|i| format!(r#"{{"type": "slot", "id": "t{i}"}}"#)).collect();
    std::fs::write(
        &wide,
        format!(
            r#"{{"servers": [{}], "workflow": {{"type": "series", "arrival_rate": 1.0, "children": [{}]}}}}"#,
            servers.join(","),
            slots.join(",")
        ),
    )
    .unwrap();
    let out = run(&["allocate", wide.to_str().unwrap(), "--method", "optimal"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}
