use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mart_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mart-lab")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("bad json ({e}): {}", String::from_utf8_lossy(&o.stdout)))
}

fn verdict(report: &Value, statement: &str) -> Value {
    report["result"]["verdicts"].as_array().unwrap().iter().find(|v| v["statement"] == statement).unwrap().clone()
}

#[test]
fn cherny_example_reproduces_table() {
    let o = mart_lab(&["example", "cherny", "--depth", "2000"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&o);
    assert_eq!(r["schema"], "mart-lab/1");
    assert_eq!(verdict(&r, "V")["verdict"], "holds_on_suite");
    assert_eq!(verdict(&r, "I")["verdict"], "violated");
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("V:holds_on_suite") && err.contains("I:violated"));
}

#[test]
fn control_example_passes() {
    assert_eq!(code(&mart_lab(&["example", "nonnegative_control"])), 0);
}

#[test]
fn randomized_example_has_reciprocal_witness() {
    let o = mart_lab(&["example", "cherny_randomized", "--levels", "10000"]);
    assert_eq!(code(&o), 0);
    let iv = verdict(&json(&o), "IV");
    assert_eq!(iv["verdict"], "violated");
    assert_eq!(iv["witness"]["spec"]["op"], "reciprocal_u");
    assert_eq!(iv["witness"]["observed"]["kind"], "divergent");
}

#[test]
fn limit_abs_certificate_row() {
    let o = mart_lab(&["expect", "--process", "cherny", "--target", "limit_abs", "--threshold", "1000", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let last = text.lines().last().unwrap();
    assert_eq!(last, "0,exact,divergent,2001,2001/2,1000.5,1000/1");
    assert!(String::from_utf8_lossy(&o.stderr).contains("N=2001, S=1000.5"));
}

#[test]
fn initial_mean_is_zero() {
    let o = mart_lab(&["expect", "--process", "cherny", "--target", "value_at:0"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["result"][0]["output"]["result"]["value"]["exact"], "0/1");
}

#[test]
fn blowup_curve_csv() {
    let o = mart_lab(&["expect", "--process", "cherny", "--target", "blowup:1000,10000,100000", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "query,m,value,approx,ln_m,slope");
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        let (value, ln_m): (f64, f64) = (r[3].parse().unwrap(), r[4].parse().unwrap());
        assert!(value >= 0.4 * ln_m);
    }
    let slope: f64 = rows[0][5].parse().unwrap();
    assert!((0.35..=0.65).contains(&slope), "{slope}");
}

#[test]
fn witness_exit_codes() {
    let o = mart_lab(&["witness", "random_walk", "--epsilon", "2/5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&o);
    assert!(r["result"]["e_m_tau"]["value"].as_f64().unwrap() >= 0.45);
    assert!(r["result"]["success"].as_bool().unwrap());

    let o = mart_lab(&["witness", "constant:0"]);
    assert_eq!(code(&o), 4);
    assert_eq!(json(&o)["result"]["status"], "precondition_failed");

    let o = mart_lab(&["witness", "cherny"]);
    assert_eq!(code(&o), 4);
    assert_eq!(json(&o)["result"]["status"], "not_applicable");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&mart_lab(&["example", "cherny", "--bogus"])), 1);
    assert_eq!(code(&mart_lab(&["example", "nope"])), 1);
    assert_eq!(code(&mart_lab(&["expect", "--process", "cherny", "--target", "limit:7"])), 1);
    assert_eq!(code(&mart_lab(&["expect"])), 1);
    assert_eq!(code(&mart_lab(&["witness", "cherny", "--epsilon", "x"])), 1);
    assert_eq!(code(&mart_lab(&["frobnicate"])), 1);
}

#[test]
fn non_terminating_target_is_inapplicable() {
    let o = mart_lab(&["expect", "--process", "random_walk", "--target", "limit"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn help_lists_defaults() {
    let o = mart_lab(&["example", "--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("[default: 2000]") && text.contains("--grid"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "depth = 50\nformat = \"csv\"\nhorizon = 20\n").unwrap();
    let c = cfg.to_str().unwrap();

    let o = mart_lab(&["--config", c, "example", "cherny", "--format", "json", "--depth", "60"]);
    assert_eq!(code(&o), 0);
    let r = json(&o);
    assert_eq!(r["config"]["depth"], 60);
    assert_eq!(r["config"]["horizon"], 20);
    assert_eq!(r["config"]["levels"], 10000);

    let o = mart_lab(&["--config", c, "example", "nonnegative_control"]);
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("statement,verdict,expected"));

    std::fs::write(&cfg, "dpeth = 5\n").unwrap();
    assert_eq!(code(&mart_lab(&["--config", c, "example", "cherny"])), 1);
}

#[test]
fn reports_are_byte_identical_and_written_atomically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for p in [&a, &b] {
        let args = ["expect", "--process", "cherny", "--target", "value_at:7", "--reps", "2000", "--seed", "9", "--out", p.to_str().unwrap()];
        let o = mart_lab(&args);
        assert_eq!(code(&o), 0);
        assert!(o.stdout.is_empty());
    }
    let (x, y) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(x, y);
    let r: Value = serde_json::from_slice(&x).unwrap();
    assert_eq!(r["result"][0]["monte_carlo"]["estimate"]["n"], 2000);
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 2, "no temporary files left behind");
}

#[test]
fn query_files_and_csv_kind_check() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    };
    let q1 = write(
        "two_atom.json",
        r#"{"process": {"process": "finite", "atoms": [
              {"weight": "1/2", "path": {"initial": "0", "jumps": [["1", "5"]]}},
              {"weight": "1/2", "path": {"initial": "0", "jumps": []}}]},
            "target": {"kind": "limit"}}"#,
    );
    let q2 = write(
        "walk.json",
        r#"{"process": {"process": "walk", "horizon": 10},
            "target": {"kind": "stopped", "spec": {"op": "hit_above", "level": "1", "strict": false}}}"#,
    );
    let o = mart_lab(&["expect", q1.to_str().unwrap(), q2.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&o);
    assert_eq!(r["result"][0]["output"]["result"]["value"]["exact"], "5/2");
    assert_eq!(r["result"][1]["output"]["truncated_mean"]["exact"], "0/1");

    let o = mart_lab(&["expect", q1.to_str().unwrap(), q2.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(code(&o), 1);

    let bad = write("bad.json", r#"{"process": {"process": "walk", "horizon": 10}, "target": {"kind": "limit"}, "x": 1}"#);
    assert_eq!(code(&mart_lab(&["expect", bad.to_str().unwrap()])), 1);
    assert!(Path::new(&q1).exists());
}
