use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmac-sim")).args(args).output().unwrap()
}

fn scenario(dir: &Path, text: &str) -> String {
    let p = dir.join("scenario.cfg");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_csv_and_replayable_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), "protocol = pmac\nnode_count = 6\ntopology = tree\nseed = 9\n");
    let csv = dir.path().join("out.csv");
    let trace = dir.path().join("run.jsonl");
    let out = bin(&["run", &cfg, "--out", s(&csv), "--trace", s(&trace)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("protocol,node_count,networking_time_us,establish_util,data_util,seed\npmac,6,"));

    let out = bin(&["replay", s(&trace)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("replay ok:"));

    let original = std::fs::read_to_string(&trace).unwrap();
    let tampered = original.replacen("\"at\":0,", "\"at\":1,", 1);
    assert_ne!(tampered, original);
    std::fs::write(&trace, tampered).unwrap();
    assert_eq!(bin(&["replay", s(&trace)]).status.code(), Some(2));
}

#[test]
fn seed_flag_overrides_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), "node_count = 4\ntopology = random\n");
    let out = bin(&["run", &cfg, "--seed", "42"]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().nth(1).unwrap().ends_with(",42"));
}

#[test]
fn bad_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), "protocol = aloha\n");
    let out = bin(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
    assert_eq!(bin(&["run", s(&dir.path().join("nope.cfg"))]).status.code(), Some(1));
    assert_eq!(bin(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(bin(&["run"]).status.code(), Some(1));
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
    let ok = scenario(dir.path(), "node_count = 4\n");
    assert_eq!(bin(&["sweep-nodes", &ok, "--counts", "1,4"]).status.code(), Some(1));
}

#[test]
fn sweep_nodes_writes_rows_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), "protocol = pmac\n");
    let csv = dir.path().join("sweep.csv");
    let plots = dir.path().join("plots");
    let out = bin(&["sweep-nodes", &cfg, "--counts", "4,8", "--out", s(&csv), "--plot-data", s(&plots)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("csma,4,") && rows[3].starts_with("pmac,8,"));
    let tsv = std::fs::read_to_string(plots.join("networking_time.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 3);
    assert!(plots.join("establish_util.tsv").exists() && plots.join("data_util.tsv").exists());

    let out = bin(&["sweep-nodes", &cfg, "--counts", "3", "--protocols", "fd-pmac,fd-csma"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 3);
}

#[test]
fn sweep_freq_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), "node_count = 3\nfreq_points = 4\n");
    let out = bin(&["sweep-freq", &cfg, "--mechanism", "nxn"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().nth(4).unwrap().starts_with("nxn,4,20,20,"));
}
