use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn taxonet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taxonet")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn example_source() -> String {
    repo_file("configs/example.txt").to_string_lossy().into_owned()
}

const SMALL: &str = "\
[run]
seed = 3
duration_min = 10

[topology]
sources = 12
servers = 2
terms_max = 10
extent_max = 5

[workload]
base_rate = 2.0
";

#[test]
fn trace_direct_has_one_line_per_message() {
    let o = taxonet(&["trace", "-s", &example_source(), "-q", "a2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 22);
    assert_eq!(out.lines().filter(|l| l.contains(" ask ask(")).count(), 11);
    assert_eq!(out.lines().filter(|l| l.contains(" tell tell(")).count(), 11);
}

#[test]
fn trace_rewrite_ends_with_the_root_tell() {
    let o = taxonet(&["trace", "-s", &example_source(), "-q", "a2", "--mode", "rewrite"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.lines().last().unwrap().contains("a2 ∪ R(2) ∪ (R(3) ∩ R(4))"), "{out}");
}

#[test]
fn trace_dot_prints_the_graph() {
    let o = taxonet(&["trace", "-s", &example_source(), "-q", "a2", "--dot"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("digraph"));
}

#[test]
fn trace_unknown_term_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "").unwrap();
    let o = taxonet(&["trace", "-s", empty.to_str().unwrap(), "-q", "a2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("a2"), "{}", stderr(&o));
}

#[test]
fn verify_tables_and_paths() {
    let o = taxonet(&["verify", "--tables"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 3);
    let o = taxonet(&["verify", "--paths", "n=12"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("2048]"), "{}", stdout(&o));
}

#[test]
fn verify_small_scale_passes() {
    let o = taxonet(&["verify", "--scale", "small"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn run_all_writes_reports_and_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("out");
    let o = taxonet(&["run", "-c", cfg.to_str().unwrap(), "--arch", "ALL", "-o", out.to_str().unwrap(), "--trace"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    for arch in ["CCD", "CDR", "DCR", "DDR", "DDD"] {
        assert!(table.lines().any(|l| l.starts_with(arch)), "{table}");
        for ext in ["json", "csv", "trace"] {
            assert!(out.join(format!("{arch}-seed3.{ext}")).is_file(), "{arch} {ext}");
        }
    }
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("DDD-seed3.json")).unwrap()).unwrap();
    assert_eq!(json["seed"], 3);
    assert_eq!(json["config"]["topology"]["sources"], 12);
}

#[test]
fn flags_override_the_file_and_runs_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let report = |sub: &str| {
        let out = dir.path().join(sub);
        let o = taxonet(&["run", "-c", cfg.to_str().unwrap(), "--arch", "CDR", "--seed", "11", "--duration", "5", "-o", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out.join("CDR-seed11.json")).unwrap()
    };
    let a = report("a");
    assert_eq!(a, report("b"));
    let json: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(json["config"]["stop"]["duration"]["minutes"], 5.0);
}

#[test]
fn malformed_config_exits_2_with_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[run]\nseed = 1\nbogus = 2\n").unwrap();
    let o = taxonet(&["run", "-c", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn unknown_architecture_exits_2() {
    let o = taxonet(&["run", "--arch", "XYZ", "--duration", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn infeasible_topology_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("lone.toml");
    fs::write(&cfg, "[topology]\nsources = 1\nservers = 1\n").unwrap();
    let o = taxonet(&["run", "-c", cfg.to_str().unwrap(), "--duration", "1", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
