use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gti(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gti"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("gti runs")
}

fn ok(args: &[&str]) -> String {
    let out = gti(args);
    assert!(
        out.status.success(),
        "gti {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_sample_run_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("ba.txt");
    ok(&[
        "generate",
        "--model",
        "ba",
        "--nodes",
        "40",
        "--m",
        "2",
        "--seed",
        "3",
        "--out",
        p(&input),
    ]);
    let text = fs::read_to_string(&input).unwrap();
    assert!(text.starts_with("# Nodes: 40 Edges: 76"));

    let prefix = dir.path().join("ff");
    let s = ok(&[
        "sample",
        "--input",
        p(&input),
        "--method",
        "ff",
        "--nodes",
        "12",
        "--seed",
        "1",
        "--out",
        p(&prefix),
    ]);
    assert!(s.starts_with("forest_fire: 12 nodes"));
    let nodes = fs::read_to_string(dir.path().join("ff_nodes.txt")).unwrap();
    assert_eq!(nodes.lines().count(), 12);
    assert!(dir.path().join("ff_edges.txt").exists());

    let out = dir.path().join("run");
    let s = ok(&[
        "run",
        "--input",
        p(&input),
        "--out",
        p(&out),
        "--seed",
        "2",
        "--gan-iters",
        "20",
    ]);
    assert!(s.contains("graph: 40 nodes, 76 edges"));
    assert!(out.join("report.json").exists());

    // existing output is refused without --force
    let again = gti(&["run", "--input", p(&input), "--out", p(&out), "--gan-iters", "20"]);
    assert!(!again.status.success());
    ok(&[
        "run",
        "--input",
        p(&input),
        "--out",
        p(&out),
        "--seed",
        "2",
        "--gan-iters",
        "20",
        "--force",
    ]);

    let csv = ok(&["stages", "--dir", p(&out)]);
    assert_eq!(csv, fs::read_to_string(out.join("stages.csv")).unwrap());

    let degrees = ok(&["report", "--dir", p(&out), "--degree-csv"]);
    assert!(degrees.starts_with("series,degree,count\n"));
    let dot = ok(&["report", "--dir", p(&out), "--dot", "hub", "--stage", "1"]);
    assert!(dot.starts_with("graph G {"));
    assert_eq!(dot.matches("fillcolor=red").count(), 1);
    let summary = ok(&["report", "--dir", p(&out)]);
    assert!(summary.contains("stage  cut_value"));
}

#[test]
fn edgeless_input_fails_with_phase_tag() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.txt");
    fs::write(&input, "# Nodes: 5\n").unwrap();
    let out = dir.path().join("run");
    let r = gti(&["run", "--input", p(&input), "--out", p(&out)]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("[input]"));
    assert!(!out.exists());
}

#[test]
fn bad_arguments_fail() {
    assert!(
        !gti(&["generate", "--model", "er", "--nodes", "10", "--out", "/dev/null"])
            .status
            .success()
    );
    assert!(
        !gti(&["sample", "--input", "/nonexistent", "--method", "rw", "--nodes", "3"])
            .status
            .success()
    );
    assert!(
        !gti(&["sample", "--input", "/dev/null", "--method", "bfs", "--nodes", "3"])
            .status
            .success()
    );
}
