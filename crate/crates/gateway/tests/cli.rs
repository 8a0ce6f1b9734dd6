mod common;

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use common::Client;
use evacsim_gateway::protocol::kind;

fn evacsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_evacsim"))
}

fn hotel() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/hotel.json")
}

fn run(args: &[&str]) -> Output {
    evacsim().args(args).output().unwrap()
}

fn batch(out: &Path, seed: &str) -> Output {
    evacsim()
        .args(["batch", "--conditions", "guiding_lines,exit_signs", "--runs", "3", "--seed", seed, "--scenario"])
        .arg(hotel())
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn listing(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn batch_is_byte_identical_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(batch(&a, "17").status.success());
    assert!(batch(&b, "17").status.success());
    let (fa, fb) = (listing(&a), listing(&b));
    // three runs of two conditions, each a CSV and a sidecar, plus the table
    assert_eq!(fa.len(), 13);
    assert_eq!(fa, fb);
    let c = dir.path().join("c");
    assert!(batch(&c, "18").status.success());
    assert_ne!(fs::read(a.join("measures.csv")).unwrap(), fs::read(c.join("measures.csv")).unwrap());
}

#[test]
fn bad_batch_arguments_are_usage_errors() {
    let h = hotel();
    let h = h.to_str().unwrap();
    for args in [
        vec!["batch", "--scenario", h, "--conditions", "", "--runs", "2", "--out", "x"],
        vec!["batch", "--scenario", h, "--runs", "2", "--out", "x"],
        vec!["batch", "--scenario", h, "--conditions", "guiding_lines,teleport", "--runs", "2", "--out", "x"],
        vec!["batch", "--scenario", h, "--conditions", "none", "--runs", "0", "--out", "x"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"), "{args:?}");
    }
    let out = run(&["batch", "--scenario", "/nonexistent.json", "--conditions", "none", "--runs", "1", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn metrics_writes_summary_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    assert!(batch(&runs, "5").status.success());
    let out = dir.path().join("distance.csv");
    let status = evacsim()
        .args(["metrics", "--selector", "first", "--measure", "distance", "--in"])
        .arg(&runs)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "condition,n,mean,std,excluded");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("guiding_lines,3,"));
    assert!(lines[2].starts_with("exit_signs,3,"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    assert_eq!(report["selector"], "first_runs_only");
    assert_eq!(report["runs"], 6);
    assert_eq!(report["summaries"]["correct_rate"].as_array().unwrap().len(), 2);

    // sidecars stand in for a missing table
    fs::remove_file(runs.join("measures.csv")).unwrap();
    let again = dir.path().join("again.csv");
    let status = evacsim()
        .args(["metrics", "--selector", "first", "--measure", "distance", "--in"])
        .arg(&runs)
        .arg("--out")
        .arg(&again)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(fs::read_to_string(&again).unwrap(), csv);

    assert_eq!(run(&["metrics", "--in", "x", "--selector", "some", "--out", "y"]).status.code(), Some(2));
    let empty = tempfile::tempdir().unwrap();
    let out = evacsim()
        .args(["metrics", "--in"])
        .arg(empty.path())
        .arg("--out")
        .arg(dir.path().join("none.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn mocomp_demo_samples_every_centimetre() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("target.csv");
    fs::write(&target, "x,y\n0,0\n6,0\n6,6\n2,6\n").unwrap();
    let out = dir.path().join("demo.csv");
    let status = evacsim()
        .args(["mocomp-demo", "--workspace", "4x4", "--target"])
        .arg(&target)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let mut reader = csv::Reader::from_path(&out).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["s", "x", "y", "heading", "target_x", "target_y", "target_heading"]
    );
    let rows: Vec<Vec<f64>> = reader
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 1601);
    for w in rows.windows(2) {
        assert!((w[1][0] - w[0][0] - 0.01).abs() < 1e-9);
    }
    assert!((rows.last().unwrap()[0] - 16.0).abs() < 1e-9);
    for r in &rows {
        assert!(r[1].abs() <= 1.9 + 1e-6 && r[2].abs() <= 1.9 + 1e-6, "{r:?} leaves the workspace");
    }
    assert_eq!((rows[700][4], rows[700][5]), (6.0, 1.0));

    let json_target = dir.path().join("target.json");
    fs::write(&json_target, "[[0,0],[3,0]]").unwrap();
    let status = evacsim()
        .args(["mocomp-demo", "--workspace", "3x2.5", "--target"])
        .arg(&json_target)
        .arg("--out")
        .arg(dir.path().join("line.csv"))
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(run(&["mocomp-demo", "--workspace", "4", "--target", "t", "--out", "o"]).status.code(), Some(2));
}

#[test]
fn serve_announces_its_port_and_speaks_the_protocol() {
    let mut child = evacsim()
        .args(["serve", "--port", "0", "--scenario"])
        .arg(hotel())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap().parse().unwrap();
    let mut c = Client::connect(addr);
    let m = c.hello();
    assert_eq!(m.payload["scenario"]["id"], "hotel");
    c.send(kind::START_RUN, serde_json::json!({"condition": "floor_plan", "start_index": 0, "seed": 1}));
    assert_eq!(c.expect(kind::SNAPSHOT).payload["t"], 0.0);
    child.kill().unwrap();
    child.wait().unwrap();

    let out = run(&["serve", "--port", "0", "--tick-rate", "5", "--scenario", hotel().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tick rate"));
}
