use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;
use vsg_core::eval::{LabeledPose, PoseLabel, PoseSet};
use vsg_core::Pose;

fn vsg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vsg"))
}

fn run(args: &[&str]) -> Output {
    vsg().args(args).output().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    assert_eq!(run(&["run", "--scene", "missing.json", "--out", out]).status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"bounds\":").unwrap();
    assert_eq!(run(&["run", "--scene", bad.to_str().unwrap(), "--out", out]).status.code(), Some(3));
    assert_eq!(run(&["run", "--interactive", "--trajectory", "desk_orbit", "--out", out]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["run", "--out", out, "--threshold", "nan"]).status.code(), Some(1));
    let table = dir.path().join("t.csv");
    std::fs::write(&table, "category,geometric\nvase,1\n").unwrap();
    assert_eq!(run(&["export-table", "--table", table.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn run_is_deterministic_and_reports_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let o = run(&["run", "--scene", "desk", "--trajectory", "desk_orbit", "--seed", "7", "--out", d.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["session.vsgsnap", "report.json", "events.jsonl", "grid.bin", "ground_truth_poses.json", "dataset/index.json", "dataset/frames/000057.png", "dataset/frames/000057.depth"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    let report = read_json(&a.join("report.json"));
    let cov = &report["coverage"];
    assert_eq!(cov["spheres"], 1);
    let covered = cov["covered_subsurfaces"].as_f64().unwrap();
    assert!(covered / cov["total_subsurfaces"].as_f64().unwrap() >= 0.95);
    assert!(cov["unobserved_fraction"].as_f64().unwrap() < 0.05);
    assert_eq!(cov["frames"], 120);

    let events = std::fs::read_to_string(a.join("events.jsonl")).unwrap();
    assert_eq!(events.lines().count() as u64, cov["events"].as_u64().unwrap());
    let dataset = vsg::dataset::read_dataset(&a.join("dataset")).unwrap();
    assert_eq!(dataset.len(), 120);
    assert_eq!(dataset.iter().filter(|(m, _)| m.keyframe).count(), 12);
    let grid = vsg::formats::read_grid(&a, "grid").unwrap();
    let session = vsg::snapshot::restore(&std::fs::read(a.join("session.vsgsnap")).unwrap()).unwrap();
    assert_eq!(&grid, session.grid());

    let other = dir.path().join("c");
    run(&["run", "--seed", "8", "--no-dataset", "--out", other.to_str().unwrap()]);
    assert_ne!(
        std::fs::read(a.join("ground_truth_poses.json")).unwrap(),
        std::fs::read(other.join("ground_truth_poses.json")).unwrap()
    );
    assert!(!other.join("dataset").exists());
}

#[test]
fn interactive_run_acks_each_pose() {
    let dir = tempfile::tempdir().unwrap();
    let orbit = vsg::bundled::desk_orbit();
    let mut input = String::new();
    for (t, s) in [(0.0, 0), (0.05, 1), (0.25, 2)] {
        let pose = serde_json::to_string(&orbit.samples()[s].pose).unwrap();
        input.push_str(&format!("{{\"timestamp\":{t},\"pose\":{pose}}}\n"));
    }
    let mut child = vsg()
        .args(["run", "--interactive", "--no-dataset", "--out", dir.path().to_str().unwrap()])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let acks: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .take(3)
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(acks[0]["frame_index"], 0);
    assert_eq!(acks[1]["status"], "below capture cadence, skipped");
    assert_eq!(acks[2]["frame_index"], 1);
    assert_eq!(read_json(&dir.path().join("report.json"))["coverage"]["frames"], 2);

    let mut child = vsg()
        .args(["run", "--interactive", "--out", dir.path().to_str().unwrap()])
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"{\"timestamp\": 0}\n").unwrap();
    assert_eq!(child.wait().unwrap().code(), Some(3));
}

fn pose_set(dir: &Path, name: &str, poses: &[Pose], convention: Option<&str>) -> String {
    let set = PoseSet::new(poses.to_vec(), PoseLabel::Other);
    let path = dir.join(name);
    let mut v = serde_json::json!({ "metric_scale": true, "poses": set.poses });
    if let Some(c) = convention {
        v["frame_convention"] = c.into();
    }
    std::fs::write(&path, v.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

fn eval_numbers(stdout: &[u8]) -> Vec<f64> {
    let text = String::from_utf8_lossy(stdout);
    let first_two: Vec<&str> = text.lines().take(2).collect();
    first_two
        .iter()
        .flat_map(|l| l.split_whitespace())
        .filter_map(|t| t.parse().ok())
        .collect()
}

#[test]
fn eval_reports_and_warns() {
    let dir = tempfile::tempdir().unwrap();
    let poses: Vec<Pose> = vsg::bundled::desk_orbit().samples().iter().step_by(7).map(|s| s.pose).collect();
    let shifted: Vec<Pose> = poses
        .iter()
        .map(|p| Pose::new(*p.rotation(), p.translation() + vsg_core::Vec3::new(0.0, 0.3, 0.0)).unwrap())
        .collect();
    let conv = vsg::formats::FRAME_CONVENTION;
    let a = pose_set(dir.path(), "a.json", &poses, Some(conv));
    let b = pose_set(dir.path(), "b.json", &shifted, Some(conv));
    let c = pose_set(dir.path(), "c.json", &poses, Some("opengl_y_up_z_back"));

    let same = run(&["eval", "--train", &a, "--gt", &a]);
    assert!(same.status.success());
    assert_eq!(eval_numbers(&same.stdout), [0.0, 0.0, 0.0, 0.0]);
    assert!(same.stderr.is_empty());

    let out = dir.path().join("r.json");
    let off = run(&["eval", "--train", &a, "--gt", &b, "--out", out.to_str().unwrap()]);
    assert!(off.status.success());
    let report = read_json(&out);
    assert!((report["pooled"]["distance"]["mean"].as_f64().unwrap() - 0.3).abs() < 1e-9);
    assert!(report["pooled"]["distance"]["sd"].as_f64().unwrap() < 1e-9);

    let mismatch = run(&["eval", "--train", &a, "--gt", &c]);
    assert!(mismatch.status.success());
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("warning: frame conventions differ"));

    let bare = dir.path().join("bare.json");
    let records: Vec<LabeledPose> = PoseSet::new(poses.clone(), PoseLabel::Training).poses;
    std::fs::write(&bare, serde_json::to_string(&records).unwrap()).unwrap();
    let undeclared = run(&["eval", "--train", bare.to_str().unwrap(), "--gt", &a]);
    assert!(String::from_utf8_lossy(&undeclared.stderr).contains("warning"));

    assert_eq!(run(&["eval", "--train", "nope.json", "--gt", &a]).status.code(), Some(2));
    std::fs::write(dir.path().join("empty.json"), "[]").unwrap();
    let empty = dir.path().join("empty.json");
    assert_eq!(run(&["eval", "--train", empty.to_str().unwrap(), "--gt", &a]).status.code(), Some(3));
}

#[test]
fn exports() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["export-prompts", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    for col in ["geometric", "texture", "size", "specularity", "transparency"] {
        let text = std::fs::read_to_string(dir.path().join(format!("{col}.txt"))).unwrap();
        assert!(text.contains("assign a score (from 0 to 100)"));
        assert!(text.contains("32: wine glass"));
    }
    let o = run(&["export-prompts"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("potential to contain specularity?"));

    let o = run(&["export-table"]);
    let table = vsg::formats::parse_prior_table(&String::from_utf8(o.stdout).unwrap(), Path::new("stdout")).unwrap();
    assert_eq!(table, vsg::bundled::prior_table());

    let gt = dir.path().join("gt.json");
    let o = run(&["sample-gt", "--scene", "small", "--count", "5", "--seed", "3", "--out", gt.to_str().unwrap()]);
    assert!(o.status.success());
    let set = vsg::formats::load_pose_set(&gt).unwrap();
    assert_eq!(set.set.len(), 5);
    assert_eq!(set.set.poses[0].scene.as_deref(), Some("small"));
}

#[test]
fn serve_flushes_snapshots_on_sigint() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = vsg()
        .args(["serve", "--snapshot-dir", dir.path().join("snaps").to_str().unwrap()])
        .env("VSG_BIND", "127.0.0.1:0")
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdout = BufReader::new(child.stdout.take().unwrap());
    let mut line = String::new();
    stdout.read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").expect("listening line").to_string();

    let mut conn = std::net::TcpStream::connect(&addr).unwrap();
    write!(
        conn,
        "POST /v1/session HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: 2\r\nConnection: close\r\n\r\n{{}}"
    )
    .unwrap();
    let mut resp = String::new();
    conn.read_to_string(&mut resp).unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"id\":\"s1\""));

    let killed = Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    assert!(killed.success());
    assert_eq!(child.wait().unwrap().code(), Some(0));
    let mut rest = String::new();
    stdout.read_to_string(&mut rest).unwrap();
    assert!(rest.contains("wrote 1 session snapshot"));
    let snap = std::fs::read(dir.path().join("snaps/s1.vsgsnap")).unwrap();
    assert_eq!(vsg::snapshot::restore(&snap).unwrap().frames().len(), 0);
}

#[test]
fn serve_startup_failures() {
    let o = vsg().args(["serve", "--table", "missing.csv"]).env("VSG_BIND", "127.0.0.1:0").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let o = vsg().args(["serve", "--bind", &addr]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}
