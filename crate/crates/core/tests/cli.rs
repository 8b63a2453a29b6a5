use std::path::Path;
use std::process::{Command, Output};

use occmem::grid::VoxelGrid;

fn occmem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_occmem")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = occmem(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json_line(s: &str) -> serde_json::Value {
    serde_json::from_str(s.lines().last().unwrap()).unwrap()
}

#[test]
fn scene_to_scores_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let scene = dir.join("scene");
    let s = scene.to_str().unwrap();

    let gen = json_line(&ok(&["gen-scene", "--seed", "3", "--n-frames", "12", "--out", s]));
    assert_eq!(gen["frames"], 12);
    ok(&["render", "--scene", s]);

    let local = dir.join("local.occg");
    let l = json_line(&ok(&["run-local", "--scene", s, "--frame", "2", "--out", local.to_str().unwrap()]));
    assert!(l["score"]["iou"].as_f64().unwrap() > 0.5);
    assert!(VoxelGrid::load(&local).is_ok());

    let run = dir.join("run");
    let stdout = ok(&["--jobs", "2", "run-embodied", "--scene", s, "--frames", "0..4", "--out", run.to_str().unwrap()]);
    assert_eq!(stdout.lines().count(), 4);
    for f in ["scores.jsonl", "occ_pred.occg", "explored.bin", "memory.gmem"] {
        assert!(run.join(f).exists(), "{f} missing");
    }

    let ev = json_line(&ok(&[
        "eval",
        "--pred",
        run.join("occ_pred.occg").to_str().unwrap(),
        "--gt",
        scene.join("occ_global.occg").to_str().unwrap(),
        "--mask",
        run.join("explored.bin").to_str().unwrap(),
    ]));
    let last = json_line(&std::fs::read_to_string(run.join("scores.jsonl")).unwrap());
    assert_eq!(ev["miou"], last["score"]["miou"]);

    let ply = dir.join("mem.ply");
    ok(&["export-ply", "--gmem", run.join("memory.gmem").to_str().unwrap(), "--out", ply.to_str().unwrap()]);
    assert!(std::fs::read_to_string(&ply).unwrap().starts_with("ply"));

    let lb = json_line(&ok(&["lookback", "--scene", s, "--k", "2"]));
    assert_eq!(lb["look_back"]["frames"], serde_json::json!([0, 1, 0, 1]));
}

#[test]
fn bad_input_exit_codes() {
    assert_eq!(occmem(&["frobnicate"]).status.code(), Some(2));
    let missing = occmem(&["run-local", "--scene", "/nonexistent", "--frame", "0", "--out", "/tmp/x.occg"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(!Path::new("/tmp/x.occg").exists());
}
