use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use branchscan_core::simulator::{SceneSpec, ScanLog};
use branchscan_core::export::ModelDocument;
use branchscan_core::model3d::BranchKind;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_branchscan"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn straight_scene(dir: &Path) -> PathBuf {
    let path = dir.join("straight.json");
    fs::write(&path, SceneSpec::straight(0.008).to_json().unwrap()).unwrap();
    path
}

fn read_scene(path: &Path) -> SceneSpec {
    SceneSpec::from_json(&fs::read_to_string(path).unwrap()).unwrap()
}

fn read_log(dir: &Path) -> ScanLog {
    serde_json::from_str(&fs::read_to_string(dir.join("log.json")).unwrap()).unwrap()
}

#[test]
fn gen_scene_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.json");
    let b = tmp.path().join("b.json");
    for out in [&a, &b] {
        let o = run(&["gen-scene", "--seed", "7", "--out", p(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("side branches"));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn gen_scene_side_branches_in_height_range() {
    let tmp = tempfile::tempdir().unwrap();
    for seed in 0..10 {
        let out = tmp.path().join(format!("s{seed}.json"));
        let o = run(&["gen-scene", "--seed", &seed.to_string(), "--out", p(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let scene = read_scene(&out);
        assert!(!scene.side_branches.is_empty());
        for b in &scene.side_branches {
            assert!((0.325..=0.75).contains(&b.attach_z), "seed {seed}: z = {}", b.attach_z);
        }
    }
}

#[test]
fn gen_scene_without_branches() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["gen-scene", "--seed", "3", "--branches", "0", "--out-dir", p(tmp.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let scene = read_scene(&tmp.path().join("scene.json"));
    assert!(scene.side_branches.is_empty());
}

#[test]
fn gen_scene_creates_timestamped_run_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["gen-scene", "--runs-dir", p(tmp.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dirs: Vec<_> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1);
    let name = dirs[0].file_name().unwrap().to_str().unwrap().to_string();
    assert!(name.ends_with("-gen-scene"), "{name}");
    assert!(dirs[0].join("scene.json").exists());
}

#[test]
fn gen_scene_unwritable_path_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("missing").join("scene.json");
    let o = run(&["gen-scene", "--out", p(&out)]);
    assert!(!o.status.success());
}

#[test]
fn noiseless_straight_scan_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = straight_scene(tmp.path());
    let out = tmp.path().join("run");
    let o = run(&["scan", "--scene", p(&scene), "--finish-z", "0.45", "--frames", "--out-dir", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = ModelDocument::from_json(&fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
    let primaries = doc.branches.iter().filter(|b| b.kind == BranchKind::Primary).count();
    assert_eq!(primaries, 1);
    assert!(doc.to_model().primary.is_some());
    assert_eq!(read_log(&out).status.as_str(), "completed");
    assert!(out.join("frames").join("iter_0000_mask.pgm").exists());
    assert!(out.join("frames").join("iter_0000_detections.png").exists());
}

#[test]
fn blank_masks_fail_with_lost_branch() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = straight_scene(tmp.path());
    let out = tmp.path().join("run");
    let o = run(&["scan", "--scene", p(&scene), "--dropout", "1.0", "--out-dir", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let text = fs::read_to_string(out.join("log.json")).unwrap();
    assert!(text.contains("lost-branch"));
}

#[test]
fn rotation_switches_every_fraction_of_the_view() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = straight_scene(tmp.path());
    let out = tmp.path().join("run");
    let o = run(&[
        "scan", "--scene", p(&scene), "--rot-angle", "22.5", "--rot-freq", "1.5", "--out-dir", p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let log = read_log(&out);
    let interval = 0.218 / 1.5;
    let mut switch_z = Vec::new();
    for w in log.samples.windows(2) {
        if w[0].viewpoint != w[1].viewpoint {
            switch_z.push(w[1].pose.center().z);
        }
    }
    assert!(switch_z.len() >= 2, "{switch_z:?}");
    assert_eq!(switch_z.len(), log.switches);
    for pair in switch_z.windows(2) {
        let gap = pair[1] - pair[0];
        assert!((gap - interval).abs() < 0.005, "gap {gap} vs {interval}");
    }
}

#[test]
fn one_by_one_batch_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = run(&[
            "batch", "--sets", "0:0", "--trials", "1", "--seed-base", "4", "--finish-z", "0.45", "--overlays",
            "--out-dir", p(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2, "{csv}");
        assert!(out.join("trials.json").exists());
        assert!(out.join("overlays").join("set0_trial000.png").exists());
        csvs.push(csv);
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn scan_then_eval_and_export() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = straight_scene(tmp.path());
    let scan_dir = tmp.path().join("scan");
    let o = run(&["scan", "--scene", p(&scene), "--finish-z", "0.4", "--out-dir", p(&scan_dir)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let eval_dir = tmp.path().join("eval");
    let o = run(&[
        "eval", "--scene", p(&scene), "--log", p(&scan_dir.join("log.json")), "--overlay", "--out-dir", p(&eval_dir),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(eval_dir.join("metrics.json")).unwrap()).unwrap();
    let resid_mm = metrics["pb_residual"].as_f64().unwrap();
    assert!(resid_mm < 1.0, "{resid_mm}");
    assert!(eval_dir.join("overlay.png").exists());

    let diag_dir = tmp.path().join("diag");
    let o = run(&[
        "export-diag", "--scene", p(&scene), "--model", p(&scan_dir.join("model.json")), "--z", "0.35",
        "--out-dir", p(&diag_dir),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["mask.pgm", "mask.png", "detections.png", "model_overlay.png", "eval_overlay.png"] {
        assert!(diag_dir.join(f).exists(), "{f}");
    }
    assert!(fs::read(diag_dir.join("mask.pgm")).unwrap().starts_with(b"P5"));
}

#[test]
fn bad_config_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let broken = tmp.path().join("broken.json");
    fs::write(&broken, "{ trials: ").unwrap();
    let o = run(&["batch", "--config", p(&broken), "--out-dir", p(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));

    let zero = tmp.path().join("zero.json");
    fs::write(&zero, r#"{ "trials": 0 }"#).unwrap();
    let o = run(&["batch", "--config", p(&zero), "--out-dir", p(&tmp.path().join("y"))]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["batch", "--sets", "fast", "--out-dir", p(&tmp.path().join("z"))]);
    assert_eq!(o.status.code(), Some(2));

    let scene = straight_scene(tmp.path());
    let o = run(&["scan", "--scene", p(&scene), "--speed", "-1", "--out-dir", p(&tmp.path().join("w"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_documents_every_flag() {
    let expected: &[(&str, &[&str])] = &[
        ("gen-scene", &["--seed", "--branches", "--clutter", "--config", "--out", "--runs-dir", "--out-dir"]),
        (
            "scan",
            &[
                "--scene", "--seed", "--config", "--sigma", "--dropout", "--morph", "--mild", "--render-clutter",
                "--speed", "--finish-z", "--rot-angle", "--rot-freq", "--z-target", "--frames",
            ],
        ),
        (
            "batch",
            &["--config", "--trials", "--seed-base", "--workers", "--sets", "--planted", "--overlays", "--sigma"],
        ),
        ("eval", &["--scene", "--log", "--config", "--overlay"]),
        ("export-diag", &["--scene", "--model", "--z", "--standoff", "--dropout", "--morph", "--seed"]),
    ];
    for (cmd, flags) in expected {
        let o = run(&[cmd, "--help"]);
        assert!(o.status.success());
        let text = String::from_utf8_lossy(&o.stdout);
        for f in *flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
    let o = run(&["--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in ["gen-scene", "scan", "batch", "eval", "export-diag"] {
        assert!(text.contains(cmd));
    }
}
