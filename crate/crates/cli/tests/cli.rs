use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn splatloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splatloc")).args(args).output().expect("run binary")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A small benchmark so the smoke runs stay fast.
fn synth(dir: &Path) -> Output {
    splatloc(&[
        "synth",
        "--out",
        p(dir),
        "--set",
        "bench.n_gaussians=80",
        "--set",
        "bench.n_train_views=3",
        "--set",
        "bench.n_test_views=2",
    ])
}

#[test]
fn help_and_version_exit_zero() {
    let o = splatloc(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["synth", "train", "localize", "refine", "render", "eval"] {
        assert!(text.contains(sub), "help lacks {sub}");
    }
    assert_eq!(code(&splatloc(&["--version"])), 0);
    assert_eq!(code(&splatloc(&["train", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&splatloc(&["--bogus"])), 1);
    assert_eq!(code(&splatloc(&[])), 1);
    assert_eq!(code(&splatloc(&["eval", "--out", "x"])), 1);
}

#[test]
fn bad_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = splatloc(&["synth", "--out", p(dir.path()), "--set", "no.such.key=1"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown config key"));
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "precision = f16\n").unwrap();
    assert_eq!(code(&splatloc(&["synth", "--out", p(dir.path()), "--config", p(&cfg)])), 1);
}

#[test]
fn missing_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = splatloc(&["eval", "--data", p(&dir.path().join("none")), "--out", p(&dir.path().join("e"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn synth_writes_layout_and_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = synth(dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = dir.path().join("scene_000");
    for f in ["scene.ply", "intrinsics.txt", "poses.txt", "images/0000.png", "test/poses.txt", "test/images/0001.png"] {
        assert!(s.join(f).exists(), "missing {f}");
    }
    assert!(dir.path().join("spec.json").exists());
    let resolved = fs::read_to_string(dir.path().join("config.resolved")).unwrap();
    assert!(resolved.contains("bench.n_gaussians = 80"));
    assert!(resolved.contains("ransac.max_iters = 2000"));
    assert_eq!(fs::read_to_string(s.join("poses.txt")).unwrap().lines().count(), 3);
}

#[test]
fn render_writes_color_depth_and_scale() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&synth(dir.path())), 0);
    let s = dir.path().join("scene_000");
    let (color, depth) = (dir.path().join("r/c.png"), dir.path().join("r/d.pgm"));
    fs::create_dir_all(dir.path().join("r")).unwrap();
    let o = splatloc(&[
        "render",
        "--scene",
        p(&s.join("scene.ply")),
        "--pose",
        p(&s.join("poses.txt")),
        "--index",
        "1",
        "--intrinsics",
        p(&s.join("intrinsics.txt")),
        "--out",
        p(&color),
        p(&depth),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(color.exists() && depth.exists());
    assert!(fs::read_to_string(dir.path().join("r/d.pgm.scale")).unwrap().contains("scale ="));
    assert!(dir.path().join("r/config.resolved").exists());

    let bad = splatloc(&[
        "render",
        "--scene",
        p(&s.join("scene.ply")),
        "--pose",
        p(&s.join("poses.txt")),
        "--index",
        "9",
        "--intrinsics",
        p(&s.join("intrinsics.txt")),
        "--out",
        p(&color),
        p(&depth),
    ]);
    assert_eq!(code(&bad), 1);
}

#[test]
fn train_eval_and_localize_smoke() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&synth(dir.path())), 0);
    let model_dir = dir.path().join("model");
    let log = dir.path().join("events.jsonl");
    let o = splatloc(&[
        "train",
        "--data",
        p(dir.path()),
        "--out",
        p(&model_dir),
        "--set",
        "train.steps=4",
        "--set",
        "train.checkpoint_every=1",
        "--log",
        p(&log),
        "--ransac-iters",
        "500",
        "--inlier-px",
        "2.5",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines = fs::read_to_string(model_dir.join("loss_log.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 4);
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(first["step"], 1);
    assert!(model_dir.join("model.params").exists());
    let resolved = fs::read_to_string(model_dir.join("config.resolved")).unwrap();
    assert!(resolved.contains("ransac.max_iters = 500") && resolved.contains("ransac.inlier_px = 2.5"));
    assert!(model_dir.join("checkpoints").read_dir().unwrap().next().is_some());
    assert!(fs::read_to_string(&log).unwrap().lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));

    let eval_dir = dir.path().join("eval");
    let o = splatloc(&[
        "eval",
        "--data",
        p(dir.path()),
        "--model",
        p(&model_dir.join("model.params")),
        "--out",
        p(&eval_dir),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(eval_dir.join("report.csv")).unwrap();
    assert!(csv.starts_with("index,t_unrefined,r_unrefined,t_refined,r_refined,fine_matches,inliers,failure"));
    assert_eq!(csv.lines().count(), 3);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(eval_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["queries"], 2);

    // An untrained model rarely localizes; either outcome maps to a documented code.
    let s = dir.path().join("scene_000");
    let out = dir.path().join("loc/pose.txt");
    fs::create_dir_all(dir.path().join("loc")).unwrap();
    let o = splatloc(&[
        "localize",
        "--scene",
        p(&s.join("scene.ply")),
        "--model",
        p(&model_dir.join("model.params")),
        "--image",
        p(&s.join("test/images/0000.png")),
        "--intrinsics",
        p(&s.join("intrinsics.txt")),
        "--out",
        p(&out),
        "--diag",
        p(&dir.path().join("loc/diag.json")),
    ]);
    match code(&o) {
        0 => assert!(out.exists()),
        2 => assert!(!out.exists()),
        c => panic!("unexpected exit {c}: {}", String::from_utf8_lossy(&o.stderr)),
    }
    assert!(dir.path().join("loc/diag.json").exists());
}

#[test]
fn oracle_eval_has_full_recall() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&synth(dir.path())), 0);
    let o = splatloc(&["eval", "--data", p(dir.path()), "--out", p(&dir.path().join("e")), "--set", "eval.oracle=true"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("e/report.json")).unwrap()).unwrap();
    assert_eq!(report["refined"]["recall"], 1.0);
}

#[test]
fn refine_from_true_pose_stays_close() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&synth(dir.path())), 0);
    let s = dir.path().join("scene_000");
    let gt_line = fs::read_to_string(s.join("test/poses.txt")).unwrap().lines().next().unwrap().to_string();
    let init = dir.path().join("init.txt");
    fs::write(&init, format!("{gt_line}\n")).unwrap();
    let out = dir.path().join("refined.txt");
    let o = splatloc(&[
        "refine",
        "--scene",
        p(&s.join("scene.ply")),
        "--image",
        p(&s.join("test/images/0000.png")),
        "--intrinsics",
        p(&s.join("intrinsics.txt")),
        "--init-pose",
        p(&init),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let parse = |l: &str| l.split_whitespace().map(|t| t.parse::<f64>().unwrap()).collect::<Vec<_>>();
    let (a, b) = (parse(&gt_line), parse(fs::read_to_string(&out).unwrap().trim()));
    assert_eq!(a.len(), 7);
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 0.02), "{a:?} vs {b:?}");
}
