use std::path::Path;
use std::process::{Command, Output};

const TINY_CFG: &str = "\
data.size = 32
net.base_channels = 4
net.refiner_channels = 4
net.latent_dim = 8
stage1.gx_steps = 2
stage1.translator_steps = 2
stage1.num_pairs = 200
train.eval_every = 1
stage2.steps = 2
stage2.batch = 2
";

fn vidstyle(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vidstyle")).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn gen_data_writes_the_dataset_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let o = vidstyle(
        tmp.path(),
        &["gen-data", "--seed", "7", "--num-scenes", "2", "--frames", "16", "--size", "64", "--out", "d"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let scenes: Vec<_> = std::fs::read_dir(tmp.path().join("d")).unwrap().collect();
    assert_eq!(scenes.len(), 2);
    for s in scenes {
        let s = s.unwrap().path();
        for part in ["frames/000015.png", "flow/000015.flo2", "mask/000015.png", "truth.json", "manifest.json"] {
            assert!(s.join(part).is_file(), "{} missing {part}", s.display());
        }
    }
}

#[test]
fn missing_config_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = vidstyle(tmp.path(), &["train", "stage1", "--data", "d", "--cfg", "missing.cfg", "--out", "x"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.cfg"));
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn misspelled_key_aborts_before_work() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.cfg"), "loss.lamda_warp = 1\n").unwrap();
    let o = vidstyle(
        tmp.path(),
        &["train", "stage2", "--data", "d", "--translator", "t", "--cfg", "bad.cfg", "--out", "x"],
    );
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("loss.lamda_warp"));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&vidstyle(tmp.path(), &["frobnicate"])), 1);
    assert_eq!(code(&vidstyle(tmp.path(), &["gen-data", "--bogus"])), 1);
    assert_eq!(code(&vidstyle(tmp.path(), &["--help"])), 0);
}

#[test]
fn runtime_failures_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = vidstyle(tmp.path(), &["stylize", "--in", "nowhere", "--translator", "none", "--no-refiner", "--out", "o"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn tiny_pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path();
    std::fs::write(p.join("tiny.cfg"), TINY_CFG).unwrap();
    let steps: &[&[&str]] = &[
        &["gen-data", "--seed", "3", "--num-scenes", "10", "--frames", "20", "--size", "32", "--out", "d"],
        &["train", "stage1", "--data", "d", "--cfg", "tiny.cfg", "--out", "s1"],
        &["train", "stage2", "--data", "d", "--translator", "s1", "--cfg", "tiny.cfg", "--out", "s2"],
        &["stylize", "--in", "d", "--translator", "s1", "--refiner", "s2", "--out", "o"],
        &["eval", "--src", "d", "--out", "o", "--truth", "d", "--report", "r.json"],
        &[
            "bench",
            "--translator",
            "s1",
            "--refiner",
            "s2",
            "--size",
            "32",
            "--report",
            "b.json",
            "--set",
            "bench.reps=10",
        ],
    ];
    for args in steps {
        let o = vidstyle(p, args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["s1/resolved.cfg", "s1/train_log.csv", "s2/resolved.cfg", "s2/meta.json"] {
        assert!(p.join(f).is_file(), "{f}");
    }
    let resolved = std::fs::read_to_string(p.join("s1/resolved.cfg")).unwrap();
    assert!(resolved.contains("data.size = 32\n") && resolved.contains("flow.provider = truth\n"));
    let log = std::fs::read_to_string(p.join("s1/train_log.csv")).unwrap();
    assert!(log.starts_with("step,term,value\n"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("r.json")).unwrap()).unwrap();
    for key in ["csim_mean", "gaze_px_mean", "warp_error", "n_frames"] {
        assert!(report.get(key).is_some(), "{key}");
    }
    assert_eq!(report["n_frames"], 200);
    let o = vidstyle(p, &["bench", "--translator", "s1", "--no-refiner", "--size", "64", "--report", "b2.json"]);
    assert_eq!(code(&o), 1, "size mismatch is a validation error");
}
