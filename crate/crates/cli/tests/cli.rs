use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use landmark_sr_cli::RunManifest;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_landmark-sr"));
    c.env_remove("LANDMARK_SR_SEED").env("RUST_LOG", "warn");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr line");
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not json: {line}"))
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

/// Synthetic dataset, split and a one-epoch tiny model.
fn trained(dir: &Path) {
    ok(dir, &["synth", "--out", "ds", "--count", "16", "--heatmaps", "--seed", "1"]);
    ok(dir, &["split", "--root", "ds", "--counts", "10,3,3", "--out", "splits.json"]);
    ok(
        dir,
        &[
            "train", "--root", "ds", "--splits", "splits.json", "--out", "run", "--epochs", "1", "--width", "4",
            "--refinement-blocks", "1", "--lambda-perc", "0", "--lambda-lpips", "0", "--batch-size", "4",
        ],
    );
}

#[test]
fn help_and_version_exit_zero() {
    let d = tempfile::tempdir().unwrap();
    assert!(run(d.path(), &["--help"]).status.success());
    assert!(run(d.path(), &["--version"]).status.success());
    assert!(run(d.path(), &["train", "--help"]).status.success());
}

#[test]
fn bad_arguments_exit_one_with_json() {
    let d = tempfile::tempdir().unwrap();
    let out = run(d.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["class"], "validation");

    let out = run(d.path(), &["bench", "--device", "tpu"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "invalid_config");

    std::fs::write(d.path().join("bad.json"), r#"{"trian": {}}"#).unwrap();
    let out = run(d.path(), &["count", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_data_exits_two() {
    let d = tempfile::tempdir().unwrap();
    let out = run(d.path(), &["eval", "--root", "nowhere", "--splits", "nope.json", "--baseline", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["class"], "data");

    let out = run(d.path(), &["compare-grid", "--panels", "a.png", "--out", "g.png"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.path().join("g.png").exists());
}

#[test]
fn empty_detections_file_yields_empty_index() {
    let d = tempfile::tempdir().unwrap();
    std::fs::create_dir(d.path().join("hr")).unwrap();
    std::fs::write(d.path().join("det.jsonl"), "").unwrap();
    ok(d.path(), &["heatmaps", "--detections", "det.jsonl", "--hr-dir", "hr", "--out", "hm"]);
    let index: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("hm/index.json")).unwrap()).unwrap();
    assert_eq!(index["files"].as_object().unwrap().len(), 0);
    assert!(d.path().join("hm/run_manifest.json").exists());
}

#[test]
fn heatmap_fixture_is_16_bit_and_reproducible() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["synth", "--out", "a", "--count", "3", "--heatmaps", "--seed", "4"]);
    ok(d.path(), &["synth", "--out", "b", "--count", "3", "--heatmaps", "--seed", "4"]);
    let a = files(&d.path().join("a/heatmaps"));
    assert_eq!(a.iter().filter(|p| p.extension().unwrap() == "png").count(), 3);
    for p in a.iter().filter(|p| p.extension().unwrap() == "png") {
        let img = image::open(p).unwrap();
        let luma = img.as_luma16().expect("16-bit grayscale");
        assert_eq!(luma.dimensions(), (128, 128));
        assert_eq!(luma.pixels().map(|px| px[0]).max(), Some(65535));
        let twin = d.path().join("b/heatmaps").join(p.file_name().unwrap());
        assert_eq!(std::fs::read(p).unwrap(), std::fs::read(twin).unwrap());
    }
    assert_eq!(
        std::fs::read(d.path().join("a/detections.jsonl")).unwrap(),
        std::fs::read(d.path().join("b/detections.jsonl")).unwrap()
    );
}

#[test]
fn template_detections_feed_heatmaps() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["synth", "--out", "ds", "--count", "2", "--seed", "2"]);
    ok(d.path(), &["synth-detections", "--hr", "ds/hr", "--out", "tmpl.jsonl"]);
    let text = std::fs::read_to_string(d.path().join("tmpl.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 2);
    ok(d.path(), &["heatmaps", "--detections", "tmpl.jsonl", "--hr-dir", "ds/hr", "--out", "hm"]);
    assert_eq!(files(&d.path().join("hm")).len(), 2 + 2);
}

#[test]
fn split_modes() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["synth", "--out", "ds", "--count", "20", "--seed", "2"]);
    ok(d.path(), &["split", "--root", "ds", "--ratios", "0.5,0.25,0.25", "--out", "r.json"]);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(m["train"].as_array().unwrap().len(), 10);
    assert_eq!(m["val"].as_array().unwrap().len(), 5);

    std::fs::write(d.path().join("part.txt"), "000001.jpg 0\n000002.jpg 1\n000003.jpg 2\n000004.jpg 0\n").unwrap();
    ok(d.path(), &["split", "--celeba-partition", "part.txt", "--out", "c.json"]);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("c.json")).unwrap()).unwrap();
    assert_eq!(m["train"], serde_json::json!(["000001", "000004"]));
    assert_eq!(m["test"], serde_json::json!(["000003"]));

    assert_eq!(run(d.path(), &["split", "--root", "ds", "--counts", "1,2", "--out", "x.json"]).status.code(), Some(1));
}

#[test]
fn seed_flag_beats_environment() {
    let d = tempfile::tempdir().unwrap();
    let env_run = bin()
        .current_dir(d.path())
        .env("LANDMARK_SR_SEED", "7")
        .args(["synth", "--out", "e", "--count", "1"])
        .output()
        .unwrap();
    assert!(env_run.status.success());
    let m = RunManifest::load(&d.path().join("e/run_manifest.json")).unwrap();
    assert_eq!(m.seed, Some(7));

    let both = bin()
        .current_dir(d.path())
        .env("LANDMARK_SR_SEED", "7")
        .args(["synth", "--out", "f", "--count", "1", "--seed", "8"])
        .output()
        .unwrap();
    assert!(both.status.success());
    assert_eq!(RunManifest::load(&d.path().join("f/run_manifest.json")).unwrap().seed, Some(8));

    let bad = bin()
        .current_dir(d.path())
        .env("LANDMARK_SR_SEED", "seven")
        .args(["synth", "--out", "g", "--count", "1"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn count_matches_budgets() {
    let d = tempfile::tempdir().unwrap();
    for (blocks, params, macs) in [("5", 7_306_371u64, 3_987_247_104u64), ("1", 7_140_099, 1_269_338_112)] {
        let out = ok(d.path(), &["count", "--refinement-blocks", blocks]);
        let text = String::from_utf8(out.stdout).unwrap();
        let total = text.lines().find(|l| l.starts_with("total")).expect("total row");
        let cols: Vec<&str> = total.split('\t').collect();
        assert_eq!(cols[2].parse::<u64>().unwrap(), params);
        assert_eq!(cols[3].parse::<u64>().unwrap(), macs);
    }
}

#[test]
fn bench_report_file() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["bench", "--passes", "2", "--warmup", "0", "--refinement-blocks", "1", "--out", "b.json"]);
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("b.json")).unwrap()).unwrap();
    assert_eq!(r["measured_passes"], 2);
    assert_eq!(r["refinement_blocks"], 1);
    assert_eq!(r["input_shape"], serde_json::json!([1, 3, 16, 16]));
    assert!(d.path().join("b.json.run.json").exists());
}

#[test]
fn train_infer_eval_replay() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    trained(p);
    for f in ["history.csv", "best.safetensors", "last.safetensors", "summary.json", "run_manifest.json"] {
        assert!(p.join("run").join(f).exists(), "{f}");
    }

    // replay reproduces the run byte for byte
    std::fs::rename(p.join("run"), p.join("run_orig")).unwrap();
    ok(p, &["replay", "run_orig/run_manifest.json"]);
    for f in ["history.csv", "best.safetensors"] {
        assert_eq!(
            std::fs::read(p.join("run").join(f)).unwrap(),
            std::fs::read(p.join("run_orig").join(f)).unwrap(),
            "{f}"
        );
    }

    // directory inference equals per-file inference regardless of listing order
    ok(p, &["infer", "--checkpoint", "run/best.safetensors", "--input", "ds/hr", "--from-hr", "--out", "all"]);
    ok(p, &["infer", "--checkpoint", "run/best.safetensors", "--input", "ds/hr", "--from-hr", "--out", "again"]);
    for id in ["synth_000003", "synth_000011"] {
        let single = format!("one_{id}");
        let src = format!("ds/hr/{id}.png");
        ok(p, &["infer", "--checkpoint", "run/best.safetensors", "--input", &src, "--from-hr", "--out", &single]);
        let a = std::fs::read(p.join("all").join(format!("{id}.png"))).unwrap();
        assert_eq!(a, std::fs::read(p.join(&single).join(format!("{id}.png"))).unwrap());
        assert_eq!(a, std::fs::read(p.join("again").join(format!("{id}.png"))).unwrap());
    }
    let img = image::open(p.join("all/synth_000003.png")).unwrap();
    assert_eq!((img.width(), img.height()), (128, 128));

    // 128x128 input without --from-hr is the wrong size
    let out = run(p, &["infer", "--checkpoint", "run/best.safetensors", "--input", "ds/hr/synth_000001.png", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));

    ok(p, &["eval", "--root", "ds", "--splits", "splits.json", "--checkpoint", "run/best.safetensors", "--out", "ev"]);
    let csv = std::fs::read_to_string(p.join("ev/metrics.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "image_id,psnr_db,psnr_infinite,ssim,ms_ssim");
    assert_eq!(csv.lines().count(), 1 + 3);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("ev/metrics.json")).unwrap()).unwrap();
    assert_eq!(json["count"], 3);

    // five panels laid out side by side
    ok(
        p,
        &[
            "compare-grid", "--panels", "ds/hr/synth_000003.png", "all/synth_000003.png", "all/synth_000011.png",
            "ds/hr/synth_000011.png", "ds/heatmaps/synth_000003.png", "--labels", "HR", "OURS", "OURS", "HR", "HEAT",
            "--out", "grid.png",
        ],
    );
    let g = image::open(p.join("grid.png")).unwrap();
    assert_eq!(g.width(), 5 * 128 + 6 * 8);
}

#[test]
fn missing_heatmap_is_a_data_error() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["synth", "--out", "ds", "--count", "6", "--seed", "1"]);
    ok(p, &["split", "--root", "ds", "--counts", "4,1,1", "--out", "s.json"]);
    let out = run(p, &["train", "--root", "ds", "--splits", "s.json", "--out", "run", "--epochs", "1", "--width", "4"]);
    assert_eq!(out.status.code(), Some(2));
}
