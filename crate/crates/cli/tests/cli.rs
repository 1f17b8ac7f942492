//! End-to-end runs of the `hat` binary.

use std::path::Path;
use std::process::{Command, Output};

use hat_core::attribution::read_raw_map;
use hat_core::data::ImageBuffer;

fn hat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hat")).args(args).output().expect("spawn hat")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(text: &str, key: &str) -> String {
    text.split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .to_string()
}

fn wave(h: usize, w: usize, k: usize) -> ImageBuffer {
    ImageBuffer::from_fn(h, w, 3, |y, x, c| {
        let t = (x as f64 * (1 + k) as f64 + 0.7 * y as f64 + 3.0 * c as f64) / 7.0;
        0.5 + 0.3 * t.sin()
    })
    .unwrap()
    .quantized()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn complexity_of_the_default_network() {
    let o = hat(&["complexity", "--preset", "hat"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let params: f64 = field(&text, "params").parse().unwrap();
    assert!((params / 20.8e6 - 1.0).abs() < 0.05, "{text}");
    assert_eq!(field(&text, "hw"), "64x64");
}

#[test]
fn overrides_change_the_count() {
    let base = stdout(&hat(&["complexity", "--preset", "tiny", "--hw", "32x32"]));
    let wide = stdout(&hat(&["complexity", "--preset", "tiny", "--hw", "32x32", "--set", "channels=32"]));
    let params = |t: &str| field(t, "params").parse::<u64>().unwrap();
    assert!(params(&wide) > params(&base));
}

#[test]
fn usage_errors_exit_two_with_one_line() {
    let o = hat(&["complexity", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(String::from_utf8_lossy(&o.stderr).trim().lines().count(), 1);
    assert_eq!(hat(&["complexity", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(hat(&["complexity", "--hw", "64by64"]).status.code(), Some(2));
    assert_eq!(hat(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.png");
    let o = hat(&["sr", "--preset", "tiny", "--input", "/nonexistent/a.png", "--output", p(&out)]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn sr_doubles_the_extent_and_scores_against_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let (input, output, gt) = (dir.path().join("in.png"), dir.path().join("out.png"), dir.path().join("gt.png"));
    wave(24, 24, 0).write_png(&input).unwrap();
    wave(48, 48, 0).write_png(&gt).unwrap();
    let o = hat(&["sr", "--preset", "tiny", "--input", p(&input), "--output", p(&output), "--gt", p(&gt)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let img = ImageBuffer::read_png(&output).unwrap();
    assert_eq!((img.height(), img.width(), img.channels()), (48, 48, 3));
    let text = stdout(&o);
    assert!(field(&text, "psnr_y").parse::<f64>().unwrap().is_finite());
    assert!(field(&text, "ssim_y").parse::<f64>().unwrap() <= 1.0);
}

#[test]
fn lam_on_a_constant_image_is_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("flat.png");
    ImageBuffer::filled(16, 16, 3, 0.5).unwrap().write_png(&input).unwrap();
    let out = dir.path().join("lam");
    let o = hat(&[
        "lam",
        "--preset",
        "tiny",
        "--input",
        p(&input),
        "--x",
        "8",
        "--y",
        "8",
        "--l",
        "8",
        "--steps",
        "3",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(field(&text, "di"), "100");
    assert_eq!(field(&text, "zero_map"), "true");
    let (h, w, map) = read_raw_map(&out.join("map.bin")).unwrap();
    assert_eq!((h, w), (16, 16));
    assert!(map.iter().all(|&v| v == 0.0));
    assert!(out.join("heatmap.png").exists());
    assert!(std::fs::read_to_string(out.join("lam.txt")).unwrap().contains("di=100"));
}

#[test]
fn lam_with_a_registry_restorer() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.png");
    wave(12, 12, 1).write_png(&input).unwrap();
    let out = dir.path().join("lam");
    let o = hat(&[
        "lam",
        "--restorer",
        "identity",
        "--detector",
        "sum",
        "--input",
        p(&input),
        "--x",
        "2",
        "--y",
        "2",
        "--l",
        "4",
        "--steps",
        "5",
        "--sigma",
        "2",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(field(&stdout(&o), "completeness_residual").parse::<f64>().unwrap() < 1e-4);
    let o = hat(&["lam", "--restorer", "nope", "--input", p(&input), "--x", "0", "--y", "0", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

fn degraded_set(root: &Path) -> std::path::PathBuf {
    let hq = root.join("clean");
    std::fs::create_dir_all(&hq).unwrap();
    for k in 0..2 {
        wave(40, 40, k).write_png(&hq.join(format!("{k}.png"))).unwrap();
    }
    let data = root.join("data");
    let o = hat(&["degrade", "--input", p(&hq), "--output", p(&data), "--kind", "bicubic", "--scale", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    data.join("pairs.txt")
}

#[test]
fn degrade_writes_pairs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = degraded_set(dir.path());
    let text = std::fs::read_to_string(&manifest).unwrap();
    assert!(text.starts_with("# degradation=bicubic scale=2"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 2);
    let lq = ImageBuffer::read_png(&dir.path().join("data/lq/0.png")).unwrap();
    assert_eq!((lq.height(), lq.width()), (20, 20));
}

fn train(manifest: &Path, out: &Path, seed: &str) -> Output {
    hat(&[
        "--precision",
        "f64",
        "train",
        "--preset",
        "tiny",
        "--manifest",
        p(manifest),
        "--steps",
        "4",
        "--batch",
        "2",
        "--patch",
        "8",
        "--seed",
        seed,
        "--out",
        p(out),
    ])
}

#[test]
fn training_is_seed_reproducible_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = degraded_set(dir.path());
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let (ra, rb, rc) = (train(&manifest, &a, "5"), train(&manifest, &b, "5"), train(&manifest, &c, "6"));
    assert!(ra.status.success(), "{}", String::from_utf8_lossy(&ra.stderr));
    assert_eq!(stdout(&ra), stdout(&rb));
    assert_ne!(stdout(&ra), stdout(&rc));
    assert_eq!(stdout(&ra).lines().count(), 4);
    let log = std::fs::read_to_string(a.join("train.log")).unwrap();
    assert_eq!(log, stdout(&ra));
    assert_eq!(std::fs::read(a.join("last.ck")).unwrap(), std::fs::read(b.join("last.ck")).unwrap());

    let o =
        hat(&["train", "--manifest", p(&manifest), "--out", p(&a), "--resume", p(&a.join("last.ck")), "--steps", "9"]);
    assert_eq!(o.status.code(), Some(2));

    let sr = dir.path().join("sr.png");
    let lq = dir.path().join("data/lq/1.png");
    let o = hat(&["sr", "--checkpoint", p(&a.join("last.ck")), "--input", p(&lq), "--output", p(&sr)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o =
        hat(&["sr", "--checkpoint", p(&a.join("last.ck")), "--preset", "tiny", "--input", p(&lq), "--output", p(&sr)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn finetune_requires_a_pretrained_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = degraded_set(dir.path());
    let o = hat(&["train", "--phase", "finetune", "--manifest", p(&manifest), "--out", p(&dir.path().join("ft"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dump_features_writes_a_container() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.png");
    wave(8, 8, 2).write_png(&input).unwrap();
    let out = dir.path().join("f.ck");
    let o = hat(&["dump-features", "--preset", "tiny", "--input", p(&input), "--output", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ck = hat_core::checkpoint::Checkpoint::<f32>::load(&out).unwrap();
    assert_eq!(ck.meta.get("kind").map(String::as_str), Some("features"));
    assert_eq!(ck.tensors["output"].shape(), &[1, 3, 16, 16]);
}

#[test]
fn list_names_every_registry() {
    let text = stdout(&hat(&["list"]));
    for name in ["presets:", "tiny", "degradations:", "bicubic", "detectors:", "gradient", "restorers:", "conv"] {
        assert!(text.contains(name), "{name}");
    }
}
