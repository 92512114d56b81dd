use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/mnist-subset")
}

fn tetrolet(args: &[&str], paths: &[&Path]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tetrolet"));
    cmd.args(args);
    for p in paths {
        cmd.arg(p);
    }
    cmd.output().expect("spawn tetrolet")
}

fn run(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_tetrolet"))
        .args(args)
        .output()
        .expect("spawn tetrolet");
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn transform_then_reconstruct_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.png");
    let img =
        image::GrayImage::from_fn(32, 32, |x, y| image::Luma([((x * 7 + y * 13) % 256) as u8]));
    img.save(&input).unwrap();
    for mode in ["strict", "relaxed"] {
        let pyr = dir.path().join(format!("{mode}.pyr"));
        let out = dir.path().join(format!("{mode}.pgm"));
        let stats = run(&[
            "transform",
            "--input",
            s(&input),
            "--levels",
            "3",
            "--mode",
            mode,
            "--lambda",
            "25",
            "--out",
            s(&pyr),
        ]);
        assert!(stats.contains("coefficients    1024"), "{stats}");
        assert!(stats.contains("side info"));
        run(&["reconstruct", "--in", s(&pyr), "--out", s(&out)]);
        let back = image::open(&out).unwrap().into_luma8();
        assert_eq!(back, img);
    }
}

#[test]
fn train_then_classify_image_and_idx() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.bin");
    let data = fixture_dir();
    let msg = run(&[
        "train",
        "--data",
        s(&data),
        "--k",
        "16",
        "--tau",
        "1000",
        "--rho",
        "0.001",
        "--lambda",
        "25",
        "--seed",
        "0",
        "--limit-per-class",
        "20",
        "--out",
        s(&model),
    ]);
    assert!(msg.contains("trained on 200 images, 10 classes"), "{msg}");

    let images = data.join("subset-images-idx3-ubyte.gz");
    let out = run(&["classify", "--model", s(&model), "--input", s(&images)]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3000);
    assert!(lines[0].starts_with("0\t"));
    assert_eq!(lines[0].split('\t').count(), 4);
    // The subset cycles through the digits; the first twenty rows were trained on.
    let correct = lines[..200]
        .iter()
        .enumerate()
        .filter(|(i, l)| l.split('\t').nth(1) == Some(&(i % 10).to_string()))
        .count();
    assert!(
        correct >= 150,
        "{correct} of 200 training images recognised"
    );

    let png = dir.path().join("digit.png");
    image::GrayImage::from_pixel(28, 28, image::Luma([0]))
        .save(&png)
        .unwrap();
    let single = run(&["classify", "--model", s(&model), "--input", s(&png)]);
    assert_eq!(single.lines().count(), 1);
}

#[test]
fn evaluate_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let json = dir.path().join("r.json");
    let table = run(&[
        "evaluate",
        "--data",
        s(&fixture_dir()),
        "--folds",
        "3",
        "--seed",
        "1",
        "--k",
        "12",
        "--limit-per-class",
        "15",
        "--csv",
        s(&csv),
        "--json",
        s(&json),
    ]);
    assert!(table.contains("3-fold stratified cross-validation over 150 samples"));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("fold,k,accuracy_macro,accuracy_micro,mean_latency_ms")
    );
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().last().unwrap().starts_with("mean,12,"));
    assert!(fs::read_to_string(&json).unwrap().contains("\"folds\""));

    let with_latency = run(&[
        "evaluate",
        "--data",
        s(&fixture_dir()),
        "--folds",
        "3",
        "--k",
        "12",
        "--limit-per-class",
        "15",
        "--csv",
        "-",
        "--csv-latency",
    ]);
    assert!(!with_latency.contains(",NA"));
}

#[test]
fn sweep_reports_every_k() {
    let out = run(&[
        "sweep",
        "--data",
        s(&fixture_dir()),
        "--ks",
        "4,8,1000",
        "--seed",
        "2",
        "--folds",
        "3",
        "--limit-per-class",
        "12",
        "--csv",
        "-",
    ]);
    assert!(out.contains("k,status,accuracy_macro"));
    assert!(out.contains("\n4,completed,"));
    assert!(out.contains("\n8,completed,"));
    assert!(out.contains("\n1000,skipped,"));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.bin");
    fs::write(&junk, b"definitely not a model").unwrap();
    let out = tetrolet(
        &["classify", "--model"],
        &[&junk, Path::new("--input"), &junk],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad magic"));

    let out = tetrolet(
        &["reconstruct", "--in"],
        &[&junk, Path::new("--out"), &dir.path().join("x.png")],
    );
    assert!(!out.status.success());

    let out = tetrolet(
        &["transform", "--mode", "sideways", "--input"],
        &[&junk, Path::new("--out"), &junk],
    );
    assert!(!out.status.success());

    let out = tetrolet(&["evaluate", "--tau", "-1", "--data"], &[&fixture_dir()]);
    assert!(!out.status.success());
}
