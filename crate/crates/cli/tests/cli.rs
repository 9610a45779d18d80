use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn curviqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curviqa"))
        .args(args)
        .env_remove("CURVIQA_WORKERS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic wn/gblur dataset; returns the manifest path.
fn synth(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    let out = curviqa(&["synth", "--out", s(&data), "--bases", "6", "--seed", "3"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    data.join("synthetic.csv")
}

fn train(manifest: &Path, out_dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--manifest",
        s(manifest),
        "--repeats",
        "1",
        "--reduced-grid",
        "--classes",
        "wn,gblur",
        "--out",
        s(out_dir),
    ];
    args.extend_from_slice(extra);
    curviqa(&args)
}

fn data_rows(csv: &Path) -> usize {
    fs::read_to_string(csv).unwrap().lines().count() - 1
}

#[test]
fn extract_writes_one_row_per_image_deterministically() {
    let dir = TempDir::new().unwrap();
    let manifest = synth(dir.path());
    let images = dir.path().join("three");
    fs::create_dir(&images).unwrap();
    for name in ["base00_wn_0.png", "base01_gblur_2.png", "base02_wn_3.png"] {
        fs::copy(manifest.parent().unwrap().join(name), images.join(name)).unwrap();
    }
    fs::write(images.join("notes.txt"), "not an image").unwrap();

    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for path in [&a, &b] {
        let out = curviqa(&["extract", "--input", s(&images), "--out", s(path)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines.iter().all(|l| l.split(',').count() == 12));

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(code(&curviqa(&["extract", "--input", s(&empty)])), 3);

    fs::write(images.join("broken.png"), b"garbage").unwrap();
    assert_eq!(code(&curviqa(&["extract", "--input", s(&images)])), 4);
}

#[test]
fn single_round_writes_one_row_and_one_model() {
    let dir = TempDir::new().unwrap();
    let manifest = synth(dir.path());
    let run = dir.path().join("run");
    let out = train(&manifest, &run, &["--rounds", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(data_rows(&run.join("results.csv")), 1);
    let models: Vec<_> = fs::read_dir(run.join("models")).unwrap().collect();
    assert_eq!(models.len(), 1);
}

#[test]
fn repeated_runs_are_identical() {
    let dir = TempDir::new().unwrap();
    let manifest = synth(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for run in [&a, &b] {
        let out = train(
            &manifest,
            run,
            &["--rounds", "5", "--seed", "11", "--no-models"],
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let ra = fs::read_to_string(a.join("results.csv")).unwrap();
    assert_eq!(ra, fs::read_to_string(b.join("results.csv")).unwrap());
    assert_eq!(ra.lines().count(), 6);
    assert!(!a.join("models").exists());
}

#[test]
fn missing_class_fails_clearly() {
    let dir = TempDir::new().unwrap();
    let manifest = synth(dir.path());
    let text = fs::read_to_string(&manifest).unwrap();
    let only_wn: Vec<&str> = text.lines().filter(|l| !l.contains(",gblur,")).collect();
    let wn_manifest = manifest.with_file_name("wn_only.csv");
    fs::write(&wn_manifest, only_wn.join("\n") + "\n").unwrap();
    let out = train(&wn_manifest, &dir.path().join("run"), &["--rounds", "1"]);
    assert_eq!(code(&out), 5);
    assert!(
        stderr(&out).contains("no `gblur` images"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn config_file_overrides_flags() {
    let dir = TempDir::new().unwrap();
    let manifest = synth(dir.path());
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# quick\nrounds = 2\nseed = 5\n").unwrap();
    let run = dir.path().join("run");
    let out = train(
        &manifest,
        &run,
        &["--rounds", "4", "--config", s(&cfg), "--no-models"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(data_rows(&run.join("results.csv")), 2);

    fs::write(&cfg, "rounds = many\n").unwrap();
    assert_eq!(code(&train(&manifest, &run, &["--config", s(&cfg)])), 2);
}

#[test]
fn predict_evaluate_and_model_versioning() {
    let dir = TempDir::new().unwrap();
    let manifest = synth(dir.path());
    let run = dir.path().join("run");
    let out = train(&manifest, &run, &["--rounds", "3", "--final"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let model = run.join("model.ciqm");
    let image = manifest.parent().unwrap().join("base00_wn_2.png");
    let out = curviqa(&["predict", "--model", s(&model), "--image", s(&image)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "image\tquality\tclass\tp_wn\tp_gblur\tq_wn\tq_gblur"
    );
    let cols: Vec<&str> = lines[1].split('\t').collect();
    let num = |i: usize| cols[i].parse::<f64>().unwrap();
    let (q, lo, hi) = (num(1), num(5).min(num(6)), num(5).max(num(6)));
    assert!(
        q.is_finite() && lo <= q && q <= hi,
        "{q} outside [{lo}, {hi}]"
    );
    assert_eq!(cols[2], "wn");

    let mut bytes = fs::read(&model).unwrap();
    bytes[4] = 2;
    let stale = dir.path().join("stale.ciqm");
    fs::write(&stale, bytes).unwrap();
    assert_eq!(
        code(&curviqa(&[
            "predict",
            "--model",
            s(&stale),
            "--image",
            s(&image)
        ])),
        6
    );

    let results = run.join("results.csv");
    let out = curviqa(&[
        "evaluate",
        "--results",
        s(&results),
        "--baseline",
        s(&results),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(
        stdout(&out).contains("rejections: 0 of 3"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn evaluate_flags_a_dominated_baseline() {
    let dir = TempDir::new().unwrap();
    let header = "round,test_set,srocc,krocc,accuracy,srocc_jp2k,krocc_jp2k,srocc_jpeg,krocc_jpeg,srocc_wn,krocc_wn,srocc_gblur,krocc_gblur";
    let table = |offset: f64| {
        let mut t = format!("{header}\n");
        for r in 1..=12 {
            let v = 0.80 + 0.01 * (r % 5) as f64 + offset;
            t.push_str(&format!(
                "{r},live-holdout,{v},{},{},,,,,,,,\n",
                v - 0.1,
                v - 0.05
            ));
        }
        t
    };
    let (good, bad) = (dir.path().join("good.csv"), dir.path().join("bad.csv"));
    fs::write(&good, table(0.05)).unwrap();
    fs::write(&bad, table(0.0)).unwrap();
    let comparison = dir.path().join("cmp.csv");
    let out = curviqa(&[
        "evaluate",
        "--results",
        s(&good),
        "--baseline",
        s(&bad),
        "--labels",
        "ours,theirs",
        "--csv",
        s(&comparison),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("rejections: 3 of 3"), "{text}");
    assert!(
        text.contains("significant: live-holdout srocc favours ours"),
        "{text}"
    );
    let csv = fs::read_to_string(&comparison).unwrap();
    assert_eq!(csv.lines().filter(|l| l.ends_with(",true,ours")).count(), 3);

    fs::write(&bad, format!("{header}\n1,other,0.5,0.4,0.9,,,,,,,,\n")).unwrap();
    assert_eq!(
        code(&curviqa(&[
            "evaluate",
            "--results",
            s(&good),
            "--baseline",
            s(&bad)
        ])),
        5
    );
}

#[test]
fn selftest_passes_and_detects_a_broken_window() {
    let out = curviqa(&["selftest", "--blocks", "2"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert_eq!(
        stdout(&out)
            .lines()
            .filter(|l| l.starts_with("PASS"))
            .count(),
        5
    );

    let out = curviqa(&["selftest", "--blocks", "2", "--perturb-window", "1.05"]);
    assert_eq!(code(&out), 7);
    assert!(stdout(&out)
        .lines()
        .any(|l| l.starts_with("FAIL tight-frame")));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&curviqa(&["train"])), 2);
    assert_eq!(code(&curviqa(&["frobnicate"])), 2);
    assert_eq!(code(&curviqa(&["selftest", "--workers", "0"])), 2);
}
