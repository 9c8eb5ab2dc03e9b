use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = "\
synth.train_ids = 12
synth.val_ids = 6
synth.test_ids = 12
train.epochs = 3
train.lr_switch_epoch = 2
train.batch_size = 16
";

fn apr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apr"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = apr(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn setup() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.conf"), SMALL).unwrap();
    dir
}

fn read(dir: &Path, file: &str) -> String {
    fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn train_then_eval_pipeline() {
    let tmp = setup();
    let d = tmp.path();
    ok(d, &["synth", "--config", "small.conf", "--out", "data"]);
    for f in [
        "schema.txt",
        "annotations.txt",
        "manifest.txt",
        "embeddings.bin",
        "run.json",
    ] {
        assert!(d.join("data").join(f).exists(), "{f}");
    }
    ok(
        d,
        &[
            "train",
            "--config",
            "small.conf",
            "--set",
            "data.dir=data",
            "--out",
            "tr",
            "--checkpoint-every",
            "1",
        ],
    );
    assert!(d.join("tr/checkpoint_epoch1.apr").exists());
    assert!(d.join("tr/checkpoint_epoch2.apr").exists());
    assert!(!d.join("tr/checkpoint_epoch3.apr").exists());
    let log = read(&d.join("tr"), "trainlog.csv");
    assert!(log.starts_with("epoch,lr,loss_total,loss_id,loss_att_mean,seconds\n"));
    assert_eq!(log.lines().count(), 4);

    ok(
        d,
        &[
            "eval",
            "--config",
            "small.conf",
            "--set",
            "data.dir=data",
            "--checkpoint",
            "tr/checkpoint.apr",
            "--out",
            "ev",
        ],
    );
    let report: serde_json::Value =
        serde_json::from_str(&read(&d.join("ev"), "report.json")).unwrap();
    assert_eq!(report["mode"], "apr");
    assert_eq!(report["cmc"].as_array().unwrap().len(), 50);
    assert!(report["attributes"]["mean"].is_number());
    assert!(report["camera_pairs"]["map"][0][0].is_null());
    let cmc = read(&d.join("ev"), "cmc.csv");
    assert!(cmc.starts_with("rank,accuracy\n1,"));
}

#[test]
fn lambda_zero_checkpoint_reports_baseline_2() {
    let tmp = setup();
    let d = tmp.path();
    ok(
        d,
        &[
            "train",
            "--config",
            "small.conf",
            "--set",
            "model.lambda=0",
            "--out",
            "tr",
        ],
    );
    ok(
        d,
        &[
            "eval",
            "--config",
            "small.conf",
            "--checkpoint",
            "tr/checkpoint.apr",
            "--out",
            "ev",
        ],
    );
    assert!(read(&d.join("ev"), "summary.csv").contains("mode,baseline-2\n"));

    ok(
        d,
        &[
            "train",
            "--config",
            "small.conf",
            "--set",
            "model.heads=none",
            "--set",
            "model.lambda=1",
            "--out",
            "b1",
        ],
    );
    ok(
        d,
        &[
            "eval",
            "--config",
            "small.conf",
            "--set",
            "model.heads=none",
            "--checkpoint",
            "b1/checkpoint.apr",
            "--out",
            "eb1",
        ],
    );
    assert!(read(&d.join("eb1"), "summary.csv").contains("mode,baseline-1\n"));
}

#[test]
fn sweep_table_marks_one_row() {
    let tmp = setup();
    let d = tmp.path();
    ok(
        d,
        &[
            "sweep",
            "--config",
            "small.conf",
            "--lambdas",
            "0,1,2,4,8,16",
            "--out",
            "sw",
        ],
    );
    let csv = read(&d.join("sw"), "sweep.csv");
    let rows: Vec<Vec<&str>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 6);
    let selected: Vec<usize> = (0..6).filter(|&i| rows[i][3] == "1").collect();
    assert_eq!(selected.len(), 1);
    let best = rows[selected[0]][1].parse::<f64>().unwrap();
    assert!(rows.iter().all(|r| r[1].parse::<f64>().unwrap() <= best));
    let json: serde_json::Value = serde_json::from_str(&read(&d.join("sw"), "sweep.json")).unwrap();
    assert_eq!(json["best"].as_u64().unwrap() as usize, selected[0]);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = setup();
    let d = tmp.path();
    for out in ["a", "b"] {
        ok(
            d,
            &[
                "train",
                "--config",
                "small.conf",
                "--seed",
                "5",
                "--out",
                out,
            ],
        );
        ok(
            d,
            &[
                "scale",
                "--config",
                "small.conf",
                "--seed",
                "5",
                "--sizes",
                "0,20,60",
                "--out",
                &format!("{out}-scale"),
            ],
        );
    }
    for f in ["checkpoint.apr", "trainlog.csv", "run.json"] {
        assert_eq!(
            fs::read(d.join("a").join(f)).unwrap(),
            fs::read(d.join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(
        read(&d.join("a-scale"), "scaling.csv"),
        read(&d.join("b-scale"), "scaling.csv")
    );
    let rows = read(&d.join("a-scale"), "scaling.csv");
    assert_eq!(rows.lines().count(), 4);
}

#[test]
fn run_json_echoes_resolved_config() {
    let tmp = setup();
    let d = tmp.path();
    ok(
        d,
        &[
            "stats",
            "--config",
            "small.conf",
            "--set",
            "model.lambda=2",
            "--seed",
            "9",
            "--out",
            "st",
        ],
    );
    let run: serde_json::Value = serde_json::from_str(&read(&d.join("st"), "run.json")).unwrap();
    assert_eq!(run["seed"], "9");
    assert_eq!(run["model.lambda"], "2");
    assert_eq!(run["synth.train_ids"], "12");
    assert_eq!(run["train.momentum"], "0.9");
    assert!(read(&d.join("st"), "distribution.csv").starts_with("attribute,class,identities\n"));
    let stats: serde_json::Value =
        serde_json::from_str(&read(&d.join("st"), "stats.json")).unwrap();
    assert_eq!(stats["correlation"]["statistic"], "phi");
}

#[test]
fn errors_exit_nonzero_with_one_line() {
    let tmp = setup();
    let d = tmp.path();
    let cases: [&[&str]; 5] = [
        &["train", "--set", "no.such.key=1"],
        &["eval", "--checkpoint", "missing.apr"],
        &["train", "--set", "data.schema=missing.txt"],
        &["scale", "--sizes", "5,1"],
        &["train", "--config", "absent.conf"],
    ];
    for args in cases {
        let out = apr(d, args);
        assert!(!out.status.success(), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert_eq!(err.trim_end().lines().count(), 1, "{args:?}: {err}");
        assert!(err.starts_with("apr: error: "), "{err}");
    }
}
