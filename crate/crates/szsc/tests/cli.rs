mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::*;

const SMALL: &str = "classes_seen 8\nclasses_unseen 4\nsamples_per_class 10\n";

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn setup(dir: &Path) {
    fs::write(dir.join("synth.txt"), SMALL).unwrap();
    fs::write(dir.join("params.txt"), "eta 0.3\nlambda 0.4\n").unwrap();
    szsc_ok(&["synth", "--out", "data", "--config", "synth.txt", "--seed", "3"], dir);
    szsc_ok(&["train", "--data", "data/train", "--params", "params.txt", "--out", "model"], dir);
}

#[test]
fn synth_train_predict_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    assert!(d.join("model/trace.csv").exists());
    let trace = fs::read_to_string(d.join("model/trace.csv")).unwrap();
    assert!(trace.starts_with("stage,sweep,value\nlad,1,"));
    assert!(trace.contains("residual_objective,"));

    szsc_ok(&["predict", "--model", "model", "--data", "data/test", "--out", "pred.txt"], d);
    let out = szsc_ok(
        &[
            "evaluate", "--pred", "pred.txt", "--labels", "data/test/labels.txt", "--out-curve", "curve.csv", "--svg",
            "curve.svg",
        ],
        d,
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    let a: f64 = stdout.trim().strip_prefix("AURCC ").unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&a));
    let curve = fs::read_to_string(d.join("curve.csv")).unwrap();
    assert!(curve.starts_with("coverage,risk\n"));
    assert_eq!(curve.lines().last().unwrap(), format!("AURCC,{a}"));
    assert!(fs::read_to_string(d.join("curve.svg")).unwrap().starts_with("<svg"));

    szsc_ok(&["predict", "--model", "model", "--data", "data/test", "--out", "again.txt"], d);
    assert_eq!(fs::read(d.join("pred.txt")).unwrap(), fs::read(d.join("again.txt")).unwrap());

    for score in ["conf-d", "conf-r"] {
        szsc_ok(
            &[
                "evaluate", "--pred", "pred.txt", "--labels", "data/test/labels.txt", "--out-curve", "c2.csv",
                "--score", score,
            ],
            d,
        );
    }
}

#[test]
fn evaluate_matches_hand_computed_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut pred = String::from("# sample predicted conf_d conf_r conf\n");
    for (i, c) in [0.9, 0.8, 0.7, 0.6, 0.5, 0.4].iter().enumerate() {
        pred.push_str(&format!("{i} {} 0 0 {c}\n", if i < 4 { 1 } else { 2 }));
    }
    fs::write(d.join("pred.txt"), pred).unwrap();
    fs::write(d.join("labels.txt"), "1\n1\n1\n1\n1\n1\n").unwrap();
    let out = szsc_ok(&["evaluate", "--pred", "pred.txt", "--labels", "labels.txt", "--out-curve", "c.csv"], d);
    let a: f64 = String::from_utf8(out.stdout).unwrap().trim()[6..].parse().unwrap();
    assert!((a - 0.0889).abs() < 1e-4, "{a}");
}

#[test]
fn failures_report_one_coded_line_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let cases: [(&[&str], &str); 4] = [
        (&["predict", "--model", "nope", "--data", "data/test", "--out", "p.txt"], "E_IO"),
        (&["predict", "--model", "model", "--data", "data/test", "--lambda", "2", "--out", "p.txt"], "E_LAMBDA"),
        (&["frobnicate"], "E_USAGE"),
        (&["predict", "--model", "model"], "E_USAGE"),
    ];
    for (args, code) in cases {
        let o = szsc(args, d);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        let e = stderr(&o);
        assert_eq!(e.lines().count(), 1, "{e}");
        assert!(e.starts_with(&format!("error: {code}: ")), "{e}");
        assert!(!d.join("p.txt").exists());
    }
    let help = szsc(&["--help"], d);
    assert!(help.status.success());
}

#[test]
fn cv_output_feeds_train_and_ignores_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("synth.txt"), SMALL).unwrap();
    szsc_ok(&["synth", "--out", "data", "--config", "synth.txt"], d);
    fs::write(d.join("plan.txt"), "alpha 0.5 1\neta 0 0.3\nlambda 0 0.5 1\nfolds 4\n").unwrap();
    let run = |threads: &str, out: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_szsc"))
            .args(["cv", "--data", "data/train", "--plan", "plan.txt", "--out", out])
            .env("SZSC_THREADS", threads)
            .current_dir(d)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
    };
    run("1", "cv1.txt");
    run("3", "cv3.txt");
    let text = fs::read_to_string(d.join("cv1.txt")).unwrap();
    assert_eq!(text, fs::read_to_string(d.join("cv3.txt")).unwrap());
    assert!(text.contains("# stage config mean_aurcc"));
    szsc_ok(&["train", "--data", "data/train", "--params", "cv1.txt", "--out", "model"], d);
}

#[test]
fn combine_writes_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    fs::write(d.join("ext.txt"), "# sample predicted confidence\n0 9 0.8\n3 10 0.1\n").unwrap();
    let o = szsc_ok(
        &["combine", "--pred-ext", "ext.txt", "--model", "model", "--data", "data/test", "--lambda", "0.25"],
        d,
    );
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().map(|t| t.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    for (row, ext) in rows.iter().zip([0.8, 0.1]) {
        assert_eq!(row[2], ext);
        assert!((row[4] - (0.75 * ext + 0.25 * row[3])).abs() < 1e-12);
    }
    let bad = szsc(
        &["combine", "--pred-ext", "ext.txt", "--model", "model", "--data", "data/test", "--lambda", "-1"],
        d,
    );
    assert!(stderr(&bad).starts_with("error: E_LAMBDA"));
}
