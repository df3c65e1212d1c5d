#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use szsc::synth::SynthConfig;
use szsc_core::inference::ConfidenceReport;
use szsc_core::{rcc, ClassId, HyperParams};

pub const SUITE_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Generator defaults with ten unseen classes and 500 training samples.
pub fn suite_config(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        classes_unseen: 10,
        samples_per_class: 50,
        ..SynthConfig::default()
    }
}

pub fn suite_params() -> HyperParams {
    HyperParams {
        eta: 0.3,
        ..HyperParams::default()
    }
}

pub fn lambda_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

pub fn correctness(reports: &[ConfidenceReport], labels: &[ClassId]) -> Vec<bool> {
    reports.iter().zip(labels).map(|(r, l)| r.predicted == *l).collect()
}

/// AURCC of `(1 − λ) conf_d + λ conf_r`.
pub fn aurcc_at(reports: &[ConfidenceReport], labels: &[ClassId], lambda: f64) -> f64 {
    let conf: Vec<f64> = reports.iter().map(|r| (1.0 - lambda) * r.conf_d + lambda * r.conf_r).collect();
    rcc(&conf, &correctness(reports, labels)).unwrap().aurcc
}

pub fn szsc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_szsc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn szsc")
}

pub fn szsc_ok(args: &[&str], cwd: &Path) -> Output {
    let out = szsc(args, cwd);
    assert!(
        out.status.success(),
        "szsc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}
