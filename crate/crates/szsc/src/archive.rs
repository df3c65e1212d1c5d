//! Model archives: one matrix file per learned factor plus a manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use szsc_core::lad::LadModel;
use szsc_core::residual::ResidualModel;
use szsc_core::{AugmentedModel, ClassId};

use crate::error::{CliError, Result};
use crate::io::{format_matrix, format_params, params_from_config, read_matrix, Config};

pub const FORMAT_VERSION: &str = "1";
const MANIFEST: &str = "manifest.txt";
const FACTORS: [&str; 10] = ["q_d", "l", "q_l", "u", "q_r", "r_s", "v", "w", "r_o", "class_attr_seen"];
const DIM_KEYS: [&str; 5] = ["dim_features", "dim_latent", "dim_defined", "dim_residual", "n_train"];

fn factors(m: &AugmentedModel) -> [&szsc_core::Matrix; 10] {
    [
        &m.lad.q_d,
        &m.lad.l,
        &m.lad.q_l,
        &m.lad.u,
        &m.residual.q_r,
        &m.residual.r_s,
        &m.residual.v,
        &m.residual.w,
        &m.residual.r_o,
        &m.class_attr_seen,
    ]
}

fn manifest(m: &AugmentedModel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "format_version {FORMAT_VERSION}");
    let dims = [m.feature_dim(), m.latent_dim(), m.attr_dim(), m.residual_dim(), m.lad.l.cols()];
    for (k, v) in DIM_KEYS.iter().zip(dims) {
        let _ = writeln!(s, "{k} {v}");
    }
    let seen: Vec<String> = m.seen.iter().map(|c| c.to_string()).collect();
    let _ = writeln!(s, "seen {}", seen.join(" "));
    s.push_str(&format_params(&m.params));
    s
}

/// Writes the archive into a fresh directory next to `dir`, then swaps it in.
/// Extra files (name, contents) are stored alongside the factors.
pub fn save_model(dir: &Path, model: &AugmentedModel, extra: &[(&str, String)]) -> Result<()> {
    model.check_dims()?;
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    let staging = tempfile::Builder::new()
        .prefix(".szsc-model-")
        .tempdir_in(parent)
        .map_err(|e| CliError::io(parent, e))?;
    let write = |name: &str, body: &str| {
        let p = staging.path().join(name);
        fs::write(&p, body).map_err(|e| CliError::io(&p, e))
    };
    for (name, m) in FACTORS.iter().zip(factors(model)) {
        write(&format!("{name}.txt"), &format_matrix(m))?;
    }
    for (name, body) in extra {
        write(name, body)?;
    }
    write(MANIFEST, &manifest(model))?;

    let staged = staging.keep();
    if dir.exists() {
        let old = tempfile::Builder::new()
            .prefix(".szsc-old-")
            .tempdir_in(parent)
            .map_err(|e| CliError::io(parent, e))?;
        let old_path = old.path().join("model");
        fs::rename(dir, &old_path).map_err(|e| CliError::io(dir, e))?;
        if let Err(e) = fs::rename(&staged, dir) {
            let _ = fs::rename(&old_path, dir);
            let _ = fs::remove_dir_all(&staged);
            return Err(CliError::io(dir, e));
        }
    } else if let Err(e) = fs::rename(&staged, dir) {
        let _ = fs::remove_dir_all(&staged);
        return Err(CliError::io(dir, e));
    }
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<AugmentedModel> {
    let cfg = Config::read(&dir.join(MANIFEST))?;
    match cfg.single("format_version")? {
        Some(FORMAT_VERSION) => {}
        Some(v) => return Err(CliError::Version(v.to_string())),
        None => return Err(CliError::Invalid(format!("{}: manifest lacks format_version", dir.display()))),
    }
    let mut skip: Vec<&str> = DIM_KEYS.to_vec();
    skip.extend(["format_version", "seen"]);
    let params = params_from_config(&cfg, &skip)?;
    let seen: Vec<ClassId> = cfg
        .parse_list::<usize>("seen")?
        .ok_or_else(|| CliError::Invalid("manifest lacks seen classes".into()))?
        .into_iter()
        .map(ClassId)
        .collect();
    let mut mats = Vec::with_capacity(FACTORS.len());
    for name in FACTORS {
        mats.push(read_matrix(&dir.join(format!("{name}.txt")))?);
    }
    let mut it = mats.into_iter();
    let mut next = || it.next().expect("ten factors");
    let model = AugmentedModel {
        lad: LadModel {
            q_d: next(),
            l: next(),
            q_l: next(),
            u: next(),
        },
        residual: ResidualModel {
            q_r: next(),
            r_s: next(),
            v: next(),
            w: next(),
            r_o: next(),
        },
        params,
        seen,
        class_attr_seen: next(),
    };
    model.check_dims()?;
    let dims = [model.feature_dim(), model.latent_dim(), model.attr_dim(), model.residual_dim(), model.lad.l.cols()];
    for (k, actual) in DIM_KEYS.iter().zip(dims) {
        let declared: Option<usize> = cfg.single(k)?.and_then(|v| v.parse().ok());
        if declared != Some(actual) {
            return Err(CliError::Invalid(format!(
                "manifest {k} = {declared:?} disagrees with stored factors ({actual})"
            )));
        }
    }
    Ok(model)
}
