//! Plain-text file formats and atomic writes.
//!
//! * Matrix files: a `rows cols` header, then `rows` lines of `cols`
//!   space-separated numbers, written in shortest round-trip notation.
//! * Config files (hyperparameters, search plans, archive manifests):
//!   `key value...` lines; `#` starts a comment.
//! * Data directories: `features.txt`, `labels.txt`, `class_attr.txt`,
//!   `split.txt` and optionally `defined.txt`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use szsc_core::inference::ConfidenceReport;
use szsc_core::{ClassId, Dataset, HyperParams, MatchSpace, Matrix, ResidualCenters};

use crate::error::{CliError, Result};

/// Writes `contents` to a sibling temp file and renames it over `path`.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn format_matrix(m: &Matrix) -> String {
    let mut s = String::with_capacity(m.rows() * m.cols() * 24 + 16);
    let _ = writeln!(s, "{} {}", m.rows(), m.cols());
    for i in 0..m.rows() {
        for (j, v) in m.row(i).iter().enumerate() {
            if j > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{v:e}");
        }
        s.push('\n');
    }
    s
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, tok: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| CliError::parse(path, line, format!("cannot parse {tok:?}")))
}

pub fn parse_matrix(text: &str, path: &Path) -> Result<Matrix> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| CliError::parse(path, 1, "empty matrix file"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| parse_num(path, hl, t))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(CliError::parse(path, hl, "header must be `rows cols`"));
    };
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen_rows = 0;
    for (ln, line) in lines {
        let before = data.len();
        for tok in line.split_whitespace() {
            data.push(parse_num::<f64>(path, ln, tok)?);
        }
        if data.len() - before != cols {
            return Err(CliError::parse(
                path,
                ln,
                format!("expected {cols} values, found {}", data.len() - before),
            ));
        }
        seen_rows += 1;
    }
    if seen_rows != rows {
        return Err(CliError::parse(path, hl, format!("header declares {rows} rows, body has {seen_rows}")));
    }
    Matrix::from_vec(rows, cols, data).map_err(|e| CliError::parse(path, hl, e.to_string()))
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    parse_matrix(&read_text(path)?, path)
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    atomic_write(path, format_matrix(m).as_bytes())
}

fn parse_ids(path: &Path, line: usize, toks: &[&str]) -> Result<Vec<ClassId>> {
    toks.iter().map(|t| parse_num(path, line, t).map(ClassId)).collect()
}

fn join<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn read_labels(path: &Path) -> Result<Vec<ClassId>> {
    let text = read_text(path)?;
    content_lines(&text)
        .map(|(ln, l)| parse_num(path, ln, l).map(ClassId))
        .collect()
}

pub fn format_labels(labels: &[ClassId]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

/// Parsed `key value...` config: keys in file order with their tokens.
pub struct Config {
    pub path: std::path::PathBuf,
    pub entries: Vec<(usize, String, Vec<String>)>,
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        let mut keys = BTreeSet::new();
        for (ln, line) in content_lines(text) {
            let mut toks = line.split_whitespace();
            let key = toks.next().expect("non-empty line").to_string();
            let values: Vec<String> = toks.map(str::to_string).collect();
            if values.is_empty() {
                return Err(CliError::parse(path, ln, format!("key {key:?} has no value")));
            }
            if !keys.insert(key.clone()) {
                return Err(CliError::parse(path, ln, format!("duplicate key {key:?}")));
            }
            entries.push((ln, key, values));
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, path)
    }

    pub fn get(&self, key: &str) -> Option<(usize, &[String])> {
        self.entries
            .iter()
            .find(|(_, k, _)| k == key)
            .map(|(ln, _, v)| (*ln, v.as_slice()))
    }

    pub fn single(&self, key: &str) -> Result<Option<&str>> {
        match self.get(key) {
            None => Ok(None),
            Some((_, [v])) => Ok(Some(v)),
            Some((ln, _)) => Err(CliError::parse(&self.path, ln, format!("{key} takes one value"))),
        }
    }

    pub fn parse_list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.get(key) {
            None => Ok(None),
            Some((ln, vals)) => vals
                .iter()
                .map(|v| parse_num(&self.path, ln, v))
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}

/// Keys understood by [`apply_param`].
pub const PARAM_KEYS: &[&str] = &[
    "alpha",
    "beta",
    "delta",
    "eta",
    "gamma",
    "lambda",
    "k_l",
    "k_r",
    "tau",
    "epsilon",
    "seed",
    "residual_centers",
    "match_space",
    "max_iters",
    "rel_tol",
    "jitter",
];

/// Sets one hyperparameter from its text value.
pub fn apply_param(p: &mut HyperParams, key: &str, value: &str) -> std::result::Result<(), String> {
    fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
        v.parse().map_err(|_| format!("cannot parse {v:?}"))
    }
    match key {
        "alpha" => p.alpha = num(value)?,
        "beta" => p.beta = num(value)?,
        "delta" => p.delta = num(value)?,
        "eta" => p.eta = num(value)?,
        "gamma" => p.gamma = num(value)?,
        "lambda" => p.lambda = num(value)?,
        "k_l" => p.k_l = if value == "auto" { None } else { Some(num(value)?) },
        "k_r" => p.k_r = num(value)?,
        "tau" => p.tau = num(value)?,
        "epsilon" => p.epsilon = num(value)?,
        "seed" => p.seed = num(value)?,
        "residual_centers" => {
            p.residual_centers = match value {
                "training_codes" => ResidualCenters::TrainingCodes,
                "reinferred" => ResidualCenters::Reinferred,
                _ => return Err(format!("unknown residual_centers {value:?}")),
            }
        }
        "match_space" => {
            p.match_space = match value {
                "defined" => MatchSpace::Defined,
                "latent" => MatchSpace::Latent,
                _ => return Err(format!("unknown match_space {value:?}")),
            }
        }
        "max_iters" => p.solver.max_iters = num(value)?,
        "rel_tol" => p.solver.rel_tol = num(value)?,
        "jitter" => p.solver.jitter = num(value)?,
        _ => return Err(format!("unknown key {key:?}")),
    }
    Ok(())
}

/// Reads hyperparameters from a config. Keys listed in `extra` are skipped.
pub fn params_from_config(cfg: &Config, extra: &[&str]) -> Result<HyperParams> {
    let mut p = HyperParams::default();
    for (ln, key, vals) in &cfg.entries {
        if extra.contains(&key.as_str()) {
            continue;
        }
        let [v] = vals.as_slice() else {
            return Err(CliError::parse(&cfg.path, *ln, format!("{key} takes one value")));
        };
        apply_param(&mut p, key, v).map_err(|m| CliError::parse(&cfg.path, *ln, m))?;
    }
    p.validate()?;
    Ok(p)
}

pub fn read_params(path: &Path) -> Result<HyperParams> {
    params_from_config(&Config::read(path)?, &[])
}

pub fn format_params(p: &HyperParams) -> String {
    let mut s = String::new();
    for (k, v) in [
        ("alpha", p.alpha),
        ("beta", p.beta),
        ("delta", p.delta),
        ("eta", p.eta),
        ("gamma", p.gamma),
        ("lambda", p.lambda),
    ] {
        let _ = writeln!(s, "{k} {v:e}");
    }
    match p.k_l {
        Some(k) => {
            let _ = writeln!(s, "k_l {k}");
        }
        None => s.push_str("k_l auto\n"),
    }
    let _ = writeln!(s, "k_r {}", p.k_r);
    let _ = writeln!(s, "tau {:e}", p.tau);
    let _ = writeln!(s, "epsilon {:e}", p.epsilon);
    let _ = writeln!(s, "seed {}", p.seed);
    let rc = match p.residual_centers {
        ResidualCenters::TrainingCodes => "training_codes",
        ResidualCenters::Reinferred => "reinferred",
    };
    let ms = match p.match_space {
        MatchSpace::Defined => "defined",
        MatchSpace::Latent => "latent",
    };
    let _ = writeln!(s, "residual_centers {rc}");
    let _ = writeln!(s, "match_space {ms}");
    let _ = writeln!(s, "max_iters {}", p.solver.max_iters);
    let _ = writeln!(s, "rel_tol {:e}", p.solver.rel_tol);
    let _ = writeln!(s, "jitter {:e}", p.solver.jitter);
    s
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let features = read_matrix(&dir.join("features.txt"))?;
    let labels = read_labels(&dir.join("labels.txt"))?;
    let class_attr = read_matrix(&dir.join("class_attr.txt"))?;
    let defined_path = dir.join("defined.txt");
    let defined = if defined_path.exists() {
        Some(read_matrix(&defined_path)?)
    } else {
        None
    };
    let split_path = dir.join("split.txt");
    let split = Config::read(&split_path)?;
    let ids = |key: &str| -> Result<BTreeSet<ClassId>> {
        match split.get(key) {
            Some((ln, vals)) => {
                let toks: Vec<&str> = vals.iter().map(String::as_str).collect();
                Ok(parse_ids(&split_path, ln, &toks)?.into_iter().collect())
            }
            None => Ok(BTreeSet::new()),
        }
    };
    let dataset = Dataset {
        features,
        labels,
        defined,
        class_attr,
        seen: ids("seen")?,
        unseen: ids("unseen")?,
    };
    let violations = dataset.validate();
    if let Some(v) = violations.first() {
        return Err(CliError::Invalid(format!(
            "{}: {} violation(s), first: {v}",
            dir.display(),
            violations.len()
        )));
    }
    Ok(dataset)
}

pub fn save_dataset(dir: &Path, d: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_matrix(&dir.join("features.txt"), &d.features)?;
    atomic_write(&dir.join("labels.txt"), format_labels(&d.labels).as_bytes())?;
    write_matrix(&dir.join("class_attr.txt"), &d.class_attr)?;
    if let Some(def) = &d.defined {
        write_matrix(&dir.join("defined.txt"), def)?;
    }
    let mut split = String::new();
    for (key, set) in [("seen", &d.seen), ("unseen", &d.unseen)] {
        if !set.is_empty() {
            let _ = writeln!(split, "{key} {}", join(set.iter()));
        }
    }
    atomic_write(&dir.join("split.txt"), split.as_bytes())
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub sample: usize,
    pub predicted: ClassId,
    pub conf_d: f64,
    pub conf_r: f64,
    pub conf: f64,
}

impl PredictionRow {
    pub fn from_report(sample: usize, r: &ConfidenceReport) -> Self {
        Self {
            sample,
            predicted: r.predicted,
            conf_d: r.conf_d,
            conf_r: r.conf_r,
            conf: r.conf,
        }
    }
}

pub const PREDICTION_HEADER: &str = "# sample predicted conf_d conf_r conf\n";

pub fn format_predictions(rows: &[PredictionRow]) -> String {
    let mut s = String::from(PREDICTION_HEADER);
    for r in rows {
        let _ = writeln!(s, "{} {} {:e} {:e} {:e}", r.sample, r.predicted, r.conf_d, r.conf_r, r.conf);
    }
    s
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let text = read_text(path)?;
    content_lines(&text)
        .map(|(ln, line)| {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 5 {
                return Err(CliError::parse(path, ln, "expected `sample predicted conf_d conf_r conf`"));
            }
            Ok(PredictionRow {
                sample: parse_num(path, ln, t[0])?,
                predicted: ClassId(parse_num(path, ln, t[1])?),
                conf_d: parse_num(path, ln, t[2])?,
                conf_r: parse_num(path, ln, t[3])?,
                conf: parse_num(path, ln, t[4])?,
            })
        })
        .collect()
}

/// External classifier output: `sample predicted confidence` per line.
pub fn read_external(path: &Path) -> Result<Vec<(usize, ClassId, f64)>> {
    let text = read_text(path)?;
    content_lines(&text)
        .map(|(ln, line)| {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 3 {
                return Err(CliError::parse(path, ln, "expected `sample predicted confidence`"));
            }
            Ok((
                parse_num(path, ln, t[0])?,
                ClassId(parse_num(path, ln, t[1])?),
                parse_num(path, ln, t[2])?,
            ))
        })
        .collect()
}

pub fn format_external(rows: &[(usize, ClassId, f64)]) -> String {
    let mut s = String::from("# sample predicted confidence\n");
    for (i, c, v) in rows {
        let _ = writeln!(s, "{i} {c} {v:e}");
    }
    s
}
