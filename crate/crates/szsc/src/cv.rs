//! Class-wise cross-validation and the staged hyperparameter search.
//!
//! Folds hold out whole seen classes, which play the part of unseen classes
//! during validation. The search runs in four stages, each scoring mean
//! validation AURCC (lower is better) and keeping the first grid entry on ties:
//!
//! 1. `α, β` with the latent classifier alone (`conf_d`);
//! 2. `δ, η, K_r` on the cached stage-1 latent fits, scored by the best mean
//!    AURCC over the `λ` grid, with `γ` at its first grid value;
//! 3. `γ`, scored the same way;
//! 4. `λ` over its grid.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use szsc_core::data::{one_hot, TrainingSplit};
use szsc_core::eval::rcc;
use szsc_core::inference::{combine_conf, predict_batch, predict_defined_only, ConfidenceReport};
use szsc_core::lad::{fit_lad, LadModel};
use szsc_core::residual::fit_residual;
use szsc_core::{AugmentedModel, ClassId, Dataset, HyperParams, Matrix};

use crate::error::{CliError, Result};
use crate::io::{apply_param, format_params, Config, PARAM_KEYS};

pub const THREADS_ENV: &str = "SZSC_THREADS";

/// Grids for every searched hyperparameter. Everything else comes from `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchPlan {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    pub eta: Vec<f64>,
    pub k_r: Vec<usize>,
    pub gamma: Vec<f64>,
    pub lambda: Vec<f64>,
    pub fold_count: usize,
    pub seed: u64,
    pub base: HyperParams,
}

pub fn default_lambda_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

impl SearchPlan {
    /// Singleton grids at the values of `base`, except `λ` which gets the
    /// default grid.
    pub fn around(base: HyperParams) -> Self {
        Self {
            alpha: vec![base.alpha],
            beta: vec![base.beta],
            delta: vec![base.delta],
            eta: vec![base.eta],
            k_r: vec![base.k_r],
            gamma: vec![base.gamma],
            lambda: default_lambda_grid(),
            fold_count: 5,
            seed: 0,
            base,
        }
    }

    pub fn validate(&self, seen_classes: usize) -> Result<()> {
        let lens = [
            ("alpha", self.alpha.len()),
            ("beta", self.beta.len()),
            ("delta", self.delta.len()),
            ("eta", self.eta.len()),
            ("k_r", self.k_r.len()),
            ("gamma", self.gamma.len()),
            ("lambda", self.lambda.len()),
        ];
        if let Some((name, _)) = lens.iter().find(|(_, n)| *n == 0) {
            return Err(CliError::Invalid(format!("grid {name} is empty")));
        }
        if self.fold_count < 2 || self.fold_count > seen_classes {
            return Err(CliError::Invalid(format!(
                "fold count {} must lie in [2, {seen_classes}]",
                self.fold_count
            )));
        }
        for p in self.configs_for_validation() {
            p.validate()?;
        }
        Ok(())
    }

    fn configs_for_validation(&self) -> Vec<HyperParams> {
        let mut out = Vec::new();
        let b = &self.base;
        out.extend(self.alpha.iter().map(|&alpha| HyperParams { alpha, ..b.clone() }));
        out.extend(self.beta.iter().map(|&beta| HyperParams { beta, ..b.clone() }));
        out.extend(self.delta.iter().map(|&delta| HyperParams { delta, ..b.clone() }));
        out.extend(self.eta.iter().map(|&eta| HyperParams { eta, ..b.clone() }));
        out.extend(self.k_r.iter().map(|&k_r| HyperParams { k_r, ..b.clone() }));
        out.extend(self.gamma.iter().map(|&gamma| HyperParams { gamma, ..b.clone() }));
        out.extend(self.lambda.iter().map(|&lambda| HyperParams { lambda, ..b.clone() }));
        out
    }

    /// Reads a plan file. Grid keys take one or more values; `folds` and
    /// `fold_seed` set the split; any other hyperparameter key sets the base.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let mut base = HyperParams::default();
        let grid_keys = ["alpha", "beta", "delta", "eta", "k_r", "gamma", "lambda"];
        for (ln, key, vals) in &cfg.entries {
            if grid_keys.contains(&key.as_str()) || key == "folds" || key == "fold_seed" {
                continue;
            }
            if !PARAM_KEYS.contains(&key.as_str()) {
                return Err(CliError::parse(&cfg.path, *ln, format!("unknown key {key:?}")));
            }
            let [v] = vals.as_slice() else {
                return Err(CliError::parse(&cfg.path, *ln, format!("{key} takes one value")));
            };
            apply_param(&mut base, key, v).map_err(|m| CliError::parse(&cfg.path, *ln, m))?;
        }
        let mut plan = Self::around(base);
        macro_rules! grid {
            ($field:ident) => {
                if let Some(v) = cfg.parse_list(stringify!($field))? {
                    plan.$field = v;
                }
            };
        }
        grid!(alpha);
        grid!(beta);
        grid!(delta);
        grid!(eta);
        grid!(k_r);
        grid!(gamma);
        grid!(lambda);
        if let Some(v) = cfg.single("folds")? {
            plan.fold_count = v.parse().map_err(|_| CliError::Invalid(format!("bad fold count {v:?}")))?;
        }
        if let Some(v) = cfg.single("fold_seed")? {
            plan.seed = v.parse().map_err(|_| CliError::Invalid(format!("bad fold seed {v:?}")))?;
        }
        Ok(plan)
    }
}

/// Assigns every class to a fold. Fold sizes differ by at most one.
pub fn class_folds(seen: &[ClassId], fold_count: usize, seed: u64) -> Result<BTreeMap<ClassId, usize>> {
    let mut ids: Vec<ClassId> = seen.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if fold_count == 0 || fold_count > ids.len() {
        return Err(CliError::Invalid(format!(
            "cannot split {} classes into {fold_count} folds",
            ids.len()
        )));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(ids.into_iter().enumerate().map(|(i, c)| (c, i % fold_count)).collect())
}

/// One cross-validation fold.
#[derive(Debug, Clone)]
pub struct Fold {
    /// Training classes as seen, validation classes as unseen.
    pub train: Dataset,
    pub split: TrainingSplit,
    /// `C_s × N_s` label indicator of the training samples.
    pub h: Matrix,
    pub val_classes: Vec<ClassId>,
    pub val_features: Matrix,
    pub val_labels: Vec<ClassId>,
}

pub fn make_folds(dataset: &Dataset, fold_count: usize, seed: u64) -> Result<Vec<Fold>> {
    let assign = class_folds(&dataset.seen_sorted(), fold_count, seed)?;
    (0..fold_count)
        .map(|f| {
            let val: BTreeSet<ClassId> = assign.iter().filter(|(_, &g)| g == f).map(|(&c, _)| c).collect();
            let train_classes: BTreeSet<ClassId> = dataset.seen.difference(&val).copied().collect();
            let mut train = dataset.subset(&dataset.sample_indices(&train_classes));
            train.seen = train_classes;
            train.unseen = val.clone();
            let split = train.training_split()?;
            let h = one_hot(&split.labels, &split.seen)?.into_matrix();
            let val_idx = dataset.sample_indices(&val);
            Ok(Fold {
                split,
                h,
                train,
                val_classes: val.into_iter().collect(),
                val_features: dataset.features.select_columns(&val_idx),
                val_labels: val_idx.iter().map(|&i| dataset.labels[i]).collect(),
            })
        })
        .collect()
}

/// Worker count from `SZSC_THREADS`, defaulting to the machine's parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Maps `f` over `items` on up to `threads` workers; output order matches input.
pub fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = threads.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().expect("result slot") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot").expect("every job ran"))
        .collect()
}

/// Validation scores of one fold: a base confidence, the residual
/// confidence and whether the prediction was right, per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldConfidences {
    pub base: Vec<f64>,
    pub conf_r: Vec<f64>,
    pub correct: Vec<bool>,
}

impl FoldConfidences {
    pub fn from_reports(reports: &[ConfidenceReport], labels: &[ClassId]) -> Self {
        Self {
            base: reports.iter().map(|r| r.conf_d).collect(),
            conf_r: reports.iter().map(|r| r.conf_r).collect(),
            correct: reports.iter().zip(labels).map(|(r, l)| r.predicted == *l).collect(),
        }
    }

    fn aurcc(&self, lambda: f64) -> Result<f64> {
        let conf: Vec<f64> = self
            .base
            .iter()
            .zip(&self.conf_r)
            .map(|(&b, &r)| combine_conf(b, r, lambda))
            .collect::<szsc_core::Result<_>>()?;
        Ok(rcc(&conf, &self.correct)?.aurcc)
    }
}

/// Mean fold AURCC for every `λ` in the grid, with the per-fold values.
pub fn lambda_sweep(folds: &[FoldConfidences], grid: &[f64]) -> Result<Vec<(f64, Vec<f64>)>> {
    grid.iter()
        .map(|&l| {
            let per: Vec<f64> = folds.iter().map(|f| f.aurcc(l)).collect::<Result<_>>()?;
            Ok((mean(&per), per))
        })
        .collect()
}

/// Grid value with the lowest mean fold AURCC (first on ties).
pub fn select_lambda(folds: &[FoldConfidences], grid: &[f64]) -> Result<(f64, f64)> {
    let sweep = lambda_sweep(folds, grid)?;
    let k = argmin(sweep.iter().map(|(m, _)| Some(*m))).expect("nonempty grid");
    Ok((grid[k], sweep[k].0))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Index of the smallest value, skipping `None`; first wins on ties.
fn argmin(values: impl Iterator<Item = Option<f64>>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if let Some(v) = v {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// One row of the search log.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub stage: u8,
    pub config: String,
    /// `None` when a fold fit failed.
    pub mean_aurcc: Option<f64>,
    pub fold_aurcc: Vec<f64>,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub params: HyperParams,
    pub table: Vec<ScoreRow>,
}

impl SearchResult {
    /// Chosen hyperparameters followed by the score table as comments.
    pub fn to_text(&self) -> String {
        let mut s = format_params(&self.params);
        s.push_str("# stage config mean_aurcc fold_aurcc note\n");
        for r in &self.table {
            let mean = r.mean_aurcc.map_or("infeasible".to_string(), |m| format!("{m:.6}"));
            let folds: Vec<String> = r.fold_aurcc.iter().map(|a| format!("{a:.6}")).collect();
            let _ = writeln!(s, "# {} {} {} [{}] {}", r.stage, r.config, mean, folds.join(","), r.note);
        }
        s
    }
}

fn lad_scores(fold: &Fold, params: &HyperParams) -> Result<(LadModel, f64)> {
    let fit = fit_lad(&fold.split.features, &fold.split.defined, &fold.h, params)?;
    let preds = predict_defined_only(
        &fit.model,
        params,
        &fold.val_features,
        &fold.train.class_attr,
        &fold.val_classes,
    )?;
    let conf: Vec<f64> = preds.iter().map(|p| p.1).collect();
    let correct: Vec<bool> = preds.iter().zip(&fold.val_labels).map(|(p, l)| p.0 == *l).collect();
    Ok((fit.model, rcc(&conf, &correct)?.aurcc))
}

fn augmented(fold: &Fold, lad: &LadModel, params: &HyperParams) -> Result<AugmentedModel> {
    let res = fit_residual(&fold.split.features, &fold.h, lad, params)?;
    Ok(AugmentedModel {
        lad: lad.clone(),
        residual: res.model,
        params: params.clone(),
        seen: fold.split.seen.clone(),
        class_attr_seen: fold.split.class_attr_seen.clone(),
    })
}

/// Trains `params` on every fold's training classes and scores the held-out classes.
pub fn fold_models(folds: &[Fold], params: &HyperParams, threads: usize) -> Result<Vec<AugmentedModel>> {
    par_map(folds, threads, |fold| {
        let lad = fit_lad(&fold.split.features, &fold.split.defined, &fold.h, params)?;
        augmented(fold, &lad.model, params)
    })
    .into_iter()
    .collect()
}

pub fn fold_reports(fold: &Fold, model: &AugmentedModel) -> Result<Vec<ConfidenceReport>> {
    Ok(predict_batch(
        model,
        &fold.val_features,
        &fold.train.class_attr,
        &fold.val_classes,
        model.params.lambda,
    )?)
}

fn fold_confidences(fold: &Fold, model: &AugmentedModel) -> Result<FoldConfidences> {
    Ok(FoldConfidences::from_reports(&fold_reports(fold, model)?, &fold.val_labels))
}

fn collect_stage<C>(
    stage: u8,
    configs: &[C],
    describe: impl Fn(&C) -> String,
    per_fold: Vec<std::result::Result<f64, String>>,
    folds: usize,
    table: &mut Vec<ScoreRow>,
) -> Vec<Option<f64>> {
    configs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let chunk = &per_fold[i * folds..(i + 1) * folds];
            let (mean_aurcc, fold_aurcc, note) = match chunk.iter().find_map(|r| r.as_ref().err()) {
                Some(e) => (None, vec![], format!("fit failed: {e}")),
                None => {
                    let v: Vec<f64> = chunk.iter().map(|r| *r.as_ref().expect("checked")).collect();
                    (Some(mean(&v)), v, String::new())
                }
            };
            table.push(ScoreRow {
                stage,
                config: describe(c),
                mean_aurcc,
                fold_aurcc,
                note,
            });
            mean_aurcc
        })
        .collect()
}

fn no_feasible(stage: u8) -> CliError {
    CliError::Invalid(format!("every configuration of search stage {stage} failed"))
}

pub fn staged_search(dataset: &Dataset, plan: &SearchPlan) -> Result<SearchResult> {
    staged_search_with_threads(dataset, plan, thread_count())
}

pub fn staged_search_with_threads(dataset: &Dataset, plan: &SearchPlan, threads: usize) -> Result<SearchResult> {
    plan.validate(dataset.seen.len())?;
    let folds = make_folds(dataset, plan.fold_count, plan.seed)?;
    let nf = folds.len();
    let mut table = Vec::new();
    let mut params = plan.base.clone();

    // Stage 1: alpha, beta.
    let ab: Vec<(f64, f64)> = plan
        .alpha
        .iter()
        .flat_map(|&a| plan.beta.iter().map(move |&b| (a, b)))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..ab.len()).flat_map(|c| (0..nf).map(move |f| (c, f))).collect();
    let lad_runs = par_map(&jobs, threads, |&(c, f)| {
        let p = HyperParams {
            alpha: ab[c].0,
            beta: ab[c].1,
            ..params.clone()
        };
        lad_scores(&folds[f], &p)
    });
    let scores: Vec<_> = lad_runs.iter().map(|r| r.as_ref().map(|x| x.1).map_err(|e| e.to_string())).collect();
    let means = collect_stage(1, &ab, |(a, b)| format!("alpha={a} beta={b}"), scores, nf, &mut table);
    let best = argmin(means.into_iter()).ok_or_else(|| no_feasible(1))?;
    (params.alpha, params.beta) = ab[best];
    let lads: Vec<LadModel> = lad_runs[best * nf..(best + 1) * nf]
        .iter()
        .map(|r| r.as_ref().expect("feasible").0.clone())
        .collect();

    // Stage 2: delta, eta, K_r at the first gamma, best over the lambda grid.
    params.gamma = plan.gamma[0];
    let mut dek = Vec::new();
    for &d in &plan.delta {
        for &e in &plan.eta {
            for &k in &plan.k_r {
                dek.push((d, e, k));
            }
        }
    }
    let jobs: Vec<(usize, usize)> = (0..dek.len()).flat_map(|c| (0..nf).map(move |f| (c, f))).collect();
    let runs = par_map(&jobs, threads, |&(c, f)| {
        let (delta, eta, k_r) = dek[c];
        let p = HyperParams {
            delta,
            eta,
            k_r,
            ..params.clone()
        };
        let model = augmented(&folds[f], &lads[f], &p)?;
        let conf = fold_confidences(&folds[f], &model)?;
        Ok::<_, CliError>((model, conf))
    });
    let best_dek = score_over_lambda(2, &dek, |(d, e, k)| format!("delta={d} eta={e} k_r={k}"), &runs, nf, plan, &mut table)?;
    (params.delta, params.eta, params.k_r) = dek[best_dek];
    let models: Vec<AugmentedModel> = runs[best_dek * nf..(best_dek + 1) * nf]
        .iter()
        .map(|r| r.as_ref().expect("feasible").0.clone())
        .collect();

    // Stage 3: gamma. The fitted factors do not depend on it.
    let jobs: Vec<(usize, usize)> = (0..plan.gamma.len()).flat_map(|c| (0..nf).map(move |f| (c, f))).collect();
    let runs = par_map(&jobs, threads, |&(c, f)| {
        let mut m = models[f].clone();
        m.params.gamma = plan.gamma[c];
        let conf = fold_confidences(&folds[f], &m)?;
        Ok::<_, CliError>(((), conf))
    });
    let best_g = score_over_lambda(3, &plan.gamma, |g| format!("gamma={g}"), &runs, nf, plan, &mut table)?;
    params.gamma = plan.gamma[best_g];

    // Stage 4: lambda.
    let confs: Vec<FoldConfidences> = runs[best_g * nf..(best_g + 1) * nf]
        .iter()
        .map(|r| r.as_ref().expect("feasible").1.clone())
        .collect();
    let sweep = lambda_sweep(&confs, &plan.lambda)?;
    for (l, (m, per)) in plan.lambda.iter().zip(&sweep) {
        table.push(ScoreRow {
            stage: 4,
            config: format!("lambda={l}"),
            mean_aurcc: Some(*m),
            fold_aurcc: per.clone(),
            note: String::new(),
        });
    }
    let best_l = argmin(sweep.iter().map(|s| Some(s.0))).expect("nonempty grid");
    params.lambda = plan.lambda[best_l];
    Ok(SearchResult { params, table })
}

/// Records one row per configuration, scored by its best mean AURCC over the
/// `λ` grid, and returns the winning configuration index.
fn score_over_lambda<C, M>(
    stage: u8,
    configs: &[C],
    describe: impl Fn(&C) -> String,
    runs: &[Result<(M, FoldConfidences)>],
    nf: usize,
    plan: &SearchPlan,
    table: &mut Vec<ScoreRow>,
) -> Result<usize> {
    let mut means = Vec::with_capacity(configs.len());
    for (c, cfg) in configs.iter().enumerate() {
        let chunk = &runs[c * nf..(c + 1) * nf];
        let row = match chunk.iter().find_map(|r| r.as_ref().err()) {
            Some(e) => ScoreRow {
                stage,
                config: describe(cfg),
                mean_aurcc: None,
                fold_aurcc: vec![],
                note: format!("fit failed: {e}"),
            },
            None => {
                let confs: Vec<FoldConfidences> = chunk.iter().map(|r| r.as_ref().expect("checked").1.clone()).collect();
                let sweep = lambda_sweep(&confs, &plan.lambda)?;
                let k = argmin(sweep.iter().map(|s| Some(s.0))).expect("nonempty grid");
                ScoreRow {
                    stage,
                    config: describe(cfg),
                    mean_aurcc: Some(sweep[k].0),
                    fold_aurcc: sweep[k].1.clone(),
                    note: format!("at lambda={}", plan.lambda[k]),
                }
            }
        };
        means.push(row.mean_aurcc);
        table.push(row);
    }
    argmin(means.into_iter()).ok_or_else(|| no_feasible(stage))
}
