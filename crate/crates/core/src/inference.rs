//! Test-time encoding, zero-shot prediction and the confidence scores.
//!
//! A sample `x` is encoded by joint ridge regression on the concatenated
//! dictionary `[Q_d | Q_r]`, giving a latent code `l̂` and a residual code `r̂`.
//! Defined attributes `d̂` are recovered from `l̂` by ridge back-projection
//! through `Q_l`. The label is the unseen class whose attribute vector has the
//! largest cosine with `d̂`; that cosine is `conf_d`. The residual confidence
//! `conf_r` is the cosine between the ridge codings of `d̂` against the seen
//! class attributes and of `r̂` against the seen residual centers.

use alloc::vec::Vec;

use crate::data::{ClassId, HyperParams, MatchSpace};
use crate::error::{Error, Result};
use crate::lad::LadModel;
use crate::matrix::Matrix;
use crate::residual::AugmentedModel;
use crate::solve::{cosine_sim, ridge_solve, SolverSettings};

/// Codes of a single sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedCode {
    pub latent: Vec<f64>,
    pub residual: Vec<f64>,
    pub defined: Vec<f64>,
}

/// Codes of many samples, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeBatch {
    pub latent: Matrix,
    pub residual: Matrix,
    pub defined: Matrix,
}

impl CodeBatch {
    pub fn get(&self, j: usize) -> AugmentedCode {
        AugmentedCode {
            latent: self.latent.column(j),
            residual: self.residual.column(j),
            defined: self.defined.column(j),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceReport {
    pub predicted: ClassId,
    pub conf_d: f64,
    pub conf_r: f64,
    pub conf: f64,
    pub s_d: Vec<f64>,
    pub s_r: Vec<f64>,
}

/// Output of the selective classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept(ClassId),
    Reject,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) {
        return Err(Error::Input(alloc::format!("encoder epsilon must be > 0, got {epsilon}")));
    }
    Ok(())
}

/// Encodes every column of `x` (`K_o × N`).
pub fn infer_codes_batch(x: &Matrix, model: &AugmentedModel, epsilon: f64) -> Result<CodeBatch> {
    check_epsilon(epsilon)?;
    if !x.is_finite() {
        return Err(Error::Input("features contain non-finite values".into()));
    }
    let settings = &model.params.solver;
    let dict = Matrix::hstack(&[&model.lad.q_d, &model.residual.q_r])?;
    let joint = ridge_solve(&dict, x, epsilon, settings)?;
    let k_l = model.latent_dim();
    let latent = joint.row_block(0, k_l);
    let residual = joint.row_block(k_l, joint.rows());
    let defined = ridge_solve(&model.lad.q_l, &latent, epsilon, settings)?;
    Ok(CodeBatch {
        latent,
        residual,
        defined,
    })
}

pub fn infer_codes(x: &[f64], model: &AugmentedModel, epsilon: f64) -> Result<AugmentedCode> {
    if x.len() != model.feature_dim() {
        return Err(Error::Shape {
            op: "infer_codes",
            left: (x.len(), 1),
            right: model.lad.q_d.shape(),
        });
    }
    Ok(infer_codes_batch(&Matrix::column_vector(x), model, epsilon)?.get(0))
}

/// Nearest unseen class by cosine similarity. `prototypes` has one column per
/// entry of `ids`; ties go to the smallest id.
pub fn classify(d_hat: &[f64], prototypes: &Matrix, ids: &[ClassId]) -> Result<(ClassId, f64)> {
    if ids.is_empty() || prototypes.cols() != ids.len() {
        return Err(Error::Input("classify needs one prototype column per unseen class".into()));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by_key(|&k| ids[k]);
    let mut best: Option<(ClassId, f64)> = None;
    for k in order {
        let sim = cosine_sim(d_hat, &prototypes.column(k))?;
        if best.is_none_or(|(_, s)| sim > s) {
            best = Some((ids[k], sim));
        }
    }
    Ok(best.expect("nonempty"))
}

/// Ridge coding `argmin_s (γ/2)‖s‖² + (1/2)‖v − P s‖²` of every column of `v`.
pub fn similarity_batch(v: &Matrix, prototypes: &Matrix, gamma: f64, settings: &SolverSettings) -> Result<Matrix> {
    ridge_solve(prototypes, v, gamma, settings)
}

pub fn similarity_vector(v: &[f64], prototypes: &Matrix, gamma: f64, settings: &SolverSettings) -> Result<Vec<f64>> {
    Ok(similarity_batch(&Matrix::column_vector(v), prototypes, gamma, settings)?.column(0))
}

/// Consistency between the two similarity vectors.
pub fn conf_residual(s_d: &[f64], s_r: &[f64]) -> Result<f64> {
    cosine_sim(s_d, s_r)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::LambdaOutOfRange(lambda));
    }
    Ok(())
}

/// `(1 − λ) conf_d + λ conf_r`.
pub fn combine_conf(conf_d: f64, conf_r: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok((1.0 - lambda) * conf_d + lambda * conf_r)
}

/// Same combination with an external classifier's confidence in place of `conf_d`.
pub fn combine_external(conf_ext: f64, conf_r: f64, lambda: f64) -> Result<f64> {
    combine_conf(conf_ext, conf_r, lambda)
}

/// Accepts iff `conf > tau`.
pub fn selective_predict(report: &ConfidenceReport, tau: f64) -> Decision {
    if report.conf > tau {
        Decision::Accept(report.predicted)
    } else {
        Decision::Reject
    }
}

/// Class descriptions in the space chosen by `model.params.match_space`:
/// the given attribute columns, or their images under `Q_l`.
fn match_prototypes(model: &AugmentedModel, attrs: &Matrix) -> Result<Matrix> {
    match model.params.match_space {
        MatchSpace::Defined => Ok(attrs.clone()),
        MatchSpace::Latent => model.lad.q_l.matmul(attrs),
    }
}

/// Predicts and scores every column of `x` against the unseen classes.
///
/// `class_attr` is the full `K_d × C` table; `unseen` picks its columns.
pub fn predict_batch(
    model: &AugmentedModel,
    x: &Matrix,
    class_attr: &Matrix,
    unseen: &[ClassId],
    lambda: f64,
) -> Result<Vec<ConfidenceReport>> {
    check_lambda(lambda)?;
    if class_attr.rows() != model.attr_dim() {
        return Err(Error::Shape {
            op: "predict_batch",
            left: class_attr.shape(),
            right: model.lad.q_l.shape(),
        });
    }
    if let Some(bad) = unseen.iter().find(|c| c.0 >= class_attr.cols()) {
        return Err(Error::Input(alloc::format!("unseen class {bad} has no attribute column")));
    }
    let settings = &model.params.solver;
    let gamma = model.params.gamma;
    let codes = infer_codes_batch(x, model, model.params.epsilon)?;
    let unseen_attr = class_attr.select_columns(&unseen.iter().map(|c| c.0).collect::<Vec<_>>());
    let unseen_protos = match_prototypes(model, &unseen_attr)?;
    let seen_protos = match_prototypes(model, &model.class_attr_seen)?;
    let query = match model.params.match_space {
        MatchSpace::Defined => &codes.defined,
        MatchSpace::Latent => &codes.latent,
    };
    let s_d = similarity_batch(query, &seen_protos, gamma, settings)?;
    let s_r = similarity_batch(&codes.residual, &model.residual.r_o, gamma, settings)?;
    (0..x.cols())
        .map(|j| {
            let (predicted, conf_d) = classify(&query.column(j), &unseen_protos, unseen)?;
            let (sd, sr) = (s_d.column(j), s_r.column(j));
            let conf_r = conf_residual(&sd, &sr)?;
            Ok(ConfidenceReport {
                predicted,
                conf_d,
                conf_r,
                conf: combine_conf(conf_d, conf_r, lambda)?,
                s_d: sd,
                s_r: sr,
            })
        })
        .collect()
}

/// Predictions and `conf_d` of the latent model alone, for every column of `x`.
pub fn predict_defined_only(
    lad: &LadModel,
    params: &HyperParams,
    x: &Matrix,
    class_attr: &Matrix,
    unseen: &[ClassId],
) -> Result<Vec<(ClassId, f64)>> {
    check_epsilon(params.epsilon)?;
    if let Some(bad) = unseen.iter().find(|c| c.0 >= class_attr.cols()) {
        return Err(Error::Input(alloc::format!("unseen class {bad} has no attribute column")));
    }
    let settings = &params.solver;
    let attrs = class_attr.select_columns(&unseen.iter().map(|c| c.0).collect::<Vec<_>>());
    let latent = ridge_solve(&lad.q_d, x, params.epsilon, settings)?;
    let (query, protos) = match params.match_space {
        MatchSpace::Defined => (ridge_solve(&lad.q_l, &latent, params.epsilon, settings)?, attrs),
        MatchSpace::Latent => (latent, lad.q_l.matmul(&attrs)?),
    };
    (0..x.cols()).map(|j| classify(&query.column(j), &protos, unseen)).collect()
}

/// Single-sample form of [`predict_batch`].
pub fn predict(
    model: &AugmentedModel,
    x: &[f64],
    class_attr: &Matrix,
    unseen: &[ClassId],
    lambda: f64,
) -> Result<ConfidenceReport> {
    let mut out = predict_batch(model, &Matrix::column_vector(x), class_attr, unseen, lambda)?;
    Ok(out.remove(0))
}
