//! Second subproblem: residual attribute learning with the latent model frozen.
//!
//! Each sweep updates, in order:
//!
//! 1. `R_s` in closed form from the stacked system
//!    `X̃ = [X_s − Q_d L; δ(H − U L); −η W L]`, `Q̃ = [Q_r; δV; −ηI]`,
//!    `R_s = (Q̃ᵀQ̃)⁻¹ Q̃ᵀ X̃`;
//! 2. `Q_r` from `min ‖X_s − Q_d L − Q_r R_s‖²`;
//! 3. `V` from `min ‖H − U L − V R_s‖²`;
//! 4. `W` from `min ‖R_s − W L‖²`;
//!
//! the last three under the unit column norm bound. Every step is an exact
//! block minimizer of the stacked surrogate
//! `‖X_s − Q_d L − Q_r R_s‖² + δ²‖H − U L − V R_s‖² + η²‖R_s − W L‖²`,
//! which is what convergence is monitored on. The scalarized objective with
//! its `−η` term is computed alongside for reporting only.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{one_hot, Dataset, HyperParams, ResidualCenters};
use crate::error::{Error, Result};
use crate::lad::{fit_lad, random_dictionary, relative_change, LadModel};
use crate::matrix::Matrix;
use crate::solve::{constrained_dict_solve, ridge_solve, SolverSettings};
use crate::ClassId;

/// Learned factors of the second subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualModel {
    /// `K_o × K_r` residual dictionary.
    pub q_r: Matrix,
    /// `K_r × N_s` residual codes of the training samples.
    pub r_s: Matrix,
    /// `C_s × K_r` residual classifier.
    pub v: Matrix,
    /// `K_r × K_l` latent-to-residual predictor.
    pub w: Matrix,
    /// `K_r × C_s` class-level residual centers.
    pub r_o: Matrix,
}

#[derive(Debug, Clone)]
pub struct ResidualFit {
    pub model: ResidualModel,
    /// Stacked surrogate after every sweep.
    pub surrogate_trace: Vec<f64>,
    /// Scalarized objective (with `−η`) after every sweep.
    pub objective_trace: Vec<f64>,
}

/// Closed-form `R_s` update.
#[allow(clippy::too_many_arguments)]
pub fn update_rs(
    q_r: &Matrix,
    v: &Matrix,
    w: &Matrix,
    lad: &LadModel,
    x: &Matrix,
    h: &Matrix,
    delta: f64,
    eta: f64,
    settings: &SolverSettings,
) -> Result<Matrix> {
    let (x_tilde, q_tilde) = stacked_system(q_r, v, w, lad, x, h, delta, eta)?;
    ridge_solve(&q_tilde, &x_tilde, 0.0, settings)
}

/// Builds `(X̃, Q̃)` of the `R_s` update.
#[allow(clippy::too_many_arguments)]
pub fn stacked_system(
    q_r: &Matrix,
    v: &Matrix,
    w: &Matrix,
    lad: &LadModel,
    x: &Matrix,
    h: &Matrix,
    delta: f64,
    eta: f64,
) -> Result<(Matrix, Matrix)> {
    let k_r = q_r.cols();
    let ul = lad.u.matmul(&lad.l)?;
    let x_tilde = Matrix::vstack(&[
        &x.sub(&lad.q_d.matmul(&lad.l)?)?,
        &h.sub(&ul)?.scale(delta),
        &w.matmul(&lad.l)?.scale(-eta),
    ])?;
    let q_tilde = Matrix::vstack(&[q_r, &v.scale(delta), &Matrix::identity(k_r).scale(-eta)])?;
    Ok((x_tilde, q_tilde))
}

pub fn update_qr(x: &Matrix, lad: &LadModel, r_s: &Matrix, settings: &SolverSettings) -> Result<Matrix> {
    let target = x.sub(&lad.q_d.matmul(&lad.l)?)?;
    constrained_dict_solve(&target, r_s, settings)
}

pub fn update_v(h: &Matrix, lad: &LadModel, r_s: &Matrix, settings: &SolverSettings) -> Result<Matrix> {
    let target = h.sub(&lad.u.matmul(&lad.l)?)?;
    constrained_dict_solve(&target, r_s, settings)
}

pub fn update_w(r_s: &Matrix, l: &Matrix, settings: &SolverSettings) -> Result<Matrix> {
    constrained_dict_solve(r_s, l, settings)
}

struct Terms {
    recon: f64,
    label: f64,
    predict: f64,
}

fn terms(model: &ResidualModel, lad: &LadModel, x: &Matrix, h: &Matrix) -> Result<Terms> {
    let recon = x
        .sub(&lad.q_d.matmul(&lad.l)?)?
        .sub(&model.q_r.matmul(&model.r_s)?)?
        .frob_sq();
    let label = h
        .sub(&lad.u.matmul(&lad.l)?)?
        .sub(&model.v.matmul(&model.r_s)?)?
        .frob_sq();
    let predict = model.r_s.sub(&model.w.matmul(&lad.l)?)?.frob_sq();
    Ok(Terms {
        recon,
        label,
        predict,
    })
}

/// `‖X_s − Q_dL − Q_rR_s‖² + δ‖H − UL − VR_s‖² − η‖R_s − WL‖²`, possibly negative.
pub fn eq10_objective(
    model: &ResidualModel,
    lad: &LadModel,
    x: &Matrix,
    h: &Matrix,
    delta: f64,
    eta: f64,
) -> Result<f64> {
    let t = terms(model, lad, x, h)?;
    Ok(t.recon + delta * t.label - eta * t.predict)
}

/// `‖X̃ − Q̃ R_s‖²`, the quantity every update decreases.
pub fn surrogate_objective(
    model: &ResidualModel,
    lad: &LadModel,
    x: &Matrix,
    h: &Matrix,
    delta: f64,
    eta: f64,
) -> Result<f64> {
    let t = terms(model, lad, x, h)?;
    Ok(t.recon + delta * delta * t.label + eta * eta * t.predict)
}

/// Per-class means of the columns of `codes`; `h` selects class membership.
pub fn class_centers(codes: &Matrix, h: &Matrix) -> Result<Matrix> {
    if codes.cols() != h.cols() {
        return Err(Error::Shape {
            op: "class_centers",
            left: codes.shape(),
            right: h.shape(),
        });
    }
    let sums = codes.matmul_t(h)?;
    let counts: Vec<f64> = (0..h.rows()).map(|r| h.row(r).iter().sum()).collect();
    let mut centers = sums;
    for j in 0..centers.cols() {
        if counts[j] == 0.0 {
            return Err(Error::Input(alloc::format!("seen class row {j} has no samples")));
        }
        for i in 0..centers.rows() {
            centers[(i, j)] /= counts[j];
        }
    }
    Ok(centers)
}

/// Runs the residual alternation with `lad` frozen and computes class centers
/// from the training codes.
pub fn fit_residual(x: &Matrix, h: &Matrix, lad: &LadModel, params: &HyperParams) -> Result<ResidualFit> {
    params.validate()?;
    if x.cols() != lad.l.cols() || h.cols() != x.cols() {
        return Err(Error::Shape {
            op: "fit_residual",
            left: x.shape(),
            right: lad.l.shape(),
        });
    }
    let settings = &params.solver;
    let (delta, eta) = (params.delta, params.eta);
    let k_r = params.k_r;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(1);
    let mut model = ResidualModel {
        q_r: random_dictionary(&mut rng, x.rows(), k_r),
        r_s: Matrix::zeros(k_r, x.cols()),
        v: random_dictionary(&mut rng, h.rows(), k_r),
        w: random_dictionary(&mut rng, k_r, lad.l.rows()),
        r_o: Matrix::zeros(k_r, h.rows()),
    };

    let mut surrogate_trace = Vec::new();
    let mut objective_trace = Vec::new();
    for iter in 0..settings.max_iters {
        model.r_s = update_rs(&model.q_r, &model.v, &model.w, lad, x, h, delta, eta, settings)?;
        model.q_r = update_qr(x, lad, &model.r_s, settings)?;
        model.v = update_v(h, lad, &model.r_s, settings)?;
        model.w = update_w(&model.r_s, &lad.l, settings)?;
        let t = terms(&model, lad, x, h)?;
        let surrogate = t.recon + delta * delta * t.label + eta * eta * t.predict;
        let objective = t.recon + delta * t.label - eta * t.predict;
        if !surrogate.is_finite() || !objective.is_finite() {
            return Err(Error::NonFinite {
                stage: "fit_residual",
                iteration: iter,
            });
        }
        let prev = surrogate_trace.last().copied();
        surrogate_trace.push(surrogate);
        objective_trace.push(objective);
        if let Some(prev) = prev {
            if relative_change(prev, surrogate) < settings.rel_tol {
                break;
            }
        }
    }
    model.r_o = class_centers(&model.r_s, h)?;
    Ok(ResidualFit {
        model,
        surrogate_trace,
        objective_trace,
    })
}

/// Everything needed to classify unseen samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel {
    pub lad: LadModel,
    pub residual: ResidualModel,
    pub params: HyperParams,
    /// Seen classes in ascending id order (columns of `class_attr_seen` and `r_o`).
    pub seen: Vec<ClassId>,
    /// `K_d × C_s` defined attributes of the seen classes.
    pub class_attr_seen: Matrix,
}

/// A trained model together with the iteration traces of both stages.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: AugmentedModel,
    pub lad_trace: Vec<f64>,
    pub surrogate_trace: Vec<f64>,
    pub objective_trace: Vec<f64>,
}

impl AugmentedModel {
    pub fn feature_dim(&self) -> usize {
        self.lad.q_d.rows()
    }

    pub fn attr_dim(&self) -> usize {
        self.lad.q_l.cols()
    }

    pub fn latent_dim(&self) -> usize {
        self.lad.q_d.cols()
    }

    pub fn residual_dim(&self) -> usize {
        self.residual.q_r.cols()
    }

    /// Fits the latent model, then the residual model, on the seen-class samples.
    pub fn train(dataset: &Dataset, params: &HyperParams) -> Result<TrainReport> {
        params.validate()?;
        let split = dataset.training_split()?;
        let h = one_hot(&split.labels, &split.seen)?.into_matrix();
        let lad = fit_lad(&split.features, &split.defined, &h, params)?;
        let res = fit_residual(&split.features, &h, &lad.model, params)?;
        let mut model = AugmentedModel {
            lad: lad.model,
            residual: res.model,
            params: params.clone(),
            seen: split.seen,
            class_attr_seen: split.class_attr_seen,
        };
        if params.residual_centers == ResidualCenters::Reinferred {
            let codes = crate::inference::infer_codes_batch(&split.features, &model, params.epsilon)?;
            model.residual.r_o = class_centers(&codes.residual, &h)?;
        }
        Ok(TrainReport {
            model,
            lad_trace: lad.trace,
            surrogate_trace: res.surrogate_trace,
            objective_trace: res.objective_trace,
        })
    }

    /// Checks mutual consistency of every stored factor.
    pub fn check_dims(&self) -> Result<()> {
        let (k_o, k_l, k_d, k_r, c_s) = (
            self.feature_dim(),
            self.latent_dim(),
            self.attr_dim(),
            self.residual_dim(),
            self.seen.len(),
        );
        let n_s = self.lad.l.cols();
        let expect = [
            ("q_d", &self.lad.q_d, (k_o, k_l)),
            ("l", &self.lad.l, (k_l, n_s)),
            ("q_l", &self.lad.q_l, (k_l, k_d)),
            ("u", &self.lad.u, (c_s, k_l)),
            ("q_r", &self.residual.q_r, (k_o, k_r)),
            ("r_s", &self.residual.r_s, (k_r, n_s)),
            ("v", &self.residual.v, (c_s, k_r)),
            ("w", &self.residual.w, (k_r, k_l)),
            ("r_o", &self.residual.r_o, (k_r, c_s)),
            ("class_attr_seen", &self.class_attr_seen, (k_d, c_s)),
        ];
        for (name, m, shape) in expect {
            if m.shape() != shape {
                return Err(Error::Input(alloc::format!(
                    "{name} is {:?}, expected {shape:?}",
                    m.shape()
                )));
            }
        }
        Ok(())
    }
}
