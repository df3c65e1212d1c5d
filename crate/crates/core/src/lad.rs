//! First subproblem: latent attribute dictionary learning.
//!
//! Minimizes
//! `‖X_s − Q_d L‖² + α‖L − Q_l D_s‖² + β‖H − U L‖²`
//! subject to unit-norm-bounded columns of `Q_d`, `Q_l` and `U`, by exact
//! block-coordinate minimization in the order `L, Q_d, Q_l, U`.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::HyperParams;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::solve::{constrained_dict_solve, ridge_solve, SolverSettings};

/// Learned factors of the first subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct LadModel {
    /// `K_o × K_l` defined-attribute-correlated dictionary.
    pub q_d: Matrix,
    /// `K_l × N_s` latent codes of the training samples.
    pub l: Matrix,
    /// `K_l × K_d` map from defined to latent attributes.
    pub q_l: Matrix,
    /// `C_s × K_l` seen-class classifier on latent codes.
    pub u: Matrix,
}

#[derive(Debug, Clone)]
pub struct LadFit {
    pub model: LadModel,
    /// Objective after every full sweep.
    pub trace: Vec<f64>,
}

pub(crate) fn random_dictionary(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    use rand::Rng;
    let mut m = Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0));
    m.normalize_columns();
    m
}

fn check_rows(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.rows() != b.rows() {
        return Err(Error::Shape {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

/// `‖X_s − Q_d L‖² + α‖L − Q_l D_s‖² + β‖H − U L‖²`.
pub fn lad_objective(
    model: &LadModel,
    x: &Matrix,
    d: &Matrix,
    h: &Matrix,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    let recon = x.sub(&model.q_d.matmul(&model.l)?)?.frob_sq();
    let prior = model.l.sub(&model.q_l.matmul(d)?)?.frob_sq();
    let label = h.sub(&model.u.matmul(&model.l)?)?.frob_sq();
    Ok(recon + alpha * prior + beta * label)
}

/// Exact minimizer of the objective in `L` with every other factor fixed:
/// least squares on `[Q_d; √α I; √β U] L ≈ [X_s; √α Q_l D_s; √β H]`.
#[allow(clippy::too_many_arguments)]
pub fn update_latent(
    q_d: &Matrix,
    q_l: &Matrix,
    u: &Matrix,
    x: &Matrix,
    d: &Matrix,
    h: &Matrix,
    alpha: f64,
    beta: f64,
    settings: &SolverSettings,
) -> Result<Matrix> {
    check_rows("update_latent", q_d, x)?;
    check_rows("update_latent", u, h)?;
    let k_l = q_d.cols();
    let (sa, sb) = (libm::sqrt(alpha), libm::sqrt(beta));
    let design = Matrix::vstack(&[q_d, &Matrix::identity(k_l).scale(sa), &u.scale(sb)])?;
    let target = Matrix::vstack(&[x, &q_l.matmul(d)?.scale(sa), &h.scale(sb)])?;
    ridge_solve(&design, &target, 0.0, settings)
}

/// Alternating minimization of the first subproblem from a seeded feasible start.
pub fn fit_lad(x: &Matrix, d: &Matrix, h: &Matrix, params: &HyperParams) -> Result<LadFit> {
    params.validate()?;
    for other in [d, h] {
        if other.cols() != x.cols() {
            return Err(Error::Shape {
                op: "fit_lad",
                left: x.shape(),
                right: other.shape(),
            });
        }
    }
    let k_l = params.latent_dim(d.rows());
    let settings = &params.solver;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let q_d = random_dictionary(&mut rng, x.rows(), k_l);
    let q_l = random_dictionary(&mut rng, k_l, d.rows());
    let u = random_dictionary(&mut rng, h.rows(), k_l);
    let l = q_l.matmul(d)?;
    let mut model = LadModel { q_d, l, q_l, u };

    let mut trace: Vec<f64> = Vec::new();
    for iter in 0..settings.max_iters {
        model.l = update_latent(
            &model.q_d, &model.q_l, &model.u, x, d, h, params.alpha, params.beta, settings,
        )?;
        model.q_d = constrained_dict_solve(x, &model.l, settings)?;
        if params.alpha > 0.0 {
            model.q_l = constrained_dict_solve(&model.l, d, settings)?;
        }
        if params.beta > 0.0 {
            model.u = constrained_dict_solve(h, &model.l, settings)?;
        }
        let obj = lad_objective(&model, x, d, h, params.alpha, params.beta)?;
        if !obj.is_finite() {
            return Err(Error::NonFinite {
                stage: "fit_lad",
                iteration: iter,
            });
        }
        let prev = trace.last().copied();
        trace.push(obj);
        if let Some(prev) = prev {
            if relative_change(prev, obj) < settings.rel_tol {
                break;
            }
        }
    }
    Ok(LadFit { model, trace })
}

pub(crate) fn relative_change(prev: f64, cur: f64) -> f64 {
    let denom = libm::fabs(prev).max(f64::MIN_POSITIVE);
    libm::fabs(prev - cur) / denom
}
