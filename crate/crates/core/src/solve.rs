//! The two least-squares solvers every model update reduces to, plus cosine
//! similarity.
//!
//! * [`ridge_solve`]: `min_S (γ/2)‖S‖² + (1/2)‖B − A S‖²_F`, solved through the
//!   normal equations `(γI + AᵀA) S = AᵀB`.
//! * [`constrained_dict_solve`]: `min_D ‖Y − D C‖²_F` subject to every column of
//!   `D` having squared norm at most one. The diagonal Lagrange multipliers `Λ`
//!   are found by maximizing the dual with projected Newton steps, after which
//!   `D = Y Cᵀ (C Cᵀ + Λ)⁻¹`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{dot, norm, Cholesky, Matrix};

/// Iteration and conditioning knobs shared by every iterative routine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub max_iters: usize,
    /// Relative objective change below which an alternating fit stops.
    pub rel_tol: f64,
    /// Diagonal regularizer, relative to the mean diagonal of the normal
    /// matrix, applied only when that matrix is numerically singular.
    pub jitter: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iters: 200,
            rel_tol: 1e-6,
            jitter: 1e-8,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Input("max_iters must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::Input("rel_tol must be positive".into()));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::Input("jitter must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Factors a symmetric positive semidefinite normal matrix, adding the relative
/// jitter to its diagonal when it is numerically singular. Returns the factor
/// and the absolute jitter that was applied.
fn factor_normal(
    normal: &mut Matrix,
    jitter: f64,
    op: &'static str,
) -> Result<(Cholesky, f64)> {
    match Cholesky::new(normal) {
        Ok(ch) => Ok((ch, 0.0)),
        Err(dim) => {
            let n = normal.rows();
            let scale = normal.trace() / n as f64;
            let extra = jitter * scale;
            if !(extra > 0.0) {
                return Err(Error::Singular { op, dim });
            }
            normal.add_diag(extra);
            Cholesky::new(normal)
                .map(|ch| (ch, extra))
                .map_err(|dim| Error::Singular { op, dim })
        }
    }
}

/// Ridge-regularized multi-output least squares: returns `(γI + AᵀA)⁻¹AᵀB`.
///
/// With `gamma == 0` and a rank-deficient `A` the relative jitter from
/// `settings` is added to the normal matrix; with zero jitter that case fails
/// with [`Error::Singular`].
pub fn ridge_solve(a: &Matrix, b: &Matrix, gamma: f64, settings: &SolverSettings) -> Result<Matrix> {
    if a.rows() != b.rows() {
        return Err(Error::Shape {
            op: "ridge_solve",
            left: a.shape(),
            right: b.shape(),
        });
    }
    if !(gamma >= 0.0) {
        return Err(Error::Input(alloc::format!("ridge penalty must be >= 0, got {gamma}")));
    }
    let mut normal = a.t_matmul(a)?;
    normal.add_diag(gamma);
    let rhs = a.t_matmul(b)?;
    let (ch, _) = factor_normal(&mut normal, settings.jitter, "ridge_solve")?;
    let s = ch.solve(&rhs);
    if !s.is_finite() {
        return Err(Error::NonFinite {
            stage: "ridge_solve",
            iteration: 0,
        });
    }
    Ok(s)
}

/// Result of [`constrained_dict_solve_full`].
#[derive(Debug, Clone)]
pub struct DictSolution {
    pub dict: Matrix,
    /// Optimal dual variables, one per column of the dictionary.
    pub duals: Vec<f64>,
    pub newton_iters: usize,
}

/// Unit-column-norm constrained dictionary least squares. See
/// [`constrained_dict_solve_full`] for the multipliers.
pub fn constrained_dict_solve(y: &Matrix, c: &Matrix, settings: &SolverSettings) -> Result<Matrix> {
    constrained_dict_solve_full(y, c, settings).map(|s| s.dict)
}

const KKT_TOL: f64 = 1e-11;
/// Accepted when Newton stalls; columns are then projected onto the unit ball.
const STALL_TOL: f64 = 1e-6;

struct DualState {
    inv: Matrix,
    dict: Matrix,
    norms: Vec<f64>,
    value: f64,
}

/// Evaluates the dual `g(Λ) = ‖Y‖² − tr((CCᵀ + Λ)⁻¹ GᵀG) − Σλ` together with
/// the dictionary it induces. `None` when `CCᵀ + Λ` cannot be factored.
fn dual_state(
    base: &Matrix,
    g: &Matrix,
    gtg: &Matrix,
    y_sq: f64,
    lambda: &[f64],
) -> Option<DualState> {
    let mut m = base.clone();
    for (i, l) in lambda.iter().enumerate() {
        m[(i, i)] += l;
    }
    let inv = Cholesky::new(&m).ok()?.inverse();
    let dict = g.matmul(&inv).ok()?;
    let norms = dict.column_norms_sq();
    let tr: f64 = inv
        .as_slice()
        .iter()
        .zip(gtg.as_slice())
        .map(|(a, b)| a * b)
        .sum();
    let value = y_sq - tr - lambda.iter().sum::<f64>();
    Some(DualState {
        inv,
        dict,
        norms,
        value,
    })
}

fn kkt_violation(lambda: &[f64], norms: &[f64]) -> f64 {
    lambda
        .iter()
        .zip(norms)
        .map(|(&l, &n)| if l > 0.0 { libm::fabs(n - 1.0) } else { f64::max(n - 1.0, 0.0) })
        .fold(0.0, f64::max)
}

/// Solves `min_D ‖Y − D C‖²_F` s.t. `‖d_i‖² ≤ 1` for all columns.
///
/// Newton iterations on the dual start from `Λ = 0` and clamp at zero.
pub fn constrained_dict_solve_full(
    y: &Matrix,
    c: &Matrix,
    settings: &SolverSettings,
) -> Result<DictSolution> {
    if y.cols() != c.cols() {
        return Err(Error::Shape {
            op: "constrained_dict_solve",
            left: y.shape(),
            right: c.shape(),
        });
    }
    let k = c.rows();
    let g = y.matmul_t(c)?;
    if g.max_abs() == 0.0 {
        return Ok(DictSolution {
            dict: Matrix::zeros(y.rows(), k),
            duals: vec![0.0; k],
            newton_iters: 0,
        });
    }
    let mut base = c.matmul_t(c)?;
    // factor_normal decides whether the jitter is needed; the factor itself is
    // recomputed for every Λ below.
    factor_normal(&mut base, settings.jitter, "constrained_dict_solve")?;
    let gtg = g.t_matmul(&g)?;
    let y_sq = y.frob_sq();

    let mut lambda = vec![0.0; k];
    let mut state = dual_state(&base, &g, &gtg, y_sq, &lambda).ok_or(Error::Singular {
        op: "constrained_dict_solve",
        dim: 0,
    })?;
    let max_iters = settings.max_iters.max(100);
    for iter in 0..max_iters {
        if kkt_violation(&lambda, &state.norms) < KKT_TOL {
            return Ok(DictSolution {
                dict: state.dict,
                duals: lambda,
                newton_iters: iter,
            });
        }
        let grad: Vec<f64> = state.norms.iter().map(|n| n - 1.0).collect();
        let free: Vec<usize> = (0..k).filter(|&i| lambda[i] > 0.0 || grad[i] > 0.0).collect();

        // Negated Hessian restricted to the free set: 2 (DᵀD ∘ M⁻¹).
        let dtd = state.dict.t_matmul(&state.dict)?;
        let nf = free.len();
        let mut neg_h = Matrix::zeros(nf, nf);
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                neg_h[(a, b)] = 2.0 * dtd[(i, j)] * state.inv[(i, j)];
            }
        }
        let reg = 1e-12 * (neg_h.trace() / nf as f64).max(1e-300);
        neg_h.add_diag(reg);
        let step = match Cholesky::new(&neg_h) {
            Ok(ch) => ch.solve(&Matrix::column_vector(
                &free.iter().map(|&i| grad[i]).collect::<Vec<_>>(),
            )),
            // Fall back to a scaled gradient step.
            Err(_) => Matrix::column_vector(&free.iter().map(|&i| grad[i]).collect::<Vec<_>>()),
        };

        // Near the optimum the dual is flat to rounding, so a step that
        // halves the KKT violation is accepted if any loss is within rounding.
        let violation = kkt_violation(&lambda, &state.norms);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = lambda.clone();
            for (a, &i) in free.iter().enumerate() {
                trial[i] = f64::max(lambda[i] + t * step[(a, 0)], 0.0);
            }
            if let Some(s) = dual_state(&base, &g, &gtg, y_sq, &trial) {
                let drop = state.value - s.value;
                let ascent = drop <= 1e-14 * y_sq;
                let flat = drop <= 1e-11 * y_sq && kkt_violation(&trial, &s.norms) < 0.5 * violation;
                if ascent || flat {
                    accepted = Some((trial, s));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((l, s)) => {
                lambda = l;
                state = s;
            }
            None => break,
        }
    }
    if kkt_violation(&lambda, &state.norms) < STALL_TOL {
        let mut dict = state.dict;
        for (j, &n) in state.norms.iter().enumerate() {
            if n > 1.0 {
                let s = 1.0 / libm::sqrt(n);
                for i in 0..dict.rows() {
                    dict[(i, j)] *= s;
                }
            }
        }
        return Ok(DictSolution {
            dict,
            duals: lambda,
            newton_iters: max_iters,
        });
    }
    let primal = y.sub(&state.dict.matmul(c)?)?.frob_sq();
    Err(Error::NotConverged {
        op: "constrained_dict_solve",
        iters: max_iters,
        gap: primal - state.value,
    })
}

/// Cosine similarity; zero when either vector has norm below `1e-12`.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            op: "cosine_sim",
            left: (a.len(), 1),
            right: (b.len(), 1),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na < 1e-12 || nb < 1e-12 {
        return Ok(0.0);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}
