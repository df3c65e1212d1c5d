mod common;

use common::*;
use nalgebra::DMatrix;
use rand::Rng;
use szsc_core::data::{one_hot, ClassId};
use szsc_core::lad::LadModel;
use szsc_core::residual::{
    class_centers, eq10_objective, fit_residual, surrogate_objective, update_qr, update_rs, update_v, update_w,
    ResidualModel,
};
use szsc_core::{HyperParams, Matrix, SolverSettings};

fn random_lad(r: &mut rand_chacha::ChaCha8Rng, k_o: usize, k_l: usize, k_d: usize, c_s: usize, n: usize) -> LadModel {
    LadModel {
        q_d: rand_matrix(r, k_o, k_l),
        l: rand_matrix(r, k_l, n),
        q_l: rand_matrix(r, k_l, k_d),
        u: rand_matrix(r, c_s, k_l),
    }
}

fn labels_h(n: usize, c: usize) -> Matrix {
    let labels: Vec<ClassId> = (0..n).map(|i| ClassId(i % c)).collect();
    let order: Vec<ClassId> = (0..c).map(ClassId).collect();
    one_hot(&labels, &order).unwrap().into_matrix()
}

/// `R_s = (Q_rᵀQ_r + δ²VᵀV + η²I)⁻¹ (Q_rᵀ(X − Q_dL) + δ²Vᵀ(H − UL) + η²WL)`.
fn rs_closed_form(
    q_r: &Matrix,
    v: &Matrix,
    w: &Matrix,
    lad: &LadModel,
    x: &Matrix,
    h: &Matrix,
    delta: f64,
    eta: f64,
) -> DMatrix<f64> {
    let (qr, v, w) = (to_na(q_r), to_na(v), to_na(w));
    let (qd, l, u) = (to_na(&lad.q_d), to_na(&lad.l), to_na(&lad.u));
    let k_r = qr.ncols();
    let lhs = qr.transpose() * &qr + v.transpose() * &v * (delta * delta)
        + DMatrix::identity(k_r, k_r) * (eta * eta);
    let rhs = qr.transpose() * (to_na(x) - &qd * &l)
        + v.transpose() * (to_na(h) - &u * &l) * (delta * delta)
        + &w * &l * (eta * eta);
    lhs.lu().solve(&rhs).unwrap()
}

#[test]
fn rs_update_matches_closed_form() {
    for seed in 0..10 {
        let mut r = rng(300 + seed);
        let lad = random_lad(&mut r, 9, 4, 3, 3, 12);
        let x = rand_matrix(&mut r, 9, 12);
        let h = labels_h(12, 3);
        let q_r = rand_matrix(&mut r, 9, 5);
        let v = rand_matrix(&mut r, 3, 5);
        let w = rand_matrix(&mut r, 5, 4);
        let (delta, eta) = (r.random_range(0.1..2.0), r.random_range(0.05..1.0));
        let ours = update_rs(&q_r, &v, &w, &lad, &x, &h, delta, eta, &SolverSettings::default()).unwrap();
        let expect = from_na(&rs_closed_form(&q_r, &v, &w, &lad, &x, &h, delta, eta));
        assert!(max_abs_diff(&ours, &expect) < 1e-9, "seed {seed}");
    }
}

#[test]
fn rs_update_matches_gradient_descent_on_stacked_objective() {
    let mut r = rng(17);
    let lad = random_lad(&mut r, 8, 3, 3, 2, 7);
    let x = rand_matrix(&mut r, 8, 7);
    let h = labels_h(7, 2);
    let q_r = rand_matrix(&mut r, 8, 4);
    let v = rand_matrix(&mut r, 2, 4);
    let w = rand_matrix(&mut r, 4, 3);
    let (delta, eta) = (0.9, 0.4);
    let (xt, qt) = szsc_core::residual::stacked_system(&q_r, &v, &w, &lad, &x, &h, delta, eta).unwrap();
    let oracle = from_na(&ridge_gd(&to_na(&qt), &to_na(&xt), 0.0, 1e-11));
    let ours = update_rs(&q_r, &v, &w, &lad, &x, &h, delta, eta, &SolverSettings::default()).unwrap();
    assert!(max_abs_diff(&ours, &oracle) < 1e-7);
}

#[test]
fn rs_update_limits() {
    let mut r = rng(21);
    let lad = random_lad(&mut r, 10, 3, 3, 2, 6);
    let x = rand_matrix(&mut r, 10, 6);
    let h = labels_h(6, 2);
    let q_r = from_na(&orthonormal(&mut r, 10, 4));
    let v = rand_matrix(&mut r, 2, 4);
    let w = rand_matrix(&mut r, 4, 3);
    let s = SolverSettings::default();

    let proj = update_rs(&q_r, &v, &w, &lad, &x, &h, 0.0, 0.0, &s).unwrap();
    let expect = q_r.t_matmul(&x.sub(&lad.q_d.matmul(&lad.l).unwrap()).unwrap()).unwrap();
    assert!(max_abs_diff(&proj, &expect) < 1e-12);

    let pinned = update_rs(&q_r, &v, &w, &lad, &x, &h, 0.0, 1e6, &s).unwrap();
    let wl = w.matmul(&lad.l).unwrap();
    for (a, b) in pinned.as_slice().iter().zip(wl.as_slice()) {
        assert!((a - b).abs() <= 1e-4 * b.abs().max(1e-3));
    }
}

#[test]
fn dictionary_updates_match_projected_gradient() {
    let s = SolverSettings::default();
    for seed in 0..5 {
        let mut r = rng(400 + seed);
        let lad = random_lad(&mut r, 9, 4, 3, 3, 15);
        let x = rand_matrix(&mut r, 9, 15).scale(3.0);
        let h = labels_h(15, 3);
        let r_s = rand_matrix(&mut r, 5, 15);
        let cases = [
            (update_qr(&x, &lad, &r_s, &s).unwrap(), x.sub(&lad.q_d.matmul(&lad.l).unwrap()).unwrap(), r_s.clone()),
            (update_v(&h, &lad, &r_s, &s).unwrap(), h.sub(&lad.u.matmul(&lad.l).unwrap()).unwrap(), r_s.clone()),
            (update_w(&r_s, &lad.l, &s).unwrap(), r_s.clone(), lad.l.clone()),
        ];
        for (k, (d, y, c)) in cases.iter().enumerate() {
            let (yn, cn) = (to_na(y), to_na(c));
            let ours = dict_objective(&yn, &to_na(d), &cn);
            let oracle = dict_objective(&yn, &dict_pg(&yn, &cn), &cn);
            assert!((ours - oracle).abs() <= 1e-6 * oracle.max(1e-12), "seed {seed} update {k}");
        }
    }
}

#[test]
fn dictionary_updates_zero_targets() {
    let mut r = rng(5);
    let lad = random_lad(&mut r, 6, 3, 3, 2, 8);
    let s = SolverSettings::default();
    let r_s = rand_matrix(&mut r, 2, 8);
    let x = lad.q_d.matmul(&lad.l).unwrap();
    assert_eq!(update_qr(&x, &lad, &r_s, &s).unwrap().max_abs(), 0.0);
    let h = lad.u.matmul(&lad.l).unwrap();
    assert_eq!(update_v(&h, &lad, &r_s, &s).unwrap().max_abs(), 0.0);
    assert_eq!(update_w(&Matrix::zeros(2, 8), &lad.l, &s).unwrap().max_abs(), 0.0);
}

#[test]
fn v_update_scalar_clip() {
    let lad = LadModel {
        q_d: Matrix::zeros(1, 1),
        l: Matrix::zeros(1, 1),
        q_l: Matrix::zeros(1, 1),
        u: Matrix::zeros(1, 1),
    };
    let h = Matrix::from_rows(&[&[4.0]]).unwrap();
    let r_s = Matrix::from_rows(&[&[1.0]]).unwrap();
    let v = update_v(&h, &lad, &r_s, &SolverSettings::default()).unwrap();
    assert!((v[(0, 0)] - 1.0).abs() < 1e-12);
}

#[test]
fn w_update_recovers_feasible_identity() {
    let mut r = rng(8);
    let l = rand_matrix(&mut r, 3, 20);
    let w = update_w(&l, &l, &SolverSettings::default()).unwrap();
    assert!(max_abs_diff(&w, &Matrix::identity(3)) < 1e-6);
}

#[test]
fn eq10_matches_naive_sum() {
    let mut r = rng(9);
    let lad = random_lad(&mut r, 6, 3, 3, 2, 8);
    let x = rand_matrix(&mut r, 6, 8);
    let h = labels_h(8, 2);
    let model = ResidualModel {
        q_r: rand_matrix(&mut r, 6, 2),
        r_s: rand_matrix(&mut r, 2, 8),
        v: rand_matrix(&mut r, 2, 2),
        w: rand_matrix(&mut r, 2, 3),
        r_o: Matrix::zeros(2, 2),
    };
    let (delta, eta) = (0.6, 0.3);
    let (qd, l, u) = (to_na(&lad.q_d), to_na(&lad.l), to_na(&lad.u));
    let (qr, rs, v, w) = (to_na(&model.q_r), to_na(&model.r_s), to_na(&model.v), to_na(&model.w));
    let sq = |m: DMatrix<f64>| m.iter().map(|v| v * v).sum::<f64>();
    let recon = sq(to_na(&x) - &qd * &l - &qr * &rs);
    let label = sq(to_na(&h) - &u * &l - &v * &rs);
    let pred = sq(&rs - &w * &l);
    let eq10 = eq10_objective(&model, &lad, &x, &h, delta, eta).unwrap();
    assert!((eq10 - (recon + delta * label - eta * pred)).abs() < 1e-10);
    let sur = surrogate_objective(&model, &lad, &x, &h, delta, eta).unwrap();
    assert!((sur - (recon + delta * delta * label + eta * eta * pred)).abs() < 1e-10);
}

struct PlantedResidual {
    x: Matrix,
    h: Matrix,
    lad: LadModel,
}

/// `X = Q_d L + Q_r R` with `R = W L`, `H = U L` exactly, and `Q_r ⟂ Q_d`.
fn planted_residual(seed: u64, noise: f64) -> PlantedResidual {
    let mut r = rng(seed);
    let (k_o, c, k_r, per) = (16, 4, 3, 10);
    let basis = orthonormal(&mut r, k_o, c + k_r);
    let q_d = basis.columns(0, c).into_owned();
    let q_r = basis.columns(c, k_r).into_owned();
    let q_l = orthonormal(&mut r, c, c);
    let h = labels_h(c * per, c);
    let l = &q_l * to_na(&h) * 2.0;
    let u = q_l.transpose() / 2.0;
    let mut w = DMatrix::from_fn(k_r, c, |_, _| r.random_range(-1.0..1.0));
    for mut col in w.column_iter_mut() {
        let n = col.norm();
        col /= n;
    }
    let res = &w * &l;
    let g = DMatrix::from_fn(k_o, c * per, |_, _| r.random_range(-1.0..1.0));
    let x = &q_d * &l + &q_r * &res + g * noise;
    PlantedResidual {
        x: from_na(&x),
        h,
        lad: LadModel {
            q_d: from_na(&q_d),
            l: from_na(&l),
            q_l: from_na(&q_l),
            u: from_na(&u),
        },
    }
}

fn fit_params(seed: u64, k_r: usize) -> HyperParams {
    HyperParams {
        k_r,
        delta: 0.5,
        eta: 0.1,
        seed,
        solver: SolverSettings {
            max_iters: 500,
            rel_tol: 1e-10,
            ..SolverSettings::default()
        },
        ..HyperParams::default()
    }
}

#[test]
fn planted_surrogate_falls_below_threshold() {
    for seed in 0..3 {
        let p = planted_residual(50 + seed, 1e-4);
        let fit = fit_residual(&p.x, &p.h, &p.lad, &fit_params(seed, 3)).unwrap();
        let last = *fit.surrogate_trace.last().unwrap();
        assert!(last < 1e-4 * p.x.frob_sq(), "seed {seed}: {last} vs {}", p.x.frob_sq());
    }
}

#[test]
fn surrogate_descends_and_constraints_hold() {
    for seed in 0..5 {
        let mut r = rng(500 + seed);
        let lad = random_lad(&mut r, 12, 4, 4, 3, 24);
        let x = rand_matrix(&mut r, 12, 24);
        let h = labels_h(24, 3);
        let mut hp = fit_params(seed, 4);
        hp.solver.max_iters = 50;
        hp.solver.rel_tol = 1e-14;
        let fit = fit_residual(&x, &h, &lad, &hp).unwrap();
        for w in fit.surrogate_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "seed {seed}");
        }
        assert_eq!(fit.surrogate_trace.len(), fit.objective_trace.len());
        for m in [&fit.model.q_r, &fit.model.v, &fit.model.w] {
            assert!(m.column_norms_sq().iter().all(|&n| n <= 1.0 + 1e-9));
        }
    }
}

#[test]
fn centers_reconstruct_class_sums() {
    let p = planted_residual(3, 0.01);
    let fit = fit_residual(&p.x, &p.h, &p.lad, &fit_params(1, 3)).unwrap();
    let m = &fit.model;
    let counts: Vec<f64> = (0..p.h.rows()).map(|c| p.h.row(c).iter().sum()).collect();
    let sums = m.r_s.matmul_t(&p.h).unwrap();
    for c in 0..p.h.rows() {
        for k in 0..m.r_o.rows() {
            assert!((m.r_o[(k, c)] * counts[c] - sums[(k, c)]).abs() < 1e-9);
        }
    }
    assert_eq!(class_centers(&m.r_s, &p.h).unwrap(), m.r_o);
}

#[test]
fn minimal_residual_dimension_and_determinism() {
    let p = planted_residual(4, 0.05);
    let a = fit_residual(&p.x, &p.h, &p.lad, &fit_params(2, 1)).unwrap();
    assert_eq!(a.model.q_r.shape(), (16, 1));
    assert_eq!(a.model.r_s.shape(), (1, 40));
    assert_eq!(a.model.w.shape(), (1, 4));
    assert_eq!(a.model.r_o.shape(), (1, 4));
    let b = fit_residual(&p.x, &p.h, &p.lad, &fit_params(2, 1)).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.surrogate_trace, b.surrogate_trace);
}
