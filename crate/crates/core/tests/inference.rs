mod common;

use std::collections::BTreeSet;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use szsc_core::inference::{classify, combine_conf, infer_codes, predict, predict_batch, similarity_vector};
use szsc_core::lad::LadModel;
use szsc_core::residual::ResidualModel;
use szsc_core::solve::cosine_sim;
use szsc_core::{AugmentedModel, ClassId, Dataset, HyperParams, MatchSpace, Matrix, SolverSettings};

fn random_model(seed: u64, k_o: usize, k_l: usize, k_d: usize, k_r: usize, c_s: usize) -> AugmentedModel {
    let mut r = rng(seed);
    AugmentedModel {
        lad: LadModel {
            q_d: rand_matrix(&mut r, k_o, k_l),
            l: rand_matrix(&mut r, k_l, 3),
            q_l: rand_matrix(&mut r, k_l, k_d),
            u: rand_matrix(&mut r, c_s, k_l),
        },
        residual: ResidualModel {
            q_r: rand_matrix(&mut r, k_o, k_r),
            r_s: rand_matrix(&mut r, k_r, 3),
            v: rand_matrix(&mut r, c_s, k_r),
            w: rand_matrix(&mut r, k_r, k_l),
            r_o: rand_matrix(&mut r, k_r, c_s),
        },
        params: HyperParams {
            k_r,
            ..HyperParams::default()
        },
        seen: (0..c_s).map(ClassId).collect(),
        class_attr_seen: rand_matrix(&mut r, k_d, c_s),
    }
}

#[test]
fn planted_code_is_recovered() {
    let mut r = rng(1);
    let mut model = random_model(1, 12, 4, 4, 3, 3);
    let basis = orthonormal(&mut r, 12, 7);
    model.lad.q_d = from_na(&basis.columns(0, 4).into_owned());
    model.residual.q_r = from_na(&basis.columns(4, 3).into_owned());
    let l_star = [0.5, -1.0, 0.25, 2.0];
    let x = model.lad.q_d.matmul(&Matrix::column_vector(&l_star)).unwrap().column(0);
    let code = infer_codes(&x, &model, 1e-10).unwrap();
    for (a, b) in code.latent.iter().zip(l_star) {
        assert!((a - b).abs() < 1e-6);
    }
    assert!(code.residual.iter().all(|v| v.abs() < 1e-6));
}

#[test]
fn zero_sample_gives_zero_codes() {
    let model = random_model(2, 10, 3, 4, 2, 3);
    let code = infer_codes(&[0.0; 10], &model, 1e-3).unwrap();
    assert!(code.latent.iter().chain(&code.residual).chain(&code.defined).all(|&v| v == 0.0));
    assert!(infer_codes(&[0.0; 10], &model, 0.0).is_err());
    assert!(infer_codes(&[0.0; 9], &model, 1e-3).is_err());
}

#[test]
fn encoder_matches_gradient_descent() {
    for seed in 0..5 {
        let model = random_model(10 + seed, 9, 3, 4, 2, 3);
        let mut r = rng(90 + seed);
        let x: Vec<f64> = (0..9).map(|_| r.random_range(-1.0..1.0)).collect();
        let eps = 1e-2;
        let code = infer_codes(&x, &model, eps).unwrap();
        // 2 · [(ε/2)‖z‖² + (1/2)‖x − A z‖²] is the encoder objective.
        let a = to_na(&Matrix::hstack(&[&model.lad.q_d, &model.residual.q_r]).unwrap());
        let xn = DMatrix::from_column_slice(9, 1, &x);
        let z = ridge_gd(&a, &xn, eps, 1e-11);
        let obj = |z: &DMatrix<f64>| (&xn - &a * z).norm_squared() + eps * z.norm_squared();
        let ours = DMatrix::from_iterator(5, 1, code.latent.iter().chain(&code.residual).copied());
        assert!((obj(&ours) - obj(&z)).abs() < 1e-7, "seed {seed}");
        let ql = to_na(&model.lad.q_l);
        let d = ridge_gd(&ql, &z.rows(0, 3).into_owned(), eps, 1e-11);
        for (a, b) in code.defined.iter().zip(d.iter()) {
            assert!((a - b).abs() < 1e-7);
        }
    }
}

#[test]
fn classify_agrees_with_brute_force_scan() {
    for seed in 0..20 {
        let mut r = rng(700 + seed);
        let protos = rand_matrix(&mut r, 5, 3);
        let ids = [ClassId(2), ClassId(8), ClassId(4)];
        let d: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
        let (c, s) = classify(&d, &protos, &ids).unwrap();
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for k in 0..3 {
            let col = protos.column(k);
            let dot: f64 = d.iter().zip(&col).map(|(a, b)| a * b).sum();
            let cos = dot / (d.iter().map(|v| v * v).sum::<f64>().sqrt() * col.iter().map(|v| v * v).sum::<f64>().sqrt());
            if cos > best.1 {
                best = (k, cos);
            }
        }
        assert_eq!(c, ids[best.0]);
        assert!((s - best.1).abs() < 1e-12);
    }
}

#[test]
fn similarity_matches_normal_equations() {
    let s = SolverSettings::default();
    for seed in 0..10 {
        let mut r = rng(800 + seed);
        let p = rand_matrix(&mut r, 6, 4);
        let v: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
        let gamma = r.random_range(0.01..1.0);
        let ours = similarity_vector(&v, &p, gamma, &s).unwrap();
        let pn = to_na(&p);
        let lhs = pn.transpose() * &pn + DMatrix::identity(4, 4) * gamma;
        let oracle = lhs.lu().solve(&(pn.transpose() * DMatrix::from_column_slice(6, 1, &v))).unwrap();
        for (a, b) in ours.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}

fn toy_dataset(model: &AugmentedModel, n: usize, seed: u64) -> (Matrix, Matrix, Vec<ClassId>) {
    let mut r = rng(seed);
    let x = rand_matrix(&mut r, model.feature_dim(), n);
    let c_total = model.seen.len() + 3;
    let mut attr = rand_matrix(&mut r, model.attr_dim(), c_total);
    for (j, id) in model.seen.iter().enumerate() {
        for i in 0..attr.rows() {
            attr[(i, id.0)] = model.class_attr_seen[(i, j)];
        }
    }
    let unseen = (model.seen.len()..c_total).map(ClassId).collect();
    (x, attr, unseen)
}

#[test]
fn batch_prediction_equals_per_sample_and_is_deterministic() {
    for space in [MatchSpace::Defined, MatchSpace::Latent] {
        let mut model = random_model(5, 10, 3, 4, 2, 3);
        model.params.match_space = space;
        let (x, attr, unseen) = toy_dataset(&model, 6, 3);
        let batch = predict_batch(&model, &x, &attr, &unseen, 0.4).unwrap();
        let again = predict_batch(&model, &x, &attr, &unseen, 0.4).unwrap();
        assert_eq!(batch, again);
        for (j, rep) in batch.iter().enumerate() {
            assert_eq!(&predict(&model, &x.column(j), &attr, &unseen, 0.4).unwrap(), rep);
            assert_eq!(rep.conf, combine_conf(rep.conf_d, rep.conf_r, 0.4).unwrap());
            assert!(rep.conf_d.abs() <= 1.0 && rep.conf_r.abs() <= 1.0);
            assert_eq!(rep.s_d.len(), 3);
            assert!((rep.conf_r - cosine_sim(&rep.s_d, &rep.s_r).unwrap()).abs() == 0.0);
            assert!(unseen.contains(&rep.predicted));
        }
    }
}

#[test]
fn prediction_rejects_bad_inputs() {
    let model = random_model(6, 8, 3, 4, 2, 3);
    let (x, attr, unseen) = toy_dataset(&model, 2, 4);
    assert!(predict_batch(&model, &x, &attr, &unseen, 1.5).is_err());
    assert!(predict_batch(&model, &x, &attr, &[], 0.5).is_err());
    assert!(predict_batch(&model, &x, &attr, &[ClassId(99)], 0.5).is_err());
    assert!(predict_batch(&model, &x, &Matrix::zeros(2, 6), &unseen, 0.5).is_err());
}

#[test]
fn trained_model_predicts_with_consistent_shapes() {
    let mut r = rng(12);
    let (k_o, k_d, c) = (10, 4, 5);
    let class_attr = rand_matrix(&mut r, k_d, c);
    let labels: Vec<ClassId> = (0..40).map(|i| ClassId(i % c)).collect();
    let q = rand_matrix(&mut r, k_o, k_d);
    let mut x = Matrix::zeros(k_o, 40);
    for (j, l) in labels.iter().enumerate() {
        let col = q.matmul(&Matrix::column_vector(&class_attr.column(l.0))).unwrap();
        for i in 0..k_o {
            x[(i, j)] = col[(i, 0)] + 0.05 * r.random_range(-1.0..1.0);
        }
    }
    let data = Dataset {
        features: x,
        labels,
        defined: None,
        class_attr,
        seen: BTreeSet::from([ClassId(0), ClassId(1), ClassId(2)]),
        unseen: BTreeSet::from([ClassId(3), ClassId(4)]),
    };
    let params = HyperParams {
        k_r: 2,
        ..HyperParams::default()
    };
    let report = AugmentedModel::train(&data, &params).unwrap();
    report.model.check_dims().unwrap();
    let test_idx = data.sample_indices(&data.unseen);
    let test = data.subset(&test_idx);
    let preds = predict_batch(&report.model, &test.features, &data.class_attr, &data.unseen_sorted(), 0.5).unwrap();
    assert_eq!(preds.len(), test_idx.len());
    let reinferred = HyperParams {
        residual_centers: szsc_core::ResidualCenters::Reinferred,
        ..params
    };
    let other = AugmentedModel::train(&data, &reinferred).unwrap();
    other.model.check_dims().unwrap();
    assert_eq!(other.model.lad, report.model.lad);
    assert_ne!(other.model.residual.r_o, report.model.residual.r_o);
}

proptest! {
    #[test]
    fn classify_scale_invariant(d in proptest::collection::vec(-2.0f64..2.0, 4), k in 0.001f64..1000.0, seed in 0u64..50) {
        let mut r = rng(seed);
        let protos = rand_matrix(&mut r, 4, 5);
        let ids: Vec<ClassId> = (10..15).map(ClassId).collect();
        let scaled: Vec<f64> = d.iter().map(|v| v * k).collect();
        let (a, sa) = classify(&d, &protos, &ids).unwrap();
        let (b, sb) = classify(&scaled, &protos, &ids).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((sa - sb).abs() < 1e-12);
    }

    #[test]
    fn combined_confidence_is_monotone_in_lambda(cd in -1.0f64..1.0, cr in -1.0f64..1.0, l1 in 0.0f64..1.0, l2 in 0.0f64..1.0) {
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let a = combine_conf(cd, cr, lo).unwrap();
        let b = combine_conf(cd, cr, hi).unwrap();
        if cr >= cd {
            prop_assert!(b >= a - 1e-15);
        } else {
            prop_assert!(b <= a + 1e-15);
        }
        prop_assert!(a >= cd.min(cr) - 1e-15 && a <= cd.max(cr) + 1e-15);
    }
}
