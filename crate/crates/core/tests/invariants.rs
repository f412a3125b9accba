use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;
use tkpen_core::data::{gen_sparse_ls_instance, parse_libsvm, serialize_libsvm, Instance, InstanceMetadata};
use tkpen_core::linalg::{count_nonzero, DesignMatrix};
use tkpen_core::objective::{
    lipschitz_upper_bound, ls_value_grad, robust_ls_value_grad, CompositeObjective, SmoothLoss,
};
use tkpen_core::penalty::{
    active_set_enumerate, project_l0_ball, prox_top_k_penalty, t_k_value, top_k_norm, Penalty,
    DEFAULT_ACTIVE_SET_CAP,
};
use tkpen_core::solvers::{solve, SolverConfig, SolverKind};
use tkpen_core::stationarity::classify;

fn vec_in(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, len)
}

fn matrix(max: usize) -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1..=max, 1..=max).prop_flat_map(|(n, p)| {
        // roughly half the entries are exact zeros
        let entry = prop_oneof![Just(0.0), -3.0f64..3.0];
        (Just(n), Just(p), prop::collection::vec(entry, n * p))
    })
}

proptest! {
    #[test]
    fn t_k_vanishes_exactly_on_k_sparse(x in vec_in(1..=10), k in 1usize..10) {
        let k = k.min(x.len());
        let t = t_k_value(&x, k, &[]).unwrap();
        prop_assert!(t >= 0.0);
        prop_assert_eq!(t == 0.0, count_nonzero(&x) <= k);
    }

    #[test]
    fn prox_beats_simple_candidates(y in vec_in(1..=10), k in 1usize..10, tau in 0.01f64..4.0) {
        let k = k.min(y.len());
        let obj = |x: &[f64]| {
            let q: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
            tau * t_k_value(x, k, &[]).unwrap() + 0.5 * q
        };
        let x = prox_top_k_penalty(&y, tau, k, &[]).unwrap();
        let best = obj(&x);
        let soft: Vec<f64> = y.iter().map(|v| v.signum() * (v.abs() - tau).max(0.0)).collect();
        prop_assert!(best <= obj(&y) + 1e-12);
        prop_assert!(best <= obj(&soft) + 1e-12);
        prop_assert!(best <= obj(&vec![0.0; y.len()]) + 1e-12);
    }

    #[test]
    fn l0_projection_keeps_largest(z in vec_in(1..=10), kappa in 0usize..10) {
        let kappa = kappa.min(z.len());
        let proj = project_l0_ball(&z, kappa);
        prop_assert!(count_nonzero(&proj) <= kappa);
        if kappa > 0 {
            let kept: f64 = proj.iter().map(|v| v.abs()).sum();
            prop_assert!((kept - top_k_norm(&z, kappa, &[]).unwrap()).abs() < 1e-12);
        }
        for (p, v) in proj.iter().zip(&z) {
            prop_assert!(*p == 0.0 || p == v);
        }
    }

    #[test]
    fn exact_active_patterns_attain_the_norm(
        xs in prop::collection::vec(-2i32..=2, 1..7),
        k in 1usize..7,
    ) {
        let x: Vec<f64> = xs.iter().map(|&v| v as f64).collect();
        let k = k.min(x.len());
        let top = top_k_norm(&x, k, &[]).unwrap();
        let pats = active_set_enumerate(&x, k, &[], 0.0, DEFAULT_ACTIVE_SET_CAP).unwrap();
        prop_assert!(!pats.is_empty());
        for v in &pats {
            prop_assert_eq!(v.support_size(), k);
            prop_assert_eq!(v.dot(&x), top);
        }
    }

    #[test]
    fn csr_and_dense_products_agree((n, p, vals) in matrix(8), seed in 0u64..1000) {
        let dense = DesignMatrix::dense(n, p, vals).unwrap();
        let csr = dense.to_csr();
        let x: Vec<f64> = (0..p).map(|j| ((j as u64 * 31 + seed) % 17) as f64 - 8.0).collect();
        let r: Vec<f64> = (0..n).map(|i| ((i as u64 * 13 + seed) % 11) as f64 - 5.0).collect();
        for (a, b) in dense.mul_vec(&x).iter().zip(csr.mul_vec(&x)) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        for (a, b) in dense.tmul_vec(&r).iter().zip(csr.tmul_vec(&r)) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn lipschitz_never_underestimates((n, p, vals) in matrix(12)) {
        let a = DesignMatrix::dense(n, p, vals.clone()).unwrap();
        let loss = SmoothLoss::least_squares(Arc::new(a), vec![0.0; n]).unwrap();
        let m = DMatrix::from_row_slice(n, p, &vals);
        let exact = (m.transpose() * &m).symmetric_eigenvalues().max();
        prop_assert!(lipschitz_upper_bound(&loss, 1e-8).value >= exact - 1e-12 * exact.max(1.0));
    }

    #[test]
    fn robust_loss_with_zero_z_is_least_squares((n, p, vals) in matrix(8)) {
        let a = Arc::new(DesignMatrix::dense(n, p, vals).unwrap());
        let x: Vec<f64> = (0..p).map(|j| j as f64 * 0.5 - 1.0).collect();
        let b: Vec<f64> = (0..n).map(|i| 1.0 - i as f64).collect();
        let (v, g) = ls_value_grad(&a, &b, &x).unwrap();
        let (rv, gx, _) = robust_ls_value_grad(&a, &b, &x, &vec![0.0; n]).unwrap();
        prop_assert_eq!(v, rv);
        prop_assert_eq!(g, gx);
    }

    #[test]
    fn libsvm_round_trip((n, p, vals) in matrix(8)) {
        let a = DesignMatrix::dense(n, p, vals).unwrap();
        let b: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let inst = Instance::new(a, b, InstanceMetadata::default()).unwrap();
        let mut text = Vec::new();
        serialize_libsvm(&inst, &mut text).unwrap();
        let back = parse_libsvm(text.as_slice()).unwrap();
        prop_assert_eq!(&back.b, &inst.b);
        for i in 0..n {
            for j in 0..p {
                let v = if j < back.p() { back.a.get(i, j) } else { 0.0 };
                prop_assert_eq!(v, inst.a.get(i, j));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn descent_methods_never_increase_f(seed in 0u64..10_000, k in 1usize..5, lambda in 0.05f64..2.0) {
        let (n, p) = (9, 6);
        let vals: Vec<f64> = (0..n * p).map(|i| (((i as u64 + 1) * (seed + 7)) % 23) as f64 / 11.0 - 1.0).collect();
        let a = DesignMatrix::dense(n, p, vals).unwrap();
        let b: Vec<f64> = (0..n).map(|i| ((i as u64 * 5 + seed) % 9) as f64 - 4.0).collect();
        let obj = CompositeObjective::new(
            SmoothLoss::least_squares(Arc::new(a), b).unwrap(),
            Penalty::top_k(lambda, k, p, Vec::new()).unwrap(),
        )
        .unwrap();
        let x0 = vec![0.5; p];
        for kind in [SolverKind::Pgm, SolverKind::Pdca] {
            let f = solve(kind, &obj, &x0, &SolverConfig::for_solver(kind)).unwrap().trace.objectives();
            prop_assert!(f.windows(2).all(|w| w[1] <= w[0] + 1e-10), "{}", kind);
        }
    }

    #[test]
    fn planted_points_certify(seed in 0u64..1000, k in 1usize..5) {
        let inst = gen_sparse_ls_instance(12, 20, k, 1.0, seed).unwrap();
        let planted = inst.metadata.planted.clone().unwrap();
        prop_assert_eq!(count_nonzero(&planted), k + 1);
        let obj = CompositeObjective::new(
            inst.least_squares().unwrap(),
            Penalty::top_k(1.0, k, 12, Vec::new()).unwrap(),
        )
        .unwrap();
        let rep = classify(&obj, &planted, 1e-8, DEFAULT_ACTIVE_SET_CAP).unwrap();
        prop_assert!(rep.is_critical());
        prop_assert_eq!(rep.d_stationary, Some(false));
    }
}
