use proptest::prelude::*;

use quadbraid::hamiltonians::{derivative, eigenvalues, FdOptions};
use quadbraid::models::gl2_r;
use quadbraid::shift::{DifferenceOperator, LambdaOp};
use quadbraid::tensor::{c, re, DenseOperator, C64};

fn complex() -> impl Strategy<Value = C64> {
    (-1.0f64..1.0, -0.3f64..0.3).prop_map(|(a, b)| c(a, b))
}

fn operator(legs: Vec<u32>) -> impl Strategy<Value = DenseOperator> {
    let dim = 1usize << (2 * legs.len());
    prop::collection::vec(complex(), dim).prop_map(move |v| DenseOperator::from_rows(legs.clone(), 2, &v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn leg_swap_is_conjugation_by_permutation(m in operator(vec![1, 2])) {
        let p = DenseOperator::permutation(1, 2, &[1, 2], 2).unwrap();
        let conj = p.mul(&m).unwrap().mul(&p).unwrap();
        prop_assert!(conj.distance(&m.leg_swap(1, 2).unwrap()).unwrap() < 1e-12);
        prop_assert!(m.leg_swap(1, 2).unwrap().leg_swap(1, 2).unwrap().distance(&m).unwrap() < 1e-14);
    }

    #[test]
    fn partial_trace_of_product_state(a in operator(vec![1]), b in operator(vec![2])) {
        let ab = a.embed(&[1, 2]).unwrap().mul(&b.embed(&[1, 2]).unwrap()).unwrap();
        let t = ab.partial_trace(1).unwrap();
        prop_assert!(t.distance(&b.scale(a.trace())).unwrap() < 1e-12 * (1.0 + ab.norm()));
    }

    #[test]
    fn gl2_r_is_unitary(l1 in complex(), l2 in complex(), u in complex()) {
        let g = re(0.2);
        let lam = [l1, l2];
        prop_assume!((l1 - l2).sinh().norm() > 0.1 && (u - g).sinh().norm() > 0.1 && (u + g).sinh().norm() > 0.1);
        let r = gl2_r(&lam, u, g).unwrap();
        let r21 = gl2_r(&lam, -u, g).unwrap().leg_swap(1, 2).unwrap();
        prop_assert!(r.mul(&r21).unwrap().distance(&DenseOperator::identity(&[1, 2], 2)).unwrap() < 1e-9);
    }

    #[test]
    fn exp_shift_conjugation_is_weight_shift(l1 in complex(), l2 in complex(), leg in 2u32..4) {
        let step = re(0.3);
        let f = LambdaOp::new(&[1], 2, step, |lam| {
            let v: Vec<C64> = (0..4).map(|k| (lam[0] * (k as f64 + 1.0)).sin() + lam[1] * k as f64).collect();
            DenseOperator::from_rows(vec![1], 2, &v)
        });
        let e = DifferenceOperator::exp_shift(leg, 1, 2, step);
        let ei = DifferenceOperator::exp_shift(leg, -1, 2, step);
        let conj = DifferenceOperator::product(&[e, DifferenceOperator::pure(&f), ei]).unwrap();
        let direct = DifferenceOperator::pure(&f.weight_shift(&[(leg, 1)]).unwrap());
        let lam = [l1, l2];
        prop_assert!(conj.eval(&lam).unwrap().distance(&direct.eval(&lam).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn derivative_is_linear(k1 in complex(), k2 in complex()) {
        let fd = FdOptions::default();
        let id = DenseOperator::identity(&[1], 2);
        let d = derivative(|u| Ok(id.scale((k1 * u).exp() + (k2 * u).sin())), &fd).unwrap();
        prop_assert!(d.distance(&id.scale(k1 + k2)).unwrap() < 1e-9);
    }

    #[test]
    fn eigenvalues_follow_similarity(m in operator(vec![1]), s in operator(vec![1])) {
        prop_assume!(s.inverse().is_ok());
        let sim = s.mul(&m).unwrap().mul(&s.inverse().unwrap()).unwrap();
        let (a, b) = (eigenvalues(&m).unwrap(), eigenvalues(&sim).unwrap());
        let tr: C64 = b.iter().sum();
        prop_assert!((tr - m.trace()).norm() < 1e-8 * (1.0 + sim.norm()));
        prop_assert_eq!(a.len(), b.len());
    }
}
