use nalgebra::DMatrix;
use phaseonium::operator::{
    fidelity, hermitian_exp, mutual_information, partial_trace, von_neumann_entropy, CMatrix,
    DensityMatrix, HilbertSpace, Operator, C64,
};
use proptest::prelude::*;

fn matrix(d: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), d * d).prop_map(move |v| {
        DMatrix::from_iterator(d, d, v.into_iter().map(|(re, im)| C64::new(re, im)))
    })
}

fn state(space: HilbertSpace) -> impl Strategy<Value = DensityMatrix> {
    let d = space.total_dim();
    matrix(d).prop_filter_map("degenerate draw", move |g| {
        let m = &g * g.adjoint();
        let tr = m.trace();
        (tr.re > 1e-6).then(|| DensityMatrix::new(space.clone(), m / tr).unwrap())
    })
}

fn pair_space() -> HilbertSpace {
    HilbertSpace::new(vec![3, 4]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partial_trace_keeps_unit_trace_and_positivity(rho in state(pair_space())) {
        for keep in [[0usize], [1]] {
            let r = partial_trace(&rho, &keep).unwrap();
            prop_assert!((r.trace().re - 1.0).abs() < 1e-12);
            prop_assert!(r.trace().im.abs() < 1e-12);
            prop_assert!(r.min_eigenvalue() > -1e-12);
        }
    }

    #[test]
    fn entropy_is_bounded_by_log_dimension(rho in state(pair_space())) {
        let s = von_neumann_entropy(&rho);
        prop_assert!(s >= -1e-12);
        prop_assert!(s <= (12f64).ln() + 1e-12);
    }

    #[test]
    fn mutual_information_is_bounded(rho in state(pair_space())) {
        let mi = mutual_information(&rho, &[0]).unwrap();
        prop_assert!(mi >= -1e-10);
        prop_assert!(mi <= 2.0 * 3f64.ln() + 1e-10);
    }

    #[test]
    fn product_states_carry_no_mutual_information(
        a in state(HilbertSpace::new(vec![3]).unwrap()),
        b in state(HilbertSpace::new(vec![4]).unwrap()),
    ) {
        let ab = DensityMatrix::tensor(&[&a, &b]).unwrap();
        prop_assert!(mutual_information(&ab, &[0]).unwrap().abs() < 1e-10);
        let back = partial_trace(&ab, &[1]).unwrap();
        prop_assert!(back.trace_distance(&b).unwrap() < 1e-12);
    }

    #[test]
    fn fidelity_is_symmetric_and_bounded(
        rho in state(HilbertSpace::new(vec![4]).unwrap()),
        sigma in state(HilbertSpace::new(vec![4]).unwrap()),
    ) {
        let f = fidelity(&rho, &sigma).unwrap();
        let g = fidelity(&sigma, &rho).unwrap();
        prop_assert!((-1e-10..=1.0 + 1e-10).contains(&f));
        prop_assert!((f - g).abs() < 1e-8);
        prop_assert!((fidelity(&rho, &rho).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn unitary_conjugation_preserves_spectrum(
        rho in state(HilbertSpace::new(vec![4]).unwrap()),
        g in matrix(4),
    ) {
        let space = HilbertSpace::new(vec![4]).unwrap();
        let h = Operator::new(space, (&g + g.adjoint()) * C64::new(0.5, 0.0)).unwrap();
        let u = hermitian_exp(&h, C64::new(0.0, -1.0)).unwrap();
        prop_assert!(u.unitarity_error() < 1e-12);
        let out = rho.conjugate(&u).unwrap();
        let mut a = rho.eigenvalues();
        let mut b = out.eigenvalues();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        prop_assert!((von_neumann_entropy(&rho) - von_neumann_entropy(&out)).abs() < 1e-10);
    }
}
