use edpauli::phase_space::{
    complex_structure, from_wavefunction, inner_product, inner_product_from_geometry, metric, poisson_bracket, symplectic_form,
    to_wavefunction, FunctionalGradient, PhaseSpaceTangent,
};
use edpauli::{Grid, SpinorField, C64};
use proptest::prelude::*;

fn grid() -> Grid {
    Grid::new(&[6, 5], &[3.0, 2.5]).unwrap()
}

fn field_strategy() -> impl Strategy<Value = SpinorField> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 60).prop_map(|v| {
        let data = v.into_iter().map(|(a, b)| C64::new(a, b)).collect();
        SpinorField::new(grid(), data).unwrap()
    })
}

fn tangent() -> impl Strategy<Value = PhaseSpaceTangent> {
    field_strategy().prop_map(PhaseSpaceTangent::from_perturbation)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn omega_is_antisymmetric(v1 in tangent(), v2 in tangent(), hbar in 0.3f64..3.0) {
        let a = symplectic_form(&v1, &v2, hbar).unwrap();
        let b = symplectic_form(&v2, &v1, hbar).unwrap();
        prop_assert!((a + b).abs() < 1e-12 * (1.0 + a.abs()));
        prop_assert!(symplectic_form(&v1, &v1, hbar).unwrap().abs() < 1e-12);
    }

    #[test]
    fn metric_is_symmetric_and_positive(v1 in tangent(), v2 in tangent(), hbar in 0.3f64..3.0) {
        let a = metric(&v1, &v2, hbar).unwrap();
        let b = metric(&v2, &v1, hbar).unwrap();
        prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
        let g11 = metric(&v1, &v1, hbar).unwrap();
        let expect = 2.0 * hbar * v1.perturbation().norm_sqr();
        prop_assert!(g11 > 0.0);
        prop_assert!((g11 - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn metric_and_form_are_compatible(v1 in tangent(), v2 in tangent(), hbar in 0.3f64..3.0) {
        let g = metric(&v1, &v2, hbar).unwrap();
        let o = symplectic_form(&v1, &complex_structure(&v2), hbar).unwrap();
        prop_assert!((g - o).abs() < 1e-10 * (1.0 + g.abs()));
        // and J preserves both
        let (j1, j2) = (complex_structure(&v1), complex_structure(&v2));
        prop_assert!((metric(&j1, &j2, hbar).unwrap() - g).abs() < 1e-10 * (1.0 + g.abs()));
        let o12 = symplectic_form(&v1, &v2, hbar).unwrap();
        prop_assert!((symplectic_form(&j1, &j2, hbar).unwrap() - o12).abs() < 1e-10 * (1.0 + o12.abs()));
    }

    #[test]
    fn j_squares_to_minus_one(v in tangent()) {
        let jj = complex_structure(&complex_structure(&v));
        let sum = jj.perturbation().lincomb(C64::new(1.0, 0.0), v.perturbation(), C64::new(1.0, 0.0)).unwrap();
        prop_assert!(sum.data().iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn inner_product_from_geometry_matches(p1 in field_strategy(), p2 in field_strategy(), hbar in 0.3f64..3.0) {
        let direct = inner_product(&p1, &p2).unwrap();
        let geo = inner_product_from_geometry(&p1, &p2, hbar).unwrap();
        prop_assert!((direct - geo).norm() < 1e-10 * (1.0 + direct.norm()));
    }

    #[test]
    fn density_phase_round_trip(psi in field_strategy(), hbar in 0.3f64..3.0) {
        let dp = from_wavefunction(&psi, hbar);
        let back = to_wavefunction(&dp, hbar).unwrap();
        prop_assert!(back.max_abs_diff(&psi) < 1e-12);
        let rho = dp.marginal_density();
        prop_assert!(rho.iter().zip(psi.density()).all(|(a, b)| (a - b).abs() < 1e-14));
    }
}

#[test]
fn canonical_brackets() {
    let g = grid();
    let dv = g.cell_volume();
    for (p, q) in [(0, 0), (3, 3), (3, 7)] {
        for (k, l) in [(0, 0), (0, 1), (1, 1)] {
            let b = poisson_bracket(&g, &FunctionalGradient::density_at(&g, k, p), &FunctionalGradient::phase_at(&g, l, q)).unwrap();
            let expect = if p == q && k == l { 1.0 / dv } else { 0.0 };
            assert!((b - expect).abs() < 1e-12, "{{rho_{k}({p}), xi_{l}({q})}} = {b}");
            let same = poisson_bracket(&g, &FunctionalGradient::density_at(&g, k, p), &FunctionalGradient::density_at(&g, l, q)).unwrap();
            assert_eq!(same, 0.0);
        }
    }
    // the marginal pair is canonical as well
    let b = poisson_bracket(&g, &FunctionalGradient::marginal_density_at(&g, 4), &FunctionalGradient::mean_phase_at(&g, 4)).unwrap();
    assert!((b - 1.0 / dv).abs() < 1e-12);
}

#[test]
fn mismatched_tangents_are_rejected() {
    let a = PhaseSpaceTangent::from_perturbation(SpinorField::zeros(grid()));
    let b = PhaseSpaceTangent::from_perturbation(SpinorField::zeros(Grid::line(30, 1.0).unwrap()));
    assert!(metric(&a, &b, 1.0).is_err());
    assert!(symplectic_form(&a, &b, 1.0).is_err());
}
