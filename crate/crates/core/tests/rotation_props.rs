use std::f64::consts::PI;

use edpauli::rotations::{
    generator_flow_check, mat2_mul, orbital_angular_momentum, rotate_state, rotation_matrix, spin_functional, su2_rotation,
    Interpolation, RotationMode,
};
use edpauli::{Grid, RotationSpec, SpinorField, C64};
use proptest::prelude::*;

fn axis() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-1.0f64..1.0).prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
}

fn spinor_field() -> impl Strategy<Value = SpinorField> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 16).prop_map(|v| {
        let data = v.into_iter().map(|(a, b)| C64::new(a, b)).collect();
        SpinorField::new(Grid::line(8, 2.0).unwrap(), data).unwrap().normalized().unwrap()
    })
}

fn spin_only(psi: &SpinorField, spec: &RotationSpec) -> SpinorField {
    rotate_state(psi, spec, RotationMode::SpinOnly, Interpolation::Cubic).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn double_cover(psi in spinor_field(), n in axis()) {
        let full = spin_only(&psi, &RotationSpec::about(n, 2.0 * PI).unwrap());
        let flipped = full.lincomb(C64::new(1.0, 0.0), &psi, C64::new(1.0, 0.0)).unwrap();
        prop_assert!(flipped.data().iter().all(|z| z.norm() < 1e-14));
        let twice = spin_only(&psi, &RotationSpec::about(n, 4.0 * PI).unwrap());
        prop_assert!(twice.max_abs_diff(&psi) < 1e-14);
    }

    #[test]
    fn su2_composition(n in axis(), a in -7.0f64..7.0, b in -7.0f64..7.0) {
        let s = |z: f64| RotationSpec::about(n, z).unwrap();
        let product = mat2_mul(&su2_rotation(&s(a)), &su2_rotation(&s(b)));
        let direct = su2_rotation(&s(a + b));
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((product[i][j] - direct[i][j]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn spin_functional_rotates_adjointly(psi in spinor_field(), n in axis(), angle in -PI..PI, hbar in 0.5f64..2.0) {
        let spec = RotationSpec::about(n, angle).unwrap();
        let s0 = spin_functional(&psi, hbar);
        let s1 = spin_functional(&spin_only(&psi, &spec), hbar);
        let r = rotation_matrix(&spec);
        for i in 0..3 {
            let expect: f64 = (0..3).map(|k| r[i][k] * s0[k]).sum();
            prop_assert!((s1[i] - expect).abs() < 1e-10);
        }
        let len = s0.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(len <= 0.5 * hbar + 1e-12);
    }

    #[test]
    fn spin_ignores_the_common_phase(psi in spinor_field(), c in prop::array::uniform3(-3.0f64..3.0)) {
        let grid = psi.grid().clone();
        let mut shifted = psi.clone();
        for k in 0..2 {
            for (i, z) in shifted.component_mut(k).iter_mut().enumerate() {
                let x = grid.coord(0, i);
                *z *= C64::from_polar(1.0, c[0] + c[1] * x + c[2] * x * x);
            }
        }
        let (a, b) = (spin_functional(&psi, 1.0), spin_functional(&shifted, 1.0));
        for i in 0..3 {
            prop_assert!((a[i] - b[i]).abs() < 1e-12);
        }
    }
}

fn gaussian_3d(n: usize) -> SpinorField {
    let grid = Grid::new(&[n, n, n], &[12.0, 12.0, 12.0]).unwrap();
    SpinorField::from_fn(grid, |x| {
        let r2 = (x[0] - 0.7).powi(2) + (x[1] + 0.4).powi(2) / 1.5 + (x[2] - 0.2).powi(2) / 0.8;
        let g = (-r2 / 2.0).exp();
        [C64::from_polar(g, 0.3 * x[1]), C64::new(0.0, 0.5 * g)]
    })
    .normalized()
    .unwrap()
}

#[test]
fn rotated_norm_is_kept_on_a_fine_grid() {
    let psi = gaussian_3d(64);
    let spec = RotationSpec::about([0.3, -0.8, 0.5], 1.1).unwrap();
    for (interp, bound) in [(Interpolation::Spectral, 1e-10), (Interpolation::Cubic, 1e-3), (Interpolation::Linear, 1e-2)] {
        let rotated = rotate_state(&psi, &spec, RotationMode::Full, interp).unwrap();
        let change = (rotated.norm_sqr() - 1.0).abs();
        assert!(change < bound, "{interp:?}: {change}");
    }
}

fn ring(ell: i32, n: usize) -> SpinorField {
    let grid = Grid::new(&[n, n], &[16.0, 16.0]).unwrap();
    SpinorField::from_fn(grid, |x| {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let theta = x[1].atan2(x[0]);
        let amp = (-(r - 3.0).powi(2) / 1.0).exp();
        [C64::from_polar(amp, ell as f64 * theta), C64::new(0.0, 0.0)]
    })
    .normalized()
    .unwrap()
}

#[test]
fn ring_packets_carry_integer_angular_momentum() {
    for ell in [-2, 1, 3] {
        let lz = orbital_angular_momentum(&ring(ell, 128), 1.0).unwrap()[2];
        assert!((lz - ell as f64).abs() < 1e-3 * ell.abs() as f64, "ell {ell}: {lz}");
    }
    let real = SpinorField::from_fn(Grid::new(&[32, 32], &[8.0, 8.0]).unwrap(), |x| {
        [C64::new((-(x[0] * x[0] + x[1] * x[1])).exp(), 0.0), C64::new(0.0, 0.0)]
    });
    assert!(orbital_angular_momentum(&real, 1.0).unwrap()[2].abs() < 1e-14);
}

#[test]
fn boosted_packet_orbital_momentum_is_x_cross_p() {
    let grid = Grid::new(&[96, 96], &[16.0, 16.0]).unwrap();
    let (x0, y0, px, py) = (1.2, -0.7, 0.6, 0.9);
    let psi = SpinorField::from_fn(grid, |x| {
        let g = (-((x[0] - x0).powi(2) + (x[1] - y0).powi(2)) / 2.0).exp();
        let z = C64::from_polar(g, px * x[0] + py * x[1]);
        [z * 0.8, z * 0.6]
    })
    .normalized()
    .unwrap();
    let lz = orbital_angular_momentum(&psi, 1.0).unwrap()[2];
    let expect = x0 * py - y0 * px;
    assert!((lz - expect).abs() < 1e-6, "{lz} vs {expect}");
}

#[test]
fn one_dimensional_grids_refuse_orbital_rotation() {
    let psi = SpinorField::from_fn(Grid::line(8, 2.0).unwrap(), |_| [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
    assert!(orbital_angular_momentum(&psi, 1.0).is_err());
    let spec = RotationSpec::about([0.0, 0.0, 1.0], 0.3).unwrap();
    assert!(rotate_state(&psi, &spec, RotationMode::Full, Interpolation::Cubic).is_err());
    assert!(rotate_state(&psi, &spec, RotationMode::SpinOnly, Interpolation::Cubic).is_ok());
    let plane = SpinorField::zeros(Grid::new(&[8, 8], &[2.0, 2.0]).unwrap());
    let tilted = RotationSpec::about([1.0, 0.0, 1.0], 0.3).unwrap();
    assert!(rotate_state(&plane, &tilted, RotationMode::Full, Interpolation::Cubic).is_err());
}

#[test]
fn flow_check_vanishes_for_symmetric_density() {
    let mismatch = |n: usize| {
        let grid = Grid::new(&[n, n], &[12.0, 12.0]).unwrap();
        let psi = SpinorField::from_fn(grid, |x| {
            let g = (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp();
            [C64::new(g, 0.0), C64::new(0.0, g)]
        });
        let spec = RotationSpec::about([0.0, 0.0, 1.0], 0.0).unwrap();
        generator_flow_check(&psi, &spec, 0.01, Interpolation::Spectral).unwrap().l1_mismatch
    };
    let (coarse, fine) = (mismatch(64), mismatch(128));
    // only the stencil error is left, at eighth order
    assert!(coarse < 1e-4 && fine < 1e-6, "{coarse} {fine}");
    assert!(coarse / fine > 100.0, "{coarse} {fine}");
}

#[test]
fn flow_check_mismatch_halves_with_the_angle() {
    let grid = Grid::new(&[128, 128], &[16.0, 16.0]).unwrap();
    let psi = SpinorField::from_fn(grid, |x| {
        let g = (-((x[0] - 2.0).powi(2) + (x[1] - 0.5).powi(2) / 0.6) / 2.0).exp();
        [C64::new(g, 0.0), C64::new(0.0, 0.3 * g)]
    });
    let spec = RotationSpec::about([0.0, 0.0, 1.0], 0.0).unwrap();
    let m: Vec<f64> = [0.04, 0.02, 0.01]
        .iter()
        .map(|d| generator_flow_check(&psi, &spec, *d, Interpolation::Spectral).unwrap().l1_mismatch)
        .collect();
    for pair in m.windows(2) {
        let ratio = pair[0] / pair[1];
        assert!((1.8..2.2).contains(&ratio), "{m:?}");
    }
}
