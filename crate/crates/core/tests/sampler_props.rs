use std::f64::consts::PI;

use edpauli::sampler::{current_velocity, current_velocity_direct, density_estimate, drift_velocity, l1_distance, TrajectoryEnsemble};
use edpauli::{EdParams, GaugeField, Grid, SpinorField, C64};
use proptest::prelude::*;

fn plane_wave(grid: &Grid, k: [f64; 2]) -> SpinorField {
    SpinorField::from_fn(grid.clone(), |x| {
        let z = C64::from_polar(1.0, k[0] * x[0] + k.get(1).map_or(0.0, |ky| ky * x[1]));
        [z * 0.6, z * C64::new(0.0, 0.8)]
    })
    .normalized()
    .unwrap()
}

fn lumpy(grid: &Grid, c: &[f64]) -> SpinorField {
    SpinorField::from_fn(grid.clone(), |x| {
        let w = 2.0 * PI / grid.extent(0);
        let amp = 1.2 + c[0] * (w * x[0]).sin() + c[1] * (2.0 * w * x[0]).cos();
        let phase = c[2] * (w * x[0]).sin();
        [C64::from_polar(amp, phase), C64::from_polar(0.5 * amp, -phase + c[3])]
    })
    .normalized()
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn current_velocity_ignores_eta(c in prop::array::uniform4(-0.5f64..0.5), eta in 0.05f64..5.0, a in -1.0f64..1.0) {
        let grid = Grid::line(64, 10.0).unwrap();
        let psi = lumpy(&grid, &c);
        let gauge = GaugeField::uniform(&grid, 0.0, [a, 0.0, 0.0], [0.0; 3]);
        let base = EdParams::default();
        let v1 = current_velocity(&psi, &gauge, &base).unwrap();
        let v2 = current_velocity(&psi, &gauge, &EdParams { eta, ..base }).unwrap();
        let gap = v1.components[0].iter().zip(&v2.components[0]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(gap < 1e-12);
        // the drift does depend on η through the osmotic term
        let b1 = drift_velocity(&psi, &gauge, &base).unwrap();
        let b2 = drift_velocity(&psi, &gauge, &EdParams { eta: eta + 1.0, ..base }).unwrap();
        prop_assert!(b1.components[0] != b2.components[0]);
    }

    #[test]
    fn two_routes_to_the_current_agree(c in prop::array::uniform4(-0.5f64..0.5), a in -1.0f64..1.0) {
        let grid = Grid::line(64, 10.0).unwrap();
        let psi = lumpy(&grid, &c);
        let gauge = GaugeField::uniform(&grid, 0.0, [a, 0.0, 0.0], [0.0; 3]);
        let p = EdParams::default();
        let v = current_velocity(&psi, &gauge, &p).unwrap();
        let w = current_velocity_direct(&psi, &gauge, &p).unwrap();
        let gap = v.components[0].iter().zip(&w.components[0]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(gap < 1e-10);
    }
}

#[test]
fn step_moments_match_drift_and_diffusion() {
    let grid = Grid::new(&[32, 32], &[8.0, 8.0]).unwrap();
    let k = [2.0 * PI / 8.0 * 3.0, -2.0 * PI / 8.0];
    let psi = plane_wave(&grid, k);
    let params = EdParams { eta: 0.7, m: 1.3, dt: 0.02, ..Default::default() };
    let gauge = GaugeField::zero(&grid);
    let n = 200_000;
    let mut ens = TrajectoryEnsemble::from_density(&grid, &psi.density(), n, 99).unwrap();
    let moments = ens.sample_step(&psi, &gauge, &params).unwrap();
    let var = params.eta / params.m * params.dt;
    let h = grid.spacing(0);
    for a in 0..2 {
        // the lattice phase gradient of a plane wave is sin(kh)/h
        let drift = (k[a] * h).sin() / h / params.m * params.dt;
        let se_mean = (var / n as f64).sqrt();
        assert!((moments.mean[a] - drift).abs() < 3.0 * se_mean, "mean {a}: {} vs {drift}", moments.mean[a]);
        let se_var = var * (2.0 / n as f64).sqrt();
        assert!((moments.cov[a][a] - var).abs() < 3.0 * se_var, "var {a}: {} vs {var}", moments.cov[a][a]);
    }
    let se_cov = var / (n as f64).sqrt();
    assert!(moments.cov[0][1].abs() < 3.0 * se_cov);
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let grid = Grid::line(64, 10.0).unwrap();
    let psi = lumpy(&grid, &[0.3, -0.2, 0.4, 0.1]);
    let gauge = GaugeField::zero(&grid);
    let params = EdParams::default();
    let run = |seed: u64| {
        let mut ens = TrajectoryEnsemble::from_density(&grid, &psi.density(), 5000, seed).unwrap();
        for _ in 0..5 {
            ens.sample_step(&psi, &gauge, &params).unwrap();
        }
        ens.resample_k(&psi).unwrap();
        (ens.positions().to_vec(), ens.k_labels().map(|k| k.to_vec()))
    };
    let a = run(4);
    assert_eq!(a, run(4));
    assert_ne!(a.0, run(5).0);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    assert_eq!(a, pool.install(|| run(4)));
}

#[test]
fn label_frequencies_follow_conditionals() {
    let grid = Grid::line(16, 4.0).unwrap();
    let psi = SpinorField::from_fn(grid.clone(), |_| [C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).normalized().unwrap();
    let mut ens = TrajectoryEnsemble::from_density(&grid, &psi.density(), 40_000, 3).unwrap();
    ens.resample_k(&psi).unwrap();
    let up = ens.k_labels().unwrap().iter().filter(|k| **k == 1).count() as f64 / 40_000.0;
    let se = (0.36f64 * 0.64 / 40_000.0).sqrt();
    assert!((up - 0.36).abs() < 3.0 * se, "{up}");
}

#[test]
fn initial_ensemble_resembles_density() {
    let grid = Grid::line(128, 20.0).unwrap();
    let psi = SpinorField::from_fn(grid.clone(), |x| [C64::new((-(x[0] - 1.0).powi(2) / 2.0).exp(), 0.0), C64::new(0.0, 0.0)])
        .normalized()
        .unwrap();
    let ens = TrajectoryEnsemble::from_density(&grid, &psi.density(), 100_000, 8).unwrap();
    let est = density_estimate(&ens, &grid, None).unwrap();
    let d = l1_distance(&grid, &est, &psi.density()).unwrap();
    assert!(d < 0.03, "{d}");
}

#[test]
fn dead_regions_are_flagged_not_infinite() {
    let grid = Grid::line(64, 40.0).unwrap();
    let psi = SpinorField::from_fn(grid.clone(), |x| [C64::from_polar((-(x[0] * x[0]) / 0.5).exp(), x[0]), C64::new(0.0, 0.0)]);
    let b = drift_velocity(&psi, &GaugeField::zero(&grid), &EdParams::default()).unwrap();
    assert!(b.dead_count() > 0);
    for (v, dead) in b.components[0].iter().zip(&b.dead) {
        assert!(v.is_finite());
        if *dead {
            assert_eq!(*v, 0.0);
        }
    }
}
