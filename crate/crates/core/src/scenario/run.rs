//! Scenario orchestration: solver, optional walkers, diagnostics.

use std::time::Instant;

use serde::Serialize;

use super::config::{Profile, ScenarioConfig, ScenarioKind};
use crate::error::{Error, Result};
use crate::grid::{GaugeField, Grid, SpinorField, C64};
use crate::pauli::{
    continuity_residual_from_series, energy, point_particle_kernel, position_mean, position_variance, step,
    HamiltonianSpec, PotentialKernel,
};
use crate::rotations::{orbital_angular_momentum, rotate_state, spin_functional, su2_rotation, RotationMode, RotationSpec};
use crate::sampler::{density_estimate, l1_distance, StepMoments, TrajectoryEnsemble};

/// Threshold on `|⟨ψ|ψ⟩ − 1|` over a run.
pub const NORM_TOL: f64 = 1e-10;
/// Larmor fit: relative frequency error.
pub const LARMOR_TOL: f64 = 1e-3;
/// Stern–Gerlach: absolute error of a lobe weight.
pub const LOBE_TOL: f64 = 0.01;
/// Free packet: relative error of the variance.
pub const DISPERSION_TOL: f64 = 1e-3;
/// Walker histogram against `ρ_x`, checked only for large ensembles.
pub const ENSEMBLE_L1_TOL: f64 = 0.03;
pub const ENSEMBLE_CHECK_MIN_WALKERS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableRow {
    pub t: f64,
    pub norm: f64,
    pub energy: f64,
    pub x_mean: [f64; 3],
    pub var_x: [f64; 3],
    pub spin: [f64; 3],
    pub orbital: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleRow {
    pub t: f64,
    pub l1: f64,
    pub moments: StepMoments,
    pub k_plus_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn below(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, passed: value < threshold }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Passed,
    Failed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LarmorFit {
    pub omega_fit: f64,
    pub omega_expected: f64,
    pub relative_error: f64,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LobeWeights {
    /// Probability on the positive side of the gradient axis.
    pub upper: f64,
    pub lower: f64,
    pub expected_upper: f64,
    pub expected_lower: f64,
    pub upper_mean: f64,
    pub lower_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RotationOutcome {
    pub initial: [[f64; 2]; 2],
    pub rotated: [[f64; 2]; 2],
    pub k_probabilities: [f64; 2],
    pub spin_before: [f64; 3],
    pub spin_after: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Timings {
    pub setup: f64,
    pub solver: f64,
    pub sampler: f64,
    pub diagnostics: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub label: String,
    #[serde(skip)]
    pub psi: SpinorField,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: ScenarioKind,
    pub status: RunStatus,
    pub failure: Option<String>,
    pub steps_completed: usize,
    pub rows: Vec<ObservableRow>,
    /// `(t, ∫|∂_tρ + ∂(vρ)|)` at recorded instants.
    pub continuity: Vec<(f64, f64)>,
    pub ensemble: Vec<EnsembleRow>,
    pub checks: Vec<Check>,
    pub norm_drift: f64,
    pub max_solver_iterations: usize,
    pub larmor: Option<LarmorFit>,
    pub lobes: Option<LobeWeights>,
    pub rotation: Option<RotationOutcome>,
    pub timings: Timings,
    #[serde(skip)]
    pub snapshots: Vec<Snapshot>,
    #[serde(skip)]
    pub trajectory: Vec<Vec<f64>>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.status == RunStatus::Passed
    }
}

/// The gauge field a configuration describes.
pub fn build_gauge(config: &ScenarioConfig, grid: &Grid) -> Result<GaugeField> {
    let g = &config.gauge;
    let mut gauge = GaugeField::uniform(grid, g.a0, g.a, g.b);
    if g.b_gradient != 0.0 {
        grid.check_axis(g.gradient_axis)?;
        for i in 0..grid.len() {
            gauge.b[2][i] += g.b_gradient * grid.position(i)[g.gradient_axis];
        }
    }
    Ok(gauge)
}

pub fn build_hamiltonian(config: &ScenarioConfig, grid: &Grid) -> Result<HamiltonianSpec> {
    let gauge = build_gauge(config, grid)?;
    let p = &config.potential;
    let mut potential = point_particle_kernel(&config.params, &gauge, config.gauge.charge);
    let k = 0.5 * config.params.m * p.harmonic_omega * p.harmonic_omega;
    let extra = PotentialKernel::scalar_fn(grid, |x| p.v0 + k * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]));
    potential = potential.plus(&extra)?;
    potential = potential.plus(&PotentialKernel::uniform(grid, 0.0, p.v))?;
    let mut spec = HamiltonianSpec::new(config.params, gauge, potential).with_integrator(config.integrator);
    spec.validate(grid)?;
    spec.solver = Default::default();
    Ok(spec)
}

pub fn build_initial_state(config: &ScenarioConfig, grid: &Grid) -> Result<SpinorField> {
    let ini = &config.initial;
    let c = [C64::new(ini.spinor[0][0], ini.spinor[0][1]), C64::new(ini.spinor[1][0], ini.spinor[1][1])];
    let hbar = config.params.hbar;
    let dim = grid.dim();
    let psi = SpinorField::from_fn(grid.clone(), |x| {
        let mut amp = C64::new(1.0, 0.0);
        if ini.profile == Profile::Gaussian {
            let mut e = 0.0;
            let mut phase = 0.0;
            for a in 0..dim {
                let d = x[a] - ini.center[a];
                e -= d * d / (4.0 * ini.width[a] * ini.width[a]);
                phase += ini.momentum[a] * x[a] / hbar;
            }
            amp = C64::from_polar(e.exp(), phase);
        }
        if ini.winding != 0 && dim >= 2 {
            let (dx, dy) = (x[0] - ini.center[0], x[1] - ini.center[1]);
            let r = (dx * dx + dy * dy).sqrt();
            amp *= C64::from_polar(r, ini.winding as f64 * dy.atan2(dx));
        }
        [c[0] * amp, c[1] * amp]
    });
    psi.normalized()
}

fn observe(spec: &HamiltonianSpec, psi: &SpinorField, t: f64) -> Result<ObservableRow> {
    let hbar = spec.params.hbar;
    let orbital = if psi.grid().dim() >= 2 { Some(orbital_angular_momentum(psi, hbar)?) } else { None };
    Ok(ObservableRow {
        t,
        norm: psi.norm_sqr(),
        energy: energy(spec, psi)?,
        x_mean: position_mean(psi),
        var_x: position_variance(psi),
        spin: spin_functional(psi, hbar),
        orbital,
    })
}

/// Least-squares fit of `A cos(ωt + φ)` to samples: linear in `(A cos φ, A sin φ)`
/// for fixed ω, golden-section search over ω around the zero-crossing estimate.
pub fn fit_cosine(ts: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if ts.len() < 8 || ts.len() != ys.len() {
        return Err(Error::Domain("a frequency fit needs at least 8 matching samples".into()));
    }
    let span = ts[ts.len() - 1] - ts[0];
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let crossings = ys.windows(2).filter(|w| (w[0] - mean) * (w[1] - mean) < 0.0).count();
    if crossings < 2 || span <= 0.0 {
        return Err(Error::Domain("signal does not oscillate over the sampled span".into()));
    }
    let guess = std::f64::consts::PI * crossings as f64 / span;
    let solve = |w: f64| -> (f64, f64, f64) {
        let (mut cc, mut ss, mut cs, mut yc, mut ysn) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (t, y) in ts.iter().zip(ys) {
            let (s, c) = (w * t).sin_cos();
            cc += c * c;
            ss += s * s;
            cs += c * s;
            yc += y * c;
            ysn += y * s;
        }
        let det = cc * ss - cs * cs;
        let a = (yc * ss - ysn * cs) / det;
        let b = (ysn * cc - yc * cs) / det;
        let res: f64 = ts.iter().zip(ys).map(|(t, y)| (y - a * (w * t).cos() - b * (w * t).sin()).powi(2)).sum();
        (res, a, b)
    };
    // coarse scan then golden section on the best bracket
    let (lo, hi) = (0.7 * guess, 1.3 * guess);
    let n = 400;
    let best = (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .min_by(|a, b| solve(*a).0.total_cmp(&solve(*b).0))
        .unwrap_or(guess);
    let step = (hi - lo) / n as f64;
    let (mut a, mut b) = (best - step, best + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    for _ in 0..200 {
        if solve(c).0 < solve(d).0 {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
        if (b - a).abs() < 1e-15 * guess {
            break;
        }
    }
    let w = 0.5 * (a + b);
    let (_, ca, sb) = solve(w);
    // A cos(ωt + φ) = A cos φ cos ωt − A sin φ sin ωt
    let amp = (ca * ca + sb * sb).sqrt();
    let phase = (-sb).atan2(ca);
    Ok((w, amp, phase))
}

fn lobe_weights(config: &ScenarioConfig, psi: &SpinorField) -> LobeWeights {
    let grid = psi.grid();
    let axis = config.gauge.gradient_axis;
    let rho = psi.density();
    let dv = grid.cell_volume();
    let (mut up, mut down, mut mu, mut md) = (0.0, 0.0, 0.0, 0.0);
    for (i, r) in rho.iter().enumerate() {
        let z = grid.position(i)[axis];
        if z > 0.0 {
            up += r * dv;
            mu += r * z * dv;
        } else {
            down += r * dv;
            md += r * z * dv;
        }
    }
    let s = config.initial.spinor;
    let plus = s[0][0] * s[0][0] + s[0][1] * s[0][1];
    // force on the + component is +(ħβ/2m)∂B_z, so it moves up when β∂B_z > 0
    let plus_goes_up = config.params.beta * config.gauge.b_gradient > 0.0;
    let (eu, el) = if plus_goes_up { (plus, 1.0 - plus) } else { (1.0 - plus, plus) };
    LobeWeights {
        upper: up,
        lower: down,
        expected_upper: eu,
        expected_lower: el,
        upper_mean: if up > 0.0 { mu / up } else { 0.0 },
        lower_mean: if down > 0.0 { md / down } else { 0.0 },
    }
}

fn spinor_parts(c: [C64; 2]) -> [[f64; 2]; 2] {
    [[c[0].re, c[0].im], [c[1].re, c[1].im]]
}

/// Execute a validated scenario. A failure after setup yields a report with
/// status `Aborted` holding everything computed so far.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport> {
    let start = Instant::now();
    let grid = config.build_grid()?;
    let spec = build_hamiltonian(config, &grid)?;
    let mut psi = build_initial_state(config, &grid)?;
    let mut report = RunReport {
        scenario: config.scenario,
        status: RunStatus::Passed,
        failure: None,
        steps_completed: 0,
        rows: Vec::new(),
        continuity: Vec::new(),
        ensemble: Vec::new(),
        checks: Vec::new(),
        norm_drift: 0.0,
        max_solver_iterations: 0,
        larmor: None,
        lobes: None,
        rotation: None,
        timings: Timings::default(),
        snapshots: Vec::new(),
        trajectory: Vec::new(),
    };

    if config.scenario == ScenarioKind::RotationDemo {
        let r = &config.rotation;
        let rot = RotationSpec::about(r.axis, r.angle)?;
        let mode = if r.spatial { RotationMode::Full } else { RotationMode::SpinOnly };
        let spin_before = spin_functional(&psi, config.params.hbar);
        let c0 = [C64::new(config.initial.spinor[0][0], config.initial.spinor[0][1]), C64::new(config.initial.spinor[1][0], config.initial.spinor[1][1])];
        let u = su2_rotation(&rot);
        let c1 = [u[0][0] * c0[0] + u[0][1] * c0[1], u[1][0] * c0[0] + u[1][1] * c0[1]];
        report.snapshots.push(Snapshot { t: 0.0, label: "unrotated".into(), psi: psi.clone() });
        psi = rotate_state(&psi, &rot, mode, r.interpolation)?;
        report.rotation = Some(RotationOutcome {
            initial: spinor_parts(c0),
            rotated: spinor_parts(c1),
            k_probabilities: [c1[0].norm_sqr(), c1[1].norm_sqr()],
            spin_before,
            spin_after: spin_functional(&psi, config.params.hbar),
        });
    }

    let mut ensemble = if config.sampler.walkers > 0 {
        Some(TrajectoryEnsemble::from_density(&grid, &psi.density(), config.sampler.walkers, config.sampler.seed)?)
    } else {
        None
    };
    report.snapshots.push(Snapshot { t: 0.0, label: "initial".into(), psi: psi.clone() });
    report.timings.setup = start.elapsed().as_secs_f64();

    let dt = config.params.dt;
    let record_every = config.output.stride;
    let dense_spin = config.scenario == ScenarioKind::Larmor;
    let mut spin_series: Vec<(f64, f64)> = Vec::new();
    let mut prev: Option<SpinorField> = None;
    let mut pending_mid: Option<(f64, SpinorField, SpinorField)> = None;

    let outcome: Result<()> = (|| {
        let mut last_moments: Option<StepMoments> = None;
        for n in 0..=config.steps {
            let t = n as f64 * dt;
            let t0 = Instant::now();
            if let Some((tm, before, mid)) = pending_mid.take() {
                let r = continuity_residual_from_series(&before, &mid, &psi, 2.0 * dt, &spec.gauge, &spec.params)?;
                report.continuity.push((tm, r.l1));
            }
            if n % record_every == 0 || n == config.steps {
                report.rows.push(observe(&spec, &psi, t)?);
                if let Some(p) = &prev {
                    if n < config.steps {
                        pending_mid = Some((t, p.clone(), psi.clone()));
                    }
                }
            }
            if dense_spin {
                let s = spin_functional(&psi, config.params.hbar);
                spin_series.push((t, 2.0 * s[0] / config.params.hbar));
            }
            if let Some(ens) = ensemble.as_mut() {
                if n % config.sampler.stride == 0 || n == config.steps {
                    let est = density_estimate(ens, &grid, config.sampler.bandwidth)?;
                    let l1 = l1_distance(&grid, &est, &psi.density())?;
                    let k_plus_fraction = if config.sampler.k_labels {
                        ens.resample_k(&psi)?;
                        ens.k_labels().map(|k| k.iter().filter(|v| **v == 1).count() as f64 / k.len() as f64)
                    } else {
                        None
                    };
                    let moments = last_moments.clone().unwrap_or(StepMoments {
                        mean: vec![0.0; grid.dim()],
                        cov: vec![vec![0.0; grid.dim()]; grid.dim()],
                    });
                    report.ensemble.push(EnsembleRow { t, l1, moments, k_plus_fraction });
                    if config.output.trajectories {
                        report.trajectory.push(ens.positions().to_vec());
                    }
                }
            }
            report.timings.diagnostics += t0.elapsed().as_secs_f64();
            if n == config.steps {
                break;
            }

            if let Some(ens) = ensemble.as_mut() {
                let ts = Instant::now();
                last_moments = Some(ens.sample_step(&psi, &spec.gauge, &spec.params)?);
                report.timings.sampler += ts.elapsed().as_secs_f64();
            }
            let ts = Instant::now();
            let (next, stats) = step(&spec, &psi, dt)?;
            report.timings.solver += ts.elapsed().as_secs_f64();
            report.max_solver_iterations = report.max_solver_iterations.max(stats.iterations);
            prev = Some(std::mem::replace(&mut psi, next));
            report.steps_completed = n + 1;
        }
        Ok(())
    })();

    report.snapshots.push(Snapshot { t: report.steps_completed as f64 * dt, label: "final".into(), psi: psi.clone() });
    report.norm_drift = report.rows.iter().map(|r| (r.norm - 1.0).abs()).fold(0.0, f64::max);
    if let Err(e) = outcome {
        report.status = RunStatus::Aborted;
        report.failure = Some(e.to_string());
        report.timings.total = start.elapsed().as_secs_f64();
        return Ok(report);
    }

    report.checks.push(Check::below("norm_drift", report.norm_drift, NORM_TOL));
    match config.scenario {
        ScenarioKind::Larmor => {
            let (ts, ys): (Vec<f64>, Vec<f64>) = spin_series.into_iter().unzip();
            let b = config.gauge.b;
            let bmag = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
            let expected = (config.params.beta * bmag / config.params.m).abs();
            match fit_cosine(&ts, &ys) {
                Ok((w, amp, phase)) => {
                    let rel = (w - expected).abs() / expected;
                    report.checks.push(Check::below("larmor_frequency", rel, LARMOR_TOL));
                    report.larmor = Some(LarmorFit { omega_fit: w, omega_expected: expected, relative_error: rel, amplitude: amp, phase });
                }
                Err(e) => {
                    report.checks.push(Check { name: "larmor_frequency".into(), value: f64::NAN, threshold: LARMOR_TOL, passed: false });
                    report.failure = Some(format!("frequency fit failed: {e}"));
                }
            }
        }
        ScenarioKind::SternGerlach => {
            let lobes = lobe_weights(config, &psi);
            let err = (lobes.upper - lobes.expected_upper).abs().max((lobes.lower - lobes.expected_lower).abs());
            report.checks.push(Check::below("lobe_weights", err, LOBE_TOL));
            report.lobes = Some(lobes);
        }
        ScenarioKind::FreePacket => {
            let free = config.potential.harmonic_omega == 0.0
                && config.potential.v0 == 0.0
                && config.gauge.a.iter().chain(&config.gauge.b).all(|v| *v == 0.0)
                && config.gauge.b_gradient == 0.0
                && config.initial.profile == Profile::Gaussian
                && config.initial.winding == 0;
            if free {
                let s0 = config.initial.width[0];
                let c = config.params.hbar / (2.0 * config.params.m * s0);
                let worst = report
                    .rows
                    .iter()
                    .map(|r| {
                        let exact = s0 * s0 + (c * r.t).powi(2);
                        (r.var_x[0] - exact).abs() / exact
                    })
                    .fold(0.0, f64::max);
                report.checks.push(Check::below("dispersion", worst, DISPERSION_TOL));
            }
        }
        _ => {}
    }
    if config.sampler.walkers >= ENSEMBLE_CHECK_MIN_WALKERS {
        let worst = report.ensemble.iter().map(|r| r.l1).fold(0.0, f64::max);
        report.checks.push(Check::below("ensemble_l1", worst, ENSEMBLE_L1_TOL));
    }
    if report.checks.iter().any(|c| !c.passed) {
        report.status = RunStatus::Failed;
    }
    report.timings.total = start.elapsed().as_secs_f64();
    Ok(report)
}
