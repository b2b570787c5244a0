//! The e-Hamiltonian and time evolution of the Pauli equation,
//!
//! `iħ ∂ψ/∂t = −(ħ²/2m) D_a D_a ψ + V₀ψ + V_a σ^a ψ`.

use serde::{Deserialize, Serialize};

use crate::error::{structural, Error, Result};
use crate::grid::{covariant_laplacian, divergence, gradient, EdParams, GaugeField, Grid, SpinorField, C64, DOWN, UP};
use crate::phase_space::inner_product;
use crate::sampler::{current_velocity, drift_velocity};
use crate::solver::{crank_nicolson, SolveStats, SolverOptions, SpinorOperator};

/// Local Hermitian kernel `V₀(x)·1 + V_a(x)σ^a`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialKernel {
    pub v0: Vec<f64>,
    pub v: [Vec<f64>; 3],
}

impl PotentialKernel {
    pub fn zero(grid: &Grid) -> Self {
        let n = grid.len();
        Self { v0: vec![0.0; n], v: [vec![0.0; n], vec![0.0; n], vec![0.0; n]] }
    }

    pub fn uniform(grid: &Grid, v0: f64, v: [f64; 3]) -> Self {
        let n = grid.len();
        Self { v0: vec![v0; n], v: v.map(|c| vec![c; n]) }
    }

    /// Scalar potential only, `V₀(x) = f(x)`.
    pub fn scalar_fn(grid: &Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let mut k = Self::zero(grid);
        for i in 0..grid.len() {
            k.v0[i] = f(grid.position(i));
        }
        k
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        grid.check_len(self.v0.len(), "V0")?;
        for c in &self.v {
            grid.check_len(c.len(), "V_a")?;
        }
        if self.v0.iter().chain(self.v.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::Numerical("potential contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.v0.iter().chain(self.v.iter().flatten()).all(|x| *x == 0.0)
    }

    /// Pointwise sum of two kernels.
    pub fn plus(&self, other: &PotentialKernel) -> Result<PotentialKernel> {
        if self.v0.len() != other.v0.len() {
            return Err(structural("potential kernels have different sizes"));
        }
        let add = |a: &Vec<f64>, b: &Vec<f64>| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>();
        Ok(PotentialKernel {
            v0: add(&self.v0, &other.v0),
            v: [add(&self.v[0], &other.v[0]), add(&self.v[1], &other.v[1]), add(&self.v[2], &other.v[2])],
        })
    }

    /// The 2×2 matrix at node `i`.
    #[inline]
    pub fn matrix_at(&self, i: usize) -> [[C64; 2]; 2] {
        let (v0, v1, v2, v3) = (self.v0[i], self.v[0][i], self.v[1][i], self.v[2][i]);
        [
            [C64::new(v0 + v3, 0.0), C64::new(v1, -v2)],
            [C64::new(v1, v2), C64::new(v0 - v3, 0.0)],
        ]
    }

    fn apply_into(&self, psi: &SpinorField, out: &mut [C64]) {
        let n = psi.grid().len();
        for i in 0..n {
            let [u, d] = psi.at(i);
            let m = self.matrix_at(i);
            out[i] += m[0][0] * u + m[0][1] * d;
            out[n + i] += m[1][0] * u + m[1][1] * d;
        }
    }
}

/// Magnetic-moment coupling `V_a = −(ħβ/2m) B_a`.
pub fn pauli_coupling_from_b(params: &EdParams, b: &[Vec<f64>; 3]) -> PotentialKernel {
    let c = -params.hbar * params.beta / (2.0 * params.m);
    let n = b[0].len();
    PotentialKernel { v0: vec![0.0; n], v: [0, 1, 2].map(|a| b[a].iter().map(|x| c * x).collect()) }
}

/// Full point-particle kernel: `V₀ = q·A₀` plus the magnetic-moment coupling.
pub fn point_particle_kernel(params: &EdParams, gauge: &GaugeField, charge: f64) -> PotentialKernel {
    let mut k = pauli_coupling_from_b(params, &gauge.b);
    k.v0 = gauge.a0.iter().map(|a| charge * a).collect();
    k
}

/// How [`step`] advances the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Crank–Nicolson on the whole Hamiltonian.
    CrankNicolson,
    /// Half step of the exact local potential propagator, Crank–Nicolson on
    /// the kinetic term, another local half step. Identical to
    /// `CrankNicolson` when the potential vanishes.
    #[default]
    SplitPotential,
}

/// Everything needed to apply `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSpec {
    pub params: EdParams,
    pub gauge: GaugeField,
    pub potential: PotentialKernel,
    pub integrator: Integrator,
    pub solver: SolverOptions,
}

impl HamiltonianSpec {
    pub fn new(params: EdParams, gauge: GaugeField, potential: PotentialKernel) -> Self {
        Self { params, gauge, potential, integrator: Integrator::default(), solver: SolverOptions::default() }
    }

    /// Free particle: no gauge field, no potential.
    pub fn free(params: EdParams, grid: &Grid) -> Self {
        Self::new(params, GaugeField::zero(grid), PotentialKernel::zero(grid))
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        self.gauge.validate(grid)?;
        self.potential.validate(grid)
    }

    fn kinetic_prefactor(&self) -> f64 {
        -self.params.hbar * self.params.hbar / (2.0 * self.params.m)
    }

    fn kinetic_diagonal(&self, grid: &Grid) -> f64 {
        let s: f64 = (0..grid.dim()).map(|a| 2.0 / grid.spacing(a).powi(2)).sum();
        -self.kinetic_prefactor() * s
    }
}

/// `−(ħ²/2m) D_a D_a` alone.
struct Kinetic<'a>(&'a HamiltonianSpec);

impl SpinorOperator for Kinetic<'_> {
    fn apply(&self, psi: &SpinorField) -> Result<SpinorField> {
        let mut lap = covariant_laplacian(psi, &self.0.gauge, &self.0.params)?;
        lap.scale(C64::new(self.0.kinetic_prefactor(), 0.0));
        Ok(lap)
    }

    fn diagonal(&self, psi: &SpinorField) -> Option<Vec<C64>> {
        let d = self.0.kinetic_diagonal(psi.grid());
        Some(vec![C64::new(d, 0.0); psi.data().len()])
    }
}

impl SpinorOperator for HamiltonianSpec {
    fn apply(&self, psi: &SpinorField) -> Result<SpinorField> {
        apply_hamiltonian(self, psi)
    }

    fn diagonal(&self, psi: &SpinorField) -> Option<Vec<C64>> {
        let n = psi.grid().len();
        let kin = self.kinetic_diagonal(psi.grid());
        let mut d = Vec::with_capacity(2 * n);
        d.extend((0..n).map(|i| C64::new(kin + self.potential.v0[i] + self.potential.v[2][i], 0.0)));
        d.extend((0..n).map(|i| C64::new(kin + self.potential.v0[i] - self.potential.v[2][i], 0.0)));
        Some(d)
    }
}

/// `Hψ = −(ħ²/2m) D_a D_a ψ + V₀ψ + V_a σ^a ψ`.
pub fn apply_hamiltonian(spec: &HamiltonianSpec, psi: &SpinorField) -> Result<SpinorField> {
    spec.validate(psi.grid())?;
    let mut out = Kinetic(spec).apply(psi)?;
    spec.potential.apply_into(psi, out.data_mut());
    Ok(out)
}

/// Exact propagator `exp(−iτ(V₀ + V·σ))` of the local kernel, applied pointwise.
fn local_propagate(potential: &PotentialKernel, psi: &mut SpinorField, tau: f64) {
    let n = psi.grid().len();
    let data = psi.data_mut();
    for i in 0..n {
        let (v0, v) = (potential.v0[i], [potential.v[0][i], potential.v[1][i], potential.v[2][i]]);
        let mag = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let phase = C64::from_polar(1.0, -v0 * tau);
        let (c, s) = ((mag * tau).cos(), (mag * tau).sin());
        // cos(|V|τ)·1 − i sin(|V|τ)·(V̂·σ)
        let (a, b, cc, d) = if mag > 0.0 {
            let u = [v[0] / mag, v[1] / mag, v[2] / mag];
            (
                C64::new(c, -s * u[2]),
                C64::new(-s * u[1], -s * u[0]),
                C64::new(s * u[1], -s * u[0]),
                C64::new(c, s * u[2]),
            )
        } else {
            (C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0))
        };
        let (up, dn) = (data[i], data[n + i]);
        data[i] = phase * (a * up + b * dn);
        data[n + i] = phase * (cc * up + d * dn);
    }
}

/// Crank–Nicolson on the full Hamiltonian, whatever `spec.integrator` says.
pub fn step_crank_nicolson(spec: &HamiltonianSpec, psi: &SpinorField, dt: f64) -> Result<(SpinorField, SolveStats)> {
    spec.validate(psi.grid())?;
    crank_nicolson(spec, psi, dt, spec.params.hbar, spec.solver)
}

/// Advance `psi` by `dt` (negative values run backwards).
pub fn step(spec: &HamiltonianSpec, psi: &SpinorField, dt: f64) -> Result<(SpinorField, SolveStats)> {
    if dt == 0.0 || !dt.is_finite() {
        return Err(Error::Domain(format!("time step must be finite and non-zero, got {dt}")));
    }
    spec.validate(psi.grid())?;
    match spec.integrator {
        Integrator::CrankNicolson => step_crank_nicolson(spec, psi, dt),
        Integrator::SplitPotential if spec.potential.is_zero() => step_crank_nicolson(spec, psi, dt),
        Integrator::SplitPotential => {
            let tau = 0.5 * dt / spec.params.hbar;
            let mut state = psi.clone();
            local_propagate(&spec.potential, &mut state, tau);
            let (mut state, stats) = crank_nicolson(&Kinetic(spec), &state, dt, spec.params.hbar, spec.solver)?;
            local_propagate(&spec.potential, &mut state, tau);
            Ok((state, stats))
        }
    }
}

/// Step with a time-dependent Hamiltonian evaluated at the midpoint `t + dt/2`.
pub fn step_at<F>(spec_at: F, t: f64, psi: &SpinorField, dt: f64) -> Result<(SpinorField, SolveStats)>
where
    F: Fn(f64) -> HamiltonianSpec,
{
    step(&spec_at(t + 0.5 * dt), psi, dt)
}

/// `⟨ψ|H|ψ⟩`. Fails if the imaginary part is not negligible.
pub fn energy(spec: &HamiltonianSpec, psi: &SpinorField) -> Result<f64> {
    let e = inner_product(psi, &apply_hamiltonian(spec, psi)?)?;
    if e.im.abs() > 1e-10 * e.re.abs().max(1.0) {
        return Err(Error::Numerical(format!("energy has imaginary part {:.3e}", e.im)));
    }
    Ok(e.re)
}

/// Pointwise residual of a probability-balance law and its L¹ norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub field: Vec<f64>,
    pub l1: f64,
}

impl Residual {
    fn from_field(grid: &Grid, field: Vec<f64>) -> Self {
        let l1 = field.iter().map(|v| v.abs()).sum::<f64>() * grid.cell_volume();
        Self { field, l1 }
    }
}

fn check_series(prev: &SpinorField, mid: &SpinorField, next: &SpinorField, span: f64) -> Result<()> {
    mid.grid().same_as(prev.grid())?;
    mid.grid().same_as(next.grid())?;
    if !(span > 0.0) {
        return Err(Error::Domain("time span between snapshots must be positive".into()));
    }
    Ok(())
}

fn time_derivative(prev: &SpinorField, next: &SpinorField, span: f64) -> Vec<f64> {
    prev.density().iter().zip(next.density()).map(|(a, b)| (b - a) / span).collect()
}

/// `∂_t ρ + ∂_a(v^a ρ)` from snapshots `span` apart, `mid` halfway between.
pub fn continuity_residual_from_series(
    prev: &SpinorField,
    mid: &SpinorField,
    next: &SpinorField,
    span: f64,
    gauge: &GaugeField,
    params: &EdParams,
) -> Result<Residual> {
    check_series(prev, mid, next, span)?;
    let grid = mid.grid();
    let rho = mid.density();
    let v = current_velocity(mid, gauge, params)?;
    let flux: Vec<Vec<f64>> = v.components.iter().map(|c| c.iter().zip(&rho).map(|(a, r)| a * r).collect()).collect();
    let div = divergence(grid, &flux)?;
    let field = time_derivative(prev, next, span).into_iter().zip(div).map(|(d, f)| d + f).collect();
    Ok(Residual::from_field(grid, field))
}

/// `∂_t ρ + ∂_a(b^a ρ) − (η/2m) ∂_a∂_a ρ` from the same kind of series.
pub fn fokker_planck_residual(
    series: [&SpinorField; 3],
    span: f64,
    gauge: &GaugeField,
    params: &EdParams,
) -> Result<Residual> {
    let [prev, mid, next] = series;
    check_series(prev, mid, next, span)?;
    let grid = mid.grid();
    let rho = mid.density();
    let b = drift_velocity(mid, gauge, params)?;
    let flux: Vec<Vec<f64>> = b.components.iter().map(|c| c.iter().zip(&rho).map(|(a, r)| a * r).collect()).collect();
    let div = divergence(grid, &flux)?;
    let mut diffusion = vec![0.0; grid.len()];
    for a in 0..grid.dim() {
        let d2 = gradient(grid, &gradient(grid, &rho, a)?, a)?;
        diffusion.iter_mut().zip(d2).for_each(|(o, v)| *o += v);
    }
    let coef = 0.5 * params.eta / params.m;
    let field = time_derivative(prev, next, span)
        .into_iter()
        .zip(div)
        .zip(diffusion)
        .map(|((d, f), l)| d + f - coef * l)
        .collect();
    Ok(Residual::from_field(grid, field))
}

/// Continuity residual at the instant of `psi`: `∂_t ρ` is the centred
/// difference of the states half a step forward and backward.
pub fn continuity_residual(spec: &HamiltonianSpec, psi: &SpinorField, dt: f64) -> Result<Residual> {
    let fwd = step(spec, psi, 0.5 * dt)?.0;
    let bwd = step(spec, psi, -0.5 * dt)?.0;
    continuity_residual_from_series(&bwd, psi, &fwd, dt, &spec.gauge, &spec.params)
}

/// `⟨x_a⟩` for each active axis, using the box coordinates directly.
pub fn position_mean(psi: &SpinorField) -> [f64; 3] {
    let grid = psi.grid();
    let rho = psi.density();
    let norm: f64 = rho.iter().sum();
    let mut out = [0.0; 3];
    if norm == 0.0 {
        return out;
    }
    for (i, r) in rho.iter().enumerate() {
        let x = grid.position(i);
        for a in 0..grid.dim() {
            out[a] += x[a] * r;
        }
    }
    out.map(|v| v / norm)
}

/// Variance of each coordinate under `ρ_x`.
pub fn position_variance(psi: &SpinorField) -> [f64; 3] {
    let grid = psi.grid();
    let mean = position_mean(psi);
    let rho = psi.density();
    let norm: f64 = rho.iter().sum();
    let mut out = [0.0; 3];
    if norm == 0.0 {
        return out;
    }
    for (i, r) in rho.iter().enumerate() {
        let x = grid.position(i);
        for a in 0..grid.dim() {
            out[a] += (x[a] - mean[a]).powi(2) * r;
        }
    }
    out.map(|v| v / norm)
}

/// `⟨p_a⟩ = ∫ Σ_k ψ* (ħ/i) ∂_a ψ` with the central-difference gradient.
pub fn momentum_mean(psi: &SpinorField, hbar: f64) -> Result<[f64; 3]> {
    let grid = psi.grid();
    let mut out = [0.0; 3];
    for (a, o) in out.iter_mut().enumerate().take(grid.dim()) {
        let mut s = C64::new(0.0, 0.0);
        for k in [UP, DOWN] {
            let comp = psi.component(k);
            let d = gradient(grid, comp, a)?;
            s += comp.iter().zip(&d).map(|(z, dz)| z.conj() * dz).sum::<C64>();
        }
        *o = (s * C64::new(0.0, -hbar)).re * grid.cell_volume();
    }
    Ok(out)
}
