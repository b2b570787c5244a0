//! Walkers with definite positions driven by the entropic transition kernel.
//!
//! Each short step is Gaussian: `Δx = b(x)Δt + Δw`, `⟨Δw^aΔw^b⟩ = (η/m)δ^{ab}Δt`.
//! The drift comes from the current epistemic state ψ, which the walkers
//! never feed back into.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{structural, Error, Result};
use crate::grid::{gradient, EdParams, GaugeField, Grid, SpinorField, DOWN, UP};

/// Relative density floor below which phase gradients are treated as undefined.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// A vector field stored one component per active axis, plus a mask of
/// nodes where it could not be evaluated (set to zero there).
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub components: Vec<Vec<f64>>,
    pub dead: Vec<bool>,
}

impl VelocityField {
    pub fn dead_count(&self) -> usize {
        self.dead.iter().filter(|d| **d).count()
    }
}

struct PhaseParts {
    /// `ħ Σ_k Im(ψ_k* ∂ψ_k) / ρ_x`, i.e. `Σ_k ρ_{k|x} ∂ξ_k`
    phase: Vec<Vec<f64>>,
    /// `∂ρ_x / ρ_x`
    dlog_rho: Vec<Vec<f64>>,
    dead: Vec<bool>,
}

fn phase_parts(psi: &SpinorField, hbar: f64) -> Result<PhaseParts> {
    let grid = psi.grid();
    let rho = psi.density();
    let max = rho.iter().cloned().fold(0.0, f64::max);
    let dead: Vec<bool> = rho.iter().map(|r| !(*r > DENSITY_FLOOR * max)).collect();
    let mut phase = Vec::with_capacity(grid.dim());
    let mut dlog_rho = Vec::with_capacity(grid.dim());
    for a in 0..grid.dim() {
        let mut p = vec![0.0; grid.len()];
        for k in [UP, DOWN] {
            let comp = psi.component(k);
            let d = gradient(grid, comp, a)?;
            for i in 0..grid.len() {
                p[i] += (comp[i].conj() * d[i]).im;
            }
        }
        let drho = gradient(grid, &rho, a)?;
        let mut l = vec![0.0; grid.len()];
        for i in 0..grid.len() {
            if dead[i] {
                p[i] = 0.0;
            } else {
                p[i] *= hbar / rho[i];
                l[i] = drho[i] / rho[i];
            }
        }
        phase.push(p);
        dlog_rho.push(l);
    }
    Ok(PhaseParts { phase, dlog_rho, dead })
}

/// `∂̄_a φ = Σ_k ρ_{k|x} ∂_a ξ_k + (η/2) ∂_a log ρ_x`.
pub fn effective_phase_gradient(psi: &SpinorField, params: &EdParams) -> Result<VelocityField> {
    let parts = phase_parts(psi, params.hbar)?;
    let components = parts
        .phase
        .iter()
        .zip(&parts.dlog_rho)
        .map(|(p, l)| p.iter().zip(l).map(|(p, l)| p + 0.5 * params.eta * l).collect())
        .collect();
    Ok(VelocityField { components, dead: parts.dead })
}

fn check_inputs(psi: &SpinorField, gauge: &GaugeField, params: &EdParams) -> Result<()> {
    params.validate()?;
    gauge.validate(psi.grid())
}

/// Drift velocity `b = (∂̄φ − βA)/m`.
pub fn drift_velocity(psi: &SpinorField, gauge: &GaugeField, params: &EdParams) -> Result<VelocityField> {
    check_inputs(psi, gauge, params)?;
    let mut f = effective_phase_gradient(psi, params)?;
    for (a, c) in f.components.iter_mut().enumerate() {
        for (i, v) in c.iter_mut().enumerate() {
            *v = if f.dead[i] { 0.0 } else { (*v - params.beta * gauge.a[a][i]) / params.m };
        }
    }
    Ok(f)
}

/// Current velocity `v = b − (η/2m) ∂ log ρ_x`.
pub fn current_velocity(psi: &SpinorField, gauge: &GaugeField, params: &EdParams) -> Result<VelocityField> {
    let mut b = drift_velocity(psi, gauge, params)?;
    let parts = phase_parts(psi, params.hbar)?;
    let c = 0.5 * params.eta / params.m;
    for (comp, l) in b.components.iter_mut().zip(&parts.dlog_rho) {
        comp.iter_mut().zip(l).for_each(|(v, l)| *v -= c * l);
    }
    Ok(b)
}

/// Current velocity from `(Σ_k ρ_{k|x} ∂ξ_k − βA)/m` directly, without the
/// osmotic detour. Used to cross-check [`current_velocity`].
pub fn current_velocity_direct(psi: &SpinorField, gauge: &GaugeField, params: &EdParams) -> Result<VelocityField> {
    check_inputs(psi, gauge, params)?;
    let parts = phase_parts(psi, params.hbar)?;
    let components = parts
        .phase
        .iter()
        .enumerate()
        .map(|(a, p)| {
            p.iter()
                .enumerate()
                .map(|(i, p)| if parts.dead[i] { 0.0 } else { (p - params.beta * gauge.a[a][i]) / params.m })
                .collect()
        })
        .collect();
    Ok(VelocityField { components, dead: parts.dead })
}

/// Multilinear interpolation of a nodal field at an arbitrary (periodic) point.
pub fn interpolate(grid: &Grid, values: &[f64], x: &[f64]) -> f64 {
    let dim = grid.dim();
    let mut base = [0usize; 3];
    let mut frac = [0.0; 3];
    for a in 0..dim {
        let n = grid.points(a);
        let s = (grid.wrap(a, x[a]) - grid.lower(a)) / grid.spacing(a);
        let f = s.floor();
        base[a] = (f as isize).rem_euclid(n as isize) as usize;
        frac[a] = s - f;
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << dim) {
        let mut w = 1.0;
        let mut idx = [0usize; 3];
        for a in 0..dim {
            let bit = (corner >> a) & 1;
            w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
            idx[a] = (base[a] + bit) % grid.points(a);
        }
        if w != 0.0 {
            acc += w * values[grid.ravel(idx)];
        }
    }
    acc
}

/// Independent random streams; the seed picks the key, `Purpose` separates uses.
#[derive(Debug, Clone, Copy)]
enum Purpose {
    Init = 1,
    Step = 2,
    Label = 3,
}

fn stream_rng(seed: u64, purpose: Purpose, walker: usize, counter: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8] = purpose as u8;
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(walker as u64);
    rng.set_word_pos(counter as u128 * 256);
    rng
}

/// Empirical moments of one ensemble step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepMoments {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl StepMoments {
    fn from_displacements(dim: usize, disp: &[f64]) -> Self {
        let n = disp.len() / dim;
        let mut mean = vec![0.0; dim];
        for d in disp.chunks_exact(dim) {
            mean.iter_mut().zip(d).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = vec![vec![0.0; dim]; dim];
        for d in disp.chunks_exact(dim) {
            for a in 0..dim {
                for b in 0..dim {
                    cov[a][b] += (d[a] - mean[a]) * (d[b] - mean[b]);
                }
            }
        }
        let denom = (n.max(2) - 1) as f64;
        cov.iter_mut().flatten().for_each(|c| *c /= denom);
        Self { mean, cov }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    grid: Grid,
    /// Walker-major, axis fastest.
    positions: Vec<f64>,
    k_labels: Option<Vec<i8>>,
    seed: u64,
    time: f64,
    steps: u64,
}

impl TrajectoryEnsemble {
    pub fn from_positions(grid: Grid, positions: Vec<f64>, seed: u64) -> Result<Self> {
        let dim = grid.dim();
        if positions.is_empty() || positions.len() % dim != 0 {
            return Err(structural("positions must be a non-empty multiple of the grid dimension"));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("walker positions must be finite".into()));
        }
        let mut positions = positions;
        for p in positions.chunks_exact_mut(dim) {
            for (a, x) in p.iter_mut().enumerate() {
                *x = grid.wrap(a, *x);
            }
        }
        Ok(Self { grid, positions, k_labels: None, seed, time: 0.0, steps: 0 })
    }

    /// Draw `n` walkers from a nodal density: pick a node with probability
    /// proportional to `rho`, then place the walker uniformly in its cell.
    pub fn from_density(grid: &Grid, rho: &[f64], n: usize, seed: u64) -> Result<Self> {
        grid.check_len(rho.len(), "density")?;
        if n == 0 {
            return Err(Error::Domain("ensemble needs at least one walker".into()));
        }
        if rho.iter().any(|r| *r < 0.0 || !r.is_finite()) {
            return Err(Error::Domain("density must be finite and non-negative".into()));
        }
        let mut cdf = Vec::with_capacity(rho.len());
        let mut acc = 0.0;
        for r in rho {
            acc += r;
            cdf.push(acc);
        }
        if acc <= 0.0 {
            return Err(Error::Domain("density has zero total weight".into()));
        }
        let dim = grid.dim();
        let mut positions = vec![0.0; n * dim];
        positions.par_chunks_mut(dim).enumerate().for_each(|(w, p)| {
            let mut rng = stream_rng(seed, Purpose::Init, w, 0);
            let u: f64 = rng.random::<f64>() * acc;
            let node = cdf.partition_point(|c| *c <= u).min(rho.len() - 1);
            let x = grid.position(node);
            for a in 0..dim {
                let jitter: f64 = rng.random::<f64>() - 0.5;
                p[a] = grid.wrap(a, x[a] + jitter * grid.spacing(a));
            }
        });
        Self::from_positions(grid.clone(), positions, seed)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.grid.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn position(&self, w: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.positions[w * d..(w + 1) * d]
    }

    pub fn k_labels(&self) -> Option<&[i8]> {
        self.k_labels.as_deref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    /// Move every walker by `b(x)Δt + Δw` using the drift of `psi`.
    pub fn sample_step(&mut self, psi: &SpinorField, gauge: &GaugeField, params: &EdParams) -> Result<StepMoments> {
        self.grid.same_as(psi.grid())?;
        let b = drift_velocity(psi, gauge, params)?;
        let dead: Vec<f64> = b.dead.iter().map(|d| if *d { 1.0 } else { 0.0 }).collect();
        let dt = params.dt;
        let sd = (params.eta / params.m * dt).sqrt();
        let (grid, seed, step) = (&self.grid, self.seed, self.steps);
        let dim = grid.dim();
        let mut disp = vec![0.0; self.positions.len()];
        self.positions
            .par_chunks_mut(dim)
            .zip(disp.par_chunks_mut(dim))
            .enumerate()
            .for_each(|(w, (p, d))| {
                let mut rng = stream_rng(seed, Purpose::Step, w, step);
                let noise_only = grid.dim() > 0 && dead[grid.nearest_index(p)] > 0.0;
                for a in 0..dim {
                    let drift = if noise_only { 0.0 } else { interpolate(grid, &b.components[a], p) };
                    let z: f64 = rng.sample(StandardNormal);
                    d[a] = drift * dt + sd * z;
                }
                for a in 0..dim {
                    p[a] = grid.wrap(a, p[a] + d[a]);
                }
            });
        self.time += dt;
        self.steps += 1;
        Ok(StepMoments::from_displacements(dim, &disp))
    }

    /// Draw each walker's label from `ρ_{k|x}` at its position
    /// (`+1` with probability `ρ_{+|x}`; an even draw where `ρ_x = 0`).
    pub fn resample_k(&mut self, psi: &SpinorField) -> Result<()> {
        self.grid.same_as(psi.grid())?;
        let up = psi.component_density(UP);
        let total = psi.density();
        let (grid, seed, step) = (&self.grid, self.seed, self.steps);
        let dim = grid.dim();
        let labels = self
            .positions
            .par_chunks(dim)
            .enumerate()
            .map(|(w, p)| {
                let mut rng = stream_rng(seed, Purpose::Label, w, step);
                let rx = interpolate(grid, &total, p);
                let prob = if rx > 0.0 { (interpolate(grid, &up, p) / rx).clamp(0.0, 1.0) } else { 0.5 };
                if rng.random::<f64>() < prob {
                    1
                } else {
                    -1
                }
            })
            .collect();
        self.k_labels = Some(labels);
        Ok(())
    }
}

/// Normalised nearest-node histogram of the walkers, optionally convolved
/// with a periodic Gaussian of standard deviation `bandwidth`.
pub fn density_estimate(ens: &TrajectoryEnsemble, grid: &Grid, bandwidth: Option<f64>) -> Result<Vec<f64>> {
    if grid.dim() != ens.grid().dim() {
        return Err(structural("histogram grid and ensemble differ in dimension"));
    }
    let dim = grid.dim();
    let mut hist = vec![0.0; grid.len()];
    for p in ens.positions().chunks_exact(dim) {
        hist[grid.nearest_index(p)] += 1.0;
    }
    let scale = 1.0 / (ens.len() as f64 * grid.cell_volume());
    hist.iter_mut().for_each(|h| *h *= scale);
    match bandwidth {
        None => Ok(hist),
        Some(bw) if bw > 0.0 && bw.is_finite() => {
            for a in 0..dim {
                hist = smooth_axis(grid, &hist, a, bw);
            }
            Ok(hist)
        }
        Some(bw) => Err(Error::Domain(format!("bandwidth must be positive, got {bw}"))),
    }
}

fn smooth_axis(grid: &Grid, values: &[f64], axis: usize, bw: f64) -> Vec<f64> {
    let n = grid.points(axis);
    let h = grid.spacing(axis);
    let reach = ((4.0 * bw / h).ceil() as usize).min(n / 2);
    let mut kernel: Vec<f64> = (0..=reach).map(|j| (-0.5 * (j as f64 * h / bw).powi(2)).exp()).collect();
    let total: f64 = kernel[0] + 2.0 * kernel[1..].iter().sum::<f64>();
    kernel.iter_mut().for_each(|k| *k /= total);
    let mut out = vec![0.0; values.len()];
    for i in 0..values.len() {
        let mut acc = kernel[0] * values[i];
        for (j, k) in kernel.iter().enumerate().skip(1) {
            acc += k * (values[grid.shift(i, axis, j as isize)] + values[grid.shift(i, axis, -(j as isize))]);
        }
        out[i] = acc;
    }
    out
}

/// `∫ |f − g|`.
pub fn l1_distance(grid: &Grid, f: &[f64], g: &[f64]) -> Result<f64> {
    grid.check_len(f.len(), "first field")?;
    grid.check_len(g.len(), "second field")?;
    Ok(f.iter().zip(g).map(|(a, b)| (a - b).abs()).sum::<f64>() * grid.cell_volume())
}
