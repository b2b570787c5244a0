//! Rotations of spinor fields: the SU(2) action, its combination with the
//! spatial pullback, and the orbital and spin generators.

use std::f64::consts::{FRAC_PI_2, PI};

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{structural, Error, Result};
use crate::grid::{gradient, FieldValue, Grid, SpinorField, C64, DOWN, UP};

pub type Mat2 = [[C64; 2]; 2];
pub type Mat3 = [[f64; 3]; 3];

const UNIT_TOL: f64 = 1e-12;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// The three Pauli matrices.
pub fn pauli_matrices() -> [Mat2; 3] {
    let (o, l, i) = (c(0.0, 0.0), c(1.0, 0.0), c(0.0, 1.0));
    [[[o, l], [l, o]], [[o, -i], [i, o]], [[l, o], [o, -l]]]
}

pub fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[c(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn mat2_adjoint(a: &Mat2) -> Mat2 {
    [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]]
}

/// Rotation by `angle` radians about the unit vector `axis`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationSpec {
    axis: [f64; 3],
    angle: f64,
}

impl RotationSpec {
    pub fn new(axis: [f64; 3], angle: f64) -> Result<Self> {
        check_unit(axis)?;
        if !angle.is_finite() {
            return Err(Error::Domain("rotation angle must be finite".into()));
        }
        Ok(Self { axis, angle })
    }

    /// Normalises `axis` first; fails only for a zero or non-finite vector.
    pub fn about(axis: [f64; 3], angle: f64) -> Result<Self> {
        let n = norm3(axis);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Domain("rotation axis must be a non-zero finite vector".into()));
        }
        Self::new(axis.map(|v| v / n), angle)
    }

    pub fn identity() -> Self {
        Self { axis: [0.0, 0.0, 1.0], angle: 0.0 }
    }

    pub fn axis(&self) -> [f64; 3] {
        self.axis
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn with_angle(&self, angle: f64) -> Self {
        Self { axis: self.axis, angle }
    }

    pub fn inverse(&self) -> Self {
        self.with_angle(-self.angle)
    }
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn check_unit(axis: [f64; 3]) -> Result<()> {
    let n = norm3(axis);
    if (n - 1.0).abs() > UNIT_TOL || !n.is_finite() {
        return Err(Error::Domain(format!("rotation axis must be a unit vector, |n| = {n}")));
    }
    Ok(())
}

/// `(ħ/2) n_a σ^a`.
pub fn spin_matrix(axis: [f64; 3], hbar: f64) -> Result<Mat2> {
    check_unit(axis)?;
    let s = pauli_matrices();
    let mut out = [[c(0.0, 0.0); 2]; 2];
    for (a, n) in axis.iter().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] += s[a][i][j] * (0.5 * hbar * n);
            }
        }
    }
    Ok(out)
}

/// `exp(−i ζ n·σ / 2) = cos(ζ/2)·1 − i sin(ζ/2)·n·σ`.
pub fn su2_rotation(spec: &RotationSpec) -> Mat2 {
    let (s, co) = (0.5 * spec.angle).sin_cos();
    let [nx, ny, nz] = spec.axis;
    [[c(co, -s * nz), c(-s * ny, -s * nx)], [c(s * ny, -s * nx), c(co, s * nz)]]
}

/// Rodrigues' formula: the 3×3 matrix rotating vectors by `angle` about `axis`.
pub fn rotation_matrix(spec: &RotationSpec) -> Mat3 {
    let (s, co) = spec.angle.sin_cos();
    let n = spec.axis;
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let delta = if i == j { 1.0 } else { 0.0 };
            r[i][j] = co * delta + (1.0 - co) * n[i] * n[j];
        }
    }
    // + sin ζ [n]_×
    r[0][1] -= s * n[2];
    r[0][2] += s * n[1];
    r[1][0] += s * n[2];
    r[1][2] -= s * n[0];
    r[2][0] -= s * n[1];
    r[2][1] += s * n[0];
    r
}

pub fn mat3_apply(r: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| r[i][0] * v[0] + r[i][1] * v[1] + r[i][2] * v[2])
}

/// Apply a fixed 2×2 matrix to the spinor at every node.
pub fn apply_spin_matrix(psi: &SpinorField, u: &Mat2) -> SpinorField {
    let n = psi.grid().len();
    let mut out = psi.clone();
    let data = out.data_mut();
    for i in 0..n {
        let [a, b] = psi.at(i);
        data[i] = u[0][0] * a + u[0][1] * b;
        data[n + i] = u[1][0] * a + u[1][1] * b;
    }
    out
}

/// How off-grid values are reconstructed during the spatial pullback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Linear,
    /// Four-point Lagrange per axis.
    Cubic,
    /// Three shears per plane rotation, each an exact Fourier shift along
    /// grid lines. Unitary, and exact for band-limited periodic fields.
    #[default]
    Spectral,
}

/// Which part of the rotation acts on the field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationMode {
    /// SU(2) on the spinor index only.
    SpinOnly,
    /// SU(2) combined with the spatial pullback about the grid origin.
    #[default]
    Full,
}

fn weights(frac: f64, interp: Interpolation) -> ([f64; 4], isize) {
    match interp {
        Interpolation::Linear => ([1.0 - frac, frac, 0.0, 0.0], 0),
        _ => {
            let t = frac;
            (
                [
                    -t * (t - 1.0) * (t - 2.0) / 6.0,
                    (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
                    -(t + 1.0) * t * (t - 2.0) / 2.0,
                    (t + 1.0) * t * (t - 1.0) / 6.0,
                ],
                -1,
            )
        }
    }
}

fn sample(grid: &Grid, values: &[C64], x: [f64; 3], interp: Interpolation) -> C64 {
    let dim = grid.dim();
    let mut base = [0isize; 3];
    let mut w = [[0.0; 4]; 3];
    let mut offset = 0;
    let taps = match interp {
        Interpolation::Linear => 2,
        _ => 4,
    };
    for a in 0..dim {
        let s = (x[a] - grid.lower(a)) / grid.spacing(a);
        let f = s.floor();
        base[a] = f as isize;
        let (wa, off) = weights(s - f, interp);
        w[a] = wa;
        offset = off;
    }
    let mut acc = c(0.0, 0.0);
    let combos = taps_pow(taps, dim);
    for combo in 0..combos {
        let mut idx = [0usize; 3];
        let mut weight = 1.0;
        let mut rest = combo;
        for a in 0..dim {
            let t = rest % taps;
            rest /= taps;
            weight *= w[a][t];
            let n = grid.points(a) as isize;
            idx[a] = (base[a] + offset + t as isize).rem_euclid(n) as usize;
        }
        if weight != 0.0 {
            acc += values[grid.ravel(idx)] * weight;
        }
    }
    acc
}

fn taps_pow(taps: usize, dim: usize) -> usize {
    taps.pow(dim as u32)
}

fn check_rotatable(grid: &Grid, spec: &RotationSpec) -> Result<()> {
    match grid.dim() {
        3 => Ok(()),
        2 if spec.axis[0].abs() < UNIT_TOL && spec.axis[1].abs() < UNIT_TOL => Ok(()),
        2 => Err(structural("a 2-D grid can only be rotated about the z axis")),
        _ => Err(structural("a 1-D grid admits spin-only rotations")),
    }
}

/// `Ψ_ζ(x) = U_ζ Ψ(R_ζ⁻¹ x)`; in spin-only mode the spatial part is skipped.
pub fn rotate_state(psi: &SpinorField, spec: &RotationSpec, mode: RotationMode, interp: Interpolation) -> Result<SpinorField> {
    let u = su2_rotation(spec);
    if mode == RotationMode::SpinOnly || spec.angle == 0.0 {
        return Ok(apply_spin_matrix(psi, &u));
    }
    let grid = psi.grid();
    check_rotatable(grid, spec)?;
    if interp == Interpolation::Spectral {
        let mut comps = [psi.up().to_vec(), psi.down().to_vec()];
        for (plane, angle) in plane_rotations(grid, spec) {
            for comp in comps.iter_mut() {
                rotate_plane(grid, comp, plane, angle);
            }
        }
        let [up, down] = comps;
        return Ok(apply_spin_matrix(&SpinorField::from_components(grid.clone(), up, down)?, &u));
    }
    let rinv = rotation_matrix(&spec.inverse());
    let n = grid.len();
    let mut pulled = vec![c(0.0, 0.0); 2 * n];
    for i in 0..n {
        let src = mat3_apply(&rinv, grid.position(i));
        pulled[i] = sample(grid, psi.up(), src, interp);
        pulled[n + i] = sample(grid, psi.down(), src, interp);
    }
    Ok(apply_spin_matrix(&SpinorField::new(grid.clone(), pulled)?, &u))
}

/// Coordinate-plane rotations whose product, applied in order, is the
/// rotation of `spec`: `R = R_z(α) R_y(β) R_z(γ)` becomes `γ, β, α`.
fn plane_rotations(grid: &Grid, spec: &RotationSpec) -> Vec<((usize, usize), f64)> {
    if grid.dim() == 2 {
        return vec![((0, 1), spec.angle * spec.axis[2].signum())];
    }
    let r = rotation_matrix(spec);
    let beta = r[2][2].clamp(-1.0, 1.0).acos();
    let (alpha, gamma) = if beta.sin().abs() > 1e-12 {
        (r[1][2].atan2(r[0][2]), r[2][1].atan2(-r[2][0]))
    } else if r[2][2] > 0.0 {
        (r[1][0].atan2(r[0][0]), 0.0)
    } else {
        ((-r[1][0]).atan2(-r[0][0]), 0.0)
    };
    // R_y(β) turns z towards x, i.e. the ordered plane (z, x)
    vec![((0, 1), gamma), ((2, 0), beta), ((0, 1), alpha)]
        .into_iter()
        .filter(|(_, a)| *a != 0.0)
        .collect()
}

/// `f ← f(R⁻¹x)` for the rotation by `angle` turning axis `plane.0` towards
/// `plane.1`, as shear(−tan φ/2), shear(sin φ), shear(−tan φ/2) in pieces of
/// at most an eighth of a turn.
fn rotate_plane(grid: &Grid, f: &mut [C64], plane: (usize, usize), angle: f64) {
    let angle = (angle + PI).rem_euclid(2.0 * PI) - PI;
    let pieces = (angle.abs() / (FRAC_PI_2 / 4.0)).ceil().max(1.0);
    let phi = angle / pieces;
    let (u, v) = plane;
    for _ in 0..pieces as usize {
        shear(grid, f, u, v, -(0.5 * phi).tan());
        shear(grid, f, v, u, phi.sin());
        shear(grid, f, u, v, -(0.5 * phi).tan());
    }
}

/// `f(x) ← f(x − a·x_v e_u)`: every line along `u` is shifted by `a` times
/// its coordinate along `v`, through the Fourier shift theorem.
fn shear(grid: &Grid, f: &mut [C64], u: usize, v: usize, a: f64) {
    let n = grid.points(u);
    let stride = grid.stride(u);
    let fft = FftPlanner::new().plan_fft_forward(n);
    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let dk = 2.0 * PI / grid.extent(u);
    let k: Vec<f64> = (0..n).map(|j| if 2 * j < n { j as f64 } else { j as f64 - n as f64 } * dk).collect();
    let mut line = vec![c(0.0, 0.0); n];
    let mut scratch = vec![c(0.0, 0.0); fft.get_inplace_scratch_len().max(ifft.get_inplace_scratch_len())];
    for start in 0..grid.len() {
        if (start / stride) % n != 0 {
            continue;
        }
        let shift = a * grid.position(start)[v];
        for (j, z) in line.iter_mut().enumerate() {
            *z = f[start + j * stride];
        }
        fft.process_with_scratch(&mut line, &mut scratch);
        for (z, kj) in line.iter_mut().zip(&k) {
            *z *= C64::from_polar(1.0 / n as f64, -kj * shift);
        }
        ifft.process_with_scratch(&mut line, &mut scratch);
        for (j, z) in line.iter().enumerate() {
            f[start + j * stride] = *z;
        }
    }
}

fn axes_for_orbital(grid: &Grid) -> Result<Vec<usize>> {
    match grid.dim() {
        3 => Ok(vec![0, 1, 2]),
        2 => Ok(vec![2]),
        _ => Err(structural("orbital angular momentum needs at least two dimensions")),
    }
}

const WIDE_WEIGHTS: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];

/// Eighth-order central derivative. The 3-point gradient misreads L by
/// O(h²) whenever the radial profile changes, which swamps its drift.
fn wide_gradient<T: FieldValue>(grid: &Grid, f: &[T], axis: usize) -> Result<Vec<T>> {
    grid.check_len(f.len(), "field")?;
    grid.check_axis(axis)?;
    if grid.points(axis) < 2 * WIDE_WEIGHTS.len() + 1 {
        return gradient(grid, f, axis);
    }
    let h = grid.spacing(axis);
    Ok((0..grid.len())
        .map(|i| {
            let acc: T = WIDE_WEIGHTS
                .iter()
                .enumerate()
                .map(|(k, w)| (f[grid.shift(i, axis, k as isize + 1)] - f[grid.shift(i, axis, -(k as isize) - 1)]) * *w)
                .sum();
            acc * (1.0 / h)
        })
        .collect())
}

/// `L^a = ∫ Σ_k ψ_k* ε^{abc} x_b (ħ/i) ∂_c ψ_k`, complex before taking the
/// real part. In 2-D only the z component is populated.
pub fn orbital_angular_momentum_complex(psi: &SpinorField, hbar: f64) -> Result<[C64; 3]> {
    let grid = psi.grid();
    let comps = axes_for_orbital(grid)?;
    let dim = grid.dim();
    let n = grid.len();
    let mut grads: Vec<[Vec<C64>; 2]> = Vec::with_capacity(dim);
    for axis in 0..dim {
        grads.push([wide_gradient(grid, psi.up(), axis)?, wide_gradient(grid, psi.down(), axis)?]);
    }
    let mut out = [c(0.0, 0.0); 3];
    for a in comps {
        let (b, cc) = ((a + 1) % 3, (a + 2) % 3);
        let mut acc = c(0.0, 0.0);
        for i in 0..n {
            let x = grid.position(i);
            for k in [UP, DOWN] {
                let z = psi.component(k)[i].conj();
                // ε^{abc} x_b ∂_c − ε^{acb} x_c ∂_b
                let mut term = c(0.0, 0.0);
                if cc < dim {
                    term += grads[cc][k][i] * x[b];
                }
                if b < dim {
                    term -= grads[b][k][i] * x[cc];
                }
                acc += z * term;
            }
        }
        out[a] = acc * c(0.0, -hbar) * grid.cell_volume();
    }
    Ok(out)
}

pub fn orbital_angular_momentum(psi: &SpinorField, hbar: f64) -> Result<[f64; 3]> {
    Ok(orbital_angular_momentum_complex(psi, hbar)?.map(|v| v.re))
}

/// `S̃^a = ∫ Σ ψ* (ħ/2) σ^a ψ`.
pub fn spin_functional(psi: &SpinorField, hbar: f64) -> [f64; 3] {
    let n = psi.grid().len();
    let mut s = [0.0; 3];
    for i in 0..n {
        let [u, d] = psi.at(i);
        let cross = u.conj() * d;
        s[0] += 2.0 * cross.re;
        s[1] += 2.0 * cross.im;
        s[2] += u.norm_sqr() - d.norm_sqr();
    }
    let f = 0.5 * hbar * psi.grid().cell_volume();
    s.map(|v| v * f)
}

/// `J̃ = L + S̃`, with only `L_z` in two dimensions and no `L` in one.
pub fn total_angular_momentum(psi: &SpinorField, hbar: f64) -> Result<[f64; 3]> {
    let s = spin_functional(psi, hbar);
    let l = if psi.grid().dim() >= 2 { orbital_angular_momentum(psi, hbar)? } else { [0.0; 3] };
    Ok([l[0] + s[0], l[1] + s[1], l[2] + s[2]])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowReport {
    pub d_zeta: f64,
    /// `∫ |Δρ/Δζ − (−ε^{abc} n_a x_b ∂_c ρ)|`
    pub l1_mismatch: f64,
    /// `∫ |ε^{abc} n_a x_b ∂_c ρ|`, for scale.
    pub l1_generator: f64,
}

/// Compare the finite rotation of `ρ_x` with the flow generated by the
/// orbital part, `∂ρ/∂ζ = −(n × x)·∇ρ`.
pub fn generator_flow_check(
    psi: &SpinorField,
    spec: &RotationSpec,
    d_zeta: f64,
    interp: Interpolation,
) -> Result<FlowReport> {
    if !(d_zeta != 0.0 && d_zeta.is_finite()) {
        return Err(Error::Domain("d_zeta must be finite and non-zero".into()));
    }
    let grid = psi.grid();
    check_rotatable(grid, spec)?;
    let rho = psi.density();
    let rotated = rotate_state(psi, &spec.with_angle(d_zeta), RotationMode::Full, interp)?.density();
    let dim = grid.dim();
    let grads: Vec<Vec<f64>> = (0..dim).map(|a| wide_gradient(grid, &rho, a)).collect::<Result<_>>()?;
    let n = spec.axis;
    let (mut mismatch, mut scale) = (0.0, 0.0);
    for i in 0..grid.len() {
        let x = grid.position(i);
        let nx = [n[1] * x[2] - n[2] * x[1], n[2] * x[0] - n[0] * x[2], n[0] * x[1] - n[1] * x[0]];
        let flow: f64 = (0..dim).map(|a| nx[a] * grads[a][i]).sum();
        mismatch += ((rotated[i] - rho[i]) / d_zeta + flow).abs();
        scale += flow.abs();
    }
    let dv = grid.cell_volume();
    Ok(FlowReport { d_zeta, l1_mismatch: mismatch * dv, l1_generator: scale * dv })
}
