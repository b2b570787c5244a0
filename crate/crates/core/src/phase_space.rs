//! Canonical coordinates and geometric tensors of the epistemic phase space.
//!
//! A point is either the real pair `(ρ_kx, ξ_kx)` or the spinor
//! `ψ_kx = ρ_kx^{1/2} exp(iξ_kx/ħ)`. In complex coordinates each node carries
//! four components `(ψ₊, iħψ₊*, ψ₋, iħψ₋*)` and the symplectic form `Ω`,
//! metric `G` and complex structure `J` are 4×4 blocks times `δ(x, x′)`.
//! The delta is discretised as a Kronecker delta over the cell volume, so a
//! contraction `∫dx dx′ T(x,x′) u(x) v(x′)` collapses to `∏h · Σ_x`.

use serde::{Deserialize, Serialize};

use crate::error::{structural, Error, Result};
use crate::grid::{integrate, Grid, SpinorField, C64};
use crate::solver::{crank_nicolson, SolverOptions, SpinorOperator};

const I: C64 = C64::new(0.0, 1.0);
const ZERO: C64 = C64::new(0.0, 0.0);
#[cfg(test)]
const ONE: C64 = C64::new(1.0, 0.0);

/// Block of `Ω` in the `(ψ₊, iħψ₊*, ψ₋, iħψ₋*)` basis.
pub const SYMPLECTIC_BLOCK: [[f64; 4]; 4] =
    [[0.0, 1.0, 0.0, 0.0], [-1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0], [0.0, 0.0, -1.0, 0.0]];

/// Block of `G`; the tensor is `-i` times this pattern.
pub const METRIC_PATTERN: [[f64; 4]; 4] =
    [[0.0, 1.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 1.0, 0.0]];

pub fn symplectic_block() -> [[C64; 4]; 4] {
    SYMPLECTIC_BLOCK.map(|row| row.map(|v| C64::new(v, 0.0)))
}

pub fn metric_block() -> [[C64; 4]; 4] {
    METRIC_PATTERN.map(|row| row.map(|v| -I * v))
}

pub fn inverse_metric_block() -> [[C64; 4]; 4] {
    METRIC_PATTERN.map(|row| row.map(|v| I * v))
}

/// Diagonal block of `J`.
pub fn complex_structure_block() -> [[C64; 4]; 4] {
    let mut j = [[ZERO; 4]; 4];
    for (mu, s) in [1.0, -1.0, 1.0, -1.0].into_iter().enumerate() {
        j[mu][mu] = I * s;
    }
    j
}

/// Probability densities and phases per spin label.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityPhasePair {
    grid: Grid,
    pub rho: [Vec<f64>; 2],
    pub xi: [Vec<f64>; 2],
}

impl DensityPhasePair {
    pub fn new(grid: Grid, rho: [Vec<f64>; 2], xi: [Vec<f64>; 2]) -> Result<Self> {
        for k in 0..2 {
            grid.check_len(rho[k].len(), "rho")?;
            grid.check_len(xi[k].len(), "xi")?;
        }
        Ok(Self { grid, rho, xi })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `ρ_x = ρ₊ + ρ₋`.
    pub fn marginal_density(&self) -> Vec<f64> {
        self.rho[0].iter().zip(&self.rho[1]).map(|(a, b)| a + b).collect()
    }

    /// `ξ_x = (ξ₊ + ξ₋)/2`, the momentum conjugate to `ρ_x`.
    pub fn mean_phase(&self) -> Vec<f64> {
        self.xi[0].iter().zip(&self.xi[1]).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// `ρ_{k|x}`; `1/2` where `ρ_x` vanishes.
    pub fn conditional(&self, k: usize) -> Vec<f64> {
        self.rho[k]
            .iter()
            .zip(self.marginal_density())
            .map(|(r, rx)| if rx > 0.0 { r / rx } else { 0.5 })
            .collect()
    }
}

/// `ψ_kx = ρ_kx^{1/2} exp(iξ_kx/ħ)`.
pub fn to_wavefunction(dp: &DensityPhasePair, hbar: f64) -> Result<SpinorField> {
    if let Some(v) = dp.rho.iter().flatten().find(|r| !(**r >= 0.0)) {
        return Err(Error::Domain(format!("density must be non-negative, found {v}")));
    }
    let mut data = Vec::with_capacity(2 * dp.grid.len());
    for k in 0..2 {
        data.extend(dp.rho[k].iter().zip(&dp.xi[k]).map(|(r, x)| C64::from_polar(r.sqrt(), x / hbar)));
    }
    SpinorField::new(dp.grid.clone(), data)
}

/// Inverse of [`to_wavefunction`]: `ρ = |ψ|²`, `ξ = ħ·arg ψ` (principal
/// branch), with `ξ = 0` wherever `ψ = 0`.
pub fn from_wavefunction(psi: &SpinorField, hbar: f64) -> DensityPhasePair {
    let split = |k: usize| -> (Vec<f64>, Vec<f64>) {
        psi.component(k)
            .iter()
            .map(|z| {
                let r = z.norm_sqr();
                (r, if r > 0.0 { hbar * z.arg() } else { 0.0 })
            })
            .unzip()
    };
    let (r0, x0) = split(0);
    let (r1, x1) = split(1);
    DensityPhasePair { grid: psi.grid().clone(), rho: [r0, r1], xi: [x0, x1] }
}

/// A tangent vector: perturbations `(δψ₊, δψ₋)` per node. The conjugate
/// coordinates `iħδψ*` follow from these.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceTangent {
    field: SpinorField,
}

impl PhaseSpaceTangent {
    pub fn from_perturbation(delta: SpinorField) -> Self {
        Self { field: delta }
    }

    pub fn grid(&self) -> &Grid {
        self.field.grid()
    }

    pub fn perturbation(&self) -> &SpinorField {
        &self.field
    }

    pub fn into_perturbation(self) -> SpinorField {
        self.field
    }

    /// `(δψ₊, iħδψ₊*, δψ₋, iħδψ₋*)` per node.
    pub fn coordinates(&self, hbar: f64) -> [Vec<C64>; 4] {
        spinor_coordinates(&self.field, hbar)
    }
}

/// Complex phase-space coordinates `Ψ^{μx}` of a spinor field.
pub fn spinor_coordinates(psi: &SpinorField, hbar: f64) -> [Vec<C64>; 4] {
    let conj = |k: usize| psi.component(k).iter().map(|z| I * hbar * z.conj()).collect::<Vec<_>>();
    [psi.up().to_vec(), conj(0), psi.down().to_vec(), conj(1)]
}

/// `∫dx dx′ Σ_{μν} T_{μν} δ(x,x′) u^{μx} v^{νx′}`.
pub fn contract(grid: &Grid, block: &[[C64; 4]; 4], u: &[Vec<C64>; 4], v: &[Vec<C64>; 4]) -> Result<C64> {
    for c in u.iter().chain(v.iter()) {
        grid.check_len(c.len(), "tangent component")?;
    }
    let mut acc = ZERO;
    for (mu, row) in block.iter().enumerate() {
        for (nu, t) in row.iter().enumerate() {
            if *t == ZERO {
                continue;
            }
            let s: C64 = u[mu].iter().zip(&v[nu]).map(|(a, b)| a * b).sum();
            acc += t * s;
        }
    }
    Ok(acc * grid.cell_volume())
}

fn check_pair(v1: &PhaseSpaceTangent, v2: &PhaseSpaceTangent) -> Result<()> {
    if v1.grid() != v2.grid() {
        return Err(structural("tangent vectors live on different grids"));
    }
    Ok(())
}

/// `Ω(v₁, v₂)`; equals `2ħ ∫ Σ_k Im(δψ₁* δψ₂)`.
pub fn symplectic_form(v1: &PhaseSpaceTangent, v2: &PhaseSpaceTangent, hbar: f64) -> Result<f64> {
    check_pair(v1, v2)?;
    let z = contract(v1.grid(), &symplectic_block(), &v1.coordinates(hbar), &v2.coordinates(hbar))?;
    debug_assert!(z.im.abs() <= 1e-9 * (1.0 + z.re.abs()));
    Ok(z.re)
}

/// `G(v₁, v₂)`; equals `2ħ ∫ Σ_k Re(δψ₁* δψ₂)`.
pub fn metric(v1: &PhaseSpaceTangent, v2: &PhaseSpaceTangent, hbar: f64) -> Result<f64> {
    check_pair(v1, v2)?;
    let z = contract(v1.grid(), &metric_block(), &v1.coordinates(hbar), &v2.coordinates(hbar))?;
    debug_assert!(z.im.abs() <= 1e-9 * (1.0 + z.re.abs()));
    Ok(z.re)
}

/// Component `Ω_{μp, νq}` of the discretised tensor.
pub fn symplectic_component(grid: &Grid, mu: usize, p: usize, nu: usize, q: usize) -> f64 {
    if p == q {
        SYMPLECTIC_BLOCK[mu][nu] / grid.cell_volume()
    } else {
        0.0
    }
}

/// Component `G_{μp, νq}` of the discretised tensor.
pub fn metric_component(grid: &Grid, mu: usize, p: usize, nu: usize, q: usize) -> C64 {
    if p == q {
        metric_block()[mu][nu] / grid.cell_volume()
    } else {
        ZERO
    }
}

/// Action of `J`: multiplies `δψ` by `i` (and so `iħδψ*` by `-i`).
pub fn complex_structure(v: &PhaseSpaceTangent) -> PhaseSpaceTangent {
    let mut f = v.field.clone();
    f.scale(I);
    PhaseSpaceTangent { field: f }
}

/// `⟨Ψ₁|Ψ₂⟩ = ∫ Σ_k ψ₁* ψ₂`.
pub fn inner_product(psi1: &SpinorField, psi2: &SpinorField) -> Result<C64> {
    psi1.grid().same_as(psi2.grid())?;
    let s: C64 = psi1.data().iter().zip(psi2.data()).map(|(a, b)| a.conj() * b).sum();
    Ok(s * psi1.grid().cell_volume())
}

/// The inner product assembled from the geometry, `(1/2ħ)(G + iΩ)` contracted
/// with the complex coordinates of both fields.
pub fn inner_product_from_geometry(psi1: &SpinorField, psi2: &SpinorField, hbar: f64) -> Result<C64> {
    psi1.grid().same_as(psi2.grid())?;
    let g = metric_block();
    let w = symplectic_block();
    let mut block = [[ZERO; 4]; 4];
    for mu in 0..4 {
        for nu in 0..4 {
            block[mu][nu] = g[mu][nu] + I * w[mu][nu];
        }
    }
    let z = contract(psi1.grid(), &block, &spinor_coordinates(psi1, hbar), &spinor_coordinates(psi2, hbar))?;
    Ok(z / (2.0 * hbar))
}

/// A functional represented by its functional derivatives with respect to
/// `ρ_kx` and `ξ_kx`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FunctionalGradient {
    pub d_rho: Option<[Vec<f64>; 2]>,
    pub d_xi: Option<[Vec<f64>; 2]>,
}

impl FunctionalGradient {
    pub fn zero(grid: &Grid) -> Self {
        let n = grid.len();
        Self { d_rho: Some([vec![0.0; n], vec![0.0; n]]), d_xi: Some([vec![0.0; n], vec![0.0; n]]) }
    }

    fn delta(grid: &Grid, p: usize, weight: f64) -> Vec<f64> {
        let mut v = vec![0.0; grid.len()];
        v[p] = weight / grid.cell_volume();
        v
    }

    /// `F = ρ_k` evaluated at node `p`.
    pub fn density_at(grid: &Grid, k: usize, p: usize) -> Self {
        let mut f = Self::zero(grid);
        f.d_rho.as_mut().expect("set")[k] = Self::delta(grid, p, 1.0);
        f
    }

    /// `F = ξ_k` evaluated at node `p`.
    pub fn phase_at(grid: &Grid, k: usize, p: usize) -> Self {
        let mut f = Self::zero(grid);
        f.d_xi.as_mut().expect("set")[k] = Self::delta(grid, p, 1.0);
        f
    }

    /// `F = ρ_x = ρ₊ + ρ₋` at node `p`.
    pub fn marginal_density_at(grid: &Grid, p: usize) -> Self {
        let mut f = Self::zero(grid);
        f.d_rho = Some([Self::delta(grid, p, 1.0), Self::delta(grid, p, 1.0)]);
        f
    }

    /// `F = ξ_x = (ξ₊ + ξ₋)/2` at node `p`.
    pub fn mean_phase_at(grid: &Grid, p: usize) -> Self {
        let mut f = Self::zero(grid);
        f.d_xi = Some([Self::delta(grid, p, 0.5), Self::delta(grid, p, 0.5)]);
        f
    }
}

/// `{F, G} = ∫ Σ_k (δF/δρ_k · δG/δξ_k − δF/δξ_k · δG/δρ_k)`.
pub fn poisson_bracket(grid: &Grid, f: &FunctionalGradient, g: &FunctionalGradient) -> Result<f64> {
    let parts = |x: &FunctionalGradient| -> Result<([Vec<f64>; 2], [Vec<f64>; 2])> {
        match (&x.d_rho, &x.d_xi) {
            (Some(r), Some(s)) => {
                for k in 0..2 {
                    grid.check_len(r[k].len(), "δF/δρ")?;
                    grid.check_len(s[k].len(), "δF/δξ")?;
                }
                Ok((r.clone(), s.clone()))
            }
            _ => Err(structural("functional is missing a gradient field")),
        }
    };
    let (fr, fx) = parts(f)?;
    let (gr, gx) = parts(g)?;
    let n = grid.len();
    let integrand: Vec<f64> = (0..n)
        .map(|i| (0..2).map(|k| fr[k][i] * gx[k][i] - fx[k][i] * gr[k][i]).sum())
        .collect();
    integrate(grid, &integrand)
}

/// Outcome of evolving two tangents along the flow of a bilinear Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HkReport {
    /// Largest `|Ω(v₁,v₂)(t) − Ω(v₁,v₂)(0)|` seen.
    pub omega_drift: f64,
    /// Largest `|G(v₁,v₂)(t) − G(v₁,v₂)(0)|` seen.
    pub metric_drift: f64,
    /// Largest `|⟨ψ|ψ⟩(t) − ⟨ψ|ψ⟩(0)|` seen.
    pub norm_drift: f64,
    pub steps: usize,
    pub hermitian: bool,
    /// Set when the operator is not Hermitian or the flow failed to preserve `G`.
    pub contract_violation: Option<String>,
}

/// Tolerance of the Hermiticity and superposition probes.
const PROBE_TOL: f64 = 1e-9;

fn relative_gap(a: C64, b: C64, scale: f64) -> f64 {
    (a - b).norm() / scale.max(f64::MIN_POSITIVE)
}

/// Check that `op` is linear on `(ψ, v)`; returns `Err(Contract)` otherwise.
pub fn superposition_probe<O: SpinorOperator + ?Sized>(op: &O, a: &SpinorField, b: &SpinorField) -> Result<()> {
    let ca = C64::new(0.7, -0.3);
    let cb = C64::new(-1.1, 0.45);
    let combo = a.lincomb(ca, b, cb)?;
    let lhs = op.apply(&combo)?;
    let rhs = op.apply(a)?.lincomb(ca, &op.apply(b)?, cb)?;
    let scale = lhs.data().iter().chain(rhs.data()).map(|z| z.norm()).fold(0.0, f64::max);
    let gap = lhs.max_abs_diff(&rhs);
    if gap > PROBE_TOL * scale.max(1.0) {
        return Err(Error::Contract(format!(
            "Hamiltonian application is not linear (superposition defect {gap:.3e})"
        )));
    }
    Ok(())
}

/// `|⟨a|Hb⟩ − ⟨Ha|b⟩|` relative to `‖a‖‖Hb‖ + ‖Ha‖‖b‖`.
pub fn hermiticity_defect<O: SpinorOperator + ?Sized>(op: &O, a: &SpinorField, b: &SpinorField) -> Result<f64> {
    let ha = op.apply(a)?;
    let hb = op.apply(b)?;
    let lhs = inner_product(a, &hb)?;
    let rhs = inner_product(&ha, b)?;
    let scale = a.norm_sqr().sqrt() * hb.norm_sqr().sqrt() + ha.norm_sqr().sqrt() * b.norm_sqr().sqrt();
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(relative_gap(lhs, rhs, scale))
}

/// Evolve `psi` and two tangents for `steps` Crank–Nicolson steps under the
/// linear operator `op` and report how well `Ω` and `G` are preserved.
///
/// A non-linear `op` is a contract error. A non-Hermitian `op` still
/// produces a report, with `contract_violation` set.
pub fn hk_flow_check<O: SpinorOperator + ?Sized>(
    op: &O,
    psi: &SpinorField,
    tangents: [&PhaseSpaceTangent; 2],
    dt: f64,
    steps: usize,
    hbar: f64,
    opts: SolverOptions,
) -> Result<HkReport> {
    psi.grid().same_as(tangents[0].grid())?;
    psi.grid().same_as(tangents[1].grid())?;
    superposition_probe(op, psi, tangents[0].perturbation())?;
    let herm_defect = hermiticity_defect(op, tangents[0].perturbation(), tangents[1].perturbation())?
        .max(hermiticity_defect(op, psi, tangents[0].perturbation())?);
    let hermitian = herm_defect < PROBE_TOL;

    let mut state = psi.clone();
    let mut v1 = tangents[0].clone();
    let mut v2 = tangents[1].clone();
    let omega0 = symplectic_form(&v1, &v2, hbar)?;
    let g0 = metric(&v1, &v2, hbar)?;
    let n0 = state.norm_sqr();
    let (mut omega_drift, mut metric_drift, mut norm_drift) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..steps {
        state = crank_nicolson(op, &state, dt, hbar, opts)?.0;
        v1 = PhaseSpaceTangent::from_perturbation(crank_nicolson(op, v1.perturbation(), dt, hbar, opts)?.0);
        v2 = PhaseSpaceTangent::from_perturbation(crank_nicolson(op, v2.perturbation(), dt, hbar, opts)?.0);
        omega_drift = omega_drift.max((symplectic_form(&v1, &v2, hbar)? - omega0).abs());
        metric_drift = metric_drift.max((metric(&v1, &v2, hbar)? - g0).abs());
        norm_drift = norm_drift.max((state.norm_sqr() - n0).abs());
    }

    let scale = metric(tangents[0], tangents[0], hbar)?.max(metric(tangents[1], tangents[1], hbar)?).max(1e-300);
    let contract_violation = if !hermitian {
        Some(format!("operator is not Hermitian (relative defect {herm_defect:.3e}); the flow is not Killing"))
    } else if metric_drift > 1e-8 * scale {
        Some(format!("metric drift {metric_drift:.3e} exceeds tolerance"))
    } else {
        None
    };
    Ok(HkReport { omega_drift, metric_drift, norm_drift, steps, hermitian, contract_violation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn matmul(a: &[[C64; 4]; 4], b: &[[C64; 4]; 4]) -> [[C64; 4]; 4] {
        let mut c = [[ZERO; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        c
    }

    #[test]
    fn j_block_is_minus_inverse_metric_times_omega() {
        let ginv = inverse_metric_block();
        let prod = matmul(&ginv, &symplectic_block());
        let j = complex_structure_block();
        for mu in 0..4 {
            for nu in 0..4 {
                assert!((j[mu][nu] + prod[mu][nu]).norm() < 1e-15);
            }
        }
        // G·G⁻¹ = 1 and J² = −1 on the blocks
        let id = matmul(&metric_block(), &ginv);
        let jj = matmul(&j, &j);
        for mu in 0..4 {
            for nu in 0..4 {
                let e = if mu == nu { ONE } else { ZERO };
                assert!((id[mu][nu] - e).norm() < 1e-15);
                assert!((jj[mu][nu] + e).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn wavefunction_examples() {
        let g = Grid::line(4, 1.0).unwrap();
        let n = g.len();
        let dp = DensityPhasePair::new(g.clone(), [vec![0.5; n], vec![0.5; n]], [vec![0.0; n], vec![0.0; n]]).unwrap();
        let psi = to_wavefunction(&dp, 1.0).unwrap();
        for z in psi.data() {
            assert_abs_diff_eq!(z.re, 0.5f64.sqrt(), epsilon = 1e-15);
            assert_abs_diff_eq!(z.im, 0.0);
        }
        let dp1 = DensityPhasePair::new(g.clone(), [vec![1.0; n], vec![0.0; n]], [vec![0.0; n], vec![0.0; n]]).unwrap();
        let psi1 = to_wavefunction(&dp1, 1.0).unwrap();
        assert!(psi1.up().iter().all(|z| *z == ONE));
        assert!(psi1.down().iter().all(|z| *z == ZERO));

        let hbar = 0.7;
        let i_field = SpinorField::from_fn(g.clone(), |_| [I, ZERO]);
        let back = from_wavefunction(&i_field, hbar);
        assert_abs_diff_eq!(back.xi[0][0], hbar * std::f64::consts::FRAC_PI_2, epsilon = 1e-15);
        assert_eq!(back.xi[1][0], 0.0);
        assert_eq!(back.rho[1][0], 0.0);
    }

    #[test]
    fn negative_density_rejected() {
        let g = Grid::line(2, 1.0).unwrap();
        let dp = DensityPhasePair::new(g, [vec![0.5, -0.1], vec![0.0; 2]], [vec![0.0; 2], vec![0.0; 2]]).unwrap();
        assert!(matches!(to_wavefunction(&dp, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn symplectic_component_is_discrete_delta() {
        let g = Grid::new(&[5, 4], &[1.0, 2.0]).unwrap();
        let p = 7;
        assert_abs_diff_eq!(symplectic_component(&g, 0, p, 1, p), 1.0 / g.cell_volume(), epsilon = 1e-12);
        assert_abs_diff_eq!(symplectic_component(&g, 1, p, 0, p), -1.0 / g.cell_volume(), epsilon = 1e-12);
        assert_eq!(symplectic_component(&g, 0, p, 1, p + 1), 0.0);
        assert_eq!(symplectic_component(&g, 0, p, 2, p), 0.0);
        assert!((metric_component(&g, 0, p, 1, p) - (-I / g.cell_volume())).norm() < 1e-12);

        // the same number from a full contraction of unit-weight deltas
        let mut u: [Vec<C64>; 4] = std::array::from_fn(|_| vec![ZERO; g.len()]);
        let mut v = u.clone();
        u[0][p] = ONE / g.cell_volume();
        v[1][p] = ONE / g.cell_volume();
        let z = contract(&g, &symplectic_block(), &u, &v).unwrap();
        assert_abs_diff_eq!(z.re, 1.0 / g.cell_volume(), epsilon = 1e-9);
    }

    #[test]
    fn disjoint_perturbations_have_zero_form() {
        let g = Grid::line(6, 1.0).unwrap();
        let mut a = SpinorField::zeros(g.clone());
        let mut b = SpinorField::zeros(g.clone());
        a.data_mut()[1] = C64::new(0.3, 1.0);
        b.data_mut()[4] = C64::new(-2.0, 0.5);
        let (va, vb) = (PhaseSpaceTangent::from_perturbation(a), PhaseSpaceTangent::from_perturbation(b));
        assert_eq!(symplectic_form(&va, &vb, 1.0).unwrap(), 0.0);
        assert_eq!(metric(&va, &vb, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn metric_of_real_bump() {
        // δℓ² = 2ħ (∫ bump²)
        let g = Grid::line(64, 8.0).unwrap();
        let hbar = 1.7;
        let bump = SpinorField::from_fn(g.clone(), |x| [C64::new((-x[0] * x[0]).exp(), 0.0), ZERO]);
        let l2: f64 = bump.up().iter().map(|z| z.re * z.re).sum::<f64>() * g.cell_volume();
        let v = PhaseSpaceTangent::from_perturbation(bump);
        assert_abs_diff_eq!(metric(&v, &v, hbar).unwrap(), 2.0 * hbar * l2, epsilon = 1e-12);
    }

    #[test]
    fn poisson_bracket_examples() {
        let g = Grid::new(&[4, 3], &[2.0, 1.0]).unwrap();
        let p = 5;
        let delta = 1.0 / g.cell_volume();
        let f = FunctionalGradient::density_at(&g, 0, p);
        let h = FunctionalGradient::phase_at(&g, 0, p);
        assert_abs_diff_eq!(poisson_bracket(&g, &f, &h).unwrap(), delta, epsilon = 1e-12);
        assert_abs_diff_eq!(poisson_bracket(&g, &h, &f).unwrap(), -delta, epsilon = 1e-12);
        // different spin labels commute
        let h1 = FunctionalGradient::phase_at(&g, 1, p);
        assert_eq!(poisson_bracket(&g, &f, &h1).unwrap(), 0.0);
        // marginal density and mean phase are conjugate
        let rx = FunctionalGradient::marginal_density_at(&g, p);
        let xx = FunctionalGradient::mean_phase_at(&g, p);
        assert_abs_diff_eq!(poisson_bracket(&g, &rx, &xx).unwrap(), delta, epsilon = 1e-12);
        assert_eq!(poisson_bracket(&g, &rx, &rx).unwrap(), 0.0);

        let missing = FunctionalGradient { d_rho: None, ..FunctionalGradient::zero(&g) };
        assert!(matches!(poisson_bracket(&g, &missing, &f), Err(Error::Structural(_))));
    }

    #[test]
    fn orthogonal_constant_spinors() {
        let g = Grid::line(8, 2.0).unwrap();
        let a = SpinorField::from_fn(g.clone(), |_| [ONE, ZERO]);
        let b = SpinorField::from_fn(g.clone(), |_| [ZERO, ONE]);
        assert_eq!(inner_product(&a, &b).unwrap(), ZERO);
        assert_abs_diff_eq!(inner_product(&a, &a).unwrap().re, 2.0, epsilon = 1e-14);
        let other = SpinorField::zeros(Grid::line(9, 2.0).unwrap());
        assert!(inner_product(&a, &other).is_err());
    }
}
