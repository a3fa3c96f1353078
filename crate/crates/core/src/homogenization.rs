//! Periodic cell problem on the extracellular region and the effective
//! axial conductivity.
//!
//! The corrector solves `−ΔN = 0` in `Y_e`, `∇N·ν = −ν₁` on the sheath,
//! no flux on the membrane and the outer wall, periodic in `y1`. The load is
//! assembled as `−∫_{Y_e} ∂₁φ dy`, which equals the boundary form after the
//! divergence theorem and is compatible to rounding for every mesh.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::fem::{self, Conductivity, DofMap, FemError, MeanConstraint, SpdSolver};
use crate::geometry::{CellGeometry, CellMeasures};
use crate::meshing::{AxiMesh, Region};

#[derive(Debug, Clone)]
pub struct CorrectorField {
    pub dofs: DofMap,
    /// One value per unknown; zero mean over `Y_e`.
    pub values: Vec<f64>,
    /// `∫_{Y_e} ∂₁N dy`.
    pub gradient_integral: f64,
    /// `|Y_e|` of the mesh.
    pub mesh_volume: f64,
    /// `‖K N − f‖ / ‖f‖` (zero when the load vanishes).
    pub residual: f64,
    pub h: f64,
}

impl CorrectorField {
    /// `∫_{Y_e} (∂₁N + 1) dy`.
    pub fn flux_integral(&self) -> f64 {
        self.gradient_integral + self.mesh_volume
    }

    /// Energy `∫_{Y_e} |∇N|² dy`.
    pub fn energy(&self, mesh: &AxiMesh) -> f64 {
        fem::region_energy(mesh, &self.dofs, &self.values, 1.0, Region::Extra)
    }

    pub fn vertex_values(&self) -> Vec<f64> {
        self.dofs.to_vertices(&self.values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveCoefficients {
    pub a_eff: f64,
    pub flux_integral: f64,
    /// Filled in by the caller from the node-constant module.
    pub lambda_bar: Option<f64>,
    pub measures: CellMeasures,
}

/// `(∫_{Y_e} ∂₁φ_i dy, ∫_{Y_e} φ_i dy)` per unknown; the first is the load.
fn extra_moments(mesh: &AxiMesh, dofs: &DofMap) -> Vec<f64> {
    let mut f = vec![0.0; dofs.n];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if mesh.regions[t] != Region::Extra {
            continue;
        }
        let e = mesh.element(t);
        let g = e.local_gradients();
        let rbar = (e.r[0] + e.r[1] + e.r[2]) / 3.0;
        // ∫ ∂₁φ r dA: constant gradient times ∫ r dA, scale enters once
        let c = 2.0 * PI * rbar * e.local_area() * e.scale();
        for k in 0..3 {
            if let Some(d) = dofs.dof[tri[k]] {
                f[d] += c * g[k][0];
            }
        }
    }
    f
}

/// `∫_{Y_e} ∂₁u dy` for a field given per unknown.
pub fn gradient_integral(mesh: &AxiMesh, dofs: &DofMap, x: &[f64]) -> f64 {
    let m = extra_moments(mesh, dofs);
    fem::dot(&m, x)
}

pub fn solve_corrector(mesh: &AxiMesh, _g: &CellGeometry) -> Result<CorrectorField, FemError> {
    let dofs = DofMap::periodic(mesh, Some(&[Region::Extra]));
    let sigma = Conductivity { sigma_i: 1.0, sigma_e: 1.0, sigma_m: 1.0 };
    let k = fem::assemble_stiffness(mesh, &dofs, &sigma);
    let m = extra_moments(mesh, &dofs);
    let rhs: Vec<f64> = m.iter().map(|v| -v).collect();
    let weights = fem::volume_weights(mesh, &dofs, Some(Region::Extra));
    let mesh_volume: f64 = weights.iter().sum();
    let fnorm = fem::dot(&rhs, &rhs).sqrt();
    let scale: f64 = rhs.iter().map(|v| v.abs()).sum();
    // a bare cell has a zero load up to rounding
    if fnorm <= 1e-13 * mesh_volume {
        return Ok(CorrectorField { values: vec![0.0; dofs.n], dofs, gradient_integral: 0.0, mesh_volume, residual: 0.0, h: mesh.h });
    }
    let solver = SpdSolver::new(&k)?;
    let defect: f64 = rhs.iter().sum();
    if defect.abs() > 1e-10 * scale {
        return Err(FemError::IncompatibleRhs(defect / scale));
    }
    let mut x = solver.solve(&rhs)?;
    MeanConstraint { weights }.apply(&mut x);
    let kx = k.matrix.apply(&x);
    let r: f64 = kx.iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(CorrectorField { gradient_integral: fem::dot(&m, &x), values: x, dofs, mesh_volume, residual: r / fnorm, h: mesh.h })
}

/// `a_eff = (1/(|Γ||Y|)) ((σ_e F)^{-1} + (σ_i |Y_i|)^{-1})^{-1}` with
/// `F = ∫_{Y_e}(∂₁N + 1) dy`.
pub fn compute_a_eff(corrector: &CorrectorField, measures: &CellMeasures, sigma_i: f64, sigma_e: f64) -> EffectiveCoefficients {
    let flux = corrector.flux_integral();
    EffectiveCoefficients { a_eff: a_eff_formula(flux, measures, sigma_i, sigma_e), flux_integral: flux, lambda_bar: None, measures: *measures }
}

pub fn a_eff_formula(flux: f64, m: &CellMeasures, sigma_i: f64, sigma_e: f64) -> f64 {
    let harmonic = 1.0 / (1.0 / (sigma_e * flux) + 1.0 / (sigma_i * m.vol_yi));
    harmonic / (m.area_gamma * m.vol_y)
}

/// Axial conductance per unit length of the fibre, `a_eff · |Y|`; this is
/// the coefficient a cable in physical length units sees.
pub fn cable_conductance(c: &EffectiveCoefficients) -> f64 {
    c.a_eff * c.measures.vol_y
}

/// `a_eff` of the same cell with the sheath replaced by extracellular
/// medium: the corrector vanishes and `F = |Y_e| + |Y_m|`, while the node
/// area `|Γ|` is kept.
pub fn a_eff_without_sheath(m: &CellMeasures, sigma_i: f64, sigma_e: f64) -> f64 {
    let mut bare = *m;
    bare.vol_ye += bare.vol_ym;
    bare.vol_ym = 0.0;
    a_eff_formula(bare.vol_ye, &bare, sigma_i, sigma_e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CellGeometry;

    #[test]
    fn bare_formula_value() {
        let g = CellGeometry::bare(0.5, 1.0, 1.0, 1.0);
        let m = g.measures();
        let a = a_eff_formula(m.vol_ye, &m, 1.0, 1.0);
        assert!((a - 3.0 / (16.0 * PI)).abs() < 1e-14);
    }

    #[test]
    fn formula_is_increasing_in_both_conductivities() {
        let m = CellGeometry::reference().measures();
        let f = 0.8 * m.vol_ye;
        let base = a_eff_formula(f, &m, 1.0, 1.0);
        assert!(a_eff_formula(f, &m, 1.1, 1.0) > base);
        assert!(a_eff_formula(f, &m, 1.0, 1.1) > base);
    }
}
