//! The leak constant `Λ̄` and the small-sheath-conductivity eigenproblem.
//!
//! With sheath conductivity `δ²`, the smallest nonzero generalized eigenvalue
//! `λ_δ` of (stiffness, node jump mass) behaves like `Λ̄ δ`. Each corner of
//! the node contributes a boundary layer `ρ^{α δ}` whose depth in
//! log-radius grows like `1/δ`; meshes for these solves need corner cores of
//! that depth (see [`core_depth`]).

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::fem::{self, Conductivity, DofMap, FemError, JumpSpace, SpdSolver};
use crate::geometry::{CellGeometry, Corner, GeometryError};
use crate::meshing::{AxiMesh, Region};
use crate::roots::{brent, RootError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NodeError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("root bracket lost on ({0}, {1})")]
    NoBracket(f64, f64),
    #[error("delta {0} too large for the corner wedges")]
    DeltaTooLarge(f64),
    #[error("mesh does not resolve the corner layer")]
    MeshTooCoarse,
    #[error("inverse iteration stagnated after {0} steps")]
    EigenSolverStagnation(usize),
    #[error("negative Rayleigh quotient {0:e}")]
    SpuriousNegativeEigenvalue(f64),
    #[error(transparent)]
    Fem(#[from] FemError),
}

fn corner_term(phi: f64, sigma_i: f64, sigma_e: f64) -> f64 {
    (phi / (sigma_e * (PI - phi)) + phi / (sigma_i * PI)).powf(-0.5)
}

/// `Λ̄ = (1/(b−a)) Σ_{A,B} (φ/(σ_e(π−φ)) + φ/(σ_i π))^{−1/2}`.
pub fn lambda_bar_closed_form(g: &CellGeometry) -> Result<f64, NodeError> {
    for phi in [g.phi_a, g.phi_b] {
        if !(phi > 0.0 && phi < PI) {
            return Err(GeometryError::AngleOutOfRange.into());
        }
    }
    if !(g.b > g.a) {
        return Err(GeometryError::DegenerateNode.into());
    }
    let s = corner_term(g.phi_a, g.sigma_i, g.sigma_e) + corner_term(g.phi_b, g.sigma_i, g.sigma_e);
    Ok(s / (g.b - g.a))
}

/// Small-δ limit of the corner exponent.
pub fn alpha0(phi: f64, sigma_i: f64, sigma_e: f64) -> f64 {
    (1.0 / (sigma_i * PI) + 1.0 / (sigma_e * (PI - phi))).sqrt() / phi.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaSolution {
    pub delta: f64,
    pub alpha: f64,
    pub v: f64,
    pub phi: f64,
    pub corner: Corner,
}

impl AlphaSolution {
    /// Exponent `s = α δ` of the corner profile.
    pub fn s(&self) -> f64 {
        self.alpha * self.delta
    }
}

fn v_of(alpha: f64, delta: f64, phi: f64, sigma_i: f64) -> f64 {
    1.0 - alpha * sigma_i / delta * (alpha * delta * PI).tan() * phi
}

/// Flux balance at the outer sheath ray; vanishes at `α_δ`.
pub fn alpha_residual(alpha: f64, delta: f64, phi: f64, sigma_i: f64, sigma_e: f64) -> f64 {
    let s = alpha * delta;
    sigma_i * (s * PI).tan() + sigma_e * (s * (PI - phi)).tan() * v_of(alpha, delta, phi, sigma_i)
}

/// Root of the corner transcendental equation on `(0, 1/(2δ))`.
pub fn solve_alpha(delta: f64, phi: f64, sigma_i: f64, sigma_e: f64) -> Result<AlphaSolution, NodeError> {
    if !(phi > 0.0 && phi < PI) {
        return Err(GeometryError::AngleOutOfRange.into());
    }
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(NodeError::DeltaTooLarge(delta));
    }
    let f = |a: f64| alpha_residual(a, delta, phi, sigma_i, sigma_e);
    let hi_end = 0.5 / delta;
    // f > 0 near 0; walk down from the pole at 1/(2δ) until f < 0
    let lo = 1e-6 * hi_end;
    let mut hi = hi_end * (1.0 - 1e-9);
    let mut k = 0;
    while f(hi) >= 0.0 || !f(hi).is_finite() {
        hi = lo + 0.5 * (hi - lo);
        k += 1;
        if k > 200 {
            return Err(NodeError::NoBracket(lo, hi_end));
        }
    }
    let alpha = brent(f, lo, hi, 1e-15 * hi_end).map_err(|e| match e {
        RootError::NoBracket(a, b) => NodeError::NoBracket(a, b),
        RootError::NoConvergence(_) => NodeError::NoBracket(lo, hi),
    })?;
    Ok(AlphaSolution { delta, alpha, v: v_of(alpha, delta, phi, sigma_i), phi, corner: Corner::B })
}

fn corner_alpha(g: &CellGeometry, c: Corner, delta: f64) -> Result<AlphaSolution, NodeError> {
    let mut a = solve_alpha(delta, g.contact_angle(c), g.sigma_i, g.sigma_e)?;
    a.corner = c;
    Ok(a)
}

/// Log-radius depth of the corner cores needed at sheath parameter `δ`:
/// five decay lengths of the slowest corner layer, never less than 4.
pub fn core_depth(g: &CellGeometry, delta: f64) -> f64 {
    let a = alpha0(g.phi_a, g.sigma_i, g.sigma_e).min(alpha0(g.phi_b, g.sigma_i, g.sigma_e));
    (5.0 / (a * delta)).max(4.0)
}

/// Largest `δ` for which the `δ`-disks around the corners are exact wedges.
pub fn delta_max(g: &CellGeometry) -> f64 {
    let ray = g.straight_ray_length(Corner::A).min(g.straight_ray_length(Corner::B));
    ray.min(0.5 * (g.b - g.a)).min(g.r0).min(g.r_outer - g.r0)
}

/// Three-sector corner profile, normalized so that its crack jump tends to 1.
#[derive(Debug, Clone, Copy)]
pub struct CornerTemplate {
    pub alpha: AlphaSolution,
    pub sigma_i: f64,
    pub sigma_e: f64,
}

impl CornerTemplate {
    /// Value at log-radius `log_rho` and corner-local angle `psi`
    /// (`(−π, 0]` inside the axon, `(0, φ]` sheath, `(φ, π)` outside).
    pub fn value(&self, log_rho: f64, psi: f64) -> f64 {
        let s = self.alpha.s();
        let v = self.alpha.v;
        let phi = self.alpha.phi;
        let rs = (s * log_rho).exp();
        let raw = if psi <= 0.0 {
            rs * (s * (psi + PI)).cos() / (s * PI).cos() - v
        } else if psi <= phi {
            rs * (1.0 - self.alpha.alpha * self.sigma_i / self.alpha.delta * (s * PI).tan() * psi) - v
        } else {
            v * (rs * (s * (psi - PI)).cos() / (s * (phi - PI)).cos() - 1.0)
        };
        raw / (1.0 - v)
    }

    /// Angular derivative times the local conductivity.
    pub fn angular_flux(&self, log_rho: f64, psi: f64) -> f64 {
        let s = self.alpha.s();
        let v = self.alpha.v;
        let phi = self.alpha.phi;
        let rs = (s * log_rho).exp();
        let d = if psi <= 0.0 {
            self.sigma_i * rs * (-s) * (s * (psi + PI)).sin() / (s * PI).cos()
        } else if psi <= phi {
            self.alpha.delta.powi(2) * rs * (-self.alpha.alpha * self.sigma_i / self.alpha.delta * (s * PI).tan())
        } else {
            self.sigma_e * v * rs * (-s) * (s * (psi - PI)).sin() / (s * (phi - PI)).cos()
        };
        d / (1.0 - v)
    }
}

/// Corner-glued test field for the Rayleigh quotient at one `δ`.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub delta: f64,
    pub templates: [CornerTemplate; 2],
}

/// Smooth cutoff: 1 on `[0, 1/2]`, 0 beyond 1.
fn cutoff(t: f64) -> f64 {
    if t <= 0.5 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let x = 2.0 * t - 1.0;
        let e = |u: f64| if u > 0.0 { (-1.0 / u).exp() } else { 0.0 };
        e(1.0 - x) / (e(1.0 - x) + e(x))
    }
}

pub fn corrector_test_function(delta: f64, g: &CellGeometry) -> Result<TestFunction, NodeError> {
    if !g.has_myelin() {
        return Err(GeometryError::DegenerateNode.into());
    }
    if delta > delta_max(g) * (1.0 + 1e-9) {
        return Err(NodeError::DeltaTooLarge(delta));
    }
    let t = |c| -> Result<CornerTemplate, NodeError> {
        Ok(CornerTemplate { alpha: corner_alpha(g, c, delta)?, sigma_i: g.sigma_i, sigma_e: g.sigma_e })
    };
    Ok(TestFunction { delta, templates: [t(Corner::A)?, t(Corner::B)?] })
}

impl TestFunction {
    /// Vertex values on `mesh`, one per vertex (crack copies differ).
    pub fn interpolate(&self, mesh: &AxiMesh, g: &CellGeometry) -> Vec<f64> {
        let touch = mesh.vertex_regions();
        let on_crack = {
            let mut f = vec![0u8; mesh.n_vertices()];
            for &(i, e) in &mesh.jump_pairs {
                f[i] = 1;
                f[e] = 2;
            }
            f
        };
        (0..mesh.n_vertices())
            .map(|v| {
                let p = mesh.vertices[v];
                let base = if touch[v] & 1 != 0 {
                    1.0
                } else if touch[v] & 4 != 0 {
                    0.0
                } else {
                    let d_in = myelin_inner_distance(g, p);
                    let y = if p[0] < g.b { p[0] + 1.0 } else { p[0] };
                    let d_out = g.outline_distance([y, p[1]]);
                    if d_in + d_out > 0.0 {
                        d_out / (d_in + d_out)
                    } else {
                        0.5
                    }
                };
                let mut val = base;
                let mut weight = 0.0;
                let mut glued = 0.0;
                for (k, c) in [Corner::A, Corner::B].into_iter().enumerate() {
                    let (log_rho, psi) = match mesh.frames[v] {
                        Some(f) if f.corner == c => (f.log_rho, f.angle),
                        _ => {
                            let q = mesh.corner(c);
                            let (dy, dr) = (p[0] - q[0], p[1] - q[1]);
                            let rho = dy.hypot(dr);
                            let w = dr.atan2(dy);
                            let mut psi = match c {
                                Corner::B => w,
                                Corner::A => wrap(PI - w),
                            };
                            if dr == 0.0 && psi.abs() > 0.5 * PI {
                                // on the crack: pick the face by copy
                                psi = if on_crack[v] == 1 || touch[v] == 1 { -PI } else { PI };
                            }
                            (rho.ln(), psi)
                        }
                    };
                    let chi = cutoff(log_rho.exp() / self.delta);
                    if chi > 0.0 {
                        weight += chi;
                        glued += chi * self.templates[k].value(log_rho, psi);
                    }
                }
                if weight > 0.0 {
                    val = (1.0 - weight) * base + glued;
                }
                val
            })
            .collect()
    }
}

fn wrap(x: f64) -> f64 {
    if x > PI {
        x - 2.0 * PI
    } else if x <= -PI {
        x + 2.0 * PI
    } else {
        x
    }
}

/// Distance to the sheath's inner face `{r = r0} \ node` in window coordinates.
fn myelin_inner_distance(g: &CellGeometry, p: [f64; 2]) -> f64 {
    let dr = p[1] - g.r0;
    let y = p[0];
    let inside_node = y > g.a && y < g.b;
    if inside_node {
        let dy = (y - g.a).min(g.b - y);
        dy.hypot(dr)
    } else {
        dr.abs()
    }
}

/// Operators of the δ-problem on a mesh.
#[derive(Debug, Clone)]
pub struct DeltaProblem {
    pub delta: f64,
    pub dofs: DofMap,
    pub stiffness: fem::SparseOperator,
    pub jump: JumpSpace,
    pub jump_mass: fem::SparseOperator,
}

impl DeltaProblem {
    pub fn new(mesh: &AxiMesh, g: &CellGeometry, delta: f64) -> Result<Self, NodeError> {
        let dofs = DofMap::periodic(mesh, None);
        let sigma = Conductivity { sigma_i: g.sigma_i, sigma_e: g.sigma_e, sigma_m: delta * delta };
        let stiffness = fem::assemble_stiffness(mesh, &dofs, &sigma);
        let jump = JumpSpace::new(mesh, &dofs)?;
        let jump_mass = jump.operator(dofs.n);
        Ok(DeltaProblem { delta, dofs, stiffness, jump, jump_mass })
    }

    pub fn rayleigh_quotient(&self, x: &[f64]) -> f64 {
        self.stiffness.quad_form(x) / self.jump_mass.quad_form(x)
    }
}

/// Rayleigh quotient of a vertex field.
pub fn rayleigh_quotient(mesh: &AxiMesh, g: &CellGeometry, delta: f64, vertex_values: &[f64]) -> Result<f64, NodeError> {
    let p = DeltaProblem::new(mesh, g, delta)?;
    Ok(p.rayleigh_quotient(&p.dofs.from_vertices(vertex_values)))
}

/// Upper bound for `λ_δ`: Rayleigh quotient of the glued test field.
pub fn test_function_energy(delta: f64, g: &CellGeometry, mesh: &AxiMesh) -> Result<f64, NodeError> {
    let tf = corrector_test_function(delta, g)?;
    check_resolution(mesh, delta)?;
    rayleigh_quotient(mesh, g, delta, &tf.interpolate(mesh, g))
}

fn check_resolution(mesh: &AxiMesh, delta: f64) -> Result<(), NodeError> {
    let deepest = mesh
        .frames
        .iter()
        .flatten()
        .filter(|f| f.log_rho.is_finite())
        .map(|f| f.log_rho)
        .fold(f64::INFINITY, f64::min);
    if !(deepest <= (0.01 * delta).ln()) {
        return Err(NodeError::MeshTooCoarse);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RayleighResult {
    pub delta: f64,
    pub lambda_delta: f64,
    /// Minimizer, one value per unknown of `dofs`.
    pub theta: Vec<f64>,
    pub dofs: DofMap,
    pub h: f64,
    pub iterations: usize,
    /// `‖Kθ − λBθ‖ / ‖Kθ‖`.
    pub residual: f64,
}

impl RayleighResult {
    pub fn vertex_values(&self) -> Vec<f64> {
        self.dofs.to_vertices(&self.theta)
    }
}

/// Smallest nonzero eigenpair of (stiffness, jump mass) by inverse iteration.
pub fn solve_lambda_delta(mesh: &AxiMesh, g: &CellGeometry, delta: f64) -> Result<RayleighResult, NodeError> {
    let prob = DeltaProblem::new(mesh, g, delta)?;
    let n = prob.dofs.n;
    let solver = SpdSolver::new(&prob.stiffness)?;
    // start from the indicator of the axon
    let mut x = vec![0.0; n];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if mesh.regions[t] == Region::Intra {
            for &v in tri {
                if let Some(d) = prob.dofs.dof[v] {
                    x[d] = 1.0;
                }
            }
        }
    }
    let k = &prob.stiffness.matrix;
    let b = &prob.jump_mass.matrix;
    let mut lambda = f64::NAN;
    let max_iter = 200;
    for it in 1..=max_iter {
        let bx = b.apply(&x);
        let mut y = solver.solve(&bx)?;
        let by = b.quad_form(&y);
        let norm = by.sqrt();
        for v in y.iter_mut() {
            *v /= norm;
        }
        let ky = k.quad_form(&y);
        if ky < 0.0 {
            return Err(NodeError::SpuriousNegativeEigenvalue(ky));
        }
        let new = ky;
        let change = ((new - lambda) / new).abs();
        x = y;
        lambda = new;
        if change < 1e-8 {
            let kx = k.apply(&x);
            let bx = b.apply(&x);
            let r: f64 = kx.iter().zip(&bx).map(|(p, q)| (p - lambda * q).powi(2)).sum::<f64>().sqrt();
            let kn = fem::dot(&kx, &kx).sqrt();
            let residual = r / kn;
            if residual <= 1e-8 {
                normalize_theta(mesh, &prob, &mut x);
                return Ok(RayleighResult { delta, lambda_delta: lambda, theta: x, dofs: prob.dofs, h: mesh.h, iterations: it, residual });
            }
        }
    }
    Err(NodeError::EigenSolverStagnation(max_iter))
}

/// `∮[θ]² = |Γ|`, zero mean outside, nonnegative mean inside.
fn normalize_theta(mesh: &AxiMesh, prob: &DeltaProblem, x: &mut [f64]) {
    let area = prob.jump.area();
    let scale = (area / prob.jump_mass.quad_form(x)).sqrt();
    let we = fem::volume_weights(mesh, &prob.dofs, Some(Region::Extra));
    let c = fem::dot(&we, x) / we.iter().sum::<f64>();
    for v in x.iter_mut() {
        *v = (*v - c) * scale;
    }
    let wi = fem::volume_weights(mesh, &prob.dofs, Some(Region::Intra));
    if fem::dot(&wi, x) < 0.0 {
        for v in x.iter_mut() {
            *v = -*v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaReport {
    pub delta: f64,
    pub theta_linf: f64,
    /// `‖θ − 1‖_{L²(Y_i)}`.
    pub intra_deviation: f64,
    /// `‖θ‖_{L²(Y_e)}`.
    pub extra_norm: f64,
    /// `δ^{-1/2} δ² ∫_{Y_m} |∇θ|²`.
    pub myelin_energy_scaled: f64,
    /// `‖[θ] − 1‖_{L²(Γ)}`.
    pub jump_deviation: f64,
    /// Mean jump over the node.
    pub mean_jump: f64,
}

pub fn verify_theta_properties(mesh: &AxiMesh, result: &RayleighResult) -> Result<ThetaReport, NodeError> {
    let x = &result.theta;
    let dofs = &result.dofs;
    let delta = result.delta;
    let jump = JumpSpace::new(mesh, dofs)?;
    let jumps = jump.jumps(x);
    let dev: Vec<f64> = jumps.iter().map(|j| j - 1.0).collect();
    let ones = vec![1.0; jump.len()];
    let m1 = jump.mass.apply(&ones);
    let area = fem::dot(&m1, &ones);
    Ok(ThetaReport {
        delta,
        theta_linf: x.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        intra_deviation: fem::region_l2_sq(mesh, dofs, x, 1.0, Region::Intra).sqrt(),
        extra_norm: fem::region_l2_sq(mesh, dofs, x, 0.0, Region::Extra).sqrt(),
        myelin_energy_scaled: fem::region_energy(mesh, dofs, x, delta * delta, Region::Myelin) / delta.sqrt(),
        jump_deviation: jump.mass.quad_form(&dev).sqrt(),
        mean_jump: fem::dot(&m1, &jumps) / area,
    })
}

/// Extrapolates `f(h)`, `f(h/2)` assuming error `∝ h^order`.
pub fn richardson(coarse: f64, fine: f64, order: f64) -> f64 {
    let k = 2f64.powf(order);
    (k * fine - coarse) / (k - 1.0)
}

/// Observed convergence order from three levels `h, h/2, h/4`; `None` if
/// the differences do not shrink.
pub fn observed_order(f1: f64, f2: f64, f3: f64) -> Option<f64> {
    let r = (f1 - f2) / (f2 - f3);
    (r.is_finite() && r > 1.0).then(|| r.log2())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_case_closed_form() {
        let g = CellGeometry { a: 0.0, b: 1.0, ..CellGeometry::reference() };
        let v = lambda_bar_closed_form(&g).unwrap();
        assert!((v - 2.0 / 1.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn straight_angle_rejected() {
        let g = CellGeometry { phi_b: PI, ..CellGeometry::reference() };
        assert!(matches!(lambda_bar_closed_form(&g), Err(NodeError::Geometry(GeometryError::AngleOutOfRange))));
    }

    #[test]
    fn alpha_root_satisfies_equation() {
        for &d in &[0.5, 0.1, 0.01, 1e-3] {
            let a = solve_alpha(d, 1.1, 1.3, 0.7).unwrap();
            assert!(a.alpha > 0.0 && a.alpha < 0.5 / d);
            let scale = 1.3 * (a.s() * PI).tan().abs();
            assert!(alpha_residual(a.alpha, d, 1.1, 1.3, 0.7).abs() <= 1e-12 * scale.max(1e-300));
        }
    }

    #[test]
    fn cutoff_is_monotone() {
        let mut last = 1.0;
        for k in 0..=100 {
            let c = cutoff(k as f64 / 80.0);
            assert!(c <= last && (0.0..=1.0).contains(&c));
            last = c;
        }
        assert_eq!(cutoff(0.4), 1.0);
        assert_eq!(cutoff(1.0), 0.0);
    }

    #[test]
    fn template_is_continuous_across_sheath_faces() {
        let g = CellGeometry::reference();
        let tf = corrector_test_function(0.05, &g).unwrap();
        let t = tf.templates[1];
        for lr in [-1.0, -5.0, -30.0] {
            for psi in [0.0, PI / 2.0] {
                let l = t.value(lr, psi);
                let r = t.value(lr, psi + 1e-15);
                assert!((l - r).abs() < 1e-12, "{l} {r}");
                let fl = t.angular_flux(lr, psi);
                let fr = t.angular_flux(lr, psi + 1e-15);
                assert!((fl - fr).abs() <= 1e-10 * fl.abs().max(1e-30), "{fl} {fr}");
            }
        }
    }
}
