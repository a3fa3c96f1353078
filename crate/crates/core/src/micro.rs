//! Microscale reference: the full cell-resolved problem on `(0, L)` with
//! `L/ε` periods, solved on the replicated axisymmetric cell mesh.
//!
//! In cell units `y = x/ε` the weak form divided by `ε` reads
//! `ε² c_m B ∂t v + K u + ε² Jᵀ M (I(v, g)) = 0`, where `K` is the stiffness
//! with sheath conductivity `ε⁴`, `J` takes jumps across the nodes and `B`
//! is the node jump mass. All matrices below are stored in physical scaling
//! (one more factor `ε`), so that for example the capacitive form of a unit
//! jump is `ε c_m |Γ_ε|`.
//!
//! Time stepping is implicit Euler with the ionic current linear in `v` and
//! the gating frozen over the step (exponential gating update first). The
//! ionic term uses the lumped node mass so its matrix stays symmetric.

use alloc::vec;
use alloc::vec::Vec;

use crate::cable::CableState;
use crate::expr::Expr;
use crate::fem::{self, Conductivity, CsrMatrix, DofMap, FemError, JumpSpace, SpdSolver};
use crate::geometry::CellGeometry;
use crate::membrane::{MembraneError, MembraneModel};
use crate::meshing::{build_cell_mesh_with, AxiMesh, MeshError, MeshParams};
use crate::node_constant;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MicroError {
    #[error("invalid microscale configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Membrane(#[from] MembraneError),
    #[error("energy balance violated at t = {t} (relative residual {residual:e})")]
    EnergyImbalance { t: f64, residual: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroConfig {
    pub length: f64,
    pub epsilon: f64,
    pub geometry: CellGeometry,
    pub membrane: MembraneModel,
    pub t_final: f64,
    pub dt: f64,
    /// Mesh size of the cell mesh, in cell units.
    pub h: f64,
    pub grading: f64,
    /// Angular step of the corner cores; derived from `h` when `None`.
    pub angular_step: Option<f64>,
    /// Initial jump as a function of physical `x`.
    pub initial_v: Option<Expr>,
    pub snapshot_every: usize,
}

impl MicroConfig {
    pub fn n_cells(&self) -> usize {
        (self.length / self.epsilon).round() as usize
    }

    /// Sheath parameter of the matching cell problem, `δ = ε²`.
    pub fn delta(&self) -> f64 {
        self.epsilon * self.epsilon
    }

    pub fn validate(&self) -> Result<(), MicroError> {
        if !(self.length > 0.0 && self.epsilon > 0.0) {
            return Err(MicroError::InvalidConfig("length and epsilon must be positive"));
        }
        let n = self.length / self.epsilon;
        if (n - n.round()).abs() > 1e-9 * n {
            return Err(MicroError::InvalidConfig("L/epsilon must be an integer"));
        }
        if n.round() < 4.0 {
            return Err(MicroError::InvalidConfig("epsilon must be at most L/4"));
        }
        if !(self.dt > 0.0 && self.t_final >= 0.0) {
            return Err(MicroError::InvalidConfig("dt must be positive"));
        }
        self.membrane.validate()?;
        Ok(())
    }
}

/// Discrete operators of one microscale configuration.
#[derive(Debug, Clone)]
pub struct MicroOperators {
    pub epsilon: f64,
    pub mesh: AxiMesh,
    pub dofs: DofMap,
    /// Unknowns held at zero (both axial ends).
    pub fixed: Vec<bool>,
    /// `ε K_cell`.
    pub stiffness: CsrMatrix,
    pub jump: JumpSpace,
    /// `ε³ c_m M` on the jump points.
    pub capacitance: CsrMatrix,
    /// Row sums of `ε³ M`, the lumped node weights.
    pub lumped: Vec<f64>,
    /// Physical position of each jump point.
    pub x: Vec<f64>,
    /// Cell index of each jump point.
    pub cell: Vec<usize>,
}

pub fn assemble_micro(cfg: &MicroConfig) -> Result<MicroOperators, MicroError> {
    cfg.validate()?;
    let eps = cfg.epsilon;
    let g = &cfg.geometry;
    let mut params = MeshParams::new(cfg.h, cfg.grading).with_core_depth(node_constant::core_depth(g, cfg.delta()));
    params.angular_step = cfg.angular_step;
    let cell = build_cell_mesh_with(g, &params)?;
    let n = cfg.n_cells();
    let (mesh, left, right) = cell.replicate(n);
    let dofs = DofMap::periodic(&mesh, None);
    let mut fixed = vec![false; dofs.n];
    for &v in left.iter().chain(&right) {
        if let Some(d) = dofs.dof[v] {
            fixed[d] = true;
        }
    }
    let sigma = Conductivity { sigma_i: g.sigma_i, sigma_e: g.sigma_e, sigma_m: eps.powi(4) };
    let k = fem::assemble_stiffness(&mesh, &dofs, &sigma).matrix;
    let stiffness = scale(&k, eps);
    let jump = JumpSpace::new(&mesh, &dofs)?;
    let m3 = eps.powi(3);
    let capacitance = scale(&jump.mass, m3 * cfg.membrane.c_m);
    let ones = vec![1.0; jump.len()];
    let lumped: Vec<f64> = jump.mass.apply(&ones).iter().map(|w| w * m3).collect();
    let s = mesh.window;
    let x: Vec<f64> = jump.y1.iter().map(|y| eps * (y - s)).collect();
    let cell_of: Vec<usize> = jump.y1.iter().map(|y| ((y - s).floor() as usize).min(n - 1)).collect();
    Ok(MicroOperators { epsilon: eps, mesh, dofs, fixed, stiffness, jump, capacitance, lumped, x, cell: cell_of })
}

fn scale(m: &CsrMatrix, c: f64) -> CsrMatrix {
    let mut out = m.clone();
    for v in out.val.iter_mut() {
        *v *= c;
    }
    out
}

/// Replaces fixed rows and columns by the identity.
fn pin_rows(m: &CsrMatrix, fixed: &[bool]) -> CsrMatrix {
    let mut out = m.clone();
    for i in 0..m.n {
        for k in m.row_ptr[i]..m.row_ptr[i + 1] {
            let j = m.col[k];
            if fixed[i] || fixed[j] {
                out.val[k] = if i == j { 1.0 } else { 0.0 };
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroState {
    pub t: f64,
    /// Potential per unknown (zero on the ends).
    pub u: Vec<f64>,
    /// Jump per node point.
    pub v_jump: Vec<f64>,
    /// Gating, `m` per node point.
    pub g: Vec<f64>,
    /// Relative residual of the discrete energy balance of the last step.
    pub energy_residual: f64,
}

impl MicroState {
    pub fn initial(ops: &MicroOperators, cfg: &MicroConfig) -> Result<Self, MicroError> {
        let v_jump: Vec<f64> = ops.x.iter().map(|&x| cfg.initial_v.as_ref().map_or(0.0, |e| e.eval(x))).collect();
        let mut g = Vec::with_capacity(v_jump.len() * cfg.membrane.m());
        for &x in &ops.x {
            g.extend(cfg.membrane.initial_gating(x)?);
        }
        Ok(MicroState { t: 0.0, u: vec![0.0; ops.dofs.n], v_jump, g, energy_residual: 0.0 })
    }

    /// Node-averaged jump per cell.
    pub fn node_averages(&self, ops: &MicroOperators, n_cells: usize) -> Vec<f64> {
        let mut num = vec![0.0; n_cells];
        let mut den = vec![0.0; n_cells];
        for (p, &w) in ops.lumped.iter().enumerate() {
            num[ops.cell[p]] += w * self.v_jump[p];
            den[ops.cell[p]] += w;
        }
        num.iter().zip(&den).map(|(a, b)| a / b).collect()
    }
}

/// Time integrator holding the factorized system.
pub struct MicroStepper<'a> {
    ops: &'a MicroOperators,
    cfg: &'a MicroConfig,
    base: SpdSolver,
    /// Conductance per jump point used in the factorization.
    base_g: Vec<f64>,
}

impl<'a> MicroStepper<'a> {
    pub fn new(ops: &'a MicroOperators, cfg: &'a MicroConfig, state: &MicroState) -> Result<Self, MicroError> {
        let (gc, _) = conductances(cfg, ops, &state.g);
        let a = system_matrix(ops, cfg, &gc);
        let base = SpdSolver::with_matrix(a, false)?;
        Ok(MicroStepper { ops, cfg, base, base_g: gc })
    }

    pub fn step(&self, state: &MicroState) -> Result<MicroState, MicroError> {
        let ops = self.ops;
        let cfg = self.cfg;
        let dt = cfg.dt;
        let m = cfg.membrane.m();
        let mut g = state.g.clone();
        for (p, &v) in state.v_jump.iter().enumerate() {
            cfg.membrane.exp_step(&mut g[p * m..(p + 1) * m], v, dt);
        }
        let (gc, src) = conductances(cfg, ops, &g);
        // right-hand side: Jᵀ (C vⁿ/dt + w S)
        let cv = ops.capacitance.apply(&state.v_jump);
        let y: Vec<f64> = (0..cv.len()).map(|p| cv[p] / dt + ops.lumped[p] * src[p]).collect();
        let mut rhs = vec![0.0; ops.dofs.n];
        ops.jump.add_transpose(&y, &mut rhs);
        for (r, &f) in rhs.iter_mut().zip(&ops.fixed) {
            if f {
                *r = 0.0;
            }
        }
        let u = if gc == self.base_g {
            self.base.solve_from(&rhs, Some(&state.u))?
        } else {
            let a = system_matrix(ops, cfg, &gc);
            SpdSolver::with_preconditioner(a, &self.base).solve_from(&rhs, Some(&state.u))?
        };
        let v_jump = ops.jump.jumps(&u);
        // c_m vᵀC(v − vⁿ)/dt + uᵀKu + Σ w G v² − Σ w S v = 0
        let dv: Vec<f64> = v_jump.iter().zip(&state.v_jump).map(|(a, b)| a - b).collect();
        let cap = fem::dot(&v_jump, &ops.capacitance.apply(&dv)) / dt;
        let bulk = ops.stiffness.quad_form(&u);
        let mut ion = 0.0;
        let mut ion_abs = 0.0;
        for p in 0..v_jump.len() {
            let t = ops.lumped[p] * (gc[p] * v_jump[p] - src[p]) * v_jump[p];
            ion += t;
            ion_abs += t.abs();
        }
        let total = cap.abs() + bulk.abs() + ion_abs;
        let residual = if total > 0.0 { (cap + bulk + ion).abs() / total } else { 0.0 };
        let t = state.t + dt;
        if !(residual <= 1e-8) {
            return Err(MicroError::EnergyImbalance { t, residual });
        }
        Ok(MicroState { t, u, v_jump, g, energy_residual: residual })
    }
}

fn conductances(cfg: &MicroConfig, ops: &MicroOperators, g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = cfg.membrane.m();
    (0..ops.jump.len()).map(|p| cfg.membrane.split(&g[p * m..(p + 1) * m])).unzip()
}

fn system_matrix(ops: &MicroOperators, cfg: &MicroConfig, gc: &[f64]) -> CsrMatrix {
    let dt = cfg.dt;
    let mut trip = Vec::new();
    let c = &ops.capacitance;
    for p in 0..c.n {
        for k in c.row_ptr[p]..c.row_ptr[p + 1] {
            let q = c.col[k];
            let mut v = c.val[k] / dt;
            if p == q {
                v += ops.lumped[p] * gc[p];
            }
            let (pi, pe) = ops.jump.pairs[p];
            let (qi, qe) = ops.jump.pairs[q];
            trip.push((pi, qi, v));
            trip.push((pi, qe, -v));
            trip.push((pe, qi, -v));
            trip.push((pe, qe, v));
        }
    }
    let jm = CsrMatrix::from_triplets(ops.dofs.n, trip);
    pin_rows(&ops.stiffness.add_scaled(1.0, &jm), &ops.fixed)
}

/// Runs to `t_final`, returning snapshots every `snapshot_every` steps.
pub fn run_micro(cfg: &MicroConfig) -> Result<(MicroOperators, Vec<MicroState>), MicroError> {
    let ops = assemble_micro(cfg)?;
    let mut s = MicroState::initial(&ops, cfg)?;
    let stepper = MicroStepper::new(&ops, cfg, &s)?;
    let steps = (cfg.t_final / cfg.dt).round() as usize;
    let every = cfg.snapshot_every.max(1);
    let mut out = vec![s.clone()];
    for k in 1..=steps {
        s = stepper.step(&s)?;
        s.t = k as f64 * cfg.dt;
        if k % every == 0 || k == steps {
            out.push(s.clone());
        }
    }
    Ok((ops, out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub epsilon: f64,
    /// `sup_t max_nodes |node average of [u_ε] − v₀(node centre)|`.
    pub sup_error: f64,
    /// Time at which the sup is attained.
    pub t_at_sup: f64,
    pub max_energy_residual: f64,
}

/// Compares node-averaged jumps with the cable solution at the node centres.
/// Snapshots are matched by index and must share their times.
pub fn compare_to_homogenized(cfg: &MicroConfig, ops: &MicroOperators, micro: &[MicroState], cable: &[CableState], cable_dx: f64) -> ComparisonReport {
    let n = cfg.n_cells();
    let g = &cfg.geometry;
    let centre = |k: usize| cfg.epsilon * (k as f64 + 0.5 * (g.a + g.b) - ops.mesh.window);
    let mut sup = 0.0f64;
    let mut t_at = 0.0;
    let mut res = 0.0f64;
    for (ms, cs) in micro.iter().zip(cable) {
        debug_assert!((ms.t - cs.t).abs() <= 1e-9 * ms.t.max(1.0));
        let avg = ms.node_averages(ops, n);
        for (k, a) in avg.iter().enumerate() {
            let x = centre(k);
            let i = ((x / cable_dx).floor() as usize).min(cs.v.len() - 2);
            let s = x / cable_dx - i as f64;
            let v0 = (1.0 - s) * cs.v[i] + s * cs.v[i + 1];
            let e = (a - v0).abs();
            if e > sup {
                sup = e;
                t_at = ms.t;
            }
        }
        res = res.max(ms.energy_residual);
    }
    ComparisonReport { epsilon: cfg.epsilon, sup_error: sup, t_at_sup: t_at, max_energy_residual: res }
}
