//! Axisymmetric P1 operators and sparse symmetric solves.
//!
//! All volume forms carry the `2 pi r` weight, so quadratic forms equal the
//! three-dimensional integrals over the cell. Element integrals are exact:
//! the stiffness integrand is linear in `r`, and the mass-type integrands are
//! cubic and integrated with the closed-form barycentric moments.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::meshing::{AxiMesh, EdgeTag, Region};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FemError {
    #[error("mesh has no jump surface")]
    NoJumpSurface,
    #[error("right-hand side is not orthogonal to the constants (defect {0:e})")]
    IncompatibleRhs(f64),
    #[error("conjugate gradients did not reach the tolerance (residual {0:e})")]
    SolverDivergence(f64),
    #[error("matrix is not positive definite at pivot {0}")]
    NotPositiveDefinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Stiffness,
    JumpMass,
    VolumeMass,
}

/// Compressed sparse rows; both triangles of a symmetric matrix are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries. Exact zeros produced by assembly are kept so
    /// the sparsity pattern is a function of the mesh only.
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col = Vec::with_capacity(t.len());
        let mut val: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *val.last_mut().unwrap() += v;
            } else {
                col.push(j);
                val.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { n, row_ptr, col, val }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix { n, row_ptr: (0..=n).collect(), col: (0..n).collect(), val: vec![1.0; n] }
    }

    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            y[i] = s;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul(x, &mut y);
        y
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            let mut r = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                r += self.val[k] * x[self.col[k]];
            }
            s += x[i] * r;
        }
        s
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.col[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.val[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Exact (bitwise) symmetry.
    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).all(|k| self.get(self.col[k], i) == self.val[k]))
    }

    /// `self + c * other`, both with the same dimension.
    pub fn add_scaled(&self, c: f64, other: &CsrMatrix) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.val.len() + other.val.len());
        for (m, s) in [(self, 1.0), (other, c)] {
            for i in 0..m.n {
                for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                    t.push((i, m.col[k], s * m.val[k]));
                }
            }
        }
        CsrMatrix::from_triplets(self.n, t)
    }
}

#[derive(Debug, Clone)]
pub struct SparseOperator {
    pub kind: OperatorKind,
    pub matrix: CsrMatrix,
    /// Constants span the kernel (pure Neumann/periodic stiffness).
    pub constant_kernel: bool,
}

impl SparseOperator {
    pub fn n(&self) -> usize {
        self.matrix.n
    }
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.matrix.quad_form(x)
    }
}

/// Piecewise conductivity; `sigma_m` is the sheath value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conductivity {
    pub sigma_i: f64,
    pub sigma_e: f64,
    pub sigma_m: f64,
}

impl Conductivity {
    pub fn of(&self, r: Region) -> f64 {
        match r {
            Region::Intra => self.sigma_i,
            Region::Extra => self.sigma_e,
            Region::Myelin => self.sigma_m,
        }
    }
}

/// Vertex-to-unknown numbering with periodic identification.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub dof: Vec<Option<usize>>,
    pub n: usize,
    /// Triangles that take part in assembly.
    pub active: Vec<bool>,
}

impl DofMap {
    /// Unknowns on the vertices of triangles in `regions` (all regions when
    /// `None`); right-seam vertices share the unknown of their left partner.
    pub fn periodic(mesh: &AxiMesh, regions: Option<&[Region]>) -> Self {
        let active: Vec<bool> = mesh.regions.iter().map(|r| regions.is_none_or(|s| s.contains(r))).collect();
        let mut used = vec![false; mesh.n_vertices()];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            if active[t] {
                for &v in tri {
                    used[v] = true;
                }
            }
        }
        let mut partner = vec![usize::MAX; mesh.n_vertices()];
        for &(l, r) in &mesh.periodic_pairs {
            partner[r] = l;
        }
        let mut dof = vec![None; mesh.n_vertices()];
        let mut n = 0;
        for v in 0..mesh.n_vertices() {
            if used[v] && partner[v] == usize::MAX {
                dof[v] = Some(n);
                n += 1;
            }
        }
        for v in 0..mesh.n_vertices() {
            if used[v] && partner[v] != usize::MAX {
                dof[v] = dof[partner[v]];
            }
        }
        DofMap { dof, n, active }
    }

    /// Nodal values expanded to mesh vertices (zero where inactive).
    pub fn to_vertices(&self, x: &[f64]) -> Vec<f64> {
        self.dof.iter().map(|d| d.map_or(0.0, |i| x[i])).collect()
    }

    /// Interpolates a vertex function into unknowns; for identified vertices
    /// the left-seam value wins.
    pub fn from_vertices(&self, f: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        let mut set = vec![false; self.n];
        for (v, d) in self.dof.iter().enumerate() {
            if let Some(i) = *d {
                if !set[i] {
                    x[i] = f[v];
                    set[i] = true;
                }
            }
        }
        x
    }
}

fn local_triangle(mesh: &AxiMesh, dofs: &DofMap, t: usize) -> Option<[usize; 3]> {
    if !dofs.active[t] {
        return None;
    }
    let tri = mesh.triangles[t];
    Some([dofs.dof[tri[0]]?, dofs.dof[tri[1]]?, dofs.dof[tri[2]]?])
}

/// `2 pi ∫ sigma |grad theta|^2 r dr dy1` as a matrix.
pub fn assemble_stiffness(mesh: &AxiMesh, dofs: &DofMap, sigma: &Conductivity) -> SparseOperator {
    let mut trip = Vec::with_capacity(9 * mesh.triangles.len());
    for t in 0..mesh.triangles.len() {
        let Some(d) = local_triangle(mesh, dofs, t) else { continue };
        let e = mesh.element(t);
        let area = e.local_area();
        let g = e.local_gradients();
        let rbar = (e.r[0] + e.r[1] + e.r[2]) / 3.0;
        let c = 2.0 * PI * sigma.of(mesh.regions[t]) * rbar * area;
        for i in 0..3 {
            for j in 0..3 {
                trip.push((d[i], d[j], c * (g[i][0] * g[j][0] + g[i][1] * g[j][1])));
            }
        }
    }
    SparseOperator { kind: OperatorKind::Stiffness, matrix: CsrMatrix::from_triplets(dofs.n, trip), constant_kernel: true }
}

/// `∫_T phi_i phi_j phi_k / area` for barycentric hats.
fn triple(i: usize, j: usize, k: usize) -> f64 {
    let mut m = [0u32; 3];
    m[i] += 1;
    m[j] += 1;
    m[k] += 1;
    let fact = |n: u32| (1..=n).product::<u32>() as f64;
    2.0 * fact(m[0]) * fact(m[1]) * fact(m[2]) / fact(5)
}

/// `2 pi ∫ phi_i phi_j r dA` over the triangles of `regions`.
pub fn assemble_volume_mass(mesh: &AxiMesh, dofs: &DofMap) -> SparseOperator {
    let mut trip = Vec::with_capacity(9 * mesh.triangles.len());
    for t in 0..mesh.triangles.len() {
        let Some(d) = local_triangle(mesh, dofs, t) else { continue };
        let e = mesh.element(t);
        let area = e.local_area() * (2.0 * e.log_scale).exp();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| e.r[k] * triple(i, j, k)).sum();
                trip.push((d[i], d[j], 2.0 * PI * area * v));
            }
        }
    }
    SparseOperator { kind: OperatorKind::VolumeMass, matrix: CsrMatrix::from_triplets(dofs.n, trip), constant_kernel: false }
}

/// `2 pi ∫ r phi_i dA` per unknown, restricted to one region.
pub fn volume_weights(mesh: &AxiMesh, dofs: &DofMap, region: Option<Region>) -> Vec<f64> {
    let mut w = vec![0.0; dofs.n];
    for t in 0..mesh.triangles.len() {
        if region.is_some_and(|r| r != mesh.regions[t]) {
            continue;
        }
        let Some(d) = local_triangle(mesh, dofs, t) else { continue };
        let e = mesh.element(t);
        let area = e.local_area() * (2.0 * e.log_scale).exp();
        let rs = e.r[0] + e.r[1] + e.r[2];
        for i in 0..3 {
            w[d[i]] += 2.0 * PI * area * (rs + e.r[i]) / 12.0;
        }
    }
    w
}

/// `2 pi ∫ (u - c)^2 r dA` over one region.
pub fn region_l2_sq(mesh: &AxiMesh, dofs: &DofMap, x: &[f64], c: f64, region: Region) -> f64 {
    let mut s = 0.0;
    for t in 0..mesh.triangles.len() {
        if mesh.regions[t] != region {
            continue;
        }
        let Some(d) = local_triangle(mesh, dofs, t) else { continue };
        let e = mesh.element(t);
        let area = e.local_area() * (2.0 * e.log_scale).exp();
        let u = [x[d[0]] - c, x[d[1]] - c, x[d[2]] - c];
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    acc += u[i] * u[j] * e.r[k] * triple(i, j, k);
                }
            }
        }
        s += 2.0 * PI * area * acc;
    }
    s
}

/// `2 pi ∫ sigma |grad u|^2 r dA` over one region.
pub fn region_energy(mesh: &AxiMesh, dofs: &DofMap, x: &[f64], sigma: f64, region: Region) -> f64 {
    let mut s = 0.0;
    for t in 0..mesh.triangles.len() {
        if mesh.regions[t] != region {
            continue;
        }
        let Some(d) = local_triangle(mesh, dofs, t) else { continue };
        let e = mesh.element(t);
        let g = e.local_gradients();
        let mut gr = [0.0; 2];
        for i in 0..3 {
            gr[0] += x[d[i]] * g[i][0];
            gr[1] += x[d[i]] * g[i][1];
        }
        let rbar = (e.r[0] + e.r[1] + e.r[2]) / 3.0;
        s += 2.0 * PI * sigma * rbar * e.local_area() * (gr[0] * gr[0] + gr[1] * gr[1]);
    }
    s
}

/// The node as a one-dimensional P1 space of jumps.
#[derive(Debug, Clone)]
pub struct JumpSpace {
    /// `(intracellular unknown, extracellular unknown)` per node point; the
    /// corner apexes appear with equal unknowns and therefore zero jump.
    pub pairs: Vec<(usize, usize)>,
    /// Axial position of each node point (absolute window coordinate).
    pub y1: Vec<f64>,
    /// `2 pi r0 ∫ p_i p_j dy1` over the node.
    pub mass: CsrMatrix,
}

impl JumpSpace {
    pub fn new(mesh: &AxiMesh, dofs: &DofMap) -> Result<Self, FemError> {
        if mesh.jump_pairs.is_empty() {
            return Err(FemError::NoJumpSurface);
        }
        let nv = mesh.n_vertices();
        let mut idx = vec![usize::MAX; nv];
        let mut pairs = Vec::new();
        let mut y1 = Vec::new();
        let mut vertex_of = Vec::new();
        for &(i, e) in &mesh.jump_pairs {
            let (Some(di), Some(de)) = (dofs.dof[i], dofs.dof[e]) else { continue };
            idx[i] = pairs.len();
            idx[e] = pairs.len();
            pairs.push((di, de));
            y1.push(mesh.vertices[i][0]);
            vertex_of.push(i);
        }
        let mut trip = Vec::new();
        for &([u, v], tag) in &mesh.boundary {
            if tag != EdgeTag::NodeInner {
                continue;
            }
            let mut pu = idx[u];
            let mut pv = idx[v];
            for (p, w) in [(&mut pu, u), (&mut pv, v)] {
                if *p == usize::MAX {
                    // a corner apex: shared vertex, zero jump
                    let Some(d) = dofs.dof[w] else { continue };
                    *p = pairs.len();
                    idx[w] = pairs.len();
                    pairs.push((d, d));
                    y1.push(mesh.vertices[w][0]);
                    vertex_of.push(w);
                }
            }
            if pu == usize::MAX || pv == usize::MAX {
                continue;
            }
            let len = edge_length(mesh, u, v);
            let c = 2.0 * PI * mesh.r0 * len / 6.0;
            trip.push((pu, pu, 2.0 * c));
            trip.push((pv, pv, 2.0 * c));
            trip.push((pu, pv, c));
            trip.push((pv, pu, c));
        }
        let mass = CsrMatrix::from_triplets(pairs.len(), trip);
        Ok(JumpSpace { pairs, y1, mass })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn jumps(&self, x: &[f64]) -> Vec<f64> {
        self.pairs.iter().map(|&(i, e)| x[i] - x[e]).collect()
    }

    /// Adds `J^T y` to `out`.
    pub fn add_transpose(&self, y: &[f64], out: &mut [f64]) {
        for (k, &(i, e)) in self.pairs.iter().enumerate() {
            out[i] += y[k];
            out[e] -= y[k];
        }
    }

    /// `J^T M J` on `n` unknowns.
    pub fn operator(&self, n: usize) -> SparseOperator {
        let m = &self.mass;
        let mut trip = Vec::new();
        for p in 0..m.n {
            for k in m.row_ptr[p]..m.row_ptr[p + 1] {
                let q = m.col[k];
                let v = m.val[k];
                let (pi, pe) = self.pairs[p];
                let (qi, qe) = self.pairs[q];
                trip.push((pi, qi, v));
                trip.push((pi, qe, -v));
                trip.push((pe, qi, -v));
                trip.push((pe, qe, v));
            }
        }
        SparseOperator { kind: OperatorKind::JumpMass, matrix: CsrMatrix::from_triplets(n, trip), constant_kernel: false }
    }

    /// Total node area `2 pi r0 |node|`.
    pub fn area(&self) -> f64 {
        let ones = vec![1.0; self.len()];
        self.mass.quad_form(&ones)
    }
}

fn edge_length(mesh: &AxiMesh, u: usize, v: usize) -> f64 {
    if let (Some(a), Some(b)) = (mesh.frames[u], mesh.frames[v]) {
        if a.corner == b.corner {
            let ra = a.log_rho.exp();
            let rb = b.log_rho.exp();
            let (wa, wb) = (AxiMesh::global_angle(a.corner, a.angle), AxiMesh::global_angle(b.corner, b.angle));
            return (ra * wa.cos() - rb * wb.cos()).hypot(ra * wa.sin() - rb * wb.sin());
        }
    }
    let (p, q) = (mesh.vertices[u], mesh.vertices[v]);
    (p[0] - q[0]).hypot(p[1] - q[1])
}

/// `2 pi r0 ∫ [theta]^2 dy1` as a matrix on all unknowns.
pub fn assemble_jump_mass(mesh: &AxiMesh, dofs: &DofMap) -> Result<SparseOperator, FemError> {
    Ok(JumpSpace::new(mesh, dofs)?.operator(dofs.n))
}

// ---------------------------------------------------------------- solvers

/// Reverse Cuthill–McKee ordering of the matrix graph.
pub fn rcm(m: &CsrMatrix) -> Vec<usize> {
    let n = m.n;
    let deg: Vec<usize> = (0..n).map(|i| m.row_ptr[i + 1] - m.row_ptr[i]).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs = |start: usize, visited: &mut [bool], out: &mut Vec<usize>| -> usize {
        let base = out.len();
        out.push(start);
        visited[start] = true;
        let mut head = base;
        let mut last_level_start = base;
        while head < out.len() {
            let level_end = out.len();
            last_level_start = head;
            while head < level_end {
                let v = out[head];
                head += 1;
                let mut nb: Vec<usize> = m.col[m.row_ptr[v]..m.row_ptr[v + 1]].iter().copied().filter(|&w| !visited[w]).collect();
                nb.sort_by_key(|&w| (deg[w], w));
                for w in nb {
                    if !visited[w] {
                        visited[w] = true;
                        out.push(w);
                    }
                }
            }
        }
        // a minimum-degree vertex of the last level
        out[last_level_start..].iter().copied().min_by_key(|&w| (deg[w], w)).unwrap()
    };
    for s in 0..n {
        if visited[s] {
            continue;
        }
        // pseudo-peripheral start: two sweeps
        let mut start = s;
        for _ in 0..2 {
            let mut tmp = Vec::new();
            let mut vis = visited.clone();
            start = bfs(start, &mut vis, &mut tmp);
        }
        bfs(start, &mut visited, &mut order);
    }
    order.reverse();
    order
}

/// Envelope (variable band) Cholesky factorization `P A P^T = L L^T`.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    l: Vec<f64>,
    pinned: Option<usize>,
}

impl EnvelopeCholesky {
    /// Factors `a`; when `pin` is given, row and column `pin` are replaced by
    /// the identity (used for singular Neumann matrices).
    pub fn new(a: &CsrMatrix, pin: Option<usize>) -> Result<Self, FemError> {
        let n = a.n;
        let perm = rcm(a);
        let mut inv = vec![0usize; n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                let (pi, pj) = (inv[i], inv[a.col[k]]);
                if pj < pi && Some(i) != pin && Some(a.col[k]) != pin {
                    first[pi] = first[pi].min(pj);
                }
            }
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut l = vec![0.0; start[n]];
        for i in 0..n {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.col[k];
                let (pi, pj) = (inv[i], inv[j]);
                if pj > pi {
                    continue;
                }
                if pin.is_some() && (Some(i) == pin || Some(j) == pin) {
                    continue;
                }
                l[start[pi] + pj - first[pi]] += a.val[k];
            }
        }
        if let Some(p) = pin {
            let pp = inv[p];
            l[start[pp] + pp - first[pp]] = 1.0;
        }
        for i in 0..n {
            let fi = first[i];
            let row_i = start[i];
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = l[row_i + j - fi];
                let ri = &l[row_i + lo - fi..row_i + j - fi];
                let rj = &l[start[j] + lo - fj..start[j] + j - fj];
                s -= dot(ri, rj);
                l[row_i + j - fi] = s / l[start[j] + j - fj];
            }
            let d = l[row_i + i - fi] - dot(&l[row_i..row_i + i - fi], &l[row_i..row_i + i - fi]);
            if !(d > 0.0) {
                return Err(FemError::NotPositiveDefinite(perm[i]));
            }
            l[row_i + i - fi] = d.sqrt();
        }
        Ok(EnvelopeCholesky { perm, first, start, l, pinned: pin })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        if let Some(p) = self.pinned {
            let k = self.perm.iter().position(|&q| q == p).unwrap();
            y[k] = 0.0;
        }
        for i in 0..n {
            let fi = self.first[i];
            let s = dot(&self.l[self.start[i]..self.start[i] + i - fi], &y[fi..i]);
            y[i] = (y[i] - s) / self.l[self.start[i] + i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            y[i] /= self.l[self.start[i] + i - fi];
            let yi = y[i];
            let row = &self.l[self.start[i]..self.start[i] + i - fi];
            for (k, v) in row.iter().enumerate() {
                y[fi + k] -= v * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }

    pub fn envelope_size(&self) -> usize {
        self.l.len()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators keep the loop vectorizable and the result deterministic
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * c + k] * b[4 * c + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-10, max_iter: 500 }
    }
}

/// Zero weighted mean, `w . x = 0`, imposed after a singular solve.
#[derive(Debug, Clone)]
pub struct MeanConstraint {
    pub weights: Vec<f64>,
}

impl MeanConstraint {
    pub fn apply(&self, x: &mut [f64]) {
        let total: f64 = self.weights.iter().sum();
        let c = dot(&self.weights, x) / total;
        for v in x.iter_mut() {
            *v -= c;
        }
    }
}

/// Factorization plus conjugate gradients on the original operator; the
/// factorization makes CG converge in one or two steps and CG certifies the
/// residual.
#[derive(Debug, Clone)]
pub struct SpdSolver {
    pub matrix: CsrMatrix,
    factor: EnvelopeCholesky,
    singular: bool,
    pub opts: SolveOptions,
}

impl SpdSolver {
    pub fn new(op: &SparseOperator) -> Result<Self, FemError> {
        Self::with_matrix(op.matrix.clone(), op.constant_kernel)
    }

    pub fn with_matrix(matrix: CsrMatrix, singular: bool) -> Result<Self, FemError> {
        let pin = if singular { Some(0) } else { None };
        let factor = EnvelopeCholesky::new(&matrix, pin)?;
        Ok(SpdSolver { matrix, factor, singular, opts: SolveOptions::default() })
    }

    /// Uses `factor` of a nearby matrix as preconditioner for `matrix`.
    pub fn with_preconditioner(matrix: CsrMatrix, other: &SpdSolver) -> Self {
        SpdSolver { matrix, factor: other.factor.clone(), singular: other.singular, opts: other.opts }
    }

    fn project(&self, x: &mut [f64]) {
        if self.singular {
            let c = x.iter().sum::<f64>() / x.len() as f64;
            for v in x.iter_mut() {
                *v -= c;
            }
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, FemError> {
        self.solve_from(rhs, None)
    }

    pub fn solve_from(&self, rhs: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>, FemError> {
        let n = rhs.len();
        let bnorm = dot(rhs, rhs).sqrt();
        if self.singular {
            let defect: f64 = rhs.iter().sum();
            let scale: f64 = rhs.iter().map(|v| v.abs()).sum();
            if defect.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
                return Err(FemError::IncompatibleRhs(defect / scale));
            }
        }
        if bnorm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let mut b = rhs.to_vec();
        self.project(&mut b);
        let mut x = match guess {
            Some(g) => g.to_vec(),
            None => vec![0.0; n],
        };
        let mut r = b.clone();
        if guess.is_some() {
            let ax = self.matrix.apply(&x);
            for i in 0..n {
                r[i] -= ax[i];
            }
        }
        let mut z = self.factor.solve(&r);
        self.project(&mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        let mut res = dot(&r, &r).sqrt();
        for _ in 0..self.opts.max_iter {
            if res <= self.opts.tol * bnorm {
                break;
            }
            self.matrix.mul(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            self.project(&mut r);
            res = dot(&r, &r).sqrt();
            if res <= self.opts.tol * bnorm {
                break;
            }
            z = self.factor.solve(&r);
            self.project(&mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        // true residual
        let ax = self.matrix.apply(&x);
        let mut rr: Vec<f64> = (0..n).map(|i| b[i] - ax[i]).collect();
        self.project(&mut rr);
        let res = dot(&rr, &rr).sqrt();
        if !(res <= self.opts.tol * bnorm) {
            return Err(FemError::SolverDivergence(res / bnorm));
        }
        self.project(&mut x);
        Ok(x)
    }
}

/// One-shot solve of `op x = rhs`; for singular operators the solution is
/// shifted to satisfy `constraint` (zero mean by default).
pub fn solve_spd(op: &SparseOperator, rhs: &[f64], constraint: Option<&MeanConstraint>) -> Result<Vec<f64>, FemError> {
    let solver = SpdSolver::new(op)?;
    let mut x = solver.solve(rhs)?;
    if let (true, Some(c)) = (op.constant_kernel, constraint) {
        c.apply(&mut x);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize, neumann: bool) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n - 1 {
            t.push((i, i, 1.0));
            t.push((i + 1, i + 1, 1.0));
            t.push((i, i + 1, -1.0));
            t.push((i + 1, i, -1.0));
        }
        if !neumann {
            t.push((0, 0, 1.0));
            t.push((n - 1, n - 1, 1.0));
        }
        CsrMatrix::from_triplets(n, t)
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let op = SparseOperator { kind: OperatorKind::VolumeMass, matrix: CsrMatrix::identity(4), constant_kernel: false };
        let x = solve_spd(&op, &[1.0, 0.0, 0.0, 0.0], None).unwrap();
        assert_eq!(x, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn singular_solve_needs_compatible_rhs() {
        let op = SparseOperator { kind: OperatorKind::Stiffness, matrix: laplace_1d(6, true), constant_kernel: true };
        assert!(matches!(solve_spd(&op, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], None), Err(FemError::IncompatibleRhs(_))));
        let x = solve_spd(&op, &[1.0, 0.0, 0.0, 0.0, 0.0, -1.0], None).unwrap();
        let r = op.matrix.apply(&x);
        assert!((r[0] - 1.0).abs() < 1e-12 && (r[5] + 1.0).abs() < 1e-12);
        assert!(x.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn envelope_cholesky_matches_dense_solution() {
        let m = laplace_1d(9, false);
        let f = EnvelopeCholesky::new(&m, None).unwrap();
        let b: Vec<f64> = (0..9).map(|i| (i as f64).sin()).collect();
        let x = f.solve(&b);
        let r = m.apply(&x);
        for i in 0..9 {
            assert!((r[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn triple_products_sum_to_one() {
        // ∫ (sum phi)^3 = area
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    s += triple(i, j, k);
                }
            }
        }
        assert!((s - 1.0).abs() < 1e-14);
    }
}
