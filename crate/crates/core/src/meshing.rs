//! Triangulations of the cell cross-section with a cracked node.
//!
//! Away from the corners each region (intra, the two halves of the sheath,
//! extra) is meshed by a refined constrained Delaunay triangulation. Around
//! `A` and `B` a structured log-polar core takes over: rings of geometrically
//! shrinking radius whose sector boundaries follow the membrane, the sheath
//! ray and the crack exactly. Core vertices carry a polar frame, so element
//! geometry stays well conditioned even hundreds of e-folds below the core
//! radius where absolute coordinates have collapsed onto the corner.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::f64::consts::PI;
use spade::{AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation};

use crate::geometry::{CellGeometry, Corner, Piece};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeshError {
    #[error("mesh generation failed: {0}")]
    MeshGenerationFailure(&'static str),
    #[error("edge length {h} is too large for the node or sheath")]
    GeometryTooThin { h: f64 },
    #[error("invalid geometry: {0}")]
    Geometry(#[from] crate::geometry::GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Region {
    Intra,
    Myelin,
    Extra,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Intra => "intra",
            Region::Myelin => "myelin",
            Region::Extra => "extra",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EdgeTag {
    NodeInner,
    NodeOuter,
    MyelinInner,
    MyelinOuter,
    Lateral,
    Axis,
}

impl EdgeTag {
    pub fn name(self) -> &'static str {
        match self {
            EdgeTag::NodeInner => "node_inner",
            EdgeTag::NodeOuter => "node_outer",
            EdgeTag::MyelinInner => "myelin_inner",
            EdgeTag::MyelinOuter => "myelin_outer",
            EdgeTag::Lateral => "lateral",
            EdgeTag::Axis => "axis",
        }
    }
}

/// Position of a core vertex relative to its corner.
///
/// `angle` is the corner-local angle: `(-pi, 0)` intracellular, `(0, phi)`
/// sheath, `(phi, pi)` extracellular; `-pi` and `pi` are the two faces of the
/// crack. The apex has `log_rho = -inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarFrame {
    pub corner: Corner,
    pub log_rho: f64,
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshParams {
    /// Target edge length away from the corners.
    pub h: f64,
    /// Exponent of the size growth away from the corner cores.
    pub grading: f64,
    /// Depth of the corner cores in units of log-radius.
    pub core_depth: f64,
    /// Angular step in the cores; derived from `h` when `None`.
    pub angular_step: Option<f64>,
}

impl MeshParams {
    pub fn new(h: f64, grading: f64) -> Self {
        MeshParams { h, grading, core_depth: 4.0, angular_step: None }
    }

    pub fn with_core_depth(mut self, depth: f64) -> Self {
        self.core_depth = depth;
        self
    }

    /// Angular step of the corner cores: `pi/8` at `h = 0.05`, proportional
    /// to `h`, never coarser than `pi/4`.
    pub fn dphi(&self) -> f64 {
        self.angular_step.unwrap_or(self.h * 2.5 * PI).min(PI / 4.0)
    }
}

#[derive(Debug, Clone)]
pub struct AxiMesh {
    /// `(y1, r)` in window coordinates.
    pub vertices: Vec<[f64; 2]>,
    pub frames: Vec<Option<PolarFrame>>,
    pub triangles: Vec<[usize; 3]>,
    pub regions: Vec<Region>,
    /// `(intracellular copy, extracellular copy)`, ordered along the node.
    pub jump_pairs: Vec<(usize, usize)>,
    /// `(vertex on y1 = s, vertex on y1 = s + 1)`.
    pub periodic_pairs: Vec<(usize, usize)>,
    pub boundary: Vec<([usize; 2], EdgeTag)>,
    /// Positions of `A` and `B`.
    pub corners: [[f64; 2]; 2],
    /// Left edge of the window.
    pub window: f64,
    pub r0: f64,
    pub h: f64,
}

/// Element coordinates in a frame where the element has unit-order size:
/// absolute position is `origin + exp(log_scale) * local`.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub local: [[f64; 2]; 3],
    pub log_scale: f64,
    /// Absolute radius of each vertex.
    pub r: [f64; 3],
}

impl ElementGeometry {
    /// Signed area in local units.
    pub fn local_area(&self) -> f64 {
        let [p, q, s] = self.local;
        0.5 * ((q[0] - p[0]) * (s[1] - p[1]) - (q[1] - p[1]) * (s[0] - p[0]))
    }

    /// Gradients of the three hat functions in local units.
    pub fn local_gradients(&self) -> [[f64; 2]; 3] {
        let [p, q, s] = self.local;
        let two_a = 2.0 * self.local_area();
        [
            [(q[1] - s[1]) / two_a, (s[0] - q[0]) / two_a],
            [(s[1] - p[1]) / two_a, (p[0] - s[0]) / two_a],
            [(p[1] - q[1]) / two_a, (q[0] - p[0]) / two_a],
        ]
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }
}

impl AxiMesh {
    fn corner_index(c: Corner) -> usize {
        match c {
            Corner::A => 0,
            Corner::B => 1,
        }
    }

    pub fn corner(&self, c: Corner) -> [f64; 2] {
        self.corners[Self::corner_index(c)]
    }

    /// Global direction angle of a corner-local angle.
    pub fn global_angle(c: Corner, psi: f64) -> f64 {
        match c {
            Corner::B => psi,
            Corner::A => PI - psi,
        }
    }

    pub fn element(&self, t: usize) -> ElementGeometry {
        let tri = self.triangles[t];
        let fr = [self.frames[tri[0]], self.frames[tri[1]], self.frames[tri[2]]];
        if let [Some(f0), Some(f1), Some(f2)] = fr {
            if f0.corner == f1.corner && f1.corner == f2.corner {
                let c = f0.corner;
                let apex = self.corner(c);
                let m = [f0.log_rho, f1.log_rho, f2.log_rho].into_iter().fold(f64::NEG_INFINITY, f64::max);
                let mut local = [[0.0; 2]; 3];
                let mut r = [apex[1]; 3];
                for (k, f) in [f0, f1, f2].iter().enumerate() {
                    if f.log_rho == f64::NEG_INFINITY {
                        continue;
                    }
                    let w = Self::global_angle(c, f.angle);
                    let rel = (f.log_rho - m).exp();
                    local[k] = [rel * w.cos(), rel * w.sin()];
                    r[k] = apex[1] + f.log_rho.exp() * w.sin();
                }
                return ElementGeometry { local, log_scale: m, r };
            }
        }
        let p0 = self.vertices[tri[0]];
        let mut local = [[0.0; 2]; 3];
        let mut r = [0.0; 3];
        for k in 0..3 {
            let p = self.vertices[tri[k]];
            local[k] = [p[0] - p0[0], p[1] - p0[1]];
            r[k] = p[1];
        }
        // keep the absolute origin in the first vertex
        ElementGeometry { local, log_scale: 0.0, r }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// `n` copies of the cell side by side. The seam between copy `k` and
    /// `k + 1` is glued through `periodic_pairs` (as coincident vertices, so
    /// [`AxiMesh::check`] does not apply); the two outer seams are left open
    /// and returned as `(left seam vertices, right seam vertices)`.
    pub fn replicate(&self, n: usize) -> (AxiMesh, Vec<usize>, Vec<usize>) {
        let nv = self.n_vertices();
        let mut m = AxiMesh {
            vertices: Vec::with_capacity(n * nv),
            frames: Vec::with_capacity(n * nv),
            triangles: Vec::with_capacity(n * self.triangles.len()),
            regions: Vec::with_capacity(n * self.triangles.len()),
            jump_pairs: Vec::new(),
            periodic_pairs: Vec::new(),
            boundary: Vec::new(),
            corners: self.corners,
            window: self.window,
            r0: self.r0,
            h: self.h,
        };
        for k in 0..n {
            let off = k * nv;
            let dy = k as f64;
            m.vertices.extend(self.vertices.iter().map(|p| [p[0] + dy, p[1]]));
            m.frames.extend(self.frames.iter().copied());
            m.triangles.extend(self.triangles.iter().map(|t| [t[0] + off, t[1] + off, t[2] + off]));
            m.regions.extend(self.regions.iter().copied());
            m.jump_pairs.extend(self.jump_pairs.iter().map(|&(i, e)| (i + off, e + off)));
            m.boundary.extend(self.boundary.iter().map(|&([a, b], t)| ([a + off, b + off], t)));
            if k + 1 < n {
                m.periodic_pairs.extend(self.periodic_pairs.iter().map(|&(l, r)| (l + off + nv, r + off)));
            }
        }
        let left = self.periodic_pairs.iter().map(|&(l, _)| l).collect();
        let right = self.periodic_pairs.iter().map(|&(_, r)| r + (n - 1) * nv).collect();
        (m, left, right)
    }

    /// Region membership per vertex as a bit set (bit 0 intra, 1 myelin, 2 extra).
    pub fn vertex_regions(&self) -> Vec<u8> {
        let mut out = alloc::vec![0u8; self.vertices.len()];
        for (tri, reg) in self.triangles.iter().zip(&self.regions) {
            let bit = match reg {
                Region::Intra => 1,
                Region::Myelin => 2,
                Region::Extra => 4,
            };
            for &v in tri {
                out[v] |= bit;
            }
        }
        out
    }

    /// Checks the structural invariants: positive areas, jump pairs at equal
    /// positions on the membrane, periodic pairs one period apart.
    pub fn check(&self) -> Result<(), MeshError> {
        for t in 0..self.triangles.len() {
            if !(self.element(t).local_area() > 0.0) {
                return Err(MeshError::MeshGenerationFailure("non-positive element area"));
            }
        }
        for &(i, e) in &self.jump_pairs {
            if i == e || self.vertices[i] != self.vertices[e] || self.vertices[i][1] != self.r0 {
                return Err(MeshError::MeshGenerationFailure("malformed jump pair"));
            }
        }
        for &(l, r) in &self.periodic_pairs {
            let (p, q) = (self.vertices[l], self.vertices[r]);
            if p[1] != q[1] || (q[0] - p[0] - 1.0).abs() > 1e-12 {
                return Err(MeshError::MeshGenerationFailure("malformed periodic pair"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    pub min_angle_deg: f64,
    pub max_aspect_ratio: f64,
    pub n_triangles: usize,
    pub n_vertices: usize,
    /// Triangles whose aspect ratio (longest edge over shortest altitude) exceeds 10.
    pub flagged: usize,
}

pub fn triangle_quality(p: [[f64; 2]; 3]) -> (f64, f64) {
    let e = |i: usize, j: usize| (p[j][0] - p[i][0]).hypot(p[j][1] - p[i][1]);
    let l = [e(1, 2), e(2, 0), e(0, 1)];
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0])).abs();
    let mut min_ang = PI;
    for k in 0..3 {
        let (a, b, c) = (l[k], l[(k + 1) % 3], l[(k + 2) % 3]);
        let cosv = ((b * b + c * c - a * a) / (2.0 * b * c)).clamp(-1.0, 1.0);
        min_ang = min_ang.min(cosv.acos());
    }
    let lmax = l[0].max(l[1]).max(l[2]);
    let hmin = 2.0 * area / lmax;
    (min_ang.to_degrees(), lmax / hmin)
}

pub fn mesh_quality(mesh: &AxiMesh) -> QualityReport {
    let mut min_angle: f64 = 180.0;
    let mut max_ar: f64 = 0.0;
    let mut flagged = 0;
    for t in 0..mesh.triangles.len() {
        let (ang, ar) = triangle_quality(mesh.element(t).local);
        min_angle = min_angle.min(ang);
        max_ar = max_ar.max(ar);
        if ar > 10.0 {
            flagged += 1;
        }
    }
    QualityReport {
        min_angle_deg: min_angle,
        max_aspect_ratio: max_ar,
        n_triangles: mesh.triangles.len(),
        n_vertices: mesh.vertices.len(),
        flagged,
    }
}

/// Builds the cell mesh with default core depth.
pub fn build_cell_mesh(geometry: &CellGeometry, h: f64, grading: f64) -> Result<AxiMesh, MeshError> {
    build_cell_mesh_with(geometry, &MeshParams::new(h, grading))
}

/// Sectors of a corner core: (region, first angle, last angle, intervals).
fn sectors(phi: f64, dphi: f64) -> [(Region, f64, f64, usize); 3] {
    let n = |w: f64| ((w / dphi) - 1e-9).ceil().max(1.0) as usize;
    [(Region::Intra, -PI, 0.0, n(PI)), (Region::Myelin, 0.0, phi, n(phi)), (Region::Extra, phi, PI, n(PI - phi))]
}

fn sector_angles(sec: &[(Region, f64, f64, usize); 3]) -> (Vec<f64>, Vec<Region>) {
    let mut ang = alloc::vec![sec[0].1];
    let mut reg = Vec::new();
    for &(region, lo, hi, n) in sec {
        for j in 1..=n {
            ang.push(if j == n { hi } else { lo + (hi - lo) * j as f64 / n as f64 });
            reg.push(region);
        }
    }
    (ang, reg)
}

fn corner_point(apex: [f64; 2], rho: f64, c: Corner, psi: f64) -> [f64; 2] {
    // membrane directions are placed exactly on r = r0
    if psi == 0.0 || psi == PI || psi == -PI {
        let dir = match (c, psi == 0.0) {
            (Corner::B, true) | (Corner::A, false) => 1.0,
            _ => -1.0,
        };
        return [apex[0] + dir * rho, apex[1]];
    }
    let w = AxiMesh::global_angle(c, psi);
    [apex[0] + rho * w.cos(), apex[1] + rho * w.sin()]
}

/// Places points along a chain of pieces so that the spacing follows `size`.
/// The first and last points are `start` and `end` exactly.
fn discretize<F: Fn([f64; 2]) -> f64>(pieces: &[Piece], start: [f64; 2], end: [f64; 2], size: &F) -> Vec<[f64; 2]> {
    const SUB: usize = 96;
    let mut samples: Vec<(usize, f64, f64)> = Vec::new(); // (piece, param, cumulative)
    let mut acc = 0.0;
    for (k, p) in pieces.iter().enumerate() {
        let mut prev = p.point(0.0);
        samples.push((k, 0.0, acc));
        for j in 1..=SUB {
            let s = j as f64 / SUB as f64;
            let cur = p.point(s);
            let mid = p.point(s - 0.5 / SUB as f64);
            acc += (cur[0] - prev[0]).hypot(cur[1] - prev[1]) / size(mid);
            samples.push((k, s, acc));
            prev = cur;
        }
    }
    let n = (acc.round() as usize).max(1);
    let mut out = Vec::with_capacity(n + 1);
    out.push(start);
    let mut idx = 0;
    for i in 1..n {
        let target = acc * i as f64 / n as f64;
        while samples[idx + 1].2 < target || samples[idx + 1].0 != samples[idx].0 && samples[idx + 1].1 == 0.0 {
            idx += 1;
        }
        let (k0, s0, c0) = samples[idx];
        let (k1, s1, c1) = samples[idx + 1];
        let s = if k0 == k1 && c1 > c0 { s0 + (s1 - s0) * (target - c0) / (c1 - c0) } else { s1 };
        out.push(pieces[k1].point(s));
    }
    out.push(end);
    out
}

fn line(p: [f64; 2], q: [f64; 2]) -> Piece {
    Piece::Line { p, q }
}

type Key = (u64, u64, u8);

fn tag_of(region: Region) -> u8 {
    match region {
        Region::Intra => 1,
        Region::Myelin => 2,
        Region::Extra => 3,
    }
}

struct Builder {
    vertices: Vec<[f64; 2]>,
    frames: Vec<Option<PolarFrame>>,
    keys: BTreeMap<Key, usize>,
    node_set: BTreeSet<(u64, u64)>,
    triangles: Vec<[usize; 3]>,
    regions: Vec<Region>,
}

impl Builder {
    fn key(&self, p: [f64; 2], region: Region) -> Key {
        let b = (p[0].to_bits(), p[1].to_bits());
        let tag = if self.node_set.contains(&b) { tag_of(region) } else { 0 };
        (b.0, b.1, tag)
    }

    fn vertex(&mut self, p: [f64; 2], region: Region) -> usize {
        let k = self.key(p, region);
        if let Some(&i) = self.keys.get(&k) {
            return i;
        }
        let i = self.vertices.len();
        self.vertices.push(p);
        self.frames.push(None);
        self.keys.insert(k, i);
        i
    }

    fn lookup(&self, p: [f64; 2], region: Region) -> Option<usize> {
        self.keys.get(&self.key(p, region)).copied()
    }

    fn new_vertex(&mut self, p: [f64; 2], frame: PolarFrame) -> usize {
        self.vertices.push(p);
        self.frames.push(Some(frame));
        self.vertices.len() - 1
    }

    fn triangle(&mut self, mut t: [usize; 3], region: Region, local: [[f64; 2]; 3]) {
        let [p, q, s] = local;
        let a = (q[0] - p[0]) * (s[1] - p[1]) - (q[1] - p[1]) * (s[0] - p[0]);
        if a < 0.0 {
            t.swap(1, 2);
        }
        self.triangles.push(t);
        self.regions.push(region);
    }

    /// Triangulates one region loop and merges it.
    fn region(&mut self, lp: &[[f64; 2]], region: Region, h: f64) -> Result<(), MeshError> {
        let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> = ConstrainedDelaunayTriangulation::new();
        let pts = lp.iter().map(|p| Point2::new(p[0], p[1]));
        cdt.add_constraint_edges(pts, true)
            .map_err(|_| MeshError::MeshGenerationFailure("constrained triangulation insertion failed"))?;
        if cdt.num_vertices() != lp.len() {
            return Err(MeshError::MeshGenerationFailure("region boundary has coincident points"));
        }
        let params = RefinementParameters::<f64>::new()
            .exclude_outer_faces(true)
            .keep_constraint_edges()
            .with_angle_limit(AngleLimit::from_deg(28.0))
            .with_max_allowed_area(0.5 * h * h);
        let res = cdt.refine(params);
        let mut excluded = alloc::vec![false; cdt.num_all_faces()];
        for f in &res.excluded_faces {
            excluded[f.index()] = true;
        }
        for face in cdt.inner_faces() {
            if excluded[face.fix().index()] {
                continue;
            }
            let vs = face.vertices();
            let mut t = [0usize; 3];
            let mut loc = [[0.0; 2]; 3];
            for k in 0..3 {
                let p = vs[k].position();
                t[k] = self.vertex([p.x, p.y], region);
                loc[k] = [p.x, p.y];
            }
            self.triangle(t, region, loc);
        }
        Ok(())
    }
}

struct Core {
    corner: Corner,
    apex: [f64; 2],
    angles: Vec<f64>,
    /// Region of each angular interval.
    intervals: Vec<Region>,
    /// Index of the first vertex of each sector boundary: 0 (crack, intra face),
    /// myelin start, extra start, last (crack, extra face).
    bounds: [usize; 4],
}

impl Core {
    fn new(corner: Corner, apex: [f64; 2], phi: f64, dphi: f64) -> Self {
        let sec = sectors(phi, dphi);
        let (angles, intervals) = sector_angles(&sec);
        let bounds = [0, sec[0].3, sec[0].3 + sec[1].3, angles.len() - 1];
        Core { corner, apex, angles, intervals, bounds }
    }

    fn ring0(&self, rho: f64) -> Vec<[f64; 2]> {
        self.angles.iter().map(|&a| corner_point(self.apex, rho, self.corner, a)).collect()
    }
}

pub fn build_cell_mesh_with(geometry: &CellGeometry, params: &MeshParams) -> Result<AxiMesh, MeshError> {
    let g = geometry.clone().validate()?;
    let h = params.h;
    if !(h > 0.0) || h >= 0.5 * (g.r_outer - g.r0) || h >= 0.25 * g.r_outer {
        return Err(MeshError::GeometryTooThin { h });
    }
    if g.has_myelin() {
        if h >= 0.25 * (g.b - g.a) {
            return Err(MeshError::GeometryTooThin { h });
        }
        build_myelinated(&g, params)
    } else {
        build_bare(&g, params)
    }
}

fn finish(b: Builder, g: &CellGeometry, s: f64, h: f64, jump_pairs: Vec<(usize, usize)>, periodic: Vec<(usize, usize)>, boundary: Vec<([usize; 2], EdgeTag)>) -> Result<AxiMesh, MeshError> {
    let mesh = AxiMesh {
        vertices: b.vertices,
        frames: b.frames,
        triangles: b.triangles,
        regions: b.regions,
        jump_pairs,
        periodic_pairs: periodic,
        boundary,
        corners: [[g.a, g.r0], [g.b, g.r0]],
        window: s,
        r0: g.r0,
        h,
    };
    mesh.check()?;
    let q = mesh_quality(&mesh);
    if q.min_angle_deg < 8.0 {
        return Err(MeshError::MeshGenerationFailure("sliver elements below the quality threshold"));
    }
    Ok(mesh)
}

fn chain_edges(b: &Builder, pts: &[[f64; 2]], region: Region, tag: EdgeTag, out: &mut Vec<([usize; 2], EdgeTag)>) {
    for w in pts.windows(2) {
        if let (Some(i), Some(j)) = (b.lookup(w[0], region), b.lookup(w[1], region)) {
            out.push(([i, j], tag));
        }
    }
}

fn seam_pairs(b: &Builder, left: &[[f64; 2]], right: &[[f64; 2]], out: &mut Vec<(usize, usize)>) {
    for (p, q) in left.iter().zip(right) {
        for region in [Region::Intra, Region::Extra] {
            if let (Some(i), Some(j)) = (b.lookup(*p, region), b.lookup(*q, region)) {
                if !out.contains(&(i, j)) {
                    out.push((i, j));
                }
            }
        }
    }
}

fn build_bare(g: &CellGeometry, params: &MeshParams) -> Result<AxiMesh, MeshError> {
    let h = params.h;
    let s = g.window_start();
    let s1 = s + 1.0;
    let uniform = |_: [f64; 2]| h;
    let axis = discretize(&[line([s, 0.0], [s1, 0.0])], [s, 0.0], [s1, 0.0], &uniform);
    let top = discretize(&[line([s, g.r_outer], [s1, g.r_outer])], [s, g.r_outer], [s1, g.r_outer], &uniform);
    let memb = discretize(&[line([s, g.r0], [s1, g.r0])], [s, g.r0], [s1, g.r0], &uniform);
    let lo = discretize(&[line([s, 0.0], [s, g.r0])], [s, 0.0], [s, g.r0], &uniform);
    let hi = discretize(&[line([s, g.r0], [s, g.r_outer])], [s, g.r0], [s, g.r_outer], &uniform);
    let shift = |v: &[[f64; 2]]| v.iter().map(|p| [s1, p[1]]).collect::<Vec<_>>();
    let (lo_r, hi_r) = (shift(&lo), shift(&hi));

    let mut b = Builder {
        vertices: Vec::new(),
        frames: Vec::new(),
        keys: BTreeMap::new(),
        node_set: memb.iter().map(|p| (p[0].to_bits(), p[1].to_bits())).collect(),
        triangles: Vec::new(),
        regions: Vec::new(),
    };
    let intra = join(&[&axis, &lo_r, &rev(&memb), &rev(&lo)]);
    let extra = join(&[&memb, &hi_r, &rev(&top), &rev(&hi)]);
    b.region(&intra, Region::Intra, h)?;
    b.region(&extra, Region::Extra, h)?;

    let mut jump = Vec::new();
    for p in &memb[..memb.len() - 1] {
        jump.push((b.lookup(*p, Region::Intra).unwrap(), b.lookup(*p, Region::Extra).unwrap()));
    }
    let last = memb[memb.len() - 1];
    jump.push((b.lookup(last, Region::Intra).unwrap(), b.lookup(last, Region::Extra).unwrap()));
    let mut periodic = Vec::new();
    seam_pairs(&b, &lo, &lo_r, &mut periodic);
    seam_pairs(&b, &hi, &hi_r, &mut periodic);
    let mut bd = Vec::new();
    chain_edges(&b, &axis, Region::Intra, EdgeTag::Axis, &mut bd);
    chain_edges(&b, &top, Region::Extra, EdgeTag::Lateral, &mut bd);
    chain_edges(&b, &memb, Region::Intra, EdgeTag::NodeInner, &mut bd);
    chain_edges(&b, &memb, Region::Extra, EdgeTag::NodeOuter, &mut bd);
    finish(b, g, s, h, jump, periodic, bd)
}

fn rev(v: &[[f64; 2]]) -> Vec<[f64; 2]> {
    v.iter().rev().copied().collect()
}

/// Concatenates chains that share end points into a closed loop (without
/// repeating the first point at the end).
fn join(parts: &[&[[f64; 2]]]) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = Vec::new();
    for part in parts {
        for (k, p) in part.iter().enumerate() {
            if k == 0 && !out.is_empty() {
                debug_assert!(out.last() == Some(p));
                continue;
            }
            out.push(*p);
        }
    }
    if out.len() > 1 && out.first() == out.last() {
        out.pop();
    }
    out
}

/// Radius of the polar corner cores.
pub fn core_radius(g: &CellGeometry) -> f64 {
    let ray = g.straight_ray_length(Corner::A).min(g.straight_ray_length(Corner::B));
    (0.25 * (g.b - g.a)).min(0.5 * g.r0).min(0.5 * ray).min(0.25 * (g.r_outer - g.r0))
}

fn build_myelinated(g: &CellGeometry, params: &MeshParams) -> Result<AxiMesh, MeshError> {
    let h = params.h;
    let dphi = params.dphi();
    let s = g.window_start();
    let s1 = s + 1.0;
    let rc = core_radius(g);
    let r_seam = g.seam_radius().ok_or(MeshError::MeshGenerationFailure("outline misses the seam"))?;
    let ca = Core::new(Corner::A, [g.a, g.r0], g.phi_a, dphi);
    let cb = Core::new(Corner::B, [g.b, g.r0], g.phi_b, dphi);
    let ring_a = ca.ring0(rc);
    let ring_b = cb.ring0(rc);

    let base = rc * dphi;
    let gamma = params.grading;
    let corners = [[g.a, g.r0], [g.b, g.r0]];
    let size = |p: [f64; 2]| {
        let d = corners.iter().map(|c| (p[0] - c[0]).hypot(p[1] - c[1])).fold(f64::INFINITY, f64::min);
        (base * (d / rc).max(1.0).powf(gamma)).min(h)
    };

    let (out_l, out_r) = g.window_outline()?;
    let mut out_r = out_r;
    let mut out_l = out_l;
    let ray_b = ring_b[cb.bounds[2]];
    let ray_a = ring_a[ca.bounds[2]];
    if let Some(Piece::Line { q, .. }) = out_r.first().copied() {
        out_r[0] = line(ray_b, q);
    }
    let nl = out_l.len();
    if let Some(Piece::Line { p, .. }) = out_l.last().copied() {
        out_l[nl - 1] = line(p, ray_a);
    }

    let axis = discretize(&[line([s, 0.0], [s1, 0.0])], [s, 0.0], [s1, 0.0], &size);
    let top = discretize(&[line([s, g.r_outer], [s1, g.r_outer])], [s, g.r_outer], [s1, g.r_outer], &size);
    let seam_lo = discretize(&[line([s, 0.0], [s, g.r0])], [s, 0.0], [s, g.r0], &size);
    let seam_mid = discretize(&[line([s, g.r0], [s, r_seam])], [s, g.r0], [s, r_seam], &size);
    let seam_hi = discretize(&[line([s, r_seam], [s, g.r_outer])], [s, r_seam], [s, g.r_outer], &size);
    let shift = |v: &[[f64; 2]]| v.iter().map(|p| [s1, p[1]]).collect::<Vec<_>>();
    let (lo_r, mid_r, hi_r) = (shift(&seam_lo), shift(&seam_mid), shift(&seam_hi));
    let mi_b = ring_b[cb.bounds[1]];
    let mi_a = ring_a[ca.bounds[1]];
    let gmi_right = discretize(&[line(mi_b, [s1, g.r0])], mi_b, [s1, g.r0], &size);
    let gmi_left = discretize(&[line([s, g.r0], mi_a)], [s, g.r0], mi_a, &size);
    let crack_a = ring_a[0];
    let crack_b = ring_b[0];
    let node = discretize(&[line(crack_a, crack_b)], crack_a, crack_b, &size);
    let outline_r = discretize(&out_r, ray_b, [s1, r_seam], &size);
    let outline_l = discretize(&out_l, [s, r_seam], ray_a, &size);

    let arc = |ring: &[[f64; 2]], from: usize, to: usize| -> Vec<[f64; 2]> {
        if from <= to {
            ring[from..=to].to_vec()
        } else {
            ring[to..=from].iter().rev().copied().collect()
        }
    };
    let [_, bm, be, bl] = cb.bounds;
    let [_, am, ae, al] = ca.bounds;

    let mut b = Builder {
        vertices: Vec::new(),
        frames: Vec::new(),
        keys: BTreeMap::new(),
        node_set: node.iter().map(|p| (p[0].to_bits(), p[1].to_bits())).collect(),
        triangles: Vec::new(),
        regions: Vec::new(),
    };
    let intra = join(&[
        &axis,
        &lo_r,
        &rev(&gmi_right),
        &arc(&ring_b, bm, 0),
        &rev(&node),
        &arc(&ring_a, 0, am),
        &rev(&gmi_left),
        &rev(&seam_lo),
    ]);
    let my_right = join(&[&arc(&ring_b, bm, be), &outline_r, &rev(&mid_r), &rev(&gmi_right)]);
    let my_left = join(&[&gmi_left, &arc(&ring_a, am, ae), &rev(&outline_l), &rev(&seam_mid)]);
    let extra = join(&[
        &outline_l,
        &arc(&ring_a, ae, al),
        &node,
        &arc(&ring_b, bl, be),
        &outline_r,
        &hi_r,
        &rev(&top),
        &rev(&seam_hi),
    ]);
    b.region(&intra, Region::Intra, h)?;
    b.region(&my_left, Region::Myelin, h)?;
    b.region(&my_right, Region::Myelin, h)?;
    b.region(&extra, Region::Extra, h)?;

    let mut bd = Vec::new();
    chain_edges(&b, &axis, Region::Intra, EdgeTag::Axis, &mut bd);
    chain_edges(&b, &top, Region::Extra, EdgeTag::Lateral, &mut bd);
    chain_edges(&b, &node, Region::Intra, EdgeTag::NodeInner, &mut bd);
    chain_edges(&b, &node, Region::Extra, EdgeTag::NodeOuter, &mut bd);
    chain_edges(&b, &gmi_left, Region::Intra, EdgeTag::MyelinInner, &mut bd);
    chain_edges(&b, &gmi_right, Region::Intra, EdgeTag::MyelinInner, &mut bd);
    chain_edges(&b, &outline_l, Region::Extra, EdgeTag::MyelinOuter, &mut bd);
    chain_edges(&b, &outline_r, Region::Extra, EdgeTag::MyelinOuter, &mut bd);

    let mut jump_a = Vec::new();
    let mut jump_b = Vec::new();
    for (core, ring, jumps) in [(&ca, &ring_a, &mut jump_a), (&cb, &ring_b, &mut jump_b)] {
        build_core(&mut b, core, ring, rc, params, &mut bd, jumps)?;
    }
    let mut jump = Vec::new();
    jump_a.reverse();
    jump.extend(jump_a);
    for p in &node {
        let i = b.lookup(*p, Region::Intra).ok_or(MeshError::MeshGenerationFailure("node vertex lost"))?;
        let e = b.lookup(*p, Region::Extra).ok_or(MeshError::MeshGenerationFailure("node vertex lost"))?;
        jump.push((i, e));
    }
    jump.extend(jump_b);

    let mut periodic = Vec::new();
    seam_pairs(&b, &seam_lo, &lo_r, &mut periodic);
    seam_pairs(&b, &seam_mid, &mid_r, &mut periodic);
    seam_pairs(&b, &seam_hi, &hi_r, &mut periodic);
    // the interface points are shared between seam segments; lookup may give
    // the same pair twice with different region hints
    periodic.sort_unstable();
    periodic.dedup();
    finish(b, g, s, h, jump, periodic, bd)
}

/// Adds the structured rings of one corner below the ring of radius `rc`
/// (whose vertices already exist) down to the apex.
fn build_core(
    b: &mut Builder,
    core: &Core,
    ring0: &[[f64; 2]],
    rc: f64,
    params: &MeshParams,
    bd: &mut Vec<([usize; 2], EdgeTag)>,
    jumps: &mut Vec<(usize, usize)>,
) -> Result<(), MeshError> {
    let c = core.corner;
    let nang = core.angles.len();
    let last = nang - 1;
    let log_rc = rc.ln();
    // ring 0 ids: crack faces carry region tags
    let mut prev: Vec<usize> = Vec::with_capacity(nang);
    for (j, p) in ring0.iter().enumerate() {
        let region = if j == 0 {
            Region::Intra
        } else if j == last {
            Region::Extra
        } else {
            core.intervals[j.min(core.intervals.len() - 1)]
        };
        let id = b.lookup(*p, region).ok_or(MeshError::MeshGenerationFailure("core ring is not attached"))?;
        b.frames[id] = Some(PolarFrame { corner: c, log_rho: log_rc, angle: core.angles[j] });
        prev.push(id);
    }
    let mut prev_angles = core.angles.clone();
    let mut prev_regions = core.intervals.clone();
    let mut prev_log = log_rc;

    let ray_tags = |bounds: &[usize; 4], j: usize| -> Option<EdgeTag> {
        if j == bounds[0] {
            Some(EdgeTag::NodeInner)
        } else if j == bounds[3] {
            Some(EdgeTag::NodeOuter)
        } else if j == bounds[1] {
            Some(EdgeTag::MyelinInner)
        } else if j == bounds[2] {
            Some(EdgeTag::MyelinOuter)
        } else {
            None
        }
    };

    let dlog = params.dphi();
    let n_rings = ((params.core_depth / dlog).ceil() as usize).max(1);
    let mut bounds = core.bounds;
    for k in 1..=n_rings {
        let lr = log_rc - k as f64 * dlog;
        let ids = add_ring(b, core, &prev_angles, lr);
        quads(b, c, &prev, &ids, &prev_angles, &prev_regions, prev_log, lr);
        for j in 0..nang {
            if let Some(t) = ray_tags(&bounds, j) {
                bd.push(([prev[j], ids[j]], t));
            }
        }
        jumps.push((ids[0], ids[last]));
        prev = ids;
        prev_log = lr;
    }

    // coarsen until every interval is wide enough for the apex fan
    let fan_min = 20f64.to_radians();
    loop {
        let coarsen: Vec<bool> = (0..3)
            .map(|sec| {
                let (lo, hi) = (bounds[sec], bounds[sec + 1]);
                (prev_angles[hi] - prev_angles[lo]) / ((hi - lo) as f64) < fan_min && hi - lo > 1
            })
            .collect();
        if !coarsen.iter().any(|&c| c) {
            break;
        }
        let mut angles = Vec::new();
        let mut regions = Vec::new();
        let mut nb = [0usize; 4];
        let mut start = 0;
        for sec in 0..3 {
            let (lo, hi) = (bounds[sec], bounds[sec + 1]);
            let n = hi - lo;
            let width = prev_angles[hi] - prev_angles[lo];
            let m = if coarsen[sec] { n.div_ceil(2) } else { n };
            nb[sec] = start;
            for j in 0..m {
                angles.push(prev_angles[lo] + width * j as f64 / m as f64);
                regions.push(prev_regions[lo]);
            }
            start += m;
        }
        angles.push(prev_angles[prev_angles.len() - 1]);
        nb[3] = angles.len() - 1;
        let step = (0..regions.len()).map(|j| angles[j + 1] - angles[j]).fold(f64::INFINITY, f64::min);
        let lr = prev_log - step;
        let ids = add_ring(b, core, &angles, lr);
        zipper(b, c, &prev, &prev_angles, &ids, &angles, &bounds, &nb, &prev_regions, prev_log, lr);
        for sec in 0..4 {
            let t = ray_tags(&bounds, bounds[sec]).unwrap();
            bd.push(([prev[bounds[sec]], ids[nb[sec]]], t));
        }
        jumps.push((ids[0], ids[ids.len() - 1]));
        prev = ids;
        prev_angles = angles;
        prev_regions = regions;
        prev_log = lr;
        bounds = nb;
    }

    let apex = b.new_vertex(core.apex, PolarFrame { corner: c, log_rho: f64::NEG_INFINITY, angle: 0.0 });
    for j in 0..prev_regions.len() {
        let loc = [
            [0.0, 0.0],
            local_point(c, prev_angles[j], 0.0),
            local_point(c, prev_angles[j + 1], 0.0),
        ];
        b.triangle([apex, prev[j], prev[j + 1]], prev_regions[j], loc);
    }
    for sec in 0..4 {
        let t = ray_tags(&bounds, bounds[sec]).unwrap();
        bd.push(([prev[bounds[sec]], apex], t));
    }
    Ok(())
}

fn local_point(c: Corner, psi: f64, rel_log: f64) -> [f64; 2] {
    let w = AxiMesh::global_angle(c, psi);
    let r = rel_log.exp();
    [r * w.cos(), r * w.sin()]
}

fn add_ring(b: &mut Builder, core: &Core, angles: &[f64], log_rho: f64) -> Vec<usize> {
    let rho = log_rho.exp();
    angles
        .iter()
        .map(|&a| {
            let p = corner_point(core.apex, rho, core.corner, a);
            b.new_vertex(p, PolarFrame { corner: core.corner, log_rho, angle: a })
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn quads(b: &mut Builder, c: Corner, outer: &[usize], inner: &[usize], angles: &[f64], regions: &[Region], lo: f64, li: f64) {
    for j in 0..regions.len() {
        let po = [local_point(c, angles[j], 0.0), local_point(c, angles[j + 1], 0.0)];
        let pi = [local_point(c, angles[j], li - lo), local_point(c, angles[j + 1], li - lo)];
        b.triangle([outer[j], inner[j], inner[j + 1]], regions[j], [po[0], pi[0], pi[1]]);
        b.triangle([outer[j], inner[j + 1], outer[j + 1]], regions[j], [po[0], pi[1], po[1]]);
    }
}

/// Connects a fine ring to a coarser one sector by sector.
#[allow(clippy::too_many_arguments)]
fn zipper(
    b: &mut Builder,
    c: Corner,
    fine: &[usize],
    fa: &[f64],
    coarse: &[usize],
    ca: &[f64],
    fb: &[usize; 4],
    cb: &[usize; 4],
    regions: &[Region],
    lf: f64,
    lc: f64,
) {
    for sec in 0..3 {
        let region = regions[fb[sec]];
        let (mut i, mut j) = (fb[sec], cb[sec]);
        let (ie, je) = (fb[sec + 1], cb[sec + 1]);
        while i < ie || j < je {
            let advance_fine = if i == ie {
                false
            } else if j == je {
                true
            } else {
                fa[i + 1] <= ca[j + 1] + 1e-12
            };
            if advance_fine {
                let loc = [local_point(c, fa[i], 0.0), local_point(c, fa[i + 1], 0.0), local_point(c, ca[j], lc - lf)];
                b.triangle([fine[i], fine[i + 1], coarse[j]], region, loc);
                i += 1;
            } else {
                let loc = [local_point(c, fa[i], 0.0), local_point(c, ca[j], lc - lf), local_point(c, ca[j + 1], lc - lf)];
                b.triangle([fine[i], coarse[j], coarse[j + 1]], region, loc);
                j += 1;
            }
        }
    }
}
