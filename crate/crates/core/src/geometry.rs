//! The periodicity cell in axisymmetric coordinates `(y1, r)`.
//!
//! The cell is the cylinder `(0,1) x D_{R0}`. The membrane sits at `r = r0`;
//! its unmyelinated part (the node) is `{r0} x (a,b)` and the sheath covers the
//! rest of the period, bounded from outside by an outline running from
//! `B = (b, r0)` to `A + (1, 0) = (a + 1, r0)`.
//!
//! Meshes use the window `y1 in [s, s + 1]` with the seam inside the sheath, so
//! both corners are interior points of the window.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::quad;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("contact angle must lie strictly between 0 and pi")]
    AngleOutOfRange,
    #[error("node interval must satisfy 0 < a < b < 1")]
    DegenerateNode,
    #[error("invalid myelin outline: {0}")]
    MyelinCurveInvalid(&'static str),
    #[error("radii and conductivities must be positive with r0 < R0")]
    NonPositive,
    #[error("myelin outline is not a graph over y1")]
    QuadratureFailure,
}

/// One of the two points where the sheath meets the membrane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Corner {
    A,
    B,
}

/// Outline of the sheath.
#[derive(Debug, Clone, PartialEq)]
pub enum MyelinShape {
    /// Bare membrane; requires `a = 0`, `b = 1`.
    None,
    /// Straight rays at the contact angles, a flat top at `r0 + thickness`
    /// and circular fillets at the two kinks.
    Bulge { thickness: f64 },
    /// Piecewise-linear outline from `B` to `A + (1, 0)` in `(y1, r)`.
    Polyline(Vec<[f64; 2]>),
}

/// A piece of the outline, parameterized on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Piece {
    Line { p: [f64; 2], q: [f64; 2] },
    /// `c + radius (cos t, sin t)` for `t` from `t0` to `t1`.
    Arc { c: [f64; 2], radius: f64, t0: f64, t1: f64 },
}

impl Piece {
    pub fn point(&self, s: f64) -> [f64; 2] {
        match *self {
            Piece::Line { p, q } => [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])],
            Piece::Arc { c, radius, t0, t1 } => {
                let t = t0 + s * (t1 - t0);
                [c[0] + radius * t.cos(), c[1] + radius * t.sin()]
            }
        }
    }

    pub fn length(&self) -> f64 {
        match *self {
            Piece::Line { p, q } => (q[0] - p[0]).hypot(q[1] - p[1]),
            Piece::Arc { radius, t0, t1, .. } => radius * (t1 - t0).abs(),
        }
    }

    /// `∫ r²/2 dy1` along the piece.
    fn moment(&self) -> f64 {
        match *self {
            Piece::Line { p, q } => (q[0] - p[0]) * (p[1] * p[1] + p[1] * q[1] + q[1] * q[1]) / 6.0,
            Piece::Arc { c, radius, t0, t1 } => {
                let rule = quad::gauss_legendre(24);
                quad::composite_gauss(
                    |t| {
                        let r = c[1] + radius * t.sin();
                        0.5 * r * r * (-radius * t.sin())
                    },
                    t0,
                    t1,
                    4,
                    &rule,
                )
            }
        }
    }

    fn distance(&self, x: [f64; 2]) -> f64 {
        match *self {
            Piece::Line { p, q } => {
                let d = [q[0] - p[0], q[1] - p[1]];
                let l2 = d[0] * d[0] + d[1] * d[1];
                let s = (((x[0] - p[0]) * d[0] + (x[1] - p[1]) * d[1]) / l2).clamp(0.0, 1.0);
                let f = self.point(s);
                (x[0] - f[0]).hypot(x[1] - f[1])
            }
            Piece::Arc { c, radius, t0, t1 } => {
                let t = (x[1] - c[1]).atan2(x[0] - c[0]);
                let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
                let mut inside = false;
                for k in -1..=1 {
                    let tt = t + 2.0 * PI * k as f64;
                    if tt >= lo && tt <= hi {
                        inside = true;
                    }
                }
                if inside {
                    ((x[0] - c[0]).hypot(x[1] - c[1]) - radius).abs()
                } else {
                    let e0 = self.point(0.0);
                    let e1 = self.point(1.0);
                    (x[0] - e0[0]).hypot(x[1] - e0[1]).min((x[0] - e1[0]).hypot(x[1] - e1[1]))
                }
            }
        }
    }

    /// Parameters in `[0,1]` where the piece crosses `y1 = x`.
    fn crossings(&self, x: f64) -> Vec<f64> {
        match *self {
            Piece::Line { p, q } => {
                let d = q[0] - p[0];
                if d == 0.0 {
                    return Vec::new();
                }
                let s = (x - p[0]) / d;
                if (0.0..=1.0).contains(&s) {
                    vec![s]
                } else {
                    Vec::new()
                }
            }
            Piece::Arc { c, radius, t0, t1 } => {
                let cs = (x - c[0]) / radius;
                if cs.abs() > 1.0 {
                    return Vec::new();
                }
                let base = cs.acos();
                let mut out = Vec::new();
                for cand in [base, -base] {
                    for k in -2..=2 {
                        let t = cand + 2.0 * PI * k as f64;
                        let s = (t - t0) / (t1 - t0);
                        if (0.0..=1.0).contains(&s) && !out.iter().any(|o: &f64| (o - s).abs() < 1e-12) {
                            out.push(s);
                        }
                    }
                }
                out
            }
        }
    }

    /// Splits the piece at parameter `s`.
    fn split(&self, s: f64) -> (Piece, Piece) {
        match *self {
            Piece::Line { p, q } => {
                let m = self.point(s);
                (Piece::Line { p, q: m }, Piece::Line { p: m, q })
            }
            Piece::Arc { c, radius, t0, t1 } => {
                let tm = t0 + s * (t1 - t0);
                (Piece::Arc { c, radius, t0, t1: tm }, Piece::Arc { c, radius, t0: tm, t1 })
            }
        }
    }

    fn shifted(&self, dy: f64) -> Piece {
        match *self {
            Piece::Line { p, q } => Piece::Line { p: [p[0] + dy, p[1]], q: [q[0] + dy, q[1]] },
            Piece::Arc { c, radius, t0, t1 } => Piece::Arc { c: [c[0] + dy, c[1]], radius, t0, t1 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellGeometry {
    pub r0: f64,
    /// Outer cell radius `R0`.
    pub r_outer: f64,
    pub a: f64,
    pub b: f64,
    pub phi_a: f64,
    pub phi_b: f64,
    pub myelin: MyelinShape,
    pub sigma_i: f64,
    pub sigma_e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMeasures {
    pub vol_y: f64,
    pub vol_yi: f64,
    pub vol_ye: f64,
    pub vol_ym: f64,
    pub area_gamma: f64,
}

impl CellGeometry {
    /// Geometry used throughout the tests: `r0 = 0.5`, `R0 = 1`, node
    /// `(0.35, 0.65)`, right-angle contacts, sheath thickness `0.2`, unit
    /// conductivities.
    pub fn reference() -> Self {
        CellGeometry {
            r0: 0.5,
            r_outer: 1.0,
            a: 0.35,
            b: 0.65,
            phi_a: PI / 2.0,
            phi_b: PI / 2.0,
            myelin: MyelinShape::Bulge { thickness: 0.2 },
            sigma_i: 1.0,
            sigma_e: 1.0,
        }
    }

    /// Bare axon: the node covers the whole membrane.
    pub fn bare(r0: f64, r_outer: f64, sigma_i: f64, sigma_e: f64) -> Self {
        CellGeometry {
            r0,
            r_outer,
            a: 0.0,
            b: 1.0,
            phi_a: PI / 2.0,
            phi_b: PI / 2.0,
            myelin: MyelinShape::None,
            sigma_i,
            sigma_e,
        }
    }

    pub fn has_myelin(&self) -> bool {
        !matches!(self.myelin, MyelinShape::None)
    }

    pub fn validate(self) -> Result<Self, GeometryError> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !(pos(self.r0) && pos(self.r_outer) && pos(self.sigma_i) && pos(self.sigma_e))
            || self.r0 >= self.r_outer
        {
            return Err(GeometryError::NonPositive);
        }
        if !self.has_myelin() {
            if self.a != 0.0 || self.b != 1.0 {
                return Err(GeometryError::DegenerateNode);
            }
            return Ok(self);
        }
        if !(self.a > 0.0 && self.a < self.b && self.b < 1.0) {
            return Err(GeometryError::DegenerateNode);
        }
        for phi in [self.phi_a, self.phi_b] {
            if !(phi > 0.0 && phi < PI) {
                return Err(GeometryError::AngleOutOfRange);
            }
        }
        let outline = self.outline()?;
        let span = 1.0 - (self.b - self.a);
        for piece in &outline {
            let n = 64;
            for k in 0..=n {
                let s = k as f64 / n as f64;
                let p = piece.point(s);
                let end = (p[0] - self.b).hypot(p[1] - self.r0) < 1e-12
                    || (p[0] - self.a - 1.0).hypot(p[1] - self.r0) < 1e-12;
                if !end && (p[1] <= self.r0 || p[1] >= self.r_outer) {
                    return Err(GeometryError::MyelinCurveInvalid("outline leaves the band r0 < r < R0"));
                }
                if p[0] < self.b - span || p[0] > self.a + 1.0 + span {
                    return Err(GeometryError::MyelinCurveInvalid("outline wanders past a neighbouring node"));
                }
            }
        }
        if let MyelinShape::Polyline(pts) = &self.myelin {
            let segs: Vec<([f64; 2], [f64; 2])> = pts.windows(2).map(|w| (w[0], w[1])).collect();
            for i in 0..segs.len() {
                for j in i + 2..segs.len() {
                    if segments_intersect(segs[i], segs[j]) {
                        return Err(GeometryError::MyelinCurveInvalid("outline intersects itself"));
                    }
                }
            }
        }
        let s1 = self.window_start() + 1.0;
        let n_cross: usize = outline.iter().map(|p| p.crossings(s1).len()).sum();
        if n_cross != 1 {
            return Err(GeometryError::MyelinCurveInvalid("outline must cross the seam exactly once"));
        }
        Ok(self)
    }

    pub fn corner_point(&self, c: Corner) -> [f64; 2] {
        match c {
            Corner::A => [self.a, self.r0],
            Corner::B => [self.b, self.r0],
        }
    }

    pub fn contact_angle(&self, c: Corner) -> f64 {
        match c {
            Corner::A => self.phi_a,
            Corner::B => self.phi_b,
        }
    }

    /// Global direction angle of the sheath ray leaving the corner.
    pub fn ray_angle(&self, c: Corner) -> f64 {
        match c {
            Corner::A => PI - self.phi_a,
            Corner::B => self.phi_b,
        }
    }

    /// Left edge `s` of the meshing window `[s, s + 1]`.
    pub fn window_start(&self) -> f64 {
        match &self.myelin {
            MyelinShape::None => 0.0,
            MyelinShape::Bulge { .. } => match self.outline().ok().and_then(|p| p.get(2).copied()) {
                Some(Piece::Line { p, q }) => 0.5 * (p[0] + q[0]) - 1.0,
                _ => 0.5 * (self.a + self.b - 1.0),
            },
            MyelinShape::Polyline(_) => 0.5 * (self.a + self.b - 1.0),
        }
    }

    /// Outline pieces from `B` to `A + (1, 0)`; empty for a bare axon.
    pub fn outline(&self) -> Result<Vec<Piece>, GeometryError> {
        match &self.myelin {
            MyelinShape::None => Ok(Vec::new()),
            MyelinShape::Bulge { thickness } => self.bulge(*thickness),
            MyelinShape::Polyline(pts) => {
                if pts.len() < 3 {
                    return Err(GeometryError::MyelinCurveInvalid("polyline needs at least three points"));
                }
                let b = [self.b, self.r0];
                let a1 = [self.a + 1.0, self.r0];
                let first = pts[0];
                let last = pts[pts.len() - 1];
                if (first[0] - b[0]).hypot(first[1] - b[1]) > 1e-9 || (last[0] - a1[0]).hypot(last[1] - a1[1]) > 1e-9 {
                    return Err(GeometryError::MyelinCurveInvalid("polyline must run from B to A + (1, 0)"));
                }
                let ang_b = (pts[1][1] - b[1]).atan2(pts[1][0] - b[0]);
                let q = pts[pts.len() - 2];
                let ang_a = (q[1] - a1[1]).atan2(q[0] - a1[0]);
                if (ang_b - self.ray_angle(Corner::B)).abs() > 1e-6 || (ang_a - self.ray_angle(Corner::A)).abs() > 1e-6 {
                    return Err(GeometryError::MyelinCurveInvalid("polyline end segments disagree with the contact angles"));
                }
                let mut out = Vec::with_capacity(pts.len() - 1);
                for k in 0..pts.len() - 1 {
                    let p = if k == 0 { b } else { pts[k] };
                    let q = if k + 2 == pts.len() { a1 } else { pts[k + 1] };
                    out.push(Piece::Line { p, q });
                }
                Ok(out)
            }
        }
    }

    fn bulge(&self, t: f64) -> Result<Vec<Piece>, GeometryError> {
        if !(t > 0.0 && self.r0 + t < self.r_outer) {
            return Err(GeometryError::MyelinCurveInvalid("bulge thickness must lie in (0, R0 - r0)"));
        }
        let (pa, pb) = (self.phi_a, self.phi_b);
        if !(pa > 0.0 && pa < PI && pb > 0.0 && pb < PI) {
            return Err(GeometryError::AngleOutOfRange);
        }
        let top = self.r0 + t;
        let b = [self.b, self.r0];
        let a1 = [self.a + 1.0, self.r0];
        let db = [pb.cos(), pb.sin()];
        let da = [-pa.cos(), pa.sin()];
        let lb = t / pb.sin();
        let la = t / pa.sin();
        let kink_b = [b[0] + lb * db[0], top];
        let kink_a = [a1[0] + la * da[0], top];
        let flat = kink_a[0] - kink_b[0];
        if flat <= 0.0 {
            return Err(GeometryError::MyelinCurveInvalid("bulge rays cross before reaching the top"));
        }
        let tb = (0.5 * lb).min(0.4 * flat);
        let ta = (0.5 * la).min(0.4 * flat);
        let rb = tb / (0.5 * pb).tan();
        let ra = ta / (0.5 * pa).tan();
        let t1 = [kink_b[0] - tb * db[0], kink_b[1] - tb * db[1]];
        let t2 = [kink_b[0] + tb, top];
        let t3 = [kink_a[0] - ta, top];
        let t4 = [kink_a[0] - ta * da[0], kink_a[1] - ta * da[1]];
        Ok(vec![
            Piece::Line { p: b, q: t1 },
            Piece::Arc { c: [t2[0], top - rb], radius: rb, t0: pb + PI / 2.0, t1: PI / 2.0 },
            Piece::Line { p: t2, q: t3 },
            Piece::Arc { c: [t3[0], top - ra], radius: ra, t0: PI / 2.0, t1: PI / 2.0 - pa },
            Piece::Line { p: t4, q: a1 },
        ])
    }

    /// Length of the straight initial segment of the outline at a corner.
    pub fn straight_ray_length(&self, c: Corner) -> f64 {
        let Ok(pieces) = self.outline() else { return 0.0 };
        let piece = match c {
            Corner::B => pieces.first(),
            Corner::A => pieces.last(),
        };
        match piece {
            Some(p @ Piece::Line { .. }) => p.length(),
            _ => 0.0,
        }
    }

    /// Outline split at the seam and expressed in window coordinates:
    /// `(left, right)`, where `left` runs from the seam at `y1 = s` to `A` and
    /// `right` runs from `B` to the seam at `y1 = s + 1`.
    pub fn window_outline(&self) -> Result<(Vec<Piece>, Vec<Piece>), GeometryError> {
        let pieces = self.outline()?;
        if pieces.is_empty() {
            return Ok((Vec::new(), Vec::new()));
        }
        let s1 = self.window_start() + 1.0;
        let mut right = Vec::new();
        let mut left = Vec::new();
        let mut crossed = false;
        for p in pieces {
            if crossed {
                left.push(p.shifted(-1.0));
                continue;
            }
            let xs = p.crossings(s1);
            match xs.first() {
                Some(&s) if s >= 1.0 => {
                    right.push(p);
                    crossed = true;
                }
                Some(&s) if s <= 0.0 => {
                    left.push(p.shifted(-1.0));
                    crossed = true;
                }
                Some(&s) => {
                    let (u, w) = p.split(s);
                    right.push(u);
                    left.push(w.shifted(-1.0));
                    crossed = true;
                }
                None => right.push(p),
            }
        }
        if !crossed {
            return Err(GeometryError::MyelinCurveInvalid("outline never reaches the seam"));
        }
        Ok((left, right))
    }

    /// Radius at which the outline meets the seam.
    pub fn seam_radius(&self) -> Option<f64> {
        let (_, right) = self.window_outline().ok()?;
        right.last().map(|p| p.point(1.0)[1])
    }

    /// Outline radius above `y1` (unwrapped coordinates in `[b, a + 1]`),
    /// assuming the outline is a graph there.
    pub fn outline_height(&self, y1: f64) -> Result<f64, GeometryError> {
        let pieces = self.outline()?;
        let mut hits = Vec::new();
        for p in &pieces {
            for s in p.crossings(y1) {
                let r = p.point(s)[1];
                if !hits.iter().any(|h: &f64| (h - r).abs() < 1e-12) {
                    hits.push(r);
                }
            }
        }
        match hits.len() {
            1 => Ok(hits[0]),
            _ => Err(GeometryError::QuadratureFailure),
        }
    }

    /// Euclidean distance from a point in unwrapped coordinates to the outline.
    pub fn outline_distance(&self, x: [f64; 2]) -> f64 {
        let Ok(pieces) = self.outline() else { return f64::INFINITY };
        let mut d = f64::INFINITY;
        for p in &pieces {
            for shift in [-1.0, 0.0, 1.0] {
                d = d.min(p.shifted(shift).distance(x));
            }
        }
        d
    }

    pub fn measures(&self) -> CellMeasures {
        let vol_y = PI * self.r_outer * self.r_outer;
        let vol_yi = PI * self.r0 * self.r0;
        let area_gamma = 2.0 * PI * self.r0 * (self.b - self.a);
        let Ok((left, right)) = self.window_outline() else {
            return CellMeasures { vol_y, vol_yi, vol_ye: vol_y - vol_yi, vol_ym: 0.0, area_gamma };
        };
        if left.is_empty() {
            return CellMeasures { vol_y, vol_yi, vol_ye: vol_y - vol_yi, vol_ym: 0.0, area_gamma };
        }
        let r0sq = self.r0 * self.r0;
        let moment: f64 = self.outline().unwrap_or_default().iter().map(Piece::moment).sum();
        let vol_ym = 2.0 * PI * (moment - 0.5 * r0sq * (1.0 - (self.b - self.a)));
        // Extracellular region: Green's theorem around its window boundary,
        // the outline being split at the seam.
        let split: f64 = left.iter().chain(right.iter()).map(Piece::moment).sum();
        let vol_ye = 2.0 * PI * (0.5 * self.r_outer * self.r_outer - 0.5 * r0sq * (self.b - self.a) - split);
        CellMeasures { vol_y, vol_yi, vol_ye, vol_ym, area_gamma }
    }
}

/// Free-function form of [`CellGeometry::validate`].
pub fn validate(g: CellGeometry) -> Result<CellGeometry, GeometryError> {
    g.validate()
}

/// Free-function form of [`CellGeometry::measures`].
pub fn measures(g: &CellGeometry) -> CellMeasures {
    g.measures()
}

fn segments_intersect(s: ([f64; 2], [f64; 2]), t: ([f64; 2], [f64; 2])) -> bool {
    let orient = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let d1 = orient(t.0, t.1, s.0);
    let d2 = orient(t.0, t.1, s.1);
    let d3 = orient(s.0, s.1, t.0);
    let d4 = orient(s.0, s.1, t.1);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> CellGeometry {
        CellGeometry { a: 0.1, b: 0.3, ..CellGeometry::reference() }
    }

    #[test]
    fn validation_examples() {
        assert!(example().validate().is_ok());
        let g = CellGeometry { a: 0.3, b: 0.1, ..example() };
        assert_eq!(g.validate(), Err(GeometryError::DegenerateNode));
        let g = CellGeometry { phi_a: PI, ..example() };
        assert_eq!(g.validate(), Err(GeometryError::AngleOutOfRange));
        let g = CellGeometry { myelin: MyelinShape::Bulge { thickness: 0.6 }, ..example() };
        assert!(matches!(g.validate(), Err(GeometryError::MyelinCurveInvalid(_))));
    }

    #[test]
    fn bare_cell_measures() {
        let m = CellGeometry::bare(0.5, 1.0, 1.0, 1.0).validate().unwrap().measures();
        assert!((m.vol_yi - PI / 4.0).abs() < 1e-15);
        assert!((m.vol_ye - 3.0 * PI / 4.0).abs() < 1e-15);
        assert!((m.area_gamma - PI).abs() < 1e-15);
        assert_eq!(m.vol_ym, 0.0);
    }

    #[test]
    fn bulge_outline_is_continuous_and_tangent() {
        let g = CellGeometry { phi_a: 1.1, phi_b: 2.0, ..CellGeometry::reference() };
        let p = g.outline().unwrap();
        for w in p.windows(2) {
            let e = w[0].point(1.0);
            let s = w[1].point(0.0);
            assert!((e[0] - s[0]).abs() < 1e-14 && (e[1] - s[1]).abs() < 1e-14);
            let h = 1e-7;
            let d0 = sub(w[0].point(1.0), w[0].point(1.0 - h));
            let d1 = sub(w[1].point(h), w[1].point(0.0));
            let cross = d0[0] * d1[1] - d0[1] * d1[0];
            assert!(cross.abs() / (norm(d0) * norm(d1)) < 1e-6);
        }
    }

    #[test]
    fn window_split_keeps_both_corners_inside() {
        let g = CellGeometry::reference();
        let s = g.window_start();
        assert!(s < g.a && s + 1.0 > g.b);
        let (left, right) = g.window_outline().unwrap();
        let l0 = left[0].point(0.0);
        let r1 = right.last().unwrap().point(1.0);
        assert!((l0[0] - s).abs() < 1e-14 && (r1[0] - s - 1.0).abs() < 1e-14);
        assert!((l0[1] - r1[1]).abs() < 1e-14);
    }

    #[test]
    fn polyline_outline_is_accepted() {
        let g = CellGeometry {
            myelin: MyelinShape::Polyline(vec![[0.65, 0.5], [0.65, 0.7], [1.35, 0.7], [1.35, 0.5]]),
            ..CellGeometry::reference()
        };
        let g = g.validate().unwrap();
        let m = g.measures();
        // rectangle of width 0.7 and height 0.2 above r0 = 0.5
        let want = 2.0 * PI * 0.7 * (0.7f64 * 0.7 - 0.25) / 2.0;
        assert!((m.vol_ym - want).abs() < 1e-13);
    }

    fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
        [a[0] - b[0], a[1] - b[1]]
    }
    fn norm(a: [f64; 2]) -> f64 {
        a[0].hypot(a[1])
    }
}
