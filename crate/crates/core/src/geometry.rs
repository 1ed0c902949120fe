//! Planar frameworks of the four-agent 2-cycles formation.
//!
//! Edge convention: `z1 = x2 - x1`, `z2 = x3 - x2`, `z3 = x1 - x3`,
//! `z4 = x3 - x4`, `z5 = x4 - x1`. Agent 1 follows agents 2 and 4, agents 2
//! and 4 follow agent 3, agent 3 follows agent 1.
//!
//! Target edge lengths are stored squared ([`TargetsSquared`]) so that the
//! edge errors `e_i = z_i . z_i - s_i` are affine in the targets.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance below which a circle intersection is treated as tangential.
pub const TANGENCY_TOL: f64 = 1e-10;
/// Default relative tolerance for `z1 x z5` when testing parallelism.
pub const PARALLEL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("targets not in L: {0}")]
    NotInL(String),
    #[error("agents 1 and 3 coincide (s3 = 0); the gauge chart is undefined")]
    CoincidentAnchors,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the planar cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `[[0, 1], [-1, 0]] * self`.
    pub fn perp(self) -> Vec2 {
        Vec2::new(self.y, -self.x)
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        Vec2::new(self * v.x, self * v.y)
    }
}

/// Positions of agents 1..4.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Framework {
    pub pos: [Vec2; 4],
}

impl Framework {
    pub fn new(x1: Vec2, x2: Vec2, x3: Vec2, x4: Vec2) -> Self {
        Self { pos: [x1, x2, x3, x4] }
    }

    /// Packs positions as `[x1x, x1y, x2x, ..., x4y]`.
    pub fn to_array(&self) -> [f64; 8] {
        let mut out = [0.0; 8];
        for (i, p) in self.pos.iter().enumerate() {
            out[2 * i] = p.x;
            out[2 * i + 1] = p.y;
        }
        out
    }

    pub fn from_slice(v: &[f64]) -> Self {
        assert!(v.len() >= 8, "framework needs 8 coordinates");
        Self {
            pos: std::array::from_fn(|i| Vec2::new(v[2 * i], v[2 * i + 1])),
        }
    }

    pub fn edges(&self) -> EdgeVectors {
        edges(self)
    }

    pub fn translated(&self, t: Vec2) -> Self {
        Self {
            pos: self.pos.map(|p| p + t),
        }
    }

    pub fn rotated(&self, angle: f64) -> Self {
        Self {
            pos: self.pos.map(|p| p.rotate(angle)),
        }
    }

    pub fn centroid(&self) -> Vec2 {
        let mut c = Vec2::ZERO;
        for p in self.pos {
            c += p;
        }
        0.25 * c
    }

    pub fn max_abs(&self) -> f64 {
        self.to_array().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.pos.iter().all(|p| p.is_finite())
    }
}

/// The five edge vectors `z1..z5`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeVectors {
    pub z: [Vec2; 5],
}

impl EdgeVectors {
    pub fn from_slice(v: &[f64]) -> Self {
        assert!(v.len() >= 10, "edge vectors need 10 coordinates");
        Self {
            z: std::array::from_fn(|i| Vec2::new(v[2 * i], v[2 * i + 1])),
        }
    }

    pub fn to_array(&self) -> [f64; 10] {
        let mut out = [0.0; 10];
        for (i, z) in self.z.iter().enumerate() {
            out[2 * i] = z.x;
            out[2 * i + 1] = z.y;
        }
        out
    }

    /// Residuals of `z1+z2+z3 = 0` and `z3+z4+z5 = 0`.
    pub fn cycle_residuals(&self) -> (Vec2, Vec2) {
        let [z1, z2, z3, z4, z5] = self.z;
        (z1 + z2 + z3, z3 + z4 + z5)
    }

    pub fn dot15(&self) -> f64 {
        self.z[0].dot(self.z[4])
    }
}

pub fn edges(f: &Framework) -> EdgeVectors {
    let [x1, x2, x3, x4] = f.pos;
    EdgeVectors {
        z: [x2 - x1, x3 - x2, x1 - x3, x3 - x4, x4 - x1],
    }
}

/// Squared target edge lengths `s1..s5`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetsSquared(pub [f64; 5]);

impl TargetsSquared {
    pub fn new(s: [f64; 5]) -> Self {
        Self(s)
    }

    /// Builds targets from plain edge lengths by squaring them.
    pub fn from_lengths(l: [f64; 5]) -> Self {
        Self(l.map(|v| v * v))
    }

    pub fn get(&self, edge: usize) -> f64 {
        self.0[edge - 1]
    }

    pub fn lengths(&self) -> [f64; 5] {
        self.0.map(|v| v.max(0.0).sqrt())
    }

    /// Returns a copy with `delta` added to the target of `edge` (1-based).
    pub fn shifted(&self, edge: usize, delta: f64) -> Self {
        let mut s = self.0;
        s[edge - 1] += delta;
        Self(s)
    }

    /// Both triangles (1,2,3) and (3,4,5) satisfy the closed triangle inequality.
    pub fn in_l(&self) -> bool {
        self.l_violation().is_none()
    }

    /// Strict triangle inequalities and all targets positive.
    pub fn in_l0(&self) -> bool {
        if self.0.iter().any(|v| !(*v > 0.0)) {
            return false;
        }
        let l = self.lengths();
        strict_triangle(l[0], l[1], l[2]) && strict_triangle(l[2], l[3], l[4])
    }

    fn l_violation(&self) -> Option<String> {
        if let Some(i) = self.0.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Some(format!("s{} = {} is negative or not finite", i + 1, self.0[i]));
        }
        let l = self.lengths();
        if !closed_triangle(l[0], l[1], l[2]) {
            return Some(format!(
                "triangle (|z1|,|z2|,|z3|) = ({:.6}, {:.6}, {:.6}) violates the triangle inequality",
                l[0], l[1], l[2]
            ));
        }
        if !closed_triangle(l[2], l[3], l[4]) {
            return Some(format!(
                "triangle (|z3|,|z4|,|z5|) = ({:.6}, {:.6}, {:.6}) violates the triangle inequality",
                l[2], l[3], l[4]
            ));
        }
        None
    }
}

fn closed_triangle(a: f64, b: f64, c: f64) -> bool {
    let slack = TANGENCY_TOL * (a + b + c).max(1.0);
    a + b + slack >= c && a + c + slack >= b && b + c + slack >= a
}

fn strict_triangle(a: f64, b: f64, c: f64) -> bool {
    let slack = TANGENCY_TOL * (a + b + c).max(1.0);
    a + b > c + slack && a + c > b + slack && b + c > a + slack
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Errors(pub [f64; 5]);

impl Errors {
    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, e| m.max(e.abs()))
    }
}

pub fn errors_of(z: &EdgeVectors, s: &TargetsSquared) -> Errors {
    Errors(std::array::from_fn(|i| z.z[i].norm_sq() - s.0[i]))
}

/// Gauge-fixed framework: `x1 = (0, 0)`, `x3 = (0, -ell3)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeChart {
    pub x2: Vec2,
    pub x4: Vec2,
    pub ell3: f64,
}

impl GaugeChart {
    pub fn new(x21: f64, x22: f64, x41: f64, x42: f64, ell3: f64) -> Self {
        Self {
            x2: Vec2::new(x21, x22),
            x4: Vec2::new(x41, x42),
            ell3,
        }
    }

    pub fn x3(&self) -> Vec2 {
        Vec2::new(0.0, -self.ell3)
    }

    pub fn framework(&self) -> Framework {
        Framework::new(Vec2::ZERO, self.x2, self.x3(), self.x4)
    }

    pub fn edges(&self) -> EdgeVectors {
        edges(&self.framework())
    }

    /// The squared edge lengths realised by this chart.
    pub fn targets(&self) -> TargetsSquared {
        let z = self.edges();
        TargetsSquared(z.z.map(|v| v.norm_sq()))
    }

    pub fn reflect_r1(&self) -> Self {
        Self {
            x2: Vec2::new(-self.x2.x, self.x2.y),
            ..*self
        }
    }

    pub fn reflect_r2(&self) -> Self {
        Self {
            x4: Vec2::new(-self.x4.x, self.x4.y),
            ..*self
        }
    }

    /// Mirror of `x2` and `x4` across the line through `x1` perpendicular to `z3`.
    pub fn reflect_r3(&self) -> Self {
        Self {
            x2: Vec2::new(self.x2.x, -self.x2.y),
            x4: Vec2::new(self.x4.x, -self.x4.y),
            ell3: self.ell3,
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            x2: k * self.x2,
            x4: k * self.x4,
            ell3: k * self.ell3,
        }
    }

    /// Coordinates `[x21, x22, x41, x42, ell3]`.
    pub fn to_array(&self) -> [f64; 5] {
        [self.x2.x, self.x2.y, self.x4.x, self.x4.y, self.ell3]
    }

    pub fn distance(&self, other: &GaugeChart) -> f64 {
        let a = self.to_array();
        let b = other.to_array();
        a.iter()
            .zip(b.iter())
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt()
    }

    /// Tests whether `x1 = 0` lies in the closed convex hull of `x2, x3, x4`.
    pub fn origin_in_hull(&self) -> bool {
        origin_in_triangle(self.x2, self.x3(), self.x4)
    }

    /// `|z1 x z5| <= tol * |z1| |z5|`.
    pub fn is_aligned(&self, tol: f64) -> bool {
        let c = self.x2.cross(self.x4).abs();
        c <= tol * self.x2.norm() * self.x4.norm()
    }
}

/// A gauge chart together with the rigid motion that maps it back to the
/// original framework: `original = rotate(chart, angle) + origin`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaugeFix {
    pub chart: GaugeChart,
    pub angle: f64,
    pub origin: Vec2,
}

impl GaugeFix {
    pub fn restore(&self) -> Framework {
        self.chart.framework().rotated(self.angle).translated(self.origin)
    }
}

/// Moves `x1` to the origin and rotates `x3` onto the negative vertical axis.
pub fn gauge_fix(f: &Framework) -> Result<GaugeFix, GeometryError> {
    let origin = f.pos[0];
    let rel = f.translated(-origin);
    let x3 = rel.pos[2];
    let ell3 = x3.norm();
    if ell3 <= 1e-14 * (1.0 + f.max_abs()) {
        return Err(GeometryError::CoincidentAnchors);
    }
    // angle of x3 measured from the negative vertical axis
    let angle = x3.x.atan2(-x3.y);
    let g = rel.rotated(-angle);
    Ok(GaugeFix {
        chart: GaugeChart {
            x2: g.pos[1],
            x4: g.pos[3],
            ell3,
        },
        angle,
        origin,
    })
}

fn origin_in_triangle(a: Vec2, b: Vec2, c: Vec2) -> bool {
    let area = (b - a).cross(c - a);
    if area.abs() < 1e-300 {
        return false;
    }
    // barycentric coordinates of the origin
    let l_a = b.cross(c) / area;
    let l_b = c.cross(a) / area;
    let l_c = a.cross(b) / area;
    let eps = -1e-12;
    l_a >= eps && l_b >= eps && l_c >= eps
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttachStatus {
    Regular,
    /// At least one circle intersection is tangential.
    Degenerate,
    NotInL,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub charts: Vec<GaugeChart>,
    pub status: AttachStatus,
    pub diagnostic: Option<String>,
}

/// Intersects `|p| = a` with `|p - (0, -ell3)| = b`; returns `(|p_x|, p_y, tangent)`.
fn circle_pair(a2: f64, b2: f64, ell3: f64) -> Option<(f64, f64, bool)> {
    let py = (b2 - a2 - ell3 * ell3) / (2.0 * ell3);
    let px2 = a2 - py * py;
    let scale = a2.max(b2).max(ell3 * ell3).max(1e-300);
    if px2 < -TANGENCY_TOL * scale {
        return None;
    }
    let tangent = px2.abs() <= TANGENCY_TOL * scale;
    Some((px2.max(0.0).sqrt(), py, tangent))
}

/// All gauge-fixed frameworks realising `s`, ordered by the sign pair
/// `(sign x21, sign x41)` as `(+,+), (+,-), (-,+), (-,-)`.
pub fn attach_frameworks(s: &TargetsSquared) -> Attachment {
    if let Some(msg) = s.l_violation() {
        return Attachment {
            charts: Vec::new(),
            status: AttachStatus::NotInL,
            diagnostic: Some(msg),
        };
    }
    let ell3 = s.0[2].sqrt();
    if ell3 <= 0.0 {
        return Attachment {
            charts: Vec::new(),
            status: AttachStatus::NotInL,
            diagnostic: Some("s3 = 0: agents 1 and 3 coincide".into()),
        };
    }
    let (Some(p2), Some(p4)) = (circle_pair(s.0[0], s.0[1], ell3), circle_pair(s.0[4], s.0[3], ell3))
    else {
        return Attachment {
            charts: Vec::new(),
            status: AttachStatus::NotInL,
            diagnostic: Some("circle intersection is empty".into()),
        };
    };
    let mut charts = Vec::with_capacity(4);
    let signs2: &[f64] = if p2.2 { &[1.0] } else { &[1.0, -1.0] };
    let signs4: &[f64] = if p4.2 { &[1.0] } else { &[1.0, -1.0] };
    for &a in signs2 {
        for &b in signs4 {
            charts.push(GaugeChart::new(a * p2.0, p2.1, b * p4.0, p4.1, ell3));
        }
    }
    let degenerate = p2.2 || p4.2;
    Attachment {
        charts,
        status: if degenerate {
            AttachStatus::Degenerate
        } else {
            AttachStatus::Regular
        },
        diagnostic: degenerate.then(|| "tangential circle intersection".to_string()),
    }
}

/// Whether some framework attached to `s` has agent 1 in the closed convex hull
/// of agents 2, 3, 4.
pub fn in_lc(s: &TargetsSquared) -> Result<bool, GeometryError> {
    if s.0[2] <= 0.0 {
        return Err(GeometryError::CoincidentAnchors);
    }
    let att = attach_frameworks(s);
    if att.status == AttachStatus::NotInL {
        return Err(GeometryError::NotInL(att.diagnostic.unwrap_or_default()));
    }
    Ok(att.charts.iter().any(|c| c.origin_in_hull()))
}

/// An attached chart with `z1` parallel to `z5`, if one exists.
pub fn aligned_member(s: &TargetsSquared, tol: f64) -> Option<GaugeChart> {
    attach_frameworks(s)
        .charts
        .into_iter()
        .find(|c| c.is_aligned(tol))
}

/// The four charts generated from `c` by `R1` and `R2`.
pub fn r1_r2_orbit(c: &GaugeChart) -> [GaugeChart; 4] {
    [*c, c.reflect_r1(), c.reflect_r2(), c.reflect_r1().reflect_r2()]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Framework {
        Framework::new(
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        )
    }

    #[test]
    fn square_edges() {
        let z = edges(&unit_square());
        let want = [(1.0, 0.0), (0.0, 1.0), (-1.0, -1.0), (1.0, 0.0), (0.0, 1.0)];
        for (zi, w) in z.z.iter().zip(want) {
            assert_eq!((zi.x, zi.y), w);
        }
        let e = errors_of(&z, &TargetsSquared([1.0, 1.0, 2.0, 1.0, 1.0]));
        assert_eq!(e.0, [0.0; 5]);
    }

    #[test]
    fn superposed_agents() {
        let p = Vec2::new(0.3, -2.0);
        let z = edges(&Framework::new(p, p, p, p));
        assert!(z.z.iter().all(|v| *v == Vec2::ZERO));
        let e = errors_of(&z, &TargetsSquared([1.0, 1.0, 2.0, 1.0, 1.0]));
        assert_eq!(e.0, [-1.0, -1.0, -2.0, -1.0, -1.0]);
    }

    #[test]
    fn square_targets_attach_four_charts() {
        let att = attach_frameworks(&TargetsSquared([1.0, 1.0, 2.0, 1.0, 1.0]));
        assert_eq!(att.status, AttachStatus::Regular);
        assert_eq!(att.charts.len(), 4);
        let h = 0.5_f64.sqrt();
        let signs = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
        for (c, (a, b)) in att.charts.iter().zip(signs) {
            assert!((c.x2.x - a * h).abs() < 1e-15 && (c.x2.y + h).abs() < 1e-15);
            assert!((c.x4.x - b * h).abs() < 1e-15 && (c.x4.y + h).abs() < 1e-15);
            assert!((c.ell3 - 2.0_f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn infeasible_targets() {
        let att = attach_frameworks(&TargetsSquared([100.0, 1.0, 1.0, 1.0, 1.0]));
        assert!(att.charts.is_empty());
        assert_eq!(att.status, AttachStatus::NotInL);
        assert!(att.diagnostic.is_some());
        assert!(matches!(
            in_lc(&TargetsSquared([100.0, 1.0, 1.0, 1.0, 1.0])),
            Err(GeometryError::NotInL(_))
        ));
    }

    #[test]
    fn tangency_is_flagged() {
        // |z1| + |z2| = |z3|: 1 + 2 = 3
        let s = TargetsSquared::from_lengths([1.0, 2.0, 3.0, 2.0, 2.0]);
        let att = attach_frameworks(&s);
        assert_eq!(att.status, AttachStatus::Degenerate);
        assert_eq!(att.charts.len(), 2);
        assert!(!s.in_l0());
        assert!(s.in_l());
    }

    #[test]
    fn coincident_anchors() {
        let s = TargetsSquared([1.0, 1.0, 0.0, 1.0, 1.0]);
        assert_eq!(in_lc(&s), Err(GeometryError::CoincidentAnchors));
    }

    #[test]
    fn square_hull_chart() {
        // agent 1 is a corner of the square, outside the triangle of the other three
        let h = 0.5_f64.sqrt();
        let c = GaugeChart::new(h, -h, -h, -h, 2.0_f64.sqrt());
        assert!(!c.origin_in_hull());
        assert!(!in_lc(&TargetsSquared([1.0, 1.0, 2.0, 1.0, 1.0])).unwrap());
        // pulling agent 1 inside flips the verdict
        let inner = GaugeChart::new(1.0, 1.0, -1.0, 1.0, 2.0);
        assert!(inner.origin_in_hull());
    }

    #[test]
    fn hull_counterexample_targets_in_lc() {
        // lengths with |x3 - x4| = 3.3 and |x4 - x1| = 1.4
        let s = TargetsSquared::from_lengths([2.0, 2.6, 2.0, 3.3, 1.4]);
        assert!(in_lc(&s).unwrap());
        // the unswapped assignment has agent 1 outside every hull
        assert!(!in_lc(&TargetsSquared([2.0, 2.6, 2.0, 1.4, 3.3])).unwrap());
        assert!(!in_lc(&TargetsSquared::from_lengths([2.0, 2.6, 2.0, 1.4, 3.3])).unwrap());
    }

    #[test]
    fn aligned_member_s0() {
        let s = TargetsSquared([0.45, 0.85, 1.0, 1.6, 1.8]);
        let c = aligned_member(&s, PARALLEL_TOL).expect("aligned chart");
        assert!((c.x2.x - 0.6).abs() < 1e-12 && (c.x2.y + 0.3).abs() < 1e-12);
        assert!((c.x4.x - 1.2).abs() < 1e-12 && (c.x4.y + 0.6).abs() < 1e-12);
        let z = c.edges();
        assert!((z.z[4] - 2.0 * z.z[0]).norm() < 1e-12);
    }

    #[test]
    fn square_family_alignment() {
        let att = attach_frameworks(&TargetsSquared([1.0, 1.0, 2.0, 1.0, 1.0]));
        // the two square charts are not aligned
        assert!(!att.charts[1].is_aligned(PARALLEL_TOL));
        assert!(!att.charts[2].is_aligned(PARALLEL_TOL));
        // the same-sign charts put agents 2 and 4 on top of each other
        assert!(att.charts[0].is_aligned(PARALLEL_TOL));
        assert_eq!(att.charts[0].x2, att.charts[0].x4);
    }

    #[test]
    fn identical_vectors_are_aligned() {
        // s1 = s5, s2 = s4: the (+,+) chart has x2 = x4
        let s = TargetsSquared([1.0, 1.5, 1.2, 1.5, 1.0]);
        let c = aligned_member(&s, PARALLEL_TOL).unwrap();
        assert!((c.x2 - c.x4).norm() < 1e-14);
    }

    #[test]
    fn r3_preserves_s1_s3_s5_and_dot() {
        let c = GaugeChart::new(0.4, -0.9, 1.3, 0.2, 1.1);
        let r = c.reflect_r3();
        let (a, b) = (c.targets(), r.targets());
        for i in [0, 2, 4] {
            assert!((a.0[i] - b.0[i]).abs() < 1e-14);
        }
        assert!((c.x2.dot(c.x4) - r.x2.dot(r.x4)).abs() < 1e-14);
        assert!((a.0[1] - b.0[1]).abs() > 1e-3);
        assert!((a.0[3] - b.0[3]).abs() > 1e-3);
    }

    #[test]
    fn gauge_fix_round_trip() {
        let f = Framework::new(
            Vec2::new(0.3, 1.0),
            Vec2::new(2.0, 0.5),
            Vec2::new(-0.7, 2.2),
            Vec2::new(1.1, -1.4),
        );
        let g = gauge_fix(&f).unwrap();
        assert!(g.chart.ell3 > 0.0);
        let back = g.restore();
        for (p, q) in back.pos.iter().zip(f.pos.iter()) {
            assert!((*p - *q).norm() < 1e-13);
        }
        let s = TargetsSquared(edges(&f).z.map(|v| v.norm_sq()));
        assert!(errors_of(&g.chart.edges(), &s).max_abs() < 1e-13);
    }
}
