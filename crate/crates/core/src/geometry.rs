//! Convex polygons, half spaces and GJK-based separation in the plane.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for exact-geometry predicates (meters).
pub const EPS_GEOM: f64 = 1e-9;
/// Minimal strict clearance a returned separating half space must leave on
/// each side (meters).
pub const EPS_SEP: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon is not strictly convex and counter-clockwise at vertex {0}")]
    NotConvex(usize),
    #[error("duplicate polygon vertex at index {0}")]
    DuplicateVertex(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("polygons intersect; no separating hyperplane exists")]
    NotSeparable,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

/// A strictly convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct Polygon {
    vertices: Vec<Vec2>,
}

impl TryFrom<Vec<[f64; 2]>> for Polygon {
    type Error = GeometryError;
    fn try_from(v: Vec<[f64; 2]>) -> Result<Self, Self::Error> {
        Polygon::new(v.into_iter().map(Vec2::from).collect())
    }
}

impl From<Polygon> for Vec<[f64; 2]> {
    fn from(p: Polygon) -> Self {
        p.vertices.iter().map(|v| [v.x, v.y]).collect()
    }
}

impl Polygon {
    pub fn new(vertices: Vec<Vec2>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::TooFewVertices(n));
        }
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            if a.dist(b) <= EPS_GEOM {
                return Err(GeometryError::DuplicateVertex((i + 1) % n));
            }
        }
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if (b - a).cross(c - b) <= EPS_GEOM {
                return Err(GeometryError::NotConvex((i + 1) % n));
            }
        }
        // Consecutive left turns can still wind more than once around.
        let winding: f64 = (0..n)
            .map(|i| {
                let a = vertices[i];
                let b = vertices[(i + 1) % n];
                let c = vertices[(i + 2) % n];
                (b - a).cross(c - b).atan2((b - a).dot(c - b))
            })
            .sum();
        if (winding - std::f64::consts::TAU).abs() > 1e-6 {
            return Err(GeometryError::NotConvex(0));
        }
        Ok(Self { vertices })
    }

    /// Regular polygon centered at the origin with its first vertex at
    /// angle `-pi/sides` (so one edge is vertical on the +x side).
    pub fn regular(sides: usize, apothem: f64) -> Result<Self, GeometryError> {
        if sides < 3 {
            return Err(GeometryError::TooFewVertices(sides));
        }
        if !(apothem > 0.0) {
            return Err(GeometryError::InvalidArgument("apothem must be positive"));
        }
        let half = std::f64::consts::PI / sides as f64;
        let r = apothem / half.cos();
        let vertices = (0..sides)
            .map(|k| {
                let a = -half + 2.0 * half * k as f64;
                Vec2::new(r * a.cos(), r * a.sin())
            })
            .collect();
        Polygon::new(vertices)
    }

    /// Axis-aligned rectangle centered at the origin, vertices CCW starting
    /// at the bottom-right corner.
    pub fn rectangle(width: f64, height: f64) -> Result<Self, GeometryError> {
        let (w, h) = (width / 2.0, height / 2.0);
        Polygon::new(vec![
            Vec2::new(w, -h),
            Vec2::new(w, h),
            Vec2::new(-w, h),
            Vec2::new(-w, -h),
        ])
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn centroid(&self) -> Vec2 {
        let n = self.vertices.len() as f64;
        let s = self.vertices.iter().fold(Vec2::ZERO, |acc, &v| acc + v);
        s.scale(1.0 / n)
    }

    /// Largest distance from the origin to a vertex.
    pub fn circumradius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Index of the vertex maximizing `dir . v`; ties go to the lowest index.
    pub fn support_index(&self, dir: Vec2) -> usize {
        let mut best = 0;
        let mut best_val = self.vertices[0].dot(dir);
        for (i, v) in self.vertices.iter().enumerate().skip(1) {
            let val = v.dot(dir);
            if val > best_val {
                best = i;
                best_val = val;
            }
        }
        best
    }

    /// Outward offset of every edge by `margin`.
    pub fn offset(&self, margin: f64) -> Result<Polygon, GeometryError> {
        if margin == 0.0 {
            return Ok(self.clone());
        }
        let n = self.vertices.len();
        let normal = |i: usize| {
            let e = self.vertices[(i + 1) % n] - self.vertices[i];
            Vec2::new(e.y, -e.x).scale(1.0 / e.norm())
        };
        let vertices = (0..n)
            .map(|i| {
                let prev = normal((i + n - 1) % n);
                let next = normal(i);
                let bis = prev + next;
                let s = margin / (1.0 + prev.dot(next));
                self.vertices[i] + bis.scale(s)
            })
            .collect();
        Polygon::new(vertices)
    }
}

pub fn support(poly: &Polygon, dir: Vec2) -> Result<Vec2, GeometryError> {
    if dir.norm_sq() == 0.0 || !dir.x.is_finite() || !dir.y.is_finite() {
        return Err(GeometryError::InvalidArgument("support direction must be nonzero"));
    }
    Ok(poly.vertices[poly.support_index(dir)])
}

/// Open half space `{p | normal . p > offset}` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub normal: Vec2,
    pub offset: f64,
}

impl HalfSpace {
    /// Builds a half space, rescaling so the normal is unit length.
    pub fn new(normal: Vec2, offset: f64) -> Result<Self, GeometryError> {
        let n = normal.norm();
        if !(n > EPS_GEOM) || !offset.is_finite() {
            return Err(GeometryError::InvalidArgument("half-space normal must be nonzero"));
        }
        Ok(Self { normal: normal.scale(1.0 / n), offset: offset / n })
    }

    /// Signed clearance of `p`: positive inside.
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        self.normal.dot(p) - self.offset
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.signed_distance(p) > 0.0
    }

    /// Smallest vertex clearance of `poly`; positive iff the polygon lies
    /// strictly inside.
    pub fn polygon_clearance(&self, poly: &Polygon) -> f64 {
        poly.vertices
            .iter()
            .map(|&v| self.signed_distance(v))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn mirror(&self) -> HalfSpace {
        HalfSpace { normal: -self.normal, offset: -self.offset }
    }
}

pub fn mirror(h: &HalfSpace) -> HalfSpace {
    h.mirror()
}

pub fn transform_footprint(footprint: &Polygon, position: Vec2, heading: f64) -> Polygon {
    let (s, c) = heading.sin_cos();
    let vertices = footprint
        .vertices
        .iter()
        .map(|v| Vec2::new(c * v.x - s * v.y + position.x, s * v.x + c * v.y + position.y))
        .collect();
    // Rigid motions keep convexity and orientation, skip re-validation.
    Polygon { vertices }
}

/// Closest-point query result between two convex polygons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proximity {
    /// Euclidean distance; zero when the polygons overlap.
    pub distance: f64,
    /// Closest point on the first polygon.
    pub on_p: Vec2,
    /// Closest point on the second polygon.
    pub on_q: Vec2,
}

#[derive(Clone, Copy)]
struct SimplexPoint {
    w: Vec2,
    a: Vec2,
    b: Vec2,
}

/// GJK distance between two convex polygons.
pub fn gjk_proximity(p: &Polygon, q: &Polygon) -> Proximity {
    let support_pair = |d: Vec2| {
        let a = p.vertices[p.support_index(d)];
        let b = q.vertices[q.support_index(-d)];
        SimplexPoint { w: a - b, a, b }
    };

    let start = p.centroid() - q.centroid();
    let mut simplex: Vec<SimplexPoint> = vec![support_pair(if start.norm_sq() > 0.0 {
        -start
    } else {
        Vec2::new(1.0, 0.0)
    })];
    let mut lambdas = vec![1.0];
    let mut v = simplex[0].w;

    for _ in 0..64 {
        let vv = v.norm_sq();
        if vv <= EPS_GEOM * EPS_GEOM {
            break;
        }
        let s = support_pair(-v);
        // Termination: no further progress toward the origin possible.
        if vv - v.dot(s.w) <= 1e-12 * vv.max(1.0) {
            break;
        }
        if simplex.iter().any(|x| (x.w - s.w).norm_sq() <= 1e-24) {
            break;
        }
        let mut grown = simplex.clone();
        grown.push(s);
        let (next, lam) = closest_on_simplex(&grown);
        if next.len() == 3 {
            simplex = next;
            lambdas = lam;
            v = Vec2::ZERO;
            break;
        }
        let new_v = next.iter().zip(&lam).fold(Vec2::ZERO, |acc, (sp, &l)| acc + sp.w.scale(l));
        if new_v.norm_sq() >= vv {
            break;
        }
        simplex = next;
        lambdas = lam;
        v = new_v;
    }

    let on_p = simplex.iter().zip(&lambdas).fold(Vec2::ZERO, |acc, (sp, &l)| acc + sp.a.scale(l));
    let on_q = simplex.iter().zip(&lambdas).fold(Vec2::ZERO, |acc, (sp, &l)| acc + sp.b.scale(l));
    Proximity { distance: v.norm(), on_p, on_q }
}

/// Johnson sub-algorithm for up to three points: returns the minimal subset
/// whose hull holds the point nearest the origin, with barycentric weights.
fn closest_on_simplex(s: &[SimplexPoint]) -> (Vec<SimplexPoint>, Vec<f64>) {
    match s.len() {
        1 => (s.to_vec(), vec![1.0]),
        2 => closest_on_segment(s[0], s[1]),
        3 => {
            let (a, b, c) = (s[0], s[1], s[2]);
            let area = (b.w - a.w).cross(c.w - a.w);
            if area.abs() > 1e-18 {
                // Barycentric coordinates of the origin.
                let la = b.w.cross(c.w) / area;
                let lb = c.w.cross(a.w) / area;
                let lc = a.w.cross(b.w) / area;
                if la >= 0.0 && lb >= 0.0 && lc >= 0.0 {
                    return (vec![a, b, c], vec![la, lb, lc]);
                }
            }
            let candidates = [(a, b), (b, c), (a, c)];
            let mut best: Option<(Vec<SimplexPoint>, Vec<f64>, f64)> = None;
            for (x, y) in candidates {
                let (sp, lam) = closest_on_segment(x, y);
                let pt = sp.iter().zip(&lam).fold(Vec2::ZERO, |acc, (p, &l)| acc + p.w.scale(l));
                let d = pt.norm_sq();
                if best.as_ref().map_or(true, |b| d < b.2) {
                    best = Some((sp, lam, d));
                }
            }
            let (sp, lam, _) = best.expect("three candidate edges");
            (sp, lam)
        }
        _ => unreachable!("2D simplex holds at most three points"),
    }
}

fn closest_on_segment(a: SimplexPoint, b: SimplexPoint) -> (Vec<SimplexPoint>, Vec<f64>) {
    let ab = b.w - a.w;
    let len2 = ab.norm_sq();
    if len2 <= 1e-24 {
        return (vec![a], vec![1.0]);
    }
    let t = -a.w.dot(ab) / len2;
    if t <= 0.0 {
        (vec![a], vec![1.0])
    } else if t >= 1.0 {
        (vec![b], vec![1.0])
    } else {
        (vec![a, b], vec![1.0 - t, t])
    }
}

/// Touching counts as intersecting.
pub fn polygons_intersect(p: &Polygon, q: &Polygon) -> bool {
    gjk_proximity(p, q).distance <= EPS_GEOM
}

/// Half space containing `p` and excluding `q`, bounded by the perpendicular
/// bisector of the closest-point pair. The mirror half space contains `q`.
pub fn separating_hyperplane(p: &Polygon, q: &Polygon) -> Result<HalfSpace, GeometryError> {
    let prox = gjk_proximity(p, q);
    if prox.distance <= 2.0 * EPS_SEP {
        return Err(GeometryError::NotSeparable);
    }
    let normal = (prox.on_p - prox.on_q).scale(1.0 / prox.distance);
    let mid = (prox.on_p + prox.on_q).scale(0.5);
    let h = HalfSpace { normal, offset: normal.dot(mid) };
    // Strict vertex margins on both sides.
    if h.polygon_clearance(p) < EPS_SEP || h.mirror().polygon_clearance(q) < EPS_SEP {
        return Err(GeometryError::NotSeparable);
    }
    Ok(h)
}
