//! Exact geometric primitives: vectors, planes, rays, boxes, triangle
//! containment, ray/triangle intersection and convex polyhedra.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default absolute tolerance (meters) for boundary classification.
pub const DEFAULT_EDGE_TOLERANCE: f64 = 1e-9;
/// Faces with an area below this value (m²) are treated as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;
/// Minimal ray parameter accepted as a hit.
pub const RAY_T_MIN: f64 = 1e-9;
/// Half-space tolerance for polyhedron membership.
pub const POLYHEDRON_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("degenerate triangle (area below {DEGENERATE_AREA} m²)")]
    DegenerateTriangle,
    #[error("degenerate polygon (area below {DEGENERATE_AREA} m²)")]
    DegeneratePolygon,
    #[error("empty input")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction; `None` for the zero vector.
    pub fn try_normalize(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    #[inline]
    pub fn distance_squared(self, o: Vec3) -> f64 {
        let dx = self.x - o.x;
        let dy = self.y - o.y;
        let dz = self.z - o.z;
        dx * dx + dy * dy + dz * dz
    }

    #[inline]
    pub fn distance(self, o: Vec3) -> f64 {
        self.distance_squared(o).sqrt()
    }

    #[inline]
    pub fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    #[inline]
    pub fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Plane `{x : unit_normal · x = offset}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub unit_normal: Vec3,
    pub offset: f64,
}

impl Plane {
    /// Plane through `point` with the given normal (normalized here).
    pub fn from_point_normal(point: Vec3, normal: Vec3) -> Option<Plane> {
        let n = normal.try_normalize()?;
        Some(Plane {
            unit_normal: n,
            offset: n.dot(point),
        })
    }

    #[inline]
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        self.unit_normal.dot(p) - self.offset
    }
}

/// Orthogonal projection onto a plane; returns the foot point and the signed
/// distance along the plane normal so that `p = foot + d · n`.
pub fn project_point_to_plane(p: Vec3, plane: &Plane) -> (Vec3, f64) {
    let d = plane.signed_distance(p);
    (p - plane.unit_normal * d, d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
}

impl Ray {
    /// Builds a ray, normalizing `direction`. `None` for a zero direction.
    pub fn new(origin: Vec3, direction: Vec3) -> Option<Ray> {
        Some(Ray {
            origin,
            direction: direction.try_normalize()?,
        })
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Aabb {
        Aabb { min, max }
    }

    /// Box around a single point.
    pub fn point(p: Vec3) -> Aabb {
        Aabb { min: p, max: p }
    }

    /// Neutral element for `grow`.
    pub fn empty() -> Aabb {
        Aabb {
            min: Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y || self.min.z > self.max.z
    }

    #[inline]
    pub fn grow(&mut self, p: Vec3) {
        self.min = self.min.min(p);
        self.max = self.max.max(p);
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: self.min.min(o.min),
            max: self.max.max(o.max),
        }
    }

    pub fn contains_box(&self, o: &Aabb) -> bool {
        self.min.x <= o.min.x
            && self.min.y <= o.min.y
            && self.min.z <= o.min.z
            && self.max.x >= o.max.x
            && self.max.y >= o.max.y
            && self.max.z >= o.max.z
    }

    pub fn contains_point(&self, p: Vec3, tol: f64) -> bool {
        p.x >= self.min.x - tol
            && p.y >= self.min.y - tol
            && p.z >= self.min.z - tol
            && p.x <= self.max.x + tol
            && p.y <= self.max.y + tol
            && p.z <= self.max.z + tol
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    /// Index of the widest axis (lowest index on ties).
    pub fn widest_axis(&self) -> usize {
        let e = self.extent();
        if e.x >= e.y && e.x >= e.z {
            0
        } else if e.y >= e.z {
            1
        } else {
            2
        }
    }

    pub fn padded(&self, pad: f64) -> Aabb {
        let p = Vec3::new(pad, pad, pad);
        Aabb {
            min: self.min - p,
            max: self.max + p,
        }
    }

    /// Maximal per-component deviation between two boxes.
    pub fn max_deviation(&self, o: &Aabb) -> f64 {
        (self.min - o.min)
            .max_abs()
            .max((self.max - o.max).max_abs())
    }

    /// The eight corners, bit i of the index selecting max along axis i.
    pub fn corners(&self) -> [Vec3; 8] {
        let mut out = [Vec3::ZERO; 8];
        for (i, c) in out.iter_mut().enumerate() {
            *c = Vec3::new(
                if i & 1 == 0 { self.min.x } else { self.max.x },
                if i & 2 == 0 { self.min.y } else { self.max.y },
                if i & 4 == 0 { self.min.z } else { self.max.z },
            );
        }
        out
    }

    /// The twelve edges as corner index pairs into [`Aabb::corners`].
    pub const EDGES: [(usize, usize); 12] = [
        (0, 1),
        (2, 3),
        (4, 5),
        (6, 7),
        (0, 2),
        (1, 3),
        (4, 6),
        (5, 7),
        (0, 4),
        (1, 5),
        (2, 6),
        (3, 7),
    ];

    /// The six faces as corner index loops into [`Aabb::corners`].
    pub const FACES: [[usize; 4]; 6] = [
        [0, 2, 6, 4],
        [1, 3, 7, 5],
        [0, 1, 5, 4],
        [2, 3, 7, 6],
        [0, 1, 3, 2],
        [4, 5, 7, 6],
    ];

    /// Squared distance from `p` to the box (zero inside).
    #[inline]
    pub fn distance_squared_to(&self, p: Vec3) -> f64 {
        let mut d = 0.0;
        for axis in 0..3 {
            let v = p[axis];
            let gap = if v < self.min[axis] {
                self.min[axis] - v
            } else if v > self.max[axis] {
                v - self.max[axis]
            } else {
                0.0
            };
            d += gap * gap;
        }
        d
    }

    /// Slab test. Returns the entry/exit parameters of the ray's line
    /// against the box, if the interval is non-empty and not entirely
    /// behind the origin.
    pub fn ray_interval(&self, ray: &Ray, inv_dir: Vec3) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for axis in 0..3 {
            let o = ray.origin[axis];
            let d = ray.direction[axis];
            if d == 0.0 {
                if o < self.min[axis] || o > self.max[axis] {
                    return None;
                }
                continue;
            }
            let inv = inv_dir[axis];
            let mut a = (self.min[axis] - o) * inv;
            let mut b = (self.max[axis] - o) * inv;
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
            if t0 > t1 {
                return None;
            }
        }
        if t1 < 0.0 {
            return None;
        }
        Some((t0, t1))
    }
}

/// Minimal axis-aligned box enclosing `points`.
pub fn aabb_of(points: &[Vec3]) -> Result<Aabb, GeomError> {
    let (first, rest) = points.split_first().ok_or(GeomError::EmptyInput)?;
    let mut b = Aabb::point(*first);
    for p in rest {
        b.grow(*p);
    }
    Ok(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Containment {
    Inside,
    OnBoundary,
    Outside,
}

/// Triangle with cached edge data used by containment tests.
#[derive(Debug, Clone, Copy)]
pub struct Triangle {
    pub v: [Vec3; 3],
}

impl Triangle {
    pub fn new(a: Vec3, b: Vec3, c: Vec3) -> Triangle {
        Triangle { v: [a, b, c] }
    }

    /// Non-normalized normal `(b − a) × (c − a)`; its length is twice the area.
    #[inline]
    pub fn scaled_normal(&self) -> Vec3 {
        (self.v[1] - self.v[0]).cross(self.v[2] - self.v[0])
    }

    pub fn area(&self) -> f64 {
        0.5 * self.scaled_normal().norm()
    }

    pub fn is_degenerate(&self) -> bool {
        self.area() < DEGENERATE_AREA
    }

    pub fn centroid(&self) -> Vec3 {
        (self.v[0] + self.v[1] + self.v[2]) / 3.0
    }

    /// In-plane signed distances (meters) from `p` to the three edge lines,
    /// positive towards the interior. Entry `i` belongs to the edge opposite
    /// vertex `i`, i.e. it equals the barycentric coordinate `i` scaled by
    /// the height over that edge.
    pub fn edge_distances(&self, p: Vec3) -> Result<[f64; 3], GeomError> {
        let n = self.scaled_normal();
        let n_len = n.norm();
        if 0.5 * n_len < DEGENERATE_AREA {
            return Err(GeomError::DegenerateTriangle);
        }
        let unit = n / n_len;
        let mut out = [0.0; 3];
        for (i, slot) in out.iter_mut().enumerate() {
            let a = self.v[(i + 1) % 3];
            let b = self.v[(i + 2) % 3];
            let edge = b - a;
            let len = edge.norm();
            *slot = unit.dot(edge.cross(p - a)) / len;
        }
        Ok(out)
    }
}

/// Classifies a point lying (approximately) on the triangle's plane.
///
/// The tolerance is an absolute in-plane distance to the nearest edge line.
pub fn classify_point_in_triangle(
    p: Vec3,
    tri: &Triangle,
    edge_tolerance: f64,
) -> Result<Containment, GeomError> {
    let d = tri.edge_distances(p)?;
    if d.iter().any(|&x| x < -edge_tolerance) {
        Ok(Containment::Outside)
    } else if d.iter().all(|&x| x > edge_tolerance) {
        Ok(Containment::Inside)
    } else {
        Ok(Containment::OnBoundary)
    }
}

/// Barycentric slack admitted by [`ray_triangle_intersect`] so that rays
/// through shared edges hit both neighbours.
const BARY_EPS: f64 = 1e-12;

/// Möller–Trumbore. Boundary hits are reported.
pub fn ray_triangle_intersect(ray: &Ray, tri: &Triangle) -> Result<Option<(f64, Vec3)>, GeomError> {
    if tri.is_degenerate() {
        return Err(GeomError::DegenerateTriangle);
    }
    Ok(ray_triangle_unchecked(ray, tri))
}

/// [`ray_triangle_intersect`] without the degeneracy check, for callers
/// that filtered degenerate faces beforehand.
#[inline]
pub fn ray_triangle_unchecked(ray: &Ray, tri: &Triangle) -> Option<(f64, Vec3)> {
    let e1 = tri.v[1] - tri.v[0];
    let e2 = tri.v[2] - tri.v[0];
    let pvec = ray.direction.cross(e2);
    let det = e1.dot(pvec);
    // Parallel test relative to the edge lengths.
    let scale = e1.norm() * e2.norm();
    if det.abs() <= 1e-14 * scale {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = ray.origin - tri.v[0];
    let u = tvec.dot(pvec) * inv_det;
    if !(-BARY_EPS..=1.0 + BARY_EPS).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(e1);
    let v = ray.direction.dot(qvec) * inv_det;
    if v < -BARY_EPS || u + v > 1.0 + BARY_EPS {
        return None;
    }
    let t = e2.dot(qvec) * inv_det;
    if t > RAY_T_MIN && t.is_finite() {
        Some((t, ray.at(t)))
    } else {
        None
    }
}

/// Convex polyhedron described redundantly by inward half-spaces and by its
/// boundary representation (vertices, edges, polygonal faces).
#[derive(Debug, Clone)]
pub struct ConvexPolyhedron {
    /// Inward-oriented: a point is inside iff `signed_distance ≥ −tol` for all.
    pub planes: Vec<Plane>,
    pub vertices: Vec<Vec3>,
    pub edges: Vec<(usize, usize)>,
    /// One vertex loop per plane that carries a face (indices into `vertices`).
    pub faces: Vec<Vec<usize>>,
}

impl ConvexPolyhedron {
    /// Builds the boundary representation from inward half-spaces by vertex
    /// enumeration. The half-spaces must bound a non-empty, bounded region.
    pub fn from_planes(planes: Vec<Plane>) -> Result<ConvexPolyhedron, GeomError> {
        let m = planes.len();
        // (vertex, set of incident plane indices)
        let mut verts: Vec<(Vec3, Vec<usize>)> = Vec::new();
        let scale = 1.0;
        for i in 0..m {
            for j in (i + 1)..m {
                for k in (j + 1)..m {
                    let Some(p) = intersect_three(&planes[i], &planes[j], &planes[k]) else {
                        continue;
                    };
                    let tol = 1e-9 * (scale + p.max_abs());
                    if planes.iter().any(|pl| pl.signed_distance(p) < -tol) {
                        continue;
                    }
                    if let Some(existing) = verts
                        .iter_mut()
                        .find(|(q, _)| q.distance(p) <= 1e-9 * (1.0 + p.max_abs()))
                    {
                        for idx in [i, j, k] {
                            if !existing.1.contains(&idx) {
                                existing.1.push(idx);
                            }
                        }
                    } else {
                        verts.push((p, vec![i, j, k]));
                    }
                }
            }
        }
        if verts.len() < 4 {
            return Err(GeomError::EmptyInput);
        }
        // Complete incidence: a vertex lies on every plane it satisfies with
        // equality, not only the three that generated it.
        for (p, inc) in verts.iter_mut() {
            let tol = 1e-9 * (1.0 + p.max_abs());
            for (idx, pl) in planes.iter().enumerate() {
                if pl.signed_distance(*p).abs() <= tol && !inc.contains(&idx) {
                    inc.push(idx);
                }
            }
            inc.sort_unstable();
        }
        let mut faces = Vec::new();
        for (pi, plane) in planes.iter().enumerate() {
            let on: Vec<usize> = (0..verts.len())
                .filter(|&v| verts[v].1.contains(&pi))
                .collect();
            if on.len() < 3 {
                continue;
            }
            faces.push(order_loop(&on, &verts, plane.unit_normal));
        }
        let mut edges = Vec::new();
        for face in &faces {
            for w in 0..face.len() {
                let a = face[w];
                let b = face[(w + 1) % face.len()];
                let e = (a.min(b), a.max(b));
                if !edges.contains(&e) {
                    edges.push(e);
                }
            }
        }
        edges.sort_unstable();
        Ok(ConvexPolyhedron {
            planes,
            vertices: verts.into_iter().map(|(p, _)| p).collect(),
            edges,
            faces,
        })
    }

    /// Axis-aligned box as a polyhedron (inward normals).
    pub fn from_aabb(b: &Aabb) -> ConvexPolyhedron {
        let planes = vec![
            Plane {
                unit_normal: Vec3::X,
                offset: b.min.x,
            },
            Plane {
                unit_normal: -Vec3::X,
                offset: -b.max.x,
            },
            Plane {
                unit_normal: Vec3::Y,
                offset: b.min.y,
            },
            Plane {
                unit_normal: -Vec3::Y,
                offset: -b.max.y,
            },
            Plane {
                unit_normal: Vec3::Z,
                offset: b.min.z,
            },
            Plane {
                unit_normal: -Vec3::Z,
                offset: -b.max.z,
            },
        ];
        ConvexPolyhedron {
            planes,
            vertices: b.corners().to_vec(),
            edges: Aabb::EDGES.to_vec(),
            faces: Aabb::FACES.iter().map(|f| f.to_vec()).collect(),
        }
    }

    pub fn face_polygon(&self, face: usize) -> Vec<Vec3> {
        self.faces[face].iter().map(|&i| self.vertices[i]).collect()
    }
}

fn intersect_three(a: &Plane, b: &Plane, c: &Plane) -> Option<Vec3> {
    let n1 = a.unit_normal;
    let n2 = b.unit_normal;
    let n3 = c.unit_normal;
    let c23 = n2.cross(n3);
    let det = n1.dot(c23);
    if det.abs() < 1e-12 {
        return None;
    }
    let p = (c23 * a.offset + n3.cross(n1) * b.offset + n1.cross(n2) * c.offset) / det;
    p.is_finite().then_some(p)
}

/// Orders coplanar vertices counter-clockwise around `normal`.
fn order_loop(on: &[usize], verts: &[(Vec3, Vec<usize>)], normal: Vec3) -> Vec<usize> {
    let center = on.iter().fold(Vec3::ZERO, |acc, &i| acc + verts[i].0) / on.len() as f64;
    let u = (verts[on[0]].0 - center)
        .try_normalize()
        .unwrap_or_else(|| any_perpendicular(normal));
    let w = normal.cross(u);
    let mut keyed: Vec<(f64, usize)> = on
        .iter()
        .map(|&i| {
            let d = verts[i].0 - center;
            (d.dot(w).atan2(d.dot(u)), i)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, i)| i).collect()
}

fn any_perpendicular(n: Vec3) -> Vec3 {
    let helper = if n.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
    n.cross(helper).try_normalize().unwrap_or(Vec3::X)
}

pub fn point_in_polyhedron(p: Vec3, poly: &ConvexPolyhedron) -> bool {
    poly.planes
        .iter()
        .all(|pl| pl.signed_distance(p) >= -POLYHEDRON_TOLERANCE)
}

/// Newell normal of a vertex loop; its length is twice the polygon area.
fn newell_normal(polygon: &[Vec3]) -> Vec3 {
    let mut n = Vec3::ZERO;
    for i in 0..polygon.len() {
        let a = polygon[i];
        let b = polygon[(i + 1) % polygon.len()];
        n.x += (a.y - b.y) * (a.z + b.z);
        n.y += (a.z - b.z) * (a.x + b.x);
        n.z += (a.x - b.x) * (a.y + b.y);
    }
    n
}

const SEGMENT_TOLERANCE: f64 = 1e-9;

/// True iff the closed segment `[a, b]` touches the closed planar polygon.
pub fn segment_polygon_intersect(a: Vec3, b: Vec3, polygon: &[Vec3]) -> Result<bool, GeomError> {
    if polygon.len() < 3 {
        return Err(GeomError::DegeneratePolygon);
    }
    let n = newell_normal(polygon);
    let twice_area = n.norm();
    if 0.5 * twice_area < DEGENERATE_AREA {
        return Err(GeomError::DegeneratePolygon);
    }
    let unit = n / twice_area;
    let plane = Plane {
        unit_normal: unit,
        offset: unit.dot(polygon[0]),
    };
    let da = plane.signed_distance(a);
    let db = plane.signed_distance(b);
    let tol = SEGMENT_TOLERANCE;
    if (da > tol && db > tol) || (da < -tol && db < -tol) {
        return Ok(false);
    }
    if da.abs() <= tol && db.abs() <= tol {
        // Coplanar: endpoint inside, or crossing one of the polygon edges.
        if point_in_planar_polygon(a, polygon, unit) || point_in_planar_polygon(b, polygon, unit) {
            return Ok(true);
        }
        let k = polygon.len();
        return Ok(
            (0..k).any(|i| segments_touch_in_plane(a, b, polygon[i], polygon[(i + 1) % k], unit))
        );
    }
    let hit = if da.abs() <= tol {
        a
    } else if db.abs() <= tol {
        b
    } else {
        a + (b - a) * (da / (da - db))
    };
    Ok(point_in_planar_polygon(hit, polygon, unit))
}

/// Inclusive point-in-polygon for a point on the polygon plane (winding
/// number, with an explicit boundary band).
fn point_in_planar_polygon(p: Vec3, polygon: &[Vec3], unit_normal: Vec3) -> bool {
    let k = polygon.len();
    for i in 0..k {
        if point_segment_distance(p, polygon[i], polygon[(i + 1) % k]) <= SEGMENT_TOLERANCE {
            return true;
        }
    }
    let u = any_perpendicular(unit_normal);
    let w = unit_normal.cross(u);
    let to2 = |q: Vec3| {
        let d = q - p;
        (d.dot(u), d.dot(w))
    };
    let mut winding = 0i32;
    for i in 0..k {
        let (x0, y0) = to2(polygon[i]);
        let (x1, y1) = to2(polygon[(i + 1) % k]);
        let cross = x0 * y1 - x1 * y0;
        if y0 <= 0.0 {
            if y1 > 0.0 && cross > 0.0 {
                winding += 1;
            }
        } else if y1 <= 0.0 && cross < 0.0 {
            winding -= 1;
        }
    }
    winding != 0
}

fn point_segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

fn segments_touch_in_plane(a: Vec3, b: Vec3, c: Vec3, d: Vec3, n: Vec3) -> bool {
    let side = |p: Vec3, q: Vec3, r: Vec3| n.dot((q - p).cross(r - p));
    let d1 = side(c, d, a);
    let d2 = side(c, d, b);
    let d3 = side(a, b, c);
    let d4 = side(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    point_segment_distance(a, c, d) <= SEGMENT_TOLERANCE
        || point_segment_distance(b, c, d) <= SEGMENT_TOLERANCE
        || point_segment_distance(c, a, b) <= SEGMENT_TOLERANCE
        || point_segment_distance(d, a, b) <= SEGMENT_TOLERANCE
}
