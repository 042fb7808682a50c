//! Deterministic synthetic scenes with exact ground truth in all three
//! modalities.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geom::{Triangle, Vec3};
use crate::pcma::ThresholdSchedule;
use crate::scene::{CameraModel, Column, FaceRef, MeshTile, PointCloud, TiledMesh, LABEL_COLUMN};

pub const GROUND: i32 = 0;
pub const WALL: i32 = 1;
pub const ROOF: i32 = 2;

/// Roof pitch of the two-plane template.
pub const ROOF_SLOPE_DEG: f64 = 30.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    /// Flat square at z = 0 split into two tiles.
    Plane,
    /// Closed cube standing on z = 0, split into two tiles.
    Cube,
    /// Gable roof, ridge along y at x = 0, one tile per roof half.
    RoofTwoPlane,
    /// Ground split into four quadrant tiles, one box building per quadrant.
    Town,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LabelPlan {
    /// Ground, wall and roof classes derived from the template.
    Template,
    Uniform(i32),
    /// Template classes with explicit per-face overrides.
    Overrides(Vec<(FaceRef, i32)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub template: Template,
    /// Edge length of the scene footprint, meters.
    pub extent: f64,
    /// Grid cells per side of each planar patch.
    pub subdivisions: u32,
    /// Expected points per square meter.
    pub density: f64,
    pub labels: LabelPlan,
    pub cameras: Vec<CameraModel>,
    /// Standard deviation of the offset along the face normal, meters.
    pub noise_sigma: f64,
    /// Rigid shift applied to every point after sampling, meters.
    pub shift: Vec3,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(template: Template, extent: f64, density: f64, seed: u64) -> SceneSpec {
        SceneSpec {
            template,
            extent,
            subdivisions: 4,
            density,
            labels: LabelPlan::Template,
            cameras: Vec::new(),
            noise_sigma: 0.0,
            shift: Vec3::ZERO,
            seed,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if !(self.extent.is_finite() && self.extent > 0.0) {
            return Err(SynthError::InvalidSpec("extent must be positive".into()));
        }
        if !(self.density.is_finite() && self.density > 0.0) {
            return Err(SynthError::InvalidSpec("density must be positive".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(SynthError::InvalidSpec(
                "noise sigma must be non-negative".into(),
            ));
        }
        if self.subdivisions < 2 || self.subdivisions % 2 != 0 {
            return Err(SynthError::InvalidSpec(
                "subdivisions must be even and at least 2".into(),
            ));
        }
        if !self.shift.is_finite() {
            return Err(SynthError::InvalidSpec("shift must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    /// Face labels in the `label` column of every tile.
    pub mesh: TiledMesh,
    /// Ground-truth point labels in the `label` column.
    pub cloud: PointCloud,
    pub cameras: Vec<CameraModel>,
    /// Generating face of every point.
    pub gt_faces: Vec<FaceRef>,
}

struct TileBuilder {
    tile_id: u32,
    vertices: Vec<Vec3>,
    lookup: HashMap<[u64; 3], u32>,
    faces: Vec<[u32; 3]>,
    labels: Vec<i32>,
}

impl TileBuilder {
    fn new(tile_id: u32) -> TileBuilder {
        TileBuilder {
            tile_id,
            vertices: Vec::new(),
            lookup: HashMap::new(),
            faces: Vec::new(),
            labels: Vec::new(),
        }
    }

    fn vertex(&mut self, v: Vec3) -> u32 {
        let key = [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
        let next = self.vertices.len() as u32;
        *self.lookup.entry(key).or_insert_with(|| {
            self.vertices.push(v);
            next
        })
    }

    fn triangle(&mut self, t: [Vec3; 3], label: i32) {
        let f = [self.vertex(t[0]), self.vertex(t[1]), self.vertex(t[2])];
        self.faces.push(f);
        self.labels.push(label);
    }

    fn finish(self) -> Result<MeshTile, SynthError> {
        let mut tile = MeshTile::new(self.tile_id, self.vertices, self.faces)
            .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        tile.set_face_labels(&self.labels);
        Ok(tile)
    }
}

/// Quad `origin + s·u + t·v`, `s, t ∈ [0, 1]`, as an `n × n` grid of
/// triangles facing `u × v`.
fn grid_quad(origin: Vec3, u: Vec3, v: Vec3, n: u32) -> Vec<[Vec3; 3]> {
    let at = |i: u32, j: u32| origin + u * (i as f64 / n as f64) + v * (j as f64 / n as f64);
    let mut out = Vec::with_capacity(2 * (n * n) as usize);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
            out.push([a, b, c]);
            out.push([a, c, d]);
        }
    }
    out
}

fn centroid(t: &[Vec3; 3]) -> Vec3 {
    (t[0] + t[1] + t[2]) / 3.0
}

/// Geometry of the gable roof for a given extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoofGeometry {
    pub half_width: f64,
    pub ridge_z: f64,
    pub slope: f64,
}

impl RoofGeometry {
    pub fn of(extent: f64) -> RoofGeometry {
        let slope = ROOF_SLOPE_DEG.to_radians();
        RoofGeometry {
            half_width: extent / 2.0,
            ridge_z: extent / 2.0 * slope.tan(),
            slope,
        }
    }

    /// Upward unit normal of the roof half on the `x < 0` side.
    pub fn left_normal(&self) -> Vec3 {
        Vec3::new(-self.slope.sin(), 0.0, self.slope.cos())
    }

    pub fn right_normal(&self) -> Vec3 {
        Vec3::new(self.slope.sin(), 0.0, self.slope.cos())
    }

    /// Surface point of the left half at `(x ≤ 0, y)`.
    pub fn left_surface(&self, x: f64, y: f64) -> Vec3 {
        Vec3::new(x, y, self.ridge_z + x * self.slope.tan())
    }
}

fn build_tiles(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Result<Vec<MeshTile>, SynthError> {
    let e = spec.extent;
    let h = e / 2.0;
    let n = spec.subdivisions;
    let mut tiles: Vec<TileBuilder>;
    match spec.template {
        Template::Plane => {
            tiles = vec![TileBuilder::new(0), TileBuilder::new(1)];
            for t in grid_quad(
                Vec3::new(-h, -h, 0.0),
                Vec3::new(e, 0.0, 0.0),
                Vec3::new(0.0, e, 0.0),
                n,
            ) {
                let ti = usize::from(centroid(&t).x > 0.0);
                tiles[ti].triangle(t, GROUND);
            }
        }
        Template::Cube => {
            tiles = vec![TileBuilder::new(0), TileBuilder::new(1)];
            let o = Vec3::new(-h, -h, 0.0);
            let (x, y, z) = (Vec3::X * e, Vec3::Y * e, Vec3::Z * e);
            let sides = [
                (o, y, x, GROUND),
                (o + z, x, y, ROOF),
                (o, x, z, WALL),
                (o + y, z, x, WALL),
                (o, z, y, WALL),
                (o + x, y, z, WALL),
            ];
            for (origin, u, v, label) in sides {
                for t in grid_quad(origin, u, v, n) {
                    let ti = usize::from(centroid(&t).x > 0.0);
                    tiles[ti].triangle(t, label);
                }
            }
        }
        Template::RoofTwoPlane => {
            tiles = vec![TileBuilder::new(0), TileBuilder::new(1)];
            let g = RoofGeometry::of(e);
            let eave = g.ridge_z - h * g.slope.tan();
            let left = grid_quad(
                Vec3::new(-h, -h, eave),
                Vec3::new(h, 0.0, g.ridge_z - eave),
                Vec3::new(0.0, e, 0.0),
                n,
            );
            let right = grid_quad(
                Vec3::new(0.0, -h, g.ridge_z),
                Vec3::new(h, 0.0, eave - g.ridge_z),
                Vec3::new(0.0, e, 0.0),
                n,
            );
            for t in left {
                tiles[0].triangle(t, ROOF);
            }
            for t in right {
                tiles[1].triangle(t, ROOF);
            }
        }
        Template::Town => {
            tiles = (0..4).map(TileBuilder::new).collect();
            let quadrant = |c: Vec3| usize::from(c.x > 0.0) + 2 * usize::from(c.y > 0.0);
            for t in grid_quad(
                Vec3::new(-h, -h, 0.0),
                Vec3::new(e, 0.0, 0.0),
                Vec3::new(0.0, e, 0.0),
                n,
            ) {
                tiles[quadrant(centroid(&t))].triangle(t, GROUND);
            }
            let m = (n / 2).max(1);
            for q in 0..4 {
                let cx = if q % 2 == 1 { h / 2.0 } else { -h / 2.0 };
                let cy = if q >= 2 { h / 2.0 } else { -h / 2.0 };
                let half = rng.random_range(0.15..0.3) * h;
                let height = rng.random_range(0.15..0.3) * e;
                let o = Vec3::new(cx - half, cy - half, 0.0);
                let (x, y, z) = (Vec3::X * 2.0 * half, Vec3::Y * 2.0 * half, Vec3::Z * height);
                let sides = [
                    (o + z, x, y, ROOF),
                    (o, x, z, WALL),
                    (o + y, z, x, WALL),
                    (o, z, y, WALL),
                    (o + x, y, z, WALL),
                ];
                for (origin, u, v, label) in sides {
                    for t in grid_quad(origin, u, v, m) {
                        tiles[q].triangle(t, label);
                    }
                }
            }
        }
    }
    tiles.into_iter().map(TileBuilder::finish).collect()
}

fn apply_label_plan(mesh: &mut TiledMesh, plan: &LabelPlan) {
    match plan {
        LabelPlan::Template => {}
        LabelPlan::Uniform(l) => {
            for t in &mut mesh.tiles {
                let labels = vec![*l; t.faces.len()];
                t.set_face_labels(&labels);
            }
        }
        LabelPlan::Overrides(list) => {
            for &(f, l) in list {
                if let Some(t) = mesh.tile_mut(f.tile) {
                    if let Some(mut labels) = t.face_labels() {
                        if let Some(slot) = labels.get_mut(f.face as usize) {
                            *slot = l;
                            t.set_face_labels(&labels);
                        }
                    }
                }
            }
        }
    }
}

/// Uniform sample on a triangle.
fn sample_triangle(t: &Triangle, rng: &mut ChaCha8Rng) -> Vec3 {
    let (mut a, mut b): (f64, f64) = (rng.random(), rng.random());
    if a + b > 1.0 {
        a = 1.0 - a;
        b = 1.0 - b;
    }
    t.v[0] + (t.v[1] - t.v[0]) * a + (t.v[2] - t.v[0]) * b
}

/// Builds the scene. Identical specs give identical scenes.
pub fn generate(spec: &SceneSpec) -> Result<SyntheticScene, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut mesh = TiledMesh::new(build_tiles(spec, &mut rng)?)
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    apply_label_plan(&mut mesh, &spec.labels);

    let noise =
        Normal::new(0.0, spec.noise_sigma).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let mut positions = Vec::new();
    let mut gt_faces = Vec::new();
    let mut labels = Vec::new();
    for tile in &mesh.tiles {
        let face_labels = tile.face_labels().unwrap_or_default();
        for f in 0..tile.faces.len() {
            let tri = tile.triangle(f);
            let Some(normal) = tri.scaled_normal().try_normalize() else {
                continue;
            };
            let expected = tri.area() * spec.density;
            let count =
                expected.floor() as usize + usize::from(rng.random::<f64>() < expected.fract());
            for _ in 0..count {
                let p = sample_triangle(&tri, &mut rng);
                let offset = if spec.noise_sigma > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                positions.push(p + normal * offset + spec.shift);
                gt_faces.push(FaceRef::new(tile.tile_id, f as u32));
                labels.push(face_labels.get(f).copied().unwrap_or(-1));
            }
        }
    }
    let mut cloud = PointCloud::new(positions);
    cloud.columns.set(Column::labels(LABEL_COLUMN, &labels));
    Ok(SyntheticScene {
        mesh,
        cloud,
        cameras: spec.cameras.clone(),
        gt_faces,
    })
}

/// `k × k` nadir cameras at `height` spread over the scene footprint.
pub fn nadir_rig(
    extent: f64,
    height: f64,
    k: u32,
    width: u32,
    rows: u32,
    focal: f64,
) -> Vec<CameraModel> {
    let mut out = Vec::new();
    for j in 0..k {
        for i in 0..k {
            let s = |n: u32| extent * ((n as f64 + 0.5) / k as f64 - 0.5);
            out.push(CameraModel::nadir(
                j * k + i,
                width,
                rows,
                focal,
                Vec3::new(s(i), s(j), height),
            ));
        }
    }
    out
}

/// Randomized oblique and nadir views of a scene of the given extent. A
/// mix of wide, narrow, high and low cameras, some looking past the scene.
pub fn random_rig(seed: u64, count: u32, extent: f64, width: u32, rows: u32) -> Vec<CameraModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count as usize);
    let mut id = 0;
    while out.len() < count as usize {
        let r = extent * rng.random_range(0.2..1.2);
        let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
        let height = extent * rng.random_range(0.05..1.0);
        let center = Vec3::new(r * azimuth.cos(), r * azimuth.sin(), height);
        let target = Vec3::new(
            rng.random_range(-0.8..0.8) * extent,
            rng.random_range(-0.8..0.8) * extent,
            rng.random_range(-0.2..0.4) * extent,
        );
        let focal = width as f64 * rng.random_range(0.4..3.0);
        let up = if rng.random::<f64>() < 0.5 {
            Vec3::Z
        } else {
            Vec3::Y
        };
        if let Some(cam) = CameraModel::look_at(id, width, rows, focal, center, target, up) {
            out.push(cam);
            id += 1;
        }
    }
    out
}

/// Unassociated-point categories: outside the threshold range (A1, A2),
/// outside all association prisms (B1, B2), on prism boundaries (C1, C2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DeadZoneCase {
    A1,
    A2,
    B1,
    B2,
    C1,
    C2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadZonePoint {
    pub case: DeadZoneCase,
    pub position: Vec3,
    /// Whether the point is expected to be linked under each policy.
    pub linked_when_excluding: bool,
    pub linked_when_including: bool,
}

/// Constructed points on a `RoofTwoPlane` scene exercising every
/// unassociated case for `schedule`. A2 needs at least two levels and adds
/// an on-surface anchor point that is itself linked.
pub fn dead_zone_points(
    spec: &SceneSpec,
    schedule: &ThresholdSchedule,
) -> Result<Vec<DeadZonePoint>, SynthError> {
    if spec.template != Template::RoofTwoPlane {
        return Err(SynthError::InvalidSpec(
            "dead-zone points need the RoofTwoPlane template".into(),
        ));
    }
    spec.validate()?;
    if spec.subdivisions < 4 {
        return Err(SynthError::InvalidSpec(
            "dead-zone points need at least 4 subdivisions".into(),
        ));
    }
    let g = RoofGeometry::of(spec.extent);
    let n = spec.subdivisions as f64;
    let cell = spec.extent / n;
    let h = g.half_width;
    let nl = g.left_normal();
    let levels = schedule.levels();
    let theta1 = levels[0].plus.max(1e-3);
    let theta_max = schedule.theta_max();
    // Cell (i, j) of the left half spans x ∈ [−h + i·cx, ..], y ∈ [−h + j·cell, ..].
    let cx = h / n;
    let cell_point = |i: f64, j: f64| g.left_surface(-h + i * cx, -h + j * cell);
    let point = |case, position, ex, inc| DeadZonePoint {
        case,
        position,
        linked_when_excluding: ex,
        linked_when_including: inc,
    };

    let mut out = Vec::new();
    // Lower triangle of cell (1, 1): centroid at (2/3, 1/3) in cell units.
    let a1 = cell_point(1.0 + 2.0 / 3.0, 1.0 + 1.0 / 3.0);
    out.push(point(
        DeadZoneCase::A1,
        a1 + nl * (theta_max * 1.5 + 0.05),
        false,
        false,
    ));

    if levels.len() >= 2 {
        let j = n - 2.0;
        let anchor = cell_point(1.0 + 2.0 / 3.0, j + 1.0 / 3.0);
        let probe_base = cell_point(1.0 + 0.8, j + 0.15);
        let d = 0.5 * (levels[0].plus + levels[1].plus);
        let probe_linked = levels[0].admits(d);
        out.push(point(DeadZoneCase::A2, anchor, true, true));
        out.push(point(
            DeadZoneCase::A2,
            probe_base + nl * d,
            probe_linked,
            probe_linked,
        ));
    }

    // Above the ridge, between ridge vertices.
    let ridge = |j: f64| Vec3::new(0.0, -h + j * cell, g.ridge_z);
    out.push(point(
        DeadZoneCase::B1,
        ridge(1.5) + Vec3::Z * (0.5 * theta1),
        false,
        false,
    ));
    let hb = levels.get(1).map_or(theta1, |l| l.plus).max(1e-3);
    let xb = 0.5 * hb * g.slope.tan();
    out.push(point(
        DeadZoneCase::B2,
        ridge(2.5) + Vec3::new(xb, 0.0, hb),
        false,
        false,
    ));

    // Exactly on an interior ridge vertex, and above the diagonal of a
    // left-half cell.
    out.push(point(DeadZoneCase::C1, ridge(n / 2.0), false, true));
    let diag_mid = cell_point(n / 2.0 + 0.5, n / 2.0 + 0.5);
    out.push(point(
        DeadZoneCase::C2,
        diag_mid + nl * (0.5 * theta1),
        false,
        true,
    ));
    Ok(out)
}
