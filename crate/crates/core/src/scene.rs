//! Data model for the three modalities: attributed point clouds, tiled
//! triangle meshes and central-perspective cameras.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::geom::{aabb_of, Aabb, Ray, Triangle, Vec3, DEGENERATE_AREA};

/// Label value of entities that carry no label.
pub const UNLABELED: i32 = -1;
/// Label value of pixels linked to a face that carries no label.
pub const LINKED_UNLABELED: i32 = -2;
/// Name of the integer label column.
pub const LABEL_COLUMN: &str = "label";

/// Minimal camera depth for a point to count as in front of the camera.
pub const MIN_DEPTH: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("point is behind the camera (depth {0})")]
    BehindCamera(f64),
    #[error("pixel ({row}, {col}) outside a {width}x{height} image")]
    OutOfBounds {
        row: i64,
        col: i64,
        width: u32,
        height: u32,
    },
    #[error("rotation is not orthonormal (deviation {0:e})")]
    NonOrthonormalRotation(f64),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("column '{name}' has {got} values, expected {expected}")]
    ColumnLength {
        name: String,
        got: usize,
        expected: usize,
    },
    #[error("duplicate column '{0}'")]
    DuplicateColumn(String),
    #[error("face {face} of tile {tile} references vertex {index} (only {count} vertices)")]
    DanglingIndex {
        tile: u32,
        face: usize,
        index: u32,
        count: usize,
    },
    #[error("duplicate tile id {0}")]
    DuplicateTile(u32),
    #[error("tile {0} has no vertices")]
    EmptyTile(u32),
    #[error("association of point {point} references missing face {face:?}")]
    DanglingAssociation { point: usize, face: FaceRef },
}

/// Global face address: tile id plus face index inside the tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct FaceRef {
    pub tile: u32,
    pub face: u32,
}

impl FaceRef {
    pub fn new(tile: u32, face: u32) -> FaceRef {
        FaceRef { tile, face }
    }
}

/// Storage type of an attribute column; values are held as `f64`, which
/// represents every supported type exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    pub fn is_integer(self) -> bool {
        !matches!(self, ScalarType::F32 | ScalarType::F64)
    }

    pub fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub ty: ScalarType,
    pub values: Vec<f64>,
}

impl Column {
    pub fn labels(name: &str, values: &[i32]) -> Column {
        Column {
            name: name.to_string(),
            ty: ScalarType::I32,
            values: values.iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn floats(name: &str, values: Vec<f64>) -> Column {
        Column {
            name: name.to_string(),
            ty: ScalarType::F64,
            values,
        }
    }

    pub fn as_labels(&self) -> Vec<i32> {
        self.values.iter().map(|&v| v as i32).collect()
    }
}

/// Ordered named columns, one value per entity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Columns(pub Vec<Column>);

impl Columns {
    pub fn get(&self, name: &str) -> Option<&Column> {
        self.0.iter().find(|c| c.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Column> {
        self.0.iter_mut().find(|c| c.name == name)
    }

    /// Inserts or replaces a column, keeping the position of an existing one.
    pub fn set(&mut self, col: Column) {
        match self.get_mut(&col.name) {
            Some(slot) => *slot = col,
            None => self.0.push(col),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|c| c.name.as_str())
    }

    pub fn validate(&self, expected: usize) -> Result<(), SceneError> {
        for (i, c) in self.0.iter().enumerate() {
            if c.values.len() != expected {
                return Err(SceneError::ColumnLength {
                    name: c.name.clone(),
                    got: c.values.len(),
                    expected,
                });
            }
            if self.0[..i].iter().any(|o| o.name == c.name) {
                return Err(SceneError::DuplicateColumn(c.name.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
    /// Attribute columns other than the coordinates and the association.
    pub columns: Columns,
    /// Per-point face link, `None` meaning not associated. Absent when the
    /// cloud never went through association.
    pub assoc: Option<Vec<Option<FaceRef>>>,
}

impl PointCloud {
    pub fn new(positions: Vec<Vec3>) -> PointCloud {
        PointCloud {
            positions,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn labels(&self, name: &str) -> Option<Vec<i32>> {
        self.columns.get(name).map(Column::as_labels)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        self.columns.validate(self.len())?;
        if let Some(a) = &self.assoc {
            if a.len() != self.len() {
                return Err(SceneError::ColumnLength {
                    name: "assoc".into(),
                    got: a.len(),
                    expected: self.len(),
                });
            }
        }
        Ok(())
    }

    /// Checks that every association references an existing face.
    pub fn validate_against(&self, mesh: &TiledMesh) -> Result<(), SceneError> {
        if let Some(a) = &self.assoc {
            for (point, f) in a.iter().enumerate() {
                if let Some(face) = f {
                    if !mesh.has_face(*face) {
                        return Err(SceneError::DanglingAssociation { point, face: *face });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Per-face quantities derived from the three vertices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceDerived {
    /// Arithmetic mean of the vertices.
    pub cog: Vec3,
    /// From counter-clockwise vertex order; zero for degenerate faces.
    pub unit_normal: Vec3,
    pub area: f64,
    /// Largest distance from the COG to a vertex.
    pub t_max: f64,
    pub degenerate: bool,
}

impl FaceDerived {
    pub fn of(tri: &Triangle) -> FaceDerived {
        let cog = tri.centroid();
        let n = tri.scaled_normal();
        let area = 0.5 * n.norm();
        let degenerate = !(area >= DEGENERATE_AREA);
        let t_max = tri.v.iter().map(|v| v.distance(cog)).fold(0.0f64, f64::max);
        FaceDerived {
            cog,
            unit_normal: if degenerate {
                Vec3::ZERO
            } else {
                n / (2.0 * area)
            },
            area,
            t_max,
            degenerate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshTile {
    pub tile_id: u32,
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    /// Per-face attributes, including the label column.
    pub face_attrs: Columns,
    pub mbb: Aabb,
}

impl MeshTile {
    /// Validates indices and computes the bounding box.
    pub fn new(
        tile_id: u32,
        vertices: Vec<Vec3>,
        faces: Vec<[u32; 3]>,
    ) -> Result<MeshTile, SceneError> {
        let mbb = aabb_of(&vertices).map_err(|_| SceneError::EmptyTile(tile_id))?;
        let tile = MeshTile {
            tile_id,
            vertices,
            faces,
            face_attrs: Columns::default(),
            mbb,
        };
        tile.check_indices()?;
        Ok(tile)
    }

    fn check_indices(&self) -> Result<(), SceneError> {
        for (fi, f) in self.faces.iter().enumerate() {
            for &idx in f {
                if idx as usize >= self.vertices.len() {
                    return Err(SceneError::DanglingIndex {
                        tile: self.tile_id,
                        face: fi,
                        index: idx,
                        count: self.vertices.len(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        self.check_indices()?;
        self.face_attrs.validate(self.faces.len())
    }

    #[inline]
    pub fn triangle(&self, face: usize) -> Triangle {
        let [a, b, c] = self.faces[face];
        Triangle::new(
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        )
    }

    pub fn face_labels(&self) -> Option<Vec<i32>> {
        self.face_attrs.get(LABEL_COLUMN).map(Column::as_labels)
    }

    pub fn set_face_labels(&mut self, labels: &[i32]) {
        self.face_attrs.set(Column::labels(LABEL_COLUMN, labels));
    }
}

/// One `FaceDerived` per face of the tile.
pub fn compute_face_derived(tile: &MeshTile) -> Vec<FaceDerived> {
    (0..tile.faces.len())
        .map(|f| FaceDerived::of(&tile.triangle(f)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TiledMesh {
    /// Sorted by tile id.
    pub tiles: Vec<MeshTile>,
}

impl TiledMesh {
    pub fn new(mut tiles: Vec<MeshTile>) -> Result<TiledMesh, SceneError> {
        tiles.sort_by_key(|t| t.tile_id);
        for w in tiles.windows(2) {
            if w[0].tile_id == w[1].tile_id {
                return Err(SceneError::DuplicateTile(w[0].tile_id));
            }
        }
        for t in &tiles {
            t.validate()?;
        }
        Ok(TiledMesh { tiles })
    }

    pub fn tile(&self, id: u32) -> Option<&MeshTile> {
        self.tiles
            .binary_search_by_key(&id, |t| t.tile_id)
            .ok()
            .map(|i| &self.tiles[i])
    }

    pub fn tile_mut(&mut self, id: u32) -> Option<&mut MeshTile> {
        self.tiles
            .binary_search_by_key(&id, |t| t.tile_id)
            .ok()
            .map(move |i| &mut self.tiles[i])
    }

    pub fn has_face(&self, f: FaceRef) -> bool {
        self.tile(f.tile)
            .is_some_and(|t| (f.face as usize) < t.faces.len())
    }

    pub fn face_count(&self) -> usize {
        self.tiles.iter().map(|t| t.faces.len()).sum()
    }

    /// Every face reference in (tile, face) order.
    pub fn face_refs(&self) -> impl Iterator<Item = FaceRef> + '_ {
        self.tiles
            .iter()
            .flat_map(|t| (0..t.faces.len() as u32).map(move |f| FaceRef::new(t.tile_id, f)))
    }

    /// Lowest z over all tile bounding boxes.
    pub fn z_floor(&self) -> Option<f64> {
        self.tiles.iter().map(|t| t.mbb.min.z).reduce(f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    pub row: f64,
    pub col: f64,
}

/// Interior and exterior orientation of one central-perspective image.
///
/// Camera coordinates are `x_cam = R (X − C)`; `x` points along image
/// columns, `y` along image rows and `z` along the viewing direction.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub image_id: u32,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k2: f64,
    /// World to camera, row-major.
    pub rotation: [[f64; 3]; 3],
    pub center: Vec3,
}

impl CameraModel {
    /// Checks intrinsic sanity and that `RᵀR = I` within `tol`.
    pub fn validate(&self, tol: f64) -> Result<(), SceneError> {
        if self.width == 0 || self.height == 0 {
            return Err(SceneError::InvalidCamera(
                "image size must be positive".into(),
            ));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(SceneError::InvalidCamera(
                "focal lengths must be positive".into(),
            ));
        }
        let all_finite = [self.fx, self.fy, self.cx, self.cy, self.k1, self.k2]
            .iter()
            .chain(self.rotation.iter().flatten())
            .all(|v| v.is_finite())
            && self.center.is_finite();
        if !all_finite {
            return Err(SceneError::InvalidCamera("non-finite parameter".into()));
        }
        let dev = self.orthonormality_error();
        if dev > tol {
            return Err(SceneError::NonOrthonormalRotation(dev));
        }
        Ok(())
    }

    /// Max |RᵀR − I| entry, plus the deviation of det(R) from +1.
    pub fn orthonormality_error(&self) -> f64 {
        let r = &self.rotation;
        let mut dev = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((dot - want).abs());
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        dev.max((det - 1.0).abs())
    }

    #[inline]
    pub fn row(&self, i: usize) -> Vec3 {
        Vec3::from(self.rotation[i])
    }

    /// Viewing direction in world coordinates.
    pub fn optical_axis(&self) -> Vec3 {
        self.row(2)
    }

    #[inline]
    pub fn to_camera(&self, x: Vec3) -> Vec3 {
        let d = x - self.center;
        Vec3::new(self.row(0).dot(d), self.row(1).dot(d), self.row(2).dot(d))
    }

    #[inline]
    pub fn depth_of(&self, x: Vec3) -> f64 {
        self.row(2).dot(x - self.center)
    }

    /// Camera-frame vector to world frame (`Rᵀ v`).
    #[inline]
    pub fn to_world_direction(&self, v: Vec3) -> Vec3 {
        self.row(0) * v.x + self.row(1) * v.y + self.row(2) * v.z
    }

    fn distort(&self, x: f64, y: f64) -> (f64, f64) {
        if self.k1 == 0.0 && self.k2 == 0.0 {
            return (x, y);
        }
        let r2 = x * x + y * y;
        let s = 1.0 + self.k1 * r2 + self.k2 * r2 * r2;
        (x * s, y * s)
    }

    /// Collinearity mapping with optional radial distortion.
    pub fn project_point(&self, x: Vec3) -> Result<(PixelCoord, f64), SceneError> {
        let c = self.to_camera(x);
        if !(c.z > MIN_DEPTH) {
            return Err(SceneError::BehindCamera(c.z));
        }
        let (xd, yd) = self.distort(c.x / c.z, c.y / c.z);
        Ok((
            PixelCoord {
                row: self.cy + self.fy * yd,
                col: self.cx + self.fx * xd,
            },
            c.z,
        ))
    }

    /// Undistorted ray through a real-valued image position.
    pub fn ray_through(&self, row: f64, col: f64) -> Ray {
        let dir_cam = Vec3::new((col - self.cx) / self.fx, (row - self.cy) / self.fy, 1.0);
        Ray::new(self.center, self.to_world_direction(dir_cam))
            .expect("camera direction has positive z component")
    }

    /// Ray through the center of pixel `(row, col)`.
    pub fn pixel_ray(&self, row: i64, col: i64) -> Result<Ray, SceneError> {
        if row < 0 || col < 0 || row >= self.height as i64 || col >= self.width as i64 {
            return Err(SceneError::OutOfBounds {
                row,
                col,
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.ray_through(row as f64 + 0.5, col as f64 + 0.5))
    }

    /// Integer pixel containing a real-valued image position, if in bounds.
    pub fn pixel_of(&self, px: PixelCoord) -> Option<(u32, u32)> {
        let r = px.row.floor();
        let c = px.col.floor();
        if r >= 0.0 && c >= 0.0 && r < self.height as f64 && c < self.width as f64 {
            Some((r as u32, c as u32))
        } else {
            None
        }
    }

    /// Camera looking from `center` towards `target`; image rows follow the
    /// projection of `-up`.
    pub fn look_at(
        image_id: u32,
        width: u32,
        height: u32,
        focal: f64,
        center: Vec3,
        target: Vec3,
        up: Vec3,
    ) -> Option<CameraModel> {
        let z = (target - center).try_normalize()?;
        let x = z.cross(up).try_normalize()?;
        let y = z.cross(x);
        Some(CameraModel {
            image_id,
            width,
            height,
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            k1: 0.0,
            k2: 0.0,
            rotation: [x.to_array(), y.to_array(), z.to_array()],
            center,
        })
    }

    /// Camera looking straight down (−Z) from `center`, columns along +X.
    pub fn nadir(image_id: u32, width: u32, height: u32, focal: f64, center: Vec3) -> CameraModel {
        CameraModel {
            image_id,
            width,
            height,
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            k1: 0.0,
            k2: 0.0,
            rotation: [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]],
            center,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelEntry {
    pub name: String,
    pub color: [u8; 3],
}

/// Label id to display name and RGB color.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelScheme {
    pub entries: BTreeMap<i32, LabelEntry>,
}

impl LabelScheme {
    pub fn color(&self, label: i32) -> Option<[u8; 3]> {
        self.entries.get(&label).map(|e| e.color)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tile_of(verts: &[[f64; 3]], faces: &[[u32; 3]]) -> MeshTile {
        MeshTile::new(
            0,
            verts.iter().map(|&v| Vec3::from(v)).collect(),
            faces.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn face_derived_examples() {
        let t = tile_of(
            &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            &[[0, 1, 2]],
        );
        let d = compute_face_derived(&t)[0];
        assert!(d.cog.distance(Vec3::new(1.0 / 3.0, 1.0 / 3.0, 0.0)) < 1e-15);
        assert_eq!(d.unit_normal, Vec3::Z);
        assert!((d.area - 0.5).abs() < 1e-15);
        assert!((d.t_max - 5f64.sqrt() / 3.0).abs() < 1e-12);
        assert!((d.t_max - 0.7454).abs() < 1e-4);

        let h = 3f64.sqrt() / 2.0;
        let eq = tile_of(
            &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, h, 0.0]],
            &[[0, 1, 2]],
        );
        assert!((compute_face_derived(&eq)[0].t_max - 1.0 / 3f64.sqrt()).abs() < 1e-12);

        let cw = tile_of(
            &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            &[[0, 2, 1]],
        );
        assert_eq!(compute_face_derived(&cw)[0].unit_normal, -Vec3::Z);

        let deg = tile_of(
            &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            &[[0, 1, 2]],
        );
        assert!(compute_face_derived(&deg)[0].degenerate);
    }

    #[test]
    fn dangling_index_rejected() {
        let err = MeshTile::new(3, vec![Vec3::ZERO, Vec3::X, Vec3::Y], vec![[0, 1, 5]]);
        assert!(matches!(
            err,
            Err(SceneError::DanglingIndex { tile: 3, .. })
        ));
    }

    #[test]
    fn derived_invariant_under_rigid_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let verts: Vec<Vec3> = (0..30)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let faces: Vec<[u32; 3]> = (0..10).map(|i| [3 * i, 3 * i + 1, 3 * i + 2]).collect();
        let t = MeshTile::new(0, verts.clone(), faces.clone()).unwrap();
        let (s, c) = 0.7f64.sin_cos();
        let moved: Vec<Vec3> = verts
            .iter()
            .map(|v| Vec3::new(c * v.x - s * v.y + 10.0, s * v.x + c * v.y - 4.0, v.z + 2.5))
            .collect();
        let t2 = MeshTile::new(0, moved, faces).unwrap();
        let a = compute_face_derived(&t);
        let b = compute_face_derived(&t2);
        let total_a: f64 = a.iter().map(|d| d.area).sum();
        let total_b: f64 = b.iter().map(|d| d.area).sum();
        assert!((total_a - total_b).abs() < 1e-9);
        for (x, y) in a.iter().zip(&b) {
            assert!((x.area - y.area).abs() < 1e-9);
            assert!((x.t_max - y.t_max).abs() < 1e-9);
        }
    }

    fn simple_camera() -> CameraModel {
        CameraModel {
            image_id: 0,
            width: 100,
            height: 100,
            fx: 100.0,
            fy: 100.0,
            cx: 50.0,
            cy: 50.0,
            k1: 0.0,
            k2: 0.0,
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            center: Vec3::ZERO,
        }
    }

    #[test]
    fn projection_examples() {
        let cam = simple_camera();
        let (px, d) = cam.project_point(Vec3::Z).unwrap();
        assert_eq!((px.row, px.col, d), (50.0, 50.0, 1.0));
        let (px, d) = cam.project_point(Vec3::new(0.1, 0.0, 1.0)).unwrap();
        assert!((px.row - 50.0).abs() < 1e-12 && (px.col - 60.0).abs() < 1e-12 && d == 1.0);
        assert!(matches!(
            cam.project_point(-Vec3::Z),
            Err(SceneError::BehindCamera(_))
        ));
    }

    #[test]
    fn pixel_ray_examples() {
        let cam = simple_camera();
        let r = cam.pixel_ray(49, 49).unwrap();
        let want = Vec3::new(-0.005, -0.005, 1.0).try_normalize().unwrap();
        assert!(r.direction.distance(want) < 1e-15);
        assert_eq!(r.origin, Vec3::ZERO);
        // Principal point sits on the corner shared by pixels 49/50, so use a
        // camera whose principal point is a pixel center.
        let mut c2 = simple_camera();
        c2.cx = 50.5;
        c2.cy = 50.5;
        assert!(
            c2.pixel_ray(50, 50)
                .unwrap()
                .direction
                .distance(c2.optical_axis())
                < 1e-15
        );
        assert!(matches!(
            cam.pixel_ray(100, 0),
            Err(SceneError::OutOfBounds { .. })
        ));
        assert!(matches!(
            cam.pixel_ray(0, -1),
            Err(SceneError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn distortion_applies_on_projection_only() {
        let mut cam = simple_camera();
        cam.k1 = 0.1;
        let (px, _) = cam.project_point(Vec3::new(0.5, 0.0, 1.0)).unwrap();
        // x' = 0.5 (1 + 0.1 · 0.25)
        assert!((px.col - (50.0 + 100.0 * 0.5 * 1.025)).abs() < 1e-12);
    }

    #[test]
    fn rotation_check() {
        let mut cam = simple_camera();
        assert!(cam.validate(1e-9).is_ok());
        cam.rotation[0][1] = 0.01;
        assert!(matches!(
            cam.validate(1e-6),
            Err(SceneError::NonOrthonormalRotation(_))
        ));
        let mut mirrored = simple_camera();
        mirrored.rotation[2][2] = -1.0;
        assert!(mirrored.validate(1e-6).is_err());
    }

    #[test]
    fn look_at_is_orthonormal() {
        let cam = CameraModel::look_at(
            1,
            64,
            48,
            50.0,
            Vec3::new(10.0, -5.0, 20.0),
            Vec3::ZERO,
            Vec3::Z,
        )
        .unwrap();
        assert!(cam.orthonormality_error() < 1e-12);
        let (px, _) = cam.project_point(Vec3::ZERO).unwrap();
        assert!((px.row - 24.0).abs() < 1e-9 && (px.col - 32.0).abs() < 1e-9);
        assert!(CameraModel::nadir(0, 10, 10, 5.0, Vec3::Z).orthonormality_error() < 1e-15);
    }

    #[test]
    fn tiled_mesh_rejects_duplicates() {
        let t = tile_of(
            &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            &[[0, 1, 2]],
        );
        assert_eq!(
            TiledMesh::new(vec![t.clone(), t]),
            Err(SceneError::DuplicateTile(0))
        );
    }
}
