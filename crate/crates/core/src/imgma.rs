//! Image ↔ mesh association.
//!
//! Per image: (I) tiles whose bounding box meets the stretched camera
//! pyramid are preselected, (II) every pixel ray is cast against each
//! preselected tile, (III) the per-tile results are fused by keeping the
//! hit of minimal depth. Only linked pixels are stored (sparse pixel cloud).

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geom::{
    point_in_polyhedron, segment_polygon_intersect, Aabb, ConvexPolyhedron, Plane, Vec3,
};
use crate::index::FaceBvh;
use crate::scene::{CameraModel, Columns, FaceRef, TiledMesh};

/// Default tolerance (meters) under which two depths count as equal.
pub const DEFAULT_DEPTH_TIE_TOLERANCE: f64 = 1e-9;
/// Boxes thinner than this along an axis are inflated for the pyramid test.
const FLAT_BOX_PAD: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImgmaError {
    #[error("floor z={floor} is not below the projection center z={center}")]
    InvalidFloor { floor: f64, center: f64 },
    #[error("camera pyramid is unbounded (a corner ray does not reach the floor)")]
    UnboundedPyramid,
    #[error("camera pyramid is degenerate")]
    DegeneratePyramid,
}

/// Camera frustum from the projection center through the image corners,
/// cut below by a horizontal floor and optionally beyond a far depth.
#[derive(Debug, Clone)]
pub struct CameraPyramid {
    pub poly: ConvexPolyhedron,
    pub apex: Vec3,
    pub z_floor: Option<f64>,
}

/// Pyramid limited by the floor `z ≥ z_floor`. All four corner rays must
/// descend, otherwise the region is unbounded.
pub fn build_camera_pyramid(cam: &CameraModel, z_floor: f64) -> Result<CameraPyramid, ImgmaError> {
    build_camera_pyramid_bounded(cam, Some(z_floor), None)
}

/// General form: optional floor and optional far depth (`z_cam ≤ far`).
pub fn build_camera_pyramid_bounded(
    cam: &CameraModel,
    z_floor: Option<f64>,
    far_depth: Option<f64>,
) -> Result<CameraPyramid, ImgmaError> {
    let apex = cam.center;
    if let Some(f) = z_floor {
        if !(f < apex.z) {
            return Err(ImgmaError::InvalidFloor {
                floor: f,
                center: apex.z,
            });
        }
    }
    let (h, w) = (cam.height as f64, cam.width as f64);
    let corners = [(0.0, 0.0), (0.0, w), (h, w), (h, 0.0)];
    let dirs: Vec<Vec3> = corners
        .iter()
        .map(|&(r, c)| cam.ray_through(r, c).direction)
        .collect();
    if far_depth.is_none() && (z_floor.is_none() || dirs.iter().any(|d| d.z >= -1e-12)) {
        return Err(ImgmaError::UnboundedPyramid);
    }
    let inward = dirs.iter().fold(Vec3::ZERO, |a, &d| a + d);
    let mut planes = Vec::with_capacity(6);
    for i in 0..4 {
        let mut n = dirs[i].cross(dirs[(i + 1) % 4]);
        if n.dot(inward) < 0.0 {
            n = -n;
        }
        planes.push(Plane::from_point_normal(apex, n).ok_or(ImgmaError::DegeneratePyramid)?);
    }
    if let Some(f) = z_floor {
        planes.push(Plane {
            unit_normal: Vec3::Z,
            offset: f,
        });
    }
    if let Some(far) = far_depth {
        let axis = cam.optical_axis();
        planes.push(Plane {
            unit_normal: -axis,
            offset: -(axis.dot(apex) + far),
        });
    }
    let poly = ConvexPolyhedron::from_planes(planes).map_err(|_| ImgmaError::DegeneratePyramid)?;
    Ok(CameraPyramid {
        poly,
        apex,
        z_floor,
    })
}

/// Which test of the three-stage box check succeeded first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum VisibilityStage {
    /// A box corner lies inside the pyramid.
    BoxCorner = 1,
    /// A pyramid edge meets a box face (or a pyramid vertex lies in the box).
    PyramidEdge = 2,
    /// A box edge meets a pyramid face.
    BoxEdge = 3,
}

fn inflate_flat(b: &Aabb) -> Aabb {
    let mut out = *b;
    for axis in 0..3 {
        if b.max[axis] - b.min[axis] < FLAT_BOX_PAD {
            let (lo, hi) = match axis {
                0 => (&mut out.min.x, &mut out.max.x),
                1 => (&mut out.min.y, &mut out.max.y),
                _ => (&mut out.min.z, &mut out.max.z),
            };
            *lo -= FLAT_BOX_PAD;
            *hi += FLAT_BOX_PAD;
        }
    }
    out
}

/// Three-stage pyramid/box overlap test; later stages are skipped once one
/// succeeds.
pub fn mbb_visible(pyramid: &CameraPyramid, bbox: &Aabb) -> (bool, Option<VisibilityStage>) {
    let b = inflate_flat(bbox);
    let corners = b.corners();
    if corners
        .iter()
        .any(|&c| point_in_polyhedron(c, &pyramid.poly))
    {
        return (true, Some(VisibilityStage::BoxCorner));
    }
    let poly = &pyramid.poly;
    let pyramid_vertex_in_box = poly.vertices.iter().any(|&v| b.contains_point(v, 1e-9));
    let box_faces: Vec<Vec<Vec3>> = Aabb::FACES
        .iter()
        .map(|f| f.iter().map(|&i| corners[i]).collect())
        .collect();
    // Edges leaving the projection center first.
    let mut edges = poly.edges.clone();
    edges.sort_by_key(|&(a, b)| {
        let from_apex = poly.vertices[a].distance(pyramid.apex) < 1e-9
            || poly.vertices[b].distance(pyramid.apex) < 1e-9;
        (!from_apex, a, b)
    });
    let edge_hit = edges.iter().any(|&(a, e)| {
        box_faces.iter().any(|face| {
            segment_polygon_intersect(poly.vertices[a], poly.vertices[e], face).unwrap_or(true)
        })
    });
    if pyramid_vertex_in_box || edge_hit {
        return (true, Some(VisibilityStage::PyramidEdge));
    }
    let face_polys: Vec<Vec<Vec3>> = (0..poly.faces.len())
        .map(|f| poly.face_polygon(f))
        .collect();
    let box_edge_hit = Aabb::EDGES.iter().any(|&(i, j)| {
        face_polys
            .iter()
            .any(|face| segment_polygon_intersect(corners[i], corners[j], face).unwrap_or(true))
    });
    if box_edge_hit {
        return (true, Some(VisibilityStage::BoxEdge));
    }
    (false, None)
}

/// Preselection outcome for one image.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TileSelection {
    pub visible: Vec<u32>,
    /// Number of tiles accepted at each stage (index 0 = stage 1).
    pub stage_counts: [usize; 3],
}

/// Tiles whose bounding box intersects the stretched camera pyramid. The
/// floor is the lowest bounding-box z over all tiles; a far cap just beyond
/// the deepest box corner keeps the region bounded for oblique views.
pub fn select_visible_tiles(cam: &CameraModel, mesh: &TiledMesh) -> TileSelection {
    let mut sel = TileSelection::default();
    let Some(z_floor) = mesh.z_floor() else {
        return sel;
    };
    let reach = mesh
        .tiles
        .iter()
        .flat_map(|t| inflate_flat(&t.mbb).corners())
        .map(|c| cam.depth_of(c))
        .fold(f64::NEG_INFINITY, f64::max);
    if !(reach > 0.0) {
        return sel;
    }
    let far = reach * (1.0 + 1e-6) + 1.0;
    let floor = (z_floor < cam.center.z).then_some(z_floor);
    let pyramid = match build_camera_pyramid_bounded(cam, floor, Some(far)) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("image {}: {e}", cam.image_id);
            return sel;
        }
    };
    for tile in &mesh.tiles {
        if let (true, Some(stage)) = mbb_visible(&pyramid, &tile.mbb) {
            sel.visible.push(tile.tile_id);
            sel.stage_counts[stage as usize - 1] += 1;
        }
    }
    sel
}

/// One ray-cast hit of a pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelHit {
    pub row: u32,
    pub col: u32,
    /// Camera z of the hit point.
    pub depth: f64,
    pub face_id: u32,
}

/// Pixel rectangle (rows, cols; half-open) that can see `bbox`.
fn pixel_window(cam: &CameraModel, bbox: &Aabb) -> Option<(u32, u32, u32, u32)> {
    let full = Some((0, cam.height, 0, cam.width));
    let mut rmin = f64::INFINITY;
    let mut rmax = f64::NEG_INFINITY;
    let mut cmin = f64::INFINITY;
    let mut cmax = f64::NEG_INFINITY;
    for c in bbox.corners() {
        let p = cam.to_camera(c);
        if p.z <= 1e-6 {
            return full;
        }
        let col = cam.cx + cam.fx * p.x / p.z;
        let row = cam.cy + cam.fy * p.y / p.z;
        rmin = rmin.min(row);
        rmax = rmax.max(row);
        cmin = cmin.min(col);
        cmax = cmax.max(col);
    }
    let clamp = |v: f64, hi: u32| v.max(0.0).min(hi as f64) as u32;
    let r0 = clamp(rmin.floor() - 1.0, cam.height);
    let r1 = clamp(rmax.ceil() + 2.0, cam.height);
    let c0 = clamp(cmin.floor() - 1.0, cam.width);
    let c1 = clamp(cmax.ceil() + 2.0, cam.width);
    (r0 < r1 && c0 < c1).then_some((r0, r1, c0, c1))
}

/// Casts every pixel ray of `cam` against one tile; row-major output.
pub fn raycast_image_tile(cam: &CameraModel, bvh: &FaceBvh) -> Vec<PixelHit> {
    let Some((r0, r1, c0, c1)) = pixel_window(cam, &bvh.root_bounds()) else {
        return Vec::new();
    };
    (r0..r1)
        .into_par_iter()
        .flat_map_iter(|row| {
            (c0..c1).filter_map(move |col| {
                let ray = cam.ray_through(row as f64 + 0.5, col as f64 + 0.5);
                bvh.raycast(&ray).map(|h| PixelHit {
                    row,
                    col,
                    depth: cam.depth_of(h.hit),
                    face_id: h.face_id,
                })
            })
        })
        .collect()
}

/// One linked pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelRecord {
    pub row: u32,
    pub col: u32,
    pub depth: f64,
    pub tile_id: u32,
    pub face_id: u32,
}

impl PixelRecord {
    pub fn face(&self) -> FaceRef {
        FaceRef::new(self.tile_id, self.face_id)
    }
}

/// Linked pixels of one image, row-major, at most one per pixel.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparsePixelCloud {
    pub image_id: u32,
    pub records: Vec<PixelRecord>,
    /// Optional per-record attributes.
    pub attributes: Columns,
}

impl SparsePixelCloud {
    pub fn empty(image_id: u32) -> SparsePixelCloud {
        SparsePixelCloud {
            image_id,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Strictly increasing `(row, col)`.
    pub fn is_sorted_unique(&self) -> bool {
        self.records
            .windows(2)
            .all(|w| (w[0].row, w[0].col) < (w[1].row, w[1].col))
    }

    /// Position of the record at `(row, col)`.
    pub fn find(&self, row: u32, col: u32) -> Option<usize> {
        self.records
            .binary_search_by(|r| (r.row, r.col).cmp(&(row, col)))
            .ok()
    }
}

/// Depth fusion across tiles: the minimal depth wins; hits within
/// `tie_tol` of the minimum go to the lowest `(tile, face)`. Independent of
/// the order of `per_tile`.
pub fn fuse_depth(
    image_id: u32,
    width: u32,
    height: u32,
    per_tile: &[(u32, Vec<PixelHit>)],
    tie_tol: f64,
) -> SparsePixelCloud {
    let n = width as usize * height as usize;
    let mut min_depth = vec![f64::INFINITY; n];
    for (_, hits) in per_tile {
        for h in hits {
            let slot = &mut min_depth[h.row as usize * width as usize + h.col as usize];
            if h.depth < *slot {
                *slot = h.depth;
            }
        }
    }
    let mut winner: Vec<Option<PixelRecord>> = vec![None; n];
    for (tile_id, hits) in per_tile {
        for h in hits {
            let i = h.row as usize * width as usize + h.col as usize;
            if h.depth > min_depth[i] + tie_tol {
                continue;
            }
            let cand = PixelRecord {
                row: h.row,
                col: h.col,
                depth: h.depth,
                tile_id: *tile_id,
                face_id: h.face_id,
            };
            let replace = match &winner[i] {
                None => true,
                Some(w) => (cand.tile_id, cand.face_id) < (w.tile_id, w.face_id),
            };
            if replace {
                winner[i] = Some(cand);
            }
        }
    }
    SparsePixelCloud {
        image_id,
        records: winner.into_iter().flatten().collect(),
        attributes: Columns::default(),
    }
}

/// Image → visible tiles and its transpose.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct VisibilityTable {
    pub image_tiles: BTreeMap<u32, Vec<u32>>,
    pub tile_images: BTreeMap<u32, Vec<u32>>,
}

impl VisibilityTable {
    pub fn from_image_rows(rows: BTreeMap<u32, Vec<u32>>) -> VisibilityTable {
        let mut tile_images: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for (&img, tiles) in &rows {
            for &t in tiles {
                tile_images.entry(t).or_default().push(img);
            }
        }
        VisibilityTable {
            image_tiles: rows,
            tile_images,
        }
    }

    pub fn is_transpose_consistent(&self) -> bool {
        let forward: Vec<(u32, u32)> = self
            .image_tiles
            .iter()
            .flat_map(|(&i, ts)| ts.iter().map(move |&t| (i, t)))
            .collect();
        let mut backward: Vec<(u32, u32)> = self
            .tile_images
            .iter()
            .flat_map(|(&t, is)| is.iter().map(move |&i| (i, t)))
            .collect();
        backward.sort_unstable();
        let mut f = forward;
        f.sort_unstable();
        f == backward
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImgmaConfig {
    pub depth_tie_tol: f64,
}

impl Default for ImgmaConfig {
    fn default() -> Self {
        ImgmaConfig {
            depth_tie_tol: DEFAULT_DEPTH_TIE_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ImgmaStats {
    pub images: usize,
    pub image_tile_pairs: usize,
    pub stage_counts: [usize; 3],
    pub linked_pixels: usize,
    pub degenerate_faces: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ImgmaOutput {
    pub visibility: VisibilityTable,
    /// Same order as the input cameras.
    pub clouds: Vec<SparsePixelCloud>,
    pub stats: ImgmaStats,
}

/// BVHs for every tile with at least one valid face.
pub fn build_tile_bvhs(mesh: &TiledMesh) -> BTreeMap<u32, FaceBvh> {
    mesh.tiles
        .par_iter()
        .filter_map(|t| match FaceBvh::build(t) {
            Ok(b) => Some((t.tile_id, b)),
            Err(e) => {
                log::warn!("{e}");
                None
            }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Steps I–III for every camera, parallel over images.
pub fn imgma_run(cameras: &[CameraModel], mesh: &TiledMesh, cfg: &ImgmaConfig) -> ImgmaOutput {
    let bvhs = build_tile_bvhs(mesh);
    let per_image: Vec<(SparsePixelCloud, TileSelection, Option<String>)> = cameras
        .par_iter()
        .map(|cam| {
            if let Err(e) = cam.validate(1e-6) {
                let msg = format!("image {} skipped: {e}", cam.image_id);
                log::warn!("{msg}");
                return (
                    SparsePixelCloud::empty(cam.image_id),
                    TileSelection::default(),
                    Some(msg),
                );
            }
            let sel = select_visible_tiles(cam, mesh);
            let per_tile: Vec<(u32, Vec<PixelHit>)> = sel
                .visible
                .par_iter()
                .filter_map(|t| bvhs.get(t).map(|b| (*t, raycast_image_tile(cam, b))))
                .collect();
            let cloud = fuse_depth(
                cam.image_id,
                cam.width,
                cam.height,
                &per_tile,
                cfg.depth_tie_tol,
            );
            let warn = sel
                .visible
                .is_empty()
                .then(|| format!("image {}: no visible tiles", cam.image_id));
            (cloud, sel, warn)
        })
        .collect();

    let mut stats = ImgmaStats {
        images: cameras.len(),
        degenerate_faces: bvhs.values().map(|b| b.degenerate_faces).sum(),
        ..Default::default()
    };
    let mut rows = BTreeMap::new();
    let mut clouds = Vec::with_capacity(per_image.len());
    for (cloud, sel, warn) in per_image {
        stats.image_tile_pairs += sel.visible.len();
        for s in 0..3 {
            stats.stage_counts[s] += sel.stage_counts[s];
        }
        stats.linked_pixels += cloud.len();
        stats.warnings.extend(warn);
        rows.insert(cloud.image_id, sel.visible);
        clouds.push(cloud);
    }
    ImgmaOutput {
        visibility: VisibilityTable::from_image_rows(rows),
        clouds,
        stats,
    }
}

/// Face → linked pixels `(image_id, row, col)` across all images.
pub fn face_pixels(clouds: &[SparsePixelCloud]) -> BTreeMap<FaceRef, Vec<(u32, u32, u32)>> {
    let mut out: BTreeMap<FaceRef, Vec<(u32, u32, u32)>> = BTreeMap::new();
    for c in clouds {
        for r in &c.records {
            out.entry(r.face())
                .or_default()
                .push((c.image_id, r.row, r.col));
        }
    }
    out
}
