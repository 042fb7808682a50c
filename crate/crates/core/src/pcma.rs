//! Point cloud ↔ mesh association.
//!
//! Every face collects the points that represent the same surface in three
//! steps: a ball query around the face centroid, removal of points whose
//! orthogonal projection misses the face, and adaptive thresholding of the
//! signed distance to the face plane. The first threshold level that links
//! any point wins ("early stopping"), which favours near-surface points.
//!
//! A point can pass the filters of several faces where association prisms
//! overlap; it is then given to the face with the smallest absolute signed
//! distance, ties going to the lowest `(tile, face)`.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geom::{
    classify_point_in_triangle, project_point_to_plane, Containment, GeomError, Plane, Triangle,
    Vec3, DEFAULT_EDGE_TOLERANCE,
};
use crate::index::{IndexError, PointIndex};
use crate::scene::{compute_face_derived, FaceDerived, FaceRef, PointCloud, TiledMesh};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PcmaError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("mesh has no valid faces")]
    NoValidFaces,
    #[error("invalid threshold schedule: {0}")]
    InvalidSchedule(String),
}

impl From<IndexError> for PcmaError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::EmptyCloud => PcmaError::EmptyCloud,
            IndexError::NoValidFaces(_) => PcmaError::NoValidFaces,
        }
    }
}

/// One asymmetric threshold band: `−minus ≤ d ≤ plus`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdLevel {
    pub minus: f64,
    pub plus: f64,
}

impl ThresholdLevel {
    #[inline]
    pub fn admits(&self, d: f64) -> bool {
        d >= -self.minus && d <= self.plus
    }
}

/// Ordered threshold levels; both bounds are non-decreasing with the level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdSchedule {
    levels: Vec<ThresholdLevel>,
}

impl ThresholdSchedule {
    pub fn new(levels: Vec<ThresholdLevel>) -> Result<ThresholdSchedule, PcmaError> {
        if levels.is_empty() {
            return Err(PcmaError::InvalidSchedule(
                "at least one level required".into(),
            ));
        }
        if levels.len() > 254 {
            return Err(PcmaError::InvalidSchedule(
                "at most 254 levels supported".into(),
            ));
        }
        for l in &levels {
            if !(l.minus.is_finite() && l.plus.is_finite() && l.minus >= 0.0 && l.plus >= 0.0) {
                return Err(PcmaError::InvalidSchedule(format!(
                    "thresholds must be finite and non-negative, got -{}/+{}",
                    l.minus, l.plus
                )));
            }
        }
        for w in levels.windows(2) {
            if w[1].minus < w[0].minus || w[1].plus < w[0].plus {
                return Err(PcmaError::InvalidSchedule(
                    "thresholds must not decrease with ascending level".into(),
                ));
            }
        }
        Ok(ThresholdSchedule { levels })
    }

    /// Symmetric levels `±θ`.
    pub fn symmetric(thetas: &[f64]) -> Result<ThresholdSchedule, PcmaError> {
        Self::new(
            thetas
                .iter()
                .map(|&t| ThresholdLevel { minus: t, plus: t })
                .collect(),
        )
    }

    /// ±5 cm, ±10 cm, ±15 cm.
    pub fn h3d() -> ThresholdSchedule {
        Self::symmetric(&[0.05, 0.10, 0.15]).expect("valid preset")
    }

    /// ±30 cm, ±60 cm, ±120 cm.
    pub fn v3d() -> ThresholdSchedule {
        Self::symmetric(&[0.30, 0.60, 1.20]).expect("valid preset")
    }

    pub fn levels(&self) -> &[ThresholdLevel] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Largest threshold in either direction over all levels.
    pub fn theta_max(&self) -> f64 {
        self.levels
            .iter()
            .map(|l| l.minus.max(l.plus))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundaryPolicy {
    /// Points projecting onto face edges or vertices are not linked.
    Exclude,
    Include,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcmaConfig {
    pub schedule: ThresholdSchedule,
    pub boundary_policy: BoundaryPolicy,
    pub edge_tolerance: f64,
}

impl Default for PcmaConfig {
    fn default() -> Self {
        PcmaConfig {
            schedule: ThresholdSchedule::h3d(),
            boundary_policy: BoundaryPolicy::Exclude,
            edge_tolerance: DEFAULT_EDGE_TOLERANCE,
        }
    }
}

/// Ball radius enclosing the whole face and the threshold band above and
/// below it: `√(t_max² + θ²)`.
pub fn association_radius(t_max: f64, theta_max: f64) -> f64 {
    t_max.hypot(theta_max)
}

/// A point that survived the out-of-face filter, with its signed distance
/// to the face plane (positive along the face normal).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub index: u32,
    pub signed_distance: f64,
}

/// Drops candidates whose orthogonal projection falls outside the face.
/// Boundary projections are kept only under [`BoundaryPolicy::Include`].
pub fn filter_out_of_face(
    candidates: &[u32],
    tri: &Triangle,
    positions: &[Vec3],
    policy: BoundaryPolicy,
    tol: f64,
) -> Result<Vec<Candidate>, GeomError> {
    if tri.is_degenerate() {
        return Err(GeomError::DegenerateTriangle);
    }
    let plane = Plane::from_point_normal(tri.centroid(), tri.scaled_normal())
        .ok_or(GeomError::DegenerateTriangle)?;
    let mut kept = Vec::new();
    for &i in candidates {
        let (foot, d) = project_point_to_plane(positions[i as usize], &plane);
        let keep = match classify_point_in_triangle(foot, tri, tol)? {
            Containment::Inside => true,
            Containment::OnBoundary => policy == BoundaryPolicy::Include,
            Containment::Outside => false,
        };
        if keep {
            kept.push(Candidate {
                index: i,
                signed_distance: d,
            });
        }
    }
    Ok(kept)
}

/// Returns the positions (into `signed_distances`) admitted by the first
/// level that admits any, and that level (1-based).
pub fn adaptive_threshold_filter(
    signed_distances: &[f64],
    schedule: &ThresholdSchedule,
) -> (Vec<usize>, Option<u8>) {
    for (l, level) in schedule.levels().iter().enumerate() {
        let kept: Vec<usize> = signed_distances
            .iter()
            .enumerate()
            .filter(|(_, &d)| level.admits(d))
            .map(|(i, _)| i)
            .collect();
        if !kept.is_empty() {
            return (kept, Some(l as u8 + 1));
        }
    }
    (Vec::new(), None)
}

/// Points one face links before cross-face resolution.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FaceCandidates {
    pub kept: Vec<Candidate>,
    pub level: Option<u8>,
}

/// Ball query, out-of-face filter and adaptive thresholding for one face.
pub fn associate_face(
    tri: &Triangle,
    derived: &FaceDerived,
    index: &PointIndex,
    positions: &[Vec3],
    cfg: &PcmaConfig,
    scratch: &mut Vec<u32>,
) -> Result<FaceCandidates, GeomError> {
    if derived.degenerate {
        return Err(GeomError::DegenerateTriangle);
    }
    let r = association_radius(derived.t_max, cfg.schedule.theta_max());
    // Slack so that rounding never drops a point lying exactly on the sphere;
    // the later filters are exact.
    index.ball_query_into(derived.cog, r * (1.0 + 1e-9) + 1e-12, scratch);
    let inside = filter_out_of_face(
        scratch,
        tri,
        positions,
        cfg.boundary_policy,
        cfg.edge_tolerance,
    )?;
    let distances: Vec<f64> = inside.iter().map(|c| c.signed_distance).collect();
    let (kept, level) = adaptive_threshold_filter(&distances, &cfg.schedule);
    Ok(FaceCandidates {
        kept: kept.into_iter().map(|k| inside[k]).collect(),
        level,
    })
}

/// Final association of one face.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FaceLink {
    /// Ascending point indices.
    pub points: Vec<u32>,
    /// Threshold level (1-based) that linked the points; `None` when the
    /// face ends up without points.
    pub level: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileAssociation {
    pub tile_id: u32,
    pub faces: Vec<FaceLink>,
}

/// Bidirectional point ↔ face links.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceAssociation {
    /// Same order as the mesh tiles.
    pub tiles: Vec<TileAssociation>,
    /// Per point: the linked face or `None` (serialized as −1).
    pub point_faces: Vec<Option<FaceRef>>,
}

impl FaceAssociation {
    pub fn tile(&self, tile_id: u32) -> Option<&TileAssociation> {
        self.tiles
            .binary_search_by_key(&tile_id, |t| t.tile_id)
            .ok()
            .map(|i| &self.tiles[i])
    }

    pub fn face(&self, f: FaceRef) -> Option<&FaceLink> {
        self.tile(f.tile).and_then(|t| t.faces.get(f.face as usize))
    }

    pub fn associated_points(&self) -> usize {
        self.point_faces.iter().filter(|f| f.is_some()).count()
    }

    /// Rebuilds the per-face lists from per-point links (levels unknown).
    pub fn from_point_faces(
        mesh: &TiledMesh,
        point_faces: Vec<Option<FaceRef>>,
    ) -> FaceAssociation {
        let mut tiles: Vec<TileAssociation> = mesh
            .tiles
            .iter()
            .map(|t| TileAssociation {
                tile_id: t.tile_id,
                faces: vec![FaceLink::default(); t.faces.len()],
            })
            .collect();
        for (p, f) in point_faces.iter().enumerate() {
            if let Some(f) = f {
                if let Ok(ti) = tiles.binary_search_by_key(&f.tile, |t| t.tile_id) {
                    if let Some(link) = tiles[ti].faces.get_mut(f.face as usize) {
                        link.points.push(p as u32);
                    }
                }
            }
        }
        FaceAssociation { tiles, point_faces }
    }

    /// Per-face lists are disjoint and agree with the per-point links.
    pub fn is_consistent(&self) -> bool {
        let mut seen = vec![None; self.point_faces.len()];
        for t in &self.tiles {
            for (fi, link) in t.faces.iter().enumerate() {
                let f = FaceRef::new(t.tile_id, fi as u32);
                for &p in &link.points {
                    match seen.get_mut(p as usize) {
                        Some(slot @ None) => *slot = Some(f),
                        _ => return false,
                    }
                }
            }
        }
        seen == self.point_faces
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PcmaStats {
    pub faces: usize,
    pub degenerate_faces: usize,
    /// Faces linked at each level (index 0 = level 1), after resolution.
    pub faces_per_level: Vec<usize>,
    pub points: usize,
    pub associated_points: usize,
    /// Points claimed by more than one face before resolution.
    pub contested_points: usize,
}

/// Runs the association over all tiles. Results do not depend on the
/// number of worker threads.
pub fn pcma_run(
    mesh: &TiledMesh,
    cloud: &PointCloud,
    cfg: &PcmaConfig,
) -> Result<(FaceAssociation, PcmaStats), PcmaError> {
    if cloud.is_empty() {
        return Err(PcmaError::EmptyCloud);
    }
    let index = PointIndex::build(&cloud.positions)?;
    let derived: Vec<Vec<FaceDerived>> = mesh.tiles.par_iter().map(compute_face_derived).collect();
    let degenerate_faces: usize = derived
        .iter()
        .map(|d| d.iter().filter(|f| f.degenerate).count())
        .sum();
    if degenerate_faces == mesh.face_count() {
        return Err(PcmaError::NoValidFaces);
    }
    for (tile, d) in mesh.tiles.iter().zip(&derived) {
        let n = d.iter().filter(|f| f.degenerate).count();
        if n > 0 {
            log::warn!(
                "tile {}: {} degenerate faces left unassociated",
                tile.tile_id,
                n
            );
        }
    }

    let per_tile: Vec<Vec<FaceCandidates>> = mesh
        .tiles
        .iter()
        .zip(&derived)
        .map(|(tile, d)| {
            (0..tile.faces.len())
                .into_par_iter()
                .map_init(Vec::new, |scratch, f| {
                    associate_face(
                        &tile.triangle(f),
                        &d[f],
                        &index,
                        &cloud.positions,
                        cfg,
                        scratch,
                    )
                    .unwrap_or_default()
                })
                .collect()
        })
        .collect();

    Ok(resolve(
        mesh,
        cloud.len(),
        per_tile,
        degenerate_faces,
        cfg.schedule.len(),
    ))
}

/// Cross-face resolution: each point goes to the claim with minimal
/// `(|d|, tile, face)`.
pub(crate) fn resolve(
    mesh: &TiledMesh,
    n_points: usize,
    per_tile: Vec<Vec<FaceCandidates>>,
    degenerate_faces: usize,
    n_levels: usize,
) -> (FaceAssociation, PcmaStats) {
    let mut best: Vec<Option<(f64, FaceRef)>> = vec![None; n_points];
    let mut claims = vec![0u8; n_points];
    for (tile, faces) in mesh.tiles.iter().zip(&per_tile) {
        for (fi, fc) in faces.iter().enumerate() {
            let f = FaceRef::new(tile.tile_id, fi as u32);
            for c in &fc.kept {
                let p = c.index as usize;
                claims[p] = claims[p].saturating_add(1);
                let key = (c.signed_distance.abs(), f);
                let better = match best[p] {
                    None => true,
                    Some((d, g)) => key.0.total_cmp(&d).then(key.1.cmp(&g)).is_lt(),
                };
                if better {
                    best[p] = Some(key);
                }
            }
        }
    }
    let point_faces: Vec<Option<FaceRef>> = best.iter().map(|b| b.map(|(_, f)| f)).collect();
    let mut assoc = FaceAssociation::from_point_faces(mesh, point_faces);
    let mut faces_per_level = vec![0usize; n_levels];
    for (ta, faces) in assoc.tiles.iter_mut().zip(&per_tile) {
        for (link, fc) in ta.faces.iter_mut().zip(faces) {
            if !link.points.is_empty() {
                link.level = fc.level;
                if let Some(l) = fc.level {
                    faces_per_level[l as usize - 1] += 1;
                }
            }
        }
    }
    let stats = PcmaStats {
        faces: mesh.face_count(),
        degenerate_faces,
        faces_per_level,
        points: n_points,
        associated_points: assoc.associated_points(),
        contested_points: claims.iter().filter(|&&c| c > 1).count(),
    };
    (assoc, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::MeshTile;

    fn sched() -> ThresholdSchedule {
        ThresholdSchedule::h3d()
    }

    #[test]
    fn radius_examples() {
        assert_eq!(association_radius(3.0, 4.0), 5.0);
        assert_eq!(association_radius(2.5, 0.0), 2.5);
        assert!((association_radius(0.4, 0.3) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn threshold_examples() {
        let s = sched();
        assert_eq!(
            adaptive_threshold_filter(&[0.03, 0.12], &s),
            (vec![0], Some(1))
        );
        // Level 2 (±0.10) admits only −0.08; 0.12 would need level 3.
        assert_eq!(
            adaptive_threshold_filter(&[0.12, -0.08], &s),
            (vec![1], Some(2))
        );
        assert_eq!(
            adaptive_threshold_filter(&[0.12, -0.14], &s),
            (vec![0, 1], Some(3))
        );
        assert_eq!(adaptive_threshold_filter(&[0.5], &s), (vec![], None));
    }

    #[test]
    fn asymmetric_levels() {
        let s = ThresholdSchedule::new(vec![
            ThresholdLevel {
                minus: 0.0,
                plus: 0.1,
            },
            ThresholdLevel {
                minus: 0.5,
                plus: 0.1,
            },
        ])
        .unwrap();
        assert_eq!(adaptive_threshold_filter(&[-0.05], &s), (vec![0], Some(2)));
        assert_eq!(
            adaptive_threshold_filter(&[0.05, -0.05], &s),
            (vec![0], Some(1))
        );
    }

    #[test]
    fn schedule_validation() {
        assert!(ThresholdSchedule::new(vec![]).is_err());
        assert!(ThresholdSchedule::symmetric(&[0.2, 0.1]).is_err());
        assert!(ThresholdSchedule::symmetric(&[-0.1]).is_err());
        assert!(ThresholdSchedule::symmetric(&[f64::NAN]).is_err());
        assert_eq!(ThresholdSchedule::v3d().theta_max(), 1.2);
    }

    fn tri() -> Triangle {
        Triangle::new(
            Vec3::ZERO,
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(0.0, 2.0, 0.0),
        )
    }

    #[test]
    fn out_of_face_examples() {
        let t = tri();
        let pts = vec![
            t.centroid() + Vec3::Z * 0.02,
            Vec3::new(3.0, 3.0, 0.0),
            Vec3::new(1.0, 1.0, 0.01),
        ];
        let ex = filter_out_of_face(&[0, 1, 2], &t, &pts, BoundaryPolicy::Exclude, 1e-9).unwrap();
        assert_eq!(ex.iter().map(|c| c.index).collect::<Vec<_>>(), vec![0]);
        assert!((ex[0].signed_distance - 0.02).abs() < 1e-15);
        let inc = filter_out_of_face(&[0, 1, 2], &t, &pts, BoundaryPolicy::Include, 1e-9).unwrap();
        assert_eq!(inc.iter().map(|c| c.index).collect::<Vec<_>>(), vec![0, 2]);
    }

    fn square() -> TiledMesh {
        let tile = MeshTile::new(
            0,
            vec![Vec3::ZERO, Vec3::X, Vec3::new(1.0, 1.0, 0.0), Vec3::Y],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        TiledMesh::new(vec![tile]).unwrap()
    }

    #[test]
    fn offset_point_linked_at_level_two() {
        let mesh = square();
        let cloud = PointCloud::new(vec![Vec3::new(0.7, 0.2, 0.07)]);
        let (a, _) = pcma_run(&mesh, &cloud, &PcmaConfig::default()).unwrap();
        assert_eq!(a.point_faces[0], Some(FaceRef::new(0, 0)));
        assert_eq!(a.tiles[0].faces[0].level, Some(2));
        assert_eq!(a.tiles[0].faces[1].level, None);
    }

    #[test]
    fn shared_edge_point_follows_policy() {
        let mesh = square();
        let cloud = PointCloud::new(vec![Vec3::new(0.5, 0.5, 0.01)]);
        let (a, _) = pcma_run(&mesh, &cloud, &PcmaConfig::default()).unwrap();
        assert_eq!(a.point_faces[0], None);
        let cfg = PcmaConfig {
            boundary_policy: BoundaryPolicy::Include,
            ..Default::default()
        };
        let (a, stats) = pcma_run(&mesh, &cloud, &cfg).unwrap();
        // Equal distance to both faces: lowest face id wins.
        assert_eq!(a.point_faces[0], Some(FaceRef::new(0, 0)));
        assert_eq!(stats.contested_points, 1);
        assert!(a.is_consistent());
    }

    #[test]
    fn empty_inputs() {
        let mesh = square();
        assert_eq!(
            pcma_run(&mesh, &PointCloud::default(), &PcmaConfig::default()).unwrap_err(),
            PcmaError::EmptyCloud
        );
        let flat =
            MeshTile::new(0, vec![Vec3::ZERO, Vec3::X, Vec3::X * 2.0], vec![[0, 1, 2]]).unwrap();
        let flat = TiledMesh::new(vec![flat]).unwrap();
        assert_eq!(
            pcma_run(
                &flat,
                &PointCloud::new(vec![Vec3::ZERO]),
                &PcmaConfig::default()
            )
            .unwrap_err(),
            PcmaError::NoValidFaces
        );
    }
}
