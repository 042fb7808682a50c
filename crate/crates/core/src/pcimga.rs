//! Point cloud ↔ image association.
//!
//! Visibility is mesh-mediated: a point is visible in an image when its
//! associated face owns at least one linked pixel there. Visible points are
//! then projected with the collinearity equations; per pixel only the point
//! of minimal depth is retained.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::imgma::SparsePixelCloud;
use crate::pcma::FaceAssociation;
use crate::scene::{CameraModel, FaceRef, PointCloud, SceneError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PcimgaError {
    #[error("no camera for image {0}")]
    UnknownImage(u32),
    #[error("point index {index} out of range for {count} points")]
    PointOutOfRange { index: u32, count: usize },
}

/// Image id → ascending indices of the points visible in it.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PointVisibility {
    pub images: BTreeMap<u32, Vec<u32>>,
}

impl PointVisibility {
    pub fn is_visible(&self, image_id: u32, point: u32) -> bool {
        self.images
            .get(&image_id)
            .is_some_and(|v| v.binary_search(&point).is_ok())
    }
}

/// Points whose associated face appears in an image's sparse pixel cloud.
pub fn visible_points(assoc: &FaceAssociation, clouds: &[SparsePixelCloud]) -> PointVisibility {
    let images = clouds
        .par_iter()
        .map(|c| {
            let faces: HashSet<FaceRef> = c.records.iter().map(|r| r.face()).collect();
            let pts: Vec<u32> = assoc
                .point_faces
                .iter()
                .enumerate()
                .filter(|(_, f)| f.is_some_and(|f| faces.contains(&f)))
                .map(|(i, _)| i as u32)
                .collect();
            (c.image_id, pts)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    PointVisibility { images }
}

/// A visible point projected into a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointPixelLink {
    pub point: u32,
    pub row: u32,
    pub col: u32,
    /// Camera z of the point, meters.
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ImageLinks {
    pub image_id: u32,
    /// Every in-bounds projection, ordered by `(row, col, depth, point)`.
    pub candidates: Vec<PointPixelLink>,
    /// Minimal-depth candidate per pixel, row-major.
    pub retained: Vec<PointPixelLink>,
    pub behind_camera: usize,
    pub out_of_bounds: usize,
}

impl ImageLinks {
    /// Retained link at `(row, col)`.
    pub fn retained_at(&self, row: u32, col: u32) -> Option<&PointPixelLink> {
        self.retained
            .binary_search_by(|l| (l.row, l.col).cmp(&(row, col)))
            .ok()
            .map(|i| &self.retained[i])
    }

    /// All candidates falling into `(row, col)`.
    pub fn candidates_at(&self, row: u32, col: u32) -> &[PointPixelLink] {
        let lo = self
            .candidates
            .partition_point(|l| (l.row, l.col) < (row, col));
        let hi = self
            .candidates
            .partition_point(|l| (l.row, l.col) <= (row, col));
        &self.candidates[lo..hi]
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PointPixelLinks {
    /// Ascending image id.
    pub images: Vec<ImageLinks>,
}

impl PointPixelLinks {
    pub fn image(&self, image_id: u32) -> Option<&ImageLinks> {
        self.images
            .binary_search_by_key(&image_id, |l| l.image_id)
            .ok()
            .map(|i| &self.images[i])
    }
}

/// Min-depth reduction of candidates; the result does not depend on the
/// input order. Ties in depth go to the lower point index.
pub fn reduce_min_depth(
    mut candidates: Vec<PointPixelLink>,
) -> (Vec<PointPixelLink>, Vec<PointPixelLink>) {
    candidates.sort_by(|a, b| {
        (a.row, a.col)
            .cmp(&(b.row, b.col))
            .then(a.depth.total_cmp(&b.depth))
            .then(a.point.cmp(&b.point))
    });
    let mut retained: Vec<PointPixelLink> = Vec::new();
    for c in &candidates {
        if retained
            .last()
            .is_none_or(|l| (l.row, l.col) != (c.row, c.col))
        {
            retained.push(*c);
        }
    }
    (candidates, retained)
}

fn project_image(
    cloud: &PointCloud,
    cam: &CameraModel,
    points: &[u32],
) -> Result<ImageLinks, PcimgaError> {
    let mut out = ImageLinks {
        image_id: cam.image_id,
        ..Default::default()
    };
    let mut candidates = Vec::with_capacity(points.len());
    for &p in points {
        let x = *cloud
            .positions
            .get(p as usize)
            .ok_or(PcimgaError::PointOutOfRange {
                index: p,
                count: cloud.len(),
            })?;
        match cam.project_point(x) {
            Ok((px, depth)) => match cam.pixel_of(px) {
                Some((row, col)) => candidates.push(PointPixelLink {
                    point: p,
                    row,
                    col,
                    depth,
                }),
                None => out.out_of_bounds += 1,
            },
            Err(SceneError::BehindCamera(_)) => out.behind_camera += 1,
            Err(_) => out.out_of_bounds += 1,
        }
    }
    let (c, r) = reduce_min_depth(candidates);
    out.candidates = c;
    out.retained = r;
    Ok(out)
}

/// Collinearity links of the visible points, parallel over images.
pub fn pcimga_explicit(
    cloud: &PointCloud,
    cameras: &[CameraModel],
    visibility: &PointVisibility,
) -> Result<PointPixelLinks, PcimgaError> {
    let by_id: BTreeMap<u32, &CameraModel> = cameras.iter().map(|c| (c.image_id, c)).collect();
    let jobs: Vec<(&CameraModel, &Vec<u32>)> = visibility
        .images
        .iter()
        .map(|(id, pts)| {
            by_id
                .get(id)
                .map(|c| (*c, pts))
                .ok_or(PcimgaError::UnknownImage(*id))
        })
        .collect::<Result<_, _>>()?;
    let images = jobs
        .par_iter()
        .map(|(cam, pts)| project_image(cloud, cam, pts))
        .collect::<Result<Vec<_>, _>>()?;
    let total: usize = images.iter().map(|i| i.behind_camera).sum();
    if total > 0 {
        log::info!("{total} visible points behind the camera dropped");
    }
    Ok(PointPixelLinks { images })
}

/// Retained links whose point face differs from the pixel's fused face.
/// Such points are visible through the mesh but may be hidden in reality.
pub fn face_disagreements(
    links: &ImageLinks,
    point_faces: &[Option<FaceRef>],
    pixels: &SparsePixelCloud,
) -> usize {
    links
        .retained
        .iter()
        .filter(|l| {
            let pf = point_faces.get(l.point as usize).copied().flatten();
            let xf = pixels.find(l.row, l.col).map(|i| pixels.records[i].face());
            pf != xf
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use crate::imgma::PixelRecord;
    use crate::pcma::{FaceLink, TileAssociation};

    fn cam() -> CameraModel {
        CameraModel::nadir(1, 100, 100, 50.0, Vec3::new(0.0, 0.0, 10.0))
    }

    fn assoc(point_faces: Vec<Option<FaceRef>>) -> FaceAssociation {
        let mut faces = vec![FaceLink::default(); 3];
        for (p, f) in point_faces.iter().enumerate() {
            if let Some(f) = f {
                faces[f.face as usize].points.push(p as u32);
            }
        }
        FaceAssociation {
            tiles: vec![TileAssociation { tile_id: 0, faces }],
            point_faces,
        }
    }

    fn pixels(image_id: u32, faces: &[u32]) -> SparsePixelCloud {
        SparsePixelCloud {
            image_id,
            records: faces
                .iter()
                .enumerate()
                .map(|(i, &f)| PixelRecord {
                    row: 0,
                    col: i as u32,
                    depth: 1.0,
                    tile_id: 0,
                    face_id: f,
                })
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn visibility_follows_faces() {
        let a = assoc(vec![
            Some(FaceRef::new(0, 0)),
            None,
            Some(FaceRef::new(0, 1)),
            Some(FaceRef::new(0, 2)),
        ]);
        let v = visible_points(&a, &[pixels(1, &[0]), pixels(2, &[0, 1])]);
        assert_eq!(v.images[&1], vec![0]);
        assert_eq!(v.images[&2], vec![0, 2]);
        // Face 2 owns no pixel anywhere.
        assert!(!v.images.values().any(|p| p.contains(&3)));
        assert!(!v.images.values().any(|p| p.contains(&1)));
    }

    #[test]
    fn principal_point_and_min_depth() {
        let c = cam();
        let cloud = PointCloud::new(vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.0, 0.0, 5.0),
            Vec3::new(0.0, 0.0, 7.0),
            Vec3::new(0.0, 0.0, 20.0),
            Vec3::new(500.0, 0.0, 0.0),
        ]);
        let vis = PointVisibility {
            images: [(1, vec![0, 1, 2, 3, 4])].into_iter().collect(),
        };
        let links = pcimga_explicit(&cloud, &[c], &vis).unwrap();
        let l = &links.images[0];
        assert_eq!(l.behind_camera, 1);
        assert_eq!(l.out_of_bounds, 1);
        assert_eq!(l.candidates.len(), 3);
        assert_eq!(l.retained.len(), 1);
        let r = l.retained_at(50, 50).unwrap();
        assert_eq!(r.point, 2);
        assert!((r.depth - 3.0).abs() < 1e-12);
        assert_eq!(l.candidates_at(50, 50).len(), 3);
    }

    #[test]
    fn reduction_is_order_independent() {
        let mk = |point, row, depth| PointPixelLink {
            point,
            row,
            col: 0,
            depth,
        };
        let base = vec![
            mk(0, 0, 5.0),
            mk(1, 0, 3.0),
            mk(2, 1, 2.0),
            mk(3, 0, 3.0),
            mk(4, 1, 9.0),
        ];
        let (_, r) = reduce_min_depth(base.clone());
        assert_eq!(r, vec![mk(1, 0, 3.0), mk(2, 1, 2.0)]);
        let mut rev = base;
        rev.reverse();
        assert_eq!(reduce_min_depth(rev).1, r);
    }

    #[test]
    fn unknown_image_is_an_error() {
        let vis = PointVisibility {
            images: [(9, vec![])].into_iter().collect(),
        };
        assert_eq!(
            pcimga_explicit(&PointCloud::default(), &[cam()], &vis).unwrap_err(),
            PcimgaError::UnknownImage(9)
        );
    }
}
