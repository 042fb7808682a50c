//! Evaluation of associations: forward-backward label consistency,
//! association rates and weighted average precision.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::pcma::FaceAssociation;
use crate::scene::{PointCloud, TiledMesh};
use crate::transfer::majority_vote;

/// Weighting used by [`weighted_average_precision`].
pub const WAP_WEIGHTING: &str = "per-class precision weighted by ground-truth support";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("point cloud has no ground-truth column '{0}'")]
    NoGroundTruth(String),
    #[error("confusion matrix has no predictions")]
    AllEmpty,
    #[error("confusion matrix must be square and non-empty")]
    NotSquare,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub weighting: &'static str,
    pub points_checked: usize,
    pub points_consistent: usize,
    pub consistency_rate: f64,
    /// Faces with at least one labeled point.
    pub faces_with_points: usize,
    /// Faces whose points carry more than one label.
    pub mixed_faces: usize,
    pub mixed_face_rate: f64,
    /// Class ids indexing the confusion matrix.
    pub classes: Vec<i32>,
    /// Rows ground truth, columns back-transferred.
    pub confusion: Vec<Vec<u64>>,
    pub weighted_average_precision: Option<f64>,
    /// Labeled points whose back-transferred label differs, ascending.
    pub inconsistent_points: Vec<u32>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Votes ground-truth labels onto faces, copies them back and compares
/// with the ground truth on associated, labeled points.
pub fn forward_backward_check(
    cloud: &PointCloud,
    gt_column: &str,
    assoc: &FaceAssociation,
) -> Result<ConsistencyReport, MetricsError> {
    let gt = cloud
        .labels(gt_column)
        .ok_or_else(|| MetricsError::NoGroundTruth(gt_column.to_string()))?;
    let mut pairs: Vec<(i32, i32)> = Vec::new();
    let mut faces_with_points = 0;
    let mut mixed_faces = 0;
    let mut label_buf = Vec::new();
    let mut inconsistent_points = Vec::new();
    for tile in &assoc.tiles {
        for link in &tile.faces {
            label_buf.clear();
            label_buf.extend(
                link.points
                    .iter()
                    .filter_map(|&p| gt.get(p as usize).copied()),
            );
            let Some(vote) = majority_vote(&label_buf) else {
                continue;
            };
            faces_with_points += 1;
            if !vote.unanimous {
                mixed_faces += 1;
            }
            pairs.extend(
                label_buf
                    .iter()
                    .filter(|&&l| l >= 0)
                    .map(|&l| (l, vote.value)),
            );
            inconsistent_points.extend(link.points.iter().filter(|&&p| {
                gt.get(p as usize)
                    .is_some_and(|&l| l >= 0 && l != vote.value)
            }));
        }
    }
    let classes: Vec<i32> = pairs
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let pos: BTreeMap<i32, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut confusion = vec![vec![0u64; classes.len()]; classes.len()];
    for &(g, b) in &pairs {
        confusion[pos[&g]][pos[&b]] += 1;
    }
    let consistent = pairs.iter().filter(|(g, b)| g == b).count();
    Ok(ConsistencyReport {
        weighting: WAP_WEIGHTING,
        points_checked: pairs.len(),
        points_consistent: consistent,
        consistency_rate: ratio(consistent, pairs.len()),
        faces_with_points,
        mixed_faces,
        mixed_face_rate: ratio(mixed_faces, faces_with_points),
        weighted_average_precision: weighted_average_precision(&confusion).ok(),
        classes,
        confusion,
        inconsistent_points: {
            inconsistent_points.sort_unstable();
            inconsistent_points
        },
    })
}

/// Precision of each class (diagonal over column sum), weighted by the
/// ground-truth support (row sum). Classes never predicted are dropped
/// together with their weight.
pub fn weighted_average_precision(confusion: &[Vec<u64>]) -> Result<f64, MetricsError> {
    let k = confusion.len();
    if k == 0 || confusion.iter().any(|r| r.len() != k) {
        return Err(MetricsError::NotSquare);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for c in 0..k {
        let col: u64 = confusion.iter().map(|r| r[c]).sum();
        if col == 0 {
            continue;
        }
        let support: u64 = confusion[c].iter().sum();
        num += support as f64 * confusion[c][c] as f64 / col as f64;
        den += support as f64;
    }
    if den == 0.0 {
        return Err(MetricsError::AllEmpty);
    }
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssociationRates {
    pub faces: usize,
    pub associated_faces: usize,
    pub face_rate: f64,
    pub total_area: f64,
    pub associated_area: f64,
    pub area_rate: f64,
    pub points: usize,
    pub associated_points: usize,
    pub point_rate: f64,
    /// Unassociated points per ground-truth class, if labels are given.
    pub unassociated_by_class: BTreeMap<i32, usize>,
}

/// Face, area and point association rates.
pub fn association_rates(
    mesh: &TiledMesh,
    cloud: &PointCloud,
    assoc: &FaceAssociation,
    gt_column: Option<&str>,
) -> AssociationRates {
    let mut faces = 0;
    let mut associated_faces = 0;
    let mut total_area = 0.0;
    let mut associated_area = 0.0;
    for tile in &mesh.tiles {
        let links = assoc.tile(tile.tile_id);
        for f in 0..tile.faces.len() {
            let area = tile.triangle(f).area();
            faces += 1;
            total_area += area;
            if links
                .and_then(|l| l.faces.get(f))
                .is_some_and(|l| !l.points.is_empty())
            {
                associated_faces += 1;
                associated_area += area;
            }
        }
    }
    let points = cloud.len();
    let associated_points = assoc.associated_points();
    let mut unassociated_by_class = BTreeMap::new();
    if let Some(gt) = gt_column.and_then(|c| cloud.labels(c)) {
        for (l, f) in gt.iter().zip(&assoc.point_faces) {
            if f.is_none() {
                *unassociated_by_class.entry(*l).or_insert(0) += 1;
            }
        }
    }
    AssociationRates {
        faces,
        associated_faces,
        face_rate: ratio(associated_faces, faces),
        total_area,
        associated_area,
        area_rate: if total_area > 0.0 {
            associated_area / total_area
        } else {
            0.0
        },
        points,
        associated_points,
        point_rate: ratio(associated_points, points),
        unassociated_by_class,
    }
}
