//! Acceleration structures: a kD-tree for inclusive ball queries over point
//! positions and a per-tile BVH for ray casting against faces.
//!
//! Both structures are exact: query results equal an exhaustive scan.

use smallvec::SmallVec;
use thiserror::Error;

use crate::geom::{ray_triangle_unchecked, Aabb, Ray, Triangle, Vec3};
use crate::scene::MeshTile;

pub const DEFAULT_KD_LEAF_SIZE: usize = 32;
pub const DEFAULT_BVH_LEAF_SIZE: usize = 8;
/// Hits whose ray parameters differ by at most this much are ties.
pub const RAY_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("cannot index an empty point cloud")]
    EmptyCloud,
    #[error("tile {0} has no valid (non-degenerate) faces")]
    NoValidFaces(u32),
}

#[derive(Debug, Clone)]
enum KdKind {
    Leaf { start: u32, end: u32 },
    Inner { left: u32, right: u32 },
}

#[derive(Debug, Clone)]
struct KdNode {
    bbox: Aabb,
    kind: KdKind,
}

/// Median-split kD-tree over point positions.
#[derive(Debug, Clone)]
pub struct PointIndex {
    points: Vec<Vec3>,
    ids: Vec<u32>,
    nodes: Vec<KdNode>,
    depth: usize,
}

impl PointIndex {
    pub fn build(positions: &[Vec3]) -> Result<PointIndex, IndexError> {
        Self::build_with_leaf_size(positions, DEFAULT_KD_LEAF_SIZE)
    }

    pub fn build_with_leaf_size(
        positions: &[Vec3],
        leaf_size: usize,
    ) -> Result<PointIndex, IndexError> {
        if positions.is_empty() {
            return Err(IndexError::EmptyCloud);
        }
        let leaf_size = leaf_size.max(1);
        let mut ids: Vec<u32> = (0..positions.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * positions.len() / leaf_size + 1);
        let depth = build_kd(positions, &mut ids, 0, leaf_size, &mut nodes, 0);
        let points = ids.iter().map(|&i| positions[i as usize]).collect();
        Ok(PointIndex {
            points,
            ids,
            nodes,
            depth,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Depth of the tree; a single leaf has depth 0.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// All indices with `‖p − center‖ ≤ r`, ascending.
    pub fn ball_query(&self, center: Vec3, r: f64) -> Vec<u32> {
        let mut out = Vec::new();
        self.ball_query_into(center, r, &mut out);
        out
    }

    pub fn ball_query_into(&self, center: Vec3, r: f64, out: &mut Vec<u32>) {
        out.clear();
        if !(r >= 0.0) {
            return;
        }
        let r2 = r * r;
        let mut stack: SmallVec<[u32; 64]> = SmallVec::new();
        stack.push(0);
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            if node.bbox.distance_squared_to(center) > r2 {
                continue;
            }
            match node.kind {
                KdKind::Leaf { start, end } => {
                    for slot in start as usize..end as usize {
                        if self.points[slot].distance_squared(center) <= r2 {
                            out.push(self.ids[slot]);
                        }
                    }
                }
                KdKind::Inner { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        out.sort_unstable();
    }
}

fn build_kd(
    positions: &[Vec3],
    ids: &mut [u32],
    offset: usize,
    leaf_size: usize,
    nodes: &mut Vec<KdNode>,
    level: usize,
) -> usize {
    let mut bbox = Aabb::empty();
    for &i in ids.iter() {
        bbox.grow(positions[i as usize]);
    }
    let me = nodes.len();
    nodes.push(KdNode {
        bbox,
        kind: KdKind::Leaf {
            start: offset as u32,
            end: (offset + ids.len()) as u32,
        },
    });
    if ids.len() <= leaf_size {
        return level;
    }
    let axis = bbox.widest_axis();
    let mid = ids.len() / 2;
    ids.select_nth_unstable_by(mid, |&a, &b| {
        positions[a as usize][axis]
            .total_cmp(&positions[b as usize][axis])
            .then(a.cmp(&b))
    });
    let (lo, hi) = ids.split_at_mut(mid);
    let left = nodes.len() as u32;
    let dl = build_kd(positions, lo, offset, leaf_size, nodes, level + 1);
    let right = nodes.len() as u32;
    let dr = build_kd(positions, hi, offset + mid, leaf_size, nodes, level + 1);
    nodes[me].kind = KdKind::Inner { left, right };
    dl.max(dr)
}

#[derive(Debug, Clone, Copy)]
struct BvhNode {
    bbox: Aabb,
    /// Leaf: first triangle slot; inner: index of the left child (right is
    /// stored next to it).
    first: u32,
    /// Zero for inner nodes.
    count: u32,
}

/// Result of casting a ray against a tile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BvhHit {
    pub face_id: u32,
    pub t: f64,
    pub hit: Vec3,
}

/// Binary BVH over the non-degenerate faces of one tile.
#[derive(Debug, Clone)]
pub struct FaceBvh {
    pub tile_id: u32,
    tris: Vec<Triangle>,
    face_ids: Vec<u32>,
    nodes: Vec<BvhNode>,
    /// Faces left out because their area is (numerically) zero.
    pub degenerate_faces: usize,
}

impl FaceBvh {
    pub fn build(tile: &MeshTile) -> Result<FaceBvh, IndexError> {
        Self::build_with_leaf_size(tile, DEFAULT_BVH_LEAF_SIZE)
    }

    pub fn build_with_leaf_size(tile: &MeshTile, leaf_size: usize) -> Result<FaceBvh, IndexError> {
        let leaf_size = leaf_size.max(1);
        let mut tris = Vec::with_capacity(tile.faces.len());
        let mut face_ids = Vec::with_capacity(tile.faces.len());
        let mut degenerate = 0;
        for f in 0..tile.faces.len() {
            let t = tile.triangle(f);
            if t.is_degenerate() {
                degenerate += 1;
                continue;
            }
            tris.push(t);
            face_ids.push(f as u32);
        }
        if tris.is_empty() {
            return Err(IndexError::NoValidFaces(tile.tile_id));
        }
        if degenerate > 0 {
            log::warn!(
                "tile {}: {} degenerate faces skipped",
                tile.tile_id,
                degenerate
            );
        }
        // Padding covers rounding in the slab test and in the hit parameter.
        let pad = 1e-7 + 1e-12 * tile.mbb.min.max_abs().max(tile.mbb.max.max_abs());
        let centroids: Vec<Vec3> = tris.iter().map(Triangle::centroid).collect();
        let mut order: Vec<u32> = (0..tris.len() as u32).collect();
        let mut nodes = vec![BvhNode {
            bbox: Aabb::empty(),
            first: 0,
            count: 0,
        }];
        build_bvh(
            &tris, &centroids, &mut order, 0, 0, leaf_size, pad, &mut nodes,
        );
        let tris = order.iter().map(|&i| tris[i as usize]).collect();
        let face_ids = order.iter().map(|&i| face_ids[i as usize]).collect();
        Ok(FaceBvh {
            tile_id: tile.tile_id,
            tris,
            face_ids,
            nodes,
            degenerate_faces: degenerate,
        })
    }

    pub fn root_bounds(&self) -> Aabb {
        self.nodes[0].bbox
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.count > 0).count()
    }

    pub fn face_count(&self) -> usize {
        self.tris.len()
    }

    /// Checks that children are enclosed by their parents and that every
    /// indexed face lies in exactly one leaf.
    pub fn check_structure(&self) -> bool {
        let mut seen = vec![0u32; self.tris.len()];
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = self.nodes[n];
            if node.count > 0 {
                for s in node.first..node.first + node.count {
                    seen[s as usize] += 1;
                    for v in self.tris[s as usize].v {
                        if !node.bbox.contains_point(v, 0.0) {
                            return false;
                        }
                    }
                }
            } else {
                for c in [node.first as usize, node.first as usize + 1] {
                    if !node.bbox.contains_box(&self.nodes[c].bbox) {
                        return false;
                    }
                    stack.push(c);
                }
            }
        }
        seen.iter().all(|&c| c == 1)
    }

    /// Closest hit with `t > 1e-9`; ties within [`RAY_TIE_TOLERANCE`] go to
    /// the lowest face id.
    pub fn raycast(&self, ray: &Ray) -> Option<BvhHit> {
        self.raycast_counting(ray).0
    }

    /// As [`FaceBvh::raycast`], also returning the number of nodes whose box
    /// the ray entered.
    pub fn raycast_counting(&self, ray: &Ray) -> (Option<BvhHit>, usize) {
        let inv = Vec3::new(
            1.0 / ray.direction.x,
            1.0 / ray.direction.y,
            1.0 / ray.direction.z,
        );
        let mut visited = 0;
        let mut min_t = f64::INFINITY;
        // Hits within the tie window of the current minimum.
        let mut window: SmallVec<[(f64, u32, Vec3); 4]> = SmallVec::new();
        let mut stack: SmallVec<[u32; 64]> = SmallVec::new();
        stack.push(0);
        while let Some(n) = stack.pop() {
            let node = self.nodes[n as usize];
            let Some((t_near, _)) = node.bbox.ray_interval(ray, inv) else {
                continue;
            };
            if t_near > min_t + RAY_TIE_TOLERANCE {
                continue;
            }
            visited += 1;
            if node.count > 0 {
                for s in node.first..node.first + node.count {
                    let Some((t, hit)) = ray_triangle_unchecked(ray, &self.tris[s as usize]) else {
                        continue;
                    };
                    if t > min_t + RAY_TIE_TOLERANCE {
                        continue;
                    }
                    if t < min_t {
                        min_t = t;
                        window.retain(|w| w.0 <= min_t + RAY_TIE_TOLERANCE);
                    }
                    window.push((t, self.face_ids[s as usize], hit));
                }
            } else {
                stack.push(node.first + 1);
                stack.push(node.first);
            }
        }
        let best = window
            .into_iter()
            .min_by_key(|w| w.1)
            .map(|(t, face_id, hit)| BvhHit { face_id, t, hit });
        (best, visited)
    }
}

#[allow(clippy::too_many_arguments)]
fn build_bvh(
    tris: &[Triangle],
    centroids: &[Vec3],
    order: &mut [u32],
    offset: usize,
    me: usize,
    leaf_size: usize,
    pad: f64,
    nodes: &mut Vec<BvhNode>,
) {
    let mut bbox = Aabb::empty();
    let mut cbox = Aabb::empty();
    for &i in order.iter() {
        for v in tris[i as usize].v {
            bbox.grow(v);
        }
        cbox.grow(centroids[i as usize]);
    }
    nodes[me].bbox = bbox.padded(pad);
    if order.len() <= leaf_size {
        nodes[me].first = offset as u32;
        nodes[me].count = order.len() as u32;
        return;
    }
    let axis = cbox.widest_axis();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        centroids[a as usize][axis]
            .total_cmp(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });
    let left = nodes.len();
    let blank = BvhNode {
        bbox: Aabb::empty(),
        first: 0,
        count: 0,
    };
    nodes.push(blank);
    nodes.push(blank);
    nodes[me].first = left as u32;
    nodes[me].count = 0;
    let (lo, hi) = order.split_at_mut(mid);
    build_bvh(tris, centroids, lo, offset, left, leaf_size, pad, nodes);
    build_bvh(
        tris,
        centroids,
        hi,
        offset + mid,
        left + 1,
        leaf_size,
        pad,
        nodes,
    );
}

/// Exhaustive reference: minimal-t hit over all non-degenerate faces of the
/// tile, ties to the lowest face id.
pub fn brute_force_raycast(tile: &MeshTile, ray: &Ray) -> Option<BvhHit> {
    let hits: Vec<BvhHit> = (0..tile.faces.len())
        .filter_map(|f| {
            let tri = tile.triangle(f);
            if tri.is_degenerate() {
                return None;
            }
            ray_triangle_unchecked(ray, &tri).map(|(t, hit)| BvhHit {
                face_id: f as u32,
                t,
                hit,
            })
        })
        .collect();
    let min_t = hits.iter().map(|h| h.t).fold(f64::INFINITY, f64::min);
    hits.into_iter()
        .filter(|h| h.t <= min_t + RAY_TIE_TOLERANCE)
        .min_by_key(|h| h.face_id)
}
