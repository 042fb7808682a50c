//! Slow reference implementations used as test oracles, and the fixture
//! scenes shared by the integration and acceptance suites.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trimodal_core::geom::{
    classify_point_in_triangle, project_point_to_plane, ray_triangle_unchecked, Containment, Plane,
    Vec3,
};
use trimodal_core::pcma::{BoundaryPolicy, PcmaConfig, ThresholdLevel, ThresholdSchedule};
use trimodal_core::scene::{
    CameraModel, Column, FaceRef, MeshTile, PointCloud, TiledMesh, LABEL_COLUMN,
};
use trimodal_core::synthkit::{generate, random_rig, SceneSpec, Template};

/// All-pairs association laid out like `FaceAssociation`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceAssociation {
    pub point_faces: Vec<Option<FaceRef>>,
    /// Per tile in mesh order, per face: ascending points and the level
    /// that linked them (`None` for faces left without points).
    pub faces: Vec<Vec<(Vec<u32>, Option<u8>)>>,
}

/// Tests every point against every face: no spatial index, no radius.
pub fn brute_force_pcma(
    mesh: &TiledMesh,
    cloud: &PointCloud,
    cfg: &PcmaConfig,
) -> ReferenceAssociation {
    let mut best: Vec<Option<(f64, FaceRef)>> = vec![None; cloud.len()];
    let mut levels: Vec<Vec<Option<u8>>> = Vec::new();
    for tile in &mesh.tiles {
        let mut tile_levels = vec![None; tile.faces.len()];
        for (f, slot) in tile_levels.iter_mut().enumerate() {
            let tri = tile.triangle(f);
            if tri.is_degenerate() {
                continue;
            }
            let plane = Plane::from_point_normal(tri.centroid(), tri.scaled_normal())
                .expect("non-degenerate");
            let mut inside = Vec::new();
            for (i, &p) in cloud.positions.iter().enumerate() {
                let (foot, d) = project_point_to_plane(p, &plane);
                let keep = match classify_point_in_triangle(foot, &tri, cfg.edge_tolerance) {
                    Ok(Containment::Inside) => true,
                    Ok(Containment::OnBoundary) => cfg.boundary_policy == BoundaryPolicy::Include,
                    _ => false,
                };
                if keep {
                    inside.push((i, d));
                }
            }
            let face = FaceRef::new(tile.tile_id, f as u32);
            for (l, level) in cfg.schedule.levels().iter().enumerate() {
                let admitted: Vec<(usize, f64)> = inside
                    .iter()
                    .copied()
                    .filter(|&(_, d)| -level.minus <= d && d <= level.plus)
                    .collect();
                if admitted.is_empty() {
                    continue;
                }
                *slot = Some(l as u8 + 1);
                for (i, d) in admitted {
                    let wins = match best[i] {
                        None => true,
                        Some((bd, bf)) => d.abs() < bd || (d.abs() == bd && face < bf),
                    };
                    if wins {
                        best[i] = Some((d.abs(), face));
                    }
                }
                break;
            }
        }
        levels.push(tile_levels);
    }

    let point_faces: Vec<Option<FaceRef>> = best.iter().map(|b| b.map(|(_, f)| f)).collect();
    let mut faces: Vec<Vec<(Vec<u32>, Option<u8>)>> = mesh
        .tiles
        .iter()
        .map(|t| vec![(Vec::new(), None); t.faces.len()])
        .collect();
    let tile_pos: BTreeMap<u32, usize> = mesh
        .tiles
        .iter()
        .enumerate()
        .map(|(i, t)| (t.tile_id, i))
        .collect();
    for (p, f) in point_faces.iter().enumerate() {
        if let Some(f) = f {
            faces[tile_pos[&f.tile]][f.face as usize].0.push(p as u32);
        }
    }
    for (tile_faces, tile_levels) in faces.iter_mut().zip(&levels) {
        for (entry, level) in tile_faces.iter_mut().zip(tile_levels) {
            if !entry.0.is_empty() {
                entry.1 = *level;
            }
        }
    }
    ReferenceAssociation { point_faces, faces }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceHit {
    pub tile: u32,
    pub face: u32,
    pub depth: f64,
}

/// Nearest hit of every pixel-center ray over all faces of all tiles; depth
/// ties within `tie_tol` go to the lowest `(tile, face)`.
pub fn exhaustive_raycast(
    cam: &CameraModel,
    mesh: &TiledMesh,
    tie_tol: f64,
) -> BTreeMap<(u32, u32), ReferenceHit> {
    let tris: Vec<(FaceRef, trimodal_core::geom::Triangle)> = mesh
        .tiles
        .iter()
        .flat_map(|t| {
            (0..t.faces.len()).map(move |f| (FaceRef::new(t.tile_id, f as u32), t.triangle(f)))
        })
        .filter(|(_, tri)| !tri.is_degenerate())
        .collect();
    let mut out = BTreeMap::new();
    for row in 0..cam.height {
        for col in 0..cam.width {
            let ray = cam.ray_through(row as f64 + 0.5, col as f64 + 0.5);
            let hits: Vec<(f64, FaceRef)> = tris
                .iter()
                .filter_map(|(f, tri)| {
                    ray_triangle_unchecked(&ray, tri).map(|(_, x)| (cam.depth_of(x), *f))
                })
                .collect();
            let Some(min) = hits.iter().map(|h| h.0).reduce(f64::min) else {
                continue;
            };
            let (depth, f) = hits
                .into_iter()
                .filter(|h| h.0 <= min + tie_tol)
                .min_by_key(|h| h.1)
                .expect("at least one hit");
            out.insert(
                (row, col),
                ReferenceHit {
                    tile: f.tile,
                    face: f.face,
                    depth,
                },
            );
        }
    }
    out
}

/// Tiles with at least one face crossed by some pixel-center ray, occluded
/// or not.
pub fn ray_hit_tiles(cam: &CameraModel, mesh: &TiledMesh) -> BTreeSet<u32> {
    let mut out = BTreeSet::new();
    for tile in &mesh.tiles {
        let tris: Vec<_> = (0..tile.faces.len())
            .map(|f| tile.triangle(f))
            .filter(|t| !t.is_degenerate())
            .collect();
        'pixels: for row in 0..cam.height {
            for col in 0..cam.width {
                let ray = cam.ray_through(row as f64 + 0.5, col as f64 + 0.5);
                if tris
                    .iter()
                    .any(|t| ray_triangle_unchecked(&ray, t).is_some())
                {
                    out.insert(tile.tile_id);
                    break 'pixels;
                }
            }
        }
    }
    out
}

/// Mesh vertices and face-edge midpoints, deduplicated: points that sit
/// exactly on face boundaries.
pub fn edge_points(mesh: &TiledMesh) -> Vec<Vec3> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for tile in &mesh.tiles {
        for f in 0..tile.faces.len() {
            let t = tile.triangle(f);
            let mids = [
                (t.v[0] + t.v[1]) / 2.0,
                (t.v[1] + t.v[2]) / 2.0,
                (t.v[2] + t.v[0]) / 2.0,
            ];
            for p in t.v.into_iter().chain(mids) {
                if seen.insert([p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]) {
                    out.push(p);
                }
            }
        }
    }
    out
}

/// Appends points with label −1 to a cloud carrying a label column.
pub fn append_points(cloud: &PointCloud, extra: &[Vec3]) -> PointCloud {
    let mut positions = cloud.positions.clone();
    positions.extend_from_slice(extra);
    let mut labels = cloud
        .labels(LABEL_COLUMN)
        .unwrap_or_else(|| vec![-1; cloud.len()]);
    labels.extend(std::iter::repeat_n(-1, extra.len()));
    let mut out = PointCloud::new(positions);
    out.columns.set(Column::labels(LABEL_COLUMN, &labels));
    out
}

pub struct PcmaCase {
    pub name: &'static str,
    pub mesh: TiledMesh,
    pub cloud: PointCloud,
    pub cfg: PcmaConfig,
}

fn schedule(levels: &[(f64, f64)]) -> ThresholdSchedule {
    ThresholdSchedule::new(
        levels
            .iter()
            .map(|&(minus, plus)| ThresholdLevel { minus, plus })
            .collect(),
    )
    .expect("valid schedule")
}

/// Scenes of at most 500 faces and 5000 points with varied noise, shifts,
/// schedules and boundary policies.
pub fn pcma_oracle_cases() -> Vec<PcmaCase> {
    struct Def {
        name: &'static str,
        template: Template,
        extent: f64,
        subdivisions: u32,
        density: f64,
        noise: f64,
        shift: Vec3,
        schedule: ThresholdSchedule,
        policy: BoundaryPolicy,
        with_edges: bool,
        seed: u64,
    }
    let defs = [
        Def {
            name: "plane, noise 4 cm, h3d",
            template: Template::Plane,
            extent: 20.0,
            subdivisions: 14,
            density: 12.0,
            noise: 0.04,
            shift: Vec3::ZERO,
            schedule: ThresholdSchedule::h3d(),
            policy: BoundaryPolicy::Exclude,
            with_edges: false,
            seed: 11,
        },
        Def {
            name: "cube, noise 10 cm, oblique shift, v3d",
            template: Template::Cube,
            extent: 8.0,
            subdivisions: 6,
            density: 12.0,
            noise: 0.1,
            shift: Vec3::new(0.12, -0.07, 0.2),
            schedule: ThresholdSchedule::v3d(),
            policy: BoundaryPolicy::Exclude,
            with_edges: false,
            seed: 12,
        },
        Def {
            name: "roof, noise 6 cm, lifted, asymmetric",
            template: Template::RoofTwoPlane,
            extent: 16.0,
            subdivisions: 10,
            density: 14.0,
            noise: 0.06,
            shift: Vec3::new(0.0, 0.0, 0.05),
            schedule: schedule(&[(0.02, 0.08), (0.05, 0.15), (0.2, 0.3)]),
            policy: BoundaryPolicy::Exclude,
            with_edges: false,
            seed: 13,
        },
        Def {
            name: "town, noise 3 cm, include, edge points",
            template: Template::Town,
            extent: 20.0,
            subdivisions: 6,
            density: 3.0,
            noise: 0.03,
            shift: Vec3::ZERO,
            schedule: ThresholdSchedule::h3d(),
            policy: BoundaryPolicy::Include,
            with_edges: true,
            seed: 14,
        },
        Def {
            name: "plane, exact, include, edge points",
            template: Template::Plane,
            extent: 10.0,
            subdivisions: 10,
            density: 35.0,
            noise: 0.0,
            shift: Vec3::ZERO,
            schedule: schedule(&[(0.01, 0.01)]),
            policy: BoundaryPolicy::Include,
            with_edges: true,
            seed: 15,
        },
        Def {
            name: "cube, noise 2 cm, exclude, edge points",
            template: Template::Cube,
            extent: 6.0,
            subdivisions: 4,
            density: 20.0,
            noise: 0.02,
            shift: Vec3::ZERO,
            schedule: schedule(&[(0.01, 0.01), (0.03, 0.05), (0.1, 0.1)]),
            policy: BoundaryPolicy::Exclude,
            with_edges: true,
            seed: 16,
        },
    ];
    defs.into_iter()
        .map(|d| {
            let mut spec = SceneSpec::new(d.template, d.extent, d.density, d.seed);
            spec.subdivisions = d.subdivisions;
            spec.noise_sigma = d.noise;
            spec.shift = d.shift;
            let scene = generate(&spec).expect("valid fixture spec");
            let cloud = if d.with_edges {
                append_points(&scene.cloud, &edge_points(&scene.mesh))
            } else {
                scene.cloud
            };
            PcmaCase {
                name: d.name,
                mesh: scene.mesh,
                cloud,
                cfg: PcmaConfig {
                    schedule: d.schedule,
                    boundary_policy: d.policy,
                    ..PcmaConfig::default()
                },
            }
        })
        .collect()
}

pub struct ImgmaCase {
    pub name: &'static str,
    pub mesh: TiledMesh,
    pub camera: CameraModel,
}

/// Multi-tile scenes seen by one 64×48 camera each.
pub fn imgma_oracle_cases() -> Vec<ImgmaCase> {
    let scene = |template, extent, subdivisions, seed| {
        let mut spec = SceneSpec::new(template, extent, 1.0, seed);
        spec.subdivisions = subdivisions;
        generate(&spec).expect("valid fixture spec").mesh
    };
    let look = |from: Vec3, to: Vec3, focal| {
        CameraModel::look_at(0, 64, 48, focal, from, to, Vec3::Z).expect("valid view")
    };
    vec![
        ImgmaCase {
            name: "town, oblique",
            mesh: scene(Template::Town, 20.0, 4, 21),
            camera: look(Vec3::new(25.0, -18.0, 14.0), Vec3::new(0.0, 0.0, 1.0), 60.0),
        },
        ImgmaCase {
            name: "cube, oblique",
            mesh: scene(Template::Cube, 6.0, 4, 22),
            camera: look(Vec3::new(9.0, 7.0, 8.0), Vec3::new(0.0, 0.0, 2.0), 50.0),
        },
        ImgmaCase {
            name: "roof, nadir",
            mesh: scene(Template::RoofTwoPlane, 12.0, 8, 23),
            camera: CameraModel::nadir(0, 64, 48, 40.0, Vec3::new(0.3, -0.2, 15.0)),
        },
        ImgmaCase {
            name: "plane, nadir over the tile seam",
            mesh: scene(Template::Plane, 12.0, 6, 24),
            camera: CameraModel::nadir(0, 64, 48, 30.0, Vec3::new(0.0, 0.0, 10.0)),
        },
    ]
}

/// Closed box-shaped tile: a horizontal beam from `from` to `to` along x
/// with square cross-section of half-width `half`.
pub fn beam_tile(tile_id: u32, from: Vec3, to: Vec3, half: f64) -> MeshTile {
    let lo = Vec3::new(from.x, from.y - half, from.z - half);
    let hi = Vec3::new(to.x, to.y + half, to.z + half);
    let v: Vec<Vec3> = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            )
        })
        .collect();
    let quads = [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ];
    let faces = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    MeshTile::new(tile_id, v, faces).expect("valid beam")
}

/// Town scene plus an elevated beam tile, seen by 14 random cameras and 6
/// narrow side views aimed at random spots along the beam.
pub fn preselection_rig(seed: u64) -> (TiledMesh, Vec<CameraModel>) {
    let mut spec = SceneSpec::new(Template::Town, 20.0, 1.0, seed);
    spec.subdivisions = 4;
    let mut tiles = generate(&spec).expect("valid fixture spec").mesh.tiles;
    tiles.push(beam_tile(
        4,
        Vec3::new(-10.0, 0.0, 7.0),
        Vec3::new(10.0, 0.0, 7.0),
        0.2,
    ));
    let mesh = TiledMesh::new(tiles).expect("unique tile ids");

    let mut cams = random_rig(seed, 14, 20.0, 32, 24);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    while cams.len() < 20 {
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let center = Vec3::new(
            rng.random_range(-6.0..6.0),
            side * rng.random_range(8.0..15.0),
            rng.random_range(5.0..9.0),
        );
        let target = Vec3::new(rng.random_range(-6.0..6.0), 0.0, 7.0);
        let focal = 32.0 * rng.random_range(3.0..5.0);
        if let Some(c) =
            CameraModel::look_at(cams.len() as u32, 32, 24, focal, center, target, Vec3::Z)
        {
            cams.push(c);
        }
    }
    (mesh, cams)
}
