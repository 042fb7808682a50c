use std::collections::BTreeMap;

use proptest::prelude::*;
use trimodal_core::geom::Vec3;
use trimodal_core::index::PointIndex;
use trimodal_core::pcma::{
    adaptive_threshold_filter, associate_face, pcma_run, BoundaryPolicy, PcmaConfig,
    ThresholdLevel, ThresholdSchedule,
};
use trimodal_core::scene::{compute_face_derived, FaceRef, MeshTile, PointCloud, TiledMesh};
use trimodal_core::synthkit::{generate, RoofGeometry, SceneSpec, Template};
use trimodal_testkit::{brute_force_pcma, pcma_oracle_cases};

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn matches_brute_force_on_fixture_scenes() {
    for case in pcma_oracle_cases() {
        assert!(case.mesh.face_count() <= 500, "{}", case.name);
        assert!(
            case.cloud.len() <= 5000,
            "{}: {} points",
            case.name,
            case.cloud.len()
        );
        let (assoc, _) = pcma_run(&case.mesh, &case.cloud, &case.cfg).unwrap();
        let oracle = brute_force_pcma(&case.mesh, &case.cloud, &case.cfg);
        assert_eq!(assoc.point_faces, oracle.point_faces, "{}", case.name);
        for (ta, of) in assoc.tiles.iter().zip(&oracle.faces) {
            let got: Vec<(Vec<u32>, Option<u8>)> = ta
                .faces
                .iter()
                .map(|l| (l.points.clone(), l.level))
                .collect();
            assert_eq!(&got, of, "{} tile {}", case.name, ta.tile_id);
        }
        assert!(assoc.associated_points() > 0, "{}", case.name);
    }
}

#[test]
fn per_face_lists_partition_the_cloud() {
    for case in pcma_oracle_cases() {
        let (assoc, stats) = pcma_run(&case.mesh, &case.cloud, &case.cfg).unwrap();
        assert!(assoc.is_consistent(), "{}", case.name);
        let listed: usize = assoc
            .tiles
            .iter()
            .flat_map(|t| &t.faces)
            .map(|l| l.points.len())
            .sum();
        let unlinked = assoc.point_faces.iter().filter(|f| f.is_none()).count();
        assert_eq!(listed + unlinked, case.cloud.len());
        assert_eq!(stats.associated_points, listed);
        let max_level = case.cfg.schedule.len() as u8;
        for link in assoc.tiles.iter().flat_map(|t| &t.faces) {
            assert_eq!(link.points.is_empty(), link.level.is_none());
            assert!(link.level.is_none_or(|l| (1..=max_level).contains(&l)));
            assert!(link.points.windows(2).all(|w| w[0] < w[1]));
        }
    }
}

#[test]
fn independent_of_thread_count() {
    let case = pcma_oracle_cases().swap_remove(3);
    let one = in_pool(1, || pcma_run(&case.mesh, &case.cloud, &case.cfg).unwrap());
    let four = in_pool(4, || pcma_run(&case.mesh, &case.cloud, &case.cfg).unwrap());
    assert_eq!(one, four);
}

/// Pre-resolution claims of every face.
fn claims(
    mesh: &TiledMesh,
    cloud: &PointCloud,
    cfg: &PcmaConfig,
) -> BTreeMap<FaceRef, (Vec<(u32, f64)>, Option<u8>)> {
    let index = PointIndex::build(&cloud.positions).unwrap();
    let mut out = BTreeMap::new();
    let mut scratch = Vec::new();
    for tile in &mesh.tiles {
        let derived = compute_face_derived(tile);
        for f in 0..tile.faces.len() {
            if derived[f].degenerate {
                continue;
            }
            let fc = associate_face(
                &tile.triangle(f),
                &derived[f],
                &index,
                &cloud.positions,
                cfg,
                &mut scratch,
            )
            .unwrap();
            let kept = fc
                .kept
                .iter()
                .map(|c| (c.index, c.signed_distance))
                .collect();
            out.insert(FaceRef::new(tile.tile_id, f as u32), (kept, fc.level));
        }
    }
    out
}

#[test]
fn chosen_face_is_the_nearest_claim() {
    for case in pcma_oracle_cases() {
        let (assoc, _) = pcma_run(&case.mesh, &case.cloud, &case.cfg).unwrap();
        let claims = claims(&case.mesh, &case.cloud, &case.cfg);
        let mut nearest: Vec<Option<(f64, FaceRef)>> = vec![None; case.cloud.len()];
        for (&f, (kept, _)) in &claims {
            for &(p, d) in kept {
                let slot = &mut nearest[p as usize];
                if slot.is_none_or(|(bd, _)| d.abs() < bd) {
                    *slot = Some((d.abs(), f));
                }
            }
        }
        for (p, chosen) in assoc.point_faces.iter().enumerate() {
            match (chosen, nearest[p]) {
                (None, None) => {}
                (Some(f), Some((best, _))) => {
                    let own = claims[f]
                        .0
                        .iter()
                        .find(|c| c.0 == p as u32)
                        .unwrap()
                        .1
                        .abs();
                    assert_eq!(own, best, "{}: point {p}", case.name);
                }
                other => panic!("{}: point {p} {other:?}", case.name),
            }
        }
    }
}

#[test]
fn enlarging_symmetric_thresholds_keeps_the_nearest_link() {
    let case = pcma_oracle_cases().swap_remove(0);
    let base = ThresholdSchedule::symmetric(&[0.02, 0.05, 0.08]).unwrap();
    let wide = ThresholdSchedule::symmetric(&[0.04, 0.05, 0.2]).unwrap();
    let cfg = |s: ThresholdSchedule| PcmaConfig {
        schedule: s,
        ..case.cfg.clone()
    };
    let before = claims(&case.mesh, &case.cloud, &cfg(base));
    let after = claims(&case.mesh, &case.cloud, &cfg(wide));
    let mut linked = 0;
    for (f, (kept, level)) in &before {
        let Some(level) = level else { continue };
        linked += 1;
        let (kept2, level2) = &after[f];
        assert!(level2.is_some_and(|l| l <= *level), "{f:?}");
        let near = |k: &[(u32, f64)]| k.iter().map(|c| c.1.abs()).fold(f64::INFINITY, f64::min);
        let nearest = near(kept);
        assert!(near(kept2) <= nearest);
        for &(p, d) in kept {
            if d.abs() == nearest {
                assert!(kept2.iter().any(|c| c.0 == p), "{f:?} lost point {p}");
            }
        }
    }
    assert!(linked > 100);
}

#[test]
fn early_stopping_on_a_face() {
    let tile = MeshTile::new(
        0,
        vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ],
        vec![[0, 1, 2]],
    )
    .unwrap();
    let mesh = TiledMesh::new(vec![tile]).unwrap();
    let cloud = PointCloud::new(vec![
        Vec3::new(0.2, 0.2, 0.03),
        Vec3::new(0.3, 0.2, 0.12),
        Vec3::new(0.2, 0.3, -0.14),
    ]);
    let (assoc, stats) = pcma_run(&mesh, &cloud, &PcmaConfig::default()).unwrap();
    assert_eq!(assoc.tiles[0].faces[0].points, vec![0]);
    assert_eq!(assoc.tiles[0].faces[0].level, Some(1));
    assert_eq!(stats.faces_per_level, vec![1, 0, 0]);
}

#[test]
fn two_face_square_with_interior_points() {
    let tile = MeshTile::new(
        0,
        vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
    )
    .unwrap();
    let mesh = TiledMesh::new(vec![tile]).unwrap();
    // 10 × 10 grid offset from the diagonal x = y.
    let pts: Vec<Vec3> = (0..100)
        .map(|i| {
            Vec3::new(
                0.05 + 0.1 * (i % 10) as f64,
                0.043 + 0.1 * (i / 10) as f64,
                0.0,
            )
        })
        .collect();
    let cloud = PointCloud::new(pts.clone());
    let (assoc, stats) = pcma_run(&mesh, &cloud, &PcmaConfig::default()).unwrap();
    assert_eq!(assoc.associated_points(), 100);
    for (p, f) in pts.iter().zip(&assoc.point_faces) {
        let expected = if p.x > p.y { 0 } else { 1 };
        assert_eq!(*f, Some(FaceRef::new(0, expected)));
    }
    assert_eq!(stats.faces_per_level, vec![2, 0, 0]);
}

#[test]
fn lifted_cloud_links_at_level_three() {
    let mut spec = SceneSpec::new(Template::Plane, 10.0, 4.0, 5);
    spec.shift = Vec3::new(0.0, 0.0, 0.12);
    let scene = generate(&spec).unwrap();
    let (assoc, stats) = pcma_run(&scene.mesh, &scene.cloud, &PcmaConfig::default()).unwrap();
    assert_eq!(assoc.associated_points(), scene.cloud.len());
    let linked = assoc
        .tiles
        .iter()
        .flat_map(|t| &t.faces)
        .filter(|l| !l.points.is_empty())
        .count();
    assert_eq!(stats.faces_per_level, vec![0, 0, linked]);
}

#[test]
fn point_above_ridge_is_unlinked() {
    let spec = SceneSpec::new(Template::RoofTwoPlane, 10.0, 1.0, 1);
    let scene = generate(&spec).unwrap();
    let g = RoofGeometry::of(10.0);
    let cloud = PointCloud::new(vec![
        Vec3::new(0.0, 0.3, g.ridge_z + 0.5),
        Vec3::new(-1.0, 0.3, g.ridge_z + 0.5),
    ]);
    let cfg = PcmaConfig {
        schedule: ThresholdSchedule::v3d(),
        ..PcmaConfig::default()
    };
    let (assoc, _) = pcma_run(&scene.mesh, &cloud, &cfg).unwrap();
    assert_eq!(assoc.point_faces[0], None);
    // Control: the same height further down the left slope is inside a prism.
    let below = g.left_surface(-1.0, 0.3);
    assert!((g.ridge_z + 0.5 - below.z) * g.slope.cos() < 1.2);
    assert!(assoc.point_faces[1].is_some());
}

#[test]
fn exact_surface_sampling_recovers_generating_faces() {
    for template in [Template::Cube, Template::Town, Template::RoofTwoPlane] {
        let scene = generate(&SceneSpec::new(template, 12.0, 3.0, 8)).unwrap();
        let cfg = PcmaConfig {
            boundary_policy: BoundaryPolicy::Include,
            ..PcmaConfig::default()
        };
        let (assoc, _) = pcma_run(&scene.mesh, &scene.cloud, &cfg).unwrap();
        let gt: Vec<Option<FaceRef>> = scene.gt_faces.iter().copied().map(Some).collect();
        assert_eq!(assoc.point_faces, gt, "{template:?}");
    }
}

fn schedule_strategy() -> impl Strategy<Value = ThresholdSchedule> {
    prop::collection::vec((0.0..0.5f64, 0.0..0.5f64), 1..5).prop_map(|steps| {
        let mut acc = (0.0, 0.0);
        let levels = steps
            .into_iter()
            .map(|(a, b)| {
                acc = (acc.0 + a, acc.1 + b);
                ThresholdLevel {
                    minus: acc.0,
                    plus: acc.1,
                }
            })
            .collect();
        ThresholdSchedule::new(levels).unwrap()
    })
}

proptest! {
    #[test]
    fn threshold_filter_stops_at_the_first_admitting_level(
        d in prop::collection::vec(-2.0..2.0f64, 0..30),
        s in schedule_strategy(),
    ) {
        let (kept, level) = adaptive_threshold_filter(&d, &s);
        let first = s.levels().iter().position(|l| d.iter().any(|&x| l.admits(x)));
        prop_assert_eq!(level.map(|l| l as usize - 1), first);
        match first {
            None => prop_assert!(kept.is_empty()),
            Some(l) => {
                let expected: Vec<usize> = (0..d.len()).filter(|&i| s.levels()[l].admits(d[i])).collect();
                prop_assert_eq!(kept, expected);
            }
        }
    }

    #[test]
    fn level_one_hit_forces_level_one(
        mut d in prop::collection::vec(-2.0..2.0f64, 0..30),
        s in schedule_strategy(),
        at in 0usize..30,
    ) {
        let l1 = s.levels()[0];
        d.insert(at.min(d.len()), (l1.plus - l1.minus) / 2.0);
        let (_, level) = adaptive_threshold_filter(&d, &s);
        prop_assert_eq!(level, Some(1));
    }
}
