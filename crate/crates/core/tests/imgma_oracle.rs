use std::collections::BTreeSet;

use trimodal_core::geom::Vec3;
use trimodal_core::imgma::{
    build_tile_bvhs, face_pixels, fuse_depth, imgma_run, raycast_image_tile, select_visible_tiles,
    ImgmaConfig, PixelHit,
};
use trimodal_core::index::brute_force_raycast;
use trimodal_core::scene::{CameraModel, FaceRef};
use trimodal_core::synthkit::{generate, random_rig, SceneSpec, Template, GROUND};
use trimodal_testkit::{exhaustive_raycast, imgma_oracle_cases, preselection_rig, ray_hit_tiles};

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn pipeline_matches_global_raycast() {
    for case in imgma_oracle_cases() {
        assert!(case.mesh.tiles.len() >= 2);
        let cfg = ImgmaConfig::default();
        let out = imgma_run(std::slice::from_ref(&case.camera), &case.mesh, &cfg);
        let cloud = &out.clouds[0];
        assert!(cloud.is_sorted_unique());
        let oracle = exhaustive_raycast(&case.camera, &case.mesh, cfg.depth_tie_tol);
        assert!(oracle.len() > 500, "{}: {} pixels", case.name, oracle.len());
        assert_eq!(cloud.len(), oracle.len(), "{}", case.name);
        for r in &cloud.records {
            let o = oracle[&(r.row, r.col)];
            assert_eq!(
                (r.tile_id, r.face_id),
                (o.tile, o.face),
                "{} pixel ({}, {})",
                case.name,
                r.row,
                r.col
            );
            assert!((r.depth - o.depth).abs() <= 1e-9 * o.depth, "{}", case.name);
        }
    }
}

#[test]
fn preselection_has_no_false_negatives() {
    let (mesh, rig) = preselection_rig(7);
    assert_eq!(rig.len(), 20);
    let mut stages = [0usize; 3];
    let mut hit_pairs = 0;
    for cam in &rig {
        let sel = select_visible_tiles(cam, &mesh);
        let hit = ray_hit_tiles(cam, &mesh);
        hit_pairs += hit.len();
        let visible: BTreeSet<u32> = sel.visible.iter().copied().collect();
        assert!(
            hit.is_subset(&visible),
            "camera {}: hit {hit:?} selected {visible:?}",
            cam.image_id
        );
        for s in 0..3 {
            stages[s] += sel.stage_counts[s];
        }
    }
    assert!(hit_pairs > 0);
    assert!(stages.iter().all(|&n| n > 0), "stage counts {stages:?}");
}

#[test]
fn per_tile_raycast_matches_brute_force() {
    for case in imgma_oracle_cases() {
        let bvhs = build_tile_bvhs(&case.mesh);
        for tile in &case.mesh.tiles {
            let hits = raycast_image_tile(&case.camera, &bvhs[&tile.tile_id]);
            let mut expected = Vec::new();
            for row in 0..case.camera.height {
                for col in 0..case.camera.width {
                    let ray = case.camera.ray_through(row as f64 + 0.5, col as f64 + 0.5);
                    if let Some(h) = brute_force_raycast(tile, &ray) {
                        expected.push((row, col, h.face_id));
                    }
                }
            }
            let got: Vec<(u32, u32, u32)> =
                hits.iter().map(|h| (h.row, h.col, h.face_id)).collect();
            assert_eq!(got, expected, "{} tile {}", case.name, tile.tile_id);
        }
    }
}

#[test]
fn fusion_ignores_tile_order() {
    let case = imgma_oracle_cases().swap_remove(0);
    let cam = &case.camera;
    let bvhs = build_tile_bvhs(&case.mesh);
    let mut per_tile: Vec<(u32, Vec<PixelHit>)> = bvhs
        .iter()
        .map(|(&t, b)| (t, raycast_image_tile(cam, b)))
        .collect();
    let reference = fuse_depth(0, cam.width, cam.height, &per_tile, 1e-9);
    for _ in 0..per_tile.len() {
        per_tile.rotate_left(1);
        assert_eq!(
            fuse_depth(0, cam.width, cam.height, &per_tile, 1e-9),
            reference
        );
        per_tile.reverse();
        assert_eq!(
            fuse_depth(0, cam.width, cam.height, &per_tile, 1e-9),
            reference
        );
    }
}

#[test]
fn cube_bottom_is_self_occluded_from_nadir() {
    let mesh = generate(&SceneSpec::new(Template::Cube, 4.0, 1.0, 3))
        .unwrap()
        .mesh;
    let cam = CameraModel::nadir(0, 64, 48, 40.0, Vec3::new(0.2, 0.1, 12.0));
    let out = imgma_run(std::slice::from_ref(&cam), &mesh, &ImgmaConfig::default());
    let oracle = exhaustive_raycast(&cam, &mesh, 1e-9);
    assert_eq!(out.clouds[0].len(), oracle.len());
    let mut bottom = 0;
    for tile in &mesh.tiles {
        let labels = tile.face_labels().unwrap();
        for f in 0..tile.faces.len() {
            if labels[f] == GROUND {
                bottom += 1;
                assert!(out.clouds[0]
                    .records
                    .iter()
                    .all(|r| r.face() != FaceRef::new(tile.tile_id, f as u32)));
            }
        }
    }
    assert!(bottom > 0);
    let seen: BTreeSet<FaceRef> = out.clouds[0].records.iter().map(|r| r.face()).collect();
    assert!(!seen.is_empty());
}

#[test]
fn two_images_of_one_face() {
    let mesh = generate(&SceneSpec::new(Template::Plane, 10.0, 1.0, 3))
        .unwrap()
        .mesh;
    let cams = [
        CameraModel::nadir(4, 32, 24, 20.0, Vec3::new(-1.0, 0.0, 8.0)),
        CameraModel::nadir(9, 32, 24, 20.0, Vec3::new(1.0, 0.0, 8.0)),
    ];
    let out = imgma_run(&cams, &mesh, &ImgmaConfig::default());
    let groups = face_pixels(&out.clouds);
    let shared = groups
        .values()
        .filter(|px| px.iter().map(|p| p.0).collect::<BTreeSet<_>>() == BTreeSet::from([4, 9]))
        .count();
    assert!(shared > 0);
    assert!(out.visibility.is_transpose_consistent());
}

#[test]
fn image_facing_away_is_empty() {
    let mesh = generate(&SceneSpec::new(Template::Plane, 10.0, 1.0, 3))
        .unwrap()
        .mesh;
    let up = CameraModel::look_at(
        2,
        32,
        24,
        20.0,
        Vec3::new(0.0, 0.0, 5.0),
        Vec3::new(0.0, 0.0, 50.0),
        Vec3::Y,
    )
    .unwrap();
    let out = imgma_run(&[up], &mesh, &ImgmaConfig::default());
    assert!(out.clouds[0].is_empty());
    assert_eq!(out.visibility.image_tiles[&2], Vec::<u32>::new());
    assert_eq!(out.stats.warnings.len(), 1);
}

#[test]
fn independent_of_thread_count() {
    let mut spec = SceneSpec::new(Template::Town, 20.0, 1.0, 5);
    spec.subdivisions = 4;
    let mesh = generate(&spec).unwrap().mesh;
    let rig = random_rig(3, 6, 20.0, 48, 32);
    let run = || {
        let o = imgma_run(&rig, &mesh, &ImgmaConfig::default());
        (o.clouds, o.visibility)
    };
    assert_eq!(in_pool(1, run), in_pool(4, run));
}
