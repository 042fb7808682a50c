use proptest::prelude::*;
use trimodal_core::geom::Vec3;
use trimodal_core::imgma::{imgma_run, ImgmaConfig, PixelRecord, SparsePixelCloud};
use trimodal_core::io::{
    face_assoc_bytes, parse_face_assoc, parse_point_cloud, parse_spxc, point_cloud_bytes,
    spxc_bytes, PlyEncoding,
};
use trimodal_core::pcimga::{reduce_min_depth, PointPixelLink};
use trimodal_core::pcma::{association_radius, pcma_run, PcmaConfig};
use trimodal_core::scene::{
    CameraModel, Column, Columns, FaceRef, PointCloud, ScalarType, LABEL_COLUMN,
};
use trimodal_core::synthkit::{generate, nadir_rig, random_rig, LabelPlan, SceneSpec, Template};
use trimodal_core::transfer::{
    majority_vote, median_aggregate, run_transfer, Direction, Links, TransferScene, TransferSpec,
};

proptest! {
    #[test]
    fn radius_encloses_face_and_band(t in 0.0..1e3f64, theta in 0.0..1e3f64) {
        let r = association_radius(t, theta);
        prop_assert!(r >= t.max(theta));
        prop_assert!((r * r - (t * t + theta * theta)).abs() <= 1e-9 * (1.0 + r * r));
    }

    #[test]
    fn majority_vote_ignores_order(
        (labels, shuffled) in prop::collection::vec(-2i32..6, 0..40)
            .prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle()))
    ) {
        prop_assert_eq!(majority_vote(&labels), majority_vote(&shuffled));
        if let Some(r) = majority_vote(&labels) {
            prop_assert!(labels.contains(&r.value) && r.value >= 0);
        } else {
            prop_assert!(labels.iter().all(|&l| l < 0));
        }
    }

    #[test]
    fn median_ignores_order_and_scales(
        (rows, shuffled) in prop::collection::vec(prop::collection::vec(-1e3..1e3f64, 3), 1..25)
            .prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle())),
        c in -10.0..10.0f64,
    ) {
        let m = median_aggregate(&rows).unwrap().value;
        prop_assert_eq!(&median_aggregate(&shuffled).unwrap().value, &m);
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| c * x).collect()).collect();
        let ms = median_aggregate(&scaled).unwrap().value;
        for (a, b) in ms.iter().zip(&m) {
            prop_assert!((a - c * b).abs() <= 1e-9 * (1.0 + (c * b).abs()));
        }
    }

    #[test]
    fn min_depth_reduction_ignores_order(
        (links, shuffled) in prop::collection::vec((0u32..50, 0u32..4, 0u32..4, 1u32..6), 0..60)
            .prop_flat_map(|v| {
                let links: Vec<PointPixelLink> = v
                    .into_iter()
                    .map(|(point, row, col, d)| PointPixelLink { point, row, col, depth: d as f64 })
                    .collect();
                (Just(links.clone()), Just(links).prop_shuffle())
            })
    ) {
        let (c1, r1) = reduce_min_depth(links.clone());
        let (c2, r2) = reduce_min_depth(shuffled);
        prop_assert_eq!(&c1, &c2);
        prop_assert_eq!(&r1, &r2);
        for r in &r1 {
            let min = links.iter().filter(|l| (l.row, l.col) == (r.row, r.col)).map(|l| l.depth).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(r.depth, min);
        }
    }

    #[test]
    fn pixel_ray_and_projection_are_inverse(
        seed in any::<u64>(),
        row in 0.0..480.0f64,
        col in 0.0..640.0f64,
        depth in 0.5..200.0f64,
    ) {
        let cam = random_rig(seed, 1, 30.0, 640, 480).remove(0);
        let ray = cam.ray_through(row, col);
        let x = ray.origin + ray.direction * depth;
        let (px, _) = cam.project_point(x).unwrap();
        prop_assert!((px.row - row).abs() < 1e-6 && (px.col - col).abs() < 1e-6);
    }
}

fn labeled_scene() -> impl Strategy<Value = (Template, u64, Vec<i32>)> {
    (
        prop::sample::select(vec![
            Template::Plane,
            Template::Cube,
            Template::RoofTwoPlane,
        ]),
        any::<u64>(),
        prop::collection::vec(-1i32..4, 8),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transfers_are_idempotent_and_closed((template, seed, palette) in labeled_scene()) {
        let mut spec = SceneSpec::new(template, 8.0, 3.0, seed);
        spec.noise_sigma = 0.03;
        spec.cameras = nadir_rig(8.0, 20.0, 1, 32, 24, 30.0);
        let mut scene = generate(&spec).unwrap();
        // Arbitrary point labels drawn from the palette, some unlabeled.
        let labels: Vec<i32> = (0..scene.cloud.len()).map(|i| palette[(i * 7 + seed as usize) % palette.len()]).collect();
        scene.cloud.columns.set(Column::labels("src", &labels));
        let (assoc, _) = pcma_run(&scene.mesh, &scene.cloud, &PcmaConfig::default()).unwrap();
        let mut pixels = imgma_run(&scene.cameras, &scene.mesh, &ImgmaConfig::default()).clouds;
        let links = Links { faces: Some(&assoc), pixels: None };
        let steps = [
            TransferSpec::label(Direction::PcToMesh, "src", "voted"),
            TransferSpec::label(Direction::MeshToPc, "voted", "back"),
            TransferSpec::label(Direction::MeshToImg, "voted", "px"),
        ];
        for t in &steps {
            run_transfer(t, TransferScene { cloud: &mut scene.cloud, mesh: &mut scene.mesh, pixels: &mut pixels }, links).unwrap();
            let snapshot = (scene.cloud.clone(), scene.mesh.clone(), pixels.clone());
            run_transfer(t, TransferScene { cloud: &mut scene.cloud, mesh: &mut scene.mesh, pixels: &mut pixels }, links).unwrap();
            prop_assert_eq!(&snapshot, &(scene.cloud.clone(), scene.mesh.clone(), pixels.clone()));
        }
        let source: std::collections::BTreeSet<i32> = labels.iter().copied().filter(|&l| l >= 0).collect();
        let closed = |l: i32| source.contains(&l) || l == -1 || l == -2;
        for t in &scene.mesh.tiles {
            prop_assert!(t.face_attrs.get("voted").unwrap().as_labels().into_iter().all(|l| source.contains(&l) || l == -1));
        }
        prop_assert!(scene.cloud.labels("back").unwrap().into_iter().all(closed));
        for p in &pixels {
            prop_assert!(p.attributes.get("px").unwrap().as_labels().into_iter().all(closed));
        }
    }

    #[test]
    fn homogeneous_faces_round_trip_exactly(seed in any::<u64>()) {
        let mut spec = SceneSpec::new(Template::Town, 16.0, 2.0, seed);
        spec.labels = LabelPlan::Template;
        let mut scene = generate(&spec).unwrap();
        let (assoc, _) = pcma_run(&scene.mesh, &scene.cloud, &PcmaConfig::default()).unwrap();
        let links = Links { faces: Some(&assoc), pixels: None };
        let mut pixels = Vec::new();
        for t in [
            TransferSpec::label(Direction::PcToMesh, LABEL_COLUMN, "voted"),
            TransferSpec::label(Direction::MeshToPc, "voted", "back"),
        ] {
            run_transfer(&t, TransferScene { cloud: &mut scene.cloud, mesh: &mut scene.mesh, pixels: &mut pixels }, links).unwrap();
        }
        let gt = scene.cloud.labels(LABEL_COLUMN).unwrap();
        let back = scene.cloud.labels("back").unwrap();
        for (i, f) in assoc.point_faces.iter().enumerate() {
            prop_assert_eq!(back[i], if f.is_some() { gt[i] } else { -1 });
        }
    }
}

fn cloud_strategy() -> impl Strategy<Value = PointCloud> {
    (1usize..200).prop_flat_map(|n| {
        (
            prop::collection::vec((-1e4..1e4f64, -1e4..1e4f64, -1e3..1e3f64), n),
            prop::collection::vec(-1i32..20, n),
            prop::collection::vec(-1e6..1e6f64, n),
            prop::collection::vec(prop::option::of((0u32..5, 0u32..1000)), n),
            any::<bool>(),
        )
            .prop_map(|(p, labels, feat, assoc, with_assoc)| {
                let mut c =
                    PointCloud::new(p.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect());
                c.columns.set(Column::labels(LABEL_COLUMN, &labels));
                c.columns.set(Column::floats("feature", feat));
                c.columns.set(Column {
                    name: "intensity".into(),
                    ty: ScalarType::U16,
                    values: labels.iter().map(|&l| (l + 1) as f64 * 100.0).collect(),
                });
                if with_assoc {
                    c.assoc = Some(
                        assoc
                            .into_iter()
                            .map(|a| a.map(|(t, f)| FaceRef::new(t, f)))
                            .collect(),
                    );
                }
                c
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn point_cloud_encodings_round_trip(cloud in cloud_strategy()) {
        let bin = point_cloud_bytes(&cloud, PlyEncoding::BinaryLittleEndian).unwrap();
        let back = parse_point_cloud(&bin).unwrap();
        prop_assert_eq!(&back, &cloud);
        prop_assert_eq!(point_cloud_bytes(&back, PlyEncoding::BinaryLittleEndian).unwrap(), bin);
        let ascii = point_cloud_bytes(&cloud, PlyEncoding::Ascii).unwrap();
        prop_assert_eq!(&parse_point_cloud(&ascii).unwrap(), &cloud);
    }

    #[test]
    fn sparse_pixel_clouds_round_trip(
        px in prop::collection::btree_map((0u32..200, 0u32..300), (0.1..1e3f32, 0u32..4, 0u32..5000, -3i32..9), 0..300),
        image_id in any::<u32>(),
    ) {
        let records: Vec<PixelRecord> = px
            .iter()
            .map(|(&(row, col), &(d, tile_id, face_id, _))| PixelRecord { row, col, depth: d as f64, tile_id, face_id })
            .collect();
        let labels: Vec<i32> = px.values().map(|v| v.3).collect();
        let mut attributes = Columns::default();
        attributes.set(Column::labels(LABEL_COLUMN, &labels));
        attributes.set(Column::floats("score", labels.iter().map(|&l| l as f64 / 3.0).collect()));
        let cloud = SparsePixelCloud { image_id, records, attributes };
        let bytes = spxc_bytes(&cloud).unwrap();
        let back = parse_spxc(&bytes).unwrap();
        prop_assert_eq!(&back, &cloud);
        prop_assert_eq!(spxc_bytes(&back).unwrap(), bytes);
    }
}

#[test]
fn face_association_round_trips_on_synthetic_scenes() {
    for template in [Template::Plane, Template::Town] {
        let mut spec = SceneSpec::new(template, 12.0, 3.0, 77);
        spec.noise_sigma = 0.08;
        let scene = generate(&spec).unwrap();
        let (assoc, _) = pcma_run(&scene.mesh, &scene.cloud, &PcmaConfig::default()).unwrap();
        let bytes = face_assoc_bytes(&assoc);
        let back = parse_face_assoc(&bytes).unwrap();
        assert_eq!(back, assoc);
        assert_eq!(face_assoc_bytes(&back), bytes);
    }
}

#[test]
fn projection_round_trip_on_ten_cameras() {
    let cams: Vec<CameraModel> = random_rig(2024, 10, 40.0, 800, 600);
    let mut worst: f64 = 0.0;
    for (k, cam) in cams.iter().enumerate() {
        for i in 0..1000u32 {
            // Low-discrepancy pixel positions covering the whole image.
            let row = cam.height as f64 * ((i as f64 * 0.618_033_988_75 + k as f64 * 0.1) % 1.0);
            let col = cam.width as f64 * ((i as f64 * 0.754_877_666_2 + 0.3) % 1.0);
            let ray = cam.ray_through(row, col);
            let x = ray.origin + ray.direction * (1.0 + (i % 97) as f64);
            let (px, _) = cam.project_point(x).unwrap();
            worst = worst.max((px.row - row).abs()).max((px.col - col).abs());
        }
    }
    assert!(worst < 1e-6, "worst reprojection error {worst:e} px");
}
