use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use trimodal_core::imgma::{imgma_run, SparsePixelCloud};
use trimodal_core::io::{
    config_text, links_csv, load_config, read_cameras, read_face_assoc, read_label_scheme,
    read_links_csv, read_mesh_tiles, read_point_cloud, read_spxc, write_atomic, write_cameras,
    write_face_assoc, write_label_scheme, write_mesh_tiles, write_point_cloud, write_ppm,
    write_spxc, write_visibility, IoError, PlyEncoding, RunConfig,
};
use trimodal_core::metrics::{association_rates, forward_backward_check};
use trimodal_core::pcimga::{pcimga_explicit, visible_points, PointPixelLinks};
use trimodal_core::pcma::{pcma_run, FaceAssociation, ThresholdSchedule};
use trimodal_core::scene::{FaceRef, LabelEntry, LabelScheme, PointCloud, TiledMesh};
use trimodal_core::synthkit::{
    dead_zone_points, generate, nadir_rig, DeadZoneCase, SceneSpec, Template, GROUND, ROOF, WALL,
};
use trimodal_core::transfer::{
    run_transfer, Direction, Kind, Links, Mode, PixelReduction, TransferScene, TransferSpec,
};

use crate::runlog::RunLog;
use crate::{
    CheckArgs, DirectionArg, ImgmaArgs, KindArg, ModeArg, PcimgaArgs, PcmaArgs, Preset,
    ReductionArg, Settings, SynthArgs, TemplateArg, TransferArgs,
};

#[derive(Debug)]
pub enum CliError {
    /// Unreadable, malformed or inconsistent input.
    Input(String),
    /// A result failed an internal consistency check.
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "{m}"),
            CliError::Invariant(m) => write!(f, "internal invariant violated: {m}"),
        }
    }
}

fn input<E: fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

/// Write failures after validation are environmental, not input errors.
fn output(e: IoError) -> CliError {
    match e {
        IoError::Io { .. } => CliError::Input(e.to_string()),
        other => CliError::Invariant(other.to_string()),
    }
}

pub type Outcome = Result<(), CliError>;

fn settings(s: &Settings, log: &mut RunLog) -> Result<RunConfig, CliError> {
    let mut cfg = load_config(s.config.as_deref()).map_err(input)?;
    match s.preset {
        Some(Preset::H3d) => cfg.pcma.schedule = ThresholdSchedule::h3d(),
        Some(Preset::V3d) => cfg.pcma.schedule = ThresholdSchedule::v3d(),
        None => {}
    }
    for line in config_text(&cfg).lines() {
        if let Some((k, v)) = line.split_once('=') {
            log.config(k.trim(), v.trim());
        }
    }
    if let Some(p) = s.preset {
        log.config("preset", format!("{p:?}").to_lowercase());
    }
    Ok(cfg)
}

fn encoding(ascii: bool) -> PlyEncoding {
    if ascii {
        PlyEncoding::Ascii
    } else {
        PlyEncoding::BinaryLittleEndian
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, |w| {
        w.write_all(text.as_bytes()).map_err(|source| IoError::Io {
            path: path.to_path_buf(),
            source,
        })
    })
    .map_err(output)
}

/// Sparse pixel clouds `image_<id>.spxc` of a directory, by image id.
fn read_pixel_dir(dir: &Path) -> Result<Vec<SparsePixelCloud>, CliError> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    let mut found: Vec<(u32, PathBuf)> = Vec::new();
    for e in entries {
        let path = e.map_err(input)?.path();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if let Some(id) = name
            .strip_prefix("image_")
            .and_then(|n| n.strip_suffix(".spxc"))
        {
            if let Ok(id) = id.parse() {
                found.push((id, path));
            }
        }
    }
    found.sort();
    let mut clouds = Vec::with_capacity(found.len());
    for (id, path) in found {
        let c =
            read_spxc(&path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if c.image_id != id {
            return Err(CliError::Input(format!(
                "{} holds image {}",
                path.display(),
                c.image_id
            )));
        }
        clouds.push(c);
    }
    Ok(clouds)
}

fn spxc_path(dir: &Path, image_id: u32) -> PathBuf {
    dir.join(format!("image_{image_id}.spxc"))
}

fn links_path(dir: &Path, image_id: u32) -> PathBuf {
    dir.join(format!("links_{image_id}.csv"))
}

fn check_assoc(
    assoc: &FaceAssociation,
    mesh: Option<&TiledMesh>,
    points: usize,
) -> Result<(), CliError> {
    if assoc.point_faces.len() != points {
        return Err(CliError::Input(format!(
            "association covers {} points, cloud has {points}",
            assoc.point_faces.len()
        )));
    }
    if let Some(mesh) = mesh {
        if let Some(f) = assoc
            .point_faces
            .iter()
            .flatten()
            .find(|f| !mesh.has_face(**f))
        {
            return Err(CliError::Input(format!(
                "association references missing face {f:?}"
            )));
        }
    }
    Ok(())
}

pub fn pcma(a: PcmaArgs, log: &mut RunLog) -> Outcome {
    log.stage("read");
    let cfg = settings(&a.settings, log)?;
    let mesh = read_mesh_tiles(&a.mesh).map_err(input)?;
    let mut cloud = read_point_cloud(&a.cloud).map_err(input)?;
    log.count("tiles", mesh.tiles.len());

    log.stage("associate");
    let (assoc, stats) = pcma_run(&mesh, &cloud, &cfg.pcma).map_err(input)?;
    if !assoc.is_consistent() {
        return Err(CliError::Invariant(
            "a point is linked to more than one face".into(),
        ));
    }
    log.count("faces", stats.faces);
    log.count("points", stats.points);
    log.count("associated_points", stats.associated_points);
    log.count(
        "point_association_rate",
        stats.associated_points as f64 / stats.points.max(1) as f64,
    );
    log.count("faces_per_level", &stats.faces_per_level);
    log.count("contested_points", stats.contested_points);
    log.count("degenerate_faces", stats.degenerate_faces);
    if stats.degenerate_faces > 0 {
        log.warnings.push(format!(
            "{} degenerate faces skipped",
            stats.degenerate_faces
        ));
    }
    log::info!(
        "{} of {} points associated",
        stats.associated_points,
        stats.points
    );
    cloud.assoc = Some(assoc.point_faces.clone());

    log.stage("write");
    write_point_cloud(&a.out_cloud, &cloud, encoding(a.ascii)).map_err(output)?;
    log.output(&a.out_cloud);
    write_face_assoc(&a.out_assoc, &assoc).map_err(output)?;
    log.output(&a.out_assoc);
    Ok(())
}

pub fn imgma(a: ImgmaArgs, log: &mut RunLog) -> Outcome {
    log.stage("read");
    let cfg = settings(&a.settings, log)?;
    let mesh = read_mesh_tiles(&a.mesh).map_err(input)?;
    let cameras = read_cameras(&a.cameras).map_err(input)?;
    let mut ids: Vec<u32> = cameras.iter().map(|c| c.image_id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Input("duplicate image id in cameras".into()));
    }

    log.stage("raycast");
    let out = imgma_run(&cameras, &mesh, &cfg.imgma);
    if let Some(c) = out.clouds.iter().find(|c| !c.is_sorted_unique()) {
        return Err(CliError::Invariant(format!(
            "image {} records are not row-major",
            c.image_id
        )));
    }
    if !out.visibility.is_transpose_consistent() {
        return Err(CliError::Invariant(
            "visibility table is not transpose-consistent".into(),
        ));
    }
    log.count("images", out.stats.images);
    log.count("image_tile_pairs", out.stats.image_tile_pairs);
    log.count("stage_counts", out.stats.stage_counts);
    log.count("linked_pixels", out.stats.linked_pixels);
    log.count("degenerate_faces", out.stats.degenerate_faces);
    log.warnings.extend(out.stats.warnings.iter().cloned());

    log.stage("write");
    create_dir(&a.out)?;
    for c in &out.clouds {
        let p = spxc_path(&a.out, c.image_id);
        write_spxc(&p, c).map_err(output)?;
        log.output(&p);
    }
    let vis = a.out.join("visibility.txt");
    write_visibility(&vis, &out.visibility).map_err(output)?;
    log.output(&vis);
    Ok(())
}

const IMPLICIT_HEADER: &str = "point,tile,face,pixels";

/// Visible points of one image with their face and that face's pixel
/// count; joined with the image's SPXC on `(tile, face)` this yields every
/// face-mediated point-pixel pair.
fn implicit_csv(
    pixels: &SparsePixelCloud,
    visible: &[u32],
    point_faces: &[Option<FaceRef>],
) -> String {
    let mut per_face: BTreeMap<FaceRef, usize> = BTreeMap::new();
    for r in &pixels.records {
        *per_face.entry(r.face()).or_default() += 1;
    }
    let mut s = format!("# image {}\n{IMPLICIT_HEADER}\n", pixels.image_id);
    for &p in visible {
        if let Some(f) = point_faces[p as usize] {
            s.push_str(&format!(
                "{p},{},{},{}\n",
                f.tile,
                f.face,
                per_face.get(&f).copied().unwrap_or(0)
            ));
        }
    }
    s
}

pub fn pcimga(a: PcimgaArgs, log: &mut RunLog) -> Outcome {
    log.stage("read");
    let cloud = read_point_cloud(&a.cloud).map_err(input)?;
    let assoc = read_face_assoc(&a.assoc).map_err(input)?;
    check_assoc(&assoc, None, cloud.len())?;
    let cameras = read_cameras(&a.cameras).map_err(input)?;
    let pixels = read_pixel_dir(&a.pixels)?;
    for p in &pixels {
        if !cameras.iter().any(|c| c.image_id == p.image_id) {
            return Err(CliError::Input(format!(
                "no camera for image {}",
                p.image_id
            )));
        }
    }
    log.config("mode", format!("{:?}", a.mode).to_lowercase());
    log.count("images", pixels.len());

    log.stage("link");
    let vis = visible_points(&assoc, &pixels);
    log.count(
        "visible_point_image_pairs",
        vis.images.values().map(Vec::len).sum::<usize>(),
    );
    let files: Vec<(PathBuf, String)> = match a.mode {
        ModeArg::Explicit => {
            let links = pcimga_explicit(&cloud, &cameras, &vis).map_err(input)?;
            let mut retained = 0;
            for il in &links.images {
                if il
                    .retained
                    .iter()
                    .any(|l| !vis.is_visible(il.image_id, l.point))
                {
                    return Err(CliError::Invariant(format!(
                        "image {} links an invisible point",
                        il.image_id
                    )));
                }
                retained += il.retained.len();
                if il.behind_camera > 0 {
                    log.warnings.push(format!(
                        "image {}: {} points behind the camera",
                        il.image_id, il.behind_camera
                    ));
                }
            }
            log.count(
                "candidates",
                links
                    .images
                    .iter()
                    .map(|i| i.candidates.len())
                    .sum::<usize>(),
            );
            log.count("retained", retained);
            log.count(
                "behind_camera",
                links.images.iter().map(|i| i.behind_camera).sum::<usize>(),
            );
            log.count(
                "out_of_bounds",
                links.images.iter().map(|i| i.out_of_bounds).sum::<usize>(),
            );
            links
                .images
                .iter()
                .map(|il| (links_path(&a.out, il.image_id), links_csv(il)))
                .collect()
        }
        ModeArg::Implicit => pixels
            .iter()
            .map(|p| {
                let visible = vis
                    .images
                    .get(&p.image_id)
                    .map(Vec::as_slice)
                    .unwrap_or_default();
                (
                    a.out.join(format!("implicit_{}.csv", p.image_id)),
                    implicit_csv(p, visible, &assoc.point_faces),
                )
            })
            .collect(),
    };

    log.stage("write");
    create_dir(&a.out)?;
    for (path, text) in &files {
        write_text(path, text)?;
        log.output(path);
    }
    Ok(())
}

fn direction(d: DirectionArg) -> Direction {
    match d {
        DirectionArg::MeshToPc => Direction::MeshToPc,
        DirectionArg::PcToMesh => Direction::PcToMesh,
        DirectionArg::MeshToImg => Direction::MeshToImg,
        DirectionArg::ImgToMesh => Direction::ImgToMesh,
        DirectionArg::PcToImg => Direction::PcToImg,
        DirectionArg::ImgToPc => Direction::ImgToPc,
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Modality {
    Cloud,
    Mesh,
    Images,
}

fn endpoints(d: Direction) -> (Modality, Modality) {
    use Modality::*;
    match d {
        Direction::MeshToPc => (Mesh, Cloud),
        Direction::PcToMesh => (Cloud, Mesh),
        Direction::MeshToImg => (Mesh, Images),
        Direction::ImgToMesh => (Images, Mesh),
        Direction::PcToImg => (Cloud, Images),
        Direction::ImgToPc => (Images, Cloud),
    }
}

fn split_attr(s: &str) -> (String, String) {
    match s.split_once(':') {
        Some((src, dst)) => (src.to_string(), dst.to_string()),
        None => (s.to_string(), s.to_string()),
    }
}

fn need<'a, T>(v: &'a Option<T>, flag: &str, why: &str) -> Result<&'a T, CliError> {
    v.as_ref()
        .ok_or_else(|| CliError::Input(format!("--{flag} is required {why}")))
}

pub fn transfer(a: TransferArgs, log: &mut RunLog) -> Outcome {
    let dir = direction(a.direction);
    let (from, to) = endpoints(dir);
    let mode = a.mode.map(|m| match m {
        ModeArg::Implicit => Mode::Implicit,
        ModeArg::Explicit => Mode::Explicit,
    });
    let (src, dst): (Vec<String>, Vec<String>) = a.attrs.iter().map(|s| split_attr(s)).unzip();
    let spec = TransferSpec {
        direction: dir,
        kind: match a.kind {
            KindArg::Label => Kind::Label,
            KindArg::Feature => Kind::Feature,
        },
        mode,
        source: src,
        target: dst,
        reduction: match a.reduction {
            ReductionArg::MinDepth => PixelReduction::MinDepth,
            ReductionArg::Aggregate => PixelReduction::Aggregate,
        },
    };
    log.config("direction", format!("{:?}", spec.direction));
    log.config("kind", format!("{:?}", spec.kind));
    if let Some(m) = spec.mode {
        log.config("mode", format!("{m:?}"));
    }
    log.config("reduction", format!("{:?}", spec.reduction));

    // Which inputs the direction needs.
    let uses = |m: Modality| from == m || to == m;
    let via_faces = !dir.involves_pc_and_img() || mode == Some(Mode::Implicit);
    let uses_cloud = uses(Modality::Cloud);
    let uses_mesh = uses(Modality::Mesh) || (dir.involves_pc_and_img() && via_faces);
    let uses_assoc = uses_cloud && via_faces;
    let uses_links = dir.involves_pc_and_img() && mode == Some(Mode::Explicit);
    let out_cloud = (to == Modality::Cloud)
        .then(|| need(&a.out_cloud, "out-cloud", "for this direction"))
        .transpose()?;
    let out_mesh = (to == Modality::Mesh)
        .then(|| need(&a.out_mesh, "out-mesh", "for this direction"))
        .transpose()?;
    let out_pixels = (to == Modality::Images)
        .then(|| need(&a.out_pixels, "out-pixels", "for this direction"))
        .transpose()?;
    if a.preview.is_some() && (to != Modality::Images || spec.kind != Kind::Label) {
        return Err(CliError::Input(
            "--preview applies to label transfers into images".into(),
        ));
    }

    log.stage("read");
    let mut cloud = match uses_cloud {
        true => read_point_cloud(need(&a.cloud, "cloud", "for this direction")?).map_err(input)?,
        false => PointCloud::new(Vec::new()),
    };
    let mut mesh = match uses_mesh {
        true => read_mesh_tiles(need(&a.mesh, "mesh", "for this direction")?).map_err(input)?,
        false => TiledMesh::default(),
    };
    let assoc = match uses_assoc {
        true => {
            let assoc =
                read_face_assoc(need(&a.assoc, "assoc", "for this direction")?).map_err(input)?;
            check_assoc(&assoc, Some(&mesh), cloud.len())?;
            Some(assoc)
        }
        false => None,
    };
    let mut pixels = match uses(Modality::Images) {
        true => read_pixel_dir(need(&a.pixels, "pixels", "for this direction")?)?,
        false => Vec::new(),
    };
    let links = match uses_links {
        true => {
            let dir = need(&a.links, "links", "for explicit transfers")?;
            let mut images = Vec::with_capacity(pixels.len());
            for p in &pixels {
                let path = links_path(dir, p.image_id);
                images.push(
                    read_links_csv(&path, p.image_id)
                        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?,
                );
            }
            if let Some(l) = images
                .iter()
                .flat_map(|i| &i.candidates)
                .find(|l| l.point as usize >= cloud.len())
            {
                return Err(CliError::Input(format!(
                    "link to point {} beyond the cloud",
                    l.point
                )));
            }
            Some(PointPixelLinks { images })
        }
        false => None,
    };
    let preview = match &a.preview {
        Some(dir) => {
            let cams = read_cameras(need(&a.cameras, "cameras", "for previews")?).map_err(input)?;
            let scheme = match &a.scheme {
                Some(p) => read_label_scheme(p).map_err(input)?,
                None => LabelScheme::default(),
            };
            Some((dir.clone(), cams, scheme))
        }
        None => None,
    };

    log.stage("transfer");
    let scene = TransferScene {
        cloud: &mut cloud,
        mesh: &mut mesh,
        pixels: &mut pixels,
    };
    let report = run_transfer(
        &spec,
        scene,
        Links {
            faces: assoc.as_ref(),
            pixels: links.as_ref(),
        },
    )
    .map_err(input)?;
    log.count("targets", report.targets);
    log.count("transferred", report.transferred);
    log.count("unlabeled", report.unlabeled);
    log.count("linked_unlabeled", report.linked_unlabeled);
    log.count("unanimity_rate", report.unanimity_rate);
    let report_text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Invariant(e.to_string()))?
        + "\n";

    log.stage("write");
    if let Some(p) = out_cloud {
        let enc = if is_ascii_ply(a.cloud.as_deref()) {
            PlyEncoding::Ascii
        } else {
            PlyEncoding::BinaryLittleEndian
        };
        write_point_cloud(p, &cloud, enc).map_err(output)?;
        log.output(p);
    }
    if let Some(dir) = out_mesh {
        let m = write_mesh_tiles(dir, &mesh).map_err(output)?;
        log.output(&m);
    }
    if let Some(dir) = out_pixels {
        create_dir(dir)?;
        for p in &pixels {
            let path = spxc_path(dir, p.image_id);
            write_spxc(&path, p).map_err(output)?;
            log.output(&path);
        }
    }
    if let Some((dir, cams, scheme)) = &preview {
        create_dir(dir)?;
        for p in &pixels {
            let Some(cam) = cams.iter().find(|c| c.image_id == p.image_id) else {
                log.warnings.push(format!(
                    "no camera for image {}, preview skipped",
                    p.image_id
                ));
                continue;
            };
            let labels = p
                .attributes
                .get(&spec.target[0])
                .map(|c| c.as_labels())
                .unwrap_or_default();
            let path = dir.join(format!("preview_{}.ppm", p.image_id));
            write_ppm(&path, cam.width, cam.height, p, &labels, scheme).map_err(output)?;
            log.output(&path);
        }
    }
    if let Some(p) = &a.report {
        write_text(p, &report_text)?;
        log.output(p);
    }
    print!("{report_text}");
    Ok(())
}

fn is_ascii_ply(path: Option<&Path>) -> bool {
    let Some(path) = path else { return false };
    let Ok(bytes) = std::fs::read(path) else {
        return false;
    };
    let head = &bytes[..bytes.len().min(64)];
    head.windows(12).any(|w| w == b"format ascii")
}

pub fn check(a: CheckArgs, log: &mut RunLog) -> Outcome {
    log.stage("read");
    let cfg = settings(&a.settings, log)?;
    log.config("gt_column", &a.gt_column);
    let mesh = read_mesh_tiles(&a.mesh).map_err(input)?;
    let cloud = read_point_cloud(&a.cloud).map_err(input)?;
    if cloud.labels(&a.gt_column).is_none() {
        return Err(CliError::Input(format!(
            "cloud has no '{}' column",
            a.gt_column
        )));
    }
    let assoc = match &a.assoc {
        Some(p) => {
            let assoc = read_face_assoc(p).map_err(input)?;
            check_assoc(&assoc, Some(&mesh), cloud.len())?;
            assoc
        }
        None => {
            log.stage("associate");
            pcma_run(&mesh, &cloud, &cfg.pcma).map_err(input)?.0
        }
    };

    log.stage("check");
    let consistency = forward_backward_check(&cloud, &a.gt_column, &assoc).map_err(input)?;
    let rates = association_rates(&mesh, &cloud, &assoc, Some(&a.gt_column));
    log.count("consistency_rate", consistency.consistency_rate);
    log.count("inconsistent_points", consistency.inconsistent_points.len());
    log.count("point_rate", rates.point_rate);
    log.count("face_rate", rates.face_rate);
    log.count("area_rate", rates.area_rate);
    let report = serde_json::json!({
        "consistency": consistency,
        "association_rates": rates,
    });
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Invariant(e.to_string()))?
        + "\n";

    if let Some(p) = &a.out {
        write_text(p, &text)?;
        log.output(p);
    }
    print!("{text}");
    Ok(())
}

fn template(t: TemplateArg) -> Template {
    match t {
        TemplateArg::Plane => Template::Plane,
        TemplateArg::Cube => Template::Cube,
        TemplateArg::Roof => Template::RoofTwoPlane,
        TemplateArg::Town => Template::Town,
    }
}

pub fn default_scheme() -> LabelScheme {
    LabelScheme {
        entries: [
            (GROUND, "ground", [128, 128, 128]),
            (WALL, "wall", [200, 60, 40]),
            (ROOF, "roof", [40, 80, 200]),
        ]
        .into_iter()
        .map(|(id, name, color)| {
            (
                id,
                LabelEntry {
                    name: name.into(),
                    color,
                },
            )
        })
        .collect(),
    }
}

pub fn synth(a: SynthArgs, log: &mut RunLog) -> Outcome {
    log.stage("generate");
    let mut spec = SceneSpec::new(template(a.template), a.extent, a.density, a.seed);
    spec.subdivisions = a.subdivisions;
    spec.noise_sigma = a.noise;
    spec.shift = trimodal_core::geom::Vec3::new(a.shift[0], a.shift[1], a.shift[2]);
    if a.cameras > 0 {
        spec.cameras = nadir_rig(
            a.extent,
            a.camera_height,
            a.cameras,
            a.image_width,
            a.image_height,
            a.focal,
        );
    }
    for (k, v) in [
        ("template", format!("{:?}", spec.template)),
        ("seed", a.seed.to_string()),
        ("extent", a.extent.to_string()),
        ("density", a.density.to_string()),
        ("subdivisions", a.subdivisions.to_string()),
        ("noise", a.noise.to_string()),
        (
            "shift",
            format!("{},{},{}", a.shift[0], a.shift[1], a.shift[2]),
        ),
    ] {
        log.config(k, v);
    }
    let scene = generate(&spec).map_err(input)?;
    let dead_zone = match spec.template {
        Template::RoofTwoPlane => {
            let sched = match a.preset {
                Preset::H3d => ThresholdSchedule::h3d(),
                Preset::V3d => ThresholdSchedule::v3d(),
            };
            Some(dead_zone_points(&spec, &sched).map_err(input)?)
        }
        _ => None,
    };
    log.count("tiles", scene.mesh.tiles.len());
    log.count("faces", scene.mesh.face_count());
    log.count("points", scene.cloud.len());
    log.count("cameras", scene.cameras.len());

    log.stage("write");
    create_dir(&a.out)?;
    let cloud = a.out.join("cloud.ply");
    write_point_cloud(&cloud, &scene.cloud, encoding(a.ascii)).map_err(output)?;
    log.output(&cloud);
    let manifest = write_mesh_tiles(&a.out.join("mesh"), &scene.mesh).map_err(output)?;
    log.output(&manifest);
    let cams = a.out.join("cameras.txt");
    write_cameras(&cams, &scene.cameras).map_err(output)?;
    log.output(&cams);
    let scheme = a.out.join("labels.txt");
    write_label_scheme(&scheme, &default_scheme()).map_err(output)?;
    log.output(&scheme);
    let mut gt = String::from("point,tile,face\n");
    for (i, f) in scene.gt_faces.iter().enumerate() {
        gt.push_str(&format!("{i},{},{}\n", f.tile, f.face));
    }
    let gt_path = a.out.join("gt_faces.csv");
    write_text(&gt_path, &gt)?;
    log.output(&gt_path);
    if let Some(points) = dead_zone {
        let mut s = String::from("case,x,y,z,linked_when_excluding,linked_when_including\n");
        for p in &points {
            let case = match p.case {
                DeadZoneCase::A1 => "A1",
                DeadZoneCase::A2 => "A2",
                DeadZoneCase::B1 => "B1",
                DeadZoneCase::B2 => "B2",
                DeadZoneCase::C1 => "C1",
                DeadZoneCase::C2 => "C2",
            };
            s.push_str(&format!(
                "{case},{},{},{},{},{}\n",
                p.position.x,
                p.position.y,
                p.position.z,
                u8::from(p.linked_when_excluding),
                u8::from(p.linked_when_including)
            ));
        }
        let path = a.out.join("dead_zone.csv");
        write_text(&path, &s)?;
        log.output(&path);
        log.count("dead_zone_points", points.len());
    }
    Ok(())
}
