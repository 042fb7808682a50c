//! Line-oriented text artifacts: cameras, run configuration, label scheme,
//! point-pixel links, visibility table and PPM label previews.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use super::{io_err, read_to_string, write_atomic, IoError, Result};
use crate::geom::Vec3;
use crate::imgma::{ImgmaConfig, SparsePixelCloud, VisibilityTable};
use crate::pcimga::{reduce_min_depth, ImageLinks, PointPixelLink};
use crate::pcma::{BoundaryPolicy, PcmaConfig, ThresholdLevel, ThresholdSchedule};
use crate::scene::{CameraModel, LabelEntry, LabelScheme};

const CAMERA_FIELDS: usize = 21;
const ROTATION_TOLERANCE: f64 = 1e-6;
/// Preview color of pixels not linked to any face.
pub const UNLINKED_COLOR: [u8; 3] = [255, 0, 255];
/// Preview color of labels missing from the scheme.
const UNKNOWN_COLOR: [u8; 3] = [128, 128, 128];

fn meaningful_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// `image_id width height fx fy cx cy k1 k2 r11 … r33 Cx Cy Cz` per line.
pub fn parse_cameras(text: &str) -> Result<Vec<CameraModel>> {
    let mut out: Vec<CameraModel> = Vec::new();
    for (line, l) in meaningful_lines(text) {
        let tok: Vec<&str> = l.split_whitespace().collect();
        if tok.len() != CAMERA_FIELDS {
            return Err(IoError::BadFieldCount {
                line,
                expected: CAMERA_FIELDS,
                got: tok.len(),
            });
        }
        let int = |s: &str| {
            s.parse::<u32>().map_err(|_| IoError::Parse {
                line,
                msg: format!("expected an unsigned integer, found '{s}'"),
            })
        };
        let num = |s: &str| {
            s.parse::<f64>().map_err(|_| IoError::Parse {
                line,
                msg: format!("expected a number, found '{s}'"),
            })
        };
        let f: Vec<f64> = tok[3..].iter().map(|s| num(s)).collect::<Result<_>>()?;
        let cam = CameraModel {
            image_id: int(tok[0])?,
            width: int(tok[1])?,
            height: int(tok[2])?,
            fx: f[0],
            fy: f[1],
            cx: f[2],
            cy: f[3],
            k1: f[4],
            k2: f[5],
            rotation: [
                [f[6], f[7], f[8]],
                [f[9], f[10], f[11]],
                [f[12], f[13], f[14]],
            ],
            center: Vec3::new(f[15], f[16], f[17]),
        };
        let dev = cam.orthonormality_error();
        if !(dev <= ROTATION_TOLERANCE) {
            return Err(IoError::NonOrthonormalRotation {
                line,
                deviation: dev,
            });
        }
        cam.validate(ROTATION_TOLERANCE)?;
        if out.iter().any(|c| c.image_id == cam.image_id) {
            return Err(IoError::Parse {
                line,
                msg: format!("duplicate image id {}", cam.image_id),
            });
        }
        out.push(cam);
    }
    Ok(out)
}

pub fn read_cameras(path: &Path) -> Result<Vec<CameraModel>> {
    parse_cameras(&read_to_string(path)?)
}

pub fn cameras_text(cams: &[CameraModel]) -> String {
    let mut s = String::from(
        "# image_id width height fx fy cx cy k1 k2 r11 r12 r13 r21 r22 r23 r31 r32 r33 cx cy cz\n",
    );
    for c in cams {
        let mut f: Vec<String> = vec![
            c.image_id.to_string(),
            c.width.to_string(),
            c.height.to_string(),
        ];
        f.extend(
            [c.fx, c.fy, c.cx, c.cy, c.k1, c.k2]
                .iter()
                .map(|v| v.to_string()),
        );
        f.extend(c.rotation.iter().flatten().map(|v| v.to_string()));
        f.extend(
            [c.center.x, c.center.y, c.center.z]
                .iter()
                .map(|v| v.to_string()),
        );
        s.push_str(&f.join(" "));
        s.push('\n');
    }
    s
}

pub fn write_cameras(path: &Path, cams: &[CameraModel]) -> Result<()> {
    let s = cameras_text(cams);
    write_atomic(path, |w| w.write_all(s.as_bytes()).map_err(io_err(path)))
}

/// Settings shared by all commands.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pcma: PcmaConfig,
    pub imgma: ImgmaConfig,
    pub threads: Option<usize>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pcma: PcmaConfig::default(),
            imgma: ImgmaConfig::default(),
            threads: None,
            seed: 0,
        }
    }
}

fn parse_levels(v: &str) -> Option<Vec<ThresholdLevel>> {
    v.split(',')
        .map(|lvl| {
            let lvl = lvl.trim();
            let (m, p) = lvl.split_once(':').unwrap_or((lvl, lvl));
            let minus: f64 = m.trim().parse().ok()?;
            let plus: f64 = p.trim().parse().ok()?;
            Some(ThresholdLevel { minus, plus })
        })
        .collect()
}

/// `key = value` lines; unknown keys are errors.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (line, l) in meaningful_lines(text) {
        let (key, value) = l.split_once('=').ok_or_else(|| IoError::Parse {
            line,
            msg: "expected key=value".into(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let bad = || IoError::UnparsableValue {
            line,
            key: key.to_string(),
            value: value.to_string(),
        };
        match key {
            "pcma.levels" => {
                let levels = parse_levels(value).ok_or_else(bad)?;
                cfg.pcma.schedule = ThresholdSchedule::new(levels).map_err(|_| bad())?;
            }
            "pcma.boundary_policy" => {
                cfg.pcma.boundary_policy = match value {
                    "exclude" => BoundaryPolicy::Exclude,
                    "include" => BoundaryPolicy::Include,
                    _ => return Err(bad()),
                }
            }
            "pcma.edge_tolerance" => {
                cfg.pcma.edge_tolerance = value
                    .parse()
                    .ok()
                    .filter(|v: &f64| *v >= 0.0 && v.is_finite())
                    .ok_or_else(bad)?
            }
            "imgma.depth_tie_tol" => {
                cfg.imgma.depth_tie_tol = value
                    .parse()
                    .ok()
                    .filter(|v: &f64| *v >= 0.0 && v.is_finite())
                    .ok_or_else(bad)?
            }
            "threads" => {
                cfg.threads = Some(
                    value
                        .parse()
                        .ok()
                        .filter(|&n: &usize| n > 0)
                        .ok_or_else(bad)?,
                )
            }
            "seed" => cfg.seed = value.parse().map_err(|_| bad())?,
            _ => {
                return Err(IoError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
    }
    Ok(cfg)
}

/// Defaults when `path` is `None`.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => parse_config(&read_to_string(p)?),
        None => Ok(RunConfig::default()),
    }
}

pub fn config_text(cfg: &RunConfig) -> String {
    let levels: Vec<String> = cfg
        .pcma
        .schedule
        .levels()
        .iter()
        .map(|l| format!("{}:{}", l.minus, l.plus))
        .collect();
    let policy = match cfg.pcma.boundary_policy {
        BoundaryPolicy::Exclude => "exclude",
        BoundaryPolicy::Include => "include",
    };
    let mut s = format!(
        "pcma.levels = {}\npcma.boundary_policy = {policy}\npcma.edge_tolerance = {}\nimgma.depth_tie_tol = {}\n",
        levels.join(","),
        cfg.pcma.edge_tolerance,
        cfg.imgma.depth_tie_tol
    );
    if let Some(t) = cfg.threads {
        s.push_str(&format!("threads = {t}\n"));
    }
    s.push_str(&format!("seed = {}\n", cfg.seed));
    s
}

pub fn write_config(path: &Path, cfg: &RunConfig) -> Result<()> {
    let s = config_text(cfg);
    write_atomic(path, |w| w.write_all(s.as_bytes()).map_err(io_err(path)))
}

/// `id name r g b` per line.
pub fn parse_label_scheme(text: &str) -> Result<LabelScheme> {
    let mut entries = BTreeMap::new();
    for (line, l) in meaningful_lines(text) {
        let tok: Vec<&str> = l.split_whitespace().collect();
        if tok.len() != 5 {
            return Err(IoError::BadFieldCount {
                line,
                expected: 5,
                got: tok.len(),
            });
        }
        let bad = |s: &str| IoError::Parse {
            line,
            msg: format!("cannot parse '{s}'"),
        };
        let id: i32 = tok[0].parse().map_err(|_| bad(tok[0]))?;
        let mut color = [0u8; 3];
        for k in 0..3 {
            color[k] = tok[2 + k].parse().map_err(|_| bad(tok[2 + k]))?;
        }
        entries.insert(
            id,
            LabelEntry {
                name: tok[1].to_string(),
                color,
            },
        );
    }
    Ok(LabelScheme { entries })
}

pub fn read_label_scheme(path: &Path) -> Result<LabelScheme> {
    parse_label_scheme(&read_to_string(path)?)
}

pub fn label_scheme_text(scheme: &LabelScheme) -> String {
    scheme
        .entries
        .iter()
        .map(|(id, e)| {
            format!(
                "{id} {} {} {} {}\n",
                e.name, e.color[0], e.color[1], e.color[2]
            )
        })
        .collect()
}

pub fn write_label_scheme(path: &Path, scheme: &LabelScheme) -> Result<()> {
    let s = label_scheme_text(scheme);
    write_atomic(path, |w| w.write_all(s.as_bytes()).map_err(io_err(path)))
}

const LINKS_HEADER: &str = "point,row,col,depth,retained";

/// All candidates of one image; `retained` marks the min-depth point.
pub fn links_csv(links: &ImageLinks) -> String {
    let mut s = format!("# image {}\n{LINKS_HEADER}\n", links.image_id);
    for c in &links.candidates {
        let kept = links
            .retained_at(c.row, c.col)
            .is_some_and(|r| r.point == c.point);
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            c.point,
            c.row,
            c.col,
            c.depth,
            u8::from(kept)
        ));
    }
    s
}

pub fn parse_links_csv(image_id: u32, text: &str) -> Result<ImageLinks> {
    let mut candidates = Vec::new();
    let mut header_seen = false;
    for (line, l) in meaningful_lines(text) {
        if !header_seen {
            if l != LINKS_HEADER {
                return Err(IoError::MalformedHeader(format!(
                    "expected '{LINKS_HEADER}'"
                )));
            }
            header_seen = true;
            continue;
        }
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 5 {
            return Err(IoError::BadFieldCount {
                line,
                expected: 5,
                got: f.len(),
            });
        }
        let bad = |s: &str| IoError::Parse {
            line,
            msg: format!("cannot parse '{s}'"),
        };
        candidates.push(PointPixelLink {
            point: f[0].parse().map_err(|_| bad(f[0]))?,
            row: f[1].parse().map_err(|_| bad(f[1]))?,
            col: f[2].parse().map_err(|_| bad(f[2]))?,
            depth: f[3].parse().map_err(|_| bad(f[3]))?,
        });
    }
    let (candidates, retained) = reduce_min_depth(candidates);
    Ok(ImageLinks {
        image_id,
        candidates,
        retained,
        ..Default::default()
    })
}

pub fn write_links_csv(path: &Path, links: &ImageLinks) -> Result<()> {
    let s = links_csv(links);
    write_atomic(path, |w| w.write_all(s.as_bytes()).map_err(io_err(path)))
}

pub fn read_links_csv(path: &Path, image_id: u32) -> Result<ImageLinks> {
    parse_links_csv(image_id, &read_to_string(path)?)
}

/// `image <id>: <tile> <tile> …` per image.
pub fn visibility_text(v: &VisibilityTable) -> String {
    v.image_tiles
        .iter()
        .map(|(img, tiles)| {
            let t: Vec<String> = tiles.iter().map(|t| t.to_string()).collect();
            format!("image {img}: {}\n", t.join(" ")).replace(": \n", ":\n")
        })
        .collect()
}

pub fn parse_visibility(text: &str) -> Result<VisibilityTable> {
    let mut rows = BTreeMap::new();
    for (line, l) in meaningful_lines(text) {
        let bad = || IoError::Parse {
            line,
            msg: "expected 'image <id>: <tiles>'".into(),
        };
        let rest = l.strip_prefix("image ").ok_or_else(bad)?;
        let (id, tiles) = rest.split_once(':').ok_or_else(bad)?;
        let id: u32 = id.trim().parse().map_err(|_| bad())?;
        let tiles: Vec<u32> = tiles
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        rows.insert(id, tiles);
    }
    Ok(VisibilityTable::from_image_rows(rows))
}

pub fn write_visibility(path: &Path, v: &VisibilityTable) -> Result<()> {
    let s = visibility_text(v);
    write_atomic(path, |w| w.write_all(s.as_bytes()).map_err(io_err(path)))
}

pub fn read_visibility(path: &Path) -> Result<VisibilityTable> {
    parse_visibility(&read_to_string(path)?)
}

/// ASCII PPM of a per-pixel label column. Unlinked pixels get
/// [`UNLINKED_COLOR`], linked pixels without a label are black.
pub fn ppm_text(
    width: u32,
    height: u32,
    pixels: &SparsePixelCloud,
    labels: &[i32],
    scheme: &LabelScheme,
) -> String {
    let mut img = vec![UNLINKED_COLOR; width as usize * height as usize];
    for (r, &l) in pixels.records.iter().zip(labels) {
        if r.row < height && r.col < width {
            img[r.row as usize * width as usize + r.col as usize] = if l < 0 {
                [0, 0, 0]
            } else {
                scheme.color(l).unwrap_or(UNKNOWN_COLOR)
            };
        }
    }
    let mut s = format!("P3\n{width} {height}\n255\n");
    for row in img.chunks(width.max(1) as usize) {
        let line: Vec<String> = row
            .iter()
            .map(|c| format!("{} {} {}", c[0], c[1], c[2]))
            .collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn write_ppm(
    path: &Path,
    width: u32,
    height: u32,
    pixels: &SparsePixelCloud,
    labels: &[i32],
    scheme: &LabelScheme,
) -> Result<()> {
    let s = ppm_text(width, height, pixels, labels, scheme);
    write_atomic(path, |w| w.write_all(s.as_bytes()).map_err(io_err(path)))
}
