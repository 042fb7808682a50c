//! Tiled meshes on disk: one OBJ per tile, a manifest listing the tiles
//! with their bounding boxes, and an optional per-face column sidecar.
//!
//! Manifest:
//! ```text
//! version 1
//! tile <id> <relative obj path> <min x y z> <max x y z>
//! ```
//! Sidecar `<stem>.faces.csv`: a `name:type` header, then one row per face.

use std::io::Write;
use std::path::{Path, PathBuf};

use super::{
    format_value, io_err, parse_type, parse_value, read_to_string, type_name, write_atomic,
    IoError, Result,
};
use crate::geom::{Aabb, Vec3};
use crate::scene::{Column, Columns, MeshTile, SceneError, TiledMesh};

pub const MANIFEST_NAME: &str = "manifest.txt";
const MANIFEST_VERSION: u32 = 1;
/// Allowed deviation between a loaded tile and its manifest box.
const MANIFEST_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub tile_id: u32,
    pub path: PathBuf,
    pub mbb: Aabb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileManifest {
    pub version: u32,
    pub tiles: Vec<ManifestEntry>,
}

pub fn parse_manifest(text: &str) -> Result<FileManifest> {
    let mut version = None;
    let mut tiles: Vec<ManifestEntry> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        let err = |msg: String| IoError::Parse { line: ln + 1, msg };
        match tok[0] {
            "version" if tok.len() == 2 => {
                let v: u32 = tok[1]
                    .parse()
                    .map_err(|_| err(format!("bad version '{}'", tok[1])))?;
                if v != MANIFEST_VERSION {
                    return Err(IoError::UnsupportedVersion(v));
                }
                version = Some(v);
            }
            "tile" => {
                if tok.len() != 9 {
                    return Err(IoError::BadFieldCount {
                        line: ln + 1,
                        expected: 9,
                        got: tok.len(),
                    });
                }
                let id: u32 = tok[1]
                    .parse()
                    .map_err(|_| err(format!("bad tile id '{}'", tok[1])))?;
                let mut c = [0.0; 6];
                for (k, s) in tok[3..].iter().enumerate() {
                    c[k] = s
                        .parse()
                        .map_err(|_| err(format!("bad coordinate '{s}'")))?;
                }
                if tiles.iter().any(|t| t.tile_id == id) {
                    return Err(IoError::Scene(SceneError::DuplicateTile(id)));
                }
                tiles.push(ManifestEntry {
                    tile_id: id,
                    path: PathBuf::from(tok[2]),
                    mbb: Aabb::new(Vec3::new(c[0], c[1], c[2]), Vec3::new(c[3], c[4], c[5])),
                });
            }
            _ => return Err(err(format!("unrecognized line '{line}'"))),
        }
    }
    Ok(FileManifest {
        version: version
            .ok_or_else(|| IoError::MalformedHeader("manifest has no version line".into()))?,
        tiles,
    })
}

pub fn read_manifest(path: &Path) -> Result<FileManifest> {
    parse_manifest(&read_to_string(path)?)
}

/// Parses OBJ vertices and triangles; other records are ignored.
pub fn parse_obj(tile_id: u32, text: &str) -> Result<MeshTile> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tok = line.split_whitespace();
        let err = |msg: String| IoError::Parse { line: ln + 1, msg };
        match tok.next() {
            Some("v") => {
                let c: Vec<f64> = tok
                    .take(3)
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|_| err(format!("bad coordinate '{s}'")))
                    })
                    .collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(err("vertex needs three coordinates".into()));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let refs: Vec<&str> = tok.collect();
                if refs.len() != 3 {
                    return Err(IoError::NonTriangleFace {
                        line: ln + 1,
                        vertices: refs.len(),
                    });
                }
                let mut f = [0u32; 3];
                for (k, r) in refs.iter().enumerate() {
                    let head = r.split('/').next().unwrap_or("");
                    let i: i64 = head
                        .parse()
                        .map_err(|_| err(format!("bad vertex reference '{r}'")))?;
                    let n = vertices.len() as i64;
                    let idx = if i < 0 { n + i } else { i - 1 };
                    if i == 0 || idx < 0 || idx >= n {
                        return Err(IoError::DanglingIndex {
                            line: ln + 1,
                            index: i,
                        });
                    }
                    f[k] = idx as u32;
                }
                faces.push(f);
            }
            _ => {}
        }
    }
    Ok(MeshTile::new(tile_id, vertices, faces)?)
}

pub fn obj_text(tile: &MeshTile) -> String {
    let mut s = String::new();
    for v in &tile.vertices {
        s.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for f in &tile.faces {
        s.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    s
}

fn sidecar_path(obj: &Path) -> PathBuf {
    obj.with_extension("faces.csv")
}

pub fn columns_csv(cols: &Columns, n: usize) -> String {
    let mut s = cols
        .0
        .iter()
        .map(|c| format!("{}:{}", c.name, type_name(c.ty)))
        .collect::<Vec<_>>()
        .join(",");
    s.push('\n');
    for i in 0..n {
        let row: Vec<String> = cols
            .0
            .iter()
            .map(|c| format_value(c.ty, c.values[i]))
            .collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn parse_columns_csv(text: &str, n: usize) -> Result<Columns> {
    let mut lines = text.lines().enumerate();
    let (_, head) = lines
        .next()
        .ok_or_else(|| IoError::MalformedHeader("empty column file".into()))?;
    let mut cols = Vec::new();
    for field in head.split(',') {
        let (name, ty) = field
            .split_once(':')
            .ok_or_else(|| IoError::MalformedHeader(format!("column '{field}' lacks a type")))?;
        let ty = parse_type(ty)
            .ok_or_else(|| IoError::MalformedHeader(format!("unknown type '{ty}'")))?;
        cols.push(Column {
            name: name.to_string(),
            ty,
            values: Vec::with_capacity(n),
        });
    }
    let mut rows = 0;
    for (ln, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(IoError::BadFieldCount {
                line: ln + 1,
                expected: cols.len(),
                got: fields.len(),
            });
        }
        for (c, f) in cols.iter_mut().zip(fields) {
            let v = parse_value(c.ty, f).ok_or_else(|| IoError::UnparsableValue {
                line: ln + 1,
                key: c.name.clone(),
                value: f.to_string(),
            })?;
            c.values.push(v);
        }
        rows += 1;
    }
    if rows != n {
        return Err(IoError::CountMismatch {
            expected: n,
            got: rows,
        });
    }
    let cols = Columns(cols);
    cols.validate(n)?;
    Ok(cols)
}

/// Loads every tile listed in the manifest at `manifest_path`.
pub fn read_mesh_tiles(manifest_path: &Path) -> Result<TiledMesh> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut tiles = Vec::with_capacity(manifest.tiles.len());
    for entry in &manifest.tiles {
        let obj = base.join(&entry.path);
        let mut tile = parse_obj(entry.tile_id, &read_to_string(&obj)?)?;
        let dev = tile.mbb.max_deviation(&entry.mbb);
        if !(dev <= MANIFEST_TOLERANCE) {
            return Err(IoError::ManifestMismatch {
                tile: entry.tile_id,
                deviation: dev,
            });
        }
        let side = sidecar_path(&obj);
        if side.exists() {
            tile.face_attrs = parse_columns_csv(&read_to_string(&side)?, tile.faces.len())?;
        }
        tiles.push(tile);
    }
    Ok(TiledMesh::new(tiles)?)
}

/// Writes `tile_<id>.obj` (plus sidecar) per tile and the manifest into
/// `dir`; returns the manifest path.
pub fn write_mesh_tiles(dir: &Path, mesh: &TiledMesh) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut manifest = format!("version {MANIFEST_VERSION}\n");
    for tile in &mesh.tiles {
        tile.validate()?;
        let name = format!("tile_{}.obj", tile.tile_id);
        let obj = dir.join(&name);
        let text = obj_text(tile);
        write_atomic(&obj, |w| w.write_all(text.as_bytes()).map_err(io_err(&obj)))?;
        let side = sidecar_path(&obj);
        if tile.face_attrs.0.is_empty() {
            if side.exists() {
                std::fs::remove_file(&side).map_err(io_err(&side))?;
            }
        } else {
            let csv = columns_csv(&tile.face_attrs, tile.faces.len());
            write_atomic(&side, |w| {
                w.write_all(csv.as_bytes()).map_err(io_err(&side))
            })?;
        }
        let (lo, hi) = (tile.mbb.min, tile.mbb.max);
        manifest.push_str(&format!(
            "tile {} {name} {} {} {} {} {} {}\n",
            tile.tile_id, lo.x, lo.y, lo.z, hi.x, hi.y, hi.z
        ));
    }
    let path = dir.join(MANIFEST_NAME);
    write_atomic(&path, |w| {
        w.write_all(manifest.as_bytes()).map_err(io_err(&path))
    })?;
    Ok(path)
}
