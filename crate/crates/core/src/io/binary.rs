//! Binary association artifacts.
//!
//! SPXC (sparse pixel cloud), little-endian:
//! `"SPXC" u32 version u32 image_id u32 count u16 n_attr`, then per
//! attribute `u16 name_len, name bytes, u8 type code`, then per record
//! `u32 row u32 col f32 depth u32 tile u32 face` followed by its attribute
//! values. Records are strictly increasing in `(row, col)`.
//!
//! FASC (face association): `"FASC" u32 version u32 n_points u32 n_tiles`,
//! then per tile `u32 tile_id u32 n_faces` and per face
//! `u8 level (255 = none) u32 count` and `count` u32 point indices.

use std::io::Write;
use std::path::Path;

use super::{io_err, put_value, write_atomic, IoError, Reader, Result};
use crate::imgma::{PixelRecord, SparsePixelCloud};
use crate::pcma::{FaceAssociation, FaceLink, TileAssociation};
use crate::scene::{Column, Columns, FaceRef, ScalarType};

const SPXC_MAGIC: &[u8; 4] = b"SPXC";
const FASC_MAGIC: &[u8; 4] = b"FASC";
const VERSION: u32 = 1;
const NO_LEVEL: u8 = 255;

fn type_code(t: ScalarType) -> u8 {
    match t {
        ScalarType::I8 => 1,
        ScalarType::U8 => 2,
        ScalarType::I16 => 3,
        ScalarType::U16 => 4,
        ScalarType::I32 => 5,
        ScalarType::U32 => 6,
        ScalarType::F32 => 7,
        ScalarType::F64 => 8,
    }
}

fn code_type(c: u8) -> Option<ScalarType> {
    Some(match c {
        1 => ScalarType::I8,
        2 => ScalarType::U8,
        3 => ScalarType::I16,
        4 => ScalarType::U16,
        5 => ScalarType::I32,
        6 => ScalarType::U32,
        7 => ScalarType::F32,
        8 => ScalarType::F64,
        _ => return None,
    })
}

/// SPXC bytes of `cloud`; fails if records are not sorted.
pub fn spxc_bytes(cloud: &SparsePixelCloud) -> Result<Vec<u8>> {
    if let Some(i) = cloud
        .records
        .windows(2)
        .position(|w| (w[0].row, w[0].col) >= (w[1].row, w[1].col))
    {
        return Err(IoError::UnsortedRecords { index: i + 1 });
    }
    cloud.attributes.validate(cloud.records.len())?;
    let n = cloud.records.len();
    let mut out = Vec::with_capacity(20 + n * 20);
    out.extend(SPXC_MAGIC);
    out.extend(VERSION.to_le_bytes());
    out.extend(cloud.image_id.to_le_bytes());
    out.extend((n as u32).to_le_bytes());
    out.extend((cloud.attributes.0.len() as u16).to_le_bytes());
    for c in &cloud.attributes.0 {
        out.extend((c.name.len() as u16).to_le_bytes());
        out.extend(c.name.as_bytes());
        out.push(type_code(c.ty));
    }
    for (i, r) in cloud.records.iter().enumerate() {
        out.extend(r.row.to_le_bytes());
        out.extend(r.col.to_le_bytes());
        out.extend((r.depth as f32).to_le_bytes());
        out.extend(r.tile_id.to_le_bytes());
        out.extend(r.face_id.to_le_bytes());
        for c in &cloud.attributes.0 {
            put_value(&mut out, c.ty, c.values[i]);
        }
    }
    Ok(out)
}

pub fn parse_spxc(data: &[u8]) -> Result<SparsePixelCloud> {
    let mut r = Reader::new(data);
    if r.take(4).map_err(|_| IoError::BadMagic)? != SPXC_MAGIC {
        return Err(IoError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(IoError::UnsupportedVersion(version));
    }
    let image_id = r.u32()?;
    let n = r.u32()? as usize;
    let n_attr = r.u16()? as usize;
    let mut attributes = Vec::with_capacity(n_attr);
    for _ in 0..n_attr {
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| IoError::MalformedHeader("attribute name is not UTF-8".into()))?;
        let ty = code_type(r.u8()?)
            .ok_or_else(|| IoError::MalformedHeader("unknown attribute type".into()))?;
        attributes.push(Column {
            name,
            ty,
            values: Vec::new(),
        });
    }
    let record_size = 20 + attributes.iter().map(|c| c.ty.size()).sum::<usize>();
    if data.len().saturating_sub(r.position()) < n.saturating_mul(record_size) {
        return Err(IoError::Truncated);
    }
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let rec = PixelRecord {
            row: r.u32()?,
            col: r.u32()?,
            depth: r.f32()? as f64,
            tile_id: r.u32()?,
            face_id: r.u32()?,
        };
        if let Some(prev) = records.last() {
            let prev: &PixelRecord = prev;
            if (prev.row, prev.col) >= (rec.row, rec.col) {
                return Err(IoError::UnsortedRecords { index: i });
            }
        }
        records.push(rec);
        for c in &mut attributes {
            c.values.push(r.value(c.ty)?);
        }
    }
    if !r.is_done() {
        return Err(IoError::CountMismatch {
            expected: n,
            got: n + 1,
        });
    }
    let attributes = Columns(attributes);
    attributes.validate(n)?;
    Ok(SparsePixelCloud {
        image_id,
        records,
        attributes,
    })
}

pub fn write_spxc(path: &Path, cloud: &SparsePixelCloud) -> Result<()> {
    let bytes = spxc_bytes(cloud)?;
    write_atomic(path, |w| w.write_all(&bytes).map_err(io_err(path)))
}

pub fn read_spxc(path: &Path) -> Result<SparsePixelCloud> {
    parse_spxc(&std::fs::read(path).map_err(io_err(path))?)
}

pub fn face_assoc_bytes(assoc: &FaceAssociation) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend(FASC_MAGIC);
    out.extend(VERSION.to_le_bytes());
    out.extend((assoc.point_faces.len() as u32).to_le_bytes());
    out.extend((assoc.tiles.len() as u32).to_le_bytes());
    for t in &assoc.tiles {
        out.extend(t.tile_id.to_le_bytes());
        out.extend((t.faces.len() as u32).to_le_bytes());
        for f in &t.faces {
            out.push(f.level.unwrap_or(NO_LEVEL));
            out.extend((f.points.len() as u32).to_le_bytes());
            for p in &f.points {
                out.extend(p.to_le_bytes());
            }
        }
    }
    out
}

pub fn parse_face_assoc(data: &[u8]) -> Result<FaceAssociation> {
    let mut r = Reader::new(data);
    if r.take(4).map_err(|_| IoError::BadMagic)? != FASC_MAGIC {
        return Err(IoError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(IoError::UnsupportedVersion(version));
    }
    let n_points = r.u32()?;
    let n_tiles = r.u32()?;
    let mut point_faces: Vec<Option<FaceRef>> = vec![None; n_points as usize];
    let mut tiles: Vec<TileAssociation> = Vec::new();
    for _ in 0..n_tiles {
        let tile_id = r.u32()?;
        let n_faces = r.u32()?;
        let mut faces = Vec::new();
        for fi in 0..n_faces {
            let level = match r.u8()? {
                NO_LEVEL => None,
                l => Some(l),
            };
            let count = r.u32()?;
            if (data.len() - r.position()) / 4 < count as usize {
                return Err(IoError::Truncated);
            }
            let mut points = Vec::with_capacity(count as usize);
            for _ in 0..count {
                let p = r.u32()?;
                let slot = point_faces
                    .get_mut(p as usize)
                    .ok_or(IoError::IndexOutOfRange {
                        index: p,
                        count: n_points,
                    })?;
                if slot.is_some() {
                    return Err(IoError::DuplicatePoint(p));
                }
                *slot = Some(FaceRef::new(tile_id, fi));
                points.push(p);
            }
            faces.push(FaceLink { points, level });
        }
        if tiles.last().is_some_and(|t| t.tile_id >= tile_id) {
            return Err(IoError::MalformedHeader(
                "tiles must be in ascending id order".into(),
            ));
        }
        tiles.push(TileAssociation { tile_id, faces });
    }
    if !r.is_done() {
        return Err(IoError::MalformedHeader(
            "trailing bytes after the last tile".into(),
        ));
    }
    Ok(FaceAssociation { tiles, point_faces })
}

pub fn write_face_assoc(path: &Path, assoc: &FaceAssociation) -> Result<()> {
    let bytes = face_assoc_bytes(assoc);
    write_atomic(path, |w| w.write_all(&bytes).map_err(io_err(path)))
}

pub fn read_face_assoc(path: &Path) -> Result<FaceAssociation> {
    parse_face_assoc(&std::fs::read(path).map_err(io_err(path))?)
}
