//! Readers and writers for every persisted artifact. Binary formats are
//! little-endian; writers go through a temporary file and a rename so a
//! failed write never leaves a partial output behind.

mod binary;
mod mesh;
mod ply;
mod text;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::scene::{ScalarType, SceneError};

pub use binary::*;
pub use mesh::*;
pub use ply::*;
pub use text::*;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("expected {expected} records, found {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: face with {vertices} vertices (only triangles supported)")]
    NonTriangleFace { line: usize, vertices: usize },
    #[error("line {line}: vertex index {index} out of range")]
    DanglingIndex { line: usize, index: i64 },
    #[error("tile {tile}: bounding box differs from manifest by {deviation:e}")]
    ManifestMismatch { tile: u32, deviation: f64 },
    #[error("line {line}: expected {expected} fields, found {got}")]
    BadFieldCount {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: rotation is not orthonormal (deviation {deviation:e})")]
    NonOrthonormalRotation { line: usize, deviation: f64 },
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("record {index} is out of row-major order")]
    UnsortedRecords { index: usize },
    #[error("point index {index} out of range for {count} points")]
    IndexOutOfRange { index: u32, count: u32 },
    #[error("point {0} listed under more than one face")]
    DuplicatePoint(u32),
    #[error("unexpected end of data")]
    Truncated,
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: cannot parse '{value}' for '{key}'")]
    UnparsableValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error(transparent)]
    Scene(#[from] SceneError),
}

pub type Result<T> = std::result::Result<T, IoError>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes through a sibling temporary file that is renamed into place on
/// success and removed on failure.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let file = File::create(&tmp).map_err(io_err(&tmp))?;
        let mut w = BufWriter::new(file);
        body(&mut w)?;
        w.flush().map_err(io_err(&tmp))?;
        w.get_ref().sync_all().map_err(io_err(&tmp))?;
        drop(w);
        std::fs::rename(&tmp, path).map_err(io_err(path))
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

/// Type names as they appear in PLY headers and column sidecars.
pub(crate) fn type_name(t: ScalarType) -> &'static str {
    match t {
        ScalarType::I8 => "char",
        ScalarType::U8 => "uchar",
        ScalarType::I16 => "short",
        ScalarType::U16 => "ushort",
        ScalarType::I32 => "int",
        ScalarType::U32 => "uint",
        ScalarType::F32 => "float",
        ScalarType::F64 => "double",
    }
}

pub(crate) fn parse_type(s: &str) -> Option<ScalarType> {
    Some(match s {
        "char" | "int8" => ScalarType::I8,
        "uchar" | "uint8" => ScalarType::U8,
        "short" | "int16" => ScalarType::I16,
        "ushort" | "uint16" => ScalarType::U16,
        "int" | "int32" => ScalarType::I32,
        "uint" | "uint32" => ScalarType::U32,
        "float" | "float32" => ScalarType::F32,
        "double" | "float64" => ScalarType::F64,
        _ => return None,
    })
}

/// Text form of a value stored as `t`; round-trips exactly.
pub(crate) fn format_value(t: ScalarType, v: f64) -> String {
    match t {
        ScalarType::F32 => format!("{}", v as f32),
        ScalarType::F64 => format!("{v}"),
        _ => format!("{}", v as i64),
    }
}

pub(crate) fn parse_value(t: ScalarType, s: &str) -> Option<f64> {
    match t {
        ScalarType::F32 => s.parse::<f32>().ok().map(f64::from),
        ScalarType::F64 => s.parse::<f64>().ok(),
        _ => {
            let v = s.parse::<i64>().ok()?;
            let (lo, hi) = match t {
                ScalarType::I8 => (i8::MIN as i64, i8::MAX as i64),
                ScalarType::U8 => (0, u8::MAX as i64),
                ScalarType::I16 => (i16::MIN as i64, i16::MAX as i64),
                ScalarType::U16 => (0, u16::MAX as i64),
                ScalarType::I32 => (i32::MIN as i64, i32::MAX as i64),
                _ => (0, u32::MAX as i64),
            };
            (lo..=hi).contains(&v).then_some(v as f64)
        }
    }
}

/// Little-endian encoding of a value stored as `t`.
pub(crate) fn put_value(out: &mut Vec<u8>, t: ScalarType, v: f64) {
    match t {
        ScalarType::I8 => out.extend((v as i8).to_le_bytes()),
        ScalarType::U8 => out.extend((v as u8).to_le_bytes()),
        ScalarType::I16 => out.extend((v as i16).to_le_bytes()),
        ScalarType::U16 => out.extend((v as u16).to_le_bytes()),
        ScalarType::I32 => out.extend((v as i32).to_le_bytes()),
        ScalarType::U32 => out.extend((v as u32).to_le_bytes()),
        ScalarType::F32 => out.extend((v as f32).to_le_bytes()),
        ScalarType::F64 => out.extend(v.to_le_bytes()),
    }
}

/// Cursor over a byte slice.
pub(crate) struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(data: &'a [u8]) -> Reader<'a> {
        Reader { data, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(IoError::Truncated)?;
        let s = self.data.get(self.pos..end).ok_or(IoError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    pub(crate) fn value(&mut self, t: ScalarType) -> Result<f64> {
        let b = self.take(t.size())?;
        Ok(match t {
            ScalarType::I8 => b[0] as i8 as f64,
            ScalarType::U8 => b[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes(b.try_into().expect("4 bytes")) as f64,
            ScalarType::U32 => u32::from_le_bytes(b.try_into().expect("4 bytes")) as f64,
            ScalarType::F32 => f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64,
            ScalarType::F64 => f64::from_le_bytes(b.try_into().expect("8 bytes")),
        })
    }

    pub(crate) fn is_done(&self) -> bool {
        self.pos == self.data.len()
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }
}
