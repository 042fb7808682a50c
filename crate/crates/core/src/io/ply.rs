//! PLY point clouds, ASCII and binary little-endian.
//!
//! Coordinates are written as `double x y z`; attribute columns keep their
//! scalar type; the face association is stored as `int assoc_tile` and
//! `int assoc_face` with −1 for unassociated points. Elements other than
//! `vertex` are skipped on read.

use std::io::Write;
use std::path::Path;

use super::{
    format_value, io_err, parse_type, parse_value, put_value, type_name, write_atomic, IoError,
    Reader, Result,
};
use crate::geom::Vec3;
use crate::scene::{Column, Columns, FaceRef, PointCloud, ScalarType};

const RESERVED: [&str; 5] = ["x", "y", "z", "assoc_tile", "assoc_face"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone)]
enum Prop {
    Scalar(ScalarType, String),
    List(ScalarType, ScalarType),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Prop>,
}

struct Header {
    encoding: PlyEncoding,
    elements: Vec<Element>,
    body_offset: usize,
}

fn malformed(msg: impl Into<String>) -> IoError {
    IoError::MalformedHeader(msg.into())
}

fn parse_header(data: &[u8]) -> Result<Header> {
    let mut pos = 0;
    let mut next_line = || -> Result<String> {
        let rest = data.get(pos..).unwrap_or_default();
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| malformed("missing end_header"))?;
        let line = String::from_utf8_lossy(&rest[..end])
            .trim_end_matches('\r')
            .to_string();
        pos += end + 1;
        Ok(line)
    };
    if next_line()?.trim() != "ply" {
        return Err(malformed("missing 'ply' signature"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = next_line()?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            [] => {}
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", f, "1.0"] => {
                encoding = Some(match *f {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    other => return Err(malformed(format!("unsupported format '{other}'"))),
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| malformed(format!("bad element count '{count}'")))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, _name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| malformed("property before element"))?;
                let ct = parse_type(ct).ok_or_else(|| malformed(format!("unknown type '{ct}'")))?;
                let it = parse_type(it).ok_or_else(|| malformed(format!("unknown type '{it}'")))?;
                if !ct.is_integer() {
                    return Err(malformed("list count type must be an integer"));
                }
                el.props.push(Prop::List(ct, it));
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| malformed("property before element"))?;
                let t = parse_type(ty).ok_or_else(|| malformed(format!("unknown type '{ty}'")))?;
                el.props.push(Prop::Scalar(t, name.to_string()));
            }
            _ => return Err(malformed(format!("unrecognized header line '{line}'"))),
        }
    }
    let encoding = encoding.ok_or_else(|| malformed("missing format line"))?;
    Ok(Header {
        encoding,
        elements,
        body_offset: pos,
    })
}

/// Layout of the vertex element: indices of x, y, z, the association pair
/// and the attribute columns within its scalar properties.
struct VertexLayout {
    xyz: [usize; 3],
    assoc: Option<(usize, usize)>,
    columns: Vec<(usize, ScalarType, String)>,
}

fn vertex_layout(el: &Element) -> Result<VertexLayout> {
    let find = |name: &str| {
        el.props
            .iter()
            .position(|p| matches!(p, Prop::Scalar(_, n) if n == name))
    };
    let xyz = [find("x"), find("y"), find("z")];
    let [Some(x), Some(y), Some(z)] = xyz else {
        return Err(malformed("vertex element needs x, y and z"));
    };
    let assoc = match (find("assoc_tile"), find("assoc_face")) {
        (Some(t), Some(f)) => Some((t, f)),
        (None, None) => None,
        _ => return Err(malformed("assoc_tile and assoc_face must appear together")),
    };
    let mut columns = Vec::new();
    for (i, p) in el.props.iter().enumerate() {
        match p {
            Prop::List(..) => {
                return Err(malformed("list properties on vertices are not supported"))
            }
            Prop::Scalar(t, n) if !RESERVED.contains(&n.as_str()) => {
                columns.push((i, *t, n.clone()))
            }
            Prop::Scalar(..) => {}
        }
    }
    if let Some((t, f)) = assoc {
        for i in [t, f] {
            if let Prop::Scalar(ty, _) = &el.props[i] {
                if !ty.is_integer() {
                    return Err(malformed("association columns must be integers"));
                }
            }
        }
    }
    Ok(VertexLayout {
        xyz: [x, y, z],
        assoc,
        columns,
    })
}

fn assemble(layout: &VertexLayout, rows: Vec<Vec<f64>>) -> PointCloud {
    let positions = rows
        .iter()
        .map(|r| Vec3::new(r[layout.xyz[0]], r[layout.xyz[1]], r[layout.xyz[2]]))
        .collect();
    let columns = Columns(
        layout
            .columns
            .iter()
            .map(|(i, t, n)| Column {
                name: n.clone(),
                ty: *t,
                values: rows.iter().map(|r| r[*i]).collect(),
            })
            .collect(),
    );
    let assoc = layout.assoc.map(|(t, f)| {
        rows.iter()
            .map(|r| (r[t] >= 0.0 && r[f] >= 0.0).then(|| FaceRef::new(r[t] as u32, r[f] as u32)))
            .collect()
    });
    PointCloud {
        positions,
        columns,
        assoc,
    }
}

fn read_ascii(header: &Header, body: &[u8]) -> Result<Vec<Vec<f64>>> {
    let text = std::str::from_utf8(body).map_err(|_| IoError::Parse {
        line: 0,
        msg: "body is not valid text".into(),
    })?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let mut vertex_rows = Vec::new();
    for el in &header.elements {
        let is_vertex = el.name == "vertex";
        for got in 0..el.count {
            let (ln, line) = lines.next().ok_or(IoError::CountMismatch {
                expected: el.count,
                got,
            })?;
            let mut tok = line.split_whitespace();
            let mut row = Vec::with_capacity(el.props.len());
            let bad = |msg: &str| IoError::Parse {
                line: ln + 1,
                msg: msg.to_string(),
            };
            for p in &el.props {
                match p {
                    Prop::Scalar(t, _) => {
                        let s = tok.next().ok_or_else(|| bad("too few values"))?;
                        row.push(
                            parse_value(*t, s)
                                .ok_or_else(|| bad(&format!("cannot parse '{s}'")))?,
                        );
                    }
                    Prop::List(ct, it) => {
                        let s = tok.next().ok_or_else(|| bad("too few values"))?;
                        let n = parse_value(*ct, s).ok_or_else(|| bad("bad list count"))? as usize;
                        for _ in 0..n {
                            let s = tok.next().ok_or_else(|| bad("too few list values"))?;
                            parse_value(*it, s)
                                .ok_or_else(|| bad(&format!("cannot parse '{s}'")))?;
                        }
                    }
                }
            }
            if tok.next().is_some() {
                return Err(bad("too many values"));
            }
            if is_vertex {
                vertex_rows.push(row);
            }
        }
    }
    if let Some((ln, _)) = lines.next() {
        return Err(IoError::Parse {
            line: ln + 1,
            msg: "data after the last element".into(),
        });
    }
    Ok(vertex_rows)
}

fn read_binary(header: &Header, body: &[u8]) -> Result<Vec<Vec<f64>>> {
    let mut r = Reader::new(body);
    let mut vertex_rows = Vec::new();
    for el in &header.elements {
        let is_vertex = el.name == "vertex";
        for _ in 0..el.count {
            let mut row = Vec::with_capacity(el.props.len());
            for p in &el.props {
                match p {
                    Prop::Scalar(t, _) => row.push(r.value(*t)?),
                    Prop::List(ct, it) => {
                        let n = r.value(*ct)? as usize;
                        r.take(n * it.size())?;
                    }
                }
            }
            if is_vertex {
                vertex_rows.push(row);
            }
        }
    }
    if !r.is_done() {
        return Err(IoError::Parse {
            line: 0,
            msg: format!("{} trailing bytes", body.len() - r.position()),
        });
    }
    Ok(vertex_rows)
}

/// Parses a PLY point cloud from bytes.
pub fn parse_point_cloud(data: &[u8]) -> Result<PointCloud> {
    let header = parse_header(data)?;
    let el = header
        .elements
        .iter()
        .find(|e| e.name == "vertex")
        .ok_or_else(|| malformed("no vertex element"))?;
    let layout = vertex_layout(el)?;
    let body = &data[header.body_offset..];
    let rows = match header.encoding {
        PlyEncoding::Ascii => read_ascii(&header, body)?,
        PlyEncoding::BinaryLittleEndian => read_binary(&header, body)?,
    };
    Ok(assemble(&layout, rows))
}

pub fn read_point_cloud(path: &Path) -> Result<PointCloud> {
    let data = std::fs::read(path).map_err(io_err(path))?;
    parse_point_cloud(&data)
}

/// Serialized PLY bytes.
pub fn point_cloud_bytes(cloud: &PointCloud, encoding: PlyEncoding) -> Result<Vec<u8>> {
    cloud.validate()?;
    if let Some(c) = cloud
        .columns
        .0
        .iter()
        .find(|c| RESERVED.contains(&c.name.as_str()))
    {
        return Err(malformed(format!("column name '{}' is reserved", c.name)));
    }
    if let Some(c) = cloud
        .columns
        .0
        .iter()
        .find(|c| c.name.is_empty() || c.name.contains(char::is_whitespace))
    {
        return Err(malformed(format!(
            "column name '{}' is not a PLY identifier",
            c.name
        )));
    }
    let mut out = Vec::new();
    let fmt = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    let mut header = format!("ply\nformat {fmt} 1.0\nelement vertex {}\n", cloud.len());
    for axis in ["x", "y", "z"] {
        header.push_str(&format!("property double {axis}\n"));
    }
    for c in &cloud.columns.0 {
        header.push_str(&format!("property {} {}\n", type_name(c.ty), c.name));
    }
    if cloud.assoc.is_some() {
        header.push_str("property int assoc_tile\nproperty int assoc_face\n");
    }
    header.push_str("end_header\n");
    out.extend(header.as_bytes());

    let assoc_of = |i: usize| -> (f64, f64) {
        match cloud.assoc.as_ref().and_then(|a| a[i]) {
            Some(f) => (f.tile as f64, f.face as f64),
            None => (-1.0, -1.0),
        }
    };
    for (i, p) in cloud.positions.iter().enumerate() {
        match encoding {
            PlyEncoding::Ascii => {
                let mut fields: Vec<String> =
                    vec![format!("{}", p.x), format!("{}", p.y), format!("{}", p.z)];
                fields.extend(
                    cloud
                        .columns
                        .0
                        .iter()
                        .map(|c| format_value(c.ty, c.values[i])),
                );
                if cloud.assoc.is_some() {
                    let (t, f) = assoc_of(i);
                    fields.push(format!("{t}"));
                    fields.push(format!("{f}"));
                }
                writeln!(out, "{}", fields.join(" ")).expect("write to memory");
            }
            PlyEncoding::BinaryLittleEndian => {
                for v in [p.x, p.y, p.z] {
                    out.extend(v.to_le_bytes());
                }
                for c in &cloud.columns.0 {
                    put_value(&mut out, c.ty, c.values[i]);
                }
                if cloud.assoc.is_some() {
                    let (t, f) = assoc_of(i);
                    put_value(&mut out, ScalarType::I32, t);
                    put_value(&mut out, ScalarType::I32, f);
                }
            }
        }
    }
    Ok(out)
}

pub fn write_point_cloud(path: &Path, cloud: &PointCloud, encoding: PlyEncoding) -> Result<()> {
    let bytes = point_cloud_bytes(cloud, encoding)?;
    write_atomic(path, |w| w.write_all(&bytes).map_err(io_err(path)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = PointCloud::new(
            (0..n)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-1e3..1e3),
                        rng.random(),
                        rng.random_range(-5.0..5.0),
                    )
                })
                .collect(),
        );
        c.columns.set(Column::labels(
            "label",
            &(0..n).map(|_| rng.random_range(-1..6)).collect::<Vec<_>>(),
        ));
        c.columns.set(Column::floats(
            "intensity",
            (0..n).map(|_| rng.random()).collect(),
        ));
        c.columns.set(Column {
            name: "gray".into(),
            ty: ScalarType::U8,
            values: (0..n).map(|_| rng.random_range(0..=255) as f64).collect(),
        });
        c.columns.set(Column {
            name: "reflectance".into(),
            ty: ScalarType::F32,
            values: (0..n).map(|_| rng.random::<f32>() as f64).collect(),
        });
        c.assoc = Some(
            (0..n)
                .map(|_| {
                    rng.random_bool(0.7)
                        .then(|| FaceRef::new(rng.random_range(0..4), rng.random_range(0..900)))
                })
                .collect(),
        );
        c
    }

    #[test]
    fn binary_round_trip_is_byte_identical() {
        let c = random_cloud(1000, 1);
        let bytes = point_cloud_bytes(&c, PlyEncoding::BinaryLittleEndian).unwrap();
        let back = parse_point_cloud(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(
            point_cloud_bytes(&back, PlyEncoding::BinaryLittleEndian).unwrap(),
            bytes
        );
    }

    #[test]
    fn ascii_and_binary_agree() {
        let c = random_cloud(300, 2);
        let a = parse_point_cloud(&point_cloud_bytes(&c, PlyEncoding::Ascii).unwrap()).unwrap();
        let b = parse_point_cloud(&point_cloud_bytes(&c, PlyEncoding::BinaryLittleEndian).unwrap())
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn all_unassociated_loads_empty() {
        let mut c = PointCloud::new(vec![Vec3::X, Vec3::Y]);
        c.assoc = Some(vec![None, None]);
        let back = parse_point_cloud(&point_cloud_bytes(&c, PlyEncoding::Ascii).unwrap()).unwrap();
        assert!(back.assoc.unwrap().iter().all(Option::is_none));
    }

    #[test]
    fn foreign_file_with_faces_and_floats() {
        let text = "ply\nformat ascii 1.0\ncomment made elsewhere\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0 255\n1 0.5 2 7\n3 0 1 1\n";
        let c = parse_point_cloud(text.as_bytes()).unwrap();
        assert_eq!(c.positions[1], Vec3::new(1.0, 0.5, 2.0));
        assert_eq!(c.columns.get("red").unwrap().ty, ScalarType::U8);
        assert!(c.assoc.is_none());
    }

    #[test]
    fn malformed_inputs() {
        let cases: [&[u8]; 6] = [
            b"plx\n",
            b"ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nend_header\n1\n",
            b"ply\nformat binary_big_endian 1.0\nend_header\n",
            b"ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\nend_header\n1 2 3\n",
            b"ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty double y\nproperty double z\nend_header\n1 2 abc\n",
            b"ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty double x\nproperty double y\nproperty double z\nend_header\n\x00\x00",
        ];
        for c in cases {
            assert!(
                parse_point_cloud(c).is_err(),
                "{}",
                String::from_utf8_lossy(c)
            );
        }
        assert!(matches!(
            parse_point_cloud(cases[3]),
            Err(IoError::CountMismatch {
                expected: 2,
                got: 1
            })
        ));
    }
}
