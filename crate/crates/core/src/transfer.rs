//! Label and feature transfer along the established links, in all six
//! directions between point cloud, mesh and images.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::imgma::SparsePixelCloud;
use crate::pcimga::PointPixelLinks;
use crate::pcma::FaceAssociation;
use crate::scene::{Column, Columns, FaceRef, PointCloud, TiledMesh, LINKED_UNLABELED, UNLABELED};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransferError {
    #[error("missing association: {0}")]
    MissingAssociation(&'static str),
    #[error("unknown attribute '{0}'")]
    UnknownAttribute(String),
    #[error("invalid transfer: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    MeshToPc,
    PcToMesh,
    MeshToImg,
    ImgToMesh,
    PcToImg,
    ImgToPc,
}

impl Direction {
    pub fn involves_pc_and_img(self) -> bool {
        matches!(self, Direction::PcToImg | Direction::ImgToPc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Kind {
    Label,
    Feature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    /// Through the shared face.
    Implicit,
    /// Through the collinearity links.
    Explicit,
}

/// How an explicit pixel combines the points that project into it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum PixelReduction {
    #[default]
    MinDepth,
    Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferSpec {
    pub direction: Direction,
    pub kind: Kind,
    /// Present iff the direction is between point cloud and images.
    pub mode: Option<Mode>,
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub reduction: PixelReduction,
}

impl TransferSpec {
    pub fn label(direction: Direction, source: &str, target: &str) -> TransferSpec {
        TransferSpec {
            direction,
            kind: Kind::Label,
            mode: direction.involves_pc_and_img().then_some(Mode::Implicit),
            source: vec![source.to_string()],
            target: vec![target.to_string()],
            reduction: PixelReduction::MinDepth,
        }
    }

    pub fn feature(direction: Direction, source: &[&str], target: &[&str]) -> TransferSpec {
        TransferSpec {
            direction,
            kind: Kind::Feature,
            mode: direction.involves_pc_and_img().then_some(Mode::Implicit),
            source: source.iter().map(|s| s.to_string()).collect(),
            target: target.iter().map(|s| s.to_string()).collect(),
            reduction: PixelReduction::MinDepth,
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> TransferSpec {
        self.mode = Some(mode);
        self
    }

    fn validate(&self) -> Result<(), TransferError> {
        if self.mode.is_some() != self.direction.involves_pc_and_img() {
            return Err(TransferError::InvalidSpec(
                "mode is required exactly for point cloud ↔ image directions".into(),
            ));
        }
        if self.source.is_empty() || self.source.len() != self.target.len() {
            return Err(TransferError::InvalidSpec(
                "source and target column counts differ".into(),
            ));
        }
        if self.kind == Kind::Label && self.source.len() != 1 {
            return Err(TransferError::InvalidSpec(
                "labels use exactly one column".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationResult<T> {
    pub value: T,
    /// Number of inputs that contributed.
    pub support: usize,
    /// All contributing inputs were equal.
    pub unanimous: bool,
}

/// Most frequent label; ties go to the lowest id. Negative labels are
/// ignored. `None` if nothing remains.
pub fn majority_vote(labels: &[i32]) -> Option<AggregationResult<i32>> {
    let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
    for &l in labels.iter().filter(|&&l| l >= 0) {
        *counts.entry(l).or_default() += 1;
    }
    let support: usize = counts.values().sum();
    let (&value, _) = counts
        .iter()
        .fold(None::<(&i32, &usize)>, |best, e| match best {
            Some(b) if b.1 >= e.1 => Some(b),
            _ => Some(e),
        })?;
    Some(AggregationResult {
        value,
        support,
        unanimous: counts.len() == 1,
    })
}

/// Component-wise median; an even count averages the middle pair. `None`
/// for empty input.
pub fn median_aggregate(vectors: &[Vec<f64>]) -> Option<AggregationResult<Vec<f64>>> {
    let first = vectors.first()?;
    let d = first.len();
    let mut value = Vec::with_capacity(d);
    let mut column = Vec::with_capacity(vectors.len());
    for k in 0..d {
        column.clear();
        column.extend(vectors.iter().map(|v| v[k]));
        column.sort_by(f64::total_cmp);
        let n = column.len();
        value.push(if n % 2 == 1 {
            column[n / 2]
        } else {
            0.5 * (column[n / 2 - 1] + column[n / 2])
        });
    }
    Some(AggregationResult {
        value,
        support: vectors.len(),
        unanimous: vectors.iter().all(|v| v == first),
    })
}

/// One value per entity: a label or a feature vector.
#[derive(Debug, Clone, PartialEq)]
enum Values {
    Labels(Vec<i32>),
    Features(Vec<Vec<f64>>),
}

fn read_columns(
    cols: &Columns,
    names: &[String],
    kind: Kind,
    n: usize,
) -> Result<Values, TransferError> {
    let found: Vec<&Column> = names
        .iter()
        .map(|name| {
            cols.get(name)
                .ok_or_else(|| TransferError::UnknownAttribute(name.clone()))
        })
        .collect::<Result<_, _>>()?;
    if let Some(c) = found.iter().find(|c| c.values.len() != n) {
        return Err(TransferError::InvalidSpec(format!(
            "column '{}' has {} values, expected {n}",
            c.name,
            c.values.len()
        )));
    }
    Ok(match kind {
        Kind::Label => Values::Labels(found[0].as_labels()),
        Kind::Feature => Values::Features(
            (0..n)
                .map(|i| found.iter().map(|c| c.values[i]).collect())
                .collect(),
        ),
    })
}

fn write_columns(cols: &mut Columns, names: &[String], values: &Values) {
    match values {
        Values::Labels(l) => cols.set(Column::labels(&names[0], l)),
        Values::Features(f) => {
            for (k, name) in names.iter().enumerate() {
                cols.set(Column::floats(name, f.iter().map(|v| v[k]).collect()));
            }
        }
    }
}

/// Accumulated statistics of one transfer.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TransferReport {
    pub direction: Option<Direction>,
    pub kind: Option<Kind>,
    pub targets: usize,
    /// Targets that received a defined value.
    pub transferred: usize,
    /// Targets left at the unlabeled sentinel or zero vector.
    pub unlabeled: usize,
    /// Linked targets whose source had no label.
    pub linked_unlabeled: usize,
    /// Fraction of aggregated targets whose inputs were unanimous.
    pub unanimity_rate: f64,
}

/// Value kind specific operations over a list of entity values.
struct Ops {
    kind: Kind,
    dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Cell {
    Label(i32),
    Feature(Vec<f64>),
}

impl Ops {
    fn empty(&self) -> Cell {
        match self.kind {
            Kind::Label => Cell::Label(UNLABELED),
            Kind::Feature => Cell::Feature(vec![0.0; self.dim]),
        }
    }

    fn get(&self, v: &Values, i: usize) -> Cell {
        match v {
            Values::Labels(l) => Cell::Label(l[i]),
            Values::Features(f) => Cell::Feature(f[i].clone()),
        }
    }

    /// Copy to a linked target; missing labels become "linked but unlabeled".
    fn copy(&self, c: Cell) -> Cell {
        match c {
            Cell::Label(l) if l < 0 => Cell::Label(LINKED_UNLABELED),
            other => other,
        }
    }

    /// Aggregate a group of source values. Returns the cell and, when
    /// defined, whether the inputs were unanimous.
    fn aggregate(&self, cells: Vec<Cell>) -> (Cell, Option<bool>) {
        match self.kind {
            Kind::Label => {
                let l: Vec<i32> = cells
                    .into_iter()
                    .filter_map(|c| {
                        if let Cell::Label(l) = c {
                            Some(l)
                        } else {
                            None
                        }
                    })
                    .collect();
                match majority_vote(&l) {
                    Some(r) => (Cell::Label(r.value), Some(r.unanimous)),
                    None => (self.empty(), None),
                }
            }
            Kind::Feature => {
                let f: Vec<Vec<f64>> = cells
                    .into_iter()
                    .filter_map(|c| {
                        if let Cell::Feature(f) = c {
                            Some(f)
                        } else {
                            None
                        }
                    })
                    .collect();
                match median_aggregate(&f) {
                    Some(r) => (Cell::Feature(r.value), Some(r.unanimous)),
                    None => (self.empty(), None),
                }
            }
        }
    }

    fn collect(&self, cells: Vec<Cell>) -> Values {
        match self.kind {
            Kind::Label => Values::Labels(
                cells
                    .into_iter()
                    .map(|c| if let Cell::Label(l) = c { l } else { UNLABELED })
                    .collect(),
            ),
            Kind::Feature => Values::Features(
                cells
                    .into_iter()
                    .map(|c| {
                        if let Cell::Feature(f) = c {
                            f
                        } else {
                            vec![0.0; self.dim]
                        }
                    })
                    .collect(),
            ),
        }
    }

    fn tally(&self, report: &mut TransferReport, cells: &[Cell]) {
        report.targets += cells.len();
        for c in cells {
            match c {
                Cell::Label(UNLABELED) => report.unlabeled += 1,
                Cell::Label(LINKED_UNLABELED) => report.linked_unlabeled += 1,
                Cell::Feature(f) if f.iter().all(|&x| x == 0.0) => report.unlabeled += 1,
                _ => report.transferred += 1,
            }
        }
    }
}

/// Everything a transfer may read or write.
pub struct TransferScene<'a> {
    pub cloud: &'a mut PointCloud,
    pub mesh: &'a mut TiledMesh,
    /// Sparse pixel clouds, one per image.
    pub pixels: &'a mut [SparsePixelCloud],
}

/// Links a transfer may use.
#[derive(Clone, Copy, Default)]
pub struct Links<'a> {
    pub faces: Option<&'a FaceAssociation>,
    pub pixels: Option<&'a PointPixelLinks>,
}

impl<'a> Links<'a> {
    fn faces(&self) -> Result<&'a FaceAssociation, TransferError> {
        self.faces
            .ok_or(TransferError::MissingAssociation("point cloud ↔ mesh"))
    }

    fn pixels(&self) -> Result<&'a PointPixelLinks, TransferError> {
        self.pixels
            .ok_or(TransferError::MissingAssociation("point cloud ↔ image"))
    }
}

/// Face values as `(tile index, face) → value`, in mesh order.
struct FaceTable {
    offsets: Vec<usize>,
    tile_index: BTreeMap<u32, usize>,
}

impl FaceTable {
    fn of(mesh: &TiledMesh) -> FaceTable {
        let mut offsets = Vec::with_capacity(mesh.tiles.len() + 1);
        let mut acc = 0;
        for t in &mesh.tiles {
            offsets.push(acc);
            acc += t.faces.len();
        }
        offsets.push(acc);
        FaceTable {
            offsets,
            tile_index: mesh
                .tiles
                .iter()
                .enumerate()
                .map(|(i, t)| (t.tile_id, i))
                .collect(),
        }
    }

    fn len(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    fn slot(&self, f: FaceRef) -> Option<usize> {
        let ti = *self.tile_index.get(&f.tile)?;
        let i = self.offsets[ti] + f.face as usize;
        (i < self.offsets[ti + 1]).then_some(i)
    }
}

fn read_faces(
    mesh: &TiledMesh,
    spec: &TransferSpec,
    ops: &Ops,
) -> Result<Vec<Cell>, TransferError> {
    let mut out = Vec::with_capacity(mesh.face_count());
    for t in &mesh.tiles {
        let v = read_columns(&t.face_attrs, &spec.source, spec.kind, t.faces.len())?;
        out.extend((0..t.faces.len()).map(|i| ops.get(&v, i)));
    }
    Ok(out)
}

fn write_faces(mesh: &mut TiledMesh, names: &[String], ops: &Ops, cells: Vec<Cell>) {
    let mut it = cells.into_iter();
    for t in &mut mesh.tiles {
        let chunk: Vec<Cell> = it.by_ref().take(t.faces.len()).collect();
        write_columns(&mut t.face_attrs, names, &ops.collect(chunk));
    }
}

fn read_pixels(
    pixels: &[SparsePixelCloud],
    spec: &TransferSpec,
    ops: &Ops,
) -> Result<Vec<Vec<Cell>>, TransferError> {
    pixels
        .iter()
        .map(|p| {
            let v = read_columns(&p.attributes, &spec.source, spec.kind, p.records.len())?;
            Ok((0..p.records.len()).map(|i| ops.get(&v, i)).collect())
        })
        .collect()
}

fn write_pixels(
    pixels: &mut [SparsePixelCloud],
    names: &[String],
    ops: &Ops,
    cells: Vec<Vec<Cell>>,
) {
    for (p, c) in pixels.iter_mut().zip(cells) {
        write_columns(&mut p.attributes, names, &ops.collect(c));
    }
}

/// Aggregates grouped source cells; also returns the unanimity counts.
fn aggregate_groups(ops: &Ops, groups: Vec<Vec<Cell>>) -> (Vec<Cell>, usize, usize) {
    let results: Vec<(Cell, Option<bool>)> =
        groups.into_par_iter().map(|g| ops.aggregate(g)).collect();
    let defined = results.iter().filter(|r| r.1.is_some()).count();
    let unanimous = results.iter().filter(|r| r.1 == Some(true)).count();
    (
        results.into_iter().map(|r| r.0).collect(),
        defined,
        unanimous,
    )
}

/// Face values aggregated from the associated points.
fn faces_from_points(
    table: &FaceTable,
    assoc: &FaceAssociation,
    point_cells: &[Cell],
    ops: &Ops,
) -> (Vec<Cell>, usize, usize) {
    let mut groups = vec![Vec::new(); table.len()];
    for t in &assoc.tiles {
        for (fi, link) in t.faces.iter().enumerate() {
            if let Some(slot) = table.slot(FaceRef::new(t.tile_id, fi as u32)) {
                groups[slot] = link
                    .points
                    .iter()
                    .map(|&p| point_cells[p as usize].clone())
                    .collect();
            }
        }
    }
    aggregate_groups(ops, groups)
}

/// Face values aggregated from the linked pixels of every image.
fn faces_from_pixels(
    table: &FaceTable,
    pixels: &[SparsePixelCloud],
    pixel_cells: &[Vec<Cell>],
    ops: &Ops,
) -> (Vec<Cell>, usize, usize) {
    let mut groups = vec![Vec::new(); table.len()];
    for (p, cells) in pixels.iter().zip(pixel_cells) {
        for (r, c) in p.records.iter().zip(cells) {
            if let Some(slot) = table.slot(r.face()) {
                groups[slot].push(c.clone());
            }
        }
    }
    aggregate_groups(ops, groups)
}

fn copy_to_points(
    table: &FaceTable,
    assoc: &FaceAssociation,
    face_cells: &[Cell],
    ops: &Ops,
) -> Vec<Cell> {
    assoc
        .point_faces
        .par_iter()
        .map(|f| match f.and_then(|f| table.slot(f)) {
            Some(slot) => ops.copy(face_cells[slot].clone()),
            None => ops.empty(),
        })
        .collect()
}

fn copy_to_pixels(
    table: &FaceTable,
    pixels: &[SparsePixelCloud],
    face_cells: &[Cell],
    ops: &Ops,
) -> Vec<Vec<Cell>> {
    pixels
        .par_iter()
        .map(|p| {
            p.records
                .iter()
                .map(|r| match table.slot(r.face()) {
                    Some(slot) => ops.copy(face_cells[slot].clone()),
                    None => ops.empty(),
                })
                .collect()
        })
        .collect()
}

/// Executes one transfer, writing the target columns in place.
pub fn run_transfer(
    spec: &TransferSpec,
    scene: TransferScene<'_>,
    links: Links<'_>,
) -> Result<TransferReport, TransferError> {
    spec.validate()?;
    let ops = Ops {
        kind: spec.kind,
        dim: spec.source.len(),
    };
    let table = FaceTable::of(scene.mesh);
    let mut report = TransferReport {
        direction: Some(spec.direction),
        kind: Some(spec.kind),
        ..Default::default()
    };
    let mut aggregated = (0usize, 0usize);
    let read_points = |cloud: &PointCloud| -> Result<Vec<Cell>, TransferError> {
        let v = read_columns(&cloud.columns, &spec.source, spec.kind, cloud.len())?;
        Ok((0..cloud.len()).map(|i| ops.get(&v, i)).collect())
    };

    match (spec.direction, spec.mode) {
        (Direction::MeshToPc, _) => {
            let assoc = links.faces()?;
            let faces = read_faces(scene.mesh, spec, &ops)?;
            let out = copy_to_points(&table, assoc, &faces, &ops);
            ops.tally(&mut report, &out);
            write_columns(&mut scene.cloud.columns, &spec.target, &ops.collect(out));
        }
        (Direction::PcToMesh, _) => {
            let assoc = links.faces()?;
            let pts = read_points(scene.cloud)?;
            let (out, d, u) = faces_from_points(&table, assoc, &pts, &ops);
            aggregated = (d, u);
            ops.tally(&mut report, &out);
            write_faces(scene.mesh, &spec.target, &ops, out);
        }
        (Direction::MeshToImg, _) => {
            let faces = read_faces(scene.mesh, spec, &ops)?;
            let out = copy_to_pixels(&table, scene.pixels, &faces, &ops);
            out.iter().for_each(|c| ops.tally(&mut report, c));
            write_pixels(scene.pixels, &spec.target, &ops, out);
        }
        (Direction::ImgToMesh, _) => {
            let cells = read_pixels(scene.pixels, spec, &ops)?;
            let (out, d, u) = faces_from_pixels(&table, scene.pixels, &cells, &ops);
            aggregated = (d, u);
            ops.tally(&mut report, &out);
            write_faces(scene.mesh, &spec.target, &ops, out);
        }
        (Direction::PcToImg, Some(Mode::Implicit)) => {
            let assoc = links.faces()?;
            let pts = read_points(scene.cloud)?;
            let (faces, d, u) = faces_from_points(&table, assoc, &pts, &ops);
            aggregated = (d, u);
            let out = copy_to_pixels(&table, scene.pixels, &faces, &ops);
            out.iter().for_each(|c| ops.tally(&mut report, c));
            write_pixels(scene.pixels, &spec.target, &ops, out);
        }
        (Direction::PcToImg, _) => {
            let pl = links.pixels()?;
            let pts = read_points(scene.cloud)?;
            let out: Vec<Vec<Cell>> = scene
                .pixels
                .par_iter()
                .map(|p| {
                    let il = pl.image(p.image_id);
                    p.records
                        .iter()
                        .map(|r| {
                            let Some(il) = il else { return ops.empty() };
                            match spec.reduction {
                                PixelReduction::MinDepth => match il.retained_at(r.row, r.col) {
                                    Some(l) => ops.copy(pts[l.point as usize].clone()),
                                    None => ops.empty(),
                                },
                                PixelReduction::Aggregate => {
                                    let group: Vec<Cell> = il
                                        .candidates_at(r.row, r.col)
                                        .iter()
                                        .map(|l| pts[l.point as usize].clone())
                                        .collect();
                                    if group.is_empty() {
                                        ops.empty()
                                    } else {
                                        ops.copy(ops.aggregate(group).0)
                                    }
                                }
                            }
                        })
                        .collect()
                })
                .collect();
            out.iter().for_each(|c| ops.tally(&mut report, c));
            write_pixels(scene.pixels, &spec.target, &ops, out);
        }
        (Direction::ImgToPc, Some(Mode::Implicit)) => {
            let assoc = links.faces()?;
            let cells = read_pixels(scene.pixels, spec, &ops)?;
            let (faces, d, u) = faces_from_pixels(&table, scene.pixels, &cells, &ops);
            aggregated = (d, u);
            let out = copy_to_points(&table, assoc, &faces, &ops);
            ops.tally(&mut report, &out);
            write_columns(&mut scene.cloud.columns, &spec.target, &ops.collect(out));
        }
        (Direction::ImgToPc, _) => {
            let pl = links.pixels()?;
            let cells = read_pixels(scene.pixels, spec, &ops)?;
            let mut groups: Vec<Vec<Cell>> = vec![Vec::new(); scene.cloud.len()];
            for (p, pc) in scene.pixels.iter().zip(&cells) {
                let Some(il) = pl.image(p.image_id) else {
                    continue;
                };
                let links = match spec.reduction {
                    PixelReduction::MinDepth => &il.retained,
                    PixelReduction::Aggregate => &il.candidates,
                };
                for l in links {
                    if let (Some(i), Some(g)) =
                        (p.find(l.row, l.col), groups.get_mut(l.point as usize))
                    {
                        g.push(pc[i].clone());
                    }
                }
            }
            let (out, d, u) = aggregate_groups(&ops, groups);
            aggregated = (d, u);
            ops.tally(&mut report, &out);
            write_columns(&mut scene.cloud.columns, &spec.target, &ops.collect(out));
        }
    }
    report.unanimity_rate = if aggregated.0 > 0 {
        aggregated.1 as f64 / aggregated.0 as f64
    } else {
        1.0
    };
    Ok(report)
}
