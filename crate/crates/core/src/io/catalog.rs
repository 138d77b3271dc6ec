use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{open, IoError};
use crate::measures::{AtomicMeasure, PointSet};
use crate::scalar::Scalar;

/// A CSV column, by header name or zero-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Column {
    Index(usize),
    Name(String),
}

/// Which columns hold the coordinates and the optional mass.
///
/// The first record is a header when any of its fields fails to parse as a
/// number. Named columns require a header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub coords: Vec<Column>,
    #[serde(default)]
    pub mass: Option<Column>,
}

impl ColumnSpec {
    /// `x,y` in the first two columns.
    pub fn xy() -> Self {
        Self { coords: vec![Column::Index(0), Column::Index(1)], mass: None }
    }

    /// `x,y,z` in the first three columns.
    pub fn xyz() -> Self {
        Self { coords: vec![Column::Index(0), Column::Index(1), Column::Index(2)], mass: None }
    }

    pub fn with_mass(mut self, column: Column) -> Self {
        self.mass = Some(column);
        self
    }
}

impl Default for ColumnSpec {
    fn default() -> Self {
        Self::xy()
    }
}

fn resolve(column: &Column, header: Option<&csv::StringRecord>) -> Result<usize, IoError> {
    match column {
        Column::Index(k) => Ok(*k),
        Column::Name(name) => {
            let header = header.ok_or_else(|| IoError::Parse {
                line: 1,
                message: format!("column '{name}' requested but the file has no header"),
            })?;
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| IoError::Parse { line: 1, message: format!("no column named '{name}'") })
        }
    }
}

/// Reads a point cloud; masses default to `1/n` and are normalized otherwise.
pub fn read_catalog<T: Scalar, R: Read>(input: R, spec: &ColumnSpec) -> Result<AtomicMeasure<T>, IoError> {
    let dim = spec.coords.len();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let records = reader.records();
    let mut coords = Vec::new();
    let mut masses = Vec::new();
    let mut header = None;
    let mut columns: Option<(Vec<usize>, Option<usize>)> = None;
    let line_of = |r: &csv::StringRecord| r.position().map_or(0, |p| p.line());

    for record in records {
        let record = record
            .map_err(|e| IoError::Parse { line: e.position().map_or(0, |p| p.line()), message: e.to_string() })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if columns.is_none() {
            let is_header = record.iter().any(|f| f.parse::<f64>().is_err());
            if is_header {
                header = Some(record.clone());
            }
            let idx = spec.coords.iter().map(|c| resolve(c, header.as_ref())).collect::<Result<Vec<_>, _>>()?;
            let mass = spec.mass.as_ref().map(|c| resolve(c, header.as_ref())).transpose()?;
            columns = Some((idx, mass));
            if is_header {
                continue;
            }
        }
        let (idx, mass) = columns.as_ref().expect("columns resolved above");
        let line = line_of(&record);
        let field = |k: usize| -> Result<f64, IoError> {
            let raw =
                record.get(k).ok_or_else(|| IoError::Parse { line, message: format!("missing column {}", k + 1) })?;
            let v: f64 =
                raw.parse().map_err(|_| IoError::Parse { line, message: format!("'{raw}' is not a number") })?;
            if !v.is_finite() {
                return Err(IoError::Parse { line, message: format!("non-finite value '{raw}'") });
            }
            Ok(v)
        };
        for &k in idx {
            coords.push(T::lit(field(k)?));
        }
        if let Some(k) = mass {
            let m = field(*k)?;
            if m < 0.0 {
                return Err(IoError::Parse { line, message: format!("negative mass {m}") });
            }
            masses.push(T::lit(m));
        }
    }
    let points = PointSet::new(dim, coords)?;
    let atoms = if spec.mass.is_some() { AtomicMeasure::new(points, masses)? } else { AtomicMeasure::uniform(points)? };
    Ok(atoms)
}

pub fn load_catalog<T: Scalar>(path: &Path, spec: &ColumnSpec) -> Result<AtomicMeasure<T>, IoError> {
    read_catalog(std::io::BufReader::new(open(path)?), spec)
}
