use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{create, open, IoError};
use crate::measures::{MeasureError, PointSet, PolylineMeasure};
use crate::scalar::Scalar;

/// On-disk polyline. Missing `densities` means proportional to length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolylineDocument {
    pub vertices: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub densities: Option<Vec<f64>>,
    #[serde(default)]
    pub disjoint_mode: bool,
    /// Seed of the run that produced the polyline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Outer iteration at which the polyline was written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<usize>,
}

impl PolylineDocument {
    pub fn from_measure<T: Scalar>(curve: &PolylineMeasure<T>) -> Self {
        Self {
            vertices: curve.vertices().iter().map(|v| v.iter().map(|x| x.as_f64()).collect()).collect(),
            densities: Some(curve.densities().iter().map(|x| x.as_f64()).collect()),
            disjoint_mode: curve.disjoint_mode(),
            seed: None,
            iteration: None,
        }
    }

    pub fn to_measure<T: Scalar>(&self) -> Result<PolylineMeasure<T>, MeasureError> {
        let rows: Vec<Vec<T>> = self.vertices.iter().map(|v| v.iter().map(|&x| T::lit(x)).collect()).collect();
        let vertices = PointSet::from_rows(&rows)?;
        match &self.densities {
            Some(d) => PolylineMeasure::new(vertices, d.iter().map(|&x| T::lit(x)).collect(), self.disjoint_mode),
            None => PolylineMeasure::from_vertices(vertices, self.disjoint_mode),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("polyline document serializes")
    }
}

pub fn read_polyline<T: Scalar>(path: &Path) -> Result<PolylineMeasure<T>, IoError> {
    let doc: PolylineDocument = serde_json::from_reader(std::io::BufReader::new(open(path)?))?;
    Ok(doc.to_measure()?)
}

pub fn write_polyline(doc: &PolylineDocument, path: &Path) -> Result<(), IoError> {
    let mut f = std::io::BufWriter::new(create(path)?);
    f.write_all(doc.to_json().as_bytes())?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}
