//! Reading and writing measures: PGM images, CSV point clouds, polyline
//! JSON documents, SVG renderings and seeded polyline initializers.

mod catalog;
mod init;
mod pgm;
mod polyline;
mod svg;

use std::path::PathBuf;

use thiserror::Error;

use crate::measures::MeasureError;

pub use catalog::{load_catalog, read_catalog, Column, ColumnSpec};
pub use init::{grid_serpentine, random_walk, uniform_vertices, InitKind};
pub use pgm::{image_to_diracs, parse_pgm, read_pgm, write_pgm, GrayImage, Polarity};
pub use polyline::{read_polyline, write_polyline, PolylineDocument};
pub use svg::{render_svg, write_svg, SvgStyle};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("invalid PGM image: {0}")]
    Pgm(String),
    #[error("invalid polyline document: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

pub(crate) fn open(path: &std::path::Path) -> Result<std::fs::File, IoError> {
    std::fs::File::open(path).map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

pub(crate) fn create(path: &std::path::Path) -> Result<std::fs::File, IoError> {
    std::fs::File::create(path).map_err(|source| IoError::File { path: path.to_path_buf(), source })
}
