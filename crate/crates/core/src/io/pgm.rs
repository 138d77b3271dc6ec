use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{create, open, IoError};
use crate::measures::{AtomicMeasure, MeasureError, PointSet};
use crate::scalar::Scalar;

/// Grayscale raster, row-major from the top row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, maxval: u16, pixels: Vec<u16>) -> Result<Self, IoError> {
        if width == 0 || height == 0 {
            return Err(IoError::Pgm(format!("empty image {width}x{height}")));
        }
        if maxval == 0 {
            return Err(IoError::Pgm("maxval must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(IoError::Pgm(format!("expected {} pixels, got {}", width * height, pixels.len())));
        }
        if let Some(v) = pixels.iter().find(|&&v| v > maxval) {
            return Err(IoError::Pgm(format!("pixel value {v} exceeds maxval {maxval}")));
        }
        Ok(Self { width, height, maxval, pixels })
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.pixels[row * self.width + col]
    }
}

/// Which end of the gray scale carries mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Weight is the intensity.
    #[default]
    Bright,
    /// Weight is `maxval - intensity`.
    Dark,
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<&str, IoError> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(IoError::Pgm("unexpected end of data".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| IoError::Pgm("non-ASCII header".into()))
    }

    fn number(&mut self, what: &str) -> Result<usize, IoError> {
        let t = self.token()?;
        t.parse().map_err(|_| IoError::Pgm(format!("bad {what} '{t}'")))
    }
}

/// Parses binary (`P5`) or plain (`P2`) PGM.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage, IoError> {
    let mut h = Header { bytes, pos: 0 };
    let magic = h.token()?.to_string();
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if maxval == 0 || maxval > u16::MAX as usize {
        return Err(IoError::Pgm(format!("maxval {maxval} out of range")));
    }
    let count = width.checked_mul(height).ok_or_else(|| IoError::Pgm("image dimensions overflow".into()))?;
    let pixels = match magic.as_str() {
        "P2" => (0..count)
            .map(|_| {
                let v = h.number("pixel")?;
                u16::try_from(v).map_err(|_| IoError::Pgm(format!("pixel value {v} out of range")))
            })
            .collect::<Result<Vec<_>, _>>()?,
        "P5" => {
            // exactly one whitespace byte separates maxval from the raster
            let start = h.pos + 1;
            let wide = maxval > 255;
            let need = count * if wide { 2 } else { 1 };
            let data = bytes
                .get(start..start + need)
                .ok_or_else(|| IoError::Pgm(format!("raster truncated: need {need} bytes")))?;
            if wide {
                data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
            } else {
                data.iter().map(|&b| b as u16).collect()
            }
        }
        other => return Err(IoError::Pgm(format!("unsupported magic '{other}'"))),
    };
    GrayImage::new(width, height, maxval as u16, pixels)
}

pub fn read_pgm(path: &Path) -> Result<GrayImage, IoError> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes)?;
    parse_pgm(&bytes)
}

/// Writes binary PGM.
pub fn write_pgm(image: &GrayImage, path: &Path) -> Result<(), IoError> {
    let mut f = std::io::BufWriter::new(create(path)?);
    write!(f, "P5\n{} {}\n{}\n", image.width, image.height, image.maxval)?;
    if image.maxval > 255 {
        for &v in &image.pixels {
            f.write_all(&v.to_be_bytes())?;
        }
    } else {
        f.write_all(&image.pixels.iter().map(|&v| v as u8).collect::<Vec<_>>())?;
    }
    f.flush()?;
    Ok(())
}

/// One Dirac per retained pixel. Pixel `(r, c)` sits at
/// `((c + 0.5) / W, 1 - (r + 0.5) / H)`; pixels whose weight is at most
/// `threshold * max weight` are dropped.
pub fn image_to_diracs<T: Scalar>(
    image: &GrayImage,
    polarity: Polarity,
    threshold: f64,
) -> Result<AtomicMeasure<T>, IoError> {
    let weight = |v: u16| -> f64 {
        match polarity {
            Polarity::Bright => v as f64,
            Polarity::Dark => (image.maxval - v) as f64,
        }
    };
    let max = image.pixels.iter().map(|&v| weight(v)).fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(MeasureError::ZeroTotalMass.into());
    }
    let cut = threshold * max;
    let (w, h) = (image.width as f64, image.height as f64);
    let mut coords = Vec::new();
    let mut masses = Vec::new();
    for r in 0..image.height {
        for c in 0..image.width {
            let m = weight(image.get(r, c));
            if m <= cut {
                continue;
            }
            coords.push(T::lit((c as f64 + 0.5) / w));
            coords.push(T::lit(1.0 - (r as f64 + 0.5) / h));
            masses.push(T::lit(m));
        }
    }
    if masses.is_empty() {
        return Err(MeasureError::ZeroTotalMass.into());
    }
    Ok(AtomicMeasure::new(PointSet::new(2, coords)?, masses)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkerboard_gives_two_diracs() {
        let img = GrayImage::new(2, 2, 255, vec![0, 255, 255, 0]).unwrap();
        let mu = image_to_diracs::<f64>(&img, Polarity::Bright, 0.0).unwrap();
        assert_eq!(mu.len(), 2);
        assert_eq!(mu.position(0), &[0.75, 0.75]);
        assert_eq!(mu.position(1), &[0.25, 0.25]);
        assert_eq!(mu.masses(), &[0.5, 0.5]);
    }

    #[test]
    fn dark_mode_inverts() {
        let img = GrayImage::new(2, 1, 255, vec![0, 255]).unwrap();
        let mu = image_to_diracs::<f64>(&img, Polarity::Dark, 0.0).unwrap();
        assert_eq!(mu.len(), 1);
        assert_eq!(mu.position(0), &[0.25, 0.5]);
    }

    #[test]
    fn constant_image_is_uniform() {
        let img = GrayImage::new(3, 4, 255, vec![7; 12]).unwrap();
        let mu = image_to_diracs::<f64>(&img, Polarity::Bright, 0.0).unwrap();
        assert_eq!(mu.len(), 12);
        for &m in mu.masses() {
            assert!((m - 1.0 / 12.0).abs() < 1e-15);
        }
    }

    #[test]
    fn threshold_drops_faint_pixels() {
        let img = GrayImage::new(3, 1, 100, vec![10, 50, 100]).unwrap();
        let mu = image_to_diracs::<f64>(&img, Polarity::Bright, 0.5).unwrap();
        assert_eq!(mu.len(), 1);
    }

    #[test]
    fn black_image_has_no_mass() {
        let img = GrayImage::new(2, 2, 255, vec![0; 4]).unwrap();
        let err = image_to_diracs::<f64>(&img, Polarity::Bright, 0.0).unwrap_err();
        assert!(matches!(err, IoError::Measure(MeasureError::ZeroTotalMass)));
    }

    #[test]
    fn plain_and_binary_agree() {
        let plain = b"P2\n# comment\n3 2\n255\n0 1 2\n3 4 255\n";
        let a = parse_pgm(plain).unwrap();
        let mut binary = b"P5 3 2 255\n".to_vec();
        binary.extend_from_slice(&[0, 1, 2, 3, 4, 255]);
        let b = parse_pgm(&binary).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.get(1, 2), 255);
    }

    #[test]
    fn sixteen_bit_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let img = GrayImage::new(2, 2, 1000, vec![0, 999, 1000, 5]).unwrap();
        write_pgm(&img, &path).unwrap();
        assert_eq!(read_pgm(&path).unwrap(), img);
    }

    #[test]
    fn truncated_raster_rejected() {
        assert!(matches!(parse_pgm(b"P5 4 4 255\n\x00\x01"), Err(IoError::Pgm(_))));
        assert!(matches!(parse_pgm(b"P6 1 1 255\n\x00"), Err(IoError::Pgm(_))));
    }
}
