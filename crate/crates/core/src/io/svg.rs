use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{create, IoError};
use crate::measures::{AtomicMeasure, PolylineMeasure};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvgStyle {
    /// Width of the drawing in pixels; the height follows the aspect ratio.
    pub width: f64,
    /// Blank border as a fraction of the drawing extent.
    pub margin: f64,
    pub stroke: String,
    pub stroke_width: f64,
    pub point_fill: String,
    /// Radius of the heaviest atom in pixels.
    pub point_radius: f64,
}

impl Default for SvgStyle {
    fn default() -> Self {
        Self {
            width: 800.0,
            margin: 0.02,
            stroke: "black".into(),
            stroke_width: 1.0,
            point_fill: "#d04030".into(),
            point_radius: 2.0,
        }
    }
}

/// Renders the first two coordinates, y pointing up. Runs of segments with
/// positive density form one path each.
pub fn render_svg<T: Scalar>(curve: &PolylineMeasure<T>, atoms: Option<&AtomicMeasure<T>>, style: &SvgStyle) -> String {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut grow = |p: &[T]| {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k].as_f64());
            hi[k] = hi[k].max(p[k].as_f64());
        }
    };
    curve.vertices().iter().for_each(&mut grow);
    if let Some(mu) = atoms {
        mu.positions().iter().for_each(&mut grow);
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    // a flat drawing still gets a visible box
    for k in 0..2 {
        let short = 0.05 * extent - (hi[k] - lo[k]);
        if short > 0.0 {
            lo[k] -= short / 2.0;
            hi[k] += short / 2.0;
        }
    }
    let pad = style.margin * extent;
    let (x0, y1) = (lo[0] - pad, hi[1] + pad);
    let (w, h) = (hi[0] - lo[0] + 2.0 * pad, hi[1] - lo[1] + 2.0 * pad);
    let scale = style.width / w;
    let height = h * scale;
    let map = |p: &[T]| ((p[0].as_f64() - x0) * scale, (y1 - p[1].as_f64()) * scale);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.3}" height="{:.3}" viewBox="0 0 {:.3} {:.3}">"#,
        style.width, height, style.width, height
    );
    if let Some(mu) = atoms {
        let mmax = mu.masses().iter().fold(T::zero(), |a, &b| a.max(b)).as_f64();
        let _ = writeln!(out, r#"<g fill="{}" stroke="none">"#, style.point_fill);
        for (i, p) in mu.positions().iter().enumerate() {
            let (x, y) = map(p);
            let r = style.point_radius * mu.masses()[i].as_f64() / mmax;
            let _ = writeln!(out, r#"<circle cx="{x:.3}" cy="{y:.3}" r="{r:.3}"/>"#);
        }
        out.push_str("</g>\n");
    }
    let _ = writeln!(
        out,
        r#"<g fill="none" stroke="{}" stroke-width="{}" stroke-linejoin="round" stroke-linecap="round">"#,
        style.stroke, style.stroke_width
    );
    let mut a = 0;
    let p = curve.segment_count();
    while a < p {
        if curve.density(a) == T::zero() {
            a += 1;
            continue;
        }
        let (x, y) = map(curve.vertex(a));
        let _ = write!(out, r#"<path d="M{x:.3} {y:.3}"#);
        while a < p && curve.density(a) > T::zero() {
            let (x, y) = map(curve.vertex(a + 1));
            let _ = write!(out, " L{x:.3} {y:.3}");
            a += 1;
        }
        out.push_str("\"/>\n");
    }
    out.push_str("</g>\n</svg>\n");
    out
}

pub fn write_svg<T: Scalar>(
    curve: &PolylineMeasure<T>,
    atoms: Option<&AtomicMeasure<T>>,
    style: &SvgStyle,
    path: &Path,
) -> Result<(), IoError> {
    use std::io::Write;
    create(path)?.write_all(render_svg(curve, atoms, style).as_bytes())?;
    Ok(())
}
