//! Deterministic SVG 1.1 figures: label ribbons and labelled scatters.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::domain::ClassLabel;
use crate::error::{Error, Result};

pub fn color(label: ClassLabel) -> &'static str {
    match label {
        ClassLabel::Coco => "#d62728",
        ClassLabel::Imagenet => "#2ca02c",
        ClassLabel::Sun => "#1f77b4",
    }
}

const CELL: f64 = 16.0;
const BAND: f64 = 24.0;
const LEFT: f64 = 80.0;

/// Truth cells above a time axis and predicted cells below it.
pub fn ribbon_svg(truth: &[ClassLabel], pred: &[ClassLabel]) -> Result<String> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: pred.len(),
        });
    }
    let n = truth.len();
    let width = LEFT + CELL * n as f64 + 10.0;
    let axis = 10.0 + BAND + 6.0;
    let height = axis + 6.0 + BAND + 10.0;
    let mut s = String::new();
    writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    )
    .unwrap();
    writeln!(s, r#"<text x="4" y="{}" font-size="12" font-family="sans-serif">actual</text>"#, 10.0 + BAND / 2.0 + 4.0).unwrap();
    writeln!(s, r#"<text x="4" y="{}" font-size="12" font-family="sans-serif">predicted</text>"#, axis + 6.0 + BAND / 2.0 + 4.0).unwrap();
    for (row, labels) in [(10.0, truth), (axis + 6.0, pred)] {
        for (t, &l) in labels.iter().enumerate() {
            writeln!(
                s,
                r#"<rect x="{}" y="{row}" width="{CELL}" height="{BAND}" fill="{}"/>"#,
                LEFT + CELL * t as f64,
                color(l)
            )
            .unwrap();
        }
    }
    writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{axis}" x2="{}" y2="{axis}" stroke="black" stroke-width="1"/>"#,
        LEFT + CELL * n as f64
    )
    .unwrap();
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_ribbon_svg(truth: &[ClassLabel], pred: &[ClassLabel], path: &Path) -> Result<()> {
    let svg = ribbon_svg(truth, pred)?;
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

const PLOT: f64 = 480.0;

/// Scatter of 2-D points coloured by label, scaled to the bounding box plus
/// a 5% margin. A zero-extent box is widened to one unit.
pub fn scatter_svg(points: &[Vec<f64>], labels: &[ClassLabel]) -> Result<String> {
    if points.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: points.len(),
            right: labels.len(),
        });
    }
    if let Some(bad) = points.iter().find(|p| p.len() < 2) {
        return Err(Error::LengthMismatch { left: bad.len(), right: 2 });
    }
    let bounds = |k: usize| {
        let lo = points.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            return (-0.5, 0.5);
        }
        let span = if hi - lo > 0.0 { hi - lo } else { 1.0 };
        let mid = (lo + hi) / 2.0;
        let half = span * 1.05 / 2.0;
        (mid - half, mid + half)
    };
    let (x0, x1) = bounds(0);
    let (y0, y1) = bounds(1);
    let legend = 110.0;
    let mut s = String::new();
    writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{PLOT}" viewBox="0 0 {w} {PLOT}">"#,
        w = PLOT + legend
    )
    .unwrap();
    writeln!(s, r##"<rect x="0" y="0" width="{PLOT}" height="{PLOT}" fill="none" stroke="#999999"/>"##).unwrap();
    for (p, &l) in points.iter().zip(labels) {
        let cx = (p[0] - x0) / (x1 - x0) * PLOT;
        let cy = PLOT - (p[1] - y0) / (y1 - y0) * PLOT;
        writeln!(s, r#"<circle cx="{cx:.3}" cy="{cy:.3}" r="3" fill="{}"/>"#, color(l)).unwrap();
    }
    for (i, l) in ClassLabel::ALL.iter().enumerate() {
        let y = 20.0 + 20.0 * i as f64;
        writeln!(s, r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/>"#, PLOT + 12.0, y - 9.0, color(*l)).unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{y}" font-size="12" font-family="sans-serif">{}</text>"#,
            PLOT + 28.0,
            l.name()
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_scatter_svg(points: &[Vec<f64>], labels: &[ClassLabel], path: &Path) -> Result<()> {
    let svg = scatter_svg(points, labels)?;
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}
