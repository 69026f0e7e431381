//! CSV and SVG emission. Floats are written with Rust's shortest
//! round-trip formatting so identical runs produce identical bytes.

use std::io::{self, Write};
use std::path::Path;

/// Writes one CSV table: a header row and rows of floats.
pub fn write_csv<W: Write + ?Sized>(
    out: &mut W,
    header: &[&str],
    rows: impl Iterator<Item = Vec<f64>>,
) -> io::Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                write!(out, ",")?;
            }
            write!(out, "{v}")?;
            first = false;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Minimal scatter plot: one dot per point, labelled axes, no styling.
pub fn write_scatter_svg(
    path: &Path,
    points: &[(f64, f64)],
    xlabel: &str,
    ylabel: &str,
) -> io::Result<()> {
    const W: f64 = 800.0;
    const H: f64 = 600.0;
    const MARGIN: f64 = 50.0;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if points.is_empty() || x1 <= x0 {
        (x0, x1) = (0.0, 1.0);
    }
    if points.is_empty() || y1 <= y0 {
        (y0, y1) = (0.0, 1.0);
    }
    let sx = (W - 2.0 * MARGIN) / (x1 - x0);
    let sy = (H - 2.0 * MARGIN) / (y1 - y0);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"14\">{xlabel}</text>\n\
         <text x=\"12\" y=\"{}\" font-size=\"14\">{ylabel}</text>\n",
        W / 2.0,
        H - 12.0,
        H / 2.0,
    ));
    for &(x, y) in points {
        let px = MARGIN + (x - x0) * sx;
        let py = H - MARGIN - (y - y0) * sy;
        svg.push_str(&format!(
            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"1\" fill=\"black\"/>\n"
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)
}
