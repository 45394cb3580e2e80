//! Plain SVG output: labeled scatter plots and annotated heatmaps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::UNKNOWN;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#393b79",
];
const GRAY: &str = "#9e9e9e";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Class color: classes are ranked by name and cycle through the palette;
/// unknown (or missing) classes are gray.
fn colors<'a>(classes: impl Iterator<Item = &'a str>) -> BTreeMap<&'a str, &'static str> {
    let named: BTreeSet<&str> = classes.filter(|c| *c != UNKNOWN).collect();
    named
        .into_iter()
        .enumerate()
        .map(|(i, c)| (c, PALETTE[i % PALETTE.len()]))
        .collect()
}

/// Scatter plot with one circle per point. `classes[i] = None` is drawn as unknown.
pub fn scatter_svg(points: &[[f64; 2]], classes: &[Option<&str>]) -> Result<String> {
    if points.is_empty() {
        return Err(Error::Precondition("scatter plot needs at least one point".into()));
    }
    if points.len() != classes.len() {
        return Err(Error::Precondition("one class entry per point is required".into()));
    }
    let (size, margin, legend_w) = (600.0, 20.0, 160.0);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in points {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-12);
    let px = |x: f64| margin + (x - x0) / span * (size - 2.0 * margin);
    let py = |y: f64| size - margin - (y - y0) / span * (size - 2.0 * margin);
    let palette = colors(classes.iter().flatten().copied());
    let color = |c: Option<&str>| c.and_then(|c| palette.get(c).copied()).unwrap_or(GRAY);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{size}" viewBox="0 0 {} {size}">"#,
        size + legend_w,
        size + legend_w
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (p, c) in points.iter().zip(classes) {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}" fill-opacity="0.8"/>"#,
            px(p[0]),
            py(p[1]),
            color(*c)
        );
    }
    let mut legend: Vec<(&str, &str)> = palette.iter().map(|(c, col)| (*c, *col)).collect();
    if classes.iter().any(|c| c.is_none_or(|c| !palette.contains_key(c))) {
        legend.push((UNKNOWN, GRAY));
    }
    for (i, (name, col)) in legend.iter().enumerate() {
        let y = margin + 20.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<g class="legend"><circle cx="{:.2}" cy="{y:.2}" r="5" fill="{col}"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{}</text></g>"#,
            size + 10.0,
            size + 20.0,
            y + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes a scatter plot; users missing from `classes` are drawn as unknown.
pub fn emit_scatter_svg(
    points: &[[f64; 2]],
    user_ids: &[String],
    classes: &BTreeMap<String, String>,
    path: &Path,
) -> Result<()> {
    let per_point: Vec<Option<&str>> = user_ids.iter().map(|u| classes.get(u).map(String::as_str)).collect();
    crate::io::write_atomic(path, scatter_svg(points, &per_point)?.as_bytes())
}

fn cell_fill(v: f64) -> String {
    // white at 0, dark blue at 1
    let t = v.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(255.0, 8.0), lerp(255.0, 48.0), lerp(255.0, 107.0))
}

/// Square heatmap with each cell annotated to two decimals; `None` cells read "n/a".
pub fn heatmap_svg(names: &[String], matrix: &[Vec<Option<f64>>]) -> Result<String> {
    let n = matrix.len();
    if n == 0 || matrix.iter().any(|r| r.len() != n) {
        return Err(Error::Precondition("heatmap matrix must be square and nonempty".into()));
    }
    if names.len() != n {
        return Err(Error::Precondition("one name per matrix row is required".into()));
    }
    let (cell, label_w) = (60.0, 120.0);
    let side = label_w + cell * n as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{side}" height="{side}" viewBox="0 0 {side} {side}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, name) in names.iter().enumerate() {
        let c = label_w + cell * (i as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{c:.2}" text-anchor="end" font-family="sans-serif" font-size="12">{}</text>"#,
            label_w - 6.0,
            escape(name)
        );
        let _ = writeln!(
            s,
            r#"<text x="{c:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            label_w - 6.0,
            escape(name)
        );
    }
    for (i, row) in matrix.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let (x, y) = (label_w + cell * j as f64, label_w + cell * i as f64);
            let (fill, text, ink) = match v {
                Some(v) => (cell_fill(*v), format!("{v:.2}"), if *v > 0.5 { "white" } else { "black" }),
                None => ("#eeeeee".to_string(), "n/a".to_string(), "black"),
            };
            let _ = writeln!(
                s,
                r#"<g class="cell"><rect x="{x:.2}" y="{y:.2}" width="{cell}" height="{cell}" fill="{fill}" stroke="white"/><text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12" fill="{ink}">{text}</text></g>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_heatmap_svg(names: &[String], matrix: &[Vec<Option<f64>>], path: &Path) -> Result<()> {
    crate::io::write_atomic(path, heatmap_svg(names, matrix)?.as_bytes())
}
