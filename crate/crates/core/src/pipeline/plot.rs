//! Hand-written SVG line plots. Output depends only on the inputs, so
//! identical data give byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::curves::CurveSet;
use crate::error::{FdError, Result};
use crate::mvclust::Partition;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 32.0;
const MARGIN_B: f64 = 44.0;

/// Stroke color for cluster `k` (0-based), cycling through ten hues.
pub fn cluster_color(k: usize) -> &'static str {
    const PALETTE: [&str; 10] = [
        "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    ];
    PALETTE[k % PALETTE.len()]
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(grid: &[f64], values: &DMatrix<f64>) -> Frame {
        let (mut y0, mut y1) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if !(y1 > y0) {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pad = 0.04 * (y1 - y0);
        Frame {
            x0: grid[0],
            x1: grid[grid.len() - 1],
            y0: y0 - pad,
            y1: y1 + pad,
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn header(svg: &mut String, title: &str, f: &Frame) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (l, r, t, b) = (MARGIN_L, WIDTH - MARGIN_R, MARGIN_T, HEIGHT - MARGIN_B);
    let _ = writeln!(
        svg,
        r#"<rect x="{l}" y="{t}" width="{:.1}" height="{:.1}" fill="none" stroke="black" stroke-width="1"/>"#,
        r - l,
        b - t
    );
    for i in 0..=4 {
        let x = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
        let y = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let (px, py) = (f.px(x), f.py(y));
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{b}" x2="{px:.2}" y2="{:.1}" stroke="black"/><text x="{px:.2}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            b + 4.0,
            b + 18.0,
            tick(x)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{py:.2}" x2="{l}" y2="{py:.2}" stroke="black"/><text x="{:.1}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            l - 4.0,
            l - 6.0,
            py + 4.0,
            tick(y)
        );
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline(svg: &mut String, f: &Frame, grid: &[f64], row: impl Iterator<Item = f64>, color: &str, width: f64, opacity: f64) {
    svg.push_str(r#"<polyline fill="none" points=""#);
    for (j, (x, y)) in grid.iter().zip(row).enumerate() {
        if j > 0 {
            svg.push(' ');
        }
        let _ = write!(svg, "{:.2},{:.2}", f.px(*x), f.py(y));
    }
    let _ = writeln!(
        svg,
        r#"" stroke="{color}" stroke-width="{width}" stroke-opacity="{opacity}"/>"#
    );
}

fn write_svg(path: &Path, svg: &str) -> Result<PathBuf> {
    std::fs::write(path, svg).map_err(|e| FdError::io(path, e))?;
    Ok(path.to_path_buf())
}

/// Every curve in one neutral color.
pub fn plot_raw(cs: &CurveSet, title: &str, path: impl AsRef<Path>) -> Result<PathBuf> {
    let f = Frame::new(cs.grid(), cs.values());
    let mut svg = String::new();
    header(&mut svg, title, &f);
    for i in 0..cs.n_curves() {
        polyline(&mut svg, &f, cs.grid(), cs.values().row(i).iter().copied(), "#555555", 0.8, 0.5);
    }
    svg.push_str("</svg>\n");
    write_svg(path.as_ref(), &svg)
}

/// Every curve colored by its cluster.
pub fn plot_clusters(cs: &CurveSet, labels: &[usize], title: &str, path: impl AsRef<Path>) -> Result<PathBuf> {
    if labels.len() != cs.n_curves() {
        return Err(FdError::DimensionMismatch(format!(
            "{} labels for {} curves",
            labels.len(),
            cs.n_curves()
        )));
    }
    let f = Frame::new(cs.grid(), cs.values());
    let mut svg = String::new();
    header(&mut svg, title, &f);
    for (i, &k) in labels.iter().enumerate() {
        polyline(&mut svg, &f, cs.grid(), cs.values().row(i).iter().copied(), cluster_color(k), 0.8, 0.6);
    }
    svg.push_str("</svg>\n");
    write_svg(path.as_ref(), &svg)
}

/// One line per centroid (`M × m` on `grid`), colored like its cluster.
pub fn plot_centroids(grid: &[f64], centroids: &DMatrix<f64>, title: &str, path: impl AsRef<Path>) -> Result<PathBuf> {
    if centroids.ncols() != grid.len() || grid.len() < 2 {
        return Err(FdError::DimensionMismatch("centroids do not match the grid".into()));
    }
    let f = Frame::new(grid, centroids);
    let mut svg = String::new();
    header(&mut svg, title, &f);
    for k in 0..centroids.nrows() {
        polyline(&mut svg, &f, grid, centroids.row(k).iter().copied(), cluster_color(k), 2.0, 1.0);
    }
    svg.push_str("</svg>\n");
    write_svg(path.as_ref(), &svg)
}

/// Pointwise mean of the observed curves in each cluster (`M × m`).
pub fn centroid_curves(cs: &CurveSet, partition: &Partition) -> Result<DMatrix<f64>> {
    crate::mvclust::cluster_means(cs.values(), &partition.labels, partition.n_clusters)
}

/// Write `raw.svg`, `clusters_<stem>.svg` and `centroids_<stem>.svg` into
/// `outdir`.
pub fn emit_plots(
    cs: &CurveSet,
    partition: &Partition,
    centroids: &DMatrix<f64>,
    outdir: impl AsRef<Path>,
    stem: &str,
) -> Result<Vec<PathBuf>> {
    let dir = outdir.as_ref();
    if partition.labels.len() != cs.n_curves() {
        return Err(FdError::DimensionMismatch("partition does not match the curves".into()));
    }
    Ok(vec![
        plot_raw(cs, "curves", dir.join("raw.svg"))?,
        plot_clusters(cs, &partition.labels, stem, dir.join(format!("clusters_{stem}.svg")))?,
        plot_centroids(cs.grid(), centroids, &format!("{stem} centroids"), dir.join(format!("centroids_{stem}.svg")))?,
    ])
}
