//! gnuplot-ready `.dat` files and small static SVG charts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::experiment::ConvergenceReport;
use crate::harness::ComparisonTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Line,
    GroupedBar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// (x, y, error bar half-width)
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub kind: PlotKind,
    pub series: Vec<Series>,
    /// Group names for bar charts; point x values index into this list.
    pub categories: Vec<String>,
}

impl PlotData {
    fn is_empty(&self) -> bool {
        self.series.iter().all(|s| s.points.is_empty())
    }
}

impl From<&ConvergenceReport> for PlotData {
    fn from(r: &ConvergenceReport) -> Self {
        let est = r
            .rows
            .iter()
            .map(|row| (row.n as f64, row.estimate.value, 3.0 * row.estimate.stat_error))
            .collect();
        let mut series = vec![Series { label: format!("{} estimate", r.method), points: est }];
        if !r.rows.is_empty() {
            let reference = r.rows.iter().map(|row| (row.n as f64, r.reference.value, 0.0)).collect();
            series.push(Series { label: "reference".into(), points: reference });
        }
        PlotData {
            title: format!("{} convergence, base {}, t = {}, x = {}", r.mode, r.base, r.t, r.x),
            x_label: "n".into(),
            y_label: "density".into(),
            kind: PlotKind::Line,
            series,
            categories: Vec::new(),
        }
    }
}

impl From<&ComparisonTable> for PlotData {
    fn from(c: &ComparisonTable) -> Self {
        let mut categories: Vec<String> = Vec::new();
        for r in &c.rows {
            let key = format!("{} x={}", r.drift, r.x);
            if !categories.contains(&key) {
                categories.push(key);
            }
        }
        let mut series: Vec<Series> = Vec::new();
        for r in &c.rows {
            let key = format!("{} x={}", r.drift, r.x);
            let g = categories.iter().position(|k| *k == key).unwrap_or(0) as f64;
            let label = r.method.to_string();
            let point = (g, r.estimate.value, 3.0 * r.estimate.stat_error);
            match series.iter_mut().find(|s| s.label == label) {
                Some(s) => s.points.push(point),
                None => series.push(Series { label, points: vec![point] }),
            }
        }
        PlotData {
            title: "method comparison".into(),
            x_label: "drift".into(),
            y_label: "density".into(),
            kind: PlotKind::GroupedBar,
            series,
            categories,
        }
    }
}

/// Writes `<stem>.dat` and `<stem>.svg`.
pub fn emit_plot_data(data: impl Into<PlotData>, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    let data = data.into();
    if data.is_empty() {
        return Err(Error::NothingToPlot);
    }
    let dat = stem.with_extension("dat");
    let svg = stem.with_extension("svg");
    std::fs::write(&dat, render_dat(&data))?;
    std::fs::write(&svg, render_svg(&data))?;
    Ok((dat, svg))
}

pub fn render_dat(data: &PlotData) -> String {
    let mut s = format!("# {}\n# columns: {} {} error\n", data.title, data.x_label, data.y_label);
    for (i, series) in data.series.iter().enumerate() {
        if i > 0 {
            s.push_str("\n\n");
        }
        let _ = writeln!(s, "# series: {}", series.label);
        for &(x, y, e) in &series.points {
            match data.kind {
                PlotKind::Line => {
                    let _ = writeln!(s, "{x} {y} {e}");
                }
                PlotKind::GroupedBar => {
                    let cat = data.categories.get(x as usize).map(String::as_str).unwrap_or("?");
                    let _ = writeln!(s, "\"{cat}\" {y} {e}");
                }
            }
        }
    }
    s
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

pub fn render_svg(data: &PlotData) -> String {
    let pts = data.series.iter().flat_map(|s| s.points.iter());
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y, e) in pts {
        y_lo = y_lo.min(y - e);
        y_hi = y_hi.max(y + e);
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
    }
    if data.kind == PlotKind::GroupedBar {
        y_lo = y_lo.min(0.0);
        x_lo = -0.5;
        x_hi = data.categories.len().max(1) as f64 - 0.5;
    } else {
        (x_lo, x_hi) = padded(x_lo, x_hi);
    }
    let (y_lo, y_hi) = padded(y_lo, y_hi);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * pw;
    let sy = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(&data.title));
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let y = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        let py = sy(y);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.4}</text>"#, LEFT - 6.0, py + 4.0, y);
    }
    match data.kind {
        PlotKind::Line => {
            for k in 0..=4 {
                let x = x_lo + (x_hi - x_lo) * k as f64 / 4.0;
                let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{:.3}</text>"#, sx(x), TOP + ph + 18.0, x);
            }
            for (i, series) in data.series.iter().enumerate() {
                let color = COLORS[i % COLORS.len()];
                let path: Vec<String> = series.points.iter().map(|&(x, y, _)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.join(" "));
                for &(x, y, e) in &series.points {
                    if e > 0.0 {
                        let _ = writeln!(s, r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="{color}"/>"#, sx(x), sy(y - e), sy(y + e));
                    }
                    let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
                }
            }
        }
        PlotKind::GroupedBar => {
            let n = data.series.len().max(1) as f64;
            let group = pw / data.categories.len().max(1) as f64;
            let bar = 0.8 * group / n;
            for (g, cat) in data.categories.iter().enumerate() {
                let cx = sx(g as f64);
                let _ = writeln!(s, r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, escape(cat));
            }
            for (i, series) in data.series.iter().enumerate() {
                let color = COLORS[i % COLORS.len()];
                for &(x, y, e) in &series.points {
                    let left = sx(x) - 0.4 * group + i as f64 * bar;
                    let (top, bottom) = (sy(y.max(0.0)), sy(y.min(0.0)));
                    let _ = writeln!(
                        s,
                        r#"<rect x="{left:.2}" y="{top:.2}" width="{bar:.2}" height="{:.2}" fill="{color}"/>"#,
                        bottom - top
                    );
                    if e > 0.0 {
                        let mid = left + 0.5 * bar;
                        let _ = writeln!(s, r#"<line x1="{mid:.2}" y1="{:.2}" x2="{mid:.2}" y2="{:.2}" stroke="black"/>"#, sy(y - e), sy(y + e));
                    }
                }
            }
        }
    }
    for (i, series) in data.series.iter().enumerate() {
        let y = TOP + 14.0 + 18.0 * i as f64;
        let x = W - RIGHT + 12.0;
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(s, r#"<rect x="{x}" y="{:.2}" width="12" height="12" fill="{color}"/>"#, y - 10.0);
        let _ = writeln!(s, r#"<text x="{}" y="{y:.2}">{}</text>"#, x + 18.0, escape(&series.label));
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 8.0, escape(&data.x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&data.y_label)
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{compare_methods, RunConfig};
    use crate::estimate::Method;

    #[test]
    fn empty_plot_is_refused() {
        let empty = PlotData {
            title: "x".into(),
            x_label: "n".into(),
            y_label: "p".into(),
            kind: PlotKind::Line,
            series: vec![],
            categories: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(emit_plot_data(empty, &dir.path().join("e")).unwrap_err(), Error::NothingToPlot);
    }

    #[test]
    fn comparison_gives_bars() {
        let base = RunConfig::new(Method::Oracle, "zero", 1.0, 0.0);
        let table = compare_methods(&base, &[Method::Oracle, Method::Series]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (dat, svg) = emit_plot_data(&table, &dir.path().join("cmp")).unwrap();
        assert!(dat.ends_with("cmp.dat") && svg.ends_with("cmp.svg"));
        let text = std::fs::read_to_string(svg).unwrap();
        assert!(text.starts_with("<svg") && text.matches("<rect").count() >= 4);
        assert!(std::fs::read_to_string(dat).unwrap().contains("# series: series"));
    }
}
