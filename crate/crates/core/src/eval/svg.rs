//! Minimal SVG line plots.

use std::fmt::Write;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const W: f64 = 640.0;
const H: f64 = 640.0;
const MARGIN: f64 = 48.0;

pub(crate) struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

pub(crate) struct Marker {
    pub label: String,
    pub at: (f64, f64),
}

/// Renders polylines with equal-aspect scaling, axis labels, and a legend.
pub(crate) fn render(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>], markers: &[Marker]) -> String {
    let all = series
        .iter()
        .flat_map(|s| s.points.iter())
        .chain(markers.iter().map(|m| &m.at));
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-6);
    let cx = 0.5 * (x0 + x1);
    let cy = 0.5 * (y0 + y1);
    let scale = (W - 2.0 * MARGIN) / (span * 1.05);
    let map = |x: f64, y: f64| (W * 0.5 + (x - cx) * scale, H * 0.5 - (y - cy) * scale);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        W * 0.5,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        W * 0.5,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 14 {})">{}</text>"#,
        H * 0.5,
        H * 0.5,
        escape(y_label)
    );
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut pts = String::new();
        for &(x, y) in &s.points {
            let (px, py) = map(x, y);
            let _ = write!(pts, "{px:.2},{py:.2} ");
        }
        let _ = writeln!(
            out,
            r#"<polyline class="series" data-name="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            escape(s.name),
            pts.trim_end()
        );
        let ly = 44.0 + 16.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            W - 150.0,
            W - 130.0,
            W - 124.0,
            ly + 4.0,
            escape(s.name)
        );
    }
    for m in markers {
        let (px, py) = map(m.at.0, m.at.1);
        let _ = writeln!(
            out,
            r#"<circle class="marker" cx="{px:.2}" cy="{py:.2}" r="4" fill="black"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11">{}</text>"#,
            px + 6.0,
            py - 6.0,
            escape(&m.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Oblique projection of engine-frame points (Y up) onto the page.
pub(crate) fn project_3d(x: f64, y: f64, z: f64) -> (f64, f64) {
    let c = 30f64.to_radians().cos();
    let s = 30f64.to_radians().sin();
    ((x - z) * c, y + (x + z) * s * 0.5)
}
