//! Two-panel SVG: the iterate path in the `(x[1], y[1])` unit square and the
//! duality gap against `t`.

use std::fmt::Write as _;

/// Longest polyline emitted per panel; longer series are subsampled evenly.
const MAX_POINTS: usize = 4000;

const PANEL: f64 = 360.0;
const MARGIN: f64 = 50.0;

/// One plotted iterate.
#[derive(Debug, Clone, Copy)]
pub struct Point {
    pub t: u64,
    pub x1: f64,
    pub y1: f64,
    pub gap: f64,
}

pub struct PlotOptions {
    pub title: String,
    pub log_gap: bool,
}

fn subsample(points: &[Point]) -> Vec<Point> {
    if points.len() <= MAX_POINTS {
        return points.to_vec();
    }
    let step = points.len() as f64 / MAX_POINTS as f64;
    let mut out: Vec<Point> = (0..MAX_POINTS).map(|i| points[(i as f64 * step) as usize]).collect();
    out.push(*points.last().expect("non-empty"));
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders the figure. `points` must be non-empty and ordered by `t`.
pub fn render(points: &[Point], opts: &PlotOptions) -> String {
    assert!(!points.is_empty(), "nothing to plot");
    let pts = subsample(points);
    let width = 2.0 * PANEL + 3.0 * MARGIN;
    let height = PANEL + 2.0 * MARGIN;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2.0,
        escape(&opts.title)
    );

    // left panel: iterate path
    let (ox, oy) = (MARGIN, MARGIN);
    frame(&mut s, ox, oy, "x[1]", "y[1]");
    axis_labels(&mut s, ox, oy, ("0", "1"), ("0", "1"));
    let path: Vec<String> = pts
        .iter()
        .map(|p| format!("{:.2},{:.2}", ox + p.x1.clamp(0.0, 1.0) * PANEL, oy + (1.0 - p.y1.clamp(0.0, 1.0)) * PANEL))
        .collect();
    polyline(&mut s, &path, "#1f77b4");
    let first = pts[0];
    let last = *pts.last().expect("non-empty");
    for (p, color) in [(first, "#2ca02c"), (last, "#d62728")] {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
            ox + p.x1.clamp(0.0, 1.0) * PANEL,
            oy + (1.0 - p.y1.clamp(0.0, 1.0)) * PANEL
        );
    }

    // right panel: gap against t
    let ox = 2.0 * MARGIN + PANEL;
    let t_min = first.t as f64;
    let t_max = (last.t as f64).max(t_min + 1.0);
    let floor = 1e-300;
    let transform = |g: f64| if opts.log_gap { g.max(floor).log10() } else { g };
    let values: Vec<f64> = pts.iter().map(|p| transform(p.gap)).collect();
    let mut lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !opts.log_gap {
        lo = lo.min(0.0);
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let ylabel = if opts.log_gap { "log10 gap" } else { "gap" };
    frame(&mut s, ox, oy, "t", ylabel);
    axis_labels(
        &mut s,
        ox,
        oy,
        (&format!("{}", first.t), &format!("{}", last.t)),
        (&format!("{lo:.3}"), &format!("{hi:.3}")),
    );
    let path: Vec<String> = pts
        .iter()
        .zip(&values)
        .map(|(p, v)| {
            let px = ox + (p.t as f64 - t_min) / (t_max - t_min) * PANEL;
            let py = oy + (1.0 - (v - lo) / (hi - lo)) * PANEL;
            format!("{px:.2},{py:.2}")
        })
        .collect();
    polyline(&mut s, &path, "#d62728");
    let _ = writeln!(s, "</svg>");
    s
}

fn frame(s: &mut String, ox: f64, oy: f64, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        s,
        r#"<rect x="{ox}" y="{oy}" width="{PANEL}" height="{PANEL}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        ox + PANEL / 2.0,
        oy + PANEL + 35.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">{}</text>"#,
        ox - 35.0,
        oy + PANEL / 2.0,
        ox - 35.0,
        oy + PANEL / 2.0,
        escape(ylabel)
    );
}

fn axis_labels(s: &mut String, ox: f64, oy: f64, x: (&str, &str), y: (&str, &str)) {
    let below = oy + PANEL + 15.0;
    let _ = writeln!(s, r#"<text x="{ox}" y="{below}" text-anchor="start">{}</text>"#, escape(x.0));
    let _ = writeln!(s, r#"<text x="{}" y="{below}" text-anchor="end">{}</text>"#, ox + PANEL, escape(x.1));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, ox - 4.0, oy + PANEL, escape(y.0));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, ox - 4.0, oy + 10.0, escape(y.1));
}

fn polyline(s: &mut String, points: &[String], color: &str) {
    let _ = writeln!(
        s,
        r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
        points.join(" ")
    );
}
