//! Static SVG figures.

use std::fmt::Write;

use ravenbench::errstats::{ErrorGrid, N_OPTIONS};

use crate::summary::PosteriorSummary;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 4] = ["#1f5fa8", "#c0392b", "#2e8b57", "#8e44ad"];

struct Frame {
    x_lo: f64,
    x_hi: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x_lo) / (self.x_hi - self.x_lo) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - y.clamp(0.0, 1.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

/// Fitted curves with credible bands, empirical points and the threshold
/// interval of each series. Returns `None` when no series has data.
pub fn psychometric_svg(series: &[(&str, &PosteriorSummary)]) -> Option<String> {
    let xs = series.iter().flat_map(|(_, s)| s.curve.iter().map(|c| c.x));
    let (x_lo, x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !x_lo.is_finite() || x_hi <= x_lo {
        return None;
    }
    let f = Frame { x_lo, x_hi };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    axes(&mut svg, &f);
    for (i, (label, s)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if let Some(t) = &s.threshold {
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.15"/>"#,
                f.px(t.lo.max(x_lo)),
                f.py(1.0),
                (f.px(t.hi.min(x_hi)) - f.px(t.lo.max(x_lo))).max(0.0),
                f.py(0.0) - f.py(1.0)
            );
        }
        let upper: Vec<String> = s.curve.iter().map(|c| format!("{:.2},{:.2}", f.px(c.x), f.py(c.hi))).collect();
        let lower: Vec<String> = s.curve.iter().rev().map(|c| format!("{:.2},{:.2}", f.px(c.x), f.py(c.lo))).collect();
        let _ = writeln!(
            svg,
            r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.25" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = s.curve.iter().map(|c| format!("{:.2},{:.2}", f.px(c.x), f.py(c.median))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        for t in s.trials.iter().filter(|t| t.n > 0) {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
                f.px(t.x),
                f.py(t.k as f64 / t.n as f64)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" fill="{color}">{}</text>"#,
            WIDTH - MARGIN - 120.0,
            MARGIN + 16.0 * i as f64,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

fn axes(svg: &mut String, f: &Frame) {
    let (x0, x1, y0, y1) = (f.px(f.x_lo), f.px(f.x_hi), f.py(0.0), f.py(1.0));
    let _ = writeln!(svg, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}" stroke="black"/>"#);
    for tick in (f.x_lo.ceil() as i64)..=(f.x_hi.floor() as i64) {
        let x = f.px(tick as f64);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{tick}</text>"#, y0 + 16.0);
    }
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let y = f.py(tick);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{tick:.2}</text>"#, x0 - 6.0, y + 4.0);
    }
    let chance = f.py(0.125);
    let _ = writeln!(
        svg,
        r#"<line x1="{x0:.2}" y1="{chance:.2}" x2="{x1:.2}" y2="{chance:.2}" stroke="gray" stroke-dasharray="4 4"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">item difficulty rank</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" transform="rotate(-90 16 {:.2})" text-anchor="middle">proportion correct</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
}

/// Heat table of an error grid: rows are items by decreasing reference
/// success, columns options by decreasing reference frequency.
pub fn error_grid_svg(title: &str, grid: &ErrorGrid) -> String {
    const CELL: f64 = 40.0;
    const LEFT: f64 = 80.0;
    const TOP: f64 = 48.0;
    let rows = grid.counts.len();
    let width = LEFT + CELL * N_OPTIONS as f64 + 16.0;
    let height = TOP + CELL * rows as f64 + 16.0;
    let denom = grid.group_size.max(1) as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{LEFT}" y="20" font-size="13">{} (n = {})</text>"#, escape(title), grid.group_size);
    for col in 0..N_OPTIONS {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + CELL * (col as f64 + 0.5),
            TOP - 6.0,
            col + 1
        );
    }
    for (row, counts) in grid.counts.iter().enumerate() {
        let item = grid.item_order[row];
        let y = TOP + CELL * row as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">item {}</text>"#,
            LEFT - 6.0,
            y + CELL / 2.0 + 4.0,
            item + 1
        );
        for (col, &c) in counts.iter().enumerate() {
            let share = c as f64 / denom;
            let shade = (255.0 * (1.0 - share)).round() as u8;
            let x = LEFT + CELL * col as f64;
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{CELL}" height="{CELL}" fill="rgb({shade},{shade},255)" stroke="gray"/>"#
            );
            let ink = if share > 0.5 { "white" } else { "black" };
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" fill="{ink}">{c}</text>"#,
                x + CELL / 2.0,
                y + CELL / 2.0 + 4.0
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
