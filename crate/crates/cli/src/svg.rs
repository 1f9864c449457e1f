//! Minimal SVG line charts for analysis reports.

use std::fmt::Write;

const W: f64 = 800.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;
/// Points per polyline; longer series are strided.
const MAX_POINTS: usize = 2000;

pub struct Line<'a> {
    pub label: &'a str,
    pub colour: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart of one or more series sharing both axes.
pub fn chart(title: &str, x_label: &str, y_label: &str, lines: &[Line<'_>]) -> String {
    let (x0, x1) = bounds(lines.iter().flat_map(|l| l.x.iter().copied()));
    let (y0, y1) = bounds(lines.iter().flat_map(|l| l.y.iter().copied()));
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{PAD} {PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#, W / 2.0, H - 10.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    for (v, y) in [(y0, H - PAD), (y1, PAD)] {
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{}</text>"#, PAD - 4.0, y + 4.0, fmt_tick(v));
    }
    for (v, x) in [(x0, PAD), (x1, W - PAD)] {
        let _ = writeln!(s, r#"<text x="{x}" y="{}" font-size="10" text-anchor="middle">{}</text>"#, H - PAD + 14.0, fmt_tick(v));
    }
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(s, r##"<line x1="{PAD}" x2="{}" y1="{z}" y2="{z}" stroke="#999" stroke-dasharray="4"/>"##, W - PAD, z = sy(0.0));
    }
    for (k, l) in lines.iter().enumerate() {
        let n = l.x.len().min(l.y.len());
        let stride = n.div_ceil(MAX_POINTS).max(1);
        let mut pts = String::new();
        for i in (0..n).step_by(stride) {
            if l.x[i].is_finite() && l.y[i].is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", sx(l.x[i]), sy(l.y[i]));
            }
        }
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{}" stroke-width="1" points="{}"/>"#, l.colour, pts.trim_end());
        let ly = PAD + 14.0 * k as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" font-size="11" fill="{}">{}</text>"#, W - PAD - 100.0, l.colour, escape(l.label));
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1000.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}
