//! Minimal SVG line and box plots.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: (f64, f64, f64, f64) = (60.0, 20.0, 30.0, 50.0); // left, right, top, bottom
const COLOURS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(lo, hi): (f64, f64)| {
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 1.0, hi + 1.0)
            }
        };
        Self { x: widen(x), y: widen(y) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN.0 + (x - self.x.0) / (self.x.1 - self.x.0) * (W - MARGIN.0 - MARGIN.1)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN.3 - (y - self.y.0) / (self.y.1 - self.y.0) * (H - MARGIN.2 - MARGIN.3)
    }
}

fn header(svg: &mut String, title: &str, xlabel: &str, ylabel: &str, f: &Frame) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="18" text-anchor="middle">{title}</text>"#, W / 2.0);
    let (x0, x1) = (MARGIN.0, W - MARGIN.1);
    let (y0, y1) = (H - MARGIN.3, MARGIN.2);
    let _ = writeln!(
        svg,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" stroke="black" fill="none"/>"#
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = f.x.0 + t * (f.x.1 - f.x.0);
        let yv = f.y.0 + t * (f.y.1 - f.y.0);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            f.px(xv),
            y0 + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 4.0,
            f.py(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, (x0 + x1) / 2.0, H - 10.0);
    let _ = writeln!(
        svg,
        r#"<text transform="translate(14,{}) rotate(-90)" text-anchor="middle">{ylabel}</text>"#,
        (y0 + y1) / 2.0
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let all = || series.iter().flat_map(|s| s.points.iter());
    let mut x = bounds(all().map(|p| p.0));
    let mut y = bounds(all().map(|p| p.1));
    if !x.0.is_finite() {
        x = (0.0, 1.0);
        y = (0.0, 1.0);
    }
    let f = Frame::new(x, y);
    let mut svg = String::new();
    header(&mut svg, title, xlabel, ylabel, &f);
    for (i, s) in series.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let mut d = String::new();
        for (j, (px, py)) in s.points.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if j == 0 { "M" } else { "L" }, f.px(*px), f.py(*py));
        }
        let _ = writeln!(svg, r#"<path d="{d}" stroke="{colour}" fill="none" stroke-width="1.2"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{colour}">{}</text>"#,
            MARGIN.0 + 10.0,
            MARGIN.2 + 14.0 * (i + 1) as f64,
            s.label
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One box (quartiles, median, min/max whiskers) per group.
pub fn box_plot(title: &str, xlabel: &str, ylabel: &str, groups: &[(String, Vec<f64>)]) -> String {
    let mut y = bounds(groups.iter().flat_map(|g| g.1.iter().copied()));
    if !y.0.is_finite() {
        y = (0.0, 1.0);
    }
    let f = Frame::new((0.0, groups.len().max(1) as f64), (y.0.min(0.0), y.1));
    let mut svg = String::new();
    header(&mut svg, title, xlabel, ylabel, &f);
    for (i, (label, values)) in groups.iter().enumerate() {
        let cx = f.px(i as f64 + 0.5);
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{label}</text>"#,
            H - MARGIN.3 + 30.0
        );
        let mut v: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        if v.is_empty() {
            continue;
        }
        v.sort_by(|a, b| a.total_cmp(b));
        let [mn, q1, med, q3, mx] = [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| f.py(quantile(&v, q)));
        let hw = 0.3 * (f.px(1.0) - f.px(0.0));
        let _ = writeln!(
            svg,
            r#"<path d="M{cx:.1},{mn:.1} L{cx:.1},{q1:.1} M{cx:.1},{q3:.1} L{cx:.1},{mx:.1}" stroke="black"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<rect x="{:.1}" y="{q3:.1}" width="{:.1}" height="{:.1}" fill="{}" fill-opacity="0.4" stroke="black"/>"#,
            cx - hw,
            2.0 * hw,
            (q1 - q3).max(0.5),
            COLOURS[0]
        );
        let _ = writeln!(
            svg,
            r#"<path d="M{:.1},{med:.1} L{:.1},{med:.1}" stroke="black" stroke-width="2"/>"#,
            cx - hw,
            cx + hw
        );
    }
    svg.push_str("</svg>\n");
    svg
}
