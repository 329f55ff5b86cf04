//! Static SVG charts: scatter, line and grouped bar.
//!
//! Coordinates are printed with two decimals so output is byte-stable.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#d62728", "#7f7f7f"];

#[derive(Clone, Debug)]
pub struct ScatterSeries {
    pub label: String,
    pub color: String,
    pub radius: f64,
    pub points: Vec<(f64, f64)>,
}

impl ScatterSeries {
    pub fn new(label: impl Into<String>, color: &str, radius: f64, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), color: color.to_string(), radius, points }
    }
}

#[derive(Clone, Debug)]
pub struct LineSeries {
    pub label: String,
    pub color: String,
    pub ys: Vec<f64>,
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Self {
        Frame { x: padded_range(xs), y: padded_range(ys) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { (hi - lo) * 0.05 } else { 0.5 };
    (lo - pad, hi + pad)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(out: &mut String, title: &str) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<text x="{:.2}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    )
    .unwrap();
}

fn axes(out: &mut String, frame: &Frame) {
    let (x0, x1) = (MARGIN, WIDTH - MARGIN);
    let (y0, y1) = (HEIGHT - MARGIN, MARGIN);
    writeln!(
        out,
        r#"<path d="M{x0:.2} {y1:.2} L{x0:.2} {y0:.2} L{x1:.2} {y0:.2}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = frame.x.0 + f * (frame.x.1 - frame.x.0);
        let yv = frame.y.0 + f * (frame.y.1 - frame.y.0);
        let (px, py) = (frame.px(xv), frame.py(yv));
        writeln!(
            out,
            r#"<text x="{px:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            y0 + 16.0,
            tick(xv)
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            py + 4.0,
            tick(yv)
        )
        .unwrap();
    }
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn legend(out: &mut String, entries: &[(&str, &str)]) {
    for (i, (label, color)) in entries.iter().enumerate() {
        let y = MARGIN + 14.0 * i as f64;
        writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{color}"/>"#,
            WIDTH - MARGIN - 110.0,
            y - 9.0
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{:.2}" y="{y:.2}" font-family="sans-serif" font-size="11">{}</text>"#,
            WIDTH - MARGIN - 95.0,
            escape(label)
        )
        .unwrap();
    }
}

pub fn scatter(title: &str, series: &[ScatterSeries]) -> String {
    let frame = Frame::fit(
        series.iter().flat_map(|s| s.points.iter().map(|p| p.0)),
        series.iter().flat_map(|s| s.points.iter().map(|p| p.1)),
    );
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &frame);
    for s in series {
        writeln!(out, r#"<g fill="{}" fill-opacity="0.7">"#, s.color).unwrap();
        for &(x, y) in &s.points {
            writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}"/>"#,
                frame.px(x),
                frame.py(y),
                s.radius
            )
            .unwrap();
        }
        out.push_str("</g>\n");
    }
    let entries: Vec<(&str, &str)> = series.iter().map(|s| (s.label.as_str(), s.color.as_str())).collect();
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}

/// Polylines over a shared x axis, with optional dashed vertical markers.
pub fn line(title: &str, xs: &[f64], series: &[LineSeries], vlines: &[f64]) -> String {
    let frame = Frame::fit(
        xs.iter().copied(),
        series.iter().flat_map(|s| s.ys.iter().copied()),
    );
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &frame);
    for s in series {
        let pts: Vec<String> = xs
            .iter()
            .zip(&s.ys)
            .map(|(&x, &y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            pts.join(" "),
            s.color
        )
        .unwrap();
    }
    for &v in vlines {
        let px = frame.px(v);
        writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{MARGIN:.2}" x2="{px:.2}" y2="{:.2}" stroke="black" stroke-dasharray="4 3"/>"#,
            HEIGHT - MARGIN
        )
        .unwrap();
    }
    let entries: Vec<(&str, &str)> = series.iter().map(|s| (s.label.as_str(), s.color.as_str())).collect();
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}

/// Grouped bars, one group per category, one bar per series.
pub fn bars(title: &str, categories: &[String], series: &[LineSeries]) -> String {
    let frame = Frame::fit(
        [0.0, categories.len().max(1) as f64].into_iter(),
        series.iter().flat_map(|s| s.ys.iter().copied()).chain([0.0]),
    );
    let mut out = String::new();
    open(&mut out, title);
    let zero = frame.py(0.0);
    writeln!(
        out,
        r#"<line x1="{MARGIN:.2}" y1="{zero:.2}" x2="{:.2}" y2="{zero:.2}" stroke="black"/>"#,
        WIDTH - MARGIN
    )
    .unwrap();
    writeln!(
        out,
        r#"<line x1="{MARGIN:.2}" y1="{MARGIN:.2}" x2="{MARGIN:.2}" y2="{:.2}" stroke="black"/>"#,
        HEIGHT - MARGIN
    )
    .unwrap();
    let k = series.len().max(1) as f64;
    let group_px = frame.px(1.0) - frame.px(0.0);
    let bar_px = group_px * 0.8 / k;
    for (c, cat) in categories.iter().enumerate() {
        let left = frame.px(c as f64) + group_px * 0.1;
        for (si, s) in series.iter().enumerate() {
            let Some(&v) = s.ys.get(c) else { continue };
            let y = frame.py(v);
            writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{bar_px:.2}" height="{:.2}" fill="{}"/>"#,
                left + bar_px * si as f64,
                y.min(zero),
                (y - zero).abs(),
                s.color
            )
            .unwrap();
        }
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            left + group_px * 0.4,
            HEIGHT - MARGIN + 16.0,
            escape(cat)
        )
        .unwrap();
    }
    let entries: Vec<(&str, &str)> = series.iter().map(|s| (s.label.as_str(), s.color.as_str())).collect();
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed_and_stable() {
        let s = vec![ScatterSeries::new("a<b", PALETTE[0], 2.0, vec![(0.0, 0.0), (1.0, 2.0)])];
        let a = scatter("t", &s);
        assert_eq!(a, scatter("t", &s));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("a&lt;b"));
        assert_eq!(a.matches("<circle").count(), 2);

        let l = line(
            "p",
            &[0.0, 0.5, 1.0],
            &[LineSeries { label: "f".into(), color: PALETTE[1].into(), ys: vec![0.1, 0.5, 0.9] }],
            &[0.5],
        );
        assert_eq!(l.matches("<polyline").count(), 1);
        assert!(l.contains("stroke-dasharray"));

        let b = bars(
            "b",
            &["x0".into(), "x1".into()],
            &[LineSeries { label: "ig".into(), color: PALETTE[2].into(), ys: vec![-1.0, 2.0] }],
        );
        assert_eq!(b.matches("<rect").count(), 1 + 2 + 1);
    }

    #[test]
    fn empty_input_still_renders() {
        let a = scatter("empty", &[]);
        assert!(a.contains("</svg>"));
    }
}
