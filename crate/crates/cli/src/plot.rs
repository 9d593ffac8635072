//! Static SVG figures. Output depends only on the data, so reruns are
//! byte-identical.

use std::fmt::Write;

pub const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"];

const PANEL_W: f64 = 380.0;
const PANEL_H: f64 = 270.0;
const MARGIN_L: f64 = 52.0;
const MARGIN_R: f64 = 12.0;
const MARGIN_T: f64 = 26.0;
const MARGIN_B: f64 = 38.0;

#[derive(Clone, Debug)]
pub enum Mark {
    Line(Vec<(f64, f64)>),
    /// Shaded region between `lo` and `hi` at each x.
    Band { x: Vec<f64>, lo: Vec<f64>, hi: Vec<f64> },
    Points(Vec<(f64, f64)>),
    /// One bar per bin; `edges` has one more entry than `heights`.
    Bars { edges: Vec<f64>, heights: Vec<f64> },
}

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub color: &'static str,
    pub mark: Mark,
}

#[derive(Clone, Debug, Default)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

struct Bounds {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Bounds {
    fn of(panel: &Panel) -> Bounds {
        let mut b = Bounds { x0: f64::INFINITY, x1: f64::NEG_INFINITY, y0: f64::INFINITY, y1: f64::NEG_INFINITY };
        let mut add = |x: f64, y: f64| {
            if x.is_finite() && y.is_finite() {
                b.x0 = b.x0.min(x);
                b.x1 = b.x1.max(x);
                b.y0 = b.y0.min(y);
                b.y1 = b.y1.max(y);
            }
        };
        for s in &panel.series {
            match &s.mark {
                Mark::Line(p) | Mark::Points(p) => p.iter().for_each(|&(x, y)| add(x, y)),
                Mark::Band { x, lo, hi } => {
                    for i in 0..x.len() {
                        add(x[i], lo[i]);
                        add(x[i], hi[i]);
                    }
                }
                Mark::Bars { edges, heights } => {
                    for (i, &h) in heights.iter().enumerate() {
                        add(edges[i], 0.0);
                        add(edges[i + 1], h);
                    }
                }
            }
        }
        if !b.x0.is_finite() {
            return Bounds { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
        }
        if b.x1 - b.x0 < 1e-12 {
            b.x0 -= 0.5;
            b.x1 += 0.5;
        }
        if b.y1 - b.y0 < 1e-12 {
            b.y0 -= 0.5;
            b.y1 += 0.5;
        }
        let pad = 0.04 * (b.y1 - b.y0);
        b.y1 += pad;
        if b.y0 != 0.0 {
            b.y0 -= pad;
        }
        b
    }
}

/// Roughly five round-numbered ticks covering `[lo, hi]`.
pub fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{:.3}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".to_owned() } else { s.to_owned() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn draw_panel(out: &mut String, panel: &Panel, ox: f64, oy: f64) {
    let b = Bounds::of(panel);
    let pw = PANEL_W - MARGIN_L - MARGIN_R;
    let ph = PANEL_H - MARGIN_T - MARGIN_B;
    let (left, top) = (ox + MARGIN_L, oy + MARGIN_T);
    let sx = |x: f64| left + (x - b.x0) / (b.x1 - b.x0) * pw;
    let sy = |y: f64| top + ph - (y - b.y0) / (b.y1 - b.y0) * ph;

    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">{}</text>"#, left + pw / 2.0, oy + 17.0, escape(&panel.title));
    let _ = writeln!(out, r##"<rect x="{left:.2}" y="{top:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#333"/>"##);
    for t in ticks(b.x0, b.x1) {
        let x = sx(t);
        let _ = writeln!(out, r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333"/>"##, top + ph, top + ph + 4.0);
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#, top + ph + 15.0, fmt_tick(t));
    }
    for t in ticks(b.y0, b.y1) {
        let y = sy(t);
        let _ = writeln!(out, r##"<line x1="{:.2}" y1="{y:.2}" x2="{left:.2}" y2="{y:.2}" stroke="#333"/>"##, left - 4.0);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="10">{}</text>"#, left - 6.0, y + 3.5, fmt_tick(t));
    }
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text>"#, left + pw / 2.0, oy + PANEL_H - 6.0, escape(&panel.x_label));
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11" transform="rotate(-90 {:.2} {:.2})">{}</text>"#,
        ox + 13.0,
        top + ph / 2.0,
        ox + 13.0,
        top + ph / 2.0,
        escape(&panel.y_label)
    );

    for s in &panel.series {
        match &s.mark {
            Mark::Line(p) => {
                let pts: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#, pts.join(" "), s.color);
            }
            Mark::Band { x, lo, hi } => {
                let mut pts: Vec<String> = x.iter().zip(hi).map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                pts.extend(x.iter().zip(lo).rev().map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y))));
                let _ = writeln!(out, r#"<polygon points="{}" fill="{}" fill-opacity="0.2" stroke="none"/>"#, pts.join(" "), s.color);
            }
            Mark::Points(p) => {
                for &(x, y) in p {
                    let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="1.8" fill="{}" fill-opacity="0.6"/>"#, sx(x), sy(y), s.color);
                }
            }
            Mark::Bars { edges, heights } => {
                for (i, &h) in heights.iter().enumerate() {
                    let (x0, x1) = (sx(edges[i]), sx(edges[i + 1]));
                    let (y0, y1) = (sy(h), sy(0.0_f64.max(b.y0)));
                    let _ = writeln!(
                        out,
                        r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{}" fill-opacity="0.45"/>"#,
                        (x1 - x0).max(0.0),
                        (y1 - y0).max(0.0),
                        s.color
                    );
                }
            }
        }
    }

    let mut seen: Vec<&str> = Vec::new();
    for s in &panel.series {
        if s.name.is_empty() || seen.contains(&s.name.as_str()) {
            continue;
        }
        let y = top + 12.0 + 13.0 * seen.len() as f64;
        let x = left + pw - 110.0;
        let _ = writeln!(out, r#"<rect x="{x:.2}" y="{:.2}" width="10" height="8" fill="{}"/>"#, y - 8.0, s.color);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{y:.2}" font-size="10">{}</text>"#, x + 14.0, escape(&s.name));
        seen.push(&s.name);
    }
}

/// Lays panels out row-major in a grid with `columns` columns.
pub fn render(panels: &[Panel], columns: usize) -> String {
    let columns = columns.max(1);
    let rows = panels.len().div_ceil(columns).max(1);
    let (w, h) = (PANEL_W * columns as f64, PANEL_H * rows as f64);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#);
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        draw_panel(&mut out, p, PANEL_W * (i % columns) as f64, PANEL_H * (i / columns) as f64);
    }
    out.push_str("</svg>\n");
    out
}
