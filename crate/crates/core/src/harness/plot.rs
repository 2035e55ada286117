//! Self-contained SVG line charts with symmetric error bars.

use std::fmt::Write as _;
use std::path::Path;

use super::experiment::{write_file, SummaryRow};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotPoint {
    pub x: f64,
    pub y: f64,
    /// Half-length of the error bar.
    pub err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<PlotPoint>,
    pub dashed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axes {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Train,
    Test,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// One series per strategy in first-appearance order, x = kept fraction.
pub fn summary_series(rows: &[SummaryRow], metric: Metric) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for r in rows {
        let (y, err) = match metric {
            Metric::Train => (r.train_mean, r.train_std),
            Metric::Test => (r.test_mean, r.test_std),
        };
        if !y.is_finite() {
            continue;
        }
        let p = PlotPoint { x: r.fraction, y, err };
        match out.iter_mut().find(|s| s.label == r.strategy) {
            Some(s) => s.points.push(p),
            None => out.push(Series {
                label: r.strategy.clone(),
                points: vec![p],
                dashed: false,
            }),
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Scale {
    lo: f64,
    hi: f64,
    log: bool,
    px_lo: f64,
    px_hi: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, log: bool, px_lo: f64, px_hi: f64) -> Self {
        let (mut lo, mut hi) = if log { (lo.log10(), hi.log10()) } else { (lo, hi) };
        if hi - lo < 1e-12 {
            let pad = if lo.abs() > 1e-12 { lo.abs() * 0.1 } else { 0.5 };
            lo -= pad;
            hi += pad;
        }
        Self { lo, hi, log, px_lo, px_hi }
    }

    fn px(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }

    fn tick_value(&self, i: usize) -> f64 {
        let v = self.lo + (self.hi - self.lo) * i as f64 / (TICKS - 1) as f64;
        if self.log {
            10f64.powf(v)
        } else {
            v
        }
    }
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Renders `series` into an SVG document.
pub fn render_svg(series: &[Series], axes: &Axes) -> Result<String> {
    let points: Vec<&PlotPoint> = series.iter().flat_map(|s| &s.points).collect();
    if points.is_empty() {
        return Err(Error::pre("cannot plot an empty record set"));
    }
    if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite() && p.err.is_finite())) {
        return Err(Error::pre("plot values must be finite"));
    }
    if axes.log_x && points.iter().any(|p| p.x <= 0.0) {
        return Err(Error::pre("log x axis needs positive x values"));
    }
    let fold = |init: f64, f: fn(f64, f64) -> f64, g: &dyn Fn(&PlotPoint) -> f64| {
        points.iter().map(|p| g(p)).fold(init, f)
    };
    let x_min = fold(f64::INFINITY, f64::min, &|p| p.x);
    let x_max = fold(f64::NEG_INFINITY, f64::max, &|p| p.x);
    let y_min = fold(f64::INFINITY, f64::min, &|p| p.y - p.err.abs()).min(0.0);
    let y_max = fold(f64::NEG_INFINITY, f64::max, &|p| p.y + p.err.abs());
    let plot_right = WIDTH - RIGHT;
    let plot_bottom = HEIGHT - BOTTOM;
    let xs = Scale::new(x_min, x_max, axes.log_x, LEFT, plot_right);
    let ys = Scale::new(y_min, y_max, false, plot_bottom, TOP);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        (LEFT + plot_right) / 2.0,
        escape(&axes.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        plot_right - LEFT,
        plot_bottom - TOP
    );
    for i in 0..TICKS {
        let xv = xs.tick_value(i);
        let px = xs.px(xv);
        let _ = writeln!(
            s,
            r#"<line x1="{px:.1}" y1="{plot_bottom}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            plot_bottom + 5.0,
            plot_bottom + 18.0,
            tick_label(xv)
        );
        let yv = ys.tick_value(i);
        let py = ys.px(yv);
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{py:.1}" x2="{LEFT}" y2="{py:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (LEFT + plot_right) / 2.0,
        HEIGHT - 15.0,
        escape(&axes.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        (TOP + plot_bottom) / 2.0,
        (TOP + plot_bottom) / 2.0,
        escape(&axes.y_label)
    );

    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = if ser.dashed { r#" stroke-dasharray="5,3""# } else { "" };
        let mut pts = ser.points.clone();
        pts.sort_by(|a, b| a.x.total_cmp(&b.x));
        let path: Vec<String> = pts.iter().map(|p| format!("{:.1},{:.1}", xs.px(p.x), ys.px(p.y))).collect();
        let _ = writeln!(s, r#"<g stroke="{color}" fill="{color}">"#);
        if pts.len() > 1 {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke-width="1.5"{dash}/>"#,
                path.join(" ")
            );
        }
        for p in &pts {
            let (px, py) = (xs.px(p.x), ys.px(p.y));
            if p.err > 0.0 {
                let (top, bot) = (ys.px(p.y + p.err), ys.px(p.y - p.err));
                let _ = writeln!(
                    s,
                    r#"<path d="M{px:.1},{top:.1}V{bot:.1}M{:.1},{top:.1}H{:.1}M{:.1},{bot:.1}H{:.1}" fill="none"/>"#,
                    px - 4.0,
                    px + 4.0,
                    px - 4.0,
                    px + 4.0
                );
            }
            let _ = writeln!(s, r#"<circle cx="{px:.1}" cy="{py:.1}" r="3"/>"#);
        }
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = plot_right + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke-width="1.5"{dash}/><text x="{:.1}" y="{:.1}" stroke="none" fill="black">{}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            escape(&ser.label)
        );
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_plot(series: &[Series], axes: &Axes, path: impl AsRef<Path>) -> Result<()> {
    let svg = render_svg(series, axes)?;
    write_file(path.as_ref(), svg.as_bytes())
}
