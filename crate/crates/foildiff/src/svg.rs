//! Minimal SVG charts: overlaid histograms, box plots, and a scatter with a
//! best-fit line and a one-residual-std band.

use std::fmt::Write;

use foildiff_core::eval::{BoxStats, Histogram};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else if a >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.4}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Linear map from a data interval onto the plot area.
#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    start: f64,
    end: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, start: f64, end: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Self { lo, hi, start, end }
    }

    fn padded(lo: f64, hi: f64, start: f64, end: f64) -> Self {
        let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
        Self::new(lo - pad, hi + pad, start, end)
    }

    fn map(&self, v: f64) -> f64 {
        self.start + (v - self.lo) / (self.hi - self.lo) * (self.end - self.start)
    }

    fn ticks(&self, n: usize) -> Vec<f64> {
        (0..=n).map(|k| self.lo + (self.hi - self.lo) * k as f64 / n as f64).collect()
    }
}

struct Canvas {
    out: String,
    x: Axis,
    y: Axis,
}

impl Canvas {
    fn new(title: &str, x_label: &str, y_label: &str, x: Axis, y: Axis) -> Self {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            num(WIDTH / 2.0),
            escape(title)
        );
        let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
        let _ = writeln!(
            out,
            r#"<path d="M{} {} L{} {} L{} {}" fill="none" stroke="black"/>"#,
            num(x0),
            num(y1),
            num(x0),
            num(y0),
            num(x1),
            num(y0)
        );
        for t in x.ticks(4) {
            let px = num(x.map(t));
            let _ = writeln!(
                out,
                r#"<line x1="{px}" y1="{}" x2="{px}" y2="{}" stroke="black"/><text x="{px}" y="{}" text-anchor="middle">{}</text>"#,
                num(y0),
                num(y0 + 5.0),
                num(y0 + 18.0),
                label(t)
            );
        }
        for t in y.ticks(4) {
            let py = num(y.map(t));
            let _ = writeln!(
                out,
                r#"<line x1="{}" y1="{py}" x2="{}" y2="{py}" stroke="black"/><text x="{}" y="{py}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
                num(x0 - 5.0),
                num(x0),
                num(x0 - 8.0),
                label(t)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            num((x0 + x1) / 2.0),
            num(HEIGHT - 18.0),
            escape(x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            num((y0 + y1) / 2.0),
            num((y0 + y1) / 2.0),
            escape(y_label)
        );
        Self { out, x, y }
    }

    fn legend(&mut self, names: &[&str]) {
        for (k, name) in names.iter().enumerate() {
            let y = TOP + 8.0 + 16.0 * k as f64;
            let x = WIDTH - RIGHT - 150.0;
            let _ = writeln!(
                self.out,
                r#"<rect x="{}" y="{}" width="10" height="10" fill="{}" fill-opacity="0.6"/><text x="{}" y="{}">{}</text>"#,
                num(x),
                num(y),
                COLORS[k % COLORS.len()],
                num(x + 16.0),
                num(y + 9.0),
                escape(name)
            );
        }
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// Histograms over shared bins, drawn as translucent overlaid bars.
pub fn histograms(title: &str, x_label: &str, series: &[(&str, &Histogram)]) -> String {
    let Some((_, first)) = series.first() else {
        return Canvas::new(title, x_label, "count", Axis::new(0.0, 1.0, LEFT, WIDTH - RIGHT), Axis::new(0.0, 1.0, HEIGHT - BOTTOM, TOP)).finish();
    };
    let peak = series
        .iter()
        .flat_map(|(_, h)| h.counts.iter().copied())
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let x = Axis::new(first.lo, first.hi, LEFT, WIDTH - RIGHT);
    let y = Axis::new(0.0, peak, HEIGHT - BOTTOM, TOP);
    let mut c = Canvas::new(title, x_label, "count", x, y);
    for (k, (_, h)) in series.iter().enumerate() {
        let w = h.bin_width();
        for (b, count) in h.counts.iter().enumerate().filter(|(_, n)| **n > 0) {
            let left = c.x.map(h.lo + w * b as f64);
            let right = c.x.map(h.lo + w * (b + 1) as f64);
            let top = c.y.map(*count as f64);
            let _ = writeln!(
                c.out,
                r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}" fill-opacity="0.5"/>"#,
                num(left),
                num(top),
                num((right - left).max(0.5)),
                num(c.y.map(0.0) - top),
                COLORS[k % COLORS.len()]
            );
        }
    }
    let names: Vec<&str> = series.iter().map(|(n, _)| *n).collect();
    c.legend(&names);
    c.finish()
}

/// Box plots with whiskers and outlier dots, one per named group.
pub fn box_plots(title: &str, y_label: &str, groups: &[(&str, &BoxStats)]) -> String {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, b) in groups {
        for v in [b.whisker_lo, b.whisker_hi].iter().chain(&b.outliers) {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if lo > hi {
        (lo, hi) = (0.0, 1.0);
    }
    let n = groups.len().max(1) as f64;
    let x = Axis::new(0.0, n, LEFT, WIDTH - RIGHT);
    let y = Axis::padded(lo, hi, HEIGHT - BOTTOM, TOP);
    let mut c = Canvas::new(title, "", y_label, x, y);
    let slot = (WIDTH - RIGHT - LEFT) / n;
    for (k, (name, b)) in groups.iter().enumerate() {
        let cx = LEFT + slot * (k as f64 + 0.5);
        let half = (slot * 0.25).min(60.0);
        let color = COLORS[k % COLORS.len()];
        let (q1, q3, med) = (c.y.map(b.q1), c.y.map(b.q3), c.y.map(b.median));
        let (wl, wh) = (c.y.map(b.whisker_lo), c.y.map(b.whisker_hi));
        let _ = writeln!(
            c.out,
            r#"<line x1="{cx}" y1="{}" x2="{cx}" y2="{}" stroke="black"/><line x1="{cx}" y1="{}" x2="{cx}" y2="{}" stroke="black"/>"#,
            num(wl),
            num(q1),
            num(q3),
            num(wh),
            cx = num(cx)
        );
        for w in [wl, wh] {
            let _ = writeln!(
                c.out,
                r#"<line x1="{}" y1="{w}" x2="{}" y2="{w}" stroke="black"/>"#,
                num(cx - half / 2.0),
                num(cx + half / 2.0),
                w = num(w)
            );
        }
        let _ = writeln!(
            c.out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{color}" fill-opacity="0.5" stroke="black"/><line x1="{}" y1="{med}" x2="{}" y2="{med}" stroke="black" stroke-width="2"/>"#,
            num(cx - half),
            num(q3),
            num(2.0 * half),
            num((q1 - q3).max(0.5)),
            num(cx - half),
            num(cx + half),
            med = num(med)
        );
        for o in &b.outliers {
            let _ = writeln!(
                c.out,
                r#"<circle cx="{}" cy="{}" r="2.5" fill="none" stroke="{color}"/>"#,
                num(cx),
                num(c.y.map(*o))
            );
        }
        let _ = writeln!(
            c.out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            num(cx),
            num(HEIGHT - BOTTOM + 34.0),
            escape(name)
        );
    }
    c.finish()
}

pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub residual_std: f64,
}

/// Scatter of `(x, y)` points with the best-fit line, a band of one
/// residual standard deviation around it, and the dashed identity line.
pub fn scatter_fit(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)], fit: &Fit) -> String {
    let (mut xl, mut xh, mut yl, mut yh) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in points {
        xl = xl.min(*x);
        xh = xh.max(*x);
        yl = yl.min(*y);
        yh = yh.max(*y);
    }
    if xl > xh {
        (xl, xh, yl, yh) = (0.0, 1.0, 0.0, 1.0);
    }
    let line = |x: f64| fit.intercept + fit.slope * x;
    for v in [line(xl), line(xh)] {
        yl = yl.min(v - fit.residual_std);
        yh = yh.max(v + fit.residual_std);
    }
    yl = yl.min(xl);
    yh = yh.max(xh);
    let x = Axis::padded(xl, xh, LEFT, WIDTH - RIGHT);
    let y = Axis::padded(yl, yh, HEIGHT - BOTTOM, TOP);
    let mut c = Canvas::new(title, x_label, y_label, x, y);
    let (a, b) = (xl, xh);
    let _ = writeln!(
        c.out,
        r##"<path d="M{} {} L{} {} L{} {} L{} {} Z" fill="#ff7f0e" fill-opacity="0.2"/>"##,
        num(c.x.map(a)),
        num(c.y.map(line(a) + fit.residual_std)),
        num(c.x.map(b)),
        num(c.y.map(line(b) + fit.residual_std)),
        num(c.x.map(b)),
        num(c.y.map(line(b) - fit.residual_std)),
        num(c.x.map(a)),
        num(c.y.map(line(a) - fit.residual_std)),
    );
    let _ = writeln!(
        c.out,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#ff7f0e" stroke-width="2"/>"##,
        num(c.x.map(a)),
        num(c.y.map(line(a))),
        num(c.x.map(b)),
        num(c.y.map(line(b)))
    );
    let _ = writeln!(
        c.out,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-dasharray="4 3"/>"#,
        num(c.x.map(a)),
        num(c.y.map(a)),
        num(c.x.map(b)),
        num(c.y.map(b))
    );
    for (px, py) in points {
        let _ = writeln!(
            c.out,
            r#"<circle cx="{}" cy="{}" r="3" fill="{}" fill-opacity="0.7"/>"#,
            num(c.x.map(*px)),
            num(c.y.map(*py)),
            COLORS[0]
        );
    }
    let _ = writeln!(
        c.out,
        r#"<text x="{}" y="{}">slope {} intercept {}</text>"#,
        num(LEFT + 10.0),
        num(TOP + 14.0),
        label(fit.slope),
        label(fit.intercept)
    );
    c.finish()
}
