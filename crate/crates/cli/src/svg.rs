//! Minimal deterministic SVG line charts.
//!
//! Output depends only on the figure contents: numbers are printed with a
//! fixed precision and elements are emitted in series order.

use std::fmt::Write;

const PLOT_WIDTH: f64 = 440.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 80.0;
const MIN_MARGIN_RIGHT: f64 = 200.0;
/// Rough advance width of one legend character at font size 12.
const CHAR_WIDTH: f64 = 7.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f2933", "#2b6cb0", "#c05621", "#2f855a", "#9b2c2c", "#6b46c1", "#b7791f", "#4a5568"];

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Shaded band as `(x, lo, hi)`.
    pub band: Vec<(f64, f64, f64)>,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series { label: label.into(), points, band: Vec::new(), dashed: false }
    }

    pub fn with_band(mut self, band: Vec<(f64, f64, f64)>) -> Self {
        self.band = band;
        self
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

#[derive(Clone, Debug)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
    /// Horizontal reference line.
    pub reference_y: Option<f64>,
}

#[derive(Clone, Copy, Debug)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| usable(*v, log)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            let pad = if log { 0.5 } else { lo.abs().max(1.0) * 0.1 };
            (lo, hi) = (lo - pad, hi + pad);
        } else if log {
            (lo, hi) = (lo.floor().min(lo - 0.05), hi.ceil().max(hi + 0.05));
        } else {
            let pad = 0.05 * (hi - lo);
            (lo, hi) = (lo - pad, hi + pad);
        }
        Axis { lo, hi, log }
    }

    /// Position in `[0, 1]`, or `None` for values the axis cannot show.
    fn unit(&self, v: f64) -> Option<f64> {
        if !usable(v, self.log) {
            return None;
        }
        let v = if self.log { v.log10() } else { v };
        Some((v - self.lo) / (self.hi - self.lo))
    }

    fn clamp_unit(&self, v: f64) -> f64 {
        match self.unit(v) {
            Some(u) => u.clamp(0.0, 1.0),
            None if v.is_nan() => 0.0,
            None if v == f64::INFINITY => 1.0,
            None => 0.0,
        }
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            let step = ((b - a) / 6).max(1);
            (a..=b).step_by(step as usize).map(|e| 10f64.powi(e)).collect()
        } else {
            let raw = (self.hi - self.lo) / 6.0;
            let mag = 10f64.powf(raw.log10().floor());
            let step = [1.0, 2.0, 5.0, 10.0].iter().map(|k| k * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
            let first = (self.lo / step).ceil() as i64;
            let last = (self.hi / step).floor() as i64;
            (first..=last).map(|k| k as f64 * step).collect()
        }
    }
}

fn usable(v: f64, log: bool) -> bool {
    v.is_finite() && (!log || v > 0.0)
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Splits a series into maximal runs of plottable points.
fn segments(points: &[(f64, f64)], x: &Axis, y: &Axis) -> Vec<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for &(px, py) in points {
        match (x.unit(px), y.unit(py)) {
            (Some(u), Some(v)) => cur.push((u, v)),
            _ => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

pub fn render(fig: &Figure) -> String {
    let xs = fig.series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let x = Axis::fit(xs, fig.log_x);
    let ys = fig
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1).chain(s.band.iter().flat_map(|b| [b.1, b.2])))
        .chain(fig.reference_y);
    let y = Axis::fit(ys, fig.log_y);

    let longest = fig.series.iter().map(|s| s.label.chars().count()).max().unwrap_or(0);
    let margin_right = MIN_MARGIN_RIGHT.max(60.0 + CHAR_WIDTH * longest as f64).ceil();
    let width = MARGIN_LEFT + PLOT_WIDTH + margin_right;
    let pw = PLOT_WIDTH;
    let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |u: f64| MARGIN_LEFT + u * pw;
    let sy = |v: f64| MARGIN_TOP + (1.0 - v) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{HEIGHT}" viewBox="0 0 {width} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#, MARGIN_LEFT + pw / 2.0, escape(&fig.title));

    // gridlines and tick labels
    let _ = writeln!(s, r##"<g stroke="#e2e8f0" stroke-width="1">"##);
    for t in x.ticks() {
        if let Some(u) = x.unit(t) {
            let _ = writeln!(s, r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}"/>"#, sx(u), sy(0.0), sy(1.0));
        }
    }
    for t in y.ticks() {
        if let Some(v) = y.unit(t) {
            let _ = writeln!(s, r#"<line x1="{:.2}" y1="{2:.2}" x2="{1:.2}" y2="{2:.2}"/>"#, sx(0.0), sx(1.0), sy(v));
        }
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r##"<g fill="#1a202c">"##);
    for t in x.ticks() {
        if let Some(u) = x.unit(t) {
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, sx(u), sy(0.0) + 18.0, tick_label(t));
        }
    }
    for t in y.ticks() {
        if let Some(v) = y.unit(t) {
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, sx(0.0) - 6.0, sy(v) + 4.0, tick_label(t));
        }
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, MARGIN_LEFT + pw / 2.0, HEIGHT - 16.0, escape(&fig.x_label));
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0:.2}" text-anchor="middle" transform="rotate(-90 18 {0:.2})">{1}</text>"#,
        MARGIN_TOP + ph / 2.0,
        escape(&fig.y_label)
    );
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r##"<rect x="{:.2}" y="{:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#1a202c"/>"##, sx(0.0), sy(1.0));

    if let Some(r) = fig.reference_y {
        if let Some(v) = y.unit(r) {
            let _ = writeln!(
                s,
                r##"<line class="reference" x1="{:.2}" y1="{2:.2}" x2="{1:.2}" y2="{2:.2}" stroke="#718096" stroke-width="1.5" stroke-dasharray="2 3"/>"##,
                sx(0.0),
                sx(1.0),
                sy(v)
            );
        }
    }

    for (k, series) in fig.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let band: Vec<(f64, f64, f64)> = series
            .band
            .iter()
            .filter_map(|&(bx, lo, hi)| x.unit(bx).map(|u| (u, y.clamp_unit(lo), y.clamp_unit(hi))))
            .collect();
        if band.len() >= 2 {
            let mut pts = String::new();
            for &(u, _, hi) in &band {
                let _ = write!(pts, "{:.2},{:.2} ", sx(u), sy(hi));
            }
            for &(u, lo, _) in band.iter().rev() {
                let _ = write!(pts, "{:.2},{:.2} ", sx(u), sy(lo));
            }
            let _ = writeln!(s, r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#, pts.trim_end());
        }
        let dash = if series.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        for seg in segments(&series.points, &x, &y) {
            let mut pts = String::new();
            for (u, v) in &seg {
                let _ = write!(pts, "{:.2},{:.2} ", sx(*u), sy(*v));
            }
            let _ = writeln!(
                s,
                r#"<polyline class="series" points="{}" fill="none" stroke="{color}" stroke-width="1.8"{dash}/>"#,
                pts.trim_end()
            );
        }
        let ly = MARGIN_TOP + 10.0 + 18.0 * k as f64;
        let lx = width - margin_right + 14.0;
        let _ = writeln!(s, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"{dash}/>"#, lx + 22.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 28.0, ly + 4.0, escape(&series.label));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig(series: Vec<Series>) -> Figure {
        Figure {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x: true,
            log_y: true,
            series,
            reference_y: None,
        }
    }

    #[test]
    fn one_polyline_per_series_with_all_vertices() {
        let pts: Vec<(f64, f64)> = (1..=40).map(|k| (k as f64, 1.0 / k as f64)).collect();
        let svg = render(&fig(vec![Series::new("a", pts.clone()), Series::new("b", pts)]));
        let lines: Vec<&str> = svg.lines().filter(|l| l.contains(r#"class="series""#)).collect();
        assert_eq!(lines.len(), 2);
        for l in lines {
            let inner = l.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
            assert_eq!(inner.split(' ').count(), 40);
        }
    }

    #[test]
    fn non_finite_points_break_the_line() {
        let pts = vec![(1.0, 1.0), (2.0, f64::INFINITY), (3.0, 2.0), (4.0, 3.0)];
        let svg = render(&fig(vec![Series::new("a", pts)]));
        assert_eq!(svg.matches(r#"class="series""#).count(), 2);
    }

    #[test]
    fn rendering_is_deterministic_and_escaped() {
        let f = fig(vec![Series::new("<qtd & td>", vec![(1.0, 2.0), (10.0, 3.0)]).with_band(vec![(1.0, 1.0, 3.0), (10.0, 2.0, 4.0)])]);
        assert_eq!(render(&f), render(&f));
        assert!(render(&f).contains("&lt;qtd &amp; td&gt;"));
        assert!(render(&f).contains(r#"class="band""#));
    }

    #[test]
    fn constant_series_gets_a_visible_range() {
        let mut f = fig(vec![Series::new("one", vec![(10.0, 1.0), (100.0, 1.0)])]);
        f.reference_y = Some(1.0);
        let svg = render(&f);
        assert!(svg.contains(r#"class="reference""#));
        assert!(!svg.contains("NaN"));
    }
}
