//! Minimal SVG: scatter, line and bar primitives plus the two layouts the
//! commands need.

use std::fmt::Write;

pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Self { width, height, body: String::new() }
    }

    pub fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str, opacity: f64) {
        let _ = writeln!(self.body, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="{fill}" fill-opacity="{opacity:.3}"/>"#);
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64, dash: bool) {
        let dash = if dash { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" stroke-width="{width:.2}"{dash}/>"#
        );
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, opacity: f64) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{fill}" fill-opacity="{opacity:.3}"/>"#,
            w.max(0.0),
            h.max(0.0)
        );
    }

    pub fn text(&mut self, x: f64, y: f64, s: &str, size: f64, anchor: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="{size:.1}" text-anchor="{anchor}">{}</text>"#,
            esc(s)
        );
    }

    pub fn vtext(&mut self, x: f64, y: f64, s: &str, size: f64) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="{size:.1}" text-anchor="middle" transform="rotate(-90 {x:.2} {y:.2})">{}</text>"#,
            esc(s)
        );
    }

    pub fn render(&self, tag: &str) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<!-- {t} -->\n<metadata>{t}</metadata>\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{b}</svg>\n",
            w = self.width,
            h = self.height,
            t = esc(tag),
            b = self.body
        )
    }
}

#[derive(Debug, Clone, Copy)]
struct Scale {
    lo: f64,
    hi: f64,
    a: f64,
    b: f64,
}

impl Scale {
    /// Data range [lo, hi] onto pixels [a, b] (b < a flips the axis).
    fn new(lo: f64, hi: f64, a: f64, b: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Self { lo, hi, a, b }
    }

    fn at(&self, x: f64) -> f64 {
        self.a + (x - self.lo) / (self.hi - self.lo) * (self.b - self.a)
    }
}

fn padded_range(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = xs.filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.04 * (hi - lo) } else { 0.5 };
    (lo - pad, hi + pad)
}

fn weighted_hist(xs: &[f64], ws: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    let width = (hi - lo) / bins as f64;
    for (x, w) in xs.iter().zip(ws) {
        if x.is_finite() && width > 0.0 {
            h[(((x - lo) / width).floor().max(0.0) as usize).min(bins - 1)] += w;
        }
    }
    h
}

fn ticks(svg: &mut Svg, s: Scale, fixed: f64, horizontal: bool) {
    for k in 0..=4 {
        let v = s.lo + (s.hi - s.lo) * k as f64 / 4.0;
        let p = s.at(v);
        let label = format!("{v:.3}");
        if horizontal {
            svg.line(p, fixed, p, fixed + 4.0, "#333", 1.0, false);
            svg.text(p, fixed + 16.0, &label, 10.0, "middle");
        } else {
            svg.line(fixed - 4.0, p, fixed, p, "#333", 1.0, false);
            svg.text(fixed - 6.0, p + 3.5, &label, 10.0, "end");
        }
    }
}

/// (projection, conditional p) scatter with side histograms and a dashed
/// line at the marginal p-value.
pub fn check_scatter(title: &str, xlabel: &str, xs: &[f64], ps: &[f64], ws: &[f64], marginal_p: f64) -> Svg {
    let (w, h) = (640.0, 560.0);
    let (left, right, top, bottom) = (70.0, 470.0, 150.0, 490.0);
    let mut svg = Svg::new(w, h);
    let (xlo, xhi) = padded_range(xs.iter().copied());
    let sx = Scale::new(xlo, xhi, left, right);
    let sy = Scale::new(0.0, 1.0, bottom, top);
    svg.text(w / 2.0, 22.0, title, 14.0, "middle");
    svg.line(left, bottom, right, bottom, "#333", 1.0, false);
    svg.line(left, bottom, left, top, "#333", 1.0, false);
    ticks(&mut svg, sx, bottom, true);
    ticks(&mut svg, sy, left, false);
    svg.text((left + right) / 2.0, bottom + 36.0, xlabel, 12.0, "middle");
    svg.vtext(22.0, (top + bottom) / 2.0, "conditional p", 12.0);

    let wmax = ws.iter().copied().fold(0.0, f64::max);
    let uniform = ws.iter().all(|&v| (v - ws[0]).abs() <= 1e-12 * ws[0].abs());
    for ((x, p), wt) in xs.iter().zip(ps).zip(ws) {
        if x.is_finite() && p.is_finite() {
            let op = if uniform || wmax <= 0.0 { 0.35 } else { (wt / wmax).clamp(0.03, 1.0) };
            svg.circle(sx.at(*x), sy.at(*p), 2.2, "#1f5fa8", op);
        }
    }
    svg.line(left, sy.at(marginal_p), right, sy.at(marginal_p), "black", 1.5, true);
    svg.text(right - 4.0, sy.at(marginal_p) - 5.0, &format!("marginal p = {marginal_p:.3}"), 10.0, "end");

    let bins = 30;
    let hx = weighted_hist(xs, ws, xlo, xhi, bins);
    let mx = hx.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let bw = (right - left) / bins as f64;
    for (i, c) in hx.iter().enumerate() {
        let hh = c / mx * 90.0;
        svg.rect(left + i as f64 * bw, top - 10.0 - hh, bw - 1.0, hh, "#7a7a7a", 0.8);
    }
    let hp = weighted_hist(ps, ws, 0.0, 1.0, 20);
    let mp = hp.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let bh = (bottom - top) / 20.0;
    for (i, c) in hp.iter().enumerate() {
        let ww = c / mp * 140.0;
        svg.rect(right + 10.0, bottom - (i + 1) as f64 * bh, ww, bh - 1.0, "#7a7a7a", 0.8);
    }
    svg
}

pub struct Series<'a> {
    pub label: &'a str,
    pub counts: &'a [usize],
    pub color: &'a str,
}

/// Overlaid histograms on shared bin edges.
pub fn histograms(title: &str, xlabel: &str, edges: &[f64], series: &[Series]) -> Svg {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 600.0, 60.0, 350.0);
    let mut svg = Svg::new(w, h);
    svg.text(w / 2.0, 22.0, title, 14.0, "middle");
    let (lo, hi) = (edges.first().copied().unwrap_or(0.0), edges.last().copied().unwrap_or(1.0));
    let sx = Scale::new(lo, hi, left, right);
    let cmax = series.iter().flat_map(|s| s.counts.iter().copied()).max().unwrap_or(0).max(1);
    let sy = Scale::new(0.0, cmax as f64, bottom, top);
    svg.line(left, bottom, right, bottom, "#333", 1.0, false);
    svg.line(left, bottom, left, top, "#333", 1.0, false);
    ticks(&mut svg, sx, bottom, true);
    ticks(&mut svg, sy, left, false);
    svg.text((left + right) / 2.0, bottom + 36.0, xlabel, 12.0, "middle");
    svg.vtext(22.0, (top + bottom) / 2.0, "count", 12.0);
    for (k, s) in series.iter().enumerate() {
        for (i, &c) in s.counts.iter().enumerate() {
            let (x0, x1) = (sx.at(edges[i]), sx.at(edges[i + 1]));
            svg.rect(x0, sy.at(c as f64), x1 - x0 - 0.5, bottom - sy.at(c as f64), s.color, 0.45);
        }
        svg.rect(right - 150.0, top + 4.0 + 16.0 * k as f64, 10.0, 10.0, s.color, 0.8);
        svg.text(right - 135.0, top + 13.0 + 16.0 * k as f64, s.label, 11.0, "start");
    }
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_maps_endpoints() {
        let s = Scale::new(0.0, 1.0, 100.0, 0.0);
        assert_eq!(s.at(0.0), 100.0);
        assert_eq!(s.at(1.0), 0.0);
        let flat = Scale::new(2.0, 2.0, 0.0, 10.0);
        assert_eq!(flat.at(2.0), 5.0);
    }

    #[test]
    fn scatter_has_reference_line_and_side_bars() {
        let s = check_scatter("t", "x", &[0.0, 1.0, 2.0], &[0.1, 0.5, 0.9], &[1.0, 1.0, 1.0], 0.5).render("tag");
        assert!(s.contains("stroke-dasharray"));
        assert_eq!(s.matches("<circle").count(), 3);
        assert!(s.matches("<rect").count() > 50);
        assert!(s.contains("<metadata>tag</metadata>"));
    }

    #[test]
    fn text_is_escaped() {
        let mut s = Svg::new(10.0, 10.0);
        s.text(0.0, 0.0, "a<b & c", 10.0, "start");
        assert!(s.render("").contains("a&lt;b &amp; c"));
    }
}
