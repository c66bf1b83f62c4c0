//! Minimal SVG rendering for report figures.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 320.0;
const PAD: f64 = 48.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), ys: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = ys.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
        if !lo.is_finite() {
            (lo, hi) = (-1.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let m = 0.05 * (hi - lo);
        let x = if x.1 > x.0 { x } else { (x.0, x.0 + 1.0) };
        Frame { x, y: (lo - m, hi + m) }
    }

    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * PAD)
    }
}

fn open(title: &str, f: &Frame, xlabel: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 10.0, escape(xlabel));
    for (v, anchor_y) in [(f.y.0, H - PAD), (f.y.1, PAD + 10.0)] {
        let _ = writeln!(s, r#"<text x="{}" y="{anchor_y}" text-anchor="end">{v:.4}</text>"#, PAD - 4.0);
    }
    for (v, anchor) in [(f.x.0, "start"), (f.x.1, "end")] {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="{anchor}">{v}</text>"#, f.px(v), H - PAD + 14.0);
    }
    s
}

fn legend(s: &mut String, names: &[&str]) {
    for (i, n) in names.iter().enumerate() {
        let y = PAD + 14.0 + 14.0 * i as f64;
        let x = W - PAD - 110.0;
        let _ = writeln!(s, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/>"#, x + 16.0, COLORS[i % 4]);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, x + 20.0, y + 4.0, escape(n));
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Overlaid line series sharing one time axis. Long series are decimated to
/// about two thousand points per line.
pub fn lines(title: &str, time: &[f64], series: &[(&str, &[f64])]) -> String {
    let x = (time.first().copied().unwrap_or(0.0), time.last().copied().unwrap_or(1.0));
    let f = Frame::new(x, series.iter().flat_map(|(_, v)| v.iter().copied()));
    let mut s = open(title, &f, "t [s]");
    let stride = (time.len() / 2000).max(1);
    for (i, (_, v)) in series.iter().enumerate() {
        let mut pts = String::new();
        for k in (0..v.len().min(time.len())).step_by(stride) {
            if v[k].is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", f.px(time[k]), f.py(v[k]));
            }
        }
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{}" stroke-width="1" points="{}"/>"#, COLORS[i % 4], pts.trim_end());
    }
    legend(&mut s, &series.iter().map(|(n, _)| *n).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}

/// Stem plot over integer lags with a symmetric dashed band.
pub fn stems(title: &str, lags: &[i64], values: &[f64], band: f64) -> String {
    let x = (
        lags.first().copied().unwrap_or(0) as f64 - 0.5,
        lags.last().copied().unwrap_or(0) as f64 + 0.5,
    );
    let f = Frame::new(x, values.iter().copied().chain([band, -band, 0.0]));
    let mut s = open(title, &f, "lag");
    for b in [band, -band] {
        let _ = writeln!(
            s,
            r#"<line x1="{PAD}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
            W - PAD,
            y = f.py(b)
        );
    }
    let zero = f.py(0.0);
    for (l, v) in lags.iter().zip(values) {
        let (px, py) = (f.px(*l as f64), f.py(*v));
        let color = if v.abs() > band { COLORS[1] } else { COLORS[0] };
        let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{zero:.2}" x2="{px:.2}" y2="{py:.2}" stroke="{color}"/>"#);
        let _ = writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="2.5" fill="{color}"/>"#);
    }
    s.push_str("</svg>\n");
    s
}

/// Stacks complete figures vertically into one document.
pub fn stack(panels: &[String]) -> String {
    let total = H * panels.len() as f64;
    let mut s = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{total}" viewBox="0 0 {W} {total}">"#
    );
    s.push('\n');
    for (i, p) in panels.iter().enumerate() {
        let inner = p.replacen("<svg ", &format!(r#"<svg y="{}" "#, H * i as f64), 1);
        s.push_str(&inner);
    }
    s.push_str("</svg>\n");
    s
}
