//! Minimal SVG line and scatter plots.

use std::fmt::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Line,
    Dots,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub mark: Mark,
}

#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

const W: f64 = 720.0;
const H: f64 = 480.0;
const PAD: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.0e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

impl Plot {
    pub fn render(&self) -> String {
        let ty = |y: f64| if self.log_y { y.max(1e-300).log10() } else { y };
        let pts = self
            .series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter(|p| p.0.is_finite() && ty(p.1).is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(ty(y));
            y1 = y1.max(ty(y));
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 == x0 {
            x1 = x0 + 1.0;
        }
        if y1 == y0 {
            y1 = y0 + 1.0;
        }
        let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
        let sy = |y: f64| H - PAD - (ty(y) - y0) / (y1 - y0) * (H - 2.0 * PAD);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, self.title);
        let _ = writeln!(
            s,
            r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - 2.0 * PAD,
            H - 2.0 * PAD
        );
        for i in 0..=4 {
            let fx = x0 + (x1 - x0) * i as f64 / 4.0;
            let fy = y0 + (y1 - y0) * i as f64 / 4.0;
            let px = PAD + (W - 2.0 * PAD) * i as f64 / 4.0;
            let py = H - PAD - (H - 2.0 * PAD) * i as f64 / 4.0;
            let ylab = if self.log_y { fmt_tick(10f64.powf(fy)) } else { fmt_tick(fy) };
            let _ = writeln!(s, r#"<text x="{px}" y="{}" text-anchor="middle">{}</text>"#, H - PAD + 16.0, fmt_tick(fx));
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{ylab}</text>"#, PAD - 6.0, py + 4.0);
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, self.x_label);
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            self.y_label
        );
        for (k, series) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let visible: Vec<(f64, f64)> = series
                .points
                .iter()
                .filter(|p| p.0.is_finite() && ty(p.1).is_finite())
                .map(|&(x, y)| (sx(x), sy(y)))
                .collect();
            match series.mark {
                Mark::Line => {
                    let path: Vec<String> = visible.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                    let _ = writeln!(
                        s,
                        r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                        path.join(" ")
                    );
                }
                Mark::Dots => {
                    for (x, y) in &visible {
                        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="0.8" fill="{color}"/>"#);
                    }
                }
            }
            let ly = PAD + 16.0 + 16.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#,
                W - PAD - 110.0,
                series.label
            );
        }
        s.push_str("</svg>\n");
        s
    }
}
