//! Minimal headless SVG line plots.

use std::fmt::Write as _;

const W: f64 = 720.0;
const H: f64 = 360.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 44.0;
const MAX_POINTS: usize = 2000;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

pub struct LinePlot<'a> {
    pub title: &'a str,
    pub y_label: &'a str,
    pub t: &'a [f64],
    pub series: Vec<Series>,
    /// Plot `log10 |v|` instead of `v`.
    pub log_y: bool,
    /// Embedded as `<desc>`.
    pub note: &'a str,
}

fn nice_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= n as f64).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl LinePlot<'_> {
    fn transformed(&self) -> Vec<Vec<f64>> {
        self.series
            .iter()
            .map(|s| {
                s.values
                    .iter()
                    .map(|v| if self.log_y { if *v != 0.0 { v.abs().log10() } else { f64::NAN } } else { *v })
                    .collect()
            })
            .collect()
    }

    pub fn to_svg(&self) -> String {
        let ys = self.transformed();
        let finite = || ys.iter().flatten().copied().filter(|v| v.is_finite());
        let (mut y0, mut y1) = finite().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !(y0 <= y1) {
            (y0, y1) = (-1.0, 1.0);
        }
        if y1 - y0 < 1e-12 * (1.0 + y0.abs()) {
            (y0, y1) = (y0 - 0.5, y1 + 0.5);
        }
        let pad = 0.05 * (y1 - y0);
        (y0, y1) = (y0 - pad, y1 + pad);
        let (t0, t1) = (self.t.first().copied().unwrap_or(0.0), self.t.last().copied().unwrap_or(1.0));
        let t1 = if t1 > t0 { t1 } else { t0 + 1.0 };
        let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
        let px = |t: f64| LEFT + (t - t0) / (t1 - t0) * pw;
        let py = |v: f64| TOP + (y1 - v) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, "<desc>{}</desc>", escape(self.note));
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(self.title));
        for t in nice_ticks(t0, t1, 8) {
            let x = px(t);
            let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{}" stroke="#e5e5e5"/>"##, TOP + ph);
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, TOP + ph + 16.0, fmt_tick(t));
        }
        for v in nice_ticks(y0, y1, 6) {
            let y = py(v);
            let label = if self.log_y { format!("1e{}", fmt_tick(v)) } else { fmt_tick(v) };
            let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#e5e5e5"/>"##, LEFT + pw);
            let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#, LEFT - 6.0, y + 4.0);
        }
        let _ = writeln!(s, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">t [s]</text>"#, LEFT + pw / 2.0, H - 8.0);
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(self.y_label)
        );
        let stride = self.t.len().div_ceil(MAX_POINTS).max(1);
        for (k, (series, vals)) in self.series.iter().zip(&ys).enumerate() {
            let color = COLORS[k % COLORS.len()];
            // break the line at non-finite samples
            let mut runs: Vec<String> = vec![String::new()];
            for i in (0..self.t.len().min(vals.len())).step_by(stride) {
                let v = vals[i];
                if v.is_finite() {
                    let run = runs.last_mut().unwrap();
                    let _ = write!(run, "{:.2},{:.2} ", px(self.t[i]), py(v));
                } else if !runs.last().unwrap().is_empty() {
                    runs.push(String::new());
                }
            }
            for run in runs.iter().filter(|r| !r.is_empty()) {
                let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.4" points="{}"/>"#, run.trim_end());
            }
            let (lx, ly) = (LEFT + pw - 90.0, TOP + 16.0 + 16.0 * k as f64);
            let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 18.0);
            let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 24.0, ly + 4.0, escape(&series.label));
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_cover_range() {
        let t = nice_ticks(0.0, 30.0, 8);
        assert_eq!(t.first(), Some(&0.0));
        assert_eq!(t.last(), Some(&30.0));
        assert!(t.len() <= 9);
    }

    #[test]
    fn svg_has_one_polyline_per_series_and_breaks_at_nan() {
        let t: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let plot = LinePlot {
            title: "g",
            y_label: "|g|",
            t: &t,
            series: vec![
                Series { label: "a".into(), values: t.iter().map(|v| v.sin()).collect() },
                Series { label: "b<".into(), values: t.iter().map(|v| if *v == 5.0 { f64::NAN } else { 1.0 }).collect() },
            ],
            log_y: false,
            note: "hash",
        };
        let svg = plot.to_svg();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains("b&lt;") && svg.contains("<desc>hash</desc>"));
    }

    #[test]
    fn log_axis_skips_zeros() {
        let t = [0.0, 1.0, 2.0];
        let plot = LinePlot { title: "", y_label: "", t: &t, series: vec![Series { label: "g".into(), values: vec![1.0, 0.0, 1e-3] }], log_y: true, note: "" };
        assert_eq!(plot.to_svg().matches("<polyline").count(), 2);
    }
}
