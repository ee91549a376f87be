//! Minimal line plots over bar indices, 800x300, no dependencies.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 300.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 45.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

pub struct Series<'a> {
    pub label: &'a str,
    pub values: &'a [f64],
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn num(x: f64) -> String {
    let s = format!("{x:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn tick_label(x: f64) -> String {
    if x != 0.0 && (x.abs() >= 1e5 || x.abs() < 1e-2) {
        format!("{x:.2e}")
    } else {
        num(x)
    }
}

/// Polylines of each series against bar index, with labelled axes and a
/// legend. Non-finite values are skipped.
pub fn line_plot(title: &str, series: &[Series]) -> String {
    let finite = || series.iter().flat_map(|s| s.values.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        (lo, hi) = (lo - 1.0, hi + 1.0);
    }
    let bars = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let span = (bars.max(2) - 1) as f64;
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let x = |i: usize| LEFT + pw * i as f64 / span;
    let y = |v: f64| TOP + ph * (1.0 - (v - lo) / (hi - lo));

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#, WIDTH / 2.0, escape(title));
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for i in 0..bars {
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{i}</text>"#, num(x(i)), y1 + 15.0);
    }
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, x0 - 5.0, num(y(v) + 4.0), tick_label(v));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">bar index</text>"#, (x0 + x1) / 2.0, HEIGHT - 8.0);
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">tension</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    for (n, s) in series.iter().enumerate() {
        let color = COLORS[n % COLORS.len()];
        let points: Vec<String> =
            s.values.iter().enumerate().filter(|(_, v)| v.is_finite()).map(|(i, &v)| format!("{},{}", num(x(i)), num(y(v)))).collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, points.join(" "));
        let ly = TOP + 14.0 * n as f64;
        let _ = writeln!(out, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, x1 - 110.0, x1 - 90.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, x1 - 85.0, ly + 4.0, escape(s.label));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_has_fixed_viewbox_and_one_polyline_per_series() {
        let svg = line_plot("a & b", &[Series { label: "target", values: &[1.0, 2.0, 3.0] }, Series { label: "c<1>", values: &[3.0, 2.0] }]);
        assert!(svg.contains(r#"viewBox="0 0 800 300""#));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a &amp; b") && svg.contains("c&lt;1&gt;"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn flat_and_empty_series_still_render() {
        assert!(line_plot("flat", &[Series { label: "x", values: &[5.0, 5.0] }]).contains("<polyline"));
        assert!(line_plot("empty", &[]).contains("</svg>"));
    }
}
