//! Log-log convergence plots as standalone SVG.

use std::fmt::Write;

use crate::error::{BenchError, Result};

/// Added to `F(x_t) − F_min` before taking logs.
pub const PLOT_EPS: f64 = 1e-16;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

/// `log10(F(x_t) − F_min + ε)` against `log10(t + 1)`, one polyline per
/// trace. `F_min` is the smallest value over all traces.
pub fn emit_plot<S: AsRef<str>>(traces: &[(S, &[f64])]) -> Result<String> {
    if traces.is_empty() || traces.iter().all(|(_, t)| t.is_empty()) {
        return Err(BenchError::EmptyOutput);
    }
    let f_min = traces
        .iter()
        .flat_map(|(_, t)| t.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let series: Vec<Vec<(f64, f64)>> = traces
        .iter()
        .map(|(_, t)| {
            t.iter()
                .enumerate()
                .map(|(i, f)| (((i + 1) as f64).log10(), (f - f_min + PLOT_EPS).log10()))
                .collect()
        })
        .collect();
    let pts = series.iter().flatten();
    let x_hi = pts.clone().map(|p| p.0).fold(0.0, f64::max).ceil().max(1.0);
    let y_lo = pts.clone().map(|p| p.1).fold(f64::INFINITY, f64::min).floor();
    let y_hi = pts.map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil().max(y_lo + 1.0);

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + pw * x / x_hi;
    let sy = |y: f64| TOP + ph * (y_hi - y) / (y_hi - y_lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for d in 0..=x_hi as i32 {
        let x = sx(d as f64);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{d}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0
        );
    }
    // at most ~10 labelled decades on the y axis
    let step = (((y_hi - y_lo) / 10.0).ceil() as i32).max(1);
    let mut d = y_lo as i32;
    while d <= y_hi as i32 {
        let y = sy(d as f64);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0
        );
        d += step;
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">iteration + 1</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">F(x_t) - F_min</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    for (i, ((name, _), pts)) in traces.iter().zip(&series).enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = TOP + 15.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 25.0,
            lx + 30.0,
            ly + 4.0,
            escape(name.as_ref())
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_trace_one_polyline() {
        let t = [3.0, 2.0, 1.5];
        let svg = emit_plot(&[("gist", &t[..])]).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), 3);
        assert!(svg.contains(">gist</text>"));
    }

    #[test]
    fn deterministic_and_multi_series() {
        let a = [5.0, 1.0];
        let b = [5.0, 3.0, 2.0, 1.0];
        let traces = [("a", &a[..]), ("b<c", &b[..])];
        let svg = emit_plot(&traces).unwrap();
        assert_eq!(svg, emit_plot(&traces).unwrap());
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("b&lt;c"));
    }

    #[test]
    fn empty_is_an_error() {
        let none: [(&str, &[f64]); 0] = [];
        assert!(emit_plot(&none).is_err());
        assert!(emit_plot(&[("x", &[][..])]).is_err());
    }
}
