// SPDX-License-Identifier: MIT OR Apache-2.0

//! Bare SVG line and bar charts. CSV reports are the normative output.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 48.0;
const COLORS: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn frame(title: &str, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{MARGIN}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n\
         <line x1=\"{MARGIN}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{b}\" stroke=\"black\"/>\n{body}</svg>\n",
        escape(title),
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
    )
}

fn y_range<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((0.0f64, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    }
}

/// One polyline per series over x = 0, 1, 2, ...
pub fn line_chart(title: &str, x_labels: &[String], series: &[Series<'_>]) -> String {
    let (lo, hi) = y_range(series.iter().flat_map(|s| s.values.iter()));
    let n = x_labels.len().max(2) - 1;
    let x = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / n as f64;
    let y = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);
    let mut body = String::new();
    for (i, label) in x_labels.iter().enumerate() {
        let _ = writeln!(
            body,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
            x(i),
            HEIGHT - MARGIN + 14.0,
            escape(label)
        );
    }
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = s.values.iter().enumerate().map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v))).collect();
        let _ = writeln!(
            body,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
            points.join(" ")
        );
        let _ = writeln!(
            body,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{}</text>",
            WIDTH - MARGIN - 120.0,
            MARGIN + 14.0 * k as f64,
            escape(s.name)
        );
    }
    let _ = writeln!(body, "<text x=\"4\" y=\"{MARGIN}\" font-family=\"sans-serif\" font-size=\"10\">{hi:.3}</text>");
    let _ = writeln!(body, "<text x=\"4\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\">{lo:.3}</text>", HEIGHT - MARGIN);
    frame(title, &body)
}

/// Grouped bars: one group per label, one bar per series.
pub fn bar_chart(title: &str, group_labels: &[String], series: &[Series<'_>]) -> String {
    let (lo, hi) = y_range(series.iter().flat_map(|s| s.values.iter()));
    let groups = group_labels.len().max(1) as f64;
    let group_w = (WIDTH - 2.0 * MARGIN) / groups;
    let bar_w = group_w * 0.8 / series.len().max(1) as f64;
    let y = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);
    let mut body = String::new();
    for (g, label) in group_labels.iter().enumerate() {
        let gx = MARGIN + group_w * g as f64;
        let _ = writeln!(
            body,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
            gx + group_w / 2.0,
            HEIGHT - MARGIN + 14.0,
            escape(label)
        );
        for (k, s) in series.iter().enumerate() {
            let v = s.values.get(g).copied().unwrap_or(0.0);
            let (top, bottom) = (y(v.max(0.0)), y(v.min(0.0)));
            let _ = writeln!(
                body,
                "<rect x=\"{:.2}\" y=\"{top:.2}\" width=\"{bar_w:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                gx + group_w * 0.1 + bar_w * k as f64,
                bottom - top,
                COLORS[k % COLORS.len()]
            );
        }
    }
    for (k, s) in series.iter().enumerate() {
        let _ = writeln!(
            body,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{}\">{}</text>",
            WIDTH - MARGIN - 120.0,
            MARGIN + 14.0 * k as f64,
            COLORS[k % COLORS.len()],
            escape(s.name)
        );
    }
    frame(title, &body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_closed_svg() {
        let labels: Vec<String> = (0..3).map(|i| i.to_string()).collect();
        let s = [Series { name: "a<b", values: &[1.0, 2.0, 0.5] }];
        for svg in [line_chart("t", &labels, &s), bar_chart("t", &labels, &s)] {
            assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
            assert!(svg.contains("a&lt;b"));
        }
    }
}
