//! Minimal deterministic SVG charts. Coordinates are printed with fixed
//! precision so identical inputs give identical bytes.

use std::fmt::Write;

/// Sequential palette, low to high.
pub const PALETTE: [&str; 9] =
    ["#440154", "#472d7b", "#3b528b", "#2c728e", "#21918c", "#28ae80", "#5ec962", "#addc30", "#fde725"];

pub const MISSING_COLOR: &str = "#dddddd";

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 64.0;
const SERIES_COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>",
        WIDTH / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn label(out: &mut String, x: f64, y: f64, anchor: &str, text: &str) {
    let _ = writeln!(
        out,
        "<text x=\"{x:.1}\" y=\"{y:.1}\" text-anchor=\"{anchor}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
        escape(text)
    );
}

/// Palette index for `value` on a log scale spanning `[lo, hi]`; the
/// maximum maps to the last color.
pub fn palette_index(value: f64, lo: f64, hi: f64) -> usize {
    let top = PALETTE.len() - 1;
    if !(hi > lo) {
        return top;
    }
    let s = ((value.ln() - lo.ln()) / (hi.ln() - lo.ln())).clamp(0.0, 1.0);
    (s * top as f64).round() as usize
}

/// Heatmap with rows labelled by `row_labels` (drawn bottom to top) and a
/// log color scale. `None` cells are drawn in [`MISSING_COLOR`].
pub fn heatmap(title: &str, row_labels: &[String], col_labels: &[String], cells: &[Vec<Option<f64>>]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let positive: Vec<f64> = cells.iter().flatten().flatten().copied().filter(|v| *v > 0.0).collect();
    let lo = positive.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = positive.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let rows = row_labels.len().max(1) as f64;
    let cols = col_labels.len().max(1) as f64;
    let (cw, ch) = ((WIDTH - 2.0 * MARGIN) / cols, (HEIGHT - 2.0 * MARGIN) / rows);
    for (i, row) in cells.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            let color = match cell {
                Some(v) if *v > 0.0 => PALETTE[palette_index(*v, lo, hi)],
                _ => MISSING_COLOR,
            };
            let x = MARGIN + j as f64 * cw;
            let y = HEIGHT - MARGIN - (i as f64 + 1.0) * ch;
            let _ = writeln!(
                out,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cw:.1}\" height=\"{ch:.1}\" fill=\"{color}\"/>"
            );
        }
    }
    for (i, l) in row_labels.iter().enumerate() {
        label(&mut out, MARGIN - 6.0, HEIGHT - MARGIN - (i as f64 + 0.5) * ch, "end", l);
    }
    for (j, l) in col_labels.iter().enumerate() {
        label(&mut out, MARGIN + (j as f64 + 0.5) * cw, HEIGHT - MARGIN + 16.0, "middle", l);
    }
    if lo.is_finite() {
        label(&mut out, WIDTH - MARGIN, 44.0, "end", &format!("range {lo:.3e} .. {hi:.3e} (log scale)"));
    }
    out.push_str("</svg>\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

/// Line chart with markers; points with nonpositive `y` are dropped on a
/// log axis.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, y_scale: Scale, series: &[Series]) -> String {
    let ty = |y: f64| if y_scale == Scale::Log { y.log10() } else { y };
    let keep = |p: &&(f64, f64)| p.0.is_finite() && p.1.is_finite() && (y_scale == Scale::Linear || p.1 > 0.0);
    let pts: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().filter(keep)).map(|p| (p.0, ty(p.1))).collect();
    let mut out = String::new();
    header(&mut out, title);
    let (x0, x1) = bounds(pts.iter().map(|p| p.0));
    let (y0, y1) = bounds(pts.iter().map(|p| p.1));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    axes(&mut out, x_label, y_label);
    let fmt_y = |y: f64| if y_scale == Scale::Log { format!("1e{y:.1}") } else { format!("{y:.3}") };
    label(&mut out, MARGIN - 6.0, HEIGHT - MARGIN, "end", &fmt_y(y0));
    label(&mut out, MARGIN - 6.0, MARGIN, "end", &fmt_y(y1));
    label(&mut out, MARGIN, HEIGHT - MARGIN + 16.0, "middle", &format!("{x0}"));
    label(&mut out, WIDTH - MARGIN, HEIGHT - MARGIN + 16.0, "middle", &format!("{x1}"));
    for (s, color) in series.iter().zip(SERIES_COLORS.iter().cycle()) {
        let path: Vec<String> =
            s.points.iter().filter(keep).map(|p| format!("{:.1},{:.1}", sx(p.0), sy(ty(p.1)))).collect();
        if path.is_empty() {
            continue;
        }
        let _ = writeln!(out, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>", path.join(" "));
        for p in &path {
            let (x, y) = p.split_once(',').expect("formatted pair");
            let _ = writeln!(out, "<circle cx=\"{x}\" cy=\"{y}\" r=\"2.5\" fill=\"{color}\"/>");
        }
    }
    legend(&mut out, series.iter().map(|s| s.label.as_str()));
    out.push_str("</svg>\n");
    out
}

/// Scatter plot of several point sets (first two coordinates).
pub fn scatter(title: &str, sets: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (x0, x1) = bounds(sets.iter().flat_map(|s| s.1.iter().map(|p| p.0)));
    let (y0, y1) = bounds(sets.iter().flat_map(|s| s.1.iter().map(|p| p.1)));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    axes(&mut out, "x1", "x2");
    for ((_, pts), color) in sets.iter().zip(SERIES_COLORS.iter().cycle()) {
        for p in pts.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let _ = writeln!(
                out,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"1.5\" fill=\"{color}\" fill-opacity=\"0.6\"/>",
                sx(p.0),
                sy(p.1)
            );
        }
    }
    legend(&mut out, sets.iter().map(|s| s.0.as_str()));
    out.push_str("</svg>\n");
    out
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn axes(out: &mut String, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        "<path d=\"M{MARGIN:.1},{:.1} V{:.1} H{:.1}\" fill=\"none\" stroke=\"black\"/>",
        MARGIN,
        HEIGHT - MARGIN,
        WIDTH - MARGIN
    );
    label(out, WIDTH / 2.0, HEIGHT - 20.0, "middle", x_label);
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{:.1}\" transform=\"rotate(-90 16 {:.1})\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
}

fn legend<'a>(out: &mut String, labels: impl Iterator<Item = &'a str>) {
    for (i, (l, color)) in labels.zip(SERIES_COLORS.iter().cycle()).enumerate() {
        let y = MARGIN + 14.0 * i as f64;
        let _ = writeln!(out, "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{color}\"/>", WIDTH - 150.0, y - 9.0);
        label(out, WIDTH - 135.0, y, "start", l);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_cell_gets_top_color() {
        let cells = vec![vec![Some(1e-3), Some(1e-2)], vec![None, Some(0.5)]];
        let svg = heatmap("t", &["a".into(), "b".into()], &["c".into(), "d".into()], &cells);
        assert_eq!(svg.matches(PALETTE[8]).count(), 1);
        assert_eq!(svg.matches(PALETTE[0]).count(), 1);
        assert!(svg.contains(MISSING_COLOR));
        assert_eq!(palette_index(0.5, 1e-3, 0.5), 8);
    }

    #[test]
    fn charts_are_deterministic() {
        let s = vec![Series { label: "a".into(), points: vec![(1.0, 0.1), (2.0, 0.01), (3.0, 0.0)] }];
        let a = line_chart("x", "k", "err", Scale::Log, &s);
        assert_eq!(a, line_chart("x", "k", "err", Scale::Log, &s));
        // the zero is dropped on the log axis
        assert_eq!(a.matches("<circle").count(), 2);
        let sc = scatter("s", &[("p".into(), vec![(0.0, 0.0), (1.0, 2.0)])]);
        assert_eq!(sc.matches("<circle").count(), 2);
    }
}
