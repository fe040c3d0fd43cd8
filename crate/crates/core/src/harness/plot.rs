//! A small self-contained SVG line chart: mean lines over shaded ±1 std bands.

use std::fmt::Write;

pub struct Line<'a> {
    pub label: String,
    pub xs: Vec<f64>,
    pub mean: &'a [f64],
    pub std: &'a [f64],
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const MAX_POINTS: usize = 400;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Indices kept when thinning a long series; always includes the last point.
fn thin(len: usize) -> Vec<usize> {
    if len <= MAX_POINTS {
        return (0..len).collect();
    }
    let step = len.div_ceil(MAX_POINTS);
    let mut idx: Vec<usize> = (0..len).step_by(step).collect();
    if idx.last() != Some(&(len - 1)) {
        idx.push(len - 1);
    }
    idx
}

pub fn render(title: &str, x_label: &str, y_label: &str, lines: &[Line<'_>]) -> String {
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (0.0f64, f64::NEG_INFINITY);
    for line in lines {
        for (i, &x) in line.xs.iter().enumerate() {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(line.mean[i] - line.std[i]);
            y_max = y_max.max(line.mean[i] + line.std[i]);
        }
    }
    if !x_min.is_finite() {
        (x_min, x_max) = (0.0, 1.0);
    }
    if !y_max.is_finite() {
        y_max = 1.0;
    }
    if x_max <= x_min {
        x_max = x_min + 1.0;
    }
    if y_max <= y_min {
        y_max = y_min + 1.0;
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let py = |y: f64| TOP + plot_h - (y - y_min) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<g stroke="black" fill="none"><line x1="{LEFT}" y1="{:.1}" x2="{:.1}" y2="{:.1}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.1}"/></g>"#,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h,
        TOP + plot_h
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x_min + f * (x_max - x_min);
        let yv = y_min + f * (y_max - y_min);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(xv),
            TOP + plot_h + 18.0,
            tick_label(xv)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            py(yv) + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    );

    for (li, line) in lines.iter().enumerate() {
        let color = PALETTE[li % PALETTE.len()];
        let idx = thin(line.xs.len());
        if idx.is_empty() {
            continue;
        }
        let mut band = String::new();
        for &i in &idx {
            let _ = write!(
                band,
                "{:.1},{:.1} ",
                px(line.xs[i]),
                py(line.mean[i] + line.std[i])
            );
        }
        for &i in idx.iter().rev() {
            let _ = write!(
                band,
                "{:.1},{:.1} ",
                px(line.xs[i]),
                py(line.mean[i] - line.std[i])
            );
        }
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.trim_end()
        );
        let mut path = String::new();
        for &i in &idx {
            let _ = write!(path, "{:.1},{:.1} ", px(line.xs[i]), py(line.mean[i]));
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.trim_end()
        );
        let ly = TOP + 14.0 + 18.0 * li as f64;
        let lx = LEFT + plot_w + 14.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&line.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_chart_has_axes_only() {
        let svg = render("t", "x", "y", &[]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<line"));
        assert!(!svg.contains("<polyline"));
    }

    #[test]
    fn long_series_are_thinned() {
        let mean: Vec<f64> = (0..5000).map(|i| i as f64).collect();
        let std = vec![1.0; 5000];
        let line = Line {
            label: "a<b".into(),
            xs: mean.clone(),
            mean: &mean,
            std: &std,
        };
        let svg = render("t", "x", "y", &[line]);
        assert!(svg.contains("a&lt;b"));
        let poly = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        assert!(poly.matches(',').count() <= MAX_POINTS + 1);
        let idx = thin(5000);
        assert_eq!(*idx.last().unwrap(), 4999);
    }
}
