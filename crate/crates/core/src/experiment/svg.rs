use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::datagen::OUTLIER;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];
const OUTLIER_COLOR: &str = "#b0b0b0";

/// Scatter of 2-D points colored by label, with a legend on the right.
pub fn scatter_svg(title: &str, points: &[(f64, f64)], labels: &[i32]) -> String {
    let (w, h, pad, legend_w) = (520.0, 440.0, 30.0, 90.0);
    let plot_w = w - legend_w - 2.0 * pad;
    let plot_h = h - 2.0 * pad - 20.0;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if points.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let sx = if x1 > x0 { plot_w / (x1 - x0) } else { 0.0 };
    let sy = if y1 > y0 { plot_h / (y1 - y0) } else { 0.0 };
    let classes: BTreeSet<i32> = labels.iter().copied().collect();
    let color = |l: i32| -> &str {
        if l == OUTLIER {
            return OUTLIER_COLOR;
        }
        let rank = classes.iter().filter(|&&c| c != OUTLIER && c < l).count();
        PALETTE[rank % PALETTE.len()]
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{pad}" y="18" font-size="13">{}</text>"#, escape(title));
    let _ = writeln!(
        s,
        r##"<rect x="{pad}" y="{}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>"##,
        pad + 20.0
    );
    // outliers first so classes draw on top
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by_key(|&i| labels[i] != OUTLIER);
    for i in order {
        let (x, y) = points[i];
        let cx = pad + (x - x0) * sx;
        let cy = pad + 20.0 + plot_h - (y - y0) * sy;
        let _ = writeln!(
            s,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="2.2" fill="{}" fill-opacity="0.75"/>"#,
            color(labels[i])
        );
    }
    let lx = w - legend_w;
    for (row, &c) in classes.iter().enumerate() {
        let y = pad + 30.0 + 16.0 * row as f64;
        let name = if c == OUTLIER { "outlier".to_string() } else { format!("class {c}") };
        let _ = writeln!(s, r#"<circle cx="{lx}" cy="{}" r="4" fill="{}"/>"#, y - 4.0, color(c));
        let _ = writeln!(s, r#"<text x="{}" y="{y}">{name}</text>"#, lx + 10.0);
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
