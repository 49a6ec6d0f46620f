//! Minimal SVG bar charts for the stats histograms.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 360.0;
const MARGIN: f64 = 48.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One bar per entry of `counts`, labelled with `labels`.
pub fn bar_chart(title: &str, x_label: &str, labels: &[String], counts: &[u64]) -> String {
    let max = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let n = counts.len().max(1) as f64;
    let plot_w = W - 2.0 * MARGIN;
    let plot_h = H - 2.0 * MARGIN;
    let bw = plot_w / n;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let base = H - MARGIN;
    for (i, &c) in counts.iter().enumerate() {
        let h = plot_h * c as f64 / max;
        let x = MARGIN + bw * i as f64;
        let _ = writeln!(
            s,
            r##"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="#4a78b5"><title>{}: {c}</title></rect>"##,
            base - h,
            (bw - 1.0).max(0.5),
            escape(labels.get(i).map_or("", String::as_str))
        );
    }
    let step = (counts.len() / 10).max(1);
    for (i, label) in labels.iter().enumerate().step_by(step) {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN + bw * (i as f64 + 0.5),
            base + 14.0,
            escape(label)
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#,
        W - MARGIN
    );
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{base}" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{}" text-anchor="end">{}</text>"#,
        MARGIN - 4.0,
        max as u64
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 10.0,
        escape(x_label)
    );
    s.push_str("</svg>\n");
    s
}
