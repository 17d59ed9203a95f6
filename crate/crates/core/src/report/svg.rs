use std::fmt::Write;

use crate::metrics::{optimal_k, PerformanceCurve};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn series_name(curve: &PerformanceCurve) -> String {
    let l = curve.label();
    if l.variant == "standard" {
        l.reader.clone()
    } else {
        format!("{} ({})", l.reader, l.variant)
    }
}

/// F1-vs-k line chart, one polyline per curve and a circle at each curve's
/// k*. Depth is drawn on a log scale since grids are roughly geometric.
pub fn render_plot(title: &str, curves: &[&PerformanceCurve]) -> String {
    let mut ks: Vec<u32> = curves.iter().flat_map(|c| c.ks()).collect();
    ks.sort_unstable();
    ks.dedup();
    let (kmin, kmax) = (
        f64::from(*ks.first().unwrap_or(&1)).ln(),
        f64::from(*ks.last().unwrap_or(&1)).ln(),
    );
    let fmax = curves
        .iter()
        .flat_map(|c| c.points().iter().map(|p| p.f1))
        .fold(0.0, f64::max);
    let ymax = ((fmax / 10.0).ceil() * 10.0).clamp(10.0, 100.0);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x = |k: u32| {
        if kmax > kmin {
            LEFT + (f64::from(k).ln() - kmin) / (kmax - kmin) * plot_w
        } else {
            LEFT + plot_w / 2.0
        }
    };
    let y = |f1: f64| TOP + plot_h - f1 / ymax * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<g stroke="black"><line x1="{LEFT}" y1="{0}" x2="{1}" y2="{0}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{0}"/></g>"#,
        TOP + plot_h,
        LEFT + plot_w
    );
    for &k in &ks {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{k}</text>"#,
            x(k),
            TOP + plot_h + 16.0
        );
    }
    for i in 0..=5 {
        let v = ymax * f64::from(i) / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{0:.1}" x2="{1}" y2="{0:.1}" stroke="#ddd"/><text x="{2}" y="{3:.1}" text-anchor="end">{v}</text>"##,
            y(v),
            LEFT + plot_w,
            LEFT - 6.0,
            y(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">k (retrieved passages)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">F1</text>"#,
        TOP + plot_h / 2.0
    );

    for (i, curve) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = curve
            .points()
            .iter()
            .map(|p| format!("{:.1},{:.1}", x(p.k), y(p.f1)))
            .collect();
        let name = escape(&series_name(curve));
        let _ = writeln!(
            s,
            r#"<polyline class="series" fill="none" stroke="{color}" stroke-width="2" points="{}"><title>{name}</title></polyline>"#,
            points.join(" ")
        );
        let k_star = optimal_k(curve);
        let f1 = curve.f1_at(k_star).expect("k* on curve");
        let _ = writeln!(
            s,
            r#"<circle class="k-star" cx="{:.1}" cy="{:.1}" r="5" fill="{color}"><title>{name}: k*={k_star}, F1={f1:.2}</title></circle>"#,
            x(k_star),
            y(f1)
        );
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 16.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{name}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}
