//! Minimal SVG plots for reports.

use std::fmt::Write as _;

use crate::eval::TimingRow;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{PAD} {PAD} V{} H{}" stroke="black" fill="none"/>"#,
        H - PAD,
        W - PAD / 2.0
    );
    s
}

/// Grouped bars of train and test microseconds per sample, log-scaled.
pub fn timing_chart(rows: &[TimingRow]) -> String {
    let mut s = open("Time per sample (µs, log scale)");
    let values: Vec<f64> = rows.iter().flat_map(|r| [r.train_us_per_sample, r.test_us_per_sample]).collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min).max(1e-3).log10().floor();
    let hi = values.iter().copied().fold(0.0, f64::max).max(1e-3).log10().ceil().max(lo + 1.0);
    let plot_h = H - 2.0 * PAD;
    let y = |v: f64| H - PAD - (v.max(1e-3).log10() - lo) / (hi - lo) * plot_h;
    for e in lo as i32..=hi as i32 {
        let yy = y(10f64.powi(e));
        let _ = writeln!(s, r##"<line x1="{}" x2="{PAD}" y1="{yy}" y2="{yy}" stroke="black"/><text x="{}" y="{}" text-anchor="end">1e{e}</text>"##, PAD - 4.0, PAD - 6.0, yy + 4.0);
    }
    let slot = (W - 1.5 * PAD) / rows.len().max(1) as f64;
    let bar = slot * 0.35;
    for (i, r) in rows.iter().enumerate() {
        let x0 = PAD + i as f64 * slot + slot * 0.15;
        for (k, (v, color)) in [(r.train_us_per_sample, "#4c72b0"), (r.test_us_per_sample, "#dd8452")].into_iter().enumerate() {
            let top = y(v);
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{top:.1}" width="{bar:.1}" height="{:.1}" fill="{color}"/>"#,
                x0 + k as f64 * bar,
                (H - PAD - top).max(0.0)
            );
        }
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, x0 + bar, H - PAD + 16.0, escape(&r.detector));
    }
    let _ = writeln!(s, r##"<rect x="{}" y="40" width="10" height="10" fill="#4c72b0"/><text x="{}" y="49">train</text>"##, W - 150.0, W - 136.0);
    let _ = writeln!(s, r##"<rect x="{}" y="40" width="10" height="10" fill="#dd8452"/><text x="{}" y="49">test</text>"##, W - 90.0, W - 76.0);
    s.push_str("</svg>\n");
    s
}

/// ROC curves, one polyline per named curve, with the chance diagonal.
pub fn roc_chart(curves: &[(String, Vec<(f64, f64)>, f64)]) -> String {
    let mut s = open("ROC");
    let side = H - 2.0 * PAD;
    let px = |f: f64| PAD + f * side;
    let py = |t: f64| H - PAD - t * side;
    let _ = writeln!(s, r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#999" stroke-dasharray="4 4"/>"##, px(0.0), py(0.0), px(1.0), py(1.0));
    for tick in [0.0, 0.5, 1.0] {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{tick}</text>"#, px(tick), H - PAD + 16.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{tick}</text>"#, PAD - 6.0, py(tick) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">false positive rate</text>"#, px(0.5), H - PAD + 34.0);
    let colors = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3"];
    for (i, (name, points, auc)) in curves.iter().enumerate() {
        let color = colors[i % colors.len()];
        let path: Vec<String> = points.iter().map(|(f, t)| format!("{:.2},{:.2}", px(*f), py(*t))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.join(" "));
        let ly = PAD + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}">{} (AUC {auc:.3})</text>"#,
            px(1.0) + 12.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}
