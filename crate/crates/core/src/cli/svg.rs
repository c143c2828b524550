//! Static SVG lollipop chart: one row per asset with a stem from zero to the
//! annualized Sharpe ratio and an error bar at ± the selected cutoff.

use std::fmt::Write as _;

use crate::posthoc::PosthocReport;

const WIDTH: f64 = 760.0;
const LEFT: f64 = 200.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;
const ROW: f64 = 22.0;
const BOTTOM: f64 = 70.0;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && !matches!(c, '\t' | '\n' | '\r') => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 8.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

pub fn lollipop(report: &PosthocReport, title: &str) -> String {
    let sr = report.sr.values();
    let hsd = report.selected_cutoff;
    let k = sr.len();
    let mut lo = sr.iter().map(|v| v - hsd).fold(0.0f64, f64::min);
    let mut hi = sr.iter().map(|v| v + hsd).fold(0.0f64, f64::max);
    let pad = 0.05 * (hi - lo).max(1e-9);
    lo -= pad;
    hi += pad;
    let height = TOP + ROW * k as f64 + BOTTOM;
    let x = |v: f64| LEFT + (v - lo) / (hi - lo) * (WIDTH - LEFT - RIGHT);
    let y = |i: usize| TOP + ROW * (i as f64 + 0.5);
    let axis_y = TOP + ROW * k as f64;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );

    let _ = writeln!(s, r##"<g class="axis" stroke="#444">"##);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{axis_y}" x2="{}" y2="{axis_y}"/>"#, WIDTH - RIGHT);
    for t in nice_ticks(lo, hi) {
        let tx = x(t);
        let _ = writeln!(s, r#"<line x1="{tx:.2}" y1="{axis_y}" x2="{tx:.2}" y2="{}"/>"#, axis_y + 4.0);
        let _ = writeln!(
            s,
            r#"<text x="{tx:.2}" y="{}" text-anchor="middle" stroke="none">{}</text>"#,
            axis_y + 17.0,
            format_tick(t)
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">annualized Sharpe ratio (yr^-1/2)</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        axis_y + 34.0
    );
    let zx = x(0.0);
    let _ = writeln!(
        s,
        r##"<line class="zero" x1="{zx:.2}" y1="{TOP}" x2="{zx:.2}" y2="{axis_y}" stroke="#999" stroke-dasharray="3,3"/>"##
    );

    for (i, (name, &v)) in report.asset_names.iter().zip(sr).enumerate() {
        let yi = y(i);
        let (x0, x1, xv) = (x(v - hsd), x(v + hsd), x(v));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            LEFT - 8.0,
            yi,
            escape(name)
        );
        let _ = writeln!(
            s,
            r##"<line class="stem" x1="{zx:.2}" y1="{yi:.2}" x2="{xv:.2}" y2="{yi:.2}" stroke="#1f77b4"/>"##
        );
        let _ = writeln!(
            s,
            r##"<path class="error-bar" d="M{x0:.2},{yi:.2} H{x1:.2} M{x0:.2},{:.2} V{:.2} M{x1:.2},{:.2} V{:.2}" stroke="#d62728" fill="none"/>"##,
            yi - 5.0,
            yi + 5.0,
            yi - 5.0,
            yi + 5.0
        );
        let _ = writeln!(s, r##"<circle class="point" cx="{xv:.2}" cy="{yi:.2}" r="4" fill="#1f77b4"/>"##);
    }

    let _ = writeln!(
        s,
        r#"<g class="legend"><text x="{LEFT}" y="{}">error bars: ± HSD = {:.4} yr^-1/2; α = {}; df = {}</text></g>"#,
        height - 12.0,
        hsd,
        report.alpha,
        report.df_mode
    );
    s.push_str("</svg>\n");
    s
}

fn format_tick(t: f64) -> String {
    let s = format!("{t:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}
