//! Minimal hand-rolled SVG charts.

use std::fmt::Write as _;

use super::output::fmt_stat;
use super::{Method, ProfileSet, RunRecord};
use crate::error::{Error, Result};

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open(out: &mut String, w: f64, h: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        w / 2.0,
        escape(title)
    );
}

fn nice_max(v: f64) -> f64 {
    if !(v > 0.0) || !v.is_finite() {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|f| f * mag).find(|c| *c >= v).unwrap_or(10.0 * mag)
}

fn y_axis(out: &mut String, x0: f64, y0: f64, y1: f64, ymax: f64, label: &str) {
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for i in 0..=4 {
        let v = ymax * i as f64 / 4.0;
        let y = y0 - (y0 - y1) * i as f64 / 4.0;
        let _ = writeln!(out, r#"<line x1="{}" y1="{y}" x2="{x0}" y2="{y}" stroke="black"/>"#, x0 - 4.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, x0 - 6.0, y + 4.0, format_tick(v));
    }
    let _ = writeln!(
        out,
        r#"<text transform="translate(16,{}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (y0 + y1) / 2.0,
        escape(label)
    );
}

fn format_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() {
        "0".into()
    } else {
        s.into()
    }
}

/// Bar per method entry; bar height and label are the trimmed gap
/// (raw mean when fewer than three seeds).
pub fn bar_chart(record: &RunRecord) -> String {
    let bars: Vec<(String, f64)> = record
        .summaries
        .iter()
        .map(|s| (s.label.clone(), s.trimmed_gap.unwrap_or(s.mean_gap)))
        .collect();
    let mut out = String::new();
    open(&mut out, W, H, &format!("Optimality gap ({})", record.config.env.name()));
    let (x0, y0, y1) = (MARGIN, H - MARGIN, MARGIN);
    let ymax = nice_max(bars.iter().map(|b| b.1).fold(0.0, f64::max));
    y_axis(&mut out, x0, y0, y1, ymax, "optimality gap");
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#, W - 20.0);
    let slot = (W - 20.0 - x0) / bars.len().max(1) as f64;
    for (i, (label, v)) in bars.iter().enumerate() {
        let h = (v.max(0.0) / ymax) * (y0 - y1);
        let x = x0 + slot * i as f64 + slot * 0.15;
        let _ = writeln!(
            out,
            r#"<rect class="bar" x="{x}" y="{}" width="{}" height="{h}" fill="{}"/>"#,
            y0 - h,
            slot * 0.7,
            PALETTE[i % PALETTE.len()]
        );
        let cx = x + slot * 0.35;
        let _ = writeln!(
            out,
            r#"<text class="value" x="{cx}" y="{}" text-anchor="middle">{}</text>"#,
            y0 - h - 4.0,
            fmt_stat(*v)
        );
        let _ = writeln!(
            out,
            r#"<text class="method" x="{cx}" y="{}" text-anchor="middle">{}</text>"#,
            y0 + 16.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Gap of RMB-PO+ against the prompt-set size, with the other methods as
/// horizontal reference lines. `None` without RMB-PO+ entries.
pub fn line_chart(record: &RunRecord) -> Option<String> {
    let pts: Vec<(f64, f64)> = record
        .summaries
        .iter()
        .filter(|s| s.method == Method::RmbPoPlus)
        .map(|s| (s.m as f64, s.trimmed_gap.unwrap_or(s.mean_gap)))
        .collect();
    if pts.is_empty() {
        return None;
    }
    let refs: Vec<(String, f64)> = record
        .summaries
        .iter()
        .filter(|s| s.method != Method::RmbPoPlus)
        .map(|s| (s.label.clone(), s.trimmed_gap.unwrap_or(s.mean_gap)))
        .collect();
    let mut out = String::new();
    open(&mut out, W, H, &format!("Gap vs prompt-set size ({})", record.config.env.name()));
    let (x0, x1, y0, y1) = (MARGIN, W - 140.0, H - MARGIN, MARGIN);
    let ymax = nice_max(pts.iter().chain(refs.iter().map(|r| (0.0, r.1)).collect::<Vec<_>>().iter()).map(|p| p.1).fold(0.0, f64::max));
    y_axis(&mut out, x0, y0, y1, ymax, "optimality gap");
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let (mmin, mmax) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let span = if mmax > mmin { mmax - mmin } else { 1.0 };
    let px = |m: f64| if mmax > mmin { x0 + 20.0 + (x1 - x0 - 40.0) * (m - mmin) / span } else { (x0 + x1) / 2.0 };
    let py = |v: f64| y0 - (v.max(0.0) / ymax) * (y0 - y1);
    for (m, _) in &pts {
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{m}</text>"#, px(*m), y0 + 16.0);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">m</text>"#, (x0 + x1) / 2.0, y0 + 36.0);
    for (i, (label, v)) in refs.iter().enumerate() {
        let color = PALETTE[(i + 1) % PALETTE.len()];
        let y = py(*v);
        let _ = writeln!(out, r#"<line x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="{color}" stroke-dasharray="6,4"/>"#);
        let _ = writeln!(
            out,
            r#"<text class="value" x="{}" y="{}" fill="{color}">{} {}</text>"#,
            x1 + 6.0,
            y + 4.0,
            escape(label),
            fmt_stat(*v)
        );
    }
    let path: Vec<String> = pts.iter().map(|(m, v)| format!("{},{}", px(*m), py(*v))).collect();
    let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#, path.join(" "), PALETTE[0]);
    for (m, v) in &pts {
        let _ = writeln!(out, r#"<circle cx="{}" cy="{}" r="3" fill="{}"/>"#, px(*m), py(*v), PALETTE[0]);
        let _ = writeln!(
            out,
            r#"<text class="value" x="{}" y="{}" text-anchor="middle">{}</text>"#,
            px(*m),
            py(*v) - 8.0,
            fmt_stat(*v)
        );
    }
    out.push_str("</svg>\n");
    Some(out)
}

/// One panel per action: probability of that action across the state grid
/// for every trained policy, the greedy optimum dashed, and preference-data
/// states as ticks along the bottom.
pub fn action_profile_chart(p: &ProfileSet) -> Result<String> {
    for (label, probs) in &p.profiles {
        if let Some(row) = probs.rows().into_iter().find(|r| (r.sum() - 1.0).abs() > 1e-9) {
            return Err(Error::InvalidArgument(format!(
                "action profile of {label} has a row summing to {}",
                row.sum()
            )));
        }
    }
    let k = p.optimal.ncols();
    let (pw, ph) = (300.0, 220.0);
    let cols = 2usize;
    let rows = k.div_ceil(cols);
    let (w, h) = (cols as f64 * pw + 160.0, rows as f64 * ph + 50.0);
    let mut out = String::new();
    open(&mut out, w, h, &format!("Action probabilities (seed {})", p.seed));
    for a in 0..k {
        let ox = (a % cols) as f64 * pw + 10.0;
        let oy = (a / cols) as f64 * ph + 40.0;
        let (x0, x1, y0, y1) = (ox + 40.0, ox + pw - 10.0, oy + ph - 40.0, oy + 10.0);
        let px = |s: f64| x0 + (x1 - x0) * s;
        let py = |v: f64| y0 - (y0 - y1) * v;
        let _ = writeln!(out, r#"<g class="panel" id="action{a}">"#);
        let _ = writeln!(out, r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y0 - y1);
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">action {a}</text>"#, (x0 + x1) / 2.0, y1 - 2.0);
        for (v, t) in [(0.0, "0"), (1.0, "1")] {
            let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{t}</text>"#, x0 - 4.0, py(v) + 4.0);
        }
        for (v, t) in [(0.0, "0"), (1.0, "1")] {
            let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{t}</text>"#, px(v), y0 + 14.0);
        }
        let series = p
            .profiles
            .iter()
            .map(|(l, m)| (l.as_str(), m, None))
            .chain(std::iter::once(("optimal", &p.optimal, Some("4,3"))));
        for (i, (_, probs, dash)) in series.enumerate() {
            let pts: Vec<String> = p
                .grid
                .iter()
                .zip(probs.column(a))
                .map(|(s, v)| format!("{:.3},{:.3}", px(*s), py(*v)))
                .collect();
            let color = if dash.is_some() { "black" } else { PALETTE[i % PALETTE.len()] };
            let dash = dash.map(|d| format!(r#" stroke-dasharray="{d}""#)).unwrap_or_default();
            let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}"{dash}/>"#, pts.join(" "));
        }
        for s in &p.dataset_states {
            let _ = writeln!(
                out,
                r#"<line class="data" x1="{x:.3}" y1="{y0}" x2="{x:.3}" y2="{}" stroke="black"/>"#,
                y0 - 6.0,
                x = px(*s)
            );
        }
        out.push_str("</g>\n");
    }
    let lx = cols as f64 * pw + 20.0;
    let labels = p.profiles.iter().map(|(l, _)| l.as_str()).chain(std::iter::once("optimal"));
    for (i, l) in labels.enumerate() {
        let y = 60.0 + 18.0 * i as f64;
        let color = if i == p.profiles.len() { "black" } else { PALETTE[i % PALETTE.len()] };
        let _ = writeln!(out, r#"<line x1="{lx}" y1="{y}" x2="{}" y2="{y}" stroke="{color}"/>"#, lx + 20.0);
        let _ = writeln!(out, r#"<text class="method" x="{}" y="{}">{}</text>"#, lx + 26.0, y + 4.0, escape(l));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// All figures for a record as `(file name, svg)`.
pub fn emit_figures(record: &RunRecord) -> Result<Vec<(String, String)>> {
    let mut out = vec![("gaps.svg".to_string(), bar_chart(record))];
    if let Some(svg) = line_chart(record) {
        out.push(("gap_vs_m.svg".into(), svg));
    }
    if let Some(p) = &record.profiles {
        out.push(("action_profile.svg".into(), action_profile_chart(p)?));
    }
    Ok(out)
}
