//! Minimal line-chart SVG writer. Output is a pure function of the table, so
//! files are byte-stable across runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::MetricsTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    SuccessVsSteps,
    MsePerStep,
    ActionComponents,
}

impl PlotKind {
    pub const ALL: [PlotKind; 3] = [PlotKind::SuccessVsSteps, PlotKind::MsePerStep, PlotKind::ActionComponents];

    pub fn file_name(self) -> &'static str {
        match self {
            PlotKind::SuccessVsSteps => "success_vs_steps.svg",
            PlotKind::MsePerStep => "mse_per_step.svg",
            PlotKind::ActionComponents => "action_components.svg",
        }
    }
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 56.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="24" font-size="15" text-anchor="middle" font-family="sans-serif">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r##"<path d="M{PAD:.1},{PAD:.1} V{:.1} H{:.1}" fill="none" stroke="#333"/>"##,
        H - PAD,
        W - PAD
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle" font-family="sans-serif">{}</text>"#,
            sx(xv),
            H - PAD + 14.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end" font-family="sans-serif">{}</text>"#,
            PAD - 4.0,
            sy(yv) + 3.0,
            tick(yv)
        );
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle" font-family="sans-serif">{}</text>"#, W / 2.0, H - 14.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" font-size="12" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 14 {:.1})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let d: Vec<String> = ser
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        if !d.is_empty() {
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, d.join(" "));
        }
        let ly = PAD + 14.0 * i as f64;
        let _ = writeln!(s, r#"<rect x="{:.1}" y="{:.1}" width="10" height="3" fill="{color}"/>"#, W - PAD - 120.0, ly - 4.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}" font-size="10" font-family="sans-serif">{}</text>"#, W - PAD - 106.0, escape(&ser.label));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// SVG text for one chart.
pub fn render(table: &MetricsTable, kind: PlotKind) -> String {
    let seeds = table.seeds.first().copied();
    let largest = table.step_counts().last().copied();
    match kind {
        PlotKind::SuccessVsSteps => {
            let series: Vec<Series> = table
                .variants()
                .into_iter()
                .map(|v| Series {
                    points: table
                        .step_counts()
                        .into_iter()
                        .filter_map(|t| table.mean_success(&v, t).map(|s| (t as f64, s)))
                        .collect(),
                    label: v,
                })
                .collect();
            chart("Success rate vs. denoising steps", "T'", "success rate", &series)
        }
        PlotKind::MsePerStep => {
            let series: Vec<Series> = table
                .variants()
                .into_iter()
                .filter_map(|v| {
                    let c = table.cell(&v, largest?, seeds?)?;
                    Some(Series {
                        label: v,
                        points: c.mse_curve.iter().enumerate().map(|(i, &m)| (i as f64, m)).collect(),
                    })
                })
                .collect();
            chart("Per-step MSE to the expert plan", "executed step", "MSE", &series)
        }
        PlotKind::ActionComponents => {
            let mut series = Vec::new();
            for v in table.variants() {
                let Some(c) = largest.zip(seeds).and_then(|(t, s)| table.cell(&v, t, s)) else { continue };
                for (k, name) in ["x", "z", "r1", "r2"].iter().enumerate() {
                    series.push(Series {
                        label: format!("{v} {name}"),
                        points: c.components.iter().enumerate().map(|(i, p)| (i as f64, p[k])).collect(),
                    });
                }
            }
            chart("First-block action components", "executed step", "value", &series)
        }
    }
}

/// Write all charts into `dir`.
pub fn plot_curves(table: &MetricsTable, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    PlotKind::ALL
        .iter()
        .map(|&k| {
            let p = dir.join(k.file_name());
            std::fs::write(&p, render(table, k)).map_err(|e| Error::io(&p, e))?;
            Ok(p)
        })
        .collect()
}
