use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DistanceReport, Histogram, HistogramSpec};
use crate::error::{Error, Result};

/// One cepstral coefficient over time for the three renderings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSet {
    pub label: String,
    pub clean: Vec<f64>,
    pub corrupted: Vec<f64>,
    /// `None` where conversion produced no value.
    pub converted: Vec<Option<f64>>,
}

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 240.0;
const MARGIN: f64 = 40.0;

/// Side-by-side histogram panels sharing one distance axis.
pub fn histogram_svg(reports: &[(String, DistanceReport)], bins: usize) -> String {
    let top = reports.iter().map(|(_, r)| r.max).fold(0.0, f64::max);
    let spec = HistogramSpec { bins, max: Some(top) };
    let hists: Vec<Histogram> = reports.iter().map(|(_, r)| Histogram::build(&r.per_frame, &spec)).collect();
    let peak = hists
        .iter()
        .flat_map(|h| h.counts.iter().cloned())
        .max()
        .unwrap_or(1)
        .max(1) as f64;

    let width = reports.len().max(1) as f64 * (PANEL_W + MARGIN) + MARGIN;
    let height = PANEL_H + 2.0 * MARGIN;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    for (p, ((name, r), h)) in reports.iter().zip(&hists).enumerate() {
        let x0 = MARGIN + p as f64 * (PANEL_W + MARGIN);
        let y0 = MARGIN;
        let bw = PANEL_W / h.counts.len() as f64;
        writeln!(s, r#"<g>"#).unwrap();
        for (i, &c) in h.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let bh = PANEL_H * c as f64 / peak;
            writeln!(
                s,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#555555"/>"##,
                x0 + i as f64 * bw,
                y0 + PANEL_H - bh,
                bw,
                bh
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<rect x="{x0:.2}" y="{y0:.2}" width="{PANEL_W:.2}" height="{PANEL_H:.2}" fill="none" stroke="black"/>"#
        )
        .unwrap();
        if top > 0.0 {
            let mx = x0 + PANEL_W * r.mean / top;
            writeln!(
                s,
                r#"<line x1="{mx:.2}" y1="{y0:.2}" x2="{mx:.2}" y2="{:.2}" stroke="red" stroke-dasharray="4,3"/>"#,
                y0 + PANEL_H
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">{} ({})</text>"#,
            x0 + PANEL_W / 2.0,
            y0 - 10.0,
            escape(name),
            r.formatted()
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{x0:.2}" y="{:.2}" font-size="11">0</text><text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{top:.1}</text>"#,
            y0 + PANEL_H + 15.0,
            x0 + PANEL_W,
            y0 + PANEL_H + 15.0
        )
        .unwrap();
        writeln!(s, "</g>").unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Dark solid clean, dashed corrupted, gray converted.
pub fn trace_svg(trace: &TraceSet) -> String {
    let n = trace.clean.len().max(trace.corrupted.len()).max(trace.converted.len());
    let values = trace
        .clean
        .iter()
        .chain(&trace.corrupted)
        .chain(trace.converted.iter().flatten())
        .cloned();
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0) - 1.0, hi.max(0.0) + 1.0) };
    let w = 900.0;
    let h = 300.0;
    let px = |t: usize| MARGIN + (w - 2.0 * MARGIN) * t as f64 / (n.max(2) - 1) as f64;
    let py = |v: f64| h - MARGIN - (h - 2.0 * MARGIN) * (v - lo) / (hi - lo);

    let polyline = |pts: &mut dyn Iterator<Item = (usize, Option<f64>)>| {
        let mut runs: Vec<String> = Vec::new();
        let mut cur = String::new();
        for (t, v) in pts {
            match v {
                Some(v) => write!(cur, "{:.2},{:.2} ", px(t), py(v)).unwrap(),
                None if !cur.is_empty() => runs.push(std::mem::take(&mut cur)),
                None => {}
            }
        }
        if !cur.is_empty() {
            runs.push(cur);
        }
        runs
    };

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    let styles = [
        (r##"stroke="#888888" stroke-width="1.5""##, 2),
        (r##"stroke="#222222" stroke-width="1" stroke-dasharray="5,3""##, 1),
        (r##"stroke="#000000" stroke-width="1.5""##, 0),
    ];
    for (style, which) in styles {
        let mut it: Box<dyn Iterator<Item = (usize, Option<f64>)>> = match which {
            0 => Box::new(trace.clean.iter().map(|&v| Some(v)).enumerate()),
            1 => Box::new(trace.corrupted.iter().map(|&v| Some(v)).enumerate()),
            _ => Box::new(trace.converted.iter().cloned().enumerate()),
        };
        for run in polyline(&mut it) {
            writeln!(s, r#"<polyline fill="none" {style} points="{}"/>"#, run.trim_end()).unwrap();
        }
    }
    writeln!(
        s,
        r#"<text x="{MARGIN:.2}" y="20" font-size="13">{}</text>"#,
        escape(&trace.label)
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn write(path: PathBuf, body: &str, out: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    out.push(path);
    Ok(())
}

/// Writes histogram and trace figures with their CSV data into `dir`.
/// Returns the written paths.
pub fn emit_plots(
    dir: &Path,
    reports: &[(String, DistanceReport)],
    traces: &[TraceSet],
    bins: usize,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    if !reports.is_empty() {
        write(dir.join("histograms.svg"), &histogram_svg(reports, bins), &mut out)?;
        let mut csv = String::from("condition,frame_index,distance\n");
        for (name, r) in reports {
            for (i, d) in r.per_frame.iter().enumerate() {
                writeln!(csv, "{name},{i},{d}").unwrap();
            }
        }
        write(dir.join("distances.csv"), &csv, &mut out)?;
    }
    for (k, tr) in traces.iter().enumerate() {
        write(dir.join(format!("trace_{k}.svg")), &trace_svg(tr), &mut out)?;
        let mut csv = String::from("frame,clean,corrupted,converted\n");
        let n = tr.clean.len().max(tr.corrupted.len()).max(tr.converted.len());
        let cell = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
        for t in 0..n {
            writeln!(
                csv,
                "{t},{},{},{}",
                cell(tr.clean.get(t).cloned()),
                cell(tr.corrupted.get(t).cloned()),
                cell(tr.converted.get(t).cloned().flatten())
            )
            .unwrap();
        }
        write(dir.join(format!("trace_{k}.csv")), &csv, &mut out)?;
    }
    Ok(out)
}
