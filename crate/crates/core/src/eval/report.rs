use std::fmt::Write as _;
use std::path::Path;

use super::{EvalError, EvalReport};
use crate::store::write_atomic;

const CSV_HEADER: &str = "threshold,tp,fp,tn,fn,precision,recall,f1,fpr,utility_precision";

pub fn sweep_csv(report: &EvalReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.sweep {
        let c = &r.confusion;
        writeln!(
            out,
            "{:.2},{},{},{},{},{},{},{},{},{}",
            r.threshold, c.tp, c.fp, c.tn, c.fn_, r.precision, r.recall, r.f1, r.fpr, r.utility_precision
        )
        .unwrap();
    }
    out
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn px(t: f64) -> f64 {
    MARGIN + t * (W - 2.0 * MARGIN)
}

fn py(v: f64) -> f64 {
    H - MARGIN - v * (H - 2.0 * MARGIN)
}

fn polyline(points: impl Iterator<Item = (f64, f64)>, color: &str, class: &str) -> String {
    let pts: Vec<String> = points.map(|(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
    format!(
        "  <polyline class=\"{class}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
        pts.join(" ")
    )
}

/// Utility precision and FPR against threshold, both axes spanning 0 to 1.
pub fn render_svg(report: &EvalReport) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
    )
    .unwrap();
    s.push_str("  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    writeln!(
        s,
        "  <line class=\"axis\" x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>",
        x0 = px(0.0),
        x1 = px(1.0),
        y0 = py(0.0)
    )
    .unwrap();
    writeln!(
        s,
        "  <line class=\"axis\" x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>",
        x0 = px(0.0),
        y0 = py(0.0),
        y1 = py(1.0)
    )
    .unwrap();
    for (v, anchor) in [(0.0, "0"), (0.5, "0.5"), (1.0, "1")] {
        writeln!(
            s,
            "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">{anchor}</text>",
            px(v),
            py(0.0) + 18.0
        )
        .unwrap();
        writeln!(
            s,
            "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"end\">{anchor}</text>",
            px(0.0) - 8.0,
            py(v) + 4.0
        )
        .unwrap();
    }
    writeln!(
        s,
        "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\">probability threshold</text>",
        px(0.5),
        H - 12.0
    )
    .unwrap();
    s.push_str(&polyline(
        report.sweep.iter().map(|r| (r.threshold, r.utility_precision)),
        "#1f77b4",
        "utility-precision",
    ));
    s.push_str(&polyline(report.sweep.iter().map(|r| (r.threshold, r.fpr)), "#d62728", "fpr"));
    writeln!(
        s,
        "  <text x=\"{:.2}\" y=\"28\" font-size=\"12\" fill=\"#1f77b4\">utility precision</text>",
        px(0.65)
    )
    .unwrap();
    writeln!(
        s,
        "  <text x=\"{:.2}\" y=\"44\" font-size=\"12\" fill=\"#d62728\">false positive rate</text>",
        px(0.65)
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

/// Writes `sweep.csv`, `sweep.svg` and `metrics.json` into `out_dir`.
pub fn emit_report(report: &EvalReport, out_dir: &Path) -> Result<(), EvalError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| EvalError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let csv = out_dir.join("sweep.csv");
    write_atomic(&csv, sweep_csv(report).as_bytes()).map_err(io(&csv))?;
    let svg = out_dir.join("sweep.svg");
    write_atomic(&svg, render_svg(report).as_bytes()).map_err(io(&svg))?;
    let metrics = out_dir.join("metrics.json");
    let mut json = serde_json::to_vec_pretty(report).expect("report serializes");
    json.push(b'\n');
    write_atomic(&metrics, &json).map_err(io(&metrics))
}
