use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::ExperimentReport;
use crate::error::{Error, Result};
use crate::metrics::{pca_project, LatentSet};

/// File names written by [`emit_report`], in manifest order.
pub const REPORT_FILES: [&str; 4] = ["metrics.csv", "diagram.csv", "latents.svg", "config.json"];

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Write the metric series, the final diagram, a PCA scatter of the final
/// latents and the canonical config into `dir`. Returns the written paths.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let contents = [
        report.series.to_csv_string(),
        report.diagram.to_csv_string(),
        latents_svg(report.final_latents()),
        report.config.canonical_json(),
    ];
    let mut manifest = Vec::with_capacity(REPORT_FILES.len());
    for (name, body) in REPORT_FILES.iter().zip(contents) {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        manifest.push(path);
    }
    Ok(manifest)
}

/// Scatter of the first two principal components, one colour per class.
pub fn latents_svg(latents: &LatentSet) -> String {
    const SIZE: f64 = 480.0;
    const MARGIN: f64 = 32.0;
    let xy: Vec<(f64, f64)> = match pca_project(latents.cloud(), 2.min(latents.dim())) {
        Ok(p) if p.dim() == 2 => p.points().map(|q| (q[0], q[1])).collect(),
        Ok(p) => p.points().map(|q| (q[0], 0.0)).collect(),
        // Zero variance or too few points: plot raw leading coordinates.
        Err(_) => latents
            .cloud()
            .points()
            .map(|q| (q[0], q.get(1).copied().unwrap_or(0.0)))
            .collect(),
    };
    let bounds = |f: fn(&(f64, f64)) -> f64| {
        xy.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (x0, x1) = bounds(|p| p.0);
    let (y0, y1) = bounds(|p| p.1);
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let (sx, sy) = (span(x0, x1), span(y0, y1));
    let inner = SIZE - 2.0 * MARGIN;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let (lo, hi) = (MARGIN, SIZE - MARGIN);
    let _ = writeln!(svg, r#"<line x1="{lo}" y1="{hi}" x2="{hi}" y2="{hi}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{lo}" y1="{lo}" x2="{lo}" y2="{hi}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">PC1</text>"#, SIZE / 2.0, SIZE - 8.0);
    let _ = writeln!(
        svg,
        r#"<text x="12" y="{0}" font-size="12" text-anchor="middle" transform="rotate(-90 12 {0})">PC2</text>"#,
        SIZE / 2.0
    );
    for (&(x, y), &class) in xy.iter().zip(latents.semantic_ids()) {
        let cx = MARGIN + (x - x0) / sx * inner;
        let cy = SIZE - MARGIN - (y - y0) / sy * inner;
        let _ = writeln!(
            svg,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="2.5" fill="{}" fill-opacity="0.7"/>"#,
            PALETTE[class % PALETTE.len()]
        );
    }
    svg.push_str("</svg>\n");
    svg
}
