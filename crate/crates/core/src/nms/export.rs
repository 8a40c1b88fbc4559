use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::NmsReport;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
    Svg,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            "svg" => Ok(ExportFormat::Svg),
            other => Err(Error::Config(format!("unknown export format {other}"))),
        }
    }
}

fn write(path: PathBuf, body: &str, out: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    out.push(path);
    Ok(())
}

/// Writes the requested artifacts into `dir` and returns their paths.
pub fn export_nms(report: &NmsReport, dir: &Path, formats: &[ExportFormat]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut formats = formats.to_vec();
    formats.sort();
    formats.dedup();
    let mut out = Vec::new();
    for f in formats {
        match f {
            ExportFormat::Csv => {
                let mut points = String::from("index,x,y\n");
                for (i, p) in report.points.row_iter().enumerate() {
                    let _ = writeln!(points, "{i},{},{}", p[0], p[1]);
                }
                write(dir.join("points.csv"), &points, &mut out)?;
                let mut sim = String::new();
                for row in report.similarity.row_iter() {
                    let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                    sim.push_str(&cells.join(","));
                    sim.push('\n');
                }
                write(dir.join("similarity.csv"), &sim, &mut out)?;
                let mut pairs = String::from("i,j,similarity\n");
                for p in &report.collapse_pairs {
                    let _ = writeln!(pairs, "{},{},{}", p.i, p.j, p.similarity);
                }
                write(dir.join("collapse.csv"), &pairs, &mut out)?;
            }
            ExportFormat::Json => {
                write(dir.join("nms.json"), &serde_json::to_string_pretty(report)?, &mut out)?;
            }
            ExportFormat::Svg => {
                write(dir.join("nms.svg"), &render_svg(report), &mut out)?;
            }
        }
    }
    Ok(out)
}

const PANEL: f64 = 400.0;
const MARGIN: f64 = 20.0;

/// Scatter over the density field with flagged pairs joined, next to a
/// grey log-scale similarity heatmap.
pub fn render_svg(report: &NmsReport) -> String {
    let width = 3.0 * MARGIN + 2.0 * PANEL;
    let height = 2.0 * MARGIN + PANEL + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let title = if report.layer_name.is_empty() {
        "neurons".to_string()
    } else {
        xml_escape(&report.layer_name)
    };
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="14" font-family="sans-serif" font-size="12">{title}: {} neurons, {} flagged pairs</text>"#,
        report.points.rows(),
        report.collapse_pairs.len()
    );

    let [x0, x1, y0, y1] = report.bounds;
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * PANEL;
    let py = |y: f64| MARGIN + 20.0 + (1.0 - (y - y0) / (y1 - y0)) * PANEL;

    let _ = writeln!(s, r#"<g class="density">"#);
    let g = report.density_grid.rows();
    let peak = report.density_grid.max_abs();
    if g > 0 && peak > 0.0 {
        let cell = PANEL / g as f64;
        for gy in 0..g {
            for gx in 0..g {
                let v = report.density_grid.get(gy, gx) / peak;
                if v < 1e-3 {
                    continue;
                }
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="steelblue" fill-opacity="{:.3}"/>"#,
                    MARGIN + gx as f64 * cell,
                    MARGIN + 20.0 + (g - 1 - gy) as f64 * cell,
                    0.6 * v
                );
            }
        }
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g class="collapse" stroke="crimson" stroke-width="1.5">"#);
    for p in &report.collapse_pairs {
        let a = report.points.row(p.i);
        let b = report.points.row(p.j);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#,
            px(a[0]),
            py(a[1]),
            px(b[0]),
            py(b[1])
        );
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g class="neurons" fill="black">"#);
    for p in report.points.row_iter() {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3"/>"#, px(p[0]), py(p[1]));
    }
    let _ = writeln!(s, "</g>");

    // heatmap, log10 of positive similarities mapped onto a grey ramp
    let m = report.similarity.rows();
    let logs: Vec<f64> = report
        .similarity
        .as_slice()
        .iter()
        .filter(|v| **v > 0.0)
        .map(|v| v.log10())
        .collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let left = 2.0 * MARGIN + PANEL;
    let top = MARGIN + 20.0;
    let _ = writeln!(s, r#"<g class="similarity">"#);
    if m > 0 {
        let cell = PANEL / m as f64;
        for i in 0..m {
            for j in 0..m {
                let v = report.similarity.get(i, j);
                let level = if v > 0.0 && hi > lo {
                    (v.log10() - lo) / (hi - lo)
                } else if v > 0.0 {
                    1.0
                } else {
                    0.0
                };
                let grey = (255.0 * (1.0 - level)).round() as u8;
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="rgb({grey},{grey},{grey})"/>"#,
                    left + j as f64 * cell,
                    top + i as f64 * cell
                );
            }
        }
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::nms::build_nms;

    fn report() -> NmsReport {
        let k = Matrix::from_rows(&[[1.0, 0.2, 0.0], [0.1, 1.0, 0.3], [0.5, 0.5, 0.5]]).unwrap();
        build_nms(&k, 1e-6, 10.0, 8).unwrap().named("layer1")
    }

    #[test]
    fn json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let r = report();
        let files = export_nms(&r, dir.path(), &[ExportFormat::Json]).unwrap();
        assert_eq!(files.len(), 1);
        let back: NmsReport = serde_json::from_str(&fs::read_to_string(&files[0]).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn csv_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let files = export_nms(&report(), dir.path(), &[ExportFormat::Csv]).unwrap();
        assert_eq!(files.len(), 3);
        let sim = fs::read_to_string(dir.path().join("similarity.csv")).unwrap();
        let rows: Vec<&str> = sim.lines().collect();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.split(',').count() == 3));
        let pts = fs::read_to_string(dir.path().join("points.csv")).unwrap();
        assert_eq!(pts.lines().next(), Some("index,x,y"));
    }

    #[test]
    fn svg_marker_count() {
        let svg = render_svg(&report());
        assert_eq!(svg.matches("<circle").count(), 3);
        assert_eq!(svg.matches("<svg").count(), 1);
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn format_names() {
        assert_eq!("SVG".parse::<ExportFormat>().unwrap(), ExportFormat::Svg);
        assert!("png".parse::<ExportFormat>().is_err());
    }
}
