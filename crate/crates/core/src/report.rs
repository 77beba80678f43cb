//! Rendering of benchmark results: a per-corruption grid, a four-column
//! summary, severity curves as CSV and SVG, and a lossless CSV form of the
//! whole report.

use std::fmt::Write as _;

use crate::corrupt::{CorruptionKind, Group};
use crate::error::{Error, Result};
use crate::eval::{BenchmarkReport, Condition, Scores};

/// Printed above every rendered table.
pub const HEADER: &str = "\
# Desk-scale run: synthetic scenes and a small convolutional network.
# Absolute mIOU values are not comparable with full-scale models on real
# data; only the direction of differences between heads is meaningful.
# Frost uses a procedural ice texture rather than photographs.
";

pub const CSV_COLUMNS: &str = "condition,severity,model,miou,miou_msc";

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"))
}

/// Corruption grid: one block per severity plus a Mean block, one row per
/// model, one column per kind grouped by family.
pub fn render_grid(report: &BenchmarkReport, msc: bool) -> String {
    let kinds = report.kinds();
    let name_w = report.models.iter().map(|m| m.len()).max().unwrap_or(5).max(8);
    let mut out = String::from(HEADER);
    let _ = writeln!(out, "# mIOU per corruption{}", if msc { ", with MSC" } else { "" });
    let mut groups = format!("{:name_w$} |", "");
    for g in Group::ALL {
        let n = kinds.iter().filter(|k| k.group() == g).count();
        if n > 0 {
            let _ = write!(groups, " {:<w$} |", g.name(), w = n * 6 - 1);
        }
    }
    let mut heads = format!("{:name_w$} |", "");
    for g in Group::ALL {
        let mut any = false;
        for k in kinds.iter().filter(|k| k.group() == g) {
            let _ = write!(heads, " {:>5}", k.short());
            any = true;
        }
        if any {
            heads.push_str(" |");
        }
    }
    let _ = writeln!(out, "{groups}\n{heads}");
    let row = |out: &mut String, model: usize, value: &dyn Fn(CorruptionKind) -> Option<f64>| {
        let _ = write!(out, "{:name_w$} |", report.models[model]);
        for g in Group::ALL {
            let mut any = false;
            for &k in kinds.iter().filter(|k| k.group() == g) {
                let _ = write!(out, " {:>5}", cell(value(k)));
                any = true;
            }
            if any {
                out.push_str(" |");
            }
        }
        out.push('\n');
    };
    for s in report.severities() {
        let _ = writeln!(out, "Severity {s}");
        for m in 0..report.models.len() {
            let cond = |k| Condition {
                kind: Some(k),
                severity: s,
            };
            row(&mut out, m, &|k| report.get(cond(k), m, msc));
        }
    }
    if !kinds.is_empty() {
        out.push_str("Mean\n");
        for m in 0..report.models.len() {
            row(&mut out, m, &|k| report.kind_mean(m, k, msc));
        }
    }
    out
}

/// One line of the four-column summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub model: String,
    pub val: Option<f64>,
    pub val_msc: Option<f64>,
    pub cor: Option<f64>,
    pub cor_msc: Option<f64>,
}

pub fn summary(report: &BenchmarkReport) -> Vec<SummaryRow> {
    (0..report.models.len())
        .map(|m| SummaryRow {
            model: report.models[m].clone(),
            val: report.clean(m, false),
            val_msc: report.clean(m, true),
            cor: report.corrupted_mean(m, false),
            cor_msc: report.corrupted_mean(m, true),
        })
        .collect()
}

/// Clean and corrupted mIOU, each with and without MSC.
pub fn render_summary(rows: &[SummaryRow]) -> String {
    let name_w = rows.iter().map(|r| r.model.len()).max().unwrap_or(5).max(8);
    let mut out = String::from(HEADER);
    let _ = writeln!(out, "{:name_w$}  {:>7}  {:>7}  {:>7}  {:>7}", "Model", "val", "val+MSC", "cor", "cor+MSC");
    for r in rows {
        let _ = writeln!(
            out,
            "{:name_w$}  {:>7}  {:>7}  {:>7}  {:>7}",
            r.model,
            cell(r.val),
            cell(r.val_msc),
            cell(r.cor),
            cell(r.cor_msc)
        );
    }
    out
}

/// Mean mIOU over kinds at each severity (0 = clean), one row per model.
pub fn severity_csv(report: &BenchmarkReport) -> String {
    let mut out = String::from("model,severity,miou,miou_msc\n");
    let mut sev = vec![0];
    sev.extend(report.severities());
    for (m, name) in report.models.iter().enumerate() {
        for &s in &sev {
            let _ = writeln!(
                out,
                "{name},{s},{},{}",
                opt(report.severity_mean(m, s, false)),
                opt(report.severity_mean(m, s, true))
            );
        }
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Every cell, with values written in shortest round-trip form.
pub fn to_csv(report: &BenchmarkReport) -> String {
    let mut out = format!("{CSV_COLUMNS}\n");
    for ((cond, m), s) in &report.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            cond.name(),
            cond.severity,
            report.models[*m],
            opt(s.miou),
            opt(s.miou_msc)
        );
    }
    out
}

pub fn from_csv(text: &str) -> Result<BenchmarkReport> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_COLUMNS => {}
        _ => return Err(Error::data(format!("report CSV must start with `{CSV_COLUMNS}`"))),
    }
    let mut report = BenchmarkReport::default();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::data(format!("report CSV line {}: {msg}", i + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad("expected 5 fields"));
        }
        let kind = match f[0] {
            "clean" => None,
            k => Some(k.parse::<CorruptionKind>().map_err(|e| bad(&e.to_string()))?),
        };
        let severity: u8 = f[1].parse().map_err(|_| bad("bad severity"))?;
        let value = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(&format!("bad number `{s}`")))
            }
        };
        let m = match report.model_index(f[2]) {
            Some(m) => m,
            None => {
                report.models.push(f[2].to_string());
                report.models.len() - 1
            }
        };
        report.cells.insert(
            (Condition { kind, severity }, m),
            Scores {
                miou: value(f[3])?,
                miou_msc: value(f[4])?,
            },
        );
    }
    Ok(report)
}

/// One polyline of a chart.
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Minimal SVG line chart with axes, ticks and a legend.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h, left, right, top, bottom) = (560.0, 380.0, 60.0, 150.0, 40.0, 50.0);
    let pts = series.iter().flat_map(|s| s.points.iter());
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
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    let pad = ((y1 - y0) * 0.05).max(1e-9);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * ph;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        left + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        "<line x1=\"{left}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"black\"/>",
        top + ph,
        left + pw,
        top + ph,
        top + ph
    );
    for i in 0..=5 {
        let t = i as f64 / 5.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            sx(xv),
            top + ph + 16.0,
            tick(xv),
            left - 6.0,
            sy(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n<text transform=\"translate(16 {:.1}) rotate(-90)\" text-anchor=\"middle\">{}</text>",
        left + pw / 2.0,
        h - 12.0,
        escape(x_label),
        top + ph / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let dash = if s.dashed { " stroke-dasharray=\"5 3\"" } else { "" };
        let path: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\"{dash} points=\"{}\"/>",
            path.join(" ")
        );
        let ly = top + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{colour}\" stroke-width=\"2\"{dash}/>\n<text x=\"{}\" y=\"{}\">{}</text>",
            w - right + 10.0,
            w - right + 34.0,
            w - right + 40.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn tick(v: f64) -> String {
    if v.abs() >= 10.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

pub(crate) fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Severity against mean mIOU, solid without MSC and dashed with it.
pub fn severity_svg(report: &BenchmarkReport) -> String {
    let mut sev = vec![0];
    sev.extend(report.severities());
    let mut series = Vec::new();
    for (m, name) in report.models.iter().enumerate() {
        for msc in [false, true] {
            let points: Vec<(f64, f64)> = sev
                .iter()
                .filter_map(|&s| report.severity_mean(m, s, msc).map(|v| (s as f64, v)))
                .collect();
            if !points.is_empty() {
                series.push(Series {
                    name: if msc { format!("{name} + MSC") } else { name.clone() },
                    points,
                    dashed: msc,
                });
            }
        }
    }
    line_chart_svg("Mean mIOU over corruptions", "severity", "mIOU", &series)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Vec<SummaryRow> {
        let row = |m: &str, v: [f64; 4]| SummaryRow {
            model: m.to_string(),
            val: Some(v[0]),
            val_msc: Some(v[1]),
            cor: Some(v[2]),
            cor_msc: Some(v[3]),
        };
        vec![
            row("Baseline", [69.1, 74.1, 35.5, 37.5]),
            row("IBE", [70.6, 75.3, 38.6, 40.3]),
            row("SCrIBE", [69.9, 74.6, 39.5, 42.1]),
        ]
    }

    #[test]
    fn summary_layout() {
        let text = render_summary(&fixture());
        let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(body[0], "Model         val  val+MSC      cor  cor+MSC");
        assert_eq!(body[1], "Baseline     69.1     74.1     35.5     37.5");
        assert_eq!(body[2], "IBE          70.6     75.3     38.6     40.3");
        assert_eq!(body[3], "SCrIBE       69.9     74.6     39.5     42.1");
        assert!(text.starts_with(HEADER));
    }

    #[test]
    fn empty_report_renders_headers_only() {
        let empty = BenchmarkReport::default();
        assert_eq!(to_csv(&empty), format!("{CSV_COLUMNS}\n"));
        assert_eq!(render_summary(&summary(&empty)).lines().filter(|l| !l.starts_with('#')).count(), 1);
        assert!(!render_grid(&empty, false).contains("Mean"));
        assert_eq!(from_csv(&to_csv(&empty)).unwrap(), empty);
    }

    #[test]
    fn csv_round_trip() {
        let mut r = BenchmarkReport::new(vec!["Baseline".into(), "SCrIBE".into()]);
        let mut v = 1.0 / 3.0;
        for kind in [None, Some(CorruptionKind::Fog), Some(CorruptionKind::Jpeg)] {
            for m in 0..2 {
                v = (v * 7.3 + 0.123_456_789) % 100.0;
                r.cells.insert(
                    (
                        Condition {
                            kind,
                            severity: if kind.is_some() { 3 } else { 0 },
                        },
                        m,
                    ),
                    Scores {
                        miou: Some(v),
                        miou_msc: if m == 0 { None } else { Some(v / 2.0) },
                    },
                );
            }
        }
        let back = from_csv(&to_csv(&r)).unwrap();
        assert_eq!(back, r);
        assert!(from_csv("nope\n").is_err());
        let grid = render_grid(&r, false);
        assert!(grid.contains("Weather") && grid.contains("Severity 3") && grid.contains("Mean"));
        assert!(severity_svg(&r).starts_with("<svg"));
        assert!(severity_csv(&r).lines().count() == 5);
    }
}
