//! CSV and SVG emitters for transition heatmaps and accuracy-by-gap curves.
//!
//! CSVs carry exact values (shortest round-trip float formatting) and parse
//! back to identical numbers. SVGs are plain text with `data-*` attributes on
//! every mark so tests can read coordinates back.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{state_labels, N_STATES};
use crate::io;

fn write_text(path: &Path, text: &str) -> Result<()> {
    use std::io::Write;
    let mut w = io::create(path)?;
    w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn column_labels(n_cols: usize) -> Result<Vec<String>> {
    let mut labels = state_labels();
    match n_cols {
        N_STATES => Ok(labels),
        n if n == N_STATES - 1 => {
            labels.pop();
            Ok(labels)
        }
        n => Err(Error::Dimension {
            expected: N_STATES,
            actual: n,
        }),
    }
}

fn check_heatmap(matrix: &[Vec<f64>]) -> Result<Vec<String>> {
    if matrix.len() != N_STATES {
        return Err(Error::Dimension {
            expected: N_STATES,
            actual: matrix.len(),
        });
    }
    let cols = matrix[0].len();
    if let Some(bad) = matrix.iter().find(|r| r.len() != cols) {
        return Err(Error::Dimension {
            expected: cols,
            actual: bad.len(),
        });
    }
    column_labels(cols)
}

/// `from,<column labels>` followed by one row per source state.
pub fn heatmap_csv(matrix: &[Vec<f64>]) -> Result<String> {
    let cols = check_heatmap(matrix)?;
    let mut out = format!("from,{}\n", cols.join(","));
    for (label, row) in state_labels().iter().zip(matrix) {
        out.push_str(label);
        for v in row {
            write!(out, ",{v}").expect("write to string");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Parses a heatmap CSV (lines starting with `#` are comments). Row and
/// column labels must follow the state-label convention.
pub fn parse_heatmap_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let perr = |m: String| Error::parse("heatmap csv", m);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| perr("empty input".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"from") {
        return Err(perr(format!("header must start with `from`, got `{header}`")));
    }
    let expected = column_labels(cols.len() - 1)?;
    if cols[1..] != expected.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        return Err(perr(format!("unexpected column labels `{header}`")));
    }
    let rows_expected = state_labels();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if i >= N_STATES || fields[0] != rows_expected[i] {
            return Err(perr(format!("unexpected row `{}`", fields[0])));
        }
        if fields.len() != cols.len() {
            return Err(Error::Dimension {
                expected: cols.len(),
                actual: fields.len(),
            });
        }
        rows.push(
            fields[1..]
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| perr(format!("`{s}`: {e}"))))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    if rows.len() != N_STATES {
        return Err(Error::Dimension {
            expected: N_STATES,
            actual: rows.len(),
        });
    }
    Ok(rows)
}

/// White-to-blue shade for a value in [0, 1].
fn shade(v: f64) -> String {
    let t = v.clamp(0.0, 1.0);
    let r = (255.0 * (1.0 - t)).round() as u8;
    let g = (255.0 * (1.0 - 0.7 * t)).round() as u8;
    format!("#{r:02x}{g:02x}ff")
}

const CELL: f64 = 32.0;
const MARGIN: f64 = 60.0;

pub fn heatmap_svg(matrix: &[Vec<f64>], title: &str) -> Result<String> {
    let cols = check_heatmap(matrix)?;
    let rows = state_labels();
    let max = matrix.iter().flatten().fold(0.0f64, |m, &v| m.max(v));
    let scale = if max > 0.0 { max } else { 1.0 };
    let w = MARGIN + CELL * cols.len() as f64 + 10.0;
    let h = MARGIN + CELL * rows.len() as f64 + 10.0;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">"#
    )
    .unwrap();
    writeln!(s, r#"<title>{}</title>"#, escape(title)).unwrap();
    writeln!(s, r#"<text x="{}" y="14" font-size="12">{}</text>"#, MARGIN, escape(title)).unwrap();
    for (j, c) in cols.iter().enumerate() {
        let x = MARGIN + CELL * (j as f64 + 0.5);
        writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{c}</text>"#, MARGIN - 6.0).unwrap();
    }
    for (i, (label, row)) in rows.iter().zip(matrix).enumerate() {
        let y = MARGIN + CELL * i as f64;
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{label}</text>"#, MARGIN - 6.0, y + CELL * 0.6).unwrap();
        for (j, v) in row.iter().enumerate() {
            let x = MARGIN + CELL * j as f64;
            writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" data-row="{i}" data-col="{j}" data-value="{v}"/>"#,
                shade(v / scale)
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes `<stem>.csv` and `<stem>.svg`.
pub fn emit_heatmap(matrix: &[Vec<f64>], title: &str, stem: &Path) -> Result<()> {
    let csv = heatmap_csv(matrix)?;
    let svg = heatmap_svg(matrix, title)?;
    write_text(&stem.with_extension("csv"), &csv)?;
    write_text(&stem.with_extension("svg"), &svg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub gap: u32,
    pub mean_acc: f64,
    pub stderr: f64,
    pub n_experiments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSeries {
    pub name: String,
    pub points: Vec<GapPoint>,
}

impl GapSeries {
    pub fn from_report(name: &str, report: &crate::eval::TemporalReport) -> Self {
        Self {
            name: name.to_string(),
            points: report
                .gaps
                .iter()
                .map(|g| GapPoint {
                    gap: g.gap,
                    mean_acc: g.mean_accuracy,
                    stderr: g.stderr,
                    n_experiments: g.n_experiments,
                })
                .collect(),
        }
    }
}

fn check_series(series: &[GapSeries]) -> Result<()> {
    if series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::Invalid("gap curve has no points".into()));
    }
    if let Some(s) = series.iter().find(|s| s.name.contains([',', '\n', '"'])) {
        return Err(Error::Invalid(format!("series name `{}` cannot contain commas or quotes", s.name)));
    }
    Ok(())
}

pub fn gap_curve_csv(series: &[GapSeries]) -> Result<String> {
    check_series(series)?;
    let mut out = String::from("series,gap,mean_acc,stderr,n_experiments\n");
    for s in series {
        for p in &s.points {
            writeln!(out, "{},{},{},{},{}", s.name, p.gap, p.mean_acc, p.stderr, p.n_experiments).unwrap();
        }
    }
    Ok(out)
}

/// Inverse of [`gap_curve_csv`]; series keep their first-appearance order.
pub fn parse_gap_curve_csv(text: &str) -> Result<Vec<GapSeries>> {
    let perr = |m: String| Error::parse("gap curve csv", m);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next() != Some("series,gap,mean_acc,stderr,n_experiments") {
        return Err(perr("missing or unexpected header".into()));
    }
    let mut out: Vec<GapSeries> = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(perr(format!("expected 5 fields in `{line}`")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| perr(format!("`{s}`: {e}")));
        let point = GapPoint {
            gap: f[1].parse().map_err(|e| perr(format!("`{}`: {e}", f[1])))?,
            mean_acc: num(f[2])?,
            stderr: num(f[3])?,
            n_experiments: f[4].parse().map_err(|e| perr(format!("`{}`: {e}", f[4])))?,
        };
        match out.iter_mut().find(|s| s.name == f[0]) {
            Some(s) => s.points.push(point),
            None => out.push(GapSeries {
                name: f[0].to_string(),
                points: vec![point],
            }),
        }
    }
    check_series(&out)?;
    Ok(out)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Line plot of mean accuracy against gap, y axis fixed to [0, 1], with
/// ±stderr bars.
pub fn gap_curve_svg(series: &[GapSeries], title: &str) -> Result<String> {
    check_series(series)?;
    let (w, h, left, top, bottom) = (480.0, 320.0, 50.0, 30.0, 40.0);
    let plot_w = w - left - 20.0;
    let plot_h = h - top - bottom;
    let max_gap = series.iter().flat_map(|s| &s.points).map(|p| p.gap).max().unwrap_or(1);
    let min_gap = series.iter().flat_map(|s| &s.points).map(|p| p.gap).min().unwrap_or(0);
    let span = (max_gap - min_gap).max(1) as f64;
    let x_of = |g: u32| left + plot_w * (g - min_gap) as f64 / span;
    let y_of = |a: f64| top + plot_h * (1.0 - a.clamp(0.0, 1.0));
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">"#
    )
    .unwrap();
    writeln!(s, r#"<title>{}</title>"#, escape(title)).unwrap();
    writeln!(s, r#"<text x="{left}" y="16" font-size="12">{}</text>"#, escape(title)).unwrap();
    writeln!(
        s,
        r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        top + plot_h,
        left + plot_w,
        top + plot_h
    )
    .unwrap();
    writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, top + plot_h).unwrap();
    for g in min_gap..=max_gap {
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{g}</text>"#, x_of(g), top + plot_h + 14.0).unwrap();
    }
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{tick}</text>"#, left - 4.0, y_of(tick) + 3.0).unwrap();
    }
    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = ser.points.iter().map(|p| format!("{},{}", x_of(p.gap), y_of(p.mean_acc))).collect();
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" points="{}" data-series="{}"/>"#,
            pts.join(" "),
            escape(&ser.name)
        )
        .unwrap();
        for p in &ser.points {
            let x = x_of(p.gap);
            writeln!(
                s,
                r#"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="{color}" data-series="{}" data-gap="{}" data-stderr="{}"/>"#,
                y_of(p.mean_acc + p.stderr),
                y_of(p.mean_acc - p.stderr),
                escape(&ser.name),
                p.gap,
                p.stderr
            )
            .unwrap();
            writeln!(
                s,
                r#"<circle cx="{x}" cy="{}" r="3" fill="{color}" data-series="{}" data-gap="{}" data-mean="{}"/>"#,
                y_of(p.mean_acc),
                escape(&ser.name),
                p.gap,
                p.mean_acc
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            left + 10.0,
            top + 12.0 * (k as f64 + 1.0),
            escape(&ser.name)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_gap_curve(series: &[GapSeries], title: &str, stem: &Path) -> Result<()> {
    let csv = gap_curve_csv(series)?;
    let svg = gap_curve_svg(series, title)?;
    write_text(&stem.with_extension("csv"), &csv)?;
    write_text(&stem.with_extension("svg"), &svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn identity() -> Vec<Vec<f64>> {
        (0..17).map(|i| (0..17).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
    }

    fn cell_values(svg: &str) -> Vec<(usize, usize, f64)> {
        svg.lines()
            .filter(|l| l.starts_with("<rect"))
            .map(|l| {
                let attr = |name: &str| {
                    let start = l.find(&format!("{name}=\"")).unwrap() + name.len() + 2;
                    let end = start + l[start..].find('"').unwrap();
                    l[start..end].to_string()
                };
                (
                    attr("data-row").parse().unwrap(),
                    attr("data-col").parse().unwrap(),
                    attr("data-value").parse().unwrap(),
                )
            })
            .collect()
    }

    #[test]
    fn identity_heatmap() {
        let m = identity();
        let csv = heatmap_csv(&m).unwrap();
        assert!(csv.starts_with("from,N,S,J,JS,F,"));
        assert!(csv.lines().next().unwrap().ends_with(",no-act"));
        assert_eq!(parse_heatmap_csv(&csv).unwrap(), m);
        let svg = heatmap_svg(&m, "identity").unwrap();
        let cells = cell_values(&svg);
        assert_eq!(cells.len(), 289);
        for (i, j, v) in cells {
            assert_eq!(v, if i == j { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn dropped_noact_column() {
        let m: Vec<Vec<f64>> = identity().into_iter().map(|mut r| {
            r.pop();
            r
        }).collect();
        let csv = heatmap_csv(&m).unwrap();
        let header = csv.lines().next().unwrap();
        assert_eq!(header.split(',').count(), 17);
        assert!(!header.contains("no-act"));
        assert_eq!(parse_heatmap_csv(&csv).unwrap(), m);
    }

    #[test]
    fn heatmap_dimension_errors() {
        assert!(heatmap_csv(&vec![vec![0.0; 17]; 16]).is_err());
        assert!(heatmap_csv(&vec![vec![0.0; 15]; 17]).is_err());
        let mut ragged = identity();
        ragged[3].pop();
        assert!(heatmap_csv(&ragged).is_err());
    }

    fn series(name: &str, means: &[f64], stderr: f64) -> GapSeries {
        GapSeries {
            name: name.into(),
            points: means
                .iter()
                .enumerate()
                .map(|(i, &m)| GapPoint {
                    gap: i as u32 + 1,
                    mean_acc: m,
                    stderr,
                    n_experiments: 8 - i,
                })
                .collect(),
        }
    }

    #[test]
    fn gap_curve_points_and_bars() {
        let s = vec![series("er", &[0.9; 7], 0.0)];
        let svg = gap_curve_svg(&s, "flat").unwrap();
        assert_eq!(svg.matches("<circle").count(), 7);
        assert_eq!(svg.matches("data-stderr=\"0\"").count(), 7);
        // zero-height bars
        for l in svg.lines().filter(|l| l.contains("data-stderr")) {
            let y1 = l.split("y1=\"").nth(1).unwrap().split('"').next().unwrap();
            let y2 = l.split("y2=\"").nth(1).unwrap().split('"').next().unwrap();
            assert_eq!(y1, y2);
        }
        assert!(gap_curve_csv(&[]).is_err());
        assert!(gap_curve_csv(&[series("x", &[], 0.0)]).is_err());
    }

    #[test]
    fn two_series_round_trip() {
        let s = vec![
            series("er", &[0.95, 0.94, 0.96, 0.95, 0.95, 0.94, 0.95], 0.01),
            series("tfidf", &[0.9, 0.85, 0.8, 0.75, 0.7, 0.62, 0.55], 0.02),
        ];
        let csv = gap_curve_csv(&s).unwrap();
        assert_eq!(parse_gap_curve_csv(&csv).unwrap(), s);
        assert_eq!(gap_curve_svg(&s, "two").unwrap().matches("<polyline").count(), 2);
    }

    proptest! {
        #[test]
        fn heatmap_csv_round_trips(values in prop::collection::vec(-1e6f64..1e6, 289)) {
            let m: Vec<Vec<f64>> = values.chunks(17).map(<[f64]>::to_vec).collect();
            prop_assert_eq!(parse_heatmap_csv(&heatmap_csv(&m).unwrap()).unwrap(), m);
        }

        #[test]
        fn gap_csv_round_trips(points in prop::collection::vec((1u32..20, 0.0f64..1.0, 0.0f64..0.5, 1usize..10), 1..10)) {
            let s = vec![GapSeries {
                name: "s".into(),
                points: points.into_iter().map(|(gap, mean_acc, stderr, n_experiments)| GapPoint { gap, mean_acc, stderr, n_experiments }).collect(),
            }];
            prop_assert_eq!(parse_gap_curve_csv(&gap_curve_csv(&s).unwrap()).unwrap(), s);
        }
    }
}
