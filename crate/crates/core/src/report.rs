//! Metric rows, CSV output and static SVG plots.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// One row of `metrics.csv`, taken at a collection point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub iteration: u64,
    pub jsd_nats: Option<f64>,
    pub test_error: Option<f64>,
    pub n_gen_samples: usize,
    pub wallclock_s: Option<f64>,
}

pub const METRICS_HEADER: &str = "iteration,jsd_nats,test_error,n_gen_samples,wallclock_s";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

/// CSV text for `records`. Missing values are empty fields.
pub fn metrics_csv(records: &[MetricRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.iteration,
            opt(r.jsd_nats),
            opt(r.test_error),
            r.n_gen_samples,
            r.wallclock_s.map(|w| format!("{w:.3}")).unwrap_or_default()
        );
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn write_metrics(path: &Path, records: &[MetricRecord]) -> Result<()> {
    write_text(path, &metrics_csv(records))
}

/// Parses a file written by [`write_metrics`].
pub fn parse_metrics(text: &str) -> Result<Vec<MetricRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::Data("metrics file has an unexpected header".into()));
    }
    let field = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| Error::Data(format!("bad number '{s}'")))
        }
    };
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 5 {
                return Err(Error::Data(format!("metrics row has {} fields", f.len())));
            }
            Ok(MetricRecord {
                iteration: f[0].parse().map_err(|_| Error::Data(format!("bad iteration '{}'", f[0])))?,
                jsd_nats: field(f[1])?,
                test_error: field(f[2])?,
                n_gen_samples: f[3].parse().map_err(|_| Error::Data(format!("bad count '{}'", f[3])))?,
                wallclock_s: field(f[4])?,
            })
        })
        .collect()
}

/// Comma-separated matrix with a header row.
pub fn matrix_csv(header: &[String], rows: usize, cols: usize, data: &[f64]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in 0..rows {
        let row = &data[r * cols..(r + 1) * cols];
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in points.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 <= 0.0 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 <= 0.0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open_svg(title: &str, f: &Frame, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="30" font-family="sans-serif" font-size="18" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#333333"/>"##,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{}" font-family="sans-serif" font-size="14" text-anchor="middle" transform="rotate(-90 20 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (v, anchor, x, y) in [
        (f.x0, "start", MARGIN, HEIGHT - MARGIN + 18.0),
        (f.x1, "end", WIDTH - MARGIN, HEIGHT - MARGIN + 18.0),
    ] {
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{y}" font-family="sans-serif" font-size="11" text-anchor="{anchor}">{v:.3}</text>"#
        );
    }
    for (v, y) in [(f.y0, HEIGHT - MARGIN), (f.y1, MARGIN + 10.0)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.3}</text>"#,
            MARGIN - 4.0
        );
    }
    s
}

fn legend(s: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN + 15.0 + 18.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            WIDTH - MARGIN - 150.0,
            y - 9.0,
            WIDTH - MARGIN - 135.0,
            y,
            escape(name)
        );
    }
}

/// A named set of 2-D points.
pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// Static scatter plot, one color per series.
pub fn scatter_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let frame = Frame::fit(series.iter().flat_map(|s| s.points.iter().copied()));
    let mut s = open_svg(title, &frame, x_label, y_label);
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(s, r#"<g fill="{color}" fill-opacity="0.5">"#);
        for &(x, y) in ser.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2"/>"#, frame.px(x), frame.py(y));
        }
        s.push_str("</g>\n");
    }
    legend(&mut s, &series.iter().map(|x| x.name).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}

/// Static line plot, one polyline per series.
pub fn line_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let frame = Frame::fit(series.iter().flat_map(|s| s.points.iter().copied()));
    let mut s = open_svg(title, &frame, x_label, y_label);
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
    }
    legend(&mut s, &series.iter().map(|x| x.name).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_missing_fields() {
        let recs = vec![
            MetricRecord {
                iteration: 100,
                jsd_nats: Some(0.125),
                test_error: None,
                n_gen_samples: 20,
                wallclock_s: None,
            },
            MetricRecord {
                iteration: 200,
                jsd_nats: None,
                test_error: Some(0.3),
                n_gen_samples: 40,
                wallclock_s: Some(1.5),
            },
        ];
        let text = metrics_csv(&recs);
        assert!(text.starts_with(METRICS_HEADER));
        assert_eq!(text.lines().nth(1).unwrap(), "100,1.25000000000000000e-1,,20,");
        assert_eq!(parse_metrics(&text).unwrap(), recs);
    }

    #[test]
    fn svg_is_static_with_fixed_viewbox() {
        let s = scatter_svg(
            "a < b",
            "x",
            "y",
            &[Series {
                name: "data",
                points: vec![(0.0, 1.0), (2.0, 3.0)],
            }],
        );
        assert!(s.contains(r#"viewBox="0 0 800 600""#));
        assert!(!s.contains("<script"));
        assert!(s.contains("a &lt; b"));
        assert_eq!(s.matches("<circle").count(), 2);
        let l = line_svg("jsd", "iteration", "nats", &[Series { name: "ml", points: vec![(1.0, 0.5)] }]);
        assert!(l.contains("<polyline"));
    }
}
