//! Driver results and their emission as CSV, a JSON envelope and SVG charts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Version of the JSON envelope layout.
pub const OUTPUT_SCHEMA_VERSION: u32 = 1;

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VERDICT_FAILURE: i32 = 2;

/// A JSON value for a float; non-finite values become strings.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or_else(|| Value::String(x.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        Self { columns: columns.iter().map(|c| c.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Rows as objects keyed by column name.
    pub fn records(&self) -> Vec<Value> {
        self.rows
            .iter()
            .map(|r| {
                let m: Map<String, Value> = self.columns.iter().cloned().zip(r.iter().cloned()).collect();
                Value::Object(m)
            })
            .collect()
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Value>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[j]).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

/// Everything one driver produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverReport {
    pub driver: String,
    pub table: Table,
    /// Secondary tables, written as `<driver>_<name>.csv`.
    pub extra: Vec<(String, Table)>,
    pub verdicts: Vec<Verdict>,
    pub notes: Vec<String>,
    pub charts: Vec<Chart>,
}

impl DriverReport {
    pub fn new(driver: &str, table: Table) -> Self {
        Self { driver: driver.into(), table, extra: Vec::new(), verdicts: Vec::new(), notes: Vec::new(), charts: Vec::new() }
    }

    pub fn verdict(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.verdicts.push(Verdict::new(name, passed, detail));
    }

    pub fn failures(&self) -> Vec<&Verdict> {
        self.verdicts.iter().filter(|v| !v.passed).collect()
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() { EXIT_SUCCESS } else { EXIT_VERDICT_FAILURE }
    }

    pub fn find(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn envelope(&self, config_hash: &str) -> Value {
        let extra: Map<String, Value> =
            self.extra.iter().map(|(n, t)| (n.clone(), Value::Array(t.records()))).collect();
        serde_json::json!({
            "config_hash": config_hash,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "schema_version": OUTPUT_SCHEMA_VERSION,
            "driver": self.driver,
            "rows": self.table.records(),
            "extra_tables": extra,
            "verdicts": self.verdicts,
            "failures": self.failures(),
            "notes": self.notes,
        })
    }
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// RFC 4180 CSV with LF line endings and `.` decimals.
pub fn csv_bytes(table: &Table) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let internal = |e: csv::Error| Error::Internal(format!("csv: {e}"));
    w.write_record(&table.columns).map_err(internal)?;
    for r in &table.rows {
        w.write_record(r.iter().map(csv_cell)).map_err(internal)?;
    }
    w.into_inner().map_err(|e| Error::Internal(format!("csv: {e}")))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `<driver>.csv`, `<driver>.json`, secondary tables and, when
/// requested, `<driver>.svg` into `dir`. Returns the written paths.
pub fn emit(report: &DriverReport, config_hash: &str, dir: &Path, svg: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let csv_path = dir.join(format!("{}.csv", report.driver));
    write_file(&csv_path, &csv_bytes(&report.table)?)?;
    written.push(csv_path);
    for (name, t) in &report.extra {
        let p = dir.join(format!("{}_{name}.csv", report.driver));
        write_file(&p, &csv_bytes(t)?)?;
        written.push(p);
    }
    let json_path = dir.join(format!("{}.json", report.driver));
    let mut text = serde_json::to_string_pretty(&report.envelope(config_hash)).map_err(|e| Error::Internal(e.to_string()))?;
    text.push('\n');
    write_file(&json_path, text.as_bytes())?;
    written.push(json_path);
    if svg && !report.charts.is_empty() {
        let p = dir.join(format!("{}.svg", report.driver));
        write_file(&p, svg_document(&report.charts).as_bytes())?;
        written.push(p);
    }
    Ok(written)
}

const PANEL_W: f64 = 520.0;
const PANEL_H: f64 = 320.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(chart: &Chart) -> (f64, f64, f64, f64) {
    let pts = chart.series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    let pad = |lo: f64, hi: f64| if hi - lo < 1e-12 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    let (x0, x1) = pad(x0, x1);
    let (y0, y1) = pad(y0, y1);
    let dy = 0.05 * (y1 - y0);
    (x0, x1, y0 - dy, y1 + dy)
}

/// Static line charts stacked vertically in one SVG document.
pub fn svg_document(charts: &[Chart]) -> String {
    let height = PANEL_H * charts.len() as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PANEL_W}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    for (i, c) in charts.iter().enumerate() {
        let top = PANEL_H * i as f64;
        let (x0, x1, y0, y1) = bounds(c);
        let (pw, ph) = (PANEL_W - 1.5 * MARGIN, PANEL_H - 2.0 * MARGIN);
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| top + MARGIN + (1.0 - (y - y0) / (y1 - y0)) * ph;
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="13">{}</text>"#, MARGIN, top + 22.0, escape(&c.title));
        let _ = writeln!(
            out,
            r##"<rect x="{:.1}" y="{:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="#444"/>"##,
            MARGIN,
            top + MARGIN
        );
        for k in 0..=4 {
            let fx = x0 + (x1 - x0) * k as f64 / 4.0;
            let fy = y0 + (y1 - y0) * k as f64 / 4.0;
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                sx(fx),
                top + MARGIN + ph + 14.0,
                tick(fx)
            );
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, MARGIN - 4.0, sy(fy) + 4.0, tick(fy));
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            MARGIN + pw / 2.0,
            top + PANEL_H - 12.0,
            escape(&c.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="12" y="{:.1}" transform="rotate(-90 12 {:.1})" text-anchor="middle">{}</text>"#,
            top + MARGIN + ph / 2.0,
            top + MARGIN + ph / 2.0,
            escape(&c.y_label)
        );
        for (j, s) in c.series.iter().enumerate() {
            let colour = PALETTE[j % PALETTE.len()];
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(out, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" fill="{colour}">{}</text>"#,
                MARGIN + pw + 6.0 - 60.0,
                top + MARGIN + 14.0 * (j as f64 + 1.0),
                escape(&s.name)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) { format!("{v:.2e}") } else { format!("{v:.3}") }
}
