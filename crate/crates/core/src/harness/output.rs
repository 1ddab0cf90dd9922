//! Result files: metric CSVs with a provenance line, the JSON manifest, SVG plots.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::Telemetry;
use crate::error::{Error, Result};

/// A metric table; every cell is already formatted.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// CSV text whose first line records the config hash, seed and command.
    pub fn render(&self, provenance: &Provenance) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(ser)?;
        for r in &self.rows {
            w.write_record(r).map_err(ser)?;
        }
        let body = String::from_utf8(w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?)
            .map_err(|e| Error::Serialization(e.to_string()))?;
        Ok(format!(
            "# config_hash={},seed={},command={}\n{body}",
            provenance.config_hash, provenance.seed, provenance.command
        ))
    }
}

fn ser(e: csv::Error) -> Error {
    Error::Serialization(e.to_string())
}

/// Shortest round-trip representation, so files are exact and reproducible.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:?}")
    }
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub command: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDigest {
    pub label: String,
    pub time: f64,
    pub sha256: String,
}

/// Provenance and telemetry of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub workers: usize,
    pub dump_velocities: bool,
    /// The configuration text exactly as read.
    pub config: String,
    pub outputs: Vec<FileDigest>,
    pub snapshots: Vec<SnapshotDigest>,
    pub telemetry: Telemetry,
    pub wall_clock_seconds: f64,
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of velocities as little-endian bytes, in run order.
pub fn velocity_digest<'a>(runs: impl IntoIterator<Item = &'a Vec<f64>>) -> String {
    let mut h = Sha256::new();
    for r in runs {
        for x in r {
            h.update(x.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Writes files into the output directory and remembers their digests.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<FileDigest>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.root.join(name), contents)?;
        self.written.push(FileDigest {
            file: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    pub fn write_table(&mut self, table: &CsvTable, provenance: &Provenance) -> Result<()> {
        let text = table.render(provenance)?;
        self.write(&format!("{}.csv", table.name), &text)
    }

    pub fn digests(&self) -> &[FileDigest] {
        &self.written
    }

    pub fn write_manifest(&self, manifest: &Manifest) -> Result<()> {
        let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Serialization(e.to_string()))?;
        fs::write(self.root.join("manifest.json"), text)?;
        Ok(())
    }
}

/// One curve with optional symmetric error bars.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Self-contained SVG line plot.
pub fn svg_plot(title: &str, x_label: &str, y_label: &str, series: &[Series], log_x: bool) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 150.0, 40.0, 50.0);
    let fx = |x: f64| if log_x { x.max(f64::MIN_POSITIVE).log10() } else { x };
    let pts: Vec<(f64, f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|p| p.0.is_finite() && p.1.is_finite() && (!log_x || p.0 > 0.0))
        .collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    if pts.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y, e) in &pts {
        let e = if e.is_finite() { e } else { 0.0 };
        x0 = x0.min(fx(x));
        x1 = x1.max(fx(x));
        y0 = y0.min(y - e);
        y1 = y1.max(y + e);
    }
    y0 = y0.min(0.0);
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (fx(x) - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * ph;
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let yv = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{:.3}</text>"#,
            left - 6.0,
            sy(yv) + 4.0,
            yv
        );
        let xv = x0 + (x1 - x0) * i as f64 / 4.0;
        let label = if log_x { 10f64.powf(xv) } else { xv };
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{:.3}</text>"#,
            left + pw * i as f64 / 4.0,
            top + ph + 16.0,
            label
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let valid: Vec<&(f64, f64, f64)> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite() && (!log_x || p.0 > 0.0))
            .collect();
        let path: Vec<String> = valid.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        for p in valid {
            let (cx, cy) = (sx(p.0), sy(p.1));
            let _ = writeln!(svg, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{color}"/>"#);
            if p.2.is_finite() && p.2 > 0.0 {
                let _ = writeln!(
                    svg,
                    r#"<line x1="{cx:.2}" x2="{cx:.2}" y1="{:.2}" y2="{:.2}" stroke="{color}"/>"#,
                    sy(p.1 - p.2),
                    sy(p.1 + p.2)
                );
            }
        }
        let ly = top + 16.0 * (k as f64 + 1.0);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            w - right + 10.0,
            w - right + 30.0,
            w - right + 36.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
