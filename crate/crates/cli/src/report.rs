//! Report bundles and their CSV / JSON renderings.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use fraclab_core::ineq_lab::{CheckReport, CounterTable};
use fraclab_core::isoperimetry::IsoReport;

pub const CSV_HEADER: [&str; 16] = [
    "theorem",
    "n",
    "m",
    "delta",
    "p",
    "q",
    "alpha",
    "r",
    "s",
    "epsilon",
    "lhs",
    "rhs_core",
    "empirical_constant",
    "explicit_constant",
    "pass_explicit",
    "runtime_ms",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scenario: String,
    /// SHA-256 of the raw scenario bytes, hex encoded.
    pub scenario_hash: String,
    pub version: String,
    pub seed: u64,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub provenance: Provenance,
    pub checks: Vec<CheckReport>,
    #[serde(default)]
    pub iso: Vec<IsoReport>,
    #[serde(default)]
    pub counterexamples: Vec<CounterTable>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl ReportBundle {
    /// Number of checks whose explicit-constant comparison failed.
    pub fn hard_failures(&self) -> usize {
        let checks = self
            .checks
            .iter()
            .filter(|c| c.pass_explicit == Some(false))
            .count();
        let iso = self
            .iso
            .iter()
            .filter(|r| r.precondition_ok && r.pass_explicit == Some(false))
            .count();
        checks + iso
    }
}

fn real(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

fn opt_real(v: Option<f64>) -> String {
    v.map(real).unwrap_or_default()
}

pub fn csv_row(c: &CheckReport) -> [String; 16] {
    let p = &c.params;
    [
        c.theorem.to_string(),
        c.n.to_string(),
        c.m.to_string(),
        real(p.delta),
        real(p.p),
        opt_real(p.q),
        opt_real(p.alpha),
        real(p.r),
        real(p.s),
        real(p.epsilon),
        real(c.lhs),
        real(c.rhs_core),
        real(c.empirical_constant),
        opt_real(c.explicit_constant),
        c.pass_explicit.map(|b| b.to_string()).unwrap_or_default(),
        c.runtime_ms.to_string(),
    ]
}

pub fn write_csv<W: Write>(bundle: &ReportBundle, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for c in &bundle.checks {
        w.write_record(csv_row(c))?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(bundle: &ReportBundle) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(bundle, &mut buf)?;
    Ok(String::from_utf8(buf)?)
}

pub fn to_json_string(bundle: &ReportBundle) -> Result<String> {
    let mut s = serde_json::to_string_pretty(bundle)?;
    s.push('\n');
    Ok(s)
}

pub fn from_json_str(text: &str) -> Result<ReportBundle> {
    serde_json::from_str(text).context("parsing report bundle")
}

pub fn render(bundle: &ReportBundle, format: Format) -> Result<String> {
    match format {
        Format::Csv => to_csv_string(bundle),
        Format::Json => to_json_string(bundle),
    }
}

/// Writes the bundle to `path`, or to stdout when `path` is `None`.
pub fn emit_report(bundle: &ReportBundle, format: Format, path: Option<&Path>) -> Result<()> {
    let text = render(bundle, format)?;
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// One line per row of a counterexample table.
pub fn counter_csv(table: &CounterTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["family", "k", "lhs_lower_bound", "lhs_exact", "rhs_upper_bound", "ratio"])?;
    for r in &table.rows {
        w.write_record([
            table.family.to_string(),
            r.k.to_string(),
            real(r.lhs_lower_bound),
            real(r.lhs_exact),
            real(r.rhs_upper_bound),
            real(r.ratio),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}
