//! CSV tables and JSON manifests.
//!
//! Every CSV file starts with a comment line `# schema_version=1 table=<name>`
//! followed by a header row. Floats are written as `{:.16e}` (17 significant
//! digits), which round-trips exactly and keeps reruns diffable.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cavity::CavityEstimate;
use crate::graphs::ResonanceRow;
use crate::phase::{ContinuityRow, EdgePoint, PhaseGrid};
use crate::stats::{Histogram, StatsReport};
use crate::Result;

pub const SCHEMA_VERSION: u32 = 1;

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

/// Empty field for `None`.
pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# schema_version={SCHEMA_VERSION} table={}", self.name)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
    }

    /// Writes to a sibling temporary file and renames it over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("csv.tmp");
        self.write(fs::File::create(&tmp)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }
}

/// Reads a table written by [`Table::write`], checking the schema line.
pub fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path)?;
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    let name = first
        .strip_prefix(&format!("# schema_version={SCHEMA_VERSION} table="))
        .ok_or_else(|| crate::Error::Config(format!("{}: missing or unsupported schema line", path.display())))?;
    let mut r = csv::Reader::from_reader(rest.as_bytes());
    let header = r.headers()?.iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.map(|rec| rec.iter().map(String::from).collect())).collect::<std::result::Result<_, _>>()?;
    Ok(Table { name: name.trim().into(), header, rows })
}

/// `value, std_error, systematic_error, n_effective, eta` of an estimate.
pub fn estimate_fields(e: &CavityEstimate) -> [String; 5] {
    [fmt_f64(e.value), fmt_f64(e.std_error), fmt_f64(e.systematic_error), e.n_effective.to_string(), fmt_f64(e.eta)]
}

pub fn phase_grid_table(k: u32, grid: &PhaseGrid) -> Table {
    let mut t = Table::new(
        "phase_grid",
        &["K", "lambda", "E", "L_value", "L_se", "phi1_value", "phi1_se", "phi_source", "dos_value", "dos_se", "label", "margin_sigma", "seed"],
    );
    for p in &grid.points {
        let l = p.lyapunov.as_ref();
        let phi = p.phi_at_one.as_ref();
        let d = p.dos.as_ref();
        t.push(vec![
            k.to_string(),
            fmt_f64(p.lambda),
            fmt_f64(p.energy),
            fmt_opt(l.map(|e| e.value)),
            fmt_opt(l.map(|e| e.std_error)),
            fmt_opt(phi.map(|e| e.value)),
            fmt_opt(phi.map(|e| e.std_error)),
            p.phi_source.map(|s| serde_json::to_value(s).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()).unwrap_or_default(),
            fmt_opt(d.map(|e| e.value)),
            fmt_opt(d.map(|e| e.std_error)),
            p.label.as_str().into(),
            fmt_opt(p.margin),
            p.seed.to_string(),
        ]);
    }
    t
}

pub fn polyline_table(edge: &[EdgePoint]) -> Table {
    let mut t = Table::new("mobility_edge", &["lambda", "E_edge", "criterion"]);
    for p in edge {
        let c = match p.criterion {
            crate::phase::Criterion::Lyapunov => "lyapunov",
            crate::phase::Criterion::Phi => "phi",
        };
        t.push(vec![fmt_f64(p.lambda), fmt_f64(p.energy), c.into()]);
    }
    t
}

pub fn stats_table(rows: &[StatsReport]) -> Table {
    let mut t = Table::new(
        "spectral_stats",
        &["K", "lambda", "E", "N_or_L", "n_realizations", "mean_r", "se_r", "tv_poisson", "tv_goe", "median_pr_fraction", "class", "seed"],
    );
    for r in rows {
        let class = serde_json::to_value(r.class).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        t.push(vec![
            r.k.to_string(),
            fmt_f64(r.lambda),
            r.energy.map(fmt_f64).unwrap_or_else(|| "bulk".into()),
            r.size.to_string(),
            r.n_realizations.to_string(),
            fmt_f64(r.mean_r),
            fmt_f64(r.se_r),
            fmt_f64(r.tv_poisson),
            fmt_f64(r.tv_goe),
            fmt_opt(r.median_pr_fraction),
            class,
            r.seed.to_string(),
        ]);
    }
    t
}

pub fn histogram_table(h: &Histogram) -> Table {
    let mut t = Table::new("spacing_histogram", &["bin_center", "density"]);
    for (c, d) in h.centers.iter().zip(&h.density) {
        t.push(vec![fmt_f64(*c), fmt_f64(*d)]);
    }
    t
}

pub fn resonance_table(rows: &[ResonanceRow]) -> Table {
    let mut t = Table::new("resonance", &["R", "delta", "n_realizations", "p_hit", "p_hit_se", "mean_count", "mean_count_se"]);
    for r in rows {
        t.push(vec![
            r.radius.to_string(),
            fmt_f64(r.delta),
            r.n_realizations.to_string(),
            fmt_f64(r.p_hit),
            fmt_f64(r.p_hit_se),
            fmt_f64(r.mean_count),
            fmt_f64(r.mean_count_se),
        ]);
    }
    t
}

pub fn continuity_table(rows: &[ContinuityRow]) -> Table {
    let mut t = Table::new("continuity", &["lambda", "integral", "integral_se", "reference", "difference", "exact_difference"]);
    for r in rows {
        t.push(vec![
            fmt_f64(r.lambda),
            fmt_f64(r.integral),
            fmt_f64(r.integral_se),
            fmt_f64(r.reference),
            fmt_f64(r.difference),
            fmt_opt(r.exact_difference),
        ]);
    }
    t
}

/// Everything needed to rerun a command. Contains no timestamps so that
/// reruns produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    /// Fully resolved configuration with defaults materialized.
    pub config: serde_json::Value,
    pub master_seed: u64,
    /// How per-task streams are derived from the master seed.
    pub streams: String,
    pub workers: usize,
    pub outputs: Vec<String>,
    pub status: String,
    pub warnings: Vec<String>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&tmp, text)?;
    fs::rename(tmp, path)?;
    Ok(())
}
