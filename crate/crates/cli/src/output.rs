//! File emission: atomic writes, CSV schemas consumed by the plotting scripts, and run manifests.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use shks_core::experiments::{
    PathSummary, ScanRow, SpectralConvergence, TemporalConvergence, TransformRefinement,
};
use shks_core::integrator::TransformComparison;
use shks_core::{PathStatus, TrajectoryRecord};
use toml::Table;

use crate::config::{unflatten, Flat};

pub const TRAJECTORY_HEADER: &str = "t,hs_norm,w1inf_norm,log_energy";
pub const ENSEMBLE_HEADER: &str = "path_id,status,t_stop,final_hs";
pub const SCAN_HEADER: &str = "value,n_survived,p_hat,ci_low,ci_high,theory_bound";

/// Shortest decimal that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Writes through a sibling temp file and renames it into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Output directory that remembers every file it wrote, for the manifest.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> std::io::Result<()> {
        write_atomic(&self.path(name), contents.as_bytes())?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

pub fn trajectory_csv(record: &TrajectoryRecord) -> String {
    let mut out = format!("{TRAJECTORY_HEADER}\n");
    for i in 0..record.times.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            num(record.times[i]),
            num(record.hs_norms[i]),
            num(record.w1inf_norms[i]),
            num(record.log_energy[i])
        );
    }
    out
}

#[derive(Debug, Serialize)]
struct TrajectoryMeta<'a> {
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_stop: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_fail: Option<f64>,
    seed: u64,
    /// Stopping is a threshold crossing on the grid, not a resolved singularity.
    surrogate: bool,
    config: &'a Table,
}

/// Side-car record for a trajectory CSV.
pub fn trajectory_meta(record: &TrajectoryRecord, config: &Flat) -> String {
    let table = unflatten(config);
    let (t_stop, t_fail) = match record.status {
        PathStatus::Stopped { t_stop } => (Some(t_stop), None),
        PathStatus::NonFinite { t_fail } => (None, Some(t_fail)),
        PathStatus::Survived => (None, None),
    };
    to_toml(&TrajectoryMeta {
        status: record.status.label(),
        t_stop,
        t_fail,
        seed: record.seed,
        surrogate: true,
        config: &table,
    })
}

pub fn ensemble_csv(paths: &[PathSummary]) -> String {
    let mut out = format!("{ENSEMBLE_HEADER}\n");
    for p in paths {
        let _ = writeln!(out, "{},{},{},{}", p.path_id, p.status, opt(p.t_stop), num(p.final_hs));
    }
    out
}

pub fn scan_csv(rows: &[ScanRow]) -> String {
    let mut out = format!("{SCAN_HEADER}\n");
    for row in rows {
        let r = &row.report;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            num(row.value),
            r.n_survived,
            num(r.p_hat),
            num(r.ci_low),
            num(r.ci_high),
            opt(r.theory_bound)
        );
    }
    out
}

pub fn temporal_csv(study: &TemporalConvergence) -> String {
    let mut out = String::from("dt,error\n");
    for (dt, e) in study.dts.iter().zip(&study.errors) {
        let _ = writeln!(out, "{},{}", num(*dt), num(*e));
    }
    out
}

pub fn spectral_csv(study: &SpectralConvergence) -> String {
    let mut out = String::from("n,error\n");
    for (n, e) in study.ns.iter().zip(&study.errors) {
        let _ = writeln!(out, "{n},{}", num(*e));
    }
    out
}

pub fn transform_refinement_csv(study: &TransformRefinement) -> String {
    let mut out = String::from("dt,final_discrepancy,max_discrepancy\n");
    for i in 0..study.dts.len() {
        let _ = writeln!(
            out,
            "{},{},{}",
            num(study.dts[i]),
            num(study.final_discrepancy[i]),
            num(study.max_discrepancy[i])
        );
    }
    out
}

pub fn transform_series_csv(cmp: &TransformComparison) -> String {
    let mut out = String::from("t,discrepancy\n");
    for (t, d) in cmp.times.iter().zip(&cmp.discrepancies) {
        let _ = writeln!(out, "{},{}", num(*t), num(*d));
    }
    out
}

pub fn kappa_csv(ratios: &[Option<f64>], amplitudes: &[f64]) -> String {
    let mut out = String::from("sample,amplitude,ratio\n");
    for (i, r) in ratios.iter().enumerate() {
        let _ = writeln!(out, "{i},{},{}", num(amplitudes[i % amplitudes.len()]), opt(*r));
    }
    out
}

pub fn to_toml<T: Serialize + ?Sized>(value: &T) -> String {
    toml::to_string(value).expect("report types serialize to TOML")
}

#[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub master_seed: u64,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
    /// Fully resolved configuration; re-parses to the same run.
    pub config: Table,
    /// Values read from `--config`, before overrides.
    pub file_values: Table,
    /// `--set`, `--seed` and `--paths` values, which take precedence.
    pub overrides: Table,
}

impl RunManifest {
    pub fn to_toml(&self) -> String {
        to_toml(self)
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}
