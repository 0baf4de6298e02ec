//! Scripted experiments with machine-readable reports.
//!
//! Every experiment takes an [`ExperimentConfig`], re-verifies the discs it
//! builds and returns a [`ResultTable`]. Tables serialize to JSON
//! (`{config_hash, columns, rows, metadata}`) and CSV.

mod family;
mod r6;
mod schwarz;
mod sweeps;

pub use family::{run_family_2b, run_jet2_family};
pub use r6::{make_r6_disc, run_r6};
pub use schwarz::{run_cz, run_schwarz2, run_tcg_test, schwarz2_check, Schwarz2Report};
pub use sweeps::{run_hypersurface, run_psconvex};

use crate::disc_solver::SolverOptions;
use crate::discgrid::{local_cubic, make_grid, DiscGrid, GridMap, LocalCubic};
use crate::geometry::{dilate, preset, StructureField};
use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

/// Parameters shared by all experiments. Empty sweep lists select the
/// experiment's default sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Structure preset name, e.g. `"chirka-perturbed(0.05)"`.
    pub structure: Option<String>,
    /// Extra dilation `p ↦ J(dilation·p)`; 1 leaves the structure alone.
    pub dilation: f64,
    pub grid: usize,
    pub solver: SolverOptions,
    /// Boundary distances for the pseudoconvex sweep.
    pub distances: Vec<f64>,
    /// `δ` (or `c`) values for the punctured-disc and CZ sweeps.
    pub deltas: Vec<f64>,
    /// Parameters of the 2.B family.
    pub t_values: Vec<f64>,
    /// Defining function for the 2-jet family.
    pub rho: Option<String>,
    /// Number of random discs where a family is sampled.
    pub discs: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            structure: None,
            dilation: 1.0,
            grid: 128,
            solver: SolverOptions::default(),
            distances: vec![],
            deltas: vec![],
            t_values: vec![],
            rho: None,
            discs: 120,
            seed: 7,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(src: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(src).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&src)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid < 32 || self.grid % 2 != 0 {
            return Err(Error::Config(format!("grid N must be even and >= 32, got {}", self.grid)));
        }
        if !(self.dilation > 0.0 && self.dilation <= 1.0) {
            return Err(Error::Config(format!("dilation {} not in (0, 1]", self.dilation)));
        }
        if let Some(s) = &self.structure {
            preset(s)?;
        }
        for (name, list) in [("distances", &self.distances), ("deltas", &self.deltas)] {
            if list.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
                return Err(Error::Config(format!("{name} entries must lie in (0, 1)")));
            }
        }
        if self.t_values.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("t_values must be finite".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    fn structure_or(&self, default: &str) -> Result<StructureField> {
        let j = preset(self.structure.as_deref().unwrap_or(default))?;
        if self.dilation < 1.0 {
            dilate(&j, self.dilation)
        } else {
            Ok(j)
        }
    }

    fn grid(&self) -> Result<Arc<DiscGrid>> {
        self.validate()?;
        make_grid(self.grid)
    }

    fn list_or(list: &[f64], default: &[f64]) -> Vec<f64> {
        if list.is_empty() {
            default.to_vec()
        } else {
            list.to_vec()
        }
    }
}

fn sha_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub experiment: String,
    pub grid: usize,
    pub seed: u64,
    /// Wall-clock seconds; not part of the report hash.
    pub runtime_s: f64,
    /// Unix seconds at completion; not part of the report hash.
    pub timestamp: u64,
    /// `<column>.max` and `<column>.slope` entries for bounded-ratio columns.
    pub summary: BTreeMap<String, f64>,
    pub notes: BTreeMap<String, serde_json::Value>,
    /// Rows that could not be computed, with the reason.
    pub failures: Vec<String>,
}

/// A rectangular table of finite reals plus metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub config_hash: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub metadata: Metadata,
}

impl ResultTable {
    fn new(experiment: &str, cfg: &ExperimentConfig, columns: &[&str]) -> Self {
        Self {
            config_hash: cfg.hash(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: vec![],
            metadata: Metadata {
                experiment: experiment.into(),
                grid: cfg.grid,
                seed: cfg.seed,
                ..Default::default()
            },
        }
    }

    fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::InvalidArgument(format!(
                "row has {} entries, table has {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite table entry {v}")));
        }
        self.rows.push(row);
        Ok(())
    }

    fn note(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.metadata.notes.insert(key.into(), v);
    }

    fn finish(mut self, start: Instant) -> Self {
        self.metadata.runtime_s = start.elapsed().as_secs_f64();
        self.metadata.timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        self
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// Records the max of `col` and its least-squares slope against
    /// `log(1/x)` for `x` in column `against`.
    fn summarize(&mut self, col: &str, against: &str) {
        let (Some(y), Some(x)) = (self.column(col), self.column(against)) else {
            return;
        };
        let lx: Vec<f64> = x.iter().map(|v| (1.0 / v).ln()).collect();
        self.metadata.summary.insert(format!("{col}.max"), y.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        self.metadata.summary.insert(format!("{col}.slope"), trend_slope(&lx, &y));
    }

    pub fn summary(&self, key: &str) -> Option<f64> {
        self.metadata.summary.get(key).copied()
    }

    /// Hash of the report with the runtime and timestamp zeroed.
    pub fn report_hash(&self) -> String {
        let mut c = self.clone();
        c.metadata.runtime_s = 0.0;
        c.metadata.timestamp = 0;
        sha_hex(serde_json::to_string(&c).expect("table serializes").as_bytes())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_json().as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.columns)?;
        for r in &self.rows {
            wr.write_record(r.iter().map(|v| format!("{v:e}")))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Least-squares slope of `y` against `x`; 0 for fewer than two points.
pub fn trend_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return 0.0;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let sxx: f64 = x[..n].iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return 0.0;
    }
    x[..n].iter().zip(&y[..n]).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / sxx
}

fn at_origin(m: &GridMap) -> LocalCubic {
    local_cubic(m, Complex64::new(0.0, 0.0)).expect("the centre block lies inside every grid")
}

/// `|∂f/∂z| + |∂f/∂z̄|`, the operator norm of the differential of a complex
/// function with partials `fx`, `fy`.
fn grad_norm(fx: Complex64, fy: Complex64) -> f64 {
    let i = Complex64::new(0.0, 1.0);
    (0.5 * (fx - i * fy)).norm() + (0.5 * (fx + i * fy)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_and_validation() {
        let cfg = ExperimentConfig { structure: Some("r6".into()), ..Default::default() };
        let back = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert!(ExperimentConfig::from_json(r#"{"grid": 16}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"structure": "nope"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"colour": 1}"#).is_err());
        let e = ExperimentConfig::from_file(Path::new("/nonexistent/cfg.json")).unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn table_plumbing() {
        let cfg = ExperimentConfig::default();
        let mut t = ResultTable::new("t", &cfg, &["x", "y"]);
        t.push(vec![0.1, 1.0]).unwrap();
        t.push(vec![0.01, 1.0]).unwrap();
        assert!(t.push(vec![1.0]).is_err());
        assert!(t.push(vec![1.0, f64::NAN]).is_err());
        t.summarize("y", "x");
        assert_eq!(t.summary("y.max"), Some(1.0));
        assert_eq!(t.summary("y.slope"), Some(0.0));
        let a = t.clone().finish(Instant::now());
        let mut b = a.clone();
        b.metadata.runtime_s += 1.0;
        assert_eq!(a.report_hash(), b.report_hash());
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("x,y\n"));
        let back: ResultTable = serde_json::from_str(&a.to_json()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn slope() {
        let x = [1.0, 2.0, 3.0];
        assert!((trend_slope(&x, &[2.0, 4.0, 6.0]) - 2.0).abs() < 1e-14);
        assert_eq!(trend_slope(&[1.0], &[3.0]), 0.0);
    }
}
