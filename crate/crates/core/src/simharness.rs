//! Monte Carlo rejection rates over grids of simulation settings.
//!
//! Grid files are flat TOML:
//!
//! ```toml
//! settings = [1, 2, 3, 4]   # simulation settings
//! n = [500]                 # sample sizes
//! p = [2, 5]                # dimensions
//! s = [0]                   # departure levels (each must be <= p)
//! reps = 200                # replications per cell
//! alpha = 0.05
//! seed = 2024               # required
//! mode = "unknown"          # or "known"
//! b = 100                   # resamples for the bias estimate
//! variance_mode = "inflation"
//! ```

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ellip::{run_test, Mode, TestConfig, VarianceMode};
use crate::error::{Error, Result};
use crate::generators::{generate, SettingSpec};
use crate::seed::{mix_seed, tags};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentGrid {
    pub settings: Vec<u8>,
    #[serde(rename = "n")]
    pub ns: Vec<usize>,
    #[serde(rename = "p")]
    pub ps: Vec<usize>,
    #[serde(rename = "s")]
    pub s_values: Vec<usize>,
    pub reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(rename = "seed")]
    pub base_seed: Option<u64>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_b")]
    pub b: usize,
    #[serde(default)]
    pub variance_mode: VarianceMode,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_b() -> usize {
    100
}

/// One `(setting, n, p, s)` combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub setting: u8,
    pub n: usize,
    pub p: usize,
    pub s: usize,
}

impl ExperimentGrid {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let grid: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_seed.is_none() {
            return Err(Error::Config("missing required key `seed`".into()));
        }
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.settings.is_empty() || self.ns.is_empty() || self.ps.is_empty() || self.s_values.is_empty() {
            return Err(Error::Config("settings, n, p and s must be non-empty".into()));
        }
        self.test_config(0).validate().map_err(|e| Error::Config(e.to_string()))?;
        for cell in self.cells() {
            SettingSpec::new(cell.setting, cell.n, cell.p, cell.s, 0)
                .validate()
                .map_err(|e| Error::Config(format!("cell {cell:?}: {e}")))?;
        }
        Ok(())
    }

    /// Cells in the order `settings x n x p x s`.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &setting in &self.settings {
            for &n in &self.ns {
                for &p in &self.ps {
                    for &s in &self.s_values {
                        out.push(Cell { setting, n, p, s });
                    }
                }
            }
        }
        out
    }

    fn test_config(&self, seed: u64) -> TestConfig {
        TestConfig {
            b: self.b,
            alpha: self.alpha,
            variance_mode: self.variance_mode,
            seed,
            ..Default::default()
        }
    }

    /// Seed of replication `rep` in `cell`.
    pub fn rep_seed(&self, cell: Cell, rep: usize) -> u64 {
        mix_seed(&[
            self.base_seed.unwrap_or(0),
            cell.setting as u64,
            cell.n as u64,
            cell.p as u64,
            cell.s as u64,
            rep as u64,
        ])
    }

    /// One replication: draw data, run the test, report the decision.
    pub fn run_rep(&self, cell: Cell, rep: usize) -> Result<bool> {
        let seed = self.rep_seed(cell, rep);
        let spec = SettingSpec::new(cell.setting, cell.n, cell.p, cell.s, mix_seed(&[seed, tags::DATA]));
        let x = generate(&spec)?;
        let cfg = self.test_config(mix_seed(&[seed, tags::TEST]));
        let r = match self.mode {
            Mode::Known => {
                let (mu, sigma) = spec.null_moments();
                run_test(&x, Some((&mu, &sigma)), &cfg)?
            }
            Mode::Unknown => run_test(&x, None, &cfg)?,
        };
        Ok(r.reject)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRow {
    pub setting: u8,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    /// Completed replications; failed ones are excluded.
    pub reps: usize,
    pub failed: usize,
    pub reject_count: usize,
    pub reject_rate: f64,
    pub mc_standard_error: f64,
    /// Seconds for the cell; only filled when timing is requested, so that
    /// untimed output is reproducible byte for byte.
    pub wall_time: Option<f64>,
}

impl RejectionRow {
    pub fn new(cell: Cell, reps: usize, failed: usize, reject_count: usize, wall_time: Option<f64>) -> Self {
        let (rate, se) = if reps == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let r = reject_count as f64 / reps as f64;
            (r, (r * (1.0 - r) / reps as f64).sqrt())
        };
        Self {
            setting: cell.setting,
            n: cell.n,
            p: cell.p,
            s: cell.s,
            reps,
            failed,
            reject_count,
            reject_rate: rate,
            mc_standard_error: se,
            wall_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RejectionTable {
    pub rows: Vec<RejectionRow>,
}

/// Column order used by every output format.
pub const COLUMNS: [&str; 10] = [
    "setting",
    "n",
    "p",
    "s",
    "reps",
    "failed",
    "reject_count",
    "reject_rate",
    "mc_standard_error",
    "wall_time",
];

/// Runs every cell. Replications within a cell run in parallel and are
/// tallied in index order.
pub fn run_grid(grid: &ExperimentGrid, timing: bool) -> Result<RejectionTable> {
    run_grid_with_progress(grid, timing, |_| {})
}

/// [`run_grid`] with a callback after each finished cell.
pub fn run_grid_with_progress(
    grid: &ExperimentGrid,
    timing: bool,
    mut progress: impl FnMut(&RejectionRow),
) -> Result<RejectionTable> {
    grid.validate()?;
    let mut rows = Vec::new();
    for cell in grid.cells() {
        let start = Instant::now();
        let outcomes: Vec<Result<bool>> = (0..grid.reps).into_par_iter().map(|rep| grid.run_rep(cell, rep)).collect();
        let failed = outcomes.iter().filter(|o| o.is_err()).count();
        let rejects = outcomes.iter().filter(|o| matches!(o, Ok(true))).count();
        let wall = timing.then(|| start.elapsed().as_secs_f64());
        let row = RejectionRow::new(cell, grid.reps - failed, failed, rejects, wall);
        progress(&row);
        rows.push(row);
    }
    Ok(RejectionTable { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
    Markdown,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(Error::InvalidInput(format!("unknown table format `{other}`"))),
        }
    }
}

fn fields(r: &RejectionRow) -> [String; 10] {
    [
        r.setting.to_string(),
        r.n.to_string(),
        r.p.to_string(),
        r.s.to_string(),
        r.reps.to_string(),
        r.failed.to_string(),
        r.reject_count.to_string(),
        r.reject_rate.to_string(),
        r.mc_standard_error.to_string(),
        r.wall_time.map(|w| w.to_string()).unwrap_or_default(),
    ]
}

pub fn emit_table(tbl: &RejectionTable, format: Format) -> String {
    match format {
        Format::Csv => {
            let mut out = COLUMNS.join(",");
            out.push('\n');
            for r in &tbl.rows {
                out.push_str(&fields(r).join(","));
                out.push('\n');
            }
            out
        }
        Format::Json => {
            let mut s = serde_json::to_string_pretty(tbl).expect("table serializes");
            s.push('\n');
            s
        }
        Format::Markdown => {
            let mut out = String::new();
            let _ = writeln!(out, "| {} |", COLUMNS.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(COLUMNS.len()));
            for r in &tbl.rows {
                let _ = writeln!(out, "| {} |", fields(r).join(" | "));
            }
            out
        }
    }
}

/// Reads back the CSV form written by [`emit_table`].
pub fn parse_table_csv(text: &str) -> Result<RejectionTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::InvalidInput(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != COLUMNS {
        return Err(Error::InvalidInput(format!("unexpected table header {header:?}")));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::InvalidInput(e.to_string()))?;
        let bad = |col: usize| Error::InvalidInput(format!("table line {}: bad value in `{}`", line + 2, COLUMNS[col]));
        let int = |col: usize| rec[col].parse::<usize>().map_err(|_| bad(col));
        let float = |col: usize| rec[col].parse::<f64>().map_err(|_| bad(col));
        rows.push(RejectionRow {
            setting: rec[0].parse().map_err(|_| bad(0))?,
            n: int(1)?,
            p: int(2)?,
            s: int(3)?,
            reps: int(4)?,
            failed: int(5)?,
            reject_count: int(6)?,
            reject_rate: float(7)?,
            mc_standard_error: float(8)?,
            wall_time: if rec[9].is_empty() { None } else { Some(float(9)?) },
        });
    }
    Ok(RejectionTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
settings = [1]
n = [60]
p = [2]
s = [0, 1]
reps = 3
seed = 9
b = 2
"#;

    #[test]
    fn parses_and_defaults() {
        let g = ExperimentGrid::from_toml_str(SMALL).unwrap();
        assert_eq!(g.alpha, 0.05);
        assert_eq!(g.mode, Mode::Unknown);
        assert_eq!(g.cells().len(), 2);
    }

    #[test]
    fn missing_seed_is_an_error() {
        let text = SMALL.replace("seed = 9", "");
        assert!(matches!(ExperimentGrid::from_toml_str(&text), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_cells() {
        assert!(ExperimentGrid::from_toml_str(&format!("{SMALL}\nfoo = 1\n")).is_err());
        assert!(ExperimentGrid::from_toml_str(&SMALL.replace("s = [0, 1]", "s = [3]")).is_err());
    }

    #[test]
    fn single_rep_rate_is_binary() {
        let mut g = ExperimentGrid::from_toml_str(SMALL).unwrap();
        g.reps = 1;
        let t = run_grid(&g, false).unwrap();
        for r in &t.rows {
            assert!(r.reject_rate == 0.0 || r.reject_rate == 1.0);
            assert_eq!(r.reps + r.failed, 1);
        }
    }

    #[test]
    fn deterministic_and_order_free() {
        let g = ExperimentGrid::from_toml_str(SMALL).unwrap();
        let a = run_grid(&g, false).unwrap();
        let mut rev = g.clone();
        rev.s_values.reverse();
        let b = run_grid(&rev, false).unwrap();
        assert_eq!(a.rows[0], b.rows[1]);
        assert_eq!(a.rows[1], b.rows[0]);
    }

    fn sample_table() -> RejectionTable {
        RejectionTable {
            rows: vec![
                RejectionRow::new(Cell { setting: 1, n: 500, p: 2, s: 0 }, 197, 3, 4, None),
                RejectionRow::new(Cell { setting: 3, n: 500, p: 5, s: 2 }, 200, 0, 200, Some(12.5)),
            ],
        }
    }

    #[test]
    fn rate_and_error_invariants() {
        let r = &sample_table().rows[0];
        assert_eq!(r.reject_rate, 4.0 / 197.0);
        assert_eq!(r.mc_standard_error, (r.reject_rate * (1.0 - r.reject_rate) / 197.0).sqrt());
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = RejectionTable::default();
        assert_eq!(emit_table(&t, Format::Csv), format!("{}\n", COLUMNS.join(",")));
        assert_eq!(emit_table(&t, Format::Markdown).lines().count(), 2);
    }

    #[test]
    fn one_row_in_declared_order() {
        let t = RejectionTable {
            rows: vec![RejectionRow::new(Cell { setting: 2, n: 10, p: 3, s: 1 }, 4, 0, 1, None)],
        };
        let csv = emit_table(&t, Format::Csv);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], "2,10,3,1,4,0,1,0.25,0.21650635094610965,");
    }

    #[test]
    fn csv_round_trip() {
        let t = sample_table();
        assert_eq!(parse_table_csv(&emit_table(&t, Format::Csv)).unwrap(), t);
    }

    #[test]
    fn json_round_trip() {
        let t = sample_table();
        let back: RejectionTable = serde_json::from_str(&emit_table(&t, Format::Json)).unwrap();
        assert_eq!(back, t);
    }
}
