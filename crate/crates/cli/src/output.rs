//! Report and table emission.

use std::fs;
use std::path::Path;
use std::process::Command;

use serde::Serialize;

use crate::error::CliError;

pub const REPORT_FILE: &str = "report.json";
pub const TABLE_FILE: &str = "results.csv";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            // 17 significant digits.
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(std::io::Error::other(e));
        writer.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            writer.write_record(row.iter().map(Cell::render)).map_err(io)?;
        }
        writer.into_inner().map_err(|e| CliError::Io(e.into_error()))
    }
}

/// One verdict. `observed` is compared with `criterion`; `se` is present
/// for Monte-Carlo quantities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
    pub criterion: String,
    pub pass: bool,
}

impl Check {
    pub fn new(
        name: impl Into<String>,
        observed: f64,
        se: Option<f64>,
        criterion: impl Into<String>,
        pass: bool,
    ) -> Self {
        Self {
            name: name.into(),
            observed,
            se,
            criterion: criterion.into(),
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub git_commit: String,
    pub git_dirty: Option<bool>,
    pub seed: u64,
    pub workers: usize,
    pub elapsed_seconds: f64,
}

impl RunMetadata {
    pub fn collect(seed: u64, workers: usize, elapsed_seconds: f64) -> Self {
        let git = |args: &[&str]| {
            Command::new("git")
                .args(args)
                .output()
                .ok()
                .filter(|o| o.status.success())
                .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        };
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            git_commit: git(&["rev-parse", "HEAD"]).unwrap_or_else(|| "unknown".into()),
            git_dirty: git(&["status", "--porcelain"]).map(|s| !s.is_empty()),
            seed,
            workers,
            elapsed_seconds,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report<'a, C: Serialize> {
    pub experiment: &'static str,
    pub config: &'a C,
    pub run: RunMetadata,
    pub samples: Option<usize>,
    pub diverged: usize,
    pub max_diverged_fraction: f64,
    pub results: serde_json::Value,
    pub checks: &'a [Check],
    pub pass: bool,
    pub exit_code: u8,
}

pub fn write_outputs<C: Serialize>(dir: &Path, report: &Report<'_, C>, table: &Table) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(report).map_err(|e| CliError::Io(e.into()))?;
    fs::write(dir.join(REPORT_FILE), json + "\n")?;
    fs::write(dir.join(TABLE_FILE), table.to_csv()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_carry_seventeen_digits() {
        assert_eq!(Cell::Float(0.1).render(), "1.0000000000000001e-1");
        assert_eq!(Cell::Float(-2.0).render(), "-2.0000000000000000e0");
        let v = 1.0 / 3.0;
        assert_eq!(Cell::Float(v).render().parse::<f64>().unwrap(), v);
    }

    #[test]
    fn csv_has_header_and_lf_endings() {
        let mut t = Table::new(vec!["N", "rms"]);
        t.push(vec![32usize.into(), 0.5.into()]);
        let text = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(text, "N,rms\n32,5.0000000000000000e-1\n");
    }
}
