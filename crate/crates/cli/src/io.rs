//! CSV ingestion. Every file has a header row; rows are keyed by an
//! integer `unit` id and sorted by it.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use expdesign::nalgebra::DMatrix;
use expdesign::{Assignment, CovariateMatrix, PanelData, ScienceTable};

use crate::error::{CliError, Result};

struct Table {
    path: PathBuf,
    headers: Vec<String>,
    /// (line number, cells)
    rows: Vec<(u64, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let csv_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line());
        CliError::Parse { path: path.to_path_buf(), line, column: String::new(), message: e.to_string() }
    };
    let headers: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if headers.iter().all(String::is_empty) {
        return Err(CliError::Input { path: path.to_path_buf(), message: "missing header row".into() });
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(Table { path: path.to_path_buf(), headers, rows })
}

impl Table {
    fn parse_err(&self, line: u64, column: &str, message: impl Into<String>) -> CliError {
        CliError::Parse { path: self.path.clone(), line, column: column.to_string(), message: message.into() }
    }

    fn input_err(&self, message: impl Into<String>) -> CliError {
        CliError::Input { path: self.path.clone(), message: message.into() }
    }

    /// Requires the header to start with `required` and allows only
    /// `optional` columns after it.
    fn check_header(&self, required: &[&str], optional: &[&str]) -> Result<()> {
        for (i, want) in required.iter().enumerate() {
            match self.headers.get(i) {
                Some(h) if h == want => {}
                Some(h) => return Err(self.parse_err(1, h, format!("expected column '{want}'"))),
                None => return Err(self.parse_err(1, want, "missing column")),
            }
        }
        for h in &self.headers[required.len()..] {
            if !optional.contains(&h.as_str()) {
                return Err(self.parse_err(1, h, "unexpected column"));
            }
        }
        Ok(())
    }

    fn require_rows(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(self.input_err("no data rows"));
        }
        Ok(())
    }

    fn cell<'a>(&'a self, line: u64, cells: &'a [String], col: usize) -> Result<&'a str> {
        cells.get(col).map(String::as_str).ok_or_else(|| self.parse_err(line, &self.headers[col], "missing cell"))
    }

    fn number(&self, line: u64, cells: &[String], col: usize) -> Result<f64> {
        let raw = self.cell(line, cells, col)?;
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.parse_err(line, &self.headers[col], format!("'{raw}' is not a finite number"))),
        }
    }

    fn integer(&self, line: u64, cells: &[String], col: usize) -> Result<i64> {
        let raw = self.cell(line, cells, col)?;
        raw.parse::<i64>().map_err(|_| self.parse_err(line, &self.headers[col], format!("'{raw}' is not an integer")))
    }

    /// Rows keyed by unit id, sorted, duplicates rejected.
    fn by_unit(&self) -> Result<BTreeMap<i64, (u64, &[String])>> {
        let mut out = BTreeMap::new();
        for (line, cells) in &self.rows {
            let id = self.integer(*line, cells, 0)?;
            if out.insert(id, (*line, cells.as_slice())).is_some() {
                return Err(self.parse_err(*line, "unit", format!("duplicate unit {id}")));
            }
        }
        Ok(out)
    }
}

/// `unit,x1,...,xd`; column names after `unit` become labels.
pub fn parse_covariates(path: &Path) -> Result<CovariateMatrix> {
    let t = read_table(path)?;
    if t.headers.first().map(String::as_str) != Some("unit") {
        return Err(t.parse_err(1, t.headers.first().map_or("", String::as_str), "expected column 'unit'"));
    }
    if t.headers.len() < 2 {
        return Err(t.parse_err(1, "unit", "no covariate columns"));
    }
    t.require_rows()?;
    let d = t.headers.len() - 1;
    let units = t.by_unit()?;
    let mut data = DMatrix::zeros(units.len(), d);
    for (row, (line, cells)) in units.values().enumerate() {
        if cells.len() != t.headers.len() {
            return Err(t.parse_err(*line, "", format!("expected {} cells, found {}", t.headers.len(), cells.len())));
        }
        for c in 0..d {
            data[(row, c)] = t.number(*line, cells, c + 1)?;
        }
    }
    Ok(CovariateMatrix::new(data, t.headers[1..].to_vec())?)
}

/// Long-form panel `unit,period,outcome` on a complete unit × period grid.
pub fn parse_panel(path: &Path, t0: usize) -> Result<PanelData> {
    let t = read_table(path)?;
    t.check_header(&["unit", "period", "outcome"], &[])?;
    t.require_rows()?;
    let mut cells_by_key = BTreeMap::new();
    for (line, cells) in &t.rows {
        let unit = t.integer(*line, cells, 0)?;
        let period = t.integer(*line, cells, 1)?;
        let y = t.number(*line, cells, 2)?;
        if cells_by_key.insert((unit, period), y).is_some() {
            return Err(t.parse_err(*line, "period", format!("duplicate (unit {unit}, period {period})")));
        }
    }
    let units: BTreeSet<i64> = cells_by_key.keys().map(|k| k.0).collect();
    let periods: BTreeSet<i64> = cells_by_key.keys().map(|k| k.1).collect();
    let mut m = DMatrix::zeros(units.len(), periods.len());
    for (i, u) in units.iter().enumerate() {
        for (j, p) in periods.iter().enumerate() {
            m[(i, j)] = *cells_by_key
                .get(&(*u, *p))
                .ok_or_else(|| t.input_err(format!("missing cell (unit {u}, period {p})")))?;
        }
    }
    PanelData::new(m, t0).map_err(|e| t.input_err(e.to_string()))
}

/// `unit,y1,y0`.
pub fn parse_science_table(path: &Path) -> Result<ScienceTable> {
    let t = read_table(path)?;
    t.check_header(&["unit", "y1", "y0"], &[])?;
    t.require_rows()?;
    let mut y1 = Vec::new();
    let mut y0 = Vec::new();
    for (line, cells) in t.by_unit()?.values() {
        y1.push(t.number(*line, cells, 1)?);
        y0.push(t.number(*line, cells, 2)?);
    }
    Ok(ScienceTable::new(y1, y0)?)
}

/// `unit,g`.
pub fn parse_baselines(path: &Path) -> Result<Vec<f64>> {
    let t = read_table(path)?;
    t.check_header(&["unit", "g"], &[])?;
    t.require_rows()?;
    t.by_unit()?.values().map(|(line, cells)| t.number(*line, cells, 1)).collect()
}

/// One experiment's observed data.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedData {
    pub w: Assignment,
    pub y: Vec<f64>,
    /// Stratum label per unit, when the file has a `stratum` column.
    pub strata: Option<Vec<i64>>,
    /// Per-unit treatment probability, when the file has a `propensity` column.
    pub propensity: Option<Vec<f64>>,
}

/// `unit,w,y` with optional `stratum` and `propensity` columns.
pub fn parse_observed(path: &Path) -> Result<ObservedData> {
    let t = read_table(path)?;
    t.check_header(&["unit", "w", "y"], &["stratum", "propensity"])?;
    t.require_rows()?;
    let col = |name: &str| t.headers.iter().position(|h| h == name);
    let (sc, pc) = (col("stratum"), col("propensity"));
    let mut w = Vec::new();
    let mut y = Vec::new();
    let mut strata = sc.map(|_| Vec::new());
    let mut props = pc.map(|_| Vec::new());
    for (line, cells) in t.by_unit()?.values() {
        w.push(match t.integer(*line, cells, 1)? {
            0 => false,
            1 => true,
            other => return Err(t.parse_err(*line, "w", format!("treatment must be 0 or 1, got {other}"))),
        });
        y.push(t.number(*line, cells, 2)?);
        if let (Some(c), Some(s)) = (sc, strata.as_mut()) {
            s.push(t.integer(*line, cells, c)?);
        }
        if let (Some(c), Some(p)) = (pc, props.as_mut()) {
            p.push(t.number(*line, cells, c)?);
        }
    }
    Ok(ObservedData { w: Assignment::new(w), y, strata, propensity: props })
}
