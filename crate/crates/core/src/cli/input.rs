//! Readers for the two input layouts: a returns panel and a table of fund
//! summaries.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sr::{FundSummary, ReturnsPanel};

/// Observation frequency, fixing the annualization factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Frequency {
    Daily,
    Monthly,
    Annual,
    Custom(f64),
}

impl Frequency {
    pub fn periods_per_year(&self) -> f64 {
        match self {
            Frequency::Daily => 252.0,
            Frequency::Monthly => 12.0,
            Frequency::Annual => 1.0,
            Frequency::Custom(v) => *v,
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frequency::Daily => f.write_str("daily"),
            Frequency::Monthly => f.write_str("monthly"),
            Frequency::Annual => f.write_str("annual"),
            Frequency::Custom(v) => write!(f, "custom:{v}"),
        }
    }
}

impl FromStr for Frequency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "daily" => Ok(Frequency::Daily),
            "monthly" => Ok(Frequency::Monthly),
            "annual" | "yearly" => Ok(Frequency::Annual),
            _ => {
                let v: f64 = t
                    .strip_prefix("custom:")
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| {
                        Error::domain(format!(
                            "unknown frequency `{s}` (use daily, monthly, annual or custom:<periods per year>)"
                        ))
                    })?;
                if v > 0.0 && v.is_finite() {
                    Ok(Frequency::Custom(v))
                } else {
                    Err(Error::domain(format!("periods per year must be positive, got {v}")))
                }
            }
        }
    }
}

/// Reads a returns panel: a header of asset names, an optional leading `date`
/// column that is ignored, and one row of plain returns per period.
/// With `percent`, cells are divided by 100.
pub fn read_returns<R: Read>(src: R, periods_per_year: f64, percent: bool) -> Result<ReturnsPanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(src);
    let headers = rdr.headers()?.clone();
    let skip = usize::from(headers.get(0).is_some_and(|h| h.eq_ignore_ascii_case("date")));
    let names: Vec<String> = headers.iter().skip(skip).map(str::to_string).collect();
    if names.is_empty() {
        return Err(Error::Input("returns file has no asset columns".into()));
    }
    if let Some(i) = names.iter().position(|n| n.is_empty()) {
        return Err(Error::Input(format!("asset column {} has an empty name", i + 1)));
    }
    let scale = if percent { 0.01 } else { 1.0 };
    let mut cells = Vec::new();
    let mut rows = 0usize;
    for (r, rec) in rdr.records().enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::Input(format!(
                "line {line}: expected {expected_len} fields, found {len}"
            )),
            _ => Error::Csv(e),
        })?;
        for (name, cell) in names.iter().zip(rec.iter().skip(skip)) {
            let v: f64 = cell.parse().map_err(|_| {
                Error::Input(format!("line {line}, asset `{name}`: cannot parse `{cell}` as a number"))
            })?;
            if !v.is_finite() {
                return Err(Error::Input(format!("line {line}, asset `{name}`: non-finite value `{cell}`")));
            }
            cells.push(v * scale);
        }
        rows += 1;
    }
    let values = DMatrix::from_row_slice(rows, names.len(), &cells);
    ReturnsPanel::new(values, names, periods_per_year)
}

pub fn read_returns_file(path: &Path, periods_per_year: f64, percent: bool) -> Result<ReturnsPanel> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::Input(format!("cannot open `{}`: {e}", path.display())))?;
    read_returns(f, periods_per_year, percent)
}

/// Reads `name,annual_return_pct,annual_sd_pct` rows.
pub fn read_summary<R: Read>(src: R) -> Result<Vec<FundSummary>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(src);
    let headers = rdr.headers()?.clone();
    for col in ["name", "annual_return_pct", "annual_sd_pct"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Input(format!("summary file is missing the `{col}` column")));
        }
    }
    rdr.deserialize()
        .enumerate()
        .map(|(r, row)| {
            row.map_err(|e| Error::Input(format!("line {}: {e}", r + 2)))
        })
        .collect()
}

pub fn read_summary_file(path: &Path) -> Result<Vec<FundSummary>> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::Input(format!("cannot open `{}`: {e}", path.display())))?;
    read_summary(f)
}
