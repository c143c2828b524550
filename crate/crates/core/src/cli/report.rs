//! The versioned JSON report and its text and CSV renderings.
//!
//! Text prints every real number with [`TEXT_DECIMALS`] decimals; CSV and
//! JSON carry full precision.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::posthoc::PosthocReport;

pub const SCHEMA_VERSION: u32 = 1;
pub const TEXT_DECIMALS: usize = 6;

/// Where the numbers came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputMeta {
    /// `test` or `test-summary`.
    pub command: String,
    pub file: String,
    pub n: usize,
    pub p: usize,
    pub periods_per_year: f64,
    /// Risk-free rate, per period for returns input, annual percent for summaries.
    pub risk_free: f64,
    /// Median of the upper triangle of the sample correlation, when returns were given.
    pub rho_median: Option<f64>,
    pub sample_correlation: Option<Vec<Vec<f64>>>,
}

/// Top-level JSON document: schema and tool version, input metadata, and the
/// report fields flattened at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub tool_version: String,
    pub input: InputMeta,
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub report: PosthocReport,
}

impl ReportDocument {
    pub fn new(input: InputMeta, report: PosthocReport) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            input,
            seed: None,
            report,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Scalar fields shared by the text and CSV renderings, in print order.
    pub fn scalars(&self) -> Vec<(&'static str, f64)> {
        let r = &self.report;
        let mut v = vec![
            ("n", self.input.n as f64),
            ("k", self.input.p as f64),
            ("periods_per_year", self.input.periods_per_year),
            ("alpha", r.alpha),
            ("rho_used", r.rho_used),
        ];
        if let Some(m) = self.input.rho_median {
            v.push(("rho_median", m));
        }
        v.extend([
            ("global_stat", r.global_stat),
            ("global_df", r.global_df as f64),
            ("global_pvalue", r.global_pvalue),
            ("observed_range", r.observed_range),
            ("hsd_inf", r.hsd_inf),
            ("hsd_ndf", r.hsd_ndf),
            ("bc", r.bc),
            ("selected_cutoff", r.selected_cutoff),
            ("range_pvalue", r.range_pvalue),
        ]);
        v
    }

    pub fn to_text(&self) -> String {
        let r = &self.report;
        let mut s = String::new();
        let _ = writeln!(s, "posthoc-sr {} ({})", self.tool_version, self.input.command);
        let _ = writeln!(s, "{:<18} {}", "file", self.input.file);
        let _ = writeln!(s, "{:<18} {}", "df_mode", r.df_mode);
        let _ = writeln!(s, "{:<18} {}", "rho_source", serde_plain(&r.rho_source));
        let _ = writeln!(s, "{:<18} {}", "global_form", serde_plain(&r.global_form));
        for (name, v) in self.scalars() {
            if v.fract() == 0.0 && matches!(name, "n" | "k" | "global_df") {
                let _ = writeln!(s, "{name:<18} {v}");
            } else {
                let _ = writeln!(s, "{name:<18} {v:.prec$}", prec = TEXT_DECIMALS);
            }
        }
        let _ = writeln!(s, "\nannualized Sharpe ratios");
        let width = r.asset_names.iter().map(|n| n.len()).max().unwrap_or(0).max(5);
        for (name, v) in r.asset_names.iter().zip(r.sr.values()) {
            let _ = writeln!(s, "  {name:<width$} {v:>12.prec$}", prec = TEXT_DECIMALS);
        }
        let pairs = r.rejected_pairs();
        if pairs.is_empty() {
            let _ = writeln!(s, "\nrejected pairs: none");
        } else {
            let _ = writeln!(s, "\nrejected pairs:");
            for (a, b) in pairs {
                let _ = writeln!(s, "  {a} vs {b}");
            }
        }
        for w in &r.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }

    /// Long-format CSV: `item,asset_i,asset_j,value`.
    pub fn to_csv(&self) -> Result<String> {
        let r = &self.report;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["item", "asset_i", "asset_j", "value"])?;
        for (name, v) in self.scalars() {
            w.write_record([name, "", "", &v.to_string()])?;
        }
        w.write_record(["df_mode", "", "", &r.df_mode.to_string()])?;
        for (name, v) in r.asset_names.iter().zip(r.sr.values()) {
            w.write_record(["sr", name, "", &v.to_string()])?;
        }
        let k = r.asset_names.len();
        for i in 0..k {
            for j in i + 1..k {
                let d = if r.decisions[i][j] { "1" } else { "0" };
                w.write_record(["reject", &r.asset_names[i], &r.asset_names[j], d])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn serde_plain<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}
