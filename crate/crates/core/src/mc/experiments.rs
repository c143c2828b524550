//! Named experiment presets and the CSV table they produce.
//!
//! A plan is a grid over (n, p, ρ, ψ) plus a list of decision variants. Every
//! grid cell gets its own seed derived from the base seed and the cell index;
//! variants inside a cell are evaluated on the same draws.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use crate::corr_model::{CorrKind, CorrModel};
use crate::error::{Error, Result};
use crate::posthoc::DfMode;

use super::rng::cell_seed;
use super::{run_variants, Design, RhoPolicy, SimResult, SimSpec, Variant};

pub const DEFAULT_REPLICATIONS: usize = 5000;
pub const DEFAULT_SEED: u64 = 20_190_101;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    NullBasic,
    NullScanNp,
    NullRho,
    FeasibleRho,
    FeasibleAr1,
    AltOneGood,
    AltHalfGood,
    Custom,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::NullBasic,
        Experiment::NullScanNp,
        Experiment::NullRho,
        Experiment::FeasibleRho,
        Experiment::FeasibleAr1,
        Experiment::AltOneGood,
        Experiment::AltHalfGood,
        Experiment::Custom,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::NullBasic => "null-basic",
            Experiment::NullScanNp => "null-scan-np",
            Experiment::NullRho => "null-rho",
            Experiment::FeasibleRho => "feasible-rho",
            Experiment::FeasibleAr1 => "feasible-ar1",
            Experiment::AltOneGood => "alt-one-good",
            Experiment::AltHalfGood => "alt-half-good",
            Experiment::Custom => "custom",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s.trim())
            .ok_or_else(|| Error::domain(format!("unknown experiment `{s}`")))
    }
}

/// Grid axes. ψ is the annualized signal-noise ratio: the common value under
/// the null designs, the value of the good assets under the alternatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub n: Vec<usize>,
    pub p: Vec<usize>,
    pub rho: Vec<f64>,
    pub psnr: Vec<f64>,
}

/// Optional replacements for a preset's settings.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub n_grid: Option<Vec<usize>>,
    pub p_grid: Option<Vec<usize>>,
    pub rho_grid: Option<Vec<f64>>,
    pub psnr_grid: Option<Vec<f64>>,
    pub design: Option<Design>,
    pub corr: Option<CorrKind>,
    pub df_modes: Option<Vec<DfMode>>,
    pub rho_policies: Option<Vec<RhoPolicy>>,
    pub alpha: Option<f64>,
    pub periods_per_year: Option<f64>,
    pub keep_raw: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub experiment: Experiment,
    pub design: Design,
    pub corr: CorrKind,
    pub grid: Grid,
    pub variants: Vec<Variant>,
    pub alpha: f64,
    pub periods_per_year: f64,
    pub replications: usize,
    pub seed: u64,
    pub keep_raw: bool,
}

fn rho_scan() -> Vec<f64> {
    (0..10).map(|i| i as f64 / 10.0).collect()
}

fn variants(df_modes: &[DfMode], policies: &[RhoPolicy]) -> Vec<Variant> {
    let mut out = Vec::new();
    for &rho_policy in policies {
        for &df_mode in df_modes {
            out.push(Variant { df_mode, rho_policy });
        }
    }
    out
}

impl ExperimentPlan {
    /// Preset settings for `experiment`, with `overrides` applied on top.
    pub fn preset(experiment: Experiment, replications: usize, seed: u64, overrides: &Overrides) -> Result<Self> {
        use Experiment::*;
        let both = [DfMode::NMinus1, DfMode::Inf];
        let n1 = [DfMode::NMinus1];
        let (design, corr, grid, df_modes, policies, keep_raw): (_, _, _, &[DfMode], Vec<RhoPolicy>, _) =
            match experiment {
                NullBasic => (
                    Design::NullRange,
                    CorrKind::RankOne,
                    Grid { n: vec![1008], p: vec![16], rho: vec![0.8], psnr: vec![1.0] },
                    &both,
                    vec![RhoPolicy::TrueRho],
                    true,
                ),
                NullScanNp => (
                    Design::NullRange,
                    CorrKind::RankOne,
                    Grid {
                        n: vec![20, 40, 80, 160, 320, 640, 1280],
                        p: vec![8, 16, 32],
                        rho: vec![0.8],
                        psnr: vec![1.0],
                    },
                    &both,
                    vec![RhoPolicy::TrueRho],
                    false,
                ),
                NullRho | FeasibleRho => (
                    Design::NullRange,
                    CorrKind::RankOne,
                    Grid { n: vec![1008], p: vec![16], rho: rho_scan(), psnr: vec![1.0] },
                    &n1,
                    vec![if experiment == NullRho { RhoPolicy::TrueRho } else { RhoPolicy::Estimated }],
                    false,
                ),
                FeasibleAr1 => (
                    Design::NullRange,
                    CorrKind::Ar1,
                    Grid { n: vec![1008], p: vec![16], rho: rho_scan(), psnr: vec![1.0] },
                    &n1,
                    vec![RhoPolicy::Estimated, RhoPolicy::Assumed(0.0)],
                    false,
                ),
                AltOneGood | AltHalfGood => (
                    if experiment == AltOneGood { Design::OneGood } else { Design::HalfGood },
                    CorrKind::RankOne,
                    Grid {
                        n: vec![1008],
                        p: vec![16],
                        rho: vec![0.0, 0.3, 0.6, 0.9],
                        psnr: vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5],
                    },
                    &n1,
                    vec![RhoPolicy::TrueRho],
                    false,
                ),
                Custom => (
                    Design::NullRange,
                    CorrKind::RankOne,
                    Grid { n: vec![1008], p: vec![16], rho: vec![0.8], psnr: vec![1.0] },
                    &n1,
                    vec![RhoPolicy::TrueRho],
                    false,
                ),
            };
        let o = overrides;
        let plan = ExperimentPlan {
            experiment,
            design: o.design.unwrap_or(design),
            corr: o.corr.unwrap_or(corr),
            grid: Grid {
                n: o.n_grid.clone().unwrap_or(grid.n),
                p: o.p_grid.clone().unwrap_or(grid.p),
                rho: o.rho_grid.clone().unwrap_or(grid.rho),
                psnr: o.psnr_grid.clone().unwrap_or(grid.psnr),
            },
            variants: variants(
                o.df_modes.as_deref().unwrap_or(df_modes),
                o.rho_policies.as_deref().unwrap_or(&policies),
            ),
            alpha: o.alpha.unwrap_or(0.05),
            periods_per_year: o.periods_per_year.unwrap_or(252.0),
            replications,
            seed,
            keep_raw: o.keep_raw.unwrap_or(keep_raw),
        };
        plan.validate()?;
        Ok(plan)
    }

    fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.n.is_empty() || g.p.is_empty() || g.rho.is_empty() || g.psnr.is_empty() {
            return Err(Error::domain("every grid axis needs at least one value"));
        }
        if self.variants.is_empty() {
            return Err(Error::domain("no decision variants requested"));
        }
        if self.replications < 1 {
            return Err(Error::domain("replications must be >= 1"));
        }
        if self.corr == CorrKind::Full {
            return Err(Error::domain("simulations take rank-one or AR(1) correlation"));
        }
        Ok(())
    }

    /// Grid cells in output order: n, then p, then ρ, then ψ.
    pub fn cells(&self) -> Result<Vec<SimSpec>> {
        let g = &self.grid;
        let mut out = Vec::new();
        for &n in &g.n {
            for &p in &g.p {
                for &rho in &g.rho {
                    for &psnr in &g.psnr {
                        let corr = match self.corr {
                            CorrKind::Ar1 => CorrModel::ar1(rho, p)?,
                            _ => CorrModel::rank_one(rho, p)?,
                        };
                        let first = self.variants[0];
                        out.push(SimSpec {
                            n_days: n,
                            p,
                            periods_per_year: self.periods_per_year,
                            corr,
                            snr_annual: self.design.snr_profile(p, psnr),
                            alpha: self.alpha,
                            df_mode: first.df_mode,
                            rho_policy: first.rho_policy,
                            design: self.design,
                            replications: self.replications,
                            seed: cell_seed(self.seed, out.len() as u64),
                            keep_raw: self.keep_raw,
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One CSV row per (grid cell, variant).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub design: String,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub psnr: f64,
    pub df_mode: String,
    pub rho_policy: String,
    pub replications: usize,
    pub rate: f64,
    pub se: f64,
    pub seed: u64,
}

impl TableRow {
    pub fn from_result(r: &SimResult, psnr: f64, rho: f64) -> Self {
        TableRow {
            design: r.spec.design.to_string(),
            n: r.spec.n_days,
            p: r.spec.p,
            rho,
            psnr,
            df_mode: r.spec.df_mode.to_string(),
            rho_policy: r.spec.rho_policy.to_string(),
            replications: r.spec.replications,
            rate: r.rejection_rate,
            se: r.rejection_se,
            seed: r.spec.seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlanOutput {
    pub rows: Vec<TableRow>,
    pub results: Vec<SimResult>,
}

/// Runs every cell of the plan, in grid order.
pub fn run_plan(plan: &ExperimentPlan) -> Result<PlanOutput> {
    let mut rows = Vec::new();
    let mut results = Vec::new();
    let g = &plan.grid;
    let axes: Vec<(f64, f64)> = g
        .n
        .iter()
        .flat_map(|_| g.p.iter())
        .flat_map(|_| g.rho.iter().flat_map(|&r| g.psnr.iter().map(move |&s| (r, s))))
        .collect();
    for (spec, (rho, psnr)) in plan.cells()?.into_iter().zip(axes) {
        for r in run_variants(&spec, &plan.variants)? {
            rows.push(TableRow::from_result(&r, psnr, rho));
            results.push(r);
        }
    }
    Ok(PlanOutput { rows, results })
}

/// Writes the experiment table with a header row.
pub fn write_table<W: Write>(rows: &[TableRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
