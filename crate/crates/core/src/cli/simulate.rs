//! `simulate` subcommand: runs an experiment plan and writes its table, plus
//! raw per-replication values and Q-Q/P-P plot data when the plan keeps them.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};

use crate::corr_model::CorrKind;
use crate::error::{Error, Result};
use crate::mc::experiments::{run_plan, write_table, Experiment, ExperimentPlan, Overrides, PlanOutput, DEFAULT_REPLICATIONS, DEFAULT_SEED};
use crate::mc::{Design, RhoPolicy, SimResult};
use crate::posthoc::DfMode;
use crate::range_dist::{Df, RangeDistParams, StudentizedRange};

use super::{parse_value, Frequency, SEED_ENV};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentArg {
    NullBasic,
    NullScanNp,
    NullRho,
    FeasibleRho,
    FeasibleAr1,
    AltOneGood,
    AltHalfGood,
    Custom,
}

impl From<ExperimentArg> for Experiment {
    fn from(e: ExperimentArg) -> Self {
        match e {
            ExperimentArg::NullBasic => Experiment::NullBasic,
            ExperimentArg::NullScanNp => Experiment::NullScanNp,
            ExperimentArg::NullRho => Experiment::NullRho,
            ExperimentArg::FeasibleRho => Experiment::FeasibleRho,
            ExperimentArg::FeasibleAr1 => Experiment::FeasibleAr1,
            ExperimentArg::AltOneGood => Experiment::AltOneGood,
            ExperimentArg::AltHalfGood => Experiment::AltHalfGood,
            ExperimentArg::Custom => Experiment::Custom,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorrArg {
    RankOne,
    Ar1,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub experiment: ExperimentArg,
    #[arg(long, default_value_t = DEFAULT_REPLICATIONS)]
    pub reps: usize,
    /// Base seed; defaults to $POSTHOC_SR_SEED, then to a fixed constant.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Prefix for raw and plot-data files (defaults to --out without extension).
    #[arg(long)]
    pub raw_prefix: Option<PathBuf>,
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub p_grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub rho_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub psnr_grid: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_value::<Design>)]
    pub design: Option<Design>,
    #[arg(long, value_enum)]
    pub corr: Option<CorrArg>,
    /// Comma-separated df modes (inf, n-1).
    #[arg(long, value_delimiter = ',', value_parser = parse_value::<DfMode>)]
    pub df: Option<Vec<DfMode>>,
    /// Comma-separated ρ policies: true, estimated, or assumed:<value>.
    #[arg(long, value_delimiter = ',', value_parser = parse_value::<RhoPolicy>)]
    pub rho_policy: Option<Vec<RhoPolicy>>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_parser = parse_value::<Frequency>)]
    pub freq: Option<Frequency>,
    /// Keep raw ranges and p-values (always on for null-basic).
    #[arg(long)]
    pub keep_raw: bool,
}

fn resolve_seed(arg: Option<u64>) -> Result<u64> {
    if let Some(s) = arg {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Input(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

pub fn plan_from_args(args: &SimulateArgs) -> Result<ExperimentPlan> {
    let overrides = Overrides {
        n_grid: args.n_grid.clone(),
        p_grid: args.p_grid.clone(),
        rho_grid: args.rho_grid.clone(),
        psnr_grid: args.psnr_grid.clone(),
        design: args.design,
        corr: args.corr.map(|c| match c {
            CorrArg::RankOne => CorrKind::RankOne,
            CorrArg::Ar1 => CorrKind::Ar1,
        }),
        df_modes: args.df.clone(),
        rho_policies: args.rho_policy.clone(),
        alpha: args.alpha,
        periods_per_year: args.freq.map(|f| f.periods_per_year()),
        keep_raw: args.keep_raw.then_some(true),
    };
    ExperimentPlan::preset(args.experiment.into(), args.reps, resolve_seed(args.seed)?, &overrides)
}

/// Runs the plan, on a dedicated pool when `threads` is given.
pub fn execute(plan: &ExperimentPlan, threads: Option<usize>) -> Result<PlanOutput> {
    match threads {
        None => run_plan(plan),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::numeric(format!("cannot start worker pool: {e}")))?
            .install(|| run_plan(plan)),
    }
}

pub fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let plan = plan_from_args(args)?;
    let output = execute(&plan, args.threads)?;

    let mut table = Vec::new();
    write_table(&output.rows, &mut table)?;
    let prefix = args
        .raw_prefix
        .clone()
        .or_else(|| args.out.as_ref().map(|o| o.with_extension("")));
    if plan.keep_raw {
        match &prefix {
            Some(prefix) => write_raw_files(&plan, &output, prefix)?,
            None => writeln!(stderr, "note: raw values kept but not written; pass --out or --raw-prefix")?,
        }
    }
    match &args.out {
        Some(path) => std::fs::write(path, &table)
            .map_err(|e| Error::Input(format!("cannot write `{}`: {e}", path.display())))?,
        None => stdout.write_all(&table)?,
    }
    Ok(())
}

fn sibling(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Linear interpolation between order statistics (type 7).
fn empirical_quantile(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn variant_label(r: &SimResult) -> String {
    format!("{}|{}", r.spec.df_mode, r.spec.rho_policy)
}

/// Writes `<prefix>.raw.csv`, `<prefix>.qq.csv` and `<prefix>.pp.csv`.
/// Ranges are annualized; the Q-Q reference is √((1−ρ)/n)·q(·; p, ∞) on the
/// same scale, for rank-one cells.
pub fn write_raw_files(plan: &ExperimentPlan, out: &PlanOutput, prefix: &Path) -> Result<()> {
    let per_cell = plan.variants.len();
    let mut raw = csv::Writer::from_path(sibling(prefix, ".raw.csv"))?;
    let mut qq = csv::Writer::from_path(sibling(prefix, ".qq.csv"))?;
    let mut pp = csv::Writer::from_path(sibling(prefix, ".pp.csv"))?;
    raw.write_record(["cell", "variant", "replication", "range", "pvalue"])?;
    qq.write_record(["cell", "prob", "empirical", "theoretical"])?;
    pp.write_record(["cell", "variant", "uniform", "pvalue"])?;

    for (cell, chunk) in out.results.chunks(per_cell).enumerate() {
        let spec = &chunk[0].spec;
        let f = spec.periods_per_year.sqrt();
        let cell_s = cell.to_string();
        for r in chunk {
            let label = variant_label(r);
            let (Some(ranges), Some(pvals)) = (&r.raw_ranges, &r.raw_pvalues) else {
                continue;
            };
            for (i, (x, pv)) in ranges.iter().zip(pvals).enumerate() {
                raw.write_record([&cell_s, &label, &i.to_string(), &(x * f).to_string(), &pv.to_string()])?;
            }
            let mut sorted = pvals.clone();
            sorted.sort_by(f64::total_cmp);
            let m = sorted.len() as f64;
            for (i, pv) in sorted.iter().enumerate() {
                let u = (i as f64 + 0.5) / m;
                pp.write_record([&cell_s, &label, &u.to_string(), &pv.to_string()])?;
            }
        }
        // draws are shared across variants, so one Q-Q table per cell
        let (Some(ranges), Some(rho)) = (&chunk[0].raw_ranges, spec.corr.rho()) else {
            continue;
        };
        if spec.corr.kind() != CorrKind::RankOne {
            continue;
        }
        let mut sorted: Vec<f64> = ranges.iter().map(|x| x * f).collect();
        sorted.sort_by(f64::total_cmp);
        let dist = StudentizedRange::new(RangeDistParams::new(spec.p, Df::Infinite)?);
        let scale = ((1.0 - rho) / spec.n_days as f64).sqrt() * f;
        for i in 1..100 {
            let prob = i as f64 / 100.0;
            let theo = dist.quantile(prob)? * scale;
            qq.write_record([
                &cell_s,
                &prob.to_string(),
                &empirical_quantile(&sorted, prob).to_string(),
                &theo.to_string(),
            ])?;
        }
    }
    raw.flush()?;
    qq.flush()?;
    pp.flush()?;
    Ok(())
}
