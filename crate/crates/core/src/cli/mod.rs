//! Command-line front end.
//!
//! Exit codes: 0 success, 2 input or domain error, 3 numeric failure,
//! 4 usage error.

pub mod input;
pub mod report;
pub mod simulate;
pub mod svg;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::corr_model::{clamp_rho_to_pd, estimate_rho_median, sample_correlation, CorrModel};
use crate::error::{Error, Result};
use crate::posthoc::{run_posthoc, DfMode, PosthocInputs, RhoSource};
use crate::range_dist::{ptukey, qtukey, Df, RangeDistParams};
use crate::sr::{sharpe_ratios, sr_from_summary, CovarianceForm};

pub use input::Frequency;
pub use report::{InputMeta, ReportDocument};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 4;

/// Environment variable holding the default simulation seed.
pub const SEED_ENV: &str = "POSTHOC_SR_SEED";

#[derive(Debug, Parser)]
#[command(name = "posthoc-sr", version, about = "Post-hoc range tests for Sharpe ratios")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test a panel of returns for pairwise equality of signal-noise ratios.
    Test(TestArgs),
    /// Same test from a table of annualized mean returns and volatilities.
    TestSummary(SummaryArgs),
    /// Evaluate the studentized range distribution.
    Dist(DistArgs),
    /// Run Monte Carlo calibration and power experiments.
    Simulate(simulate::SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GlobalForm {
    Simple,
    Full,
}

impl From<GlobalForm> for CovarianceForm {
    fn from(f: GlobalForm) -> Self {
        match f {
            GlobalForm::Simple => CovarianceForm::Simple,
            GlobalForm::Full => CovarianceForm::Full,
        }
    }
}

/// `--rho estimate` or a fixed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoArg {
    Estimate,
    Value(f64),
}

impl std::str::FromStr for RhoArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "estimate" | "estimated" => Ok(RhoArg::Estimate),
            t => t
                .parse()
                .map(RhoArg::Value)
                .map_err(|_| format!("expected `estimate` or a number, got `{s}`")),
        }
    }
}

fn parse_value<T: std::str::FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a lollipop chart of the ratios with ± HSD error bars.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    /// CSV of returns: header of asset names, optional leading `date` column.
    #[arg(long)]
    pub input: PathBuf,
    /// daily (252), monthly (12), annual (1) or custom:<periods per year>.
    #[arg(long, value_parser = parse_value::<Frequency>)]
    pub freq: Frequency,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value = "n-1", value_parser = parse_value::<DfMode>)]
    pub df: DfMode,
    /// `estimate` (median sample correlation) or an assumed value.
    #[arg(long, default_value = "estimate")]
    pub rho: RhoArg,
    /// Risk-free rate per period, in the units of the file.
    #[arg(long, default_value_t = 0.0)]
    pub rf: f64,
    /// Cells are percent returns (1.5 means 1.5%).
    #[arg(long)]
    pub percent: bool,
    #[arg(long, value_enum, default_value = "simple")]
    pub global_form: GlobalForm,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SummaryArgs {
    /// CSV with columns name, annual_return_pct, annual_sd_pct.
    #[arg(long)]
    pub input: PathBuf,
    /// Number of return observations behind the summaries.
    #[arg(long)]
    pub n: usize,
    /// Assumed common correlation.
    #[arg(long)]
    pub rho: f64,
    /// Frequency of the observations counted by --n.
    #[arg(long, value_parser = parse_value::<Frequency>)]
    pub freq: Frequency,
    /// Annual risk-free rate in percent.
    #[arg(long, default_value_t = 0.0)]
    pub rf_annual: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value = "n-1", value_parser = parse_value::<DfMode>)]
    pub df: DfMode,
    #[arg(long, value_enum, default_value = "simple")]
    pub global_form: GlobalForm,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistOp {
    Cdf,
    Quantile,
}

#[derive(Debug, Clone, Args)]
pub struct DistArgs {
    #[arg(long, value_enum)]
    pub op: DistOp,
    #[arg(long)]
    pub k: usize,
    /// `inf` or a positive real.
    #[arg(long, value_parser = parse_value::<Df>)]
    pub df: Df,
    #[arg(long, required_if_eq("op", "cdf"), conflicts_with = "p")]
    pub q: Option<f64>,
    #[arg(long, required_if_eq("op", "quantile"))]
    pub p: Option<f64>,
}

/// Runs `cmd test` and returns the report.
pub fn cmd_test(args: &TestArgs) -> Result<ReportDocument> {
    let ppy = args.freq.periods_per_year();
    let panel = input::read_returns_file(&args.input, ppy, args.percent)?;
    if panel.p() < 2 {
        return Err(Error::Domain(format!(
            "the test needs at least 2 assets, `{}` has {}",
            args.input.display(),
            panel.p()
        )));
    }
    let rf = if args.percent { args.rf / 100.0 } else { args.rf };
    let est = sharpe_ratios(&panel, rf)?;
    let corr = sample_correlation(&panel)?;
    let median = estimate_rho_median(&panel)?;
    let mut warnings = Vec::new();

    let (rho, source) = match args.rho {
        RhoArg::Estimate => {
            let (r, clamped) = clamp_rho_to_pd(median, panel.p());
            if clamped {
                warnings.push(format!(
                    "estimated rho {median} lies outside the valid range for k = {}; clamped to {r}",
                    panel.p()
                ));
            }
            (r, RhoSource::Estimated)
        }
        RhoArg::Value(v) => (v, RhoSource::Assumed),
    };

    let global_model = match CorrModel::full(corr.clone()) {
        Ok(m) => m,
        Err(_) => {
            warnings.push(format!(
                "sample correlation is singular; the global test uses a rank-one model with rho = {rho}"
            ));
            CorrModel::rank_one(rho, panel.p())?
        }
    };

    let report = run_posthoc(PosthocInputs {
        asset_names: panel.asset_names(),
        est: &est,
        rho,
        rho_source: source,
        alpha: args.alpha,
        df_mode: args.df,
        global_model: &global_model,
        global_form: args.global_form.into(),
        warnings,
    })?;
    let p = panel.p();
    let input = InputMeta {
        command: "test".into(),
        file: args.input.display().to_string(),
        n: panel.n(),
        p,
        periods_per_year: ppy,
        risk_free: rf,
        rho_median: Some(median),
        sample_correlation: Some((0..p).map(|i| (0..p).map(|j| corr[(i, j)]).collect()).collect()),
    };
    Ok(ReportDocument::new(input, report))
}

/// Runs `cmd test-summary` and returns the report.
pub fn cmd_test_summary(args: &SummaryArgs) -> Result<ReportDocument> {
    let funds = input::read_summary_file(&args.input)?;
    if funds.len() < 2 {
        return Err(Error::Domain(format!(
            "the test needs at least 2 funds, `{}` has {}",
            args.input.display(),
            funds.len()
        )));
    }
    let ppy = args.freq.periods_per_year();
    let est = sr_from_summary(&funds, args.rf_annual, args.n, ppy)?;
    let names: Vec<String> = funds.iter().map(|f| f.name.clone()).collect();
    let model = CorrModel::rank_one(args.rho, funds.len())?;
    let report = run_posthoc(PosthocInputs {
        asset_names: &names,
        est: &est,
        rho: args.rho,
        rho_source: RhoSource::Assumed,
        alpha: args.alpha,
        df_mode: args.df,
        global_model: &model,
        global_form: args.global_form.into(),
        warnings: Vec::new(),
    })?;
    let input = InputMeta {
        command: "test-summary".into(),
        file: args.input.display().to_string(),
        n: args.n,
        p: funds.len(),
        periods_per_year: ppy,
        risk_free: args.rf_annual,
        rho_median: None,
        sample_correlation: None,
    };
    Ok(ReportDocument::new(input, report))
}

/// Evaluates the distribution as requested.
pub fn cmd_dist(args: &DistArgs) -> Result<f64> {
    let params = RangeDistParams::new(args.k, args.df)?;
    match args.op {
        DistOp::Cdf => ptukey(args.q.ok_or_else(|| Error::domain("--q is required"))?, params),
        DistOp::Quantile => qtukey(args.p.ok_or_else(|| Error::domain("--p is required"))?, params),
    }
}

/// Formats `v` with `digits` significant digits, switching to scientific
/// notation for very small or large magnitudes.
pub fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-4..15).contains(&exp) {
        return format!("{:.*e}", digits - 1, v);
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    format!("{v:.decimals$}")
}

fn write_output(path: Option<&Path>, content: &str, stdout: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, content)
            .map_err(|e| Error::Input(format!("cannot write `{}`: {e}", p.display())))?,
        None => stdout.write_all(content.as_bytes())?,
    }
    Ok(())
}

fn emit_report(doc: &ReportDocument, out: &OutputArgs, stdout: &mut dyn Write) -> Result<()> {
    let body = match out.format {
        Format::Json => doc.to_json()?,
        Format::Text => doc.to_text(),
        Format::Csv => doc.to_csv()?,
    };
    if let Some(path) = &out.svg {
        let title = format!("Annualized Sharpe ratios, {}", doc.input.file);
        write_output(Some(path), &svg::lollipop(&doc.report, &title), stdout)?;
    }
    write_output(out.out.as_deref(), &body, stdout)
}

fn dispatch(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Test(a) => {
            let doc = cmd_test(&a)?;
            emit_report(&doc, &a.output, stdout)
        }
        Command::TestSummary(a) => {
            let doc = cmd_test_summary(&a)?;
            emit_report(&doc, &a.output, stdout)
        }
        Command::Dist(a) => {
            let v = cmd_dist(&a)?;
            writeln!(stdout, "{}", format_significant(v, 12))?;
            Ok(())
        }
        Command::Simulate(a) => simulate::cmd_simulate(&a, stdout, stderr),
    }
}

/// Parses `args` (including the program name), runs the command, and returns
/// the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_USAGE,
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    match dispatch(cli, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
