//! Seeded Monte Carlo engine for the calibration and power studies.
//!
//! Each replication draws an n × p panel of multivariate normal returns with
//! unit per-period volatility, computes the Sharpe ratios, and compares a
//! design-specific range statistic with the HSD cutoff. Replications run in
//! parallel; each one owns a counter-based RNG substream keyed by
//! `(seed, replication index)`, so results do not depend on the worker count.

pub mod experiments;
pub mod rng;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corr_model::{clamp_rho_to_pd, estimate_rho_median, CorrModel};
use crate::error::{Error, Result};
use crate::posthoc::DfMode;
use crate::range_dist::{Df, RangeDistParams, StudentizedRange};
use crate::sr::{sharpe_ratios, ReturnsPanel};

pub use rng::replication_rng;

/// Which statistic is compared with the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// max − min over all assets
    NullRange,
    /// first asset minus the minimum of the rest
    OneGood,
    /// maximum of the first half minus the minimum of the second half
    HalfGood,
}

impl Design {
    pub fn as_str(&self) -> &'static str {
        match self {
            Design::NullRange => "null_range",
            Design::OneGood => "one_good",
            Design::HalfGood => "half_good",
        }
    }

    pub fn is_one_sided(&self) -> bool {
        !matches!(self, Design::NullRange)
    }

    /// Annualized signal-noise ratios for this design with non-zero value `psnr`.
    /// Under the null every asset gets `psnr`.
    pub fn snr_profile(&self, p: usize, psnr: f64) -> Vec<f64> {
        match self {
            Design::NullRange => vec![psnr; p],
            Design::OneGood => (0..p).map(|i| if i == 0 { psnr } else { 0.0 }).collect(),
            Design::HalfGood => (0..p).map(|i| if i < p / 2 { psnr } else { 0.0 }).collect(),
        }
    }

    fn statistic(&self, sr: &[f64]) -> f64 {
        let max = |s: &[f64]| s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = |s: &[f64]| s.iter().copied().fold(f64::INFINITY, f64::min);
        match self {
            Design::NullRange => max(sr) - min(sr),
            Design::OneGood => sr[0] - min(&sr[1..]),
            Design::HalfGood => {
                let h = sr.len() / 2;
                max(&sr[..h]) - min(&sr[h..])
            }
        }
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "null" | "null_range" => Ok(Design::NullRange),
            "one_good" => Ok(Design::OneGood),
            "half_good" => Ok(Design::HalfGood),
            other => Err(Error::domain(format!("unknown design `{other}`"))),
        }
    }
}

/// How ρ is resolved when computing the cutoff in each replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoPolicy {
    /// The ρ of the generating rank-one model.
    TrueRho,
    /// Median of the upper triangle of the sample correlation.
    Estimated,
    Assumed(f64),
}

impl fmt::Display for RhoPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RhoPolicy::TrueRho => f.write_str("true"),
            RhoPolicy::Estimated => f.write_str("estimated"),
            RhoPolicy::Assumed(v) => write!(f, "assumed:{v}"),
        }
    }
}

impl FromStr for RhoPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "true" | "true_rho" => Ok(RhoPolicy::TrueRho),
            "estimate" | "estimated" => Ok(RhoPolicy::Estimated),
            _ => {
                let v = t.strip_prefix("assumed:").unwrap_or(&t);
                v.parse()
                    .map(RhoPolicy::Assumed)
                    .map_err(|_| Error::domain(format!("unknown rho policy `{s}`")))
            }
        }
    }
}

/// Full description of one Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub n_days: usize,
    pub p: usize,
    pub periods_per_year: f64,
    pub corr: CorrModel,
    /// Annualized signal-noise ratios, yr^{-1/2}.
    pub snr_annual: Vec<f64>,
    pub alpha: f64,
    pub df_mode: DfMode,
    pub rho_policy: RhoPolicy,
    pub design: Design,
    pub replications: usize,
    pub seed: u64,
    /// Keep per-replication statistics and p-values.
    pub keep_raw: bool,
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        self.validate_process()?;
        check_policy(self.rho_policy, &self.corr, self.p)
    }

    /// Checks everything except the ρ policy.
    fn validate_process(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::domain("replications must be >= 1"));
        }
        if self.p < 2 {
            return Err(Error::domain(format!("simulations need p >= 2, got {}", self.p)));
        }
        if self.n_days < 3 {
            return Err(Error::domain(format!(
                "simulations need at least 3 observations, got {}",
                self.n_days
            )));
        }
        if self.corr.p() != self.p {
            return Err(Error::domain(format!(
                "correlation model covers {} assets, spec has p = {}",
                self.corr.p(),
                self.p
            )));
        }
        if self.snr_annual.len() != self.p || self.snr_annual.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("snr_annual must hold p finite values"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::domain(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.periods_per_year > 0.0 && self.periods_per_year.is_finite()) {
            return Err(Error::domain("periods per year must be positive"));
        }
        if self.design == Design::HalfGood && !self.p.is_multiple_of(2) {
            return Err(Error::domain(format!("half-good design needs even p, got {}", self.p)));
        }
        Ok(())
    }

    fn variant(&self) -> Variant {
        Variant {
            df_mode: self.df_mode,
            rho_policy: self.rho_policy,
        }
    }
}

fn check_policy(policy: RhoPolicy, corr: &CorrModel, p: usize) -> Result<()> {
    match policy {
        RhoPolicy::TrueRho if !matches!(corr, CorrModel::RankOne { .. }) => Err(Error::domain(
            "the true-rho policy needs a rank-one generating model",
        )),
        RhoPolicy::Assumed(v) => {
            let (clamped, moved) = clamp_rho_to_pd(v, p);
            if moved || clamped != v {
                Err(Error::domain(format!("assumed rho {v} is outside the valid range for p = {p}")))
            } else {
                Ok(())
            }
        }
        _ => Ok(()),
    }
}

/// Aggregated outcome of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub spec: SimSpec,
    pub rejections: u64,
    pub rejection_rate: f64,
    pub rejection_se: f64,
    /// Replications whose estimated ρ had to be clamped into the valid range.
    pub rho_clamped: u64,
    pub raw_ranges: Option<Vec<f64>>,
    pub raw_pvalues: Option<Vec<f64>>,
}

/// Rejection counts; merging is associative and commutative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Tally {
    pub trials: u64,
    pub rejections: u64,
}

impl Tally {
    pub fn push(&mut self, rejected: bool) {
        self.trials += 1;
        self.rejections += u64::from(rejected);
    }

    pub fn merge(self, other: Tally) -> Tally {
        Tally {
            trials: self.trials + other.trials,
            rejections: self.rejections + other.rejections,
        }
    }

    pub fn rate(&self) -> f64 {
        self.rejections as f64 / self.trials as f64
    }

    /// Binomial standard error `√(r(1 − r)/trials)`.
    pub fn se(&self) -> f64 {
        let r = self.rate();
        (r * (1.0 - r) / self.trials as f64).sqrt()
    }
}

/// Folds a stream of per-replication rejections into a tally.
pub fn aggregate<I: IntoIterator<Item = bool>>(outcomes: I) -> Result<Tally> {
    let mut t = Tally::default();
    for o in outcomes {
        t.push(o);
    }
    if t.trials == 0 {
        return Err(Error::domain("cannot aggregate an empty stream of replications"));
    }
    Ok(t)
}

/// Draws the returns panel for one replication.
pub fn sample_returns(spec: &SimSpec, replication: u64) -> Result<ReturnsPanel> {
    spec.validate()?;
    let sampler = Sampler::new(spec)?;
    let names = (0..spec.p).map(|j| format!("asset_{}", j + 1)).collect();
    ReturnsPanel::new(
        sampler.draw(spec.n_days, spec.seed, replication),
        names,
        spec.periods_per_year,
    )
}

enum Factor {
    /// x_j = √ρ·g₀ + √(1 − ρ)·g_j
    OneFactor { common: f64, own: f64 },
    /// x = L g with R = L Lᵀ
    Cholesky(DMatrix<f64>),
}

struct Sampler {
    means: Vec<f64>,
    factor: Factor,
}

impl Sampler {
    fn new(spec: &SimSpec) -> Result<Self> {
        let f = spec.periods_per_year.sqrt();
        let means = spec.snr_annual.iter().map(|v| v / f).collect();
        let factor = match spec.corr {
            CorrModel::RankOne { rho, .. } if rho >= 0.0 => Factor::OneFactor {
                common: rho.sqrt(),
                own: (1.0 - rho).sqrt(),
            },
            ref other => {
                let chol = other
                    .matrix()
                    .cholesky()
                    .ok_or_else(|| Error::domain("correlation matrix is not positive definite"))?;
                Factor::Cholesky(chol.l())
            }
        };
        Ok(Self { means, factor })
    }

    fn draw(&self, n: usize, seed: u64, replication: u64) -> DMatrix<f64> {
        let p = self.means.len();
        let mut rng = replication_rng(seed, replication);
        let mut out = DMatrix::<f64>::zeros(n, p);
        let mut g = vec![0.0; p];
        for i in 0..n {
            match &self.factor {
                Factor::OneFactor { common, own } => {
                    let g0: f64 = rng.sample(StandardNormal);
                    for j in 0..p {
                        let gj: f64 = rng.sample(StandardNormal);
                        out[(i, j)] = self.means[j] + common * g0 + own * gj;
                    }
                }
                Factor::Cholesky(l) => {
                    for gj in g.iter_mut() {
                        *gj = rng.sample(StandardNormal);
                    }
                    for j in 0..p {
                        let mut acc = self.means[j];
                        for (m, gm) in g.iter().enumerate().take(j + 1) {
                            acc += l[(j, m)] * gm;
                        }
                        out[(i, j)] = acc;
                    }
                }
            }
        }
        out
    }
}

/// One way of turning a replication into a decision: df choice plus ρ policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variant {
    pub df_mode: DfMode,
    pub rho_policy: RhoPolicy,
}

struct Outcome {
    rejected: bool,
    statistic: f64,
    pvalue: f64,
    clamped: bool,
}

struct Cutoffs {
    inf: (f64, StudentizedRange),
    ndf: (f64, StudentizedRange),
}

impl Cutoffs {
    fn new(k: usize, n: usize, alpha: f64) -> Result<Self> {
        let make = |df: Df| -> Result<(f64, StudentizedRange)> {
            let dist = StudentizedRange::new(RangeDistParams::new(k, df)?);
            Ok((dist.quantile(1.0 - alpha)?, dist))
        };
        Ok(Self {
            inf: make(Df::Infinite)?,
            ndf: make(Df::Finite(n as f64 - 1.0))?,
        })
    }

    fn get(&self, mode: DfMode) -> &(f64, StudentizedRange) {
        match mode {
            DfMode::Inf => &self.inf,
            DfMode::NMinus1 => &self.ndf,
        }
    }
}

/// Runs several decision variants over the same draws. The variants share
/// `spec`'s data-generating process and seed; `spec.df_mode` and
/// `spec.rho_policy` are replaced by each variant in the returned results.
pub fn run_variants(spec: &SimSpec, variants: &[Variant]) -> Result<Vec<SimResult>> {
    spec.validate_process()?;
    if variants.is_empty() {
        return Err(Error::domain("no decision variants given"));
    }
    for v in variants {
        check_policy(v.rho_policy, &spec.corr, spec.p)?;
    }
    let sampler = Sampler::new(spec)?;
    let cutoffs = Cutoffs::new(spec.p, spec.n_days, spec.alpha)?;
    let true_rho = spec.corr.rho();
    let n = spec.n_days as f64;
    let names: Vec<String> = (0..spec.p).map(|j| format!("asset_{}", j + 1)).collect();

    let per_rep: Vec<Vec<Outcome>> = (0..spec.replications as u64)
        .into_par_iter()
        .map(|rep| -> Result<Vec<Outcome>> {
            let panel = ReturnsPanel::new(
                sampler.draw(spec.n_days, spec.seed, rep),
                names.clone(),
                spec.periods_per_year,
            )?;
            let sr = sharpe_ratios(&panel, 0.0)?;
            let stat = spec.design.statistic(sr.values());
            let mut estimated: Option<(f64, bool)> = None;
            variants
                .iter()
                .map(|v| {
                    let (rho, clamped) = match v.rho_policy {
                        RhoPolicy::TrueRho => (true_rho.unwrap_or(0.0), false),
                        RhoPolicy::Assumed(r) => (r, false),
                        RhoPolicy::Estimated => match estimated {
                            Some(e) => e,
                            None => {
                                let e = clamp_rho_to_pd(estimate_rho_median(&panel)?, spec.p);
                                estimated = Some(e);
                                e
                            }
                        },
                    };
                    let denom = match v.df_mode {
                        DfMode::Inf => n,
                        DfMode::NMinus1 => n - 1.0,
                    };
                    let scale = ((1.0 - rho) / denom).sqrt();
                    let (q, dist) = cutoffs.get(v.df_mode);
                    let pvalue = if spec.keep_raw {
                        1.0 - dist.cdf(stat.max(0.0) / scale)?
                    } else {
                        f64::NAN
                    };
                    Ok(Outcome {
                        rejected: stat >= q * scale,
                        statistic: stat,
                        pvalue,
                        clamped,
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;

    variants
        .iter()
        .enumerate()
        .map(|(idx, v)| {
            let tally = aggregate(per_rep.iter().map(|o| o[idx].rejected))?;
            let rho_clamped = per_rep.iter().filter(|o| o[idx].clamped).count() as u64;
            let (raw_ranges, raw_pvalues) = if spec.keep_raw {
                (
                    Some(per_rep.iter().map(|o| o[idx].statistic).collect()),
                    Some(per_rep.iter().map(|o| o[idx].pvalue).collect()),
                )
            } else {
                (None, None)
            };
            Ok(SimResult {
                spec: SimSpec {
                    df_mode: v.df_mode,
                    rho_policy: v.rho_policy,
                    ..spec.clone()
                },
                rejections: tally.rejections,
                rejection_rate: tally.rate(),
                rejection_se: tally.se(),
                rho_clamped,
                raw_ranges,
                raw_pvalues,
            })
        })
        .collect()
}

/// Runs one experiment as described by `spec`.
pub fn run_experiment(spec: &SimSpec) -> Result<SimResult> {
    let mut out = run_variants(spec, &[spec.variant()])?;
    Ok(out.remove(0))
}

/// Same as [`run_experiment`] on a dedicated pool of `threads` workers.
pub fn run_experiment_with_threads(spec: &SimSpec, threads: usize) -> Result<SimResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::numeric(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_experiment(spec))
}

/// Type-I study: all assets share one signal-noise ratio and the full range is tested.
pub fn run_null_experiment(spec: &SimSpec) -> Result<SimResult> {
    if spec.design != Design::NullRange {
        return Err(Error::domain("null experiments use the null_range design"));
    }
    if spec.snr_annual.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::domain("null experiments need equal signal-noise ratios"));
    }
    run_experiment(spec)
}

/// AR(1) truth analysed under the rank-one test, once per ρ policy on shared draws.
pub fn run_misspecified_ar1(spec: &SimSpec, policies: &[RhoPolicy]) -> Result<Vec<SimResult>> {
    if !matches!(spec.corr, CorrModel::Ar1 { .. }) {
        return Err(Error::domain("misspecification runs need an AR(1) generating model"));
    }
    if policies.iter().any(|p| matches!(p, RhoPolicy::TrueRho)) {
        return Err(Error::domain("AR(1) runs take estimated or assumed rho policies"));
    }
    let variants: Vec<Variant> = policies
        .iter()
        .map(|&rho_policy| Variant {
            df_mode: spec.df_mode,
            rho_policy,
        })
        .collect();
    run_variants(spec, &variants)
}

/// Power study over a (ψ, ρ) grid for a one-sided design. `base.corr` is
/// replaced by a rank-one model at each ρ and `base.snr_annual` by the design
/// profile at each ψ. Cells get independent seeds derived from `base.seed`.
pub fn run_alternative(base: &SimSpec, psnr_grid: &[f64], rho_grid: &[f64]) -> Result<Vec<SimResult>> {
    if !base.design.is_one_sided() {
        return Err(Error::domain("alternative runs use the one_good or half_good design"));
    }
    let mut out = Vec::with_capacity(psnr_grid.len() * rho_grid.len());
    let mut cell = 0u64;
    for &rho in rho_grid {
        for &psnr in psnr_grid {
            let spec = SimSpec {
                corr: CorrModel::rank_one(rho, base.p)?,
                snr_annual: base.design.snr_profile(base.p, psnr),
                seed: rng::cell_seed(base.seed, cell),
                ..base.clone()
            };
            out.push(run_experiment(&spec)?);
            cell += 1;
        }
    }
    Ok(out)
}
