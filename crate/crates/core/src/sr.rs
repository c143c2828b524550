//! Sharpe ratio estimation, annualization, and the asymptotic covariance of a
//! vector of Sharpe ratios.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corr_model::{inv_sqrt_rank_one, CorrModel};
use crate::error::{Error, Result};

/// Relative threshold below which a centred sum of squares counts as zero.
const SPREAD_EPS: f64 = 1e-24;

/// Whether a centred sum of squares `ss` is distinguishable from rounding noise
/// given the raw sum of squares of the same column.
pub(crate) fn has_spread(ss: f64, raw_ss: f64) -> bool {
    ss.is_finite() && ss > 0.0 && ss > SPREAD_EPS * raw_ss
}

/// An n × p matrix of periodic simple returns with asset labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    values: DMatrix<f64>,
    asset_names: Vec<String>,
    periods_per_year: f64,
}

impl ReturnsPanel {
    pub fn new(values: DMatrix<f64>, asset_names: Vec<String>, periods_per_year: f64) -> Result<Self> {
        let (n, p) = values.shape();
        if n < 2 {
            return Err(Error::domain(format!("returns panel needs at least 2 rows, got {n}")));
        }
        if p < 1 {
            return Err(Error::domain("returns panel needs at least one asset"));
        }
        if asset_names.len() != p {
            return Err(Error::domain(format!(
                "{} asset names for {p} columns",
                asset_names.len()
            )));
        }
        if !(periods_per_year > 0.0 && periods_per_year.is_finite()) {
            return Err(Error::domain(format!(
                "periods per year must be positive, got {periods_per_year}"
            )));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            let (row, col) = (idx % n, idx / n);
            return Err(Error::Input(format!(
                "non-finite return at row {} for asset `{}`",
                row + 1,
                asset_names[col]
            )));
        }
        Ok(Self {
            values,
            asset_names,
            periods_per_year,
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn asset_names(&self) -> &[String] {
        &self.asset_names
    }

    pub fn periods_per_year(&self) -> f64 {
        self.periods_per_year
    }
}

/// Per-asset Sharpe ratios with their sample size and periodicity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrEstimate {
    sr: Vec<f64>,
    n: usize,
    periods_per_year: f64,
    annualized: bool,
}

impl SrEstimate {
    pub fn new(sr: Vec<f64>, n: usize, periods_per_year: f64, annualized: bool) -> Result<Self> {
        if sr.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("Sharpe ratios must be finite"));
        }
        if !(periods_per_year > 0.0 && periods_per_year.is_finite()) {
            return Err(Error::domain(format!(
                "periods per year must be positive, got {periods_per_year}"
            )));
        }
        Ok(Self {
            sr,
            n,
            periods_per_year,
            annualized,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.sr
    }

    pub fn k(&self) -> usize {
        self.sr.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn periods_per_year(&self) -> f64 {
        self.periods_per_year
    }

    pub fn is_annualized(&self) -> bool {
        self.annualized
    }

    /// Multiplies every ratio by √(periods per year). Fails if already annualized.
    pub fn annualize(&self) -> Result<Self> {
        if self.annualized {
            return Err(Error::State("Sharpe ratios are already annualized".into()));
        }
        let f = self.periods_per_year.sqrt();
        Ok(Self {
            sr: self.sr.iter().map(|v| v * f).collect(),
            annualized: true,
            ..self.clone()
        })
    }

    /// The same ratios in per-period units.
    pub fn per_period(&self) -> Self {
        if !self.annualized {
            return self.clone();
        }
        let f = self.periods_per_year.sqrt();
        Self {
            sr: self.sr.iter().map(|v| v / f).collect(),
            annualized: false,
            ..self.clone()
        }
    }

    /// max − min over the assets.
    pub fn range(&self) -> f64 {
        let (lo, hi) = self
            .sr
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if self.sr.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }
}

/// Free-function form of [`SrEstimate::annualize`].
pub fn annualize(est: &SrEstimate) -> Result<SrEstimate> {
    est.annualize()
}

/// Population signal-noise ratios in per-period units.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrVector(Vec<f64>);

impl SnrVector {
    pub fn new(snr: Vec<f64>) -> Result<Self> {
        if snr.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("signal-noise ratios must be finite"));
        }
        Ok(Self(snr))
    }

    pub fn constant(value: f64, p: usize) -> Result<Self> {
        Self::new(vec![value; p])
    }

    /// Converts annualized values (yr^{-1/2}) to per-period units.
    pub fn from_annual(annual: &[f64], periods_per_year: f64) -> Result<Self> {
        let f = periods_per_year.sqrt();
        Self::new(annual.iter().map(|v| v / f).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.0.windows(2).all(|w| w[0] == w[1])
    }
}

/// Sharpe ratio of each column: `(mean − rf) / sd` with the n − 1 sd
/// denominator, in per-period units.
pub fn sharpe_ratios(panel: &ReturnsPanel, risk_free_per_period: f64) -> Result<SrEstimate> {
    let n = panel.n();
    let sr = panel
        .values()
        .column_iter()
        .zip(panel.asset_names())
        .map(|(col, name)| {
            let mean = col.mean();
            let raw_ss = col.norm_squared();
            let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
            if !has_spread(ss, raw_ss) {
                return Err(Error::degenerate(name.clone(), "has zero sample variance"));
            }
            let sd = (ss / (n as f64 - 1.0)).sqrt();
            Ok((mean - risk_free_per_period) / sd)
        })
        .collect::<Result<Vec<_>>>()?;
    SrEstimate::new(sr, n, panel.periods_per_year(), false)
}

/// One row of a summary-statistics table: annualized percent mean return and
/// percent volatility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundSummary {
    pub name: String,
    pub annual_return_pct: f64,
    pub annual_sd_pct: f64,
}

/// Annualized Sharpe ratios from summary statistics, `(ret − rf) / sd`.
///
/// `n` and `periods_per_year` describe the observations the summaries were
/// computed from; they are carried along for the cutoff computations.
pub fn sr_from_summary(
    funds: &[FundSummary],
    risk_free_annual_pct: f64,
    n: usize,
    periods_per_year: f64,
) -> Result<SrEstimate> {
    let sr = funds
        .iter()
        .map(|f| {
            if !(f.annual_sd_pct > 0.0 && f.annual_sd_pct.is_finite()) {
                return Err(Error::Domain(format!(
                    "fund `{}` has non-positive standard deviation {}",
                    f.name, f.annual_sd_pct
                )));
            }
            if !f.annual_return_pct.is_finite() {
                return Err(Error::Domain(format!("fund `{}` has a non-finite return", f.name)));
            }
            Ok((f.annual_return_pct - risk_free_annual_pct) / f.annual_sd_pct)
        })
        .collect::<Result<Vec<_>>>()?;
    SrEstimate::new(sr, n, periods_per_year, true)
}

/// `z = √n · R^{−1/2} (sr − snr0)` under a rank-one correlation model.
pub fn z_transform(est: &SrEstimate, model: &CorrModel, snr0: &SnrVector) -> Result<DVector<f64>> {
    let CorrModel::RankOne { rho, p } = *model else {
        return Err(Error::domain("z-transform requires a rank-one correlation model"));
    };
    if est.is_annualized() {
        return Err(Error::State("z-transform expects per-period Sharpe ratios".into()));
    }
    if est.k() != p || snr0.len() != p {
        return Err(Error::domain(format!(
            "dimension mismatch: {} ratios, {} null values, model over {p} assets",
            est.k(),
            snr0.len()
        )));
    }
    if !snr0.is_constant() {
        return Err(Error::domain("null signal-noise ratios must be a constant vector"));
    }
    let m = inv_sqrt_rank_one(rho, p)?;
    let diff = DVector::from_iterator(p, est.values().iter().zip(snr0.values()).map(|(s, z)| s - z));
    Ok((m * diff) * (est.n() as f64).sqrt())
}

/// Which approximation of the Sharpe ratio covariance to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceForm {
    /// R / n
    #[default]
    Simple,
    /// (R + ½ diag(ζ)(R∘R)diag(ζ)) / n
    Full,
}

/// Approximate covariance of the vector of Sharpe ratios.
pub fn sr_covariance(
    snr: &SnrVector,
    model: &CorrModel,
    n: usize,
    form: CovarianceForm,
) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::domain(format!("sample size must be >= 2, got {n}")));
    }
    let r = model.matrix();
    let p = r.nrows();
    if snr.len() != p {
        return Err(Error::domain(format!(
            "{} signal-noise ratios for a model over {p} assets",
            snr.len()
        )));
    }
    let z = snr.values();
    let cov = match form {
        CovarianceForm::Simple => r,
        CovarianceForm::Full => DMatrix::from_fn(p, p, |i, j| {
            let rij = r[(i, j)];
            rij + 0.5 * z[i] * rij * rij * z[j]
        }),
    };
    Ok(cov / n as f64)
}
