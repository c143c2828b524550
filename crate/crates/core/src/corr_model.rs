//! Correlation structures: equicorrelation (rank-one), AR(1) and general
//! matrices, with the closed-form inverse square root of the rank-one model
//! and the median-of-upper-triangle estimator of a common correlation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sr::ReturnsPanel;

/// Distance kept from the boundary when an estimated correlation is clamped
/// into the positive-definite range.
pub const RHO_CLAMP_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrKind {
    RankOne,
    Ar1,
    Full,
}

/// A validated correlation structure over `p` assets.
#[derive(Debug, Clone, PartialEq)]
pub enum CorrModel {
    RankOne { rho: f64, p: usize },
    Ar1 { rho: f64, p: usize },
    Full(DMatrix<f64>),
}

impl CorrModel {
    pub fn rank_one(rho: f64, p: usize) -> Result<Self> {
        check_rank_one(rho, p)?;
        Ok(CorrModel::RankOne { rho, p })
    }

    pub fn ar1(rho: f64, p: usize) -> Result<Self> {
        check_ar1(rho, p)?;
        Ok(CorrModel::Ar1 { rho, p })
    }

    /// A general correlation matrix: symmetric, unit diagonal, positive definite.
    pub fn full(matrix: DMatrix<f64>) -> Result<Self> {
        let p = matrix.nrows();
        if p == 0 || matrix.ncols() != p {
            return Err(Error::domain("correlation matrix must be square and non-empty"));
        }
        for i in 0..p {
            if (matrix[(i, i)] - 1.0).abs() > 1e-10 {
                return Err(Error::domain(format!(
                    "correlation matrix diagonal entry {i} is {} (expected 1)",
                    matrix[(i, i)]
                )));
            }
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-10 {
                    return Err(Error::domain(format!(
                        "correlation matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if matrix.clone().cholesky().is_none() {
            return Err(Error::domain("correlation matrix is not positive definite"));
        }
        Ok(CorrModel::Full(matrix))
    }

    pub fn kind(&self) -> CorrKind {
        match self {
            CorrModel::RankOne { .. } => CorrKind::RankOne,
            CorrModel::Ar1 { .. } => CorrKind::Ar1,
            CorrModel::Full(_) => CorrKind::Full,
        }
    }

    pub fn p(&self) -> usize {
        match self {
            CorrModel::RankOne { p, .. } | CorrModel::Ar1 { p, .. } => *p,
            CorrModel::Full(m) => m.nrows(),
        }
    }

    /// The structural parameter ρ, if the model has one.
    pub fn rho(&self) -> Option<f64> {
        match self {
            CorrModel::RankOne { rho, .. } | CorrModel::Ar1 { rho, .. } => Some(*rho),
            CorrModel::Full(_) => None,
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        match self {
            CorrModel::RankOne { rho, p } => rank_one_matrix(*rho, *p),
            CorrModel::Ar1 { rho, p } => ar1_matrix(*rho, *p),
            CorrModel::Full(m) => m.clone(),
        }
    }
}

/// Open interval of ρ for which the p×p equicorrelation matrix is positive definite.
pub fn rank_one_rho_bounds(p: usize) -> (f64, f64) {
    (-1.0 / (p as f64 - 1.0), 1.0)
}

fn check_rank_one(rho: f64, p: usize) -> Result<()> {
    if p < 2 {
        return Err(Error::domain(format!("rank-one correlation needs p >= 2, got {p}")));
    }
    let (lo, hi) = rank_one_rho_bounds(p);
    if !(rho > lo && rho < hi) {
        return Err(Error::domain(format!(
            "rho = {rho} outside the positive-definite range ({lo}, {hi}) for p = {p}"
        )));
    }
    Ok(())
}

fn check_ar1(rho: f64, p: usize) -> Result<()> {
    if p < 2 {
        return Err(Error::domain(format!("AR(1) correlation needs p >= 2, got {p}")));
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::domain(format!("AR(1) correlation needs |rho| < 1, got {rho}")));
    }
    Ok(())
}

fn rank_one_matrix(rho: f64, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho })
}

fn ar1_matrix(rho: f64, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32))
}

/// `(1 − ρ)I + ρ11ᵀ`.
pub fn make_rank_one(rho: f64, p: usize) -> Result<DMatrix<f64>> {
    check_rank_one(rho, p)?;
    Ok(rank_one_matrix(rho, p))
}

/// Entry (i, j) is `ρ^|i−j|`.
pub fn make_ar1(rho: f64, p: usize) -> Result<DMatrix<f64>> {
    check_ar1(rho, p)?;
    Ok(ar1_matrix(rho, p))
}

/// The off-diagonal constant `c` of the symmetric inverse square root of the
/// equicorrelation matrix, which has diagonal `c + (1 − ρ)^{−1/2}`.
pub fn rank_one_inv_sqrt_constant(rho: f64, p: usize) -> Result<f64> {
    check_rank_one(rho, p)?;
    let pf = p as f64;
    Ok(((1.0 + (pf - 1.0) * rho).sqrt().recip() - (1.0 - rho).sqrt().recip()) / pf)
}

/// Symmetric inverse square root of the equicorrelation matrix.
///
/// The matrix has eigenvalue `1 + (p − 1)ρ` on the ones vector and `1 − ρ` on
/// its orthogonal complement, so
/// `M = (1 − ρ)^{−1/2}(I − 11ᵀ/p) + (1 + (p − 1)ρ)^{−1/2} 11ᵀ/p`.
pub fn inv_sqrt_rank_one(rho: f64, p: usize) -> Result<DMatrix<f64>> {
    let c = rank_one_inv_sqrt_constant(rho, p)?;
    let d = (1.0 - rho).sqrt().recip();
    Ok(DMatrix::from_fn(p, p, |i, j| if i == j { c + d } else { c }))
}

/// Pearson correlation of the panel's columns (n − 1 convention throughout).
pub fn sample_correlation(panel: &ReturnsPanel) -> Result<DMatrix<f64>> {
    let values = panel.values();
    let (n, p) = values.shape();
    if n < 2 {
        return Err(Error::domain(format!("correlation needs at least 2 rows, got {n}")));
    }
    let mut centered = values.clone();
    for j in 0..p {
        let mut col = centered.column_mut(j);
        let raw_ss = col.norm_squared();
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let ss = col.norm_squared();
        if !crate::sr::has_spread(ss, raw_ss) {
            return Err(Error::degenerate(
                panel.asset_names()[j].clone(),
                "has zero sample variance",
            ));
        }
        col /= ss.sqrt();
    }
    let mut corr = centered.transpose() * &centered;
    for i in 0..p {
        corr[(i, i)] = 1.0;
        for j in 0..i {
            let v = (0.5 * (corr[(i, j)] + corr[(j, i)])).clamp(-1.0, 1.0);
            corr[(i, j)] = v;
            corr[(j, i)] = v;
        }
    }
    Ok(corr)
}

/// Median of the strictly-upper-triangle entries of a square matrix.
pub fn upper_triangle_median(matrix: &DMatrix<f64>) -> Result<f64> {
    let p = matrix.nrows();
    let mut entries: Vec<f64> = (0..p)
        .flat_map(|i| (i + 1..p).map(move |j| (i, j)))
        .map(|(i, j)| matrix[(i, j)])
        .collect();
    if entries.is_empty() {
        return Err(Error::domain("median of the upper triangle needs p >= 2"));
    }
    entries.sort_by(f64::total_cmp);
    let m = entries.len();
    Ok(if m % 2 == 1 {
        entries[m / 2]
    } else {
        0.5 * (entries[m / 2 - 1] + entries[m / 2])
    })
}

/// Feasible estimate of the common correlation: the median of the
/// upper-triangle entries of the sample correlation matrix.
pub fn estimate_rho_median(panel: &ReturnsPanel) -> Result<f64> {
    if panel.n() < 3 {
        return Err(Error::domain(format!(
            "estimating rho needs at least 3 observations, got {}",
            panel.n()
        )));
    }
    if panel.p() < 2 {
        return Err(Error::domain("estimating rho needs at least 2 assets"));
    }
    upper_triangle_median(&sample_correlation(panel)?)
}

/// Moves ρ inside the open positive-definite range for `p` assets, returning
/// the adjusted value and whether it was changed.
pub fn clamp_rho_to_pd(rho: f64, p: usize) -> (f64, bool) {
    let (lo, hi) = rank_one_rho_bounds(p);
    if rho <= lo {
        (lo + RHO_CLAMP_MARGIN, true)
    } else if rho >= hi {
        (hi - RHO_CLAMP_MARGIN, true)
    } else {
        (rho, false)
    }
}
