//! Generalized least-squares estimation of the trend coefficients and the
//! dispersion (covariance) of the resulting estimates.
//!
//! For a weight `W`, the estimate is `B = (F W Fᵀ)^-1 F W Z` and its
//! dispersion under the true noise covariance `K` is the sandwich
//! `G^-1 (F W K W Fᵀ) G^-1` with `G = F W Fᵀ`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::covmodels::{CovMatrix, DesignMatrix};
use crate::error::{Error, Result};
use crate::markov::{banded_inverse, BandedMatrix, MarkovFactor};

/// Choice of weight matrix.
///
/// Written as `identity`, `diagonal`, `full` or `markov(<m>)` in configs and
/// on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum WeightSpec {
    /// Ordinary least squares.
    Identity,
    /// `diag(K)^-1`.
    Diagonal,
    /// `K^-1`, giving the best linear unbiased estimate.
    Full,
    /// `(K^m)^-1` of the adjoint Markov matrix, applied through its band.
    Markov { m: usize },
}

impl fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightSpec::Identity => f.write_str("identity"),
            WeightSpec::Diagonal => f.write_str("diagonal"),
            WeightSpec::Full => f.write_str("full"),
            WeightSpec::Markov { m } => write!(f, "markov({m})"),
        }
    }
}

impl FromStr for WeightSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "identity" | "ols" => return Ok(WeightSpec::Identity),
            "diagonal" | "wls" => return Ok(WeightSpec::Diagonal),
            "full" | "blue" => return Ok(WeightSpec::Full),
            _ => {}
        }
        s.strip_prefix("markov(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|m| m.trim().parse::<usize>().ok())
            .map(|m| WeightSpec::Markov { m })
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown weight {s:?} (expected identity, diagonal, full or markov(<m>))"
                ))
            })
    }
}

impl TryFrom<String> for WeightSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<WeightSpec> for String {
    fn from(w: WeightSpec) -> String {
        w.to_string()
    }
}

/// A weight matrix built for a particular covariance.
#[derive(Debug, Clone)]
pub enum Weight {
    Identity,
    Diagonal(Vec<f64>),
    Full(Cholesky<f64, Dyn>),
    Markov(BandedMatrix),
}

impl Weight {
    pub fn new(spec: WeightSpec, k: &CovMatrix) -> Result<Self> {
        match spec {
            WeightSpec::Identity => Ok(Weight::Identity),
            WeightSpec::Diagonal => Ok(Weight::Diagonal(
                k.diagonal().into_iter().map(|d| 1.0 / d).collect(),
            )),
            WeightSpec::Full => k
                .matrix()
                .clone()
                .cholesky()
                .map(Weight::Full)
                .ok_or(Error::NotPositiveDefinite { pivot: 0 }),
            WeightSpec::Markov { m } => {
                let factor = MarkovFactor::new(k, m)?;
                Ok(Weight::Markov(banded_inverse(&factor)?))
            }
        }
    }

    pub fn n(&self) -> Option<usize> {
        match self {
            Weight::Identity => None,
            Weight::Diagonal(d) => Some(d.len()),
            Weight::Full(c) => Some(c.l_dirty().nrows()),
            Weight::Markov(b) => Some(b.n()),
        }
    }

    /// `W V` for an `n x c` matrix `V`.
    pub fn apply(&self, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if let Some(n) = self.n() {
            if v.nrows() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: v.nrows(),
                });
            }
        }
        match self {
            Weight::Identity => Ok(v.clone()),
            Weight::Diagonal(d) => Ok(DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| d[i] * v[(i, j)])),
            Weight::Full(c) => Ok(c.solve(v)),
            Weight::Markov(b) => b.mul_dense(v),
        }
    }
}

fn check_n(design: &DesignMatrix, n: usize) -> Result<()> {
    if design.n() != n {
        return Err(Error::DimensionMismatch {
            expected: design.n(),
            got: n,
        });
    }
    Ok(())
}

/// `A = W Fᵀ` and the Cholesky factor of `G = F A`.
fn normal_equations(design: &DesignMatrix, weight: &Weight) -> Result<(DMatrix<f64>, Cholesky<f64, Dyn>)> {
    let ft = design.matrix().transpose();
    let a = weight.apply(&ft)?;
    let g = design.matrix() * &a;
    let g = (&g + g.transpose()) * 0.5;
    let p = design.p();
    let chol = g.clone().cholesky().ok_or_else(|| {
        let eig = SymmetricEigen::new(g);
        let max = eig.eigenvalues.amax();
        let rank = eig.eigenvalues.iter().filter(|&&e| e > max * 1e-14).count();
        Error::RankDeficient {
            rank: rank.min(p.saturating_sub(1)),
            expected: p,
        }
    })?;
    Ok((a, chol))
}

/// Weighted normal-equation solution `(F W Fᵀ)^-1 F W Z`.
pub fn glse(design: &DesignMatrix, weight: &Weight, z: &[f64]) -> Result<DVector<f64>> {
    check_n(design, z.len())?;
    let (a, chol) = normal_equations(design, weight)?;
    let rhs = a.transpose() * DVector::from_column_slice(z);
    Ok(chol.solve(&rhs))
}

/// Sandwich dispersion `G^-1 Aᵀ K A G^-1` with `A = W Fᵀ`, `G = F A`.
pub fn dispersion(design: &DesignMatrix, weight: &Weight, k_true: &CovMatrix) -> Result<DMatrix<f64>> {
    check_n(design, k_true.n())?;
    let (a, chol) = normal_equations(design, weight)?;
    // S = G^-1 Aᵀ is the p x n linear map from measurements to estimates
    let s = chol.solve(&a.transpose());
    let d = &s * k_true.matrix() * s.transpose();
    let d = (&d + d.transpose()) * 0.5;
    if d.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite { pivot: 0 });
    }
    Ok(d)
}

/// Short form `(F K^-1 Fᵀ)^-1` of the best linear unbiased estimate's
/// dispersion.
pub fn blue_dispersion(design: &DesignMatrix, k: &CovMatrix) -> Result<DMatrix<f64>> {
    check_n(design, k.n())?;
    let kchol = k
        .matrix()
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { pivot: 0 })?;
    let ft = design.matrix().transpose();
    let g = design.matrix() * kchol.solve(&ft);
    let g = (&g + g.transpose()) * 0.5;
    let gchol = g.cholesky().ok_or(Error::RankDeficient {
        rank: design.p().saturating_sub(1),
        expected: design.p(),
    })?;
    let d = gchol.inverse();
    Ok((&d + d.transpose()) * 0.5)
}

/// `(det D, tr D)`.
pub fn functionals(d: &DMatrix<f64>) -> (f64, f64) {
    (d.determinant(), d.trace())
}

/// Coefficients and their dispersion for one weight choice.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub weight: WeightSpec,
    pub coefficients: DVector<f64>,
    pub dispersion: DMatrix<f64>,
    pub det: f64,
    pub trace: f64,
}

impl EstimateResult {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.dispersion.nrows())
            .map(|i| self.dispersion[(i, i)].sqrt())
            .collect()
    }
}

/// Estimates with `spec` built from `k`, dispersion evaluated under `k`.
pub fn estimate(design: &DesignMatrix, spec: WeightSpec, k: &CovMatrix, z: &[f64]) -> Result<EstimateResult> {
    let weight = Weight::new(spec, k)?;
    let coefficients = glse(design, &weight, z)?;
    let dispersion = dispersion(design, &weight, k)?;
    let (det, trace) = functionals(&dispersion);
    Ok(EstimateResult {
        weight: spec,
        coefficients,
        dispersion,
        det,
        trace,
    })
}
