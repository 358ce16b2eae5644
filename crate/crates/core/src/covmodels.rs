//! Stationary covariance kernels, regression bases and measurement grids.
//!
//! Everything here is a plain value: kernels and bases are evaluated on a
//! [`Grid`] to produce the measurement covariance [`CovMatrix`] and the
//! design matrix [`DesignMatrix`] used by the estimators.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the symmetry check on covariance matrices.
pub const SYMMETRY_TOL: f64 = 1e-14;

/// Largest diagonal jitter accepted by [`CovOptions`].
pub const MAX_JITTER: f64 = 1e-10;

/// Parametric stationary covariance function with unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovKernel {
    /// `exp(-alpha1 |tau|) cos(alpha2 tau)`
    ExpAbsCos {
        alpha1: f64,
        #[serde(default)]
        alpha2: f64,
    },
    /// `exp(-alpha1 tau^2)`
    ExpQuad { alpha1: f64 },
    /// `exp(-alpha1 tau^2) cos(alpha2 tau)`
    ExpQuadCos { alpha1: f64, alpha2: f64 },
}

impl CovKernel {
    pub fn exp_abs_cos(alpha1: f64, alpha2: f64) -> Self {
        CovKernel::ExpAbsCos { alpha1, alpha2 }
    }

    pub fn exp_quad(alpha1: f64) -> Self {
        CovKernel::ExpQuad { alpha1 }
    }

    pub fn exp_quad_cos(alpha1: f64, alpha2: f64) -> Self {
        CovKernel::ExpQuadCos { alpha1, alpha2 }
    }

    pub fn validate(&self) -> Result<()> {
        let (a1, a2) = self.params();
        if !(a1.is_finite() && a1 > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "{}: decay rate must be finite and > 0, got {a1}",
                self.family()
            )));
        }
        if !(a2.is_finite() && a2 >= 0.0) {
            return Err(Error::InvalidKernel(format!(
                "{}: angular frequency must be finite and >= 0, got {a2}",
                self.family()
            )));
        }
        Ok(())
    }

    /// `(alpha1, alpha2)`; `alpha2` is zero for [`CovKernel::ExpQuad`].
    pub fn params(&self) -> (f64, f64) {
        match *self {
            CovKernel::ExpAbsCos { alpha1, alpha2 } => (alpha1, alpha2),
            CovKernel::ExpQuad { alpha1 } => (alpha1, 0.0),
            CovKernel::ExpQuadCos { alpha1, alpha2 } => (alpha1, alpha2),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            CovKernel::ExpAbsCos { .. } => "exp_abs_cos",
            CovKernel::ExpQuad { .. } => "exp_quad",
            CovKernel::ExpQuadCos { .. } => "exp_quad_cos",
        }
    }

    /// Kernels carrying a periodic factor.
    pub fn is_oscillatory(&self) -> bool {
        match *self {
            CovKernel::ExpQuad { .. } => false,
            CovKernel::ExpAbsCos { alpha2, .. } | CovKernel::ExpQuadCos { alpha2, .. } => {
                alpha2 > 0.0
            }
        }
    }

    /// Parameter string used in CSV output, e.g. `3;20`.
    pub fn params_label(&self) -> String {
        match *self {
            CovKernel::ExpQuad { alpha1 } => format!("{alpha1}"),
            CovKernel::ExpAbsCos { alpha1, alpha2 } | CovKernel::ExpQuadCos { alpha1, alpha2 } => {
                format!("{alpha1};{alpha2}")
            }
        }
    }

    pub fn label(&self) -> String {
        format!("{}({})", self.family(), self.params_label().replace(';', ","))
    }

    /// Covariance at lag `tau`.
    pub fn eval(&self, tau: f64) -> f64 {
        match *self {
            CovKernel::ExpAbsCos { alpha1, alpha2 } => {
                let decay = (-alpha1 * tau.abs()).exp();
                if alpha2 == 0.0 {
                    decay
                } else {
                    decay * (alpha2 * tau).cos()
                }
            }
            CovKernel::ExpQuad { alpha1 } => (-alpha1 * tau * tau).exp(),
            CovKernel::ExpQuadCos { alpha1, alpha2 } => {
                let decay = (-alpha1 * tau * tau).exp();
                if alpha2 == 0.0 {
                    decay
                } else {
                    decay * (alpha2 * tau).cos()
                }
            }
        }
    }
}

/// Free-function form of [`CovKernel::eval`].
pub fn eval_kernel(kernel: &CovKernel, tau: f64) -> f64 {
    kernel.eval(tau)
}

/// Known basis functions of the trend model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegressionBasis {
    /// `1, t, ..., t^degree`
    Polynomial { degree: usize },
    /// Single function `exp(-theta (t - t0)^2)`.
    GaussianCurve { theta: f64, t0: f64 },
}

impl RegressionBasis {
    pub fn polynomial(degree: usize) -> Self {
        RegressionBasis::Polynomial { degree }
    }

    pub fn gaussian(theta: f64, t0: f64) -> Self {
        RegressionBasis::GaussianCurve { theta, t0 }
    }

    /// Number of unknown coefficients.
    pub fn num_params(&self) -> usize {
        match *self {
            RegressionBasis::Polynomial { degree } => degree + 1,
            RegressionBasis::GaussianCurve { .. } => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let RegressionBasis::GaussianCurve { theta, t0 } = *self {
            if !(theta.is_finite() && theta > 0.0 && t0.is_finite()) {
                return Err(Error::Config(format!(
                    "gaussian curve needs finite theta > 0 and finite t0, got theta={theta}, t0={t0}"
                )));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match *self {
            RegressionBasis::Polynomial { degree } => format!("poly{degree}"),
            RegressionBasis::GaussianCurve { theta, t0 } => format!("gauss({theta},{t0})"),
        }
    }

    /// Value of basis function `j` (0-based) at `t`.
    pub fn eval(&self, j: usize, t: f64) -> f64 {
        match *self {
            RegressionBasis::Polynomial { .. } => t.powi(j as i32),
            RegressionBasis::GaussianCurve { theta, t0 } => {
                debug_assert_eq!(j, 0);
                let d = t - t0;
                (-theta * d * d).exp()
            }
        }
    }
}

/// Strictly increasing measurement points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidGrid("grid has no points".into()));
        }
        if let Some(bad) = points.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite point {bad}")));
        }
        if let Some(w) = points.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "points must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Grid { points })
    }

    /// `n` equidistant points from `lower` to `upper` inclusive.
    pub fn equidistant(n: usize, lower: f64, upper: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGrid("grid has no points".into()));
        }
        if n == 1 {
            return Grid::new(vec![lower]);
        }
        if !(lower.is_finite() && upper.is_finite() && upper > lower) {
            return Err(Error::InvalidGrid(format!(
                "need finite lower < upper, got [{lower}, {upper}]"
            )));
        }
        let step = (upper - lower) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| lower + step * i as f64).collect();
        points[n - 1] = upper;
        Grid::new(points)
    }

    /// 16 equidistant points on `[-1, 1]`.
    pub fn default_grid() -> Self {
        Grid::equidistant(16, -1.0, 1.0).expect("default grid is valid")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

/// Options applied when assembling a covariance matrix from a kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovOptions {
    /// Added to the diagonal before the positive-definiteness check.
    pub jitter: f64,
    /// Global variance scale.
    pub variance: f64,
}

impl Default for CovOptions {
    fn default() -> Self {
        CovOptions {
            jitter: 0.0,
            variance: 1.0,
        }
    }
}

impl CovOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.jitter >= 0.0 && self.jitter <= MAX_JITTER) {
            return Err(Error::Config(format!(
                "jitter must lie in [0, {MAX_JITTER:e}], got {}",
                self.jitter
            )));
        }
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(Error::Config(format!(
                "variance must be finite and > 0, got {}",
                self.variance
            )));
        }
        Ok(())
    }
}

/// Symmetric positive-definite measurement covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    mat: DMatrix<f64>,
    grid: Option<Grid>,
}

impl CovMatrix {
    /// Validates symmetry and positive definiteness.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&mat)?;
        check_positive_definite(&mat)?;
        Ok(CovMatrix { mat, grid: None })
    }

    /// Skips validation; callers guarantee symmetry and definiteness.
    pub(crate) fn from_trusted(mat: DMatrix<f64>, grid: Option<Grid>) -> Self {
        CovMatrix { mat, grid }
    }

    pub fn with_grid(mut self, grid: Grid) -> Result<Self> {
        if grid.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: grid.len(),
            });
        }
        self.grid = Some(grid);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.mat.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mat[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    pub fn grid(&self) -> Option<&Grid> {
        self.grid.as_ref()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.mat[(i, i)]).collect()
    }

    /// `K * c`; the grid is kept.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Config(format!("scale must be finite and > 0, got {c}")));
        }
        Ok(CovMatrix {
            mat: &self.mat * c,
            grid: self.grid.clone(),
        })
    }

    /// Spectral condition number `lambda_max / lambda_min`.
    pub fn condition_estimate(&self) -> f64 {
        let eig = SymmetricEigen::new(self.mat.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

pub(crate) fn check_symmetric(mat: &DMatrix<f64>) -> Result<()> {
    if !mat.is_square() {
        return Err(Error::DimensionMismatch {
            expected: mat.nrows(),
            got: mat.ncols(),
        });
    }
    let scale = mat.amax().max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for i in 0..mat.nrows() {
        for j in 0..i {
            let diff = (mat[(i, j)] - mat[(j, i)]).abs() / scale;
            if diff.is_nan() {
                return Err(Error::NotSymmetric(f64::NAN));
            }
            worst = worst.max(diff);
        }
    }
    if worst > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(worst));
    }
    Ok(())
}

/// Cholesky pivots must all be positive.
pub(crate) fn check_positive_definite(mat: &DMatrix<f64>) -> Result<()> {
    let n = mat.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = mat[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = mat[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(())
}

/// `K[i][j] = k(t_i - t_j)`, validated symmetric positive definite.
pub fn build_cov_matrix(kernel: &CovKernel, grid: &Grid) -> Result<CovMatrix> {
    build_cov_matrix_with(kernel, grid, &CovOptions::default())
}

pub fn build_cov_matrix_with(kernel: &CovKernel, grid: &Grid, opts: &CovOptions) -> Result<CovMatrix> {
    kernel.validate()?;
    opts.validate()?;
    let t = grid.points();
    let n = t.len();
    let mut mat = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        mat[(i, i)] = opts.variance * kernel.eval(0.0) + opts.jitter;
        for j in 0..i {
            let v = opts.variance * kernel.eval(t[i] - t[j]);
            mat[(i, j)] = v;
            mat[(j, i)] = v;
        }
    }
    check_positive_definite(&mat)?;
    Ok(CovMatrix {
        mat,
        grid: Some(grid.clone()),
    })
}

/// `p x n` matrix of basis values, row `j` holding `f_j` on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    mat: DMatrix<f64>,
}

impl DesignMatrix {
    /// Rejects numerically rank-deficient input.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        let p = mat.nrows();
        let rank = numerical_rank(&mat);
        if rank < p {
            return Err(Error::RankDeficient { rank, expected: p });
        }
        Ok(DesignMatrix { mat })
    }

    /// Number of parameters.
    pub fn p(&self) -> usize {
        self.mat.nrows()
    }

    /// Number of measurements.
    pub fn n(&self) -> usize {
        self.mat.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    /// Trend values `F^T beta` at the measurement points.
    pub fn trend(&self, beta: &[f64]) -> Result<Vec<f64>> {
        if beta.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                got: beta.len(),
            });
        }
        Ok((0..self.n())
            .map(|i| (0..self.p()).map(|j| self.mat[(j, i)] * beta[j]).sum())
            .collect())
    }
}

fn numerical_rank(mat: &DMatrix<f64>) -> usize {
    if mat.nrows() == 0 || mat.ncols() == 0 {
        return 0;
    }
    let sv = mat.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    let tol = mat.nrows().max(mat.ncols()) as f64 * f64::EPSILON * max;
    sv.iter().filter(|&&s| s > tol).count()
}

pub fn build_design_matrix(basis: &RegressionBasis, grid: &Grid) -> Result<DesignMatrix> {
    basis.validate()?;
    let p = basis.num_params();
    let t = grid.points();
    if t.len() < p {
        return Err(Error::RankDeficient {
            rank: t.len(),
            expected: p,
        });
    }
    let mat = DMatrix::from_fn(p, t.len(), |j, i| basis.eval(j, t[i]));
    DesignMatrix::new(mat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_at_zero_is_one() {
        for k in [
            CovKernel::exp_quad(7.0),
            CovKernel::exp_abs_cos(1.0, 3.0),
            CovKernel::exp_quad_cos(3.0, 10.0),
        ] {
            assert_eq!(k.eval(0.0), 1.0);
        }
    }

    #[test]
    fn kernel_closed_forms() {
        let v = CovKernel::exp_abs_cos(1.0, 0.0).eval(2.0);
        assert_eq!(v, (-2.0f64).exp());
        assert!((v - 0.13534).abs() < 1e-5);

        let v = CovKernel::exp_quad_cos(3.0, 10.0).eval(0.3);
        let expect = (-0.27f64).exp() * 3.0f64.cos();
        assert!((v - expect).abs() < 1e-15);
        assert!((v - -0.755_739_971_452_126_8).abs() < 1e-15, "{v}");
    }

    #[test]
    fn zero_frequency_reduces() {
        for tau in [-1.3, -0.2, 0.0, 0.4, 2.5] {
            assert_eq!(
                CovKernel::exp_quad_cos(3.0, 0.0).eval(tau),
                CovKernel::exp_quad(3.0).eval(tau)
            );
            assert_eq!(
                CovKernel::exp_abs_cos(2.0, 0.0).eval(tau),
                (-2.0 * f64::abs(tau)).exp()
            );
        }
    }

    #[test]
    fn invalid_kernel_params() {
        assert!(CovKernel::exp_quad(0.0).validate().is_err());
        assert!(CovKernel::exp_quad(-1.0).validate().is_err());
        assert!(CovKernel::exp_abs_cos(1.0, -2.0).validate().is_err());
        assert!(CovKernel::exp_quad_cos(f64::NAN, 1.0).validate().is_err());
        assert!(CovKernel::exp_quad_cos(1.0, 0.0).validate().is_ok());
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(vec![]).is_err());
        assert!(Grid::new(vec![0.0, 0.0]).is_err());
        assert!(Grid::new(vec![1.0, 0.0]).is_err());
        assert!(Grid::new(vec![0.0, f64::INFINITY]).is_err());
        let g = Grid::equidistant(16, -1.0, 1.0).unwrap();
        assert_eq!(g.len(), 16);
        assert_eq!(g.points()[0], -1.0);
        assert_eq!(g.points()[15], 1.0);
        assert_eq!(g, Grid::default_grid());
    }

    #[test]
    fn one_point_matrix() {
        let g = Grid::new(vec![0.3]).unwrap();
        let k = build_cov_matrix(&CovKernel::exp_quad(2.0), &g).unwrap();
        assert_eq!(k.matrix().as_slice(), &[1.0]);
    }

    #[test]
    fn two_point_matrix() {
        let g = Grid::new(vec![0.0, 1.0]).unwrap();
        let k = build_cov_matrix(&CovKernel::exp_abs_cos(1.0, 0.0), &g).unwrap();
        let e = (-1.0f64).exp();
        assert_eq!(k.get(0, 0), 1.0);
        assert_eq!(k.get(1, 1), 1.0);
        assert_eq!(k.get(0, 1), e);
        assert_eq!(k.get(1, 0), e);
    }

    #[test]
    fn exp_quad_50_off_diagonal_max() {
        let k = build_cov_matrix(&CovKernel::exp_quad(50.0), &Grid::default_grid()).unwrap();
        let mut off = 0.0f64;
        for i in 0..16 {
            for j in 0..16 {
                if i != j {
                    off = off.max(k.get(i, j));
                }
            }
        }
        let expect = (-50.0 * (2.0f64 / 15.0).powi(2)).exp();
        assert!((off - expect).abs() < 1e-14);
        assert!((off - 0.4111).abs() < 1e-4);
    }

    #[test]
    fn jitter_and_variance() {
        let g = Grid::equidistant(4, 0.0, 1.0).unwrap();
        let kern = CovKernel::exp_quad(3.0);
        let base = build_cov_matrix(&kern, &g).unwrap();
        let opts = CovOptions {
            jitter: 1e-10,
            variance: 2.0,
        };
        let k = build_cov_matrix_with(&kern, &g, &opts).unwrap();
        assert_eq!(k.get(0, 0), 2.0 + 1e-10);
        assert_eq!(k.get(0, 1), 2.0 * base.get(0, 1));
        let bad = CovOptions {
            jitter: 1e-6,
            variance: 1.0,
        };
        assert!(matches!(
            build_cov_matrix_with(&kern, &g, &bad),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn cov_matrix_rejects_bad_input() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(CovMatrix::new(asym), Err(Error::NotSymmetric(_))));
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            CovMatrix::new(indef),
            Err(Error::NotPositiveDefinite { pivot: 1 })
        ));
    }

    #[test]
    fn condition_estimate_of_identity() {
        let k = CovMatrix::new(DMatrix::identity(5, 5)).unwrap();
        assert!((k.condition_estimate() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn design_matrices() {
        let g = Grid::new(vec![-1.0, 0.0, 1.0]).unwrap();
        let f = build_design_matrix(&RegressionBasis::polynomial(0), &g).unwrap();
        assert_eq!(f.matrix().as_slice(), &[1.0, 1.0, 1.0]);
        let f = build_design_matrix(&RegressionBasis::polynomial(1), &g).unwrap();
        assert_eq!(f.p(), 2);
        assert_eq!(f.matrix().row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0, 1.0]);
        assert_eq!(f.matrix().row(1).iter().copied().collect::<Vec<_>>(), vec![-1.0, 0.0, 1.0]);

        let g = Grid::new(vec![0.0, 0.5]).unwrap();
        let f = build_design_matrix(&RegressionBasis::gaussian(10.0, 0.0), &g).unwrap();
        assert_eq!(f.matrix()[(0, 0)], 1.0);
        assert_eq!(f.matrix()[(0, 1)], (-2.5f64).exp());
    }

    #[test]
    fn design_rank_deficient() {
        let g = Grid::new(vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            build_design_matrix(&RegressionBasis::polynomial(2), &g),
            Err(Error::RankDeficient { .. })
        ));
        let dup = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(
            DesignMatrix::new(dup),
            Err(Error::RankDeficient { rank: 1, expected: 2 })
        ));
    }

    #[test]
    fn kernel_serde_roundtrip() {
        let k: CovKernel = toml::from_str("family = \"exp_quad_cos\"\nalpha1 = 3.0\nalpha2 = 20.0").unwrap();
        assert_eq!(k, CovKernel::exp_quad_cos(3.0, 20.0));
        let k: CovKernel = toml::from_str("family = \"exp_abs_cos\"\nalpha1 = 1.0").unwrap();
        assert_eq!(k, CovKernel::exp_abs_cos(1.0, 0.0));
        let bad = toml::from_str::<CovKernel>("family = \"exp_quad\"\nalpha1 = 3.0\nalpha3 = 1.0");
        assert!(bad.is_err());
    }
}
