//! Discrete Markov approximation of a covariance matrix.
//!
//! A covariance `K` is replaced by the adjoint matrix `K^m`: it agrees with
//! `K` on the band `|i - j| <= m` and is extended outside the band so that
//! every measurement, given its `m` predecessors, is uncorrelated with the
//! rest of the past. The extension is determined by the regression vectors
//! `Γ_j` (coefficients of measurement `j` on its predecessor window) and the
//! innovation variances `α_j`. Together they give the unit-triangular
//! factorization `(K^m)^-1 = Lᵀ D^-1 L`, so the inverse is banded with
//! half-bandwidth `m` and is assembled in `O(n m^2)` without ever forming a
//! dense inverse.
//!
//! Indices are 0-based. `gammas[j - 1]` holds `Γ` for target row `j`
//! (`j = 1..n`), regressing on rows `j - min(j, m) .. j`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::covmodels::CovMatrix;
use crate::error::{Error, Result};

/// Reciprocal-condition cutoff for the predecessor-window solves.
pub const RCOND_CUTOFF: f64 = 1e-14;

/// Innovation variances must exceed this fraction of the diagonal entry.
pub const INNOVATION_CUTOFF: f64 = 1e-12;

/// Band matrix with entries stored for `|i - j| <= m` only.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    m: usize,
    symmetric: bool,
    // row-major, n rows of width 2m+1; column offset j - i + m
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, m: usize, symmetric: bool) -> Self {
        let m = m.min(n.saturating_sub(1));
        BandedMatrix {
            n,
            m,
            symmetric,
            data: vec![0.0; n * (2 * m + 1)],
        }
    }

    /// Keeps the in-band part of `dense`.
    pub fn from_dense(dense: &DMatrix<f64>, m: usize, symmetric: bool) -> Result<Self> {
        if !dense.is_square() {
            return Err(Error::DimensionMismatch {
                expected: dense.nrows(),
                got: dense.ncols(),
            });
        }
        let mut b = BandedMatrix::zeros(dense.nrows(), m, symmetric);
        for i in 0..b.n {
            for j in b.row_range(i) {
                let v = if symmetric && j < i { dense[(j, i)] } else { dense[(i, j)] };
                let idx = b.index(i, j);
                b.data[idx] = v;
            }
        }
        Ok(b)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Half-bandwidth.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i.abs_diff(j) <= self.m
    }

    fn index(&self, i: usize, j: usize) -> usize {
        i * (2 * self.m + 1) + (j + self.m - i)
    }

    /// Columns stored for row `i`.
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.m)..(i + self.m + 1).min(self.n)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.n && j < self.n, "index ({i}, {j}) out of bounds");
        if self.in_band(i, j) {
            self.data[self.index(i, j)]
        } else {
            0.0
        }
    }

    /// Sets an in-band entry (and its mirror when symmetric).
    ///
    /// # Panics
    ///
    /// If `(i, j)` lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside half-bandwidth {}", self.m);
        let idx = self.index(i, j);
        self.data[idx] = value;
        if self.symmetric && i != j {
            let idx = self.index(j, i);
            self.data[idx] = value;
        }
    }

    fn add(&mut self, i: usize, j: usize, value: f64) {
        let idx = self.index(i, j);
        self.data[idx] += value;
    }

    /// `A v` in `O(n m)`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: v.len(),
            });
        }
        Ok((0..self.n)
            .map(|i| self.row_range(i).map(|j| self.data[self.index(i, j)] * v[j]).sum())
            .collect())
    }

    /// `A B` for a dense `B`, computed band-wise.
    pub fn mul_dense(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if b.nrows() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: b.nrows(),
            });
        }
        let mut out = DMatrix::zeros(self.n, b.ncols());
        for c in 0..b.ncols() {
            for i in 0..self.n {
                out[(i, c)] = self
                    .row_range(i)
                    .map(|j| self.data[self.index(i, j)] * b[(j, c)])
                    .sum();
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }
}

/// Compressed representation of the adjoint matrix `K^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovFactor {
    n: usize,
    m: usize,
    gammas: Vec<Vec<f64>>,
    alphas: Vec<f64>,
    band: BandedMatrix,
}

impl MarkovFactor {
    /// Factor of `K` at connectivity `m`, reading only the band of `K`.
    pub fn new(k: &CovMatrix, m: usize) -> Result<Self> {
        let gammas = compute_gamma(k, m)?;
        let alphas = compute_alphas(k, &gammas)?;
        let band = BandedMatrix::from_dense(k.matrix(), m, true)?;
        Ok(MarkovFactor {
            n: k.n(),
            m,
            gammas,
            alphas,
            band,
        })
    }

    /// Rebuilds a factor (and its band) from `Γ` vectors and innovations.
    ///
    /// The band of `K^m` follows from `k_ij = Σ_l k_{i,w_l} Γ_j[l]` for `i`
    /// in the window `w` of row `j`, and `k_jj = α_j + Σ_l k_{j,w_l} Γ_j[l]`.
    pub fn from_parts(m: usize, gammas: Vec<Vec<f64>>, alphas: Vec<f64>) -> Result<Self> {
        let n = alphas.len();
        if n == 0 {
            return Err(Error::Parse("factor has no rows".into()));
        }
        check_connectivity(n, m)?;
        if gammas.len() != n - 1 {
            return Err(Error::DimensionMismatch {
                expected: n - 1,
                got: gammas.len(),
            });
        }
        for (idx, g) in gammas.iter().enumerate() {
            let j = idx + 1;
            if g.len() != j.min(m) {
                return Err(Error::DimensionMismatch {
                    expected: j.min(m),
                    got: g.len(),
                });
            }
        }
        for (i, &a) in alphas.iter().enumerate() {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::NonPositiveInnovation { index: i, value: a });
            }
        }
        let mut band = BandedMatrix::zeros(n, m, true);
        band.set(0, 0, alphas[0]);
        for j in 1..n {
            let g = &gammas[j - 1];
            let start = j - g.len();
            for i in start..j {
                let v: f64 = g.iter().enumerate().map(|(l, gl)| band.get(i, start + l) * gl).sum();
                band.set(i, j, v);
            }
            let pred: f64 = g.iter().enumerate().map(|(l, gl)| band.get(j, start + l) * gl).sum();
            band.set(j, j, alphas[j] + pred);
        }
        Ok(MarkovFactor {
            n,
            m,
            gammas,
            alphas,
            band,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Connectivity.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn gammas(&self) -> &[Vec<f64>] {
        &self.gammas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// In-band entries of `K` (equivalently of `K^m`).
    pub fn band(&self) -> &BandedMatrix {
        &self.band
    }

    /// Diagonal terms `μ_i = k_{i+1,i+1} - γ_{i-1}^2 γ_i^2 k_{i-1,i-1}` of the
    /// singly connected case, for inspection only (`None` unless `m == 1`).
    /// Entry 0 is `k_22`; scalars `γ_i = k_{i,i+1} / k_ii`.
    pub fn tridiagonal_mu(&self) -> Option<Vec<f64>> {
        if self.m != 1 || self.n < 2 {
            return None;
        }
        let gamma = |i: usize| self.gammas[i][0];
        let mut mu = Vec::with_capacity(self.n - 1);
        mu.push(self.band.get(1, 1));
        for i in 1..self.n - 1 {
            let g2 = gamma(i - 1) * gamma(i - 1) * gamma(i) * gamma(i);
            mu.push(self.band.get(i + 1, i + 1) - g2 * self.band.get(i - 1, i - 1));
        }
        Some(mu)
    }

    /// `(K^m)^-1 v` in `O(n m)` via `Lᵀ D^-1 L v`.
    pub fn precision_mul(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: v.len(),
            });
        }
        let mut e: Vec<f64> = v.to_vec();
        for j in 1..self.n {
            let g = &self.gammas[j - 1];
            let start = j - g.len();
            let pred: f64 = g.iter().zip(&v[start..j]).map(|(a, b)| a * b).sum();
            e[j] = v[j] - pred;
        }
        for (ej, a) in e.iter_mut().zip(&self.alphas) {
            *ej /= a;
        }
        let mut out = e.clone();
        for j in 1..self.n {
            let g = &self.gammas[j - 1];
            let start = j - g.len();
            for (l, gl) in g.iter().enumerate() {
                out[start + l] -= gl * e[j];
            }
        }
        Ok(out)
    }
}

fn check_connectivity(n: usize, m: usize) -> Result<()> {
    let max = n.saturating_sub(1);
    if m > max {
        return Err(Error::InvalidConnectivity { m, max });
    }
    Ok(())
}

/// Solves `K[w, w] x = K[w, target]` for the window `w = start..end`.
fn window_solve(
    mat: &DMatrix<f64>,
    start: usize,
    end: usize,
    target: usize,
    report_index: usize,
) -> Result<Vec<f64>> {
    let size = end - start;
    if size == 0 {
        return Ok(Vec::new());
    }
    let sub = mat.view((start, start), (size, size)).clone_owned();
    let rhs = DVector::from_fn(size, |r, _| mat[(start + r, target)]);
    let eig = SymmetricEigen::new(sub.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let rcond = if max > 0.0 { min / max } else { 0.0 };
    if !(rcond >= RCOND_CUTOFF) {
        return Err(Error::SingularSubmatrix {
            index: report_index,
            rcond,
        });
    }
    let chol = sub.cholesky().ok_or(Error::SingularSubmatrix {
        index: report_index,
        rcond,
    })?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

/// Regression vectors `Γ_j = K[w_j, w_j]^-1 K[w_j, j]` for `j = 1..n`,
/// with window `w_j = j - min(j, m) .. j`. Only band entries are read.
pub fn compute_gamma(k: &CovMatrix, m: usize) -> Result<Vec<Vec<f64>>> {
    let n = k.n();
    check_connectivity(n, m)?;
    let mat = k.matrix();
    (1..n)
        .map(|j| window_solve(mat, j - j.min(m), j, j, j - 1))
        .collect()
}

/// Innovation variances `α_0 = k_00`, `α_j = k_jj - K[j, w_j] · Γ_j`.
pub fn compute_alphas(k: &CovMatrix, gammas: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = k.n();
    if gammas.len() != n.saturating_sub(1) {
        return Err(Error::DimensionMismatch {
            expected: n.saturating_sub(1),
            got: gammas.len(),
        });
    }
    let mat = k.matrix();
    let mut alphas = Vec::with_capacity(n);
    for j in 0..n {
        let kjj = mat[(j, j)];
        let a = if j == 0 {
            kjj
        } else {
            let g = &gammas[j - 1];
            if g.len() > j {
                return Err(Error::DimensionMismatch {
                    expected: j,
                    got: g.len(),
                });
            }
            let start = j - g.len();
            kjj - g.iter().enumerate().map(|(l, gl)| mat[(j, start + l)] * gl).sum::<f64>()
        };
        if !(a > INNOVATION_CUTOFF * kjj) {
            return Err(Error::NonPositiveInnovation { index: j, value: a });
        }
        alphas.push(a);
    }
    Ok(alphas)
}

/// Adjoint matrix `K^m`: the band of `K` extended by the Markov recursion.
///
/// Entries outside the band are filled diagonal by diagonal, `d = m+1..n`,
/// with `k_ij = K^m[i, w_j] · Γ_j` for `j = i + d`; every entry read lies on
/// an earlier diagonal. In-band entries are copied bit-for-bit.
pub fn dma_extend(k: &CovMatrix, m: usize) -> Result<CovMatrix> {
    let n = k.n();
    check_connectivity(n, m)?;
    let gammas = compute_gamma(k, m)?;
    // positivity of the innovations is what makes the completion definite
    compute_alphas(k, &gammas)?;
    Ok(extend_with(k, m, &gammas))
}

fn extend_with(k: &CovMatrix, m: usize, gammas: &[Vec<f64>]) -> CovMatrix {
    let n = k.n();
    let src = k.matrix();
    let mut out = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i.saturating_sub(m)..(i + m + 1).min(n) {
            out[(i, j)] = src[(i, j)];
        }
    }
    for d in m + 1..n {
        for i in 0..n - d {
            let j = i + d;
            let g = &gammas[j - 1];
            let start = j - g.len();
            let v: f64 = g.iter().enumerate().map(|(l, gl)| out[(i, start + l)] * gl).sum();
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    CovMatrix::from_trusted(out, k.grid().cloned())
}

/// `(K^m)^-1 = Lᵀ D^-1 L`, where `L` is unit lower-triangular with `-Γ_j` to
/// the left of the diagonal in row `j` and `D = diag(α)`.
pub fn banded_inverse(factor: &MarkovFactor) -> Result<BandedMatrix> {
    let n = factor.n;
    for (i, &a) in factor.alphas.iter().enumerate() {
        if !(a > 0.0) {
            return Err(Error::NonPositiveInnovation { index: i, value: a });
        }
    }
    let mut c = BandedMatrix::zeros(n, factor.m, true);
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(factor.m + 1);
    for j in 0..n {
        row.clear();
        if j > 0 {
            let g = &factor.gammas[j - 1];
            let start = j - g.len();
            row.extend(g.iter().enumerate().map(|(l, gl)| (start + l, -gl)));
        }
        row.push((j, 1.0));
        let inv_alpha = 1.0 / factor.alphas[j];
        for (x, &(a, la)) in row.iter().enumerate() {
            for &(b, lb) in &row[..=x] {
                let v = la * lb * inv_alpha;
                c.add(a, b, v);
                if a != b {
                    c.add(b, a, v);
                }
            }
        }
    }
    Ok(c)
}

/// Outcome of [`is_markov`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovCheck {
    pub holds: bool,
    /// Largest `|k_ij - K[i, w_j] K[w_j, w_j]^-1 K[w_j, j]| / sqrt(k_ii k_jj)`
    /// over `j - i > m`.
    pub max_violation: f64,
}

/// Tests whether `K` is the covariance of an `m`-connected Markov sequence.
pub fn is_markov(k: &CovMatrix, m: usize, tol: f64) -> Result<MarkovCheck> {
    let n = k.n();
    check_connectivity(n, m)?;
    let mat = k.matrix();
    let mut worst = 0.0f64;
    for j in m + 1..n {
        let start = j - m;
        let g = window_solve(mat, start, j, j, j - 1)?;
        let scale_j = mat[(j, j)];
        for i in 0..start {
            let pred: f64 = g.iter().enumerate().map(|(l, gl)| mat[(i, start + l)] * gl).sum();
            let v = (mat[(i, j)] - pred).abs() / (mat[(i, i)] * scale_j).sqrt();
            worst = worst.max(v);
        }
    }
    Ok(MarkovCheck {
        holds: worst <= tol,
        max_violation: worst,
    })
}
