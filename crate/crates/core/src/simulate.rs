//! Dispersion sweeps over connectivity and the Monte Carlo cross-check.
//!
//! A sweep cell is one `(kernel, model)` pair on a common grid. For every
//! requested `m` the cell holds the dispersion of the estimate weighted by
//! the adjoint Markov matrix, plus the OLS and best-linear-unbiased
//! references. Cells are independent and run in parallel; results are
//! collected in config order, so output does not depend on the worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::GridSpec;
use crate::covmodels::{build_design_matrix, CovKernel, CovMatrix, DesignMatrix, Grid, RegressionBasis};
use crate::error::{Error, Result};
use crate::estimate::{blue_dispersion, dispersion, functionals, glse, Weight, WeightSpec};
use crate::io::fmt_f64;

/// Default relative tolerance on `det D` for [`convergence_profile`].
pub const DEFAULT_CONVERGENCE_TOL: f64 = 0.01;

/// Which dispersion functionals to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalSelection {
    Det,
    Trace,
    #[default]
    Both,
}

impl FunctionalSelection {
    fn det(self) -> bool {
        matches!(self, FunctionalSelection::Det | FunctionalSelection::Both)
    }

    fn trace(self) -> bool {
        matches!(self, FunctionalSelection::Trace | FunctionalSelection::Both)
    }
}

/// Seeded Monte Carlo block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// True coefficients; zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(default = "default_mc_weights")]
    pub weights: Vec<WeightSpec>,
}

fn default_mc_weights() -> Vec<WeightSpec> {
    vec![
        WeightSpec::Identity,
        WeightSpec::Full,
        WeightSpec::Markov { m: 1 },
        WeightSpec::Markov { m: 2 },
    ]
}

impl MonteCarloSpec {
    pub fn new(samples: usize, seed: u64) -> Self {
        MonteCarloSpec {
            samples,
            seed: Some(seed),
            beta: None,
            weights: default_mc_weights(),
        }
    }

    pub fn with_weights(mut self, weights: Vec<WeightSpec>) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_beta(mut self, beta: Vec<f64>) -> Self {
        self.beta = Some(beta);
        self
    }
}

/// Full description of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub kernels: Vec<CovKernel>,
    pub models: Vec<RegressionBasis>,
    #[serde(default)]
    pub grid: GridSpec,
    /// Defaults to `{0, 1, 2, 3, 4, 5, n-1}` clipped to `n-1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_values: Option<Vec<usize>>,
    #[serde(default)]
    pub functionals: FunctionalSelection,
    #[serde(default = "default_tol")]
    pub convergence_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloSpec>,
}

fn default_tol() -> f64 {
    DEFAULT_CONVERGENCE_TOL
}

impl SweepConfig {
    pub fn new(kernels: Vec<CovKernel>, models: Vec<RegressionBasis>) -> Self {
        SweepConfig {
            kernels,
            models,
            grid: GridSpec::default(),
            m_values: None,
            functionals: FunctionalSelection::Both,
            convergence_tol: DEFAULT_CONVERGENCE_TOL,
            monte_carlo: None,
        }
    }

    pub fn with_grid(mut self, grid: GridSpec) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_m_values(mut self, m: Vec<usize>) -> Self {
        self.m_values = Some(m);
        self
    }

    /// Sorted, de-duplicated connectivities for an `n`-point grid.
    pub fn resolved_m_values(&self, n: usize) -> Vec<usize> {
        let top = n.saturating_sub(1);
        let mut m = match &self.m_values {
            Some(v) => v.clone(),
            None => (0..=5).map(|m| m.min(top)).chain([top]).collect(),
        };
        m.sort_unstable();
        m.dedup();
        m
    }

    pub fn validate(&self) -> Result<Grid> {
        if self.kernels.is_empty() {
            return Err(Error::Config("sweep needs at least one kernel".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("sweep needs at least one model".into()));
        }
        for k in &self.kernels {
            k.validate()?;
        }
        for b in &self.models {
            b.validate()?;
        }
        let grid = self.grid.grid()?;
        self.grid.cov_options().validate()?;
        let top = grid.len() - 1;
        if let Some(v) = &self.m_values {
            if v.is_empty() {
                return Err(Error::Config("m_values must not be empty".into()));
            }
            if let Some(&m) = v.iter().find(|&&m| m > top) {
                return Err(Error::InvalidConnectivity { m, max: top });
            }
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::Config("convergence_tol must be > 0".into()));
        }
        if let Some(mc) = &self.monte_carlo {
            validate_mc(mc, top)?;
        }
        Ok(grid)
    }

    /// SHA-256 of the canonical serialized form.
    pub fn hash(&self) -> String {
        hash_serialized(self)
    }
}

pub(crate) fn hash_serialized<T: Serialize>(value: &T) -> String {
    let text = toml::to_string(value).expect("config types serialize to toml");
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn validate_mc(mc: &MonteCarloSpec, top: usize) -> Result<()> {
    if mc.samples < 2 {
        return Err(Error::Config("monte carlo needs at least 2 samples".into()));
    }
    if mc.weights.is_empty() {
        return Err(Error::Config("monte carlo needs at least one weight".into()));
    }
    for w in &mc.weights {
        if let WeightSpec::Markov { m } = *w {
            if m > top {
                return Err(Error::InvalidConnectivity { m, max: top });
            }
        }
    }
    Ok(())
}

/// Dispersion matrix with its functionals.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionSummary {
    pub dispersion: DMatrix<f64>,
    pub det: f64,
    pub trace: f64,
}

impl DispersionSummary {
    fn new(dispersion: DMatrix<f64>) -> Self {
        let (det, trace) = functionals(&dispersion);
        DispersionSummary { dispersion, det, trace }
    }
}

/// `det` and `trace` ratios of OLS over BLUE dispersion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyRatio {
    pub det: f64,
    pub trace: f64,
}

pub fn efficiency_ratio(d_ols: &DMatrix<f64>, d_blue: &DMatrix<f64>) -> EfficiencyRatio {
    let (det_o, tr_o) = functionals(d_ols);
    let (det_b, tr_b) = functionals(d_blue);
    EfficiencyRatio {
        det: det_o / det_b,
        trace: tr_o / tr_b,
    }
}

/// One connectivity inside a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MRecord {
    pub m: usize,
    pub outcome: std::result::Result<DispersionSummary, Error>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellData {
    pub n: usize,
    pub records: Vec<MRecord>,
    pub ols: DispersionSummary,
    pub blue: DispersionSummary,
    pub ratio: EfficiencyRatio,
}

impl CellData {
    pub fn record(&self, m: usize) -> Option<&DispersionSummary> {
        self.records
            .iter()
            .find(|r| r.m == m)
            .and_then(|r| r.outcome.as_ref().ok())
    }

    /// Smallest eigenvalue of `D - D_blue` over every computed weight,
    /// including OLS.
    pub fn min_loewner_gap(&self) -> f64 {
        self.records
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok())
            .chain(std::iter::once(&self.ols))
            .map(|s| min_eigenvalue(&(&s.dispersion - &self.blue.dispersion)))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn min_eigenvalue(mat: &DMatrix<f64>) -> f64 {
    let sym = (mat + mat.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub index: usize,
    pub kernel: CovKernel,
    pub model: RegressionBasis,
    pub outcome: std::result::Result<CellData, Error>,
    pub monte_carlo: Option<std::result::Result<MonteCarloReport, Error>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub grid: Grid,
    pub m_values: Vec<usize>,
    pub functionals: FunctionalSelection,
    pub config_hash: String,
    pub cells: Vec<SweepCell>,
}

fn run_cell(cfg: &SweepConfig, grid: &Grid, m_values: &[usize], index: usize, kernel: CovKernel, model: RegressionBasis) -> SweepCell {
    let outcome = compute_cell(cfg, grid, m_values, kernel, model);
    let monte_carlo = cfg.monte_carlo.as_ref().map(|mc| {
        let cell = CellSpec {
            kernel,
            model,
            grid: cfg.grid.clone(),
        };
        monte_carlo_validate(&cell, mc, index as u64)
    });
    SweepCell {
        index,
        kernel,
        model,
        outcome,
        monte_carlo,
    }
}

fn compute_cell(
    cfg: &SweepConfig,
    grid: &Grid,
    m_values: &[usize],
    kernel: CovKernel,
    model: RegressionBasis,
) -> Result<CellData> {
    let k = cfg.grid.build_cov(&kernel)?;
    let f = build_design_matrix(&model, grid)?;
    let ols = DispersionSummary::new(dispersion(&f, &Weight::Identity, &k)?);
    let blue = DispersionSummary::new(blue_dispersion(&f, &k)?);
    let records = m_values
        .iter()
        .map(|&m| MRecord {
            m,
            outcome: Weight::new(WeightSpec::Markov { m }, &k)
                .and_then(|w| dispersion(&f, &w, &k))
                .map(DispersionSummary::new),
        })
        .collect();
    let ratio = efficiency_ratio(&ols.dispersion, &blue.dispersion);
    Ok(CellData {
        n: k.n(),
        records,
        ols,
        blue,
        ratio,
    })
}

/// Runs every `(model, kernel)` cell; `jobs` bounds the worker count.
///
/// Configuration errors abort; numerical failures are recorded per cell
/// (or per connectivity) and never hide other results.
pub fn run_sweep(cfg: &SweepConfig, jobs: Option<usize>) -> Result<SweepResult> {
    let grid = cfg.validate()?;
    let m_values = cfg.resolved_m_values(grid.len());
    let specs: Vec<(usize, CovKernel, RegressionBasis)> = cfg
        .models
        .iter()
        .flat_map(|&b| cfg.kernels.iter().map(move |&k| (k, b)))
        .enumerate()
        .map(|(i, (k, b))| (i, k, b))
        .collect();
    let work = || -> Vec<SweepCell> {
        specs
            .par_iter()
            .map(|&(i, k, b)| run_cell(cfg, &grid, &m_values, i, k, b))
            .collect()
    };
    let cells = match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?
            .install(work),
        None => work(),
    };
    Ok(SweepResult {
        grid,
        m_values,
        functionals: cfg.functionals,
        config_hash: cfg.hash(),
        cells,
    })
}

/// Least computed `m` whose `det D` is within `tol` (relative) of BLUE.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceProfile {
    pub tol: f64,
    /// `(cell index, least m)`; `None` when no computed `m` qualifies.
    pub cells: Vec<(usize, Option<usize>)>,
    /// Count of cells per least `m`.
    pub histogram: BTreeMap<usize, usize>,
    pub unconverged: usize,
}

pub fn convergence_profile(result: &SweepResult, tol: f64) -> ConvergenceProfile {
    let mut cells = Vec::new();
    let mut histogram = BTreeMap::new();
    let mut unconverged = 0;
    for c in &result.cells {
        let hit = c.outcome.as_ref().ok().and_then(|data| {
            data.records.iter().find_map(|r| {
                let s = r.outcome.as_ref().ok()?;
                ((s.det - data.blue.det).abs() <= tol * data.blue.det.abs()).then_some(r.m)
            })
        });
        match hit {
            Some(m) => *histogram.entry(m).or_insert(0) += 1,
            None => unconverged += 1,
        }
        cells.push((c.index, hit));
    }
    ConvergenceProfile {
        tol,
        cells,
        histogram,
        unconverged,
    }
}

fn status(e: &Error) -> String {
    format!("error:{}", e.kind())
}

impl SweepResult {
    /// Long-format table, one row per cell and connectivity, plus `ols` and
    /// `blue` reference rows. `header` lines are emitted as `# ` comments.
    pub fn to_csv(&self, header: &[String]) -> String {
        let mut out = String::new();
        for h in header {
            let _ = writeln!(out, "# {h}");
        }
        out.push_str("kernel,params,model,m,det,trace,psi_ratio_det,psi_ratio_tr,status\n");
        let sel = self.functionals;
        let num = |x: f64, on: bool| if on { fmt_f64(x) } else { String::new() };
        for c in &self.cells {
            let prefix = format!("{},{},{}", c.kernel.family(), c.kernel.params_label(), c.model.label());
            match &c.outcome {
                Err(e) => {
                    let _ = writeln!(out, "{prefix},,,,,,{}", status(e));
                }
                Ok(d) => {
                    let ratios = format!("{},{}", num(d.ratio.det, sel.det()), num(d.ratio.trace, sel.trace()));
                    let mut row = |m: &str, s: &std::result::Result<DispersionSummary, Error>| {
                        let _ = match s {
                            Ok(s) => writeln!(
                                out,
                                "{prefix},{m},{},{},{ratios},ok",
                                num(s.det, sel.det()),
                                num(s.trace, sel.trace())
                            ),
                            Err(e) => writeln!(out, "{prefix},{m},,,{ratios},{}", status(e)),
                        };
                    };
                    for r in &d.records {
                        row(&r.m.to_string(), &r.outcome);
                    }
                    row("ols", &Ok(d.ols.clone()));
                    row("blue", &Ok(d.blue.clone()));
                }
            }
        }
        out
    }

    /// Two-column `m det` curve of one cell, BLUE level as a comment.
    pub fn curve(&self, cell: &SweepCell) -> String {
        let mut out = format!(
            "# {} {} on {} points\n",
            cell.kernel.label(),
            cell.model.label(),
            self.grid.len()
        );
        if let Ok(d) = &cell.outcome {
            let _ = writeln!(out, "# blue_det {}", fmt_f64(d.blue.det));
            let _ = writeln!(out, "# ols_det {}", fmt_f64(d.ols.det));
            out.push_str("m det\n");
            for r in &d.records {
                if let Ok(s) = &r.outcome {
                    let _ = writeln!(out, "{} {}", r.m, fmt_f64(s.det));
                }
            }
        }
        out
    }

    /// Human-readable layout: one block per model, one row per kernel,
    /// `det/trace` per connectivity and the OLS/BLUE ratio at the end.
    pub fn render_stacked(&self) -> String {
        let n = self.grid.len();
        let mut out = String::new();
        let mut models: Vec<RegressionBasis> = Vec::new();
        for c in &self.cells {
            if !models.contains(&c.model) {
                models.push(c.model);
            }
        }
        let cell_text = |s: &DispersionSummary, p: usize| {
            if p == 1 {
                format!("{:.4e}", s.det)
            } else {
                format!("{:.4e}/{:.4e}", s.det, s.trace)
            }
        };
        for model in models {
            let p = model.num_params();
            let _ = writeln!(out, "model {} (n = {n})", model.label());
            let mut head = format!("{:<24}", "kernel");
            for &m in &self.m_values {
                let label = if m + 1 == n { "n-1".to_string() } else { m.to_string() };
                let _ = write!(head, " | {label:>21}");
            }
            let _ = write!(head, " | {:>21}", "ols/blue");
            out.push_str(&head);
            out.push('\n');
            for c in self.cells.iter().filter(|c| c.model == model) {
                let _ = write!(out, "{:<24}", c.kernel.label());
                match &c.outcome {
                    Err(e) => {
                        let _ = write!(out, " | {}", status(e));
                    }
                    Ok(d) => {
                        for r in &d.records {
                            let txt = match &r.outcome {
                                Ok(s) => cell_text(s, p),
                                Err(e) => status(e),
                            };
                            let _ = write!(out, " | {txt:>21}");
                        }
                        let ratio = if p == 1 {
                            format!("{:.4}", d.ratio.det)
                        } else {
                            format!("{:.4}/{:.4}", d.ratio.det, d.ratio.trace)
                        };
                        let _ = write!(out, " | {ratio:>21}");
                    }
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }
}

impl ConvergenceProfile {
    pub fn to_csv(&self, result: &SweepResult, header: &[String]) -> String {
        let mut out = String::new();
        for h in header {
            let _ = writeln!(out, "# {h}");
        }
        let _ = writeln!(out, "# tol {}", fmt_f64(self.tol));
        out.push_str("kernel,params,model,least_m\n");
        for (cell, (idx, m)) in result.cells.iter().zip(&self.cells) {
            debug_assert_eq!(cell.index, *idx);
            let m = m.map(|m| m.to_string()).unwrap_or_else(|| "none".into());
            let _ = writeln!(
                out,
                "{},{},{},{m}",
                cell.kernel.family(),
                cell.kernel.params_label(),
                cell.model.label()
            );
        }
        out
    }
}

/// A single `(kernel, model, grid)` experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub kernel: CovKernel,
    pub model: RegressionBasis,
    #[serde(default)]
    pub grid: GridSpec,
}

/// Empirical against analytic dispersion for one weight.
#[derive(Debug, Clone, PartialEq)]
pub struct McEntry {
    pub weight: WeightSpec,
    pub analytic: DMatrix<f64>,
    pub blue: DMatrix<f64>,
    pub empirical: DMatrix<f64>,
    pub mean: DVector<f64>,
    /// `(mean - beta) / (sqrt(D_ii / samples))` per coefficient.
    pub bias_z: Vec<f64>,
    /// `|tr(emp) - tr(analytic)| / tr(analytic)`.
    pub rel_trace_dev: f64,
    /// Same against the BLUE dispersion.
    pub rel_trace_dev_blue: f64,
}

impl McEntry {
    pub fn max_abs_bias_z(&self) -> f64 {
        self.bias_z.iter().fold(0.0, |a, z| a.max(z.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub samples: usize,
    pub seed: u64,
    pub stream: u64,
    pub beta: Vec<f64>,
    pub entries: Vec<McEntry>,
}

/// Relative trace deviation below which the report calls two dispersions
/// consistent.
pub const MC_AGREEMENT_TOL: f64 = 0.05;

impl MonteCarloReport {
    pub fn entry(&self, weight: WeightSpec) -> Option<&McEntry> {
        self.entries.iter().find(|e| e.weight == weight)
    }

    pub fn to_csv(&self, header: &[String]) -> String {
        let mut out = String::new();
        for h in header {
            let _ = writeln!(out, "# {h}");
        }
        let _ = writeln!(out, "# samples {} seed {} stream {}", self.samples, self.seed, self.stream);
        out.push_str(
            "weight,analytic_trace,empirical_trace,rel_dev,blue_trace,rel_dev_blue,max_abs_bias_z,agrees_analytic,agrees_blue\n",
        );
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                e.weight,
                fmt_f64(e.analytic.trace()),
                fmt_f64(e.empirical.trace()),
                fmt_f64(e.rel_trace_dev),
                fmt_f64(e.blue.trace()),
                fmt_f64(e.rel_trace_dev_blue),
                fmt_f64(e.max_abs_bias_z()),
                e.rel_trace_dev <= MC_AGREEMENT_TOL,
                e.rel_trace_dev_blue <= MC_AGREEMENT_TOL,
            );
        }
        out
    }
}

/// Draws `Z = Fᵀβ + ξ`, `ξ ~ N(0, K)`, estimates `β` with each weight and
/// compares the empirical covariance of the estimates with the analytic
/// sandwich dispersion. The random stream is `(seed, stream)`, so cells run
/// in any order produce the same report.
pub fn monte_carlo_validate(cell: &CellSpec, spec: &MonteCarloSpec, stream: u64) -> Result<MonteCarloReport> {
    let seed = spec
        .seed
        .ok_or_else(|| Error::Config("monte carlo requires a seed".into()))?;
    let grid = cell.grid.grid()?;
    validate_mc(spec, grid.len() - 1)?;
    let k = cell.grid.build_cov(&cell.kernel)?;
    let f = build_design_matrix(&cell.model, &grid)?;
    let beta = match &spec.beta {
        Some(b) => b.clone(),
        None => vec![0.0; f.p()],
    };
    let trend = f.trend(&beta)?;
    let chol = k
        .matrix()
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { pivot: 0 })?;
    let lower = chol.l();
    let blue = blue_dispersion(&f, &k)?;

    let weights = spec
        .weights
        .iter()
        .map(|&w| Weight::new(w, &k))
        .collect::<Result<Vec<_>>>()?;
    let p = f.p();
    let n = grid.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut estimates: Vec<Vec<DVector<f64>>> = vec![Vec::with_capacity(spec.samples); weights.len()];
    let mut xi = DVector::<f64>::zeros(n);
    for _ in 0..spec.samples {
        for v in xi.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let noise = &lower * &xi;
        let z: Vec<f64> = trend.iter().zip(noise.iter()).map(|(t, e)| t + e).collect();
        for (w, est) in weights.iter().zip(estimates.iter_mut()) {
            est.push(glse(&f, w, &z)?);
        }
    }

    let mut entries = Vec::with_capacity(weights.len());
    for ((spec_w, w), est) in spec.weights.iter().zip(&weights).zip(&estimates) {
        let analytic = dispersion(&f, w, &k)?;
        let (mean, empirical) = sample_moments(est, p);
        let bias_z = (0..p)
            .map(|i| (mean[i] - beta[i]) / (analytic[(i, i)] / spec.samples as f64).sqrt())
            .collect();
        let tr = empirical.trace();
        entries.push(McEntry {
            weight: *spec_w,
            rel_trace_dev: (tr - analytic.trace()).abs() / analytic.trace(),
            rel_trace_dev_blue: (tr - blue.trace()).abs() / blue.trace(),
            analytic,
            blue: blue.clone(),
            empirical,
            mean,
            bias_z,
        });
    }
    Ok(MonteCarloReport {
        samples: spec.samples,
        seed,
        stream,
        beta,
        entries,
    })
}

/// One seeded draw of `Fᵀβ + ξ`, `ξ ~ N(0, K)`.
pub fn synthetic_measurements(design: &DesignMatrix, k: &CovMatrix, beta: &[f64], seed: u64) -> Result<Vec<f64>> {
    if design.n() != k.n() {
        return Err(Error::DimensionMismatch {
            expected: design.n(),
            got: k.n(),
        });
    }
    let trend = design.trend(beta)?;
    let lower = k
        .matrix()
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { pivot: 0 })?
        .l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xi = DVector::<f64>::from_fn(k.n(), |_, _| rng.sample(StandardNormal));
    let noise = lower * xi;
    Ok(trend.iter().zip(noise.iter()).map(|(t, e)| t + e).collect())
}

fn sample_moments(xs: &[DVector<f64>], p: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = xs.len() as f64;
    let mut mean = DVector::zeros(p);
    for x in xs {
        mean += x;
    }
    mean /= n;
    let mut cov = DMatrix::zeros(p, p);
    for x in xs {
        let d = x - &mean;
        cov += &d * d.transpose();
    }
    cov /= n - 1.0;
    (mean, cov)
}

/// Convenience for examples: the design matrix of a cell.
pub fn cell_design(cell: &CellSpec) -> Result<(CovMatrix, DesignMatrix)> {
    let grid = cell.grid.grid()?;
    Ok((cell.grid.build_cov(&cell.kernel)?, build_design_matrix(&cell.model, &grid)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SweepConfig {
        SweepConfig::new(
            vec![CovKernel::exp_quad(20.0), CovKernel::exp_quad_cos(10.0, 10.0)],
            vec![RegressionBasis::polynomial(0), RegressionBasis::polynomial(1)],
        )
    }

    #[test]
    fn default_m_values() {
        let c = cfg();
        assert_eq!(c.resolved_m_values(16), vec![0, 1, 2, 3, 4, 5, 15]);
        assert_eq!(c.resolved_m_values(4), vec![0, 1, 2, 3]);
        let c = c.with_m_values(vec![3, 0, 3]);
        assert_eq!(c.resolved_m_values(16), vec![0, 3]);
    }

    #[test]
    fn validation_errors() {
        let mut c = cfg();
        c.kernels.clear();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = cfg().with_m_values(vec![0, 16]);
        assert!(matches!(c.validate(), Err(Error::InvalidConnectivity { m: 16, max: 15 })));
        let c = cfg().with_m_values(vec![]);
        assert!(c.validate().is_err());
    }

    #[test]
    fn sweep_cells_in_model_major_order() {
        let r = run_sweep(&cfg(), Some(2)).unwrap();
        assert_eq!(r.cells.len(), 4);
        assert_eq!(r.cells[0].model, RegressionBasis::polynomial(0));
        assert_eq!(r.cells[1].kernel, CovKernel::exp_quad_cos(10.0, 10.0));
        assert_eq!(r.cells[2].model, RegressionBasis::polynomial(1));
        for c in &r.cells {
            let d = c.outcome.as_ref().unwrap();
            let top = d.record(15).unwrap();
            assert!((top.det - d.blue.det).abs() <= 1e-10 * d.blue.det);
            assert!(d.ratio.det >= 1.0 - 1e-9);
            assert!(d.min_loewner_gap() >= -1e-9);
        }
    }

    #[test]
    fn ratio_of_identical_is_one() {
        let d = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        assert_eq!(efficiency_ratio(&d, &d), EfficiencyRatio { det: 1.0, trace: 1.0 });
    }

    #[test]
    fn white_noise_limit() {
        let c = SweepConfig::new(vec![CovKernel::exp_quad(1e4)], vec![RegressionBasis::polynomial(1)]);
        let r = run_sweep(&c, None).unwrap();
        let d = r.cells[0].outcome.as_ref().unwrap();
        assert!((d.ratio.det - 1.0).abs() < 1e-12);
        for rec in &d.records {
            let s = rec.outcome.as_ref().unwrap();
            assert!((s.det - d.blue.det).abs() < 1e-12 * d.blue.det);
        }
    }

    #[test]
    fn failing_cell_is_isolated() {
        // 64 points make the squared-exponential windows singular at large m
        let c = SweepConfig::new(
            vec![CovKernel::exp_quad(3.0), CovKernel::exp_abs_cos(1.0, 0.0)],
            vec![RegressionBasis::polynomial(0)],
        )
        .with_grid(GridSpec::equidistant(64, -1.0, 1.0));
        let r = run_sweep(&c, None).unwrap();
        assert_eq!(r.cells.len(), 2);
        let bad = &r.cells[0];
        let failed = match &bad.outcome {
            Err(_) => true,
            Ok(d) => d.records.iter().any(|r| r.outcome.is_err()),
        };
        assert!(failed);
        let good = r.cells[1].outcome.as_ref().unwrap();
        assert!(good.records.iter().all(|r| r.outcome.is_ok()));
        let csv = r.to_csv(&[]);
        assert!(csv.contains(",error:"));
    }

    #[test]
    fn profile_for_exact_markov_kernel() {
        let c = SweepConfig::new(
            vec![CovKernel::exp_abs_cos(1.0, 0.0), CovKernel::exp_abs_cos(3.0, 0.0)],
            vec![RegressionBasis::polynomial(0), RegressionBasis::polynomial(2)],
        );
        let r = run_sweep(&c, None).unwrap();
        let prof = convergence_profile(&r, DEFAULT_CONVERGENCE_TOL);
        assert!(prof.cells.iter().all(|(_, m)| *m == Some(1)), "{prof:?}");
        assert_eq!(prof.histogram.get(&1), Some(&4));
        assert_eq!(prof.unconverged, 0);
    }

    #[test]
    fn csv_layout() {
        let r = run_sweep(&cfg(), None).unwrap();
        let csv = r.to_csv(&["config_hash: abc".into()]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("# config_hash: abc"));
        assert_eq!(
            lines.next(),
            Some("kernel,params,model,m,det,trace,psi_ratio_det,psi_ratio_tr,status")
        );
        // 4 cells x (7 m values + ols + blue)
        assert_eq!(lines.count(), 4 * 9);
        assert!(csv.contains("exp_quad_cos,10;10,poly1,blue,"));
        assert!(r.render_stacked().contains("model poly1"));
        assert!(r.curve(&r.cells[0]).contains("\nm det\n0 "));
    }

    #[test]
    fn monte_carlo_iid_mean() {
        let cell = CellSpec {
            kernel: CovKernel::exp_quad(1e4),
            model: RegressionBasis::polynomial(0),
            grid: GridSpec::default(),
        };
        let spec = MonteCarloSpec::new(4000, 7).with_weights(vec![WeightSpec::Identity]);
        let r = monte_carlo_validate(&cell, &spec, 0).unwrap();
        let e = &r.entries[0];
        assert!((e.analytic[(0, 0)] - 1.0 / 16.0).abs() < 1e-12);
        assert!(e.rel_trace_dev < 0.1, "{}", e.rel_trace_dev);
        let again = monte_carlo_validate(&cell, &spec, 0).unwrap();
        assert_eq!(r, again);
        let other = monte_carlo_validate(&cell, &spec, 1).unwrap();
        assert_ne!(r.entries[0].empirical, other.entries[0].empirical);
    }

    #[test]
    fn monte_carlo_requires_seed() {
        let cell = CellSpec {
            kernel: CovKernel::exp_quad(50.0),
            model: RegressionBasis::polynomial(0),
            grid: GridSpec::default(),
        };
        let mut spec = MonteCarloSpec::new(100, 1);
        spec.seed = None;
        assert!(matches!(monte_carlo_validate(&cell, &spec, 0), Err(Error::Config(_))));
    }
}
