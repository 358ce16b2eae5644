//! Structured configuration shared by the library sweeps and the CLI.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::covmodels::{build_cov_matrix_with, CovKernel, CovMatrix, CovOptions, Grid, RegressionBasis};
use crate::error::{Error, Result};
use crate::estimate::WeightSpec;
use crate::presets;
use crate::simulate::{hash_serialized, FunctionalSelection, MonteCarloSpec, SweepConfig, DEFAULT_CONVERGENCE_TOL};

/// Only schema version understood by this release.
pub const CONFIG_VERSION: u32 = 1;

/// Measurement points plus matrix assembly options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default = "default_lower")]
    pub lower: f64,
    #[serde(default = "default_upper")]
    pub upper: f64,
    /// Explicit points; overrides `lower`/`upper`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<f64>>,
    #[serde(default)]
    pub jitter: f64,
    #[serde(default = "default_variance")]
    pub variance: f64,
}

fn default_lower() -> f64 {
    -1.0
}

fn default_upper() -> f64 {
    1.0
}

fn default_variance() -> f64 {
    1.0
}

/// Number of points when neither `n` nor `points` is given.
pub const DEFAULT_N: usize = 16;

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n: None,
            lower: default_lower(),
            upper: default_upper(),
            points: None,
            jitter: 0.0,
            variance: default_variance(),
        }
    }
}

impl GridSpec {
    pub fn equidistant(n: usize, lower: f64, upper: f64) -> Self {
        GridSpec {
            n: Some(n),
            lower,
            upper,
            ..GridSpec::default()
        }
    }

    pub fn explicit(points: Vec<f64>) -> Self {
        GridSpec {
            points: Some(points),
            ..GridSpec::default()
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        match &self.points {
            Some(p) => {
                if let Some(n) = self.n {
                    if n != p.len() {
                        return Err(Error::Config(format!(
                            "grid.n = {n} disagrees with {} explicit points",
                            p.len()
                        )));
                    }
                }
                Grid::new(p.clone())
            }
            None => Grid::equidistant(self.n.unwrap_or(DEFAULT_N), self.lower, self.upper),
        }
    }

    /// Grid for an externally supplied `n x n` matrix: an unsized spec
    /// takes `n` points, an explicit one must agree.
    pub fn grid_for(&self, n: usize) -> Result<Grid> {
        if self.n.is_none() && self.points.is_none() {
            return Grid::equidistant(n, self.lower, self.upper);
        }
        let g = self.grid()?;
        if g.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: g.len() });
        }
        Ok(g)
    }

    pub fn cov_options(&self) -> CovOptions {
        CovOptions {
            jitter: self.jitter,
            variance: self.variance,
        }
    }

    pub fn build_cov(&self, kernel: &CovKernel) -> Result<CovMatrix> {
        build_cov_matrix_with(kernel, &self.grid()?, &self.cov_options())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Covariance matrix file used instead of kernel + grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Factor file; when absent the factor is computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
}

/// Seeded synthetic measurements `Fᵀβ + ξ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub beta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    #[serde(default = "default_weight")]
    pub weight: WeightSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurements: Option<PathBuf>,
    /// Covariance matrix file used instead of kernel + grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
}

fn default_weight() -> WeightSpec {
    WeightSpec::Full
}

impl Default for EstimateSection {
    fn default() -> Self {
        EstimateSection {
            weight: default_weight(),
            measurements: None,
            covariance: None,
            synthetic: None,
        }
    }
}

/// Sweep settings; a `preset` supplies kernels and models that are not
/// listed explicitly.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernels: Option<Vec<CovKernel>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models: Option<Vec<RegressionBasis>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_values: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functionals: Option<FunctionalSelection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

/// Top-level configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<CovKernel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<RegressionBasis>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub approx: ApproxSection,
    #[serde(default)]
    pub inverse: InverseSection,
    #[serde(default)]
    pub estimate: EstimateSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<MonteCarloSpec>,
    #[serde(default)]
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            jobs: None,
            kernel: None,
            basis: None,
            grid: GridSpec::default(),
            approx: ApproxSection::default(),
            inverse: InverseSection::default(),
            estimate: EstimateSection::default(),
            sweep: SweepSection::default(),
            sample: None,
            output: OutputSection::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = RunConfig::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.approx.input);
        resolve(base, &mut self.inverse.factor);
        resolve(base, &mut self.inverse.input);
        resolve(base, &mut self.estimate.measurements);
        resolve(base, &mut self.estimate.covariance);
        resolve(base, &mut self.output.dir);
    }

    pub fn kernel(&self) -> Result<CovKernel> {
        let k = self
            .kernel
            .ok_or_else(|| Error::Config("a [kernel] section is required".into()))?;
        k.validate()?;
        Ok(k)
    }

    pub fn basis(&self) -> Result<RegressionBasis> {
        let b = self
            .basis
            .ok_or_else(|| Error::Config("a [basis] section is required".into()))?;
        b.validate()?;
        Ok(b)
    }

    /// Sweep description with preset and top-level grid folded in.
    pub fn sweep_config(&self) -> Result<SweepConfig> {
        let s = &self.sweep;
        let base = match &s.preset {
            Some(name) => presets::by_name(name)
                .ok_or_else(|| {
                    Error::Config(format!(
                        "unknown preset {name:?}; known: {}",
                        presets::names().join(", ")
                    ))
                })?
                .config,
            None => SweepConfig::new(Vec::new(), Vec::new()),
        };
        let kernels = match (&s.kernels, self.kernel) {
            (Some(k), _) => k.clone(),
            (None, Some(k)) if s.preset.is_none() => vec![k],
            _ => base.kernels,
        };
        let models = match (&s.models, self.basis) {
            (Some(m), _) => m.clone(),
            (None, Some(b)) if s.preset.is_none() => vec![b],
            _ => base.models,
        };
        let cfg = SweepConfig {
            kernels,
            models,
            grid: self.grid.clone(),
            m_values: s.m_values.clone(),
            functionals: s.functionals.unwrap_or_default(),
            convergence_tol: s.convergence_tol.unwrap_or(DEFAULT_CONVERGENCE_TOL),
            monte_carlo: s.monte_carlo.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical form, ignoring the worker count and the
    /// output directory (neither changes results).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.jobs = None;
        c.output.dir = None;
        hash_serialized(&c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let c = RunConfig::parse("version = 1").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.grid.grid().unwrap(), Grid::default_grid());
    }

    #[test]
    fn version_is_mandatory_and_checked() {
        assert!(RunConfig::parse("").is_err());
        assert!(RunConfig::parse("version = 2").is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("version = 1\nbogus = 3").is_err());
        assert!(RunConfig::parse("version = 1\n[grid]\nsize = 3").is_err());
        assert!(RunConfig::parse("version = 1\n[sweep]\nkernel = []").is_err());
    }

    #[test]
    fn full_config_parses() {
        let text = r#"
version = 1
jobs = 2

[kernel]
family = "exp_quad_cos"
alpha1 = 3.0
alpha2 = 20.0

[basis]
kind = "polynomial"
degree = 1

[grid]
n = 16
lower = -1.0
upper = 1.0

[approx]
m = 2

[estimate]
weight = "markov(2)"
synthetic = { beta = [1.0, 0.5], seed = 9 }

[sweep]
preset = "sqexp-linear"
m_values = [0, 1, 2, 15]

[sample]
samples = 1000
seed = 4
weights = ["full", "markov(2)"]

[output]
dir = "out"
"#;
        let mut c = RunConfig::parse(text).unwrap();
        assert_eq!(c.estimate.weight, WeightSpec::Markov { m: 2 });
        assert_eq!(c.sample.as_ref().unwrap().weights.len(), 2);
        let s = c.sweep_config().unwrap();
        assert_eq!(s.kernels.len(), 3);
        assert_eq!(s.models, vec![RegressionBasis::polynomial(1)]);

        c.resolve_paths(Path::new("/tmp/x"));
        assert_eq!(c.output.dir.as_deref(), Some(Path::new("/tmp/x/out")));

        // hashing ignores jobs and output dir but nothing else
        let h = c.hash();
        let mut d = c.clone();
        d.jobs = Some(8);
        d.output.dir = None;
        assert_eq!(h, d.hash());
        d.grid.n = Some(17);
        assert_ne!(h, d.hash());
    }

    #[test]
    fn sweep_from_single_kernel() {
        let text = "version = 1\n[kernel]\nfamily = \"exp_quad\"\nalpha1 = 5.0\n[basis]\nkind = \"polynomial\"\ndegree = 0\n";
        let s = RunConfig::parse(text).unwrap().sweep_config().unwrap();
        assert_eq!(s.kernels, vec![CovKernel::exp_quad(5.0)]);
        assert!(RunConfig::parse("version = 1\n[sweep]\npreset = \"nope\"")
            .unwrap()
            .sweep_config()
            .is_err());
    }

    #[test]
    fn explicit_grid_points() {
        let g = GridSpec::explicit(vec![0.0, 0.1, 0.5]);
        assert_eq!(g.grid().unwrap().len(), 3);
        let bad = GridSpec {
            n: Some(4),
            ..g
        };
        assert!(bad.grid().is_err());
    }
}
