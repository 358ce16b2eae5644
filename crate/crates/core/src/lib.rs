//! Discrete Markov approximation of measurement covariances and fast
//! generalized least-squares trend estimation.
//!
//! The pipeline: build `K` from a [`CovKernel`] on a [`Grid`], approximate it
//! by the adjoint `m`-connected Markov matrix with [`dma_extend`] (or keep
//! only its compressed [`MarkovFactor`]), and use the banded inverse from
//! [`banded_inverse`] as the GLS weight. [`simulate`] sweeps the connectivity
//! and compares the resulting dispersion with OLS and the best linear
//! unbiased estimate.

pub mod cli;
pub mod config;
pub mod covmodels;
pub mod error;
pub mod estimate;
pub mod io;
pub mod markov;
pub mod presets;
pub mod simulate;

pub use covmodels::{
    build_cov_matrix, build_cov_matrix_with, build_design_matrix, eval_kernel, CovKernel, CovMatrix,
    CovOptions, DesignMatrix, Grid, RegressionBasis,
};
pub use error::{Error, Result};
pub use estimate::{
    blue_dispersion, dispersion, estimate, functionals, glse, EstimateResult, Weight, WeightSpec,
};
pub use markov::{
    banded_inverse, compute_alphas, compute_gamma, dma_extend, is_markov, BandedMatrix, MarkovCheck,
    MarkovFactor,
};
