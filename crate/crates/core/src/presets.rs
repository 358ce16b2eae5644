//! Named sweep configurations covering the standard kernel and trend-model
//! combinations: squared-exponential and damped-cosine noise against
//! polynomial and Gaussian-curve trends, all on 16 points.

use crate::covmodels::{CovKernel, RegressionBasis};
use crate::simulate::SweepConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub config: SweepConfig,
}

const SQEXP_COS_PAIRS: [(f64, f64); 7] = [
    (3.0, 10.0),
    (3.0, 20.0),
    (3.0, 50.0),
    (10.0, 10.0),
    (10.0, 30.0),
    (50.0, 20.0),
    (50.0, 50.0),
];

fn sqexp(alphas: &[f64]) -> Vec<CovKernel> {
    alphas.iter().map(|&a| CovKernel::exp_quad(a)).collect()
}

fn sqexp_cos(pairs: &[(f64, f64)]) -> Vec<CovKernel> {
    pairs.iter().map(|&(a, b)| CovKernel::exp_quad_cos(a, b)).collect()
}

fn expabs_cos(pairs: &[(f64, f64)]) -> Vec<CovKernel> {
    pairs.iter().map(|&(a, b)| CovKernel::exp_abs_cos(a, b)).collect()
}

fn preset(name: &'static str, description: &'static str, kernels: Vec<CovKernel>, model: RegressionBasis) -> Preset {
    Preset {
        name,
        description,
        config: SweepConfig::new(kernels, vec![model]),
    }
}

/// Every preset, in a fixed order.
pub fn all() -> Vec<Preset> {
    let poly = RegressionBasis::polynomial;
    vec![
        preset("sqexp-constant", "exp(-a t^2) noise, constant trend", sqexp(&[5.0, 20.0, 50.0]), poly(0)),
        preset("sqexp-linear", "exp(-a t^2) noise, linear trend", sqexp(&[3.0, 10.0, 50.0]), poly(1)),
        preset("sqexp-quadratic", "exp(-a t^2) noise, quadratic trend", sqexp(&[3.0, 10.0, 50.0]), poly(2)),
        preset("sqexp-cubic", "exp(-a t^2) noise, cubic trend", sqexp(&[3.0, 10.0]), poly(3)),
        preset("sqexp-cos-constant", "exp(-a t^2) cos(b t) noise, constant trend", sqexp_cos(&SQEXP_COS_PAIRS), poly(0)),
        preset("sqexp-cos-linear", "exp(-a t^2) cos(b t) noise, linear trend", sqexp_cos(&SQEXP_COS_PAIRS), poly(1)),
        preset("sqexp-cos-quadratic", "exp(-a t^2) cos(b t) noise, quadratic trend", sqexp_cos(&SQEXP_COS_PAIRS), poly(2)),
        preset(
            "sqexp-cos-gauss10",
            "exp(-a t^2) cos(b t) noise, exp(-10 t^2) trend",
            sqexp_cos(&[(3.0, 10.0), (3.0, 50.0), (10.0, 10.0), (10.0, 30.0)]),
            RegressionBasis::gaussian(10.0, 0.0),
        ),
        preset(
            "sqexp-cos-gauss1",
            "exp(-10 t^2) cos(b t) noise, exp(-t^2) trend",
            sqexp_cos(&[(10.0, 20.0), (10.0, 50.0)]),
            RegressionBasis::gaussian(1.0, 0.0),
        ),
        preset(
            "expabs-cos-gauss20",
            "exp(-a|t|) cos(b t) noise, exp(-20 t^2) trend",
            expabs_cos(&[(1.0, 10.0), (1.0, 30.0), (5.0, 10.0), (5.0, 40.0), (25.0, 20.0), (25.0, 50.0)]),
            RegressionBasis::gaussian(20.0, 0.0),
        ),
        preset(
            "expabs-cos-constant",
            "exp(-a|t|) cos(b t) noise, constant trend",
            expabs_cos(&[(1.0, 10.0), (1.0, 30.0), (5.0, 10.0), (5.0, 40.0), (25.0, 20.0)]),
            poly(0),
        ),
    ]
}

pub fn names() -> Vec<&'static str> {
    all().iter().map(|p| p.name).collect()
}

pub fn by_name(name: &str) -> Option<Preset> {
    all().into_iter().find(|p| p.name == name)
}

/// The seven squared-exponential presets with polynomial trends.
pub fn reference_study() -> Vec<Preset> {
    all().into_iter().take(7).collect()
}
