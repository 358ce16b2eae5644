//! Empirical covariance of the estimates against the analytic dispersion.

use markov_approx::config::GridSpec;
use markov_approx::simulate::{monte_carlo_validate, CellSpec, MonteCarloSpec};
use markov_approx::{CovKernel, RegressionBasis, WeightSpec};

fn main() {
    let cell = CellSpec {
        kernel: CovKernel::exp_quad(10.0),
        model: RegressionBasis::polynomial(1),
        grid: GridSpec::default(),
    };
    let spec = MonteCarloSpec::new(10_000, 42).with_beta(vec![1.0, 0.5]).with_weights(vec![
        WeightSpec::Identity,
        WeightSpec::Markov { m: 1 },
        WeightSpec::Markov { m: 2 },
        WeightSpec::Full,
    ]);
    let report = monte_carlo_validate(&cell, &spec, 0).unwrap();
    println!("{} samples, seed {}", report.samples, report.seed);
    for e in &report.entries {
        println!(
            "{:<10} tr analytic {:.5e}  tr empirical {:.5e}  dev {:.3}  dev vs blue {:.3}  max |bias z| {:.2}",
            e.weight.to_string(),
            e.analytic.trace(),
            e.empirical.trace(),
            e.rel_trace_dev,
            e.rel_trace_dev_blue,
            e.max_abs_bias_z()
        );
    }
}
