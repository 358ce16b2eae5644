//! Fits a linear trend to one synthetic record with each weight choice.

use markov_approx::simulate::synthetic_measurements;
use markov_approx::{build_cov_matrix, build_design_matrix, estimate, CovKernel, Grid, RegressionBasis, WeightSpec};

fn main() {
    let grid = Grid::equidistant(16, -1.0, 1.0).unwrap();
    let k = build_cov_matrix(&CovKernel::exp_abs_cos(1.0, 10.0), &grid).unwrap();
    let f = build_design_matrix(&RegressionBasis::polynomial(1), &grid).unwrap();
    let beta = [1.0, 0.5];
    let z = synthetic_measurements(&f, &k, &beta, 7).unwrap();

    println!("true beta {beta:?}");
    for w in ["ols", "wls", "markov(1)", "markov(2)", "markov(3)", "blue"] {
        let spec: WeightSpec = w.parse().unwrap();
        let r = estimate(&f, spec, &k, &z).unwrap();
        let se = r.std_errors();
        println!(
            "{:<10} b = ({:+.4}, {:+.4})  se = ({:.4}, {:.4})  det D = {:.4e}",
            spec.to_string(),
            r.coefficients[0],
            r.coefficients[1],
            se[0],
            se[1],
            r.det
        );
    }
}
