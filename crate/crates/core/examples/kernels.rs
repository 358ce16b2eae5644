//! Evaluates the kernel families on a lag grid and prints the covariance
//! matrix of one of them on the default grid.

use markov_approx::{build_cov_matrix, CovKernel, Grid};

fn main() {
    let kernels = [
        CovKernel::exp_abs_cos(1.0, 0.0),
        CovKernel::exp_abs_cos(5.0, 10.0),
        CovKernel::exp_quad(10.0),
        CovKernel::exp_quad_cos(3.0, 10.0),
    ];
    print!("{:>6}", "tau");
    for k in &kernels {
        print!(" {:>20}", k.label());
    }
    println!();
    for i in 0..=10 {
        let tau = i as f64 * 0.1;
        print!("{tau:>6.2}");
        for k in &kernels {
            print!(" {:>20.6}", k.eval(tau));
        }
        println!();
    }

    let grid = Grid::equidistant(6, -1.0, 1.0).unwrap();
    let k = build_cov_matrix(&CovKernel::exp_quad_cos(3.0, 10.0), &grid).unwrap();
    println!("\nexp_quad_cos(3,10) on 6 points, condition ~ {:.3e}", k.condition_estimate());
    for i in 0..k.n() {
        let row: Vec<String> = (0..k.n()).map(|j| format!("{:>8.4}", k.get(i, j))).collect();
        println!("{}", row.join(" "));
    }
}
