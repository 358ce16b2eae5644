//! Banded inverse from the factor, compared with a dense inverse of the
//! adjoint matrix, and the O(nm) precision product.

use markov_approx::{banded_inverse, build_cov_matrix, dma_extend, CovKernel, Grid, MarkovFactor};

fn main() {
    let n = 12;
    let m = 2;
    let grid = Grid::equidistant(n, -1.0, 1.0).unwrap();
    let k = build_cov_matrix(&CovKernel::exp_abs_cos(1.0, 10.0), &grid).unwrap();
    let factor = MarkovFactor::new(&k, m).unwrap();
    let c = banded_inverse(&factor).unwrap();

    let dense = dma_extend(&k, m).unwrap().matrix().clone().try_inverse().unwrap();
    let diff = (c.to_dense() - &dense).amax();
    println!("n={n} m={m}: max |C - inv(K^m)| = {diff:.2e}");

    for i in 0..n {
        let row: Vec<String> = (0..n)
            .map(|j| if c.in_band(i, j) { format!("{:>8.2}", c.get(i, j)) } else { format!("{:>8}", ".") })
            .collect();
        println!("{}", row.join(""));
    }

    let v: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
    let fast = factor.precision_mul(&v).unwrap();
    let slow = c.mul_vec(&v).unwrap();
    let err = fast.iter().zip(&slow).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    println!("precision_mul vs banded product: {err:.2e}");
}
