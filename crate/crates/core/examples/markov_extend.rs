//! Builds the adjoint m-connected matrix of a damped-cosine covariance and
//! shows how far it departs from the original outside the band.

use markov_approx::{build_cov_matrix, dma_extend, is_markov, CovKernel, Grid, MarkovFactor};

fn main() {
    let grid = Grid::equidistant(10, -1.0, 1.0).unwrap();
    let k = build_cov_matrix(&CovKernel::exp_quad_cos(3.0, 10.0), &grid).unwrap();

    for m in 0..=4 {
        let km = dma_extend(&k, m).unwrap();
        let mut worst = 0.0f64;
        for i in 0..k.n() {
            for j in 0..k.n() {
                worst = worst.max((km.get(i, j) - k.get(i, j)).abs());
            }
        }
        let check = is_markov(&km, m, 1e-8).unwrap();
        println!(
            "m={m}: max |K^m - K| = {worst:.3e}, markov residual {:.1e}, K itself m-Markov: {}",
            check.max_violation,
            is_markov(&k, m, 1e-8).unwrap().holds
        );
    }

    let f = MarkovFactor::new(&k, 2).unwrap();
    println!("\ninnovation variances at m=2:");
    for (i, a) in f.alphas().iter().enumerate() {
        println!("  {i:>2} {a:.6}  gamma {:?}", f.gammas().get(i.wrapping_sub(1)).unwrap_or(&Vec::new()));
    }
}
