use markov_approx::{build_cov_matrix, build_cov_matrix_with, eval_kernel, CovKernel, CovOptions, Grid};
use proptest::prelude::*;

fn any_kernel() -> impl Strategy<Value = CovKernel> {
    prop_oneof![
        (0.01f64..50.0, 0.0f64..50.0).prop_map(|(a, b)| CovKernel::exp_abs_cos(a, b)),
        (0.01f64..50.0).prop_map(CovKernel::exp_quad),
        (0.01f64..50.0, 0.0f64..50.0).prop_map(|(a, b)| CovKernel::exp_quad_cos(a, b)),
    ]
}

proptest! {
    #[test]
    fn kernels_are_even(k in any_kernel(), tau in -10.0f64..10.0) {
        prop_assert_eq!(eval_kernel(&k, tau), eval_kernel(&k, -tau));
        prop_assert_eq!(eval_kernel(&k, 0.0), 1.0);
    }

    #[test]
    fn matrices_are_pd_with_jitter(k in any_kernel(), n in 1usize..=32) {
        // squared-exponential families need the maximal jitter at large n
        let opts = CovOptions { jitter: 1e-10, variance: 1.0 };
        let g = Grid::equidistant(n, -1.0, 1.0).unwrap();
        let m = build_cov_matrix_with(&k, &g, &opts);
        prop_assert!(m.is_ok(), "{:?}", m.err());
    }

    #[test]
    fn exponential_reduction(a in 0.01f64..50.0, pts in prop::collection::btree_set(-500i32..500, 1..16)) {
        let g = Grid::new(pts.iter().map(|&p| p as f64 / 250.0).collect()).unwrap();
        let m = build_cov_matrix(&CovKernel::exp_abs_cos(a, 0.0), &g).unwrap();
        let t = g.points();
        for i in 0..t.len() {
            for j in 0..t.len() {
                let want = (-a * (t[i] - t[j]).abs()).exp();
                prop_assert!((m.get(i, j) - want).abs() <= 1e-15);
            }
        }
    }
}
