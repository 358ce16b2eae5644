use markov_approx::{
    banded_inverse, build_cov_matrix, compute_alphas, compute_gamma, dma_extend, is_markov, CovKernel, CovMatrix,
    Grid, MarkovFactor,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn dense_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().lu().try_inverse().expect("invertible")
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn cov(kernel: CovKernel, n: usize) -> CovMatrix {
    build_cov_matrix(&kernel, &Grid::equidistant(n, -1.0, 1.0).unwrap()).unwrap()
}

/// Unit-lower `L` and diagonal `D` with `A = L D Lᵀ`, plain loops.
fn ldlt(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::identity(n, n);
    let mut d = vec![0.0; n];
    for j in 0..n {
        let mut s = a[(j, j)];
        for k in 0..j {
            s -= l[(j, k)] * l[(j, k)] * d[k];
        }
        d[j] = s;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)] * d[k];
            }
            l[(i, j)] = s / d[j];
        }
    }
    (l, d)
}

#[test]
fn gamma_matches_explicit_two_by_two_solve() {
    let k = cov(CovKernel::exp_abs_cos(1.0, 0.0), 4);
    let g = compute_gamma(&k, 2).unwrap();
    // Γ for the fourth point (index 3) regresses on points 1 and 2
    let (a, b, c) = (k.get(1, 1), k.get(1, 2), k.get(2, 2));
    let (r1, r2) = (k.get(1, 3), k.get(2, 3));
    let det = a * c - b * b;
    let x = [(c * r1 - b * r2) / det, (a * r2 - b * r1) / det];
    assert_eq!(g[2].len(), 2);
    for (u, v) in g[2].iter().zip(x) {
        assert!((u - v).abs() < 1e-13, "{u} vs {v}");
    }
    // exact Markov kernel: only the nearest predecessor matters
    assert!(g[2][0].abs() < 1e-12);
}

#[test]
fn two_point_closed_forms() {
    let rho = 0.3;
    let k = CovMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0])).unwrap();
    let g = compute_gamma(&k, 1).unwrap();
    assert_eq!(g, vec![vec![rho]]);
    let a = compute_alphas(&k, &g).unwrap();
    assert_eq!(a[0], 1.0);
    assert!((a[1] - (1.0 - rho * rho)).abs() < 1e-15);
    let c = banded_inverse(&MarkovFactor::new(&k, 1).unwrap()).unwrap();
    let s = 1.0 / (1.0 - rho * rho);
    let want = [[s, -rho * s], [-rho * s, s]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((c.get(i, j) - want[i][j]).abs() < 1e-14);
        }
    }
}

#[test]
fn alphas_equal_ldlt_diagonal_of_extension() {
    let k = cov(CovKernel::exp_quad_cos(3.0, 10.0), 5);
    let g = compute_gamma(&k, 2).unwrap();
    let a = compute_alphas(&k, &g).unwrap();
    let km = dma_extend(&k, 2).unwrap();
    let (_, d) = ldlt(km.matrix());
    for (x, y) in a.iter().zip(&d) {
        assert!((x - y).abs() < 1e-12 * y.abs().max(1.0), "{x} vs {y}");
    }
}

#[test]
fn three_by_three_triangle_fill() {
    let k = CovMatrix::new(DMatrix::from_row_slice(
        3,
        3,
        &[2.0, 0.6, 0.1, 0.6, 1.5, 0.4, 0.1, 0.4, 1.0],
    ))
    .unwrap();
    let km = dma_extend(&k, 1).unwrap();
    let want = 0.6 * 0.4 / 1.5;
    assert!((km.get(0, 2) - want).abs() < 1e-15);
    assert_eq!(km.get(2, 0), km.get(0, 2));
}

#[test]
fn banded_inverse_against_dense_inverse() {
    let k = cov(CovKernel::exp_abs_cos(1.0, 10.0), 8);
    let km = dma_extend(&k, 3).unwrap();
    let dense = dense_inverse(km.matrix());
    let c = banded_inverse(&MarkovFactor::new(&k, 3).unwrap()).unwrap();
    for i in 0..8 {
        for j in 0..8 {
            let scale = dense[(i, i)].abs().max(1.0);
            assert!((c.get(i, j) - dense[(i, j)]).abs() < 1e-10 * scale, "({i},{j})");
            if i.abs_diff(j) > 3 {
                assert!(dense[(i, j)].abs() < 1e-10 * scale, "dense ({i},{j}) = {}", dense[(i, j)]);
            }
        }
    }
}

#[test]
fn zero_connectivity_inverse_is_reciprocal_diagonal() {
    let k = cov(CovKernel::exp_quad(5.0), 6).scaled(2.5).unwrap();
    let c = banded_inverse(&MarkovFactor::new(&k, 0).unwrap()).unwrap();
    for i in 0..6 {
        assert_eq!(c.get(i, i), 1.0 / k.get(i, i));
    }
}

#[test]
fn squared_exponential_is_not_markov() {
    let k = cov(CovKernel::exp_quad(3.0), 8);
    let r = is_markov(&k, 1, 1e-6).unwrap();
    assert!(!r.holds);
    assert!(r.max_violation > 1e-3);
}

fn random_pd(n: usize, seed: &[f64]) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |i, j| seed[(i * n + j) % seed.len()] * (1.0 + ((i + 2 * j) % 5) as f64 * 0.1));
    &b * b.transpose() / n as f64 + DMatrix::identity(n, n)
}

fn kernel_strategy() -> impl Strategy<Value = CovKernel> {
    prop_oneof![
        (0.2f64..30.0, 0.0f64..30.0).prop_map(|(a, b)| CovKernel::exp_abs_cos(a, b)),
        (8.0f64..50.0).prop_map(CovKernel::exp_quad),
        (8.0f64..50.0, 0.0f64..30.0).prop_map(|(a, b)| CovKernel::exp_quad_cos(a, b)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn band_is_copied_bit_exactly(n in 2usize..14, m_frac in 0.0f64..1.0,
                                  vals in prop::collection::vec(-1.0f64..1.0, 16..64)) {
        let k = CovMatrix::new(random_pd(n, &vals)).unwrap();
        let m = ((n - 1) as f64 * m_frac) as usize;
        let km = dma_extend(&k, m).unwrap();
        for i in 0..n {
            for j in 0..n {
                if i.abs_diff(j) <= m {
                    prop_assert_eq!(km.get(i, j).to_bits(), k.get(i, j).to_bits());
                }
            }
        }
        prop_assert!(is_markov(&km, m, 1e-8).unwrap().holds);
    }

    #[test]
    fn gammas_nest_across_connectivity(n in 3usize..14, m in 0usize..6,
                                       vals in prop::collection::vec(-1.0f64..1.0, 16..64)) {
        let k = CovMatrix::new(random_pd(n, &vals)).unwrap();
        let m = m.min(n - 2);
        let small = compute_gamma(&k, m).unwrap();
        let big = compute_gamma(&k, m + 1).unwrap();
        // targets whose window is not truncated by m coincide
        for j in 1..=m.min(n - 1) {
            prop_assert_eq!(&small[j - 1], &big[j - 1]);
        }
    }

    #[test]
    fn out_of_band_entries_are_ignored(n in 3usize..14, m in 0usize..4,
                                       vals in prop::collection::vec(-1.0f64..1.0, 16..64),
                                       noise in prop::collection::vec(-0.05f64..0.05, 64)) {
        let m = m.min(n - 2);
        let base = random_pd(n, &vals);
        let mut pert = base.clone();
        for i in 0..n {
            for j in i + m + 1..n {
                let d = noise[(i * n + j) % noise.len()];
                pert[(i, j)] += d;
                pert[(j, i)] += d;
            }
        }
        let k1 = CovMatrix::new(base).unwrap();
        let k2 = CovMatrix::new(pert).unwrap();
        prop_assert_eq!(dma_extend(&k1, m).unwrap().into_matrix(), dma_extend(&k2, m).unwrap().into_matrix());
        let c1 = banded_inverse(&MarkovFactor::new(&k1, m).unwrap()).unwrap();
        let c2 = banded_inverse(&MarkovFactor::new(&k2, m).unwrap()).unwrap();
        prop_assert_eq!(c1.to_dense(), c2.to_dense());
    }

    #[test]
    fn first_order_extension_is_a_product(kernel in kernel_strategy(), n in 3usize..16) {
        let k = cov(kernel, n);
        let km = dma_extend(&k, 1).unwrap();
        for i in 0..n {
            let mut prod = 1.0;
            for j in i + 1..n {
                prod *= k.get(j - 1, j) / k.get(j - 1, j - 1);
                let want = prod * k.get(i, i);
                prop_assert!((km.get(i, j) - want).abs() <= 1e-12 * k.get(i, i),
                    "({}, {}): {} vs {}", i, j, km.get(i, j), want);
            }
        }
    }

    #[test]
    fn banded_inverse_round_trip(kernel in kernel_strategy(), n in 2usize..24, m in 0usize..6) {
        let m = m.min(n - 1);
        let k = cov(kernel, n);
        let Ok(f) = MarkovFactor::new(&k, m) else { return Ok(()); };
        let km = dma_extend(&k, m).unwrap();
        let c = banded_inverse(&f).unwrap();
        let resid = c.mul_dense(km.matrix()).unwrap() - DMatrix::identity(n, n);
        prop_assert!(max_abs(&resid) <= 1e-8, "residual {}", max_abs(&resid));
        let dense = dense_inverse(km.matrix());
        let dmax = (0..n).map(|i| dense[(i, i)]).fold(0.0, f64::max);
        for i in 0..n {
            for j in 0..n {
                if i.abs_diff(j) > m {
                    prop_assert!(dense[(i, j)].abs() <= 1e-8 * dmax);
                }
            }
        }
    }

    #[test]
    fn exponential_kernel_has_triangle_property(a in 0.1f64..20.0,
                                                pts in prop::collection::btree_set(-1000i32..1000, 2..20)) {
        let grid = Grid::new(pts.iter().map(|&p| p as f64 / 500.0).collect()).unwrap();
        let k = build_cov_matrix(&CovKernel::exp_abs_cos(a, 0.0), &grid).unwrap();
        let r = is_markov(&k, 1, 1e-10).unwrap();
        prop_assert!(r.holds, "violation {}", r.max_violation);
    }
}
