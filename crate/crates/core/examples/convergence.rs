//! Smallest connectivity whose det D is within tolerance of the optimum,
//! per cell of the standard squared-exponential study.

use std::collections::BTreeMap;

use markov_approx::presets;
use markov_approx::simulate::{convergence_profile, run_sweep};

fn main() {
    let tol = 0.01;
    let mut total: BTreeMap<String, usize> = BTreeMap::new();
    for p in presets::reference_study() {
        let cfg = p.config.with_m_values((0..=15).collect());
        let result = run_sweep(&cfg, None).unwrap();
        let profile = convergence_profile(&result, tol);
        println!("{}", p.name);
        for (cell, (_, m)) in result.cells.iter().zip(&profile.cells) {
            let m = m.map(|m| m.to_string()).unwrap_or_else(|| "-".into());
            println!("  {:<22} least m = {m}", cell.kernel.label());
            *total.entry(m).or_default() += 1;
        }
    }
    println!("\ncells per least m (tol {tol}): {total:?}");
}
