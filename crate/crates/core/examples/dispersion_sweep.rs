//! Runs a preset sweep and prints the stacked det/trace table.
//!
//!     cargo run --example dispersion_sweep -- sqexp-cos-linear

use markov_approx::presets;
use markov_approx::simulate::run_sweep;

fn main() {
    let name = std::env::args().nth(1).unwrap_or_else(|| "sqexp-constant".into());
    let Some(preset) = presets::by_name(&name) else {
        eprintln!("unknown preset {name}; try one of: {}", presets::names().join(", "));
        std::process::exit(2);
    };
    println!("{}: {}\n", preset.name, preset.description);
    let result = run_sweep(&preset.config, None).unwrap();
    print!("{}", result.render_stacked());
}
