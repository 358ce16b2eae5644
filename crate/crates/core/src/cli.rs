//! Command-line front end.
//!
//! Every subcommand reads one TOML config, lets flags override it, and
//! writes plain-text outputs into `--out`. Each file starts with a
//! `# config_hash: ...` comment (all readers skip `#` lines) and the run is
//! summarized in `manifest.txt`. Errors print one line on stderr:
//! `error kind=<tag> exit=<code> message="..."`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use crate::config::RunConfig;
use crate::covmodels::{build_design_matrix, CovMatrix, Grid};
use crate::error::{Error, Result};
use crate::estimate::{estimate, WeightSpec};
use crate::io::{fmt_f64, read_factor, read_matrix, read_vector, write_banded, write_factor, write_matrix, write_vector};
use crate::markov::{banded_inverse, dma_extend, is_markov, MarkovFactor};
use crate::simulate::{
    convergence_profile, monte_carlo_validate, run_sweep, synthetic_measurements, CellSpec, SweepResult,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Tolerance of the Markov post-check printed by `approx`.
pub const APPROX_CHECK_TOL: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "markov-approx", version, about = "Discrete Markov approximation and GLS trend estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run configuration
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory (overrides `[output] dir`)
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed for every random stream of the command
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,
    /// Validate the config and inputs, compute nothing
    #[arg(long)]
    pub dry_run: bool,
    /// Print nothing on success
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Adjoint Markov matrix and its factor
    Approx {
        #[command(flatten)]
        common: CommonArgs,
        /// Connectivity (overrides `[approx] m`)
        #[arg(long)]
        m: Option<usize>,
    },
    /// Banded inverse of the adjoint matrix
    Inverse {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        m: Option<usize>,
    },
    /// Trend coefficients and their dispersion
    Estimate {
        #[command(flatten)]
        common: CommonArgs,
        /// identity | diagonal | full | markov(<m>)
        #[arg(long)]
        weight: Option<WeightSpec>,
    },
    /// Dispersion sweep over kernels, models and connectivities
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        preset: Option<String>,
    },
    /// Monte Carlo check of analytic dispersions
    Sample {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        samples: Option<usize>,
    },
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Approx { common, .. }
            | Command::Inverse { common, .. }
            | Command::Estimate { common, .. }
            | Command::Sweep { common, .. }
            | Command::Sample { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Approx { .. } => "approx",
            Command::Inverse { .. } => "inverse",
            Command::Estimate { .. } => "estimate",
            Command::Sweep { .. } => "sweep",
            Command::Sample { .. } => "sample",
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_CONFIG
    }
}

pub fn error_line(e: &Error) -> String {
    format!("error kind={} exit={} message={:?}", e.kind(), exit_code(e), e.to_string())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return EXIT_OK;
            }
            eprint!("{}", e.render());
            eprintln!("error kind=usage exit={EXIT_CONFIG} message={:?}", e.kind().to_string());
            return EXIT_CONFIG;
        }
    };
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            exit_code(&e)
        }
    }
}

/// Files produced by one command, in write order.
struct Outputs {
    dir: PathBuf,
    hash: String,
    command: &'static str,
    files: Vec<(String, String)>,
}

impl Outputs {
    fn header(&self) -> Vec<String> {
        vec![format!("config_hash: {}", self.hash)]
    }

    fn add(&mut self, name: impl Into<String>, body: &str) {
        let mut text = format!("# config_hash: {}\n", self.hash);
        text.push_str(body);
        self.files.push((name.into(), text));
    }

    /// `body` already carries its own header comments.
    fn add_raw(&mut self, name: impl Into<String>, body: String) {
        self.files.push((name.into(), body));
    }

    fn write(self) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let mut manifest = format!("config_hash,{}\ncommand,{}\n", self.hash, self.command);
        for (name, text) in &self.files {
            let path = self.dir.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&path, text)?;
            let _ = writeln!(manifest, "file,{name}");
            written.push(path);
        }
        std::fs::create_dir_all(&self.dir)?;
        let path = self.dir.join("manifest.txt");
        std::fs::write(&path, manifest)?;
        written.push(path);
        Ok(written)
    }
}

fn execute(cmd: &Command) -> Result<()> {
    let common = cmd.common();
    let mut cfg = RunConfig::load(&common.config)?;
    apply_overrides(cmd, &mut cfg);
    let out_dir = common
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut outputs = Outputs {
        dir: out_dir,
        hash: cfg.hash(),
        command: cmd.name(),
        files: Vec::new(),
    };
    let mut log = String::new();
    let run = match cmd {
        Command::Approx { .. } => cmd_approx(&cfg, common.dry_run, &mut outputs, &mut log),
        Command::Inverse { .. } => cmd_inverse(&cfg, common.dry_run, &mut outputs, &mut log),
        Command::Estimate { .. } => cmd_estimate(&cfg, common.dry_run, &mut outputs, &mut log),
        Command::Sweep { .. } => cmd_sweep(&cfg, common.dry_run, &mut outputs, &mut log),
        Command::Sample { .. } => cmd_sample(&cfg, common.dry_run, &mut outputs, &mut log),
    };
    run?;
    if common.dry_run {
        if !common.quiet {
            println!("dry-run ok: {} config_hash={}", cmd.name(), outputs.hash);
        }
        return Ok(());
    }
    let dir = outputs.dir.clone();
    let written = outputs.write()?;
    if !common.quiet {
        print!("{log}");
        println!("wrote {} files to {}", written.len(), dir.display());
    }
    Ok(())
}

fn apply_overrides(cmd: &Command, cfg: &mut RunConfig) {
    let common = cmd.common();
    if let Some(j) = common.jobs {
        cfg.jobs = Some(j);
    }
    if let Some(seed) = common.seed {
        if let Some(s) = cfg.estimate.synthetic.as_mut() {
            s.seed = Some(seed);
        }
        if let Some(s) = cfg.sample.as_mut() {
            s.seed = Some(seed);
        }
        if let Some(s) = cfg.sweep.monte_carlo.as_mut() {
            s.seed = Some(seed);
        }
    }
    match cmd {
        Command::Approx { m: Some(m), .. } => cfg.approx.m = Some(*m),
        Command::Inverse { m: Some(m), .. } => cfg.inverse.m = Some(*m),
        Command::Estimate { weight: Some(w), .. } => cfg.estimate.weight = *w,
        Command::Sweep { preset: Some(p), .. } => cfg.sweep.preset = Some(p.clone()),
        Command::Sample { samples: Some(n), .. } => {
            if let Some(s) = cfg.sample.as_mut() {
                s.samples = *n;
            }
        }
        _ => {}
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

/// Covariance from a matrix file or from kernel + grid, with its grid.
fn load_cov(cfg: &RunConfig, input: Option<&Path>) -> Result<(CovMatrix, Grid)> {
    match input {
        Some(path) => {
            let mat = read_matrix(&read_text(path)?)?;
            let grid = cfg.grid.grid_for(mat.nrows())?;
            let k = CovMatrix::new(mat)?.with_grid(grid.clone())?;
            Ok((k, grid))
        }
        None => {
            let kernel = cfg.kernel()?;
            let grid = cfg.grid.grid()?;
            cfg.grid.cov_options().validate()?;
            Ok((cfg.grid.build_cov(&kernel)?, grid))
        }
    }
}

fn require_m(m: Option<usize>, section: &str) -> Result<usize> {
    m.ok_or_else(|| Error::Config(format!("[{section}] m is required (or pass --m)")))
}

fn check_m(m: usize, n: usize) -> Result<()> {
    if m + 1 > n {
        return Err(Error::InvalidConnectivity { m, max: n - 1 });
    }
    Ok(())
}

fn max_residuals(k: &DMatrix<f64>, km: &DMatrix<f64>, m: usize) -> (f64, f64) {
    let n = k.nrows();
    let (mut inb, mut outb) = (0.0f64, 0.0f64);
    for i in 0..n {
        for j in 0..n {
            let d = (k[(i, j)] - km[(i, j)]).abs();
            if i.abs_diff(j) <= m {
                inb = inb.max(d);
            } else {
                outb = outb.max(d);
            }
        }
    }
    (inb, outb)
}

fn cmd_approx(cfg: &RunConfig, dry: bool, out: &mut Outputs, log: &mut String) -> Result<()> {
    let m = require_m(cfg.approx.m, "approx")?;
    let (k, _) = load_cov(cfg, cfg.approx.input.as_deref())?;
    check_m(m, k.n())?;
    if dry {
        return Ok(());
    }
    let factor = MarkovFactor::new(&k, m)?;
    let km = dma_extend(&k, m)?;
    let (inb, outb) = max_residuals(k.matrix(), km.matrix(), m);
    let check = is_markov(&km, m, APPROX_CHECK_TOL)?;
    let diag = format!(
        "n,{}\nm,{m}\nmax_in_band_residual,{}\nmax_out_band_residual,{}\nmarkov_violation,{}\nmarkov_check,{}\n",
        k.n(),
        fmt_f64(inb),
        fmt_f64(outb),
        fmt_f64(check.max_violation),
        if check.holds { "ok" } else { "failed" },
    );
    log.push_str(&diag);
    out.add("adjoint.csv", &write_matrix(km.matrix()));
    out.add("factor.csv", &write_factor(&factor));
    out.add("diagnostics.csv", &diag);
    Ok(())
}

fn cmd_inverse(cfg: &RunConfig, dry: bool, out: &mut Outputs, log: &mut String) -> Result<()> {
    let factor = match &cfg.inverse.factor {
        Some(path) => {
            let text = read_text(path)?;
            let f = read_factor(&text)?;
            if dry {
                return Ok(());
            }
            f
        }
        None => {
            let m = require_m(cfg.inverse.m, "inverse")?;
            let (k, _) = load_cov(cfg, cfg.inverse.input.as_deref())?;
            check_m(m, k.n())?;
            if dry {
                return Ok(());
            }
            MarkovFactor::new(&k, m)?
        }
    };
    let inv = banded_inverse(&factor)?;
    let _ = writeln!(log, "n,{}\nm,{}", inv.n(), inv.m());
    out.add("inverse.csv", &write_banded(&inv));
    Ok(())
}

fn cmd_estimate(cfg: &RunConfig, dry: bool, out: &mut Outputs, log: &mut String) -> Result<()> {
    let basis = cfg.basis()?;
    let est = &cfg.estimate;
    let (k, grid) = load_cov(cfg, est.covariance.as_deref())?;
    let design = build_design_matrix(&basis, &grid)?;
    if let WeightSpec::Markov { m } = est.weight {
        check_m(m, k.n())?;
    }
    let (z, synthetic) = match (&est.measurements, &est.synthetic) {
        (Some(_), Some(_)) => {
            return Err(Error::Config("give either measurements or synthetic, not both".into()))
        }
        (Some(path), None) => {
            let z = read_vector(&read_text(path)?)?;
            if z.len() != k.n() {
                return Err(Error::DimensionMismatch { expected: k.n(), got: z.len() });
            }
            (Some(z), false)
        }
        (None, Some(s)) => {
            if s.beta.len() != design.p() {
                return Err(Error::DimensionMismatch { expected: design.p(), got: s.beta.len() });
            }
            if s.seed.is_none() {
                return Err(Error::Config("synthetic measurements need a seed (config or --seed)".into()));
            }
            (None, true)
        }
        (None, None) => {
            return Err(Error::Config("[estimate] needs measurements or synthetic".into()));
        }
    };
    if dry {
        return Ok(());
    }
    let z = match z {
        Some(z) => z,
        None => {
            let s = est.synthetic.as_ref().expect("checked above");
            synthetic_measurements(&design, &k, &s.beta, s.seed.expect("checked above"))?
        }
    };
    let res = estimate(&design, est.weight, &k, &z)?;
    let se = res.std_errors();
    let mut body = format!("# weight: {}\n# model: {}\n# n: {}\n", res.weight, basis.label(), k.n());
    if let Some(s) = est.synthetic.as_ref() {
        let beta: Vec<String> = s.beta.iter().map(|b| fmt_f64(*b)).collect();
        let _ = writeln!(body, "# beta_true: {}", beta.join(","));
    }
    body.push_str("coef,estimate,std_error\n");
    for (i, b) in res.coefficients.iter().enumerate() {
        let _ = writeln!(body, "b{},{},{}", i + 1, fmt_f64(*b), fmt_f64(se[i]));
        let _ = writeln!(log, "b{} = {} (se {})", i + 1, fmt_f64(*b), fmt_f64(se[i]));
    }
    let _ = writeln!(log, "det D = {}, tr D = {}", fmt_f64(res.det), fmt_f64(res.trace));
    out.add("estimate.csv", &body);
    out.add("dispersion.csv", &write_matrix(&res.dispersion));
    if synthetic {
        out.add("measurements.csv", &write_vector(&z));
    }
    Ok(())
}

fn sweep_header(hash: &str, result: &SweepResult) -> Vec<String> {
    let pts: Vec<String> = result.grid.points().iter().map(|t| fmt_f64(*t)).collect();
    let ms: Vec<String> = result.m_values.iter().map(|m| m.to_string()).collect();
    vec![
        format!("config_hash: {hash}"),
        format!("grid: {}", pts.join(" ")),
        format!("m_values: {}", ms.join(" ")),
    ]
}

fn cmd_sweep(cfg: &RunConfig, dry: bool, out: &mut Outputs, log: &mut String) -> Result<()> {
    let sweep = cfg.sweep_config()?;
    if let Some(mc) = &sweep.monte_carlo {
        if mc.seed.is_none() {
            return Err(Error::Config("sweep monte_carlo needs a seed (config or --seed)".into()));
        }
    }
    if dry {
        return Ok(());
    }
    let result = run_sweep(&sweep, cfg.jobs)?;
    let header = sweep_header(&out.hash, &result);
    let profile = convergence_profile(&result, sweep.convergence_tol);
    out.add_raw("sweep.csv", result.to_csv(&header));
    out.add("table.txt", &result.render_stacked());
    out.add_raw("profile.csv", profile.to_csv(&result, &out.header()));
    for c in &result.cells {
        out.add(format!("curves/cell_{:03}.dat", c.index), &result.curve(c));
        if let Err(e) = &c.outcome {
            eprintln!(
                "warning cell={} kind={} message={:?}",
                c.index,
                e.kind(),
                e.to_string()
            );
        }
    }
    if sweep.monte_carlo.is_some() {
        let mut mc = String::new();
        let _ = writeln!(mc, "# config_hash: {}", out.hash);
        for c in &result.cells {
            let _ = writeln!(mc, "# cell {} {} {}", c.index, c.kernel.label(), c.model.label());
            match c.monte_carlo.as_ref().expect("monte carlo configured") {
                Ok(r) => mc.push_str(&r.to_csv(&[])),
                Err(e) => {
                    let _ = writeln!(mc, "# error:{}", e.kind());
                }
            }
        }
        out.add_raw("monte_carlo.csv", mc);
    }
    let _ = writeln!(log, "{} cells, m = {:?}", result.cells.len(), result.m_values);
    for (m, count) in &profile.histogram {
        let _ = writeln!(log, "least m = {m}: {count} cells");
    }
    if profile.unconverged > 0 {
        let _ = writeln!(log, "not within tol {}: {} cells", fmt_f64(profile.tol), profile.unconverged);
    }
    Ok(())
}

fn cmd_sample(cfg: &RunConfig, dry: bool, out: &mut Outputs, log: &mut String) -> Result<()> {
    let spec = cfg
        .sample
        .clone()
        .ok_or_else(|| Error::Config("a [sample] section is required".into()))?;
    if spec.seed.is_none() {
        return Err(Error::Config("[sample] needs a seed (config or --seed)".into()));
    }
    let cell = CellSpec {
        kernel: cfg.kernel()?,
        model: cfg.basis()?,
        grid: cfg.grid.clone(),
    };
    cell.grid.grid()?;
    cell.grid.cov_options().validate()?;
    if dry {
        return Ok(());
    }
    let report = monte_carlo_validate(&cell, &spec, 0)?;
    for e in &report.entries {
        let _ = writeln!(
            log,
            "{}: trace analytic {} empirical {} rel_dev {}",
            e.weight,
            fmt_f64(e.analytic.trace()),
            fmt_f64(e.empirical.trace()),
            fmt_f64(e.rel_trace_dev)
        );
    }
    out.add_raw("sample.csv", report.to_csv(&out.header()));
    Ok(())
}
