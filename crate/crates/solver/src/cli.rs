//! Command-line interface. Subcommands:
//!
//! - `check`: exact algebraic identities plus seeded randomized
//!   constraint-resolution checks for one rank.
//! - `background`: compute and write the singular background fields.
//! - `solve`: minimize at one coupling, write fields and diagnostics.
//! - `sweep`: solve an ascending coupling list with warm starts.
//!
//! Exit codes: 0 success, 1 non-convergence or failed checks (diagnostics
//! are still written when possible), 2 configuration or usage errors.
//! `CSH_THREADS` caps the worker-thread count.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cshv_core::cartan::{self, CartanData, GeneralTridiagonal};
use cshv_core::constraints::{self, SolveOptions};

use crate::config::RunConfig;
use crate::energy::{self, Params, State};
use crate::io;
use crate::minimize::{self, MinimizeOptions};
use crate::{Error, Result};

#[derive(Parser)]
#[command(
    name = "cshv",
    version,
    about = "Doubly periodic vortex condensate solver"
)]
pub struct Cli {
    /// Seed for the randomized checks; solve paths are deterministic.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Verify exact rank-data identities and randomized constraint solves.
    Check(CheckArgs),
    /// Write the singular background fields for a configuration.
    Background(RunArgs),
    /// Minimize the reduced energy at one coupling.
    Solve(RunArgs),
    /// Minimize along the configured coupling list with warm starts.
    Sweep(RunArgs),
}

#[derive(Args)]
pub struct CheckArgs {
    /// Rank to check (must be >= 2).
    #[arg(long)]
    pub n: usize,
    /// Residual tolerance for the randomized solves.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Number of randomized instances.
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
}

#[derive(Args)]
pub struct RunArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Override the configured output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the gradient tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Override the coupling with a single value.
    #[arg(long)]
    pub lambda: Option<f64>,
}

/// Entry point behind `main`; returns the process exit code.
pub fn run() -> i32 {
    if let Ok(v) = std::env::var("CSH_THREADS") {
        if let Ok(t) = v.trim().parse::<usize>() {
            if t >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
            }
        }
    }
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            classify(&e)
        }
    }
}

fn classify(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Grid(_)
        | Error::VortexOutsideDomain { .. }
        | Error::Json(_)
        | Error::Io(_) => 2,
        Error::Core(cshv_core::Error::RankOutOfRange { .. }) => 2,
        _ => 1,
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Command::Check(args) => cmd_check(&args, cli.seed),
        Command::Background(args) => cmd_background(&args),
        Command::Solve(args) => cmd_solve(&args),
        Command::Sweep(args) => cmd_sweep(&args),
    }
}

fn cmd_check(args: &CheckArgs, seed: u64) -> Result<i32> {
    // Constructors verify the exact identities internally and fail loudly.
    let cartan = CartanData::new(args.n)?;
    println!(
        "check n={}: exact identities ok (alpha0 = {})",
        args.n,
        io::fmt_float(cartan.alpha0())
    );
    let (sup, sub) = cartan::su_couplings(args.n);
    let general = GeneralTridiagonal::new(&sup, &sub)?;
    let nn = general.n();
    let mut worst_row = 0.0f64;
    for i in 0..nn {
        let s: f64 = (0..nn).map(|j| general.khat_inverse()[i * nn + j]).sum();
        worst_row = worst_row.max((s - 1.0).abs());
    }
    println!("check n={}: symmetrizable tridiagonal data ok (row-sum defect {:.2e})", args.n, worst_row);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = 256usize;
    let mut max_res = 0.0f64;
    let mut bound_failures = 0usize;
    for _ in 0..args.samples {
        // Random zero-mean samples stand in for field values on a grid.
        let mut mk = |amp: f64| -> Vec<f64> {
            let mut v: Vec<f64> = (0..len).map(|_| rng.random_range(-amp..amp)).collect();
            let m = v.iter().sum::<f64>() / len as f64;
            for x in &mut v {
                *x -= m;
            }
            v
        };
        let u0: Vec<Vec<f64>> = (0..args.n).map(|_| mk(0.8)).collect();
        let w: Vec<Vec<f64>> = (0..args.n).map(|_| mk(0.5)).collect();
        let u0r: Vec<&[f64]> = u0.iter().map(|v| v.as_slice()).collect();
        let wr: Vec<&[f64]> = w.iter().map(|v| v.as_slice()).collect();
        let weights = constraints::compute_weights(&u0r, &wr, 1.0)?;
        let b: Vec<f64> = (0..args.n)
            .map(|i| 4.0 * std::f64::consts::PI * (1 + i % 2) as f64)
            .collect();
        // Pick the coupling 30% above the admissibility threshold.
        let lambda = 1.3
            * (0..args.n)
                .map(|i| {
                    4.0 * args.n as f64 * b[i] * weights.adiag()[i]
                        / (weights.a()[i] * weights.a()[i])
                })
                .fold(0.0, f64::max);
        let sol = constraints::solve_constants(&weights, &b, lambda, &SolveOptions::default())?;
        for r in &sol.residuals {
            max_res = max_res.max(r.abs());
        }
        if !constraints::verify_translation_bounds(&weights, &sol).ok {
            bound_failures += 1;
        }
    }
    println!(
        "check n={}: {} randomized constraint resolutions ok (max residual {:.2e})",
        args.n, args.samples, max_res
    );
    if max_res > args.tol || bound_failures > 0 {
        eprintln!(
            "check n={}: FAILED (max residual {max_res:.2e}, translation-bound failures {bound_failures})",
            args.n
        );
        return Ok(1);
    }
    Ok(0)
}

struct LoadedRun {
    cfg: RunConfig,
    out_dir: PathBuf,
    lambdas: Vec<f64>,
    opts: MinimizeOptions,
}

fn load_run(args: &RunArgs) -> Result<LoadedRun> {
    let mut cfg = RunConfig::from_path(&args.config)?;
    if let Some(tol) = args.tol {
        if !(tol > 0.0) {
            return Err(Error::Config(format!("--tol must be positive, got {tol}")));
        }
        cfg.solver.tol = tol;
    }
    if let Some(lambda) = args.lambda {
        if !(lambda > 0.0) {
            return Err(Error::Config(format!("--lambda must be positive, got {lambda}")));
        }
        cfg.lambda = crate::config::LambdaSpec::Scalar(lambda);
    }
    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));

    // The coupling lower bound needs only the rank data and vortex counts.
    let cartan = CartanData::new(cfg.n)?;
    let totals = cfg.to_vortices()?.totals();
    let lambda0 = cartan.lambda_lower_bound(&totals, cfg.domain.l1 * cfg.domain.l2)?;
    let lambdas = cfg.resolve_lambdas(lambda0);
    for &l in &lambdas {
        if l <= lambda0 {
            eprintln!(
                "warning: lambda = {} is at or below the necessary existence threshold lambda0 = {}",
                l, lambda0
            );
        }
    }
    let opts = MinimizeOptions {
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        ..MinimizeOptions::default()
    };
    Ok(LoadedRun {
        cfg,
        out_dir,
        lambdas,
        opts,
    })
}

fn echo_resolved(run: &LoadedRun, params: &Params) -> Result<()> {
    std::fs::create_dir_all(&run.out_dir)?;
    let resolved = run.cfg.resolved(&run.lambdas);
    let text = serde_json::to_string_pretty(&resolved)?;
    std::fs::write(run.out_dir.join("config_resolved.json"), text + "\n")?;
    println!(
        "n={} grid={}x{} domain={}x{} lambda0={} lambdas={:?} out={}",
        run.cfg.n,
        run.cfg.grid.n1,
        run.cfg.grid.n2,
        run.cfg.domain.l1,
        run.cfg.domain.l2,
        params.lambda0(),
        run.lambdas,
        run.out_dir.display()
    );
    Ok(())
}

fn write_fields(
    dir: &Path,
    formats: &[String],
    params: &Params,
    state: Option<&State>,
) -> Result<()> {
    let grid = params.grid();
    let write = |name: &str, f: &crate::torus::Field| -> Result<()> {
        for fmt in formats {
            match fmt.as_str() {
                "csv" => io::write_field_csv(&dir.join(format!("{name}.csv")), grid, f)?,
                "bin" => io::write_field_bin(&dir.join(format!("{name}.bin")), f)?,
                _ => unreachable!("formats validated at load"),
            }
        }
        Ok(())
    };
    for (i, u0) in params.background_fields().iter().enumerate() {
        write(&format!("u0_{}", i + 1), u0)?;
    }
    if let Some(state) = state {
        let u = energy::exp_fields(params, state)?;
        for i in 0..params.n() {
            let mut v = state.w[i].clone();
            for x in v.values_mut() {
                *x += state.c[i];
            }
            write(&format!("v_{}", i + 1), &v)?;
            write(&format!("U_{}", i + 1), &u[i])?;
        }
    }
    Ok(())
}

fn cmd_background(args: &RunArgs) -> Result<i32> {
    let run = load_run(args)?;
    let params = Params::new(
        run.cfg.n,
        run.cfg.to_grid()?,
        run.cfg.to_vortices()?,
        run.lambdas[0],
        run.cfg.solver.dealias,
    )?;
    echo_resolved(&run, &params)?;
    write_fields(&run.out_dir, &run.cfg.output.formats, &params, None)?;
    println!(
        "background written: {} components, vortex totals {:?}, limit threshold {}",
        params.n(),
        params.vortices().totals(),
        io::fmt_float(params.limit_threshold())
    );
    Ok(0)
}

fn cmd_solve(args: &RunArgs) -> Result<i32> {
    let run = load_run(args)?;
    if run.lambdas.len() != 1 {
        return Err(Error::Config(
            "solve expects a single coupling; use sweep for lists".to_string(),
        ));
    }
    let params = Params::new(
        run.cfg.n,
        run.cfg.to_grid()?,
        run.cfg.to_vortices()?,
        run.lambdas[0],
        run.cfg.solver.dealias,
    )?;
    echo_resolved(&run, &params)?;

    let w0 = minimize::initial_guess(&params, run.cfg.init_mode()?)?;
    let (state, report) = minimize::minimize(&params, &w0, &run.opts)?;
    write_fields(&run.out_dir, &run.cfg.output.formats, &params, Some(&state))?;
    io::write_diagnostics_json(
        &run.out_dir.join("diagnostics.json"),
        &report.diagnostics,
        Some(&report),
    )?;
    println!(
        "solve lambda={}: converged={} iterations={} J={} grad_norm={} ({:.2}s)",
        io::fmt_float(params.lambda()),
        report.converged,
        report.iterations,
        io::fmt_float(report.j),
        io::fmt_float(report.grad_norm),
        report.wall_time
    );
    if let Some(f) = &report.failure {
        eprintln!("solve did not converge: {f}");
    }
    Ok(if report.converged { 0 } else { 1 })
}

fn cmd_sweep(args: &RunArgs) -> Result<i32> {
    let run = load_run(args)?;
    let params = Params::new(
        run.cfg.n,
        run.cfg.to_grid()?,
        run.cfg.to_vortices()?,
        run.lambdas[0],
        run.cfg.solver.dealias,
    )?;
    echo_resolved(&run, &params)?;

    let rows = minimize::lambda_sweep(&params, &run.lambdas, run.cfg.init_mode()?, &run.opts)?;
    io::write_sweep_csv(&run.out_dir.join("sweep.csv"), &rows, params.n())?;
    let mut all_ok = true;
    let mut last_converged: Option<(&State, f64)> = None;
    for (k, row) in rows.iter().enumerate() {
        match &row.outcome {
            Ok((state, report)) => {
                io::write_diagnostics_json(
                    &run.out_dir.join(format!("row_{k}_diagnostics.json")),
                    &report.diagnostics,
                    Some(report),
                )?;
                println!(
                    "sweep row {k}: lambda={} converged={} J={} grad_norm={}",
                    io::fmt_float(row.lambda),
                    report.converged,
                    io::fmt_float(report.j),
                    io::fmt_float(report.grad_norm)
                );
                if report.converged {
                    last_converged = Some((state, row.lambda));
                } else {
                    all_ok = false;
                }
            }
            Err(e) => {
                println!("sweep row {k}: lambda={} failed: {e}", io::fmt_float(row.lambda));
                all_ok = false;
            }
        }
    }
    if let Some((state, lambda)) = last_converged {
        let p = params.with_lambda(lambda)?;
        write_fields(&run.out_dir, &run.cfg.output.formats, &p, Some(state))?;
    }
    Ok(if all_ok { 0 } else { 1 })
}
