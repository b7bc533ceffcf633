//! Command-line driver: solve one profile, continue a family in σ, analyze
//! profiles into parameter tables, and fit the near-critical models.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gdnls::analysis::{analyze, richardson};
use gdnls::continuation::{
    bootstrap_sigma2, continue_family, resample, soliton_phase_guess, ContinuationPlan,
};
use gdnls::fitting::{
    fit_log_corrected, fit_power_law, render_sweep_table, FitResult, LOG_CORRECTED_INIT,
};
use gdnls::io::{
    atomic_write, read_profile, write_profile, ParameterTable, ProfileMeta, TableRow,
};
use gdnls::newton::{newton_solve, SolverConfig};
use gdnls::profile::{GridSpec, ProfileState};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "gdnls", version, about = "Self-similar blow-up profiles of gDNLS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the profile problem at one value of sigma.
    Solve(SolveArgs),
    /// Continue the family over a decreasing sigma sequence.
    #[command(name = "continue")]
    Continue(ContinueArgs),
    /// Compute derived quantities of solved profiles.
    Analyze(AnalyzeArgs),
    /// Fit the near-critical models to parameter tables.
    Fit(FitArgs),
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    sigma: f64,
    /// Mesh intervals N (N+1 nodes on [0, x_max]).
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 25.0)]
    xmax: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Scaling parameter of the soliton-phase initial guess.
    #[arg(long)]
    a0: Option<f64>,
    /// Translation parameter of the soliton-phase initial guess.
    #[arg(long)]
    b0: Option<f64>,
    /// Start from an existing profile file instead of an ansatz.
    #[arg(long, conflicts_with_all = ["a0", "b0"])]
    guess: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ContinueArgs {
    #[arg(long = "sigma-from")]
    sigma_from: f64,
    #[arg(long = "sigma-to")]
    sigma_to: f64,
    #[arg(long, default_value_t = 0.2)]
    dsigma0: f64,
    #[arg(long = "dsigma-min", default_value_t = 0.00078125)]
    dsigma_min: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 25.0)]
    xmax: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
    /// Converged profile to start from (defaults to the sigma = 2 bootstrap,
    /// or to the last profile already present in --out-dir when resuming).
    #[arg(long)]
    start: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, conflicts_with = "table_dir")]
    profile: Option<PathBuf>,
    /// Analyze every profile in a continuation directory into a table.
    #[arg(long = "table-dir")]
    table_dir: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// One table, or a coarse and a fine table to Richardson-extrapolate.
    #[arg(long, num_args = 1..=2, required = true)]
    tables: Vec<PathBuf>,
    #[arg(long, value_parser = ["power", "logcorrected"])]
    model: String,
    #[arg(long, value_parser = ["a_over_eps", "sqrt_eps"])]
    target: String,
    /// Upper window bounds; one fit row is emitted per value.
    #[arg(long = "sigma-max-sweep", value_delimiter = ',', num_args = 1..)]
    sigma_max_sweep: Vec<f64>,
    /// Lower window bound (defaults to the smallest sigma in the data).
    #[arg(long = "sigma-min")]
    sigma_min: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Solve(args) => cmd_solve(args),
        Command::Continue(args) => cmd_continue(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Fit(args) => cmd_fit(args),
    }
}

fn solver_config(tol: f64) -> SolverConfig {
    SolverConfig {
        tol,
        ..Default::default()
    }
}

/// Load a profile as an initial state for `grid`, resampling when the
/// resolutions differ.
fn load_guess(path: &Path, grid: &GridSpec) -> Result<ProfileState> {
    let (state, file_grid, _) = read_profile(path)?;
    if file_grid == *grid {
        return Ok(state);
    }
    eprintln!(
        "note: resampling guess from N = {} to N = {} by cubic interpolation",
        file_grid.n(),
        grid.n()
    );
    Ok(resample(&state, &file_grid, grid)?)
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let grid = GridSpec::new(args.n, args.xmax)?;
    let config = solver_config(args.tol);
    let mut initial = match (&args.guess, args.a0, args.b0) {
        (Some(path), _, _) => load_guess(path, &grid)?,
        (None, Some(a0), Some(b0)) => soliton_phase_guess(&grid, args.sigma, a0, b0)?,
        _ => bail!("provide either --guess FILE or both --a0 and --b0"),
    };
    initial.sigma = args.sigma;
    match newton_solve(&initial, &grid, &config) {
        Ok(out) => {
            let meta = ProfileMeta {
                tol: args.tol,
                iterations: out.iterations,
                residual: out.final_residual,
            };
            write_profile(&args.out, &out.state, &grid, &meta)?;
            println!(
                "converged: sigma = {}, a = {:.12e}, b = {:.12e}, iterations = {}, residual = {:.3e}, |v0-g0| = {:.3e}",
                out.state.sigma,
                out.state.a,
                out.state.b,
                out.iterations,
                out.final_residual,
                out.v0_g0_gap
            );
            println!("wrote {}", args.out.display());
            Ok(())
        }
        Err(e) => {
            if let Some(best) = e.best_iterate() {
                let failed = failed_path(&args.out);
                let meta = ProfileMeta {
                    tol: args.tol,
                    iterations: best.iterations,
                    residual: best.final_residual,
                };
                write_profile(&failed, &best.state, &grid, &meta)?;
                eprintln!("wrote best iterate to {}", failed.display());
            }
            Err(anyhow!(e).context("newton did not converge"))
        }
    }
}

fn failed_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".failed");
    PathBuf::from(name)
}

fn profile_filename(sigma: f64) -> String {
    format!("profile_sigma_{sigma:.9}.txt")
}

/// σ values of the profiles already present in a continuation directory,
/// sorted decreasing.
fn existing_sigmas(dir: &Path) -> Result<Vec<f64>> {
    let mut sigmas = Vec::new();
    if dir.is_dir() {
        for entry in std::fs::read_dir(dir)? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(rest) = name
                .strip_prefix("profile_sigma_")
                .and_then(|r| r.strip_suffix(".txt"))
            {
                if let Ok(v) = rest.parse::<f64>() {
                    sigmas.push(v);
                }
            }
        }
    }
    sigmas.sort_by(|p, q| q.total_cmp(p));
    Ok(sigmas)
}

fn cmd_continue(args: ContinueArgs) -> Result<()> {
    let grid = GridSpec::new(args.n, args.xmax)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let mut plan = ContinuationPlan::new(grid, args.sigma_from, args.sigma_to);
    plan.dsigma0 = args.dsigma0;
    plan.dsigma_min = args.dsigma_min;
    plan.solver = solver_config(args.tol);

    // resume from the last converged profile when the directory has one;
    // sigma values come from the table (17 significant digits), the 9-digit
    // filenames only locate the files
    let existing = existing_sigmas(&args.out_dir)?;
    let mut rows: Vec<TableRow> = Vec::new();
    let start_state = if let Some(&last_by_name) = existing.last() {
        let table_path = args.out_dir.join("table.csv");
        if table_path.exists() {
            rows = ParameterTable::read(&table_path)?.rows;
        }
        let path = args.out_dir.join(profile_filename(last_by_name));
        eprintln!("resuming from {}", path.display());
        let (state, file_grid, _) = read_profile(&path)?;
        plan.sigma_start = state.sigma;
        rows.retain(|r| r.sigma >= state.sigma - 1e-12);
        if rows.len() >= 2 {
            plan.dsigma0 = rows[rows.len() - 2].sigma - rows[rows.len() - 1].sigma;
        } else if existing.len() >= 2 {
            plan.dsigma0 = existing[existing.len() - 2] - last_by_name;
        }
        if file_grid == grid {
            state
        } else {
            resample(&state, &file_grid, &grid)?
        }
    } else if let Some(start) = &args.start {
        let mut state = load_guess(start, &grid)?;
        state.sigma = args.sigma_from;
        state
    } else {
        if (args.sigma_from - 2.0).abs() > 1e-12 {
            bail!("without --start, --sigma-from must be 2 (the bootstrap runs at sigma = 2)");
        }
        eprintln!("bootstrapping at sigma = 2 on a coarse mesh");
        let coarse = GridSpec::new(10_000.min(args.n), args.xmax)?;
        let boot = bootstrap_sigma2(&coarse, &plan.solver)?;
        eprintln!(
            "bootstrap converged: a = {:.8}, b = {:.8}",
            boot.state.a, boot.state.b
        );
        if coarse == grid {
            boot.state
        } else {
            resample(&boot.state, &coarse, &grid)?
        }
    };

    let table_path = args.out_dir.join("table.csv");
    let known: Vec<f64> = rows.iter().map(|r| r.sigma).collect();
    let rows_cell = std::cell::RefCell::new(rows);
    let record = continue_family(&plan, &start_state, |state, out| {
        let io_err = |e: gdnls::io::IoError| std::io::Error::other(e.to_string());
        let path = args.out_dir.join(profile_filename(state.sigma));
        // on resume, the starting profile is already on disk; keep its header
        if !path.exists() {
            let meta = ProfileMeta {
                tol: args.tol,
                iterations: out.iterations,
                residual: out.final_residual,
            };
            write_profile(&path, state, &grid, &meta).map_err(io_err)?;
        }
        if !known.iter().any(|s| (s - state.sigma).abs() < 1e-12) {
            let report =
                analyze(state, &grid).map_err(|e| std::io::Error::other(e.to_string()))?;
            let mut rows = rows_cell.borrow_mut();
            rows.push(report.table_row());
            rows.sort_by(|p, q| q.sigma.total_cmp(&p.sigma));
            let table = ParameterTable { rows: rows.clone() };
            table.write(&table_path).map_err(io_err)?;
        }
        println!(
            "sigma = {:.9}  a = {:.10e}  b = {:.10e}  ({} its, residual {:.2e})",
            state.sigma, state.a, state.b, out.iterations, out.final_residual
        );
        Ok(())
    });

    match record {
        Ok(record) => {
            if record.truncated {
                eprintln!(
                    "warning: step size underflowed below {} before reaching sigma = {}; partial family kept",
                    plan.dsigma_min, args.sigma_to
                );
            }
            println!(
                "{} profiles in {}",
                record.entries.len(),
                args.out_dir.display()
            );
            Ok(())
        }
        Err(gdnls::continuation::ContinuationError::NonFinite { sigma, state }) => {
            let dump = args
                .out_dir
                .join(format!("{}.failed", profile_filename(sigma)));
            let meta = ProfileMeta {
                tol: args.tol,
                iterations: 0,
                residual: f64::NAN,
            };
            write_profile(&dump, &state, &grid, &meta)?;
            bail!(
                "non-finite iterate at sigma = {sigma}; state dumped to {}",
                dump.display()
            )
        }
        Err(e) => Err(anyhow!(e).context("continuation failed")),
    }
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    match (&args.profile, &args.table_dir) {
        (Some(path), None) => {
            let (state, grid, _) = read_profile(path)?;
            let report = analyze(&state, &grid)?;
            atomic_write(&args.out, &report.render())?;
            println!("wrote {}", args.out.display());
            Ok(())
        }
        (None, Some(dir)) => {
            let sigmas = existing_sigmas(dir)?;
            if sigmas.is_empty() {
                bail!("no profile files in {}", dir.display());
            }
            let paths: Vec<PathBuf> = sigmas
                .iter()
                .map(|&s| dir.join(profile_filename(s)))
                .collect();
            let threads: usize = std::env::var("GDNLS_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
                .filter(|&t| t >= 1)
                .unwrap_or(1);
            let mut rows: Vec<Option<TableRow>> = vec![None; paths.len()];
            let chunk = paths.len().div_ceil(threads);
            std::thread::scope(|scope| -> Result<()> {
                let mut handles = Vec::new();
                for (slot, chunk_paths) in rows.chunks_mut(chunk).zip(paths.chunks(chunk)) {
                    handles.push(scope.spawn(move || -> Result<()> {
                        for (dst, path) in slot.iter_mut().zip(chunk_paths) {
                            let (state, grid, _) = read_profile(path)?;
                            let report = analyze(&state, &grid)?;
                            *dst = Some(report.table_row());
                        }
                        Ok(())
                    }));
                }
                for h in handles {
                    h.join().map_err(|_| anyhow!("analysis thread panicked"))??;
                }
                Ok(())
            })?;
            let table = ParameterTable {
                rows: rows.into_iter().map(|r| r.unwrap()).collect(),
            };
            table.write(&args.out)?;
            println!("wrote {} ({} rows)", args.out.display(), table.rows.len());
            Ok(())
        }
        _ => bail!("provide exactly one of --profile or --table-dir"),
    }
}

fn fit_target(table: &ParameterTable, target: &str, window: (f64, f64)) -> Result<Vec<(f64, f64)>> {
    table
        .rows
        .iter()
        .filter(|r| r.sigma >= window.0 && r.sigma <= window.1)
        .map(|r| {
            let y = match target {
                "a_over_eps" => r.a / r.epsilon,
                _ => {
                    if r.epsilon <= 0.0 {
                        bail!(
                            "row sigma = {} has epsilon <= 0; restrict the window",
                            r.sigma
                        );
                    }
                    r.epsilon.sqrt()
                }
            };
            Ok((r.sigma, y))
        })
        .collect()
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let first = ParameterTable::read(&args.tables[0])
        .with_context(|| format!("reading {}", args.tables[0].display()))?;
    let table = if args.tables.len() == 2 {
        let second = ParameterTable::read(&args.tables[1])?;
        let (coarse, fine) = if first.rows[0].n <= second.rows[0].n {
            (first, second)
        } else {
            (second, first)
        };
        println!(
            "richardson extrapolation from N = {} and N = {}",
            coarse.rows[0].n, fine.rows[0].n
        );
        richardson(&coarse, &fine)?
    } else {
        first
    };

    let sigma_lo = args.sigma_min.unwrap_or_else(|| {
        table
            .rows
            .iter()
            .map(|r| r.sigma)
            .fold(f64::INFINITY, f64::min)
    });
    let mut sweep = args.sigma_max_sweep.clone();
    sweep.sort_by(f64::total_cmp);
    let mut rows: Vec<(f64, FitResult)> = Vec::new();
    for &sigma_max in &sweep {
        let window = (sigma_lo, sigma_max);
        let pts = fit_target(&table, &args.target, window)?;
        let fit: FitResult = match args.model.as_str() {
            "power" => fit_power_law(&pts, window)?,
            _ => fit_log_corrected(&pts, window, LOG_CORRECTED_INIT)?,
        };
        match fit.c1 {
            None => println!(
                "sigma_max = {sigma_max}: alpha = {:.6}, C = {:.6} (rms {:.2e}, {} pts)",
                fit.exponent, fit.c0, fit.residual_norm, fit.n_points
            ),
            Some(c1) => println!(
                "sigma_max = {sigma_max}: alpha = {:.6}, C0 = {:.6}, C1 = {:.6} (rms {:.2e}, {} pts)",
                fit.exponent, fit.c0, c1, fit.residual_norm, fit.n_points
            ),
        }
        rows.push((sigma_max, fit));
    }
    atomic_write(&args.out, &render_sweep_table(&rows))?;
    println!("wrote {}", args.out.display());
    Ok(())
}
