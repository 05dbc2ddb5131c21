//! The `sbp` command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical
//! failure, 3 a check failed.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{thread_cap, RunConfig};
use crate::constants::{estimate_constants, thresholds, EstimateConfig, ThresholdConstants};
use crate::error::{Error, Result};
use crate::fiber::{fiber_scan, linspace};
use crate::field::{make_grid, GridDescriptor, ModelParams, RadialField};
use crate::minimize::{ground_state_diagnostics, minimize_local_observed, multi_start, start_field};
use crate::sweep::{dyadic_grid, sweep_mass};
use crate::verify::{run_verify, VerifyConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

/// Version of the metadata record.
pub const METADATA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "sbp", version, about = "Local minimizers of the Sobolev-critical Schrödinger-Bopp-Podolsky energy")]
struct Cli {
    /// Configuration file with [model], [grid], [optimizer], [sweep] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "sbp-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    /// Use supplied K_GN instead of estimating it.
    #[arg(long = "k-gn")]
    k_gn: Option<f64>,
    /// Use supplied S instead of computing it.
    #[arg(long)]
    s: Option<f64>,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long = "r-max")]
    r_max: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate K_GN, K_H, S and print the thresholds.
    Constants {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Minimize at one mass.
    Minimize {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Mass as a fraction of c0.
        #[arg(long = "c-frac")]
        c_frac: Option<f64>,
        #[arg(long)]
        starts: Option<usize>,
        /// Write the iterate every k accepted steps (single start only).
        #[arg(long)]
        checkpoint: Option<usize>,
    },
    /// Sweep m(c) over a dyadic mass grid.
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// `dyadic:K` for the masses c0·2^{-K}, …, c0/2.
        #[arg(long = "grid")]
        masses: Option<String>,
        #[arg(long)]
        starts: Option<usize>,
        /// Record wall-clock time per mass.
        #[arg(long)]
        timing: bool,
    },
    /// Scan the fiber map of a field.
    Fiber {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long = "c-frac")]
        c_frac: Option<f64>,
        /// Field file; defaults to the first multi-start field.
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long = "t-min", default_value_t = 0.1)]
        t_min: f64,
        #[arg(long = "t-max", default_value_t = 3.0)]
        t_max: f64,
        #[arg(long, default_value_t = 59)]
        points: usize,
    },
    /// Run the property suite.
    Verify {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Serialize)]
struct Metadata<'a> {
    version: u32,
    command: &'a str,
    seed: u64,
    grid: Option<GridDescriptor>,
    config: &'a RunConfig,
    constants: &'a ThresholdConstants,
    git_describe: &'static str,
}

/// Parses `argv` and runs the subcommand; returns the exit status.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse(_) | Error::InvalidParams(_) | Error::Precondition(_) => EXIT_USAGE,
                _ => EXIT_NUMERICAL,
            }
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    Ok(cfg)
}

fn apply_model(cfg: &mut RunConfig, m: &ModelArgs) {
    if let Some(mu) = m.mu {
        cfg.model.mu = mu;
    }
    if let Some(p) = m.p {
        cfg.model.p = p;
    }
}

fn apply_grid(cfg: &mut RunConfig, g: &GridArgs) {
    if let Some(n) = g.nodes {
        cfg.grid.nodes = n;
    }
    if let Some(r) = g.r_max {
        cfg.grid.r_max = r;
    }
}

fn constants_for(cfg: &RunConfig, m: &ModelArgs) -> Result<ThresholdConstants> {
    let (mu, p) = (cfg.model.mu, cfg.model.p);
    match (m.k_gn, m.s) {
        (Some(k), Some(s)) => thresholds(mu, p, k, s),
        (None, None) => estimate_constants(mu, p, &EstimateConfig::default()),
        _ => Err(Error::InvalidParams("--k-gn and --s must be given together".into())),
    }
}

fn params_for(cfg: &RunConfig, c: f64) -> Result<ModelParams> {
    if cfg.model.relaxed {
        ModelParams::relaxed(cfg.model.mu, cfg.model.p, c)
    } else {
        ModelParams::new(cfg.model.mu, cfg.model.p, c)
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn write_metadata(
    dir: &Path,
    command: &str,
    cfg: &RunConfig,
    grid: Option<GridDescriptor>,
    consts: &ThresholdConstants,
) -> Result<()> {
    let meta = Metadata {
        version: METADATA_VERSION,
        command,
        seed: cfg.optimizer.seed,
        grid,
        config: cfg,
        constants: consts,
        git_describe: env!("SBP_GIT_DESCRIBE"),
    };
    write(dir, "metadata.json", &serde_json::to_string_pretty(&meta)?)
}

fn run(cli: Cli) -> Result<i32> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(n) = thread_cap()? {
        // A global pool can only be installed once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = cli.out;
    match cli.command {
        Command::Constants { model } => {
            apply_model(&mut cfg, &model);
            let consts = constants_for(&cfg, &model)?;
            let json = serde_json::to_string_pretty(&consts)?;
            emit(&format!("{json}\n"));
            write(&out, "constants.json", &json)?;
            write_metadata(&out, "constants", &cfg, None, &consts)?;
            Ok(if consts.h_residual.abs() <= 1e-10 { EXIT_OK } else { EXIT_CHECK })
        }
        Command::Minimize { model, grid, c_frac, starts, checkpoint } => {
            apply_model(&mut cfg, &model);
            apply_grid(&mut cfg, &grid);
            if let Some(f) = c_frac {
                cfg.model.c_fraction = f;
            }
            let consts = constants_for(&cfg, &model)?;
            let g = make_grid(cfg.grid.nodes, cfg.grid.r_max, cfg.grid.scheme)?;
            let params = params_for(&cfg, cfg.model.c_fraction * consts.c0)?;
            let n_starts = starts.unwrap_or(cfg.sweep.n_starts);
            let res = match checkpoint {
                Some(k) if k > 0 => {
                    let u0 = start_field(&g, &params, &consts, 0, 1, cfg.optimizer.seed)?;
                    let mut io_err = None;
                    let mut observer = |it: usize, u: &RadialField| {
                        if it % k == 0 && io_err.is_none() {
                            if let Err(e) = write(&out, &format!("checkpoint_{it:06}.txt"), &u.to_text()) {
                                io_err = Some(e);
                            }
                        }
                    };
                    let r = minimize_local_observed(&u0, &params, &consts, &cfg.optimizer, &mut observer)?;
                    if let Some(e) = io_err {
                        return Err(e);
                    }
                    r
                }
                _ => multi_start(&g, &params, &consts, &cfg.optimizer, n_starts)?,
            };
            let report = ground_state_diagnostics(&res, &params, &consts)?;
            write(&out, "result.json", &serde_json::to_string_pretty(&res)?)?;
            write(&out, "diagnostics.json", &serde_json::to_string_pretty(&report)?)?;
            write(&out, "field.txt", &res.field.to_text())?;
            write_metadata(&out, "minimize", &cfg, Some(g.descriptor()), &consts)?;
            emit(&format!(
                "{}: I = {:.12e}, A = {:.6e} (rho0 = {:.6e}), |Q|/scale = {:.3e}, lambda = {:.6e}\n",
                report.verdict, res.breakdown.i, res.breakdown.a, consts.rho0, report.q_relative, report.lambda
            ));
            let ok = res.converged && res.in_v && report.energy_negative;
            Ok(if ok { EXIT_OK } else { EXIT_CHECK })
        }
        Command::Sweep { model, grid, masses, starts, timing } => {
            apply_model(&mut cfg, &model);
            apply_grid(&mut cfg, &grid);
            if let Some(spec) = masses {
                cfg.sweep.points = parse_mass_grid(&spec)?;
            }
            if let Some(s) = starts {
                cfg.sweep.n_starts = s;
            }
            cfg.sweep.record_time |= timing;
            let consts = constants_for(&cfg, &model)?;
            let g = make_grid(cfg.grid.nodes, cfg.grid.r_max, cfg.grid.scheme)?;
            let base = params_for(&cfg, consts.c0 / 2.0)?;
            let report = sweep_mass(&dyadic_grid(consts.c0, cfg.sweep.points), &base, &g, &consts, &cfg.sweep_config())?;
            write(&out, "sweep.csv", &report.to_csv())?;
            write(&out, "sweep.json", &report.to_json()?)?;
            write_metadata(&out, "sweep", &cfg, Some(g.descriptor()), &consts)?;
            emit(&report.to_csv());
            Ok(if report.passed() { EXIT_OK } else { EXIT_CHECK })
        }
        Command::Fiber { model, grid, c_frac, field, t_min, t_max, points } => {
            apply_model(&mut cfg, &model);
            apply_grid(&mut cfg, &grid);
            if let Some(f) = c_frac {
                cfg.model.c_fraction = f;
            }
            let consts = constants_for(&cfg, &model)?;
            let (u, descriptor) = match field {
                Some(path) => {
                    let u = RadialField::from_text(&fs::read_to_string(path)?)?;
                    let d = u.grid().descriptor();
                    (u, d)
                }
                None => {
                    let g = make_grid(cfg.grid.nodes, cfg.grid.r_max, cfg.grid.scheme)?;
                    let params = params_for(&cfg, cfg.model.c_fraction * consts.c0)?;
                    (start_field(&g, &params, &consts, 0, 1, cfg.optimizer.seed)?, g.descriptor())
                }
            };
            let params = params_for(&cfg, crate::field::mass(&u))?;
            let scan = fiber_scan(&u, &params, &linspace(t_min, t_max, points))?;
            write(&out, "fiber.csv", &scan.to_csv())?;
            write(&out, "fiber.json", &scan.sidecar_json()?)?;
            write_metadata(&out, "fiber", &cfg, Some(descriptor), &consts)?;
            emit(&scan.to_csv());
            Ok(EXIT_OK)
        }
        Command::Verify { model, quick } => {
            apply_model(&mut cfg, &model);
            let consts = constants_for(&cfg, &model)?;
            let report = run_verify(&VerifyConfig { quick, seed: cfg.optimizer.seed }, cfg.model.mu, &consts)?;
            for c in &report.checks {
                emit(&format!("{:<20} {:?} value={:.3e} tol={:.1e}\n", c.name, c.verdict, c.value, c.tolerance));
            }
            write(&out, "verify.json", &serde_json::to_string_pretty(&report)?)?;
            write_metadata(&out, "verify", &cfg, None, &consts)?;
            Ok(if report.passed() { EXIT_OK } else { EXIT_CHECK })
        }
    }
}

/// `dyadic:K` → `K`.
fn parse_mass_grid(spec: &str) -> Result<usize> {
    let k = spec
        .strip_prefix("dyadic:")
        .ok_or_else(|| Error::Parse(format!("mass grid '{spec}' must look like dyadic:K")))?;
    let k: usize = k.parse().map_err(|_| Error::Parse(format!("bad point count in '{spec}'")))?;
    if k < 3 {
        return Err(Error::Parse("a dyadic sweep needs at least 3 points".into()));
    }
    Ok(k)
}
