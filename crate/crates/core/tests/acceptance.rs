//! Acceptance suite: one line per criterion, nonzero exit on any failure.
//!
//! Run with `cargo test --release --test acceptance`.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use sbp_core::cli::run_cli;
use sbp_core::constants::{estimate_constants, h_c, kgn_estimate, sobolev_constant, thresholds, EstimateConfig};
use sbp_core::field::{make_grid, GridScheme, ModelParams};
use sbp_core::fiber::{fiber_scan, linspace};
use sbp_core::minimize::{multi_start, MinimizeConfig};
use sbp_core::sweep::{dyadic_grid, sweep_mass, SweepConfig, Verdict};
use sbp_core::verify::{corpus_suite, fd_suite, oracle_comparison, oracle_test_fields};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn timed(budget: Duration, f: impl FnOnce() -> Result<Outcome, String>) -> Outcome {
    let t = Instant::now();
    let out = f().unwrap_or_else(|e| outcome(false, format!("error: {e}")));
    let elapsed = t.elapsed();
    let within = elapsed <= budget;
    outcome(
        out.pass && within,
        format!("{} [{:.1} s, budget {} s{}]", out.detail, elapsed.as_secs_f64(), budget.as_secs(), if within { "" } else { ", exceeded" }),
    )
}

fn threshold_identity() -> Result<Outcome, String> {
    let s = sobolev_constant();
    let cfg = EstimateConfig::default();
    let mut worst_residual = 0.0f64;
    let mut min_barrier = f64::INFINITY;
    for p in [2.2, 2.5, 2.6] {
        let k_gn = kgn_estimate(p, &cfg).map_err(|e| e.to_string())?.value;
        for mu in [1.0, 5.0] {
            let consts = thresholds(mu, p, k_gn, s).map_err(|e| e.to_string())?;
            let h0 = consts.rho0.sqrt();
            let at_c0 = h_c(h0, consts.c0, &consts);
            let scale = 0.5 * consts.rho0;
            worst_residual = worst_residual.max((at_c0 / scale).abs()).max(consts.h_residual.abs());
            for k in 1..=10 {
                let c = consts.c0 * k as f64 / 11.0;
                min_barrier = min_barrier.min(h_c(h0, c, &consts));
            }
        }
    }
    Ok(outcome(
        worst_residual <= 1e-10 && min_barrier > 0.0,
        format!("max |h_c0(√ρ0)|/scale = {worst_residual:.2e}, min h_c(√ρ0) over c < c0 = {min_barrier:.3e}"),
    ))
}

fn oracle_equivalence() -> Result<Outcome, String> {
    let grid = make_grid(2048, 40.0, GridScheme::Graded).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut worst_name = String::new();
    let fields = oracle_test_fields(&grid).map_err(|e| e.to_string())?;
    for u in &fields {
        for o in oracle_comparison(u, 40, 8.0).map_err(|e| e.to_string())? {
            if o.relative > worst {
                worst = o.relative;
                worst_name = o.quantity;
            }
        }
    }
    Ok(outcome(worst <= 2e-3, format!("{} fields at n=40, worst relative {worst:.2e} ({worst_name})", fields.len())))
}

fn fd_consistency() -> Result<Outcome, String> {
    let grid = make_grid(2048, 40.0, GridScheme::Graded).map_err(|e| e.to_string())?;
    let s = fd_suite(&grid, 20, 1).map_err(|e| e.to_string())?;
    let worst = s.gradient.max(s.pohozaev).max(s.path);
    Ok(outcome(
        worst <= 1e-5,
        format!("gradient {:.2e}, Q vs dΦ/dt {:.2e}, f'(1) vs FD {:.2e} on {} fields", s.gradient, s.pohozaev, s.path, s.fields),
    ))
}

fn local_minimizer() -> Result<Outcome, String> {
    let consts = estimate_constants(1.0, 2.5, &EstimateConfig::default()).map_err(|e| e.to_string())?;
    let params = ModelParams::new(1.0, 2.5, consts.c0 / 2.0).map_err(|e| e.to_string())?;
    let grid = make_grid(2048, 160.0, GridScheme::Graded).map_err(|e| e.to_string())?;
    let res = multi_start(&grid, &params, &consts, &MinimizeConfig::default(), 8).map_err(|e| e.to_string())?;
    let b = &res.breakdown;
    let q_rel = b.q.abs() / b.scale();
    let scan = fiber_scan(&res.field, &params, &linspace(0.8, 1.2, 41)).map_err(|e| e.to_string())?;
    let fiber_min = scan.is_local_min_at(1.0);
    Ok(outcome(
        res.converged && b.i < 0.0 && b.a < consts.rho0 && q_rel <= 1e-4 && fiber_min,
        format!(
            "I = {:.6}, A = {:.4} < ρ0 = {:.4}, |Q|/scale = {q_rel:.2e}, fiber min at t=1: {fiber_min}",
            b.i, b.a, consts.rho0
        ),
    ))
}

fn mass_curve() -> Result<Outcome, String> {
    let consts = estimate_constants(1.0, 2.5, &EstimateConfig::default()).map_err(|e| e.to_string())?;
    let base = ModelParams::new(1.0, 2.5, consts.c0 / 2.0).map_err(|e| e.to_string())?;
    let grid = make_grid(2048, 160.0, GridScheme::Graded).map_err(|e| e.to_string())?;
    let report = sweep_mass(&dyadic_grid(consts.c0, 6), &base, &grid, &consts, &SweepConfig::default())
        .map_err(|e| e.to_string())?;
    let signs_ok = report.records.iter().all(|r| r.converged && r.m_est < 0.0);
    let failed: Vec<&str> =
        report.checks.iter().filter(|c| c.verdict == Verdict::Fail).map(|c| c.name.as_str()).collect();
    let margins: Vec<&str> =
        report.checks.iter().filter(|c| c.verdict == Verdict::Margin).map(|c| c.name.as_str()).collect();
    let m_max = report.records.iter().map(|r| r.m_est).fold(f64::MIN, f64::max);
    Ok(outcome(
        signs_ok && failed.is_empty(),
        format!(
            "{} masses, max m_est = {m_max:.4e}, {} checks, failed {:?}, margins {:?}",
            report.records.len(),
            report.checks.len(),
            failed,
            margins
        ),
    ))
}

fn inequality_corpus() -> Result<Outcome, String> {
    let consts = estimate_constants(1.0, 2.5, &EstimateConfig::default()).map_err(|e| e.to_string())?;
    let k_h = consts.k_h.ok_or("missing K_H estimate")?;
    let grid = make_grid(2048, 40.0, GridScheme::Graded).map_err(|e| e.to_string())?;
    let s = corpus_suite(&grid, 100, 2, 1.0, &consts, k_h).map_err(|e| e.to_string())?;
    Ok(outcome(s.violations() == 0, format!("{} fields, violations {:?}", s.fields, s)))
}

fn read_tree(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| {
            let e = e.map_err(|e| e.to_string())?;
            let bytes = std::fs::read(e.path()).map_err(|e| e.to_string())?;
            Ok((e.file_name().to_string_lossy().into_owned(), bytes))
        })
        .collect::<Result<_, String>>()?;
    files.sort();
    Ok(files)
}

fn determinism() -> Result<Outcome, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let code = run_cli(["sbp", "--out", out.to_str().unwrap(), "sweep", "--grid", "dyadic:6"]);
        if code != 0 {
            return Ok(outcome(false, format!("sweep run {run} exited with {code}")));
        }
        trees.push(read_tree(&out)?);
    }
    let names: Vec<&str> = trees[0].iter().map(|(n, _)| n.as_str()).collect();
    Ok(outcome(trees[0] == trees[1], format!("files {names:?} identical: {}", trees[0] == trees[1])))
}

type Criterion = (&'static str, Duration, fn() -> Result<Outcome, String>);

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("1 threshold identity", Duration::from_secs(10), threshold_identity),
        ("2 oracle equivalence", Duration::from_secs(120), oracle_equivalence),
        ("3 gradient and Pohozaev consistency", Duration::from_secs(60), fd_consistency),
        ("4 local minimizer at c0/2", Duration::from_secs(300), local_minimizer),
        ("5 m(c) curve properties", Duration::from_secs(1800), mass_curve),
        ("6 inequality corpus", Duration::from_secs(120), inequality_corpus),
        ("7 determinism", Duration::from_secs(1800), determinism),
    ];
    let mut all = true;
    for (name, budget, f) in criteria {
        let out = timed(budget, f);
        all &= out.pass;
        println!("{} criterion {name}: {}", if out.pass { "PASS" } else { "FAIL" }, out.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
