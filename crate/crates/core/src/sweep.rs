//! Mass sweeps of the minimal level `m(c)` and the diagnostics run on them.
//!
//! Each mass is minimized cold by [`multi_start`] and along two warm chains,
//! one in increasing and one in decreasing `c`, each starting from its
//! neighbour's minimizer rescaled to the new mass. The lowest converged
//! energy wins. On a dyadic grid `c₀·2^{−k}` the checks read:
//!
//! ```text
//! sign          m(c) < 0
//! subadditive   m(c) − m(α) − m(c − α) ≤ tol + noise
//! ratio         m(c)/c strictly decreasing in c, → 0 as c → 0
//! ```
//!
//! Only the sign check can fail hard; the others are reported as margins.

use std::collections::hash_map::DefaultHasher;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::ThresholdConstants;
use crate::error::{Error, Result};
use crate::fiber::derivative_from_breakdown;
use crate::field::{self, ModelParams, RadialField, RadialGrid};
use crate::functional::{energy, SCALE_FLOOR};
use crate::minimize::{minimize_local, multi_start, MinimizeConfig, MinimizeResult};

/// Version of the JSON report layout.
pub const REPORT_VERSION: u32 = 1;

/// CSV header of a sweep.
pub const CSV_HEADER: &str = "c,m,lambda,A,B,C,D,Q,converged,n_starts,wall_time";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n_starts: usize,
    pub warm_start: bool,
    /// Record wall-clock seconds per mass; off keeps outputs reproducible.
    pub record_time: bool,
    pub minimize: MinimizeConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { n_starts: 8, warm_start: true, record_time: false, minimize: MinimizeConfig::default() }
    }
}

/// Which run produced a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Cold,
    WarmUp,
    WarmDown,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub c: f64,
    pub m_est: f64,
    pub lambda: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c_p: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub converged: bool,
    pub n_starts: usize,
    pub wall_time: f64,
    /// Spread of converged energies across cold and warm runs.
    pub noise: f64,
    pub source: Source,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Reported only; not a pass/fail criterion.
    Margin,
    Skipped,
}

/// One named diagnostic with its inputs and tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    /// Short statement of the property being checked.
    pub anchor: String,
    pub inputs: Vec<f64>,
}

impl CheckEntry {
    fn new(name: impl Into<String>, value: f64, tolerance: f64, verdict: Verdict, anchor: &str, inputs: Vec<f64>) -> Self {
        Self { name: name.into(), value, tolerance, verdict, anchor: anchor.into(), inputs }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub version: u32,
    pub records: Vec<SweepRecord>,
    pub checks: Vec<CheckEntry>,
    pub constants: ThresholdConstants,
    pub config: SweepConfig,
    pub config_hash: String,
    #[serde(skip)]
    pub fields: Vec<Option<RadialField>>,
}

/// `c₀·2^{−k}` for `k = points, …, 1`, in increasing order.
pub fn dyadic_grid(c0: f64, points: usize) -> Vec<f64> {
    (1..=points).rev().map(|k| c0 * 0.5f64.powi(k as i32)).collect()
}

struct Run {
    result: Option<MinimizeResult>,
    error: Option<String>,
}

fn warm_chain(
    order: &[usize],
    c_grid: &[f64],
    cold: &[Run],
    base: &ModelParams,
    consts: &ThresholdConstants,
    cfg: &MinimizeConfig,
) -> Vec<Option<MinimizeResult>> {
    let mut out: Vec<Option<MinimizeResult>> = (0..c_grid.len()).map(|_| None).collect();
    let mut prev: Option<RadialField> = None;
    for &i in order {
        let seed_field = prev.take();
        let res = seed_field.and_then(|u| {
            let params = base.with_mass(c_grid[i]).ok()?;
            let u0 = field::normalize_mass(&u, c_grid[i]).ok()?;
            minimize_local(&u0, &params, consts, cfg).ok().filter(|r| r.converged)
        });
        let best_here = match (&res, &cold[i].result) {
            (Some(w), Some(c)) if c.breakdown.i <= w.breakdown.i => Some(c.field.clone()),
            (Some(w), _) => Some(w.field.clone()),
            (None, Some(c)) => Some(c.field.clone()),
            (None, None) => None,
        };
        prev = best_here;
        out[i] = res;
    }
    out
}

/// `m(c)` on `c_grid` for the model `base` (its own mass is ignored).
pub fn sweep_mass(
    c_grid: &[f64],
    base: &ModelParams,
    grid: &Arc<RadialGrid>,
    consts: &ThresholdConstants,
    cfg: &SweepConfig,
) -> Result<SweepReport> {
    if c_grid.len() < 3 {
        return Err(Error::InvalidParams(format!(
            "a sweep needs at least 3 masses, got {}",
            c_grid.len()
        )));
    }
    for w in c_grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidParams("masses must be strictly increasing".into()));
        }
    }
    if let Some(&c) = c_grid.iter().find(|&&c| !(c > 0.0 && c < consts.c0)) {
        return Err(Error::Precondition(format!("mass {c} is outside (0, c0 = {})", consts.c0)));
    }
    cfg.minimize.validate()?;

    let cold: Vec<(Run, f64)> = c_grid
        .par_iter()
        .map(|&c| {
            let t = Instant::now();
            let run = match base
                .with_mass(c)
                .and_then(|p| multi_start(grid, &p, consts, &cfg.minimize, cfg.n_starts))
            {
                Ok(r) => Run { result: Some(r), error: None },
                Err(e) => Run { result: None, error: Some(e.to_string()) },
            };
            (run, t.elapsed().as_secs_f64())
        })
        .collect();
    let (cold, times): (Vec<Run>, Vec<f64>) = cold.into_iter().unzip();

    let n = c_grid.len();
    let (up, down) = if cfg.warm_start {
        let asc: Vec<usize> = (0..n).collect();
        let desc: Vec<usize> = (0..n).rev().collect();
        rayon::join(
            || warm_chain(&asc, c_grid, &cold, base, consts, &cfg.minimize),
            || warm_chain(&desc, c_grid, &cold, base, consts, &cfg.minimize),
        )
    } else {
        (vec![None; n], vec![None; n])
    };

    let mut records = Vec::with_capacity(n);
    let mut fields = Vec::with_capacity(n);
    for i in 0..n {
        let candidates = [
            (Source::Cold, cold[i].result.as_ref()),
            (Source::WarmUp, up[i].as_ref()),
            (Source::WarmDown, down[i].as_ref()),
        ];
        let converged: Vec<(Source, &MinimizeResult)> = candidates
            .iter()
            .filter_map(|(s, r)| r.filter(|r| r.converged).map(|r| (*s, r)))
            .collect();
        let best = converged
            .iter()
            .min_by(|a, b| a.1.breakdown.i.total_cmp(&b.1.breakdown.i))
            .copied();
        let wall_time = if cfg.record_time { times[i] } else { 0.0 };
        match best {
            Some((source, r)) => {
                let is = converged.iter().map(|(_, r)| r.breakdown.i);
                let noise = is.clone().fold(f64::MIN, f64::max) - is.fold(f64::MAX, f64::min);
                let b = &r.breakdown;
                records.push(SweepRecord {
                    c: c_grid[i],
                    m_est: b.i,
                    lambda: b.lambda,
                    a: b.a,
                    b: b.b,
                    c_p: b.c,
                    d: b.d,
                    q: b.q,
                    converged: true,
                    n_starts: cfg.n_starts,
                    wall_time,
                    noise,
                    source,
                    error: None,
                });
                fields.push(Some(r.field.clone()));
            }
            None => {
                records.push(SweepRecord {
                    c: c_grid[i],
                    m_est: f64::NAN,
                    lambda: f64::NAN,
                    a: f64::NAN,
                    b: f64::NAN,
                    c_p: f64::NAN,
                    d: f64::NAN,
                    q: f64::NAN,
                    converged: false,
                    n_starts: cfg.n_starts,
                    wall_time,
                    noise: f64::NAN,
                    source: Source::Failed,
                    error: cold[i].error.clone().or_else(|| Some("no converged run".into())),
                });
                fields.push(None);
            }
        }
    }

    let mut report = SweepReport {
        version: REPORT_VERSION,
        records,
        checks: Vec::new(),
        constants: consts.clone(),
        config: *cfg,
        config_hash: config_hash(c_grid, base, grid, cfg),
        fields,
    };
    let mut checks = check_signs(&report, consts.c0);
    checks.extend(check_subadditivity(&report, 1e-6));
    checks.extend(check_ratio_conditions(&report));
    report.checks = checks;
    Ok(report)
}

fn config_hash(c_grid: &[f64], base: &ModelParams, grid: &Arc<RadialGrid>, cfg: &SweepConfig) -> String {
    let text = serde_json::json!({
        "c_grid": c_grid,
        "params": base,
        "grid": grid.descriptor(),
        "config": cfg,
    })
    .to_string();
    let mut h = DefaultHasher::new();
    text.hash(&mut h);
    format!("{:016x}", h.finish())
}

/// `m_est(c) < 0` for every converged record below `c₀`.
pub fn check_signs(report: &SweepReport, c0: f64) -> Vec<CheckEntry> {
    report
        .records
        .iter()
        .map(|r| {
            let verdict = if !r.converged {
                Verdict::Skipped
            } else if r.c < c0 && r.m_est < 0.0 {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
            CheckEntry::new(
                format!("negative_level c={:.6e}", r.c),
                r.m_est,
                0.0,
                verdict,
                "m(c) < 0 for c below c0",
                vec![r.c],
            )
        })
        .collect()
}

fn find(records: &[SweepRecord], c: f64) -> Option<&SweepRecord> {
    records.iter().find(|r| (r.c - c).abs() <= 1e-12 * c)
}

/// Weak subadditivity at every representable triple `(c, α, c − α)`.
pub fn check_subadditivity(report: &SweepReport, tol: f64) -> Vec<CheckEntry> {
    let recs: Vec<&SweepRecord> = report.records.iter().filter(|r| r.converged).collect();
    let mut out = Vec::new();
    for total in &recs {
        let mut any = false;
        for alpha in &recs {
            if alpha.c > total.c / 2.0 * (1.0 + 1e-12) {
                continue;
            }
            let Some(rest) = find(&report.records, total.c - alpha.c).filter(|r| r.converged) else {
                continue;
            };
            any = true;
            let defect = total.m_est - alpha.m_est - rest.m_est;
            let allowed = tol + total.noise + alpha.noise + rest.noise;
            let inputs = vec![total.c, alpha.c, rest.c];
            out.push(CheckEntry::new(
                format!("subadditivity c={:.6e} alpha={:.6e}", total.c, alpha.c),
                defect,
                allowed,
                if defect <= allowed { Verdict::Pass } else { Verdict::Fail },
                "m(c) <= m(alpha) + m(c - alpha)",
                inputs.clone(),
            ));
            out.push(CheckEntry::new(
                format!("strict_subadditivity_margin c={:.6e} alpha={:.6e}", total.c, alpha.c),
                -defect,
                0.0,
                Verdict::Margin,
                "m(c) < m(alpha) + m(c - alpha)",
                inputs,
            ));
        }
        if !any && report.records.len() > 1 {
            out.push(CheckEntry::new(
                format!("subadditivity c={:.6e}", total.c),
                f64::NAN,
                tol,
                Verdict::Skipped,
                "no representable triple",
                vec![total.c],
            ));
        }
    }
    out
}

/// Strict decrease of `m(c)/c` and its approach to 0 as `c → 0`.
pub fn check_ratio_conditions(report: &SweepReport) -> Vec<CheckEntry> {
    let recs: Vec<&SweepRecord> = report.records.iter().filter(|r| r.converged).collect();
    let mut out = Vec::new();
    for w in recs.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (r_lo, r_hi) = (lo.m_est / lo.c, hi.m_est / hi.c);
        let margin = r_lo - r_hi;
        let noise = lo.noise / lo.c + hi.noise / hi.c;
        let verdict = if margin > 0.0 {
            Verdict::Pass
        } else {
            Verdict::Margin
        };
        out.push(CheckEntry::new(
            format!("ratio_decrease c={:.6e}..{:.6e}", lo.c, hi.c),
            margin,
            noise,
            verdict,
            "m(c)/c strictly decreasing",
            vec![lo.c, hi.c, r_lo, r_hi],
        ));
    }
    if recs.len() >= 2 {
        let (first, last) = (recs[0], recs[recs.len() - 1]);
        let (r_small, r_large) = (first.m_est / first.c, last.m_est / last.c);
        out.push(CheckEntry::new(
            "ratio_small_end",
            r_large.abs() - r_small.abs(),
            0.0,
            if r_small.abs() < r_large.abs() { Verdict::Pass } else { Verdict::Margin },
            "m(c)/c tends to 0 as c tends to 0",
            vec![first.c, last.c, r_small, r_large],
        ));
    }
    if recs.len() >= 3 {
        // Least-squares slope of log|m/c| against log c on the three smallest masses.
        let pts: Vec<(f64, f64)> = recs[..3]
            .iter()
            .map(|r| (r.c.ln(), (r.m_est / r.c).abs().ln()))
            .collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / 3.0;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / 3.0;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let exponent = sxy / sxx;
        out.push(CheckEntry::new(
            "ratio_power_law_exponent",
            exponent,
            0.0,
            if exponent > 0.0 { Verdict::Pass } else { Verdict::Margin },
            "|m(c)/c| ~ c^k with k > 0 near c = 0",
            recs[..3].iter().map(|r| r.c).collect(),
        ));
    }
    out
}

/// `f′_θ(1,u)` along each `β`, the affine fit through them and its root.
pub fn check_scaling_paths(u: &RadialField, params: &ModelParams, beta_set: &[f64]) -> Result<Vec<CheckEntry>> {
    if u.is_zero() {
        return Err(Error::Precondition("scaling paths of the zero field".into()));
    }
    if beta_set.len() < 2 {
        return Err(Error::InvalidParams("need at least two values of beta".into()));
    }
    let b = energy(u, params);
    let scale = b.scale().max(SCALE_FLOOR);
    let vals: Vec<f64> = beta_set.iter().map(|&beta| derivative_from_breakdown(&b, beta, params)).collect();
    let mut out: Vec<CheckEntry> = beta_set
        .iter()
        .zip(&vals)
        .map(|(&beta, &v)| {
            CheckEntry::new(
                format!("path_derivative beta={beta}"),
                v,
                1e-6 * scale,
                Verdict::Margin,
                "h'(1) along the beta scaling path",
                vec![beta],
            )
        })
        .collect();
    let admissible = vals.iter().any(|v| v.abs() > 1e-6 * scale);
    out.push(CheckEntry::new(
        "path_admissible",
        vals.iter().fold(0.0, |m: f64, v| m.max(v.abs())) / scale,
        1e-6,
        if admissible { Verdict::Pass } else { Verdict::Fail },
        "some scaling path has h'(1) != 0",
        beta_set.to_vec(),
    ));
    let slope = (vals[1] - vals[0]) / (beta_set[1] - beta_set[0]);
    let intercept = vals[0] - slope * beta_set[0];
    let residual = beta_set
        .iter()
        .zip(&vals)
        .map(|(&beta, &v)| (intercept + slope * beta - v).abs())
        .fold(0.0, f64::max)
        / scale;
    out.push(CheckEntry::new(
        "path_affinity",
        residual,
        1e-10,
        if residual <= 1e-10 { Verdict::Pass } else { Verdict::Fail },
        "h'(1) is affine in beta",
        beta_set.to_vec(),
    ));
    let root = -intercept / slope;
    let distance = beta_set.iter().map(|b| (b - root).abs()).fold(f64::INFINITY, f64::min);
    out.push(CheckEntry::new(
        "path_root_beta",
        root,
        distance,
        Verdict::Margin,
        "unique beta with h'(1) = 0; tolerance column holds its distance to the tested set",
        beta_set.to_vec(),
    ));
    Ok(out)
}

impl SweepReport {
    /// True when no check failed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.verdict != Verdict::Fail)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{:.16e}",
                r.c, r.m_est, r.lambda, r.a, r.b, r.c_p, r.d, r.q, r.converged, r.n_starts, r.wall_time
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
