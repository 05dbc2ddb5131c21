//! Projected descent on the mass sphere `S(c)` inside the ball
//! `V(c) = {u ∈ S(c) : A(u) < ρ₀}`.
//!
//! # Iteration
//!
//! With `P = ∂I/∂u` (Euclidean partials), `W` the volume weights, `L` the
//! stiffness matrix and `M = L + σW`:
//!
//! ```text
//! z₁ = M⁻¹P,   z₂ = M⁻¹(W u),   α = ⟨z₁,u⟩_W / ⟨z₂,u⟩_W
//! d  = −z₁ + α z₂                                (so ⟨d,u⟩_W = 0)
//! u⁺ = √c · (u + s d)/‖u + s d‖₂
//! ```
//!
//! `σ = max(−λ, σ_min)` with `λ = ⟨P,u⟩/c`. The step `s` is accepted when
//!
//! ```text
//! I(u⁺) ≤ I(u) + armijo · s · ⟨P, d⟩
//! ```
//!
//! and `⟨P, d⟩ = −‖P − αWu‖²_{M⁻¹}`. Convergence is declared on the L² norm of
//! the tangent gradient `‖g − λu‖₂` with `g = P/W`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::ThresholdConstants;
use crate::error::{Error, Result};
use crate::fiber::{fiber_scan, linspace, FiberScan};
use crate::field::{self, solve_shifted_stiffness, ModelParams, RadialField, RadialGrid};
use crate::functional::{energy_and_partials, EnergyBreakdown};

/// What to do when a step would leave `V(c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rho0Policy {
    /// Abort with a boundary event.
    Reject,
    /// Shrink the step until `A < ρ₀`.
    ShrinkStep,
}

impl std::str::FromStr for Rho0Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reject" => Ok(Self::Reject),
            "shrink_step" => Ok(Self::ShrinkStep),
            _ => Err(Error::Parse(format!("unknown rho0 policy '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeConfig {
    pub max_iter: usize,
    /// Tolerance on `‖g − λu‖₂`.
    pub grad_tol: f64,
    /// First trial step; `None` means `1/(1 + A(u₀))`.
    pub step_init: Option<f64>,
    pub armijo: f64,
    pub shrink: f64,
    pub rho0_policy: Rho0Policy,
    pub seed: u64,
    /// Lower bound on the preconditioner shift.
    pub sigma_min: f64,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        Self {
            max_iter: 20_000,
            grad_tol: 1e-7,
            step_init: None,
            armijo: 1e-4,
            shrink: 0.5,
            rho0_policy: Rho0Policy::ShrinkStep,
            seed: 7,
            sigma_min: 1e-2,
        }
    }
}

impl MinimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::InvalidParams(format!("armijo = {} must lie in (0, 1)", self.armijo)));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidParams(format!("shrink = {} must lie in (0, 1)", self.shrink)));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidParams(format!("grad_tol = {} must be positive", self.grad_tol)));
        }
        if let Some(s) = self.step_init {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParams(format!("step_init = {s} must be positive")));
            }
        }
        if !(self.sigma_min > 0.0) {
            return Err(Error::InvalidParams("sigma_min must be positive".into()));
        }
        Ok(())
    }
}

/// One accepted iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimizeResult {
    #[serde(skip)]
    pub field: RadialField,
    pub breakdown: EnergyBreakdown,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    pub in_v: bool,
    /// Steps that were shortened to stay inside `V(c)`.
    pub boundary_events: usize,
    /// Index of the start this result came from.
    pub start_index: usize,
    pub history: Vec<HistoryEntry>,
}

/// `g − (⟨g,u⟩/c) u`.
pub fn project_tangent(g: &RadialField, u: &RadialField, c: f64) -> Result<RadialField> {
    if !(c > 0.0) {
        return Err(Error::InvalidParams(format!("mass c = {c} must be positive")));
    }
    let coef = field::inner(g, u)? / c;
    g.axpy(-coef, u)
}

/// State of one iterate: breakdown, partials, multiplier and gradient norm.
struct Point {
    u: RadialField,
    br: EnergyBreakdown,
    partials: Vec<f64>,
    lambda: f64,
    grad_norm: f64,
}

impl Point {
    fn new(u: RadialField, params: &ModelParams) -> Self {
        let (br, partials) = energy_and_partials(&u, params);
        let w = u.grid().volume_weights();
        let mass = br.mass;
        let lambda = dot(&partials, u.values()) / mass;
        let grad_norm = partials
            .iter()
            .zip(u.values())
            .zip(w)
            .map(|((p, v), w)| {
                let r = p - lambda * w * v;
                r * r / w
            })
            .sum::<f64>()
            .sqrt();
        Self { u, br, partials, lambda, grad_norm }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned tangent descent direction and its slope `⟨P, d⟩`.
fn direction(pt: &Point, grid: &RadialGrid, sigma_min: f64) -> (Vec<f64>, f64) {
    let w = grid.volume_weights();
    let sigma = (-pt.lambda).max(sigma_min);
    let z1 = solve_shifted_stiffness(grid, sigma, &pt.partials);
    let wu: Vec<f64> = w.iter().zip(pt.u.values()).map(|(w, v)| w * v).collect();
    let z2 = solve_shifted_stiffness(grid, sigma, &wu);
    let alpha = dot(&z1, &wu) / dot(&z2, &wu);
    let d: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| alpha * b - a).collect();
    let slope = dot(&pt.partials, &d);
    (d, slope)
}

/// Local minimization of `I` on `S(c) ∩ V(c)` from `u0`.
pub fn minimize_local(
    u0: &RadialField,
    params: &ModelParams,
    consts: &ThresholdConstants,
    cfg: &MinimizeConfig,
) -> Result<MinimizeResult> {
    minimize_local_observed(u0, params, consts, cfg, &mut |_, _| {})
}

/// [`minimize_local`] calling `observer(k, u_k)` after every accepted step.
pub fn minimize_local_observed(
    u0: &RadialField,
    params: &ModelParams,
    consts: &ThresholdConstants,
    cfg: &MinimizeConfig,
    observer: &mut dyn FnMut(usize, &RadialField),
) -> Result<MinimizeResult> {
    cfg.validate()?;
    if params.c >= consts.c0 {
        return Err(Error::Precondition(format!(
            "mass c = {} is not below the threshold c0 = {}; the local-minimum geometry is only available for c < c0",
            params.c, consts.c0
        )));
    }
    let rho0 = consts.rho0;
    let grid = u0.grid().clone();
    let u = field::normalize_mass(u0, params.c)?;
    let mut pt = Point::new(u, params);
    if !(pt.br.a < rho0) {
        return Err(Error::Precondition(format!(
            "starting field has A = {} >= rho0 = {rho0}; it must lie in V(c)",
            pt.br.a
        )));
    }
    let mut step = cfg.step_init.unwrap_or(1.0 / (1.0 + pt.br.a));
    let mut history = vec![HistoryEntry { i: pt.br.i, a: pt.br.a, grad_norm: pt.grad_norm }];
    let mut boundary_events = 0;
    let mut iterations = 0;
    let mut converged = pt.grad_norm <= cfg.grad_tol;

    while !converged && iterations < cfg.max_iter {
        let (d, slope) = direction(&pt, &grid, cfg.sigma_min);
        if !(slope < 0.0) {
            break;
        }
        let mut accepted = None;
        while step > 1e-14 {
            let trial = trial_point(&pt.u, &d, step, params.c)?;
            let tp = Point::new(trial, params);
            if !(tp.br.a < rho0) {
                boundary_events += 1;
                if cfg.rho0_policy == Rho0Policy::Reject {
                    return Err(Error::BoundaryEvent { a: tp.br.a, rho0 });
                }
                step *= cfg.shrink;
                continue;
            }
            if tp.br.i.is_finite() && tp.br.i <= pt.br.i + cfg.armijo * step * slope {
                accepted = Some(tp);
                break;
            }
            step *= cfg.shrink;
        }
        let Some(next) = accepted else { break };
        pt = next;
        iterations += 1;
        history.push(HistoryEntry { i: pt.br.i, a: pt.br.a, grad_norm: pt.grad_norm });
        observer(iterations, &pt.u);
        converged = pt.grad_norm <= cfg.grad_tol;
        step = (step / cfg.shrink).min(4.0);
    }

    Ok(MinimizeResult {
        in_v: pt.br.a < rho0,
        breakdown: pt.br,
        field: pt.u,
        iterations,
        converged,
        grad_norm: pt.grad_norm,
        boundary_events,
        start_index: 0,
        history,
    })
}

fn trial_point(u: &RadialField, d: &[f64], step: f64, c: f64) -> Result<RadialField> {
    let values = u.values().iter().zip(d).map(|(v, d)| v + step * d).collect();
    field::normalize_mass(&RadialField::new(u.grid().clone(), values)?, c)
}

/// Target `A` of start `k` out of `n`: geometric in `[ρ₀/16, ρ₀/2]`, or
/// `ρ₀/4` for a single start.
fn ladder_a(k: usize, n: usize, rho0: f64) -> f64 {
    if n == 1 {
        return rho0 / 4.0;
    }
    rho0 / 16.0 * 8f64.powf(k as f64 / (n - 1) as f64)
}

/// Start `k` of a multi-start run: a Gaussian with `A = ladder_a(k)`, with a
/// seeded smooth perturbation on odd `k`.
pub fn start_field(
    grid: &Arc<RadialGrid>,
    params: &ModelParams,
    consts: &ThresholdConstants,
    k: usize,
    n: usize,
    seed: u64,
) -> Result<RadialField> {
    // A Gaussian of mass c and width σ has A = 3c/(2σ²).
    let a = ladder_a(k, n, consts.rho0);
    let sigma = (1.5 * params.c / a).sqrt();
    let g = field::make_gaussian(params.c, sigma, grid)?;
    if k % 2 == 0 {
        return Ok(g);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let amp: f64 = rng.gen_range(0.05..0.2);
    let freq: f64 = rng.gen_range(0.5..2.0);
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let values = g
        .values()
        .iter()
        .zip(grid.nodes())
        .map(|(v, r)| v * (1.0 + amp * (freq * r / sigma + phase).cos()))
        .collect();
    field::normalize_mass(&RadialField::new(grid.clone(), values)?, params.c)
}

/// Best converged result over `n_starts` seeded starts, run in parallel and
/// merged by `(I, start index)`.
pub fn multi_start(
    grid: &Arc<RadialGrid>,
    params: &ModelParams,
    consts: &ThresholdConstants,
    cfg: &MinimizeConfig,
    n_starts: usize,
) -> Result<MinimizeResult> {
    if n_starts == 0 {
        return Err(Error::InvalidParams("n_starts must be at least 1".into()));
    }
    let runs: Vec<Result<MinimizeResult>> = (0..n_starts)
        .into_par_iter()
        .map(|k| {
            let u0 = start_field(grid, params, consts, k, n_starts, cfg.seed)?;
            let mut res = minimize_local(&u0, params, consts, cfg)?;
            res.start_index = k;
            Ok(res)
        })
        .collect();
    let mut first_err = None;
    let mut best: Option<MinimizeResult> = None;
    for run in runs {
        match run {
            Ok(r) if r.converged => {
                if best.as_ref().is_none_or(|b| r.breakdown.i < b.breakdown.i) {
                    best = Some(r);
                }
            }
            Ok(_) => {}
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match (best, first_err) {
        (Some(b), _) => Ok(b),
        (None, Some(e @ Error::Precondition(_))) => Err(e),
        (None, _) => Err(Error::AllStartsFailed(n_starts)),
    }
}

/// Convergence and critical-point evidence for one minimization result.
#[derive(Debug, Clone, Serialize)]
pub struct GroundStateReport {
    /// "local minimizer found" or "not converged"; a ground state is never
    /// certified.
    pub verdict: String,
    pub converged: bool,
    pub q_relative: f64,
    pub nehari_relative: f64,
    pub pohozaev_relative: f64,
    pub lambda: f64,
    pub lambda_negative: bool,
    pub energy_negative: bool,
    /// `ρ₀ − A`.
    pub v_margin: f64,
    pub grad_norm: f64,
    pub fiber: FiberScan,
    pub fiber_local_min_at_1: bool,
}

/// Identity residuals, `V(c)` margin and a fiber scan on `[0.8, 1.2]`.
pub fn ground_state_diagnostics(
    res: &MinimizeResult,
    params: &ModelParams,
    consts: &ThresholdConstants,
) -> Result<GroundStateReport> {
    let b = &res.breakdown;
    let scale = b.scale().max(crate::functional::SCALE_FLOOR);
    let (n, p) = b.residuals(params, b.lambda);
    let fiber = fiber_scan(&res.field, params, &linspace(0.8, 1.2, 41))?;
    let fiber_local_min_at_1 = fiber.is_local_min_at(1.0);
    Ok(GroundStateReport {
        verdict: if res.converged { "local minimizer found" } else { "not converged" }.into(),
        converged: res.converged,
        q_relative: b.q.abs() / scale,
        nehari_relative: n.abs() / scale,
        pohozaev_relative: p.abs() / scale,
        lambda: b.lambda,
        lambda_negative: b.lambda < 0.0,
        energy_negative: b.i < 0.0,
        v_margin: consts.rho0 - b.a,
        grad_norm: res.grad_norm,
        fiber,
        fiber_local_min_at_1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_gaussian, make_grid, GridScheme};

    #[test]
    fn tangent_projection() {
        let g = make_grid(256, 20.0, GridScheme::Graded).unwrap();
        let u = field::normalize_mass(&make_gaussian(2.0, 1.5, &g).unwrap(), 2.0).unwrap();
        assert!(project_tangent(&u.scale(3.0), &u, 2.0).unwrap().values().iter().all(|v| v.abs() < 1e-12));
        let v = RadialField::from_fn(g.clone(), |r| (-r).exp() * (1.0 - r / 3.0)).unwrap();
        let w = project_tangent(&v, &u, 2.0).unwrap();
        assert!(field::inner(&w, &u).unwrap().abs() < 1e-12);
        let w2 = project_tangent(&w, &u, 2.0).unwrap();
        for (a, b) in w.values().iter().zip(w2.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn config_validation() {
        let cfg = MinimizeConfig { armijo: 1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = MinimizeConfig { shrink: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        assert!(MinimizeConfig::default().validate().is_ok());
        assert_eq!("shrink_step".parse::<Rho0Policy>().unwrap(), Rho0Policy::ShrinkStep);
        assert!("bounce".parse::<Rho0Policy>().is_err());
    }

    #[test]
    fn ladder_spans_target_range() {
        assert_eq!(ladder_a(0, 1, 16.0), 4.0);
        assert_eq!(ladder_a(0, 8, 16.0), 1.0);
        assert!((ladder_a(7, 8, 16.0) - 8.0).abs() < 1e-12);
    }
}
