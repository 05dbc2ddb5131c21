//! Inequality constants and the closed-form thresholds built from them.
//!
//! # Quotients
//!
//! ```text
//! Sobolev   S(u)    = A / D^{1/3}
//! GN        K_GN(u) = C_p / (A^{3(p−2)/4} c^{(6−p)/4})
//! HLS       K_H(u)  = 4πH / (A^{1/2} c^{3/2})
//! ```
//!
//! All three are invariant under `u ↦ a·u(b·x)` up to the amplitude, so only
//! shapes matter. `S` is read off the Aubin–Talenti profile
//! `W(r) = 3^{1/4}(1 + r²)^{−1/2}` with a `1/r` tail correction and Richardson
//! extrapolation across two grids. `K_GN` and `K_H` are maximized over a
//! seeded trial corpus followed by preconditioned ascent on the log-quotient.
//! Maximizing over trial shapes can only under-estimate the sharp constants,
//! so both are inflated before use.
//!
//! # Thresholds
//!
//! With `b = −3(3p−10) μ K_GN S³ / (4p)`:
//!
//! ```text
//! K  = (μ/p) K_GN b^{(3p−10)/(3(6−p))} + b^{8/(3(6−p))} / (6S³)
//! c₀ = (1/(2K))^{3/2}
//! ρ₀ = b^{4/(3(6−p))} c₀^{1/3}
//! β₀ = ½ − ρ₀²/(6S³) = (μ K_GN/p) c₀^{(6−p)/4} ρ₀^{3(p−2)/4 − 1}
//! h_c(t) = t²/2 − (μ K_GN/p) c^{(6−p)/4} t^{3(p−2)/2} − t⁶/(6S³)
//! ```

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{
    self, grad_norm_sq_open, make_grid, solve_shifted_stiffness, stiffness_apply, GridDescriptor,
    GridScheme, RadialField, RadialGrid,
};
use crate::kernels::coulomb_potential;

/// Safety factor applied to estimated `K_GN` and `K_H`.
pub const DEFAULT_INFLATION: f64 = 1.05;

/// Richardson-extrapolated Sobolev constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevEstimate {
    pub value: f64,
    /// `|fine − coarse|/3`.
    pub error: f64,
    pub coarse: f64,
    pub fine: f64,
    pub r_max: f64,
    pub node_counts: [usize; 2],
}

/// Sobolev quotient of `W` on one grid, with `A` and `D` tails beyond the grid.
fn talenti_quotient(grid: &Arc<RadialGrid>, dilation: f64) -> Result<f64> {
    let amp = 3f64.powf(0.25) * dilation.sqrt();
    let u = RadialField::from_fn(grid.clone(), |r| amp / (1.0 + (dilation * r).powi(2)).sqrt())?;
    let (a_open, r_face) = grad_norm_sq_open(&u);
    // W ~ a/r with a = amp/dilation at large r.
    let a = amp / dilation;
    let last = *grid.nodes().last().unwrap_or(&grid.r_max());
    let a_tail = 4.0 * PI * a * a / last.max(r_face);
    let d_tail = 4.0 * PI * a.powi(6) / (3.0 * grid.r_max().powi(3));
    let d = field::lp_power(&u, 6.0) + d_tail;
    Ok((a_open + a_tail) / d.cbrt())
}

/// `S` from the Aubin–Talenti profile on graded grids of 4096 and 8192 nodes,
/// `r_max = 200`.
pub fn sobolev_estimate() -> Result<SobolevEstimate> {
    sobolev_estimate_on(200.0, [4096, 8192], 1.0)
}

pub(crate) fn sobolev_estimate_on(
    r_max: f64,
    node_counts: [usize; 2],
    dilation: f64,
) -> Result<SobolevEstimate> {
    let coarse = talenti_quotient(&make_grid(node_counts[0], r_max, GridScheme::Graded)?, dilation)?;
    let fine = talenti_quotient(&make_grid(node_counts[1], r_max, GridScheme::Graded)?, dilation)?;
    Ok(SobolevEstimate {
        value: (4.0 * fine - coarse) / 3.0,
        error: (fine - coarse).abs() / 3.0,
        coarse,
        fine,
        r_max,
        node_counts,
    })
}

/// Optimal Sobolev constant `S = inf A/‖u‖₆²`.
pub fn sobolev_constant() -> f64 {
    sobolev_estimate()
        .map(|s| s.value)
        .unwrap_or(f64::NAN)
}

fn nonzero(u: &RadialField) -> Result<(f64, f64)> {
    let a = field::grad_norm_sq(u);
    let c = field::mass(u);
    if !(a > 0.0 && c > 0.0) {
        return Err(Error::DegenerateField("quotient of a zero field".into()));
    }
    Ok((a, c))
}

/// `A / D^{1/3}`.
pub fn sobolev_quotient(u: &RadialField) -> Result<f64> {
    let (a, _) = nonzero(u)?;
    Ok(a / field::lp_power(u, 6.0).cbrt())
}

/// `C_p / (A^{3(p−2)/4} c^{(6−p)/4})`, defined for `2 ≤ p < 6`.
pub fn gn_quotient(u: &RadialField, p: f64) -> Result<f64> {
    if !(2.0..6.0).contains(&p) {
        return Err(Error::InvalidParams(format!("p = {p} must lie in [2, 6)")));
    }
    let (a, c) = nonzero(u)?;
    Ok(field::lp_power(u, p) / (a.powf(0.75 * (p - 2.0)) * c.powf(0.25 * (6.0 - p))))
}

/// `4πH / (A^{1/2} c^{3/2})`.
pub fn hls_quotient(u: &RadialField) -> Result<f64> {
    let (a, c) = nonzero(u)?;
    Ok(4.0 * PI * crate::kernels::coulomb_energy(u) / (a.sqrt() * c.powf(1.5)))
}

/// Settings of the corpus-and-ascent estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    pub seed: u64,
    pub node_count: usize,
    pub r_max: f64,
    /// Random trial shapes added to the fixed families.
    pub n_random: usize,
    /// Best corpus members refined by ascent.
    pub n_refine: usize,
    pub ascent_iters: usize,
    pub inflation: f64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            seed: 20240917,
            node_count: 1024,
            r_max: 40.0,
            n_random: 24,
            n_refine: 3,
            ascent_iters: 200,
            inflation: DEFAULT_INFLATION,
        }
    }
}

/// A maximized quotient and how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    /// Best quotient found; a lower bound on the sharp constant.
    pub raw: f64,
    /// `raw · inflation`, the value used downstream.
    pub value: f64,
    pub inflation: f64,
    pub corpus_size: usize,
    pub corpus_max: f64,
    pub seed: u64,
    pub grid: GridDescriptor,
    pub ascent_iters: usize,
    pub estimate: bool,
}

/// Seeded trial shapes on `grid`, each normalized to unit mass.
pub fn trial_corpus(grid: &Arc<RadialGrid>, n_random: usize, seed: u64) -> Result<Vec<RadialField>> {
    let mut shapes: Vec<Box<dyn Fn(f64) -> f64>> = Vec::new();
    for s in [0.5, 1.0, 2.0] {
        shapes.push(Box::new(move |r: f64| (-r * r / (2.0 * s * s)).exp()));
    }
    shapes.push(Box::new(|r: f64| (-r).exp()));
    shapes.push(Box::new(|r: f64| 1.0 / r.cosh()));
    for alpha in [1.5, 2.0, 3.0] {
        shapes.push(Box::new(move |r: f64| (1.0 + r * r).powf(-alpha)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..n_random {
        let terms: usize = rng.gen_range(1..=3);
        let mut parts = Vec::with_capacity(terms);
        for _ in 0..terms {
            let amp: f64 = rng.gen_range(0.2..1.0);
            let width: f64 = rng.gen_range(0.5..2.5);
            let shell: f64 = if k % 2 == 1 { rng.gen_range(0.0..3.0) } else { 0.0 };
            parts.push((amp, width, shell));
        }
        shapes.push(Box::new(move |r: f64| {
            parts
                .iter()
                .map(|(a, w, s)| a * (-(r - s) * (r - s) / (2.0 * w * w)).exp())
                .sum()
        }));
    }
    shapes
        .iter()
        .map(|f| field::normalize_mass(&RadialField::from_fn(grid.clone(), f)?, 1.0))
        .collect()
}

/// Value and Euclidean partials of a log-quotient.
type LogQuotient = dyn Fn(&RadialField) -> Result<(f64, Vec<f64>)>;

fn log_gn(p: f64) -> impl Fn(&RadialField) -> Result<(f64, Vec<f64>)> {
    move |u: &RadialField| {
        let (a, c) = nonzero(u)?;
        let cp = field::lp_power(u, p);
        let w = u.grid().volume_weights();
        let stiff = stiffness_apply(u);
        let (ka, kc) = (0.75 * (p - 2.0), 0.25 * (6.0 - p));
        let value = cp.ln() - ka * a.ln() - kc * c.ln();
        let grad = u
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                p * w[i] * v.abs().powf(p - 2.0) * v / cp - ka * 2.0 * stiff[i] / a - kc * 2.0 * w[i] * v / c
            })
            .collect();
        Ok((value, grad))
    }
}

fn log_hls(u: &RadialField) -> Result<(f64, Vec<f64>)> {
    let (a, c) = nonzero(u)?;
    let vc = coulomb_potential(u);
    let w = u.grid().volume_weights();
    let raw: f64 = u.values().iter().zip(vc.values()).zip(w).map(|((v, p), w)| w * v * v * p).sum();
    let stiff = stiffness_apply(u);
    let value = raw.ln() - 0.5 * a.ln() - 1.5 * c.ln();
    let grad = u
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| 4.0 * w[i] * v * vc.values()[i] / raw - stiff[i] / a - 3.0 * w[i] * v / c)
        .collect();
    Ok((value, grad))
}

/// Preconditioned ascent on a log-quotient; returns the best value reached.
fn ascend(start: &RadialField, f: &LogQuotient, iters: usize) -> Result<f64> {
    let grid = start.grid().clone();
    let mut u = start.clone();
    let (mut value, mut grad) = f(&u)?;
    let mut step = 1.0;
    for _ in 0..iters {
        let a = field::grad_norm_sq(&u);
        let c = field::mass(&u);
        let dir = solve_shifted_stiffness(&grid, a / c, &grad);
        let slope: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
        if !(slope > 1e-30) {
            break;
        }
        // Scale the direction so a unit step moves u by a fraction of its size.
        let norm = (dir.iter().zip(grid.volume_weights()).map(|(d, w)| w * d * d).sum::<f64>() / c).sqrt();
        let unit = 0.25 / norm.max(1e-300);
        let mut accepted = false;
        for _ in 0..30 {
            let t = step * unit;
            let values: Vec<f64> = u.values().iter().zip(&dir).map(|(v, d)| v + t * d).collect();
            let trial = match field::normalize_mass(&RadialField::new(grid.clone(), values)?, 1.0) {
                Ok(t) => t,
                Err(_) => {
                    step *= 0.5;
                    continue;
                }
            };
            match f(&trial) {
                Ok((tv, tg)) if tv >= value + 1e-4 * t * slope => {
                    u = trial;
                    value = tv;
                    grad = tg;
                    accepted = true;
                    break;
                }
                _ => step *= 0.5,
            }
        }
        if !accepted {
            break;
        }
        step = (step * 2.0).min(1.0);
    }
    Ok(value.exp())
}

fn estimate(
    cfg: &EstimateConfig,
    quotient: impl Fn(&RadialField) -> Result<f64>,
    log_quotient: &LogQuotient,
) -> Result<ConstantEstimate> {
    if !(cfg.inflation >= 1.0) {
        return Err(Error::InvalidParams(format!("inflation {} must be at least 1", cfg.inflation)));
    }
    let grid = make_grid(cfg.node_count, cfg.r_max, GridScheme::Graded)?;
    let corpus = trial_corpus(&grid, cfg.n_random, cfg.seed)?;
    let mut scored: Vec<(f64, usize)> = corpus
        .iter()
        .enumerate()
        .map(|(i, u)| quotient(u).map(|q| (q, i)))
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let corpus_max = scored[0].0;
    let mut best = corpus_max;
    for &(_, i) in scored.iter().take(cfg.n_refine) {
        best = best.max(ascend(&corpus[i], log_quotient, cfg.ascent_iters)?);
    }
    Ok(ConstantEstimate {
        raw: best,
        value: best * cfg.inflation,
        inflation: cfg.inflation,
        corpus_size: corpus.len(),
        corpus_max,
        seed: cfg.seed,
        grid: grid.descriptor(),
        ascent_iters: cfg.ascent_iters,
        estimate: true,
    })
}

/// Estimated Gagliardo–Nirenberg constant for `2 < p < 6`.
pub fn kgn_estimate(p: f64, cfg: &EstimateConfig) -> Result<ConstantEstimate> {
    if !(p > 2.0 && p < 6.0) {
        return Err(Error::InvalidParams(format!("p = {p} must lie in (2, 6)")));
    }
    estimate(cfg, |u| gn_quotient(u, p), &log_gn(p))
}

/// Estimated Hardy–Littlewood–Sobolev constant `K_H`.
pub fn kh_estimate(cfg: &EstimateConfig) -> Result<ConstantEstimate> {
    estimate(cfg, hls_quotient, &log_hls)
}

/// Where the constants came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub k_gn: ConstantEstimate,
    pub k_h: ConstantEstimate,
    pub sobolev: SobolevEstimate,
}

/// Inequality constants and the thresholds derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConstants {
    pub mu: f64,
    pub p: f64,
    #[serde(rename = "K_GN")]
    pub k_gn: f64,
    #[serde(rename = "K_H")]
    pub k_h: Option<f64>,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub c0: f64,
    pub rho0: f64,
    pub beta0: f64,
    /// `h_{c₀}(√ρ₀)` relative to the largest term.
    pub h_residual: f64,
    pub provenance: Option<Provenance>,
}

/// Closed-form `K`, `c₀`, `ρ₀`, `β₀` from `K_GN` and `S`, for `2 < p < 10/3`.
pub fn thresholds(mu: f64, p: f64, k_gn: f64, s: f64) -> Result<ThresholdConstants> {
    if !(mu.is_finite() && mu > 0.0 && k_gn.is_finite() && k_gn > 0.0 && s.is_finite() && s > 0.0) {
        return Err(Error::InvalidParams("mu, K_GN and S must be positive".into()));
    }
    if !(p > 2.0 && p < 10.0 / 3.0) {
        return Err(Error::InvalidParams(format!(
            "p = {p} must lie in (2, 10/3) for the bracketed base to be positive"
        )));
    }
    let s3 = s.powi(3);
    let base = -3.0 * (3.0 * p - 10.0) * mu * k_gn * s3 / (4.0 * p);
    let k = mu / p * k_gn * base.powf((3.0 * p - 10.0) / (3.0 * (6.0 - p)))
        + base.powf(8.0 / (3.0 * (6.0 - p))) / (6.0 * s3);
    let c0 = (1.0 / (2.0 * k)).powf(1.5);
    let rho0 = base.powf(4.0 / (3.0 * (6.0 - p))) * c0.cbrt();
    let mut out = ThresholdConstants {
        mu,
        p,
        k_gn,
        k_h: None,
        s,
        k,
        c0,
        rho0,
        beta0: 0.5 - rho0 * rho0 / (6.0 * s3),
        h_residual: 0.0,
        provenance: None,
    };
    let t = rho0.sqrt();
    let (t1, t2, t3) = h_terms(t, c0, &out);
    out.h_residual = (t1 - t2 - t3) / t1.max(t2).max(t3);
    Ok(out)
}

fn h_terms(t: f64, c: f64, consts: &ThresholdConstants) -> (f64, f64, f64) {
    let p = consts.p;
    (
        0.5 * t * t,
        consts.mu * consts.k_gn / p * c.powf((6.0 - p) / 4.0) * t.powf(1.5 * (p - 2.0)),
        t.powi(6) / (6.0 * consts.s.powi(3)),
    )
}

/// `h_c(t) = t²/2 − (μK_GN/p) c^{(6−p)/4} t^{3(p−2)/2} − t⁶/(6S³)`.
pub fn h_c(t: f64, c: f64, consts: &ThresholdConstants) -> f64 {
    let (a, b, d) = h_terms(t, c, consts);
    a - b - d
}

/// The β₀ product form `(μK_GN/p) c₀^{(6−p)/4} ρ₀^{3(p−2)/4 − 1}`.
pub fn beta0_product_form(consts: &ThresholdConstants) -> f64 {
    let p = consts.p;
    consts.mu * consts.k_gn / p
        * consts.c0.powf((6.0 - p) / 4.0)
        * consts.rho0.powf(0.75 * (p - 2.0) - 1.0)
}

/// Estimates `S`, `K_GN`, `K_H` and assembles the thresholds with provenance.
pub fn estimate_constants(mu: f64, p: f64, cfg: &EstimateConfig) -> Result<ThresholdConstants> {
    let sobolev = sobolev_estimate()?;
    let k_gn = kgn_estimate(p, cfg)?;
    let k_h = kh_estimate(cfg)?;
    let mut out = thresholds(mu, p, k_gn.value, sobolev.value)?;
    out.k_h = Some(k_h.value);
    out.provenance = Some(Provenance { k_gn, k_h, sobolev });
    Ok(out)
}
