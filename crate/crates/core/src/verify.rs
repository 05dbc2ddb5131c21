//! Property checks shared by the `verify` subcommand and the test suites:
//! finite-difference consistency, the 3D oracle comparison and the
//! inequality corpus.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constants::{h_c, ThresholdConstants};
use crate::error::Result;
use crate::fiber::{fiber_value, scaling_path_derivative_at_1, scaling_path_value};
use crate::field::{self, make_grid, GridScheme, ModelParams, RadialField, RadialGrid};
use crate::functional::{energy, gradient};
use crate::kernels::oracle::{brute_force_doubles, brute_force_potential, Field3D, KernelKind};
use crate::kernels::{coulomb_potential, nonlocal_terms, yukawa_potential};
use crate::sweep::{CheckEntry, Verdict};

/// Relative step of the gradient difference quotient.
pub const GRADIENT_STEP: f64 = 1e-5;
/// Step in `t` and `θ` for the fiber and scaling-path difference quotients.
pub const FIBER_STEP: f64 = 1e-4;
/// The β values probed along scaling paths.
pub const BETA_SET: [f64; 5] = [-1.0, -1.0 / 3.0, 0.0, 0.5, 1.0];

/// A seeded smooth field: one to three Gaussian bumps or shells of either
/// sign, rescaled to a mass in `[0.2, 5]`.
pub fn random_field(grid: &Arc<RadialGrid>, rng: &mut ChaCha8Rng) -> Result<RadialField> {
    let terms: usize = rng.gen_range(1..=3);
    let parts: Vec<(f64, f64, f64)> = (0..terms)
        .map(|k| {
            let amp: f64 = rng.gen_range(0.2..1.5) * if k > 0 && rng.gen_bool(0.3) { -0.5 } else { 1.0 };
            let width: f64 = rng.gen_range(0.5..2.5);
            let shell: f64 = if rng.gen_bool(0.4) { rng.gen_range(0.5..4.0) } else { 0.0 };
            (amp, width, shell)
        })
        .collect();
    let mass: f64 = rng.gen_range(0.2..5.0);
    let u = RadialField::from_fn(grid.clone(), |r| {
        parts
            .iter()
            .map(|(a, w, s)| a * (-(r - s) * (r - s) / (2.0 * w * w)).exp())
            .sum()
    })?;
    field::normalize_mass(&u, mass)
}

/// `n` seeded random fields.
pub fn random_corpus(grid: &Arc<RadialGrid>, n: usize, seed: u64) -> Result<Vec<RadialField>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_field(grid, &mut rng)).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Relative gap between `⟨∇I(u), v⟩` and the central difference of `I`
/// along `v`, with step `GRADIENT_STEP · ‖u‖/‖v‖`.
pub fn gradient_fd_error(u: &RadialField, v: &RadialField, params: &ModelParams) -> Result<f64> {
    let exact = field::inner(&gradient(u, params), v)?;
    let eps = GRADIENT_STEP * (field::mass(u) / field::mass(v)).sqrt();
    let plus = energy(&u.axpy(eps, v)?, params).i;
    let minus = energy(&u.axpy(-eps, v)?, params).i;
    Ok(rel((plus - minus) / (2.0 * eps), exact))
}

/// Relative gap between `Q(u)` and the central difference of `Φ_u` at 1.
pub fn pohozaev_fd_error(u: &RadialField, params: &ModelParams) -> Result<f64> {
    let h = FIBER_STEP;
    let fd = (fiber_value(u, 1.0 + h, params)? - fiber_value(u, 1.0 - h, params)?) / (2.0 * h);
    Ok(rel(fd, energy(u, params).q))
}

/// Relative gap between `f′_θ(1,u)` and the central difference in `θ`.
pub fn path_fd_error(u: &RadialField, beta: f64, params: &ModelParams) -> Result<f64> {
    let h = FIBER_STEP;
    let fd = (scaling_path_value(u, 1.0 + h, beta, params)? - scaling_path_value(u, 1.0 - h, beta, params)?)
        / (2.0 * h);
    Ok(rel(fd, scaling_path_derivative_at_1(u, beta, params)))
}

/// Worst relative errors of the three difference-quotient checks on
/// `n_fields` seeded fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdSummary {
    pub fields: usize,
    pub gradient: f64,
    pub pohozaev: f64,
    pub path: f64,
}

pub fn fd_suite(grid: &Arc<RadialGrid>, n_fields: usize, seed: u64) -> Result<FdSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = FdSummary { fields: n_fields, gradient: 0.0, pohozaev: 0.0, path: 0.0 };
    for _ in 0..n_fields {
        let u = random_field(grid, &mut rng)?;
        let v = random_field(grid, &mut rng)?;
        let params = ModelParams::new(rng.gen_range(0.5..5.0), rng.gen_range(2.1..2.6), field::mass(&u))?;
        out.gradient = out.gradient.max(gradient_fd_error(&u, &v, &params)?);
        out.pohozaev = out.pohozaev.max(pohozaev_fd_error(&u, &params)?);
        for beta in BETA_SET {
            out.path = out.path.max(path_fd_error(&u, beta, &params)?);
        }
    }
    Ok(out)
}

/// One radial-versus-lattice comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub quantity: String,
    pub radial: f64,
    pub oracle: f64,
    pub relative: f64,
}

/// Smooth radial test fields for the oracle comparison.
pub fn oracle_test_fields(grid: &Arc<RadialGrid>) -> Result<Vec<RadialField>> {
    let shapes: [fn(f64) -> f64; 5] = [
        |r| (-r * r / 2.0).exp(),
        |r| 0.6 * (-r * r / 3.0).exp(),
        |r| (-r * r / 1.5).exp() + 0.4 * (-(r - 2.0).powi(2)).exp(),
        |r| (1.0 + 0.5 * r * r) * (-r * r / 2.0).exp(),
        |r| 0.8 * (-r * r / 2.0).exp() - 0.3 * (-r * r).exp(),
    ];
    shapes.iter().map(|f| RadialField::from_fn(grid.clone(), f)).collect()
}

/// Radial `V_C`, `V_Y(m=1)` at three lattice cells and `B`, `H`, `E`,
/// against the brute-force lattice sums on an `n³` cube of half-width
/// `extent`.
pub fn oracle_comparison(u: &RadialField, n: usize, extent: f64) -> Result<Vec<OracleComparison>> {
    let lattice = Field3D::from_radial(u, extent, n, [0.0; 3])?;
    let kernels = [KernelKind::Coulomb, KernelKind::Bp, KernelKind::PureExponential];
    let raw = brute_force_doubles(&lattice, &kernels)?;
    let nl = nonlocal_terms(u);
    let mut out = vec![
        cmp("H", nl.h, raw[0] / (4.0 * PI)),
        cmp("B", nl.b, raw[1] / (4.0 * PI)),
        cmp("E", nl.e(), raw[2] / (16.0 * PI)),
    ];
    let vc = coulomb_potential(u);
    let vy = yukawa_potential(u, 1.0)?;
    let yukawa = KernelKind::yukawa(1.0)?;
    for cell in [[n / 2; 3], [n / 2, n / 2 + 2, n / 2 + 1], [n / 2 + 5, n / 2, n / 2 - 3]] {
        let x = lattice.point(cell);
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        out.push(cmp(
            &format!("V_C(r={r:.3})"),
            vc.eval(r),
            brute_force_potential(&lattice, KernelKind::Coulomb, cell)?,
        ));
        out.push(cmp(
            &format!("V_Y(r={r:.3})"),
            vy.eval(r),
            brute_force_potential(&lattice, yukawa, cell)?,
        ));
    }
    Ok(out)
}

fn cmp(name: &str, radial: f64, oracle: f64) -> OracleComparison {
    OracleComparison { quantity: name.into(), radial, oracle, relative: rel(radial, oracle) }
}

/// Margins of the inequalities on one field, each `≥ 0` when it holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityMargins {
    /// `K_H √A c^{3/2} − 4πH`.
    pub hls: f64,
    /// `K_GN A^{3(p−2)/4} c^{(6−p)/4} − C`.
    pub gn: f64,
    /// `I − h_c(√A)`.
    pub lower_bound: f64,
    /// `min_i φ_u(r_i)`.
    pub phi_min: f64,
    /// `H − B`.
    pub kernel_dominance: f64,
}

pub fn inequality_margins(
    u: &RadialField,
    mu: f64,
    consts: &ThresholdConstants,
    k_h: f64,
) -> Result<InequalityMargins> {
    let c = field::mass(u);
    let params = ModelParams::relaxed(mu, consts.p, c)?;
    let nl = nonlocal_terms(u);
    let b = energy(u, &params);
    let p = consts.p;
    Ok(InequalityMargins {
        hls: k_h * b.a.sqrt() * c.powf(1.5) - 4.0 * PI * nl.h,
        gn: consts.k_gn * b.a.powf(0.75 * (p - 2.0)) * c.powf(0.25 * (6.0 - p)) - b.c,
        lower_bound: b.i - h_c(b.a.sqrt(), c, consts),
        phi_min: nl.phi.iter().copied().fold(f64::INFINITY, f64::min),
        kernel_dominance: nl.h - nl.b,
    })
}

/// Fields in a corpus that violate each inequality.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub fields: usize,
    pub hls_violations: usize,
    pub gn_violations: usize,
    pub lower_bound_violations: usize,
    pub phi_negative: usize,
    pub dominance_violations: usize,
}

impl CorpusSummary {
    pub fn violations(&self) -> usize {
        self.hls_violations + self.gn_violations + self.lower_bound_violations + self.phi_negative + self.dominance_violations
    }
}

/// Runs [`inequality_margins`] over `n` seeded fields.
pub fn corpus_suite(
    grid: &Arc<RadialGrid>,
    n: usize,
    seed: u64,
    mu: f64,
    consts: &ThresholdConstants,
    k_h: f64,
) -> Result<CorpusSummary> {
    let mut s = CorpusSummary { fields: n, ..Default::default() };
    for u in random_corpus(grid, n, seed)? {
        let m = inequality_margins(&u, mu, consts, k_h)?;
        s.hls_violations += (m.hls < 0.0) as usize;
        s.gn_violations += (m.gn < 0.0) as usize;
        s.lower_bound_violations += (m.lower_bound < 0.0) as usize;
        s.phi_negative += (m.phi_min < 0.0) as usize;
        s.dominance_violations += (m.kernel_dominance < 0.0) as usize;
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub quick: bool,
    pub seed: u64,
}

/// Outcome of the full property suite.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub fd: FdSummary,
    pub oracle: Vec<OracleComparison>,
    pub corpus: CorpusSummary,
    pub checks: Vec<CheckEntry>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.verdict != Verdict::Fail)
    }
}

fn gate(name: &str, value: f64, tol: f64, anchor: &str) -> CheckEntry {
    CheckEntry {
        name: name.into(),
        value,
        tolerance: tol,
        verdict: if value <= tol { Verdict::Pass } else { Verdict::Fail },
        anchor: anchor.into(),
        inputs: Vec::new(),
    }
}

/// Difference quotients, oracle comparison and inequality corpus.
pub fn run_verify(cfg: &VerifyConfig, mu: f64, consts: &ThresholdConstants) -> Result<VerifyReport> {
    let grid = make_grid(2048, 40.0, GridScheme::Graded)?;
    let (n_fd, n_oracle, lattice, n_corpus) = if cfg.quick { (5, 2, 32, 30) } else { (20, 5, 40, 100) };
    let fd = fd_suite(&grid, n_fd, cfg.seed)?;
    let mut oracle = Vec::new();
    for u in oracle_test_fields(&grid)?.iter().take(n_oracle) {
        oracle.extend(oracle_comparison(u, lattice, 8.0)?);
    }
    let k_h = consts.k_h.unwrap_or(f64::NAN);
    let corpus = corpus_suite(&grid, n_corpus, cfg.seed ^ 0x5eed, mu, consts, k_h)?;
    let worst_oracle = oracle.iter().map(|o| o.relative).fold(0.0, f64::max);
    let checks = vec![
        gate("gradient_fd", fd.gradient, 1e-5, "directional derivative of I"),
        gate("pohozaev_fd", fd.pohozaev, 1e-5, "Q is the fiber derivative at t = 1"),
        gate("path_fd", fd.path, 1e-5, "closed-form h'(1) along scaling paths"),
        gate("oracle", worst_oracle, 2e-3, "radial reductions match lattice sums"),
        gate("inequality_corpus", corpus.violations() as f64, 0.0, "HLS, GN, lower bound, phi >= 0"),
    ];
    Ok(VerifyReport { fd, oracle, corpus, checks })
}
