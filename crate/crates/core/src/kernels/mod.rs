//! Nonlocal potentials and double integrals of radial fields.
//!
//! With `ρ = u²` and charges `q_j = W_j ρ_j` (the volume weights of the grid),
//! every nonlocal quantity is a product rule `V_i = Σ_j q_j k(r_i, r_j)` for
//! the angular average `k` of a 3D kernel:
//!
//! ```text
//! Coulomb    1/|x−y|             k = 1/max(r, s)
//! Yukawa     e^{−m|x−y|}/|x−y|   k = e^{−m r_>} sinh(m r_<) / (m r s)
//! exponent   e^{−|x−y|}          k = [(1+|r−s|)e^{−|r−s|} − (1+r+s)e^{−(r+s)}] / (2 r s)
//! ```
//!
//! Each sum is evaluated in O(N) by prefix/suffix recurrences in
//! `e^{−m(r_i − r_{i−1})}`.
//!
//! The Coulomb and Yukawa averages have a derivative jump of `−1/r²` on the
//! diagonal. The end-corrected midpoint rule misses `J h²/12` there, so both
//! potentials carry the diagonal correction `−(π/3) u_i² (r′_i h)²`. The
//! correction cancels in the Bopp–Podolsky difference and is absent for the
//! exponential kernel.
//!
//! Energies:
//!
//! ```text
//! φ_u = (V_C − V_{Y,1}) / 4π
//! B   = ∫ φ_u u²                        = (1/4π) Σ q_i (V_C − V_{Y,1})_i
//! H   = (1/4π) ∫∫ u²u² / |x−y|          = (1/4π) Σ q_i V_{C,i}
//! Y_m = (1/4π) ∫∫ e^{−m|x−y|} u²u² / |x−y|
//! R   = ∫∫ e^{−|x−y|} u²u²,     E = R / 16π
//! ```
//!
//! `dY_m/dm = −R/4π` holds exactly for the discrete sums at `m = 1`.

pub mod oracle;

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::{RadialField, RadialGrid};

/// The nonlocal scalars and potentials of one field, computed together.
#[derive(Debug, Clone)]
pub struct NonlocalTerms {
    /// `B(u)`.
    pub b: f64,
    /// `H(u)`.
    pub h: f64,
    /// Raw exponential double integral `R(u)`.
    pub r_raw: f64,
    /// Bopp–Podolsky potential `φ_u` at the nodes.
    pub phi: Vec<f64>,
    /// Coulomb potential `V_C` at the nodes.
    pub v_coulomb: Vec<f64>,
}

impl NonlocalTerms {
    /// `E(u) = R(u)/16π`.
    pub fn e(&self) -> f64 {
        self.r_raw / (16.0 * PI)
    }
}

fn charges(u: &RadialField) -> Vec<f64> {
    u.grid()
        .volume_weights()
        .iter()
        .zip(u.values())
        .map(|(w, v)| w * v * v)
        .collect()
}

fn diagonal_kink(u: &RadialField) -> Vec<f64> {
    u.grid()
        .cell_widths()
        .iter()
        .zip(u.values())
        .map(|(h, v)| -PI / 3.0 * v * v * h * h)
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn coulomb_sum(grid: &RadialGrid, q: &[f64], kink: &[f64]) -> Vec<f64> {
    let r = grid.nodes();
    let n = q.len();
    let mut out = vec![0.0; n];
    let mut inner = 0.0;
    for i in 0..n {
        inner += q[i];
        out[i] = inner / r[i];
    }
    let mut outer = 0.0;
    for i in (0..n).rev() {
        out[i] += outer + kink[i];
        outer += q[i] / r[i];
    }
    out
}

/// `e^{−m r_i}` and `e^{−m (r_{i+1} − r_i)}` for this grid.
fn decay_tables(grid: &RadialGrid, m: f64) -> (Vec<f64>, Vec<f64>) {
    if m == 1.0 {
        return (grid.exp_neg_r().to_vec(), grid.exp_neg_dr().to_vec());
    }
    let r = grid.nodes();
    (
        r.iter().map(|x| (-m * x).exp()).collect(),
        r.windows(2).map(|w| (-m * (w[1] - w[0])).exp()).collect(),
    )
}

fn yukawa_sum(grid: &RadialGrid, q: &[f64], kink: &[f64], m: f64) -> Vec<f64> {
    let r = grid.nodes();
    let n = q.len();
    let (er, edr) = decay_tables(grid, m);
    let a: Vec<f64> = q.iter().zip(r).map(|(q, r)| q / r).collect();

    // Σ_j a_j e^{−m|r_i − r_j|} from both sides, then the image term.
    let mut near = vec![0.0; n];
    let mut acc = 0.0;
    for i in 0..n {
        if i > 0 {
            acc *= edr[i - 1];
        }
        acc += a[i];
        near[i] = acc;
    }
    acc = 0.0;
    for i in (0..n).rev() {
        if i + 1 < n {
            acc *= edr[i];
        }
        acc += a[i];
        near[i] += acc - a[i];
    }
    let image = dot(&a, &er);
    (0..n)
        .map(|i| 0.5 * (near[i] - er[i] * image) / (m * r[i]) + kink[i])
        .collect()
}

fn exp_sum(grid: &RadialGrid, q: &[f64]) -> Vec<f64> {
    let r = grid.nodes();
    let n = q.len();
    let er = grid.exp_neg_r();
    let edr = grid.exp_neg_dr();
    let a: Vec<f64> = q.iter().zip(r).map(|(q, r)| q / r).collect();

    // near_i = Σ_j a_j (1 + |r_i − r_j|) e^{−|r_i − r_j|}
    let mut near = vec![0.0; n];
    let (mut p0, mut p1) = (0.0, 0.0);
    for i in 0..n {
        if i > 0 {
            let d = r[i] - r[i - 1];
            p1 = (p1 + d * p0) * edr[i - 1];
            p0 *= edr[i - 1];
        }
        p0 += a[i];
        near[i] = p0 + p1;
    }
    let (mut s0, mut s1) = (0.0, 0.0);
    for i in (0..n).rev() {
        if i + 1 < n {
            let d = r[i + 1] - r[i];
            s1 = (s1 + d * s0) * edr[i];
            s0 *= edr[i];
        }
        s0 += a[i];
        near[i] += s0 + s1 - a[i];
    }
    let image0: f64 = a.iter().zip(er).map(|(a, e)| a * e).sum();
    let image1: f64 = a.iter().zip(er).zip(r).map(|((a, e), r)| a * e * r).sum();
    (0..n)
        .map(|i| 0.5 * (near[i] - er[i] * ((1.0 + r[i]) * image0 + image1)) / r[i])
        .collect()
}

fn check_rate(m: f64) -> Result<()> {
    if m.is_finite() && m > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("Yukawa rate m = {m} must be positive")))
    }
}

fn wrap(u: &RadialField, values: Vec<f64>) -> RadialField {
    RadialField::from_raw(u.grid().clone(), values)
}

/// `V_C(r) = ∫ u(y)² / |x − y| dy`.
pub fn coulomb_potential(u: &RadialField) -> RadialField {
    let v = coulomb_sum(u.grid(), &charges(u), &diagonal_kink(u));
    wrap(u, v)
}

/// `V_Y(r) = ∫ e^{−m|x−y|} u(y)² / |x − y| dy`.
pub fn yukawa_potential(u: &RadialField, m: f64) -> Result<RadialField> {
    check_rate(m)?;
    let v = yukawa_sum(u.grid(), &charges(u), &diagonal_kink(u), m);
    Ok(wrap(u, v))
}

/// `∫ e^{−|x−y|} u(y)² dy`.
pub fn exp_potential(u: &RadialField) -> RadialField {
    let v = exp_sum(u.grid(), &charges(u));
    wrap(u, v)
}

/// `φ_u = (1/4π) ∫ (1 − e^{−|x−y|}) u(y)² / |x − y| dy`.
pub fn bp_potential(u: &RadialField) -> RadialField {
    let q = charges(u);
    let vc = coulomb_sum(u.grid(), &q, &vec![0.0; q.len()]);
    let vy = yukawa_sum(u.grid(), &q, &vec![0.0; q.len()], 1.0);
    let phi = vc.iter().zip(&vy).map(|(c, y)| (c - y) / (4.0 * PI)).collect();
    wrap(u, phi)
}

/// `B(u) = ∫ φ_u u²`.
pub fn bp_energy(u: &RadialField) -> f64 {
    dot(&charges(u), bp_potential(u).values())
}

/// `H(u)`.
pub fn coulomb_energy(u: &RadialField) -> f64 {
    dot(&charges(u), coulomb_potential(u).values()) / (4.0 * PI)
}

/// `Y_m(u)`.
pub fn yukawa_energy(u: &RadialField, m: f64) -> Result<f64> {
    Ok(dot(&charges(u), yukawa_potential(u, m)?.values()) / (4.0 * PI))
}

/// Raw `R(u) = ∫∫ e^{−|x−y|} u²u²`.
pub fn exp_double_raw(u: &RadialField) -> f64 {
    dot(&charges(u), exp_potential(u).values())
}

/// `E(u) = R(u)/16π`.
pub fn exp_double_energy(u: &RadialField) -> f64 {
    exp_double_raw(u) / (16.0 * PI)
}

/// All nonlocal terms in one pass over the charges.
pub fn nonlocal_terms(u: &RadialField) -> NonlocalTerms {
    let grid = u.grid();
    let q = charges(u);
    let kink = diagonal_kink(u);
    let vc = coulomb_sum(grid, &q, &kink);
    let vy = yukawa_sum(grid, &q, &kink, 1.0);
    let ve = exp_sum(grid, &q);
    let phi: Vec<f64> = vc.iter().zip(&vy).map(|(c, y)| (c - y) / (4.0 * PI)).collect();
    NonlocalTerms {
        b: dot(&q, &phi),
        h: dot(&q, &vc) / (4.0 * PI),
        r_raw: dot(&q, &ve),
        phi,
        v_coulomb: vc,
    }
}
