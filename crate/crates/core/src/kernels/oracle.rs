//! Brute-force Cartesian quadrature of the nonlocal double integrals.
//!
//! A [`Field3D`] samples `u` at the cell centres of an `n³` lattice covering
//! `[−L, L]³`, `h = 2L/n`. Double integrals are direct sums
//!
//! ```text
//! ∫∫ k(|x−y|) ρ(x) ρ(y) ≈ h⁶ Σ_a Σ_b k_ab ρ_a ρ_b,   ρ = u²
//! ```
//!
//! with `k_aa` the self-cell value. For a kernel that behaves like
//! `κ/w + c₀ + a₁w + a₃w³ + (even powers)` near the origin, the lattice sum
//! of `|x|^α φ(x)` misses `Z(−α/2) h^{3+α} φ(0)` with the Epstein zeta
//! `Z(s) = Σ'_{n∈ℤ³} |n|^{−2s}` of the cubic lattice. Hence
//!
//! ```text
//! k_aa = −κ Z(½)/h + c₀ − a₁ Z(−½) h − a₃ Z(−3/2) h³
//!
//! Coulomb      κ = 1
//! Yukawa(m)    κ = 1, c₀ = −m, a₁ = m²/2, a₃ = m⁴/24
//! BP           c₀ = 1, a₁ = −1/2, a₃ = −1/24
//! exp          c₀ = 1, a₁ = −1,   a₃ = −1/6
//! ```
//!
//! The singular part also sees the curvature of the density: the angular
//! average of `κ ρ(x_a + y)/|y|` carries `κ Δρ(x_a)|y|/6`, which adds
//! `−κ Z(−½) h⁴ Δρ_a / 6` to the potential at cell `a` (seven-point `Δ`).
//!
//! The cost is `n⁶` kernel evaluations, so `n` is capped at [`MAX_NODES`].
//! The outer sum is split per x-slab and reduced in slab order, so results are
//! independent of the thread count.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{ModelParams, RadialField};

/// Largest admissible lattice size per axis.
pub const MAX_NODES: usize = 48;

/// `Z(½)` for the simple cubic lattice.
pub const EPSTEIN_HALF: f64 = -2.837_297_479_480_619_5;
/// `Z(−½)`.
pub const EPSTEIN_MINUS_HALF: f64 = -0.266_596_278_718_393_47;
/// `Z(−3/2)`.
pub const EPSTEIN_MINUS_THREE_HALVES: f64 = 0.041_183_252_544_960_035;

/// Interaction kernel of a double integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    /// `1/w`
    Coulomb,
    /// `e^{−m w}/w`
    Yukawa(f64),
    /// `(1 − e^{−w})/w`
    Bp,
    /// `e^{−w}`
    PureExponential,
}

impl KernelKind {
    pub fn yukawa(m: f64) -> Result<Self> {
        if m.is_finite() && m > 0.0 {
            Ok(KernelKind::Yukawa(m))
        } else {
            Err(Error::InvalidParams(format!("Yukawa rate m = {m} must be positive")))
        }
    }

    fn value(self, w: f64) -> f64 {
        match self {
            KernelKind::Coulomb => 1.0 / w,
            KernelKind::Yukawa(m) => (-m * w).exp() / w,
            KernelKind::Bp => -(-w).exp_m1() / w,
            KernelKind::PureExponential => (-w).exp(),
        }
    }

    /// `(κ, c₀, a₁, a₃)` of the small-`w` expansion.
    fn expansion(self) -> (f64, f64, f64, f64) {
        match self {
            KernelKind::Coulomb => (1.0, 0.0, 0.0, 0.0),
            KernelKind::Yukawa(m) => (1.0, -m, 0.5 * m * m, m.powi(4) / 24.0),
            KernelKind::Bp => (0.0, 1.0, -0.5, -1.0 / 24.0),
            KernelKind::PureExponential => (0.0, 1.0, -1.0, -1.0 / 6.0),
        }
    }

    fn self_value(self, h: f64) -> f64 {
        let (kappa, c0, a1, a3) = self.expansion();
        -kappa * EPSTEIN_HALF / h + c0 - a1 * EPSTEIN_MINUS_HALF * h
            - a3 * EPSTEIN_MINUS_THREE_HALVES * h.powi(3)
    }

    fn validate(self) -> Result<()> {
        match self {
            KernelKind::Yukawa(m) => KernelKind::yukawa(m).map(|_| ()),
            _ => Ok(()),
        }
    }
}

/// Samples of `u` on the cell centres of a cube.
#[derive(Debug, Clone)]
pub struct Field3D {
    extent: f64,
    n: usize,
    values: Vec<f64>,
}

impl Field3D {
    pub fn new(extent: f64, n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || n > MAX_NODES {
            return Err(Error::OracleTooLarge(n, MAX_NODES));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::InvalidGrid(format!("extent = {extent} must be positive")));
        }
        if values.len() != n * n * n {
            return Err(Error::InvalidGrid(format!("{} values for a {n}³ lattice", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateField("non-finite lattice value".into()));
        }
        Ok(Self { extent, n, values })
    }

    pub fn from_fn(extent: f64, n: usize, f: impl Fn([f64; 3]) -> f64) -> Result<Self> {
        if n == 0 || n > MAX_NODES {
            return Err(Error::OracleTooLarge(n, MAX_NODES));
        }
        let h = 2.0 * extent / n as f64;
        let coord = |k: usize| -extent + (k as f64 + 0.5) * h;
        let mut values = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    values.push(f([coord(i), coord(j), coord(k)]));
                }
            }
        }
        Self::new(extent, n, values)
    }

    /// Embeds a radial field centred at `center`.
    pub fn from_radial(u: &RadialField, extent: f64, n: usize, center: [f64; 3]) -> Result<Self> {
        Self::from_fn(extent, n, |x| {
            let d = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
            u.eval((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt())
        })
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.extent / self.n as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Centre of cell `(i, j, k)`.
    pub fn point(&self, idx: [usize; 3]) -> [f64; 3] {
        let h = self.spacing();
        idx.map(|k| -self.extent + (k as f64 + 0.5) * h)
    }

    fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    /// `∫|u|^q`.
    pub fn lp_power(&self, q: f64) -> f64 {
        self.cell_volume() * self.values.iter().map(|v| v.abs().powf(q)).sum::<f64>()
    }

    pub fn mass(&self) -> f64 {
        self.lp_power(2.0)
    }

    pub fn check_same_lattice(&self, other: &Field3D) -> Result<()> {
        if self.n == other.n && self.extent.to_bits() == other.extent.to_bits() {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn add(&self, other: &Field3D) -> Result<Field3D> {
        self.check_same_lattice(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Self { extent: self.extent, n: self.n, values })
    }

    fn density(&self) -> Vec<f64> {
        self.values.iter().map(|v| v * v).collect()
    }
}

/// Seven-point Laplacian of `rho` with zero exterior.
fn laplacian(rho: &[f64], n: usize, h: f64) -> Vec<f64> {
    let at = |i: isize, j: isize, k: isize| -> f64 {
        let r = 0..n as isize;
        if r.contains(&i) && r.contains(&j) && r.contains(&k) {
            rho[((i as usize) * n + j as usize) * n + k as usize]
        } else {
            0.0
        }
    };
    let mut out = vec![0.0; rho.len()];
    for i in 0..n as isize {
        for j in 0..n as isize {
            for k in 0..n as isize {
                let s = at(i - 1, j, k)
                    + at(i + 1, j, k)
                    + at(i, j - 1, k)
                    + at(i, j + 1, k)
                    + at(i, j, k - 1)
                    + at(i, j, k + 1)
                    - 6.0 * at(i, j, k);
                out[((i as usize) * n + j as usize) * n + k as usize] = s / (h * h);
            }
        }
    }
    out
}

/// Coefficient of `Δρ_a` in the potential correction.
fn curvature_weight(kernel: KernelKind, h: f64) -> f64 {
    -kernel.expansion().0 * EPSTEIN_MINUS_HALF * h.powi(4) / 6.0
}

/// Kernel values on the `(2n−1)³` table of lattice offsets.
fn offset_table(kernel: KernelKind, n: usize, h: f64) -> Vec<f64> {
    let m = 2 * n - 1;
    let mut table = vec![0.0; m * m * m];
    for dx in 0..m {
        for dy in 0..m {
            for dz in 0..m {
                let off = [dx, dy, dz].map(|d| (d as f64 - (n - 1) as f64) * h);
                let w = (off[0] * off[0] + off[1] * off[1] + off[2] * off[2]).sqrt();
                table[(dx * m + dy) * m + dz] = if w == 0.0 {
                    kernel.self_value(h)
                } else {
                    kernel.value(w)
                };
            }
        }
    }
    table
}

fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Raw double sums `∫∫ k(|x−y|) u²(x) u²(y)` for several kernels in one pass.
pub fn brute_force_doubles(u: &Field3D, kernels: &[KernelKind]) -> Result<Vec<f64>> {
    for k in kernels {
        k.validate()?;
    }
    let n = u.n;
    let m = 2 * n - 1;
    let h = u.spacing();
    let rho = u.density();
    let tables: Vec<Vec<f64>> = kernels.iter().map(|k| offset_table(*k, n, h)).collect();
    let dv = u.cell_volume();

    let slabs: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|ax| {
            let mut acc = vec![0.0; tables.len()];
            for ay in 0..n {
                for az in 0..n {
                    let ra = rho[(ax * n + ay) * n + az];
                    if ra == 0.0 {
                        continue;
                    }
                    let mut pot = vec![0.0; tables.len()];
                    for bx in 0..n {
                        let dx = bx + n - 1 - ax;
                        for by in 0..n {
                            let dy = by + n - 1 - ay;
                            let row = &rho[(bx * n + by) * n..(bx * n + by) * n + n];
                            let start = (dx * m + dy) * m + (n - 1 - az);
                            for (p, t) in pot.iter_mut().zip(&tables) {
                                *p += dot4(&t[start..start + n], row);
                            }
                        }
                    }
                    for (a, p) in acc.iter_mut().zip(&pot) {
                        *a += ra * p;
                    }
                }
            }
            acc
        })
        .collect();

    let mut total = vec![0.0; kernels.len()];
    for slab in &slabs {
        for (t, s) in total.iter_mut().zip(slab) {
            *t += s;
        }
    }
    let curvature: f64 = if kernels.iter().any(|k| k.expansion().0 != 0.0) {
        let lap = laplacian(&rho, n, h);
        rho.iter().zip(&lap).map(|(a, b)| a * b).sum()
    } else {
        0.0
    };
    Ok(total
        .into_iter()
        .zip(kernels)
        .map(|(t, k)| t * dv * dv + dv * curvature_weight(*k, h) * curvature)
        .collect())
}

/// Raw `∫∫ k(|x−y|) u²(x) u²(y)` by direct lattice summation.
pub fn brute_force_double(u: &Field3D, kernel: KernelKind) -> Result<f64> {
    Ok(brute_force_doubles(u, &[kernel])?[0])
}

/// Raw potential `∫ k(|x_a − y|) u²(y) dy` at the centre of cell `a`.
pub fn brute_force_potential(u: &Field3D, kernel: KernelKind, cell: [usize; 3]) -> Result<f64> {
    kernel.validate()?;
    let n = u.n;
    if cell.iter().any(|&c| c >= n) {
        return Err(Error::InvalidParams(format!("cell {cell:?} outside the {n}³ lattice")));
    }
    let h = u.spacing();
    let mut acc = 0.0;
    for bx in 0..n {
        for by in 0..n {
            for bz in 0..n {
                let v = u.values[(bx * n + by) * n + bz];
                if v == 0.0 {
                    continue;
                }
                let d = [bx, by, bz]
                    .iter()
                    .zip(&cell)
                    .map(|(b, a)| (*b as f64 - *a as f64) * h)
                    .collect::<Vec<_>>();
                let w = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                let k = if w == 0.0 { kernel.self_value(h) } else { kernel.value(w) };
                acc += k * v * v;
            }
        }
    }
    let rho = u.density();
    let lap = laplacian(&rho, n, h)[(cell[0] * n + cell[1]) * n + cell[2]];
    Ok(acc * u.cell_volume() + curvature_weight(kernel, h) * lap)
}

/// `T(u) = B/4 − μC/p − D/6` on the lattice, with `B` from the BP kernel.
pub fn lattice_t(u: &Field3D, params: &ModelParams) -> Result<f64> {
    let b = brute_force_double(u, KernelKind::Bp)? / (4.0 * PI);
    Ok(b / 4.0 - params.mu * u.lp_power(params.p) / params.p - u.lp_power(6.0) / 6.0)
}

/// `T(u₁ + u₂) − T(u₁) − T(u₂)`.
pub fn splitting_defect(u1: &Field3D, u2: &Field3D, params: &ModelParams) -> Result<f64> {
    let sum = u1.add(u2)?;
    if u2.values.iter().all(|v| *v == 0.0) || u1.values.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    Ok(lattice_t(&sum, params)? - lattice_t(u1, params)? - lattice_t(u2, params)?)
}

/// Cross-term budget `(c₁c₂ + c₁c + c₂c + c²)/d`, `c = c₁ + c₂`, for supports
/// a distance `d` apart.
pub fn splitting_budget(c1: f64, c2: f64, d: f64) -> f64 {
    let c = c1 + c2;
    (c1 * c2 + c1 * c + c2 * c + c * c) / d
}
