//! Radial fields on ℝ³ and the quadrature/calculus they need.
//!
//! A [`RadialGrid`] places `N` cell-centred nodes in a computational
//! coordinate `s ∈ (0, 1)`, `s_i = (i + ½)/N`, and maps them to radii through
//! an odd polynomial `r(s)`:
//!
//! ```text
//! uniform:  r(s) = r_max · s
//! graded:   r(s) = r_max · (a s + (1 − a) s³),   a = 0.25
//! ```
//!
//! Because `r(s)` is odd, a radial function `u(r)` is an even function of `s`.
//! The reflection ghost `u(−s_0) = u(s_0)` is then exact and gives the
//! `u′(0) = 0` closure at the origin.
//!
//! Quadrature weights integrate `∫₀^{r_max} f(r) dr`. They use the midpoint
//! rule in `s` with sixth-order end corrections on the first and last six
//! nodes, times the Jacobian `r′(s_i)`. Since `r′` is at most quadratic,
//! constants integrate exactly.
//!
//! The kinetic term `A(u) = 4π ∫ u′(r)² r² dr` uses staggered centred
//! differences at the faces `s = k/N`. The outermost face sees a zero ghost
//! node, so the discrete operator carries a Dirichlet condition just past
//! `r_max`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible node count.
pub const MIN_NODES: usize = 16;

/// Slope of the graded map at the origin, relative to a uniform map.
const GRADED_SLOPE: f64 = 0.25;

/// Corrected-midpoint end weights (multiples of the cell width), sixth order.
const END_WEIGHTS: [f64; 6] = [
    1152511.0 / 967680.0,
    435301.0 / 967680.0,
    164923.0 / 96768.0,
    235297.0 / 483840.0,
    1162883.0 / 967680.0,
    935561.0 / 967680.0,
];

/// Node placement scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridScheme {
    Uniform,
    Graded,
}

impl GridScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            GridScheme::Uniform => "uniform",
            GridScheme::Graded => "graded",
        }
    }

    fn map(self, r_max: f64, s: f64) -> f64 {
        match self {
            GridScheme::Uniform => r_max * s,
            GridScheme::Graded => r_max * (GRADED_SLOPE * s + (1.0 - GRADED_SLOPE) * s * s * s),
        }
    }

    fn jacobian(self, r_max: f64, s: f64) -> f64 {
        match self {
            GridScheme::Uniform => r_max,
            GridScheme::Graded => r_max * (GRADED_SLOPE + 3.0 * (1.0 - GRADED_SLOPE) * s * s),
        }
    }

    fn inverse(self, r_max: f64, r: f64) -> f64 {
        match self {
            GridScheme::Uniform => r / r_max,
            GridScheme::Graded => {
                let y = r / r_max;
                if y <= 0.0 {
                    return 0.0;
                }
                // Newton from above on a convex increasing cubic converges monotonically.
                let mut s = (y / GRADED_SLOPE).min((y / (1.0 - GRADED_SLOPE)).cbrt());
                for _ in 0..60 {
                    let f = GRADED_SLOPE * s + (1.0 - GRADED_SLOPE) * s * s * s - y;
                    let df = GRADED_SLOPE + 3.0 * (1.0 - GRADED_SLOPE) * s * s;
                    let next = s - f / df;
                    if (next - s).abs() <= 1e-16 * s.max(1e-300) {
                        s = next;
                        break;
                    }
                    s = next;
                }
                s
            }
        }
    }
}

impl std::str::FromStr for GridScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "uniform" => Ok(GridScheme::Uniform),
            "graded" => Ok(GridScheme::Graded),
            other => Err(Error::Parse(format!("unknown grid scheme `{other}`"))),
        }
    }
}

/// Serializable description of a grid; two grids are interchangeable iff
/// their descriptors are equal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub node_count: usize,
    pub r_max: f64,
    pub scheme: GridScheme,
}

/// Radial nodes, quadrature weights and the staggered difference stencil.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    scheme: GridScheme,
    r_max: f64,
    h: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    volume: Vec<f64>,
    cell: Vec<f64>,
    face_coef: Vec<f64>,
    exp_neg_r: Vec<f64>,
    exp_neg_dr: Vec<f64>,
}

impl RadialGrid {
    pub fn descriptor(&self) -> GridDescriptor {
        GridDescriptor {
            node_count: self.nodes.len(),
            r_max: self.r_max,
            scheme: self.scheme,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn scheme(&self) -> GridScheme {
        self.scheme
    }

    /// Node radii `r_i`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights for `∫₀^{r_max} f(r) dr`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Volume weights `4π w_i r_i²` for integrals over ℝ³ of radial functions.
    pub fn volume_weights(&self) -> &[f64] {
        &self.volume
    }

    /// Physical width `r′(s_i)/N` of the cell around node `i`.
    pub fn cell_widths(&self) -> &[f64] {
        &self.cell
    }

    pub(crate) fn face_coefficients(&self) -> &[f64] {
        &self.face_coef
    }

    pub(crate) fn exp_neg_r(&self) -> &[f64] {
        &self.exp_neg_r
    }

    pub(crate) fn exp_neg_dr(&self) -> &[f64] {
        &self.exp_neg_dr
    }

    pub fn same_as(&self, other: &RadialGrid) -> bool {
        std::ptr::eq(self, other) || self.descriptor() == other.descriptor()
    }

    /// Fractional node index of radius `r` (node `i` sits at index `i`).
    fn index_of(&self, r: f64) -> f64 {
        self.scheme.inverse(self.r_max, r) / self.h - 0.5
    }

    /// Six-point Lagrange interpolation of nodal values at radius `r`.
    /// The even reflection is used below the first node, zero past the last.
    pub fn interpolate(&self, values: &[f64], r: f64) -> f64 {
        let n = self.nodes.len() as isize;
        let r = r.abs();
        if r >= self.r_max {
            return 0.0;
        }
        let x = self.index_of(r);
        let base = x.floor() as isize - 2;
        let sample = |k: isize| -> f64 {
            if k < 0 {
                let m = -1 - k;
                if m < n {
                    values[m as usize]
                } else {
                    0.0
                }
            } else if k < n {
                values[k as usize]
            } else {
                0.0
            }
        };
        let mut acc = 0.0;
        for j in 0..6 {
            let kj = base + j;
            let mut l = 1.0;
            for m in 0..6 {
                if m != j {
                    let km = (base + m) as f64;
                    l *= (x - km) / (kj as f64 - km);
                }
            }
            acc += l * sample(kj);
        }
        acc
    }
}

/// Builds a grid with `node_count` nodes on `(0, r_max]`.
pub fn make_grid(node_count: usize, r_max: f64, scheme: GridScheme) -> Result<Arc<RadialGrid>> {
    if node_count < MIN_NODES {
        return Err(Error::InvalidGrid(format!(
            "node_count = {node_count} is below the minimum of {MIN_NODES}"
        )));
    }
    if !(r_max.is_finite() && r_max > 0.0) {
        return Err(Error::InvalidGrid(format!("r_max = {r_max} must be positive and finite")));
    }

    let n = node_count;
    let h = 1.0 / n as f64;
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut cell = Vec::with_capacity(n);
    for i in 0..n {
        let s = (i as f64 + 0.5) * h;
        let jac = scheme.jacobian(r_max, s);
        let end = if i < END_WEIGHTS.len() {
            END_WEIGHTS[i]
        } else if n - 1 - i < END_WEIGHTS.len() {
            END_WEIGHTS[n - 1 - i]
        } else {
            1.0
        };
        nodes.push(scheme.map(r_max, s));
        weights.push(end * h * jac);
        cell.push(h * jac);
    }
    let volume = nodes
        .iter()
        .zip(&weights)
        .map(|(r, w)| 4.0 * PI * w * r * r)
        .collect();
    let face_coef = (1..=n)
        .map(|k| {
            let s = k as f64 * h;
            let r = scheme.map(r_max, s);
            4.0 * PI * r * r / (scheme.jacobian(r_max, s) * h)
        })
        .collect();
    let exp_neg_r = nodes.iter().map(|r: &f64| (-r).exp()).collect();
    let exp_neg_dr = nodes.windows(2).map(|w| (-(w[1] - w[0])).exp()).collect();

    Ok(Arc::new(RadialGrid {
        scheme,
        r_max,
        h,
        nodes,
        weights,
        volume,
        cell,
        face_coef,
        exp_neg_r,
        exp_neg_dr,
    }))
}

/// Mass parameter triple for one problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mu: f64,
    pub p: f64,
    pub c: f64,
    /// Accepts `p ∈ (2, 10/3)` for inequality experiments.
    pub relaxed: bool,
}

impl ModelParams {
    /// Strict instance: `μ > 0`, `c > 0`, `2 < p < 8/3`.
    pub fn new(mu: f64, p: f64, c: f64) -> Result<Self> {
        Self::build(mu, p, c, false)
    }

    /// Relaxed instance: `2 < p < 10/3`, flagged in every report.
    pub fn relaxed(mu: f64, p: f64, c: f64) -> Result<Self> {
        Self::build(mu, p, c, true)
    }

    fn build(mu: f64, p: f64, c: f64, relaxed: bool) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidParams(format!("mu = {mu} must be positive")));
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParams(format!("c = {c} must be positive")));
        }
        let upper = if relaxed { 10.0 / 3.0 } else { 8.0 / 3.0 };
        if !(p > 2.0 && p < upper) {
            let range = if relaxed { "(2, 10/3)" } else { "(2, 8/3)" };
            return Err(Error::InvalidParams(format!("p = {p} must lie in {range}")));
        }
        Ok(Self { mu, p, c, relaxed })
    }

    pub fn with_mass(&self, c: f64) -> Result<Self> {
        Self::build(self.mu, self.p, c, self.relaxed)
    }
}

/// Samples `u(r_i)` of a radial function on a shared grid.
#[derive(Debug, Clone)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::InvalidGrid(format!(
                "{} values for {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::DegenerateField(format!("non-finite value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_raw(grid: Arc<RadialGrid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.node_count());
        Self { grid, values }
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let n = grid.node_count();
        Self::from_raw(grid, vec![0.0; n])
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at an arbitrary radius by six-point interpolation.
    pub fn eval(&self, r: f64) -> f64 {
        self.grid.interpolate(&self.values, r)
    }

    pub fn check_same_grid(&self, other: &RadialField) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn scale(&self, a: f64) -> RadialField {
        Self::from_raw(self.grid.clone(), self.values.iter().map(|v| a * v).collect())
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: f64, other: &RadialField) -> Result<RadialField> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| x + a * y)
            .collect();
        Ok(Self::from_raw(self.grid.clone(), values))
    }

    pub fn add(&self, other: &RadialField) -> Result<RadialField> {
        self.axpy(1.0, other)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    /// Two-column text: header `# sbp-field node_count=.. r_max=.. scheme=..`,
    /// then `r u` rows at 17 significant digits.
    pub fn to_text(&self) -> String {
        let d = self.grid.descriptor();
        let mut out = String::with_capacity(48 * self.values.len() + 96);
        let _ = writeln!(
            out,
            "# sbp-field node_count={} r_max={:.16e} scheme={}",
            d.node_count,
            d.r_max,
            d.scheme.as_str()
        );
        for (r, u) in self.grid.nodes().iter().zip(&self.values) {
            let _ = writeln!(out, "{r:.16e} {u:.16e}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<RadialField> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty field file".into()))?;
        let rest = header
            .strip_prefix("# sbp-field")
            .ok_or_else(|| Error::Parse("missing `# sbp-field` header".into()))?;
        let (mut count, mut r_max, mut scheme) = (None, None, None);
        for token in rest.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("malformed header token `{token}`")))?;
            match key {
                "node_count" => count = Some(parse_num::<usize>(value)?),
                "r_max" => r_max = Some(parse_num::<f64>(value)?),
                "scheme" => scheme = Some(value.parse::<GridScheme>()?),
                other => return Err(Error::Parse(format!("unknown header key `{other}`"))),
            }
        }
        let grid = make_grid(
            count.ok_or_else(|| Error::Parse("header lacks node_count".into()))?,
            r_max.ok_or_else(|| Error::Parse("header lacks r_max".into()))?,
            scheme.ok_or_else(|| Error::Parse("header lacks scheme".into()))?,
        )?;
        let mut values = Vec::with_capacity(grid.node_count());
        for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let mut cols = line.split_whitespace();
            let r: f64 = parse_num(cols.next().unwrap_or(""))?;
            let u: f64 = parse_num(
                cols.next()
                    .ok_or_else(|| Error::Parse(format!("row {i} has one column")))?,
            )?;
            match grid.nodes().get(i) {
                Some(&node) if node.to_bits() == r.to_bits() => values.push(u),
                Some(&node) => {
                    return Err(Error::Parse(format!(
                        "row {i}: radius {r:e} does not match grid node {node:e}"
                    )))
                }
                None => return Err(Error::Parse("more rows than nodes".into())),
            }
        }
        RadialField::new(grid, values)
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse::<T>()
        .map_err(|_| Error::Parse(format!("cannot parse `{s}`")))
}

/// Normalized Gaussian `√c (πσ²)^{-3/4} e^{-r²/(2σ²)}` with mass `c`.
pub fn make_gaussian(c: f64, sigma: f64, grid: &Arc<RadialGrid>) -> Result<RadialField> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParams(format!("sigma = {sigma} must be positive")));
    }
    if !(c.is_finite() && c >= 0.0) {
        return Err(Error::InvalidParams(format!("c = {c} must be nonnegative")));
    }
    let amp = c.sqrt() * (PI * sigma * sigma).powf(-0.75);
    RadialField::from_fn(grid.clone(), |r| amp * (-r * r / (2.0 * sigma * sigma)).exp())
}

/// `‖u‖₂² = 4π ∫ u² r² dr`.
pub fn mass(u: &RadialField) -> f64 {
    u.grid
        .volume_weights()
        .iter()
        .zip(&u.values)
        .map(|(w, v)| w * v * v)
        .sum()
}

/// L² pairing `4π ∫ u v r² dr`.
pub fn inner(u: &RadialField, v: &RadialField) -> Result<f64> {
    u.check_same_grid(v)?;
    Ok(u.grid
        .volume_weights()
        .iter()
        .zip(u.values.iter().zip(&v.values))
        .map(|(w, (a, b))| w * a * b)
        .sum())
}

/// `A(u) = ‖∇u‖₂²` from staggered differences.
pub fn grad_norm_sq(u: &RadialField) -> f64 {
    let v = &u.values;
    let coef = u.grid.face_coefficients();
    let n = v.len();
    let mut acc = 0.0;
    for k in 0..n {
        let next = if k + 1 < n { v[k + 1] } else { 0.0 };
        let d = next - v[k];
        acc += coef[k] * d * d;
    }
    acc
}

/// `A(u)` over interior faces only, with no boundary ghost. Returns the sum and
/// the radius of the outermost face used.
pub(crate) fn grad_norm_sq_open(u: &RadialField) -> (f64, f64) {
    let v = &u.values;
    let coef = u.grid.face_coefficients();
    let n = v.len();
    let mut acc = 0.0;
    for k in 0..n - 1 {
        let d = v[k + 1] - v[k];
        acc += coef[k] * d * d;
    }
    let h = 1.0 / n as f64;
    (acc, u.grid.scheme.map(u.grid.r_max, (n - 1) as f64 * h))
}

/// `∫|u|^q dx`.
pub fn lp_power(u: &RadialField, q: f64) -> f64 {
    u.grid
        .volume_weights()
        .iter()
        .zip(&u.values)
        .map(|(w, v)| w * v.abs().powf(q))
        .sum()
}

/// Rescales `u` onto the sphere `‖u‖₂² = c`.
pub fn normalize_mass(u: &RadialField, c: f64) -> Result<RadialField> {
    let m = mass(u);
    if !(m > 1e-14) {
        return Err(Error::DegenerateField(format!(
            "cannot normalize a field of mass {m:e}"
        )));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::InvalidParams(format!("target mass c = {c} must be positive")));
    }
    Ok(u.scale((c / m).sqrt()))
}

/// `∂(A/2)/∂u_k`, i.e. the discrete `−Δu` multiplied by the volume weight.
pub(crate) fn stiffness_apply(u: &RadialField) -> Vec<f64> {
    let v = &u.values;
    let coef = u.grid.face_coefficients();
    let n = v.len();
    let mut out = vec![0.0; n];
    for k in 0..n {
        let next = if k + 1 < n { v[k + 1] } else { 0.0 };
        let flux = coef[k] * (v[k] - next);
        out[k] += flux;
        if k + 1 < n {
            out[k + 1] -= flux;
        }
    }
    out
}

/// Solves `(L + shift·W) y = rhs` for the tridiagonal stiffness `L`.
pub(crate) fn solve_shifted_stiffness(grid: &RadialGrid, shift: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let coef = grid.face_coefficients();
    let vol = grid.volume_weights();
    // Row k: -coef[k-1] y[k-1] + (coef[k-1] + coef[k] + shift W_k) y[k] - coef[k] y[k+1].
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    for k in 0..n {
        let lower = if k > 0 { -coef[k - 1] } else { 0.0 };
        let diag = (if k > 0 { coef[k - 1] } else { 0.0 }) + coef[k] + shift * vol[k];
        let upper = if k + 1 < n { -coef[k] } else { 0.0 };
        let (cp, dp) = if k == 0 {
            (0.0, 0.0)
        } else {
            (c_prime[k - 1], d_prime[k - 1])
        };
        let denom = diag - lower * cp;
        c_prime[k] = upper / denom;
        d_prime[k] = (rhs[k] - lower * dp) / denom;
    }
    let mut y = vec![0.0; n];
    y[n - 1] = d_prime[n - 1];
    for k in (0..n - 1).rev() {
        y[k] = d_prime[k] - c_prime[k] * y[k + 1];
    }
    y
}

/// `t^{3/2}` pre-factor times resampling of `u(factor · r)`, shared by the
/// dilation and the scaling paths.
pub(crate) fn resample_scaled(u: &RadialField, amplitude: f64, factor: f64) -> Result<RadialField> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(Error::InvalidParams(format!("scale factor {factor} must be positive")));
    }
    let grid = u.grid.clone();
    if factor < 1.0 {
        // Anything of u beyond factor·r_max is pushed off the grid.
        let cut = factor * grid.r_max();
        let total = mass(u);
        let lost: f64 = grid
            .nodes()
            .iter()
            .zip(grid.volume_weights())
            .zip(&u.values)
            .filter(|((r, _), _)| **r > cut)
            .map(|((_, w), v)| w * v * v)
            .sum();
        let rel = if total > 0.0 { lost / total } else { 0.0 };
        if rel > 1e-10 {
            return Err(Error::GridEscape { factor, lost: rel });
        }
    }
    let values = grid
        .nodes()
        .iter()
        .map(|&r| amplitude * grid.interpolate(&u.values, factor * r))
        .collect();
    Ok(RadialField::from_raw(grid, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_small_grid_weights_sum_to_length() {
        let g = make_grid(16, 1.0, GridScheme::Uniform).unwrap();
        assert_eq!(g.node_count(), 16);
        let sum: f64 = g.weights().iter().sum();
        assert_relative_eq!(sum, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn graded_grid_clusters_near_origin() {
        let g = make_grid(2048, 40.0, GridScheme::Graded).unwrap();
        assert!(g.nodes()[0] < 40.0 / 2048.0);
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
        assert!(g.weights().iter().all(|w| *w > 0.0));
        let sum: f64 = g.weights().iter().sum();
        assert_relative_eq!(sum, 40.0, max_relative = 1e-12);
        assert!(*g.nodes().last().unwrap() <= 40.0);
    }

    #[test]
    fn quadrature_of_decaying_exponential() {
        let g = make_grid(512, 30.0, GridScheme::Uniform).unwrap();
        let q: f64 = g
            .nodes()
            .iter()
            .zip(g.weights())
            .map(|(r, w)| w * (-r).exp())
            .sum();
        assert!((q - (1.0 - (-30.0f64).exp())).abs() < 1e-8, "q = {q}");
    }

    #[test]
    fn grid_construction_errors() {
        assert!(matches!(make_grid(15, 1.0, GridScheme::Uniform), Err(Error::InvalidGrid(_))));
        assert!(matches!(make_grid(64, 0.0, GridScheme::Graded), Err(Error::InvalidGrid(_))));
        assert!(matches!(make_grid(64, f64::NAN, GridScheme::Graded), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn gaussian_mass_and_kinetic_term() {
        let g = make_grid(2048, 40.0, GridScheme::Graded).unwrap();
        let u = make_gaussian(1.0, 1.0, &g).unwrap();
        assert_relative_eq!(mass(&u), 1.0, max_relative = 1e-9);
        assert!((grad_norm_sq(&u) - 1.5).abs() < 1e-4);
        let w = make_gaussian(0.25, 2.0, &g).unwrap();
        assert!((grad_norm_sq(&w) - 0.09375).abs() < 1e-5);
        let two = make_gaussian(2.0, 1.0, &g).unwrap();
        assert_relative_eq!(mass(&two), 2.0, max_relative = 1e-9);
    }

    #[test]
    fn sharp_cutoff_ball_volume() {
        let g = make_grid(4096, 4.0, GridScheme::Uniform).unwrap();
        let u = RadialField::from_fn(g, |r| if r <= 1.0 { 1.0 } else { 0.0 }).unwrap();
        // A step leaves an O(h) quadrature error.
        assert!((mass(&u) - 4.0 * PI / 3.0).abs() < 1e-2);
    }

    #[test]
    fn zero_field_functionals_vanish() {
        let g = make_grid(64, 10.0, GridScheme::Graded).unwrap();
        let z = RadialField::zeros(g);
        assert_eq!(mass(&z), 0.0);
        assert_eq!(grad_norm_sq(&z), 0.0);
        assert_eq!(lp_power(&z, 3.3), 0.0);
        assert_eq!(inner(&z, &z).unwrap(), 0.0);
    }

    #[test]
    fn lp_power_two_is_mass() {
        let g = make_grid(512, 20.0, GridScheme::Graded).unwrap();
        let u = make_gaussian(1.3, 1.1, &g).unwrap();
        assert_relative_eq!(lp_power(&u, 2.0), mass(&u), max_relative = 1e-13);
    }

    #[test]
    fn sextic_power_of_gaussian_against_refined_grid() {
        let coarse = make_grid(2048, 40.0, GridScheme::Graded).unwrap();
        let fine = make_grid(20480, 40.0, GridScheme::Graded).unwrap();
        let a = lp_power(&make_gaussian(1.0, 1.0, &coarse).unwrap(), 6.0);
        let b = lp_power(&make_gaussian(1.0, 1.0, &fine).unwrap(), 6.0);
        assert_relative_eq!(a, b, max_relative = 1e-10);
        // closed form c³ π^{-3} σ^{-6} 3^{-3/2}
        assert_relative_eq!(b, PI.powi(-3) * 3f64.powf(-1.5), max_relative = 1e-10);
    }

    #[test]
    fn normalize_mass_cases() {
        let g = make_grid(512, 20.0, GridScheme::Graded).unwrap();
        let u = make_gaussian(4.0, 1.0, &g).unwrap();
        let v = normalize_mass(&u, 1.0).unwrap();
        for (a, b) in v.values().iter().zip(u.values()) {
            assert_relative_eq!(*a, b / 2.0, max_relative = 1e-9);
        }
        let w = normalize_mass(&v, 1.0).unwrap();
        for (a, b) in w.values().iter().zip(v.values()) {
            assert!((a - b).abs() <= 1e-14 * b.abs().max(1e-300));
        }
        let tiny = u.scale(1e-8 / 2.0);
        assert!(matches!(normalize_mass(&tiny, 1.0), Err(Error::DegenerateField(_))));
    }

    #[test]
    fn inner_requires_shared_grid() {
        let a = make_grid(64, 10.0, GridScheme::Graded).unwrap();
        let b = make_grid(64, 11.0, GridScheme::Graded).unwrap();
        let u = make_gaussian(1.0, 1.0, &a).unwrap();
        let v = make_gaussian(1.0, 1.0, &b).unwrap();
        assert!(matches!(inner(&u, &v), Err(Error::GridMismatch)));
        // Equal descriptors are the same grid.
        let c = make_grid(64, 10.0, GridScheme::Graded).unwrap();
        let w = make_gaussian(1.0, 1.0, &c).unwrap();
        assert_relative_eq!(inner(&u, &w).unwrap(), mass(&u), max_relative = 1e-12);
    }

    #[test]
    fn stiffness_is_half_gradient_of_kinetic_term() {
        let g = make_grid(256, 15.0, GridScheme::Graded).unwrap();
        let u = RadialField::from_fn(g.clone(), |r| (1.0 + r) * (-r * r / 3.0).exp()).unwrap();
        let s = stiffness_apply(&u);
        // A is quadratic: A(u) = 2·½ uᵀLu = Σ u_k s_k.
        let a: f64 = u.values().iter().zip(&s).map(|(x, y)| x * y).sum();
        assert_relative_eq!(a, grad_norm_sq(&u), max_relative = 1e-12);
    }

    #[test]
    fn shifted_solve_inverts_operator() {
        let g = make_grid(128, 10.0, GridScheme::Graded).unwrap();
        let u = make_gaussian(1.0, 1.5, &g).unwrap();
        let mut rhs = stiffness_apply(&u);
        for (r, (w, v)) in rhs.iter_mut().zip(g.volume_weights().iter().zip(u.values())) {
            *r += 0.3 * w * v;
        }
        let y = solve_shifted_stiffness(&g, 0.3, &rhs);
        for (a, b) in y.iter().zip(u.values()) {
            assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn interpolation_reproduces_nodes_and_smooth_values() {
        let g = make_grid(1024, 20.0, GridScheme::Graded).unwrap();
        let u = RadialField::from_fn(g.clone(), |r| (-r * r / 2.0).exp()).unwrap();
        for &r in g.nodes().iter().step_by(97) {
            assert_relative_eq!(u.eval(r), (-r * r / 2.0).exp(), max_relative = 1e-12);
        }
        for r in [0.0, 0.0123, 0.77, 2.5, 4.0] {
            assert!((u.eval(r) - (-r * r / 2.0f64).exp()).abs() < 1e-9, "r = {r}");
        }
        assert_eq!(u.eval(25.0), 0.0);
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let g = make_grid(64, 12.5, GridScheme::Graded).unwrap();
        let u = RadialField::from_fn(g, |r| (r.sin() + 0.1) / (1.0 + r * r)).unwrap();
        let back = RadialField::from_text(&u.to_text()).unwrap();
        assert_eq!(back.grid().descriptor(), u.grid().descriptor());
        for (a, b) in back.values().iter().zip(u.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn text_parse_rejects_bad_input() {
        assert!(RadialField::from_text("").is_err());
        assert!(RadialField::from_text("r u\n").is_err());
        let g = make_grid(16, 1.0, GridScheme::Uniform).unwrap();
        let mut text = RadialField::zeros(g).to_text();
        text = text.replacen("3.1250000000000000e-2", "3.1250000000000010e-2", 1);
        assert!(RadialField::from_text(&text).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(1.0, 2.5, 1.0).is_ok());
        assert!(ModelParams::new(1.0, 2.7, 1.0).is_err());
        assert!(ModelParams::relaxed(1.0, 3.0, 1.0).unwrap().relaxed);
        assert!(ModelParams::relaxed(1.0, 3.4, 1.0).is_err());
        assert!(ModelParams::new(0.0, 2.5, 1.0).is_err());
        assert!(ModelParams::new(1.0, 2.5, -1.0).is_err());
        assert!(ModelParams::new(1.0, 2.0, 1.0).is_err());
    }
}
