//! Dilations, the fiber map and the β-family of scaling paths.
//!
//! # Fiber map
//!
//! The mass-preserving dilation is `u^t(x) = t^{3/2} u(t x)`, and
//!
//! ```text
//! Φ_u(t) = I(u^t) = (t²/2)A + (t/4)[H − Y_{1/t}] − (μ t^{3(p−2)/2}/p)C − (t⁶/6)D
//! ```
//!
//! with `Y_m` the Yukawa double integral at screening rate `m`. Since
//! `dY_m/dm = −R/4π`, `Φ′_u(1) = Q(u)`.
//!
//! # Scaling paths
//!
//! For `β ∈ ℝ` the path `u_θ(x) = θ^{(1+3β)/2} u(θ^β x)` carries mass `θ c`.
//! With `f(θ) = I(u_θ) − θ I(u)`:
//!
//! ```text
//! f(θ) = ½(θ^{1+2β} − θ)A
//!      + ¼[θ^{2+β}(H − Y_{θ^{−β}}) − θ(H − Y₁)]
//!      − (μ/p)(θ^{(1+3β)p/2 − 3β} − θ)C
//!      − (1/6)(θ^{3(1+2β)} − θ)D
//!
//! f′(1) = βA + ¼[(1+β)B − (β/4π)R]
//!       − (μ/p)((1+3β)p/2 − 3β − 1)C − (1/6)(3(1+2β) − 1)D
//! ```
//!
//! `R` is the raw exponential double integral, so `E = R/16π`. Both values
//! are assembled from the scalars of `u` and one Yukawa evaluation; the
//! resampled path field is kept as an independent check.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{self, resample_scaled, ModelParams, RadialField};
use crate::functional::{energy, EnergyBreakdown};
use crate::kernels::{coulomb_energy, yukawa_energy};

/// `u^t(x) = t^{3/2} u(t x)` resampled on the grid of `u`.
pub fn dilate(u: &RadialField, t: f64) -> Result<RadialField> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidParams(format!("dilation t = {t} must be positive")));
    }
    if t == 1.0 {
        return Ok(u.clone());
    }
    resample_scaled(u, t.powf(1.5), t)
}

/// Scalars of `u` that the fiber map and the scaling paths are built from.
#[derive(Debug, Clone, Copy)]
struct Scalars {
    br: EnergyBreakdown,
    h: f64,
}

impl Scalars {
    fn of(u: &RadialField, params: &ModelParams) -> Self {
        Self { br: energy(u, params), h: coulomb_energy(u) }
    }

    /// `H − Y_m`.
    fn screened(&self, u: &RadialField, m: f64) -> Result<f64> {
        if m == 1.0 {
            return Ok(self.br.b);
        }
        Ok(self.h - yukawa_energy(u, m)?)
    }

    fn fiber(&self, u: &RadialField, t: f64, params: &ModelParams) -> Result<f64> {
        let (mu, p) = (params.mu, params.p);
        let b = &self.br;
        Ok(0.5 * t * t * b.a + 0.25 * t * self.screened(u, 1.0 / t)?
            - mu * t.powf(1.5 * (p - 2.0)) / p * b.c
            - t.powi(6) / 6.0 * b.d)
    }

    fn path(&self, u: &RadialField, theta: f64, beta: f64, params: &ModelParams) -> Result<f64> {
        if theta == 1.0 {
            return Ok(0.0);
        }
        let (mu, p) = (params.mu, params.p);
        let b = &self.br;
        let kin = 0.5 * (theta.powf(1.0 + 2.0 * beta) - theta) * b.a;
        let nl = 0.25
            * (theta.powf(2.0 + beta) * self.screened(u, theta.powf(-beta))? - theta * b.b);
        let cp = mu / p * (theta.powf((1.0 + 3.0 * beta) * p / 2.0 - 3.0 * beta) - theta) * b.c;
        let sx = (theta.powf(3.0 * (1.0 + 2.0 * beta)) - theta) * b.d / 6.0;
        Ok(kin + nl - cp - sx)
    }
}

fn check_t(t: f64, what: &str) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("{what} = {t} must be positive")))
    }
}

/// `Φ_u(t)`.
pub fn fiber_value(u: &RadialField, t: f64, params: &ModelParams) -> Result<f64> {
    check_t(t, "t")?;
    Scalars::of(u, params).fiber(u, t, params)
}

/// `Φ′_u(1) = Q(u)`.
pub fn fiber_derivative_at_1(u: &RadialField, params: &ModelParams) -> f64 {
    energy(u, params).q
}

/// Samples of `Φ_u` on an increasing grid of `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberScan {
    pub t_values: Vec<f64>,
    pub phi_values: Vec<f64>,
    pub q_at_1: f64,
    /// Smallest `t` at which the scan has a discrete local minimum.
    pub argmin_local: Option<f64>,
}

/// First interior index `i` with `Φ_i − Φ_{i−1} ≤ 0 < Φ_{i+1} − Φ_i`.
pub fn discrete_local_min(values: &[f64]) -> Option<usize> {
    (1..values.len().saturating_sub(1))
        .find(|&i| values[i] - values[i - 1] <= 0.0 && values[i + 1] - values[i] > 0.0)
}

/// `n` equally spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Evaluates `Φ_u` at each of `t_values`.
pub fn fiber_scan(u: &RadialField, params: &ModelParams, t_values: &[f64]) -> Result<FiberScan> {
    if t_values.is_empty() {
        return Err(Error::InvalidParams("empty t grid".into()));
    }
    for w in t_values.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidParams("t values must be strictly increasing".into()));
        }
    }
    for &t in t_values {
        check_t(t, "t")?;
    }
    let s = Scalars::of(u, params);
    let phi_values = t_values
        .iter()
        .map(|&t| s.fiber(u, t, params))
        .collect::<Result<Vec<_>>>()?;
    let argmin_local = discrete_local_min(&phi_values).map(|i| t_values[i]);
    Ok(FiberScan { t_values: t_values.to_vec(), phi_values, q_at_1: s.br.q, argmin_local })
}

impl FiberScan {
    /// True when the scan point closest to `t` is a discrete local minimum.
    pub fn is_local_min_at(&self, t: f64) -> bool {
        let Some(i) = self
            .t_values
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
        else {
            return false;
        };
        i > 0
            && i + 1 < self.phi_values.len()
            && self.phi_values[i] <= self.phi_values[i - 1]
            && self.phi_values[i] < self.phi_values[i + 1]
    }

    /// `t,phi` rows.
    pub fn to_csv(&self) -> String {
        csv("t,phi", &self.t_values, &self.phi_values)
    }

    /// Scalars of the scan as a JSON object.
    pub fn sidecar_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&serde_json::json!({
            "q_at_1": self.q_at_1,
            "argmin_local": self.argmin_local,
            "points": self.t_values.len(),
        }))?)
    }
}

fn csv(header: &str, x: &[f64], y: &[f64]) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for (a, b) in x.iter().zip(y) {
        let _ = writeln!(out, "{a:.16e},{b:.16e}");
    }
    out
}

/// `u_θ(x) = θ^{(1+3β)/2} u(θ^β x)` resampled on the grid of `u`.
pub fn scaling_path_field(u: &RadialField, theta: f64, beta: f64) -> Result<RadialField> {
    check_t(theta, "theta")?;
    if !beta.is_finite() {
        return Err(Error::InvalidParams(format!("beta = {beta} must be finite")));
    }
    if theta == 1.0 {
        return Ok(u.clone());
    }
    let factor = theta.powf(beta);
    let amplitude = theta.powf(0.5 * (1.0 + 3.0 * beta));
    if factor == 1.0 {
        return Ok(u.scale(amplitude));
    }
    resample_scaled(u, amplitude, factor)
}

/// `f(θ, u) = I(u_θ) − θ I(u)` from the scaling laws.
pub fn scaling_path_value(
    u: &RadialField,
    theta: f64,
    beta: f64,
    params: &ModelParams,
) -> Result<f64> {
    check_t(theta, "theta")?;
    Scalars::of(u, params).path(u, theta, beta, params)
}

/// Closed-form `f′_θ(1, u)`.
pub fn scaling_path_derivative_at_1(u: &RadialField, beta: f64, params: &ModelParams) -> f64 {
    derivative_from_breakdown(&energy(u, params), beta, params)
}

pub(crate) fn derivative_from_breakdown(b: &EnergyBreakdown, beta: f64, params: &ModelParams) -> f64 {
    let (mu, p) = (params.mu, params.p);
    let r_raw = 16.0 * std::f64::consts::PI * b.e;
    beta * b.a + 0.25 * ((1.0 + beta) * b.b - beta / (4.0 * std::f64::consts::PI) * r_raw)
        - mu / p * ((1.0 + 3.0 * beta) * p / 2.0 - 3.0 * beta - 1.0) * b.c
        - (3.0 * (1.0 + 2.0 * beta) - 1.0) / 6.0 * b.d
}

/// Samples of `f(·, u)` along one scaling path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPathProbe {
    pub beta: f64,
    pub theta_values: Vec<f64>,
    pub f_values: Vec<f64>,
    pub fprime_at_1: f64,
}

/// Evaluates `f(θ, u)` on `theta_values` for one `β`.
pub fn scaling_path_probe(
    u: &RadialField,
    beta: f64,
    params: &ModelParams,
    theta_values: &[f64],
) -> Result<ScalingPathProbe> {
    let s = Scalars::of(u, params);
    let f_values = theta_values
        .iter()
        .map(|&th| {
            check_t(th, "theta")?;
            s.path(u, th, beta, params)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalingPathProbe {
        beta,
        theta_values: theta_values.to_vec(),
        f_values,
        fprime_at_1: derivative_from_breakdown(&s.br, beta, params),
    })
}

impl ScalingPathProbe {
    /// `theta,f` rows.
    pub fn to_csv(&self) -> String {
        csv("theta,f", &self.theta_values, &self.f_values)
    }

    pub fn sidecar_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&serde_json::json!({
            "beta": self.beta,
            "fprime_at_1": self.fprime_at_1,
            "points": self.theta_values.len(),
        }))?)
    }
}

/// Mass ratio `‖u_θ‖₂² / (θ‖u‖₂²)` of the resampled path field.
pub fn path_mass_ratio(u: &RadialField, theta: f64, beta: f64) -> Result<f64> {
    let v = scaling_path_field(u, theta, beta)?;
    Ok(field::mass(&v) / (theta * field::mass(u)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{grad_norm_sq, lp_power, make_gaussian, make_grid, GridScheme};

    fn setup() -> (RadialField, ModelParams) {
        let g = make_grid(2048, 40.0, GridScheme::Graded).unwrap();
        (make_gaussian(1.0, 1.0, &g).unwrap(), ModelParams::new(1.0, 2.5, 1.0).unwrap())
    }

    #[test]
    fn dilation_scaling_laws() {
        let g = make_grid(4096, 40.0, GridScheme::Graded).unwrap();
        let u = make_gaussian(1.0, 1.0, &g).unwrap();
        assert_eq!(dilate(&u, 1.0).unwrap().values(), u.values());
        for t in [0.7, 2.0] {
            let v = dilate(&u, t).unwrap();
            assert!((field::mass(&v) / field::mass(&u) - 1.0).abs() < 1e-8);
            assert!((grad_norm_sq(&v) / (t * t * grad_norm_sq(&u)) - 1.0).abs() < 1e-6);
            assert!((lp_power(&v, 6.0) / (t.powi(6) * lp_power(&u, 6.0)) - 1.0).abs() < 1e-6);
        }
        assert!(matches!(dilate(&u, 0.05), Err(Error::GridEscape { .. })));
        assert!(dilate(&u, 0.0).is_err());
    }

    #[test]
    fn fiber_endpoints() {
        let (u, p) = setup();
        let i = energy(&u, &p).i;
        assert!((fiber_value(&u, 1.0, &p).unwrap() - i).abs() <= 1e-12 * i.abs());
        assert!(fiber_value(&u, 0.05, &p).unwrap() < 0.0);
        let u = RadialField::from_fn(u.grid().clone(), |r| (-r * r / 2.0).exp()).unwrap();
        let (f4, f8) = (fiber_value(&u, 4.0, &p).unwrap(), fiber_value(&u, 8.0, &p).unwrap());
        assert!(f8 < f4 && f4 < 0.0);
    }

    #[test]
    fn fiber_value_matches_resampled_energy() {
        let (u, p) = setup();
        for t in [0.8, 1.3] {
            let direct = energy(&dilate(&u, t).unwrap(), &p).i;
            let phi = fiber_value(&u, t, &p).unwrap();
            assert!((direct - phi).abs() < 1e-6 * phi.abs().max(1.0), "{t}: {direct} vs {phi}");
        }
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let (u, p) = setup();
        let h = 1e-4;
        let fd = (fiber_value(&u, 1.0 + h, &p).unwrap() - fiber_value(&u, 1.0 - h, &p).unwrap()) / (2.0 * h);
        let q = fiber_derivative_at_1(&u, &p);
        assert!((fd - q).abs() < 1e-5 * q.abs(), "{fd} vs {q}");
    }

    #[test]
    fn local_min_detection() {
        assert_eq!(discrete_local_min(&[3.0, 2.0, 1.0, 2.0, 0.5, 4.0]), Some(2));
        assert_eq!(discrete_local_min(&[1.0, 2.0, 3.0]), None);
        assert_eq!(discrete_local_min(&[2.0, 1.0, 1.0, 3.0]), Some(2));
        let (u, p) = setup();
        let scan = fiber_scan(&u, &p, &linspace(0.1, 3.0, 30)).unwrap();
        assert!(scan.phi_values.iter().all(|v| v.is_finite()));
        assert!(scan.to_csv().starts_with("t,phi\n"));
        assert_eq!(scan.to_csv().lines().count(), 31);
        assert!(fiber_scan(&u, &p, &[1.0, 0.9]).is_err());
    }

    #[test]
    fn path_field_and_value() {
        let (u, p) = setup();
        assert_eq!(scaling_path_field(&u, 1.0, 0.3).unwrap().values(), u.values());
        let v = scaling_path_field(&u, 1.7, 0.0).unwrap();
        assert_eq!(v.values(), u.scale(1.7f64.sqrt()).values());
        assert!((path_mass_ratio(&u, 1.3, 0.5).unwrap() - 1.0).abs() < 1e-8);
        let a = grad_norm_sq(&scaling_path_field(&u, 1.3, 0.5).unwrap());
        assert!((a / (1.3f64.powf(2.0) * grad_norm_sq(&u)) - 1.0).abs() < 1e-6);

        assert_eq!(scaling_path_value(&u, 1.0, 0.7, &p).unwrap(), 0.0);
        let direct = energy(&scaling_path_field(&u, 1.3, 0.5).unwrap(), &p).i - 1.3 * energy(&u, &p).i;
        let f = scaling_path_value(&u, 1.3, 0.5, &p).unwrap();
        assert!((direct - f).abs() < 1e-4 * f.abs(), "{direct} vs {f}");
    }

    #[test]
    fn beta_zero_path_reduces_to_amplitude_formula() {
        let (u, p) = setup();
        let b = energy(&u, &p);
        let th: f64 = 1.4;
        let expect = (th * th - th) * b.b / 4.0
            - p.mu / p.p * (th.powf(p.p / 2.0) - th) * b.c
            - (th.powi(3) - th) * b.d / 6.0;
        let f = scaling_path_value(&u, th, 0.0, &p).unwrap();
        assert!((f - expect).abs() < 1e-12 * expect.abs(), "{f} vs {expect}");
    }

    #[test]
    fn path_derivative_matches_difference_quotient_and_is_affine() {
        let (u, p) = setup();
        let h = 1e-4;
        let mut vals = Vec::new();
        for beta in [-1.0, -1.0 / 3.0, 0.0, 0.5, 1.0] {
            let fd = (scaling_path_value(&u, 1.0 + h, beta, &p).unwrap()
                - scaling_path_value(&u, 1.0 - h, beta, &p).unwrap())
                / (2.0 * h);
            let exact = scaling_path_derivative_at_1(&u, beta, &p);
            assert!((fd - exact).abs() < 1e-5 * exact.abs(), "beta {beta}: {fd} vs {exact}");
            vals.push((beta, exact));
        }
        let (intercept, slope) = (vals[2].1, vals[4].1 - vals[2].1);
        for (beta, v) in vals {
            assert!((intercept + slope * beta - v).abs() < 1e-12 * v.abs().max(1.0));
        }
    }
}
