//! Energy, gradient, Pohozaev functional and multiplier of a radial field.
//!
//! # Formulas
//!
//! ```text
//! A = ∫|∇u|²    B = ∫φ_u u²    C = ∫|u|^p    D = ∫|u|⁶
//! H = (1/4π)∫∫ u²u²/|x−y|      E = (1/16π)∫∫ e^{−|x−y|} u²u²
//!
//! T = B/4 − μC/p − D/6         I = A/2 + T
//! Q = A + B/4 − E − (3μ(p−2)/(2p)) C − D
//! λ = (A + B − μC − D) / ‖u‖₂²
//! ```
//!
//! The Nehari and Pohozaev residuals of a candidate `(u, λ)` with `c = ‖u‖₂²`
//! are
//!
//! ```text
//! N = A + B − λc − μC − D
//! P = ½A + (5/4)B + E − (3λ/2)c − (3μ/p)C − ½D
//! ```
//!
//! and `Q = (3/2)N − P` for every `λ`.
//!
//! The gradient is the L² gradient on the grid: `g_i = (∂I/∂u_i)/W_i` with
//! `W_i` the volume weights, so `⟨g, v⟩ = dI(u)[v]` holds exactly for the
//! discrete energy.

use serde::{Deserialize, Serialize};

use crate::constants::{h_c, ThresholdConstants};
use crate::error::{Error, Result};
use crate::field::{self, stiffness_apply, ModelParams, RadialField};
use crate::kernels::{nonlocal_terms, NonlocalTerms};

/// All scalar functionals of one field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    /// Nehari multiplier; zero for the zero field.
    pub lambda: f64,
    /// `h_c(√A)` when threshold constants are supplied.
    pub h_bound: Option<f64>,
    /// `‖u‖₂²`, kept for the identity residuals.
    #[serde(skip)]
    pub mass: f64,
}

impl EnergyBreakdown {
    /// Magnitude scale `A + B + C + D` for relative residuals.
    pub fn scale(&self) -> f64 {
        self.a + self.b + self.c + self.d
    }

    /// `|Q| / max(scale, floor)`.
    pub fn relative_q(&self) -> f64 {
        self.q.abs() / self.scale().max(SCALE_FLOOR)
    }

    /// `(N, P)` for the multiplier `lambda`.
    pub fn residuals(&self, params: &ModelParams, lambda: f64) -> (f64, f64) {
        let (mu, p) = (params.mu, params.p);
        let nehari = self.a + self.b - lambda * self.mass - mu * self.c - self.d;
        let pohozaev = 0.5 * self.a + 1.25 * self.b + self.e
            - 1.5 * lambda * self.mass
            - 3.0 * mu / p * self.c
            - 0.5 * self.d;
        (nehari, pohozaev)
    }
}

/// Smallest scale used in relative residuals.
pub const SCALE_FLOOR: f64 = 1e-12;

fn assemble(u: &RadialField, mu: f64, p: f64, nl: &NonlocalTerms) -> EnergyBreakdown {
    let a = field::grad_norm_sq(u);
    let c = field::lp_power(u, p);
    let d = field::lp_power(u, 6.0);
    let mass = field::mass(u);
    let e = nl.e();
    let t = nl.b / 4.0 - mu * c / p - d / 6.0;
    let q = a + nl.b / 4.0 - e - 3.0 * mu * (p - 2.0) / (2.0 * p) * c - d;
    let lambda = if mass > 0.0 {
        (a + nl.b - mu * c - d) / mass
    } else {
        0.0
    };
    EnergyBreakdown {
        a,
        b: nl.b,
        c,
        d,
        h: nl.h,
        e,
        t,
        i: a / 2.0 + t,
        q,
        lambda,
        h_bound: None,
        mass,
    }
}

/// Every scalar functional of `u`.
pub fn energy(u: &RadialField, params: &ModelParams) -> EnergyBreakdown {
    assemble(u, params.mu, params.p, &nonlocal_terms(u))
}

/// [`energy`] with `h_bound = h_c(√A)` filled in for the mass of `u`.
pub fn energy_with_bound(
    u: &RadialField,
    params: &ModelParams,
    consts: &ThresholdConstants,
) -> EnergyBreakdown {
    let mut b = energy(u, params);
    b.h_bound = Some(h_c(b.a.sqrt(), params.c, consts));
    b
}

/// `∂I/∂u_i` (not divided by the volume weights) and the breakdown.
pub(crate) fn energy_and_partials(
    u: &RadialField,
    params: &ModelParams,
) -> (EnergyBreakdown, Vec<f64>) {
    let nl = nonlocal_terms(u);
    let br = assemble(u, params.mu, params.p, &nl);
    let mut g = stiffness_apply(u);
    let w = u.grid().volume_weights();
    for (i, gi) in g.iter_mut().enumerate() {
        let v = u.values()[i];
        let local = nl.phi[i] * v - params.mu * v.abs().powf(params.p - 2.0) * v - v.powi(5);
        *gi += w[i] * local;
    }
    (br, g)
}

/// L² gradient of `I` (the Euler–Lagrange map without the `λu` term).
pub fn gradient(u: &RadialField, params: &ModelParams) -> RadialField {
    let (_, g) = energy_and_partials(u, params);
    let w = u.grid().volume_weights();
    let values = g.iter().zip(w).map(|(g, w)| g / w).collect();
    RadialField::from_raw(u.grid().clone(), values)
}

/// `Q(u)`.
pub fn pohozaev_q(u: &RadialField, params: &ModelParams) -> f64 {
    energy(u, params).q
}

/// Nehari multiplier `λ = (A + B − μC − D)/‖u‖₂²`.
pub fn lagrange_lambda(u: &RadialField, params: &ModelParams) -> Result<f64> {
    let b = energy(u, params);
    if b.mass <= 0.0 {
        return Err(Error::DegenerateField("multiplier of a zero-mass field".into()));
    }
    Ok(b.lambda)
}

/// Signed `(Nehari, Pohozaev)` residuals for the multiplier `lambda`.
pub fn identity_residuals(
    u: &RadialField,
    params: &ModelParams,
    lambda: f64,
) -> (f64, f64) {
    energy(u, params).residuals(params, lambda)
}

/// `(h_c(√A(u)), I(u) − h_c(√A(u)))` for `u` on the sphere of mass `params.c`.
pub fn lower_bound_h(
    u: &RadialField,
    params: &ModelParams,
    consts: &ThresholdConstants,
) -> Result<(f64, f64)> {
    let b = energy(u, params);
    if (b.mass - params.c).abs() > 1e-8 * params.c {
        return Err(Error::MassMismatch { expected: params.c, actual: b.mass });
    }
    let bound = h_c(b.a.sqrt(), params.c, consts);
    Ok((bound, b.i - bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_gaussian, make_grid, GridScheme};
    use crate::kernels::{bp_energy, coulomb_energy, exp_double_energy};

    fn setup() -> (RadialField, ModelParams) {
        let g = make_grid(1024, 30.0, GridScheme::Graded).unwrap();
        (make_gaussian(1.0, 1.0, &g).unwrap(), ModelParams::new(1.0, 2.5, 1.0).unwrap())
    }

    #[test]
    fn zero_field_energy_is_zero() {
        let (u, p) = setup();
        let z = RadialField::zeros(u.grid().clone());
        let b = energy(&z, &p);
        assert_eq!((b.a, b.b, b.c, b.d, b.i, b.q, b.lambda), (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0));
        assert!(gradient(&z, &p).is_zero());
        assert_eq!(identity_residuals(&z, &p, 3.0), (0.0, 0.0));
        assert!(lagrange_lambda(&z, &p).is_err());
    }

    #[test]
    fn assembly_matches_term_by_term() {
        let (u, p) = setup();
        let b = energy(&u, &p);
        assert_eq!(b.a, field::grad_norm_sq(&u));
        assert!((b.b - bp_energy(&u)).abs() <= 1e-14 * b.b);
        assert!((b.h - coulomb_energy(&u)).abs() <= 1e-14 * b.h);
        assert!((b.e - exp_double_energy(&u)).abs() <= 1e-14 * b.e);
        let i = b.a / 2.0 + b.b / 4.0 - p.mu * b.c / p.p - b.d / 6.0;
        assert!((b.i - i).abs() <= 1e-14 * i.abs());
        assert!((b.t - (b.i - b.a / 2.0)).abs() <= 1e-14 * b.i.abs().max(b.t.abs()));
        assert!(b.b <= b.h);
    }

    #[test]
    fn amplitude_homogeneity() {
        let (u, p) = setup();
        let theta: f64 = 1.7;
        let b0 = energy(&u, &p);
        let b1 = energy(&u.scale(theta.sqrt()), &p);
        assert!((b1.a - theta * b0.a).abs() < 1e-12 * b1.a);
        assert!((b1.b - theta * theta * b0.b).abs() < 1e-12 * b1.b);
        assert!((b1.c - theta.powf(p.p / 2.0) * b0.c).abs() < 1e-12 * b1.c);
        assert!((b1.d - theta.powi(3) * b0.d).abs() < 1e-12 * b1.d);
    }

    #[test]
    fn gradient_matches_central_difference() {
        let (u, p) = setup();
        let v = RadialField::from_fn(u.grid().clone(), |r| (0.3 - 0.1 * r) * (-r * r / 5.0).exp()).unwrap();
        let g = gradient(&u, &p);
        let exact = field::inner(&g, &v).unwrap();
        let eps = 1e-5;
        let fd = (energy(&u.axpy(eps, &v).unwrap(), &p).i - energy(&u.axpy(-eps, &v).unwrap(), &p).i)
            / (2.0 * eps);
        assert!((exact - fd).abs() < 1e-7 * (1.0 + fd.abs()), "{exact} vs {fd}");
    }

    #[test]
    fn residuals_combine_to_q() {
        let (u, p) = setup();
        let b = energy(&u, &p);
        for lambda in [-0.3, 0.0, 1.1] {
            let (n, ph) = identity_residuals(&u, &p, lambda);
            assert!((1.5 * n - ph - b.q).abs() < 1e-12 * b.scale());
        }
        let (n, _) = identity_residuals(&u, &p, b.lambda);
        assert!(n.abs() < 1e-14 * b.scale());
    }

    #[test]
    fn lower_bound_requires_matching_mass() {
        let (u, p) = setup();
        let consts = crate::constants::thresholds(1.0, 2.5, 1.0, 5.4).unwrap();
        let wrong = ModelParams::new(1.0, 2.5, 2.0).unwrap();
        assert!(matches!(lower_bound_h(&u, &wrong, &consts), Err(Error::MassMismatch { .. })));
        let (bound, slack) = lower_bound_h(&u, &p, &consts).unwrap();
        assert!(bound.is_finite() && slack.is_finite());
    }
}
