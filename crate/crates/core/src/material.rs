//! Constitutive ingredients: the double-well and coupling potentials, the
//! effective spinodal coefficient, mobility/viscosity/conductivity laws, and
//! the chemical potential.
//!
//! The mixing energy density is `W(c) = theta0 * F(c) + u * G(c)` with
//! `F(c) = c^4/4 - c^2/2`, `G(c) = c^2/2`, and `u = theta + |curl v|^2`.
//! `W''(c) = 3 theta0 c^2 + u - theta0` is negative on `(-c1, c1)` with
//! `c1 = sqrt((theta0 - u) / (3 theta0))` whenever `u < theta0`; for
//! `u >= theta0` the well is convex and a uniform mixture is linearly stable.

use crate::error::Error;
use crate::grid::{ScalarField, VectorField};

/// Composition mobility law. `Constant` keeps `M = M0`; `Degenerate` scales as
/// `M0 * max(0, 1 - c^2)`, shutting transport off in the pure phases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MobilityModel {
    Constant(f64),
    Degenerate(f64),
}

impl MobilityModel {
    pub fn amplitude(&self) -> f64 {
        match *self {
            MobilityModel::Constant(m0) | MobilityModel::Degenerate(m0) => m0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    /// Common density of both constituents.
    pub rho0: f64,
    /// Interfacial (gradient-energy) coefficient.
    pub gamma: f64,
    /// Critical coefficient of the double well.
    pub theta0: f64,
    pub mobility: MobilityModel,
    /// Viscosities of the pure `c = -1` and `c = +1` phases.
    pub nu_a: f64,
    pub nu_b: f64,
    /// Heat conductivity.
    pub kappa0: f64,
    /// Specific heat `C` (internal energy `e0 = C * theta`).
    pub spec_heat: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            rho0: 1.0,
            gamma: 0.01,
            theta0: 1.0,
            mobility: MobilityModel::Constant(1.0),
            nu_a: 0.1,
            nu_b: 0.1,
            kappa0: 0.1,
            spec_heat: 1.0,
        }
    }
}

impl MaterialParams {
    /// Checks sign constraints. The mobility amplitude may be zero (pure
    /// transport); everything else must be strictly positive.
    pub fn validate(&self) -> Result<(), Error> {
        let check = |key: &str, v: f64, allow_zero: bool| -> Result<(), Error> {
            let ok = v.is_finite() && (v > 0.0 || (allow_zero && v == 0.0));
            if ok {
                Ok(())
            } else {
                Err(Error::Validation {
                    key: format!("material.{key}"),
                    msg: format!(
                        "must be {} and finite (got {v})",
                        if allow_zero { "non-negative" } else { "positive" }
                    ),
                })
            }
        };
        check("rho0", self.rho0, false)?;
        check("gamma", self.gamma, false)?;
        check("theta0", self.theta0, false)?;
        check("m0", self.mobility.amplitude(), true)?;
        check("nu_a", self.nu_a, false)?;
        check("nu_b", self.nu_b, false)?;
        check("kappa0", self.kappa0, false)?;
        check("spec_heat", self.spec_heat, false)?;
        Ok(())
    }

    /// Composition mobility `M(c)`; never negative.
    pub fn mobility(&self, c: f64) -> f64 {
        match self.mobility {
            MobilityModel::Constant(m0) => m0,
            MobilityModel::Degenerate(m0) => m0 * (1.0 - c * c).max(0.0),
        }
    }

    /// Largest mobility over a composition field (used to freeze the implicit
    /// interfacial coefficient for one step).
    pub fn max_mobility(&self, c: &ScalarField) -> f64 {
        match self.mobility {
            MobilityModel::Constant(m0) => m0,
            MobilityModel::Degenerate(_) => c
                .values()
                .iter()
                .fold(0.0, |m, &v| m.max(self.mobility(v))),
        }
    }

    /// Linear viscosity blend between the pure phases; compositions outside
    /// [-1, 1] clamp to the nearer phase.
    pub fn viscosity(&self, c: f64) -> f64 {
        let c = c.clamp(-1.0, 1.0);
        0.5 * (1.0 - c) * self.nu_a + 0.5 * (1.0 + c) * self.nu_b
    }

    /// Heat conductivity; constant in this model.
    pub fn conductivity(&self, _theta: f64) -> f64 {
        self.kappa0
    }

    /// Composition diffusivity `K(c) = M(c) W''(c; u)`; negative inside the
    /// spinodal interval.
    pub fn diffusivity_k(&self, c: f64, u: f64) -> f64 {
        self.mobility(c) * w_second(c, u, self.theta0)
    }
}

/// Double-well potential `F(c) = c^4/4 - c^2/2`.
pub fn f_val(c: f64) -> f64 {
    0.25 * c * c * c * c - 0.5 * c * c
}

/// `F'(c) = c^3 - c`.
pub fn f_prime(c: f64) -> f64 {
    c * c * c - c
}

/// Coupling potential `G(c) = c^2 / 2`.
pub fn g_val(c: f64) -> f64 {
    0.5 * c * c
}

/// `G'(c) = c`.
pub fn g_prime(c: f64) -> f64 {
    c
}

/// Effective spinodal coefficient `u = theta + omega^2`.
pub fn effective_u(theta: f64, omega: f64) -> f64 {
    theta + omega * omega
}

/// Mixing energy density `W(c) = theta0 F(c) + u G(c)`.
pub fn w_val(c: f64, u: f64, theta0: f64) -> f64 {
    theta0 * f_val(c) + u * g_val(c)
}

/// `W'(c) = theta0 F'(c) + u G'(c)`.
pub fn w_prime(c: f64, u: f64, theta0: f64) -> f64 {
    theta0 * f_prime(c) + u * g_prime(c)
}

/// `W''(c) = 3 theta0 c^2 + u - theta0`.
pub fn w_second(c: f64, u: f64, theta0: f64) -> f64 {
    3.0 * theta0 * c * c + u - theta0
}

/// Outcome of the spinodal test at a given `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinodalResult {
    /// True when `u < theta0` (a concave region of W exists).
    pub separates: bool,
    /// Half-width of the concave interval; 0 when `separates` is false.
    pub c1: f64,
}

/// Spinodal interval of `W( . ; u)`: concave exactly on `(-c1, c1)` with
/// `c1 = sqrt((theta0 - u) / (3 theta0))` when `u < theta0`.
pub fn spinodal_interval(theta0: f64, u: f64) -> Result<SpinodalResult, Error> {
    if !(theta0 > 0.0) || !theta0.is_finite() {
        return Err(Error::Validation {
            key: "theta0".into(),
            msg: format!("must be positive and finite (got {theta0})"),
        });
    }
    if u < theta0 {
        Ok(SpinodalResult { separates: true, c1: ((theta0 - u) / (3.0 * theta0)).sqrt() })
    } else {
        Ok(SpinodalResult { separates: false, c1: 0.0 })
    }
}

/// Chemical potential
/// `mu = -gamma lap(c) + theta0 F'(c) + (theta + |curl v|^2) G'(c)`.
///
/// All three fields must share one grid.
pub fn chemical_potential(
    c: &ScalarField,
    theta: &ScalarField,
    v: &VectorField,
    params: &MaterialParams,
) -> Result<ScalarField, Error> {
    if c.spec() != theta.spec() || c.spec() != v.spec() {
        return Err(Error::Validation {
            key: "chemical_potential".into(),
            msg: "composition, temperature, and velocity grids differ".into(),
        });
    }
    Ok(chemical_potential_with_omega(c, theta, &v.curl2d(), params))
}

/// Same as [`chemical_potential`] but with the vorticity supplied directly;
/// the frozen-coefficient harness provides the analytic vorticity of an
/// imposed stirring field here.
pub(crate) fn chemical_potential_with_omega(
    c: &ScalarField,
    theta: &ScalarField,
    omega: &ScalarField,
    params: &MaterialParams,
) -> ScalarField {
    let lap = c.laplacian();
    let n = c.spec().len();
    let mut out = Vec::with_capacity(n);
    let (cv, tv, wv, lv) = (c.values(), theta.values(), omega.values(), lap.values());
    for i in 0..n {
        let u = effective_u(tv[i], wv[i]);
        out.push(-params.gamma * lv[i] + params.theta0 * f_prime(cv[i]) + u * g_prime(cv[i]));
    }
    ScalarField::from_raw(*c.spec(), out)
}
