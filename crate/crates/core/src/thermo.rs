//! Energy, entropy, and the per-step thermodynamic audit.
//!
//! Pointwise densities (per unit mass, multiply by `rho0` to integrate):
//!
//! ```text
//! e   = C theta + theta0 F(c) + (gamma/2) |grad c|^2
//! psi = theta0 F(c) + theta G(c) + (gamma/2) |grad c|^2 + C theta (1 - ln theta)
//! eta = -G(c) + C ln theta
//! ```
//!
//! These satisfy `psi = e - theta eta` identically and the constitutive
//! restrictions `eta = -d(psi)/d(theta)`, `d(psi)/d(grad c) = gamma grad c`;
//! `check_state_restrictions` verifies both by finite differences. The
//! entropy's temperature term carries a positive sign: with `psi`'s purely
//! thermal part equal to `C theta (1 - ln theta)`, differentiating in `theta`
//! forces `eta = -G + C ln theta`, and only that sign makes the dissipation
//! inequality come out non-negative.
//!
//! `Auditor` turns these densities into one `AuditReport` per step: the
//! integral entropy surplus (`cd_residual`, which must stay above
//! `-cd_tolerance`), the mechanical/chemical power identity residual, the
//! total-energy budget residual, and the mass drift.

use crate::dynamics::{ChemFields, SourceTerms, State, StepConfig};
use crate::grid::{ScalarField, VectorField};
use crate::material::{f_prime, f_val, g_prime, g_val, MaterialParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Internal energy per unit mass.
pub fn internal_energy_density(theta: f64, c: f64, gx: f64, gy: f64, p: &MaterialParams) -> f64 {
    p.spec_heat * theta + p.theta0 * f_val(c) + 0.5 * p.gamma * (gx * gx + gy * gy)
}

/// Helmholtz free energy per unit mass; requires `theta > 0`.
pub fn free_energy_density(theta: f64, c: f64, gx: f64, gy: f64, p: &MaterialParams) -> f64 {
    p.theta0 * f_val(c)
        + theta * g_val(c)
        + 0.5 * p.gamma * (gx * gx + gy * gy)
        + p.spec_heat * theta * (1.0 - theta.ln())
}

/// Entropy per unit mass; requires `theta > 0`.
pub fn entropy_density(theta: f64, c: f64, p: &MaterialParams) -> f64 {
    -g_val(c) + p.spec_heat * theta.ln()
}

/// Domain integrals of the state's conserved and energetic quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    /// `integral(rho0 c)`: the conserved mass difference of the two phases.
    pub mass_diff: f64,
    pub kinetic: f64,
    pub internal: f64,
    pub free_energy: f64,
    pub entropy: f64,
}

/// Computes the energy integrals of one state.
pub fn energy_report(state: &State, params: &MaterialParams) -> EnergyReport {
    let g = state.c.gradient();
    let n = state.spec().len();
    let (cv, tv) = (state.c.values(), state.theta.values());
    let (gx, gy) = (g.x.values(), g.y.values());
    let (vx, vy) = (state.v.x.values(), state.v.y.values());
    let mut kin = Vec::with_capacity(n);
    let mut int = Vec::with_capacity(n);
    let mut free = Vec::with_capacity(n);
    let mut ent = Vec::with_capacity(n);
    for i in 0..n {
        kin.push(0.5 * (vx[i] * vx[i] + vy[i] * vy[i]));
        int.push(internal_energy_density(tv[i], cv[i], gx[i], gy[i], params));
        free.push(free_energy_density(tv[i], cv[i], gx[i], gy[i], params));
        ent.push(entropy_density(tv[i], cv[i], params));
    }
    let spec = *state.spec();
    let integ = |vals: Vec<f64>| ScalarField::from_raw(spec, vals).integrate() * params.rho0;
    EnergyReport {
        mass_diff: state.c.integrate() * params.rho0,
        kinetic: integ(kin),
        internal: integ(int),
        free_energy: integ(free),
        entropy: integ(ent),
    }
}

/// Domain integrals of the dissipation channels and the net heat absorption.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationReport {
    /// `integral(nu (|grad v|^2 + (grad v)^T : grad v))`, assembled in the
    /// equivalent sum-of-squares form `2 nu D:D`.
    pub viscous: f64,
    /// `integral(M |grad mu|^2)`.
    pub chemical: f64,
    /// `integral(kappa |grad theta|^2 / theta)`.
    pub thermal: f64,
    /// `integral(-div q + rho0 r)`; the conductive part telescopes to zero on
    /// insulated and periodic grids, leaving the external supply.
    pub heat_absorption: f64,
}

fn dissipation_parts(
    c: &ScalarField,
    v: &VectorField,
    theta: &ScalarField,
    chem: &ChemFields,
    src: &SourceTerms,
    params: &MaterialParams,
) -> DissipationReport {
    let spec = *c.spec();
    let n = spec.len();
    let jac = v.jacobian();
    let off = jac.xy.zip_with(&jac.yx, |a, b| 0.5 * (a + b));
    let grad_mu = chem.mu.gradient();
    let grad_t = theta.gradient();
    let kfield = theta.map(|t| params.conductivity(t));
    let cond = VectorField::new(grad_t.x.mul(&kfield), grad_t.y.mul(&kfield)).divergence();

    let mut visc = Vec::with_capacity(n);
    let mut chm = Vec::with_capacity(n);
    let mut thrm = Vec::with_capacity(n);
    let mut absorb = Vec::with_capacity(n);
    for i in 0..n {
        let nu = params.viscosity(c.values()[i]);
        let (dxx, dyy, doff) = (jac.xx.values()[i], jac.yy.values()[i], off.values()[i]);
        visc.push(2.0 * nu * (dxx * dxx + 2.0 * doff * doff + dyy * dyy));
        let (gmx, gmy) = (grad_mu.x.values()[i], grad_mu.y.values()[i]);
        chm.push(params.mobility(c.values()[i]) * (gmx * gmx + gmy * gmy));
        let (gtx, gty) = (grad_t.x.values()[i], grad_t.y.values()[i]);
        let th = theta.values()[i];
        thrm.push(params.conductivity(th) * (gtx * gtx + gty * gty) / th);
        let supply = src.heat_supply.as_ref().map_or(0.0, |r| r.values()[i]);
        absorb.push(cond.values()[i] + params.rho0 * supply);
    }
    let integ = |vals: Vec<f64>| ScalarField::from_raw(spec, vals).integrate();
    DissipationReport {
        viscous: integ(visc),
        chemical: integ(chm),
        thermal: integ(thrm),
        heat_absorption: integ(absorb),
    }
}

/// Dissipation integrals evaluated at one state.
pub fn dissipation_report(
    state: &State,
    chem: &ChemFields,
    src: &SourceTerms,
    params: &MaterialParams,
) -> DissipationReport {
    dissipation_parts(&state.c, &state.v, &state.theta, chem, src, params)
}

/// Minima of the pointwise dissipation integrands (viscous, chemical,
/// thermal); all three are non-negative by construction, and the audit and
/// the acceptance suite assert exactly that.
pub fn min_dissipation_integrands(
    state: &State,
    chem: &ChemFields,
    params: &MaterialParams,
) -> (f64, f64, f64) {
    let jac = state.v.jacobian();
    let off = jac.xy.zip_with(&jac.yx, |a, b| 0.5 * (a + b));
    let grad_mu = chem.mu.gradient();
    let grad_t = state.theta.gradient();
    let n = state.spec().len();
    let (mut mv, mut mc, mut mt) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for i in 0..n {
        let nu = params.viscosity(state.c.values()[i]);
        let (dxx, dyy, doff) = (jac.xx.values()[i], jac.yy.values()[i], off.values()[i]);
        mv = mv.min(2.0 * nu * (dxx * dxx + 2.0 * doff * doff + dyy * dyy));
        let (gmx, gmy) = (grad_mu.x.values()[i], grad_mu.y.values()[i]);
        mc = mc.min(params.mobility(state.c.values()[i]) * (gmx * gmx + gmy * gmy));
        let (gtx, gty) = (grad_t.x.values()[i], grad_t.y.values()[i]);
        let th = state.theta.values()[i];
        mt = mt.min(params.conductivity(th) * (gtx * gtx + gty * gty) / th);
    }
    (mv, mc, mt)
}

/// Everything the audit measures about one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditReport {
    pub step: u64,
    pub time: f64,
    pub energy: EnergyReport,
    pub dissipation: DissipationReport,
    /// Integral entropy surplus of the step; non-negative up to
    /// discretization error, so it must not fall below `-cd_tolerance`.
    pub cd_residual: f64,
    /// `1e-6` times the domain measure.
    pub cd_tolerance: f64,
    /// Mismatch between the internal powers and the energy/dissipation form
    /// of the mechanical + chemical energy balance; first order in `dt`.
    pub power_identity_residual: f64,
    /// Total-energy change per unit time minus the external supplies.
    pub energy_budget_residual: f64,
    /// Mass-difference drift since the initial state, per unit of
    /// `rho0 * area`.
    pub mass_drift: f64,
    pub theta_floor_hits: u64,
}

/// Step auditor; remembers the initial mass and the domain measure.
pub struct Auditor {
    initial_mass: f64,
    cd_tolerance: f64,
    norm: f64,
}

impl Auditor {
    pub fn new(initial: &State, params: &MaterialParams) -> Self {
        let area = initial.spec().area();
        Self {
            initial_mass: initial.c.integrate() * params.rho0,
            cd_tolerance: 1e-6 * area,
            norm: params.rho0 * area,
        }
    }

    pub fn initial_mass(&self) -> f64 {
        self.initial_mass
    }
    pub fn cd_tolerance(&self) -> f64 {
        self.cd_tolerance
    }

    /// Audits one step `before -> after`; `chem` is the chemical bundle that
    /// generated the step (evaluated at `before`).
    #[allow(clippy::too_many_arguments)]
    pub fn audit_step(
        &self,
        before: &State,
        after: &State,
        chem: &ChemFields,
        src: &SourceTerms,
        params: &MaterialParams,
        cfg: &StepConfig,
        step: u64,
        theta_floor_hits: u64,
    ) -> AuditReport {
        let dt = cfg.dt;
        let spec = *before.spec();
        let e_before = energy_report(before, params);
        let e_after = energy_report(after, params);
        // Dissipation channels at the fields the heat step actually used:
        // coefficients at the pre-step composition and temperature, velocity
        // gradients of the projected velocity.
        let diss = dissipation_parts(&before.c, &after.v, &before.theta, chem, src, params);

        // Entropy surplus: d/dt integral(rho0 eta) + integral(div(q/theta))
        // - integral(rho0 r / theta), all at the post-step temperature.
        let deta = (e_after.entropy - e_before.entropy) / dt;
        let grad_t = after.theta.gradient();
        let q_over_theta = VectorField::new(
            grad_t.x.zip_with(&after.theta, |g, th| -params.conductivity(th) * g / th),
            grad_t.y.zip_with(&after.theta, |g, th| -params.conductivity(th) * g / th),
        );
        let flux_term = q_over_theta.divergence().integrate();
        let entropy_supply = match &src.heat_supply {
            Some(r) => {
                r.zip_with(&after.theta, |rv, th| params.rho0 * rv / th).integrate()
            }
            None => 0.0,
        };
        let cd_residual = deta + flux_term - entropy_supply;

        // Power identity: internal mechanical + chemical power on the left,
        // stored-energy change plus dissipation plus thermal coupling on the
        // right. Every common term is computed once and entered on both
        // sides, so the residual isolates the genuine discretization error.
        let g_c = before.c.gradient();
        let jac = after.v.jacobian();
        let omega = after.v.curl2d();
        let gdot = before.c.zip_with(&chem.c_dot, |cv, cd| g_prime(cv) * cd);
        let n = spec.len();
        let mut tensor_work = Vec::with_capacity(n);
        let mut gdot_omega2 = Vec::with_capacity(n);
        let mut gdot_u = Vec::with_capacity(n);
        let mut fprime_rate = Vec::with_capacity(n);
        for i in 0..n {
            let (gx, gy) = (g_c.x.values()[i], g_c.y.values()[i]);
            tensor_work.push(
                gx * gx * jac.xx.values()[i]
                    + gx * gy * (jac.xy.values()[i] + jac.yx.values()[i])
                    + gy * gy * jac.yy.values()[i],
            );
            let w = omega.values()[i];
            gdot_omega2.push(gdot.values()[i] * w * w);
            gdot_u.push(gdot.values()[i] * (before.theta.values()[i] + w * w));
            fprime_rate.push(f_prime(before.c.values()[i]) * chem.c_dot.values()[i]);
        }
        let integ = |vals: Vec<f64>| ScalarField::from_raw(spec, vals).integrate();
        let tensor_work = integ(tensor_work);
        let gdot_omega2 = integ(gdot_omega2);
        let gdot_u = integ(gdot_u);
        let fprime_rate = integ(fprime_rate);
        let grad_rate = chem.c_dot.gradient();
        let grad_pair = g_c.dot(&grad_rate).integrate();
        let theta_gdot = before.theta.mul(&gdot).integrate() * params.rho0;

        let kin_rate = (e_after.kinetic - e_before.kinetic) / dt;
        let power_mech = kin_rate + diss.viscous
            - params.gamma * params.rho0 * tensor_work
            - params.rho0 * gdot_omega2;
        let power_chem = params.rho0 * params.theta0 * fprime_rate
            + params.rho0 * gdot_u
            + params.gamma * params.rho0 * grad_pair
            + diss.chemical;

        let stored = |state: &State, e: &EnergyReport| -> f64 {
            // kinetic + mixing + interfacial energy, excluding the thermal part
            let g = state.c.gradient();
            let mix = state
                .c
                .zip_with(&g.x.mul(&g.x).add(&g.y.mul(&g.y)), |cv, g2| {
                    params.theta0 * f_val(cv) + 0.5 * params.gamma * g2
                })
                .integrate()
                * params.rho0;
            e.kinetic + mix
        };
        let stored_rate = (stored(after, &e_after) - stored(before, &e_before)) / dt;
        let rhs = stored_rate + diss.viscous + theta_gdot + diss.chemical;
        let power_identity_residual = (power_mech + power_chem - rhs).abs();

        // Total-energy budget against the external supplies.
        let mut supply = 0.0;
        if let Some(b) = &src.body_force {
            supply += b.dot(&after.v).integrate() * params.rho0;
        }
        if let Some(r) = &src.heat_supply {
            supply += r.integrate() * params.rho0;
        }
        let total_rate =
            (e_after.kinetic + e_after.internal - e_before.kinetic - e_before.internal) / dt;
        let energy_budget_residual = total_rate - supply;

        let mass_drift = (e_after.mass_diff - self.initial_mass).abs() / self.norm;

        AuditReport {
            step,
            time: after.t,
            energy: e_after,
            dissipation: diss,
            cd_residual,
            cd_tolerance: self.cd_tolerance,
            power_identity_residual,
            energy_budget_residual,
            mass_drift,
            theta_floor_hits,
        }
    }
}

/// One random thermodynamic state for the restriction check.
#[derive(Debug, Clone, Copy)]
pub struct RestrictionSample {
    pub theta: f64,
    pub c: f64,
    pub gx: f64,
    pub gy: f64,
}

/// Draws `n` states covering the physically relevant ranges.
pub fn sample_states(n: usize, seed: u64) -> Vec<RestrictionSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| RestrictionSample {
            theta: rng.gen_range(0.2..3.0),
            c: rng.gen_range(-1.5..1.5),
            gx: rng.gen_range(-2.0..2.0),
            gy: rng.gen_range(-2.0..2.0),
        })
        .collect()
}

/// Worst relative finite-difference errors of the constitutive restrictions
/// `eta = -d(psi)/d(theta)`, `d(psi)/dc = theta0 F' + theta G'`, and
/// `d(psi)/d(grad c) = gamma grad c` over a set of samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestrictionReport {
    pub max_err_theta: f64,
    pub max_err_c: f64,
    pub max_err_grad: f64,
}

impl RestrictionReport {
    pub fn max_err(&self) -> f64 {
        self.max_err_theta.max(self.max_err_c).max(self.max_err_grad)
    }
}

pub fn check_state_restrictions(
    params: &MaterialParams,
    samples: &[RestrictionSample],
) -> RestrictionReport {
    let mut rep = RestrictionReport { max_err_theta: 0.0, max_err_c: 0.0, max_err_grad: 0.0 };
    for s in samples {
        let h = 1e-6;
        let psi = |theta: f64, c: f64, gx: f64, gy: f64| {
            free_energy_density(theta, c, gx, gy, params)
        };
        let d_theta =
            (psi(s.theta + h, s.c, s.gx, s.gy) - psi(s.theta - h, s.c, s.gx, s.gy)) / (2.0 * h);
        let eta = entropy_density(s.theta, s.c, params);
        rep.max_err_theta =
            rep.max_err_theta.max((d_theta + eta).abs() / eta.abs().max(1.0));

        let d_c = (psi(s.theta, s.c + h, s.gx, s.gy) - psi(s.theta, s.c - h, s.gx, s.gy))
            / (2.0 * h);
        let mu0 = params.theta0 * f_prime(s.c) + s.theta * g_prime(s.c);
        rep.max_err_c = rep.max_err_c.max((d_c - mu0).abs() / mu0.abs().max(1.0));

        let d_gx = (psi(s.theta, s.c, s.gx + h, s.gy) - psi(s.theta, s.c, s.gx - h, s.gy))
            / (2.0 * h);
        let d_gy = (psi(s.theta, s.c, s.gx, s.gy + h) - psi(s.theta, s.c, s.gx, s.gy - h))
            / (2.0 * h);
        let err = (d_gx - params.gamma * s.gx).abs().max((d_gy - params.gamma * s.gy).abs());
        rep.max_err_grad = rep.max_err_grad.max(err / (params.gamma.abs().max(1.0)));
    }
    rep
}
