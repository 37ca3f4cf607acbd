//! Time integration of the coupled composition / flow / temperature system.
//!
//! One `coupled_step` advances the state in a fixed order: the composition
//! rate is evaluated first, the composition is updated by a semi-implicit
//! solve, the velocity takes an explicit predictor step and is projected back
//! onto the discretely divergence-free space, and the temperature closes the
//! loop with an explicit step whose sources reuse the composition rate. All
//! coefficient fields inside one step are evaluated at the pre-step
//! composition, so the scheme is first order in time by construction.
//!
//! The composition update is solved in increment form,
//!
//! ```text
//! (I + dt (Mbar gamma / rho0) lap^2 - dt (s / rho0) lap) delta = dt * N(c)
//! ```
//!
//! where `N` is the full explicit rate (transport plus advection), `Mbar` is
//! the largest mobility on the grid, and `s >= max W'' / 2` convexifies the
//! well. Because the left-hand operator is the identity on constants and `N`
//! integrates to zero, the update conserves mass exactly and uniform minima
//! are bitwise fixed points.

mod cg;
mod spectral;

use crate::error::Error;
use crate::grid::{BcMode, GridSpec, Parity, ScalarField, VectorField};
use crate::material::{
    chemical_potential, chemical_potential_with_omega, g_prime, MaterialParams,
};
use crate::thermo::{AuditReport, Auditor};
use rustfft::num_complex::Complex;

/// Temperatures are clipped at this floor after every heat step; the audit
/// report counts how many cells were clipped.
pub const THETA_FLOOR: f64 = 1e-8;

/// Full solver state at one instant.
#[derive(Debug, Clone)]
pub struct State {
    pub c: ScalarField,
    pub v: VectorField,
    pub p: ScalarField,
    pub theta: ScalarField,
    pub t: f64,
}

impl State {
    /// Bundles the fields after checking they share a grid, are finite, and
    /// the temperature is positive.
    pub fn new(
        c: ScalarField,
        v: VectorField,
        p: ScalarField,
        theta: ScalarField,
        t: f64,
    ) -> Result<Self, Error> {
        let state = Self { c, v, p, theta, t };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let spec = self.c.spec();
        if self.v.spec() != spec || self.p.spec() != spec || self.theta.spec() != spec {
            return Err(Error::Validation {
                key: "state".into(),
                msg: "state fields live on different grids".into(),
            });
        }
        if !(self.c.is_finite() && self.v.is_finite() && self.p.is_finite() && self.theta.is_finite())
        {
            return Err(Error::Validation {
                key: "state".into(),
                msg: "state contains non-finite samples".into(),
            });
        }
        if !self.t.is_finite() {
            return Err(Error::Validation {
                key: "state.t".into(),
                msg: format!("time must be finite (got {})", self.t),
            });
        }
        if self.theta.values().iter().any(|&v| v <= 0.0) {
            return Err(Error::Validation {
                key: "state.theta".into(),
                msg: "temperature must be strictly positive".into(),
            });
        }
        Ok(())
    }

    pub fn spec(&self) -> &GridSpec {
        self.c.spec()
    }
}

/// External supplies: a body acceleration on the flow and a heat supply per
/// unit mass. Both default to absent.
#[derive(Debug, Clone, Default)]
pub struct SourceTerms {
    pub body_force: Option<VectorField>,
    pub heat_supply: Option<ScalarField>,
}

impl SourceTerms {
    pub fn none() -> Self {
        Self::default()
    }

    fn validate(&self, spec: &GridSpec) -> Result<(), Error> {
        if let Some(b) = &self.body_force {
            if b.spec() != spec || !b.is_finite() {
                return Err(Error::Validation {
                    key: "sources.body_force".into(),
                    msg: "body force must be finite and share the state grid".into(),
                });
            }
        }
        if let Some(r) = &self.heat_supply {
            if r.spec() != spec || !r.is_finite() {
                return Err(Error::Validation {
                    key: "sources.heat_supply".into(),
                    msg: "heat supply must be finite and share the state grid".into(),
                });
            }
        }
        Ok(())
    }
}

/// Numerical knobs for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub dt: f64,
    /// Convexity shift `s` of the implicit composition solve; `s >= max W''/2`
    /// keeps the update energy-stable. Zero is allowed (useful when measuring
    /// undamped linear growth) but gives up that guarantee.
    pub stabilization_s: f64,
    /// Bound enforced on `max |div v|` after the pressure projection.
    pub projection_tol: f64,
    /// Iteration cap shared by the implicit solves.
    pub max_linear_iters: usize,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self { dt: 1e-3, stabilization_s: 2.0, projection_tol: 1e-9, max_linear_iters: 10_000 }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Validation {
                key: "step.dt".into(),
                msg: format!("time step must be positive and finite (got {})", self.dt),
            });
        }
        if !(self.stabilization_s >= 0.0) || !self.stabilization_s.is_finite() {
            return Err(Error::Validation {
                key: "step.stabilization_s".into(),
                msg: format!("stabilization must be non-negative (got {})", self.stabilization_s),
            });
        }
        if !(self.projection_tol > 0.0) || !self.projection_tol.is_finite() {
            return Err(Error::Validation {
                key: "step.projection_tol".into(),
                msg: format!("projection tolerance must be positive (got {})", self.projection_tol),
            });
        }
        if self.max_linear_iters == 0 {
            return Err(Error::Validation {
                key: "step.max_linear_iters".into(),
                msg: "iteration cap must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Chemical-potential bundle evaluated at one state: the potential itself,
/// the transport flux `M(c) grad mu`, and the composition rate
/// `c_dot = div(flux) / rho0` (transport only; advection is applied by the
/// stepper).
#[derive(Debug, Clone)]
pub struct ChemFields {
    pub mu: ScalarField,
    pub flux: VectorField,
    pub c_dot: ScalarField,
}

fn chem_from_mu(c: &ScalarField, mu: ScalarField, params: &MaterialParams) -> ChemFields {
    let g = mu.gradient();
    let m = c.map(|cv| params.mobility(cv));
    let flux = VectorField::new(g.x.mul(&m), g.y.mul(&m));
    let c_dot = flux.divergence().scale(1.0 / params.rho0);
    ChemFields { mu, flux, c_dot }
}

/// Evaluates the chemical potential and transport rate at `state`.
pub fn ch_rhs(state: &State, params: &MaterialParams) -> ChemFields {
    let mu = chemical_potential(&state.c, &state.theta, &state.v, params)
        .expect("state fields share one grid");
    chem_from_mu(&state.c, mu, params)
}

/// Same as [`ch_rhs`] with an externally supplied vorticity; the frozen
/// harness passes the analytic vorticity of an imposed stirring field.
pub(crate) fn ch_rhs_with_omega(
    c: &ScalarField,
    theta: &ScalarField,
    omega: &ScalarField,
    params: &MaterialParams,
) -> ChemFields {
    let mu = chemical_potential_with_omega(c, theta, omega, params);
    chem_from_mu(c, mu, params)
}

/// Capillary (interface) force `-gamma rho0 div(grad c (x) grad c)`.
///
/// The squared diagonal entries of the tensor reflect evenly at walls and the
/// mixed entry reflects oddly, because the normal derivative of an evenly
/// reflected scalar is odd.
pub fn ericksen_force(c: &ScalarField, params: &MaterialParams) -> VectorField {
    let g = c.gradient();
    let txx = g.x.mul(&g.x);
    let txy = g.x.mul(&g.y);
    let tyy = g.y.mul(&g.y);
    let fx = txx.ddx(Parity::Even).add(&txy.ddy(Parity::Odd));
    let fy = txy.ddx(Parity::Odd).add(&tyy.ddy(Parity::Even));
    let s = -params.gamma * params.rho0;
    VectorField::new(fx.scale(s), fy.scale(s))
}

/// Rotational coupling force `rho0 curl(g omega e_z)` with `g = G'(c) c_dot`
/// and `omega` the scalar vorticity: in components `rho0 (d_y(g w), -d_x(g w))`.
pub fn skew_force(
    c: &ScalarField,
    c_dot: &ScalarField,
    v: &VectorField,
    params: &MaterialParams,
) -> VectorField {
    skew_force_with_omega(c, c_dot, &v.curl2d(), params)
}

pub(crate) fn skew_force_with_omega(
    c: &ScalarField,
    c_dot: &ScalarField,
    omega: &ScalarField,
    params: &MaterialParams,
) -> VectorField {
    let a = c.zip_with(c_dot, |cv, cd| g_prime(cv) * cd).mul(omega);
    VectorField::new(
        a.ddy(Parity::Even).scale(params.rho0),
        a.ddx(Parity::Even).scale(-params.rho0),
    )
}

/// Divergence of the viscous stress `2 nu(c) D`, expanded as
/// `2 (grad nu) . D + nu (lap v + grad(div v))` so that the wall closure of
/// each factor can carry its own reflection symmetry.
pub fn viscous_force(c: &ScalarField, v: &VectorField, params: &MaterialParams) -> VectorField {
    let nu = c.map(|cv| params.viscosity(cv));
    let jac = v.jacobian();
    let off = jac.xy.zip_with(&jac.yx, |a, b| 0.5 * (a + b));
    let gnu = nu.gradient();
    // Second velocity derivatives: the inner pass used odd (no-slip) ghosts,
    // so the outer pass reflects the result evenly.
    let lap_vx = jac.xx.ddx(Parity::Even).add(&jac.xy.ddy(Parity::Even));
    let lap_vy = jac.yx.ddx(Parity::Even).add(&jac.yy.ddy(Parity::Even));
    let gdiv = v.divergence().gradient();
    let fx = gnu
        .x
        .mul(&jac.xx)
        .add(&gnu.y.mul(&off))
        .scale(2.0)
        .add(&nu.mul(&lap_vx.add(&gdiv.x)));
    let fy = gnu
        .x
        .mul(&off)
        .add(&gnu.y.mul(&jac.yy))
        .scale(2.0)
        .add(&nu.mul(&lap_vy.add(&gdiv.y)));
    VectorField::new(fx, fy)
}

/// Result of one coupled step: the advanced state, the chemical bundle that
/// produced it (evaluated at the pre-step state), and the number of cells
/// clipped at the temperature floor.
#[derive(Debug, Clone)]
pub struct CoupledOutcome {
    pub state: State,
    pub chem: ChemFields,
    pub theta_floor_hits: u64,
}

/// Advances states on one fixed grid; owns the FFT plans (periodic grids) or
/// falls back to conjugate-gradient solves (wall-bounded grids).
pub struct Stepper {
    spec: GridSpec,
    spectral: Option<spectral::Spectral>,
}

impl Stepper {
    pub fn new(spec: GridSpec) -> Self {
        let spectral = match spec.bc() {
            BcMode::Periodic => {
                Some(spectral::Spectral::new(spec.nx(), spec.ny(), spec.dx(), spec.dy()))
            }
            BcMode::Physical => None,
        };
        Self { spec, spectral }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Semi-implicit composition update in increment form; returns the new
    /// composition. Mass is conserved exactly because the increment has zero
    /// mean whenever the explicit rate does.
    pub fn ch_step(
        &mut self,
        state: &State,
        chem: &ChemFields,
        params: &MaterialParams,
        cfg: &StepConfig,
    ) -> Result<ScalarField, Error> {
        let c = &state.c;
        let rate = chem.c_dot.sub(&c.advect_by(&state.v));
        let rhs = rate.scale(cfg.dt);
        let a_bih = cfg.dt * params.max_mobility(c) * params.gamma / params.rho0;
        let a_lap = cfg.dt * cfg.stabilization_s / params.rho0;
        let delta = match self.spectral.as_mut() {
            Some(sp) => {
                let mut hat = sp.forward(rhs.values());
                let nx = sp.nx();
                for ky in 0..sp.ny() {
                    for kx in 0..nx {
                        let s2 = sp.sx[kx] * sp.sx[kx] + sp.sy[ky] * sp.sy[ky];
                        let denom = 1.0 + a_bih * s2 * s2 + a_lap * s2;
                        hat[kx + nx * ky] = hat[kx + nx * ky] / denom;
                    }
                }
                ScalarField::from_raw(*c.spec(), sp.inverse(hat))
            }
            None => {
                let spec = *c.spec();
                let apply = |x: &[f64]| -> Vec<f64> {
                    let xf = ScalarField::from_raw(spec, x.to_vec());
                    let lap = xf.laplacian();
                    let bih = lap.laplacian();
                    let (lv, bv) = (lap.values(), bih.values());
                    x.iter()
                        .enumerate()
                        .map(|(i, &xi)| xi + a_bih * bv[i] - a_lap * lv[i])
                        .collect()
                };
                let out = cg::conjugate_gradient(
                    apply,
                    rhs.values(),
                    cg::StopRule::RelL2(1e-10),
                    cfg.max_linear_iters,
                    false,
                )
                .map_err(|(iters, residual)| Error::SolverDiverged {
                    stage: "composition implicit solve".into(),
                    iters,
                    residual,
                })?;
                ScalarField::from_raw(spec, out)
            }
        };
        Ok(c.add(&delta))
    }

    /// Explicit momentum predictor followed by a pressure projection; returns
    /// the projected velocity and the mean-zero pressure.
    pub fn ns_step(
        &mut self,
        state: &State,
        chem: &ChemFields,
        src: &SourceTerms,
        params: &MaterialParams,
        cfg: &StepConfig,
    ) -> Result<(VectorField, ScalarField), Error> {
        let (c, v) = (&state.c, &state.v);
        let jac = v.jacobian();
        let adv_x = v.x.mul(&jac.xx).add(&v.y.mul(&jac.xy));
        let adv_y = v.x.mul(&jac.yx).add(&v.y.mul(&jac.yy));
        let visc = viscous_force(c, v, params);
        let eri = ericksen_force(c, params);
        let skw = skew_force(c, &chem.c_dot, v, params);
        let inv_rho = 1.0 / params.rho0;
        let mut ax = visc.x.add(&eri.x).add(&skw.x).scale(inv_rho).sub(&adv_x);
        let mut ay = visc.y.add(&eri.y).add(&skw.y).scale(inv_rho).sub(&adv_y);
        if let Some(b) = &src.body_force {
            ax = ax.add(&b.x);
            ay = ay.add(&b.y);
        }
        let vstar =
            VectorField::new(v.x.add_scaled(cfg.dt, &ax), v.y.add_scaled(cfg.dt, &ay));
        self.project(vstar, params, cfg)
    }

    /// Removes the discretely compressible part of `vstar`. On periodic grids
    /// the projection is diagonal in the Fourier frame and exact; the few
    /// checkerboard modes the central divergence cannot see are damped to
    /// zero. On wall-bounded grids a Neumann pressure solve runs until the
    /// post-projection divergence is below `projection_tol` in max norm.
    fn project(
        &mut self,
        vstar: VectorField,
        params: &MaterialParams,
        cfg: &StepConfig,
    ) -> Result<(VectorField, ScalarField), Error> {
        let spec = *vstar.spec();
        match self.spectral.as_mut() {
            Some(sp) => {
                let mut hx = sp.forward(vstar.x.values());
                let mut hy = sp.forward(vstar.y.values());
                let mut hp = vec![Complex::default(); spec.len()];
                let nx = sp.nx();
                let scale_p = params.rho0 / cfg.dt;
                for ky in 0..sp.ny() {
                    for kx in 0..nx {
                        let (sx, sy) = (sp.sx[kx], sp.sy[ky]);
                        let s2 = sx * sx + sy * sy;
                        let n = kx + nx * ky;
                        if s2 == 0.0 {
                            if kx != 0 || ky != 0 {
                                hx[n] = Complex::default();
                                hy[n] = Complex::default();
                            }
                            continue;
                        }
                        let corr = (hx[n] * sx + hy[n] * sy) / s2;
                        hx[n] -= corr * sx;
                        hy[n] -= corr * sy;
                        hp[n] = Complex::new(0.0, -scale_p) * corr;
                    }
                }
                let vx = ScalarField::from_raw(spec, sp.inverse(hx));
                let vy = ScalarField::from_raw(spec, sp.inverse(hy));
                let p = ScalarField::from_raw(spec, sp.inverse(hp));
                Ok((VectorField::new(vx, vy), p))
            }
            None => {
                let div = vstar.divergence();
                let scale = params.rho0 / cfg.dt;
                let b: Vec<f64> = div.values().iter().map(|&d| -scale * d).collect();
                // Post-projection divergence equals -(dt/rho0) times the CG
                // residual (div grad is the laplacian bitwise), so stopping on
                // the residual max norm bounds max |div v| directly.
                let tol = 0.9 * cfg.projection_tol * scale;
                let apply = |x: &[f64]| -> Vec<f64> {
                    let xf = ScalarField::from_raw(spec, x.to_vec());
                    xf.laplacian().values().iter().map(|&v| -v).collect()
                };
                let out = cg::conjugate_gradient(
                    apply,
                    &b,
                    cg::StopRule::AbsInf(tol),
                    cfg.max_linear_iters,
                    true,
                )
                .map_err(|(iters, residual)| Error::SolverDiverged {
                    stage: "pressure projection".into(),
                    iters,
                    residual,
                })?;
                let phi = ScalarField::from_raw(spec, out);
                let gp = phi.gradient();
                let s = -cfg.dt / params.rho0;
                let vnew = VectorField::new(
                    vstar.x.add_scaled(s, &gp.x),
                    vstar.y.add_scaled(s, &gp.y),
                );
                let mean = phi.mean();
                Ok((vnew, phi.map(|v| v - mean)))
            }
        }
    }

    /// Explicit temperature update. `state.v` must already hold the projected
    /// velocity for this step while `state.c`/`state.theta` are pre-step
    /// fields, matching `chem`. Returns the new temperature and the number of
    /// cells clipped at [`THETA_FLOOR`].
    pub fn heat_step(
        &self,
        state: &State,
        chem: &ChemFields,
        src: &SourceTerms,
        params: &MaterialParams,
        cfg: &StepConfig,
    ) -> (ScalarField, u64) {
        let (c, v, theta) = (&state.c, &state.v, &state.theta);
        let n = self.spec.len();

        // nu (|grad v|^2 + (grad v)^T : grad v), assembled in the equivalent
        // sum-of-squares form 2 nu D:D so the heating is non-negative sample
        // by sample even in floating point.
        let jac = v.jacobian();
        let off = jac.xy.zip_with(&jac.yx, |a, b| 0.5 * (a + b));
        let grad_mu = chem.mu.gradient();
        let grad_t = theta.gradient();
        let kfield = theta.map(|t| params.conductivity(t));
        let cond = VectorField::new(grad_t.x.mul(&kfield), grad_t.y.mul(&kfield)).divergence();
        let adv = theta.advect_by(v);

        let inv_rc = 1.0 / (params.rho0 * params.spec_heat);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let nu = params.viscosity(c.values()[i]);
            let dxx = jac.xx.values()[i];
            let dyy = jac.yy.values()[i];
            let doff = off.values()[i];
            let visc_heat = 2.0 * nu * (dxx * dxx + 2.0 * doff * doff + dyy * dyy);
            let gdot = g_prime(c.values()[i]) * chem.c_dot.values()[i];
            let gmx = grad_mu.x.values()[i];
            let gmy = grad_mu.y.values()[i];
            let chem_heat = params.mobility(c.values()[i]) * (gmx * gmx + gmy * gmy);
            let supply = src.heat_supply.as_ref().map_or(0.0, |r| r.values()[i]);
            let rate = (visc_heat
                + params.rho0 * theta.values()[i] * gdot
                + chem_heat
                + cond.values()[i]
                + params.rho0 * supply)
                * inv_rc
                - adv.values()[i];
            out.push(theta.values()[i] + cfg.dt * rate);
        }
        let mut hits = 0u64;
        for t in out.iter_mut() {
            if !(*t >= THETA_FLOOR) {
                *t = THETA_FLOOR;
                hits += 1;
            }
        }
        (ScalarField::from_raw(self.spec, out), hits)
    }

    /// One full step: composition rate, composition solve, momentum predictor
    /// and projection, then the temperature. Forces and coefficients all use
    /// the pre-step composition.
    pub fn coupled_step(
        &mut self,
        state: &State,
        src: &SourceTerms,
        params: &MaterialParams,
        cfg: &StepConfig,
    ) -> Result<CoupledOutcome, Error> {
        let chem = ch_rhs(state, params);
        let c_new = self.ch_step(state, &chem, params, cfg)?;
        let (v_new, p_new) = self.ns_step(state, &chem, src, params, cfg)?;
        let mid = State {
            c: state.c.clone(),
            v: v_new,
            p: p_new,
            theta: state.theta.clone(),
            t: state.t,
        };
        let (theta_new, theta_floor_hits) = self.heat_step(&mid, &chem, src, params, cfg);
        let next = State { c: c_new, v: mid.v, p: mid.p, theta: theta_new, t: state.t + cfg.dt };
        Ok(CoupledOutcome { state: next, chem, theta_floor_hits })
    }
}

/// Owns a stepper, a state, sources, and the audit bookkeeping; drives the
/// simulation one audited step at a time.
pub struct Simulation {
    stepper: Stepper,
    state: State,
    src: SourceTerms,
    params: MaterialParams,
    cfg: StepConfig,
    auditor: Auditor,
    step_index: u64,
}

impl Simulation {
    pub fn new(
        initial: State,
        src: SourceTerms,
        params: MaterialParams,
        cfg: StepConfig,
    ) -> Result<Self, Error> {
        params.validate()?;
        cfg.validate()?;
        initial.validate()?;
        src.validate(initial.spec())?;
        let auditor = Auditor::new(&initial, &params);
        let stepper = Stepper::new(*initial.spec());
        Ok(Self { stepper, state: initial, src, params, cfg, auditor, step_index: 0 })
    }

    pub fn state(&self) -> &State {
        &self.state
    }
    pub fn params(&self) -> &MaterialParams {
        &self.params
    }
    pub fn cfg(&self) -> &StepConfig {
        &self.cfg
    }
    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    /// Advances one step and audits it.
    pub fn step(&mut self) -> Result<AuditReport, Error> {
        let before = self.state.clone();
        let out = self.stepper.coupled_step(&before, &self.src, &self.params, &self.cfg)?;
        let step = self.step_index + 1;
        for (stage, ok) in [
            ("composition update", out.state.c.is_finite()),
            ("velocity update", out.state.v.is_finite()),
            ("pressure solve", out.state.p.is_finite()),
            ("temperature update", out.state.theta.is_finite()),
        ] {
            if !ok {
                return Err(Error::NonFinite { stage: stage.into(), step });
            }
        }
        let report = self.auditor.audit_step(
            &before,
            &out.state,
            &out.chem,
            &self.src,
            &self.params,
            &self.cfg,
            step,
            out.theta_floor_hits,
        );
        self.state = out.state;
        self.step_index = step;
        Ok(report)
    }

    /// Runs `n` steps, calling `on_step` with the advanced state and its
    /// audit report after each one.
    pub fn run_steps(
        &mut self,
        n: u64,
        mut on_step: impl FnMut(&State, &AuditReport) -> Result<(), Error>,
    ) -> Result<(), Error> {
        for _ in 0..n {
            let report = self.step()?;
            on_step(&self.state, &report)?;
        }
        Ok(())
    }

    /// Runs until `t_end` (the step count is rounded up from the remaining
    /// interval, so the final time may overshoot by less than one step).
    pub fn run_to(
        &mut self,
        t_end: f64,
        on_step: impl FnMut(&State, &AuditReport) -> Result<(), Error>,
    ) -> Result<(), Error> {
        let remaining = t_end - self.state.t;
        let n = if remaining > 0.0 {
            (remaining / self.cfg.dt - 1e-9).ceil().max(0.0) as u64
        } else {
            0
        };
        self.run_steps(n, on_step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BcMode;
    use crate::material::MobilityModel;
    use std::f64::consts::PI;

    fn spec(n: usize, bc: BcMode) -> GridSpec {
        GridSpec::new(n, n, 2.0 * PI, 2.0 * PI, bc).unwrap()
    }

    fn smooth_state(spec: GridSpec) -> State {
        let c = ScalarField::from_fn(spec, |x, y| 0.2 + 0.1 * x.sin() * y.cos());
        let v = VectorField::from_fn(
            spec,
            |x, y| 0.05 * x.sin() * y.cos(),
            |x, y| -0.05 * x.cos() * y.sin(),
        );
        let p = ScalarField::zeros(spec);
        let theta = ScalarField::from_fn(spec, |x, _| 1.0 + 0.1 * x.cos());
        State::new(c, v, p, theta, 0.0).unwrap()
    }

    #[test]
    fn uniform_state_is_a_bitwise_fixed_point() {
        for bc in [BcMode::Periodic, BcMode::Physical] {
            let s = spec(16, bc);
            let state = State::new(
                ScalarField::constant(s, 0.3),
                VectorField::zeros(s),
                ScalarField::zeros(s),
                ScalarField::constant(s, 1.5),
                0.0,
            )
            .unwrap();
            let mut stepper = Stepper::new(s);
            let params = MaterialParams::default();
            let cfg = StepConfig::default();
            let out = stepper.coupled_step(&state, &SourceTerms::none(), &params, &cfg).unwrap();
            assert_eq!(out.state.c.values(), state.c.values(), "{bc:?}");
            assert_eq!(out.state.v.x.values(), state.v.x.values(), "{bc:?}");
            assert_eq!(out.state.v.y.values(), state.v.y.values(), "{bc:?}");
            assert_eq!(out.state.theta.values(), state.theta.values(), "{bc:?}");
            assert_eq!(out.theta_floor_hits, 0);
        }
    }

    #[test]
    fn composition_mass_is_conserved_over_many_steps() {
        for (bc, tol) in [(BcMode::Periodic, 1e-12), (BcMode::Physical, 1e-10)] {
            let s = spec(24, bc);
            let state = smooth_state(s);
            let params = MaterialParams::default();
            let cfg = StepConfig {
                projection_tol: 1e-11,
                ..StepConfig::default()
            };
            let mut sim = Simulation::new(state, SourceTerms::none(), params, cfg).unwrap();
            let mass0 = sim.state().c.integrate();
            sim.run_steps(200, |_, _| Ok(())).unwrap();
            let drift = (sim.state().c.integrate() - mass0).abs() / mass0.abs();
            assert!(drift < tol, "{bc:?}: relative mass drift {drift}");
        }
    }

    #[test]
    fn projection_leaves_divergence_below_tolerance() {
        for (bc, tol) in [(BcMode::Periodic, 1e-12), (BcMode::Physical, 1e-9)] {
            let s = spec(24, bc);
            let state = smooth_state(s);
            let params = MaterialParams::default();
            let cfg = StepConfig::default();
            let mut stepper = Stepper::new(s);
            let chem = ch_rhs(&state, &params);
            let (v_new, _) =
                stepper.ns_step(&state, &chem, &SourceTerms::none(), &params, &cfg).unwrap();
            let maxdiv = v_new.divergence().max_abs();
            assert!(maxdiv < tol, "{bc:?}: max |div v| = {maxdiv}");
        }
    }

    #[test]
    fn taylor_green_vortex_decays_at_the_viscous_rate() {
        // c = 0 exactly: the well's force vanishes, so the flow sees a uniform
        // viscosity and each component decays at nu * (sx^2 + sy^2) for the
        // (1,1) mode. theta = 2 > theta0 keeps the mixture linearly stable.
        let s = spec(32, BcMode::Periodic);
        let amp = 0.01;
        let state = State::new(
            ScalarField::zeros(s),
            VectorField::from_fn(
                s,
                |x, y| amp * x.sin() * y.cos(),
                |x, y| -amp * x.cos() * y.sin(),
            ),
            ScalarField::zeros(s),
            ScalarField::constant(s, 2.0),
            0.0,
        )
        .unwrap();
        let params = MaterialParams { nu_a: 0.1, nu_b: 0.1, ..MaterialParams::default() };
        let cfg = StepConfig { dt: 1e-3, ..StepConfig::default() };
        let mut sim = Simulation::new(state, SourceTerms::none(), params, cfg).unwrap();
        let ke0 = 0.5 * sim.state().v.dot(&sim.state().v).integrate();
        let steps = 100u64;
        sim.run_steps(steps, |_, _| Ok(())).unwrap();
        let ke1 = 0.5 * sim.state().v.dot(&sim.state().v).integrate();
        let t = steps as f64 * cfg.dt;
        let measured = -(ke1 / ke0).ln() / (2.0 * t);
        let s1 = (s.dx()).sin() / s.dx();
        let expected = 2.0 * 0.1 * s1 * s1;
        assert!(
            (measured / expected - 1.0).abs() < 0.02,
            "decay rate {measured} vs {expected}"
        );
        // c stays pinned at the stable uniform state.
        assert_eq!(sim.state().c.max_abs(), 0.0);
    }

    #[test]
    fn interface_force_matches_single_mode_oracle() {
        // c = sin(kx): the tensor divergence reduces to
        // f_x = gamma rho0 k^3 sin(2kx), f_y = 0.
        let k = 2.0;
        let params = MaterialParams { gamma: 0.03, rho0 : 2.0, ..MaterialParams::default() };
        let mut errs = Vec::new();
        for n in [32usize, 64, 128] {
            let s = spec(n, BcMode::Periodic);
            let c = ScalarField::from_fn(s, |x, _| (k * x).sin());
            let f = ericksen_force(&c, &params);
            let want = ScalarField::from_fn(s, |x, _| {
                params.gamma * params.rho0 * k * k * k * (2.0 * k * x).sin()
            });
            errs.push(f.x.sub(&want).max_abs() / want.max_abs());
            assert!(f.y.max_abs() < 1e-12);
        }
        assert!(errs[2] < 0.05, "relative error at n=128: {}", errs[2]);
        for w in errs.windows(2) {
            assert!(w[0] / w[1] > 3.5, "convergence ratios {errs:?}");
        }
    }

    #[test]
    fn interface_force_work_matches_tensor_contraction() {
        // integral(f . v) = gamma rho0 integral((grad c (x) grad c) : grad v)
        // on a periodic grid, by summation by parts.
        let s = spec(32, BcMode::Periodic);
        let c = ScalarField::from_fn(s, |x, y| (x).sin() * (2.0 * y).cos() + 0.3 * (y).sin());
        let v = VectorField::from_fn(
            s,
            |x, y| (2.0 * x).cos() * y.sin(),
            |x, y| x.sin() + 0.5 * (2.0 * y).cos(),
        );
        let params = MaterialParams::default();
        let f = ericksen_force(&c, &params);
        let lhs = f.dot(&v).integrate();
        let g = c.gradient();
        let jac = v.jacobian();
        let contraction = g.x.mul(&g.x).mul(&jac.xx)
            .add(&g.x.mul(&g.y).mul(&jac.xy))
            .add(&g.y.mul(&g.x).mul(&jac.yx))
            .add(&g.y.mul(&g.y).mul(&jac.yy));
        let rhs = params.gamma * params.rho0 * contraction.integrate();
        assert!((lhs - rhs).abs() < 1e-10 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn rotational_force_work_equals_coupling_power() {
        // integral(f . v) = rho0 integral(g omega^2) with g = G'(c) c_dot, in
        // both boundary modes: the even/odd derivative pairing telescopes.
        for bc in [BcMode::Periodic, BcMode::Physical] {
            let s = spec(24, bc);
            let c = ScalarField::from_fn(s, |x, y| (x).sin() * (y).sin());
            let c_dot = ScalarField::from_fn(s, |x, y| (x + 0.3).cos() * (2.0 * y).sin());
            let v = VectorField::from_fn(
                s,
                |x, y| x.sin() * (y).cos() * 0.7,
                |x, y| (2.0 * x).sin() * y.sin(),
            );
            let params = MaterialParams::default();
            let f = skew_force(&c, &c_dot, &v, &params);
            let lhs = f.dot(&v).integrate();
            let omega = v.curl2d();
            let g = c.zip_with(&c_dot, |cv, cd| g_prime(cv) * cd);
            let rhs = params.rho0 * g.mul(&omega).mul(&omega).integrate();
            assert!(
                (lhs - rhs).abs() < 1e-10 * (1.0 + rhs.abs()),
                "{bc:?}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn rotational_force_is_divergence_free() {
        let s = spec(32, BcMode::Periodic);
        let c = ScalarField::from_fn(s, |x, y| x.sin() * y.cos());
        let c_dot = ScalarField::from_fn(s, |x, y| (2.0 * x).cos() + y.sin());
        let v = VectorField::from_fn(s, |x, y| x.cos() * y.sin(), |x, y| x.sin() * y.cos());
        let f = skew_force(&c, &c_dot, &v, &MaterialParams::default());
        assert!(f.divergence().max_abs() < 1e-12);
    }

    #[test]
    fn heat_floor_clips_and_counts() {
        let s = spec(16, BcMode::Periodic);
        let state = State::new(
            ScalarField::constant(s, 0.5),
            VectorField::zeros(s),
            ScalarField::zeros(s),
            ScalarField::constant(s, 0.5),
            0.0,
        )
        .unwrap();
        let src = SourceTerms {
            body_force: None,
            heat_supply: Some(ScalarField::constant(s, -1e6)),
        };
        let mut stepper = Stepper::new(s);
        let params = MaterialParams::default();
        let cfg = StepConfig::default();
        let out = stepper.coupled_step(&state, &src, &params, &cfg).unwrap();
        assert_eq!(out.theta_floor_hits, 256);
        for &t in out.state.theta.values() {
            assert_eq!(t, THETA_FLOOR);
        }
    }

    #[test]
    fn coupled_step_is_first_order_in_time() {
        let s = spec(24, BcMode::Periodic);
        let initial = smooth_state(s);
        let params = MaterialParams::default();
        let t_end = 0.02;
        let run = |dt: f64| -> State {
            let cfg = StepConfig { dt, ..StepConfig::default() };
            let mut sim = Simulation::new(initial.clone(), SourceTerms::none(), params, cfg)
                .unwrap();
            sim.run_to(t_end, |_, _| Ok(())).unwrap();
            sim.state().clone()
        };
        let reference = run(6.25e-5);
        let errs: Vec<f64> = [1e-3, 5e-4, 2.5e-4]
            .iter()
            .map(|&dt| {
                let got = run(dt);
                got.c.sub(&reference.c).max_abs()
                    + got.v.sub(&reference.v).max_abs()
                    + got.theta.sub(&reference.theta).max_abs()
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(
                (1.5..2.9).contains(&ratio),
                "halving dt should halve the error: ratios from {errs:?}"
            );
        }
    }

    #[test]
    fn exhausted_solver_reports_divergence() {
        let s = spec(16, BcMode::Physical);
        let state = smooth_state(s);
        let params = MaterialParams::default();
        let cfg = StepConfig { dt: 1.0, max_linear_iters: 1, ..StepConfig::default() };
        let mut stepper = Stepper::new(s);
        let chem = ch_rhs(&state, &params);
        match stepper.ch_step(&state, &chem, &params, &cfg) {
            Err(Error::SolverDiverged { stage, iters, .. }) => {
                assert_eq!(stage, "composition implicit solve");
                assert_eq!(iters, 1);
            }
            other => panic!("expected solver divergence, got {other:?}"),
        }
    }

    #[test]
    fn blowup_is_reported_as_non_finite() {
        let s = spec(16, BcMode::Periodic);
        let huge = 1e160;
        let state = State::new(
            ScalarField::constant(s, 0.0),
            VectorField::from_fn(s, |x, _| huge * x.sin(), |_, y| huge * y.sin()),
            ScalarField::zeros(s),
            ScalarField::constant(s, 1.0),
            0.0,
        )
        .unwrap();
        let mut sim = Simulation::new(
            state,
            SourceTerms::none(),
            MaterialParams::default(),
            StepConfig::default(),
        )
        .unwrap();
        match sim.step() {
            Err(Error::NonFinite { step, .. }) => assert_eq!(step, 1),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn run_to_takes_the_expected_step_count() {
        let s = spec(16, BcMode::Periodic);
        let state = smooth_state(s);
        let cfg = StepConfig { dt: 1e-3, ..StepConfig::default() };
        let mut sim =
            Simulation::new(state, SourceTerms::none(), MaterialParams::default(), cfg).unwrap();
        let mut count = 0u64;
        sim.run_to(0.01, |_, _| {
            count += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(count, 10);
        assert!((sim.state().t - 0.01).abs() < 1e-12);
        assert_eq!(sim.step_index(), 10);
    }

    #[test]
    fn degenerate_mobility_keeps_pure_phases_stationary() {
        // M(c) = 0 at |c| = 1: a uniform pure phase cannot transport at all,
        // even though W'(1) != 0 once u > 0.
        let s = spec(16, BcMode::Periodic);
        let params = MaterialParams {
            mobility: MobilityModel::Degenerate(1.0),
            ..MaterialParams::default()
        };
        let state = State::new(
            ScalarField::constant(s, 1.0),
            VectorField::zeros(s),
            ScalarField::zeros(s),
            ScalarField::constant(s, 0.7),
            0.0,
        )
        .unwrap();
        let mut stepper = Stepper::new(s);
        let out = stepper
            .coupled_step(&state, &SourceTerms::none(), &params, &StepConfig::default())
            .unwrap();
        assert_eq!(out.state.c.values(), state.c.values());
    }
}
