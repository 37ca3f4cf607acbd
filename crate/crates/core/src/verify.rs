//! Linear-theory probes and discrete-identity checks.
//!
//! Everything here runs the *frozen-background* composition flow: temperature
//! and velocity are held fixed so the composition equation can be compared
//! against closed-form linear theory. Three experiment families:
//!
//! * dispersion — grow or decay a single harmonic and fit its rate against
//!   [`predicted_growth_rate`];
//! * threshold — classify whether a seeded perturbation separates (grows past
//!   10x) for a given frozen coefficient `u`, plus a bisection that locates
//!   the marginal `u`;
//! * stirring — the same classification run twice from one initial field,
//!   quiescent versus rigidly rotated, demonstrating vorticity suppression.
//!
//! [`transport_identity_check`] is unrelated to the flow runs: it evaluates
//! both sides of the gradient-transport identity
//! `d/dt(grad g) = grad(g_dot) - (grad v)^T grad g` with the discrete
//! operators on a catalog of closed-form fields and reports the residual,
//! which must shrink at second order.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{ch_rhs_with_omega, State, StepConfig, Stepper};
use crate::error::Error;
use crate::grid::{BcMode, GridSpec, Parity, ScalarField, VectorField};
use crate::material::{self, MaterialParams, MobilityModel};

/// One wavenumber of a dispersion sweep: predicted vs measured exponential
/// rate and their relative mismatch.
#[derive(Debug, Clone, Copy)]
pub struct DispersionPoint {
    pub k: f64,
    pub sigma_predicted: f64,
    pub sigma_measured: f64,
    pub rel_error: f64,
}

/// Outcome of one threshold probe at frozen coefficient `u`.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdResult {
    pub u: f64,
    pub grew: bool,
    /// Final over initial perturbation norm (max deviation from the mean).
    pub amplitude_ratio: f64,
}

/// A perturbation counts as separated once it grows past this factor.
pub const GROWTH_FACTOR: f64 = 10.0;
/// A probe may stop early once the perturbation has collapsed below this.
const DECAY_FLOOR: f64 = 0.02;
/// Probe ratios are sampled every this many steps (and at the final step).
const CHECK_INTERVAL: u64 = 100;
/// Fits only use amplitudes at or below this, keeping the mode linear.
const LINEAR_CAP: f64 = 1e-2;
/// Fits only use amplitudes within this many e-folds of the start, so a
/// decaying mode is fitted before it reaches the roundoff floor.
const FIT_EFOLDS: f64 = 4.0;

/// Exponential rate of a composition harmonic `c = c_bar + eps e^{sigma t} cos(k x)`
/// on a frozen background with effective coefficient `u`:
///
/// `sigma(k) = -(M(c_bar) k^2 / rho0) (gamma k^2 + W''(c_bar; u))`.
///
/// Rejects degenerate mobility at a pure phase (`|c_bar| >= 1`), where the
/// linearization is meaningless because the mobility itself vanishes.
pub fn predicted_growth_rate(
    k: f64,
    c_bar: f64,
    u: f64,
    params: &MaterialParams,
) -> Result<f64, Error> {
    params.validate()?;
    if !k.is_finite() || k < 0.0 {
        return Err(Error::Validation {
            key: "k".into(),
            msg: format!("wavenumber must be finite and nonnegative (got {k})"),
        });
    }
    if !c_bar.is_finite() || !u.is_finite() {
        return Err(Error::Validation {
            key: "c_bar".into(),
            msg: "background composition and u must be finite".into(),
        });
    }
    if let MobilityModel::Degenerate(_) = params.mobility {
        if 1.0 - c_bar * c_bar <= 0.0 {
            return Err(Error::Validation {
                key: "c_bar".into(),
                msg: format!(
                    "degenerate mobility vanishes at |c| >= 1 (got c_bar = {c_bar}); \
                     no linear rate exists there"
                ),
            });
        }
    }
    let m = params.mobility(c_bar);
    let w2 = material::w_second(c_bar, u, params.theta0);
    Ok(-(m * k * k / params.rho0) * (params.gamma * k * k + w2))
}

/// Amplitude of the `k_index`-th x-harmonic of `c`, averaged over rows:
/// a field `a cos(k x + phi)` reports `|a|` for any phase.
pub fn mode_amplitude(c: &ScalarField, k_index: usize) -> f64 {
    let spec = c.spec();
    let (nx, ny) = (spec.nx(), spec.ny());
    assert!(k_index >= 1 && k_index < nx / 2, "harmonic index out of range");
    let w = 2.0 * std::f64::consts::PI * k_index as f64 / spec.lx();
    let mut re = 0.0;
    let mut im = 0.0;
    for i in 0..nx {
        let angle = w * spec.x(i);
        let (s, cs) = angle.sin_cos();
        let mut col = 0.0;
        for j in 0..ny {
            col += c.get(i, j);
        }
        re += col * cs;
        im += col * s;
    }
    2.0 * re.hypot(im) / (nx * ny) as f64
}

/// Largest deviation of `c` from its own mean.
pub fn perturbation_norm(c: &ScalarField) -> f64 {
    let m = c.mean();
    c.values()
        .iter()
        .fold(0.0_f64, |acc, &v| acc.max((v - m).abs()))
}

/// Zero-mean superposition of the cosine modes with indices up to `max_mode`
/// in each direction, with seeded random amplitudes and phases, rescaled so
/// the largest sample magnitude equals `amplitude`.
///
/// Used as the noisy start of threshold and stirring probes: unlike per-cell
/// white noise it carries no grid-scale checkerboard component, which the
/// wide difference operators cannot see.
pub fn seeded_mixture(spec: GridSpec, seed: u64, amplitude: f64, max_mode: usize) -> ScalarField {
    assert!(amplitude > 0.0 && max_mode >= 1, "degenerate mixture request");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = 2.0 * std::f64::consts::PI;
    let (wx, wy) = (tau / spec.lx(), tau / spec.ly());
    let mut field = ScalarField::zeros(spec);
    for kx in 0..=max_mode {
        for ky in 0..=max_mode {
            if kx == 0 && ky == 0 {
                continue;
            }
            let a: f64 = rng.gen_range(-1.0..1.0);
            let px: f64 = rng.gen_range(0.0..tau);
            let py: f64 = rng.gen_range(0.0..tau);
            let mode = ScalarField::from_fn(spec, |x, y| {
                a * (wx * kx as f64 * x + px).cos() * (wy * ky as f64 * y + py).cos()
            });
            field = field.add(&mode);
        }
    }
    let m = field.mean();
    let centered = field.map(|v| v - m);
    let peak = centered.max_abs();
    centered.scale(if peak > 0.0 { amplitude / peak } else { 0.0 })
}

/// Rigid-body rotation about the domain center with angular rate `rate`:
/// `v = rate (-(y - cy), x - cx)`, whose vorticity is `2 rate` everywhere.
pub fn rigid_rotation(spec: GridSpec, rate: f64) -> (VectorField, ScalarField) {
    let (cx, cy) = (0.5 * spec.lx(), 0.5 * spec.ly());
    let v = VectorField::from_fn(spec, |_, y| -rate * (y - cy), |x, _| rate * (x - cx));
    (v, ScalarField::constant(spec, 2.0 * rate))
}

/// Steps only the composition equation while temperature, velocity, and
/// stirring vorticity stay frozen.
///
/// The background temperature is *not* required to be positive here — probes
/// legitimately freeze `u = theta + omega^2` at zero — so the harness builds
/// its internal [`State`] directly instead of going through the validating
/// constructor. No thermal quantity is ever evaluated on it.
pub struct FrozenHarness {
    stepper: Stepper,
    c: ScalarField,
    v: VectorField,
    omega: ScalarField,
    theta: ScalarField,
    params: MaterialParams,
    cfg: StepConfig,
    t: f64,
}

impl FrozenHarness {
    /// Quiescent background: velocity and vorticity zero, temperature frozen
    /// at the value `u` (so the effective coefficient is exactly `u`).
    pub fn quiescent(
        c0: ScalarField,
        u: f64,
        params: &MaterialParams,
        cfg: &StepConfig,
    ) -> Result<Self, Error> {
        let spec = *c0.spec();
        Self::stirred(
            c0,
            u,
            VectorField::zeros(spec),
            ScalarField::zeros(spec),
            params,
            cfg,
        )
    }

    /// Stirred background: composition is advected by the imposed `v` and
    /// feels its (analytically supplied) vorticity through `u = theta + omega^2`.
    pub fn stirred(
        c0: ScalarField,
        theta_value: f64,
        v: VectorField,
        omega: ScalarField,
        params: &MaterialParams,
        cfg: &StepConfig,
    ) -> Result<Self, Error> {
        params.validate()?;
        cfg.validate()?;
        let spec = *c0.spec();
        if v.spec() != &spec || omega.spec() != &spec {
            return Err(Error::Validation {
                key: "harness".into(),
                msg: "background fields live on a different grid".into(),
            });
        }
        if !theta_value.is_finite() {
            return Err(Error::Validation {
                key: "harness.theta".into(),
                msg: "frozen temperature must be finite".into(),
            });
        }
        if !(c0.is_finite() && v.is_finite() && omega.is_finite()) {
            return Err(Error::Validation {
                key: "harness".into(),
                msg: "background fields contain non-finite samples".into(),
            });
        }
        Ok(Self {
            stepper: Stepper::new(spec),
            c: c0,
            v,
            omega,
            theta: ScalarField::constant(spec, theta_value),
            params: *params,
            cfg: *cfg,
            t: 0.0,
        })
    }

    pub fn c(&self) -> &ScalarField {
        &self.c
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Smallest effective coefficient `theta + omega^2` over the grid.
    pub fn effective_u_min(&self) -> f64 {
        self.theta
            .values()
            .iter()
            .zip(self.omega.values())
            .fold(f64::INFINITY, |acc, (&th, &w)| {
                acc.min(material::effective_u(th, w))
            })
    }

    /// Mixing free energy of the frozen run,
    /// `int rho0 [theta0 F(c) + u G(c) + gamma/2 |grad c|^2]`,
    /// the Lyapunov functional the composition step must not increase.
    pub fn free_energy(&self) -> f64 {
        let p = &self.params;
        let u = self
            .theta
            .zip_with(&self.omega, material::effective_u);
        let grad = self.c.gradient();
        let grad_sq = grad.x.mul(&grad.x).add(&grad.y.mul(&grad.y));
        self.c
            .map(|cv| p.theta0 * material::f_val(cv))
            .add(&self.c.map(material::g_val).mul(&u))
            .add(&grad_sq.scale(0.5 * p.gamma))
            .scale(p.rho0)
            .integrate()
    }

    /// Advances the composition by one semi-implicit step.
    pub fn step(&mut self) -> Result<(), Error> {
        let chem = ch_rhs_with_omega(&self.c, &self.theta, &self.omega, &self.params);
        let state = State {
            c: self.c.clone(),
            v: self.v.clone(),
            p: ScalarField::zeros(*self.c.spec()),
            theta: self.theta.clone(),
            t: self.t,
        };
        self.c = self.stepper.ch_step(&state, &chem, &self.params, &self.cfg)?;
        self.t += self.cfg.dt;
        Ok(())
    }

    pub fn run(&mut self, steps: u64) -> Result<(), Error> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }
}

/// Measures the exponential rate of the `k_index`-th x-harmonic by running the
/// frozen flow from `c = c_bar + eps cos(k x)` and least-squares fitting the
/// log amplitude over the linear window (amplitude at most `1e-2` and within
/// four e-folds of the start).
#[allow(clippy::too_many_arguments)]
pub fn measure_growth_rate(
    spec: GridSpec,
    k_index: usize,
    c_bar: f64,
    u: f64,
    eps: f64,
    steps: u64,
    params: &MaterialParams,
    cfg: &StepConfig,
) -> Result<DispersionPoint, Error> {
    if spec.bc() != BcMode::Periodic {
        return Err(Error::Validation {
            key: "grid.bc".into(),
            msg: "dispersion probes need a periodic grid (harmonics are exact modes)".into(),
        });
    }
    if k_index < 1 || k_index >= spec.nx() / 2 {
        return Err(Error::Validation {
            key: "k_index".into(),
            msg: format!(
                "harmonic index must satisfy 1 <= k < nx/2 = {} (got {k_index})",
                spec.nx() / 2
            ),
        });
    }
    if !(eps > 0.0 && eps < LINEAR_CAP) {
        return Err(Error::Validation {
            key: "eps".into(),
            msg: format!(
                "seed amplitude must sit inside the linear fit window (0, {LINEAR_CAP}) \
                 (got {eps})"
            ),
        });
    }
    if steps < 16 {
        return Err(Error::Validation {
            key: "steps".into(),
            msg: "rate fits need at least 16 steps".into(),
        });
    }
    let k = 2.0 * std::f64::consts::PI * k_index as f64 / spec.lx();
    let sigma_predicted = predicted_growth_rate(k, c_bar, u, params)?;
    let c0 = ScalarField::from_fn(spec, |x, _| c_bar + eps * (k * x).cos());
    let mut harness = FrozenHarness::quiescent(c0, u, params, cfg)?;

    let a0 = mode_amplitude(harness.c(), k_index);
    let floor = a0 * (-FIT_EFOLDS).exp();
    let mut samples: Vec<(f64, f64)> = Vec::with_capacity(steps as usize + 1);
    for n in 0..=steps {
        let amp = mode_amplitude(harness.c(), k_index);
        if !(amp > floor && amp <= LINEAR_CAP) {
            break;
        }
        samples.push((n as f64 * cfg.dt, amp.ln()));
        if n < steps {
            harness.step()?;
        }
    }
    if samples.len() < 8 {
        return Err(Error::Validation {
            key: "fit_window".into(),
            msg: format!(
                "only {} samples inside the linear fit window; lengthen the run or \
                 adjust the seed amplitude",
                samples.len()
            ),
        });
    }
    let n = samples.len() as f64;
    let t_mean = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let y_mean = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for &(t, y) in &samples {
        num += (t - t_mean) * (y - y_mean);
        den += (t - t_mean) * (t - t_mean);
    }
    let sigma_measured = num / den;
    let rel_error = (sigma_measured - sigma_predicted).abs() / sigma_predicted.abs().max(1e-12);
    Ok(DispersionPoint {
        k,
        sigma_predicted,
        sigma_measured,
        rel_error,
    })
}

/// Runs `measure_growth_rate` for each harmonic index.
#[allow(clippy::too_many_arguments)]
pub fn dispersion_sweep(
    spec: GridSpec,
    k_indices: &[usize],
    c_bar: f64,
    u: f64,
    eps: f64,
    steps: u64,
    params: &MaterialParams,
    cfg: &StepConfig,
) -> Result<Vec<DispersionPoint>, Error> {
    k_indices
        .iter()
        .map(|&k| measure_growth_rate(spec, k, c_bar, u, eps, steps, params, cfg))
        .collect()
}

/// Runs the frozen flow and classifies the perturbation: separated once the
/// perturbation norm grows past 10x its start, mixed otherwise. The ratio is
/// sampled every hundred steps; a probe stops early once the verdict cannot
/// change (ratio above the growth factor or collapsed well below one).
pub fn run_threshold_probe(
    harness: &mut FrozenHarness,
    u_label: f64,
    steps: u64,
) -> Result<ThresholdResult, Error> {
    let a0 = perturbation_norm(harness.c());
    if a0 <= 0.0 {
        return Err(Error::Validation {
            key: "c0".into(),
            msg: "threshold probe needs a nonuniform start".into(),
        });
    }
    let mut ratio = 1.0;
    for n in 1..=steps {
        harness.step()?;
        if n % CHECK_INTERVAL == 0 || n == steps {
            ratio = perturbation_norm(harness.c()) / a0;
            if ratio > GROWTH_FACTOR || ratio < DECAY_FLOOR {
                break;
            }
        }
    }
    Ok(ThresholdResult {
        u: u_label,
        grew: ratio > GROWTH_FACTOR,
        amplitude_ratio: ratio,
    })
}

/// Classifies each `u` in turn, all probes starting from one seeded mixture.
/// Separation is monotone in `u`: once a value stays mixed, larger ones do too.
#[allow(clippy::too_many_arguments)]
pub fn spinodal_sweep(
    spec: GridSpec,
    u_values: &[f64],
    eps: f64,
    steps: u64,
    seed: u64,
    params: &MaterialParams,
    cfg: &StepConfig,
) -> Result<Vec<ThresholdResult>, Error> {
    let c0 = seeded_mixture(spec, seed, eps, 2);
    u_values
        .iter()
        .map(|&u| {
            let mut h = FrozenHarness::quiescent(c0.clone(), u, params, cfg)?;
            run_threshold_probe(&mut h, u, steps)
        })
        .collect()
}

/// Final bracket of a threshold bisection: `lo` separated, `hi` stayed mixed.
#[derive(Debug, Clone)]
pub struct SpinodalThreshold {
    pub lo: f64,
    pub hi: f64,
    /// Every probe taken, in evaluation order.
    pub probes: Vec<ThresholdResult>,
}

impl SpinodalThreshold {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Bisects between a separating `lo` and a mixing `hi` for the marginal
/// frozen coefficient. Errors if the starting bracket does not straddle the
/// threshold.
#[allow(clippy::too_many_arguments)]
pub fn locate_spinodal_threshold(
    spec: GridSpec,
    mut lo: f64,
    mut hi: f64,
    rounds: u32,
    eps: f64,
    steps: u64,
    seed: u64,
    params: &MaterialParams,
    cfg: &StepConfig,
) -> Result<SpinodalThreshold, Error> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Validation {
            key: "bracket".into(),
            msg: format!("need lo < hi, both finite (got {lo}, {hi})"),
        });
    }
    let c0 = seeded_mixture(spec, seed, eps, 2);
    let probe = |u: f64| -> Result<ThresholdResult, Error> {
        let mut h = FrozenHarness::quiescent(c0.clone(), u, params, cfg)?;
        run_threshold_probe(&mut h, u, steps)
    };
    let mut probes = Vec::new();
    let at_lo = probe(lo)?;
    let at_hi = probe(hi)?;
    probes.push(at_lo);
    probes.push(at_hi);
    if !at_lo.grew || at_hi.grew {
        return Err(Error::Validation {
            key: "bracket".into(),
            msg: format!(
                "bracket does not straddle the threshold (grew at lo: {}, at hi: {})",
                at_lo.grew, at_hi.grew
            ),
        });
    }
    for _ in 0..rounds {
        let mid = 0.5 * (lo + hi);
        let r = probe(mid)?;
        probes.push(r);
        if r.grew {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(SpinodalThreshold { lo, hi, probes })
}

/// Paired quiescent/stirred classification from one initial field.
#[derive(Debug, Clone)]
pub struct StirReport {
    /// Frozen background temperature shared by both runs.
    pub theta: f64,
    /// Imposed angular rate; the uniform vorticity is twice this.
    pub rotation_rate: f64,
    /// Effective coefficient of the quiescent run (= theta).
    pub u_quiescent: f64,
    /// Smallest effective coefficient anywhere in the stirred run.
    pub u_stirred_min: f64,
    pub quiescent: ThresholdResult,
    pub stirred: ThresholdResult,
}

/// Runs the threshold probe twice from the same seeded mixture: once
/// quiescent at temperature `theta_value`, once rigidly rotated so the
/// vorticity raises the effective coefficient by `(2 rate)^2` everywhere.
/// With `rate = 0` the stirred leg degenerates and the quiescent leg *is* the
/// plain spinodal probe — same code path, bitwise.
#[allow(clippy::too_many_arguments)]
pub fn curl_suppression_experiment(
    spec: GridSpec,
    theta_value: f64,
    rotation_rate: f64,
    eps: f64,
    steps: u64,
    seed: u64,
    params: &MaterialParams,
    cfg: &StepConfig,
) -> Result<StirReport, Error> {
    let c0 = seeded_mixture(spec, seed, eps, 4);

    let mut quiet = FrozenHarness::quiescent(c0.clone(), theta_value, params, cfg)?;
    let quiescent = run_threshold_probe(&mut quiet, theta_value, steps)?;

    let (v, omega) = rigid_rotation(spec, rotation_rate);
    let mut spun = FrozenHarness::stirred(c0, theta_value, v, omega, params, cfg)?;
    let u_stirred_min = spun.effective_u_min();
    let stirred = run_threshold_probe(&mut spun, u_stirred_min, steps)?;

    Ok(StirReport {
        theta: theta_value,
        rotation_rate,
        u_quiescent: theta_value,
        u_stirred_min,
        quiescent,
        stirred,
    })
}

/// Residual of the discrete gradient-transport identity
/// `d/dt(grad g) + (v . grad)(grad g) = grad(g_dot) - (grad v)^T grad g`
/// at time `t`, where `g_dot = d/dt g + v . grad g` and every spatial
/// derivative on both sides is the plain central stencil.
///
/// `field_id` picks the scalar: 0 steady `sin x cos y`; 1 ramp `x t`;
/// 2 travelling `sin(x + t/2) cos y`. `velocity_id` picks the background:
/// 0 rest; 1 uniform drift `(1, 0)`; 2 cellular vortex array
/// `(sin x cos y, -cos x sin y)`. Pair (0, 0) is identically zero; pairs with
/// polynomial fields are exact to roundoff; trigonometric pairs converge at
/// second order in the spacing.
pub fn transport_identity_check(
    field_id: usize,
    velocity_id: usize,
    t: f64,
    spec: GridSpec,
) -> Result<f64, Error> {
    if !t.is_finite() {
        return Err(Error::Validation {
            key: "t".into(),
            msg: "evaluation time must be finite".into(),
        });
    }
    let (g, dtg): (ScalarField, ScalarField) = match field_id {
        0 => (
            ScalarField::from_fn(spec, |x, y| x.sin() * y.cos()),
            ScalarField::zeros(spec),
        ),
        1 => (
            ScalarField::from_fn(spec, |x, _| x * t),
            ScalarField::from_fn(spec, |x, _| x),
        ),
        2 => (
            ScalarField::from_fn(spec, |x, y| (x + 0.5 * t).sin() * y.cos()),
            ScalarField::from_fn(spec, |x, y| 0.5 * (x + 0.5 * t).cos() * y.cos()),
        ),
        _ => {
            return Err(Error::Validation {
                key: "field_id".into(),
                msg: format!("scalar catalog has entries 0..=2 (got {field_id})"),
            })
        }
    };
    let v = match velocity_id {
        0 => VectorField::zeros(spec),
        1 => VectorField::new(
            ScalarField::constant(spec, 1.0),
            ScalarField::zeros(spec),
        ),
        2 => VectorField::from_fn(spec, |x, y| x.sin() * y.cos(), |x, y| -x.cos() * y.sin()),
        _ => {
            return Err(Error::Validation {
                key: "velocity_id".into(),
                msg: format!("velocity catalog has entries 0..=2 (got {velocity_id})"),
            })
        }
    };

    let grad_g = g.gradient();
    // Left side: material derivative of each gradient component.
    let lhs_x = dtg.gradient().x.add(&grad_g.x.advect_by(&v));
    let lhs_y = dtg.gradient().y.add(&grad_g.y.advect_by(&v));
    // Right side: gradient of the material derivative minus the velocity
    // gradient acting on grad g. The imposed velocities are arbitrary
    // analytic fields, so their derivatives use plain (even) ghosts.
    let gdot = dtg.add(&g.advect_by(&v));
    let grad_gdot = gdot.gradient();
    let jxx = v.x.ddx(Parity::Even);
    let jxy = v.x.ddy(Parity::Even);
    let jyx = v.y.ddx(Parity::Even);
    let jyy = v.y.ddy(Parity::Even);
    let rhs_x = grad_gdot
        .x
        .sub(&jxx.mul(&grad_g.x).add(&jyx.mul(&grad_g.y)));
    let rhs_y = grad_gdot
        .y
        .sub(&jxy.mul(&grad_g.x).add(&jyy.mul(&grad_g.y)));

    let rx = lhs_x.sub(&rhs_x).max_abs();
    let ry = lhs_y.sub(&rhs_y).max_abs();
    Ok(rx.max(ry))
}
