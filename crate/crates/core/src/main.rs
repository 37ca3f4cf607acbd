//! Command-line front end: configured simulation runs, linear-theory probes,
//! offline snapshot audits, and a self-contained identity check suite.
//!
//! Exit codes: 0 success; 1 configuration, argument, or validation problems;
//! 2 numerical failures (diverged solves, non-finite fields); 3 I/O and
//! snapshot problems. Failures also print one machine-readable line to
//! stderr: `error kind=<tag> exit=<code> detail="..."`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use spinfield::config::{load_config, InitialCondition, RunConfig};
use spinfield::diagnostics::CsvLog;
use spinfield::dynamics::{ch_rhs, Simulation};
use spinfield::error::Error;
use spinfield::grid::{BcMode, GridSpec, ScalarField, VectorField};
use spinfield::material::MaterialParams;
use spinfield::snapshot;
use spinfield::thermo;
use spinfield::verify;

#[derive(Parser)]
#[command(
    name = "spinfield",
    version,
    about = "Coupled composition/flow/heat simulator with built-in thermodynamic audits"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a configured simulation, logging one audited CSV row per step
    Simulate {
        /// Configuration file
        #[arg(long)]
        config: PathBuf,
        /// Override the configured output directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare predicted and measured perturbation growth rates
    Dispersion {
        #[arg(long)]
        config: PathBuf,
        /// Smallest wavenumber of the sweep
        #[arg(long)]
        kmin: f64,
        /// Largest wavenumber of the sweep
        #[arg(long)]
        kmax: f64,
        /// Number of sweep points (snapped to the grid's harmonics)
        #[arg(long)]
        nk: usize,
    },
    /// Classify phase separation across a range of frozen coefficients
    Spinodal {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        umin: f64,
        #[arg(long)]
        umax: f64,
        /// Number of sweep points
        #[arg(long, default_value_t = 9)]
        n: usize,
    },
    /// Paired quiescent/stirred separation runs from one noisy start
    Stir {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recompute the energy and dissipation report of a stored snapshot set
    Audit {
        /// Configuration supplying the material parameters and boundary mode
        #[arg(long)]
        config: PathBuf,
        /// Path prefix of the snapshot set (expects {prefix}_c.snap etc.)
        #[arg(long = "snapshot-prefix")]
        snapshot_prefix: PathBuf,
    },
    /// Self-contained identity and convergence checks; needs no input files
    Check,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            if code != 0 {
                eprintln!("error kind=usage exit=1 detail=\"invalid command line\"");
            }
            std::process::exit(code);
        }
    };
    let result = match cli.cmd {
        Cmd::Simulate { config, out } => simulate(&config, out),
        Cmd::Dispersion {
            config,
            kmin,
            kmax,
            nk,
        } => dispersion(&config, kmin, kmax, nk),
        Cmd::Spinodal {
            config,
            umin,
            umax,
            n,
        } => spinodal(&config, umin, umax, n),
        Cmd::Stir { config } => stir(&config),
        Cmd::Audit {
            config,
            snapshot_prefix,
        } => audit(&config, &snapshot_prefix),
        Cmd::Check => check(),
    };
    if let Err(err) = result {
        let detail = err.to_string().replace('"', "'");
        eprintln!(
            "error kind={} exit={} detail=\"{}\"",
            err.kind(),
            err.exit_code(),
            detail
        );
        std::process::exit(err.exit_code());
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Seed, amplitude, and mean composition of the configured initial state,
/// reused by the probe subcommands (defaults where the mode has none).
fn probe_knobs(cfg: &RunConfig) -> (u64, f64, f64) {
    match &cfg.initial {
        InitialCondition::UniformNoise {
            c_mean,
            amplitude,
            seed,
        } => (*seed, *amplitude, *c_mean),
        InitialCondition::VortexStir {
            c_mean,
            amplitude,
            seed,
            ..
        } => (*seed, *amplitude, *c_mean),
        InitialCondition::SingleMode { c_mean, amplitude, .. } => (42, *amplitude, *c_mean),
        InitialCondition::FromSnapshot { .. } => (42, 0.01, 0.0),
    }
}

fn simulate(config: &Path, out: Option<PathBuf>) -> Result<(), Error> {
    let mut cfg = load_config(config)?;
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err(&cfg.output_dir, e))?;
    let initial = cfg.initial_state()?;
    let sources = cfg.source_terms();
    let mut sim = Simulation::new(initial, sources, cfg.material, cfg.step)?;
    let mut log = CsvLog::create(&cfg.output_dir.join("diagnostics.csv"))?;
    let steps = cfg.step_count();
    let mut last_mass_drift = 0.0;
    let mut floor_hits_total = 0u64;
    for _ in 0..steps {
        let report = sim.step()?;
        last_mass_drift = report.mass_drift;
        floor_hits_total += report.theta_floor_hits;
        log.append(&report)?;
        if cfg.snapshot_every > 0 && sim.step_index() % cfg.snapshot_every == 0 {
            let stem = cfg
                .output_dir
                .join(format!("snap_{:08}", sim.step_index()));
            snapshot::write_state(&stem, sim.state())?;
        }
    }
    snapshot::write_state(&cfg.output_dir.join("final"), sim.state())?;
    log.finish()?;
    println!(
        "simulate steps={} t={:.16e} mass_drift={:.16e} theta_floor_hits={} out={}",
        steps,
        sim.state().t,
        last_mass_drift,
        floor_hits_total,
        cfg.output_dir.display()
    );
    Ok(())
}

fn dispersion(config: &Path, kmin: f64, kmax: f64, nk: usize) -> Result<(), Error> {
    let cfg = load_config(config)?;
    if !(kmin > 0.0 && kmax >= kmin && kmin.is_finite() && kmax.is_finite()) {
        return Err(Error::Validation {
            key: "kmin/kmax".into(),
            msg: format!("need 0 < kmin <= kmax, both finite (got {kmin}, {kmax})"),
        });
    }
    if nk == 0 {
        return Err(Error::Validation {
            key: "nk".into(),
            msg: "need at least one sweep point".into(),
        });
    }
    let spec = cfg.grid;
    let (_, eps, c_bar) = probe_knobs(&cfg);
    let u = cfg.theta_init;
    let steps = cfg.step_count();
    // Snap the requested wavenumbers onto the grid's integer harmonics.
    let scale = spec.lx() / (2.0 * std::f64::consts::PI);
    let mut indices: Vec<usize> = Vec::new();
    for j in 0..nk {
        let frac = if nk == 1 { 0.0 } else { j as f64 / (nk - 1) as f64 };
        let k = kmin + (kmax - kmin) * frac;
        let idx = (k * scale).round().clamp(1.0, (spec.nx() / 2 - 1) as f64) as usize;
        if indices.last() != Some(&idx) {
            indices.push(idx);
        }
    }
    let points = verify::dispersion_sweep(spec, &indices, c_bar, u, eps, steps, &cfg.material, &cfg.step)?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err(&cfg.output_dir, e))?;
    let csv_path = cfg.output_dir.join("dispersion.csv");
    let mut text = String::from("k,sigma_predicted,sigma_measured,rel_error\n");
    let mut worst = 0.0_f64;
    for p in &points {
        text.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e}\n",
            p.k, p.sigma_predicted, p.sigma_measured, p.rel_error
        ));
        println!(
            "dispersion k={:.6} predicted={:.16e} measured={:.16e} rel_error={:.3e}",
            p.k, p.sigma_predicted, p.sigma_measured, p.rel_error
        );
        worst = worst.max(p.rel_error);
    }
    fs::write(&csv_path, text).map_err(|e| io_err(&csv_path, e))?;
    println!(
        "dispersion points={} worst_rel_error={:.3e} csv={}",
        points.len(),
        worst,
        csv_path.display()
    );
    Ok(())
}

fn spinodal(config: &Path, umin: f64, umax: f64, n: usize) -> Result<(), Error> {
    let cfg = load_config(config)?;
    if !(umin < umax && umin.is_finite() && umax.is_finite()) {
        return Err(Error::Validation {
            key: "umin/umax".into(),
            msg: format!("need umin < umax, both finite (got {umin}, {umax})"),
        });
    }
    if n < 2 {
        return Err(Error::Validation {
            key: "n".into(),
            msg: "a sweep needs at least two points".into(),
        });
    }
    let (seed, eps, _) = probe_knobs(&cfg);
    let steps = cfg.step_count();
    let us: Vec<f64> = (0..n)
        .map(|j| umin + (umax - umin) * j as f64 / (n - 1) as f64)
        .collect();
    let results = verify::spinodal_sweep(
        cfg.grid,
        &us,
        eps,
        steps,
        seed,
        &cfg.material,
        &cfg.step,
    )?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err(&cfg.output_dir, e))?;
    let csv_path = cfg.output_dir.join("spinodal.csv");
    let mut text = String::from("u,grew,amplitude_ratio\n");
    for r in &results {
        text.push_str(&format!(
            "{:.16e},{},{:.16e}\n",
            r.u, r.grew, r.amplitude_ratio
        ));
        println!(
            "spinodal u={:.6} grew={} amplitude_ratio={:.16e}",
            r.u, r.grew, r.amplitude_ratio
        );
    }
    fs::write(&csv_path, text).map_err(|e| io_err(&csv_path, e))?;
    // Refine the first grew -> mixed transition of the sweep, if there is one.
    let edge = results.windows(2).find(|w| w[0].grew && !w[1].grew);
    if let Some(w) = edge {
        let found = verify::locate_spinodal_threshold(
            cfg.grid,
            w[0].u,
            w[1].u,
            5,
            eps,
            steps,
            seed,
            &cfg.material,
            &cfg.step,
        )?;
        println!(
            "spinodal threshold_lo={:.16e} threshold_hi={:.16e} threshold_mid={:.16e} probes={}",
            found.lo,
            found.hi,
            found.midpoint(),
            found.probes.len()
        );
    } else {
        println!("spinodal threshold=none (no grew -> mixed transition inside the sweep)");
    }
    println!("spinodal csv={}", csv_path.display());
    Ok(())
}

fn stir(config: &Path) -> Result<(), Error> {
    let cfg = load_config(config)?;
    let (seed, eps, _) = probe_knobs(&cfg);
    let rate = match cfg.initial {
        InitialCondition::VortexStir { rotation_rate, .. } => rotation_rate,
        _ => 0.5,
    };
    let report = verify::curl_suppression_experiment(
        cfg.grid,
        cfg.theta_init,
        rate,
        eps,
        cfg.step_count(),
        seed,
        &cfg.material,
        &cfg.step,
    )?;
    println!(
        "stir theta={:.6} rotation_rate={:.6} u_quiescent={:.6} u_stirred_min={:.6}",
        report.theta, report.rotation_rate, report.u_quiescent, report.u_stirred_min
    );
    println!(
        "stir quiescent grew={} amplitude_ratio={:.16e}",
        report.quiescent.grew, report.quiescent.amplitude_ratio
    );
    println!(
        "stir stirred grew={} amplitude_ratio={:.16e}",
        report.stirred.grew, report.stirred.amplitude_ratio
    );
    Ok(())
}

fn audit(config: &Path, prefix: &Path) -> Result<(), Error> {
    let cfg = load_config(config)?;
    let state = snapshot::read_state(prefix, cfg.grid.bc())?;
    if state.spec() != &cfg.grid {
        return Err(Error::Validation {
            key: "snapshot-prefix".into(),
            msg: format!(
                "snapshot grid {}x{} does not match the configured grid {}x{}",
                state.spec().nx(),
                state.spec().ny(),
                cfg.grid.nx(),
                cfg.grid.ny()
            ),
        });
    }
    let energy = thermo::energy_report(&state, &cfg.material);
    let chem = ch_rhs(&state, &cfg.material);
    let sources = cfg.source_terms();
    let diss = thermo::dissipation_report(&state, &chem, &sources, &cfg.material);
    let (vis_min, chem_min, th_min) =
        thermo::min_dissipation_integrands(&state, &chem, &cfg.material);
    println!("audit time={:.16e}", state.t);
    println!("audit mass_diff={:.16e}", energy.mass_diff);
    println!("audit kinetic={:.16e}", energy.kinetic);
    println!("audit internal={:.16e}", energy.internal);
    println!("audit free_energy={:.16e}", energy.free_energy);
    println!("audit entropy={:.16e}", energy.entropy);
    println!("audit viscous_diss={:.16e}", diss.viscous);
    println!("audit chemical_diss={:.16e}", diss.chemical);
    println!("audit thermal_diss={:.16e}", diss.thermal);
    println!("audit heat_absorption={:.16e}", diss.heat_absorption);
    println!(
        "audit min_dissipation_integrands viscous={:.3e} chemical={:.3e} thermal={:.3e}",
        vis_min, chem_min, th_min
    );
    Ok(())
}

/// One suite of the self-contained `check` run.
fn gate(failures: &mut u32, name: &str, pass: bool, detail: String) {
    if pass {
        println!("check PASS {name} {detail}");
    } else {
        *failures += 1;
        println!("check FAIL {name} {detail}");
    }
}

fn check() -> Result<(), Error> {
    let started = Instant::now();
    let mut failures = 0u32;
    let tau = 2.0 * std::f64::consts::PI;
    let square = |n: usize, bc: BcMode| GridSpec::new(n, n, tau, tau, bc).unwrap();

    // Gradient-transport identity on the closed-form catalog.
    let exact = verify::transport_identity_check(0, 0, 0.3, square(48, BcMode::Periodic))?;
    gate(
        &mut failures,
        "transport_identity_trivial",
        exact == 0.0,
        format!("residual={exact:.3e} (steady field at rest must be exact)"),
    );
    let drift = verify::transport_identity_check(1, 1, 0.7, square(48, BcMode::Physical))?;
    gate(
        &mut failures,
        "transport_identity_ramp",
        drift < 1e-10,
        format!("residual={drift:.3e} (polynomial pair is exact to roundoff)"),
    );
    let mut all_finite = true;
    for field_id in 0..3 {
        for velocity_id in 0..3 {
            let r =
                verify::transport_identity_check(field_id, velocity_id, 0.4, square(64, BcMode::Periodic))?;
            all_finite &= r.is_finite();
        }
    }
    gate(
        &mut failures,
        "transport_identity_catalog",
        all_finite,
        "all nine field/velocity pairs evaluate".into(),
    );
    for (fid, vid) in [(2usize, 2usize), (0, 2)] {
        let r32 = verify::transport_identity_check(fid, vid, 0.3, square(32, BcMode::Periodic))?;
        let r64 = verify::transport_identity_check(fid, vid, 0.3, square(64, BcMode::Periodic))?;
        let r128 = verify::transport_identity_check(fid, vid, 0.3, square(128, BcMode::Periodic))?;
        let (q1, q2) = (r32 / r64, r64 / r128);
        gate(
            &mut failures,
            "transport_identity_order",
            q1 >= 3.5 && q2 >= 3.5,
            format!("pair=({fid},{vid}) residuals={r32:.3e}/{r64:.3e}/{r128:.3e} ratios={q1:.2}/{q2:.2} (need >= 3.5)"),
        );
    }

    // Constitutive restrictions at random states, two parameter sets.
    let alt = MaterialParams {
        rho0: 2.0,
        gamma: 0.02,
        theta0: 1.5,
        spec_heat: 1.25,
        ..MaterialParams::default()
    };
    for (tag, params) in [("default", MaterialParams::default()), ("alt", alt)] {
        let samples = thermo::sample_states(100, 1);
        let rep = thermo::check_state_restrictions(&params, &samples);
        gate(
            &mut failures,
            "constitutive_restrictions",
            rep.max_err() < 1e-6,
            format!(
                "params={tag} max_err_theta={:.3e} max_err_c={:.3e} max_err_grad={:.3e} (need < 1e-6)",
                rep.max_err_theta, rep.max_err_c, rep.max_err_grad
            ),
        );
        let mut worst = 0.0_f64;
        for s in &samples {
            let e = thermo::internal_energy_density(s.theta, s.c, s.gx, s.gy, &params);
            let eta = thermo::entropy_density(s.theta, s.c, &params);
            let psi = thermo::free_energy_density(s.theta, s.c, s.gx, s.gy, &params);
            worst = worst.max((psi - (e - s.theta * eta)).abs());
        }
        gate(
            &mut failures,
            "potential_consistency",
            worst < 1e-12,
            format!("params={tag} max |psi - (e - theta eta)| = {worst:.3e} (need < 1e-12)"),
        );
    }

    // Difference-operator accuracy and structure, both boundary modes.
    for bc in [BcMode::Periodic, BcMode::Physical] {
        let mut lap_err = Vec::new();
        let mut grad_err = Vec::new();
        for n in [32usize, 64, 128] {
            let spec = square(n, bc);
            let f = ScalarField::from_fn(spec, |x, y| x.cos() * y.cos());
            let lap_exact = ScalarField::from_fn(spec, |x, y| -2.0 * x.cos() * y.cos());
            let gx_exact = ScalarField::from_fn(spec, |x, y| -x.sin() * y.cos());
            lap_err.push(f.laplacian().sub(&lap_exact).max_abs());
            grad_err.push(f.gradient().x.sub(&gx_exact).max_abs());
        }
        let lq = (lap_err[0] / lap_err[1], lap_err[1] / lap_err[2]);
        let gq = (grad_err[0] / grad_err[1], grad_err[1] / grad_err[2]);
        gate(
            &mut failures,
            "operator_order",
            lq.0 >= 3.5 && lq.1 >= 3.5 && gq.0 >= 3.5 && gq.1 >= 3.5,
            format!("bc={bc:?} laplacian_ratios={:.2}/{:.2} gradient_ratios={:.2}/{:.2} (need >= 3.5)", lq.0, lq.1, gq.0, gq.1),
        );

        let spec = square(64, bc);
        let f = ScalarField::from_fn(spec, |x, y| (x).sin() * (2.0 * y).cos() + 0.3);
        let big_f = VectorField::from_fn(spec, |x, y| (x + 0.2 * y).cos(), |x, y| (y).sin() + 0.1 * x);
        let div = big_f.divergence();
        let grad = f.gradient();
        let lhs = f.mul(&div).integrate();
        let rhs = grad.x.mul(&big_f.x).add(&grad.y.mul(&big_f.y)).integrate();
        let adj = (lhs + rhs).abs();
        let total_div = div.integrate().abs();
        gate(
            &mut failures,
            "operator_adjointness",
            adj < 1e-10 && total_div < 1e-10,
            format!("bc={bc:?} |<f,div F> + <grad f,F>|={adj:.3e} |int div F|={total_div:.3e} (need < 1e-10)"),
        );
    }

    let elapsed = started.elapsed().as_secs_f64();
    println!(
        "check suites_failed={failures} elapsed_s={elapsed:.2}"
    );
    if failures > 0 {
        return Err(Error::Validation {
            key: "check".into(),
            msg: format!("{failures} check suites failed"),
        });
    }
    Ok(())
}
