//! Run configuration: a strict line-based `key = value` format.
//!
//! Sections group the keys (`[grid]`, `[material]`, `[step]`, `[initial]`,
//! `[sources]`, `[run]`); `#` starts a comment anywhere on a line. Only the
//! `[grid]` block is required — every other key has a documented default.
//! The parser is deliberately unforgiving: unknown sections or keys, values
//! of the wrong type, and duplicate keys are all hard errors that name the
//! offending line, so a typo can never silently fall back to a default.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{SourceTerms, State, StepConfig};
use crate::error::Error;
use crate::grid::{BcMode, GridSpec, ScalarField, VectorField};
use crate::material::{MaterialParams, MobilityModel};
use crate::snapshot;
use crate::verify;

/// How the initial state is built.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// Per-cell white noise of the given amplitude around `c_mean`,
    /// recentred so the mean is exact.
    UniformNoise { c_mean: f64, amplitude: f64, seed: u64 },
    /// One cosine harmonic `c_mean + amplitude cos(2 pi k x / lx)`.
    SingleMode { c_mean: f64, amplitude: f64, k: usize },
    /// Low-mode composition noise plus a rigid-rotation velocity about the
    /// domain center with the given angular rate.
    VortexStir {
        c_mean: f64,
        amplitude: f64,
        seed: u64,
        rotation_rate: f64,
    },
    /// Resume from the five-field snapshot set written by a previous run.
    FromSnapshot { prefix: PathBuf },
}

/// Uniform external supplies; zero means absent.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SourceSpec {
    pub body_force_x: f64,
    pub body_force_y: f64,
    pub heat_supply: f64,
}

/// Everything a run needs, validated.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub material: MaterialParams,
    pub step: StepConfig,
    pub initial: InitialCondition,
    /// Uniform starting temperature (ignored by `from_snapshot`).
    pub theta_init: f64,
    pub sources: SourceSpec,
    pub t_end: f64,
    /// Write a snapshot set every this many steps; `0` disables them.
    pub snapshot_every: u64,
    pub output_dir: PathBuf,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("grid", &["nx", "ny", "lx", "ly", "bc"]),
    (
        "material",
        &[
            "rho0", "gamma", "theta0", "mobility", "m0", "nu_a", "nu_b", "kappa0", "spec_heat",
        ],
    ),
    (
        "step",
        &["dt", "stabilization_s", "projection_tol", "max_linear_iters"],
    ),
    (
        "initial",
        &[
            "mode",
            "c_mean",
            "amplitude",
            "seed",
            "k",
            "rotation_rate",
            "theta_init",
            "snapshot_prefix",
        ],
    ),
    ("sources", &["body_force_x", "body_force_y", "heat_supply"]),
    ("run", &["t_end", "snapshot_every", "output_dir"]),
];

fn known_keys(section: &str) -> Option<&'static [&'static str]> {
    SECTIONS
        .iter()
        .find(|(name, _)| *name == section)
        .map(|(_, keys)| *keys)
}

/// Raw `section.key -> (line, value)` table with typed accessors.
struct Entries {
    map: HashMap<String, (usize, String)>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn parse<T: std::str::FromStr>(
        &mut self,
        key: &str,
        what: &str,
        default: T,
    ) -> Result<T, Error> {
        match self.take(key) {
            None => Ok(default),
            Some((line, raw)) => raw.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("{key}: expected {what}, got {raw:?}"),
            }),
        }
    }

    fn require<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Result<T, Error> {
        match self.take(key) {
            None => Err(Error::Validation {
                key: key.into(),
                msg: "required key is missing".into(),
            }),
            Some((line, raw)) => raw.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("{key}: expected {what}, got {raw:?}"),
            }),
        }
    }
}

/// Parses and validates a configuration; `dir` anchors relative paths.
pub fn parse_config(text: &str, dir: &Path) -> Result<RunConfig, Error> {
    let mut map: HashMap<String, (usize, String)> = HashMap::new();
    let mut section: Option<String> = None;
    let mut saw_grid = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[') {
            let Some(name) = inner.strip_suffix(']') else {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("unterminated section header {line:?}"),
                });
            };
            let name = name.trim();
            if known_keys(name).is_none() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!(
                        "unknown section [{name}]; expected one of {}",
                        SECTIONS
                            .iter()
                            .map(|(s, _)| format!("[{s}]"))
                            .collect::<Vec<_>>()
                            .join(", ")
                    ),
                });
            }
            saw_grid |= name == "grid";
            section = Some(name.to_string());
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected `key = value` or a [section] header, got {line:?}"),
            });
        };
        let (key, value) = (k.trim(), v.trim());
        let Some(section) = section.as_deref() else {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("key {key:?} appears before any [section] header"),
            });
        };
        if key.is_empty() || value.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                msg: "empty key or value".into(),
            });
        }
        if !known_keys(section).unwrap().contains(&key) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("unknown key {key:?} in section [{section}]"),
            });
        }
        let full = format!("{section}.{key}");
        if let Some((first, _)) = map.get(&full) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("duplicate key {full} (lines {first} and {line_no})"),
            });
        }
        map.insert(full, (line_no, value.to_string()));
    }
    if !saw_grid {
        return Err(Error::Validation {
            key: "grid".into(),
            msg: "configuration must contain a [grid] section".into(),
        });
    }
    let mut e = Entries { map };

    // Grid: dimensions and extents are required, the boundary mode defaults
    // to periodic.
    let nx: usize = e.require("grid.nx", "an integer")?;
    let ny: usize = e.require("grid.ny", "an integer")?;
    let lx: f64 = e.require("grid.lx", "a number")?;
    let ly: f64 = e.require("grid.ly", "a number")?;
    let bc = match e.take("grid.bc") {
        None => BcMode::Periodic,
        Some((line, raw)) => match raw.as_str() {
            "periodic" => BcMode::Periodic,
            "physical" => BcMode::Physical,
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("grid.bc: expected periodic or physical, got {other:?}"),
                })
            }
        },
    };
    let grid = GridSpec::new(nx, ny, lx, ly, bc)?;

    let defaults = MaterialParams::default();
    let mobility_kind = e.take("material.mobility");
    let m0 = e.parse("material.m0", "a number", defaults.mobility.amplitude())?;
    let mobility = match mobility_kind {
        None => MobilityModel::Constant(m0),
        Some((line, raw)) => match raw.as_str() {
            "constant" => MobilityModel::Constant(m0),
            "degenerate" => MobilityModel::Degenerate(m0),
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("material.mobility: expected constant or degenerate, got {other:?}"),
                })
            }
        },
    };
    let material = MaterialParams {
        rho0: e.parse("material.rho0", "a number", defaults.rho0)?,
        gamma: e.parse("material.gamma", "a number", defaults.gamma)?,
        theta0: e.parse("material.theta0", "a number", defaults.theta0)?,
        mobility,
        nu_a: e.parse("material.nu_a", "a number", defaults.nu_a)?,
        nu_b: e.parse("material.nu_b", "a number", defaults.nu_b)?,
        kappa0: e.parse("material.kappa0", "a number", defaults.kappa0)?,
        spec_heat: e.parse("material.spec_heat", "a number", defaults.spec_heat)?,
    };
    material.validate()?;

    let step_defaults = StepConfig::default();
    let step = StepConfig {
        dt: e.parse("step.dt", "a number", step_defaults.dt)?,
        stabilization_s: e.parse(
            "step.stabilization_s",
            "a number",
            step_defaults.stabilization_s,
        )?,
        projection_tol: e.parse(
            "step.projection_tol",
            "a number",
            step_defaults.projection_tol,
        )?,
        max_linear_iters: e.parse(
            "step.max_linear_iters",
            "an integer",
            step_defaults.max_linear_iters,
        )?,
    };
    step.validate()?;

    let c_mean = e.parse("initial.c_mean", "a number", 0.0)?;
    let amplitude = e.parse("initial.amplitude", "a number", 0.01)?;
    let seed = e.parse("initial.seed", "an integer", 42u64)?;
    let k = e.parse("initial.k", "an integer", 4usize)?;
    let rotation_rate = e.parse("initial.rotation_rate", "a number", 0.5)?;
    let theta_init = e.parse("initial.theta_init", "a number", 1.0)?;
    let snapshot_prefix = e.take("initial.snapshot_prefix");
    let mode = e.take("initial.mode");
    let initial = match mode.as_ref().map(|(_, m)| m.as_str()) {
        None | Some("uniform_noise") => InitialCondition::UniformNoise {
            c_mean,
            amplitude,
            seed,
        },
        Some("single_mode") => InitialCondition::SingleMode { c_mean, amplitude, k },
        Some("vortex_stir") => InitialCondition::VortexStir {
            c_mean,
            amplitude,
            seed,
            rotation_rate,
        },
        Some("from_snapshot") => {
            let Some((_, raw)) = snapshot_prefix else {
                return Err(Error::Validation {
                    key: "initial.snapshot_prefix".into(),
                    msg: "from_snapshot needs a snapshot_prefix".into(),
                });
            };
            let p = PathBuf::from(raw);
            let prefix = if p.is_absolute() { p } else { dir.join(p) };
            InitialCondition::FromSnapshot { prefix }
        }
        Some(other) => {
            let line = mode.as_ref().unwrap().0;
            return Err(Error::Parse {
                line,
                msg: format!(
                    "initial.mode: expected uniform_noise, single_mode, vortex_stir, \
                     or from_snapshot, got {other:?}"
                ),
            });
        }
    };

    let sources = SourceSpec {
        body_force_x: e.parse("sources.body_force_x", "a number", 0.0)?,
        body_force_y: e.parse("sources.body_force_y", "a number", 0.0)?,
        heat_supply: e.parse("sources.heat_supply", "a number", 0.0)?,
    };

    let t_end = e.parse("run.t_end", "a number", 0.1)?;
    let snapshot_every = e.parse("run.snapshot_every", "an integer", 0u64)?;
    let output_dir = match e.take("run.output_dir") {
        None => dir.join("out"),
        Some((_, raw)) => {
            let p = PathBuf::from(raw);
            if p.is_absolute() {
                p
            } else {
                dir.join(p)
            }
        }
    };

    let cfg = RunConfig {
        grid,
        material,
        step,
        initial,
        theta_init,
        sources,
        t_end,
        snapshot_every,
        output_dir,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and parses a configuration file; relative paths inside it are
/// resolved against the file's own directory.
pub fn load_config(path: &Path) -> Result<RunConfig, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let dir = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, dir)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), Error> {
        self.material.validate()?;
        self.step.validate()?;
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Validation {
                key: "run.t_end".into(),
                msg: format!("must be positive and finite (got {})", self.t_end),
            });
        }
        if !(self.theta_init > 0.0 && self.theta_init.is_finite()) {
            return Err(Error::Validation {
                key: "initial.theta_init".into(),
                msg: format!("must be positive and finite (got {})", self.theta_init),
            });
        }
        let finite = |key: &str, v: f64| -> Result<(), Error> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::Validation {
                    key: key.into(),
                    msg: format!("must be finite (got {v})"),
                })
            }
        };
        finite("sources.body_force_x", self.sources.body_force_x)?;
        finite("sources.body_force_y", self.sources.body_force_y)?;
        finite("sources.heat_supply", self.sources.heat_supply)?;
        match &self.initial {
            InitialCondition::UniformNoise { c_mean, amplitude, .. }
            | InitialCondition::VortexStir { c_mean, amplitude, .. } => {
                finite("initial.c_mean", *c_mean)?;
                if !(*amplitude >= 0.0 && amplitude.is_finite()) {
                    return Err(Error::Validation {
                        key: "initial.amplitude".into(),
                        msg: format!("must be nonnegative and finite (got {amplitude})"),
                    });
                }
            }
            InitialCondition::SingleMode { c_mean, amplitude, k } => {
                finite("initial.c_mean", *c_mean)?;
                finite("initial.amplitude", *amplitude)?;
                if *k < 1 || *k >= self.grid.nx() / 2 {
                    return Err(Error::Validation {
                        key: "initial.k".into(),
                        msg: format!(
                            "harmonic index must satisfy 1 <= k < nx/2 = {} (got {k})",
                            self.grid.nx() / 2
                        ),
                    });
                }
            }
            InitialCondition::FromSnapshot { prefix } => {
                for field in snapshot::STATE_FIELDS {
                    let stem = prefix
                        .file_name()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default();
                    let p = prefix.with_file_name(format!("{stem}_{field}.snap"));
                    if !p.is_file() {
                        return Err(Error::Validation {
                            key: "initial.snapshot_prefix".into(),
                            msg: format!("referenced snapshot {} does not exist", p.display()),
                        });
                    }
                }
            }
        }
        if let InitialCondition::VortexStir { rotation_rate, .. } = self.initial {
            finite("initial.rotation_rate", rotation_rate)?;
        }
        Ok(())
    }

    /// Number of steps a simulate run takes to reach `t_end`.
    pub fn step_count(&self) -> u64 {
        (self.t_end / self.step.dt - 1e-9).ceil().max(1.0) as u64
    }

    /// Builds the starting state this configuration describes.
    pub fn initial_state(&self) -> Result<State, Error> {
        let spec = self.grid;
        let theta = ScalarField::constant(spec, self.theta_init);
        let rest = VectorField::zeros(spec);
        let zero_p = ScalarField::zeros(spec);
        match &self.initial {
            InitialCondition::UniformNoise { c_mean, amplitude, seed } => {
                let c = if *amplitude == 0.0 {
                    ScalarField::constant(spec, *c_mean)
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                    let noise: Vec<f64> = (0..spec.len())
                        .map(|_| rng.gen_range(-*amplitude..*amplitude))
                        .collect();
                    let mean = noise.iter().sum::<f64>() / noise.len() as f64;
                    ScalarField::from_values(
                        spec,
                        noise.into_iter().map(|v| v - mean + c_mean).collect(),
                    )?
                };
                State::new(c, rest, zero_p, theta, 0.0)
            }
            InitialCondition::SingleMode { c_mean, amplitude, k } => {
                let w = 2.0 * std::f64::consts::PI * *k as f64 / spec.lx();
                let c = ScalarField::from_fn(spec, |x, _| c_mean + amplitude * (w * x).cos());
                State::new(c, rest, zero_p, theta, 0.0)
            }
            InitialCondition::VortexStir {
                c_mean,
                amplitude,
                seed,
                rotation_rate,
            } => {
                let c = if *amplitude == 0.0 {
                    ScalarField::constant(spec, *c_mean)
                } else {
                    verify::seeded_mixture(spec, *seed, *amplitude, 4)
                        .map(|v| v + c_mean)
                };
                // Single smooth cell from the stream function
                // psi = 4 rate sin^2(kx x / 2) sin^2(ky y / 2): the swirl and
                // its gradient vanish at the box edge, so the same start is
                // valid against walls and across the periodic seam (a rigid
                // rotation is not: it pierces the walls and tears at the
                // seam). Centre vorticity is 4 rate.
                let tau = 2.0 * std::f64::consts::PI;
                let (kx, ky) = (tau / spec.lx(), tau / spec.ly());
                let r = *rotation_rate;
                let v = VectorField::from_fn(
                    spec,
                    move |x, y| 2.0 * r * ky * (0.5 * kx * x).sin().powi(2) * (ky * y).sin(),
                    move |x, y| -2.0 * r * kx * (0.5 * ky * y).sin().powi(2) * (kx * x).sin(),
                );
                State::new(c, v, zero_p, theta, 0.0)
            }
            InitialCondition::FromSnapshot { prefix } => {
                let state = snapshot::read_state(prefix, spec.bc())?;
                if state.spec() != &spec {
                    return Err(Error::Validation {
                        key: "initial.snapshot_prefix".into(),
                        msg: format!(
                            "snapshot grid {}x{} (dx {}, dy {}) does not match the \
                             configured grid {}x{} (dx {}, dy {})",
                            state.spec().nx(),
                            state.spec().ny(),
                            state.spec().dx(),
                            state.spec().dy(),
                            spec.nx(),
                            spec.ny(),
                            spec.dx(),
                            spec.dy()
                        ),
                    });
                }
                Ok(state)
            }
        }
    }

    /// Materializes the uniform sources as grid fields.
    pub fn source_terms(&self) -> SourceTerms {
        let spec = self.grid;
        let s = &self.sources;
        let body_force = (s.body_force_x != 0.0 || s.body_force_y != 0.0).then(|| {
            VectorField::new(
                ScalarField::constant(spec, s.body_force_x),
                ScalarField::constant(spec, s.body_force_y),
            )
        });
        let heat_supply =
            (s.heat_supply != 0.0).then(|| ScalarField::constant(spec, s.heat_supply));
        SourceTerms {
            body_force,
            heat_supply,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, Error> {
        parse_config(text, Path::new("/tmp"))
    }

    const MINIMAL: &str = "[grid]\nnx = 32\nny = 32\nlx = 6.283185307179586\nly = 6.283185307179586\n";

    #[test]
    fn minimal_config_gets_documented_defaults() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.grid.nx(), 32);
        assert_eq!(cfg.grid.bc(), BcMode::Periodic);
        assert_eq!(cfg.material, MaterialParams::default());
        assert_eq!(cfg.step, StepConfig::default());
        assert!(matches!(
            cfg.initial,
            InitialCondition::UniformNoise { c_mean, amplitude, seed: 42 }
                if c_mean == 0.0 && amplitude == 0.01
        ));
        assert_eq!(cfg.theta_init, 1.0);
        assert_eq!(cfg.sources, SourceSpec::default());
        assert_eq!(cfg.t_end, 0.1);
        assert_eq!(cfg.snapshot_every, 0);
        assert_eq!(cfg.output_dir, Path::new("/tmp/out"));
    }

    #[test]
    fn full_config_round_trips_every_field() {
        let text = r#"
# demonstration run
[grid]
nx = 64
ny = 48
lx = 6.0
ly = 4.0
bc = physical

[material]
rho0 = 2.0
gamma = 0.02   # interface energy
theta0 = 1.5
mobility = degenerate
m0 = 0.7
nu_a = 0.05
nu_b = 0.15
kappa0 = 0.3
spec_heat = 1.25

[step]
dt = 0.0005
stabilization_s = 1.5
projection_tol = 1e-8
max_linear_iters = 500

[initial]
mode = vortex_stir
c_mean = 0.1
amplitude = 0.02
seed = 7
rotation_rate = 0.25
theta_init = 0.75

[sources]
body_force_x = 0.01
heat_supply = 0.002

[run]
t_end = 2.5
snapshot_every = 100
output_dir = results
"#;
        let cfg = parse(text).unwrap();
        assert_eq!(cfg.grid.ny(), 48);
        assert_eq!(cfg.grid.bc(), BcMode::Physical);
        assert_eq!(cfg.material.rho0, 2.0);
        assert!(matches!(cfg.material.mobility, MobilityModel::Degenerate(m) if m == 0.7));
        assert_eq!(cfg.step.dt, 5e-4);
        assert_eq!(cfg.step.max_linear_iters, 500);
        assert!(matches!(
            cfg.initial,
            InitialCondition::VortexStir { seed: 7, rotation_rate, .. } if rotation_rate == 0.25
        ));
        assert_eq!(cfg.theta_init, 0.75);
        assert_eq!(cfg.sources.body_force_x, 0.01);
        assert_eq!(cfg.sources.body_force_y, 0.0);
        assert_eq!(cfg.t_end, 2.5);
        assert_eq!(cfg.snapshot_every, 100);
        assert_eq!(cfg.output_dir, Path::new("/tmp/results"));
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected_with_line_numbers() {
        let err = parse("[grid]\nnx = 32\nny = 32\nlx = 1.0\nly = 1.0\nwumpus = 3\n").unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 6);
                assert!(msg.contains("wumpus"), "{msg}");
            }
            other => panic!("expected parse error, got {other}"),
        }
        let err = parse("[grud]\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        // A known key placed in the wrong section is just as unknown.
        let err = parse(&format!("{MINIMAL}dt = 0.1\n")).unwrap_err();
        assert!(err.to_string().contains("dt"), "{err}");
    }

    #[test]
    fn duplicate_keys_name_both_lines() {
        let text = "[grid]\nnx = 32\nny = 32\nlx = 1.0\nly = 1.0\nnx = 64\n";
        let err = parse(text).unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 6);
                assert!(msg.contains("grid.nx"), "{msg}");
                assert!(msg.contains("lines 2 and 6"), "{msg}");
            }
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn negative_theta0_is_a_validation_error_naming_the_key() {
        let text = format!("{MINIMAL}[material]\ntheta0 = -1\n");
        let err = parse(&text).unwrap_err();
        match err {
            Error::Validation { key, .. } => assert!(key.contains("theta0"), "{key}"),
            other => panic!("expected validation error, got {other}"),
        }
        assert_eq!(parse(&format!("{MINIMAL}[material]\ntheta0 = -1\n")).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn type_mismatches_point_at_the_offending_line() {
        let text = format!("{MINIMAL}[step]\ndt = fast\n");
        let err = parse(&text).unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 7);
                assert!(msg.contains("dt"), "{msg}");
            }
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn keys_before_any_section_are_rejected() {
        let err = parse("nx = 32\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn missing_grid_section_is_rejected() {
        let err = parse("[material]\ngamma = 0.01\n").unwrap_err();
        assert!(matches!(err, Error::Validation { .. }));
    }

    #[test]
    fn from_snapshot_requires_existing_files() {
        let text = format!(
            "{MINIMAL}[initial]\nmode = from_snapshot\nsnapshot_prefix = missing/state\n"
        );
        let err = parse(&text).unwrap_err();
        match err {
            Error::Validation { key, msg } => {
                assert!(key.contains("snapshot_prefix"), "{key}");
                assert!(msg.contains("does not exist"), "{msg}");
            }
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn initial_states_are_deterministic_and_respect_the_mean() {
        let text = format!(
            "{MINIMAL}[initial]\nmode = uniform_noise\nc_mean = 0.25\namplitude = 0.05\nseed = 9\n"
        );
        let cfg = parse(&text).unwrap();
        let a = cfg.initial_state().unwrap();
        let b = cfg.initial_state().unwrap();
        assert_eq!(a.c.values(), b.c.values());
        assert!((a.c.mean() - 0.25).abs() < 1e-12);
        // Recentring shifts every sample by the raw-noise mean, so the
        // deviation bound carries that slack.
        assert!(a.c.sub(&ScalarField::constant(cfg.grid, 0.25)).max_abs() <= 0.05 * 1.05);
        assert_eq!(a.theta.get(0, 0), 1.0);
        assert_eq!(a.v.max_abs(), 0.0);
    }

    #[test]
    fn vortex_stir_builds_a_wall_compatible_vortex() {
        let text = format!(
            "{MINIMAL}[initial]\nmode = vortex_stir\namplitude = 0.01\nrotation_rate = 0.5\n"
        );
        let cfg = parse(&text).unwrap();
        let state = cfg.initial_state().unwrap();
        // Centre vorticity is 4 rate (up to the second-order stencil).
        let mid = state.v.curl2d().get(16, 16);
        assert!((mid - 2.0).abs() < 0.05, "curl {mid}");
        // The swirl dies out at the box edge, for walls and seam alike.
        let edge = state.v.x.get(0, 16).abs().max(state.v.y.get(16, 0).abs());
        assert!(edge < 1e-3, "edge speed {edge}");
        let peak = state.v.max_abs();
        assert!(peak > 0.9 && peak <= 1.0 + 1e-12, "peak speed {peak}");
    }

    #[test]
    fn source_terms_materialize_only_nonzero_supplies() {
        let cfg = parse(MINIMAL).unwrap();
        let s = cfg.source_terms();
        assert!(s.body_force.is_none() && s.heat_supply.is_none());
        let cfg = parse(&format!("{MINIMAL}[sources]\nheat_supply = 0.5\n")).unwrap();
        let s = cfg.source_terms();
        assert!(s.body_force.is_none());
        assert_eq!(s.heat_supply.unwrap().get(3, 3), 0.5);
    }
}
