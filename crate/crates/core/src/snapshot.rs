//! Binary field snapshots.
//!
//! One file holds one scalar field. Little-endian layout:
//!
//! | bytes | content                      |
//! |-------|------------------------------|
//! | 8     | magic `SPINFLD1`             |
//! | 4     | format version (`u32`, = 1)  |
//! | 4     | field-name length (`u32`)    |
//! | n     | field name (UTF-8)           |
//! | 4 + 4 | `nx`, `ny` (`u32`)           |
//! | 8 + 8 | `dx`, `dy` (`f64`)           |
//! | 8     | simulation time (`f64`)      |
//! | 8·n   | samples, row-major (`f64`)   |
//!
//! Reading back a written file reproduces every sample bitwise: values pass
//! through `to_le_bytes`/`from_le_bytes` untouched, NaN payloads included.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::dynamics::State;
use crate::error::Error;
use crate::grid::{BcMode, GridSpec, ScalarField, VectorField};

pub const MAGIC: [u8; 8] = *b"SPINFLD1";
pub const VERSION: u32 = 1;

/// Longest accepted field name; anything bigger marks a corrupt header.
const MAX_NAME: u32 = 4096;
/// Largest accepted sample count, a guard against corrupt dimension words.
const MAX_SAMPLES: u64 = 1 << 30;

/// Header of a snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMeta {
    pub name: String,
    pub nx: u32,
    pub ny: u32,
    pub dx: f64,
    pub dy: f64,
    pub time: f64,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn bad(path: &Path, msg: impl Into<String>) -> Error {
    Error::Snapshot {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

/// Writes one named field with its grid geometry and time stamp.
pub fn write_snapshot(
    path: &Path,
    name: &str,
    field: &ScalarField,
    time: f64,
) -> Result<(), Error> {
    if name.is_empty() || name.len() as u32 > MAX_NAME {
        return Err(bad(path, format!("field name length {} out of range", name.len())));
    }
    let spec = field.spec();
    let mut buf: Vec<u8> =
        Vec::with_capacity(40 + name.len() + 8 * spec.len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.extend_from_slice(&(spec.nx() as u32).to_le_bytes());
    buf.extend_from_slice(&(spec.ny() as u32).to_le_bytes());
    buf.extend_from_slice(&spec.dx().to_le_bytes());
    buf.extend_from_slice(&spec.dy().to_le_bytes());
    buf.extend_from_slice(&time.to_le_bytes());
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&buf).map_err(|e| io_err(path, e))?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, path: &Path, what: &str) -> Result<&'a [u8], Error> {
        if self.at + n > self.bytes.len() {
            return Err(bad(
                path,
                format!(
                    "truncated while reading {what}: need {n} bytes at offset {}, file has {}",
                    self.at,
                    self.bytes.len()
                ),
            ));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self, path: &Path, what: &str) -> Result<u32, Error> {
        Ok(u32::from_le_bytes(self.take(4, path, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, path: &Path, what: &str) -> Result<f64, Error> {
        Ok(f64::from_le_bytes(self.take(8, path, what)?.try_into().unwrap()))
    }
}

/// Reads a snapshot back as raw header plus row-major samples.
pub fn read_snapshot(path: &Path) -> Result<(SnapshotMeta, Vec<f64>), Error> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let mut cur = Cursor { bytes: &bytes, at: 0 };
    let magic = cur.take(8, path, "magic")?;
    if magic != MAGIC {
        return Err(bad(path, "bad magic: not a field snapshot"));
    }
    let version = cur.u32(path, "version")?;
    if version != VERSION {
        return Err(bad(path, format!("unsupported format version {version}")));
    }
    let name_len = cur.u32(path, "name length")?;
    if name_len == 0 || name_len > MAX_NAME {
        return Err(bad(path, format!("field name length {name_len} out of range")));
    }
    let name = std::str::from_utf8(cur.take(name_len as usize, path, "name")?)
        .map_err(|_| bad(path, "field name is not UTF-8"))?
        .to_string();
    let nx = cur.u32(path, "nx")?;
    let ny = cur.u32(path, "ny")?;
    let samples = u64::from(nx) * u64::from(ny);
    if nx < 4 || ny < 4 || samples > MAX_SAMPLES {
        return Err(bad(path, format!("unreasonable grid dimensions {nx} x {ny}")));
    }
    let dx = cur.f64(path, "dx")?;
    let dy = cur.f64(path, "dy")?;
    let time = cur.f64(path, "time")?;
    if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
        return Err(bad(path, format!("invalid spacings dx = {dx}, dy = {dy}")));
    }
    let mut values = Vec::with_capacity(samples as usize);
    for _ in 0..samples {
        values.push(cur.f64(path, "samples")?);
    }
    if cur.at != bytes.len() {
        return Err(bad(
            path,
            format!("{} trailing bytes after the payload", bytes.len() - cur.at),
        ));
    }
    Ok((
        SnapshotMeta { name, nx, ny, dx, dy, time },
        values,
    ))
}

/// Reads a snapshot onto a grid rebuilt from its header (`lx = nx dx`,
/// `ly = ny dy`); the boundary mode is not stored and must be supplied.
pub fn read_field(path: &Path, bc: BcMode) -> Result<(String, ScalarField, f64), Error> {
    let (meta, values) = read_snapshot(path)?;
    let spec = GridSpec::new(
        meta.nx as usize,
        meta.ny as usize,
        meta.nx as f64 * meta.dx,
        meta.ny as f64 * meta.dy,
        bc,
    )
    .map_err(|e| bad(path, format!("header does not describe a valid grid: {e}")))?;
    let field = ScalarField::from_values(spec, values)
        .map_err(|e| bad(path, format!("payload rejected: {e}")))?;
    Ok((meta.name, field, meta.time))
}

/// The five per-state field names, in the order they are written.
pub const STATE_FIELDS: [&str; 5] = ["c", "vx", "vy", "p", "theta"];

fn component_path(prefix: &Path, field: &str) -> std::path::PathBuf {
    let stem = prefix
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    prefix.with_file_name(format!("{stem}_{field}.snap"))
}

/// Writes all five state fields as `{prefix}_c.snap`, `{prefix}_vx.snap`, ...
pub fn write_state(prefix: &Path, state: &State) -> Result<(), Error> {
    let fields: [&ScalarField; 5] = [
        &state.c,
        &state.v.x,
        &state.v.y,
        &state.p,
        &state.theta,
    ];
    for (name, field) in STATE_FIELDS.iter().zip(fields) {
        write_snapshot(&component_path(prefix, name), name, field, state.t)?;
    }
    Ok(())
}

/// Reads a five-field state written by [`write_state`]. All components must
/// agree on grid geometry and time stamp, and carry their expected names.
pub fn read_state(prefix: &Path, bc: BcMode) -> Result<State, Error> {
    let mut fields = Vec::with_capacity(5);
    let mut time = None;
    for name in STATE_FIELDS {
        let path = component_path(prefix, name);
        let (stored, field, t) = read_field(&path, bc)?;
        if stored != name {
            return Err(bad(
                &path,
                format!("expected field name {name:?}, file says {stored:?}"),
            ));
        }
        match time {
            None => time = Some(t),
            Some(t0) if t0.to_bits() != t.to_bits() => {
                return Err(bad(
                    &path,
                    format!("time stamp {t} disagrees with the other components ({t0})"),
                ));
            }
            _ => {}
        }
        fields.push(field);
    }
    let spec = *fields[0].spec();
    for (name, f) in STATE_FIELDS.iter().zip(&fields) {
        if f.spec() != &spec {
            return Err(bad(
                &component_path(prefix, name),
                "components disagree on grid geometry",
            ));
        }
    }
    let theta = fields.pop().unwrap();
    let p = fields.pop().unwrap();
    let vy = fields.pop().unwrap();
    let vx = fields.pop().unwrap();
    let c = fields.pop().unwrap();
    State::new(c, VectorField::new(vx, vy), p, theta, time.unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::path::PathBuf;
    use std::sync::atomic::{AtomicU64, Ordering};

    static COUNTER: AtomicU64 = AtomicU64::new(0);

    fn scratch(tag: &str) -> PathBuf {
        let n = COUNTER.fetch_add(1, Ordering::Relaxed);
        std::env::temp_dir().join(format!(
            "spinfield-snap-{}-{tag}-{n}",
            std::process::id()
        ))
    }

    fn spec(nx: usize, ny: usize, bc: BcMode) -> GridSpec {
        GridSpec::new(nx, ny, 1.5, 2.5, bc).unwrap()
    }

    #[test]
    fn round_trip_preserves_header_and_samples_bitwise() {
        let s = spec(8, 4, BcMode::Periodic);
        let f = ScalarField::from_fn(s, |x, y| (37.0 * x).sin() * (y + 1e-12));
        let path = scratch("roundtrip");
        write_snapshot(&path, "c", &f, 0.625).unwrap();
        let (meta, values) = read_snapshot(&path).unwrap();
        assert_eq!(meta.name, "c");
        assert_eq!((meta.nx, meta.ny), (8, 4));
        assert_eq!(meta.dx.to_bits(), s.dx().to_bits());
        assert_eq!(meta.dy.to_bits(), s.dy().to_bits());
        assert_eq!(meta.time.to_bits(), 0.625_f64.to_bits());
        let orig: Vec<u64> = f.values().iter().map(|v| v.to_bits()).collect();
        let back: Vec<u64> = values.iter().map(|v| v.to_bits()).collect();
        assert_eq!(orig, back);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn bad_magic_truncation_and_trailing_bytes_are_rejected() {
        let s = spec(4, 4, BcMode::Physical);
        let f = ScalarField::constant(s, 1.0);
        let path = scratch("corrupt");
        write_snapshot(&path, "theta", &f, 0.0).unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut wrong = good.clone();
        wrong[0] ^= 0xff;
        std::fs::write(&path, &wrong).unwrap();
        assert!(matches!(
            read_snapshot(&path),
            Err(Error::Snapshot { .. })
        ));

        std::fs::write(&path, &good[..good.len() - 5]).unwrap();
        let err = read_snapshot(&path).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");

        let mut long = good.clone();
        long.extend_from_slice(&[0u8; 3]);
        std::fs::write(&path, &long).unwrap();
        let err = read_snapshot(&path).unwrap_err();
        assert!(err.to_string().contains("trailing"), "{err}");

        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn missing_file_maps_to_an_io_error() {
        let err = read_snapshot(Path::new("/nonexistent/nope.snap")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn state_round_trip_restores_every_component() {
        let s = spec(8, 8, BcMode::Physical);
        let c = ScalarField::from_fn(s, |x, y| 0.3 * (x - y));
        let v = VectorField::from_fn(s, |x, _| x, |_, y| -y);
        let p = ScalarField::from_fn(s, |x, y| x * y);
        let theta = ScalarField::constant(s, 2.0);
        let state = State::new(c, v, p, theta, 1.75).unwrap();
        let prefix = scratch("state");
        write_state(&prefix, &state).unwrap();
        let back = read_state(&prefix, BcMode::Physical).unwrap();
        assert_eq!(back.t.to_bits(), state.t.to_bits());
        for (a, b) in [
            (state.c.values(), back.c.values()),
            (state.v.x.values(), back.v.x.values()),
            (state.v.y.values(), back.v.y.values()),
            (state.p.values(), back.p.values()),
            (state.theta.values(), back.theta.values()),
        ] {
            let ab: Vec<u64> = a.iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u64> = b.iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
        for name in STATE_FIELDS {
            std::fs::remove_file(component_path(&prefix, name)).ok();
        }
    }

    proptest! {
        #[test]
        fn arbitrary_fields_survive_the_disk_round_trip(
            nx in 4usize..10,
            ny in 4usize..10,
            seedling in any::<u64>(),
            periodic in any::<bool>(),
            time in proptest::num::f64::ANY,
        ) {
            let bc = if periodic { BcMode::Periodic } else { BcMode::Physical };
            let s = spec(nx, ny, bc);
            // Deterministic pseudo-random payload, NaN and infinity included.
            let mut x = seedling | 1;
            let vals: Vec<f64> = (0..s.len())
                .map(|_| {
                    x ^= x << 13;
                    x ^= x >> 7;
                    x ^= x << 17;
                    match x % 17 {
                        0 => f64::NAN,
                        1 => f64::INFINITY,
                        _ => f64::from_bits(0x3ff0_0000_0000_0000 | (x >> 12)) - 1.5,
                    }
                })
                .collect();
            let f = ScalarField::from_raw(s, vals);
            let path = scratch("prop");
            write_snapshot(&path, "field", &f, time).unwrap();
            let (meta, back) = read_snapshot(&path).unwrap();
            prop_assert_eq!(meta.time.to_bits(), time.to_bits());
            for (a, b) in f.values().iter().zip(&back) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            std::fs::remove_file(&path).ok();
        }
    }
}
