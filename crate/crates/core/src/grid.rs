//! Uniform collocated 2D grids and the finite-difference calculus used by the
//! solver and the audit suite.
//!
//! Fields are sampled at cell centers `x_i = (i + 1/2) dx`, stored row-major
//! (`index = i + nx * j`). All first derivatives are second-order central
//! differences. `laplacian` is the literal composition `divergence(gradient(f))`
//! and `biharmonic` is `laplacian(laplacian(f))`, so the discrete operators
//! satisfy the same composition identities as the continuous ones.
//!
//! Boundary closure in `Physical` mode goes through reflected ghost cells:
//!
//! * scalars reflect evenly (ghost = mirrored interior value), the standard
//!   homogeneous-Neumann closure;
//! * the normal component of a vector field reflects oddly under `divergence`,
//!   which encodes zero normal flux and makes `sum(div F) = 0` telescope
//!   exactly;
//! * velocity components reflect oddly in every direction (strong no-slip).
//!
//! Even scalar reflection and odd flux reflection are adjoint: with these
//! ghosts, `integral(f * div F) = -integral(grad f . F)` holds to roundoff in
//! both boundary modes, which the pressure projection and the audit rely on.

use crate::error::Error;

/// Boundary handling for a grid: periodic wrap-around or reflecting walls
/// (homogeneous Neumann on scalars, no-slip on velocities, no normal flux
/// under the divergence).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcMode {
    Periodic,
    Physical,
}

/// Reflection symmetry assigned to a field when a stencil reaches past a wall.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Parity {
    Even,
    Odd,
}

/// Geometry of a uniform grid. Cell sizes are derived, never stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    bc: BcMode,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64, bc: BcMode) -> Result<Self, Error> {
        if nx < 4 || ny < 4 {
            return Err(Error::Validation {
                key: "grid.nx/ny".into(),
                msg: format!("cell counts must be at least 4 (got {nx} x {ny})"),
            });
        }
        if !(lx > 0.0) || !(ly > 0.0) || !lx.is_finite() || !ly.is_finite() {
            return Err(Error::Validation {
                key: "grid.lx/ly".into(),
                msg: format!("side lengths must be positive and finite (got {lx} x {ly})"),
            });
        }
        Ok(Self { nx, ny, lx, ly, bc })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn bc(&self) -> BcMode {
        self.bc
    }
    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }
    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        i + self.nx * j
    }
    /// x coordinate of the cell center in column `i`.
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx()
    }
    /// y coordinate of the cell center in row `j`.
    pub fn y(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dy()
    }
}

/// Scalar samples on a grid. Operators never mutate their input.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    spec: GridSpec,
    values: Vec<f64>,
}

/// Vector samples on a grid; both components share the same `GridSpec`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub x: ScalarField,
    pub y: ScalarField,
}

/// Four scalar arrays holding a rank-2 tensor sample per cell.
#[derive(Debug, Clone)]
pub struct Tensor2Field {
    pub xx: ScalarField,
    pub xy: ScalarField,
    pub yx: ScalarField,
    pub yy: ScalarField,
}

/// Compensated summation; keeps grid integrals at roundoff accuracy.
fn kahan_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

impl ScalarField {
    pub fn zeros(spec: GridSpec) -> Self {
        Self { spec, values: vec![0.0; spec.len()] }
    }

    /// Constant field.
    pub fn constant(spec: GridSpec, value: f64) -> Self {
        Self { spec, values: vec![value; spec.len()] }
    }

    /// Samples `f(x, y)` at every cell center.
    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(spec.len());
        for j in 0..spec.ny {
            let y = spec.y(j);
            for i in 0..spec.nx {
                values.push(f(spec.x(i), y));
            }
        }
        Self { spec, values }
    }

    /// Builds a field from raw row-major samples; rejects wrong lengths and
    /// non-finite entries.
    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self, Error> {
        if values.len() != spec.len() {
            return Err(Error::Validation {
                key: "field.values".into(),
                msg: format!("expected {} samples, got {}", spec.len(), values.len()),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation {
                key: "field.values".into(),
                msg: format!("non-finite sample at flat index {pos}"),
            });
        }
        Ok(Self { spec, values })
    }

    pub(crate) fn from_raw(spec: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.len());
        Self { spec, values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.spec.idx(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Midpoint-rule integral over the domain.
    pub fn integrate(&self) -> f64 {
        kahan_sum(&self.values) * self.spec.dx() * self.spec.dy()
    }

    pub fn mean(&self) -> f64 {
        kahan_sum(&self.values) / self.spec.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// sqrt of the domain integral of the square.
    pub fn l2_norm(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        (kahan_sum(&sq) * self.spec.dx() * self.spec.dy()).sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { spec: self.spec, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.spec, other.spec, "fields live on different grids");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self { spec: self.spec, values }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }
    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }
    pub fn mul(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a * b)
    }
    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }
    /// self + s * other.
    pub fn add_scaled(&self, s: f64, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + s * b)
    }

    /// d/dx with the reflection symmetry of a plain scalar.
    pub(crate) fn ddx(&self, parity: Parity) -> ScalarField {
        ddx_impl(&self.spec, &self.values, parity)
    }
    pub(crate) fn ddy(&self, parity: Parity) -> ScalarField {
        ddy_impl(&self.spec, &self.values, parity)
    }

    /// Central-difference gradient; even ghosts in `Physical` mode.
    pub fn gradient(&self) -> VectorField {
        VectorField { x: self.ddx(Parity::Even), y: self.ddy(Parity::Even) }
    }

    /// `divergence(gradient(self))`; the two stages share their ghost logic,
    /// so the composition is the Neumann laplacian in `Physical` mode.
    pub fn laplacian(&self) -> ScalarField {
        self.gradient().divergence()
    }

    /// `laplacian(laplacian(self))`, deliberately unfused.
    pub fn biharmonic(&self) -> ScalarField {
        self.laplacian().laplacian()
    }

    /// Advective derivative `v . grad(self)`.
    pub fn advect_by(&self, v: &VectorField) -> ScalarField {
        assert_eq!(self.spec, *v.x.spec(), "fields live on different grids");
        let g = self.gradient();
        let values = (0..self.spec.len())
            .map(|n| v.x.values[n] * g.x.values[n] + v.y.values[n] * g.y.values[n])
            .collect();
        Self { spec: self.spec, values }
    }
}

impl VectorField {
    pub fn zeros(spec: GridSpec) -> Self {
        Self { x: ScalarField::zeros(spec), y: ScalarField::zeros(spec) }
    }

    pub fn new(x: ScalarField, y: ScalarField) -> Self {
        assert_eq!(x.spec, y.spec, "vector components live on different grids");
        Self { x, y }
    }

    pub fn from_fn(
        spec: GridSpec,
        fx: impl FnMut(f64, f64) -> f64,
        fy: impl FnMut(f64, f64) -> f64,
    ) -> Self {
        Self { x: ScalarField::from_fn(spec, fx), y: ScalarField::from_fn(spec, fy) }
    }

    pub fn spec(&self) -> &GridSpec {
        self.x.spec()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.x.max_abs().max(self.y.max_abs())
    }

    /// Central-difference divergence. The normal component reflects oddly at
    /// walls (zero normal flux), which makes the domain integral telescope to
    /// zero and makes this operator the exact negative adjoint of `gradient`.
    pub fn divergence(&self) -> ScalarField {
        let dfx = self.x.ddx(Parity::Odd);
        let dfy = self.y.ddy(Parity::Odd);
        dfx.add(&dfy)
    }

    /// Scalar vorticity `d(vy)/dx - d(vx)/dy`; treats the field as a velocity
    /// (odd ghosts, no-slip walls).
    pub fn curl2d(&self) -> ScalarField {
        let dvy_dx = self.y.ddx(Parity::Odd);
        let dvx_dy = self.x.ddy(Parity::Odd);
        dvy_dx.sub(&dvx_dy)
    }

    /// Velocity Jacobian: `xx = dvx/dx, xy = dvx/dy, yx = dvy/dx, yy = dvy/dy`.
    pub fn jacobian(&self) -> Tensor2Field {
        Tensor2Field {
            xx: self.x.ddx(Parity::Odd),
            xy: self.x.ddy(Parity::Odd),
            yx: self.y.ddx(Parity::Odd),
            yy: self.y.ddy(Parity::Odd),
        }
    }

    /// Symmetric velocity gradient `D = (grad v + grad v^T) / 2`.
    pub fn sym_gradient(&self) -> Tensor2Field {
        let j = self.jacobian();
        let off = j.xy.zip_with(&j.yx, |a, b| 0.5 * (a + b));
        Tensor2Field { xx: j.xx, xy: off.clone(), yx: off, yy: j.yy }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64 + Copy) -> Self {
        Self { x: self.x.zip_with(&other.x, f), y: self.y.zip_with(&other.y, f) }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }
    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }
    pub fn scale(&self, s: f64) -> Self {
        Self { x: self.x.scale(s), y: self.y.scale(s) }
    }
    pub fn add_scaled(&self, s: f64, other: &Self) -> Self {
        Self { x: self.x.add_scaled(s, &other.x), y: self.y.add_scaled(s, &other.y) }
    }

    /// Pointwise dot product with another vector field.
    pub fn dot(&self, other: &Self) -> ScalarField {
        self.x.mul(&other.x).add(&self.y.mul(&other.y))
    }
}

fn ddx_impl(spec: &GridSpec, v: &[f64], parity: Parity) -> ScalarField {
    let (nx, ny) = (spec.nx, spec.ny);
    let inv2dx = 1.0 / (2.0 * spec.dx());
    let sign = match parity {
        Parity::Even => 1.0,
        Parity::Odd => -1.0,
    };
    let mut out = vec![0.0; v.len()];
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let left = if i > 0 {
                v[row + i - 1]
            } else {
                match spec.bc {
                    BcMode::Periodic => v[row + nx - 1],
                    BcMode::Physical => sign * v[row],
                }
            };
            let right = if i + 1 < nx {
                v[row + i + 1]
            } else {
                match spec.bc {
                    BcMode::Periodic => v[row],
                    BcMode::Physical => sign * v[row + nx - 1],
                }
            };
            out[row + i] = (right - left) * inv2dx;
        }
    }
    ScalarField { spec: *spec, values: out }
}

fn ddy_impl(spec: &GridSpec, v: &[f64], parity: Parity) -> ScalarField {
    let (nx, ny) = (spec.nx, spec.ny);
    let inv2dy = 1.0 / (2.0 * spec.dy());
    let sign = match parity {
        Parity::Even => 1.0,
        Parity::Odd => -1.0,
    };
    let mut out = vec![0.0; v.len()];
    for j in 0..ny {
        for i in 0..nx {
            let below = if j > 0 {
                v[i + (j - 1) * nx]
            } else {
                match spec.bc {
                    BcMode::Periodic => v[i + (ny - 1) * nx],
                    BcMode::Physical => sign * v[i],
                }
            };
            let above = if j + 1 < ny {
                v[i + (j + 1) * nx]
            } else {
                match spec.bc {
                    BcMode::Periodic => v[i],
                    BcMode::Physical => sign * v[i + (ny - 1) * nx],
                }
            };
            out[i + j * nx] = (above - below) * inv2dy;
        }
    }
    ScalarField { spec: *spec, values: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn spec(n: usize, bc: BcMode) -> GridSpec {
        GridSpec::new(n, n, 2.0 * PI, 2.0 * PI, bc).unwrap()
    }

    fn random_field(spec: GridSpec, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..spec.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ScalarField::from_values(spec, values).unwrap()
    }

    #[test]
    fn spec_rejects_bad_dimensions() {
        assert!(GridSpec::new(3, 8, 1.0, 1.0, BcMode::Periodic).is_err());
        assert!(GridSpec::new(8, 3, 1.0, 1.0, BcMode::Periodic).is_err());
        assert!(GridSpec::new(8, 8, 0.0, 1.0, BcMode::Periodic).is_err());
        assert!(GridSpec::new(8, 8, 1.0, -1.0, BcMode::Physical).is_err());
        assert!(GridSpec::new(4, 4, 1.0, 1.0, BcMode::Physical).is_ok());
    }

    #[test]
    fn from_values_rejects_bad_input() {
        let s = spec(8, BcMode::Periodic);
        assert!(ScalarField::from_values(s, vec![0.0; 63]).is_err());
        let mut v = vec![0.0; 64];
        v[10] = f64::NAN;
        assert!(ScalarField::from_values(s, v).is_err());
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        for bc in [BcMode::Periodic, BcMode::Physical] {
            let f = ScalarField::constant(spec(16, bc), 3.25);
            let g = f.gradient();
            assert_eq!(g.x.max_abs(), 0.0);
            assert_eq!(g.y.max_abs(), 0.0);
        }
    }

    #[test]
    fn gradient_of_linear_ramp_is_exact_in_the_interior() {
        let s = spec(32, BcMode::Physical);
        let a = 1.7;
        let f = ScalarField::from_fn(s, |x, _| a * x);
        let g = f.gradient();
        for j in 0..32 {
            for i in 1..31 {
                assert!((g.x.get(i, j) - a).abs() < 1e-13);
            }
        }
    }

    /// Max-norm error of `op` against `exact` on nx in {32, 64, 128}; every
    /// doubling must shrink the error by at least 3.5.
    fn assert_second_order(
        bc: BcMode,
        op: impl Fn(GridSpec) -> ScalarField,
        exact: impl Fn(f64, f64) -> f64,
    ) {
        let mut errs = Vec::new();
        for n in [32usize, 64, 128] {
            let s = spec(n, bc);
            let got = op(s);
            let want = ScalarField::from_fn(s, &exact);
            errs.push(got.sub(&want).max_abs());
        }
        for w in errs.windows(2) {
            assert!(
                w[0] / w[1] >= 3.5,
                "convergence ratio {} below 3.5 (errors {:?})",
                w[0] / w[1],
                errs
            );
        }
    }

    #[test]
    fn gradient_is_second_order_periodic() {
        let f = |x: f64, y: f64| (x).sin() * (2.0 * y).cos();
        assert_second_order(
            BcMode::Periodic,
            |s| ScalarField::from_fn(s, f).gradient().x,
            |x, y| x.cos() * (2.0 * y).cos(),
        );
        assert_second_order(
            BcMode::Periodic,
            |s| ScalarField::from_fn(s, f).gradient().y,
            |x, y| -2.0 * x.sin() * (2.0 * y).sin(),
        );
    }

    #[test]
    fn gradient_is_second_order_physical() {
        // cos(k x / 2) modes reflect evenly at the walls, so the mirrored
        // ghosts are exact and the boundary keeps second order.
        let f = |x: f64, y: f64| (0.5 * x).cos() * (y).cos();
        assert_second_order(
            BcMode::Physical,
            |s| ScalarField::from_fn(s, f).gradient().x,
            |x, y| -0.5 * (0.5 * x).sin() * y.cos(),
        );
    }

    #[test]
    fn divergence_is_second_order() {
        let fx = |x: f64, y: f64| (x).sin() * (y).cos();
        let fy = |x: f64, y: f64| (2.0 * x).cos() * (y).sin();
        assert_second_order(
            BcMode::Periodic,
            |s| VectorField::from_fn(s, fx, fy).divergence(),
            |x, y| x.cos() * y.cos() + (2.0 * x).cos() * y.cos(),
        );
    }

    #[test]
    fn laplacian_is_second_order_both_modes() {
        assert_second_order(
            BcMode::Periodic,
            |s| ScalarField::from_fn(s, |x, y| x.sin() * y.sin()).laplacian(),
            |x, y| -2.0 * x.sin() * y.sin(),
        );
        // Even-reflecting mode for the walls.
        assert_second_order(
            BcMode::Physical,
            |s| ScalarField::from_fn(s, |x, y| (0.5 * x).cos() * (0.5 * y).cos()).laplacian(),
            |x, y| -0.5 * (0.5 * x).cos() * (0.5 * y).cos(),
        );
    }

    #[test]
    fn laplacian_matches_sine_oracle() {
        // f = sin(2 pi x / lx) sin(2 pi y / ly) with lx = ly = 2 pi.
        let s = spec(128, BcMode::Periodic);
        let f = ScalarField::from_fn(s, |x, y| x.sin() * y.sin());
        let lap = f.laplacian();
        let want = f.scale(-2.0);
        assert!(lap.sub(&want).max_abs() < 2e-3);
    }

    #[test]
    fn laplacian_of_quadratic_is_exact_in_the_interior() {
        let s = spec(32, BcMode::Physical);
        let f = ScalarField::from_fn(s, |x, _| x * x);
        let lap = f.laplacian();
        // Composition has stencil radius 2.
        for j in 0..32 {
            for i in 2..30 {
                assert!((lap.get(i, j) - 2.0).abs() < 1e-11, "at ({i},{j}): {}", lap.get(i, j));
            }
        }
    }

    #[test]
    fn laplacian_is_divergence_of_gradient_bitwise() {
        for bc in [BcMode::Periodic, BcMode::Physical] {
            let f = random_field(spec(24, bc), 7);
            assert_eq!(f.laplacian().values(), f.gradient().divergence().values());
        }
    }

    #[test]
    fn biharmonic_is_laplacian_twice_bitwise() {
        for bc in [BcMode::Periodic, BcMode::Physical] {
            let f = random_field(spec(24, bc), 8);
            assert_eq!(f.biharmonic().values(), f.laplacian().laplacian().values());
        }
    }

    #[test]
    fn biharmonic_matches_k4_oracle() {
        let s = spec(128, BcMode::Periodic);
        let f = ScalarField::from_fn(s, |x, _| (2.0 * x).sin());
        let bih = f.biharmonic();
        let want = f.scale(16.0);
        assert!(bih.sub(&want).max_abs() < 16.0 * 0.01);
        assert_second_order(
            BcMode::Periodic,
            |s| ScalarField::from_fn(s, |x, _| (2.0 * x).sin()).biharmonic(),
            |x, _| 16.0 * (2.0 * x).sin(),
        );
    }

    #[test]
    fn curl_of_rigid_rotation_is_twice_omega() {
        let s = spec(32, BcMode::Physical);
        let (cx, cy) = (PI, PI);
        let omega = 0.75;
        let v = VectorField::from_fn(s, |_, y| -omega * (y - cy), |x, _| omega * (x - cx));
        let w = v.curl2d();
        for j in 1..31 {
            for i in 1..31 {
                assert!((w.get(i, j) - 2.0 * omega).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn curl_of_gradient_vanishes() {
        let f = random_field(spec(32, BcMode::Periodic), 9);
        // Central x- and y-differences commute, so the discrete curl of a
        // discrete gradient is pure roundoff.
        let c = f.gradient().curl2d();
        assert!(c.max_abs() < 1e-12);
    }

    #[test]
    fn curl_is_second_order() {
        assert_second_order(
            BcMode::Periodic,
            |s| {
                VectorField::from_fn(s, |x, y| (x).sin() * (y).sin(), |x, y| (x).cos() * (y).cos())
                    .curl2d()
            },
            |x, y| -x.sin() * y.cos() - x.sin() * y.cos(),
        );
    }

    #[test]
    fn sym_gradient_of_rigid_rotation_vanishes_in_the_interior() {
        let s = spec(32, BcMode::Physical);
        let v = VectorField::from_fn(s, |_, y| -(y - PI), |x, _| x - PI);
        let d = v.sym_gradient();
        for j in 1..31 {
            for i in 1..31 {
                for t in [&d.xx, &d.xy, &d.yx, &d.yy] {
                    assert!(t.get(i, j).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn sym_gradient_of_shear_is_half_rate() {
        let s = spec(32, BcMode::Physical);
        let a = 0.9;
        let v = VectorField::from_fn(s, |_, y| a * (y - PI), |_, _| 0.0);
        let d = v.sym_gradient();
        for j in 1..31 {
            for i in 1..31 {
                assert!((d.xy.get(i, j) - 0.5 * a).abs() < 1e-13);
                assert!((d.yx.get(i, j) - 0.5 * a).abs() < 1e-13);
                assert!(d.xx.get(i, j).abs() < 1e-13);
                assert!(d.yy.get(i, j).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn trace_of_sym_gradient_equals_divergence() {
        for bc in [BcMode::Periodic, BcMode::Physical] {
            let s = spec(16, bc);
            let v = VectorField::new(random_field(s, 10), random_field(s, 11));
            let d = v.sym_gradient();
            let trace = d.xx.add(&d.yy);
            assert_eq!(trace.values(), v.divergence().values());
        }
    }

    #[test]
    fn integrate_constant_and_modes() {
        let s = spec(128, BcMode::Periodic);
        let area = s.area();
        let one = ScalarField::constant(s, 1.0);
        assert!((one.integrate() - area).abs() < 1e-12 * area);

        let sine = ScalarField::from_fn(s, |x, _| x.sin());
        assert!(sine.integrate().abs() < 1e-12 * area);

        // sin^2 integrates to exactly half the area on a periodic grid: the
        // midpoint rule is exact for the resolved cos(2x) component.
        let sin2 = ScalarField::from_fn(s, |x, _| x.sin() * x.sin());
        assert!((sin2.integrate() - 0.5 * area).abs() < 1e-12 * area);
    }

    #[test]
    fn advect_uniform_velocity_on_ramp() {
        let s = spec(32, BcMode::Physical);
        let f = ScalarField::from_fn(s, |x, _| x);
        let v = VectorField::from_fn(s, |_, _| 1.0, |_, _| 0.0);
        let adv = f.advect_by(&v);
        for j in 0..32 {
            for i in 1..31 {
                assert!((adv.get(i, j) - 1.0).abs() < 1e-13);
            }
        }
        let zero = f.advect_by(&VectorField::zeros(s));
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn advect_of_constant_field_is_zero() {
        let s = spec(16, BcMode::Periodic);
        let f = ScalarField::constant(s, 2.0);
        let v = VectorField::new(random_field(s, 12), random_field(s, 13));
        assert_eq!(f.advect_by(&v).max_abs(), 0.0);
    }

    #[test]
    fn divergence_integral_telescopes_to_zero() {
        for bc in [BcMode::Periodic, BcMode::Physical] {
            let s = spec(64, bc);
            let v = VectorField::new(random_field(s, 20), random_field(s, 21));
            let total = v.divergence().integrate();
            assert!(total.abs() < 1e-12 * s.area(), "{bc:?}: {total}");
        }
    }

    #[test]
    fn divergence_is_negative_adjoint_of_gradient() {
        for bc in [BcMode::Periodic, BcMode::Physical] {
            let s = spec(48, bc);
            let f = random_field(s, 30);
            let v = VectorField::new(random_field(s, 31), random_field(s, 32));
            let lhs = f.mul(&v.divergence()).integrate();
            let rhs = f.gradient().dot(&v).integrate();
            assert!((lhs + rhs).abs() < 1e-10 * s.area(), "{bc:?}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn advection_sum_matches_divergence_pairing() {
        // sum(v . grad f) = -sum(f div v) with the chosen ghost parities, in
        // both modes; mass bookkeeping under advection rests on this.
        for bc in [BcMode::Periodic, BcMode::Physical] {
            let s = spec(32, bc);
            let f = random_field(s, 40);
            let v = VectorField::new(random_field(s, 41), random_field(s, 42));
            let lhs = f.advect_by(&v).integrate();
            let rhs = -f.mul(&v.divergence()).integrate();
            assert!((lhs - rhs).abs() < 1e-11 * s.area());
        }
    }

    mod properties {
        use super::*;
        use proptest::collection::vec as pvec;
        use proptest::prelude::*;

        fn arb_case() -> impl Strategy<Value = (usize, usize, bool, Vec<f64>, Vec<f64>, Vec<f64>)> {
            ((4usize..10), (4usize..10), any::<bool>()).prop_flat_map(|(nx, ny, per)| {
                let n = nx * ny;
                (
                    Just(nx),
                    Just(ny),
                    Just(per),
                    pvec(-1.0f64..1.0, n),
                    pvec(-1.0f64..1.0, n),
                    pvec(-1.0f64..1.0, n),
                )
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn adjointness_holds_on_random_grids((nx, ny, per, fv, vx, vy) in arb_case()) {
                let bc = if per { BcMode::Periodic } else { BcMode::Physical };
                let s = GridSpec::new(nx, ny, 1.3, 0.7, bc).unwrap();
                let f = ScalarField::from_values(s, fv).unwrap();
                let v = VectorField::new(
                    ScalarField::from_values(s, vx).unwrap(),
                    ScalarField::from_values(s, vy).unwrap(),
                );
                let lhs = f.mul(&v.divergence()).integrate();
                let rhs = f.gradient().dot(&v).integrate();
                prop_assert!((lhs + rhs).abs() < 1e-11);
                prop_assert!(v.divergence().integrate().abs() < 1e-11);
            }
        }
    }
}
