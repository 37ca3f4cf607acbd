//! Periodic-mode solves in the discrete Fourier frame.
//!
//! Every spatial operator in this crate is a central difference, so on a
//! periodic grid its symbol is built from `s = sin(k d) / d`. The implicit
//! composition solve and the pressure projection are therefore diagonal here.
//! Symbols are pinned to exactly 0.0 at the modes central differences cannot
//! see (k = 0 and the Nyquist lines), so null modes are detected by value.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub(crate) struct Spectral {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex<f64>>,
    work: Vec<Complex<f64>>,
    /// First-derivative symbol magnitudes `sin(2 pi k / n) / d` per index.
    pub sx: Vec<f64>,
    pub sy: Vec<f64>,
}

fn symbol_row(n: usize, d: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            if k == 0 || 2 * k == n {
                0.0
            } else {
                (2.0 * std::f64::consts::PI * k as f64 / n as f64).sin() / d
            }
        })
        .collect()
}

fn transpose(src: &[Complex<f64>], dst: &mut [Complex<f64>], nx: usize, ny: usize) {
    for j in 0..ny {
        for i in 0..nx {
            dst[j + ny * i] = src[i + nx * j];
        }
    }
}

impl Spectral {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64) -> Self {
        let mut planner = FftPlanner::new();
        let fwd_x = planner.plan_fft_forward(nx);
        let inv_x = planner.plan_fft_inverse(nx);
        let fwd_y = planner.plan_fft_forward(ny);
        let inv_y = planner.plan_fft_inverse(ny);
        let scratch_len = fwd_x
            .get_inplace_scratch_len()
            .max(inv_x.get_inplace_scratch_len())
            .max(fwd_y.get_inplace_scratch_len())
            .max(inv_y.get_inplace_scratch_len());
        Spectral {
            nx,
            ny,
            fwd_x,
            inv_x,
            fwd_y,
            inv_y,
            scratch: vec![Complex::default(); scratch_len],
            work: vec![Complex::default(); nx * ny],
            sx: symbol_row(nx, dx),
            sy: symbol_row(ny, dy),
        }
    }

    /// Forward 2D DFT of real samples; output layout matches the input
    /// (`kx + nx * ky`), unnormalized.
    pub fn forward(&mut self, real: &[f64]) -> Vec<Complex<f64>> {
        debug_assert_eq!(real.len(), self.nx * self.ny);
        let mut buf: Vec<Complex<f64>> = real.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.fwd_x.process_with_scratch(&mut buf, &mut self.scratch);
        transpose(&buf, &mut self.work, self.nx, self.ny);
        self.fwd_y.process_with_scratch(&mut self.work, &mut self.scratch);
        transpose(&self.work, &mut buf, self.ny, self.nx);
        buf
    }

    /// Inverse of [`Spectral::forward`], returning the real part.
    pub fn inverse(&mut self, mut hat: Vec<Complex<f64>>) -> Vec<f64> {
        self.inv_x.process_with_scratch(&mut hat, &mut self.scratch);
        transpose(&hat, &mut self.work, self.nx, self.ny);
        self.inv_y.process_with_scratch(&mut self.work, &mut self.scratch);
        transpose(&self.work, &mut hat, self.ny, self.nx);
        let norm = 1.0 / (self.nx * self.ny) as f64;
        hat.iter().map(|c| c.re * norm).collect()
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
}
