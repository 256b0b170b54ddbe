//! 2D FFT plumbing on top of `rustfft`, with the Fourier-series convention
//! used everywhere in this crate:
//!
//! ```text
//! f(x_j) = sum_m fhat(m) exp(+i xi_m . x_j),   xi_m = 2 pi m / L,
//! fhat(m) = (1/N) sum_j f(x_j) exp(-i xi_m . x_j).
//! ```
//!
//! `forward` / `inverse` are the unnormalized DFTs; `coefficients` applies
//! the 1/N factor.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::lattice::{signed_index, Grid2D};

/// Cached FFT plans for one grid shape.
pub struct Fft2 {
    n: [usize; 2],
    fwd: [Arc<dyn Fft<f64>>; 2],
    inv: [Arc<dyn Fft<f64>>; 2],
}

impl Fft2 {
    pub fn new(n: [usize; 2]) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            n,
            fwd: [
                planner.plan_fft_forward(n[1]),
                planner.plan_fft_forward(n[0]),
            ],
            inv: [
                planner.plan_fft_inverse(n[1]),
                planner.plan_fft_inverse(n[0]),
            ],
        }
    }

    pub fn shape(&self) -> [usize; 2] {
        self.n
    }

    fn apply(&self, data: &mut Array2<Complex64>, inverse: bool) {
        assert_eq!(data.dim(), (self.n[0], self.n[1]));
        let plans = if inverse { &self.inv } else { &self.fwd };
        // axis 1: contiguous rows
        for mut row in data.rows_mut() {
            plans[0].process(row.as_slice_mut().expect("standard layout"));
        }
        // axis 0: gather columns into scratch
        let mut scratch = vec![Complex64::default(); self.n[0]];
        for j in 0..self.n[1] {
            for i in 0..self.n[0] {
                scratch[i] = data[[i, j]];
            }
            plans[1].process(&mut scratch);
            for i in 0..self.n[0] {
                data[[i, j]] = scratch[i];
            }
        }
    }

    /// Unnormalized forward transform, `sum_j f_j exp(-2 pi i j m / n)`.
    pub fn forward(&self, data: &mut Array2<Complex64>) {
        self.apply(data, false);
    }

    /// Unnormalized inverse transform.
    pub fn inverse(&self, data: &mut Array2<Complex64>) {
        self.apply(data, true);
    }

    /// Fourier-series coefficients of `f` (forward with 1/N).
    pub fn coefficients(&self, f: &Array2<Complex64>) -> Array2<Complex64> {
        let mut out = f.clone();
        self.forward(&mut out);
        let norm = 1.0 / (self.n[0] * self.n[1]) as f64;
        out.mapv_inplace(|v| v * norm);
        out
    }

    /// Field from Fourier-series coefficients (unnormalized inverse).
    pub fn synthesis(&self, fhat: &Array2<Complex64>) -> Array2<Complex64> {
        let mut out = fhat.clone();
        self.inverse(&mut out);
        out
    }
}

/// Signed frequency `xi_m` of FFT bin `(i, j)` on `grid`.
pub fn freq(grid: &Grid2D, i: usize, j: usize) -> [f64; 2] {
    let k = grid.conjugate();
    [
        signed_index(i, grid.n[0]) as f64 * k.spacing[0],
        signed_index(j, grid.n[1]) as f64 * k.spacing[1],
    ]
}

/// Spectral gradient of a real field; returns `(d/dx1, d/dx2)`.
pub fn gradient(fft: &Fft2, grid: &Grid2D, f: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let fc = f.mapv(|v| Complex64::new(v, 0.0));
    let fh = fft.coefficients(&fc);
    let n = grid.n;
    let mut g1 = Array2::default((n[0], n[1]));
    let mut g2 = Array2::default((n[0], n[1]));
    for i in 0..n[0] {
        for j in 0..n[1] {
            let xi = freq(grid, i, j);
            // Nyquist bins carry no derivative information for real fields.
            let x1 = if 2 * i == n[0] { 0.0 } else { xi[0] };
            let x2 = if 2 * j == n[1] { 0.0 } else { xi[1] };
            g1[[i, j]] = fh[[i, j]] * Complex64::new(0.0, x1);
            g2[[i, j]] = fh[[i, j]] * Complex64::new(0.0, x2);
        }
    }
    let g1 = fft.synthesis(&g1).mapv(|v| v.re);
    let g2 = fft.synthesis(&g2).mapv(|v| v.re);
    (g1, g2)
}
