//! Discrete matrix-valued Wigner transform, band decomposition, the two
//! potential terms of the Wigner equation, weak pairings against test
//! functions, and the residual functionals that quantify how well the band
//! densities satisfy the limiting transport equations.
//!
//! # Discretization
//!
//! On the torus with `n` grid points per axis and spacing `dx`, the shift
//! lattice is `y_j = 2 j dx / hbar`, so both arguments `x +- hbar y_j / 2`
//! land on grid nodes. The conjugate momentum grid has spacing
//! `dk = pi hbar / L`, and
//!
//! ```text
//! W(x, k_q) = (dy1 dy2 / (2 pi)^2) sum_j exp(-2 pi i q.j / n)
//!             psi(x + j dx) psi(x - j dx)^dagger
//! ```
//!
//! which makes the k-marginal identity `sum_q Tr W dk^2 = |psi(x)|^2` exact
//! on the full conjugate grid.
//!
//! The discrete transform interleaves content across momentum-node parity
//! (an x-frequency-`d` channel only populates nodes `q` with the parity of
//! `d`), so coarser momentum sampling must average blocks of `fold` nodes
//! per axis rather than subsample. The block average is computed exactly by
//! windowing the shift lattice and folding it modulo `n/fold` before the
//! FFT; block edges carry half weight, so coverage is an exact partition of
//! unity and the mass identity survives coarsening. A centered window of
//! `k_window` coarse nodes is then stored.
//!
//! The matrix Wigner equation realized by [`wigner_residual`] is
//!
//! ```text
//! dW/dt + (c/2){alpha . grad_x W} - (1/(i hbar))[H_m(k), W] - Q^a - Q^hbar = 0
//! ```
//!
//! with the symmetrized kinetic term and the potential terms
//!
//! ```text
//! Q^a    = (i/hbar) sum_mu  Vhat(mu) e^{i mu . x / a} [W(k + hbar mu/(2a)) - W(k - hbar mu/(2a))]
//! Q^hbar = (i/hbar) sum_k'  Vhat_int(k') e^{i k' . x} [W(k + hbar k'/2)   - W(k - hbar k'/2)]
//! ```
//!
//! both checked against independent oracles in the tests.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::lattice::Grid2D;
use crate::potential::PeriodicPotential;
use crate::propagate::SpinorField;
use crate::spectral::{freq, Fft2};
use crate::symbol::{alpha, group_velocity, projector, symbol, Band, DiracConstants, Mat2, ZERO2};

#[derive(Debug, Error, PartialEq)]
pub enum WignerError {
    #[error("x-stride {0} must divide the grid size {1}")]
    BadStride(usize, usize),
    #[error("fold factor {0} must be a power of two dividing the grid size {1}")]
    BadFold(usize, usize),
    #[error("momentum window {0} exceeds the folded grid size {1}")]
    WindowTooWide(usize, usize),
    #[error("need at least three snapshots for a centered time derivative")]
    TooFewSnapshots,
    #[error("snapshot times not uniformly spaced")]
    UnevenTimes,
}

/// Sampling plan for the transform: spatial stride, momentum subsampling
/// factor (`fold`), and the number of stored momentum nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WignerSettings {
    pub xstride: usize,
    pub fold: usize,
    pub k_window: usize,
}

impl WignerSettings {
    /// Full-resolution transform: every x node, full conjugate k-grid.
    pub fn full(n: usize) -> Self {
        WignerSettings {
            xstride: 1,
            fold: 1,
            k_window: n,
        }
    }

    pub fn validate(&self, grid: &Grid2D) -> Result<(), WignerError> {
        let n = grid.n[0];
        assert_eq!(grid.n[0], grid.n[1], "square grids only");
        if self.xstride == 0 || n % self.xstride != 0 {
            return Err(WignerError::BadStride(self.xstride, n));
        }
        if self.fold == 0 || !self.fold.is_power_of_two() || n % self.fold != 0 {
            return Err(WignerError::BadFold(self.fold, n));
        }
        if self.k_window > n / self.fold {
            return Err(WignerError::WindowTooWide(self.k_window, n / self.fold));
        }
        Ok(())
    }
}

/// 2x2-matrix-valued phase-space field on a coarse position grid and a
/// centered momentum window. `values` is indexed `(x_flat, k_flat)` with
/// both factors row-major.
#[derive(Debug, Clone)]
pub struct WignerField {
    pub hbar: f64,
    pub xgrid: Grid2D,
    pub kgrid: Grid2D,
    pub values: Array2<Mat2>,
}

/// Centered coordinate of momentum node `ik` in `[-n/2, n/2) * spacing`.
pub fn k_coord(kgrid: &Grid2D, ik: [usize; 2]) -> [f64; 2] {
    [
        (ik[0] as i64 - (kgrid.n[0] / 2) as i64) as f64 * kgrid.spacing[0],
        (ik[1] as i64 - (kgrid.n[1] / 2) as i64) as f64 * kgrid.spacing[1],
    ]
}

impl WignerField {
    pub fn at(&self, ix: [usize; 2], ik: [usize; 2]) -> Mat2 {
        self.values[[self.xgrid.flat(ix), self.kgrid.flat(ik)]]
    }

    pub fn phase_cell(&self) -> f64 {
        self.xgrid.spacing[0]
            * self.xgrid.spacing[1]
            * self.kgrid.spacing[0]
            * self.kgrid.spacing[1]
    }

    /// Discrete L2 norm `sqrt(sum Tr[W^dagger W] dx^2 dk^2)`.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|m| m.frobenius_sq()).sum();
        (s * self.phase_cell()).sqrt()
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        self.values
            .iter()
            .map(|m| (*m - m.adjoint()).max_abs())
            .fold(0.0, f64::max)
    }

    pub fn zeros_like(&self) -> WignerField {
        WignerField {
            hbar: self.hbar,
            xgrid: self.xgrid.clone(),
            kgrid: self.kgrid.clone(),
            values: Array2::default(self.values.dim()),
        }
    }
}

fn coarse_grid(grid: &Grid2D, stride: usize) -> Grid2D {
    Grid2D {
        extent: grid.extent,
        n: [grid.n[0] / stride, grid.n[1] / stride],
        spacing: [
            grid.spacing[0] * stride as f64,
            grid.spacing[1] * stride as f64,
        ],
    }
}

fn window_grid(grid: &Grid2D, hbar: f64, fold: usize, k_window: usize) -> Grid2D {
    let dk = [
        std::f64::consts::PI * hbar / grid.extent[0] * fold as f64,
        std::f64::consts::PI * hbar / grid.extent[1] * fold as f64,
    ];
    Grid2D {
        extent: [dk[0] * k_window as f64, dk[1] * k_window as f64],
        n: [k_window, k_window],
        spacing: dk,
    }
}

/// Shift-lattice window realizing the momentum block average: multiplying
/// `g(y_j)` by `window[j1] window[j2]` and folding makes the folded FFT
/// return `(1/fold) sum_r c_r W(fold q' + r)` per axis, with full weight for
/// interior offsets and half weight at the shared block edges.
fn block_average_window(n: usize, fold: usize) -> Vec<f64> {
    let mut w = vec![1.0; n];
    if fold == 1 {
        return w;
    }
    let s = fold as f64;
    for (j, v) in w.iter_mut().enumerate() {
        let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
        let mut acc = 1.0;
        for r in 1..fold / 2 {
            acc += 2.0 * (th * r as f64).cos();
        }
        acc += (th * 0.5 * s).cos();
        *v = acc / s;
    }
    w
}

/// W(x_c, .) over the momentum window for one coarse node, written to `out`
/// (length `k_window^2`, layout row-major centered).
fn transform_row(
    psi: &SpinorField,
    settings: &WignerSettings,
    fft_fold: &Fft2,
    window: &[f64],
    cx: [usize; 2],
    out: &mut [Mat2],
) {
    let n = psi.grid.n[0];
    let nf = n / settings.fold;
    let nk = settings.k_window;
    let shape = (nf, nf);
    let mut p11: Array2<Complex64> = Array2::default(shape);
    let mut p12: Array2<Complex64> = Array2::default(shape);
    let mut p21: Array2<Complex64> = Array2::default(shape);
    let mut p22: Array2<Complex64> = Array2::default(shape);

    for j1 in 0..n {
        let f1 = j1 % nf;
        let ip1 = (cx[0] + j1) % n;
        let im1 = (cx[0] + n - j1) % n;
        for j2 in 0..n {
            let f2 = j2 % nf;
            let ip = [ip1, (cx[1] + j2) % n];
            let im = [im1, (cx[1] + n - j2) % n];
            let a = psi.value(ip);
            let b = psi.value(im);
            let wj = window[j1] * window[j2];
            p11[[f1, f2]] += a[0] * b[0].conj() * wj;
            p12[[f1, f2]] += a[0] * b[1].conj() * wj;
            p21[[f1, f2]] += a[1] * b[0].conj() * wj;
            p22[[f1, f2]] += a[1] * b[1].conj() * wj;
        }
    }

    fft_fold.forward(&mut p11);
    fft_fold.forward(&mut p12);
    fft_fold.forward(&mut p21);
    fft_fold.forward(&mut p22);

    let dy = [
        2.0 * psi.grid.spacing[0] / psi.hbar,
        2.0 * psi.grid.spacing[1] / psi.hbar,
    ];
    let scale = dy[0] * dy[1] / (4.0 * std::f64::consts::PI * std::f64::consts::PI);
    let half = (nk / 2) as i64;
    for w1 in 0..nk {
        let q1 = (w1 as i64 - half).rem_euclid(nf as i64) as usize;
        for w2 in 0..nk {
            let q2 = (w2 as i64 - half).rem_euclid(nf as i64) as usize;
            out[w1 * nk + w2] = Mat2([
                [p11[[q1, q2]] * scale, p12[[q1, q2]] * scale],
                [p21[[q1, q2]] * scale, p22[[q1, q2]] * scale],
            ]);
        }
    }
}

/// Runs the transform row by row, handing each coarse node's momentum window
/// to `consume`. Rows are computed in parallel; `consume` must be
/// thread-safe. This is the memory-lean path used by the experiment drivers.
pub fn scan_rows<F>(
    psi: &SpinorField,
    settings: &WignerSettings,
    consume: F,
) -> Result<(Grid2D, Grid2D), WignerError>
where
    F: Fn(usize, [usize; 2], &[Mat2]) + Sync,
{
    settings.validate(&psi.grid)?;
    let xg = coarse_grid(&psi.grid, settings.xstride);
    let kg = window_grid(&psi.grid, psi.hbar, settings.fold, settings.k_window);
    let fft_fold = Fft2::new([psi.grid.n[0] / settings.fold, psi.grid.n[1] / settings.fold]);
    let window = block_average_window(psi.grid.n[0], settings.fold);
    let nk2 = settings.k_window * settings.k_window;
    (0..xg.len()).into_par_iter().for_each_init(
        || vec![ZERO2; nk2],
        |row, xf| {
            let ic = xg.unflat(xf);
            let cx = [ic[0] * settings.xstride, ic[1] * settings.xstride];
            transform_row(psi, settings, &fft_fold, &window, cx, row);
            consume(xf, ic, row);
        },
    );
    Ok((xg, kg))
}

/// Materialized Wigner transform with explicit sampling settings.
pub fn wigner_transform_with(
    psi: &SpinorField,
    settings: &WignerSettings,
) -> Result<WignerField, WignerError> {
    settings.validate(&psi.grid)?;
    let xg = coarse_grid(&psi.grid, settings.xstride);
    let kg = window_grid(&psi.grid, psi.hbar, settings.fold, settings.k_window);
    let nk2 = settings.k_window * settings.k_window;
    let values = std::sync::Mutex::new(Array2::default((xg.len(), nk2)));
    scan_rows(psi, settings, |xf, _, row| {
        let mut v = values.lock().unwrap();
        for (c, &m) in row.iter().enumerate() {
            v[[xf, c]] = m;
        }
    })?;
    Ok(WignerField {
        hbar: psi.hbar,
        xgrid: xg,
        kgrid: kg,
        values: values.into_inner().unwrap(),
    })
}

/// Wigner transform on the full conjugate momentum grid with the given
/// spatial stride.
pub fn wigner_transform(psi: &SpinorField, xstride: usize) -> Result<WignerField, WignerError> {
    let settings = WignerSettings {
        xstride,
        fold: 1,
        k_window: psi.grid.n[0],
    };
    wigner_transform_with(psi, &settings)
}

/// k-marginal `rho(x) = sum_k Tr W dk^2`, real part (the imaginary residue
/// is below 1e-10 for transforms of actual states). Exact against
/// `|psi|^2` when the field holds the full conjugate grid.
pub fn density_marginal(w: &WignerField) -> Array2<f64> {
    let dk = w.kgrid.spacing[0] * w.kgrid.spacing[1];
    let nx = w.xgrid.n;
    let mut out = Array2::zeros((nx[0], nx[1]));
    for xf in 0..w.xgrid.len() {
        let mut s = 0.0;
        for c in 0..w.values.dim().1 {
            s += w.values[[xf, c]].trace().re;
        }
        let i = w.xgrid.unflat(xf);
        out[[i[0], i[1]]] = s * dk;
    }
    out
}

/// Scalar band density on phase space.
#[derive(Debug, Clone)]
pub struct BandDensity {
    pub band: Band,
    pub xgrid: Grid2D,
    pub kgrid: Grid2D,
    pub values: Array2<f64>,
    /// Massless cutoff radius; nodes with |k| below it are masked to zero.
    pub mask_kappa: Option<f64>,
    /// Largest imaginary residue of Tr[Pi W] seen before discarding.
    pub max_imag_trace: f64,
}

impl BandDensity {
    pub fn phase_cell(&self) -> f64 {
        self.xgrid.spacing[0]
            * self.xgrid.spacing[1]
            * self.kgrid.spacing[0]
            * self.kgrid.spacing[1]
    }

    pub fn mass(&self) -> f64 {
        self.values.sum() * self.phase_cell()
    }
}

/// Splits a Wigner field into the two band densities
/// `f_pm = Re Tr[Pi_pm(k) W]` and the interband block
/// `W_OD = Pi_+ W Pi_- + Pi_- W Pi_+`.
///
/// Massless runs mask everything inside the cutoff disc `|k| < kappa`.
pub fn band_split(
    w: &WignerField,
    consts: &DiracConstants,
    kappa: f64,
) -> (BandDensity, BandDensity, WignerField) {
    let nk2 = w.values.dim().1;
    let nk = w.kgrid.n[0];
    // per-node projectors over the window; None marks masked nodes
    let projs: Vec<Option<(Mat2, Mat2)>> = (0..nk2)
        .map(|c| {
            let ik = [c / nk, c % nk];
            let k = k_coord(&w.kgrid, ik);
            if consts.is_massless() && k[0].hypot(k[1]) < kappa {
                return None;
            }
            match (
                projector(k, consts, Band::Plus),
                projector(k, consts, Band::Minus),
            ) {
                (Ok(p), Ok(m)) => Some((p, m)),
                _ => None,
            }
        })
        .collect();

    let nx = w.xgrid.len();
    let mut fp = Array2::zeros((nx, nk2));
    let mut fm = Array2::zeros((nx, nk2));
    let mut od = w.zeros_like();
    let mut max_imag: f64 = 0.0;
    for xf in 0..nx {
        for c in 0..nk2 {
            if let Some((pp, pm)) = &projs[c] {
                let m = w.values[[xf, c]];
                let tp = (*pp * m).trace();
                let tm = (*pm * m).trace();
                max_imag = max_imag.max(tp.im.abs()).max(tm.im.abs());
                fp[[xf, c]] = tp.re;
                fm[[xf, c]] = tm.re;
                od.values[[xf, c]] = *pp * m * *pm + *pm * m * *pp;
            }
        }
    }
    let mask = if consts.is_massless() {
        Some(kappa)
    } else {
        None
    };
    let mk = |band, values| BandDensity {
        band,
        xgrid: w.xgrid.clone(),
        kgrid: w.kgrid.clone(),
        values,
        mask_kappa: mask,
        max_imag_trace: max_imag,
    };
    (mk(Band::Plus, fp), mk(Band::Minus, fm), od)
}

/// Bilinear, periodically wrapped sample of one x-row of a Wigner field at
/// the fractional momentum index `ik + shift`.
fn sample_shifted(row: &[Mat2], nk: usize, ik: [usize; 2], shift: [f64; 2]) -> Mat2 {
    let pos = [ik[0] as f64 + shift[0], ik[1] as f64 + shift[1]];
    let base = [pos[0].floor(), pos[1].floor()];
    let frac = [pos[0] - base[0], pos[1] - base[1]];
    let i0 = (base[0] as i64).rem_euclid(nk as i64) as usize;
    let j0 = (base[1] as i64).rem_euclid(nk as i64) as usize;
    let i1 = (i0 + 1) % nk;
    let j1 = (j0 + 1) % nk;
    let w00 = (1.0 - frac[0]) * (1.0 - frac[1]);
    let w01 = (1.0 - frac[0]) * frac[1];
    let w10 = frac[0] * (1.0 - frac[1]);
    let w11 = frac[0] * frac[1];
    row[i0 * nk + j0].scale_re(w00)
        + row[i0 * nk + j1].scale_re(w01)
        + row[i1 * nk + j0].scale_re(w10)
        + row[i1 * nk + j1].scale_re(w11)
}

/// Applies a list of `(x-phase frequency, coefficient, k-shift)` modes to a
/// Wigner field: `(i/hbar) sum_m coeff_m e^{i q_m . x} [W(k + s_m) - W(k - s_m)]`.
fn apply_shift_modes(
    w: &WignerField,
    modes: &[([f64; 2], Complex64, [f64; 2])],
    hbar: f64,
) -> WignerField {
    let nk = w.kgrid.n[0];
    let mut out = w.zeros_like();
    let results: Vec<Vec<Mat2>> = (0..w.xgrid.len())
        .into_par_iter()
        .map(|xf| {
            let ix = w.xgrid.unflat(xf);
            let x = w.xgrid.coord(ix);
            let row: Vec<Mat2> = w.values.row(xf).to_vec();
            let mut acc = vec![ZERO2; row.len()];
            for (q, coeff, shift) in modes {
                let phase = Complex64::new(0.0, q[0] * x[0] + q[1] * x[1]).exp();
                let pref = *coeff * phase * Complex64::new(0.0, 1.0 / hbar);
                let sidx = [
                    shift[0] / w.kgrid.spacing[0],
                    shift[1] / w.kgrid.spacing[1],
                ];
                for c in 0..acc.len() {
                    let ik = [c / nk, c % nk];
                    let plus = sample_shifted(&row, nk, ik, sidx);
                    let minus = sample_shifted(&row, nk, ik, [-sidx[0], -sidx[1]]);
                    acc[c] = acc[c] + (plus - minus).scale(pref);
                }
            }
            acc
        })
        .collect();
    for (xf, acc) in results.into_iter().enumerate() {
        for (c, m) in acc.into_iter().enumerate() {
            out.values[[xf, c]] = m;
        }
    }
    out
}

/// External-potential term of the Wigner equation (dual-lattice sum form).
/// Shifted momentum arguments are sampled with bilinear interpolation and
/// periodic wraparound over the stored window.
pub fn q_ext(w: &WignerField, pot: &PeriodicPotential, consts: &DiracConstants) -> WignerField {
    let a = pot.lattice.scale_a;
    let hbar = consts.hbar;
    let modes: Vec<([f64; 2], Complex64, [f64; 2])> = pot
        .modes()
        .into_iter()
        .map(|(mu, coeff)| {
            (
                [mu[0] / a, mu[1] / a],
                coeff,
                [hbar * mu[0] / (2.0 * a), hbar * mu[1] / (2.0 * a)],
            )
        })
        .collect();
    apply_shift_modes(w, &modes, hbar)
}

/// Hartree term of the Wigner equation. `vint` is the mean-field potential
/// on the fine grid; Fourier modes above `1e-14 * max` are kept.
pub fn q_int(
    w: &WignerField,
    vint: &Array2<f64>,
    fine_grid: &Grid2D,
    consts: &DiracConstants,
) -> WignerField {
    let fft = Fft2::new(fine_grid.n);
    let vhat = fft.coefficients(&vint.mapv(|v| Complex64::new(v, 0.0)));
    let vmax = vhat.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let hbar = consts.hbar;
    let mut modes: Vec<([f64; 2], Complex64, [f64; 2])> = Vec::new();
    for i in 0..fine_grid.n[0] {
        for j in 0..fine_grid.n[1] {
            let v = vhat[[i, j]];
            if v.norm() > 1e-14 * vmax {
                let kp = freq(fine_grid, i, j);
                modes.push((kp, v, [hbar * kp[0] / 2.0, hbar * kp[1] / 2.0]));
            }
        }
    }
    apply_shift_modes(w, &modes, hbar)
}

/// Spectral x-gradient of a Wigner field, per momentum node.
fn wigner_x_gradient(w: &WignerField) -> [WignerField; 2] {
    let fft = Fft2::new(w.xgrid.n);
    let nxf = w.xgrid.len();
    let nk2 = w.values.dim().1;
    let mut g0 = w.zeros_like();
    let mut g1 = w.zeros_like();
    let n = w.xgrid.n;
    for c in 0..nk2 {
        for (r, cc) in [(0usize, 0usize), (0, 1), (1, 0), (1, 1)] {
            let mut plane: Array2<Complex64> = Array2::default((n[0], n[1]));
            for xf in 0..nxf {
                let i = w.xgrid.unflat(xf);
                plane[[i[0], i[1]]] = w.values[[xf, c]].0[r][cc];
            }
            let ph = fft.coefficients(&plane);
            let mut d0 = ph.clone();
            let mut d1 = ph;
            for i in 0..n[0] {
                for j in 0..n[1] {
                    let xi = freq(&w.xgrid, i, j);
                    let x1 = if 2 * i == n[0] { 0.0 } else { xi[0] };
                    let x2 = if 2 * j == n[1] { 0.0 } else { xi[1] };
                    d0[[i, j]] *= Complex64::new(0.0, x1);
                    d1[[i, j]] *= Complex64::new(0.0, x2);
                }
            }
            let d0 = fft.synthesis(&d0);
            let d1 = fft.synthesis(&d1);
            for xf in 0..nxf {
                let i = w.xgrid.unflat(xf);
                g0.values[[xf, c]].0[r][cc] = d0[[i[0], i[1]]];
                g1.values[[xf, c]].0[r][cc] = d1[[i[0], i[1]]];
            }
        }
    }
    [g0, g1]
}

/// Componentwise L2 norms of the residual field plus the total.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ResidualNorms {
    pub per_component: [[f64; 2]; 2],
    pub total: f64,
}

/// Assembles the full matrix Wigner-equation residual from three uniformly
/// spaced snapshot transforms and the frozen potentials at the center time.
///
/// `vint` must be the mean-field potential generated by the center
/// snapshot's density.
pub fn wigner_residual(
    w_prev: &WignerField,
    w_mid: &WignerField,
    w_next: &WignerField,
    dt_snap: f64,
    pot: &PeriodicPotential,
    vint: &Array2<f64>,
    fine_grid: &Grid2D,
    consts: &DiracConstants,
) -> ResidualNorms {
    let c = consts.light_speed;
    let nk = w_mid.kgrid.n[0];
    let grad = wigner_x_gradient(w_mid);
    let qa = q_ext(w_mid, pot, consts);
    let qh = q_int(w_mid, vint, fine_grid, consts);

    let mut sums = [[0.0f64; 2]; 2];
    for xf in 0..w_mid.xgrid.len() {
        for cidx in 0..w_mid.values.dim().1 {
            let ik = [cidx / nk, cidx % nk];
            let k = k_coord(&w_mid.kgrid, ik);
            let h = symbol(k, consts);
            let wdot =
                (w_next.values[[xf, cidx]] - w_prev.values[[xf, cidx]]).scale_re(0.5 / dt_snap);
            let transport = (alpha(0).anticommutator(grad[0].values[[xf, cidx]])
                + alpha(1).anticommutator(grad[1].values[[xf, cidx]]))
            .scale_re(0.5 * c);
            let comm = h
                .commutator(w_mid.values[[xf, cidx]])
                .scale(Complex64::new(0.0, 1.0 / consts.hbar));
            let r = wdot + transport + comm - qa.values[[xf, cidx]] - qh.values[[xf, cidx]];
            for i in 0..2 {
                for j in 0..2 {
                    sums[i][j] += r.0[i][j].norm_sqr();
                }
            }
        }
    }
    let cell = w_mid.phase_cell();
    let mut per = [[0.0; 2]; 2];
    let mut total = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            per[i][j] = (sums[i][j] * cell).sqrt();
            total += sums[i][j] * cell;
        }
    }
    ResidualNorms {
        per_component: per,
        total: total.sqrt(),
    }
}

// ---------------------------------------------------------------------------
// test functions and weak pairings

/// Real trigonometric polynomial on the torus with analytic gradient.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrigPoly {
    pub constant: f64,
    /// (frequency vector, cosine amplitude, sine amplitude)
    pub terms: Vec<([f64; 2], f64, f64)>,
}

impl TrigPoly {
    pub fn constant(c: f64) -> Self {
        TrigPoly {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn mode(freq: [f64; 2], cos_amp: f64, sin_amp: f64) -> Self {
        TrigPoly {
            constant: 0.0,
            terms: vec![(freq, cos_amp, sin_amp)],
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let mut v = self.constant;
        for (q, ca, sa) in &self.terms {
            let ph = q[0] * x[0] + q[1] * x[1];
            v += ca * ph.cos() + sa * ph.sin();
        }
        v
    }

    pub fn grad(&self, x: [f64; 2]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (q, ca, sa) in &self.terms {
            let ph = q[0] * x[0] + q[1] * x[1];
            let d = -ca * ph.sin() + sa * ph.cos();
            g[0] += q[0] * d;
            g[1] += q[1] * d;
        }
        g
    }

    /// `max(sup |eta|, sup |grad eta|)` by dense sampling over one period box.
    pub fn w1inf_norm(&self, box_extent: [f64; 2], samples: usize) -> f64 {
        let mut sup = 0.0f64;
        for i in 0..samples {
            for j in 0..samples {
                let x = [
                    box_extent[0] * i as f64 / samples as f64,
                    box_extent[1] * j as f64 / samples as f64,
                ];
                let g = self.grad(x);
                sup = sup.max(self.eval(x).abs()).max(g[0].hypot(g[1]));
            }
        }
        sup
    }
}

/// Compactly supported C^2 bump `(1 - |k - k0|^2 / r^2)^3`, clipped at zero,
/// with analytic gradient and Hessian.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct BumpC2 {
    pub center: [f64; 2],
    pub radius: f64,
}

impl BumpC2 {
    pub fn eval(&self, k: [f64; 2]) -> f64 {
        let s = self.rho2(k);
        if s >= 1.0 {
            0.0
        } else {
            (1.0 - s).powi(3)
        }
    }

    pub fn grad(&self, k: [f64; 2]) -> [f64; 2] {
        let s = self.rho2(k);
        if s >= 1.0 {
            return [0.0, 0.0];
        }
        let f = -6.0 * (1.0 - s).powi(2) / (self.radius * self.radius);
        [f * (k[0] - self.center[0]), f * (k[1] - self.center[1])]
    }

    pub fn hessian(&self, k: [f64; 2]) -> [[f64; 2]; 2] {
        let s = self.rho2(k);
        if s >= 1.0 {
            return [[0.0; 2]; 2];
        }
        let r2 = self.radius * self.radius;
        let d = [k[0] - self.center[0], k[1] - self.center[1]];
        let a = -6.0 * (1.0 - s).powi(2) / r2;
        let b = 24.0 * (1.0 - s) / (r2 * r2);
        [
            [a + b * d[0] * d[0], b * d[0] * d[1]],
            [b * d[1] * d[0], a + b * d[1] * d[1]],
        ]
    }

    fn rho2(&self, k: [f64; 2]) -> f64 {
        let d = [k[0] - self.center[0], k[1] - self.center[1]];
        (d[0] * d[0] + d[1] * d[1]) / (self.radius * self.radius)
    }

    /// Exact `max(sup |phi|, sup |grad phi|, sup |hess phi|_op)` from the
    /// closed forms: 1, 96/(25 sqrt(5) r), 6/r^2.
    pub fn w2inf_norm(&self) -> f64 {
        let grad_sup = 96.0 / (25.0 * 5.0f64.sqrt() * self.radius);
        let hess_sup = 6.0 / (self.radius * self.radius);
        1.0f64.max(grad_sup).max(hess_sup)
    }

    /// Support contained in the annulus `kappa <= |k| <= outer`.
    pub fn support_inside(&self, kappa: f64, outer: f64) -> bool {
        let c = self.center[0].hypot(self.center[1]);
        c - self.radius >= kappa && c + self.radius <= outer
    }
}

/// A separable phase-space test pair `eta(x) phi(k)` with stored norms used
/// to normalize residuals.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TestFunction {
    pub id: String,
    pub eta: TrigPoly,
    pub phi: BumpC2,
    pub eta_w1inf: f64,
    pub phi_w2inf: f64,
}

impl TestFunction {
    pub fn new(id: impl Into<String>, eta: TrigPoly, phi: BumpC2, box_extent: [f64; 2]) -> Self {
        let eta_w1inf = eta.w1inf_norm(box_extent, 512);
        TestFunction {
            id: id.into(),
            eta,
            phi,
            eta_w1inf,
            phi_w2inf: phi.w2inf_norm(),
        }
    }

    pub fn norm_product(&self) -> f64 {
        self.eta_w1inf * self.phi_w2inf
    }
}

/// Weak pairing `<f, eta phi> = sum f eta phi dx^2 dk^2`.
pub fn weak_pair(f: &BandDensity, test: &TestFunction) -> f64 {
    let nk = f.kgrid.n[0];
    let mut s = 0.0;
    for xf in 0..f.xgrid.len() {
        let x = f.xgrid.coord(f.xgrid.unflat(xf));
        let ex = test.eta.eval(x);
        if ex == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for c in 0..f.values.dim().1 {
            let v = f.values[[xf, c]];
            if v != 0.0 {
                inner += v * test.phi.eval(k_coord(&f.kgrid, [c / nk, c % nk]));
            }
        }
        s += ex * inner;
    }
    s * f.phase_cell()
}

/// `<f, (v(k) . grad eta) phi>` -- the advection pairing of the weak-form
/// transport residual (the band sign is applied by the caller).
pub fn pair_advect(f: &BandDensity, test: &TestFunction, consts: &DiracConstants) -> f64 {
    let nk = f.kgrid.n[0];
    let mut s = 0.0;
    for xf in 0..f.xgrid.len() {
        let x = f.xgrid.coord(f.xgrid.unflat(xf));
        let ge = test.eta.grad(x);
        let mut inner = 0.0;
        for c in 0..f.values.dim().1 {
            let v = f.values[[xf, c]];
            if v != 0.0 {
                let k = k_coord(&f.kgrid, [c / nk, c % nk]);
                if let Ok(vel) = group_velocity(k, consts) {
                    inner += v * (vel[0] * ge[0] + vel[1] * ge[1]) * test.phi.eval(k);
                }
            }
        }
        s += inner;
    }
    s * f.phase_cell()
}

/// `<f, eta (grad V . grad phi)>` -- the force pairing; `grad_v` holds the
/// total potential gradient sampled on the coarse x grid.
pub fn pair_force(f: &BandDensity, test: &TestFunction, grad_v: &[Array2<f64>; 2]) -> f64 {
    let nk = f.kgrid.n[0];
    let mut s = 0.0;
    for xf in 0..f.xgrid.len() {
        let i = f.xgrid.unflat(xf);
        let x = f.xgrid.coord(i);
        let ex = test.eta.eval(x);
        if ex == 0.0 {
            continue;
        }
        let gv = [grad_v[0][[i[0], i[1]]], grad_v[1][[i[0], i[1]]]];
        let mut inner = 0.0;
        for c in 0..f.values.dim().1 {
            let v = f.values[[xf, c]];
            if v != 0.0 {
                let gp = test.phi.grad(k_coord(&f.kgrid, [c / nk, c % nk]));
                inner += v * (gv[0] * gp[0] + gv[1] * gp[1]);
            }
        }
        s += ex * inner;
    }
    s * f.phase_cell()
}

/// Weak transport residual `<E_pm, eta phi>` at the interior snapshot times,
/// assembled in the integrated-by-parts form
///
/// ```text
/// <E, eta phi> = d/dt <f, eta phi> -+ <f, (v . grad eta) phi>
///                                   + <f, eta (grad V . grad phi)>
/// ```
///
/// so no derivative of `f` is ever taken. `grad_v_series` must hold the
/// total potential gradient `grad(V_Gamma(x/a) + V_int(t))` on the coarse
/// grid at each snapshot time.
pub fn transport_residual(
    f_series: &[BandDensity],
    times: &[f64],
    test: &TestFunction,
    grad_v_series: &[[Array2<f64>; 2]],
    consts: &DiracConstants,
) -> Result<Vec<(f64, f64)>, WignerError> {
    if f_series.len() < 3 {
        return Err(WignerError::TooFewSnapshots);
    }
    let h = times[1] - times[0];
    for w in times.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1.0) {
            return Err(WignerError::UnevenTimes);
        }
    }
    let band = f_series[0].band;
    let values: Vec<f64> = f_series.iter().map(|f| weak_pair(f, test)).collect();
    let mut out = Vec::new();
    for i in 1..f_series.len() - 1 {
        let ddt = (values[i + 1] - values[i - 1]) / (2.0 * h);
        let adv = pair_advect(&f_series[i], test, consts);
        let force = pair_force(&f_series[i], test, &grad_v_series[i]);
        out.push((times[i], ddt - band.sign() * adv + force));
    }
    Ok(out)
}
