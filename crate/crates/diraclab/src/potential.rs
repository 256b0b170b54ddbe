//! External periodic potential from dual-lattice Fourier data, Hartree
//! kernels given by their Fourier symbol, Wiener-algebra norms, and the
//! Gaussian-regularized Coulomb family.

use ndarray::Array2;
use num_complex::Complex64;
use thiserror::Error;

use crate::lattice::{Grid2D, LatticeSpec};
use crate::spectral::{freq, Fft2};

#[derive(Debug, Error, PartialEq)]
pub enum PotentialError {
    #[error("coefficient set breaks Hermitian symmetry at mu = ({0}, {1}); potential must be real")]
    NotHermitian(i32, i32),
    #[error("regularization width must be positive, got {0}")]
    NonPositiveSigma(f64),
}

/// Periodic external potential `V(x) = sum_mu Vhat(mu) exp(i mu . x)` over
/// the dual lattice. The stored coefficient set is finite and Hermitian
/// (`Vhat(-mu) = conj Vhat(mu)`), so the potential is real and trivially in
/// the weighted Wiener class.
#[derive(Debug, Clone)]
pub struct PeriodicPotential {
    pub lattice: LatticeSpec,
    /// (m1, m2) index over the dual basis with its coefficient.
    pub coefficients: Vec<((i32, i32), Complex64)>,
}

impl PeriodicPotential {
    pub fn new(
        lattice: LatticeSpec,
        coefficients: Vec<((i32, i32), Complex64)>,
    ) -> Result<Self, PotentialError> {
        let scale = coefficients
            .iter()
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max)
            .max(1.0);
        for &((m1, m2), v) in &coefficients {
            let partner = coefficients
                .iter()
                .find(|&&((p1, p2), _)| p1 == -m1 && p2 == -m2)
                .map(|&(_, w)| w);
            match partner {
                Some(w) if (w - v.conj()).norm() <= 1e-12 * scale => {}
                _ => return Err(PotentialError::NotHermitian(m1, m2)),
            }
        }
        Ok(PeriodicPotential {
            lattice,
            coefficients,
        })
    }

    pub fn zero(lattice: LatticeSpec) -> Self {
        PeriodicPotential {
            lattice,
            coefficients: Vec::new(),
        }
    }

    /// A real cosine mode `2 re cos(mu . x) - 2 im sin(mu . x)` stored as the
    /// conjugate pair at `pm mu`.
    pub fn single_mode(
        lattice: LatticeSpec,
        m: (i32, i32),
        coefficient: Complex64,
    ) -> Result<Self, PotentialError> {
        PeriodicPotential::new(
            lattice,
            vec![(m, coefficient), ((-m.0, -m.1), coefficient.conj())],
        )
    }

    /// Dual-lattice points paired with coefficients, in physical units.
    pub fn modes(&self) -> Vec<([f64; 2], Complex64)> {
        self.coefficients
            .iter()
            .map(|&(m, v)| (self.lattice.dual_point(m), v))
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().all(|(_, v)| v.norm() == 0.0)
    }
}

/// Evaluates `V_Gamma(x/a)` and its gradient `grad_x V_Gamma(x/a)` at one
/// point. Both are exactly real for Hermitian data; the imaginary residue is
/// discarded after a debug assertion.
pub fn eval_periodic(pot: &PeriodicPotential, x: [f64; 2], a: f64) -> (f64, [f64; 2]) {
    let mut v = Complex64::default();
    let mut g = [Complex64::default(); 2];
    for (mu, coeff) in pot.modes() {
        let phase = Complex64::new(0.0, (mu[0] * x[0] + mu[1] * x[1]) / a).exp();
        let term = coeff * phase;
        v += term;
        g[0] += term * Complex64::new(0.0, mu[0] / a);
        g[1] += term * Complex64::new(0.0, mu[1] / a);
    }
    debug_assert!(v.im.abs() < 1e-12 * v.norm().max(1.0));
    (v.re, [g[0].re, g[1].re])
}

/// Weighted Wiener norm `sum_mu |mu|^p |Vhat(mu)|` for p in {0, 1, 2}.
pub fn wiener_norm(pot: &PeriodicPotential, weight_power: u8) -> f64 {
    assert!(weight_power <= 2);
    pot.modes()
        .iter()
        .map(|(mu, v)| mu[0].hypot(mu[1]).powi(weight_power as i32) * v.norm())
        .sum()
}

/// Hartree interaction kernel specified by its real, even Fourier symbol.
#[derive(Clone)]
pub struct HartreeKernel {
    symbol: std::sync::Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>,
    pub description: String,
}

impl std::fmt::Debug for HartreeKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "HartreeKernel({})", self.description)
    }
}

impl HartreeKernel {
    pub fn new<F>(symbol: F, description: impl Into<String>) -> Self
    where
        F: Fn([f64; 2]) -> f64 + Send + Sync + 'static,
    {
        HartreeKernel {
            symbol: std::sync::Arc::new(symbol),
            description: description.into(),
        }
    }

    pub fn symbol(&self, k: [f64; 2]) -> f64 {
        (self.symbol)(k)
    }

    /// Identity-free interaction.
    pub fn none() -> Self {
        HartreeKernel::new(|_| 0.0, "none")
    }

    /// Smooth default `Khat(k) = exp(-|k|^2 width^2 / 2)`.
    pub fn gaussian(width: f64) -> Self {
        HartreeKernel::new(
            move |k| (-0.5 * width * width * (k[0] * k[0] + k[1] * k[1])).exp(),
            format!("gaussian(width={width})"),
        )
    }

    /// Dirac-delta kernel, `Khat = 1`; convolution is the identity.
    pub fn delta() -> Self {
        HartreeKernel::new(|_| 1.0, "delta")
    }
}

/// Gaussian-regularized Coulomb kernel
/// `Khat(k) = exp(-sigma^2 |k|^2 / 2) / |k|`, zero mode gauged away.
pub fn regularized_coulomb(sigma: f64) -> Result<HartreeKernel, PotentialError> {
    if sigma <= 0.0 {
        return Err(PotentialError::NonPositiveSigma(sigma));
    }
    Ok(HartreeKernel::new(
        move |k| {
            let kn = k[0].hypot(k[1]);
            if kn == 0.0 {
                0.0
            } else {
                (-0.5 * sigma * sigma * kn * kn).exp() / kn
            }
        },
        format!("regularized-coulomb(sigma={sigma})"),
    ))
}

/// Mean-field potential `V_int = K * rho` and its gradient, both by spectral
/// multiplication on the periodic grid.
pub fn hartree_potential(
    fft: &Fft2,
    grid: &Grid2D,
    rho: &Array2<f64>,
    kernel: &HartreeKernel,
) -> (Array2<f64>, [Array2<f64>; 2]) {
    let vhat = hartree_vhat(fft, grid, rho, kernel);
    let n = grid.n;
    let mut g1 = vhat.clone();
    let mut g2 = vhat.clone();
    for i in 0..n[0] {
        for j in 0..n[1] {
            let xi = freq(grid, i, j);
            let x1 = if 2 * i == n[0] { 0.0 } else { xi[0] };
            let x2 = if 2 * j == n[1] { 0.0 } else { xi[1] };
            g1[[i, j]] *= Complex64::new(0.0, x1);
            g2[[i, j]] *= Complex64::new(0.0, x2);
        }
    }
    let v = fft.synthesis(&vhat).mapv(|z| z.re);
    let g1 = fft.synthesis(&g1).mapv(|z| z.re);
    let g2 = fft.synthesis(&g2).mapv(|z| z.re);
    (v, [g1, g2])
}

/// Fourier coefficients of `V_int` on the grid's frequency lattice.
pub fn hartree_vhat(
    fft: &Fft2,
    grid: &Grid2D,
    rho: &Array2<f64>,
    kernel: &HartreeKernel,
) -> Array2<Complex64> {
    let rho_c = rho.mapv(|v| Complex64::new(v, 0.0));
    let mut rho_hat = fft.coefficients(&rho_c);
    let n = grid.n;
    for i in 0..n[0] {
        for j in 0..n[1] {
            let xi = freq(grid, i, j);
            rho_hat[[i, j]] *= kernel.symbol(xi);
        }
    }
    rho_hat
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_grid;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn square_lattice() -> LatticeSpec {
        LatticeSpec::square(1.0, 1.0).unwrap()
    }

    #[test]
    fn zero_potential_evaluates_to_zero() {
        let pot = PeriodicPotential::zero(square_lattice());
        let (v, g) = eval_periodic(&pot, [0.3, -0.8], 1.0);
        assert_eq!(v, 0.0);
        assert_eq!(g, [0.0, 0.0]);
    }

    #[test]
    fn single_pair_is_cosine() {
        // Vhat(+-e1) = 1/2 on the unit square lattice gives cos(e1 . x / a)
        let pot =
            PeriodicPotential::single_mode(square_lattice(), (1, 0), Complex64::new(0.5, 0.0))
                .unwrap();
        let a = 0.5;
        for t in 0..20 {
            let x = [0.11 * t as f64, 0.07 * t as f64];
            let (v, g) = eval_periodic(&pot, x, a);
            let want = (2.0 * PI * x[0] / a).cos();
            assert!((v - want).abs() < 1e-12);
            let want_g = -(2.0 * PI / a) * (2.0 * PI * x[0] / a).sin();
            assert!((g[0] - want_g).abs() < 1e-11);
            assert!(g[1].abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut coeffs = Vec::new();
        for (m1, m2) in [(1, 0), (0, 1), (1, 1), (2, -1)] {
            let v = Complex64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
            coeffs.push(((m1, m2), v));
            coeffs.push(((-m1, -m2), v.conj()));
        }
        let pot = PeriodicPotential::new(square_lattice(), coeffs).unwrap();
        let a = 0.7;
        let h = 1e-7;
        for _ in 0..20 {
            let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let (_, g) = eval_periodic(&pot, x, a);
            for j in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[j] += h;
                xm[j] -= h;
                let fd = (eval_periodic(&pot, xp, a).0 - eval_periodic(&pot, xm, a).0) / (2.0 * h);
                assert!(
                    (g[j] - fd).abs() < 1e-6 * g[j].abs().max(1.0),
                    "j={j} grad={} fd={fd}",
                    g[j]
                );
            }
        }
    }

    #[test]
    fn periodicity_on_lattice_vectors() {
        let pot =
            PeriodicPotential::single_mode(square_lattice(), (2, 1), Complex64::new(0.3, 0.1))
                .unwrap();
        let a = 0.5;
        let x = [0.123, 0.456];
        let (v0, _) = eval_periodic(&pot, x, a);
        // period of V(x/a) is a * (lattice vector)
        for shift in [[a, 0.0], [0.0, a], [3.0 * a, -2.0 * a]] {
            let (v1, _) = eval_periodic(&pot, [x[0] + shift[0], x[1] + shift[1]], a);
            assert!((v0 - v1).abs() < 1e-12);
        }
    }

    #[test]
    fn non_hermitian_rejected() {
        let err = PeriodicPotential::new(
            square_lattice(),
            vec![((1, 0), Complex64::new(0.5, 0.0))],
        );
        assert!(matches!(err, Err(PotentialError::NotHermitian(1, 0))));
    }

    #[test]
    fn wiener_norm_values() {
        let pot = PeriodicPotential::zero(square_lattice());
        assert_eq!(wiener_norm(&pot, 2), 0.0);
        let pot =
            PeriodicPotential::single_mode(square_lattice(), (1, 0), Complex64::new(0.5, 0.0))
                .unwrap();
        // two terms at |mu| = 2 pi with weight |mu|^2 and modulus 1/2
        assert!((wiener_norm(&pot, 2) - 4.0 * PI * PI).abs() < 1e-10);

        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut coeffs = Vec::new();
        for (m1, m2) in [(1, 0), (0, 2), (3, 1)] {
            let v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            coeffs.push(((m1, m2), v));
            coeffs.push(((-m1, -m2), v.conj()));
        }
        let pot = PeriodicPotential::new(square_lattice(), coeffs.clone()).unwrap();
        let brute: f64 = coeffs
            .iter()
            .map(|&((m1, m2), v)| {
                let mu = pot.lattice.dual_point((m1, m2));
                mu[0].hypot(mu[1]) * v.norm()
            })
            .sum();
        assert!((wiener_norm(&pot, 1) - brute).abs() < 1e-12);
    }

    #[test]
    fn coulomb_symbol_values() {
        let k = regularized_coulomb(1.0).unwrap();
        assert!((k.symbol([1.0, 0.0]) - (-0.5f64).exp()).abs() < 1e-12);
        assert_eq!(k.symbol([0.3, -0.4]), k.symbol([-0.3, 0.4]));
        assert_eq!(k.symbol([0.0, 0.0]), 0.0);
        assert!(regularized_coulomb(0.0).is_err());
        // monotone decrease in sigma pointwise
        let k2 = regularized_coulomb(2.0).unwrap();
        for t in 1..10 {
            let kk = [0.3 * t as f64, 0.1];
            assert!(k2.symbol(kk) < k.symbol(kk));
        }
    }

    #[test]
    fn coulomb_second_moment_radial_quadrature() {
        // integral over R^2 of |k|^2 exp(-sigma^2 |k|^2 / 2) / |k| * |k| ... :
        // the weighted second moment of the regularized kernel,
        // int |k|^2 Khat(k) d^2k = 2 pi int r^3 e^{-s^2 r^2/2}/r dr ... with
        // the 1/|k| included this is int |k|^2 e^{-s^2|k|^2/2} d^2k = 4 pi / s^4.
        for sigma in [0.5f64, 1.0, 2.0] {
            let mut sum = 0.0;
            let dr = 1e-4 * (1.0 / sigma);
            let rmax = 12.0 / sigma;
            let mut r = 0.5 * dr;
            while r < rmax {
                sum += r * r * (-0.5 * sigma * sigma * r * r).exp() * r * dr;
                r += dr;
            }
            sum *= 2.0 * PI;
            let want = 4.0 * PI / sigma.powi(4);
            assert!(
                (sum - want).abs() < 1e-6 * want,
                "sigma={sigma}: quadrature {sum} vs 4 pi / sigma^4 = {want}"
            );
        }
    }

    #[test]
    fn hartree_zero_and_delta() {
        let grid = make_grid([2.0 * PI, 2.0 * PI], [16, 16]).unwrap();
        let fft = Fft2::new(grid.n);
        let rho = Array2::zeros((16, 16));
        let (v, _) = hartree_potential(&fft, &grid, &rho, &HartreeKernel::gaussian(1.0));
        assert!(v.iter().all(|&x| x.abs() < 1e-14));

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rho = Array2::from_shape_fn((16, 16), |_| rng.gen_range(-1.0..1.0));
        let (v, _) = hartree_potential(&fft, &grid, &rho, &HartreeKernel::delta());
        for (a, b) in v.iter().zip(rho.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hartree_matches_direct_convolution() {
        // Gaussian rho with Gaussian symbol versus the O(N^4) periodic sum
        // V(x) = sum_y K(x - y) rho(y) dx^2 with K synthesized from its symbol.
        let n = 32;
        let grid = make_grid([2.0 * PI, 2.0 * PI], [n, n]).unwrap();
        let fft = Fft2::new(grid.n);
        let kernel = HartreeKernel::gaussian(0.8);
        let rho = Array2::from_shape_fn((n, n), |(i, j)| {
            let x = grid.coord([i, j]);
            (-((x[0] - PI).powi(2) + (x[1] - PI).powi(2)) / 0.5).exp()
        });
        let (v, _) = hartree_potential(&fft, &grid, &rho, &kernel);

        // real-space kernel on the grid: K(x) = (1/L^2) sum_xi Khat(xi) e^{i xi x}
        let mut khat = Array2::default((n, n));
        for i in 0..n {
            for j in 0..n {
                khat[[i, j]] = Complex64::new(kernel.symbol(freq(&grid, i, j)), 0.0);
            }
        }
        let kx = fft.synthesis(&khat).mapv(|z| z.re);
        let cell = grid.spacing[0] * grid.spacing[1];
        let area = grid.extent[0] * grid.extent[1];
        for i in 0..n {
            for j in 0..n {
                let mut direct = 0.0;
                for p in 0..n {
                    for q in 0..n {
                        let d = grid.wrap([i as i64 - p as i64, j as i64 - q as i64]);
                        direct += kx[[d[0], d[1]]] * rho[[p, q]];
                    }
                }
                direct *= cell / area;
                assert!(
                    (v[[i, j]] - direct).abs() < 1e-8,
                    "({i},{j}): {} vs {}",
                    v[[i, j]],
                    direct
                );
            }
        }
    }

    #[test]
    fn hartree_linear_and_translation_covariant() {
        let n = 16;
        let grid = make_grid([2.0 * PI, 2.0 * PI], [n, n]).unwrap();
        let fft = Fft2::new(grid.n);
        let kernel = HartreeKernel::gaussian(1.3);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let r1 = Array2::from_shape_fn((n, n), |_| rng.gen_range(-1.0..1.0));
        let r2 = Array2::from_shape_fn((n, n), |_| rng.gen_range(-1.0..1.0));
        let (v1, _) = hartree_potential(&fft, &grid, &r1, &kernel);
        let (v2, _) = hartree_potential(&fft, &grid, &r2, &kernel);
        let combo = &r1 * 0.3 + &r2 * 1.7;
        let (vc, _) = hartree_potential(&fft, &grid, &combo, &kernel);
        let lin_dev = (&vc - &(&v1 * 0.3 + &v2 * 1.7))
            .iter()
            .map(|x| x.abs())
            .fold(0.0, f64::max);
        assert!(lin_dev < 1e-10);

        // translation covariance: shifting rho by one cell shifts V
        let shifted = Array2::from_shape_fn((n, n), |(i, j)| r1[[(i + 1) % n, j]]);
        let (vs, _) = hartree_potential(&fft, &grid, &shifted, &kernel);
        for i in 0..n {
            for j in 0..n {
                assert!((vs[[i, j]] - v1[[(i + 1) % n, j]]).abs() < 1e-10);
            }
        }
    }
}
