//! The 2x2 Dirac Bloch symbol `H_m(k) = c (k1 a1 + k2 a2) + m c^2 g0`, its
//! eigenvalues, group velocity, spectral band projectors with analytic
//! derivatives, and the exact one-step kinetic phase used by the split-step
//! integrator.
//!
//! Matrix conventions: `g0 = s3`, `a1 = s2`, `a2 = -s1` with `s1, s2, s3`
//! the Pauli matrices. The massless symbol has its band crossing at `k = 0`;
//! projector-based operations there return [`SymbolError::SingularPoint`].

use num_complex::Complex64;
use std::ops::{Add, Mul, Neg, Sub};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SymbolError {
    #[error("projector singular at the band crossing (|k| = {k_norm:.3e} inside cutoff {cutoff:.3e})")]
    SingularPoint { k_norm: f64, cutoff: f64 },
}

/// Physical constants of a run. `hbar` is the semiclassical parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiracConstants {
    pub mass: f64,
    pub light_speed: f64,
    pub hbar: f64,
}

impl DiracConstants {
    pub fn new(mass: f64, light_speed: f64, hbar: f64) -> Self {
        assert!(mass >= 0.0 && light_speed > 0.0 && hbar > 0.0);
        DiracConstants {
            mass,
            light_speed,
            hbar,
        }
    }

    pub fn is_massless(&self) -> bool {
        self.mass == 0.0
    }
}

/// Energy band label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Band {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Band {
    pub fn sign(self) -> f64 {
        match self {
            Band::Plus => 1.0,
            Band::Minus => -1.0,
        }
    }

    pub fn other(self) -> Band {
        match self {
            Band::Plus => Band::Minus,
            Band::Minus => Band::Plus,
        }
    }
}

impl std::fmt::Display for Band {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Band::Plus => write!(f, "+"),
            Band::Minus => write!(f, "-"),
        }
    }
}

/// Dense 2x2 complex matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat2(pub [[Complex64; 2]; 2]);

pub const ZERO2: Mat2 = Mat2([[Complex64::new(0.0, 0.0); 2]; 2]);

pub fn ident() -> Mat2 {
    Mat2([
        [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
    ])
}

pub fn sigma1() -> Mat2 {
    Mat2([
        [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
    ])
}

pub fn sigma2() -> Mat2 {
    Mat2([
        [Complex64::new(0.0, 0.0), Complex64::new(0.0, -1.0)],
        [Complex64::new(0.0, 1.0), Complex64::new(0.0, 0.0)],
    ])
}

pub fn sigma3() -> Mat2 {
    Mat2([
        [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        [Complex64::new(0.0, 0.0), Complex64::new(-1.0, 0.0)],
    ])
}

pub fn gamma0() -> Mat2 {
    sigma3()
}

/// `alpha = (a1, a2) = (s2, -s1)`.
pub fn alpha(j: usize) -> Mat2 {
    match j {
        0 => sigma2(),
        1 => -sigma1(),
        _ => panic!("alpha index out of range"),
    }
}

impl Mat2 {
    pub fn scale(self, s: Complex64) -> Mat2 {
        let mut out = self;
        for r in 0..2 {
            for c in 0..2 {
                out.0[r][c] *= s;
            }
        }
        out
    }

    pub fn scale_re(self, s: f64) -> Mat2 {
        self.scale(Complex64::new(s, 0.0))
    }

    pub fn adjoint(self) -> Mat2 {
        Mat2([
            [self.0[0][0].conj(), self.0[1][0].conj()],
            [self.0[0][1].conj(), self.0[1][1].conj()],
        ])
    }

    pub fn trace(self) -> Complex64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(self) -> Complex64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn frobenius_sq(self) -> f64 {
        self.0.iter().flatten().map(|v| v.norm_sqr()).sum()
    }

    pub fn frobenius(self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    /// Largest entrywise absolute value.
    pub fn max_abs(self) -> f64 {
        self.0
            .iter()
            .flatten()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    /// Spectral (operator) norm via the closed form for 2x2 matrices.
    pub fn op_norm(self) -> f64 {
        let f2 = self.frobenius_sq();
        let d = self.det().norm_sqr();
        let disc = (f2 * f2 - 4.0 * d).max(0.0).sqrt();
        (0.5 * (f2 + disc)).sqrt()
    }

    pub fn commutator(self, other: Mat2) -> Mat2 {
        self * other - other * self
    }

    pub fn anticommutator(self, other: Mat2) -> Mat2 {
        self * other + other * self
    }

    /// Applies the matrix to a spinor.
    pub fn mul_vec(self, v: [Complex64; 2]) -> [Complex64; 2] {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    /// Outer product `u v^dagger`.
    pub fn outer(u: [Complex64; 2], v: [Complex64; 2]) -> Mat2 {
        Mat2([
            [u[0] * v[0].conj(), u[0] * v[1].conj()],
            [u[1] * v[0].conj(), u[1] * v[1].conj()],
        ])
    }

    pub fn is_finite(self) -> bool {
        self.0
            .iter()
            .flatten()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        let mut out = self;
        for r in 0..2 {
            for c in 0..2 {
                out.0[r][c] += rhs.0[r][c];
            }
        }
        out
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, rhs: Mat2) -> Mat2 {
        let mut out = self;
        for r in 0..2 {
            for c in 0..2 {
                out.0[r][c] -= rhs.0[r][c];
            }
        }
        out
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self.scale_re(-1.0)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        Mat2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }
}

/// Bloch symbol `H_m(k) = c alpha . k + m c^2 g0`.
pub fn symbol(k: [f64; 2], consts: &DiracConstants) -> Mat2 {
    let c = consts.light_speed;
    let mc2 = consts.mass * c * c;
    // c (k1 s2 - k2 s1) + mc^2 s3, assembled entrywise.
    Mat2([
        [
            Complex64::new(mc2, 0.0),
            Complex64::new(-c * k[1], -c * k[0]),
        ],
        [
            Complex64::new(-c * k[1], c * k[0]),
            Complex64::new(-mc2, 0.0),
        ],
    ])
}

/// `E_m(k) = sqrt(c^2 |k|^2 + (m c^2)^2)`.
pub fn energy(k: [f64; 2], consts: &DiracConstants) -> f64 {
    let c = consts.light_speed;
    let mc2 = consts.mass * c * c;
    (c * c * (k[0] * k[0] + k[1] * k[1]) + mc2 * mc2).sqrt()
}

/// Group velocity `c^2 k / E_m(k)` (massive) or `c k/|k|` (massless).
pub fn group_velocity(k: [f64; 2], consts: &DiracConstants) -> Result<[f64; 2], SymbolError> {
    let c = consts.light_speed;
    if consts.is_massless() {
        let kn = k[0].hypot(k[1]);
        if kn == 0.0 {
            return Err(SymbolError::SingularPoint {
                k_norm: 0.0,
                cutoff: 0.0,
            });
        }
        Ok([c * k[0] / kn, c * k[1] / kn])
    } else {
        let e = energy(k, consts);
        Ok([c * c * k[0] / e, c * c * k[1] / e])
    }
}

/// Band projector `Pi_pm(k) = (1 pm H_m(k)/E_m(k)) / 2`.
pub fn projector(k: [f64; 2], consts: &DiracConstants, band: Band) -> Result<Mat2, SymbolError> {
    let e = energy(k, consts);
    if e == 0.0 {
        return Err(SymbolError::SingularPoint {
            k_norm: k[0].hypot(k[1]),
            cutoff: 0.0,
        });
    }
    let h = symbol(k, consts);
    Ok((ident() + h.scale_re(band.sign() / e)).scale_re(0.5))
}

/// Analytic gradient `(d/dk1 Pi, d/dk2 Pi)`:
/// `d_j Pi_pm = pm (c a_j / E - H c^2 k_j / E^3) / 2`.
///
/// Massless callers must stay outside the cutoff disc `|k| >= kappa`.
pub fn projector_gradient(
    k: [f64; 2],
    consts: &DiracConstants,
    band: Band,
    kappa: f64,
) -> Result<[Mat2; 2], SymbolError> {
    let kn = k[0].hypot(k[1]);
    if consts.is_massless() && kn < kappa.max(f64::MIN_POSITIVE) {
        return Err(SymbolError::SingularPoint {
            k_norm: kn,
            cutoff: kappa,
        });
    }
    let c = consts.light_speed;
    let e = energy(k, consts);
    let h = symbol(k, consts);
    let mut out = [ZERO2; 2];
    for j in 0..2 {
        let term = alpha(j).scale_re(c / e) - h.scale_re(c * c * k[j] / (e * e * e));
        out[j] = term.scale_re(0.5 * band.sign());
    }
    Ok(out)
}

/// Exact free step `exp(-i dt H_m(k) / hbar)` as
/// `cos(theta) 1 - i sin(theta) H/E` with `theta = dt E / hbar`.
/// Unitary for all inputs; the massless crossing `E = 0` returns the identity.
pub fn kinetic_phase(k: [f64; 2], consts: &DiracConstants, dt: f64) -> Mat2 {
    let e = energy(k, consts);
    if e == 0.0 {
        return ident();
    }
    let theta = dt * e / consts.hbar;
    let h = symbol(k, consts);
    ident().scale_re(theta.cos()) + h.scale(Complex64::new(0.0, -theta.sin() / e))
}

/// Unit eigenvector of `H_m(k)` in the requested band (the range of the
/// rank-1 projector). Massless `k = 0` is singular.
pub fn band_eigenvector(
    k: [f64; 2],
    consts: &DiracConstants,
    band: Band,
) -> Result<[Complex64; 2], SymbolError> {
    let p = projector(k, consts, band)?;
    // Project a basis vector; fall back to the other one near its kernel.
    let mut v = [p.0[0][0], p.0[1][0]];
    let mut n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    if n < 1e-8 {
        v = [p.0[0][1], p.0[1][1]];
        n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    }
    Ok([v[0] / n, v[1] / n])
}
