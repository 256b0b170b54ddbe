//! Periodic lattice, dual lattice, and the uniform grids shared by every
//! other module.
//!
//! All simulations run on a torus `[0, L1) x [0, L2)`. Position grids are
//! uniform with power-of-two point counts so spectral transforms stay exact
//! and fast; index arithmetic wraps modulo `n`.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("basis is degenerate: |det| = {det:.3e} below 1e-12")]
    DegenerateBasis { det: f64 },
    #[error("grid point count {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("grid extent must be positive, got {0}")]
    NonPositiveExtent(f64),
    #[error("dual-basis relation violated: max |e_j . e^l - 2 pi delta| = {0:.3e}")]
    DualRelation(f64),
}

/// Bravais lattice with its dual basis and the dimensionless scale ratio `a`.
///
/// The basis vectors `e1, e2` span the fundamental cell; the dual vectors
/// satisfy `e_j . e^l = 2 pi delta_jl`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSpec {
    pub basis: [[f64; 2]; 2],
    pub dual_basis: [[f64; 2]; 2],
    pub scale_a: f64,
}

impl LatticeSpec {
    pub fn new(basis: [[f64; 2]; 2], scale_a: f64) -> Result<Self, LatticeError> {
        let dual_basis = dual_basis(basis)?;
        let spec = LatticeSpec {
            basis,
            dual_basis,
            scale_a,
        };
        let dev = spec.dual_relation_error();
        if dev > 1e-12 {
            return Err(LatticeError::DualRelation(dev));
        }
        Ok(spec)
    }

    /// Square lattice with side `side`.
    pub fn square(side: f64, scale_a: f64) -> Result<Self, LatticeError> {
        Self::new([[side, 0.0], [0.0, side]], scale_a)
    }

    /// max_{j,l} |e_j . e^l - 2 pi delta_jl|
    pub fn dual_relation_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..2 {
            for l in 0..2 {
                let dot = self.basis[j][0] * self.dual_basis[l][0]
                    + self.basis[j][1] * self.dual_basis[l][1];
                let target = if j == l { 2.0 * std::f64::consts::PI } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// Dual-lattice point `m1 e^1 + m2 e^2`.
    pub fn dual_point(&self, m: (i32, i32)) -> [f64; 2] {
        [
            m.0 as f64 * self.dual_basis[0][0] + m.1 as f64 * self.dual_basis[1][0],
            m.0 as f64 * self.dual_basis[0][1] + m.1 as f64 * self.dual_basis[1][1],
        ]
    }
}

/// Solves `e_j . e^l = 2 pi delta_jl` for the dual basis.
pub fn dual_basis(basis: [[f64; 2]; 2]) -> Result<[[f64; 2]; 2], LatticeError> {
    let [[a, b], [c, d]] = basis; // rows e1, e2
    let det = a * d - b * c;
    if det.abs() < 1e-12 {
        return Err(LatticeError::DegenerateBasis { det });
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    // Rows of 2 pi B^{-T}: e^1 = 2 pi (d, -c)/det, e^2 = 2 pi (-b, a)/det.
    Ok([
        [two_pi * d / det, -two_pi * c / det],
        [-two_pi * b / det, two_pi * a / det],
    ])
}

/// Enumerates mu in the dual lattice with |mu| <= radius, origin included.
///
/// Output is sorted by (|mu|, m1, m2) so callers get a deterministic order;
/// the set is symmetric under mu -> -mu.
pub fn dual_lattice_points(lattice: &LatticeSpec, radius: f64) -> Vec<[f64; 2]> {
    let d = lattice.dual_basis;
    // Smallest singular value of the dual basis matrix bounds the index range.
    let frob2 = d[0][0] * d[0][0] + d[0][1] * d[0][1] + d[1][0] * d[1][0] + d[1][1] * d[1][1];
    let det = (d[0][0] * d[1][1] - d[0][1] * d[1][0]).abs();
    let sigma_min = if frob2 > 0.0 {
        let disc = (frob2 * frob2 - 4.0 * det * det).max(0.0);
        (0.5 * (frob2 - disc.sqrt())).max(0.0).sqrt()
    } else {
        0.0
    };
    let m_max = if sigma_min > 0.0 {
        (radius / sigma_min).ceil() as i32 + 1
    } else {
        0
    };

    let mut out: Vec<([f64; 2], (i32, i32))> = Vec::new();
    for m1 in -m_max..=m_max {
        for m2 in -m_max..=m_max {
            let p = lattice.dual_point((m1, m2));
            if (p[0] * p[0] + p[1] * p[1]).sqrt() <= radius + 1e-12 {
                out.push((p, (m1, m2)));
            }
        }
    }
    out.sort_by(|(pa, ma), (pb, mb)| {
        let ra = pa[0].hypot(pa[1]);
        let rb = pb[0].hypot(pb[1]);
        ra.partial_cmp(&rb).unwrap().then(ma.cmp(mb))
    });
    out.into_iter().map(|(p, _)| p).collect()
}

/// Uniform periodic grid on `[0, extent1) x [0, extent2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub extent: [f64; 2],
    pub n: [usize; 2],
    pub spacing: [f64; 2],
}

impl Grid2D {
    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node position `j . spacing` for unsigned indices.
    pub fn coord(&self, i: [usize; 2]) -> [f64; 2] {
        [i[0] as f64 * self.spacing[0], i[1] as f64 * self.spacing[1]]
    }

    /// Centered coordinate for grids indexed over `[-n/2, n/2)`, used by
    /// momentum grids.
    pub fn signed_coord(&self, i: [usize; 2]) -> [f64; 2] {
        [
            signed_index(i[0], self.n[0]) as f64 * self.spacing[0],
            signed_index(i[1], self.n[1]) as f64 * self.spacing[1],
        ]
    }

    pub fn wrap(&self, i: [i64; 2]) -> [usize; 2] {
        [
            i[0].rem_euclid(self.n[0] as i64) as usize,
            i[1].rem_euclid(self.n[1] as i64) as usize,
        ]
    }

    pub fn flat(&self, i: [usize; 2]) -> usize {
        i[0] * self.n[1] + i[1]
    }

    pub fn unflat(&self, f: usize) -> [usize; 2] {
        [f / self.n[1], f % self.n[1]]
    }

    /// Conjugate momentum grid under the discrete Fourier duality
    /// `xi_j = 2 pi j / extent`, covering `[-pi n/L, pi n/L)`.
    pub fn conjugate(&self) -> Grid2D {
        let spacing = [
            2.0 * std::f64::consts::PI / self.extent[0],
            2.0 * std::f64::consts::PI / self.extent[1],
        ];
        Grid2D {
            extent: [spacing[0] * self.n[0] as f64, spacing[1] * self.n[1] as f64],
            n: self.n,
            spacing,
        }
    }
}

/// Maps an FFT bin to its signed frequency index in `[-n/2, n/2)`.
pub fn signed_index(i: usize, n: usize) -> i64 {
    let h = n / 2;
    if i < h {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

pub fn make_grid(extent: [f64; 2], n: [usize; 2]) -> Result<Grid2D, LatticeError> {
    for &e in &extent {
        if e <= 0.0 {
            return Err(LatticeError::NonPositiveExtent(e));
        }
    }
    for &m in &n {
        if m == 0 || !m.is_power_of_two() {
            return Err(LatticeError::NotPowerOfTwo(m));
        }
    }
    Ok(Grid2D {
        extent,
        n,
        spacing: [extent[0] / n[0] as f64, extent[1] / n[1] as f64],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn dual_basis_orthonormal() {
        let d = dual_basis([[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!((d[0][0] - 2.0 * PI).abs() < 1e-14);
        assert!(d[0][1].abs() < 1e-14);
        assert!(d[1][0].abs() < 1e-14);
        assert!((d[1][1] - 2.0 * PI).abs() < 1e-14);
    }

    #[test]
    fn dual_basis_diagonal_scaling() {
        let d = dual_basis([[2.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!((d[0][0] - PI).abs() < 1e-14);
        assert!((d[1][1] - 2.0 * PI).abs() < 1e-14);
    }

    #[test]
    fn dual_basis_hexagonal_solves_defining_relations() {
        let basis = [[1.0, 0.0], [0.5, 0.75f64.sqrt()]];
        let lat = LatticeSpec::new(basis, 1.0).unwrap();
        assert!(lat.dual_relation_error() < 1e-12);
    }

    #[test]
    fn degenerate_basis_rejected() {
        assert!(matches!(
            dual_basis([[1.0, 2.0], [0.5, 1.0]]),
            Err(LatticeError::DegenerateBasis { .. })
        ));
    }

    #[test]
    fn dual_points_origin_only() {
        let lat = LatticeSpec::square(1.0, 1.0).unwrap();
        let pts = dual_lattice_points(&lat, 0.0);
        assert_eq!(pts, vec![[0.0, 0.0]]);
    }

    #[test]
    fn dual_points_unit_shell() {
        let lat = LatticeSpec::square(1.0, 1.0).unwrap();
        let pts = dual_lattice_points(&lat, 2.0 * PI);
        assert_eq!(pts.len(), 5);
        // symmetric under mu -> -mu
        for p in &pts {
            assert!(pts
                .iter()
                .any(|q| (q[0] + p[0]).abs() < 1e-12 && (q[1] + p[1]).abs() < 1e-12));
        }
    }

    #[test]
    fn dual_points_hexagonal_match_brute_force() {
        let lat = LatticeSpec::new([[1.0, 0.0], [0.5, 0.75f64.sqrt()]], 1.0).unwrap();
        let radius = 4.0 * PI;
        let pts = dual_lattice_points(&lat, radius);
        let mut brute = 0usize;
        for m1 in -8i32..=8 {
            for m2 in -8i32..=8 {
                let p = lat.dual_point((m1, m2));
                if p[0].hypot(p[1]) <= radius + 1e-12 {
                    brute += 1;
                }
            }
        }
        assert_eq!(pts.len(), brute);
    }

    #[test]
    fn grid_spacing() {
        let g = make_grid([2.0 * PI, 2.0 * PI], [8, 8]).unwrap();
        assert!((g.spacing[0] - PI / 4.0).abs() < 1e-15);
        let g = make_grid([1.0, 1.0], [4, 8]).unwrap();
        assert!((g.spacing[0] - 0.25).abs() < 1e-15);
        assert!((g.spacing[1] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn conjugate_grid_duality() {
        let g = make_grid([2.0 * PI, 2.0 * PI], [8, 8]).unwrap();
        let k = g.conjugate();
        assert!((k.spacing[0] - 1.0).abs() < 1e-15);
        // range [-4, 4)
        assert_eq!(signed_index(4, 8), -4);
        assert_eq!(signed_index(3, 8), 3);
        let lo = k.signed_coord([4, 4]);
        assert!((lo[0] + 4.0).abs() < 1e-15);
    }

    #[test]
    fn non_power_of_two_rejected() {
        assert!(matches!(
            make_grid([1.0, 1.0], [6, 8]),
            Err(LatticeError::NotPowerOfTwo(6))
        ));
    }
}
