//! Weighted-particle solver for the limiting relativistic transport
//! equations: band-labelled characteristics
//!
//! ```text
//! dx/dt = +- v(k),    dk/dt = -(grad V_Gamma(x/a) + grad (K * rho)(x))
//! ```
//!
//! pushed with classical RK4 under a force frozen per step, cloud-in-cell
//! deposition for the self-consistent density, and phase-space histograms
//! on the same grids the Wigner side uses.
//!
//! Massless particles entering the cutoff disc `|k| < kappa` are frozen and
//! their weight tallied as cutoff leakage.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::lattice::Grid2D;
use crate::potential::{eval_periodic, PeriodicPotential};
use crate::symbol::{energy, group_velocity, Band, DiracConstants};
use crate::wigner::BandDensity;

#[derive(Debug, Error, PartialEq)]
pub enum VlasovError {
    #[error("density has no positive mass to sample")]
    EmptyDensity,
    #[error("massless characteristics undefined inside the cutoff disc")]
    InsideCutoff,
}

/// Weighted phase-space particles with a band label. Weights never change;
/// total mass is conserved exactly. `frozen` marks massless particles parked
/// at the cutoff.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub positions: Vec<[f64; 2]>,
    pub momenta: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub bands: Vec<Band>,
    pub frozen: Vec<bool>,
    pub box_extent: [f64; 2],
    pub seed: u64,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weight parked at the massless cutoff.
    pub fn leakage(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.frozen)
            .filter(|(_, &f)| f)
            .map(|(w, _)| w)
            .sum()
    }

    pub fn band_weight(&self, band: Band) -> f64 {
        self.weights
            .iter()
            .zip(&self.bands)
            .filter(|(_, &b)| b == band)
            .map(|(w, _)| w)
            .sum()
    }

    pub fn merge(mut self, other: ParticleEnsemble) -> ParticleEnsemble {
        self.positions.extend(other.positions);
        self.momenta.extend(other.momenta);
        self.weights.extend(other.weights);
        self.bands.extend(other.bands);
        self.frozen.extend(other.frozen);
        self
    }
}

/// Outcome of sampling a band density.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SampleReport {
    pub requested: usize,
    pub positive_mass: f64,
    pub clipped_mass: f64,
    /// |clipped| / (positive + |clipped|)
    pub clipped_fraction: f64,
}

/// Draws `n` equal-weight particles from a band density by systematic
/// (stratified) resampling over phase-space nodes: one seeded uniform
/// offset strides the cumulative mass, so every node receives its
/// proportional count to within one particle. Negative Wigner values are
/// clipped to zero and reported. Deterministic for a fixed seed; particles
/// sit at node coordinates, so a CIC histogram reproduces the node values
/// in expectation.
pub fn sample_from_band_density(
    f: &BandDensity,
    n: usize,
    seed: u64,
) -> Result<(ParticleEnsemble, SampleReport), VlasovError> {
    let cell = f.phase_cell();
    let nk = f.kgrid.n[0];
    let nk2 = f.values.dim().1;
    let mut positive = 0.0f64;
    let mut clipped = 0.0f64;
    for v in f.values.iter() {
        if *v > 0.0 {
            positive += v * cell;
        } else {
            clipped += -v * cell;
        }
    }
    if positive <= 0.0 {
        return Err(VlasovError::EmptyDensity);
    }
    let report = SampleReport {
        requested: n,
        positive_mass: positive,
        clipped_mass: clipped,
        clipped_fraction: clipped / (positive + clipped),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset: f64 = rng.gen_range(0.0..1.0);
    let stride = positive / n as f64;
    let w = positive / n as f64;
    let mut ens = ParticleEnsemble {
        positions: Vec::with_capacity(n),
        momenta: Vec::with_capacity(n),
        weights: vec![w; n],
        bands: vec![f.band; n],
        frozen: vec![false; n],
        box_extent: f.xgrid.extent,
        seed,
    };
    let mut acc = 0.0f64;
    let mut next = offset * stride;
    let mut drawn = 0usize;
    for xf in 0..f.xgrid.len() {
        for c in 0..nk2 {
            let v = f.values[[xf, c]];
            if v <= 0.0 {
                continue;
            }
            acc += v * cell;
            while next < acc && drawn < n {
                let xi = f.xgrid.unflat(xf);
                ens.positions.push(f.xgrid.coord(xi));
                ens.momenta
                    .push(crate::wigner::k_coord(&f.kgrid, [c / nk, c % nk]));
                drawn += 1;
                next = (drawn as f64 + offset) * stride;
            }
        }
    }
    // rounding at the last node
    while drawn < n {
        let last_x = ens.positions[drawn - 1];
        let last_k = ens.momenta[drawn - 1];
        ens.positions.push(last_x);
        ens.momenta.push(last_k);
        drawn += 1;
    }
    Ok((ens, report))
}

/// Total force field frozen for one step: the analytic periodic part plus a
/// bilinearly interpolated mean-field gradient on its grid.
pub struct ForceField<'a> {
    pub pot: &'a PeriodicPotential,
    pub vint_grad: Option<(&'a [Array2<f64>; 2], &'a Grid2D)>,
}

impl ForceField<'_> {
    /// `-(grad V_Gamma(x/a) + grad V_int(x))`
    pub fn force(&self, x: [f64; 2]) -> [f64; 2] {
        let (_, g_ext) = eval_periodic(self.pot, x, self.pot.lattice.scale_a);
        let mut f = [-g_ext[0], -g_ext[1]];
        if let Some((grad, grid)) = &self.vint_grad {
            let g = bilinear(grad, grid, x);
            f[0] -= g[0];
            f[1] -= g[1];
        }
        f
    }
}

fn bilinear(grad: &[Array2<f64>; 2], grid: &Grid2D, x: [f64; 2]) -> [f64; 2] {
    let n = grid.n;
    let u = [x[0] / grid.spacing[0], x[1] / grid.spacing[1]];
    let base = [u[0].floor(), u[1].floor()];
    let frac = [u[0] - base[0], u[1] - base[1]];
    let i0 = (base[0] as i64).rem_euclid(n[0] as i64) as usize;
    let j0 = (base[1] as i64).rem_euclid(n[1] as i64) as usize;
    let i1 = (i0 + 1) % n[0];
    let j1 = (j0 + 1) % n[1];
    let mut out = [0.0; 2];
    for (a, g) in grad.iter().enumerate() {
        out[a] = g[[i0, j0]] * (1.0 - frac[0]) * (1.0 - frac[1])
            + g[[i0, j1]] * (1.0 - frac[0]) * frac[1]
            + g[[i1, j0]] * frac[0] * (1.0 - frac[1])
            + g[[i1, j1]] * frac[0] * frac[1];
    }
    out
}

/// Phase-space velocity of one characteristic:
/// `(dx/dt, dk/dt) = (+- v(k), force(x))`. The force does not depend on the
/// band label.
pub fn characteristics_rhs(
    x: [f64; 2],
    k: [f64; 2],
    band: Band,
    force: &ForceField<'_>,
    consts: &DiracConstants,
    kappa: f64,
) -> Result<([f64; 2], [f64; 2]), VlasovError> {
    if consts.is_massless() && k[0].hypot(k[1]) < kappa {
        return Err(VlasovError::InsideCutoff);
    }
    let v = group_velocity(k, consts).map_err(|_| VlasovError::InsideCutoff)?;
    let s = band.sign();
    Ok(([s * v[0], s * v[1]], force.force(x)))
}

/// Single-particle energy `sign(band) E_m(k) + V_Gamma(x/a)`; conserved
/// along exact characteristics in a static external potential.
pub fn particle_energy(
    x: [f64; 2],
    k: [f64; 2],
    band: Band,
    pot: &PeriodicPotential,
    consts: &DiracConstants,
) -> f64 {
    band.sign() * energy(k, consts) + eval_periodic(pot, x, pot.lattice.scale_a).0
}

/// One RK4 step of every particle with the force frozen at the step start.
/// Massless particles whose stage momenta enter the cutoff disc are frozen
/// in place. Weights are untouched.
pub fn vlasov_step(
    ens: &mut ParticleEnsemble,
    force: &ForceField<'_>,
    consts: &DiracConstants,
    dt: f64,
    kappa: f64,
) {
    use rayon::prelude::*;
    let ext = ens.box_extent;
    let wrap = move |x: [f64; 2]| [x[0].rem_euclid(ext[0]), x[1].rem_euclid(ext[1])];
    let n = ens.len();
    let bands = std::mem::take(&mut ens.bands);
    let positions = std::mem::take(&mut ens.positions);
    let momenta = std::mem::take(&mut ens.momenta);
    let mut frozen = std::mem::take(&mut ens.frozen);

    let updates: Vec<Option<([f64; 2], [f64; 2])>> = (0..n)
        .into_par_iter()
        .map(|p| {
            if frozen[p] {
                return Some((positions[p], momenta[p]));
            }
            let x0 = positions[p];
            let k0 = momenta[p];
            let band = bands[p];
            let stage =
                |x: [f64; 2], k: [f64; 2]| characteristics_rhs(x, k, band, force, consts, kappa);
            (|| -> Result<([f64; 2], [f64; 2]), VlasovError> {
                let (v1, a1) = stage(x0, k0)?;
                let (v2, a2) = stage(
                    wrap([x0[0] + 0.5 * dt * v1[0], x0[1] + 0.5 * dt * v1[1]]),
                    [k0[0] + 0.5 * dt * a1[0], k0[1] + 0.5 * dt * a1[1]],
                )?;
                let (v3, a3) = stage(
                    wrap([x0[0] + 0.5 * dt * v2[0], x0[1] + 0.5 * dt * v2[1]]),
                    [k0[0] + 0.5 * dt * a2[0], k0[1] + 0.5 * dt * a2[1]],
                )?;
                let (v4, a4) = stage(
                    wrap([x0[0] + dt * v3[0], x0[1] + dt * v3[1]]),
                    [k0[0] + dt * a3[0], k0[1] + dt * a3[1]],
                )?;
                let x = [
                    x0[0] + dt / 6.0 * (v1[0] + 2.0 * v2[0] + 2.0 * v3[0] + v4[0]),
                    x0[1] + dt / 6.0 * (v1[1] + 2.0 * v2[1] + 2.0 * v3[1] + v4[1]),
                ];
                let k = [
                    k0[0] + dt / 6.0 * (a1[0] + 2.0 * a2[0] + 2.0 * a3[0] + a4[0]),
                    k0[1] + dt / 6.0 * (a1[1] + 2.0 * a2[1] + 2.0 * a3[1] + a4[1]),
                ];
                if consts.is_massless() && k[0].hypot(k[1]) < kappa {
                    return Err(VlasovError::InsideCutoff);
                }
                Ok((wrap(x), k))
            })()
            .ok()
        })
        .collect();

    ens.bands = bands;
    ens.positions = positions;
    ens.momenta = momenta;
    for (p, u) in updates.into_iter().enumerate() {
        match u {
            Some((x, k)) => {
                ens.positions[p] = x;
                ens.momenta[p] = k;
            }
            None => frozen[p] = true,
        }
    }
    ens.frozen = frozen;
}

/// Cloud-in-cell deposition of all particles' weights onto a position grid,
/// regardless of band. `sum rho dx^2` equals the total weight exactly.
/// Deposition runs over a fixed number of particle chunks merged in order,
/// so the result is bit-stable for any thread count.
pub fn deposit_density(ens: &ParticleEnsemble, grid: &Grid2D) -> Array2<f64> {
    use rayon::prelude::*;
    const CHUNKS: usize = 64;
    let n = grid.n;
    let chunk_len = ens.len().div_ceil(CHUNKS).max(1);
    let indices: Vec<usize> = (0..ens.len()).collect();
    let partials: Vec<Array2<f64>> = indices
        .par_chunks(chunk_len)
        .map(|idxs| {
            let mut local = Array2::zeros((n[0], n[1]));
            for &p in idxs {
                let x = ens.positions[p];
                let u = [x[0] / grid.spacing[0], x[1] / grid.spacing[1]];
                let base = [u[0].floor(), u[1].floor()];
                let frac = [u[0] - base[0], u[1] - base[1]];
                let i0 = (base[0] as i64).rem_euclid(n[0] as i64) as usize;
                let j0 = (base[1] as i64).rem_euclid(n[1] as i64) as usize;
                let i1 = (i0 + 1) % n[0];
                let j1 = (j0 + 1) % n[1];
                let w = ens.weights[p];
                local[[i0, j0]] += w * (1.0 - frac[0]) * (1.0 - frac[1]);
                local[[i0, j1]] += w * (1.0 - frac[0]) * frac[1];
                local[[i1, j0]] += w * frac[0] * (1.0 - frac[1]);
                local[[i1, j1]] += w * frac[0] * frac[1];
            }
            local
        })
        .collect();
    let mut out: Array2<f64> = Array2::zeros((n[0], n[1]));
    for p in partials {
        out += &p;
    }
    let cell = grid.spacing[0] * grid.spacing[1];
    out.mapv_inplace(|v| v / cell);
    out
}

/// CIC-binned band density on the shared phase-space grids. Momenta are
/// clamped to the window edge so the band's weight is preserved exactly.
pub fn phase_histogram(
    ens: &ParticleEnsemble,
    xgrid: &Grid2D,
    kgrid: &Grid2D,
    band: Band,
) -> BandDensity {
    let nk = kgrid.n;
    let nx = xgrid.n;
    let mut values = Array2::zeros((nx[0] * nx[1], nk[0] * nk[1]));
    for p in 0..ens.len() {
        if ens.bands[p] != band {
            continue;
        }
        let x = ens.positions[p];
        let ux = [x[0] / xgrid.spacing[0], x[1] / xgrid.spacing[1]];
        let bx = [ux[0].floor(), ux[1].floor()];
        let fx = [ux[0] - bx[0], ux[1] - bx[1]];
        let i0 = (bx[0] as i64).rem_euclid(nx[0] as i64) as usize;
        let j0 = (bx[1] as i64).rem_euclid(nx[1] as i64) as usize;
        let i1 = (i0 + 1) % nx[0];
        let j1 = (j0 + 1) % nx[1];

        // centered window index, clamped to keep all mass inside
        let k = ens.momenta[p];
        let uk = [
            (k[0] / kgrid.spacing[0] + (nk[0] / 2) as f64).clamp(0.0, (nk[0] - 1) as f64),
            (k[1] / kgrid.spacing[1] + (nk[1] / 2) as f64).clamp(0.0, (nk[1] - 1) as f64),
        ];
        let bk = [
            uk[0].floor().min((nk[0] - 2) as f64),
            uk[1].floor().min((nk[1] - 2) as f64),
        ];
        let fk = [uk[0] - bk[0], uk[1] - bk[1]];
        let p0 = bk[0] as usize;
        let q0 = bk[1] as usize;

        let w = ens.weights[p];
        let xw = [
            (i0, j0, (1.0 - fx[0]) * (1.0 - fx[1])),
            (i0, j1, (1.0 - fx[0]) * fx[1]),
            (i1, j0, fx[0] * (1.0 - fx[1])),
            (i1, j1, fx[0] * fx[1]),
        ];
        let kw = [
            (p0, q0, (1.0 - fk[0]) * (1.0 - fk[1])),
            (p0, q0 + 1, (1.0 - fk[0]) * fk[1]),
            (p0 + 1, q0, fk[0] * (1.0 - fk[1])),
            (p0 + 1, q0 + 1, fk[0] * fk[1]),
        ];
        for &(xi, xj, wx) in &xw {
            let xf = xi * nx[1] + xj;
            for &(ki, kj, wk) in &kw {
                values[[xf, ki * nk[1] + kj]] += w * wx * wk;
            }
        }
    }
    let cell = xgrid.spacing[0] * xgrid.spacing[1] * kgrid.spacing[0] * kgrid.spacing[1];
    values.mapv_inplace(|v| v / cell);
    BandDensity {
        band,
        xgrid: xgrid.clone(),
        kgrid: kgrid.clone(),
        values,
        mask_kappa: None,
        max_imag_trace: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_grid, LatticeSpec};
    use crate::wigner::k_coord;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn consts(hbar: f64) -> DiracConstants {
        DiracConstants::new(1.0, 1.0, hbar)
    }

    fn torus(n: usize) -> Grid2D {
        make_grid([2.0 * PI, 2.0 * PI], [n, n]).unwrap()
    }

    fn kwin(n: usize, spacing: f64) -> Grid2D {
        Grid2D {
            extent: [spacing * n as f64, spacing * n as f64],
            n: [n, n],
            spacing: [spacing, spacing],
        }
    }

    fn flat_density(xg: &Grid2D, kg: &Grid2D, band: Band) -> BandDensity {
        BandDensity {
            band,
            xgrid: xg.clone(),
            kgrid: kg.clone(),
            values: Array2::zeros((xg.len(), kg.len())),
            mask_kappa: None,
            max_imag_trace: 0.0,
        }
    }

    fn one_particle(x: [f64; 2], k: [f64; 2], band: Band) -> ParticleEnsemble {
        ParticleEnsemble {
            positions: vec![x],
            momenta: vec![k],
            weights: vec![1.0],
            bands: vec![band],
            frozen: vec![false],
            box_extent: [2.0 * PI, 2.0 * PI],
            seed: 0,
        }
    }

    #[test]
    fn point_mass_density_sampled_at_node() {
        let xg = torus(8);
        let kg = kwin(8, 0.25);
        let mut f = flat_density(&xg, &kg, Band::Plus);
        f.values[[3 * 8 + 5, 2 * 8 + 6]] = 7.0;
        let (ens, rep) = sample_from_band_density(&f, 1000, 42).unwrap();
        assert_eq!(rep.clipped_mass, 0.0);
        let x = xg.coord([3, 5]);
        let k = k_coord(&kg, [2, 6]);
        for p in 0..ens.len() {
            assert_eq!(ens.positions[p], x);
            assert_eq!(ens.momenta[p], k);
        }
        assert!((ens.total_weight() - rep.positive_mass).abs() < 1e-12);
    }

    #[test]
    fn uniform_density_histogram_within_poisson() {
        let xg = torus(8);
        let kg = kwin(8, 0.25);
        let mut f = flat_density(&xg, &kg, Band::Plus);
        f.values.fill(1.0);
        let n = 1_000_000usize;
        let (ens, _) = sample_from_band_density(&f, n, 7).unwrap();
        let bins = 8usize.pow(4);
        let expected = n as f64 / bins as f64;
        let mut counts = vec![0usize; bins];
        for p in 0..ens.len() {
            let xi = [
                (ens.positions[p][0] / xg.spacing[0]).round() as usize % 8,
                (ens.positions[p][1] / xg.spacing[1]).round() as usize % 8,
            ];
            let ki = [
                (ens.momenta[p][0] / kg.spacing[0] + 4.0).round() as usize,
                (ens.momenta[p][1] / kg.spacing[1] + 4.0).round() as usize,
            ];
            counts[(xi[0] * 8 + xi[1]) * 64 + ki[0] * 8 + ki[1]] += 1;
        }
        let sigma = expected.sqrt();
        let mut worst = 0.0f64;
        for &c in &counts {
            worst = worst.max((c as f64 - expected).abs());
        }
        // 3 sigma would flag ~0.1% of 4096 bins; 5 sigma as a hard bound
        assert!(
            worst < 5.0 * sigma,
            "worst bin deviation {worst} vs sigma {sigma}"
        );
    }

    #[test]
    fn clipping_reported_and_empty_rejected() {
        let xg = torus(8);
        let kg = kwin(8, 0.25);
        let mut f = flat_density(&xg, &kg, Band::Minus);
        f.values.fill(1.0);
        f.values[[0, 0]] = -0.5;
        let (_, rep) = sample_from_band_density(&f, 100, 3).unwrap();
        assert!(rep.clipped_mass > 0.0);
        assert!((rep.clipped_fraction - 0.5 / (4095.0 + 0.5)).abs() < 1e-12);
        let z = flat_density(&xg, &kg, Band::Plus);
        assert_eq!(
            sample_from_band_density(&z, 10, 0).unwrap_err(),
            VlasovError::EmptyDensity
        );
    }

    #[test]
    fn deterministic_under_seed() {
        let xg = torus(8);
        let kg = kwin(8, 0.25);
        let mut f = flat_density(&xg, &kg, Band::Plus);
        f.values.fill(1.0);
        let (a, _) = sample_from_band_density(&f, 5000, 99).unwrap();
        let (b, _) = sample_from_band_density(&f, 5000, 99).unwrap();
        assert_eq!(a.positions, b.positions);
        assert_eq!(a.momenta, b.momenta);
    }

    #[test]
    fn rhs_free_streaming_and_band_mirror() {
        let lat = LatticeSpec::square(2.0 * PI, 0.5).unwrap();
        let pot = PeriodicPotential::zero(lat);
        let force = ForceField {
            pot: &pot,
            vint_grad: None,
        };
        let c = consts(0.25);
        let (v, a) =
            characteristics_rhs([1.0, 1.0], [1.0, 0.0], Band::Plus, &force, &c, 0.0).unwrap();
        assert!((v[0] - 1.0 / 2f64.sqrt()).abs() < 1e-15 && v[1].abs() < 1e-15);
        assert_eq!(a, [0.0, 0.0]);
        let (vm, am) =
            characteristics_rhs([1.0, 1.0], [1.0, 0.0], Band::Minus, &force, &c, 0.0).unwrap();
        assert_eq!(vm[0], -v[0]);
        assert_eq!(am, a);
    }

    #[test]
    fn rhs_massless_cutoff() {
        let lat = LatticeSpec::square(2.0 * PI, 0.5).unwrap();
        let pot = PeriodicPotential::zero(lat);
        let force = ForceField {
            pot: &pot,
            vint_grad: None,
        };
        let ml = DiracConstants::new(0.0, 1.0, 0.25);
        assert_eq!(
            characteristics_rhs([0.0, 0.0], [0.2, 0.0], Band::Plus, &force, &ml, 0.5).unwrap_err(),
            VlasovError::InsideCutoff
        );
        let (v, _) =
            characteristics_rhs([0.0, 0.0], [0.0, 0.8], Band::Plus, &force, &ml, 0.5).unwrap();
        assert!((v[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn free_streaming_exact_on_torus() {
        let lat = LatticeSpec::square(2.0 * PI, 0.5).unwrap();
        let pot = PeriodicPotential::zero(lat);
        let force = ForceField {
            pot: &pot,
            vint_grad: None,
        };
        let c = consts(0.25);
        let mut ens = one_particle([1.0, 2.0], [0.5, 0.0], Band::Plus)
            .merge(one_particle([4.0, 0.5], [-0.3, 0.7], Band::Minus));
        let start = ens.clone();
        let dt = 1e-3f64;
        let t_final = 1.0f64;
        for _ in 0..(t_final / dt).round() as usize {
            vlasov_step(&mut ens, &force, &c, dt, 0.0);
        }
        for p in 0..2 {
            let v = group_velocity(start.momenta[p], &c).unwrap();
            let s = start.bands[p].sign();
            for a in 0..2 {
                let want = (start.positions[p][a] + s * v[a] * t_final).rem_euclid(2.0 * PI);
                assert!(
                    (ens.positions[p][a] - want).abs() < 1e-10,
                    "axis {a}: {} vs {want}",
                    ens.positions[p][a]
                );
                assert!((ens.momenta[p][a] - start.momenta[p][a]).abs() < 1e-14);
            }
        }
        assert_eq!(ens.total_weight(), start.total_weight());
    }

    #[test]
    fn rk4_matches_tiny_step_reference() {
        let lat = LatticeSpec::square(2.0 * PI, 0.5).unwrap();
        let pot = PeriodicPotential::single_mode(lat, (1, 0), Complex64::new(0.05, 0.0)).unwrap();
        let force = ForceField {
            pot: &pot,
            vint_grad: None,
        };
        let c = consts(0.25);
        let run = |dt: f64| {
            let mut ens = one_particle([2.0, 1.0], [0.5, 0.1], Band::Plus);
            for _ in 0..(1.0 / dt).round() as usize {
                vlasov_step(&mut ens, &force, &c, dt, 0.0);
            }
            (ens.positions[0], ens.momenta[0])
        };
        let (x1, k1) = run(1e-3);
        let (xr, kr) = run(1e-5);
        for a in 0..2 {
            assert!((x1[a] - xr[a]).abs() < 1e-8, "x[{a}] {} vs {}", x1[a], xr[a]);
            assert!((k1[a] - kr[a]).abs() < 1e-8);
        }
    }

    #[test]
    fn richardson_step_size_order() {
        // two dt/2 steps versus one dt step differ at O(dt^5)
        let lat = LatticeSpec::square(2.0 * PI, 0.5).unwrap();
        let pot = PeriodicPotential::single_mode(lat, (1, 0), Complex64::new(0.05, 0.0)).unwrap();
        let force = ForceField {
            pot: &pot,
            vint_grad: None,
        };
        let c = consts(0.25);
        let diff = |dt: f64| {
            let mut a = one_particle([2.0, 1.0], [0.5, 0.1], Band::Plus);
            vlasov_step(&mut a, &force, &c, dt, 0.0);
            let mut b = one_particle([2.0, 1.0], [0.5, 0.1], Band::Plus);
            vlasov_step(&mut b, &force, &c, 0.5 * dt, 0.0);
            vlasov_step(&mut b, &force, &c, 0.5 * dt, 0.0);
            let mut d = 0.0f64;
            for j in 0..2 {
                d = d.max((a.positions[0][j] - b.positions[0][j]).abs());
                d = d.max((a.momenta[0][j] - b.momenta[0][j]).abs());
            }
            d
        };
        let d1 = diff(0.2);
        let d2 = diff(0.1);
        let ratio = d1 / d2;
        assert!(
            (20.0..45.0).contains(&ratio),
            "Richardson ratio {ratio} (want about 32): {d1} vs {d2}"
        );
    }

    #[test]
    fn energy_drift_static_potential() {
        let lat = LatticeSpec::square(2.0 * PI, 0.5).unwrap();
        let pot = PeriodicPotential::single_mode(lat, (1, 0), Complex64::new(0.05, 0.0)).unwrap();
        let force = ForceField {
            pot: &pot,
            vint_grad: None,
        };
        let c = consts(0.25);
        let mut ens = one_particle([2.0, 1.0], [0.5, 0.1], Band::Plus);
        let e0 = particle_energy(ens.positions[0], ens.momenta[0], Band::Plus, &pot, &c);
        let dt = 1e-3f64;
        let mut worst = 0.0f64;
        for _ in 0..(10.0 / dt).round() as usize {
            vlasov_step(&mut ens, &force, &c, dt, 0.0);
            let e = particle_energy(ens.positions[0], ens.momenta[0], Band::Plus, &pot, &c);
            worst = worst.max((e - e0).abs());
        }
        assert!(worst < 1e-6, "energy drift {worst}");
    }

    #[test]
    fn massless_cutoff_freezes_and_tallies() {
        let lat = LatticeSpec::square(2.0 * PI, 0.5).unwrap();
        // strong force pushing k through the origin
        let pot = PeriodicPotential::single_mode(lat, (1, 0), Complex64::new(1.0, 0.0)).unwrap();
        let force = ForceField {
            pot: &pot,
            vint_grad: None,
        };
        let ml = DiracConstants::new(0.0, 1.0, 0.25);
        let mut ens = one_particle([1.3, 2.0], [0.52, 0.0], Band::Plus)
            .merge(one_particle([4.0, 1.0], [3.0, 0.0], Band::Plus));
        ens.weights = vec![0.25, 0.75];
        for _ in 0..4000 {
            vlasov_step(&mut ens, &force, &ml, 1e-3, 0.5);
        }
        assert!(ens.frozen[0], "slow particle should hit the cutoff");
        assert!((ens.leakage() - 0.25).abs() < 1e-15);
        assert_eq!(ens.total_weight(), 1.0);
    }

    #[test]
    fn deposit_single_particle_cases() {
        let grid = torus(8);
        let cell = grid.spacing[0] * grid.spacing[1];
        // exactly on a node
        let mut ens = one_particle(grid.coord([2, 5]), [0.0, 0.0], Band::Plus);
        ens.weights[0] = 3.0;
        let rho = deposit_density(&ens, &grid);
        assert!((rho[[2, 5]] - 3.0 / cell).abs() < 1e-12);
        assert!((rho.sum() * cell - 3.0).abs() < 1e-13);

        // at a cell center: quarter weights on four corners
        let ens = one_particle(
            [
                grid.coord([2, 5])[0] + 0.5 * grid.spacing[0],
                grid.coord([2, 5])[1] + 0.5 * grid.spacing[1],
            ],
            [0.0, 0.0],
            Band::Plus,
        );
        let rho = deposit_density(&ens, &grid);
        for (i, j) in [(2, 5), (2, 6), (3, 5), (3, 6)] {
            assert!((rho[[i, j]] - 0.25 / cell).abs() < 1e-12);
        }
    }

    #[test]
    fn deposit_conserves_mass_random_ensemble() {
        let grid = torus(16);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 10000;
        let ens = ParticleEnsemble {
            positions: (0..n)
                .map(|_| [rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)])
                .collect(),
            momenta: vec![[0.0, 0.0]; n],
            weights: (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
            bands: vec![Band::Plus; n],
            frozen: vec![false; n],
            box_extent: grid.extent,
            seed: 0,
        };
        let rho = deposit_density(&ens, &grid);
        let cell = grid.spacing[0] * grid.spacing[1];
        assert!((rho.sum() * cell - ens.total_weight()).abs() < 1e-13 * ens.total_weight());
    }

    #[test]
    fn histogram_mass_and_roundtrip() {
        let xg = torus(8);
        let kg = kwin(8, 0.25);
        // empty ensemble -> zero field
        let empty = ParticleEnsemble {
            positions: vec![],
            momenta: vec![],
            weights: vec![],
            bands: vec![],
            frozen: vec![],
            box_extent: xg.extent,
            seed: 0,
        };
        let h = phase_histogram(&empty, &xg, &kg, Band::Plus);
        assert_eq!(h.values.sum(), 0.0);

        // smooth density -> sample -> histogram returns it within MC error
        let mut f = flat_density(&xg, &kg, Band::Plus);
        for xf in 0..xg.len() {
            let x = xg.coord(xg.unflat(xf));
            for c in 0..kg.len() {
                let k = k_coord(&kg, [c / 8, c % 8]);
                f.values[[xf, c]] = (2.0 + (x[0]).cos()) * (-(k[0] * k[0] + k[1] * k[1])).exp();
            }
        }
        let n = 400_000;
        let (ens, rep) = sample_from_band_density(&f, n, 5).unwrap();
        let h = phase_histogram(&ens, &xg, &kg, Band::Plus);
        let mass_dev = (h.mass() - ens.band_weight(Band::Plus)).abs();
        assert!(mass_dev < 1e-11 * rep.positive_mass, "mass deviation {mass_dev:e} vs mass {}", rep.positive_mass);
        // per-bin agreement within Monte-Carlo error (particles sit at nodes)
        let cell = f.phase_cell();
        let mut worst = 0.0f64;
        for xf in 0..xg.len() {
            for c in 0..kg.len() {
                let expect = f.values[[xf, c]];
                let p = expect * cell / rep.positive_mass;
                if p <= 0.0 {
                    continue;
                }
                let sigma = (n as f64 * p * (1.0 - p)).sqrt() * rep.positive_mass
                    / (n as f64 * cell);
                worst = worst.max((h.values[[xf, c]] - expect).abs() / sigma.max(1e-12));
            }
        }
        assert!(worst < 6.0, "worst bin deviation {worst} sigma");
    }
}
