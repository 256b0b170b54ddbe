//! Exact spectral reduction of one snapshot into the weak pairings and
//! interband norms the experiments need.
//!
//! On the torus the full-resolution Wigner field is a finite sum over
//! spinor Fourier modes,
//!
//! ```text
//! W(x, q dk) = (L/(pi hbar))^2 sum_{m + m' = q (mod n)}
//!              psihat_m psihat_{m'}^dagger e^{i (m - m') dxi . x},
//! ```
//!
//! and every test factor is band-limited: `eta` is a trigonometric
//! polynomial, the external potential lives on the dual lattice, and the
//! mean field has fast-decaying Fourier data. Summing over the full x grid
//! therefore collapses each pairing to exact mode matches,
//!
//! ```text
//! <f_b, eta phi> = L^2 sum_p etahat_p sum_m
//!                  Tr[Pi_b(k_{2m+p}) psihat_m psihat_{m+p}^dagger] phi(k_{2m+p}),
//! ```
//!
//! with `k_q = q pi hbar / L`, so the scan needs no phase-space grid, no
//! momentum window, and no quadrature at all: its cost is set by the
//! spinor's spectral support box. The interband and total norms reduce the
//! same way (the two off-diagonal blocks are Frobenius-orthogonal).

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::HashMap;

use crate::lattice::signed_index;
use crate::potential::PeriodicPotential;
use crate::propagate::SpinorField;
use crate::spectral::{freq, Fft2};
use crate::symbol::{group_velocity, projector, Band, DiracConstants, Mat2};
use crate::wigner::TestFunction;

/// The three pairings of the weak transport residual for one test pair,
/// indexed by band (`[0]` = +, `[1]` = -).
#[derive(Debug, Clone, Copy, Default)]
pub struct PairingTriple {
    /// `<f, eta phi>`
    pub value: [f64; 2],
    /// `<f, (v . grad eta) phi>`
    pub advect: [f64; 2],
    /// `<f, eta (grad V . grad phi)>`
    pub force: [f64; 2],
}

/// Everything the experiment drivers need from one snapshot.
#[derive(Debug, Clone)]
pub struct SnapshotScan {
    pub t: f64,
    pub per_test: Vec<PairingTriple>,
    pub od_l2: f64,
    pub w_l2: f64,
    pub mass: [f64; 2],
    /// largest imaginary residue of any pairing accumulator, relative to
    /// the band mass scale; a consistency monitor
    pub imag_residual: f64,
    /// side lengths of the spectral support box
    pub support: [usize; 2],
}

struct ModeTable {
    /// signed q bounds per axis
    lo: [i64; 2],
    size: [usize; 2],
    /// per q: None inside the massless cutoff or at the crossing
    nodes: Vec<Option<KNode>>,
}

struct KNode {
    pp: Mat2,
    pm: Mat2,
    vel: [f64; 2],
    phi: Vec<f64>,
    dphi: Vec<[f64; 2]>,
}

impl ModeTable {
    fn get(&self, q: [i64; 2]) -> &Option<KNode> {
        let i = (q[0] - self.lo[0]) as usize;
        let j = (q[1] - self.lo[1]) as usize;
        &self.nodes[i * self.size[1] + j]
    }
}

/// Fourier modes of `eta` as `(p, coefficient)` with
/// `eta(x) = sum_p c_p e^{i p dxi . x}`.
fn eta_modes(test: &TestFunction, dxi: f64) -> Vec<([i64; 2], Complex64)> {
    let mut out = Vec::new();
    if test.eta.constant != 0.0 {
        out.push(([0, 0], Complex64::new(test.eta.constant, 0.0)));
    }
    for (f, ca, sa) in &test.eta.terms {
        let p = [
            (f[0] / dxi).round() as i64,
            (f[1] / dxi).round() as i64,
        ];
        debug_assert!((f[0] / dxi - p[0] as f64).abs() < 1e-9);
        debug_assert!((f[1] / dxi - p[1] as f64).abs() < 1e-9);
        // ca cos + sa sin = (ca - i sa)/2 e^{+} + (ca + i sa)/2 e^{-}
        out.push((p, Complex64::new(0.5 * ca, -0.5 * sa)));
        out.push(([-p[0], -p[1]], Complex64::new(0.5 * ca, 0.5 * sa)));
    }
    out
}

/// Fourier modes of the total potential gradient
/// `grad(V_Gamma(x/a) + V_int)` on the grid frequency lattice.
fn grad_v_modes(
    pot: &PeriodicPotential,
    vint: &Array2<f64>,
    psi_grid: &crate::lattice::Grid2D,
    fft: &Fft2,
) -> Vec<([i64; 2], [Complex64; 2])> {
    let dxi = 2.0 * std::f64::consts::PI / psi_grid.extent[0];
    let a = pot.lattice.scale_a;
    let mut map: HashMap<[i64; 2], [Complex64; 2]> = HashMap::new();
    for (mu, coeff) in pot.modes() {
        let freq_phys = [mu[0] / a, mu[1] / a];
        let p = [
            (freq_phys[0] / dxi).round() as i64,
            (freq_phys[1] / dxi).round() as i64,
        ];
        // commensurability is validated at config time
        debug_assert!((freq_phys[0] / dxi - p[0] as f64).abs() < 1e-6);
        let e = map.entry(p).or_default();
        e[0] += coeff * Complex64::new(0.0, freq_phys[0]);
        e[1] += coeff * Complex64::new(0.0, freq_phys[1]);
    }
    let vhat = fft.coefficients(&vint.mapv(|v| Complex64::new(v, 0.0)));
    let vmax = vhat.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if vmax > 0.0 {
        let n = psi_grid.n;
        for i in 0..n[0] {
            for j in 0..n[1] {
                let v = vhat[[i, j]];
                if v.norm() > 1e-10 * vmax {
                    let xi = freq(psi_grid, i, j);
                    let p = [signed_index(i, n[0]), signed_index(j, n[1])];
                    let e = map.entry(p).or_default();
                    e[0] += v * Complex64::new(0.0, xi[0]);
                    e[1] += v * Complex64::new(0.0, xi[1]);
                }
            }
        }
    }
    map.into_iter().collect()
}

/// One-pass spectral scan of a snapshot: exact pairings for the whole
/// battery plus the interband/total norms.
///
/// `vint` is the mean-field potential on the fine grid at this time; the
/// external potential must be commensurate with the torus (validated at
/// configuration time).
pub fn scan_snapshot(
    psi: &SpinorField,
    t: f64,
    consts: &DiracConstants,
    kappa: f64,
    battery: &[TestFunction],
    pot: &PeriodicPotential,
    vint: &Array2<f64>,
) -> SnapshotScan {
    let n = psi.grid.n[0] as i64;
    let fft = Fft2::new(psi.grid.n);
    let h1 = fft.coefficients(&psi.c1);
    let h2 = fft.coefficients(&psi.c2);
    let area = psi.grid.extent[0] * psi.grid.extent[1];
    let dxi = 2.0 * std::f64::consts::PI / psi.grid.extent[0];
    let dk = std::f64::consts::PI * psi.hbar / psi.grid.extent[0];

    // spectral support box in signed mode indices
    let max_amp = h1
        .iter()
        .chain(h2.iter())
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    let nt = battery.len();
    let empty = SnapshotScan {
        t,
        per_test: vec![PairingTriple::default(); nt],
        od_l2: 0.0,
        w_l2: 0.0,
        mass: [0.0; 2],
        imag_residual: 0.0,
        support: [0, 0],
    };
    if max_amp == 0.0 {
        return empty;
    }
    let thresh = 1e-9 * max_amp;
    let mut lo = [i64::MAX; 2];
    let mut hi = [i64::MIN; 2];
    for i in 0..psi.grid.n[0] {
        for j in 0..psi.grid.n[1] {
            if h1[[i, j]].norm() > thresh || h2[[i, j]].norm() > thresh {
                let s = [
                    signed_index(i, psi.grid.n[0]),
                    signed_index(j, psi.grid.n[1]),
                ];
                for ax in 0..2 {
                    lo[ax] = lo[ax].min(s[ax]);
                    hi[ax] = hi[ax].max(s[ax]);
                }
            }
        }
    }
    if lo[0] > hi[0] {
        return empty;
    }
    let modes: Vec<([i64; 2], [Complex64; 2])> = {
        let mut v = Vec::new();
        for m1 in lo[0]..=hi[0] {
            for m2 in lo[1]..=hi[1] {
                let iu = [m1.rem_euclid(n) as usize, m2.rem_euclid(n) as usize];
                let amp = [h1[[iu[0], iu[1]]], h2[[iu[0], iu[1]]]];
                v.push(([m1, m2], amp));
            }
        }
        v
    };
    let bsize = [(hi[0] - lo[0] + 1) as usize, (hi[1] - lo[1] + 1) as usize];
    let fetch = |m: [i64; 2]| -> [Complex64; 2] {
        let iu = [m[0].rem_euclid(n) as usize, m[1].rem_euclid(n) as usize];
        [h1[[iu[0], iu[1]]], h2[[iu[0], iu[1]]]]
    };

    // mode lists of the test factors and the potential gradient
    let etas: Vec<Vec<([i64; 2], Complex64)>> =
        battery.iter().map(|tf| eta_modes(tf, dxi)).collect();
    let gv = grad_v_modes(pot, vint, &psi.grid, &fft);
    // per test: combined modes of eta * dV (axis-wise coefficients)
    let force_modes: Vec<Vec<([i64; 2], [Complex64; 2])>> = etas
        .iter()
        .map(|ems| {
            let mut map: HashMap<[i64; 2], [Complex64; 2]> = HashMap::new();
            for (pe, ce) in ems {
                for (pv, g) in &gv {
                    let e = map.entry([pe[0] + pv[0], pe[1] + pv[1]]).or_default();
                    e[0] += *ce * g[0];
                    e[1] += *ce * g[1];
                }
            }
            let mut v: Vec<_> = map.into_iter().collect();
            v.sort_by_key(|(p, _)| *p);
            v
        })
        .collect();

    // momentum table over every q = 2m + p the sums can touch
    let pmax = etas
        .iter()
        .flatten()
        .map(|(p, _)| p[0].abs().max(p[1].abs()))
        .chain(
            force_modes
                .iter()
                .flatten()
                .map(|(p, _)| p[0].abs().max(p[1].abs())),
        )
        .max()
        .unwrap_or(0);
    let qlo = [2 * lo[0] - pmax, 2 * lo[1] - pmax];
    let qhi = [2 * hi[0] + pmax, 2 * hi[1] + pmax];
    let qsize = [
        (qhi[0] - qlo[0] + 1) as usize,
        (qhi[1] - qlo[1] + 1) as usize,
    ];
    let nodes: Vec<Option<KNode>> = (0..qsize[0] * qsize[1])
        .into_par_iter()
        .map(|idx| {
            let q = [
                qlo[0] + (idx / qsize[1]) as i64,
                qlo[1] + (idx % qsize[1]) as i64,
            ];
            // wrap onto the conjugate torus
            let qs = [
                (q[0] + n / 2).rem_euclid(n) - n / 2,
                (q[1] + n / 2).rem_euclid(n) - n / 2,
            ];
            let k = [qs[0] as f64 * dk, qs[1] as f64 * dk];
            if consts.is_massless() && k[0].hypot(k[1]) < kappa.max(1e-300) {
                return None;
            }
            let pp = projector(k, consts, Band::Plus).ok()?;
            let pm = projector(k, consts, Band::Minus).ok()?;
            let vel = group_velocity(k, consts).ok()?;
            Some(KNode {
                pp,
                pm,
                vel,
                phi: battery.iter().map(|tf| tf.phi.eval(k)).collect(),
                dphi: battery.iter().map(|tf| tf.phi.grad(k)).collect(),
            })
        })
        .collect();
    let table = ModeTable {
        lo: qlo,
        size: qsize,
        nodes,
    };

    // band traces Tr[Pi_b psihat_m psihat_{m+p}^dagger] = psihat_{m+p}^+ Pi_b psihat_m
    let trace_pair = |node: &KNode, am: &[Complex64; 2], ap: &[Complex64; 2]| -> [Complex64; 2] {
        let up = node.pp.mul_vec(*am);
        let um = node.pm.mul_vec(*am);
        [
            ap[0].conj() * up[0] + ap[1].conj() * up[1],
            ap[0].conj() * um[0] + ap[1].conj() * um[1],
        ]
    };

    // value, advection, force accumulators (complex; imaginary residue is
    // the consistency monitor)
    let mut value = vec![[Complex64::default(); 2]; nt];
    let mut advect = vec![[Complex64::default(); 2]; nt];
    let mut force = vec![[Complex64::default(); 2]; nt];
    let mut mass = [Complex64::default(); 2];

    for (ti, ems) in etas.iter().enumerate() {
        for (p, ce) in ems {
            for (m, am) in &modes {
                let q = [2 * m[0] + p[0], 2 * m[1] + p[1]];
                let Some(node) = table.get(q) else { continue };
                let ap = fetch([m[0] + p[0], m[1] + p[1]]);
                let tr = trace_pair(node, am, &ap);
                let phi = node.phi[ti];
                if phi != 0.0 {
                    for b in 0..2 {
                        value[ti][b] += *ce * tr[b] * phi;
                    }
                    // (v . grad eta) phi: grad of the e^{ip dxi x} mode
                    let gdot = Complex64::new(0.0, dxi)
                        * (node.vel[0] * p[0] as f64 + node.vel[1] * p[1] as f64);
                    for b in 0..2 {
                        advect[ti][b] += *ce * gdot * tr[b] * phi;
                    }
                }
                if ti == 0 && *p == [0, 0] {
                    // reuse the p = 0 pass for the band masses
                    mass[0] += tr[0];
                    mass[1] += tr[1];
                }
            }
        }
    }
    // masses need the p = 0 trace even when no test has a constant part
    if !etas.iter().any(|e| e.iter().any(|(p, _)| *p == [0, 0])) || etas.is_empty() {
        for (m, am) in &modes {
            let q = [2 * m[0], 2 * m[1]];
            if let Some(node) = table.get(q) {
                let tr = trace_pair(node, am, am);
                mass[0] += tr[0];
                mass[1] += tr[1];
            }
        }
    }

    for (ti, fms) in force_modes.iter().enumerate() {
        for (p, c) in fms {
            for (m, am) in &modes {
                let q = [2 * m[0] + p[0], 2 * m[1] + p[1]];
                let Some(node) = table.get(q) else { continue };
                let dphi = node.dphi[ti];
                if dphi[0] == 0.0 && dphi[1] == 0.0 {
                    continue;
                }
                let ap = fetch([m[0] + p[0], m[1] + p[1]]);
                let tr = trace_pair(node, am, &ap);
                let wgt = c[0] * dphi[0] + c[1] * dphi[1];
                for b in 0..2 {
                    force[ti][b] += wgt * tr[b];
                }
            }
        }
    }

    // interband and total norms: the off-diagonal blocks are
    // Frobenius-orthogonal, so each (m, m') pair contributes
    // |Pi+ a_m|^2 |Pi- a_m'|^2 + |Pi- a_m|^2 |Pi+ a_m'|^2
    let rows: Vec<(usize, f64, f64)> = (0..bsize[0])
        .into_par_iter()
        .map(|r| {
            let mut od2 = 0.0;
            let mut w2 = 0.0;
            for c in 0..bsize[1] {
                let m = [lo[0] + r as i64, lo[1] + c as i64];
                let am = fetch(m);
                let nm2 = am[0].norm_sqr() + am[1].norm_sqr();
                if nm2 == 0.0 {
                    continue;
                }
                for (mp, ap) in &modes {
                    let q = [m[0] + mp[0], m[1] + mp[1]];
                    let Some(node) = table.get(q) else { continue };
                    let np2 = ap[0].norm_sqr() + ap[1].norm_sqr();
                    if np2 == 0.0 {
                        continue;
                    }
                    let pp_m = node.pp.mul_vec(am);
                    let pp_p = node.pp.mul_vec(*ap);
                    let pmm = [am[0] - pp_m[0], am[1] - pp_m[1]];
                    let pmp = [ap[0] - pp_p[0], ap[1] - pp_p[1]];
                    let a_pp = pp_m[0].norm_sqr() + pp_m[1].norm_sqr();
                    let a_pm = pmm[0].norm_sqr() + pmm[1].norm_sqr();
                    let b_pp = pp_p[0].norm_sqr() + pp_p[1].norm_sqr();
                    let b_pm = pmp[0].norm_sqr() + pmp[1].norm_sqr();
                    od2 += a_pp * b_pm + a_pm * b_pp;
                    w2 += nm2 * np2;
                }
            }
            (r, od2, w2)
        })
        .collect();
    let mut sorted = rows;
    sorted.sort_by_key(|(r, _, _)| *r);
    let mut od2 = 0.0;
    let mut w2 = 0.0;
    for (_, o, w) in sorted {
        od2 += o;
        w2 += w;
    }

    let mass_scale = (mass[0].re.abs() + mass[1].re.abs()).max(1e-300);
    let mut imag: f64 = (mass[0].im.abs() + mass[1].im.abs()) / mass_scale;
    let mut per_test = vec![PairingTriple::default(); nt];
    for ti in 0..nt {
        for b in 0..2 {
            per_test[ti].value[b] = area * value[ti][b].re;
            per_test[ti].advect[b] = area * advect[ti][b].re;
            per_test[ti].force[b] = area * force[ti][b].re;
            imag = imag
                .max(value[ti][b].im.abs() / mass_scale)
                .max(advect[ti][b].im.abs() / mass_scale)
                .max(force[ti][b].im.abs() / mass_scale);
        }
    }
    let plancherel = area / (std::f64::consts::PI * psi.hbar);
    SnapshotScan {
        t,
        per_test,
        od_l2: plancherel * od2.sqrt(),
        w_l2: plancherel * w2.sqrt(),
        mass: [area * mass[0].re, area * mass[1].re],
        imag_residual: imag,
        support: bsize,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_grid, LatticeSpec};
    use crate::potential::{hartree_potential, HartreeKernel};
    use crate::propagate::{initial_wavepacket, Propagator};
    use crate::wigner::{
        band_split, pair_advect, pair_force, weak_pair, wigner_transform, WignerSettings,
    };
    use std::f64::consts::PI;

    /// total potential gradient on the full fine grid, for the dense path
    fn dense_force(
        prop: &Propagator,
        pot: &PeriodicPotential,
        psi: &SpinorField,
    ) -> [Array2<f64>; 2] {
        let fine = &prop.grid;
        let (_, gint) = hartree_potential(prop.fft(), fine, &psi.density(), &prop.kernel);
        let mut g = [
            Array2::zeros((fine.n[0], fine.n[1])),
            Array2::zeros((fine.n[0], fine.n[1])),
        ];
        for i in 0..fine.n[0] {
            for j in 0..fine.n[1] {
                let (_, ge) =
                    crate::potential::eval_periodic(pot, fine.coord([i, j]), pot.lattice.scale_a);
                g[0][[i, j]] = ge[0] + gint[0][[i, j]];
                g[1][[i, j]] = ge[1] + gint[1][[i, j]];
            }
        }
        g
    }

    #[test]
    fn spectral_scan_matches_dense_full_grid_pairings() {
        // dual route: the dense transform summed over the full grids must
        // agree with the spectral reduction to roundoff
        let grid = make_grid([2.0 * PI, 2.0 * PI], [32, 32]).unwrap();
        let hbar = 0.25;
        let consts = DiracConstants::new(1.0, 1.0, hbar);
        let psi = initial_wavepacket(&grid, [PI, PI], [0.5, 0.0], Band::Plus, &consts, 0.4)
            .unwrap();
        let battery = crate::experiments::config::standard_battery(
            [0.5, 0.0],
            0.3,
            0.08,
            grid.extent,
        );
        let lat = LatticeSpec::square(2.0 * PI, 0.5).unwrap();
        let pot = PeriodicPotential::single_mode(
            lat,
            (1, 0),
            num_complex::Complex64::new(0.05, 0.02),
        )
        .unwrap();
        let prop = Propagator::new(grid.clone(), consts, &pot, HartreeKernel::gaussian(1.0));
        let vint = prop.hartree(&psi);

        let scan = scan_snapshot(&psi, 0.0, &consts, 0.0, &battery, &pot, &vint);

        let w = wigner_transform(&psi, 1).unwrap();
        let (fp, fm, od) = band_split(&w, &consts, 0.0);
        let gv_full = dense_force(&prop, &pot, &psi);
        assert!(
            (scan.od_l2 - od.l2_norm()).abs() < 1e-8 * od.l2_norm().max(1e-12),
            "od {} vs {}",
            scan.od_l2,
            od.l2_norm()
        );
        assert!((scan.w_l2 - w.l2_norm()).abs() < 1e-8 * w.l2_norm());
        assert!((scan.mass[0] - fp.mass()).abs() < 1e-10);
        assert!((scan.mass[1] - fm.mass()).abs() < 1e-10);
        assert!(scan.imag_residual < 1e-10);
        let floor = 1e-12 * (scan.mass[0].abs() + scan.mass[1].abs());
        for (ti, test) in battery.iter().enumerate() {
            let triple = scan.per_test[ti];
            for (b, f) in [(0usize, &fp), (1usize, &fm)] {
                let v = weak_pair(f, test);
                let a = pair_advect(f, test, &consts);
                let fo = pair_force(f, test, &gv_full);
                assert!(
                    (triple.value[b] - v).abs() < 1e-9 * v.abs() + floor,
                    "test {} band {b}: value {} vs {v}",
                    test.id,
                    triple.value[b]
                );
                assert!(
                    (triple.advect[b] - a).abs() < 1e-9 * a.abs() + floor,
                    "test {} band {b}: advect {} vs {a}",
                    test.id,
                    triple.advect[b]
                );
                assert!(
                    (triple.force[b] - fo).abs() < 1e-7 * fo.abs() + floor,
                    "test {} band {b}: force {} vs {fo}",
                    test.id,
                    triple.force[b]
                );
            }
        }
    }

    #[test]
    fn spectral_scan_massless_mask_matches_dense() {
        let grid = make_grid([2.0 * PI, 2.0 * PI], [32, 32]).unwrap();
        let hbar = 0.25;
        let consts = DiracConstants::new(0.0, 1.0, hbar);
        let kappa = 0.5;
        let psi =
            initial_wavepacket(&grid, [PI, PI], [1.0, 0.0], Band::Plus, &consts, 0.6).unwrap();
        let battery = vec![crate::wigner::TestFunction::new(
            "m",
            crate::wigner::TrigPoly::mode([1.0, 0.0], 1.0, 0.5),
            crate::wigner::BumpC2 {
                center: [1.0, 0.0],
                radius: 0.3,
            },
            grid.extent,
        )];
        let lat = LatticeSpec::square(2.0 * PI, 0.5).unwrap();
        let pot = PeriodicPotential::zero(lat);
        let vint = Array2::zeros((32, 32));
        let scan = scan_snapshot(&psi, 0.0, &consts, kappa, &battery, &pot, &vint);

        let w = wigner_transform(&psi, 1).unwrap();
        let (fp, _, od) = band_split(&w, &consts, kappa);
        assert!((scan.mass[0] - fp.mass()).abs() < 1e-10);
        assert!((scan.od_l2 - od.l2_norm()).abs() < 1e-8 * od.l2_norm().max(1e-12));
        let v = weak_pair(&fp, &battery[0]);
        assert!((scan.per_test[0].value[0] - v).abs() < 1e-9 * v.abs() + 1e-12 * scan.mass[0]);
    }

    #[test]
    fn zero_field_scans_to_zero() {
        let grid = make_grid([2.0 * PI, 2.0 * PI], [16, 16]).unwrap();
        let consts = DiracConstants::new(1.0, 1.0, 0.5);
        let psi = SpinorField::zeros(grid.clone(), 0.5);
        let lat = LatticeSpec::square(2.0 * PI, 0.5).unwrap();
        let pot = PeriodicPotential::zero(lat);
        let vint = Array2::zeros((16, 16));
        let battery = crate::experiments::config::standard_battery(
            [0.5, 0.0],
            0.3,
            0.08,
            grid.extent,
        );
        let scan = scan_snapshot(&psi, 0.0, &consts, 0.0, &battery, &pot, &vint);
        assert_eq!(scan.w_l2, 0.0);
        assert_eq!(scan.mass, [0.0, 0.0]);
    }

    #[test]
    fn free_packet_pairings_track_the_moving_packet() {
        // the cos(x1) pairing of a free packet launched from the cosine's
        // extremum grows quadratically in t; a frozen pairing would flag
        // a momentum-sampling bug
        let grid = make_grid([2.0 * PI, 2.0 * PI], [64, 64]).unwrap();
        let hbar = 0.25;
        let consts = DiracConstants::new(1.0, 1.0, hbar);
        let lat = LatticeSpec::square(2.0 * PI, 0.5).unwrap();
        let pot = PeriodicPotential::zero(lat);
        let mut prop = Propagator::new(grid.clone(), consts, &pot, HartreeKernel::none());
        let mut psi =
            initial_wavepacket(&grid, [PI, PI], [0.5, 0.0], Band::Plus, &consts, hbar.sqrt())
                .unwrap();
        let battery = crate::experiments::config::standard_battery(
            [0.5, 0.0],
            0.3,
            0.08,
            grid.extent,
        );
        let vint = Array2::zeros((64, 64));
        let v0 = scan_snapshot(&psi, 0.0, &consts, 0.0, &battery, &pot, &vint).per_test[1]
            .value[0];
        for _ in 0..100 {
            prop.step(&mut psi, 1e-3);
        }
        let v1 = scan_snapshot(&psi, 0.1, &consts, 0.0, &battery, &pot, &vint).per_test[1]
            .value[0];
        // the packet moved about v t = 0.045; cos(pi + d) - cos(pi) = d^2/2
        let expect = (0.045f64).powi(2) / 2.0;
        assert!(
            (v1 - v0).abs() > 0.1 * expect * v0.abs(),
            "cos pairing did not move: {v0} -> {v1}"
        );
    }
}
