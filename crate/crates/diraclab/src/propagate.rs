//! Split-step evolution of the spinor field under the scaled Dirac equation
//! with external periodic potential and self-consistent Hartree mean field.
//!
//! One Strang step is
//!
//! ```text
//! psi <- exp(-i dt V / 2 hbar) F^-1 [ exp(-i dt H_m(hbar xi) / hbar) F [ exp(-i dt V / 2 hbar) psi ] ]
//! ```
//!
//! with `V = V_Gamma(x/a) + V_int` and `V_int` recomputed from the pre-step
//! density (lagged self-consistency keeps every factor exactly unitary).
//! The Fourier variable `xi` of the spinor relates to the symbol momentum by
//! `k = hbar xi`.

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use num_complex::Complex64;
use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

use crate::lattice::Grid2D;
use crate::potential::{eval_periodic, hartree_potential, HartreeKernel, PeriodicPotential};
use crate::spectral::{freq, Fft2};
use crate::symbol::{
    band_eigenvector, energy, kinetic_phase, projector, Band, DiracConstants, Mat2,
};

#[derive(Debug, Error)]
pub enum PropagateError {
    #[error("band purification annihilated the state (residual norm {0:.3e})")]
    DegenerateData(f64),
    #[error("carrier momentum k0/hbar = ({0:.6}, {1:.6}) is not on the grid frequency lattice")]
    IncommensurateCarrier(f64, f64),
    #[error("non-finite value detected at step {step} (t = {t:.6})")]
    NanDetected { step: usize, t: f64 },
    #[error("requested time {0} is not a multiple of dt = {1}")]
    TimeNotOnStep(f64, f64),
    #[error("snapshot io: {0}")]
    Io(#[from] std::io::Error),
    #[error("snapshot file corrupt: {0}")]
    BadSnapshot(String),
}

/// Two-component spinor on a periodic position grid.
#[derive(Debug, Clone)]
pub struct SpinorField {
    pub grid: Grid2D,
    pub hbar: f64,
    pub c1: Array2<Complex64>,
    pub c2: Array2<Complex64>,
}

impl SpinorField {
    pub fn zeros(grid: Grid2D, hbar: f64) -> Self {
        let shape = (grid.n[0], grid.n[1]);
        SpinorField {
            grid,
            hbar,
            c1: Array2::default(shape),
            c2: Array2::default(shape),
        }
    }

    pub fn value(&self, i: [usize; 2]) -> [Complex64; 2] {
        [self.c1[[i[0], i[1]]], self.c2[[i[0], i[1]]]]
    }

    /// Discrete L2 norm `sqrt(sum |psi|^2 dx^2)`.
    pub fn l2_norm(&self) -> f64 {
        let cell = self.grid.spacing[0] * self.grid.spacing[1];
        let s: f64 = self
            .c1
            .iter()
            .zip(self.c2.iter())
            .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
            .sum();
        (s * cell).sqrt()
    }

    /// Pointwise density `|psi_1|^2 + |psi_2|^2`.
    pub fn density(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.grid.n[0], self.grid.n[1]));
        ndarray::Zip::from(&mut out)
            .and(&self.c1)
            .and(&self.c2)
            .for_each(|o, a, b| *o = a.norm_sqr() + b.norm_sqr());
        out
    }

    pub fn is_finite(&self) -> bool {
        self.c1
            .iter()
            .chain(self.c2.iter())
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn scale(&mut self, s: f64) {
        self.c1.mapv_inplace(|v| v * s);
        self.c2.mapv_inplace(|v| v * s);
    }
}

/// Spectral Sobolev norm `sqrt(L^2 sum (1 + |xi|^2) |psihat|^2)`.
pub fn h1_norm(fft: &Fft2, psi: &SpinorField) -> f64 {
    let h1 = fft.coefficients(&psi.c1);
    let h2 = fft.coefficients(&psi.c2);
    let n = psi.grid.n;
    let area = psi.grid.extent[0] * psi.grid.extent[1];
    let mut s = 0.0;
    for i in 0..n[0] {
        for j in 0..n[1] {
            let xi = freq(&psi.grid, i, j);
            let w = 1.0 + xi[0] * xi[0] + xi[1] * xi[1];
            s += w * (h1[[i, j]].norm_sqr() + h2[[i, j]].norm_sqr());
        }
    }
    (area * s).sqrt()
}

/// Gaussian wave packet at `(x0, k0)`, band-purified mode by mode.
///
/// The envelope has width `width` (default choice upstream: `sqrt(hbar)`),
/// is periodized over the torus, and is modulated by `exp(i k0 . x / hbar)`;
/// the carrier frequency `k0 / hbar` must lie on the grid frequency lattice.
/// After purification the state is normalized to unit L2 norm.
pub fn initial_wavepacket(
    grid: &Grid2D,
    x0: [f64; 2],
    k0: [f64; 2],
    band: Band,
    consts: &DiracConstants,
    width: f64,
) -> Result<SpinorField, PropagateError> {
    let hbar = consts.hbar;
    let l = grid.extent;
    // carrier must be a lattice frequency
    let dxi = [
        2.0 * std::f64::consts::PI / l[0],
        2.0 * std::f64::consts::PI / l[1],
    ];
    for j in 0..2 {
        let m = k0[j] / hbar / dxi[j];
        if (m - m.round()).abs() > 1e-9 {
            return Err(PropagateError::IncommensurateCarrier(
                k0[0] / hbar,
                k0[1] / hbar,
            ));
        }
    }

    let u = band_eigenvector(k0, consts, band)
        .map_err(|_| PropagateError::DegenerateData(0.0))?;
    let mut psi = SpinorField::zeros(grid.clone(), hbar);
    let inv2w2 = 1.0 / (2.0 * width * width);
    for i in 0..grid.n[0] {
        for j in 0..grid.n[1] {
            let x = grid.coord([i, j]);
            let mut env = 0.0;
            for wx in -1i32..=1 {
                for wy in -1i32..=1 {
                    let dx = x[0] - x0[0] + wx as f64 * l[0];
                    let dy = x[1] - x0[1] + wy as f64 * l[1];
                    env += (-(dx * dx + dy * dy) * inv2w2).exp();
                }
            }
            let phase = Complex64::new(0.0, (k0[0] * x[0] + k0[1] * x[1]) / hbar).exp();
            let amp = phase * env;
            psi.c1[[i, j]] = amp * u[0];
            psi.c2[[i, j]] = amp * u[1];
        }
    }

    // purify in Fourier space: apply Pi_band(hbar xi) per mode
    let fft = Fft2::new(grid.n);
    let mut h1 = fft.coefficients(&psi.c1);
    let mut h2 = fft.coefficients(&psi.c2);
    for i in 0..grid.n[0] {
        for j in 0..grid.n[1] {
            let xi = freq(grid, i, j);
            let k = [hbar * xi[0], hbar * xi[1]];
            let v = [h1[[i, j]], h2[[i, j]]];
            let w = match projector(k, consts, band) {
                Ok(p) => p.mul_vec(v),
                // massless crossing: the mode is annihilated
                Err(_) => [Complex64::default(), Complex64::default()],
            };
            h1[[i, j]] = w[0];
            h2[[i, j]] = w[1];
        }
    }
    psi.c1 = fft.synthesis(&h1);
    psi.c2 = fft.synthesis(&h2);

    let norm = psi.l2_norm();
    if norm < 1e-12 {
        return Err(PropagateError::DegenerateData(norm));
    }
    psi.scale(1.0 / norm);
    Ok(psi)
}

/// Reusable split-step engine: caches FFT plans, the external potential
/// sampled on the grid, and kinetic phase tables per time step.
pub struct Propagator {
    pub consts: DiracConstants,
    pub scale_a: f64,
    pub grid: Grid2D,
    pub kernel: HartreeKernel,
    pub v_gamma: Array2<f64>,
    fft: Fft2,
    phases: HashMap<u64, Vec<Mat2>>,
}

impl Propagator {
    pub fn new(
        grid: Grid2D,
        consts: DiracConstants,
        pot: &PeriodicPotential,
        kernel: HartreeKernel,
    ) -> Self {
        let a = pot.lattice.scale_a;
        let v_gamma = Array2::from_shape_fn((grid.n[0], grid.n[1]), |(i, j)| {
            eval_periodic(pot, grid.coord([i, j]), a).0
        });
        Propagator {
            consts,
            scale_a: a,
            fft: Fft2::new(grid.n),
            grid,
            kernel,
            v_gamma,
            phases: HashMap::new(),
        }
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    /// Largest kinetic eigenvalue on the grid, `E_m(hbar xi_max)`.
    pub fn max_energy(&self) -> f64 {
        let n = self.grid.n;
        let xi_max = [
            freq(&self.grid, n[0] / 2, 0)[0].abs(),
            freq(&self.grid, 0, n[1] / 2)[1].abs(),
        ];
        energy(
            [self.consts.hbar * xi_max[0], self.consts.hbar * xi_max[1]],
            &self.consts,
        )
    }

    /// Mean-field potential from the instantaneous density.
    pub fn hartree(&self, psi: &SpinorField) -> Array2<f64> {
        hartree_potential(&self.fft, &self.grid, &psi.density(), &self.kernel).0
    }

    /// Total potential `V_Gamma(x/a) + K * |psi|^2`.
    pub fn total_potential(&self, psi: &SpinorField) -> Array2<f64> {
        &self.v_gamma + &self.hartree(psi)
    }

    fn kinetic_table(&mut self, dt: f64) -> &Vec<Mat2> {
        let key = dt.to_bits();
        let (grid, consts) = (&self.grid, self.consts);
        self.phases.entry(key).or_insert_with(|| {
            let n = grid.n;
            let mut table = Vec::with_capacity(n[0] * n[1]);
            for i in 0..n[0] {
                for j in 0..n[1] {
                    let xi = freq(grid, i, j);
                    let k = [consts.hbar * xi[0], consts.hbar * xi[1]];
                    table.push(kinetic_phase(k, &consts, dt));
                }
            }
            table
        })
    }

    /// One Strang step with a caller-supplied frozen potential.
    pub fn step_frozen(&mut self, psi: &mut SpinorField, v_total: &Array2<f64>, dt: f64) {
        let half = -0.5 * dt / self.consts.hbar;
        let apply_half = |psi: &mut SpinorField| {
            ndarray::Zip::from(&mut psi.c1)
                .and(&mut psi.c2)
                .and(v_total)
                .for_each(|a, b, &v| {
                    let ph = Complex64::new(0.0, half * v).exp();
                    *a *= ph;
                    *b *= ph;
                });
        };
        apply_half(psi);

        self.fft.forward(&mut psi.c1);
        self.fft.forward(&mut psi.c2);
        let norm = 1.0 / (self.grid.n[0] * self.grid.n[1]) as f64;
        {
            let table = self.kinetic_table(dt);
            let c1 = psi.c1.as_slice_mut().expect("standard layout");
            let c2 = psi.c2.as_slice_mut().expect("standard layout");
            for (idx, m) in table.iter().enumerate() {
                let v = m.mul_vec([c1[idx], c2[idx]]);
                c1[idx] = v[0] * norm;
                c2[idx] = v[1] * norm;
            }
        }
        self.fft.inverse(&mut psi.c1);
        self.fft.inverse(&mut psi.c2);

        apply_half(psi);
    }

    /// One step of the full dynamics: the Hartree potential is recomputed
    /// from the pre-step density, then frozen across the step.
    pub fn step(&mut self, psi: &mut SpinorField, dt: f64) {
        let v = self.total_potential(psi);
        self.step_frozen(psi, &v, dt);
    }
}

/// One-shot Strang step matching the module-level contract; loops should use
/// [`Propagator`] directly to reuse plans and phase tables.
pub fn strang_step(
    psi: &SpinorField,
    pot: &PeriodicPotential,
    kernel: &HartreeKernel,
    consts: &DiracConstants,
    dt: f64,
) -> SpinorField {
    let mut prop = Propagator::new(psi.grid.clone(), *consts, pot, kernel.clone());
    let mut out = psi.clone();
    prop.step(&mut out, dt);
    out
}

/// Per-snapshot diagnostics.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SnapshotDiagnostics {
    pub t: f64,
    pub l2_norm: f64,
    pub h1_norm: f64,
    pub mass: f64,
    pub vint_max: f64,
}

/// An evolved trajectory: snapshot times are strictly increasing.
#[derive(Debug)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub snapshots: Vec<SpinorField>,
    pub diagnostics: Vec<SnapshotDiagnostics>,
}

#[derive(Debug, Clone)]
pub struct EvolveSpec {
    pub t_final: f64,
    pub dt: f64,
    /// Times at which snapshots are recorded; `t = 0` and `t = t_final` are
    /// included automatically. Each must sit on the step lattice.
    pub snapshot_times: Vec<f64>,
}

/// Repeated Strang stepping with diagnostics at every snapshot time.
/// Aborts with the offending step index if the field stops being finite.
pub fn evolve(
    prop: &mut Propagator,
    psi0: &SpinorField,
    spec: &EvolveSpec,
) -> Result<TrajectoryRecord, PropagateError> {
    let mut wanted: Vec<f64> = spec.snapshot_times.clone();
    wanted.push(0.0);
    wanted.push(spec.t_final);
    wanted.retain(|&t| t >= 0.0 && t <= spec.t_final + 1e-12);
    wanted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    wanted.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let steps_of = |t: f64| -> Result<usize, PropagateError> {
        let s = t / spec.dt;
        if (s - s.round()).abs() > 1e-6 {
            return Err(PropagateError::TimeNotOnStep(t, spec.dt));
        }
        Ok(s.round() as usize)
    };
    let snap_steps: Vec<usize> = wanted
        .iter()
        .map(|&t| steps_of(t))
        .collect::<Result<_, _>>()?;
    let total_steps = steps_of(spec.t_final)?;

    let mut record = TrajectoryRecord {
        times: Vec::new(),
        snapshots: Vec::new(),
        diagnostics: Vec::new(),
    };
    let mut psi = psi0.clone();
    let take = |prop: &Propagator, psi: &SpinorField, t: f64, rec: &mut TrajectoryRecord| {
        let vint = prop.hartree(psi);
        let l2 = psi.l2_norm();
        rec.times.push(t);
        rec.snapshots.push(psi.clone());
        rec.diagnostics.push(SnapshotDiagnostics {
            t,
            l2_norm: l2,
            h1_norm: h1_norm(prop.fft(), psi),
            mass: l2 * l2,
            vint_max: vint.iter().fold(0.0f64, |m, &v| m.max(v.abs())),
        });
    };

    let mut next = 0usize;
    for (step, &s) in snap_steps.iter().enumerate() {
        let _ = step;
        while next < s {
            prop.step(&mut psi, spec.dt);
            next += 1;
            let l2 = psi.l2_norm();
            if !l2.is_finite() {
                return Err(PropagateError::NanDetected {
                    step: next,
                    t: next as f64 * spec.dt,
                });
            }
        }
        take(prop, &psi, s as f64 * spec.dt, &mut record);
    }
    debug_assert_eq!(next, total_steps);
    Ok(record)
}

const SNAPSHOT_MAGIC: u32 = 0x444c_5346; // "DLSF"

/// Writes a spinor snapshot in the documented binary layout
/// (`DLSF` header, grid shape and extent, `hbar`, `t`, then row-major
/// little-endian (re, im) `f64` pairs for component 1 followed by
/// component 2) plus a JSON diagnostics sidecar at `<path>.json`.
pub fn write_snapshot(
    path: &Path,
    psi: &SpinorField,
    diag: &SnapshotDiagnostics,
) -> Result<(), PropagateError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_u32::<LittleEndian>(SNAPSHOT_MAGIC)?;
    w.write_u32::<LittleEndian>(1)?;
    w.write_u32::<LittleEndian>(psi.grid.n[0] as u32)?;
    w.write_u32::<LittleEndian>(psi.grid.n[1] as u32)?;
    w.write_f64::<LittleEndian>(psi.grid.extent[0])?;
    w.write_f64::<LittleEndian>(psi.grid.extent[1])?;
    w.write_f64::<LittleEndian>(psi.hbar)?;
    w.write_f64::<LittleEndian>(diag.t)?;
    for plane in [&psi.c1, &psi.c2] {
        for v in plane.iter() {
            w.write_f64::<LittleEndian>(v.re)?;
            w.write_f64::<LittleEndian>(v.im)?;
        }
    }
    w.flush()?;
    let sidecar = path.with_extension(format!(
        "{}json",
        path.extension()
            .map(|e| format!("{}.", e.to_string_lossy()))
            .unwrap_or_default()
    ));
    std::fs::write(sidecar, serde_json::to_string_pretty(diag).unwrap())?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(SpinorField, f64), PropagateError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let magic = r.read_u32::<LittleEndian>()?;
    if magic != SNAPSHOT_MAGIC {
        return Err(PropagateError::BadSnapshot(format!(
            "bad magic {magic:#x}"
        )));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != 1 {
        return Err(PropagateError::BadSnapshot(format!(
            "unsupported version {version}"
        )));
    }
    let n0 = r.read_u32::<LittleEndian>()? as usize;
    let n1 = r.read_u32::<LittleEndian>()? as usize;
    let e0 = r.read_f64::<LittleEndian>()?;
    let e1 = r.read_f64::<LittleEndian>()?;
    let hbar = r.read_f64::<LittleEndian>()?;
    let t = r.read_f64::<LittleEndian>()?;
    let grid = crate::lattice::make_grid([e0, e1], [n0, n1])
        .map_err(|e| PropagateError::BadSnapshot(e.to_string()))?;
    let mut psi = SpinorField::zeros(grid, hbar);
    let mut buf = vec![0u8; 16];
    for plane in [&mut psi.c1, &mut psi.c2] {
        for v in plane.iter_mut() {
            r.read_exact(&mut buf)?;
            let re = f64::from_le_bytes(buf[0..8].try_into().unwrap());
            let im = f64::from_le_bytes(buf[8..16].try_into().unwrap());
            *v = Complex64::new(re, im);
        }
    }
    Ok((psi, t))
}
