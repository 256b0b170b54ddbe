//! Shared drivers: evolve the Dirac side while reducing every snapshot into
//! weak pairings, assemble transport residuals, and push the Vlasov side
//! with its self-consistent mean field. Everything downstream (sweeps,
//! comparisons, the Coulomb study) is a loop over these.

use thiserror::Error;

use crate::experiments::config::{ConfigError, Prepared, RunConfig};
use crate::experiments::scan::{scan_snapshot, SnapshotScan};
use crate::potential::hartree_potential;
use crate::propagate::{initial_wavepacket, Propagator, PropagateError, SpinorField};
use crate::symbol::Band;
use crate::vlasov::{
    deposit_density, phase_histogram, sample_from_band_density, vlasov_step, ForceField,
    ParticleEnsemble, SampleReport, VlasovError,
};
use crate::wigner::{band_split, wigner_transform_with, BandDensity, WignerError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Propagate(#[from] PropagateError),
    #[error(transparent)]
    Wigner(#[from] WignerError),
    #[error(transparent)]
    Vlasov(#[from] VlasovError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

/// One entry of the residual table (the CSV schema of the sweep reports).
#[derive(Debug, Clone, serde::Serialize)]
pub struct ResidualRow {
    pub t: f64,
    pub hbar: f64,
    pub a: f64,
    pub band: String,
    pub test_id: String,
    pub residual: f64,
    pub normalized_residual: f64,
}

/// Result of evolving one configuration and scanning its snapshots.
pub struct DiracRunData {
    pub times: Vec<f64>,
    pub scans: Vec<SnapshotScan>,
    pub snapshots: Vec<SpinorField>,
    pub l2_drift: f64,
    pub h1_series: Vec<(f64, f64)>,
}

/// Snapshot times required by the residual battery: every residual time
/// with its two derivative samples, plus t = 0 and t_final.
pub fn scan_times(prep: &Prepared) -> Vec<f64> {
    let h = prep.config.time.derivative_halfstep;
    let mut times = vec![0.0, prep.config.time.t_final];
    for &t in &prep.config.time.residual_times {
        times.extend([t - h, t, t + h]);
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    times
}

/// Evolves the prepared configuration, scanning each snapshot into pairings
/// while it is in memory.
pub fn dirac_run_with_scans(prep: &Prepared) -> Result<DiracRunData, RunError> {
    let mut prop = Propagator::new(
        prep.grid.clone(),
        prep.consts,
        &prep.pot,
        prep.kernel.clone(),
    );
    let psi0 = initial_wavepacket(
        &prep.grid,
        prep.x0,
        prep.config.initial.k0,
        prep.config.initial.band,
        &prep.consts,
        prep.width,
    )?;

    let times = scan_times(prep);
    let rec = crate::propagate::evolve(
        &mut prop,
        &psi0,
        &crate::propagate::EvolveSpec {
            t_final: prep.config.time.t_final,
            dt: prep.dt,
            snapshot_times: times.clone(),
        },
    )?;

    let mut scans = Vec::with_capacity(rec.times.len());
    for (i, psi) in rec.snapshots.iter().enumerate() {
        let vint = prop.hartree(psi);
        scans.push(scan_snapshot(
            psi,
            rec.times[i],
            &prep.consts,
            prep.kappa,
            &prep.battery,
            &prep.pot,
            &vint,
        ));
    }
    let l2_drift = rec
        .diagnostics
        .iter()
        .map(|d| (d.l2_norm - rec.diagnostics[0].l2_norm).abs())
        .fold(0.0, f64::max);
    let h1_series = rec.diagnostics.iter().map(|d| (d.t, d.h1_norm)).collect();
    Ok(DiracRunData {
        times: rec.times,
        scans,
        snapshots: rec.snapshots,
        l2_drift,
        h1_series,
    })
}

/// Assembles the weak transport residuals
/// `<E_pm, eta phi> = d/dt<f, eta phi> -+ <f,(v.grad eta)phi> + <f, eta grad V.grad phi>`
/// at every configured residual time from the scan series.
pub fn residual_rows(prep: &Prepared, data: &DiracRunData) -> Vec<ResidualRow> {
    let h = prep.config.time.derivative_halfstep;
    let find = |t: f64| -> usize {
        data.times
            .iter()
            .position(|&u| (u - t).abs() < 1e-9)
            .unwrap_or_else(|| panic!("scan time {t} missing"))
    };
    let mut rows = Vec::new();
    for &ts in &prep.config.time.residual_times {
        let im = find(ts - h);
        let i0 = find(ts);
        let ip = find(ts + h);
        for (ti, test) in prep.battery.iter().enumerate() {
            for (bi, band) in [(0usize, Band::Plus), (1usize, Band::Minus)] {
                let v_m = data.scans[im].per_test[ti].value[bi];
                let v_p = data.scans[ip].per_test[ti].value[bi];
                let mid = &data.scans[i0].per_test[ti];
                let ddt = (v_p - v_m) / (2.0 * h);
                let residual = ddt - band.sign() * mid.advect[bi] + mid.force[bi];
                rows.push(ResidualRow {
                    t: ts,
                    hbar: prep.consts.hbar,
                    a: prep.config.lattice.scale_a,
                    band: band.to_string(),
                    test_id: test.id.clone(),
                    residual,
                    normalized_residual: residual / test.norm_product(),
                });
            }
        }
    }
    rows
}

/// Max normalized residual over the battery, bands, and residual times.
pub fn max_normalized_residual(rows: &[ResidualRow]) -> f64 {
    rows.iter()
        .map(|r| r.normalized_residual.abs())
        .fold(0.0, f64::max)
}

/// Materialized band densities of one snapshot (used for sampling and
/// phase-space dumps).
pub fn band_densities_at(
    prep: &Prepared,
    psi: &SpinorField,
) -> Result<(BandDensity, BandDensity), RunError> {
    band_densities_with(prep, psi, &prep.settings)
}

pub fn band_densities_with(
    prep: &Prepared,
    psi: &SpinorField,
    settings: &crate::wigner::WignerSettings,
) -> Result<(BandDensity, BandDensity), RunError> {
    let w = wigner_transform_with(psi, settings)?;
    let (fp, fm, _) = band_split(&w, &prep.consts, prep.kappa);
    Ok((fp, fm))
}

/// Sampling-grade Wigner settings: momentum blocks no wider than two
/// native nodes, so the particle initial data carries only O(hbar^2)
/// coarsening bias.
pub fn sampling_settings(prep: &Prepared) -> crate::wigner::WignerSettings {
    let fold = prep.settings.fold.min(2);
    let ratio = prep.settings.fold / fold;
    let n = prep.grid.n[0];
    crate::wigner::WignerSettings {
        xstride: prep.settings.xstride,
        fold,
        k_window: (prep.settings.k_window * ratio).min(n / fold),
    }
}

/// A Vlasov twin of a Dirac run: particles sampled from the initial band
/// densities, pushed under the same external potential and kernel with the
/// mean field frozen per step.
pub struct VlasovRun {
    pub ensemble: ParticleEnsemble,
    pub reports: Vec<(Band, SampleReport)>,
    pub leakage: f64,
}

/// Exact empirical-measure pairings `sum_p w_p eta(x_p) phi(k_p)` per test
/// and band.
pub fn ensemble_pairings(
    ens: &ParticleEnsemble,
    battery: &[crate::wigner::TestFunction],
) -> Vec<[f64; 2]> {
    let mut out = vec![[0.0; 2]; battery.len()];
    for p in 0..ens.len() {
        let bi = match ens.bands[p] {
            Band::Plus => 0,
            Band::Minus => 1,
        };
        let x = ens.positions[p];
        let k = ens.momenta[p];
        let w = ens.weights[p];
        for (ti, test) in battery.iter().enumerate() {
            let phi = test.phi.eval(k);
            if phi != 0.0 {
                out[ti][bi] += w * test.eta.eval(x) * phi;
            }
        }
    }
    out
}

impl VlasovRun {
    /// Samples `n_particles` across both bands proportionally to their mass.
    pub fn sample(
        fp: &BandDensity,
        fm: &BandDensity,
        n_particles: usize,
        seed: u64,
    ) -> Result<VlasovRun, RunError> {
        let mp = fp.values.iter().filter(|&&v| v > 0.0).sum::<f64>() * fp.phase_cell();
        let mm = fm.values.iter().filter(|&&v| v > 0.0).sum::<f64>() * fm.phase_cell();
        let total = mp + mm;
        if total <= 0.0 {
            return Err(RunError::Vlasov(VlasovError::EmptyDensity));
        }
        let np = ((n_particles as f64) * mp / total).round() as usize;
        let nm = n_particles - np;
        let mut reports = Vec::new();
        let mut ens: Option<ParticleEnsemble> = None;
        if np > 0 && mp > 1e-12 * total {
            let (e, r) = sample_from_band_density(fp, np, seed)?;
            reports.push((Band::Plus, r));
            ens = Some(e);
        }
        if nm > 0 && mm > 1e-12 * total {
            let (e, r) = sample_from_band_density(fm, nm, seed ^ 0x9e37_79b9_7f4a_7c15)?;
            reports.push((Band::Minus, r));
            ens = Some(match ens {
                Some(base) => base.merge(e),
                None => e,
            });
        }
        let ensemble = ens.ok_or(RunError::Vlasov(VlasovError::EmptyDensity))?;
        Ok(VlasovRun {
            ensemble,
            reports,
            leakage: 0.0,
        })
    }

    /// Advances to each requested time (strictly increasing), calling
    /// `observe` there. The mean field is rebuilt from the deposited density
    /// once per step.
    pub fn drive<F>(
        &mut self,
        prep: &Prepared,
        dt: f64,
        times: &[f64],
        mut observe: F,
    ) -> Result<(), RunError>
    where
        F: FnMut(f64, &ParticleEnsemble),
    {
        let fft = crate::spectral::Fft2::new(prep.grid.n);
        let mut t = 0.0;
        let self_consistent = !matches!(
            prep.config.kernel,
            crate::experiments::config::KernelSection::None
        );
        for &target in times {
            let steps = ((target - t) / dt).round() as i64;
            if ((target - t) - steps as f64 * dt).abs() > 1e-9 {
                return Err(RunError::Other(format!(
                    "vlasov observation time {target} not on the dt = {dt} lattice"
                )));
            }
            for _ in 0..steps {
                let vint_grad = if self_consistent {
                    let rho = deposit_density(&self.ensemble, &prep.grid);
                    let (_, g) = hartree_potential(&fft, &prep.grid, &rho, &prep.kernel);
                    Some(g)
                } else {
                    None
                };
                let force = ForceField {
                    pot: &prep.pot,
                    vint_grad: vint_grad.as_ref().map(|g| (g, &prep.grid)),
                };
                vlasov_step(&mut self.ensemble, &force, &prep.consts, dt, prep.kappa);
            }
            t = target;
            observe(t, &self.ensemble);
        }
        self.leakage = self.ensemble.leakage();
        Ok(())
    }

    pub fn histogram(&self, like: &BandDensity, band: Band) -> BandDensity {
        phase_histogram(&self.ensemble, &like.xgrid, &like.kgrid, band)
    }
}

/// Least-squares slope and intercept of `ln y` against `ln x`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert!(xs.len() == ys.len() && xs.len() >= 2);
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..lx.len() {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Per-member overrides for an hbar sweep: the semiclassical parameter, a
/// momentum sampling interval no finer than hbar, and a spatial stride that
/// keeps the coarse grid below the packet width.
pub fn adapt_member(base: &RunConfig, hbar: f64) -> RunConfig {
    let mut cfg = base.clone();
    cfg.constants.hbar = hbar;
    cfg.wigner.k_spacing = base.wigner.k_spacing.max(hbar);
    let sigma_x = cfg.initial.envelope.width(hbar) / std::f64::consts::SQRT_2;
    let dx = cfg.box_length() / cfg.grid.n as f64;
    let mut stride = base.wigner.xstride;
    while stride > 2 && stride as f64 * dx > sigma_x / 0.85 {
        stride /= 2;
    }
    cfg.wigner.xstride = stride;
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loglog_fit_recovers_synthetic_rates() {
        let hbars = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
        let linear: Vec<f64> = hbars.iter().map(|h| 3.0 * h).collect();
        let (s, _) = fit_loglog(&hbars, &linear);
        assert!((s - 1.0).abs() < 1e-12);
        let quad: Vec<f64> = hbars.iter().map(|h| h * h).collect();
        let (s, _) = fit_loglog(&hbars, &quad);
        assert!((s - 2.0).abs() < 1e-12);
    }

    #[test]
    fn adapt_member_strides_and_spacing() {
        let base = RunConfig::from_toml(crate::experiments::config::benchmark_massive_toml())
            .unwrap();
        let m8 = adapt_member(&base, 1.0 / 8.0);
        assert_eq!(m8.wigner.xstride, 8);
        assert!((m8.wigner.k_spacing - 0.125).abs() < 1e-15);
        let m64 = adapt_member(&base, 1.0 / 64.0);
        assert_eq!(m64.wigner.xstride, 4);
        assert!((m64.wigner.k_spacing - 0.0625).abs() < 1e-15);
        // every member still validates
        for hbar in [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
            adapt_member(&base, hbar).prepare().unwrap();
        }
    }
}
