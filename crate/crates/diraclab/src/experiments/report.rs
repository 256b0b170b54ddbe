//! Artifact output: run manifests with invariant monitors, CSV tables,
//! phase-space dumps, and the single-run driver behind the `run`
//! subcommand.

use byteorder::{LittleEndian, WriteBytesExt};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::experiments::config::RunConfig;
use crate::experiments::runner::{
    band_densities_at, dirac_run_with_scans, residual_rows, ResidualRow, RunError,
};
use crate::propagate::{write_snapshot, SnapshotDiagnostics};
use crate::wigner::BandDensity;

/// Reproducibility metadata carried by every report.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub git_revision: String,
    pub created_unix: u64,
    pub threads: usize,
}

impl Metadata {
    pub fn collect() -> Metadata {
        let git_revision = std::process::Command::new("git")
            .args(["rev-parse", "HEAD"])
            .output()
            .ok()
            .filter(|o| o.status.success())
            .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
            .unwrap_or_else(|| "unknown".to_string());
        Metadata {
            git_revision,
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            threads: rayon::current_num_threads(),
        }
    }
}

/// One invariant monitor outcome listed in the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct Monitor {
    pub name: String,
    pub value: f64,
    pub threshold: Option<f64>,
    pub pass: bool,
}

impl Monitor {
    pub fn checked(name: &str, value: f64, threshold: f64) -> Monitor {
        Monitor {
            name: name.to_string(),
            value,
            threshold: Some(threshold),
            pass: value <= threshold,
        }
    }

    pub fn info(name: &str, value: f64) -> Monitor {
        Monitor {
            name: name.to_string(),
            value,
            threshold: None,
            pass: true,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub metadata: Metadata,
    pub wall_seconds: f64,
    pub monitors: Vec<Monitor>,
    pub outputs: Vec<String>,
}

pub fn config_hash(cfg: &RunConfig) -> String {
    let mut h = Sha256::new();
    h.update(cfg.to_toml().as_bytes());
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Residual table in the documented schema
/// `t, hbar, a, band, test_id, residual, normalized_residual`.
pub fn write_residual_csv(path: &Path, rows: &[ResidualRow]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> RunError {
    RunError::Other(format!("csv: {e}"))
}

const DUMP_MAGIC: u32 = 0x444c_4244; // "DLBD"

/// Phase-space dump of a band density: header (grids, hbar, t, band) then
/// row-major `f64` values in the `(x, k)` layout.
pub fn write_band_dump(
    path: &Path,
    f: &BandDensity,
    hbar: f64,
    t: f64,
) -> Result<(), RunError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_u32::<LittleEndian>(DUMP_MAGIC)?;
    w.write_u32::<LittleEndian>(1)?;
    w.write_u32::<LittleEndian>(f.xgrid.n[0] as u32)?;
    w.write_u32::<LittleEndian>(f.xgrid.n[1] as u32)?;
    w.write_u32::<LittleEndian>(f.kgrid.n[0] as u32)?;
    w.write_u32::<LittleEndian>(f.kgrid.n[1] as u32)?;
    w.write_f64::<LittleEndian>(f.xgrid.extent[0])?;
    w.write_f64::<LittleEndian>(f.xgrid.extent[1])?;
    w.write_f64::<LittleEndian>(f.kgrid.spacing[0])?;
    w.write_f64::<LittleEndian>(f.kgrid.spacing[1])?;
    w.write_f64::<LittleEndian>(hbar)?;
    w.write_f64::<LittleEndian>(t)?;
    w.write_u8(match f.band {
        crate::symbol::Band::Plus => b'+',
        crate::symbol::Band::Minus => b'-',
    })?;
    for v in f.values.iter() {
        w.write_f64::<LittleEndian>(*v)?;
    }
    w.flush()?;
    Ok(())
}

/// Ensemble checkpoint: header (N, t, seed) then the x, k, w, band arrays.
pub fn write_ensemble_checkpoint(
    path: &Path,
    ens: &crate::vlasov::ParticleEnsemble,
    t: f64,
) -> Result<(), RunError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_u32::<LittleEndian>(0x444c_454e)?; // "DLEN"
    w.write_u32::<LittleEndian>(1)?;
    w.write_u64::<LittleEndian>(ens.len() as u64)?;
    w.write_f64::<LittleEndian>(t)?;
    w.write_u64::<LittleEndian>(ens.seed)?;
    for p in &ens.positions {
        w.write_f64::<LittleEndian>(p[0])?;
        w.write_f64::<LittleEndian>(p[1])?;
    }
    for k in &ens.momenta {
        w.write_f64::<LittleEndian>(k[0])?;
        w.write_f64::<LittleEndian>(k[1])?;
    }
    for &x in &ens.weights {
        w.write_f64::<LittleEndian>(x)?;
    }
    for b in &ens.bands {
        w.write_u8(match b {
            crate::symbol::Band::Plus => b'+',
            crate::symbol::Band::Minus => b'-',
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Runs one configuration end to end and writes the artifact directory:
/// spinor snapshots with sidecars, initial and final band-density dumps,
/// the residual CSV, a diagnostics CSV, and `manifest.json` listing every
/// invariant monitor. Returns the manifest.
pub fn run(cfg: &RunConfig, out_dir: &Path) -> Result<Manifest, RunError> {
    let started = std::time::Instant::now();
    std::fs::create_dir_all(out_dir)?;
    let prep = cfg.prepare()?;
    let data = dirac_run_with_scans(&prep)?;
    let rows = residual_rows(&prep, &data);

    let mut outputs = Vec::new();
    let push = |p: PathBuf, outputs: &mut Vec<String>| {
        outputs.push(p.to_string_lossy().into_owned());
    };

    // spinor snapshots
    for (i, psi) in data.snapshots.iter().enumerate() {
        if i % cfg.output.snapshot_every != 0 && i + 1 != data.snapshots.len() {
            continue;
        }
        let t = data.times[i];
        let path = out_dir.join(format!("psi_{t:.4}.dlsf"));
        let diag = SnapshotDiagnostics {
            t,
            l2_norm: psi.l2_norm(),
            h1_norm: data.h1_series[i].1,
            mass: psi.l2_norm().powi(2),
            vint_max: 0.0,
        };
        write_snapshot(&path, psi, &diag)?;
        push(path, &mut outputs);
    }

    // band densities at t = 0 and t = t_final
    for (label, psi, t) in [
        ("initial", &data.snapshots[0], data.times[0]),
        (
            "final",
            data.snapshots.last().unwrap(),
            *data.times.last().unwrap(),
        ),
    ] {
        let (fp, fm) = band_densities_at(&prep, psi)?;
        for f in [&fp, &fm] {
            let path = out_dir.join(format!(
                "band_{label}_{}.dlbd",
                if f.band == crate::symbol::Band::Plus {
                    "plus"
                } else {
                    "minus"
                }
            ));
            write_band_dump(&path, f, prep.consts.hbar, t)?;
            push(path, &mut outputs);
        }
    }

    // residual table
    let res_path = out_dir.join("residuals.csv");
    write_residual_csv(&res_path, &rows)?;
    push(res_path, &mut outputs);

    // per-snapshot diagnostics
    let diag_path = out_dir.join("diagnostics.csv");
    {
        let mut w = csv::Writer::from_path(&diag_path).map_err(csv_err)?;
        w.write_record([
            "t",
            "l2_norm",
            "h1_norm",
            "mass_plus",
            "mass_minus",
            "od_l2",
            "w_l2",
            "imag_residual",
        ])
        .map_err(csv_err)?;
        for (i, s) in data.scans.iter().enumerate() {
            w.write_record([
                format!("{}", s.t),
                format!("{}", data.h1_series[i].0),
                format!("{}", data.h1_series[i].1),
                format!("{}", s.mass[0]),
                format!("{}", s.mass[1]),
                format!("{}", s.od_l2),
                format!("{}", s.w_l2),
                format!("{}", s.imag_residual),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
    }
    push(diag_path, &mut outputs);

    // invariant monitors
    let od_max = data
        .scans
        .iter()
        .map(|s| s.od_l2 / s.w_l2.max(1e-300))
        .fold(0.0f64, f64::max);
    let imag = data
        .scans
        .iter()
        .map(|s| s.imag_residual)
        .fold(0.0f64, f64::max);
    // band masses recover the conserved norm when nothing is masked
    let mass_drift = if prep.consts.is_massless() {
        0.0
    } else {
        data.scans
            .iter()
            .map(|s| (s.mass[0] + s.mass[1] - data.scans[0].mass[0] - data.scans[0].mass[1]).abs())
            .fold(0.0f64, f64::max)
    };
    let monitors = vec![
        Monitor::checked("l2_drift", data.l2_drift, 1e-10),
        Monitor::checked("band_mass_drift", mass_drift, 1e-8),
        Monitor::checked("pairing_imag_residual", imag, 1e-9),
        Monitor::info("od_fraction_max", od_max),
        Monitor::info("od_fraction_over_hbar", od_max / prep.consts.hbar),
        Monitor::info("max_normalized_residual", {
            rows.iter()
                .map(|r| r.normalized_residual.abs())
                .fold(0.0, f64::max)
        }),
    ];

    let manifest = Manifest {
        config_hash: config_hash(cfg),
        seed: cfg.output.seed,
        metadata: Metadata::collect(),
        wall_seconds: started.elapsed().as_secs_f64(),
        monitors,
        outputs,
    };
    let mut f = std::fs::File::create(out_dir.join("manifest.json"))?;
    f.write_all(serde_json::to_string_pretty(&manifest).unwrap().as_bytes())?;
    Ok(manifest)
}

/// Sweep CSV: one row per member with the fitted slope in the header
/// comment, plus the full residual table alongside.
pub fn write_sweep_csv(
    dir: &Path,
    report: &crate::experiments::sweep::SweepReport,
) -> Result<(), RunError> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("sweep.csv")).map_err(csv_err)?;
    w.write_record(["hbar", "max_normalized_residual", "xstride", "k_spacing", "dt"])
        .map_err(csv_err)?;
    for m in &report.members {
        w.write_record([
            format!("{}", m.hbar),
            format!("{}", m.max_normalized_residual),
            format!("{}", m.xstride),
            format!("{}", m.k_spacing),
            format!("{}", m.dt),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    let all_rows: Vec<ResidualRow> = report
        .members
        .iter()
        .flat_map(|m| m.rows.iter().cloned())
        .collect();
    write_residual_csv(&dir.join("residuals.csv"), &all_rows)?;
    std::fs::write(
        dir.join("sweep.json"),
        serde_json::to_string_pretty(report).unwrap(),
    )?;
    Ok(())
}

pub fn write_compare_csv(
    dir: &Path,
    report: &crate::experiments::sweep::CompareSweepReport,
) -> Result<(), RunError> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("compare.csv")).map_err(csv_err)?;
    w.write_record(["hbar", "t", "d"]).map_err(csv_err)?;
    for m in &report.members {
        for r in &m.rows {
            w.write_record([
                format!("{}", r.hbar),
                format!("{}", r.t),
                format!("{}", r.d),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    std::fs::write(
        dir.join("compare.json"),
        serde_json::to_string_pretty(report).unwrap(),
    )?;
    Ok(())
}

pub fn write_coulomb_csv(
    dir: &Path,
    report: &crate::experiments::sweep::CoulombReport,
) -> Result<(), RunError> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("coulomb.csv")).map_err(csv_err)?;
    w.write_record(["alpha", "hbar", "sigma", "max_normalized_residual"])
        .map_err(csv_err)?;
    for r in &report.rows {
        w.write_record([
            format!("{}", r.alpha),
            format!("{}", r.hbar),
            format!("{}", r.sigma),
            format!("{}", r.max_normalized_residual),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    std::fs::write(
        dir.join("coulomb.json"),
        serde_json::to_string_pretty(report).unwrap(),
    )?;
    Ok(())
}
