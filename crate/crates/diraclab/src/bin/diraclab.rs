//! Batch driver for the diraclab experiments. All logic lives in the
//! library; this binary parses a config, dispatches one experiment, and
//! writes its artifact directory.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use diraclab::experiments::{
    compare_sweep, config::RunConfig, convergence_sweep, coulomb_study, report, run,
};

#[derive(Parser)]
#[command(
    name = "diraclab",
    about = "2D Dirac-Hartree dynamics, Wigner band analysis, and the Vlasov limit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// run configuration (TOML)
    #[arg(long, short)]
    config: PathBuf,
    /// override the config's output directory (env: DIRACLAB_OUT_DIR)
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// worker threads (env: DIRACLAB_THREADS; default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// override the config's seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one configuration and write snapshots, band densities,
    /// residual tables, diagnostics, and the manifest
    Run(Common),
    /// Semiclassical convergence sweep over a list of hbar values
    Sweep {
        #[command(flatten)]
        common: Common,
        /// comma-separated hbar list, e.g. 0.125,0.0625,0.03125,0.015625
        #[arg(long, value_delimiter = ',')]
        hbars: Vec<f64>,
    },
    /// Dirac-versus-Vlasov weak comparison across an hbar sweep
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        hbars: Vec<f64>,
        /// particles sampled from the initial band densities
        #[arg(long, default_value_t = 1_000_000)]
        particles: usize,
    },
    /// Regularized-Coulomb study: sigma = hbar^alpha per run
    Coulomb {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        hbars: Vec<f64>,
        /// comma-separated alpha list, e.g. 0.0,0.2,0.3
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
    },
    /// Parse and validate a configuration, reporting the violated
    /// constraint on failure
    ValidateConfig {
        #[arg(long, short)]
        config: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<(RunConfig, PathBuf), String> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| format!("cannot read {}: {e}", common.config.display()))?;
    let mut cfg = RunConfig::from_toml(&text).map_err(|e| e.to_string())?;
    if let Some(seed) = common.seed {
        cfg.output.seed = seed;
    }
    let out_dir = common
        .out_dir
        .clone()
        .or_else(|| std::env::var("DIRACLAB_OUT_DIR").ok().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    let threads = common
        .threads
        .or_else(|| {
            std::env::var("DIRACLAB_THREADS")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(0);
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok((cfg, out_dir))
}

fn fail(err: impl std::fmt::Display) -> ExitCode {
    // machine-readable error report on stderr
    eprintln!(
        "{}",
        serde_json::json!({ "status": "error", "message": err.to_string() })
    );
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(common) => {
            let (cfg, out_dir) = match load_config(&common) {
                Ok(v) => v,
                Err(e) => return fail(e),
            };
            match run(&cfg, &out_dir) {
                Ok(manifest) => {
                    println!("wrote {}", out_dir.display());
                    for m in &manifest.monitors {
                        println!(
                            "  {:32} {:>12.4e}  {}",
                            m.name,
                            m.value,
                            if m.pass { "ok" } else { "VIOLATED" }
                        );
                    }
                    if manifest.monitors.iter().all(|m| m.pass) {
                        ExitCode::SUCCESS
                    } else {
                        fail("invariant monitor violated; see manifest.json")
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::Sweep { common, hbars } => {
            let (cfg, out_dir) = match load_config(&common) {
                Ok(v) => v,
                Err(e) => return fail(e),
            };
            if hbars.len() < 3 {
                return fail("need at least three hbar values");
            }
            match convergence_sweep(&cfg, &hbars) {
                Ok(rep) => {
                    if let Err(e) = report::write_sweep_csv(&out_dir, &rep) {
                        return fail(e);
                    }
                    println!("slope {:.4}  monotone {}", rep.slope, rep.monotone);
                    for m in &rep.members {
                        println!(
                            "  hbar {:>9.6}  max residual {:.4e}  ({:.1} s)",
                            m.hbar, m.max_normalized_residual, m.wall_seconds
                        );
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Compare {
            common,
            hbars,
            particles,
        } => {
            let (cfg, out_dir) = match load_config(&common) {
                Ok(v) => v,
                Err(e) => return fail(e),
            };
            match compare_sweep(&cfg, &hbars, particles) {
                Ok(rep) => {
                    if let Err(e) = report::write_compare_csv(&out_dir, &rep) {
                        return fail(e);
                    }
                    for (hbar, d) in &rep.final_ds {
                        println!("  hbar {hbar:>9.6}  D(T) {d:.4e}");
                    }
                    println!(
                        "end-to-end ratio {:.2}  monotone {}",
                        rep.end_to_end_ratio, rep.monotone
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Coulomb {
            common,
            hbars,
            alphas,
        } => {
            let (cfg, out_dir) = match load_config(&common) {
                Ok(v) => v,
                Err(e) => return fail(e),
            };
            match coulomb_study(&cfg, &alphas, &hbars) {
                Ok(rep) => {
                    if let Err(e) = report::write_coulomb_csv(&out_dir, &rep) {
                        return fail(e);
                    }
                    for (alpha, slope) in &rep.slopes {
                        println!("  alpha {alpha:.2}  slope {slope:.4}");
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::ValidateConfig { config } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => return fail(format!("cannot read {}: {e}", config.display())),
            };
            match RunConfig::from_toml(&text)
                .map_err(|e| e.to_string())
                .and_then(|c| c.prepare().map(|_| c).map_err(|e| e.to_string()))
            {
                Ok(_) => {
                    println!("{}", serde_json::json!({ "status": "ok" }));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
    }
}
