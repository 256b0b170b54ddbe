use diraclab::experiments::config::{benchmark_massive_toml, EnvelopeSpec, RunConfig};
use diraclab::experiments::convergence_sweep;

fn main() {
    let mut cfg = RunConfig::from_toml(benchmark_massive_toml()).unwrap();
    cfg.initial.envelope = EnvelopeSpec::QuarterHbar { factor: 0.5 };
    let rep = convergence_sweep(&cfg, &[0.125, 0.0625, 0.03125]).unwrap();
    for m in &rep.members {
        println!(
            "hbar {:.5}: od/hbar {:.4}  resid {:.3e} ({:.1}s)",
            m.hbar, m.od_fraction_over_hbar, m.max_normalized_residual, m.wall_seconds
        );
    }
    let vals: Vec<f64> = rep.members.iter().map(|m| m.od_fraction_over_hbar).collect();
    let ratio = vals.iter().fold(0.0f64, |a, &b| a.max(b))
        / vals.iter().fold(f64::MAX, |a, &b| a.min(b));
    println!("criterion-7 ratio: {ratio:.3} (must be < 2)");
}
