//! Scaled-down semiclassical convergence sweep: the maximum normalized
//! weak transport residual against hbar, with the fitted log-log rate.
//!
//!     cargo run --release --example hbar_sweep_mini

use diraclab::experiments::{config::RunConfig, convergence_sweep};

fn main() {
    let toml = r#"
[constants]
mass = 1.0
light_speed = 1.0
hbar = 0.125

[lattice]
cell_side = 6.283185307179586
scale_a = 0.5
cells_per_side = 2

[grid]
n = 64

[potential]
coefficients = [[1, 0, 0.05, 0.0], [-1, 0, 0.05, 0.0]]

[kernel]
type = "gaussian"
width = 1.0

[initial]
x0 = [0.5, 0.5]
k0 = [0.5, 0.0]
band = "+"

[initial.envelope]
scaling = "sqrt-hbar"
factor = 1.0

[time]
t_final = 0.26
residual_times = [0.1, 0.25]
derivative_halfstep = 0.01

[wigner]
xstride = 2
k_spacing = 0.0625
k_window = 1.9

[battery]
bump_radius = 0.30
bump_offset = 0.08

[output]
directory = "out/example-sweep"
seed = 7
"#;
    let cfg = RunConfig::from_toml(toml).unwrap();
    let report = convergence_sweep(&cfg, &[0.25, 0.125, 0.0625]).unwrap();
    println!("{:>10} {:>16} {:>10}", "hbar", "max residual", "od/hbar");
    for m in &report.members {
        println!(
            "{:>10.6} {:>16.4e} {:>10.4}",
            m.hbar, m.max_normalized_residual, m.od_fraction_over_hbar
        );
    }
    println!(
        "fitted decay rate: {:.3} (monotone: {})",
        report.slope, report.monotone
    );
}
