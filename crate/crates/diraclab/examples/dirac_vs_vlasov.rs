//! Weak comparison of the two solvers: the quantum band densities against
//! a particle realization of the limiting transport equation, paired
//! through the shared test battery.
//!
//!     cargo run --release --example dirac_vs_vlasov

use diraclab::experiments::{compare_dirac_vlasov, config::RunConfig};

fn main() {
    let toml = r#"
[constants]
mass = 1.0
light_speed = 1.0
hbar = 0.0625

[lattice]
cell_side = 6.283185307179586
scale_a = 0.5
cells_per_side = 2

[grid]
n = 128

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
xstride = 4
k_spacing = 0.0625
k_window = 1.0

[battery]
bump_radius = 0.30
bump_offset = 0.08

[output]
directory = "out/example-compare"
seed = 5
"#;
    let cfg = RunConfig::from_toml(toml).unwrap();
    let report = compare_dirac_vlasov(&cfg, 200_000).unwrap();
    println!(
        "clipped initial mass fraction: {:.3e}",
        report.clipped_fraction
    );
    println!("{:>6} {:>12}", "t", "D(t)");
    for row in &report.rows {
        println!("{:>6.2} {:>12.4e}", row.t, row.d);
    }
    println!("(D = max over the battery of the normalized pairing difference)");
}
