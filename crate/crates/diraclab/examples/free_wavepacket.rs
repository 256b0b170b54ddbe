//! Free evolution of a band-pure wave packet: tracks the density center
//! against the group velocity and verifies norm conservation.
//!
//!     cargo run --release --example free_wavepacket

use diraclab::lattice::{make_grid, LatticeSpec};
use diraclab::potential::{HartreeKernel, PeriodicPotential};
use diraclab::propagate::{evolve, initial_wavepacket, EvolveSpec, Propagator};
use diraclab::symbol::{group_velocity, Band, DiracConstants};
use std::f64::consts::PI;

fn main() {
    let grid = make_grid([2.0 * PI, 2.0 * PI], [128, 128]).unwrap();
    let hbar = 1.0 / 16.0;
    let consts = DiracConstants::new(1.0, 1.0, hbar);
    let k0 = [0.5, 0.25];
    let psi0 = initial_wavepacket(&grid, [PI, PI], k0, Band::Plus, &consts, hbar.sqrt()).unwrap();

    let lat = LatticeSpec::square(2.0 * PI, 0.5).unwrap();
    let pot = PeriodicPotential::zero(lat);
    let mut prop = Propagator::new(grid.clone(), consts, &pot, HartreeKernel::none());
    let rec = evolve(
        &mut prop,
        &psi0,
        &EvolveSpec {
            t_final: 1.0,
            dt: 1e-3,
            snapshot_times: (1..=4).map(|i| 0.25 * i as f64).collect(),
        },
    )
    .unwrap();

    let v = group_velocity(k0, &consts).unwrap();
    println!("group velocity v(k0) = ({:.4}, {:.4})", v[0], v[1]);
    println!("{:>6} {:>10} {:>10} {:>12}", "t", "center_x1", "center_x2", "l2 drift");
    for (i, psi) in rec.snapshots.iter().enumerate() {
        let rho = psi.density();
        let mut c = [0.0; 2];
        let mut m = 0.0;
        for p in 0..grid.n[0] {
            for q in 0..grid.n[1] {
                let x = grid.coord([p, q]);
                c[0] += x[0] * rho[[p, q]];
                c[1] += x[1] * rho[[p, q]];
                m += rho[[p, q]];
            }
        }
        println!(
            "{:>6.2} {:>10.5} {:>10.5} {:>12.3e}",
            rec.times[i],
            c[0] / m,
            c[1] / m,
            (rec.diagnostics[i].l2_norm - 1.0).abs()
        );
    }
    println!(
        "expected drift per unit time: ({:.5}, {:.5}) from (pi, pi)",
        v[0], v[1]
    );
}
