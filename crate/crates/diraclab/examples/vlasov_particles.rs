//! Weighted-particle transport: free-streaming exactness, single-particle
//! energy conservation in a static cosine potential, and massless cutoff
//! leakage accounting.
//!
//!     cargo run --release --example vlasov_particles

use diraclab::lattice::LatticeSpec;
use diraclab::potential::PeriodicPotential;
use diraclab::symbol::{Band, DiracConstants};
use diraclab::vlasov::{particle_energy, vlasov_step, ForceField, ParticleEnsemble};
use num_complex::Complex64;
use std::f64::consts::PI;

fn ensemble(positions: Vec<[f64; 2]>, momenta: Vec<[f64; 2]>, bands: Vec<Band>) -> ParticleEnsemble {
    let n = positions.len();
    ParticleEnsemble {
        positions,
        momenta,
        weights: vec![1.0 / n as f64; n],
        bands,
        frozen: vec![false; n],
        box_extent: [2.0 * PI, 2.0 * PI],
        seed: 0,
    }
}

fn main() {
    let lat = LatticeSpec::square(2.0 * PI, 0.5).unwrap();
    let consts = DiracConstants::new(1.0, 1.0, 0.0625);

    // free streaming: both bands drift in opposite directions
    let free = PeriodicPotential::zero(lat.clone());
    let force = ForceField {
        pot: &free,
        vint_grad: None,
    };
    let mut ens = ensemble(
        vec![[PI, PI], [PI, PI]],
        vec![[0.5, 0.0], [0.5, 0.0]],
        vec![Band::Plus, Band::Minus],
    );
    for _ in 0..1000 {
        vlasov_step(&mut ens, &force, &consts, 1e-3, 0.0);
    }
    println!(
        "free streaming at T = 1: band + x1 = {:.5}, band - x1 = {:.5} (v = {:.5})",
        ens.positions[0][0],
        ens.positions[1][0],
        diraclab::symbol::group_velocity([0.5, 0.0], &consts).unwrap()[0]
    );

    // energy drift in the static external potential
    let pot = PeriodicPotential::single_mode(lat.clone(), (1, 0), Complex64::new(0.05, 0.0)).unwrap();
    let force = ForceField {
        pot: &pot,
        vint_grad: None,
    };
    let mut ens = ensemble(vec![[2.0, 1.0]], vec![[0.5, 0.1]], vec![Band::Plus]);
    let e0 = particle_energy(ens.positions[0], ens.momenta[0], Band::Plus, &pot, &consts);
    let mut drift: f64 = 0.0;
    for _ in 0..10_000 {
        vlasov_step(&mut ens, &force, &consts, 1e-3, 0.0);
        let e = particle_energy(ens.positions[0], ens.momenta[0], Band::Plus, &pot, &consts);
        drift = drift.max((e - e0).abs());
    }
    println!("energy drift over T = 10 in the cosine potential: {drift:.3e}");

    // massless cutoff: a slow particle decelerated into |k| < kappa freezes
    let ml = DiracConstants::new(0.0, 1.0, 0.0625);
    let strong = PeriodicPotential::single_mode(lat, (1, 0), Complex64::new(1.0, 0.0)).unwrap();
    let force = ForceField {
        pot: &strong,
        vint_grad: None,
    };
    let mut ens = ensemble(
        vec![[1.3, 2.0], [4.0, 1.0]],
        vec![[0.52, 0.0], [3.0, 0.0]],
        vec![Band::Plus, Band::Plus],
    );
    for _ in 0..4000 {
        vlasov_step(&mut ens, &force, &ml, 1e-3, 0.5);
    }
    println!(
        "massless run: cutoff leakage {:.3} of total weight {:.3} (frozen: {:?})",
        ens.leakage(),
        ens.total_weight(),
        ens.frozen
    );
}
