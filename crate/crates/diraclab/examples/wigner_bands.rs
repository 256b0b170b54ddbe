//! Matrix-valued Wigner transform of a wave packet: marginal identity,
//! band masses, interband norm, and a phase-space profile along the
//! carrier axis.
//!
//!     cargo run --release --example wigner_bands

use diraclab::lattice::make_grid;
use diraclab::propagate::initial_wavepacket;
use diraclab::symbol::{Band, DiracConstants};
use diraclab::wigner::{band_split, density_marginal, k_coord, wigner_transform};
use std::f64::consts::PI;

fn main() {
    let grid = make_grid([2.0 * PI, 2.0 * PI], [64, 64]).unwrap();
    let hbar = 0.125;
    let consts = DiracConstants::new(1.0, 1.0, hbar);
    let psi =
        initial_wavepacket(&grid, [PI, PI], [0.5, 0.0], Band::Plus, &consts, hbar.sqrt()).unwrap();

    let w = wigner_transform(&psi, 1).unwrap();
    println!(
        "Wigner field: {}^2 position nodes x {}^2 momentum nodes, dk = {:.4}",
        w.xgrid.n[0], w.kgrid.n[0], w.kgrid.spacing[0]
    );
    println!("hermiticity error: {:.3e}", w.hermiticity_error());

    let rho = density_marginal(&w);
    let dens = psi.density();
    let mut marg: f64 = 0.0;
    let mut peak: f64 = 0.0;
    for i in 0..64 {
        for j in 0..64 {
            marg = marg.max((rho[[i, j]] - dens[[i, j]]).abs());
            peak = peak.max(dens[[i, j]]);
        }
    }
    println!("k-marginal vs |psi|^2: max deviation {:.3e} (peak {peak:.3})", marg);

    let (fp, fm, od) = band_split(&w, &consts, 0.0);
    println!("band masses: f+ {:.6}, f- {:.3e}", fp.mass(), fm.mass());
    println!(
        "interband fraction |W_OD| / |W| = {:.4} (sqrt(hbar) = {:.4})",
        od.l2_norm() / w.l2_norm(),
        hbar.sqrt()
    );

    // f+ along k1 at the packet center
    let xc = [32, 32];
    let nk = w.kgrid.n[0];
    println!("f+(x_c, k1, 0) profile:");
    for ik in (0..nk).step_by(4) {
        let k = k_coord(&w.kgrid, [ik, nk / 2]);
        let v = fp.values[[fp.xgrid.flat(xc), ik * nk + nk / 2]];
        let bar = "#".repeat((v.max(0.0) * 4.0).min(60.0) as usize);
        println!("  k1 = {:+.3}: {:>9.4} {bar}", k[0], v);
    }
}
