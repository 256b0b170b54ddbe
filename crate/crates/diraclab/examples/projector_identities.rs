//! Checks the band-projector algebra on a momentum grid and reports the
//! worst deviation of each identity, massive and massless.
//!
//!     cargo run --release --example projector_identities

use diraclab::symbol::{
    alpha, group_velocity, ident, projector, projector_gradient, symbol, Band, DiracConstants,
};

fn main() {
    for (label, consts, kappa) in [
        ("massive m=1", DiracConstants::new(1.0, 1.0, 1.0), 0.0),
        ("massless", DiracConstants::new(0.0, 1.0, 1.0), 0.5),
    ] {
        let mut idem: f64 = 0.0;
        let mut ortho: f64 = 0.0;
        let mut complete: f64 = 0.0;
        let mut commute: f64 = 0.0;
        let mut eigen: f64 = 0.0;
        let mut sandwich: f64 = 0.0;
        let mut kinetic_id: f64 = 0.0;
        let mut grad_norm: f64 = 0.0;

        let n = 64;
        for i in 0..n {
            for j in 0..n {
                let k = [
                    -4.0 + 8.0 * i as f64 / n as f64,
                    -4.0 + 8.0 * j as f64 / n as f64,
                ];
                if consts.is_massless() && k[0].hypot(k[1]) < kappa {
                    continue;
                }
                let h = symbol(k, &consts);
                let e = diraclab::symbol::energy(k, &consts);
                let pp = projector(k, &consts, Band::Plus).unwrap();
                let pm = projector(k, &consts, Band::Minus).unwrap();
                idem = idem.max((pp * pp - pp).max_abs());
                ortho = ortho.max((pp * pm).max_abs());
                complete = complete.max((pp + pm - ident()).max_abs());
                commute = commute.max(h.commutator(pp).max_abs());
                eigen = eigen.max((h * pp - pp.scale_re(e)).max_abs());
                let v = group_velocity(k, &consts).unwrap();
                for band in [Band::Plus, Band::Minus] {
                    let p = projector(k, &consts, band).unwrap();
                    let g = projector_gradient(k, &consts, band, kappa).unwrap();
                    for gj in &g {
                        sandwich = sandwich.max((p * *gj * p).max_abs());
                        grad_norm = grad_norm.max(gj.op_norm());
                    }
                    for ax in 0..2 {
                        let lhs = p * alpha(ax) * p;
                        let rhs = p.scale_re(band.sign() * v[ax] / consts.light_speed);
                        kinetic_id = kinetic_id.max((lhs - rhs).max_abs());
                    }
                }
            }
        }
        println!("{label}:");
        println!("  Pi^2 - Pi              {idem:.3e}");
        println!("  Pi+ Pi-                {ortho:.3e}");
        println!("  Pi+ + Pi- - 1          {complete:.3e}");
        println!("  [H, Pi]                {commute:.3e}");
        println!("  H Pi - E Pi            {eigen:.3e}");
        println!("  Pi (grad Pi) Pi        {sandwich:.3e}");
        println!("  Pi a Pi - (v/c) Pi     {kinetic_id:.3e}");
        if consts.mass > 0.0 {
            let bound = 1.0 / (2.0 * consts.mass * consts.light_speed);
            println!("  max |grad Pi|_op       {grad_norm:.6} (bound {bound})");
        } else {
            println!("  max |grad Pi|_op       {grad_norm:.6} (cutoff kappa = {kappa})");
        }
    }
}
