use fsilab_core::assemble;
use fsilab_core::geometry::{self, BodyShape};
use fsilab_core::space::{build_fsi_space, NondimParams};
use std::time::Instant;

fn main() {
    let body = BodyShape::disk();
    let mesh = geometry::build_annulus_mesh(&body, 3.0, 0.4, true).unwrap();
    let space = build_fsi_space(&mesh, 2, false).unwrap();
    let nd = NondimParams { lambda: 1.0, omega_n_sq: 1.0, varpi: 1.0 };
    let t0 = Instant::now();
    let ops = assemble::assemble(&space, &nd).unwrap();
    eprintln!("assemble: {:?}", t0.elapsed());
    let t1 = Instant::now();
    let basis = fsilab_core::modal::stokes_fsi_modes(&space, &nd, 8, &Default::default()).unwrap();
    eprintln!("modes: {:?} (route {:?})", t1.elapsed(), basis.eig_route);
    let t2 = Instant::now();
    let rep = assemble::sanity_constants(&space, &ops, &nd, 8).unwrap();
    eprintln!("sanity: {:?} -> k0={} k1={}", t2.elapsed(), rep.kappa0, rep.kappa1);
}
