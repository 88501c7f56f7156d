use fsilab_core::bifurcation::{linearized_pencil, path_sample, PathOpts};
use fsilab_core::geometry::{self, BodyShape};
use fsilab_core::space::{build_fsi_space, NondimParams};
use fsilab_core::steady::{solve_steady, SteadySetup};

fn main() {
    let body = BodyShape::disk();
    let mesh = geometry::build_annulus_mesh(&body, 3.0, 0.4, true).unwrap();
    let space = build_fsi_space(&mesh, 2, true).unwrap();
    let params = NondimParams { lambda: 0.5, omega_n_sq: 1.0, varpi: 1.0 };
    let state = solve_steady(&space, &params, None, &SteadySetup::default()).unwrap();
    let u0 = space.full_nodal_values(&state.z, Some([1.0, 0.0, 0.0]));
    for amp in [10.0, 20.0, 25.0] {
        let amped: Vec<f64> = u0.iter().map(|v| amp * v).collect();
        let pencil = linearized_pencil(&space, &amped).unwrap();
        let opts = PathOpts { cluster_size: 10, ..Default::default() };
        let s = path_sample(&pencil, 1.0, &opts, None).unwrap();
        println!("amp {amp}: cluster at lambda=1 (nearest 1 first):");
        for m in &s.cluster {
            println!("    {:+.6} {:+.6}i", m.re, m.im);
        }
    }
}
