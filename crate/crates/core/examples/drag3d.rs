use fsilab_core::geometry::{self, BodyShape};
use fsilab_core::space::{build_fsi_space, NondimParams};
use fsilab_core::steady::{solve_steady, SteadySetup};
use std::time::Instant;

fn main() {
    let body = BodyShape::sphere();
    let nd = NondimParams { lambda: 1e-3, omega_n_sq: 1.0, varpi: 1.0 };
    let exact3pi = 3.0 * std::f64::consts::PI;
    // envelope oracle: exact drag in a rigid outer sphere of radius b
    let envelope = |b: f64| -> f64 {
        let a: f64 = 0.5;
        let m = [
            [1.0 / a, a, a * a, a.powi(4)],
            [-1.0 / (a * a), 1.0, 2.0 * a, 4.0 * a.powi(3)],
            [1.0 / b, b, b * b, b.powi(4)],
            [-1.0 / (b * b), 1.0, 2.0 * b, 4.0 * b.powi(3)],
        ];
        let rhs = [a * a / 2.0, a, 0.0, 0.0];
        // solve 4x4 by gaussian elimination
        let mut aug = [[0.0f64; 5]; 4];
        for i in 0..4 {
            aug[i][..4].copy_from_slice(&m[i]);
            aug[i][4] = rhs[i];
        }
        for c in 0..4 {
            let piv = (c..4).max_by(|&i, &j| aug[i][c].abs().total_cmp(&aug[j][c].abs())).unwrap();
            aug.swap(c, piv);
            for r in 0..4 {
                if r != c {
                    let f = aug[r][c] / aug[c][c];
                    for k in c..5 {
                        aug[r][k] -= f * aug[c][k];
                    }
                }
            }
        }
        let bcoef = aug[1][4] / aug[1][1];
        8.0 * std::f64::consts::PI * bcoef.abs()
    };
    for (r, h) in [(4.0, 0.28), (8.0, 0.28), (16.0, 0.28)] {
        let t0 = Instant::now();
        let mesh = geometry::build_annulus_mesh(&body, r, h, true).unwrap();
        let space = build_fsi_space(&mesh, 2, true).unwrap();
        let t1 = Instant::now();
        let state = solve_steady(&space, &nd, None, &SteadySetup::default()).unwrap();
        let drag = state.drag();
        println!(
            "R={r:5} h={h} cells={} n_vel={} mesh {:?} solve {:?} drag={drag:.5} ratio_3pi={:.4} envelope_ratio={:.4}",
            mesh.n_cells(), space.n_vel, t1 - t0, t1.elapsed(), drag / exact3pi, envelope(r) / exact3pi
        );
    }
}
