//! Shared test oracles: the manufactured steady solution (a compactly
//! supported swirl whose support avoids both boundaries, so polygonal
//! boundary approximation cannot pollute the convergence order) and
//! quadrature-based error norms independent of the assembly path.

#![allow(dead_code)]

use fsilab_core::fe::{self, CellGeometry};
use fsilab_core::FsiSpace;

pub const MMS_R1: f64 = 0.7;
pub const MMS_R2: f64 = 2.3;

/// radial bump g(r) = s ((r - r1)(r2 - r))^4 on [r1, r2], C^3 at the seams
pub fn bump(r: f64) -> (f64, f64, f64) {
    let (r1, r2) = (MMS_R1, MMS_R2);
    if r <= r1 || r >= r2 {
        return (0.0, 0.0, 0.0);
    }
    let mid = 0.5 * (r1 + r2);
    let scale = 1.0 / ((mid - r1) * (r2 - mid)).powi(4);
    let w = (r - r1) * (r2 - r);
    let wp = (r2 - r) - (r - r1);
    let g = scale * w.powi(4);
    let gp = scale * 4.0 * w.powi(3) * wp;
    let gpp = scale * (12.0 * w.powi(2) * wp * wp - 8.0 * w.powi(3));
    (g, gp, gpp)
}

/// exact solenoidal velocity u = g(r) (y, -x)
pub fn mms_velocity(x: &[f64], out: &mut [f64]) {
    let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
    let (g, _, _) = bump(r);
    out[0] = g * x[1];
    out[1] = -g * x[0];
}

/// exact pressure p = g(r) x (shifted to discrete mean zero when compared)
pub fn mms_pressure(x: &[f64]) -> f64 {
    let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
    bump(r).0 * x[0]
}

/// forcing f = -Lap u + grad p - lambda d1 u + lambda (u . grad) u
pub fn mms_forcing(lambda: f64) -> impl Fn(&[f64], &mut [f64]) {
    move |x: &[f64], out: &mut [f64]| {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let (g, gp, gpp) = bump(r);
        let lap = gpp + 3.0 * gp / r.max(1e-300);
        let (xx, yy) = (x[0], x[1]);
        let grad_p = (g + gp * xx * xx / r.max(1e-300), gp * xx * yy / r.max(1e-300));
        let d1u = (gp * xx * yy / r.max(1e-300), -g - gp * xx * xx / r.max(1e-300));
        let conv = (-g * g * xx, -g * g * yy);
        out[0] = -lap * yy + grad_p.0 - lambda * d1u.0 + lambda * conv.0;
        out[1] = lap * xx + grad_p.1 - lambda * d1u.1 + lambda * conv.1;
    }
}

/// L2 error of a nodal P2 field against an analytic velocity, degree-8 rule.
pub fn l2_error_velocity(
    space: &FsiSpace,
    u_nodal: &[f64],
    exact: &dyn Fn(&[f64], &mut [f64]),
) -> f64 {
    let d = space.dim;
    let rule = fe::simplex_quadrature(d, 8);
    let npc = fe::p2_nodes_per_cell(d);
    let mut vals = vec![0.0; npc];
    let mut acc = 0.0;
    let mut xq = [0.0f64; 3];
    let mut ue = [0.0f64; 3];
    for c in 0..space.mesh.n_cells() {
        let mesh = &space.mesh;
        let cellv = mesh.cell(c);
        let mut verts = vec![0.0; (d + 1) * d];
        for (i, &v) in cellv.iter().enumerate() {
            verts[i * d..(i + 1) * d].copy_from_slice(mesh.vertex(v as usize));
        }
        let geo = CellGeometry::from_vertices(d, &verts);
        let v0 = mesh.vertex(cellv[0] as usize);
        let nodes = &space.cell_nodes[c * npc..(c + 1) * npc];
        for q in 0..rule.len() {
            fe::p2_values(d, rule.point(q), &mut vals);
            geo.map_point(v0, rule.point(q), &mut xq[..d]);
            exact(&xq[..d], &mut ue[..d]);
            let mut e2 = 0.0;
            for a in 0..d {
                let mut ua = 0.0;
                for (i, &n) in nodes.iter().enumerate() {
                    ua += vals[i] * u_nodal[n as usize * d + a];
                }
                e2 += (ua - ue[a]) * (ua - ue[a]);
            }
            acc += rule.weights[q] * geo.det * e2;
        }
    }
    acc.sqrt()
}
