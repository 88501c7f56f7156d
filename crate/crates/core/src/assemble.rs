//! Assembly of every bilinear/trilinear form the solvers use.
//!
//! Matrices are first assembled on the full P2 nodal space (every node a
//! dof), then reduced through the space's dof map; the reduction is what
//! couples BODY nodes to the rigid unknowns. Advection is always the
//! skew-symmetrized form c(a; u, v) = [(a.grad u, v) - (a.grad v, u)]/2,
//! so c(a; u, u) = 0 holds exactly and the discrete energy identities close.

use crate::error::{CoreError, Result};
use crate::fe::{self, CellGeometry, QuadRule};
use crate::linalg::{CooMat, SaddleSolver};
use crate::space::{FsiSpace, NodeClass, NondimParams};

/// Quadrature degree: exact for polynomials of degree 2 p_v + 1.
fn main_rule(dim: usize) -> QuadRule {
    fe::simplex_quadrature(dim, 5)
}

/// Per-cell scratch: physical basis values and gradients at each quad point.
struct CellEval {
    geo: CellGeometry,
    /// weights already scaled by |det J| (and the reference-volume factor)
    wq: Vec<f64>,
    /// P2 values: nq x npc
    phi: Vec<f64>,
    /// P2 physical gradients: nq x npc x d
    dphi: Vec<f64>,
    /// P1 values: nq x (d+1)
    psi: Vec<f64>,
}

struct Evaluator {
    rule: QuadRule,
    ref_phi: Vec<f64>,
    ref_dphi: Vec<f64>,
    ref_psi: Vec<f64>,
    npc: usize,
    dim: usize,
}

impl Evaluator {
    fn new(dim: usize) -> Self {
        let rule = main_rule(dim);
        let npc = fe::p2_nodes_per_cell(dim);
        let nq = rule.len();
        let mut ref_phi = vec![0.0; nq * npc];
        let mut ref_dphi = vec![0.0; nq * npc * dim];
        let mut ref_psi = vec![0.0; nq * (dim + 1)];
        for q in 0..nq {
            fe::p2_values(dim, rule.point(q), &mut ref_phi[q * npc..(q + 1) * npc]);
            fe::p2_ref_grads(dim, rule.point(q), &mut ref_dphi[q * npc * dim..(q + 1) * npc * dim]);
            fe::p1_values(dim, rule.point(q), &mut ref_psi[q * (dim + 1)..(q + 1) * (dim + 1)]);
        }
        Evaluator { rule, ref_phi, ref_dphi, ref_psi, npc, dim }
    }

    fn cell(&self, space: &FsiSpace, c: usize) -> Result<CellEval> {
        let d = self.dim;
        let mesh = &space.mesh;
        let cellv = mesh.cell(c);
        let mut verts = vec![0.0; (d + 1) * d];
        for (i, &v) in cellv.iter().enumerate() {
            verts[i * d..(i + 1) * d].copy_from_slice(mesh.vertex(v as usize));
        }
        let geo = CellGeometry::from_vertices(d, &verts);
        if geo.det <= 0.0 {
            return Err(CoreError::QuadratureFailure {
                cell: c,
                detail: format!("non-positive Jacobian {:.3e}", geo.det),
            });
        }
        let nq = self.rule.len();
        let mut wq = Vec::with_capacity(nq);
        for q in 0..nq {
            wq.push(self.rule.weights[q] * geo.det);
        }
        let mut dphi = vec![0.0; nq * self.npc * d];
        for q in 0..nq {
            for i in 0..self.npc {
                let gref = &self.ref_dphi[(q * self.npc + i) * d..(q * self.npc + i + 1) * d];
                let gphys = &mut dphi[(q * self.npc + i) * d..(q * self.npc + i + 1) * d];
                geo.grad_to_physical(gref, gphys);
            }
        }
        Ok(CellEval { geo, wq, phi: self.ref_phi.clone(), dphi, psi: self.ref_psi.clone() })
    }
}

/// Operators on the full P2 nodal space (columns/rows are node-major
/// velocity dofs; `div` rows are P1 pressures).
pub struct FullOps {
    pub mass: CooMat,
    pub visc: CooMat,
    pub grad: CooMat,
    pub stream: CooMat,
    pub div: CooMat,
    pub pressure_gauge: Vec<f64>,
}

pub fn assemble_full(space: &FsiSpace) -> Result<FullOps> {
    let d = space.dim;
    let ev = Evaluator::new(d);
    let nvel = space.n_nodes * d;
    let mut mass = CooMat::new(nvel, nvel);
    let mut visc = CooMat::new(nvel, nvel);
    let mut grad = CooMat::new(nvel, nvel);
    let mut stream = CooMat::new(nvel, nvel);
    let mut div = CooMat::new(space.n_pressure, nvel);
    let mut gauge = vec![0.0; space.n_pressure];
    let npc = ev.npc;
    let nq = ev.rule.len();

    for c in 0..space.mesh.n_cells() {
        let ce = ev.cell(space, c)?;
        let nodes = &space.cell_nodes[c * npc..(c + 1) * npc];
        // scalar blocks
        let mut m_loc = vec![0.0; npc * npc];
        let mut g_loc = vec![0.0; npc * npc];
        let mut s_loc = vec![0.0; npc * npc];
        // visc cross block: int d_a phi_j d_b phi_i per (a,b)
        let mut cross = vec![0.0; npc * npc * d * d];
        for q in 0..nq {
            let w = ce.wq[q];
            for i in 0..npc {
                let pi = ce.phi[q * npc + i];
                let gi = &ce.dphi[(q * npc + i) * d..(q * npc + i + 1) * d];
                for j in 0..npc {
                    let pj = ce.phi[q * npc + j];
                    let gj = &ce.dphi[(q * npc + j) * d..(q * npc + j + 1) * d];
                    m_loc[i * npc + j] += w * pi * pj;
                    let mut gg = 0.0;
                    for k in 0..d {
                        gg += gi[k] * gj[k];
                    }
                    g_loc[i * npc + j] += w * gg;
                    s_loc[i * npc + j] += w * gj[0] * pi;
                    for a in 0..d {
                        for b in 0..d {
                            cross[((i * npc + j) * d + a) * d + b] += w * gj[a] * gi[b];
                        }
                    }
                }
            }
        }
        for i in 0..npc {
            let ni = nodes[i] as usize;
            for j in 0..npc {
                let nj = nodes[j] as usize;
                for a in 0..d {
                    let (r, cc) = (ni * d + a, nj * d + a);
                    mass.push(r, cc, m_loc[i * npc + j]);
                    grad.push(r, cc, g_loc[i * npc + j]);
                    stream.push(r, cc, s_loc[i * npc + j]);
                    // 2(D u, D v) = delta_ab grad.grad + cross(a,b)
                    visc.push(r, cc, g_loc[i * npc + j]);
                    for b in 0..d {
                        visc.push(ni * d + a, nj * d + b, cross[((j * npc + i) * d + b) * d + a]);
                    }
                }
            }
        }
        // divergence rows and gauge
        for q in 0..nq {
            let w = ce.wq[q];
            for r in 0..d + 1 {
                let pr = ce.psi[q * (d + 1) + r];
                let vr = space.mesh.cell(c)[r] as usize;
                gauge[vr] += w * pr;
                for j in 0..npc {
                    let gj = &ce.dphi[(q * npc + j) * d..(q * npc + j + 1) * d];
                    let nj = nodes[j] as usize;
                    for b in 0..d {
                        div.push(vr, nj * d + b, w * pr * gj[b]);
                    }
                }
            }
        }
    }
    Ok(FullOps { mass, visc, grad, stream, div, pressure_gauge: gauge })
}

/// Skew advection matrix on the full space: x -> c(a; x, .) with the
/// transport field `a` given nodally (n_nodes * d).
pub fn advection_full(space: &FsiSpace, a_nodal: &[f64]) -> Result<CooMat> {
    let d = space.dim;
    let ev = Evaluator::new(d);
    let npc = ev.npc;
    let nq = ev.rule.len();
    let nvel = space.n_nodes * d;
    let mut out = CooMat::new(nvel, nvel);
    for c in 0..space.mesh.n_cells() {
        let ce = ev.cell(space, c)?;
        let nodes = &space.cell_nodes[c * npc..(c + 1) * npc];
        let mut loc = vec![0.0; npc * npc];
        for q in 0..nq {
            let w = ce.wq[q];
            // transport value at qp
            let mut aq = [0.0f64; 3];
            for (i, &n) in nodes.iter().enumerate() {
                let pv = ce.phi[q * npc + i];
                for k in 0..d {
                    aq[k] += pv * a_nodal[n as usize * d + k];
                }
            }
            for i in 0..npc {
                let pi = ce.phi[q * npc + i];
                let gi = &ce.dphi[(q * npc + i) * d..(q * npc + i + 1) * d];
                let mut adgi = 0.0;
                for k in 0..d {
                    adgi += aq[k] * gi[k];
                }
                for j in 0..npc {
                    let pj = ce.phi[q * npc + j];
                    let gj = &ce.dphi[(q * npc + j) * d..(q * npc + j + 1) * d];
                    let mut adgj = 0.0;
                    for k in 0..d {
                        adgj += aq[k] * gj[k];
                    }
                    loc[i * npc + j] += 0.5 * w * (adgj * pi - adgi * pj);
                }
            }
        }
        for i in 0..npc {
            for j in 0..npc {
                let v = loc[i * npc + j];
                if v != 0.0 {
                    for a in 0..d {
                        out.push(nodes[i] as usize * d + a, nodes[j] as usize * d + a, v);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Jacobian of the transport slot: delta -> c(delta; u, .) for fixed u.
pub fn transport_jacobian_full(space: &FsiSpace, u_nodal: &[f64]) -> Result<CooMat> {
    let d = space.dim;
    let ev = Evaluator::new(d);
    let npc = ev.npc;
    let nq = ev.rule.len();
    let nvel = space.n_nodes * d;
    let mut out = CooMat::new(nvel, nvel);
    for c in 0..space.mesh.n_cells() {
        let ce = ev.cell(space, c)?;
        let nodes = &space.cell_nodes[c * npc..(c + 1) * npc];
        for q in 0..nq {
            let w = ce.wq[q];
            let mut uq = [0.0f64; 3];
            let mut du = [0.0f64; 9]; // du[a*d+b] = d_b u_a
            for (i, &n) in nodes.iter().enumerate() {
                let pv = ce.phi[q * npc + i];
                let gi = &ce.dphi[(q * npc + i) * d..(q * npc + i + 1) * d];
                for a in 0..d {
                    let una = u_nodal[n as usize * d + a];
                    uq[a] += pv * una;
                    for b in 0..d {
                        du[a * d + b] += una * gi[b];
                    }
                }
            }
            for i in 0..npc {
                let pi = ce.phi[q * npc + i];
                let gi = &ce.dphi[(q * npc + i) * d..(q * npc + i + 1) * d];
                for j in 0..npc {
                    let pj = ce.phi[q * npc + j];
                    for a in 0..d {
                        for b in 0..d {
                            // c(phi_j e_b; u, phi_i e_a)
                            let v = 0.5 * w * (pi * pj * du[a * d + b] - pj * gi[b] * uq[a]);
                            if v != 0.0 {
                                out.push(nodes[i] as usize * d + a, nodes[j] as usize * d + b, v);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Reaction matrix with a gradient weight: x -> ((x . grad b), .) for a fixed
/// nodal field b.
pub fn grad_weight_full(space: &FsiSpace, b_nodal: &[f64]) -> Result<CooMat> {
    let d = space.dim;
    let ev = Evaluator::new(d);
    let npc = ev.npc;
    let nq = ev.rule.len();
    let nvel = space.n_nodes * d;
    let mut out = CooMat::new(nvel, nvel);
    for c in 0..space.mesh.n_cells() {
        let ce = ev.cell(space, c)?;
        let nodes = &space.cell_nodes[c * npc..(c + 1) * npc];
        for q in 0..nq {
            let w = ce.wq[q];
            let mut db = [0.0f64; 9];
            for (i, &n) in nodes.iter().enumerate() {
                let gi = &ce.dphi[(q * npc + i) * d..(q * npc + i + 1) * d];
                for a in 0..d {
                    let bna = b_nodal[n as usize * d + a];
                    for k in 0..d {
                        db[a * d + k] += bna * gi[k];
                    }
                }
            }
            for i in 0..npc {
                let pi = ce.phi[q * npc + i];
                for j in 0..npc {
                    let pj = ce.phi[q * npc + j];
                    for a in 0..d {
                        for cc in 0..d {
                            // (phi_j e_c . grad b)_a phi_i
                            let v = w * pj * db[a * d + cc] * pi;
                            if v != 0.0 {
                                out.push(nodes[i] as usize * d + a, nodes[j] as usize * d + cc, v);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Load vector (f, v) on the full space from an analytic force density.
pub fn forcing_vector_full(
    space: &FsiSpace,
    f: &dyn Fn(&[f64], &mut [f64]),
) -> Result<Vec<f64>> {
    let d = space.dim;
    let ev = Evaluator::new(d);
    let npc = ev.npc;
    let nq = ev.rule.len();
    let mut out = vec![0.0; space.n_nodes * d];
    let mut x = [0.0f64; 3];
    let mut fx = [0.0f64; 3];
    for c in 0..space.mesh.n_cells() {
        let ce = ev.cell(space, c)?;
        let nodes = &space.cell_nodes[c * npc..(c + 1) * npc];
        let v0 = space.mesh.vertex(space.mesh.cell(c)[0] as usize);
        for q in 0..nq {
            ce.geo.map_point(v0, ev.rule.point(q), &mut x[..d]);
            f(&x[..d], &mut fx[..d]);
            let w = ce.wq[q];
            for (i, &n) in nodes.iter().enumerate() {
                let pi = ce.phi[q * npc + i];
                for a in 0..d {
                    out[n as usize * d + a] += w * pi * fx[a];
                }
            }
        }
    }
    Ok(out)
}

/// Reduce a full-space velocity operator through the dof map of `space`
/// (rows and columns).
pub fn reduce_mat(space: &FsiSpace, full: &CooMat) -> CooMat {
    let d = space.dim;
    let mut out = CooMat::new(space.n_vel, space.n_vel);
    for &(r, c, v) in full.entries() {
        let (rn, ra) = ((r as usize) / d, (r as usize) % d);
        let (cn, ca) = ((c as usize) / d, (c as usize) % d);
        if let (Some(ri), Some(ci)) = (space.full_to_reduced(rn, ra), space.full_to_reduced(cn, ca))
        {
            out.push(ri, ci, v);
        }
    }
    out
}

/// Reduce only columns (for pressure-row blocks like the divergence).
pub fn reduce_cols(space: &FsiSpace, full: &CooMat) -> CooMat {
    let d = space.dim;
    let mut out = CooMat::new(full.nrows, space.n_vel);
    for &(r, c, v) in full.entries() {
        let (cn, ca) = ((c as usize) / d, (c as usize) % d);
        if let Some(ci) = space.full_to_reduced(cn, ca) {
            out.push(r as usize, ci, v);
        }
    }
    out
}

/// All assembled operators needed by the solvers, in reduced coordinates.
pub struct OperatorSet {
    /// fluid L2 mass
    pub mass: CooMat,
    /// weighted mass: fluid L2 plus varpi^{-1} on the rigid block
    pub mass_weighted: CooMat,
    /// 2 (D u, D v)
    pub visc: CooMat,
    /// (grad u, grad v)
    pub grad_stiff: CooMat,
    /// (d_1 u, v)
    pub stream: CooMat,
    /// (q, div u), pressure rows
    pub div: CooMat,
    /// integral of each P1 pressure basis function (mean-value gauge)
    pub pressure_gauge: Vec<f64>,
    pub varpi: f64,
    /// full-space companions for traction sums and residual evaluation
    pub full: FullOps,
}

pub fn assemble(space: &FsiSpace, params: &NondimParams) -> Result<OperatorSet> {
    params.validate()?;
    let full = assemble_full(space)?;
    let mass = reduce_mat(space, &full.mass).symmetrized();
    let visc = reduce_mat(space, &full.visc).symmetrized();
    let grad_stiff = reduce_mat(space, &full.grad).symmetrized();
    let stream = reduce_mat(space, &full.stream);
    let div = reduce_cols(space, &full.div);
    let mut mass_weighted = mass.clone();
    if !space.pinned {
        let off = space.rigid_offset();
        for c in 0..space.dim {
            mass_weighted.push(off + c, off + c, 1.0 / params.varpi);
        }
    }
    Ok(OperatorSet {
        mass,
        mass_weighted,
        visc,
        grad_stiff,
        stream,
        div,
        pressure_gauge: full.pressure_gauge.clone(),
        varpi: params.varpi,
        full,
    })
}

impl OperatorSet {
    /// Skew advection on reduced coordinates for a reduced transport field
    /// (plus optional lifting on the body).
    pub fn advection_reduced(
        &self,
        space: &FsiSpace,
        a_reduced: &[f64],
        body_value: Option<[f64; 3]>,
    ) -> Result<CooMat> {
        let a_nodal = space.full_nodal_values(a_reduced, body_value);
        let full = advection_full(space, &a_nodal)?;
        Ok(reduce_mat(space, &full))
    }

    /// The lambda2-type weight operator on the unpinned space:
    /// x -> (( (x - xhat) . grad b ), v) in reduced coordinates.
    pub fn relative_grad_weight_reduced(&self, space: &FsiSpace, b_nodal: &[f64]) -> Result<CooMat> {
        let w_full = grad_weight_full(space, b_nodal)?;
        let mut w_red = reduce_mat(space, &w_full);
        if !space.pinned {
            let d = space.dim;
            // subtract the constant-field columns: ((e_c . grad b), v)
            for c in 0..d {
                let mut onec = vec![0.0; space.n_nodes * d];
                for n in 0..space.n_nodes {
                    onec[n * d + c] = 1.0;
                }
                let t_full = w_full.apply(&onec);
                let t_red = space.reduce_nodal_vector(&t_full);
                let col = space.rigid_offset() + c;
                for (r, &v) in t_red.iter().enumerate() {
                    if v != 0.0 {
                        w_red.push(r, col, -v);
                    }
                }
            }
        }
        Ok(w_red)
    }
}

/// Jacobian of the relative transport slot: delta -> c(deltahat - delta; u, .)
/// in reduced coordinates, with deltahat the global constant extension of the
/// rigid part of delta.
pub fn relative_transport_jacobian_reduced(space: &FsiSpace, u_nodal: &[f64]) -> Result<CooMat> {
    let t_full = transport_jacobian_full(space, u_nodal)?;
    let mut out = reduce_mat(space, &t_full).scaled(-1.0);
    if !space.pinned {
        let d = space.dim;
        for c in 0..d {
            let mut onec = vec![0.0; space.n_nodes * d];
            for n in 0..space.n_nodes {
                onec[n * d + c] = 1.0;
            }
            let t_col = space.reduce_nodal_vector(&t_full.apply(&onec));
            let col = space.rigid_offset() + c;
            for (r, &v) in t_col.iter().enumerate() {
                if v != 0.0 {
                    out.push(r, col, v);
                }
            }
        }
    }
    Ok(out)
}

/// M_w-orthogonal projection onto the discretely solenoidal subspace.
/// With `outer_dirichlet` the projection also respects u = 0 on the outer
/// sphere (the space the eigensolvers and the transient scheme live in).
pub struct SolenoidalProjector {
    saddle: SaddleSolver,
    mask: crate::space::DofMask,
    n_pressure: usize,
}

impl SolenoidalProjector {
    pub fn new(space: &FsiSpace, ops: &OperatorSet, outer_dirichlet: bool) -> Result<Self> {
        let mask = if outer_dirichlet { space.outer_mask() } else { space.identity_mask() };
        let id_p = crate::space::DofMask::identity(ops.div.nrows);
        let m = ops.mass_weighted.masked(&mask, &mask);
        let b = ops.div.masked(&id_p, &mask);
        // with free outer dofs, (1, div u) is onto and B has full row rank:
        // the constant-pressure gauge border only applies once the outer
        // trace is eliminated
        let gauge = if outer_dirichlet { Some(ops.pressure_gauge.as_slice()) } else { None };
        let saddle = SaddleSolver::new(&m, &b, 1.0, gauge)?;
        Ok(SolenoidalProjector { saddle, mask, n_pressure: ops.div.nrows })
    }

    /// Project a reduced field; the input is restricted by the mask first
    /// (outer values are dropped when outer Dirichlet is on).
    pub fn project(&self, ops: &OperatorSet, x: &[f64]) -> Vec<f64> {
        let xm = self.mask.restrict(x);
        let m_masked = ops.mass_weighted.masked(&self.mask, &self.mask);
        let f = m_masked.apply(&xm);
        let (y, _p) = self.saddle.solve(&f, &vec![0.0; self.n_pressure]);
        self.mask.extend(&y)
    }

    pub fn mask(&self) -> &crate::space::DofMask {
        &self.mask
    }
}

/// Sum the full-space weak residual over BODY nodes: the volume-consistent
/// boundary traction of the Cauchy stress, one component per direction.
pub fn sum_body_rows(space: &FsiSpace, full_residual: &[f64]) -> [f64; 3] {
    let d = space.dim;
    let mut out = [0.0; 3];
    for n in 0..space.n_nodes {
        if space.node_class[n] == NodeClass::Body {
            for c in 0..d {
                out[c] += full_residual[n * d + c];
            }
        }
    }
    out
}

/// Report from `sanity_constants`: discrete analogs of the embedding
/// constants, with the Lp exponent used for kappa0 (4 in 2D, 6 in 3D).
#[derive(Debug, Clone, serde::Serialize)]
pub struct SanityConstants {
    pub kappa0: f64,
    pub kappa0_exponent: usize,
    pub kappa1: f64,
    pub sampled_modes: usize,
}

/// kappa0_h sampled over the lowest modified-Stokes modes (a lower bound on
/// the true discrete constant); kappa1_h from the extreme eigenvalue of the
/// rigid-selector pencil |uhat|^2 = kappa^2 ||D(u)||^2.
pub fn sanity_constants(
    space: &FsiSpace,
    ops: &OperatorSet,
    params: &NondimParams,
    n_samples: usize,
) -> Result<SanityConstants> {
    let exponent = if space.dim == 2 { 4 } else { 6 };
    if space.pinned {
        return Ok(SanityConstants { kappa0: 0.0, kappa0_exponent: exponent, kappa1: 0.0, sampled_modes: 0 });
    }
    let mask = space.outer_mask();
    let id_p = crate::space::DofMask::identity(ops.div.nrows);
    let visc_m = ops.visc.masked(&mask, &mask);
    let b_m = ops.div.masked(&id_p, &mask);

    // kappa1: largest eigenvalue of R x = k^2 * (1/2) A_visc x
    let mut rigid_sel = CooMat::new(mask.n_reduced, mask.n_reduced);
    let off = space.rigid_offset();
    for c in 0..space.dim {
        let m = mask.map[off + c];
        if m >= 0 {
            rigid_sel.push(m as usize, m as usize, 1.0);
        }
    }
    let half_visc = visc_m.scaled(0.5);
    let eig = crate::linalg::sym_pencil_extreme(
        &rigid_sel,
        &half_visc,
        &b_m,
        Some(&ops.pressure_gauge),
        1,
        crate::linalg::Extreme::Largest,
        &crate::linalg::EigOpts::default(),
        None,
    )?;
    let kappa1 = eig.values[0].max(0.0).sqrt();

    // kappa0: sampled over the lowest modified-Stokes modes
    let basis = crate::modal::stokes_fsi_modes(space, params, n_samples, &Default::default())?;
    let mut kappa0: f64 = 0.0;
    for mode in &basis.modes {
        let u_nodal = space.full_nodal_values(mode, None);
        let lp = lp_norm(space, &u_nodal, exponent as f64)?;
        let x_m = mask.restrict(mode);
        let dnorm = (0.5 * crate::linalg::dot(&x_m, &visc_m.apply(&x_m))).sqrt();
        if dnorm > 0.0 {
            kappa0 = kappa0.max(lp / dnorm);
        }
    }
    Ok(SanityConstants { kappa0, kappa0_exponent: exponent, kappa1, sampled_modes: basis.modes.len() })
}

/// L^p norm of a full nodal field by quadrature (degree-8 rule in 2D; the
/// degree-5 rule in 3D, where the integrand is approximated).
pub fn lp_norm(space: &FsiSpace, u_nodal: &[f64], p: f64) -> Result<f64> {
    let d = space.dim;
    let rule = if d == 2 { fe::simplex_quadrature(2, 8) } else { fe::simplex_quadrature(3, 5) };
    let npc = fe::p2_nodes_per_cell(d);
    let nq = rule.len();
    let mut vals = vec![0.0; npc];
    let mut acc = 0.0;
    for c in 0..space.mesh.n_cells() {
        let mesh = &space.mesh;
        let cellv = mesh.cell(c);
        let mut verts = vec![0.0; (d + 1) * d];
        for (i, &v) in cellv.iter().enumerate() {
            verts[i * d..(i + 1) * d].copy_from_slice(mesh.vertex(v as usize));
        }
        let geo = CellGeometry::from_vertices(d, &verts);
        let nodes = &space.cell_nodes[c * npc..(c + 1) * npc];
        for q in 0..nq {
            fe::p2_values(d, rule.point(q), &mut vals);
            let mut uu = 0.0;
            for a in 0..d {
                let mut ua = 0.0;
                for (i, &n) in nodes.iter().enumerate() {
                    ua += vals[i] * u_nodal[n as usize * d + a];
                }
                uu += ua * ua;
            }
            acc += rule.weights[q] * geo.det * uu.powf(p / 2.0);
        }
    }
    Ok(acc.powf(1.0 / p))
}

/// L2 norm of a full nodal field (exact quadrature).
pub fn l2_norm(_space: &FsiSpace, ops: &FullOps, u_nodal: &[f64]) -> f64 {
    crate::linalg::dot(u_nodal, &ops.mass.apply(u_nodal)).sqrt()
}
