//! The coupled Stokes eigenbasis: eigenpairs of the Stokes operator with the
//! rigid body built into the mass structure, orthonormal in the weighted
//! inner product and simultaneously orthogonal in the strain product. This
//! basis drives the Galerkin transient scheme.

use crate::assemble::{self, OperatorSet};
use crate::error::{CoreError, Result};
use crate::linalg::{self, EigOpts, Extreme, Route, SaddleSolver};
use crate::space::{DofMask, FsiSpace, NondimParams};

#[derive(Debug, Clone)]
pub struct ModalBasis {
    pub count: usize,
    /// ascending positive eigenvalues
    pub eigenvalues: Vec<f64>,
    /// reduced unpinned coefficient vectors (outer dofs zero), orthonormal in
    /// the weighted inner product
    pub modes: Vec<Vec<f64>>,
    /// pressure companions (P1 coefficients, mean zero)
    pub pressures: Vec<Vec<f64>>,
    pub gram_residual: f64,
    /// set when consecutive eigenvalues coincide to 1e-8 relative; the basis
    /// split inside such a cluster is deterministic but geometry-dependent
    pub cluster_warning: bool,
    /// per-mode |mu psihat - varpi * traction| / (mu |psihat| + 1)
    pub rigid_coupling_residuals: Vec<f64>,
    pub eig_route: Route,
}

#[derive(Debug, Clone, Default)]
pub struct ModalOpts {
    pub eig: EigOpts,
    pub route: Option<Route>,
}

/// Smallest `n` eigenpairs of  2(D(psi), D(v)) = mu <psi, v>  on the
/// divergence-free unpinned space with outer Dirichlet.
pub fn stokes_fsi_modes(
    space: &FsiSpace,
    params: &NondimParams,
    n: usize,
    opts: &ModalOpts,
) -> Result<ModalBasis> {
    if space.pinned {
        return Err(CoreError::Precondition(
            "modal basis needs the unpinned space (free rigid dofs)".into(),
        ));
    }
    if n == 0 {
        return Err(CoreError::Precondition("need at least one mode".into()));
    }
    let ops = assemble::assemble(space, params)?;
    stokes_fsi_modes_with_ops(space, &ops, n, opts)
}

pub fn stokes_fsi_modes_with_ops(
    space: &FsiSpace,
    ops: &OperatorSet,
    n: usize,
    opts: &ModalOpts,
) -> Result<ModalBasis> {
    let mask = space.outer_mask();
    let id_p = DofMask::identity(ops.div.nrows);
    let a_m = ops.visc.masked(&mask, &mask);
    let mw_m = ops.mass_weighted.masked(&mask, &mask);
    let b_m = ops.div.masked(&id_p, &mask);

    let eig = linalg::sym_pencil_extreme(
        &a_m,
        &mw_m,
        &b_m,
        Some(&ops.pressure_gauge),
        n,
        Extreme::Smallest,
        &opts.eig,
        opts.route,
    )?;
    if eig.values.len() < n {
        return Err(CoreError::EigSolveFailure(format!(
            "requested {n} modes but the constrained space has only {}",
            eig.values.len()
        )));
    }

    // exact M_w-orthonormalization in index order (deterministic cluster split)
    let mw_csc = mw_m.to_csc();
    let m_dot = |x: &[f64], y: &[f64]| -> f64 {
        let ym = faer::Mat::<f64>::from_fn(y.len(), 1, |i, _| y[i]);
        let my = &mw_csc * &ym;
        x.iter().enumerate().map(|(i, xi)| xi * my[(i, 0)]).sum()
    };
    let mut modes_m: Vec<Vec<f64>> = Vec::with_capacity(n);
    for v in eig.vectors.iter().take(n) {
        let mut x = v.clone();
        for done in &modes_m {
            let c = m_dot(&x, done);
            linalg::axpy(&mut x, -c, done);
        }
        for done in &modes_m {
            let c = m_dot(&x, done);
            linalg::axpy(&mut x, -c, done);
        }
        let nrm = m_dot(&x, &x).sqrt();
        if nrm <= 0.0 {
            return Err(CoreError::EigSolveFailure("degenerate mode vector".into()));
        }
        for xi in x.iter_mut() {
            *xi /= nrm;
        }
        modes_m.push(x);
    }

    // pressures from one saddle application per mode
    let psad = SaddleSolver::new(&a_m, &b_m, -1.0, Some(&ops.pressure_gauge))?;
    let mut pressures = Vec::with_capacity(n);
    for (k, x) in modes_m.iter().enumerate() {
        let f = mw_m.apply(x);
        let (_y, ptilde) = psad.solve(&f, &vec![0.0; ops.div.nrows]);
        let mu = eig.values[k];
        pressures.push(ptilde.iter().map(|&v| v * mu).collect::<Vec<f64>>());
    }

    // extend to unreduced coordinates and run the structural checks
    let modes: Vec<Vec<f64>> = modes_m.iter().map(|x| mask.extend(x)).collect();
    let mut gram_residual: f64 = 0.0;
    for i in 0..n {
        for j in 0..=i {
            let g = m_dot(&modes_m[i], &modes_m[j]);
            let target = if i == j { 1.0 } else { 0.0 };
            gram_residual = gram_residual.max((g - target).abs());
        }
    }
    let mut cluster_warning = false;
    for i in 0..n - 1 {
        if (eig.values[i + 1] - eig.values[i]).abs() < 1e-8 * eig.values[i].abs() {
            cluster_warning = true;
        }
    }

    let rigid_coupling_residuals =
        rigid_coupling_residuals(space, ops, &eig.values[..n], &modes, &pressures);

    Ok(ModalBasis {
        count: n,
        eigenvalues: eig.values[..n].to_vec(),
        modes,
        pressures,
        gram_residual,
        cluster_warning,
        rigid_coupling_residuals,
        eig_route: eig.route,
    })
}

/// |mu psihat - varpi * oint T(psi, phi) n| / (mu |psihat| + 1), with the
/// traction taken in its volume-consistent form (full-space weak residual of
/// the Stokes system with interior load mu psi, summed over body rows).
fn rigid_coupling_residuals(
    space: &FsiSpace,
    ops: &OperatorSet,
    mus: &[f64],
    modes: &[Vec<f64>],
    pressures: &[Vec<f64>],
) -> Vec<f64> {
    let d = space.dim;
    let mut out = Vec::with_capacity(modes.len());
    for ((mode, p), &mu) in modes.iter().zip(pressures).zip(mus) {
        let u_nodal = space.full_nodal_values(mode, None);
        let mut r = ops.full.visc.apply(&u_nodal);
        let btp = ops.full.div.apply_transpose(p);
        let mut mload = ops.full.mass.apply(&u_nodal);
        for ((ri, bi), mi) in r.iter_mut().zip(&btp).zip(&mut mload) {
            *ri -= *bi + mu * *mi;
        }
        let traction = assemble::sum_body_rows(space, &r);
        let psihat = space.rigid_part(mode);
        let mut num = 0.0;
        let mut hatn = 0.0;
        for c in 0..d {
            num += (mu * psihat[c] - ops.varpi * traction[c]).powi(2);
            hatn += psihat[c] * psihat[c];
        }
        out.push(num.sqrt() / (mu * hatn.sqrt() + 1.0));
    }
    out
}

/// Verification report for a basis against an operator set.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ModeVerification {
    pub gram_residual: f64,
    pub stiffness_diag_residual: f64,
    pub max_pde_residual: f64,
    pub sorted: bool,
    pub positive: bool,
    pub gram_pass: bool,
    pub stiffness_pass: bool,
    pub pde_pass: bool,
    pub all_pass: bool,
}

pub struct VerifyThresholds {
    pub gram: f64,
    pub stiffness_rel: f64,
    pub pde_rel: f64,
}

impl Default for VerifyThresholds {
    fn default() -> Self {
        VerifyThresholds { gram: 1e-10, stiffness_rel: 1e-8, pde_rel: 1e-8 }
    }
}

pub fn verify_modes(
    space: &FsiSpace,
    ops: &OperatorSet,
    basis: &ModalBasis,
    thresholds: &VerifyThresholds,
) -> ModeVerification {
    let mask = space.outer_mask();
    let id_p = DofMask::identity(ops.div.nrows);
    let a_m = ops.visc.masked(&mask, &mask);
    let mw_m = ops.mass_weighted.masked(&mask, &mask);
    let b_m = ops.div.masked(&id_p, &mask);
    let n = basis.count;
    let mut gram_residual: f64 = 0.0;
    let mut stiff_res: f64 = 0.0;
    let mut pde_res: f64 = 0.0;
    let modes_m: Vec<Vec<f64>> = basis.modes.iter().map(|m| mask.restrict(m)).collect();
    let proj = SaddleSolver::new(&mw_m, &b_m, 1.0, Some(&ops.pressure_gauge)).ok();
    for i in 0..n {
        let mwi = mw_m.apply(&modes_m[i]);
        let ai = a_m.apply(&modes_m[i]);
        for j in 0..n {
            let g = linalg::dot(&modes_m[j], &mwi);
            let s = linalg::dot(&modes_m[j], &ai);
            let (gt, st) = if i == j { (1.0, basis.eigenvalues[i]) } else { (0.0, 0.0) };
            gram_residual = gram_residual.max((g - gt).abs());
            stiff_res = stiff_res.max((s - st).abs() / basis.eigenvalues[i].abs().max(1e-300));
        }
        // PDE residual A psi - mu M psi, projected onto the solenoidal
        // subspace (the pressure-range part is not an error)
        let mut r = ai.clone();
        linalg::axpy(&mut r, -basis.eigenvalues[i], &mwi);
        let rel = match &proj {
            Some(sad) => {
                let (v, _) = sad.solve(&r, &vec![0.0; ops.div.nrows]);
                let vn = linalg::dot(&v, &mw_m.apply(&v)).sqrt();
                vn / (1.0 + basis.eigenvalues[i].abs())
            }
            None => linalg::norm2(&r) / (1.0 + basis.eigenvalues[i].abs()),
        };
        pde_res = pde_res.max(rel);
    }
    let sorted = basis
        .eigenvalues
        .windows(2)
        .all(|w| w[0] <= w[1] * (1.0 + 1e-14));
    let positive = basis.eigenvalues.iter().all(|&m| m > 0.0);
    let gram_pass = gram_residual < thresholds.gram;
    let stiffness_pass = stiff_res < thresholds.stiffness_rel;
    let pde_pass = pde_res < thresholds.pde_rel.max(1e-6);
    ModeVerification {
        gram_residual,
        stiffness_diag_residual: stiff_res,
        max_pde_residual: pde_res,
        sorted,
        positive,
        gram_pass,
        stiffness_pass,
        pde_pass,
        all_pass: gram_pass && stiffness_pass && pde_pass && sorted && positive,
    }
}
