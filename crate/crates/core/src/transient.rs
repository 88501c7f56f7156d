//! Perturbation dynamics around a steady state, integrated two ways: the
//! eigenbasis Galerkin ODE system and a monolithic backward-Euler scheme on
//! the full saddle system with the rigid/spring unknowns. Backward Euler is
//! chosen so the discrete energy inequality carries a definite sign; all
//! advection is skew-symmetrized, so the quadratic terms cancel from the
//! energy balance exactly.

use crate::assemble::{self, OperatorSet};
use crate::error::{CoreError, Result};
use crate::linalg::{self, SaddleSolver};
use crate::space::{DofMask, FsiSpace, NondimParams};
use crate::thresholds::{ThresholdResult, ThresholdValue};
use faer::prelude::*;
use faer::Mat;

pub const TENSOR_N_CAP: usize = 200;

/// Galerkin coefficients plus the spring elongation.
#[derive(Debug, Clone)]
pub struct GalerkinState {
    pub c: Vec<f64>,
    pub chi: [f64; 3],
    pub t: f64,
}

/// Reduced dynamics on the modal basis:
///   cdot_i = sum_k L_ik c_k - lambda sum_km c_k c_m Q_k[i,m]
///            - (omega_n^2/varpi) chi . psihat_i,
///   chidot = sigma = sum_k c_k psihat_k.
pub struct OdeSystem {
    pub n: usize,
    pub dim: usize,
    pub lambda: f64,
    pub omega_n_sq: f64,
    pub varpi: f64,
    pub mu: Vec<f64>,
    /// N x N row-major: lambda (stream - advection(u0) - grad-weight) - diag(mu)
    pub linear: Vec<f64>,
    /// per-k N x N row-major blocks Q_k[i,m] = c(psihat_k - psi_k; psi_m, psi_i)
    pub quad: Vec<Vec<f64>>,
    pub rigid_parts: Vec<[f64; 3]>,
    /// modal Gram of the full-gradient form, for ||grad u||^2 diagnostics
    pub grad_gram: Vec<f64>,
}

impl OdeSystem {
    pub fn sigma(&self, c: &[f64]) -> [f64; 3] {
        let mut s = [0.0; 3];
        for (ck, hat) in c.iter().zip(&self.rigid_parts) {
            for a in 0..self.dim {
                s[a] += ck * hat[a];
            }
        }
        s
    }

    pub fn grad_sq(&self, c: &[f64]) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += c[i] * self.grad_gram[i * n + j] * c[j];
            }
        }
        acc
    }

    /// right-hand side F(c, chi)
    pub fn rhs(&self, c: &[f64], chi: &[f64; 3]) -> Vec<f64> {
        let n = self.n;
        let mut f = vec![0.0; n];
        for i in 0..n {
            let mut v = 0.0;
            for k in 0..n {
                v += self.linear[i * n + k] * c[k];
            }
            f[i] = v;
        }
        if self.lambda != 0.0 {
            for k in 0..n {
                if c[k] == 0.0 {
                    continue;
                }
                let qk = &self.quad[k];
                for i in 0..n {
                    let mut v = 0.0;
                    for m in 0..n {
                        v += qk[i * n + m] * c[m];
                    }
                    f[i] -= self.lambda * c[k] * v;
                }
            }
        }
        let s = self.omega_n_sq / self.varpi;
        for i in 0..n {
            let mut v = 0.0;
            for a in 0..self.dim {
                v += chi[a] * self.rigid_parts[i][a];
            }
            f[i] -= s * v;
        }
        f
    }

    /// energy contribution of the quadratic tensor at coefficients c
    /// (identically zero for the skew-assembled tensor, up to roundoff)
    pub fn quadratic_energy_rate(&self, c: &[f64]) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for k in 0..n {
            let qk = &self.quad[k];
            let mut cqc = 0.0;
            for i in 0..n {
                for m in 0..n {
                    cqc += c[i] * qk[i * n + m] * c[m];
                }
            }
            acc += c[k] * cqc;
        }
        -self.lambda * acc
    }
}

/// Project initial data onto the modal basis:
/// c_i(0) = (u0, psi_i) + varpi^{-1} chi1 . psihat_i, chi(0) = chi0.
pub fn project_initial_data(
    space: &FsiSpace,
    ops: &OperatorSet,
    basis: &crate::modal::ModalBasis,
    u0_nodal: &[f64],
    chi0: [f64; 3],
    chi1: [f64; 3],
) -> Result<GalerkinState> {
    if u0_nodal.len() != space.n_nodes * space.dim {
        return Err(CoreError::BasisMismatch(format!(
            "initial field has {} nodal values, space wants {}",
            u0_nodal.len(),
            space.n_nodes * space.dim
        )));
    }
    let m_u0 = ops.full.mass.apply(u0_nodal);
    let mut c = Vec::with_capacity(basis.count);
    for mode in &basis.modes {
        let psi_nodal = space.full_nodal_values(mode, None);
        let fluid = linalg::dot(&psi_nodal, &m_u0);
        let hat = space.rigid_part(mode);
        let mut rig = 0.0;
        for a in 0..space.dim {
            rig += chi1[a] * hat[a];
        }
        c.push(fluid + rig / ops.varpi);
    }
    Ok(GalerkinState { c, chi: chi0, t: 0.0 })
}

/// Assemble the ODE tensors from the basis and a base flow. `u0_nodal` is the
/// steady velocity as nodal values (None for a zero base flow).
pub fn assemble_ode_tensors(
    space: &FsiSpace,
    basis: &crate::modal::ModalBasis,
    u0_nodal: Option<&[f64]>,
    params: &NondimParams,
) -> Result<OdeSystem> {
    let n = basis.count;
    if n > TENSOR_N_CAP {
        return Err(CoreError::TensorTooLarge { n, cap: TENSOR_N_CAP });
    }
    let ops = assemble::assemble(space, params)?;
    let lambda = params.lambda;

    // streaming, advection-by-u0 and the grad-weight blocks, projected
    let mut lin_op = ops.stream.clone();
    if let Some(u0) = u0_nodal {
        let n_adv = assemble::reduce_mat(space, &assemble::advection_full(space, u0)?);
        let w_rel = ops.relative_grad_weight_reduced(space, u0)?;
        lin_op.add_scaled(&n_adv, -1.0);
        lin_op.add_scaled(&w_rel, -1.0);
    }
    let mut linear = vec![0.0; n * n];
    for k in 0..n {
        let lk = lin_op.apply(&basis.modes[k]);
        for i in 0..n {
            linear[i * n + k] = lambda * linalg::dot(&basis.modes[i], &lk);
        }
        linear[k * n + k] -= basis.eigenvalues[k];
    }

    // quadratic tensor: transport by (psihat_k - psi_k)
    let d = space.dim;
    let mut quad = Vec::with_capacity(n);
    for k in 0..n {
        let hat = space.rigid_part(&basis.modes[k]);
        let psi_nodal = space.full_nodal_values(&basis.modes[k], None);
        let mut a_nodal = vec![0.0; space.n_nodes * d];
        for nn in 0..space.n_nodes {
            for c in 0..d {
                a_nodal[nn * d + c] = hat[c] - psi_nodal[nn * d + c];
            }
        }
        let nmat = assemble::reduce_mat(space, &assemble::advection_full(space, &a_nodal)?);
        let mut qk = vec![0.0; n * n];
        for m in 0..n {
            let nm = nmat.apply(&basis.modes[m]);
            for i in 0..n {
                qk[i * n + m] = linalg::dot(&basis.modes[i], &nm);
            }
        }
        quad.push(qk);
    }

    let mut grad_gram = vec![0.0; n * n];
    for j in 0..n {
        let gj = ops.grad_stiff.apply(&basis.modes[j]);
        for i in 0..n {
            grad_gram[i * n + j] = linalg::dot(&basis.modes[i], &gj);
        }
    }

    Ok(OdeSystem {
        n,
        dim: d,
        lambda,
        omega_n_sq: params.omega_n_sq,
        varpi: params.varpi,
        mu: basis.eigenvalues.clone(),
        linear,
        quad,
        rigid_parts: basis.modes.iter().map(|m| space.rigid_part(m)).collect(),
        grad_gram,
    })
}

/// Per-step diagnostics shared by both integrators.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct StepDiag {
    pub t: f64,
    /// E = ||u||^2 + varpi^{-1}(|sigma|^2 + omega_n^2 |chi|^2)
    pub energy: f64,
    pub u_l2_sq: f64,
    pub grad_sq: f64,
    pub sigma_norm: f64,
    pub chi_norm: f64,
    pub dt_eff: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub steps: Vec<StepDiag>,
    pub final_chi: [f64; 3],
    pub final_sigma: [f64; 3],
    /// Galerkin: final coefficients; monolithic: final reduced velocity
    pub final_state: Vec<f64>,
    /// (t, reduced velocity) pairs when snapshotting was requested
    pub snapshots: Vec<(f64, Vec<f64>)>,
}

impl Trajectory {
    pub fn initial(&self) -> &StepDiag {
        &self.steps[0]
    }

    pub fn last(&self) -> &StepDiag {
        self.steps.last().expect("nonempty trajectory")
    }
}

fn galerkin_diag(sys: &OdeSystem, st: &GalerkinState, dt_eff: f64) -> StepDiag {
    let c2: f64 = st.c.iter().map(|v| v * v).sum();
    let sigma = sys.sigma(&st.c);
    let s2: f64 = sigma.iter().map(|v| v * v).sum();
    let chi2: f64 = st.chi.iter().map(|v| v * v).sum();
    // <u,u> + varpi^{-1}|sigma|^2 = |c|^2 by orthonormality
    let u_l2_sq = c2 - s2 / sys.varpi;
    let energy = c2 + sys.omega_n_sq * chi2 / sys.varpi;
    StepDiag {
        t: st.t,
        energy,
        u_l2_sq,
        grad_sq: sys.grad_sq(&st.c),
        sigma_norm: s2.sqrt(),
        chi_norm: chi2.sqrt(),
        dt_eff,
    }
}

/// Backward-Euler integration of the Galerkin system with Newton in each
/// step and up to 6 step halvings on in-step failure.
pub fn integrate_galerkin(
    sys: &OdeSystem,
    init: &GalerkinState,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    if dt <= 0.0 || t_end <= 0.0 {
        return Err(CoreError::Precondition("dt and t_end must be positive".into()));
    }
    let n = sys.n;
    let d = sys.dim;
    let mut st = init.clone();
    let mut steps = vec![galerkin_diag(sys, &st, dt)];
    let n_steps = (t_end / dt).round().max(1.0) as usize;

    let newton_step = |st: &GalerkinState, h: f64| -> Result<GalerkinState> {
        let mut c = st.c.clone();
        let mut chi = st.chi;
        for _ in 0..30 {
            let f = sys.rhs(&c, &chi);
            let sig = sys.sigma(&c);
            // residuals
            let mut res = vec![0.0; n + d];
            let mut rn = 0.0f64;
            for i in 0..n {
                res[i] = c[i] - st.c[i] - h * f[i];
                rn = rn.max(res[i].abs());
            }
            for a in 0..d {
                res[n + a] = chi[a] - st.chi[a] - h * sig[a];
                rn = rn.max(res[n + a].abs());
            }
            let scale: f64 = 1.0 + c.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if rn <= 1e-13 * scale {
                return Ok(GalerkinState { c, chi, t: st.t + h });
            }
            // dense Jacobian
            let mut jac = Mat::<f64>::zeros(n + d, n + d);
            for i in 0..n {
                for j in 0..n {
                    let mut v = sys.linear[i * n + j];
                    if sys.lambda != 0.0 {
                        // d/dc_j of -lambda sum_km c_k c_m Q_k[i,m]
                        let mut acc = 0.0;
                        for m in 0..n {
                            acc += sys.quad[j][i * n + m] * c[m];
                        }
                        for k in 0..n {
                            acc += c[k] * sys.quad[k][i * n + j];
                        }
                        v -= sys.lambda * acc;
                    }
                    jac[(i, j)] = f64::from(u8::from(i == j)) - h * v;
                }
                for a in 0..d {
                    jac[(i, n + a)] = h * sys.omega_n_sq / sys.varpi * sys.rigid_parts[i][a];
                }
            }
            for a in 0..d {
                for j in 0..n {
                    jac[(n + a, j)] = -h * sys.rigid_parts[j][a];
                }
                jac[(n + a, n + a)] = 1.0;
            }
            let rhs = Mat::<f64>::from_fn(n + d, 1, |i, _| -res[i]);
            let sol = jac.partial_piv_lu().solve(&rhs);
            for i in 0..n {
                c[i] += sol[(i, 0)];
            }
            for a in 0..d {
                chi[a] += sol[(n + a, 0)];
            }
        }
        Err(CoreError::StepperDiverged { t: st.t })
    };

    for _ in 0..n_steps {
        advance(&mut st, dt, 0, &newton_step, &mut |s, h| {
            steps.push(galerkin_diag(sys, s, h));
        })?;
    }
    let sigma = sys.sigma(&st.c);
    Ok(Trajectory {
        steps,
        final_chi: st.chi,
        final_sigma: sigma,
        final_state: st.c,
        snapshots: Vec::new(),
    })
}

/// Recursive step with halving (max 6 levels).
fn advance<S, F, R>(st: &mut S, dt: f64, depth: usize, step: &F, record: &mut R) -> Result<()>
where
    S: Clone,
    F: Fn(&S, f64) -> Result<S>,
    R: FnMut(&S, f64),
{
    match step(st, dt) {
        Ok(next) => {
            *st = next;
            record(st, dt);
            Ok(())
        }
        Err(CoreError::StepperDiverged { .. } | CoreError::NewtonDiverged { .. }) if depth < 6 => {
            advance(st, 0.5 * dt, depth + 1, step, record)?;
            advance(st, 0.5 * dt, depth + 1, step, record)
        }
        Err(e) => Err(e),
    }
}

/// Options for the monolithic integrator. The forcing hook supplies a
/// reduced load vector per time (used only by verification tests).
pub struct MonolithicSetup<'a> {
    pub newton_tol: f64,
    pub max_newton: usize,
    pub forcing: Option<&'a dyn Fn(f64) -> Vec<f64>>,
    /// keep a copy of the reduced field every k top-level steps (0 = never)
    pub snapshot_every: usize,
}

impl Default for MonolithicSetup<'_> {
    fn default() -> Self {
        MonolithicSetup { newton_tol: 1e-11, max_newton: 20, forcing: None, snapshot_every: 0 }
    }
}

#[derive(Clone)]
struct MonoState {
    x: Vec<f64>,
    chi: [f64; 3],
    t: f64,
}

/// Fully implicit backward Euler on the coupled saddle system. `u0_nodal` is
/// the steady base flow (None = zero); the initial perturbation is given by
/// `u_init` (reduced unpinned coefficients, its rigid part is overwritten
/// with chi1).
#[allow(clippy::too_many_arguments)]
pub fn integrate_monolithic(
    space: &FsiSpace,
    ops: &OperatorSet,
    u0_nodal: Option<&[f64]>,
    params: &NondimParams,
    u_init: &[f64],
    chi0: [f64; 3],
    chi1: [f64; 3],
    t_end: f64,
    dt: f64,
    setup: &MonolithicSetup,
) -> Result<Trajectory> {
    if dt <= 0.0 || t_end <= 0.0 {
        return Err(CoreError::Precondition("dt and t_end must be positive".into()));
    }
    if space.pinned {
        return Err(CoreError::Precondition("monolithic scheme needs the unpinned space".into()));
    }
    let d = space.dim;
    let lambda = params.lambda;
    let mask = space.outer_mask();
    let id_p = DofMask::identity(ops.div.nrows);

    // constant blocks
    let mw_m = ops.mass_weighted.masked(&mask, &mask);
    let mass_m = ops.mass.masked(&mask, &mask);
    let grad_m = ops.grad_stiff.masked(&mask, &mask);
    let b_m = ops.div.masked(&id_p, &mask);
    let mut lin = ops.visc.masked(&mask, &mask);
    lin.add_scaled(&ops.stream.masked(&mask, &mask), -lambda);
    if let Some(u0) = u0_nodal {
        let n_adv = assemble::reduce_mat(space, &assemble::advection_full(space, u0)?);
        let w_rel = ops.relative_grad_weight_reduced(space, u0)?;
        lin.add_scaled(&n_adv.masked(&mask, &mask), lambda);
        lin.add_scaled(&w_rel.masked(&mask, &mask), lambda);
    }
    // spring coupling after chi elimination: chi1 = chi0 + dt sigma1
    let off = space.rigid_offset();
    let rigid_rows: Vec<i64> = (0..d).map(|c| mask.map[off + c]).collect();

    let mut x = mask.restrict(u_init);
    for (c, &rr) in rigid_rows.iter().enumerate() {
        if rr >= 0 {
            x[rr as usize] = chi1[c];
        }
    }
    let mut state = MonoState { x, chi: chi0, t: 0.0 };

    let diag = |st: &MonoState, h: f64| -> StepDiag {
        let u_l2 = linalg::dot(&st.x, &mass_m.apply(&st.x));
        let g2 = linalg::dot(&st.x, &grad_m.apply(&st.x));
        let mut s2 = 0.0;
        let mut sigma = [0.0; 3];
        for (c, &rr) in rigid_rows.iter().enumerate() {
            if rr >= 0 {
                sigma[c] = st.x[rr as usize];
                s2 += sigma[c] * sigma[c];
            }
        }
        let chi2: f64 = st.chi.iter().map(|v| v * v).sum();
        StepDiag {
            t: st.t,
            energy: u_l2 + (s2 + params.omega_n_sq * chi2) / params.varpi,
            u_l2_sq: u_l2,
            grad_sq: g2,
            sigma_norm: s2.sqrt(),
            chi_norm: chi2.sqrt(),
            dt_eff: h,
        }
    };


    let step = |st: &MonoState, h: f64| -> Result<MonoState> {
        let mut x1 = st.x.clone();
        let mut p1 = vec![0.0; ops.div.nrows];
        let force = setup.forcing.map(|f| mask.restrict(&f(st.t + h)));
        for _ in 0..setup.max_newton {
            // residual
            let x1_full = mask.extend(&x1);
            let u_nodal = space.full_nodal_values(&x1_full, None);
            let mut sigma1 = [0.0; 3];
            for (c, &rr) in rigid_rows.iter().enumerate() {
                if rr >= 0 {
                    sigma1[c] = x1[rr as usize];
                }
            }
            let chi1v: [f64; 3] = [
                st.chi[0] + h * sigma1[0],
                st.chi[1] + h * sigma1[1],
                st.chi[2] + h * sigma1[2],
            ];
            // relative transport field uhat - u, exactly nodal
            let mut a_nodal = vec![0.0; space.n_nodes * d];
            let hat = space.rigid_part(&x1_full);
            for nn in 0..space.n_nodes {
                for c in 0..d {
                    a_nodal[nn * d + c] = hat[c] - u_nodal[nn * d + c];
                }
            }
            let n_rel =
                assemble::reduce_mat(space, &assemble::advection_full(space, &a_nodal)?)
                    .masked(&mask, &mask);

            let mut r = mw_m.apply(&x1);
            let mwx0 = mw_m.apply(&st.x);
            for (ri, m0) in r.iter_mut().zip(&mwx0) {
                *ri = (*ri - m0) / h;
            }
            linalg::axpy(&mut r, 1.0, &lin.apply(&x1));
            linalg::axpy(&mut r, lambda, &n_rel.apply(&x1));
            linalg::axpy(&mut r, -1.0, &b_m.apply_transpose(&p1));
            for (c, &rr) in rigid_rows.iter().enumerate() {
                if rr >= 0 {
                    r[rr as usize] += params.omega_n_sq / params.varpi * chi1v[c];
                }
            }
            if let Some(fv) = &force {
                linalg::axpy(&mut r, -1.0, fv);
            }
            let g = b_m.apply(&x1);
            let rn = (linalg::dot(&r, &r) + linalg::dot(&g, &g)).sqrt();
            let scale = 1.0 + linalg::norm2(&x1);
            if rn <= setup.newton_tol * scale {
                return Ok(MonoState { x: x1, chi: chi1v, t: st.t + h });
            }

            // Jacobian: Mw/h + lin + lambda (N(a) + d/dx of transport slot)
            // + dt spring on the rigid block
            let t_deriv = assemble::relative_transport_jacobian_reduced(space, &u_nodal)?
                .masked(&mask, &mask);
            let mut jac = mw_m.scaled(1.0 / h);
            jac.add_scaled(&lin, 1.0);
            jac.add_scaled(&n_rel, lambda);
            jac.add_scaled(&t_deriv, lambda);
            for &rr in rigid_rows.iter() {
                if rr >= 0 {
                    jac.push(rr as usize, rr as usize, h * params.omega_n_sq / params.varpi);
                }
            }
            let saddle = SaddleSolver::new(&jac, &b_m, -1.0, Some(&ops.pressure_gauge))?;
            let (dx, dp) = saddle.solve(
                &r.iter().map(|v| -v).collect::<Vec<f64>>(),
                &g.iter().map(|v| -v).collect::<Vec<f64>>(),
            );
            linalg::axpy(&mut x1, 1.0, &dx);
            linalg::axpy(&mut p1, 1.0, &dp);
        }
        Err(CoreError::StepperDiverged { t: st.t })
    };

    let mut steps = vec![diag(&state, dt)];
    let mut snapshots: Vec<(f64, Vec<f64>)> = Vec::new();
    if setup.snapshot_every > 0 {
        snapshots.push((0.0, mask.extend(&state.x)));
    }
    let n_steps = (t_end / dt).round().max(1.0) as usize;
    for k in 0..n_steps {
        advance(&mut state, dt, 0, &step, &mut |s: &MonoState, h| {
            steps.push(diag(s, h));
        })?;
        if setup.snapshot_every > 0 && (k + 1) % setup.snapshot_every == 0 {
            snapshots.push((state.t, mask.extend(&state.x)));
        }
    }
    let sigma = {
        let mut s = [0.0; 3];
        for (c, &rr) in rigid_rows.iter().enumerate() {
            if rr >= 0 {
                s[c] = state.x[rr as usize];
            }
        }
        s
    };
    Ok(Trajectory {
        steps,
        final_chi: state.chi,
        final_sigma: sigma,
        final_state: mask.extend(&state.x),
        snapshots,
    })
}

/// Per-step verdict of the discrete energy inequality and the decay metrics.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EnergyReport {
    pub gamma: f64,
    /// discrete defect bound of ||grad u|| = sqrt(2)||D(u)|| on the
    /// solenoidal subspace; the per-step slack is delta_h * ||grad u_k||^2
    pub delta_h: f64,
    pub violations: usize,
    pub max_violation: f64,
    pub dissipation_integral: f64,
    pub initial_metric: f64,
    pub final_metric: f64,
    pub decay_ratio: f64,
    pub monotone_energy: bool,
    pub tail_oscillation: bool,
    pub per_step_checked: usize,
}

/// Check (1/2) dE/dt + gamma ||grad u||^2 <= slack per step, with
/// gamma = 1 - lambda/lambda2, and the tail no-oscillation property.
pub fn energy_monitor(
    traj: &Trajectory,
    lambda: f64,
    lambda2: &ThresholdResult,
    delta_h: f64,
) -> Result<EnergyReport> {
    let l2 = match lambda2.value {
        ThresholdValue::Finite(v) => v,
        ThresholdValue::Infinite => f64::INFINITY,
    };
    let gamma = 1.0 - lambda / l2;
    let e0 = traj.initial().energy;
    let mut violations = 0usize;
    let mut max_violation = 0.0f64;
    let mut diss = 0.0;
    let mut monotone = true;
    for w in traj.steps.windows(2) {
        let (prev, cur) = (&w[0], &w[1]);
        let h = cur.dt_eff;
        let v = 0.5 * (cur.energy - prev.energy) / h + gamma * cur.grad_sq;
        let slack = delta_h.max(0.0) * cur.grad_sq + 1e-13 * e0.max(1e-300);
        if v > slack {
            violations += 1;
            max_violation = max_violation.max(v - slack);
        }
        if cur.energy > prev.energy + 1e-10 * e0 {
            monotone = false;
        }
        diss += h * cur.grad_sq;
    }
    // tail no-oscillation: on [T/2, T] no local minimum of E is followed by a
    // rise above 1.01x that minimum
    let t_end = traj.last().t;
    let tail: Vec<&StepDiag> = traj.steps.iter().filter(|s| s.t >= 0.5 * t_end).collect();
    let mut tail_oscillation = false;
    for i in 1..tail.len().saturating_sub(1) {
        let e = tail[i].energy;
        if e < tail[i - 1].energy && e < tail[i + 1].energy {
            let later_max = tail[i + 1..].iter().map(|s| s.energy).fold(f64::MIN, f64::max);
            if later_max > 1.01 * e {
                tail_oscillation = true;
                break;
            }
        }
    }
    let metric = |s: &StepDiag| s.grad_sq.sqrt() + s.chi_norm + s.sigma_norm;
    let initial_metric = metric(traj.initial());
    let final_metric = metric(traj.last());
    Ok(EnergyReport {
        gamma,
        delta_h,
        violations,
        max_violation,
        dissipation_integral: diss,
        initial_metric,
        final_metric,
        decay_ratio: final_metric / initial_metric.max(1e-300),
        monotone_energy: monotone,
        tail_oscillation,
        per_step_checked: traj.steps.len().saturating_sub(1),
    })
}

/// Discrete defect bound delta_h = 1 - theta_min(A_visc, G) on the
/// solenoidal outer-Dirichlet subspace; the slack in `energy_monitor`.
pub fn strain_identity_defect(space: &FsiSpace, ops: &OperatorSet) -> Result<f64> {
    let mask = space.outer_mask();
    let id_p = DofMask::identity(ops.div.nrows);
    let a_m = ops.visc.masked(&mask, &mask);
    let g_m = ops.grad_stiff.masked(&mask, &mask);
    let b_m = ops.div.masked(&id_p, &mask);
    let eig = linalg::sym_pencil_extreme(
        &a_m,
        &g_m,
        &b_m,
        Some(&ops.pressure_gauge),
        1,
        linalg::Extreme::Smallest,
        &linalg::EigOpts::default(),
        None,
    )?;
    Ok((1.0 - eig.values[0]).max(0.0))
}

/// M = 3 max{1, 2a, 2b} and the largest delta with 2 + M d + (M d)^alpha < 3M.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GronwallBound {
    pub m: f64,
    pub delta_max: f64,
}

pub fn gronwall_bound(a_sup: f64, b_sup: f64, alpha: f64) -> Result<GronwallBound> {
    if !(a_sup.is_finite() && b_sup.is_finite()) || a_sup < 0.0 || b_sup < 0.0 || alpha < 1.0 {
        return Err(CoreError::Precondition(
            "need finite nonnegative a, b and alpha >= 1".into(),
        ));
    }
    let m = 3.0 * 1.0f64.max(2.0 * a_sup).max(2.0 * b_sup);
    // g(d) = 2 + M d + (M d)^alpha - 3M is increasing; bracket then bisect
    let g = |d: f64| 2.0 + m * d + (m * d).powf(alpha) - 3.0 * m;
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while g(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(CoreError::Precondition("gronwall bisection overflow".into()));
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-10 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(GronwallBound { m, delta_max: 0.5 * (lo + hi) })
}

/// Initial-data scale from the smallness condition:
/// eps^2 = min{ delta, gamma delta^2 min{1, varpi/(1+omega_n^2)} }.
pub fn initial_scale_from_gronwall(
    gamma: f64,
    varpi: f64,
    omega_n_sq: f64,
    bound: &GronwallBound,
) -> f64 {
    let d = bound.delta_max;
    let cap = (varpi / (1.0 + omega_n_sq)).min(1.0);
    (d.min(gamma * d * d * cap)).max(0.0).sqrt()
}

/// Trajectory CSV: t, E, grad norm, |chi|, |sigma|, inequality violation.
pub fn trajectory_csv(traj: &Trajectory, report: Option<&EnergyReport>) -> String {
    let mut s = String::from("t,energy,grad_norm,chi,sigma,ineq_violation\n");
    let (gamma, delta_h) = report.map(|r| (r.gamma, r.delta_h)).unwrap_or((0.0, 0.0));
    let e0 = traj.initial().energy;
    for (k, w) in traj.steps.iter().enumerate() {
        let viol = if k == 0 || report.is_none() {
            0.0
        } else {
            let prev = &traj.steps[k - 1];
            let v = 0.5 * (w.energy - prev.energy) / w.dt_eff + gamma * w.grad_sq;
            let slack = delta_h * w.grad_sq + 1e-13 * e0.max(1e-300);
            (v - slack).max(0.0)
        };
        s.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            w.t,
            w.energy,
            w.grad_sq.sqrt(),
            w.chi_norm,
            w.sigma_norm,
            viol
        ));
    }
    s
}
