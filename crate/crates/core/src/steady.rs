//! Steady equilibria of the coupled problem on the truncated annulus:
//! damped Newton with analytic Jacobians on the pinned space (the body
//! condition u = e1 enters through a lifting), natural continuation in the
//! Reynolds number with step bisection, boundary traction in its
//! volume-consistent form, and Richardson extrapolation in the truncation
//! radius.

use crate::assemble::{self, OperatorSet};
use crate::error::{CoreError, Result};
use crate::linalg::{self, CooMat, SaddleSolver};
use crate::space::{DofMask, FsiSpace, NondimParams};

/// A converged steady state at one Reynolds number.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub lambda: f64,
    /// pinned-space coefficients of the deviation from the body lifting
    /// (full pinned layout; outer dofs are zero)
    pub z: Vec<f64>,
    /// P1 pressure, mean zero
    pub pressure: Vec<f64>,
    /// spring elongation balancing the traction
    pub chi0: [f64; 3],
    /// oint T(u0, p0) . n  (n directed into the body): [drag, lift, ...]
    pub traction: [f64; 3],
    pub residual: f64,
    pub newton_iters: usize,
    pub outer_radius: f64,
    pub mesh_size: f64,
}

impl SteadyState {
    pub fn drag(&self) -> f64 {
        self.traction[0]
    }

    pub fn lift(&self) -> f64 {
        self.traction[1]
    }

    /// Full nodal velocity values including the body lifting.
    pub fn u_nodal(&self, space: &FsiSpace, setup: &SteadySetup) -> Vec<f64> {
        space.full_nodal_values(&self.z, Some(setup.body_velocity))
    }
}

/// Solver options; `forcing` and `body_velocity` form the verification hook
/// for manufactured solutions (the physical problem has no body force and
/// carries u = e1 on the body).
pub struct SteadySetup<'a> {
    pub tol: f64,
    pub max_iter: usize,
    pub body_velocity: [f64; 3],
    pub forcing: Option<&'a dyn Fn(&[f64], &mut [f64])>,
}

impl Default for SteadySetup<'_> {
    fn default() -> Self {
        SteadySetup { tol: 1e-10, max_iter: 25, body_velocity: [1.0, 0.0, 0.0], forcing: None }
    }
}

pub fn solve_steady(
    space: &FsiSpace,
    params: &NondimParams,
    init: Option<&SteadyState>,
    setup: &SteadySetup,
) -> Result<SteadyState> {
    params.validate()?;
    let lambda = params.lambda;
    let work = SteadyWorkOwned::new(space, params, setup)?;
    work.solve(lambda, init, setup)
}

/// Internal solver state with the masked operators and factorizable blocks.
pub struct SteadyWorkOwned<'s> {
    space: &'s FsiSpace,
    pub ops: OperatorSet,
    mask: DofMask,
    f_full: Vec<f64>,
    visc_m: CooMat,
    stream_m: CooMat,
    div_m: CooMat,
    bv: [f64; 3],
}

impl<'s> SteadyWorkOwned<'s> {
    pub fn new(space: &'s FsiSpace, params: &NondimParams, setup: &SteadySetup) -> Result<Self> {
        if !space.pinned {
            return Err(CoreError::Precondition(
                "steady solves run on the pinned space; rigid motion enters through chi0".into(),
            ));
        }
        let ops = assemble::assemble(space, params)?;
        let mask = space.outer_mask();
        let f_full = match setup.forcing {
            Some(f) => assemble::forcing_vector_full(space, f)?,
            None => vec![0.0; space.n_nodes * space.dim],
        };
        let id_p = DofMask::identity(ops.div.nrows);
        let visc_m = ops.visc.masked(&mask, &mask);
        let stream_m = ops.stream.masked(&mask, &mask);
        let div_m = ops.div.masked(&id_p, &mask);
        Ok(SteadyWorkOwned {
            space,
            ops,
            mask,
            f_full,
            visc_m,
            stream_m,
            div_m,
            bv: setup.body_velocity,
        })
    }

    fn full_residual(&self, lambda: f64, x_nodal: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        let nmat = assemble::advection_full(self.space, x_nodal)?;
        let mut r = self.ops.full.visc.apply(x_nodal);
        let btp = self.ops.full.div.apply_transpose(p);
        let d1x = self.ops.full.stream.apply(x_nodal);
        let nx = nmat.apply(x_nodal);
        for i in 0..r.len() {
            r[i] += -btp[i] - lambda * d1x[i] + lambda * nx[i] - self.f_full[i];
        }
        Ok(r)
    }

    fn residual_norm(&self, lambda: f64, z_m: &[f64], p: &[f64]) -> Result<f64> {
        let z = self.mask.extend(z_m);
        let x_nodal = self.space.full_nodal_values(&z, Some(self.bv));
        let r_full = self.full_residual(lambda, &x_nodal, p)?;
        let r_red = self.mask.restrict(&self.space.reduce_nodal_vector(&r_full));
        let g = self.ops.full.div.apply(&x_nodal);
        Ok((linalg::dot(&r_red, &r_red) + linalg::dot(&g, &g)).sqrt())
    }

    pub fn solve(
        &self,
        lambda: f64,
        init: Option<&SteadyState>,
        setup: &SteadySetup,
    ) -> Result<SteadyState> {
        let n_m = self.mask.n_reduced;
        let n_p = self.ops.div.nrows;
        let mut z_m = vec![0.0; n_m];
        let mut p = vec![0.0; n_p];
        if let Some(prev) = init {
            if prev.z.len() != self.space.n_vel || prev.pressure.len() != n_p {
                return Err(CoreError::Precondition(
                    "warm start comes from an incompatible space".into(),
                ));
            }
            z_m = self.mask.restrict(&prev.z);
            p = prev.pressure.clone();
        }

        let mut phi = self.residual_norm(lambda, &z_m, &p)?;
        let mut iters = 0usize;
        while phi > setup.tol {
            if iters >= setup.max_iter {
                return Err(CoreError::NewtonDiverged { iterations: iters, last_residual: phi });
            }
            // Jacobian at the current iterate
            let z = self.mask.extend(&z_m);
            let x_nodal = self.space.full_nodal_values(&z, Some(self.bv));
            let n_full = assemble::advection_full(self.space, &x_nodal)?;
            let t_full = assemble::transport_jacobian_full(self.space, &x_nodal)?;
            let mut jac = self.visc_m.clone();
            jac.add_scaled(&self.stream_m, -lambda);
            let n_red = assemble::reduce_mat(self.space, &n_full).masked(&self.mask, &self.mask);
            let t_red = assemble::reduce_mat(self.space, &t_full).masked(&self.mask, &self.mask);
            jac.add_scaled(&n_red, lambda);
            jac.add_scaled(&t_red, lambda);
            let saddle = SaddleSolver::new(&jac, &self.div_m, -1.0, Some(&self.ops.pressure_gauge))?;

            let r_full = self.full_residual(lambda, &x_nodal, &p)?;
            let r_red = self.mask.restrict(&self.space.reduce_nodal_vector(&r_full));
            let g = self.ops.full.div.apply(&x_nodal);
            let (dz, dp) = saddle.solve(
                &r_red.iter().map(|v| -v).collect::<Vec<f64>>(),
                &g.iter().map(|v| -v).collect::<Vec<f64>>(),
            );

            // damped update with halving line search on the residual norm
            let mut step = 1.0f64;
            let mut accepted = false;
            for _ in 0..=8 {
                let z_try: Vec<f64> = z_m.iter().zip(&dz).map(|(a, b)| a + step * b).collect();
                let p_try: Vec<f64> = p.iter().zip(&dp).map(|(a, b)| a + step * b).collect();
                let phi_try = self.residual_norm(lambda, &z_try, &p_try)?;
                if phi_try <= (1.0 - 1e-4 * step) * phi || phi_try <= setup.tol {
                    z_m = z_try;
                    p = p_try;
                    phi = phi_try;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            iters += 1;
            if !accepted {
                return Err(CoreError::NewtonDiverged { iterations: iters, last_residual: phi });
            }
        }

        // traction and spring elongation from the converged full residual
        let z = self.mask.extend(&z_m);
        let x_nodal = self.space.full_nodal_values(&z, Some(self.bv));
        let r_full = self.full_residual(lambda, &x_nodal, &p)?;
        let traction = assemble::sum_body_rows(self.space, &r_full);
        Ok(SteadyState {
            lambda,
            z,
            pressure: p,
            chi0: [0.0; 3],
            traction,
            residual: phi,
            newton_iters: iters,
            outer_radius: self.space.mesh.outer_radius,
            mesh_size: self.space.mesh.mesh_size,
        })
    }
}

/// chi0 = -(varpi / omega_n^2) oint T(u0, p0) . n, from the volume-consistent
/// traction functional stored with the state.
pub fn spring_elongation(state: &SteadyState, params: &NondimParams) -> [f64; 3] {
    let s = -params.varpi / params.omega_n_sq;
    [s * state.traction[0], s * state.traction[1], s * state.traction[2]]
}

/// Attach chi0 computed with the given parameters.
pub fn with_elongation(mut state: SteadyState, params: &NondimParams) -> SteadyState {
    state.chi0 = spring_elongation(&state, params);
    state
}

/// A continuation branch: converged states at increasing lambda.
#[derive(Debug, Clone, Default)]
pub struct Branch {
    pub states: Vec<SteadyState>,
    /// whether each state was requested (false = bisection stepping stone)
    pub requested: Vec<bool>,
    /// every lambda at which a bisection retry was attempted
    pub bisection_trace: Vec<f64>,
}

impl Branch {
    pub fn lambdas(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.lambda).collect()
    }

    pub fn total_newton_iters(&self) -> usize {
        self.states.iter().map(|s| s.newton_iters).sum()
    }
}

pub struct ContinuationControl {
    pub max_bisect: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ContinuationControl {
    fn default() -> Self {
        ContinuationControl { max_bisect: 6, tol: 1e-10, max_iter: 25 }
    }
}

/// Natural continuation over an increasing lambda grid; failed steps are
/// bisected up to `max_bisect` levels, and stepping stones join the branch.
pub fn continuation_sweep(
    space: &FsiSpace,
    params: &NondimParams,
    lambda_grid: &[f64],
    ctrl: &ContinuationControl,
) -> Result<Branch> {
    if lambda_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CoreError::Precondition("lambda grid must be strictly increasing".into()));
    }
    let setup = SteadySetup { tol: ctrl.tol, max_iter: ctrl.max_iter, ..Default::default() };
    let work = SteadyWorkOwned::new(space, &NondimParams { lambda: 0.0, ..*params }, &setup)?;
    let mut branch = Branch::default();
    let mut last: Option<SteadyState> = None;

    for &target in lambda_grid {
        let mut pending = vec![target];
        let mut depth = 0usize;
        while let Some(&lam) = pending.last() {
            let attempt = work.solve(lam, last.as_ref(), &setup);
            match attempt {
                Ok(state) => {
                    let state = with_elongation(state, &NondimParams { lambda: lam, ..*params });
                    last = Some(state.clone());
                    branch.states.push(state);
                    branch.requested.push(lam == target);
                    pending.pop();
                }
                Err(CoreError::NewtonDiverged { .. }) => {
                    depth += 1;
                    let base = last.as_ref().map(|s| s.lambda).unwrap_or(0.0);
                    branch.bisection_trace.push(lam);
                    if depth > ctrl.max_bisect {
                        return Err(CoreError::ContinuationStalled {
                            last_good_lambda: base,
                            depth: depth - 1,
                        });
                    }
                    pending.push(0.5 * (base + lam));
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(branch)
}

/// Richardson extrapolation of a radius study assuming v(R) = v_inf + c R^-q.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct Extrapolated {
    pub value: f64,
    pub rate: f64,
    pub coefficient: f64,
}

/// `points` are (R, value) pairs at increasing R (>= 2 of them; with exactly
/// two, first-order truncation error q = 1 is assumed).
pub fn extrapolate_in_radius(points: &[(f64, f64)]) -> Result<Extrapolated> {
    if points.len() < 2 {
        return Err(CoreError::Precondition("need at least two radii".into()));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(CoreError::IllConditionedFit("duplicate radii".into()));
    }
    if pts.len() == 2 {
        let (r1, v1) = pts[0];
        let (r2, v2) = pts[1];
        let q = 1.0;
        let c = (v1 - v2) / (r1.powf(-q) - r2.powf(-q));
        return Ok(Extrapolated { value: v2 - c * r2.powf(-q), rate: q, coefficient: c });
    }
    // use the last three radii
    let [(r1, v1), (r2, v2), (r3, v3)] = [pts[pts.len() - 3], pts[pts.len() - 2], pts[pts.len() - 1]];
    let d12 = v1 - v2;
    let d23 = v2 - v3;
    if d12 == 0.0 || d23 == 0.0 || (d12 > 0.0) != (d23 > 0.0) {
        return Err(CoreError::IllConditionedFit(format!(
            "diagnostic not monotone in R: differences {d12:.3e}, {d23:.3e}"
        )));
    }
    let ratio = d12 / d23;
    let f = |q: f64| -> f64 {
        (r1.powf(-q) - r2.powf(-q)) / (r2.powf(-q) - r3.powf(-q)) - ratio
    };
    let (mut lo, mut hi) = (0.05, 10.0);
    let (flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return fit_at(lo, r2, v2, r3, v3);
    }
    if (flo > 0.0) == (fhi > 0.0) {
        return Err(CoreError::IllConditionedFit(format!(
            "decay-rate bracket failed (ratio {ratio:.3})"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 || hi - lo < 1e-12 {
            break;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    fit_at(0.5 * (lo + hi), r2, v2, r3, v3)
}

fn fit_at(q: f64, r2: f64, v2: f64, r3: f64, v3: f64) -> Result<Extrapolated> {
    let c = (v2 - v3) / (r2.powf(-q) - r3.powf(-q));
    Ok(Extrapolated { value: v3 - c * r3.powf(-q), rate: q, coefficient: c })
}

/// Extrapolate drag and |chi0| from states computed at multiple radii.
pub fn extrapolate_states(states: &[&SteadyState]) -> Result<(Extrapolated, Extrapolated)> {
    let drag: Vec<(f64, f64)> = states.iter().map(|s| (s.outer_radius, s.drag())).collect();
    let chi: Vec<(f64, f64)> = states
        .iter()
        .map(|s| {
            let c = s.chi0;
            (s.outer_radius, (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt())
        })
        .collect();
    Ok((extrapolate_in_radius(&drag)?, extrapolate_in_radius(&chi)?))
}

/// CSV summary of a branch: lambda, drag, lift, chi0 components, iterations,
/// residual. 17 significant digits, "." decimal.
pub fn branch_csv(branch: &Branch, dim: usize) -> String {
    let mut s = String::from("lambda,drag,lift,chi0_x,chi0_y");
    if dim == 3 {
        s.push_str(",chi0_z");
    }
    s.push_str(",newton_iters,residual\n");
    for st in &branch.states {
        s.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            st.lambda,
            st.drag(),
            st.lift(),
            st.chi0[0],
            st.chi0[1]
        ));
        if dim == 3 {
            s.push_str(&format!(",{:.16e}", st.chi0[2]));
        }
        s.push_str(&format!(",{},{:.16e}\n", st.newton_iters, st.residual));
    }
    s
}
