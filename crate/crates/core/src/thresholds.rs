//! The uniqueness threshold lambda1 and the stability threshold lambda2,
//! computed as extreme eigenvalues of constrained symmetric pencils built
//! from a steady state, plus the fixed-point search for the first lambda
//! with lambda1(lambda) = lambda.
//!
//! Both quotients carry the weight on grad(u0):
//!   1/lambda1 = max (u . grad(-u0), u) / ||grad u||^2   (pinned space)
//!   1/lambda2 = max ((u - uhat) . grad(-u0), u) / ||grad u||^2  (unpinned)
//! assembled as a nonsymmetric operator whose symmetric part feeds the
//! pencil; for quadratic forms the two agree to roundoff, which is the
//! Rayleigh self-consistency check.

use crate::assemble::{self, OperatorSet};
use crate::error::{CoreError, Result};
use crate::linalg::{self, CooMat, EigOpts, Extreme, Route};
use crate::space::{DofMask, FsiSpace, NondimParams};
use crate::steady::SteadyState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ThresholdKind {
    Lambda1,
    Lambda2,
}

/// Positive threshold or the +infinity sentinel (never a float infinity in
/// persisted output; serialized as the string "inf").
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdValue {
    Finite(f64),
    Infinite,
}

impl ThresholdValue {
    pub fn finite(&self) -> Option<f64> {
        match self {
            ThresholdValue::Finite(v) => Some(*v),
            ThresholdValue::Infinite => None,
        }
    }

    pub fn to_csv_field(&self) -> String {
        match self {
            ThresholdValue::Finite(v) => format!("{v:.16e}"),
            ThresholdValue::Infinite => "inf".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ThresholdResult {
    pub kind: ThresholdKind,
    pub value: ThresholdValue,
    /// largest pencil eigenvalue (1/lambda when positive)
    pub theta_max: f64,
    /// maximizer in the space's reduced layout (outer dofs zero)
    pub maximizer: Vec<f64>,
    /// |raw nonsymmetric quotient - theta| / |theta|
    pub rayleigh_residual: f64,
    pub pencil_residual: f64,
    pub route: Route,
    pub n_constrained: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ThresholdOpts {
    pub eig: EigOpts,
    pub route: Option<Route>,
    /// residual above which the input state is rejected
    pub state_tol: f64,
}

impl Default for ThresholdOpts {
    fn default() -> Self {
        ThresholdOpts { eig: EigOpts::default(), route: None, state_tol: 1e-8 }
    }
}

/// Uniqueness threshold from a steady state; `space` must be the pinned
/// space the state was solved on.
pub fn lambda1(space: &FsiSpace, state: &SteadyState, opts: &ThresholdOpts) -> Result<ThresholdResult> {
    check_state(state, opts)?;
    let u0_nodal = space.full_nodal_values(&state.z, Some([1.0, 0.0, 0.0]));
    lambda1_from_field(space, &u0_nodal, opts)
}

/// Uniqueness threshold for an arbitrary nodal base flow (pinned space).
pub fn lambda1_from_field(
    space: &FsiSpace,
    u0_nodal: &[f64],
    opts: &ThresholdOpts,
) -> Result<ThresholdResult> {
    if !space.pinned {
        return Err(CoreError::Precondition("lambda1 runs on the pinned space".into()));
    }
    let ops = assemble::assemble(space, &NondimParams { lambda: 0.0, omega_n_sq: 1.0, varpi: 1.0 })?;
    let raw = assemble::reduce_mat(space, &assemble::grad_weight_full(space, u0_nodal)?).scaled(-1.0);
    pencil_threshold(space, &ops, raw, ThresholdKind::Lambda1, opts)
}

/// Stability threshold from a steady state solved on the pinned companion
/// of `space` (same mesh); `space` must be unpinned.
pub fn lambda2(
    space: &FsiSpace,
    params: &NondimParams,
    state: &SteadyState,
    u0_nodal: &[f64],
    opts: &ThresholdOpts,
) -> Result<ThresholdResult> {
    check_state(state, opts)?;
    lambda2_from_field(space, params, u0_nodal, opts)
}

pub fn lambda2_from_field(
    space: &FsiSpace,
    params: &NondimParams,
    u0_nodal: &[f64],
    opts: &ThresholdOpts,
) -> Result<ThresholdResult> {
    if space.pinned {
        return Err(CoreError::Precondition("lambda2 needs the unpinned space".into()));
    }
    let ops = assemble::assemble(space, params)?;
    let raw = ops.relative_grad_weight_reduced(space, u0_nodal)?.scaled(-1.0);
    pencil_threshold(space, &ops, raw, ThresholdKind::Lambda2, opts)
}

fn check_state(state: &SteadyState, opts: &ThresholdOpts) -> Result<()> {
    if state.residual > opts.state_tol {
        return Err(CoreError::NonConvergedState { residual: state.residual, tol: opts.state_tol });
    }
    Ok(())
}

fn pencil_threshold(
    space: &FsiSpace,
    ops: &OperatorSet,
    raw: CooMat,
    kind: ThresholdKind,
    opts: &ThresholdOpts,
) -> Result<ThresholdResult> {
    let mask = space.outer_mask();
    let id_p = DofMask::identity(ops.div.nrows);
    let raw_m = raw.masked(&mask, &mask);
    let g_m = ops.grad_stiff.masked(&mask, &mask);
    let b_m = ops.div.masked(&id_p, &mask);

    // zero weight: the quotient is identically zero and the threshold infinite
    if raw_m.max_abs() == 0.0 {
        return Ok(ThresholdResult {
            kind,
            value: ThresholdValue::Infinite,
            theta_max: 0.0,
            maximizer: vec![0.0; space.n_vel],
            rayleigh_residual: 0.0,
            pencil_residual: 0.0,
            route: Route::Dense,
            n_constrained: linalg::constrained_dim_estimate(mask.n_reduced, b_m.nrows),
        });
    }

    let sym = symmetric_part(&raw_m);
    let eig = linalg::sym_pencil_extreme(
        &sym,
        &g_m,
        &b_m,
        Some(&ops.pressure_gauge),
        1,
        Extreme::Largest,
        &opts.eig,
        opts.route,
    )?;
    let theta = eig.values[0];
    let x = &eig.vectors[0];

    // raw (unsymmetrized) quotient at the maximizer
    let gq = linalg::dot(x, &g_m.apply(x));
    let rawq = linalg::dot(x, &raw_m.apply(x)) / gq;
    let rayleigh_residual = (rawq - theta).abs() / theta.abs().max(1e-300);

    let value = if theta > 0.0 { ThresholdValue::Finite(1.0 / theta) } else { ThresholdValue::Infinite };
    Ok(ThresholdResult {
        kind,
        value,
        theta_max: theta,
        maximizer: mask.extend(x),
        rayleigh_residual,
        pencil_residual: eig.residuals[0],
        route: eig.route,
        n_constrained: eig.n_constrained,
    })
}

fn symmetric_part(a: &CooMat) -> CooMat {
    let mut s = a.scaled(0.5);
    s.add_scaled(&a.transposed(), 0.5);
    s.symmetrized()
}

/// Result of the fixed-point search for lambda = lambda1(lambda).
#[derive(Debug, Clone)]
pub struct LambdaTilde {
    pub lambda: f64,
    pub bracket: (f64, f64),
    pub evaluations: usize,
    /// threshold result at the returned point
    pub at_tilde: ThresholdResult,
}

/// Generic bisection driver over an evaluator lambda -> lambda1(lambda);
/// used with fresh steady solves in production and injected tables in tests.
pub fn find_lambda_tilde_with<F>(
    mut eval: F,
    grid: &[f64],
    tol: f64,
) -> Result<Option<LambdaTilde>>
where
    F: FnMut(f64) -> Result<(ThresholdValue, ThresholdResult)>,
{
    if grid.len() < 2 {
        return Err(CoreError::Precondition("need at least two grid points".into()));
    }
    let mut evaluations = 0usize;
    let mut f = |lam: f64| -> Result<(f64, ThresholdResult)> {
        evaluations += 1;
        let (v, r) = eval(lam)?;
        let g = match v {
            ThresholdValue::Finite(l1) => lam - l1,
            ThresholdValue::Infinite => f64::NEG_INFINITY,
        };
        Ok((g, r))
    };
    let mut prev = f(grid[0])?;
    let mut prev_lam = grid[0];
    let mut bracket = None;
    for &lam in &grid[1..] {
        let cur = f(lam)?;
        if prev.0 < 0.0 && cur.0 >= 0.0 {
            bracket = Some((prev_lam, lam));
            break;
        }
        prev = cur;
        prev_lam = lam;
    }
    let Some((mut lo, mut hi)) = bracket else {
        return Ok(None);
    };
    let orig = (lo, hi);
    let mut best = f(0.5 * (lo + hi))?;
    let mut best_lam = 0.5 * (lo + hi);
    for _ in 0..200 {
        if best.0.abs() < tol {
            break;
        }
        if best.0 < 0.0 {
            lo = best_lam;
        } else {
            hi = best_lam;
        }
        best_lam = 0.5 * (lo + hi);
        best = f(best_lam)?;
    }
    if best.0.abs() >= tol {
        return Err(CoreError::EigSolveFailure(format!(
            "fixed-point bisection stalled at |f| = {:.3e}",
            best.0.abs()
        )));
    }
    Ok(Some(LambdaTilde { lambda: best_lam, bracket: orig, evaluations, at_tilde: best.1 }))
}

/// Production search along a branch: fresh steady solves at bisection points.
pub fn find_lambda_tilde(
    space_pinned: &FsiSpace,
    params: &NondimParams,
    branch_lambdas: &[f64],
    tol: f64,
    opts: &ThresholdOpts,
) -> Result<Option<LambdaTilde>> {
    let setup = crate::steady::SteadySetup::default();
    let work = crate::steady::SteadyWorkOwned::new(space_pinned, params, &setup)?;
    let mut last: Option<SteadyState> = None;
    find_lambda_tilde_with(
        |lam| {
            let state = work.solve(lam, last.as_ref(), &setup)?;
            last = Some(state.clone());
            let r = lambda1(space_pinned, &state, opts)?;
            Ok((r.value, r))
        },
        branch_lambdas,
        tol,
    )
}

/// CSV row set: lambda, lambda1, lambda2, gamma, theta residual.
pub fn thresholds_csv(rows: &[(f64, ThresholdValue, ThresholdValue, f64)]) -> String {
    let mut s = String::from("lambda,lambda1,lambda2,gamma,theta_residual\n");
    for (lam, l1, l2, res) in rows {
        let gamma = match l2 {
            ThresholdValue::Finite(v) => format!("{:.16e}", 1.0 - lam / v),
            ThresholdValue::Infinite => format!("{:.16e}", 1.0),
        };
        s.push_str(&format!(
            "{:.16e},{},{},{},{:.16e}\n",
            lam,
            l1.to_csv_field(),
            l2.to_csv_field(),
            gamma,
            res
        ));
    }
    s
}
