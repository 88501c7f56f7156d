//! Steady-bifurcation machinery: the eigenvalue path mu(lambda) of the
//! linearized operator pencil, crossing detection at mu = 1, simplicity
//! (kernel dimension plus the range condition) and the transversality
//! derivative.
//!
//! The pencil is K(lambda) x = mu A_visc x on the pinned space with outer
//! Dirichlet, where K(lambda) is exactly the lambda-dependent part of the
//! steady Newton Jacobian, so a crossing is a genuine singularity of the
//! discrete steady problem. The pencil is not symmetric; complex pairs are
//! tracked and flagged (the steady-bifurcation test applies to real
//! crossings only). The transversality value reported is the crossing
//! derivative of the singularity functional I - lambda*M, which equals the
//! negated slope of the pencil path; for a lambda-independent base flow it
//! comes out as -1/lambda_s.

use crate::assemble::{self};
use crate::error::{CoreError, Result};
use crate::linalg::{self, CooMat, EigOpts, Route};
use crate::space::{DofMask, FsiSpace, NondimParams};
use faer::c64;

/// Assembled pencil blocks for one base flow (lambda-independent parts).
pub struct LinearizedPencil {
    /// K1 such that K(lambda) = lambda * K1 (masked pinned coordinates)
    pub k1: CooMat,
    pub a: CooMat,
    pub b: CooMat,
    pub gauge: Vec<f64>,
    pub mask: DofMask,
}

pub fn linearized_pencil(space: &FsiSpace, u0_nodal: &[f64]) -> Result<LinearizedPencil> {
    if !space.pinned {
        return Err(CoreError::Precondition("the eigenpath runs on the pinned space".into()));
    }
    let params = NondimParams { lambda: 0.0, omega_n_sq: 1.0, varpi: 1.0 };
    let ops = assemble::assemble(space, &params)?;
    let mask = space.outer_mask();
    let id_p = DofMask::identity(ops.div.nrows);
    let n_adv = assemble::reduce_mat(space, &assemble::advection_full(space, u0_nodal)?);
    let t_jac = assemble::reduce_mat(space, &assemble::transport_jacobian_full(space, u0_nodal)?);
    let mut k1 = ops.stream.clone();
    k1.add_scaled(&n_adv, -1.0);
    k1.add_scaled(&t_jac, -1.0);
    Ok(LinearizedPencil {
        k1: k1.masked(&mask, &mask),
        a: ops.visc.masked(&mask, &mask),
        b: ops.div.masked(&id_p, &mask),
        gauge: ops.pressure_gauge.clone(),
        mask,
    })
}

/// One sample of the eigenvalue path.
#[derive(Debug, Clone)]
pub struct PathSample {
    pub lambda: f64,
    /// eigenvalue nearest 1 (meaningless when `no_candidate`)
    pub mu: c64,
    /// nearby eigenvalues, sorted by |mu - 1|
    pub cluster: Vec<c64>,
    /// right eigenvector, masked pinned coordinates
    pub eigvec: Vec<c64>,
    /// adjoint (left) eigenvector, normalized so y^T A x = 1
    pub adjoint: Vec<c64>,
    /// y^T A x before rescaling was applied (diagnostic)
    pub normalization_check: f64,
    /// mass-inner-product overlap with the previous sample's eigenvector
    pub overlap: f64,
    pub complex_pair: bool,
    pub no_candidate: bool,
    pub path_jump: bool,
    pub route: Route,
}

#[derive(Debug, Clone, Default)]
pub struct EigenPath {
    pub samples: Vec<PathSample>,
}

#[derive(Debug, Clone, Copy)]
pub struct PathOpts {
    pub eig: EigOpts,
    pub route: Option<Route>,
    pub cluster_size: usize,
    /// |Im mu| <= imag_tol * |mu| counts as a real eigenvalue
    pub imag_tol: f64,
    pub overlap_min: f64,
}

impl Default for PathOpts {
    fn default() -> Self {
        PathOpts {
            eig: EigOpts::default(),
            route: None,
            cluster_size: 5,
            imag_tol: 1e-8,
            overlap_min: 0.5,
        }
    }
}

/// Solve the pencil at one lambda for the eigenvalue nearest 1.
pub fn path_sample(
    pencil: &LinearizedPencil,
    lambda: f64,
    opts: &PathOpts,
    prev: Option<&PathSample>,
) -> Result<PathSample> {
    let n = pencil.k1.nrows;
    if lambda == 0.0 || pencil.k1.max_abs() == 0.0 {
        // the right-hand operator vanishes; no finite mu solves K x = mu A x
        // with x != 0, so the sample carries no candidate
        return Ok(PathSample {
            lambda,
            mu: c64::new(0.0, 0.0),
            cluster: Vec::new(),
            eigvec: vec![c64::new(0.0, 0.0); n],
            adjoint: vec![c64::new(0.0, 0.0); n],
            normalization_check: 0.0,
            overlap: 1.0,
            complex_pair: false,
            no_candidate: true,
            path_jump: false,
            route: Route::Dense,
        });
    }
    let k = pencil.k1.scaled(lambda);
    let eig = linalg::nonsym_pencil_nearest(
        &k,
        &pencil.a,
        &pencil.b,
        Some(&pencil.gauge),
        1.0,
        opts.cluster_size,
        &opts.eig,
        opts.route,
    )?;
    let mu = eig.values[0];
    let x = eig.right[0].clone();
    // adjoint: right eigenvector of the transposed pencil at the same mu
    let left = match eig.route {
        Route::Dense => eig.left[0].clone(),
        Route::Iterative => {
            let kt = k.transposed();
            let adj = linalg::nonsym_pencil_nearest(
                &kt,
                &pencil.a,
                &pencil.b,
                Some(&pencil.gauge),
                mu.re,
                2,
                &opts.eig,
                opts.route,
            )?;
            adj.right[0].clone()
        }
    };
    // normalize y so that y^T A x = 1 (plain transpose)
    let ax = apply_complex(&pencil.a, &x);
    let mut pairing = c64::new(0.0, 0.0);
    for i in 0..n {
        pairing += left[i] * ax[i];
    }
    let normalization_check = pairing.norm();
    let adjoint: Vec<c64> = if normalization_check > 1e-300 {
        left.iter().map(|v| *v / pairing).collect()
    } else {
        left
    };

    let overlap = match prev {
        Some(p) if !p.no_candidate => eigvec_overlap(&pencil.a, &p.eigvec, &x),
        _ => 1.0,
    };
    let complex_pair = mu.im.abs() > opts.imag_tol * mu.norm().max(1e-300);
    Ok(PathSample {
        lambda,
        mu,
        cluster: eig.values.clone(),
        eigvec: x,
        adjoint,
        normalization_check,
        overlap,
        complex_pair,
        no_candidate: false,
        path_jump: overlap < opts.overlap_min,
        route: eig.route,
    })
}

fn apply_complex(m: &CooMat, x: &[c64]) -> Vec<c64> {
    let xr: Vec<f64> = x.iter().map(|v| v.re).collect();
    let xi: Vec<f64> = x.iter().map(|v| v.im).collect();
    let yr = m.apply(&xr);
    let yi = m.apply(&xi);
    yr.into_iter().zip(yi).map(|(a, b)| c64::new(a, b)).collect()
}

/// |<x, y>_A| / (|x|_A |y|_A): branch-tracking overlap in the A inner product.
fn eigvec_overlap(a: &CooMat, x: &[c64], y: &[c64]) -> f64 {
    let ax = apply_complex(a, x);
    let ay = apply_complex(a, y);
    let mut xy = c64::new(0.0, 0.0);
    let mut xx = 0.0;
    let mut yy = 0.0;
    for i in 0..x.len() {
        xy += x[i].conj() * ay[i];
        xx += (x[i].conj() * ax[i]).re;
        yy += (y[i].conj() * ay[i]).re;
    }
    xy.norm() / (xx.sqrt() * yy.sqrt()).max(1e-300)
}

/// Track the path over a lambda window with a fixed base flow per sample.
/// `fields` supplies (lambda, u0 nodal values); states must come from a
/// converged branch.
pub fn eigenpath_from_fields(
    space: &FsiSpace,
    fields: &[(f64, Vec<f64>)],
    opts: &PathOpts,
) -> Result<EigenPath> {
    let mut samples: Vec<PathSample> = Vec::with_capacity(fields.len());
    for (lambda, u0) in fields {
        let pencil = linearized_pencil(space, u0)?;
        let prev = samples.last();
        let s = path_sample(&pencil, *lambda, opts, prev)?;
        samples.push(s);
    }
    Ok(EigenPath { samples })
}

/// A refined crossing of mu(lambda) through 1.
#[derive(Debug, Clone)]
pub struct Crossing {
    pub lambda_s: f64,
    pub mu: c64,
    pub sample: PathSample,
    pub iterations: usize,
}

/// Detect sign changes of Re mu - 1 along the path and refine each by the
/// secant method with fresh samples from `refine` until |mu - 1| < tol.
pub fn detect_crossing_with<F>(
    path: &EigenPath,
    mut refine: F,
    tol: f64,
) -> Result<Vec<Crossing>>
where
    F: FnMut(f64) -> Result<PathSample>,
{
    if path.samples.len() < 2 {
        return Err(CoreError::Precondition("path needs at least two samples".into()));
    }
    let mut out = Vec::new();
    for w in path.samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.no_candidate || b.no_candidate || a.complex_pair || b.complex_pair {
            continue;
        }
        let (ga, gb) = (a.mu.re - 1.0, b.mu.re - 1.0);
        if ga == 0.0 {
            out.push(Crossing { lambda_s: a.lambda, mu: a.mu, sample: a.clone(), iterations: 0 });
            continue;
        }
        if (ga > 0.0) == (gb > 0.0) {
            continue;
        }
        // secant with bisection safeguard
        let (mut l0, mut g0) = (a.lambda, ga);
        let (mut l1, mut g1) = (b.lambda, gb);
        let mut best: Option<(f64, PathSample)> = None;
        let mut iters = 0usize;
        for _ in 0..60 {
            iters += 1;
            let mut lnew = l1 - g1 * (l1 - l0) / (g1 - g0);
            let (lo, hi) = (l0.min(l1), l0.max(l1));
            if !(lo..=hi).contains(&lnew) {
                lnew = 0.5 * (l0 + l1);
            }
            let s = refine(lnew)?;
            if s.no_candidate || s.complex_pair {
                return Err(CoreError::EigSolveFailure(
                    "crossing refinement ran into a complex pair".into(),
                ));
            }
            let gnew = s.mu.re - 1.0;
            best = Some((lnew, s));
            if gnew.abs() < tol {
                break;
            }
            if (gnew > 0.0) == (g1 > 0.0) {
                l1 = lnew;
                g1 = gnew;
            } else {
                l0 = l1;
                g0 = g1;
                l1 = lnew;
                g1 = gnew;
            }
        }
        let (lambda_s, sample) = best.expect("at least one refinement");
        if (sample.mu.re - 1.0).abs() >= tol {
            return Err(CoreError::EigSolveFailure(format!(
                "crossing refinement stalled at |mu - 1| = {:.3e}",
                (sample.mu.re - 1.0).abs()
            )));
        }
        out.push(Crossing { lambda_s, mu: sample.mu, sample, iterations: iters });
    }
    out.sort_by(|x, y| x.lambda_s.total_cmp(&y.lambda_s));
    Ok(out)
}

/// Kernel dimension estimate: cluster members within `gap` of the crossing
/// eigenvalue.
pub fn kernel_dimension_from_cluster(cluster: &[c64], mu_c: c64, gap: f64) -> usize {
    cluster
        .iter()
        .filter(|m| (**m - mu_c).norm() <= gap * mu_c.norm().max(1.0))
        .count()
}

/// Range condition (dense): least-squares solve of (A - K) w = A x1; the
/// crossing is simple only if no solution exists, i.e. the relative residual
/// stays above `threshold`.
pub fn range_condition_residual(
    k: &faer::Mat<f64>,
    a: &faer::Mat<f64>,
    x1: &[f64],
) -> Result<f64> {
    let n = k.nrows();
    if x1.iter().all(|v| *v == 0.0) {
        return Err(CoreError::InvalidEigenvector("zero kernel vector".into()));
    }
    let mut op = a.to_owned();
    for i in 0..n {
        for j in 0..n {
            op[(i, j)] -= k[(i, j)];
        }
    }
    let rhs = faer::Mat::<f64>::from_fn(n, 1, |i, _| {
        let mut s = 0.0;
        for j in 0..n {
            s += a[(i, j)] * x1[j];
        }
        s
    });
    let svd = op.svd().map_err(|e| CoreError::EigSolveFailure(format!("svd: {e:?}")))?;
    let s = svd.S().column_vector().to_owned();
    let smax = (0..n).map(|i| s[i]).fold(0.0f64, f64::max);
    let tol = smax * 1e-10 * n as f64;
    // pseudoinverse solve
    let ut_rhs = svd.U().transpose() * &rhs;
    let mut y = faer::Mat::<f64>::zeros(n, 1);
    for i in 0..n {
        if s[i] > tol {
            y[(i, 0)] = ut_rhs[(i, 0)] / s[i];
        }
    }
    let w = svd.V() * &y;
    let res = &op * &w - &rhs;
    let mut rn = 0.0;
    let mut bn = 0.0;
    for i in 0..n {
        rn += res[(i, 0)] * res[(i, 0)];
        bn += rhs[(i, 0)] * rhs[(i, 0)];
    }
    Ok((rn / bn.max(1e-300)).sqrt())
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SimplicityVerdict {
    pub kernel_dim: usize,
    pub range_residual: f64,
    pub kernel_gap: f64,
    pub range_threshold: f64,
    pub simple: bool,
}

/// Simplicity at a crossing through the dense reduction: kernel dimension by
/// eigenvalue clustering and the range condition by least squares.
pub fn simplicity_check(
    pencil: &LinearizedPencil,
    crossing: &Crossing,
    kernel_gap: f64,
    range_threshold: f64,
) -> Result<SimplicityVerdict> {
    let x_norm: f64 = crossing.sample.eigvec.iter().map(|v| v.norm_sqr()).sum();
    if x_norm == 0.0 {
        return Err(CoreError::InvalidEigenvector("zero eigenvector at crossing".into()));
    }
    let dim = kernel_dimension_from_cluster(&crossing.sample.cluster, crossing.mu, kernel_gap);
    // dense reduction on the nullspace basis
    let z = linalg::dense_nullspace(&pencil.b);
    let k = pencil.k1.scaled(crossing.lambda_s);
    let kd = z.transpose() * &k.to_dense() * &z;
    let ad = z.transpose() * &pencil.a.to_dense() * &z;
    // project the eigenvector onto the reduced coordinates: x_r = Z^T A x /
    // (Z^T A Z) is overkill; least squares through Z works since Z has
    // orthonormal columns
    let n = pencil.a.nrows;
    let xr_full: Vec<f64> = (0..n).map(|i| crossing.sample.eigvec[i].re).collect();
    let nz = z.ncols();
    let mut xr = vec![0.0; nz];
    for j in 0..nz {
        let mut s = 0.0;
        for i in 0..n {
            s += z[(i, j)] * xr_full[i];
        }
        xr[j] = s;
    }
    let res = range_condition_residual(&kd, &ad, &xr)?;
    Ok(SimplicityVerdict {
        kernel_dim: dim,
        range_residual: res,
        kernel_gap,
        range_threshold,
        simple: dim == 1 && res > range_threshold,
    })
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct Transversality {
    /// crossing derivative in the singularity-functional convention
    /// (the negated slope of the pencil path)
    pub derivative: f64,
    pub fd_noise: f64,
    pub nonzero: bool,
    pub stencil: f64,
}

/// Central finite difference with a Richardson consistency check at half
/// stencil; mu values must come from fresh solves at lambda_s +/- dlam and
/// lambda_s +/- dlam/2.
pub fn transversality_from_values(
    mu_minus: f64,
    mu_plus: f64,
    mu_minus_half: f64,
    mu_plus_half: f64,
    dlam: f64,
) -> Result<Transversality> {
    let full = (mu_plus - mu_minus) / (2.0 * dlam);
    let half = (mu_plus_half - mu_minus_half) / dlam;
    let disagreement = (full - half).abs();
    let scale = full.abs().max(half.abs());
    if scale > 0.0 && disagreement > 0.5 * scale {
        return Err(CoreError::FdInconclusive { disagreement: 100.0 * disagreement / scale });
    }
    let noise = disagreement.max(1e-14 * scale.max(1e-14));
    // Richardson-extrapolated slope of the path, reported in the
    // singularity-functional convention
    let slope = (4.0 * half - full) / 3.0;
    Ok(Transversality {
        derivative: -slope,
        fd_noise: noise,
        nonzero: slope.abs() > 10.0 * noise,
        stencil: dlam,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum BifurcationVerdict {
    CertifiedNumerically,
    TransversalityUnresolved,
    MultipleEigenvalue,
    RangeConditionFailed,
    NotACandidate,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct BifurcationReport {
    pub lambda_s: f64,
    pub mu_residual: f64,
    pub kernel_dim: usize,
    pub simplicity: bool,
    pub range_residual: f64,
    pub transversality_value: f64,
    pub fd_noise: f64,
    pub verdict: BifurcationVerdict,
    pub crossing_tol: f64,
    pub kernel_gap: f64,
    pub range_threshold: f64,
}

/// Conjunction of the three conditions: mu = 1 simple (kernel dim 1 plus the
/// range condition), and a nonzero transversality derivative.
pub fn report(
    crossing: &Crossing,
    simplicity: &SimplicityVerdict,
    trans: &std::result::Result<Transversality, CoreError>,
    crossing_tol: f64,
) -> BifurcationReport {
    let mu_residual = (crossing.mu - c64::new(1.0, 0.0)).norm();
    let (tval, tnoise, tnonzero) = match trans {
        Ok(t) => (t.derivative, t.fd_noise, t.nonzero),
        Err(_) => (f64::NAN, f64::NAN, false),
    };
    let verdict = if mu_residual >= crossing_tol {
        BifurcationVerdict::NotACandidate
    } else if simplicity.kernel_dim != 1 {
        BifurcationVerdict::MultipleEigenvalue
    } else if !simplicity.simple {
        BifurcationVerdict::RangeConditionFailed
    } else if !tnonzero {
        BifurcationVerdict::TransversalityUnresolved
    } else {
        BifurcationVerdict::CertifiedNumerically
    };
    BifurcationReport {
        lambda_s: crossing.lambda_s,
        mu_residual,
        kernel_dim: simplicity.kernel_dim,
        simplicity: simplicity.simple,
        range_residual: simplicity.range_residual,
        transversality_value: tval,
        fd_noise: tnoise,
        verdict,
        crossing_tol,
        kernel_gap: simplicity.kernel_gap,
        range_threshold: simplicity.range_threshold,
    }
}

/// Path CSV: lambda, Re mu, Im mu, overlap, flags.
pub fn path_csv(path: &EigenPath) -> String {
    let mut s = String::from("lambda,re_mu,im_mu,overlap,flags\n");
    for p in &path.samples {
        let mut flags = Vec::new();
        if p.no_candidate {
            flags.push("no_candidate");
        }
        if p.complex_pair {
            flags.push("complex_pair");
        }
        if p.path_jump {
            flags.push("path_jump");
        }
        s.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
            p.lambda,
            p.mu.re,
            p.mu.im,
            p.overlap,
            if flags.is_empty() { "ok".to_string() } else { flags.join("+") }
        ));
    }
    s
}
