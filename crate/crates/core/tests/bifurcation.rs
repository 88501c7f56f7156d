use faer::c64;
use fsilab_core::bifurcation::{
    self, detect_crossing_with, eigenpath_from_fields, kernel_dimension_from_cluster,
    linearized_pencil, path_sample, range_condition_residual, report, simplicity_check,
    transversality_from_values, BifurcationVerdict, Crossing, EigenPath, PathOpts, PathSample,
};
use fsilab_core::geometry::{self, BodyShape};
use fsilab_core::linalg::Route;
use fsilab_core::space::{build_fsi_space, NondimParams};
use fsilab_core::steady::{solve_steady, SteadySetup};
use fsilab_core::CoreError;

fn pinned(h: f64, outer: f64) -> fsilab_core::FsiSpace {
    let body = BodyShape::disk();
    let mesh = geometry::build_annulus_mesh(&body, outer, h, true).unwrap();
    build_fsi_space(&mesh, 2, true).unwrap()
}

fn steady_field(space: &fsilab_core::FsiSpace, lambda: f64) -> Vec<f64> {
    let params = NondimParams { lambda, omega_n_sq: 1.0, varpi: 1.0 };
    let state = solve_steady(space, &params, None, &SteadySetup::default()).unwrap();
    space.full_nodal_values(&state.z, Some([1.0, 0.0, 0.0]))
}

/// largest real positive eigenvalue theta of the pencil (K1, A), found from
/// a dense cluster probe; the real branch crosses mu = 1 at lambda = 1/theta
/// and is the nearest-1 eigenvalue there (the complex pairs have moved past)
fn real_branch_theta(pencil: &bifurcation::LinearizedPencil) -> f64 {
    let opts = PathOpts { cluster_size: 12, route: Some(Route::Dense), ..Default::default() };
    let probe = path_sample(pencil, 1.0, &opts, None).unwrap();
    probe
        .cluster
        .iter()
        .filter(|m| m.im.abs() < 1e-8 * m.norm() && m.re > 0.0)
        .map(|m| m.re)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
        .expect("pencil must have a real positive branch for this test")
}

/// synthetic sample for injected-path tests
fn synth_sample(lambda: f64, mu: f64) -> PathSample {
    PathSample {
        lambda,
        mu: c64::new(mu, 0.0),
        cluster: vec![c64::new(mu, 0.0)],
        eigvec: vec![c64::new(1.0, 0.0)],
        adjoint: vec![c64::new(1.0, 0.0)],
        normalization_check: 1.0,
        overlap: 1.0,
        complex_pair: false,
        no_candidate: false,
        path_jump: false,
        route: Route::Dense,
    }
}

#[test]
fn zero_lambda_sample_has_no_candidate() {
    let space = pinned(0.35, 3.0);
    let u0 = steady_field(&space, 0.3);
    let pencil = linearized_pencil(&space, &u0).unwrap();
    let s = path_sample(&pencil, 0.0, &PathOpts::default(), None).unwrap();
    assert!(s.no_candidate);
}

#[test]
fn frozen_base_flow_path_is_exactly_linear_in_lambda() {
    // with u0 frozen, K(lambda) = lambda K1, so mu(lambda) = lambda theta1;
    // five samples near the crossing must be collinear through the origin
    let space = pinned(0.35, 3.0);
    let u0 = steady_field(&space, 0.5);
    // amplify so the crossing lands at moderate lambda
    let amp: Vec<f64> = u0.iter().map(|v| 20.0 * v).collect();
    let pencil = linearized_pencil(&space, &amp).unwrap();
    let theta1 = real_branch_theta(&pencil);
    let lambda_s = 1.0 / theta1;
    let mut prev: Option<PathSample> = None;
    for k in 0..5 {
        let lam = lambda_s * (0.9 + 0.05 * k as f64);
        let s = path_sample(&pencil, lam, &PathOpts::default(), prev.as_ref()).unwrap();
        assert!(!s.complex_pair, "real branch expected nearest 1 at {lam}");
        let predicted = lam * theta1;
        assert!(
            (s.mu.re - predicted).abs() < 1e-8 * predicted.abs(),
            "mu({lam}) = {} vs linear {predicted}",
            s.mu.re
        );
        assert!(s.overlap > 0.5, "path tracking lost the branch");
        prev = Some(s);
    }
}

#[test]
fn adjoint_pairing_is_consistent() {
    let space = pinned(0.35, 3.0);
    let u0 = steady_field(&space, 0.5);
    let amp: Vec<f64> = u0.iter().map(|v| 20.0 * v).collect();
    let pencil = linearized_pencil(&space, &amp).unwrap();
    let lam = 0.95 / real_branch_theta(&pencil);
    let s = path_sample(&pencil, lam, &PathOpts::default(), None).unwrap();
    // <W1*, K W1> = mu <W1*, A W1> with the normalized pairing
    let k = pencil.k1.scaled(lam);
    let kx = apply_c(&k, &s.eigvec);
    let ax = apply_c(&pencil.a, &s.eigvec);
    let mut ykx = c64::new(0.0, 0.0);
    let mut yax = c64::new(0.0, 0.0);
    for i in 0..s.eigvec.len() {
        ykx += s.adjoint[i] * kx[i];
        yax += s.adjoint[i] * ax[i];
    }
    let lhs = ykx;
    let rhs = s.mu * yax;
    assert!(
        (lhs - rhs).norm() < 1e-8 * rhs.norm().max(1e-300),
        "adjoint consistency: {lhs:?} vs {rhs:?}"
    );
    assert!((yax - c64::new(1.0, 0.0)).norm() < 1e-8, "normalization {yax:?}");
}

fn apply_c(m: &fsilab_core::linalg::CooMat, x: &[c64]) -> Vec<c64> {
    let xr: Vec<f64> = x.iter().map(|v| v.re).collect();
    let xi: Vec<f64> = x.iter().map(|v| v.im).collect();
    let yr = m.apply(&xr);
    let yi = m.apply(&xi);
    yr.into_iter().zip(yi).map(|(a, b)| c64::new(a, b)).collect()
}

#[test]
fn iterative_route_matches_dense_near_one() {
    let space = pinned(0.4, 3.0);
    let u0 = steady_field(&space, 0.5);
    let amp: Vec<f64> = u0.iter().map(|v| 20.0 * v).collect();
    let pencil = linearized_pencil(&space, &amp).unwrap();
    // shift-invert converges quickly near the crossing, which is also where
    // the path accuracy matters
    let lam = 0.97 / real_branch_theta(&pencil);
    let dense = path_sample(
        &pencil,
        lam,
        &PathOpts { route: Some(Route::Dense), ..Default::default() },
        None,
    )
    .unwrap();
    let iter = path_sample(
        &pencil,
        lam,
        &PathOpts { route: Some(Route::Iterative), ..Default::default() },
        None,
    )
    .unwrap();
    assert!(
        (dense.mu - iter.mu).norm() < 1e-8 * dense.mu.norm(),
        "dense {:?} vs iterative {:?}",
        dense.mu,
        iter.mu
    );
}

#[test]
fn crossing_detector_on_injected_linear_path() {
    let samples: Vec<PathSample> =
        (0..=6).map(|k| synth_sample(0.5 * k as f64, 0.25 * k as f64)).collect();
    let path = EigenPath { samples };
    let found = detect_crossing_with(
        &path,
        |lam| Ok(synth_sample(lam, 0.5 * lam)),
        1e-6,
    )
    .unwrap();
    assert_eq!(found.len(), 1);
    assert!((found[0].lambda_s - 2.0).abs() < 1e-6, "lambda_s {}", found[0].lambda_s);
}

#[test]
fn no_crossing_gives_empty_list() {
    let samples: Vec<PathSample> =
        (0..=4).map(|k| synth_sample(0.5 * k as f64, 0.2 + 0.05 * k as f64)).collect();
    let path = EigenPath { samples };
    let found = detect_crossing_with(&path, |lam| Ok(synth_sample(lam, 0.3)), 1e-6).unwrap();
    assert!(found.is_empty());
}

#[test]
fn frozen_base_flow_crossing_matches_reciprocal_eigenvalue() {
    let space = pinned(0.4, 3.0);
    let u0 = steady_field(&space, 0.5);
    let amp: Vec<f64> = u0.iter().map(|v| 25.0 * v).collect();
    let pencil = linearized_pencil(&space, &amp).unwrap();
    let theta1 = real_branch_theta(&pencil);
    let lambda_s_exact = 1.0 / theta1;
    // path bracketing the crossing
    let lams = [0.8 * lambda_s_exact, 1.2 * lambda_s_exact];
    let mut samples = Vec::new();
    for &l in &lams {
        samples.push(path_sample(&pencil, l, &PathOpts::default(), samples.last()).unwrap());
    }
    let path = EigenPath { samples };
    let found = detect_crossing_with(
        &path,
        |lam| path_sample(&pencil, lam, &PathOpts::default(), None),
        1e-6,
    )
    .unwrap();
    assert_eq!(found.len(), 1);
    assert!(
        (found[0].lambda_s - lambda_s_exact).abs() < 1e-6 * lambda_s_exact,
        "detector {} vs 1/theta {}",
        found[0].lambda_s,
        lambda_s_exact
    );
}

#[test]
fn synthetic_pencils_exercise_simplicity_checks() {
    use faer::mat;
    // simple crossing: K = diag(1, 0.2, 3), A = I; at mu = 1 the kernel of
    // A - K is one-dimensional and (A - K) w = A x1 has no solution
    let k = mat![
        [1.0f64, 0.0, 0.0],
        [0.0, 0.2, 0.0],
        [0.0, 0.0, 3.0]
    ];
    let a = faer::Mat::<f64>::identity(3, 3);
    let res = range_condition_residual(&k, &a, &[1.0, 0.0, 0.0]).unwrap();
    assert!(res > 1e-3, "range residual {res:.3e} should be large for a simple eigenvalue");

    // defective crossing (Jordan block at 1): K = [[1,1],[0,1]] has
    // (A - K) w = A x1 solvable for the kernel vector x1 = e1
    let kj = mat![[1.0f64, 1.0], [0.0, 1.0]];
    let aj = faer::Mat::<f64>::identity(2, 2);
    let resj = range_condition_residual(&kj, &aj, &[1.0, 0.0]).unwrap();
    assert!(resj < 1e-10, "Jordan case must be solvable: residual {resj:.3e}");

    // kernel dimension by clustering
    let cluster = vec![
        c64::new(1.0, 0.0),
        c64::new(1.0 + 1e-9, 0.0),
        c64::new(1.4, 0.0),
    ];
    assert_eq!(kernel_dimension_from_cluster(&cluster, c64::new(1.0, 0.0), 1e-6), 2);
    assert_eq!(kernel_dimension_from_cluster(&cluster, c64::new(1.0, 0.0), 1e-12), 1);

    // zero eigenvector is rejected
    let err = range_condition_residual(&k, &a, &[0.0, 0.0, 0.0]).unwrap_err();
    assert!(matches!(err, CoreError::InvalidEigenvector(_)));
}

#[test]
fn transversality_signs_and_noise() {
    // injected linear path mu = lambda/2: the pencil slope is +1/2, reported
    // in the singularity-functional convention as -1/2
    let t = transversality_from_values(
        0.5 * 1.9 / 2.0 * 2.0,
        0.5 * 2.1,
        0.5 * 1.95,
        0.5 * 2.05,
        0.1,
    )
    .unwrap();
    assert!((t.derivative - (-0.5)).abs() < 1e-8, "derivative {}", t.derivative);
    assert!(t.nonzero);

    // flat path: derivative below noise, not a transversal crossing
    let flat = transversality_from_values(1.0, 1.0, 1.0, 1.0, 0.1).unwrap();
    assert!(!flat.nonzero);

    // wildly inconsistent stencils are inconclusive
    let err = transversality_from_values(0.0, 1.0, 0.4, 0.45, 0.1).unwrap_err();
    assert!(matches!(err, CoreError::FdInconclusive { .. }));
}

#[test]
fn frozen_base_flow_satisfies_the_crossing_identity() {
    // the acceptance-9 identity at unit-test scale: derivative = -1/lambda_s
    let space = pinned(0.4, 3.0);
    let u0 = steady_field(&space, 0.5);
    let amp: Vec<f64> = u0.iter().map(|v| 25.0 * v).collect();
    let pencil = linearized_pencil(&space, &amp).unwrap();
    let lambda_s = 1.0 / real_branch_theta(&pencil);
    let d = 0.05 * lambda_s;
    let mu_at = |lam: f64| -> f64 {
        path_sample(&pencil, lam, &PathOpts::default(), None).unwrap().mu.re
    };
    let t = transversality_from_values(
        mu_at(lambda_s - d),
        mu_at(lambda_s + d),
        mu_at(lambda_s - 0.5 * d),
        mu_at(lambda_s + 0.5 * d),
        d,
    )
    .unwrap();
    let expect = -1.0 / lambda_s;
    assert!(
        ((t.derivative - expect) / expect).abs() < 1e-4,
        "derivative {} vs -1/lambda_s {}",
        t.derivative,
        expect
    );
}

#[test]
fn report_verdicts_follow_the_conjunction() {
    let space = pinned(0.4, 3.0);
    let u0 = steady_field(&space, 0.5);
    let amp: Vec<f64> = u0.iter().map(|v| 25.0 * v).collect();
    let pencil = linearized_pencil(&space, &amp).unwrap();
    let lambda_s = 1.0 / real_branch_theta(&pencil);
    let sample = path_sample(&pencil, lambda_s, &PathOpts::default(), None).unwrap();
    let crossing = Crossing { lambda_s, mu: sample.mu, sample, iterations: 1 };
    let simp = simplicity_check(&pencil, &crossing, 1e-6, 1e-3).unwrap();
    let trans = transversality_from_values(
        (lambda_s - 0.05) / lambda_s,
        (lambda_s + 0.05) / lambda_s,
        (lambda_s - 0.025) / lambda_s,
        (lambda_s + 0.025) / lambda_s,
        0.05,
    );
    let rep = report(&crossing, &simp, &trans, 1e-5);
    if simp.kernel_dim == 1 && simp.simple {
        assert_eq!(rep.verdict, BifurcationVerdict::CertifiedNumerically, "{rep:?}");
    }

    // degrade: force a double kernel verdict
    let mut simp2 = simp.clone();
    simp2.kernel_dim = 2;
    simp2.simple = false;
    let rep2 = report(&crossing, &simp2, &trans, 1e-5);
    assert_eq!(rep2.verdict, BifurcationVerdict::MultipleEigenvalue);

    // degrade: flat transversality
    let flat = transversality_from_values(1.0, 1.0, 1.0, 1.0, 0.05);
    let rep3 = report(&crossing, &simp, &flat, 1e-5);
    if simp.simple {
        assert_eq!(rep3.verdict, BifurcationVerdict::TransversalityUnresolved);
    }
}

#[test]
fn path_csv_has_flags_column() {
    let space = pinned(0.4, 3.0);
    let u0 = steady_field(&space, 0.3);
    let fields = vec![(0.0, u0.clone()), (0.4, u0.clone())];
    let path = eigenpath_from_fields(&space, &fields, &PathOpts::default()).unwrap();
    assert!(path.samples[0].no_candidate);
    let csv = bifurcation::path_csv(&path);
    assert!(csv.starts_with("lambda,re_mu,im_mu,overlap,flags"));
    assert!(csv.contains("no_candidate"));
}
