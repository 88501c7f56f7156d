use fsilab_core::assemble::{self, SolenoidalProjector};
use fsilab_core::geometry::{self, BodyShape};
use fsilab_core::linalg;
use fsilab_core::space::{build_fsi_space, nondimensionalize, NondimParams, PhysicalParams};
use fsilab_core::CoreError;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn params() -> NondimParams {
    NondimParams { lambda: 1.0, omega_n_sq: 1.0, varpi: 1.0 }
}

fn small_space(pinned: bool) -> fsilab_core::FsiSpace {
    let body = BodyShape::disk();
    let mesh = geometry::build_annulus_mesh(&body, 3.0, 0.4, true).unwrap();
    build_fsi_space(&mesh, 2, pinned).unwrap()
}

#[test]
fn nondimensionalize_unit_and_derived() {
    let unit = PhysicalParams {
        stream_speed: 1.0,
        body_diameter: 1.0,
        viscosity: 1.0,
        density: 1.0,
        body_mass: 1.0,
        spring_stiffness: 1.0,
    };
    let nd = nondimensionalize(&unit).unwrap();
    assert_eq!((nd.lambda, nd.omega_n_sq, nd.varpi), (1.0, 1.0, 1.0));

    let phys = PhysicalParams {
        stream_speed: 2.0,
        body_diameter: 1.0,
        viscosity: 0.5,
        density: 1.0,
        body_mass: 2.0,
        spring_stiffness: 8.0,
    };
    let nd = nondimensionalize(&phys).unwrap();
    assert!((nd.lambda - 4.0).abs() < 1e-15);
    assert!((nd.omega_n_sq - 16.0).abs() < 1e-15);
    assert!((nd.varpi - 0.5).abs() < 1e-15);

    let bad = PhysicalParams { viscosity: 0.0, ..unit };
    let err = nondimensionalize(&bad).unwrap_err();
    assert!(matches!(err, CoreError::Precondition(_)));
    assert!(err.to_string().contains("viscosity"));
}

#[test]
fn unsupported_degree_is_rejected() {
    let body = BodyShape::disk();
    let mesh = geometry::build_annulus_mesh(&body, 3.0, 0.4, true).unwrap();
    let err = build_fsi_space(&mesh, 3, false).unwrap_err();
    assert!(matches!(err, CoreError::UnsupportedDegree(3)));
}

#[test]
fn constant_extension_lies_in_unpinned_space_and_is_divergence_free() {
    let space = small_space(false);
    let ops = assemble::assemble(&space, &params()).unwrap();
    // the field u = e1 everywhere with uhat = e1
    let mut x = vec![0.0; space.n_vel];
    for n in 0..space.n_free_nodes {
        x[n * space.dim] = 1.0;
    }
    x[space.rigid_offset()] = 1.0;
    let div_res = ops.div.apply(&x);
    let nrm = linalg::norm2(&div_res);
    assert!(nrm < 1e-12, "divergence residual of constant extension: {nrm:.3e}");
}

#[test]
fn pinned_space_has_exactly_d_fewer_unknowns() {
    let unpinned = small_space(false);
    let pinned = small_space(true);
    assert_eq!(unpinned.n_vel, pinned.n_vel + unpinned.dim);
}

#[test]
fn dof_count_grows_under_refinement() {
    let body = BodyShape::disk();
    let mesh = geometry::build_annulus_mesh(&body, 3.0, 0.4, true).unwrap();
    let fine = geometry::refine(&mesh, Some(&body)).unwrap();
    let s0 = build_fsi_space(&mesh, 2, false).unwrap();
    let s1 = build_fsi_space(&fine, 2, false).unwrap();
    // P2 dofs roughly quadruple in 2D
    let ratio = s1.n_vel as f64 / s0.n_vel as f64;
    assert!((3.0..=4.5).contains(&ratio), "dof growth ratio {ratio}");
}

#[test]
fn mass_and_viscous_forms_are_symmetric() {
    let space = small_space(false);
    let ops = assemble::assemble(&space, &params()).unwrap();
    assert_eq!(ops.mass_weighted.symmetry_defect(), 0.0);
    assert_eq!(ops.visc.symmetry_defect(), 0.0);
    assert_eq!(ops.grad_stiff.symmetry_defect(), 0.0);
}

#[test]
fn mass_weighted_is_positive_definite_and_visc_kernel_is_rigid() {
    let space = small_space(false);
    let ops = assemble::assemble(&space, &params()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let x: Vec<f64> = (0..space.n_vel).map(|_| rng.random::<f64>() - 0.5).collect();
        let q = linalg::dot(&x, &ops.mass_weighted.apply(&x));
        assert!(q > 0.0);
        let qa = linalg::dot(&x, &ops.visc.apply(&x));
        assert!(qa >= -1e-13 * q);
    }
    // rigid translation: u = e_c everywhere including the rigid dof
    for c in 0..space.dim {
        let mut x = vec![0.0; space.n_vel];
        for n in 0..space.n_free_nodes {
            x[n * space.dim + c] = 1.0;
        }
        x[space.rigid_offset() + c] = 1.0;
        let ax = ops.visc.apply(&x);
        assert!(
            linalg::norm2(&ax) < 1e-11 * ops.visc.max_abs(),
            "rigid translation not in the A_visc kernel"
        );
    }
}

#[test]
fn skew_advection_vanishes_on_the_diagonal() {
    let space = small_space(false);
    let ops = assemble::assemble(&space, &params()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..4 {
        let a: Vec<f64> = (0..space.n_vel).map(|_| rng.random::<f64>() - 0.5).collect();
        let u: Vec<f64> = (0..space.n_vel).map(|_| rng.random::<f64>() - 0.5).collect();
        let n_adv = ops.advection_reduced(&space, &a, None).unwrap();
        let cuu = linalg::dot(&u, &n_adv.apply(&u));
        let scale = linalg::norm2(&a) * linalg::dot(&u, &u);
        assert!(cuu.abs() < 1e-13 * scale.max(1.0), "c(a;u,u) = {cuu:.3e}");
    }
}

#[test]
fn weighted_inner_product_reproduces_fluid_plus_rigid_form() {
    let space = small_space(false);
    let ops = assemble::assemble(&space, &params()).unwrap();
    let varpi = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x: Vec<f64> = (0..space.n_vel).map(|_| rng.random::<f64>() - 0.5).collect();
    let y: Vec<f64> = (0..space.n_vel).map(|_| rng.random::<f64>() - 0.5).collect();
    let lhs = linalg::dot(&x, &ops.mass_weighted.apply(&y));
    // independent evaluation: fluid integral from full-space mass + rigid dot
    let xf = space.full_nodal_values(&x, None);
    let yf = space.full_nodal_values(&y, None);
    let fluid = linalg::dot(&xf, &ops.full.mass.apply(&yf));
    let xh = space.rigid_part(&x);
    let yh = space.rigid_part(&y);
    let rigid: f64 = (0..space.dim).map(|c| xh[c] * yh[c]).sum::<f64>() / varpi;
    assert!(
        (lhs - fluid - rigid).abs() < 1e-12 * lhs.abs().max(1.0),
        "weighted product mismatch: {lhs} vs {}",
        fluid + rigid
    );
}

#[test]
fn projector_is_idempotent_and_kills_gradients() {
    let space = small_space(false);
    let ops = assemble::assemble(&space, &params()).unwrap();
    let proj = SolenoidalProjector::new(&space, &ops, false).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..space.n_vel).map(|_| rng.random::<f64>() - 0.5).collect();
    let px = proj.project(&ops, &x);
    // weak divergence-free
    let div_res = linalg::norm2(&ops.div.apply(&px));
    assert!(div_res < 1e-10, "projected field divergence {div_res:.3e}");
    // idempotence
    let ppx = proj.project(&ops, &px);
    let mut diff = ppx.clone();
    for (d, p) in diff.iter_mut().zip(&px) {
        *d -= p;
    }
    assert!(linalg::norm2(&diff) < 1e-12 * linalg::norm2(&px).max(1.0));
    // orthogonality: <Pf, f - Pf>_Mw = 0
    let mut res = x.clone();
    for (r, p) in res.iter_mut().zip(&px) {
        *r -= p;
    }
    let ortho = linalg::dot(&px, &ops.mass_weighted.apply(&res));
    assert!(ortho.abs() < 1e-10, "Helmholtz orthogonality defect {ortho:.3e}");
    // a discrete gradient projects to ~0: f = Mw^{-1} B^T q has Pf = 0;
    // equivalently project Mw^{-1} B^T q directly
    let q: Vec<f64> = (0..ops.div.nrows).map(|_| rng.random::<f64>() - 0.5).collect();
    let btq = ops.div.apply_transpose(&q);
    // solve Mw g = btq via the projector's machinery: use a dedicated solve
    let mw = ops.mass_weighted.clone();
    let lu = linalg::SparseLu::factor(&mw).unwrap();
    let g = lu.solve(&btq);
    let pg = proj.project(&ops, &g);
    assert!(
        linalg::norm2(&pg) < 1e-9 * linalg::norm2(&g).max(1.0),
        "gradient field not annihilated: |Pg| = {:.3e}",
        linalg::norm2(&pg)
    );
    // projecting a solenoidal field returns it unchanged
    let px2 = proj.project(&ops, &px);
    let mut d2 = px2.clone();
    for (a, b) in d2.iter_mut().zip(&px) {
        *a -= b;
    }
    assert!(linalg::norm2(&d2) < 1e-12 * linalg::norm2(&px).max(1.0));
}

#[test]
fn gradient_identity_on_smooth_solenoidal_fields() {
    // || grad u ||^2 / (2 || D(u) ||^2) = 1 within 10 h^2 for smooth fields
    // (pinned space with outer Dirichlet, divergence enforced by projection)
    for h in [0.4, 0.2] {
        let body = BodyShape::disk();
        let mesh = geometry::build_annulus_mesh(&body, 3.0, h, true).unwrap();
        let space = build_fsi_space(&mesh, 2, true).unwrap();
        let ops = assemble::assemble(&space, &params()).unwrap();
        let proj = SolenoidalProjector::new(&space, &ops, true).unwrap();
        // smooth stream-function field interpolated then projected
        let mut x = vec![0.0; space.n_vel];
        for n in 0..space.n_nodes {
            if let Some(base) = space.full_to_reduced(n, 0) {
                let p = &space.node_coords[n * 2..n * 2 + 2];
                let (c, s) = ((0.9 * p[0]).cos(), (1.1 * p[1]).sin());
                // curl of psi = sin-ish bump: u = (d_y psi, -d_x psi)
                x[base] = 1.1 * c * (1.1 * p[1]).cos();
                x[base + 1] = 0.9 * (0.9 * p[0]).sin() * s;
            }
        }
        let px = proj.project(&ops, &x);
        let mask = space.outer_mask();
        let xm = mask.restrict(&px);
        let g = linalg::dot(&xm, &ops.grad_stiff.masked(&mask, &mask).apply(&xm));
        let a = linalg::dot(&xm, &ops.visc.masked(&mask, &mask).apply(&xm));
        let ratio = g / a;
        assert!(
            (ratio - 1.0).abs() < 10.0 * h * h,
            "h = {h}: ratio {ratio}, defect {:.3e} vs {:.3e}",
            (ratio - 1.0).abs(),
            10.0 * h * h
        );
    }
}

#[test]
fn sanity_constants_report() {
    let space = small_space(false);
    let ops = assemble::assemble(&space, &params()).unwrap();
    let report = assemble::sanity_constants(&space, &ops, &params(), 8).unwrap();
    assert!(report.kappa1 > 0.0, "kappa1 must be positive on the unpinned space");
    assert!(report.kappa0 > 0.0);
    assert_eq!(report.kappa0_exponent, 4);

    let pinned = small_space(true);
    let ops_p = assemble::assemble(&pinned, &params()).unwrap();
    let report_p = assemble::sanity_constants(&pinned, &ops_p, &params(), 8).unwrap();
    assert_eq!(report_p.kappa1, 0.0);
}

#[test]
fn kappa1_stabilizes_under_refinement() {
    let body = BodyShape::disk();
    let mesh = geometry::build_annulus_mesh(&body, 3.0, 0.4, true).unwrap();
    let fine = geometry::refine(&mesh, Some(&body)).unwrap();
    let nd = params();
    let s0 = build_fsi_space(&mesh, 2, false).unwrap();
    let s1 = build_fsi_space(&fine, 2, false).unwrap();
    let o0 = assemble::assemble(&s0, &nd).unwrap();
    let o1 = assemble::assemble(&s1, &nd).unwrap();
    let r0 = assemble::sanity_constants(&s0, &o0, &nd, 4).unwrap();
    let r1 = assemble::sanity_constants(&s1, &o1, &nd, 4).unwrap();
    // conforming enrichment: kappa1 grows toward the continuum value but must
    // stabilize: allow growth, reject collapse or blowup beyond 5% + growth
    assert!(
        r1.kappa1 >= r0.kappa1 * 0.95,
        "kappa1 fell under refinement: {} -> {}",
        r0.kappa1,
        r1.kappa1
    );
    assert!(
        r1.kappa1 <= r0.kappa1 * 1.5,
        "kappa1 blew up under refinement: {} -> {}",
        r0.kappa1,
        r1.kappa1
    );
}
