//! One function per subcommand. Exit-code policy: 0 success, 2 validation,
//! 3 solver failure (partial outputs kept), 4 data-integrity violations
//! (NaN in an output, threshold ordering broken).

use crate::config::RunConfig;
use crate::manifest::{guard_csv, RunManifest};
use crate::svg::{plot_or_warn, Series};
use fsilab_core::assemble;
use fsilab_core::bifurcation::{self, PathOpts};
use fsilab_core::geometry::gridfile;
use fsilab_core::linalg::EigOpts;
use fsilab_core::modal::{self, ModalOpts};
use fsilab_core::persist;
use fsilab_core::space::build_fsi_space;
use fsilab_core::steady::{self, ContinuationControl};
use fsilab_core::thresholds::{self, ThresholdOpts, ThresholdValue};
use fsilab_core::transient::{self, MonolithicSetup};
use fsilab_core::{CoreError, NondimParams};
use std::path::Path;
use std::time::Instant;

pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub cfg_text: &'a str,
    pub out: &'a Path,
    pub jobs: usize,
    pub seed: u64,
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct CmdError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CmdError {}

fn validation(msg: impl Into<String>) -> CmdError {
    CmdError { code: 2, message: msg.into() }
}

fn solver(msg: impl Into<String>) -> CmdError {
    CmdError { code: 3, message: msg.into() }
}

fn integrity(msg: impl Into<String>) -> CmdError {
    CmdError { code: 4, message: msg.into() }
}

type CmdResult = Result<(), CmdError>;

fn any(e: anyhow::Error) -> CmdError {
    solver(format!("{e:#}"))
}

fn write_csv(path: &Path, content: &str) -> Result<(), CmdError> {
    guard_csv(content).map_err(|e| integrity(format!("{e:#}")))?;
    std::fs::write(path, content).map_err(|e| solver(e.to_string()))?;
    Ok(())
}

fn build_spaces(
    ctx: &Ctx,
) -> Result<(fsilab_core::BodyShape, fsilab_core::Mesh, fsilab_core::FsiSpace, fsilab_core::FsiSpace), CmdError> {
    let body = ctx.cfg.body().map_err(|e| validation(format!("{e:#}")))?;
    let mesh = fsilab_core::build_annulus_mesh(
        &body,
        ctx.cfg.domain.outer_radius,
        ctx.cfg.domain.mesh_size,
        ctx.cfg.domain.symmetric,
    )
    .map_err(|e| validation(e.to_string()))?;
    let pinned = build_fsi_space(&mesh, ctx.cfg.domain.velocity_degree, true)
        .map_err(|e| validation(e.to_string()))?;
    let unpinned = build_fsi_space(&mesh, ctx.cfg.domain.velocity_degree, false)
        .map_err(|e| validation(e.to_string()))?;
    Ok((body, mesh, pinned, unpinned))
}

fn eig_opts(tol: f64, dense_cutoff: usize, seed: u64) -> EigOpts {
    EigOpts { tol, dense_cutoff, seed, ..Default::default() }
}

pub fn cmd_mesh(ctx: &Ctx) -> CmdResult {
    let t0 = Instant::now();
    let mut manifest = RunManifest::new("mesh", ctx.cfg_text, ctx.seed);
    let (body, mesh, pinned, unpinned) = build_spaces(ctx)?;
    mesh.validate(Some(&body)).map_err(|e| solver(e.to_string()))?;
    std::fs::create_dir_all(ctx.out).map_err(|e| solver(e.to_string()))?;
    let path = ctx.out.join("mesh.vtk");
    gridfile::write_mesh(&mesh, &path).map_err(|e| solver(e.to_string()))?;
    manifest.add_file(ctx.out, &path).map_err(any)?;
    manifest.monitor("tag_partition", true);
    manifest.note("cells", mesh.n_cells().to_string());
    manifest.note("vertices", mesh.n_vertices().to_string());
    manifest.note("velocity_dofs_pinned", pinned.n_vel.to_string());
    manifest.note("velocity_dofs_unpinned", unpinned.n_vel.to_string());
    manifest.time("total", t0.elapsed().as_secs_f64());
    manifest.write(ctx.out).map_err(any)?;
    println!("mesh: {} cells, {} vertices -> {}", mesh.n_cells(), mesh.n_vertices(), path.display());
    Ok(())
}

pub fn cmd_steady(ctx: &Ctx) -> CmdResult {
    let t0 = Instant::now();
    let mut manifest = RunManifest::new("steady", ctx.cfg_text, ctx.seed);
    let (_body, mesh, pinned, _unpinned) = build_spaces(ctx)?;
    let (grid, nd) = ctx.cfg.nondim().map_err(|e| validation(format!("{e:#}")))?;
    let ctrl = ContinuationControl {
        tol: ctx.cfg.steady.tol,
        max_iter: ctx.cfg.steady.max_iter,
        max_bisect: ctx.cfg.steady.max_bisect,
    };
    std::fs::create_dir_all(ctx.out).map_err(|e| solver(e.to_string()))?;
    let branch_dir = ctx.out.join("branch");

    let sweep = steady::continuation_sweep(&pinned, &nd, &grid, &ctrl);
    let (branch, failed) = match sweep {
        Ok(b) => (b, None),
        Err(CoreError::ContinuationStalled { last_good_lambda, depth }) => {
            // keep whatever converged
            let partial = steady::continuation_sweep(
                &pinned,
                &nd,
                &grid.iter().copied().filter(|&l| l <= last_good_lambda).collect::<Vec<_>>(),
                &ctrl,
            )
            .unwrap_or_default();
            (partial, Some(format!(
                "continuation stalled at lambda = {last_good_lambda} (bisection depth {depth})"
            )))
        }
        Err(e) => return Err(solver(e.to_string())),
    };

    persist::save_branch(&branch_dir, &branch, mesh.dim).map_err(|e| solver(e.to_string()))?;
    let csv = steady::branch_csv(&branch, mesh.dim);
    write_csv(&ctx.out.join("steady.csv"), &csv)?;
    manifest.add_file(ctx.out, &ctx.out.join("steady.csv")).map_err(any)?;
    for entry in std::fs::read_dir(&branch_dir).map_err(|e| solver(e.to_string()))? {
        let entry = entry.map_err(|e| solver(e.to_string()))?;
        manifest.add_file(ctx.out, &entry.path()).map_err(any)?;
    }
    plot_or_warn(
        &ctx.out.join("steady.svg"),
        "steady branch",
        "lambda",
        "drag",
        &[Series {
            name: "drag",
            color: "#1f6fb2",
            points: branch.states.iter().map(|s| (s.lambda, s.drag())).collect(),
        }],
    );
    manifest.monitor("all_converged", failed.is_none());
    if let Some(msg) = &failed {
        manifest.note("stall", msg.clone());
    }
    manifest.time("total", t0.elapsed().as_secs_f64());
    manifest.write(ctx.out).map_err(any)?;
    println!(
        "steady: {} states ({} requested) -> {}",
        branch.states.len(),
        branch.requested.iter().filter(|r| **r).count(),
        branch_dir.display()
    );
    match failed {
        None => Ok(()),
        Some(msg) => Err(solver(msg)),
    }
}

pub fn cmd_thresholds(ctx: &Ctx) -> CmdResult {
    let t0 = Instant::now();
    let mut manifest = RunManifest::new("thresholds", ctx.cfg_text, ctx.seed);
    let branch_dir = ctx
        .cfg
        .thresholds
        .branch
        .as_ref()
        .ok_or_else(|| validation("field thresholds.branch is required"))?;
    let branch_dir = Path::new(branch_dir);
    if !branch_dir.join("manifest.json").exists() {
        return Err(validation(format!(
            "branch directory {} is missing or has no manifest",
            branch_dir.display()
        )));
    }
    let branch = persist::load_branch(branch_dir).map_err(|e| validation(e.to_string()))?;
    let (_body, _mesh, pinned, unpinned) = build_spaces(ctx)?;
    if let Some(st) = branch.states.first() {
        if st.z.len() != pinned.n_vel {
            return Err(validation(format!(
                "branch states carry {} velocity dofs but the configured mesh yields {}",
                st.z.len(),
                pinned.n_vel
            )));
        }
    }
    let (_grid, nd0) = ctx.cfg.nondim().map_err(|e| validation(format!("{e:#}")))?;
    let opts = ThresholdOpts {
        eig: eig_opts(ctx.cfg.thresholds.eig_tol, ctx.cfg.thresholds.dense_cutoff, ctx.seed),
        route: None,
        state_tol: ctx.cfg.thresholds.state_tol,
    };

    // independent per-state work; run across the jobs pool, keep grid order
    let states: Vec<_> = branch.states.iter().collect();
    let results = parallel_map(ctx.jobs, &states, |state| {
        let params = NondimParams { lambda: state.lambda, ..nd0 };
        let u0 = pinned.full_nodal_values(&state.z, Some([1.0, 0.0, 0.0]));
        let l1 = thresholds::lambda1(&pinned, state, &opts)?;
        let l2 = thresholds::lambda2(&unpinned, &params, state, &u0, &opts)?;
        Ok::<_, CoreError>((state.lambda, l1, l2))
    });

    let mut rows = Vec::new();
    for r in results {
        let (lam, l1, l2) = r.map_err(|e| solver(e.to_string()))?;
        // ordering check before anything is written
        if let (Some(v1), Some(v2)) = (l1.value.finite(), l2.value.finite()) {
            if v2 > v1 + 1e-10 * v1.abs() {
                return Err(integrity(format!(
                    "threshold ordering violated at lambda = {lam}: lambda2 = {v2} > lambda1 = {v1}"
                )));
            }
        }
        let res = l1.pencil_residual.max(l2.pencil_residual);
        rows.push((lam, l1.value, l2.value, res));
    }
    std::fs::create_dir_all(ctx.out).map_err(|e| solver(e.to_string()))?;
    let csv = thresholds::thresholds_csv(&rows);
    write_csv(&ctx.out.join("thresholds.csv"), &csv)?;
    manifest.add_file(ctx.out, &ctx.out.join("thresholds.csv")).map_err(any)?;
    let finite: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|(l, l1, _, _)| l1.finite().map(|v| (*l, v)))
        .collect();
    plot_or_warn(
        &ctx.out.join("thresholds.svg"),
        "uniqueness and stability thresholds",
        "lambda",
        "threshold",
        &[
            Series { name: "lambda1", color: "#1f6fb2", points: finite },
            Series {
                name: "lambda2",
                color: "#b23a1f",
                points: rows
                    .iter()
                    .filter_map(|(l, _, l2, _)| l2.finite().map(|v| (*l, v)))
                    .collect(),
            },
        ],
    );
    manifest.monitor("ordering_lambda2_le_lambda1", true);
    manifest.time("total", t0.elapsed().as_secs_f64());
    manifest.write(ctx.out).map_err(any)?;
    println!("thresholds: {} rows -> {}", rows.len(), ctx.out.join("thresholds.csv").display());
    Ok(())
}

pub fn cmd_modes(ctx: &Ctx) -> CmdResult {
    let t0 = Instant::now();
    let mut manifest = RunManifest::new("modes", ctx.cfg_text, ctx.seed);
    let (_body, _mesh, _pinned, unpinned) = build_spaces(ctx)?;
    let (_grid, nd) = ctx.cfg.nondim().map_err(|e| validation(format!("{e:#}")))?;
    let mopts = ModalOpts {
        eig: eig_opts(ctx.cfg.modes.eig_tol, ctx.cfg.thresholds.dense_cutoff, ctx.seed),
        route: None,
    };
    let basis = modal::stokes_fsi_modes(&unpinned, &nd, ctx.cfg.modes.count, &mopts)
        .map_err(|e| solver(e.to_string()))?;
    std::fs::create_dir_all(ctx.out).map_err(|e| solver(e.to_string()))?;
    let bpath = ctx.out.join("modes.bin");
    persist::save_basis(&bpath, &basis).map_err(|e| solver(e.to_string()))?;
    let mut csv = String::from("index,mu,rigid_coupling_residual\n");
    for (k, (mu, r)) in basis
        .eigenvalues
        .iter()
        .zip(&basis.rigid_coupling_residuals)
        .enumerate()
    {
        csv.push_str(&format!("{k},{mu:.16e},{r:.16e}\n"));
    }
    write_csv(&ctx.out.join("modes.csv"), &csv)?;
    manifest.add_file(ctx.out, &bpath).map_err(any)?;
    manifest.add_file(ctx.out, &ctx.out.join("modes.csv")).map_err(any)?;
    let ops = assemble::assemble(&unpinned, &nd).map_err(|e| solver(e.to_string()))?;
    let verdict = modal::verify_modes(&unpinned, &ops, &basis, &Default::default());
    manifest.monitor("gram", verdict.gram_pass);
    manifest.monitor("stiffness_diagonal", verdict.stiffness_pass);
    manifest.monitor("pde_residual", verdict.pde_pass);
    manifest.monitor("sorted_positive", verdict.sorted && verdict.positive);
    manifest.note("gram_residual", format!("{:.3e}", basis.gram_residual));
    manifest.note("cluster_warning", basis.cluster_warning.to_string());
    manifest.time("total", t0.elapsed().as_secs_f64());
    manifest.write(ctx.out).map_err(any)?;
    println!(
        "modes: {} eigenpairs, gram residual {:.2e} -> {}",
        basis.count,
        basis.gram_residual,
        bpath.display()
    );
    Ok(())
}

pub fn cmd_transient(ctx: &Ctx) -> CmdResult {
    let t0 = Instant::now();
    let mut manifest = RunManifest::new("transient", ctx.cfg_text, ctx.seed);
    let (body, mesh, pinned, unpinned) = build_spaces(ctx)?;
    let (grid, nd0) = ctx.cfg.nondim().map_err(|e| validation(format!("{e:#}")))?;
    let lambda = grid[0];
    let params = NondimParams { lambda, ..nd0 };
    let tc = &ctx.cfg.transient;

    let t_steady = Instant::now();
    let state = steady::solve_steady(
        &pinned,
        &params,
        None,
        &steady::SteadySetup { tol: ctx.cfg.steady.tol, max_iter: ctx.cfg.steady.max_iter, ..Default::default() },
    )
    .map_err(|e| solver(e.to_string()))?;
    manifest.time("steady", t_steady.elapsed().as_secs_f64());
    let u0 = pinned.full_nodal_values(&state.z, Some([1.0, 0.0, 0.0]));

    let t_modes = Instant::now();
    let mopts = ModalOpts {
        eig: eig_opts(ctx.cfg.modes.eig_tol, ctx.cfg.thresholds.dense_cutoff, ctx.seed),
        route: None,
    };
    let basis = modal::stokes_fsi_modes(&unpinned, &params, tc.n_modes, &mopts)
        .map_err(|e| solver(e.to_string()))?;
    manifest.time("modes", t_modes.elapsed().as_secs_f64());

    let ops = assemble::assemble(&unpinned, &params).map_err(|e| solver(e.to_string()))?;
    let topts = ThresholdOpts {
        eig: eig_opts(ctx.cfg.thresholds.eig_tol, ctx.cfg.thresholds.dense_cutoff, ctx.seed),
        route: None,
        state_tol: ctx.cfg.thresholds.state_tol,
    };
    let l2 = thresholds::lambda2(&unpinned, &params, &state, &u0, &topts)
        .map_err(|e| solver(e.to_string()))?;
    let gamma = match l2.value {
        ThresholdValue::Finite(v) => 1.0 - lambda / v,
        ThresholdValue::Infinite => 1.0,
    };

    // initial-data scale: config epsilon, or the smallness bound
    let eps = if tc.epsilon > 0.0 {
        tc.epsilon
    } else if gamma > 0.0 {
        let gb = transient::gronwall_bound(tc.gronwall_a, tc.gronwall_b, tc.gronwall_alpha)
            .map_err(|e| validation(e.to_string()))?;
        transient::initial_scale_from_gronwall(gamma, params.varpi, params.omega_n_sq, &gb)
    } else {
        0.0
    };
    manifest.note("epsilon", format!("{eps:.6e}"));
    manifest.note("gamma", format!("{gamma:.6e}"));

    // normalized initial data from the lowest modes, scaled to energy eps^2
    let mut u_init = vec![0.0; unpinned.n_vel];
    for (w, m) in [(0.7, 0usize), (0.5, 1), (0.3, 2)] {
        if m < basis.count {
            for (a, b) in u_init.iter_mut().zip(&basis.modes[m]) {
                *a += w * b;
            }
        }
    }
    let e_raw: f64 = {
        let mask = unpinned.outer_mask();
        let xm = mask.restrict(&u_init);
        let mwm = ops.mass_weighted.masked(&mask, &mask);
        fsilab_core::linalg::dot(&xm, &mwm.apply(&xm))
    };
    let scale = if e_raw > 0.0 { eps / e_raw.sqrt() } else { 0.0 };
    for v in u_init.iter_mut() {
        *v *= scale;
    }
    let chi1 = unpinned.rigid_part(&u_init);

    let t_run = Instant::now();
    let traj = transient::integrate_monolithic(
        &unpinned,
        &ops,
        Some(&u0),
        &params,
        &u_init,
        [0.0; 3],
        chi1,
        tc.t_end,
        tc.dt,
        &MonolithicSetup { snapshot_every: tc.snapshot_every, ..Default::default() },
    )
    .map_err(|e| solver(e.to_string()))?;
    manifest.time("integration", t_run.elapsed().as_secs_f64());

    let delta_h = transient::strain_identity_defect(&unpinned, &ops)
        .map_err(|e| solver(e.to_string()))?;
    let report = transient::energy_monitor(&traj, lambda, &l2, delta_h)
        .map_err(|e| solver(e.to_string()))?;

    std::fs::create_dir_all(ctx.out).map_err(|e| solver(e.to_string()))?;
    let csv = transient::trajectory_csv(&traj, Some(&report));
    write_csv(&ctx.out.join("energy.csv"), &csv)?;
    manifest.add_file(ctx.out, &ctx.out.join("energy.csv")).map_err(any)?;
    for (k, (t, field)) in traj.snapshots.iter().enumerate() {
        let nodal = unpinned.full_nodal_values(field, None);
        let vertex_vals = &nodal[..mesh.n_vertices() * mesh.dim];
        let path = ctx.out.join(format!("snapshot_{k:04}.vtk"));
        gridfile::write_mesh_with_fields(&mesh, &path, &[("velocity", vertex_vals)])
            .map_err(|e| solver(e.to_string()))?;
        manifest.add_file(ctx.out, &path).map_err(any)?;
        manifest.note(&format!("snapshot_{k:04}_t"), format!("{t:.6}"));
    }
    plot_or_warn(
        &ctx.out.join("energy.svg"),
        "perturbation energy decay",
        "t",
        "E(t)",
        &[Series {
            name: "E",
            color: "#1f6fb2",
            points: traj.steps.iter().map(|s| (s.t, s.energy)).collect(),
        }],
    );
    manifest.monitor("energy_inequality", report.violations == 0);
    manifest.monitor("no_tail_oscillation", !report.tail_oscillation);
    manifest.note("violations", report.violations.to_string());
    manifest.note("decay_ratio", format!("{:.6e}", report.decay_ratio));
    manifest.note("delta_h", format!("{delta_h:.6e}"));
    manifest.time("total", t0.elapsed().as_secs_f64());
    manifest.write(ctx.out).map_err(any)?;
    let _ = body;
    println!(
        "transient: {} steps, violations {}, decay ratio {:.3e}",
        traj.steps.len(),
        report.violations,
        report.decay_ratio
    );
    Ok(())
}

pub fn cmd_bifurcate(ctx: &Ctx) -> CmdResult {
    let t0 = Instant::now();
    let mut manifest = RunManifest::new("bifurcate", ctx.cfg_text, ctx.seed);
    let (_body, _mesh, pinned, _unpinned) = build_spaces(ctx)?;
    let (_grid, nd0) = ctx.cfg.nondim().map_err(|e| validation(format!("{e:#}")))?;
    let bc = &ctx.cfg.bifurcation;
    let setup = steady::SteadySetup {
        tol: ctx.cfg.steady.tol,
        max_iter: ctx.cfg.steady.max_iter,
        ..Default::default()
    };
    let popts = PathOpts {
        eig: eig_opts(ctx.cfg.thresholds.eig_tol, ctx.cfg.thresholds.dense_cutoff, ctx.seed),
        ..Default::default()
    };

    let lambdas: Vec<f64> = (0..bc.samples)
        .map(|k| bc.window[0] + (bc.window[1] - bc.window[0]) * k as f64 / (bc.samples - 1) as f64)
        .collect();

    // base-flow supplier: frozen (verification) or tracked along the branch
    let frozen_field: Option<Vec<f64>> = if bc.frozen_lambda > 0.0 {
        let p = NondimParams { lambda: bc.frozen_lambda, ..nd0 };
        let st = steady::solve_steady(&pinned, &p, None, &setup).map_err(|e| solver(e.to_string()))?;
        let mut f = pinned.full_nodal_values(&st.z, Some([1.0, 0.0, 0.0]));
        for v in f.iter_mut() {
            *v *= bc.amplify;
        }
        Some(f)
    } else {
        None
    };

    let field_at = |lam: f64| -> Result<Vec<f64>, CoreError> {
        match &frozen_field {
            Some(f) => Ok(f.clone()),
            None => {
                let p = NondimParams { lambda: lam, ..nd0 };
                let st = steady::solve_steady(&pinned, &p, None, &setup)?;
                Ok(pinned.full_nodal_values(&st.z, Some([1.0, 0.0, 0.0])))
            }
        }
    };

    // path samples (independent when frozen; sequential warm starts otherwise)
    let t_path = Instant::now();
    let mut samples = Vec::new();
    for &lam in &lambdas {
        let f = field_at(lam).map_err(|e| solver(e.to_string()))?;
        let pencil = bifurcation::linearized_pencil(&pinned, &f).map_err(|e| solver(e.to_string()))?;
        let s = bifurcation::path_sample(&pencil, lam, &popts, samples.last())
            .map_err(|e| solver(e.to_string()))?;
        samples.push(s);
    }
    let path = bifurcation::EigenPath { samples };
    manifest.time("path", t_path.elapsed().as_secs_f64());

    std::fs::create_dir_all(ctx.out).map_err(|e| solver(e.to_string()))?;
    let csv = bifurcation::path_csv(&path);
    write_csv(&ctx.out.join("path.csv"), &csv)?;
    manifest.add_file(ctx.out, &ctx.out.join("path.csv")).map_err(any)?;

    let refine = |lam: f64| -> fsilab_core::Result<bifurcation::PathSample> {
        let f = field_at(lam)?;
        let pencil = bifurcation::linearized_pencil(&pinned, &f)?;
        bifurcation::path_sample(&pencil, lam, &popts, None)
    };
    let crossings = bifurcation::detect_crossing_with(&path, refine, bc.crossing_tol)
        .map_err(|e| solver(e.to_string()))?;

    let report_json: serde_json::Value = if let Some(crossing) = crossings.first() {
        let f = field_at(crossing.lambda_s).map_err(|e| solver(e.to_string()))?;
        let pencil =
            bifurcation::linearized_pencil(&pinned, &f).map_err(|e| solver(e.to_string()))?;
        let simp =
            bifurcation::simplicity_check(&pencil, crossing, bc.kernel_gap, bc.range_threshold)
                .map_err(|e| solver(e.to_string()))?;
        let d = 0.05 * crossing.lambda_s;
        let mu_at = |lam: f64| -> fsilab_core::Result<f64> {
            let f = field_at(lam)?;
            let pencil = bifurcation::linearized_pencil(&pinned, &f)?;
            Ok(bifurcation::path_sample(&pencil, lam, &popts, Some(&crossing.sample))?.mu.re)
        };
        let trans = (|| -> fsilab_core::Result<_> {
            bifurcation::transversality_from_values(
                mu_at(crossing.lambda_s - d)?,
                mu_at(crossing.lambda_s + d)?,
                mu_at(crossing.lambda_s - 0.5 * d)?,
                mu_at(crossing.lambda_s + 0.5 * d)?,
                d,
            )
        })();
        let rep = bifurcation::report(crossing, &simp, &trans, bc.crossing_tol);
        manifest.monitor(
            "certified",
            rep.verdict == bifurcation::BifurcationVerdict::CertifiedNumerically,
        );
        serde_json::to_value(&rep).map_err(|e| solver(e.to_string()))?
    } else {
        manifest.monitor("certified", false);
        serde_json::json!({
            "verdict": "NoCandidate",
            "window": bc.window,
            "samples": bc.samples,
            "crossing_tol": bc.crossing_tol,
        })
    };
    std::fs::write(
        ctx.out.join("bifurcation_report.json"),
        serde_json::to_string_pretty(&report_json).map_err(|e| solver(e.to_string()))?,
    )
    .map_err(|e| solver(e.to_string()))?;
    manifest
        .add_file(ctx.out, &ctx.out.join("bifurcation_report.json"))
        .map_err(any)?;
    manifest.note("crossings", crossings.len().to_string());
    manifest.time("total", t0.elapsed().as_secs_f64());
    manifest.write(ctx.out).map_err(any)?;
    println!(
        "bifurcate: {} path samples, {} crossing(s) -> {}",
        path.samples.len(),
        crossings.len(),
        ctx.out.join("bifurcation_report.json").display()
    );
    Ok(())
}

/// Order-preserving parallel map over `items` with at most `jobs` threads.
fn parallel_map<T: Sync, R: Send>(
    jobs: usize,
    items: &[T],
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut out: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let slots: Vec<std::sync::Mutex<&mut Option<R>>> =
        out.iter_mut().map(std::sync::Mutex::new).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                **slots[i].lock().expect("slot") = Some(r);
            });
        }
    });
    out.into_iter().map(|r| r.expect("filled")).collect()
}
