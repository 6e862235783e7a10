use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crustfem::elasticity::Material;
use crustfem::fault::{
    center_grid, compute_greens_bank, read_greens, read_observations, unit_slip_basis, write_greens, FaultPatch,
    MultigridBatchSolver, Observation, UnitSlip,
};
use crustfem::inversion::{log_grid, nearest_spacing, select_alpha_lcurve, smoothing_from_slips};
use crustfem::io::{read_solution, write_atomic, write_solution, write_vtk};
use crustfem::mesh::{generate_box_mesh, read_dirichlet, read_mesh, write_dirichlet, write_mesh, DirichletSet, Mesh};
use crustfem::ebe::LinearOperator;
use crustfem::multigrid::Hierarchy;
use crustfem::solver::{solve_batched, SolveReport};
use crustfem::{ExecMode, Precision, VectorBatch64};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{AlphaGrid, DataSource, MeshSource, ObservationSource, RhsKind, RunConfig};
use crate::error::CliError;

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub seed: u64,
    pub mode: ExecMode,
}

/// Ordered `key=value` lines, printed to stdout and saved as `<cmd>.summary`.
#[derive(Debug, Default)]
pub struct Summary(Vec<(String, String)>);

impl Summary {
    pub fn add(&mut self, key: &str, value: impl Display) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn lines(&self) -> impl Iterator<Item = String> + '_ {
        self.0.iter().map(|(k, v)| format!("{k}={v}"))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, |w| {
            for l in self.lines() {
                writeln!(w, "{l}")?;
            }
            Ok(())
        })
        .map_err(|e| CliError::write(path, e))
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))
}

pub fn load_mesh(src: &MeshSource) -> Result<(Mesh, DirichletSet), CliError> {
    match src {
        MeshSource::Box(spec) => Ok(generate_box_mesh(spec)?),
        MeshSource::File { mesh, dirichlet } => {
            let m = read_mesh(mesh).map_err(|e| CliError::Invalid(format!("{}: {e}", mesh.display())))?;
            let d = match dirichlet {
                Some(p) => read_dirichlet(p).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?,
                None => DirichletSet::new(),
            };
            if let Some((n, _)) = d.iter().find(|(n, _)| *n as usize >= m.node_count()) {
                return Err(CliError::Invalid(format!(
                    "Dirichlet node {n} is outside the mesh ({} nodes)",
                    m.node_count()
                )));
            }
            Ok((m, d))
        }
    }
}

/// Materials from the config, or a single `λ = μ = 1` material.
pub fn materials(cfg: &RunConfig) -> Vec<Material> {
    cfg.materials
        .clone()
        .unwrap_or_else(|| vec![Material::from_lame(1.0, 1.0)])
}

fn check_materials(mesh: &Mesh, mats: &[Material]) -> Result<(), CliError> {
    let need = mesh.max_material_id() as usize + 1;
    if mats.len() < need {
        return Err(CliError::Invalid(format!(
            "mesh uses {need} material ids but {} materials are given",
            mats.len()
        )));
    }
    Ok(())
}

fn bounds(mesh: &Mesh) -> ([f64; 3], [f64; 3]) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in mesh.coords() {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (lo, hi)
}

fn precision_name(p: Precision) -> &'static str {
    match p {
        Precision::F32 => "f32",
        Precision::F64 => "f64",
    }
}

fn fmt_e(v: f64) -> String {
    format!("{v:.6e}")
}

pub fn cmd_mesh(ctx: &Context) -> Result<Summary, CliError> {
    let MeshSource::Box(spec) = &ctx.cfg.mesh else {
        return Err(CliError::Invalid("mesh command needs a generated box in [mesh], not a file".into()));
    };
    let (mesh, dirichlet) = generate_box_mesh(spec)?;
    eprintln!(
        "generated {} elements, {} nodes",
        mesh.element_count(),
        mesh.node_count()
    );
    let mut s = Summary::default();
    s.add("command", "mesh");
    s.add("vertices", mesh.vertex_count());
    s.add("nodes", mesh.node_count());
    s.add("elements", mesh.element_count());
    s.add("material_ids", mesh.max_material_id() + 1);
    s.add("dirichlet_dofs", dirichlet.len());

    ensure_dir(&ctx.out)?;
    let (mp, dp) = (ctx.out.join("mesh.txt"), ctx.out.join("dirichlet.txt"));
    write_mesh(&mesh, &mp).map_err(|e| CliError::write(&mp, e))?;
    write_dirichlet(&dirichlet, &dp).map_err(|e| CliError::write(&dp, e))?;
    s.add("mesh_file", "mesh.txt");
    s.add("dirichlet_file", "dirichlet.txt");
    s.save(&ctx.out.join("mesh.summary"))?;
    Ok(s)
}

fn hierarchy(ctx: &Context, mesh: Mesh, dirichlet: &DirichletSet) -> Result<Hierarchy, CliError> {
    let mats = materials(&ctx.cfg);
    check_materials(&mesh, &mats)?;
    Ok(Hierarchy::build(Arc::new(mesh), &mats, dirichlet, ctx.cfg.aggregate_size, ctx.mode)?)
}

/// Smooth field of the normalized coordinates, shifted per column so columns differ.
fn manufactured_field(mesh: &Mesh, columns: usize) -> VectorBatch64 {
    let (lo, hi) = bounds(mesh);
    let mut u = VectorBatch64::zeros(mesh.node_count(), columns);
    for (i, p) in mesh.coords().iter().enumerate() {
        let [x, y, z] = std::array::from_fn(|a| (p[a] - lo[a]) / (hi[a] - lo[a]).max(f64::MIN_POSITIVE));
        for c in 0..columns {
            let s = 0.37 * c as f64;
            let v = [
                (3.1 * x + s).sin() * (2.0 * y + 0.3).cos() * z,
                (1.7 * y).sin() * (x + z + s).cos() * z * z,
                (2.3 * x * y + s).cos() * z + 0.5 * z,
            ];
            for a in 0..3 {
                u.set(i, a, c, v[a]);
            }
        }
    }
    u
}

fn zero_masked(u: &mut VectorBatch64, h: &Hierarchy) {
    let mask = h.k0.mask();
    for node in 0..u.n_nodes() {
        for a in 0..3 {
            if mask.is_masked(node, a) {
                for c in 0..u.batch() {
                    u.set(node, a, c, 0.0);
                }
            }
        }
    }
}

fn report_totals(s: &mut Summary, reports: &[SolveReport]) {
    s.add("solver_calls", reports.len());
    s.add("outer_iterations", reports.iter().map(|r| r.outer_iterations).sum::<usize>());
    for lvl in 0..3 {
        s.add(
            &format!("inner_iterations_level{lvl}"),
            reports.iter().map(|r| r.inner_iterations[lvl]).sum::<usize>(),
        );
    }
    let max = |f: fn(&SolveReport) -> f64| reports.iter().map(f).fold(0.0, f64::max);
    s.add("max_residual", fmt_e(max(SolveReport::max_residual)));
    s.add("max_true_residual", fmt_e(max(SolveReport::max_true_residual)));
    s.add("converged", reports.iter().all(|r| r.converged));
}

fn save_log(path: &Path, reports: &[SolveReport], batch_size: usize) -> Result<(), CliError> {
    write_atomic(path, |w| {
        for (k, r) in reports.iter().enumerate() {
            writeln!(w, "batch {k} first_column={}", k * batch_size)?;
            for l in r.log_lines() {
                writeln!(w, "{l}")?;
            }
        }
        Ok(())
    })
    .map_err(|e| CliError::write(path, e))
}

pub fn cmd_solve(ctx: &Context) -> Result<Summary, CliError> {
    let cfg = &ctx.cfg;
    let (mesh, dirichlet) = load_mesh(&cfg.mesh)?;
    let vtk_mesh = cfg.solve.vtk.then(|| mesh.clone());
    let rhs_in = match (&cfg.solve.rhs, &cfg.solve.rhs_file) {
        (RhsKind::File, Some(p)) => {
            let f = read_solution(p).map_err(|e| CliError::Invalid(e.to_string()))?;
            if f.n_nodes() != mesh.node_count() {
                return Err(CliError::Invalid(format!(
                    "right-hand side has {} nodes, mesh has {}",
                    f.n_nodes(),
                    mesh.node_count()
                )));
            }
            Some(f)
        }
        _ => None,
    };
    let h = hierarchy(ctx, mesh, &dirichlet)?;
    let n = h.k0.n_nodes();
    let columns = cfg.solve.columns;
    let mut u_star = None;
    let f = match cfg.solve.rhs {
        RhsKind::Manufactured => {
            let mut u = manufactured_field(h.k0.mesh(), columns);
            zero_masked(&mut u, &h);
            let f = h.k0.apply(&u)?;
            u_star = Some(u);
            f
        }
        RhsKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
            let mut f = VectorBatch64::from_raw(n, columns, (0..3 * n * columns).map(|_| rng.gen_range(-1.0..1.0)).collect());
            zero_masked(&mut f, &h);
            f
        }
        RhsKind::File => rhs_in.expect("read above"),
    };
    eprintln!(
        "solving {} dofs, {} right-hand sides in batches of {}",
        3 * n,
        f.batch(),
        cfg.solver.batch_size
    );
    let (u, reports) = solve_batched(&h, &f, &cfg.solver)?;

    let mut s = Summary::default();
    s.add("command", "solve");
    s.add("nodes", n);
    s.add("dofs", 3 * n);
    s.add("columns", f.batch());
    s.add("batch_size", cfg.solver.batch_size);
    s.add("inner_precision", precision_name(cfg.solver.inner_precision));
    s.add("outer_tol", fmt_e(cfg.solver.outer_tol));
    report_totals(&mut s, &reports);
    if let Some(us) = &u_star {
        let mut e = u.clone();
        e.rsub_from(us, ExecMode::Serial);
        let en = e.norms_sq(ExecMode::Serial);
        let un = us.norms_sq(ExecMode::Serial);
        let worst = en.iter().zip(&un).map(|(a, b)| a / b).fold(0.0, f64::max);
        s.add("max_error_sq", fmt_e(worst));
    }

    ensure_dir(&ctx.out)?;
    let sp = ctx.out.join("solution.bin");
    write_solution(&sp, &u).map_err(|e| CliError::write(&sp, e))?;
    save_log(&ctx.out.join("solve.log"), &reports, cfg.solver.batch_size)?;
    if let Some(m) = vtk_mesh {
        let vp = ctx.out.join("solution.vtk");
        write_vtk(&vp, &m, &u, 0).map_err(|e| CliError::write(&vp, e))?;
    }
    s.save(&ctx.out.join("solve.summary"))?;
    Ok(s)
}

fn surface_grid(mesh: &Mesh, nx: usize, ny: usize) -> Vec<Observation> {
    let (lo, hi) = bounds(mesh);
    let mut obs = Vec::with_capacity(3 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = lo[0] + (hi[0] - lo[0]) * (i as f64 + 0.5) / nx as f64;
            let y = lo[1] + (hi[1] - lo[1]) * (j as f64 + 0.5) / ny as f64;
            for axis in 0..3 {
                obs.push(Observation {
                    point: [x, y, hi[2]],
                    axis,
                });
            }
        }
    }
    obs
}

fn observations(src: &ObservationSource, mesh: &Mesh) -> Result<(Vec<Observation>, Option<Vec<f64>>), CliError> {
    match src {
        ObservationSource::File(p) => Ok(read_observations(p)?),
        ObservationSource::SurfaceGrid(nx, ny) => Ok((surface_grid(mesh, *nx, *ny), None)),
    }
}

fn greens_path(ctx: &Context) -> PathBuf {
    ctx.cfg
        .greens_output
        .clone()
        .unwrap_or_else(|| ctx.out.join("greens.bin"))
}

pub fn cmd_greens(ctx: &Context) -> Result<Summary, CliError> {
    let cfg = &ctx.cfg;
    let fault = cfg
        .fault
        .as_ref()
        .ok_or_else(|| CliError::Invalid("greens needs a [fault] section".into()))?;
    let obs_src = cfg
        .observations
        .as_ref()
        .ok_or_else(|| CliError::Invalid("greens needs an [observations] section".into()))?;
    let (origin, length, width) = fault
        .definition
        .rectangle
        .ok_or_else(|| CliError::Invalid("slip basis centers need a fault rectangle".into()))?;
    let (mesh, dirichlet) = load_mesh(&cfg.mesh)?;
    let geometry = fault.definition.geometry();
    let faces = fault.definition.faces(&mesh)?;
    let patch = FaultPatch::new(&mesh, &faces, geometry, &dirichlet)?;
    let centers = center_grid(&patch, origin, length, width, fault.centers[0], fault.centers[1]);
    let mut units: Vec<UnitSlip> = Vec::new();
    for &dir in &fault.directions {
        for &c in &centers {
            units.push(unit_slip_basis(&patch, c, dir, fault.radius)?);
        }
    }
    let (obs, _) = observations(obs_src, &mesh)?;
    let h = hierarchy(ctx, mesh, &dirichlet)?;
    eprintln!(
        "computing {} unit-slip responses at {} observations in batches of {}",
        units.len(),
        obs.len(),
        cfg.solver.batch_size
    );
    let mut solver = MultigridBatchSolver::new(&h, cfg.solver.clone());
    let bank = compute_greens_bank(&h.k0, &patch, &units, &obs, cfg.solver.batch_size, &mut solver)?;

    let mut s = Summary::default();
    s.add("command", "greens");
    s.add("dofs", 3 * h.k0.n_nodes());
    s.add("fault_faces", patch.faces().len());
    s.add("fault_nodes", patch.nodes().len());
    s.add("rows", bank.matrix.nrows());
    s.add("cols", bank.matrix.ncols());
    s.add("batch_size", cfg.solver.batch_size);
    report_totals(&mut s, &solver.reports);

    ensure_dir(&ctx.out)?;
    let gp = greens_path(ctx);
    if let Some(dir) = gp.parent() {
        ensure_dir(dir)?;
    }
    write_greens(&gp, &bank).map_err(|e| CliError::write(&gp, e))?;
    save_log(&ctx.out.join("greens.log"), &solver.reports, cfg.solver.batch_size)?;
    // relative to the output directory when inside it, so runs compare cleanly
    s.add("greens_file", gp.strip_prefix(&ctx.out).unwrap_or(&gp).display());
    s.save(&ctx.out.join("greens.summary"))?;
    Ok(s)
}

/// Smooth synthetic slip: a Gaussian bump over the basis centers, half as
/// strong in the second and later directions.
fn synthetic_slip(slips: &[UnitSlip]) -> DVector<f64> {
    let n = slips.len() as f64;
    let mid: [f64; 3] = std::array::from_fn(|a| slips.iter().map(|s| s.center[a]).sum::<f64>() / n);
    let d2 = |s: &UnitSlip| (0..3).map(|a| (s.center[a] - mid[a]).powi(2)).sum::<f64>();
    let spread = slips.iter().map(d2).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let first = slips.first().map(|s| s.direction);
    DVector::from_iterator(
        slips.len(),
        slips.iter().map(|s| {
            let w = if Some(s.direction) == first { 1.0 } else { 0.5 };
            w * (-d2(s) / spread).exp()
        }),
    )
}

pub fn cmd_invert(ctx: &Context) -> Result<Summary, CliError> {
    let inv = &ctx.cfg.inversion;
    if let AlphaGrid::Log { count, .. } = inv.alphas {
        if count < 5 {
            return Err(CliError::Invalid(format!("L-curve needs at least 5 alphas, got {count}")));
        }
    }
    if let AlphaGrid::List(a) = &inv.alphas {
        if a.len() < 5 {
            return Err(CliError::Invalid(format!("L-curve needs at least 5 alphas, got {}", a.len())));
        }
    }
    let gp = inv.greens.clone().unwrap_or_else(|| greens_path(ctx));
    if !gp.is_file() {
        return Err(CliError::Invalid(format!("Green's function bank '{}' not found", gp.display())));
    }
    let bank = read_greens(&gp).map_err(|e| CliError::Invalid(e.to_string()))?;
    let g = &bank.matrix;

    let mut truth = None;
    let d = match &inv.data {
        DataSource::File(p) => {
            let (obs, values) = read_observations(p)?;
            let values = values.ok_or_else(|| CliError::Invalid(format!("{}: observations carry no values", p.display())))?;
            let same = obs.len() == bank.observations.len()
                && obs.iter().zip(&bank.observations).all(|(a, b)| {
                    a.axis == b.axis && (0..3).all(|k| (a.point[k] - b.point[k]).abs() <= 1e-9 * (1.0 + b.point[k].abs()))
                });
            if !same {
                return Err(CliError::Invalid(format!(
                    "{}: observations do not match the rows of the Green's function bank",
                    p.display()
                )));
            }
            DVector::from_vec(values)
        }
        DataSource::Synthetic { noise } => {
            let a = synthetic_slip(&bank.slips);
            let mut d = g * &a;
            let amp = noise * d.amax();
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
            for v in d.iter_mut() {
                *v += amp * rng.gen_range(-1.0..=1.0);
            }
            truth = Some(a);
            d
        }
    };

    let centers: Vec<[f64; 3]> = bank.slips.iter().map(|s| s.center).collect();
    let neighbor = inv
        .neighbor_distance
        .unwrap_or_else(|| 1.5 * nearest_spacing(&centers).unwrap_or(1.0));
    let l = smoothing_from_slips(&bank.slips, neighbor);
    let alphas = match &inv.alphas {
        AlphaGrid::List(a) => a.clone(),
        AlphaGrid::Log { min, max, count } => {
            let ln = l.norm();
            let scale = if ln > 0.0 { g.norm() / ln } else { g.norm() };
            log_grid(min.unwrap_or(1e-6 * scale), max.unwrap_or(scale), *count)
        }
    };
    eprintln!(
        "inverting {} observations for {} coefficients over {} alphas",
        g.nrows(),
        g.ncols(),
        alphas.len()
    );
    let lc = select_alpha_lcurve(g, &d, &l, &alphas)?;

    let mut s = Summary::default();
    s.add("command", "invert");
    s.add("observations", g.nrows());
    s.add("unknowns", g.ncols());
    s.add("neighbor_distance", fmt_e(neighbor));
    s.add("alphas", alphas.len());
    s.add("selected_index", lc.selected);
    s.add("selected_alpha", fmt_e(lc.alpha()));
    s.add("residual", fmt_e(lc.solution.residual));
    s.add("seminorm", fmt_e(lc.solution.seminorm));
    if let Some(a) = &truth {
        s.add("synthetic_rel_error", fmt_e((&lc.solution.a - a).norm() / a.norm()));
    }

    ensure_dir(&ctx.out)?;
    let lp = ctx.out.join("lcurve.txt");
    lc.save_report(&lp).map_err(|e| CliError::write(&lp, e))?;
    let sp = ctx.out.join("slip.txt");
    write_atomic(&sp, |w| {
        writeln!(w, "# x y z direction radius coefficient")?;
        for (u, c) in bank.slips.iter().zip(lc.solution.a.iter()) {
            let p = u.center;
            writeln!(w, "{:e} {:e} {:e} {} {:e} {:e}", p[0], p[1], p[2], u.direction.name(), u.radius, c)?;
        }
        Ok(())
    })
    .map_err(|e| CliError::write(&sp, e))?;
    s.save(&ctx.out.join("invert.summary"))?;
    Ok(s)
}
