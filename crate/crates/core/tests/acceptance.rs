//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line to
//! the real stdout (bypassing the harness capture) and then asserts.

use std::hash::{DefaultHasher, Hasher};
use std::io::Write;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use crustfem::ebe::{BlockCsr, EbeOperator, ElementOrder, LinearOperator};
use crustfem::elasticity::Material;
use crustfem::fault::{
    center_grid, compute_greens_bank, faces_in_rectangle, unit_slip_basis, BatchSolver, FaultGeometry, FaultPatch,
    MultigridBatchSolver, Observation, SlipDirection, UnitSlip,
};
use crustfem::inversion::{log_grid, select_alpha_lcurve, smoothing_from_slips};
use crustfem::mesh::{generate_box_mesh, BoxMeshSpec, DirichletSet, DofMask, FixedBoundary, Mesh, TET_FACES};
use crustfem::multigrid::Hierarchy;
use crustfem::solver::{solve, solve_pcge, SolveReport, SolverConfig};
use crustfem::{ExecMode, Precision, VectorBatch32, VectorBatch64};
use nalgebra::{DVector, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
struct Outcome {
    pass: bool,
    detail: String,
    digest: u64,
}

fn report(n: usize, o: &Outcome) {
    let line = format!("criterion {n}: {} {}\n", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

#[derive(Default)]
struct Digest(DefaultHasher);

impl Digest {
    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.0.write_u64(x.to_bits());
        }
    }
    fn f32s(&mut self, v: &[f32]) {
        for x in v {
            self.0.write_u32(x.to_bits());
        }
    }
    fn usize(&mut self, v: usize) {
        self.0.write_usize(v);
    }
    fn report(&mut self, r: &SolveReport) {
        self.usize(r.outer_iterations);
        for i in r.inner_iterations {
            self.usize(i);
        }
        self.f64s(&r.residuals);
        self.f64s(&r.true_residuals);
    }
    fn finish(&self) -> u64 {
        self.0.finish()
    }
}

fn two_layer_crust() -> [Material; 2] {
    [
        Material::from_wavespeeds(1600.0, 400.0, 1850.0).unwrap(),
        Material::from_wavespeeds(5800.0, 3000.0, 2700.0).unwrap(),
    ]
}

fn random_batch(n: usize, b: usize, rng: &mut ChaCha8Rng) -> VectorBatch64 {
    VectorBatch64::from_raw(n, b, (0..3 * n * b).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn zero_masked(u: &mut VectorBatch64, mask: &DofMask) {
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

fn rel_diff(a: &VectorBatch64, b: &VectorBatch64) -> f64 {
    let mut d = a.clone();
    d.rsub_from(b, ExecMode::Serial);
    let dn = d.norms_sq(ExecMode::Serial);
    let bn = b.norms_sq(ExecMode::Serial);
    dn.iter().zip(&bn).map(|(x, y)| (x / y).sqrt()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// 1. EBE matvec equals assembled matvec

fn criterion1() -> Outcome {
    let t = Instant::now();
    let spec = BoxMeshSpec::new([3.0, 3.0, 2.0], [12, 12, 11]).with_layers(vec![1.2]);
    let (m, d) = generate_box_mesh(&spec).unwrap();
    let ne = m.element_count();
    let op = EbeOperator::with_dirichlet(Arc::new(m), ElementOrder::Quadratic, &two_layer_crust(), &d).unwrap();
    let k = BlockCsr::assemble(&op).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut dg = Digest::default();
    let (mut e64, mut e32) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let u = random_batch(op.n_nodes(), 1, &mut rng);
        let want = k.apply(&u).unwrap();
        let scale = want.max_abs();
        let got = op.apply(&u).unwrap();
        let u32_: VectorBatch32 = u.cast();
        let got32 = op.apply(&u32_).unwrap();
        let want32 = k.apply(&u32_.cast::<f64>()).unwrap();
        for (g, w) in got.as_slice().iter().zip(want.as_slice()) {
            e64 = e64.max((g - w).abs() / scale);
        }
        for (g, w) in got32.as_slice().iter().zip(want32.as_slice()) {
            e32 = e32.max((*g as f64 - w).abs() / scale);
        }
        dg.f64s(got.as_slice());
        dg.f32s(got32.as_slice());
    }
    let el = t.elapsed();
    Outcome {
        pass: e64 <= 1e-12 && e32 <= 1e-5 && el < Duration::from_secs(10),
        detail: format!("elements={ne} max_rel_f64={e64:.2e} (<=1e-12) max_rel_f32={e32:.2e} (<=1e-5) time={el:.1?} (<10s)"),
        digest: dg.finish(),
    }
}

// ---------------------------------------------------------------------------
// 2. Patch test: linear fields give exact boundary tractions

fn criterion2() -> Outcome {
    let (m, _) = generate_box_mesh(&BoxMeshSpec::new([1.0; 3], [2, 2, 2]).with_boundary(FixedBoundary::None)).unwrap();
    let n = m.node_count();
    let mat = Material::from_lame(1.7, 0.8);
    let op = EbeOperator::new(Arc::new(m.clone()), ElementOrder::Quadratic, &[mat], DofMask::none(n)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    let mut dg = Digest::default();
    for _ in 0..5 {
        let g = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let c: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let mut u = VectorBatch64::zeros(n, 1);
        for (i, p) in m.coords().iter().enumerate() {
            for a in 0..3 {
                u.set(i, a, 0, c[a] + g[(a, 0)] * p[0] + g[(a, 1)] * p[1] + g[(a, 2)] * p[2]);
            }
        }
        let eps = 0.5 * (g + g.transpose());
        let sigma = Matrix3::identity() * (mat.lambda * eps.trace()) + eps * (2.0 * mat.mu);

        // a constant traction on a straight 6-node triangle loads only the
        // mid-side nodes, each with a third of the face force
        let mut oracle = VectorBatch64::zeros(n, 1);
        for (key, owners) in m.face_map() {
            if owners.len() != 1 {
                continue;
            }
            let (e, lf) = (owners[0].0 as usize, owners[0].1 as usize);
            let p = key.map(|v| m.coords()[v as usize]);
            let (e1, e2) = (
                nalgebra::Vector3::from(p[1]) - nalgebra::Vector3::from(p[0]),
                nalgebra::Vector3::from(p[2]) - nalgebra::Vector3::from(p[0]),
            );
            let mut nrm = e1.cross(&e2);
            let area = 0.5 * nrm.norm();
            nrm /= 2.0 * area;
            let opp = nalgebra::Vector3::from(m.coords()[m.tets10()[e][lf] as usize]);
            if nrm.dot(&(opp - nalgebra::Vector3::from(p[0]))) > 0.0 {
                nrm = -nrm;
            }
            let t = sigma * nrm * (area / 3.0);
            let fv = TET_FACES[lf];
            for (i, j) in [(0, 1), (1, 2), (0, 2)] {
                let mid = m.edge_node(m.tets10()[e][fv[i]], m.tets10()[e][fv[j]]).unwrap() as usize;
                for a in 0..3 {
                    oracle.set(mid, a, 0, oracle.get(mid, a, 0) + t[a]);
                }
            }
        }
        let f = op.apply(&u).unwrap();
        let scale = oracle.max_abs();
        for (x, y) in f.as_slice().iter().zip(oracle.as_slice()) {
            worst = worst.max((x - y).abs() / scale);
        }
        dg.f64s(f.as_slice());
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("max_rel_force_error={worst:.2e} (<=1e-10) over 5 linear fields"),
        digest: dg.finish(),
    }
}

// ---------------------------------------------------------------------------
// 3, 5, 6. Manufactured solution on the two-layer box

struct Manufactured {
    h: Hierarchy,
    u_star: VectorBatch64,
    f: VectorBatch64,
}

fn manufactured() -> Manufactured {
    let spec = BoxMeshSpec::new([2000.0, 2000.0, 1000.0], [10, 10, 10]).with_layers(vec![700.0]);
    let (m, d) = generate_box_mesh(&spec).unwrap();
    let h = Hierarchy::build(Arc::new(m), &two_layer_crust(), &d, 8, ExecMode::Parallel).unwrap();
    let n = h.k0.n_nodes();
    let mut u = VectorBatch64::zeros(n, 1);
    for (i, p) in h.k0.mesh().coords().iter().enumerate() {
        let (x, y, z) = (p[0] / 2000.0, p[1] / 2000.0, p[2] / 1000.0);
        let v = [
            (3.1 * x).sin() * (2.0 * y + 0.3).cos() * z,
            (1.7 * y).sin() * (x + z).cos() * z * z,
            (2.3 * x * y).cos() * z + 0.5 * z,
        ];
        for a in 0..3 {
            u.set(i, a, 0, v[a]);
        }
    }
    zero_masked(&mut u, h.k0.mask());
    let f = h.k0.apply(&u).unwrap();
    Manufactured { h, u_star: u, f }
}

struct Run3 {
    err_sq: f64,
    report: SolveReport,
    elapsed: Duration,
    dofs: usize,
    pcge_report: SolveReport,
}

fn run3() -> Run3 {
    let t = Instant::now();
    let ms = manufactured();
    let cfg = SolverConfig::default();
    assert_eq!(cfg.inner_precision, Precision::F32);
    let n = ms.f.n_nodes();
    let (u, report) = solve(&ms.h, &ms.f, &VectorBatch64::zeros(n, 1), &cfg).unwrap();
    let elapsed = t.elapsed();
    let (_, pcge_report) = solve_pcge(&ms.h.k0, &ms.f, &VectorBatch64::zeros(n, 1), cfg.outer_tol, 100_000).unwrap();
    let mut e = u;
    e.rsub_from(&ms.u_star, ExecMode::Serial);
    Run3 {
        err_sq: e.norms_sq(ExecMode::Serial)[0] / ms.u_star.norms_sq(ExecMode::Serial)[0],
        report,
        elapsed,
        dofs: 3 * n,
        pcge_report,
    }
}

fn criterion3_from(r: &Run3) -> Outcome {
    let e2 = r.err_sq;
    let tr = r.report.max_true_residual();
    let mut dg = Digest::default();
    dg.report(&r.report);
    dg.f64s(&[e2]);
    Outcome {
        pass: e2 <= 1e-7 && tr <= 1e-8 && r.elapsed < Duration::from_secs(60),
        detail: format!(
            "dofs={} eps=1e-8 |u-u*|^2/|u*|^2={e2:.2e} (<=1e-7; unsquared {:.2e}) true_residual={tr:.2e} (<=1e-8) outer={} time={:.1?} (<60s)",
            r.dofs,
            e2.sqrt(),
            r.report.outer_iterations,
            r.elapsed
        ),
        digest: dg.finish(),
    }
}

fn criterion5_from(r: &Run3) -> Outcome {
    let c3 = criterion3_from(r);
    let tr = r.report.max_true_residual();
    Outcome {
        pass: c3.pass && tr <= 1e-8,
        detail: format!(
            "inner=f32 criterion3={} 64-bit true residual={tr:.2e} (<=1e-8) inner_iterations={:?}",
            if c3.pass { "pass" } else { "fail" },
            r.report.inner_iterations
        ),
        digest: c3.digest,
    }
}

fn criterion6_from(r: &Run3) -> Outcome {
    let mg = r.report.outer_iterations;
    let pcge = r.pcge_report.outer_iterations;
    let mut dg = Digest::default();
    dg.report(&r.report);
    dg.report(&r.pcge_report);
    Outcome {
        pass: r.pcge_report.converged && 5 * mg <= pcge,
        detail: format!(
            "multigrid outer={mg} pcge={pcge} ratio={:.1} (>=5)",
            pcge as f64 / mg as f64
        ),
        digest: dg.finish(),
    }
}

// ---------------------------------------------------------------------------
// 4. Direct-solve oracle

fn criterion4() -> Outcome {
    let spec = BoxMeshSpec::new([2000.0, 1600.0, 1000.0], [5, 4, 4]).with_layers(vec![700.0]);
    let (m, d) = generate_box_mesh(&spec).unwrap();
    let h = Hierarchy::build(Arc::new(m), &two_layer_crust(), &d, 8, ExecMode::Parallel).unwrap();
    let n = h.k0.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut f = random_batch(n, 1, &mut rng);
    zero_masked(&mut f, h.k0.mask());
    let k = BlockCsr::assemble(&h.k0).unwrap().to_dense();
    let direct = k.lu().solve(&DVector::from_vec(f.column(0))).unwrap();
    let direct = VectorBatch64::from_columns(n, &[direct.as_slice().to_vec()]);
    let cfg = SolverConfig {
        outer_tol: 1e-20,
        ..SolverConfig::default()
    };
    let (u, rep) = solve(&h, &f, &VectorBatch64::zeros(n, 1), &cfg).unwrap();
    let rel = rel_diff(&u, &direct);
    let mut dg = Digest::default();
    dg.report(&rep);
    dg.f64s(u.as_slice());
    Outcome {
        pass: 3 * n <= 3000 && rel <= 1e-7,
        detail: format!("dofs={} eps=1e-20 |u-u_lu|/|u_lu|={rel:.2e} (<=1e-7)", 3 * n),
        digest: dg.finish(),
    }
}

// ---------------------------------------------------------------------------
// 7. Batched vs individual solves

fn criterion7() -> Outcome {
    let spec = BoxMeshSpec::new([2000.0, 2000.0, 1000.0], [6, 6, 5]).with_layers(vec![700.0]);
    let (m, d) = generate_box_mesh(&spec).unwrap();
    let h = Hierarchy::build(Arc::new(m), &two_layer_crust(), &d, 8, ExecMode::Parallel).unwrap();
    let n = h.k0.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut f = random_batch(n, 16, &mut rng);
    zero_masked(&mut f, h.k0.mask());
    let cfg = SolverConfig {
        outer_tol: 1e-16,
        ..SolverConfig::default()
    };
    let mut dg = Digest::default();
    let (ub, rep) = solve(&h, &f, &VectorBatch64::zeros(n, 16), &cfg).unwrap();
    dg.report(&rep);
    dg.f64s(ub.as_slice());
    let mut worst = 0.0f64;
    for c in 0..16 {
        let (uc, rc) = solve(&h, &f.columns(c..c + 1), &VectorBatch64::zeros(n, 1), &cfg).unwrap();
        dg.report(&rc);
        worst = worst.max(rel_diff(&ub.columns(c..c + 1), &uc));
    }
    let one = f.column(3);
    let same = VectorBatch64::from_columns(n, &vec![one; 16]);
    let (us, _) = solve(&h, &same, &VectorBatch64::zeros(n, 16), &cfg).unwrap();
    let c0 = us.column(0);
    let identical = (1..16).all(|c| {
        us.column(c)
            .iter()
            .zip(&c0)
            .all(|(a, b)| a.to_bits() == b.to_bits())
    });
    dg.f64s(us.as_slice());
    Outcome {
        pass: worst <= 1e-6 && identical,
        detail: format!(
            "dofs={} eps=1e-16 max_rel_batch_vs_single={worst:.2e} (<=1e-6) identical_columns_bitwise={identical}",
            3 * n
        ),
        digest: dg.finish(),
    }
}

// ---------------------------------------------------------------------------
// 8. 368 unit slips in batches of 16

fn surface_observations(xs: &[f64], ys: &[f64], z: f64) -> Vec<Observation> {
    let mut obs = Vec::new();
    for &y in ys {
        for &x in xs {
            for axis in 0..3 {
                obs.push(Observation { point: [x, y, z], axis });
            }
        }
    }
    obs
}

fn faulted_model(
    extents: [f64; 3],
    div: [usize; 3],
    layer: f64,
    origin: [f64; 3],
    length: f64,
    width: f64,
) -> (Hierarchy, FaultPatch, DirichletSet) {
    let (m, d): (Mesh, DirichletSet) =
        generate_box_mesh(&BoxMeshSpec::new(extents, div).with_layers(vec![layer])).unwrap();
    let g = FaultGeometry::new(90.0, 90.0);
    let faces = faces_in_rectangle(&m, origin, &g, length, width);
    let patch = FaultPatch::new(&m, &faces, g, &d).unwrap();
    let h = Hierarchy::build(Arc::new(m), &two_layer_crust(), &d, 8, ExecMode::Parallel).unwrap();
    (h, patch, d)
}

fn criterion8() -> Outcome {
    let (h, patch, _) = faulted_model([14.0, 2.0, 10.0], [14, 2, 10], 7.0, [1.0, 1.0, 10.0], 12.0, 8.0);
    let centers = center_grid(&patch, [1.0, 1.0, 10.0], 12.0, 8.0, 23, 8);
    let mut units: Vec<UnitSlip> = Vec::new();
    for dir in [SlipDirection::Strike, SlipDirection::Dip] {
        for &c in &centers {
            units.push(unit_slip_basis(&patch, c, dir, 0.75).unwrap());
        }
    }
    let obs = surface_observations(&[0.5, 3.5, 7.0, 10.5, 13.5], &[0.5, 1.5], 10.0);
    let mut solver = MultigridBatchSolver::new(&h, SolverConfig::default());
    let bank = compute_greens_bank(&h.k0, &patch, &units, &obs, 16, &mut solver).unwrap();
    let widths_ok = solver.reports.len() == 23;
    let mut dg = Digest::default();
    dg.f64s(bank.matrix.as_slice());
    for r in &solver.reports {
        dg.report(r);
    }
    let distinct: std::collections::BTreeSet<u32> = centers.iter().copied().collect();
    Outcome {
        pass: units.len() == 368 && solver.calls() == 23 && widths_ok && bank.matrix.ncols() == 368,
        detail: format!(
            "unit_slips={} ({} centers x 2 directions, fault nodes={}) batch=16 solver_calls={} (==23)",
            units.len(),
            distinct.len(),
            patch.nodes().len(),
            solver.calls()
        ),
        digest: dg.finish(),
    }
}

// ---------------------------------------------------------------------------
// 9. Synthetic inversion round trip

fn criterion9() -> Outcome {
    let t = Instant::now();
    let (h, patch, _) = faulted_model([16.0, 16.0, 14.0], [16, 16, 14], 10.0, [4.0, 8.0, 14.0], 8.0, 8.0);
    let dofs = 3 * h.k0.n_nodes();
    let (ns, nd) = (3, 3);
    let centers = center_grid(&patch, [4.0, 8.0, 14.0], 8.0, 8.0, ns, nd);
    let mut units = Vec::new();
    for dir in [SlipDirection::Strike, SlipDirection::Dip] {
        for &c in &centers {
            units.push(unit_slip_basis(&patch, c, dir, 3.0).unwrap());
        }
    }
    let coords: Vec<f64> = (0..12).map(|i| 1.0 + 1.3 * i as f64).collect();
    let obs = surface_observations(&coords, &coords, 14.0);
    let mut solver = MultigridBatchSolver::new(&h, SolverConfig::default());
    let bank = compute_greens_bank(&h.k0, &patch, &units, &obs, 16, &mut solver).unwrap();
    let g = &bank.matrix;

    // strike-slip patch in the shallow along-strike corner, dip-slip patch deeper on the far side
    let nc = centers.len();
    let mut a_star = DVector::zeros(2 * nc);
    for k in [0, 1, 3] {
        a_star[k] = 1.0;
    }
    for k in [5, 7, 8] {
        a_star[nc + k] = 0.8;
    }
    let d = g * &a_star;
    let l = smoothing_from_slips(&units, 2.0);
    let scale = g.norm() / l.norm();
    let alphas: Vec<f64> = log_grid(1e-6, 1.0, 25).iter().map(|a| a * scale).collect();
    let lc = select_alpha_lcurve(g, &d, &l, &alphas).unwrap();
    let err = (&lc.solution.a - &a_star).norm() / a_star.norm();
    // error of the best grid point, for the record
    let best = alphas
        .iter()
        .map(|&al| {
            let s = crustfem::inversion::solve_regularized(g, &d, &l, al).unwrap();
            (&s.a - &a_star).norm() / a_star.norm()
        })
        .fold(f64::INFINITY, f64::min);
    let max_curv = lc.points.iter().map(|p| p.curvature).fold(f64::NEG_INFINITY, f64::max);
    let mono_r = lc.points.windows(2).all(|w| w[1].residual >= w[0].residual * (1.0 - 1e-10));
    let mono_s = lc.points.windows(2).all(|w| w[1].seminorm <= w[0].seminorm * (1.0 + 1e-10));
    let el = t.elapsed();
    let mut dg = Digest::default();
    dg.f64s(g.as_slice());
    dg.f64s(lc.solution.a.as_slice());
    dg.usize(lc.selected);
    Outcome {
        pass: err <= 0.05 && mono_r && mono_s && el < Duration::from_secs(600),
        detail: format!(
            "dofs={dofs} unknowns={} observations={} alpha*={:.3e} (grid index {}/{}) rel_error={err:.2e} (<=5e-2) best_on_grid={best:.2e} max_curvature={max_curv:.2e} residual_monotone={mono_r} seminorm_monotone={mono_s} time={el:.1?} (<600s)",
            2 * nc,
            obs.len(),
            lc.alpha(),
            lc.selected,
            alphas.len() - 1
        ),
        digest: dg.finish(),
    }
}

// ---------------------------------------------------------------------------

fn run_all() -> Vec<Outcome> {
    let r3 = run3();
    vec![
        criterion1(),
        criterion2(),
        criterion3_from(&r3),
        criterion4(),
        criterion5_from(&r3),
        criterion6_from(&r3),
        criterion7(),
        criterion8(),
        criterion9(),
    ]
}

static RUN3: OnceLock<Run3> = OnceLock::new();
static FIRST: OnceLock<Vec<OnceLock<Outcome>>> = OnceLock::new();

fn first(n: usize) -> Outcome {
    let slots = FIRST.get_or_init(|| (0..9).map(|_| OnceLock::new()).collect());
    slots[n - 1]
        .get_or_init(|| match n {
            1 => criterion1(),
            2 => criterion2(),
            3 => criterion3_from(RUN3.get_or_init(run3)),
            4 => criterion4(),
            5 => criterion5_from(RUN3.get_or_init(run3)),
            6 => criterion6_from(RUN3.get_or_init(run3)),
            7 => criterion7(),
            8 => criterion8(),
            9 => criterion9(),
            _ => unreachable!(),
        })
        .clone()
}

fn check(n: usize) {
    let o = first(n);
    report(n, &o);
    assert!(o.pass, "criterion {n} failed: {}", o.detail);
}

#[test]
fn criterion_01_ebe_matches_assembled() {
    check(1);
}

#[test]
fn criterion_02_patch_test() {
    check(2);
}

#[test]
fn criterion_03_manufactured_solution() {
    check(3);
}

#[test]
fn criterion_04_direct_solve_oracle() {
    check(4);
}

#[test]
fn criterion_05_mixed_precision() {
    check(5);
}

#[test]
fn criterion_06_preconditioner_effectiveness() {
    check(6);
}

#[test]
fn criterion_07_batch_equivalence() {
    check(7);
}

#[test]
fn criterion_08_batch_dispatch_count() {
    check(8);
}

#[test]
fn criterion_09_inversion_round_trip() {
    check(9);
}

#[test]
fn criterion_10_determinism() {
    let a: Vec<Outcome> = (1..=9).map(first).collect();
    let b = run_all();
    let differing: Vec<usize> = a
        .iter()
        .zip(&b)
        .enumerate()
        .filter(|(_, (x, y))| x.digest != y.digest)
        .map(|(i, _)| i + 1)
        .collect();
    let o = Outcome {
        pass: differing.is_empty(),
        detail: format!("criteria 1-9 rerun with identical seeds; differing digests: {differing:?}"),
        digest: 0,
    };
    report(10, &o);
    assert!(o.pass, "{}", o.detail);
}
