use std::sync::Arc;

use crustfem::ebe::LinearOperator;
use crustfem::elasticity::Material;
use crustfem::mesh::{generate_box_mesh, BoxMeshSpec};
use crustfem::multigrid::Hierarchy;
use crustfem::solver::{solve, SolverConfig, SolverError};
use crustfem::{ExecMode, Precision, VectorBatch64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn hierarchy() -> Hierarchy {
    let spec = BoxMeshSpec::new([2000.0, 2000.0, 1000.0], [4, 4, 3]).with_layers(vec![700.0]);
    let (m, d) = generate_box_mesh(&spec).unwrap();
    let mats = [
        Material::from_wavespeeds(2600.0, 1500.0, 2200.0).unwrap(),
        Material::from_wavespeeds(6000.0, 3400.0, 2800.0).unwrap(),
    ];
    Hierarchy::build(Arc::new(m), &mats, &d, 8, ExecMode::Parallel).unwrap()
}

fn rhs(h: &Hierarchy, b: usize, seed: u64) -> VectorBatch64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = h.k0.n_nodes();
    let mut u = VectorBatch64::from_raw(n, b, (0..3 * n * b).map(|_| rng.gen_range(-1.0..1.0)).collect());
    for node in 0..n {
        for a in 0..3 {
            if h.k0.mask().is_masked(node, a) {
                for c in 0..b {
                    u.set(node, a, c, 0.0);
                }
            }
        }
    }
    h.k0.apply(&u).unwrap()
}

fn true_residuals(h: &Hierarchy, f: &VectorBatch64, u: &VectorBatch64) -> Vec<f64> {
    let mut r = h.k0.apply(u).unwrap();
    r.rsub_from(f, ExecMode::Serial);
    let rn = r.norms_sq(ExecMode::Serial);
    let fnn = f.norms_sq(ExecMode::Serial);
    rn.iter().zip(&fnn).map(|(a, b)| a / b).collect()
}

#[test]
fn converged_residual_is_recomputed_and_bounded() {
    let h = hierarchy();
    let f = rhs(&h, 1, 1);
    for p in [Precision::F32, Precision::F64] {
        let cfg = SolverConfig {
            inner_precision: p,
            ..SolverConfig::default()
        };
        let (u, rep) = solve(&h, &f, &VectorBatch64::zeros(f.n_nodes(), 1), &cfg).unwrap();
        assert!(rep.converged);
        assert!(true_residuals(&h, &f, &u)[0] <= cfg.outer_tol);
        assert!(rep.max_true_residual() <= cfg.outer_tol);
        println!(
            "{p:?}: {} outer, nonmonotone {}/{}",
            rep.outer_iterations, rep.nonmonotone_steps, rep.outer_iterations
        );
    }
}

#[test]
fn batched_columns_each_meet_tolerance() {
    let h = hierarchy();
    let f = rhs(&h, 4, 2);
    let cfg = SolverConfig::default();
    let (u, _) = solve(&h, &f, &VectorBatch64::zeros(f.n_nodes(), 4), &cfg).unwrap();
    for (c, r) in true_residuals(&h, &f, &u).iter().enumerate() {
        assert!(*r <= cfg.outer_tol, "column {c}: {r}");
        let fc = f.columns(c..c + 1);
        let (uc, _) = solve(&h, &fc, &VectorBatch64::zeros(f.n_nodes(), 1), &cfg).unwrap();
        assert!(true_residuals(&h, &fc, &uc)[0] <= cfg.outer_tol);
    }
}

#[test]
fn zero_column_stays_zero() {
    let h = hierarchy();
    let mut f = rhs(&h, 2, 3);
    f.set_column(1, &vec![0.0; 3 * f.n_nodes()]);
    let (u, _) = solve(&h, &f, &VectorBatch64::zeros(f.n_nodes(), 2), &SolverConfig::default()).unwrap();
    assert!(u.column(1).iter().all(|v| *v == 0.0));
}

#[test]
fn iteration_cap_reports_non_convergence() {
    let h = hierarchy();
    let f = rhs(&h, 1, 4);
    let cfg = SolverConfig {
        outer_max_iter: 1,
        outer_tol: 1e-20,
        ..SolverConfig::default()
    };
    match solve(&h, &f, &VectorBatch64::zeros(f.n_nodes(), 1), &cfg) {
        Err(SolverError::NotConverged(rep)) => assert!(!rep.converged && rep.outer_iterations == 1),
        other => panic!("expected non-convergence, got {:?}", other.map(|r| r.1.outer_iterations)),
    }
}

#[test]
fn maxwell_betti_reciprocity() {
    // displacement at B from a unit force at A equals displacement at A from the same force at B
    let h = hierarchy();
    let n = h.k0.n_nodes();
    let free: Vec<usize> = (0..n).filter(|&i| !(0..3).any(|a| h.k0.mask().is_masked(i, a))).collect();
    let (na, nb) = (free[3], free[free.len() - 5]);
    let (ia, ib) = (0usize, 2usize);
    let mut f = VectorBatch64::zeros(n, 2);
    f.set(na, ia, 0, 1.0);
    f.set(nb, ib, 1, 1.0);
    let cfg = SolverConfig {
        outer_tol: 1e-24,
        ..SolverConfig::default()
    };
    let (u, _) = solve(&h, &f, &VectorBatch64::zeros(n, 2), &cfg).unwrap();
    let (ab, ba) = (u.get(nb, ib, 0), u.get(na, ia, 1));
    assert!((ab - ba).abs() <= 1e-8 * ab.abs().max(ba.abs()), "{ab} vs {ba}");
}
