use std::sync::Arc;

use crustfem::elasticity::Material;
use crustfem::fault::{
    center_grid, compute_greens_bank, faces_in_rectangle, slip_to_rhs, unit_slip_basis, FaultGeometry, FaultPatch,
    MultigridBatchSolver, Observation, ObservationSampler, SlipDirection, SlipDistribution,
};
use crustfem::mesh::{generate_box_mesh, BoxMeshSpec};
use crustfem::multigrid::Hierarchy;
use crustfem::solver::SolverConfig;
use crustfem::ExecMode;

struct Model {
    h: Hierarchy,
    patch: FaultPatch,
    obs: Vec<Observation>,
}

fn model() -> Model {
    let spec = BoxMeshSpec::new([6.0, 4.0, 4.0], [6, 4, 4]).with_layers(vec![2.5]);
    let (m, d) = generate_box_mesh(&spec).unwrap();
    let g = FaultGeometry::new(90.0, 90.0);
    let faces = faces_in_rectangle(&m, [1.0, 2.0, 4.0], &g, 4.0, 3.0);
    let patch = FaultPatch::new(&m, &faces, g, &d).unwrap();
    let mats = [Material::from_lame(2.0, 1.0), Material::from_lame(4.0, 3.0)];
    let h = Hierarchy::build(Arc::new(m), &mats, &d, 8, ExecMode::Parallel).unwrap();
    let obs = (0..5)
        .flat_map(|i| {
            (0..3).map(move |a| Observation {
                point: [0.7 + 1.1 * i as f64, 0.9 + 0.5 * i as f64, 4.0],
                axis: a,
            })
        })
        .collect();
    Model { h, patch, obs }
}

fn cfg() -> SolverConfig {
    SolverConfig {
        outer_tol: 1e-16,
        ..SolverConfig::default()
    }
}

#[test]
fn greens_superposition() {
    let md = model();
    let nodes = center_grid(&md.patch, [1.0, 2.0, 4.0], 4.0, 3.0, 2, 1);
    let units: Vec<_> = nodes
        .iter()
        .map(|&n| unit_slip_basis(&md.patch, n, SlipDirection::Strike, 1.5).unwrap())
        .collect();
    let mut s = MultigridBatchSolver::new(&md.h, cfg());
    let bank = compute_greens_bank(&md.h.k0, &md.patch, &units, &md.obs, 16, &mut s).unwrap();
    assert_eq!(s.reports.len(), 1);

    let (a1, a2) = (0.7, -1.9);
    let combined = SlipDistribution::combine(&md.patch, &[a1, a2], &units);
    let f = slip_to_rhs(&md.h.k0, &md.patch, std::slice::from_ref(&combined)).unwrap();
    let (m, _) = crustfem::solver::solve(&md.h, &f, &crustfem::VectorBatch64::zeros(f.n_nodes(), 1), &cfg()).unwrap();
    let sampler = ObservationSampler::new(md.h.k0.mesh(), &md.obs, Some(&md.patch)).unwrap();
    let direct = sampler.sample(&m, Some(std::slice::from_ref(&combined)));
    let expect = bank.matrix.column(0) * a1 + bank.matrix.column(1) * a2;
    let tol = 10.0 * cfg().outer_tol.sqrt();
    assert!((direct.column(0) - &expect).norm() <= tol * expect.norm());
}

#[test]
fn solved_field_carries_prescribed_jump() {
    let md = model();
    let node = md.patch.nodes()[md.patch.nodes().len() / 2];
    let u = unit_slip_basis(&md.patch, node, SlipDirection::Dip, 2.0).unwrap();
    let slip = SlipDistribution::from_unit(&md.patch, &u);
    let f = slip_to_rhs(&md.h.k0, &md.patch, std::slice::from_ref(&slip)).unwrap();
    let (m, _) = crustfem::solver::solve(&md.h, &f, &crustfem::VectorBatch64::zeros(f.n_nodes(), 1), &cfg()).unwrap();
    let split = md.patch.expand_solution(&m, std::slice::from_ref(&slip));
    let scale = slip.values().iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    for (k, sn) in md.patch.split_table().iter().enumerate() {
        for a in 0..3 {
            let jump = split.get(sn.plus as usize, a, 0) - split.get(sn.minus as usize, a, 0);
            assert!((jump - slip.values()[k][a]).abs() <= 1e-8 * scale);
        }
    }
}
