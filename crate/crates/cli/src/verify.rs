//! Oracle suite on the configured mesh and materials.

use std::sync::Arc;

use crustfem::ebe::{BlockCsr, EbeOperator, ElementOrder, LinearOperator};
use crustfem::mesh::{DofMask, Mesh};
use crustfem::{ExecMode, VectorBatch32, VectorBatch64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::commands::{load_mesh, materials, Context, Summary};
use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
}

impl Check {
    pub fn pass(&self) -> bool {
        self.value <= self.limit
    }
}

fn random(n: usize, rng: &mut ChaCha8Rng) -> VectorBatch64 {
    VectorBatch64::from_raw(n, 1, (0..3 * n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn max_rel(a: &VectorBatch64, b: &VectorBatch64) -> f64 {
    let scale = b.max_abs().max(f64::MIN_POSITIVE);
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs() / scale)
        .fold(0.0, f64::max)
}

/// Nodes on faces owned by a single element, mid-side nodes included,
/// plus nodes shared by elements of different materials.
fn patch_excluded(mesh: &Mesh) -> Vec<bool> {
    let mut on = vec![false; mesh.node_count()];
    let mut mat = vec![None; mesh.node_count()];
    for (tet, &m) in mesh.tets10().iter().zip(mesh.material_ids()) {
        for &i in tet {
            match mat[i as usize] {
                None => mat[i as usize] = Some(m),
                Some(o) if o != m => on[i as usize] = true,
                _ => {}
            }
        }
    }
    for (key, owners) in mesh.face_map() {
        if owners.len() != 1 {
            continue;
        }
        for (i, j) in [(0, 1), (1, 2), (0, 2)] {
            on[key[i] as usize] = true;
            if let Some(m) = mesh.edge_node(key[i], key[j]) {
                on[m as usize] = true;
            }
        }
    }
    on
}

pub fn run_checks(mesh: Mesh, ctx: &Context) -> Result<Vec<Check>, CliError> {
    let mats = materials(&ctx.cfg);
    let n = mesh.node_count();
    let mesh = Arc::new(mesh);
    let free = EbeOperator::new(mesh.clone(), ElementOrder::Quadratic, &mats, DofMask::none(n))?.with_mode(ctx.mode);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut checks = Vec::new();

    let k = BlockCsr::assemble(&free)?;
    let (mut e64, mut e32) = (0.0f64, 0.0f64);
    for _ in 0..5 {
        let u = random(n, &mut rng);
        e64 = e64.max(max_rel(&free.apply(&u)?, &k.apply(&u)?));
        let u32_: VectorBatch32 = u.cast();
        let got32: VectorBatch64 = free.apply(&u32_)?.cast();
        e32 = e32.max(max_rel(&got32, &k.apply(&u32_.cast::<f64>())?));
    }
    checks.push(Check {
        name: "ebe_vs_assembled_f64",
        value: e64,
        limit: 1e-12,
    });
    checks.push(Check {
        name: "ebe_vs_assembled_f32",
        value: e32,
        limit: 1e-5,
    });

    let (x, y) = (random(n, &mut rng), random(n, &mut rng));
    let kx = free.apply(&x)?;
    let ky = free.apply(&y)?;
    let (a, b) = (kx.dot(&y, ExecMode::Serial)[0], x.dot(&ky, ExecMode::Serial)[0]);
    checks.push(Check {
        name: "symmetry",
        value: (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE),
        limit: 1e-12,
    });

    // a linear field is reproduced exactly, so interior nodes inside one material see no force
    let on_boundary = patch_excluded(&mesh);
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let g: [[f64; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
        let mut u = VectorBatch64::zeros(n, 1);
        for (i, p) in mesh.coords().iter().enumerate() {
            for ax in 0..3 {
                u.set(i, ax, 0, (0..3).map(|j| g[ax][j] * p[j]).sum());
            }
        }
        let f = free.apply(&u)?;
        let scale = f.max_abs().max(f64::MIN_POSITIVE);
        for node in (0..n).filter(|&i| !on_boundary[i]) {
            for ax in 0..3 {
                worst = worst.max(f.get(node, ax, 0).abs() / scale);
            }
        }
    }
    checks.push(Check {
        name: "patch_interior_force",
        value: worst,
        limit: 1e-10,
    });

    // six rigid motions: relative to the operator's action on a random field
    let kscale = {
        let r = random(n, &mut rng);
        free.apply(&r)?.norms_sq(ExecMode::Serial)[0].sqrt() / r.norms_sq(ExecMode::Serial)[0].sqrt()
    };
    let mut worst = 0.0f64;
    for mode in 0..6 {
        let mut r = VectorBatch64::zeros(n, 1);
        for (i, p) in mesh.coords().iter().enumerate() {
            let v = match mode {
                0..=2 => std::array::from_fn(|a| if a == mode { 1.0 } else { 0.0 }),
                3 => [-p[1], p[0], 0.0],
                4 => [0.0, -p[2], p[1]],
                _ => [p[2], 0.0, -p[0]],
            };
            for ax in 0..3 {
                r.set(i, ax, 0, v[ax]);
            }
        }
        let kr = free.apply(&r)?.norms_sq(ExecMode::Serial)[0].sqrt();
        worst = worst.max(kr / (kscale * r.norms_sq(ExecMode::Serial)[0].sqrt()));
    }
    checks.push(Check {
        name: "rigid_nullspace",
        value: worst,
        limit: 1e-10,
    });
    Ok(checks)
}

pub fn cmd_verify(ctx: &Context) -> Result<Summary, CliError> {
    let (mesh, _) = load_mesh(&ctx.cfg.mesh)?;
    let checks = run_checks(mesh, ctx)?;
    let mut s = Summary::default();
    s.add("command", "verify");
    for c in &checks {
        eprintln!(
            "{} {} {:.3e} (<= {:.0e})",
            if c.pass() { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.limit
        );
        s.add(c.name, format!("{:.6e}", c.value));
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass()).map(|c| c.name).collect();
    s.add("result", if failed.is_empty() { "pass" } else { "fail" });
    std::fs::create_dir_all(&ctx.out).map_err(|e| CliError::write(&ctx.out, e))?;
    s.save(&ctx.out.join("verify.summary"))?;
    if failed.is_empty() {
        Ok(s)
    } else {
        for l in s.lines() {
            println!("{l}");
        }
        Err(CliError::VerifyFailed(failed.join(", ")))
    }
}
