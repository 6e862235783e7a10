use crustfem::elasticity::{element_stiffness_tet4, Material};
use crustfem::mesh::Point;
use nalgebra::{DVector, Matrix3, Matrix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Strain energy of the affine field interpolating nodal displacements,
/// computed from the affine map rather than from shape-function gradients.
fn energy(v: &[Point; 4], u: &DVector<f64>, mat: &Material) -> f64 {
    // rows [1 x y z] per vertex; the affine coefficients solve X c = u_axis
    let x = Matrix4::from_fn(|i, j| if j == 0 { 1.0 } else { v[i][j - 1] });
    let xi = x.try_inverse().unwrap();
    let mut grad = Matrix3::zeros();
    for a in 0..3 {
        let ua = nalgebra::Vector4::from_fn(|i, _| u[3 * i + a]);
        let c = xi * ua;
        for j in 0..3 {
            grad[(a, j)] = c[j + 1];
        }
    }
    let eps = 0.5 * (grad + grad.transpose());
    let vol = (x.determinant() / 6.0).abs();
    let tr = eps.trace();
    vol * (0.5 * mat.lambda * tr * tr + mat.mu * eps.component_mul(&eps).sum())
}

#[test]
fn tet4_stiffness_is_energy_hessian() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mat = Material::from_lame(1.7, 0.9);
    for _ in 0..10 {
        let base = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let v: [Point; 4] = base.map(|p| p.map(|x| x + rng.gen_range(-0.2..0.2)));
        let k = element_stiffness_tet4(&v, &mat).unwrap().k;
        let u = DVector::from_fn(12, |_, _| rng.gen_range(-1.0..1.0));
        let ku = &k * &u;
        let h = 1e-5;
        for i in 0..12 {
            let mut up = u.clone();
            up[i] += h;
            let mut um = u.clone();
            um[i] -= h;
            let fd = (energy(&v, &up, &mat) - energy(&v, &um, &mat)) / (2.0 * h);
            assert!((fd - ku[i]).abs() <= 1e-7 * ku.amax(), "{i}: {fd} vs {}", ku[i]);
        }
        // energy is exactly quadratic: E(u) = ½ uᵀ K u
        assert!((energy(&v, &u, &mat) - 0.5 * u.dot(&ku)).abs() <= 1e-12 * u.dot(&ku).abs());
    }
}
