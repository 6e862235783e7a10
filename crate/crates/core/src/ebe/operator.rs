use std::sync::Arc;

use nalgebra::DMatrix;

use super::{check_dims, EbeError, LinearOperator};
use crate::batch::VectorBatch;
use crate::elasticity::{
    element_stiffness_tet10, element_stiffness_tet4, tet10_shape_gradients, Material, TetGeometry, QUAD_POINTS,
};
use crate::exec::ExecMode;
use crate::mesh::{DirichletSet, DofMask, Mesh};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementOrder {
    /// 4-node elements on the vertex block of the mesh.
    Linear,
    /// 10-node elements on all nodes.
    Quadratic,
}

impl ElementOrder {
    pub fn nodes_per_element(self) -> usize {
        match self {
            ElementOrder::Linear => 4,
            ElementOrder::Quadratic => 10,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ElemData {
    geo: TetGeometry,
    lambda: f64,
    mu: f64,
}

/// Elements per work unit. Element results of one chunk are computed together
/// and scattered in ascending element order, whatever the execution mode.
const ELEM_CHUNK: usize = 256;

/// Matrix-free stiffness operator `f = Σ Qₑ Kₑ Qₑᵀ u` with Dirichlet masking.
///
/// Element stiffness matrices are never stored: each application recomputes
/// displacement gradients, stresses and nodal forces per element in 64-bit,
/// and rounds once when adding into the output.
#[derive(Debug, Clone)]
pub struct EbeOperator {
    mesh: Arc<Mesh>,
    order: ElementOrder,
    materials: Vec<Material>,
    mask: DofMask,
    elems: Vec<ElemData>,
    mode: ExecMode,
}

impl EbeOperator {
    pub fn new(mesh: Arc<Mesh>, order: ElementOrder, materials: &[Material], mask: DofMask) -> Result<Self, EbeError> {
        let n = match order {
            ElementOrder::Linear => mesh.vertex_count(),
            ElementOrder::Quadratic => mesh.node_count(),
        };
        if mask.n_nodes() != n {
            return Err(EbeError::MaskMismatch {
                expected: n,
                found: mask.n_nodes(),
            });
        }
        let mut elems = Vec::with_capacity(mesh.element_count());
        for e in 0..mesh.element_count() {
            let id = mesh.material_id(e);
            let mat = materials.get(id as usize).ok_or(EbeError::MissingMaterial {
                id,
                available: materials.len(),
            })?;
            elems.push(ElemData {
                geo: TetGeometry::new(&mesh.vertex_coords(e))?,
                lambda: mat.lambda,
                mu: mat.mu,
            });
        }
        Ok(Self {
            mesh,
            order,
            materials: materials.to_vec(),
            mask,
            elems,
            mode: ExecMode::default(),
        })
    }

    /// Operator with the mask induced by a Dirichlet set.
    pub fn with_dirichlet(
        mesh: Arc<Mesh>,
        order: ElementOrder,
        materials: &[Material],
        dirichlet: &DirichletSet,
    ) -> Result<Self, EbeError> {
        let n = match order {
            ElementOrder::Linear => mesh.vertex_count(),
            ElementOrder::Quadratic => mesh.node_count(),
        };
        let mask = dirichlet.to_mask(n);
        Self::new(mesh, order, materials, mask)
    }

    pub fn with_mode(mut self, mode: ExecMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn set_mode(&mut self, mode: ExecMode) {
        self.mode = mode;
    }

    pub fn mode(&self) -> ExecMode {
        self.mode
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn order(&self) -> ElementOrder {
        self.order
    }

    pub fn mask(&self) -> &DofMask {
        &self.mask
    }

    pub fn materials(&self) -> &[Material] {
        &self.materials
    }

    /// The same operator with a different mask (same node count).
    pub fn with_mask(&self, mask: DofMask) -> Result<Self, EbeError> {
        if mask.n_nodes() != self.mask.n_nodes() {
            return Err(EbeError::MaskMismatch {
                expected: self.mask.n_nodes(),
                found: mask.n_nodes(),
            });
        }
        let mut out = self.clone();
        out.mask = mask;
        Ok(out)
    }

    pub fn element_nodes(&self, e: usize) -> &[u32] {
        &self.mesh.tets10()[e][..self.order.nodes_per_element()]
    }

    /// Unmasked element stiffness matrix in Voigt form (the explicit route).
    pub fn element_matrix(&self, e: usize) -> Result<DMatrix<f64>, EbeError> {
        let mat = Material::from_lame(self.elems[e].lambda, self.elems[e].mu);
        let k = match self.order {
            ElementOrder::Linear => element_stiffness_tet4(&self.mesh.vertex_coords(e), &mat)?.k,
            ElementOrder::Quadratic => {
                let t = &self.mesh.tets10()[e];
                let c = t.map(|n| self.mesh.coords()[n as usize]);
                element_stiffness_tet10(&c, &mat)?.k
            }
        };
        Ok(k)
    }

    /// Masked nodal 3x3 diagonal blocks (row-major), accumulated element by element.
    pub fn diagonal_blocks(&self) -> Vec<[f64; 9]> {
        let n = self.n_nodes();
        let mut diag = vec![[0.0; 9]; n];
        for (e, d) in self.elems.iter().enumerate() {
            let nodes = self.element_nodes(e);
            self.for_each_quadrature(d, |g, w| {
                for (a, &node) in nodes.iter().enumerate() {
                    let blk = &mut diag[node as usize];
                    let ga = g[a];
                    let gg = ga[0] * ga[0] + ga[1] * ga[1] + ga[2] * ga[2];
                    for i in 0..3 {
                        for k in 0..3 {
                            let mut v = d.lambda * ga[i] * ga[k] + d.mu * ga[k] * ga[i];
                            if i == k {
                                v += d.mu * gg;
                            }
                            blk[3 * i + k] += w * v;
                        }
                    }
                }
            });
        }
        for (node, blk) in diag.iter_mut().enumerate() {
            for i in 0..3 {
                for k in 0..3 {
                    if self.mask.is_masked(node, i) || self.mask.is_masked(node, k) {
                        blk[3 * i + k] = if i == k { 1.0 } else { 0.0 };
                    }
                }
            }
        }
        diag
    }

    fn for_each_quadrature<F: FnMut(&[[f64; 3]], f64)>(&self, d: &ElemData, mut f: F) {
        match self.order {
            ElementOrder::Linear => f(&d.geo.grad, d.geo.volume),
            ElementOrder::Quadratic => {
                let w = 0.25 * d.geo.volume;
                for l in &QUAD_POINTS {
                    f(&tet10_shape_gradients(&d.geo, l), w);
                }
            }
        }
    }

    /// `Kₑ uₑ` for one element and `b` columns, without masking.
    /// Both vectors are laid out `[local dof][column]`.
    pub fn element_apply(&self, e: usize, ue: &[f64], b: usize) -> Vec<f64> {
        let ldof = 3 * self.order.nodes_per_element();
        assert_eq!(ue.len(), ldof * b);
        let mut fe = vec![0.0; ldof * b];
        let mut h = vec![0.0; 9 * b];
        self.element_forces(&self.elems[e], ue, &mut fe, b, &mut h);
        fe
    }

    /// Nodal forces of one element for `b` columns; `ue`, `fe` are `[local dof][column]`.
    fn element_forces(&self, d: &ElemData, ue: &[f64], fe: &mut [f64], b: usize, h: &mut [f64]) {
        self.for_each_quadrature(d, |g, w| stress_divergence(g, w, d.lambda, d.mu, ue, fe, b, h));
    }

    fn apply_generic<T: Scalar>(&self, u: &VectorBatch<T>, out: &mut VectorBatch<T>) {
        let b = u.batch();
        let nloc = self.order.nodes_per_element();
        let ldof = 3 * nloc;
        let ne = self.elems.len();
        let n_chunks = ne.div_ceil(ELEM_CHUNK);
        let us = u.as_slice();
        let mask = &self.mask;

        let compute = |ci: usize, buf: &mut Vec<f64>, scratch: &mut Vec<f64>| {
            let lo = ci * ELEM_CHUNK;
            let hi = (lo + ELEM_CHUNK).min(ne);
            buf.clear();
            buf.resize((hi - lo) * ldof * b, 0.0);
            scratch.resize(ldof * b + 9 * b, 0.0);
            let (ue, h) = scratch.split_at_mut(ldof * b);
            for e in lo..hi {
                let nodes = self.element_nodes(e);
                for (a, &node) in nodes.iter().enumerate() {
                    for i in 0..3 {
                        let dof = 3 * node as usize + i;
                        let dst = &mut ue[(3 * a + i) * b..(3 * a + i + 1) * b];
                        if mask.dof(dof) {
                            dst.fill(0.0);
                        } else {
                            for (x, y) in dst.iter_mut().zip(&us[dof * b..(dof + 1) * b]) {
                                *x = y.to_f64();
                            }
                        }
                    }
                }
                let off = (e - lo) * ldof * b;
                self.element_forces(&self.elems[e], ue, &mut buf[off..off + ldof * b], b, h);
            }
        };

        out.fill_zero();
        let scatter = |ci: usize, buf: &[f64], os: &mut [T]| {
            let lo = ci * ELEM_CHUNK;
            let hi = (lo + ELEM_CHUNK).min(ne);
            for e in lo..hi {
                let fe = &buf[(e - lo) * ldof * b..(e - lo + 1) * ldof * b];
                for (a, &node) in self.element_nodes(e).iter().enumerate() {
                    for i in 0..3 {
                        let dof = 3 * node as usize + i;
                        if mask.dof(dof) {
                            continue;
                        }
                        let src = &fe[(3 * a + i) * b..(3 * a + i + 1) * b];
                        for (o, v) in os[dof * b..(dof + 1) * b].iter_mut().zip(src) {
                            *o += T::from_f64(*v);
                        }
                    }
                }
            }
        };

        let os = out.as_mut_slice();
        #[cfg(feature = "parallel")]
        if self.mode.is_parallel() {
            use rayon::prelude::*;
            let wave = 2 * rayon::current_num_threads().max(1);
            let mut bufs: Vec<Vec<f64>> = vec![Vec::new(); wave];
            for w0 in (0..n_chunks).step_by(wave) {
                let w1 = (w0 + wave).min(n_chunks);
                bufs[..w1 - w0]
                    .par_iter_mut()
                    .enumerate()
                    .for_each_init(Vec::new, |s, (k, buf)| compute(w0 + k, buf, s));
                for (k, buf) in bufs[..w1 - w0].iter().enumerate() {
                    scatter(w0 + k, buf, os);
                }
            }
            self.write_back(us, os, b);
            return;
        }
        let mut buf = Vec::new();
        let mut scratch = Vec::new();
        for ci in 0..n_chunks {
            compute(ci, &mut buf, &mut scratch);
            scatter(ci, &buf, os);
        }
        self.write_back(us, os, b);
    }

    fn write_back<T: Scalar>(&self, us: &[T], os: &mut [T], b: usize) {
        for (dof, &m) in self.mask.flags().iter().enumerate() {
            if m {
                os[dof * b..(dof + 1) * b].copy_from_slice(&us[dof * b..(dof + 1) * b]);
            }
        }
    }
}

/// Adds `w σ(∇u)·∇N_a` to every node `a`, for `b` columns at one quadrature point.
#[inline]
#[allow(clippy::too_many_arguments)]
fn stress_divergence(g: &[[f64; 3]], w: f64, lambda: f64, mu: f64, ue: &[f64], fe: &mut [f64], b: usize, h: &mut [f64]) {
    h.fill(0.0);
    for (a, ga) in g.iter().enumerate() {
        for i in 0..3 {
            let urow = &ue[(3 * a + i) * b..(3 * a + i + 1) * b];
            for (j, &gj) in ga.iter().enumerate() {
                let hrow = &mut h[(3 * i + j) * b..(3 * i + j + 1) * b];
                for (hv, uv) in hrow.iter_mut().zip(urow) {
                    *hv += uv * gj;
                }
            }
        }
    }
    for c in 0..b {
        let hv = |k: usize| h[k * b + c];
        let tr = hv(0) + hv(4) + hv(8);
        let s = [
            w * (lambda * tr + 2.0 * mu * hv(0)),
            w * (mu * (hv(1) + hv(3))),
            w * (mu * (hv(2) + hv(6))),
            w * (lambda * tr + 2.0 * mu * hv(4)),
            w * (mu * (hv(5) + hv(7))),
            w * (lambda * tr + 2.0 * mu * hv(8)),
        ];
        h[c] = s[0];
        h[b + c] = s[1];
        h[2 * b + c] = s[2];
        h[3 * b + c] = s[1];
        h[4 * b + c] = s[3];
        h[5 * b + c] = s[4];
        h[6 * b + c] = s[2];
        h[7 * b + c] = s[4];
        h[8 * b + c] = s[5];
    }
    for (a, ga) in g.iter().enumerate() {
        for i in 0..3 {
            let frow = &mut fe[(3 * a + i) * b..(3 * a + i + 1) * b];
            for (j, &gj) in ga.iter().enumerate() {
                let srow = &h[(3 * i + j) * b..(3 * i + j + 1) * b];
                for (fv, sv) in frow.iter_mut().zip(srow) {
                    *fv += sv * gj;
                }
            }
        }
    }
}

impl<T: Scalar> LinearOperator<T> for EbeOperator {
    fn n_nodes(&self) -> usize {
        self.mask.n_nodes()
    }

    fn apply_into(&self, u: &VectorBatch<T>, out: &mut VectorBatch<T>) -> Result<(), EbeError> {
        check_dims(LinearOperator::<T>::n_nodes(self), u, out)?;
        self.apply_generic(u, out);
        Ok(())
    }
}

impl EbeOperator {
    pub fn n_nodes(&self) -> usize {
        self.mask.n_nodes()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_box_mesh, BoxMeshSpec, FixedBoundary};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube_op(order: ElementOrder, masked: bool) -> EbeOperator {
        let spec = BoxMeshSpec::new([1.0; 3], [1, 1, 1]).with_boundary(if masked {
            FixedBoundary::BottomAndSideRollers
        } else {
            FixedBoundary::None
        });
        let (m, d) = generate_box_mesh(&spec).unwrap();
        let mat = Material::from_wavespeeds(5800.0, 3000.0, 2700.0).unwrap();
        EbeOperator::with_dirichlet(Arc::new(m), order, &[mat], &d).unwrap()
    }

    fn random_batch(n: usize, b: usize, seed: u64) -> VectorBatch<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VectorBatch::from_raw(n, b, (0..3 * n * b).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn zero_in_zero_out() {
        let op = cube_op(ElementOrder::Quadratic, true);
        let u = VectorBatch::<f32>::zeros(op.n_nodes(), 3);
        assert_eq!(op.apply(&u).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn translation_nullspace() {
        for order in [ElementOrder::Linear, ElementOrder::Quadratic] {
            let op = cube_op(order, false);
            let n = op.n_nodes();
            let mut t = VectorBatch::<f64>::zeros(n, 3);
            for node in 0..n {
                for axis in 0..3 {
                    t.set(node, axis, axis, 1.0);
                }
            }
            let scale = op.diagonal_blocks().iter().map(|b| b[0]).fold(0.0, f64::max);
            assert!(op.apply(&t).unwrap().max_abs() <= 1e-11 * scale);
            let t32: VectorBatch<f32> = t.cast();
            assert!(op.apply(&t32).unwrap().max_abs() <= 1e-5 * scale);
        }
    }

    #[test]
    fn matches_explicit_element_matrices() {
        let op = cube_op(ElementOrder::Quadratic, true);
        let n = op.n_nodes();
        let u = random_batch(n, 2, 7);
        let got = op.apply(&u).unwrap();
        let mut want = VectorBatch::<f64>::zeros(n, 2);
        for e in 0..op.mesh().element_count() {
            let k = op.element_matrix(e).unwrap();
            let nodes = op.element_nodes(e);
            for c in 0..2 {
                for r in 0..30 {
                    let (nr, ir) = (nodes[r / 3] as usize, r % 3);
                    if op.mask().is_masked(nr, ir) {
                        continue;
                    }
                    let mut s = 0.0;
                    for q in 0..30 {
                        let (nq, iq) = (nodes[q / 3] as usize, q % 3);
                        if !op.mask().is_masked(nq, iq) {
                            s += k[(r, q)] * u.get(nq, iq, c);
                        }
                    }
                    want.set(nr, ir, c, want.get(nr, ir, c) + s);
                }
            }
        }
        for node in 0..n {
            for i in 0..3 {
                if op.mask().is_masked(node, i) {
                    for c in 0..2 {
                        want.set(node, i, c, u.get(node, i, c));
                    }
                }
            }
        }
        let mut diff = want.clone();
        diff.rsub_from(&got, ExecMode::Serial);
        assert!(diff.max_abs() <= 1e-12 * want.max_abs());
    }

    #[test]
    fn batch_columns_match_single_bitwise() {
        let op = cube_op(ElementOrder::Quadratic, true);
        let u = random_batch(op.n_nodes(), 5, 3);
        let all = op.apply(&u).unwrap();
        for c in 0..5 {
            let single = op.apply(&u.columns(c..c + 1)).unwrap();
            assert_eq!(single.column(0), all.column(c));
        }
    }

    #[test]
    fn serial_and_parallel_identical() {
        let (m, d) = generate_box_mesh(&BoxMeshSpec::new([1.0; 3], [4, 4, 4])).unwrap();
        let mat = Material::from_lame(1.0, 1.0);
        let op = EbeOperator::with_dirichlet(Arc::new(m), ElementOrder::Quadratic, &[mat], &d).unwrap();
        let u: VectorBatch<f32> = random_batch(op.n_nodes(), 4, 11).cast();
        let s = op.clone().with_mode(ExecMode::Serial).apply(&u).unwrap();
        let p = op.with_mode(ExecMode::Parallel).apply(&u).unwrap();
        assert_eq!(s, p);
    }

    #[test]
    fn diagonal_blocks_match_element_matrices() {
        let op = cube_op(ElementOrder::Quadratic, false);
        let diag = op.diagonal_blocks();
        let mut want = vec![[0.0; 9]; op.n_nodes()];
        for e in 0..op.mesh().element_count() {
            let k = op.element_matrix(e).unwrap();
            for (a, &node) in op.element_nodes(e).iter().enumerate() {
                for i in 0..3 {
                    for j in 0..3 {
                        want[node as usize][3 * i + j] += k[(3 * a + i, 3 * a + j)];
                    }
                }
            }
        }
        for (g, w) in diag.iter().zip(&want) {
            for (x, y) in g.iter().zip(w) {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1e9));
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let op = cube_op(ElementOrder::Linear, true);
        let u = VectorBatch::<f64>::zeros(27, 1);
        assert!(matches!(op.apply(&u), Err(EbeError::DimensionMismatch { .. })));
    }

    #[test]
    fn missing_material_is_error() {
        let spec = BoxMeshSpec::new([1.0; 3], [1, 1, 2]).with_layers(vec![0.5]);
        let (m, d) = generate_box_mesh(&spec).unwrap();
        let mat = Material::from_lame(1.0, 1.0);
        let err = EbeOperator::with_dirichlet(Arc::new(m), ElementOrder::Linear, &[mat], &d).unwrap_err();
        assert!(matches!(err, EbeError::MissingMaterial { id: 1, .. }));
    }
}
