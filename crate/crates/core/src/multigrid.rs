//! Grid transfers and the coarse-level hierarchy.
//!
//! Level 0 is the quadratic grid, level 1 the same elements without edge
//! nodes, and level 2 an unsmoothed aggregation of level 1. Transfers act
//! identically on the three axes and are masked on both sides, `D_f P D_c`,
//! so constrained dofs never exchange values between levels.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::batch::VectorBatch;
use crate::ebe::{BlockCsr, BlockJacobi, EbeError, EbeOperator, ElementOrder};
use crate::elasticity::Material;
use crate::exec::{for_each_chunk_mut_init, ExecMode};
use crate::mesh::{DirichletSet, DofMask, Mesh};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum MultigridError {
    #[error("aggregate {0} is empty")]
    EmptyAggregate(usize),
    #[error("aggregation covers {found} nodes, matrix has {expected}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("aggregate target size must be at least 2, got {0}")]
    TargetSize(usize),
    #[error(transparent)]
    Ebe(#[from] EbeError),
}

const NODE_CHUNK: usize = 512;

/// Nodal interpolation from a coarse grid to a fine grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Prolongation {
    n_fine: usize,
    n_coarse: usize,
    // fine node -> (coarse node, weight), CSR
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    weights: Vec<f64>,
    // coarse node -> (fine node, weight), CSR, fine nodes ascending
    t_ptr: Vec<usize>,
    t_rows: Vec<u32>,
    t_weights: Vec<f64>,
    fine_mask: DofMask,
    coarse_mask: DofMask,
    mode: ExecMode,
}

impl Prolongation {
    /// Builds from per-fine-node weight lists.
    pub fn from_rows(rows: Vec<Vec<(u32, f64)>>, n_coarse: usize, fine_mask: DofMask, coarse_mask: DofMask) -> Self {
        assert_eq!(fine_mask.n_nodes(), rows.len());
        assert_eq!(coarse_mask.n_nodes(), n_coarse);
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        let mut t: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_coarse];
        for (f, row) in rows.iter().enumerate() {
            for &(c, w) in row {
                cols.push(c);
                weights.push(w);
                t[c as usize].push((f as u32, w));
            }
            row_ptr.push(cols.len());
        }
        let mut t_ptr = vec![0];
        let mut t_rows = Vec::new();
        let mut t_weights = Vec::new();
        for col in t {
            for (f, w) in col {
                t_rows.push(f);
                t_weights.push(w);
            }
            t_ptr.push(t_rows.len());
        }
        Self {
            n_fine: rows.len(),
            n_coarse,
            row_ptr,
            cols,
            weights,
            t_ptr,
            t_rows,
            t_weights,
            fine_mask,
            coarse_mask,
            mode: ExecMode::default(),
        }
    }

    pub fn with_mode(mut self, mode: ExecMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn set_mode(&mut self, mode: ExecMode) {
        self.mode = mode;
    }

    pub fn n_fine(&self) -> usize {
        self.n_fine
    }

    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }

    pub fn fine_mask(&self) -> &DofMask {
        &self.fine_mask
    }

    pub fn coarse_mask(&self) -> &DofMask {
        &self.coarse_mask
    }

    /// `(coarse node, weight)` entries of one fine node (unmasked weights).
    pub fn row(&self, fine: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[fine]..self.row_ptr[fine + 1];
        self.cols[r.clone()]
            .iter()
            .map(|&c| c as usize)
            .zip(self.weights[r].iter().copied())
    }

    /// `fine = P̃ coarse`
    pub fn prolongate<T: Scalar>(&self, coarse: &VectorBatch<T>, fine: &mut VectorBatch<T>) {
        assert_eq!(coarse.n_nodes(), self.n_coarse);
        assert_eq!(fine.n_nodes(), self.n_fine);
        assert_eq!(coarse.batch(), fine.batch());
        let b = coarse.batch();
        let cs = coarse.as_slice();
        for_each_chunk_mut_init(
            self.mode,
            fine.as_mut_slice(),
            NODE_CHUNK * 3 * b,
            || vec![0.0f64; b],
            |acc, ci, chunk| {
                for (k, fnode) in chunk.chunks_mut(3 * b).enumerate() {
                    let f = ci * NODE_CHUNK + k;
                    for a in 0..3 {
                        let out = &mut fnode[a * b..(a + 1) * b];
                        if self.fine_mask.is_masked(f, a) {
                            out.fill(T::ZERO);
                            continue;
                        }
                        acc.fill(0.0);
                        for (c, w) in self.row(f) {
                            if self.coarse_mask.is_masked(c, a) {
                                continue;
                            }
                            let src = &cs[(3 * c + a) * b..(3 * c + a + 1) * b];
                            for (y, x) in acc.iter_mut().zip(src) {
                                *y += w * x.to_f64();
                            }
                        }
                        for (o, v) in out.iter_mut().zip(acc.iter()) {
                            *o = T::from_f64(*v);
                        }
                    }
                }
            },
        );
    }

    /// `coarse = P̃ᵀ fine`
    pub fn restrict<T: Scalar>(&self, fine: &VectorBatch<T>, coarse: &mut VectorBatch<T>) {
        assert_eq!(coarse.n_nodes(), self.n_coarse);
        assert_eq!(fine.n_nodes(), self.n_fine);
        assert_eq!(coarse.batch(), fine.batch());
        let b = coarse.batch();
        let fs = fine.as_slice();
        for_each_chunk_mut_init(
            self.mode,
            coarse.as_mut_slice(),
            NODE_CHUNK * 3 * b,
            || vec![0.0f64; b],
            |acc, ci, chunk| {
                for (k, cnode) in chunk.chunks_mut(3 * b).enumerate() {
                    let c = ci * NODE_CHUNK + k;
                    let r = self.t_ptr[c]..self.t_ptr[c + 1];
                    for a in 0..3 {
                        let out = &mut cnode[a * b..(a + 1) * b];
                        if self.coarse_mask.is_masked(c, a) {
                            out.fill(T::ZERO);
                            continue;
                        }
                        acc.fill(0.0);
                        for (&f, &w) in self.t_rows[r.clone()].iter().zip(&self.t_weights[r.clone()]) {
                            let f = f as usize;
                            if self.fine_mask.is_masked(f, a) {
                                continue;
                            }
                            let src = &fs[(3 * f + a) * b..(3 * f + a + 1) * b];
                            for (y, x) in acc.iter_mut().zip(src) {
                                *y += w * x.to_f64();
                            }
                        }
                        for (o, v) in out.iter_mut().zip(acc.iter()) {
                            *o = T::from_f64(*v);
                        }
                    }
                }
            },
        );
    }
}

/// Quadratic-to-linear transfer: identity on vertices, `½, ½` on edge nodes.
pub fn build_geometric_prolongation(mesh: &Mesh, fine_mask: &DofMask) -> Prolongation {
    let nv = mesh.vertex_count();
    let mut rows: Vec<Vec<(u32, f64)>> = (0..mesh.node_count())
        .map(|n| if n < nv { vec![(n as u32, 1.0)] } else { Vec::new() })
        .collect();
    let mut edges: Vec<(&(u32, u32), &u32)> = mesh.edge_map().iter().collect();
    edges.sort_unstable_by_key(|(_, &m)| m);
    for (&(a, b), &m) in edges {
        rows[m as usize] = vec![(a, 0.5), (b, 0.5)];
    }
    Prolongation::from_rows(rows, nv, fine_mask.clone(), fine_mask.prefix(nv))
}

/// Node-to-aggregate map of an unsmoothed aggregation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Aggregation {
    pub aggregate_of: Vec<u32>,
    pub count: usize,
    /// Seed node of each aggregate.
    pub seeds: Vec<u32>,
}

impl Aggregation {
    pub fn members(&self) -> Vec<Vec<u32>> {
        let mut m = vec![Vec::new(); self.count];
        for (n, &a) in self.aggregate_of.iter().enumerate() {
            m[a as usize].push(n as u32);
        }
        m
    }
}

/// Greedy aggregation over the block sparsity graph.
///
/// Seeds are taken in ascending node order; each aggregate grows breadth-first
/// through unaggregated neighbours until it reaches `target_size`. Aggregates
/// left as singletons are merged into the aggregate of their lowest neighbour.
pub fn aggregate_p1<T: Scalar>(matrix: &BlockCsr<T>, target_size: usize) -> Result<Aggregation, MultigridError> {
    if target_size < 2 {
        return Err(MultigridError::TargetSize(target_size));
    }
    let n = matrix.n_block_rows();
    const NONE: u32 = u32::MAX;
    let mut agg = vec![NONE; n];
    let mut seeds = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    for s in 0..n {
        if agg[s] != NONE {
            continue;
        }
        let id = seeds.len() as u32;
        seeds.push(s as u32);
        agg[s] = id;
        let mut size = 1;
        queue.clear();
        queue.push_back(s);
        'grow: while let Some(v) = queue.pop_front() {
            for (w, _) in matrix.row(v) {
                if size >= target_size {
                    break 'grow;
                }
                if agg[w] == NONE {
                    agg[w] = id;
                    size += 1;
                    queue.push_back(w);
                }
            }
        }
    }
    let mut sizes = vec![0usize; seeds.len()];
    for &a in &agg {
        sizes[a as usize] += 1;
    }
    for s in 0..seeds.len() {
        if sizes[s] != 1 {
            continue;
        }
        let v = seeds[s] as usize;
        if let Some((w, _)) = matrix.row(v).find(|&(w, _)| w != v) {
            let target = agg[w];
            agg[v] = target;
            sizes[s] = 0;
            sizes[target as usize] += 1;
        }
    }
    // compact ids, keeping seed order
    let mut remap = vec![NONE; seeds.len()];
    let mut kept = Vec::new();
    for (s, &seed) in seeds.iter().enumerate() {
        if sizes[s] > 0 {
            remap[s] = kept.len() as u32;
            kept.push(seed);
        }
    }
    for a in agg.iter_mut() {
        *a = remap[*a as usize];
    }
    Ok(Aggregation {
        aggregate_of: agg,
        count: kept.len(),
        seeds: kept,
    })
}

/// Piecewise-constant transfer and Galerkin coarse matrix `P̃ᵀ K P̃`.
///
/// A coarse dof whose fine dofs are all constrained is constrained itself and
/// gets a unit diagonal.
pub fn build_level2(
    p1_matrix: &BlockCsr<f64>,
    agg: &Aggregation,
    fine_mask: &DofMask,
) -> Result<(Prolongation, BlockCsr<f64>), MultigridError> {
    let n = p1_matrix.n_block_rows();
    if agg.aggregate_of.len() != n || fine_mask.n_nodes() != n {
        return Err(MultigridError::SizeMismatch {
            expected: n,
            found: agg.aggregate_of.len(),
        });
    }
    let nc = agg.count;
    let mut sizes = vec![0usize; nc];
    for &a in &agg.aggregate_of {
        if a as usize >= nc {
            return Err(MultigridError::EmptyAggregate(a as usize));
        }
        sizes[a as usize] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(MultigridError::EmptyAggregate(empty));
    }
    let mut coarse_mask = DofMask::none(nc);
    for g in 0..nc {
        for a in 0..3 {
            coarse_mask.set(g, a, true);
        }
    }
    for (f, &g) in agg.aggregate_of.iter().enumerate() {
        for a in 0..3 {
            if !fine_mask.is_masked(f, a) {
                coarse_mask.set(g as usize, a, false);
            }
        }
    }

    let mut rows: Vec<BTreeMap<u32, [f64; 9]>> = vec![BTreeMap::new(); nc];
    for i in 0..n {
        let gi = agg.aggregate_of[i];
        for (j, blk) in p1_matrix.row(i) {
            let gj = agg.aggregate_of[j];
            let dst = rows[gi as usize].entry(gj).or_insert([0.0; 9]);
            for a in 0..3 {
                for c in 0..3 {
                    if !fine_mask.is_masked(i, a) && !fine_mask.is_masked(j, c) {
                        dst[3 * a + c] += blk[3 * a + c];
                    }
                }
            }
        }
    }
    let mut row_ptr = vec![0];
    let mut col_idx = Vec::new();
    let mut blocks = Vec::new();
    for (g, row) in rows.into_iter().enumerate() {
        for (h, mut blk) in row {
            if h as usize == g {
                for a in 0..3 {
                    if coarse_mask.is_masked(g, a) {
                        blk[4 * a] = 1.0;
                    }
                }
            }
            col_idx.push(h);
            blocks.push(blk);
        }
        row_ptr.push(col_idx.len());
    }
    let a2 = BlockCsr::new(nc, row_ptr, col_idx, blocks).expect("sorted by construction");
    let p_rows = agg.aggregate_of.iter().map(|&g| vec![(g, 1.0)]).collect();
    let p2 = Prolongation::from_rows(p_rows, nc, fine_mask.clone(), coarse_mask);
    Ok((p2, a2))
}

/// Level-2 matrix and block-Jacobi preconditioners in one precision tier.
#[derive(Debug, Clone)]
pub struct InnerLevels<T> {
    pub a2: BlockCsr<T>,
    pub m0: BlockJacobi<T>,
    pub m1: BlockJacobi<T>,
    pub m2: BlockJacobi<T>,
}

/// Everything the three-level solver needs for one model.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    pub k0: EbeOperator,
    pub k1: EbeOperator,
    pub p1: Prolongation,
    pub p2: Prolongation,
    pub inner32: InnerLevels<f32>,
    pub inner64: InnerLevels<f64>,
    pub aggregation: Aggregation,
}

impl Hierarchy {
    pub fn build(
        mesh: Arc<Mesh>,
        materials: &[Material],
        dirichlet: &DirichletSet,
        target_size: usize,
        mode: ExecMode,
    ) -> Result<Self, MultigridError> {
        let k0 = EbeOperator::with_dirichlet(mesh.clone(), ElementOrder::Quadratic, materials, dirichlet)?.with_mode(mode);
        Self::from_operator(k0, target_size)
    }

    /// Builds the coarse levels for an existing quadratic operator.
    pub fn from_operator(k0: EbeOperator, target_size: usize) -> Result<Self, MultigridError> {
        let mode = k0.mode();
        let mesh = k0.mesh().clone();
        let mask0 = k0.mask().clone();
        let mask1 = mask0.prefix(mesh.vertex_count());
        let k1 = EbeOperator::new(mesh.clone(), ElementOrder::Linear, k0.materials(), mask1.clone())?.with_mode(mode);
        let p1 = build_geometric_prolongation(&mesh, &mask0).with_mode(mode);
        let k1_mat = BlockCsr::assemble(&k1)?;
        let aggregation = aggregate_p1(&k1_mat, target_size)?;
        let (p2, a2) = build_level2(&k1_mat, &aggregation, &mask1)?;
        let p2 = p2.with_mode(mode);
        let a2 = a2.with_mode(mode);
        let d0 = k0.diagonal_blocks();
        let d1 = k1.diagonal_blocks();
        let d2 = a2.diagonal_blocks();
        let inner64 = InnerLevels {
            a2: a2.clone(),
            m0: BlockJacobi::from_blocks(&d0)?.with_mode(mode),
            m1: BlockJacobi::from_blocks(&d1)?.with_mode(mode),
            m2: BlockJacobi::from_blocks(&d2)?.with_mode(mode),
        };
        let inner32 = InnerLevels {
            a2: a2.cast(),
            m0: BlockJacobi::from_blocks(&d0)?.with_mode(mode),
            m1: BlockJacobi::from_blocks(&d1)?.with_mode(mode),
            m2: BlockJacobi::from_blocks(&d2)?.with_mode(mode),
        };
        Ok(Self {
            k0,
            k1,
            p1,
            p2,
            inner32,
            inner64,
            aggregation,
        })
    }

    pub fn n_nodes(&self) -> [usize; 3] {
        [self.k0.n_nodes(), self.k1.n_nodes(), self.aggregation.count]
    }
}
