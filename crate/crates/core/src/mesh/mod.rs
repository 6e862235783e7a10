//! Quadratic tetrahedral meshes.
//!
//! Nodes are numbered vertices first, then edge (mid-side) nodes, so the
//! linear-element view of a mesh is a literal prefix of the node array and
//! vectors on the linear grid are prefixes of vectors on the quadratic grid.

mod boundary;
mod generate;
mod io;
mod locate;

use std::collections::HashMap;

use thiserror::Error;

pub use boundary::{DirichletSet, DofMask};
pub use generate::{generate_box_mesh, BoxMeshSpec, FixedBoundary};
pub use io::{read_dirichlet, read_mesh, write_dirichlet, write_mesh};
pub use locate::PointLocator;

/// Local vertex pairs of the six edges of a 10-node tet, in local edge-node order
/// (local node `4 + k` sits on `TET_EDGES[k]`).
pub const TET_EDGES: [(usize, usize); 6] = [(0, 1), (1, 2), (0, 2), (0, 3), (1, 3), (2, 3)];

/// Local vertex triples of the four faces; face `i` is opposite vertex `i`.
pub const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

pub type Point = [f64; 3];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid mesh spec: {0}")]
    InvalidSpec(String),
    #[error("element {element} has non-positive volume {volume:e}")]
    NonPositiveVolume { element: usize, volume: f64 },
    #[error("edge node {node} is not at the midpoint of its endpoints")]
    NotMidpoint { node: usize },
    #[error("connectivity error: {0}")]
    Connectivity(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    coords: Vec<Point>,
    tets10: Vec<[u32; 10]>,
    material_id: Vec<u32>,
    vertex_count: usize,
    edge_map: HashMap<(u32, u32), u32>,
}

/// Linear (4-node) view of a [`Mesh`]: the same elements without edge nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct P1Mesh {
    pub coords: Vec<Point>,
    pub tets4: Vec<[u32; 4]>,
    pub material_id: Vec<u32>,
}

impl P1Mesh {
    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn p1_view(&self) -> P1Mesh {
        self.clone()
    }
}

#[inline]
fn edge_key(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: Point, b: Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

/// Signed volume of the tet `(p0, p1, p2, p3)`.
pub fn signed_volume(p: &[Point; 4]) -> f64 {
    let a = sub(p[1], p[0]);
    let b = sub(p[2], p[0]);
    let c = sub(p[3], p[0]);
    dot(a, cross(b, c)) / 6.0
}

impl Mesh {
    /// Builds and validates a mesh from raw arrays.
    pub fn new(
        coords: Vec<Point>,
        tets10: Vec<[u32; 10]>,
        material_id: Vec<u32>,
        vertex_count: usize,
    ) -> Result<Self, MeshError> {
        if material_id.len() != tets10.len() {
            return Err(MeshError::Connectivity(format!(
                "{} material ids for {} elements",
                material_id.len(),
                tets10.len()
            )));
        }
        if vertex_count > coords.len() {
            return Err(MeshError::Connectivity(format!(
                "vertex count {vertex_count} exceeds node count {}",
                coords.len()
            )));
        }
        let n = coords.len() as u32;
        let mut edge_map = HashMap::with_capacity(tets10.len() * 2);
        for (e, t) in tets10.iter().enumerate() {
            for (k, &id) in t.iter().enumerate() {
                if id >= n {
                    return Err(MeshError::Connectivity(format!(
                        "element {e} references node {id} beyond node count {n}"
                    )));
                }
                let is_vertex = (id as usize) < vertex_count;
                if (k < 4) != is_vertex {
                    return Err(MeshError::Connectivity(format!(
                        "element {e} local node {k} (global {id}) is in the wrong node block"
                    )));
                }
            }
            for (k, &(a, b)) in TET_EDGES.iter().enumerate() {
                let key = edge_key(t[a], t[b]);
                let mid = t[4 + k];
                if let Some(&prev) = edge_map.get(&key) {
                    if prev != mid {
                        return Err(MeshError::Connectivity(format!(
                            "edge ({}, {}) has two mid-side nodes {prev} and {mid}",
                            key.0, key.1
                        )));
                    }
                } else {
                    edge_map.insert(key, mid);
                }
            }
        }
        let mesh = Self {
            coords,
            tets10,
            material_id,
            vertex_count,
            edge_map,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<(), MeshError> {
        let scale = self.bounding_size().max(f64::MIN_POSITIVE);
        for e in 0..self.tets10.len() {
            let v = self.volume(e);
            if !(v > 0.0) || !v.is_finite() {
                return Err(MeshError::NonPositiveVolume { element: e, volume: v });
            }
        }
        for (&(a, b), &m) in &self.edge_map {
            let pa = self.coords[a as usize];
            let pb = self.coords[b as usize];
            let pm = self.coords[m as usize];
            for i in 0..3 {
                if (0.5 * (pa[i] + pb[i]) - pm[i]).abs() > 1e-12 * scale {
                    return Err(MeshError::NotMidpoint { node: m as usize });
                }
            }
        }
        Ok(())
    }

    fn bounding_size(&self) -> f64 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.coords {
            for i in 0..3 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        (0..3).map(|i| hi[i] - lo[i]).fold(0.0, f64::max)
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn tets10(&self) -> &[[u32; 10]] {
        &self.tets10
    }

    pub fn material_ids(&self) -> &[u32] {
        &self.material_id
    }

    pub fn material_id(&self, e: usize) -> u32 {
        self.material_id[e]
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn element_count(&self) -> usize {
        self.tets10.len()
    }

    pub fn edge_map(&self) -> &HashMap<(u32, u32), u32> {
        &self.edge_map
    }

    /// Mid-side node of the edge between two vertices, if it exists.
    pub fn edge_node(&self, a: u32, b: u32) -> Option<u32> {
        self.edge_map.get(&edge_key(a, b)).copied()
    }

    pub fn tet4(&self, e: usize) -> [u32; 4] {
        let t = &self.tets10[e];
        [t[0], t[1], t[2], t[3]]
    }

    pub fn tets4(&self) -> Vec<[u32; 4]> {
        (0..self.tets10.len()).map(|e| self.tet4(e)).collect()
    }

    pub fn vertex_coords(&self, e: usize) -> [Point; 4] {
        let t = self.tet4(e);
        t.map(|n| self.coords[n as usize])
    }

    pub fn volume(&self, e: usize) -> f64 {
        signed_volume(&self.vertex_coords(e))
    }

    pub fn centroid(&self, e: usize) -> Point {
        let p = self.vertex_coords(e);
        let mut c = [0.0; 3];
        for q in &p {
            for i in 0..3 {
                c[i] += 0.25 * q[i];
            }
        }
        c
    }

    /// The 4-node view sharing vertex numbering with this mesh.
    pub fn p1_view(&self) -> P1Mesh {
        P1Mesh {
            coords: self.coords[..self.vertex_count].to_vec(),
            tets4: self.tets4(),
            material_id: self.material_id.clone(),
        }
    }

    pub fn max_material_id(&self) -> u32 {
        self.material_id.iter().copied().max().unwrap_or(0)
    }

    /// Map from sorted vertex triple to the `(element, local face)` pairs that contain it.
    pub fn face_map(&self) -> HashMap<[u32; 3], Vec<(u32, u8)>> {
        let mut map: HashMap<[u32; 3], Vec<(u32, u8)>> = HashMap::with_capacity(self.tets10.len() * 2);
        for e in 0..self.tets10.len() {
            let t = self.tet4(e);
            for (f, lf) in TET_FACES.iter().enumerate() {
                let mut key = [t[lf[0]], t[lf[1]], t[lf[2]]];
                key.sort_unstable();
                map.entry(key).or_default().push((e as u32, f as u8));
            }
        }
        map
    }

    /// Per-element neighbor across each local face (`None` on the boundary).
    pub fn face_neighbors(&self) -> Vec<[Option<u32>; 4]> {
        let mut nb = vec![[None; 4]; self.tets10.len()];
        for owners in self.face_map().values() {
            if let [(e0, f0), (e1, f1)] = owners[..] {
                nb[e0 as usize][f0 as usize] = Some(e1);
                nb[e1 as usize][f1 as usize] = Some(e0);
            }
        }
        nb
    }

    /// Node adjacency graph over `0..n_nodes` induced by element connectivity.
    ///
    /// With `order == 1` only vertex nodes and 4-node connectivity are used.
    pub fn node_adjacency(&self, order: u8) -> Vec<Vec<u32>> {
        let n = if order == 1 { self.vertex_count } else { self.node_count() };
        let nloc = if order == 1 { 4 } else { 10 };
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        for t in &self.tets10 {
            for a in 0..nloc {
                for b in 0..nloc {
                    adj[t[a] as usize].push(t[b]);
                }
            }
        }
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
        }
        adj
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cube() -> Mesh {
        generate_box_mesh(&BoxMeshSpec::new([1.0, 1.0, 1.0], [1, 1, 1])).unwrap().0
    }

    #[test]
    fn unit_cube_counts() {
        let m = unit_cube();
        assert_eq!(m.element_count(), 6);
        assert_eq!(m.vertex_count(), 8);
        assert_eq!(m.node_count() - m.vertex_count(), 19);
        assert_eq!(m.node_count(), 27);
    }

    #[test]
    fn two_cell_counts() {
        let (m, _) = generate_box_mesh(&BoxMeshSpec::new([2.0, 1.0, 1.0], [2, 1, 1])).unwrap();
        assert_eq!(m.element_count(), 12);
        assert_eq!(m.vertex_count(), 12);
    }

    #[test]
    fn p1_view_is_prefix_and_idempotent() {
        let m = unit_cube();
        let v = m.p1_view();
        assert_eq!(v.node_count(), 8);
        assert_eq!(v.tets4.len(), 6);
        assert_eq!(v.tets4, m.tets4());
        assert_eq!(v.p1_view(), v);
        for (e, t) in m.tets10().iter().enumerate() {
            assert_eq!(&t[..4], &v.tets4[e][..]);
        }
    }

    #[test]
    fn rejects_inverted_element() {
        let m = unit_cube();
        let mut tets = m.tets10().to_vec();
        // swapping two vertices together with their edge nodes inverts the tet
        let t = tets[3];
        tets[3] = [t[1], t[0], t[2], t[3], t[4], t[6], t[5], t[8], t[7], t[9]];
        let err = Mesh::new(m.coords().to_vec(), tets, m.material_ids().to_vec(), 8).unwrap_err();
        assert!(matches!(err, MeshError::NonPositiveVolume { element: 3, .. }), "{err}");
    }
}
