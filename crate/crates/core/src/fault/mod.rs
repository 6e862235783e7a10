//! Split-node fault sources.
//!
//! A fault is a planar set of interior element faces. Slip `Δ` (relative
//! displacement of the plus side with respect to the minus side) is imposed in
//! mean-free form: the split-mesh field is `u = Q m + u_Δ`, where `Q` copies
//! each unsplit node value to both of its copies and `u_Δ` is `+Δ/2` on plus
//! copies and `-Δ/2` on minus copies. Minimising the split-mesh energy over `m`
//! gives `K m = -Σₑ Qₑᵀ Kₑ u_Δ,ₑ` on the *unsplit* mesh, so every slip source
//! shares one operator and one multigrid hierarchy.

mod greens;
mod slip;

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader};
use std::path::Path;

use thiserror::Error;

use crate::batch::VectorBatch64;
use crate::ebe::{EbeError, EbeOperator, ElementOrder};
use crate::mesh::{cross, dot, norm, sub, DirichletSet, Mesh, MeshError, Point};
use crate::solver::SolverError;

pub use greens::{
    compute_greens_bank, read_greens, read_observations, write_greens, BatchSolver, GreensBank, MultigridBatchSolver,
    Observation, ObservationSampler,
};
pub use slip::{center_grid, quadratic_bspline, unit_slip_basis, SlipDistribution, UnitSlip};

#[derive(Debug, Error)]
pub enum FaultError {
    #[error("invalid fault: {0}")]
    Invalid(String),
    #[error("fault face {face} is not an interior face shared by two elements")]
    NotInterior { face: usize },
    #[error("fault edge ({0}, {1}) is shared by more than two fault faces")]
    NonManifold(u32, u32),
    #[error("fault node {node} carries a Dirichlet constraint")]
    TouchesBoundary { node: u32 },
    #[error("fault face {face} does not lie in the plane given by strike and dip")]
    NotPlanar { face: usize },
    #[error("node {0} is not on the fault")]
    NotAFaultNode(u32),
    #[error("observation {index} at {point:?} is outside the mesh")]
    ObservationOutside { index: usize, point: Point },
    #[error("{path} line {line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Ebe(#[from] EbeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlipDirection {
    Strike,
    Dip,
}

impl SlipDirection {
    pub fn name(self) -> &'static str {
        match self {
            SlipDirection::Strike => "strike",
            SlipDirection::Dip => "dip",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "strike" => Some(SlipDirection::Strike),
            "dip" => Some(SlipDirection::Dip),
            _ => None,
        }
    }
}

/// Strike, dip and normal unit vectors of a plane.
///
/// Strike is measured clockwise from +y (north) in the horizontal plane; dip
/// is the downward angle from horizontal on the right of the strike direction.
/// The normal `dip × strike` points to the plus side (the hanging wall).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultGeometry {
    pub strike_deg: f64,
    pub dip_deg: f64,
    pub strike: Point,
    pub dip: Point,
    pub normal: Point,
}

impl FaultGeometry {
    pub fn new(strike_deg: f64, dip_deg: f64) -> Self {
        let (sp, cp) = strike_deg.to_radians().sin_cos();
        let (sd, cd) = dip_deg.to_radians().sin_cos();
        let strike = [sp, cp, 0.0];
        let dip = [cp * cd, -sp * cd, -sd];
        let normal = cross(dip, strike);
        Self {
            strike_deg,
            dip_deg,
            strike,
            dip,
            normal,
        }
    }

    pub fn direction(&self, d: SlipDirection) -> Point {
        match d {
            SlipDirection::Strike => self.strike,
            SlipDirection::Dip => self.dip,
        }
    }
}

/// Interior element faces lying in a plane, inside a rectangle spanned from
/// `origin` along strike (`length`) and down dip (`width`).
pub fn faces_in_rectangle(mesh: &Mesh, origin: Point, geometry: &FaultGeometry, length: f64, width: f64) -> Vec<[u32; 3]> {
    let scale = length.max(width).max(1.0);
    let tol = 1e-9 * scale;
    let inside = |p: Point| {
        let r = sub(p, origin);
        let xi = dot(r, geometry.strike);
        let eta = dot(r, geometry.dip);
        dot(r, geometry.normal).abs() <= tol && xi >= -tol && xi <= length + tol && eta >= -tol && eta <= width + tol
    };
    let mut faces: Vec<[u32; 3]> = mesh
        .face_map()
        .into_iter()
        .filter(|(k, owners)| owners.len() == 2 && k.iter().all(|&v| inside(mesh.coords()[v as usize])))
        .map(|(k, _)| k)
        .collect();
    faces.sort_unstable();
    faces
}

/// Copies of one split node in the split-mesh numbering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitNode {
    /// Node id in the unsplit mesh.
    pub original: u32,
    pub plus: u32,
    pub minus: u32,
}

/// A validated planar fault on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultPatch {
    geometry: FaultGeometry,
    faces: Vec<[u32; 3]>,
    nodes: Vec<u32>,
    node_coords: Vec<Point>,
    node_index: HashMap<u32, usize>,
    touching: Vec<(u32, i8)>,
    side_of: HashMap<u32, i8>,
    n_fault_vertices: usize,
    unsplit_nodes: usize,
    unsplit_vertices: usize,
}

impl FaultPatch {
    pub fn new(
        mesh: &Mesh,
        faces: &[[u32; 3]],
        geometry: FaultGeometry,
        dirichlet: &DirichletSet,
    ) -> Result<Self, FaultError> {
        if faces.is_empty() {
            return Err(FaultError::Invalid("no fault faces".into()));
        }
        let nv = mesh.vertex_count() as u32;
        let mut sorted: Vec<[u32; 3]> = Vec::with_capacity(faces.len());
        for f in faces {
            if f.iter().any(|&v| v >= nv) {
                return Err(FaultError::Invalid(format!("face {f:?} references a non-vertex node")));
            }
            let mut k = *f;
            k.sort_unstable();
            sorted.push(k);
        }
        let unique: BTreeSet<[u32; 3]> = sorted.iter().copied().collect();
        if unique.len() != sorted.len() {
            return Err(FaultError::Invalid("duplicate fault face".into()));
        }

        let fmap = mesh.face_map();
        for (i, f) in sorted.iter().enumerate() {
            if fmap.get(f).map_or(0, |o| o.len()) != 2 {
                return Err(FaultError::NotInterior { face: i });
            }
        }

        let mut edge_use: HashMap<(u32, u32), usize> = HashMap::new();
        for f in &sorted {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[0], f[2])] {
                *edge_use.entry((a, b)).or_default() += 1;
            }
        }
        let mut bad: Vec<&(u32, u32)> = edge_use.iter().filter(|(_, &c)| c > 2).map(|(e, _)| e).collect();
        bad.sort_unstable();
        if let Some(&&(a, b)) = bad.first() {
            return Err(FaultError::NonManifold(a, b));
        }

        let n = geometry.normal;
        let x0 = mesh.coords()[sorted[0][0] as usize];
        let offset = dot(n, x0);
        let scale = mesh
            .coords()
            .iter()
            .map(|p| p.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .fold(1.0, f64::max);
        for (i, f) in sorted.iter().enumerate() {
            let p = f.map(|v| mesh.coords()[v as usize]);
            let fn_ = cross(sub(p[1], p[0]), sub(p[2], p[0]));
            let len = dot(fn_, fn_).sqrt();
            let aligned = len > 0.0 && (dot(fn_, n).abs() / len) >= 1.0 - 1e-9;
            let on_plane = p.iter().all(|q| (dot(n, *q) - offset).abs() <= 1e-9 * scale);
            if !(aligned && on_plane) {
                return Err(FaultError::NotPlanar { face: i });
            }
        }

        let mut verts: BTreeSet<u32> = BTreeSet::new();
        let mut edge_nodes: BTreeSet<u32> = BTreeSet::new();
        for f in &sorted {
            verts.extend(f.iter().copied());
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[0], f[2])] {
                let m = mesh
                    .edge_node(a, b)
                    .ok_or_else(|| FaultError::Invalid(format!("edge ({a}, {b}) has no mid-side node")))?;
                edge_nodes.insert(m);
            }
        }
        let n_fault_vertices = verts.len();
        let nodes: Vec<u32> = verts.into_iter().chain(edge_nodes).collect();
        for &node in &nodes {
            if dirichlet.contains_node(node) {
                return Err(FaultError::TouchesBoundary { node });
            }
        }
        let node_index: HashMap<u32, usize> = nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();

        let mut touching = Vec::new();
        for (e, t) in mesh.tets10().iter().enumerate() {
            if t.iter().any(|v| node_index.contains_key(v)) {
                let s = dot(sub(mesh.centroid(e), x0), n);
                if s.abs() <= 1e-12 * scale {
                    return Err(FaultError::Invalid(format!("element {e} straddles the fault plane")));
                }
                touching.push((e as u32, if s > 0.0 { 1 } else { -1 }));
            }
        }
        let side_of = touching.iter().copied().collect();
        let node_coords = nodes.iter().map(|&v| mesh.coords()[v as usize]).collect();
        Ok(Self {
            geometry,
            faces: sorted,
            nodes,
            node_coords,
            node_index,
            touching,
            side_of,
            n_fault_vertices,
            unsplit_nodes: mesh.node_count(),
            unsplit_vertices: mesh.vertex_count(),
        })
    }

    pub fn geometry(&self) -> &FaultGeometry {
        &self.geometry
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    /// Fault nodes of the unsplit mesh: vertices first, then edge nodes, each ascending.
    pub fn nodes(&self) -> &[u32] {
        &self.nodes
    }

    pub fn node_coords(&self) -> &[Point] {
        &self.node_coords
    }

    pub fn fault_vertex_count(&self) -> usize {
        self.n_fault_vertices
    }

    pub fn node_index(&self, node: u32) -> Option<usize> {
        self.node_index.get(&node).copied()
    }

    /// Elements that contain a fault node, with their side (+1 plus, -1 minus).
    pub fn touching_elements(&self) -> &[(u32, i8)] {
        &self.touching
    }

    pub fn element_side(&self, e: usize) -> Option<i8> {
        self.side_of.get(&(e as u32)).copied()
    }

    /// Split-mesh id of an unsplit node: vertices keep their ids, edge nodes
    /// shift past the appended vertex copies.
    fn renumber(&self, node: u32) -> u32 {
        if (node as usize) < self.unsplit_vertices {
            node
        } else {
            node + self.n_fault_vertices as u32
        }
    }

    /// Plus/minus ids of each fault node in the split mesh.
    pub fn split_table(&self) -> Vec<SplitNode> {
        let nv = self.unsplit_vertices as u32;
        let fv = self.n_fault_vertices as u32;
        let n_all = self.unsplit_nodes as u32 + fv;
        self.nodes
            .iter()
            .enumerate()
            .map(|(k, &orig)| {
                let plus = if (k as u32) < fv {
                    nv + k as u32
                } else {
                    n_all + (k as u32 - fv)
                };
                SplitNode {
                    original: orig,
                    plus,
                    minus: self.renumber(orig),
                }
            })
            .collect()
    }

    /// Node count of the split mesh.
    pub fn split_node_count(&self) -> usize {
        self.unsplit_nodes + self.nodes.len()
    }

    /// Unsplit node behind every split-mesh node.
    pub fn split_origin(&self) -> Vec<u32> {
        let mut origin = vec![0u32; self.split_node_count()];
        for n in 0..self.unsplit_nodes as u32 {
            origin[self.renumber(n) as usize] = n;
        }
        for s in self.split_table() {
            origin[s.plus as usize] = s.original;
        }
        origin
    }

    /// Split-mesh field `Q m + u_Δ` for each column of `m` and its slip.
    pub fn expand_solution(&self, m: &VectorBatch64, slips: &[SlipDistribution]) -> VectorBatch64 {
        assert_eq!(m.n_nodes(), self.unsplit_nodes);
        assert_eq!(m.batch(), slips.len());
        let b = m.batch();
        let origin = self.split_origin();
        let mut out = VectorBatch64::zeros(origin.len(), b);
        for (n, &o) in origin.iter().enumerate() {
            for a in 0..3 {
                for c in 0..b {
                    out.set(n, a, c, m.get(o as usize, a, c));
                }
            }
        }
        for (k, s) in self.split_table().iter().enumerate() {
            for (c, slip) in slips.iter().enumerate() {
                let d = slip.values()[k];
                for a in 0..3 {
                    out.set(s.plus as usize, a, c, out.get(s.plus as usize, a, c) + 0.5 * d[a]);
                    out.set(s.minus as usize, a, c, out.get(s.minus as usize, a, c) - 0.5 * d[a]);
                }
            }
        }
        out
    }
}

/// Builds the mesh with duplicated fault nodes. Plus-side elements reference
/// the new copies; minus-side elements keep the original nodes.
pub fn split_nodes(mesh: &Mesh, patch: &FaultPatch) -> Result<Mesh, FaultError> {
    if mesh.node_count() != patch.unsplit_nodes || mesh.vertex_count() != patch.unsplit_vertices {
        return Err(FaultError::Invalid("patch was built for a different mesh".into()));
    }
    let table = patch.split_table();
    let origin = patch.split_origin();
    let coords: Vec<Point> = origin.iter().map(|&o| mesh.coords()[o as usize]).collect();
    let plus_of: HashMap<u32, u32> = table.iter().map(|s| (s.original, s.plus)).collect();
    let tets: Vec<[u32; 10]> = mesh
        .tets10()
        .iter()
        .enumerate()
        .map(|(e, t)| {
            let plus = patch.element_side(e) == Some(1);
            t.map(|n| match plus_of.get(&n) {
                Some(&p) if plus => p,
                _ => patch.renumber(n),
            })
        })
        .collect();
    Ok(Mesh::new(
        coords,
        tets,
        mesh.material_ids().to_vec(),
        mesh.vertex_count() + patch.fault_vertex_count(),
    )?)
}

/// Equivalent nodal forces on the unsplit mesh, one column per slip.
pub fn slip_to_rhs(op: &EbeOperator, patch: &FaultPatch, slips: &[SlipDistribution]) -> Result<VectorBatch64, FaultError> {
    if op.order() != ElementOrder::Quadratic || op.n_nodes() != patch.unsplit_nodes {
        return Err(FaultError::Invalid("slip forces need the quadratic operator of the unsplit mesh".into()));
    }
    if slips.is_empty() {
        return Err(FaultError::Invalid("no slip columns".into()));
    }
    for s in slips {
        if s.values().len() != patch.nodes.len() {
            return Err(FaultError::Invalid("slip distribution belongs to a different fault".into()));
        }
    }
    let b = slips.len();
    let mut f = VectorBatch64::zeros(op.n_nodes(), b);
    let mut ue = vec![0.0; 30 * b];
    for &(e, side) in &patch.touching {
        let e = e as usize;
        let half = 0.5 * side as f64;
        ue.fill(0.0);
        for (a, node) in op.element_nodes(e).iter().enumerate() {
            if let Some(k) = patch.node_index(*node) {
                for (c, s) in slips.iter().enumerate() {
                    let d = s.values()[k];
                    for i in 0..3 {
                        ue[(3 * a + i) * b + c] = half * d[i];
                    }
                }
            }
        }
        let fe = op.element_apply(e, &ue, b);
        for (a, &node) in op.element_nodes(e).iter().enumerate() {
            for i in 0..3 {
                if op.mask().is_masked(node as usize, i) {
                    continue;
                }
                let row = f.dof_row_mut(3 * node as usize + i);
                for (c, v) in row.iter_mut().enumerate() {
                    *v -= fe[(3 * a + i) * b + c];
                }
            }
        }
    }
    Ok(f)
}

/// Fault description as read from a file: plane angles plus either explicit
/// triangles (by vertex coordinates) or a rectangle on the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultDefinition {
    pub strike_deg: f64,
    pub dip_deg: f64,
    pub triangles: Vec<[Point; 3]>,
    /// `(origin, length along strike, width down dip)`
    pub rectangle: Option<(Point, f64, f64)>,
}

impl FaultDefinition {
    pub fn geometry(&self) -> FaultGeometry {
        FaultGeometry::new(self.strike_deg, self.dip_deg)
    }

    /// Resolves triangles and rectangle to vertex-id faces of `mesh`.
    pub fn faces(&self, mesh: &Mesh) -> Result<Vec<[u32; 3]>, FaultError> {
        let mut faces = Vec::new();
        let nv = mesh.vertex_count();
        let scale = mesh
            .coords()
            .iter()
            .map(|p| p.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .fold(1.0, f64::max);
        for tri in &self.triangles {
            let mut f = [0u32; 3];
            for (k, p) in tri.iter().enumerate() {
                let (best, d) = (0..nv)
                    .map(|v| {
                        let q = sub(mesh.coords()[v], *p);
                        (v, norm(q))
                    })
                    .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
                if d > 1e-9 * scale {
                    return Err(FaultError::Invalid(format!("triangle corner {p:?} is not a mesh vertex")));
                }
                f[k] = best as u32;
            }
            faces.push(f);
        }
        if let Some((o, l, w)) = self.rectangle {
            faces.extend(faces_in_rectangle(mesh, o, &self.geometry(), l, w));
        }
        Ok(faces)
    }
}

/// Reads a fault file.
///
/// ```text
/// strike 90
/// dip 90
/// rectangle ox oy oz length width
/// face x1 y1 z1 x2 y2 z2 x3 y3 z3
/// ```
pub fn read_fault_file(path: &Path) -> Result<FaultDefinition, FaultError> {
    let file = std::fs::File::open(path)?;
    let perr = |line: usize, msg: String| FaultError::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };
    let mut strike = None;
    let mut dip = None;
    let mut triangles = Vec::new();
    let mut rectangle = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut it = body.split_whitespace();
        let key = it.next().unwrap_or("");
        let vals: Result<Vec<f64>, _> = it.map(str::parse::<f64>).collect();
        let vals = vals.map_err(|_| perr(i + 1, format!("non-numeric value in '{body}'")))?;
        let want = |n: usize| {
            if vals.len() == n {
                Ok(())
            } else {
                Err(perr(i + 1, format!("'{key}' expects {n} values, found {}", vals.len())))
            }
        };
        match key {
            "strike" => {
                want(1)?;
                strike = Some(vals[0]);
            }
            "dip" => {
                want(1)?;
                dip = Some(vals[0]);
            }
            "face" => {
                want(9)?;
                triangles.push(std::array::from_fn(|k| [vals[3 * k], vals[3 * k + 1], vals[3 * k + 2]]));
            }
            "rectangle" => {
                want(5)?;
                rectangle = Some(([vals[0], vals[1], vals[2]], vals[3], vals[4]));
            }
            _ => return Err(perr(i + 1, format!("unknown key '{key}'"))),
        }
    }
    let strike_deg = strike.ok_or_else(|| perr(0, "missing 'strike'".into()))?;
    let dip_deg = dip.ok_or_else(|| perr(0, "missing 'dip'".into()))?;
    if triangles.is_empty() && rectangle.is_none() {
        return Err(perr(0, "no 'face' or 'rectangle' entries".into()));
    }
    Ok(FaultDefinition {
        strike_deg,
        dip_deg,
        triangles,
        rectangle,
    })
}
