use std::collections::HashMap;

use super::{edge_key, signed_volume, DirichletSet, Mesh, MeshError, Point, TET_EDGES};

/// Which box faces carry zero-displacement constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FixedBoundary {
    /// Bottom fully fixed, the four sides fixed in their normal direction, top free.
    #[default]
    BottomAndSideRollers,
    BottomOnly,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxMeshSpec {
    pub extents: [f64; 3],
    pub divisions: [usize; 3],
    /// Interface heights (z, strictly increasing, inside `(0, Lz)`); material 0 is the top layer.
    pub layer_interfaces: Vec<f64>,
    pub fixed_boundary: FixedBoundary,
}

impl BoxMeshSpec {
    pub fn new(extents: [f64; 3], divisions: [usize; 3]) -> Self {
        Self {
            extents,
            divisions,
            layer_interfaces: Vec::new(),
            fixed_boundary: FixedBoundary::default(),
        }
    }

    pub fn with_layers(mut self, interfaces: Vec<f64>) -> Self {
        self.layer_interfaces = interfaces;
        self
    }

    pub fn with_boundary(mut self, fixed: FixedBoundary) -> Self {
        self.fixed_boundary = fixed;
        self
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        for (i, &d) in self.divisions.iter().enumerate() {
            if d == 0 {
                return Err(MeshError::InvalidSpec(format!(
                    "divisions along axis {i} must be at least 1"
                )));
            }
        }
        for (i, &l) in self.extents.iter().enumerate() {
            if !(l > 0.0) || !l.is_finite() {
                return Err(MeshError::InvalidSpec(format!(
                    "extent along axis {i} must be positive, got {l}"
                )));
            }
        }
        let lz = self.extents[2];
        for (i, &z) in self.layer_interfaces.iter().enumerate() {
            if !(z > 0.0 && z < lz) {
                return Err(MeshError::InvalidSpec(format!(
                    "layer interface {z} is not inside (0, {lz})"
                )));
            }
            if i > 0 && z <= self.layer_interfaces[i - 1] {
                return Err(MeshError::InvalidSpec(
                    "layer interfaces must be strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }

    /// Material index of a point at height `z`: the number of interfaces above it.
    pub fn layer_of(&self, z: f64) -> u32 {
        self.layer_interfaces.iter().filter(|&&zi| zi > z).count() as u32
    }
}

/// The six Kuhn tets of a unit cube: monotone lattice paths from corner 000 to 111.
const AXIS_PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Generates a conforming 10-node tetrahedral mesh of an axis-aligned box.
///
/// Every hex cell is split into six tets sharing the cell's main diagonal; the
/// split is translation invariant, so neighbouring cells see matching face
/// diagonals. Edge nodes are numbered after all vertices, in order of first
/// appearance while sweeping elements.
pub fn generate_box_mesh(spec: &BoxMeshSpec) -> Result<(Mesh, DirichletSet), MeshError> {
    spec.validate()?;
    let [nx, ny, nz] = spec.divisions;
    let [lx, ly, lz] = spec.extents;
    let vid = |i: usize, j: usize, k: usize| (i + (nx + 1) * (j + (ny + 1) * k)) as u32;

    let mut coords: Vec<Point> = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                coords.push([
                    lx * i as f64 / nx as f64,
                    ly * j as f64 / ny as f64,
                    lz * k as f64 / nz as f64,
                ]);
            }
        }
    }
    let vertex_count = coords.len();

    let mut tets4: Vec<[u32; 4]> = Vec::with_capacity(6 * nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                for perm in AXIS_PERMUTATIONS {
                    let mut c = [0usize; 3];
                    let mut t = [vid(i, j, k); 4];
                    for (s, &ax) in perm.iter().enumerate() {
                        c[ax] = 1;
                        t[s + 1] = vid(i + c[0], j + c[1], k + c[2]);
                    }
                    let p = t.map(|n| coords[n as usize]);
                    if signed_volume(&p) < 0.0 {
                        t.swap(1, 2);
                    }
                    tets4.push(t);
                }
            }
        }
    }

    let mut edge_nodes: HashMap<(u32, u32), u32> = HashMap::new();
    let mut tets10 = Vec::with_capacity(tets4.len());
    for t in &tets4 {
        let mut full = [0u32; 10];
        full[..4].copy_from_slice(t);
        for (k, &(a, b)) in TET_EDGES.iter().enumerate() {
            let key = edge_key(t[a], t[b]);
            let id = *edge_nodes.entry(key).or_insert_with(|| {
                let pa = coords[key.0 as usize];
                let pb = coords[key.1 as usize];
                coords.push([
                    0.5 * (pa[0] + pb[0]),
                    0.5 * (pa[1] + pb[1]),
                    0.5 * (pa[2] + pb[2]),
                ]);
                (coords.len() - 1) as u32
            });
            full[4 + k] = id;
        }
        tets10.push(full);
    }

    let material_id: Vec<u32> = tets4
        .iter()
        .map(|t| {
            let zc = t.iter().map(|&n| coords[n as usize][2]).sum::<f64>() / 4.0;
            spec.layer_of(zc)
        })
        .collect();

    let mut dirichlet = DirichletSet::new();
    let tol = 1e-9 * lx.max(ly).max(lz);
    for (n, p) in coords.iter().enumerate() {
        let n = n as u32;
        let on = |v: f64, target: f64| (v - target).abs() <= tol;
        match spec.fixed_boundary {
            FixedBoundary::None => {}
            FixedBoundary::BottomOnly => {
                if on(p[2], 0.0) {
                    (0..3).for_each(|a| dirichlet.insert(n, a));
                }
            }
            FixedBoundary::BottomAndSideRollers => {
                if on(p[2], 0.0) {
                    (0..3).for_each(|a| dirichlet.insert(n, a));
                }
                if on(p[0], 0.0) || on(p[0], lx) {
                    dirichlet.insert(n, 0);
                }
                if on(p[1], 0.0) || on(p[1], ly) {
                    dirichlet.insert(n, 1);
                }
            }
        }
    }

    let mesh = Mesh::new(coords, tets10, material_id, vertex_count)?;
    Ok((mesh, dirichlet))
}
