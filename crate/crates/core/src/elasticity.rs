//! Isotropic materials and element stiffness matrices for 4- and 10-node tets.
//!
//! Strains use Voigt order `(xx, yy, zz, xy, yz, zx)` with engineering shear.
//! Quadratic elements are integrated with the symmetric 4-point rule, which is
//! exact for straight-sided elements with constant material.

use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::{DMatrix, SMatrix};
use thiserror::Error;

use crate::mesh::{signed_volume, Point};

#[derive(Debug, Error)]
pub enum ElasticityError {
    #[error("non-physical material (vp={vp}, vs={vs}, rho={rho}): {reason}")]
    InvalidMaterial {
        vp: f64,
        vs: f64,
        rho: f64,
        reason: &'static str,
    },
    #[error("degenerate element (volume {volume:e})")]
    Degenerate { volume: f64 },
    #[error("materials file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub vp: f64,
    pub vs: f64,
    pub rho: f64,
    pub lambda: f64,
    pub mu: f64,
}

impl Material {
    /// Lamé parameters from wave speeds: `mu = rho vs^2`, `lambda = rho (vp^2 - 2 vs^2)`.
    pub fn from_wavespeeds(vp: f64, vs: f64, rho: f64) -> Result<Self, ElasticityError> {
        let bad = |reason| ElasticityError::InvalidMaterial { vp, vs, rho, reason };
        if !(vp > 0.0 && vs > 0.0 && rho > 0.0) || !(vp.is_finite() && vs.is_finite() && rho.is_finite()) {
            return Err(bad("wave speeds and density must be positive"));
        }
        if vp * vp <= 2.0 * vs * vs {
            return Err(bad("vp^2 must exceed 2 vs^2"));
        }
        Ok(Self {
            vp,
            vs,
            rho,
            lambda: rho * (vp * vp - 2.0 * vs * vs),
            mu: rho * vs * vs,
        })
    }

    /// Material given directly by Lamé parameters (wave speeds left at zero).
    pub fn from_lame(lambda: f64, mu: f64) -> Self {
        Self {
            vp: 0.0,
            vs: 0.0,
            rho: 0.0,
            lambda,
            mu,
        }
    }

    /// 6x6 Voigt elasticity matrix.
    pub fn d_matrix(&self) -> SMatrix<f64, 6, 6> {
        let (l, m) = (self.lambda, self.mu);
        let mut d = SMatrix::<f64, 6, 6>::zeros();
        for i in 0..3 {
            for j in 0..3 {
                d[(i, j)] = l;
            }
            d[(i, i)] = l + 2.0 * m;
            d[(i + 3, i + 3)] = m;
        }
        d
    }
}

/// Reads a materials file: one `vp vs rho` line per material id, `#` comments allowed.
pub fn read_materials(path: &Path) -> Result<Vec<Material>, ElasticityError> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let vals: Result<Vec<f64>, _> = body.split_whitespace().map(str::parse).collect();
        let vals = vals.map_err(|_| ElasticityError::Parse {
            line: i + 1,
            msg: format!("expected 'vp vs rho', found '{body}'"),
        })?;
        if vals.len() != 3 {
            return Err(ElasticityError::Parse {
                line: i + 1,
                msg: format!("expected 3 values, found {}", vals.len()),
            });
        }
        out.push(Material::from_wavespeeds(vals[0], vals[1], vals[2])?);
    }
    Ok(out)
}

pub fn write_materials(path: &Path, mats: &[Material]) -> std::io::Result<()> {
    use std::io::Write;
    crate::io::write_atomic(path, |w| {
        writeln!(w, "# vp vs rho, one line per material id")?;
        for m in mats {
            writeln!(w, "{:?} {:?} {:?}", m.vp, m.vs, m.rho)?;
        }
        Ok(())
    })
}

/// Gradients of the four barycentric coordinates and the volume of a straight tet.
#[derive(Debug, Clone, Copy)]
pub struct TetGeometry {
    pub grad: [[f64; 3]; 4],
    pub volume: f64,
}

impl TetGeometry {
    pub fn new(v: &[Point; 4]) -> Result<Self, ElasticityError> {
        let j = [
            [v[1][0] - v[0][0], v[2][0] - v[0][0], v[3][0] - v[0][0]],
            [v[1][1] - v[0][1], v[2][1] - v[0][1], v[3][1] - v[0][1]],
            [v[1][2] - v[0][2], v[2][2] - v[0][2], v[3][2] - v[0][2]],
        ];
        let det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
            - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
            + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
        let volume = det / 6.0;
        let scale = (0..3)
            .map(|c| (j[0][c] * j[0][c] + j[1][c] * j[1][c] + j[2][c] * j[2][c]).sqrt())
            .fold(0.0, f64::max);
        if !(volume > 1e-14 * scale * scale * scale) {
            return Err(ElasticityError::Degenerate { volume });
        }
        // rows of J^{-1} are the gradients of L1, L2, L3
        let inv_det = 1.0 / det;
        let mut inv = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
                let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
                inv[r][c] = (j[r1][c1] * j[r2][c2] - j[r1][c2] * j[r2][c1]) * inv_det;
            }
        }
        let mut grad = [[0.0; 3]; 4];
        for k in 0..3 {
            grad[k + 1] = inv[k];
            for i in 0..3 {
                grad[0][i] -= inv[k][i];
            }
        }
        Ok(Self { grad, volume })
    }
}

/// Symmetric 4-point rule on the reference tet (degree 2), as barycentric points.
/// Each point carries weight `volume / 4`.
pub const QUAD_POINTS: [[f64; 4]; 4] = {
    const A: f64 = 0.585_410_196_624_968_5;
    const B: f64 = 0.138_196_601_125_010_5;
    [[A, B, B, B], [B, A, B, B], [B, B, A, B], [B, B, B, A]]
};

/// Gradients of the ten quadratic shape functions at barycentric point `l`.
/// Vertex `i`: `(4 L_i - 1) grad L_i`; edge `(i, j)`: `4 (L_i grad L_j + L_j grad L_i)`.
#[inline]
pub fn tet10_shape_gradients(geo: &TetGeometry, l: &[f64; 4]) -> [[f64; 3]; 10] {
    let g = &geo.grad;
    let mut out = [[0.0; 3]; 10];
    for i in 0..4 {
        let s = 4.0 * l[i] - 1.0;
        for d in 0..3 {
            out[i][d] = s * g[i][d];
        }
    }
    for (k, &(a, b)) in crate::mesh::TET_EDGES.iter().enumerate() {
        for d in 0..3 {
            out[4 + k][d] = 4.0 * (l[a] * g[b][d] + l[b] * g[a][d]);
        }
    }
    out
}

/// Quadratic shape function values at barycentric point `l`.
pub fn tet10_shape_values(l: &[f64; 4]) -> [f64; 10] {
    let mut n = [0.0; 10];
    for i in 0..4 {
        n[i] = l[i] * (2.0 * l[i] - 1.0);
    }
    for (k, &(a, b)) in crate::mesh::TET_EDGES.iter().enumerate() {
        n[4 + k] = 4.0 * l[a] * l[b];
    }
    n
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementStiffness {
    pub k: DMatrix<f64>,
    pub volume: f64,
}

/// Voigt strain-displacement matrix for nodes with the given shape gradients.
fn b_matrix(grads: &[[f64; 3]]) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(6, 3 * grads.len());
    for (a, g) in grads.iter().enumerate() {
        let c = 3 * a;
        b[(0, c)] = g[0];
        b[(1, c + 1)] = g[1];
        b[(2, c + 2)] = g[2];
        b[(3, c)] = g[1];
        b[(3, c + 1)] = g[0];
        b[(4, c + 1)] = g[2];
        b[(4, c + 2)] = g[1];
        b[(5, c)] = g[2];
        b[(5, c + 2)] = g[0];
    }
    b
}

/// `V Bᵀ D B` for a linear tet.
pub fn element_stiffness_tet4(coords: &[Point; 4], mat: &Material) -> Result<ElementStiffness, ElasticityError> {
    let geo = TetGeometry::new(coords)?;
    let b = b_matrix(&geo.grad);
    let d = DMatrix::from_fn(6, 6, |i, j| mat.d_matrix()[(i, j)]);
    let k = b.transpose() * d * &b * geo.volume;
    Ok(ElementStiffness {
        k,
        volume: geo.volume,
    })
}

/// Quadrature of `Bᵀ(ξ) D B(ξ)` for a straight-sided quadratic tet.
///
/// Only the four vertex coordinates enter; edge nodes are assumed at midpoints.
pub fn element_stiffness_tet10(coords: &[Point; 10], mat: &Material) -> Result<ElementStiffness, ElasticityError> {
    let v = [coords[0], coords[1], coords[2], coords[3]];
    if signed_volume(&v) <= 0.0 {
        return Err(ElasticityError::Degenerate {
            volume: signed_volume(&v),
        });
    }
    let geo = TetGeometry::new(&v)?;
    let d = DMatrix::from_fn(6, 6, |i, j| mat.d_matrix()[(i, j)]);
    let mut k = DMatrix::zeros(30, 30);
    let w = geo.volume / 4.0;
    for l in &QUAD_POINTS {
        let b = b_matrix(&tet10_shape_gradients(&geo, l));
        k += b.transpose() * &d * &b * w;
    }
    Ok(ElementStiffness {
        k,
        volume: geo.volume,
    })
}
