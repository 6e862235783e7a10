use super::{signed_volume, Mesh, Point};

/// Finds the element containing a point by walking across faces toward it,
/// falling back to a linear scan when the walk leaves the mesh.
pub struct PointLocator<'m> {
    mesh: &'m Mesh,
    neighbors: Vec<[Option<u32>; 4]>,
}

impl<'m> PointLocator<'m> {
    pub fn new(mesh: &'m Mesh) -> Self {
        Self {
            mesh,
            neighbors: mesh.face_neighbors(),
        }
    }

    /// Barycentric coordinates of `p` in element `e`; coordinate `i` is the
    /// weight of local vertex `i`.
    pub fn barycentric(&self, e: usize, p: Point) -> [f64; 4] {
        barycentric(&self.mesh.vertex_coords(e), p)
    }

    /// Returns the containing element and the barycentric coordinates of `p` in it.
    pub fn locate(&self, p: Point, start: usize) -> Option<(usize, [f64; 4])> {
        let n = self.mesh.element_count();
        if n == 0 {
            return None;
        }
        let tol = -1e-10;
        let mut e = start.min(n - 1);
        for _ in 0..n {
            let b = self.barycentric(e, p);
            let (worst, wv) = b
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
            if wv >= tol {
                return Some((e, b));
            }
            match self.neighbors[e][worst] {
                Some(nb) => e = nb as usize,
                None => break,
            }
        }
        (0..n).find_map(|e| {
            let b = self.barycentric(e, p);
            b.iter().all(|&v| v >= tol).then_some((e, b))
        })
    }
}

pub(crate) fn barycentric(v: &[Point; 4], p: Point) -> [f64; 4] {
    let vol = signed_volume(v);
    let mut b = [0.0; 4];
    for (i, bi) in b.iter_mut().enumerate() {
        let mut w = *v;
        w[i] = p;
        *bi = signed_volume(&w) / vol;
    }
    b
}
