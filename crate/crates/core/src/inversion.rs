//! Tikhonov-regularized slip inversion with L-curve weight selection.
//!
//! Solves `min ‖G a − d‖² + α² ‖L a‖²` as the stacked least-squares problem
//! `[αL; G] a ≈ [0; d]` by Householder QR. The weighted rows go first so the
//! factorization stays accurate for very large α, where forming
//! `GᵀG + α²LᵀL` would round `GᵀG` away entirely.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::fault::UnitSlip;
use crate::io::write_atomic;
use crate::mesh::{norm, sub, Point};

#[derive(Debug, Error)]
pub enum InversionError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("alpha must be finite and non-negative, got {0}")]
    InvalidAlpha(f64),
    #[error("regularized system is singular at alpha = {alpha}; use a larger alpha")]
    Singular { alpha: f64 },
    #[error("L-curve needs at least 5 alphas, got {0}")]
    TooFewAlphas(usize),
    #[error("L-curve alphas must be positive and strictly increasing")]
    BadGrid,
    #[error("L-curve is degenerate: every residual norm is equal")]
    DegenerateCurve,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Graph Laplacian over basis centers: `degree` on the diagonal, `-1` for
/// every other center of the same slip direction within `neighbor_dist`.
pub fn smoothing_from_slips(slips: &[UnitSlip], neighbor_dist: f64) -> DMatrix<f64> {
    let n = slips.len();
    let lim = neighbor_dist * (1.0 + 1e-9);
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j && slips[i].direction == slips[j].direction {
                let r = sub(slips[i].center, slips[j].center);
                if norm(r) <= lim {
                    l[(i, j)] = -1.0;
                    l[(i, i)] += 1.0;
                }
            }
        }
    }
    l
}

/// Block-diagonal Laplacian for `n_dirs` directions sharing one set of
/// centers. Unknown `dir * centers.len() + k` belongs to center `k`.
pub fn build_smoothing_matrix(centers: &[Point], neighbor_dist: f64, n_dirs: usize) -> DMatrix<f64> {
    let nc = centers.len();
    let lim = neighbor_dist * (1.0 + 1e-9);
    let mut l = DMatrix::zeros(nc * n_dirs, nc * n_dirs);
    for i in 0..nc {
        for j in 0..nc {
            let r = sub(centers[i], centers[j]);
            if i != j && norm(r) <= lim {
                for d in 0..n_dirs {
                    l[(d * nc + i, d * nc + j)] = -1.0;
                    l[(d * nc + i, d * nc + i)] += 1.0;
                }
            }
        }
    }
    l
}

/// Smallest distance between two distinct centers; a natural neighbor radius
/// for a regular grid.
pub fn nearest_spacing(centers: &[Point]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            let r = sub(centers[i], centers[j]);
            let d = norm(r);
            if d > 0.0 && best.is_none_or(|b| d < b) {
                best = Some(d);
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedSolution {
    pub alpha: f64,
    pub a: DVector<f64>,
    /// `‖G a − d‖`
    pub residual: f64,
    /// `‖L a‖`
    pub seminorm: f64,
}

fn check_dims(g: &DMatrix<f64>, d: &DVector<f64>, l: &DMatrix<f64>) -> Result<(), InversionError> {
    if g.nrows() != d.len() {
        return Err(InversionError::Dimension(format!("G has {} rows, d has {}", g.nrows(), d.len())));
    }
    if l.ncols() != g.ncols() {
        return Err(InversionError::Dimension(format!("G has {} columns, L has {}", g.ncols(), l.ncols())));
    }
    if g.ncols() == 0 {
        return Err(InversionError::Dimension("no unknowns".into()));
    }
    Ok(())
}

pub fn solve_regularized(
    g: &DMatrix<f64>,
    d: &DVector<f64>,
    l: &DMatrix<f64>,
    alpha: f64,
) -> Result<RegularizedSolution, InversionError> {
    check_dims(g, d, l)?;
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(InversionError::InvalidAlpha(alpha));
    }
    let (m, n, k) = (g.nrows(), g.ncols(), l.nrows());
    if m + k < n {
        return Err(InversionError::Singular { alpha });
    }
    let mut a = DMatrix::zeros(k + m, n);
    a.rows_mut(0, k).copy_from(&(l * alpha));
    a.rows_mut(k, m).copy_from(g);
    let mut rhs = DVector::zeros(k + m);
    rhs.rows_mut(k, m).copy_from(d);

    let qr = a.qr();
    let r = qr.r();
    let rmax = r.diagonal().amax();
    if !(rmax > 0.0) || r.diagonal().iter().any(|v| v.abs() <= 1e-12 * rmax) {
        return Err(InversionError::Singular { alpha });
    }
    qr.q_tr_mul(&mut rhs);
    let sol = r
        .solve_upper_triangular(&rhs.rows(0, n).into_owned())
        .ok_or(InversionError::Singular { alpha })?;
    let residual = (g * &sol - d).norm();
    let seminorm = (l * &sol).norm();
    Ok(RegularizedSolution {
        alpha,
        a: sol,
        residual,
        seminorm,
    })
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LCurvePoint {
    pub alpha: f64,
    pub residual: f64,
    pub seminorm: f64,
    /// Signed three-point curvature of the log-log curve; positive bends
    /// toward the corner. Zero at the two end points.
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LCurve {
    pub points: Vec<LCurvePoint>,
    pub selected: usize,
    pub solution: RegularizedSolution,
}

impl LCurve {
    pub fn alpha(&self) -> f64 {
        self.points[self.selected].alpha
    }

    pub fn write_report(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{:>14} {:>14} {:>14} {:>14}", "alpha", "residual", "seminorm", "curvature")?;
        for (i, p) in self.points.iter().enumerate() {
            let mark = if i == self.selected { " *" } else { "" };
            writeln!(
                w,
                "{:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e}{mark}",
                p.alpha, p.residual, p.seminorm, p.curvature
            )?;
        }
        writeln!(w, "selected_alpha={:e}", self.alpha())?;
        writeln!(w, "residual={:e}", self.solution.residual)?;
        writeln!(w, "seminorm={:e}", self.solution.seminorm)?;
        for (i, v) in self.solution.a.iter().enumerate() {
            writeln!(w, "a[{i}]={v:e}")?;
        }
        Ok(())
    }

    pub fn save_report(&self, path: &Path) -> std::io::Result<()> {
        write_atomic(path, |w| self.write_report(w))
    }
}

/// Menger curvature of three points, signed by the turn direction.
fn curvature3(p1: (f64, f64), p2: (f64, f64), p3: (f64, f64)) -> f64 {
    let (ax, ay) = (p2.0 - p1.0, p2.1 - p1.1);
    let (bx, by) = (p3.0 - p2.0, p3.1 - p2.1);
    let (cx, cy) = (p3.0 - p1.0, p3.1 - p1.1);
    let denom = (ax.hypot(ay)) * (bx.hypot(by)) * (cx.hypot(cy));
    if denom > 0.0 {
        2.0 * (ax * by - ay * bx) / denom
    } else {
        0.0
    }
}

pub fn select_alpha_lcurve(
    g: &DMatrix<f64>,
    d: &DVector<f64>,
    l: &DMatrix<f64>,
    alphas: &[f64],
) -> Result<LCurve, InversionError> {
    check_dims(g, d, l)?;
    if alphas.len() < 5 {
        return Err(InversionError::TooFewAlphas(alphas.len()));
    }
    if alphas.iter().any(|a| !(*a > 0.0) || !a.is_finite()) || alphas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(InversionError::BadGrid);
    }
    let sols = alphas
        .iter()
        .map(|&a| solve_regularized(g, d, l, a))
        .collect::<Result<Vec<_>, _>>()?;
    if sols.iter().all(|s| s.residual == sols[0].residual) {
        return Err(InversionError::DegenerateCurve);
    }
    let pts: Vec<(f64, f64)> = sols
        .iter()
        .map(|s| (s.residual.max(1e-300).ln(), s.seminorm.max(1e-300).ln()))
        .collect();
    let mut curv = vec![0.0; pts.len()];
    for i in 1..pts.len() - 1 {
        curv[i] = curvature3(pts[i - 1], pts[i], pts[i + 1]);
    }
    let mut selected = 1;
    for i in 1..pts.len() - 1 {
        if curv[i] >= curv[selected] {
            selected = i;
        }
    }
    let points = sols
        .iter()
        .zip(&curv)
        .map(|(s, &c)| LCurvePoint {
            alpha: s.alpha,
            residual: s.residual,
            seminorm: s.seminorm,
            curvature: c,
        })
        .collect();
    Ok(LCurve {
        points,
        selected,
        solution: sols[selected].clone(),
    })
}
