use super::{FaultError, FaultPatch, SlipDirection};
use crate::mesh::{dot, norm, sub, Point};

/// Centered quadratic B-spline with support `|t| < 1.5`.
pub fn quadratic_bspline(t: f64) -> f64 {
    let a = t.abs();
    if a <= 0.5 {
        0.75 - a * a
    } else if a < 1.5 {
        0.5 * (1.5 - a) * (1.5 - a)
    } else {
        0.0
    }
}

/// Radial slip profile: 1 at the center, falling to 0 at `radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitSlip {
    pub center: Point,
    pub direction: SlipDirection,
    pub radius: f64,
}

impl UnitSlip {
    pub fn amplitude(&self, p: Point) -> f64 {
        let r = sub(p, self.center);
        quadratic_bspline(1.5 * norm(r) / self.radius) / 0.75
    }
}

/// Unit slip centered on a fault node.
pub fn unit_slip_basis(patch: &FaultPatch, node: u32, direction: SlipDirection, radius: f64) -> Result<UnitSlip, FaultError> {
    if !(radius > 0.0) {
        return Err(FaultError::Invalid(format!("basis radius must be positive, got {radius}")));
    }
    let k = patch.node_index(node).ok_or(FaultError::NotAFaultNode(node))?;
    Ok(UnitSlip {
        center: patch.node_coords()[k],
        direction,
        radius,
    })
}

/// Regular `n_strike × n_dip` grid of basis centers over a rectangle on the
/// fault, each snapped to its nearest fault node. Ordered strike-fastest.
pub fn center_grid(
    patch: &FaultPatch,
    origin: Point,
    length: f64,
    width: f64,
    n_strike: usize,
    n_dip: usize,
) -> Vec<u32> {
    let g = patch.geometry();
    let mut out = Vec::with_capacity(n_strike * n_dip);
    for j in 0..n_dip {
        for i in 0..n_strike {
            let xi = length * (i + 1) as f64 / (n_strike + 1) as f64;
            let eta = width * (j + 1) as f64 / (n_dip + 1) as f64;
            let p: Point = std::array::from_fn(|a| origin[a] + xi * g.strike[a] + eta * g.dip[a]);
            let k = patch
                .node_coords()
                .iter()
                .enumerate()
                .map(|(k, q)| {
                    let d = sub(*q, p);
                    (k, dot(d, d))
                })
                .fold((0, f64::INFINITY), |a, x| if x.1 < a.1 { x } else { a })
                .0;
            out.push(patch.nodes()[k]);
        }
    }
    out
}

/// Slip vector at every fault node, in [`FaultPatch::nodes`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct SlipDistribution {
    values: Vec<[f64; 3]>,
}

impl SlipDistribution {
    pub fn zeros(patch: &FaultPatch) -> Self {
        Self {
            values: vec![[0.0; 3]; patch.nodes().len()],
        }
    }

    pub fn from_unit(patch: &FaultPatch, unit: &UnitSlip) -> Self {
        let dir = patch.geometry().direction(unit.direction);
        Self {
            values: patch
                .node_coords()
                .iter()
                .map(|&p| {
                    let a = unit.amplitude(p);
                    dir.map(|d| a * d)
                })
                .collect(),
        }
    }

    /// Slip given on a subset of fault nodes; the rest is zero.
    pub fn from_nodes(patch: &FaultPatch, values: &[(u32, [f64; 3])]) -> Result<Self, FaultError> {
        let mut s = Self::zeros(patch);
        for &(node, v) in values {
            let k = patch.node_index(node).ok_or(FaultError::NotAFaultNode(node))?;
            s.values[k] = v;
        }
        Ok(s)
    }

    /// `Σ cⱼ uⱼ` over unit slips.
    pub fn combine(patch: &FaultPatch, coeffs: &[f64], units: &[UnitSlip]) -> Self {
        assert_eq!(coeffs.len(), units.len());
        let mut s = Self::zeros(patch);
        for (&c, u) in coeffs.iter().zip(units) {
            let one = Self::from_unit(patch, u);
            for (a, b) in s.values.iter_mut().zip(&one.values) {
                for i in 0..3 {
                    a[i] += c * b[i];
                }
            }
        }
        s
    }

    pub fn scaled(&self, f: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v.map(|x| f * x)).collect(),
        }
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.values
    }
}
