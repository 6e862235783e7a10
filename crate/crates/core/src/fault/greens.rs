use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::{slip_to_rhs, FaultError, FaultPatch, SlipDirection, SlipDistribution, UnitSlip};
use crate::batch::VectorBatch64;
use crate::ebe::EbeOperator;
use crate::elasticity::tet10_shape_values;
use crate::io::write_atomic;
use crate::mesh::{Mesh, Point, PointLocator};
use crate::multigrid::Hierarchy;
use crate::solver::{solve, SolveReport, SolverConfig};

/// One displacement component at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub point: Point,
    pub axis: u8,
}

/// Reads `x y z axis [value]` lines. Either every line has a value or none does.
pub fn read_observations(path: &Path) -> Result<(Vec<Observation>, Option<Vec<f64>>), FaultError> {
    let file = std::fs::File::open(path)?;
    let perr = |line: usize, msg: String| FaultError::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };
    let mut obs = Vec::new();
    let mut data = Vec::new();
    let mut width = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        if toks.len() != 4 && toks.len() != 5 {
            return Err(perr(i + 1, format!("expected 4 or 5 fields, found {}", toks.len())));
        }
        if *width.get_or_insert(toks.len()) != toks.len() {
            return Err(perr(i + 1, "inconsistent number of fields".into()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| perr(i + 1, format!("bad number '{s}'")));
        let point = [num(toks[0])?, num(toks[1])?, num(toks[2])?];
        let axis = match toks[3] {
            "0" | "x" => 0,
            "1" | "y" => 1,
            "2" | "z" => 2,
            a => return Err(perr(i + 1, format!("bad axis '{a}'"))),
        };
        obs.push(Observation { point, axis });
        if toks.len() == 5 {
            data.push(num(toks[4])?);
        }
    }
    if obs.is_empty() {
        return Err(perr(0, "no observations".into()));
    }
    Ok((obs, (width == Some(5)).then_some(data)))
}

#[derive(Debug, Clone)]
struct Probe {
    nodes: [u32; 10],
    weights: [f64; 10],
    axis: usize,
    /// `±1/2` inside fault-touching elements, else 0
    half_side: f64,
    fault_slot: [Option<usize>; 10],
}

/// Interpolates displacement components at fixed points, adding the slip
/// offset of the element side when sampling next to the fault.
#[derive(Debug, Clone)]
pub struct ObservationSampler {
    probes: Vec<Probe>,
    n_nodes: usize,
}

impl ObservationSampler {
    pub fn new(mesh: &Mesh, obs: &[Observation], patch: Option<&FaultPatch>) -> Result<Self, FaultError> {
        let loc = PointLocator::new(mesh);
        let mut probes = Vec::with_capacity(obs.len());
        let mut start = 0;
        for (index, o) in obs.iter().enumerate() {
            if o.axis > 2 {
                return Err(FaultError::Invalid(format!("observation {index} has axis {}", o.axis)));
            }
            let (e, l) = loc
                .locate(o.point, start)
                .ok_or(FaultError::ObservationOutside { index, point: o.point })?;
            start = e;
            let nodes = mesh.tets10()[e];
            let side = patch.and_then(|p| p.element_side(e)).unwrap_or(0);
            probes.push(Probe {
                nodes,
                weights: tet10_shape_values(&l),
                axis: o.axis as usize,
                half_side: 0.5 * side as f64,
                fault_slot: nodes.map(|n| patch.filter(|_| side != 0).and_then(|p| p.node_index(n))),
            });
        }
        Ok(Self {
            probes,
            n_nodes: mesh.node_count(),
        })
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }

    /// `rows = observations`, `cols = batch columns`.
    pub fn sample(&self, m: &VectorBatch64, slips: Option<&[SlipDistribution]>) -> DMatrix<f64> {
        assert_eq!(m.n_nodes(), self.n_nodes);
        let b = m.batch();
        if let Some(s) = slips {
            assert_eq!(s.len(), b);
        }
        let mut out = DMatrix::zeros(self.probes.len(), b);
        for (r, p) in self.probes.iter().enumerate() {
            for c in 0..b {
                let mut v = 0.0;
                for k in 0..10 {
                    let mut x = m.get(p.nodes[k] as usize, p.axis, c);
                    if let (Some(slot), Some(s)) = (p.fault_slot[k], slips) {
                        x += p.half_side * s[c].values()[slot][p.axis];
                    }
                    v += p.weights[k] * x;
                }
                out[(r, c)] = v;
            }
        }
        out
    }
}

/// Something that solves `K m = f` for a batch of right-hand sides.
pub trait BatchSolver {
    fn solve_batch(&mut self, f: &VectorBatch64) -> Result<VectorBatch64, FaultError>;
    /// Number of `solve_batch` calls so far.
    fn calls(&self) -> usize;
}

/// [`BatchSolver`] backed by the multigrid solver, keeping every report.
pub struct MultigridBatchSolver<'h> {
    pub hierarchy: &'h Hierarchy,
    pub config: SolverConfig,
    pub reports: Vec<SolveReport>,
}

impl<'h> MultigridBatchSolver<'h> {
    pub fn new(hierarchy: &'h Hierarchy, config: SolverConfig) -> Self {
        Self {
            hierarchy,
            config,
            reports: Vec::new(),
        }
    }
}

impl BatchSolver for MultigridBatchSolver<'_> {
    fn solve_batch(&mut self, f: &VectorBatch64) -> Result<VectorBatch64, FaultError> {
        let u0 = VectorBatch64::zeros(f.n_nodes(), f.batch());
        let (u, report) = solve(self.hierarchy, f, &u0, &self.config)?;
        self.reports.push(report);
        Ok(u)
    }

    fn calls(&self) -> usize {
        self.reports.len()
    }
}

/// Observation responses to unit slips: column `j` is the response to `slips[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GreensBank {
    pub matrix: DMatrix<f64>,
    pub observations: Vec<Observation>,
    pub slips: Vec<UnitSlip>,
}

/// Solves for every unit slip in batches of `batch_size` columns.
pub fn compute_greens_bank(
    op: &EbeOperator,
    patch: &FaultPatch,
    slips: &[UnitSlip],
    observations: &[Observation],
    batch_size: usize,
    solver: &mut dyn BatchSolver,
) -> Result<GreensBank, FaultError> {
    if slips.is_empty() || observations.is_empty() {
        return Err(FaultError::Invalid("need at least one slip and one observation".into()));
    }
    if batch_size == 0 {
        return Err(FaultError::Invalid("batch size must be at least 1".into()));
    }
    let sampler = ObservationSampler::new(op.mesh(), observations, Some(patch))?;
    let mut matrix = DMatrix::zeros(observations.len(), slips.len());
    for (bi, chunk) in slips.chunks(batch_size).enumerate() {
        let fields: Vec<SlipDistribution> = chunk.iter().map(|u| SlipDistribution::from_unit(patch, u)).collect();
        let f = slip_to_rhs(op, patch, &fields)?;
        let m = solver.solve_batch(&f)?;
        let cols = sampler.sample(&m, Some(&fields));
        matrix
            .columns_mut(bi * batch_size, chunk.len())
            .copy_from(&cols);
    }
    Ok(GreensBank {
        matrix,
        observations: observations.to_vec(),
        slips: slips.to_vec(),
    })
}

const GREENS_MAGIC: &str = "TSGREENS 1";

/// Text header with row and column descriptors, then the matrix as raw
/// little-endian f64 in column-major order.
pub fn write_greens(path: &Path, bank: &GreensBank) -> std::io::Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{GREENS_MAGIC}")?;
        writeln!(w, "rows {}", bank.matrix.nrows())?;
        writeln!(w, "cols {}", bank.matrix.ncols())?;
        for o in &bank.observations {
            writeln!(w, "{:e} {:e} {:e} {}", o.point[0], o.point[1], o.point[2], o.axis)?;
        }
        for s in &bank.slips {
            let c = s.center;
            writeln!(w, "{:e} {:e} {:e} {} {:e}", c[0], c[1], c[2], s.direction.name(), s.radius)?;
        }
        writeln!(w, "data")?;
        for v in bank.matrix.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    })
}

pub fn read_greens(path: &Path) -> Result<GreensBank, FaultError> {
    let perr = |line: usize, msg: String| FaultError::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut lineno = 0;
    let mut next = |r: &mut BufReader<std::fs::File>| -> Result<(usize, String), FaultError> {
        let mut l = String::new();
        lineno += 1;
        if r.read_line(&mut l)? == 0 {
            return Err(perr(lineno, "truncated header".into()));
        }
        Ok((lineno, l.trim_end().to_string()))
    };
    let (n, magic) = next(&mut r)?;
    if magic != GREENS_MAGIC {
        return Err(perr(n, format!("bad magic '{magic}'")));
    }
    let mut count = |r: &mut BufReader<std::fs::File>, key: &str| -> Result<usize, FaultError> {
        let (n, l) = next(r)?;
        l.strip_prefix(key)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| perr(n, format!("expected '{key} <count>'")))
    };
    let rows = count(&mut r, "rows")?;
    let cols = count(&mut r, "cols")?;
    let nums = |n: usize, toks: &[&str]| -> Result<Vec<f64>, FaultError> {
        toks.iter()
            .map(|t| t.parse::<f64>().map_err(|_| perr(n, format!("bad number '{t}'"))))
            .collect()
    };
    let mut observations = Vec::with_capacity(rows);
    for _ in 0..rows {
        let (n, l) = next(&mut r)?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(perr(n, "expected 'x y z axis'".into()));
        }
        let v = nums(n, &toks[..3])?;
        let axis: u8 = toks[3].parse().ok().filter(|a| *a < 3).ok_or_else(|| perr(n, "bad axis".into()))?;
        observations.push(Observation {
            point: [v[0], v[1], v[2]],
            axis,
        });
    }
    let mut slips = Vec::with_capacity(cols);
    for _ in 0..cols {
        let (n, l) = next(&mut r)?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 5 {
            return Err(perr(n, "expected 'x y z direction radius'".into()));
        }
        let v = nums(n, &[toks[0], toks[1], toks[2], toks[4]])?;
        let direction = SlipDirection::parse(toks[3]).ok_or_else(|| perr(n, format!("bad direction '{}'", toks[3])))?;
        slips.push(UnitSlip {
            center: [v[0], v[1], v[2]],
            direction,
            radius: v[3],
        });
    }
    let (n, l) = next(&mut r)?;
    if l != "data" {
        return Err(perr(n, "expected 'data'".into()));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != rows * cols * 8 {
        return Err(perr(n + 1, format!("expected {} data bytes, found {}", rows * cols * 8, bytes.len())));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(GreensBank {
        matrix: DMatrix::from_vec(rows, cols, data),
        observations,
        slips,
    })
}
