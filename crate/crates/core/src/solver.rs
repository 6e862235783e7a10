//! Outer flexible CG with a three-level mixed-precision preconditioner, and a
//! block-Jacobi CG baseline.
//!
//! All scalars (step lengths, residual ratios) are per batch column, and the
//! outer loop stops when the largest column ratio `‖r‖²/‖f‖²` reaches the
//! tolerance. Every column follows exactly the same arithmetic as it would in
//! a batch of width one; only the number of iterations depends on the batch.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::batch::{VectorBatch, VectorBatch64};
use crate::ebe::{BlockJacobi, EbeError, EbeOperator, LinearOperator};
use crate::exec::ExecMode;
use crate::multigrid::{Hierarchy, InnerLevels};
use crate::scalar::{Precision, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelConfig {
    /// Stop when `max ‖e‖²/‖r‖²` over columns is at most this.
    pub tol: f64,
    /// Iteration cap; reaching it is normal operation.
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    /// Levels 0 (quadratic), 1 (linear), 2 (aggregated).
    pub levels: [LevelConfig; 3],
    /// Columns per solver call for drivers that split many right-hand sides.
    pub batch_size: usize,
    /// Arithmetic of the inner loops.
    pub inner_precision: Precision,
    /// Record column residuals every this many outer iterations (0 disables).
    pub history_stride: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            outer_tol: 1e-8,
            outer_max_iter: 5000,
            levels: [
                LevelConfig { tol: 0.1, max_iter: 30 },
                LevelConfig { tol: 0.05, max_iter: 300 },
                LevelConfig { tol: 0.025, max_iter: 3000 },
            ],
            batch_size: 16,
            inner_precision: Precision::F32,
            history_stride: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidConfig(m));
        if !(self.outer_tol > 0.0 && self.outer_tol < 1.0) {
            return bad(format!("outer tolerance {} not in (0, 1)", self.outer_tol));
        }
        if self.outer_max_iter == 0 {
            return bad("outer iteration cap must be at least 1".into());
        }
        for (i, l) in self.levels.iter().enumerate() {
            if !(l.tol > 0.0 && l.tol < 1.0) {
                return bad(format!("level {i} tolerance {} not in (0, 1)", l.tol));
            }
            if l.max_iter == 0 {
                return bad(format!("level {i} iteration cap must be at least 1"));
            }
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseTimes {
    pub preconditioner: [Duration; 3],
    pub outer_matvec: Duration,
    pub total: Duration,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveReport {
    pub outer_iterations: usize,
    /// Total inner iterations on levels 0, 1, 2.
    pub inner_iterations: [usize; 3],
    /// Final per-column `‖r‖²/‖f‖²` of the recurrence residual.
    pub residuals: Vec<f64>,
    /// Per-column `‖f − Ku‖²/‖f‖²` recomputed from the returned solution.
    pub true_residuals: Vec<f64>,
    /// `(iteration, per-column ratios)` at the configured stride.
    pub history: Vec<(usize, Vec<f64>)>,
    /// Outer iterations in which the largest column ratio increased.
    pub nonmonotone_steps: usize,
    pub restarts: usize,
    pub converged: bool,
    pub times: PhaseTimes,
}

impl SolveReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_true_residual(&self) -> f64 {
        self.true_residuals.iter().copied().fold(0.0, f64::max)
    }

    /// Human-readable log, one line per recorded iteration plus totals.
    pub fn log_lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .history
            .iter()
            .map(|(i, r)| {
                let max = r.iter().copied().fold(0.0, f64::max);
                format!("iter {i:>5}  max_rel_res2 {max:.3e}")
            })
            .collect();
        out.push(format!(
            "outer {} | inner {} / {} / {} | converged {}",
            self.outer_iterations,
            self.inner_iterations[0],
            self.inner_iterations[1],
            self.inner_iterations[2],
            self.converged
        ));
        let t = &self.times;
        out.push(format!(
            "time total {:.3}s outer_matvec {:.3}s level0 {:.3}s level1 {:.3}s level2 {:.3}s",
            t.total.as_secs_f64(),
            t.outer_matvec.as_secs_f64(),
            t.preconditioner[0].as_secs_f64(),
            t.preconditioner[1].as_secs_f64(),
            t.preconditioner[2].as_secs_f64()
        ));
        out
    }

    /// Machine-readable `key=value` lines; wall-clock times are left out so the
    /// summary is reproducible.
    pub fn summary_lines(&self) -> Vec<String> {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
        vec![
            format!("converged={}", self.converged),
            format!("outer_iterations={}", self.outer_iterations),
            format!("inner_iterations_level0={}", self.inner_iterations[0]),
            format!("inner_iterations_level1={}", self.inner_iterations[1]),
            format!("inner_iterations_level2={}", self.inner_iterations[2]),
            format!("max_residual={:e}", self.max_residual()),
            format!("max_true_residual={:e}", self.max_true_residual()),
            format!("residuals={}", join(&self.residuals)),
            format!("true_residuals={}", join(&self.true_residuals)),
            format!("restarts={}", self.restarts),
        ]
    }

    pub fn write_log(&self, path: &Path) -> std::io::Result<()> {
        crate::io::write_atomic(path, |w| {
            for (i, r) in &self.history {
                let cols: Vec<String> = r.iter().map(|x| format!("{x:e}")).collect();
                writeln!(w, "{i} {}", cols.join(" "))?;
            }
            Ok(())
        })
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error("{stage}: non-positive curvature (p, Ap) = {gamma:e} at iteration {iteration}, column {column}")]
    Breakdown {
        stage: &'static str,
        iteration: usize,
        column: usize,
        gamma: f64,
    },
    #[error("{stage}: non-finite value at iteration {iteration}")]
    NonFinite { stage: &'static str, iteration: usize },
    #[error("not converged after {} outer iterations (max ‖r‖²/‖f‖² = {:e})", .0.outer_iterations, .0.max_residual())]
    NotConverged(Box<SolveReport>),
    #[error(transparent)]
    Ebe(#[from] EbeError),
}

const STAGES: [&str; 3] = ["inner level 0", "inner level 1", "inner level 2"];

/// Step lengths `ρ/γ`, with zero steps for columns that have nothing left to do.
fn step_lengths(rho: &[f64], gamma: &[f64], stage: &'static str, iteration: usize) -> Result<Vec<f64>, SolverError> {
    rho.iter()
        .zip(gamma)
        .enumerate()
        .map(|(c, (&r, &g))| {
            if !(r.is_finite() && g.is_finite()) {
                Err(SolverError::NonFinite { stage, iteration })
            } else if g > 0.0 {
                Ok(r / g)
            } else if r == 0.0 {
                Ok(0.0)
            } else {
                Err(SolverError::Breakdown {
                    stage,
                    iteration,
                    column: c,
                    gamma: g,
                })
            }
        })
        .collect()
}

fn ratios(num: &[f64], den: &[f64]) -> Vec<f64> {
    num.iter()
        .zip(den)
        .map(|(&n, &d)| if d > 0.0 { n / d } else { 0.0 })
        .collect()
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

/// Block-Jacobi preconditioned CG from the initial guess in `u`.
///
/// Runs at most `max_iter` iterations and stops early once every column has
/// `‖e‖²/‖r‖² ≤ tol`. Returns the number of iterations performed.
#[allow(clippy::too_many_arguments)]
pub fn inner_pcg<T: Scalar, A: LinearOperator<T>>(
    a: &A,
    m: &BlockJacobi<T>,
    r: &VectorBatch<T>,
    u: &mut VectorBatch<T>,
    tol: f64,
    max_iter: usize,
    mode: ExecMode,
    stage: &'static str,
) -> Result<usize, SolverError> {
    let mut e = a.apply(u)?;
    e.rsub_from(r, mode);
    let r_norm = r.norms_sq(mode);
    let b = r.batch();
    let mut z = VectorBatch::<T>::zeros(r.n_nodes(), b);
    let mut p = VectorBatch::<T>::zeros(r.n_nodes(), b);
    let mut q = VectorBatch::<T>::zeros(r.n_nodes(), b);
    let mut rho_b = vec![0.0; b];
    let mut i = 0;
    loop {
        let err = max_of(&ratios(&e.norms_sq(mode), &r_norm));
        if !err.is_finite() {
            return Err(SolverError::NonFinite { stage, iteration: i });
        }
        if err <= tol || i >= max_iter {
            return Ok(i);
        }
        m.apply_into(&e, &mut z)?;
        let rho_a = z.dot(&e, mode);
        let beta: Vec<f64> = if i > 0 {
            rho_a
                .iter()
                .zip(&rho_b)
                .map(|(&ra, &rb)| if rb != 0.0 { ra / rb } else { 0.0 })
                .collect()
        } else {
            vec![0.0; b]
        };
        p.xpby(&z, &beta, mode);
        a.apply_into(&p, &mut q)?;
        let gamma = p.dot(&q, mode);
        let alpha = step_lengths(&rho_a, &gamma, stage, i)?;
        rho_b = rho_a;
        let neg: Vec<f64> = alpha.iter().map(|x| -x).collect();
        e.axpy(&neg, &q, mode);
        u.axpy(&alpha, &p, mode);
        i += 1;
    }
}

/// Right-hand sides whose column is zero get a zero solution; returns `‖f‖²`.
fn prepare(f: &VectorBatch64, u: &mut VectorBatch64, mode: ExecMode) -> Vec<f64> {
    let f_norm = f.norms_sq(mode);
    let b = f.batch();
    for (c, &fn2) in f_norm.iter().enumerate() {
        if fn2 == 0.0 {
            for row in u.as_mut_slice().chunks_mut(b) {
                row[c] = 0.0;
            }
        }
    }
    f_norm
}

/// Flexible CG on `K u = f` with an arbitrary preconditioner `z = B(r)`.
fn flexible_cg<P>(
    k: &EbeOperator,
    f: &VectorBatch64,
    u0: &VectorBatch64,
    tol: f64,
    max_iter: usize,
    history_stride: usize,
    report: &mut SolveReport,
    mut precond: P,
) -> Result<VectorBatch64, SolverError>
where
    P: FnMut(&VectorBatch64, &mut VectorBatch64, &mut SolveReport) -> Result<(), SolverError>,
{
    let t_start = Instant::now();
    let mode = k.mode();
    if u0.n_nodes() != f.n_nodes() || u0.batch() != f.batch() {
        return Err(EbeError::BatchMismatch {
            a: f.batch(),
            b: u0.batch(),
        }
        .into());
    }
    let mut u = u0.clone();
    let f_norm = prepare(f, &mut u, mode);
    let b = f.batch();
    let n = f.n_nodes();

    let residual = |u: &VectorBatch64, rep: &mut SolveReport| -> Result<VectorBatch64, SolverError> {
        let t = Instant::now();
        let mut r = k.apply(u)?;
        rep.times.outer_matvec += t.elapsed();
        r.rsub_from(f, mode);
        Ok(r)
    };

    let mut r = residual(&u, report)?;
    let mut err = ratios(&r.norms_sq(mode), &f_norm);
    let mut z = VectorBatch64::zeros(n, b);
    let mut p = VectorBatch64::zeros(n, b);
    let mut q = VectorBatch64::zeros(n, b);
    let mut gamma = vec![0.0; b];
    let mut fresh = true;
    let mut it = 0;
    if history_stride > 0 {
        report.history.push((0, err.clone()));
    }
    loop {
        if !max_of(&err).is_finite() {
            return Err(SolverError::NonFinite {
                stage: "outer loop",
                iteration: it,
            });
        }
        if max_of(&err) <= tol {
            // guard against recurrence drift before accepting
            let r_true = residual(&u, report)?;
            let err_true = ratios(&r_true.norms_sq(mode), &f_norm);
            if max_of(&err_true) <= tol || it >= max_iter {
                report.true_residuals = err_true;
                report.converged = max_of(&report.true_residuals) <= tol;
                break;
            }
            r = r_true;
            err = err_true;
            fresh = true;
            report.restarts += 1;
            continue;
        }
        if it >= max_iter {
            let r_true = residual(&u, report)?;
            report.true_residuals = ratios(&r_true.norms_sq(mode), &f_norm);
            report.converged = false;
            break;
        }
        precond(&r, &mut z, report)?;
        let beta: Vec<f64> = if fresh {
            vec![0.0; b]
        } else {
            // A-orthogonalise the new direction against the previous one
            z.dot(&q, mode)
                .iter()
                .zip(&gamma)
                .map(|(&zq, &g)| if g > 0.0 { -zq / g } else { 0.0 })
                .collect()
        };
        fresh = false;
        p.xpby(&z, &beta, mode);
        let t = Instant::now();
        k.apply_into(&p, &mut q)?;
        report.times.outer_matvec += t.elapsed();
        let rho = z.dot(&r, mode);
        gamma = p.dot(&q, mode);
        let alpha = step_lengths(&rho, &gamma, "outer loop", it)?;
        let neg: Vec<f64> = alpha.iter().map(|x| -x).collect();
        r.axpy(&neg, &q, mode);
        u.axpy(&alpha, &p, mode);
        it += 1;
        let prev = max_of(&err);
        err = ratios(&r.norms_sq(mode), &f_norm);
        if max_of(&err) > prev {
            report.nonmonotone_steps += 1;
        }
        if history_stride > 0 && it % history_stride == 0 {
            report.history.push((it, err.clone()));
        }
    }
    report.outer_iterations = it;
    report.residuals = err;
    report.times.total += t_start.elapsed();
    if report.converged {
        Ok(u)
    } else {
        Err(SolverError::NotConverged(Box::new(report.clone())))
    }
}

/// Per-column scale factors that bring each residual column to unit norm
/// before it enters the low-precision preconditioner.
fn column_scales(r: &VectorBatch64, mode: ExecMode) -> Vec<f64> {
    r.norms_sq(mode)
        .into_iter()
        .map(|s| if s > 0.0 { s.sqrt() } else { 1.0 })
        .collect()
}

fn scale_columns<T: Scalar>(v: &mut VectorBatch<T>, s: &[f64]) {
    let b = v.batch();
    let st: Vec<T> = s.iter().map(|x| T::from_f64(*x)).collect();
    for row in v.as_mut_slice().chunks_mut(b) {
        for (x, k) in row.iter_mut().zip(&st) {
            *x *= *k;
        }
    }
}

fn multigrid_precondition<T: Scalar>(
    h: &Hierarchy,
    inner: &InnerLevels<T>,
    cfg: &SolverConfig,
    r: &VectorBatch64,
    z: &mut VectorBatch64,
    report: &mut SolveReport,
) -> Result<(), SolverError>
where
    EbeOperator: LinearOperator<T>,
{
    let mode = h.k0.mode();
    let b = r.batch();
    let [n0, n1, n2] = h.n_nodes();
    let scales = column_scales(r, mode);
    let inv: Vec<f64> = scales.iter().map(|s| 1.0 / s).collect();
    let mut rb: VectorBatch<T> = r.cast();
    scale_columns(&mut rb, &inv);

    let mut ub = inner.m0.apply(&rb)?;
    let mut r1 = VectorBatch::<T>::zeros(n1, b);
    let mut u1 = VectorBatch::<T>::zeros(n1, b);
    h.p1.restrict(&rb, &mut r1);
    h.p1.restrict(&ub, &mut u1);
    let mut r2 = VectorBatch::<T>::zeros(n2, b);
    let mut u2 = VectorBatch::<T>::zeros(n2, b);
    h.p2.restrict(&r1, &mut r2);
    h.p2.restrict(&u1, &mut u2);

    let lv = &cfg.levels;
    let t = Instant::now();
    report.inner_iterations[2] += inner_pcg(&inner.a2, &inner.m2, &r2, &mut u2, lv[2].tol, lv[2].max_iter, mode, STAGES[2])?;
    report.times.preconditioner[2] += t.elapsed();
    h.p2.prolongate(&u2, &mut u1);

    let t = Instant::now();
    report.inner_iterations[1] += inner_pcg(&h.k1, &inner.m1, &r1, &mut u1, lv[1].tol, lv[1].max_iter, mode, STAGES[1])?;
    report.times.preconditioner[1] += t.elapsed();
    h.p1.prolongate(&u1, &mut ub);

    let t = Instant::now();
    report.inner_iterations[0] += inner_pcg(&h.k0, &inner.m0, &rb, &mut ub, lv[0].tol, lv[0].max_iter, mode, STAGES[0])?;
    report.times.preconditioner[0] += t.elapsed();
    debug_assert_eq!(ub.n_nodes(), n0);

    z.assign_from(&ub);
    scale_columns(z, &scales);
    Ok(())
}

/// Solves `K u = f` for every column of `f` with the three-level preconditioner.
pub fn solve(
    h: &Hierarchy,
    f: &VectorBatch64,
    u0: &VectorBatch64,
    cfg: &SolverConfig,
) -> Result<(VectorBatch64, SolveReport), SolverError> {
    cfg.validate()?;
    let mut report = SolveReport::default();
    let u = match cfg.inner_precision {
        Precision::F32 => flexible_cg(
            &h.k0,
            f,
            u0,
            cfg.outer_tol,
            cfg.outer_max_iter,
            cfg.history_stride,
            &mut report,
            |r, z, rep| multigrid_precondition(h, &h.inner32, cfg, r, z, rep),
        ),
        Precision::F64 => flexible_cg(
            &h.k0,
            f,
            u0,
            cfg.outer_tol,
            cfg.outer_max_iter,
            cfg.history_stride,
            &mut report,
            |r, z, rep| multigrid_precondition(h, &h.inner64, cfg, r, z, rep),
        ),
    }?;
    Ok((u, report))
}

/// Splits the columns of `f` into groups of `cfg.batch_size` and solves each
/// group with [`solve`], starting from zero. Reports come back per group.
pub fn solve_batched(
    h: &Hierarchy,
    f: &VectorBatch64,
    cfg: &SolverConfig,
) -> Result<(VectorBatch64, Vec<SolveReport>), SolverError> {
    cfg.validate()?;
    let (n, b) = (f.n_nodes(), f.batch());
    let mut u = VectorBatch64::zeros(n, b);
    let mut reports = Vec::with_capacity(b.div_ceil(cfg.batch_size));
    for start in (0..b).step_by(cfg.batch_size) {
        let end = (start + cfg.batch_size).min(b);
        let (part, rep) = solve(h, &f.columns(start..end), &VectorBatch64::zeros(n, end - start), cfg)?;
        for c in start..end {
            u.set_column(c, &part.column(c - start));
        }
        reports.push(rep);
    }
    Ok((u, reports))
}

/// Baseline CG with the 64-bit 3x3 block-Jacobi preconditioner of `K`.
pub fn solve_pcge(
    k: &EbeOperator,
    f: &VectorBatch64,
    u0: &VectorBatch64,
    tol: f64,
    max_iter: usize,
) -> Result<(VectorBatch64, SolveReport), SolverError> {
    if !(tol > 0.0 && tol < 1.0) || max_iter == 0 {
        return Err(SolverError::InvalidConfig(format!(
            "tolerance {tol} must be in (0, 1) and iteration cap {max_iter} at least 1"
        )));
    }
    let m = BlockJacobi::<f64>::from_ebe(k)?;
    let mut report = SolveReport::default();
    let u = flexible_cg(k, f, u0, tol, max_iter, 1, &mut report, |r, z, rep| {
        let t = Instant::now();
        m.apply_into(r, z)?;
        rep.times.preconditioner[0] += t.elapsed();
        Ok(())
    })?;
    Ok((u, report))
}
