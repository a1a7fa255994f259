//! Log-barrier path following on the real symmetric form of the problem.

use log::debug;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use super::problem::{Sense, SdpProblem};
use crate::error::{Error, Result};
use crate::linalg::real_embedding;

/// Largest accepted sum of (complex) block sides.
pub const MAX_TOTAL_BLOCK_SIDE: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpOptions {
    /// Blocks must keep `λ_min ≥ -feasibility_tol`.
    pub feasibility_tol: f64,
    /// Stop when the duality gap is below `gap_tol (1 + |objective|)`.
    pub gap_tol: f64,
    /// Cap on Newton steps, phase one included.
    pub max_iter: usize,
    /// Barrier parameter growth per outer step.
    pub growth: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-8,
            gap_tol: 1e-6,
            max_iter: 200,
            growth: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `max(0, -λ_min)` over all blocks.
    pub primal: f64,
    /// Norm of the Lagrangian gradient for the dual estimate `Z = F^{-1}/t`.
    pub dual: f64,
    /// Duality gap bound of the final central point.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    pub x: Vec<f64>,
    pub objective_value: f64,
    pub status: SolveStatus,
    pub kkt: KktResiduals,
    pub iterations: usize,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

type RMat = DMatrix<f64>;

/// Centering stops once half the squared Newton decrement is below this.
const CENTERING_TOL: f64 = 1e-7;

/// Step budget of the primal-dual method before falling back to the barrier.
const NT_MAX_ITER: usize = 80;
type RVec = DVector<f64>;

/// One real symmetric block `f0 + Σ x_k F_k ⪰ 0` carrying the natural-log
/// weight `omega` of `-omega · ln det` in the minimized objective.
pub(super) struct Block {
    pub f0: RMat,
    pub coeffs: Vec<(usize, RMat)>,
    pub omega: f64,
}

impl Block {
    pub fn size(&self) -> usize {
        self.f0.nrows()
    }

    pub fn eval(&self, x: &[f64]) -> RMat {
        let mut f = self.f0.clone();
        for (k, fk) in &self.coeffs {
            if x[*k] != 0.0 {
                f.zip_apply(fk, |a, b| *a += x[*k] * b);
            }
        }
        f
    }
}

pub(super) struct Lowered {
    pub blocks: Vec<Block>,
    pub cost: Vec<f64>,
    pub nvars: usize,
}

fn lower(problem: &SdpProblem) -> Lowered {
    let sign = match problem.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut blocks: Vec<Block> = problem
        .constraints
        .iter()
        .map(|lmi| {
            let real = lmi.constant.iter().all(|z| z.im == 0.0)
                && lmi.terms.iter().all(|t| t.matrix.iter().all(|z| z.im == 0.0));
            let conv = |m: &crate::linalg::CMat| if real { m.map(|z| z.re) } else { real_embedding(m) };
            Block {
                f0: conv(&lmi.constant),
                coeffs: lmi.terms.iter().map(|t| (t.var, conv(&t.matrix))).collect(),
                omega: 0.0,
            }
        })
        .collect();
    for term in &problem.logdet {
        let b = &mut blocks[term.constraint];
        // The embedding doubles ln det.
        let scale = b.size() as f64 / problem.constraints[term.constraint].size() as f64;
        b.omega += -sign * term.weight / (LN_2 * scale);
    }
    Lowered {
        blocks,
        cost: problem.objective.iter().map(|c| sign * c).collect(),
        nvars: problem.num_vars(),
    }
}

fn ln_det(f: RMat) -> Option<(f64, Cholesky<f64, Dyn>)> {
    let chol = Cholesky::new(f)?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..l.nrows() {
        acc += l[(i, i)].ln();
    }
    Some((2.0 * acc, chol))
}

fn min_eigenvalue(f: &RMat) -> f64 {
    if f.nrows() == 0 {
        return f64::INFINITY;
    }
    f.clone().symmetric_eigenvalues().min()
}

/// Barrier function `t c·x - Σ (1 + t ω_b) ln det F_b(x)`; `None` outside the domain.
fn phi(low: &Lowered, x: &[f64], t: f64) -> Option<f64> {
    let mut v = t * low.cost.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    for b in &low.blocks {
        let (ld, _) = ln_det(b.eval(x))?;
        v -= (1.0 + t * b.omega) * ld;
    }
    Some(v)
}

/// Minimized objective `c·x - Σ ω_b ln det F_b(x)`.
fn objective(low: &Lowered, x: &[f64]) -> Option<f64> {
    let mut v = low.cost.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    for b in low.blocks.iter().filter(|b| b.omega != 0.0) {
        let (ld, _) = ln_det(b.eval(x))?;
        v -= b.omega * ld;
    }
    Some(v)
}

#[derive(Clone)]
struct Derivs {
    grad: RVec,
    hess: RMat,
    /// Gradient of the minimized objective alone.
    grad_obj: RVec,
}

/// Gradient and Hessian of `phi` with block weights `1 + t ω_b`; the cost
/// term is included with factor `t`.
fn derivatives(low: &Lowered, x: &[f64], t: f64, with_cost: bool) -> Option<Derivs> {
    let n = low.nvars;
    let mut grad = RVec::zeros(n);
    if with_cost {
        for (g, c) in grad.iter_mut().zip(&low.cost) {
            *g = t * c;
        }
    }
    let mut hess = RMat::zeros(n, n);
    let mut grad_obj = RVec::from_column_slice(&low.cost);
    for b in &low.blocks {
        let w = 1.0 + t * b.omega;
        let s = b.size();
        let (_, chol) = ln_det(b.eval(x))?;
        let l = chol.l_dirty();
        let mut cols = RMat::zeros(s * s, b.coeffs.len());
        for (p, (k, fk)) in b.coeffs.iter().enumerate() {
            // Y = L^{-1} F_k L^{-T}
            let mut tmp = fk.clone();
            l.solve_lower_triangular_mut(&mut tmp);
            let mut y = tmp.transpose();
            l.solve_lower_triangular_mut(&mut y);
            let tr = y.trace();
            grad[*k] -= w * tr;
            grad_obj[*k] -= b.omega * tr;
            cols.column_mut(p).copy_from_slice(y.as_slice());
        }
        let gram = cols.tr_mul(&cols);
        for (p, (k, _)) in b.coeffs.iter().enumerate() {
            for (q, (m, _)) in b.coeffs.iter().enumerate() {
                hess[(*k, *m)] += w * gram[(p, q)];
            }
        }
    }
    Some(Derivs { grad, hess, grad_obj })
}

fn newton_direction(d: &Derivs) -> RVec {
    -newton_solve(&d.hess, &d.grad)
}

/// Solves `h y = g` for symmetric PSD `h`, adding a growing ridge when `h`
/// is numerically singular.
pub(super) fn newton_solve(h: &RMat, g: &RVec) -> RVec {
    let n = g.len();
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ridge = 0.0;
    loop {
        let mut m = h.clone();
        for i in 0..n {
            m[(i, i)] += ridge;
        }
        if let Some(ch) = Cholesky::new(m) {
            return ch.solve(g);
        }
        ridge = if ridge == 0.0 { 1e-14 * scale } else { ridge * 100.0 };
    }
}

enum Centering {
    Centered,
    Stalled,
    Budget,
}

/// Damped Newton minimization of `phi(·, t)` starting from a strictly feasible `x`.
fn center(low: &Lowered, x: &mut Vec<f64>, t: f64, steps: &mut usize, cap: usize) -> Centering {
    loop {
        if *steps >= cap {
            return Centering::Budget;
        }
        let Some(d) = derivatives(low, x, t, true) else {
            return Centering::Stalled;
        };
        let dx = newton_direction(&d);
        let slope = d.grad.dot(&dx);
        if -slope <= 2.0 * CENTERING_TOL {
            return Centering::Centered;
        }
        let Some(base) = phi(low, x, t) else {
            return Centering::Stalled;
        };
        // Decreases below this are indistinguishable from rounding.
        let noise = 1e-13 * (1.0 + base.abs());
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-12 {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, b)| a + alpha * b).collect();
            if let Some(v) = phi(low, &trial, t) {
                if v <= base + 0.01 * alpha * slope || (alpha == 1.0 && v <= base + noise && -slope < 1e-4) {
                    accepted = Some((trial, v));
                    break;
                }
            }
            alpha *= 0.5;
        }
        *steps += 1;
        match accepted {
            Some((trial, v)) => {
                *x = trial;
                if base - v <= noise {
                    return Centering::Centered;
                }
            }
            None => return Centering::Stalled,
        }
    }
}

/// Moves a central point for `t` along the tangent of the central path
/// towards `next`, backtracking to stay strictly feasible.
fn predict(low: &Lowered, x: &mut Vec<f64>, t: f64, next: f64) {
    let Some(d) = derivatives(low, x, t, true) else {
        return;
    };
    let mut probe = d.clone();
    probe.grad = &d.grad_obj * (next - t);
    let dx = newton_direction(&probe);
    let Some(base) = phi(low, x, next) else {
        return;
    };
    let mut alpha = 1.0;
    while alpha > 1e-3 {
        let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, b)| a + alpha * b).collect();
        if phi(low, &trial, next).is_some_and(|v| v < base) {
            *x = trial;
            return;
        }
        alpha *= 0.5;
    }
}

fn degree(low: &Lowered) -> f64 {
    low.blocks.iter().map(|b| b.size() as f64).sum()
}

fn strictly_feasible(low: &Lowered, x: &[f64]) -> bool {
    low.blocks.iter().all(|b| Cholesky::new(b.eval(x)).is_some())
}

/// Initial barrier weight balancing the objective and barrier gradients.
fn initial_t(low: &Lowered, x: &[f64]) -> f64 {
    let (Some(bar), Some(full)) = (derivatives(low, x, 0.0, false), derivatives(low, x, 1.0, true)) else {
        return 1.0;
    };
    let g_obj = &full.grad - &bar.grad;
    let Some(ch) = Cholesky::new(bar.hess.clone()) else {
        return 1.0;
    };
    let h_obj = ch.solve(&g_obj);
    let num = -h_obj.dot(&bar.grad);
    let den = h_obj.dot(&g_obj);
    if den > 0.0 && num > 0.0 {
        (num / den).clamp(1e-2, 1e4)
    } else {
        1.0
    }
}

/// Finds a strictly feasible point by minimizing `s` with `F_b(x) + s I ⪰ 0`
/// inside a large ball; `None` if the optimal `s` is non-negative.
fn phase_one(low: &Lowered, x0: &[f64], opts: &SdpOptions, steps: &mut usize) -> Option<Vec<f64>> {
    let n = low.nvars;
    let s_var = n;
    let radius2 = 1e6 * (1.0 + x0.iter().map(|v| v * v).sum::<f64>());
    let mut blocks: Vec<Block> = low
        .blocks
        .iter()
        .map(|b| {
            let mut coeffs = b.coeffs.clone();
            coeffs.push((s_var, RMat::identity(b.size(), b.size())));
            Block {
                f0: b.f0.clone(),
                coeffs,
                omega: 0.0,
            }
        })
        .collect();
    // s ≥ -1 keeps the phase-one problem bounded.
    blocks.push(Block {
        f0: RMat::from_element(1, 1, 1.0),
        coeffs: vec![(s_var, RMat::from_element(1, 1, 1.0))],
        omega: 0.0,
    });
    // ‖x‖² ≤ R² as [[R², x^T], [x, I]] ⪰ 0.
    let mut ball0 = RMat::identity(n + 1, n + 1);
    ball0[(0, 0)] = radius2;
    let ball_coeffs = (0..n)
        .map(|k| {
            let mut e = RMat::zeros(n + 1, n + 1);
            e[(0, k + 1)] = 1.0;
            e[(k + 1, 0)] = 1.0;
            (k, e)
        })
        .collect();
    blocks.push(Block {
        f0: ball0,
        coeffs: ball_coeffs,
        omega: 0.0,
    });
    let mut cost = vec![0.0; n + 1];
    cost[s_var] = 1.0;
    let aux = Lowered {
        blocks,
        cost,
        nvars: n + 1,
    };
    let worst = low.blocks.iter().map(|b| min_eigenvalue(&b.eval(x0))).fold(f64::INFINITY, f64::min);
    let mut x = x0.to_vec();
    x.push(if worst.is_finite() { (1.0 - worst).max(1.0) } else { 1.0 });
    let deg = degree(&aux);
    let mut t = 1.0;
    loop {
        let outcome = center(&aux, &mut x, t, steps, opts.max_iter);
        if x[s_var] < 0.0 {
            x.pop();
            return strictly_feasible(low, &x).then_some(x);
        }
        if matches!(outcome, Centering::Budget) || x[s_var] - deg / t > 0.0 || deg / t < opts.feasibility_tol {
            return None;
        }
        t *= opts.growth;
    }
}

/// Solves `problem` from `start` when it is strictly feasible, otherwise
/// after a phase-one search from the origin.
pub(crate) fn solve(problem: &SdpProblem, start: Option<&[f64]>, opts: &SdpOptions) -> Result<SdpSolution> {
    problem.validate()?;
    let side: usize = problem.constraints.iter().map(|c| c.size()).sum();
    if side > MAX_TOTAL_BLOCK_SIDE {
        return Err(Error::InvalidConfig(format!(
            "total block side {side} exceeds the dense solver cap {MAX_TOTAL_BLOCK_SIDE}"
        )));
    }
    if let Some(s) = start {
        if s.len() != problem.num_vars() {
            return Err(Error::DimensionMismatch {
                context: "SDP start",
                expected: problem.num_vars().to_string(),
                actual: s.len().to_string(),
            });
        }
    }
    let low = lower(problem);
    let mut steps = 0usize;
    let supplied = start.filter(|s| strictly_feasible(&low, s)).map(|s| s.to_vec());
    let x = match supplied {
        Some(x) => x,
        None => {
            let origin = vec![0.0; low.nvars];
            let x0 = start.unwrap_or(&origin);
            match phase_one(&low, x0, opts, &mut steps) {
                Some(x) => x,
                None => {
                    let status = if steps >= opts.max_iter {
                        SolveStatus::MaxIterations
                    } else {
                        SolveStatus::Infeasible
                    };
                    return Ok(finish(problem, &low, x0.to_vec(), status, f64::INFINITY, f64::INFINITY, steps));
                }
            }
        }
    };

    if low.blocks.iter().all(|b| b.omega == 0.0) {
        let mut nt_steps = 0;
        let out = super::primal_dual::solve_nt(&low, x.clone(), opts.max_iter.min(NT_MAX_ITER), opts.gap_tol, opts.feasibility_tol, &mut nt_steps);
        steps += nt_steps;
        if out.status == SolveStatus::Optimal {
            return Ok(finish(problem, &low, out.x, out.status, out.dual, out.gap, steps));
        }
        debug!("primal-dual method stalled after {nt_steps} steps; switching to the barrier method");
    }
    let mut barrier_steps = 0;
    let (x, status, dual, gap) = barrier(&low, x, opts, &mut barrier_steps);
    Ok(finish(problem, &low, x, status, dual, gap, steps + barrier_steps))
}

fn barrier(low: &Lowered, mut x: Vec<f64>, opts: &SdpOptions, steps: &mut usize) -> (Vec<f64>, SolveStatus, f64, f64) {
    let deg = degree(low);
    let mut t = initial_t(low, &x);
    let status = loop {
        let outcome = center(low, &mut x, t, steps, opts.max_iter);
        let obj = objective(low, &x).unwrap_or(f64::INFINITY);
        if deg / t <= opts.gap_tol * (1.0 + obj.abs()) {
            break SolveStatus::Optimal;
        }
        if matches!(outcome, Centering::Budget) {
            break SolveStatus::MaxIterations;
        }
        let next = t * opts.growth;
        predict(low, &mut x, t, next);
        t = next;
    };
    let dual = derivatives(low, &x, t, true).map(|d| d.grad.norm() / t).unwrap_or(f64::INFINITY);
    (x, status, dual, deg / t)
}

fn finish(problem: &SdpProblem, low: &Lowered, x: Vec<f64>, status: SolveStatus, dual: f64, gap: f64, steps: usize) -> SdpSolution {
    let primal = low
        .blocks
        .iter()
        .map(|b| (-min_eigenvalue(&b.eval(&x))).max(0.0))
        .fold(0.0, f64::max);
    SdpSolution {
        objective_value: problem.objective_value(&x).unwrap_or(f64::NAN),
        x,
        status,
        kkt: KktResiduals { primal, dual, gap },
        iterations: steps,
    }
}
