//! Primal-dual path following with Nesterov-Todd scaling for problems with
//! a purely linear objective.
//!
//! The LMI problem `min c·x, S = F0 + Σ x_k F_k ⪰ 0` is paired with
//! `max -⟨F0, Z⟩, ⟨F_k, Z⟩ = c_k, Z ⪰ 0`. Iterates keep `S = F(x)` exact and
//! strictly feasible while the dual residual `c - F^T(Z)` is driven to zero.
//! Each iteration solves the Schur system `M Δx = F^T(R) - r_d` with
//! `M_kl = ⟨F_k, W F_l W⟩` and the scaling `W S W = Z`, once with `σ = 0`
//! and once with Mehrotra's centering choice `σ = (μ_aff / μ)³`.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::solver::{newton_solve, Lowered};
use super::SolveStatus;

type RMat = DMatrix<f64>;
type RVec = DVector<f64>;

pub(super) struct PdOutcome {
    pub x: Vec<f64>,
    pub status: SolveStatus,
    pub gap: f64,
    pub dual: f64,
}

/// Fraction of the distance to the boundary taken per step.
const STEP_FRACTION: f64 = 0.95;

fn sym(m: &RMat) -> RMat {
    (m + m.transpose()) * 0.5
}

fn inner(a: &RMat, b: &RMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Symmetric function of a symmetric PD matrix through its eigenvalues.
fn spectral(m: &RMat, f: impl Fn(f64) -> f64) -> RMat {
    let eig = sym(m).symmetric_eigen();
    let q = &eig.eigenvectors;
    let d = RVec::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&w| f(w.max(0.0))));
    q * RMat::from_diagonal(&d) * q.transpose()
}

/// Largest `α` with `P + α D ⪰ 0`, given the Cholesky factor of `P ≻ 0`.
fn max_step(chol: &Cholesky<f64, nalgebra::Dyn>, d: &RMat) -> f64 {
    let l = chol.l_dirty();
    let mut t = d.clone();
    l.solve_lower_triangular_mut(&mut t);
    let mut y = t.transpose();
    l.solve_lower_triangular_mut(&mut y);
    let lo = sym(&y).symmetric_eigenvalues().min();
    if lo >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lo
    }
}

struct BlockState {
    s: RMat,
    z: RMat,
    w: RMat,
    s_inv: RMat,
    s_chol: Cholesky<f64, nalgebra::Dyn>,
    z_chol: Cholesky<f64, nalgebra::Dyn>,
}

fn dual_residual(low: &Lowered, z: &[RMat]) -> RVec {
    let mut r = RVec::from_column_slice(&low.cost);
    for (b, zb) in low.blocks.iter().zip(z) {
        for (k, fk) in &b.coeffs {
            r[*k] -= inner(fk, zb);
        }
    }
    r
}

pub(super) fn solve_nt(low: &Lowered, mut x: Vec<f64>, max_iter: usize, gap_tol: f64, feas_tol: f64, steps: &mut usize) -> PdOutcome {
    let n_total: f64 = low.blocks.iter().map(|b| b.size() as f64).sum();
    let cost_norm = low.cost.iter().map(|c| c * c).sum::<f64>().sqrt();
    let mut s: Vec<RMat> = low.blocks.iter().map(|b| b.eval(&x)).collect();

    // Z = μ0 S^{-1} with μ0 fitting the dual equality in least squares.
    let s_inv: Vec<RMat> = s
        .iter()
        .map(|sb| Cholesky::new(sb.clone()).map(|c| c.inverse()).unwrap_or_else(|| RMat::identity(sb.nrows(), sb.nrows())))
        .collect();
    let mut g = RVec::zeros(low.nvars);
    for (b, si) in low.blocks.iter().zip(&s_inv) {
        for (k, fk) in &b.coeffs {
            g[*k] += inner(fk, si);
        }
    }
    let cg: f64 = low.cost.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
    let gg = g.norm_squared();
    let mu0 = if gg > 0.0 { (cost_norm / gg.sqrt()).max(cg / gg).clamp(1e-8, 1e4) } else { 1.0 };
    let mut z: Vec<RMat> = s_inv.iter().map(|si| si * mu0).collect();

    loop {
        let r_d = dual_residual(low, &z);
        let gap: f64 = s.iter().zip(&z).map(|(a, b)| inner(a, b)).sum();
        let obj: f64 = low.cost.iter().zip(&x).map(|(a, b)| a * b).sum();
        let dual = r_d.norm();
        if gap <= gap_tol * (1.0 + obj.abs()) && dual <= feas_tol * (1.0 + cost_norm) {
            return PdOutcome {
                x,
                status: SolveStatus::Optimal,
                gap,
                dual,
            };
        }
        if *steps >= max_iter {
            return PdOutcome {
                x,
                status: SolveStatus::MaxIterations,
                gap,
                dual,
            };
        }
        let mu = gap / n_total;

        let mut states = Vec::with_capacity(low.blocks.len());
        for (sb, zb) in s.iter().zip(&z) {
            let (Some(s_chol), Some(z_chol)) = (Cholesky::new(sb.clone()), Cholesky::new(zb.clone())) else {
                return PdOutcome {
                    x,
                    status: SolveStatus::MaxIterations,
                    gap,
                    dual,
                };
            };
            let root = spectral(sb, f64::sqrt);
            let root_inv = spectral(sb, |v| 1.0 / v.sqrt());
            let mid = spectral(&(&root * zb * &root), f64::sqrt);
            let w = sym(&(&root_inv * mid * &root_inv));
            states.push(BlockState {
                s: sb.clone(),
                z: zb.clone(),
                w,
                s_inv: s_chol.inverse(),
                s_chol,
                z_chol,
            });
        }

        // Schur complement.
        let mut m = RMat::zeros(low.nvars, low.nvars);
        for (b, st) in low.blocks.iter().zip(&states) {
            let size = b.size();
            let mut left = RMat::zeros(size * size, b.coeffs.len());
            let mut right = RMat::zeros(size * size, b.coeffs.len());
            for (p, (_, fk)) in b.coeffs.iter().enumerate() {
                let wf = &st.w * fk;
                right.column_mut(p).copy_from_slice(wf.as_slice());
                left.column_mut(p).copy_from_slice(wf.transpose().as_slice());
            }
            let gram = left.tr_mul(&right);
            for (p, (k, _)) in b.coeffs.iter().enumerate() {
                for (q, (l, _)) in b.coeffs.iter().enumerate() {
                    m[(*k, *l)] += 0.5 * (gram[(p, q)] + gram[(q, p)]);
                }
            }
        }

        let direction = |rc: &[RMat]| -> (RVec, Vec<RMat>, Vec<RMat>) {
            let mut rhs = -&r_d;
            for (b, r) in low.blocks.iter().zip(rc) {
                for (k, fk) in &b.coeffs {
                    rhs[*k] += inner(fk, r);
                }
            }
            let dx = newton_solve(&m, &rhs);
            let ds: Vec<RMat> = low
                .blocks
                .iter()
                .map(|b| {
                    let mut d = RMat::zeros(b.size(), b.size());
                    for (k, fk) in &b.coeffs {
                        d += fk * dx[*k];
                    }
                    d
                })
                .collect();
            let dz: Vec<RMat> = states
                .iter()
                .zip(rc)
                .zip(&ds)
                .map(|((st, r), d)| sym(&(r - &st.w * d * &st.w)))
                .collect();
            (dx, ds, dz)
        };
        let lengths = |ds: &[RMat], dz: &[RMat]| -> (f64, f64) {
            let ap = states.iter().zip(ds).map(|(st, d)| max_step(&st.s_chol, d)).fold(f64::INFINITY, f64::min);
            let ad = states.iter().zip(dz).map(|(st, d)| max_step(&st.z_chol, d)).fold(f64::INFINITY, f64::min);
            ((STEP_FRACTION * ap).min(1.0), (STEP_FRACTION * ad).min(1.0))
        };

        let affine_rc: Vec<RMat> = states.iter().map(|st| -&st.z).collect();
        let (_, ds_a, dz_a) = direction(&affine_rc);
        let (ap, ad) = lengths(&ds_a, &dz_a);
        let gap_aff: f64 = states
            .iter()
            .zip(ds_a.iter().zip(&dz_a))
            .map(|(st, (d_s, d_z))| inner(&(&st.s + d_s * ap), &(&st.z + d_z * ad)))
            .sum();
        let sigma = (gap_aff / gap).clamp(0.0, 1.0).powi(3);

        let rc: Vec<RMat> = states.iter().map(|st| &st.s_inv * (sigma * mu) - &st.z).collect();
        let (dx, ds, dz) = direction(&rc);
        let (ap, ad) = lengths(&ds, &dz);
        *steps += 1;
        let mut alpha = ap;
        loop {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, b)| a + alpha * b).collect();
            let ts: Vec<RMat> = low.blocks.iter().map(|b| b.eval(&trial)).collect();
            if ts.iter().all(|t| Cholesky::new(t.clone()).is_some()) {
                x = trial;
                s = ts;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                break;
            }
        }
        for (zb, d) in z.iter_mut().zip(&dz) {
            *zb += d * ad;
        }
    }
}
