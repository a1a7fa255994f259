//! Dense solver for small semidefinite and max-det programs.
//!
//! Variables are real scalars; complex matrix variables are groups of them
//! (see [`SdpProblem::add_matrix`]). Constraints are affine Hermitian maps
//! required to be PSD. A complex block `A + iB` is handled through the real
//! symmetric form `[[A, -B], [B, A]]`, which is PSD exactly when the complex
//! block is and has twice its log-determinant. Purely real blocks stay real.
//!
//! Problems with a linear objective use a primal-dual interior point method
//! with Nesterov-Todd scaling. Problems with log-det terms follow the central
//! path of the log-barrier problem with damped Newton steps, and bound the
//! duality gap by `Σ side_b / t` through the dual estimate `Z_b = F_b^{-1} / t`
//! at each central point. Without a strictly feasible start, a phase-one
//! problem finds one or reports infeasibility.

mod problem;
mod primal_dual;
mod solver;

pub use problem::{LmiConstraint, LmiTerm, LogDetTerm, MatrixKind, MatrixVar, SdpProblem, Sense};
pub use solver::{KktResiduals, SdpOptions, SdpSolution, SolveStatus, MAX_TOTAL_BLOCK_SIDE};

use crate::error::{Error, Result};

/// Linear objective only.
pub fn solve_sdp(problem: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution> {
    if !problem.logdet.is_empty() {
        return Err(Error::InvalidConfig("problem has log-det terms; use solve_maxdet".into()));
    }
    solver::solve(problem, None, opts)
}

/// Linear objective plus `Σ w_l log2 det(block_l)`.
pub fn solve_maxdet(problem: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution> {
    solver::solve(problem, None, opts)
}

/// Either problem class, started from `start` when it is strictly feasible.
pub fn solve_from(problem: &SdpProblem, start: &[f64], opts: &SdpOptions) -> Result<SdpSolution> {
    solver::solve(problem, Some(start), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, eye, CMat};

    fn real(rows: &[&[f64]]) -> CMat {
        CMat::from_fn(rows.len(), rows[0].len(), |i, j| c(rows[i][j], 0.0))
    }

    #[test]
    fn two_by_two_psd_condition() {
        let mut p = SdpProblem::new(Sense::Minimize);
        let x = p.add_scalar("x");
        p.set_cost(x, 1.0);
        p.add_constraint(LmiConstraint::from_affine_fn("m", 1, &[x], |v| real(&[&[v[0], 1.0], &[1.0, v[0]]])).unwrap());
        let sol = solve_sdp(&p, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-5, "{}", sol.x[0]);
    }

    #[test]
    fn diagonal_lp() {
        let mut p = SdpProblem::new(Sense::Minimize);
        let x = p.add_scalar("x");
        let y = p.add_scalar("y");
        p.set_cost(x, 1.0);
        p.set_cost(y, 2.0);
        // x ≥ 1, y ≥ 0, x + y ≥ 3 → (3, 0) with cost 3
        p.add_constraint(
            LmiConstraint::from_affine_fn("d", 2, &[x, y], |v| {
                CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(v[0] - 1.0, 0.0), c(v[1], 0.0), c(v[0] + v[1] - 3.0, 0.0)]))
            })
            .unwrap(),
        );
        let sol = solve_sdp(&p, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective_value - 3.0).abs() < 1e-5);
    }

    #[test]
    fn infeasible_is_flagged() {
        let mut p = SdpProblem::new(Sense::Minimize);
        let x = p.add_scalar("x");
        p.add_constraint(
            LmiConstraint::from_affine_fn("d", 1, &[x], |v| {
                CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(v[0] - 1.0, 0.0), c(-v[0], 0.0)]))
            })
            .unwrap(),
        );
        let sol = solve_sdp(&p, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn maxdet_identity_bound() {
        let mut p = SdpProblem::new(Sense::Maximize);
        let g = p.add_matrix("G", 2, 2, MatrixKind::Hermitian);
        let n = p.num_vars();
        let gv = g.clone();
        let pd = p.add_constraint(LmiConstraint::from_affine_fn("G", n, &g.indices, |v| gv.value(v)).unwrap());
        let gv = g.clone();
        p.add_constraint(LmiConstraint::from_affine_fn("I-G", n, &g.indices, |v| eye(2) - gv.value(v)).unwrap());
        p.add_logdet(pd, 1.0);
        let sol = solve_maxdet(&p, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((g.value(&sol.x) - eye(2)).norm() < 1e-5);
        assert!(sol.objective_value.abs() < 1e-5);
    }

    #[test]
    fn scalar_log_minus_linear() {
        let mut p = SdpProblem::new(Sense::Maximize);
        let g = p.add_scalar("g");
        p.set_cost(g, -1.0);
        let b = p.add_constraint(LmiConstraint::from_affine_fn("g", 1, &[g], |v| real(&[&[v[0]]])).unwrap());
        p.add_logdet(b, 1.0);
        let sol = solve_maxdet(&p, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.0 / std::f64::consts::LN_2).abs() < 1e-5);
    }

    #[test]
    fn supplied_start_is_used() {
        let mut p = SdpProblem::new(Sense::Minimize);
        let x = p.add_scalar("x");
        p.set_cost(x, 1.0);
        p.add_constraint(LmiConstraint::from_affine_fn("m", 1, &[x], |v| real(&[&[v[0], 1.0], &[1.0, v[0]]])).unwrap());
        let sol = solve_from(&p, &[5.0], &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn maxdet_rejected_by_linear_entry_point() {
        let mut p = SdpProblem::new(Sense::Maximize);
        let g = p.add_scalar("g");
        let b = p.add_constraint(LmiConstraint::from_affine_fn("g", 1, &[g], |v| real(&[&[v[0]]])).unwrap());
        p.add_logdet(b, 1.0);
        assert!(solve_sdp(&p, &SdpOptions::default()).is_err());
    }

    #[test]
    fn wrong_logdet_sign_rejected() {
        let mut p = SdpProblem::new(Sense::Minimize);
        let g = p.add_scalar("g");
        let b = p.add_constraint(LmiConstraint::from_affine_fn("g", 1, &[g], |v| real(&[&[v[0]]])).unwrap());
        p.add_logdet(b, 1.0);
        assert!(solve_maxdet(&p, &SdpOptions::default()).is_err());
    }

    #[test]
    fn non_hermitian_coefficient_rejected() {
        let m = real(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(LmiConstraint::new("bad", m, vec![]).is_err());
    }

    #[test]
    fn hermitian_variable_round_trip() {
        let mut p = SdpProblem::new(Sense::Minimize);
        let g = p.add_matrix("G", 3, 3, MatrixKind::Hermitian);
        assert_eq!(g.indices.len(), 9);
        let h = CMat::from_fn(3, 3, |i, j| if i == j { c(i as f64 + 1.0, 0.0) } else if i < j { c(0.5, 0.25) } else { c(0.5, -0.25) });
        let mut x = vec![0.0; p.num_vars()];
        g.assign(&h, &mut x);
        assert_eq!(g.value(&x), h);
    }

    #[test]
    fn json_round_trip() {
        let mut p = SdpProblem::new(Sense::Minimize);
        let x = p.add_scalar("x");
        p.set_cost(x, 1.0);
        p.add_constraint(
            LmiConstraint::from_affine_fn("m", 1, &[x], |v| CMat::from_fn(2, 2, |i, j| match (i, j) {
                (0, 1) => c(0.0, 1.0),
                (1, 0) => c(0.0, -1.0),
                _ => c(v[0], 0.0),
            }))
            .unwrap(),
        );
        let text = serde_json::to_string(&p).unwrap();
        let back: SdpProblem = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
        let sol = solve_sdp(&back, &SdpOptions::default()).unwrap();
        let text = serde_json::to_string(&sol).unwrap();
        let again: SdpSolution = serde_json::from_str(&text).unwrap();
        assert_eq!(again, sol);
        assert!((sol.x[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn deterministic() {
        let mut p = SdpProblem::new(Sense::Maximize);
        let g = p.add_matrix("G", 2, 2, MatrixKind::Hermitian);
        let n = p.num_vars();
        let gv = g.clone();
        let s = real(&[&[2.0, 0.5], &[0.5, 1.0]]);
        let pd = p.add_constraint(LmiConstraint::from_affine_fn("G", n, &g.indices, |v| gv.value(v)).unwrap());
        p.add_logdet(pd, 1.0);
        for &idx in &g.indices {
            let mut x = vec![0.0; n];
            x[idx] = 1.0;
            p.set_cost(idx, -crate::linalg::trace_re(&(&s * g.value(&x))));
        }
        let a = solve_maxdet(&p, &SdpOptions::default()).unwrap();
        let b = solve_maxdet(&p, &SdpOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn weight_update_matches_inverse_mse() {
        // max log2 det G - tr(S G) has G* = (S ln 2)^{-1}.
        let s = CMat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => c(2.0, 0.0),
            (1, 1) => c(1.0, 0.0),
            (0, 1) => c(0.3, 0.4),
            _ => c(0.3, -0.4),
        });
        let mut p = SdpProblem::new(Sense::Maximize);
        let g = p.add_matrix("G", 2, 2, MatrixKind::Hermitian);
        let n = p.num_vars();
        let gv = g.clone();
        let pd = p.add_constraint(LmiConstraint::from_affine_fn("G", n, &g.indices, |v| gv.value(v)).unwrap());
        p.add_logdet(pd, 1.0);
        for &idx in &g.indices {
            let mut x = vec![0.0; n];
            x[idx] = 1.0;
            p.set_cost(idx, -crate::linalg::trace_re(&(&s * g.value(&x))));
        }
        let sol = solve_maxdet(&p, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let expected = crate::linalg::inv_hpd(&(&s * c(std::f64::consts::LN_2, 0.0))).unwrap();
        assert!((g.value(&sol.x) - expected).norm() < 1e-5);
    }

    #[test]
    fn random_three_by_three_against_grid() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            // min c·x s.t. A0 + x1 A1 + x2 A2 ⪰ 0, with A0 ≻ 0 and a bounding box.
            let mut sym3 = |scale: f64| {
                let a = nalgebra::DMatrix::<f64>::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
                (&a + a.transpose()) * scale
            };
            let a0 = nalgebra::DMatrix::<f64>::identity(3, 3) * 2.0 + sym3(0.2);
            let a1 = sym3(0.5);
            let a2 = sym3(0.5);
            let cost = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let eval = |x: f64, y: f64| &a0 + &a1 * x + &a2 * y;
            let in_box = |x: f64, y: f64| x.abs() <= 3.0 && y.abs() <= 3.0;

            let mut p = SdpProblem::new(Sense::Minimize);
            let x = p.add_scalar("x");
            let y = p.add_scalar("y");
            p.set_cost(x, cost[0]);
            p.set_cost(y, cost[1]);
            let m = eval(0.0, 0.0);
            p.add_constraint(
                LmiConstraint::from_affine_fn("lmi", 2, &[x, y], |v| eval(v[0], v[1]).map(|e| c(e, 0.0))).unwrap(),
            );
            p.add_constraint(
                LmiConstraint::from_affine_fn("box", 2, &[x, y], |v| {
                    CMat::from_diagonal(&nalgebra::DVector::from_vec(
                        [3.0 - v[0], 3.0 + v[0], 3.0 - v[1], 3.0 + v[1]].iter().map(|&e| c(e, 0.0)).collect(),
                    ))
                })
                .unwrap(),
            );
            assert!(m.symmetric_eigenvalues().min() > 0.0);
            let sol = solve_sdp(&p, &SdpOptions::default()).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal);

            let mut best = f64::INFINITY;
            let steps = 200;
            for a in 0..=steps {
                for b in 0..=steps {
                    let (gx, gy) = (-3.0 + 6.0 * a as f64 / steps as f64, -3.0 + 6.0 * b as f64 / steps as f64);
                    if in_box(gx, gy) && eval(gx, gy).symmetric_eigenvalues().min() >= 0.0 {
                        best = best.min(cost[0] * gx + cost[1] * gy);
                    }
                }
            }
            // Grid spacing bounds how far the grid optimum can sit above the true one.
            let slack = (cost[0].abs() + cost[1].abs()) * 6.0 / steps as f64;
            assert!(sol.objective_value <= best + 1e-6, "{} vs {}", sol.objective_value, best);
            assert!(sol.objective_value >= best - slack - 1e-6, "{} vs {}", sol.objective_value, best);
        }
    }
}
