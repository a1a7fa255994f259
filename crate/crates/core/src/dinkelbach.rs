//! Dinkelbach iteration for maximizing a ratio `N(x) / D(x)` with `D > 0`.
//!
//! Each step solves the subtractive problem `max_x N(x) - η D(x)` for the
//! current `η`, then moves `η` to the ratio achieved by that solution. The
//! loop stops once the subtractive optimum `F(η) = N(x) - η D(x)` drops to the
//! tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What the inner solver returns for a given `η`.
#[derive(Debug, Clone)]
pub struct InnerSolution<S> {
    pub solution: S,
    pub numerator: f64,
    pub denominator: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DinkelbachOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DinkelbachOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 50 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FractionalTrace {
    /// `η_0, η_1, ...`; the last entry is the ratio of the returned solution.
    pub etas: Vec<f64>,
    /// `F(η_t) = N(x_t) - η_t D(x_t)` per iteration.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FractionalTrace {
    pub fn final_eta(&self) -> f64 {
        self.etas.last().copied().unwrap_or(f64::NAN)
    }

    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(f64::NAN)
    }
}

pub fn solve_fractional<S, F>(mut inner: F, eta0: f64, opts: DinkelbachOptions) -> Result<(S, FractionalTrace)>
where
    F: FnMut(f64) -> Result<InnerSolution<S>>,
{
    let mut trace = FractionalTrace::default();
    let mut eta = eta0;
    let mut best: Option<(S, f64)> = None;
    for _ in 0..opts.max_iter.max(1) {
        trace.etas.push(eta);
        let InnerSolution {
            solution,
            numerator,
            denominator,
        } = inner(eta)?;
        if !(denominator > 0.0) {
            return Err(Error::NonPositiveDenominator(denominator));
        }
        let residual = numerator - eta * denominator;
        let ratio = numerator / denominator;
        trace.residuals.push(residual);
        trace.iterations += 1;
        if best.as_ref().is_none_or(|(_, r)| ratio >= *r) {
            best = Some((solution, ratio));
        }
        if residual <= opts.tol {
            trace.converged = true;
            break;
        }
        eta = ratio;
    }
    let (solution, ratio) = best.expect("at least one iteration runs");
    trace.etas.push(ratio);
    Ok((solution, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_inner(eta: f64) -> Result<InnerSolution<f64>> {
        // max over p in [0, 1] of log2(1 + p) - eta (p + 1) on a 1e-4 grid.
        let mut best = (0.0, f64::NEG_INFINITY);
        for i in 0..=10_000 {
            let p = i as f64 * 1e-4;
            let val = (1.0 + p).log2() - eta * (p + 1.0);
            if val > best.1 {
                best = (p, val);
            }
        }
        let p = best.0;
        Ok(InnerSolution {
            solution: p,
            numerator: (1.0 + p).log2(),
            denominator: p + 1.0,
        })
    }

    #[test]
    fn constant_ratio_converges_immediately() {
        let (_, trace) = solve_fractional(
            |_| {
                Ok(InnerSolution {
                    solution: (),
                    numerator: 3.0,
                    denominator: 2.0,
                })
            },
            1.5,
            DinkelbachOptions::default(),
        )
        .unwrap();
        assert_eq!(trace.iterations, 1);
        assert_eq!(trace.final_eta(), 1.5);
    }

    #[test]
    fn scalar_problem_matches_direct_grid() {
        let (p, trace) = solve_fractional(grid_inner, 0.0, DinkelbachOptions::default()).unwrap();
        let direct = (0..=10_000)
            .map(|i| {
                let p = i as f64 * 1e-4;
                (1.0 + p).log2() / (p + 1.0)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((trace.final_eta() - direct).abs() < 1e-3);
        assert!((0.0..=1.0).contains(&p));
        assert!(trace.converged);
        assert!(trace.etas.iter().all(|e| *e >= 0.0));
        assert!(trace.etas.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn non_positive_denominator_is_reported() {
        let err = solve_fractional(
            |_| {
                Ok(InnerSolution {
                    solution: (),
                    numerator: 1.0,
                    denominator: 0.0,
                })
            },
            0.0,
            DinkelbachOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonPositiveDenominator(_)));
    }

    #[test]
    fn inner_failure_propagates() {
        let res: Result<((), FractionalTrace)> =
            solve_fractional(|_| Err(Error::Numerical("boom".into())), 0.0, DinkelbachOptions::default());
        assert!(matches!(res, Err(Error::Numerical(_))));
    }

    #[test]
    fn residual_is_decreasing_in_eta() {
        let f = |eta: f64| {
            let s = grid_inner(eta).unwrap();
            s.numerator - eta * s.denominator
        };
        let vals: Vec<f64> = (0..20).map(|i| f(i as f64 * 0.05)).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }
}
