//! The three convex block updates of the alternating loop.
//!
//! Each update splits into independent conic problems: one per transmitter
//! for `V`, one per receiver for `U` and `G`. In every problem the pair
//! `(i, j)` contributes the S-procedure block of [`super::build_robust_lmi`]
//! with the uncertainty coordinates restricted to the row space that the
//! free variable can reach; this congruence leaves the feasible set intact
//! and keeps the blocks small. A candidate replaces the current value only
//! if the exact worst-case objective does not get worse.

use std::time::Instant;

use log::warn;

use super::{log2_det_weight, pair_terms, s_procedure_block, worst_case_bound, RobustAuxiliaries, SdpStats, Uncertainty, WeightSet};
use crate::channel::{ChannelSet, NormBounded, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{c, frob2, orthonormal_range, CMat, CVec};
use crate::metrics::{DecoderSet, PrecoderSet};
use crate::sdp::{solve_from, LmiConstraint, MatrixKind, SdpOptions, SdpProblem, Sense, SolveStatus};

/// One uncertain MSE term as a function of the free block.
struct PairSpec<'a> {
    weight: f64,
    eps: f64,
    /// `(e, E B̃)` at a given value of the free block.
    terms: Box<dyn Fn(&CMat) -> (CVec, CMat) + 'a>,
}

enum Extra {
    None,
    /// `‖Θ‖² ≤ p_max` and cost `price ‖Θ‖²`.
    Power { p_max: f64, price: f64 },
    /// Reward `weight · log2 det Θ` for Hermitian `Θ`.
    LogDet { weight: f64 },
}

/// Minimizes `Σ_p w_p λ_p` (plus the extra term) over the free block and
/// returns the solver's value for it.
fn robust_step(
    kind: MatrixKind,
    start: &CMat,
    pairs: &[PairSpec],
    extra: Extra,
    opts: &SdpOptions,
    stats: &mut SdpStats,
) -> Result<Option<CMat>> {
    let clock = Instant::now();
    let (rows, cols) = start.shape();
    let mut prob = SdpProblem::new(Sense::Minimize);
    let theta = prob.add_matrix("theta", rows, cols, kind);
    let ntheta = theta.indices.len();

    // Reachable uncertainty subspace of every pair.
    let mut layout = Vec::with_capacity(pairs.len());
    let mut local = vec![0.0; ntheta];
    for (p, pair) in pairs.iter().enumerate() {
        let (_, f0) = (pair.terms)(&theta.value(&local));
        let basis = if pair.eps > 0.0 {
            let mut spans = vec![f0.adjoint()];
            for k in 0..ntheta {
                local[k] = 1.0;
                let (_, fk) = (pair.terms)(&theta.value(&local));
                local[k] = 0.0;
                spans.push((fk - &f0).adjoint());
            }
            let columns: Vec<_> = spans.iter().flat_map(|m| m.column_iter()).collect();
            orthonormal_range(&CMat::from_columns(&columns), 1e-12)
        } else {
            CMat::zeros(f0.ncols(), 0)
        };
        let lam = prob.add_scalar(format!("lambda{p}"));
        prob.set_cost(lam, pair.weight);
        let mu = (basis.ncols() > 0).then(|| prob.add_scalar(format!("mu{p}")));
        layout.push((lam, mu, basis));
    }
    let epigraph = match extra {
        Extra::Power { price, .. } if price > 0.0 => {
            let t = prob.add_scalar("power");
            prob.set_cost(t, price);
            Some(t)
        }
        _ => None,
    };
    let nvars = prob.num_vars();

    for (pair, (lam, mu, basis)) in pairs.iter().zip(&layout) {
        let mut vars = theta.indices.clone();
        vars.push(*lam);
        vars.extend(mu.iter());
        let lmi = LmiConstraint::from_affine_fn("robust", nvars, &vars, |x| {
            let (e, f) = (pair.terms)(&theta.value(x));
            let m = mu.map_or(0.0, |k| x[k]);
            s_procedure_block(&e, &(f * basis), pair.eps, x[*lam], m)
        })?;
        prob.add_constraint(lmi);
    }
    match extra {
        Extra::Power { p_max, .. } => {
            let norm_block = |bound: f64, x: &[f64]| super::build_power_lmi(&theta.value(x), bound);
            prob.add_constraint(LmiConstraint::from_affine_fn("power", nvars, &theta.indices, |x| norm_block(p_max, x))?);
            if let Some(t) = epigraph {
                let mut vars = theta.indices.clone();
                vars.push(t);
                prob.add_constraint(LmiConstraint::from_affine_fn("epigraph", nvars, &vars, |x| norm_block(x[t], x))?);
            }
        }
        Extra::LogDet { weight } => {
            let block = prob.add_constraint(LmiConstraint::from_affine_fn("weight", nvars, &theta.indices, |x| theta.value(x))?);
            prob.add_logdet(block, -weight);
        }
        Extra::None => {}
    }

    // Strictly feasible start around the current block.
    let mut x0 = vec![0.0; nvars];
    let mut start = start.clone();
    if let Extra::Power { p_max, .. } = extra {
        let norm2 = frob2(&start);
        if norm2 > 0.999 * p_max {
            start *= c((0.999 * p_max / norm2).sqrt(), 0.0);
        }
    }
    theta.assign(&start, &mut x0);
    for (pair, (lam, mu, basis)) in pairs.iter().zip(&layout) {
        let (e, f) = (pair.terms)(&start);
        let f = f * basis;
        let wc = worst_case_bound(&e, &f, pair.eps);
        let mu0 = wc.mu + (wc.mu - wc.mu_floor).max(1e-3 * (1.0 + wc.mu));
        let lambda0 = if let Some(k) = mu {
            x0[*k] = mu0;
            lambda_at(&e, &f, pair.eps, mu0)
        } else {
            wc.lambda
        };
        x0[*lam] = lambda0 + 0.01 * (1.0 + lambda0);
    }
    if let Some(t) = epigraph {
        let norm2 = frob2(&start);
        x0[t] = norm2 + 0.01 * (1.0 + norm2);
    }

    let sol = solve_from(&prob, &x0, opts)?;
    stats.solves += 1;
    stats.newton_steps += sol.iterations;
    stats.elapsed += clock.elapsed();
    match sol.status {
        SolveStatus::Optimal => Ok(Some(theta.value(&sol.x))),
        SolveStatus::MaxIterations => {
            stats.not_optimal += 1;
            warn!("robust block update hit the iteration cap; using its best iterate");
            Ok(Some(theta.value(&sol.x)))
        }
        SolveStatus::Infeasible => Err(Error::Solver {
            context: "solving a robust block update".into(),
            status: sol.status,
        }),
    }
}

/// Smallest `λ` feasible in the S-procedure block for a fixed `μ`.
fn lambda_at(e: &CVec, f: &CMat, eps: f64, mu: f64) -> f64 {
    let l = e.len();
    let gram = f * f.adjoint() * c(eps * eps / mu, 0.0);
    let reduced = CMat::identity(l, l) - gram;
    match reduced.cholesky() {
        Some(ch) => mu + ch.solve(e).dotc(e).re,
        None => f64::INFINITY,
    }
}

fn v_pairs<'a>(estimates: &'a ChannelSet, u: &'a DecoderSet, g: &'a WeightSet, cfg: &'a SystemConfig, unc: &'a Uncertainty, j: usize) -> Vec<PairSpec<'a>> {
    (0..cfg.k)
        .filter(|&i| cfg.alpha[i] > 0.0)
        .map(|i| PairSpec {
            weight: cfg.alpha[i],
            eps: unc.eps[i][j],
            terms: Box::new(move |v: &CMat| {
                let (e, big) = pair_terms(estimates.get(i, j), v, &u.u[i], &g.g[i], unc.sigma, i == j);
                (e, big * &unc.btilde[i][j])
            }),
        })
        .collect()
}

fn receiver_pairs<'a>(
    estimates: &'a ChannelSet,
    v: &'a PrecoderSet,
    fixed: Receiver<'a>,
    cfg: &'a SystemConfig,
    unc: &'a Uncertainty,
    i: usize,
) -> Vec<PairSpec<'a>> {
    (0..cfg.k)
        .map(|j| PairSpec {
            weight: cfg.alpha[i],
            eps: unc.eps[i][j],
            terms: Box::new(move |x: &CMat| {
                let (u_i, g_i) = match fixed {
                    Receiver::Weight(g) => (x, g),
                    Receiver::Decoder(u) => (u, x),
                };
                let (e, big) = pair_terms(estimates.get(i, j), &v.v[j], u_i, g_i, unc.sigma, i == j);
                (e, big * &unc.btilde[i][j])
            }),
        })
        .collect()
}

#[derive(Clone, Copy)]
enum Receiver<'a> {
    /// The weight factor is fixed, the decoder is free.
    Weight(&'a CMat),
    /// The decoder is fixed, the weight factor is free.
    Decoder(&'a CMat),
}

/// `Σ_i α_i λ*_ij + ηρ ‖V_j‖²`, the part of the objective that `V_j` controls.
fn transmitter_cost(estimates: &ChannelSet, v_j: &CMat, u: &DecoderSet, g: &WeightSet, cfg: &SystemConfig, unc: &Uncertainty, eta: f64, j: usize) -> f64 {
    let slack: f64 = (0..cfg.k)
        .filter(|&i| cfg.alpha[i] > 0.0)
        .map(|i| cfg.alpha[i] * unc.pair_bound(estimates, v_j, &u.u[i], &g.g[i], i, j).lambda)
        .sum();
    slack + eta * cfg.rho * frob2(v_j)
}

fn receiver_slack(estimates: &ChannelSet, v: &PrecoderSet, u_i: &CMat, g_i: &CMat, cfg: &SystemConfig, unc: &Uncertainty, i: usize) -> f64 {
    (0..cfg.k).map(|j| unc.pair_bound(estimates, &v.v[j], u_i, g_i, i, j).lambda).sum()
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn v_step(
    estimates: &ChannelSet,
    v: &PrecoderSet,
    u: &DecoderSet,
    g: &WeightSet,
    cfg: &SystemConfig,
    unc: &Uncertainty,
    eta: f64,
    opts: &SdpOptions,
    stats: &mut SdpStats,
) -> Result<PrecoderSet> {
    let mut next = v.clone();
    for j in 0..cfg.k {
        let pairs = v_pairs(estimates, u, g, cfg, unc, j);
        let extra = Extra::Power {
            p_max: cfg.p_max,
            price: eta * cfg.rho,
        };
        let Some(candidate) = robust_step(MatrixKind::Complex, &v.v[j], &pairs, extra, opts, stats)? else {
            continue;
        };
        let old = transmitter_cost(estimates, &v.v[j], u, g, cfg, unc, eta, j);
        let new = transmitter_cost(estimates, &candidate, u, g, cfg, unc, eta, j);
        if new <= old && frob2(&candidate) <= cfg.p_max {
            next.v[j] = candidate;
        }
    }
    Ok(next)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn u_step(
    estimates: &ChannelSet,
    v: &PrecoderSet,
    u: &DecoderSet,
    g: &WeightSet,
    cfg: &SystemConfig,
    unc: &Uncertainty,
    opts: &SdpOptions,
    stats: &mut SdpStats,
) -> Result<DecoderSet> {
    let mut next = u.clone();
    for i in (0..cfg.k).filter(|&i| cfg.alpha[i] > 0.0) {
        let pairs = receiver_pairs(estimates, v, Receiver::Weight(&g.g[i]), cfg, unc, i);
        let Some(candidate) = robust_step(MatrixKind::Complex, &u.u[i], &pairs, Extra::None, opts, stats)? else {
            continue;
        };
        let old = receiver_slack(estimates, v, &u.u[i], &g.g[i], cfg, unc, i);
        let new = receiver_slack(estimates, v, &candidate, &g.g[i], cfg, unc, i);
        if new <= old {
            next.u[i] = candidate;
        }
    }
    Ok(next)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn g_step(
    estimates: &ChannelSet,
    v: &PrecoderSet,
    u: &DecoderSet,
    g: &WeightSet,
    cfg: &SystemConfig,
    unc: &Uncertainty,
    opts: &SdpOptions,
    stats: &mut SdpStats,
) -> Result<WeightSet> {
    let mut next = g.clone();
    for i in (0..cfg.k).filter(|&i| cfg.alpha[i] > 0.0) {
        // Only G G^H matters; the Hermitian square root is an equivalent start.
        let start = crate::linalg::hpd_sqrt(&g.weight(i));
        let pairs = receiver_pairs(estimates, v, Receiver::Decoder(&u.u[i]), cfg, unc, i);
        let extra = Extra::LogDet {
            weight: 2.0 * cfg.alpha[i],
        };
        let Some(candidate) = robust_step(MatrixKind::Hermitian, &start, &pairs, extra, opts, stats)? else {
            continue;
        };
        let value = |gi: &CMat| -> Result<f64> {
            Ok(cfg.alpha[i] * (log2_det_weight(gi)? - receiver_slack(estimates, v, &u.u[i], gi, cfg, unc, i)))
        };
        let Ok(new) = value(&candidate) else {
            continue;
        };
        if new >= value(&g.g[i])? {
            next.g[i] = candidate;
        }
    }
    Ok(next)
}

fn public_setup(model: &NormBounded, cfg: &SystemConfig) -> Result<Uncertainty> {
    cfg.validate()?;
    Uncertainty::new(model, cfg)
}

/// Robust precoder update for fixed receivers and weights. Returns the new
/// precoders and the exact worst-case slacks at them.
#[allow(clippy::too_many_arguments)]
pub fn solve_v_step(
    estimates: &ChannelSet,
    precoders: &PrecoderSet,
    decoders: &DecoderSet,
    weights: &WeightSet,
    model: &NormBounded,
    cfg: &SystemConfig,
    eta: f64,
    opts: &SdpOptions,
) -> Result<(PrecoderSet, RobustAuxiliaries)> {
    super::check_factors(precoders, decoders, weights, cfg)?;
    let unc = public_setup(model, cfg)?;
    let v = v_step(estimates, precoders, decoders, weights, cfg, &unc, eta, opts, &mut SdpStats::default())?;
    let aux = unc.auxiliaries(estimates, &v, decoders, weights);
    Ok((v, aux))
}

/// Robust receiver update for fixed precoders and weights.
pub fn solve_u_step(
    estimates: &ChannelSet,
    precoders: &PrecoderSet,
    decoders: &DecoderSet,
    weights: &WeightSet,
    model: &NormBounded,
    cfg: &SystemConfig,
    opts: &SdpOptions,
) -> Result<(DecoderSet, RobustAuxiliaries)> {
    super::check_factors(precoders, decoders, weights, cfg)?;
    let unc = public_setup(model, cfg)?;
    let u = u_step(estimates, precoders, decoders, weights, cfg, &unc, opts, &mut SdpStats::default())?;
    let aux = unc.auxiliaries(estimates, precoders, &u, weights);
    Ok((u, aux))
}

/// Max-det weight update for fixed precoders and receivers.
pub fn solve_g_step(
    estimates: &ChannelSet,
    precoders: &PrecoderSet,
    decoders: &DecoderSet,
    weights: &WeightSet,
    model: &NormBounded,
    cfg: &SystemConfig,
    opts: &SdpOptions,
) -> Result<(WeightSet, RobustAuxiliaries)> {
    super::check_factors(precoders, decoders, weights, cfg)?;
    let unc = public_setup(model, cfg)?;
    let g = g_step(estimates, precoders, decoders, weights, cfg, &unc, opts, &mut SdpStats::default())?;
    let aux = unc.auxiliaries(estimates, precoders, decoders, &g);
    Ok((g, aux))
}
