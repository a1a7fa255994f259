//! Precoder design against norm-bounded CSI errors `‖B_ij Δ_ij‖_F ≤ ε_ij`.
//!
//! Each user's rate is bounded below through the weighted MSE: for any
//! `W_i = G_i G_i^H ≻ 0`,
//!
//! ```text
//! R_i ≥ 2 log2|det G_i| + d (log2 ln 2 + 1/ln 2) - tr(W_i MSE_i)
//! tr(W_i MSE_i(Ĥ + Δ)) = Σ_j ‖e_ij + E_ij vec(Δ_ij^H)‖²
//! ```
//!
//! Every term in the sum is bounded over its uncertainty ball by a slack
//! `λ_ij`, certified through an S-procedure LMI. The design alternates
//! convex steps over `V`, `U` and `G` inside a Dinkelbach loop, and the
//! reported GEE uses the tightest such bound at the final point.

mod steps;

use std::f64::consts::LN_2;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, NormBounded, SystemConfig};
use crate::dinkelbach::{solve_fractional, DinkelbachOptions, FractionalTrace, InnerSolution};
use crate::error::{Error, Result};
use crate::linalg::{c, eye, hpd_sqrt, inv_hpd, log2_det_hpd, vec_of, vnorm2, CMat, CVec};
use crate::metrics::{gee_optimal_receivers, mmse_decoders, mse_matrix, report_from_rates, total_power, DecoderSet, GeeReport, PrecoderSet};
use crate::sdp::SdpOptions;
use crate::stat_robust::initial_precoders;

pub use steps::{solve_g_step, solve_u_step, solve_v_step};

/// MSE weight factors; `W_i = G_i G_i^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub g: Vec<CMat>,
}

impl WeightSet {
    pub fn weight(&self, i: usize) -> CMat {
        &self.g[i] * self.g[i].adjoint()
    }

    /// `G_i = (MSE_i ln 2)^{-1/2}`, the maximizer of the rate bound for fixed `V`, `U`.
    pub fn optimal(estimates: &ChannelSet, precoders: &PrecoderSet, decoders: &DecoderSet, cfg: &SystemConfig) -> Result<Self> {
        let g = (0..cfg.k)
            .map(|i| {
                let mse = mse_matrix(estimates, precoders, decoders, cfg, i) * c(LN_2, 0.0);
                inv_hpd(&mse)
                    .map(|w| hpd_sqrt(&w))
                    .ok_or_else(|| Error::Numerical(format!("MSE matrix of user {i} is singular")))
            })
            .collect::<Result<_>>()?;
        Ok(Self { g })
    }
}

/// `e_ij` and `E_ij` for every receiver `i` and transmitter `j`.
///
/// `E_ij` acts on `vec(Δ_ij^H)` (length `MN`). The direct pair carries
/// `d² + N d` rows, cross pairs `d²`.
#[derive(Debug, Clone)]
pub struct ErrorTerms {
    pub e: Vec<Vec<CVec>>,
    pub big_e: Vec<Vec<CMat>>,
}

impl ErrorTerms {
    pub fn len(&self, i: usize, j: usize) -> usize {
        self.e[i][j].len()
    }

    /// `e_ij + E_ij vec(Δ^H)` for an `N x M` error `Δ`.
    pub fn residual(&self, i: usize, j: usize, delta: &CMat) -> CVec {
        &self.e[i][j] + &self.big_e[i][j] * vec_of(&delta.adjoint())
    }
}

/// `(e_ij, E_ij)` from the factors of one pair.
pub(crate) fn pair_terms(h_ij: &CMat, v_j: &CMat, u_i: &CMat, g_i: &CMat, sigma: f64, own: bool) -> (CVec, CMat) {
    let d = g_i.nrows();
    let ug = u_i * g_i;
    let core = v_j.adjoint() * h_ij.adjoint() * &ug;
    let kron = ug.transpose().kronecker(&v_j.adjoint());
    if !own {
        return (vec_of(&core), kron);
    }
    let nd = ug.nrows() * d;
    let mut e = CVec::zeros(d * d + nd);
    e.rows_mut(0, d * d).copy_from(&vec_of(&(core - g_i)));
    e.rows_mut(d * d, nd).copy_from(&vec_of(&(ug * c(sigma, 0.0))));
    let mut big = CMat::zeros(d * d + nd, kron.ncols());
    big.rows_mut(0, d * d).copy_from(&kron);
    (e, big)
}

fn check_factors(precoders: &PrecoderSet, decoders: &DecoderSet, weights: &WeightSet, cfg: &SystemConfig) -> Result<()> {
    precoders.check_shape(cfg)?;
    let bad = |what: &'static str, expected: String, actual: String| Error::DimensionMismatch {
        context: what,
        expected,
        actual,
    };
    if decoders.u.len() != cfg.k || decoders.u.iter().any(|u| u.shape() != (cfg.n, cfg.d)) {
        return Err(bad("decoders", format!("{} of {}x{}", cfg.k, cfg.n, cfg.d), format!("{} matrices", decoders.u.len())));
    }
    if weights.g.len() != cfg.k || weights.g.iter().any(|g| g.shape() != (cfg.d, cfg.d)) {
        return Err(bad("weights", format!("{} of {}x{}", cfg.k, cfg.d, cfg.d), format!("{} matrices", weights.g.len())));
    }
    Ok(())
}

pub fn assemble_error_terms(
    estimates: &ChannelSet,
    precoders: &PrecoderSet,
    decoders: &DecoderSet,
    weights: &WeightSet,
    cfg: &SystemConfig,
) -> Result<ErrorTerms> {
    check_factors(precoders, decoders, weights, cfg)?;
    let sigma = cfg.sigma2.sqrt();
    let mut e = Vec::with_capacity(cfg.k);
    let mut big_e = Vec::with_capacity(cfg.k);
    for i in 0..cfg.k {
        let (row_e, row_big): (Vec<_>, Vec<_>) = (0..cfg.k)
            .map(|j| pair_terms(estimates.get(i, j), &precoders.v[j], &decoders.u[i], &weights.g[i], sigma, i == j))
            .unzip();
        e.push(row_e);
        big_e.push(row_big);
    }
    Ok(ErrorTerms { e, big_e })
}

/// `[[P_m, vec(V)^H], [vec(V), I]]`, PSD exactly when `‖V‖_F² ≤ P_m`.
pub fn build_power_lmi(v: &CMat, p_max: f64) -> CMat {
    let x = vec_of(v);
    let n = x.len();
    let mut block = eye(n + 1);
    block[(0, 0)] = c(p_max, 0.0);
    for k in 0..n {
        block[(k + 1, 0)] = x[k];
        block[(0, k + 1)] = x[k].conj();
    }
    block
}

/// `conj(B^{-1}) ⊗ I_M`: maps `vec(Δ̃^H)` with `Δ̃ = B Δ` to `vec(Δ^H)`.
pub fn shaping_transform(shaping: &CMat, m: usize) -> Result<CMat> {
    let inv = inv_hpd(shaping).ok_or_else(|| Error::Numerical("shaping matrix not positive definite".into()))?;
    Ok(inv.map(|z| z.conj()).kronecker(&eye(m)))
}

/// The S-procedure block
/// `[[λ-μ, e^H, 0], [e, I, -ε E B̃], [0, -ε B̃^H E^H, μ I]]`.
///
/// PSD for some `μ ≥ 0` iff `‖e + E vec(Δ^H)‖² ≤ λ` for every `‖B Δ‖_F ≤ ε`.
pub fn build_robust_lmi(e: &CVec, big_e: &CMat, shaping: &CMat, eps: f64, lambda: f64, mu: f64) -> Result<CMat> {
    let mn = big_e.ncols();
    let m = mn / shaping.nrows();
    let f = big_e * shaping_transform(shaping, m)?;
    Ok(s_procedure_block(e, &f, eps, lambda, mu))
}

pub(crate) fn s_procedure_block(e: &CVec, f: &CMat, eps: f64, lambda: f64, mu: f64) -> CMat {
    let l = e.len();
    let r = f.ncols();
    let mut block = CMat::zeros(1 + l + r, 1 + l + r);
    block[(0, 0)] = c(lambda - mu, 0.0);
    for a in 0..l {
        block[(a + 1, 0)] = e[a];
        block[(0, a + 1)] = e[a].conj();
        block[(a + 1, a + 1)] = c(1.0, 0.0);
    }
    for b in 0..r {
        block[(1 + l + b, 1 + l + b)] = c(mu, 0.0);
        for a in 0..l {
            let z = f[(a, b)] * c(-eps, 0.0);
            block[(1 + a, 1 + l + b)] = z;
            block[(1 + l + b, 1 + a)] = z.conj();
        }
    }
    block
}

/// Slack and multiplier attaining `max_{‖x‖ ≤ ε} ‖e + F x‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub lambda: f64,
    pub mu: f64,
    /// `ε² σ_max(F)²`, the lower end of admissible multipliers.
    pub mu_floor: f64,
}

/// Exact worst case through the S-procedure dual: minimize over `μ > ε² σ_max²`
/// `μ + ‖e‖² + Σ_k |p_k^H e|² ε² s_k² / (μ - ε² s_k²)`.
pub fn worst_case_bound(e: &CVec, f: &CMat, eps: f64) -> WorstCase {
    let norm2 = vnorm2(e);
    if eps == 0.0 || f.ncols() == 0 || f.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
        return WorstCase {
            lambda: norm2,
            mu: 0.0,
            mu_floor: 0.0,
        };
    }
    let svd = f.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let terms: Vec<(f64, f64)> = svd
        .singular_values
        .iter()
        .enumerate()
        .map(|(k, s)| (u.column(k).dotc(e).norm_sqr(), eps * eps * s * s))
        .collect();
    let floor = terms.iter().map(|t| t.1).fold(0.0, f64::max);
    let active: Vec<(f64, f64)> = terms.into_iter().filter(|&(a, t)| a > 0.0 && t > 0.0).collect();
    let slope = |mu: f64| 1.0 - active.iter().map(|&(a, t)| a * t / (mu - t).powi(2)).sum::<f64>();
    let value = |mu: f64| mu + norm2 + active.iter().map(|&(a, t)| a * t / (mu - t)).sum::<f64>();
    let mut lo = floor;
    let mut hi = floor + (norm2 * floor).sqrt() + f64::MIN_POSITIVE;
    while !(slope(hi) >= 0.0) {
        hi = floor + 2.0 * (hi - floor);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    WorstCase {
        lambda: value(hi),
        mu: hi,
        mu_floor: floor,
    }
}

/// Slacks, multipliers and uncertainty transforms of one configuration.
#[derive(Debug, Clone)]
pub struct RobustAuxiliaries {
    pub lambda: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
    pub btilde: Vec<Vec<CMat>>,
}

/// Per-pair data of the uncertainty model used by every step.
#[derive(Debug, Clone)]
pub(crate) struct Uncertainty {
    pub btilde: Vec<Vec<CMat>>,
    pub eps: Vec<Vec<f64>>,
    pub sigma: f64,
}

impl Uncertainty {
    pub fn new(model: &NormBounded, cfg: &SystemConfig) -> Result<Self> {
        model.validate(cfg.k, cfg.n)?;
        let btilde = (0..cfg.k)
            .map(|i| {
                (0..cfg.k)
                    .map(|j| shaping_transform(&model.shaping[i][j], cfg.m).map_err(|_| Error::SingularShaping { i, j }))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            btilde,
            eps: model.radius.clone(),
            sigma: cfg.sigma2.sqrt(),
        })
    }

    pub fn pair_bound(&self, estimates: &ChannelSet, v_j: &CMat, u_i: &CMat, g_i: &CMat, i: usize, j: usize) -> WorstCase {
        let (e, big) = pair_terms(estimates.get(i, j), v_j, u_i, g_i, self.sigma, i == j);
        worst_case_bound(&e, &(big * &self.btilde[i][j]), self.eps[i][j])
    }

    pub fn auxiliaries(&self, estimates: &ChannelSet, precoders: &PrecoderSet, decoders: &DecoderSet, weights: &WeightSet) -> RobustAuxiliaries {
        let k = precoders.v.len();
        let mut lambda = vec![vec![0.0; k]; k];
        let mut mu = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..k {
                let wc = self.pair_bound(estimates, &precoders.v[j], &decoders.u[i], &weights.g[i], i, j);
                lambda[i][j] = wc.lambda;
                mu[i][j] = wc.mu;
            }
        }
        RobustAuxiliaries {
            lambda,
            mu,
            btilde: self.btilde.clone(),
        }
    }
}

/// `d (log2 ln 2 + 1/ln 2)`: the constant of the rate bound.
pub fn rate_bound_constant(d: usize) -> f64 {
    d as f64 * (LN_2.log2() + 1.0 / LN_2)
}

/// `2 log2|det G|`.
pub(crate) fn log2_det_weight(g: &CMat) -> Result<f64> {
    log2_det_hpd(&(g * g.adjoint())).ok_or_else(|| Error::Numerical("weight factor is singular".into()))
}

pub(crate) fn bound_rates(
    estimates: &ChannelSet,
    precoders: &PrecoderSet,
    decoders: &DecoderSet,
    weights: &WeightSet,
    cfg: &SystemConfig,
    unc: &Uncertainty,
) -> Result<Vec<f64>> {
    let aux = unc.auxiliaries(estimates, precoders, decoders, weights);
    (0..cfg.k)
        .map(|i| Ok(log2_det_weight(&weights.g[i])? + rate_bound_constant(cfg.d) - aux.lambda[i].iter().sum::<f64>()))
        .collect()
}

/// Worst-case rate lower bounds (bits) of every user at the given factors.
pub fn worstcase_rates(
    estimates: &ChannelSet,
    precoders: &PrecoderSet,
    decoders: &DecoderSet,
    weights: &WeightSet,
    model: &NormBounded,
    cfg: &SystemConfig,
) -> Result<Vec<f64>> {
    check_factors(precoders, decoders, weights, cfg)?;
    let unc = Uncertainty::new(model, cfg)?;
    bound_rates(estimates, precoders, decoders, weights, cfg, &unc)
}

/// `Σ_i α_i R_i - η P_total` with the worst-case rate bounds.
pub fn worstcase_objective(
    estimates: &ChannelSet,
    precoders: &PrecoderSet,
    decoders: &DecoderSet,
    weights: &WeightSet,
    model: &NormBounded,
    cfg: &SystemConfig,
    eta: f64,
) -> Result<f64> {
    let rates = worstcase_rates(estimates, precoders, decoders, weights, model, cfg)?;
    Ok(rates.iter().zip(&cfg.alpha).map(|(r, a)| r * a).sum::<f64>() - eta * total_power(precoders, cfg))
}

#[derive(Debug, Clone, Copy)]
pub struct WorstCaseOptions {
    pub dinkelbach: DinkelbachOptions,
    /// Alternating loop stop: objective change `≤ sweep_tol (1 + |objective|)`.
    pub sweep_tol: f64,
    pub max_sweeps: usize,
    pub sdp: SdpOptions,
}

impl Default for WorstCaseOptions {
    fn default() -> Self {
        Self {
            dinkelbach: DinkelbachOptions::default(),
            sweep_tol: 1e-4,
            max_sweeps: 100,
            sdp: SdpOptions {
                gap_tol: 1e-8,
                max_iter: 400,
                ..SdpOptions::default()
            },
        }
    }
}

/// Accumulated cost of the conic steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SdpStats {
    pub solves: usize,
    pub newton_steps: usize,
    pub not_optimal: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct WorstCaseOutcome {
    pub precoders: PrecoderSet,
    pub decoders: DecoderSet,
    pub weights: WeightSet,
    /// GEE of the worst-case rate bounds.
    pub report: GeeReport,
    /// GEE of the same precoders on the estimated channel with MMSE receivers.
    pub nominal: GeeReport,
    pub auxiliaries: RobustAuxiliaries,
    pub fractional: FractionalTrace,
    /// Subtractive objective after every completed sweep.
    pub sweep_objectives: Vec<f64>,
    pub sdp: SdpStats,
}

#[derive(Debug, Clone)]
struct Factors {
    v: PrecoderSet,
    u: DecoderSet,
    g: WeightSet,
}

/// Starting factors: the statistical starting precoders, MMSE receivers and
/// rate-optimal weights on the estimated channel.
pub fn initial_factors(estimates: &ChannelSet, cfg: &SystemConfig) -> Result<(PrecoderSet, DecoderSet, WeightSet)> {
    let v = initial_precoders(estimates, cfg);
    let u = mmse_decoders(estimates, &v, cfg)?;
    let g = WeightSet::optimal(estimates, &v, &u, cfg)?;
    Ok((v, u, g))
}

pub fn run_worstcase(estimates: &ChannelSet, cfg: &SystemConfig, model: &NormBounded, opts: &WorstCaseOptions) -> Result<WorstCaseOutcome> {
    cfg.validate()?;
    let unc = Uncertainty::new(model, cfg)?;
    let (v, u, g) = initial_factors(estimates, cfg)?;
    let ratio = |f: &Factors| -> Result<(f64, f64)> {
        let rates = bound_rates(estimates, &f.v, &f.u, &f.g, cfg, &unc)?;
        Ok((rates.iter().zip(&cfg.alpha).map(|(r, a)| r * a).sum(), total_power(&f.v, cfg)))
    };
    let mut current = Factors { v, u, g };
    let (n0, d0) = ratio(&current)?;
    let mut stats = SdpStats::default();
    let mut sweep_objectives = Vec::new();
    let mut sweeps = 0usize;

    let (best, fractional) = solve_fractional(
        |eta| {
            let (mut num, mut den) = ratio(&current)?;
            let mut obj = num - eta * den;
            for _ in 0..opts.max_sweeps {
                let v = steps::v_step(estimates, &current.v, &current.u, &current.g, cfg, &unc, eta, &opts.sdp, &mut stats)?;
                let u = steps::u_step(estimates, &v, &current.u, &current.g, cfg, &unc, &opts.sdp, &mut stats)?;
                let g = steps::g_step(estimates, &v, &u, &current.g, cfg, &unc, &opts.sdp, &mut stats)?;
                current = Factors { v, u, g };
                let (n1, d1) = ratio(&current)?;
                let obj1 = n1 - eta * d1;
                sweeps += 1;
                sweep_objectives.push(obj1);
                let change = (obj1 - obj).abs();
                num = n1;
                den = d1;
                obj = obj1;
                if change <= opts.sweep_tol * (1.0 + obj.abs()) {
                    break;
                }
            }
            Ok(InnerSolution {
                solution: current.clone(),
                numerator: num,
                denominator: den,
            })
        },
        n0 / d0,
        opts.dinkelbach,
    )?;

    let rates = bound_rates(estimates, &best.v, &best.u, &best.g, cfg, &unc)?;
    let mut report = report_from_rates(rates, &best.v, cfg)?;
    report.trace = fractional.etas.iter().copied().zip(fractional.residuals.iter().copied()).collect();
    report.outer_iterations = fractional.iterations;
    report.inner_iterations = sweeps;
    report.converged = fractional.converged;
    let nominal = gee_optimal_receivers(estimates, &best.v, cfg)?;
    let auxiliaries = unc.auxiliaries(estimates, &best.v, &best.u, &best.g);
    Ok(WorstCaseOutcome {
        precoders: best.v,
        decoders: best.u,
        weights: best.g,
        report,
        nominal,
        auxiliaries,
        fractional,
        sweep_objectives,
        sdp: stats,
    })
}
