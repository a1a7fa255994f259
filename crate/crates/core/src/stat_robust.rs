//! Precoder design when the CSI error has known second-order statistics.
//!
//! The design target is the rate every user can guarantee when the estimation
//! error `Δ ~ CN(0, σ_Δ² I)` is treated as additional Gaussian noise:
//!
//! ```text
//! R_k = log2 |I + V_k^H Ĥ_kk^H C̃_k^{-1} Ĥ_kk V_k|
//! C̃_k = (σ² + σ_Δ² Σ_j ‖V_j‖_F²) I + Σ_{l≠k} Ĥ_kl V_l V_l^H Ĥ_kl^H
//! ```
//!
//! With `σ_Δ² = 0` this is the ordinary rate on the estimated channel.
//! Maximization alternates a Dinkelbach update of the energy-efficiency
//! price `η` with minorize-maximize steps: each step linearizes the rate
//! around the current precoders into a concave quadratic (`Ψ_i`, `b_i`) and
//! solves one norm-constrained QCQP per user in closed form.

use std::f64::consts::LN_2;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::{ChannelSet, SystemConfig};
use crate::dinkelbach::{solve_fractional, DinkelbachOptions, FractionalTrace, InnerSolution};
use crate::error::{Error, Result};
use crate::linalg::{c, eye, frob2, inv_hpd, log2_det_hpd, top_right_singular_vectors, trace_re, unvec, vec_of, vnorm2, CMat, CVec};
use crate::metrics::{report_from_rates, total_power, DecoderSet, GeeReport, PrecoderSet};
use crate::rng::{domain_rng, Domain};

/// Quadratic minorant of the weighted sum-rate around an expansion point.
///
/// For precoders `x_i = vec(V_i)` the minorant (in nats) is
/// `constant - Σ_i [x_i^H (I_d ⊗ Ψ_i) x_i + 2 Re(x_i^H b_i)]`.
#[derive(Debug, Clone)]
pub struct SurrogateData {
    /// M x M, Hermitian PSD.
    pub psi: Vec<CMat>,
    /// Length M d.
    pub b: Vec<CVec>,
    /// d x N, `-Ṽ^H Ĥ^H C̃^{-1}`.
    pub f12: Vec<CMat>,
    /// N x N, Hermitian PSD.
    pub f22: Vec<CMat>,
    /// Rate weight matrices `I + Ṽ^H Ĥ^H C̃^{-1} Ĥ Ṽ` at the expansion point.
    pub weights: Vec<CMat>,
    /// Precoder-independent part of the minorant, nats.
    pub constant: f64,
}

impl SurrogateData {
    /// Minorant of the weighted sum-rate, in bits.
    pub fn rate_value(&self, precoders: &PrecoderSet, cfg: &SystemConfig) -> f64 {
        let mut acc = self.constant;
        for (i, v) in precoders.v.iter().enumerate() {
            let x = vec_of(v);
            acc -= quadratic_form(&self.psi[i], 0.0, &x, cfg.d) + 2.0 * x.dotc(&self.b[i]).re;
        }
        acc / LN_2
    }

    /// Minorant of the subtractive objective `Σ α R - η P_total`, in bits.
    pub fn value(&self, precoders: &PrecoderSet, eta: f64, cfg: &SystemConfig) -> f64 {
        self.rate_value(precoders, cfg) - eta * total_power(precoders, cfg)
    }
}

/// `x^H (I_d ⊗ Ψ + shift I) x`.
fn quadratic_form(psi: &CMat, shift: f64, x: &CVec, d: usize) -> f64 {
    let m = psi.nrows();
    let xm = unvec(x, m, d);
    trace_re(&(xm.adjoint() * psi * &xm)) + shift * vnorm2(x)
}

/// `C̃_k`: interference-plus-noise covariance with the CSI error folded into the noise.
pub fn effective_covariance(
    estimates: &ChannelSet,
    precoders: &PrecoderSet,
    cfg: &SystemConfig,
    sigma_delta2: f64,
    k: usize,
) -> CMat {
    let spread: f64 = precoders.powers().iter().sum();
    let mut cov = eye(cfg.n) * c(cfg.sigma2 + sigma_delta2 * spread, 0.0);
    for l in (0..cfg.k).filter(|&l| l != k) {
        let hv = estimates.get(k, l) * &precoders.v[l];
        cov += &hv * hv.adjoint();
    }
    cov
}

/// Guaranteed per-user rates (bits) under the statistical error model.
pub fn robust_rates(estimates: &ChannelSet, precoders: &PrecoderSet, cfg: &SystemConfig, sigma_delta2: f64) -> Result<Vec<f64>> {
    (0..cfg.k)
        .map(|k| {
            let cov = effective_covariance(estimates, precoders, cfg, sigma_delta2, k);
            crate::metrics::rate_with_covariance(estimates.get(k, k), &precoders.v[k], &cov, cfg.d)
        })
        .collect()
}

/// `Σ_k α_k R_k - η P_total` with the guaranteed rates.
pub fn subtractive_objective(
    estimates: &ChannelSet,
    precoders: &PrecoderSet,
    cfg: &SystemConfig,
    sigma_delta2: f64,
    eta: f64,
) -> Result<f64> {
    let rates = robust_rates(estimates, precoders, cfg, sigma_delta2)?;
    let weighted: f64 = rates.iter().zip(&cfg.alpha).map(|(r, a)| r * a).sum();
    Ok(weighted - eta * total_power(precoders, cfg))
}

/// Receivers that are MMSE-optimal under the error-as-noise model.
pub fn robust_decoders(estimates: &ChannelSet, precoders: &PrecoderSet, cfg: &SystemConfig, sigma_delta2: f64) -> Result<DecoderSet> {
    let u = (0..cfg.k)
        .map(|k| {
            let hv = estimates.get(k, k) * &precoders.v[k];
            let total = effective_covariance(estimates, precoders, cfg, sigma_delta2, k) + &hv * hv.adjoint();
            inv_hpd(&total)
                .map(|inv| inv * hv)
                .ok_or_else(|| Error::Numerical(format!("total covariance of user {k} not invertible")))
        })
        .collect::<Result<_>>()?;
    Ok(DecoderSet { u })
}

/// Builds the quadratic minorant at `prev`.
pub fn build_surrogate(estimates: &ChannelSet, prev: &PrecoderSet, cfg: &SystemConfig, sigma_delta2: f64) -> Result<SurrogateData> {
    let (k, m, d) = (cfg.k, cfg.m, cfg.d);
    let mut f12 = Vec::with_capacity(k);
    let mut f22 = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    let mut constant = 0.0;
    for i in 0..k {
        let cov = effective_covariance(estimates, prev, cfg, sigma_delta2, i);
        let cov_inv = inv_hpd(&cov).ok_or_else(|| Error::Numerical(format!("covariance of user {i} not invertible")))?;
        let hv = estimates.get(i, i) * &prev.v[i];
        let a = hv.adjoint() * &cov_inv; // d x N
        let w = eye(d) + &a * &hv;
        let w_inv = inv_hpd(&w).ok_or_else(|| Error::Numerical(format!("weight matrix of user {i} singular")))?;
        let f12_i = -a;
        let f22_i = f12_i.adjoint() * w_inv * &f12_i;
        let ln_det_w = log2_det_hpd(&w).ok_or_else(|| Error::Numerical("weight matrix not positive definite".into()))? * LN_2;
        constant += cfg.alpha[i] * (ln_det_w + d as f64 - trace_re(&w) - cfg.sigma2 * trace_re(&f22_i));
        f12.push(f12_i);
        f22.push(f22_i);
        weights.push(w);
    }
    let mut psi = Vec::with_capacity(k);
    let mut b = Vec::with_capacity(k);
    for i in 0..k {
        let mut p = CMat::zeros(m, m);
        for l in 0..k {
            let h = estimates.get(l, i);
            p += h.adjoint() * &f22[l] * h * c(cfg.alpha[l], 0.0);
            p += eye(m) * c(cfg.alpha[l] * sigma_delta2 * trace_re(&f22[l]), 0.0);
        }
        psi.push(crate::linalg::hermitian_part(&p));
        b.push(vec_of(&(estimates.get(i, i).adjoint() * f12[i].adjoint() * c(cfg.alpha[i], 0.0))));
    }
    Ok(SurrogateData {
        psi,
        b,
        f12,
        f22,
        weights,
        constant,
    })
}

/// Minimizer of `x^H (I_d ⊗ Ψ + ηρ I) x + 2 Re(x^H b)` over `‖x‖² ≤ P`.
#[derive(Debug, Clone)]
pub struct QcqpSolution {
    pub x: CVec,
    pub lambda: f64,
}

impl QcqpSolution {
    pub fn objective(&self, psi: &CMat, b: &CVec, eta: f64, rho: f64) -> f64 {
        qcqp_objective(psi, b, eta, rho, &self.x)
    }
}

pub fn qcqp_objective(psi: &CMat, b: &CVec, eta: f64, rho: f64, x: &CVec) -> f64 {
    let d = x.len() / psi.nrows();
    quadratic_form(psi, eta * rho, x, d) + 2.0 * x.dotc(b).re
}

/// Closed-form QCQP solve through the multiplier `λ`.
///
/// `x(λ) = -(I_d ⊗ Ψ + ηρ I + λ I)^{-1} b`. If `x(0)` is feasible, `λ = 0`;
/// otherwise `λ` solves `b^H (I_d ⊗ Ψ + ηρ I + λ I)^{-2} b = P`, found by
/// bisection on `[0, ‖b‖/√P]` in the eigenbasis of `Ψ`.
pub fn solve_qcqp(psi: &CMat, b: &CVec, eta: f64, rho: f64, p: f64) -> Result<QcqpSolution> {
    let m = psi.nrows();
    if psi.ncols() != m || m == 0 || b.len() % m != 0 {
        return Err(Error::DimensionMismatch {
            context: "solve_qcqp",
            expected: format!("b of length a multiple of {m}"),
            actual: format!("{}", b.len()),
        });
    }
    let d = b.len() / m;
    let bnorm2 = vnorm2(b);
    if bnorm2 == 0.0 {
        return Ok(QcqpSolution {
            x: CVec::zeros(b.len()),
            lambda: 0.0,
        });
    }
    let eig = crate::linalg::hermitian_part(psi).symmetric_eigen();
    let q = &eig.eigenvectors;
    let shift = eta * rho;
    let beta: Vec<f64> = eig.eigenvalues.iter().map(|w| w.max(0.0) + shift).collect();
    let bm = unvec(b, m, d);
    let bhat = q.adjoint() * &bm; // m x d, column s holds Q^H b_s
    let weights: Vec<(f64, f64)> = (0..d)
        .flat_map(|s| (0..m).map(move |r| (r, s)))
        .map(|(r, s)| (beta[r], bhat[(r, s)].norm_sqr()))
        .collect();
    let g = |lambda: f64| -> f64 {
        weights
            .iter()
            .map(|&(bt, w)| if w == 0.0 { 0.0 } else { w / (bt + lambda).powi(2) })
            .sum()
    };
    let lambda = if g(0.0) <= p {
        0.0
    } else {
        let mut lo = 0.0;
        let mut hi = bnorm2.sqrt() / p.sqrt();
        while g(hi) > p {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= 1e-15 * hi {
                break;
            }
            if g(mid) > p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let mut xhat = bhat;
    for s in 0..d {
        for r in 0..m {
            let denom = beta[r] + lambda;
            xhat[(r, s)] = if denom > 0.0 { -xhat[(r, s)] / denom } else { c(0.0, 0.0) };
        }
    }
    Ok(QcqpSolution {
        x: vec_of(&(q * xhat)),
        lambda,
    })
}

/// Default starting point: power `P_m` spread evenly over the `d` strongest
/// right singular directions of the direct channel.
pub fn initial_precoders(estimates: &ChannelSet, cfg: &SystemConfig) -> PrecoderSet {
    let scale = c((cfg.p_max / cfg.d as f64).sqrt(), 0.0);
    PrecoderSet {
        v: (0..cfg.k)
            .map(|k| top_right_singular_vectors(estimates.get(k, k), cfg.d) * scale)
            .collect(),
    }
}

/// Random feasible precoders on the power sphere `‖V_k‖_F² = P_m`.
pub fn random_precoders<R: Rng>(cfg: &SystemConfig, rng: &mut R) -> PrecoderSet {
    PrecoderSet {
        v: (0..cfg.k)
            .map(|_| {
                let v = CMat::from_fn(cfg.m, cfg.d, |_, _| {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    c(re, im)
                });
                let s = (cfg.p_max / frob2(&v)).sqrt();
                v * c(s, 0.0)
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StatisticalOptions {
    pub dinkelbach: DinkelbachOptions,
    /// Minorize-maximize stop: objective change `≤ mami_tol (1 + |objective|)`.
    pub mami_tol: f64,
    pub mami_max_iter: usize,
    /// Extra random starting points besides the singular-vector one.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for StatisticalOptions {
    fn default() -> Self {
        Self {
            dinkelbach: DinkelbachOptions::default(),
            mami_tol: 1e-5,
            mami_max_iter: 200,
            restarts: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StatisticalOutcome {
    pub precoders: PrecoderSet,
    pub decoders: DecoderSet,
    pub report: GeeReport,
    pub fractional: FractionalTrace,
    /// Subtractive objective after every minorize-maximize step.
    pub mami_objectives: Vec<f64>,
}

/// Runs Dinkelbach around minorize-maximize from a given starting point.
pub fn run_statistical_from(
    estimates: &ChannelSet,
    cfg: &SystemConfig,
    sigma_delta2: f64,
    start: PrecoderSet,
    opts: &StatisticalOptions,
) -> Result<StatisticalOutcome> {
    cfg.validate()?;
    start.check_shape(cfg)?;
    if !(sigma_delta2 >= 0.0) {
        return Err(Error::InvalidConfig(format!("error variance must be non-negative, got {sigma_delta2}")));
    }
    let ratio = |v: &PrecoderSet| -> Result<(f64, f64)> {
        let rates = robust_rates(estimates, v, cfg, sigma_delta2)?;
        let num: f64 = rates.iter().zip(&cfg.alpha).map(|(r, a)| r * a).sum();
        Ok((num, total_power(v, cfg)))
    };
    let (n0, d0) = ratio(&start)?;
    let eta0 = if d0 > 0.0 { n0 / d0 } else { 0.0 };

    let mut current = start;
    let mut mami_objectives = Vec::new();
    let mut inner_iterations = 0usize;
    let (precoders, fractional) = solve_fractional(
        |eta| {
            let (mut num, mut den) = ratio(&current)?;
            let mut obj = num - eta * den;
            for _ in 0..opts.mami_max_iter {
                let sur = build_surrogate(estimates, &current, cfg, sigma_delta2)?;
                let v = (0..cfg.k)
                    .map(|i| {
                        let sol = solve_qcqp(&sur.psi[i], &sur.b[i], eta * LN_2, cfg.rho, cfg.p_max)?;
                        Ok(unvec(&sol.x, cfg.m, cfg.d))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let next = PrecoderSet { v };
                let (n1, d1) = ratio(&next)?;
                let obj1 = n1 - eta * d1;
                inner_iterations += 1;
                // A minorize-maximize step cannot lose objective; a drop is rounding.
                if obj1 < obj {
                    break;
                }
                let change = obj1 - obj;
                current = next;
                num = n1;
                den = d1;
                obj = obj1;
                mami_objectives.push(obj);
                if change <= opts.mami_tol * (1.0 + obj.abs()) {
                    break;
                }
            }
            Ok(InnerSolution {
                solution: current.clone(),
                numerator: num,
                denominator: den,
            })
        },
        eta0,
        opts.dinkelbach,
    )?;

    let rates = robust_rates(estimates, &precoders, cfg, sigma_delta2)?;
    let mut report = report_from_rates(rates, &precoders, cfg)?;
    report.trace = fractional.etas.iter().copied().zip(fractional.residuals.iter().copied()).collect();
    report.outer_iterations = fractional.iterations;
    report.inner_iterations = inner_iterations;
    report.converged = fractional.converged;
    let decoders = robust_decoders(estimates, &precoders, cfg, sigma_delta2)?;
    Ok(StatisticalOutcome {
        precoders,
        decoders,
        report,
        fractional,
        mami_objectives,
    })
}

/// Energy-efficient design under the statistical error model.
///
/// Starts from [`initial_precoders`] plus `opts.restarts` random points and
/// keeps the design with the highest guaranteed GEE.
pub fn run_statistical(
    estimates: &ChannelSet,
    cfg: &SystemConfig,
    sigma_delta2: f64,
    opts: &StatisticalOptions,
) -> Result<StatisticalOutcome> {
    let mut best = run_statistical_from(estimates, cfg, sigma_delta2, initial_precoders(estimates, cfg), opts)?;
    let mut rng = domain_rng(opts.seed, Domain::Restart);
    for _ in 0..opts.restarts {
        let start = random_precoders(cfg, &mut rng);
        let out = run_statistical_from(estimates, cfg, sigma_delta2, start, opts)?;
        if out.report.gee > best.report.gee {
            best = out;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_channels;

    #[test]
    fn surrogate_shapes() {
        let cfg = SystemConfig::symmetric(2, 3, 2, 2);
        let est = generate_channels(&cfg, 1);
        let sur = build_surrogate(&est, &initial_precoders(&est, &cfg), &cfg, 0.1).unwrap();
        assert_eq!(sur.psi[0].shape(), (3, 3));
        assert_eq!(sur.b[0].len(), 6);
        assert_eq!(sur.f12[0].shape(), (2, 2));
        assert_eq!(sur.f22[0].shape(), (2, 2));
    }

    #[test]
    fn zero_error_variance_drops_identity_term() {
        let cfg = SystemConfig::symmetric(2, 2, 2, 1);
        let est = generate_channels(&cfg, 2);
        let v = initial_precoders(&est, &cfg);
        let sur = build_surrogate(&est, &v, &cfg, 0.0).unwrap();
        for i in 0..2 {
            let mut expect = CMat::zeros(2, 2);
            for l in 0..2 {
                expect += est.get(l, i).adjoint() * &sur.f22[l] * est.get(l, i) * c(cfg.alpha[l], 0.0);
            }
            assert!((&sur.psi[i] - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn unconstrained_binding_qcqp() {
        let psi = CMat::zeros(2, 2);
        let b = CVec::from_vec(vec![c(3.0, 0.0), c(0.0, 4.0)]);
        let p = 2.0;
        let sol = solve_qcqp(&psi, &b, 0.0, 1.0, p).unwrap();
        assert!((sol.lambda - 5.0 / p.sqrt()).abs() < 1e-9);
        let expect = &b * c(-p.sqrt() / 5.0, 0.0);
        assert!((&sol.x - expect).norm() < 1e-9);
    }

    #[test]
    fn zero_linear_term_gives_zero() {
        let psi = eye(3);
        let sol = solve_qcqp(&psi, &CVec::zeros(6), 1.0, 1.0, 1.0).unwrap();
        assert_eq!(sol.lambda, 0.0);
        assert_eq!(vnorm2(&sol.x), 0.0);
    }

    #[test]
    fn interior_solution_has_zero_multiplier() {
        let psi = eye(2) * c(10.0, 0.0);
        let b = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let sol = solve_qcqp(&psi, &b, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(sol.lambda, 0.0);
        assert!((sol.x[0] - c(-0.1, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn scalar_design_matches_power_grid() {
        let mut cfg = SystemConfig::symmetric(1, 1, 1, 1);
        cfg.p_cir = 0.2;
        let est = ChannelSet::new(vec![vec![CMat::from_element(1, 1, c(1.0, 0.0))]]).unwrap();
        let out = run_statistical(&est, &cfg, 0.0, &StatisticalOptions::default()).unwrap();
        let best = (0..=10_000)
            .map(|i| {
                let p = i as f64 * 1e-4 * cfg.p_max;
                (1.0 + p / cfg.sigma2).log2() / (cfg.rho * p + cfg.p_cir)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((out.report.gee - best).abs() < 1e-3, "{} vs {}", out.report.gee, best);
    }
}
