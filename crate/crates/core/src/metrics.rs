//! Figures of merit: covariances, receivers, rates, MSE matrices and GEE.
//!
//! Rates are in bits (`log2`) throughout.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{c, eye, frob2, inv_hpd, log2_det_hpd, CMat, CVec};

/// Transmit precoders `V_k`, each M x d.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    pub v: Vec<CMat>,
}

impl PrecoderSet {
    pub fn zeros(cfg: &SystemConfig) -> Self {
        Self {
            v: vec![CMat::zeros(cfg.m, cfg.d); cfg.k],
        }
    }

    /// `tr(V_k V_k^H)` for every user.
    pub fn powers(&self) -> Vec<f64> {
        self.v.iter().map(frob2).collect()
    }

    pub fn check_shape(&self, cfg: &SystemConfig) -> Result<()> {
        if self.v.len() != cfg.k || self.v.iter().any(|v| v.shape() != (cfg.m, cfg.d)) {
            return Err(Error::DimensionMismatch {
                context: "precoder set",
                expected: format!("{} precoders of {}x{}", cfg.k, cfg.m, cfg.d),
                actual: format!("{} precoders", self.v.len()),
            });
        }
        Ok(())
    }

    /// True when every user respects the power budget (with `1e-9` slack).
    pub fn is_feasible(&self, p_max: f64) -> bool {
        self.powers().iter().all(|p| *p <= p_max + 1e-9)
    }
}

/// Receive filters `U_k`, each N x d.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderSet {
    pub u: Vec<CMat>,
}

/// Outcome of a design run or a plain evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeeReport {
    /// Per-user rates, bits/s/Hz.
    pub rates: Vec<f64>,
    /// Consumed power, watts.
    pub total_power: f64,
    /// Weighted sum-rate over power, bits/Hz/Joule.
    pub gee: f64,
    /// Per outer iteration: (η, subtractive objective at the returned point).
    pub trace: Vec<(f64, f64)>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// False when an iteration cap was hit before the stopping rule fired.
    pub converged: bool,
}

/// Total consumed power `Σ_k ρ tr(V_k V_k^H) + M P_cir`.
pub fn total_power(precoders: &PrecoderSet, cfg: &SystemConfig) -> f64 {
    precoders
        .powers()
        .iter()
        .map(|p| cfg.rho * p + cfg.m as f64 * cfg.p_cir)
        .sum()
}

/// `C_k = σ² I + Σ_{l≠k} H_kl V_l V_l^H H_kl^H`.
pub fn interference_covariance(channels: &ChannelSet, precoders: &PrecoderSet, cfg: &SystemConfig, k: usize) -> CMat {
    let mut cov = eye(cfg.n) * c(cfg.sigma2, 0.0);
    for l in (0..cfg.k).filter(|&l| l != k) {
        let hv = channels.get(k, l) * &precoders.v[l];
        cov += &hv * hv.adjoint();
    }
    cov
}

/// MMSE receiver `U_k = (C_k + H_kk V_k V_k^H H_kk^H)^{-1} H_kk V_k`.
pub fn mmse_receiver(channels: &ChannelSet, precoders: &PrecoderSet, cfg: &SystemConfig, k: usize) -> Result<CMat> {
    let hv = channels.get(k, k) * &precoders.v[k];
    let total = interference_covariance(channels, precoders, cfg, k) + &hv * hv.adjoint();
    let inv = inv_hpd(&total).ok_or_else(|| Error::Numerical(format!("total covariance of user {k} not invertible")))?;
    Ok(inv * hv)
}

pub fn mmse_decoders(channels: &ChannelSet, precoders: &PrecoderSet, cfg: &SystemConfig) -> Result<DecoderSet> {
    let u = (0..cfg.k)
        .map(|k| mmse_receiver(channels, precoders, cfg, k))
        .collect::<Result<_>>()?;
    Ok(DecoderSet { u })
}

/// Achievable rate of user `k` with linear decoder `U_k`.
pub fn user_rate(
    channels: &ChannelSet,
    precoders: &PrecoderSet,
    decoders: &DecoderSet,
    cfg: &SystemConfig,
    k: usize,
) -> Result<f64> {
    let u = &decoders.u[k];
    let a = u.adjoint() * channels.get(k, k) * &precoders.v[k];
    if frob2(&a) == 0.0 {
        return Ok(0.0);
    }
    let ucu = u.adjoint() * interference_covariance(channels, precoders, cfg, k) * u;
    let inv = inv_hpd(&ucu).ok_or(Error::DecoderRank { k })?;
    let m = eye(cfg.d) + a.adjoint() * inv * &a;
    let r = log2_det_hpd(&m).ok_or_else(|| Error::Numerical(format!("rate matrix of user {k} not positive definite")))?;
    Ok(r.max(0.0))
}

/// Rate of user `k` under the best linear receiver, `log2|I + V^H H^H C^{-1} H V|`.
///
/// Equals [`user_rate`] with the MMSE decoder whenever that decoder has full
/// column rank, and stays well defined when streams are switched off.
pub fn optimal_rate(channels: &ChannelSet, precoders: &PrecoderSet, cfg: &SystemConfig, k: usize) -> Result<f64> {
    let cov = interference_covariance(channels, precoders, cfg, k);
    rate_with_covariance(channels.get(k, k), &precoders.v[k], &cov, cfg.d)
}

pub(crate) fn rate_with_covariance(h: &CMat, v: &CMat, cov: &CMat, d: usize) -> Result<f64> {
    let inv = inv_hpd(cov).ok_or_else(|| Error::Numerical("interference covariance not positive definite".into()))?;
    let hv = h * v;
    let m = eye(d) + hv.adjoint() * inv * &hv;
    let r = log2_det_hpd(&m).ok_or_else(|| Error::Numerical("rate matrix not positive definite".into()))?;
    Ok(r.max(0.0))
}

/// Error covariance `E[(ŝ_k - s_k)(ŝ_k - s_k)^H]` for decoder `U_k`.
pub fn mse_matrix(
    channels: &ChannelSet,
    precoders: &PrecoderSet,
    decoders: &DecoderSet,
    cfg: &SystemConfig,
    k: usize,
) -> CMat {
    let u = &decoders.u[k];
    let uh = u.adjoint();
    let signal = &uh * channels.get(k, k) * &precoders.v[k] - eye(cfg.d);
    let mut mse = &signal * signal.adjoint() + &uh * u * c(cfg.sigma2, 0.0);
    for j in (0..cfg.k).filter(|&j| j != k) {
        let x = &uh * channels.get(k, j) * &precoders.v[j];
        mse += &x * x.adjoint();
    }
    mse
}

/// Builds a report from per-user rates.
pub fn report_from_rates(rates: Vec<f64>, precoders: &PrecoderSet, cfg: &SystemConfig) -> Result<GeeReport> {
    let total_power = total_power(precoders, cfg);
    if total_power <= 0.0 {
        return Err(Error::DegeneratePower);
    }
    let weighted: f64 = rates.iter().zip(&cfg.alpha).map(|(r, a)| a * r).sum();
    Ok(GeeReport {
        rates,
        total_power,
        gee: weighted / total_power,
        trace: Vec::new(),
        outer_iterations: 0,
        inner_iterations: 0,
        converged: true,
    })
}

/// General energy efficiency with the given decoders.
pub fn gee(channels: &ChannelSet, precoders: &PrecoderSet, decoders: &DecoderSet, cfg: &SystemConfig) -> Result<GeeReport> {
    let rates = (0..cfg.k)
        .map(|k| user_rate(channels, precoders, decoders, cfg, k))
        .collect::<Result<Vec<_>>>()?;
    report_from_rates(rates, precoders, cfg)
}

/// GEE with every receiver set to its best linear filter.
pub fn gee_optimal_receivers(channels: &ChannelSet, precoders: &PrecoderSet, cfg: &SystemConfig) -> Result<GeeReport> {
    let rates = (0..cfg.k)
        .map(|k| optimal_rate(channels, precoders, cfg, k))
        .collect::<Result<Vec<_>>>()?;
    report_from_rates(rates, precoders, cfg)
}

/// Symbol estimates `ŝ_n = U_n^H (Σ_l H_nl V_l s_l + z_n)`.
pub fn simulate_transmission(
    channels: &ChannelSet,
    precoders: &PrecoderSet,
    decoders: &DecoderSet,
    cfg: &SystemConfig,
    symbols: &[CVec],
    noise: &[CVec],
) -> Result<Vec<CVec>> {
    if symbols.len() != cfg.k || noise.len() != cfg.k {
        return Err(Error::DimensionMismatch {
            context: "simulate_transmission",
            expected: format!("{} symbol and noise vectors", cfg.k),
            actual: format!("{} / {}", symbols.len(), noise.len()),
        });
    }
    if symbols.iter().any(|s| s.len() != cfg.d) || noise.iter().any(|z| z.len() != cfg.n) {
        return Err(Error::DimensionMismatch {
            context: "simulate_transmission",
            expected: format!("symbols of length {} and noise of length {}", cfg.d, cfg.n),
            actual: "other lengths".into(),
        });
    }
    let out = (0..cfg.k)
        .map(|n| {
            let mut y = noise[n].clone();
            for l in 0..cfg.k {
                y += channels.get(n, l) * (&precoders.v[l] * &symbols[l]);
            }
            decoders.u[n].adjoint() * y
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_channels;

    fn scalar(k: usize, h: f64) -> (ChannelSet, SystemConfig) {
        let mut cfg = SystemConfig::symmetric(k, 1, 1, 1);
        cfg.sigma2 = 1.0;
        let chan = ChannelSet::from_fn(k, |_, _| CMat::from_element(1, 1, c(h, 0.0))).unwrap();
        (chan, cfg)
    }

    fn scalar_precoders(vals: &[f64]) -> PrecoderSet {
        PrecoderSet {
            v: vals.iter().map(|x| CMat::from_element(1, 1, c(*x, 0.0))).collect(),
        }
    }

    #[test]
    fn single_user_covariance_is_noise() {
        let cfg = SystemConfig::symmetric(1, 3, 2, 1);
        let chan = generate_channels(&cfg, 1);
        let v = PrecoderSet { v: vec![CMat::from_element(3, 1, c(0.3, 0.1))] };
        let cov = interference_covariance(&chan, &v, &cfg, 0);
        assert!((cov - eye(2)).norm() < 1e-15);
    }

    #[test]
    fn scalar_interference_covariance() {
        let (chan, cfg) = scalar(2, 1.0);
        let cov = interference_covariance(&chan, &scalar_precoders(&[1.0, 2.0]), &cfg, 0);
        assert!((cov[(0, 0)].re - 5.0).abs() < 1e-14);
    }

    #[test]
    fn scalar_mmse_receiver_and_rate() {
        let (chan, cfg) = scalar(1, 1.0);
        let p: f64 = 3.0;
        let pre = scalar_precoders(&[p.sqrt()]);
        let u = mmse_receiver(&chan, &pre, &cfg, 0).unwrap();
        assert!((u[(0, 0)].re - p.sqrt() / (1.0 + p)).abs() < 1e-14);
        let dec = DecoderSet { u: vec![u] };
        let r = user_rate(&chan, &pre, &dec, &cfg, 0).unwrap();
        assert!((r - (1.0 + p).log2()).abs() < 1e-12);
    }

    #[test]
    fn zero_precoder_gives_zero_receiver_and_rate() {
        let cfg = SystemConfig::symmetric(2, 2, 2, 1);
        let chan = generate_channels(&cfg, 4);
        let pre = PrecoderSet::zeros(&cfg);
        let u = mmse_receiver(&chan, &pre, &cfg, 0).unwrap();
        assert_eq!(frob2(&u), 0.0);
        let dec = DecoderSet { u: vec![CMat::from_element(2, 1, c(1.0, 0.0)); 2] };
        assert_eq!(user_rate(&chan, &pre, &dec, &cfg, 0).unwrap(), 0.0);
        let rep = gee(&chan, &pre, &dec, &cfg).unwrap();
        assert_eq!(rep.gee, 0.0);
    }

    #[test]
    fn rank_deficient_decoder_is_an_error() {
        let cfg = SystemConfig::symmetric(1, 2, 2, 2);
        let chan = generate_channels(&cfg, 2);
        let pre = PrecoderSet { v: vec![eye(2) * c(0.5, 0.0)] };
        let mut u = eye(2);
        u.set_column(1, &u.column(0).clone_owned());
        let err = user_rate(&chan, &pre, &DecoderSet { u: vec![u] }, &cfg, 0).unwrap_err();
        assert!(matches!(err, Error::DecoderRank { k: 0 }));
    }

    #[test]
    fn mse_edge_cases() {
        let cfg = SystemConfig::symmetric(1, 2, 2, 1);
        let chan = generate_channels(&cfg, 9);
        let pre = PrecoderSet { v: vec![CMat::from_element(2, 1, c(0.4, -0.2))] };
        let zero = DecoderSet { u: vec![CMat::zeros(2, 1)] };
        assert!((mse_matrix(&chan, &pre, &zero, &cfg, 0) - eye(1)).norm() < 1e-15);

        // Decoder that exactly inverts the effective channel: only noise remains.
        let hv = chan.get(0, 0) * &pre.v[0];
        let g = (hv.adjoint() * &hv)[(0, 0)];
        let u = &hv * (c(1.0, 0.0) / g);
        let dec = DecoderSet { u: vec![u.clone()] };
        let mse = mse_matrix(&chan, &pre, &dec, &cfg, 0);
        let expect = u.adjoint() * &u * c(cfg.sigma2, 0.0);
        assert!((mse - expect).norm() < 1e-12);
    }

    #[test]
    fn gee_denominator_and_degenerate_power() {
        let mut cfg = SystemConfig::symmetric(1, 4, 4, 1);
        let v = CMat::from_element(4, 1, c(0.5, 0.0));
        let pre = PrecoderSet { v: vec![v] };
        assert!((total_power(&pre, &cfg) - 3.8964).abs() < 1e-4);
        cfg.p_cir = 0.0;
        let zero = PrecoderSet::zeros(&cfg);
        let chan = generate_channels(&cfg, 0);
        let dec = DecoderSet { u: vec![CMat::from_element(4, 1, c(1.0, 0.0))] };
        assert!(matches!(gee(&chan, &zero, &dec, &cfg), Err(Error::DegeneratePower)));
    }

    #[test]
    fn scalar_gee_formula() {
        let (chan, mut cfg) = scalar(1, 1.0);
        cfg.sigma2 = 0.5;
        let p: f64 = 0.7;
        let pre = scalar_precoders(&[p.sqrt()]);
        let dec = mmse_decoders(&chan, &pre, &cfg).unwrap();
        let rep = gee(&chan, &pre, &dec, &cfg).unwrap();
        let expect = (1.0 + p / cfg.sigma2).log2() / (cfg.rho * p + cfg.p_cir);
        assert!((rep.gee - expect).abs() < 1e-12);
    }

    #[test]
    fn noiseless_identity_link_returns_symbols() {
        let (chan, cfg) = scalar(1, 2.0);
        let pre = scalar_precoders(&[1.0]);
        let dec = DecoderSet { u: vec![CMat::from_element(1, 1, c(0.5, 0.0))] };
        let s = vec![CVec::from_element(1, c(0.3, -0.8))];
        let z = vec![CVec::zeros(1)];
        let out = simulate_transmission(&chan, &pre, &dec, &cfg, &s, &z).unwrap();
        assert!((&out[0] - &s[0]).norm() < 1e-15);
        let zero_s = vec![CVec::zeros(1)];
        let z = vec![CVec::from_element(1, c(1.0, 1.0))];
        let out = simulate_transmission(&chan, &pre, &dec, &cfg, &zero_s, &z).unwrap();
        assert!((out[0][0] - c(0.5, 0.5)).norm() < 1e-15);
    }
}
