//! Network configuration, channel generation and CSI error models.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, frob2, inv_hpd, hermitian_defect, min_eigenvalue, CMat};
use crate::rng::{link_rng, Domain};

/// Scalar parameters of a symmetric K-pair MIMO interference channel.
///
/// All powers are in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Number of transmitter/receiver pairs.
    pub k: usize,
    /// Transmit antennas per user.
    pub m: usize,
    /// Receive antennas per user.
    pub n: usize,
    /// Streams per user.
    pub d: usize,
    /// Receiver noise variance.
    pub sigma2: f64,
    /// Per-user transmit power budget.
    pub p_max: f64,
    /// Circuit power per transmit antenna.
    pub p_cir: f64,
    /// Inverse power amplifier efficiency, at least 1.
    pub rho: f64,
    /// Rate weight per user.
    pub alpha: Vec<f64>,
    /// Variance of each channel entry.
    pub sigma_h2: f64,
}

impl SystemConfig {
    /// A symmetric network with unit noise, a 1 W budget, -5 dBW circuit power
    /// per antenna, 38 % amplifier efficiency and unit weights.
    pub fn symmetric(k: usize, m: usize, n: usize, d: usize) -> Self {
        Self {
            k,
            m,
            n,
            d,
            sigma2: 1.0,
            p_max: 1.0,
            p_cir: 10f64.powf(-0.5),
            rho: 1.0 / 0.38,
            alpha: vec![1.0; k],
            sigma_h2: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if self.d == 0 || self.d > self.m.min(self.n) {
            return bad(format!("d = {} must lie in 1..=min(M, N) = {}", self.d, self.m.min(self.n)));
        }
        if !(self.sigma2 > 0.0) {
            return bad(format!("noise variance must be positive, got {}", self.sigma2));
        }
        if !(self.p_max > 0.0) {
            return bad(format!("power budget must be positive, got {}", self.p_max));
        }
        if !(self.p_cir >= 0.0) {
            return bad(format!("circuit power must be non-negative, got {}", self.p_cir));
        }
        if !(self.rho >= 1.0) {
            return bad(format!("amplifier inefficiency must be >= 1, got {}", self.rho));
        }
        if !(self.sigma_h2 >= 0.0) {
            return bad(format!("channel variance must be non-negative, got {}", self.sigma_h2));
        }
        if self.alpha.len() != self.k {
            return bad(format!("expected {} weights, got {}", self.k, self.alpha.len()));
        }
        if self.alpha.iter().any(|a| !(*a >= 0.0)) || !self.alpha.iter().any(|a| *a > 0.0) {
            return bad("weights must be non-negative with at least one positive".into());
        }
        Ok(())
    }
}

/// Channel matrices `H[i][j]` (N x M) from transmitter `j` to receiver `i`.
///
/// Serialized as `{"k", "n", "m", "h"}` where `h[i][j]` is a list of `n` rows,
/// each a list of `m` `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ChannelSetJson", try_from = "ChannelSetJson")]
pub struct ChannelSet {
    k: usize,
    n: usize,
    m: usize,
    h: Vec<Vec<CMat>>,
}

impl ChannelSet {
    pub fn new(h: Vec<Vec<CMat>>) -> Result<Self> {
        let k = h.len();
        if k == 0 || h.iter().any(|row| row.len() != k) {
            return Err(Error::DimensionMismatch {
                context: "channel set",
                expected: "K x K matrices".into(),
                actual: format!("{} rows", k),
            });
        }
        let (n, m) = h[0][0].shape();
        for row in &h {
            for mat in row {
                if mat.shape() != (n, m) {
                    return Err(Error::DimensionMismatch {
                        context: "channel set",
                        expected: format!("{n}x{m}"),
                        actual: format!("{}x{}", mat.nrows(), mat.ncols()),
                    });
                }
            }
        }
        Ok(Self { k, n, m, h })
    }

    pub fn from_fn(k: usize, mut f: impl FnMut(usize, usize) -> CMat) -> Result<Self> {
        Self::new((0..k).map(|i| (0..k).map(|j| f(i, j)).collect()).collect())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    /// Channel from transmitter `j` to receiver `i`.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &CMat {
        &self.h[i][j]
    }

    pub fn matrices(&self) -> &[Vec<CMat>] {
        &self.h
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ChannelSetJson {
    k: usize,
    n: usize,
    m: usize,
    h: Vec<Vec<Vec<Vec<[f64; 2]>>>>,
}

pub(crate) fn matrix_to_rows(mat: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..mat.nrows())
        .map(|r| (0..mat.ncols()).map(|col| [mat[(r, col)].re, mat[(r, col)].im]).collect())
        .collect()
}

pub(crate) fn rows_to_matrix(rows: &[Vec<[f64; 2]>]) -> Option<CMat> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != nc) {
        return None;
    }
    Some(CMat::from_fn(nr, nc, |r, col| c(rows[r][col][0], rows[r][col][1])))
}

impl From<ChannelSet> for ChannelSetJson {
    fn from(cs: ChannelSet) -> Self {
        Self {
            k: cs.k,
            n: cs.n,
            m: cs.m,
            h: cs.h.iter().map(|row| row.iter().map(matrix_to_rows).collect()).collect(),
        }
    }
}

impl TryFrom<ChannelSetJson> for ChannelSet {
    type Error = Error;

    fn try_from(js: ChannelSetJson) -> Result<Self> {
        let mut h = Vec::with_capacity(js.h.len());
        for row in &js.h {
            let mut out = Vec::with_capacity(row.len());
            for rows in row {
                out.push(rows_to_matrix(rows).ok_or(Error::DimensionMismatch {
                    context: "channel JSON",
                    expected: "rectangular matrix".into(),
                    actual: "ragged rows".into(),
                })?);
            }
            h.push(out);
        }
        let cs = ChannelSet::new(h)?;
        if cs.k != js.k || cs.n != js.n || cs.m != js.m {
            return Err(Error::DimensionMismatch {
                context: "channel JSON header",
                expected: format!("k={} n={} m={}", js.k, js.n, js.m),
                actual: format!("k={} n={} m={}", cs.k, cs.n, cs.m),
            });
        }
        Ok(cs)
    }
}

/// How the CSI error is characterised.
#[derive(Debug, Clone, PartialEq)]
pub enum ErrorModel {
    /// I.i.d. circularly symmetric Gaussian entries with the given variance.
    Stochastic { sigma_delta2: f64 },
    /// `‖B_ij Δ_ij‖_F ≤ eps_ij`, with `B_ij` Hermitian positive definite.
    NormBounded(NormBounded),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormBounded {
    /// Shaping matrices, K x K entries of size N x N.
    pub shaping: Vec<Vec<CMat>>,
    /// Ball radii on `‖B Δ‖_F`.
    pub radius: Vec<Vec<f64>>,
}

impl NormBounded {
    /// Spherical uncertainty: `B = I_N` and the same radius on every link.
    pub fn spherical(k: usize, n: usize, eps: f64) -> Self {
        Self {
            shaping: vec![vec![CMat::identity(n, n); k]; k],
            radius: vec![vec![eps; k]; k],
        }
    }

    pub fn validate(&self, k: usize, n: usize) -> Result<()> {
        if self.shaping.len() != k || self.radius.len() != k {
            return Err(Error::DimensionMismatch {
                context: "norm-bounded model",
                expected: format!("{k} rows"),
                actual: format!("{} / {}", self.shaping.len(), self.radius.len()),
            });
        }
        for i in 0..k {
            if self.shaping[i].len() != k || self.radius[i].len() != k {
                return Err(Error::DimensionMismatch {
                    context: "norm-bounded model",
                    expected: format!("{k} columns"),
                    actual: format!("row {i}"),
                });
            }
            for j in 0..k {
                let b = &self.shaping[i][j];
                if b.shape() != (n, n) {
                    return Err(Error::DimensionMismatch {
                        context: "shaping matrix",
                        expected: format!("{n}x{n}"),
                        actual: format!("{}x{}", b.nrows(), b.ncols()),
                    });
                }
                let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
                if hermitian_defect(b) > 1e-10 * scale || min_eigenvalue(b) <= 1e-12 * scale {
                    return Err(Error::SingularShaping { i, j });
                }
                if !(self.radius[i][j] >= 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "radius eps[{i}][{j}] must be non-negative, got {}",
                        self.radius[i][j]
                    )));
                }
            }
        }
        Ok(())
    }
}

impl ErrorModel {
    pub fn validate(&self, k: usize, n: usize) -> Result<()> {
        match self {
            ErrorModel::Stochastic { sigma_delta2 } if !(*sigma_delta2 >= 0.0) => Err(Error::InvalidConfig(
                format!("error variance must be non-negative, got {sigma_delta2}"),
            )),
            ErrorModel::Stochastic { .. } => Ok(()),
            ErrorModel::NormBounded(nb) => nb.validate(k, n),
        }
    }
}

/// Additive channel errors `Δ[i][j]`, each N x M.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRealization {
    pub delta: Vec<Vec<CMat>>,
}

impl ErrorRealization {
    pub fn zeros(k: usize, n: usize, m: usize) -> Self {
        Self {
            delta: vec![vec![CMat::zeros(n, m); k]; k],
        }
    }
}

fn complex_gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize, variance: f64) -> CMat {
    let s = (variance / 2.0).sqrt();
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        c(s * re, s * im)
    })
}

/// Rayleigh flat fading: i.i.d. `CN(0, sigma_h2)` entries on every link.
pub fn generate_channels(cfg: &SystemConfig, seed: u64) -> ChannelSet {
    let h = (0..cfg.k)
        .map(|i| {
            (0..cfg.k)
                .map(|j| {
                    let mut rng = link_rng(seed, Domain::Channel, i, j);
                    complex_gaussian(&mut rng, cfg.n, cfg.m, cfg.sigma_h2)
                })
                .collect()
        })
        .collect();
    ChannelSet {
        k: cfg.k,
        n: cfg.n,
        m: cfg.m,
        h,
    }
}

/// Draws one error realization.
///
/// Norm-bounded draws are uniform in the ellipsoid: a Gaussian direction is
/// scaled to radius `eps * u^(1/(2MN))` in the `B Δ` coordinates and then
/// mapped back through `B^{-1}`.
pub fn sample_error(cfg: &SystemConfig, model: &ErrorModel, seed: u64) -> Result<ErrorRealization> {
    model.validate(cfg.k, cfg.n)?;
    let (k, n, m) = (cfg.k, cfg.n, cfg.m);
    let mut delta = vec![Vec::with_capacity(k); k];
    for (i, row) in delta.iter_mut().enumerate() {
        for j in 0..k {
            let mut rng = link_rng(seed, Domain::Error, i, j);
            let d = match model {
                ErrorModel::Stochastic { sigma_delta2 } => complex_gaussian(&mut rng, n, m, *sigma_delta2),
                ErrorModel::NormBounded(nb) => {
                    let eps = nb.radius[i][j];
                    let g = complex_gaussian(&mut rng, n, m, 1.0);
                    let u: f64 = 1.0 - rng.random::<f64>();
                    let norm = frob2(&g).sqrt();
                    if eps == 0.0 || norm == 0.0 {
                        CMat::zeros(n, m)
                    } else {
                        let r = eps * u.powf(1.0 / (2 * m * n) as f64);
                        let shaped = g * c(r / norm, 0.0);
                        let b_inv = inv_hpd(&nb.shaping[i][j]).ok_or(Error::SingularShaping { i, j })?;
                        b_inv * shaped
                    }
                }
            };
            row.push(d);
        }
    }
    Ok(ErrorRealization { delta })
}

/// `H_ij = Ĥ_ij + Δ_ij`.
pub fn compose(estimate: &ChannelSet, delta: &ErrorRealization) -> Result<ChannelSet> {
    let k = estimate.k;
    if delta.delta.len() != k || delta.delta.iter().any(|r| r.len() != k) {
        return Err(Error::DimensionMismatch {
            context: "compose",
            expected: format!("{k}x{k} error matrices"),
            actual: format!("{} rows", delta.delta.len()),
        });
    }
    let mut h = estimate.h.clone();
    for i in 0..k {
        for j in 0..k {
            let d = &delta.delta[i][j];
            if d.shape() != (estimate.n, estimate.m) {
                return Err(Error::DimensionMismatch {
                    context: "compose",
                    expected: format!("{}x{}", estimate.n, estimate.m),
                    actual: format!("{}x{}", d.nrows(), d.ncols()),
                });
            }
            h[i][j] += d;
        }
    }
    Ok(ChannelSet { h, ..*estimate })
}
