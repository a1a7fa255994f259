//! Self-check suite on a tiny instance, run by `gee-precoder check`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::channel::{compose, generate_channels, sample_error, ErrorModel, NormBounded, SystemConfig};
use crate::error::Result;
use crate::linalg::{c, log2_det_hpd, trace_re, vnorm2, CMat};
use crate::metrics::{gee_optimal_receivers, mmse_decoders, mse_matrix, optimal_rate, user_rate, DecoderSet, PrecoderSet};
use crate::sdp::{solve_sdp, LmiConstraint, SdpOptions, SdpProblem, Sense};
use crate::stat_robust::{build_surrogate, run_statistical, solve_qcqp, subtractive_objective, StatisticalOptions};
use crate::worstcase::{assemble_error_terms, initial_factors, run_worstcase, worstcase_rates, WeightSet, WorstCaseOptions};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Largest observed deviation, or the compared values.
    pub detail: String,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        c(re, im)
    })
}

fn tiny() -> SystemConfig {
    SystemConfig::symmetric(2, 2, 2, 1)
}

fn bounded(name: &'static str, worst: f64, tol: f64) -> CheckResult {
    CheckResult {
        name,
        passed: worst <= tol,
        detail: format!("max deviation {worst:.3e} (tolerance {tol:.0e})"),
    }
}

fn random_precoders(rng: &mut ChaCha8Rng, cfg: &SystemConfig) -> PrecoderSet {
    PrecoderSet {
        v: (0..cfg.k).map(|_| gaussian(rng, cfg.m, cfg.d) * c(0.5, 0.0)).collect(),
    }
}

fn wmmse_identity(seed: u64) -> Result<CheckResult> {
    let cfg = tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for t in 0..10 {
        let est = generate_channels(&cfg, seed + t);
        let v = random_precoders(&mut rng, &cfg);
        let u = mmse_decoders(&est, &v, &cfg)?;
        for k in 0..cfg.k {
            let rate = user_rate(&est, &v, &u, &cfg, k)?;
            let mse = log2_det_hpd(&mse_matrix(&est, &v, &u, &cfg, k)).unwrap_or(f64::NAN);
            worst = worst.max((rate + mse).abs());
        }
    }
    Ok(bounded("rate equals -log2 det MSE under MMSE receivers", worst, 1e-8))
}

fn qcqp_kkt(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let a = gaussian(&mut rng, 3, 3);
        let psi = &a * a.adjoint();
        let b = gaussian(&mut rng, 3, 1).column(0).into_owned();
        let (eta, rho, p) = (0.2, 2.0, 0.5);
        let sol = solve_qcqp(&psi, &b, eta, rho, p)?;
        let grad = &psi * &sol.x + &sol.x * c(eta * rho + sol.lambda, 0.0) + &b;
        let slack = p - vnorm2(&sol.x);
        worst = worst.max(grad.norm()).max((-slack).max(0.0)).max((sol.lambda * slack).abs());
    }
    Ok(bounded("closed-form QCQP satisfies KKT", worst, 1e-8))
}

fn tangency(seed: u64) -> Result<CheckResult> {
    let cfg = tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for t in 0..10 {
        let est = generate_channels(&cfg, seed + t);
        let v = random_precoders(&mut rng, &cfg);
        let sur = build_surrogate(&est, &v, &cfg, 0.1)?;
        let eta = 0.5;
        let exact = subtractive_objective(&est, &v, &cfg, 0.1, eta)?;
        worst = worst.max((sur.value(&v, eta, &cfg) - exact).abs());
    }
    Ok(bounded("surrogate touches the objective at its expansion point", worst, 1e-8))
}

fn dinkelbach(seed: u64) -> Result<CheckResult> {
    let cfg = tiny();
    let est = generate_channels(&cfg, seed);
    let out = run_statistical(&est, &cfg, 0.05, &StatisticalOptions::default())?;
    let drop = out.fractional.etas.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    let residual = out.fractional.final_residual().abs();
    Ok(CheckResult {
        name: "Dinkelbach ratio is non-decreasing and converges",
        passed: drop <= 1e-6 && residual <= 1e-6,
        detail: format!("largest decrease {drop:.3e}, final residual {residual:.3e}"),
    })
}

fn trace_identity(seed: u64) -> Result<CheckResult> {
    let cfg = tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for t in 0..10 {
        let est = generate_channels(&cfg, seed + t);
        let v = random_precoders(&mut rng, &cfg);
        let u = DecoderSet {
            u: (0..cfg.k).map(|_| gaussian(&mut rng, cfg.n, cfg.d)).collect(),
        };
        let g = WeightSet {
            g: (0..cfg.k).map(|_| gaussian(&mut rng, cfg.d, cfg.d)).collect(),
        };
        let delta = sample_error(&cfg, &ErrorModel::Stochastic { sigma_delta2: 0.2 }, seed + t)?;
        let actual = compose(&est, &delta)?;
        let terms = assemble_error_terms(&est, &v, &u, &g, &cfg)?;
        for i in 0..cfg.k {
            let lhs = trace_re(&(g.weight(i) * mse_matrix(&actual, &v, &u, &cfg, i)));
            let rhs: f64 = (0..cfg.k).map(|j| vnorm2(&terms.residual(i, j, &delta.delta[i][j]))).sum();
            worst = worst.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
        }
    }
    Ok(bounded("weighted MSE splits into per-link residuals", worst, 1e-10))
}

fn worst_case_is_a_bound(seed: u64) -> Result<CheckResult> {
    let cfg = tiny();
    let est = generate_channels(&cfg, seed);
    let ball = NormBounded::spherical(cfg.k, cfg.n, 0.3);
    let (v, u, g) = initial_factors(&est, &cfg)?;
    let bound = worstcase_rates(&est, &v, &u, &g, &ball, &cfg)?;
    let model = ErrorModel::NormBounded(ball);
    let mut worst = f64::NEG_INFINITY;
    for t in 0..50 {
        let actual = compose(&est, &sample_error(&cfg, &model, seed + t)?)?;
        for (k, b) in bound.iter().enumerate() {
            worst = worst.max(b - optimal_rate(&actual, &v, &cfg, k)?);
        }
    }
    Ok(CheckResult {
        name: "worst-case rate bound holds for sampled errors",
        passed: worst <= 1e-9,
        detail: format!("largest bound minus rate {worst:.3e}"),
    })
}

fn zero_uncertainty(seed: u64) -> Result<CheckResult> {
    let cfg = tiny();
    let est = generate_channels(&cfg, seed);
    let stat = run_statistical(&est, &cfg, 0.0, &StatisticalOptions::default())?;
    let wc = run_worstcase(&est, &cfg, &NormBounded::spherical(cfg.k, cfg.n, 0.0), &WorstCaseOptions::default())?;
    let gap = (stat.report.gee - wc.report.gee).abs();
    let nominal = gee_optimal_receivers(&est, &wc.precoders, &cfg)?.gee;
    Ok(CheckResult {
        name: "both designs agree without uncertainty",
        passed: gap <= 1e-3 && nominal >= wc.report.gee - 1e-9,
        detail: format!("statistical {:.6}, worst-case {:.6}", stat.report.gee, wc.report.gee),
    })
}

fn sdp_psd_test() -> Result<CheckResult> {
    let mut p = SdpProblem::new(Sense::Minimize);
    let x = p.add_scalar("x");
    p.set_cost(x, 1.0);
    p.add_constraint(LmiConstraint::from_affine_fn("m", 1, &[x], |v| {
        CMat::from_fn(2, 2, |i, j| if i == j { c(v[0], 0.0) } else { c(1.0, 0.0) })
    })?);
    let sol = solve_sdp(&p, &SdpOptions::default())?;
    Ok(bounded("SDP solver finds x* = 1 in [[x, 1], [1, x]] >= 0", (sol.x[0] - 1.0).abs(), 1e-5))
}

/// Runs every check; errors inside a check count as failures.
pub fn run_checks(seed: u64) -> Vec<CheckResult> {
    let checks: Vec<(&'static str, Box<dyn Fn() -> Result<CheckResult>>)> = vec![
        ("wmmse", Box::new(move || wmmse_identity(seed))),
        ("qcqp", Box::new(move || qcqp_kkt(seed))),
        ("tangency", Box::new(move || tangency(seed))),
        ("dinkelbach", Box::new(move || dinkelbach(seed))),
        ("trace", Box::new(move || trace_identity(seed))),
        ("bound", Box::new(move || worst_case_is_a_bound(seed))),
        ("consistency", Box::new(move || zero_uncertainty(seed))),
        ("sdp", Box::new(sdp_psd_test)),
    ];
    checks
        .into_iter()
        .map(|(name, f)| {
            f().unwrap_or_else(|e| CheckResult {
                name,
                passed: false,
                detail: format!("error: {e}"),
            })
        })
        .collect()
}
