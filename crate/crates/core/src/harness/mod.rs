//! Monte-Carlo sweeps over the CSI error level.
//!
//! An [`ExperimentSpec`] fixes the network, the swept error parameter, the
//! antenna counts and the number of trials. Every `(sweep value, M, trial)`
//! cell draws fresh channel estimates, runs one design and yields one CSV
//! row; per-`(sweep value, M)` means follow the trial rows.
//!
//! Trial `t` uses the seed `splitmix64(seed ^ t)` for every sweep value and
//! antenna count, so neighbouring sweep points see the same random numbers
//! and the output does not depend on the number of worker threads.
//!
//! # Spec format
//!
//! ```json
//! {
//!   "base": { "k": 3, "d": 1, "sigma2": 1.0, "p_max_dbw": 0.0,
//!             "p_cir_dbw": -5.0, "rho": 2.631578947, "sigma_h2": 1.0 },
//!   "sweep": { "variable": "sigma_delta2", "values": [0.0, 0.1, 0.2] },
//!   "antennas": [4, 6],
//!   "trials": 20,
//!   "seed": 1,
//!   "solver": "statistical",
//!   "output": "sweep.csv"
//! }
//! ```
//!
//! `base.alpha` (rate weights, default all ones) and `base.n` (receive
//! antennas, default equal to `M`) are optional. The statistical solver sweeps
//! `sigma_delta2`; the worst-case solver sweeps `eps`, the radius of a
//! spherical uncertainty ball on every link.

mod checks;

pub use checks::{run_checks, CheckResult};

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{compose, generate_channels, sample_error, ErrorModel, NormBounded, SystemConfig};
use crate::error::{Error, Result};
use crate::metrics::gee_optimal_receivers;
use crate::rng::trial_seed;
use crate::stat_robust::{run_statistical, StatisticalOptions};
use crate::worstcase::{run_worstcase, WorstCaseOptions};

/// First line of every CSV file written by [`SweepResult::write_csv`].
pub const SCHEMA_LINE: &str = "# schema: gee-precoder-sweep/1";

pub fn dbw_to_watts(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

/// Network parameters of a sweep, with powers in dBW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseConfig {
    pub k: usize,
    pub d: usize,
    /// Receive antennas; equal to the transmit count when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub sigma2: f64,
    pub p_max_dbw: f64,
    pub p_cir_dbw: f64,
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default = "unit")]
    pub sigma_h2: f64,
}

fn unit() -> f64 {
    1.0
}

impl BaseConfig {
    /// The network with `m` transmit antennas, powers converted to watts.
    pub fn system(&self, m: usize) -> SystemConfig {
        SystemConfig {
            k: self.k,
            m,
            n: self.n.unwrap_or(m),
            d: self.d,
            sigma2: self.sigma2,
            p_max: dbw_to_watts(self.p_max_dbw),
            p_cir: dbw_to_watts(self.p_cir_dbw),
            rho: self.rho,
            alpha: self.alpha.clone().unwrap_or_else(|| vec![1.0; self.k]),
            sigma_h2: self.sigma_h2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Variance of the Gaussian CSI error.
    SigmaDelta2,
    /// Radius of the uncertainty ball.
    Eps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Statistical,
    Worstcase,
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "statistical" => Ok(Self::Statistical),
            "worstcase" => Ok(Self::Worstcase),
            other => Err(Error::InvalidSpec(format!("unknown solver {other:?}; expected statistical or worstcase"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub base: BaseConfig,
    pub sweep: Sweep,
    pub antennas: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub solver: SolverKind,
    pub output: PathBuf,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.antennas.is_empty() {
            return bad("antennas must list at least one M".into());
        }
        if self.sweep.values.is_empty() {
            return bad("sweep values must not be empty".into());
        }
        if self.sweep.values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return bad("sweep values must be finite and non-negative".into());
        }
        if self.sweep.values.windows(2).any(|w| w[0] > w[1]) {
            return bad("sweep values must be sorted ascending".into());
        }
        let expected = match self.solver {
            SolverKind::Statistical => SweepVariable::SigmaDelta2,
            SolverKind::Worstcase => SweepVariable::Eps,
        };
        if self.sweep.variable != expected {
            return bad(format!("solver {:?} sweeps {:?}, not {:?}", self.solver, expected, self.sweep.variable));
        }
        for &m in &self.antennas {
            self.base.system(m).validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Trial,
    Mean,
}

/// One CSV row. Mean rows leave `trial` empty and average over the trials
/// that succeeded; their status is `ok` or `partial`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: RowKind,
    pub sweep_value: f64,
    pub m: usize,
    pub trial: Option<usize>,
    pub status: String,
    /// GEE of the guaranteed rates the design optimizes.
    pub gee: f64,
    /// GEE of the design on the channel estimate with MMSE receivers.
    pub nominal_gee: f64,
    /// GEE of the design on one sampled true channel with MMSE receivers.
    pub realized_gee: f64,
    pub rates: Vec<f64>,
    pub total_power: f64,
    /// Inner iterations: minorize-maximize steps or alternating sweeps.
    pub iterations: f64,
    pub wallclock_ms: f64,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub k: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.kind == RowKind::Trial && !r.is_ok()).count()
    }

    pub fn means(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.kind == RowKind::Mean)
    }

    /// Mean row for one sweep point.
    pub fn mean(&self, sweep_value: f64, m: usize) -> Option<&SweepRow> {
        self.means().find(|r| r.sweep_value == sweep_value && r.m == m)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{SCHEMA_LINE}")?;
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["kind", "sweep_value", "M", "trial", "status", "gee", "nominal_gee", "realized_gee"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((1..=self.k).map(|i| format!("rate_{i}")));
        header.extend(["total_power", "iterations", "wallclock_ms"].iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for r in &self.rows {
            let kind = match r.kind {
                RowKind::Trial => "trial",
                RowKind::Mean => "mean",
            };
            let mut rec = vec![
                kind.to_string(),
                r.sweep_value.to_string(),
                r.m.to_string(),
                r.trial.map(|t| t.to_string()).unwrap_or_default(),
                r.status.clone(),
                r.gee.to_string(),
                r.nominal_gee.to_string(),
                r.realized_gee.to_string(),
            ];
            rec.extend((0..self.k).map(|i| r.rates.get(i).map(|x| x.to_string()).unwrap_or_default()));
            rec.push(r.total_power.to_string());
            rec.push(r.iterations.to_string());
            rec.push(r.wallclock_ms.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

struct Design {
    gee: f64,
    nominal: f64,
    realized: f64,
    rates: Vec<f64>,
    power: f64,
    iterations: usize,
}

fn design(spec: &ExperimentSpec, cfg: &SystemConfig, value: f64, seed: u64) -> Result<Design> {
    let estimates = generate_channels(cfg, seed);
    let (precoders, report, model) = match spec.solver {
        SolverKind::Statistical => {
            let opts = StatisticalOptions {
                seed,
                ..StatisticalOptions::default()
            };
            let out = run_statistical(&estimates, cfg, value, &opts)?;
            (out.precoders, out.report, ErrorModel::Stochastic { sigma_delta2: value })
        }
        SolverKind::Worstcase => {
            let ball = NormBounded::spherical(cfg.k, cfg.n, value);
            let out = run_worstcase(&estimates, cfg, &ball, &WorstCaseOptions::default())?;
            (out.precoders, out.report, ErrorModel::NormBounded(ball))
        }
    };
    let nominal = gee_optimal_receivers(&estimates, &precoders, cfg)?;
    let actual = compose(&estimates, &sample_error(cfg, &model, seed)?)?;
    let realized = gee_optimal_receivers(&actual, &precoders, cfg)?;
    Ok(Design {
        gee: report.gee,
        nominal: nominal.gee,
        realized: realized.gee,
        rates: report.rates,
        power: report.total_power,
        iterations: report.inner_iterations,
    })
}

/// Runs one cell of the sweep. Failures are reported in the row's status.
pub fn run_trial(spec: &ExperimentSpec, sweep_value: f64, m: usize, trial: usize) -> SweepRow {
    let cfg = spec.base.system(m);
    let clock = Instant::now();
    let outcome = design(spec, &cfg, sweep_value, trial_seed(spec.seed, trial as u64));
    let wallclock_ms = clock.elapsed().as_secs_f64() * 1e3;
    let mut row = SweepRow {
        kind: RowKind::Trial,
        sweep_value,
        m,
        trial: Some(trial),
        status: "ok".into(),
        gee: f64::NAN,
        nominal_gee: f64::NAN,
        realized_gee: f64::NAN,
        rates: vec![f64::NAN; cfg.k],
        total_power: f64::NAN,
        iterations: f64::NAN,
        wallclock_ms,
    };
    match outcome {
        Ok(d) => {
            row.gee = d.gee;
            row.nominal_gee = d.nominal;
            row.realized_gee = d.realized;
            row.rates = d.rates;
            row.total_power = d.power;
            row.iterations = d.iterations as f64;
        }
        Err(e) => {
            log::warn!("trial {trial} at {sweep_value} with M = {m} failed: {e}");
            row.status = format!("error: {e}");
        }
    }
    row
}

fn mean_row(rows: &[SweepRow], k: usize) -> SweepRow {
    let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.is_ok()).collect();
    let avg = |f: &dyn Fn(&SweepRow) -> f64| {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
        }
    };
    SweepRow {
        kind: RowKind::Mean,
        sweep_value: rows[0].sweep_value,
        m: rows[0].m,
        trial: None,
        status: if ok.len() == rows.len() { "ok".into() } else { "partial".into() },
        gee: avg(&|r| r.gee),
        nominal_gee: avg(&|r| r.nominal_gee),
        realized_gee: avg(&|r| r.realized_gee),
        rates: (0..k).map(|i| avg(&|r| r.rates[i])).collect(),
        total_power: avg(&|r| r.total_power),
        iterations: avg(&|r| r.iterations),
        wallclock_ms: avg(&|r| r.wallclock_ms),
    }
}

/// Runs every cell of the sweep. Rows come out ordered by sweep value, then
/// `M`, then trial, with each group followed by its mean row.
pub fn run_sweep(spec: &ExperimentSpec, opts: &RunOptions) -> Result<SweepResult> {
    spec.validate()?;
    let cells: Vec<(f64, usize, usize)> = spec
        .sweep
        .values
        .iter()
        .flat_map(|&v| spec.antennas.iter().flat_map(move |&m| (0..spec.trials).map(move |t| (v, m, t))))
        .collect();
    let work = || -> Vec<SweepRow> { cells.par_iter().map(|&(v, m, t)| run_trial(spec, v, m, t)).collect() };
    let trial_rows = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidSpec(format!("cannot start {n} worker threads: {e}")))?
            .install(work),
        None => work(),
    };
    let mut rows = Vec::with_capacity(trial_rows.len() + trial_rows.len() / spec.trials);
    for group in trial_rows.chunks(spec.trials) {
        rows.extend_from_slice(group);
        rows.push(mean_row(group, spec.base.k));
    }
    Ok(SweepResult { k: spec.base.k, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(solver: &str, variable: &str, values: &str, trials: usize) -> ExperimentSpec {
        ExperimentSpec::from_json(&format!(
            r#"{{
                "base": {{ "k": 2, "d": 1, "sigma2": 1.0, "p_max_dbw": 0.0, "p_cir_dbw": -5.0, "rho": 2.631578947368421 }},
                "sweep": {{ "variable": "{variable}", "values": {values} }},
                "antennas": [2, 3],
                "trials": {trials},
                "seed": 9,
                "solver": "{solver}",
                "output": "out.csv"
            }}"#
        ))
        .unwrap()
    }

    /// CSV text with the wallclock column blanked.
    fn without_wallclock(csv: &str) -> String {
        csv.lines()
            .map(|l| match l.rfind(',') {
                Some(p) if !l.starts_with('#') => &l[..p],
                _ => l,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn dbw_examples() {
        assert_eq!(dbw_to_watts(0.0), 1.0);
        assert!((dbw_to_watts(-5.0) - 0.31623).abs() < 1e-5);
        assert!((dbw_to_watts(10.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn base_converts_to_watts() {
        let s = spec("statistical", "sigma_delta2", "[0.0]", 1);
        let cfg = s.base.system(4);
        assert_eq!((cfg.m, cfg.n), (4, 4));
        assert_eq!(cfg.p_max, 1.0);
        assert!((cfg.p_cir - 10f64.powf(-0.5)).abs() < 1e-15);
        assert_eq!(cfg.alpha, vec![1.0, 1.0]);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let good = spec("statistical", "sigma_delta2", "[0.0, 0.1]", 1);
        let mut s = good.clone();
        s.trials = 0;
        assert!(s.validate().is_err());
        let mut s = good.clone();
        s.sweep.values = vec![0.2, 0.1];
        assert!(s.validate().is_err());
        let mut s = good.clone();
        s.sweep.values = vec![-0.1];
        assert!(s.validate().is_err());
        let mut s = good.clone();
        s.solver = SolverKind::Worstcase;
        assert!(s.validate().is_err());
        let mut s = good;
        s.base.d = 5;
        assert!(s.validate().is_err());
        assert!(ExperimentSpec::from_json(r#"{"base": {}}"#).is_err());
    }

    #[test]
    fn one_trial_one_value_gives_two_rows_per_m() {
        let s = spec("statistical", "sigma_delta2", "[0.0]", 1);
        let out = run_sweep(&s, &RunOptions::default()).unwrap();
        assert_eq!(out.rows.len(), 4);
        for m in [2, 3] {
            assert_eq!(out.rows.iter().filter(|r| r.m == m && r.kind == RowKind::Trial).count(), 1);
            assert_eq!(out.rows.iter().filter(|r| r.m == m && r.kind == RowKind::Mean).count(), 1);
        }
        assert_eq!(out.failures(), 0);
        let csv = out.to_csv_string().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(SCHEMA_LINE));
        assert_eq!(
            lines.next(),
            Some("kind,sweep_value,M,trial,status,gee,nominal_gee,realized_gee,rate_1,rate_2,total_power,iterations,wallclock_ms")
        );
        assert_eq!(lines.count(), 4);
    }

    #[test]
    fn reruns_are_identical_and_thread_count_does_not_matter() {
        let s = spec("statistical", "sigma_delta2", "[0.0, 0.1]", 3);
        let a = run_sweep(&s, &RunOptions { threads: Some(1) }).unwrap().to_csv_string().unwrap();
        let b = run_sweep(&s, &RunOptions { threads: Some(3) }).unwrap().to_csv_string().unwrap();
        assert_eq!(without_wallclock(&a), without_wallclock(&b));
    }

    #[test]
    fn worstcase_sweep_runs() {
        let mut s = spec("worstcase", "eps", "[0.0, 0.2]", 1);
        s.antennas = vec![2];
        let out = run_sweep(&s, &RunOptions::default()).unwrap();
        assert_eq!(out.failures(), 0);
        let (lo, hi) = (out.mean(0.0, 2).unwrap(), out.mean(0.2, 2).unwrap());
        assert!(hi.gee <= lo.gee + 1e-9);
        // The bound holds for the sampled channel inside the ball.
        assert!(hi.realized_gee >= hi.gee - 1e-9);
    }

    fn trial_row(trial: usize, status: &str, value: f64) -> SweepRow {
        SweepRow {
            kind: RowKind::Trial,
            sweep_value: 0.0,
            m: 2,
            trial: Some(trial),
            status: status.into(),
            gee: value,
            nominal_gee: value,
            realized_gee: value,
            rates: vec![value],
            total_power: value,
            iterations: value,
            wallclock_ms: 1.0,
        }
    }

    #[test]
    fn failed_trials_are_recorded() {
        let rows = vec![trial_row(0, "ok", 1.0), trial_row(1, "error: numerical failure", f64::NAN)];
        let mean = mean_row(&rows, 1);
        assert_eq!(mean.status, "partial");
        assert_eq!(mean.gee, 1.0);
        let result = SweepResult { k: 1, rows };
        assert_eq!(result.failures(), 1);
    }

    #[test]
    fn check_suite_passes() {
        for check in run_checks(1) {
            assert!(check.passed, "{}: {}", check.name, check.detail);
        }
    }
}
