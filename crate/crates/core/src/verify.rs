//! Closed forms checked against brute-force optimizers on seeded inputs.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::multiscorer::aggregate_values;
use crate::oracle::{self, OracleBudget, CHI2_ORACLE_CAP, KL_ORACLE_CAP};
use crate::risk;
use crate::rng::trial_stream;

const SCORER_ORACLE_CAP: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Random cases for the KL, chi-square and scorer suites.
    pub cases: usize,
    /// Random cases for the lambda-rho suite.
    pub mapping_cases: usize,
    /// Largest sample size drawn; sizes above an oracle's cap are skipped.
    pub max_n: usize,
    pub budget: OracleBudget,
    /// Flip the sign of the KL closed form to check that failures surface.
    pub inject_fault: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 0,
            cases: 1000,
            mapping_cases: 100,
            max_n: 6,
            budget: OracleBudget::default(),
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub tolerance: f64,
    pub cases: usize,
    pub passed: usize,
    pub skipped: usize,
    pub max_error: f64,
    /// Up to ten failing cases, described.
    pub failures: Vec<String>,
    pub notes: Vec<String>,
}

impl SuiteReport {
    pub fn ok(&self) -> bool {
        self.passed + self.skipped == self.cases
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suites: Vec<SuiteReport>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.suites.iter().all(SuiteReport::ok)
    }
}

enum Outcome {
    Pass(f64),
    Fail(f64, String),
    Skip,
}

fn collect(suite: &str, tolerance: f64, outcomes: Vec<Outcome>, notes: Vec<String>) -> SuiteReport {
    let mut r = SuiteReport {
        suite: suite.to_string(),
        tolerance,
        cases: outcomes.len(),
        passed: 0,
        skipped: 0,
        max_error: 0.0,
        failures: Vec::new(),
        notes,
    };
    for o in outcomes {
        match o {
            Outcome::Pass(e) => {
                r.passed += 1;
                r.max_error = r.max_error.max(e);
            }
            Outcome::Fail(e, why) => {
                r.max_error = r.max_error.max(e);
                if r.failures.len() < 10 {
                    r.failures.push(why);
                }
            }
            Outcome::Skip => r.skipped += 1,
        }
    }
    r
}

fn draw_values<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-10.0..=10.0)).collect()
}

fn judge(err: f64, tol: f64, describe: impl FnOnce() -> String) -> Outcome {
    if err <= tol {
        Outcome::Pass(err)
    } else {
        Outcome::Fail(err, describe())
    }
}

const KL_BETAS: [f64; 3] = [0.1, 1.0, 5.0];

/// Entropic value against the KL-penalized worst case.
pub fn kl_suite(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let tol = 1e-6;
    let outcomes = (0..cfg.cases)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_stream(cfg.seed, i as u64);
            let n = rng.random_range(1..=cfg.max_n.max(1));
            if n > KL_ORACLE_CAP {
                return Ok(Outcome::Skip);
            }
            let values = draw_values(&mut rng, n);
            let beta = KL_BETAS[i % KL_BETAS.len()];
            let mut closed = risk::entropic_value(&values, beta)?;
            if cfg.inject_fault {
                closed = -closed;
            }
            let oracle = oracle::kl_dro_oracle(&values, beta, cfg.budget)?;
            let err = (closed - oracle.value).abs();
            Ok(judge(err, tol, || {
                format!("values={values:?} beta={beta}: closed {closed} vs oracle {}", oracle.value)
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut notes = Vec::new();
    if cfg.max_n > KL_ORACLE_CAP {
        notes.push(format!("sample sizes above {KL_ORACLE_CAP} skipped"));
    }
    if cfg.inject_fault {
        notes.push("fault injected: closed form negated".to_string());
    }
    Ok(collect("kl-dro", tol, outcomes, notes))
}

/// Chi-square robust mean against exact support enumeration. Tight cases
/// must agree; otherwise the closed form must not exceed the oracle.
pub fn chi2_suite(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let tol = 1e-6;
    let mut outcomes = Vec::with_capacity(cfg.cases + 1);
    // Anchor: two points, rho = 1/4.
    let anchor = risk::chi2_robust_mean(&[0.0, 1.0], 0.25)?;
    let anchor_oracle = oracle::chi2_dro_oracle(&[0.0, 1.0], 0.25)?;
    let err = (anchor.value - 0.25).abs().max((anchor_oracle.value - 0.25).abs());
    outcomes.push(judge(err, tol, || {
        format!("anchor [0,1] rho=0.25: closed {} oracle {}", anchor.value, anchor_oracle.value)
    }));
    let random = (0..cfg.cases)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_stream(cfg.seed ^ 0x6368_6932, i as u64);
            let n = rng.random_range(2..=cfg.max_n.max(2));
            if n > CHI2_ORACLE_CAP {
                return Ok(Outcome::Skip);
            }
            let values = draw_values(&mut rng, n);
            let rho = rng.random_range(0.0..2.0);
            let closed = risk::chi2_robust_mean(&values, rho)?;
            let oracle = oracle::chi2_dro_oracle(&values, rho)?;
            let describe = || format!("values={values:?} rho={rho}: closed {} oracle {}", closed.value, oracle.value);
            if closed.tight {
                Ok(judge((closed.value - oracle.value).abs(), tol, describe))
            } else {
                let excess = (closed.value - oracle.value).max(0.0);
                Ok(judge(excess, tol, describe))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    outcomes.extend(random);
    let mut notes = Vec::new();
    if cfg.max_n > CHI2_ORACLE_CAP {
        notes.push(format!("sample sizes above {CHI2_ORACLE_CAP} skipped"));
    }
    Ok(collect("chi2-dro", tol, outcomes, notes))
}

/// In the tight regime the chi-square robust mean at `rho(lambda)` equals
/// the mean-dispersion score `mean - lambda * std`.
pub fn lambda_rho_suite(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let tol = 1e-12;
    let outcomes = (0..cfg.mapping_cases)
        .map(|i| {
            let mut rng = trial_stream(cfg.seed ^ 0x6c72, i as u64);
            let n = rng.random_range(2..=12usize);
            let mut values = draw_values(&mut rng, n);
            if values.iter().all(|&v| v == values[0]) {
                values[0] += 1.0;
            }
            let stats = risk::sample_stats(&values)?;
            let top = values.iter().map(|v| v - stats.mean).fold(f64::NEG_INFINITY, f64::max);
            // Largest lambda keeping every extremal weight non-negative.
            let lambda_max = stats.var_uncentered.sqrt() / top / (n as f64 / (n as f64 - 1.0)).sqrt();
            let lambda = rng.random_range(0.0..1.0) * lambda_max;
            let rho = risk::rho_from_lambda(lambda, n)?;
            let bound = risk::chi2_robust_mean(&values, rho)?;
            let target = stats.mean - lambda * stats.std;
            let err = (bound.value - target).abs();
            if !bound.tight {
                return Ok(Outcome::Fail(err, format!("values={values:?} lambda={lambda}: not tight")));
            }
            Ok(judge(err, tol, || {
                format!("values={values:?} lambda={lambda}: {} vs {target}", bound.value)
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(collect("lambda-rho", tol, outcomes, Vec::new()))
}

/// Soft worst case over scorers against its KL program, plus the sandwich
/// and monotonicity in gamma.
pub fn scorer_suite(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let tol = 1e-6;
    let order_tol = 1e-9;
    let outcomes = (0..cfg.cases)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_stream(cfg.seed ^ 0x7363_6f72, i as u64);
            let m = rng.random_range(1..=SCORER_ORACLE_CAP);
            let v = draw_values(&mut rng, m);
            let g1 = 10f64.powf(rng.random_range(-1.0..1.0));
            let g2 = g1 * (1.0 + rng.random_range(0.01..4.0));
            let a1 = aggregate_values(&v, g1)?;
            let a2 = aggregate_values(&v, g2)?;
            let oracle = oracle::scorer_dro_oracle(&v, g1, cfg.budget)?;
            let min = v.iter().copied().fold(f64::INFINITY, f64::min);
            let mean = v.iter().sum::<f64>() / m as f64;
            let order_violation = [min - a2, a2 - a1, a1 - mean].into_iter().fold(0.0f64, f64::max);
            if order_violation > order_tol {
                return Ok(Outcome::Fail(
                    order_violation,
                    format!("v={v:?} gammas=({g1},{g2}): ordering min<=agg2<=agg1<=mean violated"),
                ));
            }
            let err = (a1 - oracle.value).abs();
            Ok(judge(err, tol, || format!("v={v:?} gamma={g1}: closed {a1} vs oracle {}", oracle.value)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(collect("scorer-dro", tol, outcomes, Vec::new()))
}

pub fn run_verification(cfg: &VerifyConfig) -> Result<VerifyReport> {
    Ok(VerifyReport {
        suites: vec![kl_suite(cfg)?, chi2_suite(cfg)?, lambda_rho_suite(cfg)?, scorer_suite(cfg)?],
    })
}
