//! Grid search over decoder knobs on a development corpus.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SplitPolicy};
use crate::decoders::{DecoderConfig, Rule};
use crate::error::{Error, Result};
use crate::metrics::{self, EvalConfig, EvalOptions, RiskView};
use crate::pipeline::{self, SelectPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    #[default]
    Tradeoff,
    Cvar10,
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tradeoff" => Ok(Objective::Tradeoff),
            "cvar10" => Ok(Objective::Cvar10),
            _ => Err(Error::Config(format!("objective `{s}` is not tradeoff or cvar10"))),
        }
    }
}

/// Candidate values per knob. Only the knobs the rule reads are swept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationGrid {
    pub betas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub tau_quantiles: Vec<f64>,
    pub lambdas: Vec<f64>,
}

impl Default for CalibrationGrid {
    fn default() -> Self {
        CalibrationGrid {
            betas: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            epsilons: vec![0.0, 0.1, 0.25, 0.5, 1.0],
            tau_quantiles: vec![0.1, 0.25, 0.5, 0.75],
            lambdas: vec![0.0, 0.5, 1.0, 2.0, 5.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub epsilon: Option<f64>,
    pub tau_quantile: Option<f64>,
    pub lambda: Option<f64>,
    pub tradeoff: f64,
    pub cvar10: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub rule: Rule,
    pub objective: Objective,
    pub best: SweepRow,
    pub sweep: Vec<SweepRow>,
}

fn sorted(values: &[f64], name: &'static str) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Config(format!("calibration grid for {name} is empty")));
    }
    if let Some(&v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::param(name, v, "grid values must be finite"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

/// Sweep the knobs of `template.rule` and return the best point. Points are
/// visited in ascending knob order and only a strictly better objective
/// replaces the incumbent, so ties resolve to the smallest knob values.
pub fn calibrate(
    corpus: &Corpus,
    template: &DecoderConfig,
    scorer: Option<&str>,
    grid: &CalibrationGrid,
    eval: &EvalConfig,
    split: SplitPolicy,
    objective: Objective,
) -> Result<CalibrationResult> {
    let rule = template.rule;
    let betas = sorted(&grid.betas, "beta")?;
    let none = vec![None];
    let wrap = |v: Vec<f64>| v.into_iter().map(Some).collect::<Vec<_>>();
    let epsilons = if rule == Rule::Eps { wrap(sorted(&grid.epsilons, "epsilon")?) } else { none.clone() };
    let taus = if rule == Rule::Tau { wrap(sorted(&grid.tau_quantiles, "tau_quantile")?) } else { none.clone() };
    let lambdas = if rule == Rule::Lambda { wrap(sorted(&grid.lambdas, "lambda")?) } else { none };

    let scorer = match scorer {
        Some(s) => s.to_string(),
        None => match corpus.scorer_ids() {
            [only] => only.clone(),
            _ => return Err(Error::Config("calibration on a multi-scorer corpus needs a scorer".into())),
        },
    };
    let opts = EvalOptions {
        config: *eval,
        split,
        risk_view: RiskView::Selection,
        base: None,
    };

    let mut sweep = Vec::new();
    for &beta in &betas {
        for &epsilon in &epsilons {
            for &tau_quantile in &taus {
                for &lambda in &lambdas {
                    let mut cfg = template.clone();
                    cfg.beta = beta;
                    if let Some(e) = epsilon {
                        cfg.epsilon = e;
                    }
                    if let Some(q) = tau_quantile {
                        cfg.tau = None;
                        cfg.tau_quantile = Some(q);
                    }
                    if let Some(l) = lambda {
                        cfg.lambda_pen = Some(l);
                    }
                    let mut plan = SelectPlan::single(vec![cfg]);
                    plan.scorer = Some(scorer.clone());
                    plan.split = Some(split);
                    let results = pipeline::select_corpus(corpus, &plan)?;
                    let report = metrics::evaluate(corpus, &pipeline::group_by_method(&results), &opts)?;
                    let row = report
                        .rows
                        .iter()
                        .find(|r| r.subset == "overall" && r.scorer == scorer)
                        .ok_or_else(|| Error::UnknownScorer(scorer.clone()))?;
                    sweep.push(SweepRow {
                        beta,
                        epsilon,
                        tau_quantile,
                        lambda,
                        tradeoff: row.tradeoff,
                        cvar10: row.cvar10,
                        objective: match objective {
                            Objective::Tradeoff => row.tradeoff,
                            Objective::Cvar10 => row.cvar10,
                        },
                    });
                }
            }
        }
    }
    let best = *sweep
        .iter()
        .fold(None::<&SweepRow>, |best, r| match best {
            Some(b) if r.objective <= b.objective => Some(b),
            _ => Some(r),
        })
        .ok_or_else(|| Error::Config("calibration grid is empty".into()))?;
    Ok(CalibrationResult {
        rule,
        objective,
        best,
        sweep,
    })
}
