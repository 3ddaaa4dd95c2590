//! Single-scorer selection rules over one candidate pool.
//!
//! Every rule maps a pool (under one designated scorer) to exactly one
//! candidate. Ties are broken the same way everywhere: the rule objective
//! first, then, for the near-tie rule only, the larger mean, and finally the
//! lowest candidate index. Stochastic rules draw from a stream keyed by the
//! prompt id, so results never depend on pool order or thread count.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::corpus::CandidatePool;
use crate::error::{Error, Result};
use crate::risk::{self, RiskConfig};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Mean,
    Cvar,
    Entropic,
    Tau,
    Lambda,
    Eps,
    Lcb,
    MeanDispersion,
    McDropout,
    Rbon,
    Bop,
    Caution,
}

impl Rule {
    pub const ALL: [Rule; 12] = [
        Rule::Mean,
        Rule::Cvar,
        Rule::Entropic,
        Rule::Tau,
        Rule::Lambda,
        Rule::Eps,
        Rule::Lcb,
        Rule::MeanDispersion,
        Rule::McDropout,
        Rule::Rbon,
        Rule::Bop,
        Rule::Caution,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Mean => "mean",
            Rule::Cvar => "cvar",
            Rule::Entropic => "entropic",
            Rule::Tau => "tau",
            Rule::Lambda => "lambda",
            Rule::Eps => "eps",
            Rule::Lcb => "lcb",
            Rule::MeanDispersion => "mean-dispersion",
            Rule::McDropout => "mc-dropout",
            Rule::Rbon => "rbon",
            Rule::Bop => "bop",
            Rule::Caution => "caution",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Rule::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown rule `{s}`")))
    }
}

/// Objective ranked inside the risk-premium budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauObjective {
    #[default]
    Entropic,
    Mean,
}

impl FromStr for TauObjective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropic" => Ok(TauObjective::Entropic),
            "mean" => Ok(TauObjective::Mean),
            _ => Err(Error::Config(format!("tau objective `{s}` is not entropic or mean"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub rule: Rule,
    /// Entropic temperature.
    pub beta: f64,
    /// Absolute risk-premium budget; takes precedence over `tau_quantile`.
    pub tau: Option<f64>,
    /// Per-pool quantile of the risk premia used as the budget.
    pub tau_quantile: Option<f64>,
    pub tau_objective: TauObjective,
    pub lambda_pen: Option<f64>,
    /// Near-tie width on the entropic value.
    pub epsilon: f64,
    /// Confidence parameters for the LCB rule and the CVaR level.
    pub risk: RiskConfig,
    pub lambda_md: f64,
    pub alpha_mc: f64,
    pub beta_rbon: f64,
    pub poisson_lambda: f64,
    pub alpha_caution: f64,
    pub seed: u64,
}

impl DecoderConfig {
    /// Configuration for `rule` with the deployment defaults (temperature 1,
    /// quantile budget 0.25, near-tie width 0.25, MC weight 1, RBoN weight
    /// 0.02, Poisson mean 12, caution weight 1, dispersion weight 5).
    pub fn new(rule: Rule) -> Self {
        DecoderConfig {
            rule,
            beta: 1.0,
            tau: None,
            tau_quantile: Some(0.25),
            tau_objective: TauObjective::Entropic,
            lambda_pen: None,
            epsilon: 0.25,
            risk: RiskConfig::default(),
            lambda_md: 5.0,
            alpha_mc: 1.0,
            beta_rbon: 0.02,
            poisson_lambda: 12.0,
            alpha_caution: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let non_negative = |name: &'static str, v: f64| {
            if v >= 0.0 && !v.is_nan() {
                Ok(())
            } else {
                Err(Error::param(name, v, "must be non-negative"))
            }
        };
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::param("beta", self.beta, "must be positive and finite"));
        }
        self.risk_config().validate()?;
        match self.rule {
            Rule::Tau => match (self.tau, self.tau_quantile) {
                (Some(t), _) if t.is_nan() => return Err(Error::param("tau", t, "must be a number")),
                (Some(_), _) => {}
                (None, Some(q)) if q > 0.0 && q < 1.0 => {}
                (None, Some(q)) => return Err(Error::param("tau_quantile", q, "must lie in (0, 1)")),
                (None, None) => return Err(Error::Config("rule tau needs tau or tau_quantile".into())),
            },
            Rule::Lambda => match self.lambda_pen {
                Some(l) => non_negative("lambda_pen", l)?,
                None => return Err(Error::Config("rule lambda needs lambda_pen".into())),
            },
            Rule::Eps => non_negative("epsilon", self.epsilon)?,
            Rule::MeanDispersion => non_negative("lambda_md", self.lambda_md)?,
            Rule::McDropout => non_negative("alpha_mc", self.alpha_mc)?,
            Rule::Rbon => non_negative("beta_rbon", self.beta_rbon)?,
            Rule::Caution => non_negative("alpha_caution", self.alpha_caution)?,
            Rule::Bop => {
                if !(self.poisson_lambda > 0.0 && self.poisson_lambda.is_finite()) {
                    return Err(Error::param("poisson_lambda", self.poisson_lambda, "must be positive"));
                }
            }
            Rule::Mean | Rule::Cvar | Rule::Entropic | Rule::Lcb => {}
        }
        Ok(())
    }

    /// Risk parameters with this decoder's temperature.
    pub fn risk_config(&self) -> RiskConfig {
        RiskConfig {
            beta: self.beta,
            ..self.risk
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub prompt_id: String,
    pub rule: String,
    pub candidate_id: String,
    pub candidate_index: usize,
    /// Objective value of the chosen candidate.
    pub value: f64,
    /// Candidates eligible for the final argmax/argmin.
    pub feasible_size: usize,
    /// True only when a risk-premium budget admitted no candidate.
    pub fallback: bool,
    /// Per-candidate objective, in pool order.
    pub scores: Vec<(String, f64)>,
}

/// Wire form of a selection: one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub prompt_id: String,
    pub rule: String,
    pub candidate_id: String,
    pub fallback: bool,
    pub scores: BTreeMap<String, f64>,
}

impl From<&SelectionResult> for SelectionRecord {
    fn from(s: &SelectionResult) -> Self {
        SelectionRecord {
            prompt_id: s.prompt_id.clone(),
            rule: s.rule.clone(),
            candidate_id: s.candidate_id.clone(),
            fallback: s.fallback,
            scores: s.scores.iter().cloned().collect(),
        }
    }
}

/// Per-candidate summary under one scorer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Row {
    pub mean: f64,
    pub std: f64,
    pub entropic: f64,
    pub premium: f64,
}

fn rows(pool: &CandidatePool, scorer: &str, beta: f64) -> Result<Vec<Row>> {
    if pool.is_empty() {
        return Err(Error::NoCandidates);
    }
    pool.scorer_values(scorer)?
        .into_iter()
        .map(|values| {
            let stats = risk::sample_stats(values)?;
            let entropic = risk::entropic_value(values, beta)?;
            Ok(Row {
                mean: stats.mean,
                std: stats.std,
                entropic,
                premium: stats.mean - entropic,
            })
        })
        .collect()
}

/// Index of the first maximum among `eligible` (lowest index wins ties).
pub(crate) fn argmax_where(scores: &[f64], eligible: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if !eligible(i) {
            continue;
        }
        match best {
            Some(b) if s <= scores[b] => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Near-tie choice: among `eligible`, smallest dispersion, then larger mean,
/// then lowest index.
pub(crate) fn argmin_dispersion(std: &[f64], mean: &[f64], eligible: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for i in 0..std.len() {
        if !eligible(i) {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) if std[i] < std[b] || (std[i] == std[b] && mean[i] > mean[b]) => Some(i),
            keep => keep,
        };
    }
    best
}

fn finish(
    pool: &CandidatePool,
    rule: impl Into<String>,
    scores: Vec<f64>,
    chosen: usize,
    feasible_size: usize,
    fallback: bool,
) -> SelectionResult {
    SelectionResult {
        prompt_id: pool.prompt_id.clone(),
        rule: rule.into(),
        candidate_id: pool.candidates[chosen].candidate_id.clone(),
        candidate_index: chosen,
        value: scores[chosen],
        feasible_size,
        fallback,
        scores: pool
            .candidates
            .iter()
            .zip(scores)
            .map(|(c, s)| (c.candidate_id.clone(), s))
            .collect(),
    }
}

fn plain_argmax(pool: &CandidatePool, rule: Rule, scores: Vec<f64>) -> Result<SelectionResult> {
    let chosen = argmax_where(&scores, |_| true).ok_or(Error::NoCandidates)?;
    let k = scores.len();
    Ok(finish(pool, rule.name(), scores, chosen, k, false))
}

/// Dispatch on `cfg.rule`.
pub fn select(pool: &CandidatePool, scorer: &str, cfg: &DecoderConfig) -> Result<SelectionResult> {
    cfg.validate()?;
    match cfg.rule {
        Rule::Mean => select_mean(pool, scorer, cfg),
        Rule::Cvar => select_cvar(pool, scorer, cfg),
        Rule::Entropic => select_entropic(pool, scorer, cfg),
        Rule::Tau => select_tau(pool, scorer, cfg),
        Rule::Lambda => select_lambda(pool, scorer, cfg),
        Rule::Eps => select_eps(pool, scorer, cfg),
        Rule::Lcb => select_lcb(pool, scorer, cfg),
        Rule::MeanDispersion => select_mean_dispersion(pool, scorer, cfg),
        Rule::McDropout => select_mcdropout(pool, scorer, cfg),
        Rule::Rbon => select_rbon(pool, scorer, cfg),
        Rule::Bop => select_bop(pool, scorer, cfg),
        Rule::Caution => select_caution(pool, scorer, cfg),
    }
}

/// Highest empirical mean.
pub fn select_mean(pool: &CandidatePool, scorer: &str, cfg: &DecoderConfig) -> Result<SelectionResult> {
    let rows = rows(pool, scorer, cfg.beta)?;
    plain_argmax(pool, Rule::Mean, rows.iter().map(|r| r.mean).collect())
}

/// Highest lower-tail mean at level `cfg.risk.cvar_alpha`.
pub fn select_cvar(pool: &CandidatePool, scorer: &str, cfg: &DecoderConfig) -> Result<SelectionResult> {
    if pool.is_empty() {
        return Err(Error::NoCandidates);
    }
    let scores = pool
        .scorer_values(scorer)?
        .into_iter()
        .map(|v| risk::empirical_cvar(v, cfg.risk.cvar_alpha))
        .collect::<Result<Vec<_>>>()?;
    plain_argmax(pool, Rule::Cvar, scores)
}

/// Highest entropic value.
pub fn select_entropic(pool: &CandidatePool, scorer: &str, cfg: &DecoderConfig) -> Result<SelectionResult> {
    let rows = rows(pool, scorer, cfg.beta)?;
    plain_argmax(pool, Rule::Entropic, rows.iter().map(|r| r.entropic).collect())
}

/// Resolve the risk-premium budget: explicit `tau`, else the per-pool
/// quantile of the premia.
pub(crate) fn resolve_tau(tau: Option<f64>, quantile: Option<f64>, premia: &[f64]) -> Result<f64> {
    match (tau, quantile) {
        (Some(t), _) => Ok(t),
        (None, Some(q)) => risk::quantile(premia, q),
        (None, None) => Err(Error::Config("rule tau needs tau or tau_quantile".into())),
    }
}

/// Budgeted rule: best objective among candidates whose risk premium is at
/// most `tau`, falling back to the whole pool when none qualifies.
pub fn select_tau(pool: &CandidatePool, scorer: &str, cfg: &DecoderConfig) -> Result<SelectionResult> {
    let rows = rows(pool, scorer, cfg.beta)?;
    let premia: Vec<f64> = rows.iter().map(|r| r.premium).collect();
    let tau = resolve_tau(cfg.tau, cfg.tau_quantile, &premia)?;
    let objective: Vec<f64> = match cfg.tau_objective {
        TauObjective::Entropic => rows.iter().map(|r| r.entropic).collect(),
        TauObjective::Mean => rows.iter().map(|r| r.mean).collect(),
    };
    let feasible = |i: usize| premia[i] <= tau;
    let size = (0..rows.len()).filter(|&i| feasible(i)).count();
    let (chosen, size, fallback) = match argmax_where(&objective, feasible) {
        Some(i) => (i, size, false),
        None => (
            argmax_where(&objective, |_| true).ok_or(Error::NoCandidates)?,
            rows.len(),
            true,
        ),
    };
    Ok(finish(pool, Rule::Tau.name(), objective, chosen, size, fallback))
}

/// Penalized rule: `V - lambda * RP`.
pub fn select_lambda(pool: &CandidatePool, scorer: &str, cfg: &DecoderConfig) -> Result<SelectionResult> {
    let lambda = cfg
        .lambda_pen
        .ok_or_else(|| Error::Config("rule lambda needs lambda_pen".into()))?;
    if !(lambda >= 0.0) {
        return Err(Error::param("lambda_pen", lambda, "must be non-negative"));
    }
    let rows = rows(pool, scorer, cfg.beta)?;
    let scores = rows.iter().map(|r| r.entropic - lambda * r.premium).collect();
    plain_argmax(pool, Rule::Lambda, scores)
}

/// Near-tie rule: among candidates within `epsilon` of the best entropic
/// value, the one with the smallest dispersion. The reported score is the
/// dispersion (lower is preferred).
pub fn select_eps(pool: &CandidatePool, scorer: &str, cfg: &DecoderConfig) -> Result<SelectionResult> {
    if !(cfg.epsilon >= 0.0) {
        return Err(Error::param("epsilon", cfg.epsilon, "must be non-negative"));
    }
    let rows = rows(pool, scorer, cfg.beta)?;
    let v_max = rows.iter().map(|r| r.entropic).fold(f64::NEG_INFINITY, f64::max);
    let threshold = v_max - cfg.epsilon;
    let std: Vec<f64> = rows.iter().map(|r| r.std).collect();
    let mean: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    let eligible = |i: usize| rows[i].entropic >= threshold;
    let size = (0..rows.len()).filter(|&i| eligible(i)).count();
    let chosen = argmin_dispersion(&std, &mean, eligible).ok_or(Error::NoCandidates)?;
    Ok(finish(pool, Rule::Eps.name(), std, chosen, size, false))
}

/// Highest empirical-Bernstein lower confidence bound.
pub fn select_lcb(pool: &CandidatePool, scorer: &str, cfg: &DecoderConfig) -> Result<SelectionResult> {
    if pool.is_empty() {
        return Err(Error::NoCandidates);
    }
    let k = pool.len();
    let rc = cfg.risk_config();
    let scores = pool
        .candidates
        .iter()
        .map(|c| {
            let set = c.scorer_samples(scorer)?;
            let stats = risk::sample_stats(set.values())?;
            risk::lcb_bounded(&stats, k, &rc, set.bounds())
        })
        .collect::<Result<Vec<_>>>()?;
    plain_argmax(pool, Rule::Lcb, scores)
}

fn mean_minus_std(pool: &CandidatePool, scorer: &str, cfg: &DecoderConfig, rule: Rule, weight: f64) -> Result<SelectionResult> {
    let rows = rows(pool, scorer, cfg.beta)?;
    let scores = rows.iter().map(|r| r.mean - weight * r.std).collect();
    plain_argmax(pool, rule, scores)
}

/// `mean - lambda_md * std`.
pub fn select_mean_dispersion(pool: &CandidatePool, scorer: &str, cfg: &DecoderConfig) -> Result<SelectionResult> {
    mean_minus_std(pool, scorer, cfg, Rule::MeanDispersion, cfg.lambda_md)
}

/// `mean - alpha_mc * std` with the samples read as stochastic forward passes.
pub fn select_mcdropout(pool: &CandidatePool, scorer: &str, cfg: &DecoderConfig) -> Result<SelectionResult> {
    mean_minus_std(pool, scorer, cfg, Rule::McDropout, cfg.alpha_mc)
}

/// `mean + beta_rbon * ref_loglik_per_token`.
pub fn select_rbon(pool: &CandidatePool, scorer: &str, cfg: &DecoderConfig) -> Result<SelectionResult> {
    let rows = rows(pool, scorer, cfg.beta)?;
    let scores = pool
        .candidates
        .iter()
        .zip(&rows)
        .map(|(c, r)| {
            let l = c.ref_loglik_per_token.ok_or_else(|| Error::MissingField {
                field: "ref_loglik_per_token",
                candidate_id: c.candidate_id.clone(),
            })?;
            Ok(r.mean + cfg.beta_rbon * l)
        })
        .collect::<Result<Vec<_>>>()?;
    plain_argmax(pool, Rule::Rbon, scores)
}

/// `mean - alpha_caution * error_score`.
pub fn select_caution(pool: &CandidatePool, scorer: &str, cfg: &DecoderConfig) -> Result<SelectionResult> {
    let rows = rows(pool, scorer, cfg.beta)?;
    let scores = pool
        .candidates
        .iter()
        .zip(&rows)
        .map(|(c, r)| {
            let e = c.error_score.ok_or_else(|| Error::MissingField {
                field: "error_score",
                candidate_id: c.candidate_id.clone(),
            })?;
            Ok(r.mean - cfg.alpha_caution * e)
        })
        .collect::<Result<Vec<_>>>()?;
    plain_argmax(pool, Rule::Caution, scores)
}

/// Best-of-Poisson: draw `K' ~ Poisson(lambda)`, clamp to `[1, K]`, take a
/// uniform subset of that size and return its mean-argmax.
pub fn select_bop(pool: &CandidatePool, scorer: &str, cfg: &DecoderConfig) -> Result<SelectionResult> {
    let rows = rows(pool, scorer, cfg.beta)?;
    let k = rows.len();
    let mut stream = rng::prompt_stream(cfg.seed, &pool.prompt_id);
    let subset = bop_subset(&mut stream, cfg.poisson_lambda, k)?;
    let mut in_subset = vec![false; k];
    for &i in &subset {
        in_subset[i] = true;
    }
    let scores: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    let chosen = argmax_where(&scores, |i| in_subset[i]).ok_or(Error::NoCandidates)?;
    Ok(finish(pool, Rule::Bop.name(), scores, chosen, subset.len(), false))
}

pub(crate) fn bop_subset<R: Rng>(stream: &mut R, lambda: f64, k: usize) -> Result<Vec<usize>> {
    let poisson = Poisson::new(lambda).map_err(|_| Error::param("poisson_lambda", lambda, "must be positive"))?;
    let draw: f64 = poisson.sample(stream);
    let size = (draw as usize).clamp(1, k);
    let mut subset = index::sample(stream, k, size).into_vec();
    subset.sort_unstable();
    Ok(subset)
}
