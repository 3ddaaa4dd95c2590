//! Aggregation across several scorers.
//!
//! Each scorer's samples are first standardized within the prompt (pooled
//! over every candidate and sample), then summarized per scorer, and the
//! per-scorer entropic values are combined with the soft worst case
//!
//! ```text
//! agg_gamma(v) = -(1/gamma) * log( (1/M) * sum_m exp(-gamma * v_m) )
//! ```
//!
//! which interpolates between the mean (`gamma -> 0`) and the minimum
//! (`gamma -> inf`). Risk premia and dispersions are combined pessimistically
//! by taking the maximum over scorers.

use serde::{Deserialize, Serialize};

use crate::corpus::CandidatePool;
use crate::decoders::{self, DecoderConfig, Rule, SelectionResult, TauObjective};
use crate::error::{Error, Result};
use crate::risk::{self, log_mean_exp};

/// Within-prompt standardization constants of one scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationConstants {
    pub scorer: String,
    pub pooled_mean: f64,
    /// Pooled standard deviation with the `Kn - 1` denominator; 1 when
    /// guarded.
    pub pooled_std: f64,
    /// Raw pooled deviation was zero (or there was a single sample).
    pub guarded: bool,
}

/// Standardize every sample of `scorer` in the pool. With `enabled = false`
/// the constants are `(0, 1)` and values pass through unchanged.
pub fn normalize_pool(
    pool: &CandidatePool,
    scorer: &str,
    enabled: bool,
) -> Result<(NormalizationConstants, Vec<Vec<f64>>)> {
    let sets = pool.scorer_values(scorer)?;
    if sets.is_empty() {
        return Err(Error::NoCandidates);
    }
    if !enabled {
        let consts = NormalizationConstants {
            scorer: scorer.to_string(),
            pooled_mean: 0.0,
            pooled_std: 1.0,
            guarded: false,
        };
        return Ok((consts, sets.into_iter().map(<[f64]>::to_vec).collect()));
    }
    let total: usize = sets.iter().map(|s| s.len()).sum();
    let mean = sets.iter().flat_map(|s| s.iter()).sum::<f64>() / total as f64;
    let ss: f64 = sets.iter().flat_map(|s| s.iter()).map(|x| (x - mean) * (x - mean)).sum();
    let raw_std = if total > 1 { (ss / (total - 1) as f64).sqrt() } else { 0.0 };
    let guarded = !(raw_std > 0.0);
    let std = if guarded { 1.0 } else { raw_std };
    let normalized = sets
        .iter()
        .map(|s| s.iter().map(|x| (x - mean) / std).collect())
        .collect();
    Ok((
        NormalizationConstants {
            scorer: scorer.to_string(),
            pooled_mean: mean,
            pooled_std: std,
            guarded,
        },
        normalized,
    ))
}

/// Soft worst case of `values` at inverse temperature `gamma`.
pub fn aggregate_values(values: &[f64], gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::param("gamma", gamma, "must be positive and finite"));
    }
    if values.is_empty() {
        return Err(Error::EmptySamples);
    }
    let lme = log_mean_exp(values.iter().map(|&v| -gamma * v));
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok((-lme / gamma).clamp(min, mean.max(min)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelConfig {
    pub beta: f64,
    pub gamma: f64,
    pub normalize: bool,
}

impl Default for PanelConfig {
    fn default() -> Self {
        PanelConfig {
            beta: 1.0,
            gamma: 1.0,
            normalize: true,
        }
    }
}

/// One candidate's summary under one scorer, on the (possibly normalized)
/// scale used for selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorerProfile {
    pub mean: f64,
    pub std: f64,
    pub entropic: f64,
    pub premium: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelEntry {
    pub candidate_id: String,
    /// In the panel's scorer order.
    pub profiles: Vec<ScorerProfile>,
    /// Soft worst case of the per-scorer entropic values.
    pub value: f64,
    /// Largest per-scorer risk premium.
    pub premium: f64,
    /// Largest per-scorer dispersion.
    pub dispersion: f64,
    /// Average of the per-scorer means.
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerPanel {
    pub prompt_id: String,
    pub scorers: Vec<String>,
    pub normalization: Vec<NormalizationConstants>,
    pub entries: Vec<PanelEntry>,
}

pub fn build_panel(pool: &CandidatePool, scorers: &[String], cfg: &PanelConfig) -> Result<ScorerPanel> {
    if scorers.is_empty() {
        return Err(Error::Config("a scorer panel needs at least one scorer".into()));
    }
    if !(cfg.gamma > 0.0 && cfg.gamma.is_finite()) {
        return Err(Error::param("gamma", cfg.gamma, "must be positive and finite"));
    }
    let k = pool.len();
    let mut normalization = Vec::with_capacity(scorers.len());
    let mut profiles: Vec<Vec<ScorerProfile>> = vec![Vec::with_capacity(scorers.len()); k];
    for scorer in scorers {
        let (consts, sets) = normalize_pool(pool, scorer, cfg.normalize)?;
        normalization.push(consts);
        for (row, values) in profiles.iter_mut().zip(&sets) {
            let stats = risk::sample_stats(values)?;
            let entropic = risk::entropic_value(values, cfg.beta)?;
            row.push(ScorerProfile {
                mean: stats.mean,
                std: stats.std,
                entropic,
                premium: stats.mean - entropic,
            });
        }
    }
    let entries = pool
        .candidates
        .iter()
        .zip(profiles)
        .map(|(c, profiles)| {
            let values: Vec<f64> = profiles.iter().map(|p| p.entropic).collect();
            let value = aggregate_values(&values, cfg.gamma)?;
            let premium = profiles.iter().map(|p| p.premium).fold(f64::NEG_INFINITY, f64::max);
            let dispersion = profiles.iter().map(|p| p.std).fold(f64::NEG_INFINITY, f64::max);
            let mean = profiles.iter().map(|p| p.mean).sum::<f64>() / profiles.len() as f64;
            Ok(PanelEntry {
                candidate_id: c.candidate_id.clone(),
                profiles,
                value,
                premium,
                dispersion,
                mean,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScorerPanel {
        prompt_id: pool.prompt_id.clone(),
        scorers: scorers.to_vec(),
        normalization,
        entries,
    })
}

/// Prefix used for panel rule names in selection output.
pub const PANEL_PREFIX: &str = "panel-";

/// Select from a panel with the entropic, budgeted or near-tie rule, using
/// the aggregated value, worst-case premium and worst-case dispersion.
pub fn select_panel(panel: &ScorerPanel, cfg: &DecoderConfig) -> Result<SelectionResult> {
    cfg.validate()?;
    let entries = &panel.entries;
    if entries.is_empty() {
        return Err(Error::NoCandidates);
    }
    let value: Vec<f64> = entries.iter().map(|e| e.value).collect();
    let name = format!("{PANEL_PREFIX}{}", cfg.rule);
    let (scores, chosen, size, fallback) = match cfg.rule {
        Rule::Entropic => {
            let i = decoders::argmax_where(&value, |_| true).ok_or(Error::NoCandidates)?;
            (value, i, entries.len(), false)
        }
        Rule::Tau => {
            let premia: Vec<f64> = entries.iter().map(|e| e.premium).collect();
            let tau = decoders::resolve_tau(cfg.tau, cfg.tau_quantile, &premia)?;
            let objective: Vec<f64> = match cfg.tau_objective {
                TauObjective::Entropic => value,
                TauObjective::Mean => entries.iter().map(|e| e.mean).collect(),
            };
            let feasible = |i: usize| premia[i] <= tau;
            let size = (0..entries.len()).filter(|&i| feasible(i)).count();
            match decoders::argmax_where(&objective, feasible) {
                Some(i) => (objective, i, size, false),
                None => {
                    let i = decoders::argmax_where(&objective, |_| true).ok_or(Error::NoCandidates)?;
                    (objective, i, entries.len(), true)
                }
            }
        }
        Rule::Eps => {
            let v_max = value.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let threshold = v_max - cfg.epsilon;
            let dispersion: Vec<f64> = entries.iter().map(|e| e.dispersion).collect();
            let mean: Vec<f64> = entries.iter().map(|e| e.mean).collect();
            let eligible = |i: usize| value[i] >= threshold;
            let size = (0..entries.len()).filter(|&i| eligible(i)).count();
            let i = decoders::argmin_dispersion(&dispersion, &mean, eligible).ok_or(Error::NoCandidates)?;
            (dispersion, i, size, false)
        }
        other => {
            return Err(Error::Config(format!(
                "rule `{other}` has no scorer-panel form; use entropic, tau or eps"
            )))
        }
    };
    Ok(SelectionResult {
        prompt_id: panel.prompt_id.clone(),
        rule: name,
        candidate_id: entries[chosen].candidate_id.clone(),
        candidate_index: chosen,
        value: scores[chosen],
        feasible_size: size,
        fallback,
        scores: entries.iter().map(|e| e.candidate_id.clone()).zip(scores).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Bounds, Candidate, SampleSet};
    use crate::oracle::{scorer_dro_oracle, OracleBudget};
    use std::collections::BTreeMap;

    fn cand(id: &str, sets: &[(&str, &[f64])]) -> Candidate {
        let samples: BTreeMap<_, _> = sets
            .iter()
            .map(|(m, xs)| (m.to_string(), SampleSet::new(xs.to_vec(), Bounds::default()).unwrap()))
            .collect();
        Candidate {
            candidate_id: id.into(),
            samples,
            eval_samples: None,
            ref_loglik_per_token: None,
            error_score: None,
            token_length: None,
            text: None,
        }
    }

    fn pool(cands: Vec<Candidate>) -> CandidatePool {
        CandidatePool {
            prompt_id: "p".into(),
            candidates: cands,
            source: None,
        }
    }

    fn names(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn normalization_examples() {
        let p = pool(vec![cand("a", &[("rm", &[3.0, 3.0])]), cand("b", &[("rm", &[3.0])])]);
        let (c, v) = normalize_pool(&p, "rm", true).unwrap();
        assert!(c.guarded);
        assert_eq!(c.pooled_std, 1.0);
        assert!(v.iter().flatten().all(|&x| x == 0.0));

        let p = pool(vec![cand("a", &[("rm", &[0.0])]), cand("b", &[("rm", &[2.0])])]);
        let (c, v) = normalize_pool(&p, "rm", true).unwrap();
        assert_eq!(c.pooled_mean, 1.0);
        assert!((c.pooled_std - 2f64.sqrt()).abs() < 1e-15);
        assert!((v[0][0] + 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((v[1][0] - 1.0 / 2f64.sqrt()).abs() < 1e-15);

        let (c, v) = normalize_pool(&p, "rm", false).unwrap();
        assert_eq!((c.pooled_mean, c.pooled_std), (0.0, 1.0));
        assert_eq!(v, vec![vec![0.0], vec![2.0]]);

        assert!(matches!(normalize_pool(&p, "nope", true), Err(Error::UnknownScorer(_))));
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_values(&[2.5], 3.0).unwrap(), 2.5);
        let v = aggregate_values(&[0.0, 1.0], 1.0).unwrap();
        assert!((v - 0.379_885_493_041_722_5).abs() < 1e-12);
        let oracle = scorer_dro_oracle(&[0.0, 1.0], 1.0, OracleBudget::default()).unwrap();
        assert!((oracle.value - v).abs() < 1e-6);
        assert!(aggregate_values(&[0.0, 1.0], 1e3).unwrap() < 1e-3);
        assert!(aggregate_values(&[0.0, 1.0], 0.0).is_err());
        assert!(aggregate_values(&[0.0, 1.0], -1.0).is_err());
    }

    #[test]
    fn single_scorer_panel_matches_profile() {
        let p = pool(vec![cand("a", &[("rm", &[0.0, 10.0])]), cand("b", &[("rm", &[4.0, 5.0])])]);
        let cfg = PanelConfig {
            normalize: false,
            ..PanelConfig::default()
        };
        let panel = build_panel(&p, &names(&["rm"]), &cfg).unwrap();
        for (e, c) in panel.entries.iter().zip(&p.candidates) {
            let xs = c.scorer_samples("rm").unwrap().values();
            let st = risk::sample_stats(xs).unwrap();
            let v = risk::entropic_value(xs, 1.0).unwrap();
            assert_eq!(e.value, v);
            assert_eq!(e.mean, st.mean);
            assert_eq!(e.dispersion, st.std);
            assert_eq!(e.premium, st.mean - v);
        }
    }

    #[test]
    fn identical_scorers_ignore_gamma() {
        let p = pool(vec![
            cand("a", &[("x", &[0.0, 3.0]), ("y", &[0.0, 3.0])]),
            cand("b", &[("x", &[1.0, 1.5]), ("y", &[1.0, 1.5])]),
        ]);
        for gamma in [0.1, 1.0, 50.0] {
            let cfg = PanelConfig {
                gamma,
                ..PanelConfig::default()
            };
            let panel = build_panel(&p, &names(&["x", "y"]), &cfg).unwrap();
            for e in &panel.entries {
                assert!((e.value - e.profiles[0].entropic).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_scorer_hand_case() {
        let p = pool(vec![
            cand("c0", &[("a", &[0.0, 2.0]), ("b", &[1.0, 1.0])]),
            cand("c1", &[("a", &[1.0, 3.0]), ("b", &[0.0, 4.0])]),
        ]);
        let cfg = PanelConfig {
            beta: 1.0,
            gamma: 2.0,
            normalize: true,
        };
        let panel = build_panel(&p, &names(&["a", "b"]), &cfg).unwrap();
        let expect = [
            [-0.508_969_604_049_697_2, 0.274_067_236_621_866_8, 1.095_445_115_010_332_4, -0.337_986_734_607_777_3],
            [-0.112_578_586_044_134_2, 0.556_245_818_908_062_1, 1.632_993_161_855_452, 0.337_986_734_607_777_3],
        ];
        for (e, want) in panel.entries.iter().zip(expect) {
            let got = [e.value, e.premium, e.dispersion, e.mean];
            for (g, w) in got.iter().zip(want) {
                assert!((g - w).abs() < 1e-12, "{g} vs {w}");
            }
        }
        assert!((panel.normalization[1].pooled_std - 3f64.sqrt()).abs() < 1e-15);
    }

    fn entry(id: &str, value: f64, premium: f64, dispersion: f64, mean: f64) -> PanelEntry {
        PanelEntry {
            candidate_id: id.into(),
            profiles: vec![],
            value,
            premium,
            dispersion,
            mean,
        }
    }

    #[test]
    fn panel_rules() {
        let panel = ScorerPanel {
            prompt_id: "p".into(),
            scorers: names(&["a", "b"]),
            normalization: vec![],
            entries: vec![
                entry("x", 3.0, 0.9, 2.0, 4.0),
                entry("y", 2.9, 0.5, 0.5, 3.0),
                entry("z", 2.0, 0.2, 0.1, 2.1),
            ],
        };
        let ent = select_panel(&panel, &DecoderConfig::new(Rule::Entropic)).unwrap();
        assert_eq!((ent.candidate_id.as_str(), ent.rule.as_str()), ("x", "panel-entropic"));

        let mut tau = DecoderConfig::new(Rule::Tau);
        tau.tau = Some(f64::INFINITY);
        assert_eq!(select_panel(&panel, &tau).unwrap().candidate_id, "x");
        tau.tau = Some(0.6);
        assert_eq!(select_panel(&panel, &tau).unwrap().candidate_id, "y");
        tau.tau = Some(0.1);
        let r = select_panel(&panel, &tau).unwrap();
        assert!(r.fallback);
        assert_eq!(r.candidate_id, "x");

        let eps = DecoderConfig::new(Rule::Eps);
        let r = select_panel(&panel, &eps).unwrap();
        assert_eq!((r.candidate_id.as_str(), r.feasible_size), ("y", 2));

        assert!(matches!(select_panel(&panel, &DecoderConfig::new(Rule::Mean)), Err(Error::Config(_))));
    }
}
