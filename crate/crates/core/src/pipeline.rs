//! Corpus-wide selection: every configured method on every pool.
//!
//! Pools are processed in parallel; output is ordered by prompt id and then
//! by method order, so the result never depends on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{split_select_eval, CandidatePool, Corpus, SplitPolicy};
use crate::decoders::{self, DecoderConfig, SelectionResult};
use crate::error::{Error, Result};
use crate::metrics::MethodSelections;
use crate::multiscorer::{self, PanelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method {
    /// A rule applied to one scorer.
    Single { decoder: DecoderConfig },
    /// A rule applied to the aggregated scorer panel.
    Panel { decoder: DecoderConfig, panel: PanelConfig },
}

impl Method {
    pub fn decoder(&self) -> &DecoderConfig {
        match self {
            Method::Single { decoder } | Method::Panel { decoder, .. } => decoder,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectPlan {
    pub methods: Vec<Method>,
    /// Scorer for single-scorer rules; may be omitted when the corpus has
    /// exactly one scorer.
    pub scorer: Option<String>,
    /// Scorers entering the panel; all corpus scorers when omitted.
    pub panel_scorers: Option<Vec<String>>,
    /// Restrict selection to the selection view of this split. When omitted
    /// the `samples` field is used as-is.
    pub split: Option<SplitPolicy>,
}

impl SelectPlan {
    pub fn single(methods: Vec<DecoderConfig>) -> Self {
        SelectPlan {
            methods: methods.into_iter().map(|decoder| Method::Single { decoder }).collect(),
            scorer: None,
            panel_scorers: None,
            split: None,
        }
    }
}

fn resolve_scorer(corpus: &Corpus, scorer: &Option<String>) -> Result<String> {
    match scorer {
        Some(s) if corpus.scorer_ids().contains(s) => Ok(s.clone()),
        Some(s) => Err(Error::UnknownScorer(s.clone())),
        None => match corpus.scorer_ids() {
            [only] => Ok(only.clone()),
            ids => Err(Error::Config(format!(
                "corpus has {} scorers ({}); choose one",
                ids.len(),
                ids.join(", ")
            ))),
        },
    }
}

/// Run every method of the plan on every pool.
pub fn select_corpus(corpus: &Corpus, plan: &SelectPlan) -> Result<Vec<SelectionResult>> {
    if plan.methods.is_empty() {
        return Err(Error::Config("no selection rules configured".into()));
    }
    let needs_single = plan.methods.iter().any(|m| matches!(m, Method::Single { .. }));
    let scorer = if needs_single {
        Some(resolve_scorer(corpus, &plan.scorer)?)
    } else {
        None
    };
    let panel_scorers = match &plan.panel_scorers {
        Some(list) => {
            if let Some(s) = list.iter().find(|s| !corpus.scorer_ids().contains(s)) {
                return Err(Error::UnknownScorer(s.clone()));
            }
            list.clone()
        }
        None => corpus.scorer_ids().to_vec(),
    };
    for m in &plan.methods {
        m.decoder().validate()?;
        if let Method::Panel { panel, .. } = m {
            if !(panel.gamma > 0.0 && panel.gamma.is_finite()) {
                return Err(Error::param("gamma", panel.gamma, "must be positive and finite"));
            }
        }
    }

    let per_pool: Vec<Vec<SelectionResult>> = corpus
        .pools()
        .par_iter()
        .map(|pool| {
            let view;
            let pool: &CandidatePool = match plan.split {
                Some(policy) => {
                    view = split_select_eval(pool, policy)?.selection;
                    &view
                }
                None => pool,
            };
            plan.methods
                .iter()
                .map(|m| match m {
                    Method::Single { decoder } => decoders::select(pool, scorer.as_deref().unwrap_or_default(), decoder),
                    Method::Panel { decoder, panel } => {
                        let built = multiscorer::build_panel(pool, &panel_scorers, panel)?;
                        multiscorer::select_panel(&built, decoder)
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..per_pool.len()).collect();
    order.sort_by(|&a, &b| corpus.pools()[a].prompt_id.cmp(&corpus.pools()[b].prompt_id));
    let mut per_pool: Vec<Option<Vec<SelectionResult>>> = per_pool.into_iter().map(Some).collect();
    Ok(order.into_iter().flat_map(|i| per_pool[i].take().unwrap_or_default()).collect())
}

/// Group selection results by rule name, keeping first-appearance order.
pub fn group_by_method(results: &[SelectionResult]) -> Vec<MethodSelections> {
    let mut out: Vec<MethodSelections> = Vec::new();
    for r in results {
        let slot = match out.iter().position(|m| m.method == r.rule) {
            Some(i) => i,
            None => {
                out.push(MethodSelections {
                    method: r.rule.clone(),
                    picks: Default::default(),
                });
                out.len() - 1
            }
        };
        out[slot].picks.insert(r.prompt_id.clone(), r.candidate_id.clone());
    }
    out
}
