//! Candidate pools and their line-delimited JSON representation.
//!
//! One record per prompt:
//!
//! ```text
//! {"prompt_id": str, "candidates": [{"candidate_id": str,
//!   "samples": {scorer_id: [num, ...]}, "eval_samples"?: {...},
//!   "ref_loglik_per_token"?: num, "error_score"?: num,
//!   "token_length"?: int, "text"?: str}], "source"?: str}
//! ```
//!
//! Sample order is preserved: the position of a value is its identity, which
//! keeps index splits and golden files reproducible.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt;

/// Closed score interval `[lo, hi]` shared by every sample in a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("bounds must satisfy a < b, got ({lo}, {hi})")));
        }
        Ok(Bounds { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { lo: -10.0, hi: 10.0 }
    }
}

impl FromStr for Bounds {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(',')
            .ok_or_else(|| Error::Config(format!("bounds `{s}` must look like `a,b`")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad bound `{t}`")))
        };
        Bounds::new(parse(a)?, parse(b)?)
    }
}

/// Ordered scalar samples for one (prompt, candidate, scorer) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    values: Vec<f64>,
    bounds: Bounds,
}

impl SampleSet {
    pub fn new(values: Vec<f64>, bounds: Bounds) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySamples);
        }
        if let Some(&v) = values.iter().find(|v| !bounds.contains(**v)) {
            return Err(Error::OutOfBounds {
                value: v,
                lo: bounds.lo,
                hi: bounds.hi,
            });
        }
        Ok(SampleSet { values, bounds })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn slice(&self, range: Range<usize>) -> SampleSet {
        SampleSet {
            values: self.values[range].to_vec(),
            bounds: self.bounds,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub candidate_id: String,
    pub samples: BTreeMap<String, SampleSet>,
    pub eval_samples: Option<BTreeMap<String, SampleSet>>,
    /// Mean per-token log-likelihood under the reference policy (nats/token).
    pub ref_loglik_per_token: Option<f64>,
    /// Atypicality score in `[0, 1]`.
    pub error_score: Option<f64>,
    pub token_length: Option<u64>,
    pub text: Option<String>,
}

impl Candidate {
    pub fn scorer_samples(&self, scorer: &str) -> Result<&SampleSet> {
        self.samples
            .get(scorer)
            .ok_or_else(|| Error::UnknownScorer(scorer.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    pub prompt_id: String,
    pub candidates: Vec<Candidate>,
    /// Free-form provenance tag (e.g. "human" or "proxy"); carries no semantics.
    pub source: Option<String>,
}

impl CandidatePool {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn position(&self, candidate_id: &str) -> Option<usize> {
        self.candidates.iter().position(|c| c.candidate_id == candidate_id)
    }

    /// Sample slices of every candidate under `scorer`, in pool order.
    pub fn scorer_values(&self, scorer: &str) -> Result<Vec<&[f64]>> {
        self.candidates
            .iter()
            .map(|c| c.scorer_samples(scorer).map(SampleSet::values))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IngestMeta {
    /// Number of perturbations per candidate (largest sample count minus one).
    pub n_aug: usize,
    /// Truncation radius `L` applied at ingestion, if any.
    pub truncate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub bounds: Bounds,
    pub truncate: Option<f64>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            bounds: Bounds::default(),
            truncate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pools: Vec<CandidatePool>,
    scorer_ids: Vec<String>,
    bounds: Bounds,
    meta: IngestMeta,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Assemble a corpus from in-memory pools, enforcing the same invariants
    /// as file ingestion. Errors report the 1-based pool position as `line`.
    pub fn new(pools: Vec<CandidatePool>, bounds: Bounds, truncate: Option<f64>) -> Result<Self> {
        let mut scorer_ids: Option<Vec<String>> = None;
        let mut index = HashMap::with_capacity(pools.len());
        let mut max_n = 0usize;
        for (i, pool) in pools.iter().enumerate() {
            let line = i + 1;
            validate_pool(pool, line, &mut scorer_ids, bounds)?;
            if index.insert(pool.prompt_id.clone(), i).is_some() {
                return Err(Error::DuplicatePrompt {
                    line,
                    prompt_id: pool.prompt_id.clone(),
                });
            }
            for c in &pool.candidates {
                for s in c.samples.values() {
                    max_n = max_n.max(s.len());
                }
            }
        }
        Ok(Corpus {
            pools,
            scorer_ids: scorer_ids.unwrap_or_default(),
            bounds,
            meta: IngestMeta {
                n_aug: max_n.saturating_sub(1),
                truncate,
            },
            index,
        })
    }

    pub fn pools(&self) -> &[CandidatePool] {
        &self.pools
    }

    pub fn pool(&self, prompt_id: &str) -> Option<&CandidatePool> {
        self.index.get(prompt_id).map(|&i| &self.pools[i])
    }

    pub fn scorer_ids(&self) -> &[String] {
        &self.scorer_ids
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn meta(&self) -> IngestMeta {
        self.meta
    }

    pub fn len(&self) -> usize {
        self.pools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pools.is_empty()
    }

    /// Write one JSON line per pool, numbers as `%.17g`.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for pool in &self.pools {
            let record = PoolRecord::from(pool);
            let line = numfmt::to_json_string(&record)?;
            w.write_all(line.as_bytes())?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("utf-8")
    }
}

fn validate_pool(
    pool: &CandidatePool,
    line: usize,
    scorer_ids: &mut Option<Vec<String>>,
    bounds: Bounds,
) -> Result<()> {
    if pool.candidates.is_empty() {
        return Err(Error::EmptyPool {
            line,
            prompt_id: pool.prompt_id.clone(),
        });
    }
    let mut seen = BTreeSet::new();
    for c in &pool.candidates {
        if !seen.insert(c.candidate_id.as_str()) {
            return Err(Error::DuplicateCandidate {
                line,
                candidate_id: c.candidate_id.clone(),
            });
        }
        let found: Vec<String> = c.samples.keys().cloned().collect();
        match scorer_ids {
            None if found.is_empty() => {
                return Err(Error::Malformed {
                    line,
                    message: format!("candidate `{}` has no scorers", c.candidate_id),
                })
            }
            None => *scorer_ids = Some(found.clone()),
            Some(expected) if *expected != found => {
                return Err(Error::ScorerMismatch {
                    line,
                    candidate_id: c.candidate_id.clone(),
                    expected: expected.clone(),
                    found,
                })
            }
            Some(_) => {}
        }
        let expected = scorer_ids.as_ref().expect("set above");
        if let Some(eval) = &c.eval_samples {
            let eval_ids: Vec<String> = eval.keys().cloned().collect();
            if &eval_ids != expected {
                return Err(Error::ScorerMismatch {
                    line,
                    candidate_id: c.candidate_id.clone(),
                    expected: expected.clone(),
                    found: eval_ids,
                });
            }
        }
        let all_sets = c
            .samples
            .iter()
            .chain(c.eval_samples.iter().flat_map(|m| m.iter()));
        for (scorer_id, set) in all_sets {
            if set.is_empty() {
                return Err(Error::EmptySampleSet {
                    line,
                    candidate_id: c.candidate_id.clone(),
                    scorer_id: scorer_id.clone(),
                });
            }
            if set.bounds() != bounds {
                return Err(Error::Malformed {
                    line,
                    message: format!(
                        "candidate `{}` scorer `{scorer_id}` declares bounds inconsistent with the corpus",
                        c.candidate_id
                    ),
                });
            }
        }
        if let Some(e) = c.error_score {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Malformed {
                    line,
                    message: format!("error_score {e} of `{}` outside [0, 1]", c.candidate_id),
                });
            }
        }
        if let Some(l) = c.ref_loglik_per_token {
            if !l.is_finite() {
                return Err(Error::Malformed {
                    line,
                    message: format!("non-finite ref_loglik_per_token on `{}`", c.candidate_id),
                });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolRecord {
    prompt_id: String,
    candidates: Vec<CandidateRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateRecord {
    candidate_id: String,
    samples: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eval_samples: Option<BTreeMap<String, Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ref_loglik_per_token: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    token_length: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

fn raw_map(m: &BTreeMap<String, SampleSet>) -> BTreeMap<String, Vec<f64>> {
    m.iter().map(|(k, v)| (k.clone(), v.values.clone())).collect()
}

impl From<&CandidatePool> for PoolRecord {
    fn from(pool: &CandidatePool) -> Self {
        PoolRecord {
            prompt_id: pool.prompt_id.clone(),
            source: pool.source.clone(),
            candidates: pool
                .candidates
                .iter()
                .map(|c| CandidateRecord {
                    candidate_id: c.candidate_id.clone(),
                    samples: raw_map(&c.samples),
                    eval_samples: c.eval_samples.as_ref().map(raw_map),
                    ref_loglik_per_token: c.ref_loglik_per_token,
                    error_score: c.error_score,
                    token_length: c.token_length,
                    text: c.text.clone(),
                })
                .collect(),
        }
    }
}

fn build_sets(
    raw: BTreeMap<String, Vec<f64>>,
    opts: &IngestOptions,
    line: usize,
    candidate_id: &str,
) -> Result<BTreeMap<String, SampleSet>> {
    raw.into_iter()
        .map(|(scorer_id, mut values)| {
            if values.is_empty() {
                return Err(Error::EmptySampleSet {
                    line,
                    candidate_id: candidate_id.to_string(),
                    scorer_id,
                });
            }
            if let Some(l) = opts.truncate {
                for v in &mut values {
                    *v = v.clamp(-l, l);
                }
            }
            let set = SampleSet::new(values, opts.bounds).map_err(|e| Error::Malformed {
                line,
                message: format!("candidate `{candidate_id}` scorer `{scorer_id}`: {e}"),
            })?;
            Ok((scorer_id, set))
        })
        .collect()
}

fn parse_record(text: &str, line: usize, opts: &IngestOptions) -> Result<CandidatePool> {
    let record: PoolRecord = serde_json::from_str(text).map_err(|e| Error::Malformed {
        line,
        message: e.to_string(),
    })?;
    let candidates = record
        .candidates
        .into_iter()
        .map(|c| {
            let samples = build_sets(c.samples, opts, line, &c.candidate_id)?;
            let eval_samples = c
                .eval_samples
                .map(|m| build_sets(m, opts, line, &c.candidate_id))
                .transpose()?;
            Ok(Candidate {
                candidate_id: c.candidate_id,
                samples,
                eval_samples,
                ref_loglik_per_token: c.ref_loglik_per_token,
                error_score: c.error_score,
                token_length: c.token_length,
                text: c.text,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CandidatePool {
        prompt_id: record.prompt_id,
        candidates,
        source: record.source,
    })
}

/// Parse a JSONL corpus. Blank lines are skipped; errors carry 1-based line
/// numbers of the input.
pub fn parse_corpus<R: BufRead>(reader: R, opts: &IngestOptions) -> Result<Corpus> {
    if let Some(l) = opts.truncate {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::param("truncate", l, "must be positive and finite"));
        }
    }
    let mut pools = Vec::new();
    let mut lines = Vec::new();
    for (i, text) in reader.lines().enumerate() {
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        pools.push(parse_record(&text, i + 1, opts)?);
        lines.push(i + 1);
    }
    // Re-run the cross-record checks, translating pool positions to file lines.
    Corpus::new(pools, opts.bounds, opts.truncate).map_err(|e| relabel_line(e, &lines))
}

fn relabel_line(e: Error, lines: &[usize]) -> Error {
    let fix = |l: usize| lines.get(l.wrapping_sub(1)).copied().unwrap_or(l);
    match e {
        Error::Malformed { line, message } => Error::Malformed {
            line: fix(line),
            message,
        },
        Error::ScorerMismatch {
            line,
            candidate_id,
            expected,
            found,
        } => Error::ScorerMismatch {
            line: fix(line),
            candidate_id,
            expected,
            found,
        },
        Error::EmptyPool { line, prompt_id } => Error::EmptyPool {
            line: fix(line),
            prompt_id,
        },
        Error::EmptySampleSet {
            line,
            candidate_id,
            scorer_id,
        } => Error::EmptySampleSet {
            line: fix(line),
            candidate_id,
            scorer_id,
        },
        Error::DuplicateCandidate { line, candidate_id } => Error::DuplicateCandidate {
            line: fix(line),
            candidate_id,
        },
        Error::DuplicatePrompt { line, prompt_id } => Error::DuplicatePrompt {
            line: fix(line),
            prompt_id,
        },
        other => other,
    }
}

pub fn ingest_corpus(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<Corpus> {
    let file = File::open(path)?;
    parse_corpus(BufReader::new(file), opts)
}

/// How a pool's samples are divided into selection and evaluation views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SplitPolicy {
    /// Selection reads `samples`, evaluation reads `eval_samples`.
    EvalField,
    /// Selection reads the first `selection_len` values, evaluation the rest.
    Index { selection_len: usize },
    /// `EvalField` when every candidate carries eval samples, otherwise the
    /// first `n / 2` values select and the remainder evaluate.
    Auto,
}

impl FromStr for SplitPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eval-field" => Ok(SplitPolicy::EvalField),
            "auto" => Ok(SplitPolicy::Auto),
            _ => {
                let n = s
                    .strip_prefix("index:")
                    .and_then(|t| t.parse::<usize>().ok())
                    .ok_or_else(|| {
                        Error::Config(format!("split policy `{s}` is not eval-field, auto or index:<n>"))
                    })?;
                Ok(SplitPolicy::Index { selection_len: n })
            }
        }
    }
}

impl std::fmt::Display for SplitPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SplitPolicy::EvalField => f.write_str("eval-field"),
            SplitPolicy::Auto => f.write_str("auto"),
            SplitPolicy::Index { selection_len } => write!(f, "index:{selection_len}"),
        }
    }
}

/// Where the two views of a split came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitProvenance {
    /// Separate `samples` / `eval_samples` fields.
    Fields,
    /// Index partition `[0, selection_len)` / `[selection_len, n)`.
    Index { selection_len: usize },
}

impl SplitProvenance {
    /// Sample indices read by the selection and evaluation views of a set of
    /// length `n`; `None` when the views come from separate fields.
    pub fn index_sets(&self, n: usize) -> Option<(Range<usize>, Range<usize>)> {
        match *self {
            SplitProvenance::Fields => None,
            SplitProvenance::Index { selection_len } => Some((0..selection_len, selection_len..n)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitView {
    pub selection: CandidatePool,
    pub evaluation: CandidatePool,
    pub provenance: SplitProvenance,
}

/// Partition a pool into disjoint selection and evaluation views.
///
/// Both views keep every sidecar field; only the sample maps differ and the
/// evaluation view stores its samples under `samples`.
pub fn split_select_eval(pool: &CandidatePool, policy: SplitPolicy) -> Result<SplitView> {
    let has_eval = pool.candidates.iter().all(|c| c.eval_samples.is_some());
    let policy = match policy {
        SplitPolicy::Auto if has_eval => SplitPolicy::EvalField,
        SplitPolicy::Auto => {
            let min_n = pool
                .candidates
                .iter()
                .flat_map(|c| c.samples.values().map(SampleSet::len))
                .min()
                .unwrap_or(0);
            SplitPolicy::Index {
                selection_len: min_n / 2,
            }
        }
        p => p,
    };
    match policy {
        SplitPolicy::EvalField => {
            let mut selection = pool.clone();
            let mut evaluation = pool.clone();
            for (sel, ev) in selection.candidates.iter_mut().zip(evaluation.candidates.iter_mut()) {
                let eval = sel.eval_samples.take().ok_or_else(|| Error::MissingField {
                    field: "eval_samples",
                    candidate_id: sel.candidate_id.clone(),
                })?;
                ev.samples = eval;
                ev.eval_samples = None;
            }
            Ok(SplitView {
                selection,
                evaluation,
                provenance: SplitProvenance::Fields,
            })
        }
        SplitPolicy::Index { selection_len } => {
            let mut selection = pool.clone();
            let mut evaluation = pool.clone();
            for (sel, ev) in selection.candidates.iter_mut().zip(evaluation.candidates.iter_mut()) {
                sel.eval_samples = None;
                ev.eval_samples = None;
                for (scorer, set) in sel.samples.iter_mut() {
                    let n = set.len();
                    if selection_len == 0 || selection_len >= n {
                        return Err(Error::InsufficientSamples {
                            needed: selection_len.max(1) + 1,
                            got: n,
                        });
                    }
                    ev.samples.insert(scorer.clone(), set.slice(selection_len..n));
                    *set = set.slice(0..selection_len);
                }
            }
            Ok(SplitView {
                selection,
                evaluation,
                provenance: SplitProvenance::Index { selection_len },
            })
        }
        SplitPolicy::Auto => unreachable!("resolved above"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> IngestOptions {
        IngestOptions::default()
    }

    fn parse(text: &str, opts: &IngestOptions) -> Result<Corpus> {
        parse_corpus(text.as_bytes(), opts)
    }

    #[test]
    fn single_pool_two_candidates() {
        let text = r#"{"prompt_id":"p1","candidates":[{"candidate_id":"a","samples":{"rm":[1,2]}},{"candidate_id":"b","samples":{"rm":[3]}}]}"#;
        let corpus = parse(text, &opts()).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.pools()[0].len(), 2);
        assert_eq!(corpus.scorer_ids(), ["rm".to_string()]);
        assert_eq!(corpus.meta().n_aug, 1);
    }

    #[test]
    fn truncation_clips_to_radius() {
        let text = r#"{"prompt_id":"p1","candidates":[{"candidate_id":"a","samples":{"rm":[12.3,-11,3]}}]}"#;
        let o = IngestOptions {
            truncate: Some(10.0),
            ..opts()
        };
        let corpus = parse(text, &o).unwrap();
        let v = corpus.pools()[0].candidates[0].samples["rm"].values();
        assert_eq!(v, [10.0, -10.0, 3.0]);
    }

    #[test]
    fn out_of_range_without_truncation_is_rejected() {
        let text = r#"{"prompt_id":"p1","candidates":[{"candidate_id":"a","samples":{"rm":[12.3]}}]}"#;
        let err = parse(text, &opts()).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 1, .. }), "{err}");
    }

    #[test]
    fn scorer_mismatch_reports_line() {
        let text = concat!(
            r#"{"prompt_id":"p1","candidates":[{"candidate_id":"a","samples":{"rm1":[1],"rm2":[2]}}]}"#,
            "\n\n",
            r#"{"prompt_id":"p2","candidates":[{"candidate_id":"a","samples":{"rm1":[1]}}]}"#,
        );
        let err = parse(text, &opts()).unwrap_err();
        match err {
            Error::ScorerMismatch { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
        assert!(err_string(text).contains("scorer set mismatch"));
    }

    fn err_string(text: &str) -> String {
        parse(text, &opts()).unwrap_err().to_string()
    }

    #[test]
    fn structural_errors() {
        let empty_pool = r#"{"prompt_id":"p1","candidates":[]}"#;
        assert!(matches!(parse(empty_pool, &opts()), Err(Error::EmptyPool { line: 1, .. })));
        let empty_set = r#"{"prompt_id":"p1","candidates":[{"candidate_id":"a","samples":{"rm":[]}}]}"#;
        assert!(matches!(parse(empty_set, &opts()), Err(Error::EmptySampleSet { .. })));
        let malformed = "{\"prompt_id\": 3}";
        assert!(matches!(parse(malformed, &opts()), Err(Error::Malformed { line: 1, .. })));
        let dup = r#"{"prompt_id":"p1","candidates":[{"candidate_id":"a","samples":{"rm":[1]}},{"candidate_id":"a","samples":{"rm":[1]}}]}"#;
        assert!(matches!(parse(dup, &opts()), Err(Error::DuplicateCandidate { .. })));
        let bad_err = r#"{"prompt_id":"p1","candidates":[{"candidate_id":"a","samples":{"rm":[1]},"error_score":1.5}]}"#;
        assert!(matches!(parse(bad_err, &opts()), Err(Error::Malformed { .. })));
        let unknown = r#"{"prompt_id":"p1","candidates":[{"candidate_id":"a","samples":{"rm":[1]},"bogus":1}]}"#;
        assert!(matches!(parse(unknown, &opts()), Err(Error::Malformed { .. })));
    }

    #[test]
    fn serialization_round_trip_is_exact() {
        let text = r#"{"prompt_id":"p1","candidates":[{"candidate_id":"a","samples":{"rm":[0.1,0.30000000000000004,-9.999]},"eval_samples":{"rm":[1e-7]},"ref_loglik_per_token":-1.25,"error_score":0.5,"token_length":17,"text":"héllo"}],"source":"proxy"}"#;
        let corpus = parse(text, &opts()).unwrap();
        let again = parse(&corpus.to_jsonl_string(), &opts()).unwrap();
        assert_eq!(corpus, again);
        assert!(corpus.to_jsonl_string().ends_with('\n'));
    }

    fn pool_with(n: usize, eval: bool) -> CandidatePool {
        let b = Bounds::default();
        let set = |k: usize| SampleSet::new((0..k).map(|i| i as f64 / 10.0).collect(), b).unwrap();
        CandidatePool {
            prompt_id: "p".into(),
            source: None,
            candidates: vec![Candidate {
                candidate_id: "a".into(),
                samples: [("rm".to_string(), set(n))].into(),
                eval_samples: eval.then(|| [("rm".to_string(), set(3))].into()),
                ref_loglik_per_token: None,
                error_score: None,
                token_length: None,
                text: None,
            }],
        }
    }

    #[test]
    fn split_uses_eval_field_when_present() {
        let pool = pool_with(4, true);
        let view = split_select_eval(&pool, SplitPolicy::Auto).unwrap();
        assert_eq!(view.provenance, SplitProvenance::Fields);
        assert_eq!(view.selection.candidates[0].samples["rm"].len(), 4);
        assert_eq!(view.evaluation.candidates[0].samples["rm"].len(), 3);
        assert!(view.selection.candidates[0].eval_samples.is_none());
    }

    #[test]
    fn index_split_halves_are_disjoint() {
        let pool = pool_with(10, false);
        let view = split_select_eval(&pool, SplitPolicy::Index { selection_len: 5 }).unwrap();
        let (sel, ev) = view.provenance.index_sets(10).unwrap();
        assert!(sel.end <= ev.start);
        assert_eq!(view.selection.candidates[0].samples["rm"].values(), [0.0, 0.1, 0.2, 0.3, 0.4]);
        assert_eq!(view.evaluation.candidates[0].samples["rm"].values(), [0.5, 0.6, 0.7, 0.8, 0.9]);
    }

    #[test]
    fn single_sample_cannot_be_index_split() {
        let pool = pool_with(1, false);
        assert!(split_select_eval(&pool, SplitPolicy::Index { selection_len: 1 }).is_err());
        assert!(split_select_eval(&pool, SplitPolicy::Auto).is_err());
        assert!(split_select_eval(&pool, SplitPolicy::EvalField).is_err());
    }

    #[test]
    fn split_policy_parses() {
        assert_eq!("index:5".parse::<SplitPolicy>().unwrap(), SplitPolicy::Index { selection_len: 5 });
        assert_eq!("eval-field".parse::<SplitPolicy>().unwrap(), SplitPolicy::EvalField);
        assert!("halves".parse::<SplitPolicy>().is_err());
    }
}
