//! Held-out evaluation of selections and the statistics behind it.
//!
//! The per-prompt primitives (tradeoff, tail averages, win/tie/loss, rank
//! correlations, top-q overlap) are plain functions over slices; [`evaluate`]
//! wires them into per-method report tables. Reporting is always within one
//! scorer on its raw scale, even when the selection used a scorer panel.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corpus::{split_select_eval, CandidatePool, Corpus, SplitPolicy};
use crate::decoders::SelectionRecord;
use crate::error::{Error, Result};
use crate::risk::{self, tail_count};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Weight on the selection-time dispersion in the tradeoff score.
    pub lambda_eval: f64,
    /// Tail fraction for the prompt-level CVaR.
    pub cvar_alpha_prompts: f64,
    /// Fraction of prompts in the high-disagreement subset.
    pub hv_fraction: f64,
    /// Ties are `|delta| <= wtl_eps`.
    pub wtl_eps: f64,
    pub bucket_count: usize,
    pub overlap_q: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            lambda_eval: 1.99,
            cvar_alpha_prompts: 0.10,
            hv_fraction: 0.20,
            wtl_eps: 0.0,
            bucket_count: 5,
            overlap_q: 0.20,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda_eval.is_finite() {
            return Err(Error::param("lambda_eval", self.lambda_eval, "must be finite"));
        }
        for (name, v) in [
            ("cvar_alpha_prompts", self.cvar_alpha_prompts),
            ("hv_fraction", self.hv_fraction),
            ("overlap_q", self.overlap_q),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::param(name, v, "must lie in (0, 1]"));
            }
        }
        if !(self.wtl_eps >= 0.0) {
            return Err(Error::param("wtl_eps", self.wtl_eps, "must be non-negative"));
        }
        if self.bucket_count < 2 {
            return Err(Error::param("bucket_count", self.bucket_count as f64, "must be at least 2"));
        }
        Ok(())
    }
}

/// `mu_eval - lambda * sigma_sel`.
pub fn tradeoff(mu_eval: f64, sigma_sel: f64, lambda_eval: f64) -> f64 {
    mu_eval - lambda_eval * sigma_sel
}

/// Mean of the `ceil(alpha * N)` smallest prompt outcomes.
pub fn cvar_over_prompts(outcomes: &[f64], alpha: f64) -> Result<f64> {
    risk::empirical_cvar(outcomes, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Wtl {
    pub win: usize,
    pub tie: usize,
    pub loss: usize,
}

pub fn wtl(delta: &[f64], eps: f64) -> Result<Wtl> {
    if !(eps >= 0.0) {
        return Err(Error::param("wtl_eps", eps, "must be non-negative"));
    }
    let mut out = Wtl::default();
    for &d in delta {
        if d.abs() <= eps {
            out.tie += 1;
        } else if d > 0.0 {
            out.win += 1;
        } else {
            out.loss += 1;
        }
    }
    Ok(out)
}

/// Indices of the top `ceil(fraction * N)` entries by descending `score`,
/// ties broken by ascending `ids`. Returned in rank order.
pub fn top_fraction(ids: &[String], score: &[f64], fraction: f64) -> Result<Vec<usize>> {
    if ids.len() != score.len() {
        return Err(Error::LengthMismatch(ids.len(), score.len()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::param("fraction", fraction, "must lie in (0, 1]"));
    }
    if ids.is_empty() {
        return Ok(Vec::new());
    }
    let k = tail_count(fraction, ids.len());
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then_with(|| ids[a].cmp(&ids[b])));
    order.truncate(k);
    Ok(order)
}

/// High-disagreement subset: prompt ids of the top `ceil(p * N)` prompts by
/// the base method's dispersion.
pub fn hv_subset(base_sigma: &[(String, f64)], p: f64) -> Result<Vec<String>> {
    let (ids, sigma): (Vec<String>, Vec<f64>) = base_sigma.iter().cloned().unzip();
    Ok(top_fraction(&ids, &sigma, p)?.into_iter().map(|i| ids[i].clone()).collect())
}

/// Largest per-candidate sample variance (`n - 1` denominator) in the pool.
pub fn disagreement_summary_d(pool: &CandidatePool, scorer: &str) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::NoCandidates);
    }
    pool.scorer_values(scorer)?
        .into_iter()
        .map(|v| {
            if v.is_empty() {
                return Err(Error::EmptySamples);
            }
            if v.len() == 1 {
                return Ok(0.0);
            }
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            Ok(v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64)
        })
        .try_fold(f64::NEG_INFINITY, |m, v| v.map(|v| m.max(v)))
}

/// Bucket index (0-based) of each key under `count` quantile buckets. Edges
/// are the linear-interpolation quantiles at `j / count`; a key equal to an
/// edge belongs to the lower bucket.
pub fn bucket_assign(keys: &[f64], count: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    if count == 0 {
        return Err(Error::param("bucket_count", 0.0, "must be positive"));
    }
    if keys.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut sorted = keys.to_vec();
    sorted.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (0..=count)
        .map(|j| risk::quantile_sorted(&sorted, j as f64 / count as f64))
        .collect();
    let assign = keys
        .iter()
        .map(|&x| (1..=count).find(|&b| x <= edges[b]).unwrap_or(count) - 1)
        .collect();
    Ok((assign, edges))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketStat {
    /// 1-based bucket number, ascending in key.
    pub bucket: usize,
    pub key_lo: f64,
    pub key_hi: f64,
    pub count: usize,
    pub mean: Option<f64>,
    /// Normal-approximation 95% interval; absent below two members.
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

fn mean_ci(values: &[f64]) -> (Option<f64>, Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), None, None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let half = 1.96 * (var / n).sqrt();
    (Some(mean), Some(mean - half), Some(mean + half))
}

/// Per-bucket mean of `values`, bucketing on `keys`. With `count = 1` the
/// single bucket holds the global mean.
pub fn bucket_deltas(values: &[f64], keys: &[f64], count: usize) -> Result<Vec<BucketStat>> {
    if values.len() != keys.len() {
        return Err(Error::LengthMismatch(values.len(), keys.len()));
    }
    let (assign, edges) = bucket_assign(keys, count)?;
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); count];
    for (&b, &v) in assign.iter().zip(values) {
        members[b].push(v);
    }
    Ok(members
        .iter()
        .enumerate()
        .map(|(b, m)| {
            let (mean, ci_lo, ci_hi) = mean_ci(m);
            BucketStat {
                bucket: b + 1,
                key_lo: edges[b],
                key_hi: edges[b + 1],
                count: m.len(),
                mean,
                ci_lo,
                ci_hi,
            }
        })
        .collect())
}

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: x.len() });
    }
    Ok(())
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("constant series"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Kendall's tau-b.
pub fn kendall(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len();
    let (mut concordant, mut discordant, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].total_cmp(&x[j]) as i64;
            let dy = y[i].total_cmp(&y[j]) as i64;
            if dx == 0 {
                tie_x += 1;
            }
            if dy == 0 {
                tie_y += 1;
            }
            match dx * dy {
                1 => concordant += 1,
                -1 => discordant += 1,
                _ => {}
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = (((n0 - tie_x) as f64) * ((n0 - tie_y) as f64)).sqrt();
    if denom == 0.0 {
        return Err(Error::Degenerate("constant series"));
    }
    Ok(((concordant - discordant) as f64 / denom).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialCorrelation {
    pub value: f64,
    /// A residual series vanished (a control explains it exactly); `value`
    /// is then reported as 0.
    pub degenerate: bool,
}

/// Residuals of `y` after least squares on `[1, controls...]`.
fn residualize(y: &[f64], design: &DMatrix<f64>) -> Result<DVector<f64>> {
    let svd = design.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let tol = max_sv * 1e-10 * design.nrows().max(design.ncols()) as f64;
    if svd.rank(tol) < design.ncols() {
        return Err(Error::Singular);
    }
    let y = DVector::from_column_slice(y);
    let coef = svd.solve(&y, tol).map_err(|_| Error::Singular)?;
    Ok(&y - design * coef)
}

/// Spearman correlation of `x` and `y` after removing the linear effect of
/// the ranked `controls` (each a series of the same length).
pub fn partial_spearman(x: &[f64], y: &[f64], controls: &[Vec<f64>]) -> Result<PartialCorrelation> {
    check_pair(x, y)?;
    if controls.is_empty() {
        return Ok(PartialCorrelation {
            value: spearman(x, y)?,
            degenerate: false,
        });
    }
    let n = x.len();
    for c in controls {
        if c.len() != n {
            return Err(Error::LengthMismatch(n, c.len()));
        }
    }
    if n <= controls.len() + 1 {
        return Err(Error::InsufficientSamples {
            needed: controls.len() + 2,
            got: n,
        });
    }
    let mut design = DMatrix::from_element(n, controls.len() + 1, 1.0);
    for (j, c) in controls.iter().enumerate() {
        design.set_column(j + 1, &DVector::from_vec(average_ranks(c)));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let ex = residualize(&rx, &design)?;
    let ey = residualize(&ry, &design)?;
    let scale = |r: &[f64]| {
        let m = r.iter().sum::<f64>() / n as f64;
        r.iter().map(|v| (v - m) * (v - m)).sum::<f64>().sqrt()
    };
    let vanished = |e: &DVector<f64>, r: &[f64]| e.norm() <= 1e-9 * scale(r).max(1.0);
    if vanished(&ex, &rx) || vanished(&ey, &ry) {
        return Ok(PartialCorrelation {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(PartialCorrelation {
        value: pearson(ex.as_slice(), ey.as_slice())?,
        degenerate: false,
    })
}

fn log_factorials(n: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(n + 1);
    t.push(0.0);
    for i in 1..=n {
        t.push(t[i - 1] + (i as f64).ln());
    }
    t
}

/// `P(X >= x)` for `X ~ Hypergeometric(population, successes, draws)`,
/// summed exactly in log space.
pub fn hypergeom_tail(population: usize, successes: usize, draws: usize, x: usize) -> Result<f64> {
    if successes > population || draws > population {
        return Err(Error::Config(format!(
            "hypergeometric parameters ({population}, {successes}, {draws}) are inconsistent"
        )));
    }
    let lf = log_factorials(population);
    let ln_choose = |n: usize, k: usize| lf[n] - lf[k] - lf[n - k];
    let lo = (successes + draws).saturating_sub(population);
    let hi = successes.min(draws);
    let start = x.max(lo);
    if start > hi {
        return Ok(0.0);
    }
    if start == lo {
        return Ok(1.0);
    }
    let denom = ln_choose(population, draws);
    let terms: Vec<f64> = (start..=hi)
        .map(|i| ln_choose(successes, i) + ln_choose(population - successes, draws - i) - denom)
        .collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let p = m.exp() * terms.iter().map(|t| (t - m).exp()).sum::<f64>();
    Ok(p.min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub k: usize,
    pub intersection: usize,
    pub precision: f64,
    pub recall: f64,
    pub jaccard: f64,
    pub hypergeom_p: f64,
}

/// Agreement of the top `ceil(q * N)` sets chosen by `x` and by `y`.
pub fn topq_overlap(ids: &[String], x: &[f64], y: &[f64], q: f64) -> Result<Overlap> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if ids.is_empty() {
        return Err(Error::EmptySamples);
    }
    let a = top_fraction(ids, x, q)?;
    let b = top_fraction(ids, y, q)?;
    let k = a.len();
    let inter = a.iter().filter(|i| b.contains(i)).count();
    let union = 2 * k - inter;
    Ok(Overlap {
        k,
        intersection: inter,
        precision: inter as f64 / k as f64,
        recall: inter as f64 / b.len() as f64,
        jaccard: inter as f64 / union as f64,
        hypergeom_p: hypergeom_tail(ids.len(), k, k, inter)?,
    })
}

/// Paired-rating scalarizations against a base response: the mean rating
/// difference, and the pairwise win rate (ties count one half) minus one
/// half.
pub fn scalarize_s0_s1(method: &[f64], base: &[f64]) -> Result<(f64, f64)> {
    if method.len() != base.len() {
        return Err(Error::LengthMismatch(method.len(), base.len()));
    }
    if method.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n = method.len() as f64;
    let s0 = method.iter().zip(base).map(|(m, b)| m - b).sum::<f64>() / n;
    let wins: f64 = method
        .iter()
        .zip(base)
        .map(|(m, b)| match m.total_cmp(b) {
            std::cmp::Ordering::Greater => 1.0,
            std::cmp::Ordering::Equal => 0.5,
            std::cmp::Ordering::Less => 0.0,
        })
        .sum();
    Ok((s0, wins / n - 0.5))
}

/// One method's choice per prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSelections {
    pub method: String,
    /// prompt id -> candidate id
    pub picks: BTreeMap<String, String>,
}

/// Group selection lines by their `rule` field, keeping first-appearance
/// order of methods.
pub fn read_selections<R: BufRead>(reader: R) -> Result<Vec<MethodSelections>> {
    let mut methods: Vec<MethodSelections> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SelectionRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        let slot = *index.entry(rec.rule.clone()).or_insert_with(|| {
            methods.push(MethodSelections {
                method: rec.rule.clone(),
                picks: BTreeMap::new(),
            });
            methods.len() - 1
        });
        if methods[slot].picks.insert(rec.prompt_id.clone(), rec.candidate_id).is_some() {
            return Err(Error::Malformed {
                line: i + 1,
                message: format!("second selection for prompt `{}` under `{}`", rec.prompt_id, rec.rule),
            });
        }
    }
    Ok(methods)
}

/// Which view the reported dispersion of a selected candidate is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiskView {
    #[default]
    Selection,
    Evaluation,
}

impl std::str::FromStr for RiskView {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "selection" => Ok(RiskView::Selection),
            "evaluation" => Ok(RiskView::Evaluation),
            _ => Err(Error::Config(format!("risk view `{s}` is not selection or evaluation"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub config: EvalConfig,
    pub split: SplitPolicy,
    pub risk_view: RiskView,
    /// Reference method for deltas; defaults to `mean` when present, else
    /// the first method.
    pub base: Option<String>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            config: EvalConfig::default(),
            split: SplitPolicy::Auto,
            risk_view: RiskView::Selection,
            base: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub scorer: String,
    /// `overall` or `hv`.
    pub subset: String,
    pub method: String,
    pub reward: f64,
    pub risk: f64,
    pub tradeoff: f64,
    pub cvar10: f64,
    pub win: usize,
    pub tie: usize,
    pub loss: usize,
    pub mean_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub scorer: String,
    pub method: String,
    pub bucket: usize,
    pub key_lo: f64,
    pub key_hi: f64,
    pub count: usize,
    pub delta_tradeoff: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub delta_cvar: Option<f64>,
}

/// How well the base selection's dispersion tracks the pool-level rating
/// variance on held-out samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub scorer: String,
    pub prompts: usize,
    pub spearman: Option<f64>,
    pub kendall: Option<f64>,
    pub partial_spearman: Option<f64>,
    pub partial_degenerate: bool,
    pub controls: Vec<String>,
    pub overlap: Option<Overlap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub base: String,
    pub options: EvalOptions,
    pub rows: Vec<MethodRow>,
    pub buckets: Vec<BucketRow>,
    pub correlations: Vec<CorrelationRow>,
}

pub const METRIC_COLUMNS: [&str; 9] = [
    "method", "reward", "risk", "tradeoff", "cvar10", "win", "tie", "loss", "mean_delta",
];

impl EvalReport {
    /// Metric table as CSV: `scorer,subset` followed by the fixed metric
    /// columns.
    pub fn write_metrics_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["scorer", "subset"];
        header.extend(METRIC_COLUMNS);
        out.write_record(&header)?;
        for r in &self.rows {
            out.write_record([
                r.scorer.clone(),
                r.subset.clone(),
                r.method.clone(),
                crate::numfmt::format_g17(r.reward),
                crate::numfmt::format_g17(r.risk),
                crate::numfmt::format_g17(r.tradeoff),
                crate::numfmt::format_g17(r.cvar10),
                r.win.to_string(),
                r.tie.to_string(),
                r.loss.to_string(),
                crate::numfmt::format_g17(r.mean_delta),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Bucket table as plot-ready CSV.
    pub fn write_buckets_csv<W: Write>(&self, w: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map(crate::numfmt::format_g17).unwrap_or_default();
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "scorer",
            "method",
            "bucket",
            "key_lo",
            "key_hi",
            "count",
            "delta_tradeoff",
            "ci_lo",
            "ci_hi",
            "delta_cvar",
        ])?;
        for b in &self.buckets {
            out.write_record([
                b.scorer.clone(),
                b.method.clone(),
                b.bucket.to_string(),
                crate::numfmt::format_g17(b.key_lo),
                crate::numfmt::format_g17(b.key_hi),
                b.count.to_string(),
                opt(b.delta_tradeoff),
                opt(b.ci_lo),
                opt(b.ci_hi),
                opt(b.delta_cvar),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Per-prompt numbers of one method under one scorer.
struct Outcomes {
    mu_eval: Vec<f64>,
    sigma: Vec<f64>,
}

struct PromptViews {
    selection: CandidatePool,
    evaluation: CandidatePool,
}

fn summarize(
    scorer: &str,
    subset: &str,
    method: &str,
    idx: &[usize],
    out: &Outcomes,
    base: &Outcomes,
    cfg: &EvalConfig,
) -> Result<MethodRow> {
    let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let mu = pick(&out.mu_eval);
    let sigma = pick(&out.sigma);
    let n = mu.len() as f64;
    let reward = mu.iter().sum::<f64>() / n;
    let risk = sigma.iter().sum::<f64>() / n;
    let delta: Vec<f64> = idx.iter().map(|&i| out.mu_eval[i] - base.mu_eval[i]).collect();
    let counts = wtl(&delta, cfg.wtl_eps)?;
    Ok(MethodRow {
        scorer: scorer.to_string(),
        subset: subset.to_string(),
        method: method.to_string(),
        reward,
        risk,
        tradeoff: tradeoff(reward, risk, cfg.lambda_eval),
        cvar10: cvar_over_prompts(&mu, cfg.cvar_alpha_prompts)?,
        win: counts.win,
        tie: counts.tie,
        loss: counts.loss,
        mean_delta: delta.iter().sum::<f64>() / n,
    })
}

/// Score every method's selections on held-out samples, per scorer, over
/// all prompts and over the high-disagreement subset.
pub fn evaluate(corpus: &Corpus, methods: &[MethodSelections], opts: &EvalOptions) -> Result<EvalReport> {
    let cfg = &opts.config;
    cfg.validate()?;
    if methods.is_empty() {
        return Err(Error::Config("no methods to evaluate".into()));
    }
    if corpus.is_empty() {
        return Err(Error::NoCandidates);
    }
    let base_name = match &opts.base {
        Some(b) => b.clone(),
        None if methods.iter().any(|m| m.method == "mean") => "mean".to_string(),
        None => methods[0].method.clone(),
    };
    let base_idx = methods
        .iter()
        .position(|m| m.method == base_name)
        .ok_or_else(|| Error::Config(format!("base method `{base_name}` has no selections")))?;

    for m in methods {
        if let Some(p) = m.picks.keys().find(|p| corpus.pool(p).is_none()) {
            return Err(Error::UnknownPrompt(p.clone()));
        }
    }
    let views = corpus
        .pools()
        .iter()
        .map(|p| {
            split_select_eval(p, opts.split).map(|v| PromptViews {
                selection: v.selection,
                evaluation: v.evaluation,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<String> = corpus.pools().iter().map(|p| p.prompt_id.clone()).collect();

    // Candidate index picked by each method on each prompt.
    let picks: Vec<Vec<usize>> = methods
        .iter()
        .map(|m| {
            corpus
                .pools()
                .iter()
                .map(|pool| {
                    let cid = m.picks.get(&pool.prompt_id).ok_or_else(|| Error::MissingSelection {
                        method: m.method.clone(),
                        prompt_id: pool.prompt_id.clone(),
                    })?;
                    pool.position(cid).ok_or_else(|| Error::UnknownCandidate {
                        prompt_id: pool.prompt_id.clone(),
                        candidate_id: cid.clone(),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut buckets = Vec::new();
    let mut correlations = Vec::new();
    for scorer in corpus.scorer_ids() {
        let outcomes: Vec<Outcomes> = picks
            .iter()
            .map(|p| {
                let mut mu_eval = Vec::with_capacity(p.len());
                let mut sigma = Vec::with_capacity(p.len());
                for (v, &c) in views.iter().zip(p) {
                    let ev = v.evaluation.candidates[c].scorer_samples(scorer)?.values();
                    mu_eval.push(risk::sample_stats(ev)?.mean);
                    let risk_pool = match opts.risk_view {
                        RiskView::Selection => &v.selection,
                        RiskView::Evaluation => &v.evaluation,
                    };
                    let rs = risk_pool.candidates[c].scorer_samples(scorer)?.values();
                    sigma.push(risk::sample_stats(rs)?.std);
                }
                Ok(Outcomes { mu_eval, sigma })
            })
            .collect::<Result<_>>()?;
        let base = &outcomes[base_idx];
        let all: Vec<usize> = (0..ids.len()).collect();
        let hv = top_fraction(&ids, &base.sigma, cfg.hv_fraction)?;
        let mut hv_sorted = hv.clone();
        hv_sorted.sort_unstable();
        for (subset, idx) in [("overall", &all), ("hv", &hv_sorted)] {
            for (m, out) in methods.iter().zip(&outcomes) {
                rows.push(summarize(scorer, subset, &m.method, idx, out, base, cfg)?);
            }
        }

        let (assign, edges) = bucket_assign(&base.sigma, cfg.bucket_count)?;
        let base_z: Vec<f64> = (0..ids.len())
            .map(|i| tradeoff(base.mu_eval[i], base.sigma[i], cfg.lambda_eval))
            .collect();
        for (m, out) in methods.iter().zip(&outcomes) {
            if m.method == base_name {
                continue;
            }
            for b in 0..cfg.bucket_count {
                let members: Vec<usize> = (0..ids.len()).filter(|&i| assign[i] == b).collect();
                let delta: Vec<f64> = members
                    .iter()
                    .map(|&i| tradeoff(out.mu_eval[i], out.sigma[i], cfg.lambda_eval) - base_z[i])
                    .collect();
                let (mean, ci_lo, ci_hi) = mean_ci(&delta);
                let delta_cvar = if members.is_empty() {
                    None
                } else {
                    let a: Vec<f64> = members.iter().map(|&i| out.mu_eval[i]).collect();
                    let c: Vec<f64> = members.iter().map(|&i| base.mu_eval[i]).collect();
                    Some(
                        cvar_over_prompts(&a, cfg.cvar_alpha_prompts)?
                            - cvar_over_prompts(&c, cfg.cvar_alpha_prompts)?,
                    )
                };
                buckets.push(BucketRow {
                    scorer: scorer.clone(),
                    method: m.method.clone(),
                    bucket: b + 1,
                    key_lo: edges[b],
                    key_hi: edges[b + 1],
                    count: members.len(),
                    delta_tradeoff: mean,
                    ci_lo,
                    ci_hi,
                    delta_cvar,
                });
            }
        }

        correlations.push(proxy_validity(scorer, &ids, &views, &picks[base_idx], base, cfg)?);
    }

    Ok(EvalReport {
        base: base_name,
        options: opts.clone(),
        rows,
        buckets,
        correlations,
    })
}

fn proxy_validity(
    scorer: &str,
    ids: &[String],
    views: &[PromptViews],
    base_picks: &[usize],
    base: &Outcomes,
    cfg: &EvalConfig,
) -> Result<CorrelationRow> {
    let d = views
        .iter()
        .map(|v| disagreement_summary_d(&v.evaluation, scorer))
        .collect::<Result<Vec<_>>>()?;
    let x = &base.sigma;
    let mut controls = vec![base.mu_eval.clone()];
    let mut control_names = vec!["base_mean".to_string()];
    let lengths: Option<Vec<f64>> = views
        .iter()
        .zip(base_picks)
        .map(|(v, &c)| v.selection.candidates[c].token_length.map(|l| l as f64))
        .collect();
    if let Some(l) = lengths {
        controls.push(l);
        control_names.push("token_length".to_string());
    }
    let partial = partial_spearman(x, &d, &controls).ok();
    Ok(CorrelationRow {
        scorer: scorer.to_string(),
        prompts: ids.len(),
        spearman: spearman(x, &d).ok(),
        kendall: kendall(x, &d).ok(),
        partial_spearman: partial.map(|p| p.value),
        partial_degenerate: partial.is_some_and(|p| p.degenerate),
        controls: control_names,
        overlap: topq_overlap(ids, x, &d, cfg.overlap_q).ok(),
    })
}
