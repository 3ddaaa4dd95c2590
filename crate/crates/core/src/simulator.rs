//! Synthetic heterogeneous-rater corpora and the experiments run on them.
//!
//! Each candidate's ratings come from a mixture of rater groups. A group has
//! a mean inside the rating bounds and Gaussian noise that is
//! rejection-resampled into the bounds, so every sample is bounded and the
//! exact law is known. The true mean and standard deviation of each
//! candidate are computed in closed form from the truncated-normal moments.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal as NormalDist};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::corpus::{Bounds, Candidate, CandidatePool, Corpus, SampleSet, SplitPolicy};
use crate::decoders::{DecoderConfig, Rule};
use crate::error::{Error, Result};
use crate::metrics::{self, EvalConfig, EvalOptions, RiskView};
use crate::numfmt;
use crate::pipeline::{self, SelectPlan};
use crate::risk::{self, RiskConfig};
use crate::rng;

const MAX_REJECTIONS: usize = 10_000;

/// Bounded mixture of rater groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureLaw {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub noise_std: f64,
    pub bounds: Bounds,
}

impl MixtureLaw {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, noise_std: f64, bounds: Bounds) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() {
            return Err(Error::LengthMismatch(weights.len(), means.len()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("mixture weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::param("mixture weight sum", total, "must equal 1"));
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::param("noise_std", noise_std, "must be non-negative"));
        }
        for &m in &means {
            if !m.is_finite() {
                return Err(Error::param("group mean", m, "must be finite"));
            }
            if noise_std == 0.0 && !bounds.contains(m) {
                return Err(Error::Degenerate("a noiseless group mean lies outside the bounds"));
            }
        }
        let law = MixtureLaw {
            weights,
            means,
            noise_std,
            bounds,
        };
        for (g, &m) in law.means.iter().enumerate() {
            if law.weights[g] > 0.0 && law.noise_std > 0.0 && law.group_mass(m) < 1e-12 {
                return Err(Error::Degenerate("a mixture group has no mass inside the bounds"));
            }
        }
        Ok(law)
    }

    fn standard() -> Normal {
        Normal::new(0.0, 1.0).expect("standard normal")
    }

    fn group_mass(&self, mean: f64) -> f64 {
        let z = Self::standard();
        let lo = (self.bounds.lo - mean) / self.noise_std;
        let hi = (self.bounds.hi - mean) / self.noise_std;
        z.cdf(hi) - z.cdf(lo)
    }

    /// Mean and variance of one truncated group.
    fn group_moments(&self, mean: f64) -> (f64, f64) {
        if self.noise_std == 0.0 {
            return (mean, 0.0);
        }
        let z = Self::standard();
        let s = self.noise_std;
        let a = (self.bounds.lo - mean) / s;
        let b = (self.bounds.hi - mean) / s;
        let mass = z.cdf(b) - z.cdf(a);
        let (pa, pb) = (z.pdf(a), z.pdf(b));
        let shift = (pa - pb) / mass;
        let m = mean + s * shift;
        let v = s * s * (1.0 + (a * pa - b * pb) / mass - shift * shift);
        (m, v.max(0.0))
    }

    pub fn true_mean(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .map(|(w, &m)| w * self.group_moments(m).0)
            .sum()
    }

    pub fn true_std(&self) -> f64 {
        let mean = self.true_mean();
        let second: f64 = self
            .weights
            .iter()
            .zip(&self.means)
            .map(|(w, &m)| {
                let (gm, gv) = self.group_moments(m);
                w * (gv + gm * gm)
            })
            .sum();
        (second - mean * mean).max(0.0).sqrt()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut group = self.weights.len() - 1;
        for (g, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                group = g;
                break;
            }
        }
        let mean = self.means[group];
        if self.noise_std == 0.0 {
            return Ok(mean);
        }
        let noise = NormalDist::new(0.0, self.noise_std).map_err(|_| Error::param("noise_std", self.noise_std, "invalid"))?;
        for _ in 0..MAX_REJECTIONS {
            let x = mean + noise.sample(rng);
            if self.bounds.contains(x) {
                return Ok(x);
            }
        }
        Err(Error::Degenerate("rejection sampling did not land inside the bounds"))
    }

    pub fn sample_n<R: Rng>(&self, rng: &mut R, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub prompts: usize,
    pub k: usize,
    pub n: usize,
    /// Held-out samples per candidate; 0 omits `eval_samples`.
    pub n_eval: usize,
    pub bounds: Bounds,
    pub scorer: String,
    /// Range of candidate centres.
    pub quality_lo: f64,
    pub quality_hi: f64,
    /// Range of the first group's weight (the second takes the rest).
    pub weight_lo: f64,
    pub weight_hi: f64,
    pub noise_std: f64,
    /// Largest group-mean gap on ordinary prompts.
    pub low_gap: f64,
    /// Largest group-mean gap on high-disagreement prompts.
    pub high_gap: f64,
    /// Share of prompts drawn as high-disagreement.
    pub high_fraction: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            prompts: 200,
            k: 16,
            n: 5,
            n_eval: 5,
            bounds: Bounds { lo: 0.0, hi: 10.0 },
            scorer: "sim".to_string(),
            quality_lo: 4.0,
            quality_hi: 7.0,
            weight_lo: 0.3,
            weight_hi: 0.7,
            noise_std: 0.5,
            low_gap: 0.5,
            high_gap: 6.0,
            high_fraction: 0.3,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.prompts == 0 || self.k == 0 || self.n == 0 {
            return Err(Error::Config("prompts, k and n must all be positive".into()));
        }
        let b = self.bounds;
        if !(b.lo <= self.quality_lo && self.quality_lo <= self.quality_hi && self.quality_hi <= b.hi) {
            return Err(Error::Config("quality range must lie inside the bounds".into()));
        }
        if !(0.0 <= self.weight_lo && self.weight_lo <= self.weight_hi && self.weight_hi <= 1.0) {
            return Err(Error::Config("weight range must lie inside [0, 1]".into()));
        }
        for (name, v) in [
            ("noise_std", self.noise_std),
            ("low_gap", self.low_gap),
            ("high_gap", self.high_gap),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, v, "must be non-negative"));
            }
        }
        if !(0.0..=1.0).contains(&self.high_fraction) {
            return Err(Error::param("high_fraction", self.high_fraction, "must lie in [0, 1]"));
        }
        if self.scorer.is_empty() {
            return Err(Error::Config("scorer id must be non-empty".into()));
        }
        Ok(())
    }

    /// Latent laws for the candidates of one prompt.
    fn draw_laws<R: Rng>(&self, rng: &mut R) -> Result<(bool, Vec<MixtureLaw>)> {
        let high = rng.random::<f64>() < self.high_fraction;
        let max_gap = if high { self.high_gap } else { self.low_gap };
        let laws = (0..self.k)
            .map(|_| {
                let centre = uniform(rng, self.quality_lo, self.quality_hi);
                let gap = uniform(rng, 0.0, max_gap);
                let w = uniform(rng, self.weight_lo, self.weight_hi);
                let clip = |m: f64| m.clamp(self.bounds.lo, self.bounds.hi);
                MixtureLaw::new(
                    vec![w, 1.0 - w],
                    vec![clip(centre - gap / 2.0), clip(centre + gap / 2.0)],
                    self.noise_std,
                    self.bounds,
                )
            })
            .collect::<Result<_>>()?;
        Ok((high, laws))
    }
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub prompt_id: String,
    pub candidate_id: String,
    pub true_mean: f64,
    pub true_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedCorpus {
    pub corpus: Corpus,
    pub truth: Vec<TruthRecord>,
    /// Prompt ids drawn as high-disagreement.
    pub high_prompts: Vec<String>,
}

pub fn write_truth_jsonl<W: Write>(truth: &[TruthRecord], mut w: W) -> Result<()> {
    for t in truth {
        w.write_all(numfmt::to_json_string(t)?.as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn prompt_id(i: usize) -> String {
    format!("p{i:05}")
}

fn candidate_id(j: usize) -> String {
    format!("c{j:02}")
}

/// Draw a corpus from the scenario. Every prompt uses its own stream, so the
/// output is identical for any degree of parallelism.
pub fn generate_corpus(cfg: &ScenarioConfig) -> Result<SimulatedCorpus> {
    cfg.validate()?;
    let drawn: Vec<(CandidatePool, Vec<TruthRecord>, bool)> = (0..cfg.prompts)
        .into_par_iter()
        .map(|i| {
            let pid = prompt_id(i);
            let mut stream = rng::prompt_stream(cfg.seed, &pid);
            let (high, laws) = cfg.draw_laws(&mut stream)?;
            let mut candidates = Vec::with_capacity(cfg.k);
            let mut truth = Vec::with_capacity(cfg.k);
            for (j, law) in laws.iter().enumerate() {
                let cid = candidate_id(j);
                let samples = SampleSet::new(law.sample_n(&mut stream, cfg.n)?, cfg.bounds)?;
                let eval_samples = if cfg.n_eval > 0 {
                    let set = SampleSet::new(law.sample_n(&mut stream, cfg.n_eval)?, cfg.bounds)?;
                    Some([(cfg.scorer.clone(), set)].into())
                } else {
                    None
                };
                truth.push(TruthRecord {
                    prompt_id: pid.clone(),
                    candidate_id: cid.clone(),
                    true_mean: law.true_mean(),
                    true_std: law.true_std(),
                });
                candidates.push(Candidate {
                    candidate_id: cid,
                    samples: [(cfg.scorer.clone(), samples)].into(),
                    eval_samples,
                    ref_loglik_per_token: None,
                    error_score: None,
                    token_length: None,
                    text: None,
                });
            }
            let pool = CandidatePool {
                prompt_id: pid,
                candidates,
                source: Some("simulated".to_string()),
            };
            Ok((pool, truth, high))
        })
        .collect::<Result<_>>()?;
    let mut pools = Vec::with_capacity(drawn.len());
    let mut truth = Vec::new();
    let mut high_prompts = Vec::new();
    for (pool, t, high) in drawn {
        if high {
            high_prompts.push(pool.prompt_id.clone());
        }
        pools.push(pool);
        truth.extend(t);
    }
    Ok(SimulatedCorpus {
        corpus: Corpus::new(pools, cfg.bounds, None)?,
        truth,
        high_prompts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub trials: usize,
    pub covered: usize,
    /// `None` when no trials were run.
    pub rate: Option<f64>,
}

/// Joint coverage for one trial: does every candidate's bound sit at or
/// below its true mean?
fn trial_covered<R: Rng>(
    cfg: &ScenarioConfig,
    risk_cfg: &RiskConfig,
    stream: &mut R,
    proxy: Option<(f64, f64)>,
) -> Result<(bool, f64, f64)> {
    let (_, laws) = cfg.draw_laws(stream)?;
    let slack = match proxy {
        Some(_) => risk::proxy_slack(risk_cfg, cfg.k, cfg.n)?,
        None => 0.0,
    };
    let mut all = true;
    let (mut max_dmu, mut max_dsigma) = (0.0f64, 0.0f64);
    for law in &laws {
        let mut values = law.sample_n(stream, cfg.n)?;
        if let Some((eps_mu, eps_sigma)) = proxy {
            let p = perturb_samples(&values, cfg.bounds, eps_mu, eps_sigma, stream)?;
            max_dmu = max_dmu.max(p.delta_mean);
            max_dsigma = max_dsigma.max(p.delta_std);
            values = p.values;
        }
        let stats = risk::sample_stats(&values)?;
        let lcb = risk::lcb_bounded(&stats, cfg.k, risk_cfg, cfg.bounds)? - slack;
        // The closed-form mixture mean can sit an ulp away from a noiseless
        // sample mean, hence the small tolerance.
        if law.true_mean() + 1e-9 < lcb {
            all = false;
        }
    }
    Ok((all, max_dmu, max_dsigma))
}

/// Fraction of trials in which the confidence bound holds for all `K`
/// candidates at once.
pub fn coverage_experiment(cfg: &ScenarioConfig, risk_cfg: &RiskConfig, trials: usize) -> Result<CoverageReport> {
    cfg.validate()?;
    risk_cfg.validate()?;
    if cfg.n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: cfg.n });
    }
    let covered = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut stream = rng::trial_stream(cfg.seed, t as u64);
            trial_covered(cfg, risk_cfg, &mut stream, None).map(|(c, _, _)| c as usize)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(CoverageReport {
        trials,
        covered,
        rate: (trials > 0).then(|| covered as f64 / trials as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyCoverageReport {
    pub coverage: CoverageReport,
    pub slack: f64,
    pub max_delta_mean: f64,
    pub max_delta_std: f64,
}

/// Coverage of `lcb - proxy_slack` computed on perturbed (proxy) samples
/// whose mean and standard deviation sit within `risk_cfg.proxy_eps` of the
/// unperturbed ones.
pub fn proxy_coverage_experiment(
    cfg: &ScenarioConfig,
    risk_cfg: &RiskConfig,
    trials: usize,
) -> Result<ProxyCoverageReport> {
    cfg.validate()?;
    risk_cfg.validate()?;
    if cfg.n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: cfg.n });
    }
    let eps = risk_cfg
        .proxy_eps
        .ok_or_else(|| Error::Config("proxy coverage needs proxy_eps".into()))?;
    let outcomes: Vec<(bool, f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut stream = rng::trial_stream(cfg.seed, t as u64);
            trial_covered(cfg, risk_cfg, &mut stream, Some((eps.mu, eps.sigma)))
        })
        .collect::<Result<_>>()?;
    let covered = outcomes.iter().filter(|o| o.0).count();
    Ok(ProxyCoverageReport {
        coverage: CoverageReport {
            trials,
            covered,
            rate: (trials > 0).then(|| covered as f64 / trials as f64),
        },
        slack: risk::proxy_slack(risk_cfg, cfg.k, cfg.n)?,
        max_delta_mean: outcomes.iter().map(|o| o.1).fold(0.0, f64::max),
        max_delta_std: outcomes.iter().map(|o| o.2).fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Perturbed {
    pub values: Vec<f64>,
    pub delta_mean: f64,
    pub delta_std: f64,
}

/// Shift a sample set by a bias in `[-eps_mu, eps_mu]` and rescale its
/// spread by a factor `c` with `|c * std - std| <= eps_sigma`. If the result
/// leaves the bounds, bias and rescaling are halved until it fits.
pub fn perturb_samples<R: Rng>(values: &[f64], bounds: Bounds, eps_mu: f64, eps_sigma: f64, rng: &mut R) -> Result<Perturbed> {
    if !(eps_mu >= 0.0 && eps_sigma >= 0.0) {
        return Err(Error::Config("proxy error magnitudes must be non-negative".into()));
    }
    let stats = risk::sample_stats(values)?;
    let bias = uniform(rng, -eps_mu, eps_mu);
    let (c_lo, c_hi) = if stats.std > 0.0 {
        ((1.0 - eps_sigma / stats.std).max(0.0), 1.0 + eps_sigma / stats.std)
    } else {
        (1.0, 1.0)
    };
    let mut stretch = uniform(rng, c_lo, c_hi) - 1.0;
    let mut bias = bias;
    let apply = |bias: f64, stretch: f64| -> Vec<f64> {
        values
            .iter()
            .map(|x| stats.mean + bias + (1.0 + stretch) * (x - stats.mean))
            .collect()
    };
    let mut out = apply(bias, stretch);
    let mut halvings = 0;
    while !out.iter().all(|&x| bounds.contains(x)) {
        halvings += 1;
        if halvings > 64 {
            out = values.to_vec();
            break;
        }
        bias /= 2.0;
        stretch /= 2.0;
        out = apply(bias, stretch);
    }
    let after = risk::sample_stats(&out)?;
    Ok(Perturbed {
        delta_mean: (after.mean - stats.mean).abs(),
        delta_std: (after.std - stats.std).abs(),
        values: out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbReport {
    pub max_delta_mean: f64,
    pub max_delta_std: f64,
}

/// Perturb the selection samples of every candidate under every scorer.
/// Held-out samples are left untouched.
pub fn proxy_perturb(corpus: &Corpus, eps_mu: f64, eps_sigma: f64, seed: u64) -> Result<(Corpus, PerturbReport)> {
    let mut report = PerturbReport {
        max_delta_mean: 0.0,
        max_delta_std: 0.0,
    };
    let mut pools = Vec::with_capacity(corpus.len());
    for pool in corpus.pools() {
        let mut stream = rng::prompt_stream(seed, &pool.prompt_id);
        let mut pool = pool.clone();
        for cand in &mut pool.candidates {
            for set in cand.samples.values_mut() {
                let p = perturb_samples(set.values(), set.bounds(), eps_mu, eps_sigma, &mut stream)?;
                report.max_delta_mean = report.max_delta_mean.max(p.delta_mean);
                report.max_delta_std = report.max_delta_std.max(p.delta_std);
                *set = SampleSet::new(p.values, set.bounds())?;
            }
        }
        pools.push(pool);
    }
    Ok((Corpus::new(pools, corpus.bounds(), corpus.meta().truncate)?, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendBucket {
    pub seed: u64,
    pub method: String,
    pub bucket: usize,
    pub count: usize,
    pub delta_tradeoff: Option<f64>,
    pub delta_cvar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendDispersion {
    pub seed: u64,
    pub method: String,
    /// Mean selection-time dispersion of the chosen candidates.
    pub mean_sigma: f64,
    pub base_mean_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub buckets: Vec<TrendBucket>,
    pub dispersion: Vec<TrendDispersion>,
}

/// Method label of the mean-rule reference in trend reports.
pub const BASE_LABEL: &str = "base";

/// Run each decoder against the mean rule on one corpus per seed, bucketing
/// prompts by the mean rule's selected dispersion.
pub fn trend_experiment(
    cfg: &ScenarioConfig,
    decoders: &[DecoderConfig],
    eval: &EvalConfig,
    seeds: &[u64],
) -> Result<TrendReport> {
    eval.validate()?;
    if cfg.prompts < eval.bucket_count {
        return Err(Error::Config(format!(
            "{} prompts cannot fill {} buckets",
            cfg.prompts, eval.bucket_count
        )));
    }
    if cfg.n_eval == 0 {
        return Err(Error::Config("trend experiments need held-out samples (n_eval > 0)".into()));
    }
    let mut methods = vec![DecoderConfig::new(Rule::Mean)];
    methods.extend(decoders.iter().cloned());
    let mut names: Vec<String> = methods.iter().map(|d| d.rule.to_string()).collect();
    names[0] = BASE_LABEL.to_string();
    let mut report = TrendReport {
        buckets: Vec::new(),
        dispersion: Vec::new(),
    };
    for &seed in seeds {
        let scenario = ScenarioConfig {
            seed,
            ..cfg.clone()
        };
        let sim = generate_corpus(&scenario)?;
        let mut plan = SelectPlan::single(
            methods
                .iter()
                .map(|d| DecoderConfig {
                    seed,
                    ..d.clone()
                })
                .collect(),
        );
        plan.scorer = Some(cfg.scorer.clone());
        let mut results = pipeline::select_corpus(&sim.corpus, &plan)?;
        for chunk in results.chunks_mut(methods.len()) {
            chunk[0].rule = BASE_LABEL.to_string();
        }
        let grouped = pipeline::group_by_method(&results);
        let opts = EvalOptions {
            config: *eval,
            split: SplitPolicy::EvalField,
            risk_view: RiskView::Selection,
            base: Some(names[0].clone()),
        };
        let ev = metrics::evaluate(&sim.corpus, &grouped, &opts)?;
        let overall = |m: &str| {
            ev.rows
                .iter()
                .find(|r| r.subset == "overall" && r.method == m)
                .map(|r| r.risk)
                .unwrap_or(f64::NAN)
        };
        let base_sigma = overall(&names[0]);
        for name in &names[1..] {
            report.dispersion.push(TrendDispersion {
                seed,
                method: name.clone(),
                mean_sigma: overall(name),
                base_mean_sigma: base_sigma,
            });
        }
        for b in ev.buckets {
            report.buckets.push(TrendBucket {
                seed,
                method: b.method,
                bucket: b.bucket,
                count: b.count,
                delta_tradeoff: b.delta_tradeoff,
                delta_cvar: b.delta_cvar,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(lo: f64, hi: f64) -> Bounds {
        Bounds::new(lo, hi).unwrap()
    }

    #[test]
    fn noiseless_single_group() {
        let law = MixtureLaw::new(vec![1.0], vec![5.0], 0.0, b(0.0, 10.0)).unwrap();
        let mut r = rng::trial_stream(1, 0);
        assert!(law.sample_n(&mut r, 50).unwrap().iter().all(|&x| x == 5.0));
        assert_eq!(law.true_std(), 0.0);
        assert_eq!(law.true_mean(), 5.0);
    }

    #[test]
    fn two_groups_average_out() {
        let law = MixtureLaw::new(vec![0.5, 0.5], vec![2.0, 8.0], 0.0, b(0.0, 10.0)).unwrap();
        let mut r = rng::trial_stream(2, 0);
        let xs = law.sample_n(&mut r, 10_000).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 5.0).abs() < 0.1);
        assert!((law.true_std() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_moments_match_samples() {
        let law = MixtureLaw::new(vec![0.3, 0.7], vec![1.0, 9.5], 1.5, b(0.0, 10.0)).unwrap();
        let mut r = rng::trial_stream(3, 0);
        let xs = law.sample_n(&mut r, 10_000).unwrap();
        let st = risk::sample_stats(&xs).unwrap();
        let tol = 3.0 * law.true_std() / 100.0;
        assert!((st.mean - law.true_mean()).abs() < tol, "{} vs {}", st.mean, law.true_mean());
        assert!((st.std - law.true_std()).abs() < 0.1);
    }

    #[test]
    fn degenerate_mixtures_are_rejected() {
        assert!(MixtureLaw::new(vec![1.0], vec![50.0], 0.1, b(0.0, 10.0)).is_err());
        assert!(MixtureLaw::new(vec![1.0], vec![12.0], 0.0, b(0.0, 10.0)).is_err());
        assert!(MixtureLaw::new(vec![0.5, 0.6], vec![1.0, 2.0], 0.1, b(0.0, 10.0)).is_err());
    }

    #[test]
    fn corpus_generation_is_reproducible() {
        let cfg = ScenarioConfig {
            prompts: 12,
            k: 4,
            seed: 9,
            ..ScenarioConfig::default()
        };
        let a = generate_corpus(&cfg).unwrap();
        let b = generate_corpus(&cfg).unwrap();
        assert_eq!(a.corpus.to_jsonl_string(), b.corpus.to_jsonl_string());
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.truth.len(), 48);
        let c = generate_corpus(&ScenarioConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a.corpus.to_jsonl_string(), c.corpus.to_jsonl_string());
    }

    #[test]
    fn coverage_examples() {
        let cfg = ScenarioConfig {
            k: 4,
            n: 5,
            seed: 4,
            ..ScenarioConfig::default()
        };
        let rc = RiskConfig::default();
        let r = coverage_experiment(&cfg, &rc, 0).unwrap();
        assert_eq!((r.trials, r.rate), (0, None));

        let r = coverage_experiment(&cfg, &rc, 500).unwrap();
        assert_eq!(r.rate, Some(1.0));

        let naive = RiskConfig {
            alpha_scale: 0.0,
            ..rc
        };
        let r = coverage_experiment(&cfg, &naive, 500).unwrap();
        assert!(r.rate.unwrap() < 1.0);

        let flat = ScenarioConfig {
            noise_std: 0.0,
            low_gap: 0.0,
            high_gap: 0.0,
            ..cfg.clone()
        };
        assert_eq!(coverage_experiment(&flat, &naive, 200).unwrap().rate, Some(1.0));

        let tiny = ScenarioConfig { n: 1, ..cfg };
        assert!(coverage_experiment(&tiny, &rc, 10).is_err());
    }

    #[test]
    fn perturbation_respects_budgets() {
        let mut r = rng::trial_stream(5, 0);
        let xs = [1.0, 4.0, 6.0, 9.5];
        let p = perturb_samples(&xs, b(0.0, 10.0), 0.0, 0.0, &mut r).unwrap();
        assert_eq!(p.values, xs.to_vec());
        for _ in 0..200 {
            let p = perturb_samples(&xs, b(0.0, 10.0), 0.3, 0.2, &mut r).unwrap();
            assert!(p.delta_mean <= 0.3 + 1e-12);
            assert!(p.delta_std <= 0.2 + 1e-12);
            assert!(p.values.iter().all(|&x| (0.0..=10.0).contains(&x)));
        }
    }

    #[test]
    fn trend_self_comparison_is_zero() {
        let cfg = ScenarioConfig {
            prompts: 20,
            k: 4,
            ..ScenarioConfig::default()
        };
        let rep = trend_experiment(&cfg, &[DecoderConfig::new(Rule::Mean)], &EvalConfig::default(), &[1]).unwrap();
        assert_eq!(rep.buckets.len(), 5);
        assert!(rep.buckets.iter().all(|b| b.delta_tradeoff.is_none_or(|d| d == 0.0)));
        assert!(rep.buckets.iter().all(|b| b.delta_cvar.is_none_or(|d| d == 0.0)));
        assert!(rep.dispersion.iter().all(|d| d.mean_sigma == d.base_mean_sigma));
        let few = ScenarioConfig { prompts: 3, ..cfg };
        assert!(trend_experiment(&few, &[], &EvalConfig::default(), &[1]).is_err());
    }
}
