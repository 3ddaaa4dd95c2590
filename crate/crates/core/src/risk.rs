//! Per-candidate statistics and risk measures.
//!
//! All functions are pure and operate on plain sample slices. The entropic
//! value
//!
//! ```text
//! V_beta(R) = -(1/beta) * log( (1/n) * sum_i exp(-beta * R_i) )
//! ```
//!
//! is evaluated with a max-shift so it stays finite for any finite input, and
//! the risk premium `mean - V_beta` is the non-negative price of risk
//! aversion.

use serde::{Deserialize, Serialize};

use crate::corpus::Bounds;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub mean: f64,
    /// Bessel-corrected standard deviation (`n - 1` denominator).
    pub std: f64,
    /// Uncentered-denominator variance, `((n - 1) / n) * std^2`.
    pub var_uncentered: f64,
    pub n: usize,
    /// Set when `n == 1`; `std` is then pinned to zero.
    pub degenerate: bool,
}

pub fn sample_stats(values: &[f64]) -> Result<SampleStats> {
    let n = values.len();
    if n == 0 {
        return Err(Error::EmptySamples);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let (std, degenerate) = if n == 1 {
        (0.0, true)
    } else {
        ((ss / (n - 1) as f64).sqrt(), false)
    };
    Ok(SampleStats {
        mean,
        std,
        var_uncentered: ss / n as f64,
        n,
        degenerate,
    })
}

/// Numerically stable `log((1/n) * sum_i exp(x_i))`.
pub(crate) fn log_mean_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + (x - max).exp(), n + 1));
    max + (sum / n as f64).ln()
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::param("beta", beta, "must be positive and finite"))
    }
}

pub fn entropic_value(values: &[f64], beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if values.is_empty() {
        return Err(Error::EmptySamples);
    }
    let lme = log_mean_exp(values.iter().map(|&r| -beta * r));
    let v = -lme / beta;
    // The plug-in value can never exceed the sample maximum nor undercut the
    // minimum; clamping removes last-ulp excursions for near-constant sets.
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    Ok(v.clamp(lo, hi))
}

pub fn risk_premium(values: &[f64], beta: f64) -> Result<f64> {
    let v = entropic_value(values, beta)?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(mean - v)
}

/// Mean of the `max(1, ceil(alpha * n))` smallest samples.
pub fn empirical_cvar(values: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::param("cvar_alpha", alpha, "must lie in (0, 1]"));
    }
    if values.is_empty() {
        return Err(Error::EmptySamples);
    }
    let k = tail_count(alpha, values.len());
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

/// `max(1, ceil(alpha * n))`, robust to `alpha * n` landing one ulp above an
/// integer.
pub(crate) fn tail_count(alpha: f64, n: usize) -> usize {
    let raw = alpha * n as f64;
    let rounded = raw.round();
    let k = if (raw - rounded).abs() <= 1e-9 * raw.max(1.0) {
        rounded
    } else {
        raw.ceil()
    };
    (k as usize).clamp(1, n)
}

/// Linear-interpolation quantile (the usual "type 7" definition): with the
/// values sorted ascending, position `h = (n - 1) * q` interpolates between
/// its floor and ceiling neighbours.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::param("quantile", q, "must lie in [0, 1]"));
    }
    if values.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, q))
}

pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Proxy error magnitudes `(eps_mu, eps_sigma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyEps {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskConfig {
    pub beta: f64,
    pub delta: f64,
    /// Multiplier on the confidence-width terms (the risk-budget knob).
    pub alpha_scale: f64,
    pub cvar_alpha: f64,
    pub subgaussian_nu: Option<f64>,
    pub proxy_eps: Option<ProxyEps>,
}

impl Default for RiskConfig {
    fn default() -> Self {
        RiskConfig {
            beta: 1.0,
            delta: 0.1,
            alpha_scale: 1.0,
            cvar_alpha: 0.1,
            subgaussian_nu: None,
            proxy_eps: None,
        }
    }
}

impl RiskConfig {
    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param("delta", self.delta, "must lie in (0, 1)"));
        }
        if !(self.alpha_scale >= 0.0 && self.alpha_scale.is_finite()) {
            return Err(Error::param("alpha_scale", self.alpha_scale, "must be non-negative"));
        }
        if !(self.cvar_alpha > 0.0 && self.cvar_alpha <= 1.0) {
            return Err(Error::param("cvar_alpha", self.cvar_alpha, "must lie in (0, 1]"));
        }
        if let Some(nu) = self.subgaussian_nu {
            if !(nu >= 0.0 && nu.is_finite()) {
                return Err(Error::param("subgaussian_nu", nu, "must be non-negative"));
            }
        }
        if let Some(p) = self.proxy_eps {
            if !(p.mu >= 0.0 && p.sigma >= 0.0) {
                return Err(Error::Config("proxy_eps components must be non-negative".into()));
            }
        }
        Ok(())
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::NoCandidates)
    } else {
        Ok(())
    }
}

/// Empirical-Bernstein lower confidence bound, uniform over `k` candidates
/// via a union bound (`delta' = delta / k`):
///
/// ```text
/// mean - alpha * [ sqrt(2 sigma^2 log(2/delta') / n) + 7 (b - a) log(2/delta') / (3 (n - 1)) ]
/// ```
pub fn lcb_bounded(stats: &SampleStats, k: usize, cfg: &RiskConfig, bounds: Bounds) -> Result<f64> {
    check_k(k)?;
    cfg.validate()?;
    if stats.n < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: stats.n,
        });
    }
    let n = stats.n as f64;
    let log_term = (2.0 * k as f64 / cfg.delta).ln();
    let width = (2.0 * stats.std * stats.std * log_term / n).sqrt()
        + 7.0 * bounds.width() * log_term / (3.0 * (n - 1.0));
    Ok(stats.mean - cfg.alpha_scale * width)
}

/// Leading coefficient `alpha * sqrt(2 log(2k/delta) / n)` of the bounded LCB;
/// the remaining term of [`lcb_bounded`] does not depend on the candidate.
pub fn lcb_dispersion_weight(n: usize, k: usize, cfg: &RiskConfig) -> f64 {
    cfg.alpha_scale * (2.0 * (2.0 * k as f64 / cfg.delta).ln() / n as f64).sqrt()
}

/// Sub-Gaussian LCB: `mean - alpha * nu * sqrt(2 log(k/delta) / n)`.
pub fn lcb_subgaussian(stats: &SampleStats, k: usize, cfg: &RiskConfig) -> Result<f64> {
    check_k(k)?;
    cfg.validate()?;
    let nu = cfg.subgaussian_nu.ok_or_else(|| Error::Config("subgaussian_nu is not set".into()))?;
    let n = stats.n as f64;
    let log_term = (k as f64 / cfg.delta).ln().max(0.0);
    Ok(stats.mean - cfg.alpha_scale * nu * (2.0 * log_term / n).sqrt())
}

/// Additive slack `eps_mu + alpha * eps_sigma * sqrt(log(k/delta) / n)` to
/// subtract from an LCB built on proxy statistics.
pub fn proxy_slack(cfg: &RiskConfig, k: usize, n: usize) -> Result<f64> {
    check_k(k)?;
    cfg.validate()?;
    let eps = cfg.proxy_eps.ok_or_else(|| Error::Config("proxy_eps is not set".into()))?;
    if n == 0 {
        return Err(Error::EmptySamples);
    }
    let log_term = (k as f64 / cfg.delta).ln().max(0.0);
    Ok(eps.mu + cfg.alpha_scale * eps.sigma * (log_term / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chi2Bound {
    pub value: f64,
    /// True when the extremal reweighting `1 - sqrt(rho) (R_i - mean) / sqrt(v)`
    /// is non-negative on every sample, i.e. `value` is the exact infimum.
    pub tight: bool,
}

/// Mean-dispersion lower bound on the worst-case mean over a chi-square
/// ball of radius `rho` around the empirical distribution:
/// `mean - sqrt(rho) * sqrt(v_uncentered)`.
pub fn chi2_robust_mean(values: &[f64], rho: f64) -> Result<Chi2Bound> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::param("rho", rho, "must be non-negative"));
    }
    let stats = sample_stats(values)?;
    let sd = stats.var_uncentered.sqrt();
    if sd == 0.0 || rho == 0.0 {
        return Ok(Chi2Bound {
            value: stats.mean,
            tight: true,
        });
    }
    let root = rho.sqrt();
    let tight = values.iter().all(|&r| 1.0 - root * (r - stats.mean) / sd >= 0.0);
    Ok(Chi2Bound {
        value: stats.mean - root * sd,
        tight,
    })
}

/// Radius whose chi-square robust mean equals `mean - lambda * std` in the
/// tight regime: `rho = (n / (n - 1)) * lambda^2`.
pub fn rho_from_lambda(lambda: f64, n: usize) -> Result<f64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::param("lambda", lambda, "must be non-negative"));
    }
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    Ok(n as f64 / (n as f64 - 1.0) * lambda * lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskProfile {
    pub stats: SampleStats,
    pub entropic_value: f64,
    pub risk_premium: f64,
    pub cvar: Option<f64>,
    pub lcb: Option<f64>,
}

/// Everything a decoder may need about one candidate. `lcb` is filled when
/// `k` and `bounds` are given and `n >= 2`.
pub fn risk_profile(values: &[f64], cfg: &RiskConfig, lcb_context: Option<(usize, Bounds)>) -> Result<RiskProfile> {
    let stats = sample_stats(values)?;
    let entropic = entropic_value(values, cfg.beta)?;
    let lcb = match lcb_context {
        Some((k, bounds)) if stats.n >= 2 => Some(lcb_bounded(&stats, k, cfg, bounds)?),
        _ => None,
    };
    Ok(RiskProfile {
        stats,
        entropic_value: entropic,
        risk_premium: stats.mean - entropic,
        cvar: Some(empirical_cvar(values, cfg.cvar_alpha)?),
        lcb,
    })
}
