//! Brute-force optimizers used only to certify closed forms.
//!
//! Nothing on a decoding path calls into this module. Each oracle solves the
//! primal problem directly over the probability simplex and reports
//! non-convergence instead of returning a best-effort value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest sample count accepted by [`kl_dro_oracle`].
pub const KL_ORACLE_CAP: usize = 8;
/// Largest sample count accepted by [`chi2_dro_oracle`].
pub const CHI2_ORACLE_CAP: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleBudget {
    pub max_iters: usize,
    /// Stop once the search radius (grid) or the largest log-weight update
    /// (mirror descent) drops below this.
    pub tol: f64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget {
            max_iters: 2_000,
            tol: 1e-11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub value: f64,
    /// Minimizing distribution over the samples.
    pub weights: Vec<f64>,
    pub iterations: usize,
}

/// `sum_i q_i R_i + (1/beta) * sum_i q_i log(n q_i)`, with `0 log 0 = 0`.
fn kl_objective(q: &[f64], values: &[f64], beta: f64) -> f64 {
    let n = values.len() as f64;
    let linear: f64 = q.iter().zip(values).map(|(qi, r)| qi * r).sum();
    let entropy: f64 = q
        .iter()
        .filter(|&&qi| qi > 0.0)
        .map(|&qi| qi * (n * qi).ln())
        .sum();
    linear + entropy / beta
}

/// Minimize the KL-regularized worst-case mean
///
/// ```text
/// min_{q in simplex}  sum_i q_i R_i + (1/beta) KL(q || uniform)
/// ```
///
/// by successive grid refinement for `n <= 3` and entropic mirror descent
/// for `4 <= n <= 8`.
pub fn kl_dro_oracle(values: &[f64], beta: f64, budget: OracleBudget) -> Result<OracleSolution> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::param("beta", beta, "must be positive and finite"));
    }
    match values.len() {
        0 => Err(Error::EmptySamples),
        1 => Ok(OracleSolution {
            value: values[0],
            weights: vec![1.0],
            iterations: 0,
        }),
        n if n <= 3 => grid_refine(values.len(), budget, |q| kl_objective(q, values, beta)),
        n if n <= KL_ORACLE_CAP => mirror_descent(values, beta, budget),
        n => Err(Error::OracleTooLarge { n, cap: KL_ORACLE_CAP }),
    }
}

/// Zooming grid search over the simplex in dimension `n - 1 <= 2`.
fn grid_refine(n: usize, budget: OracleBudget, f: impl Fn(&[f64]) -> f64) -> Result<OracleSolution> {
    const POINTS: usize = 21;
    const SHRINK: f64 = 0.5;
    let dim = n - 1;
    let mut center = vec![1.0 / n as f64; dim];
    let mut half = 0.5;
    let mut best_q = vec![1.0 / n as f64; n];
    let mut best = f(&best_q);
    let mut q = vec![0.0; n];
    for iter in 1..=budget.max_iters {
        let axis = |c: f64, i: usize| {
            let lo = (c - half).max(0.0);
            let hi = (c + half).min(1.0);
            lo + (hi - lo) * i as f64 / (POINTS - 1) as f64
        };
        let mut improved_center = center.clone();
        let mut visit = |coords: &[f64]| {
            let s: f64 = coords.iter().sum();
            if s > 1.0 + 1e-15 {
                return;
            }
            q[..dim].copy_from_slice(coords);
            q[dim] = (1.0 - s).max(0.0);
            let v = f(&q);
            if v < best {
                best = v;
                best_q.copy_from_slice(&q);
                improved_center.copy_from_slice(coords);
            }
        };
        if dim == 1 {
            for i in 0..POINTS {
                visit(&[axis(center[0], i)]);
            }
        } else {
            for i in 0..POINTS {
                for j in 0..POINTS {
                    visit(&[axis(center[0], i), axis(center[1], j)]);
                }
            }
        }
        center = improved_center;
        half *= SHRINK;
        if half < budget.tol {
            return Ok(OracleSolution {
                value: best,
                weights: best_q,
                iterations: iter,
            });
        }
    }
    Err(Error::OracleNotConverged {
        iterations: budget.max_iters,
        last_step: half,
    })
}

/// Entropic mirror descent on the log-weights with step `0.3 * beta`.
fn mirror_descent(values: &[f64], beta: f64, budget: OracleBudget) -> Result<OracleSolution> {
    let n = values.len();
    let step = 0.3 * beta;
    let mut logq = vec![-(n as f64).ln(); n];
    let mut last = f64::INFINITY;
    for iter in 1..=budget.max_iters {
        let next: Vec<f64> = logq
            .iter()
            .zip(values)
            .map(|(lq, r)| {
                let grad = r + ((n as f64).ln() + lq + 1.0) / beta;
                lq - step * grad
            })
            .collect();
        let max = next.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let norm = max + next.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let next: Vec<f64> = next.iter().map(|x| x - norm).collect();
        last = next
            .iter()
            .zip(&logq)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        logq = next;
        if last < budget.tol {
            let weights: Vec<f64> = logq.iter().map(|l| l.exp()).collect();
            return Ok(OracleSolution {
                value: kl_objective(&weights, values, beta),
                weights,
                iterations: iter,
            });
        }
    }
    Err(Error::OracleNotConverged {
        iterations: budget.max_iters,
        last_step: last,
    })
}

/// Soft worst case over scorers: `min_q sum_m q_m v_m + (1/gamma) KL(q || uniform)`.
///
/// Same program as [`kl_dro_oracle`] with scorer values in place of samples.
pub fn scorer_dro_oracle(values: &[f64], gamma: f64, budget: OracleBudget) -> Result<OracleSolution> {
    if values.len() > 6 {
        return Err(Error::OracleTooLarge { n: values.len(), cap: 6 });
    }
    kl_dro_oracle(values, gamma, budget).map_err(|e| match e {
        Error::InvalidParameter { value, reason, .. } => Error::InvalidParameter {
            name: "gamma",
            value,
            reason,
        },
        e => e,
    })
}

/// Exact minimum of `sum_i q_i R_i` over the simplex intersected with the
/// chi-square ball `n * sum_i (q_i - 1/n)^2 <= rho`.
///
/// Enumerates every support set of the simplex: on each face the ball meets
/// the face's affine hull in a lower-dimensional ball, where a linear
/// objective is minimized in closed form. The optimum lies in the relative
/// interior of exactly one face, so the best non-negative face solution is
/// the global minimum.
pub fn chi2_dro_oracle(values: &[f64], rho: f64) -> Result<OracleSolution> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::param("rho", rho, "must be non-negative"));
    }
    let n = values.len();
    if n == 0 {
        return Err(Error::EmptySamples);
    }
    if n > CHI2_ORACLE_CAP {
        return Err(Error::OracleTooLarge { n, cap: CHI2_ORACLE_CAP });
    }
    let nf = n as f64;
    let radius_sq = rho / nf;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let free: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let m = free.len() as f64;
        let dist_sq = m * (1.0 / m - 1.0 / nf).powi(2) + (nf - m) / (nf * nf);
        let slack = radius_sq - dist_sq;
        if slack < -1e-14 {
            continue;
        }
        let r = slack.max(0.0).sqrt();
        let c_mean = free.iter().map(|&i| values[i]).sum::<f64>() / m;
        let dir: Vec<f64> = free.iter().map(|&i| values[i] - c_mean).collect();
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        let mut q = vec![0.0; n];
        for (j, &i) in free.iter().enumerate() {
            q[i] = 1.0 / m - if norm > 0.0 { r * dir[j] / norm } else { 0.0 };
        }
        if q.iter().any(|&x| x < -1e-12) {
            continue;
        }
        for x in &mut q {
            *x = x.max(0.0);
        }
        let value: f64 = q.iter().zip(values).map(|(a, b)| a * b).sum();
        if best.as_ref().is_none_or(|(v, _)| value < *v) {
            best = Some((value, q));
        }
    }
    // The uniform point is always feasible, so some face produced a solution.
    let (value, weights) = best.expect("uniform distribution is feasible");
    Ok(OracleSolution {
        value,
        weights,
        iterations: (1 << n) - 1,
    })
}
