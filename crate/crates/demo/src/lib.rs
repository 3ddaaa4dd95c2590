//! wasm-bindgen exports for the static page in `www/`. Every export takes
//! plain number arrays and returns a JSON string; failures come back as
//! `{"error": "..."}` so the page never has to catch.

use riskrank::multiscorer::aggregate_values;
use riskrank::risk::{chi2_robust_mean, entropic_value, sample_stats};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn respond(result: riskrank::Result<Value>) -> String {
    match result {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

/// Entropic value and risk premium of `values` at each `beta`.
#[wasm_bindgen]
pub fn entropic_curve(values: &[f64], betas: &[f64]) -> String {
    respond((|| {
        let stats = sample_stats(values)?;
        let points = betas
            .iter()
            .map(|&beta| {
                let v = entropic_value(values, beta)?;
                Ok(json!({ "beta": beta, "value": v, "premium": stats.mean - v }))
            })
            .collect::<riskrank::Result<Vec<_>>>()?;
        Ok(json!({ "mean": stats.mean, "std": stats.std, "points": points }))
    })())
}

/// Soft-min aggregate of per-scorer values at each `gamma`.
#[wasm_bindgen]
pub fn softmin_curve(values: &[f64], gammas: &[f64]) -> String {
    respond((|| {
        let stats = sample_stats(values)?;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let points = gammas
            .iter()
            .map(|&gamma| Ok(json!({ "gamma": gamma, "aggregate": aggregate_values(values, gamma)? })))
            .collect::<riskrank::Result<Vec<_>>>()?;
        Ok(json!({ "min": min, "mean": stats.mean, "points": points }))
    })())
}

/// Chi-square robust mean at each radius, with the tightness flag.
#[wasm_bindgen]
pub fn chi2_curve(values: &[f64], rhos: &[f64]) -> String {
    respond((|| {
        let stats = sample_stats(values)?;
        let points = rhos
            .iter()
            .map(|&rho| {
                let b = chi2_robust_mean(values, rho)?;
                Ok(json!({ "rho": rho, "value": b.value, "tight": b.tight }))
            })
            .collect::<riskrank::Result<Vec<_>>>()?;
        Ok(json!({ "mean": stats.mean, "points": points }))
    })())
}
