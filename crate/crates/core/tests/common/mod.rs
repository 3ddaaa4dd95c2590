#![allow(dead_code)]

use std::collections::BTreeMap;

use proptest::prelude::*;
use riskrank::corpus::{Bounds, Candidate, CandidatePool, SampleSet};

pub const WIDE: Bounds = Bounds { lo: -1000.0, hi: 1000.0 };

pub fn candidate(id: &str, sets: &[(&str, Vec<f64>)], bounds: Bounds) -> Candidate {
    let samples: BTreeMap<String, SampleSet> = sets
        .iter()
        .map(|(m, xs)| (m.to_string(), SampleSet::new(xs.clone(), bounds).unwrap()))
        .collect();
    Candidate {
        candidate_id: id.to_string(),
        samples,
        eval_samples: None,
        ref_loglik_per_token: None,
        error_score: None,
        token_length: None,
        text: None,
    }
}

/// Single-scorer pool (scorer `rm`) with the optional sidecar fields filled.
pub fn pool_from(prompt_id: &str, sets: &[Vec<f64>], bounds: Bounds) -> CandidatePool {
    let candidates = sets
        .iter()
        .enumerate()
        .map(|(i, xs)| {
            let mut c = candidate(&format!("c{i:02}"), &[("rm", xs.clone())], bounds);
            c.ref_loglik_per_token = Some(-0.5 - 0.1 * i as f64);
            c.error_score = Some((i as f64 * 0.37).fract());
            c
        })
        .collect();
    CandidatePool {
        prompt_id: prompt_id.to_string(),
        candidates,
        source: None,
    }
}

/// `K` in 1..=8 candidates with 2..=6 samples each in [-10, 10].
pub fn sample_sets() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=8, 2usize..=6).prop_flat_map(|(k, n)| {
        prop::collection::vec(prop::collection::vec(-10.0f64..10.0, n), k)
    })
}

pub fn pools() -> impl Strategy<Value = CandidatePool> {
    sample_sets().prop_map(|sets| pool_from("prompt", &sets, WIDE))
}
