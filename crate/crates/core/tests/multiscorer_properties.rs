mod common;

use common::{candidate, WIDE};
use proptest::prelude::*;
use riskrank::corpus::CandidatePool;
use riskrank::decoders::{DecoderConfig, Rule};
use riskrank::multiscorer::{aggregate_values, build_panel, select_panel, PanelConfig};
use riskrank::oracle::{scorer_dro_oracle, OracleBudget};

fn scorer_values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1..=6)
}

/// Pools with `m` scorers, `k` candidates and `n` samples per scorer.
fn panels() -> impl Strategy<Value = (Vec<String>, CandidatePool)> {
    (1usize..=3, 1usize..=6, 2usize..=5).prop_flat_map(|(m, k, n)| {
        prop::collection::vec(prop::collection::vec(prop::collection::vec(-10.0f64..10.0, n), m), k).prop_map(
            move |cands| {
                let names: Vec<String> = (0..m).map(|j| format!("s{j}")).collect();
                let candidates = cands
                    .iter()
                    .enumerate()
                    .map(|(i, per_scorer)| {
                        let sets: Vec<(&str, Vec<f64>)> =
                            names.iter().map(String::as_str).zip(per_scorer.iter().cloned()).collect();
                        candidate(&format!("c{i}"), &sets, WIDE)
                    })
                    .collect();
                let pool = CandidatePool {
                    prompt_id: "p".into(),
                    candidates,
                    source: None,
                };
                (names, pool)
            },
        )
    })
}

proptest! {
    #[test]
    fn aggregate_sits_between_min_and_mean(v in scorer_values(), g in 0.01f64..20.0, bump in 0.01f64..5.0) {
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let a = aggregate_values(&v, g).unwrap();
        let b = aggregate_values(&v, g * (1.0 + bump)).unwrap();
        prop_assert!(min <= b && b <= a + 1e-12 && a <= mean + 1e-12);
    }

    #[test]
    fn aggregate_matches_kl_program(v in scorer_values(), g in 0.1f64..5.0) {
        let closed = aggregate_values(&v, g).unwrap();
        let oracle = scorer_dro_oracle(&v, g, OracleBudget::default()).unwrap();
        prop_assert!((closed - oracle.value).abs() <= 1e-6, "{} vs {}", closed, oracle.value);
    }

    #[test]
    fn aggregate_ignores_scorer_order(mut v in scorer_values(), g in 0.1f64..5.0, rot in 0usize..6) {
        let a = aggregate_values(&v, g).unwrap();
        let len = v.len();
        v.rotate_left(rot % len);
        v.reverse();
        prop_assert!((a - aggregate_values(&v, g).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn panel_is_invariant_to_per_scorer_affine_maps(
        (names, pool) in panels(),
        maps in prop::collection::vec((0.1f64..10.0, -50.0f64..50.0), 3),
        eps in 0.0f64..1.0,
    ) {
        let mut moved = pool.clone();
        for c in &mut moved.candidates {
            for (j, name) in names.iter().enumerate() {
                let (a, b) = maps[j];
                let set = c.samples.get_mut(name).unwrap();
                let xs: Vec<f64> = set.values().iter().map(|x| a * x + b).collect();
                *set = riskrank::corpus::SampleSet::new(xs, WIDE).unwrap();
            }
        }
        let cfg = PanelConfig::default();
        let p0 = build_panel(&pool, &names, &cfg).unwrap();
        let p1 = build_panel(&moved, &names, &cfg).unwrap();
        let guarded = p0.normalization.iter().any(|n| n.guarded);
        prop_assume!(!guarded);
        for (e0, e1) in p0.entries.iter().zip(&p1.entries) {
            prop_assert!((e0.value - e1.value).abs() <= 1e-9 * (1.0 + e0.value.abs()));
            prop_assert!((e0.dispersion - e1.dispersion).abs() <= 1e-9 * (1.0 + e0.dispersion));
        }
        let values: Vec<f64> = p0.entries.iter().map(|e| e.value).collect();
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        prop_assume!(sorted.len() < 2 || sorted[0] - sorted[1] > 1e-6);
        let mut dec = DecoderConfig::new(Rule::Entropic);
        prop_assert_eq!(
            select_panel(&p0, &dec).unwrap().candidate_index,
            select_panel(&p1, &dec).unwrap().candidate_index
        );
        dec = DecoderConfig::new(Rule::Eps);
        dec.epsilon = eps;
        let d: Vec<f64> = p0.entries.iter().map(|e| e.dispersion).collect();
        let mut ds = d.clone();
        ds.sort_by(f64::total_cmp);
        prop_assume!(ds.windows(2).all(|w| w[1] - w[0] > 1e-6));
        let near = |v: f64| (v - (sorted[0] - eps)).abs() < 1e-6;
        prop_assume!(!values.iter().any(|&v| near(v)));
        prop_assert_eq!(
            select_panel(&p0, &dec).unwrap().candidate_index,
            select_panel(&p1, &dec).unwrap().candidate_index
        );
    }

    #[test]
    fn panel_ignores_scorer_listing_order((names, pool) in panels()) {
        let cfg = PanelConfig::default();
        let mut rev = names.clone();
        rev.reverse();
        let a = build_panel(&pool, &names, &cfg).unwrap();
        let b = build_panel(&pool, &rev, &cfg).unwrap();
        for (x, y) in a.entries.iter().zip(&b.entries) {
            prop_assert!((x.value - y.value).abs() <= 1e-12);
            prop_assert_eq!(x.dispersion, y.dispersion);
        }
    }

    #[test]
    fn single_scorer_panel_without_normalization_is_the_entropic_rule((_, pool) in panels()) {
        let cfg = PanelConfig { normalize: false, ..PanelConfig::default() };
        let names = vec!["s0".to_string()];
        let panel = build_panel(&pool, &names, &cfg).unwrap();
        let dec = DecoderConfig::new(Rule::Entropic);
        let direct = riskrank::decoders::select(&pool, "s0", &dec).unwrap();
        prop_assert_eq!(select_panel(&panel, &dec).unwrap().candidate_index, direct.candidate_index);
    }
}

#[test]
fn panel_rejects_rules_without_a_panel_form() {
    let pool = CandidatePool {
        prompt_id: "p".into(),
        candidates: vec![candidate("a", &[("x", vec![1.0, 2.0])], WIDE)],
        source: None,
    };
    let panel = build_panel(&pool, &["x".to_string()], &PanelConfig::default()).unwrap();
    let e = select_panel(&panel, &DecoderConfig::new(Rule::Cvar)).unwrap_err();
    assert!(!e.is_input_error());
}
