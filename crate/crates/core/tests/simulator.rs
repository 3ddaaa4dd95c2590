use riskrank::corpus::Bounds;
use riskrank::decoders::{DecoderConfig, Rule};
use riskrank::metrics::EvalConfig;
use riskrank::pipeline::{select_corpus, SelectPlan};
use riskrank::risk::{sample_stats, ProxyEps, RiskConfig};
use riskrank::rng::trial_stream;
use riskrank::simulator::{
    coverage_experiment, generate_corpus, proxy_coverage_experiment, proxy_perturb, trend_experiment, MixtureLaw,
    ScenarioConfig,
};

fn small() -> ScenarioConfig {
    ScenarioConfig {
        prompts: 30,
        k: 6,
        n: 6,
        n_eval: 4,
        ..ScenarioConfig::default()
    }
}

#[test]
fn sample_moments_agree_with_truth() {
    let bounds = Bounds::new(0.0, 10.0).unwrap();
    for (i, (w, m, s)) in [
        (vec![1.0], vec![5.0], 1.0),
        (vec![0.4, 0.6], vec![3.0, 8.0], 0.5),
        (vec![0.5, 0.5], vec![0.5, 9.8], 2.0),
    ]
    .into_iter()
    .enumerate()
    {
        let law = MixtureLaw::new(w, m, s, bounds).unwrap();
        let xs = law.sample_n(&mut trial_stream(11, i as u64), 10_000).unwrap();
        let st = sample_stats(&xs).unwrap();
        let tol = 3.0 * law.true_std() / 100.0;
        assert!((st.mean - law.true_mean()).abs() <= tol, "law {i}: {} vs {}", st.mean, law.true_mean());
    }
}

#[test]
fn generated_corpus_is_reproducible() {
    let a = generate_corpus(&small()).unwrap();
    let b = generate_corpus(&small()).unwrap();
    assert_eq!(a.corpus, b.corpus);
    assert_eq!(a.truth, b.truth);
    assert_eq!(a.corpus.len(), 30);
    assert_eq!(a.truth.len(), 30 * 6);
    let other = generate_corpus(&ScenarioConfig { seed: 1, ..small() }).unwrap();
    assert_ne!(a.corpus, other.corpus);
}

#[test]
fn coverage_grows_with_the_width_multiplier() {
    let cfg = ScenarioConfig { k: 4, n: 8, ..small() };
    let mut last = 0.0;
    for scale in [0.0, 0.05, 0.2, 1.0] {
        let risk = RiskConfig {
            alpha_scale: scale,
            ..RiskConfig::default()
        };
        let rate = coverage_experiment(&cfg, &risk, 300).unwrap().rate.unwrap();
        assert!(rate + 1e-12 >= last, "scale {scale}: {rate} < {last}");
        last = rate;
    }
    assert!(last >= 0.9);
}

#[test]
fn proxy_coverage_holds_with_slack() {
    let risk = RiskConfig {
        proxy_eps: Some(ProxyEps { mu: 0.2, sigma: 0.2 }),
        ..RiskConfig::default()
    };
    let r = proxy_coverage_experiment(&small(), &risk, 200).unwrap();
    assert!(r.coverage.rate.unwrap() >= 0.9);
    assert!(r.max_delta_mean <= 0.2 + 1e-9);
    assert!(r.max_delta_std <= 0.2 + 1e-9);
    assert!(r.slack > 0.0);
    assert!(proxy_coverage_experiment(&small(), &RiskConfig::default(), 10).is_err());
}

#[test]
fn perturbation_respects_its_budget() {
    let sim = generate_corpus(&small()).unwrap();
    let (moved, report) = proxy_perturb(&sim.corpus, 0.3, 0.1, 5).unwrap();
    assert_eq!(moved.len(), sim.corpus.len());
    assert!(report.max_delta_mean <= 0.3 + 1e-9);
    assert!(report.max_delta_std <= 0.1 + 1e-9);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let sim = generate_corpus(&small()).unwrap();
    // Rules that read sidecar fields are skipped; the simulator emits none.
    let decoders = Rule::ALL
        .iter()
        .filter(|r| !matches!(r, Rule::Rbon | Rule::Caution))
        .map(|&r| {
            let mut d = DecoderConfig::new(r);
            d.lambda_pen = Some(0.5);
            d
        })
        .collect();
    let plan = SelectPlan::single(decoders);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let sel = select_corpus(&sim.corpus, &plan).unwrap();
                let cov = coverage_experiment(&small(), &RiskConfig::default(), 64).unwrap();
                (sel, cov)
            })
    };
    assert_eq!(run(1), run(8));
}

#[test]
fn trend_reference_is_labelled_base() {
    let eval = EvalConfig::default();
    let r = trend_experiment(&small(), &[DecoderConfig::new(Rule::Mean)], &eval, &[0, 1]).unwrap();
    assert_eq!(r.dispersion.len(), 2);
    for d in &r.dispersion {
        assert_eq!(d.mean_sigma, d.base_mean_sigma);
    }
    for b in &r.buckets {
        assert_eq!(b.method, "mean");
        if let Some(t) = b.delta_tradeoff {
            assert_eq!(t, 0.0);
        }
    }
    let tiny = ScenarioConfig { prompts: 3, ..small() };
    assert!(trend_experiment(&tiny, &[], &eval, &[0]).is_err());
}
