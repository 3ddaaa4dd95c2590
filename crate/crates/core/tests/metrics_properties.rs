use proptest::prelude::*;
use riskrank::metrics::{
    bucket_deltas, cvar_over_prompts, kendall, spearman, topq_overlap, tradeoff, wtl, scalarize_s0_s1,
};

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("p{i:03}")).collect()
}

fn nonconstant(v: &[f64]) -> bool {
    v.iter().any(|&x| x != v[0])
}

fn paired() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..40).prop_flat_map(|n| {
        (prop::collection::vec(-5.0f64..5.0, n), prop::collection::vec(-5.0f64..5.0, n))
    })
}

proptest! {
    #[test]
    fn tradeoff_is_monotone(mu in -10.0f64..10.0, s in 0.0f64..5.0, ds in 0.0f64..5.0, l in 0.0f64..4.0, dl in 0.0f64..4.0) {
        let t = tradeoff(mu, s, l);
        prop_assert!(tradeoff(mu + 1.0, s, l) > t);
        prop_assert!(tradeoff(mu, s + ds, l) <= t);
        prop_assert!(tradeoff(mu, s, l + dl) <= t);
    }

    #[test]
    fn cvar_is_below_the_mean_and_grows_with_alpha(
        v in prop::collection::vec(-10.0f64..10.0, 1..50),
        a in 0.01f64..1.0,
        b in 0.01f64..1.0,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let c_lo = cvar_over_prompts(&v, lo).unwrap();
        let c_hi = cvar_over_prompts(&v, hi).unwrap();
        prop_assert!(c_lo <= c_hi + 1e-12);
        prop_assert!(c_hi <= mean + 1e-12);
        prop_assert!((cvar_over_prompts(&v, 1.0).unwrap() - mean).abs() <= 1e-12);
    }

    #[test]
    fn wtl_partitions_prompts(d in prop::collection::vec(-3.0f64..3.0, 0..40), eps in 0.0f64..1.0) {
        let r = wtl(&d, eps).unwrap();
        prop_assert_eq!(r.win + r.tie + r.loss, d.len());
    }

    #[test]
    fn correlations_are_bounded_and_rank_based((x, y) in paired()) {
        prop_assume!(nonconstant(&x) && nonconstant(&y));
        let s = spearman(&x, &y).unwrap();
        let k = kendall(&x, &y).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s) && (-1.0..=1.0).contains(&k));
        let fx: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let fy: Vec<f64> = y.iter().map(|v| v * v * v + 2.0 * v).collect();
        prop_assert!((spearman(&fx, &fy).unwrap() - s).abs() <= 1e-12);
        prop_assert!((kendall(&fx, &fy).unwrap() - k).abs() <= 1e-12);
        prop_assert!((spearman(&x, &x).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn overlap_is_symmetric_with_valid_p((x, y) in paired(), q in 0.05f64..1.0) {
        let id = ids(x.len());
        let o = topq_overlap(&id, &x, &y, q).unwrap();
        prop_assert_eq!(o.precision, o.recall);
        prop_assert!(o.hypergeom_p > 0.0 && o.hypergeom_p <= 1.0);
        let floor = (2 * o.k).saturating_sub(x.len());
        if o.intersection == floor {
            prop_assert_eq!(o.hypergeom_p, 1.0);
        }
        let flipped = topq_overlap(&id, &y, &x, q).unwrap();
        prop_assert_eq!(flipped.intersection, o.intersection);
    }

    #[test]
    fn buckets_recombine_to_the_global_mean(
        (v, keys) in paired(),
        count in 2usize..6,
    ) {
        let stats = bucket_deltas(&v, &keys, count).unwrap();
        prop_assert_eq!(stats.iter().map(|b| b.count).sum::<usize>(), v.len());
        let total: f64 = stats.iter().filter_map(|b| b.mean.map(|m| m * b.count as f64)).sum();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        prop_assert!((total / v.len() as f64 - mean).abs() <= 1e-9);
        for b in &stats {
            prop_assert!(b.key_lo <= b.key_hi);
            prop_assert_eq!(b.ci_lo.is_some(), b.count >= 2);
        }
    }

    #[test]
    fn scalarizations_flip_sign_when_swapped((m, b) in paired()) {
        let (s0, s1) = scalarize_s0_s1(&m, &b).unwrap();
        let (t0, t1) = scalarize_s0_s1(&b, &m).unwrap();
        prop_assert!((s0 + t0).abs() <= 1e-12);
        prop_assert!((s1 + t1).abs() <= 1e-12);
        prop_assert!((-0.5..=0.5).contains(&s1));
    }
}

#[test]
fn constant_inputs_have_no_rank_correlation() {
    assert!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    assert!(kendall(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]).is_err());
}
