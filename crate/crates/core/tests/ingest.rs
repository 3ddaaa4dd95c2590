use std::io::Write;

use riskrank::corpus::{ingest_corpus, parse_corpus, Bounds, IngestOptions, SplitPolicy, split_select_eval};
use riskrank::Error;

const GOOD: &str = r#"{"prompt_id":"q1","source":"demo","candidates":[{"candidate_id":"a","samples":{"rm":[1.0,2.0,3.0]},"ref_loglik_per_token":-0.4,"token_length":12,"text":"hi"},{"candidate_id":"b","samples":{"rm":[4.0,4.5]}}]}

{"prompt_id":"q2","candidates":[{"candidate_id":"a","samples":{"rm":[0.5]},"eval_samples":{"rm":[0.7,0.9]}}]}
"#;

#[test]
fn file_round_trip() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(GOOD.as_bytes()).unwrap();
    let c = ingest_corpus(f.path(), &IngestOptions::default()).unwrap();
    assert_eq!(c.len(), 2);
    assert_eq!(c.scorer_ids(), ["rm".to_string()]);
    assert_eq!(c.meta().n_aug, 2);
    let q1 = c.pool("q1").unwrap();
    assert_eq!(q1.source.as_deref(), Some("demo"));
    assert_eq!(q1.candidates[0].token_length, Some(12));
    assert_eq!(q1.candidates[1].samples["rm"].values(), [4.0, 4.5]);
    let q2 = c.pool("q2").unwrap();
    assert_eq!(q2.candidates[0].eval_samples.as_ref().unwrap()["rm"].values(), [0.7, 0.9]);
}

#[test]
fn errors_carry_file_line_numbers() {
    let opts = IngestOptions::default();
    let bad_json = format!("{}\n\n{{oops\n", GOOD.lines().next().unwrap());
    assert!(matches!(parse_corpus(bad_json.as_bytes(), &opts), Err(Error::Malformed { line: 3, .. })));

    let dup = format!("{0}\n{0}\n", GOOD.lines().next().unwrap());
    assert!(matches!(parse_corpus(dup.as_bytes(), &opts), Err(Error::DuplicatePrompt { line: 2, .. })));

    let unknown = r#"{"prompt_id":"q","candidates":[{"candidate_id":"a","samples":{"rm":[1]},"extra":1}]}"#;
    assert!(matches!(parse_corpus(unknown.as_bytes(), &opts), Err(Error::Malformed { line: 1, .. })));

    let mixed = r#"{"prompt_id":"q","candidates":[{"candidate_id":"a","samples":{"rm":[1]}},{"candidate_id":"b","samples":{"other":[1]}}]}"#;
    assert!(matches!(parse_corpus(mixed.as_bytes(), &opts), Err(Error::ScorerMismatch { .. })));

    let empty = r#"{"prompt_id":"q","candidates":[]}"#;
    assert!(matches!(parse_corpus(empty.as_bytes(), &opts), Err(Error::EmptyPool { .. })));
}

#[test]
fn bounds_and_truncation() {
    let wild = r#"{"prompt_id":"q","candidates":[{"candidate_id":"a","samples":{"rm":[-40.0,0.0,40.0]}}]}"#;
    let e = parse_corpus(wild.as_bytes(), &IngestOptions::default()).unwrap_err();
    assert!(e.is_input_error());

    let clipped = IngestOptions {
        bounds: Bounds::default(),
        truncate: Some(5.0),
    };
    let c = parse_corpus(wild.as_bytes(), &clipped).unwrap();
    assert_eq!(c.pools()[0].candidates[0].samples["rm"].values(), [-5.0, 0.0, 5.0]);
    assert_eq!(c.meta().truncate, Some(5.0));
}

#[test]
fn index_split_is_disjoint_and_exhaustive() {
    let c = parse_corpus(GOOD.lines().next().unwrap().as_bytes(), &IngestOptions::default()).unwrap();
    let v = split_select_eval(&c.pools()[0], SplitPolicy::Auto).unwrap();
    assert_eq!(v.selection.candidates[0].samples["rm"].values(), [1.0]);
    assert_eq!(v.evaluation.candidates[0].samples["rm"].values(), [2.0, 3.0]);
    assert!(matches!(
        split_select_eval(&c.pools()[0], SplitPolicy::Index { selection_len: 2 }),
        Err(Error::InsufficientSamples { .. })
    ));
    assert!(matches!(
        split_select_eval(&c.pools()[0], SplitPolicy::EvalField),
        Err(Error::MissingField { .. })
    ));
}
