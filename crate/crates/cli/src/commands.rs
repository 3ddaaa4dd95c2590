use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use riskrank::calibrate::{self, CalibrationResult};
use riskrank::corpus::{ingest_corpus, Corpus, SplitPolicy};
use riskrank::decoders::SelectionRecord;
use riskrank::metrics::{self, EvalOptions};
use riskrank::numfmt::{format_g17, to_json_string, to_json_string_pretty};
use riskrank::pipeline::{self, Method, SelectPlan};
use riskrank::risk::{ProxyEps, RiskConfig};
use riskrank::simulator::{self, CoverageReport};
use riskrank::verify;
use serde::Serialize;

use crate::config::RunConfig;
use crate::Failure;

pub fn run(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<(), Failure> {
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    match cfg.command.as_str() {
        "select" => select(cfg, out_dir),
        "evaluate" => evaluate(cfg, out_dir),
        "calibrate" => calibrate(cfg, out_dir),
        "simulate" => simulate(cfg, out_dir),
        "verify" => verify(cfg, out_dir),
        other => Err(Failure::Config(format!("unknown command `{other}`"))),
    }?;
    if let Some(dir) = out_dir {
        write_json(&dir.join("run_config.json"), cfg)?;
    }
    Ok(())
}

fn json<T: Serialize + ?Sized>(value: &T) -> Result<String, Failure> {
    to_json_string_pretty(value).map_err(|e| Failure::Input(format!("serialization failed: {e}")))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = json(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn load_corpus(cfg: &RunConfig) -> Result<Corpus, Failure> {
    let path = cfg
        .inputs
        .corpus
        .as_ref()
        .ok_or_else(|| Failure::Config("no corpus given (--corpus)".into()))?;
    Ok(ingest_corpus(path, &cfg.corpus.ingest_options())?)
}

/// Writer for a named output: a file under `out_dir`, or stdout.
fn sink(out_dir: Option<&Path>, name: &str) -> Result<Box<dyn Write>, Failure> {
    Ok(match out_dir {
        Some(dir) => Box::new(BufWriter::new(File::create(dir.join(name))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn select(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<(), Failure> {
    let corpus = load_corpus(cfg)?;
    let decoder = |rule| cfg.decoder.decoder(rule, &cfg.risk, cfg.seed);
    let mut methods: Vec<Method> = cfg
        .select
        .rules
        .iter()
        .map(|&rule| Method::Single { decoder: decoder(rule) })
        .collect();
    methods.extend(cfg.select.panel_rules.iter().map(|&rule| Method::Panel {
        decoder: decoder(rule),
        panel: cfg.panel.config(),
    }));
    let plan = SelectPlan {
        methods,
        scorer: cfg.select.scorer.clone(),
        panel_scorers: cfg.select.panel_scorers.clone(),
        split: cfg.corpus.split_or(None)?,
    };
    let results = pipeline::select_corpus(&corpus, &plan)?;
    let mut w = sink(out_dir, "selections.jsonl")?;
    for r in &results {
        let line = to_json_string(&SelectionRecord::from(r))
            .map_err(|e| Failure::Input(format!("serialization failed: {e}")))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn evaluate(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<(), Failure> {
    let corpus = load_corpus(cfg)?;
    let path = cfg
        .inputs
        .selections
        .as_ref()
        .ok_or_else(|| Failure::Config("no selections given (--selections)".into()))?;
    let methods = metrics::read_selections(BufReader::new(File::open(path)?))?;
    let opts = EvalOptions {
        config: cfg.eval.config(),
        split: cfg.corpus.split_or(Some(SplitPolicy::Auto))?.unwrap_or(SplitPolicy::Auto),
        risk_view: cfg.eval.risk_view,
        base: cfg.eval.base.clone(),
    };
    let report = metrics::evaluate(&corpus, &methods, &opts)?;
    let mut w = sink(out_dir, "metrics.csv")?;
    report.write_metrics_csv(&mut w)?;
    w.flush()?;
    if let Some(dir) = out_dir {
        report.write_buckets_csv(BufWriter::new(File::create(dir.join("buckets.csv"))?))?;
        write_json(&dir.join("correlations.json"), &report.correlations)?;
    }
    Ok(())
}

fn write_sweep(path: &Path, result: &CalibrationResult) -> Result<(), Failure> {
    let opt = |v: Option<f64>| v.map(format_g17).unwrap_or_default();
    let mut w = csv::Writer::from_path(path).map_err(riskrank::Error::from)?;
    let header = ["beta", "epsilon", "tau_quantile", "lambda", "tradeoff", "cvar10", "objective"];
    w.write_record(header).map_err(riskrank::Error::from)?;
    for r in &result.sweep {
        w.write_record([
            format_g17(r.beta),
            opt(r.epsilon),
            opt(r.tau_quantile),
            opt(r.lambda),
            format_g17(r.tradeoff),
            format_g17(r.cvar10),
            format_g17(r.objective),
        ])
        .map_err(riskrank::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

fn calibrate(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<(), Failure> {
    let corpus = load_corpus(cfg)?;
    let c = &cfg.calibrate;
    let template = cfg.decoder.decoder(c.rule, &cfg.risk, cfg.seed);
    let split = cfg.corpus.split_or(Some(SplitPolicy::Auto))?.unwrap_or(SplitPolicy::Auto);
    let result = calibrate::calibrate(
        &corpus,
        &template,
        c.scorer.as_deref(),
        &c.grid(),
        &cfg.eval.config(),
        split,
        c.objective,
    )?;
    match out_dir {
        Some(dir) => {
            write_json(&dir.join("calibration.json"), &result)?;
            write_sweep(&dir.join("sweep.csv"), &result)?;
        }
        None => println!("{}", json(&result)?),
    }
    Ok(())
}

#[derive(Serialize)]
struct CoverageOut<'a> {
    #[serde(flatten)]
    report: &'a CoverageReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<&'static str>,
}

fn coverage_out(report: &CoverageReport) -> CoverageOut<'_> {
    CoverageOut {
        report,
        note: (report.trials == 0).then_some("no trials"),
    }
}

fn simulate(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<(), Failure> {
    let dir = out_dir.ok_or_else(|| Failure::Config("simulate writes several files; pass --out-dir".into()))?;
    let scenario = &cfg.scenario;
    let sim = simulator::generate_corpus(scenario)?;
    let mut w = BufWriter::new(File::create(dir.join("corpus.jsonl"))?);
    sim.corpus.write_jsonl(&mut w)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("truth.jsonl"))?);
    simulator::write_truth_jsonl(&sim.truth, &mut w)?;
    w.flush()?;

    let sm = &cfg.simulate;
    let coverage = if sm.coverage_trials > 0 {
        simulator::coverage_experiment(scenario, &cfg.risk, sm.coverage_trials)?
    } else {
        CoverageReport {
            trials: 0,
            covered: 0,
            rate: None,
        }
    };
    write_json(&dir.join("coverage.json"), &coverage_out(&coverage))?;

    if sm.proxy_trials > 0 {
        let risk = RiskConfig {
            proxy_eps: Some(ProxyEps {
                mu: sm.eps_mu,
                sigma: sm.eps_sigma,
            }),
            ..cfg.risk
        };
        let proxy = simulator::proxy_coverage_experiment(scenario, &risk, sm.proxy_trials)?;
        write_json(&dir.join("proxy_coverage.json"), &proxy)?;
    }

    if sm.trend_seeds > 0 {
        let decoders: Vec<_> = sm
            .trend_rules
            .iter()
            .map(|&r| cfg.decoder.decoder(r, &cfg.risk, cfg.seed))
            .collect();
        let seeds: Vec<u64> = (0..sm.trend_seeds as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
        let trend = simulator::trend_experiment(scenario, &decoders, &cfg.eval.config(), &seeds)?;
        let opt = |v: Option<f64>| v.map(format_g17).unwrap_or_default();
        let mut w = csv::Writer::from_path(dir.join("trend_buckets.csv")).map_err(riskrank::Error::from)?;
        w.write_record(["seed", "method", "bucket", "count", "delta_tradeoff", "delta_cvar"])
            .map_err(riskrank::Error::from)?;
        for b in &trend.buckets {
            w.write_record([
                b.seed.to_string(),
                b.method.clone(),
                b.bucket.to_string(),
                b.count.to_string(),
                opt(b.delta_tradeoff),
                opt(b.delta_cvar),
            ])
            .map_err(riskrank::Error::from)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("trend_dispersion.csv")).map_err(riskrank::Error::from)?;
        w.write_record(["seed", "method", "mean_sigma", "base_mean_sigma"])
            .map_err(riskrank::Error::from)?;
        for d in &trend.dispersion {
            w.write_record([
                d.seed.to_string(),
                d.method.clone(),
                format_g17(d.mean_sigma),
                format_g17(d.base_mean_sigma),
            ])
            .map_err(riskrank::Error::from)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn verify(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<(), Failure> {
    let report = verify::run_verification(&cfg.verify)?;
    let text = json(&report)?;
    match out_dir {
        Some(dir) => fs::write(dir.join("verify.json"), format!("{text}\n"))?,
        None => println!("{text}"),
    }
    for s in &report.suites {
        let status = if s.ok() { "ok" } else { "FAILED" };
        eprintln!(
            "{:<11} {status:<6} {}/{} passed, {} skipped, max error {:e}",
            s.suite, s.passed, s.cases, s.skipped, s.max_error
        );
        for f in &s.failures {
            eprintln!("    {f}");
        }
        for n in &s.notes {
            eprintln!("    note: {n}");
        }
    }
    if report.ok() {
        Ok(())
    } else {
        Err(Failure::Verification("oracle tolerance violated".into()))
    }
}
