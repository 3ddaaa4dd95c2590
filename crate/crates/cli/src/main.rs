use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use riskrank::calibrate::Objective;
use riskrank::corpus::Bounds;
use riskrank::decoders::{Rule, TauObjective};
use riskrank::metrics::RiskView;

mod commands;
mod config;

use config::RunConfig;

/// Exit classes of a failed run.
#[derive(Debug)]
pub enum Failure {
    Verification(String),
    Input(String),
    Config(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Verification(_) => 1,
            Failure::Input(_) => 2,
            Failure::Config(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Verification(m) | Failure::Input(m) | Failure::Config(m) => m,
        }
    }
}

impl From<riskrank::Error> for Failure {
    fn from(e: riskrank::Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(format!("i/o error: {e}"))
    }
}

#[derive(Parser, Debug)]
#[command(name = "riskrank", version, about = "Risk-aware best-of-K selection under rater disagreement")]
struct Cli {
    /// TOML file with any subset of the run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for all outputs plus a `run_config.json` echo.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 lets the runtime decide.
    #[arg(long, global = true, env = "RISKRANK_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pick one candidate per prompt under each configured rule.
    Select(SelectArgs),
    /// Score selections on held-out samples.
    Evaluate(EvaluateArgs),
    /// Grid-search a rule's knobs on a development corpus.
    Calibrate(CalibrateArgs),
    /// Generate a synthetic corpus and run coverage and trend experiments.
    Simulate(SimulateArgs),
    /// Check closed forms against brute-force oracles.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Default)]
struct CorpusArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Score bounds as `a,b`.
    #[arg(long, allow_hyphen_values = true)]
    bounds: Option<Bounds>,
    /// Clip every sample to `[-L, L]` at ingestion.
    #[arg(long)]
    truncate: Option<f64>,
    /// `all`, `auto`, `eval-field` or `index:<n>`.
    #[arg(long)]
    split: Option<String>,
}

#[derive(Args, Debug, Default)]
struct KnobArgs {
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    tau_quantile: Option<f64>,
    #[arg(long)]
    tau_objective: Option<TauObjective>,
    #[arg(long)]
    lambda_pen: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    lambda_md: Option<f64>,
    #[arg(long)]
    alpha_mc: Option<f64>,
    #[arg(long)]
    beta_rbon: Option<f64>,
    #[arg(long)]
    poisson_lambda: Option<f64>,
    #[arg(long)]
    alpha_caution: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    alpha_scale: Option<f64>,
    #[arg(long)]
    cvar_alpha: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct EvalArgs {
    #[arg(long)]
    lambda_eval: Option<f64>,
    #[arg(long)]
    cvar_alpha_prompts: Option<f64>,
    #[arg(long)]
    hv_fraction: Option<f64>,
    #[arg(long)]
    wtl_eps: Option<f64>,
    #[arg(long)]
    buckets: Option<usize>,
    #[arg(long)]
    overlap_q: Option<f64>,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    knobs: KnobArgs,
    /// Comma-separated rule names.
    #[arg(long, value_delimiter = ',')]
    rules: Option<Vec<Rule>>,
    #[arg(long)]
    scorer: Option<String>,
    /// Rules applied to the aggregated scorer panel (entropic, tau, eps).
    #[arg(long, value_delimiter = ',')]
    panel_rules: Option<Vec<Rule>>,
    #[arg(long, value_delimiter = ',')]
    panel_scorers: Option<Vec<String>>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    eval: EvalArgs,
    /// Selection JSONL produced by `select`.
    #[arg(long)]
    selections: Option<PathBuf>,
    #[arg(long)]
    risk_view: Option<RiskView>,
    #[arg(long)]
    base: Option<String>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    knobs: KnobArgs,
    #[command(flatten)]
    eval: EvalArgs,
    #[arg(long)]
    rule: Option<Rule>,
    #[arg(long)]
    objective: Option<Objective>,
    #[arg(long)]
    scorer: Option<String>,
    #[arg(long, value_delimiter = ',')]
    betas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    tau_quantiles: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    knobs: KnobArgs,
    #[command(flatten)]
    eval: EvalArgs,
    #[arg(long)]
    prompts: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    n_eval: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    bounds: Option<Bounds>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    low_gap: Option<f64>,
    #[arg(long)]
    high_gap: Option<f64>,
    #[arg(long)]
    high_fraction: Option<f64>,
    #[arg(long)]
    coverage_trials: Option<usize>,
    #[arg(long)]
    proxy_trials: Option<usize>,
    #[arg(long)]
    eps_mu: Option<f64>,
    #[arg(long)]
    eps_sigma: Option<f64>,
    #[arg(long)]
    trend_seeds: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    trend_rules: Option<Vec<Rule>>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    cases: Option<usize>,
    #[arg(long)]
    mapping_cases: Option<usize>,
    #[arg(long)]
    max_n: Option<usize>,
    /// Negate the closed form in the KL suite; the run must then fail.
    #[arg(long)]
    inject_fault: bool,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl CorpusArgs {
    fn apply(self, cfg: &mut RunConfig) {
        if self.corpus.is_some() {
            cfg.inputs.corpus = self.corpus;
        }
        set(&mut cfg.corpus.bounds, self.bounds);
        if self.truncate.is_some() {
            cfg.corpus.truncate = self.truncate;
        }
        if self.split.is_some() {
            cfg.corpus.split = self.split;
        }
    }
}

impl KnobArgs {
    fn apply(self, cfg: &mut RunConfig) {
        let k = &mut cfg.decoder;
        set(&mut k.beta, self.beta);
        if self.tau.is_some() {
            k.tau = self.tau;
        }
        if self.tau_quantile.is_some() {
            k.tau_quantile = self.tau_quantile;
        }
        set(&mut k.tau_objective, self.tau_objective);
        if self.lambda_pen.is_some() {
            k.lambda_pen = self.lambda_pen;
        }
        set(&mut k.epsilon, self.epsilon);
        set(&mut k.lambda_md, self.lambda_md);
        set(&mut k.alpha_mc, self.alpha_mc);
        set(&mut k.beta_rbon, self.beta_rbon);
        set(&mut k.poisson_lambda, self.poisson_lambda);
        set(&mut k.alpha_caution, self.alpha_caution);
        set(&mut cfg.risk.delta, self.delta);
        set(&mut cfg.risk.alpha_scale, self.alpha_scale);
        set(&mut cfg.risk.cvar_alpha, self.cvar_alpha);
    }
}

impl EvalArgs {
    fn apply(self, cfg: &mut RunConfig) {
        let e = &mut cfg.eval;
        set(&mut e.lambda_eval, self.lambda_eval);
        set(&mut e.cvar_alpha_prompts, self.cvar_alpha_prompts);
        set(&mut e.hv_fraction, self.hv_fraction);
        set(&mut e.wtl_eps, self.wtl_eps);
        set(&mut e.bucket_count, self.buckets);
        set(&mut e.overlap_q, self.overlap_q);
    }
}

fn resolve(cli: Cli) -> Result<(RunConfig, Command), Failure> {
    let mut cfg = config::load(cli.config.as_deref())?;
    set(&mut cfg.seed, cli.seed);
    let command = cli.command;
    cfg.command = match &command {
        Command::Select(_) => "select",
        Command::Evaluate(_) => "evaluate",
        Command::Calibrate(_) => "calibrate",
        Command::Simulate(_) => "simulate",
        Command::Verify(_) => "verify",
    }
    .to_string();
    Ok((cfg, command))
}

fn apply(cfg: &mut RunConfig, command: Command) {
    match command {
        Command::Select(a) => {
            a.corpus.apply(cfg);
            a.knobs.apply(cfg);
            set(&mut cfg.select.rules, a.rules);
            if a.scorer.is_some() {
                cfg.select.scorer = a.scorer;
            }
            set(&mut cfg.select.panel_rules, a.panel_rules);
            if a.panel_scorers.is_some() {
                cfg.select.panel_scorers = a.panel_scorers;
            }
            set(&mut cfg.panel.gamma, a.gamma);
            if a.no_normalize {
                cfg.panel.normalize = false;
            }
        }
        Command::Evaluate(a) => {
            a.corpus.apply(cfg);
            a.eval.apply(cfg);
            if a.selections.is_some() {
                cfg.inputs.selections = a.selections;
            }
            set(&mut cfg.eval.risk_view, a.risk_view);
            if a.base.is_some() {
                cfg.eval.base = a.base;
            }
        }
        Command::Calibrate(a) => {
            a.corpus.apply(cfg);
            a.knobs.apply(cfg);
            a.eval.apply(cfg);
            let c = &mut cfg.calibrate;
            set(&mut c.rule, a.rule);
            set(&mut c.objective, a.objective);
            if a.scorer.is_some() {
                c.scorer = a.scorer;
            }
            set(&mut c.betas, a.betas);
            set(&mut c.epsilons, a.epsilons);
            set(&mut c.tau_quantiles, a.tau_quantiles);
            set(&mut c.lambdas, a.lambdas);
        }
        Command::Simulate(a) => {
            a.knobs.apply(cfg);
            a.eval.apply(cfg);
            let s = &mut cfg.scenario;
            set(&mut s.prompts, a.prompts);
            set(&mut s.k, a.k);
            set(&mut s.n, a.n);
            set(&mut s.n_eval, a.n_eval);
            set(&mut s.bounds, a.bounds);
            set(&mut s.noise_std, a.noise_std);
            set(&mut s.low_gap, a.low_gap);
            set(&mut s.high_gap, a.high_gap);
            set(&mut s.high_fraction, a.high_fraction);
            let m = &mut cfg.simulate;
            set(&mut m.coverage_trials, a.coverage_trials);
            set(&mut m.proxy_trials, a.proxy_trials);
            set(&mut m.eps_mu, a.eps_mu);
            set(&mut m.eps_sigma, a.eps_sigma);
            set(&mut m.trend_seeds, a.trend_seeds);
            set(&mut m.trend_rules, a.trend_rules);
        }
        Command::Verify(a) => {
            let v = &mut cfg.verify;
            set(&mut v.cases, a.cases);
            set(&mut v.mapping_cases, a.mapping_cases);
            set(&mut v.max_n, a.max_n);
            if a.inject_fault {
                v.inject_fault = true;
            }
        }
    }
    cfg.scenario.seed = cfg.seed;
    cfg.verify.seed = cfg.seed;
}

fn init_threads(threads: Option<usize>) -> Result<(), Failure> {
    let Some(n) = threads else {
        return Ok(());
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Config(format!("cannot start {n} worker threads: {e}")))
}

fn run() -> Result<(), Failure> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Ok(()),
                _ => Err(Failure::Config(String::new())),
            };
        }
    };
    init_threads(cli.threads)?;
    let out_dir = cli.out_dir.clone();
    let (mut cfg, command) = resolve(cli)?;
    apply(&mut cfg, command);
    commands::run(&cfg, out_dir.as_deref())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message().is_empty() {
                eprintln!("error: {}", f.message());
            }
            ExitCode::from(f.code())
        }
    }
}
