//! Resolved run configuration: defaults, then the TOML file, then flags.

use std::path::{Path, PathBuf};

use riskrank::calibrate::{CalibrationGrid, Objective};
use riskrank::corpus::{Bounds, IngestOptions, SplitPolicy};
use riskrank::decoders::{DecoderConfig, Rule, TauObjective};
use riskrank::metrics::{EvalConfig, RiskView};
use riskrank::multiscorer::PanelConfig;
use riskrank::risk::RiskConfig;
use riskrank::simulator::ScenarioConfig;
use riskrank::verify::VerifyConfig;
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Everything a run reads. Serialized verbatim into `run_config.json`; the
/// thread count and output directory are deliberately left out so that the
/// echo is identical across parallelism degrees and destinations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub inputs: Inputs,
    pub corpus: CorpusSection,
    pub select: SelectSection,
    pub decoder: Knobs,
    pub panel: PanelSection,
    pub risk: RiskConfig,
    pub eval: EvalSection,
    pub calibrate: CalibrateSection,
    pub scenario: ScenarioConfig,
    pub simulate: SimulateSection,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: String::new(),
            seed: 0,
            inputs: Inputs::default(),
            corpus: CorpusSection::default(),
            select: SelectSection::default(),
            decoder: Knobs::default(),
            panel: PanelSection::default(),
            risk: RiskConfig::default(),
            eval: EvalSection::default(),
            calibrate: CalibrateSection::default(),
            scenario: ScenarioConfig::default(),
            simulate: SimulateSection::default(),
            verify: VerifyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub corpus: Option<PathBuf>,
    pub selections: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub bounds: Bounds,
    pub truncate: Option<f64>,
    /// `all`, `auto`, `eval-field` or `index:<n>`; `None` means the
    /// command's own default.
    pub split: Option<String>,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            bounds: Bounds::default(),
            truncate: None,
            split: None,
        }
    }
}

impl CorpusSection {
    pub fn ingest_options(&self) -> IngestOptions {
        IngestOptions {
            bounds: self.bounds,
            truncate: self.truncate,
        }
    }

    /// Split for a command whose default is `fallback`. `all` selects on the
    /// full sample sets.
    pub fn split_or(&self, fallback: Option<SplitPolicy>) -> Result<Option<SplitPolicy>, Failure> {
        match self.split.as_deref() {
            None => Ok(fallback),
            Some("all") => Ok(None),
            Some(s) => Ok(Some(s.parse()?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectSection {
    pub rules: Vec<Rule>,
    pub scorer: Option<String>,
    pub panel_rules: Vec<Rule>,
    pub panel_scorers: Option<Vec<String>>,
}

impl Default for SelectSection {
    fn default() -> Self {
        SelectSection {
            rules: vec![Rule::Mean, Rule::Entropic, Rule::Eps],
            scorer: None,
            panel_rules: Vec::new(),
            panel_scorers: None,
        }
    }
}

/// Decoder knobs shared by every configured rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Knobs {
    pub beta: f64,
    pub tau: Option<f64>,
    pub tau_quantile: Option<f64>,
    pub tau_objective: TauObjective,
    pub lambda_pen: Option<f64>,
    pub epsilon: f64,
    pub lambda_md: f64,
    pub alpha_mc: f64,
    pub beta_rbon: f64,
    pub poisson_lambda: f64,
    pub alpha_caution: f64,
}

impl Default for Knobs {
    fn default() -> Self {
        let d = DecoderConfig::new(Rule::Mean);
        Knobs {
            beta: d.beta,
            tau: d.tau,
            tau_quantile: d.tau_quantile,
            tau_objective: d.tau_objective,
            lambda_pen: d.lambda_pen,
            epsilon: d.epsilon,
            lambda_md: d.lambda_md,
            alpha_mc: d.alpha_mc,
            beta_rbon: d.beta_rbon,
            poisson_lambda: d.poisson_lambda,
            alpha_caution: d.alpha_caution,
        }
    }
}

impl Knobs {
    pub fn decoder(&self, rule: Rule, risk: &RiskConfig, seed: u64) -> DecoderConfig {
        DecoderConfig {
            rule,
            beta: self.beta,
            tau: self.tau,
            tau_quantile: self.tau_quantile,
            tau_objective: self.tau_objective,
            lambda_pen: self.lambda_pen,
            epsilon: self.epsilon,
            risk: *risk,
            lambda_md: self.lambda_md,
            alpha_mc: self.alpha_mc,
            beta_rbon: self.beta_rbon,
            poisson_lambda: self.poisson_lambda,
            alpha_caution: self.alpha_caution,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanelSection {
    pub beta: f64,
    pub gamma: f64,
    pub normalize: bool,
}

impl Default for PanelSection {
    fn default() -> Self {
        let p = PanelConfig::default();
        PanelSection {
            beta: p.beta,
            gamma: p.gamma,
            normalize: p.normalize,
        }
    }
}

impl PanelSection {
    pub fn config(&self) -> PanelConfig {
        PanelConfig {
            beta: self.beta,
            gamma: self.gamma,
            normalize: self.normalize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub lambda_eval: f64,
    pub cvar_alpha_prompts: f64,
    pub hv_fraction: f64,
    pub wtl_eps: f64,
    pub bucket_count: usize,
    pub overlap_q: f64,
    pub risk_view: RiskView,
    pub base: Option<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        let c = EvalConfig::default();
        EvalSection {
            lambda_eval: c.lambda_eval,
            cvar_alpha_prompts: c.cvar_alpha_prompts,
            hv_fraction: c.hv_fraction,
            wtl_eps: c.wtl_eps,
            bucket_count: c.bucket_count,
            overlap_q: c.overlap_q,
            risk_view: RiskView::default(),
            base: None,
        }
    }
}

impl EvalSection {
    pub fn config(&self) -> EvalConfig {
        EvalConfig {
            lambda_eval: self.lambda_eval,
            cvar_alpha_prompts: self.cvar_alpha_prompts,
            hv_fraction: self.hv_fraction,
            wtl_eps: self.wtl_eps,
            bucket_count: self.bucket_count,
            overlap_q: self.overlap_q,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    pub rule: Rule,
    pub objective: Objective,
    pub scorer: Option<String>,
    pub betas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub tau_quantiles: Vec<f64>,
    pub lambdas: Vec<f64>,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        let g = CalibrationGrid::default();
        CalibrateSection {
            rule: Rule::Eps,
            objective: Objective::Tradeoff,
            scorer: None,
            betas: g.betas,
            epsilons: g.epsilons,
            tau_quantiles: g.tau_quantiles,
            lambdas: g.lambdas,
        }
    }
}

impl CalibrateSection {
    pub fn grid(&self) -> CalibrationGrid {
        CalibrationGrid {
            betas: self.betas.clone(),
            epsilons: self.epsilons.clone(),
            tau_quantiles: self.tau_quantiles.clone(),
            lambdas: self.lambdas.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub coverage_trials: usize,
    pub proxy_trials: usize,
    pub eps_mu: f64,
    pub eps_sigma: f64,
    pub trend_seeds: usize,
    pub trend_rules: Vec<Rule>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            coverage_trials: 0,
            proxy_trials: 0,
            eps_mu: 0.1,
            eps_sigma: 0.1,
            trend_seeds: 0,
            trend_rules: vec![Rule::Eps],
        }
    }
}

pub fn load(path: Option<&Path>) -> Result<RunConfig, Failure> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::Config(format!("config {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: RunConfig = toml::from_str(
            r#"
            seed = 9
            [decoder]
            epsilon = 0.5
            [eval]
            lambda_eval = 1.0
            [calibrate]
            rule = "tau"
            betas = [1.0]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.decoder.epsilon, 0.5);
        assert_eq!(cfg.decoder.beta, 1.0);
        assert_eq!(cfg.eval.lambda_eval, 1.0);
        assert_eq!(cfg.eval.hv_fraction, 0.2);
        assert_eq!(cfg.calibrate.rule, Rule::Tau);
        assert_eq!(cfg.calibrate.betas, [1.0]);
        assert_eq!(cfg.calibrate.epsilons, CalibrationGrid::default().epsilons);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[decoder]\nbetta = 2.0").is_err());
    }
}
