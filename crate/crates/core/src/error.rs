use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong inside the engine.
///
/// Variants split into three families that the CLI maps onto exit codes:
/// input errors (bad corpus or selection files), configuration errors (bad
/// knobs) and verification failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },

    #[error("line {line}: scorer set mismatch for candidate `{candidate_id}` (expected {expected:?}, found {found:?})")]
    ScorerMismatch {
        line: usize,
        candidate_id: String,
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("line {line}: prompt `{prompt_id}` has an empty candidate pool")]
    EmptyPool { line: usize, prompt_id: String },

    #[error("line {line}: candidate `{candidate_id}` has an empty sample set for scorer `{scorer_id}`")]
    EmptySampleSet {
        line: usize,
        candidate_id: String,
        scorer_id: String,
    },

    #[error("line {line}: duplicate candidate id `{candidate_id}`")]
    DuplicateCandidate { line: usize, candidate_id: String },

    #[error("line {line}: duplicate prompt id `{prompt_id}`")]
    DuplicatePrompt { line: usize, prompt_id: String },

    #[error("value {value} outside bounds [{lo}, {hi}]")]
    OutOfBounds { value: f64, lo: f64, hi: f64 },

    #[error("sample set is empty")]
    EmptySamples,

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("candidate `{candidate_id}` is missing required field `{field}`")]
    MissingField {
        field: &'static str,
        candidate_id: String,
    },

    #[error("unknown scorer `{0}`")]
    UnknownScorer(String),

    #[error("unknown prompt `{0}`")]
    UnknownPrompt(String),

    #[error("prompt `{prompt_id}`: unknown candidate `{candidate_id}`")]
    UnknownCandidate {
        prompt_id: String,
        candidate_id: String,
    },

    #[error("method `{method}` has no selection for prompt `{prompt_id}`")]
    MissingSelection { method: String, prompt_id: String },

    #[error("empty candidate pool")]
    NoCandidates,

    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("singular normal equations (controls collinear with the intercept)")]
    Singular,

    #[error("oracle did not converge within {iterations} iterations (last step {last_step:e})")]
    OracleNotConverged { iterations: usize, last_step: f64 },

    #[error("oracle input too large: n = {n} exceeds cap {cap}")]
    OracleTooLarge { n: usize, cap: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }

    /// True for errors caused by malformed or inconsistent input files.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Malformed { .. }
                | Error::ScorerMismatch { .. }
                | Error::EmptyPool { .. }
                | Error::EmptySampleSet { .. }
                | Error::DuplicateCandidate { .. }
                | Error::DuplicatePrompt { .. }
                | Error::OutOfBounds { .. }
                | Error::EmptySamples
                | Error::MissingField { .. }
                | Error::UnknownPrompt(_)
                | Error::UnknownCandidate { .. }
                | Error::MissingSelection { .. }
                | Error::NoCandidates
                | Error::InsufficientSamples { .. }
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}
