use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the algorithmic core.
///
/// Validation variants carry the name of the offending field so front ends
/// can report it verbatim.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("payoffs[{player}][{index}]: payoff {value} is not strictly positive")]
    NonPositivePayoff { player: usize, index: usize, value: f64 },
    #[error("{field}: expected {expected} entries, found {found}")]
    DimensionMismatch {
        field: String,
        expected: usize,
        found: usize,
    },
    #[error("{field}: {reason}")]
    InvalidGame { field: String, reason: String },
    #[error("profile: {0}")]
    InvalidProfile(String),
    #[error("unknown builtin game `{0}`")]
    UnknownGame(String),
    #[error("params.{param}: {reason}")]
    InvalidParams { param: String, reason: String },
    #[error("strategy: {0}")]
    InvalidStrategy(String),
    #[error("epsilon: step size must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("epsilon: epsilon * payoff = {product} must lie in (0, 1)")]
    StepTooLarge { product: f64 },
    #[error("lambda: {value} is outside the admissible range {range}")]
    InvalidLambda { value: f64, range: &'static str },
    #[error("lambda: psi({lambda}) with n = {players} evaluates to {psi}, outside [0, 1)")]
    PsiOutOfDomain { lambda: f64, players: usize, psi: f64 },
    #[error("delta: neighborhood radius must lie in (0, 0.5), got {0}")]
    InvalidDelta(f64),
    #[error("{field}: {reason}")]
    InvalidBudget { field: &'static str, reason: String },
    #[error(
        "state {state}: {censored} of {runs} runs unabsorbed, above the censoring budget {budget}"
    )]
    ExcessiveCensoring {
        state: usize,
        censored: u64,
        runs: u64,
        budget: f64,
    },
    #[error("probs: row {row} is not a probability vector (sum {sum})")]
    NotStochastic { row: usize, sum: f64 },
    #[error("stationary distribution did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("linear system for the stationary distribution is singular")]
    Singular,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}
