use thiserror::Error;

use crate::model::Policy;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel row of ({state}, {action}) sums to {sum}, expected 1")]
    RowSum { state: usize, action: usize, sum: f64 },

    #[error("kernel row of ({state}, {action}) has negative mass {value} at state {next}")]
    NegativeProbability {
        state: usize,
        action: usize,
        next: usize,
        value: f64,
    },

    #[error("state {state} has no actions")]
    EmptyActionSet { state: usize },

    #[error("bernoulli reward of ({state}, {action}) has mean {mean} outside [0, 1]")]
    BernoulliRange { state: usize, action: usize, mean: f64 },

    #[error("malformed model: {0}")]
    Malformed(String),

    #[error("models do not share the same state/action structure")]
    StructureMismatch,

    #[error("policy is not valid for this model: {0}")]
    InvalidPolicy(String),

    #[error("linear system is numerically singular (residual {residual:e})")]
    SingularSystem { residual: f64 },

    #[error("order {order} is outside the evaluated range -1..={max}")]
    OrderOutOfRange { order: i32, max: i32 },

    #[error("{count} policies exceed the enumeration cap {cap}")]
    TooManyPolicies { count: f64, cap: usize },

    #[error("{count} recurrent-class coverings exceed the enumeration cap {cap}")]
    TooManyCoverings { count: f64, cap: usize },

    #[error("model is not communicating")]
    NotCommunicating,

    #[error("policy iteration did not settle within {cap} policy changes")]
    IterationCapExceeded { cap: usize, last_policy: Policy },

    #[error("unknown builtin instance `{0}`")]
    UnknownInstance(String),

    #[error("could not generate a communicating instance in {attempts} attempts")]
    GenerationFailed { attempts: usize },

    #[error("reward mean {mean} of ({state}, {action}) lies outside [0, 1]")]
    RewardRange { state: usize, action: usize, mean: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
