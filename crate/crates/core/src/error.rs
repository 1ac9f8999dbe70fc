use thiserror::Error;

/// Errors produced by chain construction, sampling drivers, the oracle and
/// the product engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("observation shape mismatch: expected a sample from the {expected} sampler, found {found}")]
    ShapeMismatch { expected: &'static str, found: String },

    #[error("work budget exceeded: about {required} operations required, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u64 },

    #[error(
        "label values explode: {distinct} distinct combined values exceed the limit of {limit}; \
         exact counting needs discrete labels and binning would only give approximate results"
    )]
    ValueExplosion { distinct: usize, limit: usize },

    #[error("vertex {0} is isolated")]
    IsolatedVertex(usize),

    #[error("not a tree: {0}")]
    NotATree(String),

    #[error("infeasible districting: {0}")]
    Infeasible(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
