use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("singular multiplier: 1 - {what} = 0")]
    SingularMultiplier { what: &'static str },

    #[error(
        "feedback explosion{}: a = {a} >= 1, the instantaneous fixed point does not exist",
        step.map(|s| format!(" at step {s}")).unwrap_or_default()
    )]
    FeedbackExplosion { step: Option<usize>, a: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("order statistic count k = {k} requires at least k + 1 = {} positive values, got {n}", k + 1)]
    Order { k: usize, n: usize },

    #[error("liquidity must be positive, got {0}")]
    Liquidity(f64),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("theorem inapplicable: {0}")]
    TheoremInapplicable(String),

    #[error("divergent multiplier: spectral radius {0} >= 1")]
    DivergentMultiplier(f64),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("nonstationary path: {0}")]
    Nonstationary(String),

    #[error("price collapse at step {step}: r = {r} <= -1")]
    PriceCollapse { step: usize, r: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
