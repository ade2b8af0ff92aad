use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid {field}: {reason} (witness t={t}, x={x})")]
    Invariant {
        field: String,
        reason: String,
        t: f64,
        x: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("point (t={t}, x={x}) lies outside the domain ({lower}, {upper})")]
    Domain { t: f64, x: f64, lower: f64, upper: f64 },

    #[error("non-finite value {value} from sub-expression `{expr}` at (t={t}, x={x})")]
    NonFinite { expr: String, value: f64, t: f64, x: f64 },

    #[error("derivative requested at payoff kink x={x} (t={t})")]
    Kink { t: f64, x: f64 },

    #[error("projected SOR did not reach tolerance {tol:e} in {sweeps} sweeps (layer t={t}, worst node x={x}, residual {residual:e})")]
    LcpNoConvergence {
        sweeps: usize,
        tol: f64,
        t: f64,
        x: f64,
        residual: f64,
    },

    #[error("stationary iteration did not settle within {layers} layers (last change {change:e})")]
    StationaryNoConvergence { layers: usize, change: f64 },

    #[error("policy iteration did not stabilise within {iterations} outer iterations at t={t}")]
    PolicyCycling { iterations: usize, t: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),

    #[error("model refused: {0}")]
    Model(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
