use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("state space has {count} states, above the ceiling of {ceiling}; use a coarser grid or shorter lead times")]
    StateSpaceTooLarge { count: u128, ceiling: u128 },
    #[error("exhaustive policy enumeration would visit {0} policies (limit 1e6)")]
    TooManyPolicies(u128),
    #[error("value iteration did not converge after {iterations} sweeps (final span {span:e})")]
    NonConvergence { iterations: usize, span: f64 },
    #[error("empty action set under the active restriction")]
    EmptyActionSet,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
