use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid population: {0}")]
    Population(String),

    #[error("invalid scenario: {0}")]
    Config(String),

    #[error("assumption audit failed: {0}")]
    Audit(String),

    #[error("reduction {x} outside [0, {d_p}]")]
    OutOfRange { x: f64, d_p: f64 },

    #[error("bisection on the marginal cost of type {theta} does not bracket target {target}")]
    NonBracketing { theta: f64, target: f64 },

    #[error("fixed-point map has no sign change on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("fixed-point bisection exhausted {0} iterations")]
    MaxIterations(usize),

    #[error("invalid mechanism: {0}")]
    Mechanism(String),

    #[error("degenerate perturbation direction: |J_eps|/|eps| = {0:e}")]
    DegenerateDirection(f64),

    #[error("invalid lottery: {0}")]
    Lottery(String),
}

pub type Result<T> = std::result::Result<T, Error>;
