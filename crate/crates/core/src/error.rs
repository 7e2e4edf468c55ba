use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("two events share the time {0}")]
    Collision(f64),
    #[error("time {t} outside [0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("input too large for the brute-force oracle: {0}")]
    OracleCap(String),
    #[error("supercritical weights are not allowed here (sigma2 = {sigma2} > sigma1 = {sigma1})")]
    Supercritical { sigma1: f64, sigma2: f64 },
    #[error("integrability condition on 1/psi fails: {0}")]
    NotIntegrable(String),
    #[error("red process horizon too short to resolve first passage below -{0}")]
    ExtendAndRetry(f64),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
