use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("singular operating point at phi_b = {phi_b}")]
    SingularOperatingPoint { phi_b: f64 },
    #[error("pole encountered at omega = {omega} rad/s")]
    PoleEncountered { omega: f64 },
    #[error("ill-conditioned sideband system (growth factor {growth:e})")]
    IllConditioned { growth: f64 },
    #[error("sideband tail did not decay at n_max = {n_max} (tail ratio {ratio:e})")]
    NoTailDecay { n_max: usize, ratio: f64 },
    #[error("quadrature did not converge (relative change {rel_change:e} at {divisions} divisions per drive period)")]
    QuadratureNotConverged { rel_change: f64, divisions: usize },
    #[error("step size underflow at t = {t:e} s (dt = {dt:e} s)")]
    StiffnessDetected { t: f64, dt: f64 },
    #[error("unstable dynamics: {0}")]
    Unstable(String),
    #[error("harmonic truncation tail {tail:e} exceeds tolerance")]
    HarmonicTruncation { tail: f64 },
    #[error("degenerate division: {0}")]
    DivisionDegenerate(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by invalid input rather than numerical failure.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Io(_) | Error::PreconditionViolated(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
