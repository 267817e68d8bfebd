use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph order {n}: need at least {min} nodes")]
    InvalidOrder { n: usize, min: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("time {t} outside [0, {horizon})")]
    OutOfRange { t: f64, horizon: f64 },

    #[error("insufficient sample: {got} trajectories, need at least {need}")]
    Statistics { got: usize, need: usize },

    #[error("no default coupling for this graph; supply gamma explicitly")]
    NoDefaultGamma,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("trajectory {index} (seed {seed:#018x}) failed: {source}")]
    Trajectory {
        index: u64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate trace: all samples are zero")]
    DegenerateTrace,

    #[error("success probability is zero; expected trial count diverges")]
    Divergence,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{links} links exceed the enumeration limit of {limit}")]
    TooManyLinks { links: usize, limit: usize },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl Error {
    /// Coarse classification used by front ends to pick exit codes.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical(_) | Error::DegenerateTrace | Error::Divergence => true,
            Error::Trajectory { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
