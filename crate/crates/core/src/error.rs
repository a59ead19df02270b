use thiserror::Error;

/// Errors raised by the simulation and optimization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("mesh file line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{solver} did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    LinearSolver {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("Newton did not converge in {iterations} iterations; residual history {history:?}")]
    Newton { iterations: usize, history: Vec<f64> },

    #[error("time step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("singular matrix (zero pivot in column {0})")]
    Singular(usize),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Error {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
