use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular matrix: pivot {pivot:e} in column {column}")]
    Singular { column: usize, pivot: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error(
        "fixed-point iteration diverging after {iterations} iterations (step ratio {ratio:.3})"
    )]
    Diverged { iterations: usize, ratio: f64 },

    #[error("frequency map has a pole at ({x}, {y})")]
    Pole { x: f64, y: f64 },

    #[error("the system has no Hessian; exact linearization needs one")]
    MissingHessian,

    #[error("level {level}, diamond {diamond}: {source}")]
    AtDiamond {
        level: usize,
        diamond: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at(self, level: usize, diamond: usize) -> Self {
        Error::AtDiamond {
            level,
            diamond,
            source: Box::new(self),
        }
    }

    /// True for failures of an iterative solve (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::NoConvergence { .. } | Error::Diverged { .. } | Error::Singular { .. } => true,
            Error::AtDiamond { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
