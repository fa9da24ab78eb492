use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("constant term {modulus:e} is below the unit tolerance")]
    NonUnit { modulus: f64 },

    #[error("matrix is not in the Bruhat cell at {at}: singular values ({s1:e}, {s2:e})")]
    NotInCell { at: String, s1: f64, s2: f64 },

    #[error("both homogeneous coordinates vanish")]
    ZeroVector,

    #[error("argument {z} is within the pole guard of {w}")]
    NearPole { z: String, w: String },

    #[error("root finder did not converge for target {target}")]
    NoConvergence { target: String },

    #[error("chart conversion left a w^{power} coefficient of size {size:e}")]
    NotGlobal { power: i32, size: f64 },

    #[error("no table row for {bundle} in direction {direction}")]
    RowNotFound { bundle: String, direction: String },

    #[error("bundle {0} is not semistable")]
    NotSemistable(String),

    #[error("unsupported request: {0}")]
    Unsupported(String),

    #[error("module reduction failed: {0}")]
    ReductionFailure(String),

    #[error("eigenvalues are not separated: gap {0:e}")]
    DegenerateSpectrum(f64),

    #[error("underlying bundle {0} is unstable")]
    UnderlyingUnstable(String),

    #[error("terminal bundle {0} does not have minimal Hecke length")]
    TerminalNotMinimal(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
