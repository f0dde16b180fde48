use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state is not strictly interior: {0}")]
    NotInterior(String),

    #[error("sparse factorization failed in subdomain {subdomain}")]
    SingularSubdomain { subdomain: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("dense size guard: {what} of size {size} exceeds limit {limit}")]
    TooLarge { what: &'static str, size: usize, limit: usize },

    #[error("krylov solver did not converge in {iterations} iterations (relative residual {relative_residual:.3e})")]
    KrylovStagnation { iterations: usize, relative_residual: f64 },

    #[error("outer iteration cap of {0} reached without convergence")]
    OuterCapExceeded(usize),

    #[error("config error ({key}): {msg}")]
    Config { key: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
