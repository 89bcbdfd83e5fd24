use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not reach tolerance {tol:e}: achieved {achieved:e} after {panels} panels")]
    Quadrature {
        tol: f64,
        achieved: f64,
        panels: usize,
        per_panel: Vec<f64>,
    },

    #[error("cutoff support 10R = {support} exceeds box half-length {half_length}")]
    Support { support: f64, half_length: f64 },

    #[error("cutoff construction failed: {0}")]
    Construction(String),

    #[error("solver did not converge: {0}")]
    Convergence(String),

    #[error("negative values in iterate (min {0:e})")]
    Projection(f64),

    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error("input is not radially symmetric (angular variation {0:e})")]
    Symmetry(f64),

    #[error("fit rejected: {0}")]
    FitRejected(String),

    #[error("box leakage: boundary mass fraction {0:e}")]
    Leakage(f64),

    #[error("numerical instability: {0}")]
    Instability(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
