use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch in {op}: expected {expected:?}, got {actual:?}")]
    Shape {
        op: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("response is not Hermitian: |Im| = {imag:.3e} at bin {bin} exceeds tolerance {tol:.3e}")]
    NonHermitian { bin: usize, imag: f64, tol: f64 },

    #[error("near-singular denominator at bin {bin} (|A| = {magnitude:.3e}); a pole lies on the sampling contour")]
    NearSingular { bin: usize, magnitude: f64 },

    #[error("ill-conditioned matrix at batch index {index} (condition number {cond:.3e} > {limit:.1e})")]
    IllConditioned { index: usize, cond: f64, limit: f64 },

    #[error(
        "loop matrix I - G F is ill-conditioned at bin {bin} ({freq_hz:.2} Hz, condition number {cond:.3e}); \
         lossless loops need an anti-aliasing radius (e.g. --antialias-db 60)"
    )]
    IllConditionedBin { bin: usize, freq_hz: f64, cond: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite value at epoch {epoch}: {detail}")]
    NonFinite { epoch: usize, detail: String },

    #[error("autodiff error: {0}")]
    Autodiff(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: &[usize], actual: &[usize]) -> Self {
        Error::Shape {
            op,
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }

    /// True for configuration problems (CLI exit code 2); everything else
    /// counts as a numerical failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Json(_) | Error::Io(_) | Error::InvalidGrid(_) | Error::Shape { .. }
        )
    }
}
