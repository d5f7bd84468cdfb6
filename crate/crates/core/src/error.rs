use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum MerlinError {
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing bundle file {0}")]
    MissingFile(PathBuf),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("degenerate extractor: v has zero norm")]
    DegenerateExtractor,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular covariance (condition number {condition:.3e})")]
    SingularCovariance { condition: f64 },

    #[error("precision matrix has non-positive diagonal entry")]
    NonPositiveDiagonal,

    #[error("empty frequency band: first bin {first} > last bin {last}")]
    EmptyBand { first: usize, last: usize },

    #[error("more channels than samples (d = {d}, m = {m}); MERLiN requires d <= m")]
    TooFewSamples { d: usize, m: usize },

    #[error("zero band power in coherency denominator at band bin {0}")]
    ZeroCoherencyPower(usize),

    #[error("non-finite objective or gradient during optimisation")]
    NonFiniteObjective,

    #[error("optimisation failed at every restart; last error: {0}")]
    AllRestartsFailed(Box<MerlinError>),

    #[error("carrier has no energy in the requested band after {0} attempts")]
    CarrierExhausted(usize),
}

impl MerlinError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MerlinError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics on otherwise valid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            MerlinError::SingularCovariance { .. }
                | MerlinError::NonPositiveDiagonal
                | MerlinError::ZeroCoherencyPower(_)
                | MerlinError::NonFiniteObjective
                | MerlinError::AllRestartsFailed(_)
                | MerlinError::CarrierExhausted(_)
        )
    }

    /// Short machine-readable kind tag, used in sweep records.
    pub fn kind(&self) -> &'static str {
        match self {
            MerlinError::Io { .. } => "io",
            MerlinError::MissingFile(_) => "missing_file",
            MerlinError::Parse(_) => "parse",
            MerlinError::DimensionMismatch(_) => "dimension_mismatch",
            MerlinError::NonFinite(_) => "non_finite",
            MerlinError::DegenerateExtractor => "degenerate_extractor",
            MerlinError::InvalidParameter(_) => "invalid_parameter",
            MerlinError::SingularCovariance { .. } => "singular_covariance",
            MerlinError::NonPositiveDiagonal => "non_positive_diagonal",
            MerlinError::EmptyBand { .. } => "empty_band",
            MerlinError::TooFewSamples { .. } => "too_few_samples",
            MerlinError::ZeroCoherencyPower(_) => "zero_coherency_power",
            MerlinError::NonFiniteObjective => "non_finite_objective",
            MerlinError::AllRestartsFailed(inner) => inner.kind(),
            MerlinError::CarrierExhausted(_) => "carrier_exhausted",
        }
    }
}

pub type Result<T> = std::result::Result<T, MerlinError>;
