use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library reports.
///
/// Variant names are stable and double as the machine-readable error code
/// printed by the command-line front end (see [`Error::code`]).
#[derive(Debug, Error)]
pub enum Error {
    // nifti
    #[error("bad NIfTI magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("truncated data: need {needed} bytes, found {found}")]
    TruncatedData { needed: usize, found: usize },
    #[error("inconsistent header: {0}")]
    HeaderInconsistent(String),
    #[error("lossy conversion: {0}")]
    LossyConversion(String),
    #[error("non-integer label value {0}")]
    NonIntegerLabels(f64),
    #[error("label value {0} outside 0..=3")]
    LabelOutOfRange(i64),

    // geometry / preprocessing
    #[error("transform is singular")]
    SingularTransform,
    #[error("image is constant")]
    ConstantImage,
    #[error("registration did not improve the metric at any level")]
    DidNotImprove,
    #[error("mask is empty")]
    EmptyMask,
    #[error("mask is degenerate: {0}")]
    DegenerateMask(String),
    #[error("missing reference sequence {0}")]
    MissingReferenceSequence(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    // metrics / cohort
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("negative volume {0}")]
    NegativeVolume(f64),
    #[error("empty input")]
    EmptyInput,
    #[error("label {0} is not covered by the scheme")]
    UnmappedLabel(i64),
    #[error("need at least {needed} cases, found {found}")]
    TooFewCases { needed: usize, found: usize },
    #[error("inputs are not z-score normalized (masked mean {0})")]
    NotNormalized(f64),
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::BadMagic(_) => "BadMagic",
            Error::UnsupportedDatatype(_) => "UnsupportedDatatype",
            Error::TruncatedData { .. } => "TruncatedData",
            Error::HeaderInconsistent(_) => "HeaderInconsistent",
            Error::LossyConversion(_) => "LossyConversion",
            Error::NonIntegerLabels(_) => "NonIntegerLabels",
            Error::LabelOutOfRange(_) => "LabelOutOfRange",
            Error::SingularTransform => "SingularTransform",
            Error::ConstantImage => "ConstantImage",
            Error::DidNotImprove => "DidNotImprove",
            Error::EmptyMask => "EmptyMask",
            Error::DegenerateMask(_) => "DegenerateMask",
            Error::MissingReferenceSequence(_) => "MissingReferenceSequence",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::GeometryMismatch(_) => "GeometryMismatch",
            Error::NegativeVolume(_) => "NegativeVolume",
            Error::EmptyInput => "EmptyInput",
            Error::UnmappedLabel(_) => "UnmappedLabel",
            Error::TooFewCases { .. } => "TooFewCases",
            Error::NotNormalized(_) => "NotNormalized",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::Io { .. } => "Io",
            Error::Parse(_) => "Parse",
        }
    }

    /// True for errors caused by bad inputs rather than internal faults.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::DidNotImprove)
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
