//! Error type shared by every module in the crate.

use std::fmt;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors emitted by tensors, layers, preprocessing, training, and the relay.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two tensors (or a tensor and a parameter set) disagree on one axis.
    DimensionMismatch {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        got: usize,
    },
    /// A convolution kernel is longer than the input time axis.
    InvalidWindow { kernel: usize, time: usize },
    /// A scalar argument is outside its documented domain.
    InvalidArgument { what: &'static str, details: String },
    /// A model, scenario, or parameter-set description is internally inconsistent.
    Configuration(String),
    /// A mandatory CSV column is absent.
    MissingColumn { column: String },
    /// An address or tag could not be encoded.
    Encoding { what: &'static str, value: String },
    /// An operation that needs data received none.
    EmptyInput(&'static str),
    /// A metric is mathematically undefined for the given counts.
    UndefinedMetric(&'static str),
    /// An optimizer step saw a NaN or infinite gradient.
    NonFiniteGradient { layer: String },
    /// The relay rejected a packet (bad shape, stale sequence, wrong state).
    Protocol(String),
    /// A checkpoint or dataset container is malformed.
    Container(String),
    /// File-system failure, with the underlying message.
    Io(String),
}

impl Error {
    /// Short machine-parseable category token, one per variant.
    pub fn category(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension",
            Error::InvalidWindow { .. } => "invalid-window",
            Error::InvalidArgument { .. } => "invalid-argument",
            Error::Configuration(_) => "configuration",
            Error::MissingColumn { .. } => "schema",
            Error::Encoding { .. } => "encoding",
            Error::EmptyInput(_) => "empty-input",
            Error::UndefinedMetric(_) => "undefined-metric",
            Error::NonFiniteGradient { .. } => "non-finite-gradient",
            Error::Protocol(_) => "protocol",
            Error::Container(_) => "container",
            Error::Io(_) => "io",
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { op, axis, expected, got } => {
                write!(f, "{op}: {axis} axis expected {expected}, got {got}")
            }
            Error::InvalidWindow { kernel, time } => {
                write!(f, "kernel size {kernel} exceeds time length {time}")
            }
            Error::InvalidArgument { what, details } => write!(f, "invalid {what}: {details}"),
            Error::Configuration(msg) => write!(f, "configuration error: {msg}"),
            Error::MissingColumn { column } => write!(f, "missing mandatory column: {column}"),
            Error::Encoding { what, value } => write!(f, "cannot encode {what}: {value:?}"),
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
            Error::UndefinedMetric(what) => write!(f, "metric undefined: {what}"),
            Error::NonFiniteGradient { layer } => {
                write!(f, "non-finite gradient in layer {layer:?}")
            }
            Error::Protocol(msg) => write!(f, "protocol error: {msg}"),
            Error::Container(msg) => write!(f, "container error: {msg}"),
            Error::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
