use serde::{Deserialize, Serialize};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("vector norm below zero threshold")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("layer index {index} out of range for {layers} layers")]
    MaskOutOfRange { index: usize, layers: usize },

    #[error("dataset has no pairs")]
    EmptyDataset,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("pair {0} has identical positive and negative latents")]
    DegeneratePair(usize),
    #[error("image error: {0}")]
    Image(String),

    #[error("no input directions")]
    EmptyInput,
    #[error("need at least {needed} items, got {got}")]
    TooFew { needed: usize, got: usize },

    #[error("unknown attribute preset '{0}'")]
    UnknownAttribute(String),
    #[error("step count must be at least 2, got {0}")]
    BadStepCount(usize),
    #[error("edit step {index} failed: {source}")]
    AtStep {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("need at least 2 style directions, got {0}")]
    TooFewStyles(usize),
    #[error("style {index} is near-orthogonal to the dominant direction (cos = {cosine})")]
    NearOrthogonalStyle { index: usize, cosine: f64 },
    #[error("lambda {index} = {value} outside (-{epsilon}, {epsilon})")]
    LambdaOutOfRange { index: usize, value: f64, epsilon: f64 },
    #[error("epsilon must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error("invalid range ({0}, {1})")]
    BadRange(f64, f64),
    #[error("weights are not a convex combination: {0}")]
    NotConvex(String),

    #[error("{requested} directions do not fit in a {available}-dimensional latent space")]
    TooManyDirections { requested: usize, available: usize },
    #[error("attribute index {index} out of range ({count} planted)")]
    BadAttribute { index: usize, count: usize },

    #[error("bad magic bytes")]
    BadMagic,
    #[error("payload truncated: expected {expected} bytes, found {got}")]
    TruncatedPayload { expected: usize, got: usize },
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u64),
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("unsupported dtype '{0}'")]
    UnsupportedDtype(String),
    #[error("fortran-ordered arrays are not supported")]
    FortranOrderUnsupported,
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("name '{0}' already exists")]
    DuplicateName(String),
    #[error("no entry named '{0}'")]
    NotFound(String),
    #[error("entry '{name}' violates invariant: {reason}")]
    InvariantViolation { name: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_step(index: usize, source: Error) -> Self {
        Error::AtStep {
            index,
            source: Box::new(source),
        }
    }

    /// Errors caused by malformed input data rather than the environment.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}

/// Non-fatal conditions attached to results; the caller decides what to do with them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// Only one pair was supplied; the estimate is just that pair's difference.
    SinglePair,
    /// The top two singular values are nearly tied.
    AmbiguousDominant { sigma1: f64, sigma2: f64 },
    /// Preset layers beyond the latent's layer count were dropped.
    MaskClipped { dropped: Vec<usize> },
}
