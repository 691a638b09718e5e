use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Shapes, widths or layouts that do not fit together.
    #[error("structural error: {0}")]
    Structure(String),

    #[error("layer {layer}: unsupported operation ({reason})")]
    UnsupportedLayer { layer: usize, reason: String },

    #[error("non-finite value produced at layer {layer}")]
    NumericOverflow { layer: usize },

    /// SVD non-convergence and similar linear-algebra failures.
    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error(
        "patches are not distinct: sample {i} patch {p} coincides with sample {j} patch {q}"
    )]
    IdenticalPatches {
        i: usize,
        j: usize,
        p: usize,
        q: usize,
    },

    #[error("layer {layer} has width {width} < N = {samples}")]
    Width {
        layer: usize,
        width: usize,
        samples: usize,
    },

    #[error("construction failed: {0}")]
    ConstructionFailed(String),

    #[error(
        "ill-conditioned Gram system (sigma_min/sigma_max = {ratio:.3e}); \
         try a larger alpha or a different seed"
    )]
    IllConditioned { ratio: f64 },

    #[error("activation range: {0}")]
    Range(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn structure(msg: impl Into<String>) -> Self {
        Error::Structure(msg.into())
    }
}
