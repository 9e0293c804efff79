use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(
        "svd did not converge for {rows}x{cols} matrix after {sweeps} sweeps (off-diagonal residual {residual:e})"
    )]
    SvdNoConvergence {
        rows: usize,
        cols: usize,
        sweeps: usize,
        residual: f64,
    },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("count mismatch: {0}")]
    CountMismatch(String),

    #[error("depth mismatch: source has {source_depth} layers, target has {target_depth}")]
    DepthMismatch { source_depth: usize, target_depth: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("training failed at step {step}: {message}")]
    Training { step: usize, message: String },

    #[error("layer {index}: {source}")]
    Layer {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the innermost error.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::NonFinite(_) => "non_finite",
            Error::SvdNoConvergence { .. } => "svd_no_convergence",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::BadMagic { .. } => "bad_magic",
            Error::Truncated(_) => "truncated",
            Error::CountMismatch(_) => "count_mismatch",
            Error::DepthMismatch { .. } => "depth_mismatch",
            Error::Config(_) => "config",
            Error::Training { .. } => "training",
            Error::Layer { source, .. } | Error::Stage { source, .. } => source.kind(),
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    pub fn at_layer(self, index: usize) -> Self {
        Error::Layer {
            index,
            source: Box::new(self),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_sees_through_context() {
        let e = Error::DepthMismatch {
            source_depth: 2,
            target_depth: 3,
        }
        .at_layer(1)
        .in_stage("transport");
        assert_eq!(e.kind(), "depth_mismatch");
        assert!(e.to_string().contains("transport"));
    }
}
