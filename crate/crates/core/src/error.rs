use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input fell outside the domain of a physical relation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Data or network layout does not match what the consumer expects.
    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("incompatible file: {0}")]
    Incompatible(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("training diverged at epoch {epoch}, batch {batch} (parameter block `{block}`): {detail}")]
    Divergence {
        epoch: usize,
        batch: usize,
        block: String,
        detail: String,
    },

    #[error("non-finite activation at time step {step} of layer {layer}")]
    NonFinite { layer: usize, step: usize },

    #[error("no PI tuning available for a {0} µm set-point")]
    MissingTuning(f64),

    #[error("controller `{controller}` failed: {detail}")]
    Controller { controller: String, detail: String },

    #[error("missing artifact {path}: produce it with `{producer}` first")]
    MissingArtifact { path: String, producer: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }
}
