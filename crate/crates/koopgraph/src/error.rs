use thiserror::Error;

/// Crate-wide error type.
///
/// Variants map onto the CLI exit-code contract: `Parse`/`Config`/`Io`
/// are configuration failures (exit 2), `Numerical`/`Degenerate` are
/// numerical failures (exit 3), `Divergence` is a pipeline divergence
/// (exit 4).
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation's preconditions (shape mismatch,
    /// out-of-range argument, asymmetric input to a symmetric solver, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An iterative kernel failed to converge or produced unusable output.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Input is structurally valid but degenerate (all-zero snapshots,
    /// isolated node without self-loops, zero-variance signal, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A trajectory blew up; `step` names the first offending step.
    #[error("divergence at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    /// Negative sampling could not find enough non-edges.
    #[error("negative sampling exhausted: {0}")]
    SamplingExhausted(String),

    /// Malformed file or config content.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
