use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors shared across the toolkit.
///
/// Variants map onto the CLI exit codes: configuration-class problems
/// (bounds, shape, config, stationarity) exit 2, numerical-class problems
/// (non-finite values, reducible chains, singular diffusion) exit 3, and
/// missing model capabilities exit 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} outside bounds [{lo}, {hi}]")]
    Bounds {
        name: String,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical error: {what}{}", time_index.map(|t| format!(" at time index {t}")).unwrap_or_default())]
    Numerical {
        what: String,
        time_index: Option<usize>,
    },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("model `{model}` does not expose a finite state enumeration")]
    Capability { model: String },

    #[error("chain is reducible: {} independent stationary distributions found", basis.len())]
    MultipleStationary { basis: Vec<Vec<f64>> },

    #[error("stationarity violated: {0}")]
    Stationarity(String),

    #[error("diffusion coefficient D({x}) = {value} below minimum {d_min}")]
    SingularDiffusion { x: f64, value: f64, d_min: f64 },

    #[error("replicate {index}: {source}")]
    Replicate { index: usize, source: Box<Error> },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn numerical(what: impl Into<String>, time_index: Option<usize>) -> Self {
        Error::Numerical {
            what: what.into(),
            time_index,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::Shape {
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub fn in_replicate(self, index: usize) -> Self {
        Error::Replicate {
            index,
            source: Box::new(self),
        }
    }
}
