use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input data.
    #[error("invalid input: {0}")]
    Input(String),

    /// Hyperparameters or profiles that cannot be satisfied.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("kernel `{0}` is not sum-decomposable")]
    UnsupportedKernel(String),

    #[error("unknown {what} `{name}`")]
    UnknownStrategy { what: &'static str, name: String },

    /// The solver hit its iteration cap. `alphas` is the best feasible iterate.
    #[error("solver did not converge after {iterations} iterations (max KKT violation {violation:e})")]
    NotConverged {
        iterations: usize,
        violation: f64,
        alphas: Vec<f64>,
    },

    #[error("gap in series for component `{component}` between t={before} and t={after}")]
    Gap {
        component: String,
        before: i64,
        after: i64,
    },

    #[error("not enough data: {0}")]
    TooShort(String),

    #[error("localization map does not belong to graph `{0}`")]
    StaleDimensionMap(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
