use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("model `{model}`: missing required parameter `{field}`")]
    MissingParameter { model: String, field: String },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no stationary covariance: linearization is not Hurwitz (max Re eigenvalue {max_re:.3e})")]
    NotHurwitz { max_re: f64 },

    #[error("blow-up at step {step}: non-finite state")]
    BlowUp { step: usize },

    #[error("t_max too small: all {n} paths were censored")]
    AllCensored { n: usize },

    #[error("degenerate diffusion at x = {x:?}")]
    DegenerateDiffusion { x: Vec<f64> },

    #[error("quadrature did not converge on [{a}, {b}] (error estimate {estimate:.3e})")]
    Quadrature { a: f64, b: f64, estimate: f64 },

    #[error("frozen state {state:?}: every rate vanishes at a non-absorbing state")]
    FrozenState { state: Vec<i64> },

    #[error("no closed form: {0}")]
    NoClosedForm(String),

    #[error("singular Jacobian at Newton iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("Newton iteration diverged (last residual {residual:.3e})")]
    NewtonDivergence { residual: f64 },

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code reported by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Quadrature { .. }
            | Error::SingularJacobian { .. }
            | Error::NewtonDivergence { .. }
            | Error::NotConverged(_)
            | Error::BlowUp { .. }
            | Error::AllCensored { .. } => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}
