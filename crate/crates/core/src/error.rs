use thiserror::Error;

/// Errors produced across the lifting, analysis, design and trial-loop layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("relative degree mismatch: Markov parameter C·A^{index}·B = {value:e} (expected {expected})")]
    RelativeDegreeMismatch {
        index: usize,
        value: f64,
        expected: &'static str,
    },

    #[error("plant matrix is numerically singular (condition estimate {condition:e})")]
    SingularPlant { condition: f64 },

    #[error("I − Q(I − LP) is numerically singular")]
    SingularSystem,

    #[error("design is singular: {0}")]
    SingularDesign(String),

    #[error("eigenvalue iteration did not converge within {iterations} iterations")]
    ConvergenceFailure { iterations: usize },

    #[error("ILC system is not asymptotically stable (spectral radius {rho})")]
    NotAsymptoticallyStable { rho: f64 },

    #[error("design is not monotonically convergent in the Euclidean norm (gamma2 = {gamma2})")]
    DesignNotConvergent { gamma2: f64 },

    #[error("reference adaptation infeasible{}: y_max − eps_bar falls short of ‖y_j‖∞ by {deficit:e}", trial.map(|j| format!(" at trial {j}")).unwrap_or_default())]
    Infeasible { trial: Option<usize>, deficit: f64 },

    #[error("bisection exceeded its budget of {iterations} iterations")]
    IterationBudgetExceeded { iterations: usize },

    #[error("assumption {assumption} violated: measured {measured} exceeds y_max = {bound}")]
    AssumptionViolated {
        assumption: u8,
        measured: f64,
        bound: f64,
    },

    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse {
        line: Option<usize>,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
