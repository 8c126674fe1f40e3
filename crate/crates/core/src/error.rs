use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Shapes, indices or dimensions do not line up.
    #[error("structural error: {0}")]
    Structural(String),

    /// A parameter or an input feature required by the chosen cost or noise model is missing or invalid.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// The caller broke a precondition (empty input, infeasible assignment, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("refusing to enumerate {mothers}x{daughters} instance (limit {limit_mothers}x{limit_daughters})")]
    TooLarge {
        mothers: usize,
        daughters: usize,
        limit_mothers: usize,
        limit_daughters: usize,
    },

    #[error("column {0} has no probability mass")]
    DegenerateColumn(usize),

    #[error("temperature cannot be fitted: the true class has zero probability in every column")]
    Unfittable,

    #[error("no feasible assignment satisfies the given constraints")]
    Infeasible,
}
