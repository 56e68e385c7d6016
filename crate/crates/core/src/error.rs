use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside the domain of the model or function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller supplied malformed data (non-finite values, empty sets, shape mismatch).
    #[error("invalid input: {0}")]
    Input(String),

    /// The tolerance is below the smallest radius for which the ambiguity set is non-empty.
    #[error(
        "epsilon = {epsilon} is below epsilon_min = {gap}: the expected KL divergence of any \
         distribution to the posterior family is at least epsilon_min, so the ambiguity set is empty"
    )]
    Infeasible { epsilon: f64, gap: f64 },

    #[error("cost oracle is not declared convex in the decision variable")]
    NonConvex,

    #[error("{routine} did not converge within {iterations} iterations")]
    NoConvergence {
        routine: &'static str,
        iterations: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
