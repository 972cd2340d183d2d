use thiserror::Error;

use crate::solvers::SolveStats;

pub type Result<T, E = SieveError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SieveError {
    #[error("kernel: {0}")]
    Kernel(String),

    #[error("point {point:?} lies outside the closed interface")]
    PointOutsideInterface { point: Vec<f64> },

    #[error("quadrature has no nodes")]
    EmptyQuadrature,

    #[error("geometry: {0}")]
    Geometry(String),

    /// A construction rule of the sieve plan is violated; `assumption` names
    /// the audit id that the violation corresponds to.
    #[error("sieve plan violates {assumption}: {detail}")]
    PlanViolation { assumption: &'static str, detail: String },

    #[error("mesh: {0}")]
    Mesh(String),

    #[error("degenerate triangle {index} (signed area {area:e})")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("assembly: {0}")]
    Assembly(String),

    #[error("linear solve did not converge after {} iterations (residual {:e})", stats.iterations, stats.residual)]
    NotConverged { stats: SolveStats },

    #[error("eigensolver: {0}")]
    Eigen(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
