use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("mesh is not grounded: {0}")]
    Ungrounded(String),
    #[error("singular material: {0}")]
    SingularMaterial(String),
    #[error("solver did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    Solver { iterations: usize, residual: f64 },
    #[error("value out of range: {0}")]
    Range(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("weights error: {0}")]
    Weights(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("non-finite loss at iteration {iteration} ({detail}); last good checkpoint: {}", last_good.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "none".into()))]
    NonFinite {
        iteration: usize,
        detail: String,
        last_good: Option<PathBuf>,
    },
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("generation error: {0}")]
    Generation(String),
    #[error("experiment error: {0}")]
    Experiment(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
