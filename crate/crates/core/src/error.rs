use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("point {index} at ({x}, {y}) lies outside the {grid}×{grid} grid")]
    PointOutsideGrid { index: usize, x: f32, y: f32, grid: usize },
    #[error("degenerate heatmap for point {0}: no positive score among the selected pixels")]
    DegenerateHeatmap(usize),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("undefined correlation: every dimension has zero variance")]
    UndefinedCorrelation,
    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Checkpoint(#[from] vocaltrack_nn::CheckpointError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
