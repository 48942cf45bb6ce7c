use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("eigenvalues must be sorted descending, got {0:?}")]
    Unsorted([f64; 3]),
    #[error("eigenvalues must sum to 1, got sum {0}")]
    NotUnitSum(f64),
    #[error("top eigenvalue gap {gap:e} below threshold {threshold:e}; nearest projection is ill-defined")]
    DegenerateTop { gap: f64, threshold: f64 },
    #[error("projections are (nearly) perpendicular: <a,b> = {0:e}")]
    PerpendicularPair(f64),
}

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("grid too coarse: {0}")]
    TooCoarse(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("boundary winding {0} is even; the boundary loop would be contractible")]
    EvenWinding(i32),
    #[error("boundary values have not been applied to the mask")]
    MissingBoundary,
    #[error("snapshot does not match the domain: {0}")]
    SnapshotMismatch(String),
    #[error("snapshot parse error at line {line}: {msg}")]
    SnapshotParse { line: usize, msg: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("time step underflow (dt = {0:e}) without energy decrease")]
    StalledStep(f64),
    #[error("energy became non-finite at iteration {0}")]
    NonFinite(usize),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("no defect: peak distance to P is {0:.3e}")]
    NoDefect(f64),
    #[error("multiple defects: secondary peak {secondary:.3e} at ({x:.4}, {y:.4}) vs global {global:.3e}")]
    MultipleDefects {
        global: f64,
        secondary: f64,
        x: f64,
        y: f64,
    },
    #[error("circle of radius {0} leaves the sampled domain")]
    CircleOutside(f64),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error(
        "Poisson solver failed to converge: residual {residual:e} after {iterations} iterations"
    )]
    SolverDiverged { residual: f64, iterations: usize },
}
