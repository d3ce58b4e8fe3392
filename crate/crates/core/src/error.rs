use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("negative initial density {value} at x = {x:?}")]
    NegativeDensity { x: Vec<f64>, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("exact harmonic push requested for non-harmonic potential {0}")]
    NonHarmonicPotential(String),

    #[error("moment order {0} exceeds the supported maximum of 12")]
    MomentOrderTooLarge(usize),

    #[error("CFL condition violated: ratio {ratio} > 1 ({detail})")]
    CflViolation { ratio: f64, detail: String },

    #[error("analytic two-branch solution undefined at t = {0} (requires 0 <= t < pi/2)")]
    OutsideAnalyticRange(f64),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("non-finite gradient entry at index {index}")]
    NonFiniteGradient { index: usize },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("scheme {scheme} expects {expected} features, got {got}")]
    SchemeArity {
        scheme: String,
        expected: usize,
        got: usize,
    },

    #[error("missing moment data for scheme: {0}")]
    MissingMoment(String),

    #[error("query point (t = {t}, x = {x:?}) outside the data hull")]
    OutsideDataHull { t: f64, x: Vec<f64> },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("unknown quantity `{0}`")]
    UnknownQuantity(String),

    #[error("format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("shape mismatch for `{entry}`: {detail}")]
    ShapeMismatch { entry: String, detail: String },

    #[error("checksum mismatch for entry `{0}`")]
    Checksum(String),

    #[error("checkpoint spec mismatch: {0}")]
    SpecMismatch(String),

    #[error("malformed file {path}: {detail}")]
    Malformed { path: PathBuf, detail: String },

    #[error("configuration errors:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
