use std::path::PathBuf;

use thiserror::Error;

use crate::hpspace::PointId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: params {params}, grads {grads}, state {state}")]
    ShapeMismatch {
        params: usize,
        grads: usize,
        state: usize,
    },

    #[error("non-finite gradient at index {index}")]
    NonFiniteGradient { index: usize },

    #[error("step {step} exceeds schedule length {total}")]
    StepOutOfRange { step: u64, total: u64 },

    #[error("label smoothing must lie in [0, 1), got {0}")]
    InvalidSmoothing(f64),

    #[error("no records")]
    NoRecords,

    #[error("duplicate cell ({point}, {workload})")]
    DuplicateCell { point: PointId, workload: String },

    #[error("missing cells: {}", format_gaps(.0))]
    MissingCells(Vec<(PointId, String)>),

    #[error("cell ({point}, {workload}): first target step {step} exceeds budget {budget}")]
    StepBeyondBudget {
        point: PointId,
        workload: String,
        step: u64,
        budget: u64,
    },

    #[error("unknown point id {0}")]
    UnknownPoint(PointId),

    #[error("unknown workload id {0:?}")]
    UnknownWorkload(String),

    #[error("cannot produce empty matrix")]
    EmptyMatrix,

    #[error("all trials diverged on workload {0:?}")]
    AllDiverged(String),

    #[error(
        "exhaustive search over {combinations} subsets exceeds the cap of {cap}; use the greedy builder"
    )]
    EnumerationCap { combinations: u128, cap: u128 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn format_gaps(gaps: &[(PointId, String)]) -> String {
    gaps.iter()
        .map(|(p, w)| format!("({p}, {w})"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
