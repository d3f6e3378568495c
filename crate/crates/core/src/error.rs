use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed CSV: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("row {row}, column `{column}`: missing value")]
    MissingCell { row: usize, column: String },

    #[error("row {row}, column `{column}`: `{value}` is not a finite number")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("column `{column}` is constant")]
    ConstantColumn { column: String },

    #[error("dataset has {rows} rows; at least {min} are required")]
    TooFewRows { rows: usize, min: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("graph contains a directed cycle: {cycle:?}")]
    CycleDetected { cycle: Vec<usize> },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("conditioning set is numerically singular")]
    SingularConditioningSet,

    #[error("insufficient sample: n - |Z| - 3 = {residual_dof} < 1")]
    InsufficientSample { residual_dof: i64 },

    #[error("contingency table has no cell with positive expected count")]
    DegenerateTable,

    #[error("regression design matrix is rank deficient")]
    SingularRegression,

    #[error("inconsistent edge constraints: {0}")]
    InconsistentConstraints(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("data lie on a lower-dimensional subspace (exact fit)")]
    ExactFit,

    #[error("reweighting kept {kept} rows, need more than {needed}")]
    DegenerateReweighting { kept: usize, needed: usize },

    #[error("every row was flagged as an outlier")]
    EmptyResult,

    #[error("CPT for node `{node}`, parent configuration `{config}` sums to {sum}")]
    CptNotNormalized {
        node: String,
        config: String,
        sum: f64,
    },

    #[error("model schema violation: {0}")]
    Schema(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
