use thiserror::Error;

/// Failures while reading or validating survey records.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("input contains no set records")]
    Empty,
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: column `{column}` has invalid value `{value}`")]
    Field {
        line: u64,
        column: String,
        value: String,
    },
    #[error("set `{set_id}`{}: {reason}", .row.map(|r| format!(" (line {r})")).unwrap_or_default())]
    Invalid {
        set_id: String,
        row: Option<u64>,
        reason: String,
    },
    #[error("set id `{set_id}` appears twice in group {group}")]
    DuplicateSet { set_id: String, group: String },
    #[error(
        "soak times range over {min}..{max} minutes (relative spread {spread:.3} > tolerance {tolerance}); use the variable-soak numerical fit"
    )]
    VariableSoak {
        min: f64,
        max: f64,
        spread: f64,
        tolerance: f64,
    },
    #[error("csv: {0}")]
    Csv(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<csv::Error> for DataError {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(io) => DataError::Io(io.to_string()),
            _ => DataError::Csv(e.to_string()),
        }
    }
}

/// Failures of an estimator on a particular dataset.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("no baited hooks returned (N_B = 0): total hook pressure is unbounded")]
    Saturated,
    #[error("every hook returned baited (N_B = N): rates are zero and catch ratios undefined")]
    Untouched,
    #[error("no fish caught (N_T + N_NT = 0): the split of the hook pressure is undefined")]
    NoCatch,
    #[error("closed form needs identical {what} across sets; use the numerical fit")]
    UnequalEffort { what: &'static str },
    #[error("at least {needed} sets required, got {got}")]
    TooFewSets { needed: usize, got: usize },
    #[error("invalid parameters: {0}")]
    Domain(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Unsupported(String),
}

impl EstimateError {
    /// True for data-driven degeneracies, as opposed to caller mistakes.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            EstimateError::Saturated
                | EstimateError::Untouched
                | EstimateError::NoCatch
                | EstimateError::Numerical(_)
        )
    }
}
