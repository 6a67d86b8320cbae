use thiserror::Error;

/// Errors produced by scenario construction, the optimizers and the harness.
#[derive(Debug, Error)]
pub enum HcnError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// QoS targets cannot be met under the power budgets. `cell` names the
    /// first violating cell when known.
    #[error("infeasible{}: {detail}", cell.map(|c| format!(" (cell {c})")).unwrap_or_default())]
    Infeasible { cell: Option<usize>, detail: String },

    #[error("did not converge: {0}")]
    Convergence(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HcnError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        HcnError::InvalidArgument(msg.into())
    }

    pub fn infeasible(cell: Option<usize>, detail: impl Into<String>) -> Self {
        HcnError::Infeasible {
            cell,
            detail: detail.into(),
        }
    }
}
