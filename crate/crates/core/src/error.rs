use core::fmt;

use crate::model::UserId;

/// Errors surfaced by the core estimation pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoreError {
    /// A user reports a declared friend count of zero while the edge list
    /// contains friends for them; the input data is inconsistent.
    CorruptDeclaredDegree { user: UserId },
    /// A network-level estimate needs at least two per-user records.
    TooFewRecords { got: usize },
    /// Synthetic generation requires a non-empty state before the split time.
    EmptyPreState,
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::CorruptDeclaredDegree { user } => write!(
                f,
                "user {} has declared degree 0 but non-empty adjacency",
                user.0
            ),
            CoreError::TooFewRecords { got } => {
                write!(f, "network estimate needs at least 2 records, got {got}")
            }
            CoreError::EmptyPreState => {
                write!(f, "generation requires at least one action before the split time")
            }
        }
    }
}

impl core::error::Error for CoreError {}
