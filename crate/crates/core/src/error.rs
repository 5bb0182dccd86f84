use thiserror::Error;

use crate::graph::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ontology error: {0}")]
    Ontology(String),

    #[error("graph integrity error: {0}")]
    GraphIntegrity(String),

    #[error("pattern error: {0}")]
    Pattern(String),

    #[error("rule application did not reach a fixpoint after {sweeps} sweeps")]
    Fixpoint { sweeps: usize },

    #[error("no {relation} relation anchored at node {anchor}")]
    Coverage { relation: &'static str, anchor: NodeId },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed scenario file {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors caused by user-supplied input (bad scenario, missing file), as
    /// opposed to internal failures.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Scenario(_) | Error::Json { .. } | Error::Input(_) | Error::Io { .. }
        )
    }
}
