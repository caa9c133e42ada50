use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid task {id}: {reason}")]
    InvalidTask { id: usize, reason: String },

    #[error("invalid task set: {0}")]
    InvalidTaskSet(String),

    #[error("{test} does not support {model}-deadline task sets")]
    UnsupportedDeadlineModel {
        test: &'static str,
        model: crate::task::DeadlineModel,
    },

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no task set met the generation constraints after {attempts} attempts")]
    GenerationFailed { attempts: usize },

    #[error("weighted acceptance ratio of an empty record list")]
    EmptyRecords,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
