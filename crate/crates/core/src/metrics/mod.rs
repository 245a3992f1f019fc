//! Topic quality: coherence against a reference corpus (NPMI, CV) and
//! diversity between topics (IRBO and two embedding-based scores).

mod coherence;
mod cooccurrence;
mod diversity;
mod report;

use std::path::PathBuf;

use thiserror::Error;

pub use coherence::{cv, cv_from_npmi_matrix, npmi, npmi_matrix, npmi_pair, NPMI_EPSILON};
pub use cooccurrence::CooccurrenceStats;
pub use diversity::{irbo, rbo, wi_c, wi_m, RBO_P};
pub use report::{
    evaluate_topics, read_topics, regrouped_topics, write_topics, MetricOptions, MetricsReport, TopicSet,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("reference corpus has no tokens")]
    EmptyReference,
    #[error("a topic needs at least 2 words, got {0}")]
    TooFewWords(usize),
    #[error("diversity needs at least 2 topics, got {0}")]
    TooFewTopics(usize),
    #[error("invalid metric setting: {0}")]
    Config(String),
    #[error("unknown word: {0}")]
    UnknownWord(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, MetricsError>;
