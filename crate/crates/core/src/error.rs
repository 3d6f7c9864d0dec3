use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("title is empty after normalization: {0:?}")]
    EmptyTitle(String),
    #[error("unknown seed category: {0}")]
    UnknownSeed(String),
    #[error("seed category cannot be removed: {0}")]
    SeedRemoval(String),
    #[error("category id {0} is not a subtree member")]
    NotAMember(u32),
    #[error("unlabeled categories at level <= {max_level}: {}", titles.join(", "))]
    IncompleteAnnotations { max_level: u32, titles: Vec<String> },
    #[error("reference term union is empty")]
    EmptyReferences,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("node {0} is missing from the partition")]
    MissingNode(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training set: {0}")]
    TrainingSet(String),
    #[error("non-finite loss during training (epoch {epoch})")]
    NonFiniteLoss { epoch: usize },
    #[error("feature dimension mismatch: model expects {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("lexicon has no usable terms")]
    EmptyLexicon,
    #[error("document ids differ between reports: {0}")]
    DocumentMismatch(String),
    #[error("vocabulary integrity: {0}")]
    Integrity(String),
}
