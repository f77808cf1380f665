//! Tokenization, labelled datasets, opinion lexicon and word vectors.

mod dataset;
mod embeddings;
mod lexicon;
pub mod tokenize;

pub use dataset::{load_dataset, write_dataset, Label, LabeledDataset, LabeledDocument, Provenance};
pub use embeddings::{fit_idf, load_embeddings, parse_embeddings, EmbeddingTable};
pub use lexicon::{load_lexicon, PolarityLexicon};
pub use tokenize::{segment, tokenize, Paragraph, Sentence, Token};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("unknown label {0:?} (expected \"pos\" or \"neg\")")]
    UnknownLabel(String),
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("line {line}: expected {expected} vector components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
}
