//! Binary sentiment classifiers behind a score-based interface.
//!
//! Documents are passed as sentences of lowercased tokens so attribution can
//! rewrite one sentence at a time without re-tokenizing.

mod checkpoint;
mod linear;
mod remote;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{segment, Label};

pub use checkpoint::{load_model, read_model, save_model, write_model, CHECKPOINT_VERSION};
pub use linear::{train, LinearModel, TrainerConfig};
pub use remote::RemoteClassifier;

/// Lower bound on either class probability; keeps outputs inside (0, 1).
pub const PROB_FLOOR: f64 = 1e-15;

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("training data is empty")]
    EmptyData,
    #[error("training data contains only the {0} label")]
    SingleClass(Label),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid checkpoint: {0}")]
    Format(String),
    #[error("remote classifier at {endpoint}: {message}")]
    Remote { endpoint: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    pub prob_pos: f64,
}

impl Prediction {
    pub fn from_prob(prob_pos: f64) -> Self {
        let prob_pos = clamp_prob(prob_pos);
        let label = if prob_pos >= 0.5 { Label::Pos } else { Label::Neg };
        Prediction { label, prob_pos }
    }

    /// Probability assigned to `y`.
    pub fn score(&self, y: Label) -> f64 {
        label_prob(self.prob_pos, y)
    }
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

pub fn label_prob(prob_pos: f64, y: Label) -> f64 {
    match y {
        Label::Pos => prob_pos,
        Label::Neg => 1.0 - prob_pos,
    }
}

/// Scores rewrites of a single sentence while the rest of the document is
/// held fixed.
pub trait SentenceScorer {
    /// Positive-class probability of the document with the fixed sentence
    /// replaced by `window`.
    fn prob_pos(&self, window: &[&str]) -> Result<f64, ClassifierError>;
}

pub trait Classifier: Send + Sync {
    /// Positive-class probability of a document given as lowercased token
    /// sentences.
    fn prob_pos(&self, sentences: &[Vec<&str>]) -> Result<f64, ClassifierError>;

    /// Token to put in place of removed words, if the model prefers one over
    /// deletion.
    fn mask_token(&self) -> Option<&str> {
        None
    }

    /// A scorer for rewrites of `sentences[index]`. The default re-scores the
    /// whole document for every call.
    fn sentence_scorer<'a>(
        &'a self,
        sentences: &[Vec<&'a str>],
        index: usize,
    ) -> Box<dyn SentenceScorer + 'a> {
        Box::new(GenericScorer {
            model: self,
            sentences: sentences.to_vec(),
            index,
        })
    }

    fn predict_tokens(&self, sentences: &[Vec<&str>]) -> Result<Prediction, ClassifierError> {
        self.prob_pos(sentences).map(Prediction::from_prob)
    }

    /// Segments and lowercases `text`, then predicts.
    fn predict_text(&self, text: &str) -> Result<Prediction, ClassifierError> {
        let paragraphs = segment(text);
        let sentences: Vec<Vec<&str>> = paragraphs
            .iter()
            .flat_map(|p| p.sentences.iter())
            .map(|s| s.lowers())
            .collect();
        self.predict_tokens(&sentences)
    }

    fn label_score(&self, text: &str, y: Label) -> Result<f64, ClassifierError> {
        Ok(self.predict_text(text)?.score(y))
    }
}

struct GenericScorer<'a, C: ?Sized> {
    model: &'a C,
    sentences: Vec<Vec<&'a str>>,
    index: usize,
}

impl<C: Classifier + ?Sized> SentenceScorer for GenericScorer<'_, C> {
    fn prob_pos(&self, window: &[&str]) -> Result<f64, ClassifierError> {
        let mut doc: Vec<Vec<&str>> = Vec::with_capacity(self.sentences.len());
        for (i, s) in self.sentences.iter().enumerate() {
            if i == self.index {
                doc.push(window.to_vec());
            } else {
                doc.push(s.clone());
            }
        }
        self.model.prob_pos(&doc).map(clamp_prob)
    }
}

impl fmt::Display for Prediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (p_pos={:.4})", self.label, self.prob_pos)
    }
}
