//! Replacement candidates for a masked word.
//!
//! Scores are local to each back-end and only order its own output.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingTable, Label, PolarityLexicon};

pub const MASK: &str = "[MASK]";

#[derive(Debug, thiserror::Error)]
pub enum ProposerError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("mask-fill service at {endpoint}: {message}")]
    Remote { endpoint: String, message: String },
    #[error("mask-fill service at {endpoint} returned HTTP {status}: {body}")]
    Status { endpoint: String, status: u16, body: String },
    #[error("proposer backend {0:?} needs {1}")]
    Missing(Backend, &'static str),
}

/// A document with one masked position.
#[derive(Debug, Clone, Copy)]
pub struct MaskedQuery<'a> {
    pub sentences: &'a [Vec<&'a str>],
    pub sentence: usize,
    pub position: usize,
    /// Polarity the replacement should carry.
    pub target: Label,
    pub k: usize,
}

impl<'a> MaskedQuery<'a> {
    pub fn masked_word(&self) -> Result<&'a str, ProposerError> {
        self.sentences
            .get(self.sentence)
            .and_then(|s| s.get(self.position))
            .copied()
            .ok_or_else(|| {
                ProposerError::InvalidQuery(format!(
                    "no token at sentence {} position {}",
                    self.sentence, self.position
                ))
            })
    }

    fn validate(&self) -> Result<&'a str, ProposerError> {
        if self.k == 0 {
            return Err(ProposerError::InvalidQuery("k must be at least 1".into()));
        }
        self.masked_word()
    }

    /// Space-joined text with the masked token replaced by [`MASK`].
    pub fn render(&self) -> String {
        let mut parts = Vec::new();
        for (si, s) in self.sentences.iter().enumerate() {
            for (ti, &t) in s.iter().enumerate() {
                parts.push(if si == self.sentence && ti == self.position { MASK } else { t });
            }
        }
        parts.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub word: String,
    pub score: f64,
}

/// Candidates in descending score order, unique, at most `k`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProposalSet {
    pub candidates: Vec<Proposal>,
}

impl ProposalSet {
    /// Sorts by score (stable, so equal scores keep input order), drops
    /// non-finite scores and repeated words, keeps the first `k`.
    pub fn from_scored(mut candidates: Vec<Proposal>, k: usize) -> Self {
        candidates.retain(|p| p.score.is_finite() && !p.word.is_empty());
        candidates.sort_by(|a, b| b.score.total_cmp(&a.score));
        let mut seen = HashSet::new();
        candidates.retain(|p| seen.insert(p.word.clone()));
        candidates.truncate(k);
        ProposalSet { candidates }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|p| p.word.as_str())
    }
}

pub trait Proposer: Send + Sync {
    fn propose(&self, query: &MaskedQuery<'_>) -> Result<ProposalSet, ProposerError>;
}

/// Keeps candidates whose lexicon polarity opposes `label`, in order.
pub fn filter_by_polarity(proposals: &ProposalSet, label: Label, lexicon: &PolarityLexicon) -> ProposalSet {
    let opposite = lexicon.words(label.flip());
    ProposalSet {
        candidates: proposals
            .candidates
            .iter()
            .filter(|p| opposite.contains(&p.word))
            .cloned()
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Antonym,
    Embedding,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposerConfig {
    pub backend: Backend,
    pub k: usize,
    pub endpoint: Option<String>,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
    /// Antonym back-end: fall back to a same-class lexicon word when the map
    /// has no usable antonym.
    pub antonym_fallback: bool,
}

impl Default for ProposerConfig {
    fn default() -> Self {
        ProposerConfig {
            backend: Backend::Embedding,
            k: 100,
            endpoint: None,
            max_in_flight: 4,
            timeout_secs: 30,
            antonym_fallback: true,
        }
    }
}

/// Builds the configured back-end.
pub fn build_proposer(
    config: &ProposerConfig,
    lexicon: Arc<PolarityLexicon>,
    embeddings: Option<Arc<EmbeddingTable>>,
    idf: Arc<HashMap<String, f64>>,
) -> Result<Box<dyn Proposer>, ProposerError> {
    Ok(match config.backend {
        Backend::Antonym => Box::new(AntonymProposer::new(lexicon, idf, config.antonym_fallback)),
        Backend::Embedding => {
            let emb = embeddings.ok_or(ProposerError::Missing(Backend::Embedding, "an embedding table"))?;
            Box::new(EmbeddingProposer::new(emb, lexicon))
        }
        Backend::Remote => {
            let endpoint = config
                .endpoint
                .clone()
                .ok_or(ProposerError::Missing(Backend::Remote, "an endpoint"))?;
            Box::new(RemoteProposer::new(
                endpoint,
                config.max_in_flight,
                Duration::from_secs(config.timeout_secs),
            ))
        }
    })
}

/// Coarse word class from suffixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordClass {
    Adverb,
    Noun,
    Verb,
    Adjective,
}

pub fn guess_class(word: &str) -> WordClass {
    const NOUN: &[&str] = &["ness", "ment", "tion", "sion", "ity", "ance", "ence", "ism", "ship", "hood"];
    const VERB: &[&str] = &["ize", "ise", "ify", "ed", "ing", "en"];
    if word.ends_with("ly") {
        WordClass::Adverb
    } else if NOUN.iter().any(|s| word.ends_with(s)) {
        WordClass::Noun
    } else if VERB.iter().any(|s| word.ends_with(s)) {
        WordClass::Verb
    } else {
        WordClass::Adjective
    }
}

/// Antonym-map lookup with an optional IDF-ranked fallback.
pub struct AntonymProposer {
    lexicon: Arc<PolarityLexicon>,
    idf: Arc<HashMap<String, f64>>,
    fallback: bool,
}

impl AntonymProposer {
    /// `idf` ranks fallback words; only words it contains are eligible.
    pub fn new(lexicon: Arc<PolarityLexicon>, idf: Arc<HashMap<String, f64>>, fallback: bool) -> Self {
        AntonymProposer { lexicon, idf, fallback }
    }

    fn fallback_word(&self, word: &str, target: Label) -> Option<Proposal> {
        let class = guess_class(word);
        self.lexicon
            .words(target)
            .iter()
            .filter(|w| guess_class(w) == class)
            .filter_map(|w| self.idf.get(w).map(|&s| (w, s)))
            // BTreeSet iteration is alphabetical, so max_by keeps the last
            // of equal scores; reverse to prefer the first
            .rev()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(w, s)| Proposal {
                word: w.clone(),
                score: s,
            })
    }
}

impl Proposer for AntonymProposer {
    fn propose(&self, query: &MaskedQuery<'_>) -> Result<ProposalSet, ProposerError> {
        let word = query.validate()?;
        if let Some(ant) = self.lexicon.antonym(word) {
            if !self.fallback || self.lexicon.polarity(ant) == Some(query.target) {
                return Ok(ProposalSet::from_scored(
                    vec![Proposal {
                        word: ant.to_string(),
                        score: 1.0,
                    }],
                    query.k,
                ));
            }
        }
        if !self.fallback {
            return Ok(ProposalSet::default());
        }
        Ok(ProposalSet::from_scored(
            self.fallback_word(word, query.target).into_iter().collect(),
            query.k,
        ))
    }
}

/// Nearest lexicon words of the target polarity by cosine similarity.
pub struct EmbeddingProposer {
    embeddings: Arc<EmbeddingTable>,
    lexicon: Arc<PolarityLexicon>,
}

impl EmbeddingProposer {
    pub fn new(embeddings: Arc<EmbeddingTable>, lexicon: Arc<PolarityLexicon>) -> Self {
        EmbeddingProposer { embeddings, lexicon }
    }
}

impl Proposer for EmbeddingProposer {
    fn propose(&self, query: &MaskedQuery<'_>) -> Result<ProposalSet, ProposerError> {
        let word = query.validate()?;
        let allowed = self.lexicon.words(query.target);
        let near = self.embeddings.nearest(word, query.k, |w| allowed.contains(w));
        Ok(ProposalSet::from_scored(
            near.into_iter().map(|(word, score)| Proposal { word, score }).collect(),
            query.k,
        ))
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct FillMaskRequest {
    pub text: String,
    pub top_k: usize,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct FillMaskCandidate {
    pub token: String,
    pub score: f64,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct FillMaskResponse {
    pub candidates: Vec<FillMaskCandidate>,
}

/// Counting semaphore bounding concurrent requests.
struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

/// Client for an HTTP mask-fill service (`POST /fill-mask`).
pub struct RemoteProposer {
    endpoint: String,
    agent: ureq::Agent,
    limit: Semaphore,
}

impl RemoteProposer {
    pub fn new(endpoint: impl Into<String>, max_in_flight: usize, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteProposer {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            agent,
            limit: Semaphore {
                permits: Mutex::new(max_in_flight.max(1)),
                freed: Condvar::new(),
            },
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Sends one request as-is.
    pub fn fill_mask(&self, request: &FillMaskRequest) -> Result<FillMaskResponse, ProposerError> {
        let err = |message: String| ProposerError::Remote {
            endpoint: self.endpoint.clone(),
            message,
        };
        let _permit = self.limit.acquire();
        let url = format!("{}/fill-mask", self.endpoint);
        let body = serde_json::to_vec(request).map_err(|e| err(e.to_string()))?;
        let mut resp = self
            .agent
            .post(&url)
            .content_type("application/json")
            .send(&body[..])
            .map_err(|e| err(e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(ProposerError::Status {
                endpoint: self.endpoint.clone(),
                status,
                body: body.trim().to_string(),
            });
        }
        resp.body_mut()
            .read_json()
            .map_err(|e| err(format!("bad response body: {e}")))
    }
}

impl Proposer for RemoteProposer {
    fn propose(&self, query: &MaskedQuery<'_>) -> Result<ProposalSet, ProposerError> {
        query.validate()?;
        let request = FillMaskRequest {
            text: query.render(),
            top_k: query.k,
        };
        let resp = self.fill_mask(&request)?;
        let candidates = resp
            .candidates
            .into_iter()
            .map(|c| Proposal {
                word: c.token.trim().to_lowercase(),
                score: c.score,
            })
            .collect();
        Ok(ProposalSet::from_scored(candidates, query.k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lexicon() -> Arc<PolarityLexicon> {
        Arc::new(PolarityLexicon::from_words(
            ["good", "nice", "superb", "well", "entertaining", "wonderful"],
            ["bad", "terrible", "awful", "badly", "boring", "dreadful"],
            [("good", "bad"), ("badly", "well"), ("boring", "entertaining")],
        ))
    }

    fn idf() -> Arc<HashMap<String, f64>> {
        Arc::new(
            [("terrible", 2.0), ("awful", 3.0), ("dreadful", 3.0), ("bad", 1.5)]
                .into_iter()
                .map(|(w, s)| (w.to_string(), s))
                .collect(),
        )
    }

    fn query<'a>(sentences: &'a [Vec<&'a str>], position: usize, target: Label, k: usize) -> MaskedQuery<'a> {
        MaskedQuery {
            sentences,
            sentence: 0,
            position,
            target,
            k,
        }
    }

    #[test]
    fn antonym_lookup() {
        let p = AntonymProposer::new(lexicon(), idf(), true);
        let s = vec![vec!["a", "good", "film"]];
        let out = p.propose(&query(&s, 1, Label::Neg, 1)).unwrap();
        assert_eq!(out.candidates, [Proposal { word: "bad".into(), score: 1.0 }]);
    }

    #[test]
    fn antonym_fallback_prefers_rare_same_class_word() {
        let s = vec![vec!["superb"]];
        let p = AntonymProposer::new(lexicon(), idf(), true);
        let out = p.propose(&query(&s, 0, Label::Neg, 5)).unwrap();
        // awful and dreadful tie on idf; the alphabetically first wins
        assert_eq!(out.words().collect::<Vec<_>>(), ["awful"]);
        let strict = AntonymProposer::new(lexicon(), idf(), false);
        assert!(strict.propose(&query(&s, 0, Label::Neg, 5)).unwrap().is_empty());
    }

    #[test]
    fn word_classes() {
        assert_eq!(guess_class("badly"), WordClass::Adverb);
        assert_eq!(guess_class("sadness"), WordClass::Noun);
        assert_eq!(guess_class("boring"), WordClass::Verb);
        assert_eq!(guess_class("superb"), WordClass::Adjective);
    }

    #[test]
    fn invalid_queries() {
        let p = AntonymProposer::new(lexicon(), idf(), true);
        let s = vec![vec!["good"]];
        assert!(p.propose(&query(&s, 3, Label::Neg, 1)).is_err());
        assert!(p.propose(&query(&s, 0, Label::Neg, 0)).is_err());
    }

    #[test]
    fn polarity_filter() {
        let set = ProposalSet::from_scored(
            ["good", "terrible", "nice"]
                .iter()
                .enumerate()
                .map(|(i, w)| Proposal {
                    word: w.to_string(),
                    score: 3.0 - i as f64,
                })
                .collect(),
            10,
        );
        let out = filter_by_polarity(&set, Label::Pos, &lexicon());
        assert_eq!(out.words().collect::<Vec<_>>(), ["terrible"]);
        assert!(filter_by_polarity(&ProposalSet::default(), Label::Pos, &lexicon()).is_empty());
    }

    #[test]
    fn proposal_set_normalizes() {
        let raw = vec![
            Proposal { word: "a".into(), score: 0.1 },
            Proposal { word: "b".into(), score: 0.9 },
            Proposal { word: "a".into(), score: 0.5 },
            Proposal { word: "c".into(), score: f64::NAN },
        ];
        let set = ProposalSet::from_scored(raw, 2);
        assert_eq!(
            set.candidates,
            [Proposal { word: "b".into(), score: 0.9 }, Proposal { word: "a".into(), score: 0.5 }]
        );
    }

    #[test]
    fn embedding_backend_stays_in_target_polarity() {
        let mut t = EmbeddingTable::new(2);
        for (w, v) in [
            ("superb", [1.0, 0.1]),
            ("wonderful", [1.0, 0.2]),
            ("awful", [0.9, 0.3]),
            ("terrible", [0.5, 0.5]),
            ("film", [1.0, 0.15]),
        ] {
            t.insert(w, &v);
        }
        let p = EmbeddingProposer::new(Arc::new(t), lexicon());
        let s = vec![vec!["superb"]];
        let out = p.propose(&query(&s, 0, Label::Neg, 100)).unwrap();
        assert_eq!(out.words().collect::<Vec<_>>(), ["awful", "terrible"]);
    }

    #[test]
    fn render_marks_one_position() {
        let s = vec![vec!["the", "movie"], vec!["is", "good", "."]];
        let q = MaskedQuery {
            sentences: &s,
            sentence: 1,
            position: 1,
            target: Label::Neg,
            k: 3,
        };
        assert_eq!(q.render(), "the movie is [MASK] .");
    }

    #[test]
    fn default_k_is_100() {
        let c: ProposerConfig = toml::from_str("backend = \"embedding\"").unwrap();
        assert_eq!(c.k, 100);
        assert_eq!(c.max_in_flight, 4);
    }

    #[test]
    fn unreachable_service_reports_endpoint() {
        let p = RemoteProposer::new("http://127.0.0.1:1", 2, Duration::from_millis(300));
        let s = vec![vec!["good"]];
        let err = p.propose(&query(&s, 0, Label::Neg, 3)).unwrap_err();
        assert!(err.to_string().contains("127.0.0.1:1"), "{err}");
    }
}
