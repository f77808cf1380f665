//! Candidate causal terms and their occlusion importance.
//!
//! The importance of a term is the expected relative drop in the true-label
//! score when the term is deleted, with the rest of its sentence randomly
//! thinned:
//!
//! ```text
//! phi = E[(l(base) - l(masked)) / max(l(base), eps)]
//! ```
//!
//! where `base` keeps the term plus a Bernoulli(q) subset of the other
//! tokens of its sentence, and `masked` is the same subset without the term.
//! Text outside the sentence is left intact.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::classifier::{label_prob, Classifier, ClassifierError, SentenceScorer};
use crate::corpus::{Label, LabeledDocument, PolarityLexicon};

/// Denominator floor.
pub const EPSILON: f64 = 1e-6;
/// Largest context size `importance_exact` will enumerate.
pub const MAX_EXACT_CONTEXT: usize = 16;
/// Tokens after a negation trigger included in its phrase.
pub const NEGATION_WINDOW: usize = 3;
pub const NEGATION_TRIGGERS: &[&str] = &[
    "not", "no", "never", "n't", "cannot", "nothing", "nobody", "neither", "nor",
];

#[derive(Debug, thiserror::Error)]
pub enum AttributionError {
    #[error("term span {start}..{end} is invalid for sentence {sentence} of length {len}")]
    InvalidSpan {
        sentence: usize,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("{0} context tokens exceed the exact-enumeration limit of {MAX_EXACT_CONTEXT}; use the sampler")]
    ContextTooLarge(usize),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    SentimentWord,
    NegationPhrase,
}

/// A word or negation phrase, addressed by token range within a sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateTerm {
    pub kind: TermKind,
    /// Sentence index in document reading order.
    pub sentence: usize,
    /// Token range `start..end` within the sentence.
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

impl CandidateTerm {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    /// Index of the negation trigger; the first token of a phrase.
    pub fn trigger(&self) -> Option<usize> {
        (self.kind == TermKind::NegationPhrase).then_some(self.start)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermImportance {
    pub term: CandidateTerm,
    pub phi: f64,
    pub num_samples: usize,
    pub std_error: f64,
}

/// Number of context samples: a fixed count or full enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleCount {
    Fixed(usize),
    Exact,
}

impl fmt::Display for SampleCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleCount::Fixed(n) => write!(f, "{n}"),
            SampleCount::Exact => f.write_str("exact"),
        }
    }
}

impl Serialize for SampleCount {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            SampleCount::Fixed(n) => s.serialize_u64(*n as u64),
            SampleCount::Exact => s.serialize_str("exact"),
        }
    }
}

impl<'de> Deserialize<'de> for SampleCount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(0) => Err(serde::de::Error::custom("num_samples must be at least 1")),
            Raw::N(n) => Ok(SampleCount::Fixed(n as usize)),
            Raw::S(s) if s == "exact" => Ok(SampleCount::Exact),
            Raw::S(s) => Err(serde::de::Error::custom(format!(
                "num_samples must be a positive integer or \"exact\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub num_samples: SampleCount,
    /// Probability of keeping each context token.
    pub keep_prob: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            num_samples: SampleCount::Fixed(32),
            keep_prob: 0.7,
            seed: 0,
        }
    }
}

fn is_sentence_final(tok: &str) -> bool {
    !tok.is_empty() && tok.chars().all(|c| matches!(c, '.' | '!' | '?'))
}

pub fn is_negation_trigger(tok: &str) -> bool {
    NEGATION_TRIGGERS.contains(&tok)
}

/// Candidate causal terms of one sentence of lowercased tokens.
///
/// Returns every token whose lexicon polarity equals `label`, and every
/// negation phrase: a trigger plus up to [`NEGATION_WINDOW`] following
/// tokens, cut at sentence-final punctuation. Among overlapping phrases the
/// longest survives (earlier on ties). Output is ordered by span start,
/// words before phrases.
pub fn candidate_terms(tokens: &[&str], sentence: usize, label: Label, lexicon: &PolarityLexicon) -> Vec<CandidateTerm> {
    let mut out = Vec::new();
    let congruent = lexicon.words(label);
    for (i, tok) in tokens.iter().enumerate() {
        if congruent.contains(*tok) {
            out.push(CandidateTerm {
                kind: TermKind::SentimentWord,
                sentence,
                start: i,
                end: i + 1,
                surface: tok.to_string(),
            });
        }
    }

    let mut phrases: Vec<(usize, usize)> = Vec::new();
    for (i, tok) in tokens.iter().enumerate() {
        if !is_negation_trigger(tok) {
            continue;
        }
        let mut end = i + 1;
        while end < tokens.len() && end - i <= NEGATION_WINDOW && !is_sentence_final(tokens[end]) {
            end += 1;
        }
        phrases.push((i, end));
    }
    phrases.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));
    let mut kept: Vec<(usize, usize)> = Vec::new();
    for (s, e) in phrases {
        if kept.iter().all(|&(ks, ke)| e <= ks || s >= ke) {
            kept.push((s, e));
        }
    }
    for (s, e) in kept {
        out.push(CandidateTerm {
            kind: TermKind::NegationPhrase,
            sentence,
            start: s,
            end: e,
            surface: tokens[s..e].join(" "),
        });
    }
    out.sort_by_key(|t| (t.start, t.kind == TermKind::NegationPhrase, t.end));
    out
}

/// FNV-1a, used to fold document ids into the sampler seed.
fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one context sample. Masks depend only on (seed, document,
/// sentence, sample), so every term of a sentence sees the same draws.
pub fn sample_seed(seed: u64, doc_id: &str, sentence: usize, sample: usize) -> u64 {
    let mut h = splitmix(seed);
    h = splitmix(h ^ fnv1a(doc_id));
    h = splitmix(h ^ sentence as u64);
    splitmix(h ^ sample as u64)
}

/// Keep-mask over all positions of a sentence of length `len`.
pub fn draw_mask(seed: u64, doc_id: &str, sentence: usize, sample: usize, len: usize, q: f64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, doc_id, sentence, sample));
    (0..len).map(|_| rng.random::<f64>() < q).collect()
}

/// Evaluates the per-sample ratio for one keep-mask over a sentence.
struct Evaluator<'a> {
    scorer: Box<dyn SentenceScorer + 'a>,
    mask_token: Option<&'a str>,
    label: Label,
}

impl Evaluator<'_> {
    /// `keep[i]` decides context position `i`; term positions are forced.
    fn ratio(&self, tokens: &[&str], term: &CandidateTerm, keep: &[bool]) -> Result<f64, ClassifierError> {
        let mut base = Vec::with_capacity(tokens.len());
        let mut masked = Vec::with_capacity(tokens.len());
        for (i, &tok) in tokens.iter().enumerate() {
            let in_term = i >= term.start && i < term.end;
            if in_term {
                base.push(tok);
                if let Some(m) = self.mask_token {
                    masked.push(m);
                }
            } else if keep[i] {
                base.push(tok);
                masked.push(tok);
            } else if let Some(m) = self.mask_token {
                base.push(m);
                masked.push(m);
            }
        }
        let b = label_prob(self.scorer.prob_pos(&base)?, self.label);
        let m = label_prob(self.scorer.prob_pos(&masked)?, self.label);
        Ok((b - m) / b.max(EPSILON))
    }
}

fn check_span(sentences: &[Vec<&str>], term: &CandidateTerm) -> Result<(), AttributionError> {
    let len = sentences.get(term.sentence).map(Vec::len);
    match len {
        Some(len) if term.start < term.end && term.end <= len => Ok(()),
        _ => Err(AttributionError::InvalidSpan {
            sentence: term.sentence,
            start: term.start,
            end: term.end,
            len: len.unwrap_or(0),
        }),
    }
}

fn evaluator<'a, C: Classifier + ?Sized>(
    model: &'a C,
    sentences: &[Vec<&'a str>],
    index: usize,
    label: Label,
) -> Evaluator<'a> {
    Evaluator {
        scorer: model.sentence_scorer(sentences, index),
        mask_token: model.mask_token(),
        label,
    }
}

fn sampled(
    ev: &Evaluator<'_>,
    tokens: &[&str],
    doc_id: &str,
    term: &CandidateTerm,
    n: usize,
    config: &SamplerConfig,
) -> Result<TermImportance, AttributionError> {
    let n = n.max(1);
    // Welford
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for s in 0..n {
        let keep = draw_mask(config.seed, doc_id, term.sentence, s, tokens.len(), config.keep_prob);
        let x = ev.ratio(tokens, term, &keep)?;
        let delta = x - mean;
        mean += delta / (s + 1) as f64;
        m2 += delta * (x - mean);
    }
    let std_error = if n > 1 {
        (m2 / (n - 1) as f64).sqrt() / (n as f64).sqrt()
    } else {
        0.0
    };
    Ok(TermImportance {
        term: term.clone(),
        phi: mean,
        num_samples: n,
        std_error,
    })
}

fn exact(ev: &Evaluator<'_>, tokens: &[&str], term: &CandidateTerm, q: f64) -> Result<TermImportance, AttributionError> {
    let context: Vec<usize> = (0..tokens.len()).filter(|&i| i < term.start || i >= term.end).collect();
    let k = context.len();
    if k > MAX_EXACT_CONTEXT {
        return Err(AttributionError::ContextTooLarge(k));
    }
    let mut keep = vec![true; tokens.len()];
    let mut phi = 0.0;
    for mask in 0u32..(1u32 << k) {
        let mut kept = 0;
        for (bit, &pos) in context.iter().enumerate() {
            keep[pos] = mask >> bit & 1 == 1;
            kept += keep[pos] as i32;
        }
        let weight = q.powi(kept) * (1.0 - q).powi(k as i32 - kept);
        phi += weight * ev.ratio(tokens, term, &keep)?;
    }
    Ok(TermImportance {
        term: term.clone(),
        phi,
        num_samples: 1 << k,
        std_error: 0.0,
    })
}

/// Importance of `term` in a document given as lowercased token sentences,
/// relative to the score of `label`.
pub fn importance_in<C: Classifier + ?Sized>(
    model: &C,
    sentences: &[Vec<&str>],
    doc_id: &str,
    label: Label,
    term: &CandidateTerm,
    config: &SamplerConfig,
) -> Result<TermImportance, AttributionError> {
    check_span(sentences, term)?;
    let ev = evaluator(model, sentences, term.sentence, label);
    let tokens = &sentences[term.sentence];
    match config.num_samples {
        SampleCount::Fixed(n) => sampled(&ev, tokens, doc_id, term, n, config),
        SampleCount::Exact => exact(&ev, tokens, term, config.keep_prob),
    }
}

/// Monte-Carlo importance of `term` for the document's true label.
pub fn importance<C: Classifier + ?Sized>(
    model: &C,
    document: &LabeledDocument,
    term: &CandidateTerm,
    config: &SamplerConfig,
) -> Result<TermImportance, AttributionError> {
    importance_in(model, &document.sentence_lowers(), &document.id, document.label, term, config)
}

/// Exact expectation over all keep-masks of the term's sentence.
pub fn importance_exact<C: Classifier + ?Sized>(
    model: &C,
    document: &LabeledDocument,
    term: &CandidateTerm,
    q: f64,
) -> Result<TermImportance, AttributionError> {
    let sentences = document.sentence_lowers();
    check_span(&sentences, term)?;
    let ev = evaluator(model, &sentences, term.sentence, document.label);
    exact(&ev, &sentences[term.sentence], term, q)
}

/// Descending phi; ties go to the earlier, then shorter, span.
pub fn sort_ranked(terms: &mut [TermImportance]) {
    terms.sort_by(|a, b| {
        b.phi
            .total_cmp(&a.phi)
            .then(a.term.start.cmp(&b.term.start))
            .then(a.term.len().cmp(&b.term.len()))
    });
}

/// Scores each of `terms` (all in one sentence) sharing a single scorer.
pub fn score_terms<C: Classifier + ?Sized>(
    model: &C,
    sentences: &[Vec<&str>],
    doc_id: &str,
    label: Label,
    terms: &[CandidateTerm],
    config: &SamplerConfig,
) -> Result<Vec<TermImportance>, AttributionError> {
    let Some(first) = terms.first() else {
        return Ok(Vec::new());
    };
    for t in terms {
        check_span(sentences, t)?;
    }
    let ev = evaluator(model, sentences, first.sentence, label);
    terms
        .iter()
        .map(|t| {
            debug_assert_eq!(t.sentence, first.sentence);
            let tokens = &sentences[t.sentence];
            match config.num_samples {
                SampleCount::Fixed(n) => sampled(&ev, tokens, doc_id, t, n, config),
                SampleCount::Exact => exact(&ev, tokens, t, config.keep_prob),
            }
        })
        .collect()
}

/// Candidates of sentence `index`, scored and ranked.
#[allow(clippy::too_many_arguments)]
pub fn rank_terms_in<C: Classifier + ?Sized>(
    model: &C,
    sentences: &[Vec<&str>],
    doc_id: &str,
    index: usize,
    label: Label,
    lexicon: &PolarityLexicon,
    config: &SamplerConfig,
) -> Result<Vec<TermImportance>, AttributionError> {
    let Some(tokens) = sentences.get(index) else {
        return Ok(Vec::new());
    };
    let terms = candidate_terms(tokens, index, label, lexicon);
    let mut scored = score_terms(model, sentences, doc_id, label, &terms, config)?;
    sort_ranked(&mut scored);
    Ok(scored)
}

pub fn rank_terms<C: Classifier + ?Sized>(
    model: &C,
    document: &LabeledDocument,
    sentence: usize,
    lexicon: &PolarityLexicon,
    config: &SamplerConfig,
) -> Result<Vec<TermImportance>, AttributionError> {
    rank_terms_in(
        model,
        &document.sentence_lowers(),
        &document.id,
        sentence,
        document.label,
        lexicon,
        config,
    )
}

/// Ranked terms for every sentence of a document, in sentence order.
pub fn attribute_document<C: Classifier + ?Sized>(
    model: &C,
    document: &LabeledDocument,
    lexicon: &PolarityLexicon,
    config: &SamplerConfig,
) -> Result<Vec<TermImportance>, AttributionError> {
    let sentences = document.sentence_lowers();
    let mut out = Vec::new();
    for i in 0..sentences.len() {
        out.extend(rank_terms_in(model, &sentences, &document.id, i, document.label, lexicon, config)?);
    }
    Ok(out)
}

/// [`attribute_document`] over many documents in parallel; output order
/// follows input order.
pub fn attribute_all<C: Classifier + ?Sized>(
    model: &C,
    documents: &[LabeledDocument],
    lexicon: &PolarityLexicon,
    config: &SamplerConfig,
) -> Result<Vec<Vec<TermImportance>>, AttributionError> {
    documents
        .par_iter()
        .map(|d| attribute_document(model, d, lexicon, config))
        .collect()
}
