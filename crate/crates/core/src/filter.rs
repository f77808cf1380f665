//! Minimal-edit similarity and the acceptance gate.
//!
//! The score is a relaxed word-mover similarity over static embeddings:
//! every token aligns to its most similar counterpart on the other side,
//! similarities `(1 + cos) / 2` are IDF-weighted and averaged, and the two
//! directions are combined by their harmonic mean.

use std::collections::HashSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{segment, EmbeddingTable, LabeledDataset};
use crate::generator::CounterfactualCandidate;

#[derive(Debug, thiserror::Error)]
pub enum FilterError {
    #[error("cannot score an empty token sequence")]
    EmptyInput,
    #[error("source document {0:?} not found")]
    MissingSource(String),
}

/// Best match of one token on the other side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub token: String,
    pub matched: Option<String>,
    pub similarity: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub value: f64,
    /// Weighted mean similarity aligning `a` onto `b`.
    pub forward: f64,
    /// Weighted mean similarity aligning `b` onto `a`.
    pub backward: f64,
    pub alignments: Vec<Alignment>,
}

fn token_similarity(x: &str, y: &str, emb: &EmbeddingTable) -> f64 {
    if x == y {
        return 1.0;
    }
    match emb.cosine(x, y) {
        Some(c) => (1.0 + c) / 2.0,
        None => 0.0,
    }
}

fn directional(from: &[&str], to: &[&str], emb: &EmbeddingTable, keep: bool) -> (f64, Vec<Alignment>) {
    let to_set: HashSet<&str> = to.iter().copied().collect();
    let mut to_unique: Vec<&str> = to_set.iter().copied().collect();
    to_unique.sort_unstable();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut alignments = Vec::new();
    for &tok in from {
        let w = emb.idf(tok);
        let (sim, matched) = if to_set.contains(tok) {
            (1.0, Some(tok))
        } else {
            let mut best = (0.0, None);
            for &cand in &to_unique {
                let s = token_similarity(tok, cand, emb);
                if s > best.0 {
                    best = (s, Some(cand));
                }
            }
            best
        };
        num += w * sim;
        den += w;
        if keep {
            alignments.push(Alignment {
                token: tok.to_string(),
                matched: matched.map(str::to_string),
                similarity: sim,
                weight: w,
            });
        }
    }
    let score = if den > 0.0 { num / den } else { 0.0 };
    (score, alignments)
}

fn combine(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        (2.0 * p * r / (p + r)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Similarity of two lowercased token sequences, with the per-token
/// alignment of `a` onto `b`.
pub fn mover_score(a: &[&str], b: &[&str], emb: &EmbeddingTable) -> Result<SimilarityScore, FilterError> {
    if a.is_empty() || b.is_empty() {
        return Err(FilterError::EmptyInput);
    }
    let (forward, alignments) = directional(a, b, emb, true);
    let (backward, _) = directional(b, a, emb, false);
    Ok(SimilarityScore {
        value: combine(forward, backward),
        forward,
        backward,
        alignments,
    })
}

/// [`mover_score`] value only.
pub fn mover_value(a: &[&str], b: &[&str], emb: &EmbeddingTable) -> Result<f64, FilterError> {
    if a.is_empty() || b.is_empty() {
        return Err(FilterError::EmptyInput);
    }
    let (p, _) = directional(a, b, emb, false);
    let (r, _) = directional(b, a, emb, false);
    Ok(combine(p, r))
}

/// Lowercased tokens of a raw text.
pub fn text_tokens(text: &str) -> Vec<String> {
    segment(text)
        .into_iter()
        .flat_map(|p| p.sentences)
        .flat_map(|s| s.tokens)
        .map(|t| t.lower)
        .collect()
}

/// Text-level similarity.
pub fn text_similarity(a: &str, b: &str, emb: &EmbeddingTable) -> Result<f64, FilterError> {
    let ta = text_tokens(a);
    let tb = text_tokens(b);
    let ra: Vec<&str> = ta.iter().map(String::as_str).collect();
    let rb: Vec<&str> = tb.iter().map(String::as_str).collect();
    mover_value(&ra, &rb, emb)
}

/// Sets `similarity` on each candidate against its source document.
pub fn score_candidates(
    candidates: &mut [CounterfactualCandidate],
    sources: &LabeledDataset,
    emb: &EmbeddingTable,
) -> Result<(), FilterError> {
    let index: std::collections::HashMap<&str, &str> =
        sources.documents.iter().map(|d| (d.id.as_str(), d.text.as_str())).collect();
    candidates.par_iter_mut().try_for_each(|c| {
        let src = index
            .get(c.source_id.as_str())
            .ok_or_else(|| FilterError::MissingSource(c.source_id.clone()))?;
        c.similarity = Some(text_similarity(src, &c.text, emb)?);
        Ok(())
    })
}

/// Splits candidates into those with similarity at least `threshold` and
/// the rest. Unscored or unflipped candidates are rejected.
pub fn gate(
    candidates: Vec<CounterfactualCandidate>,
    threshold: f64,
) -> (Vec<CounterfactualCandidate>, Vec<CounterfactualCandidate>) {
    candidates
        .into_iter()
        .partition(|c| c.flipped && c.similarity.is_some_and(|s| s >= threshold))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub threshold: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { threshold: 0.55 }
    }
}

/// Text histogram of scores over `bins` equal-width bins of [0, 1].
pub fn histogram(scores: &[f64], bins: usize, threshold: f64) -> String {
    let bins = bins.max(1);
    let mut counts = vec![0usize; bins];
    for &s in scores {
        let i = ((s.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let max = counts.iter().copied().max().unwrap_or(0).max(1);
    let mut out = String::new();
    let _ = writeln!(out, "{:<13} {:>6}", "similarity", "count");
    for (i, &c) in counts.iter().enumerate() {
        let lo = i as f64 / bins as f64;
        let hi = (i + 1) as f64 / bins as f64;
        let bar = "#".repeat((c * 40).div_ceil(max));
        let _ = writeln!(out, "[{lo:.2}, {hi:.2}{} {c:>6} {bar}", if i + 1 == bins { "]" } else { ")" });
    }
    let above = scores.iter().filter(|&&s| s >= threshold).count();
    let mean = if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    };
    let _ = writeln!(
        out,
        "n={} mean={mean:.4} accepted(>={threshold})={above}",
        scores.len()
    );
    out
}
