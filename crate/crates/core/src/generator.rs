//! Counterfactual generation by removing or replacing causal terms.
//!
//! Edits are tracked at token level against byte spans of the source text,
//! so every candidate's text is reproducible with [`apply_edits`].

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{
    importance_in, is_negation_trigger, rank_terms_in, score_terms, AttributionError, CandidateTerm, SamplerConfig,
    TermImportance, TermKind,
};
use crate::classifier::{Classifier, ClassifierError};
use crate::corpus::{EmbeddingTable, Label, LabeledDocument, PolarityLexicon};
use crate::proposer::{filter_by_polarity, MaskedQuery, Proposer, ProposerError};

#[derive(Debug, thiserror::Error)]
pub enum GeneratorError {
    #[error("no candidate terms to remove")]
    NothingToRemove,
    #[error("no opposite-polarity candidates")]
    NoReplacements,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid edits: {0}")]
    InvalidEdits(String),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error(transparent)]
    Proposer(#[from] ProposerError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

impl GeneratorError {
    /// Short stable key used to aggregate failures in reports.
    pub fn reason(&self) -> &'static str {
        match self {
            GeneratorError::NothingToRemove => "no_candidate_terms",
            GeneratorError::NoReplacements => "no_opposite_polarity_candidates",
            GeneratorError::Precondition(_) => "precondition",
            GeneratorError::InvalidEdits(_) => "invalid_edits",
            GeneratorError::Attribution(_) => "attribution_error",
            GeneratorError::Proposer(_) => "proposer_error",
            GeneratorError::Classifier(_) => "classifier_error",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    Remove,
    Replace,
    SynonymSwap,
}

/// One edit against a byte span of the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditOp {
    pub kind: EditKind,
    pub span: (usize, usize),
    pub original: String,
    /// Empty for removals.
    pub replacement: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    RmCt,
    RepCt,
    Synonym,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::RmCt => "rm_ct",
            Method::RepCt => "rep_ct",
            Method::Synonym => "synonym",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualCandidate {
    pub source_id: String,
    pub method: Method,
    pub text: String,
    /// Target label, the flip of the source label.
    pub label: Label,
    pub flipped: bool,
    pub edits: Vec<EditOp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Maximum fraction of a document's tokens that may be edited. The
    /// first edit of a document is always allowed.
    pub edit_cap: f64,
    /// Stop replacing once the classifier already predicts the target.
    pub early_stop: bool,
    pub synonym_fallback: bool,
    pub synonym_budget: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            edit_cap: 0.3,
            early_stop: false,
            synonym_fallback: true,
            synonym_budget: 5,
        }
    }
}

/// Replays `edits` on `source`. Removals also take out one adjacent run of
/// whitespace so no double spaces are left behind; removals separated only
/// by whitespace are treated as one.
pub fn apply_edits(source: &str, edits: &[EditOp]) -> Result<String, GeneratorError> {
    let mut sorted: Vec<&EditOp> = edits.iter().collect();
    sorted.sort_by_key(|e| e.span);
    // (start, end, replacement, is_removal)
    let mut ranges: Vec<(usize, usize, &str, bool)> = Vec::with_capacity(sorted.len());
    for e in sorted {
        let (s, t) = e.span;
        if s >= t || t > source.len() || !source.is_char_boundary(s) || !source.is_char_boundary(t) {
            return Err(GeneratorError::InvalidEdits(format!("span {s}..{t} out of bounds")));
        }
        if source[s..t] != e.original {
            return Err(GeneratorError::InvalidEdits(format!(
                "span {s}..{t} holds {:?}, not {:?}",
                &source[s..t],
                e.original
            )));
        }
        let remove = e.kind == EditKind::Remove;
        if let Some(last) = ranges.last_mut() {
            if s < last.1 {
                return Err(GeneratorError::InvalidEdits(format!("span {s}..{t} overlaps a previous edit")));
            }
            if remove && last.3 && source[last.1..s].trim().is_empty() {
                last.1 = t;
                continue;
            }
        }
        ranges.push((s, t, e.replacement.as_str(), remove));
    }
    for i in 0..ranges.len() {
        let (s, t, _, remove) = ranges[i];
        if !remove {
            continue;
        }
        let floor = if i == 0 { 0 } else { ranges[i - 1].1 };
        let ceiling = ranges.get(i + 1).map_or(source.len(), |r| r.0);
        let after = &source[t..ceiling];
        let before = &source[floor..s];
        let ws_after = after.len() - after.trim_start().len();
        let ws_before = before.len() - before.trim_end().len();
        if ws_after > 0 && (ws_before > 0 || s == floor) {
            ranges[i].1 += ws_after;
        } else if ws_before > 0 {
            ranges[i].0 -= ws_before;
        }
    }
    let mut out = String::with_capacity(source.len());
    let mut pos = 0;
    for (s, t, rep, _) in ranges {
        out.push_str(&source[pos..s]);
        out.push_str(rep);
        pos = t;
    }
    out.push_str(&source[pos..]);
    Ok(out)
}

/// Copies the case pattern of `original` onto `replacement`.
pub fn match_case(original: &str, replacement: &str) -> String {
    let letters: Vec<char> = original.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.len() > 1 && letters.iter().all(|c| c.is_uppercase()) {
        return replacement.to_uppercase();
    }
    match original.chars().next() {
        Some(c) if c.is_uppercase() => {
            let mut chars = replacement.chars();
            match chars.next() {
                Some(f) => f.to_uppercase().chain(chars).collect(),
                None => String::new(),
            }
        }
        _ => replacement.to_string(),
    }
}

#[derive(Debug, Clone)]
struct TokState {
    lower: String,
    span: (usize, usize),
    edited: bool,
}

/// Token-level edit state of one document.
#[derive(Debug, Clone)]
struct Draft<'a> {
    source: &'a LabeledDocument,
    sentences: Vec<Vec<TokState>>,
    edits: Vec<EditOp>,
    edited_tokens: usize,
    total_tokens: usize,
    cap: f64,
}

impl<'a> Draft<'a> {
    fn new(source: &'a LabeledDocument, cap: f64) -> Self {
        let sentences: Vec<Vec<TokState>> = source
            .sentences()
            .map(|s| {
                s.tokens
                    .iter()
                    .map(|t| TokState {
                        lower: t.lower.clone(),
                        span: (t.start, t.end),
                        edited: false,
                    })
                    .collect()
            })
            .collect();
        let total_tokens = sentences.iter().map(Vec::len).sum();
        Draft {
            source,
            sentences,
            edits: Vec::new(),
            edited_tokens: 0,
            total_tokens,
            cap,
        }
    }

    fn lowers(&self) -> Vec<Vec<&str>> {
        self.sentences
            .iter()
            .map(|s| s.iter().map(|t| t.lower.as_str()).collect())
            .collect()
    }

    fn surface(&self, span: (usize, usize)) -> &'a str {
        &self.source.text[span.0..span.1]
    }

    /// Whether `n` more edited tokens fit under the cap.
    fn allows(&self, n: usize) -> bool {
        self.edited_tokens == 0 || (self.edited_tokens + n) as f64 <= self.cap * self.total_tokens as f64
    }

    fn remove(&mut self, s: usize, i: usize) {
        let tok = self.sentences[s].remove(i);
        self.edits.push(EditOp {
            kind: EditKind::Remove,
            span: tok.span,
            original: self.surface(tok.span).to_string(),
            replacement: String::new(),
        });
        self.edited_tokens += 1;
    }

    fn replace(&mut self, s: usize, i: usize, word: &str, kind: EditKind) {
        let span = self.sentences[s][i].span;
        let original = self.surface(span);
        self.edits.push(EditOp {
            kind,
            span,
            original: original.to_string(),
            replacement: match_case(original, word),
        });
        let tok = &mut self.sentences[s][i];
        tok.lower = word.to_string();
        tok.edited = true;
        self.edited_tokens += 1;
    }

    /// Deletes the negation trigger at `i`, repairing contractions
    /// ("can't" becomes "can", "cannot" becomes "can"). Returns false when
    /// the cap or an earlier edit prevents it.
    fn remove_trigger(&mut self, s: usize, i: usize) -> bool {
        if self.sentences[s][i].edited || !self.allows(1) {
            return false;
        }
        let lower = self.sentences[s][i].lower.clone();
        if lower == "cannot" {
            self.replace(s, i, "can", EditKind::Replace);
            return true;
        }
        if lower == "n't" && i > 0 {
            let prev = &self.sentences[s][i - 1];
            let stem = match prev.lower.as_str() {
                "ca" => Some("can"),
                "wo" => Some("will"),
                "sha" => Some("shall"),
                _ => None,
            };
            if let Some(stem) = stem {
                if !prev.edited && prev.span.1 == self.sentences[s][i].span.0 {
                    let span = (prev.span.0, self.sentences[s][i].span.1);
                    let original = self.surface(span);
                    self.edits.push(EditOp {
                        kind: EditKind::Replace,
                        span,
                        original: original.to_string(),
                        replacement: match_case(original, stem),
                    });
                    self.sentences[s].remove(i);
                    let tok = &mut self.sentences[s][i - 1];
                    tok.lower = stem.to_string();
                    tok.edited = true;
                    self.edited_tokens += 1;
                    return true;
                }
            }
        }
        self.remove(s, i);
        true
    }

    fn finish<C: Classifier + ?Sized>(self, model: &C, method: Method) -> Result<CounterfactualCandidate, GeneratorError> {
        let text = apply_edits(&self.source.text, &self.edits)?;
        let target = self.source.label.flip();
        let flipped = model.predict_text(&text)?.label == target;
        Ok(CounterfactualCandidate {
            source_id: self.source.id.clone(),
            method,
            text,
            label: target,
            flipped,
            edits: self.edits,
            similarity: None,
        })
    }
}

/// Removes the top-ranked term of every sentence; negation phrases lose
/// only their trigger.
pub fn rm_ct<C: Classifier + ?Sized>(
    model: &C,
    document: &LabeledDocument,
    lexicon: &PolarityLexicon,
    sampler: &SamplerConfig,
    config: &GeneratorConfig,
) -> Result<CounterfactualCandidate, GeneratorError> {
    let original = document.sentence_lowers();
    let mut tops: Vec<CandidateTerm> = Vec::new();
    for s in 0..original.len() {
        let ranked = rank_terms_in(model, &original, &document.id, s, document.label, lexicon, sampler)?;
        if let Some(top) = ranked.into_iter().next() {
            tops.push(top.term);
        }
    }
    drop(original);
    let mut draft = Draft::new(document, config.edit_cap);
    // sentences are edited independently, so positions stay valid
    for term in tops {
        match term.trigger() {
            Some(i) => {
                draft.remove_trigger(term.sentence, i);
            }
            None => {
                if draft.allows(1) {
                    draft.remove(term.sentence, term.start);
                }
            }
        }
    }
    if draft.edits.is_empty() {
        return Err(GeneratorError::NothingToRemove);
    }
    draft.finish(model, Method::RmCt)
}

/// Replaces each causal word with the opposite-polarity proposal that is
/// most important for the target label; negation phrases lose their
/// trigger.
pub fn rep_ct<C: Classifier + ?Sized>(
    model: &C,
    document: &LabeledDocument,
    lexicon: &PolarityLexicon,
    proposer: &dyn Proposer,
    k: usize,
    sampler: &SamplerConfig,
    config: &GeneratorConfig,
) -> Result<CounterfactualCandidate, GeneratorError> {
    let source = document.label;
    let target = source.flip();
    let mut draft = Draft::new(document, config.edit_cap);
    'sentences: for s in 0..draft.sentences.len() {
        let ranked = {
            let lowers = draft.lowers();
            rank_terms_in(model, &lowers, &document.id, s, source, lexicon, sampler)?
        };
        // trigger removals shift later positions; apply them after the
        // replacements of this sentence
        let mut triggers = Vec::new();
        for TermImportance { term, .. } in ranked {
            if config.early_stop && !draft.edits.is_empty() {
                let lowers = draft.lowers();
                if model.predict_tokens(&lowers)?.label == target {
                    break 'sentences;
                }
            }
            if let Some(i) = term.trigger() {
                triggers.push(i);
                continue;
            }
            let i = term.start;
            if draft.sentences[s][i].edited || !draft.allows(1) {
                continue;
            }
            let word = {
                let lowers = draft.lowers();
                let query = MaskedQuery {
                    sentences: &lowers,
                    sentence: s,
                    position: i,
                    target,
                    k,
                };
                let proposals = filter_by_polarity(&proposer.propose(&query)?, source, lexicon);
                best_by_importance(model, &lowers, document, &term, target, proposals.words(), sampler)?
            };
            if let Some(word) = word {
                draft.replace(s, i, &word, EditKind::Replace);
            }
        }
        triggers.sort_unstable_by(|a, b| b.cmp(a));
        for i in triggers {
            draft.remove_trigger(s, i);
        }
    }
    if draft.edits.is_empty() {
        return Err(GeneratorError::NoReplacements);
    }
    draft.finish(model, Method::RepCt)
}

/// Proposal whose substitution has the highest importance for `target`;
/// the earlier proposal wins ties.
fn best_by_importance<'w, C: Classifier + ?Sized>(
    model: &C,
    lowers: &[Vec<&str>],
    document: &LabeledDocument,
    term: &CandidateTerm,
    target: Label,
    words: impl Iterator<Item = &'w str>,
    sampler: &SamplerConfig,
) -> Result<Option<String>, GeneratorError> {
    let mut best: Option<(f64, &str)> = None;
    for w in words {
        let mut trial: Vec<Vec<&str>> = lowers.to_vec();
        trial[term.sentence][term.start] = w;
        let placed = CandidateTerm {
            kind: TermKind::SentimentWord,
            surface: w.to_string(),
            ..term.clone()
        };
        let phi = importance_in(model, &trial, &document.id, target, &placed, sampler)?.phi;
        if best.is_none_or(|(b, _)| phi > b) {
            best = Some((phi, w));
        }
    }
    Ok(best.map(|(_, w)| w.to_string()))
}

/// Swaps high-importance non-lexicon words for their nearest non-lexicon
/// embedding neighbours until the prediction flips or `budget` swaps are
/// spent.
///
/// Importance is measured once, for the source label, on the input
/// candidate; only words with positive importance are swapped.
#[allow(clippy::too_many_arguments)]
pub fn synonym_fallback<C: Classifier + ?Sized>(
    model: &C,
    document: &LabeledDocument,
    candidate: &CounterfactualCandidate,
    embeddings: &EmbeddingTable,
    lexicon: &PolarityLexicon,
    budget: usize,
    sampler: &SamplerConfig,
    config: &GeneratorConfig,
) -> Result<CounterfactualCandidate, GeneratorError> {
    if candidate.flipped {
        return Err(GeneratorError::Precondition("candidate is already flipped".into()));
    }
    if candidate.method != Method::RepCt {
        return Err(GeneratorError::Precondition(format!(
            "fallback applies to rep_ct candidates, got {}",
            candidate.method
        )));
    }
    if candidate.source_id != document.id {
        return Err(GeneratorError::Precondition("candidate does not belong to the document".into()));
    }
    if budget == 0 {
        return Ok(candidate.clone());
    }
    let mut draft = replay(document, &candidate.edits, config.edit_cap)?;
    let source = document.label;

    let mut scored: Vec<TermImportance> = Vec::new();
    {
        let lowers = draft.lowers();
        for (s, sentence) in draft.sentences.iter().enumerate() {
            let terms: Vec<CandidateTerm> = sentence
                .iter()
                .enumerate()
                .filter(|(_, t)| {
                    !t.edited
                        && !lexicon.contains(&t.lower)
                        && !is_negation_trigger(&t.lower)
                        && t.lower.chars().any(char::is_alphanumeric)
                })
                .map(|(i, t)| CandidateTerm {
                    kind: TermKind::SentimentWord,
                    sentence: s,
                    start: i,
                    end: i + 1,
                    surface: t.lower.clone(),
                })
                .collect();
            let imps = score_terms(model, &lowers, &document.id, source, &terms, sampler)?;
            scored.extend(imps.into_iter().filter(|imp| imp.phi > 0.0));
        }
    }
    scored.sort_by(|a, b| {
        b.phi
            .total_cmp(&a.phi)
            .then(a.term.sentence.cmp(&b.term.sentence))
            .then(a.term.start.cmp(&b.term.start))
    });

    let mut swaps = 0;
    for imp in scored {
        if swaps == budget || !draft.allows(1) {
            break;
        }
        let neighbour = embeddings
            .nearest(&imp.term.surface, 1, |w| !lexicon.contains(w) && w.chars().any(char::is_alphanumeric))
            .into_iter()
            .next();
        let Some((word, _)) = neighbour else {
            continue;
        };
        draft.replace(imp.term.sentence, imp.term.start, &word, EditKind::SynonymSwap);
        swaps += 1;
        let text = apply_edits(&document.text, &draft.edits)?;
        if model.predict_text(&text)?.label == source.flip() {
            break;
        }
    }
    draft.finish(model, Method::Synonym)
}

/// Rebuilds a draft from previously recorded edits.
fn replay<'a>(document: &'a LabeledDocument, edits: &[EditOp], cap: f64) -> Result<Draft<'a>, GeneratorError> {
    let mut draft = Draft::new(document, cap);
    for e in edits {
        let mut found = None;
        for (s, sentence) in draft.sentences.iter().enumerate() {
            if let Some(i) = sentence.iter().position(|t| t.span.0 == e.span.0) {
                found = Some((s, i));
                break;
            }
        }
        let (s, i) = found.ok_or_else(|| GeneratorError::InvalidEdits(format!("no token at {:?}", e.span)))?;
        match e.kind {
            EditKind::Remove => {
                draft.sentences[s].remove(i);
            }
            EditKind::Replace | EditKind::SynonymSwap => {
                // a contraction repair spans two tokens
                while i + 1 < draft.sentences[s].len() && draft.sentences[s][i + 1].span.1 <= e.span.1 {
                    draft.sentences[s].remove(i + 1);
                }
                let tok = &mut draft.sentences[s][i];
                tok.lower = e.replacement.to_lowercase();
                tok.edited = true;
            }
        }
        draft.edited_tokens += 1;
        draft.edits.push(e.clone());
    }
    Ok(draft)
}

/// Everything generated for one document, plus why methods failed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DocumentOutcome {
    pub source_id: String,
    pub candidates: Vec<CounterfactualCandidate>,
    pub failures: Vec<(Method, String)>,
}

/// Resources shared by the generation methods.
pub struct GenerationContext<'a, C: ?Sized> {
    pub model: &'a C,
    pub lexicon: &'a PolarityLexicon,
    pub proposer: &'a dyn Proposer,
    pub embeddings: Option<&'a EmbeddingTable>,
    pub k: usize,
    pub sampler: &'a SamplerConfig,
    pub config: &'a GeneratorConfig,
}

/// Runs RM-CT and REP-CT, then the synonym fallback on an unflipped REP-CT
/// result. Method failures are recorded, not propagated.
pub fn generate_document<C: Classifier + ?Sized>(ctx: &GenerationContext<'_, C>, document: &LabeledDocument) -> DocumentOutcome {
    let mut out = DocumentOutcome {
        source_id: document.id.clone(),
        ..Default::default()
    };
    match rm_ct(ctx.model, document, ctx.lexicon, ctx.sampler, ctx.config) {
        Ok(c) => out.candidates.push(c),
        Err(e) => out.failures.push((Method::RmCt, e.to_string())),
    }
    match rep_ct(ctx.model, document, ctx.lexicon, ctx.proposer, ctx.k, ctx.sampler, ctx.config) {
        Ok(c) => {
            let fallback = ctx.config.synonym_fallback && !c.flipped;
            if fallback {
                match ctx.embeddings {
                    Some(emb) => match synonym_fallback(
                        ctx.model,
                        document,
                        &c,
                        emb,
                        ctx.lexicon,
                        ctx.config.synonym_budget,
                        ctx.sampler,
                        ctx.config,
                    ) {
                        Ok(syn) if syn.edits.len() > c.edits.len() => out.candidates.push(syn),
                        Ok(_) => out.failures.push((Method::Synonym, "no swappable words".into())),
                        Err(e) => out.failures.push((Method::Synonym, e.to_string())),
                    },
                    None => out.failures.push((Method::Synonym, "no embedding table".into())),
                }
            }
            out.candidates.push(c);
        }
        Err(e) => out.failures.push((Method::RepCt, e.to_string())),
    }
    out.candidates.sort_by_key(|c| c.method);
    out
}

/// [`generate_document`] over a corpus in parallel, in input order.
pub fn generate_all<C: Classifier + ?Sized>(ctx: &GenerationContext<'_, C>, documents: &[LabeledDocument]) -> Vec<DocumentOutcome> {
    documents.par_iter().map(|d| generate_document(ctx, d)).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodCounts {
    pub produced: usize,
    pub flipped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub documents: usize,
    /// Documents with at least one flipped candidate.
    pub covered: usize,
    pub methods: BTreeMap<Method, MethodCounts>,
    /// `method: reason` to count.
    pub failures: BTreeMap<String, usize>,
}

impl GenerationReport {
    pub fn from_outcomes(outcomes: &[DocumentOutcome]) -> Self {
        let mut r = GenerationReport {
            documents: outcomes.len(),
            ..Default::default()
        };
        for o in outcomes {
            if o.candidates.iter().any(|c| c.flipped) {
                r.covered += 1;
            }
            for c in &o.candidates {
                let m = r.methods.entry(c.method).or_default();
                m.produced += 1;
                m.flipped += usize::from(c.flipped);
            }
            for (m, reason) in &o.failures {
                *r.failures.entry(format!("{m}: {reason}")).or_default() += 1;
            }
        }
        r
    }

    pub fn flip_rate(&self) -> f64 {
        if self.documents == 0 {
            0.0
        } else {
            self.covered as f64 / self.documents as f64
        }
    }
}

impl fmt::Display for GenerationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "documents  {}", self.documents)?;
        writeln!(f, "covered    {} ({:.1}%)", self.covered, 100.0 * self.flip_rate())?;
        writeln!(f, "{:<10} {:>9} {:>9}", "method", "produced", "flipped")?;
        for (m, c) in &self.methods {
            writeln!(f, "{:<10} {:>9} {:>9}", m.as_str(), c.produced, c.flipped)?;
        }
        for (reason, n) in &self.failures {
            writeln!(f, "failure    {n:>5}  {reason}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;
    use std::sync::Arc;

    use super::*;
    use crate::classifier::LinearModel;
    use crate::proposer::{AntonymProposer, Proposal, ProposalSet};

    fn lexicon() -> PolarityLexicon {
        PolarityLexicon::from_words(
            ["good", "well", "entertaining", "exciting"],
            ["bad", "badly", "boring", "dull"],
            [("good", "bad"), ("bad", "good"), ("badly", "well"), ("boring", "entertaining"), ("dull", "exciting")],
        )
    }

    fn antonyms() -> AntonymProposer {
        AntonymProposer::new(Arc::new(lexicon()), Arc::new(HashMap::new()), false)
    }

    fn sampler() -> SamplerConfig {
        SamplerConfig::default()
    }

    #[test]
    fn removal_absorbs_whitespace() {
        let text = "In and of itself it is not a bad film.";
        let edit = EditOp {
            kind: EditKind::Remove,
            span: (23, 26),
            original: "not".into(),
            replacement: String::new(),
        };
        assert_eq!(apply_edits(text, &[edit]).unwrap(), "In and of itself it is a bad film.");
        let last = EditOp {
            kind: EditKind::Remove,
            span: (13, 17),
            original: "good".into(),
            replacement: String::new(),
        };
        assert_eq!(apply_edits("the movie is good.", &[last]).unwrap(), "the movie is.");
    }

    #[test]
    fn overlapping_or_stale_edits_are_rejected() {
        let a = EditOp {
            kind: EditKind::Replace,
            span: (0, 4),
            original: "good".into(),
            replacement: "bad".into(),
        };
        let b = EditOp {
            span: (2, 6),
            original: "od f".into(),
            ..a.clone()
        };
        assert!(apply_edits("good film", &[a.clone(), b]).is_err());
        let stale = EditOp {
            original: "fine".into(),
            ..a
        };
        assert!(apply_edits("good film", &[stale]).is_err());
    }

    #[test]
    fn case_is_preserved() {
        assert_eq!(match_case("Good", "bad"), "Bad");
        assert_eq!(match_case("GOOD", "bad"), "BAD");
        assert_eq!(match_case("good", "bad"), "bad");
    }

    #[test]
    fn rm_ct_removes_top_word_and_flips() {
        let m = LinearModel::unigram(&[("good", 3.0), ("movie", 0.1)], -0.5);
        let d = LabeledDocument::new("d", "the movie is good", Label::Pos);
        let c = rm_ct(&m, &d, &lexicon(), &sampler(), &GeneratorConfig::default()).unwrap();
        assert_eq!(c.text, "the movie is");
        assert!(c.flipped);
        assert_eq!(c.label, Label::Neg);
        assert_eq!(c.edits.len(), 1);
    }

    #[test]
    fn rm_ct_drops_only_the_negation_trigger() {
        let m = LinearModel::unigram(&[("not", 2.0), ("bad", -1.0)], 0.2);
        let d = LabeledDocument::new("d", "In and of itself it is not a bad film.", Label::Pos);
        let c = rm_ct(&m, &d, &lexicon(), &sampler(), &GeneratorConfig::default()).unwrap();
        assert_eq!(c.text, "In and of itself it is a bad film.");
        assert!(c.flipped);
    }

    #[test]
    fn rm_ct_without_terms_is_an_error() {
        let m = LinearModel::unigram(&[("plot", 1.0)], 0.0);
        let d = LabeledDocument::new("d", "The plot exists.", Label::Pos);
        assert!(matches!(
            rm_ct(&m, &d, &lexicon(), &sampler(), &GeneratorConfig::default()),
            Err(GeneratorError::NothingToRemove)
        ));
    }

    #[test]
    fn contractions_are_repaired() {
        let m = LinearModel::unigram(&[("n't", 2.0)], 0.0);
        let d = LabeledDocument::new("d", "You can't miss it. I won't forget.", Label::Pos);
        let c = rm_ct(&m, &d, &lexicon(), &sampler(), &GeneratorConfig::default()).unwrap();
        assert_eq!(c.text, "You can miss it. I will forget.");
        let d = LabeledDocument::new("d", "It didn't fail and I cannot complain.", Label::Pos);
        let c = rm_ct(&m, &d, &lexicon(), &sampler(), &GeneratorConfig::default()).unwrap();
        assert_eq!(c.text, "It did fail and I cannot complain.");
    }

    #[test]
    fn rep_ct_replaces_each_causal_word() {
        let m = LinearModel::unigram(
            &[("badly", -1.0), ("boring", -1.0), ("well", 1.0), ("entertaining", 1.0), ("directed", 0.0)],
            0.0,
        );
        let d = LabeledDocument::new("d", "It is badly directed, badly acted and boring.", Label::Neg);
        let c = rep_ct(&m, &d, &lexicon(), &antonyms(), 100, &sampler(), &GeneratorConfig::default()).unwrap();
        assert_eq!(c.text, "It is well directed, well acted and entertaining.");
        assert!(c.flipped);
        assert!(c.edits.iter().all(|e| e.kind == EditKind::Replace));
    }

    #[test]
    fn rep_ct_good_movie() {
        let m = LinearModel::unigram(&[("good", 2.0), ("bad", -2.0), ("movie", 0.0)], 0.0);
        let d = LabeledDocument::new("d", "good movie", Label::Pos);
        let c = rep_ct(&m, &d, &lexicon(), &antonyms(), 100, &sampler(), &GeneratorConfig::default()).unwrap();
        assert_eq!(c.text, "bad movie");
        assert!(c.flipped);
        assert_eq!(apply_edits(&d.text, &c.edits).unwrap(), c.text);
    }

    struct Fixed(Vec<&'static str>);

    impl Proposer for Fixed {
        fn propose(&self, q: &MaskedQuery<'_>) -> Result<ProposalSet, ProposerError> {
            let c = self.0.iter().map(|w| Proposal { word: w.to_string(), score: 1.0 }).collect();
            Ok(ProposalSet::from_scored(c, q.k))
        }
    }

    #[test]
    fn rep_ct_forced_choice_and_empty_set() {
        let m = LinearModel::unigram(&[("good", 1.0)], 0.0);
        let d = LabeledDocument::new("d", "a good story", Label::Pos);
        let gc = GeneratorConfig::default();
        let c = rep_ct(&m, &d, &lexicon(), &Fixed(vec!["good", "dull"]), 10, &sampler(), &gc).unwrap();
        assert_eq!(c.edits.len(), 1);
        assert_eq!(c.edits[0].replacement, "dull");
        assert!(matches!(
            rep_ct(&m, &d, &lexicon(), &Fixed(vec!["fine"]), 10, &sampler(), &gc),
            Err(GeneratorError::NoReplacements)
        ));
    }

    #[test]
    fn rep_ct_picks_most_important_replacement() {
        let m = LinearModel::unigram(&[("good", 1.0), ("bad", -0.5), ("dull", -3.0)], 0.0);
        let d = LabeledDocument::new("d", "a good story", Label::Pos);
        let gc = GeneratorConfig::default();
        let c = rep_ct(&m, &d, &lexicon(), &Fixed(vec!["bad", "dull"]), 10, &sampler(), &gc).unwrap();
        assert_eq!(c.text, "a dull story");
    }

    #[test]
    fn edit_cap_limits_later_edits() {
        let m = LinearModel::unigram(&[("good", 1.0)], 0.0);
        let d = LabeledDocument::new("d", "good good good good", Label::Pos);
        let gc = GeneratorConfig::default();
        let c = rep_ct(&m, &d, &lexicon(), &antonyms(), 10, &sampler(), &gc).unwrap();
        // first edit is free; 0.3 * 4 tokens allows one
        assert_eq!(c.edits.len(), 1);
        let loose = GeneratorConfig { edit_cap: 1.0, ..gc };
        let c = rep_ct(&m, &d, &lexicon(), &antonyms(), 10, &sampler(), &loose).unwrap();
        assert_eq!(c.text, "bad bad bad bad");
    }

    fn her_fixture() -> (LinearModel, LabeledDocument, EmbeddingTable) {
        let m = LinearModel::unigram(&[("dull", -1.0), ("exciting", 0.5), ("her", -2.0), ("their", 0.0)], 0.0);
        let d = LabeledDocument::new("d", "The plot is dull for her.", Label::Neg);
        let mut emb = EmbeddingTable::new(3);
        for (w, v) in [
            ("her", [1.0, 0.0, 0.1]),
            ("their", [0.9, 0.1, 0.1]),
            ("his", [0.5, 0.5, 0.0]),
            ("dull", [0.9, 0.0, 0.2]),
            ("plot", [0.0, 1.0, 0.0]),
            ("story", [0.0, 0.9, 0.1]),
        ] {
            emb.insert(w, &v);
        }
        (m, d, emb)
    }

    #[test]
    fn synonym_fallback_swaps_spurious_word() {
        let (m, d, emb) = her_fixture();
        let gc = GeneratorConfig::default();
        let rep = rep_ct(&m, &d, &lexicon(), &antonyms(), 10, &sampler(), &gc).unwrap();
        assert_eq!(rep.text, "The plot is exciting for her.");
        assert!(!rep.flipped);
        let syn = synonym_fallback(&m, &d, &rep, &emb, &lexicon(), 5, &sampler(), &gc).unwrap();
        assert_eq!(syn.text, "The plot is exciting for their.");
        assert!(syn.flipped);
        assert_eq!(syn.method, Method::Synonym);
        assert_eq!(syn.edits.last().unwrap().kind, EditKind::SynonymSwap);
        assert_eq!(apply_edits(&d.text, &syn.edits).unwrap(), syn.text);

        let same = synonym_fallback(&m, &d, &rep, &emb, &lexicon(), 0, &sampler(), &gc).unwrap();
        assert_eq!(same, rep);
        assert!(matches!(
            synonym_fallback(&m, &d, &syn, &emb, &lexicon(), 5, &sampler(), &gc),
            Err(GeneratorError::Precondition(_))
        ));
    }

    #[test]
    fn generate_document_collects_methods_and_failures() {
        let (m, d, emb) = her_fixture();
        let prop = antonyms();
        let gc = GeneratorConfig::default();
        let s = sampler();
        let lex = lexicon();
        let ctx = GenerationContext {
            model: &m,
            lexicon: &lex,
            proposer: &prop,
            embeddings: Some(&emb),
            k: 10,
            sampler: &s,
            config: &gc,
        };
        let out = generate_document(&ctx, &d);
        let methods: Vec<_> = out.candidates.iter().map(|c| c.method).collect();
        assert_eq!(methods, [Method::RmCt, Method::RepCt, Method::Synonym]);
        let report = GenerationReport::from_outcomes(&[out]);
        assert_eq!(report.covered, 1);

        let plain = LabeledDocument::new("p", "The plot exists.", Label::Pos);
        let out = generate_document(&ctx, &plain);
        assert!(out.candidates.is_empty());
        assert_eq!(out.failures.len(), 2);
    }
}
