use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use super::{CorpusError, Label};

/// Positive and negative opinion words plus an antonym map.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolarityLexicon {
    pub positive: BTreeSet<String>,
    pub negative: BTreeSet<String>,
    pub antonyms: BTreeMap<String, String>,
    /// Words listed in both polarity files; dropped from both.
    pub conflicts: Vec<String>,
}

impl PolarityLexicon {
    /// Builds a lexicon from in-memory word lists, applying the same
    /// normalization and conflict rules as [`load_lexicon`].
    pub fn from_words<P, N, A, S>(positive: P, negative: N, antonyms: A) -> Self
    where
        P: IntoIterator<Item = S>,
        N: IntoIterator<Item = S>,
        A: IntoIterator<Item = (S, S)>,
        S: AsRef<str>,
    {
        let mut pos: BTreeSet<String> =
            positive.into_iter().map(|w| w.as_ref().trim().to_lowercase()).collect();
        let mut neg: BTreeSet<String> =
            negative.into_iter().map(|w| w.as_ref().trim().to_lowercase()).collect();
        pos.remove("");
        neg.remove("");
        let conflicts: Vec<String> = pos.intersection(&neg).cloned().collect();
        for word in &conflicts {
            log::warn!("lexicon word {word:?} listed as both positive and negative; dropping it");
            pos.remove(word);
            neg.remove(word);
        }
        let mut lexicon = PolarityLexicon {
            positive: pos,
            negative: neg,
            antonyms: BTreeMap::new(),
            conflicts,
        };
        for (a, b) in antonyms {
            let (a, b) = (a.as_ref().to_lowercase(), b.as_ref().to_lowercase());
            match (lexicon.polarity(&a), lexicon.polarity(&b)) {
                (Some(pa), Some(pb)) if pa == pb => {
                    log::warn!("antonym pair {a:?}/{b:?} has equal polarity; skipping");
                }
                _ => {
                    lexicon.antonyms.entry(a).or_insert(b);
                }
            }
        }
        lexicon
    }

    pub fn polarity(&self, word: &str) -> Option<Label> {
        if self.positive.contains(word) {
            Some(Label::Pos)
        } else if self.negative.contains(word) {
            Some(Label::Neg)
        } else {
            None
        }
    }

    pub fn words(&self, label: Label) -> &BTreeSet<String> {
        match label {
            Label::Pos => &self.positive,
            Label::Neg => &self.negative,
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.polarity(word).is_some()
    }

    pub fn antonym(&self, word: &str) -> Option<&str> {
        self.antonyms.get(word).map(String::as_str)
    }
}

/// Non-comment lines with their 1-based line numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, CorpusError> {
    let text = fs::read(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    // The published lexicon files are Latin-1.
    let text = match String::from_utf8(text) {
        Ok(s) => s,
        Err(e) => e.into_bytes().iter().map(|&b| b as char).collect(),
    };
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with(';'))
        .map(|(i, l)| (i, l.to_string()))
        .collect())
}

/// Loads the positive and negative word lists and the antonym map.
///
/// All three files use one entry per line with `;` comment lines; antonym
/// lines hold two whitespace-separated words.
pub fn load_lexicon(
    pos_path: impl AsRef<Path>,
    neg_path: impl AsRef<Path>,
    antonym_path: impl AsRef<Path>,
) -> Result<PolarityLexicon, CorpusError> {
    let positive = read_lines(pos_path.as_ref())?.into_iter().map(|(_, w)| w);
    let negative = read_lines(neg_path.as_ref())?.into_iter().map(|(_, w)| w);
    let mut antonyms = Vec::new();
    let antonym_path = antonym_path.as_ref();
    for (line_no, line) in read_lines(antonym_path)? {
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => antonyms.push((a.to_string(), b.to_string())),
            _ => {
                return Err(CorpusError::MalformedLine {
                    line: line_no,
                    message: format!("{}: expected \"word antonym\", got {line:?}", antonym_path.display()),
                })
            }
        }
    }
    Ok(PolarityLexicon::from_words(positive, negative, antonyms))
}
