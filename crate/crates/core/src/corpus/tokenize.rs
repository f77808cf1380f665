//! Rule-based paragraph, sentence and token segmentation.
//!
//! The rules are deliberately small and fixed so that token spans are stable
//! across runs; attribution scores attach to these spans.
//!
//! | input                     | tokens                               |
//! |---------------------------|--------------------------------------|
//! | `don't`                   | `do` `n't`                           |
//! | `can't`                   | `ca` `n't`                           |
//! | `Nolan's`                 | `Nolan` `'s`                         |
//! | `well-made`               | `well-made`                          |
//! | `3.5`, `1,000`            | one token each                       |
//! | `...`, `!!`, `?!`         | one token per run of `.!?`           |
//! | `(`, `"`, `,`             | one token per character              |
//!
//! Sentences end at a run of `.!?` followed by whitespace or end of text
//! (closing quotes and brackets directly after the run stay with the
//! sentence). A lone `.` does not end a sentence when the preceding token is
//! an entry of [`ABBREVIATIONS`] or a single letter (initials).
//! Paragraphs are separated by blank lines.

use serde::{Deserialize, Serialize};

/// Abbreviations that do not end a sentence when followed by `.`.
pub const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "e.g", "i.e", "vol",
    "approx", "dept", "fig", "inc", "ltd", "co", "mt", "ft", "jan", "feb", "mar", "apr", "jun",
    "jul", "aug", "sep", "sept", "oct", "nov", "dec",
];

const CLITICS: &[&str] = &["'s", "'re", "'ve", "'ll", "'d", "'m"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    /// Surface form exactly as it appears in the text.
    pub text: String,
    pub lower: String,
    /// Byte offsets into the owning document text.
    pub start: usize,
    pub end: usize,
}

impl Token {
    fn new(source: &str, start: usize, end: usize) -> Self {
        let text = source[start..end].to_string();
        let lower = text.to_lowercase().replace('\u{2019}', "'");
        Token {
            text,
            lower,
            start,
            end,
        }
    }

    /// True when the token carries no letters or digits.
    pub fn is_punct(&self) -> bool {
        is_punct(&self.lower)
    }
}

pub fn is_punct(token: &str) -> bool {
    !token.chars().any(char::is_alphanumeric)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn lowers(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.lower.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub index: usize,
    pub sentences: Vec<Sentence>,
}

/// Splits `text` into paragraphs, sentences and tokens.
pub fn segment(text: &str) -> Vec<Paragraph> {
    paragraph_ranges(text)
        .into_iter()
        .filter_map(|(start, end)| {
            let tokens = tokenize_range(text, start, end);
            if tokens.is_empty() {
                None
            } else {
                Some(split_sentences(text, tokens))
            }
        })
        .enumerate()
        .map(|(index, sentences)| Paragraph { index, sentences })
        .collect()
}

/// Tokenizes a whole string, ignoring paragraph and sentence structure.
pub fn tokenize(text: &str) -> Vec<Token> {
    tokenize_range(text, 0, text.len())
}

fn paragraph_ranges(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut ranges = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'\n' {
            // Look for a second newline with only horizontal whitespace between.
            let mut j = i + 1;
            while j < bytes.len() && matches!(bytes[j], b' ' | b'\t' | b'\r') {
                j += 1;
            }
            if j < bytes.len() && bytes[j] == b'\n' {
                ranges.push((start, i));
                while j < bytes.len() && bytes[j].is_ascii_whitespace() {
                    j += 1;
                }
                start = j;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    ranges.push((start, text.len()));
    ranges
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

fn tokenize_range(text: &str, start: usize, end: usize) -> Vec<Token> {
    let slice = &text[start..end];
    let chars: Vec<(usize, char)> = slice.char_indices().map(|(i, c)| (i + start, c)).collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    let at = |k: usize| chars.get(k).map(|&(_, c)| c);
    let offset = |k: usize| chars.get(k).map(|&(o, _)| o).unwrap_or(end);

    while i < chars.len() {
        let c = chars[i].1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if is_word_char(c) {
            let begin = i;
            i += 1;
            loop {
                match at(i) {
                    Some(c) if is_word_char(c) => i += 1,
                    // internal hyphen, apostrophe, or numeric separator
                    Some(c)
                        if (c == '-' || is_apostrophe(c))
                            && at(i + 1).is_some_and(is_word_char) =>
                    {
                        i += 2
                    }
                    Some('.' | ',')
                        if at(i - 1).is_some_and(|p| p.is_ascii_digit())
                            && at(i + 1).is_some_and(|n| n.is_ascii_digit()) =>
                    {
                        i += 2
                    }
                    _ => break,
                }
            }
            split_word(text, offset(begin), offset(i), &mut tokens);
            continue;
        }
        let begin = i;
        i += 1;
        if matches!(c, '.' | '!' | '?') {
            while matches!(at(i), Some('.' | '!' | '?')) {
                i += 1;
            }
        } else if c == '-' || c == '*' || c == '=' {
            while at(i) == Some(c) {
                i += 1;
            }
        }
        tokens.push(Token::new(text, offset(begin), offset(i)));
    }
    tokens
}

/// Splits clitics off a word span: `n't` and the `'s`-family.
fn split_word(text: &str, start: usize, end: usize, out: &mut Vec<Token>) {
    let word = &text[start..end];
    let lower = word.to_lowercase().replace('\u{2019}', "'");
    if lower.len() == word.len() {
        if lower.ends_with("n't") && lower.len() > 3 {
            let cut = end - 3;
            out.push(Token::new(text, start, cut));
            out.push(Token::new(text, cut, end));
            return;
        }
        for clitic in CLITICS {
            if lower.ends_with(clitic) && lower.len() > clitic.len() {
                let cut = end - clitic.len();
                out.push(Token::new(text, start, cut));
                out.push(Token::new(text, cut, end));
                return;
            }
        }
    } else {
        // Curly apostrophes are three bytes; locate the clitic on chars.
        let chars: Vec<(usize, char)> = word.char_indices().collect();
        let n = chars.len();
        if n > 3 {
            let tail: String = chars[n - 3..].iter().map(|&(_, c)| c).collect::<String>();
            let tail = tail.to_lowercase().replace('\u{2019}', "'");
            if tail == "n't" {
                let cut = start + chars[n - 3].0;
                out.push(Token::new(text, start, cut));
                out.push(Token::new(text, cut, end));
                return;
            }
        }
        if n > 2 {
            let tail: String = chars[n - 2..].iter().map(|&(_, c)| c).collect::<String>();
            let tail = tail.to_lowercase().replace('\u{2019}', "'");
            if CLITICS.contains(&tail.as_str()) {
                let cut = start + chars[n - 2].0;
                out.push(Token::new(text, start, cut));
                out.push(Token::new(text, cut, end));
                return;
            }
        }
    }
    out.push(Token::new(text, start, end));
}

fn is_terminal(token: &Token) -> bool {
    !token.lower.is_empty() && token.lower.chars().all(|c| matches!(c, '.' | '!' | '?'))
}

fn is_closer(token: &Token) -> bool {
    matches!(
        token.lower.as_str(),
        "\"" | "'" | ")" | "]" | "}" | "\u{201d}"
    )
}

fn split_sentences(text: &str, tokens: Vec<Token>) -> Vec<Sentence> {
    let mut sentences: Vec<Sentence> = Vec::new();
    let mut current: Vec<Token> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let token = tokens[i].clone();
        i += 1;
        let terminal = is_terminal(&token);
        let abbreviation = token.lower == "."
            && current.last().is_some_and(|prev: &Token| {
                prev.end == token.start
                    && (ABBREVIATIONS.contains(&prev.lower.as_str())
                        || (prev.lower.chars().count() == 1
                            && prev.lower.chars().all(char::is_alphabetic)))
            });
        current.push(token);
        if !terminal || abbreviation {
            continue;
        }
        while i < tokens.len() && is_closer(&tokens[i]) && tokens[i].start == current.last().unwrap().end {
            current.push(tokens[i].clone());
            i += 1;
        }
        let after = current.last().unwrap().end;
        let boundary = text[after..]
            .chars()
            .next()
            .is_none_or(char::is_whitespace);
        if boundary {
            sentences.push(Sentence {
                index: sentences.len(),
                tokens: std::mem::take(&mut current),
            });
        }
    }
    if !current.is_empty() {
        sentences.push(Sentence {
            index: sentences.len(),
            tokens: current,
        });
    }
    sentences
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lowers(text: &str) -> Vec<String> {
        tokenize(text).into_iter().map(|t| t.lower).collect()
    }

    #[test]
    fn single_sentence() {
        let paras = segment("Good film.");
        assert_eq!(paras.len(), 1);
        assert_eq!(paras[0].sentences.len(), 1);
        assert_eq!(paras[0].sentences[0].lowers(), ["good", "film", "."]);
    }

    #[test]
    fn two_sentences() {
        let paras = segment("It is bad. I left.");
        assert_eq!(paras.len(), 1);
        assert_eq!(paras[0].sentences.len(), 2);
    }

    #[test]
    fn clitics() {
        assert_eq!(lowers("don't"), ["do", "n't"]);
        assert_eq!(lowers("can't"), ["ca", "n't"]);
        assert_eq!(lowers("Nolan's films"), ["nolan", "'s", "films"]);
        assert_eq!(lowers("don\u{2019}t"), ["do", "n't"]);
        assert_eq!(lowers("o'clock"), ["o'clock"]);
    }

    #[test]
    fn words_numbers_and_punctuation() {
        assert_eq!(lowers("a well-made film"), ["a", "well-made", "film"]);
        assert_eq!(lowers("3.5 stars, 1,000 fans"), ["3.5", "stars", ",", "1,000", "fans"]);
        assert_eq!(lowers("Wait... what?!"), ["wait", "...", "what", "?!"]);
        assert_eq!(lowers("(yes)"), ["(", "yes", ")"]);
    }

    #[test]
    fn abbreviations_do_not_split() {
        let paras = segment("Mr. Smith left.");
        assert_eq!(paras[0].sentences.len(), 1);
        let paras = segment("Directed by J. Smith. Great.");
        assert_eq!(paras[0].sentences.len(), 2);
    }

    #[test]
    fn period_inside_token_run_does_not_split() {
        let paras = segment("He said \"stop.\" Then he left.");
        let s = &paras[0].sentences;
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].tokens.last().unwrap().text, "\"");
    }

    #[test]
    fn paragraphs_split_on_blank_lines() {
        let text = "First one. Still first.\n\nSecond.\n  \n\nThird";
        let paras = segment(text);
        assert_eq!(paras.len(), 3);
        assert_eq!(paras[0].sentences.len(), 2);
        assert_eq!(paras[2].sentences[0].lowers(), ["third"]);
        // single newline does not split
        assert_eq!(segment("one\ntwo").len(), 1);
    }

    #[test]
    fn empty_text() {
        assert!(segment("").is_empty());
        assert!(segment("  \n\n ").is_empty());
    }

    #[test]
    fn spans_reconstruct_text() {
        let text = "It's \u{201c}not\u{201d} bad — really!\n\nSee it.";
        let tokens = tokenize(text);
        let mut rebuilt = String::new();
        let mut pos = 0;
        for t in &tokens {
            let gap = &text[pos..t.start];
            assert!(gap.chars().all(char::is_whitespace), "gap {gap:?}");
            rebuilt.push_str(gap);
            rebuilt.push_str(&text[t.start..t.end]);
            pos = t.end;
        }
        rebuilt.push_str(&text[pos..]);
        assert_eq!(rebuilt, text);
    }
}
