use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::tokenize::{segment, Paragraph, Sentence, Token};
use super::CorpusError;

/// Binary sentiment label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Pos,
    Neg,
}

impl Label {
    pub fn flip(self) -> Label {
        match self {
            Label::Pos => Label::Neg,
            Label::Neg => Label::Pos,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Pos => "pos",
            Label::Neg => "neg",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pos" => Ok(Label::Pos),
            "neg" => Ok(Label::Neg),
            other => Err(CorpusError::UnknownLabel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    #[default]
    Original,
    HumanCf,
    MachineCf,
}

impl Provenance {
    fn is_original(&self) -> bool {
        *self == Provenance::Original
    }
}

/// A labelled text together with its segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDocument {
    pub id: String,
    pub text: String,
    pub label: Label,
    pub paragraphs: Vec<Paragraph>,
    pub provenance: Provenance,
}

impl LabeledDocument {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Label) -> Self {
        Self::with_provenance(id, text, label, Provenance::Original)
    }

    pub fn with_provenance(
        id: impl Into<String>,
        text: impl Into<String>,
        label: Label,
        provenance: Provenance,
    ) -> Self {
        let text = text.into();
        let paragraphs = segment(&text);
        LabeledDocument {
            id: id.into(),
            text,
            label,
            paragraphs,
            provenance,
        }
    }

    /// Sentences in reading order across paragraphs.
    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.paragraphs.iter().flat_map(|p| p.sentences.iter())
    }

    pub fn num_sentences(&self) -> usize {
        self.paragraphs.iter().map(|p| p.sentences.len()).sum()
    }

    /// The `flat`-th sentence in reading order.
    pub fn sentence(&self, flat: usize) -> Option<&Sentence> {
        self.sentences().nth(flat)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences().flat_map(|s| s.tokens.iter())
    }

    /// Lowercased tokens, one vector per sentence in reading order.
    pub fn sentence_lowers(&self) -> Vec<Vec<&str>> {
        self.sentences().map(|s| s.lowers()).collect()
    }

    pub fn lowers(&self) -> Vec<&str> {
        self.tokens().map(|t| t.lower.as_str()).collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    text: String,
    label: String,
    #[serde(default, skip_serializing_if = "Provenance::is_original")]
    provenance: Provenance,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    pub documents: Vec<LabeledDocument>,
}

impl LabeledDataset {
    pub fn new(name: impl Into<String>, documents: Vec<LabeledDocument>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for doc in &documents {
            if !seen.insert(doc.id.as_str()) {
                return Err(CorpusError::DuplicateId(doc.id.clone()));
            }
        }
        Ok(LabeledDataset {
            name: name.into(),
            documents,
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.documents.iter().filter(|d| d.label == label).count()
    }

    /// `|#pos - #neg| <= 1`.
    pub fn is_balanced(&self) -> bool {
        self.count(Label::Pos).abs_diff(self.count(Label::Neg)) <= 1
    }

    pub fn get(&self, id: &str) -> Option<&LabeledDocument> {
        self.documents.iter().find(|d| d.id == id)
    }

    /// Parses JSON Lines. Blank lines are skipped; a record without an id
    /// gets `<name>-<line>`.
    pub fn from_jsonl<R: Read>(name: &str, reader: R) -> Result<Self, CorpusError> {
        let mut documents = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| CorpusError::Io {
                path: name.to_string(),
                source: e,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record =
                serde_json::from_str(&line).map_err(|e| CorpusError::MalformedLine {
                    line: line_no,
                    message: e.to_string(),
                })?;
            let label = record.label.parse::<Label>().map_err(|_| CorpusError::MalformedLine {
                line: line_no,
                message: format!("unknown label {:?}", record.label),
            })?;
            let id = record.id.unwrap_or_else(|| format!("{name}-{line_no}"));
            documents.push(LabeledDocument::with_provenance(
                id,
                record.text,
                label,
                record.provenance,
            ));
        }
        LabeledDataset::new(name, documents)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for doc in &self.documents {
            let record = Record {
                id: Some(doc.id.clone()),
                text: doc.text.clone(),
                label: doc.label.as_str().to_string(),
                provenance: doc.provenance,
            };
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

/// Loads a JSON Lines dataset; the dataset name is the file stem.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset, CorpusError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    LabeledDataset::from_jsonl(&name, file)
}

pub fn write_dataset(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut file = std::io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    dataset.write_jsonl(&mut file).map_err(io_err)?;
    file.flush().map_err(io_err)
}
