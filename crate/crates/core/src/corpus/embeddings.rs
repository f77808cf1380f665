use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use super::{CorpusError, LabeledDataset};

/// Static word vectors with per-word IDF weights.
///
/// Vectors are stored row-major in one buffer alongside their L2 norms so
/// cosine queries do not renormalize.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dimension: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
    norms: Vec<f64>,
    idf: HashMap<String, f64>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Self {
        EmbeddingTable {
            dimension,
            ..Default::default()
        }
    }

    /// Adds or replaces a vector. Panics when the length is not `dimension`.
    pub fn insert(&mut self, word: impl Into<String>, vector: &[f32]) {
        assert_eq!(vector.len(), self.dimension, "vector length must equal the table dimension");
        let word = word.into();
        let norm = vector.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
        match self.index.get(&word) {
            Some(&row) => {
                self.data[row * self.dimension..(row + 1) * self.dimension].copy_from_slice(vector);
                self.norms[row] = norm;
            }
            None => {
                self.index.insert(word.clone(), self.words.len());
                self.words.push(word);
                self.data.extend_from_slice(vector);
                self.norms.push(norm);
            }
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn vector(&self, word: &str) -> Option<&[f32]> {
        self.index.get(word).map(|&row| self.row(row))
    }

    fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.dimension..(row + 1) * self.dimension]
    }

    /// Cosine similarity clamped to `[-1, 1]`; `None` when either word is
    /// missing. Zero vectors have cosine 0 with everything.
    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        let (&ra, &rb) = (self.index.get(a)?, self.index.get(b)?);
        Some(self.cosine_rows(ra, rb))
    }

    fn cosine_rows(&self, ra: usize, rb: usize) -> f64 {
        let denom = self.norms[ra] * self.norms[rb];
        if denom == 0.0 {
            return 0.0;
        }
        let dot: f64 = self
            .row(ra)
            .iter()
            .zip(self.row(rb))
            .map(|(&x, &y)| f64::from(x) * f64::from(y))
            .sum();
        (dot / denom).clamp(-1.0, 1.0)
    }

    /// The `k` most cosine-similar words to `word` among those accepted by
    /// `keep`, descending; ties break alphabetically. `word` itself is
    /// never returned.
    pub fn nearest<F>(&self, word: &str, k: usize, keep: F) -> Vec<(String, f64)>
    where
        F: Fn(&str) -> bool,
    {
        let Some(&origin) = self.index.get(word) else {
            return Vec::new();
        };
        let mut scored: Vec<(usize, f64)> = (0..self.words.len())
            .filter(|&row| row != origin && keep(&self.words[row]))
            .map(|row| (row, self.cosine_rows(origin, row)))
            .collect();
        let order = |a: &(usize, f64), b: &(usize, f64)| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.words[a.0].cmp(&self.words[b.0]))
        };
        if k == 0 {
            return Vec::new();
        }
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        scored
            .into_iter()
            .map(|(row, s)| (self.words[row].clone(), s))
            .collect()
    }

    /// IDF weight; 1.0 for words not seen by [`fit_idf`](Self::fit_idf).
    pub fn idf(&self, word: &str) -> f64 {
        self.idf.get(word).copied().unwrap_or(1.0)
    }

    pub fn idf_map(&self) -> &HashMap<String, f64> {
        &self.idf
    }

    /// Fits smoothed IDF over the lowercased tokens of `dataset`:
    /// `idf(w) = ln((1 + N) / (1 + df(w))) + 1`.
    pub fn fit_idf(&mut self, dataset: &LabeledDataset) {
        self.idf = fit_idf(dataset);
    }
}

pub fn fit_idf(dataset: &LabeledDataset) -> HashMap<String, f64> {
    let n = dataset.len() as f64;
    let mut df: HashMap<&str, usize> = HashMap::new();
    for doc in &dataset.documents {
        let unique: HashSet<&str> = doc.tokens().map(|t| t.lower.as_str()).collect();
        for w in unique {
            *df.entry(w).or_default() += 1;
        }
    }
    df.into_iter()
        .map(|(w, d)| (w.to_string(), ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0))
        .collect()
}

/// Parses the text format `word f1 ... fd`, one entry per line.
pub fn parse_embeddings(source: &str, text: &str) -> Result<EmbeddingTable, CorpusError> {
    let mut table: Option<EmbeddingTable> = None;
    let mut buf = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        buf.clear();
        for p in parts {
            let x: f32 = p.parse().map_err(|_| CorpusError::MalformedLine {
                line: line_no,
                message: format!("{source}: bad float {p:?}"),
            })?;
            buf.push(x);
        }
        let table = table.get_or_insert_with(|| EmbeddingTable::new(buf.len()));
        if buf.len() != table.dimension || buf.is_empty() {
            return Err(CorpusError::DimensionMismatch {
                line: line_no,
                expected: table.dimension,
                found: buf.len(),
            });
        }
        table.insert(word, &buf);
    }
    Ok(table.unwrap_or_default())
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_embeddings(&path.display().to_string(), &text)
}
