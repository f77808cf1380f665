use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{clamp_prob, Classifier, ClassifierError, SentenceScorer};
use crate::corpus::{Label, LabeledDataset};

/// Hyperparameters of the built-in logistic-regression model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub epochs: usize,
    /// Initial step size; epoch `e` (1-based) uses `learning_rate / e`.
    pub learning_rate: f64,
    pub l2: f64,
    /// Minimum number of training documents an n-gram must occur in.
    pub min_df: usize,
    pub unigrams: bool,
    pub bigrams: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            epochs: 20,
            learning_rate: 0.1,
            l2: 1e-4,
            min_df: 2,
            unigrams: true,
            bigrams: true,
        }
    }
}

/// Logistic regression over L2-normalized TF-IDF unigrams and bigrams.
///
/// Only tokens containing an alphanumeric character are features; bigrams
/// pair consecutive such tokens within a sentence, skipping punctuation.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub(crate) config: TrainerConfig,
    pub(crate) words: Vec<String>,
    pub(crate) bigrams: Vec<(u32, u32)>,
    pub(crate) idf: Vec<f64>,
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: f64,
    pub(crate) train_accuracy: f64,
    word_index: HashMap<String, u32>,
    bigram_index: HashMap<(u32, u32), u32>,
}

fn is_feature_token(token: &str) -> bool {
    token.chars().any(char::is_alphanumeric)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Sorts feature ids and collapses them into `(feature, count)` runs.
fn run_lengths(ids: &mut [u32]) -> Vec<(u32, f64)> {
    ids.sort_unstable();
    let mut out: Vec<(u32, f64)> = Vec::new();
    for &id in ids.iter() {
        match out.last_mut() {
            Some((last, c)) if *last == id => *c += 1.0,
            _ => out.push((id, 1.0)),
        }
    }
    out
}

impl LinearModel {
    /// Assembles a model from explicit parameters. Bigram entries index into
    /// `words`; feature order is the words (when unigrams are enabled)
    /// followed by the bigrams.
    pub fn from_parts(
        config: TrainerConfig,
        words: Vec<String>,
        bigrams: Vec<(u32, u32)>,
        idf: Vec<f64>,
        weights: Vec<f64>,
        bias: f64,
    ) -> Result<Self, ClassifierError> {
        let n_uni = if config.unigrams { words.len() } else { 0 };
        let n_bi = if config.bigrams { bigrams.len() } else { 0 };
        if n_bi != bigrams.len() {
            return Err(ClassifierError::Format("bigram table present but bigrams disabled".into()));
        }
        let n = n_uni + n_bi;
        if idf.len() != n || weights.len() != n {
            return Err(ClassifierError::Format(format!(
                "expected {n} idf values and weights, got {} and {}",
                idf.len(),
                weights.len()
            )));
        }
        if let Some(&(a, b)) = bigrams
            .iter()
            .find(|&&(a, b)| a as usize >= words.len() || b as usize >= words.len())
        {
            return Err(ClassifierError::Format(format!("bigram ({a}, {b}) out of range")));
        }
        let word_index: HashMap<String, u32> =
            words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        if word_index.len() != words.len() {
            return Err(ClassifierError::Format("duplicate vocabulary entry".into()));
        }
        let bigram_index = bigrams
            .iter()
            .enumerate()
            .map(|(i, &pair)| (pair, (n_uni + i) as u32))
            .collect();
        Ok(LinearModel {
            config,
            words,
            bigrams,
            idf,
            weights,
            bias,
            train_accuracy: f64::NAN,
            word_index,
            bigram_index,
        })
    }

    /// A unigram-only model with unit IDF, handy for hand-built fixtures.
    pub fn unigram(weights: &[(&str, f64)], bias: f64) -> Self {
        let config = TrainerConfig {
            bigrams: false,
            ..TrainerConfig::default()
        };
        let words = weights.iter().map(|(w, _)| w.to_string()).collect();
        let w = weights.iter().map(|&(_, x)| x).collect();
        LinearModel::from_parts(config, words, Vec::new(), vec![1.0; weights.len()], w, bias)
            .expect("unigram fixture must have distinct words")
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn num_features(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    /// Accuracy on the training data; NaN for models not produced by
    /// [`train`].
    pub fn train_accuracy(&self) -> f64 {
        self.train_accuracy
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn bigrams(&self) -> &[(u32, u32)] {
        &self.bigrams
    }

    /// Human-readable name of feature `i`.
    pub fn feature_name(&self, i: usize) -> String {
        let n_uni = self.unigram_count();
        if i < n_uni {
            self.words[i].clone()
        } else {
            let (a, b) = self.bigrams[i - n_uni];
            format!("{} {}", self.words[a as usize], self.words[b as usize])
        }
    }

    /// Weight of the unigram feature for `word`, if present.
    pub fn unigram_weight(&self, word: &str) -> Option<f64> {
        if !self.config.unigrams {
            return None;
        }
        self.word_index.get(word).map(|&i| self.weights[i as usize])
    }

    fn unigram_count(&self) -> usize {
        if self.config.unigrams {
            self.words.len()
        } else {
            0
        }
    }

    /// Appends the feature ids of one sentence to `out`.
    pub(crate) fn sentence_features(&self, tokens: &[&str], out: &mut Vec<u32>) {
        let mut prev: Option<u32> = None;
        for &tok in tokens {
            if !is_feature_token(tok) {
                continue;
            }
            let id = self.word_index.get(tok).copied();
            if let Some(id) = id {
                if self.config.unigrams {
                    out.push(id);
                }
                if let Some(p) = prev {
                    if let Some(&f) = self.bigram_index.get(&(p, id)) {
                        out.push(f);
                    }
                }
            }
            prev = id;
        }
    }

    fn counts(&self, sentences: &[Vec<&str>]) -> Vec<(u32, f64)> {
        let mut ids = Vec::new();
        for s in sentences {
            self.sentence_features(s, &mut ids);
        }
        run_lengths(&mut ids)
    }

    /// Unnormalized dot product and squared TF-IDF norm of a count vector.
    fn dot_and_norm(&self, counts: &[(u32, f64)]) -> (f64, f64) {
        let mut dot = 0.0;
        let mut norm = 0.0;
        for &(f, c) in counts {
            let v = self.idf[f as usize] * c;
            dot += self.weights[f as usize] * v;
            norm += v * v;
        }
        (dot, norm)
    }

    fn logit_from(&self, dot: f64, norm_sq: f64) -> f64 {
        if norm_sq > 0.0 {
            self.bias + dot / norm_sq.sqrt()
        } else {
            self.bias
        }
    }

    pub fn logit(&self, sentences: &[Vec<&str>]) -> f64 {
        let (dot, norm) = self.dot_and_norm(&self.counts(sentences));
        self.logit_from(dot, norm)
    }

    /// Normalized TF-IDF vector of a document, sorted by feature id.
    pub fn vectorize(&self, sentences: &[Vec<&str>]) -> Vec<(u32, f64)> {
        let counts = self.counts(sentences);
        let mut v: Vec<(u32, f64)> =
            counts.into_iter().map(|(f, c)| (f, self.idf[f as usize] * c)).collect();
        let norm = v.iter().map(|x| x.1 * x.1).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                x.1 /= norm;
            }
        }
        v
    }

    fn rebuild_indices(&mut self) {
        let n_uni = self.unigram_count();
        self.word_index = self.words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        self.bigram_index = self
            .bigrams
            .iter()
            .enumerate()
            .map(|(i, &pair)| (pair, (n_uni + i) as u32))
            .collect();
    }
}

impl Classifier for LinearModel {
    fn prob_pos(&self, sentences: &[Vec<&str>]) -> Result<f64, ClassifierError> {
        Ok(clamp_prob(sigmoid(self.logit(sentences))))
    }

    fn sentence_scorer<'a>(
        &'a self,
        sentences: &[Vec<&'a str>],
        index: usize,
    ) -> Box<dyn SentenceScorer + 'a> {
        let mut ids = Vec::new();
        for (i, s) in sentences.iter().enumerate() {
            if i != index {
                self.sentence_features(s, &mut ids);
            }
        }
        let rest = run_lengths(&mut ids);
        let (dot, norm) = self.dot_and_norm(&rest);
        Box::new(LinearScorer {
            model: self,
            rest: rest.into_iter().collect(),
            dot,
            norm,
        })
    }
}

/// Scores sentence rewrites in time proportional to the sentence length by
/// caching the rest of the document's contribution.
struct LinearScorer<'a> {
    model: &'a LinearModel,
    rest: HashMap<u32, f64>,
    dot: f64,
    norm: f64,
}

impl SentenceScorer for LinearScorer<'_> {
    fn prob_pos(&self, window: &[&str]) -> Result<f64, ClassifierError> {
        let m = self.model;
        let mut ids = Vec::with_capacity(window.len() * 2);
        m.sentence_features(window, &mut ids);
        let mut dot = self.dot;
        let mut norm = self.norm;
        for (f, c) in run_lengths(&mut ids) {
            let idf = m.idf[f as usize];
            let r = self.rest.get(&f).copied().unwrap_or(0.0);
            dot += m.weights[f as usize] * idf * c;
            norm += idf * idf * ((r + c) * (r + c) - r * r);
        }
        Ok(clamp_prob(sigmoid(m.logit_from(dot, norm))))
    }
}

/// Trains the built-in model with seeded SGD on the logistic loss.
///
/// Each epoch visits the documents in a fresh seeded shuffle. The L2
/// penalty applies to the weights but not the bias.
pub fn train(data: &LabeledDataset, config: &TrainerConfig, seed: u64) -> Result<LinearModel, ClassifierError> {
    if data.is_empty() {
        return Err(ClassifierError::EmptyData);
    }
    for label in [Label::Pos, Label::Neg] {
        if data.count(label) == data.len() {
            return Err(ClassifierError::SingleClass(label));
        }
    }
    let docs: Vec<Vec<Vec<&str>>> = data.documents.iter().map(|d| d.sentence_lowers()).collect();
    let mut model = build_vocabulary(&docs, config);
    let n = docs.len() as f64;

    // document frequencies over the final feature set
    let rows_counts: Vec<Vec<(u32, f64)>> = docs.iter().map(|d| model.counts(d)).collect();
    let mut df = vec![0usize; model.num_features()];
    for row in &rows_counts {
        for &(f, _) in row {
            df[f as usize] += 1;
        }
    }
    model.idf = df.iter().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
    let rows: Vec<Vec<(u32, f64)>> = docs.iter().map(|d| model.vectorize(d)).collect();
    let targets: Vec<f64> = data
        .documents
        .iter()
        .map(|d| if d.label == Label::Pos { 1.0 } else { 0.0 })
        .collect();

    // w = scale * v lets the L2 shrinkage touch every weight in O(1)
    let mut v = vec![0.0f64; model.num_features()];
    let mut scale = 1.0f64;
    let mut bias = 0.0f64;
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for epoch in 1..=config.epochs {
        let lr = config.learning_rate / epoch as f64;
        order.shuffle(&mut rng);
        for &i in &order {
            let x = &rows[i];
            let z = bias + scale * x.iter().map(|&(f, xf)| v[f as usize] * xf).sum::<f64>();
            let g = sigmoid(z) - targets[i];
            scale *= 1.0 - lr * config.l2;
            let step = lr * g / scale;
            for &(f, xf) in x {
                v[f as usize] -= step * xf;
            }
            bias -= lr * g;
            if scale < 1e-6 {
                v.iter_mut().for_each(|w| *w *= scale);
                scale = 1.0;
            }
        }
    }
    model.weights = v.into_iter().map(|w| w * scale).collect();
    model.bias = bias;

    let correct = docs
        .iter()
        .zip(&data.documents)
        .filter(|(d, doc)| (model.logit(d) >= 0.0) == (doc.label == Label::Pos))
        .count();
    model.train_accuracy = correct as f64 / n;
    log::debug!(
        "trained {} features on {} documents, train accuracy {:.4}",
        model.num_features(),
        docs.len(),
        model.train_accuracy
    );
    Ok(model)
}

/// Collects words and bigrams meeting `min_df`, sorted lexicographically so
/// feature ids do not depend on hashing.
fn build_vocabulary(docs: &[Vec<Vec<&str>>], config: &TrainerConfig) -> LinearModel {
    let mut ids: HashMap<&str, u32> = HashMap::new();
    let mut surface: Vec<&str> = Vec::new();
    let mut word_df: Vec<usize> = Vec::new();
    let mut bigram_df: HashMap<(u32, u32), usize> = HashMap::new();
    let mut seen_words = Vec::new();
    let mut seen_bigrams = Vec::new();
    for doc in docs {
        seen_words.clear();
        seen_bigrams.clear();
        for sentence in doc {
            let mut prev: Option<u32> = None;
            for &tok in sentence {
                if !is_feature_token(tok) {
                    continue;
                }
                let id = *ids.entry(tok).or_insert_with(|| {
                    surface.push(tok);
                    word_df.push(0);
                    (surface.len() - 1) as u32
                });
                seen_words.push(id);
                if let Some(p) = prev {
                    seen_bigrams.push((p, id));
                }
                prev = Some(id);
            }
        }
        seen_words.sort_unstable();
        seen_words.dedup();
        for &w in &seen_words {
            word_df[w as usize] += 1;
        }
        if config.bigrams {
            seen_bigrams.sort_unstable();
            seen_bigrams.dedup();
            for &b in &seen_bigrams {
                *bigram_df.entry(b).or_default() += 1;
            }
        }
    }
    let min_df = config.min_df.max(1);
    let mut words: Vec<&str> = surface
        .iter()
        .zip(&word_df)
        .filter(|(_, &d)| d >= min_df)
        .map(|(w, _)| *w)
        .collect();
    words.sort_unstable();
    let new_id: HashMap<&str, u32> = words.iter().enumerate().map(|(i, w)| (*w, i as u32)).collect();
    let mut bigrams: Vec<(u32, u32)> = bigram_df
        .into_iter()
        .filter(|&(_, d)| d >= min_df)
        .map(|((a, b), _)| (new_id[surface[a as usize]], new_id[surface[b as usize]]))
        .collect();
    bigrams.sort_unstable();

    let n_uni = if config.unigrams { words.len() } else { 0 };
    let n = n_uni + bigrams.len();
    let mut model = LinearModel {
        config: config.clone(),
        words: words.into_iter().map(str::to_string).collect(),
        bigrams,
        idf: vec![1.0; n],
        weights: vec![0.0; n],
        bias: 0.0,
        train_accuracy: f64::NAN,
        word_index: HashMap::new(),
        bigram_index: HashMap::new(),
    };
    model.rebuild_indices();
    model
}
