//! Augmented-dataset assembly and the evaluation protocols: the train/test
//! matrix, the sensitivity probe, out-of-domain tests and the similarity
//! threshold ablation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attribution::{importance_in, AttributionError, CandidateTerm, SamplerConfig, TermKind};
use crate::classifier::{train, Classifier, ClassifierError, TrainerConfig};
use crate::corpus::{CorpusError, Label, LabeledDataset, LabeledDocument, Provenance};
use crate::generator::{CounterfactualCandidate, Method};

/// Version of the augmentation manifest format.
pub const MANIFEST_VERSION: u32 = 1;
const MANIFEST_FORMAT: &str = "cadgen-augment";

/// Methods in pairing priority order.
pub const PRIORITY: [Method; 3] = [Method::RepCt, Method::RmCt, Method::Synonym];

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("coverage {covered}/{total} is below the minimum {min}; uncovered originals by reason: {}", fmt_breakdown(.breakdown))]
    Coverage {
        covered: usize,
        total: usize,
        min: f64,
        breakdown: BTreeMap<String, usize>,
    },
    #[error("candidate refers to unknown original {0:?}")]
    UnknownSource(String),
    #[error("candidate for {0:?} was not gated: it must be flipped, scored and target the flipped label")]
    NotAccepted(String),
    #[error("cannot balance labels: {pos} positive vs {neg} negative")]
    Unbalanced { pos: usize, neg: usize },
    #[error("manifest mismatch: {0}")]
    Manifest(String),
    #[error("missing split {0}")]
    MissingSplit(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

fn fmt_breakdown(b: &BTreeMap<String, usize>) -> String {
    if b.is_empty() {
        return "none".into();
    }
    b.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", ")
}

/// Hex SHA-256 of a dataset's canonical JSON Lines form.
pub fn dataset_sha256(ds: &LabeledDataset) -> String {
    hex::encode(Sha256::digest(ds.to_jsonl_string().as_bytes()))
}

/// Hex SHA-256 of candidates serialized one JSON object per line.
pub fn candidates_sha256(candidates: &[CounterfactualCandidate]) -> String {
    let mut h = Sha256::new();
    for c in candidates {
        h.update(serde_json::to_vec(c).expect("candidates serialize"));
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentPolicy {
    /// Minimum fraction of originals that must receive a counterfactual.
    pub min_coverage: f64,
    /// Drop surplus counterfactuals until label counts differ by at most one.
    pub balance: bool,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            min_coverage: 0.0,
            balance: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetDigest {
    pub name: String,
    pub count: usize,
    pub sha256: String,
}

impl DatasetDigest {
    pub fn of(ds: &LabeledDataset) -> Self {
        DatasetDigest {
            name: ds.name.clone(),
            count: ds.len(),
            sha256: dataset_sha256(ds),
        }
    }
}

/// One original paired with its chosen counterfactual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pairing {
    pub source_id: String,
    pub method: Method,
    pub id: String,
}

/// Everything needed to rebuild an augmented dataset bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentManifest {
    pub format: String,
    pub version: u32,
    pub originals: DatasetDigest,
    pub candidates: usize,
    pub candidates_sha256: String,
    pub policy: AugmentPolicy,
    /// Similarity threshold the candidates were gated with, if known.
    pub threshold: Option<f64>,
    /// Seeds of the upstream stages, by name.
    pub seeds: BTreeMap<String, u64>,
    pub covered: usize,
    pub dropped_for_balance: usize,
    pub by_method: BTreeMap<Method, usize>,
    pub uncovered: BTreeMap<String, usize>,
    pub pairs: Vec<Pairing>,
    pub output: DatasetDigest,
}

/// Originals plus at most one accepted counterfactual each.
#[derive(Debug, Clone)]
pub struct AugmentedDataset {
    pub originals: LabeledDataset,
    pub counterfactuals: Vec<CounterfactualCandidate>,
    pub manifest: AugmentManifest,
}

impl AugmentedDataset {
    pub fn by_method(&self, method: Method) -> impl Iterator<Item = &CounterfactualCandidate> {
        self.counterfactuals.iter().filter(move |c| c.method == method)
    }

    /// Originals followed by counterfactuals in original order.
    pub fn to_dataset(&self) -> LabeledDataset {
        assemble(&self.originals, &self.counterfactuals)
    }
}

/// Id of the machine counterfactual produced for `source_id` by `method`.
pub fn machine_cf_id(source_id: &str, method: Method) -> String {
    format!("{source_id}-{}", method.as_str())
}

fn assemble(originals: &LabeledDataset, cfs: &[CounterfactualCandidate]) -> LabeledDataset {
    let mut docs = originals.documents.clone();
    docs.extend(cfs.iter().map(|c| {
        LabeledDocument::with_provenance(machine_cf_id(&c.source_id, c.method), c.text.clone(), c.label, Provenance::MachineCf)
    }));
    LabeledDataset::new(format!("{}_ac", originals.name), docs).expect("machine ids derive from unique source ids")
}

fn priority(m: Method) -> usize {
    PRIORITY.iter().position(|&p| p == m).expect("every method has a priority")
}

/// Picks one candidate per original: method priority, then highest
/// similarity, then text order. Returns picks in original order.
fn select<'a>(
    originals: &LabeledDataset,
    candidates: &'a [CounterfactualCandidate],
) -> Result<Vec<&'a CounterfactualCandidate>, AugmentError> {
    let index: HashMap<&str, usize> = originals.documents.iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect();
    let mut best: Vec<Option<&CounterfactualCandidate>> = vec![None; originals.len()];
    for c in candidates {
        let &i = index.get(c.source_id.as_str()).ok_or_else(|| AugmentError::UnknownSource(c.source_id.clone()))?;
        if !c.flipped || c.similarity.is_none() || c.label != originals.documents[i].label.flip() {
            return Err(AugmentError::NotAccepted(c.source_id.clone()));
        }
        let better = match best[i] {
            None => true,
            Some(b) => {
                let key = |x: &CounterfactualCandidate| (priority(x.method), std::cmp::Reverse(OrdF64(x.similarity.unwrap_or(0.0))));
                (key(c), &c.text) < (key(b), &b.text)
            }
        };
        if better {
            best[i] = Some(c);
        }
    }
    Ok(best.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);
impl Eq for OrdF64 {}
impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Drops counterfactuals of the majority label, least similar first,
/// until the combined counts differ by at most one.
fn balance(originals: &LabeledDataset, picks: &mut Vec<&CounterfactualCandidate>) -> Result<usize, AugmentError> {
    let count = |picks: &[&CounterfactualCandidate], l: Label| originals.count(l) + picks.iter().filter(|c| c.label == l).count();
    let mut dropped = 0;
    loop {
        let (pos, neg) = (count(picks, Label::Pos), count(picks, Label::Neg));
        if pos.abs_diff(neg) <= 1 {
            return Ok(dropped);
        }
        let major = if pos > neg { Label::Pos } else { Label::Neg };
        let victim = picks
            .iter()
            .enumerate()
            .filter(|(_, c)| c.label == major)
            .min_by(|(ia, a), (ib, b)| {
                OrdF64(a.similarity.unwrap_or(0.0))
                    .cmp(&OrdF64(b.similarity.unwrap_or(0.0)))
                    .then(ib.cmp(ia))
            })
            .map(|(i, _)| i);
        match victim {
            Some(i) => {
                picks.remove(i);
                dropped += 1;
            }
            None => return Err(AugmentError::Unbalanced { pos, neg }),
        }
    }
}

/// Why each original without a pick went uncovered.
fn uncovered_reasons(
    originals: &LabeledDataset,
    picks: &[&CounterfactualCandidate],
    rejected: &[CounterfactualCandidate],
) -> BTreeMap<String, usize> {
    let covered: HashSet<&str> = picks.iter().map(|c| c.source_id.as_str()).collect();
    let mut seen: HashMap<&str, (bool, bool, bool)> = HashMap::new();
    for r in rejected {
        let e = seen.entry(r.source_id.as_str()).or_default();
        if !r.flipped {
            e.0 = true;
        } else if r.similarity.is_none() {
            e.1 = true;
        } else {
            e.2 = true;
        }
    }
    let mut out = BTreeMap::new();
    for d in &originals.documents {
        if covered.contains(d.id.as_str()) {
            continue;
        }
        let reason = match seen.get(d.id.as_str()) {
            Some((_, _, true)) => "below_threshold",
            Some((_, true, _)) => "unscored",
            Some((true, _, _)) => "not_flipped",
            _ => "no_candidate",
        };
        *out.entry(reason.to_string()).or_insert(0) += 1;
    }
    out
}

/// Pairs each original with at most one accepted counterfactual and
/// balances the result. `rejected` only feeds the coverage breakdown.
pub fn build_augmented(
    originals: &LabeledDataset,
    accepted: &[CounterfactualCandidate],
    rejected: &[CounterfactualCandidate],
    policy: &AugmentPolicy,
    threshold: Option<f64>,
    seeds: BTreeMap<String, u64>,
) -> Result<AugmentedDataset, AugmentError> {
    let mut picks = select(originals, accepted)?;
    let uncovered = uncovered_reasons(originals, &picks, rejected);
    let total = originals.len();
    let covered = picks.len();
    if covered == 0 || (covered as f64) < policy.min_coverage * total as f64 {
        return Err(AugmentError::Coverage {
            covered,
            total,
            min: policy.min_coverage,
            breakdown: uncovered,
        });
    }
    let dropped_for_balance = if policy.balance { balance(originals, &mut picks)? } else { 0 };
    let counterfactuals: Vec<CounterfactualCandidate> = picks.into_iter().cloned().collect();
    let mut by_method = BTreeMap::new();
    for c in &counterfactuals {
        *by_method.entry(c.method).or_insert(0) += 1;
    }
    let pairs = counterfactuals
        .iter()
        .map(|c| Pairing {
            source_id: c.source_id.clone(),
            method: c.method,
            id: machine_cf_id(&c.source_id, c.method),
        })
        .collect();
    let output = DatasetDigest::of(&assemble(originals, &counterfactuals));
    let manifest = AugmentManifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        originals: DatasetDigest::of(originals),
        candidates: accepted.len(),
        candidates_sha256: candidates_sha256(accepted),
        policy: policy.clone(),
        threshold,
        seeds,
        covered,
        dropped_for_balance,
        by_method,
        uncovered,
        pairs,
        output,
    };
    Ok(AugmentedDataset {
        originals: originals.clone(),
        counterfactuals,
        manifest,
    })
}

/// Rebuilds an augmented dataset from its manifest and inputs, checking
/// every recorded digest.
pub fn rebuild(
    manifest: &AugmentManifest,
    originals: &LabeledDataset,
    accepted: &[CounterfactualCandidate],
) -> Result<AugmentedDataset, AugmentError> {
    if manifest.format != MANIFEST_FORMAT || manifest.version != MANIFEST_VERSION {
        return Err(AugmentError::Manifest(format!(
            "unsupported format {:?} version {}",
            manifest.format, manifest.version
        )));
    }
    let digest = DatasetDigest::of(originals);
    if digest.sha256 != manifest.originals.sha256 {
        return Err(AugmentError::Manifest(format!("originals digest {} != {}", digest.sha256, manifest.originals.sha256)));
    }
    let cand = candidates_sha256(accepted);
    if cand != manifest.candidates_sha256 {
        return Err(AugmentError::Manifest(format!("candidates digest {cand} != {}", manifest.candidates_sha256)));
    }
    let rebuilt = build_augmented(originals, accepted, &[], &manifest.policy, manifest.threshold, manifest.seeds.clone())?;
    if rebuilt.manifest.pairs != manifest.pairs || rebuilt.manifest.output != manifest.output {
        return Err(AugmentError::Manifest("rebuilt output differs from the recorded digest".into()));
    }
    Ok(AugmentedDataset {
        manifest: manifest.clone(),
        ..rebuilt
    })
}

/// Fraction of documents the classifier labels correctly.
pub fn accuracy<C: Classifier + ?Sized>(model: &C, ds: &LabeledDataset) -> Result<f64, ClassifierError> {
    if ds.is_empty() {
        return Ok(0.0);
    }
    let correct = ds
        .documents
        .par_iter()
        .map(|d| model.predict_tokens(&d.sentence_lowers()).map(|p| usize::from(p.label == d.label)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / ds.len() as f64)
}

/// Concatenation of two datasets under a new name.
pub fn combine(name: &str, a: &LabeledDataset, b: &LabeledDataset) -> Result<LabeledDataset, CorpusError> {
    let docs = a.documents.iter().chain(&b.documents).cloned().collect();
    LabeledDataset::new(name, docs)
}

/// Training-set tags of the matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrainTag {
    /// Originals.
    O,
    /// Human counterfactuals.
    #[serde(rename = "CF")]
    Cf,
    /// Originals plus human counterfactuals.
    C,
    /// Originals plus machine counterfactuals.
    #[serde(rename = "AC")]
    Ac,
}

impl TrainTag {
    pub const ALL: [TrainTag; 4] = [TrainTag::O, TrainTag::Cf, TrainTag::C, TrainTag::Ac];

    pub fn as_str(self) -> &'static str {
        match self {
            TrainTag::O => "O",
            TrainTag::Cf => "CF",
            TrainTag::C => "C",
            TrainTag::Ac => "AC",
        }
    }
}

impl fmt::Display for TrainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Mean and spread of one metric over seeded runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub std: f64,
    pub runs: usize,
    pub values: Vec<f64>,
}

impl Cell {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len();
        let mean = if n == 0 { 0.0 } else { values.iter().sum::<f64>() / n as f64 };
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Cell { mean, std, runs: n, values }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1} ± {:.1}", 100.0 * self.mean, 100.0 * self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub train: TrainTag,
    pub train_size: usize,
    /// Accuracy on the original test split.
    pub on_o: Cell,
    /// Accuracy on the counterfactual test split.
    pub on_cf: Cell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMatrix {
    pub seeds: Vec<u64>,
    pub rows: Vec<MatrixRow>,
}

impl EvalMatrix {
    pub fn row(&self, tag: TrainTag) -> Option<&MatrixRow> {
        self.rows.iter().find(|r| r.train == tag)
    }
}

impl fmt::Display for EvalMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<6} {:>6} {:>14} {:>14}", "train", "size", "test O", "test CF")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<6} {:>6} {:>14} {:>14}",
                r.train.as_str(),
                r.train_size,
                r.on_o.to_string(),
                r.on_cf.to_string()
            )?;
        }
        write!(f, "runs per cell: {}", self.seeds.len())
    }
}

/// Train and test splits of the matrix.
#[derive(Debug, Clone, Copy)]
pub struct MatrixSplits<'a> {
    pub o: Option<&'a LabeledDataset>,
    pub cf: Option<&'a LabeledDataset>,
    pub c: Option<&'a LabeledDataset>,
    pub ac: Option<&'a LabeledDataset>,
    pub test_o: Option<&'a LabeledDataset>,
    pub test_cf: Option<&'a LabeledDataset>,
}

impl<'a> MatrixSplits<'a> {
    fn train(&self, tag: TrainTag) -> Option<&'a LabeledDataset> {
        match tag {
            TrainTag::O => self.o,
            TrainTag::Cf => self.cf,
            TrainTag::C => self.c,
            TrainTag::Ac => self.ac,
        }
    }
}

/// Trains a fresh model per (train set, seed) and tests it on both test
/// splits.
pub fn evaluate_matrix(config: &TrainerConfig, splits: &MatrixSplits<'_>, seeds: &[u64]) -> Result<EvalMatrix, AugmentError> {
    let missing = |s: &str| AugmentError::MissingSplit(s.to_string());
    let test_o = splits.test_o.ok_or_else(|| missing("test O"))?;
    let test_cf = splits.test_cf.ok_or_else(|| missing("test CF"))?;
    let mut sets = Vec::new();
    for tag in TrainTag::ALL {
        sets.push((tag, splits.train(tag).ok_or_else(|| missing(&format!("train {tag}")))?));
    }
    let jobs: Vec<(usize, u64)> = (0..sets.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    let results = jobs
        .par_iter()
        .map(|&(i, seed)| -> Result<(f64, f64), AugmentError> {
            let model = train(sets[i].1, config, seed)?;
            Ok((accuracy(&model, test_o)?, accuracy(&model, test_cf)?))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows = sets
        .iter()
        .enumerate()
        .map(|(i, (tag, ds))| {
            let mine: Vec<(f64, f64)> = jobs.iter().zip(&results).filter(|(j, _)| j.0 == i).map(|(_, r)| *r).collect();
            MatrixRow {
                train: *tag,
                train_size: ds.len(),
                on_o: Cell::from_values(mine.iter().map(|r| r.0).collect()),
                on_cf: Cell::from_values(mine.iter().map(|r| r.1).collect()),
            }
        })
        .collect();
    Ok(EvalMatrix {
        seeds: seeds.to_vec(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub term: String,
    pub occurrences: usize,
    /// Mean phi under the first model.
    pub phi_a: f64,
    /// Mean phi under the second model.
    pub phi_b: f64,
    pub delta: f64,
    /// Mean |phi| under each model.
    pub magnitude_a: f64,
    pub magnitude_b: f64,
    pub magnitude_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub rows: Vec<ProbeRow>,
    pub warnings: Vec<String>,
}

impl SensitivityReport {
    pub fn row(&self, term: &str) -> Option<&ProbeRow> {
        self.rows.iter().find(|r| r.term == term)
    }
}

impl fmt::Display for SensitivityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>5} {:>9} {:>9} {:>9} {:>9} {:>9}",
            "term", "n", "phi A", "phi B", "delta", "|phi| A", "|phi| B"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<16} {:>5} {:>9.4} {:>9.4} {:>+9.4} {:>9.4} {:>9.4}",
                r.term, r.occurrences, r.phi_a, r.phi_b, r.delta, r.magnitude_a, r.magnitude_b
            )?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Importance of each probe term under two models, averaged over its
/// occurrences (at most `max_occurrences` each, in document order) and
/// scored against each document's own label.
pub fn sensitivity_probe<A: Classifier + ?Sized, B: Classifier + ?Sized>(
    model_a: &A,
    model_b: &B,
    terms: &[String],
    docs: &LabeledDataset,
    sampler: &SamplerConfig,
    max_occurrences: usize,
) -> Result<SensitivityReport, AugmentError> {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let lowered: Vec<Vec<Vec<&str>>> = docs.documents.iter().map(|d| d.sentence_lowers()).collect();
    for term in terms {
        let needle = term.to_lowercase();
        let mut hits = Vec::new();
        'docs: for (di, sents) in lowered.iter().enumerate() {
            for (si, s) in sents.iter().enumerate() {
                for (ti, t) in s.iter().enumerate() {
                    if *t == needle {
                        hits.push((di, si, ti));
                        if hits.len() >= max_occurrences {
                            break 'docs;
                        }
                    }
                }
            }
        }
        if hits.is_empty() {
            warnings.push(format!("probe term {term:?} does not occur in {}", docs.name));
            continue;
        }
        let phis = hits
            .par_iter()
            .map(|&(di, si, ti)| -> Result<(f64, f64), AugmentError> {
                let doc = &docs.documents[di];
                let ct = CandidateTerm {
                    kind: TermKind::SentimentWord,
                    sentence: si,
                    start: ti,
                    end: ti + 1,
                    surface: needle.clone(),
                };
                let a = importance_in(model_a, &lowered[di], &doc.id, doc.label, &ct, sampler)?;
                let b = importance_in(model_b, &lowered[di], &doc.id, doc.label, &ct, sampler)?;
                Ok((a.phi, b.phi))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let n = phis.len() as f64;
        let mean = |f: &dyn Fn(&(f64, f64)) -> f64| phis.iter().map(f).sum::<f64>() / n;
        let (phi_a, phi_b) = (mean(&|p| p.0), mean(&|p| p.1));
        let (magnitude_a, magnitude_b) = (mean(&|p| p.0.abs()), mean(&|p| p.1.abs()));
        rows.push(ProbeRow {
            term: term.clone(),
            occurrences: phis.len(),
            phi_a,
            phi_b,
            delta: phi_b - phi_a,
            magnitude_a,
            magnitude_b,
            magnitude_delta: magnitude_b - magnitude_a,
        });
    }
    Ok(SensitivityReport { rows, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodRow {
    pub dataset: String,
    pub size: usize,
    pub accuracy: f64,
}

/// Accuracy of one model on each out-of-domain set, without re-training.
pub fn ood_evaluate<C: Classifier + ?Sized>(model: &C, sets: &[LabeledDataset]) -> Result<Vec<OodRow>, AugmentError> {
    sets.iter()
        .map(|ds| {
            Ok(OodRow {
                dataset: ds.name.clone(),
                size: ds.len(),
                accuracy: accuracy(model, ds)?,
            })
        })
        .collect()
}

/// OOD accuracies of several models side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodTable {
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    /// `accuracy[m][d]` for model `m` on dataset `d`.
    pub accuracy: Vec<Vec<f64>>,
}

impl OodTable {
    pub fn from_rows(models: Vec<(String, Vec<OodRow>)>) -> Self {
        let datasets = models.first().map(|(_, r)| r.iter().map(|x| x.dataset.clone()).collect()).unwrap_or_default();
        OodTable {
            datasets,
            accuracy: models.iter().map(|(_, r)| r.iter().map(|x| x.accuracy).collect()).collect(),
            models: models.into_iter().map(|(m, _)| m).collect(),
        }
    }
}

impl fmt::Display for OodTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<20}", "dataset")?;
        for m in &self.models {
            write!(f, " {m:>10}")?;
        }
        writeln!(f)?;
        for (d, name) in self.datasets.iter().enumerate() {
            write!(f, "{name:<20}")?;
            for row in &self.accuracy {
                write!(f, " {:>10.1}", 100.0 * row[d])?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub arm: String,
    pub train_size: usize,
    /// One cell per test set, in the order of `AblationReport::tests`.
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub threshold: f64,
    /// Counterfactuals added per arm.
    pub per_arm: usize,
    pub available_above: usize,
    pub available_below: usize,
    pub tests: Vec<String>,
    pub rows: Vec<AblationRow>,
    pub warnings: Vec<String>,
}

impl AblationReport {
    pub fn row(&self, arm: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.arm == arm)
    }
}

impl fmt::Display for AblationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<18} {:>6}", "arm", "size")?;
        for t in &self.tests {
            write!(f, " {t:>16}")?;
        }
        writeln!(f)?;
        for r in &self.rows {
            write!(f, "{:<18} {:>6}", r.arm, r.train_size)?;
            for c in &r.cells {
                write!(f, " {:>16}", c.to_string())?;
            }
            writeln!(f)?;
        }
        let mut s = format!(
            "threshold {} ({} above, {} below, {} per arm)",
            self.threshold, self.available_above, self.available_below, self.per_arm
        );
        for w in &self.warnings {
            let _ = write!(s, "\nwarning: {w}");
        }
        write!(f, "{s}")
    }
}

pub const ARM_ABOVE: &str = "cad_above";
pub const ARM_BELOW: &str = "cad_below";
pub const ARM_ORIGINAL: &str = "original";

/// Takes `n` picks alternating between source labels where possible, in
/// original order.
fn take_balanced<'a>(picks: &[&'a CounterfactualCandidate], n: usize) -> Vec<&'a CounterfactualCandidate> {
    let pos: Vec<_> = picks.iter().filter(|c| c.label == Label::Pos).copied().collect();
    let neg: Vec<_> = picks.iter().filter(|c| c.label == Label::Neg).copied().collect();
    let mut np = (n / 2).min(pos.len());
    let mut nn = (n - np).min(neg.len());
    np = (n - nn).min(pos.len());
    nn = nn.min(n - np);
    let chosen: HashSet<*const CounterfactualCandidate> = pos[..np].iter().chain(&neg[..nn]).map(|c| *c as *const _).collect();
    picks.iter().filter(|c| chosen.contains(&(**c as *const _))).copied().collect()
}

/// Compares augmentation with counterfactuals above versus below the
/// similarity threshold, at equal size, against originals alone.
///
/// `candidates` must be scored; unflipped ones are ignored.
pub fn threshold_ablation(
    originals: &LabeledDataset,
    candidates: &[CounterfactualCandidate],
    threshold: f64,
    config: &TrainerConfig,
    seeds: &[u64],
    tests: &[&LabeledDataset],
) -> Result<AblationReport, AugmentError> {
    let usable: Vec<CounterfactualCandidate> = candidates.iter().filter(|c| c.flipped && c.similarity.is_some()).cloned().collect();
    let (above, below): (Vec<_>, Vec<_>) = usable.into_iter().partition(|c| c.similarity.is_some_and(|s| s >= threshold));
    let above_picks = select(originals, &above)?;
    let below_picks = select(originals, &below)?;
    let n = above_picks.len().min(below_picks.len());
    let mut warnings = Vec::new();
    if n == 0 {
        warnings.push(format!(
            "no counterfactuals on one side of threshold {threshold}; both arms equal the original set"
        ));
    } else if below_picks.len() < above_picks.len() {
        warnings.push(format!(
            "only {} originals have a below-threshold counterfactual; both arms use {n}",
            below_picks.len()
        ));
    } else if above_picks.len() < below_picks.len() {
        warnings.push(format!(
            "only {} originals have an above-threshold counterfactual; both arms use {n}",
            above_picks.len()
        ));
    }
    let arm_above: Vec<CounterfactualCandidate> = take_balanced(&above_picks, n).into_iter().cloned().collect();
    let arm_below: Vec<CounterfactualCandidate> = take_balanced(&below_picks, n).into_iter().cloned().collect();
    let arms: Vec<(&str, LabeledDataset)> = vec![
        (ARM_ABOVE, assemble(originals, &arm_above)),
        (ARM_BELOW, assemble(originals, &arm_below)),
        (ARM_ORIGINAL, originals.clone()),
    ];
    let jobs: Vec<(usize, u64)> = (0..arms.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    let results = jobs
        .par_iter()
        .map(|&(i, seed)| -> Result<Vec<f64>, AugmentError> {
            let model = train(&arms[i].1, config, seed)?;
            tests.iter().map(|t| accuracy(&model, t).map_err(AugmentError::from)).collect()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows = arms
        .iter()
        .enumerate()
        .map(|(i, (arm, ds))| {
            let mine: Vec<&Vec<f64>> = jobs.iter().zip(&results).filter(|(j, _)| j.0 == i).map(|(_, r)| r).collect();
            AblationRow {
                arm: arm.to_string(),
                train_size: ds.len(),
                cells: (0..tests.len()).map(|t| Cell::from_values(mine.iter().map(|r| r[t]).collect())).collect(),
            }
        })
        .collect();
    Ok(AblationReport {
        threshold,
        per_arm: arm_above.len().min(arm_below.len()),
        available_above: above_picks.len(),
        available_below: below_picks.len(),
        tests: tests.iter().map(|t| t.name.clone()).collect(),
        rows,
        warnings,
    })
}

/// Median similarity of flipped, scored candidates.
pub fn median_similarity(candidates: &[CounterfactualCandidate]) -> Option<f64> {
    let mut s: Vec<f64> = candidates.iter().filter(|c| c.flipped).filter_map(|c| c.similarity).collect();
    if s.is_empty() {
        return None;
    }
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 { s[m] } else { (s[m - 1] + s[m]) / 2.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::LinearModel;

    fn originals() -> LabeledDataset {
        LabeledDataset::new(
            "o",
            vec![
                LabeledDocument::new("a", "A great film.", Label::Pos),
                LabeledDocument::new("b", "A bad film.", Label::Neg),
                LabeledDocument::new("c", "A fine film.", Label::Pos),
                LabeledDocument::new("d", "A dull film.", Label::Neg),
            ],
        )
        .unwrap()
    }

    fn cand(src: &str, method: Method, sim: f64, label: Label) -> CounterfactualCandidate {
        CounterfactualCandidate {
            source_id: src.into(),
            method,
            text: format!("{src} {method} {sim}"),
            label,
            flipped: true,
            edits: Vec::new(),
            similarity: Some(sim),
        }
    }

    fn no_seeds() -> BTreeMap<String, u64> {
        BTreeMap::new()
    }

    #[test]
    fn full_coverage_doubles_and_balances() {
        let o = originals();
        let acc: Vec<_> = o.documents.iter().map(|d| cand(&d.id, Method::RmCt, 0.8, d.label.flip())).collect();
        let ad = build_augmented(&o, &acc, &[], &AugmentPolicy::default(), Some(0.55), no_seeds()).unwrap();
        let ds = ad.to_dataset();
        assert_eq!(ds.len(), 2 * o.len());
        assert!(ds.is_balanced());
        assert_eq!(ad.manifest.covered, 4);
        assert!(ds.documents[4..].iter().all(|d| d.provenance == Provenance::MachineCf));
    }

    #[test]
    fn zero_accepted_is_a_coverage_error() {
        let o = originals();
        let rej = vec![CounterfactualCandidate {
            flipped: false,
            ..cand("a", Method::RmCt, 0.9, Label::Neg)
        }];
        match build_augmented(&o, &[], &rej, &AugmentPolicy::default(), None, no_seeds()) {
            Err(AugmentError::Coverage { covered: 0, breakdown, .. }) => {
                assert_eq!(breakdown.get("not_flipped"), Some(&1));
                assert_eq!(breakdown.get("no_candidate"), Some(&3));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rep_ct_wins_over_more_similar_rm_ct() {
        let o = originals();
        let acc = vec![cand("a", Method::RmCt, 0.9, Label::Neg), cand("a", Method::RepCt, 0.8, Label::Neg)];
        let policy = AugmentPolicy {
            balance: false,
            ..AugmentPolicy::default()
        };
        let ad = build_augmented(&o, &acc, &[], &policy, None, no_seeds()).unwrap();
        assert_eq!(ad.counterfactuals.len(), 1);
        assert_eq!(ad.counterfactuals[0].method, Method::RepCt);
    }

    #[test]
    fn ties_go_to_higher_similarity() {
        let o = originals();
        let acc = vec![cand("a", Method::RmCt, 0.6, Label::Neg), cand("a", Method::RmCt, 0.7, Label::Neg)];
        let policy = AugmentPolicy {
            balance: false,
            ..AugmentPolicy::default()
        };
        let ad = build_augmented(&o, &acc, &[], &policy, None, no_seeds()).unwrap();
        assert_eq!(ad.counterfactuals[0].similarity, Some(0.7));
    }

    #[test]
    fn balancing_drops_least_similar_majority() {
        let o = originals();
        let acc = vec![
            cand("a", Method::RmCt, 0.9, Label::Neg),
            cand("c", Method::RmCt, 0.6, Label::Neg),
            cand("b", Method::RmCt, 0.7, Label::Pos),
            cand("d", Method::RmCt, 0.8, Label::Pos),
        ];
        let ad = build_augmented(&o, &acc[..3], &[], &AugmentPolicy::default(), None, no_seeds()).unwrap();
        assert_eq!(ad.to_dataset().len(), 7);
        let ad = build_augmented(&o, &[acc[0].clone(), acc[1].clone()], &[], &AugmentPolicy::default(), None, no_seeds()).unwrap();
        assert_eq!(ad.manifest.dropped_for_balance, 1);
        assert_eq!(ad.counterfactuals[0].source_id, "a");
        assert!(ad.to_dataset().count(Label::Pos).abs_diff(ad.to_dataset().count(Label::Neg)) <= 1);
    }

    #[test]
    fn ungated_candidates_are_rejected() {
        let o = originals();
        let bad = CounterfactualCandidate {
            flipped: false,
            ..cand("a", Method::RmCt, 0.9, Label::Neg)
        };
        assert!(matches!(
            build_augmented(&o, &[bad], &[], &AugmentPolicy::default(), None, no_seeds()),
            Err(AugmentError::NotAccepted(_))
        ));
        let stray = cand("zz", Method::RmCt, 0.9, Label::Neg);
        assert!(matches!(
            build_augmented(&o, &[stray], &[], &AugmentPolicy::default(), None, no_seeds()),
            Err(AugmentError::UnknownSource(_))
        ));
    }

    #[test]
    fn manifest_rebuilds_identically_and_detects_tampering() {
        let o = originals();
        let acc: Vec<_> = o.documents.iter().map(|d| cand(&d.id, Method::RepCt, 0.7, d.label.flip())).collect();
        let mut seeds = BTreeMap::new();
        seeds.insert("sampler".to_string(), 7);
        let ad = build_augmented(&o, &acc, &[], &AugmentPolicy::default(), Some(0.55), seeds).unwrap();
        let json = serde_json::to_string(&ad.manifest).unwrap();
        let manifest: AugmentManifest = serde_json::from_str(&json).unwrap();
        let again = rebuild(&manifest, &o, &acc).unwrap();
        assert_eq!(again.to_dataset().to_jsonl_string(), ad.to_dataset().to_jsonl_string());
        let mut tampered = acc.clone();
        tampered[0].text.push('!');
        assert!(matches!(rebuild(&manifest, &o, &tampered), Err(AugmentError::Manifest(_))));
    }

    fn separable(name: &str) -> LabeledDataset {
        let docs = (0..20)
            .map(|i| {
                let (t, l) = if i % 2 == 0 { ("alpha", Label::Pos) } else { ("omega", Label::Neg) };
                LabeledDocument::new(format!("{name}{i}"), t, l)
            })
            .collect();
        LabeledDataset::new(name, docs).unwrap()
    }

    fn splits<'a>(o: &'a LabeledDataset) -> MatrixSplits<'a> {
        MatrixSplits {
            o: Some(o),
            cf: Some(o),
            c: Some(o),
            ac: Some(o),
            test_o: Some(o),
            test_cf: Some(o),
        }
    }

    #[test]
    fn separable_fixture_scores_perfectly() {
        let ds = separable("s");
        let m = evaluate_matrix(&TrainerConfig::default(), &splits(&ds), &[1, 2, 3, 4, 5]).unwrap();
        for r in &m.rows {
            assert_eq!(r.on_o.mean, 1.0);
            assert_eq!(r.on_o.runs, 5);
            assert_eq!(r.on_o.std, 0.0);
        }
        assert!(m.to_string().contains("100.0"));
    }

    #[test]
    fn missing_split_is_an_error() {
        let ds = separable("s");
        let mut s = splits(&ds);
        s.ac = None;
        match evaluate_matrix(&TrainerConfig::default(), &s, &[0]) {
            Err(AugmentError::MissingSplit(name)) => assert_eq!(name, "train AC"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn identical_models_have_zero_delta() {
        let m = LinearModel::unigram(&[("good", 2.0), ("film", 0.5)], 0.0);
        let ds = LabeledDataset::new("p", vec![LabeledDocument::new("x", "A good film.", Label::Pos)]).unwrap();
        let r = sensitivity_probe(&m, &m, &["film".into(), "good".into(), "absent".into()], &ds, &SamplerConfig::default(), 10).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert!(r.rows.iter().all(|x| x.delta == 0.0 && x.magnitude_delta == 0.0));
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn empty_ood_registry_gives_empty_table() {
        let m = LinearModel::unigram(&[("good", 1.0)], 0.0);
        assert!(ood_evaluate(&m, &[]).unwrap().is_empty());
    }

    #[test]
    fn threshold_zero_puts_everything_above() {
        let o = originals();
        let acc: Vec<_> = o.documents.iter().map(|d| cand(&d.id, Method::RmCt, 0.3, d.label.flip())).collect();
        let r = threshold_ablation(&o, &acc, 0.0, &TrainerConfig::default(), &[0], &[&o]).unwrap();
        assert_eq!((r.available_above, r.available_below, r.per_arm), (4, 0, 0));
        assert_eq!(r.warnings.len(), 1);
        assert_eq!(r.row(ARM_ABOVE).unwrap().train_size, o.len());
        let (above, below): (Vec<_>, Vec<_>) = acc.iter().partition(|c| c.similarity.unwrap() >= 0.0);
        assert_eq!((above.len(), below.len()), (4, 0));
    }

    #[test]
    fn ablation_equalizes_arms_and_warns() {
        let o = originals();
        let mut cands: Vec<_> = o.documents.iter().map(|d| cand(&d.id, Method::RmCt, 0.9, d.label.flip())).collect();
        cands.push(cand("a", Method::RepCt, 0.2, Label::Neg));
        cands.push(cand("b", Method::RepCt, 0.2, Label::Pos));
        let r = threshold_ablation(&o, &cands, 0.5, &TrainerConfig::default(), &[0, 1], &[&o]).unwrap();
        assert_eq!(r.per_arm, 2);
        assert_eq!(r.row(ARM_ABOVE).unwrap().train_size, r.row(ARM_BELOW).unwrap().train_size);
        assert_eq!(r.row(ARM_ORIGINAL).unwrap().train_size, 4);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn median_of_flipped_scores() {
        let cs = vec![
            cand("a", Method::RmCt, 0.2, Label::Neg),
            cand("b", Method::RmCt, 0.4, Label::Pos),
            cand("c", Method::RmCt, 0.9, Label::Neg),
        ];
        assert_eq!(median_similarity(&cs), Some(0.4));
        assert_eq!(median_similarity(&[]), None);
    }
}
