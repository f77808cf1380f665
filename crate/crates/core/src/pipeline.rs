//! Pipeline stages over a [`PipelineConfig`], each reading and writing
//! fixed artifact names under the output directory.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::attribution::{attribute_all, TermImportance};
use crate::augment_eval::{
    build_augmented, combine, evaluate_matrix, median_similarity, ood_evaluate, sensitivity_probe, threshold_ablation,
    AblationReport, AugmentManifest, EvalMatrix, MatrixSplits, OodTable, SensitivityReport,
};
use crate::classifier::{load_model, save_model, train, LinearModel};
use crate::config::{AblationThreshold, ConfigError, PipelineConfig};
use crate::corpus::{load_dataset, load_embeddings, load_lexicon, write_dataset, EmbeddingTable, Label, LabeledDataset, PolarityLexicon};
use crate::filter::{gate, histogram, score_candidates};
use crate::generator::{generate_all, CounterfactualCandidate, GenerationContext, GenerationReport};
use crate::proposer::build_proposer;

pub const CONFIG_ECHO: &str = "config.resolved.toml";
pub const ATTRIBUTIONS: &str = "attributions.jsonl";
pub const CANDIDATES: &str = "candidates.jsonl";
pub const GENERATION_REPORT: &str = "generation.txt";
pub const ACCEPTED: &str = "accepted.jsonl";
pub const REJECTED: &str = "rejected.jsonl";
pub const HISTOGRAM: &str = "similarity.txt";
pub const AUGMENTED: &str = "augmented.jsonl";
pub const MANIFEST: &str = "augment_manifest.json";
pub const AC_MODEL: &str = "model_ac.bin";
pub const MATRIX: &str = "matrix";
pub const PROBE: &str = "probe";
pub const OOD: &str = "ood";
pub const ABLATION: &str = "ablation";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Train,
    Attribute,
    Generate,
    Filter,
    Augment,
    EvalMatrix,
    Probe,
    Ood,
    Ablate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Train => "train",
            Stage::Attribute => "attribute",
            Stage::Generate => "generate",
            Stage::Filter => "filter",
            Stage::Augment => "augment",
            Stage::EvalMatrix => "eval-matrix",
            Stage::Probe => "probe",
            Stage::Ood => "ood",
            Stage::Ablate => "ablate",
        })
    }
}

/// Whether a failure stems from bad input (exit 1) or from running (exit 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Runtime,
}

#[derive(Debug, thiserror::Error)]
#[error("{stage}: {input}: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    /// The file or config field the failure concerns.
    pub input: String,
    pub kind: ErrorKind,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation => 1,
            ErrorKind::Runtime => 2,
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

fn runtime<E: std::error::Error + Send + Sync + 'static>(stage: Stage, input: impl fmt::Display) -> impl FnOnce(E) -> PipelineError {
    let input = input.to_string();
    move |e| PipelineError {
        stage,
        input,
        kind: ErrorKind::Runtime,
        source: Box::new(e),
    }
}

fn validation<E: std::error::Error + Send + Sync + 'static>(stage: Stage, input: impl fmt::Display) -> impl FnOnce(E) -> PipelineError {
    let input = input.to_string();
    move |e| PipelineError {
        stage,
        input,
        kind: ErrorKind::Validation,
        source: Box::new(e),
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Message(String);

/// Wraps a config error, naming the offending field where known.
pub fn config_error(e: ConfigError) -> PipelineError {
    let input = match &e {
        ConfigError::Invalid { field, .. } => field.clone(),
        ConfigError::Io { path, .. } => path.clone(),
        _ => "config".into(),
    };
    PipelineError {
        stage: Stage::Config,
        input,
        kind: ErrorKind::Validation,
        source: Box::new(e),
    }
}

/// Config, loaded resources and the output directory of one run.
pub struct Run {
    pub config: PipelineConfig,
    pub out: PathBuf,
}

impl Run {
    /// Validates the config, creates the output directory and writes the
    /// resolved config next to the outputs.
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate().map_err(config_error)?;
        let out = config.paths.output_dir.clone();
        fs::create_dir_all(&out).map_err(runtime(Stage::Config, out.display()))?;
        let run = Run { config, out };
        run.write(Stage::Config, CONFIG_ECHO, run.config.to_toml().as_bytes())?;
        Ok(run)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, stage: Stage, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(runtime(stage, p.display()))?;
        Ok(p)
    }

    fn write_report<T: Serialize + fmt::Display>(&self, stage: Stage, stem: &str, report: &T) -> Result<()> {
        let json = serde_json::to_string_pretty(report).expect("reports serialize");
        self.write(stage, &format!("{stem}.json"), format!("{json}\n").as_bytes())?;
        self.write(stage, &format!("{stem}.txt"), format!("{report}\n").as_bytes())?;
        Ok(())
    }

    fn dataset(&self, stage: Stage, path: &Path) -> Result<LabeledDataset> {
        load_dataset(path).map_err(validation(stage, path.display()))
    }

    fn optional(&self, stage: Stage, field: &str, path: &Option<PathBuf>) -> Result<LabeledDataset> {
        match path {
            Some(p) => self.dataset(stage, p),
            None => Err(validation(stage, field)(Message("not configured".into()))),
        }
    }

    fn lexicon(&self, stage: Stage) -> Result<PolarityLexicon> {
        let p = &self.config.paths;
        load_lexicon(&p.lexicon_positive, &p.lexicon_negative, &p.antonyms).map_err(validation(stage, "paths.lexicon_*"))
    }

    /// Embedding table with IDF fitted on the training set.
    fn embeddings(&self, stage: Stage, train: &LabeledDataset) -> Result<Option<EmbeddingTable>> {
        match &self.config.paths.embeddings {
            Some(p) => {
                let mut e = load_embeddings(p).map_err(validation(stage, p.display()))?;
                e.fit_idf(train);
                Ok(Some(e))
            }
            None => Ok(None),
        }
    }

    fn require_embeddings(&self, stage: Stage, train: &LabeledDataset) -> Result<EmbeddingTable> {
        self.embeddings(stage, train)?
            .ok_or_else(|| validation(stage, "paths.embeddings")(Message("an embedding table is required".into())))
    }

    fn model(&self, stage: Stage) -> Result<LinearModel> {
        let p = self.config.paths.model_path();
        load_model(&p).map_err(validation(stage, p.display()))
    }

    fn read_candidates(&self, stage: Stage, name: &str) -> Result<Vec<CounterfactualCandidate>> {
        read_candidates(&self.path(name)).map_err(|e| PipelineError { stage, ..e })
    }

    fn write_candidates(&self, stage: Stage, name: &str, cands: &[CounterfactualCandidate]) -> Result<()> {
        let p = self.path(name);
        write_candidates(&p, cands).map_err(runtime(stage, p.display()))
    }

    pub fn train(&self) -> Result<LinearModel> {
        let train_set = self.dataset(Stage::Train, &self.config.paths.train)?;
        let model = train(&train_set, &self.config.trainer, self.config.seed).map_err(runtime(Stage::Train, train_set.name.as_str()))?;
        let p = self.config.paths.model_path();
        save_model(&model, &p).map_err(runtime(Stage::Train, p.display()))?;
        log::info!("trained on {} documents, train accuracy {:.4}", train_set.len(), model.train_accuracy());
        Ok(model)
    }

    pub fn attribute(&self) -> Result<usize> {
        let model = self.model(Stage::Attribute)?;
        let lex = self.lexicon(Stage::Attribute)?;
        let train_set = self.dataset(Stage::Attribute, &self.config.paths.train)?;
        let all = attribute_all(&model, &train_set.documents, &lex, &self.config.sampler)
            .map_err(runtime(Stage::Attribute, train_set.name.as_str()))?;
        let mut buf = Vec::new();
        let mut n = 0;
        for (doc, terms) in train_set.documents.iter().zip(all) {
            n += terms.len();
            let rec = AttributionRecord {
                id: doc.id.clone(),
                label: doc.label,
                terms,
            };
            serde_json::to_writer(&mut buf, &rec).expect("records serialize");
            buf.push(b'\n');
        }
        self.write(Stage::Attribute, ATTRIBUTIONS, &buf)?;
        Ok(n)
    }

    pub fn generate(&self) -> Result<GenerationReport> {
        let stage = Stage::Generate;
        let model = self.model(stage)?;
        let lex = self.lexicon(stage)?;
        let train_set = self.dataset(stage, &self.config.paths.train)?;
        let emb = self.embeddings(stage, &train_set)?;
        let idf = Arc::new(crate::corpus::fit_idf(&train_set));
        let emb_arc = emb.clone().map(Arc::new);
        let proposer = build_proposer(&self.config.proposer, Arc::new(lex.clone()), emb_arc, idf)
            .map_err(validation(stage, "proposer"))?;
        let ctx = GenerationContext {
            model: &model,
            lexicon: &lex,
            proposer: proposer.as_ref(),
            embeddings: emb.as_ref(),
            k: self.config.proposer.k,
            sampler: &self.config.sampler,
            config: &self.config.generator,
        };
        let outcomes = generate_all(&ctx, &train_set.documents);
        let report = GenerationReport::from_outcomes(&outcomes);
        let cands: Vec<CounterfactualCandidate> = outcomes.into_iter().flat_map(|o| o.candidates).collect();
        self.write_candidates(stage, CANDIDATES, &cands)?;
        self.write(stage, GENERATION_REPORT, format!("{report}\n").as_bytes())?;
        Ok(report)
    }

    pub fn filter(&self) -> Result<(usize, usize)> {
        let stage = Stage::Filter;
        let mut cands = self.read_candidates(stage, CANDIDATES)?;
        let train_set = self.dataset(stage, &self.config.paths.train)?;
        let emb = self.require_embeddings(stage, &train_set)?;
        score_candidates(&mut cands, &train_set, &emb).map_err(runtime(stage, CANDIDATES))?;
        let (flipped, unflipped): (Vec<_>, Vec<_>) = cands.into_iter().partition(|c| c.flipped);
        let scores: Vec<f64> = flipped.iter().filter_map(|c| c.similarity).collect();
        let (accepted, mut rejected) = gate(flipped, self.config.filter.threshold);
        rejected.extend(unflipped);
        rejected.sort_by(|a, b| a.source_id.cmp(&b.source_id).then(a.method.cmp(&b.method)));
        self.write_candidates(stage, ACCEPTED, &accepted)?;
        self.write_candidates(stage, REJECTED, &rejected)?;
        self.write(stage, HISTOGRAM, histogram(&scores, 20, self.config.filter.threshold).as_bytes())?;
        Ok((accepted.len(), rejected.len()))
    }

    pub fn augment(&self) -> Result<AugmentManifest> {
        let stage = Stage::Augment;
        let accepted = self.read_candidates(stage, ACCEPTED)?;
        let rejected = self.read_candidates(stage, REJECTED)?;
        let train_set = self.dataset(stage, &self.config.paths.train)?;
        let mut seeds = BTreeMap::new();
        seeds.insert("classifier".to_string(), self.config.seed);
        seeds.insert("sampler".to_string(), self.config.sampler.seed);
        let ad = build_augmented(
            &train_set,
            &accepted,
            &rejected,
            &self.config.augment,
            Some(self.config.filter.threshold),
            seeds,
        )
        .map_err(runtime(stage, ACCEPTED))?;
        let p = self.path(AUGMENTED);
        write_dataset(&ad.to_dataset(), &p).map_err(runtime(stage, p.display()))?;
        let json = serde_json::to_string_pretty(&ad.manifest).expect("manifest serializes");
        self.write(stage, MANIFEST, format!("{json}\n").as_bytes())?;
        Ok(ad.manifest)
    }

    fn augmented(&self, stage: Stage) -> Result<LabeledDataset> {
        self.dataset(stage, &self.path(AUGMENTED))
    }

    pub fn eval_matrix(&self) -> Result<EvalMatrix> {
        let stage = Stage::EvalMatrix;
        let p = &self.config.paths;
        let o = self.dataset(stage, &p.train)?;
        let cf = self.optional(stage, "paths.train_cf", &p.train_cf)?;
        let test_o = self.optional(stage, "paths.test", &p.test)?;
        let test_cf = self.optional(stage, "paths.test_cf", &p.test_cf)?;
        let ac = self.augmented(stage)?;
        let c = combine("c", &o, &cf).map_err(validation(stage, "paths.train_cf"))?;
        let splits = MatrixSplits {
            o: Some(&o),
            cf: Some(&cf),
            c: Some(&c),
            ac: Some(&ac),
            test_o: Some(&test_o),
            test_cf: Some(&test_cf),
        };
        let m = evaluate_matrix(&self.config.trainer, &splits, &self.config.eval.seeds).map_err(runtime(stage, "matrix"))?;
        self.write_report(stage, MATRIX, &m)?;
        Ok(m)
    }

    /// Model trained on the augmented set with the run seed.
    fn ac_model(&self, stage: Stage) -> Result<LinearModel> {
        let ac = self.augmented(stage)?;
        let model = train(&ac, &self.config.trainer, self.config.seed).map_err(runtime(stage, AUGMENTED))?;
        let p = self.path(AC_MODEL);
        save_model(&model, &p).map_err(runtime(stage, p.display()))?;
        Ok(model)
    }

    pub fn probe(&self) -> Result<SensitivityReport> {
        let stage = Stage::Probe;
        let a = self.model(stage)?;
        let b = self.ac_model(stage)?;
        let docs = match &self.config.paths.test {
            Some(t) => self.dataset(stage, t)?,
            None => self.dataset(stage, &self.config.paths.train)?,
        };
        let r = sensitivity_probe(
            &a,
            &b,
            &self.config.eval.probe_terms,
            &docs,
            &self.config.sampler,
            self.config.eval.probe_max_occurrences,
        )
        .map_err(runtime(stage, docs.name.as_str()))?;
        for w in &r.warnings {
            log::warn!("{w}");
        }
        self.write_report(stage, PROBE, &r)?;
        Ok(r)
    }

    pub fn ood(&self) -> Result<OodTable> {
        let stage = Stage::Ood;
        let o = self.model(stage)?;
        let ac = self.ac_model(stage)?;
        let sets = self
            .config
            .paths
            .ood
            .iter()
            .map(|p| self.dataset(stage, p))
            .collect::<Result<Vec<_>>>()?;
        for s in &sets {
            if !s.is_balanced() {
                log::warn!("OOD set {} is not balanced", s.name);
            }
        }
        let rows_o = ood_evaluate(&o, &sets).map_err(runtime(stage, "paths.ood"))?;
        let rows_ac = ood_evaluate(&ac, &sets).map_err(runtime(stage, "paths.ood"))?;
        let t = OodTable::from_rows(vec![("O".into(), rows_o), ("AC".into(), rows_ac)]);
        self.write_report(stage, OOD, &t)?;
        Ok(t)
    }

    pub fn ablate(&self) -> Result<AblationReport> {
        let stage = Stage::Ablate;
        let mut cands = self.read_candidates(stage, ACCEPTED)?;
        cands.extend(self.read_candidates(stage, REJECTED)?);
        let originals = self.dataset(stage, &self.config.paths.train)?;
        let threshold = match self.config.eval.ablation_threshold {
            AblationThreshold::Fixed(t) => t,
            AblationThreshold::Median => median_similarity(&cands)
                .ok_or_else(|| runtime(stage, REJECTED)(Message("no scored candidates".into())))?,
        };
        let mut tests = Vec::new();
        if let Some(p) = &self.config.paths.test {
            tests.push(self.dataset(stage, p)?);
        }
        if let Some(p) = &self.config.paths.test_cf {
            tests.push(self.dataset(stage, p)?);
        }
        for p in &self.config.paths.ood {
            tests.push(self.dataset(stage, p)?);
        }
        let refs: Vec<&LabeledDataset> = tests.iter().collect();
        let r = threshold_ablation(&originals, &cands, threshold, &self.config.trainer, &self.config.eval.seeds, &refs)
            .map_err(runtime(stage, "candidates"))?;
        for w in &r.warnings {
            log::warn!("{w}");
        }
        self.write_report(stage, ABLATION, &r)?;
        Ok(r)
    }

    /// train, attribute, generate, filter, augment, eval-matrix.
    pub fn pipeline(&self) -> Result<EvalMatrix> {
        self.train()?;
        self.attribute()?;
        let report = self.generate()?;
        log::info!("generation:\n{report}");
        let (acc, rej) = self.filter()?;
        log::info!("filter: {acc} accepted, {rej} rejected");
        let manifest = self.augment()?;
        log::info!("augment: {} of {} originals covered", manifest.covered, manifest.originals.count);
        self.eval_matrix()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct AttributionRecord {
    id: String,
    label: Label,
    terms: Vec<TermImportance>,
}

pub fn write_candidates(path: &Path, cands: &[CounterfactualCandidate]) -> std::io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for c in cands {
        serde_json::to_writer(&mut out, c)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_candidates(path: &Path) -> Result<Vec<CounterfactualCandidate>> {
    let file = fs::File::open(path).map_err(validation(Stage::Config, path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(runtime(Stage::Config, path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let c = serde_json::from_str(&line).map_err(validation(Stage::Config, format!("{}:{}", path.display(), i + 1)))?;
        out.push(c);
    }
    Ok(out)
}
