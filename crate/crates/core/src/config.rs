//! Declarative pipeline configuration: a TOML file with dotted sections,
//! command-line overrides of the form `section.key=value`, and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attribution::{SampleCount, SamplerConfig};
use crate::augment_eval::AugmentPolicy;
use crate::classifier::TrainerConfig;
use crate::filter::FilterConfig;
use crate::generator::GeneratorConfig;
use crate::proposer::{Backend, ProposerConfig};

/// Environment variable that overrides `proposer.endpoint`.
pub const ENDPOINT_ENV: &str = "CADGEN_PROPOSER_ENDPOINT";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid override {0:?}: expected section.key=value")]
    Override(String),
    #[error("invalid value for {field}: {message}")]
    Invalid { field: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub train: PathBuf,
    pub train_cf: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub test_cf: Option<PathBuf>,
    pub lexicon_positive: PathBuf,
    pub lexicon_negative: PathBuf,
    pub antonyms: PathBuf,
    pub embeddings: Option<PathBuf>,
    /// Where `train` writes and later stages read the classifier.
    pub model: Option<PathBuf>,
    pub ood: Vec<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            train: "data/imdb/train.jsonl".into(),
            train_cf: Some("data/imdb/train_cf.jsonl".into()),
            test: Some("data/imdb/test.jsonl".into()),
            test_cf: Some("data/imdb/test_cf.jsonl".into()),
            lexicon_positive: "data/lexicon/positive-words.txt".into(),
            lexicon_negative: "data/lexicon/negative-words.txt".into(),
            antonyms: "data/lexicon/antonyms.txt".into(),
            embeddings: Some("data/embeddings/glove-6b-100d-subset.txt".into()),
            model: None,
            ood: vec![
                "data/ood/products.jsonl".into(),
                "data/ood/restaurants.jsonl".into(),
                "data/ood/posts.jsonl".into(),
            ],
            output_dir: "out".into(),
        }
    }
}

impl Paths {
    /// The checkpoint path, defaulting to `model.bin` under the output
    /// directory.
    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.output_dir.join("model.bin"))
    }
}

/// Ablation threshold: a fixed value or the median candidate similarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AblationThreshold {
    Fixed(f64),
    Median,
}

impl Serialize for AblationThreshold {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            AblationThreshold::Fixed(t) => s.serialize_f64(*t),
            AblationThreshold::Median => s.serialize_str("median"),
        }
    }
}

impl<'de> Deserialize<'de> for AblationThreshold {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(t) => Ok(AblationThreshold::Fixed(t)),
            Raw::Text(s) if s == "median" => Ok(AblationThreshold::Median),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("expected a number or \"median\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Training seeds; each matrix cell averages one run per seed.
    pub seeds: Vec<u64>,
    pub probe_terms: Vec<String>,
    pub probe_max_occurrences: usize,
    pub ablation_threshold: AblationThreshold,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            seeds: vec![0, 1, 2, 3, 4],
            probe_terms: vec!["superb".into(), "film".into()],
            probe_max_occurrences: 200,
            ablation_threshold: AblationThreshold::Fixed(0.55),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed of the classifier that drives attribution and generation.
    pub seed: u64,
    pub paths: Paths,
    pub sampler: SamplerConfig,
    pub proposer: ProposerConfig,
    pub generator: GeneratorConfig,
    pub filter: FilterConfig,
    pub trainer: TrainerConfig,
    pub augment: AugmentPolicy,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            paths: Paths::default(),
            sampler: SamplerConfig::default(),
            proposer: ProposerConfig::default(),
            generator: GeneratorConfig::default(),
            filter: FilterConfig::default(),
            trainer: TrainerConfig::default(),
            augment: AugmentPolicy::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    // anything that is not a TOML literal is taken as a bare string
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key just parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `section.key=value` to a parsed TOML table.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let bad = || ConfigError::Override(spec.to_string());
    let (key, raw) = spec.split_once('=').ok_or_else(bad)?;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad());
    }
    let (last, sections) = parts.split_last().ok_or_else(bad)?;
    let mut cur = table;
    for s in sections {
        let entry = cur.entry(s.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(bad)?;
    }
    cur.insert(last.to_string(), parse_scalar(raw));
    Ok(())
}

impl PipelineConfig {
    /// Parses TOML text, then applies overrides in order.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let text = toml::to_string(&table).map_err(|e| ConfigError::Parse(e.to_string()))?;
        toml::from_str(&text).map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))
    }

    /// Loads a config file, or the defaults when `path` is `None`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError::Io {
                path: p.display().to_string(),
                source: e,
            })?,
            None => String::new(),
        };
        let mut cfg = Self::from_toml(&text, overrides)?;
        if let Ok(endpoint) = std::env::var(ENDPOINT_ENV) {
            if !endpoint.is_empty() {
                cfg.proposer.endpoint = Some(endpoint);
            }
        }
        Ok(cfg)
    }

    /// Fully resolved config with defaults expanded.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks value ranges and that referenced input files exist.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |field: &str, message: String| ConfigError::Invalid {
            field: field.to_string(),
            message,
        };
        if !(self.sampler.keep_prob > 0.0 && self.sampler.keep_prob <= 1.0) {
            return Err(invalid("sampler.keep_prob", format!("{} is not in (0, 1]", self.sampler.keep_prob)));
        }
        if self.sampler.num_samples == SampleCount::Fixed(0) {
            return Err(invalid("sampler.num_samples", "must be at least 1".into()));
        }
        if self.proposer.k == 0 {
            return Err(invalid("proposer.k", "must be at least 1".into()));
        }
        if self.proposer.backend == Backend::Remote && self.proposer.endpoint.is_none() {
            return Err(invalid("proposer.endpoint", format!("required by the remote back-end (or set {ENDPOINT_ENV})")));
        }
        if !(0.0..=1.0).contains(&self.filter.threshold) {
            return Err(invalid("filter.threshold", format!("{} is not in [0, 1]", self.filter.threshold)));
        }
        if !(self.generator.edit_cap > 0.0 && self.generator.edit_cap <= 1.0) {
            return Err(invalid("generator.edit_cap", format!("{} is not in (0, 1]", self.generator.edit_cap)));
        }
        if !(0.0..=1.0).contains(&self.augment.min_coverage) {
            return Err(invalid("augment.min_coverage", format!("{} is not in [0, 1]", self.augment.min_coverage)));
        }
        if self.trainer.epochs == 0 {
            return Err(invalid("trainer.epochs", "must be at least 1".into()));
        }
        if self.eval.seeds.is_empty() {
            return Err(invalid("eval.seeds", "needs at least one seed".into()));
        }
        if let AblationThreshold::Fixed(t) = self.eval.ablation_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(invalid("eval.ablation_threshold", format!("{t} is not in [0, 1]")));
            }
        }
        let p = &self.paths;
        let required = [
            ("paths.train", Some(&p.train)),
            ("paths.lexicon_positive", Some(&p.lexicon_positive)),
            ("paths.lexicon_negative", Some(&p.lexicon_negative)),
            ("paths.antonyms", Some(&p.antonyms)),
            ("paths.train_cf", p.train_cf.as_ref()),
            ("paths.test", p.test.as_ref()),
            ("paths.test_cf", p.test_cf.as_ref()),
            ("paths.embeddings", p.embeddings.as_ref()),
        ];
        for (field, path) in required {
            if let Some(path) = path {
                if !path.is_file() {
                    return Err(invalid(field, format!("{} does not exist", path.display())));
                }
            }
        }
        for (i, path) in p.ood.iter().enumerate() {
            if !path.is_file() {
                return Err(invalid(&format!("paths.ood[{i}]"), format!("{} does not exist", path.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_documented_defaults() {
        let c = PipelineConfig::from_toml("", &[]).unwrap();
        assert_eq!(c.proposer.k, 100);
        assert_eq!(c.filter.threshold, 0.55);
        assert_eq!(c.sampler.num_samples, SampleCount::Fixed(32));
        assert_eq!(c.sampler.keep_prob, 0.7);
        assert_eq!(c.eval.seeds.len(), 5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = PipelineConfig::from_toml("[filter]\nthreshhold = 0.5\n", &[]).unwrap_err();
        assert!(err.to_string().contains("threshhold"), "{err}");
        let err = PipelineConfig::from_toml("", &["nosuch.key=1".into()]).unwrap_err();
        assert!(err.to_string().contains("nosuch"), "{err}");
    }

    #[test]
    fn overrides_round_trip_through_resolved_config() {
        let c = PipelineConfig::from_toml(
            "[filter]\nthreshold = 0.4\n",
            &[
                "filter.threshold=0.55".into(),
                "proposer.backend=antonym".into(),
                "sampler.num_samples=exact".into(),
                "paths.output_dir=/tmp/x".into(),
                "eval.seeds=[3, 4]".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.filter.threshold, 0.55);
        assert_eq!(c.proposer.backend, Backend::Antonym);
        assert_eq!(c.sampler.num_samples, SampleCount::Exact);
        assert_eq!(c.eval.seeds, vec![3, 4]);
        let again = PipelineConfig::from_toml(&c.to_toml(), &[]).unwrap();
        assert_eq!(again, c);
        assert!(c.to_toml().contains("threshold = 0.55"));
    }

    #[test]
    fn ablation_threshold_accepts_median() {
        let c = PipelineConfig::from_toml("[eval]\nablation_threshold = \"median\"\n", &[]).unwrap();
        assert_eq!(c.eval.ablation_threshold, AblationThreshold::Median);
        assert!(PipelineConfig::from_toml("[eval]\nablation_threshold = \"mean\"\n", &[]).is_err());
    }

    #[test]
    fn malformed_override_is_rejected() {
        assert!(matches!(
            PipelineConfig::from_toml("", &["filter.threshold".into()]),
            Err(ConfigError::Override(_))
        ));
        assert!(matches!(PipelineConfig::from_toml("", &[".x=1".into()]), Err(ConfigError::Override(_))));
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = PipelineConfig::default();
        c.paths.lexicon_positive = "/nonexistent/pos.txt".into();
        c.paths.train = std::env::current_exe().unwrap();
        c.paths.train_cf = None;
        c.paths.test = None;
        c.paths.test_cf = None;
        c.paths.embeddings = None;
        c.paths.ood.clear();
        match c.validate() {
            Err(ConfigError::Invalid { field, .. }) => assert_eq!(field, "paths.lexicon_positive"),
            other => panic!("{other:?}"),
        }
        c.filter.threshold = 1.5;
        match c.validate() {
            Err(ConfigError::Invalid { field, .. }) => assert_eq!(field, "filter.threshold"),
            other => panic!("{other:?}"),
        }
    }
}
