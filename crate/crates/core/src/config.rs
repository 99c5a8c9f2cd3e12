//! Pipeline configuration: a flat TOML file whose keys can each be
//! overridden from the command line.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::InputFormat;
use crate::domset::DegreeMode;
use crate::entities::{RecognizerConfig, ServiceConfig};
use crate::error::{Error, Result};
use crate::qgen::{StyleSelection, WhTemplate, DEFAULT_MASK_TOKEN};
use crate::retrieval::RetrievalConstraints;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecognizerKind {
    #[default]
    Builtin,
    Sidecar,
    Service,
}

/// Which sentences an entity key links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphScope {
    /// Sentences anywhere in the corpus sharing a key.
    #[default]
    Corpus,
    /// Only sentences of the same document.
    Document,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Vec<PathBuf>,
    pub format: InputFormat,
    pub dataset_id: Option<String>,
    pub dedup_contexts: bool,
    pub abbreviations: Option<PathBuf>,

    pub recognizer: RecognizerKind,
    pub gazetteer: Vec<PathBuf>,
    pub mentions: Option<PathBuf>,
    pub service_url: Option<String>,
    pub service_timeout_ms: u64,
    pub service_batch_size: usize,
    pub service_max_in_flight: usize,
    pub service_attempts: u32,

    pub stoplist: Option<PathBuf>,
    pub graph_scope: GraphScope,
    pub degree_mode: DegreeMode,

    pub retrieval: bool,
    pub support: Vec<PathBuf>,
    pub support_format: InputFormat,
    pub support_mentions: Option<PathBuf>,
    pub support_index: Option<PathBuf>,
    pub require_answer_entity: bool,
    pub exclude_source_context: bool,
    pub min_extra_shared_entities: usize,
    pub top_k: usize,

    pub style: StyleSelection,
    pub wh_template: WhTemplate,
    pub priors: Option<PathBuf>,
    pub mask_token: String,
    pub lambda: f64,
    pub seed: u64,

    pub out: PathBuf,
    pub timings: bool,
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let retrieval = RetrievalConstraints::default();
        PipelineConfig {
            inputs: Vec::new(),
            format: InputFormat::PlainText,
            dataset_id: None,
            dedup_contexts: false,
            abbreviations: None,
            recognizer: RecognizerKind::Builtin,
            gazetteer: Vec::new(),
            mentions: None,
            service_url: None,
            service_timeout_ms: 10_000,
            service_batch_size: 64,
            service_max_in_flight: 4,
            service_attempts: 3,
            stoplist: None,
            graph_scope: GraphScope::Corpus,
            degree_mode: DegreeMode::Residual,
            retrieval: false,
            support: Vec::new(),
            support_format: InputFormat::PlainText,
            support_mentions: None,
            support_index: None,
            require_answer_entity: retrieval.require_answer_entity,
            exclude_source_context: retrieval.exclude_source_context,
            min_extra_shared_entities: retrieval.min_extra_shared_entities,
            top_k: retrieval.top_k,
            style: StyleSelection::Wh,
            wh_template: WhTemplate::WhBA,
            priors: None,
            mask_token: DEFAULT_MASK_TOKEN.to_string(),
            lambda: 1.0,
            seed: 0,
            out: PathBuf::from("out"),
            timings: true,
            workers: None,
        }
    }
}

/// Every key, with a one-line description.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("inputs", "input files or directories (comma-separated on the command line)"),
    ("format", "input format: plain_text or mrqa_jsonl"),
    ("dataset_id", "dataset id recorded on every document"),
    ("dedup_contexts", "drop documents whose text repeats an earlier one"),
    ("abbreviations", "file of abbreviations that do not end a sentence"),
    ("recognizer", "entity recognizer: builtin, sidecar or service"),
    ("gazetteer", "TSV gazetteer files for the builtin recognizer"),
    ("mentions", "precomputed mention file for the sidecar recognizer"),
    ("service_url", "endpoint of the recognizer service"),
    ("service_timeout_ms", "per-request timeout for the recognizer service"),
    ("service_batch_size", "sentences per service request"),
    ("service_max_in_flight", "concurrent service requests"),
    ("service_attempts", "attempts per service request"),
    ("stoplist", "entity keys to ignore when linking sentences"),
    ("graph_scope", "corpus or document"),
    ("degree_mode", "greedy priority: residual or static"),
    ("retrieval", "retrieve support sentences as question sources"),
    ("support", "support corpus files or directories (default: the inputs)"),
    ("support_format", "support corpus format: plain_text or mrqa_jsonl"),
    ("support_mentions", "mention file for the support corpus (sidecar recognizer)"),
    ("support_index", "BM25 index file, loaded if present and written otherwise"),
    ("require_answer_entity", "retrieved sentence must mention the answer"),
    ("exclude_source_context", "retrieved sentence must come from another document"),
    ("min_extra_shared_entities", "further entities a retrieved sentence must share"),
    ("top_k", "BM25 candidates examined per query"),
    ("style", "question style: cloze, wh or both"),
    ("wh_template", "wh fragment order: wh_b_a or wh_a_b"),
    ("priors", "JSON wh-bigram priors per entity type"),
    ("mask_token", "mask token used in prompts"),
    ("lambda", "loss weight recorded on every sample (> 0)"),
    ("seed", "random seed"),
    ("out", "output directory"),
    ("timings", "record stage wall times in stats.json"),
    ("workers", "worker threads (MINPROMPT_WORKERS takes precedence)"),
];

const PATH_KEYS: &[&str] = &[
    "inputs",
    "abbreviations",
    "gazetteer",
    "mentions",
    "stoplist",
    "support",
    "support_mentions",
    "support_index",
    "priors",
    "out",
];

const LIST_KEYS: &[&str] = &["inputs", "gazetteer", "support"];

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

fn absolutize(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(config_err)
    }

    /// Loads a config file; relative paths in it are taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.to_string().trim_start_matches("config error: "))))?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| PathBuf::from("."));
        let base = std::path::absolute(&base).map_err(|e| Error::io(&base, e))?;
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let one = |p: &mut PathBuf| *p = absolutize(base, p);
        self.inputs.iter_mut().for_each(one);
        self.gazetteer.iter_mut().for_each(one);
        self.support.iter_mut().for_each(one);
        for p in [
            &mut self.abbreviations,
            &mut self.mentions,
            &mut self.stoplist,
            &mut self.support_mentions,
            &mut self.support_index,
            &mut self.priors,
        ]
        .into_iter()
        .flatten()
        {
            one(p);
        }
        one(&mut self.out);
    }

    /// Overrides one key from its command-line text. Path values are taken
    /// relative to `base`; list keys accept comma-separated values.
    pub fn set(&mut self, key: &str, raw: &str, base: &Path) -> Result<()> {
        if !CONFIG_KEYS.iter().any(|(k, _)| *k == key) {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        let value = if PATH_KEYS.contains(&key) {
            let resolve = |s: &str| toml::Value::String(absolutize(base, Path::new(s.trim())).display().to_string());
            if LIST_KEYS.contains(&key) {
                toml::Value::Array(raw.split(',').filter(|s| !s.trim().is_empty()).map(resolve).collect())
            } else {
                resolve(raw)
            }
        } else {
            match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
                Ok(mut t) => t.remove("v").expect("parsed key"),
                Err(_) => toml::Value::String(raw.to_string()),
            }
        };
        let mut table = toml::Table::try_from(&*self).map_err(config_err)?;
        table.insert(key.to_string(), value);
        *self = table
            .try_into()
            .map_err(|e| Error::Config(format!("--{}: {}", key.replace('_', "-"), e.to_string().trim())))?;
        Ok(())
    }

    /// The effective config as TOML.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(config_err)
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::Config("no inputs configured".into()));
        }
        let must_exist = |what: &str, p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} `{}` does not exist", p.display())))
            }
        };
        for p in &self.inputs {
            must_exist("input", p)?;
        }
        for p in &self.gazetteer {
            must_exist("gazetteer", p)?;
        }
        for (what, p) in [
            ("abbreviations", &self.abbreviations),
            ("stoplist", &self.stoplist),
        ] {
            if let Some(p) = p {
                must_exist(what, p)?;
            }
        }
        match self.recognizer {
            RecognizerKind::Builtin => {}
            RecognizerKind::Sidecar => match &self.mentions {
                Some(p) => must_exist("mentions", p)?,
                None => return Err(Error::Config("recognizer = \"sidecar\" needs `mentions`".into())),
            },
            RecognizerKind::Service => {
                if self.service_url.as_deref().is_none_or(str::is_empty) {
                    return Err(Error::Config("recognizer = \"service\" needs `service_url`".into()));
                }
                if self.service_batch_size == 0 || self.service_max_in_flight == 0 || self.service_attempts == 0 {
                    return Err(Error::Config(
                        "service_batch_size, service_max_in_flight and service_attempts must be positive".into(),
                    ));
                }
            }
        }
        if self.retrieval {
            for p in &self.support {
                must_exist("support", p)?;
            }
            if self.recognizer == RecognizerKind::Sidecar && !self.support.is_empty() {
                match &self.support_mentions {
                    Some(p) => must_exist("support_mentions", p)?,
                    None => {
                        return Err(Error::Config(
                            "a separate support corpus with the sidecar recognizer needs `support_mentions`".into(),
                        ))
                    }
                }
            }
            if self.top_k == 0 {
                return Err(Error::Config("top_k must be at least 1".into()));
            }
        }
        self.validate_generation()?;
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config(format!("seed must be at most {}", i64::MAX)));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// The subset of [`validate`](Self::validate) that sample generation needs.
    pub fn validate_generation(&self) -> Result<()> {
        if let Some(p) = &self.priors {
            if !p.exists() {
                return Err(Error::Config(format!("priors `{}` does not exist", p.display())));
            }
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if self.mask_token.is_empty() {
            return Err(Error::Config("mask_token must not be empty".into()));
        }
        Ok(())
    }

    pub fn recognizer_config(&self) -> RecognizerConfig {
        self.recognizer_config_for(self.mentions.clone())
    }

    pub fn support_recognizer_config(&self) -> RecognizerConfig {
        self.recognizer_config_for(self.support_mentions.clone())
    }

    fn recognizer_config_for(&self, sidecar: Option<PathBuf>) -> RecognizerConfig {
        match self.recognizer {
            RecognizerKind::Builtin => RecognizerConfig::Builtin {
                gazetteer_paths: self.gazetteer.clone(),
            },
            RecognizerKind::Sidecar => RecognizerConfig::Sidecar {
                sidecar_path: sidecar.unwrap_or_default(),
            },
            RecognizerKind::Service => {
                let mut s = ServiceConfig::new(
                    self.service_url.clone().unwrap_or_default(),
                    Duration::from_millis(self.service_timeout_ms),
                );
                s.batch_size = self.service_batch_size;
                s.max_in_flight = self.service_max_in_flight;
                s.attempts = self.service_attempts;
                RecognizerConfig::Service(s)
            }
        }
    }

    pub fn retrieval_constraints(&self) -> RetrievalConstraints {
        RetrievalConstraints {
            require_answer_entity: self.require_answer_entity,
            exclude_source_context: self.exclude_source_context,
            min_extra_shared_entities: self.min_extra_shared_entities,
            top_k: self.top_k,
        }
    }

    /// `MINPROMPT_WORKERS`, then `workers`, then the available CPUs.
    pub fn worker_count(&self) -> Result<usize> {
        if let Ok(v) = std::env::var("MINPROMPT_WORKERS") {
            return match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(Error::Config(format!("MINPROMPT_WORKERS must be a positive integer, got `{v}`"))),
            };
        }
        Ok(self
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())))
    }
}
