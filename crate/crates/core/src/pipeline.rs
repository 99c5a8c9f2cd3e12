//! End-to-end orchestration: ingest, segment, recognize, retrieve, graph,
//! select, generate. Every stage persists its output so the stages can
//! also be run one at a time.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::{GraphScope, PipelineConfig};
use crate::corpus::{build_sentence_table, ingest, Document, IngestOptions, Origin, Segmenter, Sentence, SentenceId};
use crate::domset::{approx_dominating_set_with, DominatingSetResult, GreedyOptions, SelectionExport};
use crate::entities::{load_stoplist, parse_sidecar, recognize_all, write_sidecar, EntityMention};
use crate::error::{Error, Result};
use crate::qgen::{assemble_dataset, write_samples, CompanionLink, Companions, Dataset, DatasetInput, GenerationConfig, WhPriors};
use crate::retrieval::{context_entities_by_doc, Bm25Index, Bm25Params, RetrievalQuery, SupportCorpus};
use crate::sentgraph::SentenceGraph;
use crate::stats::PipelineStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Segment,
    Recognize,
    Retrieve,
    Graph,
    Select,
    Generate,
    Write,
    Stats,
    Eval,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Segment => "segment",
            Stage::Recognize => "recognize",
            Stage::Retrieve => "retrieve",
            Stage::Graph => "graph",
            Stage::Select => "select",
            Stage::Generate => "generate",
            Stage::Write => "write",
            Stage::Stats => "stats",
            Stage::Eval => "eval",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

impl StageError {
    pub fn is_validation(&self) -> bool {
        self.source.is_validation()
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait InStage<T> {
    fn stage(self, stage: Stage) -> StageResult<T>;
}

impl<T> InStage<T> for Result<T> {
    fn stage(self, stage: Stage) -> StageResult<T> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// File names inside the output directory.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    pub dir: PathBuf,
}

impl OutputLayout {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        OutputLayout { dir: dir.into() }
    }

    pub fn documents(&self) -> PathBuf {
        self.dir.join("documents.jsonl")
    }
    pub fn sentences(&self) -> PathBuf {
        self.dir.join("sentences.jsonl")
    }
    pub fn mentions(&self) -> PathBuf {
        self.dir.join("mentions.jsonl")
    }
    pub fn companions(&self) -> PathBuf {
        self.dir.join("companions.jsonl")
    }
    pub fn graph(&self) -> PathBuf {
        self.dir.join("graph.jsonl")
    }
    pub fn selection(&self) -> PathBuf {
        self.dir.join("selection.json")
    }
    pub fn samples(&self) -> PathBuf {
        self.dir.join("samples.jsonl")
    }
    pub fn stats(&self) -> PathBuf {
        self.dir.join("stats.json")
    }
    pub fn config(&self) -> PathBuf {
        self.dir.join("config.toml")
    }
    pub fn timings(&self) -> PathBuf {
        self.dir.join("timings.json")
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_with(path, |w| {
        for item in items {
            serde_json::to_writer(&mut *w, item)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e))?);
    }
    Ok(out)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, 0, e))
}

/// Wall time per stage in milliseconds.
pub type Timings = BTreeMap<String, u64>;

fn timed<T>(timings: &mut Timings, stage: Stage, f: impl FnOnce() -> StageResult<T>) -> StageResult<T> {
    let start = Instant::now();
    let out = f();
    *timings.entry(stage.to_string()).or_default() += start.elapsed().as_millis() as u64;
    out
}

/// Documents, the sentence table (corpus sentences, then appended retrieved
/// sentences) with mentions, and the retrieval links.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub sentences: Vec<Sentence>,
    pub mentions: Vec<Vec<EntityMention>>,
    pub companions: Companions,
}

impl Corpus {
    pub fn save(&self, layout: &OutputLayout) -> Result<()> {
        write_jsonl(&layout.documents(), &self.documents)?;
        write_jsonl(&layout.sentences(), &self.sentences)?;
        write_with(&layout.mentions(), |w| write_sidecar(w, &self.mentions))?;
        let links: Vec<CompanionLink> = self.companions.links().collect();
        write_jsonl(&layout.companions(), &links)
    }

    pub fn load(layout: &OutputLayout) -> Result<Self> {
        let documents: Vec<Document> = read_jsonl(&layout.documents())?;
        let sentences: Vec<Sentence> = read_jsonl(&layout.sentences())?;
        let mention_text = std::fs::read_to_string(layout.mentions()).map_err(|e| Error::io(layout.mentions(), e))?;
        let mentions = parse_sidecar(&mention_text, &layout.mentions(), &sentences)?;
        let links: Vec<CompanionLink> = read_jsonl(&layout.companions())?;
        for l in &links {
            let ok = (l.sentence_id as usize) < sentences.len()
                && (l.support as usize) < sentences.len()
                && l.mention < mentions[l.sentence_id as usize].len();
            if !ok {
                return Err(Error::Validation(format!(
                    "{}: link {l:?} does not match the sentence table",
                    layout.companions().display()
                )));
            }
        }
        Ok(Corpus {
            documents,
            sentences,
            mentions,
            companions: Companions::from_links(links),
        })
    }

    pub fn corpus_sentence_count(&self) -> usize {
        self.sentences.iter().filter(|s| s.origin == Origin::Corpus).count()
    }
}

fn segmenter(cfg: &PipelineConfig) -> Result<Segmenter> {
    match &cfg.abbreviations {
        Some(p) => Segmenter::from_file(p),
        None => Ok(Segmenter::default()),
    }
}

/// Ingest, segment, recognize and (if enabled) retrieve.
pub fn prepare_corpus(cfg: &PipelineConfig, timings: &mut Timings) -> StageResult<Corpus> {
    let documents = timed(timings, Stage::Ingest, || {
        let opts = IngestOptions {
            format: cfg.format,
            dataset_id: cfg.dataset_id.clone(),
            dedup_contexts: cfg.dedup_contexts,
        };
        let docs = ingest(&cfg.inputs, &opts).stage(Stage::Ingest)?;
        if docs.is_empty() {
            let inputs: Vec<String> = cfg.inputs.iter().map(|p| p.display().to_string()).collect();
            return Err(Error::Validation(format!("no input documents found in {}", inputs.join(", ")))).stage(Stage::Ingest);
        }
        Ok(docs)
    })?;
    log::info!("ingested {} documents", documents.len());

    let sentences = timed(timings, Stage::Segment, || {
        Ok(build_sentence_table(&documents, &segmenter(cfg).stage(Stage::Segment)?))
    })?;
    log::info!("segmented {} sentences", sentences.len());

    let mentions = timed(timings, Stage::Recognize, || {
        recognize_all(&sentences, &cfg.recognizer_config()).stage(Stage::Recognize)
    })?;
    log::info!("recognized {} mentions", mentions.iter().map(Vec::len).sum::<usize>());

    let mut corpus = Corpus {
        documents,
        sentences,
        mentions,
        companions: Companions::default(),
    };
    if cfg.retrieval {
        timed(timings, Stage::Retrieve, || retrieve_support(cfg, &mut corpus).stage(Stage::Retrieve))?;
        log::info!(
            "retrieved {} support sentences for {} answers",
            corpus.companions.query_of.len(),
            corpus.companions.len()
        );
    }
    Ok(corpus)
}

fn load_support(cfg: &PipelineConfig) -> Result<(Vec<Sentence>, Vec<Vec<EntityMention>>)> {
    let opts = IngestOptions::new(cfg.support_format);
    let docs = ingest(&cfg.support, &opts)?;
    let sentences = build_sentence_table(&docs, &segmenter(cfg)?);
    let mentions = recognize_all(&sentences, &cfg.support_recognizer_config())?;
    Ok((sentences, mentions))
}

fn support_index(cfg: &PipelineConfig, sentences: &[Sentence]) -> Result<Bm25Index> {
    let params = Bm25Params::default();
    if let Some(path) = cfg.support_index.as_deref().filter(|p| p.exists()) {
        let index = Bm25Index::load(path)?;
        let indexable = sentences
            .iter()
            .filter(|s| s.text.chars().any(char::is_alphanumeric))
            .count();
        if index.len() != indexable || index.params() != params {
            return Err(Error::Validation(format!(
                "{} does not match the support corpus ({} indexed sentences, expected {indexable})",
                path.display(),
                index.len()
            )));
        }
        log::info!("loaded support index {}", path.display());
        return Ok(index);
    }
    let index = Bm25Index::build(
        sentences.iter().enumerate().map(|(i, s)| (i as u32, s.text.as_str())),
        params,
    );
    if let Some(path) = &cfg.support_index {
        index.save(path)?;
    }
    Ok(index)
}

/// Finds a support sentence for every (corpus sentence, mention) pair and
/// links it. A separate support corpus contributes its retrieved sentences
/// as new nodes; when the inputs double as support corpus, links point at
/// existing nodes.
fn retrieve_support(cfg: &PipelineConfig, corpus: &mut Corpus) -> Result<()> {
    let self_support = cfg.support.is_empty();
    let (sentences, mentions) = if self_support {
        (corpus.sentences.clone(), corpus.mentions.clone())
    } else {
        load_support(cfg)?
    };
    let index = support_index(cfg, &sentences)?;
    let support = SupportCorpus::with_index(sentences, mentions, index);
    let constraints = cfg.retrieval_constraints();
    let context = context_entities_by_doc(&corpus.sentences, &corpus.mentions);
    let empty = HashSet::new();

    let hits: Vec<Vec<Option<usize>>> = corpus
        .sentences
        .par_iter()
        .zip(&corpus.mentions)
        .map(|(s, ms)| {
            let ctx = context.get(s.doc_id.as_str()).unwrap_or(&empty);
            ms.iter()
                .map(|m| {
                    let query = RetrievalQuery {
                        sentence: s,
                        sentence_mentions: ms,
                        answer: m,
                        context_entities: ctx,
                    };
                    support.retrieve(&query, &constraints)
                })
                .collect()
        })
        .collect();

    let mut links = Vec::new();
    let mut appended: HashMap<usize, SentenceId> = HashMap::new();
    for (q, row) in hits.iter().enumerate() {
        for (i, hit) in row.iter().enumerate() {
            let Some(pos) = *hit else { continue };
            let node = if self_support {
                pos as SentenceId
            } else {
                *appended.entry(pos).or_insert_with(|| {
                    let id = corpus.sentences.len() as SentenceId;
                    let mut s = support.sentence(pos).clone();
                    s.sentence_id = id;
                    s.origin = Origin::Retrieved;
                    corpus.sentences.push(s);
                    corpus.mentions.push(support.mentions(pos).to_vec());
                    id
                })
            };
            links.push(CompanionLink {
                sentence_id: q as SentenceId,
                mention: i,
                support: node,
            });
        }
    }
    corpus.companions = Companions::from_links(links);
    Ok(())
}

/// Namespaces keys by document so that only same-document sentences link.
fn scoped_key(doc_id: &str, key: &str) -> String {
    format!("{doc_id}\u{1f}{key}")
}

pub fn build_graph(cfg: &PipelineConfig, corpus: &Corpus) -> Result<SentenceGraph> {
    let stoplist = match &cfg.stoplist {
        Some(p) => load_stoplist(p)?,
        None => HashSet::new(),
    };
    let node_keys: Vec<Vec<String>> = corpus
        .sentences
        .par_iter()
        .zip(&corpus.mentions)
        .map(|(s, ms)| {
            let doc = match s.origin {
                Origin::Corpus => s.doc_id.as_str(),
                Origin::Retrieved => corpus
                    .companions
                    .query_of
                    .get(&s.sentence_id)
                    .map_or(s.doc_id.as_str(), |&(q, _)| corpus.sentences[q as usize].doc_id.as_str()),
            };
            ms.iter()
                .map(|m| m.normalized_key.as_str())
                .filter(|k| !stoplist.contains(*k))
                .map(|k| match cfg.graph_scope {
                    GraphScope::Corpus => k.to_string(),
                    GraphScope::Document => scoped_key(doc, k),
                })
                .collect()
        })
        .collect();
    Ok(SentenceGraph::from_node_keys(&node_keys))
}

pub fn select(cfg: &PipelineConfig, graph: &SentenceGraph) -> DominatingSetResult {
    approx_dominating_set_with(
        graph,
        GreedyOptions {
            degree_mode: cfg.degree_mode,
            trace: false,
        },
    )
}

pub fn generation_config(cfg: &PipelineConfig) -> GenerationConfig {
    GenerationConfig {
        style: cfg.style,
        template: cfg.wh_template,
        mask_token: cfg.mask_token.clone(),
        lambda_weight: cfg.lambda,
        seed: cfg.seed,
    }
}

pub fn generate(cfg: &PipelineConfig, corpus: &Corpus, selected: &[SentenceId]) -> Result<Dataset> {
    let priors = match &cfg.priors {
        Some(p) => WhPriors::load(p)?,
        None => WhPriors::default(),
    };
    let input = DatasetInput {
        documents: &corpus.documents,
        sentences: &corpus.sentences,
        mentions: &corpus.mentions,
        companions: &corpus.companions,
    };
    let dataset = assemble_dataset(&input, selected, &priors, &generation_config(cfg))?;
    if !dataset.skipped.is_empty() {
        log::info!("skipped {} candidate samples", dataset.skipped.len());
    }
    if dataset.duplicates > 0 {
        log::info!("dropped {} duplicate samples", dataset.duplicates);
    }
    Ok(dataset)
}

pub fn compute_stats(graph: &SentenceGraph, selection: &SelectionExport, samples: usize, timings: &Timings, record_timings: bool) -> PipelineStats {
    let g = graph.stats();
    PipelineStats {
        nodes: g.nodes as u64,
        edges: g.edges,
        dominating_set: selection.size as u64,
        training_samples: samples as u64,
        entities: g.entities as u64,
        max_degree: g.max_degree as u64,
        bound: selection.bound,
        timings_ms: timings
            .iter()
            .map(|(k, &v)| (k.clone(), if record_timings { v } else { 0 }))
            .collect(),
    }
}

pub fn save_selection(path: &Path, selection: &SelectionExport) -> Result<()> {
    write_with(path, |w| {
        serde_json::to_writer(&mut *w, selection)?;
        w.write_all(b"\n")
    })
}

pub fn load_selection(path: &Path) -> Result<SelectionExport> {
    read_json(path)
}

pub fn save_graph(path: &Path, graph: &SentenceGraph) -> Result<()> {
    write_with(path, |w| graph.write_dump(w))
}

pub fn load_graph(path: &Path, node_count: usize) -> Result<SentenceGraph> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    SentenceGraph::read_dump(BufReader::new(file), node_count, path)
}

pub fn save_stats(path: &Path, stats: &PipelineStats) -> Result<()> {
    write_with(path, |w| w.write_all(stats.to_json().as_bytes()))
}

pub fn save_timings(path: &Path, timings: &Timings) -> Result<()> {
    write_with(path, |w| {
        serde_json::to_writer(&mut *w, timings)?;
        w.write_all(b"\n")
    })
}

/// Adds this invocation's stage times to the persisted ones.
pub fn merge_timings(path: &Path, new: &Timings) -> Result<Timings> {
    let mut all = load_timings(path)?;
    all.extend(new.iter().map(|(k, v)| (k.clone(), *v)));
    save_timings(path, &all)?;
    Ok(all)
}

pub fn load_timings(path: &Path) -> Result<Timings> {
    if path.exists() {
        read_json(path)
    } else {
        Ok(Timings::new())
    }
}

pub fn write_config_echo(path: &Path, cfg: &PipelineConfig) -> Result<()> {
    let text = cfg.to_toml()?;
    write_with(path, |w| w.write_all(text.as_bytes()))
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub stats: PipelineStats,
    pub skipped: usize,
    pub duplicates: usize,
    pub layout: OutputLayout,
}

/// Runs `f` on a pool sized by [`PipelineConfig::worker_count`].
pub fn with_workers<T: Send>(cfg: &PipelineConfig, f: impl FnOnce() -> T + Send) -> Result<T> {
    let n = cfg.worker_count()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
    Ok(pool.install(f))
}

/// The whole pipeline, writing every artifact, the samples, stats and the
/// config echo into `cfg.out`.
pub fn run_pipeline(cfg: &PipelineConfig) -> StageResult<RunReport> {
    cfg.validate().stage(Stage::Config)?;
    with_workers(cfg, || run_stages(cfg)).stage(Stage::Config)?
}

fn run_stages(cfg: &PipelineConfig) -> StageResult<RunReport> {
    let layout = OutputLayout::new(&cfg.out);
    let mut timings = Timings::new();
    let corpus = prepare_corpus(cfg, &mut timings)?;
    let graph = timed(&mut timings, Stage::Graph, || build_graph(cfg, &corpus).stage(Stage::Graph))?;
    let selection = timed(&mut timings, Stage::Select, || Ok(select(cfg, &graph)))?;
    log::info!(
        "selected {} of {} sentences ({} edges)",
        selection.size(),
        graph.node_count(),
        graph.edge_count()
    );
    let dataset = timed(&mut timings, Stage::Generate, || {
        generate(cfg, &corpus, &selection.selected).stage(Stage::Generate)
    })?;
    let export = selection.export();
    timed(&mut timings, Stage::Write, || {
        (|| {
            corpus.save(&layout)?;
            save_graph(&layout.graph(), &graph)?;
            save_selection(&layout.selection(), &export)?;
            write_with(&layout.samples(), |w| write_samples(w, &dataset.samples))?;
            write_config_echo(&layout.config(), cfg)
        })()
        .stage(Stage::Write)
    })?;
    save_timings(&layout.timings(), &timings).stage(Stage::Write)?;
    let stats = compute_stats(&graph, &export, dataset.samples.len(), &timings, cfg.timings);
    save_stats(&layout.stats(), &stats).stage(Stage::Write)?;
    if stats.training_samples == 0 {
        log::warn!("no training samples were generated");
    }
    Ok(RunReport {
        stats,
        skipped: dataset.skipped.len(),
        duplicates: dataset.duplicates,
        layout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(dir: &Path) -> PipelineConfig {
        let docs = dir.join("docs");
        std::fs::create_dir_all(&docs).unwrap();
        std::fs::write(
            docs.join("a.txt"),
            "The Lakers moved to Los Angeles in 1960. The Lakers won in Los Angeles.",
        )
        .unwrap();
        std::fs::write(docs.join("b.txt"), "Los Angeles welcomed the Lakers in 1960.").unwrap();
        PipelineConfig {
            inputs: vec![docs],
            out: dir.join("out"),
            workers: Some(2),
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn run_writes_everything() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path());
        let report = run_pipeline(&cfg).unwrap();
        let layout = &report.layout;
        for p in [
            layout.documents(),
            layout.sentences(),
            layout.mentions(),
            layout.companions(),
            layout.graph(),
            layout.selection(),
            layout.samples(),
            layout.stats(),
            layout.config(),
        ] {
            assert!(p.exists(), "{}", p.display());
        }
        assert_eq!(report.stats.nodes, 3);
        assert!(report.stats.dominating_set <= report.stats.nodes);
        assert!(report.stats.training_samples >= report.stats.dominating_set);
    }

    #[test]
    fn stages_round_trip_through_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig {
            retrieval: true,
            style: crate::qgen::StyleSelection::Both,
            ..config(dir.path())
        };
        run_pipeline(&cfg).unwrap();
        let layout = OutputLayout::new(&cfg.out);
        let corpus = Corpus::load(&layout).unwrap();
        let graph = load_graph(&layout.graph(), corpus.sentences.len()).unwrap();
        assert_eq!(graph, build_graph(&cfg, &corpus).unwrap());
        let selection = load_selection(&layout.selection()).unwrap();
        let dataset = generate(&cfg, &corpus, &selection.selected).unwrap();
        let mut buf = Vec::new();
        write_samples(&mut buf, &dataset.samples).unwrap();
        assert_eq!(buf, std::fs::read(layout.samples()).unwrap());
    }

    #[test]
    fn document_scope_links_only_within_documents() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path());
        let mut t = Timings::new();
        let corpus = prepare_corpus(&cfg, &mut t).unwrap();
        let corpus_graph = build_graph(&cfg, &corpus).unwrap();
        let doc_graph = build_graph(
            &PipelineConfig {
                graph_scope: GraphScope::Document,
                ..cfg
            },
            &corpus,
        )
        .unwrap();
        assert_eq!(corpus_graph.edge_count(), 3);
        assert_eq!(doc_graph.edge_count(), 1);
    }

    #[test]
    fn empty_input_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty");
        std::fs::create_dir(&empty).unwrap();
        let cfg = PipelineConfig {
            inputs: vec![empty],
            out: dir.path().join("out"),
            ..PipelineConfig::default()
        };
        let err = run_pipeline(&cfg).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().starts_with("[ingest] "), "{err}");
    }

    #[test]
    fn stats_without_timings_zeroes_them() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig {
            timings: false,
            ..config(dir.path())
        };
        let report = run_pipeline(&cfg).unwrap();
        assert!(!report.stats.timings_ms.is_empty());
        assert!(report.stats.timings_ms.values().all(|&v| v == 0));
    }
}
