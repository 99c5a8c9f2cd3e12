//! Question generation: cloze and wh-template QA pairs from selected
//! sentences, and their prompt-formatted training samples.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Origin, Sentence, SentenceId, Span};
use crate::entities::{EntityMention, EntityType};
use crate::error::{Error, Result};

pub const CLOZE_MASK: &str = "[MASK]";
pub const DEFAULT_MASK_TOKEN: &str = "<mask>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    Cloze,
    Wh,
}

impl Style {
    pub fn as_str(&self) -> &'static str {
        match self {
            Style::Cloze => "cloze",
            Style::Wh => "wh",
        }
    }
}

/// Which styles to emit per answer mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StyleSelection {
    Cloze,
    #[default]
    Wh,
    Both,
}

impl StyleSelection {
    pub fn styles(&self) -> &'static [Style] {
        match self {
            StyleSelection::Cloze => &[Style::Cloze],
            StyleSelection::Wh => &[Style::Wh],
            StyleSelection::Both => &[Style::Cloze, Style::Wh],
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            StyleSelection::Cloze => "cloze",
            StyleSelection::Wh => "wh",
            StyleSelection::Both => "both",
        }
    }
}

impl FromStr for StyleSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cloze" => Ok(StyleSelection::Cloze),
            "wh" => Ok(StyleSelection::Wh),
            "both" => Ok(StyleSelection::Both),
            _ => Err(Error::Config(format!("unknown question style `{s}` (cloze, wh, both)"))),
        }
    }
}

impl fmt::Display for StyleSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Fragment order after the wh-component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WhTemplate {
    /// wh + B + A + "?"
    #[default]
    WhBA,
    /// wh + A + B + "?"
    WhAB,
}

impl WhTemplate {
    pub fn as_str(&self) -> &'static str {
        match self {
            WhTemplate::WhBA => "wh_b_a",
            WhTemplate::WhAB => "wh_a_b",
        }
    }
}

impl FromStr for WhTemplate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wh_b_a" => Ok(WhTemplate::WhBA),
            "wh_a_b" => Ok(WhTemplate::WhAB),
            _ => Err(Error::Config(format!("unknown wh template `{s}` (wh_b_a, wh_a_b)"))),
        }
    }
}

impl fmt::Display for WhTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
    pub context: String,
    /// Occurrence of the answer entity in `context` that gets masked.
    pub context_span: Option<Span>,
    pub style: Style,
    pub source_sentence_id: SentenceId,
    pub answer_type: EntityType,
}

impl QaPair {
    pub fn with_context(mut self, context: impl Into<String>, span: Option<Span>) -> Self {
        self.context = context.into();
        self.context_span = span;
        self
    }
}

/// Per-type wh-bigram distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct WhPriors {
    table: BTreeMap<EntityType, Vec<(String, f64)>>,
}

impl Default for WhPriors {
    fn default() -> Self {
        use EntityType::*;
        let one = |s: &str| vec![(s.to_string(), 1.0)];
        let mut table = BTreeMap::new();
        for ty in EntityType::ALL {
            let bigram = match ty {
                Person | Norp => "who was",
                Gpe | Loc | Fac => "where did",
                Date | Time => "when did",
                Cardinal | Ordinal | Quantity => "how many",
                Money | Percent => "how much",
                _ => "what is",
            };
            table.insert(ty, one(bigram));
        }
        WhPriors { table }
    }
}

impl WhPriors {
    pub fn new(table: BTreeMap<EntityType, Vec<(String, f64)>>) -> Result<Self> {
        for (ty, dist) in &table {
            if dist.is_empty() {
                return Err(Error::Validation(format!("wh priors for {ty} are empty")));
            }
            let mut sum = 0.0;
            for (bigram, p) in dist {
                if bigram.trim().is_empty() {
                    return Err(Error::Validation(format!("wh priors for {ty} contain an empty bigram")));
                }
                if !(p.is_finite() && *p > 0.0) {
                    return Err(Error::Validation(format!(
                        "wh prior for {ty} `{bigram}` must be positive, got {p}"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!(
                    "wh priors for {ty} sum to {sum}, expected 1"
                )));
            }
        }
        Ok(WhPriors { table })
    }

    /// JSON object `{"TYPE": [["bigram", p], ...], ...}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, Vec<(String, f64)>> = serde_json::from_str(text)
            .map_err(|e| Error::Validation(format!("malformed wh priors: {e}")))?;
        let mut table = BTreeMap::new();
        for (ty, dist) in raw {
            table.insert(ty.parse::<EntityType>()?, dist);
        }
        WhPriors::new(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        WhPriors::from_json(&text).map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        let raw: BTreeMap<&str, &Vec<(String, f64)>> =
            self.table.iter().map(|(t, d)| (t.as_str(), d)).collect();
        serde_json::to_string_pretty(&raw).expect("priors serialize")
    }

    pub fn get(&self, ty: EntityType) -> Option<&[(String, f64)]> {
        self.table.get(&ty).map(Vec::as_slice)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of one sample's random stream; independent of scheduling.
pub fn sample_seed(global_seed: u64, sentence_id: SentenceId, mention_offset: usize) -> u64 {
    let h = splitmix64(global_seed);
    let h = splitmix64(h ^ sentence_id as u64);
    splitmix64(h ^ mention_offset as u64)
}

/// Inverse-CDF draw from the type's distribution, or the bare wh-word of
/// its family when the type has no entry.
pub fn sample_wh_bigram(priors: &WhPriors, answer_type: EntityType, seed: u64) -> String {
    let Some(dist) = priors.get(answer_type) else {
        return answer_type.wh_family().word().to_string();
    };
    let u: f64 = ChaCha8Rng::seed_from_u64(seed).random();
    let mut acc = 0.0;
    for (bigram, p) in dist {
        acc += p;
        if u < acc {
            return bigram.clone();
        }
    }
    dist.last().expect("validated non-empty").0.clone()
}

fn check_span(text: &str, span: Span) -> Result<()> {
    if span.start > span.end || text.get(span.start..span.end).is_none() {
        return Err(Error::Argument(format!(
            "span {}..{} out of bounds for text of length {}",
            span.start,
            span.end,
            text.len()
        )));
    }
    Ok(())
}

/// Text before the answer, and text after it without sentence-final
/// punctuation; both trimmed.
pub fn split_fragments(sentence_text: &str, answer: &EntityMention) -> Result<(String, String)> {
    check_span(sentence_text, answer.span)?;
    let a = sentence_text[..answer.span.start].trim();
    let b = sentence_text[answer.span.end..]
        .trim()
        .trim_end_matches(['.', '!', '?'])
        .trim_end();
    Ok((a.to_string(), b.to_string()))
}

pub fn generate_cloze(sentence: &Sentence, answer: &EntityMention) -> Result<QaPair> {
    check_span(&sentence.text, answer.span)?;
    let text = &sentence.text;
    let question = format!(
        "{}{}{}",
        &text[..answer.span.start],
        CLOZE_MASK,
        &text[answer.span.end..]
    );
    Ok(QaPair {
        question,
        answer: answer.surface.clone(),
        context: String::new(),
        context_span: None,
        style: Style::Cloze,
        source_sentence_id: sentence.sentence_id,
        answer_type: answer.entity_type,
    })
}

pub fn generate_wh(
    sentence: &Sentence,
    answer: &EntityMention,
    priors: &WhPriors,
    template: WhTemplate,
    seed: u64,
) -> Result<QaPair> {
    let (a, b) = split_fragments(&sentence.text, answer)?;
    let wh = sample_wh_bigram(priors, answer.entity_type, seed);
    let (first, second) = match template {
        WhTemplate::WhBA => (b, a),
        WhTemplate::WhAB => (a, b),
    };
    let body = [wh.as_str(), first.as_str(), second.as_str()]
        .iter()
        .flat_map(|part| part.split_whitespace())
        .collect::<Vec<_>>()
        .join(" ");
    Ok(QaPair {
        question: format!("{body}?"),
        answer: answer.surface.clone(),
        context: String::new(),
        context_span: None,
        style: Style::Wh,
        source_sentence_id: sentence.sentence_id,
        answer_type: answer.entity_type,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset_id: String,
    pub doc_id: String,
    pub sentence_id: SentenceId,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSample {
    pub input: String,
    pub target: String,
    pub qa: QaPair,
    pub lambda_weight: f64,
    pub provenance: Provenance,
}

/// One line of the samples file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub input: String,
    pub target: String,
    pub question: String,
    pub answer: String,
    pub context: String,
    pub style: Style,
    pub dataset_id: String,
    pub doc_id: String,
    pub sentence_id: SentenceId,
    pub lambda: f64,
}

impl AugmentedSample {
    pub fn record(&self) -> SampleRecord {
        SampleRecord {
            input: self.input.clone(),
            target: self.target.clone(),
            question: self.qa.question.clone(),
            answer: self.qa.answer.clone(),
            context: self.qa.context.clone(),
            style: self.qa.style,
            dataset_id: self.provenance.dataset_id.clone(),
            doc_id: self.provenance.doc_id.clone(),
            sentence_id: self.provenance.sentence_id,
            lambda: self.lambda_weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    AnswerNotInContext,
    AnswerInQuestion,
    MaskInSentence,
    BadSpan,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkipReason::AnswerNotInContext => "answer not found in context",
            SkipReason::AnswerInQuestion => "answer surface appears in the wh question",
            SkipReason::MaskInSentence => "source sentence already contains the cloze mask",
            SkipReason::BadSpan => "answer span out of bounds",
        })
    }
}

/// The `(input, target)` strings. The context is masked at `context_span`,
/// or at the first occurrence of the answer if no span is set; an empty
/// context is left as is.
pub fn format_prompt(qa: &QaPair, mask_token: &str) -> std::result::Result<(String, String), SkipReason> {
    let masked_context = if qa.context.is_empty() {
        String::new()
    } else {
        let span = match qa.context_span {
            Some(s) => {
                check_span(&qa.context, s).map_err(|_| SkipReason::BadSpan)?;
                s
            }
            None => {
                let start = qa.context.find(&qa.answer).ok_or(SkipReason::AnswerNotInContext)?;
                Span::new(start, start + qa.answer.len())
            }
        };
        format!(
            "{}{}{}",
            &qa.context[..span.start],
            mask_token,
            &qa.context[span.end..]
        )
    };
    let input = format!(
        "Question: {} Answer: {} Context: {}",
        qa.question, mask_token, masked_context
    );
    let target = format!(
        "Question: {} Answer: {} Context: {}",
        qa.question, qa.answer, qa.context
    );
    Ok((input, target))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub style: StyleSelection,
    pub template: WhTemplate,
    pub mask_token: String,
    pub lambda_weight: f64,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            style: StyleSelection::default(),
            template: WhTemplate::default(),
            mask_token: DEFAULT_MASK_TOKEN.to_string(),
            lambda_weight: 1.0,
            seed: 0,
        }
    }
}

/// Links between corpus sentences and retrieved support sentences
/// appended to the sentence table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Companions {
    /// (corpus sentence, index of the answer mention) → retrieved sentence.
    pub by_mention: BTreeMap<(SentenceId, usize), SentenceId>,
    /// Retrieved sentence → the first (query sentence, mention index) that retrieved it.
    pub query_of: BTreeMap<SentenceId, (SentenceId, usize)>,
}

/// One retrieval result as persisted between stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompanionLink {
    pub sentence_id: SentenceId,
    pub mention: usize,
    pub support: SentenceId,
}

impl Companions {
    pub fn from_links(links: impl IntoIterator<Item = CompanionLink>) -> Self {
        let mut c = Companions::default();
        for l in links {
            c.by_mention.insert((l.sentence_id, l.mention), l.support);
        }
        for (&(q, i), &r) in &c.by_mention {
            c.query_of.entry(r).or_insert((q, i));
        }
        c
    }

    pub fn links(&self) -> impl Iterator<Item = CompanionLink> + '_ {
        self.by_mention.iter().map(|(&(q, i), &r)| CompanionLink {
            sentence_id: q,
            mention: i,
            support: r,
        })
    }

    pub fn len(&self) -> usize {
        self.by_mention.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_mention.is_empty()
    }
}

pub struct DatasetInput<'a> {
    /// Sorted by `doc_id`.
    pub documents: &'a [Document],
    /// Every graph node, ids dense from 0.
    pub sentences: &'a [Sentence],
    pub mentions: &'a [Vec<EntityMention>],
    pub companions: &'a Companions,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skip {
    pub sentence_id: SentenceId,
    pub mention_offset: usize,
    pub style: Style,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Vec<AugmentedSample>,
    pub skipped: Vec<Skip>,
    pub duplicates: usize,
}

struct Task<'a> {
    source: &'a Sentence,
    answer: &'a EntityMention,
    context_doc: &'a Document,
    context_span: Option<Span>,
}

impl<'a> DatasetInput<'a> {
    fn document(&self, doc_id: &str) -> Option<&'a Document> {
        self.documents
            .binary_search_by(|d| d.doc_id.as_str().cmp(doc_id))
            .ok()
            .map(|i| &self.documents[i])
    }

    fn doc_span(&self, sentence: SentenceId, mention: &EntityMention) -> Span {
        mention.span.shift(self.sentences[sentence as usize].span.start)
    }

    /// First occurrence of `key` among the corpus mentions of `doc_id`.
    fn find_in_doc(&self, doc_id: &str, key: &str, doc_sentences: &HashMap<&str, Vec<SentenceId>>) -> Option<Span> {
        doc_sentences.get(doc_id)?.iter().find_map(|&sid| {
            self.mentions[sid as usize]
                .iter()
                .find(|m| m.normalized_key == key)
                .map(|m| self.doc_span(sid, m))
        })
    }

    fn task(
        &self,
        node: SentenceId,
        mention_index: usize,
        doc_sentences: &HashMap<&str, Vec<SentenceId>>,
    ) -> std::result::Result<Task<'a>, SkipReason> {
        let sentence = &self.sentences[node as usize];
        let mention = &self.mentions[node as usize][mention_index];
        match sentence.origin {
            Origin::Corpus => {
                let context_doc = self.document(&sentence.doc_id).ok_or(SkipReason::AnswerNotInContext)?;
                let (source, answer) = self
                    .companions
                    .by_mention
                    .get(&(node, mention_index))
                    .and_then(|&r| {
                        self.mentions[r as usize]
                            .iter()
                            .find(|m| m.normalized_key == mention.normalized_key)
                            .map(|m| (&self.sentences[r as usize], m))
                    })
                    .unwrap_or((sentence, mention));
                Ok(Task {
                    source,
                    answer,
                    context_doc,
                    context_span: Some(self.doc_span(node, mention)),
                })
            }
            Origin::Retrieved => {
                let &(q, qi) = self.companions.query_of.get(&node).ok_or(SkipReason::AnswerNotInContext)?;
                let query = &self.sentences[q as usize];
                let context_doc = self.document(&query.doc_id).ok_or(SkipReason::AnswerNotInContext)?;
                let qm = &self.mentions[q as usize][qi];
                let span = if qm.normalized_key == mention.normalized_key {
                    self.doc_span(q, qm)
                } else {
                    self.find_in_doc(&query.doc_id, &mention.normalized_key, doc_sentences)
                        .ok_or(SkipReason::AnswerNotInContext)?
                };
                Ok(Task {
                    source: sentence,
                    answer: mention,
                    context_doc,
                    context_span: Some(span),
                })
            }
        }
    }
}

fn build_sample(
    task: &Task<'_>,
    style: Style,
    priors: &WhPriors,
    config: &GenerationConfig,
    seed: u64,
) -> std::result::Result<AugmentedSample, SkipReason> {
    let qa = match style {
        Style::Cloze => {
            if task.source.text.contains(CLOZE_MASK) {
                return Err(SkipReason::MaskInSentence);
            }
            generate_cloze(task.source, task.answer).map_err(|_| SkipReason::BadSpan)?
        }
        Style::Wh => {
            let qa = generate_wh(task.source, task.answer, priors, config.template, seed)
                .map_err(|_| SkipReason::BadSpan)?;
            if qa.question.contains(&qa.answer) {
                return Err(SkipReason::AnswerInQuestion);
            }
            qa
        }
    };
    let qa = qa.with_context(task.context_doc.text.clone(), task.context_span);
    let (input, target) = format_prompt(&qa, &config.mask_token)?;
    Ok(AugmentedSample {
        input,
        target,
        lambda_weight: config.lambda_weight,
        provenance: Provenance {
            dataset_id: task.context_doc.dataset_id.clone(),
            doc_id: task.context_doc.doc_id.clone(),
            sentence_id: qa.source_sentence_id,
            origin: task.source.origin,
        },
        qa,
    })
}

/// One sample per (selected sentence, mention, style), ordered by sentence
/// id then mention offset, with exact duplicate `(input, target)` pairs
/// removed.
pub fn assemble_dataset(
    input: &DatasetInput<'_>,
    selected: &[SentenceId],
    priors: &WhPriors,
    config: &GenerationConfig,
) -> Result<Dataset> {
    if input.sentences.len() != input.mentions.len() {
        return Err(Error::Argument(format!(
            "{} sentences but {} mention lists",
            input.sentences.len(),
            input.mentions.len()
        )));
    }
    if let Some(&bad) = selected.iter().find(|&&v| v as usize >= input.sentences.len()) {
        return Err(Error::Argument(format!("selected sentence {bad} does not exist")));
    }
    let mut doc_sentences: HashMap<&str, Vec<SentenceId>> = HashMap::new();
    for s in input.sentences.iter().filter(|s| s.origin == Origin::Corpus) {
        doc_sentences.entry(s.doc_id.as_str()).or_default().push(s.sentence_id);
    }
    let mut order = selected.to_vec();
    order.sort_unstable();
    order.dedup();

    type Outcome = std::result::Result<AugmentedSample, Skip>;
    let per_node: Vec<Vec<Outcome>> = order
        .par_iter()
        .map(|&node| {
            let mut mention_order: Vec<usize> = (0..input.mentions[node as usize].len()).collect();
            mention_order.sort_by_key(|&i| input.mentions[node as usize][i].span.start);
            let mut out = Vec::new();
            for mi in mention_order {
                let offset = input.mentions[node as usize][mi].span.start;
                let seed = sample_seed(config.seed, node, offset);
                let task = input.task(node, mi, &doc_sentences);
                for &style in config.style.styles() {
                    let skip = |reason| Skip {
                        sentence_id: node,
                        mention_offset: offset,
                        style,
                        reason,
                    };
                    out.push(match &task {
                        Ok(t) => build_sample(t, style, priors, config, seed).map_err(skip),
                        Err(reason) => Err(skip(reason.clone())),
                    });
                }
            }
            out
        })
        .collect();

    let mut dataset = Dataset::default();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for outcome in per_node.into_iter().flatten() {
        match outcome {
            Ok(sample) => {
                if seen.insert((sample.input.clone(), sample.target.clone())) {
                    dataset.samples.push(sample);
                } else {
                    dataset.duplicates += 1;
                }
            }
            Err(skip) => {
                log::debug!(
                    "skipped {} sample for sentence {} at offset {}: {}",
                    skip.style.as_str(),
                    skip.sentence_id,
                    skip.mention_offset,
                    skip.reason
                );
                dataset.skipped.push(skip);
            }
        }
    }
    Ok(dataset)
}

/// JSON Lines, one record per sample, "\n"-terminated.
pub fn write_samples<W: std::io::Write>(mut out: W, samples: &[AugmentedSample]) -> std::io::Result<()> {
    for s in samples {
        serde_json::to_writer(&mut out, &s.record())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
