//! Typed entity mentions and the three ways of producing them: the built-in
//! gazetteer/pattern recognizer, a sidecar annotation file, or an HTTP
//! recognizer service. All three go through [`validate_record`] and
//! [`resolve_overlaps`], so their output obeys the same invariants.

mod builtin;
mod service;
mod sidecar;

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{Sentence, SentenceId, Span};
use crate::error::{Error, Result};

pub use builtin::{BuiltinRecognizer, Gazetteer};
pub use service::{ServiceClient, ServiceConfig};
pub use sidecar::{load_sidecar, parse_sidecar, write_sidecar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntityType {
    Person,
    Gpe,
    Loc,
    Org,
    Date,
    Time,
    Cardinal,
    Ordinal,
    Money,
    Percent,
    Fac,
    Event,
    Product,
    Norp,
    Quantity,
    Law,
    Language,
    WorkOfArt,
    Misc,
}

impl EntityType {
    pub const ALL: [EntityType; 19] = [
        EntityType::Person,
        EntityType::Gpe,
        EntityType::Loc,
        EntityType::Org,
        EntityType::Date,
        EntityType::Time,
        EntityType::Cardinal,
        EntityType::Ordinal,
        EntityType::Money,
        EntityType::Percent,
        EntityType::Fac,
        EntityType::Event,
        EntityType::Product,
        EntityType::Norp,
        EntityType::Quantity,
        EntityType::Law,
        EntityType::Language,
        EntityType::WorkOfArt,
        EntityType::Misc,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EntityType::Person => "PERSON",
            EntityType::Gpe => "GPE",
            EntityType::Loc => "LOC",
            EntityType::Org => "ORG",
            EntityType::Date => "DATE",
            EntityType::Time => "TIME",
            EntityType::Cardinal => "CARDINAL",
            EntityType::Ordinal => "ORDINAL",
            EntityType::Money => "MONEY",
            EntityType::Percent => "PERCENT",
            EntityType::Fac => "FAC",
            EntityType::Event => "EVENT",
            EntityType::Product => "PRODUCT",
            EntityType::Norp => "NORP",
            EntityType::Quantity => "QUANTITY",
            EntityType::Law => "LAW",
            EntityType::Language => "LANGUAGE",
            EntityType::WorkOfArt => "WORK_OF_ART",
            EntityType::Misc => "MISC",
        }
    }

    pub fn wh_family(self) -> WhFamily {
        wh_family(self)
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EntityType::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown entity type `{s}`")))
    }
}

/// Interrogative family chosen by the answer's entity type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WhFamily {
    Who,
    Where,
    When,
    /// Counts and amounts ("how many" / "how much").
    HowMany,
    What,
}

impl WhFamily {
    /// The bare wh-word used when no bigram prior exists for a type.
    pub fn word(&self) -> &'static str {
        match self {
            WhFamily::Who => "who",
            WhFamily::Where => "where",
            WhFamily::When => "when",
            WhFamily::HowMany => "how many",
            WhFamily::What => "what",
        }
    }
}

pub fn wh_family(entity_type: EntityType) -> WhFamily {
    use EntityType::*;
    match entity_type {
        Person | Norp => WhFamily::Who,
        Gpe | Loc | Fac => WhFamily::Where,
        Date | Time => WhFamily::When,
        Cardinal | Ordinal | Money | Percent | Quantity => WhFamily::HowMany,
        _ => WhFamily::What,
    }
}

/// Case-folded, whitespace-collapsed surface form. Idempotent.
pub fn normalize_key(surface: &str) -> String {
    surface
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntityMention {
    pub surface: String,
    pub entity_type: EntityType,
    /// Byte offsets into the sentence text.
    pub span: Span,
    pub normalized_key: String,
}

impl EntityMention {
    pub fn new(sentence_text: &str, span: Span, entity_type: EntityType) -> Result<Self> {
        let surface = sentence_text
            .get(span.start..span.end)
            .ok_or_else(|| {
                Error::Validation(format!(
                    "span {}..{} out of bounds or not on a char boundary (sentence length {})",
                    span.start,
                    span.end,
                    sentence_text.len()
                ))
            })?
            .to_string();
        let normalized_key = normalize_key(&surface);
        if normalized_key.is_empty() {
            return Err(Error::Validation(format!(
                "mention at {}..{} has an empty normalized key",
                span.start, span.end
            )));
        }
        Ok(EntityMention {
            surface,
            entity_type,
            span,
            normalized_key,
        })
    }
}

/// The on-disk / on-wire mention record shared by sidecar files and the
/// recognizer service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionRecord {
    pub sentence_id: SentenceId,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    #[serde(rename = "type")]
    pub entity_type: String,
}

impl MentionRecord {
    pub fn from_mention(sentence_id: SentenceId, m: &EntityMention) -> Self {
        MentionRecord {
            sentence_id,
            start: m.span.start,
            end: m.span.end,
            surface: m.surface.clone(),
            entity_type: m.entity_type.as_str().to_string(),
        }
    }
}

/// Checks a record against its sentence: span in bounds, surface equal to the
/// slice, known type, non-empty key.
pub fn validate_record(record: &MentionRecord, sentence_text: &str) -> Result<EntityMention> {
    let where_ = || {
        format!(
            "record for sentence {} at {}..{}",
            record.sentence_id, record.start, record.end
        )
    };
    if record.start >= record.end {
        return Err(Error::Validation(format!("{}: empty or inverted span", where_())));
    }
    if record.end > sentence_text.len() {
        return Err(Error::Validation(format!(
            "{}: span out of bounds (sentence length {})",
            where_(),
            sentence_text.len()
        )));
    }
    let entity_type: EntityType = record
        .entity_type
        .parse()
        .map_err(|e| Error::Validation(format!("{}: {e}", where_())))?;
    let mention = EntityMention::new(sentence_text, Span::new(record.start, record.end), entity_type)
        .map_err(|e| Error::Validation(format!("{}: {e}", where_())))?;
    if mention.surface != record.surface {
        return Err(Error::Validation(format!(
            "{}: surface mismatch, record says {:?} but text has {:?}",
            where_(),
            record.surface,
            mention.surface
        )));
    }
    Ok(mention)
}

/// Drops overlapping mentions: longest span first, then leftmost, then lower
/// `priority` value. Output is sorted by start offset.
pub fn resolve_overlaps_ranked(mut candidates: Vec<(EntityMention, u8)>) -> Vec<EntityMention> {
    candidates.sort_by(|(a, pa), (b, pb)| {
        b.span
            .len()
            .cmp(&a.span.len())
            .then(a.span.start.cmp(&b.span.start))
            .then(pa.cmp(pb))
            .then(a.entity_type.cmp(&b.entity_type))
    });
    let mut kept: Vec<EntityMention> = Vec::new();
    for (m, _) in candidates {
        if kept.iter().all(|k| !k.span.overlaps(&m.span)) {
            kept.push(m);
        }
    }
    kept.sort_by_key(|m| (m.span.start, m.span.end));
    kept
}

pub fn resolve_overlaps(mentions: Vec<EntityMention>) -> Vec<EntityMention> {
    resolve_overlaps_ranked(mentions.into_iter().map(|m| (m, 0)).collect())
}

/// Group validated records by sentence and resolve overlaps. `texts` is
/// indexed by sentence id.
pub(crate) fn assemble_records<'a>(
    records: impl IntoIterator<Item = (String, MentionRecord)>,
    texts: &[&'a str],
) -> Result<Vec<Vec<EntityMention>>> {
    let mut out: Vec<Vec<EntityMention>> = vec![Vec::new(); texts.len()];
    for (location, record) in records {
        let id = record.sentence_id as usize;
        let text = texts.get(id).ok_or_else(|| {
            Error::Validation(format!(
                "{location}: unknown sentence_id {} (corpus has {} sentences)",
                record.sentence_id,
                texts.len()
            ))
        })?;
        let m = validate_record(&record, text)
            .map_err(|e| Error::Validation(format!("{location}: {e}")))?;
        out[id].push(m);
    }
    Ok(out.into_iter().map(resolve_overlaps).collect())
}

#[derive(Debug, Clone)]
pub enum RecognizerConfig {
    Builtin { gazetteer_paths: Vec<PathBuf> },
    Sidecar { sidecar_path: PathBuf },
    Service(ServiceConfig),
}

impl RecognizerConfig {
    pub fn service(endpoint: impl Into<String>, timeout: Duration) -> Self {
        RecognizerConfig::Service(ServiceConfig::new(endpoint, timeout))
    }
}

/// Runs the configured recognizer over a sentence table whose ids are dense
/// `0..len`. The result is indexed by sentence id.
pub fn recognize_all(sentences: &[Sentence], config: &RecognizerConfig) -> Result<Vec<Vec<EntityMention>>> {
    check_dense(sentences)?;
    match config {
        RecognizerConfig::Builtin { gazetteer_paths } => {
            let gazetteer = Gazetteer::load(gazetteer_paths)?;
            Ok(BuiltinRecognizer::new(gazetteer).recognize_all(sentences))
        }
        RecognizerConfig::Sidecar { sidecar_path } => load_sidecar(sidecar_path, sentences),
        RecognizerConfig::Service(cfg) => ServiceClient::new(cfg.clone()).recognize_all(sentences),
    }
}

pub(crate) fn check_dense(sentences: &[Sentence]) -> Result<()> {
    for (i, s) in sentences.iter().enumerate() {
        if s.sentence_id as usize != i {
            return Err(Error::Validation(format!(
                "sentence ids must be dense and ordered; position {i} holds id {}",
                s.sentence_id
            )));
        }
    }
    Ok(())
}

/// Entity keys to drop before graph construction, one per line (normalized on load).
pub fn load_stoplist(path: &Path) -> Result<HashSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(normalize_key)
        .collect())
}
