use std::collections::HashMap;
use std::path::Path;
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;

use super::{resolve_overlaps_ranked, EntityMention, EntityType};
use crate::corpus::{Sentence, Span};
use crate::error::{Error, Result};

// Lower wins when two candidates have the same span length and start.
const GAZETTEER_PRIORITY: u8 = 0;
const PATTERN_PRIORITY: u8 = 10;
const CAPITALIZATION_PRIORITY: u8 = 20;

/// Exact-case term list. Terms match whole tokens only.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    // leading word of the term -> (term, type), longest term first
    by_head: HashMap<String, Vec<(String, EntityType)>>,
    len: usize,
}

fn leading_word(s: &str) -> &str {
    let end = s
        .char_indices()
        .find(|(_, c)| !c.is_alphanumeric())
        .map_or(s.len(), |(i, _)| i);
    &s[..end]
}

impl Gazetteer {
    pub fn new() -> Self {
        Gazetteer::default()
    }

    /// Adds a term. The first type registered for a term is kept.
    pub fn insert(&mut self, term: &str, entity_type: EntityType) -> Result<()> {
        let term = term.trim();
        let head = leading_word(term);
        if head.is_empty() {
            return Err(Error::Validation(format!(
                "gazetteer term {term:?} must start with a letter or digit"
            )));
        }
        let bucket = self.by_head.entry(head.to_string()).or_default();
        if bucket.iter().any(|(t, _)| t == term) {
            return Ok(());
        }
        bucket.push((term.to_string(), entity_type));
        bucket.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
        self.len += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Tab-separated `term<TAB>TYPE` lines; blank lines and `#` comments skipped.
    pub fn load<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        let mut g = Gazetteer::new();
        for path in paths {
            let path = path.as_ref();
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            g.extend_from_str(&text, path)?;
        }
        Ok(g)
    }

    pub fn extend_from_str(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (term, ty) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::parse(origin, i + 1, "expected `term<TAB>TYPE`"))?;
            let ty: EntityType = ty
                .trim()
                .parse()
                .map_err(|e| Error::parse(origin, i + 1, e))?;
            self.insert(term, ty)
                .map_err(|e| Error::parse(origin, i + 1, e))?;
        }
        Ok(())
    }

    fn matches(&self, text: &str) -> Vec<(Span, EntityType)> {
        let mut out = Vec::new();
        let mut prev: Option<char> = None;
        for (i, c) in text.char_indices() {
            let at_token_start = c.is_alphanumeric() && !prev.is_some_and(char::is_alphanumeric);
            prev = Some(c);
            if !at_token_start {
                continue;
            }
            let rest = &text[i..];
            let Some(bucket) = self.by_head.get(leading_word(rest)) else {
                continue;
            };
            for (term, ty) in bucket {
                if !rest.starts_with(term.as_str()) {
                    continue;
                }
                let ends_on_boundary = rest[term.len()..]
                    .chars()
                    .next()
                    .is_none_or(|n| !n.is_alphanumeric());
                if ends_on_boundary {
                    out.push((Span::new(i, i + term.len()), *ty));
                    break;
                }
            }
        }
        out
    }
}

const MONTHS: &str =
    "January|February|March|April|May|June|July|August|September|October|November|December";

static PATTERNS: LazyLock<Vec<(Regex, EntityType)>> = LazyLock::new(|| {
    let money = r"[$€£¥]\s?\d+(?:,\d{3})*(?:\.\d+)?(?:\s(?:thousand|million|billion|trillion)\b)?";
    let percent = r"\b\d+(?:\.\d+)?(?:\s?%|\s(?:percent|per cent)\b)";
    let month_date = format!(
        r"\b(?:(?:{MONTHS})\s+\d{{1,2}}(?:st|nd|rd|th)?(?:,?\s+\d{{4}})?|\d{{1,2}}\s+(?:{MONTHS})(?:,?\s+\d{{4}})?|(?:{MONTHS}),?\s+\d{{4}})\b"
    );
    let year = r"\b[12]\d{3}\b";
    let number = r"\b\d+(?:,\d{3})*(?:\.\d+)?\b";
    let number_word = r"(?i)\b(?:zero|one|two|three|four|five|six|seven|eight|nine|ten|eleven|twelve|thirteen|fourteen|fifteen|sixteen|seventeen|eighteen|nineteen|twenty|thirty|forty|fifty|sixty|seventy|eighty|ninety|hundred|thousand|million|billion|dozen)\b";
    [
        (money.to_string(), EntityType::Money),
        (percent.to_string(), EntityType::Percent),
        (month_date, EntityType::Date),
        (year.to_string(), EntityType::Date),
        (number.to_string(), EntityType::Cardinal),
        (number_word.to_string(), EntityType::Cardinal),
    ]
    .into_iter()
    .map(|(re, ty)| (Regex::new(&re).expect("built-in pattern compiles"), ty))
    .collect()
});

// Stripped from the front of capitalized runs; these are capitalized by
// position rather than because they name something.
const LEADING_FUNCTION_WORDS: &[&str] = &[
    "The", "A", "An", "This", "That", "These", "Those", "It", "Its", "He", "She", "They", "We", "I",
    "In", "On", "At", "By", "For", "From", "Of", "To", "With", "But", "And", "Or", "If", "When",
    "While", "After", "Before", "As", "His", "Her", "Their", "Our", "My",
];

/// Deterministic stand-in for a statistical NER model: gazetteer hits,
/// typed number/date patterns, and capitalized token runs.
#[derive(Debug, Clone, Default)]
pub struct BuiltinRecognizer {
    gazetteer: Gazetteer,
}

impl BuiltinRecognizer {
    pub fn new(gazetteer: Gazetteer) -> Self {
        BuiltinRecognizer { gazetteer }
    }

    pub fn gazetteer(&self) -> &Gazetteer {
        &self.gazetteer
    }

    pub fn recognize(&self, text: &str) -> Vec<EntityMention> {
        let mut candidates: Vec<(Span, EntityType, u8)> = Vec::new();
        for (span, ty) in self.gazetteer.matches(text) {
            candidates.push((span, ty, GAZETTEER_PRIORITY));
        }
        for (rank, (re, ty)) in PATTERNS.iter().enumerate() {
            for m in re.find_iter(text) {
                candidates.push((Span::new(m.start(), m.end()), *ty, PATTERN_PRIORITY + rank as u8));
            }
        }
        for span in capitalized_runs(text) {
            candidates.push((span, EntityType::Misc, CAPITALIZATION_PRIORITY));
        }

        let ranked = candidates
            .into_iter()
            .filter_map(|(span, ty, p)| EntityMention::new(text, span, ty).ok().map(|m| (m, p)))
            .collect();
        resolve_overlaps_ranked(ranked)
    }

    pub fn recognize_sentence(&self, sentence: &Sentence) -> Vec<EntityMention> {
        self.recognize(&sentence.text)
    }

    /// Parallel over sentences; output indexed like the input.
    pub fn recognize_all(&self, sentences: &[Sentence]) -> Vec<Vec<EntityMention>> {
        sentences.par_iter().map(|s| self.recognize(&s.text)).collect()
    }
}

/// Maximal runs of whitespace-adjacent capitalized tokens. The
/// sentence-initial token and leading function words are dropped from a run.
fn capitalized_runs(text: &str) -> Vec<Span> {
    struct Token {
        core: Span,
        capitalized: bool,
        leading_punct: bool,
        trailing_punct: bool,
    }

    let mut tokens = Vec::new();
    let mut pos = 0;
    for raw in text.split_whitespace() {
        let start = pos + text[pos..].find(raw).expect("token comes from text");
        pos = start + raw.len();
        let lead = raw.len() - raw.trim_start_matches(|c: char| !c.is_alphanumeric()).len();
        let core = raw.trim_start_matches(|c: char| !c.is_alphanumeric());
        let core = core.trim_end_matches(|c: char| !c.is_alphanumeric());
        if core.is_empty() {
            tokens.push(Token {
                core: Span::new(start, start),
                capitalized: false,
                leading_punct: true,
                trailing_punct: true,
            });
            continue;
        }
        let core_start = start + lead;
        let core_end = core_start + core.len();
        tokens.push(Token {
            core: Span::new(core_start, core_end),
            capitalized: core.chars().next().is_some_and(char::is_uppercase),
            leading_punct: lead > 0,
            trailing_punct: core_end < pos,
        });
    }

    let mut runs = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if !tokens[i].capitalized {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < tokens.len()
            && tokens[j + 1].capitalized
            && !tokens[j].trailing_punct
            && !tokens[j + 1].leading_punct
        {
            j += 1;
        }
        let mut first = i;
        if first == 0 {
            first += 1;
        }
        while first <= j && LEADING_FUNCTION_WORDS.contains(&&text[tokens[first].core.start..tokens[first].core.end]) {
            first += 1;
        }
        if first <= j {
            runs.push(Span::new(tokens[first].core.start, tokens[j].core.end));
        }
        i = j + 1;
    }
    runs
}
