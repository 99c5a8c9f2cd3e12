//! Document ingestion and rule-based sentence segmentation.
//!
//! Offsets are byte offsets into the UTF-8 document text and always land on
//! character boundaries. Sentence ids are corpus-global and dense: documents
//! in lexicographic `doc_id` order, sentences in document order.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flate2::read::MultiGzDecoder;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type SentenceId = u32;

/// Half-open byte range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn shift(&self, offset: usize) -> Span {
        Span::new(self.start + offset, self.end + offset)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub dataset_id: String,
    pub text: String,
    pub source_path: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Corpus,
    Retrieved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub sentence_id: SentenceId,
    pub doc_id: String,
    pub span: Span,
    pub text: String,
    pub origin: Origin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    PlainText,
    MrqaJsonl,
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain_text" => Ok(InputFormat::PlainText),
            "mrqa_jsonl" => Ok(InputFormat::MrqaJsonl),
            other => Err(Error::Argument(format!("unknown input format `{other}`"))),
        }
    }
}

impl fmt::Display for InputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputFormat::PlainText => "plain_text",
            InputFormat::MrqaJsonl => "mrqa_jsonl",
        })
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub format: InputFormat,
    /// Overrides the dataset id; otherwise MRQA headers or the file stem are used.
    pub dataset_id: Option<String>,
    /// Drop documents whose text repeats an earlier document (in doc_id order).
    pub dedup_contexts: bool,
}

impl IngestOptions {
    pub fn new(format: InputFormat) -> Self {
        IngestOptions {
            format,
            dataset_id: None,
            dedup_contexts: false,
        }
    }
}

/// An input file together with the name its documents are keyed by.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputFile {
    pub path: PathBuf,
    pub name: String,
}

/// Expands directories (recursively, hidden entries skipped) into their files.
/// A file given directly is named by its file name; a file found under a
/// directory is named by its path relative to that directory.
pub fn collect_input_files<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<InputFile>> {
    let mut files = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let meta = std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
        if meta.is_dir() {
            let walker = walkdir::WalkDir::new(path)
                .sort_by_file_name()
                .into_iter()
                .filter_entry(|e| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.'));
            for entry in walker {
                let entry = entry.map_err(|e| {
                    let p = e.path().unwrap_or(path).to_path_buf();
                    Error::io(p, e.into())
                })?;
                if !entry.file_type().is_file() {
                    continue;
                }
                let rel = entry.path().strip_prefix(path).unwrap_or(entry.path());
                let name = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                files.push(InputFile {
                    path: entry.path().to_path_buf(),
                    name,
                });
            }
        } else {
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
            files.push(InputFile {
                path: path.to_path_buf(),
                name,
            });
        }
    }
    Ok(files)
}

/// Reads every input unit into a [`Document`], sorted by `doc_id`.
pub fn ingest<P: AsRef<Path>>(paths: &[P], options: &IngestOptions) -> Result<Vec<Document>> {
    let files = collect_input_files(paths)?;
    let per_file: Vec<Vec<Document>> = files
        .par_iter()
        .map(|file| match options.format {
            InputFormat::PlainText => read_plain_text(file, options).map(|d| vec![d]),
            InputFormat::MrqaJsonl => read_mrqa(file, options),
        })
        .collect::<Result<_>>()?;

    let mut docs: Vec<Document> = per_file.into_iter().flatten().collect();
    docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));

    let mut seen: HashMap<&str, &str> = HashMap::new();
    for doc in &docs {
        if let Some(first) = seen.insert(&doc.doc_id, &doc.source_path) {
            return Err(Error::Validation(format!(
                "duplicate doc_id `{}` (from {} and {})",
                doc.doc_id, first, doc.source_path
            )));
        }
    }

    if options.dedup_contexts {
        let mut texts = HashSet::new();
        docs.retain(|d| texts.insert(d.text.clone()));
    }
    Ok(docs)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        MultiGzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn read_plain_text(file: &InputFile, options: &IngestOptions) -> Result<Document> {
    let bytes = read_bytes(&file.path)?;
    let text = String::from_utf8(bytes)
        .map_err(|e| Error::parse(&file.path, 0, format!("invalid UTF-8: {e}")))?;
    if text.trim().is_empty() {
        return Err(Error::Validation(format!(
            "{}: document text is empty",
            file.path.display()
        )));
    }
    Ok(Document {
        doc_id: file.name.clone(),
        dataset_id: options
            .dataset_id
            .clone()
            .unwrap_or_else(|| "corpus".to_string()),
        text,
        source_path: file.path.display().to_string(),
    })
}

fn file_stem(name: &str) -> String {
    let base = name.rsplit('/').next().unwrap_or(name);
    base.split('.').next().unwrap_or(base).to_string()
}

fn read_mrqa(file: &InputFile, options: &IngestOptions) -> Result<Vec<Document>> {
    let bytes = read_bytes(&file.path)?;
    let text = String::from_utf8(bytes)
        .map_err(|e| Error::parse(&file.path, 0, format!("invalid UTF-8: {e}")))?;

    let mut dataset_id = options.dataset_id.clone();
    let mut docs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if line.trim_start().starts_with("{\"header\":") {
            if dataset_id.is_none() {
                let value: serde_json::Value = serde_json::from_str(line)
                    .map_err(|e| Error::parse(&file.path, line_no, e))?;
                dataset_id = value["header"]["dataset"].as_str().map(str::to_string);
            }
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| Error::parse(&file.path, line_no, e))?;
        let context = value
            .get("context")
            .and_then(|c| c.as_str())
            .ok_or_else(|| Error::parse(&file.path, line_no, "missing string field `context`"))?;
        if context.trim().is_empty() {
            return Err(Error::Validation(format!(
                "{}:{line_no}: empty context",
                file.path.display()
            )));
        }
        docs.push((line_no, context.to_string()));
    }

    let dataset_id = dataset_id.unwrap_or_else(|| file_stem(&file.name));
    Ok(docs
        .into_iter()
        .map(|(line_no, text)| Document {
            doc_id: format!("{}#{line_no:06}", file.name),
            dataset_id: dataset_id.clone(),
            text,
            source_path: file.path.display().to_string(),
        })
        .collect())
}

const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "Mr.", "Mrs.", "Ms.", "Dr.", "Prof.", "Sr.", "Jr.", "St.", "Mt.", "Gen.", "Gov.", "Sen.",
    "Rep.", "Rev.", "Capt.", "Col.", "Lt.", "Sgt.", "Inc.", "Ltd.", "Co.", "Corp.", "vs.", "etc.",
    "e.g.", "i.e.", "cf.", "No.", "Jan.", "Feb.", "Mar.", "Apr.", "Jun.", "Jul.", "Aug.", "Sep.",
    "Sept.", "Oct.", "Nov.", "Dec.", "U.S.", "U.K.", "approx.", "Fig.", "Vol.", "pp.",
];

/// Splits text at `.`, `!` or `?` followed by whitespace and an uppercase
/// letter or digit, unless the token ending in `.` is a known abbreviation.
#[derive(Debug, Clone)]
pub struct Segmenter {
    abbreviations: HashSet<String>,
}

impl Default for Segmenter {
    fn default() -> Self {
        Segmenter::new(DEFAULT_ABBREVIATIONS.iter().map(|s| s.to_string()))
    }
}

impl Segmenter {
    pub fn new(abbreviations: impl IntoIterator<Item = String>) -> Self {
        Segmenter {
            abbreviations: abbreviations.into_iter().collect(),
        }
    }

    /// One abbreviation per line (including its trailing period); `#` starts a comment.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Segmenter::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string),
        ))
    }

    pub fn is_abbreviation(&self, token: &str) -> bool {
        self.abbreviations.contains(token)
    }

    /// Sentence spans over `text`, trimmed of surrounding whitespace.
    pub fn split(&self, text: &str) -> Vec<Span> {
        let mut spans = Vec::new();
        let mut start: Option<usize> = None;
        let mut last_end = 0;
        let mut chars = text.char_indices().peekable();

        while let Some((i, c)) = chars.next() {
            if c.is_whitespace() {
                continue;
            }
            let sentence_start = *start.get_or_insert(i);
            let end = i + c.len_utf8();
            last_end = end;
            if !matches!(c, '.' | '!' | '?') {
                continue;
            }
            if !self.boundary_follows(&text[end..]) {
                continue;
            }
            if c == '.' && self.is_abbreviation(token_before(text, sentence_start, end)) {
                continue;
            }
            spans.push(Span::new(sentence_start, end));
            start = None;
            // Skip the whitespace run; the next loop iteration opens the new sentence.
            while matches!(chars.peek(), Some((_, w)) if w.is_whitespace()) {
                chars.next();
            }
        }
        if let Some(s) = start {
            spans.push(Span::new(s, last_end));
        }
        spans
    }

    fn boundary_follows(&self, rest: &str) -> bool {
        let mut it = rest.chars();
        match it.next() {
            Some(w) if w.is_whitespace() => {}
            _ => return false,
        }
        match it.find(|c| !c.is_whitespace()) {
            Some(next) => next.is_uppercase() || next.is_ascii_digit(),
            None => false,
        }
    }

    /// Segments one document, numbering sentences from `first_id`.
    pub fn segment(&self, doc: &Document, first_id: SentenceId) -> Vec<Sentence> {
        self.split(&doc.text)
            .into_iter()
            .enumerate()
            .map(|(i, span)| Sentence {
                sentence_id: first_id + i as SentenceId,
                doc_id: doc.doc_id.clone(),
                span,
                text: doc.text[span.start..span.end].to_string(),
                origin: Origin::Corpus,
            })
            .collect()
    }
}

fn token_before(text: &str, sentence_start: usize, end: usize) -> &str {
    let slice = &text[sentence_start..end];
    let token = slice
        .rfind(char::is_whitespace)
        .map(|ws| {
            let ws_len = slice[ws..].chars().next().map_or(1, char::len_utf8);
            &slice[ws + ws_len..]
        })
        .unwrap_or(slice);
    token.trim_start_matches(|c: char| matches!(c, '(' | '[' | '"' | '\'' | '{'))
}

/// Segments a single document with the default abbreviation list, ids from 0.
pub fn segment_sentences(doc: &Document) -> Vec<Sentence> {
    Segmenter::default().segment(doc, 0)
}

/// Segments all documents (in parallel) and assigns dense corpus-global ids
/// in `doc_id` order.
pub fn build_sentence_table(docs: &[Document], segmenter: &Segmenter) -> Vec<Sentence> {
    let mut order: Vec<&Document> = docs.iter().collect();
    order.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));

    let per_doc: Vec<Vec<Sentence>> = order.par_iter().map(|d| segmenter.segment(d, 0)).collect();
    let mut next: SentenceId = 0;
    let mut out = Vec::with_capacity(per_doc.iter().map(Vec::len).sum());
    for sentences in per_doc {
        for mut s in sentences {
            s.sentence_id = next;
            next += 1;
            out.push(s);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> Document {
        Document {
            doc_id: "d".into(),
            dataset_id: "t".into(),
            text: text.into(),
            source_path: "d".into(),
        }
    }

    #[test]
    fn splits_two_sentences() {
        let s = segment_sentences(&doc("The Lakers won. They celebrated."));
        let spans: Vec<_> = s.iter().map(|s| (s.span.start, s.span.end)).collect();
        assert_eq!(spans, vec![(0, 15), (16, 32)]);
        assert_eq!(s[1].text, "They celebrated.");
    }

    #[test]
    fn abbreviation_suppresses_split() {
        let s = segment_sentences(&doc("Dr. Smith arrived."));
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].text, "Dr. Smith arrived.");
    }

    #[test]
    fn abbreviation_list_is_configurable() {
        let seg = Segmenter::new(Vec::<String>::new());
        assert_eq!(seg.split("Dr. Smith arrived.").len(), 2);
    }

    #[test]
    fn no_terminal_punctuation() {
        let s = segment_sentences(&doc("no terminal punctuation"));
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].span, Span::new(0, 23));
    }

    #[test]
    fn lowercase_continuation_is_not_a_boundary() {
        let s = segment_sentences(&doc("It was 3 p.m. and raining. Then 2 more came!  Wow?"));
        let texts: Vec<_> = s.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, vec!["It was 3 p.m. and raining.", "Then 2 more came!", "Wow?"]);
    }

    #[test]
    fn digit_starts_new_sentence_and_whitespace_is_trimmed() {
        let seg = Segmenter::default();
        let spans = seg.split("  First one.\n\n2024 was next.  ");
        assert_eq!(spans, vec![Span::new(2, 12), Span::new(14, 28)]);
    }

    #[test]
    fn multibyte_offsets_are_char_boundaries() {
        let text = "Café opened in Zürich. Über alles.";
        let spans = Segmenter::default().split(text);
        assert_eq!(spans.len(), 2);
        for sp in spans {
            assert!(text.is_char_boundary(sp.start) && text.is_char_boundary(sp.end));
        }
    }

    #[test]
    fn sentence_table_ids_follow_doc_order() {
        let mut b = doc("Second doc. Two sentences.");
        b.doc_id = "b".into();
        let mut a = doc("First doc.");
        a.doc_id = "a".into();
        let table = build_sentence_table(&[b, a], &Segmenter::default());
        let ids: Vec<_> = table.iter().map(|s| (s.sentence_id, s.doc_id.as_str())).collect();
        assert_eq!(ids, vec![(0, "a"), (1, "b"), (2, "b")]);
    }

    #[test]
    fn format_names_round_trip() {
        for f in [InputFormat::PlainText, InputFormat::MrqaJsonl] {
            assert_eq!(f.to_string().parse::<InputFormat>().unwrap(), f);
        }
        assert!("xml".parse::<InputFormat>().is_err());
    }
}
