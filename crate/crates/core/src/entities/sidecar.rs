use std::io::Write;
use std::path::Path;

use super::{assemble_records, EntityMention, MentionRecord};
use crate::corpus::Sentence;
use crate::error::{Error, Result};

/// Loads a JSON Lines mention file, one [`MentionRecord`] per line, and
/// validates each record against the sentence it names.
pub fn load_sidecar(path: &Path, sentences: &[Sentence]) -> Result<Vec<Vec<EntityMention>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sidecar(&text, path, sentences)
}

pub fn parse_sidecar(text: &str, origin: &Path, sentences: &[Sentence]) -> Result<Vec<Vec<EntityMention>>> {
    super::check_dense(sentences)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: MentionRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(origin, i + 1, e))?;
        records.push((format!("{}:{}", origin.display(), i + 1), record));
    }
    let texts: Vec<&str> = sentences.iter().map(|s| s.text.as_str()).collect();
    assemble_records(records, &texts)
}

/// Writes mentions in sidecar format, ordered by sentence id then offset.
pub fn write_sidecar<W: Write>(mut out: W, mentions: &[Vec<EntityMention>]) -> std::io::Result<()> {
    for (id, ms) in mentions.iter().enumerate() {
        for m in ms {
            let record = MentionRecord::from_mention(id as u32, m);
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}
