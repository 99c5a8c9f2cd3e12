//! Lexical BM25 index over a support corpus and constrained retrieval of a
//! support sentence for a (context sentence, answer entity) pair.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use crate::corpus::Sentence;
use crate::entities::EntityMention;
use crate::error::{Error, Result};

const INDEX_MAGIC: &[u8; 6] = b"MPIDX1";

/// Lowercase, split on anything that is not alphanumeric, drop empties.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bm25Index {
    /// term -> (slot, term frequency), slots ascending.
    postings: BTreeMap<String, Vec<(u32, u32)>>,
    /// slot -> caller-supplied document id, ascending.
    ids: Vec<u32>,
    /// slot -> token count (always ≥ 1).
    lengths: Vec<u32>,
    avg_len: f64,
    params: Bm25Params,
}

impl Bm25Index {
    /// Indexes `(id, text)` pairs. Texts with no tokens are left out and do
    /// not count towards `N`.
    pub fn build<'a>(docs: impl IntoIterator<Item = (u32, &'a str)>, params: Bm25Params) -> Self {
        let mut docs: Vec<(u32, &str)> = docs.into_iter().collect();
        docs.sort_by_key(|(id, _)| *id);
        docs.dedup_by_key(|(id, _)| *id);

        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut ids = Vec::new();
        let mut lengths = Vec::new();
        for (id, text) in docs {
            let tokens = tokenize(text);
            if tokens.is_empty() {
                continue;
            }
            let slot = ids.len() as u32;
            ids.push(id);
            lengths.push(tokens.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (t, f) in tf {
                postings.entry(t).or_default().push((slot, f));
            }
        }
        let avg_len = if lengths.is_empty() {
            0.0
        } else {
            lengths.iter().map(|&l| l as f64).sum::<f64>() / lengths.len() as f64
        };
        Bm25Index {
            postings,
            ids,
            lengths,
            avg_len,
            params,
        }
    }

    pub fn build_from_sentences(sentences: &[Sentence], params: Bm25Params) -> Self {
        Self::build(sentences.iter().map(|s| (s.sentence_id, s.text.as_str())), params)
    }

    /// Number of indexed documents.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn doc_freqs(&self) -> impl Iterator<Item = (&str, usize)> {
        self.postings.iter().map(|(t, p)| (t.as_str(), p.len()))
    }

    pub fn term_frequency(&self, term: &str, id: u32) -> u32 {
        let Some(slot) = self.slot(id) else { return 0 };
        self.postings
            .get(term)
            .and_then(|p| p.binary_search_by_key(&slot, |(s, _)| *s).ok().map(|i| p[i].1))
            .unwrap_or(0)
    }

    pub fn doc_len(&self, id: u32) -> Option<u32> {
        self.slot(id).map(|s| self.lengths[s as usize])
    }

    fn slot(&self, id: u32) -> Option<u32> {
        self.ids.binary_search(&id).ok().map(|s| s as u32)
    }

    /// `ln((N - df + 0.5) / (df + 0.5) + 1)`.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.doc_freq(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn term_score(&self, idf: f64, tf: u32, len: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len as f64 / self.avg_len))
    }

    /// BM25 of one indexed document; terms absent from it contribute 0.
    /// Repeated query tokens count once per occurrence.
    pub fn score(&self, query: &[String], id: u32) -> f64 {
        let Some(slot) = self.slot(id) else { return 0.0 };
        let len = self.lengths[slot as usize];
        query
            .iter()
            .map(|t| {
                let tf = self.term_frequency(t, id);
                if tf == 0 {
                    0.0
                } else {
                    self.term_score(self.idf(t), tf, len)
                }
            })
            .sum()
    }

    /// Documents sharing at least one query token, by descending score then
    /// ascending id, truncated to `top_k` if given.
    pub fn search(&self, query: &[String], top_k: Option<usize>) -> Vec<(u32, f64)> {
        let mut candidates: Vec<u32> = query
            .iter()
            .filter_map(|t| self.postings.get(t))
            .flat_map(|p| p.iter().map(|(slot, _)| *slot))
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        let mut scored: Vec<(u32, f64)> = candidates
            .into_iter()
            .map(|slot| {
                let id = self.ids[slot as usize];
                (id, self.score(query, id))
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        if let Some(k) = top_k {
            scored.truncate(k);
        }
        scored
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&self.params.k1.to_le_bytes())?;
        w.write_all(&self.params.b.to_le_bytes())?;
        w.write_all(&(self.ids.len() as u64).to_le_bytes())?;
        for (&id, &len) in self.ids.iter().zip(&self.lengths) {
            w.write_all(&id.to_le_bytes())?;
            w.write_all(&len.to_le_bytes())?;
        }
        w.write_all(&(self.postings.len() as u64).to_le_bytes())?;
        for (term, list) in &self.postings {
            w.write_all(&(term.len() as u32).to_le_bytes())?;
            w.write_all(term.as_bytes())?;
            w.write_all(&(list.len() as u32).to_le_bytes())?;
            for &(slot, tf) in list {
                w.write_all(&slot.to_le_bytes())?;
                w.write_all(&tf.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut bytes.as_slice())
            .map_err(|e| Error::parse(path, 0, format!("bad index file: {e}")))
    }

    pub fn read_from<R: Read>(r: &mut R) -> std::io::Result<Self> {
        fn bad(msg: &str) -> std::io::Error {
            std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string())
        }
        fn u32_(r: &mut impl Read) -> std::io::Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        }
        fn u64_(r: &mut impl Read) -> std::io::Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        }

        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != INDEX_MAGIC {
            return Err(bad("missing MPIDX1 header"));
        }
        let k1 = f64::from_bits(u64_(r)?);
        let b = f64::from_bits(u64_(r)?);
        let n = u64_(r)? as usize;
        let mut ids = Vec::with_capacity(n);
        let mut lengths = Vec::with_capacity(n);
        for _ in 0..n {
            ids.push(u32_(r)?);
            let len = u32_(r)?;
            if len == 0 {
                return Err(bad("zero document length"));
            }
            lengths.push(len);
        }
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("document ids not ascending"));
        }
        let terms = u64_(r)? as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..terms {
            let tl = u32_(r)? as usize;
            let mut tb = vec![0u8; tl];
            r.read_exact(&mut tb)?;
            let term = String::from_utf8(tb).map_err(|_| bad("term is not UTF-8"))?;
            let pl = u32_(r)? as usize;
            let mut list = Vec::with_capacity(pl);
            for _ in 0..pl {
                let slot = u32_(r)?;
                if slot as usize >= n {
                    return Err(bad("posting slot out of range"));
                }
                list.push((slot, u32_(r)?));
            }
            postings.insert(term, list);
        }
        let avg_len = if n == 0 {
            0.0
        } else {
            lengths.iter().map(|&l| l as f64).sum::<f64>() / n as f64
        };
        Ok(Bm25Index {
            postings,
            ids,
            lengths,
            avg_len,
            params: Bm25Params { k1, b },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetrievalConstraints {
    /// (a) the candidate mentions the answer entity.
    pub require_answer_entity: bool,
    /// (b) the candidate comes from a different document than the query.
    pub exclude_source_context: bool,
    /// (c) entity keys, besides the answer, shared with the query sentence or its context.
    pub min_extra_shared_entities: usize,
    /// Candidates considered, by BM25 rank, before filtering.
    pub top_k: usize,
}

impl Default for RetrievalConstraints {
    fn default() -> Self {
        RetrievalConstraints {
            require_answer_entity: true,
            exclude_source_context: true,
            min_extra_shared_entities: 1,
            top_k: 50,
        }
    }
}

/// Sentences available for retrieval, their mentions, and a BM25 index
/// keyed by position in `sentences`.
#[derive(Debug, Clone)]
pub struct SupportCorpus {
    sentences: Vec<Sentence>,
    mentions: Vec<Vec<EntityMention>>,
    keys: Vec<HashSet<String>>,
    index: Bm25Index,
}

pub struct RetrievalQuery<'a> {
    pub sentence: &'a Sentence,
    pub sentence_mentions: &'a [EntityMention],
    pub answer: &'a EntityMention,
    /// Keys of every mention in the query sentence's document.
    pub context_entities: &'a HashSet<String>,
}

impl SupportCorpus {
    pub fn new(sentences: Vec<Sentence>, mentions: Vec<Vec<EntityMention>>, params: Bm25Params) -> Result<Self> {
        if sentences.len() != mentions.len() {
            return Err(Error::Argument(format!(
                "{} support sentences but {} mention lists",
                sentences.len(),
                mentions.len()
            )));
        }
        let index = Bm25Index::build(
            sentences.iter().enumerate().map(|(i, s)| (i as u32, s.text.as_str())),
            params,
        );
        Ok(Self::with_index(sentences, mentions, index))
    }

    /// Uses a prebuilt (e.g. loaded) index whose ids are positions in `sentences`.
    pub fn with_index(sentences: Vec<Sentence>, mentions: Vec<Vec<EntityMention>>, index: Bm25Index) -> Self {
        let keys = mentions
            .iter()
            .map(|ms| ms.iter().map(|m| m.normalized_key.clone()).collect())
            .collect();
        SupportCorpus {
            sentences,
            mentions,
            keys,
            index,
        }
    }

    pub fn index(&self) -> &Bm25Index {
        &self.index
    }

    pub fn sentence(&self, pos: usize) -> &Sentence {
        &self.sentences[pos]
    }

    pub fn mentions(&self, pos: usize) -> &[EntityMention] {
        &self.mentions[pos]
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    fn qualifies(&self, pos: usize, query: &RetrievalQuery<'_>, c: &RetrievalConstraints) -> bool {
        let cand = &self.sentences[pos];
        let keys = &self.keys[pos];
        let answer_key = &query.answer.normalized_key;
        if c.require_answer_entity && !keys.contains(answer_key) {
            return false;
        }
        if c.exclude_source_context && cand.doc_id == query.sentence.doc_id {
            return false;
        }
        if cand.text == query.sentence.text {
            return false;
        }
        if c.min_extra_shared_entities > 0 {
            let shared = keys
                .iter()
                .filter(|k| *k != answer_key)
                .filter(|k| {
                    query.context_entities.contains(*k)
                        || query.sentence_mentions.iter().any(|m| &m.normalized_key == *k)
                })
                .count();
            if shared < c.min_extra_shared_entities {
                return false;
            }
        }
        true
    }

    /// Position of the best-ranked support sentence satisfying every enabled
    /// constraint, or `None`.
    pub fn retrieve(&self, query: &RetrievalQuery<'_>, constraints: &RetrievalConstraints) -> Option<usize> {
        let tokens = tokenize(&query.sentence.text);
        self.index
            .search(&tokens, Some(constraints.top_k))
            .into_iter()
            .map(|(id, _)| id as usize)
            .find(|&pos| self.qualifies(pos, query, constraints))
    }
}

/// Free-function form of [`SupportCorpus::retrieve`] returning the sentence.
pub fn retrieve_support_sentence<'c>(
    corpus: &'c SupportCorpus,
    query: &RetrievalQuery<'_>,
    constraints: &RetrievalConstraints,
) -> Option<&'c Sentence> {
    corpus.retrieve(query, constraints).map(|p| corpus.sentence(p))
}

/// Keys of all mentions in each document, for the `context_entities` of a query.
pub fn context_entities_by_doc<'a>(
    sentences: &'a [Sentence],
    mentions: &[Vec<EntityMention>],
) -> HashMap<&'a str, HashSet<String>> {
    let mut out: HashMap<&str, HashSet<String>> = HashMap::new();
    for (s, ms) in sentences.iter().zip(mentions) {
        let entry = out.entry(s.doc_id.as_str()).or_default();
        entry.extend(ms.iter().map(|m| m.normalized_key.clone()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(q: &str) -> Vec<String> {
        tokenize(q)
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("B b, Crypto.com!"), vec!["b", "b", "crypto", "com"]);
        assert!(tokenize(" ..; ").is_empty());
    }

    #[test]
    fn doc_freq_counts() {
        let idx = Bm25Index::build([(0, "a b"), (1, "b c")], Bm25Params::default());
        let df: Vec<_> = idx.doc_freqs().collect();
        assert_eq!(df, vec![("a", 1), ("b", 2), ("c", 1)]);
        assert_eq!(idx.avg_len(), 2.0);
    }

    #[test]
    fn empty_corpus() {
        let idx = Bm25Index::build(Vec::<(u32, &str)>::new(), Bm25Params::default());
        assert_eq!(idx.len(), 0);
        assert!(idx.search(&toks("anything"), None).is_empty());
    }

    #[test]
    fn case_folded_tf() {
        let idx = Bm25Index::build([(0, "B b")], Bm25Params::default());
        assert_eq!(idx.term_frequency("b", 0), 2);
    }

    #[test]
    fn single_document_score() {
        // N = df = 1: idf = ln(0.5 / 1.5 + 1), and len = avg_len makes the tf factor 1.
        let idx = Bm25Index::build([(0, "a")], Bm25Params::default());
        assert!((idx.idf("a") - (4.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((idx.score(&toks("a"), 0) - 0.287_682_072_451_780_9).abs() < 1e-12);
        assert_eq!(idx.score(&toks("z"), 0), 0.0);
    }

    #[test]
    fn duplicates_score_identically_and_tie_break_by_id() {
        let idx = Bm25Index::build([(3, "x y"), (1, "x y"), (2, "q")], Bm25Params::default());
        let hits = idx.search(&toks("x"), None);
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].1, hits[1].1);
        assert_eq!((hits[0].0, hits[1].0), (1, 3));
    }

    #[test]
    fn tokenless_documents_are_not_indexed() {
        let idx = Bm25Index::build([(0, "..."), (1, "a")], Bm25Params::default());
        assert_eq!(idx.len(), 1);
        assert_eq!(idx.doc_len(0), None);
    }

    #[test]
    fn binary_round_trip() {
        let idx = Bm25Index::build([(0, "a b"), (5, "b c c"), (9, "Zürich b")], Bm25Params::default());
        let mut buf = Vec::new();
        idx.write_to(&mut buf).unwrap();
        assert!(buf.starts_with(b"MPIDX1"));
        let back = Bm25Index::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, idx);
        buf[0] = b'X';
        assert!(Bm25Index::read_from(&mut buf.as_slice()).is_err());
    }
}
