//! Tokenization, inverted index and Okapi BM25 scoring.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::Article;
use crate::error::{Error, Result};

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

/// Term statistics over a fixed document set.
///
/// Documents are addressed by their position in `doc_ids`; postings hold
/// `(doc index, term frequency)` in ascending doc order.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<(u32, u32)>>,
    doc_ids: Vec<String>,
    doc_len: Vec<u32>,
    avgdl: f64,
}

impl InvertedIndex {
    pub fn build(corpus: &[Article]) -> Result<Self> {
        let docs: Vec<(String, String)> = corpus
            .iter()
            .map(|a| (a.id.clone(), a.text.clone()))
            .collect();
        Self::from_texts(&docs)
    }

    pub fn from_texts(docs: &[(String, String)]) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::invalid("cannot index an empty corpus"));
        }
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut doc_len = Vec::with_capacity(docs.len());
        for (i, (_, text)) in docs.iter().enumerate() {
            let toks = tokenize(text);
            doc_len.push(toks.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in toks {
                *tf.entry(t).or_insert(0) += 1;
            }
            for (t, c) in tf {
                postings.entry(t).or_default().push((i as u32, c));
            }
        }
        let doc_ids = docs.iter().map(|(id, _)| id.clone()).collect();
        Ok(Self::assemble(postings, doc_ids, doc_len))
    }

    fn assemble(
        postings: BTreeMap<String, Vec<(u32, u32)>>,
        doc_ids: Vec<String>,
        doc_len: Vec<u32>,
    ) -> Self {
        let avgdl = doc_len.iter().map(|&l| l as f64).sum::<f64>() / doc_len.len() as f64;
        Self {
            postings,
            doc_ids,
            doc_len,
            avgdl,
        }
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_index(&self, doc_id: &str) -> Option<usize> {
        self.doc_ids.iter().position(|d| d == doc_id)
    }

    pub fn doc_len(&self, doc: usize) -> u32 {
        self.doc_len[doc]
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn tf(&self, term: &str, doc: usize) -> u32 {
        self.postings
            .get(term)
            .and_then(|p| {
                p.binary_search_by_key(&(doc as u32), |&(d, _)| d)
                    .ok()
                    .map(|i| p[i].1)
            })
            .unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.n_docs() as f64;
        let df = self.df(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn term_weight(&self, tf: u32, doc: usize, p: Bm25Params) -> f64 {
        let tf = tf as f64;
        let norm = 1.0 - p.b + p.b * self.doc_len[doc] as f64 / self.avgdl.max(f64::MIN_POSITIVE);
        tf * (p.k1 + 1.0) / (tf + p.k1 * norm)
    }

    /// Okapi BM25 of `doc_id` against `query_terms` (repeated terms count
    /// repeatedly).
    pub fn bm25_score(&self, query_terms: &[String], doc_id: &str, p: Bm25Params) -> Result<f64> {
        let doc = self
            .doc_index(doc_id)
            .ok_or_else(|| Error::UnknownDoc(doc_id.to_string()))?;
        Ok(query_terms
            .iter()
            .map(|t| {
                let tf = self.tf(t, doc);
                if tf == 0 {
                    0.0
                } else {
                    self.idf(t) * self.term_weight(tf, doc, p)
                }
            })
            .sum())
    }

    /// Scores of every document, in index order.
    pub fn score_all(&self, query_terms: &[String], p: Bm25Params) -> Vec<f64> {
        let mut scores = vec![0.0; self.n_docs()];
        for t in query_terms {
            let Some(post) = self.postings.get(t) else {
                continue;
            };
            let idf = self.idf(t);
            for &(d, tf) in post {
                scores[d as usize] += idf * self.term_weight(tf, d as usize, p);
            }
        }
        scores
    }

    /// Best `n` documents by descending score, ties by ascending id.
    pub fn top_n(&self, query_terms: &[String], n: usize, p: Bm25Params) -> Vec<(String, f64)> {
        let scores = self.score_all(query_terms, p);
        let mut ranked: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
        ranked.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.doc_ids[a.0].cmp(&self.doc_ids[b.0]))
        });
        ranked.truncate(n);
        ranked
            .into_iter()
            .map(|(d, s)| (self.doc_ids[d].clone(), s))
            .collect()
    }

    /// `SLIX1`, then doc table and postings with length-prefixed UTF-8
    /// strings and little-endian `u32` counts.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(INDEX_MAGIC)?;
        put_u32(w, self.doc_ids.len() as u32)?;
        for (id, &len) in self.doc_ids.iter().zip(&self.doc_len) {
            put_str(w, id)?;
            put_u32(w, len)?;
        }
        put_u32(w, self.postings.len() as u32)?;
        for (term, post) in &self.postings {
            put_str(w, term)?;
            put_u32(w, post.len() as u32)?;
            for &(d, tf) in post {
                put_u32(w, d)?;
                put_u32(w, tf)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != INDEX_MAGIC {
            return Err(Error::Format("missing SLIX1 magic".into()));
        }
        let n = get_u32(r)? as usize;
        if n == 0 {
            return Err(Error::Format("index with no documents".into()));
        }
        let mut doc_ids = Vec::with_capacity(n);
        let mut doc_len = Vec::with_capacity(n);
        for _ in 0..n {
            doc_ids.push(get_str(r)?);
            doc_len.push(get_u32(r)?);
        }
        let n_terms = get_u32(r)? as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..n_terms {
            let term = get_str(r)?;
            let k = get_u32(r)? as usize;
            let mut post = Vec::with_capacity(k);
            for _ in 0..k {
                let d = get_u32(r)?;
                let tf = get_u32(r)?;
                if d as usize >= n || tf == 0 {
                    return Err(Error::Format(format!("bad posting for `{term}`")));
                }
                post.push((d, tf));
            }
            postings.insert(term, post);
        }
        Ok(Self::assemble(postings, doc_ids, doc_len))
    }
}

pub const INDEX_MAGIC: &[u8; 5] = b"SLIX1";

/// Lexical candidates kept per query when drawing training negatives.
pub const DEFAULT_N_TRAIN: usize = 50;
/// Lexical candidates kept per query at prediction time.
pub const DEFAULT_N_PREDICT: usize = 150;

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_str<R: Read>(r: &mut R) -> Result<String> {
    let len = get_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
}
