//! Legal corpora and query sets: JSONL ingestion, enumeration chunking,
//! length statistics and seeded splits.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub statements: Vec<String>,
}

impl Article {
    pub fn new(id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            text: text.into(),
            statements: Vec::new(),
        }
    }

    /// Statements if chunked, otherwise the whole text.
    pub fn segments(&self) -> Vec<&str> {
        if self.statements.is_empty() {
            vec![self.text.as_str()]
        } else {
            self.statements.iter().map(String::as_str).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub relevant_ids: BTreeSet<String>,
    /// `Some(true)` when the statement is entailed (lawful).
    #[serde(default, rename = "label")]
    pub entailment_label: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub mean_len: f64,
    pub std_len: f64,
    pub count: usize,
}

pub type Corpus = Vec<Article>;

#[derive(Deserialize)]
struct ArticleLine {
    id: String,
    #[serde(default)]
    title: String,
    text: String,
}

/// Reads a JSONL corpus: one `{"id","title","text"}` object per line.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    parse_corpus(&fs::read_to_string(path)?)
}

pub fn parse_corpus(src: &str) -> Result<Corpus> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in src.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ArticleLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if rec.id.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                msg: "empty article id".into(),
            });
        }
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        out.push(Article::new(rec.id, rec.title, rec.text));
    }
    Ok(out)
}

/// Reads a JSONL query file: `{"id","text","relevant_ids":[...],"label":bool|null}`.
pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<Query>> {
    parse_queries(&fs::read_to_string(path)?)
}

pub fn parse_queries(src: &str) -> Result<Vec<Query>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in src.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let q: Query = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if !seen.insert(q.id.clone()) {
            return Err(Error::DuplicateId(q.id));
        }
        out.push(q);
    }
    Ok(out)
}

/// Checks that every relevant id of every query names an article.
pub fn resolve_queries(corpus: &[Article], queries: &[Query]) -> Result<()> {
    let ids: HashSet<&str> = corpus.iter().map(|a| a.id.as_str()).collect();
    for q in queries {
        if let Some(missing) = q.relevant_ids.iter().find(|r| !ids.contains(r.as_str())) {
            return Err(Error::UnknownDoc(format!("{missing} (query {})", q.id)));
        }
    }
    Ok(())
}

fn marker_regex() -> &'static Regex {
    use std::sync::OnceLock;
    static RE: OnceLock<Regex> = OnceLock::new();
    // a decimal marker at the start of the text or after sentence-ending
    // punctuation / a newline
    RE.get_or_init(|| Regex::new(r"(?:^|[.;:?!。\n])\s*(\(\d+\))").expect("valid regex"))
}

/// Positions where top-level `(n)` enumeration items start.
fn marker_starts(text: &str) -> Vec<usize> {
    marker_regex()
        .captures_iter(text)
        .map(|c| c.get(1).expect("group").start())
        .collect()
}

/// Splits an article at top-level `(1)`, `(2)`, ... markers.
///
/// Roman-numeral items stay inside their parent statement. Text before the
/// first marker, if any, becomes its own statement.
pub fn chunk_article(article: &Article) -> Article {
    let text = article.text.as_str();
    let mut cuts = marker_starts(text);
    if cuts.first() != Some(&0) {
        cuts.insert(0, 0);
    }
    cuts.push(text.len());
    let statements: Vec<String> = cuts
        .windows(2)
        .map(|w| text[w[0]..w[1]].trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    let statements = if statements.is_empty() {
        vec![text.to_string()]
    } else {
        statements
    };
    Article {
        statements,
        ..article.clone()
    }
}

pub fn chunk_corpus(corpus: &[Article]) -> Corpus {
    corpus.iter().map(chunk_article).collect()
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Mean and population standard deviation of whitespace word counts.
pub fn corpus_stats<S: AsRef<str>>(texts: &[S]) -> CorpusStats {
    let n = texts.len();
    if n == 0 {
        return CorpusStats {
            mean_len: 0.0,
            std_len: 0.0,
            count: 0,
        };
    }
    let lens: Vec<f64> = texts
        .iter()
        .map(|t| word_count(t.as_ref()) as f64)
        .collect();
    let mean = lens.iter().sum::<f64>() / n as f64;
    let var = lens.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n as f64;
    CorpusStats {
        mean_len: mean,
        std_len: var.sqrt(),
        count: n,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle, then val/test sizes are the rounded ratios and the
/// remainder goes to train.
pub fn split_dataset<T: Clone>(
    items: &[T],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<Split<T>> {
    let (tr, va, te) = ratios;
    if tr <= 0.0 || va <= 0.0 || te <= 0.0 || ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split ratios must be positive and sum to 1, got ({tr}, {va}, {te})"
        )));
    }
    let n = items.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n as f64) * va).round() as usize;
    let n_test = (((n as f64) * te).round() as usize).min(n - n_val.min(n));
    let n_val = n_val.min(n);
    let n_train = n - n_val - n_test;
    let pick = |r: &[usize]| r.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok(Split {
        train: pick(&order[..n_train]),
        val: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    })
}
