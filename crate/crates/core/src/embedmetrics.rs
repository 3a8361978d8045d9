//! Legal vocabulary coverage (LVC) and centroid-based assessment (LECA) of
//! static embedding tables, plus TSV export for external projection tools.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoders::EmbeddingTable;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One term per line; blank lines are ignored.
pub fn parse_terms(src: &str) -> BTreeSet<String> {
    src.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn load_terms(path: impl AsRef<Path>) -> Result<BTreeSet<String>> {
    Ok(parse_terms(&fs::read_to_string(path)?))
}

/// Number of legal terms present in the vocabulary.
pub fn covered_terms<T: Scalar>(
    table: &EmbeddingTable<T>,
    legal_terms: &BTreeSet<String>,
) -> usize {
    legal_terms
        .iter()
        .filter(|t| table.vocab.contains(t))
        .count()
}

/// `|V ∩ L| / |L|`.
pub fn lvc<T: Scalar>(table: &EmbeddingTable<T>, legal_terms: &BTreeSet<String>) -> Result<f64> {
    if legal_terms.is_empty() {
        return Err(Error::invalid("legal term list is empty"));
    }
    Ok(covered_terms(table, legal_terms) as f64 / legal_terms.len() as f64)
}

/// Mean vector of the covered terms.
pub fn centroid<T: Scalar>(
    table: &EmbeddingTable<T>,
    terms: &BTreeSet<String>,
) -> Result<Vec<f64>> {
    let mut sum = vec![0.0; table.dim()];
    let mut n = 0usize;
    for t in terms {
        if let Some(v) = table.vector(t) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x.to_f64_lossy();
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid("no term is covered by the vocabulary"));
    }
    Ok(sum.into_iter().map(|s| s / n as f64).collect())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `1 - cos(a, b)`; both vectors must be non-zero.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Option<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Some(1.0 - dot / (na * nb))
}

/// LECA together with its coverage bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LecaStats {
    pub leca: f64,
    pub sentences_used: usize,
    pub skipped_sentences: usize,
    pub skipped_tokens: usize,
}

/// Mean over sentences of the mean cosine distance between each
/// in-vocabulary token and the legal-term centroid. Sentence length counts
/// in-vocabulary tokens only; all-OOV sentences are skipped.
pub fn leca<T: Scalar, S: AsRef<str>>(
    table: &EmbeddingTable<T>,
    legal_terms: &BTreeSet<String>,
    sentences: &[Vec<S>],
) -> Result<LecaStats> {
    let c = centroid(table, legal_terms)?;
    if norm(&c) == 0.0 {
        return Err(Error::invalid("legal-term centroid is the zero vector"));
    }
    let mut total = 0.0;
    let mut used = 0usize;
    let mut skipped_sentences = 0usize;
    let mut skipped_tokens = 0usize;
    let mut buf = Vec::with_capacity(table.dim());
    for s in sentences {
        let mut acc = 0.0;
        let mut n = 0usize;
        for tok in s {
            let tok = tok.as_ref();
            let Some(v) = table.vector(tok) else {
                skipped_tokens += 1;
                continue;
            };
            buf.clear();
            buf.extend(v.iter().map(|x| x.to_f64_lossy()));
            acc += cosine_distance(&buf, &c)
                .ok_or_else(|| Error::invalid(format!("token `{tok}` has a zero-norm vector")))?;
            n += 1;
        }
        if n == 0 {
            skipped_sentences += 1;
        } else {
            total += acc / n as f64;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::invalid("no sentence has an in-vocabulary token"));
    }
    Ok(LecaStats {
        leca: total / used as f64,
        sentences_used: used,
        skipped_sentences,
        skipped_tokens,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub lvc: f64,
    pub leca: f64,
    pub covered_terms: usize,
    pub legal_terms: usize,
    pub skipped_tokens: usize,
    pub skipped_sentences: usize,
    /// How sentence length is counted in LECA.
    pub length_convention: String,
}

pub fn report<T: Scalar, S: AsRef<str>>(
    table: &EmbeddingTable<T>,
    legal_terms: &BTreeSet<String>,
    sentences: &[Vec<S>],
) -> Result<MetricReport> {
    let lvc = lvc(table, legal_terms)?;
    let stats = leca(table, legal_terms, sentences)?;
    Ok(MetricReport {
        lvc,
        leca: stats.leca,
        covered_terms: covered_terms(table, legal_terms),
        legal_terms: legal_terms.len(),
        skipped_tokens: stats.skipped_tokens,
        skipped_sentences: stats.skipped_sentences,
        length_convention: "in_vocabulary_tokens".into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermLabel {
    Legal,
    Nonlegal,
}

impl TermLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            TermLabel::Legal => "legal",
            TermLabel::Nonlegal => "nonlegal",
        }
    }
}

/// `word<TAB>label<TAB>v1..vd` for the first `top_k` vocabulary rows (the
/// table's file order, which is frequency order for GloVe-style files).
/// Words without a label are `nonlegal`.
pub fn export_projection<T: Scalar>(
    table: &EmbeddingTable<T>,
    labels: &BTreeMap<String, TermLabel>,
    top_k: usize,
) -> String {
    let mut out = String::new();
    for (i, w) in table.vocab.words().iter().take(top_k).enumerate() {
        let label = labels.get(w).copied().unwrap_or(TermLabel::Nonlegal);
        out.push_str(w);
        out.push('\t');
        out.push_str(label.as_str());
        for v in table.matrix.row(i) {
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
    }
    out
}

/// Labels every listed term `legal`.
pub fn legal_labels(terms: &BTreeSet<String>) -> BTreeMap<String, TermLabel> {
    terms
        .iter()
        .map(|t| (t.clone(), TermLabel::Legal))
        .collect()
}
