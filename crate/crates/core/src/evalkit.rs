//! Retrieval and classification metrics.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Precision, recall and F2.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf2 {
    pub precision: f64,
    pub recall: f64,
    pub f2: f64,
}

/// Empty denominators count as 0.
pub fn prf2<S: Ord>(gold: &BTreeSet<S>, retrieved: &BTreeSet<S>) -> Prf2 {
    let hit = gold.intersection(retrieved).count() as f64;
    let precision = if retrieved.is_empty() {
        0.0
    } else {
        hit / retrieved.len() as f64
    };
    let recall = if gold.is_empty() {
        0.0
    } else {
        hit / gold.len() as f64
    };
    Prf2 {
        precision,
        recall,
        f2: f2(precision, recall),
    }
}

pub fn f2(p: f64, r: f64) -> f64 {
    if p == 0.0 && r == 0.0 {
        0.0
    } else {
        5.0 * p * r / (4.0 * p + r)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalJudgment {
    #[serde(default)]
    pub qid: String,
    pub gold: BTreeSet<String>,
    pub retrieved: Vec<String>,
}

impl RetrievalJudgment {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for r in &self.retrieved {
            if !seen.insert(r) {
                return Err(Error::DuplicateId(r.clone()));
            }
        }
        Ok(())
    }
}

/// JSONL `{"qid","gold":[...],"retrieved":[...]}`.
pub fn parse_judgments(src: &str) -> Result<Vec<RetrievalJudgment>> {
    let mut out = Vec::new();
    for (i, line) in src.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let j: RetrievalJudgment = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        j.validate().map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(j);
    }
    Ok(out)
}

pub fn load_judgments(path: impl AsRef<Path>) -> Result<Vec<RetrievalJudgment>> {
    parse_judgments(&fs::read_to_string(path)?)
}

/// Per-query P/R/F2 at cut-off `k`, averaged arithmetically.
pub fn macro_f2(judgments: &[RetrievalJudgment], k: usize) -> Result<Prf2> {
    if judgments.is_empty() {
        return Err(Error::invalid("no judgments to average"));
    }
    let mut sum = Prf2::default();
    for j in judgments {
        let got: BTreeSet<&str> = j.retrieved.iter().take(k).map(String::as_str).collect();
        let gold: BTreeSet<&str> = j.gold.iter().map(String::as_str).collect();
        let s = prf2(&gold, &got);
        sum.precision += s.precision;
        sum.recall += s.recall;
        sum.f2 += s.f2;
    }
    let n = judgments.len() as f64;
    Ok(Prf2 {
        precision: sum.precision / n,
        recall: sum.recall / n,
        f2: sum.f2 / n,
    })
}

pub fn accuracy(preds: &[bool], golds: &[bool]) -> Result<f64> {
    if preds.len() != golds.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} labels",
            preds.len(),
            golds.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::invalid("no predictions"));
    }
    let hits = preds.iter().zip(golds).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// `(1/n) sum_i p_i / s` over evaluators.
pub fn aggregate_human_eval(positives: &[u32], s: u32) -> Result<f64> {
    if s == 0 {
        return Err(Error::invalid("sample size must be >= 1"));
    }
    if positives.is_empty() {
        return Err(Error::invalid("no evaluators"));
    }
    if let Some(p) = positives.iter().find(|&&p| p > s) {
        return Err(Error::invalid(format!("{p} positives out of {s} samples")));
    }
    let sum: f64 = positives.iter().map(|&p| p as f64 / s as f64).sum();
    Ok(sum / positives.len() as f64)
}
