use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Aligned translation pairs, in document order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BilingualDoc {
    pub pairs: Vec<(String, String)>,
}

impl BilingualDoc {
    pub fn new(pairs: Vec<(String, String)>) -> Result<Self> {
        if pairs.iter().any(|(a, b)| a.is_empty() || b.is_empty()) {
            return Err(Error::invalid("bilingual pair with an empty side"));
        }
        Ok(Self { pairs })
    }

    fn side(&self, lang: Side, i: usize) -> &str {
        match lang {
            Side::A => &self.pairs[i].0,
            Side::B => &self.pairs[i].1,
        }
    }
}

/// Reads JSONL `{"pairs":[["a","b"],...]}`, one document per line.
pub fn load_bilingual(path: impl AsRef<Path>) -> Result<Vec<BilingualDoc>> {
    let src = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in src.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: BilingualDoc = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(BilingualDoc::new(doc.pairs).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PairTask {
    Nfsp,
    Nmsp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PairLabel {
    Consecutive,
    NotConsecutive,
    Next,
    Prev,
    None,
}

impl PairLabel {
    pub fn belongs_to(self, task: PairTask) -> bool {
        match task {
            PairTask::Nfsp => matches!(self, PairLabel::Consecutive | PairLabel::NotConsecutive),
            PairTask::Nmsp => matches!(self, PairLabel::Next | PairLabel::Prev | PairLabel::None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairExample {
    pub first: String,
    pub second: String,
    pub label: PairLabel,
    pub task: PairTask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    A,
    B,
}

type Slot = (Side, usize);

fn check_doc(doc: &BilingualDoc, neg_ratio: f64) -> Result<()> {
    if doc.pairs.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 aligned pairs, got {}",
            doc.pairs.len()
        )));
    }
    if !(neg_ratio >= 0.0 && neg_ratio.is_finite()) {
        return Err(Error::invalid(format!(
            "negative ratio must be >= 0, got {neg_ratio}"
        )));
    }
    Ok(())
}

/// Draws `count` slot pairs with index gap >= 2 from the given language
/// combinations. Sampling is without replacement until the pool is
/// exhausted, then starts over on a fresh shuffle.
fn sample_negatives(
    n: usize,
    combos: &[(Side, Side)],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(Slot, Slot)>> {
    let mut pool = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i.abs_diff(j) >= 2 {
                for &(s, t) in combos {
                    pool.push(((s, i), (t, j)));
                }
            }
        }
    }
    if count > 0 && pool.is_empty() {
        return Err(Error::invalid(format!(
            "a {n}-pair document has no sentence pairs at index gap >= 2 to use as negatives"
        )));
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut round = pool.clone();
        round.shuffle(rng);
        let take = (count - out.len()).min(round.len());
        out.extend_from_slice(&round[..take]);
    }
    Ok(out)
}

fn example(doc: &BilingualDoc, a: Slot, b: Slot, label: PairLabel, task: PairTask) -> PairExample {
    PairExample {
        first: doc.side(a.0, a.1).to_string(),
        second: doc.side(b.0, b.1).to_string(),
        label,
        task,
    }
}

fn negative_count(positives: usize, neg_ratio: f64) -> usize {
    (neg_ratio * positives as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Next Foreign Sentence Prediction: cross-lingual consecutive pairs
/// `(a_i, b_{i+1})` and `(b_i, a_{i+1})`, plus seeded cross-lingual
/// negatives at index gap >= 2.
pub fn gen_nfsp(doc: &BilingualDoc, seed: u64, neg_ratio: f64) -> Result<Vec<PairExample>> {
    check_doc(doc, neg_ratio)?;
    let n = doc.pairs.len();
    let task = PairTask::Nfsp;
    let mut out = Vec::new();
    for i in 0..n - 1 {
        out.push(example(
            doc,
            (Side::A, i),
            (Side::B, i + 1),
            PairLabel::Consecutive,
            task,
        ));
        out.push(example(
            doc,
            (Side::B, i),
            (Side::A, i + 1),
            PairLabel::Consecutive,
            task,
        ));
    }
    let count = negative_count(out.len(), neg_ratio);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let combos = [(Side::A, Side::B), (Side::B, Side::A)];
    for (x, y) in sample_negatives(n, &combos, count, &mut rng)? {
        out.push(example(doc, x, y, PairLabel::NotConsecutive, task));
    }
    Ok(out)
}

/// Neighbor Multilingual Sentence Prediction: for every adjacent index and
/// each of the four language combinations, `(s_i, t_{i+1})` is NEXT and
/// `(s_{i+1}, t_i)` is PREV; NONE negatives sit at index gap >= 2.
pub fn gen_nmsp(doc: &BilingualDoc, seed: u64, neg_ratio: f64) -> Result<Vec<PairExample>> {
    check_doc(doc, neg_ratio)?;
    let n = doc.pairs.len();
    let task = PairTask::Nmsp;
    let combos = [
        (Side::A, Side::A),
        (Side::A, Side::B),
        (Side::B, Side::A),
        (Side::B, Side::B),
    ];
    let mut out = Vec::new();
    for i in 0..n - 1 {
        for &(s, t) in &combos {
            out.push(example(doc, (s, i), (t, i + 1), PairLabel::Next, task));
            out.push(example(doc, (s, i + 1), (t, i), PairLabel::Prev, task));
        }
    }
    let count = negative_count(out.len(), neg_ratio);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (x, y) in sample_negatives(n, &combos, count, &mut rng)? {
        out.push(example(doc, x, y, PairLabel::None, task));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hello() -> BilingualDoc {
        BilingualDoc::new(vec![
            ("Hello.".into(), "こんにちは。".into()),
            ("How are you?".into(), "お元気ですか？".into()),
        ])
        .unwrap()
    }

    #[test]
    fn nfsp_constructed_example() {
        let ex = gen_nfsp(&hello(), 1, 0.0).unwrap();
        assert_eq!(ex.len(), 2);
        assert!(ex
            .iter()
            .any(|e| e.first == "Hello." && e.second == "お元気ですか？"));
        assert!(ex
            .iter()
            .any(|e| e.first == "こんにちは。" && e.second == "How are you?"));
        assert!(ex.iter().all(|e| e.label == PairLabel::Consecutive));
    }

    #[test]
    fn nmsp_counts_and_order() {
        let ex = gen_nmsp(&hello(), 3, 0.0).unwrap();
        let next = ex.iter().filter(|e| e.label == PairLabel::Next).count();
        let prev = ex.iter().filter(|e| e.label == PairLabel::Prev).count();
        assert_eq!((next, prev), (4, 4));
        // (b_2, a_1) is PREV
        assert!(ex.iter().any(|e| e.first == "お元気ですか？"
            && e.second == "Hello."
            && e.label == PairLabel::Prev));
    }

    #[test]
    fn determinism_and_errors() {
        let doc = BilingualDoc::new((0..6).map(|i| (format!("a{i}"), format!("b{i}"))).collect())
            .unwrap();
        assert_eq!(
            gen_nmsp(&doc, 9, 1.0).unwrap(),
            gen_nmsp(&doc, 9, 1.0).unwrap()
        );
        let one = BilingualDoc::new(vec![("x".into(), "y".into())]).unwrap();
        assert!(gen_nfsp(&one, 0, 1.0).is_err());
        assert!(gen_nmsp(&one, 0, 1.0).is_err());
        // two pairs have no gap-2 negatives
        assert!(gen_nfsp(&hello(), 0, 1.0).is_err());
        assert!(BilingualDoc::new(vec![("".into(), "y".into())]).is_err());
    }
}
