use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensorcore::Tensor;

/// What to do with tokens that are not in the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OovPolicy {
    /// Keep the position with an all-zero vector.
    #[default]
    ZeroVector,
    /// Drop the token.
    Skip,
}

/// Word to dense row index.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = Error;

    fn try_from(words: Vec<String>) -> Result<Self> {
        Self::new(words)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.words
    }
}

impl Vocab {
    pub fn new(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::DuplicateId(w.clone()));
            }
        }
        Ok(Self { words, index })
    }

    /// Words seen at least `min_count` times, most frequent first (ties
    /// alphabetical).
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for t in tokens {
            *counts.entry(t).or_insert(0) += 1;
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Self::new(kept.into_iter().map(|(w, _)| w.to_string()).collect()).expect("unique keys")
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Row indices for `tokens` under `policy`.
    pub fn lookup<S: AsRef<str>>(&self, tokens: &[S], policy: OovPolicy) -> Vec<Option<usize>> {
        tokens
            .iter()
            .map(|t| self.get(t.as_ref()))
            .filter(|i| policy == OovPolicy::ZeroVector || i.is_some())
            .collect()
    }
}

/// Static word embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T: Scalar = f64> {
    pub vocab: Vocab,
    pub matrix: Tensor<T>,
    pub oov_policy: OovPolicy,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn new(vocab: Vocab, matrix: Tensor<T>, oov_policy: OovPolicy) -> Result<Self> {
        if matrix.rank() != 2 || matrix.rows() != vocab.len() {
            return Err(Error::shape(format!(
                "embedding matrix {:?} does not match a vocabulary of {}",
                matrix.shape(),
                vocab.len()
            )));
        }
        Ok(Self {
            vocab,
            matrix,
            oov_policy,
        })
    }

    pub fn random<R: Rng + ?Sized>(
        vocab: Vocab,
        dim: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let m = Tensor::randn(&[vocab.len().max(1), dim], std, rng);
        Self::new(vocab, m, OovPolicy::ZeroVector)
    }

    /// Parses the GloVe text layout: `word v1 v2 ... vd` per line.
    pub fn parse_text(src: &str, oov_policy: OovPolicy) -> Result<Self> {
        let mut words = Vec::new();
        let mut data = Vec::new();
        let mut dim = None;
        for (i, line) in src.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let word = parts.next().expect("non-empty line");
            let vals: Vec<T> = parts
                .map(|p| {
                    p.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .map(T::of)
                        .ok_or_else(|| Error::Parse {
                            line: i + 1,
                            msg: format!("bad number `{p}`"),
                        })
                })
                .collect::<Result<_>>()?;
            match dim {
                None if vals.is_empty() => {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: "word without a vector".into(),
                    })
                }
                None => dim = Some(vals.len()),
                Some(d) if d != vals.len() => {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: format!("dimension {} differs from {}", vals.len(), d),
                    })
                }
                _ => {}
            }
            words.push(word.to_string());
            data.extend(vals);
        }
        let dim = dim.ok_or_else(|| Error::invalid("embedding file has no vectors"))?;
        let vocab = Vocab::new(words)?;
        let matrix = Tensor::matrix(vocab.len(), dim, data)?;
        Self::new(vocab, matrix, oov_policy)
    }

    pub fn load_text(path: impl AsRef<Path>, oov_policy: OovPolicy) -> Result<Self> {
        Self::parse_text(&fs::read_to_string(path)?, oov_policy)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, w) in self.vocab.words().iter().enumerate() {
            out.push_str(w);
            for v in self.matrix.row(i) {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vector(&self, word: &str) -> Option<&[T]> {
        self.vocab.get(word).map(|i| self.matrix.row(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glove_parsing() {
        let t =
            EmbeddingTable::<f64>::parse_text("lien 1 0\ntort 0 1.5\n", OovPolicy::Skip).unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.vector("tort").unwrap(), &[0.0, 1.5]);
        assert!(EmbeddingTable::<f64>::parse_text("a 1 2\nb 1\n", OovPolicy::Skip).is_err());
        assert!(EmbeddingTable::<f64>::parse_text("a 1 x\n", OovPolicy::Skip).is_err());
        assert!(EmbeddingTable::<f64>::parse_text("", OovPolicy::Skip).is_err());
        let back = EmbeddingTable::<f64>::parse_text(&t.to_text(), OovPolicy::Skip).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn vocab_build_and_lookup() {
        let v = Vocab::build(["b", "a", "b", "c", "a", "b"], 2);
        assert_eq!(v.words(), ["b", "a"]);
        assert_eq!(
            v.lookup(&["a", "zz", "b"], OovPolicy::ZeroVector),
            [Some(1), None, Some(0)]
        );
        assert_eq!(
            v.lookup(&["a", "zz", "b"], OovPolicy::Skip),
            [Some(1), Some(0)]
        );
    }
}
