//! Seeded synthetic fixtures: a retrieval corpus with complementary lexical
//! and semantic signals, a bracket grammar with three-level BIOE tags, and
//! binary SDOI targets.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Article, Query};
use crate::inject::{BioeSample, Part, SdoiMatrix, SdoiRecord, Tag};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalSpec {
    pub groups: usize,
    pub per_group: usize,
    pub concepts: usize,
    pub queries: usize,
    /// Fraction of groups in the validation and test splits.
    pub val: f64,
    pub test: f64,
}

impl Default for RetrievalSpec {
    fn default() -> Self {
        Self {
            groups: 100,
            per_group: 3,
            concepts: 5,
            queries: 200,
            val: 0.15,
            test: 0.15,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RetrievalFixture {
    pub corpus: Vec<Article>,
    pub train: Vec<Query>,
    pub val: Vec<Query>,
    pub test: Vec<Query>,
}

/// Articles come in groups sharing a rare group token; each article of a
/// group carries a different concept word inside fixed boilerplate. A query
/// names its group token and a query-side synonym of the concept that never
/// occurs in articles. Lexical matching finds the group, only a learned
/// model resolves the concept. Splits are by group, so held-out group
/// tokens are unseen.
pub fn planted_retrieval(spec: &RetrievalSpec, seed: u64) -> RetrievalFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Vec::new();
    let mut group_concepts = Vec::new();
    for g in 0..spec.groups {
        let mut concepts: Vec<usize> = (0..spec.concepts).collect();
        concepts.shuffle(&mut rng);
        concepts.truncate(spec.per_group);
        for (k, &c) in concepts.iter().enumerate() {
            let s1 = format!("(1) the person grp{g} shall acon{c} under this act.");
            let s2 = "(2) the right of the party is provided by other provision.".to_string();
            let s3 = "(3) such case is a matter of this act.".to_string();
            let mut a = Article::new(format!("g{g:03}a{k}"), "", format!("{s1} {s2} {s3}"));
            a.statements = vec![s1, s2, s3];
            corpus.push(a);
        }
        group_concepts.push(concepts);
    }
    let mut groups: Vec<usize> = (0..spec.groups).collect();
    groups.shuffle(&mut rng);
    let n_val = (spec.val * spec.groups as f64).round() as usize;
    let n_test = (spec.test * spec.groups as f64).round() as usize;
    let val_groups: BTreeSet<usize> = groups[..n_val].iter().copied().collect();
    let test_groups: BTreeSet<usize> = groups[n_val..n_val + n_test].iter().copied().collect();
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for qi in 0..spec.queries {
        let g = rng.random_range(0..spec.groups);
        let k = rng.random_range(0..spec.per_group);
        let c = group_concepts[g][k];
        let q = Query {
            id: format!("q{qi:03}"),
            text: format!("does the person grp{g} qcon{c} under this act"),
            relevant_ids: [format!("g{g:03}a{k}")].into_iter().collect(),
            entailment_label: None,
        };
        if val_groups.contains(&g) {
            val.push(q);
        } else if test_groups.contains(&g) {
            test.push(q);
        } else {
            train.push(q);
        }
    }
    RetrievalFixture {
        corpus,
        train,
        val,
        test,
    }
}

/// `if c.. then c.. [unless c..] .` with the condition tagged R on L1, the
/// consequence E on L2 and the exception U on L3. Content words are shared
/// across segments, so tags depend on context rather than identity.
pub fn bracket_corpus(n: usize, seed: u64) -> Vec<BioeSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<String> = (0..8).map(|i| format!("w{i}")).collect();
    (0..n)
        .map(|_| {
            let mut tokens = Vec::new();
            let mut tags: [Vec<Tag>; 3] = Default::default();
            let keyword = |kw: &str, tokens: &mut Vec<String>, tags: &mut [Vec<Tag>; 3]| {
                tokens.push(kw.to_string());
                for l in tags.iter_mut() {
                    l.push(Tag::O);
                }
            };
            let span = |len: usize,
                        level: usize,
                        part: Part,
                        tokens: &mut Vec<String>,
                        tags: &mut [Vec<Tag>; 3],
                        rng: &mut ChaCha8Rng| {
                for i in 0..len {
                    tokens.push(words.choose(rng).expect("non-empty").clone());
                    for (l, lv) in tags.iter_mut().enumerate() {
                        lv.push(if l != level {
                            Tag::O
                        } else if i == 0 {
                            Tag::B(part)
                        } else if i + 1 == len {
                            Tag::E(part)
                        } else {
                            Tag::I(part)
                        });
                    }
                }
            };
            keyword("if", &mut tokens, &mut tags);
            span(
                rng.random_range(2..=4),
                0,
                Part::R,
                &mut tokens,
                &mut tags,
                &mut rng,
            );
            keyword("then", &mut tokens, &mut tags);
            span(
                rng.random_range(2..=4),
                1,
                Part::E,
                &mut tokens,
                &mut tags,
                &mut rng,
            );
            if rng.random_bool(0.5) {
                keyword("unless", &mut tokens, &mut tags);
                span(
                    rng.random_range(2..=3),
                    2,
                    Part::U,
                    &mut tokens,
                    &mut tags,
                    &mut rng,
                );
            }
            keyword(".", &mut tokens, &mut tags);
            BioeSample::new(tokens, tags).expect("generated samples are well bracketed")
        })
        .collect()
}

/// Random token sequences of length `n` whose targets come from one fixed
/// random binary relation over `vocab`: entry `(i, j)` is `R[tok_i][tok_j]`.
/// On states that encode token identity, a head at least `vocab.len()` wide
/// reproduces every target exactly.
pub fn sdoi_records(samples: usize, n: usize, vocab: &[String], seed: u64) -> Vec<SdoiRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = vocab.len();
    let relation: Vec<Vec<f64>> = (0..v)
        .map(|_| {
            (0..v)
                .map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    (0..samples)
        .map(|_| {
            let ids: Vec<usize> = (0..n).map(|_| rng.random_range(0..v)).collect();
            let rows: Vec<Vec<f64>> = ids
                .iter()
                .map(|&a| ids.iter().map(|&b| relation[a][b]).collect())
                .collect();
            SdoiRecord {
                tokens: ids.iter().map(|&a| vocab[a].clone()).collect(),
                matrix: SdoiMatrix::new(&rows).expect("binary square"),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexical::{tokenize, Bm25Params, InvertedIndex};

    #[test]
    fn retrieval_fixture_shape() {
        let f = planted_retrieval(&RetrievalSpec::default(), 1);
        assert_eq!(f.corpus.len(), 300);
        assert_eq!(f.train.len() + f.val.len() + f.test.len(), 200);
        assert!(!f.val.is_empty() && !f.test.is_empty());
        let group = |q: &Query| {
            tokenize(&q.text)
                .into_iter()
                .find(|t| t.starts_with("grp"))
                .unwrap()
        };
        let train_groups: BTreeSet<String> = f.train.iter().map(group).collect();
        assert!(f.test.iter().all(|q| !train_groups.contains(&group(q))));
        // the relevant article is among the lexical top 3
        let idx = InvertedIndex::build(&f.corpus).unwrap();
        for q in &f.test {
            let top = idx.top_n(&tokenize(&q.text), 3, Bm25Params::default());
            assert!(top.iter().any(|(id, _)| q.relevant_ids.contains(id)));
        }
    }

    #[test]
    fn bracket_samples_are_valid() {
        let data = bracket_corpus(50, 2);
        assert_eq!(data.len(), 50);
        assert!(data
            .iter()
            .all(|s| s.validate().is_ok() && s.segments(0).len() == 1));
        assert_eq!(data, bracket_corpus(50, 2));
    }

    #[test]
    fn sdoi_targets_follow_token_relation() {
        let vocab: Vec<String> = (0..4).map(|i| format!("t{i}")).collect();
        let recs = sdoi_records(20, 6, &vocab, 3);
        let mut seen = std::collections::BTreeMap::new();
        for r in &recs {
            for i in 0..6 {
                for j in 0..6 {
                    let v = r.matrix.tensor().at(i, j);
                    let prev = seen.insert((r.tokens[i].clone(), r.tokens[j].clone()), v);
                    assert!(prev.is_none_or(|p| p == v));
                }
            }
        }
    }
}
