//! Trainable semantic rankers, negative-sampling training, lexical/semantic
//! score ensembling and the lawfulness classifier.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::LabeledStatement;
use crate::corpus::{Article, Query};
use crate::encoders::{
    CnnConfig, EmbeddingTable, GeneralAttention, OovPolicy, ParaformerLite, SentenceEncoderCnn,
    Vocab, WeightFn,
};
use crate::error::{Error, Result};
use crate::evalkit::{macro_f2, RetrievalJudgment};
use crate::lexical::{tokenize, Bm25Params, InvertedIndex, DEFAULT_N_TRAIN};
use crate::tensorcore::{Bound, ParamId, Params, Tape, Tensor, Var};

/// Checkpoint header.
pub const CHECKPOINT_MAGIC: &[u8; 5] = b"SLRK1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankerKind {
    AttentiveCnn,
    ParaformerLite,
}

impl RankerKind {
    pub fn byte(self) -> u8 {
        match self {
            RankerKind::AttentiveCnn => 0,
            RankerKind::ParaformerLite => 1,
        }
    }
}

/// Source of the CNN's sentence-level attention query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CnnQuery {
    #[default]
    Learned,
    /// The encoded query sentence; needs `attn_query == filters`.
    FromQuery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: RankerKind,
    pub cnn: CnnConfig,
    pub cnn_query: CnnQuery,
    pub layers: usize,
    pub heads: usize,
    pub max_len: usize,
    pub positions: bool,
    pub paragraph_weight: WeightFn,
    pub oov_policy: OovPolicy,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: RankerKind::AttentiveCnn,
            cnn: CnnConfig::desk(),
            cnn_query: CnnQuery::Learned,
            layers: 1,
            heads: 2,
            max_len: 128,
            positions: true,
            paragraph_weight: WeightFn::Sparsemax,
            oov_policy: OovPolicy::ZeroVector,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub negatives: usize,
    pub seed: u64,
    /// Draw negatives from the BM25 top `n_train` of each query; `None`
    /// draws from the whole corpus.
    pub n_train: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            epochs: 10,
            negatives: 3,
            seed: 0,
            n_train: Some(DEFAULT_N_TRAIN),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SentenceEncoder {
    Cnn(SentenceEncoderCnn),
    Paraformer(ParaformerLite),
}

impl SentenceEncoder {
    fn out_dim(&self) -> usize {
        match self {
            SentenceEncoder::Cnn(e) => e.out_dim(),
            SentenceEncoder::Paraformer(e) => e.out_dim(),
        }
    }
}

/// Structure of a ranker; tensors live in [`RankerModel::params`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankerSpec {
    pub config: ModelConfig,
    pub vocab: Vocab,
}

/// Query and article encoders plus the statement-level pooling attention.
#[derive(Debug, Clone)]
pub struct RankerModel {
    pub config: ModelConfig,
    pub params: Params<f64>,
    pub sentence: SentenceEncoder,
    pub paragraph: GeneralAttention,
}

/// Tokenized statements of an article, empty statements removed.
pub fn article_statements(article: &Article) -> Vec<Vec<String>> {
    article
        .segments()
        .into_iter()
        .map(tokenize)
        .filter(|t| !t.is_empty())
        .collect()
}

impl RankerModel {
    pub fn new(config: &ModelConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let dim = config.cnn.embedding;
        let mut table = EmbeddingTable::random(vocab, dim, 1.0 / (dim as f64).sqrt(), &mut rng)?;
        table.oov_policy = config.oov_policy;
        let sentence = match config.kind {
            RankerKind::AttentiveCnn => {
                if config.cnn_query == CnnQuery::FromQuery
                    && config.cnn.attn_query != config.cnn.filters
                {
                    return Err(Error::invalid(
                        "query-derived attention needs attn_query equal to the filter count",
                    ));
                }
                SentenceEncoder::Cnn(SentenceEncoderCnn::new(
                    &mut params,
                    "sent",
                    table,
                    &config.cnn,
                    &mut rng,
                )?)
            }
            RankerKind::ParaformerLite => SentenceEncoder::Paraformer(ParaformerLite::new(
                &mut params,
                "sent",
                table,
                config.layers,
                config.heads,
                config.max_len,
                config.positions,
                &mut rng,
            )?),
        };
        let d = sentence.out_dim();
        let paragraph =
            GeneralAttention::new(&mut params, "para", d, d, config.paragraph_weight, &mut rng);
        Ok(Self {
            config: config.clone(),
            params,
            sentence,
            paragraph,
        })
    }

    pub fn kind(&self) -> RankerKind {
        self.config.kind
    }

    pub fn vocab(&self) -> &Vocab {
        match &self.sentence {
            SentenceEncoder::Cnn(e) => &e.embedder.vocab,
            SentenceEncoder::Paraformer(e) => &e.embedder.vocab,
        }
    }

    pub fn spec(&self) -> RankerSpec {
        RankerSpec {
            config: self.config.clone(),
            vocab: self.vocab().clone(),
        }
    }

    fn encode_sentence(
        &self,
        tape: &mut Tape<f64>,
        p: &Bound,
        tokens: &[String],
        query: Option<Var>,
    ) -> Result<Var> {
        match &self.sentence {
            SentenceEncoder::Cnn(e) => {
                let q = match self.config.cnn_query {
                    CnnQuery::Learned => None,
                    CnnQuery::FromQuery => query,
                };
                e.encode(tape, p, tokens, q, None)
            }
            SentenceEncoder::Paraformer(e) => e.encode(tape, p, tokens),
        }
    }

    /// Query vector.
    pub fn encode_query(&self, tape: &mut Tape<f64>, p: &Bound, tokens: &[String]) -> Result<Var> {
        self.encode_sentence(tape, p, tokens, None)
    }

    /// Article vector and statement weights, given the query vector.
    pub fn encode_article(
        &self,
        tape: &mut Tape<f64>,
        p: &Bound,
        q: Var,
        statements: &[Vec<String>],
    ) -> Result<(Var, Var)> {
        if statements.is_empty() {
            return Err(Error::invalid("article has no tokenizable statements"));
        }
        let reps = statements
            .iter()
            .map(|s| self.encode_sentence(tape, p, s, Some(q)))
            .collect::<Result<Vec<_>>>()?;
        let reps = tape.stack(&reps)?;
        self.paragraph.pool(tape, p, q, reps)
    }

    /// `q . r_a` on the tape.
    pub fn score_var(
        &self,
        tape: &mut Tape<f64>,
        p: &Bound,
        q: Var,
        statements: &[Vec<String>],
    ) -> Result<Var> {
        let (r, _) = self.encode_article(tape, p, q, statements)?;
        tape.dot(q, r)
    }

    /// Statement attention weights for one query/article pair.
    pub fn statement_weights(&self, query: &str, article: &Article) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let q = self.encode_query(&mut tape, &p, &tokenize(query))?;
        let (_, w) = self.encode_article(&mut tape, &p, q, &article_statements(article))?;
        Ok(tape.value(w).data().to_vec())
    }

    /// Scores of several articles against one query.
    pub fn semantic_scores(&self, query: &str, articles: &[&Article]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let q = self.encode_query(&mut tape, &p, &tokenize(query))?;
        articles
            .iter()
            .map(|a| {
                let s = self.score_var(&mut tape, &p, q, &article_statements(a))?;
                Ok(tape.value(s).item())
            })
            .collect()
    }

    /// Serialized tensors behind the checkpoint header.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_checkpoint(&mut out).expect("in-memory write");
        out
    }

    pub fn write_checkpoint<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&[self.kind().byte()])?;
        self.params.write_to(w)
    }

    /// Rebuilds the structure from `spec` and fills it from a checkpoint.
    pub fn read_checkpoint<R: Read>(spec: &RankerSpec, r: &mut R) -> Result<Self> {
        let mut model = Self::new(&spec.config, spec.vocab.clone(), 0)?;
        read_header(r, model.kind().byte())?;
        model.params.read_into(r)?;
        Ok(model)
    }

    /// Writes `model.bin` and `model.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("model.bin"), self.to_bytes())?;
        fs::write(
            dir.join("model.json"),
            serde_json::to_string_pretty(&self.spec())?,
        )?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let spec: RankerSpec = serde_json::from_str(&fs::read_to_string(dir.join("model.json"))?)?;
        let bytes = fs::read(dir.join("model.bin"))?;
        Self::read_checkpoint(&spec, &mut bytes.as_slice())
    }
}

pub(crate) fn read_header<R: Read>(r: &mut R, kind: u8) -> Result<()> {
    let mut head = [0u8; 6];
    r.read_exact(&mut head)
        .map_err(|_| Error::Format("truncated checkpoint header".into()))?;
    if &head[..5] != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a ranker checkpoint".into()));
    }
    if head[5] != kind {
        return Err(Error::Format(format!(
            "checkpoint kind {} where {} was expected",
            head[5], kind
        )));
    }
    Ok(())
}

/// Inference-time semantic score `dot(encode(query), r_a)`.
pub fn semantic_score(model: &RankerModel, query: &str, article: &Article) -> Result<f64> {
    Ok(model.semantic_scores(query, &[article])?[0])
}

/// Vocabulary over the tokens of the given queries and articles.
pub fn build_vocab<'a>(
    queries: impl IntoIterator<Item = &'a Query>,
    articles: impl IntoIterator<Item = &'a Article>,
    min_count: usize,
) -> Vocab {
    let mut toks = Vec::new();
    for q in queries {
        toks.extend(tokenize(&q.text));
    }
    for a in articles {
        for s in a.segments() {
            toks.extend(tokenize(s));
        }
    }
    Vocab::build(toks.iter().map(String::as_str), min_count)
}

/// Result of [`train_ranker`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    /// Mean loss per epoch.
    pub epochs: Vec<f64>,
}

/// Negative-sampling training: for every (query, relevant article) step,
/// `K` non-relevant articles are drawn uniformly without replacement and
/// the softmax cross-entropy of the positive score is minimized by plain
/// gradient descent.
pub fn train_ranker(
    model: &mut RankerModel,
    corpus: &[Article],
    queries: &[Query],
    cfg: &TrainConfig,
) -> Result<LossTrace> {
    let k = cfg.negatives;
    if k >= corpus.len() {
        return Err(Error::invalid(format!(
            "{k} negatives need a corpus of more than {k} articles, got {}",
            corpus.len()
        )));
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::invalid(format!(
            "learning rate must be positive, got {}",
            cfg.lr
        )));
    }
    let pos_of: BTreeMap<&str, usize> = corpus
        .iter()
        .enumerate()
        .map(|(i, a)| (a.id.as_str(), i))
        .collect();
    let statements: Vec<Vec<Vec<String>>> = corpus.iter().map(article_statements).collect();
    let mut steps = Vec::new();
    for (qi, q) in queries.iter().enumerate() {
        if q.relevant_ids.is_empty() {
            return Err(Error::invalid(format!(
                "query {} has no relevant article",
                q.id
            )));
        }
        for r in &q.relevant_ids {
            let a = *pos_of
                .get(r.as_str())
                .ok_or_else(|| Error::UnknownDoc(r.clone()))?;
            steps.push((qi, a));
        }
    }
    let query_tokens: Vec<Vec<String>> = queries.iter().map(|q| tokenize(&q.text)).collect();
    let relevant: Vec<BTreeSet<usize>> = queries
        .iter()
        .map(|q| q.relevant_ids.iter().map(|r| pos_of[r.as_str()]).collect())
        .collect();
    let index = match cfg.n_train {
        Some(_) => Some(InvertedIndex::build(corpus)?),
        None => None,
    };
    let pools: Vec<Vec<usize>> = queries
        .iter()
        .enumerate()
        .map(|(qi, q)| {
            let mut pool: Vec<usize> = match (&index, cfg.n_train) {
                (Some(idx), Some(n)) => idx
                    .top_n(&query_tokens[qi], n, Bm25Params::default())
                    .iter()
                    .map(|(id, _)| pos_of[id.as_str()])
                    .filter(|i| !relevant[qi].contains(i))
                    .collect(),
                _ => (0..corpus.len())
                    .filter(|i| !relevant[qi].contains(i))
                    .collect(),
            };
            // corpus order, so the pool's contents alone determine the draws
            pool.sort_unstable();
            if pool.len() < k {
                return Err(Error::invalid(format!(
                    "query {} has fewer than {k} non-relevant candidate articles",
                    q.id
                )));
            }
            Ok(pool)
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        steps.shuffle(&mut rng);
        let mut total = 0.0;
        for &(qi, a) in &steps {
            let pool = &pools[qi];
            let negs: Vec<usize> = index::sample(&mut rng, pool.len(), k)
                .into_iter()
                .map(|i| pool[i])
                .collect();
            let mut tape = Tape::new();
            let p = model.params.bind(&mut tape);
            let q = model.encode_query(&mut tape, &p, &query_tokens[qi])?;
            let pos = model.score_var(&mut tape, &p, q, &statements[a])?;
            let neg_vars = negs
                .iter()
                .map(|&n| model.score_var(&mut tape, &p, q, &statements[n]))
                .collect::<Result<Vec<_>>>()?;
            let loss = tape.ce_negsample(pos, &neg_vars)?;
            total += tape.value(loss).item();
            if k > 0 {
                let grads = tape.backward(loss)?;
                model.params.sgd_step(&grads, &p, cfg.lr, None);
            }
        }
        if !model.params.all_finite() {
            return Err(Error::invalid("training diverged to non-finite parameters"));
        }
        trace.push(total / steps.len().max(1) as f64);
    }
    Ok(LossTrace { epochs: trace })
}

/// `alpha * s_l + (1 - alpha) * s_s`.
pub fn ensemble(s_l: f64, s_s: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    Ok(alpha * s_l + (1.0 - alpha) * s_s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    #[serde(rename = "id")]
    pub article_id: String,
    #[serde(rename = "s_l")]
    pub s_lexical: f64,
    #[serde(rename = "s_s")]
    pub s_semantic: f64,
    #[serde(rename = "s_f")]
    pub s_final: f64,
}

/// Per-query min-max scaling to `[0, 1]`. A constant list maps to 1 when
/// positive and 0 otherwise.
pub fn min_max(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        scores.iter().map(|s| (s - lo) / (hi - lo)).collect()
    } else {
        scores
            .iter()
            .map(|&s| if s > 0.0 { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Lexical candidates with normalized lexical and raw semantic scores,
/// before ensembling.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    pub ids: Vec<String>,
    pub s_lexical: Vec<f64>,
    pub s_semantic: Vec<f64>,
}

impl Candidates {
    /// Ensembled and sorted (descending, ties by ascending id).
    pub fn ranked(&self, alpha: f64) -> Result<Vec<ScoredCandidate>> {
        let mut out = self
            .ids
            .iter()
            .zip(self.s_lexical.iter().zip(&self.s_semantic))
            .map(|(id, (&l, &s))| {
                Ok(ScoredCandidate {
                    article_id: id.clone(),
                    s_lexical: l,
                    s_semantic: s,
                    s_final: ensemble(l, s, alpha)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.sort_by(|a, b| {
            b.s_final
                .total_cmp(&a.s_final)
                .then_with(|| a.article_id.cmp(&b.article_id))
        });
        Ok(out)
    }
}

/// Retrieval context shared by ranking calls.
pub struct Retriever<'a> {
    pub model: &'a RankerModel,
    pub index: &'a InvertedIndex,
    pub articles: BTreeMap<&'a str, &'a Article>,
    pub bm25: Bm25Params,
    pub n_predict: usize,
}

impl<'a> Retriever<'a> {
    pub fn new(
        model: &'a RankerModel,
        index: &'a InvertedIndex,
        corpus: &'a [Article],
        n_predict: usize,
    ) -> Self {
        Self {
            model,
            index,
            articles: corpus.iter().map(|a| (a.id.as_str(), a)).collect(),
            bm25: Bm25Params::default(),
            n_predict,
        }
    }

    pub fn candidates(&self, query: &str) -> Result<Candidates> {
        let top = self
            .index
            .top_n(&tokenize(query), self.n_predict, self.bm25);
        let ids: Vec<String> = top.iter().map(|(id, _)| id.clone()).collect();
        let raw: Vec<f64> = top.iter().map(|(_, s)| *s).collect();
        let arts = ids
            .iter()
            .map(|id| {
                self.articles
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::UnknownDoc(id.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let s_semantic = self.model.semantic_scores(query, &arts)?;
        Ok(Candidates {
            ids,
            s_lexical: min_max(&raw),
            s_semantic,
        })
    }

    pub fn rank(&self, query: &str, alpha: f64) -> Result<Vec<ScoredCandidate>> {
        self.candidates(query)?.ranked(alpha)
    }

    /// Candidate sets for many queries, in input order.
    pub fn candidates_all(&self, queries: &[Query]) -> Result<Vec<Candidates>> {
        queries
            .par_iter()
            .map(|q| self.candidates(&q.text))
            .collect()
    }
}

/// Top-ranked retrieval + ensembling: see [`Retriever::rank`].
pub fn rank(
    model: &RankerModel,
    index: &InvertedIndex,
    corpus: &[Article],
    query: &str,
    n_predict: usize,
    alpha: f64,
) -> Result<Vec<ScoredCandidate>> {
    Retriever::new(model, index, corpus, n_predict).rank(query, alpha)
}

/// Macro-F2@k of the ensembled rankings.
pub fn f2_at(cands: &[Candidates], queries: &[Query], alpha: f64, k: usize) -> Result<f64> {
    let judgments = cands
        .iter()
        .zip(queries)
        .map(|(c, q)| {
            Ok(RetrievalJudgment {
                qid: q.id.clone(),
                gold: q.relevant_ids.clone(),
                retrieved: c.ranked(alpha)?.into_iter().map(|s| s.article_id).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(macro_f2(&judgments, k)?.f2)
}

/// Macro-F2@k at every `alpha` in `{0, step, ..., 1}`; returns the best,
/// ties to the smallest alpha.
pub fn grid_search_alpha(
    cands: &[Candidates],
    val_queries: &[Query],
    step: f64,
    k: usize,
) -> Result<(f64, f64)> {
    if val_queries.is_empty() {
        return Err(Error::invalid("empty validation set"));
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::invalid(format!(
            "step must lie in (0, 1], got {step}"
        )));
    }
    let n = (1.0 / step - 1e-9).ceil() as usize;
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 0..=n {
        // rounded so a 0.01 grid yields 0.83 rather than 0.8300000000000001
        let alpha = ((i as f64 * step * 1e9).round() / 1e9).min(1.0);
        let f = f2_at(cands, val_queries, alpha, k)?;
        if f > best.1 {
            best = (alpha, f);
        }
    }
    Ok(best)
}

/// Binary lawfulness classifier: attentive CNN plus a linear head.
#[derive(Debug, Clone)]
pub struct LawfulnessClassifier {
    pub params: Params<f64>,
    pub encoder: SentenceEncoderCnn,
    pub head_w: ParamId,
    pub head_b: ParamId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub cnn: CnnConfig,
    pub vocab: Vocab,
}

/// Kind byte of classifier checkpoints.
pub const CLASSIFIER_KIND: u8 = 2;

impl LawfulnessClassifier {
    pub fn new(cnn: &CnnConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let table = EmbeddingTable::random(
            vocab,
            cnn.embedding,
            1.0 / (cnn.embedding as f64).sqrt(),
            &mut rng,
        )?;
        let encoder = SentenceEncoderCnn::new(&mut params, "sent", table, cnn, &mut rng)?;
        let head_w = params.add("head.w", Tensor::zeros(&[cnn.filters]));
        let head_b = params.add("head.b", Tensor::scalar(0.0));
        Ok(Self {
            params,
            encoder,
            head_w,
            head_b,
        })
    }

    fn logit_var(
        &self,
        tape: &mut Tape<f64>,
        p: &Bound,
        tokens: &[String],
        rng: Option<&mut dyn rand::RngCore>,
    ) -> Result<Var> {
        let v = self.encoder.encode(tape, p, tokens, None, rng)?;
        let z = tape.dot(v, p.var(self.head_w))?;
        tape.add(z, p.var(self.head_b))
    }

    /// `sigmoid(logit)`.
    pub fn probability(&self, text: &str) -> Result<f64> {
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let z = self.logit_var(&mut tape, &p, &tokenize(text), None)?;
        let z = tape.value(z).item();
        Ok(1.0 / (1.0 + (-z).exp()))
    }

    pub fn classify(&self, text: &str) -> Result<bool> {
        Ok(self.probability(text)? > 0.5)
    }

    pub fn spec(&self) -> ClassifierSpec {
        ClassifierSpec {
            cnn: CnnConfig {
                embedding: self.encoder.embedder.dim,
                filters: self.encoder.n_filters,
                width: self.encoder.width,
                attn_query: self.encoder.attn.d_q,
                dropout: self.encoder.dropout,
            },
            vocab: self.encoder.embedder.vocab.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = CHECKPOINT_MAGIC.to_vec();
        out.push(CLASSIFIER_KIND);
        self.params.write_to(&mut out).expect("in-memory write");
        out
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("model.bin"), self.to_bytes())?;
        fs::write(
            dir.join("model.json"),
            serde_json::to_string_pretty(&self.spec())?,
        )?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let spec: ClassifierSpec =
            serde_json::from_str(&fs::read_to_string(dir.join("model.json"))?)?;
        let mut model = Self::new(&spec.cnn, spec.vocab, 0)?;
        let bytes = fs::read(dir.join("model.bin"))?;
        let mut r = bytes.as_slice();
        read_header(&mut r, CLASSIFIER_KIND)?;
        model.params.read_into(&mut r)?;
        Ok(model)
    }
}

/// Trains a fresh classifier with binary cross-entropy, one example per
/// step in a seeded order.
pub fn train_lawfulness(
    dataset: &[LabeledStatement],
    cnn: &CnnConfig,
    cfg: &TrainConfig,
) -> Result<(LawfulnessClassifier, LossTrace)> {
    let pos = dataset.iter().filter(|r| r.lawful).count();
    if pos == 0 || pos == dataset.len() {
        return Err(Error::invalid("lawfulness training needs both classes"));
    }
    let tokens: Vec<Vec<String>> = dataset.iter().map(|r| tokenize(&r.text)).collect();
    let vocab = Vocab::build(tokens.iter().flatten().map(String::as_str), 1);
    let mut model = LawfulnessClassifier::new(cnn, vocab, cfg.seed)?;
    let mut order: Vec<usize> = (0..dataset.len())
        .filter(|&i| !tokens[i].is_empty())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let mut tape = Tape::new();
            let p = model.params.bind(&mut tape);
            let z = model.logit_var(&mut tape, &p, &tokens[i], Some(&mut rng))?;
            let loss = tape.bce_logit(z, dataset[i].lawful)?;
            total += tape.value(loss).item();
            let grads = tape.backward(loss)?;
            model.params.sgd_step(&grads, &p, cfg.lr, None);
        }
        if !model.params.all_finite() {
            return Err(Error::invalid("training diverged to non-finite parameters"));
        }
        trace.push(total / order.len().max(1) as f64);
    }
    Ok((model, LossTrace { epochs: trace }))
}
